//! Direct 2-D convolution kernels. Transposed convolution reuses the same
//! three routines with input and output roles swapped.

use super::Scalar;
use crate::error::{Error, Result};
use crate::parallel::for_each_chunk;

/// Geometry of a strided, zero-padded convolution mapping an
/// `in_ch × in_h × in_w` map to `out_ch × out_h × out_w` through a
/// `out_ch × in_ch × kh × kw` kernel.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct ConvGeometry {
    pub batch: usize,
    pub in_ch: usize,
    pub in_h: usize,
    pub in_w: usize,
    pub out_ch: usize,
    pub out_h: usize,
    pub out_w: usize,
    pub kh: usize,
    pub kw: usize,
    pub stride: usize,
    pub padding: usize,
}

impl ConvGeometry {
    /// Geometry for `conv2d(input, kernel)`.
    pub fn forward(input: &[usize], kernel: &[usize], stride: usize, padding: usize) -> Result<Self> {
        let mismatch = || Error::Shape { op: "conv2d", lhs: input.to_vec(), rhs: kernel.to_vec() };
        if input.len() != 4 || kernel.len() != 4 || stride == 0 {
            return Err(mismatch());
        }
        let (n, c, h, w) = (input[0], input[1], input[2], input[3]);
        let (o, kc, kh, kw) = (kernel[0], kernel[1], kernel[2], kernel[3]);
        if kc != c || kh > h + 2 * padding || kw > w + 2 * padding {
            return Err(mismatch());
        }
        Ok(ConvGeometry {
            batch: n,
            in_ch: c,
            in_h: h,
            in_w: w,
            out_ch: o,
            out_h: (h + 2 * padding - kh) / stride + 1,
            out_w: (w + 2 * padding - kw) / stride + 1,
            kh,
            kw,
            stride,
            padding,
        })
    }

    /// Geometry of the convolution whose adjoint is `deconv2d(input, kernel)`.
    /// The kernel is laid out `in_ch × out_ch × kh × kw` from the deconv's
    /// point of view, which is `out_ch × in_ch` for the underlying conv.
    pub fn transposed(input: &[usize], kernel: &[usize], stride: usize, padding: usize) -> Result<Self> {
        let mismatch = || Error::Shape { op: "deconv2d", lhs: input.to_vec(), rhs: kernel.to_vec() };
        if input.len() != 4 || kernel.len() != 4 || stride == 0 {
            return Err(mismatch());
        }
        let (n, c, h, w) = (input[0], input[1], input[2], input[3]);
        let (kc, o, kh, kw) = (kernel[0], kernel[1], kernel[2], kernel[3]);
        let big_h = ((h - 1) * stride + kh).checked_sub(2 * padding);
        let big_w = ((w - 1) * stride + kw).checked_sub(2 * padding);
        match (big_h, big_w) {
            (Some(bh), Some(bw)) if kc == c && bh > 0 && bw > 0 => {
                Ok(ConvGeometry { batch: n, in_ch: o, in_h: bh, in_w: bw, out_ch: c, out_h: h, out_w: w, kh, kw, stride, padding })
            }
            _ => Err(mismatch()),
        }
    }

    pub fn input_shape(&self) -> [usize; 4] {
        [self.batch, self.in_ch, self.in_h, self.in_w]
    }

    pub fn output_shape(&self) -> [usize; 4] {
        [self.batch, self.out_ch, self.out_h, self.out_w]
    }

    /// Input coordinate hit by output index `o` and kernel tap `k`.
    #[inline]
    fn src(&self, o: usize, k: usize, limit: usize) -> Option<usize> {
        let pos = (o * self.stride + k).checked_sub(self.padding)?;
        (pos < limit).then_some(pos)
    }
}

/// `out[n,o] = Σ_c input[n,c] ⋆ kernel[o,c]`.
pub(crate) fn forward<T: Scalar>(g: &ConvGeometry, input: &[T], kernel: &[T], out: &mut [T]) {
    let in_plane = g.in_h * g.in_w;
    let out_plane = g.out_h * g.out_w;
    let k_plane = g.kh * g.kw;
    for_each_chunk(out, out_plane, |idx, plane| {
        let (n, o) = (idx / g.out_ch, idx % g.out_ch);
        for c in 0..g.in_ch {
            let src = &input[(n * g.in_ch + c) * in_plane..][..in_plane];
            let ker = &kernel[(o * g.in_ch + c) * k_plane..][..k_plane];
            for ky in 0..g.kh {
                for kx in 0..g.kw {
                    let w = ker[ky * g.kw + kx];
                    for oy in 0..g.out_h {
                        let Some(iy) = g.src(oy, ky, g.in_h) else { continue };
                        let row = &src[iy * g.in_w..][..g.in_w];
                        let dst = &mut plane[oy * g.out_w..][..g.out_w];
                        for (ox, d) in dst.iter_mut().enumerate() {
                            if let Some(ix) = g.src(ox, kx, g.in_w) {
                                *d += w * row[ix];
                            }
                        }
                    }
                }
            }
        }
    });
}

/// Accumulates `grad_in += convᵀ(grad_out)`; scatter form of the adjoint.
pub(crate) fn backward_input<T: Scalar>(g: &ConvGeometry, grad_out: &[T], kernel: &[T], grad_in: &mut [T]) {
    let in_plane = g.in_h * g.in_w;
    let out_plane = g.out_h * g.out_w;
    let k_plane = g.kh * g.kw;
    for_each_chunk(grad_in, in_plane, |idx, plane| {
        let (n, c) = (idx / g.in_ch, idx % g.in_ch);
        for o in 0..g.out_ch {
            let go = &grad_out[(n * g.out_ch + o) * out_plane..][..out_plane];
            let ker = &kernel[(o * g.in_ch + c) * k_plane..][..k_plane];
            for ky in 0..g.kh {
                for kx in 0..g.kw {
                    let w = ker[ky * g.kw + kx];
                    for oy in 0..g.out_h {
                        let Some(iy) = g.src(oy, ky, g.in_h) else { continue };
                        let row = &mut plane[iy * g.in_w..][..g.in_w];
                        let gsrc = &go[oy * g.out_w..][..g.out_w];
                        for (ox, &gv) in gsrc.iter().enumerate() {
                            if let Some(ix) = g.src(ox, kx, g.in_w) {
                                row[ix] += w * gv;
                            }
                        }
                    }
                }
            }
        }
    });
}

/// Accumulates `grad_kernel[o,c] += Σ_n input[n,c] ⋆ grad_out[n,o]`.
pub(crate) fn backward_kernel<T: Scalar>(g: &ConvGeometry, input: &[T], grad_out: &[T], grad_kernel: &mut [T]) {
    let in_plane = g.in_h * g.in_w;
    let out_plane = g.out_h * g.out_w;
    let k_plane = g.kh * g.kw;
    for_each_chunk(grad_kernel, g.in_ch * k_plane, |o, block| {
        for n in 0..g.batch {
            let go = &grad_out[(n * g.out_ch + o) * out_plane..][..out_plane];
            for c in 0..g.in_ch {
                let src = &input[(n * g.in_ch + c) * in_plane..][..in_plane];
                let ker = &mut block[c * k_plane..][..k_plane];
                for ky in 0..g.kh {
                    for kx in 0..g.kw {
                        let mut acc = T::zero();
                        for oy in 0..g.out_h {
                            let Some(iy) = g.src(oy, ky, g.in_h) else { continue };
                            let row = &src[iy * g.in_w..][..g.in_w];
                            let gsrc = &go[oy * g.out_w..][..g.out_w];
                            for (ox, &gv) in gsrc.iter().enumerate() {
                                if let Some(ix) = g.src(ox, kx, g.in_w) {
                                    acc += gv * row[ix];
                                }
                            }
                        }
                        ker[ky * g.kw + kx] += acc;
                    }
                }
            }
        }
    });
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn output_sizes() {
        let g = ConvGeometry::forward(&[1, 3, 32, 32], &[8, 3, 4, 4], 2, 1).unwrap();
        assert_eq!(g.output_shape(), [1, 8, 16, 16]);
        let t = ConvGeometry::transposed(&[1, 8, 16, 16], &[8, 3, 4, 4], 2, 1).unwrap();
        assert_eq!(t.input_shape(), [1, 3, 32, 32]);
        assert_eq!(t.output_shape(), [1, 8, 16, 16]);
    }

    #[test]
    fn rejects_bad_shapes() {
        let err = ConvGeometry::forward(&[1, 2, 4, 4], &[1, 3, 2, 2], 1, 0).unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("[1, 2, 4, 4]") && msg.contains("[1, 3, 2, 2]"), "{msg}");
        assert!(ConvGeometry::forward(&[1, 1, 2, 2], &[1, 1, 5, 5], 1, 1).is_err());
        assert!(ConvGeometry::transposed(&[1, 2, 4, 4], &[3, 1, 2, 2], 1, 0).is_err());
    }
}
