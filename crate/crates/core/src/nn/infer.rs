use std::fs;
use std::path::{Path, PathBuf};

use super::generator::UNetGenerator;
use super::noise::NoiseSource;
use crate::error::{Error, Result};
use crate::image::{ImageBuffer, Mask};
use crate::parallel;
use crate::pnm;
use crate::tensor::{Graph, Tensor};

fn prepare(gen: &UNetGenerator<f32>, input: &ImageBuffer, noise: &mut NoiseSource) -> Result<Tensor<f32>> {
    let spec = gen.spec();
    let img = match (input.channels(), spec.in_channels) {
        (a, b) if a == b => input.clone(),
        (3, 1) => input.to_gray(),
        (a, b) => {
            return Err(Error::invalid(format!("generator expects {b}-channel input, got {a}")));
        }
    };
    let img = img.resize(spec.input_size, spec.input_size);
    if img.width() != spec.input_size || img.height() != spec.input_size {
        return Err(Error::invalid("input resolution does not match the generator after resize"));
    }
    noise.condition(img.to_tensor())
}

/// Runs the generator in eval mode and maps its output back to 8 bits at
/// the input's original resolution.
pub fn infer(gen: &UNetGenerator<f32>, input: &ImageBuffer, noise: &mut NoiseSource) -> Result<ImageBuffer> {
    let x = prepare(gen, input, noise)?;
    let out = gen.generate(&x)?;
    let s = gen.spec().input_size;
    let img = ImageBuffer::from_planar(s, s, gen.spec().out_channels, out.data())?;
    Ok(img.resize(input.width(), input.height()))
}

/// [`infer`] followed by binarisation at half range.
pub fn segment(gen: &UNetGenerator<f32>, input: &ImageBuffer) -> Result<Mask> {
    let out = infer(gen, input, &mut NoiseSource::new(0, gen.spec().noise))?;
    Ok(Mask::from_image(&out, 127))
}

/// Segments every image; inputs are processed in parallel, results keep
/// input order. Noise (if any) for image `i` is seeded with `i`.
pub fn segment_batch(gen: &UNetGenerator<f32>, inputs: &[ImageBuffer]) -> Result<Vec<Mask>> {
    let idx: Vec<usize> = (0..inputs.len()).collect();
    parallel::map(&idx, |&i| {
        let out = infer(gen, &inputs[i], &mut NoiseSource::new(i as u64, gen.spec().noise))?;
        Ok(Mask::from_image(&out, 127))
    })
    .into_iter()
    .collect()
}

/// Writes every encoder and decoder activation as a grid of per-channel
/// gray tiles, min-max normalised per layer. Returns the written paths.
pub fn dump_latent_activations(gen: &UNetGenerator<f32>, input: &ImageBuffer, out_dir: impl AsRef<Path>) -> Result<Vec<PathBuf>> {
    let out_dir = out_dir.as_ref();
    fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir, e))?;
    let x = prepare(gen, input, &mut NoiseSource::new(0, gen.spec().noise))?;
    let mut g = Graph::new();
    let xv = g.leaf(&x);
    let pass = gen.forward_eval(&mut g, xv, false)?;
    let layers = pass
        .encoder
        .iter()
        .enumerate()
        .map(|(i, &v)| (format!("enc{}", i + 1), v))
        .chain(pass.decoder.iter().enumerate().map(|(j, &v)| (format!("dec{}", j + 1), v)));
    let mut written = Vec::new();
    for (k, (name, v)) in layers.enumerate() {
        let path = out_dir.join(format!("{:02}_{name}.pgm", k + 1));
        pnm::write(&path, &activation_grid(g.shape(v), g.value(v)))?;
        written.push(path);
    }
    Ok(written)
}

/// Tiles the channels of the first batch item into a near-square grid
/// separated by one-pixel black gutters.
pub fn activation_grid(shape: &[usize], values: &[f32]) -> ImageBuffer {
    let (c, h, w) = (shape[1], shape[2], shape[3]);
    let plane = &values[..c * h * w];
    let cols = (c as f64).sqrt().ceil() as usize;
    let rows = c.div_ceil(cols);
    let (lo, hi) = plane.iter().fold((f32::INFINITY, f32::NEG_INFINITY), |(lo, hi), &v| (lo.min(v), hi.max(v)));
    let span = hi - lo;
    let gw = cols * (w + 1) - 1;
    let gh = rows * (h + 1) - 1;
    let mut img = ImageBuffer::filled(gw, gh, 1, 0);
    for ch in 0..c {
        let (ox, oy) = ((ch % cols) * (w + 1), (ch / cols) * (h + 1));
        for y in 0..h {
            for x in 0..w {
                let v = plane[ch * h * w + y * w + x];
                let n = if span > 0.0 { (v - lo) / span } else { 0.0 };
                img.set(ox + x, oy + y, 0, (n * 255.0).round() as u8);
            }
        }
    }
    img
}
