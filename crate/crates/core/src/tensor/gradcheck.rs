use super::{Graph, Tensor, Var};
use crate::error::{Error, Result};

/// Default central-difference step.
pub const DEFAULT_STEP: f64 = 1e-5;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct GradCheck {
    /// Largest per-coordinate relative error among checked coordinates.
    pub max_rel_error: f64,
    pub checked: usize,
    /// Coordinates whose perturbation crossed an activation kink or clamp.
    pub skipped: usize,
}

/// Compares the backward-pass gradient of a scalar function against central
/// differences `(f(x+h) − f(x−h)) / 2h`, in double precision.
///
/// Per-coordinate error is `|a − n| / max(|a|, |n|, 1e-3·‖a‖∞, 1e-8)`.
/// A coordinate is skipped when either perturbed evaluation lands on a
/// different side of any ReLU kink, BCE clamp or L1 sign change than the
/// unperturbed point.
pub fn finite_difference_check<F>(mut f: F, point: &Tensor<f64>, h: f64) -> Result<GradCheck>
where
    F: FnMut(&mut Graph<f64>, Var) -> Result<Var>,
{
    if !(h > 0.0) {
        return Err(Error::invalid(format!("finite-difference step must be positive, got {h}")));
    }
    let mut g = Graph::new();
    let x = g.param(point);
    let y = f(&mut g, x)?;
    g.scalar(y)?;
    let signature = g.kink_signature();
    g.backward(y)?;
    let analytic = g.grad(x).expect("backward ran").to_vec();

    let mut eval = |data: Vec<f64>| -> Result<(f64, Vec<bool>)> {
        let t = Tensor::new(point.shape(), data)?;
        let mut g = Graph::new();
        let x = g.leaf(&t);
        let y = f(&mut g, x)?;
        Ok((g.scalar(y)?, g.kink_signature()))
    };

    let scale = analytic.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let mut out = GradCheck { max_rel_error: 0.0, checked: 0, skipped: 0 };
    for i in 0..point.numel() {
        let mut plus = point.data().to_vec();
        plus[i] += h;
        let mut minus = point.data().to_vec();
        minus[i] -= h;
        let (fp, sp) = eval(plus)?;
        let (fm, sm) = eval(minus)?;
        if sp != signature || sm != signature {
            out.skipped += 1;
            continue;
        }
        let numeric = (fp - fm) / (2.0 * h);
        let a = analytic[i];
        let denom = a.abs().max(numeric.abs()).max(1e-3 * scale).max(1e-8);
        out.max_rel_error = out.max_rel_error.max((a - numeric).abs() / denom);
        out.checked += 1;
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn linear_function_exact() {
        let p = Tensor::new(&[4], vec![0.3, -1.0, 2.0, 5.0]).unwrap();
        let r = finite_difference_check(|g, x| Ok(g.sum(x)), &p, DEFAULT_STEP).unwrap();
        assert!(r.max_rel_error < 1e-9, "{r:?}");
        assert_eq!(r.checked, 4);
    }

    #[test]
    fn quadratic_function() {
        let p = Tensor::new(&[3], vec![0.5, -2.0, 3.0]).unwrap();
        let r = finite_difference_check(
            |g, x| {
                let sq = g.mul(x, x)?;
                Ok(g.sum(sq))
            },
            &p,
            1e-4,
        )
        .unwrap();
        assert!(r.max_rel_error < 1e-6, "{r:?}");
    }

    #[test]
    fn non_scalar_rejected() {
        let p = Tensor::new(&[2], vec![1.0, 2.0]).unwrap();
        assert!(matches!(finite_difference_check(|_, x| Ok(x), &p, 1e-5), Err(Error::NonScalar(_))));
    }
}
