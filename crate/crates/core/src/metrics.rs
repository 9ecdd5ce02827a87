//! Segmentation and reconstruction scores.

use std::fmt;
use std::str::FromStr;

use crate::augment::PairedSample;
use crate::error::{Error, Result};
use crate::image::Mask;
use crate::nn::{stack, NoiseSource, UNetGenerator};
use crate::parallel;

/// Denominator of the XOR error percentage.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash)]
pub enum XorDenominator {
    /// Ground-truth foreground pixel count.
    #[default]
    GtForeground,
    TotalPixels,
}

impl fmt::Display for XorDenominator {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            XorDenominator::GtForeground => "gt_foreground",
            XorDenominator::TotalPixels => "total_pixels",
        })
    }
}

impl FromStr for XorDenominator {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "gt_foreground" => Ok(XorDenominator::GtForeground),
            "total_pixels" => Ok(XorDenominator::TotalPixels),
            _ => Err(Error::Config(format!("unknown XOR denominator {s:?}"))),
        }
    }
}

fn same_size(pred: &Mask, gt: &Mask) -> Result<()> {
    if pred.same_size(gt) {
        Ok(())
    } else {
        Err(Error::Shape { op: "mask comparison", lhs: vec![pred.height(), pred.width()], rhs: vec![gt.height(), gt.width()] })
    }
}

/// `100 · |pred ⊕ gt| / denominator`.
pub fn xor_error(pred: &Mask, gt: &Mask, denom: XorDenominator) -> Result<f64> {
    same_size(pred, gt)?;
    let diff = pred.bits().iter().zip(gt.bits()).filter(|(a, b)| a != b).count();
    let d = match denom {
        XorDenominator::GtForeground => gt.count(),
        XorDenominator::TotalPixels => gt.bits().len(),
    };
    if d == 0 {
        return Err(Error::invalid("XOR error against an empty ground-truth foreground"));
    }
    Ok(100.0 * diff as f64 / d as f64)
}

/// Percentage of pixels on which the masks agree.
pub fn accuracy(pred: &Mask, gt: &Mask) -> Result<f64> {
    same_size(pred, gt)?;
    let same = pred.bits().iter().zip(gt.bits()).filter(|(a, b)| a == b).count();
    Ok(100.0 * same as f64 / gt.bits().len() as f64)
}

/// Mean absolute difference between eval-mode generator output and target,
/// in `[−1, 1]` units, over all pixels of all samples.
pub fn l1_validation(gen: &UNetGenerator<f32>, validation: &[PairedSample]) -> Result<f64> {
    if validation.is_empty() {
        return Err(Error::invalid("validation set is empty"));
    }
    let spec = gen.spec();
    let per_sample = parallel::map(validation, |s| -> Result<(f64, usize)> {
        let (x, y) = stack::<f32>(&[s], spec)?;
        let x = NoiseSource::new(0, spec.noise).condition(x)?;
        let out = gen.generate(&x)?;
        let sum = out.data().iter().zip(y.data()).map(|(&a, &b)| (a as f64 - b as f64).abs()).sum();
        Ok((sum, y.numel()))
    });
    let (mut total, mut count) = (0.0, 0usize);
    for r in per_sample {
        let (s, n) = r?;
        total += s;
        count += n;
    }
    Ok(total / count as f64)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum MetricKind {
    XorError(XorDenominator),
    Accuracy,
}

impl fmt::Display for MetricKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            MetricKind::XorError(d) => write!(f, "xor_error[{d}]"),
            MetricKind::Accuracy => f.write_str("accuracy"),
        }
    }
}

/// Per-image metric values and their mean.
#[derive(Clone, Debug, PartialEq)]
pub struct EvalReport {
    pub metric: MetricKind,
    pub values: Vec<(String, f64)>,
}

impl EvalReport {
    pub fn evaluate(metric: MetricKind, items: &[(String, Mask, Mask)]) -> Result<Self> {
        let values = items
            .iter()
            .map(|(id, pred, gt)| {
                let v = match metric {
                    MetricKind::XorError(d) => xor_error(pred, gt, d)?,
                    MetricKind::Accuracy => accuracy(pred, gt)?,
                };
                Ok((id.clone(), v))
            })
            .collect::<Result<_>>()?;
        Ok(EvalReport { metric, values })
    }

    pub fn mean(&self) -> f64 {
        if self.values.is_empty() {
            return f64::NAN;
        }
        self.values.iter().map(|(_, v)| v).sum::<f64>() / self.values.len() as f64
    }

    /// `image_id,metric,value` rows plus a final `mean` row.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("image_id,metric,value\n");
        for (id, v) in &self.values {
            out.push_str(&format!("{id},{},{v}\n", self.metric));
        }
        out.push_str(&format!("mean,{},{}\n", self.metric, self.mean()));
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::image::ImageBuffer;

    #[test]
    fn xor_examples() {
        let gt = Mask::from_fn(4, 4, |x, y| x < 2 && y < 2);
        assert_eq!(xor_error(&gt, &gt, XorDenominator::GtForeground).unwrap(), 0.0);
        let mut miss = gt.clone();
        miss.set(0, 0, false);
        assert_eq!(xor_error(&miss, &gt, XorDenominator::GtForeground).unwrap(), 25.0);
        assert_eq!(xor_error(&miss, &gt, XorDenominator::TotalPixels).unwrap(), 100.0 / 16.0);
        assert_eq!(xor_error(&Mask::empty(4, 4), &gt, XorDenominator::GtForeground).unwrap(), 100.0);
        assert!(xor_error(&gt, &Mask::empty(4, 4), XorDenominator::GtForeground).is_err());
        assert!(xor_error(&gt, &Mask::empty(3, 4), XorDenominator::TotalPixels).is_err());
    }

    #[test]
    fn accuracy_examples() {
        let gt = Mask::from_fn(4, 4, |x, _| x < 2);
        assert_eq!(accuracy(&gt, &gt).unwrap(), 100.0);
        assert_eq!(accuracy(&gt.complement(), &gt).unwrap(), 0.0);
        let mut p = gt.clone();
        p.set(0, 0, false);
        p.set(3, 3, true);
        assert_eq!(accuracy(&p, &gt).unwrap(), 87.5);
    }

    #[test]
    fn report_csv() {
        let gt = Mask::from_fn(2, 2, |x, _| x == 0);
        let r = EvalReport::evaluate(
            MetricKind::XorError(XorDenominator::GtForeground),
            &[("a".into(), gt.clone(), gt.clone()), ("b".into(), Mask::empty(2, 2), gt)],
        )
        .unwrap();
        assert_eq!(r.mean(), 50.0);
        assert_eq!(
            r.to_csv(),
            "image_id,metric,value\na,xor_error[gt_foreground],0\nb,xor_error[gt_foreground],100\nmean,xor_error[gt_foreground],50\n"
        );
    }

    #[test]
    fn l1_of_constant_zero_output() {
        use crate::nn::{Module, NetSpec};
        // zero final-layer weights and bias give tanh(0) = 0 everywhere
        let spec = NetSpec { disc_depth: 2, ..NetSpec::square(2, 8, 2) };
        let mut gen = UNetGenerator::<f32>::new(&spec, 0).unwrap();
        let last = gen.layers_mut().pop().unwrap();
        last.weight.data_mut().iter_mut().for_each(|v| *v = 0.0);
        let y = ImageBuffer::from_fn(8, 8, |x, _| if x % 2 == 0 { 0 } else { 255 });
        let s = PairedSample::new(ImageBuffer::filled(8, 8, 1, 9), y, "s").unwrap();
        assert!((l1_validation(&gen, &[s]).unwrap() - 1.0).abs() < 1e-9);
    }
}
