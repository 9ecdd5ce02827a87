//! Staged retraining from best-validation checkpoints, and a from-scratch
//! comparison arm.

use std::hash::{DefaultHasher, Hash, Hasher};
use std::path::PathBuf;
use std::time::Instant;

use crate::augment::PairedSample;
use crate::config::KeyValues;
use crate::error::{Error, Result};
use crate::image::Mask;
use crate::metrics::{xor_error, XorDenominator};
use crate::nn::{segment, train_with_validation, Checkpoint, NetSpec, TrainConfig, TrainOutcome, TrainState, UNetGenerator};
use crate::parallel;

/// Fraction of the final training size held out for validation.
pub const VALIDATION_FRACTION: f64 = 0.2;

/// Cumulative training-set sizes and per-stage epoch budgets.
#[derive(Clone, Debug, PartialEq)]
pub struct StagePlan {
    pub sizes: Vec<usize>,
    pub epochs: Vec<usize>,
    pub seed: u64,
    pub manifest: Option<PathBuf>,
    /// Epoch budget of the from-scratch arm, if one is to be run.
    pub scratch_epochs: Option<usize>,
}

impl StagePlan {
    pub fn new(sizes: Vec<usize>, epochs: Vec<usize>, seed: u64) -> Result<Self> {
        let plan = StagePlan { sizes, epochs, seed, manifest: None, scratch_epochs: None };
        plan.validate()?;
        Ok(plan)
    }

    pub fn validate(&self) -> Result<()> {
        if self.sizes.is_empty() {
            return Err(Error::Config("stage plan has no stages".into()));
        }
        if self.sizes[0] == 0 || self.sizes.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::Config(format!("stage sizes must be positive and strictly increasing, got {:?}", self.sizes)));
        }
        if self.epochs.len() != self.sizes.len() {
            return Err(Error::Config(format!("{} epoch budgets for {} stages", self.epochs.len(), self.sizes.len())));
        }
        Ok(())
    }

    pub fn final_size(&self) -> usize {
        *self.sizes.last().expect("validated plan")
    }

    pub fn total_epochs(&self) -> usize {
        self.epochs.iter().sum()
    }

    /// Keys `sizes`, `epochs` (one value or one per stage), `seed`,
    /// `manifest` and `scratch_epochs`.
    pub fn parse(text: &str) -> Result<Self> {
        let mut kv = KeyValues::parse(text)?;
        let list = |v: String, key: &str| -> Result<Vec<usize>> {
            v.split(',').map(|s| s.trim().parse().map_err(|_| Error::Config(format!("invalid value {v:?} for {key}")))).collect()
        };
        let sizes = list(kv.take_raw("sizes").ok_or_else(|| Error::Config("stage plan needs sizes".into()))?, "sizes")?;
        let mut epochs = list(kv.take_raw("epochs").ok_or_else(|| Error::Config("stage plan needs epochs".into()))?, "epochs")?;
        if epochs.len() == 1 {
            epochs = vec![epochs[0]; sizes.len()];
        }
        let plan = StagePlan {
            sizes,
            epochs,
            seed: kv.take("seed")?.unwrap_or(0),
            manifest: kv.take_raw("manifest").map(PathBuf::from),
            scratch_epochs: kv.take("scratch_epochs")?,
        };
        kv.finish()?;
        plan.validate()?;
        Ok(plan)
    }

    pub fn to_text(&self) -> String {
        let join = |v: &[usize]| v.iter().map(usize::to_string).collect::<Vec<_>>().join(",");
        let mut out = format!("sizes={}\nepochs={}\nseed={}\n", join(&self.sizes), join(&self.epochs), self.seed);
        if let Some(m) = &self.manifest {
            out.push_str(&format!("manifest={}\n", m.display()));
        }
        if let Some(e) = self.scratch_epochs {
            out.push_str(&format!("scratch_epochs={e}\n"));
        }
        out
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct StageReport {
    pub stage: usize,
    pub train_size: usize,
    pub wall_time_s: f64,
    pub epochs_run: usize,
    /// Cumulative epoch of the selected checkpoint.
    pub best_epoch: usize,
    pub initial_val_l1: f64,
    pub best_val_l1: f64,
    /// Mean XOR error of the best checkpoint over the test set.
    pub test_xor: f64,
    pub test_fingerprint: u64,
}

pub const STAGE_HEADER: &str = "stage,train_size,epochs_run,best_epoch,initial_val_l1,best_val_l1,test_xor";

/// Deterministic stage table; wall times are reported by [`timing_csv`].
pub fn stages_csv(reports: &[StageReport]) -> String {
    let mut out = format!("{STAGE_HEADER}\n");
    for r in reports {
        out.push_str(&format!(
            "{},{},{},{},{},{},{}\n",
            r.stage, r.train_size, r.epochs_run, r.best_epoch, r.initial_val_l1, r.best_val_l1, r.test_xor
        ));
    }
    out
}

pub fn timing_csv(arm: &str, reports: &[StageReport]) -> String {
    let mut out = String::from("arm,stage,wall_time_s\n");
    for r in reports {
        out.push_str(&format!("{arm},{},{:.3}\n", r.stage, r.wall_time_s));
    }
    out
}

/// Outcome of a protocol arm: per-stage reports, training logs and the
/// finally selected checkpoint.
#[derive(Clone, Debug)]
pub struct ProtocolRun {
    pub reports: Vec<StageReport>,
    pub outcomes: Vec<TrainOutcome>,
    pub best: Checkpoint,
}

/// Order-sensitive hash of sample ids and pixels.
pub fn fingerprint(samples: &[PairedSample]) -> u64 {
    let mut h = DefaultHasher::new();
    for s in samples {
        s.id.hash(&mut h);
        s.x.data().hash(&mut h);
        s.y.data().hash(&mut h);
    }
    h.finish()
}

/// Mean XOR error of `gen` over `test`; targets are binarised at 127.
pub fn test_xor(gen: &UNetGenerator<f32>, test: &[PairedSample], denom: XorDenominator) -> Result<f64> {
    if test.is_empty() {
        return Err(Error::Data("test set is empty".into()));
    }
    let errs = parallel::map(test, |s| -> Result<f64> {
        let pred = segment(gen, &s.x)?;
        xor_error(&pred, &Mask::from_image(&s.y.to_gray(), 127), denom)
    });
    Ok(errs.into_iter().collect::<Result<Vec<_>>>()?.iter().sum::<f64>() / test.len() as f64)
}

/// Validation images for a plan: the `⌈0.2 · final⌉` samples following the
/// final training size in manifest order.
pub fn validation_for(dataset: &[PairedSample], final_size: usize) -> Result<&[PairedSample]> {
    let n = ((final_size as f64 * VALIDATION_FRACTION).ceil() as usize).max(1);
    dataset.get(final_size..final_size + n).ok_or_else(|| {
        Error::Data(format!("dataset of {} samples cannot hold {final_size} training and {n} validation samples", dataset.len()))
    })
}

fn check_disjoint(dataset: &[PairedSample], test: &[PairedSample]) -> Result<()> {
    if let Some(t) = test.iter().find(|t| dataset.iter().any(|d| d.id == t.id)) {
        return Err(Error::Data(format!("test sample {:?} also appears in the training manifest", t.id)));
    }
    Ok(())
}

fn stage(
    index: usize,
    state: &mut TrainState,
    train: &[PairedSample],
    val: &[PairedSample],
    test: &[PairedSample],
    cfg: &TrainConfig,
    denom: XorDenominator,
) -> Result<(StageReport, TrainOutcome)> {
    let start = Instant::now();
    let outcome = train_with_validation(state, train, val, cfg)?;
    let wall_time_s = start.elapsed().as_secs_f64();
    let report = StageReport {
        stage: index,
        train_size: train.len(),
        wall_time_s,
        epochs_run: cfg.epochs,
        best_epoch: outcome.best.epoch,
        initial_val_l1: outcome.initial_val_l1,
        best_val_l1: outcome.best.val_l1,
        test_xor: test_xor(&outcome.best.generator()?, test, denom)?,
        test_fingerprint: fingerprint(test),
    };
    Ok((report, outcome))
}

/// Stage 1 trains from initialisation; stage `k + 1` resumes from stage
/// `k`'s lowest-L1 checkpoint (weights and optimizer moments) on the first
/// `sizes[k + 1]` samples. Validation is fixed across stages.
pub fn run_incremental(
    plan: &StagePlan,
    spec: &NetSpec,
    base: &TrainConfig,
    dataset: &[PairedSample],
    test: &[PairedSample],
    denom: XorDenominator,
) -> Result<ProtocolRun> {
    plan.validate()?;
    check_disjoint(dataset, test)?;
    let val = validation_for(dataset, plan.final_size())?;
    let mut reports = Vec::new();
    let mut outcomes: Vec<TrainOutcome> = Vec::new();
    for (k, (&size, &epochs)) in plan.sizes.iter().zip(&plan.epochs).enumerate() {
        let cfg = TrainConfig { epochs, seed: plan.seed.wrapping_add(k as u64), ..base.clone() };
        let mut state = match outcomes.last() {
            None => TrainState::new(spec, &TrainConfig { seed: plan.seed, ..cfg.clone() })?,
            Some(prev) => prev.best.restore()?,
        };
        let (report, outcome) = stage(k + 1, &mut state, &dataset[..size], val, test, &cfg, denom)?;
        reports.push(report);
        outcomes.push(outcome);
    }
    let best = outcomes.last().expect("at least one stage").best.clone();
    Ok(ProtocolRun { reports, outcomes, best })
}

/// One uninterrupted run on the first `train_size` samples with the same
/// validation rule as [`run_incremental`].
#[allow(clippy::too_many_arguments)]
pub fn run_scratch(
    spec: &NetSpec,
    base: &TrainConfig,
    epochs: usize,
    seed: u64,
    train_size: usize,
    dataset: &[PairedSample],
    test: &[PairedSample],
    denom: XorDenominator,
) -> Result<ProtocolRun> {
    check_disjoint(dataset, test)?;
    if train_size == 0 {
        return Err(Error::Config("scratch arm needs a positive training size".into()));
    }
    let val = validation_for(dataset, train_size)?;
    let cfg = TrainConfig { epochs, seed, ..base.clone() };
    let mut state = TrainState::new(spec, &cfg)?;
    let (report, outcome) = stage(1, &mut state, &dataset[..train_size], val, test, &cfg, denom)?;
    let best = outcome.best.clone();
    Ok(ProtocolRun { reports: vec![report], outcomes: vec![outcome], best })
}

/// Totals per arm and incremental/scratch ratios.
#[derive(Clone, Debug, PartialEq)]
pub struct Comparison {
    pub incremental_epochs: usize,
    pub scratch_epochs: usize,
    pub incremental_time_s: f64,
    pub scratch_time_s: f64,
    pub incremental_xor: f64,
    pub scratch_xor: f64,
}

fn ratio(a: f64, b: f64) -> f64 {
    if a == b {
        1.0
    } else {
        a / b
    }
}

impl Comparison {
    pub fn epoch_ratio(&self) -> f64 {
        ratio(self.incremental_epochs as f64, self.scratch_epochs as f64)
    }

    pub fn time_ratio(&self) -> f64 {
        ratio(self.incremental_time_s, self.scratch_time_s)
    }

    pub fn xor_ratio(&self) -> f64 {
        ratio(self.incremental_xor, self.scratch_xor)
    }

    /// Epoch and error rows; identical across reruns.
    pub fn to_csv(&self) -> String {
        format!(
            "quantity,incremental,scratch,ratio\ntotal_epochs,{},{},{}\nfinal_test_xor,{},{},{}\n",
            self.incremental_epochs,
            self.scratch_epochs,
            self.epoch_ratio(),
            self.incremental_xor,
            self.scratch_xor,
            self.xor_ratio()
        )
    }

    pub fn timing_csv(&self) -> String {
        format!(
            "quantity,incremental,scratch,ratio\ntotal_wall_time_s,{:.3},{:.3},{}\n",
            self.incremental_time_s,
            self.scratch_time_s,
            self.time_ratio()
        )
    }
}

pub fn compare(incremental: &[StageReport], scratch: &StageReport) -> Result<Comparison> {
    let last = incremental.last().ok_or_else(|| Error::invalid("no incremental stages to compare"))?;
    if incremental.iter().any(|r| r.test_fingerprint != scratch.test_fingerprint) {
        return Err(Error::invalid("incremental and scratch arms were scored on different test sets"));
    }
    Ok(Comparison {
        incremental_epochs: incremental.iter().map(|r| r.epochs_run).sum(),
        scratch_epochs: scratch.epochs_run,
        incremental_time_s: incremental.iter().map(|r| r.wall_time_s).sum(),
        scratch_time_s: scratch.wall_time_s,
        incremental_xor: last.test_xor,
        scratch_xor: scratch.test_xor,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn plan_parsing() {
        let p = StagePlan::parse("sizes=4,8,16\nepochs=50\nseed=3\nscratch_epochs=375\n").unwrap();
        assert_eq!(p.epochs, [50, 50, 50]);
        assert_eq!(p.total_epochs(), 150);
        assert_eq!(StagePlan::parse(&p.to_text()).unwrap(), p);
        assert!(StagePlan::parse("sizes=4,4\nepochs=1").is_err());
        assert!(StagePlan::parse("sizes=8,4\nepochs=1").is_err());
        assert!(StagePlan::parse("sizes=4,8\nepochs=1,2,3").is_err());
        assert!(StagePlan::parse("sizes=4\nepochs=1\nextra=1").is_err());
    }

    fn report(epochs: usize, xor: f64, fp: u64) -> StageReport {
        StageReport {
            stage: 1,
            train_size: 4,
            wall_time_s: 2.0,
            epochs_run: epochs,
            best_epoch: 0,
            initial_val_l1: 1.0,
            best_val_l1: 1.0,
            test_xor: xor,
            test_fingerprint: fp,
        }
    }

    #[test]
    fn comparison_ratios() {
        let a = report(10, 5.0, 1);
        let c = compare(std::slice::from_ref(&a), &a).unwrap();
        assert_eq!((c.epoch_ratio(), c.time_ratio(), c.xor_ratio()), (1.0, 1.0, 1.0));
        let inc = [report(50, 4.0, 7), report(50, 3.0, 7), report(50, 2.0, 7)];
        let c = compare(&inc, &report(375, 2.5, 7)).unwrap();
        assert_eq!(c.epoch_ratio(), 0.4);
        assert_eq!(c.incremental_xor, 2.0);
        assert!(compare(&inc, &report(375, 2.5, 8)).is_err());
        assert!(c.to_csv().starts_with("quantity,incremental,scratch,ratio\ntotal_epochs,150,375,0.4\n"));
    }
}
