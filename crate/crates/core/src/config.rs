//! Plain-text `key=value` configuration. Unknown keys are rejected.

use std::collections::BTreeMap;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::nn::{parse_skips, GenLoss, NetSpec, NoiseMode, TrainConfig, Variant};

/// Parsed `key=value` lines; `#` starts a comment.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct KeyValues {
    entries: BTreeMap<String, (usize, String)>,
}

impl KeyValues {
    pub fn parse(text: &str) -> Result<Self> {
        let mut entries = BTreeMap::new();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line.split_once('=').ok_or_else(|| Error::Config(format!("line {}: expected key=value, got {line:?}", i + 1)))?;
            let k = k.trim().to_string();
            if k.is_empty() {
                return Err(Error::Config(format!("line {}: empty key", i + 1)));
            }
            if entries.insert(k.clone(), (i + 1, v.trim().to_string())).is_some() {
                return Err(Error::Config(format!("line {}: duplicate key {k:?}", i + 1)));
            }
        }
        Ok(KeyValues { entries })
    }

    /// Removes and parses `key`.
    pub fn take<T: FromStr>(&mut self, key: &str) -> Result<Option<T>> {
        match self.entries.remove(key) {
            None => Ok(None),
            Some((line, v)) => v.parse().map(Some).map_err(|_| Error::Config(format!("line {line}: invalid value {v:?} for {key}"))),
        }
    }

    pub fn take_raw(&mut self, key: &str) -> Option<String> {
        self.entries.remove(key).map(|(_, v)| v)
    }

    /// Fails if any key was not consumed.
    pub fn finish(self) -> Result<()> {
        match self.entries.into_iter().next() {
            None => Ok(()),
            Some((k, (line, _))) => Err(Error::Config(format!("line {line}: unknown key {k:?}"))),
        }
    }
}

/// Network geometry plus training hyperparameters.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct ExperimentConfig {
    pub spec: NetSpec,
    pub train: TrainConfig,
}

impl ExperimentConfig {
    pub fn parse(text: &str) -> Result<Self> {
        let mut kv = KeyValues::parse(text)?;
        let d = NetSpec::desk();
        let depth = kv.take("depth")?.unwrap_or(d.depth);
        let input = kv.take("input_size")?.unwrap_or(d.input_size);
        let base = kv.take("base_channels")?.unwrap_or(d.base_channels);
        let mut spec = NetSpec::square(depth, input, base);
        if let Some(v) = kv.take("in_channels")? {
            spec.in_channels = v;
        }
        if let Some(v) = kv.take("out_channels")? {
            spec.out_channels = v;
        }
        if let Some(v) = kv.take_raw("skips") {
            spec.skip_pairs = parse_skips(&v).map_err(|e| Error::Config(e.to_string()))?;
        }
        if let Some(v) = kv.take::<NoiseMode>("noise")? {
            spec.noise = v;
        }
        if let Some(v) = kv.take("disc_depth")? {
            spec.disc_depth = v;
        }
        spec.validate().map_err(|e| Error::Config(e.to_string()))?;

        let mut t = TrainConfig::default();
        macro_rules! set {
            ($($key:literal => $field:expr),* $(,)?) => {
                $(if let Some(v) = kv.take($key)? { $field = v; })*
            };
        }
        set! {
            "epochs" => t.epochs,
            "batch_size" => t.batch_size,
            "lambda_l1" => t.lambda_l1,
            "seed" => t.seed,
            "checkpoint_every" => t.checkpoint_every,
            "validation_fraction" => t.validation_fraction,
            "lr" => t.adam.lr,
            "beta1" => t.adam.beta1,
            "beta2" => t.adam.beta2,
            "eps" => t.adam.eps,
        }
        if let Some(v) = kv.take::<Variant>("variant")? {
            t.variant = v;
        }
        if let Some(v) = kv.take::<GenLoss>("gen_loss")? {
            t.gen_loss = v;
        }
        kv.finish()?;
        t.validate()?;
        Ok(ExperimentConfig { spec, train: t })
    }

    /// Every effective key, one per line; parses back to `self`.
    pub fn to_text(&self) -> String {
        let s = &self.spec;
        let t = &self.train;
        let skips = s.to_line().rsplit_once("skips=").map(|(_, v)| v.to_string()).unwrap_or_default();
        format!(
            "depth={}\ninput_size={}\nbase_channels={}\nin_channels={}\nout_channels={}\nskips={skips}\nnoise={}\ndisc_depth={}\n\
             epochs={}\nbatch_size={}\nlambda_l1={}\nseed={}\ncheckpoint_every={}\nvalidation_fraction={}\n\
             lr={}\nbeta1={}\nbeta2={}\neps={}\nvariant={}\ngen_loss={}\n",
            s.depth,
            s.input_size,
            s.base_channels,
            s.in_channels,
            s.out_channels,
            s.noise,
            s.disc_depth,
            t.epochs,
            t.batch_size,
            t.lambda_l1,
            t.seed,
            t.checkpoint_every,
            t.validation_fraction,
            t.adam.lr,
            t.adam.beta1,
            t.adam.beta2,
            t.adam.eps,
            t.variant,
            t.gen_loss
        )
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip() {
        let c = ExperimentConfig::parse("depth=4\ninput_size=16\nbase_channels=8 # small\nlr=0.001\nvariant=eq2\nskips=-\n").unwrap();
        assert_eq!(c.spec.depth, 4);
        assert!(c.spec.skip_pairs.is_empty());
        assert_eq!(c.train.adam.lr, 0.001);
        let again = ExperimentConfig::parse(&c.to_text()).unwrap();
        assert_eq!(again, c);
        assert_eq!(again.to_text(), c.to_text());
        let d = ExperimentConfig::default();
        assert_eq!(ExperimentConfig::parse(&d.to_text()).unwrap(), d);
    }

    #[test]
    fn unknown_and_bad_keys() {
        assert!(matches!(ExperimentConfig::parse("epoch=3"), Err(Error::Config(m)) if m.contains("unknown key")));
        assert!(matches!(ExperimentConfig::parse("epochs=three"), Err(Error::Config(_))));
        assert!(matches!(ExperimentConfig::parse("epochs=1\nepochs=2"), Err(Error::Config(_))));
        assert!(matches!(ExperimentConfig::parse("input_size=48"), Err(Error::Config(_))));
        assert!(matches!(ExperimentConfig::parse("no equals"), Err(Error::Config(_))));
    }
}
