//! Key=value parameter files for the augment and thermal commands.

use std::path::Path;

use ircgan::augment::SynthConfig;
use ircgan::config::KeyValues;
use ircgan::thermal::{AlarmConfig, BandRule, DEFAULT_TAU};
use ircgan::{Error, Result};

pub fn read_text(path: &Path) -> Result<String> {
    std::fs::read_to_string(path).map_err(|e| Error::Config(format!("{}: {e}", path.display())))
}

#[derive(Clone, Debug, PartialEq)]
pub struct SynthSettings {
    pub count: usize,
    pub synth: SynthConfig,
}

impl SynthSettings {
    pub fn parse(text: &str) -> Result<Self> {
        let mut kv = KeyValues::parse(text)?;
        let count = kv.take("count")?.ok_or_else(|| Error::Config("synthetic suite needs a count".into()))?;
        let mut c = SynthConfig::default();
        macro_rules! set {
            ($($key:literal => $field:expr),* $(,)?) => {
                $(if let Some(v) = kv.take($key)? { $field = v; })*
            };
        }
        set! {
            "size" => c.size,
            "background" => c.background,
            "target_level" => c.target_level,
            "target_mode" => c.target_mode,
            "target_noise" => c.target_noise,
            "blade_fraction" => c.blade_fraction,
            "background_jitter" => c.background_jitter,
            "contrast_jitter" => c.contrast_jitter,
            "min_scale" => c.min_scale,
            "max_scale" => c.max_scale,
            "seed" => c.seed,
        }
        if let Some(p) = kv.take_raw("prefix") {
            c.prefix = p;
        }
        kv.finish()?;
        Ok(SynthSettings { count, synth: c })
    }

    pub fn to_text(&self) -> String {
        let c = &self.synth;
        format!(
            "count={}\nsize={}\nbackground={}\ntarget_level={}\ntarget_mode={}\ntarget_noise={}\nblade_fraction={}\n\
             background_jitter={}\ncontrast_jitter={}\nmin_scale={}\nmax_scale={}\nseed={}\nprefix={}\n",
            self.count,
            c.size,
            c.background,
            c.target_level,
            c.target_mode,
            c.target_noise,
            c.blade_fraction,
            c.background_jitter,
            c.contrast_jitter,
            c.min_scale,
            c.max_scale,
            c.seed,
            c.prefix
        )
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ThermalSettings {
    /// Seconds between frames.
    pub interval: f64,
    pub tau: u8,
    pub rule: BandRule,
    pub alarm: AlarmConfig,
}

impl Default for ThermalSettings {
    fn default() -> Self {
        ThermalSettings { interval: 1.0, tau: DEFAULT_TAU, rule: BandRule::default(), alarm: AlarmConfig::default() }
    }
}

impl ThermalSettings {
    pub fn parse(text: &str) -> Result<Self> {
        let mut kv = KeyValues::parse(text)?;
        let mut s = ThermalSettings::default();
        if let Some(v) = kv.take("interval")? {
            s.interval = v;
        }
        if let Some(v) = kv.take("tau")? {
            s.tau = v;
        }
        if let Some(v) = kv.take("rule")? {
            s.rule = v;
        }
        if let Some(v) = kv.take("window")? {
            s.alarm.window = v;
        }
        if let Some(v) = kv.take("rate_threshold")? {
            s.alarm.rate_threshold = v;
        }
        if let Some(v) = kv.take("consecutive")? {
            s.alarm.consecutive = v;
        }
        kv.finish()?;
        s.alarm.validate().map_err(|e| Error::Config(e.to_string()))?;
        Ok(s)
    }

    pub fn to_text(&self) -> String {
        format!(
            "interval={}\ntau={}\nrule={}\nwindow={}\nrate_threshold={}\nconsecutive={}\n",
            self.interval, self.tau, self.rule, self.alarm.window, self.alarm.rate_threshold, self.alarm.consecutive
        )
    }
}
