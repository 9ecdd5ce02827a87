use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum NoiseMode {
    None,
    /// One extra standard-normal input channel for the generator.
    Channel,
}

impl fmt::Display for NoiseMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            NoiseMode::None => "none",
            NoiseMode::Channel => "channel",
        })
    }
}

impl FromStr for NoiseMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "none" => Ok(NoiseMode::None),
            "channel" => Ok(NoiseMode::Channel),
            _ => Err(Error::Config(format!("unknown noise mode {s:?}"))),
        }
    }
}

/// Shape of a U-Net generator and its patch discriminator.
///
/// Encoder layer `i` (1-based) halves the resolution `i` times; decoder
/// layer `j` doubles it back from the bottleneck. A skip pair `(i, j)`
/// concatenates encoder `i`'s output onto decoder `j`'s output before
/// decoder `j + 1`, so legal pairs satisfy `i + j == depth`.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct NetSpec {
    pub depth: usize,
    pub base_channels: usize,
    pub input_size: usize,
    pub in_channels: usize,
    pub out_channels: usize,
    pub skip_pairs: Vec<(usize, usize)>,
    pub noise: NoiseMode,
    pub disc_depth: usize,
}

impl Default for NetSpec {
    fn default() -> Self {
        Self::desk()
    }
}

impl NetSpec {
    /// Depth 5 on 32×32 gray images with 16 base channels.
    pub fn desk() -> Self {
        Self::square(5, 32, 16)
    }

    /// Depth 9 on 512×512: the first encoder layer is skip-connected to the
    /// eighth decoder layer.
    pub fn full_scale() -> Self {
        NetSpec { in_channels: 3, ..Self::square(9, 512, 64) }
    }

    /// Gray-to-gray spec with every mirror skip connection.
    pub fn square(depth: usize, input_size: usize, base_channels: usize) -> Self {
        NetSpec {
            depth,
            base_channels,
            input_size,
            in_channels: 1,
            out_channels: 1,
            skip_pairs: Self::mirror_skips(depth),
            noise: NoiseMode::None,
            disc_depth: 3,
        }
    }

    pub fn mirror_skips(depth: usize) -> Vec<(usize, usize)> {
        (1..depth).map(|i| (i, depth - i)).collect()
    }

    pub fn validate(&self) -> Result<()> {
        let fail = |m: String| Err(Error::Spec(m));
        if self.depth == 0 || self.depth > 16 {
            return fail(format!("depth must be in 1..=16, got {}", self.depth));
        }
        if self.base_channels == 0 {
            return fail("base_channels must be positive".into());
        }
        for (name, c) in [("in_channels", self.in_channels), ("out_channels", self.out_channels)] {
            if c != 1 && c != 3 {
                return fail(format!("{name} must be 1 or 3, got {c}"));
            }
        }
        let scale = 1usize << self.depth;
        if self.input_size == 0 || !self.input_size.is_multiple_of(scale) {
            return fail(format!("input size {} is not a multiple of 2^{} = {scale}", self.input_size, self.depth));
        }
        let mut seen = Vec::new();
        for &(i, j) in &self.skip_pairs {
            if i == 0 || j == 0 || i >= self.depth || j >= self.depth || i + j != self.depth {
                return fail(format!("skip pair ({i}, {j}) does not join layers of equal resolution at depth {}", self.depth));
            }
            if seen.contains(&i) {
                return fail(format!("duplicate skip pair for encoder layer {i}"));
            }
            seen.push(i);
        }
        if self.disc_depth == 0 || self.input_size >> self.disc_depth < 2 || !self.input_size.is_multiple_of(1 << self.disc_depth) {
            return fail(format!("discriminator depth {} leaves no patch map at input size {}", self.disc_depth, self.input_size));
        }
        Ok(())
    }

    pub fn bottleneck_size(&self) -> usize {
        self.input_size >> self.depth
    }

    /// Generator input channels, including the optional noise channel.
    pub fn generator_in_channels(&self) -> usize {
        self.in_channels + usize::from(self.noise == NoiseMode::Channel)
    }

    /// Output channels of encoder layers `1..=depth`.
    pub fn encoder_channels(&self) -> Vec<usize> {
        (0..self.depth).map(|i| self.base_channels * (1usize << i.min(3))).collect()
    }

    pub(crate) fn skip_into_decoder(&self, j: usize) -> Option<usize> {
        self.skip_pairs.iter().find(|&&(_, d)| d == j).map(|&(e, _)| e)
    }

    pub fn has_skips(&self) -> bool {
        !self.skip_pairs.is_empty()
    }

    /// One-line `key=value` rendering, inverse of [`NetSpec::parse_line`].
    pub fn to_line(&self) -> String {
        let skips = if self.skip_pairs.is_empty() {
            "-".to_string()
        } else {
            self.skip_pairs.iter().map(|(i, j)| format!("{i}:{j}")).collect::<Vec<_>>().join(",")
        };
        format!(
            "depth={} base={} input={} in={} out={} noise={} disc_depth={} skips={}",
            self.depth, self.base_channels, self.input_size, self.in_channels, self.out_channels, self.noise, self.disc_depth, skips
        )
    }

    pub fn parse_line(line: &str) -> Result<Self> {
        let mut spec = NetSpec::desk();
        let bad = |k: &str, v: &str| Error::Spec(format!("bad value {v:?} for {k}"));
        for field in line.split_whitespace() {
            let (k, v) = field.split_once('=').ok_or_else(|| Error::Spec(format!("expected key=value, got {field:?}")))?;
            let num = || v.parse::<usize>().map_err(|_| bad(k, v));
            match k {
                "depth" => spec.depth = num()?,
                "base" => spec.base_channels = num()?,
                "input" => spec.input_size = num()?,
                "in" => spec.in_channels = num()?,
                "out" => spec.out_channels = num()?,
                "noise" => spec.noise = v.parse()?,
                "disc_depth" => spec.disc_depth = num()?,
                "skips" => spec.skip_pairs = parse_skips(v)?,
                _ => return Err(Error::Spec(format!("unknown spec key {k:?}"))),
            }
        }
        spec.validate()?;
        Ok(spec)
    }
}

pub fn parse_skips(v: &str) -> Result<Vec<(usize, usize)>> {
    if v == "-" || v.is_empty() {
        return Ok(Vec::new());
    }
    v.split(',')
        .map(|p| {
            let (a, b) = p.split_once(':').ok_or_else(|| Error::Spec(format!("bad skip pair {p:?}")))?;
            match (a.parse(), b.parse()) {
                (Ok(a), Ok(b)) => Ok((a, b)),
                _ => Err(Error::Spec(format!("bad skip pair {p:?}"))),
            }
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn full_scale_geometry() {
        let s = NetSpec::full_scale();
        s.validate().unwrap();
        assert_eq!(s.bottleneck_size(), 1);
        assert!(s.skip_pairs.contains(&(1, 8)));
    }

    #[test]
    fn desk_scale_geometry() {
        let s = NetSpec::desk();
        s.validate().unwrap();
        assert_eq!(s.bottleneck_size(), 1);
        assert_eq!(s.encoder_channels(), [16, 32, 64, 128, 128]);
    }

    #[test]
    fn non_power_of_two_rejected() {
        let s = NetSpec::square(5, 48, 16);
        assert!(matches!(s.validate(), Err(Error::Spec(_))));
    }

    #[test]
    fn unequal_resolution_skip_rejected() {
        let mut s = NetSpec::desk();
        s.skip_pairs = vec![(1, 3)];
        assert!(s.validate().is_err());
        s.skip_pairs.clear();
        s.validate().unwrap();
    }

    #[test]
    fn line_round_trip() {
        let mut s = NetSpec::square(4, 16, 8);
        s.noise = NoiseMode::Channel;
        assert_eq!(NetSpec::parse_line(&s.to_line()).unwrap(), s);
        s.skip_pairs.clear();
        assert_eq!(NetSpec::parse_line(&s.to_line()).unwrap(), s);
    }
}
