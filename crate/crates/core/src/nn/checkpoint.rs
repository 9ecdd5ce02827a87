//! Checkpoint files: a text header followed by little-endian `f32` data.
//!
//! ```text
//! IRCGAN-CHECKPOINT
//! version 1
//! spec depth=5 base=16 input=32 in=1 out=1 noise=none disc_depth=3 skips=1:4,2:3,3:2,4:1
//! conditioned 1
//! epoch 12
//! val_l1 0.0412
//! adam_g lr=0.0002 beta1=0.5 beta2=0.999 eps=0.00000001 step=384
//! adam_d lr=0.0002 beta1=0.5 beta2=0.999 eps=0.00000001 step=384
//! tensors 3
//! g.enc1.weight 16,1,4,4
//! ...
//! end
//! <raw tensor data in table order>
//! ```

use std::collections::HashMap;
use std::fs;
use std::path::Path;

use super::discriminator::PatchDiscriminator;
use super::generator::UNetGenerator;
use super::layer::{Layer, Module};
use super::spec::NetSpec;
use super::train::TrainState;
use crate::error::{Error, Result};
use crate::tensor::{Adam, AdamConfig, Tensor};

pub const MAGIC: &str = "IRCGAN-CHECKPOINT";
pub const VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq)]
pub struct NamedTensor {
    pub name: String,
    pub shape: Vec<usize>,
    pub data: Vec<f32>,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct OptimizerHeader {
    pub config: AdamConfig,
    pub step_count: u64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Checkpoint {
    pub spec: NetSpec,
    pub conditioned: bool,
    pub epoch: usize,
    pub val_l1: f64,
    pub adam_g: OptimizerHeader,
    pub adam_d: OptimizerHeader,
    pub tensors: Vec<NamedTensor>,
}

fn export_layers(prefix: &str, layers: Vec<&Layer<f32>>, out: &mut Vec<NamedTensor>) {
    let mut push = |name: String, shape: &[usize], data: &[f32]| out.push(NamedTensor { name, shape: shape.to_vec(), data: data.to_vec() });
    for l in layers {
        let p = format!("{prefix}.{}", l.name);
        push(format!("{p}.weight"), l.weight.shape(), l.weight.data());
        if let Some(b) = &l.bias {
            push(format!("{p}.bias"), b.shape(), b.data());
        }
        if let Some(n) = &l.norm {
            push(format!("{p}.gamma"), n.gamma.shape(), n.gamma.data());
            push(format!("{p}.beta"), n.beta.shape(), n.beta.data());
            push(format!("{p}.running_mean"), &[n.stats.mean.len()], &n.stats.mean);
            push(format!("{p}.running_var"), &[n.stats.var.len()], &n.stats.var);
        }
    }
}

fn export_adam(prefix: &str, opt: &Adam<f32>, params: Vec<&Tensor<f32>>, out: &mut Vec<NamedTensor>) {
    let (m, v) = opt.moments();
    for (i, p) in params.iter().enumerate() {
        for (kind, buf) in [("m", &m[i]), ("v", &v[i])] {
            out.push(NamedTensor { name: format!("{prefix}.{kind}{i}"), shape: p.shape().to_vec(), data: buf.clone() });
        }
    }
}

struct Lookup<'a>(HashMap<&'a str, &'a NamedTensor>);

impl Lookup<'_> {
    fn take(&self, name: &str, shape: &[usize]) -> Result<&[f32]> {
        let t = self.0.get(name).ok_or_else(|| Error::Data(format!("checkpoint lacks tensor {name}")))?;
        if t.shape != shape {
            return Err(Error::Shape { op: "checkpoint restore", lhs: t.shape.clone(), rhs: shape.to_vec() });
        }
        Ok(&t.data)
    }

    fn import_layers(&self, prefix: &str, layers: Vec<&mut Layer<f32>>) -> Result<()> {
        for l in layers {
            let p = format!("{prefix}.{}", l.name);
            let shape = l.weight.shape().to_vec();
            l.weight.data_mut().copy_from_slice(self.take(&format!("{p}.weight"), &shape)?);
            if let Some(b) = &mut l.bias {
                let shape = b.shape().to_vec();
                b.data_mut().copy_from_slice(self.take(&format!("{p}.bias"), &shape)?);
            }
            if let Some(n) = &mut l.norm {
                let c = [n.stats.mean.len()];
                n.gamma.data_mut().copy_from_slice(self.take(&format!("{p}.gamma"), &c)?);
                n.beta.data_mut().copy_from_slice(self.take(&format!("{p}.beta"), &c)?);
                n.stats.mean.copy_from_slice(self.take(&format!("{p}.running_mean"), &c)?);
                n.stats.var.copy_from_slice(self.take(&format!("{p}.running_var"), &c)?);
            }
        }
        Ok(())
    }

    fn import_adam(&self, prefix: &str, header: OptimizerHeader, params: Vec<&Tensor<f32>>) -> Result<Adam<f32>> {
        let mut m = Vec::with_capacity(params.len());
        let mut v = Vec::with_capacity(params.len());
        for (i, p) in params.iter().enumerate() {
            m.push(self.take(&format!("{prefix}.m{i}"), p.shape())?.to_vec());
            v.push(self.take(&format!("{prefix}.v{i}"), p.shape())?.to_vec());
        }
        Adam::from_parts(header.config, header.step_count, m, v)
    }
}

impl Checkpoint {
    pub fn capture(state: &TrainState, val_l1: f64) -> Self {
        let mut tensors = Vec::new();
        export_layers("g", state.generator.layers(), &mut tensors);
        export_layers("d", state.discriminator.layers(), &mut tensors);
        export_adam("opt_g", &state.opt_g, state.generator.params(), &mut tensors);
        export_adam("opt_d", &state.opt_d, state.discriminator.params(), &mut tensors);
        Checkpoint {
            spec: state.spec().clone(),
            conditioned: state.discriminator.conditioned(),
            epoch: state.epoch,
            val_l1,
            adam_g: OptimizerHeader { config: state.opt_g.config, step_count: state.opt_g.step_count },
            adam_d: OptimizerHeader { config: state.opt_d.config, step_count: state.opt_d.step_count },
            tensors,
        }
    }

    fn lookup(&self) -> Lookup<'_> {
        Lookup(self.tensors.iter().map(|t| (t.name.as_str(), t)).collect())
    }

    pub fn generator(&self) -> Result<UNetGenerator<f32>> {
        let mut g = UNetGenerator::new(&self.spec, 0)?;
        self.lookup().import_layers("g", g.layers_mut())?;
        Ok(g)
    }

    pub fn restore(&self) -> Result<TrainState> {
        let lookup = self.lookup();
        let generator = self.generator()?;
        let mut discriminator = PatchDiscriminator::new(&self.spec, self.conditioned, 0)?;
        lookup.import_layers("d", discriminator.layers_mut())?;
        let opt_g = lookup.import_adam("opt_g", self.adam_g, generator.params())?;
        let opt_d = lookup.import_adam("opt_d", self.adam_d, discriminator.params())?;
        Ok(TrainState { generator, discriminator, opt_g, opt_d, epoch: self.epoch })
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let adam = |h: &OptimizerHeader| {
            format!("lr={} beta1={} beta2={} eps={} step={}", h.config.lr, h.config.beta1, h.config.beta2, h.config.eps, h.step_count)
        };
        let mut head = format!(
            "{MAGIC}\nversion {VERSION}\nspec {}\nconditioned {}\nepoch {}\nval_l1 {}\nadam_g {}\nadam_d {}\ntensors {}\n",
            self.spec.to_line(),
            u8::from(self.conditioned),
            self.epoch,
            self.val_l1,
            adam(&self.adam_g),
            adam(&self.adam_d),
            self.tensors.len()
        );
        for t in &self.tensors {
            let dims: Vec<String> = t.shape.iter().map(usize::to_string).collect();
            head.push_str(&format!("{} {}\n", t.name, dims.join(",")));
        }
        head.push_str("end\n");
        let mut out = head.into_bytes();
        for t in &self.tensors {
            for v in &t.data {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let bad = |m: String| Error::Data(format!("checkpoint: {m}"));
        let mut pos = 0;
        let mut next_line = || -> Result<&str> {
            let rest = &bytes[pos..];
            let len = rest.iter().position(|&b| b == b'\n').ok_or_else(|| bad("truncated header".into()))?;
            pos += len + 1;
            std::str::from_utf8(&rest[..len]).map_err(|_| bad("header is not UTF-8".into()))
        };
        let field = |line: &str, key: &str| -> Result<String> {
            line.strip_prefix(key)
                .and_then(|r| r.strip_prefix(' '))
                .map(str::to_string)
                .ok_or_else(|| bad(format!("expected `{key}` line, got {line:?}")))
        };
        if next_line()? != MAGIC {
            return Err(bad("missing magic".into()));
        }
        let version = field(next_line()?, "version")?;
        if version != VERSION.to_string() {
            return Err(bad(format!("unsupported version {version}")));
        }
        let spec = NetSpec::parse_line(&field(next_line()?, "spec")?)?;
        let conditioned = match field(next_line()?, "conditioned")?.as_str() {
            "0" => false,
            "1" => true,
            v => return Err(bad(format!("bad conditioned flag {v}"))),
        };
        let epoch = field(next_line()?, "epoch")?.parse().map_err(|_| bad("bad epoch".into()))?;
        let val_l1 = field(next_line()?, "val_l1")?.parse().map_err(|_| bad("bad val_l1".into()))?;
        let adam_g = parse_adam(&field(next_line()?, "adam_g")?)?;
        let adam_d = parse_adam(&field(next_line()?, "adam_d")?)?;
        let count: usize = field(next_line()?, "tensors")?.parse().map_err(|_| bad("bad tensor count".into()))?;
        let mut table = Vec::with_capacity(count);
        for _ in 0..count {
            let line = next_line()?;
            let (name, dims) = line.split_once(' ').ok_or_else(|| bad(format!("bad tensor line {line:?}")))?;
            let shape = dims
                .split(',')
                .map(|d| d.parse::<usize>())
                .collect::<std::result::Result<Vec<_>, _>>()
                .map_err(|_| bad(format!("bad shape in {line:?}")))?;
            table.push((name.to_string(), shape));
        }
        if next_line()? != "end" {
            return Err(bad("missing end marker".into()));
        }
        let mut data = bytes[pos..].chunks_exact(4).map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]));
        let expected: usize = table.iter().map(|(_, s)| s.iter().product::<usize>()).sum();
        if bytes.len() - pos != expected * 4 {
            return Err(bad(format!("expected {} data bytes, found {}", expected * 4, bytes.len() - pos)));
        }
        let tensors = table
            .into_iter()
            .map(|(name, shape)| {
                let n = shape.iter().product();
                NamedTensor { name, shape, data: data.by_ref().take(n).collect() }
            })
            .collect();
        Ok(Checkpoint { spec, conditioned, epoch, val_l1, adam_g, adam_d, tensors })
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        fs::write(path, self.to_bytes()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
        Self::from_bytes(&bytes)
    }
}

fn parse_adam(s: &str) -> Result<OptimizerHeader> {
    let mut cfg = AdamConfig::default();
    let mut step = 0;
    for kv in s.split_whitespace() {
        let (k, v) = kv.split_once('=').ok_or_else(|| Error::Data(format!("checkpoint: bad optimizer field {kv:?}")))?;
        let f = || v.parse::<f64>().map_err(|_| Error::Data(format!("checkpoint: bad value in {kv:?}")));
        match k {
            "lr" => cfg.lr = f()?,
            "beta1" => cfg.beta1 = f()?,
            "beta2" => cfg.beta2 = f()?,
            "eps" => cfg.eps = f()?,
            "step" => step = v.parse().map_err(|_| Error::Data(format!("checkpoint: bad step in {kv:?}")))?,
            _ => return Err(Error::Data(format!("checkpoint: unknown optimizer field {k:?}"))),
        }
    }
    Ok(OptimizerHeader { config: cfg, step_count: step })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::train::TrainConfig;

    #[test]
    fn bytes_round_trip() {
        let spec = NetSpec::square(3, 16, 4);
        let state = TrainState::new(&spec, &TrainConfig::default()).unwrap();
        let ck = Checkpoint::capture(&state, 0.123456789);
        let bytes = ck.to_bytes();
        let back = Checkpoint::from_bytes(&bytes).unwrap();
        assert_eq!(back, ck);
        assert_eq!(back.to_bytes(), bytes);
        let restored = back.restore().unwrap();
        assert_eq!(restored.generator, state.generator);
        assert_eq!(restored.discriminator, state.discriminator);
        assert_eq!(restored.opt_g, state.opt_g);
    }

    #[test]
    fn truncated_data_rejected() {
        let spec = NetSpec::square(3, 16, 4);
        let state = TrainState::new(&spec, &TrainConfig::default()).unwrap();
        let bytes = Checkpoint::capture(&state, 1.0).to_bytes();
        assert!(Checkpoint::from_bytes(&bytes[..bytes.len() - 3]).is_err());
        assert!(Checkpoint::from_bytes(b"NOPE\n").is_err());
    }
}
