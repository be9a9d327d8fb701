//! Binary checkpoint format.
//!
//! Layout (little endian): a version byte, `u32` length plus the model
//! configuration as TOML, `u32` entry count, then per entry a `u32` name
//! length and UTF-8 name, `u32` rank, `rank × u64` dims and the `f64` data.

use std::collections::HashMap;
use std::io::{Read, Write};
use std::path::Path;

use super::config::ModelConfig;
use super::params::{check_structure, init_parameters, Parameters};
use crate::autodiff::Tensor;
use crate::error::{Error, Result};

pub const CHECKPOINT_VERSION: u8 = 1;

fn bad(msg: impl Into<String>) -> Error {
    Error::Checkpoint(msg.into())
}

pub fn write_checkpoint(mut w: impl Write, cfg: &ModelConfig, params: &Parameters) -> Result<()> {
    check_structure(params, cfg)?;
    let cfg_text = toml::to_string(cfg).map_err(|e| bad(format!("cannot encode config: {e}")))?;
    let mut buf = Vec::new();
    buf.push(CHECKPOINT_VERSION);
    buf.extend((cfg_text.len() as u32).to_le_bytes());
    buf.extend(cfg_text.as_bytes());
    let entries = params.entries();
    buf.extend((entries.len() as u32).to_le_bytes());
    for (name, t) in entries {
        buf.extend((name.len() as u32).to_le_bytes());
        buf.extend(name.as_bytes());
        buf.extend((t.rank() as u32).to_le_bytes());
        for &d in t.shape() {
            buf.extend((d as u64).to_le_bytes());
        }
        for &v in t.data() {
            buf.extend(v.to_le_bytes());
        }
    }
    w.write_all(&buf).map_err(|e| bad(format!("write failed: {e}")))
}

struct Cursor<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize, what: &str) -> Result<&'a [u8]> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.buf.len());
        let end = end.ok_or_else(|| bad(format!("truncated while reading {what} at byte {}", self.pos)))?;
        let s = &self.buf[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u32(&mut self, what: &str) -> Result<usize> {
        Ok(u32::from_le_bytes(self.take(4, what)?.try_into().unwrap()) as usize)
    }

    fn u64(&mut self, what: &str) -> Result<usize> {
        let v = u64::from_le_bytes(self.take(8, what)?.try_into().unwrap());
        usize::try_from(v).map_err(|_| bad(format!("{what} {v} does not fit in memory")))
    }
}

pub fn read_checkpoint(mut r: impl Read) -> Result<(ModelConfig, Parameters)> {
    let mut buf = Vec::new();
    r.read_to_end(&mut buf).map_err(|e| bad(format!("read failed: {e}")))?;
    let mut c = Cursor { buf: &buf, pos: 0 };
    let version = c.take(1, "version")?[0];
    if version != CHECKPOINT_VERSION {
        return Err(bad(format!("unsupported version {version}, expected {CHECKPOINT_VERSION}")));
    }
    let n = c.u32("config length")?;
    let text = std::str::from_utf8(c.take(n, "config")?).map_err(|_| bad("config is not UTF-8"))?;
    let cfg: ModelConfig = toml::from_str(text).map_err(|e| bad(format!("bad config: {e}")))?;
    cfg.validate()?;

    let count = c.u32("entry count")?;
    let mut stored: HashMap<String, Tensor> = HashMap::with_capacity(count);
    for _ in 0..count {
        let n = c.u32("name length")?;
        let name = std::str::from_utf8(c.take(n, "name")?)
            .map_err(|_| bad("entry name is not UTF-8"))?
            .to_string();
        let rank = c.u32("rank")?;
        let mut shape = Vec::with_capacity(rank.min(8));
        for _ in 0..rank {
            shape.push(c.u64("dimension")?);
        }
        let len = shape
            .iter()
            .try_fold(1usize, |a, &d| a.checked_mul(d))
            .ok_or_else(|| bad(format!("{name}: shape {shape:?} overflows")))?;
        let bytes = c.take(len.checked_mul(8).ok_or_else(|| bad("size overflow"))?, &name)?;
        let data = bytes
            .chunks_exact(8)
            .map(|b| f64::from_le_bytes(b.try_into().unwrap()))
            .collect();
        let t = Tensor::new(shape, data).map_err(|e| bad(format!("{name}: {e}")))?;
        if stored.insert(name.clone(), t).is_some() {
            return Err(bad(format!("duplicate entry {name}")));
        }
    }
    if c.pos != buf.len() {
        return Err(bad(format!("{} trailing bytes", buf.len() - c.pos)));
    }

    let template = init_parameters(&cfg)?;
    if stored.len() != template.entries().len() {
        return Err(bad(format!(
            "{} entries stored, configuration implies {}",
            stored.len(),
            template.entries().len()
        )));
    }
    let params = template.try_map(|name, t| {
        let v = stored.remove(name).ok_or_else(|| bad(format!("missing entry {name}")))?;
        if v.shape() != t.shape() {
            return Err(bad(format!("{name}: stored shape {:?}, expected {:?}", v.shape(), t.shape())));
        }
        Ok(v)
    })?;
    Ok((cfg, params))
}

pub fn save_checkpoint(path: &Path, cfg: &ModelConfig, params: &Parameters) -> Result<()> {
    let f = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = std::io::BufWriter::new(f);
    write_checkpoint(&mut w, cfg, params)?;
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn load_checkpoint(path: &Path) -> Result<(ModelConfig, Parameters)> {
    let f = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    read_checkpoint(std::io::BufReader::new(f))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::AblationCase;

    #[test]
    fn round_trip_is_bit_exact() {
        for case in AblationCase::ALL {
            let cfg = ModelConfig {
                tau: 0.1 + 1e-17,
                alpha_x: 1.0 / 3.0,
                ..ModelConfig::tiny().with_case(case)
            };
            let mut p = init_parameters(&cfg).unwrap();
            for v in p.values_mut() {
                for x in v.data_mut() {
                    *x = *x * std::f64::consts::PI + 1e-300;
                }
            }
            let mut buf = Vec::new();
            write_checkpoint(&mut buf, &cfg, &p).unwrap();
            let (cfg2, p2) = read_checkpoint(&buf[..]).unwrap();
            assert_eq!(cfg, cfg2);
            for ((n1, a), (n2, b)) in p.entries().into_iter().zip(p2.entries()) {
                assert_eq!(n1, n2);
                assert_eq!(a.shape(), b.shape());
                assert!(a.data().iter().zip(b.data()).all(|(x, y)| x.to_bits() == y.to_bits()));
            }
        }
    }

    #[test]
    fn corrupt_input_is_rejected() {
        let cfg = ModelConfig::tiny();
        let p = init_parameters(&cfg).unwrap();
        let mut buf = Vec::new();
        write_checkpoint(&mut buf, &cfg, &p).unwrap();
        assert!(matches!(read_checkpoint(&buf[..buf.len() - 3]), Err(Error::Checkpoint(_))));
        let mut wrong = buf.clone();
        wrong[0] = 99;
        assert!(matches!(read_checkpoint(&wrong[..]), Err(Error::Checkpoint(_))));
        let mut extra = buf.clone();
        extra.push(0);
        assert!(matches!(read_checkpoint(&extra[..]), Err(Error::Checkpoint(_))));
    }

    #[test]
    fn mismatched_structure_is_rejected() {
        let cfg = ModelConfig::tiny();
        let p = init_parameters(&cfg.clone().with_case(AblationCase::TrendOnly)).unwrap();
        let mut buf = Vec::new();
        assert!(write_checkpoint(&mut buf, &cfg, &p).is_err());
    }
}
