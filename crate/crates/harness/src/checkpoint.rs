//! Checkpoint container.
//!
//! Layout (little-endian): magic `SSCK`, `u32` config length, config text,
//! `u32` parameter count, then per parameter a `u32` name length, the name and
//! one serialized tensor. Parameters are stored in id order.

use std::path::Path;

use scribble_autodiff::serialize::{read_tensor, write_tensor};
use scribble_core::params::ParamSet;

use crate::config::TrainConfig;
use crate::error::{format_err, io_err, Result};

pub const MAGIC: &[u8; 4] = b"SSCK";

#[derive(Debug, Clone)]
pub struct Checkpoint {
    pub config: TrainConfig,
    pub params: ParamSet,
}

fn put_str(buf: &mut Vec<u8>, s: &str) -> Result<()> {
    let n = u32::try_from(s.len()).map_err(|_| format_err("string too long for checkpoint"))?;
    buf.extend_from_slice(&n.to_le_bytes());
    buf.extend_from_slice(s.as_bytes());
    Ok(())
}

fn take<'a>(input: &mut &'a [u8], n: usize) -> Result<&'a [u8]> {
    if input.len() < n {
        return Err(format_err("truncated checkpoint"));
    }
    let (head, tail) = input.split_at(n);
    *input = tail;
    Ok(head)
}

fn take_u32(input: &mut &[u8]) -> Result<usize> {
    Ok(u32::from_le_bytes(take(input, 4)?.try_into().unwrap()) as usize)
}

fn take_str(input: &mut &[u8]) -> Result<String> {
    let n = take_u32(input)?;
    String::from_utf8(take(input, n)?.to_vec()).map_err(|_| format_err("checkpoint string is not UTF-8"))
}

impl Checkpoint {
    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        let mut buf = MAGIC.to_vec();
        put_str(&mut buf, &self.config.to_text())?;
        let n = u32::try_from(self.params.len()).map_err(|_| format_err("too many parameters"))?;
        buf.extend_from_slice(&n.to_le_bytes());
        for (name, t) in self.params.iter() {
            put_str(&mut buf, name)?;
            write_tensor(t, &mut buf)?;
        }
        Ok(buf)
    }

    pub fn from_bytes(mut input: &[u8]) -> Result<Self> {
        if take(&mut input, 4)? != MAGIC {
            return Err(format_err("not a checkpoint (bad magic)"));
        }
        let config = TrainConfig::parse(&take_str(&mut input)?)?;
        let n = take_u32(&mut input)?;
        let mut params = ParamSet::new();
        for _ in 0..n {
            let name = take_str(&mut input)?;
            let t = read_tensor(&mut input)?;
            params.insert(name, t.shape(), t.to_vec())?;
        }
        if !input.is_empty() {
            return Err(format_err("trailing bytes after checkpoint"));
        }
        Ok(Self { config, params })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_bytes()?).map_err(io_err(path))
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_bytes(&std::fs::read(path).map_err(io_err(path))?)
    }
}
