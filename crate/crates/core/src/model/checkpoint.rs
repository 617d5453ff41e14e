//! Binary checkpoints.
//!
//! Layout (little endian): `b"SQCK"`, version `u8` (= 1), kind `u8`
//! (0 head, 1 alignnet), value width `u8` (= 8, f64), one reserved byte,
//! then the shape header, then every parameter group in declaration order.
//!
//! Head header: `D: u32, H: u32`.
//! AlignNet header: `D, H, E, H', n: u32` followed by `n` dataset ids, each
//! a `u32` byte length and UTF-8 bytes.

use std::fs;
use std::path::Path;

use super::{AlignNetParams, HeadParams, Model, ModelKind, Parameters};
use crate::error::{Error, Result};

pub const CHECKPOINT_MAGIC: &[u8; 4] = b"SQCK";
const VERSION: u8 = 1;
const VALUE_WIDTH: u8 = 8;

fn put_u32(out: &mut Vec<u8>, v: usize) {
    out.extend_from_slice(&(v as u32).to_le_bytes());
}

pub fn encode_params(model: &Model) -> Vec<u8> {
    let mut out = Vec::new();
    out.extend_from_slice(CHECKPOINT_MAGIC);
    let kind = match model {
        Model::Head(_) => 0u8,
        Model::AlignNet(_) => 1u8,
    };
    out.extend_from_slice(&[VERSION, kind, VALUE_WIDTH, 0]);
    match model {
        Model::Head(p) => {
            put_u32(&mut out, p.input_dim());
            put_u32(&mut out, p.hidden());
        }
        Model::AlignNet(p) => {
            for v in [p.input_dim(), p.hidden(), p.embed_dim(), p.decoder_hidden(), p.dataset_ids.len()] {
                put_u32(&mut out, v);
            }
            for id in &p.dataset_ids {
                put_u32(&mut out, id.len());
                out.extend_from_slice(id.as_bytes());
            }
        }
    }
    for (_, g) in model.groups() {
        for v in g {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    out
}

struct Cursor<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self
            .pos
            .checked_add(n)
            .filter(|&e| e <= self.buf.len())
            .ok_or_else(|| Error::Format("checkpoint truncated".into()))?;
        let s = &self.buf[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u32(&mut self) -> Result<usize> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()) as usize)
    }
}

pub fn decode_params(bytes: &[u8], expect: Option<ModelKind>) -> Result<Model> {
    let mut c = Cursor { buf: bytes, pos: 0 };
    if c.take(4).ok() != Some(CHECKPOINT_MAGIC.as_slice()) {
        return Err(Error::Format("not a checkpoint (bad magic)".into()));
    }
    let head = c.take(4)?;
    if head[0] != VERSION {
        return Err(Error::Format(format!("unsupported checkpoint version {}", head[0])));
    }
    if head[2] != VALUE_WIDTH {
        return Err(Error::Format(format!("unsupported value width {}", head[2])));
    }
    let kind = match head[1] {
        0 => ModelKind::Head,
        1 => ModelKind::AlignNet,
        k => return Err(Error::Format(format!("unknown model kind tag {k}"))),
    };
    if let Some(e) = expect {
        if e != kind {
            return Err(Error::Format(format!("checkpoint holds a {kind} model, expected {e}")));
        }
    }
    let mut model = match kind {
        ModelKind::Head => {
            let (d, h) = (c.u32()?, c.u32()?);
            Model::Head(HeadParams::zeros(d, h))
        }
        ModelKind::AlignNet => {
            let (d, h, e, h2, n) = (c.u32()?, c.u32()?, c.u32()?, c.u32()?, c.u32()?);
            let mut ids = Vec::with_capacity(n.min(1 << 16));
            for _ in 0..n {
                let len = c.u32()?;
                let s = std::str::from_utf8(c.take(len)?)
                    .map_err(|_| Error::Format("dataset id is not UTF-8".into()))?;
                ids.push(s.to_string());
            }
            Model::AlignNet(AlignNetParams::zeros(d, h, ids, e, h2))
        }
    };
    let expected = model.num_params() * 8;
    if bytes.len() - c.pos != expected {
        return Err(Error::Format(format!(
            "checkpoint payload is {} bytes, shape implies {expected}",
            bytes.len() - c.pos
        )));
    }
    for (_, g) in model.groups_mut() {
        for v in g.iter_mut() {
            *v = f64::from_le_bytes(c.take(8)?.try_into().unwrap());
        }
    }
    Ok(model)
}

pub fn save_params(model: &Model, path: &Path) -> Result<()> {
    fs::write(path, encode_params(model)).map_err(|e| Error::io(path, e))
}

pub fn load_params(path: &Path, expect: Option<ModelKind>) -> Result<Model> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_params(&bytes, expect).map_err(|e| match e {
        Error::Format(m) => Error::Format(format!("{}: {m}", path.display())),
        other => other,
    })
}
