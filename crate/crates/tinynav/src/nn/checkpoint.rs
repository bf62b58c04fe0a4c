//! Versioned binary checkpoints: named parameter table plus optimizer state.

use super::optim::{AdamW, AdamWConfig, ParamEntry, ParamStore};
use super::NnError;
use std::io::{Read, Write};
use std::path::Path;

const MAGIC: &[u8; 4] = b"TNCK";
const VERSION: u16 = 1;

fn push_f32_slice(out: &mut Vec<u8>, values: &[f64]) {
    for &v in values {
        out.extend_from_slice(&(v as f32).to_le_bytes());
    }
}

/// Serializes a parameter store and (optionally) optimizer state.
/// Parameter data is stored as f32.
pub fn encode_checkpoint(store: &ParamStore, optimizer: Option<&AdamW>) -> Vec<u8> {
    let mut out = Vec::new();
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    out.extend_from_slice(&(store.len() as u32).to_le_bytes());
    for e in store.entries() {
        out.extend_from_slice(&(e.name.len() as u16).to_le_bytes());
        out.extend_from_slice(e.name.as_bytes());
        out.extend_from_slice(&(e.rows as u32).to_le_bytes());
        out.extend_from_slice(&(e.cols as u32).to_le_bytes());
        push_f32_slice(&mut out, &e.value);
    }
    match optimizer {
        None => out.push(0),
        Some(opt) => {
            out.push(1);
            out.extend_from_slice(&opt.step.to_le_bytes());
            out.extend_from_slice(&opt.cfg.base_lr.to_le_bytes());
            out.extend_from_slice(&opt.cfg.beta1.to_le_bytes());
            out.extend_from_slice(&opt.cfg.beta2.to_le_bytes());
            out.extend_from_slice(&opt.cfg.eps.to_le_bytes());
            out.extend_from_slice(&opt.cfg.weight_decay.to_le_bytes());
            out.extend_from_slice(&opt.cfg.total_steps.to_le_bytes());
            for (m, v) in opt.m.iter().zip(&opt.v) {
                push_f32_slice(&mut out, m);
                push_f32_slice(&mut out, v);
            }
        }
    }
    out
}

struct Reader<'a> {
    bytes: &'a [u8],
    offset: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, len: usize, what: &str) -> Result<&'a [u8], NnError> {
        if self.offset + len > self.bytes.len() {
            return Err(NnError::MalformedCheckpoint {
                reason: format!("truncated while reading {what}"),
                offset: self.offset,
            });
        }
        let s = &self.bytes[self.offset..self.offset + len];
        self.offset += len;
        Ok(s)
    }

    fn u16(&mut self, what: &str) -> Result<u16, NnError> {
        Ok(u16::from_le_bytes(self.take(2, what)?.try_into().unwrap()))
    }

    fn u32(&mut self, what: &str) -> Result<u32, NnError> {
        Ok(u32::from_le_bytes(self.take(4, what)?.try_into().unwrap()))
    }

    fn u64(&mut self, what: &str) -> Result<u64, NnError> {
        Ok(u64::from_le_bytes(self.take(8, what)?.try_into().unwrap()))
    }

    fn f64(&mut self, what: &str) -> Result<f64, NnError> {
        Ok(f64::from_le_bytes(self.take(8, what)?.try_into().unwrap()))
    }

    fn f32_vec(&mut self, n: usize, what: &str) -> Result<Vec<f64>, NnError> {
        let raw = self.take(4 * n, what)?;
        Ok(raw
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().unwrap()) as f64)
            .collect())
    }
}

/// Parses a checkpoint into a parameter store and optional optimizer state.
pub fn decode_checkpoint(bytes: &[u8]) -> Result<(ParamStore, Option<AdamW>), NnError> {
    let mut r = Reader { bytes, offset: 0 };
    if r.take(4, "magic")? != MAGIC {
        return Err(NnError::MalformedCheckpoint {
            reason: "bad magic bytes".into(),
            offset: 0,
        });
    }
    let version = r.u16("version")?;
    if version != VERSION {
        return Err(NnError::MalformedCheckpoint {
            reason: format!("unsupported version {version}"),
            offset: 4,
        });
    }
    let n_params = r.u32("param count")? as usize;
    let mut store = ParamStore::new();
    for _ in 0..n_params {
        let name_len = r.u16("name length")? as usize;
        let name = String::from_utf8(r.take(name_len, "name")?.to_vec()).map_err(|_| {
            NnError::MalformedCheckpoint {
                reason: "parameter name is not utf-8".into(),
                offset: r.offset,
            }
        })?;
        let rows = r.u32("rows")? as usize;
        let cols = r.u32("cols")? as usize;
        let value = r.f32_vec(rows * cols, "parameter data")?;
        store.register(&name, rows, cols, value);
    }
    let has_opt = r.take(1, "optimizer flag")?[0];
    let optimizer = if has_opt == 1 {
        let step = r.u64("step")?;
        let cfg = AdamWConfig {
            base_lr: r.f64("base lr")?,
            beta1: r.f64("beta1")?,
            beta2: r.f64("beta2")?,
            eps: r.f64("eps")?,
            weight_decay: r.f64("weight decay")?,
            total_steps: r.u64("total steps")?,
        };
        let mut opt = AdamW::new(cfg, &store);
        opt.step = step;
        for i in 0..store.len() {
            let n = store.entries()[i].value.len();
            opt.m[i] = r.f32_vec(n, "first moment")?;
            opt.v[i] = r.f32_vec(n, "second moment")?;
        }
        Some(opt)
    } else {
        None
    };
    if r.offset != bytes.len() {
        return Err(NnError::MalformedCheckpoint {
            reason: "trailing bytes".into(),
            offset: r.offset,
        });
    }
    Ok((store, optimizer))
}

pub fn save_checkpoint(
    path: &Path,
    store: &ParamStore,
    optimizer: Option<&AdamW>,
) -> Result<(), NnError> {
    let bytes = encode_checkpoint(store, optimizer);
    let mut f = std::fs::File::create(path)?;
    f.write_all(&bytes)?;
    Ok(())
}

pub fn load_checkpoint(path: &Path) -> Result<(ParamStore, Option<AdamW>), NnError> {
    let mut bytes = Vec::new();
    std::fs::File::open(path)?.read_to_end(&mut bytes)?;
    decode_checkpoint(&bytes)
}

/// Keeps a store's parameter names/shapes but replaces values from another
/// store (used when loading into a freshly built model).
pub fn copy_values(dst: &mut ParamStore, src: &ParamStore) -> Result<(), NnError> {
    if dst.len() != src.len() {
        return Err(NnError::MalformedCheckpoint {
            reason: format!(
                "parameter count mismatch: model has {}, checkpoint has {}",
                dst.len(),
                src.len()
            ),
            offset: 0,
        });
    }
    for i in 0..src.len() {
        let (s, d): (&ParamEntry, &ParamEntry) = (&src.entries()[i], &dst.entries()[i]);
        if s.name != d.name || s.rows != d.rows || s.cols != d.cols {
            return Err(NnError::MalformedCheckpoint {
                reason: format!("parameter {} does not match model layout", s.name),
                offset: 0,
            });
        }
        let value = s.value.clone();
        *dst.value_mut(super::optim::ParamId(i)) = value;
    }
    Ok(())
}
