//! Binary checkpoint: model config, run metadata, named tensors and optional
//! Adam moments. Layout is documented in `docs/FORMATS.md`.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{Model, ModelConfig};
use crate::error::{Error, Result};
use crate::numerics::{Adam, DType, ParamId, ParamStore, Scalar, Tensor};

pub const CHECKPOINT_MAGIC: &[u8; 4] = b"SWCK";
pub const CHECKPOINT_VERSION: u8 = 1;

const MOMENT_PREFIX: [&str; 2] = ["optim.m.", "optim.v."];

/// Training progress stored alongside the weights.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(default)]
pub struct CheckpointMeta {
    /// Number of completed stages.
    pub stage: usize,
    /// Iterations completed so far, per task id.
    pub completed: BTreeMap<u16, u64>,
    pub global_step: u64,
    pub adam_step: u64,
    pub seed: u64,
}

/// Adam step and per-parameter `(m, v)` moments.
pub type OptimizerState<T> = (u64, Vec<Option<(Tensor<T>, Tensor<T>)>>);

/// Loaded checkpoint contents.
#[derive(Debug, Clone)]
pub struct Checkpoint<T> {
    pub model: Model<T>,
    pub meta: CheckpointMeta,
    /// Adam step and per-parameter moments, when saved with an optimizer.
    pub optimizer: Option<OptimizerState<T>>,
}

impl<T: Scalar> Checkpoint<T> {
    /// Restores the saved moments into `adam`; resets it when none were saved.
    pub fn restore_optimizer(&self, adam: &mut Adam<T>) {
        match &self.optimizer {
            Some((step, moments)) => adam.restore(*step, moments.clone()),
            None => adam.reset(),
        }
    }
}

pub fn checkpoint_bytes<T: Scalar>(model: &Model<T>, adam: Option<&Adam<T>>, meta: &CheckpointMeta) -> Result<Vec<u8>> {
    let mut out = Vec::new();
    out.extend_from_slice(CHECKPOINT_MAGIC);
    out.push(CHECKPOINT_VERSION);
    out.push(T::DTYPE.code());
    let mut meta = meta.clone();
    if let Some(adam) = adam {
        meta.adam_step = adam.step_count();
    }
    for json in [serde_json::to_vec(model.config())?, serde_json::to_vec(&meta)?] {
        out.extend_from_slice(&(json.len() as u32).to_le_bytes());
        out.extend_from_slice(&json);
    }
    let params = model.params();
    let mut tensors: Vec<(String, &Tensor<T>)> = params.iter().map(|(_, name, t)| (name.to_string(), t)).collect();
    if let Some(adam) = adam {
        for (id, name, _) in params.iter() {
            if let Some((m, v)) = adam.moments(id) {
                tensors.push((format!("{}{name}", MOMENT_PREFIX[0]), m));
                tensors.push((format!("{}{name}", MOMENT_PREFIX[1]), v));
            }
        }
    }
    out.extend_from_slice(&(tensors.len() as u32).to_le_bytes());
    for (name, t) in tensors {
        out.extend_from_slice(&(name.len() as u16).to_le_bytes());
        out.extend_from_slice(name.as_bytes());
        out.push(t.shape().len() as u8);
        for &d in t.shape() {
            out.extend_from_slice(&(d as u32).to_le_bytes());
        }
        for &x in t.data() {
            x.write_le(&mut out);
        }
    }
    Ok(out)
}

pub fn save_checkpoint<T: Scalar>(
    path: impl AsRef<Path>,
    model: &Model<T>,
    adam: Option<&Adam<T>>,
    meta: &CheckpointMeta,
) -> Result<()> {
    let path = path.as_ref();
    let bytes = checkpoint_bytes(model, adam, meta)?;
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self
            .pos
            .checked_add(n)
            .filter(|&e| e <= self.bytes.len())
            .ok_or_else(|| Error::Checkpoint("truncated file".into()))?;
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u8(&mut self) -> Result<u8> {
        Ok(self.take(1)?[0])
    }

    fn u16(&mut self) -> Result<u16> {
        Ok(u16::from_le_bytes(self.take(2)?.try_into().unwrap()))
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }
}

pub fn parse_checkpoint<T: Scalar>(bytes: &[u8]) -> Result<Checkpoint<T>> {
    let mut r = Reader { bytes, pos: 0 };
    if r.take(4)? != CHECKPOINT_MAGIC {
        return Err(Error::Checkpoint("bad magic".into()));
    }
    let version = r.u8()?;
    if version != CHECKPOINT_VERSION {
        return Err(Error::Checkpoint(format!("unsupported version {version}")));
    }
    let dtype = r.u8()?;
    if DType::from_code(dtype) != Some(T::DTYPE) {
        return Err(Error::Checkpoint(format!(
            "dtype code {dtype} does not match requested {:?}",
            T::DTYPE
        )));
    }
    let n = r.u32()? as usize;
    let config: ModelConfig = serde_json::from_slice(r.take(n)?)?;
    let n = r.u32()? as usize;
    let meta: CheckpointMeta = serde_json::from_slice(r.take(n)?)?;

    let count = r.u32()? as usize;
    let mut params = ParamStore::new();
    let mut moments: BTreeMap<String, [Option<Tensor<T>>; 2]> = BTreeMap::new();
    for _ in 0..count {
        let len = r.u16()? as usize;
        let name = std::str::from_utf8(r.take(len)?)
            .map_err(|_| Error::Checkpoint("tensor name is not UTF-8".into()))?
            .to_string();
        let rank = r.u8()? as usize;
        let mut shape = Vec::with_capacity(rank);
        for _ in 0..rank {
            shape.push(r.u32()? as usize);
        }
        let numel: usize = shape.iter().product();
        let raw = r.take(numel * T::BYTES)?;
        let data = raw.chunks_exact(T::BYTES).map(T::read_le).collect();
        let t = Tensor::new(shape, data).map_err(|e| Error::Checkpoint(e.to_string()))?;
        if let Some(k) = MOMENT_PREFIX.iter().position(|p| name.starts_with(p)) {
            let base = name[MOMENT_PREFIX[k].len()..].to_string();
            moments.entry(base).or_default()[k] = Some(t);
        } else {
            params.insert(&name, t).map_err(|e| Error::Checkpoint(e.to_string()))?;
        }
    }
    if r.pos != bytes.len() {
        return Err(Error::Checkpoint("trailing bytes".into()));
    }

    let optimizer = if moments.is_empty() {
        None
    } else {
        let mut slots: Vec<Option<(Tensor<T>, Tensor<T>)>> = vec![None; params.len()];
        for (name, [m, v]) in moments {
            let id: ParamId = params
                .id(&name)
                .ok_or_else(|| Error::Checkpoint(format!("moments for unknown tensor `{name}`")))?;
            match (m, v) {
                (Some(m), Some(v)) => slots[id.0] = Some((m, v)),
                _ => return Err(Error::Checkpoint(format!("incomplete moments for `{name}`"))),
            }
        }
        Some((meta.adam_step, slots))
    };
    let model = Model::from_params(config, params)?;
    Ok(Checkpoint { model, meta, optimizer })
}

pub fn load_checkpoint<T: Scalar>(path: impl AsRef<Path>) -> Result<Checkpoint<T>> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    parse_checkpoint(&bytes)
}

/// Loads a checkpoint and checks its architecture against `expected`.
pub fn load_checkpoint_for<T: Scalar>(path: impl AsRef<Path>, expected: &ModelConfig) -> Result<Checkpoint<T>> {
    let ck = load_checkpoint(path)?;
    if let Some(diff) = ck.model.config().architecture_mismatch(expected) {
        return Err(Error::ConfigMismatch(diff));
    }
    Ok(ck)
}
