use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::adam::AdamConfig;
use crate::autodiff::{ParamSet, Tensor};
use crate::data::Normalizer;
use crate::error::{Error, Result};
use crate::models::{Hyperparams, Model, ModelKind, TimeScale};

pub const CHECKPOINT_MAGIC: [u8; 4] = *b"BDTC";
pub const CHECKPOINT_VERSION: u32 = 1;

/// Everything besides the tensors that a checkpoint records.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CheckpointMeta {
    pub kind: ModelKind,
    pub hyperparams: Hyperparams,
    pub seed: u64,
    pub epochs_completed: usize,
    pub pretrain_losses: Vec<f64>,
    pub train_losses: Vec<f64>,
    pub validation_losses: Vec<f64>,
    pub normalizer: Option<Normalizer>,
    pub time_scale: Option<TimeScale>,
    pub optimizer: AdamConfig,
    pub clip_norm: f64,
}

impl CheckpointMeta {
    /// Metadata for a freshly built model with no training history.
    pub fn for_model(model: &Model) -> Self {
        let hp = model.hyperparams().clone();
        CheckpointMeta {
            kind: model.kind(),
            seed: hp.seed,
            optimizer: AdamConfig {
                learning_rate: hp.learning_rate,
                ..AdamConfig::default()
            },
            hyperparams: hp,
            epochs_completed: 0,
            pretrain_losses: Vec::new(),
            train_losses: Vec::new(),
            validation_losses: Vec::new(),
            normalizer: None,
            time_scale: None,
            clip_norm: 5.0,
        }
    }
}

fn put_u32(out: &mut Vec<u8>, v: u32) {
    out.extend_from_slice(&v.to_le_bytes());
}

/// Serialize to the binary checkpoint layout.
pub fn encode_checkpoint(model: &Model, meta: &CheckpointMeta) -> Result<Vec<u8>> {
    let mut out = Vec::new();
    out.extend_from_slice(&CHECKPOINT_MAGIC);
    put_u32(&mut out, CHECKPOINT_VERSION);
    let json = serde_json::to_vec(meta)?;
    put_u32(&mut out, json.len() as u32);
    out.extend_from_slice(&json);
    put_u32(&mut out, model.params().len() as u32);
    for (_, name, tensor) in model.params().iter() {
        let name = name.as_bytes();
        let name_len = u16::try_from(name.len())
            .map_err(|_| Error::Format(format!("tensor name of {} bytes is too long", name.len())))?;
        out.extend_from_slice(&name_len.to_le_bytes());
        out.extend_from_slice(name);
        out.push(tensor.rank() as u8);
        for &e in tensor.shape() {
            out.extend_from_slice(&(e as u64).to_le_bytes());
        }
        for &v in tensor.data() {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    let crc = crc32fast::hash(&out[CHECKPOINT_MAGIC.len()..]);
    put_u32(&mut out, crc);
    Ok(out)
}

/// Bounds-checked little-endian reader; running out of bytes is corruption.
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
            .ok_or_else(|| Error::Corruption("checkpoint payload is truncated".into()))?;
        let out = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(out)
    }

    fn u8(&mut self) -> Result<u8> {
        Ok(self.take(1)?[0])
    }

    fn u16(&mut self) -> Result<u16> {
        Ok(u16::from_le_bytes(self.take(2)?.try_into().expect("2 bytes")))
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")))
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }
}

/// Parse and verify a checkpoint, rebuilding the model from its metadata.
/// Nothing is returned unless the whole file checks out.
pub fn decode_checkpoint(bytes: &[u8]) -> Result<(Model, CheckpointMeta)> {
    if bytes.len() < 4 || bytes[..4] != CHECKPOINT_MAGIC {
        return Err(Error::Format("missing BDTC magic".into()));
    }
    if bytes.len() < 12 {
        return Err(Error::Corruption("checkpoint payload is truncated".into()));
    }
    let version = u32::from_le_bytes(bytes[4..8].try_into().expect("4 bytes"));
    if version != CHECKPOINT_VERSION {
        return Err(Error::Version(version));
    }
    let (body, crc) = bytes.split_at(bytes.len() - 4);
    let stored = u32::from_le_bytes(crc.try_into().expect("4 bytes"));
    let actual = crc32fast::hash(&body[4..]);
    if stored != actual {
        return Err(Error::Corruption(format!(
            "checksum mismatch: stored {stored:08x}, computed {actual:08x}"
        )));
    }

    let mut r = Reader { bytes: body, pos: 8 };
    let meta_len = r.u32()? as usize;
    let meta: CheckpointMeta = serde_json::from_slice(r.take(meta_len)?)
        .map_err(|e| Error::Corruption(format!("metadata: {e}")))?;
    let count = r.u32()? as usize;
    let mut tensors = Vec::with_capacity(count.min(1 << 16));
    for _ in 0..count {
        let name_len = r.u16()? as usize;
        let name = std::str::from_utf8(r.take(name_len)?)
            .map_err(|_| Error::Corruption("tensor name is not UTF-8".into()))?
            .to_string();
        let rank = r.u8()? as usize;
        let shape = (0..rank)
            .map(|_| r.u64().map(|e| e as usize))
            .collect::<Result<Vec<_>>>()?;
        let len = shape
            .iter()
            .try_fold(1usize, |acc, &e| acc.checked_mul(e))
            .ok_or_else(|| Error::Corruption(format!("tensor {name} extents overflow")))?;
        let payload = r.take(len.checked_mul(8).ok_or_else(|| Error::Corruption("tensor too large".into()))?)?;
        let data = payload
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
            .collect();
        let tensor = Tensor::new(shape, data).map_err(|e| Error::Corruption(format!("tensor {name}: {e}")))?;
        tensors.push((name, tensor));
    }
    if r.pos != body.len() {
        return Err(Error::Corruption(format!(
            "{} trailing bytes after the last tensor",
            body.len() - r.pos
        )));
    }

    let mut model = Model::new(meta.kind, meta.hyperparams.clone())?;
    restore_params(model.params_mut(), tensors)?;
    Ok((model, meta))
}

fn restore_params(params: &mut ParamSet, tensors: Vec<(String, Tensor)>) -> Result<()> {
    if tensors.len() != params.len() {
        return Err(Error::Corruption(format!(
            "checkpoint holds {} tensors, model expects {}",
            tensors.len(),
            params.len()
        )));
    }
    let mut staged = params.clone();
    for (name, tensor) in tensors {
        let id = staged
            .find(&name)
            .ok_or_else(|| Error::Corruption(format!("unexpected tensor {name}")))?;
        staged
            .set(id, tensor)
            .map_err(|e| Error::Corruption(format!("tensor {name}: {e}")))?;
    }
    *params = staged;
    Ok(())
}

/// Write a checkpoint, going through a temporary file so readers never see a
/// partial write.
pub fn save_checkpoint(model: &Model, meta: &CheckpointMeta, path: &Path) -> Result<()> {
    let bytes = encode_checkpoint(model, meta)?;
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir)?;
    }
    let tmp = path.with_extension("tmp");
    fs::write(&tmp, &bytes)?;
    fs::rename(&tmp, path)?;
    Ok(())
}

pub fn load_checkpoint(path: &Path) -> Result<(Model, CheckpointMeta)> {
    decode_checkpoint(&fs::read(path)?)
}
