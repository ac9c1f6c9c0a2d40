//! Binary checkpoint container.
//!
//! ```text
//! magic    8 bytes  "HWGATCKP"
//! version  u32 LE
//! hlen     u64 LE   length of the JSON header
//! header   hlen bytes of UTF-8 JSON: kind, dtype, model config, tensor
//!          table (name, shape, element offset), optional training state
//! data     raw little-endian f32 values, tensors back to back
//! digest   32 bytes SHA-256 of everything above
//! ```
//!
//! Files are written to a temporary sibling and renamed into place. Loading
//! validates the digest and every shape before anything is returned.

use std::io::Write;
use std::path::Path;

use ndarray::{ArrayViewD, ArrayViewMutD};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::optim::{AdamW, AdamWConfig};
use super::schedule::LrSchedule;
use super::TrainConfig;
use crate::error::{Error, Result};
use crate::network::{Model, ModelConfig};
use crate::real::Real;

pub const MAGIC: &[u8; 8] = b"HWGATCKP";
pub const VERSION: u32 = 1;
const DIGEST_LEN: usize = 32;

/// Serialises an `f64` through its bit pattern so infinities survive JSON.
pub(crate) mod f64_bits {
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(v: &f64, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_u64(v.to_bits())
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<f64, D::Error> {
        u64::deserialize(d).map(f64::from_bits)
    }
}

/// Training progress stored alongside the optimiser moments.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainMeta {
    /// Completed epochs.
    pub epoch: usize,
    #[serde(with = "f64_bits")]
    pub best_val_loss: f64,
    pub best_epoch: usize,
    pub epochs_since_improvement: usize,
    pub schedule: LrSchedule,
    pub adam: AdamWConfig,
    pub adam_step: u64,
    pub config: TrainConfig,
}

#[derive(Debug, Serialize, Deserialize)]
struct TensorEntry {
    name: String,
    shape: Vec<usize>,
    offset: usize,
}

#[derive(Debug, Serialize, Deserialize)]
struct Header {
    kind: String,
    dtype: String,
    model: ModelConfig,
    tensors: Vec<TensorEntry>,
    train: Option<TrainMeta>,
}

#[derive(Debug, Clone)]
pub struct Checkpoint {
    pub model: Model<f32>,
    pub train: Option<(TrainMeta, AdamW<f32>)>,
}

fn collect<'a>(model: &'a Model<f32>, optimizer: Option<&'a AdamW<f32>>) -> Vec<(String, ArrayViewD<'a, f32>)> {
    let mut out = vec![("fourier".to_string(), model.fourier.view().into_dyn())];
    out.extend(model.params.tensors());
    if let Some(opt) = optimizer {
        out.extend(opt.m.tensors().into_iter().map(|(n, t)| (format!("adam.m.{n}"), t)));
        out.extend(opt.v.tensors().into_iter().map(|(n, t)| (format!("adam.v.{n}"), t)));
    }
    out
}

/// Writes a model, with optional training state, atomically to `path`.
pub fn save_checkpoint(path: &Path, model: &Model<f32>, train: Option<(&TrainMeta, &AdamW<f32>)>) -> Result<()> {
    let tensors = collect(model, train.map(|t| t.1));
    let mut offset = 0;
    let table = tensors
        .iter()
        .map(|(name, t)| {
            let e = TensorEntry {
                name: name.clone(),
                shape: t.shape().to_vec(),
                offset,
            };
            offset += t.len();
            e
        })
        .collect();
    let header = Header {
        kind: if train.is_some() { "train-state" } else { "model" }.into(),
        dtype: f32::DTYPE.into(),
        model: model.config.clone(),
        tensors: table,
        train: train.map(|(m, _)| m.clone()),
    };
    let json = serde_json::to_vec(&header).map_err(|e| Error::Checkpoint(e.to_string()))?;
    let mut buf = Vec::with_capacity(json.len() + offset * 4 + 64);
    buf.extend_from_slice(MAGIC);
    buf.extend_from_slice(&VERSION.to_le_bytes());
    buf.extend_from_slice(&(json.len() as u64).to_le_bytes());
    buf.extend_from_slice(&json);
    for (_, t) in &tensors {
        for v in t.iter() {
            v.write_le(&mut buf);
        }
    }
    let digest = Sha256::digest(&buf);
    buf.extend_from_slice(digest.as_slice());

    let tmp = path.with_extension("tmp");
    let write = || -> std::io::Result<()> {
        let mut f = std::fs::File::create(&tmp)?;
        f.write_all(&buf)?;
        f.sync_all()?;
        std::fs::rename(&tmp, path)
    };
    write().map_err(|e| Error::io(path, e))
}

fn fill(dst: &mut [(String, ArrayViewMutD<'_, f32>)], prefix: &str, table: &[TensorEntry], data: &[u8]) -> Result<()> {
    for (name, t) in dst.iter_mut() {
        let full = format!("{prefix}{name}");
        let e = table
            .iter()
            .find(|e| e.name == full)
            .ok_or_else(|| Error::Checkpoint(format!("missing tensor {full}")))?;
        if e.shape != t.shape() {
            return Err(Error::Checkpoint(format!(
                "tensor {full} has shape {:?}, expected {:?}",
                e.shape,
                t.shape()
            )));
        }
        let start = e.offset * f32::BYTES;
        let end = start + t.len() * f32::BYTES;
        let bytes = data
            .get(start..end)
            .ok_or_else(|| Error::Checkpoint(format!("tensor {full} runs past the data section")))?;
        for (v, chunk) in t.iter_mut().zip(bytes.chunks_exact(f32::BYTES)) {
            *v = f32::read_le(chunk);
        }
    }
    Ok(())
}

/// Reads and fully validates a checkpoint.
pub fn load_checkpoint(path: &Path) -> Result<Checkpoint> {
    let buf = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    let bad = |m: &str| Error::Checkpoint(format!("{}: {m}", path.display()));
    if buf.len() < MAGIC.len() + 12 + DIGEST_LEN || &buf[..8] != MAGIC {
        return Err(bad("not a checkpoint file"));
    }
    let (body, digest) = buf.split_at(buf.len() - DIGEST_LEN);
    if Sha256::digest(body).as_slice() != digest {
        return Err(bad("checksum mismatch"));
    }
    let version = u32::from_le_bytes(body[8..12].try_into().expect("4 bytes"));
    if version != VERSION {
        return Err(bad(&format!("unsupported version {version}")));
    }
    let hlen = u64::from_le_bytes(body[12..20].try_into().expect("8 bytes")) as usize;
    let json = body.get(20..20 + hlen).ok_or_else(|| bad("truncated header"))?;
    let header: Header = serde_json::from_slice(json).map_err(|e| bad(&e.to_string()))?;
    if header.dtype != f32::DTYPE {
        return Err(bad(&format!("unsupported dtype {}", header.dtype)));
    }
    let data = &body[20 + hlen..];
    let expected: usize = header.tensors.iter().map(|e| e.shape.iter().product::<usize>()).sum();
    if expected * f32::BYTES != data.len() {
        return Err(bad("data section size does not match the tensor table"));
    }

    let template = Model::<f32>::new(header.model.clone())?;
    let mut fourier = template.fourier.clone();
    let mut params = template.params.clone();
    fill(&mut [("fourier".into(), fourier.view_mut().into_dyn())], "", &header.tensors, data)?;
    fill(&mut params.tensors_mut(), "", &header.tensors, data)?;
    let model = Model::from_parts(header.model.clone(), fourier, params)?;
    let train = match header.train {
        None => None,
        Some(meta) => {
            let mut opt = AdamW::new(meta.adam, &model.params);
            opt.step = meta.adam_step;
            fill(&mut opt.m.tensors_mut(), "adam.m.", &header.tensors, data)?;
            fill(&mut opt.v.tensors_mut(), "adam.v.", &header.tensors, data)?;
            Some((meta, opt))
        }
    };
    Ok(Checkpoint { model, train })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::network::EdgeBias;

    #[test]
    fn model_round_trip_is_bit_exact() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.ckpt");
        let mut cfg = ModelConfig::toy(5);
        cfg.edge_bias = EdgeBias::Learnable;
        cfg.seed = 9;
        let model = Model::<f32>::new(cfg).unwrap();
        save_checkpoint(&path, &model, None).unwrap();
        let back = load_checkpoint(&path).unwrap();
        assert!(back.train.is_none());
        assert_eq!(back.model.config, model.config);
        for ((n, a), (_, b)) in model.params.tensors().iter().zip(back.model.params.tensors().iter()) {
            assert!(a.iter().zip(b.iter()).all(|(x, y)| x.to_bits() == y.to_bits()), "{n}");
        }
        assert_eq!(back.model.fourier, model.fourier);
    }

    #[test]
    fn corruption_is_detected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.ckpt");
        let model = Model::<f32>::new(ModelConfig::toy(3)).unwrap();
        save_checkpoint(&path, &model, None).unwrap();
        let mut bytes = std::fs::read(&path).unwrap();
        let k = bytes.len() / 2;
        bytes[k] ^= 0x40;
        std::fs::write(&path, &bytes).unwrap();
        let err = load_checkpoint(&path).unwrap_err();
        assert!(err.to_string().contains("checksum"));
        std::fs::write(&path, &bytes[..100]).unwrap();
        assert!(load_checkpoint(&path).is_err());
    }

    #[test]
    fn training_state_floats_round_trip_exactly() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("s.ckpt");
        let model = Model::<f32>::new(ModelConfig::toy(3)).unwrap();
        let cfg = TrainConfig::default();
        let mut schedule = LrSchedule::new(cfg.schedule()).unwrap();
        // parses one ulp off without exact float round trips
        let awkward = 1.505_870_342_254_638_7;
        schedule.observe(awkward);
        let meta = TrainMeta {
            epoch: 3,
            best_val_loss: awkward,
            best_epoch: 3,
            epochs_since_improvement: 0,
            schedule,
            adam: cfg.adamw(),
            adam_step: 3,
            config: cfg.clone(),
        };
        let opt = AdamW::new(cfg.adamw(), &model.params);
        save_checkpoint(&path, &model, Some((&meta, &opt))).unwrap();
        let (back, _) = load_checkpoint(&path).unwrap().train.unwrap();
        assert_eq!(back.best_val_loss.to_bits(), awkward.to_bits());
        assert_eq!(back.schedule, meta.schedule);
        assert_eq!(back.config, cfg);
    }
}
