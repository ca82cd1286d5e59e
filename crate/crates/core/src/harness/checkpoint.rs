use std::fs;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::config::RunConfig;
use super::metrics::MetricsRecord;
use crate::error::{Error, Result};
use crate::model::{EncoderState, ModelConfig};
use crate::tensor::{AdamState, ParamStore, Tensor};

const FORMAT: &str = "pert-checkpoint/1";

/// A training snapshot. Parameters, and the Adam moments when present, are
/// stored bit-exactly.
#[derive(Clone, Debug, PartialEq)]
pub struct Checkpoint {
    pub step: u64,
    pub state: EncoderState,
    pub run: Option<RunConfig>,
    pub adam: Option<AdamState>,
    /// Records up to and including `step`, so a resumed run rewrites the
    /// full metrics file.
    pub metrics: Vec<MetricsRecord>,
    /// Sum and count of training losses since the last metrics record.
    pub pending_loss: (f64, u64),
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct Manifest {
    format: String,
    step: u64,
    model: ModelConfig,
    run: Option<RunConfig>,
    adam: Option<AdamMeta>,
    /// Name of the array file, relative to the manifest.
    array_file: String,
    /// Values per section. Sections are `params`, then `adam_m` and
    /// `adam_v` when Adam state is present.
    section_len: usize,
    tensors: Vec<TensorEntry>,
    metrics: Vec<MetricsRecord>,
    #[serde(default)]
    pending_loss: (f64, u64),
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct AdamMeta {
    step: u64,
    beta1: f64,
    beta2: f64,
    epsilon: f64,
    weight_decay_rate: f64,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct TensorEntry {
    name: String,
    shape: Vec<usize>,
    decay: bool,
    /// Offset in values (not bytes) within each section.
    offset: usize,
}

/// Writes `<stem>.json` and `<stem>.f64` into `dir`; returns the manifest
/// path.
pub fn save_checkpoint(dir: &Path, stem: &str, ckpt: &Checkpoint) -> Result<PathBuf> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let array_file = format!("{stem}.f64");
    let mut tensors = Vec::new();
    let mut offset = 0;
    for p in ckpt.state.params.params() {
        tensors.push(TensorEntry {
            name: p.name.clone(),
            shape: p.value.shape().to_vec(),
            decay: p.decay,
            offset,
        });
        offset += p.value.numel();
    }
    let array_path = dir.join(&array_file);
    let file = fs::File::create(&array_path).map_err(|e| Error::io(&array_path, e))?;
    let mut w = BufWriter::new(file);
    let mut put = |values: &[f64]| -> std::io::Result<()> {
        for v in values {
            w.write_all(&v.to_le_bytes())?;
        }
        Ok(())
    };
    for p in ckpt.state.params.params() {
        put(p.value.data()).map_err(|e| Error::io(&array_path, e))?;
    }
    if let Some(adam) = &ckpt.adam {
        for section in [&adam.m, &adam.v] {
            for values in section {
                put(values).map_err(|e| Error::io(&array_path, e))?;
            }
        }
    }
    w.flush().map_err(|e| Error::io(&array_path, e))?;
    let manifest = Manifest {
        format: FORMAT.into(),
        step: ckpt.step,
        model: ckpt.state.config.clone(),
        run: ckpt.run.clone(),
        adam: ckpt.adam.as_ref().map(|a| AdamMeta {
            step: a.step,
            beta1: a.beta1,
            beta2: a.beta2,
            epsilon: a.epsilon,
            weight_decay_rate: a.weight_decay_rate,
        }),
        array_file,
        section_len: offset,
        tensors,
        metrics: ckpt.metrics.clone(),
        pending_loss: ckpt.pending_loss,
    };
    let path = dir.join(format!("{stem}.json"));
    let text = serde_json::to_string_pretty(&manifest).expect("manifest serializes");
    fs::write(&path, text + "\n").map_err(|e| Error::io(&path, e))?;
    Ok(path)
}

pub fn load_checkpoint(manifest_path: &Path) -> Result<Checkpoint> {
    let text = fs::read_to_string(manifest_path).map_err(|e| Error::io(manifest_path, e))?;
    let m: Manifest = crate::jsonl::parse_line(&text, 1)?;
    if m.format != FORMAT {
        return Err(Error::Data(format!("unsupported checkpoint format {:?}", m.format)));
    }
    let array_path = manifest_path.parent().unwrap_or(Path::new(".")).join(&m.array_file);
    let bytes = fs::read(&array_path).map_err(|e| Error::io(&array_path, e))?;
    let sections = if m.adam.is_some() { 3 } else { 1 };
    if bytes.len() != sections * m.section_len * 8 {
        return Err(Error::Data(format!(
            "{} holds {} bytes, manifest describes {}",
            array_path.display(),
            bytes.len(),
            sections * m.section_len * 8
        )));
    }
    let values: Vec<f64> = bytes
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
        .collect();
    let mut params = ParamStore::new();
    let mut expected = 0;
    for t in &m.tensors {
        let n: usize = t.shape.iter().product();
        if t.offset != expected || t.offset + n > m.section_len {
            return Err(Error::Data(format!("tensor {} has an inconsistent offset", t.name)));
        }
        expected += n;
        let value = Tensor::new(t.shape.clone(), values[t.offset..t.offset + n].to_vec())?;
        params.insert(t.name.clone(), value, t.decay);
    }
    if expected != m.section_len {
        return Err(Error::Data("tensor table does not cover the parameter section".into()));
    }
    let adam = m.adam.map(|meta| {
        let section = |s: usize| -> Vec<Vec<f64>> {
            let base = s * m.section_len;
            m.tensors
                .iter()
                .map(|t| {
                    let n: usize = t.shape.iter().product();
                    values[base + t.offset..base + t.offset + n].to_vec()
                })
                .collect()
        };
        AdamState {
            step: meta.step,
            beta1: meta.beta1,
            beta2: meta.beta2,
            epsilon: meta.epsilon,
            weight_decay_rate: meta.weight_decay_rate,
            m: section(1),
            v: section(2),
        }
    });
    let state = EncoderState {
        config: m.model,
        params,
    };
    Ok(Checkpoint {
        step: m.step,
        state,
        run: m.run,
        adam,
        metrics: m.metrics,
        pending_loss: m.pending_loss,
    })
}
