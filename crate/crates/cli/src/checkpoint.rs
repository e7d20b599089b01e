//! Model checkpoints.
//!
//! Layout: magic bytes `NFCK`, a u32 format version, a u32 header length,
//! a JSON header, then a payload of 32-bit little-endian reals. The header
//! records the model kind, its build config and seed, the epoch count, the
//! optimizer step, and a tensor table (name, shape, element offset,
//! element length). Table entries must tile the payload exactly, with no
//! gaps or overlaps; this is validated before any tensor is materialized.
//!
//! Networks are reconstructed by rebuilding from the stored config and
//! seed, then overwriting every parameter from the payload, so a loaded
//! model is bit-identical to the saved one. Adam moments ride along as
//! extra tensors named `adam.m.<param>` / `adam.v.<param>`.

use std::fs;
use std::path::Path;

use anyhow::{bail, Context, Result};
use photostereo_core::lcnet::{Lcnet, LcnetConfig};
use photostereo_core::optim::AdamState;
use photostereo_core::psfcn::{Psfcn, PsfcnConfig};
use photostereo_core::Tensor;
use serde::{Deserialize, Serialize};

const MAGIC: &[u8; 4] = b"NFCK";
const VERSION: u32 = 1;

#[derive(Serialize, Deserialize)]
struct TensorEntry {
    name: String,
    shape: Vec<usize>,
    offset: usize,
    len: usize,
}

#[derive(Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
enum ModelConfig {
    Psfcn(PsfcnConfig),
    Lcnet(LcnetConfig),
}

#[derive(Serialize, Deserialize)]
struct Header {
    config: ModelConfig,
    seed: u64,
    epoch: usize,
    adam_step: u64,
    tensors: Vec<TensorEntry>,
}

/// A checkpointed model with its training bookkeeping.
pub enum Model {
    Psfcn(Psfcn<f32>),
    Lcnet(Lcnet<f32>),
}

pub struct Checkpoint {
    pub model: Model,
    pub seed: u64,
    pub epoch: usize,
    /// Present when the file carries optimizer moments.
    pub adam: Option<AdamState<f32>>,
}

fn named_params(model: &Model) -> Vec<(String, Tensor<f32>)> {
    match model {
        Model::Psfcn(net) => net.params(),
        Model::Lcnet(net) => net.params(),
    }
}

pub fn save(
    path: &Path,
    model: &Model,
    seed: u64,
    epoch: usize,
    adam: Option<&AdamState<f32>>,
) -> Result<()> {
    let params = named_params(model);
    let mut tensors = Vec::new();
    let mut payload: Vec<f32> = Vec::new();
    let mut push = |name: String, shape: Vec<usize>, values: &[f32]| {
        tensors.push(TensorEntry { name, shape, offset: payload.len(), len: values.len() });
        payload.extend_from_slice(values);
    };
    for (name, t) in &params {
        push(name.clone(), t.shape().to_vec(), &t.to_vec());
    }
    let mut adam_step = 0;
    if let Some(state) = adam {
        adam_step = state.step_count();
        let (m, v) = state.moments();
        if m.len() != params.len() {
            bail!("optimizer tracks {} tensors but the model has {}", m.len(), params.len());
        }
        for ((name, t), values) in params.iter().zip(m) {
            push(format!("adam.m.{name}"), t.shape().to_vec(), values);
        }
        for ((name, t), values) in params.iter().zip(v) {
            push(format!("adam.v.{name}"), t.shape().to_vec(), values);
        }
    }
    let config = match model {
        Model::Psfcn(net) => ModelConfig::Psfcn(net.config),
        Model::Lcnet(net) => ModelConfig::Lcnet(net.config),
    };
    let header = Header { config, seed, epoch, adam_step, tensors };
    let header_json = serde_json::to_vec(&header)?;

    let mut bytes = Vec::with_capacity(12 + header_json.len() + payload.len() * 4);
    bytes.extend_from_slice(MAGIC);
    bytes.extend_from_slice(&VERSION.to_le_bytes());
    bytes.extend_from_slice(&u32::try_from(header_json.len())?.to_le_bytes());
    bytes.extend_from_slice(&header_json);
    for v in &payload {
        bytes.extend_from_slice(&v.to_le_bytes());
    }
    fs::write(path, bytes).with_context(|| format!("writing {}", path.display()))
}

fn read_u32(bytes: &[u8], at: usize) -> Result<u32> {
    let slice = bytes
        .get(at..at + 4)
        .with_context(|| format!("file truncated at byte {at}"))?;
    Ok(u32::from_le_bytes(slice.try_into().unwrap()))
}

pub fn load(path: &Path) -> Result<Checkpoint> {
    let bytes = fs::read(path).with_context(|| format!("reading {}", path.display()))?;
    parse(&bytes).with_context(|| format!("loading {}", path.display()))
}

fn parse(bytes: &[u8]) -> Result<Checkpoint> {
    if bytes.len() < 12 || &bytes[..4] != MAGIC {
        bail!("not a checkpoint file (bad magic)");
    }
    let version = read_u32(bytes, 4)?;
    if version != VERSION {
        bail!("unsupported checkpoint version {version}");
    }
    let header_len = read_u32(bytes, 8)? as usize;
    let header_end = 12usize
        .checked_add(header_len)
        .filter(|&e| e <= bytes.len())
        .with_context(|| format!("header length {header_len} exceeds the file"))?;
    let header: Header =
        serde_json::from_slice(&bytes[12..header_end]).context("decoding header JSON")?;

    let payload_bytes = bytes.len() - header_end;
    if payload_bytes % 4 != 0 {
        bail!("payload of {payload_bytes} bytes is not a whole number of 32-bit values");
    }
    let payload_len = payload_bytes / 4;

    // The table must tile the payload exactly before anything is read.
    let mut spans: Vec<(usize, usize, &str)> = header
        .tensors
        .iter()
        .map(|t| (t.offset, t.len, t.name.as_str()))
        .collect();
    spans.sort_unstable();
    let mut cursor = 0usize;
    for (offset, len, name) in &spans {
        if *offset != cursor {
            bail!("tensor {name:?} starts at {offset}, expected {cursor} (gap or overlap)");
        }
        cursor = offset
            .checked_add(*len)
            .with_context(|| format!("tensor {name:?} length overflows"))?;
    }
    if cursor != payload_len {
        bail!("tensor table covers {cursor} values but the payload has {payload_len}");
    }
    for t in &header.tensors {
        let numel: usize = t.shape.iter().product();
        if numel != t.len {
            bail!("tensor {:?} shape {:?} disagrees with its length {}", t.name, t.shape, t.len);
        }
    }

    let read_values = |entry: &TensorEntry| -> Vec<f32> {
        let start = header_end + 4 * entry.offset;
        (0..entry.len)
            .map(|i| {
                let at = start + 4 * i;
                f32::from_le_bytes(bytes[at..at + 4].try_into().unwrap())
            })
            .collect()
    };
    let find = |name: &str| header.tensors.iter().find(|t| t.name == name);

    let model = match header.config {
        ModelConfig::Psfcn(config) => {
            Model::Psfcn(Psfcn::build(config, header.seed).context("rebuilding the model")?)
        }
        ModelConfig::Lcnet(config) => {
            Model::Lcnet(Lcnet::build(config, header.seed).context("rebuilding the model")?)
        }
    };
    let params = named_params(&model);
    for (name, tensor) in &params {
        let entry = find(name).with_context(|| format!("missing tensor {name:?}"))?;
        if entry.shape != tensor.shape() {
            bail!(
                "tensor {name:?} has shape {:?} in the file but the model expects {:?}",
                entry.shape,
                tensor.shape()
            );
        }
        let values = read_values(entry);
        tensor.update_values(|buf| buf.copy_from_slice(&values));
    }

    let have_moments = params.iter().all(|(name, _)| {
        find(&format!("adam.m.{name}")).is_some() && find(&format!("adam.v.{name}")).is_some()
    });
    let adam = if have_moments && !params.is_empty() {
        let mut m = Vec::with_capacity(params.len());
        let mut v = Vec::with_capacity(params.len());
        for (name, tensor) in &params {
            for (prefix, out) in [("adam.m", &mut m), ("adam.v", &mut v)] {
                let entry = find(&format!("{prefix}.{name}")).unwrap();
                if entry.shape != tensor.shape() {
                    bail!("moment {prefix}.{name} has mismatched shape {:?}", entry.shape);
                }
                out.push(read_values(entry));
            }
        }
        Some(
            AdamState::from_parts(header.adam_step, m, v)
                .context("restoring optimizer state")?,
        )
    } else {
        None
    };

    Ok(Checkpoint { model, seed: header.seed, epoch: header.epoch, adam })
}

#[cfg(test)]
mod tests {
    use super::*;
    use photostereo_core::psfcn::InputMode;
    use photostereo_core::render::DirectionalLight;

    fn tiny_psfcn() -> Psfcn<f32> {
        let config = PsfcnConfig {
            width_multiplier: 1.0 / 16.0,
            input_mode: InputMode::Calibrated,
            train_q: 2,
        };
        Psfcn::build(config, 41).unwrap()
    }

    fn probe_forward(net: &Psfcn<f32>) -> Vec<f32> {
        let values: Vec<f32> = (0..3 * 4 * 4).map(|i| 0.05 + (i as f32) * 0.01).collect();
        let img = Tensor::new(&[3, 4, 4], values).unwrap();
        let lights = vec![
            DirectionalLight::from_angles(75.0, 15.0, 1.0).unwrap(),
            DirectionalLight::from_angles(110.0, -20.0, 1.0).unwrap(),
        ];
        let out = net.forward(&[img.clone(), img], Some(&lights)).unwrap();
        out.to_vec()
    }

    #[test]
    fn roundtrip_preserves_forward_outputs() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.nfck");
        let net = tiny_psfcn();
        let before = probe_forward(&net);
        save(&path, &Model::Psfcn(net), 41, 3, None).unwrap();
        let ck = load(&path).unwrap();
        assert_eq!(ck.epoch, 3);
        assert_eq!(ck.seed, 41);
        assert!(ck.adam.is_none());
        match &ck.model {
            Model::Psfcn(net) => assert_eq!(probe_forward(net), before),
            Model::Lcnet(_) => panic!("wrong kind"),
        }
    }

    #[test]
    fn adam_state_roundtrips() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.nfck");
        let net = tiny_psfcn();
        let params: Vec<Tensor<f32>> = net.params().into_iter().map(|(_, t)| t).collect();
        let mut state = AdamState::new(&params);
        // One optimizer step gives the moments nonzero content.
        for p in &params {
            p.zero_grad();
        }
        let total = photostereo_core::tensor::sum(&params[0]).unwrap();
        total.backward().unwrap();
        photostereo_core::optim::adam_step(&params, &mut state, 1e-3).unwrap();
        save(&path, &Model::Psfcn(net), 41, 1, Some(&state)).unwrap();
        let ck = load(&path).unwrap();
        let restored = ck.adam.expect("moments were saved");
        assert_eq!(restored.step_count(), state.step_count());
        let (m0, v0) = state.moments();
        let (m1, v1) = restored.moments();
        assert_eq!(m0, m1);
        assert_eq!(v0, v1);
    }

    #[test]
    fn corrupt_table_is_rejected_before_loading() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.nfck");
        save(&path, &Model::Psfcn(tiny_psfcn()), 41, 0, None).unwrap();
        let mut bytes = fs::read(&path).unwrap();
        // Shift the first tensor's offset to create a gap.
        let header_len = u32::from_le_bytes(bytes[8..12].try_into().unwrap()) as usize;
        let json = String::from_utf8(bytes[12..12 + header_len].to_vec()).unwrap();
        // Same byte length, so only the table itself goes bad.
        let patched = json.replacen("\"offset\":0", "\"offset\":1", 1);
        assert_ne!(json, patched);
        bytes.splice(12..12 + header_len, patched.into_bytes());
        fs::write(&path, &bytes).unwrap();
        let err = match load(&path) {
            Ok(_) => panic!("corrupt table was accepted"),
            Err(err) => format!("{err:#}"),
        };
        assert!(err.contains("gap or overlap") || err.contains("covers"), "{err}");
    }
}
