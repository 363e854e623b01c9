//! Checkpoint files: a text header followed by little-endian `f64` payload.
//!
//! ```text
//! stgcnn-checkpoint 1
//! n_stgcnn 1
//! ...
//! epoch 12
//! tensor stgcnn.0.mix.weight 5 2
//! ...
//! end
//! <raw f64 data, tensors in header order>
//! ```

use std::collections::HashMap;
use std::fs;
use std::io::Write;
use std::path::Path;

use indexmap::IndexMap;

use crate::error::{Error, Result};
use crate::graph::KernelKind;
use crate::model::{ModelConfig, ModelParams};
use crate::tensor::Tensor;
use crate::trajdata::FeatureMode;

const MAGIC: &str = "stgcnn-checkpoint";
const VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub config: ModelConfig,
    pub params: ModelParams,
    /// Number of completed training epochs.
    pub epoch: usize,
}

fn kernel_constants(kind: KernelKind) -> (f64, f64) {
    match kind {
        KernelKind::Exp { sigma } => (sigma, crate::graph::DEFAULT_SIM_EPS),
        KernelKind::SimEps { epsilon } => (crate::graph::DEFAULT_EXP_SIGMA, epsilon),
        _ => (crate::graph::DEFAULT_EXP_SIGMA, crate::graph::DEFAULT_SIM_EPS),
    }
}

/// Serializes a checkpoint to bytes.
pub fn to_bytes(params: &ModelParams, config: &ModelConfig, epoch: usize) -> Result<Vec<u8>> {
    params.check_against(config)?;
    let (sigma, eps) = kernel_constants(config.kernel);
    let mut header = format!("{MAGIC} {VERSION}\n");
    for (key, value) in [
        ("n_stgcnn", config.n_stgcnn),
        ("n_txpcnn", config.n_txpcnn),
        ("input_feat", config.input_feat),
        ("embed_feat", config.embed_feat),
        ("output_feat", config.output_feat),
        ("t_obs", config.t_obs),
        ("t_pred", config.t_pred),
        ("temporal_kernel", config.temporal_kernel),
    ] {
        header.push_str(&format!("{key} {value}\n"));
    }
    header.push_str(&format!("kernel {}\n", config.kernel.name()));
    header.push_str(&format!("kernel_sigma {sigma:?}\n"));
    header.push_str(&format!("kernel_eps {eps:?}\n"));
    header.push_str(&format!("feature_mode {}\n", config.feature_mode.name()));
    header.push_str(&format!("epoch {epoch}\n"));
    for (name, t) in params.iter() {
        let dims: Vec<String> = t.shape().iter().map(usize::to_string).collect();
        header.push_str(&format!("tensor {name} {}\n", dims.join(" ")));
    }
    header.push_str("end\n");
    let mut bytes = header.into_bytes();
    for (_, t) in params.iter() {
        for x in t.data() {
            bytes.extend_from_slice(&x.to_le_bytes());
        }
    }
    Ok(bytes)
}

/// Writes a checkpoint via a temporary file and rename, so readers never see
/// a partial file.
pub fn save_checkpoint(params: &ModelParams, config: &ModelConfig, epoch: usize, path: &Path) -> Result<()> {
    let bytes = to_bytes(params, config, epoch)?;
    let tmp = path.with_extension("tmp");
    {
        let mut f = fs::File::create(&tmp)?;
        f.write_all(&bytes)?;
        f.sync_all()?;
    }
    fs::rename(&tmp, path)?;
    Ok(())
}

pub fn load_checkpoint(path: &Path) -> Result<Checkpoint> {
    let bytes = fs::read(path)?;
    from_bytes(&bytes).map_err(|msg| Error::Checkpoint {
        path: path.to_path_buf(),
        msg,
    })
}

/// Loads a checkpoint and refuses it unless its configuration equals
/// `expected`.
pub fn load_checkpoint_for(path: &Path, expected: &ModelConfig) -> Result<Checkpoint> {
    let ck = load_checkpoint(path)?;
    if ck.config != *expected {
        return Err(Error::Checkpoint {
            path: path.to_path_buf(),
            msg: format!("checkpoint was trained with [{}] but [{}] was requested", ck.config, expected),
        });
    }
    Ok(ck)
}

pub fn from_bytes(bytes: &[u8]) -> std::result::Result<Checkpoint, String> {
    let mut pos = 0;
    let mut next_line = || -> std::result::Result<&str, String> {
        let rest = &bytes[pos..];
        let end = rest
            .iter()
            .position(|&b| b == b'\n')
            .ok_or_else(|| "truncated header".to_string())?;
        pos += end + 1;
        std::str::from_utf8(&rest[..end]).map_err(|_| "header is not UTF-8".to_string())
    };

    let first = next_line()?;
    let version = first
        .strip_prefix(MAGIC)
        .map(str::trim)
        .ok_or_else(|| "not a checkpoint file".to_string())?;
    if version != VERSION.to_string() {
        return Err(format!("unsupported checkpoint version {version} (expected {VERSION})"));
    }

    let mut fields: HashMap<String, String> = HashMap::new();
    let mut shapes: Vec<(String, Vec<usize>)> = Vec::new();
    loop {
        let line = next_line()?;
        if line == "end" {
            break;
        }
        let mut parts = line.split(' ');
        let key = parts.next().unwrap_or_default();
        if key == "tensor" {
            let name = parts.next().ok_or("tensor line without a name")?.to_string();
            let shape = parts
                .map(|d| d.parse::<usize>().map_err(|_| format!("bad dimension `{d}` for {name}")))
                .collect::<std::result::Result<Vec<_>, _>>()?;
            shapes.push((name, shape));
        } else {
            let value = parts.collect::<Vec<_>>().join(" ");
            fields.insert(key.to_string(), value);
        }
    }

    let get = |k: &str| fields.get(k).ok_or_else(|| format!("missing header field `{k}`"));
    let count = |k: &str| -> std::result::Result<usize, String> {
        get(k)?.parse().map_err(|_| format!("bad value for `{k}`"))
    };
    let real = |k: &str| -> std::result::Result<f64, String> {
        get(k)?.parse().map_err(|_| format!("bad value for `{k}`"))
    };
    let kernel = KernelKind::parse(get("kernel")?, real("kernel_sigma")?, real("kernel_eps")?).map_err(|e| e.to_string())?;
    let config = ModelConfig {
        n_stgcnn: count("n_stgcnn")?,
        n_txpcnn: count("n_txpcnn")?,
        input_feat: count("input_feat")?,
        embed_feat: count("embed_feat")?,
        output_feat: count("output_feat")?,
        t_obs: count("t_obs")?,
        t_pred: count("t_pred")?,
        temporal_kernel: count("temporal_kernel")?,
        kernel,
        feature_mode: FeatureMode::parse(get("feature_mode")?).map_err(|e| e.to_string())?,
    };
    config.validate().map_err(|e| e.to_string())?;
    let epoch = count("epoch")?;

    let payload = &bytes[pos..];
    let total: usize = shapes.iter().map(|(_, s)| s.iter().product::<usize>()).sum();
    if payload.len() != total * 8 {
        return Err(format!(
            "payload has {} bytes, header describes {} values ({} bytes)",
            payload.len(),
            total,
            total * 8
        ));
    }
    let mut values = payload
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("chunk of 8")));
    let mut tensors = IndexMap::new();
    for (name, shape) in shapes {
        let n = shape.iter().product();
        let data: Vec<f64> = values.by_ref().take(n).collect();
        let t = Tensor::new(shape, data).map_err(|e| e.to_string())?;
        tensors.insert(name, t);
    }
    let params = ModelParams::from_tensors(tensors);
    params.check_against(&config).map_err(|e| e.to_string())?;
    Ok(Checkpoint { config, params, epoch })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::init_params;

    #[test]
    fn round_trip_is_bit_exact() {
        let cfg = ModelConfig {
            kernel: KernelKind::Exp { sigma: 0.3 },
            ..ModelConfig::default()
        };
        let params = init_params(&cfg, 5);
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.ckpt");
        save_checkpoint(&params, &cfg, 7, &path).unwrap();
        let ck = load_checkpoint(&path).unwrap();
        assert_eq!(ck.config, cfg);
        assert_eq!(ck.epoch, 7);
        for ((_, a), (_, b)) in ck.params.iter().zip(params.iter()) {
            let ab: Vec<u64> = a.data().iter().map(|x| x.to_bits()).collect();
            let bb: Vec<u64> = b.data().iter().map(|x| x.to_bits()).collect();
            assert_eq!(ab, bb);
        }
    }

    #[test]
    fn truncated_file_is_rejected() {
        let cfg = ModelConfig::default();
        let bytes = to_bytes(&init_params(&cfg, 0), &cfg, 0).unwrap();
        for cut in [0, 10, bytes.len() / 2, bytes.len() - 1] {
            assert!(from_bytes(&bytes[..cut]).is_err(), "cut at {cut}");
        }
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("t.ckpt");
        fs::write(&path, &bytes[..bytes.len() - 3]).unwrap();
        let err = load_checkpoint(&path).unwrap_err();
        assert!(matches!(err, Error::Checkpoint { .. }), "{err}");
    }

    #[test]
    fn config_mismatch_is_refused() {
        let a = ModelConfig::default();
        let b = ModelConfig {
            n_txpcnn: 3,
            ..ModelConfig::default()
        };
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("a.ckpt");
        save_checkpoint(&init_params(&a, 0), &a, 1, &path).unwrap();
        assert!(load_checkpoint_for(&path, &a).is_ok());
        let msg = load_checkpoint_for(&path, &b).unwrap_err().to_string();
        assert!(msg.contains("txpcnn=5") && msg.contains("txpcnn=3"), "{msg}");
    }

    #[test]
    fn wrong_version_and_magic() {
        let cfg = ModelConfig::default();
        let bytes = to_bytes(&init_params(&cfg, 0), &cfg, 0).unwrap();
        let mut v2 = bytes.clone();
        v2[MAGIC.len() + 1] = b'9';
        assert!(from_bytes(&v2).unwrap_err().contains("version"));
        assert!(from_bytes(b"hello\n").unwrap_err().contains("not a checkpoint"));
    }

    #[test]
    fn params_for_other_config_cannot_be_saved() {
        let a = ModelConfig::default();
        let b = ModelConfig {
            embed_feat: 4,
            ..a
        };
        assert!(to_bytes(&init_params(&a, 0), &b, 0).is_err());
    }
}
