//! Versioned JSON checkpoints.
//!
//! ```json
//! {
//!   "format": "flexid-checkpoint",
//!   "version": 1,
//!   "config_hash": "...",
//!   "seed": 0,
//!   "meta": { ... },
//!   "world": { ... }, "arch": { ... }, "train": { ... },
//!   "params": [ { "name": "...", "shape": [r, c], "data": [ ... ] }, ... ]
//! }
//! ```
//!
//! Floats are written in shortest round-trip form and read back exactly, so
//! a saved and reloaded stack is bit-identical to the original.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::harness::model::ArchConfig;
use crate::harness::stack::{config_hash, TrainedStack, TrainingMeta};
use crate::harness::train::TrainConfig;
use crate::harness::world::WorldConfig;
use crate::math::Tensor;

pub const FORMAT_NAME: &str = "flexid-checkpoint";
pub const FORMAT_VERSION: u32 = 1;

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ParamRecord {
    name: String,
    shape: Vec<usize>,
    data: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct Document {
    format: String,
    version: u32,
    config_hash: String,
    seed: u64,
    meta: TrainingMeta,
    world: WorldConfig,
    arch: ArchConfig,
    train: TrainConfig,
    params: Vec<ParamRecord>,
}

pub fn checkpoint_to_string(stack: &TrainedStack) -> String {
    let doc = Document {
        format: FORMAT_NAME.into(),
        version: FORMAT_VERSION,
        config_hash: stack.meta.config_hash.clone(),
        seed: stack.meta.seed,
        meta: stack.meta.clone(),
        world: stack.world_cfg.clone(),
        arch: stack.arch.clone(),
        train: stack.train_cfg.clone(),
        params: stack
            .params
            .iter()
            .map(|(name, t)| ParamRecord { name: name.to_string(), shape: t.shape().to_vec(), data: t.data().to_vec() })
            .collect(),
    };
    let mut s = serde_json::to_string(&doc).expect("checkpoint serializes");
    s.push('\n');
    s
}

pub fn checkpoint_from_str(text: &str, source_name: &str) -> Result<TrainedStack> {
    let doc: Document = serde_json::from_str(text).map_err(|e| Error::Parse {
        source_name: source_name.to_string(),
        line: e.line(),
        message: e.to_string(),
    })?;
    if doc.format != FORMAT_NAME {
        return Err(Error::Validation(format!("not a checkpoint: format `{}`", doc.format)));
    }
    if doc.version != FORMAT_VERSION {
        return Err(Error::Validation(format!(
            "unsupported checkpoint version {} (expected {FORMAT_VERSION})",
            doc.version
        )));
    }
    let hash = config_hash(&doc.world, &doc.arch, &doc.train);
    if doc.config_hash != hash || doc.meta.config_hash != hash {
        return Err(Error::Validation(format!(
            "config hash mismatch: header says {}, configs hash to {hash}",
            doc.config_hash
        )));
    }
    if doc.seed != doc.train.seed || doc.meta.seed != doc.train.seed {
        return Err(Error::Validation("checkpoint seed disagrees with its training config".into()));
    }
    let mut stack = TrainedStack::untrained(&doc.world, &doc.arch, &doc.train)?;
    let incoming =
        doc.params.into_iter().map(|p| Ok((p.name, Tensor::new(p.shape, p.data)?))).collect::<Result<Vec<_>>>()?;
    stack.params.replace_all(incoming)?;
    stack.meta = doc.meta;
    Ok(stack)
}

pub fn save_checkpoint(stack: &TrainedStack, path: &Path) -> Result<()> {
    std::fs::write(path, checkpoint_to_string(stack)).map_err(|e| Error::io(path, e))
}

pub fn load_checkpoint(path: &Path) -> Result<TrainedStack> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    checkpoint_from_str(&text, &path.display().to_string())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn stack() -> TrainedStack {
        let arch = ArchConfig { d_model: 8, ffn_mult: 2, time_features: 4, ..Default::default() };
        let mut s = TrainedStack::untrained(&WorldConfig::default(), &arch, &TrainConfig::default()).unwrap();
        s.params.values_mut()[0].data_mut()[0] = 0.1 + 0.2;
        s
    }

    #[test]
    fn round_trip_is_exact() {
        let s = stack();
        let back = checkpoint_from_str(&checkpoint_to_string(&s), "mem").unwrap();
        assert_eq!(back, s);
    }

    #[test]
    fn tampered_checkpoints_rejected() {
        let text = checkpoint_to_string(&stack());
        let v: serde_json::Value = serde_json::from_str(&text).unwrap();

        let mut bad = v.clone();
        bad["world"]["seed"] = 5.into();
        assert!(matches!(checkpoint_from_str(&bad.to_string(), "m"), Err(Error::Validation(_))));

        let mut bad = v.clone();
        bad["params"][0]["shape"] = serde_json::json!([1, 1]);
        assert!(checkpoint_from_str(&bad.to_string(), "m").is_err());

        let mut bad = v.clone();
        bad["version"] = 2.into();
        assert!(matches!(checkpoint_from_str(&bad.to_string(), "m"), Err(Error::Validation(_))));

        let mut bad = v;
        bad["params"].as_array_mut().unwrap().pop();
        assert!(checkpoint_from_str(&bad.to_string(), "m").is_err());

        assert!(matches!(checkpoint_from_str("{", "m"), Err(Error::Parse { .. })));
    }

    #[test]
    fn missing_file_is_io_error() {
        let e = load_checkpoint(Path::new("/nonexistent/ckpt.json")).unwrap_err();
        assert_eq!(e.exit_code(), 2);
    }
}
