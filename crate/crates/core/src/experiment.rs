//! Run configurations, sweeps and evaluation reports.

use std::collections::HashMap;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::cag::GatingConfig;
use crate::error::{Error, Result};
use crate::harness::checkpoint::{load_checkpoint, save_checkpoint};
use crate::harness::model::ArchConfig;
use crate::harness::pipeline::{flexid_generate_batch, PipelineOptions};
use crate::harness::sampler::SamplerConfig;
use crate::harness::stack::{config_hash, TrainedStack};
use crate::harness::train::{train, TrainConfig};
use crate::harness::world::WorldConfig;
use crate::intent::{normalize_prompt, EditDictionary};
use crate::metrics::{attr_adherence, id_similarity};
use crate::vfa::ReferenceSpec;

/// One experiment cell: a stack, a prompt, a reference and a seed list.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub name: String,
    pub world: WorldConfig,
    pub arch: ArchConfig,
    pub train: TrainConfig,
    pub gating: GatingConfig,
    pub sampler: SamplerConfig,
    pub prompt: String,
    pub reference: ReferenceSpec,
    pub seeds: Vec<u64>,
    pub sip_enabled: bool,
    pub cag_enabled: bool,
    /// Edit dictionary file; the built-in dictionary when absent.
    pub dictionary: Option<PathBuf>,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            name: "flexid".into(),
            world: WorldConfig::default(),
            arch: ArchConfig::default(),
            train: TrainConfig::default(),
            gating: GatingConfig::default(),
            sampler: SamplerConfig::default(),
            prompt: "a photo of a person laughing out loud".into(),
            reference: ReferenceSpec::HeldOut,
            seeds: (0..64).collect(),
            sip_enabled: true,
            cag_enabled: true,
            dictionary: None,
        }
    }
}

impl RunConfig {
    pub fn validate(&self) -> Result<()> {
        self.world.validate()?;
        self.arch.validate(self.world.dim)?;
        self.train.validate()?;
        self.gating.validate()?;
        self.sampler.validate()?;
        let mut seeds = self.seeds.clone();
        seeds.sort_unstable();
        if seeds.windows(2).any(|w| w[0] == w[1]) {
            return Err(Error::Validation(format!("run `{}` repeats a seed", self.name)));
        }
        if let ReferenceSpec::Index(i) = self.reference {
            if i >= self.world.identities {
                return Err(Error::Validation(format!(
                    "reference identity {i} out of range 0..{}",
                    self.world.identities
                )));
            }
        }
        Ok(())
    }

    pub fn stack_hash(&self) -> String {
        config_hash(&self.world, &self.arch, &self.train)
    }

    pub fn options(&self) -> PipelineOptions {
        PipelineOptions { sip_enabled: self.sip_enabled, cag_enabled: self.cag_enabled, sampler: self.sampler.clone() }
    }

    pub fn load_dictionary(&self) -> Result<EditDictionary> {
        match &self.dictionary {
            Some(p) => EditDictionary::load(p),
            None => Ok(EditDictionary::default_dictionary()),
        }
    }

    /// Canonical JSON form.
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }
}

fn json_error(e: serde_json::Error, source_name: &str) -> Error {
    Error::Parse { source_name: source_name.to_string(), line: e.line(), message: e.to_string() }
}

pub fn parse_run_config(text: &str, source_name: &str) -> Result<RunConfig> {
    let cfg: RunConfig = serde_json::from_str(text).map_err(|e| json_error(e, source_name))?;
    cfg.validate()?;
    Ok(cfg)
}

/// A grid is a JSON array of run configurations.
pub fn parse_grid(text: &str, source_name: &str) -> Result<Vec<RunConfig>> {
    let grid: Vec<RunConfig> = serde_json::from_str(text).map_err(|e| json_error(e, source_name))?;
    for cfg in &grid {
        cfg.validate()?;
    }
    Ok(grid)
}

fn read(path: &Path) -> Result<String> {
    std::fs::read_to_string(path).map_err(|e| Error::io(path, e))
}

pub fn load_run_config(path: &Path) -> Result<RunConfig> {
    parse_run_config(&read(path)?, &path.display().to_string())
}

pub fn load_grid(path: &Path) -> Result<Vec<RunConfig>> {
    parse_grid(&read(path)?, &path.display().to_string())
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub config_id: usize,
    pub name: String,
    pub prompt: String,
    pub seed: u64,
    pub id_sim: Option<f64>,
    /// `None` when the prompt requests no attribute or the run failed.
    pub attr_adherence: Option<f64>,
    pub error: Option<String>,
    pub message: Option<String>,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Stat {
    pub mean: f64,
    /// Sample standard deviation; 0 for a single value.
    pub std: f64,
}

impl Stat {
    pub fn of(values: &[f64]) -> Option<Stat> {
        if values.is_empty() {
            return None;
        }
        let n = values.len() as f64;
        let mean = values.iter().sum::<f64>() / n;
        let std = if values.len() < 2 {
            0.0
        } else {
            (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt()
        };
        Some(Stat { mean, std })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Aggregate {
    pub config_id: usize,
    pub name: String,
    pub runs: usize,
    pub failed: usize,
    pub id_sim: Option<Stat>,
    pub attr_adherence: Option<Stat>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    /// Sorted by `(config_id, seed)`.
    pub records: Vec<RunRecord>,
    pub aggregates: Vec<Aggregate>,
}

impl EvalReport {
    /// Sorts the records and recomputes every aggregate from them.
    pub fn from_records(mut records: Vec<RunRecord>) -> Self {
        records.sort_by_key(|r| (r.config_id, r.seed));
        let mut aggregates: Vec<Aggregate> = Vec::new();
        for group in records.chunk_by(|a, b| a.config_id == b.config_id) {
            let ids: Vec<f64> = group.iter().filter_map(|r| r.id_sim).collect();
            let ads: Vec<f64> = group.iter().filter_map(|r| r.attr_adherence).collect();
            aggregates.push(Aggregate {
                config_id: group[0].config_id,
                name: group[0].name.clone(),
                runs: group.len(),
                failed: group.iter().filter(|r| r.error.is_some()).count(),
                id_sim: Stat::of(&ids),
                attr_adherence: Stat::of(&ads),
            });
        }
        EvalReport { records, aggregates }
    }

    pub fn aggregate(&self, name: &str) -> Option<&Aggregate> {
        self.aggregates.iter().find(|a| a.name == name)
    }
}

/// Evaluates every seed of one configuration on a given stack.
pub fn evaluate(stack: &TrainedStack, cfg: &RunConfig, config_id: usize) -> Result<Vec<RunRecord>> {
    let dict = cfg.load_dictionary()?;
    let prompt = normalize_prompt(&cfg.prompt);
    let reference = stack.reference(cfg.reference)?;
    let scale = stack.world.similarity_scale();
    let offset = stack.world.attribute_for_prompt(&prompt).map(|a| stack.world.offsets[a].clone());
    let traces = flexid_generate_batch(stack, &reference, &prompt, &cfg.gating, &dict, &cfg.options(), &cfg.seeds)?;
    traces
        .into_iter()
        .map(|t| {
            Ok(RunRecord {
                config_id,
                name: cfg.name.clone(),
                prompt: cfg.prompt.clone(),
                seed: t.seed,
                id_sim: Some(id_similarity(&t.final_sample, &reference.feature, scale)?),
                attr_adherence: match &offset {
                    Some(o) => Some(attr_adherence(&t.final_sample, &reference.feature, o)?),
                    None => None,
                },
                error: None,
                message: None,
            })
        })
        .collect()
}

fn failed_rows(cfg: &RunConfig, config_id: usize, err: &Error) -> Vec<RunRecord> {
    cfg.seeds
        .iter()
        .map(|&seed| RunRecord {
            config_id,
            name: cfg.name.clone(),
            prompt: cfg.prompt.clone(),
            seed,
            id_sim: None,
            attr_adherence: None,
            error: Some(err.tag().to_string()),
            message: Some(err.to_string()),
        })
        .collect()
}

/// Runs sweeps, training each distinct stack once. Trained stacks are kept
/// in memory and, with a cache directory, on disk as checkpoints named by
/// config hash.
#[derive(Default)]
pub struct SweepRunner {
    stacks: HashMap<String, Arc<TrainedStack>>,
    cache_dir: Option<PathBuf>,
}

impl SweepRunner {
    pub fn new(cache_dir: Option<PathBuf>) -> Self {
        SweepRunner { stacks: HashMap::new(), cache_dir }
    }

    /// Makes an already trained stack available to later sweeps.
    pub fn insert(&mut self, stack: Arc<TrainedStack>) {
        self.stacks.insert(stack.meta.config_hash.clone(), stack);
    }

    pub fn stack_for(&mut self, cfg: &RunConfig) -> Result<Arc<TrainedStack>> {
        let hash = cfg.stack_hash();
        if let Some(s) = self.stacks.get(&hash) {
            return Ok(s.clone());
        }
        let cached = self.cache_dir.as_ref().map(|d| d.join(format!("{hash}.json")));
        let stack = match &cached {
            Some(p) if p.exists() => load_checkpoint(p)?,
            _ => {
                let s = train(&cfg.world, &cfg.arch, &cfg.train)?;
                if let Some(p) = &cached {
                    if let Some(dir) = p.parent() {
                        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
                    }
                    save_checkpoint(&s, p)?;
                }
                s
            }
        };
        let stack = Arc::new(stack);
        self.stacks.insert(hash, stack.clone());
        Ok(stack)
    }

    /// Runs every configuration. A failing configuration yields one tagged
    /// row per seed and the sweep continues.
    pub fn run(&mut self, configs: &[RunConfig]) -> EvalReport {
        let mut records = Vec::new();
        for (id, cfg) in configs.iter().enumerate() {
            let rows = cfg.validate().and_then(|()| self.stack_for(cfg)).and_then(|stack| evaluate(&stack, cfg, id));
            match rows {
                Ok(rows) => records.extend(rows),
                Err(e) => records.extend(failed_rows(cfg, id, &e)),
            }
        }
        EvalReport::from_records(records)
    }
}

pub fn run_sweep(configs: &[RunConfig]) -> EvalReport {
    SweepRunner::default().run(configs)
}
