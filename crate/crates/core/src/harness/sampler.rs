//! Euler sampler with classifier-free guidance.
//!
//! Sampling runs the flow from `t_hat = 1` (standard normal) to 0 in `steps`
//! equal steps, `x <- x - dt * v_hat` with
//! `v_hat = v_uncond + g * (v_cond - v_uncond)`. The conditional pass sees the
//! residual-injected context and the anchor at that step's weights; the
//! unconditional pass sees the all-zeros context, optionally the same anchor,
//! and never the semantic delta.

use serde::{Deserialize, Serialize};

use crate::cag::ScheduleSample;
use crate::error::{Error, Result};
use crate::harness::model::{velocity, AnchorInput, Forward};
use crate::harness::stack::TrainedStack;
use crate::math::{Rng, Tensor};
use crate::sip::{residual_inject, ContextEmbedding, SemanticIdentityDelta};
use crate::vfa::VisualIdentityEmbedding;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SamplerConfig {
    pub steps: usize,
    pub guidance: f64,
    /// Whether the unconditional guidance pass also receives the anchor.
    pub anchor_in_uncond: bool,
}

impl Default for SamplerConfig {
    fn default() -> Self {
        SamplerConfig { steps: 25, guidance: 4.0, anchor_in_uncond: true }
    }
}

impl SamplerConfig {
    pub fn validate(&self) -> Result<()> {
        if self.steps == 0 {
            return Err(Error::Validation("steps must be at least 1".into()));
        }
        if !self.guidance.is_finite() {
            return Err(Error::Validation(format!("guidance must be finite, got {}", self.guidance)));
        }
        Ok(())
    }
}

/// Everything a generation is conditioned on apart from the schedule.
#[derive(Clone, Debug, PartialEq)]
pub struct Conditioning {
    /// Base (non-injected) context embedding.
    pub context: ContextEmbedding,
    /// Semantic delta, scaled per step by `alpha_final`.
    pub delta: Option<SemanticIdentityDelta>,
    /// Identity embedding for the anchor branch, weighted per step by `w_final`.
    pub anchor: Option<VisualIdentityEmbedding>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StepRecord {
    pub sample: ScheduleSample,
    pub cond_norm: f64,
    /// `None` when guidance is 1 and the unconditional pass is skipped.
    pub uncond_norm: Option<f64>,
    pub guided_norm: f64,
    /// Latent after this step's update.
    pub latent: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GenerationTrace {
    pub seed: u64,
    pub final_sample: Vec<f64>,
    pub records: Vec<StepRecord>,
}

impl GenerationTrace {
    pub fn schedule(&self) -> Vec<ScheduleSample> {
        self.records.iter().map(|r| r.sample).collect()
    }
}

/// Initial latent for a generation seed.
pub fn initial_noise(seed: u64, dim: usize) -> Vec<f64> {
    Rng::from_label(seed, "noise").normal_vec(dim)
}

fn tile(t: &Tensor, times: usize) -> Tensor {
    let mut data = Vec::with_capacity(t.numel() * times);
    for _ in 0..times {
        data.extend_from_slice(t.data());
    }
    Tensor::new([t.rows() * times, t.cols()], data).expect("sizes agree")
}

fn row_norms(t: &Tensor) -> Vec<f64> {
    (0..t.rows()).map(|i| t.row(i).iter().map(|v| v * v).sum::<f64>().sqrt()).collect()
}

/// Velocity for every row of `x` at time `t` under one context and anchor.
fn batch_velocity(
    stack: &TrainedStack,
    x: &Tensor,
    t: f64,
    context: &Tensor,
    anchor: Option<(&VisualIdentityEmbedding, f64)>,
) -> Result<Tensor> {
    let b = x.rows();
    let mut fw = Forward::new(&stack.params, false);
    let xn = fw.g.constant(x.clone());
    let ctx = fw.g.constant(tile(context, b));
    let anchor = match anchor {
        Some((emb, w)) if w != 0.0 => {
            Some(AnchorInput { tokens: fw.g.constant(tile(&emb.tokens, b)), weights: vec![w; b] })
        }
        _ => None,
    };
    let v = velocity(&mut fw, &stack.layout, xn, &vec![t; b], ctx, anchor.as_ref())?;
    Ok(fw.g.value(v).clone())
}

fn check_inputs(
    stack: &TrainedStack,
    cond: &Conditioning,
    schedule: &[ScheduleSample],
    cfg: &SamplerConfig,
) -> Result<()> {
    cfg.validate()?;
    if schedule.len() != cfg.steps {
        return Err(Error::Contract(format!(
            "schedule has {} entries for {} sampling steps",
            schedule.len(),
            cfg.steps
        )));
    }
    let want = [crate::harness::model::CONTEXT_LEN, stack.arch.d_model];
    if cond.context.tokens.shape() != want {
        return Err(Error::dim("sampler context", cond.context.tokens.shape(), &want));
    }
    if let Some(a) = &cond.anchor {
        let want = [1 + stack.arch.local_tokens, stack.arch.d_model];
        if a.tokens.shape() != want {
            return Err(Error::dim("sampler anchor", a.tokens.shape(), &want));
        }
    }
    Ok(())
}

/// Generates one sample per seed. Each row evolves exactly as it would
/// alone, so the traces are bit-identical to separate [`euler_sample`] calls.
pub fn euler_sample_batch(
    stack: &TrainedStack,
    cond: &Conditioning,
    schedule: &[ScheduleSample],
    cfg: &SamplerConfig,
    seeds: &[u64],
) -> Result<Vec<GenerationTrace>> {
    check_inputs(stack, cond, schedule, cfg)?;
    let dim = stack.dim();
    let b = seeds.len();
    if b == 0 {
        return Ok(Vec::new());
    }
    let rows: Vec<Vec<f64>> = seeds.iter().map(|&s| initial_noise(s, dim)).collect();
    let mut x = Tensor::from_rows(&rows)?;
    let null = stack.null_context();
    let dt = 1.0 / cfg.steps as f64;
    let mut records: Vec<Vec<StepRecord>> = vec![Vec::with_capacity(cfg.steps); b];

    for sample in schedule {
        let context = match &cond.delta {
            Some(delta) => residual_inject(&cond.context, delta, sample.alpha_final)?,
            None => cond.context.clone(),
        };
        let anchor = cond.anchor.as_ref().map(|a| (a, sample.w_final));
        let v_cond = batch_velocity(stack, &x, sample.t_hat, &context.tokens, anchor)?;
        let (v_hat, v_uncond) = if cfg.guidance == 1.0 {
            (v_cond.clone(), None)
        } else {
            let anchor_u = if cfg.anchor_in_uncond { anchor } else { None };
            let v_u = batch_velocity(stack, &x, sample.t_hat, &null.tokens, anchor_u)?;
            let guided = v_u.axpy(cfg.guidance, &v_cond.sub(&v_u)?)?;
            (guided, Some(v_u))
        };
        if !v_hat.is_finite() {
            return Err(Error::Validation(format!("non-finite velocity at step {}", sample.step)));
        }
        x = x.axpy(-dt, &v_hat)?;
        let cn = row_norms(&v_cond);
        let un = v_uncond.as_ref().map(row_norms);
        let gn = row_norms(&v_hat);
        for (i, rec) in records.iter_mut().enumerate() {
            rec.push(StepRecord {
                sample: *sample,
                cond_norm: cn[i],
                uncond_norm: un.as_ref().map(|u| u[i]),
                guided_norm: gn[i],
                latent: x.row(i).to_vec(),
            });
        }
    }

    Ok(seeds
        .iter()
        .zip(records)
        .enumerate()
        .map(|(i, (&seed, records))| GenerationTrace { seed, final_sample: x.row(i).to_vec(), records })
        .collect())
}

pub fn euler_sample(
    stack: &TrainedStack,
    cond: &Conditioning,
    schedule: &[ScheduleSample],
    cfg: &SamplerConfig,
    seed: u64,
) -> Result<GenerationTrace> {
    Ok(euler_sample_batch(stack, cond, schedule, cfg, &[seed])?.remove(0))
}
