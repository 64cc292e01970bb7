//! End-to-end identity-preserving generation.

use serde::{Deserialize, Serialize};

use crate::cag::{schedule_for_intent, static_schedule, GatingConfig, ScheduleSample};
use crate::error::Result;
use crate::harness::sampler::{euler_sample_batch, Conditioning, GenerationTrace, SamplerConfig};
use crate::harness::stack::TrainedStack;
use crate::intent::{detect_intent, EditDictionary, Prompt};
use crate::sip::{extract_visual_features, project};
use crate::vfa::{build_identity_embedding, IdentityReference};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineOptions {
    /// Semantic stream on or off.
    pub sip_enabled: bool,
    /// Intent- and time-dependent gating, or the fixed base weights at every
    /// step.
    pub cag_enabled: bool,
    pub sampler: SamplerConfig,
}

impl Default for PipelineOptions {
    fn default() -> Self {
        PipelineOptions { sip_enabled: true, cag_enabled: true, sampler: SamplerConfig::default() }
    }
}

/// The per-step weights a generation will use.
pub fn pipeline_schedule(
    prompt: &Prompt,
    gating: &GatingConfig,
    dict: &EditDictionary,
    opts: &PipelineOptions,
) -> Result<Vec<ScheduleSample>> {
    let intent = detect_intent(prompt, dict);
    if opts.cag_enabled {
        schedule_for_intent(gating, &intent, opts.sampler.steps)
    } else {
        static_schedule(gating, intent.indicator, opts.sampler.steps)
    }
}

/// Conditioning for a reference identity and prompt.
pub fn pipeline_conditioning(
    stack: &TrainedStack,
    reference: &IdentityReference,
    prompt: &Prompt,
    opts: &PipelineOptions,
) -> Result<Conditioning> {
    let context = stack.text_context(prompt)?;
    let delta = if opts.sip_enabled {
        let features = extract_visual_features(reference, stack)?;
        Some(project(&features, &context, stack)?)
    } else {
        None
    };
    let anchor = Some(build_identity_embedding(reference, stack)?);
    Ok(Conditioning { context, delta, anchor })
}

pub fn flexid_generate_batch(
    stack: &TrainedStack,
    reference: &IdentityReference,
    prompt: &Prompt,
    gating: &GatingConfig,
    dict: &EditDictionary,
    opts: &PipelineOptions,
    seeds: &[u64],
) -> Result<Vec<GenerationTrace>> {
    let schedule = pipeline_schedule(prompt, gating, dict, opts)?;
    let cond = pipeline_conditioning(stack, reference, prompt, opts)?;
    euler_sample_batch(stack, &cond, &schedule, &opts.sampler, seeds)
}

pub fn flexid_generate(
    stack: &TrainedStack,
    reference: &IdentityReference,
    prompt: &Prompt,
    gating: &GatingConfig,
    dict: &EditDictionary,
    opts: &PipelineOptions,
    seed: u64,
) -> Result<GenerationTrace> {
    Ok(flexid_generate_batch(stack, reference, prompt, gating, dict, opts, &[seed])?.remove(0))
}
