//! Semantic identity projector.
//!
//! Visual identity features are fused into the context-embedding space by a
//! single cross-attention block (context tokens attend over the visual
//! tokens) followed by a linear map, and the result is added residually:
//! `E' = E + alpha * delta`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::harness::model::{ArchConfig, Forward, Init, ParamId};
use crate::harness::stack::TrainedStack;
use crate::math::{NodeId, Tensor};
use crate::vfa::IdentityReference;

#[derive(Clone, Debug, PartialEq)]
pub struct SipLayout {
    /// One linear map per feature token, identity feature -> `sip_width`.
    pub encoder: Vec<(ParamId, ParamId)>,
    pub query: ParamId,
    pub key: ParamId,
    pub value: ParamId,
    pub out: (ParamId, ParamId),
}

impl SipLayout {
    pub(crate) fn init(init: &mut Init<'_>, dim: usize, arch: &ArchConfig) -> Self {
        let d = arch.d_model;
        let encoder = (0..arch.sip_tokens)
            .map(|j| {
                (
                    init.matrix(&format!("sip.encoder{j}.w"), dim, arch.sip_width),
                    init.zeros(&format!("sip.encoder{j}.b"), arch.sip_width),
                )
            })
            .collect();
        SipLayout {
            encoder,
            query: init.matrix("sip.fuser.q", d, d),
            key: init.matrix("sip.fuser.k", arch.sip_width, d),
            value: init.matrix("sip.fuser.v", arch.sip_width, d),
            out: (init.matrix("sip.fuser.o.w", d, d), init.zeros("sip.fuser.o.b", d)),
        }
    }
}

/// Visual feature tokens of a reference identity, `[sip_tokens x sip_width]`.
#[derive(Clone, Debug, PartialEq)]
pub struct VisualFeatures {
    pub tokens: Tensor,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Provenance {
    Base,
    Injected,
}

/// Context-embedding tokens, `[CONTEXT_LEN x d_model]`.
#[derive(Clone, Debug, PartialEq)]
pub struct ContextEmbedding {
    pub tokens: Tensor,
    pub provenance: Provenance,
}

impl ContextEmbedding {
    pub fn base(tokens: Tensor) -> Self {
        ContextEmbedding { tokens, provenance: Provenance::Base }
    }
}

/// Identity delta in context-embedding space, same shape as the context.
#[derive(Clone, Debug, PartialEq)]
pub struct SemanticIdentityDelta {
    pub tokens: Tensor,
}

/// Feature tokens for a batch of identity features `[batch x dim]`, as
/// `[batch*sip_tokens x sip_width]` in item-major order.
pub(crate) fn features_graph(fw: &mut Forward<'_>, layout: &SipLayout, feature: NodeId) -> Result<NodeId> {
    let batch = fw.g.value(feature).rows();
    let mut parts = Vec::with_capacity(layout.encoder.len());
    for &(w, b) in &layout.encoder {
        parts.push(fw.linear(feature, w, Some(b))?);
    }
    let width = fw.g.value(parts[0]).cols();
    let joined = if parts.len() == 1 { parts[0] } else { fw.g.concat_cols(&parts)? };
    fw.g.reshape(joined, &[batch * parts.len(), width])
}

/// Fuser output for context `[batch*n x d]` and visual tokens
/// `[batch*m x sip_width]`.
pub(crate) fn delta_graph(
    fw: &mut Forward<'_>,
    layout: &SipLayout,
    visual: NodeId,
    context: NodeId,
    batch: usize,
) -> Result<NodeId> {
    let q = fw.linear(context, layout.query, None)?;
    let k = fw.linear(visual, layout.key, None)?;
    let v = fw.linear(visual, layout.value, None)?;
    let fused = fw.attention(q, k, v, batch, 1)?;
    fw.linear(fused, layout.out.0, Some(layout.out.1))
}

pub fn extract_visual_features(reference: &IdentityReference, stack: &TrainedStack) -> Result<VisualFeatures> {
    stack.check_reference(reference)?;
    let mut fw = Forward::new(&stack.params, false);
    let feat = fw.g.constant(Tensor::row_vector(reference.feature.clone()));
    let out = features_graph(&mut fw, &stack.layout.sip, feat)?;
    Ok(VisualFeatures { tokens: fw.g.value(out).clone() })
}

pub fn project(
    features: &VisualFeatures,
    context: &ContextEmbedding,
    stack: &TrainedStack,
) -> Result<SemanticIdentityDelta> {
    let arch = &stack.layout.arch;
    let want_vis = [arch.sip_tokens, arch.sip_width];
    if features.tokens.shape() != want_vis {
        return Err(Error::dim("project (visual features)", features.tokens.shape(), &want_vis));
    }
    if context.tokens.cols() != arch.d_model || context.tokens.shape().len() != 2 {
        return Err(Error::dim("project (context)", context.tokens.shape(), &[0, arch.d_model]));
    }
    let mut fw = Forward::new(&stack.params, false);
    let vis = fw.g.constant(features.tokens.clone());
    let ctx = fw.g.constant(context.tokens.clone());
    let out = delta_graph(&mut fw, &stack.layout.sip, vis, ctx, 1)?;
    Ok(SemanticIdentityDelta { tokens: fw.g.value(out).clone() })
}

/// `E + alpha * delta`. The input is never modified; `alpha == 0` returns an
/// exact copy of the base tokens.
pub fn residual_inject(
    context: &ContextEmbedding,
    delta: &SemanticIdentityDelta,
    alpha: f64,
) -> Result<ContextEmbedding> {
    if context.tokens.shape() != delta.tokens.shape() {
        return Err(Error::dim("residual_inject", context.tokens.shape(), delta.tokens.shape()));
    }
    if !alpha.is_finite() || alpha < 0.0 {
        return Err(Error::Validation(format!("alpha must be finite and non-negative, got {alpha}")));
    }
    let tokens = if alpha == 0.0 { context.tokens.clone() } else { context.tokens.axpy(alpha, &delta.tokens)? };
    Ok(ContextEmbedding { tokens, provenance: Provenance::Injected })
}
