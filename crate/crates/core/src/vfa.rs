//! Visual feature anchor.
//!
//! The identity embedding has one global token (a linear map of the whole
//! identity feature) followed by `local_tokens` local tokens (linear maps of
//! contiguous feature slices). Every injected cross-attention layer projects
//! it to its own keys and values and adds a second, separately normalised
//! attention branch:
//!
//! ```text
//! out = Softmax(Q K^T / sqrt(d)) V + w * Softmax(Q K_id^T / sqrt(d)) V_id
//! ```

use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::harness::model::{ArchConfig, Forward, Init, ParamId};
use crate::harness::stack::TrainedStack;
use crate::harness::world::SyntheticWorld;
use crate::math::{scaled_dot_attention, NodeId, Rng, Tensor};

#[derive(Clone, Debug, PartialEq)]
pub struct VfaLayout {
    pub global: (ParamId, ParamId),
    pub local: Vec<(ParamId, ParamId)>,
    /// `(start, len)` of the feature slice behind each local token.
    pub slices: Vec<(usize, usize)>,
}

/// Dedicated key/value projections of one injected layer.
#[derive(Clone, Debug, PartialEq)]
pub struct AnchorLayout {
    pub key: ParamId,
    pub value: ParamId,
}

/// Splits `dim` into `parts` contiguous slices, the first `dim % parts` one
/// element longer.
pub fn feature_slices(dim: usize, parts: usize) -> Vec<(usize, usize)> {
    let base = dim / parts;
    let extra = dim % parts;
    let mut start = 0;
    (0..parts)
        .map(|j| {
            let len = base + usize::from(j < extra);
            let s = (start, len);
            start += len;
            s
        })
        .collect()
}

impl VfaLayout {
    pub(crate) fn init(init: &mut Init<'_>, dim: usize, arch: &ArchConfig) -> Self {
        let d = arch.d_model;
        let slices = feature_slices(dim, arch.local_tokens);
        let global = (init.matrix("vfa.global.w", dim, d), init.zeros("vfa.global.b", d));
        let local = slices
            .iter()
            .enumerate()
            .map(|(j, &(_, len))| {
                (init.matrix(&format!("vfa.local{j}.w"), len, d), init.zeros(&format!("vfa.local{j}.b"), d))
            })
            .collect();
        VfaLayout { global, local, slices }
    }
}

/// Which identity a reference stands for.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum ReferenceSpec {
    /// The world's held-out identity.
    HeldOut,
    /// Identity index in the world.
    Index(usize),
    /// A fresh identity drawn from the world's center distribution.
    Novel(u64),
}

impl fmt::Display for ReferenceSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ReferenceSpec::HeldOut => f.write_str("held-out"),
            ReferenceSpec::Index(i) => write!(f, "{i}"),
            ReferenceSpec::Novel(s) => write!(f, "novel:{s}"),
        }
    }
}

impl FromStr for ReferenceSpec {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        if s == "held-out" {
            return Ok(ReferenceSpec::HeldOut);
        }
        if let Some(seed) = s.strip_prefix("novel:") {
            return seed
                .parse()
                .map(ReferenceSpec::Novel)
                .map_err(|_| Error::Validation(format!("bad novel identity seed `{seed}`")));
        }
        s.parse().map(ReferenceSpec::Index).map_err(|_| {
            Error::Validation(format!("reference must be an index, `held-out` or `novel:<seed>`, got `{s}`"))
        })
    }
}

impl serde::Serialize for ReferenceSpec {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> serde::Deserialize<'de> for ReferenceSpec {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

/// A reference identity: its raw feature vector (the neutral identity center)
/// and where it came from.
#[derive(Clone, Debug, PartialEq)]
pub struct IdentityReference {
    pub spec: ReferenceSpec,
    pub feature: Vec<f64>,
}

impl IdentityReference {
    pub fn resolve(world: &SyntheticWorld, spec: ReferenceSpec) -> Result<Self> {
        let feature = match spec {
            ReferenceSpec::HeldOut => {
                let idx =
                    world.config.held_out.ok_or_else(|| Error::Lookup("world has no held-out identity".into()))?;
                world.centers[idx].clone()
            }
            ReferenceSpec::Index(i) => world
                .centers
                .get(i)
                .cloned()
                .ok_or_else(|| Error::Lookup(format!("identity {i} not in world of {}", world.centers.len())))?,
            ReferenceSpec::Novel(seed) => world.sample_center(&mut Rng::from_label(seed, "novel-identity")),
        };
        Ok(IdentityReference { spec, feature })
    }

    /// Index of the world identity this reference is, if any.
    pub fn world_index(&self, world: &SyntheticWorld) -> Option<usize> {
        match self.spec {
            ReferenceSpec::HeldOut => world.config.held_out,
            ReferenceSpec::Index(i) => Some(i),
            ReferenceSpec::Novel(_) => None,
        }
    }
}

/// `[(1 + local_tokens) x d_model]`, global token first.
#[derive(Clone, Debug, PartialEq)]
pub struct VisualIdentityEmbedding {
    pub tokens: Tensor,
}

/// Identity keys and values of one injected layer, `[(1 + local_tokens) x d_model]`.
#[derive(Clone, Debug, PartialEq)]
pub struct AnchorProjection {
    pub keys: Tensor,
    pub values: Tensor,
}

/// Identity embeddings for features `[batch x dim]`, as
/// `[batch*(1+local) x d_model]` in item-major order.
pub(crate) fn embedding_graph(fw: &mut Forward<'_>, layout: &VfaLayout, feature: NodeId) -> Result<NodeId> {
    let batch = fw.g.value(feature).rows();
    let mut parts = Vec::with_capacity(1 + layout.local.len());
    parts.push(fw.linear(feature, layout.global.0, Some(layout.global.1))?);
    for (&(w, b), &(start, len)) in layout.local.iter().zip(&layout.slices) {
        let slice = fw.g.slice_cols(feature, start, len)?;
        parts.push(fw.linear(slice, w, Some(b))?);
    }
    let d = fw.g.value(parts[0]).cols();
    let joined = fw.g.concat_cols(&parts)?;
    fw.g.reshape(joined, &[batch * parts.len(), d])
}

/// The identity attention branch for queries `q` of one layer, unweighted.
pub(crate) fn identity_branch(
    fw: &mut Forward<'_>,
    layer: &AnchorLayout,
    q: NodeId,
    anchor_tokens: NodeId,
    batch: usize,
    heads: usize,
) -> Result<NodeId> {
    let k = fw.linear(anchor_tokens, layer.key, None)?;
    let v = fw.linear(anchor_tokens, layer.value, None)?;
    fw.attention(q, k, v, batch, heads)
}

pub fn build_identity_embedding(
    reference: &IdentityReference,
    stack: &TrainedStack,
) -> Result<VisualIdentityEmbedding> {
    stack.check_reference(reference)?;
    let mut fw = Forward::new(&stack.params, false);
    let feat = fw.g.constant(Tensor::row_vector(reference.feature.clone()));
    let out = embedding_graph(&mut fw, &stack.layout.vfa, feat)?;
    Ok(VisualIdentityEmbedding { tokens: fw.g.value(out).clone() })
}

/// Keys and values of the identity embedding under block `layer`'s adapter.
pub fn anchor_projection(
    embedding: &VisualIdentityEmbedding,
    stack: &TrainedStack,
    layer: usize,
) -> Result<AnchorProjection> {
    let block =
        stack.layout.blocks.get(layer).ok_or_else(|| Error::Contract(format!("block {layer} does not exist")))?;
    let adapter =
        block.anchor.as_ref().ok_or_else(|| Error::Contract(format!("block {layer} is not an injected layer")))?;
    Ok(AnchorProjection {
        keys: embedding.tokens.matmul(stack.params.get(adapter.key))?,
        values: embedding.tokens.matmul(stack.params.get(adapter.value))?,
    })
}

/// Single-head decoupled cross-attention. `w == 0` returns the base branch
/// unchanged.
pub fn decoupled_cross_attention(
    q: &Tensor,
    k: &Tensor,
    v: &Tensor,
    anchor: &AnchorProjection,
    w: f64,
) -> Result<Tensor> {
    let base = scaled_dot_attention(q, k, v)?;
    if anchor.values.cols() != v.cols() {
        return Err(Error::dim("decoupled_cross_attention (value width)", v.shape(), anchor.values.shape()));
    }
    let branch = scaled_dot_attention(q, &anchor.keys, &anchor.values)?;
    if w == 0.0 {
        return Ok(base);
    }
    base.axpy(w, &branch)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn t(rows: &[&[f64]]) -> Tensor {
        Tensor::from_rows(&rows.iter().map(|r| r.to_vec()).collect::<Vec<_>>()).unwrap()
    }

    #[test]
    fn slices_cover_dimension() {
        assert_eq!(feature_slices(8, 3), [(0, 3), (3, 3), (6, 2)]);
        assert_eq!(feature_slices(4, 4), [(0, 1), (1, 1), (2, 1), (3, 1)]);
    }

    #[test]
    fn reference_spec_round_trip() {
        for s in ["held-out", "3", "novel:17"] {
            assert_eq!(s.parse::<ReferenceSpec>().unwrap().to_string(), s);
        }
        assert!("heldout".parse::<ReferenceSpec>().is_err());
        assert!("novel:x".parse::<ReferenceSpec>().is_err());
    }

    #[test]
    fn zero_weight_recovers_base_attention() {
        let q = t(&[&[0.3, -1.0], &[0.2, 0.9]]);
        let k = t(&[&[1.0, 0.5], &[-0.4, 0.1]]);
        let v = t(&[&[2.0, 0.0], &[1.0, -1.0]]);
        let anchor =
            AnchorProjection { keys: t(&[&[0.1, 0.1], &[0.7, -0.2]]), values: t(&[&[9.0, 9.0], &[-3.0, 4.0]]) };
        let base = scaled_dot_attention(&q, &k, &v).unwrap();
        assert_eq!(decoupled_cross_attention(&q, &k, &v, &anchor, 0.0).unwrap(), base);
    }

    #[test]
    fn single_anchor_token_adds_weighted_value_row() {
        let q = t(&[&[0.3, -1.0], &[5.0, 0.9]]);
        let k = t(&[&[1.0, 0.5]]);
        let v = t(&[&[2.0, 0.0]]);
        let anchor = AnchorProjection { keys: t(&[&[0.1, 0.1]]), values: t(&[&[-3.0, 4.0]]) };
        let out = decoupled_cross_attention(&q, &k, &v, &anchor, 0.25).unwrap();
        for i in 0..2 {
            assert_eq!(out.row(i), &[2.0 - 0.75, 1.0]);
        }
    }

    #[test]
    fn mismatched_anchor_width_rejected() {
        let q = Tensor::zeros([1, 2]);
        let anchor = AnchorProjection { keys: Tensor::zeros([1, 2]), values: Tensor::zeros([1, 3]) };
        assert!(decoupled_cross_attention(&q, &Tensor::zeros([1, 2]), &Tensor::zeros([1, 2]), &anchor, 1.0).is_err());
        let anchor = AnchorProjection { keys: Tensor::zeros([1, 3]), values: Tensor::zeros([1, 2]) };
        assert!(decoupled_cross_attention(&q, &Tensor::zeros([1, 2]), &Tensor::zeros([1, 2]), &anchor, 1.0).is_err());
    }
}
