//! Identity fidelity and attribute adherence on the synthetic world.

use crate::error::{Error, Result};
use crate::harness::world::{distance, dot};

/// `exp(-||x - c||^2 / (2 s^2))` for similarity scale `s > 0`.
pub fn id_similarity(x: &[f64], center: &[f64], scale: f64) -> Result<f64> {
    if x.len() != center.len() {
        return Err(Error::dim("id_similarity", &[x.len()], &[center.len()]));
    }
    if !(scale > 0.0) || !scale.is_finite() {
        return Err(Error::Validation(format!("similarity scale must be positive, got {scale}")));
    }
    let d = distance(x, center);
    Ok((-d * d / (2.0 * scale * scale)).exp())
}

/// Fraction of the offset `o` realised by `x` relative to `c`, clamped to
/// `[0, 1]`.
pub fn attr_adherence(x: &[f64], center: &[f64], offset: &[f64]) -> Result<f64> {
    if x.len() != center.len() || offset.len() != center.len() {
        return Err(Error::dim("attr_adherence", &[x.len(), offset.len()], &[center.len()]));
    }
    let norm2 = dot(offset, offset);
    if !(norm2 > 0.0) {
        return Err(Error::Validation("attribute offset has zero norm".into()));
    }
    let rel: Vec<f64> = x.iter().zip(center).map(|(a, b)| a - b).collect();
    Ok((dot(&rel, offset) / norm2).clamp(0.0, 1.0))
}
