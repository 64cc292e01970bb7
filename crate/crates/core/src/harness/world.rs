//! Synthetic identity world.
//!
//! Identities are points ("centers") in a subspace of `R^dim`, prompt edits
//! are offsets along orthonormal directions outside that subspace, and a
//! clean sample is `center + [attribute present] * offset + noise * xi`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::intent::{normalize_prompt, Phrase, Prompt};
use crate::math::Rng;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct WorldConfig {
    pub dim: usize,
    pub identities: usize,
    pub attributes: usize,
    /// Per-coordinate standard deviation of sample noise.
    pub noise: f64,
    /// Standard deviation of center coordinates in the identity subspace.
    pub center_scale: f64,
    pub attribute_magnitude: f64,
    /// Minimum pairwise center distance; never below `4 * noise`.
    pub min_separation: Option<f64>,
    /// Identity excluded from training and used as the zero-shot reference.
    pub held_out: Option<usize>,
    /// Prompt phrase selecting each attribute, in dictionary phrase syntax.
    pub attribute_phrases: Vec<String>,
    pub seed: u64,
}

impl Default for WorldConfig {
    fn default() -> Self {
        WorldConfig {
            dim: 8,
            identities: 4,
            attributes: 2,
            noise: 0.1,
            center_scale: 1.0,
            attribute_magnitude: 0.2,
            min_separation: None,
            held_out: Some(3),
            attribute_phrases: vec!["laugh*".into(), "looking back".into()],
            seed: 0,
        }
    }
}

impl WorldConfig {
    pub fn separation(&self) -> f64 {
        let floor = 4.0 * self.noise;
        self.min_separation.map_or(floor, |s| s.max(floor))
    }

    pub fn validate(&self) -> Result<()> {
        let fail = |m: String| Err(Error::Config(m));
        if self.dim < 2 {
            return fail(format!("world dim must be at least 2, got {}", self.dim));
        }
        if self.identities == 0 || self.attributes == 0 {
            return fail("world needs at least one identity and one attribute".into());
        }
        if self.attributes >= self.dim {
            return fail(format!(
                "{} attributes leave no identity subspace in dimension {}",
                self.attributes, self.dim
            ));
        }
        for (name, v) in [
            ("noise", self.noise),
            ("center_scale", self.center_scale),
            ("attribute_magnitude", self.attribute_magnitude),
        ] {
            if !v.is_finite() || v < 0.0 {
                return fail(format!("{name} must be finite and non-negative, got {v}"));
            }
        }
        if let Some(h) = self.held_out {
            if h >= self.identities {
                return fail(format!("held-out identity {h} out of range 0..{}", self.identities));
            }
        }
        if self.attribute_phrases.len() != self.attributes {
            return fail(format!(
                "{} attribute phrases given for {} attributes",
                self.attribute_phrases.len(),
                self.attributes
            ));
        }
        for p in &self.attribute_phrases {
            Phrase::parse(p).map_err(|e| Error::Config(format!("attribute phrase `{p}`: {e}")))?;
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SyntheticWorld {
    pub config: WorldConfig,
    pub centers: Vec<Vec<f64>>,
    pub offsets: Vec<Vec<f64>>,
    /// Orthonormal basis of the identity subspace.
    center_basis: Vec<Vec<f64>>,
    attribute_phrases: Vec<Phrase>,
}

/// A clean sample and the condition it was drawn under.
#[derive(Clone, Debug, PartialEq)]
pub struct DataSample {
    pub x0: Vec<f64>,
    pub identity: usize,
    pub attribute: Option<usize>,
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub(crate) fn distance(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
}

fn gram_schmidt(vectors: Vec<Vec<f64>>) -> Vec<Vec<f64>> {
    let mut basis: Vec<Vec<f64>> = Vec::with_capacity(vectors.len());
    for mut v in vectors {
        for b in &basis {
            let p = dot(&v, b);
            for (vi, bi) in v.iter_mut().zip(b) {
                *vi -= p * bi;
            }
        }
        let n = dot(&v, &v).sqrt();
        for vi in v.iter_mut() {
            *vi /= n;
        }
        basis.push(v);
    }
    basis
}

/// Builds the world for `cfg`: a random orthonormal frame, attribute offsets
/// along its first `attributes` axes, and centers in the span of the rest,
/// pushed apart until every pair is at least `cfg.separation()` apart.
pub fn make_world(cfg: &WorldConfig) -> Result<SyntheticWorld> {
    cfg.validate()?;
    let mut rng = Rng::from_label(cfg.seed, "world");
    let frame = loop {
        let raw: Vec<Vec<f64>> = (0..cfg.dim).map(|_| rng.normal_vec(cfg.dim)).collect();
        let frame = gram_schmidt(raw);
        if frame.iter().flatten().all(|v| v.is_finite()) {
            break frame;
        }
    };
    let offsets: Vec<Vec<f64>> =
        frame[..cfg.attributes].iter().map(|u| u.iter().map(|v| v * cfg.attribute_magnitude).collect()).collect();
    let center_basis = frame[cfg.attributes..].to_vec();
    let k = cfg.identities;

    // Work in subspace coordinates, then embed.
    let sub = center_basis.len();
    let mut coords: Vec<Vec<f64>> =
        (0..k).map(|_| rng.normal_vec(sub).into_iter().map(|v| v * cfg.center_scale).collect()).collect();
    let sep = cfg.separation();
    let mut separated = k < 2;
    for _ in 0..10_000 {
        if separated {
            break;
        }
        separated = true;
        for i in 0..k {
            for j in i + 1..k {
                let d = distance(&coords[i], &coords[j]);
                if d >= sep {
                    continue;
                }
                separated = false;
                let dir: Vec<f64> = if d > 1e-12 {
                    coords[i].iter().zip(&coords[j]).map(|(a, b)| (a - b) / d).collect()
                } else {
                    let r = rng.normal_vec(sub);
                    let n = dot(&r, &r).sqrt();
                    r.into_iter().map(|v| v / n).collect()
                };
                let push = 0.5 * (sep - d) * 1.0001 + 1e-12;
                for c in 0..sub {
                    coords[i][c] += push * dir[c];
                    coords[j][c] -= push * dir[c];
                }
            }
        }
    }
    if !separated {
        return Err(Error::Config(format!(
            "could not separate {k} identities by {sep} in a {sub}-dimensional identity subspace"
        )));
    }
    let centers = coords.iter().map(|c| embed(&center_basis, c, cfg.dim)).collect();
    let attribute_phrases =
        cfg.attribute_phrases.iter().map(|p| Phrase::parse(p).map_err(Error::Config)).collect::<Result<_>>()?;
    Ok(SyntheticWorld { config: cfg.clone(), centers, offsets, center_basis, attribute_phrases })
}

fn embed(basis: &[Vec<f64>], coords: &[f64], dim: usize) -> Vec<f64> {
    let mut out = vec![0.0; dim];
    for (b, &c) in basis.iter().zip(coords) {
        for (o, v) in out.iter_mut().zip(b) {
            *o += c * v;
        }
    }
    out
}

impl SyntheticWorld {
    pub fn dim(&self) -> usize {
        self.config.dim
    }

    pub fn min_center_distance(&self) -> Option<f64> {
        let k = self.centers.len();
        let mut best: Option<f64> = None;
        for i in 0..k {
            for j in i + 1..k {
                let d = distance(&self.centers[i], &self.centers[j]);
                best = Some(best.map_or(d, |b| b.min(d)));
            }
        }
        best
    }

    /// Length scale of the identity-similarity kernel: half the minimum
    /// inter-center distance, or half the separation floor for a single
    /// identity.
    pub fn similarity_scale(&self) -> f64 {
        0.5 * self.min_center_distance().unwrap_or_else(|| self.config.separation())
    }

    /// Identities used for training.
    pub fn training_identities(&self) -> Vec<usize> {
        (0..self.centers.len()).filter(|&i| Some(i) != self.config.held_out).collect()
    }

    /// A fresh identity center from the same distribution the world's centers
    /// were drawn from (before separation).
    pub fn sample_center(&self, rng: &mut Rng) -> Vec<f64> {
        let coords: Vec<f64> =
            rng.normal_vec(self.center_basis.len()).into_iter().map(|v| v * self.config.center_scale).collect();
        embed(&self.center_basis, &coords, self.dim())
    }

    /// `center + [attribute] * offset + noise * xi`.
    pub fn draw(&self, center: &[f64], attribute: Option<usize>, rng: &mut Rng) -> Vec<f64> {
        let mut x: Vec<f64> = center.to_vec();
        if let Some(a) = attribute {
            for (xi, o) in x.iter_mut().zip(&self.offsets[a]) {
                *xi += o;
            }
        }
        for xi in x.iter_mut() {
            *xi += self.config.noise * rng.normal();
        }
        x
    }

    /// First attribute whose phrase occurs in the prompt.
    pub fn attribute_for_prompt(&self, prompt: &Prompt) -> Option<usize> {
        self.attribute_phrases
            .iter()
            .position(|phrase| (0..prompt.tokens.len()).any(|s| phrase.matches_at(&prompt.tokens, s)))
    }

    pub fn attribute_for_text(&self, text: &str) -> Option<usize> {
        self.attribute_for_prompt(&normalize_prompt(text))
    }
}

/// `n` samples with identity and attribute uniform and the attribute present
/// with probability one half.
pub fn sample_dataset(world: &SyntheticWorld, n: usize, rng: &mut Rng) -> Vec<DataSample> {
    (0..n)
        .map(|_| {
            let identity = rng.below(world.centers.len());
            let a = rng.below(world.offsets.len());
            let attribute = rng.bernoulli(0.5).then_some(a);
            DataSample { x0: world.draw(&world.centers[identity], attribute, rng), identity, attribute }
        })
        .collect()
}
