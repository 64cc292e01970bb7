//! Flow-matching pretraining of the denoiser together with both identity
//! adapters.
//!
//! Each training item draws a clean sample `x0`, a time `t ~ U[0, 1)` and
//! noise `eps`, forms `x_t = (1 - t) x0 + t eps` and regresses the velocity
//! `eps - x0`. The conditioning of every item is randomised independently:
//!
//! * the text context is dropped (all zeros, no semantic delta) with
//!   probability `p_uncond`, which trains the unconditional guidance branch;
//! * the anchor branch is on (weight 1, reference = `x0` itself) or off;
//! * the semantic delta is computed from the neutral identity center and
//!   scaled by `alpha ~ U[0, sip_alpha_max]`;
//! * a fraction `novel_identity_rate` of items use freshly drawn identity
//!   centers so that both adapters generalise beyond the training identities.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::harness::model::{velocity, AnchorInput, ArchConfig, Forward, StackLayout, CONTEXT_LEN};
use crate::harness::stack::TrainedStack;
use crate::harness::world::{SyntheticWorld, WorldConfig};
use crate::math::{adam_step, AdamConfig, AdamState, NodeId, Rng, Tensor};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub seed: u64,
    pub steps: usize,
    pub batch_size: usize,
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    /// Cosine decay of the learning rate down to `lr * min_lr_fraction`.
    pub cosine_decay: bool,
    pub min_lr_fraction: f64,
    /// Context dropout probability for classifier-free guidance.
    pub p_uncond: f64,
    /// Probability that an item trains without the anchor branch.
    pub p_anchor_drop: f64,
    /// Active anchor weights are drawn from `U[anchor_weight_min, 1]`.
    pub anchor_weight_min: f64,
    /// Probability that the anchor reference is a different sample of the
    /// same identity, with its attribute drawn independently, instead of
    /// `x0` itself.
    pub anchor_swap_rate: f64,
    /// Upper end of the semantic residual weight drawn per item.
    pub sip_alpha_max: f64,
    /// Fraction of items whose identity is a fresh random center.
    pub novel_identity_rate: f64,
    /// Size of the fixed batch on which initial and final loss are measured.
    pub eval_samples: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            seed: 0,
            steps: 5000,
            batch_size: 64,
            lr: 2e-3,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            cosine_decay: true,
            min_lr_fraction: 0.05,
            p_uncond: 0.1,
            p_anchor_drop: 0.5,
            anchor_weight_min: 0.25,
            anchor_swap_rate: 0.0,
            sip_alpha_max: 0.15,
            novel_identity_rate: 0.5,
            eval_samples: 256,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let fail = |m: String| Err(Error::Config(m));
        if self.batch_size == 0 || self.eval_samples == 0 {
            return fail("batch_size and eval_samples must be positive".into());
        }
        if !(self.lr > 0.0) || !self.lr.is_finite() {
            return fail(format!("learning rate must be positive, got {}", self.lr));
        }
        for (name, v) in [
            ("beta1", self.beta1),
            ("beta2", self.beta2),
            ("min_lr_fraction", self.min_lr_fraction),
            ("p_uncond", self.p_uncond),
            ("p_anchor_drop", self.p_anchor_drop),
            ("anchor_weight_min", self.anchor_weight_min),
            ("anchor_swap_rate", self.anchor_swap_rate),
            ("novel_identity_rate", self.novel_identity_rate),
        ] {
            if !(0.0..=1.0).contains(&v) {
                return fail(format!("{name} must lie in [0, 1], got {v}"));
            }
        }
        if !(self.eps > 0.0) || !self.sip_alpha_max.is_finite() || self.sip_alpha_max < 0.0 {
            return fail("eps must be positive and sip_alpha_max finite and non-negative".into());
        }
        Ok(())
    }

    fn adam(&self, step: usize) -> AdamConfig {
        let lr = if self.cosine_decay && self.steps > 1 {
            let progress = step as f64 / (self.steps - 1) as f64;
            let floor = self.lr * self.min_lr_fraction;
            floor + (self.lr - floor) * 0.5 * (1.0 + (std::f64::consts::PI * progress).cos())
        } else {
            self.lr
        };
        AdamConfig { lr, beta1: self.beta1, beta2: self.beta2, eps: self.eps }
    }
}

/// One conditioned regression target.
#[derive(Clone, Debug)]
struct Item {
    x0: Vec<f64>,
    center: Vec<f64>,
    attribute: Option<usize>,
    t: f64,
    noise: Vec<f64>,
    uncond: bool,
    anchor_ref: Vec<f64>,
    anchor_w: f64,
    alpha: f64,
}

fn draw_item(world: &SyntheticWorld, identities: &[usize], cfg: &TrainConfig, rng: &mut Rng) -> Item {
    let center = if identities.is_empty() || rng.bernoulli(cfg.novel_identity_rate) {
        world.sample_center(rng)
    } else {
        world.centers[identities[rng.below(identities.len())]].clone()
    };
    let attribute = if rng.bernoulli(0.5) { Some(rng.below(world.offsets.len())) } else { None };
    let x0 = world.draw(&center, attribute, rng);
    let t = rng.uniform();
    let noise = rng.normal_vec(world.dim());
    let uncond = rng.bernoulli(cfg.p_uncond);
    let anchor_w = if rng.bernoulli(cfg.p_anchor_drop) { 0.0 } else { rng.uniform_range(cfg.anchor_weight_min, 1.0) };
    let anchor_ref = if rng.bernoulli(cfg.anchor_swap_rate) {
        let other = if rng.bernoulli(0.5) { Some(rng.below(world.offsets.len())) } else { None };
        world.draw(&center, other, rng)
    } else {
        x0.clone()
    };
    let alpha = rng.uniform_range(0.0, cfg.sip_alpha_max);
    Item { x0, center, attribute, t, noise, uncond, anchor_ref, anchor_w, alpha: if uncond { 0.0 } else { alpha } }
}

fn rows(items: &[Item], f: impl Fn(&Item) -> Vec<f64>) -> Tensor {
    Tensor::from_rows(&items.iter().map(f).collect::<Vec<_>>()).expect("uniform rows")
}

/// Builds the batch loss `mean_i ||v_i - v*_i||^2`.
fn batch_loss(fw: &mut Forward<'_>, layout: &StackLayout, vocab: usize, items: &[Item]) -> Result<NodeId> {
    let b = items.len();
    let d = layout.arch.d_model;
    let x_t = fw
        .g
        .constant(rows(items, |it| it.x0.iter().zip(&it.noise).map(|(x, e)| (1.0 - it.t) * x + it.t * e).collect()));
    let target = fw.g.constant(rows(items, |it| it.noise.iter().zip(&it.x0).map(|(e, x)| e - x).collect()));
    let t: Vec<f64> = items.iter().map(|it| it.t).collect();

    // Dropped items get an all-zero one-hot row and hence a zero context.
    let mut oh = vec![0.0; b * CONTEXT_LEN * vocab];
    for (i, it) in items.iter().enumerate() {
        if it.uncond {
            continue;
        }
        for (j, tok) in TrainedStack::context_tokens(it.attribute).into_iter().enumerate() {
            oh[(i * CONTEXT_LEN + j) * vocab + tok] = 1.0;
        }
    }
    let oh = fw.g.constant(Tensor::new([b * CONTEXT_LEN, vocab], oh)?);
    let table = fw.p(layout.text_embed);
    let base = fw.g.matmul(oh, table)?;

    let centers = fw.g.constant(rows(items, |it| it.center.clone()));
    let vis = crate::sip::features_graph(fw, &layout.sip, centers)?;
    let delta = crate::sip::delta_graph(fw, &layout.sip, vis, base, b)?;
    let alphas: Vec<f64> = items.iter().flat_map(|it| std::iter::repeat_n(it.alpha, CONTEXT_LEN * d)).collect();
    let alphas = fw.g.constant(Tensor::new([b * CONTEXT_LEN, d], alphas)?);
    let delta = fw.g.mul(delta, alphas)?;
    let ctx = fw.g.add(base, delta)?;

    let anchor_ref = fw.g.constant(rows(items, |it| it.anchor_ref.clone()));
    let anchor_tokens = crate::vfa::embedding_graph(fw, &layout.vfa, anchor_ref)?;
    let anchor = AnchorInput { tokens: anchor_tokens, weights: items.iter().map(|it| it.anchor_w).collect() };

    let v = velocity(fw, layout, x_t, &t, ctx, Some(&anchor))?;
    let diff = fw.g.sub(v, target)?;
    let sq = fw.g.mul(diff, diff)?;
    let total = fw.g.sum(sq);
    Ok(fw.g.scale(total, 1.0 / b as f64))
}

fn eval_loss(stack: &TrainedStack, items: &[Item]) -> Result<f64> {
    let mut fw = Forward::new(&stack.params, false);
    let loss = batch_loss(&mut fw, &stack.layout, stack.vocab(), items)?;
    Ok(fw.g.value(loss).data()[0])
}

/// Trains a stack from scratch. Zero steps returns the initialisation.
pub fn train(world_cfg: &WorldConfig, arch: &ArchConfig, cfg: &TrainConfig) -> Result<TrainedStack> {
    let mut stack = TrainedStack::untrained(world_cfg, arch, cfg)?;
    let identities = stack.world.training_identities();
    let mut eval_rng = Rng::from_label(cfg.seed, "eval");
    let eval_items: Vec<Item> =
        (0..cfg.eval_samples).map(|_| draw_item(&stack.world, &identities, cfg, &mut eval_rng)).collect();
    let initial = eval_loss(&stack, &eval_items)?;
    stack.meta.initial_loss = Some(initial);

    let mut state = AdamState::new(stack.params.values());
    for step in 0..cfg.steps {
        let mut rng = Rng::derive(cfg.seed, "data", step as u64);
        let items: Vec<Item> =
            (0..cfg.batch_size).map(|_| draw_item(&stack.world, &identities, cfg, &mut rng)).collect();
        let mut fw = Forward::new(&stack.params, true);
        let loss = batch_loss(&mut fw, &stack.layout, stack.vocab(), &items)?;
        let value = fw.g.value(loss).data()[0];
        if !value.is_finite() {
            return Err(Error::Divergence { step, loss: value });
        }
        let grads = fw.g.backward(loss)?;
        let grads: Vec<Tensor> = fw
            .bound()
            .iter()
            .zip(stack.params.values())
            .map(|(node, p)| {
                node.and_then(|n| grads.get(n).cloned()).unwrap_or_else(|| Tensor::zeros(p.shape().to_vec()))
            })
            .collect();
        drop(fw);
        adam_step(stack.params.values_mut(), &grads, &mut state, &cfg.adam(step))?;
        if !stack.params.all_finite() {
            return Err(Error::Divergence { step, loss: value });
        }
    }

    stack.meta.steps = cfg.steps;
    stack.meta.final_loss = Some(if cfg.steps == 0 { initial } else { eval_loss(&stack, &eval_items)? });
    Ok(stack)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small() -> (WorldConfig, ArchConfig, TrainConfig) {
        let arch = ArchConfig { d_model: 8, ffn_mult: 2, blocks: 1, time_features: 4, ..Default::default() };
        let train = TrainConfig { steps: 3, batch_size: 4, eval_samples: 8, ..Default::default() };
        (WorldConfig::default(), arch, train)
    }

    #[test]
    fn zero_steps_returns_initialisation() {
        let (w, a, t) = small();
        let t = TrainConfig { steps: 0, ..t };
        let s = train(&w, &a, &t).unwrap();
        let init = TrainedStack::untrained(&w, &a, &t).unwrap();
        assert_eq!(s.params, init.params);
        assert_eq!(s.meta.initial_loss, s.meta.final_loss);
    }

    #[test]
    fn training_is_deterministic_and_moves_parameters() {
        let (w, a, t) = small();
        let s1 = train(&w, &a, &t).unwrap();
        let s2 = train(&w, &a, &t).unwrap();
        assert_eq!(s1.params, s2.params);
        assert_ne!(s1.params, TrainedStack::untrained(&w, &a, &t).unwrap().params);
        assert_eq!(s1.meta.steps, 3);
    }

    #[test]
    fn huge_learning_rate_diverges_or_stays_finite() {
        let (w, a, t) = small();
        let t = TrainConfig { lr: 1e300, steps: 5, cosine_decay: false, ..t };
        match train(&w, &a, &t) {
            Err(Error::Divergence { .. }) => {}
            Ok(s) => assert!(s.params.all_finite()),
            Err(e) => panic!("unexpected error {e}"),
        }
    }

    #[test]
    fn cosine_schedule_endpoints() {
        let t = TrainConfig { steps: 11, ..Default::default() };
        assert_eq!(t.adam(0).lr, t.lr);
        assert!((t.adam(10).lr - t.lr * t.min_lr_fraction).abs() < 1e-15);
    }

    #[test]
    fn invalid_config_rejected() {
        assert!(TrainConfig { p_uncond: 1.5, ..Default::default() }.validate().is_err());
        assert!(TrainConfig { batch_size: 0, ..Default::default() }.validate().is_err());
        assert!(TrainConfig { lr: 0.0, ..Default::default() }.validate().is_err());
    }
}
