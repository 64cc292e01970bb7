//! The toy denoiser: a small transformer predicting flow-matching velocity
//! for a latent split into `latent_tokens` patches, conditioned on a context
//! embedding through cross-attention, with a decoupled identity branch in
//! every injected cross-attention layer.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::math::{Graph, NodeId, Rng, Tensor};
use crate::sip::SipLayout;
use crate::vfa::{AnchorLayout, VfaLayout};

/// Context slots: the subject token and the attribute token.
pub const CONTEXT_LEN: usize = 2;
pub const SUBJECT_TOKEN: usize = 0;
pub const NO_ATTRIBUTE_TOKEN: usize = 1;

pub fn attribute_token(attribute: usize) -> usize {
    2 + attribute
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ArchConfig {
    /// Number of patches the latent vector is split into.
    pub latent_tokens: usize,
    pub d_model: usize,
    pub heads: usize,
    pub blocks: usize,
    pub ffn_mult: usize,
    /// Local identity tokens next to the single global token.
    pub local_tokens: usize,
    /// Visual feature tokens seen by the semantic projector.
    pub sip_tokens: usize,
    /// Width of each semantic-projector feature token.
    pub sip_width: usize,
    pub time_features: usize,
    /// Per-block flag enabling the identity branch; `None` injects every block.
    pub inject_layers: Option<Vec<bool>>,
}

impl Default for ArchConfig {
    fn default() -> Self {
        ArchConfig {
            latent_tokens: 4,
            d_model: 32,
            heads: 2,
            blocks: 2,
            ffn_mult: 4,
            local_tokens: 3,
            sip_tokens: 2,
            sip_width: 2,
            time_features: 16,
            inject_layers: None,
        }
    }
}

impl ArchConfig {
    pub fn validate(&self, dim: usize) -> Result<()> {
        let fail = |m: String| Err(Error::Config(m));
        if self.d_model == 0 || self.heads == 0 || !self.d_model.is_multiple_of(self.heads) {
            return fail(format!("d_model {} not divisible into {} heads", self.d_model, self.heads));
        }
        if self.latent_tokens == 0 || !dim.is_multiple_of(self.latent_tokens) {
            return fail(format!("latent dim {dim} not divisible into {} tokens", self.latent_tokens));
        }
        if self.local_tokens == 0 || self.local_tokens > dim {
            return fail(format!("local_tokens must be in 1..={dim}, got {}", self.local_tokens));
        }
        if self.sip_tokens == 0 || self.sip_width == 0 {
            return fail("semantic projector needs at least one token of positive width".into());
        }
        if self.blocks == 0 || self.ffn_mult == 0 {
            return fail("need at least one block and a positive ffn_mult".into());
        }
        if self.time_features < 2 || !self.time_features.is_multiple_of(2) {
            return fail(format!("time_features must be even and >= 2, got {}", self.time_features));
        }
        if let Some(mask) = &self.inject_layers {
            if mask.len() != self.blocks {
                return fail(format!("inject_layers has {} flags for {} blocks", mask.len(), self.blocks));
            }
        }
        Ok(())
    }

    pub fn head_dim(&self) -> usize {
        self.d_model / self.heads
    }

    pub fn injected(&self, block: usize) -> bool {
        self.inject_layers.as_ref().is_none_or(|m| m[block])
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct ParamId(usize);

/// Named parameter tensors in registration order.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct ParamSet {
    names: Vec<String>,
    values: Vec<Tensor>,
}

impl ParamSet {
    pub fn add(&mut self, name: impl Into<String>, value: Tensor) -> ParamId {
        self.names.push(name.into());
        self.values.push(value);
        ParamId(self.values.len() - 1)
    }

    pub fn get(&self, id: ParamId) -> &Tensor {
        &self.values[id.0]
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn values(&self) -> &[Tensor] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [Tensor] {
        &mut self.values
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &Tensor)> {
        self.names.iter().map(String::as_str).zip(&self.values)
    }

    pub fn by_name(&self, name: &str) -> Option<&Tensor> {
        self.names.iter().position(|n| n == name).map(|i| &self.values[i])
    }

    pub fn total_len(&self) -> usize {
        self.values.iter().map(Tensor::numel).sum()
    }

    pub fn all_finite(&self) -> bool {
        self.values.iter().all(Tensor::is_finite)
    }

    /// Replaces every value from `(name, tensor)` pairs. The names must be
    /// exactly this set's names and every shape must match.
    pub fn replace_all(&mut self, incoming: Vec<(String, Tensor)>) -> Result<()> {
        if incoming.len() != self.values.len() {
            return Err(Error::Validation(format!(
                "expected {} parameter tensors, found {}",
                self.values.len(),
                incoming.len()
            )));
        }
        let mut seen = vec![false; self.values.len()];
        for (name, t) in incoming {
            let idx = self
                .names
                .iter()
                .position(|n| *n == name)
                .ok_or_else(|| Error::Validation(format!("unexpected parameter `{name}`")))?;
            if seen[idx] {
                return Err(Error::Validation(format!("parameter `{name}` given twice")));
            }
            if t.shape() != self.values[idx].shape() {
                return Err(Error::dim("parameter shape", self.values[idx].shape(), t.shape()));
            }
            if !t.is_finite() {
                return Err(Error::Validation(format!("parameter `{name}` has non-finite values")));
            }
            seen[idx] = true;
            self.values[idx] = t;
        }
        Ok(())
    }
}

/// Registers parameters with their initial values.
pub(crate) struct Init<'a> {
    pub params: ParamSet,
    pub rng: &'a mut Rng,
}

impl Init<'_> {
    /// `[fan_in x fan_out]` matrix with entries of standard deviation
    /// `1 / sqrt(fan_in)`.
    pub fn matrix(&mut self, name: &str, fan_in: usize, fan_out: usize) -> ParamId {
        let std = 1.0 / (fan_in as f64).sqrt();
        let data = (0..fan_in * fan_out).map(|_| std * self.rng.normal()).collect();
        let t = Tensor::new([fan_in, fan_out], data).expect("sizes agree");
        self.params.add(name, t)
    }

    pub fn normal(&mut self, name: &str, rows: usize, cols: usize, std: f64) -> ParamId {
        let data = (0..rows * cols).map(|_| std * self.rng.normal()).collect();
        let t = Tensor::new([rows, cols], data).expect("sizes agree");
        self.params.add(name, t)
    }

    pub fn zeros(&mut self, name: &str, n: usize) -> ParamId {
        self.params.add(name, Tensor::zeros([1, n]))
    }

    pub fn ones(&mut self, name: &str, n: usize) -> ParamId {
        self.params.add(name, Tensor::full([1, n], 1.0))
    }
}

/// A forward pass under construction. Parameters are bound into the graph on
/// first use, as trainable leaves or as constants.
pub struct Forward<'p> {
    pub g: Graph,
    params: &'p ParamSet,
    bound: Vec<Option<NodeId>>,
    trainable: bool,
}

impl<'p> Forward<'p> {
    pub fn new(params: &'p ParamSet, trainable: bool) -> Self {
        Forward { g: Graph::new(), params, bound: vec![None; params.len()], trainable }
    }

    pub fn p(&mut self, id: ParamId) -> NodeId {
        if let Some(n) = self.bound[id.0] {
            return n;
        }
        let value = self.params.get(id).clone();
        let n = if self.trainable { self.g.param(value) } else { self.g.constant(value) };
        self.bound[id.0] = Some(n);
        n
    }

    /// Graph node for every parameter used so far, by parameter index.
    pub fn bound(&self) -> &[Option<NodeId>] {
        &self.bound
    }

    /// `x W + b`.
    pub fn linear(&mut self, x: NodeId, w: ParamId, b: Option<ParamId>) -> Result<NodeId> {
        let wn = self.p(w);
        let y = self.g.matmul(x, wn)?;
        match b {
            Some(b) => {
                let bn = self.p(b);
                self.g.add_row_bias(y, bn)
            }
            None => Ok(y),
        }
    }

    /// Multi-head scaled dot-product attention over a batch.
    ///
    /// `q` is `[batch*lq x d]`, `k` and `v` are `[batch*lk x d]`; each batch
    /// item attends only to its own keys. Returns `[batch*lq x d]`.
    pub fn attention(&mut self, q: NodeId, k: NodeId, v: NodeId, batch: usize, heads: usize) -> Result<NodeId> {
        let d = self.g.value(q).cols();
        let lq = self.g.value(q).rows() / batch;
        let lk = self.g.value(k).rows() / batch;
        let dh = d / heads;
        let scale = 1.0 / (dh as f64).sqrt();
        let mut outs = Vec::with_capacity(heads);
        for h in 0..heads {
            let (qh, kh, vh) = if heads == 1 {
                (q, k, v)
            } else {
                (
                    self.g.slice_cols(q, h * dh, dh)?,
                    self.g.slice_cols(k, h * dh, dh)?,
                    self.g.slice_cols(v, h * dh, dh)?,
                )
            };
            let qh = self.g.reshape(qh, &[batch, lq, dh])?;
            let kh = self.g.reshape(kh, &[batch, lk, dh])?;
            let vh = self.g.reshape(vh, &[batch, lk, dh])?;
            let scores = self.g.batch_matmul(qh, kh, true)?;
            let scores = self.g.scale(scores, scale);
            let probs = self.g.softmax(scores);
            let out = self.g.batch_matmul(probs, vh, false)?;
            outs.push(self.g.reshape(out, &[batch * lq, dh])?);
        }
        if outs.len() == 1 {
            Ok(outs[0])
        } else {
            self.g.concat_cols(&outs)
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct BlockLayout {
    pub ln1: (ParamId, ParamId),
    pub sa_q: ParamId,
    pub sa_k: ParamId,
    pub sa_v: ParamId,
    pub sa_o: (ParamId, ParamId),
    pub ln2: (ParamId, ParamId),
    pub ca_q: ParamId,
    pub ca_k: ParamId,
    pub ca_v: ParamId,
    pub ca_o: (ParamId, ParamId),
    pub anchor: Option<AnchorLayout>,
    pub ln3: (ParamId, ParamId),
    pub ff1: (ParamId, ParamId),
    pub ff2: (ParamId, ParamId),
}

/// Where every parameter of the stack lives in its [`ParamSet`].
#[derive(Clone, Debug, PartialEq)]
pub struct StackLayout {
    pub dim: usize,
    pub arch: ArchConfig,
    pub text_embed: ParamId,
    pub lat_in: (ParamId, ParamId),
    pub lat_pos: ParamId,
    pub time1: (ParamId, ParamId),
    pub time2: (ParamId, ParamId),
    pub blocks: Vec<BlockLayout>,
    pub ln_out: (ParamId, ParamId),
    pub out: (ParamId, ParamId),
    pub vfa: VfaLayout,
    pub sip: SipLayout,
}

impl StackLayout {
    /// Registers and initialises every parameter for a latent of size `dim`
    /// and `attributes` attribute tokens.
    pub fn init(dim: usize, attributes: usize, arch: &ArchConfig, seed: u64) -> Result<(Self, ParamSet)> {
        arch.validate(dim)?;
        let mut rng = Rng::from_label(seed, "init");
        let mut init = Init { params: ParamSet::default(), rng: &mut rng };
        let d = arch.d_model;
        let patch = dim / arch.latent_tokens;
        let vocab = 2 + attributes;

        let text_embed = init.normal("text.embed", vocab, d, 1.0);
        let lat_in = (init.matrix("latent.in.w", patch, d), init.zeros("latent.in.b", d));
        let lat_pos = init.normal("latent.pos", arch.latent_tokens, d, 0.5);
        let time1 = (init.matrix("time.w1", arch.time_features, d), init.zeros("time.b1", d));
        let time2 = (init.matrix("time.w2", d, d), init.zeros("time.b2", d));

        let mut blocks = Vec::with_capacity(arch.blocks);
        for b in 0..arch.blocks {
            let n = |s: &str| format!("block{b}.{s}");
            let ln1 = (init.ones(&n("ln1.g"), d), init.zeros(&n("ln1.b"), d));
            let sa_q = init.matrix(&n("self.q"), d, d);
            let sa_k = init.matrix(&n("self.k"), d, d);
            let sa_v = init.matrix(&n("self.v"), d, d);
            let sa_o = (init.matrix(&n("self.o.w"), d, d), init.zeros(&n("self.o.b"), d));
            let ln2 = (init.ones(&n("ln2.g"), d), init.zeros(&n("ln2.b"), d));
            let ca_q = init.matrix(&n("cross.q"), d, d);
            let ca_k = init.matrix(&n("cross.k"), d, d);
            let ca_v = init.matrix(&n("cross.v"), d, d);
            let ca_o = (init.matrix(&n("cross.o.w"), d, d), init.zeros(&n("cross.o.b"), d));
            let anchor = arch.injected(b).then(|| AnchorLayout {
                key: init.matrix(&n("anchor.k"), d, d),
                value: init.matrix(&n("anchor.v"), d, d),
            });
            let ln3 = (init.ones(&n("ln3.g"), d), init.zeros(&n("ln3.b"), d));
            let hidden = d * arch.ffn_mult;
            let ff1 = (init.matrix(&n("ff.w1"), d, hidden), init.zeros(&n("ff.b1"), hidden));
            let ff2 = (init.matrix(&n("ff.w2"), hidden, d), init.zeros(&n("ff.b2"), d));
            blocks.push(BlockLayout {
                ln1,
                sa_q,
                sa_k,
                sa_v,
                sa_o,
                ln2,
                ca_q,
                ca_k,
                ca_v,
                ca_o,
                anchor,
                ln3,
                ff1,
                ff2,
            });
        }
        let ln_out = (init.ones("out.ln.g", d), init.zeros("out.ln.b", d));
        let out = (init.matrix("out.w", d, patch), init.zeros("out.b", patch));
        let vfa = VfaLayout::init(&mut init, dim, arch);
        let sip = SipLayout::init(&mut init, dim, arch);

        let layout = StackLayout {
            dim,
            arch: arch.clone(),
            text_embed,
            lat_in,
            lat_pos,
            time1,
            time2,
            blocks,
            ln_out,
            out,
            vfa,
            sip,
        };
        Ok((layout, init.params))
    }

    pub fn patch(&self) -> usize {
        self.dim / self.arch.latent_tokens
    }
}

/// Sinusoidal features of the flow time, `[batch x time_features]`.
pub fn time_features(t: &[f64], count: usize) -> Tensor {
    let half = count / 2;
    let mut data = Vec::with_capacity(t.len() * count);
    for &ti in t {
        for j in 0..half {
            let freq = if half == 1 { 1.0 } else { (j as f64 * (200f64).ln() / (half - 1) as f64).exp() };
            data.push((freq * ti).sin());
        }
        for j in 0..half {
            let freq = if half == 1 { 1.0 } else { (j as f64 * (200f64).ln() / (half - 1) as f64).exp() };
            data.push((freq * ti).cos());
        }
    }
    Tensor::new([t.len(), count], data).expect("sizes agree")
}

/// Identity-branch input to the denoiser.
pub struct AnchorInput {
    /// Identity embedding tokens, `[batch*(1+local_tokens) x d_model]`.
    pub tokens: NodeId,
    /// Anchor weight per batch item.
    pub weights: Vec<f64>,
}

/// Predicted velocity `[batch x dim]` for latents `x_t` (`[batch x dim]`) at
/// times `t`, with context `ctx` (`[batch*CONTEXT_LEN x d_model]`).
pub fn velocity(
    fw: &mut Forward<'_>,
    layout: &StackLayout,
    x_t: NodeId,
    t: &[f64],
    ctx: NodeId,
    anchor: Option<&AnchorInput>,
) -> Result<NodeId> {
    let arch = &layout.arch;
    let batch = t.len();
    let lat = arch.latent_tokens;
    let d = arch.d_model;
    if fw.g.value(x_t).shape() != [batch, layout.dim] {
        return Err(Error::dim("velocity input", fw.g.value(x_t).shape(), &[batch, layout.dim]));
    }
    if fw.g.value(ctx).shape() != [batch * CONTEXT_LEN, d] {
        return Err(Error::dim("velocity context", fw.g.value(ctx).shape(), &[batch * CONTEXT_LEN, d]));
    }

    let patches = fw.g.reshape(x_t, &[batch * lat, layout.patch()])?;
    let mut h = fw.linear(patches, layout.lat_in.0, Some(layout.lat_in.1))?;
    let pos = fw.p(layout.lat_pos);
    let pos = fw.g.tile_rows(pos, batch)?;
    h = fw.g.add(h, pos)?;

    let tf = fw.g.constant(time_features(t, arch.time_features));
    let te = fw.linear(tf, layout.time1.0, Some(layout.time1.1))?;
    let te = fw.g.gelu(te);
    let te = fw.linear(te, layout.time2.0, Some(layout.time2.1))?;
    let te = fw.g.repeat_rows(te, lat)?;
    h = fw.g.add(h, te)?;

    let anchor_weights = match anchor {
        Some(a) => {
            if a.weights.len() != batch {
                return Err(Error::dim("anchor weights", &[a.weights.len()], &[batch]));
            }
            let mut w = Vec::with_capacity(batch * lat * d);
            for &wi in &a.weights {
                w.extend(std::iter::repeat_n(wi, lat * d));
            }
            Some(fw.g.constant(Tensor::new([batch * lat, d], w)?))
        }
        None => None,
    };

    for block in &layout.blocks {
        let a = layer_norm(fw, h, block.ln1)?;
        let q = fw.linear(a, block.sa_q, None)?;
        let k = fw.linear(a, block.sa_k, None)?;
        let v = fw.linear(a, block.sa_v, None)?;
        let sa = fw.attention(q, k, v, batch, arch.heads)?;
        let sa = fw.linear(sa, block.sa_o.0, Some(block.sa_o.1))?;
        h = fw.g.add(h, sa)?;

        let a = layer_norm(fw, h, block.ln2)?;
        let q = fw.linear(a, block.ca_q, None)?;
        let k = fw.linear(ctx, block.ca_k, None)?;
        let v = fw.linear(ctx, block.ca_v, None)?;
        let mut ca = fw.attention(q, k, v, batch, arch.heads)?;
        if let (Some(anchor), Some(proj), Some(wn)) = (anchor, &block.anchor, anchor_weights) {
            let branch = crate::vfa::identity_branch(fw, proj, q, anchor.tokens, batch, arch.heads)?;
            let branch = fw.g.mul(branch, wn)?;
            ca = fw.g.add(ca, branch)?;
        }
        let ca = fw.linear(ca, block.ca_o.0, Some(block.ca_o.1))?;
        h = fw.g.add(h, ca)?;

        let a = layer_norm(fw, h, block.ln3)?;
        let f = fw.linear(a, block.ff1.0, Some(block.ff1.1))?;
        let f = fw.g.gelu(f);
        let f = fw.linear(f, block.ff2.0, Some(block.ff2.1))?;
        h = fw.g.add(h, f)?;
    }

    let h = layer_norm(fw, h, layout.ln_out)?;
    let out = fw.linear(h, layout.out.0, Some(layout.out.1))?;
    fw.g.reshape(out, &[batch, layout.dim])
}

fn layer_norm(fw: &mut Forward<'_>, x: NodeId, (g, b): (ParamId, ParamId)) -> Result<NodeId> {
    let gn = fw.p(g);
    let bn = fw.p(b);
    fw.g.layer_norm(x, gn, bn)
}

/// One-hot rows selecting context tokens, `[tokens.len() x vocab]`.
pub fn one_hot(tokens: &[usize], vocab: usize) -> Result<Tensor> {
    let mut data = vec![0.0; tokens.len() * vocab];
    for (i, &t) in tokens.iter().enumerate() {
        if t >= vocab {
            return Err(Error::Lookup(format!("token {t} outside vocabulary of {vocab}")));
        }
        data[i * vocab + t] = 1.0;
    }
    Tensor::new([tokens.len(), vocab], data)
}
