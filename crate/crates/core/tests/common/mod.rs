#![allow(dead_code)]

use std::sync::{Arc, OnceLock};

use flexid::experiment::{RunConfig, SweepRunner};
use flexid::harness::TrainedStack;
use flexid::math::{Graph, NodeId, Rng, Tensor};

/// The default stack, trained once per test binary.
pub fn default_stack() -> Arc<TrainedStack> {
    static STACK: OnceLock<Arc<TrainedStack>> = OnceLock::new();
    STACK.get_or_init(|| SweepRunner::new(None).stack_for(&RunConfig::default()).expect("default stack trains")).clone()
}

pub fn random_tensor(rng: &mut Rng, shape: &[usize], scale: f64) -> Tensor {
    let n = shape.iter().product();
    Tensor::new(shape.to_vec(), rng.normal_vec(n).into_iter().map(|v| v * scale).collect()).unwrap()
}

/// A random differentiable program over square `[n x n]` nodes.
pub struct RandomGraph {
    pub n: usize,
    pub ops: Vec<(u8, usize, usize, f64)>,
    pub params: Vec<Tensor>,
    pub weights: Tensor,
}

impl RandomGraph {
    pub fn new(seed: u64) -> Self {
        let mut rng = Rng::derive(seed, "random-graph", 0);
        let n = 2 + rng.below(3);
        let mut params: Vec<Tensor> = (0..3).map(|_| random_tensor(&mut rng, &[n, n], 1.0)).collect();
        params.push(random_tensor(&mut rng, &[1, n], 0.5));
        params.push(random_tensor(&mut rng, &[1, n], 0.5).map(|v| 1.0 + v));
        let len = 2 + rng.below(6);
        let mut ops = Vec::with_capacity(len);
        for i in 0..len {
            let live = 3 + i;
            ops.push((rng.below(12) as u8, rng.below(live), rng.below(live), rng.uniform_range(-1.5, 1.5)));
        }
        let weights = random_tensor(&mut rng, &[n, n], 1.0);
        RandomGraph { n, ops, params, weights }
    }

    /// Builds the graph for `params`, returning it with the param ids and the
    /// scalar loss.
    pub fn build(&self, params: &[Tensor]) -> (Graph, Vec<NodeId>, NodeId) {
        let n = self.n;
        let mut g = Graph::new();
        let ids: Vec<NodeId> = params.iter().map(|p| g.param(p.clone())).collect();
        let (bias, gain) = (ids[3], ids[4]);
        let mut nodes: Vec<NodeId> = ids[..3].to_vec();
        for &(op, a, b, c) in &self.ops {
            let (x, y) = (nodes[a], nodes[b]);
            let out = match op {
                0 => {
                    let m = g.matmul(x, y).unwrap();
                    g.scale(m, 0.5)
                }
                1 => g.add(x, y).unwrap(),
                2 => g.sub(x, y).unwrap(),
                3 => g.mul(x, y).unwrap(),
                4 => g.scale(x, c),
                5 => g.add_row_bias(x, bias).unwrap(),
                6 => g.softmax(x),
                7 => g.layer_norm(x, gain, bias).unwrap(),
                8 => g.gelu(x),
                9 => {
                    let left = g.slice_cols(x, 0, 1).unwrap();
                    let right = g.slice_cols(x, 1, n - 1).unwrap();
                    g.concat_cols(&[right, left]).unwrap()
                }
                10 => {
                    let xa = g.reshape(x, &[1, n, n]).unwrap();
                    let ya = g.reshape(y, &[1, n, n]).unwrap();
                    let m = g.batch_matmul(xa, ya, c > 0.0).unwrap();
                    let m = g.reshape(m, &[n, n]).unwrap();
                    g.scale(m, 0.5)
                }
                _ => {
                    let tiled = if c > 0.0 { g.tile_rows(x, 2).unwrap() } else { g.repeat_rows(x, 2).unwrap() };
                    let top = g.slice_rows(tiled, 0, 1).unwrap();
                    let rest = g.slice_rows(tiled, n + 1, n - 1).unwrap();
                    g.concat_rows(&[rest, top]).unwrap()
                }
            };
            nodes.push(out);
        }
        let w = g.constant(self.weights.clone());
        let last = *nodes.last().unwrap();
        let weighted = g.mul(last, w).unwrap();
        let loss = g.sum(weighted);
        (g, ids, loss)
    }

    pub fn loss(&self, params: &[Tensor]) -> f64 {
        let (g, _, loss) = self.build(params);
        g.value(loss).data()[0]
    }

    /// Largest relative error between the analytic gradient and central
    /// differences over every parameter entry.
    pub fn max_relative_error(&self) -> f64 {
        let (g, ids, loss) = self.build(&self.params);
        let grads = g.backward(loss).unwrap();
        let h = 1e-6;
        let mut worst: f64 = 0.0;
        for (p, id) in ids.iter().enumerate() {
            let analytic = grads.get(*id).cloned().unwrap_or_else(|| Tensor::zeros(self.params[p].shape().to_vec()));
            for k in 0..self.params[p].numel() {
                let mut plus = self.params.clone();
                plus[p].data_mut()[k] += h;
                let mut minus = self.params.clone();
                minus[p].data_mut()[k] -= h;
                let numeric = (self.loss(&plus) - self.loss(&minus)) / (2.0 * h);
                let a = analytic.data()[k];
                let err = (a - numeric).abs() / a.abs().max(numeric.abs()).max(1e-3);
                worst = worst.max(err);
            }
        }
        worst
    }
}
