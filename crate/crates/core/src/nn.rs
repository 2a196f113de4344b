//! Network building blocks: parameter storage, linear layers and MLPs,
//! SGD with momentum, and the training-progress schedules for the learning
//! rate and the gradient-reversal coefficient.
//!
//! Parameters live in a [`ParamStore`] that persists across training steps.
//! At the start of each step the store is bound into a fresh graph as leaves
//! ([`ParamStore::bind_all`]); after `backward` the optimizer reads the leaf
//! gradients back out and updates the store in place.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use crate::autodiff::{Graph, Tensor};
use crate::error::Error;
use crate::rng::Rng;

/// Handle to one parameter buffer in a [`ParamStore`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ParamId(pub usize);

/// One persistent parameter matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct ParamBuf {
    pub rows: usize,
    pub cols: usize,
    pub values: Vec<f64>,
}

/// Owns every trainable parameter of a model, in registration order.
/// Registration order is also the serialization order of the model file.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ParamStore {
    params: Vec<ParamBuf>,
}

impl ParamStore {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn register(&mut self, rows: usize, cols: usize, values: Vec<f64>) -> ParamId {
        debug_assert_eq!(values.len(), rows * cols);
        let id = ParamId(self.params.len());
        self.params.push(ParamBuf { rows, cols, values });
        id
    }

    pub fn len(&self) -> usize {
        self.params.len()
    }

    pub fn is_empty(&self) -> bool {
        self.params.is_empty()
    }

    pub fn buf(&self, id: ParamId) -> &ParamBuf {
        &self.params[id.0]
    }

    pub fn buf_mut(&mut self, id: ParamId) -> &mut ParamBuf {
        &mut self.params[id.0]
    }

    pub fn buffers(&self) -> impl Iterator<Item = &ParamBuf> {
        self.params.iter()
    }

    /// Total number of scalar parameters.
    pub fn scalar_count(&self) -> usize {
        self.params.iter().map(|p| p.values.len()).sum()
    }

    /// Inserts every parameter into `g` as a leaf, in registration order.
    pub fn bind_all(&self, g: &mut Graph) -> Bindings {
        let tensors = self
            .params
            .iter()
            .map(|p| {
                g.leaf(p.values.clone(), p.rows, p.cols)
                    .expect("parameter buffers always have consistent shapes")
            })
            .collect();
        Bindings { tensors }
    }
}

/// Per-step mapping from parameters to their graph leaves.
#[derive(Debug, Clone)]
pub struct Bindings {
    tensors: Vec<Tensor>,
}

impl Bindings {
    pub fn tensor(&self, id: ParamId) -> Tensor {
        self.tensors[id.0]
    }

    pub fn len(&self) -> usize {
        self.tensors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tensors.is_empty()
    }
}

/// A fully-connected layer `x · W + b` with `W: in x out`, `b: 1 x out`.
#[derive(Debug, Clone)]
pub struct LinearLayer {
    pub weight: ParamId,
    pub bias: ParamId,
    pub in_dim: usize,
    pub out_dim: usize,
}

/// Multilayer perceptron: affine layers with relu between them and no
/// activation after the last.
#[derive(Debug, Clone)]
pub struct Mlp {
    layers: Vec<LinearLayer>,
}

/// Glorot-uniform initialized MLP with zero biases; deterministic for a
/// fixed seed.
pub fn init_params(store: &mut ParamStore, dims: &[usize], seed: u64) -> Result<Mlp, Error> {
    Mlp::init(store, dims, &mut Rng::new(seed))
}

impl Mlp {
    /// Builds layers `dims[0] -> dims[1] -> ... -> dims.last()`, drawing
    /// weights uniformly in `±sqrt(6 / (fan_in + fan_out))`.
    pub fn init(store: &mut ParamStore, dims: &[usize], rng: &mut Rng) -> Result<Self, Error> {
        if dims.len() < 2 {
            return Err(Error::Config(format!(
                "an MLP needs at least 2 layer sizes, got {}",
                dims.len()
            )));
        }
        if let Some(&zero) = dims.iter().find(|&&d| d == 0) {
            return Err(Error::Config(format!(
                "layer size must be >= 1, got {zero}"
            )));
        }
        let mut layers = Vec::with_capacity(dims.len() - 1);
        for w in dims.windows(2) {
            let (fan_in, fan_out) = (w[0], w[1]);
            let bound = libm::sqrt(6.0 / (fan_in + fan_out) as f64);
            let weights: Vec<f64> = (0..fan_in * fan_out)
                .map(|_| rng.uniform(-bound, bound))
                .collect();
            let weight = store.register(fan_in, fan_out, weights);
            let bias = store.register(1, fan_out, vec![0.0; fan_out]);
            layers.push(LinearLayer {
                weight,
                bias,
                in_dim: fan_in,
                out_dim: fan_out,
            });
        }
        Ok(Mlp { layers })
    }

    pub fn layers(&self) -> &[LinearLayer] {
        &self.layers
    }

    pub fn in_dim(&self) -> usize {
        self.layers[0].in_dim
    }

    pub fn out_dim(&self) -> usize {
        self.layers[self.layers.len() - 1].out_dim
    }

    pub fn param_ids(&self) -> impl Iterator<Item = ParamId> + '_ {
        self.layers.iter().flat_map(|l| [l.weight, l.bias])
    }

    /// Forward pass, recording all intermediates on the graph.
    pub fn forward(&self, g: &mut Graph, bind: &Bindings, x: Tensor) -> Result<Tensor, Error> {
        if x.cols() != self.in_dim() {
            return Err(Error::Dimension {
                op: "mlp_forward",
                lhs: x.shape(),
                rhs: (self.in_dim(), self.out_dim()),
            });
        }
        let last = self.layers.len() - 1;
        let mut h = x;
        for (i, layer) in self.layers.iter().enumerate() {
            let wx = g.matmul(h, bind.tensor(layer.weight))?;
            h = g.add_row_broadcast(wx, bind.tensor(layer.bias))?;
            if i != last {
                h = g.relu(h);
            }
        }
        Ok(h)
    }
}

/// SGD with momentum: `v <- mu*v - eta*g; p <- p + v`, with an optional
/// per-parameter learning-rate multiplier.
#[derive(Debug, Clone)]
pub struct SgdMomentum {
    momentum: f64,
    velocity: Vec<Vec<f64>>,
    lr_multiplier: Vec<f64>,
}

impl SgdMomentum {
    /// Zero-initialized velocity buffers mirroring `store`'s shapes.
    pub fn new(store: &ParamStore, momentum: f64) -> Self {
        SgdMomentum {
            momentum,
            velocity: store.buffers().map(|p| vec![0.0; p.values.len()]).collect(),
            lr_multiplier: vec![1.0; store.len()],
        }
    }

    pub fn set_lr_multiplier(&mut self, id: ParamId, mult: f64) {
        self.lr_multiplier[id.0] = mult;
    }

    /// One update over every parameter, reading gradients from the bound
    /// graph leaves. Gradients themselves are left untouched.
    pub fn step(&mut self, store: &mut ParamStore, g: &Graph, bind: &Bindings, lr: f64) {
        for i in 0..store.len() {
            let id = ParamId(i);
            let grad = g.grad(bind.tensor(id));
            let eta = lr * self.lr_multiplier[i];
            let v = &mut self.velocity[i];
            let p = &mut store.buf_mut(id).values;
            for k in 0..p.len() {
                v[k] = self.momentum * v[k] - eta * grad[k];
                p[k] += v[k];
            }
        }
    }

    pub fn velocity(&self, id: ParamId) -> &[f64] {
        &self.velocity[id.0]
    }
}

/// Annealing schedules over training progress `p in [0, 1]`:
/// `lr(p) = eta0 / (1 + 10p)^0.75` and `lambda(p) = 2 / (1 + e^(-10p)) - 1`.
#[derive(Debug, Clone, Copy)]
pub struct Schedules {
    pub eta0: f64,
}

impl Schedules {
    pub fn new(eta0: f64) -> Self {
        Schedules { eta0 }
    }

    /// Progress outside `[0, 1]` is clamped.
    pub fn lr_at(&self, p: f64) -> f64 {
        let p = p.clamp(0.0, 1.0);
        self.eta0 / libm::pow(1.0 + 10.0 * p, 0.75)
    }

    /// Gradient-reversal coefficient; 0 at p = 0, saturating toward 1.
    /// Progress outside `[0, 1]` is clamped.
    pub fn grl_lambda_at(&self, p: f64) -> f64 {
        let p = p.clamp(0.0, 1.0);
        2.0 / (1.0 + libm::exp(-10.0 * p)) - 1.0
    }
}
