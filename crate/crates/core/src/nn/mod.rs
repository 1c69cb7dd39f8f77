//! Small fully-connected networks with hand-written backprop and Adam.
//!
//! The policy head is a diagonal Gaussian: an MLP producing the mean plus a
//! state-independent `log_std` vector. The value head is the same MLP shape
//! with a single linear output. Hidden layers use ReLU; outputs are linear.
//!
//! Everything is `f64` in plain `Vec`s with a fixed evaluation order, so any
//! two runs over the same data produce bitwise-identical results.

mod checkpoint;

pub use checkpoint::{read_checkpoint, write_checkpoint, CheckpointError};

use alloc::vec;
use alloc::vec::Vec;

use rand::Rng;
use rand_distr::StandardNormal;

/// Clamp band for the Gaussian head's log standard deviation.
pub const LOG_STD_MIN: f64 = -5.0;
pub const LOG_STD_MAX: f64 = 2.0;

const ADAM_BETA1: f64 = 0.9;
const ADAM_BETA2: f64 = 0.999;
const ADAM_EPS: f64 = 1e-8;

#[derive(Debug, Clone, PartialEq)]
pub enum NnError {
    /// Input length does not match the network's input dimension.
    ShapeMismatch { expected: usize, got: usize },
    /// Layer size list is unusable (fewer than two entries or a zero size).
    BadArchitecture,
}

impl core::fmt::Display for NnError {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        match self {
            NnError::ShapeMismatch { expected, got } => {
                write!(f, "input length {got} does not match network input {expected}")
            }
            NnError::BadArchitecture => write!(f, "layer sizes must be >= 2 entries, all nonzero"),
        }
    }
}

impl core::error::Error for NnError {}

/// Fully-connected network. `weights[l]` is row-major `(sizes[l+1] x sizes[l])`.
#[derive(Debug, Clone, PartialEq)]
pub struct Mlp {
    sizes: Vec<usize>,
    weights: Vec<Vec<f64>>,
    biases: Vec<Vec<f64>>,
}

/// Per-layer post-activation scratch reused across forward passes. Keeping a
/// copy of the input makes the cache self-contained for backprop.
#[derive(Debug, Clone)]
pub struct Activations {
    input: Vec<f64>,
    layers: Vec<Vec<f64>>,
}

impl Activations {
    pub fn for_mlp(mlp: &Mlp) -> Self {
        Activations {
            input: vec![0.0; mlp.sizes[0]],
            layers: mlp.sizes[1..].iter().map(|&n| vec![0.0; n]).collect(),
        }
    }

    pub fn output(&self) -> &[f64] {
        self.layers.last().expect("mlp has at least one layer")
    }
}

/// Gradient accumulator mirroring an [`Mlp`]'s tensors.
#[derive(Debug, Clone, PartialEq)]
pub struct MlpGrads {
    pub weights: Vec<Vec<f64>>,
    pub biases: Vec<Vec<f64>>,
}

impl MlpGrads {
    pub fn zeros_like(mlp: &Mlp) -> Self {
        MlpGrads {
            weights: mlp.weights.iter().map(|w| vec![0.0; w.len()]).collect(),
            biases: mlp.biases.iter().map(|b| vec![0.0; b.len()]).collect(),
        }
    }

    pub fn zero(&mut self) {
        for t in self.weights.iter_mut().chain(self.biases.iter_mut()) {
            t.iter_mut().for_each(|v| *v = 0.0);
        }
    }
}

impl Mlp {
    /// All-zero network with the given layer sizes `[in, hidden.., out]`.
    pub fn zeros(sizes: &[usize]) -> Result<Self, NnError> {
        if sizes.len() < 2 || sizes.iter().any(|&n| n == 0) {
            return Err(NnError::BadArchitecture);
        }
        let mut weights = Vec::new();
        let mut biases = Vec::new();
        for w in sizes.windows(2) {
            weights.push(vec![0.0; w[0] * w[1]]);
            biases.push(vec![0.0; w[1]]);
        }
        Ok(Mlp { sizes: sizes.to_vec(), weights, biases })
    }

    /// Random init: orthogonal weight matrices with gain sqrt(2) on hidden
    /// layers and `out_gain` on the output layer; zero biases.
    pub fn orthogonal_init<R: Rng>(
        sizes: &[usize],
        out_gain: f64,
        rng: &mut R,
    ) -> Result<Self, NnError> {
        let mut mlp = Mlp::zeros(sizes)?;
        let last = mlp.weights.len() - 1;
        for l in 0..mlp.weights.len() {
            let gain = if l == last { out_gain } else { libm::sqrt(2.0) };
            mlp.weights[l] = orthogonal_matrix(sizes[l + 1], sizes[l], gain, rng);
        }
        Ok(mlp)
    }

    pub fn sizes(&self) -> &[usize] {
        &self.sizes
    }

    pub fn input_dim(&self) -> usize {
        self.sizes[0]
    }

    pub fn output_dim(&self) -> usize {
        *self.sizes.last().unwrap()
    }

    pub fn layer_count(&self) -> usize {
        self.weights.len()
    }

    pub fn weight(&self, layer: usize) -> &[f64] {
        &self.weights[layer]
    }

    pub fn bias(&self, layer: usize) -> &[f64] {
        &self.biases[layer]
    }

    pub fn bias_mut(&mut self, layer: usize) -> &mut [f64] {
        &mut self.biases[layer]
    }

    pub fn weight_mut(&mut self, layer: usize) -> &mut [f64] {
        &mut self.weights[layer]
    }

    pub fn param_count(&self) -> usize {
        self.sizes.windows(2).map(|w| (w[0] + 1) * w[1]).sum()
    }

    /// Forward pass. Writes every layer's post-activation into `cache` and
    /// returns the output slice. Hidden layers are ReLU, output is linear.
    pub fn forward<'c>(&self, input: &[f64], cache: &'c mut Activations) -> &'c [f64] {
        assert_eq!(input.len(), self.sizes[0], "mlp input length");
        cache.input.copy_from_slice(input);
        let last = self.weights.len() - 1;
        for l in 0..=last {
            let (head, tail) = cache.layers.split_at_mut(l);
            let src = if l == 0 { &cache.input } else { &head[l - 1] };
            let dst = &mut tail[0];
            let (n_out, n_in) = (self.sizes[l + 1], self.sizes[l]);
            let w = &self.weights[l];
            let b = &self.biases[l];
            for j in 0..n_out {
                let row = &w[j * n_in..(j + 1) * n_in];
                let mut acc = b[j];
                for i in 0..n_in {
                    acc += row[i] * src[i];
                }
                dst[j] = if l == last { acc } else { acc.max(0.0) };
            }
        }
        cache.output()
    }

    /// Backprop from `grad_out` (dL/d output) through the cached activations,
    /// *accumulating* into `grads`. Optionally also produces dL/d input.
    pub fn backward(
        &self,
        grad_out: &[f64],
        cache: &Activations,
        grads: &mut MlpGrads,
        mut grad_input: Option<&mut [f64]>,
    ) {
        assert_eq!(grad_out.len(), self.output_dim(), "mlp output grad length");
        let mut delta = grad_out.to_vec();
        for l in (0..self.weights.len()).rev() {
            let src: &[f64] = if l == 0 { &cache.input } else { &cache.layers[l - 1] };
            let (n_out, n_in) = (self.sizes[l + 1], self.sizes[l]);
            let w = &self.weights[l];
            let gw = &mut grads.weights[l];
            let gb = &mut grads.biases[l];
            for j in 0..n_out {
                let d = delta[j];
                gb[j] += d;
                let row = &mut gw[j * n_in..(j + 1) * n_in];
                for i in 0..n_in {
                    row[i] += d * src[i];
                }
            }
            let propagate = l > 0 || grad_input.is_some();
            if !propagate {
                continue;
            }
            let mut prev = vec![0.0; n_in];
            for j in 0..n_out {
                let d = delta[j];
                let row = &w[j * n_in..(j + 1) * n_in];
                for i in 0..n_in {
                    prev[i] += d * row[i];
                }
            }
            if l > 0 {
                // ReLU mask: units that were clamped to zero pass no gradient.
                for i in 0..n_in {
                    if cache.layers[l - 1][i] <= 0.0 {
                        prev[i] = 0.0;
                    }
                }
                delta = prev;
            } else if let Some(gi) = grad_input.as_deref_mut() {
                gi.copy_from_slice(&prev);
            }
        }
    }
}

/// Gaussian policy: MLP mean head plus state-independent log-stds.
#[derive(Debug, Clone, PartialEq)]
pub struct PolicyParams {
    pub mlp: Mlp,
    pub log_std: Vec<f64>,
}

/// Value function: MLP with a single linear output.
#[derive(Debug, Clone, PartialEq)]
pub struct ValueParams {
    pub mlp: Mlp,
}

/// Diagonal Gaussian over actions. `log_std` entries are clamped to
/// `[LOG_STD_MIN, LOG_STD_MAX]` at construction.
#[derive(Debug, Clone, PartialEq)]
pub struct PolicyDistribution {
    pub mean: Vec<f64>,
    pub log_std: Vec<f64>,
}

impl PolicyDistribution {
    pub fn std(&self, i: usize) -> f64 {
        libm::exp(self.log_std[i])
    }

    /// Sample an action, one normal draw per dimension in index order.
    pub fn sample<R: Rng>(&self, rng: &mut R) -> Vec<f64> {
        self.mean
            .iter()
            .zip(&self.log_std)
            .map(|(&m, &ls)| {
                let eps: f64 = rng.sample(StandardNormal);
                m + libm::exp(ls) * eps
            })
            .collect()
    }

    /// Differential entropy of the diagonal Gaussian.
    pub fn entropy(&self) -> f64 {
        let half_log_tau_e = 0.5 * (1.0 + libm::log(core::f64::consts::TAU));
        self.log_std.iter().map(|ls| ls + half_log_tau_e).sum()
    }
}

impl PolicyParams {
    /// Mean head forward with an explicit scratch cache (hot path).
    pub fn distribution_cached(&self, obs: &[f64], cache: &mut Activations) -> PolicyDistribution {
        let mean = self.mlp.forward(obs, cache).to_vec();
        let log_std = self.log_std.iter().map(|v| v.clamp(LOG_STD_MIN, LOG_STD_MAX)).collect();
        PolicyDistribution { mean, log_std }
    }
}

impl ValueParams {
    pub fn value_cached(&self, obs: &[f64], cache: &mut Activations) -> f64 {
        self.mlp.forward(obs, cache)[0]
    }
}

/// Convenience wrapper over [`PolicyParams::distribution_cached`] that
/// allocates its own scratch. Checks the observation length.
pub fn forward_policy(obs: &[f64], params: &PolicyParams) -> Result<PolicyDistribution, NnError> {
    if obs.len() != params.mlp.input_dim() {
        return Err(NnError::ShapeMismatch { expected: params.mlp.input_dim(), got: obs.len() });
    }
    let mut cache = Activations::for_mlp(&params.mlp);
    Ok(params.distribution_cached(obs, &mut cache))
}

/// Scalar state value. Checks the observation length.
pub fn forward_value(obs: &[f64], params: &ValueParams) -> Result<f64, NnError> {
    if obs.len() != params.mlp.input_dim() {
        return Err(NnError::ShapeMismatch { expected: params.mlp.input_dim(), got: obs.len() });
    }
    let mut cache = Activations::for_mlp(&params.mlp);
    Ok(params.value_cached(obs, &mut cache))
}

/// The full learnable parameter set: policy net, log-stds, value net.
#[derive(Debug, Clone, PartialEq)]
pub struct ActorCritic {
    pub policy: PolicyParams,
    pub value: ValueParams,
}

impl ActorCritic {
    /// Fresh nets: orthogonal hidden layers, a 0.01-gain policy output (so
    /// initial actions hug the output bias), a 1.0-gain value output, zero
    /// biases, zero log-stds (unit exploration noise). The policy net
    /// consumes the RNG before the value net.
    pub fn init<R: Rng>(
        obs_dim: usize,
        hidden: &[usize],
        action_dim: usize,
        rng: &mut R,
    ) -> Result<Self, NnError> {
        let mut policy_sizes = vec![obs_dim];
        policy_sizes.extend_from_slice(hidden);
        policy_sizes.push(action_dim);
        let mut value_sizes = vec![obs_dim];
        value_sizes.extend_from_slice(hidden);
        value_sizes.push(1);
        Ok(ActorCritic {
            policy: PolicyParams {
                mlp: Mlp::orthogonal_init(&policy_sizes, 0.01, rng)?,
                log_std: vec![0.0; action_dim],
            },
            value: ValueParams { mlp: Mlp::orthogonal_init(&value_sizes, 1.0, rng)? },
        })
    }

    pub fn obs_dim(&self) -> usize {
        self.policy.mlp.input_dim()
    }

    pub fn action_dim(&self) -> usize {
        self.policy.mlp.output_dim()
    }

    pub fn hidden_sizes(&self) -> &[usize] {
        let s = self.policy.mlp.sizes();
        &s[1..s.len() - 1]
    }

    /// Centers the initial action distribution on a fixed pose by writing it
    /// into the policy's output-layer bias.
    pub fn set_policy_output_bias(&mut self, bias: &[f64]) {
        let last = self.policy.mlp.layer_count() - 1;
        self.policy.mlp.bias_mut(last).copy_from_slice(bias);
    }

    pub fn param_count(&self) -> usize {
        self.policy.mlp.param_count() + self.policy.log_std.len() + self.value.mlp.param_count()
    }

    /// Flat views of every tensor, in the fixed order used by Adam, gradient
    /// clipping, and checkpoints: policy weights/biases per layer, log_std,
    /// then value weights/biases per layer.
    pub fn tensors(&self) -> Vec<&[f64]> {
        let mut out: Vec<&[f64]> = Vec::new();
        for l in 0..self.policy.mlp.layer_count() {
            out.push(&self.policy.mlp.weights[l]);
            out.push(&self.policy.mlp.biases[l]);
        }
        out.push(&self.policy.log_std);
        for l in 0..self.value.mlp.layer_count() {
            out.push(&self.value.mlp.weights[l]);
            out.push(&self.value.mlp.biases[l]);
        }
        out
    }

    pub fn tensors_mut(&mut self) -> Vec<&mut Vec<f64>> {
        let mut out: Vec<&mut Vec<f64>> = Vec::new();
        let policy_layers = self.policy.mlp.weights.len();
        for (w, b) in
            self.policy.mlp.weights.iter_mut().zip(self.policy.mlp.biases.iter_mut()).take(policy_layers)
        {
            out.push(w);
            out.push(b);
        }
        out.push(&mut self.policy.log_std);
        for (w, b) in self.value.mlp.weights.iter_mut().zip(self.value.mlp.biases.iter_mut()) {
            out.push(w);
            out.push(b);
        }
        out
    }
}

/// Gradients for a full [`ActorCritic`], same tensor order.
#[derive(Debug, Clone, PartialEq)]
pub struct AcGrads {
    pub policy: MlpGrads,
    pub log_std: Vec<f64>,
    pub value: MlpGrads,
}

impl AcGrads {
    pub fn zeros_like(ac: &ActorCritic) -> Self {
        AcGrads {
            policy: MlpGrads::zeros_like(&ac.policy.mlp),
            log_std: vec![0.0; ac.policy.log_std.len()],
            value: MlpGrads::zeros_like(&ac.value.mlp),
        }
    }

    pub fn zero(&mut self) {
        self.policy.zero();
        self.log_std.iter_mut().for_each(|v| *v = 0.0);
        self.value.zero();
    }

    pub fn tensors(&self) -> Vec<&[f64]> {
        let mut out: Vec<&[f64]> = Vec::new();
        for l in 0..self.policy.weights.len() {
            out.push(&self.policy.weights[l]);
            out.push(&self.policy.biases[l]);
        }
        out.push(&self.log_std);
        for l in 0..self.value.weights.len() {
            out.push(&self.value.weights[l]);
            out.push(&self.value.biases[l]);
        }
        out
    }

    pub fn tensors_mut(&mut self) -> Vec<&mut Vec<f64>> {
        let mut out: Vec<&mut Vec<f64>> = Vec::new();
        for (w, b) in self.policy.weights.iter_mut().zip(self.policy.biases.iter_mut()) {
            out.push(w);
            out.push(b);
        }
        out.push(&mut self.log_std);
        for (w, b) in self.value.weights.iter_mut().zip(self.value.biases.iter_mut()) {
            out.push(w);
            out.push(b);
        }
        out
    }

    /// Scale every gradient in place (used for averaging and norm clipping).
    pub fn scale(&mut self, factor: f64) {
        for t in self.tensors_mut() {
            t.iter_mut().for_each(|v| *v *= factor);
        }
    }

    /// L2 norm over the concatenation of all tensors.
    pub fn global_norm(&self) -> f64 {
        let mut sum = 0.0;
        for t in self.tensors() {
            for &v in t {
                sum += v * v;
            }
        }
        libm::sqrt(sum)
    }
}

/// Adam state: first/second moments per tensor plus the shared step count.
/// Bias-correction powers are kept as running products so the whole state
/// round-trips through checkpoints exactly.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    pub step: u64,
    pub beta1_pow: f64,
    pub beta2_pow: f64,
    pub m: Vec<Vec<f64>>,
    pub v: Vec<Vec<f64>>,
}

impl AdamState {
    pub fn new(ac: &ActorCritic) -> Self {
        let shapes: Vec<usize> = ac.tensors().iter().map(|t| t.len()).collect();
        AdamState {
            step: 0,
            beta1_pow: 1.0,
            beta2_pow: 1.0,
            m: shapes.iter().map(|&n| vec![0.0; n]).collect(),
            v: shapes.iter().map(|&n| vec![0.0; n]).collect(),
        }
    }
}

/// One Adam update over every tensor of the actor-critic, standard defaults
/// (beta1 0.9, beta2 0.999, eps 1e-8). Tensors, moments, and gradients are
/// walked in the fixed order defined by [`ActorCritic::tensors`].
pub fn adam_step(params: &mut ActorCritic, grads: &AcGrads, state: &mut AdamState, lr: f64) {
    state.step += 1;
    state.beta1_pow *= ADAM_BETA1;
    state.beta2_pow *= ADAM_BETA2;
    let bc1 = 1.0 - state.beta1_pow;
    let bc2 = 1.0 - state.beta2_pow;
    let tensors = params.tensors_mut();
    let gtensors = grads.tensors();
    debug_assert_eq!(tensors.len(), gtensors.len());
    for ((t, g), (m, v)) in
        tensors.into_iter().zip(gtensors).zip(state.m.iter_mut().zip(state.v.iter_mut()))
    {
        debug_assert_eq!(t.len(), g.len());
        for i in 0..t.len() {
            m[i] = ADAM_BETA1 * m[i] + (1.0 - ADAM_BETA1) * g[i];
            v[i] = ADAM_BETA2 * v[i] + (1.0 - ADAM_BETA2) * g[i] * g[i];
            let m_hat = m[i] / bc1;
            let v_hat = v[i] / bc2;
            t[i] -= lr * m_hat / (libm::sqrt(v_hat) + ADAM_EPS);
        }
    }
}

/// Orthogonal `rows x cols` matrix scaled by `gain`, built by modified
/// Gram-Schmidt over standard-normal draws: the smaller dimension's vectors
/// come out orthonormal.
fn orthogonal_matrix<R: Rng>(rows: usize, cols: usize, gain: f64, rng: &mut R) -> Vec<f64> {
    let k = rows.min(cols);
    let d = rows.max(cols);
    let mut basis: Vec<Vec<f64>> = Vec::with_capacity(k);
    while basis.len() < k {
        let mut v: Vec<f64> = (0..d).map(|_| rng.sample(StandardNormal)).collect();
        for u in &basis {
            let dot: f64 = v.iter().zip(u).map(|(a, b)| a * b).sum();
            for (vi, ui) in v.iter_mut().zip(u) {
                *vi -= dot * ui;
            }
        }
        let norm = libm::sqrt(v.iter().map(|x| x * x).sum());
        if norm < 1e-8 {
            continue; // essentially-dependent draw; take a fresh one
        }
        v.iter_mut().for_each(|x| *x /= norm);
        basis.push(v);
    }
    let mut w = vec![0.0; rows * cols];
    for r in 0..rows {
        for c in 0..cols {
            // rows <= cols: basis vectors are rows; otherwise columns.
            w[r * cols + c] = gain * if rows <= cols { basis[r][c] } else { basis[c][r] };
        }
    }
    w
}
