//! Single-hidden-layer tanh networks `W2 tanh(W1 (t, x) + b1) + b2`.
//!
//! Parameters are stored in one flat buffer laid out as `W1` (row-major,
//! `width x input`), `b1`, `W2` (row-major, `output x width`), `b2`. Gradients
//! use the same type and layout, so the optimizer and clipping work on plain
//! slices.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fields::CoefficientField;
use crate::format::floats17;

pub const DEFAULT_CLIP: f64 = 5.0;
pub const DIFFUSION_FLOOR: f64 = 1e-3;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NetParams {
    pub input_dim: usize,
    pub width: usize,
    pub output_dim: usize,
    pub clip: f64,
    #[serde(with = "floats17")]
    pub data: Vec<f64>,
}

impl NetParams {
    pub fn zeros(input_dim: usize, width: usize, output_dim: usize) -> Self {
        let len = width * input_dim + width + output_dim * width + output_dim;
        NetParams { input_dim, width, output_dim, clip: DEFAULT_CLIP, data: vec![0.0; len] }
    }

    /// Uniform entries in `±1/sqrt(fan_in)` per layer.
    pub fn init<R: Rng + ?Sized>(
        input_dim: usize,
        width: usize,
        output_dim: usize,
        rng: &mut R,
    ) -> Self {
        let mut p = Self::zeros(input_dim, width, output_dim);
        let first = 1.0 / (input_dim as f64).sqrt();
        let second = 1.0 / (width as f64).sqrt();
        let split = width * input_dim + width;
        for (i, x) in p.data.iter_mut().enumerate() {
            let bound = if i < split { first } else { second };
            *x = rng.random_range(-bound..=bound);
        }
        p
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn same_shape(&self, other: &NetParams) -> bool {
        self.input_dim == other.input_dim
            && self.width == other.width
            && self.output_dim == other.output_dim
            && self.data.len() == other.data.len()
    }

    pub fn zeros_like(&self) -> Self {
        NetParams { data: vec![0.0; self.data.len()], ..self.clone() }
    }

    fn offsets(&self) -> [usize; 4] {
        let w1 = self.width * self.input_dim;
        let b1 = w1 + self.width;
        let w2 = b1 + self.output_dim * self.width;
        [w1, b1, w2, w2 + self.output_dim]
    }

    pub fn w1(&self) -> &[f64] {
        &self.data[..self.offsets()[0]]
    }
    pub fn b1(&self) -> &[f64] {
        let o = self.offsets();
        &self.data[o[0]..o[1]]
    }
    pub fn w2(&self) -> &[f64] {
        let o = self.offsets();
        &self.data[o[1]..o[2]]
    }
    pub fn b2(&self) -> &[f64] {
        let o = self.offsets();
        &self.data[o[2]..o[3]]
    }

    pub fn b2_mut(&mut self) -> &mut [f64] {
        let o = self.offsets();
        &mut self.data[o[2]..o[3]]
    }

    /// Forward pass on an assembled input; `hidden` receives `tanh` activations.
    pub fn forward_into(&self, input: &[f64], hidden: &mut [f64], out: &mut [f64]) {
        let (ni, nh) = (self.input_dim, self.width);
        let [o_w1, o_b1, o_w2, _] = self.offsets();
        let w1 = &self.data[..o_w1];
        let b1 = &self.data[o_w1..o_b1];
        let w2 = &self.data[o_b1..o_w2];
        let b2 = &self.data[o_w2..];
        for j in 0..nh {
            let row = &w1[j * ni..(j + 1) * ni];
            let z = b1[j] + row.iter().zip(input).map(|(w, x)| w * x).sum::<f64>();
            hidden[j] = z.tanh();
        }
        for (o, slot) in out.iter_mut().enumerate() {
            let row = &w2[o * nh..(o + 1) * nh];
            *slot = b2[o] + row.iter().zip(hidden.iter()).map(|(w, a)| w * a).sum::<f64>();
        }
    }

    /// Adds the gradient of `<upstream, forward(input)>` to `grads` and writes
    /// the input gradient into `input_grad`. `hidden` must come from
    /// [`forward_into`](Self::forward_into) on the same input.
    pub fn backward_into(
        &self,
        input: &[f64],
        hidden: &[f64],
        upstream: &[f64],
        grads: &mut NetParams,
        input_grad: &mut [f64],
    ) {
        let (ni, nh, no) = (self.input_dim, self.width, self.output_dim);
        let [o_w1, o_b1, o_w2, _] = self.offsets();
        let w1 = &self.data[..o_w1];
        let w2 = &self.data[o_b1..o_w2];
        let g = &mut grads.data;
        input_grad.fill(0.0);
        for o in 0..no {
            g[o_w2 + o] += upstream[o];
        }
        for j in 0..nh {
            let a = hidden[j];
            let mut da = 0.0;
            for o in 0..no {
                g[o_b1 + o * nh + j] += upstream[o] * a;
                da += upstream[o] * w2[o * nh + j];
            }
            let dz = da * (1.0 - a * a);
            if dz == 0.0 {
                continue;
            }
            g[o_w1 + j] += dz;
            for i in 0..ni {
                g[j * ni + i] += dz * input[i];
                input_grad[i] += dz * w1[j * ni + i];
            }
        }
    }

    fn check_input(&self, d: usize) -> Result<()> {
        if d + 1 != self.input_dim {
            return Err(Error::Shape(format!(
                "network expects {} state dimensions, got {d}",
                self.input_dim - 1
            )));
        }
        Ok(())
    }

    fn assemble(t: f64, x: &[f64]) -> Vec<f64> {
        let mut input = Vec::with_capacity(x.len() + 1);
        input.push(t);
        input.extend_from_slice(x);
        input
    }

    /// Evaluates the network at `(t, x)`.
    pub fn forward(&self, t: f64, x: &[f64]) -> Result<Vec<f64>> {
        self.check_input(x.len())?;
        let input = Self::assemble(t, x);
        let mut hidden = vec![0.0; self.width];
        let mut out = vec![0.0; self.output_dim];
        self.forward_into(&input, &mut hidden, &mut out);
        Ok(out)
    }

    /// Gradients of `<upstream, forward(t, x)>` with respect to the
    /// parameters and to the input `(t, x)`.
    pub fn vjp(&self, t: f64, x: &[f64], upstream: &[f64]) -> Result<(NetParams, Vec<f64>)> {
        self.check_input(x.len())?;
        if upstream.len() != self.output_dim {
            return Err(Error::Shape(format!(
                "upstream has {} entries, network has {} outputs",
                upstream.len(),
                self.output_dim
            )));
        }
        let input = Self::assemble(t, x);
        let mut hidden = vec![0.0; self.width];
        let mut out = vec![0.0; self.output_dim];
        self.forward_into(&input, &mut hidden, &mut out);
        let mut grads = self.zeros_like();
        let mut input_grad = vec![0.0; self.input_dim];
        self.backward_into(&input, &hidden, upstream, &mut grads, &mut input_grad);
        Ok((grads, input_grad))
    }

    /// Projects every entry onto `[-c, c]` and records `c` as the bound.
    pub fn clip_in_place(&mut self, c: f64) {
        for x in &mut self.data {
            *x = x.clamp(-c, c);
        }
        self.clip = c;
    }
}

pub fn clip_params(params: &NetParams, c: f64) -> NetParams {
    let mut out = params.clone();
    out.clip_in_place(c);
    out
}

/// `log(1 + e^x)` without overflow.
pub fn softplus(x: f64) -> f64 {
    x.max(0.0) + (-x.abs()).exp().ln_1p()
}

pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// Softplus plus a floor of `1e-3`, componentwise.
pub fn positive_diffusion(raw: &[f64]) -> Vec<f64> {
    raw.iter().map(|&r| softplus(r) + DIFFUSION_FLOOR).collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdamConfig {
    pub learning_rate: f64,
    pub weight_decay: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        AdamConfig { learning_rate: 1e-3, weight_decay: 1e-4, beta1: 0.9, beta2: 0.999, eps: 1e-8 }
    }
}

/// Adam with decoupled weight decay.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AdamState {
    pub config: AdamConfig,
    pub step: u64,
    #[serde(with = "floats17")]
    pub first_moment: Vec<f64>,
    #[serde(with = "floats17")]
    pub second_moment: Vec<f64>,
}

impl AdamState {
    pub fn new(config: AdamConfig, params: &NetParams) -> Self {
        AdamState {
            config,
            step: 0,
            first_moment: vec![0.0; params.len()],
            second_moment: vec![0.0; params.len()],
        }
    }
}

/// One update `p <- p - lr (m̂ / (sqrt(v̂) + eps) + wd p)`.
///
/// Non-finite gradients abort the step and leave state and parameters
/// untouched.
pub fn adam_step(state: &mut AdamState, params: &mut NetParams, grads: &NetParams) -> Result<()> {
    if !params.same_shape(grads) || state.first_moment.len() != params.len() {
        return Err(Error::Shape("optimizer state, parameters and gradients disagree".into()));
    }
    if let Some(index) = grads.data.iter().position(|g| !g.is_finite()) {
        return Err(Error::NonFiniteGradient { index });
    }
    let AdamConfig { learning_rate: lr, weight_decay: wd, beta1, beta2, eps } = state.config;
    state.step += 1;
    let t = state.step as i32;
    let c1 = 1.0 - beta1.powi(t);
    let c2 = 1.0 - beta2.powi(t);
    for (((p, &g), m), v) in params
        .data
        .iter_mut()
        .zip(&grads.data)
        .zip(&mut state.first_moment)
        .zip(&mut state.second_moment)
    {
        *m = beta1 * *m + (1.0 - beta1) * g;
        *v = beta2 * *v + (1.0 - beta2) * g * g;
        let m_hat = *m / c1;
        let v_hat = *v / c2;
        *p -= lr * (m_hat / (v_hat.sqrt() + eps) + wd * *p);
    }
    Ok(())
}

/// Drift and diffusion networks viewed as a coefficient field. The diffusion
/// network output goes through [`positive_diffusion`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NeuralField {
    pub drift: NetParams,
    pub diffusion: NetParams,
}

impl NeuralField {
    pub fn new(drift: NetParams, diffusion: NetParams) -> Result<Self> {
        let d = drift.output_dim;
        if drift.input_dim != d + 1 || diffusion.input_dim != d + 1 || diffusion.output_dim != d {
            return Err(Error::Shape("drift and diffusion networks must map R^(d+1) to R^d".into()));
        }
        Ok(NeuralField { drift, diffusion })
    }

    pub fn init<R: Rng + ?Sized>(dim: usize, width: usize, clip: f64, rng: &mut R) -> Self {
        let mut drift = NetParams::init(dim + 1, width, dim, rng);
        let mut diffusion = NetParams::init(dim + 1, width, dim, rng);
        drift.clip_in_place(clip);
        diffusion.clip_in_place(clip);
        NeuralField { drift, diffusion }
    }
}

impl CoefficientField for NeuralField {
    fn dim(&self) -> usize {
        self.drift.output_dim
    }

    fn drift(&self, t: f64, x: &[f64], out: &mut [f64]) {
        let input = NetParams::assemble(t, x);
        let mut hidden = vec![0.0; self.drift.width];
        self.drift.forward_into(&input, &mut hidden, out);
    }

    fn diffusion(&self, t: f64, x: &[f64], out: &mut [f64]) {
        let input = NetParams::assemble(t, x);
        let mut hidden = vec![0.0; self.diffusion.width];
        self.diffusion.forward_into(&input, &mut hidden, out);
        for o in out.iter_mut() {
            *o = softplus(*o) + DIFFUSION_FLOOR;
        }
    }
}
