//! One-hidden-layer tanh network with hand-written backpropagation and Adam.

use ndarray::{Array1, Array2, ArrayView2, Axis};
use rand::Rng;
use rand_distr::{Distribution, Uniform};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Parameters of `out = W2ᵀ tanh(W1ᵀ x + b1) + b2`.
///
/// Weights are stored input-major: `w1` is `in x hidden`, `w2` is
/// `hidden x out`, so a batch of row inputs multiplies on the left.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MlpParams {
    pub w1: Array2<f64>,
    pub b1: Array1<f64>,
    pub w2: Array2<f64>,
    pub b2: Array1<f64>,
}

/// Gradients share the parameter layout.
pub type MlpGrads = MlpParams;

/// Activations of a batch forward pass.
#[derive(Debug, Clone)]
pub struct BatchForward {
    /// `n x hidden`, post-tanh.
    pub hidden: Array2<f64>,
    /// `n x out`.
    pub output: Array2<f64>,
}

impl MlpParams {
    pub fn zeros(input: usize, hidden: usize, output: usize) -> Self {
        Self {
            w1: Array2::zeros((input, hidden)),
            b1: Array1::zeros(hidden),
            w2: Array2::zeros((hidden, output)),
            b2: Array1::zeros(output),
        }
    }

    /// Uniform in ±1/sqrt(fan_in) for every layer.
    pub fn init<R: Rng + ?Sized>(input: usize, hidden: usize, output: usize, rng: &mut R) -> Self {
        let mut p = Self::zeros(input, hidden, output);
        let l1 = 1.0 / (input as f64).sqrt();
        let l2 = 1.0 / (hidden as f64).sqrt();
        let u1 = Uniform::new_inclusive(-l1, l1).expect("finite bound");
        let u2 = Uniform::new_inclusive(-l2, l2).expect("finite bound");
        p.w1.iter_mut().for_each(|w| *w = u1.sample(rng));
        p.b1.iter_mut().for_each(|w| *w = u1.sample(rng));
        p.w2.iter_mut().for_each(|w| *w = u2.sample(rng));
        p.b2.iter_mut().for_each(|w| *w = u2.sample(rng));
        p
    }

    /// (input, hidden, output) widths.
    pub fn sizes(&self) -> (usize, usize, usize) {
        (self.w1.nrows(), self.w1.ncols(), self.w2.ncols())
    }

    pub fn validate(&self) -> Result<()> {
        let (i, h, o) = self.sizes();
        if self.b1.len() != h || self.w2.nrows() != h || self.b2.len() != o || i == 0 || h == 0 || o == 0 {
            return Err(Error::Contract("inconsistent network shapes".into()));
        }
        if !self.is_finite() {
            return Err(Error::Contract("non-finite network parameter".into()));
        }
        Ok(())
    }

    pub fn is_finite(&self) -> bool {
        self.tensors().iter().all(|t| t.iter().all(|x| x.is_finite()))
    }

    pub fn num_params(&self) -> usize {
        self.tensors().iter().map(|t| t.len()).sum()
    }

    fn tensors(&self) -> [&[f64]; 4] {
        [
            self.w1.as_slice().expect("standard layout"),
            self.b1.as_slice().expect("standard layout"),
            self.w2.as_slice().expect("standard layout"),
            self.b2.as_slice().expect("standard layout"),
        ]
    }

    fn tensors_mut(&mut self) -> [&mut [f64]; 4] {
        [
            self.w1.as_slice_mut().expect("standard layout"),
            self.b1.as_slice_mut().expect("standard layout"),
            self.w2.as_slice_mut().expect("standard layout"),
            self.b2.as_slice_mut().expect("standard layout"),
        ]
    }

    /// All parameters concatenated as (w1, b1, w2, b2).
    pub fn flatten(&self) -> Vec<f64> {
        self.tensors().concat()
    }

    pub fn param_mut(&mut self, flat_index: usize) -> &mut f64 {
        let mut i = flat_index;
        for t in self.tensors_mut() {
            if i < t.len() {
                return &mut t[i];
            }
            i -= t.len();
        }
        panic!("parameter index {flat_index} out of range");
    }

    pub fn forward(&self, x: &[f64]) -> Result<Vec<f64>> {
        let (i, _, _) = self.sizes();
        if x.len() != i {
            return Err(Error::Contract(format!("input length {} != {i}", x.len())));
        }
        let xv = ArrayView2::from_shape((1, i), x).expect("row vector");
        Ok(self.forward_batch(xv).output.into_raw_vec_and_offset().0)
    }

    /// Forward pass over the rows of `x` (`n x in`).
    pub fn forward_batch(&self, x: ArrayView2<'_, f64>) -> BatchForward {
        let mut hidden = x.dot(&self.w1);
        hidden += &self.b1;
        hidden.mapv_inplace(f64::tanh);
        let mut output = hidden.dot(&self.w2);
        output += &self.b2;
        BatchForward { hidden, output }
    }

    /// Vector-Jacobian product: the gradient of `Σ_o err[o] · out[o]` with
    /// respect to every parameter, at input `x`.
    pub fn gradient(&self, x: &[f64], err: &[f64]) -> Result<MlpGrads> {
        let (i, _, o) = self.sizes();
        if x.len() != i || err.len() != o {
            return Err(Error::Contract(format!(
                "gradient shapes: input {} (want {i}), error {} (want {o})",
                x.len(),
                err.len()
            )));
        }
        let xv = ArrayView2::from_shape((1, i), x).expect("row vector");
        let ev = ArrayView2::from_shape((1, o), err).expect("row vector");
        let fwd = self.forward_batch(xv);
        Ok(self.gradient_batch(xv, &fwd.hidden, ev))
    }

    /// Sum over rows of the per-sample vector-Jacobian products.
    ///
    /// `hidden` must come from `forward_batch` on the same `x`.
    pub fn gradient_batch(&self, x: ArrayView2<'_, f64>, hidden: &Array2<f64>, err: ArrayView2<'_, f64>) -> MlpGrads {
        let w2 = hidden.t().dot(&err);
        let b2 = err.sum_axis(Axis(0));
        let mut dh = err.dot(&self.w2.t());
        dh.zip_mut_with(hidden, |d, &h| *d *= 1.0 - h * h);
        let w1 = x.t().dot(&dh);
        let b1 = dh.sum_axis(Axis(0));
        MlpParams {
            w1: w1.as_standard_layout().into_owned(),
            b1,
            w2: w2.as_standard_layout().into_owned(),
            b2,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdamConfig {
    pub step_size: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            step_size: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AdamState {
    pub first: MlpParams,
    pub second: MlpParams,
    pub steps: u64,
    pub config: AdamConfig,
}

impl AdamState {
    pub fn new(like: &MlpParams, config: AdamConfig) -> Self {
        let (i, h, o) = like.sizes();
        Self {
            first: MlpParams::zeros(i, h, o),
            second: MlpParams::zeros(i, h, o),
            steps: 0,
            config,
        }
    }

    /// One bias-corrected Adam update of `params` along `-grads`.
    pub fn step(&mut self, params: &mut MlpParams, grads: &MlpGrads) -> Result<()> {
        if params.sizes() != grads.sizes() || params.sizes() != self.first.sizes() {
            return Err(Error::Contract("Adam shapes do not match".into()));
        }
        self.steps += 1;
        let AdamConfig { step_size, beta1, beta2, eps } = self.config;
        let t = self.steps as i32;
        let c1 = 1.0 - beta1.powi(t);
        let c2 = 1.0 - beta2.powi(t);
        for (((p, g), m), v) in params
            .tensors_mut()
            .into_iter()
            .zip(grads.tensors())
            .zip(self.first.tensors_mut())
            .zip(self.second.tensors_mut())
        {
            for j in 0..p.len() {
                m[j] = beta1 * m[j] + (1.0 - beta1) * g[j];
                v[j] = beta2 * v[j] + (1.0 - beta2) * g[j] * g[j];
                p[j] -= step_size * (m[j] / c1) / ((v[j] / c2).sqrt() + eps);
            }
        }
        Ok(())
    }
}

/// Network plus its optimizer state.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trainable {
    pub params: MlpParams,
    pub adam: AdamState,
}

impl Trainable {
    pub fn new(params: MlpParams, config: AdamConfig) -> Self {
        let adam = AdamState::new(&params, config);
        Self { params, adam }
    }
}

/// Largest relative disagreement between analytic gradients and central
/// differences of `Σ err · out(θ)`, ignoring entries where both are below `floor`.
pub fn gradient_check(params: &MlpParams, x: &[f64], err: &[f64], step: f64, floor: f64) -> Result<f64> {
    let analytic = params.gradient(x, err)?.flatten();
    let objective = |p: &MlpParams| -> Result<f64> {
        Ok(p.forward(x)?.iter().zip(err).map(|(o, e)| o * e).sum())
    };
    let mut worst = 0.0f64;
    let mut probe = params.clone();
    for (k, &a) in analytic.iter().enumerate() {
        let orig = *probe.param_mut(k);
        *probe.param_mut(k) = orig + step;
        let plus = objective(&probe)?;
        *probe.param_mut(k) = orig - step;
        let minus = objective(&probe)?;
        *probe.param_mut(k) = orig;
        let numeric = (plus - minus) / (2.0 * step);
        if a.abs() < floor && numeric.abs() < floor {
            continue;
        }
        let rel = (a - numeric).abs() / a.abs().max(numeric.abs());
        worst = worst.max(rel);
    }
    Ok(worst)
}

/// Worst [`gradient_check`] result over `nets` randomly initialized networks
/// of the given shape, each probed at a random input and output weighting.
pub fn gradient_audit(input: usize, hidden: usize, output: usize, nets: usize, seed: u64) -> Result<f64> {
    let mut rng = crate::env::seeded_rng(seed);
    let mut worst = 0.0f64;
    for _ in 0..nets {
        let params = MlpParams::init(input, hidden, output, &mut rng);
        let x: Vec<f64> = (0..input).map(|_| rng.random_range(-1.0..1.0)).collect();
        let err: Vec<f64> = (0..output).map(|_| rng.random_range(-1.0..1.0)).collect();
        worst = worst.max(gradient_check(&params, &x, &err, 1e-5, 1e-6)?);
    }
    Ok(worst)
}
