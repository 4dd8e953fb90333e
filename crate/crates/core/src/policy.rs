//! Gaussian control policy parameterised by a fully connected network.
//!
//! Hidden layers are affine maps followed by LeakyReLU. The output layer is
//! affine with `2 * n_u` units: the first half drives the mean through a
//! logistic squashing onto `[u_lb, u_ub]`, the second half the standard
//! deviation onto `[σ_min, 0.25 (u_ub - u_lb)]`. Gradients of the log-density
//! are computed by hand in reverse mode.
//!
//! Parameters are stored flat. For each layer: the weight matrix row-major
//! with shape `(out, in)`, then the bias vector.

use std::f64::consts::PI;
use std::io::{self, Read, Write};
use std::path::Path;

use rand::Rng;
use rand_distr::{Distribution, StandardNormal, Uniform};
use thiserror::Error;

pub const DEFAULT_HIDDEN: [usize; 4] = [20, 20, 20, 20];
pub const DEFAULT_LEAKY_SLOPE: f64 = 0.01;
/// Upper bound on σ as a fraction of the input range.
pub const SIGMA_MAX_FRACTION: f64 = 0.25;
/// Lower bound on σ as a fraction of the input range.
pub const SIGMA_MIN_FRACTION: f64 = 1e-3;
/// Initial σ as a fraction of the input range.
pub const SIGMA_INIT_FRACTION: f64 = 0.125;

const CHECKPOINT_MAGIC: &[u8; 8] = b"MCTLPOL\0";
const CHECKPOINT_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum PolicyError {
    #[error("feature vector has {got} entries, network expects {expected}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("invalid network layout: {0}")]
    InvalidLayout(String),
    #[error("checkpoint: {0}")]
    Checkpoint(String),
    #[error("checkpoint: {0}")]
    Io(#[from] io::Error),
}

/// Mean and standard deviation per input channel.
#[derive(Debug, Clone, PartialEq)]
pub struct PolicyOutput {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
}

/// Applied (clipped) and raw draws for each input channel.
#[derive(Debug, Clone, PartialEq)]
pub struct Action {
    pub applied: Vec<f64>,
    pub raw: Vec<f64>,
}

/// Draws `u_raw ~ N(m, σ²)` per channel; the applied input is `u_raw` clipped to `bounds`.
pub fn sample<R: Rng + ?Sized>(out: &PolicyOutput, bounds: (f64, f64), rng: &mut R) -> Action {
    let raw: Vec<f64> = out
        .mean
        .iter()
        .zip(&out.std)
        .map(|(m, s)| {
            let z: f64 = StandardNormal.sample(rng);
            m + s * z
        })
        .collect();
    let applied = raw.iter().map(|u| u.clamp(bounds.0, bounds.1)).collect();
    Action { applied, raw }
}

/// Diagonal Gaussian log-density of `u_raw`, summed over channels.
pub fn log_prob(out: &PolicyOutput, u_raw: &[f64]) -> f64 {
    out.mean
        .iter()
        .zip(&out.std)
        .zip(u_raw)
        .map(|((m, s), u)| {
            let r = (u - m) / s;
            -0.5 * (2.0 * PI).ln() - s.ln() - 0.5 * r * r
        })
        .sum()
}

/// A stochastic policy that can be rolled out.
pub trait StochasticPolicy: Sync {
    fn forward(&self, features: &[f64]) -> Result<PolicyOutput, PolicyError>;
}

/// A stochastic policy with a flat, differentiable parameter vector.
pub trait DifferentiablePolicy: StochasticPolicy + Clone + Send {
    fn params(&self) -> &[f64];
    fn params_mut(&mut self) -> &mut [f64];

    /// Adds `∇_θ log π(u_raw | features)` into `grad`.
    fn accumulate_grad_log_prob(&self, features: &[f64], u_raw: &[f64], grad: &mut [f64]) -> Result<(), PolicyError>;
}

/// Open-loop policy requesting the same input at every step (zero spread).
#[derive(Debug, Clone, PartialEq)]
pub struct ConstantPolicy {
    pub u: Vec<f64>,
}

impl StochasticPolicy for ConstantPolicy {
    fn forward(&self, _features: &[f64]) -> Result<PolicyOutput, PolicyError> {
        Ok(PolicyOutput { mean: self.u.clone(), std: vec![0.0; self.u.len()] })
    }
}

#[inline]
fn logistic(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

#[inline]
fn logit(p: f64) -> f64 {
    (p / (1.0 - p)).ln()
}

/// The Gaussian MLP policy.
#[derive(Debug, Clone, PartialEq)]
pub struct GaussianMlp {
    layer_sizes: Vec<usize>,
    leaky_slope: f64,
    bounds: (f64, f64),
    params: Vec<f64>,
}

/// Intermediate values of one forward pass.
struct ForwardCache {
    /// Input of each layer (the features, then each hidden activation).
    inputs: Vec<Vec<f64>>,
    /// Pre-activations of each hidden layer.
    pre: Vec<Vec<f64>>,
    /// Raw output-layer values.
    head: Vec<f64>,
}

impl GaussianMlp {
    /// Network with the default hidden stack for `n_features` inputs and
    /// `n_inputs` control channels.
    pub fn with_default_layout<R: Rng + ?Sized>(
        n_features: usize,
        n_inputs: usize,
        bounds: (f64, f64),
        rng: &mut R,
    ) -> Result<Self, PolicyError> {
        let mut sizes = vec![n_features];
        sizes.extend(DEFAULT_HIDDEN);
        sizes.push(2 * n_inputs);
        Self::init(sizes, DEFAULT_LEAKY_SLOPE, bounds, rng)
    }

    /// Fan-in scaled uniform weights (He/Kaiming bound for LeakyReLU), zero
    /// biases. The σ head starts with zero weights and a bias giving σ equal
    /// to one eighth of the input range.
    pub fn init<R: Rng + ?Sized>(
        layer_sizes: Vec<usize>,
        leaky_slope: f64,
        bounds: (f64, f64),
        rng: &mut R,
    ) -> Result<Self, PolicyError> {
        let mut net = Self::zeros(layer_sizes, leaky_slope, bounds)?;
        let n_layers = net.layer_sizes.len() - 1;
        let n_u = net.n_inputs();
        let mut offset = 0;
        for l in 0..n_layers {
            let (fan_in, fan_out) = (net.layer_sizes[l], net.layer_sizes[l + 1]);
            let bound = (6.0 / ((1.0 + leaky_slope * leaky_slope) * fan_in as f64)).sqrt();
            let dist = Uniform::new_inclusive(-bound, bound).expect("finite bound");
            let last = l + 1 == n_layers;
            for row in 0..fan_out {
                let sigma_row = last && row >= n_u;
                for col in 0..fan_in {
                    net.params[offset + row * fan_in + col] = if sigma_row { 0.0 } else { dist.sample(rng) };
                }
            }
            offset += fan_in * fan_out;
            if last {
                let target = (SIGMA_INIT_FRACTION * net.range() - net.sigma_min()) / (net.sigma_max() - net.sigma_min());
                for row in n_u..2 * n_u {
                    net.params[offset + row] = logit(target);
                }
            }
            offset += fan_out;
        }
        Ok(net)
    }

    /// All-zero parameters: mean at mid-range, σ halfway between its bounds.
    pub fn zeros(layer_sizes: Vec<usize>, leaky_slope: f64, bounds: (f64, f64)) -> Result<Self, PolicyError> {
        if layer_sizes.len() < 2 || layer_sizes.contains(&0) {
            return Err(PolicyError::InvalidLayout(format!("{layer_sizes:?}")));
        }
        let out = *layer_sizes.last().unwrap();
        if !out.is_multiple_of(2) {
            return Err(PolicyError::InvalidLayout("output layer must hold 2 units per input channel".into()));
        }
        if !(bounds.0.is_finite() && bounds.1.is_finite() && bounds.0 < bounds.1) {
            return Err(PolicyError::InvalidLayout(format!("invalid bounds {bounds:?}")));
        }
        if !(leaky_slope.is_finite() && leaky_slope >= 0.0) {
            return Err(PolicyError::InvalidLayout(format!("invalid LeakyReLU slope {leaky_slope}")));
        }
        let n: usize = layer_sizes.windows(2).map(|w| w[0] * w[1] + w[1]).sum();
        Ok(Self { layer_sizes, leaky_slope, bounds, params: vec![0.0; n] })
    }

    pub fn from_parts(
        layer_sizes: Vec<usize>,
        leaky_slope: f64,
        bounds: (f64, f64),
        params: Vec<f64>,
    ) -> Result<Self, PolicyError> {
        let mut net = Self::zeros(layer_sizes, leaky_slope, bounds)?;
        if params.len() != net.params.len() {
            return Err(PolicyError::InvalidLayout(format!(
                "{} parameters supplied, layout needs {}",
                params.len(),
                net.params.len()
            )));
        }
        if params.iter().any(|p| !p.is_finite()) {
            return Err(PolicyError::InvalidLayout("parameters must be finite".into()));
        }
        net.params = params;
        Ok(net)
    }

    pub fn layer_sizes(&self) -> &[usize] {
        &self.layer_sizes
    }

    pub fn leaky_slope(&self) -> f64 {
        self.leaky_slope
    }

    pub fn bounds(&self) -> (f64, f64) {
        self.bounds
    }

    pub fn n_features(&self) -> usize {
        self.layer_sizes[0]
    }

    pub fn n_inputs(&self) -> usize {
        self.layer_sizes[self.layer_sizes.len() - 1] / 2
    }

    fn range(&self) -> f64 {
        self.bounds.1 - self.bounds.0
    }

    pub fn sigma_min(&self) -> f64 {
        SIGMA_MIN_FRACTION * self.range()
    }

    pub fn sigma_max(&self) -> f64 {
        SIGMA_MAX_FRACTION * self.range()
    }

    #[inline]
    fn leaky(&self, z: f64) -> f64 {
        if z > 0.0 {
            z
        } else {
            self.leaky_slope * z
        }
    }

    #[inline]
    fn leaky_grad(&self, z: f64) -> f64 {
        if z > 0.0 {
            1.0
        } else {
            self.leaky_slope
        }
    }

    fn check_dim(&self, features: &[f64]) -> Result<(), PolicyError> {
        if features.len() != self.n_features() {
            return Err(PolicyError::DimensionMismatch { expected: self.n_features(), got: features.len() });
        }
        Ok(())
    }

    fn forward_cached(&self, features: &[f64]) -> ForwardCache {
        let n_layers = self.layer_sizes.len() - 1;
        let mut inputs = Vec::with_capacity(n_layers);
        let mut pre = Vec::with_capacity(n_layers - 1);
        let mut a = features.to_vec();
        let mut offset = 0;
        for l in 0..n_layers {
            let (fan_in, fan_out) = (self.layer_sizes[l], self.layer_sizes[l + 1]);
            let w = &self.params[offset..offset + fan_in * fan_out];
            let b = &self.params[offset + fan_in * fan_out..offset + fan_in * fan_out + fan_out];
            offset += fan_in * fan_out + fan_out;
            let z: Vec<f64> = (0..fan_out)
                .map(|row| b[row] + w[row * fan_in..(row + 1) * fan_in].iter().zip(&a).map(|(w, x)| w * x).sum::<f64>())
                .collect();
            let next = if l + 1 == n_layers {
                z.clone()
            } else {
                z.iter().map(|&v| self.leaky(v)).collect()
            };
            inputs.push(std::mem::replace(&mut a, next));
            if l + 1 < n_layers {
                pre.push(z);
            }
        }
        ForwardCache { inputs, pre, head: a }
    }

    fn head_to_output(&self, head: &[f64]) -> PolicyOutput {
        let n_u = self.n_inputs();
        let (s_lo, s_hi) = (self.sigma_min(), self.sigma_max());
        // The clamps only absorb rounding at saturation.
        PolicyOutput {
            mean: head[..n_u]
                .iter()
                .map(|&o| (self.bounds.0 + self.range() * logistic(o)).clamp(self.bounds.0, self.bounds.1))
                .collect(),
            std: head[n_u..].iter().map(|&o| (s_lo + (s_hi - s_lo) * logistic(o)).clamp(s_lo, s_hi)).collect(),
        }
    }

    /// `∇_θ log π(u_raw | features)` as a fresh vector shaped like the parameters.
    pub fn grad_log_prob(&self, features: &[f64], u_raw: &[f64]) -> Result<Vec<f64>, PolicyError> {
        let mut g = vec![0.0; self.params.len()];
        self.accumulate_grad_log_prob(features, u_raw, &mut g)?;
        Ok(g)
    }

    /// Writes the versioned little-endian binary checkpoint.
    pub fn write_checkpoint<W: Write>(&self, mut w: W) -> Result<(), PolicyError> {
        w.write_all(CHECKPOINT_MAGIC)?;
        w.write_all(&CHECKPOINT_VERSION.to_le_bytes())?;
        w.write_all(&(self.layer_sizes.len() as u32).to_le_bytes())?;
        for &n in &self.layer_sizes {
            w.write_all(&(n as u64).to_le_bytes())?;
        }
        for v in [self.leaky_slope, self.bounds.0, self.bounds.1] {
            w.write_all(&v.to_le_bytes())?;
        }
        w.write_all(&(self.params.len() as u64).to_le_bytes())?;
        for p in &self.params {
            w.write_all(&p.to_le_bytes())?;
        }
        Ok(())
    }

    pub fn read_checkpoint<R: Read>(mut r: R) -> Result<Self, PolicyError> {
        let mut magic = [0u8; 8];
        r.read_exact(&mut magic)?;
        if &magic != CHECKPOINT_MAGIC {
            return Err(PolicyError::Checkpoint("not a policy checkpoint".into()));
        }
        let version = read_u32(&mut r)?;
        if version != CHECKPOINT_VERSION {
            return Err(PolicyError::Checkpoint(format!("unsupported version {version}")));
        }
        let n_sizes = read_u32(&mut r)? as usize;
        if n_sizes > 64 {
            return Err(PolicyError::Checkpoint(format!("implausible layer count {n_sizes}")));
        }
        let sizes = (0..n_sizes).map(|_| read_u64(&mut r).map(|v| v as usize)).collect::<Result<Vec<_>, _>>()?;
        let slope = read_f64(&mut r)?;
        let bounds = (read_f64(&mut r)?, read_f64(&mut r)?);
        let n_params = read_u64(&mut r)? as usize;
        let expected = Self::zeros(sizes.clone(), slope, bounds)?.params.len();
        if n_params != expected {
            return Err(PolicyError::Checkpoint(format!("{n_params} parameters stored, layout needs {expected}")));
        }
        let params = (0..n_params).map(|_| read_f64(&mut r)).collect::<Result<Vec<_>, _>>()?;
        let mut trailing = [0u8; 1];
        if r.read(&mut trailing)? != 0 {
            return Err(PolicyError::Checkpoint("trailing bytes after parameters".into()));
        }
        Self::from_parts(sizes, slope, bounds, params)
    }

    pub fn save<P: AsRef<Path>>(&self, path: P) -> Result<(), PolicyError> {
        let mut buf = Vec::new();
        self.write_checkpoint(&mut buf)?;
        std::fs::write(path, buf)?;
        Ok(())
    }

    pub fn load<P: AsRef<Path>>(path: P) -> Result<Self, PolicyError> {
        let bytes = std::fs::read(path)?;
        Self::read_checkpoint(&bytes[..])
    }
}

fn read_u32<R: Read>(r: &mut R) -> io::Result<u32> {
    let mut b = [0u8; 4];
    r.read_exact(&mut b)?;
    Ok(u32::from_le_bytes(b))
}

fn read_u64<R: Read>(r: &mut R) -> io::Result<u64> {
    let mut b = [0u8; 8];
    r.read_exact(&mut b)?;
    Ok(u64::from_le_bytes(b))
}

fn read_f64<R: Read>(r: &mut R) -> io::Result<f64> {
    let mut b = [0u8; 8];
    r.read_exact(&mut b)?;
    Ok(f64::from_le_bytes(b))
}

impl StochasticPolicy for GaussianMlp {
    fn forward(&self, features: &[f64]) -> Result<PolicyOutput, PolicyError> {
        self.check_dim(features)?;
        Ok(self.head_to_output(&self.forward_cached(features).head))
    }
}

impl DifferentiablePolicy for GaussianMlp {
    fn params(&self) -> &[f64] {
        &self.params
    }

    fn params_mut(&mut self) -> &mut [f64] {
        &mut self.params
    }

    fn accumulate_grad_log_prob(&self, features: &[f64], u_raw: &[f64], grad: &mut [f64]) -> Result<(), PolicyError> {
        self.check_dim(features)?;
        let n_u = self.n_inputs();
        if u_raw.len() != n_u {
            return Err(PolicyError::DimensionMismatch { expected: n_u, got: u_raw.len() });
        }
        assert_eq!(grad.len(), self.params.len(), "gradient buffer must match the parameters");

        let cache = self.forward_cached(features);
        let (s_lo, s_hi) = (self.sigma_min(), self.sigma_max());

        // d log π / d head.
        let mut delta = vec![0.0; 2 * n_u];
        for c in 0..n_u {
            let gm = logistic(cache.head[c]);
            let gs = logistic(cache.head[n_u + c]);
            let m = self.bounds.0 + self.range() * gm;
            let s = s_lo + (s_hi - s_lo) * gs;
            let r = u_raw[c] - m;
            let dlp_dm = r / (s * s);
            let dlp_ds = -1.0 / s + r * r / (s * s * s);
            delta[c] = dlp_dm * self.range() * gm * (1.0 - gm);
            delta[n_u + c] = dlp_ds * (s_hi - s_lo) * gs * (1.0 - gs);
        }

        let n_layers = self.layer_sizes.len() - 1;
        let mut offset = self.params.len();
        for l in (0..n_layers).rev() {
            let (fan_in, fan_out) = (self.layer_sizes[l], self.layer_sizes[l + 1]);
            offset -= fan_in * fan_out + fan_out;
            let input = &cache.inputs[l];
            let (gw, gb) = grad[offset..offset + fan_in * fan_out + fan_out].split_at_mut(fan_in * fan_out);
            for row in 0..fan_out {
                let d = delta[row];
                gb[row] += d;
                for (g, x) in gw[row * fan_in..(row + 1) * fan_in].iter_mut().zip(input) {
                    *g += d * x;
                }
            }
            if l > 0 {
                let w = &self.params[offset..offset + fan_in * fan_out];
                let z = &cache.pre[l - 1];
                delta = (0..fan_in)
                    .map(|col| {
                        let back: f64 = (0..fan_out).map(|row| w[row * fan_in + col] * delta[row]).sum();
                        back * self.leaky_grad(z[col])
                    })
                    .collect();
            }
        }
        Ok(())
    }
}
