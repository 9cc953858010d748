//! Convolutional ERP classifier.
//!
//! Input is one epoch, `n_channels x n_samples`, channel-major. Layers:
//!
//! 1. Spatial convolution: each of the `spatial_kernels` kernels spans all channels
//!    at a single time point (an `n_channels x 1` kernel), giving maps of length
//!    `n_samples`. Activation.
//! 2. Two temporal stages: every kernel spans all input maps over `length` samples
//!    (valid convolution), activation, then max-pooling of width `pool`.
//! 3. Fully connected layer to one logit, then a sigmoid.
//!
//! Parameters live in one flat `f64` vector. The canonical order is spatial weights
//! (kernel-major, channel-minor), spatial biases, temporal-1 weights
//! (`[out][in][tap]`) and biases, temporal-2 weights and biases, FC weights
//! (`[map][time]`), FC bias. Model files store exactly this vector.

mod arch;
mod gradcheck;
pub mod ops;

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

pub use arch::{Activation, Architecture, Layout, TemporalLayer};
pub use arch::{POOL_WIDTH, SPATIAL_KERNELS, TEMPORAL_KERNELS, TEMPORAL_LENGTH};
pub use gradcheck::{finite_diff_check, random_problem, GradCheck, REL_ERROR_FLOOR};
pub use ops::{bce_loss, bce_with_logit, conv2d_valid, relu, sigmoid, Matrix, PROB_EPS};

use crate::rng;
use crate::signal::Label;
use crate::{Error, Result};

/// Training hyperparameters. Defaults: learning rate 0.01, 50 epochs, batch 32.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub init_seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            learning_rate: 0.01,
            epochs: 50,
            batch_size: 32,
            init_seed: 42,
        }
    }
}

impl TrainConfig {
    /// `epochs == 0` is accepted and means "initialise only".
    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate.is_finite() && self.learning_rate > 0.0) {
            return Err(Error::invalid(format!(
                "learning rate {} must be > 0",
                self.learning_rate
            )));
        }
        if self.batch_size < 2 || !self.batch_size.is_multiple_of(2) {
            return Err(Error::invalid(format!(
                "batch size {} must be even and >= 2",
                self.batch_size
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Network {
    arch: Architecture,
    params: Vec<f64>,
}

/// d(loss)/d(parameter), laid out like [`Network::params`].
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    values: Vec<f64>,
}

impl Gradients {
    pub fn zeros(n: usize) -> Self {
        Self {
            values: vec![0.0; n],
        }
    }

    pub fn from_values(values: Vec<f64>) -> Self {
        Self { values }
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn add_assign(&mut self, other: &Gradients) {
        assert_eq!(self.len(), other.len(), "gradient shape mismatch");
        for (a, b) in self.values.iter_mut().zip(&other.values) {
            *a += b;
        }
    }

    pub fn scale(&mut self, s: f64) {
        for v in &mut self.values {
            *v *= s;
        }
    }

    pub fn first_non_finite(&self) -> Option<usize> {
        self.values.iter().position(|v| !v.is_finite())
    }

    pub fn max_abs_diff(&self, other: &Gradients) -> f64 {
        self.values
            .iter()
            .zip(&other.values)
            .fold(0.0, |m, (a, b)| f64::max(m, (a - b).abs()))
    }
}

/// Intermediate values of one forward pass, consumed by [`backward`].
#[derive(Debug, Clone)]
pub struct Cache {
    arch: Architecture,
    input: Vec<f64>,
    /// Spatial pre-activations, `[kernel][time]`.
    spatial_pre: Vec<f64>,
    spatial_act: Vec<f64>,
    temporal_pre: [Vec<f64>; 2],
    pooled: [Vec<f64>; 2],
    /// Index into the activation map picked by each pooled output.
    argmax: [Vec<usize>; 2],
    logit: f64,
    prob: f64,
}

impl Cache {
    pub fn probability(&self) -> f64 {
        self.prob
    }

    pub fn logit(&self) -> f64 {
        self.logit
    }

    pub fn spatial_pre_activations(&self) -> &[f64] {
        &self.spatial_pre
    }
}

impl Network {
    /// He-normal initialisation: weights of each layer ~ N(0, 2 / fan_in), biases 0.
    /// Draws come from [`rng::seeded`] in canonical parameter order.
    pub fn init(arch: Architecture, seed: u64) -> Result<Self> {
        arch.validate()?;
        let layout = arch.layout();
        let mut params = vec![0.0; layout.total];
        let mut rng = rng::seeded(seed);
        let blocks = [
            (layout.spatial_w.clone(), arch.n_channels),
            (
                layout.temporal_w[0].clone(),
                arch.temporal_inputs(0) * arch.temporal[0].length,
            ),
            (
                layout.temporal_w[1].clone(),
                arch.temporal_inputs(1) * arch.temporal[1].length,
            ),
            (layout.fc_w.clone(), arch.fc_inputs()),
        ];
        for (range, fan_in) in blocks {
            let std = libm::sqrt(2.0 / fan_in as f64);
            for p in &mut params[range] {
                *p = std * rng::normal(&mut rng);
            }
        }
        Ok(Self { arch, params })
    }

    pub fn from_params(arch: Architecture, params: Vec<f64>) -> Result<Self> {
        arch.validate()?;
        if params.len() != arch.n_params() {
            return Err(Error::dims(format!(
                "architecture needs {} parameters, got {}",
                arch.n_params(),
                params.len()
            )));
        }
        if let Some(index) = params.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite { index });
        }
        Ok(Self { arch, params })
    }

    pub fn architecture(&self) -> &Architecture {
        &self.arch
    }

    pub fn params(&self) -> &[f64] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [f64] {
        &mut self.params
    }

    pub fn n_params(&self) -> usize {
        self.params.len()
    }

    pub fn layout(&self) -> Layout {
        self.arch.layout()
    }

    pub fn set_activation(&mut self, activation: Activation) {
        self.arch.activation = activation;
    }

    fn check_input(&self, epoch: &[f64]) -> Result<()> {
        let want = self.arch.n_channels * self.arch.n_samples;
        if epoch.len() != want {
            return Err(Error::dims(format!(
                "epoch has {} values, network expects {} x {}",
                epoch.len(),
                self.arch.n_channels,
                self.arch.n_samples
            )));
        }
        Ok(())
    }

    pub fn forward(&self, epoch: &[f64]) -> Result<(f64, Cache)> {
        self.check_input(epoch)?;
        let arch = self.arch;
        let layout = self.layout();
        let act = arch.activation;
        let (c_n, t_n, k_n) = (arch.n_channels, arch.n_samples, arch.spatial_kernels);

        let ws = &self.params[layout.spatial_w.clone()];
        let bs = &self.params[layout.spatial_b.clone()];
        let mut spatial_pre = vec![0.0; k_n * t_n];
        for k in 0..k_n {
            let out = &mut spatial_pre[k * t_n..(k + 1) * t_n];
            out.fill(bs[k]);
            for c in 0..c_n {
                let w = ws[k * c_n + c];
                for (o, x) in out.iter_mut().zip(&epoch[c * t_n..(c + 1) * t_n]) {
                    *o += w * x;
                }
            }
        }
        let spatial_act: Vec<f64> = spatial_pre.iter().map(|&z| act.apply(z)).collect();

        let mut temporal_pre: [Vec<f64>; 2] = [Vec::new(), Vec::new()];
        let mut pooled: [Vec<f64>; 2] = [Vec::new(), Vec::new()];
        let mut argmax: [Vec<usize>; 2] = [Vec::new(), Vec::new()];
        for i in 0..2 {
            let input: &[f64] = if i == 0 { &spatial_act } else { &pooled[0] };
            let layer = arch.temporal[i];
            let (n_in, len_in) = (arch.temporal_inputs(i), arch.temporal_input_len(i));
            let len_out = arch.conv_len(i);
            let w = &self.params[layout.temporal_w[i].clone()];
            let b = &self.params[layout.temporal_b[i].clone()];
            let mut pre = vec![0.0; layer.kernels * len_out];
            for o in 0..layer.kernels {
                let out = &mut pre[o * len_out..(o + 1) * len_out];
                out.fill(b[o]);
                for m in 0..n_in {
                    let x = &input[m * len_in..(m + 1) * len_in];
                    let kern = &w[(o * n_in + m) * layer.length..(o * n_in + m + 1) * layer.length];
                    for (j, &wj) in kern.iter().enumerate() {
                        for (dst, src) in out.iter_mut().zip(&x[j..j + len_out]) {
                            *dst += wj * src;
                        }
                    }
                }
            }
            let n_pool = arch.pooled_len(i);
            let mut p = Vec::with_capacity(layer.kernels * n_pool);
            let mut am = Vec::with_capacity(layer.kernels * n_pool);
            for o in 0..layer.kernels {
                for u in 0..n_pool {
                    let base = o * len_out + u * layer.pool;
                    let mut best = base;
                    let mut best_v = act.apply(pre[base]);
                    for (q, &x) in pre
                        .iter()
                        .enumerate()
                        .take(base + layer.pool)
                        .skip(base + 1)
                    {
                        let v = act.apply(x);
                        if v > best_v {
                            best = q;
                            best_v = v;
                        }
                    }
                    p.push(best_v);
                    am.push(best);
                }
            }
            temporal_pre[i] = pre;
            pooled[i] = p;
            argmax[i] = am;
        }

        let fc_w = &self.params[layout.fc_w.clone()];
        let logit =
            self.params[layout.fc_b] + fc_w.iter().zip(&pooled[1]).map(|(w, x)| w * x).sum::<f64>();
        let prob = sigmoid(logit);
        let cache = Cache {
            arch,
            input: epoch.to_vec(),
            spatial_pre,
            spatial_act,
            temporal_pre,
            pooled,
            argmax,
            logit,
            prob,
        };
        Ok((prob, cache))
    }

    pub fn predict(&self, epoch: &[f64]) -> Result<f64> {
        self.forward(epoch).map(|(p, _)| p)
    }

    /// `p <- p - lr * g` for every parameter.
    pub fn apply_sgd(&mut self, grads: &Gradients, lr: f64) -> Result<()> {
        if grads.len() != self.params.len() {
            return Err(Error::dims(format!(
                "{} gradients for {} parameters",
                grads.len(),
                self.params.len()
            )));
        }
        if let Some(index) = grads.first_non_finite() {
            return Err(Error::NonFinite { index });
        }
        for (p, g) in self.params.iter_mut().zip(grads.values()) {
            *p -= lr * g;
        }
        Ok(())
    }
}

/// He-normal network with the default architecture.
pub fn init_network(n_channels: usize, n_samples: usize, seed: u64) -> Result<Network> {
    Network::init(Architecture::new(n_channels, n_samples), seed)
}

pub fn forward(net: &Network, epoch: &[f64]) -> Result<(f64, Cache)> {
    net.forward(epoch)
}

pub fn sgd_step(net: &Network, grads: &Gradients, lr: f64) -> Result<Network> {
    let mut next = net.clone();
    next.apply_sgd(grads, lr)?;
    Ok(next)
}

/// Exact gradient of `bce_loss(forward(epoch), label)` for every parameter.
///
/// The loss derivative with respect to the logit is `p - t`, the derivative of the
/// unclamped cross-entropy.
pub fn backward(net: &Network, cache: &Cache, label: Label) -> Result<Gradients> {
    let arch = net.arch;
    if cache.arch != arch {
        return Err(Error::dims(
            "cache was produced by a different architecture",
        ));
    }
    let layout = net.layout();
    let act = arch.activation;
    let params = &net.params;
    let mut g = vec![0.0; layout.total];
    let (c_n, t_n, k_n) = (arch.n_channels, arch.n_samples, arch.spatial_kernels);

    let d_logit = cache.prob - label.as_f64();
    g[layout.fc_b] = d_logit;
    let fc_w = &params[layout.fc_w.clone()];
    for (gw, x) in g[layout.fc_w.clone()].iter_mut().zip(&cache.pooled[1]) {
        *gw = d_logit * x;
    }
    // Gradient w.r.t. the pooled output of the last temporal stage.
    let mut d_pooled: Vec<f64> = fc_w.iter().map(|w| w * d_logit).collect();

    for i in (0..2).rev() {
        let layer = arch.temporal[i];
        let (n_in, len_in) = (arch.temporal_inputs(i), arch.temporal_input_len(i));
        let len_out = arch.conv_len(i);
        let pre = &cache.temporal_pre[i];
        let mut d_pre = vec![0.0; layer.kernels * len_out];
        for (&idx, &d) in cache.argmax[i].iter().zip(&d_pooled) {
            d_pre[idx] += d * act.derivative(pre[idx]);
        }
        let input: &[f64] = if i == 0 {
            &cache.spatial_act
        } else {
            &cache.pooled[0]
        };
        let w = &params[layout.temporal_w[i].clone()];
        let mut d_input = vec![0.0; n_in * len_in];
        let wr = layout.temporal_w[i].clone();
        let br = layout.temporal_b[i].clone();
        for o in 0..layer.kernels {
            let dz = &d_pre[o * len_out..(o + 1) * len_out];
            g[br.start + o] = dz.iter().sum();
            for m in 0..n_in {
                let x = &input[m * len_in..(m + 1) * len_in];
                let dx = &mut d_input[m * len_in..(m + 1) * len_in];
                let off = (o * n_in + m) * layer.length;
                for j in 0..layer.length {
                    let xs = &x[j..j + len_out];
                    g[wr.start + off + j] = dz.iter().zip(xs).map(|(a, b)| a * b).sum();
                    let wj = w[off + j];
                    for (d, &z) in dx[j..j + len_out].iter_mut().zip(dz) {
                        *d += wj * z;
                    }
                }
            }
        }
        if i == 1 {
            d_pooled = d_input;
        } else {
            // d_input is w.r.t. spatial activations; continue below.
            let mut d_spatial = d_input;
            for (d, &z) in d_spatial.iter_mut().zip(&cache.spatial_pre) {
                *d *= act.derivative(z);
            }
            for k in 0..k_n {
                let dz = &d_spatial[k * t_n..(k + 1) * t_n];
                g[layout.spatial_b.start + k] = dz.iter().sum();
                for c in 0..c_n {
                    let x = &cache.input[c * t_n..(c + 1) * t_n];
                    g[layout.spatial_w.start + k * c_n + c] =
                        dz.iter().zip(x).map(|(a, b)| a * b).sum();
                }
            }
            d_pooled = Vec::new();
        }
    }
    debug_assert!(d_pooled.is_empty());
    Ok(Gradients { values: g })
}

/// Mean loss gradient over `examples`, accumulated in the given order.
/// Returns the gradient and the mean loss.
pub fn mean_gradient<'a, I>(net: &Network, examples: I) -> Result<(Gradients, f64)>
where
    I: IntoIterator<Item = (&'a [f64], Label)>,
{
    let mut total = Gradients::zeros(net.n_params());
    let mut loss = 0.0;
    let mut n = 0usize;
    for (x, label) in examples {
        let (p, cache) = net.forward(x)?;
        loss += bce_loss(p, label.as_f64());
        total.add_assign(&backward(net, &cache, label)?);
        n += 1;
    }
    if n == 0 {
        return Err(Error::invalid("empty batch"));
    }
    total.scale(1.0 / n as f64);
    Ok((total, loss / n as f64))
}
