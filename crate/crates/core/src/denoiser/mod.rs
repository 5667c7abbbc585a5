//! Conditional noise-prediction network: a transformer over asset
//! tokens with characteristic-conditioned adaptive layer norm, plus
//! exact analytic gradients of the noise-prediction loss.
//!
//! Asset identity enters only through the characteristics — there are
//! no positional embeddings — so permuting tokens permutes the output,
//! a property the tests pin down exactly.

mod layout;
mod net;

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;
// Needed by the no_std build; std builds resolve the inherent methods.
#[allow(unused_imports)]
use num_traits::Float;

use crate::diffusion::{q_sample, NoisePredictor, NoiseSchedule};
use crate::error::{Error, Result};
use crate::linalg::Mat;
use crate::rng::{tags, Stream};

pub use layout::{Layout, LayoutEntry};

use net::Segments;

/// Architecture hyperparameters.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DenoiserConfig {
    /// Token width; must be even and divisible by `heads`.
    pub embed_dim: usize,
    pub heads: usize,
    pub layers: usize,
    /// Conditioning characteristic count (columns of the panel in use).
    pub k: usize,
    /// Diffusion step count the timestep embedding must cover.
    pub max_steps: usize,
}

impl DenoiserConfig {
    pub fn validate(&self) -> Result<()> {
        if self.embed_dim == 0 || self.embed_dim % 2 != 0 {
            return Err(Error::domain(format!(
                "embed_dim must be a positive even number, got {}",
                self.embed_dim
            )));
        }
        if self.heads == 0 || self.embed_dim % self.heads != 0 {
            return Err(Error::domain(format!(
                "heads = {} must divide embed_dim = {}",
                self.heads, self.embed_dim
            )));
        }
        if self.layers == 0 {
            return Err(Error::domain("layers must be positive"));
        }
        if self.k == 0 {
            return Err(Error::domain("k must be positive"));
        }
        if self.max_steps == 0 {
            return Err(Error::domain("max_steps must be positive"));
        }
        Ok(())
    }
}

/// All learnable weights in one flat vector plus the layout that names
/// each segment.
#[derive(Debug, Clone, PartialEq)]
pub struct DenoiserParams {
    flat: Vec<f64>,
    layout: Layout,
}

impl DenoiserParams {
    pub fn new(flat: Vec<f64>, layout: Layout) -> Result<Self> {
        if flat.len() != layout.len() {
            return Err(Error::shape(format!(
                "flat vector has {} entries, layout covers {}",
                flat.len(),
                layout.len()
            )));
        }
        if let Some(bad) = flat.iter().find(|v| !v.is_finite()) {
            return Err(Error::numeric(format!("non-finite parameter {bad}")));
        }
        Ok(DenoiserParams { flat, layout })
    }

    pub fn flat(&self) -> &[f64] {
        &self.flat
    }

    /// Mutable access for the optimizer; callers keep entries finite.
    pub fn flat_mut(&mut self) -> &mut [f64] {
        &mut self.flat
    }

    pub fn layout(&self) -> &Layout {
        &self.layout
    }

    /// View of one named segment.
    pub fn segment(&self, name: &str) -> Option<&[f64]> {
        self.layout.find(name).map(|e| &self.flat[e.range()])
    }

    /// Mutable view of one named segment (used by structural tests).
    pub fn segment_mut(&mut self, name: &str) -> Option<&mut [f64]> {
        let range = self.layout.find(name)?.range();
        Some(&mut self.flat[range])
    }
}

/// Scaled-uniform initialization with the adaptive-normalization
/// modulation heads and the output head zeroed, so a fresh network is
/// exactly the zero function. Deterministic in the seed.
pub fn init_params(config: &DenoiserConfig, seed: u64) -> Result<DenoiserParams> {
    config.validate()?;
    let layout = Layout::build(config);
    let mut flat = vec![0.0; layout.len()];
    let mut fan_in = 1usize;
    for (idx, entry) in layout.entries().iter().enumerate() {
        if entry.name.ends_with(".weight") {
            fan_in = entry.cols;
        }
        if Layout::zero_initialized(&entry.name) {
            continue;
        }
        let bound = 1.0 / (fan_in as f64).sqrt();
        let mut stream = Stream::new(seed).fork(tags::PARAM_INIT).fork(idx as u64);
        for slot in flat[entry.range()].iter_mut() {
            *slot = (2.0 * stream.next_uniform() - 1.0) * bound;
        }
    }
    DenoiserParams::new(flat, layout)
}

/// Predicted noise for one month of `N` asset tokens.
///
/// `conditioning` is the `N x k` characteristics matrix of the month.
pub fn forward(
    params: &DenoiserParams,
    noisy_returns: &[f64],
    step: usize,
    conditioning: &Mat,
    config: &DenoiserConfig,
) -> Result<Vec<f64>> {
    config.validate()?;
    check_params(params, config)?;
    let segs = Segments::resolve(&params.layout, config.layers);
    let (out, _cache) = net::forward_cache(
        &params.flat,
        &segs,
        noisy_returns,
        step,
        conditioning,
        config,
    )?;
    Ok(out)
}

/// One training example: a clean return vector with its diffusion step,
/// target noise, and conditioning matrix.
#[derive(Debug, Clone)]
pub struct BatchItem {
    pub x0: Vec<f64>,
    pub step: usize,
    pub epsilon: Vec<f64>,
    pub conditioning: Mat,
}

/// Mean-squared noise-prediction loss over the batch and its exact
/// gradient with respect to every flat parameter.
///
/// `loss = mean over items and assets of (forward(q_sample(x0)) - eps)^2`.
pub fn loss_and_gradients(
    params: &DenoiserParams,
    batch: &[BatchItem],
    schedule: &NoiseSchedule,
    config: &DenoiserConfig,
) -> Result<(f64, Vec<f64>)> {
    config.validate()?;
    check_params(params, config)?;
    if batch.is_empty() {
        return Err(Error::domain("batch must be non-empty"));
    }
    if schedule.steps() > config.max_steps {
        return Err(Error::domain(format!(
            "schedule has {} steps but the timestep embedding covers {}",
            schedule.steps(),
            config.max_steps
        )));
    }
    let segs = Segments::resolve(&params.layout, config.layers);
    let mut grad = vec![0.0; params.flat.len()];
    let mut loss = 0.0;
    let total_terms: usize = batch.iter().map(|item| item.x0.len()).sum();
    if total_terms == 0 {
        return Err(Error::domain("batch items must hold at least one asset"));
    }
    for item in batch {
        if item.x0.len() != item.epsilon.len() {
            return Err(Error::shape("x0 and epsilon lengths differ"));
        }
        let noisy = q_sample(&item.x0, item.step, schedule, &item.epsilon)?;
        let (out, cache) = net::forward_cache(
            &params.flat,
            &segs,
            &noisy,
            item.step,
            &item.conditioning,
            config,
        )?;
        // Scale so `loss` is the mean over every (item, asset) term of
        // the squared residual, weighting items by their asset count.
        let mut d_out = vec![0.0; out.len()];
        for ((d, o), e) in d_out.iter_mut().zip(out.iter()).zip(item.epsilon.iter()) {
            let r = o - e;
            loss += r * r;
            *d = 2.0 * r / total_terms as f64;
        }
        net::backward(
            &params.flat,
            &segs,
            &cache,
            &item.conditioning,
            &d_out,
            config,
            &mut grad,
        );
    }
    loss /= total_terms as f64;
    if !loss.is_finite() {
        return Err(Error::numeric(format!("loss diverged to {loss}")));
    }
    Ok((loss, grad))
}

fn check_params(params: &DenoiserParams, config: &DenoiserConfig) -> Result<()> {
    let expected = Layout::build(config).len();
    if params.flat.len() != expected {
        return Err(Error::shape(format!(
            "parameter vector has {} entries, config needs {expected}",
            params.flat.len()
        )));
    }
    Ok(())
}

/// Parameters bound to their config with pre-resolved segment ranges;
/// the form the sampler consumes.
#[derive(Debug, Clone)]
pub struct DenoiserModel {
    params: DenoiserParams,
    config: DenoiserConfig,
}

impl DenoiserModel {
    pub fn new(params: DenoiserParams, config: DenoiserConfig) -> Result<Self> {
        config.validate()?;
        check_params(&params, &config)?;
        Ok(DenoiserModel { params, config })
    }

    pub fn params(&self) -> &DenoiserParams {
        &self.params
    }

    pub fn config(&self) -> &DenoiserConfig {
        &self.config
    }

    pub fn into_params(self) -> DenoiserParams {
        self.params
    }
}

impl NoisePredictor for DenoiserModel {
    fn predict_noise(&self, noisy: &[f64], step: usize, conditioning: &Mat) -> Result<Vec<f64>> {
        let segs = Segments::resolve(&self.params.layout, self.config.layers);
        let (out, _cache) = net::forward_cache(
            &self.params.flat,
            &segs,
            noisy,
            step,
            conditioning,
            &self.config,
        )?;
        Ok(out)
    }
}
