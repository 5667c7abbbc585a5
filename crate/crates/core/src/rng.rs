//! Deterministic counter-based random streams.
//!
//! Every random quantity in the pipeline is drawn from a [`Stream`]
//! keyed by a seed and a chain of domain-separation tags (month index,
//! draw index, diffusion step, ...). A stream is a stateless function of
//! (key, counter), so independent streams can be evaluated in any order
//! or in parallel and still reproduce the same values — this is what
//! makes the Monte Carlo sampler and the ablation sweep reproducible
//! regardless of scheduling.
//!
//! The generator hashes the 128-bit (key, counter) pair through two
//! rounds of the splitmix64 finalizer. That is plenty for Monte Carlo
//! use; it is not a cryptographic generator.

// Needed by the no_std build; std builds resolve the inherent methods.
#[allow(unused_imports)]
use num_traits::Float;

/// Domain-separation tags for the pipeline's named streams.
///
/// Keeping them in one place guarantees two call sites can never collide
/// on the same (seed, tag) stream by accident.
pub mod tags {
    /// Denoiser parameter initialization.
    pub const PARAM_INIT: u64 = 0x01;
    /// Per-epoch shuffle of training months.
    pub const TRAIN_SHUFFLE: u64 = 0x02;
    /// Per-step minibatch noise (diffusion step indices and epsilons).
    pub const TRAIN_BATCH: u64 = 0x03;
    /// Reverse-sampler noise, forked per (month, draw, step).
    pub const SAMPLE: u64 = 0x04;
    /// Synthetic panel characteristics.
    pub const SYNTH_CHARS: u64 = 0x05;
    /// Synthetic panel return shocks.
    pub const SYNTH_NOISE: u64 = 0x06;
    /// Factor-subset selection permutation.
    pub const FACTOR_SELECT: u64 = 0x07;
    /// Derives the training seed of one ablation cell.
    pub const ABLATION_TRAIN: u64 = 0x08;
    /// Derives the sampling seed of one ablation cell.
    pub const ABLATION_SAMPLE: u64 = 0x09;
}

#[inline]
fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Mixes a tag into a key, producing a new independent key.
#[inline]
pub fn derive(key: u64, tag: u64) -> u64 {
    splitmix64(splitmix64(key) ^ tag.wrapping_mul(0xa24b_aed4_963e_e407))
}

/// A counter-based random stream.
///
/// `Stream::new(seed).fork(a).fork(b)` and an identically forked stream
/// elsewhere produce the same sequence; forks with different tags are
/// statistically independent.
#[derive(Debug, Clone)]
pub struct Stream {
    key: u64,
    counter: u64,
    spare_normal: Option<f64>,
}

impl Stream {
    pub fn new(seed: u64) -> Self {
        Stream {
            key: splitmix64(seed ^ 0x6a09_e667_f3bc_c908),
            counter: 0,
            spare_normal: None,
        }
    }

    /// Derives an independent child stream for the given tag.
    #[must_use]
    pub fn fork(&self, tag: u64) -> Stream {
        Stream {
            key: derive(self.key, tag),
            counter: 0,
            spare_normal: None,
        }
    }

    pub fn next_u64(&mut self) -> u64 {
        let v = splitmix64(self.key ^ splitmix64(self.counter));
        self.counter = self.counter.wrapping_add(1);
        v
    }

    /// Uniform draw in the half-open interval (0, 1].
    ///
    /// The lower bound is excluded so the value is always safe to pass
    /// to a logarithm.
    pub fn next_uniform(&mut self) -> f64 {
        (((self.next_u64() >> 11) + 1) as f64) * (1.0 / 9_007_199_254_740_992.0)
    }

    /// Standard normal draw (Box–Muller; pairs are cached).
    pub fn next_normal(&mut self) -> f64 {
        if let Some(z) = self.spare_normal.take() {
            return z;
        }
        let u1 = self.next_uniform();
        let u2 = self.next_uniform();
        let r = (-2.0 * u1.ln()).sqrt();
        let theta = 2.0 * core::f64::consts::PI * u2;
        self.spare_normal = Some(r * theta.sin());
        r * theta.cos()
    }

    pub fn fill_normal(&mut self, out: &mut [f64]) {
        for slot in out.iter_mut() {
            *slot = self.next_normal();
        }
    }

    /// Uniform integer in `[0, n)` via the widening-multiply map.
    pub fn next_index(&mut self, n: usize) -> usize {
        debug_assert!(n > 0);
        ((self.next_u64() as u128 * n as u128) >> 64) as usize
    }

    /// Fisher–Yates shuffle.
    pub fn shuffle<T>(&mut self, xs: &mut [T]) {
        for i in (1..xs.len()).rev() {
            let j = self.next_index(i + 1);
            xs.swap(i, j);
        }
    }
}
