//! Declarative run configuration.
//!
//! One TOML file drives every command; comments are allowed, unknown
//! keys are rejected with a field path, and every section falls back to
//! documented defaults when omitted. `--seed` and `--out` override the
//! corresponding fields from the command line.

use std::path::Path;

use serde::Deserialize;

use factordiff_core::backtest::BacktestConfig;
use factordiff_core::denoiser::DenoiserConfig;
use factordiff_core::panel::{Nonlinearity, PreprocessSpec, SyntheticSpec};
use factordiff_core::portfolio::MvoConfig;
use factordiff_core::training::TrainConfig;

use crate::error::{CliError, CliResult};

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    /// Master seed; every stream the pipeline uses derives from it.
    #[serde(default = "default_seed")]
    pub seed: u64,
    #[serde(default = "default_output_dir")]
    pub output_dir: String,
    #[serde(default)]
    pub preprocess: PreprocessSection,
    #[serde(default)]
    pub synthetic: SyntheticSection,
    #[serde(default)]
    pub diffusion: DiffusionSection,
    #[serde(default)]
    pub denoiser: DenoiserSection,
    #[serde(default)]
    pub training: TrainingSection,
    #[serde(default)]
    pub mvo: MvoSection,
    #[serde(default)]
    pub backtest: BacktestSection,
    #[serde(default)]
    pub ablation: AblationSection,
}

fn default_seed() -> u64 {
    42
}

fn default_output_dir() -> String {
    "out".into()
}

impl Default for RunConfig {
    fn default() -> Self {
        toml::from_str("").expect("empty config deserializes from defaults")
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PreprocessSection {
    #[serde(default = "d_winsor_low")]
    pub winsor_low_q: f64,
    #[serde(default = "d_winsor_high")]
    pub winsor_high_q: f64,
    #[serde(default = "d_clip_bound")]
    pub clip_bound: f64,
    #[serde(default = "d_target_n")]
    pub target_n: usize,
}

fn d_winsor_low() -> f64 {
    0.01
}
fn d_winsor_high() -> f64 {
    0.99
}
fn d_clip_bound() -> f64 {
    5.0
}
fn d_target_n() -> usize {
    20
}

impl Default for PreprocessSection {
    fn default() -> Self {
        PreprocessSection {
            winsor_low_q: d_winsor_low(),
            winsor_high_q: d_winsor_high(),
            clip_bound: d_clip_bound(),
            target_n: d_target_n(),
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SyntheticSection {
    #[serde(default = "d_synth_t")]
    pub t: usize,
    #[serde(default = "d_synth_n")]
    pub n: usize,
    #[serde(default = "d_synth_k")]
    pub k: usize,
    #[serde(default = "d_synth_k_true")]
    pub k_true: usize,
    #[serde(default = "d_signal_scale")]
    pub signal_scale: f64,
    #[serde(default = "d_noise_scale")]
    pub noise_scale: f64,
    /// "linear" or "tanh".
    #[serde(default = "d_nonlinearity")]
    pub nonlinearity: String,
    /// Defaults to the master seed when omitted.
    #[serde(default)]
    pub seed: Option<u64>,
}

fn d_synth_t() -> usize {
    60
}
fn d_synth_n() -> usize {
    20
}
fn d_synth_k() -> usize {
    30
}
fn d_synth_k_true() -> usize {
    5
}
fn d_signal_scale() -> f64 {
    0.03
}
fn d_noise_scale() -> f64 {
    0.03
}
fn d_nonlinearity() -> String {
    "tanh".into()
}

impl Default for SyntheticSection {
    fn default() -> Self {
        toml::from_str("").expect("defaults")
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DiffusionSection {
    #[serde(default = "d_steps")]
    pub steps: usize,
    #[serde(default = "d_beta_start")]
    pub beta_start: f64,
    #[serde(default = "d_beta_end")]
    pub beta_end: f64,
}

fn d_steps() -> usize {
    200
}
fn d_beta_start() -> f64 {
    1e-4
}
fn d_beta_end() -> f64 {
    0.05
}

impl Default for DiffusionSection {
    fn default() -> Self {
        DiffusionSection {
            steps: d_steps(),
            beta_start: d_beta_start(),
            beta_end: d_beta_end(),
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DenoiserSection {
    #[serde(default = "d_embed_dim")]
    pub embed_dim: usize,
    #[serde(default = "d_heads")]
    pub heads: usize,
    #[serde(default = "d_layers")]
    pub layers: usize,
    /// Retain this many characteristic columns (seeded nested subset)
    /// before training and backtesting; omit to use the full panel.
    #[serde(default)]
    pub factors: Option<usize>,
}

fn d_embed_dim() -> usize {
    64
}
fn d_heads() -> usize {
    4
}
fn d_layers() -> usize {
    2
}

impl Default for DenoiserSection {
    fn default() -> Self {
        DenoiserSection {
            embed_dim: d_embed_dim(),
            heads: d_heads(),
            layers: d_layers(),
            factors: None,
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainingSection {
    #[serde(default = "d_lr")]
    pub learning_rate: f64,
    #[serde(default = "d_beta1")]
    pub adam_beta1: f64,
    #[serde(default = "d_beta2")]
    pub adam_beta2: f64,
    #[serde(default = "d_adam_eps")]
    pub adam_epsilon: f64,
    #[serde(default = "d_epochs")]
    pub epochs: usize,
    #[serde(default = "d_batch_months")]
    pub batch_months: usize,
    #[serde(default = "d_train_fraction")]
    pub train_fraction: f64,
}

fn d_lr() -> f64 {
    1e-3
}
fn d_beta1() -> f64 {
    0.9
}
fn d_beta2() -> f64 {
    0.999
}
fn d_adam_eps() -> f64 {
    1e-8
}
fn d_epochs() -> usize {
    50
}
fn d_batch_months() -> usize {
    8
}
fn d_train_fraction() -> f64 {
    0.8
}

impl Default for TrainingSection {
    fn default() -> Self {
        toml::from_str("").expect("defaults")
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MvoSection {
    #[serde(default = "d_gamma")]
    pub gamma: f64,
    #[serde(default = "d_tol")]
    pub tol: f64,
    #[serde(default = "d_max_iters")]
    pub max_iters: usize,
    #[serde(default)]
    pub cost_coeff: f64,
}

fn d_gamma() -> f64 {
    100.0
}
fn d_tol() -> f64 {
    1e-8
}
fn d_max_iters() -> usize {
    50_000
}

impl Default for MvoSection {
    fn default() -> Self {
        MvoSection {
            gamma: d_gamma(),
            tol: d_tol(),
            max_iters: d_max_iters(),
            cost_coeff: 0.0,
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BacktestSection {
    #[serde(default = "d_samples")]
    pub samples: usize,
    #[serde(default = "d_window")]
    pub window: usize,
    #[serde(default = "d_shrinkage_delta")]
    pub shrinkage_delta: f64,
}

fn d_samples() -> usize {
    200
}
fn d_window() -> usize {
    24
}
fn d_shrinkage_delta() -> f64 {
    0.5
}

impl Default for BacktestSection {
    fn default() -> Self {
        BacktestSection {
            samples: d_samples(),
            window: d_window(),
            shrinkage_delta: d_shrinkage_delta(),
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AblationSection {
    /// Factor counts to sweep; values above the panel's K are clipped
    /// out with a warning row.
    #[serde(default = "d_k_list")]
    pub k_list: Vec<usize>,
    #[serde(default = "d_seeds")]
    pub seeds: Vec<u64>,
}

fn d_k_list() -> Vec<usize> {
    vec![1, 3, 6, 11, 18, 30, 48, 75, 115, 170, 240, 300, 350]
}

fn d_seeds() -> Vec<u64> {
    vec![1, 2, 3, 4, 5]
}

impl Default for AblationSection {
    fn default() -> Self {
        AblationSection {
            k_list: d_k_list(),
            seeds: d_seeds(),
        }
    }
}

impl RunConfig {
    /// Parses and validates a config file. Unknown keys and invariant
    /// violations are reported with their field path before any
    /// computation starts.
    pub fn load(path: &Path) -> CliResult<RunConfig> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::config(format!("cannot read {}: {e}", path.display())))?;
        let config: RunConfig = toml::from_str(&text)
            .map_err(|e| CliError::config(format!("{}: {e}", path.display())))?;
        config.validate()?;
        Ok(config)
    }

    pub fn validate(&self) -> CliResult<()> {
        self.preprocess_spec().validate().map_err(section("preprocess"))?;
        self.synthetic_spec()?.validate().map_err(section("synthetic"))?;
        factordiff_core::diffusion::linear_schedule(
            self.diffusion.steps,
            self.diffusion.beta_start,
            self.diffusion.beta_end,
        )
        .map_err(section("diffusion"))?;
        self.denoiser_config(self.denoiser.factors.unwrap_or(1).max(1))
            .validate()
            .map_err(section("denoiser"))?;
        self.train_config().validate().map_err(section("training"))?;
        self.mvo_config().validate().map_err(section("mvo"))?;
        if self.backtest.samples < 2 {
            return Err(CliError::config("backtest.samples: need at least 2"));
        }
        if !(0.0..=1.0).contains(&self.backtest.shrinkage_delta) {
            return Err(CliError::config(
                "backtest.shrinkage_delta: must lie in [0, 1]",
            ));
        }
        if self.ablation.k_list.is_empty() {
            return Err(CliError::config("ablation.k_list: must be non-empty"));
        }
        if self.ablation.seeds.is_empty() {
            return Err(CliError::config("ablation.seeds: must be non-empty"));
        }
        Ok(())
    }

    pub fn preprocess_spec(&self) -> PreprocessSpec {
        PreprocessSpec {
            winsor_low_q: self.preprocess.winsor_low_q,
            winsor_high_q: self.preprocess.winsor_high_q,
            clip_bound: self.preprocess.clip_bound,
            target_n: self.preprocess.target_n,
        }
    }

    pub fn synthetic_spec(&self) -> CliResult<SyntheticSpec> {
        let nonlinearity = match self.synthetic.nonlinearity.as_str() {
            "linear" => Nonlinearity::Linear,
            "tanh" => Nonlinearity::TanhSaturating,
            other => {
                return Err(CliError::config(format!(
                    "synthetic.nonlinearity: '{other}' is not one of linear, tanh"
                )))
            }
        };
        Ok(SyntheticSpec {
            t: self.synthetic.t,
            n: self.synthetic.n,
            k: self.synthetic.k,
            k_true: self.synthetic.k_true,
            signal_scale: self.synthetic.signal_scale,
            noise_scale: self.synthetic.noise_scale,
            nonlinearity,
            seed: self.synthetic.seed.unwrap_or(self.seed),
        })
    }

    pub fn schedule(&self) -> factordiff_core::diffusion::NoiseSchedule {
        factordiff_core::diffusion::linear_schedule(
            self.diffusion.steps,
            self.diffusion.beta_start,
            self.diffusion.beta_end,
        )
        .expect("validated at load time")
    }

    pub fn denoiser_config(&self, k: usize) -> DenoiserConfig {
        DenoiserConfig {
            embed_dim: self.denoiser.embed_dim,
            heads: self.denoiser.heads,
            layers: self.denoiser.layers,
            k,
            max_steps: self.diffusion.steps,
        }
    }

    pub fn train_config(&self) -> TrainConfig {
        TrainConfig {
            learning_rate: self.training.learning_rate,
            adam_beta1: self.training.adam_beta1,
            adam_beta2: self.training.adam_beta2,
            adam_epsilon: self.training.adam_epsilon,
            epochs: self.training.epochs,
            batch_months: self.training.batch_months,
            train_fraction: self.training.train_fraction,
            seed: self.seed,
        }
    }

    pub fn mvo_config(&self) -> MvoConfig {
        MvoConfig {
            gamma: self.mvo.gamma,
            tol: self.mvo.tol,
            max_iters: self.mvo.max_iters,
            cost_coeff: self.mvo.cost_coeff,
        }
    }

    pub fn backtest_config(&self, sample_seed: u64) -> BacktestConfig {
        BacktestConfig {
            samples: self.backtest.samples,
            window: self.backtest.window,
            shrinkage_delta: self.backtest.shrinkage_delta,
            sample_seed,
        }
    }
}

fn section(name: &'static str) -> impl Fn(factordiff_core::Error) -> CliError {
    move |e| CliError::Config(format!("{name}: {e}"))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_config_uses_defaults() {
        let config: RunConfig = toml::from_str("").unwrap();
        assert_eq!(config.seed, 42);
        assert_eq!(config.diffusion.steps, 200);
        assert_eq!(config.denoiser.embed_dim, 64);
        assert_eq!(config.ablation.k_list.len(), 13);
        config.validate().unwrap();
    }

    #[test]
    fn unknown_keys_rejected_with_path() {
        let err = toml::from_str::<RunConfig>("[training]\nlearning_rat = 0.1\n").unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("learning_rat"), "{msg}");
    }

    #[test]
    fn invalid_invariants_rejected_with_section() {
        let config: RunConfig =
            toml::from_str("[synthetic]\nk = 5\nk_true = 9\n").unwrap();
        let err = config.validate().unwrap_err();
        assert!(matches!(err, CliError::Config(_)));
        assert!(err.to_string().contains("synthetic"), "{err}");
    }

    #[test]
    fn comments_are_allowed() {
        let config: RunConfig = toml::from_str(
            "# master seed\nseed = 7\n[mvo]\ngamma = 50.0 # risk aversion\n",
        )
        .unwrap();
        assert_eq!(config.seed, 7);
        assert_eq!(config.mvo.gamma, 50.0);
    }

    #[test]
    fn nonlinearity_parse() {
        let config: RunConfig = toml::from_str("[synthetic]\nnonlinearity = \"linear\"\n").unwrap();
        assert_eq!(
            config.synthetic_spec().unwrap().nonlinearity,
            Nonlinearity::Linear
        );
        let config: RunConfig = toml::from_str("[synthetic]\nnonlinearity = \"cubic\"\n").unwrap();
        assert!(config.synthetic_spec().is_err());
    }
}
