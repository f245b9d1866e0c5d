//! Experiment configuration: a flat, human-writable TOML file with one nested
//! `[noise]` section.
//!
//! One canonical serializer ([`to_canonical_toml`]) renders a config; configs are
//! compared structurally, and `parse(print(config)) == config` holds for every
//! shipped scenario, so run manifests diff cleanly.

use serde::{Deserialize, Serialize};

use cylevy::hilbert::TruncatedVector;
use cylevy::NoiseModel64;

use crate::error::CliError;

/// Noise model selector for the `[noise]` table. `jump_mean` is a single number
/// replicated to every coordinate, keeping the config flat.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum NoiseConfig {
    /// Brownian noise with covariance `q * I`.
    Brownian { q: f64 },
    /// Independent symmetric α-stable coordinates.
    AlphaStable { alpha: f64, scale: f64 },
    /// Compound Poisson with Gaussian jumps `N(jump_mean * 1, jump_std² I)`.
    CompoundPoisson {
        rate: f64,
        jump_mean: f64,
        jump_std: f64,
    },
    /// No noise at all (pure-drift problems).
    None,
}

impl NoiseConfig {
    /// Instantiate the noise model on `R^dim_u`. Parameter errors surface as
    /// validation failures.
    pub fn build(&self, dim_u: usize) -> Result<NoiseModel64, CliError> {
        let model = match *self {
            NoiseConfig::Brownian { q } => NoiseModel64::brownian_scaled(dim_u, q),
            NoiseConfig::AlphaStable { alpha, scale } => {
                NoiseModel64::alpha_stable(dim_u, alpha, scale)
            }
            NoiseConfig::CompoundPoisson {
                rate,
                jump_mean,
                jump_std,
            } => NoiseModel64::compound_poisson(
                dim_u,
                rate,
                TruncatedVector::new(vec![jump_mean; dim_u]),
                jump_std,
            ),
            NoiseConfig::None => NoiseModel64::deterministic(dim_u),
        };
        model.map_err(|e| CliError::Validation(format!("noise model: {e}")))
    }
}

fn default_output_dir() -> String {
    "out".to_string()
}

/// One experiment: scenario name, sizes, grid, noise, tolerances and seeds.
///
/// Unknown keys are rejected so a typo cannot silently fall back to a default.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    /// Name of a shipped scenario; `list-scenarios` prints the registry.
    pub scenario: String,
    /// State space dimension (number of retained spectral coordinates).
    pub d_h: usize,
    /// Noise space dimension.
    pub d_u: usize,
    /// Number of uniform grid intervals on `[0, horizon]`.
    pub n_steps: usize,
    /// Time horizon `T`.
    pub horizon: f64,
    /// Residual budget for the adaptive solver (`solve`, `metrics`).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub epsilon: Option<f64>,
    /// Strictly decreasing budgets for `converge`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub epsilon_list: Option<Vec<f64>>,
    /// Monte-Carlo sample count; seeds are `seed_base, seed_base + 1, …`.
    pub n_paths: usize,
    pub seed_base: u64,
    /// Worker pool size; `0` uses one worker per core.
    #[serde(default)]
    pub threads: usize,
    #[serde(default = "default_output_dir")]
    pub output_dir: String,
    pub noise: NoiseConfig,
}

impl ExperimentConfig {
    /// Structural validation shared by every subcommand.
    pub fn validate(&self) -> Result<(), CliError> {
        let fail = |msg: String| Err(CliError::Validation(msg));
        if self.scenario.is_empty() {
            return fail("scenario name must not be empty".into());
        }
        if self.d_h == 0 || self.d_u == 0 {
            return fail(format!(
                "dimensions must be >= 1, got d_h = {}, d_u = {}",
                self.d_h, self.d_u
            ));
        }
        if self.n_steps == 0 {
            return fail("n_steps must be >= 1".into());
        }
        if !(self.horizon > 0.0) || !self.horizon.is_finite() {
            return fail(format!("horizon must be positive, got {}", self.horizon));
        }
        if let Some(eps) = self.epsilon {
            if !(eps > 0.0) || !eps.is_finite() {
                return fail(format!("epsilon must be positive, got {eps}"));
            }
        }
        if let Some(list) = &self.epsilon_list {
            if list.is_empty() {
                return fail("epsilon_list must not be empty".into());
            }
            if list.iter().any(|e| !(*e > 0.0) || !e.is_finite()) {
                return fail("epsilon_list entries must be positive".into());
            }
            if list.windows(2).any(|w| w[1] >= w[0]) {
                return fail("epsilon_list must be strictly decreasing".into());
            }
        }
        if self.n_paths < 2 {
            return fail(format!("n_paths must be >= 2, got {}", self.n_paths));
        }
        match self.noise {
            NoiseConfig::Brownian { q } => {
                if !(q > 0.0) || !q.is_finite() {
                    return fail(format!("noise q must be positive, got {q}"));
                }
            }
            NoiseConfig::AlphaStable { alpha, scale } => {
                if !(alpha > 0.0 && alpha < 2.0) {
                    return fail(format!("alpha must lie in (0, 2), got {alpha}"));
                }
                if !(scale > 0.0) || !scale.is_finite() {
                    return fail(format!("stable scale must be positive, got {scale}"));
                }
            }
            NoiseConfig::CompoundPoisson {
                rate,
                jump_mean,
                jump_std,
            } => {
                if !(rate > 0.0) || !rate.is_finite() {
                    return fail(format!("jump rate must be positive, got {rate}"));
                }
                if !jump_mean.is_finite() {
                    return fail(format!("jump_mean must be finite, got {jump_mean}"));
                }
                if !(jump_std >= 0.0) || !jump_std.is_finite() {
                    return fail(format!(
                        "jump_std must be non-negative, got {jump_std}"
                    ));
                }
            }
            NoiseConfig::None => {}
        }
        Ok(())
    }

    /// The residual budget, required by `solve` and `metrics`.
    pub fn require_epsilon(&self) -> Result<f64, CliError> {
        self.epsilon.ok_or_else(|| {
            CliError::Validation("this subcommand needs an `epsilon` key".into())
        })
    }

    /// The budget schedule, required by `converge`.
    pub fn require_epsilon_list(&self) -> Result<&[f64], CliError> {
        self.epsilon_list.as_deref().ok_or_else(|| {
            CliError::Validation("this subcommand needs an `epsilon_list` key".into())
        })
    }
}

/// Parse a TOML config. The parser's multi-line diagnostics (source snippets with
/// carets) are collapsed to one line to fit the one-line-per-error output contract.
pub fn parse_toml(text: &str) -> Result<ExperimentConfig, CliError> {
    toml::from_str(text).map_err(|e| {
        let flat = e
            .to_string()
            .split_whitespace()
            .collect::<Vec<_>>()
            .join(" ");
        CliError::Config(flat)
    })
}

/// The one canonical rendering used for manifests and golden comparisons.
pub fn to_canonical_toml(config: &ExperimentConfig) -> String {
    toml::to_string(config).expect("config serialization cannot fail")
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample() -> ExperimentConfig {
        ExperimentConfig {
            scenario: "heat_alpha_stable".into(),
            d_h: 16,
            d_u: 16,
            n_steps: 64,
            horizon: 1.0,
            epsilon: Some(0.05),
            epsilon_list: None,
            n_paths: 200,
            seed_base: 0,
            threads: 0,
            output_dir: "out".into(),
            noise: NoiseConfig::AlphaStable {
                alpha: 1.5,
                scale: 0.5,
            },
        }
    }

    #[test]
    fn canonical_toml_round_trips() {
        let cfg = sample();
        let text = to_canonical_toml(&cfg);
        let back = parse_toml(&text).unwrap();
        assert_eq!(back, cfg);
    }

    #[test]
    fn unknown_keys_are_rejected() {
        let mut text = to_canonical_toml(&sample());
        text.insert_str(0, "bogus_key = 1\n");
        assert!(matches!(parse_toml(&text), Err(CliError::Config(_))));
    }

    #[test]
    fn syntax_errors_are_config_errors() {
        assert!(matches!(
            parse_toml("scenario = [unterminated"),
            Err(CliError::Config(_))
        ));
    }

    #[test]
    fn validation_rejects_bad_numbers() {
        let mut cfg = sample();
        cfg.d_h = 0;
        assert!(matches!(cfg.validate(), Err(CliError::Validation(_))));

        let mut cfg = sample();
        cfg.horizon = -1.0;
        assert!(cfg.validate().is_err());

        let mut cfg = sample();
        cfg.epsilon_list = Some(vec![0.1, 0.1]);
        assert!(cfg.validate().is_err());

        let mut cfg = sample();
        cfg.noise = NoiseConfig::AlphaStable {
            alpha: 2.0,
            scale: 1.0,
        };
        assert!(cfg.validate().is_err());

        assert!(sample().validate().is_ok());
    }

    #[test]
    fn every_noise_kind_builds_a_model() {
        for noise in [
            NoiseConfig::Brownian { q: 1.0 },
            NoiseConfig::AlphaStable {
                alpha: 1.5,
                scale: 0.5,
            },
            NoiseConfig::CompoundPoisson {
                rate: 2.0,
                jump_mean: 0.3,
                jump_std: 0.5,
            },
            NoiseConfig::None,
        ] {
            let model = noise.build(4).unwrap();
            assert_eq!(model.dim_u(), 4);
        }
    }
}
