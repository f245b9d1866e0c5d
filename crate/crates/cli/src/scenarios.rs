//! Shipped scenario registry.
//!
//! A scenario fixes the structural part of a problem — semigroup rates, drift and
//! diffusion fields, initial value — parameterized by the config's dimensions; the
//! config supplies the noise model, grid and tolerances. Every shipped scenario uses
//! `d_u == d_h` (diagonal spectral coordinates), which is checked at build time.

use cylevy::hilbert::{ContractionSemigroup, HsOperator, TruncatedVector};
use cylevy::solver::{DiffusionField, DriftField, SdeProblem};
use cylevy::SdeProblem64;

use crate::config::{ExperimentConfig, NoiseConfig};
use crate::error::CliError;

/// Registry entry: a name, a one-line description and a canonical default config.
pub struct Scenario {
    pub name: &'static str,
    pub description: &'static str,
}

/// All shipped scenarios; names are unique by construction (asserted in tests).
pub const SCENARIOS: &[Scenario] = &[
    Scenario {
        name: "heat_alpha_stable",
        description: "heat semigroup (rates k^2), multiplicative alpha-stable noise, \
                      bounded sine drift",
    },
    Scenario {
        name: "heat_brownian_additive",
        description: "heat semigroup (rates k), additive Brownian noise from zero \
                      (exact Ornstein-Uhlenbeck variance oracle)",
    },
    Scenario {
        name: "heat_brownian_mult",
        description: "heat semigroup (rates k^2), multiplicative Brownian noise, \
                      Lipschitz constants 0.5/0.5",
    },
    Scenario {
        name: "pure_drift",
        description: "unit decay rates, linear damping drift, no noise (exact \
                      exponential oracle)",
    },
];

pub fn exists(name: &str) -> bool {
    SCENARIOS.iter().any(|s| s.name == name)
}

fn base_config(scenario: &str, noise: NoiseConfig) -> ExperimentConfig {
    ExperimentConfig {
        scenario: scenario.to_string(),
        d_h: 8,
        d_u: 8,
        n_steps: 64,
        horizon: 1.0,
        epsilon: Some(0.05),
        epsilon_list: None,
        n_paths: 200,
        seed_base: 0,
        threads: 0,
        output_dir: "out".to_string(),
        noise,
    }
}

/// The canonical default config of a scenario, or `None` for an unknown name.
pub fn default_config(name: &str) -> Option<ExperimentConfig> {
    match name {
        "heat_alpha_stable" => {
            let mut cfg = base_config(
                name,
                NoiseConfig::AlphaStable {
                    alpha: 1.5,
                    scale: 0.5,
                },
            );
            cfg.d_h = 16;
            cfg.d_u = 16;
            Some(cfg)
        }
        "heat_brownian_additive" => {
            let mut cfg = base_config(name, NoiseConfig::Brownian { q: 1.0 });
            cfg.n_steps = 256;
            cfg.n_paths = 100;
            Some(cfg)
        }
        "heat_brownian_mult" => {
            let mut cfg = base_config(name, NoiseConfig::Brownian { q: 1.0 });
            cfg.epsilon_list = Some(vec![0.2, 0.1, 0.05, 0.02]);
            Some(cfg)
        }
        "pure_drift" => {
            let mut cfg = base_config(name, NoiseConfig::None);
            cfg.d_h = 4;
            cfg.d_u = 4;
            cfg.epsilon = Some(0.01);
            cfg.n_paths = 2;
            Some(cfg)
        }
        _ => None,
    }
}

/// Heat-kernel rates `λ_k = k^2`.
fn squared_rates(dim: usize) -> Vec<f64> {
    (1..=dim).map(|k| (k * k) as f64).collect()
}

/// Bounded coordinatewise drift `F(x)_k = c · sin(x_k)`; Lipschitz constant exactly `c`.
fn sine_drift(c: f64) -> DriftField<f64> {
    DriftField::new(c, move |x: &TruncatedVector<f64>| {
        TruncatedVector::new(x.coords().iter().map(|&v| c * v.sin()).collect())
    })
}

/// Multiplicative diagonal diffusion `G(x) = c · diag(x)`; Lipschitz constant exactly
/// `c` in Hilbert-Schmidt norm.
fn diagonal_diffusion(c: f64) -> DiffusionField<f64> {
    DiffusionField::new(c, move |x: &TruncatedVector<f64>| {
        let diag: Vec<f64> = x.coords().iter().map(|&v| c * v).collect();
        HsOperator::diagonal(&diag)
    })
}

/// Build the problem a config describes. The scenario must already be known; an
/// unknown name here is reported as such (callers normally pre-check the registry).
pub fn build_problem(cfg: &ExperimentConfig) -> Result<SdeProblem64, CliError> {
    if !exists(&cfg.scenario) {
        return Err(CliError::UnknownScenario(cfg.scenario.clone()));
    }
    if cfg.d_u != cfg.d_h {
        return Err(CliError::Validation(format!(
            "scenario {} needs d_u == d_h, got {} and {}",
            cfg.scenario, cfg.d_u, cfg.d_h
        )));
    }
    let dim = cfg.d_h;
    let noise = cfg.noise.build(cfg.d_u)?;
    let validation = |e: cylevy::Error| CliError::Validation(format!("{e}"));

    let problem = match cfg.scenario.as_str() {
        "heat_alpha_stable" => {
            let semigroup = ContractionSemigroup::new(squared_rates(dim)).map_err(validation)?;
            let x0 =
                TruncatedVector::new((1..=dim).map(|k| 1.0 / k as f64).collect());
            SdeProblem::new(
                semigroup,
                sine_drift(0.5),
                diagonal_diffusion(0.5),
                x0,
                noise,
                cfg.horizon,
            )
        }
        "heat_brownian_additive" => {
            let rates: Vec<f64> = (1..=dim).map(|k| k as f64).collect();
            let semigroup = ContractionSemigroup::new(rates).map_err(validation)?;
            SdeProblem::new(
                semigroup,
                DriftField::zero(),
                DiffusionField::constant(HsOperator::identity(dim)),
                TruncatedVector::zeros(dim),
                noise,
                cfg.horizon,
            )
        }
        "heat_brownian_mult" => {
            let semigroup = ContractionSemigroup::new(squared_rates(dim)).map_err(validation)?;
            SdeProblem::new(
                semigroup,
                sine_drift(0.5),
                diagonal_diffusion(0.5),
                TruncatedVector::new(vec![0.5; dim]),
                noise,
                cfg.horizon,
            )
        }
        "pure_drift" => {
            let semigroup = ContractionSemigroup::new(vec![1.0; dim]).map_err(validation)?;
            let damping = DriftField::new(0.5, |x: &TruncatedVector<f64>| x.scale(-0.5));
            SdeProblem::new(
                semigroup,
                damping,
                DiffusionField::zero(dim, dim),
                TruncatedVector::new(vec![1.0; dim]),
                noise,
                cfg.horizon,
            )
        }
        other => return Err(CliError::UnknownScenario(other.to_string())),
    };
    problem.map_err(validation)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::{parse_toml, to_canonical_toml};

    #[test]
    fn registry_has_at_least_three_unique_names() {
        assert!(SCENARIOS.len() >= 3);
        for (i, a) in SCENARIOS.iter().enumerate() {
            for b in SCENARIOS.iter().skip(i + 1) {
                assert_ne!(a.name, b.name);
            }
        }
    }

    #[test]
    fn every_scenario_round_trips_through_config_serialization() {
        for s in SCENARIOS {
            let cfg = default_config(s.name).expect("registry entry has a default");
            let text = to_canonical_toml(&cfg);
            let back = parse_toml(&text).unwrap();
            assert_eq!(back, cfg, "scenario {}", s.name);
        }
    }

    #[test]
    fn every_default_config_validates_and_builds() {
        for s in SCENARIOS {
            let cfg = default_config(s.name).unwrap();
            cfg.validate().unwrap();
            let problem = build_problem(&cfg).unwrap();
            assert_eq!(problem.dim_h(), cfg.d_h);
            assert_eq!(problem.noise.dim_u(), cfg.d_u);
        }
    }

    #[test]
    fn unknown_scenario_is_reported_as_such() {
        assert!(default_config("nope").is_none());
        let mut cfg = default_config("pure_drift").unwrap();
        cfg.scenario = "nope".into();
        assert!(matches!(
            build_problem(&cfg),
            Err(CliError::UnknownScenario(_))
        ));
    }

    #[test]
    fn mismatched_dimensions_fail_validation() {
        let mut cfg = default_config("heat_brownian_mult").unwrap();
        cfg.d_u = cfg.d_h + 1;
        assert!(matches!(
            build_problem(&cfg),
            Err(CliError::Validation(_))
        ));
    }

    #[test]
    fn declared_lipschitz_constants_hold_on_sampled_pairs() {
        let cfg = default_config("heat_brownian_mult").unwrap();
        let problem = build_problem(&cfg).unwrap();
        let check = cylevy::solver::check_lipschitz_constants(&problem, 200, 1.0, 7);
        assert!(check.ok, "{check:?}");
    }
}
