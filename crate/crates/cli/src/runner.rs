//! Subcommand implementations.
//!
//! Every subcommand computes its full result in memory first and only then touches
//! the filesystem, so a failing run leaves no partial artifacts. Artifact bytes are
//! deterministic functions of `(config, seed_base)`: all randomness flows through
//! counter-mode streams keyed by `(seed_base + path_index)`, so the worker pool size
//! never changes results.
//!
//! Each run directory receives the artifacts plus a `manifest.json` carrying the
//! schema version, the subcommand, a canonical config echo, per-artifact SHA-256
//! hashes and a machine-readable summary — no timestamps, no absolute paths.

use std::fs;
use std::path::Path;
use std::sync::Arc;

use rayon::prelude::*;
use serde::Serialize;
use serde_json::{json, Value};
use sha2::{Digest, Sha256};

use cylevy::export::{write_bundle_csv, write_grid_path_csv, write_real_path_csv};
use cylevy::grid::TimeGrid;
use cylevy::gronwall::{
    adversarial_jump_family, damped_feedback_family, exponential_gaussian_family,
    exponential_stable_family, gronwall_convergence_experiment, log_supremum_battery, PathFamily,
};
use cylevy::hilbert::{HsOperator, TruncatedVector};
use cylevy::metrics::{
    estimate_dem, estimate_dem_series, estimate_ducp, estimate_rho_em, DemOptions, MetricReport,
    Strategy,
};
use cylevy::noise::{empirical_characteristic_function, m_l, sample_bundle, zeta_l};
use cylevy::path::{covariation, quadratic_variation, stochastic_integral, SimpleHsProcess};
use cylevy::rng::{tags, CounterRng};
use cylevy::solver::{
    convergence_study, euler_peano_solve, picard_solve, uniqueness_check, ConvergenceOptions,
    EulerPeanoSummary, SolverRoute,
};
use cylevy::{GridPath64, TimeGrid64};

use crate::config::{to_canonical_toml, ExperimentConfig, NoiseConfig};
use crate::error::CliError;
use crate::scenarios;

/// Identity-check tolerance used by `calculus-check`; the identities are exact grid
/// arithmetic, so anything above rounding noise is a defect.
pub const IDENTITY_TOLERANCE: f64 = 1e-10;

/// The artifact-producing subcommands.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Command {
    NoiseCheck,
    CalculusCheck,
    Metrics,
    Solve,
    Converge,
    Uniqueness,
    Gronwall,
}

impl Command {
    pub fn name(self) -> &'static str {
        match self {
            Command::NoiseCheck => "noise-check",
            Command::CalculusCheck => "calculus-check",
            Command::Metrics => "metrics",
            Command::Solve => "solve",
            Command::Converge => "converge",
            Command::Uniqueness => "uniqueness",
            Command::Gronwall => "gronwall",
        }
    }
}

/// One output file, fully materialized before anything is written.
pub struct Artifact {
    pub name: String,
    pub bytes: Vec<u8>,
}

/// Result of a subcommand: artifacts plus the summary that lands in the manifest.
pub struct RunOutput {
    pub artifacts: Vec<Artifact>,
    pub summary: Value,
}

fn json_artifact(name: &str, value: &impl Serialize) -> Result<Artifact, CliError> {
    let mut bytes = serde_json::to_vec_pretty(value)
        .map_err(|e| CliError::Runtime(format!("serializing {name}: {e}")))?;
    bytes.push(b'\n');
    Ok(Artifact {
        name: name.to_string(),
        bytes,
    })
}

fn uniform_grid(cfg: &ExperimentConfig) -> Result<Arc<TimeGrid64>, CliError> {
    Ok(TimeGrid::uniform(cfg.horizon, cfg.n_steps)?)
}

/// Run a subcommand inside a worker pool sized by the config's `threads` key.
pub fn execute(cmd: Command, cfg: &ExperimentConfig) -> Result<RunOutput, CliError> {
    if cfg.threads > 0 {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(cfg.threads)
            .build()
            .map_err(|e| CliError::Runtime(format!("worker pool: {e}")))?;
        pool.install(|| execute_inner(cmd, cfg))
    } else {
        execute_inner(cmd, cfg)
    }
}

fn execute_inner(cmd: Command, cfg: &ExperimentConfig) -> Result<RunOutput, CliError> {
    match cmd {
        Command::NoiseCheck => noise_check(cfg),
        Command::CalculusCheck => calculus_check(cfg),
        Command::Metrics => metrics(cfg),
        Command::Solve => solve(cfg),
        Command::Converge => converge(cfg),
        Command::Uniqueness => uniqueness(cfg),
        Command::Gronwall => gronwall(cfg),
    }
}

/// Write all artifacts and the manifest into `out_dir`; returns the summary value.
///
/// The config echo normalizes `output_dir` to its default: the destination is a
/// runtime choice, not part of the experiment's identity, and echoing it would leak
/// machine-specific paths into otherwise byte-identical manifests.
pub fn write_run(
    out_dir: &Path,
    cmd: Command,
    cfg: &ExperimentConfig,
    output: RunOutput,
) -> Result<Value, CliError> {
    fs::create_dir_all(out_dir)?;
    let mut entries = Vec::with_capacity(output.artifacts.len());
    for artifact in &output.artifacts {
        fs::write(out_dir.join(&artifact.name), &artifact.bytes)?;
        entries.push(json!({
            "name": artifact.name,
            "sha256": hex::encode(Sha256::digest(&artifact.bytes)),
            "bytes": artifact.bytes.len(),
        }));
    }
    let mut echoed = cfg.clone();
    echoed.output_dir = "out".to_string();
    let manifest = json!({
        "schema_version": 1,
        "command": cmd.name(),
        "scenario": cfg.scenario,
        "seed_base": cfg.seed_base,
        "n_paths": cfg.n_paths,
        "config_toml": to_canonical_toml(&echoed),
        "artifacts": entries,
        "summary": output.summary,
    });
    let mut bytes = serde_json::to_vec_pretty(&manifest)
        .map_err(|e| CliError::Runtime(format!("serializing manifest: {e}")))?;
    bytes.push(b'\n');
    fs::write(out_dir.join("manifest.json"), &bytes)?;
    Ok(output.summary)
}

// ----- noise-check -------------------------------------------------------------------

/// Five fixed probe directions spanning concentrated, flat and oscillating profiles.
pub fn probe_directions(dim: usize) -> Vec<TruncatedVector<f64>> {
    let flat = 1.0 / (dim as f64).sqrt();
    let ramp = TruncatedVector::new((1..=dim).map(|k| k as f64).collect());
    let ramp = ramp.scale(1.25 / ramp.norm());
    vec![
        TruncatedVector::basis(dim, 0),
        TruncatedVector::basis(dim, dim - 1).scale(0.5),
        TruncatedVector::new(vec![flat; dim]),
        TruncatedVector::new(
            (0..dim)
                .map(|k| if k % 2 == 0 { flat } else { -flat })
                .collect(),
        ),
        ramp,
    ]
}

fn noise_check(cfg: &ExperimentConfig) -> Result<RunOutput, CliError> {
    let model = cfg.noise.build(cfg.d_u)?;
    let grid = uniform_grid(cfg)?;
    let dt = grid.dt(0);
    let probes = probe_directions(cfg.d_u);

    // Per seed, the empirical characteristic function at each probe; increments are
    // iid across intervals and seeds, so the grand mean is the mean of per-seed means.
    let per_seed: Vec<Vec<(f64, f64)>> = (0..cfg.n_paths)
        .into_par_iter()
        .map(|p| -> cylevy::Result<Vec<(f64, f64)>> {
            let bundle = sample_bundle(&model, &grid, cfg.seed_base + p as u64)?;
            probes
                .iter()
                .map(|u| empirical_characteristic_function(&bundle, u).map(|c| (c.re, c.im)))
                .collect()
        })
        .collect::<cylevy::Result<Vec<_>>>()?;

    let n_samples = cfg.n_paths * cfg.n_steps;
    let mut csv = String::from("probe,norm,re_empirical,im_empirical,re_theory,im_theory,abs_error\n");
    let mut max_abs_error = 0.0f64;
    for (k, u) in probes.iter().enumerate() {
        let (mut re, mut im) = (0.0, 0.0);
        for row in &per_seed {
            re += row[k].0;
            im += row[k].1;
        }
        re /= cfg.n_paths as f64;
        im /= cfg.n_paths as f64;
        let theory = model.characteristic_function(u, dt)?;
        let err = ((re - theory.re).powi(2) + (im - theory.im).powi(2)).sqrt();
        max_abs_error = max_abs_error.max(err);
        csv.push_str(&format!(
            "{k},{},{re},{im},{},{},{err}\n",
            u.norm(),
            theory.re,
            theory.im
        ));
    }

    // Integrability functionals at the identity, as a sanity sidebar.
    let identity = HsOperator::identity(cfg.d_u);
    let zeta = zeta_l(&model, &identity)?;
    let m = m_l(&model, &SimpleHsProcess::constant(Arc::clone(&grid), identity))?;

    let summary = json!({
        "dt": dt,
        "n_samples": n_samples,
        "max_abs_error": max_abs_error,
        "zeta_identity": { "value": zeta.value, "std_error": zeta.std_error },
        "m_identity": { "value": m.value, "std_error": m.std_error },
    });
    Ok(RunOutput {
        artifacts: vec![Artifact {
            name: "noise_check.csv".into(),
            bytes: csv.into_bytes(),
        }],
        summary,
    })
}

// ----- calculus-check ----------------------------------------------------------------

/// Exact identity defects of one randomized integral triple.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct CalculusRow {
    pub seed: u64,
    /// `‖X‖² − ‖X(0)‖² − 2∑⟨X(t_{i−1}), ΔX_i⟩ − [X]`, worst grid point.
    pub ito_defect: f64,
    /// `∑ Z(t_{i−1})² Δ[Y]_i − [∫Z dY]`, worst grid point.
    pub qv_integral_defect: f64,
    /// Polarized covariation against the direct increment sum, worst grid point.
    pub covariation_defect: f64,
}

/// Run the three identity checks for one seed, on integrals of a random step process
/// against a sampled bundle.
pub fn calculus_row(
    model: &cylevy::NoiseModel64,
    grid: &Arc<TimeGrid64>,
    d_h: usize,
    seed: u64,
) -> cylevy::Result<CalculusRow> {
    let bundle = sample_bundle(model, grid, seed)?;
    let d_u = model.dim_u();
    let n = grid.n_intervals();
    let mut rng = CounterRng::stream(seed, tags::TEST, &[0xCA1C]);
    let entry_scale = 1.0 / ((d_h * d_u) as f64).sqrt();
    let pieces: Vec<HsOperator<f64>> = (0..n)
        .map(|_| HsOperator::from_fn(d_h, d_u, |_, _| entry_scale * rng.standard_normal()))
        .collect();
    let psi = SimpleHsProcess::new(Arc::clone(grid), pieces)?;
    let x = stochastic_integral(&psi, &bundle)?;

    // (a) quadratic-variation identity for the integral path.
    let qv = quadratic_variation(&x);
    let x0_sq = x.value(0).norm_sq();
    let mut cross = 0.0;
    let mut ito_defect = 0.0f64;
    for j in 1..=n {
        let dx = x.value(j).sub(x.value(j - 1));
        cross += 2.0 * x.value(j - 1).dot(&dx);
        ito_defect = ito_defect.max((x.value(j).norm_sq() - x0_sq - cross - qv.value(j)).abs());
    }

    // (b) weighting the integrand by a scalar step process weights the bracket by its
    // square.
    let zs: Vec<f64> = (0..n).map(|_| 2.0 * rng.uniform_open01() - 1.0).collect();
    let weighted = SimpleHsProcess::new(
        Arc::clone(grid),
        (0..n).map(|i| psi.piece(i).scale(zs[i])).collect(),
    )?;
    let y = stochastic_integral(&weighted, &bundle)?;
    let qv_y = quadratic_variation(&y);
    let mut lhs = 0.0;
    let mut qv_integral_defect = 0.0f64;
    for j in 1..=n {
        lhs += zs[j - 1] * zs[j - 1] * (qv.value(j) - qv.value(j - 1));
        qv_integral_defect = qv_integral_defect.max((lhs - qv_y.value(j)).abs());
    }

    // (c) polarized covariation equals the direct increment pairing.
    let cov = covariation(&x, &y)?;
    let mut direct = 0.0;
    let mut covariation_defect = 0.0f64;
    for j in 1..=n {
        let dx = x.value(j).sub(x.value(j - 1));
        let dy = y.value(j).sub(y.value(j - 1));
        direct += dx.dot(&dy);
        covariation_defect = covariation_defect.max((cov.value(j) - direct).abs());
    }

    Ok(CalculusRow {
        seed,
        ito_defect,
        qv_integral_defect,
        covariation_defect,
    })
}

fn calculus_check(cfg: &ExperimentConfig) -> Result<RunOutput, CliError> {
    let model = cfg.noise.build(cfg.d_u)?;
    let grid = uniform_grid(cfg)?;
    let rows: Vec<CalculusRow> = (0..cfg.n_paths)
        .into_par_iter()
        .map(|p| calculus_row(&model, &grid, cfg.d_h, cfg.seed_base + p as u64))
        .collect::<cylevy::Result<Vec<_>>>()?;

    let mut csv = String::from("seed,ito_defect,qv_integral_defect,covariation_defect\n");
    let mut worst = CalculusRow {
        seed: 0,
        ito_defect: 0.0,
        qv_integral_defect: 0.0,
        covariation_defect: 0.0,
    };
    for r in &rows {
        csv.push_str(&format!(
            "{},{},{},{}\n",
            r.seed, r.ito_defect, r.qv_integral_defect, r.covariation_defect
        ));
        worst.ito_defect = worst.ito_defect.max(r.ito_defect);
        worst.qv_integral_defect = worst.qv_integral_defect.max(r.qv_integral_defect);
        worst.covariation_defect = worst.covariation_defect.max(r.covariation_defect);
    }
    let ok = worst.ito_defect < IDENTITY_TOLERANCE
        && worst.qv_integral_defect < IDENTITY_TOLERANCE
        && worst.covariation_defect < IDENTITY_TOLERANCE;
    let summary = json!({
        "max_ito_defect": worst.ito_defect,
        "max_qv_integral_defect": worst.qv_integral_defect,
        "max_covariation_defect": worst.covariation_defect,
        "tolerance": IDENTITY_TOLERANCE,
        "ok": ok,
    });
    Ok(RunOutput {
        artifacts: vec![Artifact {
            name: "calculus_check.csv".into(),
            bytes: csv.into_bytes(),
        }],
        summary,
    })
}

// ----- metrics -----------------------------------------------------------------------

fn metrics(cfg: &ExperimentConfig) -> Result<RunOutput, CliError> {
    let problem = scenarios::build_problem(cfg)?;
    let grid = uniform_grid(cfg)?;
    let epsilon = cfg.require_epsilon()?;

    let adaptive = |seed: u64| -> cylevy::Result<GridPath64> {
        let bundle = sample_bundle(&problem.noise, &grid, seed)?;
        Ok(euler_peano_solve(&problem, &bundle, epsilon)?.path)
    };
    let fixed_point = |seed: u64| -> cylevy::Result<GridPath64> {
        let bundle = sample_bundle(&problem.noise, &grid, seed)?;
        Ok(picard_solve(&problem, &bundle, 200, 1e-8)?.path)
    };

    let ducp = estimate_ducp(adaptive, fixed_point, cfg.n_paths, cfg.seed_base)?;
    let opts = DemOptions {
        n_paths: cfg.n_paths,
        n_gamma: 8,
        strategy: Strategy::GreedyGamma,
        include_atom: true,
        seed_base: cfg.seed_base,
    };
    let dem_greedy = estimate_dem(adaptive, fixed_point, &opts)?;
    let dem_identity = estimate_dem(
        adaptive,
        fixed_point,
        &DemOptions {
            strategy: Strategy::Identity,
            ..opts
        },
    )?;
    let rho = estimate_rho_em(adaptive, fixed_point, &opts)?;
    let series = estimate_dem_series(adaptive, fixed_point, &opts)?;

    let reports = vec![
        MetricReport::new("ducp", &ducp, cfg.seed_base),
        MetricReport::new("dem_greedy", &dem_greedy, cfg.seed_base),
        MetricReport::new("dem_identity", &dem_identity, cfg.seed_base),
        MetricReport::new("rho_em", &rho, cfg.seed_base),
        MetricReport::new("dem_series", &series, cfg.seed_base),
    ];
    let summary = json!({
        "epsilon": epsilon,
        "ducp": ducp.value,
        "dem_greedy": dem_greedy.value,
        "dem_identity": dem_identity.value,
        "greedy_dominates_identity": dem_greedy.value >= dem_identity.value,
    });
    Ok(RunOutput {
        artifacts: vec![json_artifact("metrics.json", &reports)?],
        summary,
    })
}

// ----- solve -------------------------------------------------------------------------

#[derive(Serialize)]
struct SolveRow {
    seed: u64,
    #[serde(flatten)]
    result: EulerPeanoSummary,
}

fn solve(cfg: &ExperimentConfig) -> Result<RunOutput, CliError> {
    let problem = scenarios::build_problem(cfg)?;
    let grid = uniform_grid(cfg)?;
    let epsilon = cfg.require_epsilon()?;

    let rows: Vec<SolveRow> = (0..cfg.n_paths)
        .into_par_iter()
        .map(|p| -> cylevy::Result<SolveRow> {
            let seed = cfg.seed_base + p as u64;
            let bundle = sample_bundle(&problem.noise, &grid, seed)?;
            let state = euler_peano_solve(&problem, &bundle, epsilon)?;
            Ok(SolveRow {
                seed,
                result: state.summary(),
            })
        })
        .collect::<cylevy::Result<Vec<_>>>()?;

    let max_residual = rows.iter().map(|r| r.result.max_residual).fold(0.0, f64::max);
    let max_updates = rows.iter().map(|r| r.result.n_updates).max().unwrap_or(0);
    let mean_updates =
        rows.iter().map(|r| r.result.n_updates as f64).sum::<f64>() / rows.len() as f64;

    // Full trace of the first seed, as plot-ready CSV plus the replayable increments.
    let bundle0 = sample_bundle(&problem.noise, &grid, cfg.seed_base)?;
    let state0 = euler_peano_solve(&problem, &bundle0, epsilon)?;
    let mut path_csv = Vec::new();
    write_grid_path_csv(&mut path_csv, &state0.path)?;
    let mut residual_csv = Vec::new();
    write_real_path_csv(&mut residual_csv, &state0.residual_path)?;
    let mut bundle_csv = Vec::new();
    write_bundle_csv(&mut bundle_csv, &bundle0)?;

    let summary = json!({
        "epsilon": epsilon,
        "max_residual": max_residual,
        "residual_below_epsilon": max_residual < epsilon,
        "mean_updates": mean_updates,
        "max_updates": max_updates,
    });
    Ok(RunOutput {
        artifacts: vec![
            json_artifact("solve_rows.json", &rows)?,
            Artifact {
                name: "solution_path.csv".into(),
                bytes: path_csv,
            },
            Artifact {
                name: "residual_path.csv".into(),
                bytes: residual_csv,
            },
            Artifact {
                name: "noise_increments.csv".into(),
                bytes: bundle_csv,
            },
        ],
        summary,
    })
}

// ----- converge ----------------------------------------------------------------------

fn converge(cfg: &ExperimentConfig) -> Result<RunOutput, CliError> {
    let problem = scenarios::build_problem(cfg)?;
    let grid = uniform_grid(cfg)?;
    let epsilons = cfg.require_epsilon_list()?;
    let opts = ConvergenceOptions {
        n_paths: cfg.n_paths,
        seed_base: cfg.seed_base,
        picard_max_iter: 200,
        picard_tol: 1e-8,
    };
    let report = convergence_study(&problem, &grid, epsilons, &opts)?;
    let summary = json!({
        "final_epsilon": report.rows.last().map(|r| r.epsilon),
        "final_ducp": report.rows.last().map(|r| r.ducp_to_picard),
        "monotone_within_noise": report.monotone_within_noise,
        "picard_failures": report.picard_failures,
    });
    Ok(RunOutput {
        artifacts: vec![json_artifact("converge.json", &report)?],
        summary,
    })
}

// ----- uniqueness --------------------------------------------------------------------

fn uniqueness(cfg: &ExperimentConfig) -> Result<RunOutput, CliError> {
    let problem = scenarios::build_problem(cfg)?;
    let grid = uniform_grid(cfg)?;
    let tol = 1e-6;
    let route_a = SolverRoute::Picard {
        start_scale: 1.0,
        max_iter: 200,
        tol: 1e-9,
    };
    let route_b = SolverRoute::Picard {
        start_scale: 2.0,
        max_iter: 200,
        tol: 1e-9,
    };
    let rows: Vec<Value> = (0..cfg.n_paths)
        .into_par_iter()
        .map(|p| -> cylevy::Result<Value> {
            let seed = cfg.seed_base + p as u64;
            let bundle = sample_bundle(&problem.noise, &grid, seed)?;
            let report = uniqueness_check(&problem, &bundle, &route_a, &route_b, tol)?;
            Ok(json!({ "seed": seed, "gap": report.gap, "ok": report.ok }))
        })
        .collect::<cylevy::Result<Vec<_>>>()?;

    let max_gap = rows
        .iter()
        .filter_map(|r| r["gap"].as_f64())
        .fold(0.0, f64::max);
    let all_ok = rows.iter().all(|r| r["ok"].as_bool() == Some(true));
    let summary = json!({
        "tolerance": tol,
        "max_gap": max_gap,
        "all_ok": all_ok,
    });
    Ok(RunOutput {
        artifacts: vec![json_artifact("uniqueness.json", &rows)?],
        summary,
    })
}

// ----- gronwall ----------------------------------------------------------------------

fn gronwall(cfg: &ExperimentConfig) -> Result<RunOutput, CliError> {
    let grid = uniform_grid(cfg)?;
    let alpha = match cfg.noise {
        NoiseConfig::AlphaStable { alpha, .. } => alpha,
        _ => 1.5,
    };
    let families: Vec<(&str, PathFamily<f64>)> = vec![
        (
            "exponential_gaussian",
            Box::new(exponential_gaussian_family(Arc::clone(&grid), 1.5)),
        ),
        (
            "exponential_stable",
            Box::new(exponential_stable_family(Arc::clone(&grid), alpha, 0.5)),
        ),
        (
            "adversarial_jumps",
            Box::new(adversarial_jump_family(Arc::clone(&grid))),
        ),
    ];

    let mut artifacts = Vec::new();
    let mut family_values = Vec::new();
    let mut total_violations = 0usize;
    let mut worst_margin = f64::INFINITY;
    for (name, sampler) in &families {
        let report = log_supremum_battery(sampler, cfg.n_paths, cfg.seed_base)?;
        total_violations += report.violations;
        worst_margin = worst_margin.min(report.worst_margin);
        // Dump any violating path for inspection; normally this writes nothing.
        for &seed in &report.violating_seeds {
            let path = sampler(seed)?;
            let mut csv = Vec::new();
            write_real_path_csv(&mut csv, &path)?;
            artifacts.push(Artifact {
                name: format!("violation_{name}_{seed}.csv"),
                bytes: csv,
            });
        }
        family_values.push(json!({ "family": name, "report": report }));
    }

    // Damped feedback sequence: drift and diffusion run at their full allowed gain
    // against a 1/n perturbation; the distance to zero must fall below the frozen
    // threshold at the finest level.
    let spec = damped_feedback_family(4, 0.5, 0.5, cfg.horizon)?;
    let feedback = gronwall_convergence_experiment(
        &spec,
        &[8, 16, 32, 64],
        cfg.n_paths.min(200),
        cfg.seed_base,
        0.05,
    )?;

    let report = json!({
        "schema_version": 1,
        "families": family_values,
        "feedback": feedback,
    });
    let summary = json!({
        "violations": total_violations,
        "worst_margin": worst_margin,
        "feedback_converged": feedback.converged,
    });
    artifacts.insert(0, json_artifact("gronwall.json", &report)?);
    Ok(RunOutput { artifacts, summary })
}
