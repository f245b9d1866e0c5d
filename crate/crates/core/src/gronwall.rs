//! Pathwise logarithmic Grönwall inequality and the feedback-convergence experiment.
//!
//! For a strictly positive grid path `X` with running maximum `X*`, the inequality
//!
//! ```text
//! ln( X*(T) / X(0) )  <=  sup_j  Σ_{i<=j} ( X(t_i) - X(t_{i-1}) ) / X*(t_{i-1})
//! ```
//!
//! is exact finite arithmetic on the grid (the left limit `X*(s-)` is the running
//! maximum strictly before the current increment). [`check_log_supremum_inequality`]
//! returns the margin `RHS - LHS`; [`log_supremum_battery`] sweeps path families and
//! counts violations, which must be zero.
//!
//! The second half exercises the uniform-convergence-in-probability consequence on
//! constructed sequences
//!
//! ```text
//! Y_n(t) = S_n(t) ( ∫ F_n ds + ∫ G_n dL ) + C_n(t),
//! ‖F_n‖*(t) <= K₁ Y_n*(t-),   ‖G_n‖*(t) <= K₂ Y_n*(t-),
//! ```
//!
//! where the perturbations `C_n` tend to zero. [`gronwall_convergence_experiment`]
//! simulates each `Y_n` self-consistently (its own running supremum feeds its drift
//! and diffusion), enforces the two `K`-bounds at runtime, and reports the distance of
//! `Y_n` to zero per `n`.

use rayon::prelude::*;
use serde::Serialize;
use std::fmt;
use std::sync::Arc;

use crate::error::{Error, Result};
use crate::grid::TimeGrid;
use crate::hilbert::{ContractionSemigroup, HsOperator, TruncatedVector};
use crate::metrics::estimate_ducp;
use crate::noise::{sample_bundle, NoiseModel};
use crate::path::{GridPath, RealGridPath};
use crate::real::Real;
use crate::rng::{tags, CounterRng};

/// Slack for counting an inequality violation: `LHS > RHS + 1e-10`.
pub const VIOLATION_TOLERANCE: f64 = 1e-10;

/// Margin of the log-supremum inequality for one strictly positive path.
///
/// Returns `RHS - LHS`, which is non-negative up to rounding for every strictly
/// positive path; the margin is `0` exactly for constant paths and tends to `0` for
/// increasing paths with vanishing relative increments.
pub fn check_log_supremum_inequality<T: Real>(x: &RealGridPath<T>) -> Result<T> {
    let v = x.values();
    for (index, &value) in v.iter().enumerate() {
        if !(value > T::zero()) || !value.is_finite() {
            return Err(Error::NonPositivePath {
                index,
                value: value.lossy(),
            });
        }
    }
    let mut running_max = v[0];
    let mut partial = T::zero();
    let mut rhs = T::zero(); // empty sum at j = 0
    for i in 1..v.len() {
        partial = partial + (v[i] - v[i - 1]) / running_max;
        if partial > rhs {
            rhs = partial;
        }
        if v[i] > running_max {
            running_max = v[i];
        }
    }
    let lhs = (running_max / v[0]).ln();
    Ok(rhs - lhs)
}

/// A seeded family of strictly positive paths, boxed for heterogeneous collections.
pub type PathFamily<T> = Box<dyn Fn(u64) -> Result<RealGridPath<T>> + Sync>;

/// Outcome of a violation sweep over one path family.
#[derive(Debug, Clone, Serialize)]
pub struct GronwallReport {
    pub n_paths: usize,
    /// Paths where `LHS > RHS + 1e-10`.
    pub violations: usize,
    /// Minimum margin (`RHS - LHS`) across paths.
    pub worst_margin: f64,
    /// Seeds of the violating paths, for dumping and inspection.
    pub violating_seeds: Vec<u64>,
}

/// Check the inequality on `n_paths` sampled paths; the sweep is the oracle — every
/// path must satisfy the inequality within [`VIOLATION_TOLERANCE`].
pub fn log_supremum_battery<T, F>(
    sampler: F,
    n_paths: usize,
    seed_base: u64,
) -> Result<GronwallReport>
where
    T: Real,
    F: Fn(u64) -> Result<RealGridPath<T>> + Sync,
{
    if n_paths == 0 {
        return Err(Error::TooFewPaths { needed: 1, got: 0 });
    }
    let margins: Vec<(u64, f64)> = (0..n_paths)
        .into_par_iter()
        .map(|p| -> Result<(u64, f64)> {
            let seed = seed_base + p as u64;
            let path = sampler(seed)?;
            Ok((seed, check_log_supremum_inequality(&path)?.lossy()))
        })
        .collect::<Result<Vec<_>>>()?;
    let worst_margin = margins.iter().map(|&(_, m)| m).fold(f64::INFINITY, f64::min);
    let violating_seeds: Vec<u64> = margins
        .iter()
        .filter(|&&(_, m)| m < -VIOLATION_TOLERANCE)
        .map(|&(s, _)| s)
        .collect();
    Ok(GronwallReport {
        n_paths,
        violations: violating_seeds.len(),
        worst_margin,
        violating_seeds,
    })
}

// ----- strictly positive path families ---------------------------------------------

/// `X = exp(scale · W)` for a Brownian walk `W`; strictly positive by construction.
pub fn exponential_gaussian_family<T: Real>(
    grid: Arc<TimeGrid<T>>,
    scale: T,
) -> impl Fn(u64) -> Result<RealGridPath<T>> + Sync {
    move |seed| {
        let model = NoiseModel::brownian_scaled(1, T::one())?;
        let bundle = sample_bundle(&model, &grid, seed)?;
        let mut values = Vec::with_capacity(grid.n_points());
        let mut w = T::zero();
        values.push(T::one());
        for i in 0..grid.n_intervals() {
            w = w + bundle.increment(i, 0);
            values.push((scale * w).exp());
        }
        RealGridPath::new(Arc::clone(&grid), values)
    }
}

/// `X = exp(scale · clamp(S, ±30))` for an α-stable walk `S`; the clamp keeps heavy
/// jumps inside the representable range — any strictly positive path is a valid probe.
pub fn exponential_stable_family<T: Real>(
    grid: Arc<TimeGrid<T>>,
    alpha: f64,
    scale: T,
) -> impl Fn(u64) -> Result<RealGridPath<T>> + Sync {
    move |seed| {
        let model = NoiseModel::alpha_stable(1, T::of(alpha), T::one())?;
        let bundle = sample_bundle(&model, &grid, seed)?;
        let cap = T::of(30.0);
        let mut values = Vec::with_capacity(grid.n_points());
        let mut s = T::zero();
        values.push(T::one());
        for i in 0..grid.n_intervals() {
            s = s + bundle.increment(i, 0);
            values.push((scale * s).max(-cap).min(cap).exp());
        }
        RealGridPath::new(Arc::clone(&grid), values)
    }
}

/// Hand-built adversarial jump paths: multiplicative spikes over six orders of
/// magnitude, holds, and monotone stretches — the shapes that stress the running-max
/// denominator hardest.
pub fn adversarial_jump_family<T: Real>(
    grid: Arc<TimeGrid<T>>,
) -> impl Fn(u64) -> Result<RealGridPath<T>> + Sync {
    move |seed| {
        let mut rng = CounterRng::stream(seed, tags::GRONWALL, &[]);
        let mut values = Vec::with_capacity(grid.n_points());
        let mut cur = T::one();
        values.push(cur);
        let mut monotone_run = 0usize;
        for _ in 0..grid.n_intervals() {
            if monotone_run > 0 {
                monotone_run -= 1;
                cur = cur * T::of(1.0 + rng.uniform_open01());
            } else {
                let roll = rng.uniform_open01();
                if roll < 0.3 {
                    // hold
                } else if roll < 0.4 {
                    monotone_run = 3;
                } else {
                    // log-uniform factor in [1e-3, 1e3]
                    let log_factor = (rng.uniform_open01() - 0.5) * 6.0;
                    cur = cur * T::of(10f64.powf(log_factor));
                }
            }
            values.push(cur);
        }
        RealGridPath::new(Arc::clone(&grid), values)
    }
}

// ----- feedback convergence experiment ----------------------------------------------

/// A sequence of feedback systems `Y_n = S(·)(∫F_n ds + ∫G_n dL) + C_n` whose drift
/// and diffusion are produced from the running supremum of `Y_n` itself, subject to
/// the declared bounds `‖F_n(t_i)‖ <= K₁ Y_n*(t_i)` and `‖G_n(t_i)‖_HS <= K₂ Y_n*(t_i)`
/// (running supremum up to and including the left evaluation point — known at `t_i`,
/// so the integrands stay predictable).
pub struct FeedbackFamilySpec<T: Real> {
    pub k1: T,
    pub k2: T,
    pub semigroup: ContractionSemigroup<T>,
    pub noise: NoiseModel<T>,
    pub horizon: T,
    /// `(n, running_sup, i) -> F_n(t_i)`.
    pub drift: Arc<dyn Fn(usize, T, usize) -> TruncatedVector<T> + Send + Sync>,
    /// `(n, running_sup, i) -> G_n(t_i)`.
    pub diffusion: Arc<dyn Fn(usize, T, usize) -> HsOperator<T> + Send + Sync>,
    /// `(n, grid, seed) -> C_n` on that grid.
    #[allow(clippy::type_complexity)]
    pub perturbation:
        Arc<dyn Fn(usize, &Arc<TimeGrid<T>>, u64) -> Result<GridPath<T>> + Send + Sync>,
}

impl<T: Real> fmt::Debug for FeedbackFamilySpec<T> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("FeedbackFamilySpec")
            .field("k1", &self.k1)
            .field("k2", &self.k2)
            .field("horizon", &self.horizon)
            .finish_non_exhaustive()
    }
}

/// One row of the experiment: distance of `Y_n` to zero.
#[derive(Debug, Clone, Serialize)]
pub struct FeedbackRow {
    pub n: usize,
    pub ducp_to_zero: f64,
    pub std_error: f64,
}

/// Report of [`gronwall_convergence_experiment`].
#[derive(Debug, Clone, Serialize)]
pub struct FeedbackConvergenceReport {
    pub n_paths: usize,
    pub threshold: f64,
    pub rows: Vec<FeedbackRow>,
    /// Whether the final row is below `threshold` — the asserted conclusion.
    pub converged: bool,
}

/// Simulate one `Y_n` path on its grid, enforcing the `K`-bounds at every interval.
fn simulate_feedback_path<T: Real>(
    spec: &FeedbackFamilySpec<T>,
    n: usize,
    grid: &Arc<TimeGrid<T>>,
    seed: u64,
) -> Result<GridPath<T>> {
    let dim = spec.semigroup.dim();
    let bundle = sample_bundle(&spec.noise, grid, seed)?;
    let c = (spec.perturbation)(n, grid, seed)?;
    if c.dim() != dim {
        return Err(Error::DimensionMismatch {
            expected: dim,
            got: c.dim(),
        });
    }
    TimeGrid::ensure_same(c.grid(), grid)?;
    let n_int = grid.n_intervals();
    // tolerance for the runtime bound checks: pure rounding slack.
    let slack = T::of(1e-9);

    let mut values = Vec::with_capacity(n_int + 1);
    let mut accumulated = TruncatedVector::zeros(dim); // ∫F ds + ∫G dL up to t_j
    let y0 = c.value(0).clone();
    let mut running_sup = y0.norm();
    values.push(y0);
    for i in 0..n_int {
        let f_i = (spec.drift)(n, running_sup, i);
        let f_norm = f_i.norm();
        let f_allowed = spec.k1 * running_sup;
        if f_norm > f_allowed * (T::one() + slack) + T::of(1e-300) {
            return Err(Error::FeedbackBoundViolated {
                n,
                time_index: i,
                seed,
                kind: "drift",
                norm: f_norm.lossy(),
                allowed: f_allowed.lossy(),
            });
        }
        let g_i = (spec.diffusion)(n, running_sup, i);
        let g_norm = g_i.hs_norm();
        let g_allowed = spec.k2 * running_sup;
        if g_norm > g_allowed * (T::one() + slack) + T::of(1e-300) {
            return Err(Error::FeedbackBoundViolated {
                n,
                time_index: i,
                seed,
                kind: "diffusion",
                norm: g_norm.lossy(),
                allowed: g_allowed.lossy(),
            });
        }
        accumulated = accumulated
            .add(&f_i.scale(grid.dt(i)))
            .add(&bundle.apply_operator(&g_i, i)?);
        // Y_n(t_{i+1}) = S(t_{i+1}) (accumulated integral) + C_n(t_{i+1})
        let y = spec
            .semigroup
            .apply(grid.time(i + 1), &accumulated)?
            .add(c.value(i + 1));
        running_sup = running_sup.max(y.norm());
        values.push(y);
    }
    GridPath::new(Arc::clone(grid), values)
}

/// Simulate the family at each `n`, report `d_ucp(Y_n, 0)` per `n`, and check that
/// the largest `n` falls below `threshold`. A family violating its own `K`-bounds is
/// rejected with the violating `(n, grid index, seed)`.
pub fn gronwall_convergence_experiment<T: Real>(
    spec: &FeedbackFamilySpec<T>,
    ns: &[usize],
    n_paths: usize,
    seed_base: u64,
    threshold: f64,
) -> Result<FeedbackConvergenceReport> {
    if ns.is_empty() {
        return Err(Error::InvalidParameter(
            "need at least one sequence index".into(),
        ));
    }
    for w in ns.windows(2) {
        if w[1] <= w[0] {
            return Err(Error::InvalidParameter(
                "sequence indices must be strictly increasing".into(),
            ));
        }
    }
    let mut rows = Vec::with_capacity(ns.len());
    for &n in ns {
        let grid = TimeGrid::uniform(spec.horizon, n.max(1))?;
        let sampler = |seed: u64| simulate_feedback_path(spec, n, &grid, seed);
        let zero = |_: u64| Ok(GridPath::zeros(Arc::clone(&grid), spec.semigroup.dim()));
        let est = estimate_ducp(sampler, zero, n_paths, seed_base)?;
        rows.push(FeedbackRow {
            n,
            ducp_to_zero: est.value.lossy(),
            std_error: est.std_error.lossy(),
        });
    }
    let converged = rows.last().is_some_and(|r| r.ducp_to_zero < threshold);
    Ok(FeedbackConvergenceReport {
        n_paths,
        threshold,
        rows,
        converged,
    })
}

/// The shipped damped-feedback family: diagonal heat kernel, drift and diffusion at
/// full allowed gain pointing along fixed directions, and perturbation
/// `C_n = (1/n) · (bounded deterministic profile)`.
pub fn damped_feedback_family<T: Real>(
    dim: usize,
    k1: T,
    k2: T,
    horizon: T,
) -> Result<FeedbackFamilySpec<T>> {
    let rates: Vec<T> = (1..=dim).map(|k| T::of_usize(k)).collect();
    let semigroup = ContractionSemigroup::new(rates)?;
    let noise = NoiseModel::brownian_scaled(dim, T::one())?;
    let drift = Arc::new(move |_n: usize, sup: T, _i: usize| {
        let mut v = TruncatedVector::zeros(dim);
        v = v.add(&TruncatedVector::basis(dim, 0).scale(k1 * sup));
        v
    });
    let diffusion = Arc::new(move |_n: usize, sup: T, _i: usize| {
        // K₂ sup / sqrt(dim) on the diagonal has Hilbert-Schmidt norm exactly K₂ sup.
        let gain = k2 * sup / T::of_usize(dim).sqrt();
        HsOperator::identity(dim).scale(gain)
    });
    let perturbation = Arc::new(
        move |n: usize, grid: &Arc<TimeGrid<T>>, _seed: u64| -> Result<GridPath<T>> {
            // bounded profile: coordinate 0 carries (1 + sin(2πt/T))/2 ∈ [0, 1].
            let scale = T::one() / T::of_usize(n.max(1));
            let horizon = grid.horizon();
            let values = (0..grid.n_points())
                .map(|j| {
                    let t = grid.time(j) / horizon;
                    let profile =
                        (T::one() + (T::of(2.0) * T::PI() * t).sin()) * T::of(0.5);
                    TruncatedVector::basis(dim, 0).scale(scale * profile)
                })
                .collect();
            GridPath::new(Arc::clone(grid), values)
        },
    );
    Ok(FeedbackFamilySpec {
        k1,
        k2,
        semigroup,
        noise,
        horizon,
        drift,
        diffusion,
        perturbation,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn real_path(times_values: Vec<f64>) -> RealGridPath<f64> {
        let n = times_values.len() - 1;
        let grid = TimeGrid::uniform(1.0, n).unwrap();
        RealGridPath::new(grid, times_values).unwrap()
    }

    // ----- inequality ------------------------------------------------------------

    #[test]
    fn constant_path_has_zero_margin_exactly() {
        for c in [0.3, 1.0, 7.5] {
            let x = real_path(vec![c; 9]);
            assert_eq!(check_log_supremum_inequality(&x).unwrap(), 0.0);
        }
    }

    #[test]
    fn doubling_path_margin_matches_hand_computation() {
        // (1, 2, 4): RHS = (2-1)/1 + (4-2)/2 = 2, LHS = ln 4.
        let x = real_path(vec![1.0, 2.0, 4.0]);
        let margin = check_log_supremum_inequality(&x).unwrap();
        assert!((margin - (2.0 - 4.0f64.ln())).abs() < 1e-14);
    }

    #[test]
    fn non_positive_paths_are_rejected_with_location() {
        let grid = TimeGrid::uniform(1.0, 2).unwrap();
        let x = RealGridPath::new(Arc::clone(&grid), vec![1.0, 0.0, 2.0]).unwrap();
        assert_eq!(
            check_log_supremum_inequality(&x),
            Err(Error::NonPositivePath {
                index: 1,
                value: 0.0
            })
        );
        let y = RealGridPath::new(grid, vec![1.0, 2.0, -3.0]).unwrap();
        assert!(matches!(
            check_log_supremum_inequality(&y),
            Err(Error::NonPositivePath { index: 2, .. })
        ));
    }

    #[test]
    fn decreasing_paths_have_zero_margin() {
        // LHS = ln(X*(T)/X(0)) = 0 for a decreasing path, and the RHS partial sums are
        // all negative, so the running max stays at the empty sum 0: margin exactly 0.
        let x = real_path(vec![8.0, 4.0, 2.0, 1.0]);
        let margin = check_log_supremum_inequality(&x).unwrap();
        assert_eq!(margin, 0.0);
    }

    #[test]
    fn rebound_after_drawdown_strains_the_inequality_but_holds() {
        // Drop to a small floor then rebound past the old maximum: the denominator
        // X*(s-) stays at the old max during the rebound, so RHS grows slowly — the
        // sharpest family for this inequality.
        for floor in [0.5, 0.1, 1e-3, 1e-6] {
            let x = real_path(vec![1.0, floor, 2.0, 4.0, 8.0]);
            let margin = check_log_supremum_inequality(&x).unwrap();
            assert!(margin >= -1e-12, "floor {floor}: margin {margin}");
        }
    }

    #[test]
    fn exponential_refinement_margin_halves() {
        // X(t) = e^t on a uniform n-grid: RHS = n(e^{1/n} - 1), LHS = 1, so the margin
        // is n(e^{1/n} - 1) - 1 ≈ 1/(2n); refinement halves it.
        let mut margins = Vec::new();
        for &n in &[16usize, 32, 64, 128] {
            let grid: Arc<TimeGrid<f64>> = TimeGrid::uniform(1.0, n).unwrap();
            let values = (0..=n).map(|j| grid.time(j).exp()).collect();
            let x = RealGridPath::new(grid, values).unwrap();
            let margin = check_log_supremum_inequality(&x).unwrap();
            let exact = n as f64 * ((1.0 / n as f64).exp() - 1.0) - 1.0;
            assert!((margin - exact).abs() < 1e-12);
            margins.push(margin);
        }
        for w in margins.windows(2) {
            let ratio = w[0] / w[1];
            assert!((ratio - 2.0).abs() < 0.05, "halving ratio {ratio}");
        }
        assert!(margins.last().unwrap() < &0.005);
    }

    // ----- battery ----------------------------------------------------------------

    #[test]
    fn battery_finds_zero_violations_across_families() {
        let grid = TimeGrid::uniform(1.0, 64).unwrap();
        let families: Vec<PathFamily<f64>> = vec![
            Box::new(exponential_gaussian_family(Arc::clone(&grid), 1.5)),
            Box::new(exponential_stable_family(Arc::clone(&grid), 1.5, 0.5)),
            Box::new(adversarial_jump_family(Arc::clone(&grid))),
        ];
        for (fi, family) in families.iter().enumerate() {
            let report = log_supremum_battery(family, 500, 1000).unwrap();
            assert_eq!(report.violations, 0, "family {fi}: {report:?}");
            assert!(report.violating_seeds.is_empty());
            assert!(report.worst_margin >= -VIOLATION_TOLERANCE);
            assert_eq!(report.n_paths, 500);
        }
    }

    #[test]
    fn battery_rejects_empty_sweeps_and_propagates_path_errors() {
        let grid = TimeGrid::uniform(1.0, 4).unwrap();
        let ok = exponential_gaussian_family(Arc::clone(&grid), 1.0);
        assert!(matches!(
            log_supremum_battery(&ok, 0, 0),
            Err(Error::TooFewPaths { .. })
        ));
        let bad = move |_: u64| RealGridPath::new(Arc::clone(&grid), vec![1.0, -1.0, 1.0, 1.0, 1.0]);
        assert!(matches!(
            log_supremum_battery(bad, 4, 0),
            Err(Error::NonPositivePath { .. })
        ));
    }

    #[test]
    fn report_serializes_to_json() {
        let report = GronwallReport {
            n_paths: 10,
            violations: 0,
            worst_margin: 0.25,
            violating_seeds: vec![],
        };
        let json = serde_json::to_string(&report).unwrap();
        assert!(json.contains("\"violations\":0"));
        assert!(json.contains("\"worst_margin\":0.25"));
    }

    // ----- feedback experiment -----------------------------------------------------

    fn zero_perturbation_spec(dim: usize) -> FeedbackFamilySpec<f64> {
        let mut spec = damped_feedback_family(dim, 0.0, 0.0, 1.0).unwrap();
        spec.perturbation =
            Arc::new(move |_, grid, _| Ok(GridPath::zeros(Arc::clone(grid), dim)));
        spec
    }

    #[test]
    fn all_zero_family_stays_at_zero() {
        let spec = zero_perturbation_spec(2);
        let report = gronwall_convergence_experiment(&spec, &[4, 8], 8, 0, 1e-12).unwrap();
        for row in &report.rows {
            assert_eq!(row.ducp_to_zero, 0.0);
            assert_eq!(row.std_error, 0.0);
        }
        assert!(report.converged);
    }

    #[test]
    fn no_feedback_constant_perturbation_gives_exact_reciprocal_distance() {
        // K₁ = K₂ = 0 and C_n ≡ 1/n (constant in time): Y_n = C_n, so the capped sup
        // distance to zero is exactly min(1/n, 1).
        let mut spec = damped_feedback_family(2, 0.0, 0.0, 1.0).unwrap();
        spec.perturbation = Arc::new(|n, grid: &Arc<TimeGrid<f64>>, _| {
            let c = TruncatedVector::basis(2, 0).scale(1.0 / n as f64);
            Ok(GridPath::constant(Arc::clone(grid), c))
        });
        let report =
            gronwall_convergence_experiment(&spec, &[1, 2, 4, 64], 4, 0, 0.05).unwrap();
        let expect = [1.0, 0.5, 0.25, 1.0 / 64.0];
        for (row, e) in report.rows.iter().zip(expect) {
            assert_eq!(row.ducp_to_zero, e, "n {}", row.n);
            assert!(row.std_error < 1e-15);
        }
        assert!(report.converged);
    }

    #[test]
    fn scaling_the_perturbation_scales_the_no_feedback_distance_linearly() {
        // Capped linearity in the no-feedback case: C_n -> C_n/m scales ducp by 1/m
        // once below the cap.
        for m in [2usize, 5] {
            let mut spec = damped_feedback_family(2, 0.0, 0.0, 1.0).unwrap();
            let m_f = m as f64;
            spec.perturbation = Arc::new(move |n, grid: &Arc<TimeGrid<f64>>, _| {
                let c = TruncatedVector::basis(2, 0).scale(1.0 / (m_f * n as f64));
                Ok(GridPath::constant(Arc::clone(grid), c))
            });
            let report = gronwall_convergence_experiment(&spec, &[2, 4], 4, 0, 1.0).unwrap();
            // equality up to the last-ulp rounding of sqrt(x²) for non-dyadic x.
            assert!((report.rows[0].ducp_to_zero - 1.0 / (2.0 * m_f)).abs() < 1e-15);
            assert!((report.rows[1].ducp_to_zero - 1.0 / (4.0 * m_f)).abs() < 1e-15);
        }
    }

    #[test]
    fn damped_brownian_family_decays_below_threshold() {
        // K₁ = K₂ = 0.5 with C_n = (1/n)·(bounded profile): the damped feedback keeps
        // Y_n within a constant multiple of C_n, so the distance decays like 1/n and
        // clears 0.05 at n = 64.
        let spec = damped_feedback_family(4, 0.5, 0.5, 1.0).unwrap();
        let report =
            gronwall_convergence_experiment(&spec, &[8, 16, 32, 64], 200, 50, 0.05).unwrap();
        for w in report.rows.windows(2) {
            assert!(
                w[1].ducp_to_zero
                    <= w[0].ducp_to_zero + 3.0 * (w[0].std_error + w[1].std_error),
                "rows {:?}",
                report.rows
            );
        }
        assert!(report.converged, "rows {:?}", report.rows);
    }

    #[test]
    fn lying_family_is_rejected_with_location() {
        // The drift closure exceeds its declared K₁ at interval 3.
        let mut spec = damped_feedback_family(2, 0.1, 0.0, 1.0).unwrap();
        spec.drift = Arc::new(|_n, sup: f64, i| {
            let gain = if i == 3 { 1.0 } else { 0.1 };
            TruncatedVector::basis(2, 0).scale(gain * sup)
        });
        // Non-zero start so the allowed bound is finite and the violation visible.
        spec.perturbation = Arc::new(|_, grid: &Arc<TimeGrid<f64>>, _| {
            Ok(GridPath::constant(
                Arc::clone(grid),
                TruncatedVector::basis(2, 0),
            ))
        });
        match gronwall_convergence_experiment(&spec, &[8], 4, 9, 0.5) {
            Err(Error::FeedbackBoundViolated {
                n,
                time_index,
                seed,
                kind,
                ..
            }) => {
                assert_eq!(n, 8);
                assert_eq!(time_index, 3);
                assert_eq!(seed, 9);
                assert_eq!(kind, "drift");
            }
            other => panic!("expected FeedbackBoundViolated, got {other:?}"),
        }
    }

    #[test]
    fn experiment_validates_sequence_indices() {
        let spec = zero_perturbation_spec(2);
        assert!(gronwall_convergence_experiment(&spec, &[], 4, 0, 0.1).is_err());
        assert!(gronwall_convergence_experiment(&spec, &[4, 4], 4, 0, 0.1).is_err());
        assert!(gronwall_convergence_experiment(&spec, &[8, 4], 4, 0, 0.1).is_err());
    }
}
