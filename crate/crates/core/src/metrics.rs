//! Monte-Carlo estimators for the ucp and Émery-type path distances.
//!
//! For coupled path pairs `(X, Y)` sampled per seed, the module estimates
//!
//! - `d_ucp(X, Y) = E[ sup_{t<=T} ||X(t) - Y(t)|| ∧ 1 ]`,
//! - `d_em(X, Y) = sup_Γ E[ sup_{t<=T} ||Γ(0) D(0) + ∫_{(0,t]} Γ dD|| ∧ 1 ]` with
//!   `D = X - Y` and `Γ` ranging over step processes of contractions,
//! - `ρ_em`, the endpoint variant of `d_em` (no supremum over `t`),
//! - the weighted series `Σ_k 2^{-k} d_em` over integer horizons `k`.
//!
//! The supremum over all contraction-valued adversaries is not computable. Estimates
//! are therefore *explicit lower bounds*, tagged with the strategy that produced them:
//! the identity adversary, a family of random contraction processes, or a greedy
//! adapted adversary that aligns the expected next increment with the accumulated
//! integral. The candidate families are nested (identity ⊆ random ⊆ greedy) and run on
//! shared path sets, so the estimates are monotone in adversary strength by
//! construction, not merely in expectation. For scalar problems on short grids an
//! exact enumeration over all sign-valued adversaries grounds the heuristics.

use rayon::prelude::*;
use serde::Serialize;
use std::sync::Arc;

use crate::error::{Error, Result};
use crate::grid::TimeGrid;
use crate::hilbert::{HsOperator, TruncatedVector};
use crate::noise::random_contraction;
use crate::path::GridPath;
use crate::real::Real;
use crate::rng::{tags, CounterRng};

/// Largest interval count for the exact sign-adversary enumeration (2^(n+1) candidates).
pub const MAX_ENUMERATION_INTERVALS: usize = 12;

/// Adversary family used by an Émery-type estimate.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Strategy {
    /// `Γ ≡ Id` only; for `d_em` with the atom on, this is exactly the ucp objective.
    Identity,
    /// Identity plus `n_gamma` random contraction-valued step processes.
    RandomGamma,
    /// Random family plus the greedy adapted adversary.
    GreedyGamma,
}

impl Strategy {
    fn as_str(&self) -> &'static str {
        match self {
            Strategy::Identity => "identity",
            Strategy::RandomGamma => "random_gamma",
            Strategy::GreedyGamma => "greedy_gamma",
        }
    }
}

/// A Monte-Carlo metric estimate. For any strategy other than the full supremum the
/// value is a lower bound of the true metric (up to sampling error).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MetricEstimate<T: Real> {
    pub value: T,
    pub std_error: T,
    pub n_paths: usize,
    pub strategy: Strategy,
}

/// Result of the exact sign-adversary enumeration (scalar paths only). Kept distinct
/// from [`MetricEstimate`] because exhaustive enumeration is not a sampling strategy.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EnumeratedMetric<T: Real> {
    pub value: T,
    pub std_error: T,
    pub n_paths: usize,
    pub n_candidates: usize,
}

/// Options for the Émery-type estimators.
#[derive(Debug, Clone, Copy)]
pub struct DemOptions {
    pub n_paths: usize,
    pub n_gamma: usize,
    pub strategy: Strategy,
    /// Include the `Γ(0) D(0)` atom term (the displayed definition keeps it).
    pub include_atom: bool,
    pub seed_base: u64,
}

impl Default for DemOptions {
    fn default() -> Self {
        Self {
            n_paths: 100,
            n_gamma: 8,
            strategy: Strategy::GreedyGamma,
            include_atom: true,
            seed_base: 0,
        }
    }
}

/// Serializable metric report.
#[derive(Debug, Clone, Serialize)]
pub struct MetricReport {
    pub schema_version: u32,
    pub metric: String,
    pub value: f64,
    pub std_error: f64,
    pub n_paths: usize,
    pub strategy: String,
    pub seed_base: u64,
}

impl MetricReport {
    pub fn new<T: Real>(metric: &str, est: &MetricEstimate<T>, seed_base: u64) -> Self {
        Self {
            schema_version: 1,
            metric: metric.to_string(),
            value: est.value.lossy(),
            std_error: est.std_error.lossy(),
            n_paths: est.n_paths,
            strategy: est.strategy.as_str().to_string(),
            seed_base,
        }
    }
}

fn mean_and_se<T: Real>(values: &[T]) -> (T, T) {
    let n = T::of_usize(values.len());
    let mean = values.iter().fold(T::zero(), |a, &b| a + b) / n;
    if values.len() < 2 {
        return (mean, T::zero());
    }
    let ss = values
        .iter()
        .fold(T::zero(), |a, &b| a + (b - mean) * (b - mean));
    let var = ss / (n - T::one());
    (mean, (var / n).sqrt())
}

/// `E[ sup_{t<=T} ||X(t) - Y(t)|| ∧ 1 ]` over `n_paths` coupled pairs sampled at seeds
/// `seed_base, seed_base + 1, …`.
pub fn estimate_ducp<T, FX, FY>(
    x_sampler: FX,
    y_sampler: FY,
    n_paths: usize,
    seed_base: u64,
) -> Result<MetricEstimate<T>>
where
    T: Real,
    FX: Fn(u64) -> Result<GridPath<T>> + Sync,
    FY: Fn(u64) -> Result<GridPath<T>> + Sync,
{
    if n_paths < 2 {
        return Err(Error::TooFewPaths {
            needed: 2,
            got: n_paths,
        });
    }
    let values: Vec<T> = (0..n_paths)
        .into_par_iter()
        .map(|p| -> Result<T> {
            let seed = seed_base + p as u64;
            let x = x_sampler(seed)?;
            let y = y_sampler(seed)?;
            Ok(x.sup_distance(&y)?.min(T::one()))
        })
        .collect::<Result<Vec<_>>>()?;
    let (value, std_error) = mean_and_se(&values);
    Ok(MetricEstimate {
        value,
        std_error,
        n_paths,
        strategy: Strategy::Identity,
    })
}

/// Difference-path data shared by all adversaries on one sampled pair.
struct PathData<T: Real> {
    d0: TruncatedVector<T>,
    increments: Vec<TruncatedVector<T>>,
}

impl<T: Real> PathData<T> {
    fn from_pair(x: &GridPath<T>, y: &GridPath<T>) -> Result<Self> {
        let d = x.sub(y)?;
        let n = d.grid().n_intervals();
        let increments = (0..n).map(|i| d.value(i + 1).sub(d.value(i))).collect();
        Ok(Self {
            d0: d.value(0).clone(),
            increments,
        })
    }

    fn dim(&self) -> usize {
        self.d0.dim()
    }
}

/// One deterministic adversary: an atom operator plus one contraction per interval.
struct CandidateOps<T: Real> {
    gamma0: HsOperator<T>,
    pieces: Vec<HsOperator<T>>,
}

impl<T: Real> CandidateOps<T> {
    fn identity(dim: usize, n: usize) -> Self {
        let id = HsOperator::identity(dim);
        Self {
            gamma0: id.clone(),
            pieces: vec![id; n],
        }
    }

    /// Random contraction process `g`, keyed by `(seed_base, g, piece)`: families with
    /// larger `n_gamma` extend smaller ones instead of reshuffling them.
    fn random(dim: usize, n: usize, seed_base: u64, g: u64) -> Self {
        let gamma0 = random_contraction(
            dim,
            &mut CounterRng::stream(seed_base, tags::CONTRACTION, &[g, 0]),
        );
        let pieces = (0..n)
            .map(|i| {
                random_contraction(
                    dim,
                    &mut CounterRng::stream(seed_base, tags::CONTRACTION, &[g, i as u64 + 1]),
                )
            })
            .collect();
        Self { gamma0, pieces }
    }

    /// Norm profile `j -> ||Γ(0) D(0) [+atom] + Σ_{i<j} Γ_i ΔD_i||` for `j = 0..=n`.
    fn norm_profile(&self, data: &PathData<T>, include_atom: bool) -> Vec<T> {
        let mut acc = if include_atom {
            self.gamma0.apply(&data.d0)
        } else {
            TruncatedVector::zeros(data.dim())
        };
        let mut out = Vec::with_capacity(data.increments.len() + 1);
        out.push(acc.norm());
        for (i, dd) in data.increments.iter().enumerate() {
            acc = acc.add(&self.pieces[i].apply(dd));
            out.push(acc.norm());
        }
        out
    }
}

/// Unit vector in the direction of `v`, or `None` for (numerically) zero `v`.
fn unit_direction<T: Real>(v: &TruncatedVector<T>) -> Option<TruncatedVector<T>> {
    let n = v.norm();
    if n > T::of(1e-150) {
        Some(v.scale(T::one() / n))
    } else {
        None
    }
}

/// Reflection mapping the direction of `from` onto the direction of `to`
/// (identity when either is zero or they already align). Operator norm exactly 1.
fn aligning_reflection<T: Real>(
    from: &TruncatedVector<T>,
    to: &TruncatedVector<T>,
) -> HsOperator<T> {
    let dim = from.dim();
    let (Some(f), Some(t)) = (unit_direction(from), unit_direction(to)) else {
        return HsOperator::identity(dim);
    };
    let v = f.sub(&t);
    let vv = v.norm_sq();
    if vv < T::of(1e-24) {
        return HsOperator::identity(dim);
    }
    HsOperator::identity(dim).sub(&HsOperator::outer(&v, &v).scale(T::of(2.0) / vv))
}

/// Norm profile of the greedy adapted adversary.
///
/// Before interval `i` the adversary knows the accumulated integral `A_i` and all past
/// increments. It predicts the next increment as `sign(lag-1 autocovariance) ΔD_{i-1}`
/// and chooses the reflection mapping the predicted direction onto the direction of
/// `A_i`, so a correctly predicted increment adds constructively to `||A||`. Until a
/// lag pair has been observed the autocovariance sign is unknown and `initial_sign`
/// (fixed in advance, so still predictable) is used; callers run both `±1` variants.
/// Every piece is decided before `ΔD_i` is revealed, so the adversary is predictable
/// and its objective is a legitimate lower bound for the supremum metric.
fn greedy_norm_profile<T: Real>(
    data: &PathData<T>,
    include_atom: bool,
    initial_sign: T,
) -> Vec<T> {
    let dim = data.dim();
    let mut acc = if include_atom {
        // Γ(0) = Id maximizes ||Γ(0) D(0)|| over contractions.
        data.d0.clone()
    } else {
        TruncatedVector::zeros(dim)
    };
    let mut out = Vec::with_capacity(data.increments.len() + 1);
    out.push(acc.norm());
    let mut lag_cov = T::zero();
    let mut lag_pairs = 0usize;
    for i in 0..data.increments.len() {
        let gamma_i = if i == 0 {
            HsOperator::identity(dim)
        } else {
            let sign = if lag_pairs == 0 {
                initial_sign
            } else if lag_cov < T::zero() {
                -T::one()
            } else {
                T::one()
            };
            let predicted = data.increments[i - 1].scale(sign);
            aligning_reflection(&predicted, &acc)
        };
        acc = acc.add(&gamma_i.apply(&data.increments[i]));
        out.push(acc.norm());
        if i >= 1 {
            lag_cov = lag_cov + data.increments[i - 1].dot(&data.increments[i]);
            lag_pairs += 1;
        }
    }
    out
}

fn cap<T: Real>(x: T) -> T {
    x.min(T::one())
}

/// Objective from a norm profile: sup over grid times (`endpoint = false`) or the
/// final value only (`endpoint = true`), capped at 1. Propagates NaN.
fn profile_objective<T: Real>(profile: &[T], endpoint: bool) -> T {
    if endpoint {
        cap(*profile.last().expect("non-empty profile"))
    } else {
        let mut cur = T::zero();
        for &v in profile {
            if !(v <= cur) {
                cur = v;
            }
        }
        cap(cur)
    }
}

/// Shared engine for `d_em` / `ρ_em`: per path, evaluate every candidate in the
/// strategy's family plus (for the greedy strategy) the adapted adversary, then pick
/// the candidate with the best Monte-Carlo mean.
fn estimate_emery<T, FX, FY>(
    x_sampler: FX,
    y_sampler: FY,
    opts: &DemOptions,
    endpoint: bool,
) -> Result<MetricEstimate<T>>
where
    T: Real,
    FX: Fn(u64) -> Result<GridPath<T>> + Sync,
    FY: Fn(u64) -> Result<GridPath<T>> + Sync,
{
    if opts.n_paths < 2 {
        return Err(Error::TooFewPaths {
            needed: 2,
            got: opts.n_paths,
        });
    }
    // Learn the grid and dimension from the first pair, then fix the candidate family.
    let first_x = x_sampler(opts.seed_base)?;
    let first_y = y_sampler(opts.seed_base)?;
    TimeGrid::ensure_same(first_x.grid(), first_y.grid())?;
    let dim = first_x.dim();
    let n = first_x.grid().n_intervals();
    let grid = Arc::clone(first_x.grid());

    let n_random = match opts.strategy {
        Strategy::Identity => 0,
        Strategy::RandomGamma | Strategy::GreedyGamma => opts.n_gamma,
    };
    let use_greedy = opts.strategy == Strategy::GreedyGamma;
    let mut candidates = vec![CandidateOps::identity(dim, n)];
    for g in 0..n_random {
        candidates.push(CandidateOps::random(dim, n, opts.seed_base, g as u64 + 1));
    }
    // Both initial-sign variants of the greedy adversary count as candidates.
    let n_cols = candidates.len() + 2 * usize::from(use_greedy);

    let rows: Vec<Vec<T>> = (0..opts.n_paths)
        .into_par_iter()
        .map(|p| -> Result<Vec<T>> {
            let seed = opts.seed_base + p as u64;
            let (x, y) = if p == 0 {
                (first_x.clone(), first_y.clone())
            } else {
                (x_sampler(seed)?, y_sampler(seed)?)
            };
            TimeGrid::ensure_same(x.grid(), &grid)?;
            let data = PathData::from_pair(&x, &y)?;
            let mut row = Vec::with_capacity(n_cols);
            for cand in &candidates {
                row.push(profile_objective(
                    &cand.norm_profile(&data, opts.include_atom),
                    endpoint,
                ));
            }
            if use_greedy {
                for sign in [T::one(), -T::one()] {
                    row.push(profile_objective(
                        &greedy_norm_profile(&data, opts.include_atom, sign),
                        endpoint,
                    ));
                }
            }
            Ok(row)
        })
        .collect::<Result<Vec<_>>>()?;

    let mut best: Option<(T, T)> = None;
    let mut column = vec![T::zero(); opts.n_paths];
    for c in 0..n_cols {
        for (p, row) in rows.iter().enumerate() {
            column[p] = row[c];
        }
        let (mean, se) = mean_and_se(&column);
        if best.is_none_or(|(b, _)| mean > b) {
            best = Some((mean, se));
        }
    }
    let (value, std_error) = best.expect("at least the identity candidate");
    Ok(MetricEstimate {
        value,
        std_error,
        n_paths: opts.n_paths,
        strategy: opts.strategy,
    })
}

/// Estimate `d_em(X, Y)` (supremum over grid times).
pub fn estimate_dem<T, FX, FY>(
    x_sampler: FX,
    y_sampler: FY,
    opts: &DemOptions,
) -> Result<MetricEstimate<T>>
where
    T: Real,
    FX: Fn(u64) -> Result<GridPath<T>> + Sync,
    FY: Fn(u64) -> Result<GridPath<T>> + Sync,
{
    estimate_emery(x_sampler, y_sampler, opts, false)
}

/// Estimate the endpoint variant `ρ_em(X, Y)` (no supremum over `t`).
pub fn estimate_rho_em<T, FX, FY>(
    x_sampler: FX,
    y_sampler: FY,
    opts: &DemOptions,
) -> Result<MetricEstimate<T>>
where
    T: Real,
    FX: Fn(u64) -> Result<GridPath<T>> + Sync,
    FY: Fn(u64) -> Result<GridPath<T>> + Sync,
{
    estimate_emery(x_sampler, y_sampler, opts, true)
}

/// Weighted series `Σ_{k>=1} 2^{-k} d_em` over integer horizons `k`, truncated at
/// `k = ⌈T⌉`; the tail bound `2^{-⌈T⌉}` is added to the standard error, and the
/// per-horizon errors are combined linearly (conservative, they are correlated).
pub fn estimate_dem_series<T, FX, FY>(
    x_sampler: FX,
    y_sampler: FY,
    opts: &DemOptions,
) -> Result<MetricEstimate<T>>
where
    T: Real,
    FX: Fn(u64) -> Result<GridPath<T>> + Sync,
    FY: Fn(u64) -> Result<GridPath<T>> + Sync,
{
    if opts.n_paths < 2 {
        return Err(Error::TooFewPaths {
            needed: 2,
            got: opts.n_paths,
        });
    }
    let first_x = x_sampler(opts.seed_base)?;
    let first_y = y_sampler(opts.seed_base)?;
    TimeGrid::ensure_same(first_x.grid(), first_y.grid())?;
    let dim = first_x.dim();
    let n = first_x.grid().n_intervals();
    let grid = Arc::clone(first_x.grid());
    let horizon = grid.horizon().lossy();
    let k_max = horizon.ceil().max(1.0) as usize;
    // Cut index for horizon k: last grid point at or before min(k, T).
    let cuts: Vec<usize> = (1..=k_max)
        .map(|k| grid.last_index_at_or_before(T::of((k as f64).min(horizon))))
        .collect::<Result<Vec<_>>>()?;

    let n_random = match opts.strategy {
        Strategy::Identity => 0,
        Strategy::RandomGamma | Strategy::GreedyGamma => opts.n_gamma,
    };
    let use_greedy = opts.strategy == Strategy::GreedyGamma;
    let mut candidates = vec![CandidateOps::identity(dim, n)];
    for g in 0..n_random {
        candidates.push(CandidateOps::random(dim, n, opts.seed_base, g as u64 + 1));
    }
    let n_cols = candidates.len() + 2 * usize::from(use_greedy);

    // rows[p][c][k]: objective of candidate c at horizon k on path p.
    let rows: Vec<Vec<Vec<T>>> = (0..opts.n_paths)
        .into_par_iter()
        .map(|p| -> Result<Vec<Vec<T>>> {
            let seed = opts.seed_base + p as u64;
            let (x, y) = if p == 0 {
                (first_x.clone(), first_y.clone())
            } else {
                (x_sampler(seed)?, y_sampler(seed)?)
            };
            TimeGrid::ensure_same(x.grid(), &grid)?;
            let data = PathData::from_pair(&x, &y)?;
            let mut per_candidate = Vec::with_capacity(n_cols);
            let mut profiles: Vec<Vec<T>> = candidates
                .iter()
                .map(|cand| cand.norm_profile(&data, opts.include_atom))
                .collect();
            if use_greedy {
                for sign in [T::one(), -T::one()] {
                    profiles.push(greedy_norm_profile(&data, opts.include_atom, sign));
                }
            }
            for profile in &profiles {
                let per_k = cuts
                    .iter()
                    .map(|&cut| profile_objective(&profile[..=cut], false))
                    .collect();
                per_candidate.push(per_k);
            }
            Ok(per_candidate)
        })
        .collect::<Result<Vec<_>>>()?;

    // For each horizon pick the best candidate mean, then combine the series.
    let mut value = T::zero();
    let mut std_error = T::zero();
    let mut column = vec![T::zero(); opts.n_paths];
    for (ki, _) in cuts.iter().enumerate() {
        let mut best: Option<(T, T)> = None;
        for c in 0..n_cols {
            for (p, row) in rows.iter().enumerate() {
                column[p] = row[c][ki];
            }
            let (mean, se) = mean_and_se(&column);
            if best.is_none_or(|(b, _)| mean > b) {
                best = Some((mean, se));
            }
        }
        let (mean, se) = best.expect("non-empty candidate set");
        let weight = T::of(0.5).powi(ki as i32 + 1);
        value = value + weight * mean;
        std_error = std_error + weight * se;
    }
    std_error = std_error + T::of(0.5).powi(k_max as i32);
    Ok(MetricEstimate {
        value,
        std_error,
        n_paths: opts.n_paths,
        strategy: opts.strategy,
    })
}

/// Exact enumeration over every sign-valued adversary `Γ ∈ {±1}^{n+1}` (atom plus one
/// sign per interval) for scalar paths on grids with at most
/// [`MAX_ENUMERATION_INTERVALS`] intervals. Returns the true supremum of the
/// Monte-Carlo objective over that family: the yardstick for the heuristics.
pub fn enumerate_dem_scalar<T, FX, FY>(
    x_sampler: FX,
    y_sampler: FY,
    n_paths: usize,
    seed_base: u64,
    include_atom: bool,
    endpoint: bool,
) -> Result<EnumeratedMetric<T>>
where
    T: Real,
    FX: Fn(u64) -> Result<GridPath<T>> + Sync,
    FY: Fn(u64) -> Result<GridPath<T>> + Sync,
{
    if n_paths < 2 {
        return Err(Error::TooFewPaths {
            needed: 2,
            got: n_paths,
        });
    }
    let first_x = x_sampler(seed_base)?;
    let n = first_x.grid().n_intervals();
    if first_x.dim() != 1 || n > MAX_ENUMERATION_INTERVALS {
        return Err(Error::EnumerationTooLarge {
            dim: first_x.dim(),
            intervals: n,
            max: MAX_ENUMERATION_INTERVALS,
        });
    }
    let grid = Arc::clone(first_x.grid());
    let n_candidates = 1usize << (n + 1);

    // Per path: scalar d0 and increments.
    let data: Vec<(T, Vec<T>)> = (0..n_paths)
        .into_par_iter()
        .map(|p| -> Result<(T, Vec<T>)> {
            let seed = seed_base + p as u64;
            let x = x_sampler(seed)?;
            let y = y_sampler(seed)?;
            TimeGrid::ensure_same(x.grid(), &grid)?;
            let d = x.sub(&y)?;
            let d0 = d.value(0).get(0);
            let inc = (0..n)
                .map(|i| d.value(i + 1).get(0) - d.value(i).get(0))
                .collect();
            Ok((d0, inc))
        })
        .collect::<Result<Vec<_>>>()?;

    let mut best: Option<(T, T)> = None;
    let mut column = vec![T::zero(); n_paths];
    for mask in 0..n_candidates {
        let atom_sign = if mask & 1 == 1 { -T::one() } else { T::one() };
        for (p, (d0, inc)) in data.iter().enumerate() {
            let mut acc = if include_atom {
                atom_sign * *d0
            } else {
                T::zero()
            };
            let mut obj = acc.abs();
            for (i, &dd) in inc.iter().enumerate() {
                let sign = if (mask >> (i + 1)) & 1 == 1 {
                    -T::one()
                } else {
                    T::one()
                };
                acc = acc + sign * dd;
                if !endpoint && !(acc.abs() <= obj) {
                    obj = acc.abs();
                }
            }
            if endpoint {
                obj = acc.abs();
            }
            column[p] = cap(obj);
        }
        let (mean, se) = mean_and_se(&column);
        if best.is_none_or(|(b, _)| mean > b) {
            best = Some((mean, se));
        }
    }
    let (value, std_error) = best.expect("non-empty enumeration");
    Ok(EnumeratedMetric {
        value,
        std_error,
        n_paths,
        n_candidates,
    })
}
