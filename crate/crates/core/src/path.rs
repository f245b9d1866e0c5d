//! Grid-level càdlàg path algebra.
//!
//! Paths live on a shared time grid and are piecewise constant: a [`GridPath`] holds
//! one value per grid point and is right-continuous, so its left limit at any
//! `s ∈ (t_j, t_{j+1}]` is the value at `t_j`. Integrands are step processes whose
//! piece `i` is in force on the left-open interval `(t_i, t_{i+1}]` and, by the
//! left-point convention, may only depend on information up to `t_i`.
//!
//! On such paths the classical identities of stochastic calculus — the Itô identity
//! defining quadratic variation, polarisation for covariation, stopping and
//! integrand-truncation commuting with integration — are *finite-sum algebra* and are
//! asserted here exactly (to rounding), not approximately.

use std::sync::Arc;

use crate::error::{Error, Result};
use crate::grid::TimeGrid;
use crate::hilbert::{ContractionSemigroup, HsOperator, TruncatedVector};
use crate::noise::NoisePathBundle;
use crate::real::Real;

/// Slack for the operator-norm cap on adversary pieces: the power-iteration norm
/// estimate converges from below, so a tiny overshoot tolerance avoids rejecting
/// exact isometries.
const NORM_CAP_SLACK: f64 = 1e-9;

/// An adapted càdlàg path on a grid: one state-space value per grid point, constant on
/// `[t_j, t_{j+1})`.
#[derive(Debug, Clone, PartialEq)]
pub struct GridPath<T: Real> {
    grid: Arc<TimeGrid<T>>,
    dim: usize,
    values: Vec<TruncatedVector<T>>,
}

impl<T: Real> GridPath<T> {
    /// Path from explicit values, one per grid point.
    pub fn new(grid: Arc<TimeGrid<T>>, values: Vec<TruncatedVector<T>>) -> Result<Self> {
        if values.len() != grid.n_points() {
            return Err(Error::DimensionMismatch {
                expected: grid.n_points(),
                got: values.len(),
            });
        }
        let dim = values[0].dim();
        for v in &values {
            if v.dim() != dim {
                return Err(Error::DimensionMismatch {
                    expected: dim,
                    got: v.dim(),
                });
            }
        }
        Ok(Self { grid, dim, values })
    }

    /// The zero path.
    pub fn zeros(grid: Arc<TimeGrid<T>>, dim: usize) -> Self {
        let values = vec![TruncatedVector::zeros(dim); grid.n_points()];
        Self { grid, dim, values }
    }

    /// The constant path `t -> v`.
    pub fn constant(grid: Arc<TimeGrid<T>>, v: TruncatedVector<T>) -> Self {
        let dim = v.dim();
        let values = vec![v; grid.n_points()];
        Self { grid, dim, values }
    }

    #[inline]
    pub fn grid(&self) -> &Arc<TimeGrid<T>> {
        &self.grid
    }

    #[inline]
    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Value at grid point `j`.
    #[inline]
    pub fn value(&self, j: usize) -> &TruncatedVector<T> {
        &self.values[j]
    }

    #[inline]
    pub fn values(&self) -> &[TruncatedVector<T>] {
        &self.values
    }

    /// Left limit at `s ∈ (0, T]`: the value at the last grid point strictly before `s`.
    pub fn left_value(&self, s: T) -> Result<&TruncatedVector<T>> {
        if !(s > T::zero()) || s > self.grid.horizon() {
            return Err(Error::InvalidParameter(format!(
                "left limit defined on (0, horizon], got {s}"
            )));
        }
        let j = self.grid.times().partition_point(|&t| t < s) - 1;
        Ok(&self.values[j])
    }

    /// Pointwise difference `self - other` on a shared grid.
    pub fn sub(&self, other: &Self) -> Result<Self> {
        TimeGrid::ensure_same(&self.grid, &other.grid)?;
        if self.dim != other.dim {
            return Err(Error::DimensionMismatch {
                expected: self.dim,
                got: other.dim,
            });
        }
        let values = self
            .values
            .iter()
            .zip(&other.values)
            .map(|(a, b)| a.sub(b))
            .collect();
        Ok(Self {
            grid: Arc::clone(&self.grid),
            dim: self.dim,
            values,
        })
    }

    /// Pointwise sum on a shared grid.
    pub fn add(&self, other: &Self) -> Result<Self> {
        TimeGrid::ensure_same(&self.grid, &other.grid)?;
        if self.dim != other.dim {
            return Err(Error::DimensionMismatch {
                expected: self.dim,
                got: other.dim,
            });
        }
        let values = self
            .values
            .iter()
            .zip(&other.values)
            .map(|(a, b)| a.add(b))
            .collect();
        Ok(Self {
            grid: Arc::clone(&self.grid),
            dim: self.dim,
            values,
        })
    }

    /// Pointwise scaling.
    pub fn scale(&self, c: T) -> Self {
        Self {
            grid: Arc::clone(&self.grid),
            dim: self.dim,
            values: self.values.iter().map(|v| v.scale(c)).collect(),
        }
    }

    /// `sup_j ||self(t_j)||`. Propagates NaN if any value is non-finite.
    pub fn sup_norm(&self) -> T {
        let mut cur = T::zero();
        for v in &self.values {
            let n = v.norm();
            if !(n <= cur) {
                cur = n;
            }
        }
        cur
    }

    /// `sup_j ||self(t_j) - other(t_j)||` on a shared grid. Propagates NaN.
    pub fn sup_distance(&self, other: &Self) -> Result<T> {
        TimeGrid::ensure_same(&self.grid, &other.grid)?;
        if self.dim != other.dim {
            return Err(Error::DimensionMismatch {
                expected: self.dim,
                got: other.dim,
            });
        }
        let mut cur = T::zero();
        for (a, b) in self.values.iter().zip(&other.values) {
            let n = a.sub(b).norm();
            if !(n <= cur) {
                cur = n;
            }
        }
        Ok(cur)
    }
}

/// A real-valued path on grid points (quadratic variations, residuals, bounds).
#[derive(Debug, Clone, PartialEq)]
pub struct RealGridPath<T: Real> {
    grid: Arc<TimeGrid<T>>,
    values: Vec<T>,
}

impl<T: Real> RealGridPath<T> {
    pub fn new(grid: Arc<TimeGrid<T>>, values: Vec<T>) -> Result<Self> {
        if values.len() != grid.n_points() {
            return Err(Error::DimensionMismatch {
                expected: grid.n_points(),
                got: values.len(),
            });
        }
        Ok(Self { grid, values })
    }

    pub fn zeros(grid: Arc<TimeGrid<T>>) -> Self {
        let values = vec![T::zero(); grid.n_points()];
        Self { grid, values }
    }

    #[inline]
    pub fn grid(&self) -> &Arc<TimeGrid<T>> {
        &self.grid
    }

    #[inline]
    pub fn value(&self, j: usize) -> T {
        self.values[j]
    }

    #[inline]
    pub fn values(&self) -> &[T] {
        &self.values
    }

    /// `sup_j |value(t_j)|`. Propagates NaN.
    pub fn sup_abs(&self) -> T {
        let mut cur = T::zero();
        for &v in &self.values {
            let a = v.abs();
            if !(a <= cur) {
                cur = a;
            }
        }
        cur
    }

    /// Running maximum path: `j -> max_{i <= j} value(t_i)`.
    pub fn running_max(&self) -> Self {
        let mut values = Vec::with_capacity(self.values.len());
        let mut cur = self.values[0];
        for &v in &self.values {
            cur = cur.max(v);
            values.push(cur);
        }
        Self {
            grid: Arc::clone(&self.grid),
            values,
        }
    }
}

/// Operator-valued step process `Ψ`, piece `i` in force on `(t_i, t_{i+1}]`.
///
/// The left-point convention makes predictability structural: piece `i` is only ever
/// combined with data up to `t_i`.
#[derive(Debug, Clone, PartialEq)]
pub struct SimpleHsProcess<T: Real> {
    grid: Arc<TimeGrid<T>>,
    pieces: Vec<HsOperator<T>>,
}

impl<T: Real> SimpleHsProcess<T> {
    /// Step process from one operator per interval (all with equal shapes).
    pub fn new(grid: Arc<TimeGrid<T>>, pieces: Vec<HsOperator<T>>) -> Result<Self> {
        if pieces.len() != grid.n_intervals() {
            return Err(Error::DimensionMismatch {
                expected: grid.n_intervals(),
                got: pieces.len(),
            });
        }
        let (rows, cols) = (pieces[0].rows(), pieces[0].cols());
        for p in &pieces {
            if p.rows() != rows || p.cols() != cols {
                return Err(Error::DimensionMismatch {
                    expected: rows * cols,
                    got: p.rows() * p.cols(),
                });
            }
        }
        Ok(Self { grid, pieces })
    }

    /// The constant step process `t -> op`.
    pub fn constant(grid: Arc<TimeGrid<T>>, op: HsOperator<T>) -> Self {
        let pieces = vec![op; grid.n_intervals()];
        Self { grid, pieces }
    }

    #[inline]
    pub fn grid(&self) -> &Arc<TimeGrid<T>> {
        &self.grid
    }

    #[inline]
    pub fn piece(&self, i: usize) -> &HsOperator<T> {
        &self.pieces[i]
    }

    #[inline]
    pub fn pieces(&self) -> &[HsOperator<T>] {
        &self.pieces
    }

    #[inline]
    pub fn rows(&self) -> usize {
        self.pieces[0].rows()
    }

    #[inline]
    pub fn cols(&self) -> usize {
        self.pieces[0].cols()
    }

    /// Integrand truncation `𝟙_{(0,τ]} Ψ`: pieces at interval index `>= τ` are zeroed.
    pub fn truncated_at(&self, tau: &GridStoppingTime) -> Self {
        let cut = tau.index_or(self.grid.n_intervals());
        let zero = HsOperator::zeros(self.rows(), self.cols());
        let pieces = self
            .pieces
            .iter()
            .enumerate()
            .map(|(i, p)| if i < cut { p.clone() } else { zero.clone() })
            .collect();
        Self {
            grid: Arc::clone(&self.grid),
            pieces,
        }
    }
}

/// Adversary process for the Émery-type metrics: a `{0}`-atom operator plus one
/// operator per interval, every operator with norm at most 1 (hard cap).
#[derive(Debug, Clone, PartialEq)]
pub struct SimpleOperatorProcess<T: Real> {
    grid: Arc<TimeGrid<T>>,
    gamma0: HsOperator<T>,
    pieces: Vec<HsOperator<T>>,
}

impl<T: Real> SimpleOperatorProcess<T> {
    /// Validates the norm cap on the atom and on every piece.
    pub fn new(
        grid: Arc<TimeGrid<T>>,
        gamma0: HsOperator<T>,
        pieces: Vec<HsOperator<T>>,
    ) -> Result<Self> {
        if pieces.len() != grid.n_intervals() {
            return Err(Error::DimensionMismatch {
                expected: grid.n_intervals(),
                got: pieces.len(),
            });
        }
        let dim = gamma0.rows();
        for (idx, p) in std::iter::once(&gamma0).chain(pieces.iter()).enumerate() {
            if p.rows() != dim || p.cols() != dim {
                return Err(Error::DimensionMismatch {
                    expected: dim * dim,
                    got: p.rows() * p.cols(),
                });
            }
            // Cheap sufficient bound first; the power-iteration estimate only for
            // operators whose Hilbert-Schmidt norm exceeds 1.
            let norm = if p.hs_norm() <= T::one() {
                p.hs_norm()
            } else {
                p.operator_norm_estimate()
            };
            if norm > T::of(1.0 + NORM_CAP_SLACK) {
                return Err(Error::OperatorNormExceedsOne {
                    index: idx,
                    norm: norm.lossy(),
                });
            }
        }
        Ok(Self {
            grid,
            gamma0,
            pieces,
        })
    }

    /// The identity adversary `Γ ≡ Id`.
    pub fn identity(grid: Arc<TimeGrid<T>>, dim: usize) -> Self {
        let id = HsOperator::identity(dim);
        let pieces = vec![id.clone(); grid.n_intervals()];
        Self {
            grid,
            gamma0: id,
            pieces,
        }
    }

    #[inline]
    pub fn grid(&self) -> &Arc<TimeGrid<T>> {
        &self.grid
    }

    #[inline]
    pub fn gamma0(&self) -> &HsOperator<T> {
        &self.gamma0
    }

    #[inline]
    pub fn piece(&self, i: usize) -> &HsOperator<T> {
        &self.pieces[i]
    }
}

/// Stopping time taking values in the grid points, or `+∞`.
///
/// The adaptedness contract — `{index <= j}` decidable from data up to `t_j` — is the
/// caller's responsibility when the index is computed from a path.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct GridStoppingTime {
    index: Option<usize>,
}

impl GridStoppingTime {
    /// Stop at grid point `j`.
    pub fn at_index(j: usize) -> Self {
        Self { index: Some(j) }
    }

    /// Never stop.
    pub fn infinity() -> Self {
        Self { index: None }
    }

    /// First grid point where `predicate(j)` holds, else `+∞`.
    pub fn first<T: Real>(path: &GridPath<T>, predicate: impl Fn(&TruncatedVector<T>) -> bool) -> Self {
        for (j, v) in path.values().iter().enumerate() {
            if predicate(v) {
                return Self::at_index(j);
            }
        }
        Self::infinity()
    }

    #[inline]
    pub fn index(&self) -> Option<usize> {
        self.index
    }

    #[inline]
    pub fn is_infinite(&self) -> bool {
        self.index.is_none()
    }

    /// The stopping index, with `+∞` mapped to `cap`.
    #[inline]
    pub fn index_or(&self, cap: usize) -> usize {
        self.index.map_or(cap, |i| i.min(cap))
    }
}

/// Step-process stochastic integral `I(Ψ)(t_j) = Σ_{i<j} Ψ_i ΔL_i`, with `I(Ψ)(0) = 0`.
pub fn stochastic_integral<T: Real>(
    psi: &SimpleHsProcess<T>,
    bundle: &NoisePathBundle<T>,
) -> Result<GridPath<T>> {
    TimeGrid::ensure_same(psi.grid(), bundle.grid())?;
    if psi.cols() != bundle.dim_u() {
        return Err(Error::DimensionMismatch {
            expected: bundle.dim_u(),
            got: psi.cols(),
        });
    }
    let n = psi.grid().n_intervals();
    let mut values = Vec::with_capacity(n + 1);
    let mut acc = TruncatedVector::zeros(psi.rows());
    values.push(acc.clone());
    for i in 0..n {
        let step = bundle.apply_operator(psi.piece(i), i)?;
        acc = acc.add(&step);
        values.push(acc.clone());
    }
    GridPath::new(Arc::clone(psi.grid()), values)
}

/// Left-point Riemann sum `out(t_j) = Σ_{i<j} kernel(t_j, t_i) f(t_i) Δt_i`, where the
/// kernel is `S(t_j - t_i)` when a semigroup is given and the identity otherwise.
pub fn lebesgue_integral<T: Real>(
    f: &GridPath<T>,
    semigroup: Option<&ContractionSemigroup<T>>,
) -> Result<GridPath<T>> {
    if let Some(s) = semigroup {
        if s.dim() != f.dim() {
            return Err(Error::DimensionMismatch {
                expected: f.dim(),
                got: s.dim(),
            });
        }
    }
    let grid = f.grid();
    let n = grid.n_intervals();
    let mut values = Vec::with_capacity(n + 1);
    match semigroup {
        None => {
            let mut acc = TruncatedVector::zeros(f.dim());
            values.push(acc.clone());
            for i in 0..n {
                acc.axpy(grid.dt(i), f.value(i));
                values.push(acc.clone());
            }
        }
        Some(s) => {
            for j in 0..=n {
                let mut acc = TruncatedVector::zeros(f.dim());
                for i in 0..j {
                    let term = s.apply(grid.time(j) - grid.time(i), f.value(i))?;
                    acc.axpy(grid.dt(i), &term);
                }
                values.push(acc);
            }
        }
    }
    GridPath::new(Arc::clone(grid), values)
}

/// Quadratic variation `[X](t_j) = Σ_{1<=i<=j} ||X(t_i) - X(t_{i-1})||²`.
///
/// On grid paths this satisfies the Itô identity
/// `[X](t) = ||X(t)||² - ||X(0)||² - 2 Σ <X(t_{i-1}), ΔX_i>` exactly.
pub fn quadratic_variation<T: Real>(x: &GridPath<T>) -> RealGridPath<T> {
    let n = x.grid().n_intervals();
    let mut values = Vec::with_capacity(n + 1);
    let mut acc = T::zero();
    values.push(acc);
    for i in 1..=n {
        acc = acc + x.value(i).sub(x.value(i - 1)).norm_sq();
        values.push(acc);
    }
    RealGridPath {
        grid: Arc::clone(x.grid()),
        values,
    }
}

/// Covariation by polarisation, `[X,Y] = ([X+Y] - [X-Y]) / 4`; equals
/// `Σ <ΔX_i, ΔY_i>` on grid paths.
pub fn covariation<T: Real>(x: &GridPath<T>, y: &GridPath<T>) -> Result<RealGridPath<T>> {
    let sum = quadratic_variation(&x.add(y)?);
    let diff = quadratic_variation(&x.sub(y)?);
    let quarter = T::of(0.25);
    let values = sum
        .values()
        .iter()
        .zip(diff.values())
        .map(|(&a, &b)| (a - b) * quarter)
        .collect();
    RealGridPath::new(Arc::clone(x.grid()), values)
}

/// Stopped path `X^τ(t_j) = X(t_{min(j, τ)})`.
pub fn stop_path<T: Real>(x: &GridPath<T>, tau: &GridStoppingTime) -> GridPath<T> {
    let cut = tau.index_or(x.grid().n_points() - 1);
    let values = (0..x.grid().n_points())
        .map(|j| x.value(j.min(cut)).clone())
        .collect();
    GridPath {
        grid: Arc::clone(x.grid()),
        dim: x.dim(),
        values,
    }
}

/// Pathwise integral of an adversary against a path:
/// `out(t_j) = [Γ(0) X(0) if include_atom] + Σ_{i<j} Γ_i (X(t_{i+1}) - X(t_i))`.
pub fn integrate_against_path<T: Real>(
    gamma: &SimpleOperatorProcess<T>,
    x: &GridPath<T>,
    include_atom: bool,
) -> Result<GridPath<T>> {
    TimeGrid::ensure_same(gamma.grid(), x.grid())?;
    if gamma.gamma0().rows() != x.dim() {
        return Err(Error::DimensionMismatch {
            expected: x.dim(),
            got: gamma.gamma0().rows(),
        });
    }
    let n = x.grid().n_intervals();
    let mut acc = if include_atom {
        gamma.gamma0().apply(x.value(0))
    } else {
        TruncatedVector::zeros(x.dim())
    };
    let mut values = Vec::with_capacity(n + 1);
    values.push(acc.clone());
    for i in 0..n {
        let dx = x.value(i + 1).sub(x.value(i));
        acc = acc.add(&gamma.piece(i).apply(&dx));
        values.push(acc.clone());
    }
    GridPath::new(Arc::clone(x.grid()), values)
}
