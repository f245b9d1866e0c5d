//! Cylindrical Lévy noise models on the noise truncation `R^d_U`.
//!
//! A noise model is a characteristics triple with zero drift symbol: a Gaussian
//! covariance `Q` and/or a jump specification. The shipped families are
//!
//! - **Brownian** noise with covariance `Q` (symmetric PSD),
//! - **independent symmetric α-stable coordinates** with per-direction symbol
//!   `exp(-t σ^α Σ_k |u_k|^α)`,
//! - **`U`-valued compound Poisson** noise with Gaussian jump law `N(m, s² I)`.
//!
//! All randomness flows through [`crate::rng::CounterRng`] streams keyed by
//! `(seed, domain, indices...)`, which makes sampled bundles a pure function of
//! `(model, grid, seed)`:
//!
//! - Gaussian increments use a dyadic-bridge construction on uniform power-of-two
//!   grids, so doubling the grid refines the same path (coarse increment = sum of its
//!   two children); other grids fall back to flat per-interval keying.
//! - Compound-Poisson increments are binned from a grid-independent jump list, so they
//!   are consistent across *any* two grids with the same horizon.
//! - α-stable increments are keyed per `(interval, coordinate)`; they are exact in law
//!   on every grid but not pathwise coupled across refinements (stable bridges have no
//!   closed form).
//!
//! The module also exposes the integrability functionals `ζ_L`, `η_L` and `m_L` that
//! decide which step processes are integrable against the noise.

use std::sync::Arc;

use num_complex::Complex;
use rand_distr::{Distribution, Poisson};

use crate::error::{Error, Result};
use crate::grid::TimeGrid;
use crate::hilbert::{HsOperator, TruncatedVector};
use crate::path::SimpleHsProcess;
use crate::real::Real;
use crate::rng::{tags, CounterRng};

/// Default Monte-Carlo sample count for the compound-Poisson part of `ζ_L` / `η_L`.
pub const FUNCTIONAL_MC_SAMPLES: usize = 8192;

/// Default number of random contraction probes for `η_L` inside `m_L`.
pub const DEFAULT_ETA_PROBES: usize = 8;

/// Symmetric positive-semidefinite Gaussian covariance on the noise truncation.
///
/// Validated at construction by a tolerance-pivoted Cholesky factorization; the factor
/// is kept for sampling correlated increments.
#[derive(Debug, Clone, PartialEq)]
pub struct GaussianCovariance<T: Real> {
    dim: usize,
    entries: Vec<T>,
    chol: Vec<T>,
}

impl<T: Real> GaussianCovariance<T> {
    /// Covariance `q * I`.
    pub fn scaled_identity(dim: usize, q: T) -> Result<Self> {
        if !(q >= T::zero()) || !q.is_finite() {
            return Err(Error::InvalidParameter(format!(
                "covariance scale must be finite and non-negative, got {q}"
            )));
        }
        let mut entries = vec![T::zero(); dim * dim];
        for k in 0..dim {
            entries[k * dim + k] = q;
        }
        Self::from_entries(dim, entries)
    }

    /// Covariance from a dense symmetric PSD matrix (row-major).
    pub fn from_entries(dim: usize, entries: Vec<T>) -> Result<Self> {
        if entries.len() != dim * dim {
            return Err(Error::DimensionMismatch {
                expected: dim * dim,
                got: entries.len(),
            });
        }
        let scale = (0..dim)
            .map(|k| entries[k * dim + k].abs())
            .fold(T::zero(), T::max)
            .max(T::one());
        let sym_tol = T::of(1e-12) * scale;
        for i in 0..dim {
            for j in 0..i {
                if (entries[i * dim + j] - entries[j * dim + i]).abs() > sym_tol {
                    return Err(Error::NotPositiveSemidefinite(format!(
                        "entry ({i},{j}) differs from its transpose"
                    )));
                }
            }
        }
        let chol = cholesky_psd(dim, &entries, scale)?;
        Ok(Self {
            dim,
            entries,
            chol,
        })
    }

    #[inline]
    pub fn dim(&self) -> usize {
        self.dim
    }

    #[inline]
    pub fn entry(&self, i: usize, j: usize) -> T {
        self.entries[i * self.dim + j]
    }

    /// The covariance as a dense operator `U -> U`.
    pub fn as_operator(&self) -> HsOperator<T> {
        HsOperator::new(self.dim, self.dim, self.entries.clone())
    }

    /// Quadratic form `<Q u, u>`.
    pub fn quadratic_form(&self, u: &TruncatedVector<T>) -> T {
        assert_eq!(u.dim(), self.dim, "direction dimension mismatch");
        let mut acc = T::zero();
        for i in 0..self.dim {
            let mut row = T::zero();
            for j in 0..self.dim {
                row = row + self.entry(i, j) * u.get(j);
            }
            acc = acc + row * u.get(i);
        }
        acc
    }

    /// Correlate a vector of independent standard coordinates: `L z` with `L L^T = Q`.
    fn correlate(&self, z: &[T]) -> Vec<T> {
        (0..self.dim)
            .map(|i| {
                let row = &self.chol[i * self.dim..i * self.dim + i + 1];
                row.iter()
                    .zip(z)
                    .fold(T::zero(), |acc, (&l, &zj)| acc + l * zj)
            })
            .collect()
    }

    fn is_zero(&self) -> bool {
        self.entries.iter().all(|&e| e == T::zero())
    }
}

/// Lower-triangular Cholesky factor with a zero-pivot tolerance, so genuinely
/// semidefinite matrices (zero eigendirections) factor instead of failing.
fn cholesky_psd<T: Real>(dim: usize, a: &[T], scale: T) -> Result<Vec<T>> {
    let tol = T::of(1e-10) * scale;
    let mut l = vec![T::zero(); dim * dim];
    for j in 0..dim {
        let mut d = a[j * dim + j];
        for k in 0..j {
            d = d - l[j * dim + k] * l[j * dim + k];
        }
        if d < -tol {
            return Err(Error::NotPositiveSemidefinite(format!(
                "negative pivot {d} at column {j}"
            )));
        }
        if d <= tol {
            // Zero eigendirection: the whole column must vanish.
            for i in (j + 1)..dim {
                let mut s = a[i * dim + j];
                for k in 0..j {
                    s = s - l[i * dim + k] * l[j * dim + k];
                }
                if s.abs() > tol {
                    return Err(Error::NotPositiveSemidefinite(format!(
                        "rank-deficient column {j} with non-zero coupling"
                    )));
                }
            }
            continue;
        }
        let root = d.sqrt();
        l[j * dim + j] = root;
        for i in (j + 1)..dim {
            let mut s = a[i * dim + j];
            for k in 0..j {
                s = s - l[i * dim + k] * l[j * dim + k];
            }
            l[i * dim + j] = s / root;
        }
    }
    Ok(l)
}

/// Jump part of a characteristics triple.
#[derive(Debug, Clone, PartialEq)]
pub enum JumpSpec<T: Real> {
    /// No jumps.
    None,
    /// Independent symmetric α-stable coordinates, each with symbol `-σ^α |u_k|^α`.
    AlphaStable { alpha: T, scale: T },
    /// `U`-valued compound Poisson process with rate `rate` and Gaussian jump law
    /// `N(jump_mean, jump_std² I)`.
    CompoundPoisson {
        rate: T,
        jump_mean: TruncatedVector<T>,
        jump_std: T,
    },
}

/// Characteristics of a cylindrical Lévy noise model.
///
/// The drift symbol is identically zero for every shipped family: the Brownian and
/// stable models are symmetric, and the compound-Poisson exponent
/// `r (φ_J(u) - 1)` needs no compensation because its jump measure is finite — an
/// asymmetric jump mean enters through the jump law, not through a separate drift.
#[derive(Debug, Clone, PartialEq)]
pub struct LevyCharacteristics<T: Real> {
    pub gaussian: Option<GaussianCovariance<T>>,
    pub jumps: JumpSpec<T>,
}

/// Cylindrical Lévy noise model on `R^d_U`.
#[derive(Debug, Clone, PartialEq)]
pub struct NoiseModel<T: Real> {
    dim_u: usize,
    characteristics: LevyCharacteristics<T>,
}

impl<T: Real> NoiseModel<T> {
    /// Model from explicit characteristics (validates every component).
    pub fn new(dim_u: usize, characteristics: LevyCharacteristics<T>) -> Result<Self> {
        if dim_u == 0 {
            return Err(Error::InvalidParameter(
                "noise truncation needs at least one coordinate".into(),
            ));
        }
        if let Some(g) = &characteristics.gaussian {
            if g.dim() != dim_u {
                return Err(Error::DimensionMismatch {
                    expected: dim_u,
                    got: g.dim(),
                });
            }
        }
        match &characteristics.jumps {
            JumpSpec::None => {}
            JumpSpec::AlphaStable { alpha, scale } => {
                let a = alpha.lossy();
                if !(a > 0.0 && a < 2.0) {
                    return Err(Error::InvalidStabilityIndex(a));
                }
                if !(*scale > T::zero()) || !scale.is_finite() {
                    return Err(Error::InvalidParameter(format!(
                        "stable scale must be positive and finite, got {scale}"
                    )));
                }
            }
            JumpSpec::CompoundPoisson {
                rate,
                jump_mean,
                jump_std,
            } => {
                if !(*rate > T::zero()) || !rate.is_finite() {
                    return Err(Error::InvalidParameter(format!(
                        "jump rate must be positive and finite, got {rate}"
                    )));
                }
                if jump_mean.dim() != dim_u {
                    return Err(Error::DimensionMismatch {
                        expected: dim_u,
                        got: jump_mean.dim(),
                    });
                }
                if !(*jump_std >= T::zero()) || !jump_std.is_finite() {
                    return Err(Error::InvalidParameter(format!(
                        "jump standard deviation must be non-negative, got {jump_std}"
                    )));
                }
            }
        }
        Ok(Self {
            dim_u,
            characteristics,
        })
    }

    /// Brownian noise with covariance `Q`.
    pub fn brownian(cov: GaussianCovariance<T>) -> Result<Self> {
        let dim = cov.dim();
        Self::new(
            dim,
            LevyCharacteristics {
                gaussian: Some(cov),
                jumps: JumpSpec::None,
            },
        )
    }

    /// Brownian noise with covariance `q * I` on `R^dim_u`.
    pub fn brownian_scaled(dim_u: usize, q: T) -> Result<Self> {
        Self::brownian(GaussianCovariance::scaled_identity(dim_u, q)?)
    }

    /// Independent symmetric α-stable coordinates with `alpha ∈ (0, 2)` and scale `σ > 0`.
    pub fn alpha_stable(dim_u: usize, alpha: T, scale: T) -> Result<Self> {
        Self::new(
            dim_u,
            LevyCharacteristics {
                gaussian: None,
                jumps: JumpSpec::AlphaStable { alpha, scale },
            },
        )
    }

    /// Compound Poisson noise with Gaussian jumps `N(jump_mean, jump_std² I)`.
    pub fn compound_poisson(
        dim_u: usize,
        rate: T,
        jump_mean: TruncatedVector<T>,
        jump_std: T,
    ) -> Result<Self> {
        Self::new(
            dim_u,
            LevyCharacteristics {
                gaussian: None,
                jumps: JumpSpec::CompoundPoisson {
                    rate,
                    jump_mean,
                    jump_std,
                },
            },
        )
    }

    /// Deterministic model (no noise at all); useful for pure-drift problems.
    pub fn deterministic(dim_u: usize) -> Result<Self> {
        Self::new(
            dim_u,
            LevyCharacteristics {
                gaussian: None,
                jumps: JumpSpec::None,
            },
        )
    }

    #[inline]
    pub fn dim_u(&self) -> usize {
        self.dim_u
    }

    #[inline]
    pub fn characteristics(&self) -> &LevyCharacteristics<T> {
        &self.characteristics
    }

    /// Drift symbol `a(u)`; identically zero for every shipped family.
    pub fn drift_symbol(&self, _u: &TruncatedVector<T>) -> T {
        T::zero()
    }

    /// Whether the law of the noise is symmetric under `L -> -L`.
    pub fn is_symmetric(&self) -> bool {
        match &self.characteristics.jumps {
            JumpSpec::None | JumpSpec::AlphaStable { .. } => true,
            JumpSpec::CompoundPoisson { jump_mean, .. } => {
                jump_mean.coords().iter().all(|&m| m == T::zero())
            }
        }
    }

    /// Lévy symbol `S(u)`, so that the characteristic function of `L(t)` in direction
    /// `u` is `exp(t S(u))`.
    pub fn symbol(&self, u: &TruncatedVector<T>) -> Result<Complex<T>> {
        if u.dim() != self.dim_u {
            return Err(Error::DimensionMismatch {
                expected: self.dim_u,
                got: u.dim(),
            });
        }
        let mut s = Complex::new(T::zero(), T::zero());
        if let Some(q) = &self.characteristics.gaussian {
            s.re = s.re - q.quadratic_form(u) / T::of(2.0);
        }
        match &self.characteristics.jumps {
            JumpSpec::None => {}
            JumpSpec::AlphaStable { alpha, scale } => {
                let sum = u
                    .coords()
                    .iter()
                    .fold(T::zero(), |acc, &c| acc + c.abs().powf(*alpha));
                s.re = s.re - scale.powf(*alpha) * sum;
            }
            JumpSpec::CompoundPoisson {
                rate,
                jump_mean,
                jump_std,
            } => {
                // r (φ_J(u) - 1) with φ_J(u) = exp(i<m,u> - s²||u||²/2).
                let phase = jump_mean.dot(u);
                let decay = -*jump_std * *jump_std * u.norm_sq() / T::of(2.0);
                let phi = Complex::new(decay, phase).exp();
                s = s + (phi - Complex::new(T::one(), T::zero())) * *rate;
            }
        }
        Ok(s)
    }

    /// Characteristic function `E exp(i <u, L(t)>) = exp(t S(u))` for `t >= 0`.
    pub fn characteristic_function(&self, u: &TruncatedVector<T>, t: T) -> Result<Complex<T>> {
        if t < T::zero() || !t.is_finite() {
            return Err(Error::NegativeTime(t.lossy()));
        }
        let s = self.symbol(u)?;
        Ok((s * t).exp())
    }
}

/// Sampled noise increments `ΔL_i = L(t_{i+1}) - L(t_i)` on a fixed grid: one ω of the
/// noise, shared by every scheme that runs on it.
#[derive(Debug, Clone, PartialEq)]
pub struct NoisePathBundle<T: Real> {
    grid: Arc<TimeGrid<T>>,
    dim_u: usize,
    /// Row-major `n x d_U`.
    increments: Vec<T>,
    seed: u64,
}

impl<T: Real> NoisePathBundle<T> {
    /// Bundle from explicit increments, for replay and tests.
    pub fn from_parts(
        grid: Arc<TimeGrid<T>>,
        dim_u: usize,
        increments: Vec<T>,
        seed: u64,
    ) -> Result<Self> {
        if increments.len() != grid.n_intervals() * dim_u {
            return Err(Error::DimensionMismatch {
                expected: grid.n_intervals() * dim_u,
                got: increments.len(),
            });
        }
        Ok(Self {
            grid,
            dim_u,
            increments,
            seed,
        })
    }

    #[inline]
    pub fn grid(&self) -> &Arc<TimeGrid<T>> {
        &self.grid
    }

    #[inline]
    pub fn dim_u(&self) -> usize {
        self.dim_u
    }

    #[inline]
    pub fn seed(&self) -> u64 {
        self.seed
    }

    #[inline]
    pub fn n_intervals(&self) -> usize {
        self.grid.n_intervals()
    }

    /// Increment of coordinate `k` over the interval `(t_i, t_{i+1}]`.
    #[inline]
    pub fn increment(&self, i: usize, k: usize) -> T {
        self.increments[i * self.dim_u + k]
    }

    /// All coordinate increments over interval `i`.
    #[inline]
    pub fn increment_row(&self, i: usize) -> &[T] {
        &self.increments[i * self.dim_u..(i + 1) * self.dim_u]
    }

    /// Apply an operator `F : U -> H` to the increment over interval `i`,
    /// `F ΔL_i = Σ_k ΔL_i^k F e_k`.
    pub fn apply_operator(&self, f: &HsOperator<T>, i: usize) -> Result<TruncatedVector<T>> {
        if i >= self.n_intervals() {
            return Err(Error::IndexOutOfRange {
                index: i,
                len: self.n_intervals(),
            });
        }
        if f.cols() != self.dim_u {
            return Err(Error::DimensionMismatch {
                expected: self.dim_u,
                got: f.cols(),
            });
        }
        let row = self.increment_row(i);
        let mut out = vec![T::zero(); f.rows()];
        for (r, o) in out.iter_mut().enumerate() {
            let mut acc = T::zero();
            for (k, &x) in row.iter().enumerate() {
                acc = acc + f.entry(r, k) * x;
            }
            *o = acc;
        }
        Ok(TruncatedVector::new(out))
    }

    /// Copy with all increments of interval index `>= from` set to zero; used by
    /// adaptedness (no-look-ahead) checks.
    pub fn zeroed_from(&self, from: usize) -> Self {
        let mut increments = self.increments.clone();
        for i in from..self.n_intervals() {
            for k in 0..self.dim_u {
                increments[i * self.dim_u + k] = T::zero();
            }
        }
        Self {
            grid: Arc::clone(&self.grid),
            dim_u: self.dim_u,
            increments,
            seed: self.seed,
        }
    }
}

/// Sample the increments of one noise path on a grid.
///
/// Deterministic: the result is a pure function of `(model, grid, seed)`.
pub fn sample_bundle<T: Real>(
    model: &NoiseModel<T>,
    grid: &Arc<TimeGrid<T>>,
    seed: u64,
) -> Result<NoisePathBundle<T>> {
    let n = grid.n_intervals();
    let d = model.dim_u();
    let mut increments = vec![T::zero(); n * d];

    if let Some(cov) = &model.characteristics().gaussian {
        if !cov.is_zero() {
            // Standard increments ΔB with Var = Δt per coordinate...
            let std_inc = if grid.is_dyadic_uniform() {
                gaussian_bridge_increments(grid, d, seed)
            } else {
                gaussian_flat_increments(grid, d, seed)
            };
            // ...then correlate rows through the Cholesky factor of Q.
            for i in 0..n {
                let row = cov.correlate(&std_inc[i * d..(i + 1) * d]);
                for k in 0..d {
                    increments[i * d + k] = increments[i * d + k] + row[k];
                }
            }
        }
    }

    match &model.characteristics().jumps {
        JumpSpec::None => {}
        JumpSpec::AlphaStable { alpha, scale } => {
            let a = alpha.lossy();
            let s = scale.lossy();
            for i in 0..n {
                let dt_pow = grid.dt(i).lossy().powf(1.0 / a);
                for k in 0..d {
                    let mut rng = CounterRng::stream(seed, tags::STABLE, &[i as u64, k as u64]);
                    let x = standard_symmetric_stable(a, &mut rng);
                    increments[i * d + k] = increments[i * d + k] + T::of(s * dt_pow * x);
                }
            }
        }
        JumpSpec::CompoundPoisson {
            rate,
            jump_mean,
            jump_std,
        } => {
            add_compound_poisson_increments(
                grid,
                d,
                seed,
                rate.lossy(),
                jump_mean,
                jump_std.lossy(),
                &mut increments,
            );
        }
    }

    NoisePathBundle::from_parts(Arc::clone(grid), d, increments, seed)
}

/// Flat per-interval standard Gaussian increments (Var = Δt), keyed `(seed, i, k)`.
fn gaussian_flat_increments<T: Real>(grid: &TimeGrid<T>, d: usize, seed: u64) -> Vec<T> {
    let n = grid.n_intervals();
    let mut out = vec![T::zero(); n * d];
    for i in 0..n {
        let sqrt_dt = grid.dt(i).lossy().sqrt();
        for k in 0..d {
            let mut rng = CounterRng::stream(seed, tags::GAUSSIAN_FLAT, &[i as u64, k as u64]);
            out[i * d + k] = T::of(rng.standard_normal() * sqrt_dt);
        }
    }
    out
}

/// Dyadic-bridge standard Gaussian increments on a uniform power-of-two grid.
///
/// Each coordinate draws a root increment over `[0, horizon]` and splits it level by
/// level: a parent increment `P` over length `2h` produces children `P/2 ± ξ` with
/// `ξ ~ N(0, h/2)`, keyed by `(seed, coordinate, level, node)`. Doubling the grid under
/// the same seed therefore refines the same path: every coarse increment is the sum of
/// its two children (up to one rounding ulp).
fn gaussian_bridge_increments<T: Real>(grid: &TimeGrid<T>, d: usize, seed: u64) -> Vec<T> {
    let n = grid.n_intervals();
    let horizon = grid.horizon().lossy();
    let levels = n.trailing_zeros() as usize;
    let mut out = vec![T::zero(); n * d];
    for k in 0..d {
        let mut nodes: Vec<f64> = vec![
            CounterRng::stream(seed, tags::GAUSSIAN_ROOT, &[k as u64]).standard_normal()
                * horizon.sqrt(),
        ];
        for level in 0..levels {
            let child_len = horizon / (1u64 << (level + 1)) as f64;
            let half_var = (child_len / 2.0).sqrt();
            let mut next = Vec::with_capacity(nodes.len() * 2);
            for (j, &parent) in nodes.iter().enumerate() {
                let xi = CounterRng::stream(
                    seed,
                    tags::GAUSSIAN_BRIDGE,
                    &[k as u64, level as u64, j as u64],
                )
                .standard_normal()
                    * half_var;
                next.push(parent / 2.0 + xi);
                next.push(parent / 2.0 - xi);
            }
            nodes = next;
        }
        for i in 0..n {
            out[i * d + k] = T::of(nodes[i]);
        }
    }
    out
}

/// Bin the jumps of a compound Poisson path into grid intervals `(t_i, t_{i+1}]`.
///
/// The jump list (count, times, sizes) depends only on `(seed, horizon)`, so bundles on
/// different grids with the same horizon carve up the *same* jumps.
fn add_compound_poisson_increments<T: Real>(
    grid: &TimeGrid<T>,
    d: usize,
    seed: u64,
    rate: f64,
    jump_mean: &TruncatedVector<T>,
    jump_std: f64,
    increments: &mut [T],
) {
    let horizon = grid.horizon().lossy();
    let mut count_rng = CounterRng::stream(seed, tags::CP_COUNT, &[]);
    let poisson = Poisson::new(rate * horizon).expect("validated rate and horizon");
    let n_jumps = poisson.sample(&mut count_rng) as u64;
    let times = grid.times();
    for j in 0..n_jumps {
        let u = CounterRng::stream(seed, tags::CP_TIME, &[j]).uniform_open01();
        let time = T::of(horizon * u);
        // Interval index i with t_i < time <= t_{i+1}.
        let i = times.partition_point(|&t| t < time) - 1;
        if i >= grid.n_intervals() {
            continue; // time beyond the last grid point cannot happen on full horizon
        }
        let mut size_rng = CounterRng::stream(seed, tags::CP_SIZE, &[j]);
        for k in 0..d {
            let size = jump_mean.get(k).lossy() + jump_std * size_rng.standard_normal();
            increments[i * d + k] = increments[i * d + k] + T::of(size);
        }
    }
}

/// Standard symmetric α-stable variate with characteristic function `exp(-|u|^α)`,
/// via the Chambers–Mallows–Stuck transform.
pub fn standard_symmetric_stable(alpha: f64, rng: &mut CounterRng) -> f64 {
    debug_assert!(alpha > 0.0 && alpha < 2.0);
    let v = std::f64::consts::PI * (rng.uniform_open01() - 0.5);
    let w = rng.standard_exponential();
    if (alpha - 1.0).abs() < 1e-12 {
        // Cauchy limit of the transform.
        return v.tan();
    }
    let t = (alpha * v).sin() / v.cos().powf(1.0 / alpha);
    let s = ((1.0 - alpha) * v).cos() / w;
    t * s.powf((1.0 - alpha) / alpha)
}

/// Constant `c(α, σ)` in the stable jump part of `ζ_L`:
/// `∫_R (x² b² ∧ 1) ν(dx) = c(α, σ) b^α` for the coordinate Lévy measure
/// `ν(dx) = K_α σ^α |x|^{-1-α} dx` normalized so the symbol is `-σ^α |u|^α`.
///
/// Splitting the integral at `|x| = 1/b` gives `c = 4 K_α σ^α / (α (2-α))` with
/// `K_α = α (1-α) / (2 Γ(2-α) cos(π α / 2))`, hence
/// `c(α, σ) = 2 (1-α) σ^α / ((2-α) Γ(2-α) cos(π α / 2))`, limit `4σ/π` at `α = 1`.
pub fn stable_zeta_constant(alpha: f64, sigma: f64) -> f64 {
    debug_assert!(alpha > 0.0 && alpha < 2.0);
    let eps = 1.0 - alpha;
    // cos(πα/2) = sin(πε/2); the ratio ε/sin(πε/2) is smooth through ε = 0.
    let ratio = if eps == 0.0 {
        2.0 / std::f64::consts::PI
    } else {
        eps / (std::f64::consts::PI * eps / 2.0).sin()
    };
    2.0 * sigma.powf(alpha) * ratio
        / ((2.0 - alpha) * statrs::function::gamma::gamma(2.0 - alpha))
}

/// Monte-Carlo aware value of an integrability functional: `std_error` is zero
/// whenever the value comes from a closed form.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FunctionalEstimate<T: Real> {
    pub value: T,
    pub std_error: T,
}

impl<T: Real> FunctionalEstimate<T> {
    fn exact(value: T) -> Self {
        Self {
            value,
            std_error: T::zero(),
        }
    }
}

/// Jump-and-covariance modular `ζ_L(F) = ∫ (||h||² ∧ 1) λ_F(dh) + Tr(F Q F*)`.
///
/// Closed form for the Gaussian and α-stable parts; Monte-Carlo
/// (`r E[||F J||² ∧ 1]`, [`FUNCTIONAL_MC_SAMPLES`] samples) for compound Poisson,
/// with the sampling error reported in `std_error`.
pub fn zeta_l<T: Real>(model: &NoiseModel<T>, f: &HsOperator<T>) -> Result<FunctionalEstimate<T>> {
    if f.cols() != model.dim_u() {
        return Err(Error::DimensionMismatch {
            expected: model.dim_u(),
            got: f.cols(),
        });
    }
    let mut value = T::zero();
    let mut variance = T::zero();

    if let Some(q) = &model.characteristics().gaussian {
        // Tr(F Q F*) = Σ_{r,c} (F Q)_{rc} F_{rc}.
        let fq = f.compose(&q.as_operator());
        let mut tr = T::zero();
        for r in 0..f.rows() {
            for c in 0..f.cols() {
                tr = tr + fq.entry(r, c) * f.entry(r, c);
            }
        }
        value = value + tr;
    }

    match &model.characteristics().jumps {
        JumpSpec::None => {}
        JumpSpec::AlphaStable { alpha, scale } => {
            let c = T::of(stable_zeta_constant(alpha.lossy(), scale.lossy()));
            let mut sum = T::zero();
            for k in 0..f.cols() {
                let b = f.column(k).norm();
                if b > T::zero() {
                    sum = sum + b.powf(*alpha);
                }
            }
            value = value + c * sum;
        }
        JumpSpec::CompoundPoisson {
            rate,
            jump_mean,
            jump_std,
        } => {
            let n = FUNCTIONAL_MC_SAMPLES;
            let mut rng = CounterRng::stream(0, tags::FUNCTIONAL_MC, &[0x5A]);
            let mut sum = T::zero();
            let mut sum_sq = T::zero();
            for _ in 0..n {
                let j = sample_gaussian_jump(jump_mean, jump_std.lossy(), &mut rng);
                let x = f.apply(&j).norm_sq().min(T::one());
                sum = sum + x;
                sum_sq = sum_sq + x * x;
            }
            let nn = T::of_usize(n);
            let mean = sum / nn;
            let var = (sum_sq / nn - mean * mean).max(T::zero());
            value = value + *rate * mean;
            let se = *rate * (var / nn).sqrt();
            variance = variance + se * se;
        }
    }

    Ok(FunctionalEstimate {
        value,
        std_error: variance.sqrt(),
    })
}

fn sample_gaussian_jump<T: Real>(
    mean: &TruncatedVector<T>,
    std: f64,
    rng: &mut CounterRng,
) -> TruncatedVector<T> {
    TruncatedVector::new(
        mean.coords()
            .iter()
            .map(|&m| T::of(m.lossy() + std * rng.standard_normal()))
            .collect(),
    )
}

/// Truncation `θ(h) = h` for `||h|| <= 1`, else `h / ||h||`.
fn truncate_to_unit_ball<T: Real>(v: &TruncatedVector<T>) -> TruncatedVector<T> {
    let n = v.norm();
    if n <= T::one() {
        v.clone()
    } else {
        v.scale(T::one() / n)
    }
}

/// Drift modular `η_L(F) = sup_O ||a_{O F}||` over contractions `O` on the state space.
///
/// For every symmetric model the drift of each pushforward vanishes and the value is
/// exactly zero. For asymmetric compound Poisson models the supremum is *estimated
/// from below*: Monte-Carlo estimates of `||r E[θ(O F J)]||` at the identity and at
/// `n_probe` random contractions. The returned value is a sampled lower bound of the
/// supremum, never an upper bound.
pub fn eta_l<T: Real>(
    model: &NoiseModel<T>,
    f: &HsOperator<T>,
    n_probe: usize,
) -> Result<FunctionalEstimate<T>> {
    if f.cols() != model.dim_u() {
        return Err(Error::DimensionMismatch {
            expected: model.dim_u(),
            got: f.cols(),
        });
    }
    if model.is_symmetric() {
        return Ok(FunctionalEstimate::exact(T::zero()));
    }
    let JumpSpec::CompoundPoisson {
        rate,
        jump_mean,
        jump_std,
    } = &model.characteristics().jumps
    else {
        return Ok(FunctionalEstimate::exact(T::zero()));
    };

    let n = FUNCTIONAL_MC_SAMPLES;
    let mut rng = CounterRng::stream(0, tags::FUNCTIONAL_MC, &[0xE7A]);
    let images: Vec<TruncatedVector<T>> = (0..n)
        .map(|_| {
            let j = sample_gaussian_jump(jump_mean, jump_std.lossy(), &mut rng);
            f.apply(&j)
        })
        .collect();

    let dim_h = f.rows();
    let mut probes = vec![HsOperator::identity(dim_h)];
    for p in 0..n_probe {
        let mut prng = CounterRng::stream(0, tags::CONTRACTION, &[p as u64]);
        probes.push(random_contraction(dim_h, &mut prng));
    }

    let mut best = FunctionalEstimate::exact(T::zero());
    for probe in &probes {
        let mut mean = TruncatedVector::zeros(dim_h);
        let samples: Vec<TruncatedVector<T>> = images
            .iter()
            .map(|fj| truncate_to_unit_ball(&probe.apply(fj)))
            .collect();
        for s in &samples {
            mean.axpy(T::one(), s);
        }
        let nn = T::of_usize(n);
        mean = mean.scale(T::one() / nn);
        let norm = mean.norm();
        let value = *rate * norm;
        if value > best.value {
            // Error of the norm along the mean direction (first-order delta method).
            let se = if norm > T::zero() {
                let dir = mean.scale(T::one() / norm);
                let mut sum_sq = T::zero();
                for s in &samples {
                    let y = s.dot(&dir) - norm;
                    sum_sq = sum_sq + y * y;
                }
                *rate * (sum_sq / (nn * (nn - T::one()))).sqrt()
            } else {
                T::zero()
            };
            best = FunctionalEstimate {
                value,
                std_error: se,
            };
        }
    }
    Ok(best)
}

/// Random contraction: diagonal `D` with entries in `[-1, 1]` composed with a random
/// Householder reflection; operator norm `max_k |D_kk| <= 1` by construction.
pub fn random_contraction<T: Real>(dim: usize, rng: &mut CounterRng) -> HsOperator<T> {
    let v = TruncatedVector::new((0..dim).map(|_| T::of(rng.standard_normal())).collect());
    let h = crate::hilbert::HsOperator::identity(dim).sub(
        &HsOperator::outer(&v, &v).scale(T::of(2.0) / v.norm_sq().max(T::of(1e-300))),
    );
    let diag: Vec<T> = (0..dim)
        .map(|_| T::of(2.0 * rng.uniform_open01() - 1.0))
        .collect();
    HsOperator::diagonal(&diag).compose(&h)
}

/// Path modular `m_L(ψ) = Σ_i [ζ_L(ψ_i) + η_L(ψ_i) + (||ψ_i||²_HS ∧ 1)] Δt_i`
/// (left-point sum; exact for step processes).
///
/// Finiteness of `m_L` is what makes a step process integrable against the noise; on a
/// finite grid with finite pieces the value is always finite, and the function simply
/// reports it together with the propagated Monte-Carlo error.
pub fn m_l<T: Real>(
    model: &NoiseModel<T>,
    psi: &SimpleHsProcess<T>,
) -> Result<FunctionalEstimate<T>> {
    let grid = psi.grid();
    let mut value = T::zero();
    let mut variance = T::zero();
    for i in 0..grid.n_intervals() {
        let piece = psi.piece(i);
        let dt = grid.dt(i);
        let z = zeta_l(model, piece)?;
        let e = eta_l(model, piece, DEFAULT_ETA_PROBES)?;
        let hs = piece.hs_norm_sq().min(T::one());
        value = value + (z.value + e.value + hs) * dt;
        let se = (z.std_error + e.std_error) * dt;
        variance = variance + se * se;
    }
    Ok(FunctionalEstimate {
        value,
        std_error: variance.sqrt(),
    })
}

/// Empirical characteristic function of bundle increments in direction `u`, averaged
/// over all intervals. Requires a uniform grid so the increments are identically
/// distributed; the matching theory value is
/// [`NoiseModel::characteristic_function`] at `t = Δt`.
pub fn empirical_characteristic_function<T: Real>(
    bundle: &NoisePathBundle<T>,
    u: &TruncatedVector<T>,
) -> Result<Complex<T>> {
    if u.dim() != bundle.dim_u() {
        return Err(Error::DimensionMismatch {
            expected: bundle.dim_u(),
            got: u.dim(),
        });
    }
    let grid = bundle.grid();
    let n = grid.n_intervals();
    let dt0 = grid.dt(0);
    for i in 1..n {
        if (grid.dt(i) - dt0).abs() > T::of(1e-12) * dt0 {
            return Err(Error::InvalidParameter(
                "empirical characteristic function needs a uniform grid".into(),
            ));
        }
    }
    let mut acc = Complex::new(T::zero(), T::zero());
    for i in 0..n {
        let mut phase = T::zero();
        for (k, &uk) in u.coords().iter().enumerate() {
            phase = phase + uk * bundle.increment(i, k);
        }
        acc = acc + Complex::new(T::zero(), phase).exp();
    }
    Ok(acc / T::of_usize(n))
}
