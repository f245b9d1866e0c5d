//! State vectors, Hilbert–Schmidt operators and diagonal contraction semigroups on
//! finite truncations.
//!
//! States live in the truncation `R^d_H` of the state space, noise directions in the
//! truncation `R^d_U` of the noise space. Operators are dense matrices; at desk scale
//! (`d <= 16`) everything is exact dense arithmetic.

use crate::error::{Error, Result};
use crate::real::Real;

/// Element of a finite truncation of a separable Hilbert space.
///
/// Entries are finite by construction; arithmetic between mismatched dimensions is a
/// programming error and panics like any other shape bug.
#[derive(Debug, Clone, PartialEq)]
pub struct TruncatedVector<T: Real> {
    coords: Vec<T>,
}

impl<T: Real> TruncatedVector<T> {
    /// Vector from coordinates. Panics on non-finite entries.
    pub fn new(coords: Vec<T>) -> Self {
        assert!(
            coords.iter().all(|c| c.is_finite()),
            "vector entries must be finite"
        );
        Self { coords }
    }

    pub(crate) fn from_raw(coords: Vec<T>) -> Self {
        Self { coords }
    }

    pub fn zeros(dim: usize) -> Self {
        Self {
            coords: vec![T::zero(); dim],
        }
    }

    /// `k`-th canonical basis vector of `R^dim`.
    pub fn basis(dim: usize, k: usize) -> Self {
        assert!(k < dim, "basis index {k} out of range for dimension {dim}");
        let mut coords = vec![T::zero(); dim];
        coords[k] = T::one();
        Self { coords }
    }

    #[inline]
    pub fn dim(&self) -> usize {
        self.coords.len()
    }

    #[inline]
    pub fn coords(&self) -> &[T] {
        &self.coords
    }

    #[inline]
    pub fn get(&self, k: usize) -> T {
        self.coords[k]
    }

    pub fn dot(&self, other: &Self) -> T {
        assert_eq!(self.dim(), other.dim(), "dot of mismatched dimensions");
        self.coords
            .iter()
            .zip(&other.coords)
            .fold(T::zero(), |acc, (&a, &b)| acc + a * b)
    }

    #[inline]
    pub fn norm_sq(&self) -> T {
        self.coords.iter().fold(T::zero(), |acc, &a| acc + a * a)
    }

    #[inline]
    pub fn norm(&self) -> T {
        self.norm_sq().sqrt()
    }

    pub fn add(&self, other: &Self) -> Self {
        assert_eq!(self.dim(), other.dim(), "add of mismatched dimensions");
        Self::from_raw(
            self.coords
                .iter()
                .zip(&other.coords)
                .map(|(&a, &b)| a + b)
                .collect(),
        )
    }

    pub fn sub(&self, other: &Self) -> Self {
        assert_eq!(self.dim(), other.dim(), "sub of mismatched dimensions");
        Self::from_raw(
            self.coords
                .iter()
                .zip(&other.coords)
                .map(|(&a, &b)| a - b)
                .collect(),
        )
    }

    pub fn scale(&self, factor: T) -> Self {
        Self::from_raw(self.coords.iter().map(|&a| a * factor).collect())
    }

    /// `self += factor * other`, in place.
    pub fn axpy(&mut self, factor: T, other: &Self) {
        assert_eq!(self.dim(), other.dim(), "axpy of mismatched dimensions");
        for (a, &b) in self.coords.iter_mut().zip(&other.coords) {
            *a = *a + factor * b;
        }
    }

    /// Coordinate-wise multiplication, used to apply diagonal semigroup factors.
    pub fn scale_coords(&mut self, factors: &[T]) {
        assert_eq!(self.dim(), factors.len(), "factor length mismatch");
        for (a, &f) in self.coords.iter_mut().zip(factors) {
            *a = *a * f;
        }
    }

    /// Returning variant of [`scale_coords`](Self::scale_coords).
    pub fn scaled_coords(&self, factors: &[T]) -> Self {
        let mut out = self.clone();
        out.scale_coords(factors);
        out
    }
}

/// Dense Hilbert–Schmidt operator from `R^cols` to `R^rows` (row-major storage).
#[derive(Debug, Clone, PartialEq)]
pub struct HsOperator<T: Real> {
    rows: usize,
    cols: usize,
    entries: Vec<T>,
}

impl<T: Real> HsOperator<T> {
    /// Operator from row-major entries. Panics on length mismatch or non-finite entries.
    pub fn new(rows: usize, cols: usize, entries: Vec<T>) -> Self {
        assert_eq!(entries.len(), rows * cols, "entry count mismatch");
        assert!(
            entries.iter().all(|e| e.is_finite()),
            "operator entries must be finite"
        );
        Self {
            rows,
            cols,
            entries,
        }
    }

    pub(crate) fn from_raw(rows: usize, cols: usize, entries: Vec<T>) -> Self {
        Self {
            rows,
            cols,
            entries,
        }
    }

    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self::from_raw(rows, cols, vec![T::zero(); rows * cols])
    }

    pub fn identity(dim: usize) -> Self {
        let mut op = Self::zeros(dim, dim);
        for k in 0..dim {
            op.entries[k * dim + k] = T::one();
        }
        op
    }

    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> T) -> Self {
        let mut entries = Vec::with_capacity(rows * cols);
        for r in 0..rows {
            for c in 0..cols {
                entries.push(f(r, c));
            }
        }
        Self::new(rows, cols, entries)
    }

    pub fn diagonal(values: &[T]) -> Self {
        let d = values.len();
        let mut op = Self::zeros(d, d);
        for (k, &v) in values.iter().enumerate() {
            op.entries[k * d + k] = v;
        }
        op
    }

    /// Rank-one operator `u ⊗ w : x ↦ ⟨w, x⟩ u`.
    pub fn outer(u: &TruncatedVector<T>, w: &TruncatedVector<T>) -> Self {
        Self::from_fn(u.dim(), w.dim(), |r, c| u.get(r) * w.get(c))
    }

    #[inline]
    pub fn rows(&self) -> usize {
        self.rows
    }

    #[inline]
    pub fn cols(&self) -> usize {
        self.cols
    }

    #[inline]
    pub fn entry(&self, r: usize, c: usize) -> T {
        self.entries[r * self.cols + c]
    }

    pub fn set_entry(&mut self, r: usize, c: usize, value: T) {
        assert!(value.is_finite(), "operator entries must be finite");
        self.entries[r * self.cols + c] = value;
    }

    /// Matrix-vector application.
    pub fn apply(&self, v: &TruncatedVector<T>) -> TruncatedVector<T> {
        assert_eq!(self.cols, v.dim(), "operator applied to wrong dimension");
        let out = (0..self.rows)
            .map(|r| {
                let row = &self.entries[r * self.cols..(r + 1) * self.cols];
                row.iter()
                    .zip(v.coords())
                    .fold(T::zero(), |acc, (&a, &x)| acc + a * x)
            })
            .collect();
        TruncatedVector::from_raw(out)
    }

    /// Adjoint (transpose on truncations).
    pub fn adjoint(&self) -> Self {
        Self::from_fn(self.cols, self.rows, |r, c| self.entry(c, r))
    }

    /// `k`-th column as a vector, i.e. the image of the `k`-th basis direction.
    pub fn column(&self, k: usize) -> TruncatedVector<T> {
        assert!(k < self.cols, "column index out of range");
        TruncatedVector::from_raw((0..self.rows).map(|r| self.entry(r, k)).collect())
    }

    pub fn hs_norm_sq(&self) -> T {
        self.entries.iter().fold(T::zero(), |acc, &a| acc + a * a)
    }

    /// Hilbert–Schmidt (Frobenius) norm.
    pub fn hs_norm(&self) -> T {
        self.hs_norm_sq().sqrt()
    }

    /// Composition `self ∘ other` (matrix product).
    pub fn compose(&self, other: &Self) -> Self {
        assert_eq!(self.cols, other.rows, "composition dimension mismatch");
        let mut out = Self::zeros(self.rows, other.cols);
        for r in 0..self.rows {
            for k in 0..self.cols {
                let a = self.entry(r, k);
                if a == T::zero() {
                    continue;
                }
                for c in 0..other.cols {
                    let cur = out.entries[r * other.cols + c];
                    out.entries[r * other.cols + c] = cur + a * other.entry(k, c);
                }
            }
        }
        out
    }

    pub fn add(&self, other: &Self) -> Self {
        assert_eq!((self.rows, self.cols), (other.rows, other.cols));
        Self::from_raw(
            self.rows,
            self.cols,
            self.entries
                .iter()
                .zip(&other.entries)
                .map(|(&a, &b)| a + b)
                .collect(),
        )
    }

    pub fn sub(&self, other: &Self) -> Self {
        assert_eq!((self.rows, self.cols), (other.rows, other.cols));
        Self::from_raw(
            self.rows,
            self.cols,
            self.entries
                .iter()
                .zip(&other.entries)
                .map(|(&a, &b)| a - b)
                .collect(),
        )
    }

    pub fn scale(&self, factor: T) -> Self {
        Self::from_raw(
            self.rows,
            self.cols,
            self.entries.iter().map(|&a| a * factor).collect(),
        )
    }

    /// Operator-norm estimate by power iteration on `A^T A`.
    ///
    /// Converges from below to the largest singular value; at desk-scale dimensions the
    /// estimate is exact to machine precision for all practical purposes. The estimate
    /// never exceeds [`HsOperator::hs_norm`].
    pub fn operator_norm_estimate(&self) -> T {
        if self.entries.iter().all(|&e| e == T::zero()) {
            return T::zero();
        }
        let mut best = T::zero();
        // A couple of deterministic restarts guard against a start vector orthogonal to
        // the top singular direction.
        for restart in 0..3u64 {
            let mut v = TruncatedVector::from_raw(
                (0..self.cols)
                    .map(|k| {
                        let x = ((k as u64 + 1) * (restart * 7 + 3)) % 17;
                        T::of(1.0 + x as f64 / 17.0)
                    })
                    .collect(),
            );
            let norm = v.norm();
            v = v.scale(T::one() / norm);
            let mut rayleigh = T::zero();
            for _ in 0..200 {
                let av = self.apply(&v);
                let atav = self.adjoint().apply(&av);
                let next_norm = atav.norm();
                if next_norm == T::zero() {
                    break;
                }
                let next = atav.scale(T::one() / next_norm);
                let new_rayleigh = self.apply(&next).norm();
                let done = (new_rayleigh - rayleigh).abs()
                    <= T::of(1e-15) * (T::one() + new_rayleigh.abs());
                rayleigh = new_rayleigh;
                v = next;
                if done {
                    break;
                }
            }
            if rayleigh > best {
                best = rayleigh;
            }
        }
        best
    }
}

/// Diagonal contraction semigroup `S(t) e_k = exp(-λ_k t) e_k` with decay rates `λ_k >= 0`.
///
/// `S(0)` is the identity exactly, `S(t)` never increases norms, and the semigroup law
/// `S(s) S(t) = S(s + t)` holds to floating-point rounding.
#[derive(Debug, Clone, PartialEq)]
pub struct ContractionSemigroup<T: Real> {
    rates: Vec<T>,
}

impl<T: Real> ContractionSemigroup<T> {
    /// Semigroup from decay rates; all rates must be finite and non-negative.
    pub fn new(rates: Vec<T>) -> Result<Self> {
        if rates.is_empty() {
            return Err(Error::InvalidParameter(
                "semigroup needs at least one decay rate".into(),
            ));
        }
        for &r in &rates {
            if !r.is_finite() || r < T::zero() {
                return Err(Error::InvalidParameter(format!(
                    "decay rates must be finite and non-negative, got {r}"
                )));
            }
        }
        Ok(Self { rates })
    }

    #[inline]
    pub fn dim(&self) -> usize {
        self.rates.len()
    }

    #[inline]
    pub fn rates(&self) -> &[T] {
        &self.rates
    }

    /// Coordinate decay factors `exp(-λ_k t)`.
    pub fn factors(&self, t: T) -> Result<Vec<T>> {
        if t < T::zero() || !t.is_finite() {
            return Err(Error::NegativeTime(t.lossy()));
        }
        if t == T::zero() {
            // S(0) = identity, exactly.
            return Ok(vec![T::one(); self.rates.len()]);
        }
        Ok(self.rates.iter().map(|&r| (-r * t).exp()).collect())
    }

    /// Apply `S(t)` to a state vector.
    pub fn apply(&self, t: T, v: &TruncatedVector<T>) -> Result<TruncatedVector<T>> {
        if v.dim() != self.dim() {
            return Err(Error::DimensionMismatch {
                expected: self.dim(),
                got: v.dim(),
            });
        }
        let factors = self.factors(t)?;
        let mut out = v.clone();
        out.scale_coords(&factors);
        Ok(out)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::CounterRng;

    fn random_vector(dim: usize, rng: &mut CounterRng) -> TruncatedVector<f64> {
        TruncatedVector::new((0..dim).map(|_| rng.standard_normal()).collect())
    }

    fn random_operator(rows: usize, cols: usize, rng: &mut CounterRng) -> HsOperator<f64> {
        HsOperator::from_fn(rows, cols, |_, _| rng.standard_normal())
    }

    #[test]
    fn norm_of_simple_vector() {
        let v = TruncatedVector::new(vec![3.0, 4.0]);
        assert_eq!(v.norm(), 5.0);
        assert_eq!(v.norm_sq(), 25.0);
    }

    #[test]
    #[should_panic(expected = "finite")]
    fn non_finite_entries_are_rejected() {
        let _ = TruncatedVector::new(vec![1.0, f64::NAN]);
    }

    #[test]
    fn rank_one_hs_norm_is_product_of_norms() {
        // ||u ⊗ w||_HS = ||u|| ||w||; oracle below recomputes the norm entry by entry.
        let u = TruncatedVector::new(vec![2.0f64, 0.0, 0.0]);
        let w = TruncatedVector::new(vec![0.0, 3.0]);
        let op = HsOperator::outer(&u, &w);
        assert!((op.hs_norm() - 6.0).abs() < 1e-15);

        let mut brute = 0.0;
        for r in 0..op.rows() {
            for c in 0..op.cols() {
                brute += op.entry(r, c) * op.entry(r, c);
            }
        }
        assert!((brute.sqrt() - 6.0).abs() < 1e-15);
    }

    #[test]
    fn adjoint_pairing_identity() {
        // <F u, v>_H == <u, F* v>_U on random operators and vectors.
        let mut rng = CounterRng::from_key(&[0xAD01]);
        for _ in 0..100 {
            let f = random_operator(5, 3, &mut rng);
            let u = random_vector(3, &mut rng);
            let v = random_vector(5, &mut rng);
            let lhs = f.apply(&u).dot(&v);
            let rhs = u.dot(&f.adjoint().apply(&v));
            assert!((lhs - rhs).abs() <= 1e-12 * (1.0 + lhs.abs()));
        }
    }

    #[test]
    fn adjoint_is_an_involution() {
        let mut rng = CounterRng::from_key(&[0xAD02]);
        let f = random_operator(4, 7, &mut rng);
        assert_eq!(f.adjoint().adjoint(), f);
    }

    #[test]
    fn composition_matches_nested_application() {
        let mut rng = CounterRng::from_key(&[0xC0]);
        for _ in 0..50 {
            let a = random_operator(4, 6, &mut rng);
            let b = random_operator(6, 3, &mut rng);
            let x = random_vector(3, &mut rng);
            let direct = a.compose(&b).apply(&x);
            let nested = a.apply(&b.apply(&x));
            assert!(direct.sub(&nested).norm() < 1e-12);
        }
    }

    #[test]
    fn hs_norm_dominates_operator_norm() {
        let mut rng = CounterRng::from_key(&[0x0F]);
        for _ in 0..50 {
            let a = random_operator(6, 6, &mut rng);
            let op = a.operator_norm_estimate();
            assert!(op <= a.hs_norm() * (1.0 + 1e-12));
        }
    }

    #[test]
    fn operator_norm_of_diagonal_and_identity() {
        let id = HsOperator::<f64>::identity(5);
        assert!((id.operator_norm_estimate() - 1.0).abs() < 1e-10);
        let d = HsOperator::diagonal(&[3.0f64, 1.0, 0.5]);
        assert!((d.operator_norm_estimate() - 3.0).abs() < 1e-10);
        assert_eq!(HsOperator::<f64>::zeros(3, 3).operator_norm_estimate(), 0.0);
    }

    #[test]
    fn operator_norm_matches_rayleigh_oracle_on_random_matrices() {
        // Oracle: max of ||A x|| / ||x|| over many random probes never exceeds the
        // power-iteration estimate.
        let mut rng = CounterRng::from_key(&[0x0FF]);
        for _ in 0..20 {
            let a = random_operator(5, 5, &mut rng);
            let est = a.operator_norm_estimate();
            for _ in 0..200 {
                let x = random_vector(5, &mut rng);
                let ratio = a.apply(&x).norm() / x.norm();
                assert!(ratio <= est * (1.0 + 1e-9));
            }
        }
    }

    #[test]
    fn semigroup_identity_at_zero_is_exact() {
        let s = ContractionSemigroup::new(vec![1.0, 2.0, 3.0]).unwrap();
        let v = TruncatedVector::new(vec![0.1, -0.7, 2.5]);
        assert_eq!(s.apply(0.0, &v).unwrap(), v);
    }

    #[test]
    fn semigroup_halves_at_log_two_for_unit_rate() {
        let s = ContractionSemigroup::new(vec![1.0]).unwrap();
        let v = TruncatedVector::new(vec![2.0]);
        let out = s.apply(std::f64::consts::LN_2, &v).unwrap();
        assert!((out.get(0) - 1.0).abs() < 1e-15);
    }

    #[test]
    fn semigroup_composition_law() {
        let s = ContractionSemigroup::new(vec![0.0, 0.5, 2.0, 7.0]).unwrap();
        let mut rng = CounterRng::from_key(&[0x5E]);
        for _ in 0..100 {
            let v = random_vector(4, &mut rng);
            let t = rng.uniform_open01() * 3.0;
            let u = rng.uniform_open01() * 3.0;
            let two_step = s.apply(u, &s.apply(t, &v).unwrap()).unwrap();
            let one_step = s.apply(t + u, &v).unwrap();
            let err = two_step.sub(&one_step).norm();
            assert!(err <= 1e-12 * (1.0 + one_step.norm()));
        }
    }

    #[test]
    fn semigroup_never_increases_norm() {
        let s = ContractionSemigroup::new(vec![0.0, 1.0, 4.0]).unwrap();
        let mut rng = CounterRng::from_key(&[0x5F]);
        for _ in 0..100 {
            let v = random_vector(3, &mut rng);
            let t = rng.uniform_open01() * 10.0;
            assert!(s.apply(t, &v).unwrap().norm() <= v.norm() * (1.0 + 1e-15));
        }
    }

    #[test]
    fn semigroup_rejects_negative_time_and_rates() {
        let s = ContractionSemigroup::new(vec![1.0]).unwrap();
        let v = TruncatedVector::new(vec![1.0]);
        assert_eq!(s.apply(-0.5, &v).unwrap_err(), Error::NegativeTime(-0.5));
        assert!(ContractionSemigroup::new(vec![-1.0]).is_err());
        assert!(ContractionSemigroup::<f64>::new(vec![]).is_err());
    }

    #[test]
    fn generic_scalar_instantiation_compiles_for_f32() {
        let v = TruncatedVector::<f32>::new(vec![3.0, 4.0]);
        assert!((v.norm() - 5.0).abs() < 1e-6);
        let s = ContractionSemigroup::<f32>::new(vec![1.0]).unwrap();
        let out = s.apply(0.0, &TruncatedVector::new(vec![2.0])).unwrap();
        assert_eq!(out.get(0), 2.0);
    }
}
