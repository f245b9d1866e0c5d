//! Finite time grids shared by paths, integrands and noise bundles.

use std::sync::Arc;

use crate::error::{Error, Result};
use crate::real::Real;

/// Strictly increasing time grid `0 = t_0 < t_1 < ... < t_n`.
///
/// Grids are immutable and shared via `Arc`; every path, step process and noise bundle
/// holds a reference to the grid it lives on, and binary operations check compatibility
/// with [`TimeGrid::same_grid`].
#[derive(Debug, Clone, PartialEq)]
pub struct TimeGrid<T: Real> {
    times: Vec<T>,
}

impl<T: Real> TimeGrid<T> {
    /// Uniform grid with `n_intervals` intervals on `[0, horizon]`.
    pub fn uniform(horizon: T, n_intervals: usize) -> Result<Arc<Self>> {
        if !(horizon > T::zero()) || !horizon.is_finite() {
            return Err(Error::InvalidParameter(format!(
                "horizon must be positive and finite, got {horizon}"
            )));
        }
        if n_intervals == 0 {
            return Err(Error::InvalidParameter(
                "grid needs at least one interval".into(),
            ));
        }
        let n = T::of_usize(n_intervals);
        let mut times: Vec<T> = (0..=n_intervals)
            .map(|j| horizon * T::of_usize(j) / n)
            .collect();
        // Make the endpoint exact so `horizon` queries never fall off the grid.
        times[n_intervals] = horizon;
        Ok(Arc::new(Self { times }))
    }

    /// Grid from explicit times; must start at 0 and increase strictly.
    pub fn from_times(times: Vec<T>) -> Result<Arc<Self>> {
        if times.len() < 2 {
            return Err(Error::InvalidParameter(
                "grid needs at least two time points".into(),
            ));
        }
        if times[0] != T::zero() {
            return Err(Error::NonMonotoneGrid { index: 0 });
        }
        for j in 0..times.len() {
            if !times[j].is_finite() {
                return Err(Error::NonMonotoneGrid { index: j });
            }
            if j > 0 && !(times[j] > times[j - 1]) {
                return Err(Error::NonMonotoneGrid { index: j });
            }
        }
        Ok(Arc::new(Self { times }))
    }

    /// Number of intervals `n`.
    #[inline]
    pub fn n_intervals(&self) -> usize {
        self.times.len() - 1
    }

    /// Number of grid points `n + 1`.
    #[inline]
    pub fn n_points(&self) -> usize {
        self.times.len()
    }

    /// Grid time `t_j`.
    #[inline]
    pub fn time(&self, j: usize) -> T {
        self.times[j]
    }

    /// All grid times.
    #[inline]
    pub fn times(&self) -> &[T] {
        &self.times
    }

    /// Interval length `t_{i+1} - t_i`.
    #[inline]
    pub fn dt(&self, i: usize) -> T {
        self.times[i + 1] - self.times[i]
    }

    /// Final grid time `t_n`.
    #[inline]
    pub fn horizon(&self) -> T {
        *self.times.last().expect("grid is non-empty")
    }

    /// Largest grid index `j` with `t_j <= t` (within a relative rounding slack).
    pub fn last_index_at_or_before(&self, t: T) -> Result<usize> {
        if t < T::zero() {
            return Err(Error::NegativeTime(t.lossy()));
        }
        let slack = T::of(1e-12) * (T::one() + t.abs());
        let mut idx = 0;
        for (j, &tj) in self.times.iter().enumerate() {
            if tj <= t + slack {
                idx = j;
            } else {
                break;
            }
        }
        Ok(idx)
    }

    /// Whether all intervals have (numerically) the same length.
    pub fn is_uniform(&self) -> bool {
        let n = self.n_intervals();
        let horizon = self.horizon();
        let tol = T::of(1e-12) * horizon;
        (0..=n).all(|j| {
            let ideal = horizon * T::of_usize(j) / T::of_usize(n);
            (self.times[j] - ideal).abs() <= tol
        })
    }

    /// Whether the grid is uniform on `[0, horizon]` with a power-of-two interval count.
    ///
    /// This is the precondition for the dyadic-bridge construction of Gaussian noise,
    /// which couples bundles pathwise across grid-doubling refinements.
    pub fn is_dyadic_uniform(&self) -> bool {
        self.n_intervals().is_power_of_two() && self.is_uniform()
    }

    /// Whether two grid handles describe the same grid (pointer or value equality).
    pub fn same_grid(a: &Arc<Self>, b: &Arc<Self>) -> bool {
        Arc::ptr_eq(a, b) || a.times == b.times
    }

    /// Error unless both handles describe the same grid.
    pub fn ensure_same(a: &Arc<Self>, b: &Arc<Self>) -> Result<()> {
        if Self::same_grid(a, b) {
            Ok(())
        } else {
            Err(Error::GridMismatch)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn uniform_grid_has_exact_endpoints_and_dts() {
        let g = TimeGrid::<f64>::uniform(1.0, 64).unwrap();
        assert_eq!(g.n_intervals(), 64);
        assert_eq!(g.time(0), 0.0);
        assert_eq!(g.horizon(), 1.0);
        let dt = g.dt(10);
        assert!((dt - 1.0 / 64.0).abs() < 1e-15);
    }

    #[test]
    fn from_times_rejects_non_monotone_and_bad_start() {
        assert_eq!(
            TimeGrid::from_times(vec![0.0, 0.5, 0.5]).unwrap_err(),
            Error::NonMonotoneGrid { index: 2 }
        );
        assert_eq!(
            TimeGrid::from_times(vec![0.1, 0.5]).unwrap_err(),
            Error::NonMonotoneGrid { index: 0 }
        );
        assert!(TimeGrid::from_times(vec![0.0]).is_err());
    }

    #[test]
    fn dyadic_detection() {
        assert!(TimeGrid::<f64>::uniform(2.0, 64).unwrap().is_dyadic_uniform());
        assert!(!TimeGrid::<f64>::uniform(2.0, 48).unwrap().is_dyadic_uniform());
        let skew = TimeGrid::from_times(vec![0.0, 0.3, 1.0]).unwrap();
        assert!(!skew.is_dyadic_uniform());
    }

    #[test]
    fn last_index_lookup_handles_interior_and_endpoint_times() {
        let g = TimeGrid::<f64>::uniform(1.0, 4).unwrap();
        assert_eq!(g.last_index_at_or_before(0.0).unwrap(), 0);
        assert_eq!(g.last_index_at_or_before(0.3).unwrap(), 1);
        assert_eq!(g.last_index_at_or_before(0.25).unwrap(), 1);
        assert_eq!(g.last_index_at_or_before(1.0).unwrap(), 4);
        assert_eq!(g.last_index_at_or_before(9.0).unwrap(), 4);
        assert!(g.last_index_at_or_before(-0.1).is_err());
    }

    #[test]
    fn same_grid_by_value_and_pointer() {
        let a = TimeGrid::<f64>::uniform(1.0, 8).unwrap();
        let b = TimeGrid::<f64>::uniform(1.0, 8).unwrap();
        let c = TimeGrid::<f64>::uniform(1.0, 16).unwrap();
        assert!(TimeGrid::same_grid(&a, &a.clone()));
        assert!(TimeGrid::same_grid(&a, &b));
        assert!(!TimeGrid::same_grid(&a, &c));
        assert!(TimeGrid::ensure_same(&a, &c).is_err());
    }
}
