use alloc::vec::Vec;

#[allow(unused_imports)]
use num_traits::Float;

use crate::error::{Error, Result};

/// Uniform partition `0 = t_0 < t_1 < ... < t_n = T` of `[0, T]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TimeGrid {
    horizon: f64,
    n_steps: usize,
}

impl TimeGrid {
    pub fn new(horizon: f64, n_steps: usize) -> Result<Self> {
        if !(horizon.is_finite() && horizon > 0.0) {
            return Err(Error::InvalidParameter(alloc::format!(
                "grid horizon must be positive and finite, got {horizon}"
            )));
        }
        if n_steps == 0 {
            return Err(Error::InvalidParameter("grid needs at least one step".into()));
        }
        Ok(Self { horizon, n_steps })
    }

    #[inline]
    pub fn horizon(&self) -> f64 {
        self.horizon
    }

    #[inline]
    pub fn n_steps(&self) -> usize {
        self.n_steps
    }

    /// Number of grid points, `n_steps + 1`.
    #[inline]
    pub fn len(&self) -> usize {
        self.n_steps + 1
    }

    #[inline]
    pub fn is_empty(&self) -> bool {
        false
    }

    #[inline]
    pub fn dt(&self) -> f64 {
        self.horizon / self.n_steps as f64
    }

    /// The `i`-th grid point. The last point is exactly `T`.
    #[inline]
    pub fn point(&self, i: usize) -> f64 {
        if i == self.n_steps {
            self.horizon
        } else {
            self.horizon * (i as f64) / (self.n_steps as f64)
        }
    }

    pub fn points(&self) -> Vec<f64> {
        (0..self.len()).map(|i| self.point(i)).collect()
    }

    /// Index of the grid point equal to `t` up to `1e-9 * dt`.
    pub fn index_of(&self, t: f64) -> Option<usize> {
        let x = t / self.dt();
        let i = x.round();
        if i < 0.0 || i > self.n_steps as f64 {
            return None;
        }
        let i = i as usize;
        if (self.point(i) - t).abs() <= 1e-9 * self.dt() {
            Some(i)
        } else {
            None
        }
    }

    /// Same number of steps on the horizon `factor * T`.
    pub fn scaled(&self, factor: f64) -> Result<Self> {
        Self::new(self.horizon * factor, self.n_steps)
    }

    /// Keep every `factor`-th point.
    pub fn coarsen(&self, factor: usize) -> Result<Self> {
        if factor == 0 || !self.n_steps.is_multiple_of(factor) {
            return Err(Error::InvalidParameter(alloc::format!(
                "cannot coarsen {} steps by {factor}",
                self.n_steps
            )));
        }
        Self::new(self.horizon, self.n_steps / factor)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn uniform_and_anchored() {
        let g = TimeGrid::new(2.0, 7).unwrap();
        let p = g.points();
        assert_eq!(p.len(), 8);
        assert_eq!(p[0], 0.0);
        assert_eq!(p[7], 2.0);
        for w in p.windows(2) {
            assert!(w[1] > w[0]);
            assert!((w[1] - w[0] - g.dt()).abs() < 1e-14);
        }
    }

    #[test]
    fn lookup_and_rejects() {
        let g = TimeGrid::new(1.0, 8).unwrap();
        assert_eq!(g.index_of(0.5), Some(4));
        assert_eq!(g.index_of(1.0), Some(8));
        assert_eq!(g.index_of(0.3), None);
        assert_eq!(g.index_of(1.2), None);
        assert!(TimeGrid::new(0.0, 4).is_err());
        assert!(TimeGrid::new(1.0, 0).is_err());
        assert!(g.coarsen(3).is_err());
        assert_eq!(g.coarsen(2).unwrap().n_steps(), 4);
    }
}
