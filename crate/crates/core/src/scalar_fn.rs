use alloc::sync::Arc;
use alloc::vec::Vec;
use core::fmt;

use crate::error::{Error, Result};

/// Smoothness hint attached to a [`ScalarFn`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Smoothness {
    /// Piecewise constant, jumps at the listed breakpoints.
    Simple,
    /// Continuously differentiable.
    C1,
}

/// A deterministic real function of time, with the breakpoints at which
/// quadrature must split.
#[derive(Clone)]
pub struct ScalarFn {
    f: Arc<dyn Fn(f64) -> f64 + Send + Sync>,
    smoothness: Smoothness,
    breakpoints: Vec<f64>,
}

impl fmt::Debug for ScalarFn {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("ScalarFn")
            .field("smoothness", &self.smoothness)
            .field("breakpoints", &self.breakpoints)
            .finish_non_exhaustive()
    }
}

impl ScalarFn {
    pub fn new<F>(f: F) -> Self
    where
        F: Fn(f64) -> f64 + Send + Sync + 'static,
    {
        Self {
            f: Arc::new(f),
            smoothness: Smoothness::C1,
            breakpoints: Vec::new(),
        }
    }

    pub fn constant(c: f64) -> Self {
        Self::new(move |_| c)
    }

    /// `t -> t`.
    pub fn ramp() -> Self {
        Self::new(|t| t)
    }

    /// Piecewise constant function equal to `levels[i]` on
    /// `[breaks[i], breaks[i+1])`; the last level extends to the right end.
    pub fn piecewise_constant(breaks: Vec<f64>, levels: Vec<f64>) -> Result<Self> {
        if breaks.len() != levels.len() + 1 || levels.is_empty() {
            return Err(Error::InvalidParameter(
                "piecewise constant function needs one more breakpoint than levels".into(),
            ));
        }
        if breaks.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(Error::InvalidParameter(
                "breakpoints must be strictly increasing".into(),
            ));
        }
        let b = breaks.clone();
        let f = move |t: f64| {
            let idx = b[1..b.len() - 1].partition_point(|&x| x <= t);
            levels[idx]
        };
        Ok(Self {
            f: Arc::new(f),
            smoothness: Smoothness::Simple,
            breakpoints: breaks,
        })
    }

    /// Indicator of `[a, b)`.
    pub fn indicator(a: f64, b: f64) -> Self {
        Self {
            f: Arc::new(move |t| if t >= a && t < b { 1.0 } else { 0.0 }),
            smoothness: Smoothness::Simple,
            breakpoints: alloc::vec![a, b],
        }
    }

    /// Attach breakpoints (kinks or jumps) for quadrature splitting.
    pub fn with_breakpoints(mut self, breakpoints: Vec<f64>) -> Self {
        self.breakpoints = breakpoints;
        self
    }

    #[inline]
    pub fn eval(&self, t: f64) -> f64 {
        (self.f)(t)
    }

    pub fn smoothness(&self) -> Smoothness {
        self.smoothness
    }

    pub fn breakpoints(&self) -> &[f64] {
        &self.breakpoints
    }

    /// Errors if the function is not finite at some of `points`.
    pub fn check_finite(&self, points: &[f64]) -> Result<()> {
        for &t in points {
            let v = self.eval(t);
            if !v.is_finite() {
                return Err(Error::Domain(alloc::format!(
                    "function value {v} at t = {t} is not finite"
                )));
            }
        }
        Ok(())
    }
}
