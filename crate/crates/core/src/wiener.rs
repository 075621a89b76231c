//! Wiener integrals of deterministic functions against scalar fBm.

use alloc::format;
use alloc::vec::Vec;

#[allow(unused_imports)]
use num_traits::Float;

use crate::error::{Error, Result};
use crate::grid::TimeGrid;
use crate::hurst::HurstParam;
use crate::kernel::VolterraKernel;
use crate::rng::RngStream;
use crate::sampler::{FbmPath, FbmSampler};
use crate::scalar_fn::ScalarFn;
use crate::stats::Moments;

/// `phi = sum_i a_i 1_{[t_i, t_{i+1})}` with `0 = t_0 < ... < t_m = T`.
#[derive(Debug, Clone, PartialEq)]
pub struct SimpleFunction {
    breakpoints: Vec<f64>,
    levels: Vec<f64>,
}

impl SimpleFunction {
    /// `breakpoints` must start at 0, be strictly increasing and have one
    /// more entry than `levels`.
    pub fn new(breakpoints: Vec<f64>, levels: Vec<f64>) -> Result<Self> {
        if breakpoints.len() != levels.len() + 1 || levels.is_empty() {
            return Err(Error::Dimension {
                expected: levels.len() + 1,
                found: breakpoints.len(),
            });
        }
        if breakpoints[0] != 0.0 {
            return Err(Error::InvalidParameter(format!(
                "simple functions start at 0, got {}",
                breakpoints[0]
            )));
        }
        if breakpoints.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(Error::InvalidParameter(
                "breakpoints must be strictly increasing".into(),
            ));
        }
        if levels.iter().any(|l| !l.is_finite()) {
            return Err(Error::Domain("simple function levels must be finite".into()));
        }
        Ok(Self { breakpoints, levels })
    }

    pub fn constant(c: f64, horizon: f64) -> Result<Self> {
        Self::new(alloc::vec![0.0, horizon], alloc::vec![c])
    }

    /// `1_{[0, b)}` on `[0, T]`.
    pub fn indicator_to(b: f64, horizon: f64) -> Result<Self> {
        if b >= horizon {
            return Self::constant(1.0, horizon);
        }
        Self::new(alloc::vec![0.0, b, horizon], alloc::vec![1.0, 0.0])
    }

    pub fn breakpoints(&self) -> &[f64] {
        &self.breakpoints
    }

    pub fn levels(&self) -> &[f64] {
        &self.levels
    }

    pub fn eval(&self, t: f64) -> f64 {
        let i = self.breakpoints.partition_point(|&b| b <= t);
        match i {
            0 => 0.0,
            i if i > self.levels.len() => 0.0,
            i => self.levels[i - 1],
        }
    }

    /// `alpha * self + beta * other` on the union of breakpoints.
    pub fn combine(&self, alpha: f64, other: &SimpleFunction, beta: f64) -> Result<Self> {
        let end = self.horizon().min(other.horizon());
        let mut pts: Vec<f64> = self
            .breakpoints
            .iter()
            .chain(&other.breakpoints)
            .copied()
            .filter(|&b| b <= end)
            .collect();
        pts.sort_by(f64::total_cmp);
        pts.dedup();
        let levels = pts
            .windows(2)
            .map(|w| alpha * self.eval(w[0]) + beta * other.eval(w[0]))
            .collect();
        Self::new(pts, levels)
    }

    pub fn horizon(&self) -> f64 {
        self.breakpoints[self.breakpoints.len() - 1]
    }

    /// The same function as a [`ScalarFn`] for the inner product.
    pub fn to_scalar_fn(&self) -> ScalarFn {
        ScalarFn::piecewise_constant(self.breakpoints.clone(), self.levels.clone())
            .expect("breakpoints and levels are validated at construction")
    }

    /// Grid indices of the breakpoints.
    pub fn grid_indices(&self, grid: &TimeGrid) -> Result<Vec<usize>> {
        if (self.horizon() - grid.horizon()).abs() > 1e-9 * grid.dt() {
            return Err(Error::Alignment(format!(
                "simple function ends at {}, grid at {}",
                self.horizon(),
                grid.horizon()
            )));
        }
        self.breakpoints
            .iter()
            .map(|&b| {
                grid.index_of(b)
                    .ok_or_else(|| Error::Alignment(format!("breakpoint {b} is not a grid point")))
            })
            .collect()
    }
}

/// `sum_i a_i (B(t_{i+1}) - B(t_i))`.
pub fn integrate_simple(phi: &SimpleFunction, path: &FbmPath) -> Result<f64> {
    let idx = phi.grid_indices(path.grid())?;
    let v = path.values();
    Ok(phi
        .levels
        .iter()
        .zip(idx.windows(2))
        .map(|(a, w)| a * (v[w[1]] - v[w[0]]))
        .sum())
}

/// Left-point sum `sum_i f(t_i) (B(t_{i+1}) - B(t_i))`, i.e. the simple
/// integral of the grid-sampled step approximation of `f`.
pub fn integrate_riemann(f: &ScalarFn, path: &FbmPath) -> Result<f64> {
    let grid = path.grid();
    let v = path.values();
    let mut total = 0.0;
    for i in 0..grid.n_steps() {
        let fi = f.eval(grid.point(i));
        if !fi.is_finite() {
            return Err(Error::Domain(format!(
                "integrand is not finite at t = {}",
                grid.point(i)
            )));
        }
        total += fi * (v[i + 1] - v[i]);
    }
    Ok(total)
}

/// Monte Carlo check of `E[(int f dB)(int g dB)] = <f, g>_H`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IsometryReport {
    pub empirical: f64,
    /// Standard error of `empirical`.
    pub std_error: f64,
    pub target: f64,
    /// `|empirical - target| / max(|target|, 1e-12)`.
    pub defect: f64,
    pub n_paths: u64,
}

impl IsometryReport {
    /// Standard error relative to the target, on the scale of `defect`.
    pub fn relative_se(&self) -> f64 {
        self.std_error / self.target.abs().max(1e-12)
    }

    pub fn from_moments(products: &Moments, target: f64) -> Self {
        let empirical = products.mean();
        Self {
            empirical,
            std_error: products.std_error(),
            target,
            defect: (empirical - target).abs() / target.abs().max(1e-12),
            n_paths: products.count(),
        }
    }
}

/// Product `(int f dB)(int g dB)` for one path drawn from `stream`.
pub fn isometry_product(
    f: &ScalarFn,
    g: &ScalarFn,
    sampler: &dyn FbmSampler,
    stream: &RngStream,
) -> Result<f64> {
    let path = sampler.sample(stream);
    Ok(integrate_riemann(f, &path)? * integrate_riemann(g, &path)?)
}

/// Isometry defect over `n_paths` paths with stream ids `0..n_paths`.
pub fn isometry_defect(
    f: &ScalarFn,
    g: &ScalarFn,
    h: HurstParam,
    n_paths: u64,
    sampler: &dyn FbmSampler,
    seed: u64,
) -> Result<IsometryReport> {
    if n_paths < 1000 {
        return Err(Error::InvalidParameter(format!(
            "isometry check needs at least 1000 paths, got {n_paths}"
        )));
    }
    if sampler.hurst() != h {
        return Err(Error::Consistency(format!(
            "sampler has H = {}, requested {}",
            sampler.hurst().value(),
            h.value()
        )));
    }
    let target = VolterraKernel::new(h).inner_product(f, g, sampler.grid().horizon())?;
    let mut products = Moments::new();
    for p in 0..n_paths {
        products.push(isometry_product(f, g, sampler, &RngStream::new(seed, p))?);
    }
    Ok(IsometryReport::from_moments(&products, target))
}
