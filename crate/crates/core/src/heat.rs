//! Spectral Galerkin form of the additive-noise heat equation
//! `du = [alpha u'' + beta u + gamma u'] dt + dB^H` on the periodic interval
//! `[0, L)`.
//!
//! Coordinates are taken in the real orthonormal Fourier basis
//! `[1, cos(k_1 x), sin(k_1 x), cos(k_2 x), ...]` (suitably normalized), with
//! `k_m = 2 pi m / L`. An even number of coordinates ends on a lone cosine at
//! the Nyquist mode, which carries no advection.

use alloc::format;
use alloc::vec::Vec;

use nalgebra::{DMatrix, DVector};
use num_complex::Complex;
#[allow(unused_imports)]
use num_traits::Float;

use crate::error::{check_dim, Error, Result};
use crate::grid::TimeGrid;
use crate::hilbert::{Basis, HilbertFbm, ScaledIdentity, SpectralOperatorQ};
use crate::rng::RngStream;
use crate::sampler::{FbmSampler, SamplerKind};
use crate::scalar_fn::ScalarFn;
use crate::solver::{LinearDrift, PathProcess, ScalingParams, SmoothingFamily, SolveOptions, WeakProblem};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HeatParams {
    pub alpha: f64,
    pub beta: f64,
    pub gamma: f64,
    pub period: f64,
    pub n_modes: usize,
}

impl Default for HeatParams {
    fn default() -> Self {
        Self {
            alpha: 0.1,
            beta: 0.0,
            gamma: 0.5,
            period: 2.0 * core::f64::consts::PI,
            n_modes: 16,
        }
    }
}

impl HeatParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.alpha >= 0.0 && self.beta >= 0.0) {
            return Err(Error::InvalidParameter(format!(
                "alpha and beta must be non-negative, got {} and {}",
                self.alpha, self.beta
            )));
        }
        if !self.gamma.is_finite() {
            return Err(Error::InvalidParameter("gamma must be finite".into()));
        }
        if !(self.period > 0.0 && self.period.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "period must be positive, got {}",
                self.period
            )));
        }
        if self.n_modes < 2 {
            return Err(Error::InvalidParameter(format!(
                "need at least 2 Fourier coordinates, got {}",
                self.n_modes
            )));
        }
        Ok(())
    }

    /// `k_m = 2 pi m / L`.
    pub fn wavenumber(&self, m: usize) -> f64 {
        2.0 * core::f64::consts::PI * m as f64 / self.period
    }

    /// Highest Fourier index present.
    pub fn max_mode(&self) -> usize {
        self.n_modes / 2
    }

    /// Fourier index carried by coordinate `j`.
    pub fn mode_of(&self, j: usize) -> usize {
        j.div_ceil(2)
    }

    fn is_nyquist(&self, m: usize) -> bool {
        self.n_modes.is_multiple_of(2) && m == self.n_modes / 2
    }

    /// Symbol `mu_m = -alpha k_m^2 + beta + i gamma k_m` of mode `m`
    /// (real at the Nyquist mode).
    pub fn multiplier(&self, m: usize) -> Complex<f64> {
        let k = self.wavenumber(m);
        let re = -self.alpha * k * k + self.beta;
        if m == 0 || self.is_nyquist(m) {
            Complex::new(re, 0.0)
        } else {
            Complex::new(re, self.gamma * k)
        }
    }

    pub fn multipliers(&self) -> Vec<Complex<f64>> {
        (0..=self.max_mode()).map(|m| self.multiplier(m)).collect()
    }
}

/// The linear drift with `2 x 2` blocks `[[p, q], [-q, p]]` for
/// `mu_m = p + i q`, and `phi = max(1, max_m |mu_m|)`.
pub fn assemble_drift(params: &HeatParams) -> Result<LinearDrift> {
    params.validate()?;
    let n = params.n_modes;
    let mut a = DMatrix::zeros(n, n);
    a[(0, 0)] = params.multiplier(0).re;
    let mut j = 1;
    while j < n {
        let mu = params.multiplier(params.mode_of(j));
        a[(j, j)] = mu.re;
        if j + 1 < n {
            a[(j, j + 1)] = mu.im;
            a[(j + 1, j)] = -mu.im;
            a[(j + 1, j + 1)] = mu.re;
        }
        j += 2;
    }
    let bound = params.multipliers().iter().map(|m| m.norm()).fold(1.0, f64::max);
    Ok(LinearDrift::new(a)?.with_phi(ScalarFn::constant(bound)))
}

/// `Q` diagonal in the Fourier basis with `lambda = (1 + k_m^2)^{-p/2}`.
pub fn heat_noise_operator(params: &HeatParams, p: f64) -> Result<SpectralOperatorQ> {
    params.validate()?;
    if !(p > 1.0) {
        return Err(Error::InvalidParameter(format!(
            "noise decay p must exceed 1 for a trace-class Q, got {p}"
        )));
    }
    let eig = (0..params.n_modes)
        .map(|j| (1.0 + params.wavenumber(params.mode_of(j)).powi(2)).powf(-0.5 * p))
        .collect();
    // sum over the missing coordinates, each mode m counted twice
    let last_pair = ((params.n_modes - 1) / 2).max(1) as f64;
    let tail = 2.0 * params.wavenumber(1).powf(-p) * last_pair.powf(1.0 - p) / (p - 1.0);
    SpectralOperatorQ::new(
        eig,
        Basis::Fourier {
            period: params.period,
        },
        tail,
    )
}

/// A real field on `[0, L)` in real Fourier coordinates.
#[derive(Debug, Clone, PartialEq)]
pub struct FourierState {
    period: f64,
    coords: DVector<f64>,
}

impl FourierState {
    pub fn new(period: f64, coords: DVector<f64>) -> Result<Self> {
        if !(period > 0.0) {
            return Err(Error::InvalidParameter(format!(
                "period must be positive, got {period}"
            )));
        }
        if coords.iter().any(|c| !c.is_finite()) {
            return Err(Error::Domain("Fourier coordinates must be finite".into()));
        }
        Ok(Self { period, coords })
    }

    pub fn zeros(params: &HeatParams) -> Self {
        Self {
            period: params.period,
            coords: DVector::zeros(params.n_modes),
        }
    }

    /// Build from complex amplitudes `u_m`, `m = 0..=M`, of
    /// `u(x) = sum_{m in Z} u_m e^{i k_m x} / sqrt(L)` with `u_{-m} = conj(u_m)`.
    /// `u_0` (and `u_M` when `n_coords` is even) must be real.
    pub fn from_complex(period: f64, n_coords: usize, modes: &[Complex<f64>]) -> Result<Self> {
        let max_mode = n_coords / 2;
        check_dim(max_mode + 1, modes.len())?;
        let real_only = |m: usize| m == 0 || (n_coords.is_multiple_of(2) && m == max_mode);
        for (m, u) in modes.iter().enumerate() {
            if real_only(m) && u.im.abs() > 1e-12 * u.norm().max(1.0) {
                return Err(Error::Consistency(format!(
                    "mode {m} must be real for a real field, got imaginary part {}",
                    u.im
                )));
            }
        }
        let mut coords = DVector::zeros(n_coords);
        coords[0] = modes[0].re;
        let root2 = core::f64::consts::SQRT_2;
        for j in 1..n_coords {
            let m = j.div_ceil(2);
            coords[j] = if j % 2 == 1 {
                root2 * modes[m].re
            } else {
                -root2 * modes[m].im
            };
        }
        Self::new(period, coords)
    }

    pub fn period(&self) -> f64 {
        self.period
    }

    pub fn coords(&self) -> &DVector<f64> {
        &self.coords
    }

    pub fn max_mode(&self) -> usize {
        self.coords.len() / 2
    }

    /// `u_m` in the convention of [`FourierState::from_complex`].
    pub fn mode(&self, m: usize) -> Complex<f64> {
        let n = self.coords.len();
        if m == 0 {
            return Complex::new(self.coords[0], 0.0);
        }
        let c = self.coords[2 * m - 1];
        let s = if 2 * m < n { self.coords[2 * m] } else { 0.0 };
        Complex::new(c, -s) / core::f64::consts::SQRT_2
    }

    /// `sum_m (1 + k_m^2)^2 |u_m|^2` over both signs of `m`.
    pub fn h2_energy(&self) -> f64 {
        self.h2_weights().iter().sum()
    }

    fn h2_weights(&self) -> Vec<f64> {
        let two_pi = 2.0 * core::f64::consts::PI;
        self.coords
            .iter()
            .enumerate()
            .map(|(j, c)| {
                let k = two_pi * j.div_ceil(2) as f64 / self.period;
                (1.0 + k * k).powi(2) * c * c
            })
            .collect()
    }

    /// Decay check standing in for `u in H^2`: the top Fourier index may
    /// hold at most 10% of the `H^2` energy.
    pub fn check_h2(&self) -> Result<()> {
        let w = self.h2_weights();
        let total: f64 = w.iter().sum();
        if total == 0.0 {
            return Ok(());
        }
        let top_mode = self.max_mode();
        let top: f64 = w
            .iter()
            .enumerate()
            .filter(|(j, _)| j.div_ceil(2) == top_mode)
            .map(|(_, v)| v)
            .sum();
        if top > 0.1 * total {
            return Err(Error::Domain(format!(
                "initial data does not decay like an H^2 function: the top mode holds {:.3} of \
                 the H^2 energy",
                top / total
            )));
        }
        Ok(())
    }
}

/// `u(x_j)` at `x_j = j L / n_points`.
pub fn physical_snapshot(state: &FourierState, n_points: usize) -> Result<Vec<f64>> {
    let n = state.coords.len();
    if n_points < n {
        return Err(Error::InvalidParameter(format!(
            "need at least {n} sample points, got {n_points}"
        )));
    }
    let l = state.period;
    let c0 = 1.0 / l.sqrt();
    let c1 = (2.0 / l).sqrt();
    let two_pi = 2.0 * core::f64::consts::PI;
    Ok((0..n_points)
        .map(|i| {
            let x = l * i as f64 / n_points as f64;
            let mut u = c0 * state.coords[0];
            for j in 1..n {
                let k = two_pi * j.div_ceil(2) as f64 / l;
                let basis = if j % 2 == 1 { (k * x).cos() } else { (k * x).sin() };
                u += c1 * state.coords[j] * basis;
            }
            u
        })
        .collect())
}

/// One realization of the heat equation on `[0, epsilon^k T]`.
#[derive(Debug, Clone)]
pub struct HeatRun {
    pub solution: PathProcess,
    pub noise: HilbertFbm,
    pub iterations: usize,
    pub residual: f64,
    period: f64,
}

impl HeatRun {
    /// The field at solution grid index `i`.
    pub fn state(&self, i: usize) -> FourierState {
        FourierState {
            period: self.period,
            coords: self.solution.state(i),
        }
    }
}

/// Inputs of [`solve_heat_spde`] that stay fixed across an ensemble.
#[derive(Debug, Clone)]
pub struct HeatSetup {
    pub params: HeatParams,
    pub drift: LinearDrift,
    pub q: SpectralOperatorQ,
    pub scaling: ScalingParams,
    pub grid: TimeGrid,
    pub smoothing: SmoothingFamily,
    pub opts: SolveOptions,
    sampler: crate::sampler::AnySampler,
}

impl HeatSetup {
    /// `grid` is the rescaled grid `s in [0, T]`.
    pub fn new(
        params: HeatParams,
        q: SpectralOperatorQ,
        scaling: ScalingParams,
        grid: TimeGrid,
        smoothing: SmoothingFamily,
        opts: SolveOptions,
    ) -> Result<Self> {
        let drift = assemble_drift(&params)?;
        check_dim(params.n_modes, q.dim())?;
        check_dim(params.n_modes, smoothing.dim())?;
        let kind = if grid.n_steps() >= 2 {
            SamplerKind::Circulant
        } else {
            SamplerKind::Cholesky
        };
        let sampler = kind.build(grid, scaling.hurst())?;
        Ok(Self {
            params,
            drift,
            q,
            scaling,
            grid,
            smoothing,
            opts,
            sampler,
        })
    }

    pub fn sampler(&self) -> &dyn FbmSampler {
        &self.sampler
    }
}

/// Solve for one noise realization drawn from `rng`.
pub fn solve_heat_spde(setup: &HeatSetup, v0: &FourierState, rng: &RngStream) -> Result<HeatRun> {
    check_dim(setup.params.n_modes, v0.coords.len())?;
    v0.check_h2()?;
    let noise = HilbertFbm::sample(&setup.q, &setup.sampler, rng);
    let g = ScaledIdentity::new(setup.params.n_modes, 1.0);
    let problem = WeakProblem::new(&setup.drift, &g, &noise, &setup.smoothing, setup.scaling.k())?;
    let root = problem.solve(setup.scaling.epsilon(), &v0.coords, &setup.opts)?;
    let (solution, tilde) = problem.rescale_to_solution(&root.x, &setup.scaling)?;
    Ok(HeatRun {
        solution,
        noise: tilde,
        iterations: root.iterations,
        residual: root.residual,
        period: setup.params.period,
    })
}

/// `u_m(t) = e^{mu_m t} u_m(0)` for every mode.
pub fn closed_form(params: &HeatParams, v0: &FourierState, t: f64) -> Vec<Complex<f64>> {
    (0..=v0.max_mode())
        .map(|m| (params.multiplier(m) * t).exp() * v0.mode(m))
        .collect()
}
