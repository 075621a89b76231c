//! Constructive weak solutions of `dx = f(t, x) dt + g(t) dB^H`.
//!
//! The unknown `X` solves `F_n(X, a, x0) = 0` on the rescaled time grid
//! `s in [0, T]`, where
//!
//! ```text
//! F_n(X, a, x0)(s) = S_n X(s) - int_0^s a^k f(a^k r, x0 + S_n X(r)) dr
//!                    - int_0^s a^{Hk} g(a^k r) dB^H_r.
//! ```
//!
//! Given a root `G` at `a = epsilon`, `x(t) = x0 + S_n G(t / epsilon^k)`
//! solves the original equation on `[0, epsilon^k T]` against the rescaled
//! fBm `B~(epsilon^k s) = epsilon^{kH} B(s)`.

use alloc::format;
use alloc::sync::Arc;
use alloc::vec;
use alloc::vec::Vec;

use nalgebra::{DMatrix, DVector};
#[allow(unused_imports)]
use num_traits::Float;
use rand::Rng;

use crate::error::{check_dim, Error, Result};
use crate::grid::TimeGrid;
use crate::hilbert::{HilbertFbm, OperatorFn};
use crate::hurst::HurstParam;
use crate::rng::{fill_normal, RngStream};
use crate::scalar_fn::ScalarFn;

/// The drift `f(t, x)` with optional closed-form derivatives.
pub trait Drift: Send + Sync {
    fn dim(&self) -> usize;

    fn eval(&self, t: f64, x: &DVector<f64>) -> DVector<f64>;

    /// `d/dt f(t, x)`.
    fn time_derivative(&self, _t: f64, _x: &DVector<f64>) -> Option<DVector<f64>> {
        None
    }

    /// `d/dx f(t, x)` as a matrix.
    fn jacobian(&self, _t: f64, _x: &DVector<f64>) -> Option<DMatrix<f64>> {
        None
    }

    /// `d/dx f(t, x) v`.
    fn jacobian_action(&self, t: f64, x: &DVector<f64>, v: &DVector<f64>) -> Option<DVector<f64>> {
        self.jacobian(t, x).map(|j| j * v)
    }

    /// The function `phi` of the growth conditions.
    fn growth_phi(&self) -> &ScalarFn;
}

/// `f(t, x) = A x`.
#[derive(Debug, Clone)]
pub struct LinearDrift {
    matrix: DMatrix<f64>,
    phi: ScalarFn,
}

impl LinearDrift {
    /// Uses the constant `phi = max(1, ||A||_2)`.
    pub fn new(matrix: DMatrix<f64>) -> Result<Self> {
        if !matrix.is_square() {
            return Err(Error::Dimension {
                expected: matrix.nrows(),
                found: matrix.ncols(),
            });
        }
        let norm = matrix.clone().singular_values().max();
        Ok(Self {
            matrix,
            phi: ScalarFn::constant(norm.max(1.0)),
        })
    }

    pub fn with_phi(mut self, phi: ScalarFn) -> Self {
        self.phi = phi;
        self
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.matrix
    }
}

impl Drift for LinearDrift {
    fn dim(&self) -> usize {
        self.matrix.nrows()
    }

    fn eval(&self, _t: f64, x: &DVector<f64>) -> DVector<f64> {
        &self.matrix * x
    }

    fn time_derivative(&self, _t: f64, _x: &DVector<f64>) -> Option<DVector<f64>> {
        Some(DVector::zeros(self.dim()))
    }

    fn jacobian(&self, _t: f64, _x: &DVector<f64>) -> Option<DMatrix<f64>> {
        Some(self.matrix.clone())
    }

    fn jacobian_action(&self, _t: f64, _x: &DVector<f64>, v: &DVector<f64>) -> Option<DVector<f64>> {
        Some(&self.matrix * v)
    }

    fn growth_phi(&self) -> &ScalarFn {
        &self.phi
    }
}

type VecFn = Arc<dyn Fn(f64, &DVector<f64>) -> DVector<f64> + Send + Sync>;
type MatFn = Arc<dyn Fn(f64, &DVector<f64>) -> DMatrix<f64> + Send + Sync>;

/// A drift given by closures.
#[derive(Clone)]
pub struct DriftClosure {
    dim: usize,
    f: VecFn,
    dt: Option<VecFn>,
    dx: Option<MatFn>,
    phi: ScalarFn,
}

impl core::fmt::Debug for DriftClosure {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        f.debug_struct("DriftClosure")
            .field("dim", &self.dim)
            .field("has_dt", &self.dt.is_some())
            .field("has_dx", &self.dx.is_some())
            .finish()
    }
}

impl DriftClosure {
    pub fn new<F>(dim: usize, phi: ScalarFn, f: F) -> Self
    where
        F: Fn(f64, &DVector<f64>) -> DVector<f64> + Send + Sync + 'static,
    {
        Self {
            dim,
            f: Arc::new(f),
            dt: None,
            dx: None,
            phi,
        }
    }

    pub fn with_time_derivative<F>(mut self, dt: F) -> Self
    where
        F: Fn(f64, &DVector<f64>) -> DVector<f64> + Send + Sync + 'static,
    {
        self.dt = Some(Arc::new(dt));
        self
    }

    pub fn with_jacobian<F>(mut self, dx: F) -> Self
    where
        F: Fn(f64, &DVector<f64>) -> DMatrix<f64> + Send + Sync + 'static,
    {
        self.dx = Some(Arc::new(dx));
        self
    }
}

impl Drift for DriftClosure {
    fn dim(&self) -> usize {
        self.dim
    }

    fn eval(&self, t: f64, x: &DVector<f64>) -> DVector<f64> {
        (self.f)(t, x)
    }

    fn time_derivative(&self, t: f64, x: &DVector<f64>) -> Option<DVector<f64>> {
        self.dt.as_ref().map(|d| d(t, x))
    }

    fn jacobian(&self, t: f64, x: &DVector<f64>) -> Option<DMatrix<f64>> {
        self.dx.as_ref().map(|d| d(t, x))
    }

    fn growth_phi(&self) -> &ScalarFn {
        &self.phi
    }
}

/// Diagonal smoothing operator `S_n` on `N` coordinates: coordinate `j`
/// (from 0) is multiplied by `max(0, 1 - j / (n + 1))`.
#[derive(Debug, Clone, PartialEq)]
pub struct SmoothingFamily {
    index: usize,
    factors: DVector<f64>,
    inverse: DVector<f64>,
    defect: f64,
}

impl SmoothingFamily {
    /// Requires `||S_n - I|| < 1` so that the Neumann series for `S_n^{-1}`
    /// converges, i.e. `n >= N - 1`.
    pub fn taper(index: usize, dim: usize) -> Result<Self> {
        if dim == 0 {
            return Err(Error::InvalidParameter(
                "smoothing needs a positive dimension".into(),
            ));
        }
        let factors = DVector::from_fn(dim, |j, _| (1.0 - j as f64 / (index as f64 + 1.0)).max(0.0));
        Self::from_factors(index, factors)
    }

    /// `S_n = I`.
    pub fn identity(dim: usize) -> Self {
        Self::from_factors(usize::MAX, DVector::from_element(dim, 1.0)).expect("identity has zero defect")
    }

    fn from_factors(index: usize, factors: DVector<f64>) -> Result<Self> {
        let defect = factors.iter().map(|f| (1.0 - f).abs()).fold(0.0, f64::max);
        if !(defect < 1.0) {
            return Err(Error::InvalidParameter(format!(
                "||S_n - I|| = {defect} is not below 1; increase the smoothing index"
            )));
        }
        // S^{-1} = sum_m (I - S)^m, summed until the terms stop mattering
        let inverse = factors.map(|f| {
            let d = 1.0 - f;
            let (mut sum, mut term) = (0.0, 1.0);
            while term.abs() > 1e-17 * sum.abs().max(1.0) {
                sum += term;
                term *= d;
            }
            sum
        });
        Ok(Self {
            index,
            factors,
            inverse,
            defect,
        })
    }

    pub fn index(&self) -> usize {
        self.index
    }

    pub fn dim(&self) -> usize {
        self.factors.len()
    }

    /// `||S_n - I||` on the truncated space.
    pub fn operator_norm_defect(&self) -> f64 {
        self.defect
    }

    pub fn factors(&self) -> &DVector<f64> {
        &self.factors
    }

    pub fn apply(&self, x: &DVector<f64>) -> DVector<f64> {
        x.component_mul(&self.factors)
    }

    pub fn apply_inverse(&self, x: &DVector<f64>) -> DVector<f64> {
        x.component_mul(&self.inverse)
    }

    fn apply_columns(&self, m: &DMatrix<f64>, inverse: bool) -> DMatrix<f64> {
        let d = if inverse { &self.inverse } else { &self.factors };
        DMatrix::from_fn(m.nrows(), m.ncols(), |i, j| d[i] * m[(i, j)])
    }
}

/// Scaling constants of the construction.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScalingParams {
    epsilon: f64,
    k: u32,
    h: HurstParam,
}

impl ScalingParams {
    /// `0 < epsilon < 1`, `k` positive and even with `k H > 1`.
    pub fn new(epsilon: f64, k: u32, h: HurstParam) -> Result<Self> {
        if !(epsilon > 0.0 && epsilon < 1.0) {
            return Err(Error::InvalidParameter(format!(
                "epsilon must lie in (0, 1), got {epsilon}"
            )));
        }
        if k == 0 || !k.is_multiple_of(2) {
            return Err(Error::InvalidParameter(format!(
                "k must be positive and even, got {k}"
            )));
        }
        if !(k as f64 * h.value() > 1.0) {
            return Err(Error::InvalidParameter(format!(
                "k H must exceed 1, got k = {k}, H = {}",
                h.value()
            )));
        }
        Ok(Self { epsilon, k, h })
    }

    /// Smallest even `k` with `k H > 1`.
    pub fn auto_k(h: HurstParam) -> u32 {
        let mut k = 2;
        while !(k as f64 * h.value() > 1.0) {
            k += 2;
        }
        k
    }

    pub fn with_auto_k(epsilon: f64, h: HurstParam) -> Result<Self> {
        Self::new(epsilon, Self::auto_k(h), h)
    }

    pub fn epsilon(&self) -> f64 {
        self.epsilon
    }

    pub fn k(&self) -> u32 {
        self.k
    }

    pub fn hurst(&self) -> HurstParam {
        self.h
    }

    /// `epsilon^k`, the factor by which the horizon shrinks.
    pub fn time_factor(&self) -> f64 {
        self.epsilon.powi(self.k as i32)
    }
}

/// A discretized `H`-valued path: column `i` holds the coordinates of
/// `X(t_i)`, with `X(0) = 0`; the initial point is kept separately.
#[derive(Debug, Clone, PartialEq)]
pub struct PathProcess {
    grid: TimeGrid,
    coefficients: DMatrix<f64>,
    x0: DVector<f64>,
}

impl PathProcess {
    pub fn new(grid: TimeGrid, coefficients: DMatrix<f64>, x0: DVector<f64>) -> Result<Self> {
        check_dim(grid.len(), coefficients.ncols())?;
        check_dim(x0.len(), coefficients.nrows())?;
        if coefficients.column(0).iter().any(|v| *v != 0.0) {
            return Err(Error::Consistency("X(0) must be exactly zero".into()));
        }
        Ok(Self {
            grid,
            coefficients,
            x0,
        })
    }

    pub fn zeros(grid: TimeGrid, x0: DVector<f64>) -> Self {
        let n = x0.len();
        Self {
            grid,
            coefficients: DMatrix::zeros(n, grid.len()),
            x0,
        }
    }

    pub fn grid(&self) -> &TimeGrid {
        &self.grid
    }

    pub fn coefficients(&self) -> &DMatrix<f64> {
        &self.coefficients
    }

    pub fn x0(&self) -> &DVector<f64> {
        &self.x0
    }

    pub fn dim(&self) -> usize {
        self.x0.len()
    }

    /// `X(t_i)`.
    pub fn column(&self, i: usize) -> DVector<f64> {
        self.coefficients.column(i).into_owned()
    }

    /// `x0 + X(t_i)`.
    pub fn state(&self, i: usize) -> DVector<f64> {
        &self.x0 + self.coefficients.column(i)
    }

    /// `max_i ||X(t_i)||`.
    pub fn sup_norm(&self) -> f64 {
        self.coefficients
            .column_iter()
            .map(|c| c.norm())
            .fold(0.0, f64::max)
    }

    /// Pointwise norms `||X(t_i)||`.
    pub fn norms(&self) -> Vec<f64> {
        self.coefficients.column_iter().map(|c| c.norm()).collect()
    }
}

/// Iteration used to find the root of `F_n`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Method {
    #[default]
    Picard,
    Newton,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolveOptions {
    pub tol: f64,
    pub max_iter: usize,
    pub method: Method,
    /// Relaxation of the Picard update, in `(0, 1]`.
    pub damping: f64,
}

impl Default for SolveOptions {
    fn default() -> Self {
        Self {
            tol: 1e-8,
            max_iter: 200,
            method: Method::Picard,
            damping: 1.0,
        }
    }
}

/// A converged root of `F_n` with its independently re-evaluated residual.
#[derive(Debug, Clone, PartialEq)]
pub struct FixedPoint {
    pub x: PathProcess,
    pub iterations: usize,
    pub residual: f64,
}

/// `F_n` for one noise realization on the rescaled grid.
pub struct WeakProblem<'a> {
    drift: &'a dyn Drift,
    g: &'a dyn OperatorFn,
    noise: &'a HilbertFbm,
    smoothing: &'a SmoothingFamily,
    k: u32,
    h: HurstParam,
    increments: DMatrix<f64>,
}

impl<'a> WeakProblem<'a> {
    pub fn new(
        drift: &'a dyn Drift,
        g: &'a dyn OperatorFn,
        noise: &'a HilbertFbm,
        smoothing: &'a SmoothingFamily,
        k: u32,
    ) -> Result<Self> {
        let n = noise.dim();
        check_dim(n, drift.dim())?;
        check_dim(n, g.dim())?;
        check_dim(n, smoothing.dim())?;
        if k == 0 {
            return Err(Error::InvalidParameter("k must be positive".into()));
        }
        Ok(Self {
            drift,
            g,
            noise,
            smoothing,
            k,
            h: noise.drivers()[0].hurst(),
            increments: noise.increments(),
        })
    }

    pub fn grid(&self) -> &TimeGrid {
        self.noise.grid()
    }

    pub fn dim(&self) -> usize {
        self.noise.dim()
    }

    pub fn smoothing(&self) -> &SmoothingFamily {
        self.smoothing
    }

    fn check_shape(&self, x: &PathProcess) -> Result<()> {
        check_dim(self.dim(), x.dim())?;
        if x.grid() != self.grid() {
            return Err(Error::Consistency("path and noise grids differ".into()));
        }
        Ok(())
    }

    /// Columns `Z_i = sum_{j<i} a^{Hk} g(a^k s_j) (B(s_{j+1}) - B(s_j))`.
    pub fn stochastic_term(&self, a: f64) -> DMatrix<f64> {
        let grid = self.grid();
        let ak = a.powi(self.k as i32);
        let scale = ak.powf(self.h.value());
        let mut z = DMatrix::zeros(self.dim(), grid.len());
        let mut acc = DVector::zeros(self.dim());
        for j in 0..grid.n_steps() {
            let db = self.increments.column(j).into_owned();
            acc += self.g.apply(ak * grid.point(j), &db) * scale;
            z.set_column(j + 1, &acc);
        }
        z
    }

    /// Trapezoid drift integrals `D_i = int_0^{s_i} a^k f(a^k r, x0 + S X(r)) dr`.
    fn drift_term(&self, x: &PathProcess, a: f64) -> DMatrix<f64> {
        let grid = self.grid();
        let ak = a.powi(self.k as i32);
        let half = 0.5 * grid.dt();
        let sx = self.smoothing.apply_columns(&x.coefficients, false);
        let mut d = DMatrix::zeros(self.dim(), grid.len());
        if ak == 0.0 {
            return d;
        }
        let eval = |i: usize| -> DVector<f64> {
            let state = &x.x0 + sx.column(i);
            self.drift.eval(ak * grid.point(i), &state) * ak
        };
        let mut prev = eval(0);
        let mut acc = DVector::zeros(self.dim());
        for i in 1..grid.len() {
            let cur = eval(i);
            acc += (&prev + &cur) * half;
            d.set_column(i, &acc);
            prev = cur;
        }
        d
    }

    /// `F_n(X, a, x0)` with `x0 = X.x0()`.
    pub fn residual(&self, x: &PathProcess, a: f64) -> Result<PathProcess> {
        self.check_shape(x)?;
        let r = self.smoothing.apply_columns(&x.coefficients, false)
            - self.drift_term(x, a)
            - self.stochastic_term(a);
        Ok(PathProcess {
            grid: *self.grid(),
            coefficients: r,
            x0: x.x0.clone(),
        })
    }

    /// Directional derivative `D F_n(X, a, x0)(W, b, y)`.
    ///
    /// All terms of the chain rule are kept, including the derivatives of
    /// the prefactors `a^k` and `a^{Hk}` and the factor `s` that comes with
    /// `d/da f(a^k s, .)`.
    pub fn jacobian_action(
        &self,
        x: &PathProcess,
        a: f64,
        w: &DMatrix<f64>,
        b: f64,
        y: &DVector<f64>,
    ) -> Result<PathProcess> {
        self.check_shape(x)?;
        check_dim(self.grid().len(), w.ncols())?;
        check_dim(self.dim(), w.nrows())?;
        check_dim(self.dim(), y.len())?;
        let grid = self.grid();
        let kf = self.k as f64;
        let ak = a.powi(self.k as i32);
        let dak = if self.k == 1 {
            1.0
        } else {
            kf * a.powi(self.k as i32 - 1)
        };
        let hk = self.h.value() * kf;
        let sx = self.smoothing.apply_columns(&x.coefficients, false);
        let sw = self.smoothing.apply_columns(w, false);

        // integrand of the drift part at s_i
        let point = |i: usize| -> Result<DVector<f64>> {
            let s = grid.point(i);
            let state = &x.x0 + sx.column(i);
            let dir = y + sw.column(i);
            let mut v = if ak == 0.0 {
                DVector::zeros(self.dim())
            } else {
                let jv = self
                    .drift
                    .jacobian_action(ak * s, &state, &dir)
                    .ok_or_else(|| Error::Capability("drift has no Jacobian (d/dx f)".into()))?;
                jv * ak
            };
            if b != 0.0 {
                let f = self.drift.eval(ak * s, &state);
                let ft = self
                    .drift
                    .time_derivative(ak * s, &state)
                    .ok_or_else(|| Error::Capability("drift has no time derivative (d/dt f)".into()))?;
                v += (f * dak + ft * (ak * dak * s)) * b;
            }
            Ok(v)
        };
        let half = 0.5 * grid.dt();
        let mut out = sw.clone();
        let mut prev = point(0)?;
        let mut acc = DVector::zeros(self.dim());
        for i in 1..grid.len() {
            let cur = point(i)?;
            acc += (&prev + &cur) * half;
            let col = out.column(i) - &acc;
            out.set_column(i, &col);
            prev = cur;
        }
        out.set_column(0, &DVector::zeros(self.dim()));
        if b != 0.0 {
            let dscale = if a == 0.0 { 0.0 } else { hk * a.powf(hk - 1.0) };
            let scale = a.powf(hk);
            let mut acc = DVector::zeros(self.dim());
            for j in 0..grid.n_steps() {
                let s = grid.point(j);
                let db = self.increments.column(j).into_owned();
                let mut m = self.g.matrix(ak * s) * dscale;
                if scale != 0.0 && dak != 0.0 {
                    let gt = self
                        .g
                        .time_derivative(ak * s)
                        .ok_or_else(|| Error::Capability("g has no time derivative".into()))?;
                    m += gt * (scale * dak * s);
                }
                acc += m * db * b;
                let col = out.column(j + 1) - &acc;
                out.set_column(j + 1, &col);
            }
        }
        Ok(PathProcess {
            grid: *grid,
            coefficients: out,
            x0: x.x0.clone(),
        })
    }

    /// Root of `F_n(., a, x0)`; the returned residual is re-evaluated
    /// from scratch.
    pub fn solve(&self, a: f64, x0: &DVector<f64>, opts: &SolveOptions) -> Result<FixedPoint> {
        check_dim(self.dim(), x0.len())?;
        if !(opts.tol > 0.0) || opts.max_iter == 0 {
            return Err(Error::InvalidParameter(format!(
                "need tol > 0 and max_iter > 0, got {} and {}",
                opts.tol, opts.max_iter
            )));
        }
        let (x, iterations) = match opts.method {
            Method::Picard => self.picard(a, x0, opts)?,
            Method::Newton => self.newton(a, x0, opts)?,
        };
        let residual = self.residual(&x, a)?.sup_norm();
        if !(residual <= opts.tol) {
            return Err(Error::Convergence {
                iterations,
                residual,
                reason: "re-evaluated residual exceeds the tolerance".into(),
            });
        }
        Ok(FixedPoint {
            x,
            iterations,
            residual,
        })
    }

    fn picard(&self, a: f64, x0: &DVector<f64>, opts: &SolveOptions) -> Result<(PathProcess, usize)> {
        if !(opts.damping > 0.0 && opts.damping <= 1.0) {
            return Err(Error::InvalidParameter(format!(
                "damping must lie in (0, 1], got {}",
                opts.damping
            )));
        }
        let z = self.stochastic_term(a);
        let mut x = PathProcess::zeros(*self.grid(), x0.clone());
        let mut last = f64::INFINITY;
        let mut rising = 0;
        for it in 1..=opts.max_iter {
            let rhs = self.drift_term(&x, a) + &z;
            let next = self.smoothing.apply_columns(&rhs, true);
            // F(X) = S X - (D + Z) = S (X - next)
            let res = self
                .smoothing
                .apply_columns(&(&x.coefficients - &next), false)
                .column_iter()
                .map(|c| c.norm())
                .fold(0.0, f64::max);
            if !res.is_finite() {
                return Err(Error::Convergence {
                    iterations: it,
                    residual: res,
                    reason: "iteration diverged; use a smaller epsilon".into(),
                });
            }
            if res <= opts.tol {
                return Ok((x, it - 1));
            }
            rising = if res > last { rising + 1 } else { 0 };
            if rising >= 5 {
                return Err(Error::Convergence {
                    iterations: it,
                    residual: res,
                    reason: "residual grew over 5 consecutive iterations; the map is not \
                             contracting, use a smaller epsilon"
                        .into(),
                });
            }
            last = res;
            x.coefficients += (next - &x.coefficients) * opts.damping;
            x.coefficients.set_column(0, &DVector::zeros(self.dim()));
        }
        let residual = self.residual(&x, a)?.sup_norm();
        if residual <= opts.tol {
            return Ok((x, opts.max_iter));
        }
        Err(Error::Convergence {
            iterations: opts.max_iter,
            residual,
            reason: "maximum number of iterations reached".into(),
        })
    }

    fn newton(&self, a: f64, x0: &DVector<f64>, opts: &SolveOptions) -> Result<(PathProcess, usize)> {
        let grid = *self.grid();
        let ak = a.powi(self.k as i32);
        let dt = grid.dt();
        let s_diag = DMatrix::from_diagonal(self.smoothing.factors());
        let mut x = PathProcess::zeros(grid, x0.clone());
        let mut last = f64::INFINITY;
        let mut rising = 0;
        for it in 1..=opts.max_iter {
            let f = self.residual(&x, a)?;
            let res = f.sup_norm();
            if !res.is_finite() {
                return Err(Error::Convergence {
                    iterations: it,
                    residual: res,
                    reason: "Newton iteration diverged".into(),
                });
            }
            if res <= opts.tol {
                return Ok((x, it - 1));
            }
            rising = if res > last { rising + 1 } else { 0 };
            if rising >= 5 {
                return Err(Error::Convergence {
                    iterations: it,
                    residual: res,
                    reason: "residual grew over 5 consecutive Newton steps".into(),
                });
            }
            last = res;
            // block forward substitution of D_X F delta = -F
            let sx = self.smoothing.apply_columns(&x.coefficients, false);
            let mut delta = DMatrix::zeros(self.dim(), grid.len());
            let mut acc = DVector::zeros(self.dim());
            for i in 1..grid.len() {
                let state = &x.x0 + sx.column(i);
                let jac = if ak == 0.0 {
                    DMatrix::zeros(self.dim(), self.dim())
                } else {
                    self.drift
                        .jacobian(ak * grid.point(i), &state)
                        .ok_or_else(|| Error::Capability("Newton needs the drift Jacobian".into()))?
                        * ak
                };
                let lhs = &s_diag - &jac * &s_diag * (0.5 * dt);
                let rhs = -f.coefficients.column(i) + &acc;
                let d = lhs.lu().solve(&rhs).ok_or_else(|| Error::Convergence {
                    iterations: it,
                    residual: res,
                    reason: format!("singular Newton block at step {i}"),
                })?;
                acc += &jac * self.smoothing.apply(&d) * dt;
                delta.set_column(i, &d);
            }
            x.coefficients += delta;
        }
        let residual = self.residual(&x, a)?.sup_norm();
        if residual <= opts.tol {
            return Ok((x, opts.max_iter));
        }
        Err(Error::Convergence {
            iterations: opts.max_iter,
            residual,
            reason: "maximum number of Newton steps reached".into(),
        })
    }

    /// `X(t) = S_n G(t / epsilon^k)` on `[0, epsilon^k T]` together with the
    /// rescaled noise `B~(epsilon^k s) = epsilon^{kH} B(s)`.
    pub fn rescale_to_solution(
        &self,
        root: &PathProcess,
        params: &ScalingParams,
    ) -> Result<(PathProcess, HilbertFbm)> {
        self.check_shape(root)?;
        let factor = params.time_factor();
        let grid = self.grid().scaled(factor)?;
        let solution = PathProcess {
            grid,
            coefficients: self.smoothing.apply_columns(&root.coefficients, false),
            x0: root.x0.clone(),
        };
        let noise = self.noise.rescale(params.epsilon(), params.k())?;
        Ok((solution, noise))
    }
}

/// Pointwise residual of `X(t) - int_0^t f(r, x0 + X(r)) dr - int_0^t g dB~`
/// (trapezoid drift, left-point noise) on the solution grid.
pub fn substitution_check(
    solution: &PathProcess,
    drift: &dyn Drift,
    g: &dyn OperatorFn,
    noise: &HilbertFbm,
) -> Result<Vec<f64>> {
    check_dim(solution.dim(), noise.dim())?;
    let grid = solution.grid();
    if noise.grid().n_steps() != grid.n_steps()
        || (noise.grid().horizon() - grid.horizon()).abs() > 1e-12 * grid.horizon()
    {
        return Err(Error::Consistency("solution and noise grids differ".into()));
    }
    let inc = noise.increments();
    let half = 0.5 * grid.dt();
    let f = |i: usize| drift.eval(grid.point(i), &solution.state(i));
    let mut out = vec![0.0; grid.len()];
    out[0] = solution.column(0).norm();
    let mut drift_acc = DVector::zeros(solution.dim());
    let mut noise_acc = DVector::zeros(solution.dim());
    let mut prev = f(0);
    for i in 1..grid.len() {
        let cur = f(i);
        drift_acc += (&prev + &cur) * half;
        noise_acc += g.apply(grid.point(i - 1), &inc.column(i - 1).into_owned());
        out[i] = (solution.column(i) - &drift_acc - &noise_acc).norm();
        prev = cur;
    }
    Ok(out)
}

/// Explicit Euler `x_{i+1} = x_i + f(t_i, x_i) dt + g(t_i) dB~_i` on the
/// noise grid, returned as a path relative to `x0`.
pub fn euler_oracle(
    x0: &DVector<f64>,
    drift: &dyn Drift,
    g: &dyn OperatorFn,
    noise: &HilbertFbm,
) -> Result<PathProcess> {
    check_dim(noise.dim(), x0.len())?;
    check_dim(noise.dim(), drift.dim())?;
    let grid = *noise.grid();
    let inc = noise.increments();
    let mut coeffs = DMatrix::zeros(x0.len(), grid.len());
    let mut x = x0.clone();
    for i in 0..grid.n_steps() {
        let t = grid.point(i);
        x = &x + drift.eval(t, &x) * grid.dt() + g.apply(t, &inc.column(i).into_owned());
        coeffs.set_column(i + 1, &(&x - x0));
    }
    Ok(PathProcess {
        grid,
        coefficients: coeffs,
        x0: x0.clone(),
    })
}

/// `max_i ||x(t_i) - y(t_i)||` for paths on the same grid.
pub fn sup_gap(x: &PathProcess, y: &PathProcess) -> Result<f64> {
    check_dim(x.coefficients.ncols(), y.coefficients.ncols())?;
    check_dim(x.dim(), y.dim())?;
    Ok((0..x.grid.len())
        .map(|i| (x.state(i) - y.state(i)).norm())
        .fold(0.0, f64::max))
}

/// Worst observed ratios of the growth conditions to their bounds.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HypothesisReport {
    /// `(|f| + |d_t f|) / (phi (1 + |x|))`.
    pub drift_ratio: f64,
    /// `|d_x f v|^2 / (phi^2 (1 + |x|^2 + |v|^2))`.
    pub jacobian_ratio: f64,
    /// `(|g v| + |d_t g v|) / (phi |v|)`.
    pub g_ratio: f64,
    /// Magnitude `|x|` at which the worst drift ratio occurred.
    pub worst_magnitude: f64,
    pub probes: usize,
    /// Whether every derivative needed by the bounds was available.
    pub complete: bool,
    pub pass: bool,
}

/// Random probes of the three growth conditions at `|x| in {1, 10, 100}`.
pub fn validate_hypotheses(
    drift: &dyn Drift,
    g: &dyn OperatorFn,
    horizon: f64,
    probes: usize,
    rng: &RngStream,
) -> Result<HypothesisReport> {
    if probes < 100 {
        return Err(Error::InvalidParameter(format!(
            "hypothesis validation needs at least 100 probes, got {probes}"
        )));
    }
    check_dim(drift.dim(), g.dim())?;
    let dim = drift.dim();
    let mut gen = rng.generator();
    let direction = |gen: &mut rand_chacha::ChaCha8Rng| {
        let mut z = vec![0.0; dim];
        loop {
            fill_normal(gen, &mut z);
            let v = DVector::from_column_slice(&z);
            let n = v.norm();
            if n > 0.0 {
                return v / n;
            }
        }
    };
    let phi = drift.growth_phi();
    let mags = [1.0, 10.0, 100.0];
    let mut report = HypothesisReport {
        drift_ratio: 0.0,
        jacobian_ratio: 0.0,
        g_ratio: 0.0,
        worst_magnitude: 0.0,
        probes,
        complete: true,
        pass: false,
    };
    for p in 0..probes {
        let t = gen.random::<f64>() * horizon;
        let r = mags[p % mags.len()];
        let x = direction(&mut gen) * r;
        let v = direction(&mut gen) * mags[(p / mags.len()) % mags.len()];
        let ph = phi.eval(t);
        let f = drift.eval(t, &x).norm();
        let ft = match drift.time_derivative(t, &x) {
            Some(d) => d.norm(),
            None => {
                report.complete = false;
                0.0
            }
        };
        let ratio = (f + ft) / (ph * (1.0 + r));
        if ratio > report.drift_ratio {
            report.drift_ratio = ratio;
            report.worst_magnitude = r;
        }
        match drift.jacobian_action(t, &x, &v) {
            Some(jv) => {
                let ratio = jv.norm_squared() / (ph * ph * (1.0 + r * r + v.norm_squared()));
                report.jacobian_ratio = report.jacobian_ratio.max(ratio);
            }
            None => report.complete = false,
        }
        let gv = g.apply(t, &v).norm();
        let gtv = match g.time_derivative(t) {
            Some(d) => (d * &v).norm(),
            None => {
                report.complete = false;
                0.0
            }
        };
        report.g_ratio = report.g_ratio.max((gv + gtv) / (ph * v.norm()));
    }
    let limit = 1.0 + 1e-9;
    report.pass = report.drift_ratio <= limit && report.jacobian_ratio <= limit && report.g_ratio <= limit;
    Ok(report)
}

/// `max_i ||x(t_i; x0 + delta e_1) - x(t_i; x0)|| / delta` for the same
/// noise, with `x = x0 + S_n G`.
pub fn sensitivity_x0(
    problem: &WeakProblem<'_>,
    params: &ScalingParams,
    x0: &DVector<f64>,
    delta: f64,
    opts: &SolveOptions,
) -> Result<f64> {
    if !(delta > 0.0) {
        return Err(Error::InvalidParameter(format!(
            "delta must be positive, got {delta}"
        )));
    }
    let base = problem.solve(params.epsilon(), x0, opts)?;
    let mut shifted_x0 = x0.clone();
    shifted_x0[0] += delta;
    let shifted = problem.solve(params.epsilon(), &shifted_x0, opts)?;
    let (a, _) = problem.rescale_to_solution(&base.x, params)?;
    let (b, _) = problem.rescale_to_solution(&shifted.x, params)?;
    Ok(sup_gap(&a, &b)? / delta)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn auto_k_is_smallest_even_with_kh_above_one() {
        let k = |h: f64| ScalingParams::auto_k(HurstParam::new(h).unwrap());
        assert_eq!(k(0.7), 2);
        assert_eq!(k(0.5), 4);
        assert_eq!(k(0.3), 4);
        assert_eq!(k(0.26), 4);
        assert_eq!(k(0.2), 6);
        let h = HurstParam::new(0.3).unwrap();
        assert!(ScalingParams::new(0.5, 2, h).is_err());
        assert!(ScalingParams::new(0.5, 3, HurstParam::new(0.7).unwrap()).is_err());
        assert!(ScalingParams::new(1.0, 4, h).is_err());
    }

    #[test]
    fn taper_defect_and_inverse() {
        let s = SmoothingFamily::taper(15, 4).unwrap();
        assert!((s.operator_norm_defect() - 3.0 / 16.0).abs() < 1e-15);
        let x = DVector::from_vec(vec![1.0, -2.0, 3.0, 0.5]);
        assert!((s.apply_inverse(&s.apply(&x)) - &x).norm() < 1e-14);
        let mut last = 1.0;
        for n in [3, 7, 15, 31, 63] {
            let d = SmoothingFamily::taper(n, 4).unwrap().operator_norm_defect();
            assert!(d <= last);
            last = d;
        }
        assert!(SmoothingFamily::taper(2, 4).is_err());
    }

    #[test]
    fn path_process_starts_at_zero() {
        let grid = TimeGrid::new(1.0, 2).unwrap();
        let x0 = DVector::from_vec(vec![1.0]);
        let bad = DMatrix::from_row_slice(1, 3, &[0.1, 0.0, 0.0]);
        assert!(PathProcess::new(grid, bad, x0.clone()).is_err());
        let p = PathProcess::zeros(grid, x0);
        assert_eq!(p.state(1)[0], 1.0);
    }
}
