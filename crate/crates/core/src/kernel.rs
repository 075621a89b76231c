//! Scalar fBm mathematics: covariance, the Volterra kernel `K_H` with its
//! normalization constants, the operator `K_H^*` and the inner product of
//! the reproducing space.

use alloc::format;
use alloc::vec::Vec;

#[allow(unused_imports)]
use num_traits::Float;

use crate::error::{Error, Result};
use crate::hurst::{HurstParam, Regime};
use crate::quad::{split_points, Integrator, QuadratureSpec};
use crate::scalar_fn::{ScalarFn, Smoothness};

/// `R_H(t, s) = (s^{2H} + t^{2H} - |t - s|^{2H}) / 2`.
pub fn covariance(t: f64, s: f64, h: HurstParam) -> Result<f64> {
    if !(t >= 0.0 && s >= 0.0) {
        return Err(Error::Domain(format!(
            "covariance needs non-negative times, got t = {t}, s = {s}"
        )));
    }
    let two_h = 2.0 * h.value();
    Ok(0.5 * (s.powf(two_h) + t.powf(two_h) - (t - s).abs().powf(two_h)))
}

/// Autocovariance of unit-spaced fractional Gaussian noise at lag `k`.
pub fn fgn_autocovariance(k: usize, h: HurstParam) -> f64 {
    let two_h = 2.0 * h.value();
    let k = k as f64;
    0.5 * ((k + 1.0).powf(two_h) + (k - 1.0).abs().powf(two_h) - 2.0 * k.powf(two_h))
}

/// Which definition of `beta(a, b)` enters the normalization constants.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum BetaConvention {
    /// `Gamma(a + b) / (Gamma(a) Gamma(b))`.
    ReciprocalBeta,
    /// The Euler beta function `Gamma(a) Gamma(b) / Gamma(a + b)`.
    #[default]
    StandardBeta,
}

/// Euler beta function evaluated through `ln Gamma`; arguments must be
/// positive.
pub fn euler_beta(a: f64, b: f64) -> f64 {
    (libm::lgamma(a) + libm::lgamma(b) - libm::lgamma(a + b)).exp()
}

impl BetaConvention {
    pub fn beta(self, a: f64, b: f64) -> f64 {
        match self {
            BetaConvention::StandardBeta => euler_beta(a, b),
            BetaConvention::ReciprocalBeta => 1.0 / euler_beta(a, b),
        }
    }
}

/// Normalization constant of the kernel: `b_H` for `H < 1/2`, `c_H` for
/// `H > 1/2`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KernelConstants {
    regime: Regime,
    value: f64,
    convention: BetaConvention,
}

impl KernelConstants {
    pub fn b_h(&self) -> Option<f64> {
        (self.regime == Regime::Rough).then_some(self.value)
    }

    pub fn c_h(&self) -> Option<f64> {
        (self.regime == Regime::Smooth).then_some(self.value)
    }

    pub fn value(&self) -> f64 {
        self.value
    }

    pub fn convention(&self) -> BetaConvention {
        self.convention
    }
}

pub fn kernel_constants(h: HurstParam, convention: BetaConvention) -> Result<KernelConstants> {
    let hv = h.value();
    let value = match h.regime() {
        Regime::Standard => {
            return Err(Error::Regime(
                "H = 1/2 has kernel identically 1 and no normalization constant".into(),
            ))
        }
        Regime::Rough => (2.0 * hv / ((1.0 - 2.0 * hv) * convention.beta(1.0 - 2.0 * hv, hv + 0.5))).sqrt(),
        Regime::Smooth => (hv * (2.0 * hv - 1.0) / convention.beta(2.0 - 2.0 * hv, hv - 0.5)).sqrt(),
    };
    Ok(KernelConstants {
        regime: h.regime(),
        value,
        convention,
    })
}

/// The Volterra kernel `K_H(t, s)` for a fixed Hurst parameter, together
/// with the quadrature used for its defining integral.
#[derive(Debug, Clone)]
pub struct VolterraKernel {
    h: HurstParam,
    constant: f64,
    quad: Integrator,
}

impl VolterraKernel {
    pub fn new(h: HurstParam) -> Self {
        Self::with_convention(h, BetaConvention::default(), QuadratureSpec::default())
            .expect("kernel constants are finite for 0 < H < 1")
    }

    pub fn with_convention(h: HurstParam, convention: BetaConvention, spec: QuadratureSpec) -> Result<Self> {
        let constant = match h.regime() {
            Regime::Standard => 1.0,
            _ => kernel_constants(h, convention)?.value(),
        };
        if !constant.is_finite() || constant <= 0.0 {
            return Err(Error::Numerical {
                what: format!("kernel constant for H = {}", h.value()),
                achieved: constant,
            });
        }
        Ok(Self {
            h,
            constant,
            quad: Integrator::new(spec),
        })
    }

    pub fn hurst(&self) -> HurstParam {
        self.h
    }

    pub fn integrator(&self) -> &Integrator {
        &self.quad
    }

    fn check_order(t: f64, s: f64) -> Result<()> {
        if s > 0.0 && s < t && t.is_finite() {
            Ok(())
        } else {
            Err(Error::Domain(format!(
                "kernel is defined for 0 < s < t only, got t = {t}, s = {s}"
            )))
        }
    }

    /// `J(x) = \int_x^1 (1 - v)^{p - 1} v^{-2H} dv` for `0 < x < 1`.
    ///
    /// With `v = s / u` the kernel integrals become
    /// `\int_s^t (u - s)^{p - 1} u^{e} du = s^{2H - 1} J(s / t)` where
    /// `p + e = 2H - 1`. The piece below `1/2` is taken in `y = ln v`, which
    /// keeps tiny `x` well conditioned.
    fn tail_integral(&self, x: f64, one_minus_x: f64, p: f64) -> Result<f64> {
        let q = -2.0 * self.h.value();
        if one_minus_x < 1e-10 {
            return Ok(x.powf(q) * one_minus_x.powf(p) / p);
        }
        let split = x.max(0.5);
        let mut total =
            self.quad
                .integrate_weighted("kernel integral", split, 1.0, 0.0, p - 1.0, |v, _, _| v.powf(q))?;
        if x < 0.5 {
            let lower = self.quad.integrate_vec_raw(1, x.ln(), 0.5f64.ln(), |y, out| {
                let v = y.exp();
                out[0] = (1.0 - v).powf(p - 1.0) * (y * (1.0 + q)).exp();
            });
            self.quad.check("kernel integral", &lower)?;
            total += lower.value[0];
        }
        Ok(total)
    }

    /// `K_H(t, s)` for `0 < s < t`.
    pub fn eval(&self, t: f64, s: f64) -> Result<f64> {
        Self::check_order(t, s)?;
        self.eval_gap(t, s, t - s)
    }

    /// `K_H(t, s)` with `gap = t - s` supplied by the caller.
    pub(crate) fn eval_gap(&self, t: f64, s: f64, gap: f64) -> Result<f64> {
        if !(gap > 0.0) {
            return Err(Error::Domain(format!("kernel needs s < t, got gap {gap}")));
        }
        let a = self.h.offset();
        match self.h.regime() {
            Regime::Standard => Ok(1.0),
            Regime::Smooth => {
                let j = self.tail_integral(s / t, gap / t, a)?;
                Ok(self.constant * s.powf(a) * j)
            }
            Regime::Rough => {
                let lead = (t * gap / s).powf(a);
                let j = self.tail_integral(s / t, gap / t, a + 1.0)?;
                Ok(self.constant * (lead - a * s.powf(a) * j))
            }
        }
    }

    /// Closed-form `\partial_t K_H(t, s)` for `0 < s < t`.
    pub fn dt(&self, t: f64, s: f64) -> Result<f64> {
        Self::check_order(t, s)?;
        Ok(self.dt_gap(t, s, t - s))
    }

    pub(crate) fn dt_gap(&self, t: f64, s: f64, gap: f64) -> f64 {
        let a = self.h.offset();
        match self.h.regime() {
            Regime::Standard => 0.0,
            Regime::Rough => self.constant * a * (t / s).powf(a) * gap.powf(a - 1.0),
            Regime::Smooth => self.constant * s.powf(-a) * gap.powf(a - 1.0) * t.powf(a),
        }
    }

    /// `(1 / (s1 - s0)) \int_{s0}^{s1} K_H(t, u) du` for `0 <= s0 < s1 <= t`.
    ///
    /// Finite even when the cell touches `u = 0` or `u = t`, where the
    /// kernel itself may blow up.
    pub fn cell_average(&self, t: f64, s0: f64, s1: f64) -> Result<f64> {
        if !(s0 >= 0.0 && s0 < s1 && s1 <= t) {
            return Err(Error::Domain(format!(
                "cell [{s0}, {s1}] must lie inside [0, {t}]"
            )));
        }
        if self.h.regime() == Regime::Standard {
            return Ok(1.0);
        }
        let a = self.h.offset();
        let ea = if s0 == 0.0 { -a.abs() } else { 0.0 };
        let eb = if s1 == t && self.h.regime() == Regime::Rough {
            a
        } else {
            0.0
        };
        let head = t - s1;
        let mut failure = None;
        let r = self.quad.integrate_singular(s0, s1, ea, eb, |u, _, db| {
            if !(u > 0.0) {
                return 0.0;
            }
            self.eval_gap(t, u, head + db).unwrap_or_else(|e| {
                failure.get_or_insert(e);
                f64::NAN
            })
        });
        if let Some(e) = failure {
            return Err(e);
        }
        self.quad.check("kernel cell average", &r)?;
        Ok(r.value[0] / (s1 - s0))
    }

    /// `\int_0^{s} K_H(t, u) K_H(s, u) du` for `0 < s <= t`.
    pub fn factorized_covariance(&self, t: f64, s: f64) -> Result<f64> {
        if !(s > 0.0 && s <= t) {
            return Err(Error::Domain(format!(
                "factorization needs 0 < s <= t, got t = {t}, s = {s}"
            )));
        }
        if self.h.regime() == Regime::Standard {
            return Ok(s);
        }
        let a = self.h.offset();
        let at_zero = -(2.0 * a).abs();
        let at_s = match (self.h.regime(), s == t) {
            (Regime::Rough, true) => 2.0 * a,
            (Regime::Rough, false) => a,
            _ => 0.0,
        };
        let outer = Integrator::new(QuadratureSpec::coarse());
        let mut failure = None;
        let r = outer.integrate_singular(0.0, s, at_zero, at_s, |u, _, gap| {
            if !(u > 0.0) {
                return 0.0;
            }
            match (self.eval_gap(t, u, (t - s) + gap), self.eval_gap(s, u, gap)) {
                (Ok(x), Ok(y)) => x * y,
                (Err(e), _) | (_, Err(e)) => {
                    failure.get_or_insert(e);
                    f64::NAN
                }
            }
        });
        if let Some(e) = failure {
            return Err(e);
        }
        outer.check("kernel factorization", &r)?;
        Ok(r.value[0])
    }

    /// `(K_H^* f)(s) = K_H(T, s) f(s) + \int_s^T (f(t) - f(s)) \partial_t K_H(t, s) dt`.
    pub fn khstar_apply(&self, f: &ScalarFn, s: f64, horizon: f64) -> Result<f64> {
        if self.h.regime() != Regime::Rough {
            return Err(Error::Regime(format!(
                "K_H^* in this form needs H < 1/2, got H = {}",
                self.h.value()
            )));
        }
        if !(s > 0.0 && s < horizon) {
            return Err(Error::Domain(format!(
                "K_H^* needs 0 < s < T, got s = {s}, T = {horizon}"
            )));
        }
        let fs = f.eval(s);
        f.check_finite(&[s, horizon])?;
        let head = self.eval(horizon, s)? * fs;
        let pieces = split_points(s, horizon, f.breakpoints());
        if f.smoothness() == Smoothness::Simple {
            // constant on each piece: the tail telescopes into kernel values
            let mut tail = 0.0;
            for w in pieces.windows(2).skip(1) {
                let level = f.eval(0.5 * (w[0] + w[1])) - fs;
                if level != 0.0 {
                    tail += level * (self.eval(w[1], s)? - self.eval(w[0], s)?);
                }
            }
            return Ok(head + tail);
        }
        let a = self.h.offset();
        let mut tail = 0.0;
        for (i, w) in pieces.windows(2).enumerate() {
            let ea = if i == 0 { a } else { 0.0 };
            let offset = w[0] - s;
            let r = self.quad.integrate_singular(w[0], w[1], ea, 0.0, |t, da, _| {
                let diff = f.eval(t) - fs;
                if diff == 0.0 {
                    return 0.0;
                }
                diff * self.dt_gap(t, s, offset + da)
            });
            if !r.value[0].is_finite() {
                return Err(Error::Domain(format!(
                    "K_H^* integrand is not finite on [{}, {}]",
                    w[0], w[1]
                )));
            }
            self.quad.check("K_H^* tail integral", &r)?;
            tail += r.value[0];
        }
        Ok(head + tail)
    }

    /// `<f, g>_H` on `[0, T]`.
    pub fn inner_product(&self, f: &ScalarFn, g: &ScalarFn, horizon: f64) -> Result<f64> {
        let mut breaks: Vec<f64> = f.breakpoints().to_vec();
        breaks.extend_from_slice(g.breakpoints());
        let pieces = split_points(0.0, horizon, &breaks);
        let outer = Integrator::new(QuadratureSpec::coarse());
        match self.h.regime() {
            Regime::Standard => {
                outer.integrate_pieces("L2 product", &pieces, 0.0, 0.0, |t| f.eval(t) * g.eval(t))
            }
            Regime::Smooth => {
                let hv = self.h.value();
                let e = 2.0 * hv - 2.0;
                let f_pieces = split_points(0.0, horizon, f.breakpoints());
                let mut failure = None;
                let mut total = 0.0;
                for w in pieces.windows(2) {
                    let r = outer.integrate_singular(w[0], w[1], 0.0, 0.0, |t, _, _| {
                        let gt = g.eval(t);
                        if gt == 0.0 {
                            return 0.0;
                        }
                        match self.riesz_potential(f, &f_pieces, t, e) {
                            Ok(v) => gt * v,
                            Err(err) => {
                                failure.get_or_insert(err);
                                f64::NAN
                            }
                        }
                    });
                    if let Some(err) = failure.take() {
                        return Err(err);
                    }
                    outer.check("<f,g>_H outer integral", &r)?;
                    total += r.value[0];
                }
                Ok(hv * (2.0 * hv - 1.0) * total)
            }
            Regime::Rough => {
                let e = 2.0 * self.h.offset();
                let mut failure = None;
                let mut total = 0.0;
                for w in pieces.windows(2) {
                    let r = outer.integrate_singular(w[0], w[1], e, e, |s, _, _| {
                        let kf = self.khstar_apply(f, s, horizon);
                        let kg = self.khstar_apply(g, s, horizon);
                        match (kf, kg) {
                            (Ok(x), Ok(y)) => x * y,
                            (Err(err), _) | (_, Err(err)) => {
                                failure.get_or_insert(err);
                                f64::NAN
                            }
                        }
                    });
                    if let Some(err) = failure.take() {
                        return Err(err);
                    }
                    outer.check("<f,g>_H outer integral", &r)?;
                    total += r.value[0];
                }
                Ok(total)
            }
        }
    }

    /// `\int_0^T f(s) |t - s|^{e} ds`, split at `t` and at `f`'s pieces.
    fn riesz_potential(&self, f: &ScalarFn, f_pieces: &[f64], t: f64, e: f64) -> Result<f64> {
        let mut pts: Vec<f64> = f_pieces.to_vec();
        let horizon = *f_pieces.last().unwrap_or(&t);
        pts.push(t);
        let pts = split_points(0.0, horizon, &pts);
        let mut total = 0.0;
        for w in pts.windows(2) {
            let near = |x: f64| (x - t).abs() <= 1e-12 * horizon;
            let v = if near(w[1]) {
                self.quad
                    .integrate_weighted("Riesz potential", w[0], w[1], 0.0, e, |s, _, _| f.eval(s))?
            } else if near(w[0]) {
                self.quad
                    .integrate_weighted("Riesz potential", w[0], w[1], e, 0.0, |s, _, _| f.eval(s))?
            } else {
                self.quad
                    .integrate_weighted("Riesz potential", w[0], w[1], 0.0, 0.0, |s, _, _| {
                        f.eval(s) * (t - s).abs().powf(e)
                    })?
            };
            total += v;
        }
        Ok(total)
    }
}

/// `K_H(t, s)` with explicit constants and quadrature.
pub fn kernel_kh(
    t: f64,
    s: f64,
    h: HurstParam,
    convention: BetaConvention,
    spec: QuadratureSpec,
) -> Result<f64> {
    VolterraKernel::with_convention(h, convention, spec)?.eval(t, s)
}

/// Relative defect `|\int_0^{s} K(t,u) K(s,u) du - R_H(t,s)| / R_H(t,s)`
/// for `0 < s <= t`, under the default beta convention.
pub fn factorization_check(t: f64, s: f64, h: HurstParam) -> Result<f64> {
    factorization_check_with(t, s, h, BetaConvention::default())
}

pub fn factorization_check_with(t: f64, s: f64, h: HurstParam, convention: BetaConvention) -> Result<f64> {
    let (t, s) = if s <= t { (t, s) } else { (s, t) };
    let kernel = VolterraKernel::with_convention(h, convention, QuadratureSpec::default())?;
    let lhs = kernel.factorized_covariance(t, s)?;
    let rhs = covariance(t, s, h)?;
    Ok((lhs - rhs).abs() / rhs)
}

/// `(K_H^* f)(s)` on the horizon of `grid`; requires `H < 1/2`.
pub fn khstar_apply(f: &ScalarFn, s: f64, h: HurstParam, grid: &crate::grid::TimeGrid) -> Result<f64> {
    VolterraKernel::new(h).khstar_apply(f, s, grid.horizon())
}

/// `<f, g>_H` on the horizon of `grid`.
pub fn inner_product_h(
    f: &ScalarFn,
    g: &ScalarFn,
    h: HurstParam,
    grid: &crate::grid::TimeGrid,
) -> Result<f64> {
    VolterraKernel::new(h).inner_product(f, g, grid.horizon())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn hp(h: f64) -> HurstParam {
        HurstParam::new(h).unwrap()
    }

    #[test]
    fn covariance_examples() {
        assert!((covariance(1.0, 1.0, hp(0.3)).unwrap() - 1.0).abs() < 1e-15);
        assert!((covariance(3.0, 2.0, hp(0.5)).unwrap() - 2.0).abs() < 1e-14);
        assert!((covariance(2.0, 1.0, hp(0.75)).unwrap() - 2f64.sqrt()).abs() < 1e-14);
        assert!(covariance(-1.0, 1.0, hp(0.3)).is_err());
    }

    #[test]
    fn constants_reject_brownian_case() {
        assert!(matches!(
            kernel_constants(hp(0.5), BetaConvention::StandardBeta),
            Err(Error::Regime(_))
        ));
        let c = kernel_constants(hp(0.7), BetaConvention::StandardBeta).unwrap();
        assert!(c.c_h().unwrap() > 0.0);
        assert!(c.b_h().is_none());
        let b = kernel_constants(hp(0.3), BetaConvention::ReciprocalBeta).unwrap();
        assert!(b.b_h().unwrap() > 0.0);
    }

    #[test]
    fn kernel_domain() {
        let k = VolterraKernel::new(hp(0.7));
        assert!(k.eval(0.5, 0.5).is_err());
        assert!(k.eval(0.5, 0.0).is_err());
        assert!(k.eval(0.5, 0.7).is_err());
        assert_eq!(VolterraKernel::new(hp(0.5)).eval(1.0, 0.5).unwrap(), 1.0);
    }

    #[test]
    fn brownian_factorization_is_exact() {
        assert!(factorization_check(1.0, 1.0, hp(0.5)).unwrap() < 1e-12);
    }

    #[test]
    fn khstar_needs_rough_regime() {
        let k = VolterraKernel::new(hp(0.7));
        assert!(matches!(
            k.khstar_apply(&ScalarFn::constant(1.0), 0.5, 1.0),
            Err(Error::Regime(_))
        ));
    }

    #[test]
    fn khstar_of_constants() {
        let k = VolterraKernel::new(hp(0.3));
        let one = k.khstar_apply(&ScalarFn::constant(1.0), 0.4, 1.0).unwrap();
        assert!((one - k.eval(1.0, 0.4).unwrap()).abs() < 1e-14);
        let zero = k.khstar_apply(&ScalarFn::constant(0.0), 0.4, 1.0).unwrap();
        assert_eq!(zero, 0.0);
        assert!(k
            .khstar_apply(&ScalarFn::new(|t| 1.0 / (t - 0.9)), 0.4, 1.0)
            .is_err());
    }

    #[test]
    fn inner_product_is_bilinear_at_zero() {
        for h in [0.3, 0.5, 0.7] {
            let k = VolterraKernel::new(hp(h));
            let v = k
                .inner_product(&ScalarFn::constant(1.0), &ScalarFn::constant(0.0), 1.0)
                .unwrap();
            assert_eq!(v, 0.0);
        }
    }
}
