//! Adaptive composite Gauss–Legendre quadrature with endpoint-singularity
//! absorbing substitutions.
//!
//! Integrands of the form `(u - a)^ea * (b - u)^eb * smooth(u)` with
//! `ea, eb > -1` are handled by splitting at the midpoint and mapping each
//! half through `u = a + (m - a) w^q`, `q = 1 / (1 + ea)`, which cancels
//! the algebraic endpoint behaviour to leading order. The regularized
//! integrand is then refined by bisection until the two-panel estimate
//! agrees with the one-panel estimate.

use alloc::vec;
use alloc::vec::Vec;
use core::f64::consts::PI;

#[allow(unused_imports)]
use num_traits::Float;

use crate::error::{Error, Result};

/// Gauss–Legendre nodes and weights on `[-1, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct GaussLegendre {
    nodes: Vec<f64>,
    weights: Vec<f64>,
}

impl GaussLegendre {
    pub fn new(order: usize) -> Self {
        assert!(order >= 1, "Gauss-Legendre order must be positive");
        let n = order;
        let mut nodes = vec![0.0; n];
        let mut weights = vec![0.0; n];
        for i in 0..n {
            let mut x = (PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
            let mut dp = 1.0;
            for _ in 0..100 {
                let (p, p_prev) = legendre_pair(n, x);
                dp = n as f64 * (x * p - p_prev) / (x * x - 1.0);
                let step = p / dp;
                x -= step;
                if step.abs() < 1e-16 {
                    break;
                }
            }
            let (p, p_prev) = legendre_pair(n, x);
            if n > 1 {
                dp = n as f64 * (x * p - p_prev) / (x * x - 1.0);
            }
            nodes[i] = x;
            weights[i] = 2.0 / ((1.0 - x * x) * dp * dp);
        }
        Self { nodes, weights }
    }

    pub fn order(&self) -> usize {
        self.nodes.len()
    }

    pub fn nodes(&self) -> &[f64] {
        &self.nodes
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    /// One-panel estimate of `\int_a^b f`, accumulated into `out`.
    fn panel<F: FnMut(f64, &mut [f64])>(
        &self,
        f: &mut F,
        a: f64,
        b: f64,
        scratch: &mut [f64],
        out: &mut [f64],
    ) {
        let half = 0.5 * (b - a);
        let mid = 0.5 * (a + b);
        out.iter_mut().for_each(|o| *o = 0.0);
        for (x, w) in self.nodes.iter().zip(&self.weights) {
            f(mid + half * x, scratch);
            for (o, s) in out.iter_mut().zip(scratch.iter()) {
                *o += w * half * s;
            }
        }
    }
}

fn legendre_pair(n: usize, x: f64) -> (f64, f64) {
    let mut p0 = 1.0;
    let mut p1 = x;
    if n == 0 {
        return (1.0, 0.0);
    }
    for j in 2..=n {
        let j = j as f64;
        let p2 = ((2.0 * j - 1.0) * x * p1 - (j - 1.0) * p0) / j;
        p0 = p1;
        p1 = p2;
    }
    (p1, p0)
}

/// Tolerances of the adaptive integrator.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QuadratureSpec {
    pub order: usize,
    /// Refinement stops once one- and two-panel estimates differ by less
    /// than `abs_tol + rel_tol * |estimate|` (scaled to the panel width).
    pub abs_tol: f64,
    pub rel_tol: f64,
    pub max_depth: u32,
    /// Accumulated error estimate above which the result is an error.
    pub fail_tol: f64,
}

impl Default for QuadratureSpec {
    fn default() -> Self {
        Self {
            order: 10,
            abs_tol: 1e-10,
            rel_tol: 1e-10,
            max_depth: 20,
            fail_tol: 1e-6,
        }
    }
}

impl QuadratureSpec {
    /// Looser tolerances for nested (inner) integrals whose consumers only
    /// need a few significant digits.
    pub fn coarse() -> Self {
        Self {
            abs_tol: 1e-8,
            rel_tol: 1e-8,
            ..Self::default()
        }
    }
}

/// Value and accumulated error estimate of a quadrature.
#[derive(Debug, Clone, PartialEq)]
pub struct QuadResult {
    pub value: Vec<f64>,
    pub error: f64,
    pub converged: bool,
}

/// Adaptive integrator bound to a rule and its tolerances.
#[derive(Debug, Clone, PartialEq)]
pub struct Integrator {
    rule: GaussLegendre,
    spec: QuadratureSpec,
}

impl Default for Integrator {
    fn default() -> Self {
        Self::new(QuadratureSpec::default())
    }
}

struct Adaptive<'a, F> {
    rule: &'a GaussLegendre,
    spec: &'a QuadratureSpec,
    f: F,
    dim: usize,
    scratch: Vec<f64>,
    width: f64,
    scale: f64,
    value: Vec<f64>,
    error: f64,
    converged: bool,
}

impl<F: FnMut(f64, &mut [f64])> Adaptive<'_, F> {
    fn refine(&mut self, a: f64, b: f64, whole: &[f64], depth: u32) {
        let m = 0.5 * (a + b);
        let mut left = vec![0.0; self.dim];
        let mut right = vec![0.0; self.dim];
        self.rule.panel(&mut self.f, a, m, &mut self.scratch, &mut left);
        self.rule.panel(&mut self.f, m, b, &mut self.scratch, &mut right);
        let mut diff = 0.0f64;
        let mut mag = 0.0f64;
        for i in 0..self.dim {
            let two = left[i] + right[i];
            diff = diff.max((two - whole[i]).abs());
            mag = mag.max(two.abs());
        }
        let frac = (b - a) / self.width;
        let tol = (self.spec.abs_tol + self.spec.rel_tol * self.scale.max(mag)) * frac.max(1e-3);
        let finite = left.iter().chain(right.iter()).all(|v| v.is_finite());
        if !finite {
            self.converged = false;
            self.error = f64::INFINITY;
            return;
        }
        if diff <= tol || depth >= self.spec.max_depth {
            if diff > tol {
                self.converged = false;
            }
            for i in 0..self.dim {
                self.value[i] += left[i] + right[i];
            }
            self.error += diff;
            return;
        }
        self.refine(a, m, &left, depth + 1);
        self.refine(m, b, &right, depth + 1);
    }
}

impl Integrator {
    pub fn new(spec: QuadratureSpec) -> Self {
        Self {
            rule: GaussLegendre::new(spec.order),
            spec,
        }
    }

    pub fn spec(&self) -> &QuadratureSpec {
        &self.spec
    }

    /// Adaptive integral of a vector-valued integrand over `[a, b]`.
    pub fn integrate_vec_raw<F: FnMut(f64, &mut [f64])>(
        &self,
        dim: usize,
        a: f64,
        b: f64,
        f: F,
    ) -> QuadResult {
        if b <= a || dim == 0 {
            return QuadResult {
                value: vec![0.0; dim],
                error: 0.0,
                converged: true,
            };
        }
        let mut state = Adaptive {
            rule: &self.rule,
            spec: &self.spec,
            f,
            dim,
            scratch: vec![0.0; dim],
            width: b - a,
            scale: 0.0,
            value: vec![0.0; dim],
            error: 0.0,
            converged: true,
        };
        let mut whole = vec![0.0; dim];
        self.rule
            .panel(&mut state.f, a, b, &mut state.scratch, &mut whole);
        state.scale = whole.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        state.refine(a, b, &whole, 0);
        QuadResult {
            value: state.value,
            error: state.error,
            converged: state.converged,
        }
    }

    /// Vector-valued integral whose integrand behaves like `(u - a)^ea` at
    /// `a` and `(b - u)^eb` at `b`. Exponents `>= 0` need no substitution.
    /// The integrand receives `(u, u - a, b - u, out)` with both distances
    /// computed without cancellation.
    pub fn integrate_singular_vec<F: FnMut(f64, f64, f64, &mut [f64])>(
        &self,
        dim: usize,
        a: f64,
        b: f64,
        ea: f64,
        eb: f64,
        mut f: F,
    ) -> QuadResult {
        if b <= a {
            return QuadResult {
                value: vec![0.0; dim],
                error: 0.0,
                converged: true,
            };
        }
        let qa = power_map(ea);
        let qb = power_map(eb);
        if qa == 1.0 && qb == 1.0 {
            return self.integrate_vec_raw(dim, a, b, |u, out| f(u, u - a, b - u, out));
        }
        let m = 0.5 * (a + b);
        let left = self.integrate_vec_raw(dim, 0.0, 1.0, |w, out| {
            let da = (m - a) * w.powf(qa);
            f(a + da, da, (b - m) + (m - a - da), out);
            let jac = qa * da / w;
            out.iter_mut().for_each(|o| *o *= jac);
        });
        let right = self.integrate_vec_raw(dim, 0.0, 1.0, |w, out| {
            let db = (b - m) * w.powf(qb);
            f(b - db, (m - a) + (b - m - db), db, out);
            let jac = qb * db / w;
            out.iter_mut().for_each(|o| *o *= jac);
        });
        merge(left, right)
    }

    /// Scalar version of [`integrate_singular_vec`](Self::integrate_singular_vec).
    pub fn integrate_singular<F: FnMut(f64, f64, f64) -> f64>(
        &self,
        a: f64,
        b: f64,
        ea: f64,
        eb: f64,
        mut f: F,
    ) -> QuadResult {
        self.integrate_singular_vec(1, a, b, ea, eb, |u, da, db, out| out[0] = f(u, da, db))
    }

    /// `\int_a^b (u - a)^ea (b - u)^eb g(u) du` for smooth `g` and
    /// `ea, eb > -1`. The weight is absorbed exactly by the substitution, so
    /// `g` is never multiplied by an infinite factor. `g` receives
    /// `(u, u - a, b - u)`.
    pub fn integrate_weighted_vec<G: FnMut(f64, f64, f64, &mut [f64])>(
        &self,
        dim: usize,
        a: f64,
        b: f64,
        ea: f64,
        eb: f64,
        mut g: G,
    ) -> QuadResult {
        if b <= a {
            return QuadResult {
                value: vec![0.0; dim],
                error: 0.0,
                converged: true,
            };
        }
        let qa = power_map(ea);
        let qb = power_map(eb);
        let m = 0.5 * (a + b);
        let ha = m - a;
        let hb = b - m;
        let ca = qa * ha.powf(1.0 + ea);
        let cb = qb * hb.powf(1.0 + eb);
        // w^(q (1 + e) - 1) is 1 for e < 0 and w^e otherwise
        let left = self.integrate_vec_raw(dim, 0.0, 1.0, |w, out| {
            let wq = w.powf(qa);
            let da = ha * wq;
            let db = hb + (ha - da);
            g(a + da, da, db, out);
            let fac = ca * w.powf(qa * (1.0 + ea) - 1.0) * db.powf(eb);
            out.iter_mut().for_each(|o| *o *= fac);
        });
        let right = self.integrate_vec_raw(dim, 0.0, 1.0, |w, out| {
            let wq = w.powf(qb);
            let db = hb * wq;
            let da = ha + (hb - db);
            g(b - db, da, db, out);
            let fac = cb * w.powf(qb * (1.0 + eb) - 1.0) * da.powf(ea);
            out.iter_mut().for_each(|o| *o *= fac);
        });
        merge(left, right)
    }

    /// Scalar version of [`integrate_weighted_vec`](Self::integrate_weighted_vec),
    /// checked against `fail_tol`.
    pub fn integrate_weighted<G: FnMut(f64, f64, f64) -> f64>(
        &self,
        what: &str,
        a: f64,
        b: f64,
        ea: f64,
        eb: f64,
        mut g: G,
    ) -> Result<f64> {
        let r = self.integrate_weighted_vec(1, a, b, ea, eb, |u, da, db, out| out[0] = g(u, da, db));
        self.check(what, &r)?;
        Ok(r.value[0])
    }

    /// Scalar integral with asymptotic endpoint exponents, checked against
    /// `fail_tol`.
    pub fn integrate<F: FnMut(f64) -> f64>(
        &self,
        what: &str,
        a: f64,
        b: f64,
        ea: f64,
        eb: f64,
        mut f: F,
    ) -> Result<f64> {
        let r = self.integrate_singular(a, b, ea, eb, |u, _, _| f(u));
        self.check(what, &r)?;
        Ok(r.value[0])
    }

    /// Scalar integral over consecutive pieces `points[0] < points[1] < ...`
    /// with the same endpoint exponents on every piece.
    pub fn integrate_pieces<F: FnMut(f64) -> f64>(
        &self,
        what: &str,
        points: &[f64],
        ea: f64,
        eb: f64,
        mut f: F,
    ) -> Result<f64> {
        let mut total = 0.0;
        for w in points.windows(2) {
            total += self.integrate(what, w[0], w[1], ea, eb, &mut f)?;
        }
        Ok(total)
    }

    pub fn check(&self, what: &str, r: &QuadResult) -> Result<()> {
        let mag = r.value.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        if r.error.is_finite() && r.error <= self.spec.fail_tol * mag.max(1.0) {
            Ok(())
        } else {
            Err(Error::Numerical {
                what: what.into(),
                achieved: r.error,
            })
        }
    }
}

fn merge(left: QuadResult, right: QuadResult) -> QuadResult {
    QuadResult {
        value: left.value.iter().zip(&right.value).map(|(l, r)| l + r).collect(),
        error: left.error + right.error,
        converged: left.converged && right.converged,
    }
}

fn power_map(e: f64) -> f64 {
    if e < 0.0 {
        1.0 / (1.0 + e)
    } else {
        1.0
    }
}

/// Sorted, deduplicated breakpoints of `[a, b]`: `a`, the interior entries
/// of `extra`, then `b`.
pub fn split_points(a: f64, b: f64, extra: &[f64]) -> Vec<f64> {
    let mut pts = Vec::with_capacity(extra.len() + 2);
    pts.push(a);
    let span = b - a;
    for &x in extra {
        if x > a + 1e-12 * span && x < b - 1e-12 * span {
            pts.push(x);
        }
    }
    pts.push(b);
    pts.sort_by(|x, y| x.partial_cmp(y).unwrap_or(core::cmp::Ordering::Equal));
    pts.dedup_by(|x, y| (*x - *y).abs() <= 1e-12 * span.abs().max(1.0));
    pts
}
