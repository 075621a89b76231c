mod common;

use fbmweak_core::kernel::{
    covariance, factorization_check, factorization_check_with, kernel_constants, kernel_kh, BetaConvention,
};
use fbmweak_core::quad::QuadratureSpec;
use fbmweak_core::{HurstParam, ScalarFn, VolterraKernel};
use nalgebra::DMatrix;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};

fn hp(h: f64) -> HurstParam {
    HurstParam::new(h).unwrap()
}

// Frozen from the tanh-sinh / statrs oracle in tests/common.
const C_H_075: f64 = 2.674111587579976e-1;
const B_H_030: f64 = 7.302829340799227e-1;
const K_1_05_075: f64 = 9.375919636980573e-1;
const K_1_05_030: f64 = 8.730141143386678e-1;
const KSTAR_RAMP_05_030: f64 = 3.385817648658043e-1;

#[test]
fn constants_match_gamma_oracle() {
    let c = kernel_constants(hp(0.75), BetaConvention::StandardBeta).unwrap();
    assert!((c.c_h().unwrap() - C_H_075).abs() < 1e-12);
    let b = kernel_constants(hp(0.3), BetaConvention::StandardBeta).unwrap();
    assert!((b.b_h().unwrap() - B_H_030).abs() < 1e-12);
    // the printed reciprocal convention gives a different constant
    let r = kernel_constants(hp(0.75), BetaConvention::ReciprocalBeta).unwrap();
    let expected = (0.375 * common::beta(0.5, 0.25)).sqrt();
    assert!((r.c_h().unwrap() - expected).abs() < 1e-12);
}

#[test]
fn kernel_regression_pins() {
    let spec = QuadratureSpec::default();
    let smooth = kernel_kh(1.0, 0.5, hp(0.75), BetaConvention::StandardBeta, spec).unwrap();
    assert!((smooth - K_1_05_075).abs() < 1e-8, "{smooth}");
    let rough = kernel_kh(1.0, 0.5, hp(0.3), BetaConvention::StandardBeta, spec).unwrap();
    assert!((rough - K_1_05_030).abs() < 1e-8, "{rough}");
    let bm = kernel_kh(1.0, 0.5, hp(0.5), BetaConvention::StandardBeta, spec).unwrap();
    assert_eq!(bm, 1.0);
}

#[test]
fn kernel_agrees_with_oracle_off_pins() {
    for &h in &[0.2, 0.35, 0.45, 0.55, 0.7, 0.9] {
        let k = VolterraKernel::new(hp(h));
        for &(t, s) in &[(1.0, 0.01), (0.8, 0.3), (2.0, 1.999), (0.5, 0.25)] {
            let got = k.eval(t, s).unwrap();
            let want = common::kernel(t, s, h);
            assert!(
                (got - want).abs() <= 1e-8 * want.abs().max(1.0),
                "h={h} t={t} s={s}: {got} vs {want}"
            );
        }
    }
}

#[test]
fn kernel_time_derivative_matches_finite_differences_of_oracle() {
    for &h in &[0.3, 0.7] {
        let k = VolterraKernel::new(hp(h));
        let (t, s) = (0.9, 0.4);
        let d = 1e-5;
        let fd = (common::kernel(t + d, s, h) - common::kernel(t - d, s, h)) / (2.0 * d);
        let got = k.dt(t, s).unwrap();
        assert!(
            (got - fd).abs() < 1e-6 * fd.abs().max(1.0),
            "h={h}: {got} vs {fd}"
        );
    }
}

#[test]
fn factorization_selects_standard_beta() {
    for &(t, s, h) in &[(1.0, 0.5, 0.7), (0.8, 0.3, 0.3)] {
        let std_defect = factorization_check_with(t, s, hp(h), BetaConvention::StandardBeta).unwrap();
        let reciprocal_defect = factorization_check_with(t, s, hp(h), BetaConvention::ReciprocalBeta).unwrap();
        assert!(std_defect <= 1e-3, "standard beta defect {std_defect}");
        assert!(reciprocal_defect > 1e-1, "reciprocal beta defect {reciprocal_defect}");
    }
    assert!(factorization_check(1.0, 1.0, hp(0.5)).unwrap() < 1e-12);
    assert_eq!(BetaConvention::default(), BetaConvention::StandardBeta);
}

#[test]
fn factorization_on_random_pairs() {
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(7);
    for &h in &[0.3, 0.5, 0.7] {
        for _ in 0..10 {
            let a: f64 = rng.random_range(0.02..1.0);
            let b: f64 = rng.random_range(0.02..1.0);
            let d = factorization_check(a, b, hp(h)).unwrap();
            assert!(d <= 1e-3, "h={h} ({a},{b}) defect {d}");
        }
    }
}

#[test]
fn khstar_ramp_matches_oracle() {
    let k = VolterraKernel::new(hp(0.3));
    let got = k.khstar_apply(&ScalarFn::ramp(), 0.5, 1.0).unwrap();
    assert!((got - KSTAR_RAMP_05_030).abs() < 1e-8, "{got}");
}

#[test]
fn khstar_of_indicator_is_truncated_kernel() {
    // K*(1_[0,u))(s) = K(u, s) for s < u and 0 beyond
    let k = VolterraKernel::new(hp(0.3));
    let ind = ScalarFn::indicator(0.0, 0.6);
    let got = k.khstar_apply(&ind, 0.25, 1.0).unwrap();
    let want = k.eval(0.6, 0.25).unwrap();
    assert!((got - want).abs() < 1e-7, "{got} vs {want}");
    assert!(k.khstar_apply(&ind, 0.8, 1.0).unwrap().abs() < 1e-12);
}

#[test]
fn unit_norm_equals_variance() {
    for &h in &[0.3, 0.7] {
        let k = VolterraKernel::new(hp(h));
        for &t in &[0.5, 1.0, 2.0] {
            let one = ScalarFn::constant(1.0);
            let v = k.inner_product(&one, &one, t).unwrap();
            let want = t.powf(2.0 * h);
            assert!((v - want).abs() <= 1e-3 * want, "h={h} T={t}: {v} vs {want}");
        }
    }
}

#[test]
fn indicator_products_reproduce_covariance() {
    for &h in &[0.3, 0.5, 0.7] {
        let k = VolterraKernel::new(hp(h));
        let f = ScalarFn::indicator(0.0, 0.5);
        let g = ScalarFn::indicator(0.0, 0.8);
        let v = k.inner_product(&f, &g, 1.0).unwrap();
        let want = covariance(0.5, 0.8, hp(h)).unwrap();
        assert!((v - want).abs() <= 1e-3 * want, "h={h}: {v} vs {want}");
    }
}

#[test]
fn inner_product_is_symmetric_and_bilinear() {
    for &h in &[0.3, 0.7] {
        let k = VolterraKernel::new(hp(h));
        let f = ScalarFn::ramp();
        let g = ScalarFn::new(|t| 1.0 + t * t);
        let fg = k.inner_product(&f, &g, 1.0).unwrap();
        let gf = k.inner_product(&g, &f, 1.0).unwrap();
        assert!((fg - gf).abs() < 1e-6 * fg.abs());
        let f3 = ScalarFn::new(|t| 3.0 * t);
        let v3 = k.inner_product(&f3, &g, 1.0).unwrap();
        assert!((v3 - 3.0 * fg).abs() < 1e-6 * fg.abs());
    }
}

#[test]
fn covariance_matrix_is_psd() {
    for &h in &[0.1, 0.3, 0.5, 0.7, 0.95] {
        let n = 64;
        let m = DMatrix::from_fn(n, n, |i, j| {
            covariance((i + 1) as f64 / n as f64, (j + 1) as f64 / n as f64, hp(h)).unwrap()
        });
        let eig = m.symmetric_eigenvalues();
        let max = eig.max();
        assert!(eig.min() >= -1e-10 * max, "h={h}: min eig {}", eig.min());
    }
}

#[test]
fn kernel_is_continuous_through_one_half() {
    for &h in &[0.49, 0.51] {
        let k = VolterraKernel::new(hp(h));
        for &(t, s) in &[(1.0, 0.5), (1.0, 0.1), (0.5, 0.2), (1.0, 0.9)] {
            let v = k.eval(t, s).unwrap();
            assert!((v - 1.0).abs() <= 0.15, "h={h} ({t},{s}) -> {v}");
        }
    }
}

proptest! {
    #[test]
    fn covariance_is_symmetric(t in 0.0f64..5.0, s in 0.0f64..5.0, h in 0.01f64..0.99) {
        let h = hp(h);
        prop_assert_eq!(covariance(t, s, h).unwrap(), covariance(s, t, h).unwrap());
    }

    #[test]
    fn diagonal_covariance_is_power(t in 0.0f64..5.0, h in 0.01f64..0.99) {
        let v = covariance(t, t, hp(h)).unwrap();
        prop_assert!((v - t.powf(2.0 * h)).abs() <= 1e-14 * v.max(1.0));
    }
}
