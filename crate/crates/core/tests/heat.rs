use fbmweak_core::heat::{
    assemble_drift, closed_form, heat_noise_operator, physical_snapshot, solve_heat_spde, FourierState,
    HeatParams, HeatSetup,
};
use fbmweak_core::hilbert::{
    second_moment_formula, Basis, OperatorClosure, ScaledIdentity, SpectralOperatorQ,
};
use fbmweak_core::solver::{validate_hypotheses, Method, ScalingParams, SmoothingFamily, SolveOptions};
use fbmweak_core::stats::{Moments, ProductMoments};
use fbmweak_core::{Error, HurstParam, RngStream, TimeGrid};
use nalgebra::{DMatrix, DVector};
use num_complex::Complex;

const TAU: f64 = 2.0 * std::f64::consts::PI;

fn hurst(h: f64) -> HurstParam {
    HurstParam::new(h).unwrap()
}

fn newton() -> SolveOptions {
    SolveOptions {
        method: Method::Newton,
        tol: 1e-10,
        ..SolveOptions::default()
    }
}

fn setup(params: HeatParams, q: SpectralOperatorQ, n: usize) -> HeatSetup {
    let scaling = ScalingParams::with_auto_k(0.5, hurst(0.7)).unwrap();
    let smoothing = SmoothingFamily::taper(4 * params.n_modes, params.n_modes).unwrap();
    HeatSetup::new(
        params,
        q,
        scaling,
        TimeGrid::new(1.0, n).unwrap(),
        smoothing,
        newton(),
    )
    .unwrap()
}

fn single_mode(params: &HeatParams, amplitude: f64) -> FourierState {
    let mut modes = vec![Complex::new(0.0, 0.0); params.max_mode() + 1];
    modes[1] = Complex::new(amplitude, 0.0);
    FourierState::from_complex(params.period, params.n_modes, &modes).unwrap()
}

#[test]
fn noise_off_modes_follow_their_exponentials() {
    let params = HeatParams::default();
    let q = SpectralOperatorQ::zero(
        params.n_modes,
        Basis::Fourier {
            period: params.period,
        },
    )
    .unwrap();
    let s = setup(params, q, 128);
    let modes: Vec<Complex<f64>> = (0..=params.max_mode())
        .map(|m| {
            let decay = 1.0 / (1.0 + (m * m * m) as f64);
            if m == 0 || m == params.max_mode() {
                Complex::new(decay, 0.0)
            } else {
                Complex::new(decay, -0.5 * decay)
            }
        })
        .collect();
    let v0 = FourierState::from_complex(params.period, params.n_modes, &modes).unwrap();
    let run = solve_heat_spde(&s, &v0, &RngStream::new(1, 0)).unwrap();
    let grid = *run.solution.grid();
    for i in 0..grid.len() {
        let exact = closed_form(&params, &v0, grid.point(i));
        let state = run.state(i);
        for (m, e) in exact.iter().enumerate() {
            let rel = (state.mode(m) - e).norm() / e.norm();
            assert!(rel <= 1e-4, "mode {m} at t = {}: {rel}", grid.point(i));
        }
    }
}

#[test]
fn compensated_mode_is_constant() {
    let params = HeatParams {
        alpha: 1.0,
        beta: 1.0,
        gamma: 0.0,
        period: TAU,
        n_modes: 8,
    };
    assert_eq!(params.multiplier(1), Complex::new(0.0, 0.0));
    let q = SpectralOperatorQ::zero(8, Basis::Fourier { period: TAU }).unwrap();
    let s = setup(params, q, 32);
    let v0 = single_mode(&params, 0.8);
    let run = solve_heat_spde(&s, &v0, &RngStream::new(2, 0)).unwrap();
    for i in 0..run.solution.grid().len() {
        assert!((run.state(i).mode(1) - Complex::new(0.8, 0.0)).norm() < 1e-12);
    }
}

#[test]
fn noise_on_mean_follows_the_heat_flow() {
    let params = HeatParams {
        alpha: 1.0,
        beta: 0.0,
        gamma: 0.0,
        period: TAU,
        n_modes: 16,
    };
    let q = heat_noise_operator(&params, 2.0).unwrap();
    let s = setup(params, q, 64);
    let v0 = single_mode(&params, 1.0);
    let mut re = Moments::new();
    let mut horizon = 0.0;
    for path in 0..2000 {
        let run = solve_heat_spde(&s, &v0, &RngStream::new(3, path)).unwrap();
        let last = run.solution.grid().n_steps();
        horizon = run.solution.grid().horizon();
        re.push(run.state(last).mode(1).re);
    }
    let expect = (-horizon).exp();
    assert!(
        (re.mean() - expect).abs() <= 4.0 * re.std_error(),
        "{} vs {expect}",
        re.mean()
    );
}

#[test]
fn modes_decouple_and_match_the_convolution_variance() {
    let params = HeatParams {
        alpha: 1.0,
        beta: 0.0,
        gamma: 0.0,
        period: TAU,
        n_modes: 6,
    };
    let q = heat_noise_operator(&params, 2.0).unwrap();
    let s = setup(params, q.clone(), 128);
    let v0 = FourierState::zeros(&params);
    let paths = 2000;
    let mut products = ProductMoments::new(6);
    let mut horizon = 0.0;
    for path in 0..paths {
        let run = solve_heat_spde(&s, &v0, &RngStream::new(4, path)).unwrap();
        let last = run.solution.grid().n_steps();
        horizon = run.solution.grid().horizon();
        products.push(run.solution.state(last).as_slice());
    }
    let var = |j: usize| products.entry(j, j).0;
    for i in 0..6 {
        for j in 0..i {
            let rho = products.entry(i, j).0 / (var(i) * var(j)).sqrt();
            assert!(rho.abs() <= 4.0 / (paths as f64).sqrt(), "({i}, {j}): {rho}");
        }
    }
    for j in [1, 2, 3] {
        let mu = params.multiplier(params.mode_of(j)).re;
        let t = horizon;
        let g = OperatorClosure::new(1, move |s| DMatrix::from_element(1, 1, (mu * (t - s)).exp()));
        let single = SpectralOperatorQ::new(vec![q.eigenvalues()[j]], Basis::Abstract, 0.0).unwrap();
        let expect = second_moment_formula(&g, &single, hurst(0.7), t).unwrap();
        assert!(
            (var(j) - expect).abs() <= 0.1 * expect,
            "coordinate {j}: {} vs {expect}",
            var(j)
        );
    }
}

#[test]
fn snapshots_are_exact_samples() {
    let params = HeatParams {
        period: 3.0,
        n_modes: 7,
        ..HeatParams::default()
    };
    let zero = FourierState::zeros(&params);
    assert!(physical_snapshot(&zero, 16).unwrap().iter().all(|u| *u == 0.0));
    let cosine = single_mode(&params, 1.0);
    let u = physical_snapshot(&cosine, 32).unwrap();
    for (i, v) in u.iter().enumerate() {
        let x = 3.0 * i as f64 / 32.0;
        let expect = 2.0 / 3f64.sqrt() * (TAU * x / 3.0).cos();
        assert!((v - expect).abs() < 1e-13);
    }
    assert!(physical_snapshot(&cosine, 4).is_err());
}

#[test]
fn parseval_holds_on_fine_samples() {
    for n_modes in [7, 8] {
        let params = HeatParams {
            period: 2.5,
            n_modes,
            ..HeatParams::default()
        };
        let coords = DVector::from_fn(n_modes, |j, _| {
            1.0 / (1.0 + j as f64) * if j % 3 == 0 { -1.0 } else { 1.0 }
        });
        let state = FourierState::new(params.period, coords).unwrap();
        let n_points = 64;
        let u = physical_snapshot(&state, n_points).unwrap();
        let physical: f64 = u.iter().map(|v| v * v).sum::<f64>() * params.period / n_points as f64;
        let spectral: f64 = state.mode(0).norm_sqr()
            + 2.0
                * (1..=state.max_mode())
                    .map(|m| state.mode(m).norm_sqr())
                    .sum::<f64>();
        assert!((physical - spectral).abs() < 1e-10);
        assert!((spectral - state.coords().norm_squared()).abs() < 1e-12);
    }
}

#[test]
fn drift_satisfies_the_growth_conditions() {
    let params = HeatParams::default();
    let drift = assemble_drift(&params).unwrap();
    let g = ScaledIdentity::new(params.n_modes, 1.0);
    let r = validate_hypotheses(&drift, &g, 1.0, 300, &RngStream::new(5, 0)).unwrap();
    assert!(r.pass, "{r:?}");
}

#[test]
fn rough_initial_data_is_rejected() {
    let params = HeatParams {
        n_modes: 9,
        ..HeatParams::default()
    };
    let q = SpectralOperatorQ::zero(
        9,
        Basis::Fourier {
            period: params.period,
        },
    )
    .unwrap();
    let s = setup(params, q, 8);
    let flat = FourierState::new(params.period, DVector::from_element(9, 1.0)).unwrap();
    assert!(matches!(
        solve_heat_spde(&s, &flat, &RngStream::new(6, 0)),
        Err(Error::Domain(_))
    ));
}
