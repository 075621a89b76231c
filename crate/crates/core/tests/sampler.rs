use fbmweak_core::kernel::{covariance, fgn_autocovariance};
use fbmweak_core::sampler::{
    estimate_hurst, rescale_selfsimilar, CholeskySampler, CirculantSampler, FbmSampler, VolterraSampler,
};
use fbmweak_core::stats::{ks_two_sample, Moments, ProductMoments};
use fbmweak_core::{HurstParam, Provenance, RngStream, SamplerKind, TimeGrid};
use proptest::prelude::*;

fn hurst(h: f64) -> HurstParam {
    HurstParam::new(h).unwrap()
}

fn covariance_moments(sampler: &dyn FbmSampler, n_paths: u64, seed: u64) -> ProductMoments {
    let n = sampler.grid().n_steps();
    let mut acc = ProductMoments::new(n);
    for p in 0..n_paths {
        let path = sampler.sample(&RngStream::new(seed, p));
        acc.push(&path.values()[1..]);
    }
    acc
}

#[test]
fn single_step_grid_has_the_terminal_variance() {
    let h = hurst(0.3);
    let grid = TimeGrid::new(2.0, 1).unwrap();
    let s = CholeskySampler::new(grid, h).unwrap();
    let m: Moments = (0..20_000)
        .map(|p| s.sample(&RngStream::new(5, p)).terminal().powi(2))
        .collect();
    let target = 2.0f64.powf(0.6);
    assert!((m.mean() - target).abs() < 4.0 * m.std_error());
}

#[test]
fn brownian_increments_are_uncorrelated() {
    let grid = TimeGrid::new(1.0, 8).unwrap();
    let s = CholeskySampler::new(grid, HurstParam::brownian()).unwrap();
    let n_paths = 10_000;
    let mut acc = ProductMoments::new(8);
    for p in 0..n_paths {
        acc.push(&s.sample(&RngStream::new(17, p)).increments());
    }
    let bound = 4.0 / (n_paths as f64).sqrt();
    for i in 0..8 {
        for j in 0..i {
            let (cij, _) = acc.entry(i, j);
            let rho = cij / (acc.entry(i, i).0 * acc.entry(j, j).0).sqrt();
            assert!(rho.abs() < bound, "rho({i},{j}) = {rho}");
        }
    }
}

#[test]
fn cholesky_covariance_matches_rh() {
    let h = hurst(0.7);
    let grid = TimeGrid::new(1.0, 16).unwrap();
    let s = CholeskySampler::new(grid, h).unwrap();
    let acc = covariance_moments(&s, 50_000, 23);
    for i in 0..16 {
        for j in 0..=i {
            let (c, se) = acc.entry(i, j);
            let r = covariance(grid.point(i + 1), grid.point(j + 1), h).unwrap();
            assert!((c - r).abs() <= 4.0 * se, "({i},{j}) {c} vs {r} (se {se})");
        }
    }
}

#[test]
fn circulant_brownian_variance_and_fgn_lag_one() {
    let grid = TimeGrid::new(1.0, 32).unwrap();
    let s = CirculantSampler::new(grid, HurstParam::brownian()).unwrap();
    let var: Moments = (0..10_000)
        .map(|p| s.sample(&RngStream::new(3, p)).increments()[5].powi(2))
        .collect();
    assert!((var.mean() - grid.dt()).abs() < 4.0 * var.std_error());

    let h = hurst(0.7);
    let s = CirculantSampler::new(grid, h).unwrap();
    let dt_2h = grid.dt().powf(1.4);
    let lag1: Moments = (0..10_000)
        .map(|p| {
            let inc = s.sample(&RngStream::new(4, p)).increments();
            inc[10] * inc[11] / dt_2h
        })
        .collect();
    let rho = 2f64.powf(0.4) - 1.0;
    assert!((fgn_autocovariance(1, h) - rho).abs() < 1e-14);
    assert!((lag1.mean() - rho).abs() < 4.0 * lag1.std_error());
}

#[test]
fn volterra_brownian_marginal_matches_cholesky() {
    let grid = TimeGrid::new(1.0, 16).unwrap();
    let h = HurstParam::brownian();
    let v = VolterraSampler::new(grid, h).unwrap();
    let c = CholeskySampler::new(grid, h).unwrap();
    let a: Vec<f64> = (0..5_000)
        .map(|p| v.sample(&RngStream::new(1, p)).terminal())
        .collect();
    let b: Vec<f64> = (0..5_000)
        .map(|p| c.sample(&RngStream::new(2, p)).terminal())
        .collect();
    assert!(ks_two_sample(&a, &b).p_value > 0.01);
}

#[test]
fn volterra_terminal_variance_within_discretization_allowance() {
    let grid = TimeGrid::new(1.0, 32).unwrap();
    for h in [0.3, 0.7] {
        let s = VolterraSampler::new(grid, hurst(h)).unwrap();
        let m: Moments = (0..20_000)
            .map(|p| s.sample(&RngStream::new(9, p)).terminal().powi(2))
            .collect();
        let gap = (m.mean() - 1.0).abs();
        assert!(gap <= 4.0 * m.std_error() + 0.05, "H = {h}: {}", m.mean());
    }
}

#[test]
fn cholesky_and_volterra_covariances_agree() {
    let grid = TimeGrid::new(1.0, 32).unwrap();
    for h in [0.3, 0.7] {
        let h = hurst(h);
        let c = covariance_moments(&CholeskySampler::new(grid, h).unwrap(), 20_000, 31);
        let v = covariance_moments(&VolterraSampler::new(grid, h).unwrap(), 20_000, 32);
        for i in (0..32).step_by(3) {
            for j in (0..=i).step_by(3) {
                let (a, sa) = c.entry(i, j);
                let (b, sb) = v.entry(i, j);
                let se = (sa * sa + sb * sb).sqrt();
                let r = covariance(grid.point(i + 1), grid.point(j + 1), h).unwrap();
                assert!((a - b).abs() <= 5.0 * se + 0.05 * r.abs(), "({i},{j}) {a} vs {b}");
            }
        }
    }
}

#[test]
fn rescaled_terminal_matches_fresh_fbm() {
    let h = hurst(0.7);
    let grid = TimeGrid::new(1.0, 16).unwrap();
    let s = CirculantSampler::new(grid, h).unwrap();
    let rescaled: Vec<f64> = (0..10_000)
        .map(|p| {
            let r = rescale_selfsimilar(&s.sample(&RngStream::new(41, p)), 0.5, 2).unwrap();
            assert!(matches!(r.provenance(), Provenance::Rescaled { .. }));
            r.terminal()
        })
        .collect();
    let fresh: Vec<f64> = (0..10_000)
        .map(|p| s.sample(&RngStream::new(42, p)).at(0.25).unwrap())
        .collect();
    assert!(ks_two_sample(&rescaled, &fresh).p_value > 0.01);
}

#[test]
fn hurst_estimates_are_calibrated() {
    let grid = TimeGrid::new(1.0, 2048).unwrap();
    for (h, lo, hi) in [(0.5, 0.45, 0.55), (0.75, 0.68, 0.82)] {
        let s = CirculantSampler::new(grid, hurst(h)).unwrap();
        let inside = (0..100)
            .filter(|&p| {
                let e = estimate_hurst(&s.sample(&RngStream::new(77, p))).unwrap();
                e > lo && e < hi
            })
            .count();
        assert!(inside >= 95, "H = {h}: {inside}/100 inside ({lo}, {hi})");
    }
}

#[test]
fn coarsening_keeps_the_realization() {
    let grid = TimeGrid::new(1.0, 64).unwrap();
    let p = CirculantSampler::new(grid, hurst(0.6))
        .unwrap()
        .sample(&RngStream::new(1, 1));
    let c = p.coarsen(4).unwrap();
    assert_eq!(c.grid().n_steps(), 16);
    assert_eq!(c.terminal(), p.terminal());
    assert_eq!(c.values()[3], p.values()[12]);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn paths_are_anchored_and_reproducible(
        h in 0.05f64..0.95,
        n in 2usize..40,
        seed in any::<u64>(),
        stream in any::<u64>(),
    ) {
        let grid = TimeGrid::new(1.5, n).unwrap();
        for kind in [SamplerKind::Cholesky, SamplerKind::Circulant] {
            let s = kind.build(grid, hurst(h)).unwrap();
            let rng = RngStream::new(seed, stream);
            let a = s.sample(&rng);
            prop_assert_eq!(a.values()[0], 0.0);
            prop_assert_eq!(a.values().len(), n + 1);
            prop_assert_eq!(a, s.sample(&rng));
        }
    }

    #[test]
    fn rescaling_multiplies_by_a_to_the_kh(
        h in 0.05f64..0.95,
        a in 0.05f64..0.95,
        k in prop::sample::select(vec![2u32, 4, 6]),
    ) {
        let grid = TimeGrid::new(1.0, 8).unwrap();
        let p = CirculantSampler::new(grid, hurst(h)).unwrap().sample(&RngStream::new(2, 3));
        let r = rescale_selfsimilar(&p, a, k).unwrap();
        let f = a.powi(k as i32).powf(h);
        for (x, y) in p.values().iter().zip(r.values()) {
            prop_assert_eq!(*y, x * f);
        }
        // variance identity Var(B~(a^k t)) = (a^k t)^{2H}
        let t = 0.5f64;
        let lhs = f * f * t.powf(2.0 * h);
        let rhs = (a.powi(k as i32) * t).powf(2.0 * h);
        prop_assert!((lhs - rhs).abs() <= 1e-12 * rhs.max(1e-300));
    }
}
