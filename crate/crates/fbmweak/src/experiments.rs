//! The experiments behind each CLI subcommand.
//!
//! Paths are generated in parallel from the streams `(seed, path_id)` and
//! collected in path order before any reduction, so results do not depend
//! on the number of threads.

use std::fmt;

use clap::ValueEnum;
use fbmweak_core::heat::{
    assemble_drift, closed_form, heat_noise_operator, physical_snapshot, solve_heat_spde, FourierState,
    HeatSetup,
};
use fbmweak_core::hilbert::{
    integrand_battery, Basis, HilbertFbm, Lemma1Setup, OperatorFn, ScaledIdentity, SpectralOperatorQ,
};
use fbmweak_core::kernel::{covariance, factorization_check};
use fbmweak_core::sampler::rescale_selfsimilar;
use fbmweak_core::solver::{
    euler_oracle, substitution_check, sup_gap, validate_hypotheses, DriftClosure, LinearDrift, PathProcess,
    WeakProblem,
};
use fbmweak_core::stats::{ks_two_sample, Moments, ProductMoments};
use fbmweak_core::wiener::integrate_riemann;
use fbmweak_core::{FbmSampler, HurstParam, RngStream, SamplerKind, ScalarFn, TimeGrid, VolterraKernel};
use nalgebra::{DMatrix, DVector};
use num_complex::Complex;
use rayon::prelude::*;

use crate::config::{ExperimentConfig, SamplerChoice};
use crate::error::RunError;
use crate::report::{fmt17, fmt8, fmt_float, Check, ExperimentOutput, Table};

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Experiment {
    Sample,
    CovarianceTest,
    IsometryTest,
    Lemma1Check,
    Solve,
    ExampleHeat,
    HypothesisCheck,
    KernelTable,
}

impl Experiment {
    pub const ALL: [Experiment; 8] = [
        Experiment::Sample,
        Experiment::CovarianceTest,
        Experiment::IsometryTest,
        Experiment::Lemma1Check,
        Experiment::Solve,
        Experiment::ExampleHeat,
        Experiment::HypothesisCheck,
        Experiment::KernelTable,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Experiment::Sample => "sample",
            Experiment::CovarianceTest => "covariance-test",
            Experiment::IsometryTest => "isometry-test",
            Experiment::Lemma1Check => "lemma1-check",
            Experiment::Solve => "solve",
            Experiment::ExampleHeat => "example-heat",
            Experiment::HypothesisCheck => "hypothesis-check",
            Experiment::KernelTable => "kernel-table",
        }
    }

    /// Columns of the main CSV.
    pub fn header(self) -> &'static [&'static str] {
        match self {
            Experiment::Sample => &["path_id", "t", "value"],
            Experiment::CovarianceTest => &["sample", "t", "s", "empirical", "std_error", "exact"],
            Experiment::IsometryTest => &["f", "g", "empirical", "std_error", "target", "defect"],
            Experiment::Lemma1Check => &["integrand", "a", "k", "form", "mc_moment", "std_error", "bound"],
            Experiment::Solve => &["path_id", "t", "coordinate", "value"],
            Experiment::ExampleHeat => &["path_id", "t", "mode", "re", "im"],
            Experiment::HypothesisCheck => &[
                "case",
                "drift_ratio",
                "jacobian_ratio",
                "g_ratio",
                "complete",
                "pass",
            ],
            Experiment::KernelTable => &["t", "s", "h", "K_H"],
        }
    }
}

impl fmt::Display for Experiment {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Run one experiment; the caller decides where the output goes.
pub fn run_experiment(exp: Experiment, cfg: &ExperimentConfig) -> Result<ExperimentOutput, RunError> {
    cfg.validate()?;
    let out = match exp {
        Experiment::Sample => sample(cfg),
        Experiment::CovarianceTest => covariance_test(cfg),
        Experiment::IsometryTest => isometry_test(cfg),
        Experiment::Lemma1Check => lemma1(cfg),
        Experiment::Solve => solve(cfg),
        Experiment::ExampleHeat => example_heat(cfg),
        Experiment::HypothesisCheck => hypothesis_check(cfg),
        Experiment::KernelTable => kernel_table(cfg),
    }?;
    Ok(out.finalize())
}

/// Evaluate `f` on every path index in parallel, keeping path order.
fn per_path<T, F>(n_paths: u64, f: F) -> Result<Vec<T>, RunError>
where
    T: Send,
    F: Fn(u64) -> Result<T, RunError> + Sync + Send,
{
    (0..n_paths).into_par_iter().map(f).collect()
}

fn grid(cfg: &ExperimentConfig) -> Result<TimeGrid, RunError> {
    Ok(TimeGrid::new(cfg.horizon, cfg.n_steps)?)
}

/// Discretization allowance of the Volterra sampler, relative to the target.
fn sampler_slack(choice: SamplerChoice) -> f64 {
    if choice == SamplerChoice::Volterra {
        0.05
    } else {
        0.0
    }
}

fn sample(cfg: &ExperimentConfig) -> Result<ExperimentOutput, RunError> {
    let grid = grid(cfg)?;
    let h = cfg.hurst_param();
    let sampler = SamplerKind::from(cfg.sampler).build(grid, h)?;
    let results = per_path(cfg.n_paths, |p| {
        let path = sampler.sample(&RngStream::new(cfg.seed, p));
        let mut rows = Table::new(Experiment::Sample.header());
        if p < cfg.dump_paths {
            for (i, v) in path.values().iter().enumerate() {
                rows.push(&[p.to_string(), fmt17(grid.point(i)), fmt17(*v)]);
            }
        }
        Ok((rows, path.values()[0], path.terminal()))
    })?;
    let mut out = ExperimentOutput::new(Table::new(Experiment::Sample.header()));
    let mut anchor = 0.0f64;
    let mut terminal = Moments::new();
    for (rows, b0, bt) in results {
        out.table.extend(rows);
        anchor = anchor.max(b0.abs());
        terminal.push(bt * bt);
    }
    if cfg.n_paths >= 2 {
        let target = cfg.horizon.powf(2.0 * h.value());
        out.checks.push(Check::at_most("anchored", anchor, 0.0));
        out.checks.push(Check::at_most(
            "terminal_variance",
            (terminal.mean() - target).abs(),
            4.0 * terminal.std_error() + sampler_slack(cfg.sampler) * target,
        ));
    }
    Ok(out)
}

/// `max |emp - R| / (4 SE + slack |R|)` over the lower triangle.
fn covariance_score(
    label: &str,
    moments: &ProductMoments,
    times: &[f64],
    h: HurstParam,
    slack: f64,
    table: &mut Table,
) -> Result<f64, RunError> {
    let mut worst = 0.0f64;
    for i in 0..times.len() {
        for j in 0..=i {
            let (emp, se) = moments.entry(i, j);
            let exact = covariance(times[i], times[j], h)?;
            table.push(&[
                label.to_string(),
                fmt17(times[i]),
                fmt17(times[j]),
                fmt17(emp),
                fmt17(se),
                fmt17(exact),
            ]);
            worst = worst.max((emp - exact).abs() / (4.0 * se + slack * exact.abs()));
        }
    }
    Ok(worst)
}

fn covariance_test(cfg: &ExperimentConfig) -> Result<ExperimentOutput, RunError> {
    let grid = grid(cfg)?;
    let h = cfg.hurst_param();
    let (a, k) = cfg.rescaling();
    let kind = SamplerKind::from(cfg.sampler);
    let sampler = kind.build(grid, h)?;
    let shrunk = grid.scaled(a.powi(k as i32))?;
    let fresh_sampler = kind.build(shrunk, h)?;
    let results = per_path(cfg.n_paths, |p| {
        let stream = RngStream::new(cfg.seed, p);
        let path = sampler.sample(&stream);
        let rescaled = rescale_selfsimilar(&path, a, k)?;
        let fresh = fresh_sampler.sample(&stream.child(1));
        Ok((
            path.values()[1..].to_vec(),
            rescaled.values()[1..].to_vec(),
            fresh.terminal(),
        ))
    })?;
    let n = grid.n_steps();
    let mut direct = ProductMoments::new(n);
    let mut scaled = ProductMoments::new(n);
    let mut rescaled_terminal = Vec::with_capacity(results.len());
    let mut fresh_terminal = Vec::with_capacity(results.len());
    for (a, b, fresh) in &results {
        direct.push(a);
        scaled.push(b);
        rescaled_terminal.push(b[n - 1]);
        fresh_terminal.push(*fresh);
    }
    let mut out = ExperimentOutput::new(Table::new(Experiment::CovarianceTest.header()));
    if cfg.n_paths < 2 {
        return Ok(out);
    }
    let slack = sampler_slack(cfg.sampler);
    let times: Vec<f64> = grid.points()[1..].to_vec();
    let shrunk_times: Vec<f64> = shrunk.points()[1..].to_vec();
    let fresh_score = covariance_score("fresh", &direct, &times, h, slack, &mut out.table)?;
    let rescaled_score = covariance_score("rescaled", &scaled, &shrunk_times, h, slack, &mut out.table)?;
    out.checks.push(Check::at_most("covariance", fresh_score, 1.0));
    out.checks
        .push(Check::at_most("rescaled_covariance", rescaled_score, 1.0));
    let ks = ks_two_sample(&rescaled_terminal, &fresh_terminal);
    out.checks
        .push(Check::at_least("rescaled_terminal_ks_p", ks.p_value, 0.01));
    Ok(out)
}

fn isometry_test(cfg: &ExperimentConfig) -> Result<ExperimentOutput, RunError> {
    let grid = grid(cfg)?;
    if !cfg.n_steps.is_multiple_of(2) {
        return Err(RunError::Usage(
            "isometry-test needs an even n_steps so that T/2 is a grid point".into(),
        ));
    }
    let h = cfg.hurst_param();
    let t = cfg.horizon;
    let battery = [
        ("one", ScalarFn::constant(1.0)),
        ("t", ScalarFn::ramp()),
        ("half", ScalarFn::indicator(0.0, 0.5 * t)),
    ];
    let sampler = SamplerKind::from(cfg.sampler).build(grid, h)?;
    let integrals = per_path(cfg.n_paths, |p| {
        let path = sampler.sample(&RngStream::new(cfg.seed, p));
        battery
            .iter()
            .map(|(_, f)| integrate_riemann(f, &path).map_err(RunError::from))
            .collect::<Result<Vec<f64>, _>>()
    })?;
    let mut out = ExperimentOutput::new(Table::new(Experiment::IsometryTest.header()));
    if cfg.n_paths < 2 {
        return Ok(out);
    }
    let kernel = VolterraKernel::new(h);
    for i in 0..battery.len() {
        for j in i..battery.len() {
            let products: Moments = integrals.iter().map(|v| v[i] * v[j]).collect();
            let target = kernel.inner_product(&battery[i].1, &battery[j].1, t)?;
            let r = fbmweak_core::wiener::IsometryReport::from_moments(&products, target);
            out.table.push(&[
                battery[i].0.to_string(),
                battery[j].0.to_string(),
                fmt17(r.empirical),
                fmt17(r.std_error),
                fmt17(r.target),
                fmt17(r.defect),
            ]);
            out.checks.push(Check::at_most(
                format!("isometry_{}_{}", battery[i].0, battery[j].0),
                r.defect,
                (4.0 * r.relative_se()).max(0.05),
            ));
        }
    }
    Ok(out)
}

/// `(a, k)` pairs at which the bound is checked, and the `a` sweep (with
/// `k = 2`) over which the moment must decrease.
pub const LEMMA_PAIRS: [(f64, u32); 2] = [(0.5, 2), (0.8, 4)];
pub const LEMMA_SWEEP: [f64; 3] = [0.8, 0.5, 0.2];

fn lemma1(cfg: &ExperimentConfig) -> Result<ExperimentOutput, RunError> {
    let grid = grid(cfg)?;
    let h = cfg.hurst_param();
    let dim = cfg.spectral.truncation;
    let q = SpectralOperatorQ::power_law(cfg.spectral.eigen_decay_p, dim)?;
    let battery = integrand_battery(dim);
    let mut combos: Vec<(f64, u32)> = LEMMA_SWEEP.iter().map(|&a| (a, 2)).collect();
    for pair in LEMMA_PAIRS {
        if !combos.contains(&pair) {
            combos.push(pair);
        }
    }
    let mut setups = Vec::with_capacity(battery.len() * combos.len());
    for (_, g) in &battery {
        for &(a, k) in &combos {
            setups.push(Lemma1Setup::new(g.as_ref(), g.as_ref(), &q, h, a, k, &grid)?);
        }
    }
    let sampler = SamplerKind::from(cfg.sampler).build(grid, h)?;
    let moments = per_path(cfg.n_paths, |p| {
        let noise = HilbertFbm::sample(&q, &sampler, &RngStream::new(cfg.seed, p));
        setups
            .iter()
            .map(|s| s.path_moments(&noise).map_err(RunError::from))
            .collect::<Result<Vec<_>, _>>()
    })?;
    let mut out = ExperimentOutput::new(Table::new(Experiment::Lemma1Check.header()));
    if cfg.n_paths < 2 {
        return Ok(out);
    }
    let mut reports = Vec::with_capacity(setups.len());
    for (idx, setup) in setups.iter().enumerate() {
        let g: Moments = moments.iter().map(|m| m[idx].0).collect();
        let sh: Moments = moments.iter().map(|m| m[idx].1).collect();
        reports.push(setup.report(&g, &sh));
    }
    for (b, (name, _)) in battery.iter().enumerate() {
        let row = &reports[b * combos.len()..(b + 1) * combos.len()];
        for r in row {
            for (form, f) in [("g", &r.g_form), ("sh", &r.sh_form)] {
                out.table.push(&[
                    name.to_string(),
                    fmt17(r.a),
                    r.k.to_string(),
                    form.to_string(),
                    fmt17(f.mc_moment),
                    fmt17(f.std_error),
                    fmt_float(f.bound),
                ]);
            }
            if LEMMA_PAIRS.contains(&(r.a, r.k)) {
                for (form, f) in [("g", &r.g_form), ("sh", &r.sh_form)] {
                    out.checks.push(Check::at_most(
                        format!("lemma1_{name}_{form}_a{}_k{}", r.a, r.k),
                        f.mc_moment,
                        f.bound + 4.0 * f.std_error,
                    ));
                }
            }
        }
        let sweep: Vec<f64> = LEMMA_SWEEP
            .iter()
            .map(|&a| {
                row[combos.iter().position(|c| *c == (a, 2)).unwrap()]
                    .g_form
                    .mc_moment
            })
            .collect();
        let worst = sweep.windows(2).map(|w| w[1] / w[0]).fold(0.0f64, f64::max);
        out.checks.push(Check {
            name: format!("monotone_in_a_{name}"),
            pass: worst < 1.0,
            value: worst,
            threshold: 1.0,
        });
    }
    Ok(out)
}

fn solve(cfg: &ExperimentConfig) -> Result<ExperimentOutput, RunError> {
    let grid = grid(cfg)?;
    let h = cfg.hurst_param();
    let dim = cfg.spectral.truncation;
    let q = SpectralOperatorQ::power_law(cfg.spectral.eigen_decay_p, dim)?;
    let scaling = cfg.scaling()?;
    let smoothing = cfg.smoothing(dim)?;
    let opts = cfg.solve_options();
    let drift = LinearDrift::new(-DMatrix::identity(dim, dim))?;
    let g = ScaledIdentity::new(dim, 1.0);
    let mut x0 = DVector::zeros(dim);
    x0[0] = 1.0;
    let refine = cfg.n_steps.is_multiple_of(4) && cfg.n_steps >= 8;
    let sampler = SamplerKind::from(cfg.sampler).build(grid, h)?;

    let results = per_path(cfg.n_paths, |p| {
        let noise = HilbertFbm::sample(&q, &sampler, &RngStream::new(cfg.seed, p));
        let mut gaps = Vec::new();
        let mut main = None;
        for factor in [1usize, 2, 4] {
            if factor > 1 && !refine {
                break;
            }
            let b = if factor == 1 {
                noise.clone()
            } else {
                noise.coarsen(factor)?
            };
            let problem = WeakProblem::new(&drift, &g, &b, &smoothing, scaling.k())?;
            let root = problem.solve(scaling.epsilon(), &x0, &opts)?;
            let (solution, tilde) = problem.rescale_to_solution(&root.x, &scaling)?;
            let euler = euler_oracle(&x0, &drift, &g, &tilde)?;
            gaps.push(sup_gap(&solution, &euler)?);
            if factor == 1 {
                let subst = substitution_check(&solution, &drift, &g, &tilde)?
                    .into_iter()
                    .fold(0.0f64, f64::max);
                main = Some((solution, root.residual, subst));
            }
        }
        let (solution, residual, subst) = main.expect("the full grid is always solved");
        let mut rows = Table::new(Experiment::Solve.header());
        let dump = if p < cfg.dump_paths {
            solution.grid().len()
        } else {
            0
        };
        for i in 0..dump {
            let state = solution.state(i);
            for (c, v) in state.iter().enumerate() {
                rows.push(&[
                    p.to_string(),
                    fmt17(solution.grid().point(i)),
                    c.to_string(),
                    fmt17(*v),
                ]);
            }
        }
        Ok((rows, residual, subst, gaps))
    })?;

    let mut out = ExperimentOutput::new(Table::new(Experiment::Solve.header()));
    let mut residual = 0.0f64;
    let mut subst = 0.0f64;
    let mut gaps = [Moments::new(); 3];
    for (rows, r, s, g) in results {
        out.table.extend(rows);
        residual = residual.max(r);
        subst = subst.max(s);
        for (m, v) in gaps.iter_mut().zip(g) {
            m.push(v);
        }
    }
    if cfg.n_paths == 0 {
        return Ok(out);
    }
    out.checks
        .push(Check::at_most("fixed_point_residual", residual, opts.tol));
    out.checks
        .push(Check::at_most("substitution", subst, 10.0 * opts.tol));
    if refine {
        out.checks.push(Check::at_least(
            "euler_refinement_coarse",
            gaps[2].mean() / gaps[1].mean(),
            1.2,
        ));
        out.checks.push(Check::at_least(
            "euler_refinement_fine",
            gaps[1].mean() / gaps[0].mean(),
            1.2,
        ));
    }
    let fd = jacobian_fd_error(cfg, &q, &sampler)?;
    out.checks.push(Check::at_most("jacobian_fd", fd, 1e-4));
    Ok(out)
}

/// Relative error of the directional derivative of `F_n` against central
/// differences at `delta = 1e-5`, for a smooth nonlinear drift on path 0.
fn jacobian_fd_error(
    cfg: &ExperimentConfig,
    q: &SpectralOperatorQ,
    sampler: &dyn FbmSampler,
) -> Result<f64, RunError> {
    let dim = q.dim();
    let scaling = cfg.scaling()?;
    let smoothing = cfg.smoothing(dim)?;
    let drift = DriftClosure::new(dim, ScalarFn::constant(2.0), |t, x| {
        x.map(|v| -v + 0.3 * v.sin() + 0.2 * t * v)
    })
    .with_time_derivative(|_, x| x * 0.2)
    .with_jacobian(|t, x| DMatrix::from_diagonal(&x.map(|v| -1.0 + 0.3 * v.cos() + 0.2 * t)));
    let g = ScaledIdentity::new(dim, 1.0);
    let stream = RngStream::new(cfg.seed, 0);
    let noise = HilbertFbm::sample(q, sampler, &stream);
    let problem = WeakProblem::new(&drift, &g, &noise, &smoothing, scaling.k())?;
    let len = noise.grid().len();
    let mut z = vec![0.0; 2 * dim * len + dim];
    stream.child(7).fill_normal(&mut z);
    let column_zero = |m: DMatrix<f64>| {
        let mut m = m;
        m.set_column(0, &DVector::zeros(dim));
        m
    };
    let x = column_zero(DMatrix::from_column_slice(dim, len, &z[..dim * len]) * 0.3);
    let w = column_zero(DMatrix::from_column_slice(dim, len, &z[dim * len..2 * dim * len]));
    let y = DVector::from_column_slice(&z[2 * dim * len..]);
    let x0 = DVector::from_element(dim, 0.5);
    let a = scaling.epsilon();
    let b = 1.0;
    let base = PathProcess::new(*noise.grid(), x.clone(), x0.clone())?;
    let jac = problem.jacobian_action(&base, a, &w, b, &y)?;
    let delta = 1e-5;
    let at = |d: f64| -> Result<DMatrix<f64>, RunError> {
        let moved = PathProcess::new(*noise.grid(), &x + &w * d, &x0 + &y * d)?;
        Ok(problem.residual(&moved, a + b * d)?.coefficients().clone())
    };
    let central = (at(delta)? - at(-delta)?) / (2.0 * delta);
    Ok((central - jac.coefficients()).norm() / jac.coefficients().norm())
}

fn example_heat(cfg: &ExperimentConfig) -> Result<ExperimentOutput, RunError> {
    let grid = grid(cfg)?;
    let params = cfg.heat_params();
    if cfg.spectral.truncation != params.n_modes {
        return Err(RunError::Usage(format!(
            "example-heat needs spectral.truncation_N = heat.n_modes, got {} and {}",
            cfg.spectral.truncation, params.n_modes
        )));
    }
    let n = params.n_modes;
    let scaling = cfg.scaling()?;
    let opts = cfg.solve_options();
    let q = heat_noise_operator(&params, cfg.spectral.eigen_decay_p)?;
    let setup = HeatSetup::new(params, q, scaling, grid, cfg.smoothing(n)?, opts)?;

    // noise off: every mode against its exponential
    let quiet_q = SpectralOperatorQ::zero(
        n,
        Basis::Fourier {
            period: params.period,
        },
    )?;
    let quiet = HeatSetup::new(params, quiet_q, scaling, grid, cfg.smoothing(n)?, opts)?;
    let modes: Vec<Complex<f64>> = (0..=params.max_mode())
        .map(|m| {
            let amp = 1.0 / (1.0 + (m * m * m) as f64);
            let real_only = m == 0 || (n.is_multiple_of(2) && m == params.max_mode());
            Complex::new(amp, if real_only { 0.0 } else { -0.5 * amp })
        })
        .collect();
    let rich = FourierState::from_complex(params.period, n, &modes)?;
    let run = solve_heat_spde(&quiet, &rich, &RngStream::new(cfg.seed, u64::MAX))?;
    let mut closed_err = 0.0f64;
    for i in 0..run.solution.grid().len() {
        let exact = closed_form(&params, &rich, run.solution.grid().point(i));
        let state = run.state(i);
        for (m, e) in exact.iter().enumerate() {
            closed_err = closed_err.max((state.mode(m) - e).norm() / e.norm());
        }
    }

    let mut single = vec![Complex::new(0.0, 0.0); params.max_mode() + 1];
    single[1] = Complex::new(1.0, 0.0);
    let v0 = FourierState::from_complex(params.period, n, &single)?;
    let n_points = 4 * n;
    let results = per_path(cfg.n_paths, |p| {
        let run = solve_heat_spde(&setup, &v0, &RngStream::new(cfg.seed, p))?;
        let sgrid = *run.solution.grid();
        let mut spectral = Table::new(Experiment::ExampleHeat.header());
        let mut physical = Table::new(&["path_id", "t", "x", "u"]);
        let dump = if p < cfg.dump_paths { sgrid.len() } else { 0 };
        for i in 0..dump {
            let state = run.state(i);
            let t = fmt17(sgrid.point(i));
            for m in 0..=state.max_mode() {
                let u = state.mode(m);
                spectral.push(&[p.to_string(), t.clone(), m.to_string(), fmt17(u.re), fmt17(u.im)]);
            }
            if i == 0 || i == sgrid.n_steps() {
                let u = physical_snapshot(&state, n_points)?;
                for (j, v) in u.iter().enumerate() {
                    let x = params.period * j as f64 / n_points as f64;
                    physical.push(&[p.to_string(), t.clone(), fmt17(x), fmt17(*v)]);
                }
            }
        }
        let last = run.state(sgrid.n_steps()).mode(1);
        Ok((spectral, physical, last, run.residual, sgrid.horizon()))
    })?;

    let mut out = ExperimentOutput::new(Table::new(Experiment::ExampleHeat.header()));
    let mut physical = Table::new(&["path_id", "t", "x", "u"]);
    let mut re = Moments::new();
    let mut im = Moments::new();
    let mut residual = 0.0f64;
    let mut horizon = scaling.time_factor() * cfg.horizon;
    for (s, ph, last, r, hz) in results {
        out.table.extend(s);
        physical.extend(ph);
        re.push(last.re);
        im.push(last.im);
        residual = residual.max(r);
        horizon = hz;
    }
    out.extra.push(("physical", physical));
    out.checks
        .push(Check::at_most("noise_off_closed_form", closed_err, 1e-4));
    let hyp = validate_hypotheses(
        &assemble_drift(&params)?,
        &ScaledIdentity::new(n, 1.0),
        horizon,
        300,
        &RngStream::new(cfg.seed, u64::MAX - 1),
    )?;
    out.checks.push(Check::at_most(
        "hypotheses",
        hyp.drift_ratio.max(hyp.jacobian_ratio).max(hyp.g_ratio),
        1.0 + 1e-9,
    ));
    if cfg.n_paths >= 2 {
        let expect = (params.multiplier(1) * horizon).exp() * v0.mode(1);
        let gap = (Complex::new(re.mean(), im.mean()) - expect).norm();
        let se = (re.std_error().powi(2) + im.std_error().powi(2)).sqrt();
        out.checks.push(Check::at_most("mode1_mean", gap, 4.0 * se));
        out.checks
            .push(Check::at_most("fixed_point_residual", residual, opts.tol));
    }
    Ok(out)
}

fn hypothesis_check(cfg: &ExperimentConfig) -> Result<ExperimentOutput, RunError> {
    let probes = (cfg.n_paths as usize).max(100);
    let dim = cfg.spectral.truncation;
    let stream = RngStream::new(cfg.seed, 0);
    let limit = 1.0 + 1e-9;
    let linear = LinearDrift::new(-DMatrix::identity(dim, dim))?.with_phi(ScalarFn::constant(2.0));
    let quadratic = DriftClosure::new(1, ScalarFn::constant(2.0), |_, x| x.map(|v| v * v))
        .with_time_derivative(|_, x| x * 0.0)
        .with_jacobian(|_, x| DMatrix::from_diagonal(&x.map(|v| 2.0 * v)));
    let heat_params = cfg.heat_params();
    let heat = assemble_drift(&heat_params)?;
    let id = |d: usize| ScaledIdentity::new(d, 1.0);
    let cases: [(&str, &dyn fbmweak_core::solver::Drift, ScaledIdentity); 3] = [
        ("linear", &linear, id(dim)),
        ("quadratic", &quadratic, id(1)),
        ("heat", &heat, id(heat_params.n_modes)),
    ];
    let mut out = ExperimentOutput::new(Table::new(Experiment::HypothesisCheck.header()));
    for (name, drift, g) in cases {
        let r = validate_hypotheses(drift, &g as &dyn OperatorFn, cfg.horizon, probes, &stream)?;
        out.table.push(&[
            name.to_string(),
            fmt17(r.drift_ratio),
            fmt17(r.jacobian_ratio),
            fmt17(r.g_ratio),
            r.complete.to_string(),
            r.pass.to_string(),
        ]);
        let worst = r.drift_ratio.max(r.jacobian_ratio).max(r.g_ratio);
        if name == "quadratic" {
            out.checks.push(Check {
                name: "quadratic_drift_rejected".into(),
                pass: !r.pass,
                value: worst,
                threshold: limit,
            });
        } else {
            out.checks
                .push(Check::at_most(format!("{name}_drift"), worst, limit));
        }
    }
    Ok(out)
}

fn kernel_table(cfg: &ExperimentConfig) -> Result<ExperimentOutput, RunError> {
    let grid = grid(cfg)?;
    let h = cfg.hurst_param();
    let kernel = VolterraKernel::new(h);
    let mut out = ExperimentOutput::new(Table::new(Experiment::KernelTable.header()));
    let hs = fmt8(h.value());
    for i in 1..grid.len() {
        for j in 1..i {
            let (t, s) = (grid.point(i), grid.point(j));
            out.table
                .push(&[fmt8(t), fmt8(s), hs.clone(), fmt8(kernel.eval(t, s)?)]);
        }
    }
    let mut u = [0.0; 20];
    RngStream::new(cfg.seed, 0).fill_uniform(&mut u);
    let mut worst = 0.0f64;
    for pair in u.chunks(2) {
        let t = cfg.horizon * (1.0 - pair[0]);
        let s = cfg.horizon * (1.0 - pair[1]);
        worst = worst.max(factorization_check(t, s, h)?);
    }
    out.checks.push(Check::at_most("factorization", worst, 1e-3));
    Ok(out)
}
