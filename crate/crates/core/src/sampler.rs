//! Scalar fBm samplers on a uniform grid, self-similar rescaling and a
//! variogram estimate of `H`.

use alloc::boxed::Box;
use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use nalgebra::DMatrix;
use num_complex::Complex;
#[allow(unused_imports)]
use num_traits::Float;

use crate::error::{Error, Result};
use crate::fft::fft_in_place;
use crate::grid::TimeGrid;
use crate::hurst::HurstParam;
use crate::kernel::{fgn_autocovariance, VolterraKernel};
use crate::rng::RngStream;
use crate::stats::linear_fit;

/// Largest grid (in points) the dense Cholesky sampler accepts.
pub const CHOLESKY_MAX_POINTS: usize = 4096;

/// Circulant eigenvalues in `[-CLIP, 0)` are set to zero; anything more
/// negative sends the circulant sampler to its Cholesky fallback.
pub const CIRCULANT_CLIP: f64 = 1e-8;

/// How a path was produced.
#[derive(Debug, Clone, PartialEq)]
pub enum Provenance {
    Cholesky,
    CirculantEmbedding { fell_back: bool },
    VolterraKernel,
    Rescaled { parent: Box<Provenance>, a: f64, k: u32 },
}

/// An fBm trajectory sampled on every point of a grid.
#[derive(Debug, Clone, PartialEq)]
pub struct FbmPath {
    grid: TimeGrid,
    values: Vec<f64>,
    h: HurstParam,
    provenance: Provenance,
    seed: u64,
    stream_id: u64,
}

impl FbmPath {
    /// Assemble a path from values; `values[0]` must be exactly zero.
    pub fn from_values(
        grid: TimeGrid,
        values: Vec<f64>,
        h: HurstParam,
        provenance: Provenance,
        rng: RngStream,
    ) -> Result<Self> {
        if values.len() != grid.len() {
            return Err(Error::Dimension {
                expected: grid.len(),
                found: values.len(),
            });
        }
        if values[0] != 0.0 {
            return Err(Error::Consistency(format!(
                "fBm paths start at 0, got {}",
                values[0]
            )));
        }
        Ok(Self {
            grid,
            values,
            h,
            provenance,
            seed: rng.seed(),
            stream_id: rng.stream_id(),
        })
    }

    pub fn grid(&self) -> &TimeGrid {
        &self.grid
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn hurst(&self) -> HurstParam {
        self.h
    }

    pub fn provenance(&self) -> &Provenance {
        &self.provenance
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn stream_id(&self) -> u64 {
        self.stream_id
    }

    /// Value at a grid time.
    pub fn at(&self, t: f64) -> Result<f64> {
        self.grid
            .index_of(t)
            .map(|i| self.values[i])
            .ok_or_else(|| Error::Alignment(format!("time {t} is not a grid point")))
    }

    pub fn terminal(&self) -> f64 {
        self.values[self.values.len() - 1]
    }

    /// `B(t_{i+1}) - B(t_i)` for every step.
    pub fn increments(&self) -> Vec<f64> {
        self.values.windows(2).map(|w| w[1] - w[0]).collect()
    }

    /// The same realization observed on every `factor`-th grid point.
    pub fn coarsen(&self, factor: usize) -> Result<Self> {
        let grid = self.grid.coarsen(factor)?;
        Ok(Self {
            grid,
            values: self.values.iter().step_by(factor).copied().collect(),
            ..self.clone()
        })
    }
}

/// A sampler bound to a grid and Hurst parameter. Construction does the
/// expensive set-up once; `sample` is then cheap and deterministic in the
/// stream.
pub trait FbmSampler {
    fn grid(&self) -> &TimeGrid;

    fn hurst(&self) -> HurstParam;

    /// Write the `n_steps` increments of one path into `out`.
    fn increments_into(&self, rng: &RngStream, out: &mut [f64]);

    fn provenance(&self) -> Provenance;

    fn sample(&self, rng: &RngStream) -> FbmPath {
        let grid = *self.grid();
        let mut inc = vec![0.0; grid.n_steps()];
        self.increments_into(rng, &mut inc);
        let mut values = Vec::with_capacity(grid.len());
        values.push(0.0);
        let mut acc = 0.0;
        for d in inc {
            acc += d;
            values.push(acc);
        }
        FbmPath {
            grid,
            values,
            h: self.hurst(),
            provenance: self.provenance(),
            seed: rng.seed(),
            stream_id: rng.stream_id(),
        }
    }
}

/// Exact sampler: Cholesky factor of the fractional Gaussian noise
/// covariance, then cumulative sums.
#[derive(Debug, Clone)]
pub struct CholeskySampler {
    grid: TimeGrid,
    h: HurstParam,
    // packed lower triangle, row by row, already scaled by dt^H
    factor: Vec<f64>,
}

impl CholeskySampler {
    pub fn new(grid: TimeGrid, h: HurstParam) -> Result<Self> {
        if grid.len() > CHOLESKY_MAX_POINTS {
            return Err(Error::InvalidParameter(format!(
                "Cholesky sampling is limited to {CHOLESKY_MAX_POINTS} points, got {}",
                grid.len()
            )));
        }
        let n = grid.n_steps();
        let gamma: Vec<f64> = (0..n).map(|k| fgn_autocovariance(k, h)).collect();
        let cov = DMatrix::from_fn(n, n, |i, j| gamma[i.abs_diff(j)]);
        let chol = match cov.clone().cholesky() {
            Some(c) => c,
            None => {
                let jitter = 1e-12 * cov.trace() / n as f64;
                let bumped = cov + DMatrix::identity(n, n) * jitter;
                bumped.cholesky().ok_or_else(|| {
                    Error::NotPositiveDefinite(format!(
                        "fGn covariance (n = {n}, H = {}) after jitter {jitter:e}",
                        h.value()
                    ))
                })?
            }
        };
        let l = chol.l();
        let scale = grid.dt().powf(h.value());
        let mut factor = Vec::with_capacity(n * (n + 1) / 2);
        for i in 0..n {
            for j in 0..=i {
                factor.push(l[(i, j)] * scale);
            }
        }
        Ok(Self { grid, h, factor })
    }
}

impl FbmSampler for CholeskySampler {
    fn grid(&self) -> &TimeGrid {
        &self.grid
    }

    fn hurst(&self) -> HurstParam {
        self.h
    }

    fn provenance(&self) -> Provenance {
        Provenance::Cholesky
    }

    fn increments_into(&self, rng: &RngStream, out: &mut [f64]) {
        let n = self.grid.n_steps();
        let mut z = vec![0.0; n];
        rng.fill_normal(&mut z);
        let mut row = 0;
        for (i, o) in out.iter_mut().enumerate().take(n) {
            let l = &self.factor[row..row + i + 1];
            *o = l.iter().zip(&z).map(|(a, b)| a * b).sum();
            row += i + 1;
        }
    }
}

/// Davies-Harte circulant embedding of the fractional Gaussian noise.
#[derive(Debug, Clone)]
pub struct CirculantSampler {
    grid: TimeGrid,
    h: HurstParam,
    // sqrt(lambda_k / M), one per circulant frequency
    amplitude: Vec<f64>,
    fallback: Option<CholeskySampler>,
}

impl CirculantSampler {
    pub fn new(grid: TimeGrid, h: HurstParam) -> Result<Self> {
        let n = grid.n_steps();
        if n < 2 {
            return Err(Error::InvalidParameter(
                "circulant embedding needs at least two steps".into(),
            ));
        }
        let m = n.next_power_of_two();
        let size = 2 * m;
        let mut row: Vec<Complex<f64>> = vec![Complex::new(0.0, 0.0); size];
        for k in 0..=m {
            row[k] = Complex::new(fgn_autocovariance(k, h), 0.0);
        }
        for k in 1..m {
            row[size - k] = row[k];
        }
        fft_in_place(&mut row, false)?;
        let lambda: Vec<f64> = row.iter().map(|c| c.re).collect();
        let min = lambda.iter().copied().fold(f64::INFINITY, f64::min);
        if min < -CIRCULANT_CLIP {
            return Ok(Self {
                grid,
                h,
                amplitude: Vec::new(),
                fallback: Some(CholeskySampler::new(grid, h)?),
            });
        }
        let amplitude = lambda
            .iter()
            .map(|&l| (l.max(0.0) / size as f64).sqrt())
            .collect();
        Ok(Self {
            grid,
            h,
            amplitude,
            fallback: None,
        })
    }

    pub fn fell_back(&self) -> bool {
        self.fallback.is_some()
    }
}

impl FbmSampler for CirculantSampler {
    fn grid(&self) -> &TimeGrid {
        &self.grid
    }

    fn hurst(&self) -> HurstParam {
        self.h
    }

    fn provenance(&self) -> Provenance {
        Provenance::CirculantEmbedding {
            fell_back: self.fell_back(),
        }
    }

    fn increments_into(&self, rng: &RngStream, out: &mut [f64]) {
        if let Some(chol) = &self.fallback {
            return chol.increments_into(rng, out);
        }
        let size = self.amplitude.len();
        let mut z = vec![0.0; 2 * size];
        rng.fill_normal(&mut z);
        let mut buf: Vec<Complex<f64>> = self
            .amplitude
            .iter()
            .zip(z.chunks_exact(2))
            .map(|(a, p)| Complex::new(a * p[0], a * p[1]))
            .collect();
        fft_in_place(&mut buf, false).expect("embedding size is a power of two");
        let scale = self.grid.dt().powf(self.h.value());
        for (o, c) in out.iter_mut().zip(&buf) {
            *o = c.re * scale;
        }
    }
}

/// Discretized Volterra representation `B_{t_i} = sum_{j<i} Kbar_ij dW_j`
/// with cell-averaged kernel values.
#[derive(Debug, Clone)]
pub struct VolterraSampler {
    grid: TimeGrid,
    h: HurstParam,
    // packed rows i = 1..=n, entries j < i, scaled by sqrt(dt)
    weights: Vec<f64>,
}

impl VolterraSampler {
    pub fn new(grid: TimeGrid, h: HurstParam) -> Result<Self> {
        let kernel = VolterraKernel::new(h);
        let n = grid.n_steps();
        let root_dt = grid.dt().sqrt();
        let mut weights = Vec::with_capacity(n * (n + 1) / 2);
        for i in 1..=n {
            let t = grid.point(i);
            for j in 0..i {
                let w = kernel.cell_average(t, grid.point(j), grid.point(j + 1))?;
                weights.push(w * root_dt);
            }
        }
        Ok(Self { grid, h, weights })
    }
}

impl FbmSampler for VolterraSampler {
    fn grid(&self) -> &TimeGrid {
        &self.grid
    }

    fn hurst(&self) -> HurstParam {
        self.h
    }

    fn provenance(&self) -> Provenance {
        Provenance::VolterraKernel
    }

    fn increments_into(&self, rng: &RngStream, out: &mut [f64]) {
        let n = self.grid.n_steps();
        let mut z = vec![0.0; n];
        rng.fill_normal(&mut z);
        let mut prev = 0.0;
        let mut row = 0;
        for (i, o) in out.iter_mut().enumerate().take(n) {
            let w = &self.weights[row..row + i + 1];
            let level: f64 = w.iter().zip(&z).map(|(a, b)| a * b).sum();
            *o = level - prev;
            prev = level;
            row += i + 1;
        }
    }
}

/// Which sampler to build.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum SamplerKind {
    Cholesky,
    #[default]
    Circulant,
    Volterra,
}

impl SamplerKind {
    pub fn build(self, grid: TimeGrid, h: HurstParam) -> Result<AnySampler> {
        Ok(match self {
            SamplerKind::Cholesky => AnySampler::Cholesky(CholeskySampler::new(grid, h)?),
            SamplerKind::Circulant => AnySampler::Circulant(CirculantSampler::new(grid, h)?),
            SamplerKind::Volterra => AnySampler::Volterra(VolterraSampler::new(grid, h)?),
        })
    }
}

/// A sampler chosen at run time.
#[derive(Debug, Clone)]
pub enum AnySampler {
    Cholesky(CholeskySampler),
    Circulant(CirculantSampler),
    Volterra(VolterraSampler),
}

impl AnySampler {
    fn inner(&self) -> &dyn FbmSampler {
        match self {
            AnySampler::Cholesky(s) => s,
            AnySampler::Circulant(s) => s,
            AnySampler::Volterra(s) => s,
        }
    }
}

impl FbmSampler for AnySampler {
    fn grid(&self) -> &TimeGrid {
        self.inner().grid()
    }

    fn hurst(&self) -> HurstParam {
        self.inner().hurst()
    }

    fn provenance(&self) -> Provenance {
        self.inner().provenance()
    }

    fn increments_into(&self, rng: &RngStream, out: &mut [f64]) {
        self.inner().increments_into(rng, out)
    }
}

pub fn sample_cholesky(grid: &TimeGrid, h: HurstParam, rng: &RngStream) -> Result<FbmPath> {
    Ok(CholeskySampler::new(*grid, h)?.sample(rng))
}

pub fn sample_circulant(grid: &TimeGrid, h: HurstParam, rng: &RngStream) -> Result<FbmPath> {
    Ok(CirculantSampler::new(*grid, h)?.sample(rng))
}

pub fn sample_volterra(grid: &TimeGrid, h: HurstParam, rng: &RngStream) -> Result<FbmPath> {
    Ok(VolterraSampler::new(*grid, h)?.sample(rng))
}

/// `t -> a^{kH} B(t)` observed at times `a^k t`, i.e. the fBm
/// `B~(a^k t) = a^{kH} B(t)` on the grid with horizon `a^k T`.
pub fn rescale_selfsimilar(path: &FbmPath, a: f64, k: u32) -> Result<FbmPath> {
    if !(a > 0.0 && a < 1.0) {
        return Err(Error::InvalidParameter(format!(
            "rescaling factor must lie in (0, 1), got {a}"
        )));
    }
    if k == 0 || !k.is_multiple_of(2) {
        return Err(Error::InvalidParameter(format!(
            "rescaling exponent must be a positive even integer, got {k}"
        )));
    }
    let time_factor = a.powi(k as i32);
    let value_factor = time_factor.powf(path.h.value());
    Ok(FbmPath {
        grid: path.grid.scaled(time_factor)?,
        values: path.values.iter().map(|v| v * value_factor).collect(),
        h: path.h,
        provenance: Provenance::Rescaled {
            parent: Box::new(path.provenance.clone()),
            a,
            k,
        },
        seed: path.seed,
        stream_id: path.stream_id,
    })
}

/// Hurst estimate from the slope of `log E|B(t + l) - B(t)|^2` against
/// `log l` over dyadic lags `l = 1, 2, 4, ...`.
///
/// Long lags have few effectively independent increments, so the largest
/// lag used is `max(n / 64, 8)`.
pub fn estimate_hurst(path: &FbmPath) -> Result<f64> {
    let n = path.grid.n_steps();
    if n < 64 {
        return Err(Error::Estimation(format!(
            "Hurst estimation needs at least 64 steps, got {n}"
        )));
    }
    let v = &path.values;
    let mut logs_l = Vec::new();
    let mut logs_m = Vec::new();
    let max_lag = (n / 64).max(8);
    let mut lag = 1;
    while lag <= max_lag {
        let count = n + 1 - lag;
        let msq = (0..count).map(|i| (v[i + lag] - v[i]).powi(2)).sum::<f64>() / count as f64;
        if !(msq > 0.0) || !msq.is_finite() {
            return Err(Error::Estimation(format!(
                "degenerate path: mean squared increment {msq} at lag {lag}"
            )));
        }
        logs_l.push((lag as f64).ln());
        logs_m.push(msq.ln());
        lag *= 2;
    }
    let (slope, _) = linear_fit(&logs_l, &logs_m);
    let h = 0.5 * slope;
    if !(h > 0.0 && h < 1.0 - 1e-6) {
        return Err(Error::Estimation(format!(
            "estimate {h} lies outside (0, 1); the path is not fBm-like"
        )));
    }
    Ok(h)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn grid(n: usize) -> TimeGrid {
        TimeGrid::new(1.0, n).unwrap()
    }

    #[test]
    fn every_sampler_starts_at_zero_and_is_deterministic() {
        let h = HurstParam::new(0.3).unwrap();
        for kind in [
            SamplerKind::Cholesky,
            SamplerKind::Circulant,
            SamplerKind::Volterra,
        ] {
            let s = kind.build(grid(16), h).unwrap();
            let a = s.sample(&RngStream::new(11, 2));
            let b = s.sample(&RngStream::new(11, 2));
            assert_eq!(a.values()[0], 0.0);
            assert_eq!(a.values().len(), 17);
            assert_eq!(a, b);
        }
    }

    #[test]
    fn circulant_eigenvalues_are_nonnegative() {
        for h in [0.1, 0.3, 0.5, 0.7, 0.9] {
            let s = CirculantSampler::new(grid(100), HurstParam::new(h).unwrap()).unwrap();
            assert!(!s.fell_back());
        }
    }

    #[test]
    fn cholesky_size_limit() {
        let h = HurstParam::new(0.7).unwrap();
        assert!(CholeskySampler::new(grid(4096), h).is_err());
    }

    #[test]
    fn rescaling_is_exact() {
        let h = HurstParam::new(0.7).unwrap();
        let p = sample_circulant(&grid(8), h, &RngStream::new(1, 0)).unwrap();
        let r = rescale_selfsimilar(&p, 0.5, 2).unwrap();
        assert!((r.grid().horizon() - 0.25).abs() < 1e-15);
        let f = 0.25f64.powf(0.7);
        for (x, y) in p.values().iter().zip(r.values()) {
            assert_eq!(*y, x * f);
        }
        assert!(rescale_selfsimilar(&p, 1.0, 2).is_err());
        assert!(rescale_selfsimilar(&p, 0.5, 3).is_err());
    }

    #[test]
    fn degenerate_paths_are_rejected() {
        let g = grid(128);
        let h = HurstParam::new(0.5).unwrap();
        let rng = RngStream::new(0, 0);
        let flat = FbmPath::from_values(g, vec![0.0; 129], h, Provenance::Cholesky, rng).unwrap();
        assert!(matches!(estimate_hurst(&flat), Err(Error::Estimation(_))));
        let ramp: Vec<f64> = g.points();
        let ramp = FbmPath::from_values(g, ramp, h, Provenance::Cholesky, rng).unwrap();
        assert!(matches!(estimate_hurst(&ramp), Err(Error::Estimation(_))));
    }
}
