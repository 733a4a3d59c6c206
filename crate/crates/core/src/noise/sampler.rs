//! Sampling realisations of a bath on a uniform grid.
//!
//! [`FluxEvents`] merges many paths into one list of flux steps so grid
//! quantities (cell averages, running integrals) cost `O(events + cells)`.
//!
//! [`BathTraceSampler`] produces cell-averaged traces for PSD estimation.
//! Members switching slower than a configurable rate are drawn as exact
//! telegraph paths. Faster members are represented by a stationary Gaussian
//! sequence with exactly their summed cell-average autocovariance, drawn by
//! circulant embedding. A periodogram depends only on second moments, so
//! the estimator's expectation is unchanged, while the cost no longer grows
//! with `λ·T` for members far above the grid's Nyquist rate.

use std::sync::Arc;

use num_complex::Complex64;
use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use rustfft::{Fft, FftPlanner};

use super::flicker::FlickerBath;
use super::psd::CorrelationConvention;
use super::rtn::{sample_rtn_path, RtnPath, RtnSource};
use crate::rng::SeedTree;
use crate::{Error, Result};

/// Superposition of paths as an initial level plus timed flux steps.
#[derive(Debug, Clone, PartialEq)]
pub struct FluxEvents {
    pub initial_level: f64,
    /// `(time, step)` pairs, unordered.
    pub steps: Vec<(f64, f64)>,
}

impl FluxEvents {
    pub fn from_paths<'a>(paths: impl IntoIterator<Item = &'a RtnPath> + Clone) -> Self {
        let mut initial_level = 0.0;
        let total: usize = paths.clone().into_iter().map(|p| p.switch_times().len()).sum();
        let mut steps = Vec::with_capacity(total);
        for path in paths {
            let start = path.initial_sign().value() * path.source().amplitude();
            initial_level += start;
            let mut level = start;
            for &t in path.switch_times() {
                steps.push((t, -2.0 * level));
                level = -level;
            }
        }
        Self {
            initial_level,
            steps,
        }
    }

    /// Per-cell step sums for cells `[k·h, (k+1)·h)`, `k < n_cells`:
    /// `(Σ Δ, Σ Δ·((k+1)h − τ))`. Steps beyond the last cell are ignored.
    fn cell_moments(&self, h: f64, n_cells: usize) -> (Vec<f64>, Vec<f64>) {
        let mut a = vec![0.0; n_cells];
        let mut b = vec![0.0; n_cells];
        for &(tau, delta) in &self.steps {
            let k = (tau / h).floor();
            if k < 0.0 || k >= n_cells as f64 {
                continue;
            }
            let k = k as usize;
            a[k] += delta;
            b[k] += delta * ((k + 1) as f64 * h - tau);
        }
        (a, b)
    }

    /// Exact averages over the cells `[k·h, (k+1)·h)`.
    pub fn cell_averages(&self, h: f64, n_cells: usize) -> Vec<f64> {
        let (a, b) = self.cell_moments(h, n_cells);
        let mut level = self.initial_level;
        a.iter()
            .zip(&b)
            .map(|(&ak, &bk)| {
                let avg = level + bk / h;
                level += ak;
                avg
            })
            .collect()
    }

    /// Exact running integral `∫_0^{k·h}` at `k = 0..=n_cells`.
    pub fn running_integral(&self, h: f64, n_cells: usize) -> Vec<f64> {
        let (a, b) = self.cell_moments(h, n_cells);
        let mut out = Vec::with_capacity(n_cells + 1);
        let mut level = self.initial_level;
        let mut acc = 0.0;
        out.push(0.0);
        for (&ak, &bk) in a.iter().zip(&b) {
            acc += level * h + bk;
            level += ak;
            out.push(acc);
        }
        out
    }

    /// Level (sum of path values) just after each grid point `k·h`,
    /// `k < n_points`, i.e. counting steps at times `≤ k·h`.
    pub fn levels_at_grid(&self, h: f64, n_points: usize) -> Vec<f64> {
        let mut diff = vec![0.0; n_points];
        for &(tau, delta) in &self.steps {
            let k = (tau / h).ceil();
            if k < 0.0 || k >= n_points as f64 {
                continue;
            }
            let mut k = k as usize;
            // float division may misplace a step that sits on a node
            if k > 0 && (k - 1) as f64 * h >= tau {
                k -= 1;
            } else if (k as f64) * h < tau {
                k += 1;
                if k >= n_points {
                    continue;
                }
            }
            diff[k] += delta;
        }
        let mut level = self.initial_level;
        diff.iter()
            .map(|d| {
                level += d;
                level
            })
            .collect()
    }
}

/// Point samples `δΦ(k·dt)` for `k < n` by direct path evaluation.
pub fn point_trace(paths: &[RtnPath], dt: f64, n: usize) -> Result<Vec<f64>> {
    (0..n)
        .map(|k| super::flicker::flicker_value_at(paths, k as f64 * dt))
        .collect()
}

/// Exact cell averages of the summed paths.
pub fn cell_average_trace(paths: &[RtnPath], dt: f64, n: usize) -> Vec<f64> {
    FluxEvents::from_paths(paths).cell_averages(dt, n)
}

/// Autocovariance of the `dt`-cell averages of a symmetric RTN with
/// amplitude `b` and correlation rate `γ`, at lags `0..=max_lag`.
pub fn cell_average_autocovariance(amplitude: f64, gamma: f64, dt: f64, max_lag: usize) -> Vec<f64> {
    let a = gamma * dt;
    let b2 = amplitude * amplitude;
    let c0 = if a < 1e-4 {
        // 2(a − 1 + e^−a)/a² = 1 − a/3 + a²/12 − …
        b2 * (1.0 - a / 3.0 + a * a / 12.0)
    } else {
        b2 * 2.0 * (a + (-a).exp_m1()) / (a * a)
    };
    let edge = if a < 1e-4 {
        b2 * (1.0 - a + 7.0 * a * a / 12.0)
    } else {
        b2 * ((-a).exp_m1() / a).powi(2)
    };
    let mut out = Vec::with_capacity(max_lag + 1);
    out.push(c0);
    let decay = (-a).exp();
    let mut c = edge;
    for _ in 1..=max_lag {
        out.push(c);
        c *= decay;
        if c < 1e-300 {
            c = 0.0;
        }
    }
    out
}

struct GaussianSurrogate {
    /// `sqrt(eigenvalue / m)` of the circulant embedding, length `m = 2n`.
    weights: Vec<f64>,
    fft: Arc<dyn Fft<f64>>,
    n: usize,
    clipped_eigen_fraction: f64,
}

impl GaussianSurrogate {
    fn new(autocov: &[f64], n: usize) -> Result<Self> {
        debug_assert_eq!(autocov.len(), n + 1);
        let m = 2 * n;
        let mut row: Vec<Complex64> = Vec::with_capacity(m);
        for k in 0..=n {
            row.push(Complex64::new(autocov[k], 0.0));
        }
        for k in (1..n).rev() {
            row.push(Complex64::new(autocov[k], 0.0));
        }
        let fft = FftPlanner::<f64>::new().plan_fft_forward(m);
        fft.process(&mut row);
        let max_eig = row.iter().map(|z| z.re).fold(0.0, f64::max);
        if !(max_eig > 0.0) {
            return Err(Error::Numerical("degenerate surrogate covariance".into()));
        }
        let mut clipped = 0.0;
        let weights = row
            .iter()
            .map(|z| {
                if z.re < 0.0 {
                    clipped += -z.re;
                    0.0
                } else {
                    (z.re / m as f64).sqrt()
                }
            })
            .collect();
        Ok(Self {
            weights,
            fft,
            n,
            clipped_eigen_fraction: clipped / (max_eig * m as f64),
        })
    }

    fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> Vec<f64> {
        let mut buf: Vec<Complex64> = self
            .weights
            .iter()
            .map(|&w| {
                let re: f64 = rng.sample(StandardNormal);
                let im: f64 = rng.sample(StandardNormal);
                Complex64::new(w * re, w * im)
            })
            .collect();
        self.fft.process(&mut buf);
        buf[..self.n].iter().map(|z| z.re).collect()
    }
}

/// Draws cell-averaged traces of a flicker bath on `n_cells` cells of `dt`.
pub struct BathTraceSampler {
    exact_sources: Vec<RtnSource>,
    gaussian: Option<GaussianSurrogate>,
    gaussian_members: usize,
    dt: f64,
    n_cells: usize,
}

impl BathTraceSampler {
    /// Members with rate `≤ exact_rate_max` are simulated path by path; pass
    /// `f64::INFINITY` to simulate every member exactly.
    pub fn new(bath: &FlickerBath, dt: f64, n_cells: usize, exact_rate_max: f64) -> Result<Self> {
        if !(dt > 0.0) || n_cells < 4 {
            return Err(Error::param("need dt > 0 and at least 4 cells"));
        }
        let (exact, fast): (Vec<RtnSource>, Vec<RtnSource>) = bath
            .sources()
            .iter()
            .partition(|s| s.rate() <= exact_rate_max);
        let gaussian = if fast.is_empty() {
            None
        } else {
            let mut autocov = vec![0.0; n_cells + 1];
            for s in &fast {
                let gamma = CorrelationConvention::PoissonSwitching.correlation_rate(s.rate());
                for (acc, c) in autocov
                    .iter_mut()
                    .zip(cell_average_autocovariance(s.amplitude(), gamma, dt, n_cells))
                {
                    *acc += c;
                }
            }
            // zero-amplitude members contribute nothing
            (autocov[0] > 0.0)
                .then(|| GaussianSurrogate::new(&autocov, n_cells))
                .transpose()?
        };
        Ok(Self {
            exact_sources: exact,
            gaussian,
            gaussian_members: fast.len(),
            dt,
            n_cells,
        })
    }

    pub fn exact_members(&self) -> usize {
        self.exact_sources.len()
    }

    pub fn gaussian_members(&self) -> usize {
        self.gaussian_members
    }

    /// Fraction of the embedding spectrum clipped at zero (0 when exact).
    pub fn clipped_eigen_fraction(&self) -> f64 {
        self.gaussian
            .as_ref()
            .map_or(0.0, |g| g.clipped_eigen_fraction)
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> Result<Vec<f64>> {
        let horizon = self.dt * self.n_cells as f64;
        let paths = self
            .exact_sources
            .iter()
            .map(|&s| sample_rtn_path(s, horizon, rng))
            .collect::<Result<Vec<_>>>()?;
        let mut trace = cell_average_trace(&paths, self.dt, self.n_cells);
        if let Some(g) = &self.gaussian {
            for (x, y) in trace.iter_mut().zip(g.sample(rng)) {
                *x += y;
            }
        }
        Ok(trace)
    }

    /// `count` independent traces, trace `i` drawn from stream `i` of `seeds`.
    pub fn sample_many(&self, seeds: &SeedTree, count: usize) -> Result<Vec<Vec<f64>>> {
        (0..count)
            .into_par_iter()
            .map(|i| self.sample(&mut seeds.stream(i as u64)))
            .collect()
    }
}
