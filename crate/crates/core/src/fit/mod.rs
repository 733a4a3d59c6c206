//! Least-squares fits of Ramsey fringes and envelopes.
//!
//! Models (`p1` is the excited-state population):
//!
//! - exponential: `p1 = ½[1 + cos(Δω·t)·e^(−Γt)]`
//! - beating: `p1 = ½[1 + cos(Δω·t)·e^(−Γt)·|cos(δω·t/2)|]`
//! - envelope: `E = e^(−Γt)`

pub mod lm;

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::stats::{f_test_p_value, linear_regression};
use crate::{Error, Result};
use lm::{levenberg_marquardt, LeastSquares, LmOutcome, LmSettings};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum FitModel {
    Exponential,
    Beating,
    Envelope,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum FitFlag {
    /// Iteration cap reached before the tolerances were met.
    IterationCap,
    /// The data do not constrain the parameters (flat signal, singular
    /// normal matrix, or no measurable decay).
    NonIdentifiable,
    /// The beating model does not improve on the exponential one by the
    /// configured F-test level.
    ModelNotPreferred,
    /// The record holds less than one oscillation period.
    ShortRecord,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitResult {
    pub model: FitModel,
    /// Γ, 1/s.
    pub gamma: f64,
    /// Δω, rad/s (0 for envelope fits).
    pub delta_omega: f64,
    /// δω, rad/s (beating model only).
    pub delta_omega_split: Option<f64>,
    pub gamma_stderr: Option<f64>,
    pub delta_omega_stderr: Option<f64>,
    pub delta_omega_split_stderr: Option<f64>,
    pub residual_rms: f64,
    pub converged: bool,
    pub iterations: usize,
    pub flags: Vec<FitFlag>,
    /// p-value of the beating-vs-exponential F-test.
    pub f_test_p_value: Option<f64>,
    pub samples: usize,
}

impl FitResult {
    /// `1/Γ`; `None` when no decay was resolved.
    pub fn t2star(&self) -> Option<f64> {
        (self.gamma > 0.0 && !self.flags.contains(&FitFlag::NonIdentifiable)).then(|| 1.0 / self.gamma)
    }

    pub fn has_flag(&self, flag: FitFlag) -> bool {
        self.flags.contains(&flag)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct InitialGuess {
    pub gamma: Option<f64>,
    pub delta_omega: Option<f64>,
    pub delta_omega_split: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FitSettings {
    pub lm: LmSettings,
    /// Significance level of the beating-vs-exponential F-test.
    pub f_test_alpha: f64,
    /// Number of envelope minima used to seed the beating fit.
    pub beating_starts: usize,
}

impl Default for FitSettings {
    fn default() -> Self {
        Self {
            lm: LmSettings::default(),
            f_test_alpha: 0.01,
            beating_starts: 5,
        }
    }
}

/// Peak-to-peak signal below which a fringe is treated as flat.
const FLAT_SIGNAL: f64 = 1e-6;

struct RamseyProblem<'a> {
    t: &'a [f64],
    y: &'a [f64],
    beating: bool,
}

impl RamseyProblem<'_> {
    fn value(&self, p: &[f64], t: f64) -> f64 {
        let beat = if self.beating { (0.5 * p[2] * t).cos().abs() } else { 1.0 };
        0.5 * (1.0 + (p[1] * t).cos() * (-p[0] * t).exp() * beat)
    }
}

impl LeastSquares for RamseyProblem<'_> {
    fn dimension(&self) -> usize {
        if self.beating {
            3
        } else {
            2
        }
    }

    fn evaluate(&self, p: &[f64], r: &mut Vec<f64>, jac: &mut Vec<Vec<f64>>) {
        r.clear();
        jac.clear();
        for (&t, &y) in self.t.iter().zip(self.y) {
            let decay = (-p[0] * t).exp();
            let (s, c) = (p[1] * t).sin_cos();
            let (bs, bc) = if self.beating { (0.5 * p[2] * t).sin_cos() } else { (0.0, 1.0) };
            let beat = bc.abs();
            r.push(0.5 * (1.0 + c * decay * beat) - y);
            let mut row = vec![-0.5 * t * c * decay * beat, -0.5 * t * s * decay * beat];
            if self.beating {
                // one-sided derivative at a node: take the branch where cos > 0
                let sign = if bc < 0.0 { -1.0 } else { 1.0 };
                row.push(-0.25 * t * c * decay * sign * bs);
            }
            jac.push(row);
        }
    }

    fn residuals(&self, p: &[f64], r: &mut Vec<f64>) {
        r.clear();
        r.extend(self.t.iter().zip(self.y).map(|(&t, &y)| self.value(p, t) - y));
    }

    fn project(&self, p: &mut [f64]) {
        p[0] = p[0].max(0.0);
        p[1] = p[1].abs();
        if self.beating {
            p[2] = p[2].abs();
        }
    }
}

struct EnvelopeProblem<'a> {
    t: &'a [f64],
    y: &'a [f64],
}

impl LeastSquares for EnvelopeProblem<'_> {
    fn dimension(&self) -> usize {
        1
    }

    fn evaluate(&self, p: &[f64], r: &mut Vec<f64>, jac: &mut Vec<Vec<f64>>) {
        self.residuals(p, r);
        jac.clear();
        jac.extend(self.t.iter().map(|&t| vec![-t * (-p[0] * t).exp()]));
    }

    fn residuals(&self, p: &[f64], r: &mut Vec<f64>) {
        r.clear();
        r.extend(self.t.iter().zip(self.y).map(|(&t, &y)| (-p[0] * t).exp() - y));
    }

    fn project(&self, p: &mut [f64]) {
        p[0] = p[0].max(0.0);
    }
}

fn check_samples(times: &[f64], values: &[f64]) -> Result<()> {
    if times.len() != values.len() {
        return Err(Error::param(format!(
            "{} times but {} values",
            times.len(),
            values.len()
        )));
    }
    if times.len() < 8 {
        return Err(Error::param(format!("need >= 8 samples, got {}", times.len())));
    }
    if times.iter().chain(values).any(|x| !x.is_finite()) {
        return Err(Error::param("samples must be finite"));
    }
    if times.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::param("times must be strictly increasing"));
    }
    Ok(())
}

/// `|Σ y_k e^(−iω t_k)|` for each ω.
fn direct_dft_power(times: &[f64], y: &[f64], omegas: &[f64]) -> Vec<f64> {
    omegas
        .iter()
        .map(|&w| {
            let (mut re, mut im) = (0.0, 0.0);
            for (&t, &v) in times.iter().zip(y) {
                let (s, c) = (w * t).sin_cos();
                re += v * c;
                im -= v * s;
            }
            re * re + im * im
        })
        .collect()
}

/// Spectral peaks of the fringe, strongest first, refined by a parabola
/// in the 4× oversampled direct DFT.
fn spectral_peaks(times: &[f64], y: &[f64], count: usize) -> Vec<f64> {
    let span = times[times.len() - 1] - times[0];
    let min_dt = times
        .windows(2)
        .map(|w| w[1] - w[0])
        .fold(f64::INFINITY, f64::min);
    let nyquist = PI / min_dt;
    let dw = 2.0 * PI / span / 4.0;
    let n = ((nyquist / dw) as usize).clamp(8, 200_000);
    let omegas: Vec<f64> = (0..=n).map(|k| k as f64 * dw).collect();
    let power = direct_dft_power(times, y, &omegas);
    let mut peaks: Vec<(f64, f64)> = Vec::new();
    for k in 0..power.len() {
        let left = if k > 0 { power[k - 1] } else { f64::NEG_INFINITY };
        let right = power.get(k + 1).copied().unwrap_or(f64::NEG_INFINITY);
        if power[k] >= left && power[k] > right {
            let shift = if k > 0 && k + 1 < power.len() {
                let denom = power[k - 1] - 2.0 * power[k] + power[k + 1];
                if denom < 0.0 {
                    (0.5 * (power[k - 1] - power[k + 1]) / denom).clamp(-0.5, 0.5)
                } else {
                    0.0
                }
            } else {
                0.0
            };
            peaks.push((power[k], ((k as f64 + shift) * dw).max(0.0)));
        }
    }
    peaks.sort_by(|a, b| b.0.total_cmp(&a.0));
    peaks.into_iter().take(count).map(|(_, w)| w).collect()
}

/// Local maxima of `|y|` as `(t, |y|)`: samples of the fringe envelope.
fn fringe_peaks(times: &[f64], y: &[f64]) -> Vec<(f64, f64)> {
    let a: Vec<f64> = y.iter().map(|v| v.abs()).collect();
    let mut out = vec![(times[0], a[0])];
    for k in 1..a.len() - 1 {
        if a[k] >= a[k - 1] && a[k] > a[k + 1] {
            out.push((times[k], a[k]));
        }
    }
    out
}

/// Decay rate from a log-linear fit of the fringe peaks above 5% of the
/// largest.
fn initial_gamma(times: &[f64], y: &[f64]) -> f64 {
    let peaks = fringe_peaks(times, y);
    let top = peaks.iter().map(|p| p.1).fold(0.0, f64::max);
    let (tx, ly): (Vec<f64>, Vec<f64>) = peaks
        .iter()
        .filter(|p| p.1 > 0.05 * top)
        .map(|p| (p.0, p.1.ln()))
        .unzip();
    let span = times[times.len() - 1] - times[0];
    let floor = 0.1 / span;
    match linear_regression(&tx, &ly) {
        Some(line) if line.slope.is_finite() => (-line.slope).max(floor),
        _ => floor,
    }
}

/// Times of the deepest minima of the fringe-peak sequence.
fn envelope_minima(times: &[f64], y: &[f64], count: usize) -> Vec<f64> {
    let peaks = fringe_peaks(times, y);
    let mut minima: Vec<(f64, f64)> = Vec::new();
    for k in 1..peaks.len().saturating_sub(1) {
        if peaks[k].1 <= peaks[k - 1].1 && peaks[k].1 < peaks[k + 1].1 {
            // depth relative to the smaller neighbouring peak
            let depth = peaks[k].1 / peaks[k - 1].1.min(peaks[k + 1].1);
            minima.push((depth, peaks[k].0));
        }
    }
    minima.sort_by(|a, b| a.0.total_cmp(&b.0));
    minima.into_iter().take(count).map(|(_, t)| t).collect()
}

fn finish(
    model: FitModel,
    problem_len: usize,
    outcome: &LmOutcome,
    mut flags: Vec<FitFlag>,
    f_test: Option<f64>,
) -> FitResult {
    let p = outcome.params.len();
    let dof = problem_len.saturating_sub(p).max(1) as f64;
    let sigma2 = outcome.cost / dof;
    let se = |i: usize| -> Option<f64> {
        outcome
            .inverse_normal
            .as_ref()
            .map(|inv| (inv[i][i] * sigma2).max(0.0).sqrt())
    };
    if outcome.inverse_normal.is_none() && !flags.contains(&FitFlag::NonIdentifiable) {
        flags.push(FitFlag::NonIdentifiable);
    }
    if !outcome.converged {
        flags.push(FitFlag::IterationCap);
    }
    let (delta_omega, dw_se) = match model {
        FitModel::Envelope => (0.0, None),
        _ => (outcome.params[1], se(1)),
    };
    let (split, split_se) = match model {
        FitModel::Beating => (Some(outcome.params[2]), se(2)),
        _ => (None, None),
    };
    FitResult {
        model,
        gamma: outcome.params[0],
        delta_omega,
        delta_omega_split: split,
        gamma_stderr: se(0),
        delta_omega_stderr: dw_se,
        delta_omega_split_stderr: split_se,
        residual_rms: (outcome.cost / problem_len as f64).sqrt(),
        converged: outcome.converged && !flags.contains(&FitFlag::NonIdentifiable),
        iterations: outcome.iterations,
        flags,
        f_test_p_value: f_test,
        samples: problem_len,
    }
}

fn flat_result(model: FitModel, times: &[f64], y: &[f64]) -> FitResult {
    let rms = (y.iter().map(|v| v * v).sum::<f64>() / y.len() as f64).sqrt();
    FitResult {
        model,
        gamma: f64::MAX,
        delta_omega: 0.0,
        delta_omega_split: (model == FitModel::Beating).then_some(0.0),
        gamma_stderr: None,
        delta_omega_stderr: None,
        delta_omega_split_stderr: None,
        residual_rms: rms,
        converged: false,
        iterations: 0,
        flags: vec![FitFlag::NonIdentifiable],
        f_test_p_value: None,
        samples: times.len(),
    }
}

fn exponential_outcome(
    times: &[f64],
    p1: &[f64],
    guess: &InitialGuess,
    settings: &FitSettings,
) -> (LmOutcome, Vec<FitFlag>) {
    let y: Vec<f64> = p1.iter().map(|p| 2.0 * p - 1.0).collect();
    let dw0 = guess
        .delta_omega
        .unwrap_or_else(|| spectral_peaks(times, &y, 1).first().copied().unwrap_or(0.0));
    let g0 = guess.gamma.unwrap_or_else(|| initial_gamma(times, &y));
    let problem = RamseyProblem {
        t: times,
        y: p1,
        beating: false,
    };
    let out = levenberg_marquardt(&problem, &[g0, dw0], &settings.lm);
    let mut flags = Vec::new();
    let span = times[times.len() - 1] - times[0];
    if out.params[1] * span < 2.0 * PI {
        flags.push(FitFlag::ShortRecord);
    }
    (out, flags)
}

fn is_flat(p1: &[f64]) -> bool {
    let (lo, hi) = p1
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &p| (lo.min(p), hi.max(p)));
    hi - lo < FLAT_SIGNAL
}

/// Fits `p1 = ½[1 + cos(Δω·t)·e^(−Γt)]`.
pub fn fit_exponential_ramsey(
    times: &[f64],
    p1: &[f64],
    guess: &InitialGuess,
    settings: &FitSettings,
) -> Result<FitResult> {
    check_samples(times, p1)?;
    if is_flat(p1) {
        return Ok(flat_result(FitModel::Exponential, times, p1));
    }
    let (out, flags) = exponential_outcome(times, p1, guess, settings);
    Ok(finish(FitModel::Exponential, times.len(), &out, flags, None))
}

/// Fits `p1 = ½[1 + cos(Δω·t)·e^(−Γt)·|cos(δω·t/2)|]` from several starts
/// and keeps the lowest residual. The exponential fit is computed as well
/// for the nested-model F-test.
pub fn fit_beating_ramsey(
    times: &[f64],
    p1: &[f64],
    guess: &InitialGuess,
    settings: &FitSettings,
) -> Result<FitResult> {
    check_samples(times, p1)?;
    if is_flat(p1) {
        return Ok(flat_result(FitModel::Beating, times, p1));
    }
    let y: Vec<f64> = p1.iter().map(|p| 2.0 * p - 1.0).collect();
    let (exp_out, _) = exponential_outcome(times, p1, guess, settings);

    let mut omegas: Vec<f64> = match guess.delta_omega {
        Some(w) => vec![w],
        None => {
            let peaks = spectral_peaks(times, &y, 2);
            let mut c = peaks.clone();
            if peaks.len() == 2 {
                c.push(0.5 * (peaks[0] + peaks[1]));
            }
            c
        }
    };
    omegas.push(exp_out.params[1]);
    let splits: Vec<f64> = match guess.delta_omega_split {
        Some(s) => vec![s],
        None => envelope_minima(times, &y, settings.beating_starts)
            .into_iter()
            .map(|t| PI / t)
            .collect(),
    };
    let g0 = guess.gamma.unwrap_or_else(|| initial_gamma(times, &y));
    let problem = RamseyProblem {
        t: times,
        y: p1,
        beating: true,
    };
    let mut starts: Vec<[f64; 3]> = vec![[exp_out.params[0], exp_out.params[1], 0.0]];
    for &w in &omegas {
        for &s in &splits {
            starts.push([g0, w, s]);
        }
    }
    let best = starts
        .iter()
        .map(|s| levenberg_marquardt(&problem, s, &settings.lm))
        .min_by(|a, b| a.cost.total_cmp(&b.cost))
        .expect("at least one start");

    let n = times.len() as f64;
    let rss_beat = best.cost;
    let rss_exp = exp_out.cost;
    let gain = rss_exp - rss_beat;
    // an exponential fit at round-off level leaves nothing to explain
    let p_value = if gain <= 0.0 || rss_exp <= n * 1e-20 {
        1.0
    } else if rss_beat <= 0.0 {
        0.0
    } else {
        let f = gain / (rss_beat / (n - 3.0));
        f_test_p_value(f, 1.0, n - 3.0)
    };
    let mut flags = Vec::new();
    if !(p_value < settings.f_test_alpha) {
        flags.push(FitFlag::ModelNotPreferred);
    }
    let span = times[times.len() - 1] - times[0];
    if best.params[1] * span < 2.0 * PI {
        flags.push(FitFlag::ShortRecord);
    }
    Ok(finish(FitModel::Beating, times.len(), &best, flags, Some(p_value)))
}

/// Fits `E(t) = e^(−Γt)` to an envelope.
pub fn fit_envelope_decay(times: &[f64], envelope: &[f64], settings: &FitSettings) -> Result<FitResult> {
    check_samples(times, envelope)?;
    let (tx, ly): (Vec<f64>, Vec<f64>) = times
        .iter()
        .zip(envelope)
        .filter(|(_, &e)| e > 0.05)
        .map(|(&t, &e)| (t, e.ln()))
        .unzip();
    let g0 = linear_regression(&tx, &ly).map_or(0.0, |l| (-l.slope).max(0.0));
    let problem = EnvelopeProblem { t: times, y: envelope };
    let out = levenberg_marquardt(&problem, &[g0], &settings.lm);
    let span = times[times.len() - 1] - times[0];
    let mut flags = Vec::new();
    if out.params[0] * span < 1e-6 {
        flags.push(FitFlag::NonIdentifiable);
    }
    Ok(finish(FitModel::Envelope, times.len(), &out, flags, None))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct T2StarSummary {
    pub fits: Vec<FitResult>,
    /// `1/Γ` per row, `None` where the fit failed.
    pub t2star: Vec<Option<f64>>,
    /// Over converged rows.
    pub mean: Option<f64>,
    pub max: Option<f64>,
}

/// Envelope-only T2* for every row of a sweep.
pub fn extract_t2star_sweep(times: &[f64], rows: &[Vec<f64>], settings: &FitSettings) -> Result<T2StarSummary> {
    let fits = rows
        .iter()
        .map(|row| fit_envelope_decay(times, row, settings))
        .collect::<Result<Vec<_>>>()?;
    let t2star: Vec<Option<f64>> = fits
        .iter()
        .map(|f| if f.converged { f.t2star() } else { None })
        .collect();
    let good: Vec<f64> = t2star.iter().flatten().copied().collect();
    let mean = (!good.is_empty()).then(|| good.iter().sum::<f64>() / good.len() as f64);
    let max = good.iter().copied().reduce(f64::max);
    Ok(T2StarSummary {
        fits,
        t2star,
        mean,
        max,
    })
}
