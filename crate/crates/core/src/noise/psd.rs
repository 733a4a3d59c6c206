//! Theoretical spectra of telegraph noise and an averaged-periodogram
//! estimator for sampled traces.

use std::f64::consts::PI;

use num_complex::Complex64;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};

use super::flicker::FlickerBath;
use crate::stats::pairwise_sum_vectors;
use crate::{Error, Result};

/// Two-sided Lorentzian `b²·2γ/(ω² + γ²)` for a correlation rate `γ`.
pub fn lorentzian_psd(rate: f64, amplitude_phi0: f64, omega: f64) -> Result<f64> {
    if !(rate > 0.0) {
        return Err(Error::param(format!("Lorentzian rate must be > 0, got {rate}")));
    }
    Ok(amplitude_phi0 * amplitude_phi0 * 2.0 * rate / (omega * omega + rate * rate))
}

/// How a fluctuator's switching rate maps to the decay rate of its
/// autocorrelation.
///
/// Every Poisson event flips the sign, so `E[s(t)s(t+τ)] = e^(−2λτ)` for a
/// rate-λ switching process; `PoissonSwitching` uses that. `RateAsCorrelation`
/// keeps `γ = λ`, i.e. `R(τ) = e^(−λτ)` taken at face value.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CorrelationConvention {
    #[default]
    PoissonSwitching,
    RateAsCorrelation,
}

impl CorrelationConvention {
    pub fn factor(self) -> f64 {
        match self {
            CorrelationConvention::PoissonSwitching => 2.0,
            CorrelationConvention::RateAsCorrelation => 1.0,
        }
    }

    pub fn correlation_rate(self, switching_rate: f64) -> f64 {
        self.factor() * switching_rate
    }
}

/// Theoretical bath spectrum at one angular frequency.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct FlickerPsdTheory {
    /// Sum of the member Lorentzians.
    pub lorentzian_sum: f64,
    /// Continuum limit with a `1/λ` rate density between the cutoffs.
    pub closed_form: f64,
    /// `π b² P0 / ω`, valid deep inside the cutoffs.
    pub asymptote: f64,
}

pub fn flicker_psd_theory(
    bath: &FlickerBath,
    omega: f64,
    convention: CorrelationConvention,
) -> Result<FlickerPsdTheory> {
    if !(omega > 0.0) {
        return Err(Error::param(format!(
            "flicker PSD needs omega > 0 (1/f diverges at 0), got {omega}"
        )));
    }
    let b2 = bath.amplitude().powi(2);
    let lorentzian_sum = bath
        .sources()
        .iter()
        .map(|s| {
            let g = convention.correlation_rate(s.rate());
            b2 * 2.0 * g / (omega * omega + g * g)
        })
        .sum();
    let p0 = bath.density_normalization();
    let c = convention.factor();
    let closed_form = 2.0 * b2 * p0
        * ((c * bath.rate_max() / omega).atan() - (c * bath.rate_min() / omega).atan())
        / omega;
    Ok(FlickerPsdTheory {
        lorentzian_sum,
        closed_form,
        asymptote: PI * b2 * p0 / omega,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Window {
    #[default]
    None,
    Hann,
}

/// How the traces were obtained from the continuous process.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TraceSampling {
    /// Instantaneous values at `k·dt`.
    #[default]
    Point,
    /// Averages over `[k·dt, (k+1)·dt)`; the estimator divides out the
    /// boxcar response `sinc²(π f dt)`.
    CellAverage,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PsdOptions {
    pub window: Window,
    pub sampling: TraceSampling,
    /// Relative half-width of the band averaged to form the reference value
    /// at the normalisation frequency.
    pub normalization_bandwidth: f64,
}

impl Default for PsdOptions {
    fn default() -> Self {
        Self {
            window: Window::None,
            sampling: TraceSampling::Point,
            normalization_bandwidth: 0.1,
        }
    }
}

/// Averaged periodogram on the positive DFT frequencies, normalised so the
/// band-averaged value at `normalization_frequency` is 1.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PsdEstimate {
    pub frequencies: Vec<f64>,
    pub values: Vec<f64>,
    pub normalization_frequency: f64,
    pub paths_averaged: usize,
    /// Divisor applied to the raw periodogram (two-sided density, Φ0²/Hz).
    pub scale: f64,
    pub normalization_bandwidth: f64,
}

impl PsdEstimate {
    /// Band-averaged value around `f` over `[f/(1+w), f·(1+w)]`.
    pub fn value_at(&self, f: f64) -> Option<f64> {
        band_average(
            &self.frequencies,
            &self.values,
            f,
            self.normalization_bandwidth,
        )
    }

    /// Lowest and highest DFT frequency.
    pub fn resolvable_band(&self) -> (f64, f64) {
        (
            self.frequencies.first().copied().unwrap_or(0.0),
            self.frequencies.last().copied().unwrap_or(0.0),
        )
    }

    /// Band where aliasing and finite-record effects stay small: ten bins
    /// above DC up to half the Nyquist frequency.
    pub fn reliable_band(&self) -> (f64, f64) {
        let (lo, hi) = self.resolvable_band();
        (10.0 * lo, 0.5 * hi)
    }

    /// Log-spaced averages of the estimate (`bins_per_decade` bins) inside
    /// `[f_lo, f_hi]`, as `(geometric centre, mean value)` pairs.
    pub fn log_binned(&self, f_lo: f64, f_hi: f64, bins_per_decade: usize) -> Vec<(f64, f64)> {
        log_bin(&self.frequencies, &self.values, f_lo, f_hi, bins_per_decade)
    }
}

/// Mean of `values` over `[f/(1+width), f·(1+width)]`; linear interpolation
/// when no frequency falls inside.
pub fn band_average(freqs: &[f64], values: &[f64], f: f64, width: f64) -> Option<f64> {
    let lo = f / (1.0 + width);
    let hi = f * (1.0 + width);
    let (sum, count) = freqs
        .iter()
        .zip(values)
        .filter(|(&x, _)| x >= lo && x <= hi)
        .fold((0.0, 0usize), |(s, c), (_, &v)| (s + v, c + 1));
    if count > 0 {
        return Some(sum / count as f64);
    }
    // no bin inside the band: interpolate between neighbours
    let i = freqs.partition_point(|&x| x < f);
    if i == 0 || i == freqs.len() {
        return None;
    }
    let (f0, f1) = (freqs[i - 1], freqs[i]);
    let w = (f - f0) / (f1 - f0);
    Some(values[i - 1] * (1.0 - w) + values[i] * w)
}

pub fn log_bin(
    freqs: &[f64],
    values: &[f64],
    f_lo: f64,
    f_hi: f64,
    bins_per_decade: usize,
) -> Vec<(f64, f64)> {
    let decades = (f_hi / f_lo).log10();
    let n_bins = ((decades * bins_per_decade as f64).ceil() as usize).max(1);
    let step = decades / n_bins as f64;
    (0..n_bins)
        .filter_map(|k| {
            let a = f_lo * 10f64.powf(k as f64 * step);
            let b = f_lo * 10f64.powf((k + 1) as f64 * step);
            let (s, c) = freqs
                .iter()
                .zip(values)
                .filter(|(&x, _)| x >= a && (x < b || (k + 1 == n_bins && x <= b)))
                .fold((0.0, 0usize), |(s, c), (_, &v)| (s + v, c + 1));
            (c > 0).then(|| ((a * b).sqrt(), s / c as f64))
        })
        .collect()
}

/// Mean-subtracted averaged periodogram.
pub fn estimate_psd(
    realizations: &[Vec<f64>],
    dt: f64,
    normalization_frequency: f64,
    options: PsdOptions,
) -> Result<PsdEstimate> {
    if realizations.len() < 2 {
        return Err(Error::param("PSD estimation needs at least two realisations"));
    }
    if !(dt > 0.0) {
        return Err(Error::param(format!("dt must be > 0, got {dt}")));
    }
    let n = realizations[0].len();
    if n < 4 || realizations.iter().any(|r| r.len() != n) {
        return Err(Error::param(
            "traces must share one uniform grid of at least 4 samples",
        ));
    }
    let f_res = 1.0 / (n as f64 * dt);
    let f_nyq = 0.5 / dt;
    if !(normalization_frequency >= f_res && normalization_frequency <= f_nyq) {
        return Err(Error::param(format!(
            "normalisation frequency {normalization_frequency} Hz outside resolvable band \
             [{f_res}, {f_nyq}] Hz"
        )));
    }

    let window: Vec<f64> = match options.window {
        Window::None => vec![1.0; n],
        Window::Hann => (0..n)
            .map(|k| 0.5 - 0.5 * (2.0 * PI * k as f64 / n as f64).cos())
            .collect(),
    };
    let window_power = window.iter().map(|w| w * w).sum::<f64>() / n as f64;
    let n_pos = n / 2;

    let fft = FftPlanner::<f64>::new().plan_fft_forward(n);
    let periodograms: Vec<Vec<f64>> = realizations
        .iter()
        .map(|trace| {
            let mean = trace.iter().sum::<f64>() / n as f64;
            let mut buf: Vec<Complex64> = trace
                .iter()
                .zip(&window)
                .map(|(&x, &w)| Complex64::new((x - mean) * w, 0.0))
                .collect();
            fft.process(&mut buf);
            (1..=n_pos)
                .map(|j| buf[j].norm_sqr() * dt / (n as f64 * window_power))
                .collect()
        })
        .collect();

    let mut raw = pairwise_sum_vectors(&periodograms);
    let m = realizations.len() as f64;
    let frequencies: Vec<f64> = (1..=n_pos).map(|j| j as f64 * f_res).collect();
    for (v, &f) in raw.iter_mut().zip(&frequencies) {
        *v /= m;
        if options.sampling == TraceSampling::CellAverage {
            let x = PI * f * dt;
            let sinc = x.sin() / x;
            *v /= sinc * sinc;
        }
    }

    let scale = band_average(
        &frequencies,
        &raw,
        normalization_frequency,
        options.normalization_bandwidth,
    )
    .filter(|s| *s > 0.0)
    .ok_or_else(|| {
        Error::Numerical("zero spectral power at the normalisation frequency".into())
    })?;
    let values = raw.iter().map(|v| v / scale).collect();
    Ok(PsdEstimate {
        frequencies,
        values,
        normalization_frequency,
        paths_averaged: realizations.len(),
        scale,
        normalization_bandwidth: options.normalization_bandwidth,
    })
}

/// Raw (unnormalised) averaged periodogram; zero power is allowed.
pub fn averaged_periodogram(realizations: &[Vec<f64>], dt: f64) -> Result<(Vec<f64>, Vec<f64>)> {
    if realizations.len() < 2 {
        return Err(Error::param("PSD estimation needs at least two realisations"));
    }
    let n = realizations[0].len();
    if n < 4 || realizations.iter().any(|r| r.len() != n) {
        return Err(Error::param("traces must share one uniform grid"));
    }
    let fft = FftPlanner::<f64>::new().plan_fft_forward(n);
    let parts: Vec<Vec<f64>> = realizations
        .iter()
        .map(|trace| {
            let mean = trace.iter().sum::<f64>() / n as f64;
            let mut buf: Vec<Complex64> =
                trace.iter().map(|&x| Complex64::new(x - mean, 0.0)).collect();
            fft.process(&mut buf);
            (1..=n / 2).map(|j| buf[j].norm_sqr() * dt / n as f64).collect()
        })
        .collect();
    let m = realizations.len() as f64;
    let values = pairwise_sum_vectors(&parts).into_iter().map(|v| v / m).collect();
    let freqs = (1..=n / 2).map(|j| j as f64 / (n as f64 * dt)).collect();
    Ok((freqs, values))
}
