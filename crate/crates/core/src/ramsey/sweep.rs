use rayon::prelude::*;
use serde::Serialize;

use super::{beating_contrast, decay_factor_mc, distribute_amplitudes, DecayTrace, RamseyConfig};
use crate::fit::{extract_t2star_sweep, FitResult, FitSettings};
use crate::noise::RtnSource;
use crate::qubit::invert_frequency;
use crate::rng::{domain, SeedTree};
use crate::Result;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepRow {
    pub f01_hz: f64,
    pub phi_b: f64,
    pub domega_dphi: f64,
    pub trace: DecayTrace,
    pub envelope_fit: FitResult,
    pub t2star: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SkippedRow {
    pub f01_hz: f64,
    pub reason: String,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepResult {
    pub rows: Vec<SweepRow>,
    pub skipped: Vec<SkippedRow>,
    pub t2star_mean: Option<f64>,
    pub t2star_max: Option<f64>,
}

impl SweepResult {
    pub fn times(&self) -> &[f64] {
        self.rows.first().map_or(&[], |r| r.trace.times.as_slice())
    }
}

/// Decay traces across qubit frequencies. Every row reuses the seed of
/// `base`, so rows differ only through the working point.
pub fn frequency_sweep(f01_grid_hz: &[f64], base: &RamseyConfig) -> Result<SweepResult> {
    let outcomes: Vec<std::result::Result<(f64, f64, DecayTrace), SkippedRow>> = f01_grid_hz
        .par_iter()
        .map(|&f| {
            let run = || -> Result<(f64, f64, DecayTrace)> {
                let phi_b = invert_frequency(&base.params, f)?;
                let config = RamseyConfig {
                    phi_b,
                    ..base.clone()
                };
                let wp = config.working_point()?;
                Ok((phi_b, wp.domega_dphi, decay_factor_mc(&config)?))
            };
            run().map_err(|e| SkippedRow {
                f01_hz: f,
                reason: e.to_string(),
            })
        })
        .collect();
    let mut done = Vec::new();
    let mut skipped = Vec::new();
    for (f, o) in f01_grid_hz.iter().zip(outcomes) {
        match o {
            Ok(row) => done.push((*f, row)),
            Err(s) => {
                log::warn!("skipping f01 = {} Hz: {}", s.f01_hz, s.reason);
                skipped.push(s);
            }
        }
    }
    let times = done.first().map(|(_, r)| r.2.times.clone()).unwrap_or_default();
    let envelopes: Vec<Vec<f64>> = done.iter().map(|(_, r)| r.2.envelope.clone()).collect();
    let summary = if done.is_empty() {
        None
    } else {
        Some(extract_t2star_sweep(&times, &envelopes, &FitSettings::default())?)
    };
    let rows = match &summary {
        Some(s) => done
            .into_iter()
            .zip(s.fits.iter().zip(&s.t2star))
            .map(|((f01_hz, (phi_b, domega_dphi, trace)), (fit, t2))| SweepRow {
                f01_hz,
                phi_b,
                domega_dphi,
                trace,
                envelope_fit: fit.clone(),
                t2star: *t2,
            })
            .collect(),
        None => Vec::new(),
    };
    Ok(SweepResult {
        rows,
        skipped,
        t2star_mean: summary.as_ref().and_then(|s| s.mean),
        t2star_max: summary.as_ref().and_then(|s| s.max),
    })
}

/// One seed and source count of the amplitude-splitting study.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SplitTrial {
    pub n_sources: usize,
    pub seed: u64,
    pub amplitudes: Vec<f64>,
    pub trace: DecayTrace,
    /// Envelope of the same seed without strong fluctuators.
    pub base_envelope: Vec<f64>,
    pub contrast: f64,
}

/// Splits a total amplitude `b0_total` over `n` fluctuators of rate
/// `rate_hz` for every `n` in `source_counts` and every seed, and measures
/// the beating contrast up to the first node of the unsplit fluctuator,
/// `π/(2·|dω01/dΦb|·b0)`.
pub fn amplitude_split_study(
    base: &RamseyConfig,
    source_counts: &[usize],
    b0_total: f64,
    rate_hz: f64,
    seeds: &[u64],
) -> Result<Vec<SplitTrial>> {
    let wp = base.working_point()?;
    let t_ref = std::f64::consts::FRAC_PI_2 / (wp.domega_dphi.abs() * b0_total);
    let mut out = Vec::with_capacity(seeds.len() * source_counts.len());
    for &seed in seeds {
        let reference = RamseyConfig {
            seed,
            strong_rtns: Vec::new(),
            ..base.clone()
        };
        let base_trace = decay_factor_mc(&reference)?;
        for &n in source_counts {
            let mut rng = SeedTree::new(seed).domain(domain::AMPLITUDES).stream(n as u64);
            let amplitudes = distribute_amplitudes(n, b0_total, &mut rng)?;
            let strong_rtns = amplitudes
                .iter()
                .map(|&b| RtnSource::new(b, rate_hz))
                .collect::<Result<Vec<_>>>()?;
            let config = RamseyConfig {
                seed,
                strong_rtns,
                ..base.clone()
            };
            let trace = decay_factor_mc(&config)?;
            let contrast = beating_contrast(&trace.times, &trace.envelope, &base_trace.envelope, t_ref)?;
            out.push(SplitTrial {
                n_sources: n,
                seed,
                amplitudes,
                trace,
                base_envelope: base_trace.envelope.clone(),
                contrast,
            });
        }
    }
    Ok(out)
}
