use num_complex::Complex64;
use rayon::prelude::*;
use serde::Serialize;

use super::{models, NoiseRealization, PhaseMode, RamseyConfig};
use crate::noise::{FlickerBath, FluxEvents};
use crate::qubit::{QuantumNoiseLevel, WorkingPoint};
use crate::{Error, Result};

/// Repetitions per work item. Fixed so the summation tree does not depend
/// on the thread count.
const CHUNK: usize = 64;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RepetitionFailure {
    pub repetition: usize,
    pub message: String,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DecayTrace {
    pub times: Vec<f64>,
    /// Ensemble mean of `e^(iφ(t))`.
    pub decay_factor: Vec<Complex64>,
    /// Standard error of the complex mean.
    pub std_error: Vec<f64>,
    /// `|decay_factor|·e^(−t/(2T1))`.
    pub envelope: Vec<f64>,
    pub p1: Vec<f64>,
    pub delta_omega: f64,
    pub t1: Option<f64>,
    /// Repetitions that entered the average.
    pub repetitions: usize,
    pub failures: Vec<RepetitionFailure>,
}

impl DecayTrace {
    pub fn modulus(&self) -> Vec<f64> {
        self.decay_factor.iter().map(|d| d.norm()).collect()
    }

    pub(crate) fn from_decay(
        times: Vec<f64>,
        decay_factor: Vec<Complex64>,
        std_error: Vec<f64>,
        delta_omega: f64,
        t1: Option<f64>,
        repetitions: usize,
        failures: Vec<RepetitionFailure>,
    ) -> Self {
        let relax = t1.and_then(|t1| QuantumNoiseLevel::new(t1).ok());
        let envelope = times
            .iter()
            .zip(&decay_factor)
            .map(|(&t, d)| d.norm() * relax.map_or(1.0, |q| q.coherence_factor(t)))
            .collect();
        let mut trace = Self {
            times,
            decay_factor,
            std_error,
            envelope,
            p1: Vec::new(),
            delta_omega,
            t1,
            repetitions,
            failures,
        };
        trace.p1 = models::ramsey_curve(&trace, delta_omega);
        trace
    }
}

/// Phase of one realisation on the output grid of `config`.
pub fn phase_trace(
    config: &RamseyConfig,
    working_point: &WorkingPoint,
    events: &FluxEvents,
) -> Result<Vec<f64>> {
    let n_out = config.output_intervals();
    match config.mode {
        PhaseMode::Linearized => Ok(events
            .running_integral(config.output_step, n_out)
            .into_iter()
            .map(|x| working_point.domega_dphi * x)
            .collect()),
        PhaseMode::GridNonlinear => {
            let ratio = config.fine_steps_per_output()?;
            let dt = config.output_step / ratio as f64;
            let levels = events.levels_at_grid(dt, n_out * ratio);
            let mut out = Vec::with_capacity(n_out + 1);
            out.push(0.0);
            let mut acc = 0.0;
            for chunk in levels.chunks(ratio) {
                for &level in chunk {
                    acc += working_point.frequency_shift(level)? * dt;
                }
                out.push(acc);
            }
            Ok(out)
        }
    }
}

#[derive(Debug, Clone)]
struct Moments {
    count: usize,
    cos: Vec<f64>,
    sin: Vec<f64>,
    cos2: Vec<f64>,
    sin2: Vec<f64>,
    failures: Vec<RepetitionFailure>,
}

impl Moments {
    fn zeros(n: usize) -> Self {
        Self {
            count: 0,
            cos: vec![0.0; n],
            sin: vec![0.0; n],
            cos2: vec![0.0; n],
            sin2: vec![0.0; n],
            failures: Vec::new(),
        }
    }

    fn add_phases(&mut self, phases: &[f64]) {
        self.count += 1;
        for (k, &p) in phases.iter().enumerate() {
            let (s, c) = p.sin_cos();
            self.cos[k] += c;
            self.sin[k] += s;
            self.cos2[k] += c * c;
            self.sin2[k] += s * s;
        }
    }

    fn merge(mut self, other: Self) -> Self {
        self.count += other.count;
        for (a, b) in [
            (&mut self.cos, &other.cos),
            (&mut self.sin, &other.sin),
            (&mut self.cos2, &other.cos2),
            (&mut self.sin2, &other.sin2),
        ] {
            a.iter_mut().zip(b).for_each(|(x, y)| *x += y);
        }
        self.failures.extend(other.failures);
        self
    }
}

fn pairwise_merge(mut parts: Vec<Moments>) -> Option<Moments> {
    while parts.len() > 1 {
        let mut next = Vec::with_capacity(parts.len().div_ceil(2));
        let mut it = parts.into_iter();
        while let Some(a) = it.next() {
            next.push(match it.next() {
                Some(b) => a.merge(b),
                None => a,
            });
        }
        parts = next;
    }
    parts.pop()
}

fn run_repetition(
    config: &RamseyConfig,
    bath: Option<&FlickerBath>,
    working_point: &WorkingPoint,
    index: usize,
) -> Result<Vec<f64>> {
    let realization = NoiseRealization::for_repetition(config, bath, index as u64)?;
    phase_trace(config, working_point, &realization.events())
}

/// Ensemble-averaged decay factor over `config.repetitions` independent
/// noise realisations.
///
/// Repetitions that fail (for example, a grid-mode excursion to a flux
/// where the spectrum is undefined) are recorded and excluded. The result
/// is bit-identical for any thread count.
pub fn decay_factor_mc(config: &RamseyConfig) -> Result<DecayTrace> {
    config.validate()?;
    let working_point = config.working_point()?;
    let bath = config.build_bath()?;
    let times = config.output_times();
    let n = times.len();
    let m = config.repetitions;

    let parts: Vec<Moments> = (0..m.div_ceil(CHUNK))
        .into_par_iter()
        .map(|c| {
            let mut acc = Moments::zeros(n);
            for index in c * CHUNK..((c + 1) * CHUNK).min(m) {
                match run_repetition(config, bath.as_ref(), &working_point, index) {
                    Ok(phases) => acc.add_phases(&phases),
                    Err(e) => acc.failures.push(RepetitionFailure {
                        repetition: index,
                        message: e.to_string(),
                    }),
                }
            }
            acc
        })
        .collect();
    let total = pairwise_merge(parts).expect("at least one chunk");
    if total.count == 0 {
        return Err(Error::Numerical(format!(
            "all {m} repetitions failed; first: {}",
            total.failures.first().map_or("", |f| f.message.as_str())
        )));
    }
    if !total.failures.is_empty() {
        log::warn!("{} of {m} repetitions failed", total.failures.len());
    }
    let count = total.count as f64;
    let mut decay = Vec::with_capacity(n);
    let mut err = Vec::with_capacity(n);
    for k in 0..n {
        let c = total.cos[k] / count;
        let s = total.sin[k] / count;
        decay.push(Complex64::new(c, s));
        let var = (total.cos2[k] / count - c * c).max(0.0) + (total.sin2[k] / count - s * s).max(0.0);
        err.push((var / count).sqrt());
    }
    Ok(DecayTrace::from_decay(
        times,
        decay,
        err,
        config.delta_omega,
        config.t1,
        total.count,
        total.failures,
    ))
}
