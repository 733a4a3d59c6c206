//! 1/f noise as a superposition of telegraph fluctuators.

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::rtn::{sample_rtn_path, sample_switching_rate, RtnPath, RtnSource};
use crate::stats::{ks_uniform, KsResult};
use crate::{Error, Result};

/// Parameters of a flicker bath before its rates are drawn.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BathSpec {
    pub n_sources: usize,
    pub amplitude_phi0: f64,
    pub rate_min_hz: f64,
    pub rate_max_hz: f64,
}

impl Default for BathSpec {
    fn default() -> Self {
        Self {
            n_sources: 3000,
            amplitude_phi0: 1e-6,
            rate_min_hz: 1e2,
            rate_max_hz: 1e9,
        }
    }
}

/// N equal-amplitude fluctuators with log-uniform switching rates.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FlickerBath {
    sources: Vec<RtnSource>,
    rate_min: f64,
    rate_max: f64,
}

impl FlickerBath {
    /// Assemble a bath from explicit sources; all must share one amplitude
    /// and lie inside the rate cutoffs.
    pub fn from_sources(sources: Vec<RtnSource>, rate_min: f64, rate_max: f64) -> Result<Self> {
        if !(rate_min > 0.0 && rate_min < rate_max) {
            return Err(Error::param(format!(
                "need 0 < rate_min < rate_max, got [{rate_min}, {rate_max}]"
            )));
        }
        if let Some(first) = sources.first() {
            let b = first.amplitude();
            if sources.iter().any(|s| s.amplitude() != b) {
                return Err(Error::Validation("bath amplitudes must be equal".into()));
            }
        }
        if let Some(s) = sources
            .iter()
            .find(|s| s.rate() < rate_min || s.rate() > rate_max)
        {
            return Err(Error::Validation(format!(
                "rate {} outside [{rate_min}, {rate_max}]",
                s.rate()
            )));
        }
        Ok(Self {
            sources,
            rate_min,
            rate_max,
        })
    }

    pub fn sources(&self) -> &[RtnSource] {
        &self.sources
    }

    pub fn len(&self) -> usize {
        self.sources.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sources.is_empty()
    }

    pub fn rate_min(&self) -> f64 {
        self.rate_min
    }

    pub fn rate_max(&self) -> f64 {
        self.rate_max
    }

    /// Common amplitude (0 for an empty bath).
    pub fn amplitude(&self) -> f64 {
        self.sources.first().map_or(0.0, RtnSource::amplitude)
    }

    /// Normalisation of the rate density, `P0 = N / ln(λmax/λmin)`.
    pub fn density_normalization(&self) -> f64 {
        self.sources.len() as f64 / (self.rate_max / self.rate_min).ln()
    }

    /// KS test of the log-rates against the uniform law on
    /// `[ln λmin, ln λmax]`.
    pub fn log_rate_uniformity(&self) -> KsResult {
        let span = (self.rate_max / self.rate_min).ln();
        let u: Vec<f64> = self
            .sources
            .iter()
            .map(|s| (s.rate() / self.rate_min).ln() / span)
            .collect();
        ks_uniform(&u)
    }

    /// One sample path per member on `[0, horizon]`, in member order.
    pub fn sample_paths<R: Rng + ?Sized>(&self, horizon: f64, rng: &mut R) -> Result<Vec<RtnPath>> {
        self.sources
            .iter()
            .map(|&s| sample_rtn_path(s, horizon, rng))
            .collect()
    }
}

pub fn build_flicker_bath<R: Rng + ?Sized>(
    n_sources: usize,
    amplitude_phi0: f64,
    rate_min: f64,
    rate_max: f64,
    rng: &mut R,
) -> Result<FlickerBath> {
    if n_sources == 0 {
        return Err(Error::param("a flicker bath needs at least one source"));
    }
    // validates the cutoffs before any draw
    sample_switching_rate(rate_min, rate_max, 0.5)?;
    let sources = (0..n_sources)
        .map(|_| {
            let rate = sample_switching_rate(rate_min, rate_max, rng.random::<f64>())?;
            RtnSource::new(amplitude_phi0, rate)
        })
        .collect::<Result<Vec<_>>>()?;
    FlickerBath::from_sources(sources, rate_min, rate_max)
}

pub fn build_flicker_bath_from_spec<R: Rng + ?Sized>(spec: &BathSpec, rng: &mut R) -> Result<FlickerBath> {
    build_flicker_bath(
        spec.n_sources,
        spec.amplitude_phi0,
        spec.rate_min_hz,
        spec.rate_max_hz,
        rng,
    )
}

/// Total flux of a bath realisation at `t`.
pub fn flicker_value_at(paths: &[RtnPath], t: f64) -> Result<f64> {
    paths.iter().map(|p| p.value_at(t)).sum()
}
