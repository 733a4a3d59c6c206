//! Monte Carlo Ramsey pipeline.
//!
//! Each repetition draws one path per bath member and per strong
//! fluctuator, turns the flux history into an accumulated phase, and the
//! ensemble mean of `e^(iφ)` gives the decay factor.

mod mc;
mod models;
mod sweep;

pub use mc::{decay_factor_mc, phase_trace, DecayTrace, RepetitionFailure};
pub use models::{
    beating_contrast, beating_envelope_model, binomial_readout, distribute_amplitudes,
    first_envelope_node, multi_rtn_envelope_model, ramsey_curve, residual_phase,
};
pub use sweep::{
    amplitude_split_study, frequency_sweep, SkippedRow, SplitTrial, SweepResult, SweepRow,
};

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::noise::{
    build_flicker_bath_from_spec, sample_rtn_path, BathSpec, FlickerBath, FluxEvents, RtnPath,
    RtnSource,
};
use crate::qubit::{TransmonParams, WorkingPoint};
use crate::rng::{domain, SeedTree};
use crate::{Error, Result};

/// How the flux history becomes a phase.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PhaseMode {
    /// `(dω01/dΦb)·∫δΦ`, integrated exactly between switches.
    #[default]
    Linearized,
    /// Rectangle-rule sum of `ω01(Φb + δΦ) − ω01(Φb)` at step `dt`.
    GridNonlinear,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RamseyConfig {
    pub params: TransmonParams,
    /// Bias flux, Φ0.
    pub phi_b: f64,
    /// Drive detuning Δω, rad/s.
    pub delta_omega: f64,
    pub horizon: f64,
    /// Integration step of the grid mode.
    pub dt: f64,
    /// Spacing of the reported time grid.
    pub output_step: f64,
    pub repetitions: usize,
    /// `None` disables energy relaxation.
    pub t1: Option<f64>,
    pub bath: Option<BathSpec>,
    pub strong_rtns: Vec<RtnSource>,
    pub mode: PhaseMode,
    pub seed: u64,
}

impl Default for RamseyConfig {
    fn default() -> Self {
        Self {
            params: TransmonParams::new(0.2, 15.0).expect("default transmon is valid"),
            phi_b: -0.06051,
            delta_omega: 2.0 * std::f64::consts::PI * 1e6,
            horizon: 50e-6,
            dt: 0.2e-9,
            output_step: 50e-9,
            repetitions: 3000,
            t1: Some(20e-6),
            bath: Some(default_ramsey_bath()),
            strong_rtns: vec![RtnSource::new(4.2e-5, 50.0).expect("valid source")],
            mode: PhaseMode::Linearized,
            seed: 1,
        }
    }
}

/// Bath used for dephasing runs: members faster than ~1 MHz average out
/// within a nanosecond-scale correlation time and barely dephase, so the
/// upper cutoff is lower than the PSD default.
pub fn default_ramsey_bath() -> BathSpec {
    BathSpec {
        n_sources: 3000,
        amplitude_phi0: 1e-7,
        rate_min_hz: 1e2,
        rate_max_hz: 1e6,
    }
}

impl RamseyConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.dt > 0.0 && self.dt.is_finite()) {
            return Err(Error::param(format!("dt must be > 0, got {}", self.dt)));
        }
        if !(self.horizon >= self.dt && self.horizon.is_finite()) {
            return Err(Error::param(format!(
                "horizon {} must be >= dt {}",
                self.horizon, self.dt
            )));
        }
        if !(self.output_step > 0.0 && self.output_step <= self.horizon) {
            return Err(Error::param(format!(
                "output step {} must lie in (0, horizon]",
                self.output_step
            )));
        }
        if self.repetitions == 0 {
            return Err(Error::param("need at least one repetition"));
        }
        if let Some(t1) = self.t1 {
            if !(t1 > 0.0) {
                return Err(Error::param(format!("T1 must be > 0, got {t1}")));
            }
        }
        if !self.delta_omega.is_finite() {
            return Err(Error::param("detuning must be finite"));
        }
        for s in &self.strong_rtns {
            RtnSource::new(s.amplitude(), s.rate())?;
        }
        if self.mode == PhaseMode::GridNonlinear {
            self.fine_steps_per_output()?;
        }
        WorkingPoint::new(self.params, self.phi_b)?;
        Ok(())
    }

    pub fn working_point(&self) -> Result<WorkingPoint> {
        WorkingPoint::new(self.params, self.phi_b)
    }

    /// Number of output intervals; the grid is `k·output_step`, `k = 0..=n`.
    pub fn output_intervals(&self) -> usize {
        (self.horizon / self.output_step * (1.0 + 1e-12)).floor() as usize
    }

    pub fn output_times(&self) -> Vec<f64> {
        (0..=self.output_intervals())
            .map(|k| k as f64 * self.output_step)
            .collect()
    }

    /// `output_step / dt`, which the grid mode needs to be an integer.
    pub fn fine_steps_per_output(&self) -> Result<usize> {
        let ratio = self.output_step / self.dt;
        let r = ratio.round();
        if r < 1.0 || (ratio - r).abs() > 1e-6 * r {
            return Err(Error::param(format!(
                "output step {} is not a multiple of dt {}",
                self.output_step, self.dt
            )));
        }
        Ok(r as usize)
    }

    /// The bath of this configuration; member rates depend only on the seed.
    pub fn build_bath(&self) -> Result<Option<FlickerBath>> {
        self.bath
            .as_ref()
            .map(|spec| {
                let mut rng = SeedTree::new(self.seed).domain(domain::BATH_RATES).stream(0);
                build_flicker_bath_from_spec(spec, &mut rng)
            })
            .transpose()
    }
}

/// All fluctuator paths of one repetition.
#[derive(Debug, Clone, PartialEq)]
pub struct NoiseRealization {
    pub bath: Vec<RtnPath>,
    pub strong: Vec<RtnPath>,
}

impl NoiseRealization {
    pub fn sample<R: Rng + ?Sized, S: Rng + ?Sized>(
        bath: Option<&FlickerBath>,
        strong: &[RtnSource],
        horizon: f64,
        bath_rng: &mut R,
        strong_rng: &mut S,
    ) -> Result<Self> {
        let bath = match bath {
            Some(b) => b.sample_paths(horizon, bath_rng)?,
            None => Vec::new(),
        };
        let strong = strong
            .iter()
            .map(|&s| sample_rtn_path(s, horizon, strong_rng))
            .collect::<Result<_>>()?;
        Ok(Self { bath, strong })
    }

    /// Repetition `index` of a configuration. Bath and strong paths come
    /// from separate substreams, so removing the strong fluctuators leaves
    /// the bath history unchanged.
    pub fn for_repetition(config: &RamseyConfig, bath: Option<&FlickerBath>, index: u64) -> Result<Self> {
        let seeds = SeedTree::new(config.seed);
        let mut bath_rng = seeds.domain(domain::REALIZATIONS).stream(index);
        let mut strong_rng = seeds.domain(domain::STRONG_RTN).stream(index);
        Self::sample(bath, &config.strong_rtns, config.horizon, &mut bath_rng, &mut strong_rng)
    }

    pub fn paths(&self) -> impl Iterator<Item = &RtnPath> + Clone {
        self.bath.iter().chain(&self.strong)
    }

    pub fn events(&self) -> FluxEvents {
        FluxEvents::from_paths(self.paths())
    }

    pub fn value_at(&self, t: f64) -> Result<f64> {
        self.paths().map(|p| p.value_at(t)).sum()
    }

    pub fn integral(&self, t: f64) -> Result<f64> {
        self.paths().map(|p| p.integral(t)).sum()
    }

    fn horizon(&self) -> Option<f64> {
        self.paths().next().map(RtnPath::horizon)
    }
}

/// Accumulated phase at time `t`.
///
/// In grid mode the sum runs over the left endpoints `j·dt < t`; a
/// trailing partial step is weighted by its length.
pub fn accumulate_phase(
    realization: &NoiseRealization,
    t: f64,
    working_point: &WorkingPoint,
    mode: PhaseMode,
    dt: f64,
) -> Result<f64> {
    if let Some(h) = realization.horizon() {
        if !(0.0..=h).contains(&t) {
            return Err(Error::Range { t, horizon: h });
        }
    } else if t < 0.0 {
        return Err(Error::param(format!("time must be >= 0, got {t}")));
    }
    match mode {
        PhaseMode::Linearized => Ok(working_point.domega_dphi * realization.integral(t)?),
        PhaseMode::GridNonlinear => {
            if !(dt > 0.0) {
                return Err(Error::param(format!("dt must be > 0, got {dt}")));
            }
            let ratio = t / dt;
            let mut n = ratio.round();
            if (ratio - n).abs() > 1e-9 * ratio.max(1.0) {
                n = ratio.floor();
            }
            let n = n as usize;
            let mut phase = 0.0;
            for j in 0..n {
                let tau = j as f64 * dt;
                phase += working_point.frequency_shift(realization.value_at(tau)?)? * dt;
            }
            let rest = t - n as f64 * dt;
            if rest > 0.0 {
                let tau = n as f64 * dt;
                phase += working_point.frequency_shift(realization.value_at(tau)?)? * rest;
            }
            Ok(phase)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::noise::Sign;

    fn wp() -> WorkingPoint {
        WorkingPoint::new(TransmonParams::new(0.2, 15.0).unwrap(), -0.06051).unwrap()
    }

    #[test]
    fn zero_noise_and_constant_path() {
        let empty = NoiseRealization {
            bath: vec![],
            strong: vec![],
        };
        for mode in [PhaseMode::Linearized, PhaseMode::GridNonlinear] {
            assert_eq!(accumulate_phase(&empty, 3e-6, &wp(), mode, 0.2e-9).unwrap(), 0.0);
        }
        let b = 4.2e-5;
        let path = RtnPath::constant(RtnSource::new(b, 0.0).unwrap(), Sign::Plus, 50e-6).unwrap();
        let r = NoiseRealization {
            bath: vec![],
            strong: vec![path],
        };
        let t = 7.3e-6;
        let got = accumulate_phase(&r, t, &wp(), PhaseMode::Linearized, 0.2e-9).unwrap();
        assert_eq!(got, wp().domega_dphi * (b * t));
        assert!(accumulate_phase(&r, 60e-6, &wp(), PhaseMode::Linearized, 0.2e-9).is_err());
    }

    #[test]
    fn config_validation() {
        let ok = RamseyConfig::default();
        ok.validate().unwrap();
        assert_eq!(ok.output_intervals(), 1000);
        assert_eq!(ok.fine_steps_per_output().unwrap(), 250);
        let mut bad = ok.clone();
        bad.repetitions = 0;
        assert!(bad.validate().is_err());
        let mut bad = ok.clone();
        bad.horizon = 0.1e-9;
        assert!(bad.validate().is_err());
        let mut bad = ok.clone();
        bad.mode = PhaseMode::GridNonlinear;
        bad.output_step = 50.1e-9;
        assert!(bad.validate().is_err());
        let mut bad = ok;
        bad.phi_b = 0.499;
        assert!(bad.validate().is_err());
    }
}
