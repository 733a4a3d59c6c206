//! Symmetric random telegraph noise.

use rand::Rng;
use rand_distr::{Distribution, Poisson};
use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// Largest accepted fluctuator amplitude. The linearised coupling and the
/// small-noise expansion both assume amplitudes far below one flux quantum.
pub const MAX_AMPLITUDE_PHI0: f64 = 0.01;

/// One bistable fluctuator: amplitude `b` (flux quanta) and symmetric
/// switching rate `λ` (Hz).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RtnSource {
    amplitude: f64,
    rate: f64,
}

impl RtnSource {
    pub fn new(amplitude_phi0: f64, rate_hz: f64) -> Result<Self> {
        if !(amplitude_phi0.is_finite() && amplitude_phi0 >= 0.0) {
            return Err(Error::param(format!(
                "RTN amplitude must be finite and >= 0, got {amplitude_phi0}"
            )));
        }
        if amplitude_phi0 > MAX_AMPLITUDE_PHI0 {
            return Err(Error::param(format!(
                "RTN amplitude {amplitude_phi0} Φ0 exceeds {MAX_AMPLITUDE_PHI0} Φ0; \
                 the small-flux linearisation does not hold"
            )));
        }
        if !(rate_hz.is_finite() && rate_hz >= 0.0) {
            return Err(Error::param(format!(
                "switching rate must be finite and >= 0, got {rate_hz}"
            )));
        }
        Ok(Self {
            amplitude: amplitude_phi0,
            rate: rate_hz,
        })
    }

    /// Amplitude in flux quanta.
    pub fn amplitude(&self) -> f64 {
        self.amplitude
    }

    /// Switching rate in Hz.
    pub fn rate(&self) -> f64 {
        self.rate
    }
}

/// Initial state of a fluctuator.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Sign {
    Plus,
    Minus,
}

impl Sign {
    pub fn value(self) -> f64 {
        match self {
            Sign::Plus => 1.0,
            Sign::Minus => -1.0,
        }
    }

    pub fn flipped(self) -> Self {
        match self {
            Sign::Plus => Sign::Minus,
            Sign::Minus => Sign::Plus,
        }
    }
}

/// A realised RTN sample function on `[0, horizon]`.
///
/// The value at `t` is `s0 · b · (−1)^N(t)` where `N(t)` counts switch times
/// `≤ t`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RtnPath {
    source: RtnSource,
    initial_sign: Sign,
    switch_times: Vec<f64>,
    horizon: f64,
}

impl RtnPath {
    pub fn new(
        source: RtnSource,
        initial_sign: Sign,
        switch_times: Vec<f64>,
        horizon: f64,
    ) -> Result<Self> {
        if !(horizon.is_finite() && horizon > 0.0) {
            return Err(Error::param(format!("horizon must be > 0, got {horizon}")));
        }
        if let Some(w) = switch_times.windows(2).find(|w| !(w[0] < w[1])) {
            return Err(Error::Validation(format!(
                "switch times must be strictly increasing ({} then {})",
                w[0], w[1]
            )));
        }
        if let (Some(&first), Some(&last)) = (switch_times.first(), switch_times.last()) {
            if first < 0.0 || last > horizon {
                return Err(Error::Validation(format!(
                    "switch times must lie in [0, {horizon}]"
                )));
            }
        }
        Ok(Self {
            source,
            initial_sign,
            switch_times,
            horizon,
        })
    }

    /// A path that never switches.
    pub fn constant(source: RtnSource, initial_sign: Sign, horizon: f64) -> Result<Self> {
        Self::new(source, initial_sign, Vec::new(), horizon)
    }

    pub fn source(&self) -> &RtnSource {
        &self.source
    }

    pub fn initial_sign(&self) -> Sign {
        self.initial_sign
    }

    pub fn switch_times(&self) -> &[f64] {
        &self.switch_times
    }

    pub fn horizon(&self) -> f64 {
        self.horizon
    }

    fn check_time(&self, t: f64) -> Result<()> {
        if (0.0..=self.horizon).contains(&t) {
            Ok(())
        } else {
            Err(Error::Range {
                t,
                horizon: self.horizon,
            })
        }
    }

    /// Number of switches at times `≤ t`.
    pub fn switches_until(&self, t: f64) -> usize {
        self.switch_times.partition_point(|&x| x <= t)
    }

    /// Flux at time `t`, in flux quanta.
    pub fn value_at(&self, t: f64) -> Result<f64> {
        self.check_time(t)?;
        let parity = if self.switches_until(t) % 2 == 0 { 1.0 } else { -1.0 };
        Ok(self.initial_sign.value() * self.source.amplitude * parity)
    }

    /// Exact integral of the path over `[0, t]` (Φ0·s):
    /// `s0·b·(Σ_k (−1)^(k+1)·2t_k + (−1)^n·t)` over the `n` switches before `t`.
    pub fn integral(&self, t: f64) -> Result<f64> {
        self.check_time(t)?;
        let n = self.switches_until(t);
        let mut alternating = 0.0;
        for (k, &tk) in self.switch_times[..n].iter().enumerate() {
            if k % 2 == 0 {
                alternating += 2.0 * tk;
            } else {
                alternating -= 2.0 * tk;
            }
        }
        let tail = if n % 2 == 0 { t } else { -t };
        Ok(self.initial_sign.value() * self.source.amplitude * (alternating + tail))
    }
}

/// Inverse-CDF draw from the density `∝ 1/λ` on `[λmin, λmax]`.
pub fn sample_switching_rate(rate_min: f64, rate_max: f64, u: f64) -> Result<f64> {
    if !(rate_min > 0.0 && rate_min < rate_max && rate_max.is_finite()) {
        return Err(Error::param(format!(
            "need 0 < rate_min < rate_max, got [{rate_min}, {rate_max}]"
        )));
    }
    if !(0.0..=1.0).contains(&u) {
        return Err(Error::param(format!("uniform variate {u} outside [0, 1]")));
    }
    if u == 1.0 {
        return Ok(rate_max);
    }
    Ok(rate_min * (rate_max / rate_min).powf(u))
}

/// Draw one sample path on `[0, horizon]`: `n ~ Poisson(λT)`, a uniform
/// initial sign, then `n` i.i.d. uniform switch times, sorted.
pub fn sample_rtn_path<R: Rng + ?Sized>(
    source: RtnSource,
    horizon: f64,
    rng: &mut R,
) -> Result<RtnPath> {
    if !(horizon.is_finite() && horizon > 0.0) {
        return Err(Error::param(format!("horizon must be > 0, got {horizon}")));
    }
    let n = sample_poisson(source.rate * horizon, rng)?;
    let initial_sign = if rng.random::<bool>() {
        Sign::Plus
    } else {
        Sign::Minus
    };
    let switch_times = sorted_uniform_times(n, horizon, rng);
    Ok(RtnPath {
        source,
        initial_sign,
        switch_times,
        horizon,
    })
}

pub(crate) fn sample_poisson<R: Rng + ?Sized>(mean: f64, rng: &mut R) -> Result<usize> {
    if mean <= 0.0 {
        return Ok(0);
    }
    let dist = Poisson::new(mean)
        .map_err(|e| Error::param(format!("Poisson mean {mean}: {e}")))?;
    Ok(dist.sample(rng) as usize)
}

/// `n` sorted i.i.d. uniform times on `[0, horizon)`. Exact ties are redrawn
/// so the result is strictly increasing.
pub(crate) fn sorted_uniform_times<R: Rng + ?Sized>(
    n: usize,
    horizon: f64,
    rng: &mut R,
) -> Vec<f64> {
    let mut times: Vec<f64> = (0..n).map(|_| rng.random::<f64>() * horizon).collect();
    loop {
        times.sort_unstable_by(f64::total_cmp);
        let before = times.len();
        times.dedup();
        if times.len() == before {
            return times;
        }
        while times.len() < before {
            times.push(rng.random::<f64>() * horizon);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::SeedTree;

    fn src(b: f64, rate: f64) -> RtnSource {
        RtnSource::new(b, rate).unwrap()
    }

    #[test]
    fn amplitude_validation() {
        assert!(RtnSource::new(0.02, 1.0).is_err());
        assert!(RtnSource::new(-1e-6, 1.0).is_err());
        assert!(RtnSource::new(1e-5, -1.0).is_err());
        assert!(RtnSource::new(0.01, 0.0).is_ok());
    }

    #[test]
    fn switching_rate_endpoints() {
        assert_eq!(sample_switching_rate(1e2, 1e9, 0.0).unwrap(), 1e2);
        assert_eq!(sample_switching_rate(1e2, 1e9, 1.0).unwrap(), 1e9);
        let mid = sample_switching_rate(1e2, 1e8, 0.5).unwrap();
        assert!((mid - 1e5).abs() / 1e5 < 1e-12);
        assert!(sample_switching_rate(0.0, 1.0, 0.5).is_err());
        assert!(sample_switching_rate(2.0, 1.0, 0.5).is_err());
    }

    #[test]
    fn zero_rate_path_is_constant() {
        let mut rng = SeedTree::new(1).stream(0);
        let path = sample_rtn_path(src(1e-5, 0.0), 1e-3, &mut rng).unwrap();
        assert!(path.switch_times().is_empty());
        let v0 = path.value_at(0.0).unwrap();
        assert_eq!(v0.abs(), 1e-5);
        assert_eq!(path.value_at(1e-3).unwrap(), v0);
    }

    #[test]
    fn value_and_integral_of_hand_built_paths() {
        let constant = RtnPath::constant(src(1e-5, 0.0), Sign::Plus, 5e-6).unwrap();
        assert_eq!(constant.value_at(3e-6).unwrap(), 1e-5);
        assert!((constant.integral(4e-6).unwrap() - 1e-5 * 4e-6).abs() < 1e-24);

        let one = RtnPath::new(src(1e-5, 1.0), Sign::Plus, vec![1e-6], 5e-6).unwrap();
        assert_eq!(one.value_at(2e-6).unwrap(), -1e-5);
        assert_eq!(one.value_at(1e-6).unwrap(), -1e-5);
        assert_eq!(one.value_at(0.5e-6).unwrap(), 1e-5);
        // s0·b·(2t1 − t)
        let expected = 1e-5 * (2.0 * 1e-6 - 3e-6);
        assert!((one.integral(3e-6).unwrap() - expected).abs() < 1e-24);
    }

    #[test]
    fn range_errors() {
        let p = RtnPath::constant(src(1e-5, 0.0), Sign::Minus, 1e-6).unwrap();
        assert!(matches!(p.value_at(2e-6), Err(Error::Range { .. })));
        assert!(matches!(p.integral(-1e-9), Err(Error::Range { .. })));
    }

    #[test]
    fn rejects_unsorted_switch_times() {
        let s = src(1e-5, 1.0);
        assert!(RtnPath::new(s, Sign::Plus, vec![2e-6, 1e-6], 5e-6).is_err());
        assert!(RtnPath::new(s, Sign::Plus, vec![1e-6, 1e-6], 5e-6).is_err());
        assert!(RtnPath::new(s, Sign::Plus, vec![6e-6], 5e-6).is_err());
    }
}
