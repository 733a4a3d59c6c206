use std::f64::consts::{FRAC_PI_2, PI};

use rand::Rng;
use rand_distr::{Binomial, Distribution};

use super::DecayTrace;
use crate::qubit::WorkingPoint;
use crate::{Error, Result};

/// Phase of the decay factor modulo π, in `(−π/2, π/2]`.
///
/// A real decay factor changing sign (beating through a node) has phase 0
/// here, so only the residual asymmetry of a finite ensemble is kept.
pub fn residual_phase(d: num_complex::Complex64) -> f64 {
    if d.norm() == 0.0 {
        return 0.0;
    }
    let mut theta = d.arg();
    if theta > FRAC_PI_2 {
        theta -= PI;
    } else if theta <= -FRAC_PI_2 {
        theta += PI;
    }
    theta
}

/// `p1(t) = ½[1 + E(t)·cos(Δω·t + θ(t))]` with θ the residual phase of
/// the decay factor.
pub fn ramsey_curve(trace: &DecayTrace, delta_omega: f64) -> Vec<f64> {
    trace
        .times
        .iter()
        .zip(&trace.envelope)
        .zip(&trace.decay_factor)
        .map(|((&t, &e), &d)| 0.5 * (1.0 + e * (delta_omega * t + residual_phase(d)).cos()))
        .collect()
}

/// `E′(t) = |cos(δω·t/2)|·E_base(t)`.
pub fn beating_envelope_model(times: &[f64], base: &[f64], delta_omega_split: f64) -> Vec<f64> {
    times
        .iter()
        .zip(base)
        .map(|(&t, &e)| (0.5 * delta_omega_split * t).cos().abs() * e)
        .collect()
}

/// `E″(t) = Π_j |cos((dω01/dΦb)·b_j·t)|·E_base(t)`.
pub fn multi_rtn_envelope_model(
    times: &[f64],
    base: &[f64],
    amplitudes: &[f64],
    working_point: &WorkingPoint,
) -> Vec<f64> {
    let d = working_point.domega_dphi;
    times
        .iter()
        .zip(base)
        .map(|(&t, &e)| {
            amplitudes
                .iter()
                .map(|&b| (d * b * t).cos().abs())
                .product::<f64>()
                * e
        })
        .collect()
}

/// `n` amplitudes drawn uniformly from the simplex `Σ b_i = b0_total`
/// (gaps between sorted uniforms).
pub fn distribute_amplitudes<R: Rng + ?Sized>(n: usize, b0_total: f64, rng: &mut R) -> Result<Vec<f64>> {
    if n == 0 {
        return Err(Error::param("need at least one amplitude"));
    }
    if !(b0_total > 0.0 && b0_total.is_finite()) {
        return Err(Error::param(format!("total amplitude must be > 0, got {b0_total}")));
    }
    let mut cuts: Vec<f64> = (0..n - 1).map(|_| rng.random::<f64>()).collect();
    cuts.sort_by(f64::total_cmp);
    let mut out = Vec::with_capacity(n);
    let mut prev = 0.0;
    for &c in &cuts {
        out.push(b0_total * (c - prev));
        prev = c;
    }
    // last gap closes the sum exactly
    let used: f64 = out.iter().sum();
    out.push((b0_total - used).max(0.0));
    Ok(out)
}

/// Time of the first envelope node: the first local minimum whose drop
/// below both neighbouring maxima exceeds `min_prominence` times the
/// preceding maximum. Refined by a parabola through the three samples.
pub fn first_envelope_node(times: &[f64], envelope: &[f64], min_prominence: f64) -> Option<f64> {
    let n = envelope.len().min(times.len());
    if n < 3 {
        return None;
    }
    let mut left_max = envelope[0];
    for i in 1..n - 1 {
        let e = envelope[i];
        left_max = left_max.max(e);
        if !(e <= envelope[i - 1] && e < envelope[i + 1]) {
            continue;
        }
        let right_max = envelope[i + 1..].iter().cloned().fold(f64::MIN, f64::max);
        let drop = left_max.min(right_max) - e;
        if drop < min_prominence * left_max {
            continue;
        }
        let (y0, y1, y2) = (envelope[i - 1], e, envelope[i + 1]);
        let denom = y0 - 2.0 * y1 + y2;
        let h = times[i + 1] - times[i];
        let shift = if denom > 0.0 {
            (0.5 * (y0 - y2) / denom).clamp(-0.5, 0.5)
        } else {
            0.0
        };
        return Some(times[i] + shift * h);
    }
    None
}

/// `1 − min E(t)/E_base(t)` over `0 < t ≤ t_ref`.
pub fn beating_contrast(times: &[f64], envelope: &[f64], base: &[f64], t_ref: f64) -> Result<f64> {
    let ratios: Vec<f64> = times
        .iter()
        .zip(envelope.iter().zip(base))
        .filter(|(&t, (_, &b))| t > 0.0 && t <= t_ref * (1.0 + 1e-12) && b > 0.0)
        .map(|(_, (&e, &b))| e / b)
        .collect();
    if ratios.is_empty() {
        return Err(Error::param(format!(
            "no grid points with positive baseline in (0, {t_ref}]"
        )));
    }
    Ok(1.0 - ratios.iter().cloned().fold(f64::INFINITY, f64::min))
}

/// Binomial readout: each point becomes `k/shots` with
/// `k ~ Binomial(shots, p1)`.
pub fn binomial_readout<R: Rng + ?Sized>(p1: &[f64], shots: u64, rng: &mut R) -> Result<Vec<f64>> {
    if shots == 0 {
        return Err(Error::param("need at least one shot"));
    }
    p1.iter()
        .map(|&p| {
            let dist = Binomial::new(shots, p.clamp(0.0, 1.0))
                .map_err(|e| Error::param(format!("binomial readout: {e}")))?;
            Ok(dist.sample(rng) as f64 / shots as f64)
        })
        .collect()
}
