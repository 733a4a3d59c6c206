//! Transmon spectrum and the two-level relaxation model.
//!
//! Energies are h-frequencies in GHz, returned angular frequencies are in
//! rad/s and flux is measured in flux quanta.

use std::f64::consts::PI;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::{Error, Result};

const GHZ_TO_RAD_S: f64 = 2.0 * PI * 1e9;

/// Below this `|cos(πΦ)|` the two-level transmon formula is not trusted.
pub const MIN_ABS_COS: f64 = 0.01;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TransmonParams {
    ec_ghz: f64,
    ej_ghz: f64,
}

impl TransmonParams {
    pub const DEFAULT_MIN_RATIO: f64 = 20.0;

    pub fn new(ec_ghz: f64, ej_ghz: f64) -> Result<Self> {
        Self::with_min_ratio(ec_ghz, ej_ghz, Self::DEFAULT_MIN_RATIO)
    }

    /// As [`TransmonParams::new`] with a custom lower bound on `Ej/Ec`.
    pub fn with_min_ratio(ec_ghz: f64, ej_ghz: f64, min_ratio: f64) -> Result<Self> {
        if !(ec_ghz > 0.0 && ej_ghz > 0.0 && ec_ghz.is_finite() && ej_ghz.is_finite()) {
            return Err(Error::param(format!(
                "Ec and Ej must be positive, got Ec={ec_ghz} GHz, Ej={ej_ghz} GHz"
            )));
        }
        if ej_ghz / ec_ghz < min_ratio {
            return Err(Error::param(format!(
                "Ej/Ec = {} below transmon bound {min_ratio}",
                ej_ghz / ec_ghz
            )));
        }
        Ok(Self { ec_ghz, ej_ghz })
    }

    pub fn ec_ghz(&self) -> f64 {
        self.ec_ghz
    }

    pub fn ej_ghz(&self) -> f64 {
        self.ej_ghz
    }

    /// Spectrum maximum (at integer flux), rad/s.
    pub fn max_frequency(&self) -> f64 {
        GHZ_TO_RAD_S * ((8.0 * self.ec_ghz * self.ej_ghz).sqrt() - self.ec_ghz)
    }
}

fn checked_cos(phi_b: f64) -> Result<f64> {
    let c = (PI * phi_b).cos();
    if c.abs() <= MIN_ABS_COS {
        return Err(Error::domain(format!(
            "bias {phi_b} Φ0 too close to half flux (|cos πΦ| = {:.3e})",
            c.abs()
        )));
    }
    Ok(c)
}

/// `ω01(Φ) = 2π·10⁹·(sqrt(8·Ec·Ej·|cos πΦ|) − Ec)`.
pub fn transmon_frequency(params: &TransmonParams, phi_b: f64) -> Result<f64> {
    let c = checked_cos(phi_b)?;
    let omega =
        GHZ_TO_RAD_S * ((8.0 * params.ec_ghz * params.ej_ghz * c.abs()).sqrt() - params.ec_ghz);
    if omega <= 0.0 {
        return Err(Error::domain(format!(
            "non-positive transition frequency at {phi_b} Φ0"
        )));
    }
    Ok(omega)
}

/// `dω01/dΦ` in rad/s per flux quantum.
pub fn frequency_derivative(params: &TransmonParams, phi_b: f64) -> Result<f64> {
    let c = checked_cos(phi_b)?;
    transmon_frequency(params, phi_b)?;
    let a = 8.0 * params.ec_ghz * params.ej_ghz;
    // d|cos πΦ|/dΦ = −π sin(πΦ) sgn(cos πΦ)
    let d_abs_cos = -PI * (PI * phi_b).sin() * c.signum();
    Ok(GHZ_TO_RAD_S * a * d_abs_cos / (2.0 * (a * c.abs()).sqrt()))
}

/// Non-negative bias in `[0, 0.5)` with `ω01 = 2π·f01_target`.
pub fn invert_frequency(params: &TransmonParams, f01_target_hz: f64) -> Result<f64> {
    let f_ghz = f01_target_hz / 1e9;
    let c = (f_ghz + params.ec_ghz).powi(2) / (8.0 * params.ec_ghz * params.ej_ghz);
    if !(f01_target_hz > 0.0) || c > 1.0 + 1e-12 || c <= MIN_ABS_COS {
        return Err(Error::domain(format!(
            "{f01_target_hz:e} Hz is outside the attainable band ({:e} Hz max)",
            params.max_frequency() / (2.0 * PI)
        )));
    }
    Ok(c.min(1.0).acos() / PI)
}

/// Bias point with its frequency and first-order flux sensitivity.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WorkingPoint {
    pub params: TransmonParams,
    pub phi_b: f64,
    pub omega01: f64,
    pub domega_dphi: f64,
}

impl WorkingPoint {
    pub fn new(params: TransmonParams, phi_b: f64) -> Result<Self> {
        Ok(Self {
            params,
            phi_b,
            omega01: transmon_frequency(&params, phi_b)?,
            domega_dphi: frequency_derivative(&params, phi_b)?,
        })
    }

    /// Exact frequency shift `ω01(Φb + δΦ) − ω01(Φb)`.
    pub fn frequency_shift(&self, delta_phi: f64) -> Result<f64> {
        Ok(transmon_frequency(&self.params, self.phi_b + delta_phi)? - self.omega01)
    }
}

/// White quantum noise expressed through `T1 = ħ²/S_Q(ω01)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QuantumNoiseLevel {
    t1: f64,
}

impl QuantumNoiseLevel {
    pub fn new(t1_s: f64) -> Result<Self> {
        if !(t1_s > 0.0) {
            return Err(Error::param(format!("T1 must be > 0, got {t1_s}")));
        }
        Ok(Self { t1: t1_s })
    }

    pub fn t1(&self) -> f64 {
        self.t1
    }

    /// `exp(−t/(2T1))`, the off-diagonal relaxation factor.
    pub fn coherence_factor(&self, t: f64) -> f64 {
        (-t / (2.0 * self.t1)).exp()
    }
}

/// 2×2 density matrix in the `{|0⟩, |1⟩}` basis.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DensityMatrix(pub [[Complex64; 2]; 2]);

impl DensityMatrix {
    pub const TOLERANCE: f64 = 1e-10;

    pub fn ground() -> Self {
        Self::from_populations(1.0, 0.0)
    }

    pub fn excited() -> Self {
        Self::from_populations(0.0, 1.0)
    }

    /// `|+⟩⟨+|` with `|+⟩ = (|0⟩ + |1⟩)/√2`.
    pub fn plus() -> Self {
        let h = Complex64::new(0.5, 0.0);
        Self([[h, h], [h, h]])
    }

    fn from_populations(p0: f64, p1: f64) -> Self {
        let z = Complex64::new(0.0, 0.0);
        Self([[Complex64::new(p0, 0.0), z], [z, Complex64::new(p1, 0.0)]])
    }

    pub fn rho00(&self) -> f64 {
        self.0[0][0].re
    }

    pub fn rho11(&self) -> f64 {
        self.0[1][1].re
    }

    pub fn rho01(&self) -> Complex64 {
        self.0[0][1]
    }

    pub fn validate(&self) -> Result<()> {
        let m = &self.0;
        let tol = Self::TOLERANCE;
        if m.iter().flatten().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
            return Err(Error::Validation("non-finite density matrix entry".into()));
        }
        if m[0][0].im.abs() > tol || m[1][1].im.abs() > tol || (m[0][1] - m[1][0].conj()).norm() > tol
        {
            return Err(Error::Validation("density matrix is not Hermitian".into()));
        }
        if (m[0][0].re + m[1][1].re - 1.0).abs() > tol {
            return Err(Error::Validation("density matrix trace is not 1".into()));
        }
        let det = m[0][0].re * m[1][1].re - m[0][1].norm_sqr();
        if m[0][0].re < -tol || m[1][1].re < -tol || det < -tol {
            return Err(Error::Validation("density matrix is not positive".into()));
        }
        Ok(())
    }
}

/// Relax `rho0` for time `t`: populations decay toward `|0⟩` with `T1`,
/// coherences with `2·T1`, and the coherence picks up `accumulated_phase`.
pub fn density_matrix_evolution(
    rho0: &DensityMatrix,
    t: f64,
    noise: &QuantumNoiseLevel,
    accumulated_phase: f64,
) -> Result<DensityMatrix> {
    rho0.validate()?;
    if !(t >= 0.0) {
        return Err(Error::param(format!("evolution time must be >= 0, got {t}")));
    }
    let decay = (-t / noise.t1).exp();
    let rho11 = rho0.rho11() * decay;
    let rho00 = 1.0 - rho11;
    let coherence = rho0.rho01() * noise.coherence_factor(t) * Complex64::from_polar(1.0, accumulated_phase);
    Ok(DensityMatrix([
        [Complex64::new(rho00, 0.0), coherence],
        [coherence.conj(), Complex64::new(rho11, 0.0)],
    ]))
}

/// `T2 = 2·T1·T2φ / (2·T1 + T2φ)`; `t2phi = ∞` gives `2·T1`.
pub fn t2_from_t1_tphi(t1: f64, t2phi: f64) -> Result<f64> {
    if !(t1 > 0.0 && t2phi > 0.0) {
        return Err(Error::param("T1 and T2φ must be > 0"));
    }
    if t2phi.is_infinite() {
        return Ok(2.0 * t1);
    }
    Ok(2.0 * t1 * t2phi / (2.0 * t1 + t2phi))
}
