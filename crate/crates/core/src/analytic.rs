//! Closed-form and series decay factors of a single telegraph fluctuator.
//!
//! For a fluctuator with linearised coupling `v = (dω01/dΦ)·b` and
//! switching rate `λ`, the decay factor is `⟨exp(i v ∫ s(τ) dτ)⟩` over the
//! initial sign and the Poisson switching history. Independent fluctuators
//! multiply.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// Highest series order accepted by [`truncated_decay`].
pub const MAX_SERIES_ORDER: usize = 6;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SeriesSpec {
    /// `(dω01/dΦ)·b`, rad/s.
    pub coupling: f64,
    /// Switching rate λ, Hz.
    pub rate: f64,
    /// Highest number of switches kept in the expansion.
    pub n_max: usize,
}

impl SeriesSpec {
    pub fn new(coupling: f64, rate: f64, n_max: usize) -> Result<Self> {
        if !(coupling >= 0.0 && rate >= 0.0 && coupling.is_finite() && rate.is_finite()) {
            return Err(Error::param(format!(
                "coupling and rate must be finite and >= 0, got v={coupling}, λ={rate}"
            )));
        }
        Ok(Self {
            coupling,
            rate,
            n_max,
        })
    }
}

/// Gauss-Legendre nodes and weights on `[-1, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct GaussLegendre {
    nodes: Vec<f64>,
    weights: Vec<f64>,
}

impl GaussLegendre {
    pub fn new(n: usize) -> Self {
        assert!(n >= 1);
        let mut nodes = vec![0.0; n];
        let mut weights = vec![0.0; n];
        for i in 0..n.div_ceil(2) {
            // Tricomi initial guess, then Newton on P_n
            let mut x = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
            let mut dp = 0.0;
            for _ in 0..100 {
                let (p, d) = legendre(n, x);
                dp = d;
                let dx = p / d;
                x -= dx;
                if dx.abs() < 1e-16 {
                    break;
                }
            }
            let (_, d) = legendre(n, x);
            dp = if d != 0.0 { d } else { dp };
            let w = 2.0 / ((1.0 - x * x) * dp * dp);
            nodes[i] = -x;
            nodes[n - 1 - i] = x;
            weights[i] = w;
            weights[n - 1 - i] = w;
        }
        Self { nodes, weights }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Nodes and weights mapped to `[a, b]`.
    fn mapped(&self, a: f64, b: f64) -> impl Iterator<Item = (f64, f64)> + '_ {
        let half = 0.5 * (b - a);
        let mid = 0.5 * (a + b);
        self.nodes
            .iter()
            .zip(&self.weights)
            .map(move |(&x, &w)| (mid + half * x, half * w))
    }

    pub fn integrate(&self, a: f64, b: f64, f: impl Fn(f64) -> f64) -> f64 {
        self.mapped(a, b).map(|(x, w)| w * f(x)).sum()
    }
}

fn legendre(n: usize, x: f64) -> (f64, f64) {
    let (mut p0, mut p1) = (1.0, x);
    for k in 2..=n {
        let kf = k as f64;
        let p2 = ((2.0 * kf - 1.0) * x * p1 - (kf - 1.0) * p0) / kf;
        p0 = p1;
        p1 = p2;
    }
    let p = if n == 0 { 1.0 } else { p1 };
    let dp = n as f64 * (x * p - p0) / (x * x - 1.0);
    (p, dp)
}

/// Series value with the Poisson probability mass that was left out.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TruncatedDecay {
    pub value: Complex64,
    /// `P(N > n_max)` for `N ~ Poisson(λt)`; bounds `|exact − value|`.
    pub tail_bound: f64,
}

/// Switch-number expansion of the single-fluctuator decay factor, summed up
/// to `n_max` switches.
///
/// Term `n` is `e^(−λt) λⁿ` times the ordered integral over
/// `0 < t1 < … < tn < t` of `cos(v·(Σ_k (−1)^(k+1)·2t_k + (−1)ⁿ·t))`,
/// evaluated with nested 32-node Gauss-Legendre quadrature.
pub fn truncated_decay(spec: &SeriesSpec, t: f64) -> Result<TruncatedDecay> {
    truncated_decay_with_rule(spec, t, &GaussLegendre::new(32))
}

pub fn truncated_decay_with_rule(
    spec: &SeriesSpec,
    t: f64,
    rule: &GaussLegendre,
) -> Result<TruncatedDecay> {
    if spec.n_max > MAX_SERIES_ORDER {
        return Err(Error::param(format!(
            "series order {} exceeds {MAX_SERIES_ORDER}; use exact_decay",
            spec.n_max
        )));
    }
    if !(t >= 0.0) {
        return Err(Error::param(format!("time must be >= 0, got {t}")));
    }
    let lt = spec.rate * t;
    let weight = (-lt).exp();
    let mut total = 0.0;
    let mut poisson_mass = 0.0;
    let mut lambda_pow = 1.0;
    let mut pmf = weight;
    for n in 0..=spec.n_max {
        if n > 0 {
            lambda_pow *= spec.rate;
            pmf *= lt / n as f64;
        }
        poisson_mass += pmf;
        if n > 0 && spec.rate == 0.0 {
            break;
        }
        let tail_sign = if n % 2 == 0 { 1.0 } else { -1.0 };
        let base = Complex64::from_polar(1.0, spec.coupling * tail_sign * t);
        let nested = ordered_exponential_integral(rule, spec.coupling, n, 0, 0.0, t);
        // the s0 = ±1 branches are complex conjugates, so their mean is the real part
        total += weight * lambda_pow * (base * nested).re;
    }
    let tail_bound = (1.0 - poisson_mass).max(0.0);
    if tail_bound > 1e-6 {
        log::warn!(
            "truncated decay at λt = {lt:.3e}: omitted Poisson mass {tail_bound:.2e} > 1e-6"
        );
    }
    Ok(TruncatedDecay {
        value: Complex64::new(total, 0.0),
        tail_bound,
    })
}

/// `∫_{lower<t_{k+1}<…<t_n<t} Π_j exp(i·v·c_j·t_j)` for the remaining
/// variables `k+1..=n`, with `c_j = 2·(−1)^(j+1)`.
fn ordered_exponential_integral(
    rule: &GaussLegendre,
    coupling: f64,
    n: usize,
    k: usize,
    lower: f64,
    t: f64,
) -> Complex64 {
    if k == n {
        return Complex64::new(1.0, 0.0);
    }
    let c = if k % 2 == 0 { 2.0 } else { -2.0 };
    rule.mapped(lower, t)
        .map(|(x, w)| {
            Complex64::from_polar(w, coupling * c * x)
                * ordered_exponential_integral(rule, coupling, n, k + 1, x, t)
        })
        .sum()
}

/// Generator of the sign-resolved characteristic function
/// `x_±(t) = E[exp(iφ(t)); s(t) = ±1]`:
/// `dx_±/dt = ±i·v·x_± − λ·x_± + λ·x_∓`.
pub fn conditional_generator(coupling: f64, rate: f64) -> [[Complex64; 2]; 2] {
    [
        [Complex64::new(-rate, coupling), Complex64::new(rate, 0.0)],
        [Complex64::new(rate, 0.0), Complex64::new(-rate, -coupling)],
    ]
}

/// `exp(A·t)` for a 2×2 matrix via Cayley-Hamilton:
/// `e^(τt)·[cosh(μt)·I + sinh(μt)/μ·(A − τI)]`, `τ = tr A / 2`,
/// `μ² = τ² − det A`.
pub fn expm_2x2(a: &[[Complex64; 2]; 2], t: f64) -> [[Complex64; 2]; 2] {
    let tau = 0.5 * (a[0][0] + a[1][1]);
    let det = a[0][0] * a[1][1] - a[0][1] * a[1][0];
    let mu = (tau * tau - det).sqrt();
    let z = mu * t;
    let (ch, sh_over_mu) = if z.norm() < 1e-2 {
        let z2 = z * z;
        let cosh = 1.0 + z2 * (0.5 + z2 * (1.0 / 24.0 + z2 * (1.0 / 720.0 + z2 / 40320.0)));
        let sinhc = 1.0 + z2 * (1.0 / 6.0 + z2 * (1.0 / 120.0 + z2 * (1.0 / 5040.0 + z2 / 362_880.0)));
        let e = (tau * t).exp();
        (e * cosh, e * sinhc * t)
    } else {
        let ep = ((tau + mu) * t).exp();
        let em = ((tau - mu) * t).exp();
        (0.5 * (ep + em), (ep - em) / (2.0 * mu))
    };
    let one = Complex64::new(1.0, 0.0);
    let b00 = a[0][0] - tau;
    let b11 = a[1][1] - tau;
    [
        [ch * one + sh_over_mu * b00, sh_over_mu * a[0][1]],
        [sh_over_mu * a[1][0], ch * one + sh_over_mu * b11],
    ]
}

/// Full-order single-fluctuator decay factor from the two-state system,
/// started in the uniform mixture of signs.
pub fn exact_decay(spec: &SeriesSpec, t: f64) -> Complex64 {
    let g = conditional_generator(spec.coupling, spec.rate);
    let e = expm_2x2(&g, t);
    0.5 * (e[0][0] + e[0][1] + e[1][0] + e[1][1])
}

/// Product of [`exact_decay`] over independent fluctuators.
pub fn product_decay(specs: &[SeriesSpec], t: f64) -> Complex64 {
    specs
        .iter()
        .map(|s| exact_decay(s, t))
        .fold(Complex64::new(1.0, 0.0), |acc, d| acc * d)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn spec(v: f64, l: f64, n: usize) -> SeriesSpec {
        SeriesSpec::new(v, l, n).unwrap()
    }

    /// Textbook closed form e^(−λt)[cosh μt + (λ/μ) sinh μt], μ² = λ² − v².
    fn scalar_reference(v: f64, l: f64, t: f64) -> f64 {
        let mu2 = l * l - v * v;
        let e = (-l * t).exp();
        if mu2 > 0.0 {
            let mu = mu2.sqrt();
            e * ((mu * t).cosh() + l / mu * (mu * t).sinh())
        } else if mu2 < 0.0 {
            let nu = (-mu2).sqrt();
            e * ((nu * t).cos() + l / nu * (nu * t).sin())
        } else {
            e * (1.0 + l * t)
        }
    }

    #[test]
    fn gauss_legendre_is_exact_for_polynomials() {
        let rule = GaussLegendre::new(32);
        let w_sum: f64 = rule.weights.iter().sum();
        assert!((w_sum - 2.0).abs() < 1e-13);
        let val = rule.integrate(0.0, 2.0, |x| x.powi(63));
        assert!((val / (2f64.powi(64) / 64.0) - 1.0).abs() < 1e-12);
    }

    #[test]
    fn order_zero_is_frozen_fluctuator() {
        let (v, l, t) = (3.87e5, 50.0, 37e-6);
        let d = truncated_decay(&spec(v, l, 0), t).unwrap();
        let expected = (-l * t).exp() * (v * t).cos();
        assert!((d.value.re - expected).abs() < 1e-12);
        assert!((d.value.norm() - (-l * t).exp() * (v * t).cos().abs()).abs() < 1e-12);
        assert!(truncated_decay(&spec(v, l, 7), t).is_err());
    }

    #[test]
    fn zero_coupling_series_is_poisson_mass() {
        let (l, t): (f64, f64) = (2e4, 25e-6);
        let lt = l * t;
        let mut mass = 0.0;
        let mut pmf = (-lt).exp();
        for n in 0..=4 {
            if n > 0 {
                pmf *= lt / n as f64;
            }
            mass += pmf;
            let d = truncated_decay(&spec(0.0, l, n), t).unwrap();
            assert!((d.value.re - mass).abs() < 1e-12, "n={n}");
            assert!((d.tail_bound - (1.0 - mass)).abs() < 1e-12);
        }
    }

    #[test]
    fn series_converges_to_exact_within_tail_bound() {
        for &(v, l, t) in &[(3.0e5, 1.0e4, 50e-6), (8.0e4, 2.0e4, 25e-6), (1.0e6, 5.0e3, 40e-6)] {
            let exact = exact_decay(&spec(v, l, 0), t).re;
            let mut prev_err = f64::INFINITY;
            for n in 0..=5 {
                let d = truncated_decay(&spec(v, l, n), t).unwrap();
                let err = (d.value.re - exact).abs();
                assert!(err <= d.tail_bound + 1e-10, "v={v} n={n}: {err} > {}", d.tail_bound);
                assert!(err <= prev_err + 1e-10 || err < 1e-9);
                prev_err = err;
            }
        }
    }

    #[test]
    fn reference_working_point_truncation_gap() {
        // λ = 50 Hz over 50 µs: orders 0 and 2 differ by less than P(n ≥ 1)
        let v = 3.87e5;
        let a = truncated_decay(&spec(v, 50.0, 0), 50e-6).unwrap();
        let b = truncated_decay(&spec(v, 50.0, 2), 50e-6).unwrap();
        assert!((a.value.norm() - b.value.norm()).abs() < 1.0 - (-50.0f64 * 50e-6).exp());
    }

    #[test]
    fn exact_limits_and_reference() {
        for t in [0.0, 1e-6, 13e-6, 50e-6] {
            assert!((exact_decay(&spec(0.0, 50.0, 0), t).re - 1.0).abs() < 1e-15);
            let frozen = exact_decay(&spec(3.87e5, 0.0, 0), t);
            assert!((frozen.re - (3.87e5 * t).cos()).abs() < 1e-12);
            assert!(frozen.im.abs() < 1e-12);
        }
        for &(v, l) in &[(3.87e5, 50.0), (1e5, 1e5), (1e5, 3e5), (1e5, 1.00001e5), (2e4, 1e7)] {
            for k in 0..=20 {
                let t = k as f64 * 2.5e-6;
                let d = exact_decay(&spec(v, l, 0), t);
                assert!((d.re - scalar_reference(v, l, t)).abs() < 1e-10, "v={v} λ={l} t={t}");
                assert!(d.im.abs() < 1e-10);
                assert!(d.norm() <= 1.0 + 1e-12);
            }
        }
    }

    #[test]
    fn product_of_specs() {
        let a = spec(3e5, 50.0, 0);
        let b = spec(1e5, 2e3, 0);
        let t = 17e-6;
        assert_eq!(product_decay(&[], t), Complex64::new(1.0, 0.0));
        assert_eq!(product_decay(&[a], t), exact_decay(&a, t));
        let p = product_decay(&[a, b], t);
        assert!((p - exact_decay(&a, t) * exact_decay(&b, t)).norm() < 1e-15);
    }
}
