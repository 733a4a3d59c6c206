//! Damped Gauss-Newton for problems with a handful of parameters.

/// Stopping rules.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LmSettings {
    pub max_iterations: usize,
    /// Relative step size below which the iteration stops.
    pub step_tolerance: f64,
    /// Relative cost decrease below which the iteration stops.
    pub residual_tolerance: f64,
}

impl Default for LmSettings {
    fn default() -> Self {
        Self {
            max_iterations: 200,
            step_tolerance: 1e-10,
            residual_tolerance: 1e-12,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LmOutcome {
    pub params: Vec<f64>,
    /// Sum of squared residuals.
    pub cost: f64,
    pub iterations: usize,
    pub converged: bool,
    /// `(JᵀJ)⁻¹` at the solution, if it is well conditioned.
    pub inverse_normal: Option<Vec<Vec<f64>>>,
}

/// Residuals and Jacobian rows (`∂r_i/∂p_j`) at a parameter vector.
pub trait LeastSquares {
    fn dimension(&self) -> usize;
    fn evaluate(&self, params: &[f64], residuals: &mut Vec<f64>, jacobian: &mut Vec<Vec<f64>>);
    fn residuals(&self, params: &[f64], residuals: &mut Vec<f64>);
    /// Map a trial point back into the admissible region.
    fn project(&self, params: &mut [f64]) {
        let _ = params;
    }
}

fn normal_equations(r: &[f64], jac: &[Vec<f64>], p: usize) -> (Vec<Vec<f64>>, Vec<f64>) {
    let mut a = vec![vec![0.0; p]; p];
    let mut g = vec![0.0; p];
    for (ri, row) in r.iter().zip(jac) {
        for i in 0..p {
            g[i] += row[i] * ri;
            for j in i..p {
                a[i][j] += row[i] * row[j];
            }
        }
    }
    for i in 0..p {
        for j in 0..i {
            a[i][j] = a[j][i];
        }
    }
    (a, g)
}

/// Solves `a·x = b` by Gaussian elimination with partial pivoting.
pub(crate) fn solve(mut a: Vec<Vec<f64>>, mut b: Vec<f64>) -> Option<Vec<f64>> {
    let n = b.len();
    for col in 0..n {
        let piv = (col..n).max_by(|&i, &j| a[i][col].abs().total_cmp(&a[j][col].abs()))?;
        if a[piv][col].abs() < 1e-300 || !a[piv][col].is_finite() {
            return None;
        }
        a.swap(col, piv);
        b.swap(col, piv);
        for row in col + 1..n {
            let f = a[row][col] / a[col][col];
            for k in col..n {
                a[row][k] -= f * a[col][k];
            }
            b[row] -= f * b[col];
        }
    }
    let mut x = vec![0.0; n];
    for i in (0..n).rev() {
        let s: f64 = (i + 1..n).map(|k| a[i][k] * x[k]).sum();
        x[i] = (b[i] - s) / a[i][i];
    }
    Some(x)
}

fn invert(a: &[Vec<f64>]) -> Option<Vec<Vec<f64>>> {
    let n = a.len();
    // scale to unit diagonal so the conditioning test is unit-free
    let d: Vec<f64> = (0..n).map(|i| a[i][i].sqrt()).collect();
    if d.iter().any(|&x| !(x > 0.0)) {
        return None;
    }
    let scaled: Vec<Vec<f64>> = (0..n)
        .map(|i| (0..n).map(|j| a[i][j] / (d[i] * d[j])).collect())
        .collect();
    let mut cols = Vec::with_capacity(n);
    for k in 0..n {
        let e: Vec<f64> = (0..n).map(|i| if i == k { 1.0 } else { 0.0 }).collect();
        cols.push(solve(scaled.clone(), e)?);
    }
    let max = cols.iter().flatten().fold(0.0f64, |m, x| m.max(x.abs()));
    if max > 1e12 {
        return None;
    }
    Some(
        (0..n)
            .map(|i| (0..n).map(|j| cols[j][i] / (d[i] * d[j])).collect())
            .collect(),
    )
}

fn sum_sq(r: &[f64]) -> f64 {
    r.iter().map(|x| x * x).sum()
}

pub fn levenberg_marquardt<P: LeastSquares>(problem: &P, start: &[f64], settings: &LmSettings) -> LmOutcome {
    let p = problem.dimension();
    let mut x = start.to_vec();
    problem.project(&mut x);
    let mut r = Vec::new();
    let mut jac = Vec::new();
    problem.evaluate(&x, &mut r, &mut jac);
    let mut cost = sum_sq(&r);
    let mut mu = 1e-3;
    let mut converged = false;
    let mut iterations = 0;
    let mut trial_r = Vec::new();

    while iterations < settings.max_iterations && cost.is_finite() {
        iterations += 1;
        if cost == 0.0 {
            converged = true;
            break;
        }
        let (a, g) = normal_equations(&r, &jac, p);
        let diag_floor = 1e-12 * (0..p).map(|i| a[i][i]).fold(0.0, f64::max);
        let mut accepted = None;
        while mu < 1e16 {
            let mut damped = a.clone();
            for i in 0..p {
                damped[i][i] += mu * a[i][i].max(diag_floor).max(1e-300);
            }
            let rhs: Vec<f64> = g.iter().map(|v| -v).collect();
            let Some(step) = solve(damped, rhs) else {
                mu *= 4.0;
                continue;
            };
            let mut trial: Vec<f64> = x.iter().zip(&step).map(|(a, b)| a + b).collect();
            problem.project(&mut trial);
            problem.residuals(&trial, &mut trial_r);
            let trial_cost = sum_sq(&trial_r);
            if trial_cost.is_finite() && trial_cost <= cost {
                accepted = Some((trial, trial_cost));
                mu = (mu / 3.0).max(1e-15);
                break;
            }
            mu *= 4.0;
        }
        let Some((trial, trial_cost)) = accepted else {
            // no descent direction left at working precision
            converged = true;
            break;
        };
        let step_norm = x
            .iter()
            .zip(&trial)
            .map(|(a, b)| (a - b).powi(2))
            .sum::<f64>()
            .sqrt();
        let x_norm = x.iter().map(|a| a * a).sum::<f64>().sqrt();
        let decrease = cost - trial_cost;
        x = trial;
        problem.evaluate(&x, &mut r, &mut jac);
        cost = sum_sq(&r);
        if step_norm <= settings.step_tolerance * (x_norm + settings.step_tolerance)
            || decrease <= settings.residual_tolerance * cost
        {
            converged = true;
            break;
        }
    }
    let (a, _) = normal_equations(&r, &jac, p);
    LmOutcome {
        params: x,
        cost,
        iterations,
        converged,
        inverse_normal: invert(&a),
    }
}
