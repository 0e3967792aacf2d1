//! Optimal fixed-effects weights for estimating the unweighted average
//! effect.
//!
//! The weights minimize the mean squared error
//!
//! ```text
//! f(w) = Σ wᵢ² σᵢ² + (Σ wᵢ θᵢ − φᵤ)²,   Σ wᵢ = 1,  wᵢ ≥ 0
//! ```
//!
//! where φᵤ is the plain mean of the θᵢ. `f` is strictly convex on the
//! simplex, so the minimizer is unique. When every positivity margin
//! `1 + Σⱼ (θⱼ − θᵢ)(θⱼ − φᵤ)/σⱼ²` is positive the minimizer is interior and
//! has a closed form ([`closed_form_weights`]); otherwise it sits on a face
//! of the simplex and [`solve_qp`] finds it numerically. Every solution
//! carries a KKT residual from [`kkt_check`].

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{MetaError, Result};

/// Weights closer to zero than this are treated as active bounds.
pub const ACTIVE_TOL: f64 = 1e-12;
/// Negative weights above this are rounding noise and get clamped.
pub const CLAMP_TOL: f64 = 1e-14;
/// Residual the solver aims for.
pub const TARGET_RESIDUAL: f64 = 1e-10;
/// Largest residual accepted as a certified optimum.
pub const CERTIFIED_RESIDUAL: f64 = 1e-8;

/// Data of one weight problem. `phi_u` is always derived from `theta`.
#[derive(Debug, Clone, PartialEq)]
pub struct WeightProblem {
    theta: Vec<f64>,
    sigma2: Vec<f64>,
    phi_u: f64,
}

impl WeightProblem {
    pub fn new(theta: Vec<f64>, sigma2: Vec<f64>) -> Result<Self> {
        if theta.len() != sigma2.len() {
            return Err(MetaError::InvalidProblem(format!(
                "{} effects but {} variances",
                theta.len(),
                sigma2.len()
            )));
        }
        if theta.len() < 2 {
            return Err(MetaError::TooFewStudies { k: theta.len() });
        }
        if theta.iter().any(|t| !t.is_finite()) {
            return Err(MetaError::InvalidProblem("non-finite effect".into()));
        }
        if sigma2.iter().any(|&s| !(s > 0.0 && s.is_finite())) {
            return Err(MetaError::InvalidProblem(
                "variances must be positive and finite".into(),
            ));
        }
        let phi_u = theta.iter().sum::<f64>() / theta.len() as f64;
        Ok(Self {
            theta,
            sigma2,
            phi_u,
        })
    }

    pub fn k(&self) -> usize {
        self.theta.len()
    }

    pub fn theta(&self) -> &[f64] {
        &self.theta
    }

    pub fn sigma2(&self) -> &[f64] {
        &self.sigma2
    }

    pub fn phi_u(&self) -> f64 {
        self.phi_u
    }

    /// MSE of Σ wᵢ yᵢ as an estimator of φᵤ.
    pub fn objective(&self, w: &[f64]) -> f64 {
        let var: f64 = w.iter().zip(&self.sigma2).map(|(w, s)| w * w * s).sum();
        let bias = self.weighted_effect(w) - self.phi_u;
        var + bias * bias
    }

    /// ∇f(w).
    pub fn gradient(&self, w: &[f64]) -> Vec<f64> {
        let bias = self.weighted_effect(w) - self.phi_u;
        w.iter()
            .zip(&self.sigma2)
            .zip(&self.theta)
            .map(|((w, s), t)| 2.0 * s * w + 2.0 * bias * t)
            .collect()
    }

    /// Gradient with θ centered at φᵤ. On the simplex it differs from
    /// [`gradient`](Self::gradient) by a multiple of the all-ones vector.
    fn centered_gradient(&self, w: &[f64]) -> Vec<f64> {
        let bias: f64 = w
            .iter()
            .zip(&self.theta)
            .map(|(w, t)| w * (t - self.phi_u))
            .sum();
        w.iter()
            .zip(&self.sigma2)
            .zip(&self.theta)
            .map(|((w, s), t)| 2.0 * s * w + 2.0 * bias * (t - self.phi_u))
            .collect()
    }

    fn weighted_effect(&self, w: &[f64]) -> f64 {
        w.iter().zip(&self.theta).map(|(w, t)| w * t).sum()
    }

    /// `1 + Σⱼ (θⱼ − θᵢ)(θⱼ − φᵤ)/σⱼ²` for each i.
    pub fn assumption_margins(&self) -> Vec<f64> {
        (0..self.k())
            .map(|i| {
                let ti = self.theta[i];
                1.0 + self
                    .theta
                    .iter()
                    .zip(&self.sigma2)
                    .map(|(tj, sj)| (tj - ti) * (tj - self.phi_u) / sj)
                    .sum::<f64>()
            })
            .collect()
    }

    fn first_violation(&self) -> Option<(usize, f64)> {
        self.assumption_margins()
            .into_iter()
            .enumerate()
            .find(|&(_, m)| !(m > 0.0))
    }
}

/// How a weight vector was obtained.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Provenance {
    ClosedForm,
    QpSolver,
}

/// A certified point on the probability simplex.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WeightSolution {
    pub w: Vec<f64>,
    pub objective: f64,
    pub provenance: Provenance,
    pub kkt_residual: f64,
    /// Indices with wᵢ = 0.
    pub active_set: Vec<usize>,
    pub iterations: usize,
}

impl WeightSolution {
    fn certify(
        problem: &WeightProblem,
        w: Vec<f64>,
        provenance: Provenance,
        iterations: usize,
    ) -> Self {
        let active_set = w
            .iter()
            .enumerate()
            .filter(|(_, &x)| x <= ACTIVE_TOL)
            .map(|(i, _)| i)
            .collect();
        Self {
            objective: problem.objective(&w),
            kkt_residual: kkt_check(problem, &w),
            w,
            provenance,
            active_set,
            iterations,
        }
    }

    pub fn is_interior(&self) -> bool {
        self.active_set.is_empty()
    }
}

/// True iff every positivity margin is strictly positive, i.e. the optimum
/// lies in the interior of the simplex.
pub fn assumption_holds(problem: &WeightProblem) -> bool {
    problem.first_violation().is_none()
}

/// Closed-form interior optimum, wᵢ ∝ marginᵢ / σᵢ².
pub fn closed_form_weights(problem: &WeightProblem) -> Result<WeightSolution> {
    if let Some((index, margin)) = problem.first_violation() {
        return Err(MetaError::AssumptionViolated { index, margin });
    }
    let raw: Vec<f64> = problem
        .assumption_margins()
        .iter()
        .zip(problem.sigma2())
        .map(|(m, s)| m / s)
        .collect();
    let total: f64 = raw.iter().sum();
    let w = raw.iter().map(|r| r / total).collect();
    Ok(WeightSolution::certify(
        problem,
        w,
        Provenance::ClosedForm,
        0,
    ))
}

/// Interior optimum from the k×k stationarity system `A w = B` with
/// `aᵢ = σᵢ⁻²/Σσⱼ⁻²` and `bᵢ = Σⱼ (θⱼ − θᵢ) σⱼ⁻²`:
///
/// ```text
/// Aᵢⱼ = aᵢ bᵢ θⱼ − δᵢⱼ,   Bᵢ = aᵢ bᵢ φᵤ − aᵢ
/// ```
///
/// Independent of [`closed_form_weights`]; the two must agree.
pub fn linear_system_weights(problem: &WeightProblem) -> Result<Vec<f64>> {
    if let Some((index, margin)) = problem.first_violation() {
        return Err(MetaError::AssumptionViolated { index, margin });
    }
    let k = problem.k();
    let theta = problem.theta();
    let inv: Vec<f64> = problem.sigma2().iter().map(|s| 1.0 / s).collect();
    let inv_total: f64 = inv.iter().sum();
    let a: Vec<f64> = inv.iter().map(|s| s / inv_total).collect();
    let b: Vec<f64> = (0..k)
        .map(|i| {
            theta
                .iter()
                .zip(&inv)
                .map(|(tj, sj)| (tj - theta[i]) * sj)
                .sum()
        })
        .collect();
    let lhs = DMatrix::from_fn(k, k, |i, j| {
        a[i] * b[i] * theta[j] - if i == j { 1.0 } else { 0.0 }
    });
    let rhs = DVector::from_fn(k, |i, _| a[i] * b[i] * problem.phi_u() - a[i]);
    let sol = lhs.lu().solve(&rhs).ok_or(MetaError::SingularMatrix)?;
    if sol.iter().any(|x| !x.is_finite()) {
        return Err(MetaError::SingularMatrix);
    }
    Ok(sol.iter().copied().collect())
}

/// Max-norm KKT residual of `w` for the simplex-constrained problem.
///
/// The equality multiplier is the least-squares fit of the gradient over
/// the free coordinates; bound multipliers are the leftover gradient on the
/// active coordinates. Stationarity, dual feasibility and complementary
/// slackness are measured relative to `1 + max|∇f|`; primal feasibility is
/// absolute.
pub fn kkt_check(problem: &WeightProblem, w: &[f64]) -> f64 {
    if w.len() != problem.k() || w.iter().any(|x| !x.is_finite()) {
        return f64::INFINITY;
    }
    let g = problem.centered_gradient(w);
    let scale = 1.0 + g.iter().fold(0.0f64, |m, x| m.max(x.abs()));

    let sum: f64 = w.iter().sum();
    let mut residual = (sum - 1.0).abs();
    residual = w.iter().fold(residual, |r, &x| r.max(-x));

    let free: Vec<usize> = (0..w.len()).filter(|&i| w[i] > ACTIVE_TOL).collect();
    if free.is_empty() {
        return f64::INFINITY;
    }
    let lambda = free.iter().map(|&i| g[i]).sum::<f64>() / free.len() as f64;
    for i in 0..w.len() {
        let mu = g[i] - lambda;
        if w[i] > ACTIVE_TOL {
            residual = residual.max(mu.abs() / scale);
        } else {
            residual = residual.max((-mu).max(0.0) / scale);
            residual = residual.max((mu * w[i]).abs() / scale);
        }
    }
    residual
}

/// Tuning knobs for [`solve_qp_with`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QpOptions {
    pub max_iterations: usize,
    pub tolerance: f64,
    /// Re-solve stationarity exactly on the current free set.
    pub polish: bool,
}

impl Default for QpOptions {
    fn default() -> Self {
        Self {
            max_iterations: 10_000,
            tolerance: TARGET_RESIDUAL,
            polish: true,
        }
    }
}

/// Numerical optimum over the simplex; see [`solve_qp_with`].
pub fn solve_qp(problem: &WeightProblem) -> Result<WeightSolution> {
    solve_qp_with(problem, &QpOptions::default())
}

/// Projected gradient descent with Barzilai–Borwein steps and a
/// nonmonotone safeguard, followed by an exact solve on the identified
/// face. Fails with [`MetaError::SolverDiverged`] unless the final point
/// certifies to [`CERTIFIED_RESIDUAL`].
pub fn solve_qp_with(problem: &WeightProblem, opts: &QpOptions) -> Result<WeightSolution> {
    const MEMORY: usize = 10;
    let t: Vec<f64> = problem
        .theta()
        .iter()
        .map(|x| x - problem.phi_u())
        .collect();
    let lipschitz = 2.0
        * (problem.sigma2().iter().fold(0.0f64, |m, &s| m.max(s))
            + t.iter().map(|x| x * x).sum::<f64>());
    let short_step = 1.0 / lipschitz;

    let inv: Vec<f64> = problem.sigma2().iter().map(|s| 1.0 / s).collect();
    let inv_total: f64 = inv.iter().sum();
    let mut w: Vec<f64> = inv.iter().map(|s| s / inv_total).collect();
    let mut g = problem.centered_gradient(&w);
    let mut history = vec![problem.objective(&w)];
    let mut step = short_step;

    for iter in 0..opts.max_iterations {
        if opts.polish {
            if let Some(p) = polish(problem, &w) {
                let sol = WeightSolution::certify(problem, p, Provenance::QpSolver, iter);
                if sol.kkt_residual <= opts.tolerance {
                    return Ok(sol);
                }
            }
        }
        if kkt_check(problem, &w) <= opts.tolerance {
            return Ok(WeightSolution::certify(
                problem,
                w,
                Provenance::QpSolver,
                iter,
            ));
        }

        let ceiling = history.iter().fold(f64::NEG_INFINITY, |m, &f| m.max(f));
        let mut next = descend(&w, &g, step);
        let mut f_next = problem.objective(&next);
        if !(f_next <= ceiling) {
            next = descend(&w, &g, short_step);
            f_next = problem.objective(&next);
        }
        let g_next = problem.centered_gradient(&next);

        let (mut ss, mut sy) = (0.0, 0.0);
        for i in 0..w.len() {
            let s = next[i] - w[i];
            ss += s * s;
            sy += s * (g_next[i] - g[i]);
        }
        step = if sy > 0.0 && ss > 0.0 {
            ss / sy
        } else {
            short_step
        };

        w = next;
        g = g_next;
        history.push(f_next);
        if history.len() > MEMORY {
            history.remove(0);
        }
    }

    let sol = WeightSolution::certify(problem, w, Provenance::QpSolver, opts.max_iterations);
    if sol.kkt_residual <= CERTIFIED_RESIDUAL {
        Ok(sol)
    } else {
        Err(MetaError::SolverDiverged {
            iterations: opts.max_iterations,
            residual: sol.kkt_residual,
        })
    }
}

fn descend(w: &[f64], g: &[f64], step: f64) -> Vec<f64> {
    let moved: Vec<f64> = w.iter().zip(g).map(|(w, g)| w - step * g).collect();
    project_simplex(&moved)
}

/// Solves the equality-constrained problem on the free coordinates of `w`.
/// Returns `None` if the face optimum leaves the simplex.
fn polish(problem: &WeightProblem, w: &[f64]) -> Option<Vec<f64>> {
    let free: Vec<usize> = (0..w.len()).filter(|&i| w[i] > ACTIVE_TOL).collect();
    let n = free.len();
    if n == 0 {
        return None;
    }
    let t: Vec<f64> = free
        .iter()
        .map(|&i| problem.theta()[i] - problem.phi_u())
        .collect();
    // [2(D + t tᵀ)  -1] [w]   [0]
    // [   1ᵀ         0] [λ] = [1]
    let kkt = DMatrix::from_fn(n + 1, n + 1, |r, c| match (r < n, c < n) {
        (true, true) => {
            let diag = if r == c {
                problem.sigma2()[free[r]]
            } else {
                0.0
            };
            2.0 * (diag + t[r] * t[c])
        }
        (true, false) => -1.0,
        (false, true) => 1.0,
        (false, false) => 0.0,
    });
    let mut rhs = DVector::zeros(n + 1);
    rhs[n] = 1.0;
    let sol = kkt.lu().solve(&rhs)?;

    let mut out = vec![0.0; w.len()];
    for (slot, &i) in free.iter().enumerate() {
        let x = sol[slot];
        if !x.is_finite() || x < -CLAMP_TOL {
            return None;
        }
        out[i] = x.max(0.0);
    }
    let total: f64 = out.iter().sum();
    if !(total > 0.0) {
        return None;
    }
    out.iter_mut().for_each(|x| *x /= total);
    Some(out)
}

/// Closed form when the positivity condition holds, certified QP otherwise.
pub fn optimal_weights(problem: &WeightProblem) -> Result<WeightSolution> {
    if assumption_holds(problem) {
        closed_form_weights(problem)
    } else {
        solve_qp(problem)
    }
}

/// Euclidean projection onto `{x : x ≥ 0, Σx = 1}` by the sort-and-threshold
/// method.
pub fn project_simplex(v: &[f64]) -> Vec<f64> {
    let mut sorted = v.to_vec();
    sorted.sort_by(|a, b| b.total_cmp(a));
    let mut cumulative = 0.0;
    let mut threshold = 0.0;
    for (i, &u) in sorted.iter().enumerate() {
        cumulative += u;
        let candidate = (cumulative - 1.0) / (i + 1) as f64;
        if u - candidate > 0.0 {
            threshold = candidate;
        }
    }
    v.iter().map(|&x| (x - threshold).max(0.0)).collect()
}
