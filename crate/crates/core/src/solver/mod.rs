//! Stage subproblem solvers.
//!
//! Subproblems are standard-form programs
//!
//! ```text
//! min  c'y + (rho/2) (My - z)' Q (My - z)
//! s.t. Ay = rhs,  y >= 0
//! ```
//!
//! where the quadratic term is optional. Linear programs go through a revised
//! simplex method whose optimal bases give the basic dual solutions cut
//! generation needs; quadratic programs are finished from the LP vertex by a
//! reduced-gradient active-set method.

mod lu;
mod qp;
mod simplex;

use std::path::PathBuf;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{dot, norm2, DenseMatrix};

pub use lu::BasisFactor;

/// Quadratic term `(rho/2) (My - z)' Q (My - z)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Quadratic {
    pub rho: f64,
    /// Symmetric positive semidefinite weight `Q`, `r x r`.
    pub weight: DenseMatrix,
    /// Map `M` from the variables to the penalized quantity, `r x n`.
    pub map: DenseMatrix,
    /// Center `z` of the penalty.
    pub center: Vec<f64>,
}

impl Quadratic {
    /// `(rho/2) (y - center)' H (y - center)` acting directly on `y`.
    pub fn on_variables(rho: f64, hessian: DenseMatrix, center: Vec<f64>) -> Self {
        let n = hessian.rows;
        Self { rho, weight: hessian, map: DenseMatrix::identity(n), center }
    }

    pub fn value(&self, y: &[f64]) -> f64 {
        let diff = self.residual(y);
        0.5 * self.rho * dot(&diff, &self.weight.mul_vec(&diff))
    }

    fn residual(&self, y: &[f64]) -> Vec<f64> {
        let mut diff = self.map.mul_vec(y);
        for (d, z) in diff.iter_mut().zip(&self.center) {
            *d -= z;
        }
        diff
    }

    /// Gradient `rho M' Q (My - z)`.
    pub fn gradient(&self, y: &[f64]) -> Vec<f64> {
        let q_diff = self.weight.mul_vec(&self.residual(y));
        let mut g = self.map.tr_mul_vec(&q_diff);
        g.iter_mut().for_each(|v| *v *= self.rho);
        g
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SubproblemSpec {
    pub cost: Vec<f64>,
    pub a: DenseMatrix,
    pub rhs: Vec<f64>,
    pub quad: Option<Quadratic>,
}

impl SubproblemSpec {
    pub fn linear(cost: Vec<f64>, a: DenseMatrix, rhs: Vec<f64>) -> Self {
        Self { cost, a, rhs, quad: None }
    }

    pub fn num_vars(&self) -> usize {
        self.a.cols
    }

    pub fn num_rows(&self) -> usize {
        self.a.rows
    }

    pub fn objective(&self, y: &[f64]) -> f64 {
        dot(&self.cost, y) + self.quad.as_ref().map_or(0.0, |q| q.value(y))
    }

    fn check(&self) -> Result<()> {
        let (m, n) = (self.a.rows, self.a.cols);
        let mismatch = |context: &str, expected, found| {
            Err(Error::DimensionMismatch { context: context.into(), expected, found })
        };
        if self.cost.len() != n {
            return mismatch("subproblem cost", n, self.cost.len());
        }
        if self.rhs.len() != m {
            return mismatch("subproblem rhs", m, self.rhs.len());
        }
        if let Some(q) = &self.quad {
            if q.map.cols != n {
                return mismatch("quadratic map columns", n, q.map.cols);
            }
            if q.weight.rows != q.map.rows || q.weight.cols != q.map.rows {
                return mismatch("quadratic weight", q.map.rows, q.weight.rows);
            }
            if q.center.len() != q.map.rows {
                return mismatch("quadratic center", q.map.rows, q.center.len());
            }
            if !(q.rho >= 0.0) || !q.rho.is_finite() {
                return Err(Error::InvalidConfig(format!("rho must be >= 0, got {}", q.rho)));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Status {
    Optimal,
    Infeasible,
    Unbounded,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SubproblemSolution {
    pub status: Status,
    pub y: Vec<f64>,
    pub objective: f64,
    /// Equality multipliers `mu`, one per row: `c + grad q - A' mu = lambda`.
    pub duals: Vec<f64>,
    /// Bound multipliers `lambda`.
    pub reduced_costs: Vec<f64>,
    /// Whether `duals` come from a simplex basis.
    pub is_basic_dual: bool,
    /// Final basis in column indices; `n + i` denotes the artificial of row `i`.
    pub basis: Vec<usize>,
    pub iterations: usize,
}

impl SubproblemSolution {
    fn non_optimal(status: Status, iterations: usize) -> Self {
        let objective = match status {
            Status::Unbounded => f64::NEG_INFINITY,
            _ => f64::INFINITY,
        };
        Self {
            status,
            y: Vec::new(),
            objective,
            duals: Vec::new(),
            reduced_costs: Vec::new(),
            is_basic_dual: false,
            basis: Vec::new(),
            iterations,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SolverOptions {
    /// Relative primal feasibility tolerance for [`verify_residuals`].
    pub eps_feas: f64,
    /// Complementary slackness tolerance.
    pub eps_comp: f64,
    pub primal_tol: f64,
    pub optimality_tol: f64,
    pub pivot_tol: f64,
    pub refactor_every: usize,
    pub max_iterations: usize,
    /// When set, every solve writes its spec and solution here.
    pub debug_dump: Option<PathBuf>,
}

impl Default for SolverOptions {
    fn default() -> Self {
        Self {
            eps_feas: 1e-8,
            eps_comp: 1e-8,
            primal_tol: 1e-9,
            optimality_tol: 1e-9,
            pivot_tol: 1e-7,
            refactor_every: 64,
            max_iterations: 200_000,
            debug_dump: None,
        }
    }
}

/// Contract the SDDP engine solves its stage problems through.
pub trait SubproblemSolver: Send + Sync {
    /// Solves `spec`, optionally warm-started from a basis of an earlier solve.
    fn solve(&self, spec: &SubproblemSpec, warm: Option<&[usize]>) -> Result<SubproblemSolution>;

    fn options(&self) -> &SolverOptions;
}

/// Dense revised simplex plus active-set QP.
#[derive(Debug, Clone, Default)]
pub struct BundledSolver {
    pub options: SolverOptions,
}

impl BundledSolver {
    pub fn new(options: SolverOptions) -> Self {
        Self { options }
    }
}

impl SubproblemSolver for BundledSolver {
    fn solve(&self, spec: &SubproblemSpec, warm: Option<&[usize]>) -> Result<SubproblemSolution> {
        let sol = match &spec.quad {
            Some(q) if q.rho > 0.0 => solve_qp_warm(spec, &self.options, warm)?,
            _ => solve_lp_warm(spec, &self.options, warm)?,
        };
        if let Some(dir) = &self.options.debug_dump {
            dump(dir, spec, &sol)?;
        }
        Ok(sol)
    }

    fn options(&self) -> &SolverOptions {
        &self.options
    }
}

fn dump(dir: &std::path::Path, spec: &SubproblemSpec, sol: &SubproblemSolution) -> Result<()> {
    use std::sync::atomic::{AtomicUsize, Ordering};
    static COUNTER: AtomicUsize = AtomicUsize::new(0);
    std::fs::create_dir_all(dir)?;
    let id = COUNTER.fetch_add(1, Ordering::Relaxed);
    let text = serde_json::to_string_pretty(&serde_json::json!({ "spec": spec, "solution": sol }))?;
    std::fs::write(dir.join(format!("subproblem-{id:06}.json")), text)?;
    Ok(())
}

/// Solves the linear part of `spec` (any quadratic term is ignored).
pub fn solve_lp(spec: &SubproblemSpec, opts: &SolverOptions) -> Result<SubproblemSolution> {
    solve_lp_warm(spec, opts, None)
}

pub fn solve_lp_warm(
    spec: &SubproblemSpec,
    opts: &SolverOptions,
    warm: Option<&[usize]>,
) -> Result<SubproblemSolution> {
    spec.check()?;
    let mut work = simplex::Work::new(&spec.a, &spec.rhs, opts);
    let outcome = simplex::run(&mut work, &spec.cost, warm)?;
    match outcome.end {
        simplex::LoopEnd::Optimal => {}
        simplex::LoopEnd::Unbounded => {
            return Ok(SubproblemSolution::non_optimal(Status::Unbounded, work.iterations))
        }
        _ => return Ok(SubproblemSolution::non_optimal(Status::Infeasible, work.iterations)),
    }
    work.refactor()?;
    work.recompute_x();
    let mut costs = spec.cost.clone();
    costs.extend(std::iter::repeat_n(0.0, work.m));
    let pi = work.multipliers(&costs);
    Ok(finish(spec, &work, &spec.cost, &pi, true))
}

/// Assembles a solution from an optimal work area; `grad` is the objective
/// gradient at the solution and `pi` the multipliers in normalized rows.
fn finish(
    spec: &SubproblemSpec,
    work: &simplex::Work<'_>,
    grad: &[f64],
    pi: &[f64],
    basic: bool,
) -> SubproblemSolution {
    let n = work.n;
    let y: Vec<f64> = work.x[..n].iter().map(|&v| v.max(0.0)).collect();
    let duals: Vec<f64> = pi.iter().zip(&work.sign).map(|(p, s)| p * s).collect();
    let at_mu = spec.a.tr_mul_vec(&duals);
    let reduced_costs = (0..n)
        .map(|j| if basic && work.is_basic[j] { 0.0 } else { grad[j] - at_mu[j] })
        .collect();
    SubproblemSolution {
        status: Status::Optimal,
        objective: if basic { dot(&spec.cost, &y) } else { spec.objective(&y) },
        y,
        duals,
        reduced_costs,
        is_basic_dual: basic,
        basis: work.basis.clone(),
        iterations: work.iterations,
    }
}

/// Solves `spec` with its quadratic term; a missing term or `rho == 0` falls
/// back to [`solve_lp`].
pub fn solve_qp(spec: &SubproblemSpec, opts: &SolverOptions) -> Result<SubproblemSolution> {
    solve_qp_warm(spec, opts, None)
}

pub fn solve_qp_warm(
    spec: &SubproblemSpec,
    opts: &SolverOptions,
    warm: Option<&[usize]>,
) -> Result<SubproblemSolution> {
    spec.check()?;
    let quad = match &spec.quad {
        Some(q) if q.rho > 0.0 => q,
        _ => return solve_lp_warm(spec, opts, warm),
    };
    if !quad.weight.is_symmetric(1e-12 * (1.0 + crate::linalg::norm_inf(&quad.weight.data))) {
        return Err(Error::InvalidConfig("quadratic weight is not symmetric".into()));
    }
    let min_eig = crate::linalg::min_eigenvalue(&quad.weight);
    if min_eig < -1e-10 * (1.0 + crate::linalg::norm_inf(&quad.weight.data)) {
        return Err(Error::InvalidConfig(format!(
            "quadratic weight is not positive semidefinite (eigenvalue {min_eig:e})"
        )));
    }
    qp::solve(spec, quad, opts, warm)
}

/// Relative primal residual `||Ay - rhs|| / (1 + ||rhs||)`.
pub fn relative_residual(sol: &SubproblemSolution, spec: &SubproblemSpec) -> f64 {
    let mut r = spec.a.mul_vec(&sol.y);
    for (ri, bi) in r.iter_mut().zip(&spec.rhs) {
        *ri -= bi;
    }
    norm2(&r) / (1.0 + norm2(&spec.rhs))
}

/// Post-solve primal feasibility check against `eps_f`.
pub fn verify_residuals(sol: &SubproblemSolution, spec: &SubproblemSpec, eps_f: f64) -> bool {
    sol.status == Status::Optimal
        && sol.y.len() == spec.num_vars()
        && relative_residual(sol, spec) <= eps_f
}

/// Largest `|y_i lambda_i|`.
pub fn complementarity_gap(sol: &SubproblemSolution) -> f64 {
    sol.y
        .iter()
        .zip(&sol.reduced_costs)
        .fold(0.0, |m, (y, l)| m.max((y * l).abs()))
}
