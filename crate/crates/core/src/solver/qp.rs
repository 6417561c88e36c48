//! Reduced-gradient active-set method for convex QPs in standard form.
//!
//! Variables are split into basic, superbasic and nonbasic (fixed at zero)
//! sets. The search space is the null space of the active constraints,
//! spanned by `Z = [-B^{-1} S; I]`; the reduced Hessian `Z'HZ` is formed
//! through the low-rank factor `M` of the penalty, so its size is the number
//! of superbasics. Zero-curvature directions are followed until a bound
//! blocks, which turns those steps into ordinary simplex pivots.

use nalgebra::{DMatrix, SymmetricEigen};

use super::simplex::{self, LoopEnd, Work};
use super::{finish, Quadratic, SolverOptions, Status, SubproblemSolution, SubproblemSpec};
use crate::error::{Error, Result};
use crate::linalg::{axpy, norm_inf};

const ZERO_STEPS_BEFORE_BLAND: usize = 50;

enum Blocker {
    None,
    Basic(usize),
    Superbasic(usize),
}

enum Outcome {
    Converged(SubproblemSolution),
    Stalled(SubproblemSolution),
}

pub(super) fn solve(
    spec: &SubproblemSpec,
    quad: &Quadratic,
    opts: &SolverOptions,
    warm: Option<&[usize]>,
) -> Result<SubproblemSolution> {
    match active_set(spec, quad, opts, warm)? {
        Outcome::Converged(sol) => Ok(sol),
        Outcome::Stalled(sol) if warm.is_none() => Ok(sol),
        Outcome::Stalled(warm_sol) => {
            let (Outcome::Converged(cold) | Outcome::Stalled(cold)) = active_set(spec, quad, opts, None)?;
            Ok(if cold.objective <= warm_sol.objective { cold } else { warm_sol })
        }
    }
}

fn active_set(
    spec: &SubproblemSpec,
    quad: &Quadratic,
    opts: &SolverOptions,
    warm: Option<&[usize]>,
) -> Result<Outcome> {
    let mut work = Work::new(&spec.a, &spec.rhs, opts);
    let start = simplex::run(&mut work, &spec.cost, warm)?;
    match start.end {
        LoopEnd::Optimal | LoopEnd::Unbounded => {}
        _ => {
            return Ok(Outcome::Converged(SubproblemSolution::non_optimal(Status::Infeasible, work.iterations)))
        }
    }
    work.refactor()?;
    work.recompute_x();

    let (m, n) = (work.m, work.n);
    let tol_rg = 1e-10;
    let mut superbasic: Vec<usize> = Vec::new();
    // reduced-gradient norm right after an unblocked Newton step; a second
    // step that cannot shrink it further means round-off has been reached
    let mut after_newton: Option<f64> = None;
    let mut zero_steps = 0usize;
    let mut iterations = 0usize;
    let weight = DMatrix::from_row_slice(quad.weight.rows, quad.weight.cols, &quad.weight.data);
    // ill-conditioned bases put a round-off floor under the reduced gradient;
    // a long run without objective progress ends the search
    let patience = (2 * (m + n)).max(200);
    let mut best = f64::INFINITY;
    let mut since_progress = 0usize;
    loop {
        iterations += 1;
        if iterations > opts.max_iterations {
            return Err(Error::NumericalBreakdown("active-set iteration limit reached".into()));
        }
        let f = spec.objective(&work.x[..n]);
        if f < best - 1e-12 * (1.0 + f.abs()) {
            best = f;
            since_progress = 0;
        } else {
            since_progress += 1;
            if since_progress >= patience {
                log::debug!("active-set search stalled at objective {f} after {iterations} iterations");
                return finish_at(spec, quad, &mut work, iterations).map(Outcome::Stalled);
            }
        }
        let grad = gradient(spec, quad, &work.x[..n]);
        let gscale = 1.0 + norm_inf(&grad);
        let mut costs = grad.clone();
        costs.extend(std::iter::repeat_n(0.0, m));
        let pi = work.multipliers(&costs);
        let rg: Vec<f64> = superbasic.iter().map(|&j| grad[j] - work.col_dot(&pi, j)).collect();

        let rg_norm = norm_inf(&rg);
        let stagnated = after_newton.is_some_and(|prev| rg_norm >= 0.5 * prev);
        after_newton = None;
        if rg_norm <= tol_rg * gscale || stagnated {
            let d = work.reduced_costs(&costs, &pi);
            let bland = zero_steps >= ZERO_STEPS_BEFORE_BLAND;
            let mut entering = None;
            let mut best = -opts.optimality_tol * gscale;
            for j in 0..n {
                if work.is_basic[j] || superbasic.contains(&j) || d[j] >= best {
                    continue;
                }
                entering = Some(j);
                if bland {
                    break;
                }
                best = d[j];
            }
            match entering {
                Some(j) => {
                    superbasic.push(j);
                    continue;
                }
                None => return finish_at(spec, quad, &mut work, iterations).map(Outcome::Converged),
            }
        }

        // null-space columns restricted to the basic rows
        let w: Vec<Vec<f64>> = superbasic.iter().map(|&j| work.factor.ftran(&work.column(j))).collect();
        let r = quad.map.rows;
        let s = superbasic.len();
        let mut mz = DMatrix::<f64>::zeros(r, s);
        for (k, &j) in superbasic.iter().enumerate() {
            for i in 0..r {
                let mut v = quad.map[(i, j)];
                for (pos, &bj) in work.basis.iter().enumerate() {
                    if bj < n {
                        v -= quad.map[(i, bj)] * w[k][pos];
                    }
                }
                mz[(i, k)] = v;
            }
        }
        let hr = (mz.transpose() * &weight * &mz) * quad.rho;
        let hr = (&hr + hr.transpose()) * 0.5;
        let eig = SymmetricEigen::new(hr.clone());
        let lmax = eig.eigenvalues.iter().fold(0.0f64, |a, &b| a.max(b.abs()));
        let curv_tol = 1e-9 * lmax.max(1.0);
        let mut p_null = vec![0.0; s];
        let mut p_newton = vec![0.0; s];
        for (e, &lambda) in eig.eigenvalues.iter().enumerate() {
            let v = eig.eigenvectors.column(e);
            let c: f64 = v.iter().zip(&rg).map(|(a, b)| a * b).sum();
            for k in 0..s {
                if lambda <= curv_tol {
                    p_null[k] -= c * v[k];
                } else {
                    p_newton[k] -= c / lambda * v[k];
                }
            }
        }
        let null_descent: f64 = p_null.iter().zip(&rg).map(|(a, b)| -a * b).sum();
        let newton = null_descent <= tol_rg * gscale * norm_inf(&p_null).max(1e-300);
        let (p, mut alpha) = if newton {
            (p_newton, 1.0)
        } else {
            // curvature below the cutoff can still be positive; stop at the
            // minimizer along the ray instead of running to a bound
            let pv = nalgebra::DVector::from_column_slice(&p_null);
            let curvature = (pv.transpose() * &hr * &pv)[(0, 0)];
            let alpha = if curvature > 0.0 { null_descent / curvature } else { f64::INFINITY };
            (p_null, alpha)
        };
        let mut db = vec![0.0; m];
        for (k, wk) in w.iter().enumerate() {
            axpy(-p[k], wk, &mut db);
        }

        let mut blocker = Blocker::None;
        let piv_tol = 1e-12 * (norm_inf(&p) + norm_inf(&db));
        for (k, &j) in superbasic.iter().enumerate() {
            if p[k] < -piv_tol {
                let ratio = work.x[j].max(0.0) / -p[k];
                if ratio < alpha {
                    alpha = ratio;
                    blocker = Blocker::Superbasic(k);
                }
            }
        }
        for (pos, &j) in work.basis.iter().enumerate() {
            let ratio = if j >= n {
                if db[pos].abs() > piv_tol {
                    0.0
                } else {
                    continue;
                }
            } else if db[pos] < -piv_tol {
                work.x[j].max(0.0) / -db[pos]
            } else {
                continue;
            };
            if ratio < alpha {
                alpha = ratio;
                blocker = Blocker::Basic(pos);
            }
        }
        if !alpha.is_finite() {
            return Ok(Outcome::Converged(SubproblemSolution::non_optimal(Status::Unbounded, work.iterations)));
        }
        zero_steps = if alpha <= 1e-14 { zero_steps + 1 } else { 0 };
        for (k, &j) in superbasic.iter().enumerate() {
            work.x[j] += alpha * p[k];
        }
        match blocker {
            Blocker::None => {
                if newton {
                    after_newton = Some(rg_norm);
                }
            }
            Blocker::Superbasic(k) => {
                let j = superbasic.remove(k);
                work.x[j] = 0.0;
            }
            Blocker::Basic(pos) => {
                let (k, _) = w
                    .iter()
                    .enumerate()
                    .map(|(k, wk)| (k, wk[pos].abs()))
                    .fold((0, -1.0), |best, c| if c.1 > best.1 { c } else { best });
                let entering = superbasic.remove(k);
                let leaving = work.basis[pos];
                work.pivot(pos, entering, &w[k])?;
                work.x[leaving] = 0.0;
            }
        }
        work.recompute_x();
    }
}

fn finish_at(
    spec: &SubproblemSpec,
    quad: &Quadratic,
    work: &mut Work,
    iterations: usize,
) -> Result<SubproblemSolution> {
    work.refactor()?;
    work.recompute_x();
    let grad = gradient(spec, quad, &work.x[..work.n]);
    let mut costs = grad.clone();
    costs.extend(std::iter::repeat_n(0.0, work.m));
    let pi = work.multipliers(&costs);
    let mut sol = finish(spec, work, &grad, &pi, false);
    sol.iterations += iterations;
    Ok(sol)
}

fn gradient(spec: &SubproblemSpec, quad: &Quadratic, y: &[f64]) -> Vec<f64> {
    let mut g = quad.gradient(y);
    for (gi, ci) in g.iter_mut().zip(&spec.cost) {
        *gi += ci;
    }
    g
}
