//! Revised primal and dual simplex on standard-form LPs.
//!
//! Rows are sign-normalized so the phase-1 artificial basis is feasible;
//! artificial column `n + i` is the unit vector of row `i` in the normalized
//! system. Pricing is Dantzig with lowest-index ties and switches to Bland's
//! rule after a run of degenerate pivots, so identical inputs always walk the
//! same sequence of bases.

use super::lu::BasisFactor;
use super::SolverOptions;
use crate::error::{Error, Result};
use crate::linalg::{dot, DenseMatrix};

/// Degenerate pivots tolerated before switching to Bland's rule.
const BLAND_AFTER: usize = 50;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) enum LoopEnd {
    Optimal,
    Unbounded,
    Infeasible,
    /// Dual simplex gave up (iteration cap or factorization trouble).
    Stalled,
}

pub(crate) struct Work<'a> {
    pub m: usize,
    pub n: usize,
    pub opts: &'a SolverOptions,
    /// Sign-normalized constraint matrix.
    pub af: DenseMatrix,
    cols: Vec<Vec<f64>>,
    pub b: Vec<f64>,
    pub sign: Vec<f64>,
    pub basis: Vec<usize>,
    pub is_basic: Vec<bool>,
    pub factor: BasisFactor,
    /// Values of all `n + m` columns; nonbasic entries are zero except
    /// superbasics managed by the QP layer.
    pub x: Vec<f64>,
    pub iterations: usize,
}

impl<'a> Work<'a> {
    pub fn new(a: &DenseMatrix, rhs: &[f64], opts: &'a SolverOptions) -> Self {
        let (m, n) = (a.rows, a.cols);
        let sign: Vec<f64> = rhs.iter().map(|&v| if v < 0.0 { -1.0 } else { 1.0 }).collect();
        let mut af = a.clone();
        for i in 0..m {
            if sign[i] < 0.0 {
                af.row_mut(i).iter_mut().for_each(|v| *v = -*v);
            }
        }
        let cols = (0..n).map(|j| af.column(j)).collect();
        let b = rhs.iter().zip(&sign).map(|(v, s)| v * s).collect();
        let basis: Vec<usize> = (n..n + m).collect();
        let mut is_basic = vec![false; n + m];
        is_basic[n..].iter_mut().for_each(|v| *v = true);
        let factor = BasisFactor::factorize(&vec_identity(m)).expect("identity is nonsingular");
        let mut w = Self {
            m,
            n,
            opts,
            af,
            cols,
            b,
            sign,
            basis,
            is_basic,
            factor,
            x: vec![0.0; n + m],
            iterations: 0,
        };
        w.recompute_x();
        w
    }

    pub fn column(&self, j: usize) -> Vec<f64> {
        if j < self.n {
            self.cols[j].clone()
        } else {
            let mut e = vec![0.0; self.m];
            e[j - self.n] = 1.0;
            e
        }
    }

    /// `alpha . column(j)` without materializing artificial columns.
    pub fn col_dot(&self, alpha: &[f64], j: usize) -> f64 {
        if j < self.n {
            dot(&self.cols[j], alpha)
        } else {
            alpha[j - self.n]
        }
    }

    /// Installs a basis; fails if it is singular or malformed.
    pub fn set_basis(&mut self, basis: &[usize]) -> bool {
        if basis.len() != self.m {
            return false;
        }
        let mut seen = vec![false; self.n + self.m];
        for &j in basis {
            if j >= self.n + self.m || seen[j] {
                return false;
            }
            seen[j] = true;
        }
        let cols: Vec<Vec<f64>> = basis.iter().map(|&j| self.column(j)).collect();
        match BasisFactor::factorize(&cols) {
            Ok(f) => {
                self.factor = f;
                self.basis = basis.to_vec();
                self.is_basic = seen;
                self.x.iter_mut().for_each(|v| *v = 0.0);
                self.recompute_x();
                true
            }
            Err(_) => false,
        }
    }

    pub fn refactor(&mut self) -> Result<()> {
        let cols: Vec<Vec<f64>> = self.basis.iter().map(|&j| self.column(j)).collect();
        self.factor = BasisFactor::factorize(&cols)
            .map_err(|_| Error::NumericalBreakdown("basis refactorization failed".into()))?;
        Ok(())
    }

    /// Recomputes basic values from the nonbasic (superbasic) ones.
    pub fn recompute_x(&mut self) {
        let mut r = self.b.clone();
        for j in 0..self.n {
            if !self.is_basic[j] && self.x[j] != 0.0 {
                let xj = self.x[j];
                for (ri, aij) in r.iter_mut().zip(&self.cols[j]) {
                    *ri -= aij * xj;
                }
            }
        }
        let xb = self.factor.ftran(&r);
        for (pos, &j) in self.basis.iter().enumerate() {
            self.x[j] = xb[pos];
        }
    }

    /// Simplex multipliers for the given column costs.
    pub fn multipliers(&self, costs: &[f64]) -> Vec<f64> {
        let cb: Vec<f64> = self.basis.iter().map(|&j| costs[j]).collect();
        self.factor.btran(&cb)
    }

    /// Reduced costs of the structural columns.
    pub fn reduced_costs(&self, costs: &[f64], pi: &[f64]) -> Vec<f64> {
        let at_pi = self.af.tr_mul_vec(pi);
        (0..self.n).map(|j| costs[j] - at_pi[j]).collect()
    }

    /// Replaces basis position `pos` by column `q`, given `w = B^{-1} a_q`.
    pub fn pivot(&mut self, pos: usize, q: usize, w: &[f64]) -> Result<()> {
        let leaving = self.basis[pos];
        self.is_basic[leaving] = false;
        self.is_basic[q] = true;
        self.basis[pos] = q;
        let refactor = self.factor.eta_count() + 1 >= self.opts.refactor_every
            || self.factor.update(pos, w).is_err();
        if refactor {
            self.refactor()?;
        }
        self.iterations += 1;
        Ok(())
    }

    fn check_iterations(&self) -> Result<()> {
        if self.iterations > self.opts.max_iterations {
            return Err(Error::NumericalBreakdown(format!(
                "simplex iteration limit {} reached",
                self.opts.max_iterations
            )));
        }
        Ok(())
    }

    /// Primal simplex from a primal feasible basis. Artificial columns never
    /// enter; in phase 1 they leave and stay out.
    pub fn primal(&mut self, costs: &[f64]) -> Result<LoopEnd> {
        let opt_tol = self.opts.optimality_tol;
        let piv_tol = self.opts.pivot_tol;
        let mut degenerate_run = 0usize;
        loop {
            self.check_iterations()?;
            let pi = self.multipliers(costs);
            let d = self.reduced_costs(costs, &pi);
            let bland = degenerate_run >= BLAND_AFTER;
            let mut entering = None;
            let mut best = -opt_tol;
            for j in 0..self.n {
                if self.is_basic[j] || d[j] >= -opt_tol {
                    continue;
                }
                if bland {
                    entering = Some(j);
                    break;
                }
                if d[j] < best {
                    best = d[j];
                    entering = Some(j);
                }
            }
            let Some(q) = entering else {
                return Ok(LoopEnd::Optimal);
            };
            let w = self.factor.ftran(&self.column(q));
            // Harris two-pass ratio test: relax the bounds by the feasibility
            // tolerance, then take the largest pivot within the relaxed step
            let feas_tol = self.opts.primal_tol;
            let mut ratio_min = f64::INFINITY;
            let mut relaxed = f64::INFINITY;
            for (pos, &wi) in w.iter().enumerate() {
                if wi > piv_tol {
                    let xb = self.x[self.basis[pos]].max(0.0);
                    ratio_min = ratio_min.min(xb / wi);
                    relaxed = relaxed.min((xb + feas_tol) / wi);
                }
            }
            if !ratio_min.is_finite() {
                return Ok(LoopEnd::Unbounded);
            }
            let cutoff = if bland { ratio_min + 1e-12 * (1.0 + ratio_min) } else { relaxed };
            let mut leave: Option<usize> = None;
            for (pos, &wi) in w.iter().enumerate() {
                if wi <= piv_tol {
                    continue;
                }
                let r = self.x[self.basis[pos]].max(0.0) / wi;
                if r > cutoff {
                    continue;
                }
                leave = match leave {
                    None => Some(pos),
                    Some(p) => {
                        let better = if bland {
                            self.basis[pos] < self.basis[p]
                        } else {
                            wi > w[p] || (wi == w[p] && self.basis[pos] < self.basis[p])
                        };
                        Some(if better { pos } else { p })
                    }
                };
            }
            let pos = leave.expect("finite ratio has a candidate");
            let theta = self.x[self.basis[pos]].max(0.0) / w[pos];
            if theta <= 1e-12 {
                degenerate_run += 1;
            } else {
                degenerate_run = 0;
            }
            let leaving = self.basis[pos];
            for (p, &wi) in w.iter().enumerate() {
                let j = self.basis[p];
                self.x[j] -= theta * wi;
            }
            self.x[leaving] = 0.0;
            self.x[q] = theta;
            let refreshed = self.factor.eta_count() + 1 >= self.opts.refactor_every;
            self.pivot(pos, q, &w)?;
            if refreshed {
                self.recompute_x();
            }
        }
    }

    /// Dual simplex from a dual feasible basis.
    pub fn dual(&mut self, costs: &[f64]) -> Result<LoopEnd> {
        let feas_tol = self.opts.primal_tol;
        let piv_tol = self.opts.pivot_tol;
        let start = self.iterations;
        let mut degenerate_run = 0usize;
        loop {
            if self.iterations - start > self.opts.max_iterations / 2 {
                return Ok(LoopEnd::Stalled);
            }
            let bland = degenerate_run >= BLAND_AFTER;
            // artificials must sit at zero, so either sign is infeasible
            let mut leave: Option<(usize, f64)> = None;
            for (pos, &j) in self.basis.iter().enumerate() {
                let v = self.x[j];
                let infeas = if j >= self.n { v.abs() } else { -v };
                if infeas <= feas_tol {
                    continue;
                }
                let better = match leave {
                    None => true,
                    Some((p, worst)) => {
                        if bland {
                            j < self.basis[p]
                        } else {
                            infeas > worst
                        }
                    }
                };
                if better {
                    leave = Some((pos, infeas));
                }
            }
            let leave = leave.map(|(p, _)| p);
            let Some(r) = leave else {
                return Ok(LoopEnd::Optimal);
            };
            let mut e = vec![0.0; self.m];
            e[r] = 1.0;
            let rho = self.factor.btran(&e);
            let pi = self.multipliers(costs);
            let d = self.reduced_costs(costs, &pi);
            // a positive artificial leaves as if its value were negative
            let flip = if self.x[self.basis[r]] > 0.0 { -1.0 } else { 1.0 };
            let opt_tol = self.opts.optimality_tol;
            let mut candidates = Vec::new();
            let mut relaxed = f64::INFINITY;
            for j in 0..self.n {
                if self.is_basic[j] {
                    continue;
                }
                let alpha = flip * self.col_dot(&rho, j);
                if alpha >= -piv_tol {
                    continue;
                }
                relaxed = relaxed.min((d[j].max(0.0) + opt_tol) / -alpha);
                candidates.push((j, d[j].max(0.0) / -alpha, alpha));
            }
            let min_ratio = candidates.iter().map(|c| c.1).fold(f64::INFINITY, f64::min);
            let cutoff = if bland { min_ratio + 1e-12 * (1.0 + min_ratio) } else { relaxed };
            let mut entering: Option<(usize, f64, f64)> = None;
            for &(j, ratio, alpha) in &candidates {
                if ratio > cutoff {
                    continue;
                }
                let better = match entering {
                    None => true,
                    Some((_, _, ba)) => !bland && alpha.abs() > ba.abs(),
                };
                if better {
                    entering = Some((j, ratio, alpha));
                }
            }
            let Some((q, ratio, _)) = entering else {
                return Ok(LoopEnd::Infeasible);
            };
            if ratio <= 1e-12 {
                degenerate_run += 1;
            } else {
                degenerate_run = 0;
            }
            let w = self.factor.ftran(&self.column(q));
            if w[r].abs() < piv_tol {
                return Ok(LoopEnd::Stalled);
            }
            let leaving = self.basis[r];
            let theta = self.x[leaving] / w[r];
            for (p, &wi) in w.iter().enumerate() {
                let j = self.basis[p];
                self.x[j] -= theta * wi;
            }
            self.x[leaving] = 0.0;
            self.x[q] = theta;
            if self.pivot(r, q, &w).is_err() {
                return Ok(LoopEnd::Stalled);
            }
            self.recompute_x();
        }
    }

    /// Pivots basic artificials out in favour of structural columns where
    /// possible; the remaining ones sit on redundant rows at zero.
    pub fn drive_out_artificials(&mut self) -> Result<()> {
        for pos in 0..self.m {
            if self.basis[pos] < self.n {
                continue;
            }
            let mut e = vec![0.0; self.m];
            e[pos] = 1.0;
            let rho = self.factor.btran(&e);
            let mut best: Option<(usize, f64)> = None;
            for j in 0..self.n {
                if self.is_basic[j] {
                    continue;
                }
                let alpha = dot(&self.cols[j], &rho).abs();
                if alpha > 1e-7 && best.is_none_or(|(_, a)| alpha > a) {
                    best = Some((j, alpha));
                }
            }
            if let Some((q, _)) = best {
                let w = self.factor.ftran(&self.column(q));
                // the artificial is at zero up to round-off; pivot degenerately
                self.x[self.basis[pos]] = 0.0;
                self.x[q] = 0.0;
                self.pivot(pos, q, &w)?;
            }
        }
        self.recompute_x();
        Ok(())
    }
}

fn vec_identity(m: usize) -> Vec<Vec<f64>> {
    (0..m)
        .map(|i| {
            let mut e = vec![0.0; m];
            e[i] = 1.0;
            e
        })
        .collect()
}

/// Result of the two-phase driver before conversion to a public solution.
pub(crate) struct LpOutcome {
    pub end: LoopEnd,
}

/// Runs phase 1 and phase 2 from scratch, or phase 2 (primal or dual) from
/// a warm basis when one is supplied and usable.
pub(crate) fn run(work: &mut Work<'_>, cost: &[f64], warm: Option<&[usize]>) -> Result<LpOutcome> {
    let (m, n) = (work.m, work.n);
    let mut costs = cost.to_vec();
    costs.extend(std::iter::repeat_n(0.0, m));
    let tol = work.opts.primal_tol * (1.0 + crate::linalg::norm_inf(&work.b));

    if let Some(basis) = warm {
        // numerical trouble on the warm path is answered by a cold start
        if let Ok(Some(end)) = warm_phase_two(work, &costs, basis, tol) {
            if end != LoopEnd::Optimal || polish(work, &costs).unwrap_or(false) {
                return Ok(LpOutcome { end });
            }
        }
        work.iterations = 0;
        *work = Work::new_like(work);
    }

    let mut phase1 = vec![0.0; n + m];
    phase1[n..].iter_mut().for_each(|c| *c = 1.0);
    work.primal(&phase1)?;
    work.recompute_x();
    let infeas: f64 = (n..n + m).map(|j| work.x[j].max(0.0)).sum();
    if infeas > tol {
        return Ok(LpOutcome { end: LoopEnd::Infeasible });
    }
    work.drive_out_artificials()?;
    let end = work.primal(&costs)?;
    if end == LoopEnd::Optimal && !polish(work, &costs)? {
        return Err(Error::NumericalBreakdown("optimal basis is not primal feasible".into()));
    }
    Ok(LpOutcome { end })
}

/// Phase 2 from a supplied basis; `None` when the basis is unusable or the
/// dual simplex gives up.
fn warm_phase_two(work: &mut Work<'_>, costs: &[f64], basis: &[usize], tol: f64) -> Result<Option<LoopEnd>> {
    let n = work.n;
    if !work.set_basis(basis) {
        return Ok(None);
    }
    let artificial_ok = work.basis.iter().all(|&j| j < n || work.x[j].abs() <= tol);
    let primal_ok = work.basis.iter().all(|&j| work.x[j] >= -tol);
    if primal_ok && artificial_ok {
        return Ok(Some(work.primal(costs)?));
    }
    let pi = work.multipliers(costs);
    let d = work.reduced_costs(costs, &pi);
    let dual_ok = (0..n).all(|j| work.is_basic[j] || d[j] >= -work.opts.optimality_tol);
    if dual_ok && work.dual(costs)? == LoopEnd::Optimal {
        return Ok(Some(work.primal(costs)?));
    }
    Ok(None)
}

/// Refactors the final basis and repairs small primal infeasibilities left
/// by accumulated update error with a few dual simplex passes. Returns
/// whether the basis ends up primal feasible.
fn polish(work: &mut Work<'_>, costs: &[f64]) -> Result<bool> {
    let tol = work.opts.primal_tol * (1.0 + crate::linalg::norm_inf(&work.b));
    for _ in 0..4 {
        if work.refactor().is_err() {
            return Ok(false);
        }
        work.recompute_x();
        let n = work.n;
        let feasible = work
            .basis
            .iter()
            .all(|&j| if j >= n { work.x[j].abs() <= tol } else { work.x[j] >= -tol });
        if feasible {
            return Ok(true);
        }
        if work.dual(costs)? != LoopEnd::Optimal || work.primal(costs)? != LoopEnd::Optimal {
            return Ok(false);
        }
    }
    Ok(false)
}

impl<'a> Work<'a> {
    /// Fresh work area on the same data with the all-artificial basis.
    fn new_like(other: &Work<'a>) -> Work<'a> {
        let mut a = other.af.clone();
        for i in 0..other.m {
            if other.sign[i] < 0.0 {
                a.row_mut(i).iter_mut().for_each(|v| *v = -*v);
            }
        }
        let rhs: Vec<f64> = other.b.iter().zip(&other.sign).map(|(v, s)| v * s).collect();
        let mut w = Work::new(&a, &rhs, other.opts);
        w.iterations = other.iterations;
        w
    }
}
