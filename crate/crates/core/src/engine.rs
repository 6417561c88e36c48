//! SDDP with optional quadratic regularization of the forward pass.
//!
//! Each iteration samples one scenario path, simulates the current policy
//! along it (the forward pass), then walks back from the last stage adding
//! one aggregated cut per stage and information state at the visited
//! resource points (the backward pass). With regularization switched on, the
//! forward subproblems at stages `t < T` add `(rho_k/2) |R_t - Rbar_t|_Q^2`
//! around the previous iteration's resource points; backward subproblems are
//! always plain LPs so cuts stay valid and come from basic duals.

use std::sync::Mutex;
use std::time::Instant;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::cutpool::{Cut, CutPool};
use crate::error::{Error, Result};
use crate::linalg::{dot, DenseMatrix};
use crate::model::{MultistageProblem, ProcessKind, ScenarioPath};
use crate::solver::{
    relative_residual, BundledSolver, Quadratic, SolverOptions, Status, SubproblemSolution,
    SubproblemSolver, SubproblemSpec,
};

/// Backward-pass cuts matching a stored hyperplane to this relative
/// tolerance are not added again.
const DUPLICATE_CUT_TOL: f64 = 1e-12;

/// Geometric penalty sequence `rho_k = rho0 * decay^k`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RegularizationSchedule {
    pub rho0: f64,
    pub decay: f64,
}

impl Default for RegularizationSchedule {
    fn default() -> Self {
        Self { rho0: 1.0, decay: 0.95 }
    }
}

impl RegularizationSchedule {
    pub fn value(&self, k: usize) -> f64 {
        self.rho0 * self.decay.powf(k as f64)
    }

    fn check(&self) -> Result<()> {
        if !(self.rho0 > 0.0 && self.rho0.is_finite()) {
            return Err(Error::InvalidConfig(format!("rho0 must be positive, got {}", self.rho0)));
        }
        if !(self.decay > 0.0 && self.decay < 1.0) {
            return Err(Error::InvalidConfig(format!("decay must lie in (0,1), got {}", self.decay)));
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct EngineConfig {
    /// Number of iterations after the initial myopic one.
    pub iterations: usize,
    pub seed: u64,
    pub regularized: bool,
    /// Keep one cut collection per Markov state. A stagewise-independent
    /// instance is re-expressed as a Markov chain when set.
    pub markov: bool,
    pub schedule: RegularizationSchedule,
    /// Per-stage weights `Q_t` for `t = 0..T-1`; identity when `None`.
    pub q_weights: Option<Vec<DenseMatrix>>,
    pub eps_f: f64,
    pub ub_samples: usize,
    /// Estimate the upper bound every this many iterations (0 disables).
    pub ub_every: usize,
    /// Stop once the lower bound has not moved for this many iterations.
    pub stall_iterations: Option<usize>,
    /// Worker threads for backward-pass and upper-bound solves.
    pub threads: Option<usize>,
    /// Reuse bases across solves of the same stage and outcome.
    pub warm_start: bool,
    pub debug_dump: Option<std::path::PathBuf>,
}

impl Default for EngineConfig {
    fn default() -> Self {
        Self {
            iterations: 300,
            seed: 0,
            regularized: true,
            markov: false,
            schedule: RegularizationSchedule::default(),
            q_weights: None,
            eps_f: 1e-8,
            ub_samples: 100,
            ub_every: 10,
            stall_iterations: None,
            threads: None,
            warm_start: true,
            debug_dump: None,
        }
    }
}

impl EngineConfig {
    fn check(&self, problem: &MultistageProblem) -> Result<()> {
        if self.iterations == 0 {
            return Err(Error::InvalidConfig("iterations must be at least 1".into()));
        }
        if self.ub_samples == 0 {
            return Err(Error::InvalidConfig("ub_samples must be at least 1".into()));
        }
        if self.regularized {
            self.schedule.check()?;
        }
        if let Some(qs) = &self.q_weights {
            if qs.len() != problem.horizon() {
                return Err(Error::DimensionMismatch {
                    context: "regularization weights".into(),
                    expected: problem.horizon(),
                    found: qs.len(),
                });
            }
            for (t, q) in qs.iter().enumerate() {
                let r = problem.resource_dim(t);
                if q.rows != r || q.cols != r {
                    return Err(Error::DimensionMismatch {
                        context: format!("regularization weight of stage {t}"),
                        expected: r,
                        found: q.rows,
                    });
                }
                if !q.is_symmetric(1e-12) || crate::linalg::min_eigenvalue(q) < -1e-12 {
                    return Err(Error::InvalidConfig(format!(
                        "regularization weight of stage {t} is not positive semidefinite"
                    )));
                }
            }
        }
        Ok(())
    }

    fn solver_options(&self) -> SolverOptions {
        SolverOptions {
            eps_feas: self.eps_f,
            debug_dump: self.debug_dump.clone(),
            ..SolverOptions::default()
        }
    }
}

/// States, decisions and costs visited by one forward pass.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    /// `outcomes[t]` for `t = 0..=T`; stage 0 is always outcome 0.
    pub outcomes: Vec<usize>,
    pub decisions: Vec<Vec<f64>>,
    /// `resources[t] = B_t x_t`.
    pub resources: Vec<Vec<f64>>,
    /// Linear stage cost `c_t . x_t`.
    pub stage_costs: Vec<f64>,
    /// Optimal value of each forward subproblem, penalty included.
    pub objectives: Vec<f64>,
}

impl Trajectory {
    pub fn total_cost(&self) -> f64 {
        self.stage_costs.iter().sum()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct UpperBoundEstimate {
    pub mean: f64,
    pub stderr: f64,
    pub samples: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IterationStats {
    pub iteration: usize,
    pub lower_bound: f64,
    pub sampled_cost: f64,
    /// Penalty coefficient of this iteration (zero without regularization).
    pub rho: f64,
    pub wall_ms: f64,
    pub cuts_added: usize,
    pub upper_bound: Option<UpperBoundEstimate>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct SolveReport {
    pub iterations: Vec<IterationStats>,
}

impl SolveReport {
    pub fn lower_bounds(&self) -> Vec<f64> {
        self.iterations.iter().map(|s| s.lower_bound).collect()
    }

    pub fn final_lower_bound(&self) -> Option<f64> {
        self.iterations.last().map(|s| s.lower_bound)
    }

    /// Comma-separated bounds table. Wall times are left blank unless
    /// `timing` is set so that repeated runs produce identical bytes.
    pub fn to_csv(&self, timing: bool) -> String {
        let mut out = String::from("iter,lower_bound,rho_k,sampled_cost,ub_mean,ub_stderr,wall_ms\n");
        for s in &self.iterations {
            let (mean, stderr) = match &s.upper_bound {
                Some(u) => (u.mean.to_string(), u.stderr.to_string()),
                None => (String::new(), String::new()),
            };
            let wall = if timing { format!("{:.3}", s.wall_ms) } else { String::new() };
            out.push_str(&format!(
                "{},{},{},{},{},{},{}\n",
                s.iteration, s.lower_bound, s.rho, s.sampled_cost, mean, stderr, wall
            ));
        }
        out
    }
}

/// Result of a single-stage policy evaluation.
#[derive(Debug, Clone, PartialEq)]
pub struct PolicyDecision {
    pub decision: Vec<f64>,
    pub resource: Vec<f64>,
    pub stage_cost: f64,
    /// Stage cost plus the approximate future cost.
    pub objective: f64,
    /// Set when the stage had no cuts and the decision is myopic.
    pub myopic_fallback: bool,
}

/// Warm-start bases keyed by stage and outcome, remembered together with
/// the number of cuts in the spec they were taken from.
struct BasisCache {
    entries: Vec<Vec<Option<(usize, usize, Vec<usize>)>>>,
}

impl BasisCache {
    fn new(problem: &MultistageProblem) -> Self {
        let entries = (0..=problem.horizon()).map(|t| vec![None; problem.num_outcomes(t)]).collect();
        Self { entries }
    }

    /// Basis for a spec with `n` stage columns and `cuts` cut rows.
    fn hint(&self, t: usize, w: usize, n: usize, cuts: usize) -> Option<Vec<usize>> {
        let (old_cuts, old_cols, basis) = self.entries[t][w].as_ref()?;
        if *old_cuts > cuts {
            return None;
        }
        let new_cols = if cuts == 0 { n } else { n + 2 + cuts };
        let mut out: Vec<usize> = basis
            .iter()
            .map(|&j| if j >= *old_cols { j - old_cols + new_cols } else { j })
            .collect();
        // the slacks of newly added cut rows complete the basis
        out.extend((*old_cuts..cuts).map(|j| n + 2 + j));
        Some(out)
    }

    fn store(&mut self, t: usize, w: usize, n: usize, cuts: usize, basis: Vec<usize>) {
        let cols = if cuts == 0 { n } else { n + 2 + cuts };
        if !basis.is_empty() {
            self.entries[t][w] = Some((cuts, cols, basis));
        }
    }
}

/// Stage spec with the incoming resource folded into the right-hand side.
pub fn stage_spec(problem: &MultistageProblem, t: usize, w: usize, r_prev: &[f64]) -> SubproblemSpec {
    let real = problem.realization(t, w);
    SubproblemSpec::linear(real.cost.clone(), real.a.clone(), real.rhs_given(r_prev))
}

fn check_solution(
    sol: &SubproblemSolution,
    spec: &SubproblemSpec,
    eps_f: f64,
    t: usize,
    w: usize,
) -> Result<()> {
    let outcome = if t == 0 { None } else { Some(w) };
    match sol.status {
        Status::Optimal => {}
        Status::Infeasible => return Err(Error::Infeasible { stage: t, outcome }),
        Status::Unbounded => return Err(Error::Unbounded { stage: t, outcome }),
    }
    let residual = relative_residual(sol, spec);
    if !(residual <= eps_f) {
        return Err(Error::ResidualCheck { stage: t, outcome, residual });
    }
    Ok(())
}

/// Solves the stage problem `min c x + Vbar_t(B x)` (plus an optional
/// penalty) and returns the decision and objective.
#[allow(clippy::too_many_arguments)]
pub(crate) fn solve_stage<S: SubproblemSolver + ?Sized>(
    solver: &S,
    problem: &MultistageProblem,
    pool: Option<&CutPool>,
    penalty: Option<Quadratic>,
    t: usize,
    w: usize,
    r_prev: &[f64],
    warm: Option<&[usize]>,
) -> Result<(SubproblemSpec, SubproblemSolution)> {
    let real = problem.realization(t, w);
    let mut base = stage_spec(problem, t, w, r_prev);
    base.quad = penalty;
    let spec = match pool {
        Some(pool) if t < problem.horizon() => {
            pool.embed(t, problem.info_state_of(t, w), &base, &real.b_link)?
        }
        _ => base,
    };
    let sol = solver.solve(&spec, warm)?;
    check_solution(&sol, &spec, solver.options().eps_feas, t, w)?;
    Ok((spec, sol))
}

fn cuts_at(pool: Option<&CutPool>, problem: &MultistageProblem, t: usize, w: usize) -> usize {
    match pool {
        Some(p) if t < problem.horizon() => p.cuts(t, problem.info_state_of(t, w)).len(),
        _ => 0,
    }
}

/// Driver for one SDDP run.
pub struct Sddp<'a, S: SubproblemSolver = BundledSolver> {
    problem: std::borrow::Cow<'a, MultistageProblem>,
    solver: S,
    config: EngineConfig,
    pool: CutPool,
    incumbents: Option<Vec<Vec<f64>>>,
    rng: ChaCha8Rng,
    bases: Mutex<BasisCache>,
    report: SolveReport,
    next_iteration: usize,
    workers: Option<rayon::ThreadPool>,
}

impl<'a> Sddp<'a, BundledSolver> {
    pub fn new(problem: &'a MultistageProblem, config: EngineConfig) -> Result<Self> {
        let solver = BundledSolver::new(config.solver_options());
        Self::with_solver(problem, config, solver)
    }
}

impl<'a, S: SubproblemSolver> Sddp<'a, S> {
    pub fn with_solver(problem: &'a MultistageProblem, config: EngineConfig, solver: S) -> Result<Self> {
        problem.validate_allowing_zero_probabilities().into_result()?;
        if problem.horizon() == 0 {
            return Err(Error::InvalidProblem(vec!["at least one random stage is required".into()]));
        }
        config.check(problem)?;
        let problem = match (config.markov, problem.kind()) {
            (true, ProcessKind::StagewiseIndependent) => std::borrow::Cow::Owned(problem.to_markov()),
            (false, ProcessKind::Markov) => {
                return Err(Error::InvalidConfig(
                    "instance has Markov uncertainty; run with the Markov variant".into(),
                ))
            }
            _ => std::borrow::Cow::Borrowed(problem),
        };
        let workers = match config.threads {
            Some(n) => Some(
                rayon::ThreadPoolBuilder::new()
                    .num_threads(n)
                    .build()
                    .map_err(|e| Error::InvalidConfig(e.to_string()))?,
            ),
            None => None,
        };
        let pool = CutPool::for_problem(&problem);
        let bases = Mutex::new(BasisCache::new(&problem));
        Ok(Self {
            rng: ChaCha8Rng::seed_from_u64(config.seed),
            problem,
            solver,
            config,
            pool,
            incumbents: None,
            bases,
            report: SolveReport::default(),
            next_iteration: 0,
            workers,
        })
    }

    pub fn problem(&self) -> &MultistageProblem {
        &self.problem
    }

    pub fn pool(&self) -> &CutPool {
        &self.pool
    }

    pub fn report(&self) -> &SolveReport {
        &self.report
    }

    pub fn incumbents(&self) -> Option<&[Vec<f64>]> {
        self.incumbents.as_deref()
    }

    pub fn into_parts(self) -> (CutPool, SolveReport) {
        (self.pool, self.report)
    }

    fn rho(&self, k: usize) -> f64 {
        if self.config.regularized {
            self.config.schedule.value(k)
        } else {
            0.0
        }
    }

    fn install<R: Send>(&self, f: impl FnOnce() -> R + Send) -> R {
        match &self.workers {
            Some(pool) => pool.install(f),
            None => f(),
        }
    }

    fn warm_hint(&self, t: usize, w: usize, cuts: usize) -> Option<Vec<usize>> {
        if !self.config.warm_start {
            return None;
        }
        let n = self.problem.realization(t, w).num_vars();
        self.bases.lock().unwrap().hint(t, w, n, cuts)
    }

    fn remember(&self, t: usize, w: usize, cuts: usize, basis: &[usize]) {
        if self.config.warm_start {
            let n = self.problem.realization(t, w).num_vars();
            self.bases.lock().unwrap().store(t, w, n, cuts, basis.to_vec());
        }
    }

    /// Penalty `(rho/2) <R - Rbar, Q (R - Rbar)>` on `R = B_t x_t`.
    fn penalty(&self, t: usize, w: usize, rho: f64) -> Option<Quadratic> {
        if rho <= 0.0 {
            return None;
        }
        let center = self.incumbents.as_ref()?.get(t)?.clone();
        let b_link = self.problem.realization(t, w).b_link.clone();
        let weight = match &self.config.q_weights {
            Some(qs) => qs[t].clone(),
            None => DenseMatrix::identity(b_link.rows),
        };
        Some(Quadratic { rho, weight, map: b_link, center })
    }

    /// Simulates the current approximate policy along `path`.
    pub fn forward_pass(&self, path: &ScenarioPath, k: usize) -> Result<Trajectory> {
        let horizon = self.problem.horizon();
        let rho = self.rho(k);
        let mut traj = Trajectory {
            outcomes: Vec::with_capacity(horizon + 1),
            decisions: Vec::with_capacity(horizon + 1),
            resources: Vec::with_capacity(horizon + 1),
            stage_costs: Vec::with_capacity(horizon + 1),
            objectives: Vec::with_capacity(horizon + 1),
        };
        let mut r_prev: Vec<f64> = Vec::new();
        for t in 0..=horizon {
            let w = if t == 0 { 0 } else { path.indices[t - 1] };
            let (pool, penalty) = if k == 0 {
                (None, None)
            } else if t < horizon {
                (Some(&self.pool), self.penalty(t, w, rho))
            } else {
                (None, None)
            };
            let cuts = cuts_at(pool, &self.problem, t, w);
            let hint = self.warm_hint(t, w, cuts);
            let (_, sol) =
                solve_stage(&self.solver, &self.problem, pool, penalty, t, w, &r_prev, hint.as_deref())?;
            self.remember(t, w, cuts, &sol.basis);
            let real = self.problem.realization(t, w);
            let x = sol.y[..real.num_vars()].to_vec();
            let r = real.resource(&x);
            traj.outcomes.push(w);
            traj.stage_costs.push(dot(&real.cost, &x));
            traj.objectives.push(sol.objective);
            traj.decisions.push(x);
            traj.resources.push(r.clone());
            r_prev = r;
        }
        Ok(traj)
    }

    /// Adds cuts at the resource points of `traj` for stages `T-1` down to 0.
    /// Returns the number of cuts added.
    pub fn backward_pass(&mut self, traj: &Trajectory, k: usize) -> Result<usize> {
        let horizon = self.problem.horizon();
        let mut added = 0;
        for t in (1..=horizon).rev() {
            let r_prev = &traj.resources[t - 1];
            let outcomes = self.problem.num_outcomes(t);
            let pool = if t < horizon { Some(&self.pool) } else { None };
            let this = &*self;
            let results: Vec<Result<(f64, Vec<f64>, usize, Vec<usize>)>> = this.install(|| {
                (0..outcomes)
                    .into_par_iter()
                    .map(|w| {
                        let cuts = cuts_at(pool, &this.problem, t, w);
                        let hint = this.warm_hint(t, w, cuts);
                        let (_, sol) = solve_stage(
                            &this.solver,
                            &this.problem,
                            pool,
                            None,
                            t,
                            w,
                            r_prev,
                            hint.as_deref(),
                        )?;
                        // dV/dR = -mu on the rows that receive R
                        let slope: Vec<f64> = sol.duals[..r_prev.len()].iter().map(|m| -m).collect();
                        Ok((sol.objective, slope, cuts, sol.basis))
                    })
                    .collect()
            });
            let mut values = Vec::with_capacity(outcomes);
            let mut slopes = Vec::with_capacity(outcomes);
            for (w, res) in results.into_iter().enumerate() {
                let (v, s, cuts, basis) = res?;
                self.remember(t, w, cuts, &basis);
                values.push(v);
                slopes.push(s);
            }
            for info in 0..self.problem.info_states(t - 1) {
                let (alpha, beta) = aggregate(&self.problem, t, info, &values, &slopes, r_prev.len());
                let cut = Cut { alpha, beta, anchor: r_prev.clone(), born_iteration: k };
                if self.pool.has_equivalent(t - 1, info, &cut, DUPLICATE_CUT_TOL) {
                    continue;
                }
                self.pool.add_cut(t - 1, info, cut)?;
                added += 1;
            }
        }
        Ok(added)
    }

    /// Optimal value of the stage-0 problem under the current cuts.
    pub fn lower_bound(&self) -> Result<f64> {
        let cuts = cuts_at(Some(&self.pool), &self.problem, 0, 0);
        let hint = self.warm_hint(0, 0, cuts);
        let (_, sol) =
            solve_stage(&self.solver, &self.problem, Some(&self.pool), None, 0, 0, &[], hint.as_deref())?;
        self.remember(0, 0, cuts, &sol.basis);
        Ok(sol.objective)
    }

    /// One full iteration: sample, forward, backward, bound, incumbents.
    pub fn iterate(&mut self) -> Result<IterationStats> {
        let k = self.next_iteration;
        let start = Instant::now();
        let path = self.problem.sample_path(&mut self.rng);
        let traj = self.forward_pass(&path, k)?;
        let cuts_added = self.backward_pass(&traj, k)?;
        let lower_bound = self.lower_bound()?;
        let horizon = self.problem.horizon();
        self.incumbents = Some(traj.resources[..horizon].to_vec());
        let upper_bound = if self.config.ub_every > 0 && k > 0 && k.is_multiple_of(self.config.ub_every) {
            Some(self.estimate_upper_bound(self.config.ub_samples, ub_seed(self.config.seed, k))?)
        } else {
            None
        };
        let stats = IterationStats {
            iteration: k,
            lower_bound,
            sampled_cost: traj.total_cost(),
            rho: self.rho(k),
            wall_ms: start.elapsed().as_secs_f64() * 1e3,
            cuts_added,
            upper_bound,
        };
        self.report.iterations.push(stats.clone());
        self.next_iteration += 1;
        Ok(stats)
    }

    /// Runs the initial myopic iteration and `config.iterations` more.
    pub fn run(&mut self) -> Result<()> {
        let mut unchanged = 0usize;
        while self.next_iteration <= self.config.iterations {
            let before = self.report.final_lower_bound();
            let stats = self.iterate()?;
            log::debug!(
                "iteration {} lower bound {} sampled cost {}",
                stats.iteration,
                stats.lower_bound,
                stats.sampled_cost
            );
            if let (Some(limit), Some(prev)) = (self.config.stall_iterations, before) {
                if (stats.lower_bound - prev).abs() <= 1e-12 * (1.0 + prev.abs()) {
                    unchanged += 1;
                    if unchanged >= limit {
                        break;
                    }
                } else {
                    unchanged = 0;
                }
            }
        }
        Ok(())
    }

    /// Monte-Carlo estimate of the expected cost of the unregularized cut
    /// policy. Sample `i` uses stream `i` of a generator seeded with `seed`,
    /// so the estimate does not depend on the worker count.
    pub fn estimate_upper_bound(&self, samples: usize, seed: u64) -> Result<UpperBoundEstimate> {
        estimate_upper_bound_with(&self.solver, &self.problem, &self.pool, samples, seed, self.workers.as_ref())
    }
}

/// Probability-weighted value and slope over the outcomes of stage `t`
/// conditioned on information state `info` of stage `t-1`.
fn aggregate(
    problem: &MultistageProblem,
    t: usize,
    info: usize,
    values: &[f64],
    slopes: &[Vec<f64>],
    dim: usize,
) -> (f64, Vec<f64>) {
    let mut alpha = 0.0;
    let mut beta = vec![0.0; dim];
    for (w, (v, s)) in values.iter().zip(slopes).enumerate() {
        let p = problem.conditional_probability(t, info, w);
        if p == 0.0 {
            continue;
        }
        alpha += p * v;
        for (b, g) in beta.iter_mut().zip(s) {
            *b += p * g;
        }
    }
    (alpha, beta)
}

/// Cut for information state `info` of stage `t` anchored at `r`, computed
/// from the stage-`t+1` problems under `pool` the same way the backward pass
/// builds its cuts.
pub fn backward_cut(
    problem: &MultistageProblem,
    pool: &CutPool,
    t: usize,
    info: usize,
    r: &[f64],
) -> Result<Cut> {
    let view = policy_view(problem, pool);
    let problem = view.as_ref();
    if t >= problem.horizon() {
        return Err(Error::DimensionMismatch {
            context: "cut stage".into(),
            expected: problem.horizon() - 1,
            found: t,
        });
    }
    if r.len() != problem.resource_dim(t) {
        return Err(Error::DimensionMismatch {
            context: format!("resource state of stage {t}"),
            expected: problem.resource_dim(t),
            found: r.len(),
        });
    }
    pool.check_compatible(problem)?;
    let solver = BundledSolver::default();
    let next = t + 1;
    let future = if next < problem.horizon() { Some(pool) } else { None };
    let mut values = Vec::new();
    let mut slopes = Vec::new();
    for w in 0..problem.num_outcomes(next) {
        let (_, sol) = solve_stage(&solver, problem, future, None, next, w, r, None)?;
        values.push(sol.objective);
        slopes.push(sol.duals[..r.len()].iter().map(|m| -m).collect());
    }
    let (alpha, beta) = aggregate(problem, next, info, &values, &slopes, r.len());
    Ok(Cut { alpha, beta, anchor: r.to_vec(), born_iteration: 0 })
}

fn ub_seed(seed: u64, k: usize) -> u64 {
    seed ^ (k as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15)
}

fn simulate_policy<S: SubproblemSolver + ?Sized>(
    solver: &S,
    problem: &MultistageProblem,
    pool: &CutPool,
    path: &ScenarioPath,
) -> Result<f64> {
    let mut r_prev = Vec::new();
    let mut total = 0.0;
    for t in 0..=problem.horizon() {
        let w = if t == 0 { 0 } else { path.indices[t - 1] };
        let (_, sol) = solve_stage(solver, problem, Some(pool), None, t, w, &r_prev, None)?;
        let real = problem.realization(t, w);
        let x = &sol.y[..real.num_vars()];
        total += dot(&real.cost, x);
        r_prev = real.resource(x);
    }
    Ok(total)
}

fn require_cuts(problem: &MultistageProblem, pool: &CutPool) -> Result<()> {
    pool.check_compatible(problem)?;
    for t in 0..problem.horizon() {
        for info in 0..pool.info_states(t) {
            if pool.cuts(t, info).is_empty() {
                return Err(Error::MissingCuts { stage: t });
            }
        }
    }
    Ok(())
}

fn estimate_upper_bound_with<S: SubproblemSolver + ?Sized>(
    solver: &S,
    problem: &MultistageProblem,
    pool: &CutPool,
    samples: usize,
    seed: u64,
    workers: Option<&rayon::ThreadPool>,
) -> Result<UpperBoundEstimate> {
    require_cuts(problem, pool)?;
    if samples == 0 {
        return Err(Error::InvalidConfig("upper bound needs at least one sample".into()));
    }
    let run = || -> Result<Vec<f64>> {
        (0..samples)
            .into_par_iter()
            .map(|i| {
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                rng.set_stream(i as u64);
                let path = problem.sample_path(&mut rng);
                simulate_policy(solver, problem, pool, &path)
            })
            .collect()
    };
    let costs = match workers {
        Some(p) => p.install(run)?,
        None => run()?,
    };
    let n = costs.len() as f64;
    let mean = costs.iter().sum::<f64>() / n;
    let stderr = if costs.len() > 1 {
        let var = costs.iter().map(|c| (c - mean).powi(2)).sum::<f64>() / (n - 1.0);
        (var / n).sqrt()
    } else {
        0.0
    };
    Ok(UpperBoundEstimate { mean, stderr, samples })
}

/// Monte-Carlo upper bound of the cut policy stored in `pool`.
pub fn estimate_upper_bound(
    problem: &MultistageProblem,
    pool: &CutPool,
    samples: usize,
    seed: u64,
) -> Result<UpperBoundEstimate> {
    let problem = policy_view(problem, pool);
    let solver = BundledSolver::default();
    estimate_upper_bound_with(&solver, &problem, pool, samples, seed, None)
}

/// Stagewise instances solved with per-state cuts are read through their
/// Markov form.
pub(crate) fn policy_view<'p>(problem: &'p MultistageProblem, pool: &CutPool) -> std::borrow::Cow<'p, MultistageProblem> {
    let per_state = (1..pool.stages()).any(|t| pool.info_states(t) > 1);
    if per_state && problem.kind() == ProcessKind::StagewiseIndependent {
        std::borrow::Cow::Owned(problem.to_markov())
    } else {
        std::borrow::Cow::Borrowed(problem)
    }
}

/// Decision of the cut policy at stage `t` after observing `outcome`, given
/// the incoming resource `r_prev`.
pub fn policy_decision(
    problem: &MultistageProblem,
    pool: &CutPool,
    t: usize,
    outcome: usize,
    r_prev: &[f64],
) -> Result<PolicyDecision> {
    let problem = policy_view(problem, pool);
    let problem = problem.as_ref();
    if t > problem.horizon() {
        return Err(Error::DimensionMismatch {
            context: "policy stage".into(),
            expected: problem.horizon(),
            found: t,
        });
    }
    let expected_r = if t == 0 { 0 } else { problem.resource_dim(t - 1) };
    if r_prev.len() != expected_r {
        return Err(Error::DimensionMismatch {
            context: format!("incoming resource of stage {t}"),
            expected: expected_r,
            found: r_prev.len(),
        });
    }
    if t < problem.horizon() {
        pool.check_compatible(problem)?;
    }
    let myopic_fallback =
        t < problem.horizon() && pool.cuts(t, problem.info_state_of(t, outcome)).is_empty();
    let solver = BundledSolver::default();
    let (_, sol) = solve_stage(&solver, problem, Some(pool), None, t, outcome, r_prev, None)?;
    let real = problem.realization(t, outcome);
    let decision = sol.y[..real.num_vars()].to_vec();
    Ok(PolicyDecision {
        resource: real.resource(&decision),
        stage_cost: dot(&real.cost, &decision),
        objective: sol.objective,
        decision,
        myopic_fallback,
    })
}

/// Runs SDDP on `problem` and returns the final cuts and the bound history.
pub fn run(problem: &MultistageProblem, config: EngineConfig) -> Result<(CutPool, SolveReport)> {
    let mut engine = Sddp::new(problem, config)?;
    engine.run()?;
    Ok(engine.into_parts())
}
