//! Exact answers on enumerable instances.
//!
//! The scenario tree is assembled into one deterministic-equivalent linear
//! program and handed to an independent sparse simplex implementation, so
//! these values never depend on the bundled stage solver.

use microlp::{ComparisonOp, OptimizationDirection, Problem, Variable};

use crate::cutpool::CutPool;
use crate::engine;
use crate::error::{Error, Result};
use crate::linalg::dot;
use crate::model::MultistageProblem;
use crate::solver::BundledSolver;

/// Default cap on the number of scenario-tree nodes.
pub const DEFAULT_NODE_LIMIT: usize = 100_000;

/// One node of the scenario tree: a history prefix ending at `stage`.
#[derive(Debug, Clone, PartialEq)]
pub struct TreeNode {
    pub stage: usize,
    pub outcome: usize,
    pub parent: Option<usize>,
    /// Probability of reaching the node from the root of the tree.
    pub probability: f64,
}

/// Deterministic equivalent of a (sub)tree with one copy of the stage
/// variables per node.
#[derive(Debug, Clone)]
pub struct ExtensiveForm {
    pub nodes: Vec<TreeNode>,
    /// First variable index of each node.
    pub offsets: Vec<usize>,
    pub num_vars: usize,
    /// Incoming resource of the root nodes, if the tree starts below stage 0.
    root_resource: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExtensiveSolution {
    pub value: f64,
    /// Decision of every node, in node order.
    pub decisions: Vec<Vec<f64>>,
}

impl ExtensiveForm {
    /// Tree of the whole problem, rooted at the deterministic stage 0.
    pub fn build(problem: &MultistageProblem, node_limit: usize) -> Result<Self> {
        let root = TreeNode { stage: 0, outcome: 0, parent: None, probability: 1.0 };
        Self::grow(problem, vec![root], Vec::new(), node_limit)
    }

    /// Tree of stages `t+1..=T` below the post-decision state `(info, r)` of
    /// stage `t`. Empty when `t = T`.
    pub fn below(
        problem: &MultistageProblem,
        t: usize,
        info: usize,
        r: &[f64],
        node_limit: usize,
    ) -> Result<Self> {
        if t > problem.horizon() {
            return Err(Error::DimensionMismatch {
                context: "oracle stage".into(),
                expected: problem.horizon(),
                found: t,
            });
        }
        if info >= problem.info_states(t) {
            return Err(Error::DimensionMismatch {
                context: format!("information states of stage {t}"),
                expected: problem.info_states(t),
                found: info,
            });
        }
        if r.len() != problem.resource_dim(t) {
            return Err(Error::DimensionMismatch {
                context: format!("resource state of stage {t}"),
                expected: problem.resource_dim(t),
                found: r.len(),
            });
        }
        let roots = if t == problem.horizon() {
            Vec::new()
        } else {
            (0..problem.num_outcomes(t + 1))
                .filter_map(|w| {
                    let p = problem.conditional_probability(t + 1, info, w);
                    (p > 0.0).then_some(TreeNode { stage: t + 1, outcome: w, parent: None, probability: p })
                })
                .collect()
        };
        Self::grow(problem, roots, r.to_vec(), node_limit)
    }

    fn grow(
        problem: &MultistageProblem,
        roots: Vec<TreeNode>,
        root_resource: Vec<f64>,
        node_limit: usize,
    ) -> Result<Self> {
        let mut nodes = roots;
        let mut frontier: Vec<usize> = (0..nodes.len()).collect();
        while !frontier.is_empty() {
            let mut next = Vec::new();
            for &i in &frontier {
                let (stage, outcome, prob) = (nodes[i].stage, nodes[i].outcome, nodes[i].probability);
                if stage == problem.horizon() {
                    continue;
                }
                let info = problem.info_state_of(stage, outcome);
                for w in 0..problem.num_outcomes(stage + 1) {
                    let p = problem.conditional_probability(stage + 1, info, w);
                    if p == 0.0 {
                        continue;
                    }
                    nodes.push(TreeNode {
                        stage: stage + 1,
                        outcome: w,
                        parent: Some(i),
                        probability: prob * p,
                    });
                    next.push(nodes.len() - 1);
                    if nodes.len() > node_limit {
                        return Err(Error::TooManyPaths {
                            paths: nodes.len() as f64,
                            limit: node_limit,
                        });
                    }
                }
            }
            frontier = next;
        }
        let mut offsets = Vec::with_capacity(nodes.len());
        let mut num_vars = 0;
        for node in &nodes {
            offsets.push(num_vars);
            num_vars += problem.realization(node.stage, node.outcome).num_vars();
        }
        Ok(Self { nodes, offsets, num_vars, root_resource })
    }

    /// Solves the tree LP: minimizes the probability-weighted cost subject to
    /// `A x_node = b_node - L(B_parent x_parent)` at every node.
    pub fn solve(&self, problem: &MultistageProblem) -> Result<ExtensiveSolution> {
        if self.nodes.is_empty() {
            return Ok(ExtensiveSolution { value: 0.0, decisions: Vec::new() });
        }
        let mut lp = Problem::new(OptimizationDirection::Minimize);
        let mut vars: Vec<Variable> = Vec::with_capacity(self.num_vars);
        for node in &self.nodes {
            let real = problem.realization(node.stage, node.outcome);
            for &c in &real.cost {
                vars.push(lp.add_var(node.probability * c, (0.0, f64::INFINITY)));
            }
        }
        for (i, node) in self.nodes.iter().enumerate() {
            let real = problem.realization(node.stage, node.outcome);
            let own = self.offsets[i];
            let parent = node.parent.map(|p| {
                let pn = &self.nodes[p];
                (self.offsets[p], &problem.realization(pn.stage, pn.outcome).b_link)
            });
            for row in 0..real.num_rows() {
                let mut terms: Vec<(Variable, f64)> = real
                    .a
                    .row(row)
                    .iter()
                    .enumerate()
                    .filter(|(_, &v)| v != 0.0)
                    .map(|(j, &v)| (vars[own + j], v))
                    .collect();
                let mut rhs = real.rhs[row];
                match parent {
                    Some((off, b)) if row < b.rows => {
                        terms.extend(
                            b.row(row)
                                .iter()
                                .enumerate()
                                .filter(|(_, &v)| v != 0.0)
                                .map(|(j, &v)| (vars[off + j], v)),
                        );
                    }
                    None if row < self.root_resource.len() => rhs -= self.root_resource[row],
                    _ => {}
                }
                lp.add_constraint(terms, ComparisonOp::Eq, rhs);
            }
        }
        let outcome = lp.solve().map_err(|e| match e {
            microlp::Error::Infeasible => Error::Infeasible { stage: self.nodes[0].stage, outcome: None },
            microlp::Error::Unbounded => Error::Unbounded { stage: self.nodes[0].stage, outcome: None },
            other => Error::NumericalBreakdown(format!("extensive form: {other}")),
        })?;
        let sol = outcome
            .into_solution()
            .map_err(|_| Error::NumericalBreakdown("extensive form solve was interrupted".into()))?;
        let decisions = self
            .nodes
            .iter()
            .enumerate()
            .map(|(i, node)| {
                let n = problem.realization(node.stage, node.outcome).num_vars();
                (0..n).map(|j| sol.var_value(vars[self.offsets[i] + j])).collect()
            })
            .collect();
        Ok(ExtensiveSolution { value: sol.objective(), decisions })
    }
}

/// Optimal value `V*` of the whole problem.
pub fn build_and_solve_extensive_form(problem: &MultistageProblem) -> Result<f64> {
    extensive_form_value(problem, DEFAULT_NODE_LIMIT)
}

pub fn extensive_form_value(problem: &MultistageProblem, node_limit: usize) -> Result<f64> {
    problem.validate_allowing_zero_probabilities().into_result()?;
    Ok(ExtensiveForm::build(problem, node_limit)?.solve(problem)?.value)
}

/// Exact expected cost-to-go `V_t*(r)` after stage `t` left the process in
/// information state `info` with resource `r`. Zero at `t = T`.
pub fn exact_value_function(problem: &MultistageProblem, t: usize, info: usize, r: &[f64]) -> Result<f64> {
    problem.validate_allowing_zero_probabilities().into_result()?;
    Ok(ExtensiveForm::below(problem, t, info, r, DEFAULT_NODE_LIMIT)?.solve(problem)?.value)
}

/// Exact expected cost of the (unregularized) cut policy in `pool`, by
/// walking every node of the scenario tree. Stages without cuts act
/// myopically.
pub fn evaluate_policy_exact(problem: &MultistageProblem, pool: &CutPool) -> Result<f64> {
    problem.validate_allowing_zero_probabilities().into_result()?;
    let view = engine::policy_view(problem, pool);
    let problem = view.as_ref();
    pool.check_compatible(problem)?;
    let tree = ExtensiveForm::build(problem, DEFAULT_NODE_LIMIT)?;
    let solver = BundledSolver::default();
    let mut resources: Vec<Vec<f64>> = Vec::with_capacity(tree.nodes.len());
    let mut total = 0.0;
    for node in &tree.nodes {
        let r_prev: &[f64] = match node.parent {
            Some(p) => &resources[p],
            None => &[],
        };
        let (_, sol) =
            engine::solve_stage(&solver, problem, Some(pool), None, node.stage, node.outcome, r_prev, None)?;
        let real = problem.realization(node.stage, node.outcome);
        let x = &sol.y[..real.num_vars()];
        total += node.probability * dot(&real.cost, x);
        resources.push(real.resource(x));
    }
    Ok(total)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cutpool::Cut;
    use crate::harness::toy;
    use crate::linalg::DenseMatrix;
    use crate::model::Distribution;

    fn newsvendor_exact_pool() -> CutPool {
        let p = toy::newsvendor();
        let mut pool = CutPool::for_problem(&p);
        for (alpha, beta, anchor) in [(15.0, -10.0, 0.0), (5.0, -5.0, 1.0), (0.0, 0.0, 2.0)] {
            pool.add_cut(0, 0, Cut { alpha, beta: vec![beta], anchor: vec![anchor], born_iteration: 0 })
                .unwrap();
        }
        pool
    }

    #[test]
    fn newsvendor_optimum() {
        let v = build_and_solve_extensive_form(&toy::newsvendor()).unwrap();
        assert!((v - 2.0).abs() < 1e-9, "{v}");
    }

    #[test]
    fn newsvendor_value_function() {
        let p = toy::newsvendor();
        assert!(exact_value_function(&p, 0, 0, &[2.0]).unwrap().abs() < 1e-9);
        assert!((exact_value_function(&p, 0, 0, &[0.0]).unwrap() - 15.0).abs() < 1e-9);
        assert!((exact_value_function(&p, 0, 0, &[1.0]).unwrap() - 5.0).abs() < 1e-9);
        assert_eq!(exact_value_function(&p, 1, 0, &[]).unwrap(), 0.0);
    }

    #[test]
    fn deterministic_chain_is_single_path_lp() {
        let p = toy::deterministic_chain(3);
        let form = ExtensiveForm::build(&p, 100).unwrap();
        assert_eq!(form.nodes.len(), 4);
        // demands 1 | 1, 2, 1: buying ahead at stage 0 costs 1 + 0.5 holding,
        // the same as buying later at 1.5, so the optimum is 1 + 1.5 * 4
        let v = form.solve(&p).unwrap().value;
        assert!((v - 7.0).abs() < 1e-9, "{v}");
    }

    #[test]
    fn decoupled_markov_paths_share_first_stage() {
        let mut p = toy::markov_toy();
        if let Distribution::Markov { transitions, .. } = &mut p.process.distribution {
            for m in transitions.iter_mut() {
                *m = DenseMatrix::identity(2);
            }
        }
        let v = build_and_solve_extensive_form(&p).unwrap();
        let form = ExtensiveForm::build(&p, 100).unwrap();
        assert_eq!(form.nodes.len(), 1 + 2 + 2 + 2);
        // for a fixed stage-0 decision the two absorbing paths decouple, so
        // V* = min over x0 of c0 x0 + 1/2 V(low | x0) + 1/2 V(high | x0)
        let grid_best = stage0_grid_minimum(&p, 60);
        assert!((v - grid_best).abs() < 1e-8, "{v} vs {grid_best}");
    }

    /// Minimizes `c0 x0 + V_0*(B0 x0)` over stage-0 decisions obtained by
    /// fixing the closing stock on a grid and solving the remaining stage-0 LP.
    fn stage0_grid_minimum(p: &MultistageProblem, steps: usize) -> f64 {
        let cap = 4.0;
        let mut best = f64::INFINITY;
        for i in 0..=steps {
            let stock = cap * i as f64 / steps as f64;
            let mut lp = Problem::new(OptimizationDirection::Minimize);
            let s0 = &p.stage0;
            let vars: Vec<Variable> =
                s0.cost.iter().map(|&c| lp.add_var(c, (0.0, f64::INFINITY))).collect();
            for row in 0..s0.num_rows() {
                let terms: Vec<(Variable, f64)> =
                    s0.a.row(row).iter().enumerate().map(|(j, &v)| (vars[j], v)).collect();
                lp.add_constraint(terms, ComparisonOp::Eq, s0.rhs[row]);
            }
            let terms: Vec<(Variable, f64)> =
                s0.b_link.row(0).iter().enumerate().map(|(j, &v)| (vars[j], v)).collect();
            lp.add_constraint(terms, ComparisonOp::Eq, stock);
            let Ok(outcome) = lp.solve() else { continue };
            let first = outcome.into_solution().unwrap().objective();
            let rest = exact_value_function(p, 0, 0, &[stock]).unwrap();
            best = best.min(first + rest);
        }
        best
    }

    #[test]
    fn grid_minimum_matches_extensive_form() {
        for p in [toy::markov_toy(), toy::wide_stagewise(2, 3)] {
            let v = build_and_solve_extensive_form(&p).unwrap();
            let grid = stage0_grid_minimum(&p, 80);
            // piecewise-linear value functions with breakpoints on the
            // quarter grid are minimized at a grid point
            assert!((v - grid).abs() < 1e-8, "{v} vs {grid}");
        }
    }

    #[test]
    fn stage0_decision_is_self_consistent() {
        for seed in 0..6 {
            for markov in [false, true] {
                let p = toy::random_enumerable(seed, markov);
                let form = ExtensiveForm::build(&p, DEFAULT_NODE_LIMIT).unwrap();
                let sol = form.solve(&p).unwrap();
                let x0 = &sol.decisions[0];
                let r0 = p.stage0.resource(x0);
                let recomposed = dot(&p.stage0.cost, x0) + exact_value_function(&p, 0, 0, &r0).unwrap();
                assert!(
                    (recomposed - sol.value).abs() <= 1e-8 * (1.0 + sol.value.abs()),
                    "seed {seed} markov {markov}: {recomposed} vs {}",
                    sol.value
                );
            }
        }
    }

    #[test]
    fn exact_policy_values() {
        let p = toy::newsvendor();
        let converged = evaluate_policy_exact(&p, &newsvendor_exact_pool()).unwrap();
        assert!((converged - 2.0).abs() < 1e-9, "{converged}");
        let myopic = evaluate_policy_exact(&p, &CutPool::for_problem(&p)).unwrap();
        assert!((myopic - 15.0).abs() < 1e-9, "{myopic}");
    }

    #[test]
    fn policies_never_beat_the_optimum() {
        let p = toy::newsvendor();
        let v = build_and_solve_extensive_form(&p).unwrap();
        for anchor in [0.0, 0.5, 1.0, 2.5, 3.0] {
            for slope in [-12.0, -10.0, -4.0, 0.0] {
                let mut pool = CutPool::for_problem(&p);
                pool.add_cut(0, 0, Cut { alpha: 7.0, beta: vec![slope], anchor: vec![anchor], born_iteration: 0 })
                    .unwrap();
                let cost = evaluate_policy_exact(&p, &pool).unwrap();
                assert!(cost >= v - 1e-8, "{cost} < {v}");
            }
        }
    }

    #[test]
    fn node_limit_is_enforced() {
        let p = toy::wide_stagewise(8, 10);
        assert!(matches!(extensive_form_value(&p, DEFAULT_NODE_LIMIT), Err(Error::TooManyPaths { .. })));
    }
}
