//! Small hand-checkable and randomly generated enumerable instances used by
//! the test suites and by `regsddp verify`.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::linalg::DenseMatrix;
use crate::model::{Distribution, MultistageProblem, StageRealization, UncertaintyProcess};

/// Two-stage newsvendor: buy `x0 <= 3` at unit cost, then demand 1 or 2 with
/// equal probability; unmet demand costs 10 per unit. Optimal value 2 at
/// `x0 = 2`.
pub fn newsvendor() -> MultistageProblem {
    // x0 + s = 3, R_0 = x0
    let stage0 = StageRealization {
        a: DenseMatrix::from_rows(&[vec![1.0, 1.0]]),
        b_link: DenseMatrix::from_rows(&[vec![1.0, 0.0]]),
        rhs: vec![3.0],
        cost: vec![1.0, 0.0],
    };
    // R_0 + u - w = d
    let stage1 = |d: f64| StageRealization {
        a: DenseMatrix::from_rows(&[vec![1.0, -1.0]]),
        b_link: DenseMatrix::zeros(0, 2),
        rhs: vec![d],
        cost: vec![10.0, 0.0],
    };
    MultistageProblem::new(
        stage0,
        UncertaintyProcess {
            outcomes: vec![vec![stage1(1.0), stage1(2.0)]],
            distribution: Distribution::StagewiseIndependent {
                probabilities: vec![vec![0.5, 0.5]],
            },
        },
    )
}

/// Parameters of one item in the multi-item inventory stage builder.
#[derive(Debug, Clone)]
struct ItemData {
    demand: f64,
    order_cost: f64,
    shortage_cost: f64,
    holding_cost: f64,
    capacity: f64,
}

/// Multi-item inventory stage. Variables per item: order, shortage, disposal,
/// stock, stock slack; plus one slack on the shared order budget. Rows: the
/// item balances (linking rows, in item order), stock capacities, and the
/// order budget. `R_t` is the vector of closing stocks.
fn inventory_stage(items: &[ItemData], order_budget: f64, initial: Option<&[f64]>) -> StageRealization {
    let k = items.len();
    let n = 5 * k + 1;
    let m = 2 * k + 1;
    let mut a = DenseMatrix::zeros(m, n);
    let mut rhs = vec![0.0; m];
    let mut cost = vec![0.0; n];
    let mut b_link = DenseMatrix::zeros(k, n);
    for (i, it) in items.iter().enumerate() {
        let (order, short, dispose, stock, slack) = (5 * i, 5 * i + 1, 5 * i + 2, 5 * i + 3, 5 * i + 4);
        // previous stock + order + shortage - disposal - stock = demand
        a[(i, order)] = 1.0;
        a[(i, short)] = 1.0;
        a[(i, dispose)] = -1.0;
        a[(i, stock)] = -1.0;
        rhs[i] = it.demand - initial.map_or(0.0, |s| s[i]);
        a[(k + i, stock)] = 1.0;
        a[(k + i, slack)] = 1.0;
        rhs[k + i] = it.capacity;
        a[(2 * k, order)] = 1.0;
        cost[order] = it.order_cost;
        cost[short] = it.shortage_cost;
        cost[dispose] = 0.1;
        cost[stock] = it.holding_cost;
        b_link[(i, stock)] = 1.0;
    }
    a[(2 * k, n - 1)] = 1.0;
    rhs[2 * k] = order_budget;
    StageRealization { a, b_link, rhs, cost }
}

fn inventory_items(demands: &[f64], order_cost: f64) -> Vec<ItemData> {
    demands
        .iter()
        .map(|&d| ItemData {
            demand: d,
            order_cost,
            shortage_cost: 10.0,
            holding_cost: 0.5,
            capacity: 4.0,
        })
        .collect()
}

/// Single-item inventory over `horizon` stages with one outcome per stage.
pub fn deterministic_chain(horizon: usize) -> MultistageProblem {
    let stage0 = inventory_stage(&inventory_items(&[1.0], 1.0), 3.0, Some(&[0.0]));
    let outcomes = (0..horizon)
        .map(|t| vec![inventory_stage(&inventory_items(&[1.0 + (t % 2) as f64], 1.5), 3.0, None)])
        .collect();
    MultistageProblem::new(
        stage0,
        UncertaintyProcess {
            outcomes,
            distribution: Distribution::StagewiseIndependent {
                probabilities: vec![vec![1.0]; horizon],
            },
        },
    )
}

/// Single-item inventory with `outcomes` equally likely demands per stage.
pub fn wide_stagewise(horizon: usize, outcomes: usize) -> MultistageProblem {
    let stage0 = inventory_stage(&inventory_items(&[1.0], 1.0), 3.0, Some(&[0.0]));
    let stage = (0..outcomes)
        .map(|w| inventory_stage(&inventory_items(&[w as f64 * 0.5], 1.5), 3.0, None))
        .collect::<Vec<_>>();
    MultistageProblem::new(
        stage0,
        UncertaintyProcess {
            outcomes: vec![stage; horizon],
            distribution: Distribution::StagewiseIndependent {
                probabilities: vec![vec![1.0 / outcomes as f64; outcomes]; horizon],
            },
        },
    )
}

/// Three random stages, two regimes (low demand / cheap orders and high
/// demand / expensive orders), persistent non-uniform transitions.
pub fn markov_toy() -> MultistageProblem {
    let stage0 = inventory_stage(&inventory_items(&[1.0], 1.0), 3.0, Some(&[0.0]));
    let low = inventory_stage(&inventory_items(&[1.0], 1.0), 3.0, None);
    let high = inventory_stage(&inventory_items(&[3.0], 2.0), 3.0, None);
    let p = DenseMatrix::from_rows(&[vec![0.8, 0.2], vec![0.3, 0.7]]);
    MultistageProblem::new(
        stage0,
        UncertaintyProcess {
            outcomes: vec![vec![low.clone(), high.clone()]; 3],
            distribution: Distribution::Markov {
                initial: vec![0.5, 0.5],
                transitions: vec![p.clone(), p],
            },
        },
    )
}

/// Random enumerable multi-item inventory instance: `T` in 2..=4, up to three
/// outcomes per stage, resource dimension 1..=3. Relatively complete recourse
/// holds through the shortage and disposal columns.
pub fn random_enumerable(seed: u64, markov: bool) -> MultistageProblem {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let horizon = rng.gen_range(2..=4);
    let dim = rng.gen_range(1..=3);
    let budget = rng.gen_range(2.0..4.0) * dim as f64;
    let base: Vec<ItemData> = (0..dim)
        .map(|_| ItemData {
            demand: 0.0,
            order_cost: rng.gen_range(1.0..2.0),
            shortage_cost: rng.gen_range(6.0..12.0),
            holding_cost: rng.gen_range(0.1..0.6),
            capacity: rng.gen_range(3.0..6.0),
        })
        .collect();
    let draw_items = |rng: &mut ChaCha8Rng| -> Vec<ItemData> {
        base.iter()
            .map(|b| ItemData {
                demand: (rng.gen_range(0.0..4.0f64) * 4.0).round() / 4.0,
                order_cost: b.order_cost * rng.gen_range(0.7..1.5),
                ..b.clone()
            })
            .collect()
    };
    let initial: Vec<f64> = (0..dim).map(|_| rng.gen_range(0.0..2.0f64).round()).collect();
    let first = draw_items(&mut rng);
    let stage0 = inventory_stage(&first, budget, Some(&initial));
    let counts: Vec<usize> = if markov {
        vec![rng.gen_range(2..=3); horizon]
    } else {
        (0..horizon).map(|_| rng.gen_range(1..=3)).collect()
    };
    let outcomes: Vec<Vec<StageRealization>> = counts
        .iter()
        .map(|&n| (0..n).map(|_| inventory_stage(&draw_items(&mut rng), budget, None)).collect())
        .collect();
    let random_simplex = |rng: &mut ChaCha8Rng, n: usize| -> Vec<f64> {
        let w: Vec<f64> = (0..n).map(|_| rng.gen_range(0.2..1.0)).collect();
        let s: f64 = w.iter().sum();
        let mut p: Vec<f64> = w.iter().map(|x| x / s).collect();
        // absorb rounding so rows sum to one exactly
        let rest: f64 = p[1..].iter().sum();
        p[0] = 1.0 - rest;
        p
    };
    let distribution = if markov {
        let initial = random_simplex(&mut rng, counts[0]);
        let transitions = (1..horizon)
            .map(|t| {
                let rows: Vec<Vec<f64>> =
                    (0..counts[t - 1]).map(|_| random_simplex(&mut rng, counts[t])).collect();
                DenseMatrix::from_rows(&rows)
            })
            .collect();
        Distribution::Markov { initial, transitions }
    } else {
        Distribution::StagewiseIndependent {
            probabilities: counts.iter().map(|&n| random_simplex(&mut rng, n)).collect(),
        }
    };
    MultistageProblem::new(stage0, UncertaintyProcess { outcomes, distribution })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn toys_validate() {
        assert!(newsvendor().validate().is_empty());
        assert!(markov_toy().validate().is_empty());
        assert!(deterministic_chain(4).validate().is_empty());
        for seed in 0..20 {
            for markov in [false, true] {
                let p = random_enumerable(seed, markov);
                assert!(p.validate().is_empty(), "seed {seed}: {:?}", p.validate());
                assert!(p.horizon() <= 4 && p.resource_dim(0) <= 3);
            }
        }
    }
}
