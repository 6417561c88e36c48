//! Regularized-versus-plain comparisons and the penalty tuning grid.

use std::fmt::Write as _;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::engine::{self, EngineConfig, RegularizationSchedule, SolveReport};
use crate::error::Result;
use crate::harness::storage::{generate_storage_instance, StorageNetworkParams};
use crate::model::{MultistageProblem, ProcessKind};

/// The `(rho0, r)` pairs of the tuning study.
pub const TUNING_GRID: [(f64, f64); 9] = [
    (1.0, 0.9),
    (1.0, 0.95),
    (1.0, 0.99),
    (10.0, 0.9),
    (10.0, 0.95),
    (10.0, 0.99),
    (100.0, 0.9),
    (100.0, 0.95),
    (100.0, 0.99),
];

/// First iteration whose lower bound has covered `fraction` of the way from
/// the first iteration's bound to the final one.
pub fn iterations_to_fraction(report: &SolveReport, fraction: f64) -> Option<usize> {
    let first = report.iterations.first()?.lower_bound;
    let last = report.final_lower_bound()?;
    let target = first + fraction * (last - first);
    let slack = 1e-12 * (1.0 + target.abs());
    report.iterations.iter().find(|s| s.lower_bound >= target - slack).map(|s| s.iteration)
}

fn base_config(problem: &MultistageProblem, iterations: usize, seed: u64) -> EngineConfig {
    EngineConfig {
        iterations,
        seed,
        markov: problem.kind() == ProcessKind::Markov,
        ub_every: 0,
        ..EngineConfig::default()
    }
}

#[derive(Debug, Clone)]
pub struct PairedRun {
    pub seed: u64,
    pub plain: SolveReport,
    pub regularized: SolveReport,
}

impl PairedRun {
    /// Side-by-side lower-bound table.
    pub fn table(&self) -> String {
        let mut out = String::from("iter,plain_lower_bound,regularized_lower_bound,rho_k\n");
        for (p, r) in self.plain.iterations.iter().zip(&self.regularized.iterations) {
            let _ = writeln!(out, "{},{},{},{}", p.iteration, p.lower_bound, r.lower_bound, r.rho);
        }
        out
    }
}

/// Runs plain and regularized SDDP with the same seed (hence the same
/// sampled paths).
pub fn paired_run(
    problem: &MultistageProblem,
    iterations: usize,
    seed: u64,
    schedule: RegularizationSchedule,
    threads: Option<usize>,
) -> Result<PairedRun> {
    let base = EngineConfig { threads, ..base_config(problem, iterations, seed) };
    let (_, plain) = engine::run(problem, EngineConfig { regularized: false, ..base.clone() })?;
    let (_, regularized) = engine::run(problem, EngineConfig { regularized: true, schedule, ..base })?;
    Ok(PairedRun { seed, plain, regularized })
}

/// Lower-bound trajectories for every pair of [`TUNING_GRID`], one column
/// per pair.
pub fn tuning_table(problem: &MultistageProblem, iterations: usize, seed: u64) -> Result<String> {
    let mut reports = Vec::new();
    for &(rho0, decay) in &TUNING_GRID {
        let config = EngineConfig {
            schedule: RegularizationSchedule { rho0, decay },
            ..base_config(problem, iterations, seed)
        };
        reports.push(engine::run(problem, config)?.1);
    }
    let mut out = String::from("iter");
    for &(rho0, decay) in &TUNING_GRID {
        let _ = write!(out, ",rho0={rho0}/r={decay}");
    }
    out.push('\n');
    for k in 0..=iterations {
        let _ = write!(out, "{k}");
        for r in &reports {
            let _ = write!(out, ",{}", r.iterations[k].lower_bound);
        }
        out.push('\n');
    }
    Ok(out)
}

#[derive(Debug, Clone)]
pub struct SizeSummary {
    pub n_storage: usize,
    /// Per seed: iterations to 99% for (plain, regularized).
    pub iterations_to_99: Vec<(u64, Option<usize>, Option<usize>)>,
    pub runs: Vec<PairedRun>,
}

fn median(values: &mut [usize]) -> Option<f64> {
    if values.is_empty() {
        return None;
    }
    values.sort_unstable();
    let n = values.len();
    Some(if n % 2 == 1 { values[n / 2] as f64 } else { (values[n / 2 - 1] + values[n / 2]) as f64 / 2.0 })
}

impl SizeSummary {
    /// Medians of iterations-to-99% over seeds, `(plain, regularized)`.
    /// Runs that never reach the threshold count as the iteration budget.
    pub fn medians(&self, budget: usize) -> (f64, f64) {
        let mut plain: Vec<usize> = self.iterations_to_99.iter().map(|r| r.1.unwrap_or(budget)).collect();
        let mut reg: Vec<usize> = self.iterations_to_99.iter().map(|r| r.2.unwrap_or(budget)).collect();
        (median(&mut plain).unwrap_or(f64::NAN), median(&mut reg).unwrap_or(f64::NAN))
    }
}

#[derive(Debug, Clone)]
pub struct StorageBenchmark {
    pub iterations: usize,
    pub sizes: Vec<SizeSummary>,
}

impl StorageBenchmark {
    /// Whether the regularized median is at most the plain median on the
    /// largest instance size.
    pub fn regularization_helps_on_largest(&self) -> bool {
        match self.sizes.iter().max_by_key(|s| s.n_storage) {
            Some(s) => {
                let (plain, reg) = s.medians(self.iterations);
                reg <= plain
            }
            None => false,
        }
    }

    pub fn summary(&self) -> String {
        let mut out = String::from("n_storage,seed,plain_iters_to_99,regularized_iters_to_99,plain_final_lb,regularized_final_lb\n");
        let show = |v: Option<usize>| v.map_or("-".to_string(), |k| k.to_string());
        for size in &self.sizes {
            for (run, (seed, p, r)) in size.runs.iter().zip(&size.iterations_to_99) {
                let _ = writeln!(
                    out,
                    "{},{},{},{},{},{}",
                    size.n_storage,
                    seed,
                    show(*p),
                    show(*r),
                    run.plain.final_lower_bound().unwrap_or(f64::NAN),
                    run.regularized.final_lower_bound().unwrap_or(f64::NAN)
                );
            }
        }
        out.push('\n');
        out.push_str("n_storage,plain_median,regularized_median\n");
        for size in &self.sizes {
            let (p, r) = size.medians(self.iterations);
            let _ = writeln!(out, "{},{},{}", size.n_storage, p, r);
        }
        let _ = writeln!(
            out,
            "\nregularized median <= plain median on largest size: {}",
            if self.regularization_helps_on_largest() { "yes" } else { "no" }
        );
        out
    }
}

/// Generates one storage instance per `(size, seed)` and runs the paired
/// comparison on it.
pub fn storage_benchmark(
    template: &StorageNetworkParams,
    sizes: &[usize],
    seeds: &[u64],
    iterations: usize,
    schedule: RegularizationSchedule,
    threads: Option<usize>,
) -> Result<StorageBenchmark> {
    let mut out = Vec::new();
    for &n_storage in sizes {
        let mut summary = SizeSummary { n_storage, iterations_to_99: Vec::new(), runs: Vec::new() };
        for &seed in seeds {
            let params = StorageNetworkParams { n_storage, seed, ..template.clone() };
            let problem = generate_storage_instance(&params, &mut ChaCha8Rng::seed_from_u64(seed))?;
            let run = paired_run(&problem, iterations, seed, schedule, threads)?;
            log::info!("storage benchmark: n_storage {n_storage} seed {seed} done");
            summary.iterations_to_99.push((
                seed,
                iterations_to_fraction(&run.plain, 0.99),
                iterations_to_fraction(&run.regularized, 0.99),
            ));
            summary.runs.push(run);
        }
        out.push(summary);
    }
    Ok(StorageBenchmark { iterations, sizes: out })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::engine::IterationStats;
    use crate::harness::toy;

    fn report(lbs: &[f64]) -> SolveReport {
        SolveReport {
            iterations: lbs
                .iter()
                .enumerate()
                .map(|(k, &lb)| IterationStats {
                    iteration: k,
                    lower_bound: lb,
                    sampled_cost: 0.0,
                    rho: 0.0,
                    wall_ms: 0.0,
                    cuts_added: 0,
                    upper_bound: None,
                })
                .collect(),
        }
    }

    #[test]
    fn threshold_iteration() {
        assert_eq!(iterations_to_fraction(&report(&[0.0, 50.0, 99.5, 100.0]), 0.99), Some(2));
        assert_eq!(iterations_to_fraction(&report(&[-30.0, -12.0, -10.05, -10.0]), 0.99), Some(2));
        assert_eq!(iterations_to_fraction(&report(&[-30.0, -12.0, -10.3, -10.0]), 0.99), Some(3));
        assert_eq!(iterations_to_fraction(&report(&[5.0, 5.0]), 0.99), Some(0));
    }

    #[test]
    fn medians() {
        assert_eq!(median(&mut [5, 1, 3]), Some(3.0));
        assert_eq!(median(&mut [4, 1, 3, 2]), Some(2.5));
        assert_eq!(median(&mut []), None);
    }

    #[test]
    fn tuning_table_has_nine_columns() {
        let table = tuning_table(&toy::newsvendor(), 5, 0).unwrap();
        let lines: Vec<&str> = table.lines().collect();
        assert_eq!(lines.len(), 7);
        assert!(lines.iter().all(|l| l.split(',').count() == 10));
    }

    #[test]
    fn paired_runs_share_paths() {
        let p = toy::random_enumerable(3, false);
        let run = paired_run(&p, 10, 2, RegularizationSchedule::default(), None).unwrap();
        assert_eq!(run.plain.iterations.len(), run.regularized.iterations.len());
        // identical myopic first iteration
        assert_eq!(run.plain.iterations[0].lower_bound, run.regularized.iterations[0].lower_bound);
        assert_eq!(run.table().lines().count(), 12);
    }
}
