//! `regsddp` command-line interface.

use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::cutpool::CutPool;
use crate::engine::{self, EngineConfig, RegularizationSchedule};
use crate::error::{Error, Result};
use crate::harness::bench;
use crate::harness::storage::{generate_storage_instance, StorageNetworkParams};
use crate::linalg::DenseMatrix;
use crate::model::{MultistageProblem, ProcessKind};
use crate::oracle;

#[derive(Debug, Parser)]
#[command(name = "regsddp", version, about = "Regularized SDDP for multistage stochastic linear programs")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a storage dispatch instance from a parameter file or preset.
    Generate(GenerateArgs),
    /// Run SDDP and write the cut file and bounds table.
    Solve(SolveArgs),
    /// Compare the lower bound of a cut file with the exact optimum.
    Verify(VerifyArgs),
    /// Expected cost of the cut policy (Monte Carlo or exact).
    Evaluate(EvaluateArgs),
    /// Regularized versus plain comparisons.
    Bench(BenchArgs),
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum Preset {
    Desk,
    Full,
}

#[derive(Debug, Args)]
pub struct GenerateArgs {
    /// Parameter file; the preset is used when absent.
    #[arg(long)]
    pub params: Option<PathBuf>,
    #[arg(long, value_enum, default_value = "desk")]
    pub preset: Preset,
    /// Write the effective parameters here as well.
    #[arg(long)]
    pub write_params: Option<PathBuf>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub n_storage: Option<usize>,
    #[arg(long)]
    pub horizon: Option<usize>,
    #[arg(long)]
    pub regimes: Option<usize>,
    /// Equally likely independent regimes instead of a Markov chain.
    #[arg(long)]
    pub independent: bool,
    #[arg(short, long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct SolveArgs {
    pub instance: PathBuf,
    /// Cut file to write.
    #[arg(long, default_value = "cuts.json")]
    pub cuts: PathBuf,
    /// Bounds table to write; printed to stdout when absent.
    #[arg(long)]
    pub bounds: Option<PathBuf>,
    #[arg(long, overrides_with = "plain")]
    pub regularized: bool,
    #[arg(long, overrides_with = "regularized")]
    pub plain: bool,
    #[arg(long, overrides_with = "independent")]
    pub markov: bool,
    #[arg(long, overrides_with = "markov")]
    pub independent: bool,
    #[arg(long, default_value_t = 1.0)]
    pub rho0: f64,
    #[arg(long, default_value_t = 0.95)]
    pub decay: f64,
    #[arg(long, default_value_t = 300)]
    pub iters: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value_t = 1e-8)]
    pub eps_feas: f64,
    #[arg(long, default_value_t = 100)]
    pub ub_samples: usize,
    #[arg(long, default_value_t = 10)]
    pub ub_every: usize,
    /// `identity` or `diag:<file>` with a JSON list of per-stage diagonals
    /// (or one diagonal for every stage).
    #[arg(long, default_value = "identity")]
    pub q_scale: String,
    #[arg(long)]
    pub threads: Option<usize>,
    /// Stop when the lower bound is unchanged for this many iterations.
    #[arg(long)]
    pub stall: Option<usize>,
    /// Fill the wall-time column of the bounds table.
    #[arg(long)]
    pub timing: bool,
    /// Write every subproblem and its solution into this directory.
    #[arg(long)]
    pub debug_dump: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct VerifyArgs {
    pub instance: PathBuf,
    pub cuts: PathBuf,
    /// Relative tolerance on `LB <= V*`.
    #[arg(long, default_value_t = 1e-6)]
    pub tol: f64,
}

#[derive(Debug, Args)]
pub struct EvaluateArgs {
    pub instance: PathBuf,
    pub cuts: PathBuf,
    /// Walk the whole scenario tree instead of sampling.
    #[arg(long)]
    pub exact: bool,
    #[arg(long, default_value_t = 1000)]
    pub samples: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

#[derive(Debug, Args)]
pub struct BenchArgs {
    #[command(subcommand)]
    pub mode: BenchMode,
}

#[derive(Debug, Subcommand)]
pub enum BenchMode {
    /// Lower-bound trajectories for every (rho0, r) in {1,10,100} x {0.9,0.95,0.99}.
    Tuning {
        instance: PathBuf,
        #[arg(long, default_value_t = 100)]
        iters: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Paired regularized and plain runs on one instance over several seeds.
    Compare {
        instance: PathBuf,
        #[arg(long, default_value_t = 100)]
        iters: usize,
        #[arg(long, value_delimiter = ',', default_value = "0,1,2,3,4")]
        seeds: Vec<u64>,
        #[arg(long, default_value_t = 1.0)]
        rho0: f64,
        #[arg(long, default_value_t = 0.95)]
        decay: f64,
        #[arg(long)]
        out_dir: Option<PathBuf>,
    },
    /// Generated storage instances of several sizes, paired runs per seed.
    Storage {
        #[arg(long, value_delimiter = ',', default_value = "5,10,20")]
        sizes: Vec<usize>,
        #[arg(long, value_delimiter = ',', default_value = "0,1,2,3,4")]
        seeds: Vec<u64>,
        #[arg(long, default_value_t = 24)]
        horizon: usize,
        #[arg(long, default_value_t = 100)]
        iters: usize,
        #[arg(long, default_value_t = 1.0)]
        rho0: f64,
        #[arg(long, default_value_t = 0.95)]
        decay: f64,
        /// Parameter template; sizes and seeds override its fields.
        #[arg(long)]
        params: Option<PathBuf>,
        #[arg(long)]
        threads: Option<usize>,
        #[arg(long)]
        out_dir: Option<PathBuf>,
    },
}

/// Parses `argv` and runs the command. Returns the process exit code.
pub fn run_cli<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 2 } else { 0 };
        }
    };
    let stdout = std::io::stdout();
    let mut out = stdout.lock();
    match execute(cli.command, &mut out) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            1
        }
    }
}

/// Runs one command, writing its report to `out`.
pub fn execute(command: Command, out: &mut dyn Write) -> Result<i32> {
    match command {
        Command::Generate(args) => generate(args, out),
        Command::Solve(args) => solve(args, out),
        Command::Verify(args) => verify(args, out),
        Command::Evaluate(args) => evaluate(args, out),
        Command::Bench(args) => bench_cmd(args.mode, out),
    }
}

fn generate(args: GenerateArgs, out: &mut dyn Write) -> Result<i32> {
    let mut params = match &args.params {
        Some(path) => StorageNetworkParams::load(path)?,
        None => match args.preset {
            Preset::Desk => StorageNetworkParams::desk(),
            Preset::Full => StorageNetworkParams::full_scale(),
        },
    };
    if let Some(seed) = args.seed {
        params.seed = seed;
    }
    if let Some(n) = args.n_storage {
        params.n_storage = n;
    }
    if let Some(h) = args.horizon {
        params.horizon = h;
    }
    if let Some(r) = args.regimes {
        params.n_regimes = r;
    }
    if args.independent {
        params.markov = false;
    }
    let problem = generate_storage_instance(&params, &mut ChaCha8Rng::seed_from_u64(params.seed))?;
    problem.save(&args.out)?;
    if let Some(path) = &args.write_params {
        params.save(path)?;
    }
    writeln!(
        out,
        "wrote {} ({} stages, resource dimension {}, {} regimes)",
        args.out.display(),
        problem.horizon() + 1,
        problem.resource_dim(0),
        params.n_regimes
    )?;
    Ok(0)
}

/// Reads the `--q-scale` option into per-stage weights.
pub fn parse_q_scale(spec: &str, problem: &MultistageProblem) -> Result<Option<Vec<DenseMatrix>>> {
    if spec == "identity" {
        return Ok(None);
    }
    let Some(path) = spec.strip_prefix("diag:") else {
        return Err(Error::InvalidConfig(format!("--q-scale must be identity or diag:<file>, got {spec}")));
    };
    let value: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(path)?)?;
    let diagonals: Vec<Vec<f64>> = if value.get(0).is_some_and(|v| v.is_number()) {
        let d: Vec<f64> = serde_json::from_value(value)?;
        vec![d; problem.horizon()]
    } else {
        serde_json::from_value(value)?
    };
    if diagonals.len() != problem.horizon() {
        return Err(Error::DimensionMismatch {
            context: "q-scale stages".into(),
            expected: problem.horizon(),
            found: diagonals.len(),
        });
    }
    let mut weights = Vec::with_capacity(diagonals.len());
    for (t, d) in diagonals.iter().enumerate() {
        if d.iter().any(|v| !(*v >= 0.0) || !v.is_finite()) {
            return Err(Error::InvalidConfig(format!("q-scale of stage {t} has a negative entry")));
        }
        let mut m = DenseMatrix::zeros(d.len(), d.len());
        for (i, v) in d.iter().enumerate() {
            m[(i, i)] = *v;
        }
        weights.push(m);
    }
    Ok(Some(weights))
}

fn solve(args: SolveArgs, out: &mut dyn Write) -> Result<i32> {
    let problem = MultistageProblem::load(&args.instance)?;
    let markov = if args.independent {
        false
    } else {
        args.markov || problem.kind() == ProcessKind::Markov
    };
    let config = EngineConfig {
        iterations: args.iters,
        seed: args.seed,
        regularized: !args.plain,
        markov,
        schedule: RegularizationSchedule { rho0: args.rho0, decay: args.decay },
        q_weights: parse_q_scale(&args.q_scale, &problem)?,
        eps_f: args.eps_feas,
        ub_samples: args.ub_samples,
        ub_every: args.ub_every,
        stall_iterations: args.stall,
        threads: args.threads,
        warm_start: true,
        debug_dump: args.debug_dump.clone(),
    };
    let (pool, report) = engine::run(&problem, config)?;
    pool.save(&args.cuts)?;
    let table = report.to_csv(args.timing);
    match &args.bounds {
        Some(path) => {
            std::fs::write(path, &table)?;
            writeln!(
                out,
                "final lower bound {} after {} iterations; {} cuts written to {}",
                report.final_lower_bound().unwrap_or(f64::NAN),
                report.iterations.len(),
                pool.len(),
                args.cuts.display()
            )?;
        }
        None => out.write_all(table.as_bytes())?,
    }
    Ok(0)
}

fn verify(args: VerifyArgs, out: &mut dyn Write) -> Result<i32> {
    let problem = MultistageProblem::load(&args.instance)?;
    let pool = CutPool::load(&args.cuts)?;
    let lb = engine::policy_decision(&problem, &pool, 0, 0, &[])?.objective;
    let v_star = oracle::build_and_solve_extensive_form(&problem)?;
    let policy = oracle::evaluate_policy_exact(&problem, &pool)?;
    let scale = v_star.abs().max(1.0);
    let gap = v_star - lb;
    let ok = lb <= v_star + args.tol * scale;
    writeln!(out, "LB: {lb:.6}")?;
    writeln!(out, "V*: {v_star:.6}")?;
    writeln!(out, "gap: {}", format_small(gap, args.tol * scale))?;
    writeln!(out, "relative_gap: {:e}", gap / scale)?;
    writeln!(out, "policy_cost: {policy:.6}")?;
    writeln!(out, "status: {}", if ok { "ok" } else { "lower bound exceeds optimum" })?;
    Ok(if ok { 0 } else { 1 })
}

fn format_small(v: f64, tol: f64) -> String {
    if v.abs() <= tol {
        "0".into()
    } else {
        format!("{v:.6}")
    }
}

fn evaluate(args: EvaluateArgs, out: &mut dyn Write) -> Result<i32> {
    let problem = MultistageProblem::load(&args.instance)?;
    let pool = CutPool::load(&args.cuts)?;
    if args.exact {
        let value = oracle::evaluate_policy_exact(&problem, &pool)?;
        writeln!(out, "method: exact")?;
        writeln!(out, "policy_cost: {value:.6}")?;
    } else {
        let ub = engine::estimate_upper_bound(&problem, &pool, args.samples, args.seed)?;
        writeln!(out, "method: monte_carlo")?;
        writeln!(out, "samples: {}", ub.samples)?;
        writeln!(out, "policy_cost: {:.6}", ub.mean)?;
        writeln!(out, "stderr: {:.6}", ub.stderr)?;
    }
    Ok(0)
}

fn write_or_print(path: Option<&Path>, text: &str, out: &mut dyn Write) -> Result<()> {
    match path {
        Some(p) => {
            if let Some(dir) = p.parent() {
                if !dir.as_os_str().is_empty() {
                    std::fs::create_dir_all(dir)?;
                }
            }
            std::fs::write(p, text)?;
        }
        None => out.write_all(text.as_bytes())?,
    }
    Ok(())
}

fn bench_cmd(mode: BenchMode, out: &mut dyn Write) -> Result<i32> {
    match mode {
        BenchMode::Tuning { instance, iters, seed, out: path } => {
            let problem = MultistageProblem::load(&instance)?;
            let table = bench::tuning_table(&problem, iters, seed)?;
            write_or_print(path.as_deref(), &table, out)?;
        }
        BenchMode::Compare { instance, iters, seeds, rho0, decay, out_dir } => {
            let problem = MultistageProblem::load(&instance)?;
            let schedule = RegularizationSchedule { rho0, decay };
            writeln!(out, "seed,plain_iters_to_99,regularized_iters_to_99")?;
            for seed in seeds {
                let run = bench::paired_run(&problem, iters, seed, schedule, None)?;
                let show = |v: Option<usize>| v.map_or("-".to_string(), |k| k.to_string());
                writeln!(
                    out,
                    "{seed},{},{}",
                    show(bench::iterations_to_fraction(&run.plain, 0.99)),
                    show(bench::iterations_to_fraction(&run.regularized, 0.99))
                )?;
                if let Some(dir) = &out_dir {
                    write_or_print(Some(&dir.join(format!("seed{seed}.csv"))), &run.table(), out)?;
                }
            }
        }
        BenchMode::Storage { sizes, seeds, horizon, iters, rho0, decay, params, threads, out_dir } => {
            let mut template = match params {
                Some(p) => StorageNetworkParams::load(&p)?,
                None => StorageNetworkParams::desk(),
            };
            template.horizon = horizon;
            let schedule = RegularizationSchedule { rho0, decay };
            let result = bench::storage_benchmark(&template, &sizes, &seeds, iters, schedule, threads)?;
            if let Some(dir) = &out_dir {
                for size in &result.sizes {
                    for run in &size.runs {
                        let name = format!("storage{}_seed{}.csv", size.n_storage, run.seed);
                        write_or_print(Some(&dir.join(name)), &run.table(), out)?;
                    }
                }
                write_or_print(Some(&dir.join("summary.csv")), &result.summary(), out)?;
            }
            out.write_all(result.summary().as_bytes())?;
        }
    }
    Ok(0)
}
