//! Energy-storage dispatch benchmark on a transportation network.
//!
//! Every period is one stage. Stage variables, all in energy per period
//! (MWh), are stacked as
//!
//! ```text
//! [ storage i: charge, discharge, level, level slack, power slack ]
//! [ generator g: output, upper ramp slack, lower ramp surplus     ]
//! [ line l: forward flow, backward flow, two capacity slacks      ]
//! [ node n: load shed, spill                                      ]
//! ```
//!
//! and the rows are
//!
//! ```text
//! storage balance   -level + eta_c charge - discharge / eta_d = -R_prev   (linking)
//! level cap         level + slack = capacity
//! power cap         charge + discharge + slack = power
//! ramp window       output + s = hi_t,  output - s' = lo_t
//! line caps         flow + s = capacity (both directions)
//! node balance      gen + discharge - charge + in - out + shed - spill = demand - wind
//! ```
//!
//! The resource state is the vector of storage levels. Generators follow a
//! committed base schedule and may ramp within `ramp_limit` of it, so
//! generation does not enter the resource state. Shedding at a large finite
//! price and free spilling give relatively complete recourse.

use std::path::Path;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::DenseMatrix;
use crate::model::{Distribution, MultistageProblem, StageRealization, UncertaintyProcess};

/// Parameter file format version.
pub const PARAMS_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StorageNetworkParams {
    pub format_version: u32,
    pub seed: u64,
    pub n_nodes: usize,
    /// Undirected links; the first `n_nodes - 1` form a spanning path.
    pub n_lines: usize,
    /// MW per line.
    pub line_capacity: f64,
    pub n_storage: usize,
    /// MWh per device.
    pub storage_capacity: f64,
    /// Initial level as a fraction of capacity.
    pub initial_fill: f64,
    pub eta_charge: f64,
    pub eta_discharge: f64,
    /// MW per device, shared by charging and discharging.
    pub storage_power: f64,
    /// Currency per MWh charged or discharged.
    pub storage_cost: f64,
    pub n_generators: usize,
    /// MW per generator.
    pub generator_capacity: f64,
    /// MW a generator may deviate from its base schedule per period.
    pub ramp_limit: f64,
    pub generator_cost_min: f64,
    pub generator_cost_max: f64,
    /// Peak total demand in MW.
    pub peak_demand: f64,
    pub n_wind_nodes: usize,
    /// MW per wind node.
    pub wind_capacity: f64,
    pub n_regimes: usize,
    /// Probability of staying in the current regime.
    pub p_stay: f64,
    /// Markov regimes when set, equally likely independent regimes otherwise.
    pub markov: bool,
    /// Number of random periods after the deterministic period 0.
    pub horizon: usize,
    pub period_minutes: f64,
    /// Shedding price as a multiple of the most expensive generator.
    pub shed_penalty_factor: f64,
}

impl Default for StorageNetworkParams {
    fn default() -> Self {
        Self::desk()
    }
}

impl StorageNetworkParams {
    /// Small instance for quick experiments: 10 devices, 24 hourly periods,
    /// three wind regimes.
    pub fn desk() -> Self {
        Self {
            format_version: PARAMS_VERSION,
            seed: 0,
            n_nodes: 6,
            n_lines: 8,
            line_capacity: 60.0,
            n_storage: 10,
            storage_capacity: 40.0,
            initial_fill: 0.5,
            eta_charge: 0.9,
            eta_discharge: 0.9,
            storage_power: 15.0,
            storage_cost: 0.5,
            n_generators: 5,
            generator_capacity: 80.0,
            ramp_limit: 25.0,
            generator_cost_min: 20.0,
            generator_cost_max: 60.0,
            peak_demand: 300.0,
            n_wind_nodes: 2,
            wind_capacity: 100.0,
            n_regimes: 3,
            p_stay: 0.91,
            markov: true,
            horizon: 24,
            period_minutes: 60.0,
            shed_penalty_factor: 1e4,
        }
    }

    /// Full-length configuration: ten regimes with 91%
    /// persistence and 5-minute periods over a day.
    pub fn full_scale() -> Self {
        Self {
            n_nodes: 40,
            n_lines: 60,
            n_storage: 50,
            n_generators: 30,
            peak_demand: 2000.0,
            n_wind_nodes: 8,
            wind_capacity: 150.0,
            n_regimes: 10,
            horizon: 288,
            period_minutes: 5.0,
            ..Self::desk()
        }
    }

    pub fn check(&self) -> Result<()> {
        let fail = |msg: String| Err(Error::InvalidParams(msg));
        if self.format_version != PARAMS_VERSION {
            return Err(Error::VersionMismatch { found: self.format_version, expected: PARAMS_VERSION });
        }
        if self.n_nodes == 0 || self.n_generators == 0 || self.n_regimes == 0 || self.horizon == 0 {
            return fail("nodes, generators, regimes and horizon must be positive".into());
        }
        if self.n_lines + 1 < self.n_nodes {
            return fail(format!("{} lines cannot connect {} nodes", self.n_lines, self.n_nodes));
        }
        if self.n_wind_nodes > self.n_nodes {
            return fail(format!("{} wind nodes but only {} nodes", self.n_wind_nodes, self.n_nodes));
        }
        for (name, eta) in [("eta_charge", self.eta_charge), ("eta_discharge", self.eta_discharge)] {
            if !(eta > 0.0 && eta <= 1.0) {
                return fail(format!("{name} must lie in (0,1], got {eta}"));
            }
        }
        if !(self.p_stay > 0.0 && self.p_stay < 1.0) {
            return fail(format!("p_stay must lie in (0,1), got {}", self.p_stay));
        }
        if !(0.0..=1.0).contains(&self.initial_fill) {
            return fail(format!("initial_fill must lie in [0,1], got {}", self.initial_fill));
        }
        let nonneg = [
            ("line_capacity", self.line_capacity),
            ("storage_capacity", self.storage_capacity),
            ("storage_power", self.storage_power),
            ("storage_cost", self.storage_cost),
            ("generator_capacity", self.generator_capacity),
            ("ramp_limit", self.ramp_limit),
            ("generator_cost_min", self.generator_cost_min),
            ("peak_demand", self.peak_demand),
            ("wind_capacity", self.wind_capacity),
        ];
        for (name, v) in nonneg {
            if !(v >= 0.0 && v.is_finite()) {
                return fail(format!("{name} must be a finite non-negative number, got {v}"));
            }
        }
        if !(self.generator_cost_max >= self.generator_cost_min && self.generator_cost_max.is_finite()) {
            return fail("generator_cost_max must be at least generator_cost_min".into());
        }
        if !(self.period_minutes > 0.0) || !(self.shed_penalty_factor > 1.0) {
            return fail("period_minutes must be positive and shed_penalty_factor above 1".into());
        }
        if self.n_generators as f64 * self.generator_capacity < self.peak_demand {
            return fail(format!(
                "total generation capacity {} is below peak demand {}",
                self.n_generators as f64 * self.generator_capacity,
                self.peak_demand
            ));
        }
        Ok(())
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let value: serde_json::Value = serde_json::from_str(text)?;
        let version = value
            .get("format_version")
            .and_then(|v| v.as_u64())
            .ok_or_else(|| Error::Malformed("missing format_version".into()))?;
        if version != PARAMS_VERSION as u64 {
            return Err(Error::VersionMismatch { found: version as u32, expected: PARAMS_VERSION });
        }
        Ok(serde_json::from_value(value)?)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_json()?)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }
}

/// Column and row layout shared by every stage of a generated instance.
#[derive(Debug, Clone, Copy)]
pub struct StorageLayout {
    pub n_storage: usize,
    pub n_generators: usize,
    pub n_lines: usize,
    pub n_nodes: usize,
}

impl StorageLayout {
    pub fn charge(&self, i: usize) -> usize {
        5 * i
    }
    pub fn discharge(&self, i: usize) -> usize {
        5 * i + 1
    }
    pub fn level(&self, i: usize) -> usize {
        5 * i + 2
    }
    pub fn generation(&self, g: usize) -> usize {
        5 * self.n_storage + 3 * g
    }
    fn line(&self, l: usize) -> usize {
        5 * self.n_storage + 3 * self.n_generators + 4 * l
    }
    pub fn shed(&self, n: usize) -> usize {
        5 * self.n_storage + 3 * self.n_generators + 4 * self.n_lines + 2 * n
    }
    pub fn num_vars(&self) -> usize {
        5 * self.n_storage + 3 * self.n_generators + 4 * self.n_lines + 2 * self.n_nodes
    }
    pub fn num_rows(&self) -> usize {
        3 * self.n_storage + 2 * self.n_generators + 2 * self.n_lines + self.n_nodes
    }
}

/// Randomly drawn network data behind an instance.
struct Network {
    lines: Vec<(usize, usize)>,
    storage_node: Vec<usize>,
    generator_node: Vec<usize>,
    generator_cost: Vec<f64>,
    wind_node: Vec<usize>,
    /// `demand[t][n]` in MW.
    demand: Vec<Vec<f64>>,
    /// `wind[t][regime][k]` in MW for wind node `k`.
    wind: Vec<Vec<Vec<f64>>>,
}

fn draw_network<R: Rng + ?Sized>(p: &StorageNetworkParams, rng: &mut R) -> Network {
    let periods = p.horizon + 1;
    let mut lines: Vec<(usize, usize)> = (1..p.n_nodes).map(|n| (n - 1, n)).collect();
    while lines.len() < p.n_lines {
        if p.n_nodes < 2 {
            lines.push((0, 0));
            continue;
        }
        let a = rng.gen_range(0..p.n_nodes);
        let mut b = rng.gen_range(0..p.n_nodes - 1);
        if b >= a {
            b += 1;
        }
        lines.push((a.min(b), a.max(b)));
    }
    let weights: Vec<f64> = (0..p.n_nodes).map(|_| rng.gen_range(0.5..1.5)).collect();
    let total_weight: f64 = weights.iter().sum();
    let shares: Vec<f64> = weights.iter().map(|w| w / total_weight).collect();
    let hours_per_period = p.period_minutes / 60.0;
    let demand = (0..periods)
        .map(|t| {
            let hour = t as f64 * hours_per_period;
            // daily shape peaking in the evening, between 60% and 100% of peak
            let shape = 0.8 + 0.2 * (2.0 * std::f64::consts::PI * (hour - 12.0) / 24.0).sin();
            shares.iter().map(|s| p.peak_demand * shape * s).collect()
        })
        .collect();
    let mut by_demand: Vec<usize> = (0..p.n_nodes).collect();
    by_demand.sort_by(|&a, &b| weights[b].total_cmp(&weights[a]).then(a.cmp(&b)));
    let mut wind_node: Vec<usize> = by_demand.iter().rev().copied().take(p.n_wind_nodes).collect();
    wind_node.sort_unstable();
    // devices sit at the wind farms first, then at the heaviest loads
    let mut sites: Vec<usize> = wind_node.clone();
    sites.extend(by_demand.iter().copied().filter(|n| !wind_node.contains(n)));
    let storage_node = (0..p.n_storage).map(|i| sites[i % sites.len()]).collect();
    let generator_node = (0..p.n_generators).map(|g| by_demand[g % p.n_nodes]).collect();
    let generator_cost = (0..p.n_generators)
        .map(|_| {
            if p.generator_cost_max > p.generator_cost_min {
                rng.gen_range(p.generator_cost_min..p.generator_cost_max)
            } else {
                p.generator_cost_min
            }
        })
        .collect();
    let levels: Vec<f64> = (0..p.n_regimes)
        .map(|r| if p.n_regimes == 1 { 0.5 } else { 0.1 + 0.8 * r as f64 / (p.n_regimes - 1) as f64 })
        .collect();
    let phase: Vec<f64> = (0..p.n_wind_nodes).map(|_| rng.gen_range(0.0..24.0)).collect();
    let wind = (0..periods)
        .map(|t| {
            let hour = t as f64 * hours_per_period;
            levels
                .iter()
                .map(|level| {
                    phase
                        .iter()
                        .map(|ph| {
                            let diurnal = 1.0 + 0.25 * (2.0 * std::f64::consts::PI * (hour - ph) / 24.0).cos();
                            let noise = rng.gen_range(0.9..1.1);
                            (p.wind_capacity * level * diurnal * noise).clamp(0.0, p.wind_capacity)
                        })
                        .collect()
                })
                .collect()
        })
        .collect();
    Network { lines, storage_node, generator_node, generator_cost, wind_node, demand, wind }
}

fn stage(p: &StorageNetworkParams, net: &Network, t: usize, wind: &[f64]) -> StageRealization {
    let layout = StorageLayout {
        n_storage: p.n_storage,
        n_generators: p.n_generators,
        n_lines: p.n_lines,
        n_nodes: p.n_nodes,
    };
    let h = p.period_minutes / 60.0;
    let (n, m) = (layout.num_vars(), layout.num_rows());
    let mut a = DenseMatrix::zeros(m, n);
    let mut rhs = vec![0.0; m];
    let mut cost = vec![0.0; n];
    let mut b_link = DenseMatrix::zeros(p.n_storage, n);
    let ns = p.n_storage;
    let balance_row = 3 * ns + 2 * p.n_generators + 2 * p.n_lines;

    for i in 0..ns {
        let (c, d, lvl) = (layout.charge(i), layout.discharge(i), layout.level(i));
        a[(i, lvl)] = -1.0;
        a[(i, c)] = p.eta_charge;
        a[(i, d)] = -1.0 / p.eta_discharge;
        if t == 0 {
            rhs[i] = -p.initial_fill * p.storage_capacity;
        }
        a[(ns + i, lvl)] = 1.0;
        a[(ns + i, lvl + 1)] = 1.0;
        rhs[ns + i] = p.storage_capacity;
        a[(2 * ns + i, c)] = 1.0;
        a[(2 * ns + i, d)] = 1.0;
        a[(2 * ns + i, lvl + 2)] = 1.0;
        rhs[2 * ns + i] = p.storage_power * h;
        cost[c] = p.storage_cost;
        cost[d] = p.storage_cost;
        b_link[(i, lvl)] = 1.0;
        let node = net.storage_node[i];
        a[(balance_row + node, d)] += 1.0;
        a[(balance_row + node, c)] -= 1.0;
    }

    // committed schedule: expected net demand split by capacity
    let expected_wind: f64 = net.wind[t].iter().map(|r| r.iter().sum::<f64>()).sum::<f64>() / p.n_regimes as f64;
    let net_demand = (net.demand[t].iter().sum::<f64>() - expected_wind).max(0.0);
    let total_cap = p.n_generators as f64 * p.generator_capacity;
    let base = (net_demand / total_cap).min(1.0) * p.generator_capacity;
    let hi = (base + p.ramp_limit).min(p.generator_capacity) * h;
    let lo = (base - p.ramp_limit).max(0.0) * h;
    for g in 0..p.n_generators {
        let col = layout.generation(g);
        let row = 3 * ns + 2 * g;
        a[(row, col)] = 1.0;
        a[(row, col + 1)] = 1.0;
        rhs[row] = hi;
        a[(row + 1, col)] = 1.0;
        a[(row + 1, col + 2)] = -1.0;
        rhs[row + 1] = lo;
        cost[col] = net.generator_cost[g];
        a[(balance_row + net.generator_node[g], col)] += 1.0;
    }

    for (l, &(from, to)) in net.lines.iter().enumerate() {
        let col = layout.line(l);
        let row = 3 * ns + 2 * p.n_generators + 2 * l;
        for dir in 0..2 {
            a[(row + dir, col + dir)] = 1.0;
            a[(row + dir, col + 2 + dir)] = 1.0;
            rhs[row + dir] = p.line_capacity * h;
        }
        // forward flow leaves `from` and enters `to`
        a[(balance_row + from, col)] -= 1.0;
        a[(balance_row + to, col)] += 1.0;
        a[(balance_row + to, col + 1)] -= 1.0;
        a[(balance_row + from, col + 1)] += 1.0;
    }

    let max_cost = net.generator_cost.iter().cloned().fold(0.0, f64::max).max(1.0);
    for node in 0..p.n_nodes {
        let shed = layout.shed(node);
        a[(balance_row + node, shed)] = 1.0;
        a[(balance_row + node, shed + 1)] = -1.0;
        cost[shed] = p.shed_penalty_factor * max_cost;
        rhs[balance_row + node] = net.demand[t][node] * h;
    }
    for (k, &node) in net.wind_node.iter().enumerate() {
        rhs[balance_row + node] -= wind[k] * h;
    }
    StageRealization { a, b_link, rhs, cost }
}

/// Builds a storage dispatch instance; the random network data are drawn from
/// `rng`.
pub fn generate_storage_instance<R: Rng + ?Sized>(
    params: &StorageNetworkParams,
    rng: &mut R,
) -> Result<MultistageProblem> {
    params.check()?;
    let net = draw_network(params, rng);
    let nr = params.n_regimes;
    let mean_wind: Vec<f64> = (0..params.n_wind_nodes)
        .map(|k| net.wind[0].iter().map(|r| r[k]).sum::<f64>() / nr as f64)
        .collect();
    let stage0 = stage(params, &net, 0, &mean_wind);
    let outcomes = (1..=params.horizon)
        .map(|t| (0..nr).map(|r| stage(params, &net, t, &net.wind[t][r])).collect())
        .collect();
    let uniform = vec![1.0 / nr as f64; nr];
    let distribution = if params.markov {
        let transitions = (1..params.horizon).map(|_| regime_transitions(nr, params.p_stay)).collect();
        Distribution::Markov { initial: uniform, transitions }
    } else {
        Distribution::StagewiseIndependent { probabilities: vec![uniform; params.horizon] }
    };
    let problem = MultistageProblem::new(stage0, UncertaintyProcess { outcomes, distribution });
    problem.validate().into_result()?;
    Ok(problem)
}

/// Regime transition matrix with `p_stay` on the diagonal and the remaining
/// mass spread evenly over the other regimes.
pub fn regime_transitions(n: usize, p_stay: f64) -> DenseMatrix {
    if n == 1 {
        return DenseMatrix::identity(1);
    }
    let off = (1.0 - p_stay) / (n - 1) as f64;
    let mut m = DenseMatrix::zeros(n, n);
    for i in 0..n {
        for j in 0..n {
            m[(i, j)] = off;
        }
        // put rounding on the diagonal so rows sum to one
        m[(i, i)] = 1.0 - off * (n - 1) as f64;
    }
    m
}

pub fn layout_of(params: &StorageNetworkParams) -> StorageLayout {
    StorageLayout {
        n_storage: params.n_storage,
        n_generators: params.n_generators,
        n_lines: params.n_lines,
        n_nodes: params.n_nodes,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn build(params: &StorageNetworkParams) -> MultistageProblem {
        generate_storage_instance(params, &mut ChaCha8Rng::seed_from_u64(params.seed)).unwrap()
    }

    #[test]
    fn full_scale_chain() {
        let p = StorageNetworkParams::full_scale();
        assert_eq!((p.n_regimes, p.p_stay, p.horizon), (10, 0.91, 288));
        let m = regime_transitions(10, 0.91);
        for i in 0..10 {
            assert!((m.row(i).iter().sum::<f64>() - 1.0).abs() <= 1e-15);
            for j in 0..10 {
                let expected = if i == j { 0.91 } else { 0.01 };
                assert!((m[(i, j)] - expected).abs() < 1e-15);
            }
        }
    }

    #[test]
    fn desk_instance_is_valid() {
        let p = build(&StorageNetworkParams::desk());
        assert!(p.validate().is_empty());
        assert_eq!(p.horizon(), 24);
        assert_eq!(p.resource_dim(0), 10);
        assert_eq!(p.num_outcomes(5), 3);
    }

    #[test]
    fn tiny_instance_is_enumerable() {
        let params = StorageNetworkParams { n_storage: 2, horizon: 2, n_regimes: 2, ..StorageNetworkParams::desk() };
        let p = build(&params);
        assert_eq!(p.enumerate_paths(4).unwrap().len(), 4);
        assert!(crate::oracle::build_and_solve_extensive_form(&p).is_ok());
    }

    #[test]
    fn generation_is_deterministic() {
        let params = StorageNetworkParams { seed: 42, ..StorageNetworkParams::desk() };
        assert_eq!(build(&params).to_json().unwrap(), build(&params).to_json().unwrap());
        let other = StorageNetworkParams { seed: 43, ..params.clone() };
        assert_ne!(build(&params), build(&other));
    }

    #[test]
    fn invalid_params_rejected() {
        let bad = [
            StorageNetworkParams { eta_charge: 0.0, ..StorageNetworkParams::desk() },
            StorageNetworkParams { p_stay: 1.0, ..StorageNetworkParams::desk() },
            StorageNetworkParams { n_generators: 1, ..StorageNetworkParams::desk() },
            StorageNetworkParams { n_lines: 2, ..StorageNetworkParams::desk() },
        ];
        for params in bad {
            let mut rng = ChaCha8Rng::seed_from_u64(0);
            assert!(matches!(generate_storage_instance(&params, &mut rng), Err(Error::InvalidParams(_))));
        }
    }

    #[test]
    fn params_round_trip() {
        let params = StorageNetworkParams::full_scale();
        let back = StorageNetworkParams::from_json(&params.to_json().unwrap()).unwrap();
        assert_eq!(back, params);
    }
}
