//! Multistage stochastic linear programs in standard form.
//!
//! Stage `t` chooses `x_t >= 0` subject to `A_t x_t = b_t - L(R_{t-1})`, where
//! `R_{t-1} = B_{t-1} x_{t-1}` is the post-decision resource state handed over
//! by the previous stage and `L` places it on the first `dim R_{t-1}` rows.
//! Stage 0 is deterministic; stages `1..=T` draw their data `(A, B, b, c)` from
//! a finite outcome set, either independently per stage or along a Markov
//! chain whose current outcome is the information state for the next stage.

use std::path::Path;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::DenseMatrix;

/// Instance file format version.
pub const FORMAT_VERSION: u32 = 1;

/// Tolerance on probability vectors and transition rows summing to one.
pub const PROBABILITY_SUM_TOL: f64 = 1e-12;

/// One realization of the stage data `W_t = (A_t, B_t, b_t, c_t)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageRealization {
    /// Equality constraint matrix, `m_t x n_t`.
    pub a: DenseMatrix,
    /// Resource map, `r_t x n_t`; `R_t = B_t x_t`.
    pub b_link: DenseMatrix,
    /// Right-hand side before the incoming resource is subtracted.
    pub rhs: Vec<f64>,
    pub cost: Vec<f64>,
}

impl StageRealization {
    pub fn num_vars(&self) -> usize {
        self.a.cols
    }

    pub fn num_rows(&self) -> usize {
        self.a.rows
    }

    pub fn resource_dim(&self) -> usize {
        self.b_link.rows
    }

    /// Right-hand side after the incoming resource `r_prev` is subtracted from
    /// the leading rows.
    pub fn rhs_given(&self, r_prev: &[f64]) -> Vec<f64> {
        let mut rhs = self.rhs.clone();
        for (b, r) in rhs.iter_mut().zip(r_prev) {
            *b -= r;
        }
        rhs
    }

    pub fn resource(&self, x: &[f64]) -> Vec<f64> {
        self.b_link.mul_vec(x)
    }

    fn check(&self, label: &str, out: &mut Vec<String>) {
        let (m, n) = (self.a.rows, self.a.cols);
        if self.a.data.len() != m * n || self.b_link.data.len() != self.b_link.rows * self.b_link.cols
        {
            out.push(format!("{label}: matrix data length does not match its shape"));
        }
        if self.b_link.cols != n {
            out.push(format!(
                "{label}: B has {} columns but the stage has {n} variables",
                self.b_link.cols
            ));
        }
        if self.rhs.len() != m {
            out.push(format!("{label}: b has length {} but A has {m} rows", self.rhs.len()));
        }
        if self.cost.len() != n {
            out.push(format!("{label}: c has length {} but A has {n} columns", self.cost.len()));
        }
        if !(self.a.is_finite()
            && self.b_link.is_finite()
            && self.rhs.iter().all(|v| v.is_finite())
            && self.cost.iter().all(|v| v.is_finite()))
        {
            out.push(format!("{label}: non-finite entries"));
        }
    }

    fn same_shape(&self, other: &Self) -> bool {
        self.a.rows == other.a.rows
            && self.a.cols == other.a.cols
            && self.b_link.rows == other.b_link.rows
            && self.b_link.cols == other.b_link.cols
    }
}

/// Probability law over the stage outcomes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Distribution {
    /// `probabilities[t-1][w]` is the probability of outcome `w` at stage `t`.
    StagewiseIndependent { probabilities: Vec<Vec<f64>> },
    /// `initial[w]` is the law of the stage-1 outcome; `transitions[t-1]` is
    /// the `|Omega_t| x |Omega_{t+1}|` matrix `P_t` for `t = 1..T-1`.
    Markov { initial: Vec<f64>, transitions: Vec<DenseMatrix> },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ProcessKind {
    StagewiseIndependent,
    Markov,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UncertaintyProcess {
    /// `outcomes[t-1]` is the outcome set of stage `t`, `t = 1..=T`.
    pub outcomes: Vec<Vec<StageRealization>>,
    pub distribution: Distribution,
}

impl UncertaintyProcess {
    pub fn kind(&self) -> ProcessKind {
        match self.distribution {
            Distribution::StagewiseIndependent { .. } => ProcessKind::StagewiseIndependent,
            Distribution::Markov { .. } => ProcessKind::Markov,
        }
    }
}

/// A multistage stochastic linear program with `T` random stages after the
/// deterministic stage 0.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MultistageProblem {
    pub format_version: u32,
    pub stage0: StageRealization,
    pub process: UncertaintyProcess,
}

/// Outcome indices `(w_1, ..., w_T)` and their joint probability.
#[derive(Debug, Clone, PartialEq)]
pub struct ScenarioPath {
    pub indices: Vec<usize>,
    pub probability: f64,
}

/// Invariant violations found by [`MultistageProblem::validate`].
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ValidationReport {
    pub violations: Vec<String>,
}

impl ValidationReport {
    pub fn is_empty(&self) -> bool {
        self.violations.is_empty()
    }

    pub fn into_result(self) -> Result<()> {
        if self.is_empty() {
            Ok(())
        } else {
            Err(Error::InvalidProblem(self.violations))
        }
    }
}

impl MultistageProblem {
    pub fn new(stage0: StageRealization, process: UncertaintyProcess) -> Self {
        Self { format_version: FORMAT_VERSION, stage0, process }
    }

    /// Number of random stages `T`.
    pub fn horizon(&self) -> usize {
        self.process.outcomes.len()
    }

    pub fn kind(&self) -> ProcessKind {
        self.process.kind()
    }

    pub fn num_outcomes(&self, t: usize) -> usize {
        if t == 0 {
            1
        } else {
            self.process.outcomes[t - 1].len()
        }
    }

    /// Stage data for outcome `w` (ignored at `t = 0`).
    pub fn realization(&self, t: usize, w: usize) -> &StageRealization {
        if t == 0 {
            &self.stage0
        } else {
            &self.process.outcomes[t - 1][w]
        }
    }

    /// Dimension of `R_t^x`.
    pub fn resource_dim(&self, t: usize) -> usize {
        self.realization(t, 0).resource_dim()
    }

    pub fn resource_dims(&self) -> Vec<usize> {
        (0..=self.horizon()).map(|t| self.resource_dim(t)).collect()
    }

    /// Number of post-decision information states at stage `t`; one per stage
    /// outcome for Markov processes, a single shared state otherwise.
    pub fn info_states(&self, t: usize) -> usize {
        match self.kind() {
            ProcessKind::Markov if t > 0 => self.num_outcomes(t),
            _ => 1,
        }
    }

    /// Information state reached after observing outcome `w` at stage `t`.
    pub fn info_state_of(&self, t: usize, w: usize) -> usize {
        match self.kind() {
            ProcessKind::Markov if t > 0 => w,
            _ => 0,
        }
    }

    /// `P(w_t = w | I_{t-1} = info)` for `t >= 1`.
    pub fn conditional_probability(&self, t: usize, info: usize, w: usize) -> f64 {
        debug_assert!(t >= 1);
        match &self.process.distribution {
            Distribution::StagewiseIndependent { probabilities } => probabilities[t - 1][w],
            Distribution::Markov { initial, transitions } => {
                if t == 1 {
                    initial[w]
                } else {
                    transitions[t - 2][(info, w)]
                }
            }
        }
    }

    pub fn validate(&self) -> ValidationReport {
        self.validate_with(false)
    }

    /// Like [`validate`](Self::validate) but accepts zero probabilities, so
    /// that degenerate processes such as absorbing chains can still be solved.
    pub fn validate_allowing_zero_probabilities(&self) -> ValidationReport {
        self.validate_with(true)
    }

    fn validate_with(&self, allow_zero: bool) -> ValidationReport {
        let mut v = Vec::new();
        if self.format_version != FORMAT_VERSION {
            v.push(format!(
                "format_version {} is not {FORMAT_VERSION}",
                self.format_version
            ));
        }
        self.stage0.check("stage 0", &mut v);
        let horizon = self.horizon();
        for t in 1..=horizon {
            let outs = &self.process.outcomes[t - 1];
            if outs.is_empty() {
                v.push(format!("stage {t} has no outcomes"));
                continue;
            }
            for (w, real) in outs.iter().enumerate() {
                real.check(&format!("stage {t} outcome {w}"), &mut v);
                if !real.same_shape(&outs[0]) {
                    v.push(format!("stage {t} outcome {w}: shape differs from outcome 0"));
                }
            }
            let prev = self.resource_dim(t - 1);
            if outs[0].num_rows() < prev {
                v.push(format!(
                    "stage {t}: {} rows cannot receive a resource state of dimension {prev}",
                    outs[0].num_rows()
                ));
            }
        }
        self.check_distribution(allow_zero, &mut v);
        ValidationReport { violations: v }
    }

    fn check_distribution(&self, allow_zero: bool, v: &mut Vec<String>) {
        let horizon = self.horizon();
        let check_vec = |label: String, p: &[f64], len: usize, v: &mut Vec<String>| {
            if p.len() != len {
                v.push(format!("{label} has length {} but {len} outcomes", p.len()));
            }
            let bad = |x: f64| !x.is_finite() || x < 0.0 || (x == 0.0 && !allow_zero);
            if p.iter().any(|&x| bad(x)) {
                v.push(format!("{label} has a non-positive probability"));
            }
            let s: f64 = p.iter().sum();
            if (s - 1.0).abs() > PROBABILITY_SUM_TOL {
                v.push(format!("{label} sums to {s}"));
            }
        };
        match &self.process.distribution {
            Distribution::StagewiseIndependent { probabilities } => {
                if probabilities.len() != horizon {
                    v.push(format!(
                        "{} probability vectors for {horizon} stages",
                        probabilities.len()
                    ));
                    return;
                }
                for (i, p) in probabilities.iter().enumerate() {
                    let t = i + 1;
                    check_vec(format!("probabilities of stage {t}"), p, self.num_outcomes(t), v);
                }
            }
            Distribution::Markov { initial, transitions } => {
                if horizon > 0 {
                    check_vec("initial distribution".into(), initial, self.num_outcomes(1), v);
                }
                if transitions.len() != horizon.saturating_sub(1) {
                    v.push(format!(
                        "{} transition matrices for {horizon} stages",
                        transitions.len()
                    ));
                    return;
                }
                for (i, p) in transitions.iter().enumerate() {
                    let t = i + 1;
                    let (rows, cols) = (self.num_outcomes(t), self.num_outcomes(t + 1));
                    if p.rows != rows || p.cols != cols || p.data.len() != rows * cols {
                        v.push(format!(
                            "P_{t} is {}x{} but stages {t}->{} have {rows}x{cols} outcomes",
                            p.rows,
                            p.cols,
                            t + 1
                        ));
                        continue;
                    }
                    for r in 0..rows {
                        check_vec(format!("row {r} of P_{t}"), p.row(r), cols, v);
                    }
                }
            }
        }
    }

    /// Draws one scenario path with the exact process probabilities.
    pub fn sample_path<R: Rng + ?Sized>(&self, rng: &mut R) -> ScenarioPath {
        let horizon = self.horizon();
        let mut indices = Vec::with_capacity(horizon);
        let mut probability = 1.0;
        let mut info = 0;
        for t in 1..=horizon {
            let n = self.num_outcomes(t);
            let u: f64 = rng.gen();
            let mut acc = 0.0;
            let mut pick = n - 1;
            for w in 0..n {
                acc += self.conditional_probability(t, info, w);
                if u < acc {
                    pick = w;
                    break;
                }
            }
            probability *= self.conditional_probability(t, info, pick);
            info = self.info_state_of(t, pick);
            indices.push(pick);
        }
        ScenarioPath { indices, probability }
    }

    /// Number of root-to-leaf paths, as a float so overflow is harmless.
    pub fn path_count(&self) -> f64 {
        (1..=self.horizon()).map(|t| self.num_outcomes(t) as f64).product()
    }

    /// Every scenario path of positive probability, in lexicographic order.
    pub fn enumerate_paths(&self, max_paths: usize) -> Result<Vec<ScenarioPath>> {
        let count = self.path_count();
        if count > max_paths as f64 {
            return Err(Error::TooManyPaths { paths: count, limit: max_paths });
        }
        let mut paths = vec![ScenarioPath { indices: Vec::new(), probability: 1.0 }];
        for t in 1..=self.horizon() {
            let mut next = Vec::with_capacity(paths.len() * self.num_outcomes(t));
            for p in &paths {
                let info = p.indices.last().map_or(0, |&w| self.info_state_of(t - 1, w));
                for w in 0..self.num_outcomes(t) {
                    let q = self.conditional_probability(t, info, w);
                    if q == 0.0 {
                        continue;
                    }
                    let mut indices = p.indices.clone();
                    indices.push(w);
                    next.push(ScenarioPath { indices, probability: p.probability * q });
                }
            }
            paths = next;
        }
        Ok(paths)
    }

    /// Re-expresses a stagewise-independent process as a Markov chain with
    /// identical transition rows.
    pub fn to_markov(&self) -> Self {
        let mut out = self.clone();
        if let Distribution::StagewiseIndependent { probabilities } = &self.process.distribution {
            let initial = probabilities.first().cloned().unwrap_or_default();
            let transitions = (1..self.horizon())
                .map(|t| {
                    let rows = vec![probabilities[t].clone(); self.num_outcomes(t)];
                    DenseMatrix::from_rows(&rows)
                })
                .collect();
            out.process.distribution = Distribution::Markov { initial, transitions };
        }
        out
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
        if version != FORMAT_VERSION as u64 {
            return Err(Error::VersionMismatch { found: version as u32, expected: FORMAT_VERSION });
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

#[cfg(test)]
mod tests {
    use super::*;
    use crate::harness::toy;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn two_by_two_stagewise() -> MultistageProblem {
        let mut p = toy::newsvendor();
        let extra = p.process.outcomes[0].clone();
        p.process.outcomes.push(extra);
        p.process.distribution = Distribution::StagewiseIndependent {
            probabilities: vec![vec![0.5, 0.5], vec![0.5, 0.5]],
        };
        p
    }

    #[test]
    fn newsvendor_is_valid() {
        assert!(toy::newsvendor().validate().is_empty());
    }

    #[test]
    fn bad_transition_row_is_reported() {
        let mut p = toy::markov_toy();
        if let Distribution::Markov { transitions, .. } = &mut p.process.distribution {
            transitions[0].row_mut(1)[0] -= 0.01;
        }
        let report = p.validate();
        assert_eq!(report.violations.len(), 1);
        assert!(report.violations[0].starts_with("row 1 of P_1 sums to 0.99"), "{report:?}");
    }

    #[test]
    fn stage0_shape_violation() {
        let mut p = toy::newsvendor();
        p.stage0.b_link = DenseMatrix::zeros(1, 1);
        let report = p.validate();
        assert!(report.violations.iter().any(|v| v.contains("B has 1 columns")), "{report:?}");
    }

    #[test]
    fn singleton_support_path() {
        let p = toy::deterministic_chain(3);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let path = p.sample_path(&mut rng);
        assert_eq!(path.indices, vec![0, 0, 0]);
        assert_eq!(path.probability, 1.0);
    }

    #[test]
    fn absorbing_chain_stays_put() {
        let mut p = toy::markov_toy();
        if let Distribution::Markov { initial, transitions } = &mut p.process.distribution {
            *initial = vec![0.0, 1.0];
            for m in transitions.iter_mut() {
                *m = DenseMatrix::identity(2);
            }
        }
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for _ in 0..20 {
            let path = p.sample_path(&mut rng);
            assert!(path.indices.iter().all(|&w| w == 1), "{path:?}");
        }
    }

    #[test]
    fn product_measure_paths() {
        let paths = two_by_two_stagewise().enumerate_paths(100).unwrap();
        assert_eq!(paths.len(), 4);
        assert!(paths.iter().all(|p| p.probability == 0.25));
    }

    #[test]
    fn deterministic_chain_paths() {
        let mut p = two_by_two_stagewise().to_markov();
        if let Distribution::Markov { transitions, .. } = &mut p.process.distribution {
            transitions[0] = DenseMatrix::identity(2);
        }
        assert!(p.validate().violations.iter().all(|v| v.contains("non-positive")));
        assert!(p.validate_allowing_zero_probabilities().is_empty());
        let paths = p.enumerate_paths(100).unwrap();
        assert_eq!(paths.len(), 2);
        assert!(paths.iter().all(|p| p.probability == 0.5));
    }

    #[test]
    fn too_many_paths() {
        let p = crate::harness::toy::wide_stagewise(20, 10);
        assert!(matches!(p.enumerate_paths(1_000_000), Err(Error::TooManyPaths { .. })));
    }

    #[test]
    fn json_round_trip_is_canonical() {
        let p = toy::markov_toy();
        let text = p.to_json().unwrap();
        let back = MultistageProblem::from_json(&text).unwrap();
        assert_eq!(back, p);
        assert_eq!(back.to_json().unwrap(), text);
    }

    #[test]
    fn version_mismatch_rejected() {
        let text = toy::newsvendor().to_json().unwrap().replacen(
            "\"format_version\": 1",
            "\"format_version\": 9",
            1,
        );
        assert!(matches!(
            MultistageProblem::from_json(&text),
            Err(Error::VersionMismatch { found: 9, .. })
        ));
    }
}
