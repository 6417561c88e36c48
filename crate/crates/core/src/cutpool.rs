//! Outer approximations of the post-decision value functions as maxima of
//! affine cuts, one collection per stage and information state.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{dot, DenseMatrix};
use crate::model::MultistageProblem;
use crate::solver::SubproblemSpec;

pub const CUT_FORMAT_VERSION: u32 = 1;

/// Affine minorant `alpha + beta . (R - anchor)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Cut {
    pub alpha: f64,
    pub beta: Vec<f64>,
    pub anchor: Vec<f64>,
    pub born_iteration: usize,
}

impl Cut {
    pub fn value_at(&self, r: &[f64]) -> f64 {
        self.alpha + self.beta.iter().zip(r.iter().zip(&self.anchor)).map(|(b, (x, a))| b * (x - a)).sum::<f64>()
    }

    /// Constant term `alpha - beta . anchor` of the cut written in absolute form.
    pub fn offset(&self) -> f64 {
        self.alpha - dot(&self.beta, &self.anchor)
    }
}

/// `cuts[t][i]` holds the cuts of stage `t` and information state `i`.
#[derive(Debug, Clone, PartialEq)]
pub struct CutPool {
    dims: Vec<usize>,
    cuts: Vec<Vec<Vec<Cut>>>,
}

#[derive(Serialize, Deserialize)]
struct CutRecord {
    stage: usize,
    info: usize,
    alpha: f64,
    beta: Vec<f64>,
    anchor: Vec<f64>,
    born_iteration: usize,
}

#[derive(Serialize, Deserialize)]
struct CutFile {
    format_version: u32,
    resource_dims: Vec<usize>,
    info_states: Vec<usize>,
    cuts: Vec<CutRecord>,
}

impl CutPool {
    /// Empty pool for stages `0..T` with the given resource dimensions and
    /// information-state counts.
    pub fn with_shape(dims: Vec<usize>, info_states: &[usize]) -> Self {
        assert_eq!(dims.len(), info_states.len());
        let cuts = info_states.iter().map(|&n| vec![Vec::new(); n]).collect();
        Self { dims, cuts }
    }

    pub fn for_problem(problem: &MultistageProblem) -> Self {
        let stages = problem.horizon();
        let dims = (0..stages).map(|t| problem.resource_dim(t)).collect();
        let infos: Vec<usize> = (0..stages).map(|t| problem.info_states(t)).collect();
        Self::with_shape(dims, &infos)
    }

    /// Number of stages carrying a value function approximation (`T`).
    pub fn stages(&self) -> usize {
        self.dims.len()
    }

    pub fn dim(&self, t: usize) -> usize {
        self.dims[t]
    }

    pub fn info_states(&self, t: usize) -> usize {
        self.cuts[t].len()
    }

    pub fn cuts(&self, t: usize, info: usize) -> &[Cut] {
        &self.cuts[t][info]
    }

    pub fn len(&self) -> usize {
        self.cuts.iter().flatten().map(Vec::len).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    fn locate(&self, t: usize, info: usize) -> Result<()> {
        if t >= self.stages() {
            return Err(Error::DimensionMismatch {
                context: "cut pool stage".into(),
                expected: self.stages(),
                found: t,
            });
        }
        if info >= self.cuts[t].len() {
            return Err(Error::DimensionMismatch {
                context: format!("information states of stage {t}"),
                expected: self.cuts[t].len(),
                found: info,
            });
        }
        Ok(())
    }

    fn check_dim(&self, t: usize, len: usize) -> Result<()> {
        if len != self.dims[t] {
            return Err(Error::DimensionMismatch {
                context: format!("resource state of stage {t}"),
                expected: self.dims[t],
                found: len,
            });
        }
        Ok(())
    }

    /// Value of the approximation at `r`; `None` while no cut exists, which
    /// stands for an unbounded-below approximation.
    pub fn evaluate(&self, t: usize, info: usize, r: &[f64]) -> Result<Option<f64>> {
        self.locate(t, info)?;
        self.check_dim(t, r.len())?;
        Ok(self.cuts[t][info].iter().map(|c| c.value_at(r)).reduce(f64::max))
    }

    /// Whether a stored cut of `(t, info)` describes the same hyperplane as
    /// `cut`, up to a relative tolerance on its absolute-form coefficients.
    pub fn has_equivalent(&self, t: usize, info: usize, cut: &Cut, tol: f64) -> bool {
        let close = |a: f64, b: f64| (a - b).abs() <= tol * (1.0 + a.abs().max(b.abs()));
        let offset = cut.offset();
        self.cuts[t][info].iter().any(|c| {
            close(c.offset(), offset) && c.beta.iter().zip(&cut.beta).all(|(a, b)| close(*a, *b))
        })
    }

    pub fn add_cut(&mut self, t: usize, info: usize, cut: Cut) -> Result<()> {
        self.locate(t, info)?;
        self.check_dim(t, cut.beta.len())?;
        self.check_dim(t, cut.anchor.len())?;
        if !cut.alpha.is_finite()
            || !cut.beta.iter().chain(&cut.anchor).all(|v| v.is_finite())
        {
            return Err(Error::NumericalBreakdown(format!("non-finite cut at stage {t}")));
        }
        self.cuts[t][info].push(cut);
        Ok(())
    }

    /// Adds the epigraph of the stage-`t` approximation to a stage spec.
    ///
    /// Columns become `[x, theta+, theta-, s_1..s_k]` and one row
    /// `theta - beta_j' B x - s_j = alpha_j - beta_j . anchor_j` is appended
    /// per cut. With no cuts the spec is returned unchanged. Any quadratic
    /// term keeps acting on `x` only.
    pub fn embed(
        &self,
        t: usize,
        info: usize,
        spec: &SubproblemSpec,
        b_link: &DenseMatrix,
    ) -> Result<SubproblemSpec> {
        self.locate(t, info)?;
        let cuts = &self.cuts[t][info];
        let n = spec.num_vars();
        if b_link.cols != n {
            return Err(Error::DimensionMismatch {
                context: format!("resource map of stage {t}"),
                expected: n,
                found: b_link.cols,
            });
        }
        if cuts.is_empty() {
            return Ok(spec.clone());
        }
        for c in cuts {
            if c.beta.len() != b_link.rows {
                return Err(Error::DimensionMismatch {
                    context: format!("cut slope at stage {t} against the instance"),
                    expected: b_link.rows,
                    found: c.beta.len(),
                });
            }
        }
        let m = spec.num_rows();
        let k = cuts.len();
        let cols = n + 2 + k;
        let mut a = DenseMatrix::zeros(m + k, cols);
        for i in 0..m {
            a.row_mut(i)[..n].copy_from_slice(spec.a.row(i));
        }
        let mut rhs = spec.rhs.clone();
        for (j, c) in cuts.iter().enumerate() {
            let slope_x = b_link.tr_mul_vec(&c.beta);
            let row = a.row_mut(m + j);
            for (dst, v) in row[..n].iter_mut().zip(&slope_x) {
                *dst = -v;
            }
            row[n] = 1.0;
            row[n + 1] = -1.0;
            row[n + 2 + j] = -1.0;
            rhs.push(c.offset());
        }
        let mut cost = spec.cost.clone();
        cost.extend([1.0, -1.0]);
        cost.extend(std::iter::repeat_n(0.0, k));
        let quad = spec.quad.as_ref().map(|q| {
            let mut q = q.clone();
            let mut map = DenseMatrix::zeros(q.map.rows, cols);
            for i in 0..q.map.rows {
                map.row_mut(i)[..n].copy_from_slice(q.map.row(i));
            }
            q.map = map;
            q
        });
        Ok(SubproblemSpec { cost, a, rhs, quad })
    }

    /// Column of `theta+` in an embedded spec with `n` original columns.
    pub fn theta_column(n: usize) -> usize {
        n
    }

    /// Rejects pools whose shape does not fit `problem`.
    pub fn check_compatible(&self, problem: &MultistageProblem) -> Result<()> {
        if self.stages() != problem.horizon() {
            return Err(Error::DimensionMismatch {
                context: "cut pool stages".into(),
                expected: problem.horizon(),
                found: self.stages(),
            });
        }
        for t in 0..self.stages() {
            self.check_dim(t, problem.resource_dim(t))?;
            if self.info_states(t) != problem.info_states(t) {
                return Err(Error::DimensionMismatch {
                    context: format!("information states of stage {t}"),
                    expected: problem.info_states(t),
                    found: self.info_states(t),
                });
            }
        }
        Ok(())
    }

    pub fn to_json(&self) -> Result<String> {
        let mut cuts = Vec::with_capacity(self.len());
        for (stage, per_info) in self.cuts.iter().enumerate() {
            for (info, list) in per_info.iter().enumerate() {
                for c in list {
                    cuts.push(CutRecord {
                        stage,
                        info,
                        alpha: c.alpha,
                        beta: c.beta.clone(),
                        anchor: c.anchor.clone(),
                        born_iteration: c.born_iteration,
                    });
                }
            }
        }
        let file = CutFile {
            format_version: CUT_FORMAT_VERSION,
            resource_dims: self.dims.clone(),
            info_states: self.cuts.iter().map(Vec::len).collect(),
            cuts,
        };
        Ok(serde_json::to_string_pretty(&file)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let value: serde_json::Value = serde_json::from_str(text)?;
        let version = value
            .get("format_version")
            .and_then(|v| v.as_u64())
            .ok_or_else(|| Error::Malformed("missing format_version".into()))?;
        if version != CUT_FORMAT_VERSION as u64 {
            return Err(Error::VersionMismatch { found: version as u32, expected: CUT_FORMAT_VERSION });
        }
        let file: CutFile = serde_json::from_value(value)?;
        if file.resource_dims.len() != file.info_states.len() {
            return Err(Error::Malformed("resource_dims and info_states differ in length".into()));
        }
        let mut pool = Self::with_shape(file.resource_dims, &file.info_states);
        for r in file.cuts {
            pool.add_cut(
                r.stage,
                r.info,
                Cut { alpha: r.alpha, beta: r.beta, anchor: r.anchor, born_iteration: r.born_iteration },
            )
            .map_err(|e| Error::Malformed(e.to_string()))?;
        }
        Ok(pool)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_json()?)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }
}
