//! Run configuration: a single TOML document describing the scenario,
//! algebra, chain, metric, Lagrangian, constraint and integrator settings.

use std::path::{Path, PathBuf};

use nalgebra::{DMatrix, DVector};
use serde::Deserialize;

use staged_reduction::algebra::{parse_algebra, LieAlgebraSpec};
use staged_reduction::dynamics::{ConstraintSubspace, QuadraticLagrangian};
use staged_reduction::error::Error;
use staged_reduction::stages::{InvariantMetric, StageChain};

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub scenario: String,
    pub algebra: Option<AlgebraSection>,
    pub chain: Option<ChainSection>,
    pub metric: Option<MetricSpec>,
    pub lagrangian: Option<LagrangianSpec>,
    pub constraint: Option<ConstraintSpec>,
    pub integrator: Option<IntegratorSection>,
    pub initial: Option<InitialSection>,
    pub disk: Option<DiskSection>,
    pub output: Option<OutputSection>,
    pub compare: Option<CompareSection>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AlgebraSection {
    pub file: String,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ChainSection {
    pub blocks: Vec<usize>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MetricSpec {
    pub identity: Option<bool>,
    pub rows: Option<Vec<Vec<f64>>>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LagrangianSpec {
    pub identity: Option<bool>,
    pub diag: Option<Vec<f64>>,
    pub rows: Option<Vec<Vec<f64>>>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConstraintSpec {
    /// Columns of the basis matrix (column-major lists).
    pub basis: Option<Vec<Vec<f64>>>,
    /// Particular case: per-chain-block column lists, assembled blockwise.
    pub blocks: Option<Vec<Vec<Vec<f64>>>>,
    pub graph: Option<GraphSpec>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GraphSpec {
    pub independent: Vec<usize>,
    pub phi: Vec<Vec<f64>>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct IntegratorSection {
    pub h: f64,
    pub t_end: f64,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InitialSection {
    pub v: Option<Vec<f64>>,
    /// Independent constraint coordinates for constrained runs.
    pub c: Option<Vec<f64>>,
}

#[derive(Debug, Deserialize, Clone, Copy)]
#[serde(deny_unknown_fields)]
pub struct DiskSection {
    pub m: Option<f64>,
    pub r: Option<f64>,
    pub e: Option<f64>,
    pub i1: Option<f64>,
    pub i3: Option<f64>,
    pub g: Option<f64>,
    pub theta0: Option<f64>,
    pub phi0: Option<f64>,
    pub thetadot0: Option<f64>,
    pub phidot0: Option<f64>,
    pub eta0: Option<f64>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputSection {
    pub path: String,
}

#[derive(Debug, Deserialize, Clone, Copy)]
#[serde(deny_unknown_fields)]
pub struct CompareSection {
    pub max_dev: Option<f64>,
    pub max_constraint_residual: Option<f64>,
    pub max_energy_drift: Option<f64>,
}

/// A parsed config together with the directory it came from (relative paths
/// in the file resolve against it).
pub struct LoadedConfig {
    pub config: RunConfig,
    pub base_dir: PathBuf,
}

pub fn load_config(path: &Path) -> Result<LoadedConfig, Error> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| Error::Parse(format!("{}: {e}", path.display())))?;
    let config: RunConfig = toml::from_str(&text)
        .map_err(|e| Error::Parse(format!("{}: {e}", path.display())))?;
    let base_dir = path
        .parent()
        .map(|p| p.to_path_buf())
        .unwrap_or_else(|| PathBuf::from("."));
    Ok(LoadedConfig { config, base_dir })
}

impl LoadedConfig {
    pub fn algebra(&self) -> Result<LieAlgebraSpec, Error> {
        let section = self
            .config
            .algebra
            .as_ref()
            .ok_or_else(|| Error::Parse("config has no [algebra] section".into()))?;
        let path = self.base_dir.join(&section.file);
        let text = std::fs::read_to_string(&path)
            .map_err(|e| Error::Parse(format!("{}: {e}", path.display())))?;
        parse_algebra(&text)
    }

    pub fn chain(&self) -> Result<StageChain, Error> {
        let section = self
            .config
            .chain
            .as_ref()
            .ok_or_else(|| Error::Parse("config has no [chain] section".into()))?;
        StageChain::new(section.blocks.clone())
    }

    pub fn metric(&self, dim: usize) -> Result<InvariantMetric, Error> {
        match &self.config.metric {
            None => Ok(InvariantMetric::identity(dim)),
            Some(spec) => {
                if let Some(rows) = &spec.rows {
                    InvariantMetric::new(rows_to_matrix(rows, dim, "metric")?)
                } else if spec.identity.unwrap_or(false) {
                    Ok(InvariantMetric::identity(dim))
                } else {
                    Err(Error::Parse(
                        "metric needs `identity = true` or `rows`".into(),
                    ))
                }
            }
        }
    }

    pub fn lagrangian(&self, dim: usize) -> Result<QuadraticLagrangian, Error> {
        match &self.config.lagrangian {
            None => Ok(QuadraticLagrangian::identity(dim)),
            Some(spec) => {
                if let Some(rows) = &spec.rows {
                    QuadraticLagrangian::new(rows_to_matrix(rows, dim, "lagrangian.mass")?)
                } else if let Some(diag) = &spec.diag {
                    if diag.len() != dim {
                        return Err(Error::Parse(format!(
                            "lagrangian.diag has {} entries, expected {dim}",
                            diag.len()
                        )));
                    }
                    QuadraticLagrangian::diagonal(diag)
                } else if spec.identity.unwrap_or(false) {
                    Ok(QuadraticLagrangian::identity(dim))
                } else {
                    Err(Error::Parse(
                        "lagrangian needs `identity = true`, `diag` or `rows`".into(),
                    ))
                }
            }
        }
    }

    pub fn constraint(&self, dim: usize, chain: &StageChain) -> Result<Option<ConstraintSubspace>, Error> {
        let Some(spec) = &self.config.constraint else {
            return Ok(None);
        };
        let sub = if let Some(cols) = &spec.basis {
            let s = cols.len();
            let mut basis = DMatrix::zeros(dim, s);
            for (c, col) in cols.iter().enumerate() {
                if col.len() != dim {
                    return Err(Error::Parse(format!(
                        "constraint column {c} has {} entries, expected {dim}",
                        col.len()
                    )));
                }
                for (r, v) in col.iter().enumerate() {
                    basis[(r, c)] = *v;
                }
            }
            ConstraintSubspace::from_basis(basis)?
        } else if let Some(blocks) = &spec.blocks {
            if blocks.len() != chain.blocks().len() {
                return Err(Error::Parse(format!(
                    "constraint.blocks has {} groups, chain has {} blocks",
                    blocks.len(),
                    chain.blocks().len()
                )));
            }
            let total: usize = blocks.iter().map(|b| b.len()).sum();
            if total == 0 {
                return Err(Error::Parse("constraint.blocks is empty".into()));
            }
            let mut basis = DMatrix::zeros(dim, total);
            let mut col = 0;
            for (i, group) in blocks.iter().enumerate() {
                let range = chain.block_range(i);
                for local_col in group {
                    if local_col.len() != range.len() {
                        return Err(Error::Parse(format!(
                            "constraint block {i} column has {} entries, block size is {}",
                            local_col.len(),
                            range.len()
                        )));
                    }
                    for (r, v) in local_col.iter().enumerate() {
                        basis[(range.start + r, col)] = *v;
                    }
                    col += 1;
                }
            }
            ConstraintSubspace::from_basis(basis)?
        } else if let Some(graph) = &spec.graph {
            let s = graph.independent.len();
            let rows = dim - s;
            let mut phi = DMatrix::zeros(rows, s);
            if graph.phi.len() != rows {
                return Err(Error::Parse(format!(
                    "constraint.graph.phi has {} rows, expected {rows}",
                    graph.phi.len()
                )));
            }
            for (r, row) in graph.phi.iter().enumerate() {
                if row.len() != s {
                    return Err(Error::Parse(format!(
                        "constraint.graph.phi row {r} has {} entries, expected {s}",
                        row.len()
                    )));
                }
                for (c, v) in row.iter().enumerate() {
                    phi[(r, c)] = *v;
                }
            }
            ConstraintSubspace::from_graph(dim, graph.independent.clone(), phi)?
        } else {
            return Err(Error::Parse(
                "constraint needs `basis`, `blocks` or `graph`".into(),
            ));
        };
        // a supplied graph must describe the same subspace either way
        let res = sub.graph_consistency_residual()?;
        if res > 1e-12 {
            return Err(Error::Validation(format!(
                "constraint graph/basis mismatch: residual {res:.3e}"
            )));
        }
        Ok(Some(sub))
    }

    pub fn integrator(&self, default_h: f64, default_t: f64) -> (f64, f64) {
        match &self.config.integrator {
            Some(s) => (s.h, s.t_end),
            None => (default_h, default_t),
        }
    }

    pub fn initial_v(&self, dim: usize) -> Result<Option<DVector<f64>>, Error> {
        match self.config.initial.as_ref().and_then(|i| i.v.as_ref()) {
            None => Ok(None),
            Some(v) => {
                if v.len() != dim {
                    return Err(Error::Parse(format!(
                        "initial.v has {} entries, expected {dim}",
                        v.len()
                    )));
                }
                Ok(Some(DVector::from_column_slice(v)))
            }
        }
    }

    pub fn initial_c(&self, rank: usize) -> Result<Option<DVector<f64>>, Error> {
        match self.config.initial.as_ref().and_then(|i| i.c.as_ref()) {
            None => Ok(None),
            Some(c) => {
                if c.len() != rank {
                    return Err(Error::Parse(format!(
                        "initial.c has {} entries, expected {rank}",
                        c.len()
                    )));
                }
                Ok(Some(DVector::from_column_slice(c)))
            }
        }
    }
}

fn rows_to_matrix(rows: &[Vec<f64>], dim: usize, what: &str) -> Result<DMatrix<f64>, Error> {
    if rows.len() != dim {
        return Err(Error::Parse(format!(
            "{what} has {} rows, expected {dim}",
            rows.len()
        )));
    }
    let mut m = DMatrix::zeros(dim, dim);
    for (r, row) in rows.iter().enumerate() {
        if row.len() != dim {
            return Err(Error::Parse(format!(
                "{what} row {r} has {} entries, expected {dim}",
                row.len()
            )));
        }
        for (c, v) in row.iter().enumerate() {
            m[(r, c)] = *v;
        }
    }
    Ok(m)
}
