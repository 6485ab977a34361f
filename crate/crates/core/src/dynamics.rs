//! Euler-Poincare and Euler-d'Alembert-Poincare flows on a Lie algebra.
//!
//! The momentum form of the equations is `beta_dot(xi) = <beta, [v, xi]>`
//! with `beta = M v`; the bracket is evaluated through the stage assembly.
//! [`ep_beta_dot`] computes the same covector by the block-wise stage
//! grouping (block-level coadjoint term plus the stage `a`/`b` couplings);
//! the two routes agree identically and both are tested.
//!
//! Constraints are handled by parametrization: a subspace `S` with basis
//! columns `s_k` reduces the flow to independent coordinates `c` with
//! `v = S c`, solving `(S^T M S) c_dot = [<M v, [v, s_k]>]_k`.

use nalgebra::{Cholesky, DMatrix, DVector};

use crate::algebra::{AlgCovector, AlgVector};
use crate::error::{Error, Result};
use crate::integrate::{integrate_rk4, Trajectory};
use crate::stages::StagedStructure;

/// Quadratic Lagrangian `l(v) = v^T M v / 2` with SPD inertia `M`.
#[derive(Debug, Clone)]
pub struct QuadraticLagrangian {
    mass: DMatrix<f64>,
    chol: Cholesky<f64, nalgebra::Dyn>,
}

impl QuadraticLagrangian {
    pub fn new(mass: DMatrix<f64>) -> Result<Self> {
        if mass.nrows() != mass.ncols() {
            return Err(Error::Structural("inertia matrix must be square".into()));
        }
        let sym = (&mass - mass.transpose()).amax();
        if sym > 1e-14 {
            return Err(Error::Validation(format!(
                "inertia not symmetric: residual {sym:.3e}"
            )));
        }
        let chol = Cholesky::new(mass.clone())
            .ok_or_else(|| Error::Validation("inertia not positive definite".into()))?;
        Ok(Self { mass, chol })
    }

    pub fn identity(dim: usize) -> Self {
        Self::new(DMatrix::identity(dim, dim)).unwrap()
    }

    pub fn diagonal(entries: &[f64]) -> Result<Self> {
        let d = entries.len();
        Self::new(DMatrix::from_fn(d, d, |r, c| {
            if r == c {
                entries[r]
            } else {
                0.0
            }
        }))
    }

    pub fn dim(&self) -> usize {
        self.mass.nrows()
    }

    pub fn mass(&self) -> &DMatrix<f64> {
        &self.mass
    }

    pub fn energy(&self, v: &AlgVector) -> f64 {
        0.5 * (v.coords.transpose() * &self.mass * &v.coords)[(0, 0)]
    }

    pub fn solve_mass(&self, rhs: &DVector<f64>) -> DVector<f64> {
        self.chol.solve(rhs)
    }
}

/// A sample of the body-velocity flow.
#[derive(Debug, Clone)]
pub struct EPState {
    pub v: AlgVector,
    pub t: f64,
}

/// View a trajectory of the algebra flow as timed states.
pub fn ep_samples(traj: &Trajectory) -> Vec<EPState> {
    traj.times
        .iter()
        .zip(traj.states.iter())
        .map(|(t, y)| EPState {
            v: AlgVector { coords: y.clone() },
            t: *t,
        })
        .collect()
}

/// Body momentum `beta = M v`.
pub fn fiber_derivative(lag: &QuadraticLagrangian, v: &AlgVector) -> Result<AlgCovector> {
    if v.dim() != lag.dim() {
        return Err(Error::Dimension {
            expected: lag.dim(),
            got: v.dim(),
        });
    }
    Ok(AlgCovector {
        coords: &lag.mass * &v.coords,
    })
}

/// Variation generated by a test curve: `omega_dot + [v, omega]`.
pub fn allowed_variation(
    staged: &StagedStructure,
    v: &AlgVector,
    omega: &AlgVector,
    omega_dot: &AlgVector,
) -> Result<AlgVector> {
    let br = staged.bracket_by_stages(v, omega)?;
    Ok(AlgVector {
        coords: &omega_dot.coords + br.coords,
    })
}

/// Momentum derivative by the block-wise stage grouping.
///
/// For a test vector `e` in block `i`:
/// block-level coadjoint term, plus `<beta, b_{j+1}(v_j, e)>` for every
/// earlier stage `j < i`, minus the stage-`i+1` curvature and mixed terms
/// (`<beta, a_{i+1}(v_i, e)>` and `<beta, b_{i+1}(e, v_tail)>`).
pub fn ep_beta_dot(
    staged: &StagedStructure,
    lag: &QuadraticLagrangian,
    v: &AlgVector,
) -> Result<AlgCovector> {
    let dim = staged.dim();
    if v.dim() != dim || lag.dim() != dim {
        return Err(Error::Dimension {
            expected: dim,
            got: v.dim(),
        });
    }
    let chain = staged.chain();
    let alg = staged.algebra();
    let n = chain.stages();
    let beta = fiber_derivative(lag, v)?;
    let mut out = DVector::zeros(dim);

    for i in 0..=n {
        let vi = chain.restrict_to_block(&v.coords, i);
        let block = chain.block_range(i);
        let ki = DVector::from_fn(block.len(), |r, _| v.coords[block.start + r]);
        let v_tail = chain.restrict_to_ideal(&v.coords, i + 1);
        for e_idx in block.clone() {
            let mut e = DVector::zeros(dim);
            e[e_idx] = 1.0;
            // block-level coadjoint term, paired on block i only
            let q = alg.bracket_raw(&vi, &e);
            let mut acc = 0.0;
            for k in block.clone() {
                acc += beta.coords[k] * q[k];
            }
            // earlier-stage b couplings (values live in the stage ideal)
            for stage in 1..=i {
                let jr = chain.block_range(stage - 1);
                let kj = DVector::from_fn(jr.len(), |r, _| v.coords[jr.start + r]);
                let b = staged.b_form(stage, &kj, &e)?;
                acc += beta.coords.dot(&b);
            }
            // stage i+1 terms with the test vector in the leading slot
            if i < n {
                let e_local = DVector::from_fn(block.len(), |r, _| {
                    if block.start + r == e_idx {
                        1.0
                    } else {
                        0.0
                    }
                });
                let a = staged.a_form(i + 1, &ki, &e_local)?;
                acc -= beta.coords.dot(&a);
                let b = staged.b_form(i + 1, &e_local, &v_tail)?;
                acc -= beta.coords.dot(&b);
            }
            out[e_idx] = acc;
        }
    }
    Ok(AlgCovector { coords: out })
}

/// Momentum derivative by the pairing route: `beta_dot_k = <beta, [v, e_k]>`.
pub fn ep_beta_dot_pairing(
    staged: &StagedStructure,
    lag: &QuadraticLagrangian,
    v: &AlgVector,
) -> Result<AlgCovector> {
    let dim = staged.dim();
    let beta = fiber_derivative(lag, v)?;
    let mut out = DVector::zeros(dim);
    for k in 0..dim {
        let br = staged.bracket_by_stages(v, &AlgVector::basis(dim, k))?;
        out[k] = beta.coords.dot(&br.coords);
    }
    Ok(AlgCovector { coords: out })
}

/// Euler-Poincare right-hand side: `v_dot = M^{-1} beta_dot`.
pub fn ep_rhs(
    staged: &StagedStructure,
    lag: &QuadraticLagrangian,
    v: &AlgVector,
) -> Result<AlgVector> {
    let beta_dot = ep_beta_dot(staged, lag, v)?;
    Ok(AlgVector {
        coords: lag.solve_mass(&beta_dot.coords),
    })
}

/// Linear constraint subspace `S` of the algebra, optionally as a graph over
/// independent coordinates.
#[derive(Debug, Clone)]
pub struct ConstraintSubspace {
    basis: DMatrix<f64>,
    graph: Option<GraphForm>,
}

/// Graph data: independent coordinate indices `A` and the linear map taking
/// independent values to the dependent ones.
#[derive(Debug, Clone)]
pub struct GraphForm {
    pub independent: Vec<usize>,
    pub dependent: Vec<usize>,
    /// (dim - s) x s matrix: dependent = phi * independent.
    pub phi: DMatrix<f64>,
}

impl ConstraintSubspace {
    /// From a basis matrix with full column rank.
    pub fn from_basis(basis: DMatrix<f64>) -> Result<Self> {
        let s = basis.ncols();
        if s == 0 || s > basis.nrows() {
            return Err(Error::Structural(format!(
                "constraint basis must have 1..=dim columns, got {s}"
            )));
        }
        let rank = basis.clone().svd(false, false);
        let sv = rank.singular_values;
        if sv[sv.len() - 1] <= 1e-12 * sv[0].max(1.0) {
            return Err(Error::Validation("constraint basis is rank deficient".into()));
        }
        Ok(Self { basis, graph: None })
    }

    /// From a graph representation over the ambient dimension `dim`.
    pub fn from_graph(dim: usize, independent: Vec<usize>, phi: DMatrix<f64>) -> Result<Self> {
        let s = independent.len();
        if s == 0 || s > dim {
            return Err(Error::Structural("graph needs 1..=dim independent indices".into()));
        }
        let mut seen = vec![false; dim];
        for &i in &independent {
            if i >= dim {
                return Err(Error::Structural(format!("independent index {i} out of range")));
            }
            if seen[i] {
                return Err(Error::Structural(format!("independent index {i} repeated")));
            }
            seen[i] = true;
        }
        let dependent: Vec<usize> = (0..dim).filter(|k| !seen[*k]).collect();
        if phi.nrows() != dependent.len() || phi.ncols() != s {
            return Err(Error::Structural(format!(
                "phi must be {} x {}, got {} x {}",
                dependent.len(),
                s,
                phi.nrows(),
                phi.ncols()
            )));
        }
        let mut basis = DMatrix::zeros(dim, s);
        for col in 0..s {
            basis[(independent[col], col)] = 1.0;
            for (r, &dep) in dependent.iter().enumerate() {
                basis[(dep, col)] = phi[(r, col)];
            }
        }
        Ok(Self {
            basis,
            graph: Some(GraphForm {
                independent,
                dependent,
                phi,
            }),
        })
    }

    /// Whole algebra as a trivial constraint.
    pub fn full(dim: usize) -> Self {
        Self {
            basis: DMatrix::identity(dim, dim),
            graph: None,
        }
    }

    pub fn basis(&self) -> &DMatrix<f64> {
        &self.basis
    }

    pub fn graph(&self) -> Option<&GraphForm> {
        self.graph.as_ref()
    }

    pub fn dim(&self) -> usize {
        self.basis.nrows()
    }

    pub fn rank(&self) -> usize {
        self.basis.ncols()
    }

    /// Derive a graph representation by column-pivoted elimination: pick the
    /// pivot row of largest absolute value per column, ties to the lowest
    /// index. Deterministic.
    pub fn derive_graph(&self) -> Result<GraphForm> {
        if let Some(g) = &self.graph {
            return Ok(g.clone());
        }
        let dim = self.dim();
        let s = self.rank();
        let mut work = self.basis.clone();
        let mut chosen: Vec<usize> = Vec::with_capacity(s);
        let mut used = vec![false; dim];
        for col in 0..s {
            let mut best = None;
            let mut best_val = 0.0f64;
            for row in 0..dim {
                if used[row] {
                    continue;
                }
                let v = work[(row, col)].abs();
                if v > best_val + 1e-15 {
                    best_val = v;
                    best = Some(row);
                }
            }
            let pivot = best.ok_or_else(|| {
                Error::Numeric("constraint basis elimination found no pivot".into())
            })?;
            used[pivot] = true;
            chosen.push(pivot);
            // eliminate the pivot row from the remaining columns
            let pv = work[(pivot, col)];
            for other in 0..s {
                if other == col {
                    continue;
                }
                let f = work[(pivot, other)] / pv;
                if f != 0.0 {
                    for row in 0..dim {
                        let val = work[(row, col)] * f;
                        work[(row, other)] -= val;
                    }
                }
            }
        }
        // With the independent rows fixed, phi solves basis_A^T-restricted system:
        // columns of the subspace in graph coordinates.
        let mut idx = chosen.clone();
        idx.sort_unstable();
        let dependent: Vec<usize> = (0..dim).filter(|k| !idx.contains(k)).collect();
        let a_block = DMatrix::from_fn(s, s, |r, c| self.basis[(idx[r], c)]);
        let d_block = DMatrix::from_fn(dependent.len(), s, |r, c| self.basis[(dependent[r], c)]);
        let lu = a_block.lu();
        let inv = lu
            .try_inverse()
            .ok_or_else(|| Error::Numeric("independent block not invertible".into()))?;
        let phi = d_block * inv;
        Ok(GraphForm {
            independent: idx,
            dependent,
            phi,
        })
    }

    /// Mutual projection residual between this basis and the span of a graph
    /// reconstruction; near zero when the two describe the same subspace.
    pub fn graph_consistency_residual(&self) -> Result<f64> {
        let g = self.derive_graph()?;
        let rebuilt = ConstraintSubspace::from_graph(self.dim(), g.independent, g.phi)?;
        Ok(mutual_projection_residual(&self.basis, rebuilt.basis()))
    }

    /// Distance from `v` to the subspace (2-norm of the projection residual).
    pub fn residual(&self, v: &DVector<f64>) -> f64 {
        let gram = self.basis.transpose() * &self.basis;
        let rhs = self.basis.transpose() * v;
        let sol = gram
            .lu()
            .solve(&rhs)
            .expect("full-rank Gram system is invertible");
        (v - &self.basis * sol).norm()
    }
}

/// Max norm of the component of either span escaping the other.
pub fn mutual_projection_residual(a: &DMatrix<f64>, b: &DMatrix<f64>) -> f64 {
    let proj = |onto: &DMatrix<f64>, v: &DVector<f64>| -> f64 {
        let gram = onto.transpose() * onto;
        let rhs = onto.transpose() * v;
        let sol = gram.lu().solve(&rhs).expect("Gram invertible");
        (v - onto * sol).norm()
    };
    let mut res: f64 = 0.0;
    for c in 0..a.ncols() {
        res = res.max(proj(b, &a.column(c).into_owned()));
    }
    for c in 0..b.ncols() {
        res = res.max(proj(a, &b.column(c).into_owned()));
    }
    res
}

/// Residuals of the constrained momentum equations at `(v, v_dot)`:
/// `res_k = <M v_dot, s_k> - <M v, [v, s_k]>` for every basis column `s_k`.
pub fn edp_residual(
    staged: &StagedStructure,
    lag: &QuadraticLagrangian,
    v: &AlgVector,
    v_dot: &AlgVector,
    subspace: &ConstraintSubspace,
) -> Result<DVector<f64>> {
    let dim = staged.dim();
    if subspace.dim() != dim {
        return Err(Error::Dimension {
            expected: dim,
            got: subspace.dim(),
        });
    }
    let vres = subspace.residual(&v.coords);
    if vres > 1e-8 {
        return Err(Error::Constraint(format!(
            "velocity leaves the constraint subspace: residual {vres:.3e}"
        )));
    }
    let mv = lag.mass() * &v.coords;
    let mvdot = lag.mass() * &v_dot.coords;
    let s = subspace.rank();
    let mut out = DVector::zeros(s);
    for k in 0..s {
        let col = AlgVector {
            coords: subspace.basis().column(k).into_owned(),
        };
        let br = staged.bracket_by_stages(v, &col)?;
        out[k] = mvdot.dot(&col.coords) - mv.dot(&br.coords);
    }
    Ok(out)
}

/// Constrained flow in independent coordinates: solves
/// `(S^T M S) c_dot = [<M v, [v, s_k]>]_k` with `v = S c`.
pub fn edp_rhs(
    staged: &StagedStructure,
    lag: &QuadraticLagrangian,
    subspace: &ConstraintSubspace,
    c: &DVector<f64>,
) -> Result<DVector<f64>> {
    let s = subspace.rank();
    if c.len() != s {
        return Err(Error::Dimension {
            expected: s,
            got: c.len(),
        });
    }
    let v = AlgVector {
        coords: subspace.basis() * c,
    };
    let mv = lag.mass() * &v.coords;
    let mut rhs = DVector::zeros(s);
    for k in 0..s {
        let col = AlgVector {
            coords: subspace.basis().column(k).into_owned(),
        };
        let br = staged.bracket_by_stages(&v, &col)?;
        rhs[k] = mv.dot(&br.coords);
    }
    let reduced_mass = subspace.basis().transpose() * lag.mass() * subspace.basis();
    let chol = Cholesky::new(reduced_mass)
        .ok_or_else(|| Error::Numeric("reduced mass matrix not positive definite".into()))?;
    Ok(chol.solve(&rhs))
}

/// Integrate the Euler-Poincare flow from `v0`.
pub fn integrate_ep(
    staged: &StagedStructure,
    lag: &QuadraticLagrangian,
    v0: &AlgVector,
    t_end: f64,
    h: f64,
) -> Result<Trajectory> {
    integrate_rk4(
        |_, y| {
            let v = AlgVector { coords: y.clone() };
            Ok(ep_rhs(staged, lag, &v)?.coords)
        },
        v0.coords.clone(),
        t_end,
        h,
    )
}

/// Integrate the constrained flow in independent coordinates from `c0`.
pub fn integrate_edp(
    staged: &StagedStructure,
    lag: &QuadraticLagrangian,
    subspace: &ConstraintSubspace,
    c0: &DVector<f64>,
    t_end: f64,
    h: f64,
) -> Result<Trajectory> {
    integrate_rk4(
        |_, y| edp_rhs(staged, lag, subspace, y),
        c0.clone(),
        t_end,
        h,
    )
}
