//! Reduced dynamics on a trivial bundle: shape space times symmetry group.
//!
//! State is `(x, xdot, xi)` with `x` in an open box of R^shape_dim and `xi`
//! in the algebra. A connection field `A(x)` (linear in the shape velocity),
//! a shape-dependent kinetic matrix `K(x)` on `(xdot, xi)` and a potential
//! `V(x)` define the reduced Lagrangian
//! `l = (xdot, xi)^T K(x) (xdot, xi) / 2 - V(x)`.
//!
//! The equations split into a vertical part (momentum equation paired with
//! test vectors in the algebra, or in the fiberwise constraint subspace) and
//! a horizontal part (one equation per shape direction, sourced by the
//! curvature of the connection). Both are affine in the accelerations, which
//! is what [`ldp_rhs`] exploits: it probes the residual at zero and unit
//! accelerations and solves the resulting square linear system.
//!
//! Shape derivatives come from analytic callbacks when provided, otherwise
//! from componentwise central differences with step
//! `h_k = base * max(1, |x_k|)`; `base` defaults to 1e-6 and can be
//! overridden by the `STAGED_REDUCTION_FD_STEP` environment variable or per
//! structure.

use nalgebra::{DMatrix, DVector};

use crate::algebra::LieAlgebraSpec;
use crate::error::{Error, Result};
use crate::integrate::{integrate_rk4, Trajectory};
use crate::stages::StagedStructure;
use crate::AlgVector;

type VecFn = dyn Fn(&DVector<f64>, &DVector<f64>) -> DVector<f64> + Send + Sync;
type VecPartialFn = dyn Fn(&DVector<f64>, usize, &DVector<f64>) -> DVector<f64> + Send + Sync;
type MatFn = dyn Fn(&DVector<f64>) -> DMatrix<f64> + Send + Sync;
type MatPartialFn = dyn Fn(&DVector<f64>, usize) -> DMatrix<f64> + Send + Sync;
type ScalarFn = dyn Fn(&DVector<f64>) -> f64 + Send + Sync;
type ScalarPartialFn = dyn Fn(&DVector<f64>, usize) -> f64 + Send + Sync;

/// Default base step for central differences in the shape variables.
pub const DEFAULT_FD_STEP: f64 = 1e-6;

fn fd_base(override_step: Option<f64>) -> f64 {
    if let Some(h) = override_step {
        return h;
    }
    std::env::var("STAGED_REDUCTION_FD_STEP")
        .ok()
        .and_then(|s| s.parse::<f64>().ok())
        .filter(|h| *h > 0.0)
        .unwrap_or(DEFAULT_FD_STEP)
}

fn fd_step_for(base: f64, xk: f64) -> f64 {
    base * xk.abs().max(1.0)
}

/// Algebra-valued connection field on the shape space, linear in `xdot`.
pub struct ConnectionField {
    shape_dim: usize,
    alg_dim: usize,
    eval: Box<VecFn>,
    /// Analytic `d/dx_k [A(.) w](x)`, if available.
    partial: Option<Box<VecPartialFn>>,
    fd_step: Option<f64>,
}

impl ConnectionField {
    pub fn new(shape_dim: usize, alg_dim: usize, eval: Box<VecFn>) -> Self {
        Self {
            shape_dim,
            alg_dim,
            eval,
            partial: None,
            fd_step: None,
        }
    }

    pub fn with_partial(mut self, partial: Box<VecPartialFn>) -> Self {
        self.partial = Some(partial);
        self
    }

    pub fn with_fd_step(mut self, step: f64) -> Self {
        self.fd_step = Some(step);
        self
    }

    /// The zero connection.
    pub fn flat(shape_dim: usize, alg_dim: usize) -> Self {
        Self::new(
            shape_dim,
            alg_dim,
            Box::new(move |_, _| DVector::zeros(alg_dim)),
        )
        .with_partial(Box::new(move |_, _, _| DVector::zeros(alg_dim)))
    }

    pub fn shape_dim(&self) -> usize {
        self.shape_dim
    }

    pub fn alg_dim(&self) -> usize {
        self.alg_dim
    }

    /// `A(x) xdot`.
    pub fn eval(&self, x: &DVector<f64>, xdot: &DVector<f64>) -> DVector<f64> {
        (self.eval)(x, xdot)
    }

    /// Directional shape derivative `d/dx_k [A(.) w](x)`.
    pub fn partial(&self, x: &DVector<f64>, k: usize, w: &DVector<f64>) -> DVector<f64> {
        if let Some(p) = &self.partial {
            return p(x, k, w);
        }
        let h = fd_step_for(fd_base(self.fd_step), x[k]);
        let mut xp = x.clone();
        let mut xm = x.clone();
        xp[k] += h;
        xm[k] -= h;
        ((self.eval)(&xp, w) - (self.eval)(&xm, w)) / (2.0 * h)
    }
}

/// Reduced Lagrangian data in a trivialization: kinetic matrix and potential.
pub struct ReducedLagrangianLocal {
    shape_dim: usize,
    alg_dim: usize,
    kinetic: Box<MatFn>,
    kinetic_partial: Option<Box<MatPartialFn>>,
    potential: Box<ScalarFn>,
    potential_partial: Option<Box<ScalarPartialFn>>,
    fd_step: Option<f64>,
}

impl ReducedLagrangianLocal {
    pub fn new(
        shape_dim: usize,
        alg_dim: usize,
        kinetic: Box<MatFn>,
        potential: Box<ScalarFn>,
    ) -> Self {
        Self {
            shape_dim,
            alg_dim,
            kinetic,
            kinetic_partial: None,
            potential,
            potential_partial: None,
            fd_step: None,
        }
    }

    pub fn with_kinetic_partial(mut self, p: Box<MatPartialFn>) -> Self {
        self.kinetic_partial = Some(p);
        self
    }

    pub fn with_potential_partial(mut self, p: Box<ScalarPartialFn>) -> Self {
        self.potential_partial = Some(p);
        self
    }

    pub fn with_fd_step(mut self, step: f64) -> Self {
        self.fd_step = Some(step);
        self
    }

    pub fn shape_dim(&self) -> usize {
        self.shape_dim
    }

    pub fn alg_dim(&self) -> usize {
        self.alg_dim
    }

    pub fn kinetic(&self, x: &DVector<f64>) -> DMatrix<f64> {
        (self.kinetic)(x)
    }

    pub fn kinetic_partial(&self, x: &DVector<f64>, k: usize) -> DMatrix<f64> {
        if let Some(p) = &self.kinetic_partial {
            return p(x, k);
        }
        let h = fd_step_for(fd_base(self.fd_step), x[k]);
        let mut xp = x.clone();
        let mut xm = x.clone();
        xp[k] += h;
        xm[k] -= h;
        ((self.kinetic)(&xp) - (self.kinetic)(&xm)) / (2.0 * h)
    }

    pub fn potential(&self, x: &DVector<f64>) -> f64 {
        (self.potential)(x)
    }

    pub fn potential_partial(&self, x: &DVector<f64>, k: usize) -> f64 {
        if let Some(p) = &self.potential_partial {
            return p(x, k);
        }
        let h = fd_step_for(fd_base(self.fd_step), x[k]);
        let mut xp = x.clone();
        let mut xm = x.clone();
        xp[k] += h;
        xm[k] -= h;
        ((self.potential)(&xp) - (self.potential)(&xm)) / (2.0 * h)
    }

    /// Reduced Lagrangian value.
    pub fn lagrangian(&self, x: &DVector<f64>, xdot: &DVector<f64>, xi: &DVector<f64>) -> f64 {
        let w = stack(xdot, xi);
        let k = self.kinetic(x);
        0.5 * (w.transpose() * k * &w)[(0, 0)] - self.potential(x)
    }

    /// Total energy: kinetic plus potential.
    pub fn energy(&self, x: &DVector<f64>, xdot: &DVector<f64>, xi: &DVector<f64>) -> f64 {
        let w = stack(xdot, xi);
        let k = self.kinetic(x);
        0.5 * (w.transpose() * k * &w)[(0, 0)] + self.potential(x)
    }
}

/// Fiberwise constraint subspace of the algebra, varying over shape space.
pub struct ConstraintField {
    alg_dim: usize,
    rank: usize,
    eval: Box<MatFn>,
    partial: Option<Box<MatPartialFn>>,
    fd_step: Option<f64>,
}

impl ConstraintField {
    pub fn new(alg_dim: usize, rank: usize, eval: Box<MatFn>) -> Self {
        Self {
            alg_dim,
            rank,
            eval,
            partial: None,
            fd_step: None,
        }
    }

    pub fn with_partial(mut self, p: Box<MatPartialFn>) -> Self {
        self.partial = Some(p);
        self
    }

    /// The whole algebra, constant over shape space.
    pub fn full(alg_dim: usize) -> Self {
        Self::new(
            alg_dim,
            alg_dim,
            Box::new(move |_| DMatrix::identity(alg_dim, alg_dim)),
        )
        .with_partial(Box::new(move |_, _| DMatrix::zeros(alg_dim, alg_dim)))
    }

    pub fn alg_dim(&self) -> usize {
        self.alg_dim
    }

    pub fn rank(&self) -> usize {
        self.rank
    }

    pub fn eval(&self, x: &DVector<f64>) -> DMatrix<f64> {
        (self.eval)(x)
    }

    pub fn partial(&self, x: &DVector<f64>, k: usize) -> DMatrix<f64> {
        if let Some(p) = &self.partial {
            return p(x, k);
        }
        let h = fd_step_for(fd_base(self.fd_step), x[k]);
        let mut xp = x.clone();
        let mut xm = x.clone();
        xp[k] += h;
        xm[k] -= h;
        ((self.eval)(&xp) - (self.eval)(&xm)) / (2.0 * h)
    }
}

/// Point of the reduced phase space with fiber coordinates.
#[derive(Debug, Clone)]
pub struct LocalState {
    pub x: DVector<f64>,
    pub xdot: DVector<f64>,
    /// Independent fiber coordinates: `xi = S(x) c`.
    pub c: DVector<f64>,
    pub t: f64,
}

/// Accelerations entering the residual: shape and fiber rates.
#[derive(Debug, Clone)]
pub struct BundleAccel {
    pub xddot: DVector<f64>,
    pub xidot: DVector<f64>,
}

fn stack(a: &DVector<f64>, b: &DVector<f64>) -> DVector<f64> {
    let mut out = DVector::zeros(a.len() + b.len());
    out.rows_mut(0, a.len()).copy_from(a);
    out.rows_mut(a.len(), b.len()).copy_from(b);
    out
}

/// Curvature of the connection: antisymmetrized shape derivative minus the
/// bracket of the two connection values.
pub fn curvature_local(
    alg: &LieAlgebraSpec,
    conn: &ConnectionField,
    x: &DVector<f64>,
    xdot: &DVector<f64>,
    dx: &DVector<f64>,
) -> DVector<f64> {
    let mut d_a = DVector::zeros(conn.alg_dim());
    for k in 0..conn.shape_dim() {
        if xdot[k] != 0.0 {
            d_a += xdot[k] * conn.partial(x, k, dx);
        }
        if dx[k] != 0.0 {
            d_a -= dx[k] * conn.partial(x, k, xdot);
        }
    }
    let a1 = conn.eval(x, xdot);
    let a2 = conn.eval(x, dx);
    d_a - alg.bracket_raw(&a1, &a2)
}

/// Covariant rate of an algebra-valued curve: `xidot - [A(x) xdot, xi]`.
pub fn covariant_derivative_adjoint(
    alg: &LieAlgebraSpec,
    conn: &ConnectionField,
    x: &DVector<f64>,
    xdot: &DVector<f64>,
    xi: &DVector<f64>,
    xidot: &DVector<f64>,
) -> DVector<f64> {
    let a = conn.eval(x, xdot);
    xidot - alg.bracket_raw(&a, xi)
}

/// Covariant rate of a momentum curve: `alphadot + ad*_{A(x) xdot} alpha`.
pub fn covariant_derivative_coadjoint(
    alg: &LieAlgebraSpec,
    conn: &ConnectionField,
    x: &DVector<f64>,
    xdot: &DVector<f64>,
    alpha: &DVector<f64>,
    alphadot: &DVector<f64>,
) -> DVector<f64> {
    let a = conn.eval(x, xdot);
    // <ad*_a alpha, w> = <alpha, [a, w]>
    let ad = alg.ad_matrix(&a);
    alphadot + ad.transpose() * alpha
}

/// Frozen per-state quantities for residual evaluation.
struct LpContext {
    k: DMatrix<f64>,
    dk: Vec<DMatrix<f64>>,
    dv: DVector<f64>,
    a_xdot: DVector<f64>,
    /// `A(x) e_k` per shape direction.
    a_cols: Vec<DVector<f64>>,
    /// Curvature `B(x)(xdot, e_k)` per shape direction.
    curv_cols: Vec<DVector<f64>>,
}

fn build_context(
    conn: &ConnectionField,
    lag: &ReducedLagrangianLocal,
    alg: &LieAlgebraSpec,
    x: &DVector<f64>,
    xdot: &DVector<f64>,
) -> LpContext {
    let sd = lag.shape_dim();
    let k = lag.kinetic(x);
    let dk = (0..sd).map(|i| lag.kinetic_partial(x, i)).collect();
    let dv = DVector::from_fn(sd, |i, _| lag.potential_partial(x, i));
    let a_xdot = conn.eval(x, xdot);
    let mut a_cols = Vec::with_capacity(sd);
    let mut curv_cols = Vec::with_capacity(sd);
    for i in 0..sd {
        let mut e = DVector::zeros(sd);
        e[i] = 1.0;
        a_cols.push(conn.eval(x, &e));
        curv_cols.push(curvature_local(alg, conn, x, xdot, &e));
    }
    LpContext {
        k,
        dk,
        dv,
        a_xdot,
        a_cols,
        curv_cols,
    }
}

#[allow(clippy::too_many_arguments)]
fn residual_with_context(
    staged: &StagedStructure,
    ctx: &LpContext,
    x_dummy_dim: usize,
    xdot: &DVector<f64>,
    xi: &DVector<f64>,
    accel: &BundleAccel,
    vertical_tests: &DMatrix<f64>,
) -> Result<(DVector<f64>, DVector<f64>)> {
    let sd = x_dummy_dim;
    let ad = xi.len();
    let w = stack(xdot, xi);
    let wdot = stack(&accel.xddot, &accel.xidot);

    // momentum rate: (sum_k xdot_k dK_k) w + K wdot
    let mut kdot_w = DVector::zeros(sd + ad);
    for k in 0..sd {
        if xdot[k] != 0.0 {
            kdot_w += xdot[k] * (&ctx.dk[k] * &w);
        }
    }
    let p_dot = kdot_w + &ctx.k * &wdot;
    let p_full = &ctx.k * &w;
    let beta = p_full.rows(sd, ad).into_owned();
    let beta_dot = p_dot.rows(sd, ad).into_owned();
    let px_dot = p_dot.rows(0, sd).into_owned();

    // vertical: <beta_dot, nu> - <beta, [xi - A xdot, nu]>
    let w_eff = AlgVector {
        coords: xi - &ctx.a_xdot,
    };
    let mut vertical = DVector::zeros(vertical_tests.ncols());
    for col in 0..vertical_tests.ncols() {
        let nu = AlgVector {
            coords: vertical_tests.column(col).into_owned(),
        };
        let br = staged.bracket_by_stages(&w_eff, &nu)?;
        vertical[col] = beta_dot.dot(&nu.coords) - beta.dot(&br.coords);
    }

    // horizontal per shape direction:
    //   dl/dx . e_k - d/dt(dl/dxdot) . e_k - <beta, B(xdot, e_k) - [A e_k, xi]>
    let mut horizontal = DVector::zeros(sd);
    for k in 0..sd {
        let dl_dx = 0.5 * (w.transpose() * &ctx.dk[k] * &w)[(0, 0)] - ctx.dv[k];
        let br = staged.bracket_by_stages(
            &AlgVector {
                coords: ctx.a_cols[k].clone(),
            },
            &AlgVector { coords: xi.clone() },
        )?;
        let geom = beta.dot(&(&ctx.curv_cols[k] - br.coords));
        horizontal[k] = dl_dx - px_dot[k] - geom;
    }
    Ok((vertical, horizontal))
}

/// Residuals of the vertical and horizontal reduced equations.
///
/// `vertical_tests` columns are the algebra vectors the momentum equation is
/// paired with: the full basis for the unconstrained equations, the columns
/// of the constraint subspace for the constrained ones. Affine in `accel`.
#[allow(clippy::too_many_arguments)]
pub fn lp_residual(
    staged: &StagedStructure,
    conn: &ConnectionField,
    lag: &ReducedLagrangianLocal,
    x: &DVector<f64>,
    xdot: &DVector<f64>,
    xi: &DVector<f64>,
    accel: &BundleAccel,
    vertical_tests: &DMatrix<f64>,
) -> Result<(DVector<f64>, DVector<f64>)> {
    let ctx = build_context(conn, lag, staged.algebra(), x, xdot);
    residual_with_context(staged, &ctx, lag.shape_dim(), xdot, xi, accel, vertical_tests)
}

/// Solve for accelerations `(xddot, cdot)` of the constrained system at a
/// state, with `xi = S(x) c`.
pub fn ldp_rhs(
    staged: &StagedStructure,
    conn: &ConnectionField,
    lag: &ReducedLagrangianLocal,
    sfield: &ConstraintField,
    state: &LocalState,
) -> Result<(DVector<f64>, DVector<f64>)> {
    let sd = lag.shape_dim();
    let s = sfield.rank();
    let x = &state.x;
    let xdot = &state.xdot;
    let smat = sfield.eval(x);
    let xi = &smat * &state.c;

    // S along the motion: xi_dot = S cdot + (sum_k xdot_k dS_k) c
    let mut sdot_c = DVector::zeros(sfield.alg_dim());
    for k in 0..sd {
        if xdot[k] != 0.0 {
            sdot_c += xdot[k] * (sfield.partial(x, k) * &state.c);
        }
    }

    let ctx = build_context(conn, lag, staged.algebra(), x, xdot);
    let eval = |acc: &DVector<f64>| -> Result<DVector<f64>> {
        let xddot = acc.rows(0, sd).into_owned();
        let cdot = acc.rows(sd, s).into_owned();
        let accel = BundleAccel {
            xidot: &smat * cdot + &sdot_c,
            xddot,
        };
        let (v, hres) = residual_with_context(staged, &ctx, sd, xdot, &xi, &accel, &smat)?;
        Ok(stack(&v, &hres))
    };

    // affine extraction: offset at zero, columns from unit probes
    let zero = DVector::zeros(sd + s);
    let r0 = eval(&zero)?;
    let mut mat = DMatrix::zeros(sd + s, sd + s);
    for j in 0..sd + s {
        let mut e = DVector::zeros(sd + s);
        e[j] = 1.0;
        let rj = eval(&e)?;
        mat.set_column(j, &(rj - &r0));
    }
    let rhs = -r0;
    let lu = mat.clone().lu();
    match lu.solve(&rhs) {
        Some(acc) => Ok((acc.rows(0, sd).into_owned(), acc.rows(sd, s).into_owned())),
        None => {
            let sv = mat.svd(false, false).singular_values;
            let cond = sv[0] / sv[sv.len() - 1].max(f64::MIN_POSITIVE);
            Err(Error::Numeric(format!(
                "effective mass matrix singular (condition estimate {cond:.3e})"
            )))
        }
    }
}

/// A registered reduced system: staged algebra data plus the bundle fields.
pub struct BundleSystem {
    pub name: String,
    pub staged: StagedStructure,
    pub conn: ConnectionField,
    pub lag: ReducedLagrangianLocal,
    pub sfield: ConstraintField,
    pub initial: LocalState,
}

impl BundleSystem {
    /// Integrate with flat state `[x, xdot, c]`.
    pub fn integrate(&self, state0: &LocalState, t_end: f64, h: f64) -> Result<Trajectory> {
        let sd = self.lag.shape_dim();
        let s = self.sfield.rank();
        let flat0 = {
            let mut v = DVector::zeros(2 * sd + s);
            v.rows_mut(0, sd).copy_from(&state0.x);
            v.rows_mut(sd, sd).copy_from(&state0.xdot);
            v.rows_mut(2 * sd, s).copy_from(&state0.c);
            v
        };
        integrate_rk4(
            |t, y| {
                let state = LocalState {
                    x: y.rows(0, sd).into_owned(),
                    xdot: y.rows(sd, sd).into_owned(),
                    c: y.rows(2 * sd, s).into_owned(),
                    t,
                };
                let (xddot, cdot) = ldp_rhs(&self.staged, &self.conn, &self.lag, &self.sfield, &state)?;
                let mut out = DVector::zeros(2 * sd + s);
                out.rows_mut(0, sd).copy_from(&state.xdot);
                out.rows_mut(sd, sd).copy_from(&xddot);
                out.rows_mut(2 * sd, s).copy_from(&cdot);
                Ok(out)
            },
            flat0,
            t_end,
            h,
        )
    }

    /// Energy of a flat trajectory sample.
    pub fn energy_of(&self, y: &DVector<f64>) -> f64 {
        let sd = self.lag.shape_dim();
        let s = self.sfield.rank();
        let x = y.rows(0, sd).into_owned();
        let xdot = y.rows(sd, sd).into_owned();
        let c = y.rows(2 * sd, s).into_owned();
        let xi = self.sfield.eval(&x) * c;
        self.lag.energy(&x, &xdot, &xi)
    }
}
