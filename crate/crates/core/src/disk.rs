//! A disk of radius `r` and thickness `r e` rolling without slipping on a
//! plane, with the horizontal and vertical configurations excluded.
//!
//! Shape coordinates are the tilt `theta` in `(0, pi/2)` and the heading
//! `phi`; the symmetry group is rotations about the disk axis together with
//! plane translations, so the algebra is abelian of dimension three with
//! stage blocks `[1, 2]`. Rolling couples the spin rate `eta01` to the
//! contact-point velocity `eta12` through `eta12 = eta01 * r * u(phi)` with
//! `u = (-cos phi, -sin phi)`.
//!
//! Three independent routes to the dynamics live here:
//! * [`disk_rhs_explicit`] — the hand-written reduced equations, solved as a
//!   3x3 linear system per step;
//! * the generic bundle assembly over [`build_disk_system`] (see
//!   [`crate::bundle::ldp_rhs`]);
//! * [`disk_full_oracle_rhs`] — the full-configuration equations with
//!   Lagrange multipliers and differentiated constraints, a 7x7 solve.

use nalgebra::{Cholesky, DMatrix, DVector};

use crate::bundle::{BundleSystem, ConnectionField, ConstraintField, LocalState, ReducedLagrangianLocal};
use crate::error::{Error, Result};
use crate::integrate::{integrate_rk4, Trajectory};
use crate::stages::{InvariantMetric, StageChain, StagedStructure};
use crate::algebra;

/// Chart margin: integration aborts when `theta` leaves
/// `(THETA_MIN, pi/2 - THETA_MIN)`.
pub const THETA_MIN: f64 = 1e-3;

/// Physical constants of the disk.
#[derive(Debug, Clone, Copy)]
pub struct DiskParams {
    /// Mass (kg).
    pub m: f64,
    /// Radius (m).
    pub r: f64,
    /// Thickness ratio; the disk is `r * e` thick.
    pub e: f64,
    /// Moment of inertia about a diameter (kg m^2).
    pub i1: f64,
    /// Moment of inertia about the symmetry axis (kg m^2).
    pub i3: f64,
    /// Gravity (m/s^2).
    pub g: f64,
}

impl Default for DiskParams {
    fn default() -> Self {
        // uniform thin disk: I1 = M r^2 / 4, I3 = M r^2 / 2
        Self {
            m: 1.0,
            r: 1.0,
            e: 0.0,
            i1: 0.25,
            i3: 0.5,
            g: 9.8,
        }
    }
}

impl DiskParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.m > 0.0 && self.r > 0.0 && self.g > 0.0) {
            return Err(Error::Structural("disk mass, radius, gravity must be positive".into()));
        }
        if self.e < 0.0 {
            return Err(Error::Structural("thickness ratio must be nonnegative".into()));
        }
        if !(self.i1 > 0.0 && self.i3 > 0.0) {
            return Err(Error::Structural("moments of inertia must be positive".into()));
        }
        Ok(())
    }
}

/// Reduced state: shape, shape velocities, spin rate and contact velocity.
#[derive(Debug, Clone, Copy)]
pub struct DiskState {
    pub theta: f64,
    pub phi: f64,
    pub thetadot: f64,
    pub phidot: f64,
    pub eta01: f64,
    pub eta12: [f64; 2],
}

impl DiskState {
    /// State with the contact velocity set from the rolling relation.
    pub fn admissible(theta: f64, phi: f64, thetadot: f64, phidot: f64, eta01: f64, r: f64) -> Self {
        let u = u_dir(phi);
        Self {
            theta,
            phi,
            thetadot,
            phidot,
            eta01,
            eta12: [eta01 * r * u[0], eta01 * r * u[1]],
        }
    }

    pub fn to_flat(&self) -> DVector<f64> {
        DVector::from_column_slice(&[
            self.theta,
            self.phi,
            self.thetadot,
            self.phidot,
            self.eta01,
            self.eta12[0],
            self.eta12[1],
        ])
    }

    pub fn from_flat(y: &DVector<f64>) -> Self {
        Self {
            theta: y[0],
            phi: y[1],
            thetadot: y[2],
            phidot: y[3],
            eta01: y[4],
            eta12: [y[5], y[6]],
        }
    }
}

/// Full-configuration state with the current multipliers attached.
#[derive(Debug, Clone, Copy)]
pub struct FullDiskState {
    pub theta: f64,
    pub phi: f64,
    pub psi: f64,
    pub x: [f64; 2],
    pub thetadot: f64,
    pub phidot: f64,
    pub psidot: f64,
    pub xdot: [f64; 2],
    pub lambda: [f64; 2],
}

impl FullDiskState {
    /// Lift a reduced state, placing the disk at the origin with zero spin angle.
    pub fn from_reduced(s: &DiskState) -> Self {
        Self {
            theta: s.theta,
            phi: s.phi,
            psi: 0.0,
            x: [0.0, 0.0],
            thetadot: s.thetadot,
            phidot: s.phidot,
            psidot: s.eta01,
            xdot: s.eta12,
            lambda: [0.0, 0.0],
        }
    }

    pub fn to_flat(&self) -> DVector<f64> {
        DVector::from_column_slice(&[
            self.theta,
            self.phi,
            self.psi,
            self.x[0],
            self.x[1],
            self.thetadot,
            self.phidot,
            self.psidot,
            self.xdot[0],
            self.xdot[1],
        ])
    }

    pub fn from_flat(y: &DVector<f64>) -> Self {
        Self {
            theta: y[0],
            phi: y[1],
            psi: y[2],
            x: [y[3], y[4]],
            thetadot: y[5],
            phidot: y[6],
            psidot: y[7],
            xdot: [y[8], y[9]],
            lambda: [0.0, 0.0],
        }
    }

    /// Projection to the reduced variables.
    pub fn reduced(&self) -> DiskState {
        DiskState {
            theta: self.theta,
            phi: self.phi,
            thetadot: self.thetadot,
            phidot: self.phidot,
            eta01: self.psidot,
            eta12: self.xdot,
        }
    }
}

/// Contact-direction unit vector `u = (-cos phi, -sin phi)`.
pub fn u_dir(phi: f64) -> [f64; 2] {
    [-phi.cos(), -phi.sin()]
}

/// Rolling defect `|eta12 - eta01 * r * u(phi)|`.
pub fn constraint_residual(params: &DiskParams, s: &DiskState) -> f64 {
    let u = u_dir(s.phi);
    let dx = s.eta12[0] - s.eta01 * params.r * u[0];
    let dy = s.eta12[1] - s.eta01 * params.r * u[1];
    (dx * dx + dy * dy).sqrt()
}

/// The reduced Lagrangian, written out term by term.
pub fn disk_lagrangian(
    p: &DiskParams,
    theta: f64,
    phi: f64,
    thetadot: f64,
    phidot: f64,
    eta01: f64,
    eta12: [f64; 2],
) -> f64 {
    let (m, r, e, i1, i3, g) = (p.m, p.r, p.e, p.i1, p.i3, p.g);
    let (s, c) = theta.sin_cos();
    let (sp, cp) = phi.sin_cos();
    let (n1, n2) = (eta12[0], eta12[1]);

    -m * g * r * s
        + 0.5 * (i1 + 0.25 * m * r * r * e * e) * (thetadot * thetadot + phidot * phidot * s * s)
        + 0.5 * m * (n1 * n1 + n2 * n2)
        + 0.5 * m * r * r * thetadot * thetadot
        + 0.5 * m * r * r * phidot * phidot * c * c
        + m * r * n1 * (thetadot * s * sp - phidot * c * cp)
        - m * r * n2 * (thetadot * cp * s + phidot * c * sp)
        + 0.5 * i3 * (phidot * c + eta01) * (phidot * c + eta01)
        + 0.5
            * m
            * r
            * e
            * (n1 * (phidot * cp * s + thetadot * sp * c)
                + n2 * (phidot * sp * s - thetadot * c * cp)
                - r * c * s * phidot * phidot)
        - 0.5 * m * g * r * e * c
}

/// Gravitational potential `V(theta)`.
pub fn potential(p: &DiskParams, theta: f64) -> f64 {
    p.m * p.g * p.r * theta.sin() + 0.5 * p.m * p.g * p.r * p.e * theta.cos()
}

fn potential_dtheta(p: &DiskParams, theta: f64) -> f64 {
    p.m * p.g * p.r * theta.cos() - 0.5 * p.m * p.g * p.r * p.e * theta.sin()
}

/// Kinetic matrix on `(thetadot, phidot, eta01, eta12)`, collected from the
/// Lagrangian's quadratic terms.
pub fn mass_matrix(p: &DiskParams, theta: f64, phi: f64) -> DMatrix<f64> {
    let (m, r, e, i1, i3) = (p.m, p.r, p.e, p.i1, p.i3);
    let (s, c) = theta.sin_cos();
    let (sp, cp) = phi.sin_cos();
    let mut k = DMatrix::zeros(5, 5);
    let a = m * r * s + 0.5 * m * r * e * c; // theta-translation coupling
    let b = -m * r * c + 0.5 * m * r * e * s; // phi-translation coupling

    k[(0, 0)] = i1 + 0.25 * m * r * r * e * e + m * r * r;
    k[(1, 1)] = (i1 + 0.25 * m * r * r * e * e) * s * s + (m * r * r + i3) * c * c
        - m * r * r * e * s * c;
    k[(2, 2)] = i3;
    k[(1, 2)] = i3 * c;
    k[(2, 1)] = i3 * c;
    k[(3, 3)] = m;
    k[(4, 4)] = m;
    k[(0, 3)] = a * sp;
    k[(3, 0)] = a * sp;
    k[(0, 4)] = -a * cp;
    k[(4, 0)] = -a * cp;
    k[(1, 3)] = b * cp;
    k[(3, 1)] = b * cp;
    k[(1, 4)] = b * sp;
    k[(4, 1)] = b * sp;
    k
}

fn mass_matrix_dtheta(p: &DiskParams, theta: f64, phi: f64) -> DMatrix<f64> {
    let (m, r, e, i1, i3) = (p.m, p.r, p.e, p.i1, p.i3);
    let (s, c) = theta.sin_cos();
    let (sp, cp) = phi.sin_cos();
    let mut k = DMatrix::zeros(5, 5);
    let da = m * r * c - 0.5 * m * r * e * s;
    let db = m * r * s + 0.5 * m * r * e * c;

    k[(1, 1)] = 2.0 * (i1 + 0.25 * m * r * r * e * e) * s * c - 2.0 * (m * r * r + i3) * s * c
        - m * r * r * e * (c * c - s * s);
    k[(1, 2)] = -i3 * s;
    k[(2, 1)] = -i3 * s;
    k[(0, 3)] = da * sp;
    k[(3, 0)] = da * sp;
    k[(0, 4)] = -da * cp;
    k[(4, 0)] = -da * cp;
    k[(1, 3)] = db * cp;
    k[(3, 1)] = db * cp;
    k[(1, 4)] = db * sp;
    k[(4, 1)] = db * sp;
    k
}

fn mass_matrix_dphi(p: &DiskParams, theta: f64, phi: f64) -> DMatrix<f64> {
    let (m, r, e) = (p.m, p.r, p.e);
    let (s, c) = theta.sin_cos();
    let (sp, cp) = phi.sin_cos();
    let mut k = DMatrix::zeros(5, 5);
    let a = m * r * s + 0.5 * m * r * e * c;
    let b = -m * r * c + 0.5 * m * r * e * s;

    k[(0, 3)] = a * cp;
    k[(3, 0)] = a * cp;
    k[(0, 4)] = a * sp;
    k[(4, 0)] = a * sp;
    k[(1, 3)] = -b * sp;
    k[(3, 1)] = -b * sp;
    k[(1, 4)] = b * cp;
    k[(4, 1)] = b * cp;
    k
}

/// Total energy of a reduced state.
pub fn disk_energy(p: &DiskParams, s: &DiskState) -> f64 {
    let k = mass_matrix(p, s.theta, s.phi);
    let w = DVector::from_column_slice(&[
        s.thetadot, s.phidot, s.eta01, s.eta12[0], s.eta12[1],
    ]);
    0.5 * (w.transpose() * k * &w)[(0, 0)] + potential(p, s.theta)
}

/// Assemble the staged structure, connection, Lagrangian and constraint
/// field of the disk over the shape chart `(theta, phi)`.
///
/// `blocks` selects the stage layout of the abelian algebra
/// (spin | translations); pass `&[3]` for the single-stage route.
pub fn build_disk_system_with_blocks(p: &DiskParams, blocks: &[usize]) -> Result<BundleSystem> {
    p.validate()?;
    let alg = algebra::abelian(3, "g");
    let staged = StagedStructure::build(
        alg,
        StageChain::new(blocks.to_vec())?,
        InvariantMetric::identity(3),
    )?;

    let conn = ConnectionField::flat(2, 3);

    let pc = *p;
    let lag = ReducedLagrangianLocal::new(
        2,
        3,
        Box::new(move |x: &DVector<f64>| mass_matrix(&pc, x[0], x[1])),
        Box::new(move |x: &DVector<f64>| potential(&pc, x[0])),
    )
    .with_kinetic_partial(Box::new(move |x: &DVector<f64>, k: usize| {
        if k == 0 {
            mass_matrix_dtheta(&pc, x[0], x[1])
        } else {
            mass_matrix_dphi(&pc, x[0], x[1])
        }
    }))
    .with_potential_partial(Box::new(move |x: &DVector<f64>, k: usize| {
        if k == 0 {
            potential_dtheta(&pc, x[0])
        } else {
            0.0
        }
    }));

    let r = p.r;
    let sfield = ConstraintField::new(
        3,
        1,
        Box::new(move |x: &DVector<f64>| {
            let u = u_dir(x[1]);
            DMatrix::from_column_slice(3, 1, &[1.0, r * u[0], r * u[1]])
        }),
    )
    .with_partial(Box::new(move |x: &DVector<f64>, k: usize| {
        if k == 0 {
            DMatrix::zeros(3, 1)
        } else {
            let (sp, cp) = x[1].sin_cos();
            DMatrix::from_column_slice(3, 1, &[0.0, r * sp, -r * cp])
        }
    }));

    // K must be SPD on the chart; probe a generic point.
    let probe = DVector::from_column_slice(&[0.7, 0.3]);
    let k = lag.kinetic(&probe);
    if Cholesky::new(k).is_none() {
        return Err(Error::Validation(
            "disk kinetic matrix not positive definite at probe point".into(),
        ));
    }

    let initial = LocalState {
        x: DVector::from_column_slice(&[1.0, 0.5]),
        xdot: DVector::from_column_slice(&[0.3, 0.5]),
        c: DVector::from_column_slice(&[4.0]),
        t: 0.0,
    };

    Ok(BundleSystem {
        name: "disk".into(),
        staged,
        conn,
        lag,
        sfield,
        initial,
    })
}

/// Two-stage disk system (blocks `[1, 2]`).
pub fn build_disk_system(p: &DiskParams) -> Result<BundleSystem> {
    build_disk_system_with_blocks(p, &[1, 2])
}

fn check_chart(theta: f64) -> Result<()> {
    if !(THETA_MIN..=(std::f64::consts::FRAC_PI_2 - THETA_MIN)).contains(&theta) {
        return Err(Error::Constraint(format!(
            "theta = {theta:.6} left the chart ({THETA_MIN}, pi/2 - {THETA_MIN})"
        )));
    }
    Ok(())
}

/// Time derivative of a reduced state from the hand-written equations.
///
/// The three displayed equations are solved as a linear system for
/// `(theta_ddot, phi_ddot, eta01_dot)` after substituting the rolling
/// relation `eta12_dot = eta01_dot r u + eta01 r phidot u'`; the returned
/// `eta12` rate is that substitution.
pub fn disk_rhs_explicit(p: &DiskParams, st: &DiskState) -> Result<DiskState> {
    check_chart(st.theta)?;
    let (m, r, e, i1, i3, g) = (p.m, p.r, p.e, p.i1, p.i3, p.g);
    let (s, c) = st.theta.sin_cos();
    let (td, pd, n0) = (st.thetadot, st.phidot, st.eta01);

    // Substitutions induced by eta12_dot = eta01_dot r u + eta01 r phidot u':
    //   <eta12_dot, u> = eta01_dot r
    //   eta12_dot_1 cos + eta12_dot_2 sin = -eta01_dot r
    //   eta12_dot_2 cos - eta12_dot_1 sin = -eta01 r phidot
    // Unknowns z = (theta_ddot, phi_ddot, eta01_dot); rows follow the three
    // displayed equations.
    let mut a = DMatrix::zeros(3, 3);
    let mut rhs = DVector::zeros(3);

    // spin equation
    a[(0, 1)] = i3 * c + m * r * r * c - 0.5 * m * e * r * r * s;
    a[(0, 2)] = i3 + m * r * r;
    rhs[0] = i3 * td * pd * s + 2.0 * m * r * r * td * pd * s + m * e * r * r * td * pd * c;

    // heading equation
    a[(1, 1)] = -(i1 * s * s + (i3 + m * r * r) * c * c) - 0.25 * m * r * r * e * e * s * s
        + m * r * r * e * s * c;
    a[(1, 2)] = -m * r * r * c - i3 * c + 0.5 * m * r * r * e * s;
    rhs[1] = -(2.0 * (m * r * r + i3 - i1) * td * pd * s * c + i3 * td * n0 * s
        - 0.5 * m * r * e * (r * e * td * pd * s * c + 2.0 * r * td * pd * (s * s - c * c)));

    // tilt equation
    a[(2, 0)] = -(i1 + m * r * r) - 0.25 * m * r * r * e * e;
    rhs[2] = -((i1 - i3 - m * r * r) * pd * pd * s * c
        - i3 * n0 * pd * s
        - m * r * r * s * n0 * pd
        - m * g * r * c
        + 0.5
            * m
            * r
            * e
            * (0.5 * r * e * pd * pd * s * c + r * pd * pd * (s * s - c * c) - c * n0 * r * pd
                + g * s));

    let lu = a.lu();
    let z = lu.solve(&rhs).ok_or_else(|| {
        Error::Numeric(format!(
            "disk acceleration system singular at theta = {:.6}",
            st.theta
        ))
    })?;

    let u = u_dir(st.phi);
    let (sp, cp) = st.phi.sin_cos();
    let uprime = [sp, -cp];
    let eta01_dot = z[2];
    let eta12_dot = [
        eta01_dot * r * u[0] + n0 * r * pd * uprime[0],
        eta01_dot * r * u[1] + n0 * r * pd * uprime[1],
    ];
    Ok(DiskState {
        theta: st.thetadot,
        phi: st.phidot,
        thetadot: z[0],
        phidot: z[1],
        eta01: eta01_dot,
        eta12: eta12_dot,
    })
}

/// Accelerations and multipliers of the full constrained system.
///
/// Unknowns `(theta_ddot, phi_ddot, psi_ddot, x_ddot, lambda)` solve the five
/// Euler-Lagrange rows plus the two differentiated rolling constraints.
pub fn disk_full_oracle_rhs(p: &DiskParams, st: &FullDiskState) -> Result<FullDiskState> {
    check_chart(st.theta)?;
    let r = p.r;
    let k = mass_matrix(p, st.theta, st.phi);
    let kth = mass_matrix_dtheta(p, st.theta, st.phi);
    let kph = mass_matrix_dphi(p, st.theta, st.phi);
    let qdot = DVector::from_column_slice(&[
        st.thetadot,
        st.phidot,
        st.psidot,
        st.xdot[0],
        st.xdot[1],
    ]);
    let kdot = &kth * st.thetadot + &kph * st.phidot;
    let grad = DVector::from_column_slice(&[
        0.5 * (qdot.transpose() * &kth * &qdot)[(0, 0)] - potential_dtheta(p, st.theta),
        0.5 * (qdot.transpose() * &kph * &qdot)[(0, 0)],
        0.0,
        0.0,
        0.0,
    ]);

    let u = u_dir(st.phi);
    let (sp, cp) = st.phi.sin_cos();
    let uprime = [sp, -cp];

    // rows 0..4: K qddot + E lambda = grad - Kdot qdot
    // rows 5..6: xddot - r u psiddot = psidot r phidot u'
    let mut sys = DMatrix::zeros(7, 7);
    let mut rhs = DVector::zeros(7);
    for i in 0..5 {
        for j in 0..5 {
            sys[(i, j)] = k[(i, j)];
        }
    }
    // lambda columns: (0, 0, -r u_a, delta) per component
    sys[(2, 5)] = -r * u[0];
    sys[(2, 6)] = -r * u[1];
    sys[(3, 5)] = 1.0;
    sys[(4, 6)] = 1.0;
    let forcing = grad - kdot * &qdot;
    for i in 0..5 {
        rhs[i] = forcing[i];
    }
    for a in 0..2 {
        sys[(5 + a, 3 + a)] = 1.0;
        sys[(5 + a, 2)] = -r * u[a];
        rhs[5 + a] = st.psidot * r * st.phidot * uprime[a];
    }

    let lu = sys.lu();
    let z = lu.solve(&rhs).ok_or_else(|| {
        Error::Numeric(format!(
            "full-space system singular at theta = {:.6}",
            st.theta
        ))
    })?;

    Ok(FullDiskState {
        theta: st.thetadot,
        phi: st.phidot,
        psi: st.psidot,
        x: st.xdot,
        thetadot: z[0],
        phidot: z[1],
        psidot: z[2],
        xdot: [z[3], z[4]],
        lambda: [z[5], z[6]],
    })
}

/// Energy of a full-configuration state (same value as the reduced energy at
/// matched states).
pub fn full_energy(p: &DiskParams, st: &FullDiskState) -> f64 {
    disk_energy(p, &st.reduced())
}

/// Rolling defect of a full state.
pub fn full_constraint_residual(p: &DiskParams, st: &FullDiskState) -> f64 {
    let u = u_dir(st.phi);
    let dx = st.xdot[0] - st.psidot * p.r * u[0];
    let dy = st.xdot[1] - st.psidot * p.r * u[1];
    (dx * dx + dy * dy).sqrt()
}

/// Integrate the reduced equations; flat layout
/// `[theta, phi, thetadot, phidot, eta01, eta12_1, eta12_2]`.
pub fn integrate_disk_reduced(
    p: &DiskParams,
    state0: &DiskState,
    t_end: f64,
    h: f64,
) -> Result<Trajectory> {
    integrate_rk4(
        |_, y| {
            let st = DiskState::from_flat(y);
            Ok(disk_rhs_explicit(p, &st)?.to_flat())
        },
        state0.to_flat(),
        t_end,
        h,
    )
}

/// Integrate the full-space oracle; flat layout
/// `[theta, phi, psi, x1, x2, thetadot, phidot, psidot, xdot1, xdot2]`.
pub fn integrate_disk_oracle(
    p: &DiskParams,
    state0: &FullDiskState,
    t_end: f64,
    h: f64,
) -> Result<Trajectory> {
    integrate_rk4(
        |_, y| {
            let st = FullDiskState::from_flat(y);
            Ok(disk_full_oracle_rhs(p, &st)?.to_flat())
        },
        state0.to_flat(),
        t_end,
        h,
    )
}
