//! Acceptance suite: one test per criterion, each printing a pass line with
//! the measured quantity next to its threshold. Run with
//! `cargo test --test acceptance -- --nocapture` to see the lines.

use std::time::Instant;

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

use staged_reduction::algebra::{self, LieAlgebraSpec};
use staged_reduction::bundle::{curvature_local, ldp_rhs, LocalState};
use staged_reduction::disk::{
    build_disk_system, build_disk_system_with_blocks, constraint_residual, disk_energy,
    disk_rhs_explicit, full_constraint_residual, integrate_disk_oracle, integrate_disk_reduced,
    DiskParams, DiskState, FullDiskState,
};
use staged_reduction::dynamics::{
    edp_residual, ep_rhs, integrate_edp, integrate_ep, ConstraintSubspace, QuadraticLagrangian,
};
use staged_reduction::stages::{InvariantMetric, StageChain, StagedStructure};
use staged_reduction::AlgVector;

fn build(alg: LieAlgebraSpec, blocks: &[usize], gram: DMatrix<f64>) -> StagedStructure {
    StagedStructure::build(
        alg,
        StageChain::new(blocks.to_vec()).unwrap(),
        InvariantMetric::new(gram).unwrap(),
    )
    .unwrap()
}

/// Second SPD metric per test algebra: generic couplings where the pinned
/// assembly tolerates them, block-orthogonal couplings otherwise.
fn second_metric(name: &str, dim: usize) -> DMatrix<f64> {
    match name {
        "h3" => {
            let mut g = DMatrix::identity(3, 3);
            g[(0, 0)] = 2.0;
            g[(0, 1)] = 0.25;
            g[(1, 0)] = 0.25;
            g[(0, 2)] = 0.5;
            g[(2, 0)] = 0.5;
            g[(2, 2)] = 1.5;
            g
        }
        "se2" => {
            let mut g = DMatrix::identity(3, 3);
            g[(0, 0)] = 2.0;
            g[(0, 1)] = 0.3;
            g[(1, 0)] = 0.3;
            g[(0, 2)] = -0.2;
            g[(2, 0)] = -0.2;
            g[(1, 2)] = 0.1;
            g[(2, 1)] = 0.1;
            g[(2, 2)] = 1.5;
            g
        }
        "ut4" => {
            // SPD couplings within each chain block only
            let mut g = DMatrix::identity(6, 6);
            g[(0, 0)] = 2.0;
            g[(0, 1)] = 0.3;
            g[(1, 0)] = 0.3;
            g[(1, 1)] = 1.5;
            g[(1, 2)] = 0.2;
            g[(2, 1)] = 0.2;
            g[(3, 3)] = 1.2;
            g[(3, 4)] = 0.4;
            g[(4, 3)] = 0.4;
            g[(4, 4)] = 2.0;
            g[(5, 5)] = 0.8;
            g
        }
        _ => DMatrix::identity(dim, dim),
    }
}

#[test]
fn c01_bracket_by_stages_equivalence() {
    let start = Instant::now();
    let cases: Vec<(&str, LieAlgebraSpec, Vec<usize>)> = vec![
        ("h3", algebra::heisenberg(), vec![1, 1, 1]),
        ("h3", algebra::heisenberg(), vec![1, 2]),
        ("se2", algebra::se2(), vec![1, 2]),
        ("ut4", algebra::upper_triangular_4(), vec![3, 2, 1]),
    ];
    let mut worst: f64 = 0.0;
    for (name, alg, blocks) in cases {
        let dim = alg.dim();
        for gram in [DMatrix::identity(dim, dim), second_metric(name, dim)] {
            let staged = build(alg.clone(), &blocks, gram);
            for i in 0..dim {
                for j in 0..dim {
                    let u = AlgVector::basis(dim, i);
                    let v = AlgVector::basis(dim, j);
                    let direct = alg.bracket(&u, &v).unwrap();
                    let assembled = staged.bracket_by_stages(&u, &v).unwrap();
                    worst = worst.max((direct.coords - assembled.coords).amax());
                }
            }
        }
    }
    let elapsed = start.elapsed().as_secs_f64();
    assert!(worst <= 1e-12, "max residual {worst:.3e}");
    assert!(elapsed < 1.0, "took {elapsed:.3} s");
    println!(
        "acceptance 01 PASS bracket-by-stages equivalence: max residual {worst:.3e} <= 1e-12, {elapsed:.3} s < 1 s"
    );
}

#[test]
fn c02_printed_expansions() {
    let mut worst: f64 = 0.0;
    for (name, alg) in [
        ("h3", algebra::heisenberg()),
        ("se2", algebra::se2()),
    ] {
        let dim = alg.dim();
        for gram in [DMatrix::identity(dim, dim), second_metric(name, dim)] {
            let staged = build(alg.clone(), &[1, 2], gram);
            for i in 0..dim {
                for j in 0..dim {
                    let u = AlgVector::basis(dim, i);
                    let v = AlgVector::basis(dim, j);
                    let two = staged.expand_two_stage(&u, &v).unwrap();
                    let asm = staged.bracket_by_stages(&u, &v).unwrap();
                    worst = worst.max((two.coords - asm.coords).amax());
                }
            }
        }
    }
    for (name, alg, blocks) in [
        ("h3", algebra::heisenberg(), vec![1usize, 1, 1]),
        ("ut4", algebra::upper_triangular_4(), vec![3, 2, 1]),
    ] {
        let dim = alg.dim();
        for gram in [DMatrix::identity(dim, dim), second_metric(name, dim)] {
            let staged = build(alg.clone(), &blocks, gram);
            for i in 0..dim {
                for j in 0..dim {
                    let u = AlgVector::basis(dim, i);
                    let v = AlgVector::basis(dim, j);
                    let three = staged.expand_three_stage(&u, &v).unwrap();
                    let asm = staged.bracket_by_stages(&u, &v).unwrap();
                    worst = worst.max((three.coords - asm.coords).amax());
                }
            }
        }
    }
    assert!(worst <= 1e-12, "max residual {worst:.3e}");
    println!(
        "acceptance 02 PASS printed expansions: max |expansion - assembly| {worst:.3e} <= 1e-12"
    );
}

#[test]
fn c03_rigid_body_conservation() {
    let start = Instant::now();
    let staged = build(algebra::so3(), &[3], DMatrix::identity(3, 3));
    let lag = QuadraticLagrangian::diagonal(&[1.0, 2.0, 3.0]).unwrap();
    let v0 = AlgVector::from_slice(&[0.3, 1.0, -0.7]);
    let traj = integrate_ep(&staged, &lag, &v0, 10.0, 1e-3).unwrap();
    let e0 = lag.energy(&v0);
    let m0 = (lag.mass() * &v0.coords).norm();
    let mut drift_e: f64 = 0.0;
    let mut drift_m: f64 = 0.0;
    for y in &traj.states {
        let v = AlgVector { coords: y.clone() };
        drift_e = drift_e.max((lag.energy(&v) - e0).abs() / e0.abs());
        drift_m = drift_m.max(((lag.mass() * y).norm() - m0).abs() / m0);
    }
    assert!(drift_e <= 1e-8, "energy drift {drift_e:.3e}");
    assert!(drift_m <= 1e-8, "momentum drift {drift_m:.3e}");

    // steady rotations about each principal axis
    let mut steady: f64 = 0.0;
    for k in 0..3 {
        let v = AlgVector {
            coords: 2.5 * AlgVector::basis(3, k).coords,
        };
        steady = steady.max(ep_rhs(&staged, &lag, &v).unwrap().coords.norm());
    }
    assert!(steady <= 1e-12, "steady-rotation rate {steady:.3e}");
    let elapsed = start.elapsed().as_secs_f64();
    assert!(elapsed < 5.0, "took {elapsed:.3} s");
    println!(
        "acceptance 03 PASS rigid body: energy drift {drift_e:.3e} <= 1e-8, momentum drift {drift_m:.3e} <= 1e-8, steady rotations {steady:.3e} <= 1e-12, {elapsed:.3} s < 5 s"
    );
}

#[test]
fn c04_abelian_momentum_constants() {
    // direct product with split quadratic Lagrangian; the abelian factor's
    // momentum components are constant along the flow
    let staged = build(algebra::so3_x_r2(), &[3, 2], DMatrix::identity(5, 5));
    let lag = QuadraticLagrangian::diagonal(&[1.0, 2.0, 3.0, 4.0, 5.0]).unwrap();
    let v0 = AlgVector::from_slice(&[0.3, 1.0, -0.7, 0.8, -1.2]);
    let traj = integrate_ep(&staged, &lag, &v0, 10.0, 1e-3).unwrap();
    let beta0 = lag.mass() * &v0.coords;
    let mut drift: f64 = 0.0;
    for y in &traj.states {
        let beta = lag.mass() * y;
        for k in 3..5 {
            drift = drift.max((beta[k] - beta0[k]).abs());
        }
    }
    assert!(drift <= 1e-10, "abelian momentum drift {drift:.3e}");
    println!(
        "acceptance 04 PASS constants of motion: abelian-block momentum drift {drift:.3e} <= 1e-10 over T = 10"
    );
}

#[test]
fn c05_edp_consistency_and_energy() {
    // unconstrained residual at 100 random states per shipped algebra
    let cases: Vec<(LieAlgebraSpec, Vec<usize>)> = vec![
        (algebra::heisenberg(), vec![1, 1, 1]),
        (algebra::so3(), vec![3]),
        (algebra::se2(), vec![1, 2]),
        (algebra::upper_triangular_4(), vec![3, 2, 1]),
        (algebra::filiform_4(), vec![1, 1, 1, 1]),
        (algebra::so3_x_r2(), vec![3, 2]),
    ];
    let mut rng = ChaCha8Rng::seed_from_u64(123);
    let mut worst: f64 = 0.0;
    for (alg, blocks) in cases {
        let dim = alg.dim();
        let staged = build(alg, &blocks, DMatrix::identity(dim, dim));
        let diag: Vec<f64> = (0..dim).map(|i| 1.0 + 0.5 * i as f64).collect();
        let lag = QuadraticLagrangian::diagonal(&diag).unwrap();
        let full = ConstraintSubspace::full(dim);
        for _ in 0..100 {
            let v = AlgVector::from_slice(
                &(0..dim).map(|_| rng.random_range(-2.0..2.0)).collect::<Vec<_>>(),
            );
            let vd = ep_rhs(&staged, &lag, &v).unwrap();
            let res = edp_residual(&staged, &lag, &v, &vd, &full).unwrap();
            worst = worst.max(res.amax());
        }
    }
    assert!(worst <= 1e-12, "unconstrained residual {worst:.3e}");

    // constrained flows conserve the Lagrangian value
    let mut worst_energy: f64 = 0.0;
    {
        let staged = build(algebra::heisenberg(), &[1, 1, 1], DMatrix::identity(3, 3));
        let lag = QuadraticLagrangian::diagonal(&[1.0, 2.0, 3.0]).unwrap();
        let sub =
            ConstraintSubspace::from_basis(DMatrix::from_column_slice(3, 1, &[1.0, 1.0, 0.0]))
                .unwrap();
        let traj = integrate_edp(&staged, &lag, &sub, &DVector::from_column_slice(&[1.5]), 10.0, 1e-3)
            .unwrap();
        let e0 = lag.energy(&AlgVector {
            coords: sub.basis() * &traj.states[0],
        });
        for y in &traj.states {
            let e = lag.energy(&AlgVector {
                coords: sub.basis() * y,
            });
            worst_energy = worst_energy.max((e - e0).abs() / e0.abs());
        }
    }
    {
        let staged = build(algebra::se2(), &[1, 2], DMatrix::identity(3, 3));
        let lag = QuadraticLagrangian::diagonal(&[2.0, 1.0, 1.5]).unwrap();
        let sub = ConstraintSubspace::from_basis(DMatrix::from_column_slice(
            3,
            2,
            &[1.0, 1.0, 0.0, 0.0, 0.0, 1.0],
        ))
        .unwrap();
        let traj = integrate_edp(
            &staged,
            &lag,
            &sub,
            &DVector::from_column_slice(&[0.8, -0.5]),
            10.0,
            1e-3,
        )
        .unwrap();
        let e0 = lag.energy(&AlgVector {
            coords: sub.basis() * &traj.states[0],
        });
        for y in &traj.states {
            let e = lag.energy(&AlgVector {
                coords: sub.basis() * y,
            });
            worst_energy = worst_energy.max((e - e0).abs() / e0.abs());
        }
    }
    assert!(worst_energy <= 1e-8, "constrained energy drift {worst_energy:.3e}");
    println!(
        "acceptance 05 PASS constrained consistency: residual {worst:.3e} <= 1e-12, constrained energy drift {worst_energy:.3e} <= 1e-8"
    );
}

#[test]
fn c06_disk_forms_and_curvature_vanish() {
    let p = DiskParams::default();
    let sys = build_disk_system(&p).unwrap();
    let mut worst_form: f64 = 0.0;
    let one = DVector::from_column_slice(&[1.0]);
    for q in 1..3 {
        let mut w = DVector::zeros(3);
        w[q] = 1.0;
        worst_form = worst_form.max(sys.staged.b_form(1, &one, &w).unwrap().amax());
    }
    worst_form = worst_form.max(sys.staged.a_form(1, &one, &one).unwrap().amax());
    assert!(worst_form <= 1e-14, "disk a/b forms {worst_form:.3e}");

    let mut rng = ChaCha8Rng::seed_from_u64(321);
    let mut worst_curv: f64 = 0.0;
    for _ in 0..50 {
        let x = DVector::from_column_slice(&[
            rng.random_range(0.2..1.3),
            rng.random_range(-3.0..3.0),
        ]);
        let xd = DVector::from_column_slice(&[
            rng.random_range(-2.0..2.0),
            rng.random_range(-2.0..2.0),
        ]);
        let dx = DVector::from_column_slice(&[
            rng.random_range(-2.0..2.0),
            rng.random_range(-2.0..2.0),
        ]);
        worst_curv = worst_curv.max(
            curvature_local(sys.staged.algebra(), &sys.conn, &x, &xd, &dx).amax(),
        );
    }
    assert!(worst_curv <= 1e-12, "disk curvature {worst_curv:.3e}");
    println!(
        "acceptance 06 PASS disk structure: a/b forms {worst_form:.3e} <= 1e-14, curvature {worst_curv:.3e} <= 1e-12"
    );
}

#[test]
fn c07_disk_cross_implementation() {
    let mut rng = ChaCha8Rng::seed_from_u64(777);
    let mut worst: f64 = 0.0;
    for e in [0.0, 0.1] {
        let p = DiskParams {
            e,
            ..DiskParams::default()
        };
        for blocks in [vec![1usize, 2], vec![3usize]] {
            let sys = build_disk_system_with_blocks(&p, &blocks).unwrap();
            for _ in 0..100 {
                let st = DiskState::admissible(
                    rng.random_range(0.3..1.2),
                    rng.random_range(-3.0..3.0),
                    rng.random_range(-2.0..2.0),
                    rng.random_range(-2.0..2.0),
                    rng.random_range(-5.0..5.0),
                    p.r,
                );
                let explicit = disk_rhs_explicit(&p, &st).unwrap();
                let local = LocalState {
                    x: DVector::from_column_slice(&[st.theta, st.phi]),
                    xdot: DVector::from_column_slice(&[st.thetadot, st.phidot]),
                    c: DVector::from_column_slice(&[st.eta01]),
                    t: 0.0,
                };
                let (xddot, cdot) =
                    ldp_rhs(&sys.staged, &sys.conn, &sys.lag, &sys.sfield, &local).unwrap();
                worst = worst.max((xddot[0] - explicit.thetadot).abs());
                worst = worst.max((xddot[1] - explicit.phidot).abs());
                worst = worst.max((cdot[0] - explicit.eta01).abs());
            }
        }
    }
    assert!(worst <= 1e-9, "cross-implementation gap {worst:.3e}");
    println!(
        "acceptance 07 PASS disk cross-implementation: explicit vs assembled (two-stage and one-stage) {worst:.3e} <= 1e-9"
    );
}

#[test]
fn c08_disk_oracle_end_to_end() {
    let start = Instant::now();
    let mut report = Vec::new();
    for e in [0.0, 0.1] {
        let p = DiskParams {
            e,
            ..DiskParams::default()
        };
        let st0 = DiskState::admissible(1.0, 0.5, 0.3, 0.5, 4.0, p.r);
        let red = integrate_disk_reduced(&p, &st0, 1.0, 1e-4).unwrap();
        let orc = integrate_disk_oracle(&p, &FullDiskState::from_reduced(&st0), 1.0, 1e-4).unwrap();
        assert_eq!(red.states.len(), orc.states.len());
        let e0 = disk_energy(&p, &st0);
        let mut max_dev: f64 = 0.0;
        let mut max_res: f64 = 0.0;
        let mut max_energy: f64 = 0.0;
        for (yr, yo) in red.states.iter().zip(orc.states.iter()) {
            let sr = DiskState::from_flat(yr);
            let fo = FullDiskState::from_flat(yo);
            let so = fo.reduced();
            for (a, b) in [
                (sr.theta, so.theta),
                (sr.phi, so.phi),
                (sr.thetadot, so.thetadot),
                (sr.phidot, so.phidot),
                (sr.eta01, so.eta01),
                (sr.eta12[0], so.eta12[0]),
                (sr.eta12[1], so.eta12[1]),
            ] {
                max_dev = max_dev.max((a - b).abs());
            }
            max_res = max_res.max(constraint_residual(&p, &sr));
            max_res = max_res.max(full_constraint_residual(&p, &fo));
            max_energy = max_energy.max((disk_energy(&p, &sr) - e0).abs() / e0.abs());
        }
        assert!(max_dev <= 1e-6, "e = {e}: deviation {max_dev:.3e}");
        assert!(max_res <= 1e-8, "e = {e}: constraint residual {max_res:.3e}");
        assert!(max_energy <= 1e-6, "e = {e}: energy drift {max_energy:.3e}");
        report.push(format!(
            "e = {e}: dev {max_dev:.3e}, residual {max_res:.3e}, energy {max_energy:.3e}"
        ));
    }
    let elapsed = start.elapsed().as_secs_f64();
    assert!(elapsed < 30.0, "took {elapsed:.3} s");
    println!(
        "acceptance 08 PASS disk oracle end-to-end: {}; {elapsed:.3} s < 30 s",
        report.join("; ")
    );
}

#[test]
fn c09_variational_consistency() {
    let staged = build(algebra::so3(), &[3], DMatrix::identity(3, 3));
    let lag = QuadraticLagrangian::diagonal(&[1.0, 2.0, 3.0]).unwrap();
    let v0 = AlgVector::from_slice(&[0.3, 1.0, -0.7]);
    let t_end = 2.0;
    let w = DVector::from_column_slice(&[0.4, -0.9, 0.6]);

    // trapezoid quadrature of <beta, omega_dot + [v, omega]> along the
    // discrete trajectory, with omega(t) = sin(pi t / T) w vanishing at the
    // endpoints; exact flows make the integral zero, so the quadrature decays
    // at the trapezoid rate O(h^2)
    let action_variation = |h: f64| -> f64 {
        let traj = integrate_ep(&staged, &lag, &v0, t_end, h).unwrap();
        let n = traj.states.len();
        let mut total = 0.0;
        for (k, y) in traj.states.iter().enumerate() {
            let t = traj.times[k];
            let s = (std::f64::consts::PI * t / t_end).sin();
            let sd = (std::f64::consts::PI / t_end) * (std::f64::consts::PI * t / t_end).cos();
            let omega = AlgVector { coords: s * &w };
            let v = AlgVector { coords: y.clone() };
            let beta = lag.mass() * y;
            let delta = staged.bracket_by_stages(&v, &omega).unwrap().coords + sd * &w;
            let weight = if k == 0 || k == n - 1 { 0.5 } else { 1.0 };
            total += weight * h * beta.dot(&delta);
        }
        total.abs()
    };
    let ratios = [
        action_variation(0.02) / action_variation(0.01),
        action_variation(0.01) / action_variation(0.005),
    ];
    for r in ratios {
        assert!((3.0..=5.0).contains(&r), "halving ratio {r:.3}");
    }
    println!(
        "acceptance 09 PASS variational consistency: halving ratios {:.3}, {:.3} in [3, 5]",
        ratios[0], ratios[1]
    );
}

#[test]
fn c10_rk4_order_richardson() {
    let staged = build(algebra::so3(), &[3], DMatrix::identity(3, 3));
    let lag = QuadraticLagrangian::diagonal(&[1.0, 2.0, 3.0]).unwrap();
    let v0 = AlgVector::from_slice(&[0.3, 1.0, -0.7]);
    let drift = |h: f64| -> f64 {
        let traj = integrate_ep(&staged, &lag, &v0, 5.0, h).unwrap();
        let e0 = lag.energy(&v0);
        traj.states
            .iter()
            .map(|y| (lag.energy(&AlgVector { coords: y.clone() }) - e0).abs() / e0.abs())
            .fold(0.0, f64::max)
    };
    let ratio = drift(0.02) / drift(0.01);
    assert!((12.0..=20.0).contains(&ratio), "Richardson ratio {ratio:.3}");
    println!("acceptance 10 PASS rk4 order: energy-drift Richardson ratio {ratio:.3} in [12, 20]");
}
