//! Subcommand implementations and CSV emission.

use std::io::Write;
use std::path::Path;

use nalgebra::DVector;

use staged_reduction::algebra::{self, LieAlgebraSpec};
use staged_reduction::disk::{
    constraint_residual, disk_energy, disk_full_oracle_rhs, full_energy, integrate_disk_oracle,
    integrate_disk_reduced, DiskParams, DiskState, FullDiskState,
};
use staged_reduction::dynamics::{integrate_edp, integrate_ep, QuadraticLagrangian};
use staged_reduction::error::Error;
use staged_reduction::integrate::Trajectory;
use staged_reduction::stages::{validate_chain, InvariantMetric, StageChain, StagedStructure};
use staged_reduction::systems;
use staged_reduction::AlgVector;

use crate::config::{DiskSection, LoadedConfig};

/// 17 significant digits: enough to reproduce an f64 exactly.
fn fmt(x: f64) -> String {
    format!("{:.16e}", x)
}

fn write_csv(path: &Path, header: &[&str], rows: &[Vec<f64>]) -> Result<(), Error> {
    let file = std::fs::File::create(path)
        .map_err(|e| Error::Structural(format!("{}: {e}", path.display())))?;
    let mut out = std::io::BufWriter::new(file);
    let emit = |out: &mut dyn Write| -> std::io::Result<()> {
        writeln!(out, "{}", header.join(","))?;
        for row in rows {
            let cells: Vec<String> = std::iter::once(fmt(row[0]))
                .chain(row[1..].iter().map(|v| fmt(*v)))
                .collect();
            writeln!(out, "{}", cells.join(","))?;
        }
        Ok(())
    };
    emit(&mut out).map_err(|e| Error::Structural(format!("{}: {e}", path.display())))
}

/// Algebra, chain and metric for the config, falling back to the scenario's
/// built-in system when no [algebra] section is present.
fn resolve_system(
    loaded: &LoadedConfig,
) -> Result<(LieAlgebraSpec, StageChain, InvariantMetric), Error> {
    if loaded.config.algebra.is_some() {
        let alg = loaded.algebra()?;
        let chain = loaded.chain()?;
        let metric = loaded.metric(alg.dim())?;
        return Ok((alg, chain, metric));
    }
    match loaded.config.scenario.as_str() {
        "rigid-body" => Ok((
            algebra::so3(),
            StageChain::new(vec![3])?,
            InvariantMetric::identity(3),
        )),
        "disk" => Ok((
            algebra::abelian(3, "g"),
            StageChain::new(vec![1, 2])?,
            InvariantMetric::identity(3),
        )),
        "decoupled-test" => Ok((
            algebra::so3_x_r2(),
            StageChain::new(vec![3, 2])?,
            InvariantMetric::identity(5),
        )),
        other => Err(Error::Parse(format!(
            "scenario '{other}' needs an [algebra] section"
        ))),
    }
}

pub fn cmd_validate(loaded: &LoadedConfig) -> Result<(), Error> {
    let (alg, chain, metric) = resolve_system(loaded)?;
    let alg_report = alg.validate();
    println!(
        "algebra: antisymmetry residual {}, jacobi residual {}",
        fmt(alg_report.antisymmetry_residual),
        fmt(alg_report.jacobi_residual)
    );
    let chain_report = validate_chain(&alg, &chain)?;
    println!("chain: max ideal residual {}", fmt(chain_report.max_residual));
    if !alg_report.pass {
        return Err(Error::Validation("algebra structure constants fail".into()));
    }
    if !chain_report.pass {
        return Err(Error::Validation("chain is not a nested-ideal chain".into()));
    }

    let staged = StagedStructure::build(alg.clone(), chain, metric)?;
    let dim = alg.dim();
    let mut worst: f64 = 0.0;
    for i in 0..dim {
        for j in 0..dim {
            let u = AlgVector::basis(dim, i);
            let v = AlgVector::basis(dim, j);
            let direct = alg.bracket(&u, &v)?;
            let assembled = staged.bracket_by_stages(&u, &v)?;
            worst = worst.max((direct.coords - assembled.coords).amax());
        }
    }
    println!("bracket-by-stages: max equivalence residual {}", fmt(worst));
    if worst > 1e-12 {
        return Err(Error::Validation(format!(
            "bracket-by-stages equivalence fails: {worst:.3e}"
        )));
    }
    println!("validate: PASS");
    Ok(())
}

fn parse_vector(text: &str, dim: usize) -> Result<DVector<f64>, Error> {
    let parts: Result<Vec<f64>, _> = text.split(',').map(|p| p.trim().parse::<f64>()).collect();
    let parts = parts.map_err(|e| Error::Parse(format!("vector '{text}': {e}")))?;
    if parts.len() != dim {
        return Err(Error::Parse(format!(
            "vector '{text}' has {} entries, expected {dim}",
            parts.len()
        )));
    }
    Ok(DVector::from_column_slice(&parts))
}

pub fn cmd_bracket(loaded: &LoadedConfig, u: &str, v: &str) -> Result<(), Error> {
    let (alg, chain, metric) = resolve_system(loaded)?;
    let dim = alg.dim();
    let u = AlgVector {
        coords: parse_vector(u, dim)?,
    };
    let v = AlgVector {
        coords: parse_vector(v, dim)?,
    };
    let staged = StagedStructure::build(alg.clone(), chain, metric)?;
    let direct = alg.bracket(&u, &v)?;
    let assembled = staged.bracket_by_stages(&u, &v)?;
    let gap = (direct.coords.clone() - assembled.coords.clone()).amax();
    let show = |w: &DVector<f64>| {
        w.iter().map(|x| fmt(*x)).collect::<Vec<_>>().join(",")
    };
    println!("bracket          = {}", show(&direct.coords));
    println!("bracket_by_stage = {}", show(&assembled.coords));
    println!("max_gap          = {}", fmt(gap));
    Ok(())
}

pub struct SimulateOptions {
    pub scenario: Option<String>,
    pub h: Option<f64>,
    pub t_end: Option<f64>,
    pub out: Option<String>,
    pub oracle: bool,
    pub disk: DiskOverrides,
}

/// Disk parameters and initial data supplied on the command line; these win
/// over the config's `[disk]` section.
#[derive(Default, Clone, Copy)]
pub struct DiskOverrides {
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
    pub any: bool,
}

fn disk_params(section: Option<&DiskSection>, flags: &DiskOverrides) -> DiskParams {
    let d = DiskParams::default();
    let from_cfg = |cfg: fn(&DiskSection) -> Option<f64>, flag: Option<f64>, fallback: f64| {
        flag.or_else(|| section.and_then(cfg)).unwrap_or(fallback)
    };
    DiskParams {
        m: from_cfg(|s| s.m, flags.m, d.m),
        r: from_cfg(|s| s.r, flags.r, d.r),
        e: from_cfg(|s| s.e, flags.e, d.e),
        i1: from_cfg(|s| s.i1, flags.i1, d.i1),
        i3: from_cfg(|s| s.i3, flags.i3, d.i3),
        g: from_cfg(|s| s.g, flags.g, d.g),
    }
}

fn disk_initial(section: Option<&DiskSection>, flags: &DiskOverrides, r: f64) -> DiskState {
    let pick = |cfg: fn(&DiskSection) -> Option<f64>, flag: Option<f64>, fallback: f64| {
        flag.or_else(|| section.and_then(cfg)).unwrap_or(fallback)
    };
    DiskState::admissible(
        pick(|s| s.theta0, flags.theta0, 1.0),
        pick(|s| s.phi0, flags.phi0, 0.5),
        pick(|s| s.thetadot0, flags.thetadot0, 0.3),
        pick(|s| s.phidot0, flags.phidot0, 0.5),
        pick(|s| s.eta0, flags.eta0, 4.0),
        r,
    )
}

/// On abort: write the partial trajectory, report, and fail.
fn unwrap_trajectory(
    out: Result<Trajectory, Error>,
    write_partial: impl Fn(&Trajectory) -> Result<(), Error>,
) -> Result<Trajectory, Error> {
    match out {
        Ok(t) => Ok(t),
        Err(Error::IntegrationAbort { t, reason, partial }) => {
            write_partial(&partial)?;
            eprintln!("integration aborted at t = {t}: {reason} (partial trajectory written)");
            Err(Error::Validation(format!(
                "integration aborted at t = {t}: {reason}"
            )))
        }
        Err(e) => Err(e),
    }
}

fn ep_rows(
    traj: &Trajectory,
    lag: &QuadraticLagrangian,
    to_velocity: impl Fn(&DVector<f64>) -> DVector<f64>,
) -> Vec<Vec<f64>> {
    traj.times
        .iter()
        .zip(traj.states.iter())
        .map(|(t, y)| {
            let v = to_velocity(y);
            let beta = lag.mass() * &v;
            let energy = lag.energy(&AlgVector { coords: v.clone() });
            let mut row = vec![*t];
            row.extend(v.iter());
            row.extend(beta.iter());
            row.push(energy);
            row
        })
        .collect()
}

fn ep_header(dim: usize) -> Vec<String> {
    let mut h = vec!["t".to_string()];
    h.extend((0..dim).map(|k| format!("v_{k}")));
    h.extend((0..dim).map(|k| format!("beta_{k}")));
    h.push("energy".to_string());
    h
}

pub fn cmd_simulate(loaded: &LoadedConfig, opts: &SimulateOptions) -> Result<(), Error> {
    let scenario = opts
        .scenario
        .clone()
        .unwrap_or_else(|| loaded.config.scenario.clone());
    if opts.oracle && scenario != "disk" {
        return Err(Error::Parse(format!(
            "--oracle applies to the disk scenario only, not '{scenario}'"
        )));
    }
    if opts.disk.any && scenario != "disk" {
        return Err(Error::Parse(format!(
            "disk parameter flags apply to the disk scenario only, not '{scenario}'"
        )));
    }
    let out_path = opts
        .out
        .clone()
        .or_else(|| loaded.config.output.as_ref().map(|o| o.path.clone()))
        .unwrap_or_else(|| format!("{scenario}.csv"));
    let out_path = Path::new(&out_path).to_path_buf();

    match scenario.as_str() {
        "ep" | "rigid-body" => {
            let (alg, chain, metric) = resolve_system(loaded)?;
            let dim = alg.dim();
            let lag = if loaded.config.lagrangian.is_some() {
                loaded.lagrangian(dim)?
            } else if scenario == "rigid-body" {
                QuadraticLagrangian::diagonal(&[1.0, 2.0, 3.0])?
            } else {
                QuadraticLagrangian::identity(dim)
            };
            let v0 = match loaded.initial_v(dim)? {
                Some(v) => v,
                None if scenario == "rigid-body" => {
                    DVector::from_column_slice(&[0.3, 1.0, -0.7])
                }
                None => return Err(Error::Parse("ep scenario needs initial.v".into())),
            };
            let (h, t_end) = loaded.integrator(1e-3, 10.0);
            let (h, t_end) = (opts.h.unwrap_or(h), opts.t_end.unwrap_or(t_end));
            let staged = StagedStructure::build(alg, chain, metric)?;
            let header = ep_header(dim);
            let header_refs: Vec<&str> = header.iter().map(|s| s.as_str()).collect();
            let write = |traj: &Trajectory| {
                write_csv(&out_path, &header_refs, &ep_rows(traj, &lag, |y| y.clone()))
            };
            let traj = unwrap_trajectory(
                integrate_ep(&staged, &lag, &AlgVector { coords: v0.clone() }, t_end, h),
                write,
            )?;
            write(&traj)?;
            println!("wrote {} samples to {}", traj.times.len(), out_path.display());
            Ok(())
        }
        "edp" => {
            let (alg, chain, metric) = resolve_system(loaded)?;
            let dim = alg.dim();
            let lag = loaded.lagrangian(dim)?;
            let sub = loaded
                .constraint(dim, &chain)?
                .ok_or_else(|| Error::Parse("edp scenario needs a [constraint] section".into()))?;
            let c0 = loaded
                .initial_c(sub.rank())?
                .ok_or_else(|| Error::Parse("edp scenario needs initial.c".into()))?;
            let (h, t_end) = loaded.integrator(1e-3, 10.0);
            let (h, t_end) = (opts.h.unwrap_or(h), opts.t_end.unwrap_or(t_end));
            let staged = StagedStructure::build(alg, chain, metric)?;
            let dim = staged.dim();
            let header = ep_header(dim);
            let header_refs: Vec<&str> = header.iter().map(|s| s.as_str()).collect();
            let basis = sub.basis().clone();
            let write = |traj: &Trajectory| {
                write_csv(
                    &out_path,
                    &header_refs,
                    &ep_rows(traj, &lag, |c| &basis * c),
                )
            };
            let traj = unwrap_trajectory(integrate_edp(&staged, &lag, &sub, &c0, t_end, h), write)?;
            write(&traj)?;
            println!("wrote {} samples to {}", traj.times.len(), out_path.display());
            Ok(())
        }
        "decoupled-test" => {
            let sys = systems::builtin("decoupled-test")?;
            let (h, t_end) = loaded.integrator(1e-3, 1.0);
            let (h, t_end) = (opts.h.unwrap_or(h), opts.t_end.unwrap_or(t_end));
            let sd = 2;
            let ad = 5;
            let mut header = vec!["t".to_string()];
            header.extend((0..sd).map(|k| format!("x_{k}")));
            header.extend((0..sd).map(|k| format!("xdot_{k}")));
            header.extend((0..ad).map(|k| format!("xi_{k}")));
            header.push("energy".to_string());
            header.push("constraint_residual".to_string());
            let header_refs: Vec<&str> = header.iter().map(|s| s.as_str()).collect();
            let write = |traj: &Trajectory| {
                let rows: Vec<Vec<f64>> = traj
                    .times
                    .iter()
                    .zip(traj.states.iter())
                    .map(|(t, y)| {
                        let mut row = vec![*t];
                        row.extend(y.rows(0, 2 * sd).iter());
                        let x = y.rows(0, sd).into_owned();
                        let c = y.rows(2 * sd, ad).into_owned();
                        let xi = sys.sfield.eval(&x) * &c;
                        row.extend(xi.iter());
                        row.push(sys.energy_of(y));
                        row.push(0.0); // xi lies in the (full) subspace by construction
                        row
                    })
                    .collect();
                write_csv(&out_path, &header_refs, &rows)
            };
            let traj = unwrap_trajectory(sys.integrate(&sys.initial, t_end, h), write)?;
            write(&traj)?;
            println!("wrote {} samples to {}", traj.times.len(), out_path.display());
            Ok(())
        }
        "disk" => {
            let params = disk_params(loaded.config.disk.as_ref(), &opts.disk);
            params.validate()?;
            let st0 = disk_initial(loaded.config.disk.as_ref(), &opts.disk, params.r);
            let (h, t_end) = loaded.integrator(1e-3, 1.0);
            let (h, t_end) = (opts.h.unwrap_or(h), opts.t_end.unwrap_or(t_end));
            if opts.oracle {
                let full0 = FullDiskState::from_reduced(&st0);
                let header = [
                    "t", "theta", "phi", "psi", "x_0", "x_1", "thetadot", "phidot", "psidot",
                    "xdot_0", "xdot_1", "lambda_0", "lambda_1", "energy", "constraint_residual",
                ];
                let write = |traj: &Trajectory| {
                    let rows: Vec<Vec<f64>> = traj
                        .times
                        .iter()
                        .zip(traj.states.iter())
                        .map(|(t, y)| {
                            let st = FullDiskState::from_flat(y);
                            let lam = disk_full_oracle_rhs(&params, &st)
                                .map(|d| d.lambda)
                                .unwrap_or([f64::NAN, f64::NAN]);
                            let mut row = vec![*t];
                            row.extend(y.iter());
                            row.push(lam[0]);
                            row.push(lam[1]);
                            row.push(full_energy(&params, &st));
                            row.push(staged_reduction::disk::full_constraint_residual(&params, &st));
                            row
                        })
                        .collect();
                    write_csv(&out_path, &header, &rows)
                };
                let traj =
                    unwrap_trajectory(integrate_disk_oracle(&params, &full0, t_end, h), write)?;
                write(&traj)?;
                println!("wrote {} samples to {}", traj.times.len(), out_path.display());
            } else {
                let header = [
                    "t", "x_0", "x_1", "xdot_0", "xdot_1", "xi_0", "xi_1", "xi_2", "energy",
                    "constraint_residual",
                ];
                let write = |traj: &Trajectory| {
                    let rows: Vec<Vec<f64>> = traj
                        .times
                        .iter()
                        .zip(traj.states.iter())
                        .map(|(t, y)| {
                            let st = DiskState::from_flat(y);
                            vec![
                                *t,
                                st.theta,
                                st.phi,
                                st.thetadot,
                                st.phidot,
                                st.eta01,
                                st.eta12[0],
                                st.eta12[1],
                                disk_energy(&params, &st),
                                constraint_residual(&params, &st),
                            ]
                        })
                        .collect();
                    write_csv(&out_path, &header, &rows)
                };
                let traj =
                    unwrap_trajectory(integrate_disk_reduced(&params, &st0, t_end, h), write)?;
                write(&traj)?;
                println!("wrote {} samples to {}", traj.times.len(), out_path.display());
            }
            Ok(())
        }
        other => Err(Error::Parse(format!("unknown scenario '{other}'"))),
    }
}

pub struct CompareOptions {
    pub h: Option<f64>,
    pub t_end: Option<f64>,
    pub oracle_h: Option<f64>,
}

pub fn cmd_compare(loaded: &LoadedConfig, opts: &CompareOptions) -> Result<(), Error> {
    let scenario = loaded.config.scenario.clone();
    if scenario != "disk" {
        return Err(Error::Validation(format!(
            "scenario '{scenario}' has no oracle to compare against"
        )));
    }
    let (h, t_end) = loaded.integrator(1e-4, 1.0);
    let (h, t_end) = (opts.h.unwrap_or(h), opts.t_end.unwrap_or(t_end));
    if let Some(oh) = opts.oracle_h {
        if oh != h {
            return Err(Error::Parse(format!(
                "mismatched step sizes: reduced h = {h}, oracle h = {oh}; both paths must share h"
            )));
        }
    }
    let params = disk_params(loaded.config.disk.as_ref(), &DiskOverrides::default());
    params.validate()?;
    let st0 = disk_initial(loaded.config.disk.as_ref(), &DiskOverrides::default(), params.r);

    let red = integrate_disk_reduced(&params, &st0, t_end, h)?;
    let orc = integrate_disk_oracle(&params, &FullDiskState::from_reduced(&st0), t_end, h)?;

    let e0 = disk_energy(&params, &st0);
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
        max_res = max_res.max(constraint_residual(&params, &sr));
        max_res = max_res.max(staged_reduction::disk::full_constraint_residual(&params, &fo));
        max_energy = max_energy.max((disk_energy(&params, &sr) - e0).abs() / e0.abs().max(1e-300));
    }

    let tol = loaded.config.compare;
    let tol_dev = tol.and_then(|t| t.max_dev).unwrap_or(1e-6);
    let tol_res = tol.and_then(|t| t.max_constraint_residual).unwrap_or(1e-8);
    let tol_energy = tol.and_then(|t| t.max_energy_drift).unwrap_or(1e-6);
    let pass = max_dev <= tol_dev && max_res <= tol_res && max_energy <= tol_energy;
    println!("scenario = disk");
    println!("h = {}", fmt(h));
    println!("t_end = {}", fmt(t_end));
    println!("max_dev = {}", fmt(max_dev));
    println!("max_constraint_residual = {}", fmt(max_res));
    println!("max_energy_drift = {}", fmt(max_energy));
    println!("result = {}", if pass { "PASS" } else { "FAIL" });
    if pass {
        Ok(())
    } else {
        Err(Error::Validation(format!(
            "compare failed: dev {max_dev:.3e} (tol {tol_dev:.1e}), residual {max_res:.3e} (tol {tol_res:.1e}), energy {max_energy:.3e} (tol {tol_energy:.1e})"
        )))
    }
}

/// Map errors to the documented exit codes: 2 for usage and parse problems,
/// 1 for domain failures.
pub fn exit_code(e: &Error) -> i32 {
    match e {
        Error::Parse(_) | Error::Structural(_) => 2,
        _ => 1,
    }
}
