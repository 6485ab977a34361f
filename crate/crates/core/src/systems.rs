//! Built-in reduced systems, addressable by name.

use nalgebra::{DMatrix, DVector};

use crate::bundle::{BundleSystem, ConnectionField, ConstraintField, LocalState, ReducedLagrangianLocal};
use crate::disk::{build_disk_system, DiskParams};
use crate::error::{Error, Result};
use crate::stages::{InvariantMetric, StageChain, StagedStructure};
use crate::algebra;

/// Names of the registered systems.
pub const BUILTIN_SYSTEMS: &[&str] = &["disk", "decoupled-test"];

/// Look up a built-in bundle system.
pub fn builtin(name: &str) -> Result<BundleSystem> {
    match name {
        "disk" => build_disk_system(&DiskParams::default()),
        "decoupled-test" => decoupled_test(),
        other => Err(Error::Structural(format!(
            "unknown system '{other}'; built-ins: {BUILTIN_SYSTEMS:?}"
        ))),
    }
}

/// Shape-independent kinetic matrix, flat connection, no potential: the
/// vertical equations are the pure algebra flow, the horizontal ones free
/// motion on the shape space.
fn decoupled_test() -> Result<BundleSystem> {
    let staged = StagedStructure::build(
        algebra::so3_x_r2(),
        StageChain::new(vec![3, 2])?,
        InvariantMetric::identity(5),
    )?;
    let conn = ConnectionField::flat(2, 5);
    let kinetic = {
        let mut k = DMatrix::zeros(7, 7);
        let diag = [2.0, 3.0, 1.0, 2.0, 3.0, 4.0, 5.0];
        for (i, d) in diag.iter().enumerate() {
            k[(i, i)] = *d;
        }
        k
    };
    let lag = ReducedLagrangianLocal::new(
        2,
        5,
        Box::new(move |_| kinetic.clone()),
        Box::new(|_| 0.0),
    )
    .with_kinetic_partial(Box::new(|_, _| DMatrix::zeros(7, 7)))
    .with_potential_partial(Box::new(|_, _| 0.0));
    let sfield = ConstraintField::full(5);
    let initial = LocalState {
        x: DVector::from_column_slice(&[0.0, 0.0]),
        xdot: DVector::from_column_slice(&[0.4, -0.2]),
        c: DVector::from_column_slice(&[0.3, -1.1, 0.8, 0.5, -0.7]),
        t: 0.0,
    };
    Ok(BundleSystem {
        name: "decoupled-test".into(),
        staged,
        conn,
        lag,
        sfield,
        initial,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bundle::ldp_rhs;
    use crate::dynamics::{ep_rhs, QuadraticLagrangian};
    use crate::AlgVector;

    #[test]
    fn unknown_name_rejected() {
        assert!(builtin("no-such-system").is_err());
    }

    #[test]
    fn decoupled_splits_into_free_shape_and_algebra_flow() {
        let sys = builtin("decoupled-test").unwrap();
        let state = LocalState {
            x: DVector::from_column_slice(&[0.3, -0.6]),
            xdot: DVector::from_column_slice(&[1.2, 0.7]),
            c: DVector::from_column_slice(&[0.9, -0.4, 1.5, 0.2, -1.0]),
            t: 0.0,
        };
        let (xddot, cdot) = ldp_rhs(&sys.staged, &sys.conn, &sys.lag, &sys.sfield, &state).unwrap();
        assert!(xddot.amax() <= 1e-10);
        let lag = QuadraticLagrangian::diagonal(&[1.0, 2.0, 3.0, 4.0, 5.0]).unwrap();
        let v = AlgVector {
            coords: state.c.clone(),
        };
        let expect = ep_rhs(&sys.staged, &lag, &v).unwrap();
        assert!((cdot - expect.coords).amax() <= 1e-10);
    }
}
