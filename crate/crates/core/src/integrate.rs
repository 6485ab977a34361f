//! Classical fixed-step fourth-order Runge-Kutta over flat state vectors.

use nalgebra::DVector;

use crate::error::{Error, Result};

/// A sampled trajectory: `states[k]` at `times[k]`, one sample per step.
#[derive(Debug, Clone)]
pub struct Trajectory {
    pub times: Vec<f64>,
    pub states: Vec<DVector<f64>>,
}

impl Trajectory {
    pub fn last(&self) -> (&f64, &DVector<f64>) {
        (self.times.last().unwrap(), self.states.last().unwrap())
    }
}

/// One RK4 step of size `h` from `(t, y)`.
pub fn rk4_step<F>(rhs: &F, t: f64, y: &DVector<f64>, h: f64) -> Result<DVector<f64>>
where
    F: Fn(f64, &DVector<f64>) -> Result<DVector<f64>>,
{
    let k1 = rhs(t, y)?;
    let k2 = rhs(t + 0.5 * h, &(y + 0.5 * h * &k1))?;
    let k3 = rhs(t + 0.5 * h, &(y + 0.5 * h * &k2))?;
    let k4 = rhs(t + h, &(y + h * &k3))?;
    Ok(y + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4))
}

/// Integrate from `t = 0` to `t_end` with fixed step `h`.
///
/// The number of steps is `round(t_end / h)`; the trajectory holds every
/// step including the initial state. A non-finite state or an error from the
/// right-hand side aborts with the last valid partial trajectory attached.
pub fn integrate_rk4<F>(rhs: F, state0: DVector<f64>, t_end: f64, h: f64) -> Result<Trajectory>
where
    F: Fn(f64, &DVector<f64>) -> Result<DVector<f64>>,
{
    if h.is_nan() || h <= 0.0 {
        return Err(Error::Structural("step size must be positive".into()));
    }
    if t_end.is_nan() || t_end <= 0.0 {
        return Err(Error::Structural("t_end must be positive".into()));
    }
    let steps = (t_end / h).round().max(1.0) as usize;
    let mut traj = Trajectory {
        times: Vec::with_capacity(steps + 1),
        states: Vec::with_capacity(steps + 1),
    };
    traj.times.push(0.0);
    traj.states.push(state0);

    for k in 0..steps {
        let t = k as f64 * h;
        let y = traj.states.last().unwrap();
        let next = match rk4_step(&rhs, t, y, h) {
            Ok(v) => v,
            Err(Error::IntegrationAbort { t, reason, partial }) => {
                // propagate inner aborts untouched
                return Err(Error::IntegrationAbort { t, reason, partial });
            }
            Err(e) => {
                return Err(Error::IntegrationAbort {
                    t,
                    reason: e.to_string(),
                    partial: Box::new(traj),
                });
            }
        };
        if next.iter().any(|x| !x.is_finite()) {
            return Err(Error::IntegrationAbort {
                t,
                reason: "non-finite state encountered".into(),
                partial: Box::new(traj),
            });
        }
        traj.times.push((k + 1) as f64 * h);
        traj.states.push(next);
    }
    Ok(traj)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn constant_rhs_constant_trajectory() {
        let traj = integrate_rk4(
            |_, y| Ok(DVector::zeros(y.len())),
            DVector::from_column_slice(&[1.0, -2.0]),
            1.0,
            0.1,
        )
        .unwrap();
        assert_eq!(traj.states.len(), 11);
        for s in &traj.states {
            assert_eq!(s.as_slice(), &[1.0, -2.0]);
        }
    }

    #[test]
    fn exponential_decay() {
        let traj = integrate_rk4(
            |_, y| Ok(-y.clone()),
            DVector::from_column_slice(&[1.0]),
            1.0,
            0.1,
        )
        .unwrap();
        let (_, last) = traj.last();
        assert!((last[0] - (-1.0f64).exp()).abs() < 1e-6);
    }

    #[test]
    fn abort_on_nonfinite() {
        let out = integrate_rk4(
            |t, y| {
                if t > 0.5 {
                    Ok(DVector::from_column_slice(&[f64::INFINITY]))
                } else {
                    Ok(y.clone())
                }
            },
            DVector::from_column_slice(&[1.0]),
            1.0,
            0.1,
        );
        match out {
            Err(Error::IntegrationAbort { t, partial, .. }) => {
                assert!(t > 0.4);
                assert!(!partial.states.is_empty());
            }
            _ => panic!("expected abort"),
        }
    }
}
