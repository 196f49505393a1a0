//! Closed-loop integration and run monitors.

mod report;
mod trajectory;

use std::time::Instant;

use serde::Serialize;
use thiserror::Error;

use crate::barrier::{BarrierError, PsiChain};
use crate::control::{ControlError, LeaderController};
use crate::network::{Dynamics, NetworkError};
use crate::stl::switching_schedule_from_deadlines;

pub use report::{
    invariance_tol, run_scenario, run_scenario_with, Convergence, PredicateViolation, RobustCheck,
    RunOptions, RunOutcome, RunReport, SubtaskVerdict, WindowReport,
};
pub use trajectory::{Trajectory, CSV_VERSION};

#[derive(Debug, Error)]
pub enum SimError {
    #[error("step size must be positive and finite, got {0}")]
    Step(f64),
    #[error("non-finite state at t = {t}: x = {state:?}, u = {u}")]
    NonFinite { t: f64, state: Vec<f64>, u: f64 },
    #[error("initial state has dimension {got}, expected {expected}")]
    Dimension { expected: usize, got: usize },
    #[error("control failed at t = {t}: {source}")]
    Control { t: f64, source: ControlError },
    #[error(transparent)]
    Network(#[from] NetworkError),
    #[error(transparent)]
    Barrier(#[from] BarrierError),
    #[error("i/o: {0}")]
    Io(String),
    #[error("csv: {0}")]
    Format(String),
}

impl SimError {
    fn io(e: std::io::Error) -> Self {
        SimError::Io(e.to_string())
    }

    fn csv(e: csv::Error) -> Self {
        SimError::Format(e.to_string())
    }
}

/// A grid point where the input had no effect on an unmet constraint.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SingularityEvent {
    pub t: f64,
    pub a_u: f64,
    pub b: f64,
}

/// A switching instant moved onto the grid.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SwitchSnap {
    pub instant: f64,
    pub snapped: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct StepTiming {
    pub evaluations: usize,
    pub mean_us: f64,
    pub max_us: f64,
}

#[derive(Debug, Clone)]
pub struct Integration {
    pub trajectory: Trajectory,
    /// Chain with switching instants moved onto the grid.
    pub chain: PsiChain,
    pub singularities: Vec<SingularityEvent>,
    pub snaps: Vec<SwitchSnap>,
    pub timing: StepTiming,
    /// Largest `|grad Psi . residual drift|` seen along the run.
    pub max_residual: f64,
}

/// Moves every deadline to the nearest grid point.
fn snap_chain(chain: &PsiChain, t0: f64, dt: f64) -> (PsiChain, Vec<SwitchSnap>) {
    let mut chain = chain.clone();
    let snap = |d: f64| t0 + ((d - t0) / dt).round() * dt;
    let mut snaps: Vec<SwitchSnap> = Vec::new();
    for op in &mut chain.barrier.operators {
        let s = snap(op.deadline);
        if s != op.deadline && !snaps.iter().any(|x| x.instant == op.deadline) {
            snaps.push(SwitchSnap {
                instant: op.deadline,
                snapped: s,
            });
        }
        op.deadline = s;
    }
    let deadlines: Vec<f64> = chain.barrier.operators.iter().map(|o| o.deadline).collect();
    chain.barrier.schedule = switching_schedule_from_deadlines(&deadlines, t0);
    (chain, snaps)
}

fn rk4_step(dynamics: &Dynamics, x: &[f64], u: f64, dt: f64) -> Result<Vec<f64>, NetworkError> {
    let axpy =
        |a: &[f64], s: f64, b: &[f64]| a.iter().zip(b).map(|(p, q)| p + s * q).collect::<Vec<_>>();
    let k1 = dynamics.closed_loop(x, u)?;
    let k2 = dynamics.closed_loop(&axpy(x, 0.5 * dt, &k1), u)?;
    let k3 = dynamics.closed_loop(&axpy(x, 0.5 * dt, &k2), u)?;
    let k4 = dynamics.closed_loop(&axpy(x, dt, &k3), u)?;
    Ok((0..x.len())
        .map(|i| x[i] + dt / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]))
        .collect())
}

/// Integrates the closed loop with classical RK4 on `[t0, horizon]`, holding
/// the input constant within each step. Switching instants are snapped to
/// the grid; singular constraint rows are logged and answered with `u = 0`.
pub fn integrate(
    controller: &LeaderController,
    x0: &[f64],
    t0: f64,
    horizon: f64,
    dt: f64,
) -> Result<Integration, SimError> {
    if !(dt > 0.0 && dt.is_finite()) {
        return Err(SimError::Step(dt));
    }
    let dynamics = &controller.chain.dynamics;
    if x0.len() != dynamics.dim() {
        return Err(SimError::Dimension {
            expected: dynamics.dim(),
            got: x0.len(),
        });
    }
    let (chain, snaps) = snap_chain(&controller.chain, t0, dt);
    let params = controller.params;
    let steps = (((horizon - t0) / dt) - 1e-9).ceil().max(0.0) as usize;
    let switches: Vec<f64> = chain.barrier.schedule.instants[1..].to_vec();
    let end = chain.barrier.end_time();

    let mut traj = Trajectory::new(dynamics.layout(), t0, dt);
    let mut singularities = Vec::new();
    let mut total_us = 0.0;
    let mut max_us: f64 = 0.0;
    let mut max_residual: f64 = 0.0;
    let mut x = x0.to_vec();
    for k in 0..=steps {
        let t = t0 + k as f64 * dt;
        let (mut u, mut eps, mut h, mut psi) = (0.0, 0.0, f64::NAN, f64::NAN);
        if t < end {
            let started = Instant::now();
            let out = crate::control::leader_control(&params, &chain, &x, t);
            let us = started.elapsed().as_secs_f64() * 1e6;
            total_us += us;
            max_us = max_us.max(us);
            match out {
                Ok(o) => {
                    (u, eps, h, psi) = (o.u, o.eps, o.h, o.psi);
                    max_residual = max_residual.max(o.terms.residual_drift.abs());
                }
                Err(ControlError::Singular { a_u, b, t }) => {
                    singularities.push(SingularityEvent { t, a_u, b });
                    let ev = chain.evaluate(&x, t)?;
                    (h, psi) = (ev.h, ev.psi);
                }
                Err(source) => return Err(SimError::Control { t, source }),
            }
        }
        traj.states.push(x.clone());
        traj.u.push(u);
        traj.eps.push(eps);
        traj.h.push(h);
        traj.psi1.push(psi);
        traj.switch
            .push(switches.iter().any(|&s| (s - t).abs() < 0.5 * dt));
        if k == steps {
            break;
        }
        let next = rk4_step(dynamics, &x, u, dt)?;
        if next.iter().any(|v| !v.is_finite()) {
            return Err(SimError::NonFinite {
                t: t + dt,
                state: next,
                u,
            });
        }
        x = next;
    }
    let evaluations = traj.h.iter().filter(|h| !h.is_nan()).count().max(1);
    Ok(Integration {
        trajectory: traj,
        chain,
        singularities,
        snaps,
        timing: StepTiming {
            evaluations,
            mean_us: total_us / evaluations as f64,
            max_us,
        },
        max_residual,
    })
}
