//! Scenario runs and their monitors.

use std::fmt;

use serde::Serialize;

use super::{integrate, Integration, SingularityEvent, StepTiming, SwitchSnap, Trajectory};
use crate::barrier::{OperatorKind, PsiChain};
use crate::control::{fixed_time_bound, lemma_bound, Certificate, InfoMode, LeaderController};
use crate::error::Result;
use crate::network::{residual_delta_estimate, VisitedSampler};
use crate::scenario::Scenario;
use crate::stl::{evaluate, StlFormula, TemporalOp};

/// Knobs that override the scenario file.
#[derive(Debug, Clone, Default)]
pub struct RunOptions {
    pub dt: Option<f64>,
    pub x0: Option<Vec<f64>>,
    /// Fit the envelopes to this state instead of the run's initial state.
    pub envelope_state: Option<Vec<f64>>,
    pub delta: Option<f64>,
    pub seed: u64,
    pub auto_refine: Option<bool>,
    /// Samples for the residual estimate when no delta is given.
    pub delta_samples: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SubtaskVerdict {
    pub name: String,
    pub formula: String,
    pub satisfied: bool,
    pub error: Option<String>,
}

/// Barrier minimum over one interval of the switching schedule.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct WindowReport {
    pub start: f64,
    pub end: f64,
    pub active: Vec<String>,
    pub min_h: f64,
    pub min_h_at: f64,
}

/// Stretch of an operator's window where its predicate is false on the
/// grid (for `F`, the whole window when it is never true).
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PredicateViolation {
    pub subtask: String,
    pub operator: String,
    pub start: f64,
    pub end: f64,
    pub min_value: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Convergence {
    pub h0: f64,
    pub psi0: f64,
    /// First grid time with `h >= 0` when `h0 < 0`.
    pub first_nonneg: Option<f64>,
    /// First grid time after which `h >= -tol` holds for the rest of the run.
    pub settle: Option<f64>,
    /// Same two times for the terminal chain function.
    pub psi_first_nonneg: Option<f64>,
    pub psi_settle: Option<f64>,
    /// Bound without disturbance, `1/(alpha(1-g1)) + 1/(beta(g2-1))`.
    pub lemma_bound: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RobustCheck {
    /// `lambda_1^{-1}(-eps_max)` for second-order chains, `-eps_max` else.
    pub bound: f64,
    pub min_h: f64,
    pub holds: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunReport {
    pub name: String,
    pub mode: InfoMode,
    pub experimental: bool,
    pub dt: f64,
    pub refined: bool,
    pub steps: usize,
    pub verdicts: Vec<SubtaskVerdict>,
    pub all_satisfied: bool,
    pub windows: Vec<WindowReport>,
    pub invariance_tol: f64,
    pub min_h: f64,
    /// Grid stretches with `h < -tol`, as `(start, end, min)`.
    pub barrier_violations: Vec<(f64, f64, f64)>,
    pub predicate_violations: Vec<PredicateViolation>,
    pub convergence: Convergence,
    pub certificate: Option<Certificate>,
    pub delta_source: String,
    pub delta_observed: f64,
    pub robust: Option<RobustCheck>,
    pub feasibility_warning: Option<String>,
    pub singularities: Vec<SingularityEvent>,
    pub snaps: Vec<SwitchSnap>,
    pub timing: StepTiming,
    pub warnings: Vec<String>,
}

pub struct RunOutcome {
    pub report: RunReport,
    pub trajectory: Trajectory,
}

pub fn run_scenario(scenario: &Scenario) -> Result<RunOutcome> {
    run_scenario_with(scenario, &RunOptions::default())
}

pub fn run_scenario_with(scenario: &Scenario, opts: &RunOptions) -> Result<RunOutcome> {
    let x0 = opts.x0.clone().unwrap_or_else(|| scenario.x0.clone());
    let fit = opts.envelope_state.clone().unwrap_or_else(|| x0.clone());
    let controller = scenario.controller_for(&fit)?;
    let mut dt = opts.dt.unwrap_or(scenario.dt);
    let mut run = integrate(&controller, &x0, scenario.t0, scenario.horizon, dt)?;
    let mut tol = invariance_tol(&run.trajectory, dt);
    let mut refined = false;
    let auto_refine = opts.auto_refine.unwrap_or(scenario.auto_refine);
    let inside = run.trajectory.h.first().is_some_and(|h| *h >= 0.0);
    if auto_refine
        && scenario.params.mode == InfoMode::FullInfo
        && inside
        && min_finite(&run.trajectory.h) < -tol
    {
        dt /= 2.0;
        run = integrate(&controller, &x0, scenario.t0, scenario.horizon, dt)?;
        tol = invariance_tol(&run.trajectory, dt);
        refined = true;
    }
    let report = build_report(scenario, opts, &controller, &run, dt, tol, refined)?;
    Ok(RunOutcome {
        report,
        trajectory: run.trajectory,
    })
}

/// `10 dt^4 max(1, max |x|)`: numerical zero for the barrier monitors.
pub fn invariance_tol(traj: &Trajectory, dt: f64) -> f64 {
    let scale = traj
        .states
        .iter()
        .flatten()
        .fold(1.0f64, |m, v| m.max(v.abs()));
    10.0 * dt.powi(4) * scale
}

fn min_finite(v: &[f64]) -> f64 {
    v.iter()
        .copied()
        .filter(|x| x.is_finite())
        .fold(f64::INFINITY, f64::min)
}

fn build_report(
    scenario: &Scenario,
    opts: &RunOptions,
    controller: &LeaderController,
    run: &Integration,
    dt: f64,
    tol: f64,
    refined: bool,
) -> Result<RunReport> {
    let traj = &run.trajectory;
    let chain = &run.chain;
    let times: Vec<f64> = traj.times().collect();
    let mut warnings = Vec::new();
    if chain.barrier.experimental {
        warnings.push(
            "formula contains Until; its barrier is an experimental under-approximation".into(),
        );
    }
    for s in &run.snaps {
        warnings.push(format!(
            "switching instant {} snapped to grid time {}",
            s.instant, s.snapped
        ));
    }

    let signal = traj.signal();
    let verdicts: Vec<SubtaskVerdict> = scenario
        .subtasks
        .iter()
        .map(|st| {
            let res = evaluate(&st.formula, &signal, scenario.t0);
            SubtaskVerdict {
                name: st.name.clone(),
                formula: st.formula.to_string(),
                satisfied: res.as_ref().is_ok_and(|v| *v),
                error: res.err().map(|e| e.to_string()),
            }
        })
        .collect();
    let all_satisfied = verdicts.iter().all(|v| v.satisfied);

    let windows = window_minima(chain, traj, &times);
    let barrier_violations = runs_below(&traj.h, &times, -tol);
    let predicate_violations = predicate_windows(scenario, traj, &times);

    let psi_h: Vec<f64> = traj.psi1.clone();
    let h0 = traj.h.first().copied().unwrap_or(f64::NAN);
    let psi0 = psi_h.first().copied().unwrap_or(f64::NAN);
    let convergence = Convergence {
        h0,
        psi0,
        first_nonneg: first_nonneg(&traj.h, &times),
        settle: settle_time(&traj.h, &times, tol),
        psi_first_nonneg: first_nonneg(&psi_h, &times),
        psi_settle: settle_time(&psi_h, &times, tol),
        lemma_bound: lemma_bound(&scenario.params.gains),
    };

    // Disturbance bound for the certificate.
    let (delta, delta_source) = match (opts.delta.or(scenario.delta), scenario.params.mode) {
        (Some(d), _) => (Some(d), "given".to_string()),
        (None, InfoMode::FullInfo) => (Some(0.0), "full information".to_string()),
        (None, InfoMode::PartialInfo) => {
            let n = opts.delta_samples.unwrap_or(2000);
            let est = estimate_delta(chain, traj, opts.seed, n)?;
            (Some(est), format!("estimated from {n} samples"))
        }
    };
    let certificate = match (delta, scenario.params.gains.mu) {
        (Some(d), Some(_)) => Some(fixed_time_bound(&scenario.params, d)?),
        _ => None,
    };
    let feasibility_warning = certificate
        .as_ref()
        .and_then(|c| controller.feasibility_warning(c));
    let min_h = min_finite(&traj.h);
    let robust = certificate.as_ref().map(|c| {
        let bound = if chain.max_order() == 2 {
            chain.lambda.inverse(-c.eps_max)
        } else {
            -c.eps_max
        };
        RobustCheck {
            bound,
            min_h,
            holds: min_h >= bound - tol,
        }
    });

    Ok(RunReport {
        name: scenario.name.clone(),
        mode: scenario.params.mode,
        experimental: chain.barrier.experimental,
        dt,
        refined,
        steps: traj.len().saturating_sub(1),
        verdicts,
        all_satisfied,
        windows,
        invariance_tol: tol,
        min_h,
        barrier_violations,
        predicate_violations,
        convergence,
        certificate,
        delta_source,
        delta_observed: run.max_residual,
        robust,
        feasibility_warning,
        singularities: run.singularities.clone(),
        snaps: run.snaps.clone(),
        timing: run.timing,
        warnings,
    })
}

/// Residual estimate over the states the run visited while some operator
/// was active.
fn estimate_delta(chain: &PsiChain, traj: &Trajectory, seed: u64, n: usize) -> Result<f64> {
    let end = chain.barrier.end_time();
    let points = traj
        .states
        .iter()
        .enumerate()
        .map(|(k, x)| (x.clone(), traj.time(k)))
        .filter(|(_, t)| *t < end)
        .collect();
    let sampler = VisitedSampler { points, seed };
    Ok(residual_delta_estimate(
        &chain.dynamics,
        chain,
        &sampler,
        n,
    )?)
}

fn window_minima(chain: &PsiChain, traj: &Trajectory, times: &[f64]) -> Vec<WindowReport> {
    let inst = &chain.barrier.schedule.instants;
    let mut out = Vec::new();
    for l in 0..inst.len().saturating_sub(1) {
        let (start, end) = (inst[l], inst[l + 1]);
        let mut min_h = f64::INFINITY;
        let mut min_h_at = start;
        for (k, &t) in times.iter().enumerate() {
            if t >= start - 1e-9 && t < end - 1e-9 && traj.h[k] < min_h {
                min_h = traj.h[k];
                min_h_at = t;
            }
        }
        let active = chain.barrier.schedule.active[l]
            .iter()
            .map(|&j| {
                let op = &chain.barrier.operators[j];
                let k = match op.kind {
                    OperatorKind::Always => "G",
                    OperatorKind::Eventually => "F",
                };
                format!("{k}{}({})", op.interval, op.predicate)
            })
            .collect();
        out.push(WindowReport {
            start,
            end,
            active,
            min_h,
            min_h_at,
        });
    }
    out
}

fn runs_below(values: &[f64], times: &[f64], level: f64) -> Vec<(f64, f64, f64)> {
    let mut out = Vec::new();
    let mut cur: Option<(f64, f64, f64)> = None;
    for (&v, &t) in values.iter().zip(times) {
        if v < level {
            cur = Some(match cur {
                Some((s, _, m)) => (s, t, m.min(v)),
                None => (t, t, v),
            });
        } else if let Some(c) = cur.take() {
            out.push(c);
        }
    }
    out.extend(cur);
    out
}

fn first_nonneg(values: &[f64], times: &[f64]) -> Option<f64> {
    match values.first() {
        Some(v) if *v < 0.0 => values
            .iter()
            .zip(times)
            .find(|(v, _)| **v >= 0.0)
            .map(|(_, t)| *t),
        _ => None,
    }
}

fn settle_time(values: &[f64], times: &[f64], tol: f64) -> Option<f64> {
    let finite: Vec<(f64, f64)> = values
        .iter()
        .zip(times)
        .filter(|(v, _)| v.is_finite())
        .map(|(v, t)| (*v, *t))
        .collect();
    let last_bad = finite.iter().rposition(|(v, _)| *v < -tol);
    match last_bad {
        None => finite.first().map(|(_, t)| *t),
        Some(i) => finite.get(i + 1).map(|(_, t)| *t),
    }
}

/// Grid stretches where a subtask's predicates fail inside the operator
/// windows they must hold on.
fn predicate_windows(
    scenario: &Scenario,
    traj: &Trajectory,
    times: &[f64],
) -> Vec<PredicateViolation> {
    let mut out = Vec::new();
    let t0 = scenario.t0;
    for st in &scenario.subtasks {
        let (ops, _) = st.formula.conjuncts();
        for op in ops {
            let (label, a, b, sub, always): (String, f64, f64, &StlFormula, bool) = match op {
                TemporalOp::Always(i, s) => (format!("G{i}({s})"), i.a, i.b, s, true),
                TemporalOp::Eventually(i, s) => (format!("F{i}({s})"), i.a, i.b, s, false),
                TemporalOp::Until(i, l, r) => {
                    // Flag the left operand on [0, b] and the right one as F.
                    scan(
                        &mut out,
                        st,
                        traj,
                        times,
                        &format!("{l} U{i} {r}"),
                        t0,
                        t0 + i.b,
                        l,
                        true,
                    );
                    (format!("{l} U{i} {r}"), i.a, i.b, r, false)
                }
            };
            scan(
                &mut out,
                st,
                traj,
                times,
                &label,
                t0 + a,
                t0 + b,
                sub,
                always,
            );
        }
    }
    out
}

#[allow(clippy::too_many_arguments)]
fn scan(
    out: &mut Vec<PredicateViolation>,
    st: &crate::scenario::Subtask,
    traj: &Trajectory,
    times: &[f64],
    label: &str,
    lo: f64,
    hi: f64,
    sub: &StlFormula,
    always: bool,
) {
    let preds = sub.predicates();
    let in_window: Vec<usize> = (0..times.len())
        .filter(|&k| times[k] >= lo - 1e-9 && times[k] <= hi + 1e-9)
        .collect();
    let value = |k: usize| {
        preds
            .iter()
            .map(|p| p.value(&traj.states[k], &traj.layout))
            .fold(f64::INFINITY, f64::min)
    };
    if always {
        let vals: Vec<f64> = in_window.iter().map(|&k| value(k)).collect();
        let ts: Vec<f64> = in_window.iter().map(|&k| times[k]).collect();
        for (start, end, min_value) in runs_below(&vals, &ts, 0.0) {
            out.push(PredicateViolation {
                subtask: st.name.clone(),
                operator: label.to_string(),
                start,
                end,
                min_value,
            });
        }
    } else if !in_window.is_empty() && in_window.iter().all(|&k| value(k) < 0.0) {
        let min_value = in_window
            .iter()
            .map(|&k| value(k))
            .fold(f64::INFINITY, f64::min);
        out.push(PredicateViolation {
            subtask: st.name.clone(),
            operator: label.to_string(),
            start: lo,
            end: hi,
            min_value,
        });
    }
}

impl fmt::Display for RunReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(
            f,
            "scenario {} ({:?}, dt = {}{})",
            self.name,
            self.mode,
            self.dt,
            if self.refined { ", refined" } else { "" }
        )?;
        for v in &self.verdicts {
            let mark = if v.satisfied { "ok  " } else { "FAIL" };
            write!(f, "  [{mark}] {}: {}", v.name, v.formula)?;
            if let Some(e) = &v.error {
                write!(f, " ({e})")?;
            }
            writeln!(f)?;
        }
        if self.all_satisfied {
            writeln!(f, "all tasks satisfied")?;
        } else {
            writeln!(f, "some tasks violated")?;
        }
        for w in &self.windows {
            writeln!(
                f,
                "  window [{}, {}): min h = {:.6} at t = {}",
                w.start, w.end, w.min_h, w.min_h_at
            )?;
        }
        for p in &self.predicate_violations {
            writeln!(
                f,
                "  violation {} {} on [{}, {}], min {:.3e}",
                p.subtask, p.operator, p.start, p.end, p.min_value
            )?;
        }
        let c = &self.convergence;
        writeln!(f, "  h(x0, t0) = {:.4}, psi(x0, t0) = {:.4}", c.h0, c.psi0)?;
        if let Some(t) = c.first_nonneg {
            writeln!(f, "  h reached 0 at t = {t} (bound {:.4})", c.lemma_bound)?;
        }
        if let Some(cert) = &self.certificate {
            writeln!(
                f,
                "  certificate: delta = {} ({}), branch {:?}, T = {:.4}, eps_max = {:.4}",
                cert.delta, self.delta_source, cert.branch, cert.t_bound, cert.eps_max
            )?;
        }
        if let Some(r) = &self.robust {
            writeln!(
                f,
                "  robust bound h >= {:.4}: min h = {:.4} ({})",
                r.bound,
                r.min_h,
                if r.holds { "holds" } else { "violated" }
            )?;
        }
        if let Some(w) = &self.feasibility_warning {
            writeln!(f, "  warning: {w}")?;
        }
        if !self.singularities.is_empty() {
            writeln!(
                f,
                "  {} singular step(s), first at t = {}",
                self.singularities.len(),
                self.singularities[0].t
            )?;
        }
        for w in &self.warnings {
            writeln!(f, "  warning: {w}")?;
        }
        write!(
            f,
            "  controller: {:.1} us mean, {:.1} us max per step",
            self.timing.mean_us, self.timing.max_us
        )
    }
}
