//! Time-varying composite barrier built from an STL conjunction.
//!
//! Each temporal operator contributes one barrier per predicate of its
//! operand, `h_j(x, t) = h_pred(x) - r - gamma_j(t)`, where `r >= 0` is an
//! optional robustness tightening and `gamma_j` a piecewise-linear envelope.
//! The active barriers are merged by a log-sum-exp smooth minimum and
//! dropped from the sum as their deadlines pass.

mod chain;

use thiserror::Error;

use crate::state::StateLayout;
use crate::stl::{
    check_variables, switching_schedule_from_deadlines, Interval, Predicate, StlError, StlFormula,
    SwitchSchedule, TemporalOp,
};

pub use chain::{build_psi_chain, ChainEval, ChainOrder, ClassK, PsiChain};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum BarrierError {
    #[error("smooth minimum of an empty set")]
    Empty,
    #[error("smoothing parameter eta must be positive and finite, got {0}")]
    Eta(f64),
    #[error("t = {t} is past the last switching instant {end}; no operator is active")]
    ScheduleExhausted { t: f64, end: f64 },
    #[error("state has dimension {got}, expected {expected}")]
    Dimension { expected: usize, got: usize },
    #[error("relative degree mismatch: {0}")]
    RelativeDegree(String),
    #[error("invalid parameter: {0}")]
    Parameter(String),
    #[error(transparent)]
    Stl(#[from] StlError),
}

/// Log-sum-exp smooth minimum `-(1/eta) ln sum exp(-eta v_j)`.
pub fn smooth_min(values: &[f64], eta: f64) -> Result<f64, BarrierError> {
    check_eta(eta)?;
    if values.is_empty() {
        return Err(BarrierError::Empty);
    }
    Ok(lse_min(values, eta).0)
}

/// Softmin weights `exp(-eta v_j) / sum_k exp(-eta v_k)`, the gradient of
/// [`smooth_min`] with respect to `values`.
pub fn softmin_weights(values: &[f64], eta: f64) -> Result<Vec<f64>, BarrierError> {
    check_eta(eta)?;
    if values.is_empty() {
        return Err(BarrierError::Empty);
    }
    Ok(lse_min(values, eta).1)
}

fn check_eta(eta: f64) -> Result<(), BarrierError> {
    if eta > 0.0 && eta.is_finite() {
        Ok(())
    } else {
        Err(BarrierError::Eta(eta))
    }
}

/// Shifted evaluation; `values` must be non-empty.
pub(crate) fn lse_min(values: &[f64], eta: f64) -> (f64, Vec<f64>) {
    let m = values.iter().copied().fold(f64::INFINITY, f64::min);
    let mut weights: Vec<f64> = values.iter().map(|v| (-eta * (v - m)).exp()).collect();
    let sum: f64 = weights.iter().sum();
    for w in &mut weights {
        *w /= sum;
    }
    (m - sum.ln() / eta, weights)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OperatorKind {
    Always,
    Eventually,
}

/// Piecewise-linear envelope: rises linearly from `gamma0 <= 0` at `t0` to
/// zero at `zero_at`, then stays at zero.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Envelope {
    pub t0: f64,
    pub gamma0: f64,
    pub zero_at: f64,
}

impl Envelope {
    pub fn value(&self, t: f64) -> f64 {
        if self.zero_at <= self.t0 || t >= self.zero_at {
            0.0
        } else {
            self.gamma0 * (self.zero_at - t) / (self.zero_at - self.t0)
        }
    }

    /// Right derivative in `t`.
    pub fn slope(&self, t: f64) -> f64 {
        if self.zero_at <= self.t0 || t >= self.zero_at {
            0.0
        } else {
            -self.gamma0 / (self.zero_at - self.t0)
        }
    }
}

/// Barrier of one predicate inside one temporal operator.
#[derive(Debug, Clone, PartialEq)]
pub struct OperatorBarrier {
    pub kind: OperatorKind,
    pub interval: Interval,
    /// Absolute deactivation time `t0 + b`.
    pub deadline: f64,
    pub predicate: Predicate,
    pub tightening: f64,
    pub envelope: Envelope,
    /// Index of the top-level temporal operator this barrier came from.
    pub source: usize,
    /// Produced by the Until under-approximation.
    pub from_until: bool,
}

impl OperatorBarrier {
    /// `h_pred(x) - r`, without the envelope.
    pub fn predicate_value(&self, x: &[f64], layout: &StateLayout) -> f64 {
        self.predicate.value(x, layout) - self.tightening
    }

    pub fn value(&self, x: &[f64], layout: &StateLayout, t: f64) -> f64 {
        self.predicate_value(x, layout) - self.envelope.value(t)
    }

    pub fn add_gradient(&self, x: &[f64], layout: &StateLayout, scale: f64, out: &mut [f64]) {
        self.predicate.add_gradient(x, layout, scale, out);
    }

    pub fn time_derivative(&self, t: f64) -> f64 {
        -self.envelope.slope(t)
    }
}

/// How the envelope offsets `gamma_j(t0)` are chosen.
#[derive(Debug, Clone, PartialEq)]
pub enum EnvelopeInit {
    /// The same `gamma0 <= 0` for every operator.
    Fixed(f64),
    /// `gamma0 = min(0, h_pred(x0) - margin)` so every barrier starts at or
    /// above `margin`.
    FromState { x0: Vec<f64>, margin: f64 },
    /// As `FromState`, and additionally makes the first chain term of every
    /// operator whose predicate does not see the input slot start at or above
    /// `margin`, given the drift `f(x0)`.
    FromChain {
        x0: Vec<f64>,
        margin: f64,
        drift: Vec<f64>,
        lambda: ClassK,
    },
}

/// Composite barrier `-(1/eta) ln sum_{j active} exp(-eta h_j(x, t))`.
#[derive(Debug, Clone, PartialEq)]
pub struct TimeVaryingBarrier {
    pub layout: StateLayout,
    pub eta: f64,
    pub t0: f64,
    pub operators: Vec<OperatorBarrier>,
    pub schedule: SwitchSchedule,
    /// Set when the formula contains Until.
    pub experimental: bool,
}

/// Value and first derivatives of the composite barrier at `(x, t)`.
#[derive(Debug, Clone, PartialEq)]
pub struct BarrierEval {
    pub h: f64,
    pub grad: Vec<f64>,
    pub dt: f64,
    /// Active operator indices and their softmin weights.
    pub active: Vec<usize>,
    pub weights: Vec<f64>,
    /// `h_j(x, t)` for each active operator.
    pub components: Vec<f64>,
}

impl TimeVaryingBarrier {
    pub fn dim(&self) -> usize {
        self.layout.dim()
    }

    /// Last switching instant; no operator is active from here on.
    pub fn end_time(&self) -> f64 {
        *self
            .schedule
            .instants
            .last()
            .expect("schedule is never empty")
    }

    pub fn active_at(&self, t: f64) -> &[usize] {
        self.schedule.active_at(t)
    }

    fn check(&self, x: &[f64], t: f64) -> Result<&[usize], BarrierError> {
        if x.len() != self.dim() {
            return Err(BarrierError::Dimension {
                expected: self.dim(),
                got: x.len(),
            });
        }
        let active = self.active_at(t);
        if active.is_empty() {
            return Err(BarrierError::ScheduleExhausted {
                t,
                end: self.end_time(),
            });
        }
        Ok(active)
    }

    pub fn value(&self, x: &[f64], t: f64) -> Result<f64, BarrierError> {
        let active = self.check(x, t)?;
        let hs: Vec<f64> = active
            .iter()
            .map(|&j| self.operators[j].value(x, &self.layout, t))
            .collect();
        Ok(lse_min(&hs, self.eta).0)
    }

    pub fn evaluate(&self, x: &[f64], t: f64) -> Result<BarrierEval, BarrierError> {
        let active = self.check(x, t)?.to_vec();
        let components: Vec<f64> = active
            .iter()
            .map(|&j| self.operators[j].value(x, &self.layout, t))
            .collect();
        let (h, weights) = lse_min(&components, self.eta);
        let mut grad = vec![0.0; self.dim()];
        let mut dt = 0.0;
        for (&j, &w) in active.iter().zip(&weights) {
            let op = &self.operators[j];
            op.add_gradient(x, &self.layout, w, &mut grad);
            dt += w * op.time_derivative(t);
        }
        Ok(BarrierEval {
            h,
            grad,
            dt,
            active,
            weights,
            components,
        })
    }

    /// Smallest active `h_j(x, t)`.
    pub fn min_component(&self, x: &[f64], t: f64) -> Result<f64, BarrierError> {
        let active = self.check(x, t)?;
        Ok(active
            .iter()
            .map(|&j| self.operators[j].value(x, &self.layout, t))
            .fold(f64::INFINITY, f64::min))
    }
}

/// Compiles a formula of the supported fragment into a composite barrier.
///
/// `G[a,b](psi)` and `F[a,b](psi)` yield one barrier per predicate of `psi`
/// with envelopes reaching zero at `t0 + a` and `t0 + b`. `psi1 U[a,b] psi2`
/// is under-approximated by `G[0,b](psi1) AND F[a,b](psi2)` and marks the
/// result experimental. Top-level state conjuncts only constrain `t0` and
/// are not part of the barrier.
pub fn build_barrier(
    formula: &StlFormula,
    layout: StateLayout,
    eta: f64,
    t0: f64,
    init: &EnvelopeInit,
    tightening: f64,
) -> Result<TimeVaryingBarrier, BarrierError> {
    check_eta(eta)?;
    check_variables(formula, &layout)?;
    if !(tightening >= 0.0 && tightening.is_finite()) {
        return Err(BarrierError::Parameter(format!(
            "tightening must be >= 0, got {tightening}"
        )));
    }
    let (ops, _) = formula.conjuncts();
    let mut operators = Vec::new();
    let mut push = |kind, interval: Interval, sub: &StlFormula, source, from_until| {
        let zero_at = match kind {
            OperatorKind::Always => t0 + interval.a,
            OperatorKind::Eventually => t0 + interval.b,
        };
        for pred in sub.predicates() {
            operators.push(OperatorBarrier {
                kind,
                interval,
                deadline: t0 + interval.b,
                predicate: pred.clone(),
                tightening,
                envelope: Envelope {
                    t0,
                    gamma0: 0.0,
                    zero_at,
                },
                source,
                from_until,
            });
        }
    };
    for (source, op) in ops.iter().enumerate() {
        match op {
            TemporalOp::Always(i, sub) => push(OperatorKind::Always, *i, sub, source, false),
            TemporalOp::Eventually(i, sub) => {
                push(OperatorKind::Eventually, *i, sub, source, false)
            }
            TemporalOp::Until(i, left, right) => {
                push(
                    OperatorKind::Always,
                    Interval { a: 0.0, b: i.b },
                    left,
                    source,
                    true,
                );
                push(OperatorKind::Eventually, *i, right, source, true);
            }
        }
    }
    for op in &mut operators {
        op.envelope.gamma0 = initial_offset(op, &layout, init)?;
    }
    let deadlines: Vec<f64> = operators.iter().map(|op| op.deadline).collect();
    Ok(TimeVaryingBarrier {
        layout,
        eta,
        t0,
        schedule: switching_schedule_from_deadlines(&deadlines, t0),
        operators,
        experimental: formula.contains_until(),
    })
}

fn initial_offset(
    op: &OperatorBarrier,
    layout: &StateLayout,
    init: &EnvelopeInit,
) -> Result<f64, BarrierError> {
    let check_x0 = |x0: &[f64]| {
        if x0.len() == layout.dim() {
            Ok(())
        } else {
            Err(BarrierError::Dimension {
                expected: layout.dim(),
                got: x0.len(),
            })
        }
    };
    match init {
        EnvelopeInit::Fixed(g) => {
            if *g > 0.0 || !g.is_finite() {
                return Err(BarrierError::Parameter(format!(
                    "envelope offset must be <= 0, got {g}"
                )));
            }
            Ok(*g)
        }
        EnvelopeInit::FromState { x0, margin } => {
            check_x0(x0)?;
            Ok((op.predicate_value(x0, layout) - margin).min(0.0))
        }
        EnvelopeInit::FromChain {
            x0,
            margin,
            drift,
            lambda,
        } => {
            check_x0(x0)?;
            check_x0(drift)?;
            let base = (op.predicate_value(x0, layout) - margin).min(0.0);
            let input_var = layout.var_at(layout.input_slot());
            let span = op.envelope.zero_at - op.envelope.t0;
            if op.predicate.depends_on(input_var) || span <= 0.0 {
                return Ok(base);
            }
            let mut g = vec![0.0; layout.dim()];
            op.add_gradient(x0, layout, 1.0, &mut g);
            let lie = crate::stl::expr::dot(&g, drift);
            let hp = op.predicate_value(x0, layout);
            // First chain term at t0 as a function of the offset.
            let chain = |gamma0: f64| lie + gamma0 / span + lambda.value(hp - gamma0);
            if chain(base) >= *margin {
                return Ok(base);
            }
            let mut ok = None;
            let mut bad = base;
            let mut trial = base;
            for _ in 0..80 {
                trial = 2.0 * trial - 1.0;
                if chain(trial) >= *margin {
                    ok = Some(trial);
                    break;
                }
                bad = trial;
            }
            let Some(mut good) = ok else { return Ok(base) };
            for _ in 0..60 {
                let mid = 0.5 * (good + bad);
                if chain(mid) >= *margin {
                    good = mid;
                } else {
                    bad = mid;
                }
            }
            Ok(good)
        }
    }
}
