//! Leader input synthesis from the fixed-time barrier inequality.
//!
//! The inequality on the terminal chain function `Psi`,
//!
//! ```text
//! grad Psi . (f + g u) + dPsi/dt >= -alpha sgn(Psi)|Psi|^g1 - beta sgn(Psi)|Psi|^g2
//! ```
//!
//! is rearranged into a single half-space row `a_u u + a_eps eps >= b` and
//! the minimum-norm point of that half-space is applied. With partial
//! information only the drift of the leader's knowledge set enters `b`, and
//! a slack `eps` keeps the row feasible.

mod certificate;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::barrier::{BarrierError, ChainEval, PsiChain};
use crate::stl::expr::dot;

pub use certificate::{
    branch, comparison_reach_time, comparison_rhs, epsilon_max_bound, fixed_time_bound,
    lemma_bound, Branch, Certificate,
};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ControlError {
    #[error("invalid controller parameter: {0}")]
    Parameter(String),
    #[error("the certificate needs the mu parameterisation (g1 = 1 - 1/mu, g2 = 1 + 1/mu)")]
    NeedsMu,
    #[error("input has no effect on the constraint (a_u = {a_u}) but b = {b} > 0 at t = {t}")]
    Singular { a_u: f64, b: f64, t: f64 },
    #[error(transparent)]
    Barrier(#[from] BarrierError),
}

/// Terminal gains `alpha, beta > 0`, `0 < g1 < 1 < g2`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct FixedTimeGains {
    pub alpha: f64,
    pub beta: f64,
    pub gamma1: f64,
    pub gamma2: f64,
    /// Present when the exponents came from `g1 = 1 - 1/mu`, `g2 = 1 + 1/mu`.
    pub mu: Option<f64>,
}

impl FixedTimeGains {
    pub fn from_mu(alpha: f64, beta: f64, mu: f64) -> Result<Self, ControlError> {
        if !(mu > 1.0 && mu.is_finite()) {
            return Err(ControlError::Parameter(format!("mu must be > 1, got {mu}")));
        }
        let g = Self {
            alpha,
            beta,
            gamma1: 1.0 - 1.0 / mu,
            gamma2: 1.0 + 1.0 / mu,
            mu: Some(mu),
        };
        g.validate()?;
        Ok(g)
    }

    pub fn from_exponents(
        alpha: f64,
        beta: f64,
        gamma1: f64,
        gamma2: f64,
    ) -> Result<Self, ControlError> {
        let g = Self {
            alpha,
            beta,
            gamma1,
            gamma2,
            mu: None,
        };
        g.validate()?;
        Ok(g)
    }

    fn validate(&self) -> Result<(), ControlError> {
        let mut bad = Vec::new();
        if !(self.alpha > 0.0 && self.alpha.is_finite()) {
            bad.push(format!("alpha must be > 0, got {}", self.alpha));
        }
        if !(self.beta > 0.0 && self.beta.is_finite()) {
            bad.push(format!("beta must be > 0, got {}", self.beta));
        }
        if !(self.gamma1 > 0.0 && self.gamma1 < 1.0) {
            bad.push(format!("gamma1 must lie in (0, 1), got {}", self.gamma1));
        }
        if !(self.gamma2 > 1.0 && self.gamma2.is_finite()) {
            bad.push(format!("gamma2 must be > 1, got {}", self.gamma2));
        }
        if bad.is_empty() {
            Ok(())
        } else {
            Err(ControlError::Parameter(bad.join("; ")))
        }
    }

    /// `alpha sgn(p)|p|^g1 + beta sgn(p)|p|^g2`, with `sgn(0) = 0`.
    pub fn decay(&self, psi: f64) -> (f64, f64) {
        if psi == 0.0 {
            return (0.0, 0.0);
        }
        let s = psi.signum();
        let a = psi.abs();
        (
            s * self.alpha * a.powf(self.gamma1),
            s * self.beta * a.powf(self.gamma2),
        )
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InfoMode {
    /// The leader evaluates the whole drift.
    FullInfo,
    /// The leader evaluates only the drift of its neighbours and itself.
    PartialInfo,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ControllerParams {
    pub gains: FixedTimeGains,
    pub k: f64,
    pub mode: InfoMode,
    /// Adds the slack variable to the row (QP form).
    pub slack: bool,
}

impl ControllerParams {
    /// Slack is on for partial information and off otherwise.
    pub fn new(gains: FixedTimeGains, k: f64, mode: InfoMode) -> Result<Self, ControlError> {
        if !(k > 1.0 && k.is_finite()) {
            return Err(ControlError::Parameter(format!("k must be > 1, got {k}")));
        }
        if mode == InfoMode::PartialInfo && gains.mu.is_none() {
            return Err(ControlError::NeedsMu);
        }
        Ok(Self {
            gains,
            k,
            mode,
            slack: mode == InfoMode::PartialInfo,
        })
    }

    pub fn with_slack(mut self, slack: bool) -> Self {
        self.slack = slack;
        self
    }
}

/// Half-space `a_u u + a_eps eps >= b`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ConstraintRow {
    pub a_u: f64,
    pub a_eps: f64,
    pub b: f64,
}

/// The input-independent terms that make up `b`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ConstraintTerms {
    pub psi: f64,
    pub known_drift: f64,
    /// Drift contribution the leader does not see (zero with full
    /// information); reported, never used by the controller.
    pub residual_drift: f64,
    pub dt: f64,
    pub alpha_term: f64,
    pub beta_term: f64,
}

/// Builds the constraint row at `(x, t)`.
pub fn assemble_constraint(
    params: &ControllerParams,
    chain: &PsiChain,
    x: &[f64],
    t: f64,
) -> Result<(ConstraintRow, ConstraintTerms, ChainEval), ControlError> {
    let ev = chain.evaluate(x, t)?;
    let dyn_err = |e: crate::network::NetworkError| ControlError::Parameter(e.to_string());
    let g = chain.dynamics.input_direction(x).map_err(dyn_err)?;
    let (known, residual) = match params.mode {
        InfoMode::FullInfo => (
            chain.dynamics.drift(x).map_err(dyn_err)?,
            vec![0.0; x.len()],
        ),
        InfoMode::PartialInfo => chain.dynamics.split_drift(x).map_err(dyn_err)?,
    };
    let (alpha_term, beta_term) = params.gains.decay(ev.psi);
    let terms = ConstraintTerms {
        psi: ev.psi,
        known_drift: dot(&ev.grad, &known),
        residual_drift: dot(&ev.grad, &residual),
        dt: ev.dt,
        alpha_term,
        beta_term,
    };
    let row = ConstraintRow {
        a_u: dot(&ev.grad, &g),
        a_eps: if params.slack { 1.0 } else { 0.0 },
        b: -(terms.known_drift + terms.dt + alpha_term + beta_term),
    };
    Ok((row, terms, ev))
}

/// Below this norm the row is treated as input-independent.
pub const SINGULAR_TOL: f64 = 1e-12;

/// Minimum-norm `(u, eps)` in the half-space. In raw mode (`a_eps = 0`) a
/// row with `a_u = 0` and `b > 0` is infeasible.
pub fn solve_min_norm(row: &ConstraintRow) -> Result<(f64, f64), ControlError> {
    if row.b <= 0.0 {
        return Ok((0.0, 0.0));
    }
    let norm2 = row.a_u * row.a_u + row.a_eps * row.a_eps;
    if norm2.sqrt() <= SINGULAR_TOL {
        return Err(ControlError::Singular {
            a_u: row.a_u,
            b: row.b,
            t: f64::NAN,
        });
    }
    let s = row.b / norm2;
    Ok((s * row.a_u, s * row.a_eps))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ControlOutput {
    pub u: f64,
    pub eps: f64,
    pub row: ConstraintRow,
    pub terms: ConstraintTerms,
    pub h: f64,
    pub psi: f64,
    /// The constraint holds with equality.
    pub active: bool,
}

/// One evaluation of the leader law.
pub fn leader_control(
    params: &ControllerParams,
    chain: &PsiChain,
    x: &[f64],
    t: f64,
) -> Result<ControlOutput, ControlError> {
    let (row, terms, ev) = assemble_constraint(params, chain, x, t)?;
    let (u, eps) = solve_min_norm(&row).map_err(|e| match e {
        ControlError::Singular { a_u, b, .. } => ControlError::Singular { a_u, b, t },
        other => other,
    })?;
    Ok(ControlOutput {
        u,
        eps,
        row,
        terms,
        h: ev.h,
        psi: ev.psi,
        active: row.b > 0.0,
    })
}

/// Chain and parameters bundled for repeated evaluation.
#[derive(Debug, Clone, PartialEq)]
pub struct LeaderController {
    pub chain: PsiChain,
    pub params: ControllerParams,
}

impl LeaderController {
    pub fn new(chain: PsiChain, params: ControllerParams) -> Self {
        Self { chain, params }
    }

    pub fn control(&self, x: &[f64], t: f64) -> Result<ControlOutput, ControlError> {
        leader_control(&self.params, &self.chain, x, t)
    }

    /// Warning text when the certified time exceeds the shortest interval
    /// between switches.
    pub fn feasibility_warning(&self, cert: &Certificate) -> Option<String> {
        let gap = self
            .chain
            .barrier
            .schedule
            .instants
            .windows(2)
            .map(|w| w[1] - w[0])
            .fold(f64::INFINITY, f64::min);
        (cert.t_bound > gap).then(|| {
            format!(
                "certified time {:.4} s exceeds the shortest switching interval {gap:.4} s",
                cert.t_bound
            )
        })
    }
}
