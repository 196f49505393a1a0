//! Signal temporal logic fragment: syntax tree, concrete syntax, Boolean
//! semantics over sampled trajectories and the barrier switching schedule.
//!
//! The supported fragment is
//!
//! ```text
//! psi ::= TRUE | pred | psi AND psi
//! phi ::= G[a,b](psi) | F[a,b](psi) | psi U[a,b] psi | phi AND phi
//! ```
//!
//! Predicates must be concave in the state so that their superlevel sets are
//! convex; comparisons are rewritten into the form `h(x) >= 0`.

mod eval;
pub mod expr;
mod parse;
mod schedule;

use std::collections::BTreeMap;
use std::fmt;

use thiserror::Error;

pub use eval::{check_variables, evaluate, Signal};
pub use expr::{Comparison, Curvature, Expr, Predicate};
pub use parse::parse_predicate;
pub use schedule::{switching_schedule, switching_schedule_from_deadlines, SwitchSchedule};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum StlError {
    #[error("syntax error at byte {pos}: {message}")]
    Syntax { pos: usize, message: String },
    #[error("invalid interval [{a}, {b}]: bounds must satisfy 0 <= a <= b < inf")]
    Interval { a: f64, b: f64 },
    #[error(
        "nested temporal operator at byte {pos}: operands of G, F and U must be state formulas"
    )]
    NestedTemporal { pos: usize },
    #[error("predicate `{predicate}` at byte {pos} is not concave in the state")]
    NonConcave { pos: usize, predicate: String },
    #[error("unknown predicate `{0}`")]
    UnknownPredicate(String),
    #[error("formula needs the trajectory on [{start}, {end}] but it covers [{covered_start}, {covered_end}]")]
    HorizonExceeded {
        start: f64,
        end: f64,
        covered_start: f64,
        covered_end: f64,
    },
    #[error("variable `{var}` does not exist for {agents} agent(s) of order {order}")]
    UnknownVariable {
        var: String,
        agents: usize,
        order: usize,
    },
}

/// Closed time interval `[a, b]` in seconds, relative to the evaluation time.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Interval {
    pub a: f64,
    pub b: f64,
}

impl Interval {
    pub fn new(a: f64, b: f64) -> Result<Self, StlError> {
        if !(a.is_finite() && b.is_finite()) || a < 0.0 || a > b {
            return Err(StlError::Interval { a, b });
        }
        Ok(Self { a, b })
    }
}

impl fmt::Display for Interval {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "[{},{}]", self.a, self.b)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum StlFormula {
    True,
    Predicate(Predicate),
    And(Box<StlFormula>, Box<StlFormula>),
    Always {
        interval: Interval,
        sub: Box<StlFormula>,
    },
    Eventually {
        interval: Interval,
        sub: Box<StlFormula>,
    },
    Until {
        interval: Interval,
        left: Box<StlFormula>,
        right: Box<StlFormula>,
    },
}

/// A top-level temporal operator of a task, in left-to-right order.
#[derive(Debug, Clone, PartialEq)]
pub enum TemporalOp<'a> {
    Always(Interval, &'a StlFormula),
    Eventually(Interval, &'a StlFormula),
    Until(Interval, &'a StlFormula, &'a StlFormula),
}

impl TemporalOp<'_> {
    pub fn interval(&self) -> Interval {
        match self {
            TemporalOp::Always(i, _) | TemporalOp::Eventually(i, _) | TemporalOp::Until(i, ..) => {
                *i
            }
        }
    }
}

/// Parses the concrete syntax, e.g. `G[10,30](abs(v3 - v2) <= 2)`.
pub fn parse_formula(text: &str) -> Result<StlFormula, StlError> {
    parse::parse_with(text, None)
}

/// Parses a formula whose atoms may reference named predicates.
pub fn parse_formula_with(
    text: &str,
    named: &BTreeMap<String, Predicate>,
) -> Result<StlFormula, StlError> {
    parse::parse_with(text, Some(named))
}

impl StlFormula {
    /// True for formulas built from `TRUE`, predicates and conjunction only.
    pub fn is_state_formula(&self) -> bool {
        match self {
            StlFormula::True | StlFormula::Predicate(_) => true,
            StlFormula::And(l, r) => l.is_state_formula() && r.is_state_formula(),
            _ => false,
        }
    }

    /// Latest time offset the formula looks at.
    pub fn horizon(&self) -> f64 {
        match self {
            StlFormula::True | StlFormula::Predicate(_) => 0.0,
            StlFormula::And(l, r) => l.horizon().max(r.horizon()),
            StlFormula::Always { interval, sub } | StlFormula::Eventually { interval, sub } => {
                interval.b + sub.horizon()
            }
            StlFormula::Until {
                interval,
                left,
                right,
            } => interval.b + left.horizon().max(right.horizon()),
        }
    }

    /// Flattens the top-level conjunction into its temporal operators.
    /// State-formula conjuncts (constraints at the evaluation instant only)
    /// are returned separately.
    pub fn conjuncts(&self) -> (Vec<TemporalOp<'_>>, Vec<&StlFormula>) {
        let mut ops = Vec::new();
        let mut state = Vec::new();
        self.collect_conjuncts(&mut ops, &mut state);
        (ops, state)
    }

    fn collect_conjuncts<'a>(
        &'a self,
        ops: &mut Vec<TemporalOp<'a>>,
        state: &mut Vec<&'a StlFormula>,
    ) {
        match self {
            StlFormula::And(l, r) => {
                l.collect_conjuncts(ops, state);
                r.collect_conjuncts(ops, state);
            }
            StlFormula::Always { interval, sub } => ops.push(TemporalOp::Always(*interval, sub)),
            StlFormula::Eventually { interval, sub } => {
                ops.push(TemporalOp::Eventually(*interval, sub))
            }
            StlFormula::Until {
                interval,
                left,
                right,
            } => ops.push(TemporalOp::Until(*interval, left, right)),
            f => state.push(f),
        }
    }

    /// Predicates of a state formula, in order. `TRUE` contributes none.
    pub fn predicates(&self) -> Vec<&Predicate> {
        let mut out = Vec::new();
        self.collect_predicates(&mut out);
        out
    }

    fn collect_predicates<'a>(&'a self, out: &mut Vec<&'a Predicate>) {
        match self {
            StlFormula::True => {}
            StlFormula::Predicate(p) => out.push(p),
            StlFormula::And(l, r) => {
                l.collect_predicates(out);
                r.collect_predicates(out);
            }
            StlFormula::Always { sub, .. } | StlFormula::Eventually { sub, .. } => {
                sub.collect_predicates(out)
            }
            StlFormula::Until { left, right, .. } => {
                left.collect_predicates(out);
                right.collect_predicates(out);
            }
        }
    }

    pub fn contains_until(&self) -> bool {
        match self {
            StlFormula::Until { .. } => true,
            StlFormula::And(l, r) => l.contains_until() || r.contains_until(),
            _ => false,
        }
    }

    fn precedence(&self) -> u8 {
        match self {
            StlFormula::And(..) => 0,
            StlFormula::Until { .. } => 1,
            _ => 2,
        }
    }
}

fn write_operand(f: &mut fmt::Formatter<'_>, sub: &StlFormula, min_prec: u8) -> fmt::Result {
    if sub.precedence() < min_prec {
        write!(f, "({sub})")
    } else {
        write!(f, "{sub}")
    }
}

impl fmt::Display for StlFormula {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            StlFormula::True => f.write_str("TRUE"),
            StlFormula::Predicate(p) => {
                // A predicate whose left side opens with `(` would otherwise be
                // read back as a parenthesised formula.
                let text = p.to_string();
                if text.starts_with('(') {
                    write!(f, "({text})")
                } else {
                    f.write_str(&text)
                }
            }
            StlFormula::And(l, r) => {
                write_operand(f, l, 0)?;
                f.write_str(" AND ")?;
                write_operand(f, r, 1)
            }
            StlFormula::Always { interval, sub } => write!(f, "G{interval}({sub})"),
            StlFormula::Eventually { interval, sub } => write!(f, "F{interval}({sub})"),
            StlFormula::Until {
                interval,
                left,
                right,
            } => {
                write_operand(f, left, 2)?;
                write!(f, " U{interval} ")?;
                write_operand(f, right, 2)
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::state::{Order, StateLayout};

    #[test]
    fn parses_always_band_from_the_experiment() {
        let f = parse_formula("G[10,30](abs(v3-v2) <= 2)").unwrap();
        let StlFormula::Always { interval, sub } = &f else {
            panic!("expected G, got {f:?}")
        };
        assert_eq!(*interval, Interval { a: 10.0, b: 30.0 });
        let StlFormula::Predicate(pred) = sub.as_ref() else {
            panic!()
        };
        // h = 2 - |v3 - v2|
        let layout = StateLayout::new(3, Order::Second);
        let x = [0.0, 0.0, 0.0, 0.0, 0.5, 1.0];
        assert_eq!(pred.value(&x, &layout), 1.5);
    }

    #[test]
    fn parses_true() {
        assert_eq!(parse_formula("TRUE").unwrap(), StlFormula::True);
    }

    #[test]
    fn rejects_reversed_interval() {
        assert_eq!(
            parse_formula("F[5,3](p1 <= 0)").unwrap_err(),
            StlError::Interval { a: 5.0, b: 3.0 }
        );
    }

    #[test]
    fn rejects_nested_temporal_operators() {
        let err = parse_formula("G[0,5](F[0,1](p1 <= 0))").unwrap_err();
        assert!(
            matches!(err, StlError::NestedTemporal { pos: 0 }),
            "{err:?}"
        );
        let err = parse_formula("G[0,1](p1 <= 0) U[0,2] p2 >= 1").unwrap_err();
        assert!(matches!(err, StlError::NestedTemporal { .. }), "{err:?}");
    }

    #[test]
    fn rejects_nonconcave_predicates() {
        let err = parse_formula("G[0,1](abs(p1) >= 1)").unwrap_err();
        assert!(matches!(err, StlError::NonConcave { .. }), "{err:?}");
        let err = parse_formula("F[0,1](sq(p1) >= 1)").unwrap_err();
        assert!(matches!(err, StlError::NonConcave { .. }), "{err:?}");
    }

    #[test]
    fn syntax_errors_carry_positions() {
        let err = parse_formula("G[0,1](p1 <= )").unwrap_err();
        assert!(matches!(err, StlError::Syntax { pos: 13, .. }), "{err:?}");
        let err = parse_formula("G[0,1](p1 <= 2) AND").unwrap_err();
        assert!(matches!(err, StlError::Syntax { pos: 19, .. }), "{err:?}");
    }

    #[test]
    fn named_predicates_resolve() {
        let mut table = BTreeMap::new();
        table.insert(
            "near".to_string(),
            parse_predicate("sq(p1 - 2) <= 0.25").unwrap(),
        );
        let f = parse_formula_with("F[0,4](near)", &table).unwrap();
        assert_eq!(f.to_string(), "F[0,4](near)");
        assert_eq!(
            parse_formula("F[0,4](near)").unwrap_err(),
            StlError::UnknownPredicate("near".into())
        );
    }

    #[test]
    fn until_and_conjunction_print_and_reparse() {
        let text = "(p1 >= 0 AND v2 <= 1) U[0,2] p2 - 1 >= 0 AND G[1,3]((p1 - p2) * 2 <= 3)";
        let f = parse_formula(text).unwrap();
        assert!(f.contains_until());
        let printed = f.to_string();
        assert_eq!(parse_formula(&printed).unwrap(), f, "printed: {printed}");
    }

    #[test]
    fn horizon_and_conjuncts() {
        let f = parse_formula("G[10,30](v1 <= 2) AND F[10,90](p1 >= 0) AND p2 <= 1").unwrap();
        assert_eq!(f.horizon(), 90.0);
        let (ops, state) = f.conjuncts();
        assert_eq!(ops.len(), 2);
        assert_eq!(state.len(), 1);
    }
}
