//! Boolean semantics on uniformly sampled trajectories.
//!
//! Time quantifiers range over the instants `{lo, hi}` plus every grid
//! point strictly inside `[lo, hi]`. Off-grid instants read predicate values
//! by linear interpolation between neighbouring samples.

use super::{Predicate, StlError, StlFormula};
use crate::state::StateLayout;

const GRID_TOL: f64 = 1e-9;

/// A trajectory sampled on the grid `t0 + k * dt`.
#[derive(Debug, Clone, Copy)]
pub struct Signal<'a> {
    pub t0: f64,
    pub dt: f64,
    pub samples: &'a [Vec<f64>],
    pub layout: StateLayout,
}

impl<'a> Signal<'a> {
    pub fn new(t0: f64, dt: f64, samples: &'a [Vec<f64>], layout: StateLayout) -> Self {
        Self {
            t0,
            dt,
            samples,
            layout,
        }
    }

    pub fn end_time(&self) -> f64 {
        self.t0 + (self.samples.len().saturating_sub(1)) as f64 * self.dt
    }

    pub fn time(&self, k: usize) -> f64 {
        self.t0 + k as f64 * self.dt
    }

    /// Grid position of `t`: `(k, frac)` with `t = t_k + frac * dt`.
    fn locate(&self, t: f64) -> (usize, f64) {
        let s = (t - self.t0) / self.dt;
        let r = s.round();
        if (s - r).abs() < GRID_TOL {
            return ((r.max(0.0) as usize).min(self.samples.len() - 1), 0.0);
        }
        let k = s.floor().max(0.0) as usize;
        if k + 1 >= self.samples.len() {
            return (self.samples.len() - 1, 0.0);
        }
        (k, s - k as f64)
    }

    /// Predicate value at an arbitrary instant.
    pub fn predicate_at(&self, pred: &Predicate, t: f64) -> f64 {
        let (k, frac) = self.locate(t);
        let h0 = pred.value(&self.samples[k], &self.layout);
        if frac == 0.0 {
            h0
        } else {
            let h1 = pred.value(&self.samples[k + 1], &self.layout);
            h0 + frac * (h1 - h0)
        }
    }

    /// Quantifier instants for `[lo, hi]`, ascending.
    pub fn instants(&self, lo: f64, hi: f64) -> Vec<f64> {
        let mut out = vec![lo];
        let (first, last) = self.interior_range(lo, hi);
        out.extend(
            (first..=last)
                .filter(|_| first <= last)
                .map(|k| self.time(k)),
        );
        if hi > lo {
            out.push(hi);
        }
        out
    }

    /// Grid indices strictly inside `(lo, hi)`; empty when `first > last`.
    fn interior_range(&self, lo: f64, hi: f64) -> (usize, usize) {
        let s_lo = (lo - self.t0) / self.dt;
        let s_hi = (hi - self.t0) / self.dt;
        let first = (s_lo + GRID_TOL).floor() as i64 + 1;
        let last = (s_hi - GRID_TOL).ceil() as i64 - 1;
        if last < first || last < 0 {
            return (1, 0);
        }
        (first.max(0) as usize, last as usize)
    }

    fn check_coverage(&self, start: f64, end: f64) -> Result<(), StlError> {
        let tol = GRID_TOL * self.dt.max(1.0);
        if self.samples.is_empty() || start < self.t0 - tol || end > self.end_time() + tol {
            return Err(StlError::HorizonExceeded {
                start,
                end,
                covered_start: self.t0,
                covered_end: if self.samples.is_empty() {
                    self.t0
                } else {
                    self.end_time()
                },
            });
        }
        Ok(())
    }
}

/// Checks that every predicate variable exists in the layout.
pub fn check_variables(formula: &StlFormula, layout: &StateLayout) -> Result<(), StlError> {
    for pred in formula.predicates() {
        for var in pred.vars() {
            if layout.index(var).is_none() {
                return Err(StlError::UnknownVariable {
                    var: var.to_string(),
                    agents: layout.agents,
                    order: layout.order.as_usize(),
                });
            }
        }
    }
    Ok(())
}

/// Boolean satisfaction `(x, t) |= formula`.
pub fn evaluate(formula: &StlFormula, signal: &Signal<'_>, t: f64) -> Result<bool, StlError> {
    check_variables(formula, &signal.layout)?;
    signal.check_coverage(t, t + formula.horizon())?;
    Ok(sat(formula, signal, t))
}

fn sat(formula: &StlFormula, signal: &Signal<'_>, t: f64) -> bool {
    match formula {
        StlFormula::True => true,
        StlFormula::Predicate(p) => signal.predicate_at(p, t) >= 0.0,
        StlFormula::And(l, r) => sat(l, signal, t) && sat(r, signal, t),
        StlFormula::Always { interval, sub } => {
            let (lo, hi) = (t + interval.a, t + interval.b);
            window(signal, sub, lo, hi).all(|holds| holds)
        }
        StlFormula::Eventually { interval, sub } => {
            let (lo, hi) = (t + interval.a, t + interval.b);
            window(signal, sub, lo, hi).any(|holds| holds)
        }
        StlFormula::Until {
            interval,
            left,
            right,
        } => {
            // Single forward scan over [t, t + b]: remember whether `left`
            // has held at every instant so far.
            let (lo, hi) = (t + interval.a, t + interval.b);
            let mut instants = signal.instants(t, hi);
            if !instants
                .iter()
                .any(|&s| (s - lo).abs() <= GRID_TOL * signal.dt)
            {
                let at = instants.partition_point(|&s| s < lo);
                instants.insert(at, lo);
            }
            let mut left_so_far = true;
            for s in instants {
                left_so_far &= sat(left, signal, s);
                if !left_so_far {
                    return false;
                }
                if s >= lo - GRID_TOL * signal.dt && sat(right, signal, s) {
                    return true;
                }
            }
            false
        }
    }
}

/// Truth values of a state formula at the quantifier instants of `[lo, hi]`.
fn window<'s>(
    signal: &'s Signal<'_>,
    sub: &'s StlFormula,
    lo: f64,
    hi: f64,
) -> impl Iterator<Item = bool> + 's {
    signal
        .instants(lo, hi)
        .into_iter()
        .map(move |s| sat(sub, signal, s))
}
