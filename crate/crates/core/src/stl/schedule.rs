//! Switching instants of the composite barrier.

use super::StlFormula;

/// Switching instants `t0 = tau_0 < tau_1 < ... < tau_p` and, for each
/// interval `[tau_l, tau_{l+1})`, the indices of operators still active.
///
/// The schedule is right-continuous: at `tau_l` every operator whose
/// deadline equals `tau_l` has already been removed.
#[derive(Debug, Clone, PartialEq)]
pub struct SwitchSchedule {
    pub instants: Vec<f64>,
    pub active: Vec<Vec<usize>>,
}

impl SwitchSchedule {
    /// Index `l` with `t` in `[tau_l, tau_{l+1})`; the last interval is
    /// unbounded on the right.
    pub fn interval_index(&self, t: f64) -> usize {
        self.instants
            .partition_point(|&tau| tau <= t)
            .saturating_sub(1)
    }

    /// Active operator indices at time `t`.
    pub fn active_at(&self, t: f64) -> &[usize] {
        &self.active[self.interval_index(t)]
    }

    /// Whether `t` lies in `(tau_l - tol, tau_l + tol)` for some `l >= 1`.
    pub fn is_switch_near(&self, t: f64, tol: f64) -> bool {
        self.instants
            .iter()
            .skip(1)
            .any(|&tau| (t - tau).abs() < tol)
    }
}

/// Schedule of a formula: deadlines are the right endpoints `b_j` of its
/// top-level temporal operators, in left-to-right order.
pub fn switching_schedule(formula: &StlFormula, t0: f64) -> SwitchSchedule {
    let (ops, _) = formula.conjuncts();
    let deadlines: Vec<f64> = ops.iter().map(|op| t0 + op.interval().b).collect();
    switching_schedule_from_deadlines(&deadlines, t0)
}

/// Schedule from absolute operator deadlines.
pub fn switching_schedule_from_deadlines(deadlines: &[f64], t0: f64) -> SwitchSchedule {
    let mut instants = vec![t0];
    let mut later: Vec<f64> = deadlines.iter().copied().filter(|&b| b > t0).collect();
    later.sort_by(f64::total_cmp);
    later.dedup();
    instants.extend(later);
    let active = instants
        .iter()
        .map(|&tau| {
            (0..deadlines.len())
                .filter(|&j| deadlines[j] > tau)
                .collect()
        })
        .collect();
    SwitchSchedule { instants, active }
}
