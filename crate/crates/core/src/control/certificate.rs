//! Fixed-time certificates and the scalar comparison system
//! `V' = -alpha V^g1 - beta V^g2 + delta`.

use std::f64::consts::FRAC_PI_2;

use serde::Serialize;

use super::{ControlError, ControllerParams, FixedTimeGains};

/// Case split on the sign of `delta^2 - 4 alpha beta`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Branch {
    /// `delta > 2 sqrt(alpha beta)`
    Above,
    /// `delta = 2 sqrt(alpha beta)`
    Equal,
    /// `0 <= delta < 2 sqrt(alpha beta)`
    Below,
}

const BRANCH_TOL: f64 = 1e-12;

pub fn branch(gains: &FixedTimeGains, delta: f64) -> Branch {
    let disc = delta * delta - 4.0 * gains.alpha * gains.beta;
    if disc.abs() <= BRANCH_TOL {
        Branch::Equal
    } else if disc > 0.0 {
        Branch::Above
    } else {
        Branch::Below
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Certificate {
    pub delta: f64,
    pub branch: Branch,
    /// Settling-time bound in seconds.
    pub t_bound: f64,
    pub eps_max: f64,
    /// Roots `b < c` of `alpha s^2 - delta s + beta` (branch `Above`).
    pub b: Option<f64>,
    pub c: Option<f64>,
    pub k1: Option<f64>,
    pub k2: Option<f64>,
}

fn mu_of(params: &ControllerParams) -> Result<f64, ControlError> {
    params.gains.mu.ok_or(ControlError::NeedsMu)
}

fn check_delta(delta: f64) -> Result<(), ControlError> {
    if delta >= 0.0 && delta.is_finite() {
        Ok(())
    } else {
        Err(ControlError::Parameter(format!(
            "delta must be finite and >= 0, got {delta}"
        )))
    }
}

/// Settling-time bound `T` together with the ultimate bound.
pub fn fixed_time_bound(
    params: &ControllerParams,
    delta: f64,
) -> Result<Certificate, ControlError> {
    check_delta(delta)?;
    let mu = mu_of(params)?;
    let (alpha, beta, k) = (params.gains.alpha, params.gains.beta, params.k);
    let br = branch(&params.gains, delta);
    let mut cert = Certificate {
        delta,
        branch: br,
        t_bound: 0.0,
        eps_max: epsilon_max_bound(params, delta)?,
        b: None,
        c: None,
        k1: None,
        k2: None,
    };
    match br {
        Branch::Above => {
            let root = (delta * delta - 4.0 * alpha * beta).sqrt();
            let b = (delta - root) / (2.0 * alpha);
            let c = (delta + root) / (2.0 * alpha);
            cert.t_bound = mu / (alpha * (c - b)) * ((1.0 + c).abs() / (1.0 + b).abs()).ln();
            cert.b = Some(b);
            cert.c = Some(c);
        }
        Branch::Equal => {
            cert.t_bound = mu / (alpha * beta).sqrt() / (k - 1.0);
        }
        Branch::Below => {
            let d = 4.0 * alpha * beta - delta * delta;
            let k1 = (d / (4.0 * alpha * alpha)).sqrt();
            let k2 = -delta / d.sqrt();
            cert.t_bound = mu / (alpha * k1) * (FRAC_PI_2 - k2.atan());
            cert.k1 = Some(k1);
            cert.k2 = Some(k2);
        }
    }
    Ok(cert)
}

/// Ultimate bound on the barrier violation.
pub fn epsilon_max_bound(params: &ControllerParams, delta: f64) -> Result<f64, ControlError> {
    check_delta(delta)?;
    let mu = mu_of(params)?;
    let (alpha, beta, k) = (params.gains.alpha, params.gains.beta, params.k);
    Ok(match branch(&params.gains, delta) {
        Branch::Above => {
            ((delta + (delta * delta - 4.0 * alpha * beta).sqrt()) / (2.0 * alpha)).powf(mu)
        }
        Branch::Equal => k.powf(mu) * (beta / alpha).powf(mu / 2.0),
        Branch::Below => delta / (2.0 * (alpha * beta).sqrt()),
    })
}

/// Settling-time bound without disturbance:
/// `1 / (alpha (1 - g1)) + 1 / (beta (g2 - 1))`.
pub fn lemma_bound(gains: &FixedTimeGains) -> f64 {
    1.0 / (gains.alpha * (1.0 - gains.gamma1)) + 1.0 / (gains.beta * (gains.gamma2 - 1.0))
}

/// Right-hand side of the comparison system, with `sgn(0) = 0`.
pub fn comparison_rhs(gains: &FixedTimeGains, delta: f64, v: f64) -> f64 {
    let s = if v > 0.0 {
        1.0
    } else if v < 0.0 {
        -1.0
    } else {
        0.0
    };
    let a = v.abs();
    -s * (gains.alpha * a.powf(gains.gamma1) + gains.beta * a.powf(gains.gamma2)) + delta
}

/// First time the comparison system started at `v0` reaches `v <= target`,
/// or `None` if that takes longer than `t_max` or never happens. The system
/// is scalar and autonomous, so this is the integral of `dv / |v'|` over
/// `[target, v0]`, computed by double-exponential quadrature.
pub fn comparison_reach_time(
    gains: &FixedTimeGains,
    delta: f64,
    v0: f64,
    target: f64,
    t_max: f64,
) -> Option<f64> {
    if v0 <= target {
        return Some(0.0);
    }
    // Below zero the flow points up (delta >= 0), and v = 0 is reached only
    // in finite time when gamma1 < 1.
    if target < 0.0 {
        return None;
    }
    let a = target;
    let decay = |v: f64| -comparison_rhs(gains, delta, v);
    let tol = 1e-12;
    let mut total = 0.0;
    let split = v0.min(a.max(1.0));
    if split > a {
        total += if a > 0.0 {
            if decay(a) <= 0.0 {
                return None;
            }
            quadrature::integrate(|v| 1.0 / decay(v), a, split, tol).integral
        } else {
            if delta > 0.0 || gains.gamma1 >= 1.0 {
                return None;
            }
            // v = w^p with p (1 - gamma1) = 1 removes the endpoint singularity.
            let p = 1.0 / (1.0 - gains.gamma1);
            let q = p * (gains.gamma2 - gains.gamma1);
            let w_hi = split.powf(1.0 / p);
            quadrature::integrate(
                |w| p / (gains.alpha + gains.beta * w.powf(q)),
                0.0,
                w_hi,
                tol,
            )
            .integral
        };
    } else if decay(a) <= 0.0 {
        return None;
    }
    if v0 > split {
        // Large ranges in log space: dv / g(v) = v / g(v) ds.
        total += quadrature::integrate(
            |s| {
                let v = s.exp();
                v / decay(v)
            },
            split.ln(),
            v0.ln(),
            tol,
        )
        .integral;
    }
    (total.is_finite() && total <= t_max).then_some(total)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::control::InfoMode;

    fn params(alpha: f64, beta: f64, mu: f64, k: f64) -> ControllerParams {
        ControllerParams::new(
            FixedTimeGains::from_mu(alpha, beta, mu).unwrap(),
            k,
            InfoMode::PartialInfo,
        )
        .unwrap()
    }

    #[test]
    fn experiment_certificate() {
        let c = fixed_time_bound(&params(1.0, 1.0, 2.0, 2.0), 2.86).unwrap();
        assert_eq!(c.branch, Branch::Above);
        assert!((c.eps_max - 6.01).abs() <= 0.01, "{}", c.eps_max);
        let (b, cc) = (c.b.unwrap(), c.c.unwrap());
        assert!((b * b - 2.86 * b + 1.0).abs() < 1e-12);
        assert!((cc * cc - 2.86 * cc + 1.0).abs() < 1e-12);
    }

    #[test]
    fn zero_delta_takes_branch_three() {
        let c = fixed_time_bound(&params(1.0, 1.0, 2.0, 2.0), 0.0).unwrap();
        assert_eq!(c.branch, Branch::Below);
        assert_eq!(c.k1, Some(1.0));
        assert_eq!(c.k2, Some(0.0));
        assert!((c.t_bound - std::f64::consts::PI).abs() < 1e-15);
        assert_eq!(c.eps_max, 0.0);
    }

    #[test]
    fn boundary_delta_takes_branch_two() {
        let c = fixed_time_bound(&params(1.0, 1.0, 2.0, 2.0), 2.0).unwrap();
        assert_eq!(c.branch, Branch::Equal);
        assert_eq!(c.t_bound, 2.0);
        assert!(
            (epsilon_max_bound(&params(1.0, 1.0, 2.0, 1.5), 2.0).unwrap() - 2.25).abs() < 1e-15
        );
    }

    #[test]
    fn lemma_bound_is_mu_over_alpha_plus_mu_over_beta() {
        let g = FixedTimeGains::from_mu(1.0, 1.0, 2.0).unwrap();
        assert!((lemma_bound(&g) - 4.0).abs() < 1e-12);
    }

    #[test]
    fn exponential_decay_reach_time() {
        // g1 = g2 = 1 is not a valid fixed-time pair but exercises the
        // integrator: V' = -2 V, V(0) = 1 reaches e^-2 at t = 1.
        let g = FixedTimeGains {
            alpha: 1.0,
            beta: 1.0,
            gamma1: 1.0,
            gamma2: 1.0,
            mu: None,
        };
        let t = comparison_reach_time(&g, 0.0, 1.0, (-2.0f64).exp(), 10.0).unwrap();
        assert!((t - 1.0).abs() < 1e-6, "{t}");
    }

    #[test]
    fn comparison_reaches_bound_at_experiment_point() {
        let p = params(1.0, 1.0, 2.0, 2.0);
        let c = fixed_time_bound(&p, 2.86).unwrap();
        for v0 in [0.01, 1.0, 100.0, 1e6] {
            let t = comparison_reach_time(&p.gains, 2.86, v0, c.eps_max, 100.0).unwrap();
            assert!(t <= c.t_bound * 1.01, "v0 = {v0}: {t} > {}", c.t_bound);
        }
    }
}
