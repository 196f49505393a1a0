//! Higher-order chain `psi_0 = h`, `psi_1 = dh/dt + lambda_1(h)` along the
//! drift.
//!
//! Three chain shapes are supported:
//!
//! * `One`: the barrier itself.
//! * `Two`: the first derivative of the composite barrier along `f`, valid
//!   when no active predicate sees the input slot.
//! * `PerOperator`: every operator gets its own order (first order when its
//!   predicate reads the input slot, second otherwise) and the per-operator
//!   terms are merged by the same smooth minimum.

use serde::{Deserialize, Serialize};

use super::{lse_min, BarrierError, TimeVaryingBarrier};
use crate::network::Dynamics;
use crate::stl::expr::dot;

/// Extended class-K function used in the chain.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ClassK {
    /// `slope * r`
    Linear { slope: f64 },
    /// `coef * r^3`
    Cubic { coef: f64 },
}

impl ClassK {
    pub fn value(self, r: f64) -> f64 {
        match self {
            ClassK::Linear { slope } => slope * r,
            ClassK::Cubic { coef } => coef * r * r * r,
        }
    }

    pub fn derivative(self, r: f64) -> f64 {
        match self {
            ClassK::Linear { slope } => slope,
            ClassK::Cubic { coef } => 3.0 * coef * r * r,
        }
    }

    pub fn inverse(self, y: f64) -> f64 {
        match self {
            ClassK::Linear { slope } => y / slope,
            ClassK::Cubic { coef } => (y / coef).cbrt(),
        }
    }

    fn validate(self) -> Result<(), BarrierError> {
        let c = match self {
            ClassK::Linear { slope } => slope,
            ClassK::Cubic { coef } => coef,
        };
        if c > 0.0 && c.is_finite() {
            Ok(())
        } else {
            Err(BarrierError::Parameter(format!(
                "class-K coefficient must be positive, got {c}"
            )))
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ChainOrder {
    One,
    Two,
    PerOperator,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PsiChain {
    pub barrier: TimeVaryingBarrier,
    pub order: ChainOrder,
    pub lambda: ClassK,
    pub dynamics: Dynamics,
    /// Order of each operator (1 or 2); all equal unless `PerOperator`.
    pub operator_orders: Vec<u8>,
}

/// Terminal chain function `Psi` (the one the input must act on) and the
/// underlying barrier, both with first derivatives.
#[derive(Debug, Clone, PartialEq)]
pub struct ChainEval {
    pub h: f64,
    pub h_grad: Vec<f64>,
    pub h_dt: f64,
    pub psi: f64,
    pub grad: Vec<f64>,
    pub dt: f64,
}

pub fn build_psi_chain(
    barrier: TimeVaryingBarrier,
    order: ChainOrder,
    lambda: ClassK,
    dynamics: Dynamics,
) -> Result<PsiChain, BarrierError> {
    lambda.validate()?;
    let layout = dynamics.layout();
    if layout != barrier.layout {
        return Err(BarrierError::Dimension {
            expected: layout.dim(),
            got: barrier.layout.dim(),
        });
    }
    let input_var = layout.var_at(layout.input_slot());
    let sees_input: Vec<bool> = barrier
        .operators
        .iter()
        .map(|op| op.predicate.depends_on(input_var))
        .collect();
    let operator_orders = match order {
        ChainOrder::One => vec![1; sees_input.len()],
        ChainOrder::Two => {
            if let Some(j) = sees_input.iter().position(|&s| s) {
                return Err(BarrierError::RelativeDegree(format!(
                    "predicate `{}` depends on the input slot {input_var}; use order 1 or a per-operator chain",
                    barrier.operators[j].predicate
                )));
            }
            vec![2; sees_input.len()]
        }
        ChainOrder::PerOperator => sees_input.iter().map(|&s| if s { 1 } else { 2 }).collect(),
    };
    Ok(PsiChain {
        barrier,
        order,
        lambda,
        dynamics,
        operator_orders,
    })
}

impl PsiChain {
    /// Order of the terminal function: 1 when it is the barrier itself.
    pub fn max_order(&self) -> u8 {
        self.operator_orders.iter().copied().max().unwrap_or(1)
    }

    pub fn evaluate(&self, x: &[f64], t: f64) -> Result<ChainEval, BarrierError> {
        let be = self.barrier.evaluate(x, t)?;
        match self.order {
            ChainOrder::One => Ok(ChainEval {
                h: be.h,
                h_grad: be.grad.clone(),
                h_dt: be.dt,
                psi: be.h,
                grad: be.grad,
                dt: be.dt,
            }),
            ChainOrder::Two => self.uniform_two(x, t, be),
            ChainOrder::PerOperator => self.per_operator(x, t, be),
        }
    }

    fn drift(&self, x: &[f64]) -> Result<Vec<f64>, BarrierError> {
        self.dynamics
            .drift(x)
            .map_err(|e| BarrierError::Parameter(e.to_string()))
    }

    fn vjp(&self, x: &[f64], v: &[f64]) -> Vec<f64> {
        self.dynamics
            .drift_vjp(x, v)
            .expect("dimensions checked by the barrier")
    }

    fn uniform_two(
        &self,
        x: &[f64],
        t: f64,
        be: super::BarrierEval,
    ) -> Result<ChainEval, BarrierError> {
        let bar = &self.barrier;
        let layout = &bar.layout;
        let eta = bar.eta;
        let f = self.drift(x)?;
        let n = x.len();
        let grads: Vec<Vec<f64>> = be
            .active
            .iter()
            .map(|&j| {
                let mut g = vec![0.0; n];
                bar.operators[j].add_gradient(x, layout, 1.0, &mut g);
                g
            })
            .collect();
        let dts: Vec<f64> = be
            .active
            .iter()
            .map(|&j| bar.operators[j].time_derivative(t))
            .collect();
        let g = &be.grad;
        let gf = dot(g, &f);

        // Hessian of the smooth minimum applied to f.
        let mut hf = vec![0.0; n];
        for ((&j, &w), gj) in be.active.iter().zip(&be.weights).zip(&grads) {
            bar.operators[j]
                .predicate
                .add_hessian_vec(x, layout, &f, w, &mut hf);
            let s = -eta * w * dot(gj, &f);
            for (o, gi) in hf.iter_mut().zip(gj) {
                *o += s * gi;
            }
        }
        for (o, gi) in hf.iter_mut().zip(g) {
            *o += eta * gf * gi;
        }

        // Gradient and time derivative of dh/dt.
        let mut grad_dt = vec![0.0; n];
        let mut dtt = 0.0;
        for ((&w, gj), &dj) in be.weights.iter().zip(&grads).zip(&dts) {
            for ((o, a), b) in grad_dt.iter_mut().zip(gj).zip(g) {
                *o -= eta * w * (a - b) * dj;
            }
            dtt -= eta * w * (dj - be.dt) * dj;
        }

        let lam = self.lambda;
        let lp = lam.derivative(be.h);
        let jtg = self.vjp(x, g);
        let grad: Vec<f64> = (0..n)
            .map(|i| hf[i] + jtg[i] + grad_dt[i] + lp * g[i])
            .collect();
        Ok(ChainEval {
            h: be.h,
            psi: gf + be.dt + lam.value(be.h),
            dt: dot(&f, &grad_dt) + dtt + lp * be.dt,
            grad,
            h_grad: be.grad,
            h_dt: be.dt,
        })
    }

    fn per_operator(
        &self,
        x: &[f64],
        t: f64,
        be: super::BarrierEval,
    ) -> Result<ChainEval, BarrierError> {
        let bar = &self.barrier;
        let layout = &bar.layout;
        let n = x.len();
        let lam = self.lambda;
        let f = if be.active.iter().any(|&j| self.operator_orders[j] == 2) {
            Some(self.drift(x)?)
        } else {
            None
        };
        let mut values = Vec::with_capacity(be.active.len());
        let mut grads = Vec::with_capacity(be.active.len());
        let mut dts = Vec::with_capacity(be.active.len());
        for (&j, &hj) in be.active.iter().zip(&be.components) {
            let op = &bar.operators[j];
            let mut gj = vec![0.0; n];
            op.add_gradient(x, layout, 1.0, &mut gj);
            let dj = op.time_derivative(t);
            match (self.operator_orders[j], &f) {
                (2, Some(f)) => {
                    let lp = lam.derivative(hj);
                    let mut gc = self.vjp(x, &gj);
                    op.predicate.add_hessian_vec(x, layout, f, 1.0, &mut gc);
                    for (o, a) in gc.iter_mut().zip(&gj) {
                        *o += lp * a;
                    }
                    values.push(dot(&gj, f) + dj + lam.value(hj));
                    grads.push(gc);
                    dts.push(lp * dj);
                }
                _ => {
                    values.push(hj);
                    grads.push(gj);
                    dts.push(dj);
                }
            }
        }
        let (psi, weights) = lse_min(&values, bar.eta);
        let mut grad = vec![0.0; n];
        let mut dt = 0.0;
        for ((w, gc), dc) in weights.iter().zip(&grads).zip(&dts) {
            for (o, a) in grad.iter_mut().zip(gc) {
                *o += w * a;
            }
            dt += w * dc;
        }
        Ok(ChainEval {
            h: be.h,
            h_grad: be.grad,
            h_dt: be.dt,
            psi,
            grad,
            dt,
        })
    }
}
