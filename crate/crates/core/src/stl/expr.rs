//! Scalar expressions over the stacked state and the predicates built from
//! them.

use std::collections::BTreeSet;
use std::fmt;

use crate::state::{StateLayout, StateVar};

/// Curvature class of an expression, tracked the way disciplined convex
/// programming does: only compositions with a known sign are classified.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Curvature {
    Constant,
    Affine,
    Convex,
    Concave,
    Unknown,
}

impl Curvature {
    fn negate(self) -> Self {
        match self {
            Curvature::Convex => Curvature::Concave,
            Curvature::Concave => Curvature::Convex,
            c => c,
        }
    }

    fn add(self, other: Self) -> Self {
        use Curvature::*;
        match (self, other) {
            (Unknown, _) | (_, Unknown) => Unknown,
            (Constant, c) | (c, Constant) => c,
            (Affine, c) | (c, Affine) => c,
            (Convex, Convex) => Convex,
            (Concave, Concave) => Concave,
            _ => Unknown,
        }
    }

    /// True for curvatures whose superlevel set `{h >= 0}` is convex.
    pub fn is_concave(self) -> bool {
        matches!(
            self,
            Curvature::Constant | Curvature::Affine | Curvature::Concave
        )
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Expr {
    Const(f64),
    Var(StateVar),
    Neg(Box<Expr>),
    Add(Box<Expr>, Box<Expr>),
    Sub(Box<Expr>, Box<Expr>),
    Mul(Box<Expr>, Box<Expr>),
    Abs(Box<Expr>),
    Sq(Box<Expr>),
}

impl Expr {
    pub fn curvature(&self) -> Curvature {
        match self {
            Expr::Const(_) => Curvature::Constant,
            Expr::Var(_) => Curvature::Affine,
            Expr::Neg(e) => e.curvature().negate(),
            Expr::Add(a, b) => a.curvature().add(b.curvature()),
            Expr::Sub(a, b) => a.curvature().add(b.curvature().negate()),
            Expr::Mul(a, b) => match (a.constant_value(), b.constant_value()) {
                (Some(_), Some(_)) => Curvature::Constant,
                (Some(c), None) => scale_curvature(c, b.curvature()),
                (None, Some(c)) => scale_curvature(c, a.curvature()),
                (None, None) => Curvature::Unknown,
            },
            Expr::Abs(e) | Expr::Sq(e) => match e.curvature() {
                Curvature::Constant => Curvature::Constant,
                Curvature::Affine => Curvature::Convex,
                _ => Curvature::Unknown,
            },
        }
    }

    /// Value of a variable-free expression.
    pub fn constant_value(&self) -> Option<f64> {
        match self {
            Expr::Const(c) => Some(*c),
            Expr::Var(_) => None,
            Expr::Neg(e) => e.constant_value().map(|v| -v),
            Expr::Add(a, b) => Some(a.constant_value()? + b.constant_value()?),
            Expr::Sub(a, b) => Some(a.constant_value()? - b.constant_value()?),
            Expr::Mul(a, b) => Some(a.constant_value()? * b.constant_value()?),
            Expr::Abs(e) => e.constant_value().map(f64::abs),
            Expr::Sq(e) => e.constant_value().map(|v| v * v),
        }
    }

    pub fn collect_vars(&self, out: &mut BTreeSet<StateVar>) {
        match self {
            Expr::Const(_) => {}
            Expr::Var(v) => {
                out.insert(*v);
            }
            Expr::Neg(e) | Expr::Abs(e) | Expr::Sq(e) => e.collect_vars(out),
            Expr::Add(a, b) | Expr::Sub(a, b) | Expr::Mul(a, b) => {
                a.collect_vars(out);
                b.collect_vars(out);
            }
        }
    }

    /// Evaluates the expression; variables must resolve in `layout`.
    pub fn value(&self, x: &[f64], layout: &StateLayout) -> f64 {
        match self {
            Expr::Const(c) => *c,
            Expr::Var(v) => x[resolve(layout, *v)],
            Expr::Neg(e) => -e.value(x, layout),
            Expr::Add(a, b) => a.value(x, layout) + b.value(x, layout),
            Expr::Sub(a, b) => a.value(x, layout) - b.value(x, layout),
            Expr::Mul(a, b) => a.value(x, layout) * b.value(x, layout),
            Expr::Abs(e) => e.value(x, layout).abs(),
            Expr::Sq(e) => {
                let v = e.value(x, layout);
                v * v
            }
        }
    }

    /// Accumulates `scale * grad` into `out`. The subgradient of `|e|` at
    /// `e = 0` is taken as zero.
    pub fn add_gradient(&self, x: &[f64], layout: &StateLayout, scale: f64, out: &mut [f64]) {
        if scale == 0.0 {
            return;
        }
        match self {
            Expr::Const(_) => {}
            Expr::Var(v) => out[resolve(layout, *v)] += scale,
            Expr::Neg(e) => e.add_gradient(x, layout, -scale, out),
            Expr::Add(a, b) => {
                a.add_gradient(x, layout, scale, out);
                b.add_gradient(x, layout, scale, out);
            }
            Expr::Sub(a, b) => {
                a.add_gradient(x, layout, scale, out);
                b.add_gradient(x, layout, -scale, out);
            }
            Expr::Mul(a, b) => {
                let (va, vb) = (a.value(x, layout), b.value(x, layout));
                a.add_gradient(x, layout, scale * vb, out);
                b.add_gradient(x, layout, scale * va, out);
            }
            Expr::Abs(e) => {
                let s = signum0(e.value(x, layout));
                e.add_gradient(x, layout, scale * s, out);
            }
            Expr::Sq(e) => {
                let v = e.value(x, layout);
                e.add_gradient(x, layout, 2.0 * scale * v, out);
            }
        }
    }

    fn directional(&self, x: &[f64], layout: &StateLayout, dir: &[f64]) -> f64 {
        let mut g = vec![0.0; x.len()];
        self.add_gradient(x, layout, 1.0, &mut g);
        dot(&g, dir)
    }

    /// Accumulates `scale * (Hessian · dir)` into `out`.
    pub fn add_hessian_vec(
        &self,
        x: &[f64],
        layout: &StateLayout,
        dir: &[f64],
        scale: f64,
        out: &mut [f64],
    ) {
        if scale == 0.0 {
            return;
        }
        match self {
            Expr::Const(_) | Expr::Var(_) => {}
            Expr::Neg(e) => e.add_hessian_vec(x, layout, dir, -scale, out),
            Expr::Add(a, b) => {
                a.add_hessian_vec(x, layout, dir, scale, out);
                b.add_hessian_vec(x, layout, dir, scale, out);
            }
            Expr::Sub(a, b) => {
                a.add_hessian_vec(x, layout, dir, scale, out);
                b.add_hessian_vec(x, layout, dir, -scale, out);
            }
            Expr::Mul(a, b) => {
                let (va, vb) = (a.value(x, layout), b.value(x, layout));
                a.add_hessian_vec(x, layout, dir, scale * vb, out);
                b.add_hessian_vec(x, layout, dir, scale * va, out);
                let da = a.directional(x, layout, dir);
                let db = b.directional(x, layout, dir);
                a.add_gradient(x, layout, scale * db, out);
                b.add_gradient(x, layout, scale * da, out);
            }
            Expr::Abs(e) => {
                let s = signum0(e.value(x, layout));
                e.add_hessian_vec(x, layout, dir, scale * s, out);
            }
            Expr::Sq(e) => {
                let v = e.value(x, layout);
                let de = e.directional(x, layout, dir);
                e.add_gradient(x, layout, 2.0 * scale * de, out);
                e.add_hessian_vec(x, layout, dir, 2.0 * scale * v, out);
            }
        }
    }

    fn precedence(&self) -> u8 {
        match self {
            Expr::Add(..) | Expr::Sub(..) => 1,
            Expr::Mul(..) => 2,
            Expr::Neg(_) => 3,
            Expr::Const(c) if *c < 0.0 => 3,
            _ => 4,
        }
    }
}

fn scale_curvature(c: f64, inner: Curvature) -> Curvature {
    if c == 0.0 {
        Curvature::Constant
    } else if c > 0.0 {
        inner
    } else {
        inner.negate()
    }
}

fn resolve(layout: &StateLayout, v: StateVar) -> usize {
    layout
        .index(v)
        .unwrap_or_else(|| panic!("state variable {v} does not exist in {layout:?}"))
}

pub(crate) fn signum0(v: f64) -> f64 {
    if v > 0.0 {
        1.0
    } else if v < 0.0 {
        -1.0
    } else {
        0.0
    }
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn write_wrapped(f: &mut fmt::Formatter<'_>, e: &Expr, min_prec: u8) -> fmt::Result {
    if e.precedence() < min_prec {
        write!(f, "({e})")
    } else {
        write!(f, "{e}")
    }
}

impl fmt::Display for Expr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Expr::Const(c) => write!(f, "{c}"),
            Expr::Var(v) => write!(f, "{v}"),
            Expr::Neg(e) if matches!(**e, Expr::Const(_)) => write!(f, "-({e})"),
            Expr::Neg(e) => {
                write!(f, "-")?;
                write_wrapped(f, e, 3)
            }
            Expr::Add(a, b) | Expr::Sub(a, b) => {
                write_wrapped(f, a, 1)?;
                write!(
                    f,
                    " {} ",
                    if matches!(self, Expr::Add(..)) {
                        "+"
                    } else {
                        "-"
                    }
                )?;
                write_wrapped(f, b, 2)
            }
            Expr::Mul(a, b) => {
                write_wrapped(f, a, 2)?;
                write!(f, " * ")?;
                write_wrapped(f, b, 3)
            }
            Expr::Abs(e) => write!(f, "abs({e})"),
            Expr::Sq(e) => write!(f, "sq({e})"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Comparison {
    Le,
    Lt,
    Ge,
    Gt,
}

impl fmt::Display for Comparison {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Comparison::Le => "<=",
            Comparison::Lt => "<",
            Comparison::Ge => ">=",
            Comparison::Gt => ">",
        })
    }
}

/// Atomic proposition `lhs cmp rhs`, compiled to a predicate function
/// `h` with `h >= 0` meaning true: `h = rhs - lhs` for `<=`/`<` and
/// `h = lhs - rhs` for `>=`/`>`.
#[derive(Debug, Clone, PartialEq)]
pub struct Predicate {
    pub name: Option<String>,
    pub lhs: Expr,
    pub cmp: Comparison,
    pub rhs: Expr,
}

impl Predicate {
    pub fn new(lhs: Expr, cmp: Comparison, rhs: Expr) -> Self {
        Self {
            name: None,
            lhs,
            cmp,
            rhs,
        }
    }

    fn sign(&self) -> f64 {
        match self.cmp {
            Comparison::Le | Comparison::Lt => -1.0,
            Comparison::Ge | Comparison::Gt => 1.0,
        }
    }

    pub fn curvature(&self) -> Curvature {
        let diff = self.lhs.curvature().add(self.rhs.curvature().negate());
        if self.sign() > 0.0 {
            diff
        } else {
            diff.negate()
        }
    }

    pub fn is_concave(&self) -> bool {
        self.curvature().is_concave()
    }

    pub fn vars(&self) -> BTreeSet<StateVar> {
        let mut out = BTreeSet::new();
        self.lhs.collect_vars(&mut out);
        self.rhs.collect_vars(&mut out);
        out
    }

    pub fn value(&self, x: &[f64], layout: &StateLayout) -> f64 {
        self.sign() * (self.lhs.value(x, layout) - self.rhs.value(x, layout))
    }

    pub fn add_gradient(&self, x: &[f64], layout: &StateLayout, scale: f64, out: &mut [f64]) {
        let s = self.sign() * scale;
        self.lhs.add_gradient(x, layout, s, out);
        self.rhs.add_gradient(x, layout, -s, out);
    }

    pub fn add_hessian_vec(
        &self,
        x: &[f64],
        layout: &StateLayout,
        dir: &[f64],
        scale: f64,
        out: &mut [f64],
    ) {
        let s = self.sign() * scale;
        self.lhs.add_hessian_vec(x, layout, dir, s, out);
        self.rhs.add_hessian_vec(x, layout, dir, -s, out);
    }

    /// Structural dependence: true when `var` appears in the predicate.
    pub fn depends_on(&self, var: StateVar) -> bool {
        self.vars().contains(&var)
    }

    pub fn label(&self) -> String {
        format!("{} {} {}", self.lhs, self.cmp, self.rhs)
    }
}

impl fmt::Display for Predicate {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match &self.name {
            Some(name) => f.write_str(name),
            None => write!(f, "{} {} {}", self.lhs, self.cmp, self.rhs),
        }
    }
}
