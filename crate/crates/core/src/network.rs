//! Leader-follower graph and stacked agent dynamics.
//!
//! Agents are numbered `0..n` internally; the single leader is the last
//! agent. Every agent's drift is a sum of terms acting on its highest-order
//! state: local terms `w * phi(z_i)` and pairwise couplings
//! `w * phi(z_j - z_i)`, where `z_j = x_j` for first-order agents and
//! `z_j = p_j + v_j` for second-order ones. Second-order agents also carry
//! the kinematic term `p_i' = v_i`. The leader input enters through a
//! constant gain on the leader's highest-order state.

use std::collections::BTreeSet;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::barrier::PsiChain;
use crate::state::{Order, StateLayout};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum NetworkError {
    #[error("state has dimension {got}, expected {expected}")]
    Dimension { expected: usize, got: usize },
    #[error("network needs at least one agent")]
    Empty,
    #[error("laplacian must be {n}x{n}, row {row} has {len} entries")]
    NotSquare { n: usize, row: usize, len: usize },
    #[error("graph is not connected")]
    Disconnected,
    #[error("agent index {0} out of range")]
    Agent(usize),
    #[error("coupling term from agent {from} to agent {to} has no edge")]
    MissingEdge { from: usize, to: usize },
    #[error("invalid parameter: {0}")]
    Parameter(String),
}

/// Undirected graph with the leader as the last vertex.
#[derive(Debug, Clone, PartialEq)]
pub struct Graph {
    pub n: usize,
    edges: BTreeSet<(usize, usize)>,
}

impl Graph {
    pub fn new(n: usize, edges: &[(usize, usize)]) -> Result<Self, NetworkError> {
        if n == 0 {
            return Err(NetworkError::Empty);
        }
        let mut set = BTreeSet::new();
        for &(i, j) in edges {
            if i >= n || j >= n {
                return Err(NetworkError::Agent(i.max(j)));
            }
            if i != j {
                set.insert((i.min(j), i.max(j)));
            }
        }
        let g = Self { n, edges: set };
        if !g.is_connected() {
            return Err(NetworkError::Disconnected);
        }
        Ok(g)
    }

    pub fn leader(&self) -> usize {
        self.n - 1
    }

    pub fn edges(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        self.edges.iter().copied()
    }

    pub fn has_edge(&self, i: usize, j: usize) -> bool {
        self.edges.contains(&(i.min(j), i.max(j)))
    }

    pub fn neighbors(&self, i: usize) -> Vec<usize> {
        (0..self.n)
            .filter(|&j| j != i && self.has_edge(i, j))
            .collect()
    }

    /// Leader neighbours plus the leader itself.
    pub fn knowledge_set(&self) -> Vec<usize> {
        let mut k = self.neighbors(self.leader());
        k.push(self.leader());
        k
    }

    /// Followers the leader does not observe.
    pub fn non_neighbors(&self) -> Vec<usize> {
        let k = self.knowledge_set();
        (0..self.n).filter(|i| !k.contains(i)).collect()
    }

    fn is_connected(&self) -> bool {
        let mut seen = vec![false; self.n];
        let mut stack = vec![0];
        seen[0] = true;
        while let Some(i) = stack.pop() {
            for j in self.neighbors(i) {
                if !seen[j] {
                    seen[j] = true;
                    stack.push(j);
                }
            }
        }
        seen.into_iter().all(|s| s)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Primitive {
    Linear,
    Saturated { limit: f64 },
}

impl Primitive {
    fn apply(self, z: f64) -> f64 {
        match self {
            Primitive::Linear => z,
            Primitive::Saturated { limit } => z.clamp(-limit, limit),
        }
    }

    fn derivative(self, z: f64) -> f64 {
        match self {
            Primitive::Linear => 1.0,
            Primitive::Saturated { limit } => {
                if z.abs() < limit {
                    1.0
                } else {
                    0.0
                }
            }
        }
    }
}

/// Added to `agent`'s highest-order rate: `weight * primitive(z_agent)` when
/// `source == agent`, else `weight * primitive(z_source - z_agent)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DriftTerm {
    pub agent: usize,
    pub source: usize,
    pub weight: f64,
    pub primitive: Primitive,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dynamics {
    pub graph: Graph,
    pub order: Order,
    pub terms: Vec<DriftTerm>,
    /// Leader input gain.
    pub gain: f64,
}

impl Dynamics {
    /// Linear consensus dynamics `x' = -L x` (first order) or
    /// `p' = v, v' = -L (p + v)` (second order). The graph is read off the
    /// off-diagonal pattern of `L`; each nonzero `L_ij` becomes the coupling
    /// `-L_ij (z_j - z_i)`, and a nonzero row sum becomes a local term.
    pub fn from_laplacian(
        order: Order,
        laplacian: &[Vec<f64>],
        gain: f64,
    ) -> Result<Self, NetworkError> {
        let n = laplacian.len();
        for (row, r) in laplacian.iter().enumerate() {
            if r.len() != n {
                return Err(NetworkError::NotSquare {
                    n,
                    row,
                    len: r.len(),
                });
            }
        }
        let mut edges = Vec::new();
        let mut terms = Vec::new();
        for (i, row) in laplacian.iter().enumerate() {
            for (j, &l) in row.iter().enumerate() {
                if l != 0.0 && i != j {
                    edges.push((i, j));
                    terms.push(DriftTerm {
                        agent: i,
                        source: j,
                        weight: -l,
                        primitive: Primitive::Linear,
                    });
                }
            }
            let row_sum: f64 = row.iter().sum();
            if row_sum != 0.0 {
                terms.push(DriftTerm {
                    agent: i,
                    source: i,
                    weight: -row_sum,
                    primitive: Primitive::Linear,
                });
            }
        }
        Self::new(Graph::new(n, &edges)?, order, terms, gain)
    }

    pub fn new(
        graph: Graph,
        order: Order,
        terms: Vec<DriftTerm>,
        gain: f64,
    ) -> Result<Self, NetworkError> {
        if !(gain.is_finite() && gain != 0.0) {
            return Err(NetworkError::Parameter(format!(
                "leader gain must be finite and nonzero, got {gain}"
            )));
        }
        for t in &terms {
            if t.agent >= graph.n || t.source >= graph.n {
                return Err(NetworkError::Agent(t.agent.max(t.source)));
            }
            if t.agent != t.source && !graph.has_edge(t.agent, t.source) {
                return Err(NetworkError::MissingEdge {
                    from: t.source,
                    to: t.agent,
                });
            }
            if !t.weight.is_finite() {
                return Err(NetworkError::Parameter(
                    "drift weight must be finite".into(),
                ));
            }
        }
        Ok(Self {
            graph,
            order,
            terms,
            gain,
        })
    }

    pub fn layout(&self) -> StateLayout {
        StateLayout::new(self.graph.n, self.order)
    }

    pub fn dim(&self) -> usize {
        self.layout().dim()
    }

    fn check(&self, x: &[f64]) -> Result<(), NetworkError> {
        if x.len() == self.dim() {
            Ok(())
        } else {
            Err(NetworkError::Dimension {
                expected: self.dim(),
                got: x.len(),
            })
        }
    }

    fn z(&self, x: &[f64], j: usize) -> f64 {
        match self.order {
            Order::First => x[j],
            Order::Second => x[j] + x[self.graph.n + j],
        }
    }

    /// Primitive argument of a term.
    fn arg(&self, x: &[f64], t: &DriftTerm) -> f64 {
        if t.agent == t.source {
            self.z(x, t.agent)
        } else {
            self.z(x, t.source) - self.z(x, t.agent)
        }
    }

    /// Index of agent `i`'s highest-order state.
    fn rate_slot(&self, i: usize) -> usize {
        match self.order {
            Order::First => i,
            Order::Second => self.graph.n + i,
        }
    }

    /// `f(x)`.
    pub fn drift(&self, x: &[f64]) -> Result<Vec<f64>, NetworkError> {
        self.check(x)?;
        Ok(self.drift_filtered(x, |_, _| true))
    }

    /// Drift keeping only terms accepted by `keep(agent, source)`; the
    /// kinematic part counts as a local term.
    fn drift_filtered(&self, x: &[f64], keep: impl Fn(usize, usize) -> bool) -> Vec<f64> {
        let n = self.graph.n;
        let mut out = vec![0.0; self.dim()];
        if self.order == Order::Second {
            for i in (0..n).filter(|&i| keep(i, i)) {
                out[i] = x[n + i];
            }
        }
        for t in self.terms.iter().filter(|t| keep(t.agent, t.source)) {
            out[self.rate_slot(t.agent)] += t.weight * t.primitive.apply(self.arg(x, t));
        }
        out
    }

    /// Local part `f_{i,i}` of agent `i`, as a full stacked vector.
    pub fn local_drift(&self, x: &[f64], i: usize) -> Result<Vec<f64>, NetworkError> {
        self.check(x)?;
        Ok(self.drift_filtered(x, |a, s| a == i && s == i))
    }

    /// Coupling part `f_{i,j}`, as a full stacked vector.
    pub fn coupling_drift(&self, x: &[f64], i: usize, j: usize) -> Result<Vec<f64>, NetworkError> {
        self.check(x)?;
        if i == j {
            return Ok(vec![0.0; self.dim()]);
        }
        Ok(self.drift_filtered(x, |a, s| a == i && s == j))
    }

    /// Splits `f(x)` into the part the leader can evaluate (agents in its
    /// knowledge set driven by agents in it) and the residual.
    pub fn split_drift(&self, x: &[f64]) -> Result<(Vec<f64>, Vec<f64>), NetworkError> {
        self.check(x)?;
        let k = self.graph.knowledge_set();
        let known = self.drift_filtered(x, |a, s| k.contains(&a) && k.contains(&s));
        let full = self.drift_filtered(x, |_, _| true);
        let residual = full.iter().zip(&known).map(|(f, k)| f - k).collect();
        Ok((known, residual))
    }

    /// `J_f(x)^T v`.
    pub fn drift_vjp(&self, x: &[f64], v: &[f64]) -> Result<Vec<f64>, NetworkError> {
        self.check(x)?;
        self.check(v)?;
        let n = self.graph.n;
        let mut out = vec![0.0; self.dim()];
        if self.order == Order::Second {
            for i in 0..n {
                out[n + i] += v[i];
            }
        }
        for t in &self.terms {
            let s = v[self.rate_slot(t.agent)] * t.weight * t.primitive.derivative(self.arg(x, t));
            let mut add = |j: usize, s: f64| match self.order {
                Order::First => out[j] += s,
                Order::Second => {
                    out[j] += s;
                    out[n + j] += s;
                }
            };
            add(t.source, s);
            if t.source != t.agent {
                add(t.agent, -s);
            }
        }
        Ok(out)
    }

    /// Input column `g(x)`: the gain in the leader's highest-order slot.
    pub fn input_direction(&self, x: &[f64]) -> Result<Vec<f64>, NetworkError> {
        self.check(x)?;
        let mut g = vec![0.0; self.dim()];
        g[self.rate_slot(self.graph.leader())] = self.gain;
        Ok(g)
    }

    /// `f(x) + g(x) u`.
    pub fn closed_loop(&self, x: &[f64], u: f64) -> Result<Vec<f64>, NetworkError> {
        let mut f = self.drift(x)?;
        f[self.rate_slot(self.graph.leader())] += self.gain * u;
        Ok(f)
    }
}

/// Source of `(x, t)` points for the residual estimate. With a fixed seed
/// the first `count` samples are a prefix of any longer draw.
pub trait DomainSampler {
    fn samples(&self, count: usize) -> Box<dyn Iterator<Item = (Vec<f64>, f64)> + '_>;
}

/// Uniform sampler over a box of states and a time window.
#[derive(Debug, Clone, PartialEq)]
pub struct BoxSampler {
    pub lo: Vec<f64>,
    pub hi: Vec<f64>,
    pub t_lo: f64,
    pub t_hi: f64,
    pub seed: u64,
}

impl DomainSampler for BoxSampler {
    fn samples(&self, count: usize) -> Box<dyn Iterator<Item = (Vec<f64>, f64)> + '_> {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        Box::new((0..count).map(move |_| {
            let x = self
                .lo
                .iter()
                .zip(&self.hi)
                .map(|(&l, &h)| if h > l { rng.gen_range(l..h) } else { l })
                .collect();
            let t = if self.t_hi > self.t_lo {
                rng.gen_range(self.t_lo..self.t_hi)
            } else {
                self.t_lo
            };
            (x, t)
        }))
    }
}

/// Draws visited `(x, t)` pairs uniformly, with replacement.
#[derive(Debug, Clone, PartialEq)]
pub struct VisitedSampler {
    pub points: Vec<(Vec<f64>, f64)>,
    pub seed: u64,
}

impl DomainSampler for VisitedSampler {
    fn samples(&self, count: usize) -> Box<dyn Iterator<Item = (Vec<f64>, f64)> + '_> {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        let n = self.points.len();
        Box::new(
            (0..if n == 0 { 0 } else { count })
                .map(move |_| self.points[rng.gen_range(0..n)].clone()),
        )
    }
}

/// Largest sampled magnitude of the drift contribution the leader cannot
/// evaluate, `|grad Psi . (f - f_known)|`. This is an empirical lower bound
/// on the true constant and only feeds certificate reports.
pub fn residual_delta_estimate(
    dynamics: &Dynamics,
    chain: &PsiChain,
    sampler: &dyn DomainSampler,
    count: usize,
) -> Result<f64, NetworkError> {
    if dynamics.graph.non_neighbors().is_empty() {
        return Ok(0.0);
    }
    let mut best = 0.0f64;
    for (x, t) in sampler.samples(count) {
        let (_, residual) = dynamics.split_drift(&x)?;
        let Ok(eval) = chain.evaluate(&x, t) else {
            continue;
        };
        let r: f64 = eval.grad.iter().zip(&residual).map(|(a, b)| a * b).sum();
        if r.is_finite() {
            best = best.max(r.abs());
        }
    }
    Ok(best)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn full_info() -> Dynamics {
        let l = vec![
            vec![1.0, 0.0, -1.0],
            vec![0.0, 1.0, -1.0],
            vec![0.0, 0.0, 0.0],
        ];
        Dynamics::from_laplacian(Order::Second, &l, 1.0).unwrap()
    }

    fn partial_info() -> Dynamics {
        let l = vec![
            vec![2.0, -1.0, -1.0],
            vec![-1.0, 1.0, 0.0],
            vec![0.0, 0.0, 0.0],
        ];
        Dynamics::from_laplacian(Order::Second, &l, 1.0).unwrap()
    }

    #[test]
    fn zero_state_has_zero_drift() {
        assert_eq!(full_info().drift(&[0.0; 6]).unwrap(), vec![0.0; 6]);
    }

    #[test]
    fn experiment_drift_is_v_then_minus_l_p_plus_v() {
        let d = full_info();
        let x = [1.0, 2.0, 3.0, 0.5, -0.5, 0.25];
        let f = d.drift(&x).unwrap();
        // v' = -L (p + v), p + v = (1.5, 1.5, 3.25)
        let want = [0.5, -0.5, 0.25, -(1.5 - 3.25), -(1.5 - 3.25), 0.0];
        for (a, b) in f.iter().zip(want) {
            assert!((a - b).abs() < 1e-15, "{f:?}");
        }
    }

    #[test]
    fn experiment_input_column() {
        assert_eq!(
            full_info().input_direction(&[0.0; 6]).unwrap(),
            vec![0.0, 0.0, 0.0, 0.0, 0.0, 1.0]
        );
    }

    #[test]
    fn first_order_input_column() {
        let l = vec![vec![1.0, -1.0], vec![0.0, 0.0]];
        let d = Dynamics::from_laplacian(Order::First, &l, 3.0).unwrap();
        let g = d.input_direction(&[0.0, 0.0]).unwrap();
        assert_eq!(g, vec![0.0, 3.0]);
        assert_eq!(g.iter().filter(|v| **v != 0.0).count(), 1);
    }

    #[test]
    fn knowledge_sets() {
        assert_eq!(full_info().graph.knowledge_set(), vec![0, 1, 2]);
        assert!(full_info().graph.non_neighbors().is_empty());
        let p = partial_info();
        assert_eq!(p.graph.neighbors(2), vec![0]);
        assert_eq!(p.graph.non_neighbors(), vec![1]);
    }

    #[test]
    fn split_drift_sums_to_full() {
        let d = partial_info();
        let x = [0.3, -1.2, 2.0, 0.7, 0.1, -0.4];
        let (k, r) = d.split_drift(&x).unwrap();
        let f = d.drift(&x).unwrap();
        for i in 0..6 {
            assert!((k[i] + r[i] - f[i]).abs() < 1e-15);
        }
        // Agent 1 (index 1) is outside the knowledge set: fully residual.
        assert_eq!(k[1], 0.0);
        assert_eq!(k[4], 0.0);
        // Agent 0's coupling to agent 1 is residual: -L01 (z1 - z0) = -1.1 - 1.0.
        assert!((r[3] - (-2.1)).abs() < 1e-15);
    }

    #[test]
    fn laplacian_drift_is_translation_invariant() {
        let d = partial_info();
        let x = [0.3, -1.2, 2.0, 0.7, 0.1, -0.4];
        let shifted: Vec<f64> = x
            .iter()
            .enumerate()
            .map(|(i, v)| if i < 3 { v + 40.0 } else { *v })
            .collect();
        let (k0, r0) = d.split_drift(&x).unwrap();
        let (k1, r1) = d.split_drift(&shifted).unwrap();
        for i in 3..6 {
            assert!((k0[i] - k1[i]).abs() < 1e-12);
            assert!((r0[i] - r1[i]).abs() < 1e-12);
        }
    }

    #[test]
    fn disconnected_laplacian_rejected() {
        let l = vec![vec![0.0, 0.0], vec![0.0, 0.0]];
        assert_eq!(
            Dynamics::from_laplacian(Order::First, &l, 1.0),
            Err(NetworkError::Disconnected)
        );
    }

    #[test]
    fn coupling_without_edge_rejected() {
        let g = Graph::new(3, &[(0, 2), (1, 2)]).unwrap();
        let t = DriftTerm {
            agent: 0,
            source: 1,
            weight: 1.0,
            primitive: Primitive::Linear,
        };
        assert_eq!(
            Dynamics::new(g, Order::First, vec![t], 1.0),
            Err(NetworkError::MissingEdge { from: 1, to: 0 })
        );
    }

    #[test]
    fn dimension_mismatch() {
        assert!(matches!(
            full_info().drift(&[0.0; 5]),
            Err(NetworkError::Dimension { .. })
        ));
    }
}
