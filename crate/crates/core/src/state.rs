use serde::{Deserialize, Serialize};

/// Agent dynamics order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Order {
    First,
    Second,
}

impl Order {
    pub fn as_usize(self) -> usize {
        match self {
            Order::First => 1,
            Order::Second => 2,
        }
    }

    pub fn from_usize(order: usize) -> Option<Self> {
        match order {
            1 => Some(Order::First),
            2 => Some(Order::Second),
            _ => None,
        }
    }
}

/// Which physical quantity a state variable names.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum VarKind {
    Position,
    Velocity,
}

/// A named scalar of one agent, e.g. `v3`. Agents are numbered from 1.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct StateVar {
    pub kind: VarKind,
    pub agent: usize,
}

impl std::fmt::Display for StateVar {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self.kind {
            VarKind::Position => write!(f, "p{}", self.agent),
            VarKind::Velocity => write!(f, "v{}", self.agent),
        }
    }
}

/// Stacked state layout: all positions first, then (for second-order
/// networks) all velocities, i.e. `x = [p_1..p_n, v_1..v_n]`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct StateLayout {
    pub agents: usize,
    pub order: Order,
}

impl StateLayout {
    pub fn new(agents: usize, order: Order) -> Self {
        Self { agents, order }
    }

    pub fn dim(&self) -> usize {
        self.agents * self.order.as_usize()
    }

    pub fn index(&self, var: StateVar) -> Option<usize> {
        if var.agent == 0 || var.agent > self.agents {
            return None;
        }
        match (var.kind, self.order) {
            (VarKind::Position, _) => Some(var.agent - 1),
            (VarKind::Velocity, Order::Second) => Some(self.agents + var.agent - 1),
            (VarKind::Velocity, Order::First) => None,
        }
    }

    /// Inverse of [`StateLayout::index`].
    pub fn var_at(&self, idx: usize) -> StateVar {
        let kind = if idx < self.agents {
            VarKind::Position
        } else {
            VarKind::Velocity
        };
        StateVar {
            kind,
            agent: idx % self.agents + 1,
        }
    }

    /// Stacked indices belonging to agent `i` (0-based).
    pub fn agent_indices(&self, i: usize) -> impl Iterator<Item = usize> {
        let n = self.agents;
        (0..self.order.as_usize()).map(move |k| k * n + i)
    }

    /// Agent (0-based) that owns stacked index `idx`.
    pub fn agent_of(&self, idx: usize) -> usize {
        idx % self.agents
    }

    /// Index that receives the leader input: the leader's position for
    /// first-order networks, its velocity for second-order ones.
    pub fn input_slot(&self) -> usize {
        self.dim() - 1
    }

    pub fn var_names(&self) -> Vec<String> {
        let n = self.agents;
        match self.order {
            Order::First => (1..=n).map(|i| format!("x{i}")).collect(),
            Order::Second => (1..=n)
                .map(|i| format!("p{i}"))
                .chain((1..=n).map(|i| format!("v{i}")))
                .collect(),
        }
    }
}
