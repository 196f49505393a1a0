//! Scenario files: a TOML document with `network`, `task`, `controller`,
//! `sim` and `output` tables. Agents are numbered from 1 in the file.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::Deserialize;
use thiserror::Error;

use crate::barrier::{
    build_barrier, build_psi_chain, ChainOrder, ClassK, EnvelopeInit, PsiChain, TimeVaryingBarrier,
};
use crate::control::{ControllerParams, FixedTimeGains, InfoMode, LeaderController};
use crate::network::{DriftTerm, Dynamics, Graph, Primitive};
use crate::state::{Order, StateLayout};
use crate::stl::{check_variables, parse_formula_with, parse_predicate, Predicate, StlFormula};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ScenarioError {
    #[error("{path}: {message}")]
    Io { path: String, message: String },
    #[error("{path}:{line}:{column}: {message}")]
    Parse {
        path: String,
        line: usize,
        column: usize,
        message: String,
    },
    #[error("{path}: invalid scenario:\n  - {}", .violations.join("\n  - "))]
    Invalid {
        path: String,
        violations: Vec<String>,
    },
    #[error("{0}")]
    Build(String),
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawScenario {
    name: Option<String>,
    network: RawNetwork,
    #[serde(default)]
    task: RawTask,
    #[serde(default)]
    controller: RawController,
    #[serde(default)]
    sim: RawSim,
    #[serde(default)]
    output: OutputSpec,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawNetwork {
    agents: usize,
    #[serde(default = "one")]
    order: usize,
    laplacian: Option<Vec<Vec<f64>>>,
    edges: Option<Vec<[usize; 2]>>,
    drift: Option<Vec<RawDrift>>,
    #[serde(default = "unit")]
    gain: f64,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawDrift {
    agent: usize,
    source: usize,
    weight: f64,
    #[serde(default = "linear")]
    primitive: Primitive,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawTask {
    #[serde(default)]
    subtasks: Vec<RawSubtask>,
    #[serde(default)]
    predicates: BTreeMap<String, String>,
    envelope: Option<String>,
    envelope_margin: Option<f64>,
    envelope_offset: Option<f64>,
    tightening: Option<f64>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawSubtask {
    name: String,
    formula: String,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawController {
    mode: Option<String>,
    alpha: Option<f64>,
    beta: Option<f64>,
    mu: Option<f64>,
    gamma1: Option<f64>,
    gamma2: Option<f64>,
    k: Option<f64>,
    eta: Option<f64>,
    lambda1: Option<f64>,
    order: Option<toml::Value>,
    delta: Option<f64>,
    slack: Option<bool>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawSim {
    t0: Option<f64>,
    horizon: Option<f64>,
    dt: Option<f64>,
    x0: Option<Vec<f64>>,
    auto_refine: Option<bool>,
}

/// Where and what to write.
#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OutputSpec {
    pub dir: Option<String>,
    pub csv: bool,
    pub svg: bool,
}

impl Default for OutputSpec {
    fn default() -> Self {
        Self {
            dir: None,
            csv: true,
            svg: false,
        }
    }
}

fn one() -> usize {
    1
}
fn unit() -> f64 {
    1.0
}
fn linear() -> Primitive {
    Primitive::Linear
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum EnvelopeMode {
    /// Chain-aware when the chain has second-order terms, state-based
    /// otherwise.
    Auto,
    State,
    Chain,
    Fixed(f64),
}

#[derive(Debug, Clone, PartialEq)]
pub struct Subtask {
    pub name: String,
    pub formula: StlFormula,
}

/// A validated scenario.
#[derive(Debug, Clone, PartialEq)]
pub struct Scenario {
    pub name: String,
    pub path: Option<PathBuf>,
    pub dynamics: Dynamics,
    pub subtasks: Vec<Subtask>,
    pub predicates: BTreeMap<String, Predicate>,
    pub envelope: EnvelopeMode,
    pub envelope_margin: f64,
    pub tightening: f64,
    pub params: ControllerParams,
    pub eta: f64,
    pub lambda: ClassK,
    pub chain_order: ChainOrder,
    pub delta: Option<f64>,
    pub t0: f64,
    pub horizon: f64,
    pub dt: f64,
    pub x0: Vec<f64>,
    pub auto_refine: bool,
    pub output: OutputSpec,
}

/// Reads and validates a scenario file. A missing `.toml` extension is
/// tolerated.
pub fn load_scenario(path: impl AsRef<Path>) -> Result<Scenario, ScenarioError> {
    let mut path = path.as_ref().to_path_buf();
    if !path.exists() && path.extension().is_none() {
        path.set_extension("toml");
    }
    let shown = path.display().to_string();
    let text = std::fs::read_to_string(&path).map_err(|e| ScenarioError::Io {
        path: shown.clone(),
        message: e.to_string(),
    })?;
    let mut sc = parse_scenario(&text, &shown)?;
    sc.path = Some(path);
    if sc.name.is_empty() {
        sc.name = sc
            .path
            .as_ref()
            .and_then(|p| p.file_stem())
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_default();
    }
    Ok(sc)
}

/// Parses and validates scenario text; `origin` labels error messages.
pub fn parse_scenario(text: &str, origin: &str) -> Result<Scenario, ScenarioError> {
    let raw: RawScenario = toml::from_str(text).map_err(|e| {
        let (line, column) = e.span().map(|s| line_col(text, s.start)).unwrap_or((0, 0));
        ScenarioError::Parse {
            path: origin.to_string(),
            line,
            column,
            message: e.message().to_string(),
        }
    })?;
    validate(raw, origin)
}

fn line_col(text: &str, offset: usize) -> (usize, usize) {
    let before = &text[..offset.min(text.len())];
    let line = before.matches('\n').count() + 1;
    let column = before
        .rfind('\n')
        .map_or(before.len(), |i| before.len() - i - 1)
        + 1;
    (line, column)
}

fn validate(raw: RawScenario, origin: &str) -> Result<Scenario, ScenarioError> {
    let mut bad: Vec<String> = Vec::new();
    let net = &raw.network;
    let n = net.agents;

    let order = Order::from_usize(net.order);
    if order.is_none() {
        bad.push(format!("network.order must be 1 or 2, got {}", net.order));
    }
    if n == 0 {
        bad.push("network.agents must be at least 1".into());
    }
    let order = order.unwrap_or(Order::First);
    let layout = StateLayout::new(n, order);

    let dynamics = if n == 0 {
        None
    } else {
        match build_dynamics(net, order) {
            Ok(d) => Some(d),
            Err(msgs) => {
                bad.extend(msgs);
                None
            }
        }
    };

    // Task.
    let mut predicates = BTreeMap::new();
    for (name, text) in &raw.task.predicates {
        match parse_predicate(text) {
            Ok(mut p) => {
                p.name = Some(name.clone());
                predicates.insert(name.clone(), p);
            }
            Err(e) => bad.push(format!("task.predicates.{name}: {e}")),
        }
    }
    let mut subtasks = Vec::new();
    for st in &raw.task.subtasks {
        match parse_formula_with(&st.formula, &predicates) {
            Ok(f) => {
                if n > 0 {
                    if let Err(e) = check_variables(&f, &layout) {
                        bad.push(format!("task `{}`: {e}", st.name));
                    }
                }
                subtasks.push(Subtask {
                    name: st.name.clone(),
                    formula: f,
                });
            }
            Err(e) => bad.push(format!("task `{}`: {e}", st.name)),
        }
    }
    let envelope = match (raw.task.envelope.as_deref(), raw.task.envelope_offset) {
        (_, Some(g)) if g > 0.0 => {
            bad.push(format!("task.envelope_offset must be <= 0, got {g}"));
            EnvelopeMode::Auto
        }
        (None | Some("fixed"), Some(g)) => EnvelopeMode::Fixed(g),
        (None | Some("auto"), None) => EnvelopeMode::Auto,
        (Some("state"), _) => EnvelopeMode::State,
        (Some("chain"), _) => EnvelopeMode::Chain,
        (Some(other), _) => {
            bad.push(format!(
                "task.envelope must be auto, state, chain or fixed, got `{other}`"
            ));
            EnvelopeMode::Auto
        }
    };
    let envelope_margin = raw.task.envelope_margin.unwrap_or(0.1);
    if !(envelope_margin >= 0.0 && envelope_margin.is_finite()) {
        bad.push(format!(
            "task.envelope_margin must be >= 0, got {envelope_margin}"
        ));
    }
    let tightening = raw.task.tightening.unwrap_or(0.0);
    if !(tightening >= 0.0 && tightening.is_finite()) {
        bad.push(format!("task.tightening must be >= 0, got {tightening}"));
    }

    // Controller.
    let c = &raw.controller;
    let mode = match c.mode.as_deref().unwrap_or("full") {
        "full" | "full_info" => InfoMode::FullInfo,
        "partial" | "partial_info" => InfoMode::PartialInfo,
        other => {
            bad.push(format!(
                "controller.mode must be full or partial, got `{other}`"
            ));
            InfoMode::FullInfo
        }
    };
    let (alpha, beta) = (c.alpha.unwrap_or(1.0), c.beta.unwrap_or(1.0));
    let gains = match (c.mu, c.gamma1, c.gamma2) {
        (Some(mu), None, None) => FixedTimeGains::from_mu(alpha, beta, mu),
        (None, Some(g1), Some(g2)) => FixedTimeGains::from_exponents(alpha, beta, g1, g2),
        (None, None, None) => FixedTimeGains::from_mu(alpha, beta, 2.0),
        _ => {
            bad.push("controller: give either mu or both gamma1 and gamma2".into());
            FixedTimeGains::from_mu(alpha, beta, 2.0)
        }
    };
    let params = match gains.and_then(|g| ControllerParams::new(g, c.k.unwrap_or(2.0), mode)) {
        Ok(p) => Some(p.with_slack(c.slack.unwrap_or(mode == InfoMode::PartialInfo))),
        Err(e) => {
            bad.push(format!("controller: {e}"));
            None
        }
    };
    let eta = c.eta.unwrap_or(10.0);
    if !(eta > 0.0 && eta.is_finite()) {
        bad.push(format!("controller.eta must be > 0, got {eta}"));
    }
    let slope = c.lambda1.unwrap_or(1.0);
    if !(slope > 0.0 && slope.is_finite()) {
        bad.push(format!("controller.lambda1 must be > 0, got {slope}"));
    }
    let chain_order = match &c.order {
        None => {
            if order == Order::Second {
                ChainOrder::PerOperator
            } else {
                ChainOrder::One
            }
        }
        Some(toml::Value::Integer(1)) => ChainOrder::One,
        Some(toml::Value::Integer(2)) => ChainOrder::Two,
        Some(toml::Value::String(s)) if s == "mixed" || s == "per_operator" => {
            ChainOrder::PerOperator
        }
        Some(other) => {
            bad.push(format!(
                "controller.order must be 1, 2 or \"mixed\", got {other}"
            ));
            ChainOrder::One
        }
    };
    if chain_order == ChainOrder::Two && n > 0 {
        let input = layout.var_at(layout.input_slot());
        for st in &subtasks {
            if st.formula.predicates().iter().any(|p| p.depends_on(input)) {
                bad.push(format!(
                    "task `{}` constrains {input}, which has relative degree 1; use controller.order = 1 or \"mixed\"",
                    st.name
                ));
            }
        }
    }
    if let Some(d) = c.delta {
        if !(d >= 0.0 && d.is_finite()) {
            bad.push(format!("controller.delta must be >= 0, got {d}"));
        }
    }

    // Simulation.
    let formula_horizon = subtasks
        .iter()
        .map(|s| s.formula.horizon())
        .fold(0.0, f64::max);
    let t0 = raw.sim.t0.unwrap_or(0.0);
    let horizon = raw.sim.horizon.unwrap_or(t0 + formula_horizon);
    let dt = raw.sim.dt.unwrap_or(0.01);
    if !(dt > 0.0 && dt.is_finite()) {
        bad.push(format!("sim.dt must be > 0, got {dt}"));
    }
    if horizon.is_nan() || t0.is_nan() || horizon < t0 {
        bad.push(format!("sim.horizon {horizon} is before sim.t0 {t0}"));
    }
    let x0 = raw
        .sim
        .x0
        .clone()
        .unwrap_or_else(|| vec![0.0; layout.dim()]);
    if x0.len() != layout.dim() {
        bad.push(format!(
            "sim.x0 has {} entries, the network state has {}",
            x0.len(),
            layout.dim()
        ));
    }
    if x0.iter().any(|v| !v.is_finite()) {
        bad.push("sim.x0 must be finite".into());
    }

    if !bad.is_empty() {
        return Err(ScenarioError::Invalid {
            path: origin.to_string(),
            violations: bad,
        });
    }
    Ok(Scenario {
        name: raw.name.unwrap_or_default(),
        path: None,
        dynamics: dynamics.expect("validated"),
        subtasks,
        predicates,
        envelope,
        envelope_margin,
        tightening,
        params: params.expect("validated"),
        eta,
        lambda: ClassK::Linear { slope },
        chain_order,
        delta: c.delta,
        t0,
        horizon,
        dt,
        x0,
        auto_refine: raw.sim.auto_refine.unwrap_or(true),
        output: raw.output,
    })
}

fn build_dynamics(net: &RawNetwork, order: Order) -> Result<Dynamics, Vec<String>> {
    let n = net.agents;
    match (&net.laplacian, &net.drift) {
        (Some(_), Some(_)) => Err(vec![
            "network: give either laplacian or drift, not both".into()
        ]),
        (Some(l), None) => {
            Dynamics::from_laplacian(order, l, net.gain).map_err(|e| vec![format!("network: {e}")])
        }
        (None, drift) => {
            let mut bad = Vec::new();
            let mut edges = Vec::new();
            for e in net.edges.iter().flatten() {
                if e[0] == 0 || e[1] == 0 || e[0] > n || e[1] > n {
                    bad.push(format!(
                        "network.edges: agent index out of 1..={n} in {e:?}"
                    ));
                } else {
                    edges.push((e[0] - 1, e[1] - 1));
                }
            }
            let mut terms = Vec::new();
            for d in drift.iter().flatten() {
                if d.agent == 0 || d.source == 0 || d.agent > n || d.source > n {
                    bad.push(format!("network.drift: agent index out of 1..={n}"));
                } else {
                    terms.push(DriftTerm {
                        agent: d.agent - 1,
                        source: d.source - 1,
                        weight: d.weight,
                        primitive: d.primitive,
                    });
                }
            }
            if !bad.is_empty() {
                return Err(bad);
            }
            let graph = Graph::new(n, &edges).map_err(|e| vec![format!("network: {e}")])?;
            Dynamics::new(graph, order, terms, net.gain).map_err(|e| vec![format!("network: {e}")])
        }
    }
}

impl Scenario {
    pub fn layout(&self) -> StateLayout {
        self.dynamics.layout()
    }

    /// Conjunction of all subtasks.
    pub fn formula(&self) -> StlFormula {
        self.subtasks
            .iter()
            .map(|s| s.formula.clone())
            .reduce(|a, b| StlFormula::And(Box::new(a), Box::new(b)))
            .unwrap_or(StlFormula::True)
    }

    /// Envelope initialisation for a run started at `x0`.
    pub fn envelope_init(&self, x0: &[f64]) -> Result<EnvelopeInit, ScenarioError> {
        let chain = match self.envelope {
            EnvelopeMode::Fixed(g) => return Ok(EnvelopeInit::Fixed(g)),
            EnvelopeMode::State => false,
            EnvelopeMode::Chain => true,
            EnvelopeMode::Auto => self.chain_order != ChainOrder::One,
        };
        if chain {
            let drift = self
                .dynamics
                .drift(x0)
                .map_err(|e| ScenarioError::Build(e.to_string()))?;
            Ok(EnvelopeInit::FromChain {
                x0: x0.to_vec(),
                margin: self.envelope_margin,
                drift,
                lambda: self.lambda,
            })
        } else {
            Ok(EnvelopeInit::FromState {
                x0: x0.to_vec(),
                margin: self.envelope_margin,
            })
        }
    }

    pub fn build_barrier(&self, init: &EnvelopeInit) -> Result<TimeVaryingBarrier, ScenarioError> {
        build_barrier(
            &self.formula(),
            self.layout(),
            self.eta,
            self.t0,
            init,
            self.tightening,
        )
        .map_err(|e| ScenarioError::Build(e.to_string()))
    }

    pub fn build_chain(&self, init: &EnvelopeInit) -> Result<PsiChain, ScenarioError> {
        build_psi_chain(
            self.build_barrier(init)?,
            self.chain_order,
            self.lambda,
            self.dynamics.clone(),
        )
        .map_err(|e| ScenarioError::Build(e.to_string()))
    }

    /// Controller whose envelopes are fitted to `x0`.
    pub fn controller_for(&self, x0: &[f64]) -> Result<LeaderController, ScenarioError> {
        let init = self.envelope_init(x0)?;
        Ok(LeaderController::new(self.build_chain(&init)?, self.params))
    }

    pub fn controller(&self) -> Result<LeaderController, ScenarioError> {
        self.controller_for(&self.x0)
    }
}
