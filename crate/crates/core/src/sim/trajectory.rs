use std::io::{BufRead, Write};

use crate::state::{Order, StateLayout};
use crate::stl::Signal;

use super::SimError;

/// CSV schema version written in the first line.
pub const CSV_VERSION: u32 = 1;

/// Closed-loop samples on the grid `t0 + k dt`. `u[k]` and `eps[k]` are
/// the values applied on `[t_k, t_{k+1})`; `h` and `psi1` are NaN where no
/// operator is active.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub layout: StateLayout,
    pub t0: f64,
    pub dt: f64,
    pub states: Vec<Vec<f64>>,
    pub u: Vec<f64>,
    pub eps: Vec<f64>,
    pub h: Vec<f64>,
    pub psi1: Vec<f64>,
    pub switch: Vec<bool>,
}

impl Trajectory {
    pub fn new(layout: StateLayout, t0: f64, dt: f64) -> Self {
        Self {
            layout,
            t0,
            dt,
            states: Vec::new(),
            u: Vec::new(),
            eps: Vec::new(),
            h: Vec::new(),
            psi1: Vec::new(),
            switch: Vec::new(),
        }
    }

    pub fn len(&self) -> usize {
        self.states.len()
    }

    pub fn is_empty(&self) -> bool {
        self.states.is_empty()
    }

    pub fn time(&self, k: usize) -> f64 {
        self.t0 + k as f64 * self.dt
    }

    pub fn times(&self) -> impl Iterator<Item = f64> + '_ {
        (0..self.len()).map(|k| self.time(k))
    }

    pub fn end_time(&self) -> f64 {
        self.time(self.len().saturating_sub(1))
    }

    pub fn signal(&self) -> Signal<'_> {
        Signal::new(self.t0, self.dt, &self.states, self.layout)
    }

    /// Writes the versioned CSV. Floats use the shortest representation that
    /// reads back to the same value.
    pub fn write_csv<W: Write>(&self, mut out: W) -> Result<(), SimError> {
        writeln!(
            out,
            "# lfstl trajectory v{CSV_VERSION} agents={} order={} t0={} dt={}",
            self.layout.agents,
            self.layout.order.as_usize(),
            self.t0,
            self.dt
        )
        .map_err(SimError::io)?;
        let mut w = csv::Writer::from_writer(out);
        let mut header = vec!["t".to_string()];
        header.extend(self.layout.var_names());
        header.extend(["u", "eps", "h", "psi1", "switch"].map(String::from));
        w.write_record(&header).map_err(SimError::csv)?;
        for k in 0..self.len() {
            let mut rec: Vec<String> = Vec::with_capacity(header.len());
            rec.push(self.time(k).to_string());
            rec.extend(self.states[k].iter().map(f64::to_string));
            for v in [self.u[k], self.eps[k], self.h[k], self.psi1[k]] {
                rec.push(v.to_string());
            }
            rec.push(u8::from(self.switch[k]).to_string());
            w.write_record(&rec).map_err(SimError::csv)?;
        }
        w.flush().map_err(SimError::io)?;
        Ok(())
    }

    pub fn read_csv<R: BufRead>(mut input: R) -> Result<Self, SimError> {
        let mut first = String::new();
        input.read_line(&mut first).map_err(SimError::io)?;
        let meta = parse_meta(&first)?;
        let mut r = csv::ReaderBuilder::new()
            .has_headers(true)
            .from_reader(input);
        let headers = r.headers().map_err(SimError::csv)?.clone();
        let layout = StateLayout::new(meta.agents, meta.order);
        let dim = layout.dim();
        let expected = dim + 6;
        if headers.len() != expected {
            return Err(SimError::Format(format!(
                "expected {expected} columns, found {}",
                headers.len()
            )));
        }
        let mut traj = Trajectory::new(layout, meta.t0, meta.dt);
        for (line, rec) in r.records().enumerate() {
            let rec = rec.map_err(SimError::csv)?;
            let num = |i: usize| -> Result<f64, SimError> {
                rec.get(i)
                    .ok_or_else(|| {
                        SimError::Format(format!("row {}: missing column {i}", line + 1))
                    })?
                    .parse::<f64>()
                    .map_err(|e| SimError::Format(format!("row {}: column {i}: {e}", line + 1)))
            };
            traj.states
                .push((1..=dim).map(num).collect::<Result<_, _>>()?);
            traj.u.push(num(dim + 1)?);
            traj.eps.push(num(dim + 2)?);
            traj.h.push(num(dim + 3)?);
            traj.psi1.push(num(dim + 4)?);
            traj.switch.push(num(dim + 5)? != 0.0);
        }
        Ok(traj)
    }
}

struct Meta {
    agents: usize,
    order: Order,
    t0: f64,
    dt: f64,
}

fn parse_meta(line: &str) -> Result<Meta, SimError> {
    let bad = || SimError::Format(format!("unrecognised trajectory header `{}`", line.trim()));
    let rest = line
        .trim()
        .strip_prefix("# lfstl trajectory v")
        .ok_or_else(bad)?;
    let mut parts = rest.split_whitespace();
    let version: u32 = parts.next().and_then(|v| v.parse().ok()).ok_or_else(bad)?;
    if version != CSV_VERSION {
        return Err(SimError::Format(format!(
            "unsupported trajectory version {version}"
        )));
    }
    let (mut agents, mut order, mut t0, mut dt) = (None, None, None, None);
    for kv in parts {
        let (k, v) = kv.split_once('=').ok_or_else(bad)?;
        match k {
            "agents" => agents = v.parse().ok(),
            "order" => order = v.parse().ok().and_then(Order::from_usize),
            "t0" => t0 = v.parse().ok(),
            "dt" => dt = v.parse().ok(),
            _ => {}
        }
    }
    Ok(Meta {
        agents: agents.ok_or_else(bad)?,
        order: order.ok_or_else(bad)?,
        t0: t0.ok_or_else(bad)?,
        dt: dt.ok_or_else(bad)?,
    })
}
