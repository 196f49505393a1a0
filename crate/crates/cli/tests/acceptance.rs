//! Acceptance criteria 1-8, one PASS/FAIL line each. Runs without the
//! libtest harness so the lines are always printed.

use std::path::PathBuf;
use std::process::{Command, ExitCode};
use std::time::{Duration, Instant};

use lfstl::barrier::softmin_weights;
use lfstl::control::{comparison_reach_time, lemma_bound};
use lfstl::sim::{invariance_tol, run_scenario_with, RunOptions};
use lfstl::{
    build_barrier, build_psi_chain, fixed_time_bound, integrate, load_scenario, parse_formula,
    smooth_min, solve_min_norm, Branch, ChainOrder, ClassK, ConstraintRow, ControllerParams,
    Dynamics, EnvelopeInit, FixedTimeGains, InfoMode, LeaderController, Order, StateLayout,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

type Outcome = Result<String, String>;
type Criterion = (&'static str, fn() -> Outcome);

fn root() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../..")
}

fn scenario_path(name: &str) -> PathBuf {
    root().join("scenarios").join(name)
}

fn check(ok: bool, detail: String) -> Outcome {
    if ok {
        Ok(detail)
    } else {
        Err(detail)
    }
}

/// Criterion 1: `certify` at delta = 2.86 prints eps_max = 6.01 +- 0.01 within 1 s.
fn certificate() -> Outcome {
    let started = Instant::now();
    let out = Command::new(env!("CARGO_BIN_EXE_lfstl"))
        .args(["certify", "--delta", "2.86", "--json", "--scenario"])
        .arg(scenario_path("three_agents_partial.toml"))
        .output()
        .map_err(|e| e.to_string())?;
    let took = started.elapsed();
    if !out.status.success() {
        return Err(String::from_utf8_lossy(&out.stderr).into_owned());
    }
    let v: serde_json::Value = serde_json::from_slice(&out.stdout).map_err(|e| e.to_string())?;
    let eps = v["certificate"]["eps_max"]
        .as_f64()
        .ok_or("no eps_max in output")?;
    check(
        (eps - 6.01).abs() <= 0.01 && took < Duration::from_secs(1),
        format!("eps_max = {eps:.4}, {:.0} ms", took.as_secs_f64() * 1e3),
    )
}

/// Criterion 2: Full-information run: every verdict true, window minima >= -1e-3,
/// under 30 s.
fn full_information() -> Outcome {
    let sc = load_scenario(scenario_path("three_agents_full.toml")).map_err(|e| e.to_string())?;
    let started = Instant::now();
    let out = run_scenario_with(&sc, &RunOptions::default()).map_err(|e| e.to_string())?;
    let took = started.elapsed();
    let r = &out.report;
    let worst = r
        .windows
        .iter()
        .map(|w| w.min_h)
        .fold(f64::INFINITY, f64::min);
    let verdicts: Vec<String> = r
        .verdicts
        .iter()
        .map(|v| format!("{}={}", v.name, v.satisfied))
        .collect();
    check(
        r.all_satisfied && worst >= -1e-3 && took < Duration::from_secs(30),
        format!(
            "{}, worst window min h = {worst:.2e}, {:.2} s",
            verdicts.join(" "),
            took.as_secs_f64()
        ),
    )
}

/// Criterion 3: Partial-information run: h >= -6.01 throughout and every violated
/// subtask has a flagged window.
fn partial_information() -> Outcome {
    let sc =
        load_scenario(scenario_path("three_agents_partial.toml")).map_err(|e| e.to_string())?;
    let out = run_scenario_with(&sc, &RunOptions::default()).map_err(|e| e.to_string())?;
    let r = &out.report;
    let robust = r.robust.as_ref().ok_or("no robust check in report")?;
    let unflagged: Vec<&str> = r
        .verdicts
        .iter()
        .filter(|v| !v.satisfied && !r.predicate_violations.iter().any(|p| p.subtask == v.name))
        .map(|v| v.name.as_str())
        .collect();
    let flagged: Vec<String> = r
        .predicate_violations
        .iter()
        .map(|p| format!("{} [{:.2}, {:.2}]", p.subtask, p.start, p.end))
        .collect();
    check(
        r.min_h >= -6.01 && robust.holds && unflagged.is_empty(),
        format!(
            "min h = {:.4} vs bound {:.4}, flagged: {}, unflagged violations: {unflagged:?}",
            r.min_h,
            robust.bound,
            if flagged.is_empty() {
                "none".into()
            } else {
                flagged.join(", ")
            }
        ),
    )
}

/// Criterion 4: Comparison system reaches eps_max within 1.01 T for 50 draws, and
/// reaches zero within the lemma bound when delta = 0.
fn comparison_ode() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let mut misses = Vec::new();
    let mut lemma_misses = Vec::new();
    let mut checked = 0;
    for draw in 0..50 {
        let (alpha, beta): (f64, f64) = (rng.gen_range(0.5..3.0), rng.gen_range(0.5..3.0));
        let mu = rng.gen_range(1.2..5.0);
        let k = rng.gen_range(1.1..3.0);
        let delta = if draw % 5 == 4 {
            2.0 * (alpha * beta).sqrt()
        } else {
            rng.gen_range(0.0..6.0)
        };
        let gains = FixedTimeGains::from_mu(alpha, beta, mu).map_err(|e| e.to_string())?;
        let params =
            ControllerParams::new(gains, k, InfoMode::PartialInfo).map_err(|e| e.to_string())?;
        let cert = fixed_time_bound(&params, delta).map_err(|e| e.to_string())?;
        if draw % 5 == 4 && cert.branch != Branch::Equal {
            return Err(format!("draw {draw} missed the boundary branch"));
        }
        let lemma = lemma_bound(&gains);
        for v0 in [0.01, 1.0, 100.0, 1e6] {
            checked += 1;
            if comparison_reach_time(&gains, delta, v0, cert.eps_max, 1.01 * cert.t_bound).is_none()
            {
                misses.push(format!("#{draw} {:?} V0={v0}", cert.branch));
            }
            match comparison_reach_time(&gains, 0.0, v0, 0.0, lemma) {
                Some(_) => {}
                None => lemma_misses.push(format!("#{draw} V0={v0}")),
            }
        }
    }
    let mut by_branch = [0usize; 3];
    for m in &misses {
        let i = if m.contains("Above") {
            0
        } else if m.contains("Equal") {
            1
        } else {
            2
        };
        by_branch[i] += 1;
    }
    check(
        misses.is_empty() && lemma_misses.is_empty(),
        format!(
            "{}/{checked} cases miss eps_max within 1.01 T (Above {}, Equal {}, Below {}); delta = 0 lemma misses: {}",
            misses.len(),
            by_branch[0],
            by_branch[1],
            by_branch[2],
            lemma_misses.len()
        ),
    )
}

/// Projection of the origin onto `{a . z >= b}` by minimising over the
/// boundary line.
fn line_projection(row: &ConstraintRow) -> (f64, f64) {
    if row.b <= 0.0 {
        return (0.0, 0.0);
    }
    let p0 = if row.a_u.abs() >= row.a_eps.abs() {
        (row.b / row.a_u, 0.0)
    } else {
        (0.0, row.b / row.a_eps)
    };
    let d = (-row.a_eps, row.a_u);
    let s = -(p0.0 * d.0 + p0.1 * d.1) / (d.0 * d.0 + d.1 * d.1);
    (p0.0 + s * d.0, p0.1 + s * d.1)
}

/// Criterion 5: Minimum-norm solution equals the projection oracle on 1e4 rows.
fn qp_oracle() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let mut worst: f64 = 0.0;
    let mut bad = 0;
    for i in 0..10_000 {
        let row = ConstraintRow {
            a_u: rng.gen_range(-10.0..10.0),
            a_eps: if i % 2 == 0 { 1.0 } else { 0.0 },
            b: rng.gen_range(-10.0..10.0),
        };
        if row.a_u.abs() < 1e-3 && row.a_eps == 0.0 {
            continue;
        }
        let (u, e) = solve_min_norm(&row).map_err(|e| e.to_string())?;
        let (ou, oe) = line_projection(&row);
        let scale = 1.0f64.max(u.abs()).max(e.abs());
        let err = (u - ou).abs().max((e - oe).abs()) / scale;
        worst = worst.max(err);
        let lhs = row.a_u * u + row.a_eps * e;
        let feasible = lhs >= row.b - 1e-9;
        let complementary = if row.b > 0.0 {
            (lhs - row.b).abs() <= 1e-9 * row.b.max(1.0)
        } else {
            u == 0.0 && e == 0.0
        };
        if err > 1e-9 || !feasible || !complementary {
            bad += 1;
        }
    }
    check(
        bad == 0,
        format!("max rel diff {worst:.1e}, {bad} bad rows"),
    )
}

/// Criterion 6: Smooth-min sandwich, softmin weights, gradients against central
/// differences and set growth at switches.
fn barrier_suite() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    for _ in 0..1000 {
        let n = rng.gen_range(1..12);
        let vals: Vec<f64> = (0..n).map(|_| rng.gen_range(-50.0..50.0)).collect();
        let eta = rng.gen_range(0.1..100.0);
        let h = smooth_min(&vals, eta).map_err(|e| e.to_string())?;
        let m = vals.iter().copied().fold(f64::INFINITY, f64::min);
        if h > m + 1e-12 || h < m - (n as f64).ln() / eta - 1e-12 {
            return Err(format!("sandwich fails at {vals:?}, eta {eta}"));
        }
        let w = softmin_weights(&vals, eta).map_err(|e| e.to_string())?;
        if (w.iter().sum::<f64>() - 1.0).abs() > 1e-12 {
            return Err("weights do not sum to one".into());
        }
    }

    let task = "G[0,20](p1 - p3 <= 3) AND F[0,40](4 - sq(p2 - p3) >= 0) AND G[5,30](v1 + 2 <= 5) \
                AND F[2,25](9 - sq(v3) - sq(p1) >= 0)";
    let layout = StateLayout::new(3, Order::Second);
    let b = build_barrier(
        &parse_formula(task).unwrap(),
        layout,
        10.0,
        0.0,
        &EnvelopeInit::Fixed(-1.0),
        0.0,
    )
    .map_err(|e| e.to_string())?;
    let kinks = [0.0, 2.0, 5.0, 20.0, 25.0, 30.0, 40.0];
    let mut worst: f64 = 0.0;
    for _ in 0..100 {
        let x: Vec<f64> = (0..6).map(|_| rng.gen_range(-2.0..2.0)).collect();
        let t = loop {
            let t: f64 = rng.gen_range(0.0..39.0);
            if kinks.iter().all(|k| (t - k).abs() > 1e-3) {
                break t;
            }
        };
        let ev = b.evaluate(&x, t).map_err(|e| e.to_string())?;
        let step = 1e-6;
        let fd: Vec<f64> = (0..6)
            .map(|i| {
                let (mut hi, mut lo) = (x.clone(), x.clone());
                hi[i] += step;
                lo[i] -= step;
                (b.value(&hi, t).unwrap() - b.value(&lo, t).unwrap()) / (2.0 * step)
            })
            .collect();
        let diff = ev
            .grad
            .iter()
            .zip(&fd)
            .map(|(a, c)| (a - c).powi(2))
            .sum::<f64>()
            .sqrt();
        let norm = ev.grad.iter().map(|a| a * a).sum::<f64>().sqrt().max(1e-3);
        worst = worst.max(diff / norm);
    }
    if worst > 1e-5 {
        return Err(format!("gradient rel err {worst:.1e}"));
    }
    for &tau in &b.schedule.instants[1..b.schedule.instants.len() - 1] {
        for _ in 0..50 {
            let x: Vec<f64> = (0..6).map(|_| rng.gen_range(-3.0..3.0)).collect();
            if b.value(&x, tau).unwrap() < b.value(&x, tau - 1e-9).unwrap() - 1e-8 {
                return Err(format!("barrier drops at switch {tau}"));
            }
        }
    }
    Ok(format!(
        "1000 sandwich/weight draws, gradient rel err {worst:.1e}, {} switches",
        b.schedule.instants.len() - 2
    ))
}

/// Random first-order star with the leader last, a task on
/// follower-leader offsets and a starting point inside the set.
fn random_star(rng: &mut ChaCha8Rng) -> (LeaderController, Vec<f64>, f64) {
    loop {
        let n = rng.gen_range(3..=6);
        let leader = n - 1;
        let mut l = vec![vec![0.0; n]; n];
        for i in 0..leader {
            let w = rng.gen_range(0.3..2.0);
            l[i][i] = w;
            l[i][leader] = -w;
            l[leader][i] = -w;
            l[leader][leader] += w;
        }
        let d = Dynamics::from_laplacian(Order::First, &l, rng.gen_range(0.5..2.0)).unwrap();
        let x0: Vec<f64> = (0..n).map(|_| rng.gen_range(-3.0..3.0)).collect();
        let ops = rng.gen_range(1..=4);
        let mut parts = Vec::new();
        let mut horizon: f64 = 0.0;
        for _ in 0..ops {
            let i = rng.gen_range(1..=leader);
            let a = rng.gen_range(0..10) as f64;
            let b = a + rng.gen_range(2..15) as f64;
            horizon = horizon.max(b);
            let c = rng.gen_range(5..30) as f64 / 10.0;
            let op = if rng.gen_bool(0.5) { "G" } else { "F" };
            parts.push(format!("{op}[{a},{b}](abs(x{i} - x{n}) <= {c})"));
        }
        let f = parse_formula(&parts.join(" AND ")).unwrap();
        // Just enough margin to offset the smooth minimum, so runs start
        // next to the boundary of the set.
        let margin = (ops as f64).ln() / 10.0 + rng.gen_range(0.0..0.02);
        let init = EnvelopeInit::FromState {
            x0: x0.clone(),
            margin,
        };
        let b = build_barrier(&f, d.layout(), 10.0, 0.0, &init, 0.0).unwrap();
        let chain = build_psi_chain(b, ChainOrder::One, ClassK::Linear { slope: 1.0 }, d).unwrap();
        if chain.evaluate(&x0, 0.0).unwrap().h < 0.0 {
            continue;
        }
        let gains = FixedTimeGains::from_mu(1.0, 1.0, 2.0).unwrap();
        let p = ControllerParams::new(gains, 2.0, InfoMode::FullInfo).unwrap();
        return (LeaderController::new(chain, p), x0, horizon);
    }
}

/// Criterion 7: Forward invariance on 20 random first-order stars.
fn forward_invariance() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let dt = 0.01;
    let mut worst = f64::INFINITY;
    let mut fails = Vec::new();
    for s in 0..20 {
        let (ctl, x0, horizon) = random_star(&mut rng);
        let run = integrate(&ctl, &x0, 0.0, horizon, dt).map_err(|e| e.to_string())?;
        let tol = invariance_tol(&run.trajectory, dt);
        let min_h = run
            .trajectory
            .h
            .iter()
            .copied()
            .filter(|h| h.is_finite())
            .fold(f64::INFINITY, f64::min);
        worst = worst.min(min_h);
        if min_h < -tol {
            fails.push(format!("#{s}: min h {min_h:.2e} < -{tol:.1e}"));
        }
    }
    check(
        fails.is_empty(),
        format!(
            "worst min h = {worst:.2e}; {} of 20 below tolerance {fails:?}",
            fails.len()
        ),
    )
}

/// Criterion 8: Full-information scenario from 10 random x0 with |x0| <= 50: h >= 0
/// is reached within the certified T and kept.
fn initial_condition_independence() -> Outcome {
    let sc = load_scenario(scenario_path("three_agents_full.toml")).map_err(|e| e.to_string())?;
    let t_bound = fixed_time_bound(&sc.params, 0.0)
        .map_err(|e| e.to_string())?
        .t_bound;
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let mut rows = Vec::new();
    let mut fails = 0;
    for _ in 0..10 {
        // Uniform in the ball: Gaussian direction, radius r^(1/6).
        let dir: Vec<f64> = (0..6)
            .map(|_| rng.sample::<f64, _>(StandardNormal))
            .collect();
        let norm = dir.iter().map(|v| v * v).sum::<f64>().sqrt();
        let r = 50.0 * rng.gen_range(0.0f64..1.0).powf(1.0 / 6.0);
        let x0: Vec<f64> = dir.iter().map(|v| v / norm * r).collect();
        let opts = RunOptions {
            x0: Some(x0),
            envelope_state: Some(sc.x0.clone()),
            ..Default::default()
        };
        let out = run_scenario_with(&sc, &opts).map_err(|e| e.to_string())?;
        let c = &out.report.convergence;
        let settle = c.settle.map(|t| t - sc.t0);
        let ok = settle.is_some_and(|t| t <= t_bound);
        fails += usize::from(!ok);
        let show = |t: Option<f64>| t.map_or("never".to_string(), |t| format!("{:.2}", t - sc.t0));
        rows.push(format!("{}/{}", show(c.settle), show(c.psi_settle)));
    }
    check(
        fails == 0,
        format!(
            "T = {t_bound:.4}; settle times h/psi [{}]; {fails} of 10 late",
            rows.join(", ")
        ),
    )
}

fn main() -> ExitCode {
    let criteria: [Criterion; 8] = [
        ("certificate reproduction", certificate),
        ("full-information scenario", full_information),
        ("partial-information scenario", partial_information),
        ("comparison-ODE suite", comparison_ode),
        ("QP oracle equivalence", qp_oracle),
        ("barrier property suite", barrier_suite),
        ("forward invariance", forward_invariance),
        (
            "initial-condition independence",
            initial_condition_independence,
        ),
    ];
    let mut failed = 0;
    for (i, (name, f)) in criteria.iter().enumerate() {
        let (tag, detail) = match f() {
            Ok(d) => ("PASS", d),
            Err(d) => {
                failed += 1;
                ("FAIL", d)
            }
        };
        println!("criterion {}: {tag}  {name}: {detail}", i + 1);
    }
    println!(
        "acceptance: {} passed, {failed} failed",
        criteria.len() - failed
    );
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
