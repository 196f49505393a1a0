use std::path::PathBuf;

use lfstl::scenario::parse_scenario;
use lfstl::sim::{run_scenario_with, RunOptions};
use lfstl::{
    build_barrier, build_psi_chain, evaluate, integrate, load_scenario, parse_formula, ChainOrder,
    ClassK, ControllerParams, Dynamics, EnvelopeInit, FixedTimeGains, InfoMode, LeaderController,
    Order, Scenario, Trajectory,
};

fn scenario(name: &str) -> Scenario {
    let path = PathBuf::from(env!("CARGO_MANIFEST_DIR"))
        .join("../../scenarios")
        .join(name);
    load_scenario(path).unwrap()
}

/// First-order path of three agents under a task that is met with a wide
/// margin, so the leader input stays zero.
fn idle_controller(task: &str) -> LeaderController {
    let l = vec![
        vec![1.0, -1.0, 0.0],
        vec![-1.0, 2.0, -1.0],
        vec![0.0, -1.0, 1.0],
    ];
    let d = Dynamics::from_laplacian(Order::First, &l, 1.0).unwrap();
    let b = build_barrier(
        &parse_formula(task).unwrap(),
        d.layout(),
        10.0,
        0.0,
        &EnvelopeInit::Fixed(0.0),
        0.0,
    )
    .unwrap();
    let c = build_psi_chain(b, ChainOrder::One, ClassK::Linear { slope: 1.0 }, d).unwrap();
    let p = ControllerParams::new(
        FixedTimeGains::from_mu(1.0, 1.0, 2.0).unwrap(),
        2.0,
        InfoMode::FullInfo,
    )
    .unwrap();
    LeaderController::new(c, p)
}

#[test]
fn consensus_equilibrium_stays_put() {
    let ctl = idle_controller("G[0,10](x1 - x3 <= 50)");
    let x0 = [1.5, 1.5, 1.5];
    let run = integrate(&ctl, &x0, 0.0, 10.0, 0.05).unwrap();
    assert!(run.trajectory.states.iter().all(|x| x == &x0));
    assert!(run.trajectory.u.iter().all(|u| *u == 0.0));
}

#[test]
fn rk4_error_shrinks_like_dt_to_the_fourth() {
    // Zero input throughout, so the run is plain RK4 on x' = -L x.
    let ctl = idle_controller("G[0,2](x1 - x3 <= 50)");
    let x0 = [2.0, -1.0, 0.5];
    let end_state = |dt: f64| {
        let run = integrate(&ctl, &x0, 0.0, 2.0, dt).unwrap();
        assert!(run.trajectory.u.iter().all(|u| *u == 0.0));
        run.trajectory.states.last().unwrap().clone()
    };
    let reference = end_state(0.025 / 32.0);
    let err = |dt: f64| {
        let x = end_state(dt);
        x.iter()
            .zip(&reference)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    };
    for dt in [0.1, 0.05] {
        let ratio = err(dt) / err(dt / 2.0);
        assert!((12.0..=20.0).contains(&ratio), "dt = {dt}: ratio {ratio}");
    }
}

#[test]
fn verdicts_survive_a_csv_round_trip() {
    let sc = scenario("three_agents_partial.toml");
    let out = run_scenario_with(&sc, &RunOptions::default()).unwrap();
    let mut bytes = Vec::new();
    out.trajectory.write_csv(&mut bytes).unwrap();
    let back = Trajectory::read_csv(bytes.as_slice()).unwrap();
    let signal = back.signal();
    for (st, v) in sc.subtasks.iter().zip(&out.report.verdicts) {
        assert_eq!(
            evaluate(&st.formula, &signal, sc.t0).unwrap(),
            v.satisfied,
            "{}",
            st.name
        );
    }
    let mut again = Vec::new();
    back.write_csv(&mut again).unwrap();
    assert_eq!(bytes, again);
}

#[test]
fn runs_are_deterministic() {
    let sc = scenario("three_agents_full.toml");
    let csv = || {
        let out = run_scenario_with(&sc, &RunOptions::default()).unwrap();
        let mut bytes = Vec::new();
        out.trajectory.write_csv(&mut bytes).unwrap();
        bytes
    };
    assert_eq!(csv(), csv());
}

#[test]
fn estimated_delta_is_deterministic_for_a_seed() {
    let mut sc = scenario("three_agents_partial.toml");
    sc.delta = None;
    let opts = RunOptions {
        seed: 3,
        delta_samples: Some(500),
        ..Default::default()
    };
    let a = run_scenario_with(&sc, &opts).unwrap().report;
    let b = run_scenario_with(&sc, &opts).unwrap().report;
    let (ca, cb) = (a.certificate.unwrap(), b.certificate.unwrap());
    assert_eq!(ca.delta, cb.delta);
    assert!(a.delta_source.starts_with("estimated"));
    assert!(ca.delta > 0.0 && ca.delta <= 2.86, "{}", ca.delta);
}

#[test]
fn zero_horizon_gives_a_single_row() {
    let sc = parse_scenario(
        "[network]\nagents = 2\nlaplacian = [[1, -1], [-1, 1]]\n[sim]\nx0 = [1, 2]\n",
        "zero",
    )
    .unwrap();
    let out = run_scenario_with(&sc, &RunOptions::default()).unwrap();
    assert_eq!(out.trajectory.len(), 1);
    assert_eq!(out.trajectory.states[0], vec![1.0, 2.0]);
    assert!(out.report.all_satisfied);
}

#[test]
fn full_information_run_meets_every_subtask() {
    let out =
        run_scenario_with(&scenario("three_agents_full.toml"), &RunOptions::default()).unwrap();
    assert!(out.report.all_satisfied, "{}", out.report);
    assert!(out.report.singularities.is_empty());
}
