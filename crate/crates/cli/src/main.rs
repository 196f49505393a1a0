//! `lfstl`: run, certify, check and plot leader-follower STL scenarios.

mod plot;

use std::fs;
use std::io::{BufReader, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{anyhow, Context, Result};
use clap::{Args, Parser, Subcommand};
use lfstl::barrier::ChainOrder;
use lfstl::control::{fixed_time_bound, lemma_bound};
use lfstl::sim::{run_scenario_with, RunOptions, RunOutcome};
use lfstl::{evaluate, load_scenario, Scenario, Trajectory};
use serde_json::json;

#[derive(Parser)]
#[command(
    name = "lfstl",
    version,
    about = "STL tasks on leader-follower networks via time-varying barrier functions"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate a scenario and write the trajectory CSV and run report.
    Run(RunArgs),
    /// Print the fixed-time certificate for a scenario.
    Certify(CertifyArgs),
    /// Re-evaluate the STL tasks of a scenario on a saved trajectory CSV.
    Check(CheckArgs),
    /// Draw SVG plots from a trajectory CSV.
    Plot(PlotArgs),
}

#[derive(Args)]
struct Common {
    /// Scenario file (the `.toml` extension may be omitted).
    #[arg(long)]
    scenario: Option<PathBuf>,
    /// Output directory.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Override the integration step.
    #[arg(long)]
    dt: Option<f64>,
    /// Seed for the residual sampler.
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Also write SVG plots.
    #[arg(long)]
    svg: bool,
}

#[derive(Args)]
struct RunArgs {
    #[command(flatten)]
    common: Common,
    /// Run every scenario in a directory, one thread each.
    #[arg(long, conflicts_with = "scenario")]
    all: Option<PathBuf>,
    /// Override the disturbance bound used in the certificate.
    #[arg(long)]
    delta: Option<f64>,
}

#[derive(Args)]
struct CertifyArgs {
    #[command(flatten)]
    common: Common,
    /// Disturbance bound; estimated from a simulation when absent.
    #[arg(long)]
    delta: Option<f64>,
    /// Samples for the residual estimate.
    #[arg(long, default_value_t = 2000)]
    samples: usize,
    /// Print JSON instead of a table.
    #[arg(long)]
    json: bool,
}

#[derive(Args)]
struct CheckArgs {
    #[command(flatten)]
    common: Common,
    /// Trajectory CSV written by `run`.
    #[arg(long)]
    csv: PathBuf,
}

#[derive(Args)]
struct PlotArgs {
    #[command(flatten)]
    common: Common,
    /// Trajectory CSV written by `run`.
    #[arg(long)]
    csv: PathBuf,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Run(a) => cmd_run(a),
        Command::Certify(a) => cmd_certify(a),
        Command::Check(a) => cmd_check(a),
        Command::Plot(a) => cmd_plot(a),
    };
    match result {
        Ok(code) => code,
        Err(e) => {
            let kind = e.downcast_ref::<lfstl::Error>().map_or("cli", |e| e.kind());
            let line = json!({ "error": kind, "message": format!("{e:#}") });
            eprintln!("{line}");
            ExitCode::FAILURE
        }
    }
}

fn scenario_of(common: &Common) -> Result<Scenario> {
    let path = common
        .scenario
        .as_ref()
        .ok_or_else(|| anyhow!("--scenario is required"))?;
    Ok(load_scenario(path).map_err(lfstl::Error::from)?)
}

fn out_dir(common: &Common, scenario: Option<&Scenario>) -> PathBuf {
    common
        .out
        .clone()
        .or_else(|| scenario.and_then(|s| s.output.dir.as_ref().map(PathBuf::from)))
        .unwrap_or_else(|| PathBuf::from("out"))
}

fn cmd_run(args: RunArgs) -> Result<ExitCode> {
    if let Some(dir) = &args.all {
        return run_all(dir, &args);
    }
    let scenario = scenario_of(&args.common)?;
    let out = out_dir(&args.common, Some(&scenario));
    let outcome = run_one(&scenario, &args, &out)?;
    println!("{}", outcome.report);
    Ok(ExitCode::SUCCESS)
}

fn run_one(scenario: &Scenario, args: &RunArgs, out: &Path) -> Result<RunOutcome> {
    let opts = RunOptions {
        dt: args.common.dt,
        delta: args.delta,
        seed: args.common.seed,
        ..RunOptions::default()
    };
    let outcome = run_scenario_with(scenario, &opts)?;
    fs::create_dir_all(out).with_context(|| format!("creating {}", out.display()))?;
    let stem = out.join(&scenario.name);
    if scenario.output.csv {
        let csv_path = stem.with_extension("csv");
        let file = fs::File::create(&csv_path)
            .with_context(|| format!("writing {}", csv_path.display()))?;
        outcome
            .trajectory
            .write_csv(std::io::BufWriter::new(file))
            .map_err(lfstl::Error::from)?;
    }
    let report_path = stem.with_extension("report.json");
    fs::write(&report_path, serde_json::to_string_pretty(&outcome.report)?)
        .with_context(|| format!("writing {}", report_path.display()))?;
    if args.common.svg || scenario.output.svg {
        plot::write_all(&outcome.trajectory, out, &scenario.name)?;
    }
    Ok(outcome)
}

fn run_all(dir: &Path, args: &RunArgs) -> Result<ExitCode> {
    let mut paths: Vec<PathBuf> = fs::read_dir(dir)
        .with_context(|| format!("reading {}", dir.display()))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|e| e == "toml"))
        .collect();
    paths.sort();
    let out = args
        .common
        .out
        .clone()
        .unwrap_or_else(|| PathBuf::from("out"));
    let results: Vec<(PathBuf, Result<String>)> = std::thread::scope(|s| {
        let handles: Vec<_> = paths
            .iter()
            .map(|p| {
                let out = &out;
                s.spawn(move || {
                    let r = load_scenario(p)
                        .map_err(lfstl::Error::from)
                        .map_err(anyhow::Error::from)
                        .and_then(|sc| run_one(&sc, args, out).map(|o| o.report.to_string()));
                    (p.clone(), r)
                })
            })
            .collect();
        handles
            .into_iter()
            .map(|h| h.join().expect("scenario thread panicked"))
            .collect()
    });
    let mut failed = false;
    for (path, r) in results {
        match r {
            Ok(text) => println!("{text}\n"),
            Err(e) => {
                failed = true;
                eprintln!(
                    "{}",
                    json!({ "error": "run", "scenario": path.display().to_string(), "message": format!("{e:#}") })
                );
            }
        }
    }
    Ok(if failed {
        ExitCode::FAILURE
    } else {
        ExitCode::SUCCESS
    })
}

fn cmd_certify(args: CertifyArgs) -> Result<ExitCode> {
    let scenario = scenario_of(&args.common)?;
    let (delta, source) = match args.delta.or(scenario.delta) {
        Some(d) => (d, "given".to_string()),
        None => {
            let opts = RunOptions {
                dt: args.common.dt,
                seed: args.common.seed,
                delta_samples: Some(args.samples),
                ..RunOptions::default()
            };
            let outcome = run_scenario_with(&scenario, &opts)?;
            let cert = outcome
                .report
                .certificate
                .ok_or_else(|| anyhow!("scenario has no mu parameterisation"))?;
            (cert.delta, outcome.report.delta_source)
        }
    };
    let cert = fixed_time_bound(&scenario.params, delta).map_err(lfstl::Error::from)?;
    let second = scenario.chain_order != ChainOrder::One;
    let h_bound = if second {
        scenario.lambda.inverse(-cert.eps_max)
    } else {
        -cert.eps_max
    };
    let lemma = lemma_bound(&scenario.params.gains);
    if args.json {
        println!(
            "{}",
            json!({ "certificate": cert, "delta_source": source, "h_bound": h_bound, "lemma_bound": lemma })
        );
    } else {
        let mut o = std::io::stdout().lock();
        writeln!(o, "delta       = {} ({source})", cert.delta)?;
        writeln!(o, "branch      = {:?}", cert.branch)?;
        writeln!(o, "T           = {:.4}", cert.t_bound)?;
        writeln!(o, "eps_max     = {:.4}", cert.eps_max)?;
        writeln!(o, "h bound     = {h_bound:.4}")?;
        writeln!(o, "lemma bound = {lemma:.4}")?;
        if let (Some(b), Some(c)) = (cert.b, cert.c) {
            writeln!(o, "roots b, c  = {b:.6}, {c:.6}")?;
        }
        if let (Some(k1), Some(k2)) = (cert.k1, cert.k2) {
            writeln!(o, "k1, k2      = {k1:.6}, {k2:.6}")?;
        }
    }
    Ok(ExitCode::SUCCESS)
}

fn read_trajectory(path: &Path) -> Result<Trajectory> {
    let file = fs::File::open(path).with_context(|| format!("opening {}", path.display()))?;
    Ok(Trajectory::read_csv(BufReader::new(file)).map_err(lfstl::Error::from)?)
}

fn cmd_check(args: CheckArgs) -> Result<ExitCode> {
    let scenario = scenario_of(&args.common)?;
    let traj = read_trajectory(&args.csv)?;
    if traj.layout != scenario.layout() {
        return Err(anyhow!(
            "trajectory layout does not match the scenario network"
        ));
    }
    let signal = traj.signal();
    let mut all = true;
    for st in &scenario.subtasks {
        let ok = evaluate(&st.formula, &signal, scenario.t0).map_err(lfstl::Error::from)?;
        all &= ok;
        println!("{}", json!({ "subtask": st.name, "satisfied": ok }));
    }
    println!(
        "{}",
        if all {
            "all tasks satisfied"
        } else {
            "some tasks violated"
        }
    );
    Ok(ExitCode::SUCCESS)
}

fn cmd_plot(args: PlotArgs) -> Result<ExitCode> {
    let traj = read_trajectory(&args.csv)?;
    let out = out_dir(&args.common, None);
    let name = args
        .csv
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "run".into());
    let files = plot::write_all(&traj, &out, &name)?;
    for f in files {
        println!("{}", f.display());
    }
    Ok(ExitCode::SUCCESS)
}
