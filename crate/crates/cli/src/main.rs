use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use clap::{Args, Parser, Subcommand};

use mfroute::io::csv::{
    estimates_csv, flow_csv, history_csv, parse_policy_csv, policy_csv, timing_csv, write_text,
};
use mfroute::io::{build_scenario, load_config, EstimateRow, LoadedConfig, TimingRow};
use mfroute::mfg::{forward_flow, omd_solve, OmdSchedule};
use mfroute::nplayer::{deviation_incentive_exact, deviation_incentive_mc, mccfr_solve, SimMode};
use mfroute::oracles::run_checks;
use mfroute::{Error, Policy, Scenario};

#[derive(Parser)]
#[command(name = "mfroute", version, about = "Mean-field and N-player dynamic routing games")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run online mirror descent; writes history.csv, flow.csv and policy.csv.
    SolveMfg(Common),
    /// Deviation incentive of the mean-field policy for each N; writes estimates.csv.
    EvalNplayer(Common),
    /// Time OMD and MCCFR iterations for each N; writes timing.csv.
    BenchRuntime(Common),
    /// Cross-check closed forms, enumeration and simulators.
    OracleCheck(Common),
    /// Per-tick link proportions of a policy (or of the OMD solution); writes flow.csv.
    ExportFlow(Common),
}

#[derive(Args, Clone)]
struct Common {
    /// Scenario configuration (JSON).
    #[arg(long)]
    scenario: Option<PathBuf>,
    /// Output directory.
    #[arg(long, default_value = "out")]
    out: PathBuf,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Number of OMD (or MCCFR) iterations, replacing the scenario's schedule length.
    #[arg(long)]
    iterations: Option<usize>,
    /// Comma-separated player counts.
    #[arg(long, value_delimiter = ',')]
    players: Option<Vec<usize>>,
    /// Monte Carlo samples per player count.
    #[arg(long, default_value_t = 10_000)]
    samples: usize,
    /// N-player simulator: event or tick.
    #[arg(long, default_value = "event")]
    mode: String,
    /// Policy CSV to use instead of solving the mean-field game.
    #[arg(long)]
    policy: Option<PathBuf>,
    /// Use exact enumeration instead of Monte Carlo where the game is small enough.
    #[arg(long)]
    exact: bool,
}

/// Failure with the process exit code it maps to.
struct Failure {
    code: u8,
    kind: &'static str,
    message: String,
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let (code, kind) = match &e {
            Error::Size(_) => (3, "size"),
            Error::Io(_) => (5, "io"),
            Error::Livelock(_) => (1, "livelock"),
            Error::Parse { .. } => (2, "parse"),
            _ => (2, "config"),
        };
        Failure {
            code,
            kind,
            message: e.to_string(),
        }
    }
}

type CmdResult = Result<(), Failure>;

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::SolveMfg(c) => solve_mfg(&c),
        Command::EvalNplayer(c) => eval_nplayer(&c),
        Command::BenchRuntime(c) => bench_runtime(&c),
        Command::OracleCheck(c) => oracle_check(&c),
        Command::ExportFlow(c) => export_flow(&c),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            let message = f.message.replace(['\n', '\r'], " ");
            eprintln!("error code={} kind={} message={message:?}", f.code, f.kind);
            ExitCode::from(f.code)
        }
    }
}

fn config_error(message: impl Into<String>) -> Failure {
    Failure {
        code: 2,
        kind: "config",
        message: message.into(),
    }
}

fn load(c: &Common) -> Result<(LoadedConfig, Scenario), Failure> {
    let path = c
        .scenario
        .as_deref()
        .ok_or_else(|| config_error("--scenario is required"))?;
    let loaded = load_config(path)?;
    let scenario = build_scenario(&loaded.config, &loaded.base_dir)?;
    Ok((loaded, scenario))
}

/// The scenario's schedule, cut or extended (at its last rate) to `iterations`.
fn schedule(loaded: &LoadedConfig, iterations: Option<usize>) -> OmdSchedule {
    let base = &loaded.config.omd_schedule;
    let Some(k) = iterations else {
        return base.clone();
    };
    let rates: Vec<f64> = base.rates().collect();
    let last = rates.last().copied().unwrap_or(1.0);
    let mut segments: Vec<(usize, f64)> = Vec::new();
    for i in 0..k {
        let lr = rates.get(i).copied().unwrap_or(last);
        match segments.last_mut() {
            Some((n, r)) if *r == lr => *n += 1,
            _ => segments.push((1, lr)),
        }
    }
    if segments.is_empty() {
        segments.push((0, last));
    }
    OmdSchedule::new(&segments)
}

fn mode(c: &Common) -> Result<SimMode, Failure> {
    Ok(c.mode.parse::<SimMode>()?)
}

fn write(dir: &Path, name: &str, text: &str) -> CmdResult {
    write_text(&dir.join(name), text)?;
    Ok(())
}

fn policy_for(c: &Common, loaded: &LoadedConfig, scenario: &Scenario) -> Result<Policy, Failure> {
    match &c.policy {
        Some(path) => {
            let text = std::fs::read_to_string(path).map_err(Error::from)?;
            Ok(parse_policy_csv(&text, scenario)?)
        }
        None => Ok(omd_solve(scenario, &schedule(loaded, c.iterations))?.policy),
    }
}

fn solve_mfg(c: &Common) -> CmdResult {
    let (loaded, scenario) = load(c)?;
    let out = omd_solve(&scenario, &schedule(&loaded, c.iterations))?;
    let flow = forward_flow(&scenario, &out.policy)?;
    write(&c.out, "history.csv", &history_csv(&out.history))?;
    write(&c.out, "flow.csv", &flow_csv(&flow))?;
    write(&c.out, "policy.csv", &policy_csv(&out.policy))?;
    if let Some(last) = out.history.last() {
        println!(
            "iterations={} exploitability={} mean_travel_time={}",
            last.iteration,
            mfroute::io::fmt_sig9(last.exploitability),
            mfroute::io::fmt_sig9(last.mean_travel_time)
        );
    }
    Ok(())
}

fn eval_nplayer(c: &Common) -> CmdResult {
    let (loaded, scenario) = load(c)?;
    let sim_mode = mode(c)?;
    let policy = policy_for(c, &loaded, &scenario)?;
    let players = c.players.clone().unwrap_or_else(|| vec![2, 5, 10, 20, 30]);
    let mut rows = Vec::with_capacity(players.len());
    for n in players {
        let row = if c.exact {
            let incentive = deviation_incentive_exact(&scenario, &policy, n, sim_mode)?;
            EstimateRow {
                n_players: n,
                incentive,
                half_width: 0.0,
                n_samples: 0,
            }
        } else {
            let e = deviation_incentive_mc(&scenario, &policy, n, c.samples, c.seed, sim_mode)?;
            EstimateRow {
                n_players: n,
                incentive: e.mean,
                half_width: e.half_width_95,
                n_samples: e.n_samples,
            }
        };
        println!(
            "n_players={} incentive={} half_width={}",
            row.n_players,
            mfroute::io::fmt_sig9(row.incentive),
            mfroute::io::fmt_sig9(row.half_width)
        );
        rows.push(row);
    }
    write(&c.out, "estimates.csv", &estimates_csv(&rows))
}

fn bench_runtime(c: &Common) -> CmdResult {
    let (_, scenario) = load(c)?;
    let iterations = c.iterations.unwrap_or(10).max(1);
    let players = c.players.clone().unwrap_or_else(|| vec![2, 3, 4, 5]);
    let mut rows = Vec::new();
    for &n in &players {
        let start = Instant::now();
        omd_solve(&scenario, &OmdSchedule::constant(iterations, 1.0))?;
        let omd = start.elapsed().as_secs_f64() * 10.0 / iterations as f64;
        let cfr = mccfr_solve(&scenario, n, iterations, c.seed)?.seconds_per_10_iterations;
        for (algorithm, seconds) in [("omd", omd), ("mccfr", cfr)] {
            println!("algorithm={algorithm} n_players={n} seconds_per_10_iterations={seconds:.6}");
            rows.push(TimingRow {
                algorithm: algorithm.to_string(),
                n_players: n,
                seconds_per_10_iterations: seconds,
            });
        }
    }
    write(&c.out, "timing.csv", &timing_csv(&rows))
}

fn oracle_check(_: &Common) -> CmdResult {
    let checks = run_checks()?;
    let mut failed = 0;
    for ch in &checks {
        let status = if ch.passed { "PASS" } else { "FAIL" };
        println!("{status} {} {}", ch.name, ch.detail);
        if !ch.passed {
            failed += 1;
        }
    }
    if failed > 0 {
        return Err(Failure {
            code: 4,
            kind: "oracle",
            message: format!("{failed} of {} oracle checks failed", checks.len()),
        });
    }
    Ok(())
}

fn export_flow(c: &Common) -> CmdResult {
    let (loaded, scenario) = load(c)?;
    let policy = policy_for(c, &loaded, &scenario)?;
    let flow = forward_flow(&scenario, &policy)?;
    write(&c.out, "flow.csv", &flow_csv(&flow))
}
