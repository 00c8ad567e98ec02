use std::path::{Path, PathBuf};
use std::process::ExitCode;

use aomr_core::experiment::{
    aggregate, alpha_table, alpha_table_csv, default_k_list, emit_curves, parse_summary,
    run_experiment, summary_csv, write_outputs, ExperimentOptions, CURVE_FILES,
};
use aomr_core::protocol::Protocol;
use aomr_core::scenario::{OneOrMany, Scenario, Seeds};
use aomr_core::sim::RunOptions;
use aomr_core::Error;
use clap::{Args, Parser, Subcommand};

const EXIT_VALIDATION: u8 = 1;
const EXIT_RUNTIME: u8 = 2;

/// MANET routing simulator: AOMR-LM against AOMDV.
#[derive(Debug, Parser)]
#[command(name = "sim", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Run every (node count, protocol, seed) combination of a scenario file.
    Run(RunArgs),
    /// Print α_min = t_net^(1/K) for a list of K.
    AlphaTable(AlphaArgs),
    /// Turn a run output directory into plot-ready `x,y,series` files.
    Curves(CurvesArgs),
}

#[derive(Debug, Args)]
struct RunArgs {
    /// Scenario JSON file; an empty file means all defaults.
    scenario: PathBuf,
    /// Run this seed (repeatable). Overrides the scenario's seeds.
    #[arg(long = "seed")]
    seed: Vec<u64>,
    /// Run seeds 1..=N. Overrides the scenario's seeds.
    #[arg(long, conflicts_with = "seed")]
    seeds: Option<u64>,
    /// aomr-lm, aomdv or both.
    #[arg(long)]
    protocol: Option<String>,
    /// Override the node count.
    #[arg(long)]
    nodes: Option<usize>,
    #[arg(long, default_value = "out")]
    out: PathBuf,
    /// Worker threads (default: all cores).
    #[arg(long)]
    jobs: Option<usize>,
    /// Write messages.log for every run.
    #[arg(long)]
    trace_messages: bool,
    /// Write positions.csv for every run.
    #[arg(long)]
    trace_positions: bool,
}

#[derive(Debug, Args)]
struct AlphaArgs {
    /// A probability in (0, 1), as a number or `2^-e`.
    #[arg(long, default_value = "2^-40")]
    t_net: String,
    /// Comma-separated K values.
    #[arg(long, value_delimiter = ',')]
    k: Vec<u32>,
    #[arg(long, default_value = ".")]
    out: PathBuf,
}

#[derive(Debug, Args)]
struct CurvesArgs {
    trace_dir: PathBuf,
    /// Defaults to the trace directory.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long, default_value = "2^-40")]
    t_net: String,
}

enum Failure {
    Validation(String),
    Runtime(String),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        if e.is_validation() {
            Failure::Validation(e.to_string())
        } else {
            Failure::Runtime(e.to_string())
        }
    }
}

fn parse_t_net(s: &str) -> Result<f64, Failure> {
    let s = s.trim();
    let v = match s.strip_prefix("2^") {
        Some(exp) => exp.parse::<i32>().map(|e| 2f64.powi(e)).ok(),
        None => s.parse::<f64>().ok(),
    };
    match v {
        Some(t) if t > 0.0 && t < 1.0 => Ok(t),
        _ => Err(Failure::Validation(format!(
            "invalid --t-net `{s}`: expected a value in (0, 1) such as 2^-40"
        ))),
    }
}

fn run(args: RunArgs) -> Result<(), Failure> {
    let text = std::fs::read_to_string(&args.scenario).map_err(|e| {
        Failure::Validation(format!("cannot read {}: {e}", args.scenario.display()))
    })?;
    let mut scenario = Scenario::from_json(&text)?;
    if !args.seed.is_empty() {
        scenario.seeds = Seeds::List(args.seed.clone());
    }
    if let Some(n) = args.seeds {
        scenario.seeds = Seeds::Count(n);
    }
    if let Some(p) = &args.protocol {
        scenario.protocol = if p == "both" {
            OneOrMany::Many(vec![Protocol::AomrLm, Protocol::Aomdv])
        } else {
            OneOrMany::One(p.parse::<Protocol>()?)
        };
    }
    if let Some(n) = args.nodes {
        scenario.node_count = OneOrMany::One(n);
    }
    scenario.validate()?;
    if args.jobs == Some(0) {
        return Err(Failure::Validation("--jobs must be >= 1".into()));
    }

    let options = ExperimentOptions {
        jobs: args.jobs,
        run: RunOptions {
            trace_messages: args.trace_messages,
            trace_positions: args.trace_positions,
            record_events: false,
        },
    };
    let records = run_experiment(&scenario, options)?;
    write_outputs(&args.out, &scenario, &records)?;

    let aggregates = aggregate(&parse_summary(&summary_csv(&records)?)?);
    println!(
        "{:<8} {:>5} {:>5} {:>12} {:>14} {:>12} {:>8}",
        "protocol", "nodes", "runs", "lifetime_s", "energy_J", "delay_ms", "ratio"
    );
    let m = |p: Option<(f64, f64)>, scale: f64| {
        p.map(|(v, _)| format!("{:.4}", v * scale))
            .unwrap_or_else(|| "-".into())
    };
    for a in &aggregates {
        println!(
            "{:<8} {:>5} {:>5} {:>12} {:>14} {:>12} {:>8}",
            a.protocol.as_str(),
            a.nodes,
            a.runs,
            m(a.lifetime, 1.0),
            m(a.energy, 1.0),
            m(a.delay, 1e3),
            m(a.delivery_ratio, 1.0),
        );
    }
    println!("wrote {}", args.out.display());

    let failed: Vec<String> = records
        .iter()
        .filter_map(|r| {
            r.outcome
                .as_ref()
                .err()
                .map(|e| format!("{}: {e}", r.key.dir_name()))
        })
        .collect();
    if failed.is_empty() {
        Ok(())
    } else {
        Err(Failure::Runtime(format!(
            "{} run(s) failed:\n  {}",
            failed.len(),
            failed.join("\n  ")
        )))
    }
}

fn alpha(args: AlphaArgs) -> Result<(), Failure> {
    let t_net = parse_t_net(&args.t_net)?;
    let ks = if args.k.is_empty() {
        default_k_list()
    } else {
        args.k
    };
    let rows = alpha_table(t_net, &ks)?;
    println!("{:>5} {:>10} {:>10}", "K", "alpha_min", "published");
    for r in &rows {
        println!(
            "{:>5} {:>10.4} {:>10}{}",
            r.k,
            r.alpha_min,
            r.published.map(|p| format!("{p:.3}")).unwrap_or_default(),
            if r.divergent { "  divergent" } else { "" }
        );
    }
    write_file(&args.out, "alpha_table.csv", &alpha_table_csv(&rows)?)
}

fn write_file(dir: &Path, name: &str, body: &str) -> Result<(), Failure> {
    std::fs::create_dir_all(dir).map_err(Error::from)?;
    std::fs::write(dir.join(name), body).map_err(Error::from)?;
    Ok(())
}

fn curves(args: CurvesArgs) -> Result<(), Failure> {
    let t_net = parse_t_net(&args.t_net)?;
    if !args.trace_dir.is_dir() {
        return Err(Failure::Validation(format!(
            "{} is not a directory",
            args.trace_dir.display()
        )));
    }
    let out = args.out.unwrap_or_else(|| args.trace_dir.clone());
    let c = emit_curves(&args.trace_dir, &out, t_net)?;
    for (name, n) in CURVE_FILES.iter().zip([
        c.lifetime.len(),
        c.energy.len(),
        c.delay_vs_nodes.len(),
        c.alpha.len(),
    ]) {
        println!("{} ({n} points)", out.join(name).display());
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                ExitCode::from(EXIT_VALIDATION)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    let result = match cli.command {
        Command::Run(a) => run(a),
        Command::AlphaTable(a) => alpha(a),
        Command::Curves(a) => curves(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Validation(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(EXIT_VALIDATION)
        }
        Err(Failure::Runtime(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(EXIT_RUNTIME)
        }
    }
}
