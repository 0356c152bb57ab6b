use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};

use sos_dtn::exec::Execution;
use sos_dtn::graph::{graph_stats, SocialDigraph};
use sos_dtn::harness::report::{read_report, summary_rows, write_report, REPORT_JSON};
use sos_dtn::harness::trace::{parse_trace, write_trace};
use sos_dtn::harness::{LogLevel, RunConfig, RunError, RunOutput, Simulation, TraceEvent};
use sos_dtn::routing::RoutingSchemeKind;
use sos_dtn::tracegen::{generate, TraceGenParams};

const RESOLVED_CONFIG: &str = "config.json";
const TRACE_FILE: &str = "trace.jsonl";
const LOG_FILE: &str = "log.jsonl";

#[derive(Parser)]
#[command(name = "sos", version, about = "Delay-tolerant social network simulator")]
struct Cli {
    /// Event-log verbosity: quiet, normal or verbose.
    #[arg(long, env = "SOS_LOG", default_value = "normal", global = true)]
    log: LogLevel,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic contact trace and a matching run config.
    GenTrace(GenTraceArgs),
    /// Replay a trace against a config and write the report.
    Simulate(SimulateArgs),
    /// Density, path lengths, eccentricity and transitivity of a follow graph.
    AnalyzeGraph(AnalyzeArgs),
    /// Re-emit the CSV tables and summary of a finished run.
    Report(ReportArgs),
}

#[derive(Args)]
struct GenTraceArgs {
    /// Generator parameters as JSON; defaults to the built-in 10-node week.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Routing scheme written into the generated config for every user.
    #[arg(long)]
    scheme: Option<RoutingSchemeKind>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct SimulateArgs {
    #[arg(long)]
    config: PathBuf,
    #[arg(long)]
    trace: PathBuf,
    #[arg(long)]
    out: PathBuf,
    /// Overrides the seed in the config.
    #[arg(long)]
    seed: Option<u64>,
    /// Overrides every user's routing scheme.
    #[arg(long)]
    scheme: Option<RoutingSchemeKind>,
    /// Independent runs over a seed range, e.g. `seeds=1..10` (end
    /// exclusive) or `seeds=1..=10`. Each run writes to `OUT/seed-N`.
    #[arg(long, value_parser = parse_sweep)]
    sweep: Option<SeedRange>,
}

#[derive(Clone)]
struct SeedRange(Vec<u64>);

#[derive(Args)]
struct AnalyzeArgs {
    /// Run config whose follow edges form the graph.
    #[arg(long, conflicts_with = "edges", required_unless_present = "edges")]
    config: Option<PathBuf>,
    /// Edge list, one `follower followee` pair per line.
    #[arg(long)]
    edges: Option<PathBuf>,
    /// Writes graph_stats.json and graph.dot here.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct ReportArgs {
    /// Directory of a previous `simulate` run.
    #[arg(long)]
    out: PathBuf,
}

fn parse_sweep(s: &str) -> Result<SeedRange, String> {
    let range = s
        .strip_prefix("seeds=")
        .ok_or_else(|| format!("expected seeds=a..b, got {s:?}"))?;
    let (start, end, inclusive) = if let Some((a, b)) = range.split_once("..=") {
        (a, b, true)
    } else if let Some((a, b)) = range.split_once("..") {
        (a, b, false)
    } else {
        return Err(format!("expected seeds=a..b, got {s:?}"));
    };
    let parse = |v: &str| v.trim().parse::<u64>().map_err(|e| format!("{v:?}: {e}"));
    let (start, end) = (parse(start)?, parse(end)?);
    let seeds: Vec<u64> = if inclusive {
        (start..=end).collect()
    } else {
        (start..end).collect()
    };
    if seeds.is_empty() {
        return Err(format!("seed range {range} is empty"));
    }
    Ok(SeedRange(seeds))
}

fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))
}

fn write(path: &Path, contents: impl AsRef<[u8]>) -> Result<()> {
    fs::write(path, contents).with_context(|| format!("writing {}", path.display()))
}

fn print_resolved(config: &impl serde::Serialize, seed: Option<u64>) {
    println!(
        "resolved config:\n{}",
        serde_json::to_string_pretty(config).expect("config serializes")
    );
    match seed {
        Some(seed) => println!("seed: {seed}"),
        None => println!("seed: none"),
    }
}

fn gen_trace(args: GenTraceArgs) -> Result<ExitCode> {
    let mut params = match &args.config {
        Some(path) => read_json::<TraceGenParams>(path)?,
        None => TraceGenParams::gainesville_like(),
    };
    if let Some(scheme) = args.scheme {
        params.scheme = scheme;
    }
    print_resolved(&params, Some(args.seed));
    let scenario = generate(&params, args.seed)?;
    fs::create_dir_all(&args.out)?;
    write(&args.out.join(TRACE_FILE), write_trace(&scenario.trace))?;
    write(
        &args.out.join(RESOLVED_CONFIG),
        serde_json::to_string_pretty(&scenario.config)? + "\n",
    )?;
    println!(
        "wrote {} events for {} users to {}",
        scenario.trace.len(),
        scenario.config.users.len(),
        args.out.display()
    );
    Ok(ExitCode::SUCCESS)
}

fn write_run(dir: &Path, config: &RunConfig, output: &RunOutput) -> Result<()> {
    write_report(dir, &output.report).with_context(|| format!("writing report to {}", dir.display()))?;
    write(&dir.join(LOG_FILE), output.log.to_jsonl())?;
    write(
        &dir.join(RESOLVED_CONFIG),
        serde_json::to_string_pretty(config)? + "\n",
    )
}

fn print_summary(output: &RunOutput) {
    for (metric, value) in summary_rows(&output.report) {
        println!("{metric}: {value}");
    }
    println!("handshake_refusals: {}", output.handshake_refusals);
    println!("protocol_errors: {}", output.protocol_errors);
    println!("digest: {}", output.digest());
}

/// Runs one seed; `Ok(false)` when the run hit validation or protocol errors.
fn simulate_one(
    config: &RunConfig,
    trace: &[TraceEvent],
    level: LogLevel,
    out: &Path,
) -> Result<bool> {
    print_resolved(config, Some(config.seed));
    match Simulation::new(config).log_level(level).run(trace) {
        Ok(output) => {
            fs::create_dir_all(out)?;
            write_run(out, config, &output)?;
            print_summary(&output);
            Ok(output.protocol_errors == 0)
        }
        Err(err @ (RunError::Config(_) | RunError::Trace(_) | RunError::Signup(_))) => {
            eprintln!("error: {err}");
            Ok(false)
        }
    }
}

fn simulate(args: SimulateArgs, level: LogLevel) -> Result<ExitCode> {
    let mut config: RunConfig = read_json(&args.config)?;
    if let Some(seed) = args.seed {
        config.seed = seed;
    }
    if let Some(scheme) = args.scheme {
        config = config.with_scheme(scheme);
    }
    let text = fs::read_to_string(&args.trace)
        .with_context(|| format!("reading {}", args.trace.display()))?;
    let trace = match parse_trace(&text) {
        Ok(trace) => trace,
        Err(err) => {
            eprintln!("error: {}: {err}", args.trace.display());
            return Ok(ExitCode::FAILURE);
        }
    };
    println!("log level: {level}");

    let clean = match &args.sweep {
        None => simulate_one(&config, &trace, level, &args.out)?,
        Some(SeedRange(seeds)) => {
            let results = Execution::Parallel.map(seeds, |&seed| {
                let config = RunConfig { seed, ..config.clone() };
                let output = Simulation::new(&config).log_level(level).run(&trace);
                (config, output)
            });
            let mut clean = true;
            for (config, output) in results {
                print_resolved(&config, Some(config.seed));
                match output {
                    Ok(output) => {
                        let dir = args.out.join(format!("seed-{}", config.seed));
                        fs::create_dir_all(&dir)?;
                        write_run(&dir, &config, &output)?;
                        print_summary(&output);
                        clean &= output.protocol_errors == 0;
                    }
                    Err(err) => {
                        eprintln!("error (seed {}): {err}", config.seed);
                        clean = false;
                    }
                }
            }
            clean
        }
    };
    Ok(if clean { ExitCode::SUCCESS } else { ExitCode::FAILURE })
}

fn analyze_graph(args: AnalyzeArgs) -> Result<ExitCode> {
    let graph = match (&args.config, &args.edges) {
        (Some(path), _) => {
            let config: RunConfig = read_json(path)?;
            print_resolved(&config, Some(config.seed));
            config.validate()?;
            SocialDigraph::from_labeled(
                config.users.iter().map(|u| u.user_id.to_string()),
                config
                    .follow_edges
                    .iter()
                    .map(|(a, b)| (a.to_string(), b.to_string())),
            )?
        }
        (None, Some(path)) => {
            println!("resolved config:\n{{\"edges\": {:?}}}", path.display().to_string());
            println!("seed: none");
            let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
            SocialDigraph::parse_edge_list(&text)?
        }
        (None, None) => bail!("pass --config or --edges"),
    };
    let stats = graph_stats(&graph, Execution::Parallel)?;
    let json = serde_json::to_string_pretty(&stats)?;
    println!("{json}");
    if let Some(out) = &args.out {
        fs::create_dir_all(out)?;
        write(&out.join("graph_stats.json"), json + "\n")?;
        write(&out.join("graph.dot"), graph.to_dot())?;
    }
    Ok(ExitCode::SUCCESS)
}

fn report(args: ReportArgs) -> Result<ExitCode> {
    let config_path = args.out.join(RESOLVED_CONFIG);
    if config_path.exists() {
        let config: RunConfig = read_json(&config_path)?;
        print_resolved(&config, Some(config.seed));
    } else {
        println!("resolved config: unavailable ({} missing)", config_path.display());
        println!("seed: unknown");
    }
    let report = read_report(&args.out.join(REPORT_JSON))
        .with_context(|| format!("reading {}", args.out.join(REPORT_JSON).display()))?;
    write_report(&args.out, &report)?;
    for (metric, value) in summary_rows(&report) {
        println!("{metric}: {value}");
    }
    Ok(ExitCode::SUCCESS)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::GenTrace(args) => gen_trace(args),
        Command::Simulate(args) => simulate(args, cli.log),
        Command::AnalyzeGraph(args) => analyze_graph(args),
        Command::Report(args) => report(args),
    };
    result.unwrap_or_else(|err| {
        eprintln!("error: {err:#}");
        ExitCode::FAILURE
    })
}
