//! The `cogmesh` command line.
//!
//! Exit status: 0 on success, 1 when an input fails validation, 2 when a
//! run fails, 64 on a usage error. Failures print one line of the form
//! `error[<kind>]: <message>` on standard error.

use std::ffi::OsString;
use std::fmt::Write as _;
use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use clap::error::ErrorKind;
use clap::{Args, Parser, Subcommand};
use log::info;

use crate::config::{Scenario, ValidationError};
use crate::engine::{self, run_with_knowledge};
use crate::knowledge::KnowledgeBase;
use crate::l2conf::{run_topology, Topology, TOPOLOGY_SCHEMA};
use crate::markov::{blocking_probability, monte_carlo, noncompletion_probability, stationary};

pub const EXIT_OK: i32 = 0;
pub const EXIT_VALIDATION: i32 = 1;
pub const EXIT_RUNTIME: i32 = 2;
pub const EXIT_USAGE: i32 = 64;

#[derive(Debug, Parser)]
#[command(
    name = "cogmesh",
    version,
    about = "Autonomic spectrum management simulator for cognitive radio nodes"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Simulate one secondary user and write its trace and metrics
    Run(RunArgs),
    /// Solve the scenario's Markov occupancy model
    Analyze(AnalyzeArgs),
    /// Run TDMA neighbor discovery over a topology file
    L2sim(L2simArgs),
    /// Compare negotiation failure rates with learning on and off
    CompareLearning(CompareArgs),
    /// Check a scenario file and exit
    Validate(ValidateArgs),
}

#[derive(Debug, Args)]
struct RunArgs {
    /// Scenario file (JSON)
    #[arg(long, value_name = "FILE")]
    config: PathBuf,
    /// Run seed [default: the scenario's seed]
    #[arg(long)]
    seed: Option<u64>,
    /// Simulated seconds [default: the scenario's duration]
    #[arg(long)]
    duration: Option<f64>,
    /// Output directory for trace.jsonl, metrics.json and metrics.csv
    #[arg(long, value_name = "DIR")]
    out: PathBuf,
    /// Start from a knowledge base saved by --dump-kb
    #[arg(long, value_name = "FILE")]
    load_kb: Option<PathBuf>,
    /// Write the final knowledge base to FILE
    #[arg(long, value_name = "FILE")]
    dump_kb: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct AnalyzeArgs {
    /// Scenario file with a `markov` block
    #[arg(long, value_name = "FILE")]
    config: PathBuf,
    /// Also estimate both metrics by simulating EVENTS transitions
    #[arg(long, value_name = "EVENTS")]
    monte_carlo: Option<u64>,
    /// Seed for --monte-carlo [default: the scenario's seed]
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Debug, Args)]
struct L2simArgs {
    /// Topology file (JSON)
    #[arg(long, value_name = "FILE")]
    topology: PathBuf,
    /// Write the discovery map here instead of standard output
    #[arg(long, value_name = "FILE")]
    out: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct CompareArgs {
    /// Scenario file (JSON)
    #[arg(long, value_name = "FILE")]
    config: PathBuf,
    /// Comma-separated run seeds
    #[arg(long, value_delimiter = ',', required = true, num_args = 1..)]
    seeds: Vec<u64>,
    /// Simulated seconds per run [default: the scenario's duration]
    #[arg(long)]
    duration: Option<f64>,
    /// Run seeds one after another instead of in parallel
    #[arg(long)]
    sequential: bool,
    /// Write the comparison here instead of standard output
    #[arg(long, value_name = "FILE")]
    out: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct ValidateArgs {
    /// Scenario file (JSON)
    #[arg(long, value_name = "FILE")]
    config: PathBuf,
}

#[derive(Debug)]
enum Failure {
    Validation(String),
    Runtime(String),
}

impl Failure {
    fn io(path: &Path, e: std::io::Error) -> Self {
        Failure::Runtime(format!("{}: {e}", path.display()))
    }
}

impl From<ValidationError> for Failure {
    fn from(e: ValidationError) -> Self {
        Failure::Validation(e.to_string())
    }
}

impl From<engine::EngineError> for Failure {
    fn from(e: engine::EngineError) -> Self {
        match e {
            engine::EngineError::Validation(v) => v.into(),
            other => Failure::Runtime(other.to_string()),
        }
    }
}

/// Parses `argv` (program name first), runs the command, and returns the
/// exit status.
pub fn run<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    init_logging();
    let cli = match Cli::try_parse_from(argv) {
        Ok(c) => c,
        Err(e) => {
            return match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => {
                    print!("{e}");
                    EXIT_OK
                }
                _ => {
                    let text = e.render().to_string();
                    match text.strip_prefix("error: ") {
                        Some(rest) => eprint!("error[usage]: {rest}"),
                        None => eprint!("error[usage]: missing subcommand\n\n{text}"),
                    }
                    EXIT_USAGE
                }
            }
        }
    };
    let mut stdout = std::io::stdout().lock();
    match dispatch(cli.command, &mut stdout) {
        Ok(()) => EXIT_OK,
        Err(Failure::Validation(msg)) => {
            eprintln!("error[validation]: {}", one_line(&msg));
            EXIT_VALIDATION
        }
        Err(Failure::Runtime(msg)) => {
            eprintln!("error[runtime]: {}", one_line(&msg));
            EXIT_RUNTIME
        }
    }
}

fn init_logging() {
    let env = env_logger::Env::new().filter_or("COGMESH_LOG", "error");
    let _ = env_logger::Builder::from_env(env)
        .target(env_logger::Target::Stderr)
        .try_init();
}

fn one_line(msg: &str) -> String {
    msg.split_whitespace().collect::<Vec<_>>().join(" ")
}

fn read(path: &Path) -> Result<String, Failure> {
    fs::read_to_string(path).map_err(|e| Failure::io(path, e))
}

fn write(path: &Path, text: &str) -> Result<(), Failure> {
    fs::write(path, text).map_err(|e| Failure::io(path, e))
}

fn load_scenario(path: &Path) -> Result<Scenario, Failure> {
    Scenario::from_json(&read(path)?)
        .map_err(|e| Failure::Validation(format!("{}: {e}", path.display())))
}

fn dispatch(cmd: Command, stdout: &mut dyn Write) -> Result<(), Failure> {
    let emit = |stdout: &mut dyn Write, text: &str| {
        stdout
            .write_all(text.as_bytes())
            .map_err(|e| Failure::Runtime(e.to_string()))
    };
    match cmd {
        Command::Validate(a) => load_scenario(&a.config).map(drop),
        Command::Run(a) => run_command(a),
        Command::Analyze(a) => emit(stdout, &analyze(a)?),
        Command::L2sim(a) => {
            let topo: Topology = serde_json::from_str(&read(&a.topology)?)
                .map_err(|e| Failure::Validation(format!("{}: {e}", a.topology.display())))?;
            if topo.schema != TOPOLOGY_SCHEMA {
                return Err(Failure::Validation(format!(
                    "schema must be {TOPOLOGY_SCHEMA:?}, got {:?}",
                    topo.schema
                )));
            }
            let out = run_topology(&topo).map_err(|e| Failure::Validation(e.to_string()))?;
            let json =
                serde_json::to_string_pretty(&out).expect("discovery output serializes") + "\n";
            match a.out {
                Some(p) => write(&p, &json),
                None => emit(stdout, &json),
            }
        }
        Command::CompareLearning(a) => {
            let scenario = load_scenario(&a.config)?;
            let duration = a.duration.unwrap_or(scenario.config().duration);
            let cmp = engine::compare_learning(&scenario, &a.seeds, duration, !a.sequential)?;
            info!("compared {} seeds, {} paired", cmp.seeds.len(), cmp.pairs);
            let json = serde_json::to_string_pretty(&cmp).expect("comparison serializes") + "\n";
            match a.out {
                Some(p) => write(&p, &json),
                None => emit(stdout, &json),
            }
        }
    }
}

fn run_command(a: RunArgs) -> Result<(), Failure> {
    let scenario = load_scenario(&a.config)?;
    let seed = a.seed.unwrap_or(scenario.config().seed);
    let duration = a.duration.unwrap_or(scenario.config().duration);
    let kb = match &a.load_kb {
        Some(p) => Some(
            KnowledgeBase::from_json(&read(p)?)
                .map_err(|e| Failure::Validation(format!("{}: {e}", p.display())))?,
        ),
        None => None,
    };
    let out = run_with_knowledge(&scenario, seed, duration, kb)?;
    fs::create_dir_all(&a.out).map_err(|e| Failure::io(&a.out, e))?;

    let trace_path = a.out.join("trace.jsonl");
    let file = File::create(&trace_path).map_err(|e| Failure::io(&trace_path, e))?;
    out.trace
        .write_jsonl(BufWriter::new(file))
        .map_err(|e| Failure::io(&trace_path, e))?;
    write(&a.out.join("metrics.json"), &(out.metrics.to_json() + "\n"))?;
    write(&a.out.join("metrics.csv"), &out.metrics.to_csv())?;
    if let Some(p) = &a.dump_kb {
        write(p, &(out.knowledge.to_json() + "\n"))?;
    }
    info!(
        "seed {seed}: wrote {} records to {}",
        out.trace.records.len(),
        a.out.display()
    );
    Ok(())
}

fn analyze(a: AnalyzeArgs) -> Result<String, Failure> {
    let scenario = load_scenario(&a.config)?;
    let model = scenario
        .config()
        .markov
        .ok_or_else(|| Failure::Validation(format!("{}: no markov block", a.config.display())))?;
    let runtime = |e: crate::markov::MarkovError| Failure::Runtime(e.to_string());
    let d = stationary(&model).map_err(runtime)?;
    let mut s = String::new();
    let fmt = |x: Option<f64>| x.map_or_else(|| "undefined".to_string(), |v| format!("{v:.9}"));
    writeln!(s, "blocking={:.9}", blocking_probability(&d)).unwrap();
    writeln!(
        s,
        "noncompletion={}",
        fmt(noncompletion_probability(&d).ok())
    )
    .unwrap();
    if let Some(events) = a.monte_carlo {
        let seed = a.seed.unwrap_or(scenario.config().seed);
        let mc = monte_carlo(&model, events, seed).map_err(runtime)?;
        writeln!(s, "mc_blocking={:.9}", mc.blocking).unwrap();
        writeln!(s, "mc_blocking_se={:.9}", mc.blocking_se).unwrap();
        writeln!(s, "mc_noncompletion={}", fmt(mc.noncompletion)).unwrap();
        writeln!(s, "mc_noncompletion_se={}", fmt(mc.noncompletion_se)).unwrap();
    }
    Ok(s)
}
