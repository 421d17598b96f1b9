//! Command-line harness: run config-driven experiments, list the catalog,
//! and emit graph JSON for the named families.
//!
//! Exit codes: 0 success, 1 gate failure under `--check`, 2 config error.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use reinforce_lab::experiment::{self, ExperimentConfig};
use reinforce_lab::graph::FamilySpec;

#[derive(Parser)]
#[command(name = "reinforce-lab", version, about = "Monte Carlo lab for reinforced walks")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run an experiment from a JSON config file.
    Run {
        /// Path to the experiment config (JSON).
        config: PathBuf,
        /// Exit nonzero if any acceptance gate fails.
        #[arg(long)]
        check: bool,
        /// Override the config's master seed.
        #[arg(long)]
        seed: Option<u64>,
        /// Override the config's output directory.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// List the experiment catalog with the criterion each one gates.
    ListExperiments,
    /// Build a named graph family and print a summary or its JSON.
    Graph {
        /// Compact family spec, e.g. "path(6)" or "grid_box(2,5)".
        family: String,
        /// Uniform initial edge weight.
        #[arg(long, default_value_t = 1.0)]
        weight: f64,
        /// Override the start vertex.
        #[arg(long)]
        v0: Option<usize>,
        /// Print the full graph JSON instead of a summary.
        #[arg(long)]
        emit: bool,
    },
}

fn main() -> ExitCode {
    match Cli::parse().command {
        Command::Run { config, check, seed, out } => run(config, check, seed, out),
        Command::ListExperiments => {
            for entry in experiment::catalog() {
                println!("{:<22} criterion {}", entry.name, entry.criterion);
                println!("{:<22} {}", "", entry.describe);
            }
            ExitCode::SUCCESS
        }
        Command::Graph { family, weight, v0, emit } => graph(family, weight, v0, emit),
    }
}

fn run(path: PathBuf, check: bool, seed: Option<u64>, out: Option<PathBuf>) -> ExitCode {
    let text = match std::fs::read_to_string(&path) {
        Ok(t) => t,
        Err(e) => {
            eprintln!("error: cannot read {}: {e}", path.display());
            return ExitCode::from(2);
        }
    };
    let mut cfg = match ExperimentConfig::from_json_str(&text) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(2);
        }
    };
    if let Some(seed) = seed {
        cfg.seed = seed;
    }
    if let Some(out) = out {
        cfg.output = Some(out);
    }
    let record = match experiment::run_experiment(&cfg) {
        Ok(r) => r,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(2);
        }
    };
    println!(
        "{} on {} (seed {}, config {})",
        record.experiment, record.graph_id, record.seed, &record.config_hash[..12]
    );
    for m in &record.metrics {
        match m.stderr {
            Some(se) => println!("  {:<32} {:.6e} ± {:.2e}", m.name, m.value, se),
            None => println!("  {:<32} {:.6e}", m.name, m.value),
        }
    }
    for gate in &record.gates {
        let flag = if gate.passed { "PASS" } else { "FAIL" };
        println!("  [{flag}] {}: {}", gate.name, gate.detail);
    }
    println!(
        "  timeout rate {:.4}, wall {:.1}s, result hash {}",
        record.timeout_rate,
        record.wall_secs,
        &record.result_hash[..12]
    );
    if check && !record.all_gates_pass() {
        return ExitCode::from(1);
    }
    ExitCode::SUCCESS
}

fn graph(family: String, weight: f64, v0: Option<usize>, emit: bool) -> ExitCode {
    let spec: FamilySpec = match family.parse() {
        Ok(s) => s,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(2);
        }
    };
    let mut g = match spec.build(weight) {
        Ok(g) => g,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(2);
        }
    };
    if let Some(v0) = v0 {
        g = match g.with_v0(v0) {
            Ok(g) => g,
            Err(e) => {
                eprintln!("error: {e}");
                return ExitCode::from(2);
            }
        };
    }
    if emit {
        println!("{}", g.to_json_string());
    } else {
        println!(
            "{spec}: {} vertices, {} edges, degree bound {}, v0 = {}",
            g.vertex_count(),
            g.edge_count(),
            g.max_degree(),
            g.v0()
        );
    }
    ExitCode::SUCCESS
}
