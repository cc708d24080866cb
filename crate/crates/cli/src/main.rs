use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use pdgen_cli::commands;
use pdgen_cli::config::RunConfig;
use pdgen_core::backend::BackendKind;

/// Personalized distractor generation: recover per-student misconception
/// prototypes from past wrong answers, then generate distractors tailored to
/// each student.
#[derive(Parser)]
#[command(name = "pdgen", version, about)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct CommonArgs {
    /// Configuration file (TOML). Defaults apply when omitted.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Override the configured seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Override the configured backend kind.
    #[arg(long, global = true, value_parser = parse_backend)]
    backend: Option<BackendKind>,
    /// Override the output directory.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Override the dataset directory.
    #[arg(long, global = true)]
    data: Option<PathBuf>,
    /// Override the worker-pool width (0 = available parallelism).
    #[arg(long, global = true)]
    workers: Option<usize>,
}

fn parse_backend(value: &str) -> Result<BackendKind, String> {
    match value {
        "scripted" => Ok(BackendKind::Scripted),
        "remote" => Ok(BackendKind::Remote),
        other => Err(format!("unknown backend '{other}' (scripted|remote)")),
    }
}

#[derive(Subcommand)]
enum Command {
    /// Emit a synthetic corpus with known ground-truth misconceptions.
    Simulate {
        #[command(flatten)]
        common: CommonArgs,
        /// Number of students.
        #[arg(long)]
        students: Option<usize>,
        /// Past records per student.
        #[arg(long)]
        past: Option<usize>,
        /// Test records per student.
        #[arg(long)]
        test: Option<usize>,
        /// Injected buggy rules per student.
        #[arg(long)]
        rules_per_student: Option<usize>,
        /// All students answer the same test questions (group mode).
        #[arg(long)]
        shared_test: bool,
    },
    /// Build misconception prototypes from past records.
    Build {
        #[command(flatten)]
        common: CommonArgs,
        /// Export per-record search trees into this directory.
        #[arg(long)]
        trace_dir: Option<PathBuf>,
    },
    /// Generate personalized distractors for all test records.
    Generate {
        #[command(flatten)]
        common: CommonArgs,
    },
    /// Score generated distractors against the students' actual choices.
    Evaluate {
        #[command(flatten)]
        common: CommonArgs,
    },
    /// Aggregate per-student distractors into group-level top-k sets.
    Group {
        #[command(flatten)]
        common: CommonArgs,
        /// Top-k size for aggregation.
        #[arg(long)]
        top_k: Option<usize>,
    },
}

fn load_config(common: &CommonArgs) -> anyhow::Result<RunConfig> {
    let mut config = match &common.config {
        Some(path) => RunConfig::load(path)?,
        None => RunConfig::default(),
    };
    if let Some(seed) = common.seed {
        config.search.seed = seed;
    }
    if let Some(kind) = common.backend {
        config.backend.kind = kind;
    }
    if let Some(out) = &common.out {
        config.paths.out_dir = out.clone();
    }
    if let Some(data) = &common.data {
        config.paths.data_dir = data.clone();
    }
    if let Some(workers) = common.workers {
        config.run.workers = workers;
    }
    Ok(config)
}

fn run() -> anyhow::Result<()> {
    let cli = Cli::parse();
    match cli.command {
        Command::Simulate {
            common,
            students,
            past,
            test,
            rules_per_student,
            shared_test,
        } => {
            let mut config = load_config(&common)?;
            if let Some(n) = students {
                config.simulate.n_students = n;
            }
            if let Some(n) = past {
                config.simulate.n_past = n;
            }
            if let Some(n) = test {
                config.simulate.n_test = n;
            }
            if let Some(n) = rules_per_student {
                config.simulate.rules_per_student = n;
            }
            if shared_test {
                config.simulate.shared_test = true;
            }
            commands::cmd_simulate(&config)
        }
        Command::Build { common, trace_dir } => {
            let config = load_config(&common)?;
            commands::cmd_build(&config, trace_dir.as_deref())
        }
        Command::Generate { common } => {
            let config = load_config(&common)?;
            commands::cmd_generate(&config)
        }
        Command::Evaluate { common } => {
            let config = load_config(&common)?;
            commands::cmd_evaluate(&config)
        }
        Command::Group { common, top_k } => {
            let mut config = load_config(&common)?;
            if let Some(k) = top_k {
                config.run.top_k = k;
            }
            commands::cmd_group(&config)
        }
    }
}

fn main() -> ExitCode {
    match run() {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err:#}");
            ExitCode::FAILURE
        }
    }
}
