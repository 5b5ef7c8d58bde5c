//! `rtlagent` — validate corpora, run agent sweeps, judge them and report.
//!
//! Exit codes: 0 success, 1 invalid input or content, 2 environment or IO
//! failure.

use std::collections::BTreeSet;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use rtlagent_core::agent::{read_trace, render_replay, RunStatus};
use rtlagent_core::analytics::{render_report, ReportFormat};
use rtlagent_core::corpus::{load_corpus, validate_corpus, CorpusError, Difficulty, Subset};
use rtlagent_core::evaluation::FailureMode;
use rtlagent_core::harness::{
    analyze_sweep, judge_sweep, run_sweep, HarnessConfig, HarnessError, RunFilter,
};

#[derive(Debug, Parser)]
#[command(name = "rtlagent", version, about = "Agentic RTL task harness")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Check a task corpus (and optionally a harness config) without running anything.
    Validate {
        /// Corpus file (JSON lines).
        corpus: Option<PathBuf>,
        /// Harness config; its corpus is validated when no corpus is given.
        #[arg(long)]
        config: Option<PathBuf>,
    },
    /// Run every selected (task, agent config) pair.
    Run {
        #[arg(long)]
        config: PathBuf,
        #[command(flatten)]
        filter: FilterArgs,
        /// Overrides the config's parallelism.
        #[arg(long)]
        parallelism: Option<usize>,
    },
    /// Judge every run recorded under an output root.
    Judge {
        #[command(flatten)]
        root: RootArgs,
    },
    /// Build the analytics report for a judged output root.
    Analyze {
        #[command(flatten)]
        root: RootArgs,
        /// Format printed to stdout (both are always written to disk).
        #[arg(long, value_enum, default_value_t = Format::Markdown)]
        format: Format,
    },
    /// Print a human-readable replay of one run trace.
    Replay {
        /// Trace file (`<run_id>.trace.json`).
        trace: PathBuf,
    },
}

#[derive(Debug, Args)]
struct FilterArgs {
    /// Comma-separated task ids.
    #[arg(long, value_delimiter = ',')]
    tasks: Vec<String>,
    /// Comma-separated agent config ids.
    #[arg(long, value_delimiter = ',')]
    configs: Vec<String>,
    #[arg(long, value_enum)]
    subset: Option<SubsetArg>,
    #[arg(long, value_enum)]
    difficulty: Option<DifficultyArg>,
}

#[derive(Debug, Args)]
#[group(required = true, multiple = false)]
struct RootArgs {
    /// Harness config whose output_root is used.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output root directory.
    #[arg(long)]
    root: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum SubsetArg {
    Agentic,
    NonAgentic,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum DifficultyArg {
    Easy,
    Medium,
    Hard,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum Format {
    Json,
    Markdown,
}

impl FilterArgs {
    fn to_filter(&self) -> RunFilter {
        let set =
            |v: &[String]| (!v.is_empty()).then(|| v.iter().cloned().collect::<BTreeSet<_>>());
        RunFilter {
            tasks: set(&self.tasks),
            configs: set(&self.configs),
            subset: self.subset.map(|s| match s {
                SubsetArg::Agentic => Subset::Agentic,
                SubsetArg::NonAgentic => Subset::NonAgentic,
            }),
            difficulty: self.difficulty.map(|d| match d {
                DifficultyArg::Easy => Difficulty::Easy,
                DifficultyArg::Medium => Difficulty::Medium,
                DifficultyArg::Hard => Difficulty::Hard,
            }),
        }
    }
}

impl RootArgs {
    fn resolve(&self) -> Result<PathBuf, HarnessError> {
        match (&self.root, &self.config) {
            (Some(root), _) => Ok(root.clone()),
            (None, Some(cfg)) => Ok(HarnessConfig::load(cfg)?.output_root),
            (None, None) => unreachable!("clap requires one of --root/--config"),
        }
    }
}

/// Failure carrying its exit code.
struct Failure(u8);

impl From<HarnessError> for Failure {
    fn from(e: HarnessError) -> Self {
        eprintln!("error: {e}");
        Failure(e.exit_code() as u8)
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Validate { corpus, config } => validate(corpus.as_deref(), config.as_deref()),
        Command::Run {
            config,
            filter,
            parallelism,
        } => run(&config, &filter, parallelism),
        Command::Judge { root } => judge(&root),
        Command::Analyze { root, format } => analyze(&root, format),
        Command::Replay { trace } => replay(&trace),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure(code)) => ExitCode::from(code),
    }
}

fn validate(corpus: Option<&Path>, config: Option<&Path>) -> Result<(), Failure> {
    let corpus_path = match (corpus, config) {
        (Some(c), cfg) => {
            if let Some(cfg) = cfg {
                HarnessConfig::load(cfg)?;
            }
            c.to_path_buf()
        }
        (None, Some(cfg)) => HarnessConfig::load(cfg)?.corpus,
        (None, None) => {
            eprintln!("error: give a corpus path or --config");
            return Err(Failure(1));
        }
    };
    let tasks = load_corpus(&corpus_path).map_err(|e| {
        eprintln!("error: {e}");
        match e {
            CorpusError::Unreadable { .. } => Failure(2),
            _ => Failure(1),
        }
    })?;
    let issues = validate_corpus(&tasks);
    for issue in &issues {
        println!("{issue}");
    }
    if issues.is_empty() {
        println!(
            "{}: {} tasks, no issues",
            corpus_path.display(),
            tasks.len()
        );
        Ok(())
    } else {
        eprintln!("{} issue(s) found", issues.len());
        Err(Failure(1))
    }
}

fn run(config: &Path, filter: &FilterArgs, parallelism: Option<usize>) -> Result<(), Failure> {
    let mut cfg = HarnessConfig::load(config)?;
    if let Some(p) = parallelism {
        cfg.parallelism = p;
        cfg.validate()?;
    }
    let summary = run_sweep(&cfg, &filter.to_filter())?;
    if summary.records.is_empty() {
        eprintln!("warning: the filter selected no runs");
        return Ok(());
    }
    for r in &summary.records {
        let status = r
            .status
            .map(|s| s.to_string())
            .unwrap_or_else(|| "error".into());
        println!("{}\t{}", r.run.run_id, status);
    }
    let counts: Vec<String> = [
        RunStatus::Completed,
        RunStatus::Crashed,
        RunStatus::MaxTurnsExceeded,
    ]
    .iter()
    .map(|s| format!("{s}={}", summary.count(*s)))
    .collect();
    println!("{} runs: {}", summary.records.len(), counts.join(" "));
    let errors: Vec<_> = summary.internal_errors().collect();
    for (run_id, e) in &errors {
        eprintln!("error: {run_id}: {e}");
    }
    if errors.is_empty() {
        Ok(())
    } else {
        Err(Failure(2))
    }
}

fn judge(root: &RootArgs) -> Result<(), Failure> {
    let outcomes = judge_sweep(&root.resolve()?)?;
    for o in &outcomes {
        println!("{}\t{}", o.run_id, o.failure_mode);
    }
    let counts: Vec<String> = FailureMode::ALL
        .iter()
        .map(|m| {
            format!(
                "{m}={}",
                outcomes.iter().filter(|o| o.failure_mode == *m).count()
            )
        })
        .collect();
    println!("{} outcomes: {}", outcomes.len(), counts.join(" "));
    Ok(())
}

fn analyze(root: &RootArgs, format: Format) -> Result<(), Failure> {
    let report = analyze_sweep(&root.resolve()?)?;
    let format = match format {
        Format::Json => ReportFormat::Json,
        Format::Markdown => ReportFormat::Markdown,
    };
    print!("{}", render_report(&report, format));
    Ok(())
}

fn replay(path: &Path) -> Result<(), Failure> {
    if !path.is_file() {
        eprintln!("error: missing trace {}", path.display());
        return Err(Failure(2));
    }
    let trace = read_trace(path).map_err(|e| {
        eprintln!("error: {}: {e}", path.display());
        Failure(1)
    })?;
    print!("{}", render_replay(&trace));
    Ok(())
}
