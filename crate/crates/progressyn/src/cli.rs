//! Command-line interface.
//!
//! Exit codes: 0 success, 2 bad input (unreadable or malformed files,
//! unsolvable task/code pairs), 3 infeasible synthesis (not enough
//! candidates), 4 internal error. Output is byte-deterministic for a fixed
//! seed; `PROGRESSYN_SEED` supplies the seed when no flag or config entry
//! does.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use progressyn_core::dsl::Dialect;
use progressyn_core::interpreter::{self, DEFAULT_MAX_STEPS};
use progressyn_core::metrics::DEFAULT_KAPPA;
use progressyn_core::progression::{SynthesisConfig, SynthesisError};

use crate::dataset::{self, AugmentConfig, Corpus, CorpusEntry, Method};
use crate::formats::{self, CorpusLine};
use crate::{gen, render};

/// An error with its process exit code.
#[derive(Debug)]
pub struct CliError {
    pub code: i32,
    pub message: String,
}

impl CliError {
    fn input(msg: impl Into<String>) -> CliError {
        CliError { code: 2, message: msg.into() }
    }

    fn infeasible(msg: impl Into<String>) -> CliError {
        CliError { code: 3, message: msg.into() }
    }

    fn internal(msg: impl Into<String>) -> CliError {
        CliError { code: 4, message: msg.into() }
    }

    fn from_synthesis(e: SynthesisError) -> CliError {
        match e {
            SynthesisError::TooFewCandidates { .. } => CliError::infeasible(format!("{e:?}")),
            SynthesisError::NotSingleGrid { .. }
            | SynthesisError::DoesNotSolve
            | SynthesisError::BadConfig(_) => CliError::input(format!("{e:?}")),
            other => CliError::internal(format!("{other:?}")),
        }
    }
}

type CliResult<T> = Result<T, CliError>;

#[derive(Debug, Parser)]
#[command(name = "progressyn", version, about = "Subtask progression synthesis for block-based programming tasks")]
pub struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum MethodArg {
    Progressyn,
    ProgressynGrids,
    SameTaskcode,
    SameCode,
}

impl MethodArg {
    fn to_method(self) -> Method {
        match self {
            MethodArg::Progressyn => Method::Progressyn,
            MethodArg::ProgressynGrids => Method::ProgressynGrids,
            MethodArg::SameTaskcode => Method::SameTaskcode,
            MethodArg::SameCode => Method::SameCode,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum DialectArg {
    Maze,
    Karel,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum RenderFormat {
    Ascii,
    Svg,
}

/// Numeric knobs shared by synthesize/augment; a `key=value` config file can
/// preset them, explicit flags win.
#[derive(Debug, Args, Default, Clone)]
struct Knobs {
    /// Config file with `key=value` lines (kappa, k_prime, max_steps, seed,
    /// k, jobs, greedy_threshold).
    #[arg(long)]
    config: Option<PathBuf>,
    /// Subtasks selected from the reference grid (progression length before
    /// extra grids).
    #[arg(long)]
    k_prime: Option<u32>,
    /// Depth weight of the complexity measure.
    #[arg(long)]
    kappa: Option<u32>,
    /// Interpreter step budget per run.
    #[arg(long)]
    max_steps: Option<u32>,
    /// Item budget for the baseline methods (default: matched to progressyn).
    #[arg(long)]
    k: Option<u32>,
    /// RNG seed (falls back to $PROGRESSYN_SEED, then 0).
    #[arg(long)]
    seed: Option<u64>,
    /// Worker threads for augment.
    #[arg(long)]
    jobs: Option<usize>,
    /// Grid count above which grid ordering switches to the greedy heuristic.
    #[arg(long)]
    greedy_threshold: Option<u32>,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Synthesize a progression for a single task/code record.
    Synthesize {
        /// JSON file with one record: {"task": ..., "code": "..."}.
        input: PathBuf,
        #[arg(long, value_enum, default_value = "progressyn")]
        method: MethodArg,
        /// Output file (stdout when omitted).
        #[arg(long, short)]
        output: Option<PathBuf>,
        #[command(flatten)]
        knobs: Knobs,
    },
    /// Augment every task of a JSON-lines corpus with a progression.
    Augment {
        /// JSON-lines corpus.
        input: PathBuf,
        #[arg(long, value_enum, default_value = "progressyn")]
        method: MethodArg,
        #[arg(long, short)]
        output: PathBuf,
        #[command(flatten)]
        knobs: Knobs,
    },
    /// Recompute validation statistics from a corpus file.
    Validate {
        input: PathBuf,
        #[arg(long)]
        kappa: Option<u32>,
        /// Emit the report as JSON instead of the text table.
        #[arg(long)]
        json: bool,
    },
    /// Execute a record's code on each of its grids and report outcomes.
    Run {
        input: PathBuf,
        #[arg(long)]
        max_steps: Option<u32>,
    },
    /// Print the action/condition trace of a record on one grid as JSON.
    Trace {
        input: PathBuf,
        /// Grid index within the task.
        #[arg(long, default_value_t = 0)]
        grid: usize,
        #[arg(long)]
        max_steps: Option<u32>,
    },
    /// Render a record's grid as ASCII or SVG.
    Render {
        input: PathBuf,
        #[arg(long, default_value_t = 0)]
        grid: usize,
        #[arg(long, value_enum, default_value = "ascii")]
        format: RenderFormat,
        /// ASCII only: animate the run as one frame per action.
        #[arg(long)]
        frames: bool,
        #[arg(long, short)]
        output: Option<PathBuf>,
    },
    /// Convert a token-sequence corpus into the native JSON-lines format.
    Import {
        input: PathBuf,
        #[arg(long, short)]
        output: PathBuf,
        #[arg(long)]
        max_steps: Option<u32>,
        /// Drop imported tasks whose solution does not reach every block.
        #[arg(long)]
        prune_coverage: bool,
    },
    /// Generate a seeded corpus of solvable tasks.
    Gen {
        #[arg(long, default_value_t = 100)]
        count: u32,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long, value_enum)]
        dialect: Option<DialectArg>,
        /// Restrict to the three-grid karel benchmark template.
        #[arg(long)]
        branch3: bool,
        #[arg(long, short)]
        output: PathBuf,
    },
}

fn read_config_file(path: &Path) -> CliResult<BTreeMap<String, String>> {
    let text = fs::read_to_string(path)
        .map_err(|e| CliError::input(format!("config {}: {e}", path.display())))?;
    let mut map = BTreeMap::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (k, v) = line
            .split_once('=')
            .ok_or_else(|| CliError::input(format!("config line {}: expected key=value", i + 1)))?;
        map.insert(k.trim().to_string(), v.trim().to_string());
    }
    Ok(map)
}

fn config_get<T: std::str::FromStr>(
    map: &BTreeMap<String, String>,
    key: &str,
) -> CliResult<Option<T>> {
    match map.get(key) {
        None => Ok(None),
        Some(v) => v
            .parse()
            .map(Some)
            .map_err(|_| CliError::input(format!("config {key}: bad value {v:?}"))),
    }
}

fn env_seed() -> CliResult<Option<u64>> {
    match std::env::var("PROGRESSYN_SEED") {
        Ok(v) => v
            .parse()
            .map(Some)
            .map_err(|_| CliError::input(format!("PROGRESSYN_SEED: bad value {v:?}"))),
        Err(_) => Ok(None),
    }
}

/// Flag > config file > environment (seed only) > default.
fn resolve_knobs(knobs: &Knobs) -> CliResult<AugmentConfig> {
    let map = match &knobs.config {
        Some(path) => read_config_file(path)?,
        None => BTreeMap::new(),
    };
    let mut syn = SynthesisConfig::default();
    if let Some(v) = knobs.k_prime.or(config_get(&map, "k_prime")?) {
        syn.k_prime = v;
    }
    if let Some(v) = knobs.kappa.or(config_get(&map, "kappa")?) {
        syn.kappa = v;
    }
    if let Some(v) = knobs.max_steps.or(config_get(&map, "max_steps")?) {
        syn.max_steps = v;
    }
    if let Some(v) = knobs.greedy_threshold.or(config_get(&map, "greedy_threshold")?) {
        syn.greedy_threshold = v;
    }
    let seed = match knobs.seed.or(config_get(&map, "seed")?) {
        Some(s) => s,
        None => env_seed()?.unwrap_or(0),
    };
    Ok(AugmentConfig {
        method: Method::Progressyn,
        synthesis: syn,
        k: knobs.k.or(config_get(&map, "k")?),
        seed,
        jobs: knobs.jobs.or(config_get(&map, "jobs")?).unwrap_or(1).max(1),
    })
}

fn read_record(path: &Path) -> CliResult<CorpusEntry> {
    let text = fs::read_to_string(path)
        .map_err(|e| CliError::input(format!("{}: {e}", path.display())))?;
    let line: CorpusLine = serde_json::from_str(text.trim())
        .map_err(|e| CliError::input(format!("{}: {e}", path.display())))?;
    let task = line
        .task
        .to_task()
        .map_err(|e| CliError::input(format!("task: {e}")))?;
    let code = formats::parse_code(&line.code, Some(task.dialect()))
        .map_err(|e| CliError::input(format!("code: {e}")))?;
    Ok(CorpusEntry {
        task,
        code,
        parent_id: line.parent_id,
        seq_index: line.seq_index,
        method: line.method,
    })
}

fn read_corpus(path: &Path, max_steps: u32) -> CliResult<Corpus> {
    let (corpus, issues) =
        dataset::read_corpus(path, max_steps).map_err(|e| CliError::input(format!("{e:#}")))?;
    for issue in &issues {
        eprintln!("warning: record {}: {}", issue.record, issue.reason);
    }
    if corpus.entries.is_empty() {
        return Err(CliError::input(format!(
            "{}: no usable records",
            path.display()
        )));
    }
    Ok(corpus)
}

fn emit(output: Option<&Path>, text: &str) -> CliResult<()> {
    match output {
        Some(path) => fs::write(path, text)
            .map_err(|e| CliError::internal(format!("{}: {e}", path.display()))),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

fn cmd_synthesize(
    input: &Path,
    method: Method,
    output: Option<&Path>,
    knobs: &Knobs,
) -> CliResult<()> {
    let mut cfg = resolve_knobs(knobs)?;
    cfg.method = method;
    let entry = read_record(input)?;
    if !interpreter::solves(&entry.code, &entry.task, cfg.synthesis.max_steps) {
        return Err(CliError::input("code does not solve task"));
    }
    let (progression, counts) =
        dataset::synthesize_one(&entry, &cfg).map_err(CliError::from_synthesis)?;
    let counts = (method == Method::Progressyn && entry.task.n() == 1).then_some(counts);
    let json = formats::progression_json(
        &progression,
        method.name(),
        cfg.synthesis.kappa,
        cfg.synthesis.max_steps,
        counts,
    );
    let mut text = serde_json::to_string_pretty(&json)
        .map_err(|e| CliError::internal(e.to_string()))?;
    text.push('\n');
    emit(output, &text)
}

fn cmd_augment(input: &Path, method: Method, output: &Path, knobs: &Knobs) -> CliResult<()> {
    let mut cfg = resolve_knobs(knobs)?;
    cfg.method = method;
    let corpus = read_corpus(input, cfg.synthesis.max_steps)?;
    let (augmented, report) =
        dataset::augment(&corpus, &cfg).map_err(|e| CliError::internal(format!("{e:#}")))?;
    dataset::write_corpus(output, &augmented)
        .map_err(|e| CliError::internal(format!("{e:#}")))?;
    print!("{}", report.table());
    Ok(())
}

fn cmd_validate(input: &Path, kappa: u32, json: bool) -> CliResult<()> {
    let corpus = read_corpus(input, DEFAULT_MAX_STEPS)?;
    let report =
        dataset::validate(&corpus, kappa).map_err(|e| CliError::internal(format!("{e:#}")))?;
    if json {
        print!("{}", dataset::report_json(&report));
    } else {
        print!("{}", report.table());
    }
    Ok(())
}

fn cmd_run(input: &Path, max_steps: u32) -> CliResult<()> {
    let entry = read_record(input)?;
    let mut all_solved = true;
    for (i, grid) in entry.task.vis.iter().enumerate() {
        let (solved, outcome) = match interpreter::execute(&entry.code, grid, max_steps) {
            Ok(res) => (
                res.outcome == interpreter::Outcome::Solved,
                format!("{:?}", res.outcome),
            ),
            Err(e) => (false, format!("{e:?}")),
        };
        all_solved &= solved;
        println!("grid {i}: {outcome}");
    }
    if all_solved {
        Ok(())
    } else {
        Err(CliError::input("code does not solve task"))
    }
}

fn cmd_trace(input: &Path, grid: usize, max_steps: u32) -> CliResult<()> {
    let entry = read_record(input)?;
    let g = entry
        .task
        .vis
        .get(grid)
        .ok_or_else(|| CliError::input(format!("grid index {grid} out of range")))?;
    let trace = interpreter::trace(&entry.code, g, max_steps)
        .map_err(|e| CliError::input(format!("{e:?}")))?;
    let mut text = serde_json::to_string_pretty(&formats::trace_json(&trace))
        .map_err(|e| CliError::internal(e.to_string()))?;
    text.push('\n');
    print!("{text}");
    Ok(())
}

fn cmd_render(
    input: &Path,
    grid: usize,
    format: RenderFormat,
    frames: bool,
    output: Option<&Path>,
) -> CliResult<()> {
    let entry = read_record(input)?;
    let g = entry
        .task
        .vis
        .get(grid)
        .ok_or_else(|| CliError::input(format!("grid index {grid} out of range")))?;
    let text = match format {
        RenderFormat::Svg => render::svg_grid(g),
        RenderFormat::Ascii if frames => {
            let frames = render::ascii_run(&entry.code, g, DEFAULT_MAX_STEPS)
                .map_err(CliError::input)?;
            frames.join("\n")
        }
        RenderFormat::Ascii => render::ascii_grid(g),
    };
    emit(output, &text)
}

fn cmd_import(
    input: &Path,
    output: &Path,
    max_steps: u32,
    prune_coverage: bool,
) -> CliResult<()> {
    let (mut corpus, issues) = dataset::import_bunel(input, max_steps)
        .map_err(|e| CliError::input(format!("{e:#}")))?;
    for issue in &issues {
        eprintln!("warning: record {}: {}", issue.record, issue.reason);
    }
    let imported = corpus.entries.len();
    if prune_coverage {
        corpus = dataset::prune_full_coverage(&corpus, max_steps);
    }
    dataset::write_corpus(output, &corpus)
        .map_err(|e| CliError::internal(format!("{e:#}")))?;
    println!(
        "imported: {imported}\nkept: {}\nskipped: {}",
        corpus.entries.len(),
        issues.len()
    );
    Ok(())
}

fn cmd_gen(
    count: u32,
    seed: Option<u64>,
    dialect: Option<DialectArg>,
    branch3: bool,
    output: &Path,
) -> CliResult<()> {
    let seed = match seed {
        Some(s) => s,
        None => env_seed()?.unwrap_or(0),
    };
    let corpus = if branch3 {
        gen::generate_branch3(count, seed)
    } else {
        let d = dialect.map(|d| match d {
            DialectArg::Maze => Dialect::Maze,
            DialectArg::Karel => Dialect::Karel,
        });
        gen::generate(count, seed, d)
    }
    .map_err(|e| CliError::internal(format!("{e:#}")))?;
    dataset::write_corpus(output, &corpus)
        .map_err(|e| CliError::internal(format!("{e:#}")))?;
    println!("generated: {}", corpus.entries.len());
    Ok(())
}

/// Parses `args` and runs the selected command, returning the exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            // clap handles --help/--version as "errors" with exit code 0
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    let result = match &cli.command {
        Command::Synthesize { input, method, output, knobs } => {
            cmd_synthesize(input, method.to_method(), output.as_deref(), knobs)
        }
        Command::Augment { input, method, output, knobs } => {
            cmd_augment(input, method.to_method(), output, knobs)
        }
        Command::Validate { input, kappa, json } => {
            cmd_validate(input, kappa.unwrap_or(DEFAULT_KAPPA), *json)
        }
        Command::Run { input, max_steps } => {
            cmd_run(input, max_steps.unwrap_or(DEFAULT_MAX_STEPS))
        }
        Command::Trace { input, grid, max_steps } => {
            cmd_trace(input, *grid, max_steps.unwrap_or(DEFAULT_MAX_STEPS))
        }
        Command::Render { input, grid, format, frames, output } => {
            cmd_render(input, *grid, *format, *frames, output.as_deref())
        }
        Command::Import { input, output, max_steps, prune_coverage } => {
            cmd_import(input, output, max_steps.unwrap_or(DEFAULT_MAX_STEPS), *prune_coverage)
        }
        Command::Gen { count, seed, dialect, branch3, output } => {
            cmd_gen(*count, *seed, *dialect, *branch3, output)
        }
    };
    match result {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {}", e.message);
            e.code
        }
    }
}
