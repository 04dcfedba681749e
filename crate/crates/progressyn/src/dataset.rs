//! Corpus ingestion, pruning, augmentation, and validation statistics.
//!
//! The native corpus format is JSON-lines, one task per line (see
//! [`crate::formats::CorpusLine`]). Augmented corpora keep the progression
//! structure recoverable through `parent_id`/`seq_index`, so a
//! [`ValidationReport`] is a pure function of the corpus file.

use std::collections::BTreeSet;
use std::fmt;
use std::fs;
use std::io::{BufRead, BufReader};
use std::path::Path;

use anyhow::{bail, Context, Result};
use progressyn_core::dsl::{Block, Code, Condition, Dialect};
use progressyn_core::interpreter;
use progressyn_core::metrics;
use progressyn_core::progression::{
    self, Progression, StageCounts, SynthesisConfig,
};
use progressyn_core::world::Task;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::formats::{CorpusLine, TaskJson};

#[derive(Debug, Clone, PartialEq)]
pub struct CorpusEntry {
    pub task: Task,
    pub code: Code,
    pub parent_id: Option<String>,
    pub seq_index: Option<u32>,
    pub method: Option<String>,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct Corpus {
    pub entries: Vec<CorpusEntry>,
}

/// A record that failed to import, with why.
#[derive(Debug, Clone)]
pub struct ImportIssue {
    pub record: usize,
    pub reason: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Method {
    Progressyn,
    ProgressynGrids,
    SameTaskcode,
    SameCode,
}

impl Method {
    pub const ALL: [Method; 4] = [
        Method::Progressyn,
        Method::ProgressynGrids,
        Method::SameTaskcode,
        Method::SameCode,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            Method::Progressyn => "progressyn",
            Method::ProgressynGrids => "progressyn_grids",
            Method::SameTaskcode => "same_taskcode",
            Method::SameCode => "same_code",
        }
    }

    pub fn from_name(s: &str) -> Option<Method> {
        Method::ALL.iter().copied().find(|m| m.name() == s)
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Validation statistics over an (augmented) corpus, per §-style reporting:
/// distinct code complexity values and the mean worst complexity jump across
/// per-task progressions.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ValidationReport {
    pub method: String,
    pub tasks: usize,
    pub entries: usize,
    pub unique_complexity_count: usize,
    /// Mean progression complexity, rounded to one decimal.
    pub avg_max_jump: f64,
    pub dropped_unsat: u64,
    pub failed_tasks: u64,
}

impl ValidationReport {
    pub fn table(&self) -> String {
        format!(
            "method: {}\ntasks: {}\nentries: {}\nunique_complexity_count: {}\navg_max_jump: {:.1}\ndropped_unsat: {}\nfailed_tasks: {}\n",
            self.method,
            self.tasks,
            self.entries,
            self.unique_complexity_count,
            self.avg_max_jump,
            self.dropped_unsat,
            self.failed_tasks
        )
    }
}

fn entry_to_line(e: &CorpusEntry) -> CorpusLine {
    CorpusLine {
        task: TaskJson::from_task(&e.task),
        code: e.code.serialize(),
        parent_id: e.parent_id.clone(),
        seq_index: e.seq_index,
        method: e.method.clone(),
    }
}

fn line_to_entry(line: &CorpusLine) -> Result<CorpusEntry> {
    let task = line.task.to_task().context("task")?;
    let code = Code::parse(&line.code).context("code")?;
    Ok(CorpusEntry {
        task,
        code,
        parent_id: line.parent_id.clone(),
        seq_index: line.seq_index,
        method: line.method.clone(),
    })
}

/// Reads a native JSON-lines corpus. Records that fail to parse or whose
/// code does not solve the task are skipped and reported.
pub fn read_corpus(path: &Path, max_steps: u32) -> Result<(Corpus, Vec<ImportIssue>)> {
    let file = fs::File::open(path).with_context(|| format!("open {}", path.display()))?;
    let mut corpus = Corpus::default();
    let mut issues = Vec::new();
    let mut ids = BTreeSet::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let parsed: std::result::Result<CorpusLine, _> = serde_json::from_str(&line);
        let entry = parsed
            .map_err(|e| e.to_string())
            .and_then(|l| line_to_entry(&l).map_err(|e| format!("{e:#}")));
        match entry {
            Ok(e) => {
                if !ids.insert(e.task.id.clone()) {
                    issues.push(ImportIssue {
                        record: i,
                        reason: format!("duplicate task id {:?}", e.task.id),
                    });
                } else if !interpreter::solves(&e.code, &e.task, max_steps) {
                    issues.push(ImportIssue {
                        record: i,
                        reason: "code does not solve task".into(),
                    });
                } else {
                    corpus.entries.push(e);
                }
            }
            Err(reason) => issues.push(ImportIssue { record: i, reason }),
        }
    }
    Ok((corpus, issues))
}

pub fn write_corpus(path: &Path, corpus: &Corpus) -> Result<()> {
    let mut out = Vec::new();
    for e in &corpus.entries {
        serde_json::to_writer(&mut out, &entry_to_line(e))?;
        out.push(b'\n');
    }
    fs::write(path, out).with_context(|| format!("write {}", path.display()))?;
    Ok(())
}

/// Keeps only tasks whose solution reaches every block of its code across
/// the task's grids.
pub fn prune_full_coverage(corpus: &Corpus, max_steps: u32) -> Corpus {
    let entries = corpus
        .entries
        .iter()
        .filter(|e| {
            interpreter::coverage(&e.code, &e.task.vis, max_steps)
                .map(|(_, fraction)| fraction == 1.0)
                .unwrap_or(false)
        })
        .cloned()
        .collect();
    Corpus { entries }
}

#[derive(Debug, Clone)]
pub struct AugmentConfig {
    pub method: Method,
    pub synthesis: SynthesisConfig,
    /// Item budget for the baselines. When absent, each task gets the
    /// matched budget K' + n − 1 so methods are comparable.
    pub k: Option<u32>,
    pub seed: u64,
    pub jobs: usize,
}

impl Default for AugmentConfig {
    fn default() -> Self {
        AugmentConfig {
            method: Method::Progressyn,
            synthesis: SynthesisConfig::default(),
            k: None,
            seed: 0,
            jobs: 1,
        }
    }
}

/// Stable per-task seed derived from the global seed and the task id (FNV-1a
/// over the id bytes).
fn task_seed(global: u64, id: &str) -> u64 {
    let mut h: u64 = 0xcbf29ce484222325 ^ global;
    for b in id.as_bytes() {
        h ^= *b as u64;
        h = h.wrapping_mul(0x100000001b3);
    }
    h
}

/// Runs one method on one record, producing its progression.
pub fn synthesize_one(
    entry: &CorpusEntry,
    cfg: &AugmentConfig,
) -> Result<(Progression, StageCounts), progression::SynthesisError> {
    let k = cfg
        .k
        .unwrap_or(cfg.synthesis.k_prime + entry.task.n() - 1)
        .max(1);
    match cfg.method {
        Method::Progressyn => {
            if entry.task.n() == 1 {
                let (p, c) = progression::progressyn_single_with_counts(
                    &entry.task,
                    &entry.code,
                    &cfg.synthesis,
                )?;
                Ok((p, c))
            } else {
                let p = progression::progressyn(&entry.task, &entry.code, &cfg.synthesis)?;
                Ok((p, StageCounts::default()))
            }
        }
        Method::ProgressynGrids => {
            let p = progression::progressyn_grids(&entry.task, &entry.code, &cfg.synthesis)?;
            Ok((p, StageCounts::default()))
        }
        Method::SameTaskcode => Ok((
            progression::baseline_same_taskcode(&entry.task, &entry.code, k),
            StageCounts::default(),
        )),
        Method::SameCode => {
            let seed = task_seed(cfg.seed, &entry.task.id);
            let p = progression::baseline_same_code(
                &entry.task,
                &entry.code,
                k,
                seed,
                &cfg.synthesis,
            )?;
            Ok((p, StageCounts::default()))
        }
    }
}

/// Per-task augmentation result, before flattening into the output corpus.
struct TaskResult {
    entries: Vec<CorpusEntry>,
    dropped_unsat: u64,
    failed: bool,
}

fn augment_one(entry: &CorpusEntry, cfg: &AugmentConfig) -> TaskResult {
    match synthesize_one(entry, cfg) {
        Ok((p, counts)) => {
            let k = p.items.len();
            let entries = p
                .items
                .into_iter()
                .enumerate()
                .map(|(i, item)| {
                    let last = i + 1 == k;
                    let mut task = item.task;
                    if !last {
                        // copies and realized subtasks need distinct ids
                        task.id = format!("{}-k{}", entry.task.id, i + 1);
                    }
                    CorpusEntry {
                        task,
                        code: item.code,
                        parent_id: Some(entry.task.id.clone()),
                        seq_index: Some(i as u32 + 1),
                        method: Some(cfg.method.name().to_string()),
                    }
                })
                .collect();
            TaskResult {
                entries,
                dropped_unsat: counts.dropped_unsat as u64,
                failed: false,
            }
        }
        Err(_) => TaskResult {
            // pass the task through un-augmented
            entries: vec![CorpusEntry {
                parent_id: Some(entry.task.id.clone()),
                seq_index: Some(1),
                method: Some(cfg.method.name().to_string()),
                ..entry.clone()
            }],
            dropped_unsat: 0,
            failed: true,
        },
    }
}

/// Replaces every task with its synthesized progression (the reference pair
/// stays as the final item, so originals are preserved verbatim). Output
/// order follows input order; deterministic given the seed.
pub fn augment(corpus: &Corpus, cfg: &AugmentConfig) -> Result<(Corpus, ValidationReport)> {
    let results: Vec<TaskResult> = if cfg.jobs > 1 {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(cfg.jobs)
            .build()
            .context("thread pool")?;
        pool.install(|| {
            corpus
                .entries
                .par_iter()
                .map(|e| augment_one(e, cfg))
                .collect()
        })
    } else {
        corpus.entries.iter().map(|e| augment_one(e, cfg)).collect()
    };
    let mut out = Corpus::default();
    let mut dropped = 0u64;
    let mut failed = 0u64;
    for r in results {
        dropped += r.dropped_unsat;
        failed += u64::from(r.failed);
        out.entries.extend(r.entries);
    }
    let mut report = validate(&out, cfg.synthesis.kappa)?;
    report.method = cfg.method.name().to_string();
    report.dropped_unsat = dropped;
    report.failed_tasks = failed;
    Ok((out, report))
}

/// Recomputes the validation statistics from a corpus alone. Entries group
/// into progressions by `parent_id` (order of `seq_index`); entries without
/// one count as single-item progressions.
pub fn validate(corpus: &Corpus, kappa: u32) -> Result<ValidationReport> {
    let mut complexities: BTreeSet<u64> = BTreeSet::new();
    // group key -> (seq, complexity); corpus order is already seq order
    let mut groups: Vec<(String, Vec<u64>)> = Vec::new();
    for e in &corpus.entries {
        let c = metrics::code_complexity(&e.code, kappa);
        complexities.insert(c);
        let key = e.parent_id.clone().unwrap_or_else(|| e.task.id.clone());
        match groups.last_mut() {
            Some((k, v)) if *k == key => v.push(c),
            _ => groups.push((key, vec![c])),
        }
    }
    let method = corpus
        .entries
        .iter()
        .find_map(|e| e.method.clone())
        .unwrap_or_else(|| "unknown".to_string());
    let jumps: Vec<i64> = groups
        .iter()
        .map(|(_, cs)| metrics::jump_objective(cs, kappa))
        .collect();
    let avg = if jumps.is_empty() {
        0.0
    } else {
        jumps.iter().sum::<i64>() as f64 / jumps.len() as f64
    };
    Ok(ValidationReport {
        method,
        tasks: groups.len(),
        entries: corpus.entries.len(),
        unique_complexity_count: complexities.len(),
        avg_max_jump: (avg * 10.0).round() / 10.0,
        dropped_unsat: 0,
        failed_tasks: 0,
    })
}

// ---------------------------------------------------------------------------
// Importer for token-sequence corpora ("bunel-json")

/// One record of the token-sequence corpus format: a program as a flat token
/// list plus input/output grid pairs.
///
/// Token table (program):
///
/// | tokens                  | construct                    |
/// |-------------------------|------------------------------|
/// | `DEF run m(` ... `m)`   | `Run{...}`                   |
/// | `move`, `turnLeft`, `turnRight`, `pickMarker`, `putMarker` | actions |
/// | `REPEAT R=n r(` ... `r)`| `Repeat(n){...}`             |
/// | `WHILE c( X c) w( ... w)` | `While(X){...}`            |
/// | `IF c( X c) i( ... i)`  | `If(X){...}`                 |
/// | `IFELSE c( X c) i( .. i) ELSE e( .. e)` | `IfElse(X){..}{..}` |
/// | `not c( X c)`           | `not(X)`                     |
/// | `frontIsClear`, `leftIsClear`, `rightIsClear`, `markersPresent`, `noMarkersPresent` | conditions |
///
/// Grids use the same row-string schema as the native format (karel only).
#[derive(Debug, Clone, Deserialize)]
pub struct BunelRecord {
    pub id: String,
    pub program_tokens: Vec<String>,
    pub examples: Vec<BunelExample>,
}

#[derive(Debug, Clone, Deserialize)]
pub struct BunelExample {
    pub rows: Vec<String>,
    pub post_rows: Vec<String>,
    pub avatar: crate::formats::PoseJson,
    pub end_avatar: crate::formats::PoseJson,
}

struct TokenCursor<'a> {
    toks: &'a [String],
    pos: usize,
}

impl<'a> TokenCursor<'a> {
    fn next(&mut self) -> Result<&'a str> {
        let t = self
            .toks
            .get(self.pos)
            .map(|s| s.as_str())
            .ok_or_else(|| anyhow::anyhow!("unexpected end of token stream"))?;
        self.pos += 1;
        Ok(t)
    }

    fn expect(&mut self, want: &str) -> Result<()> {
        let got = self.next()?;
        if got != want {
            bail!("expected token {want:?}, got {got:?} at {}", self.pos - 1);
        }
        Ok(())
    }

    fn peek(&self) -> Option<&'a str> {
        self.toks.get(self.pos).map(|s| s.as_str())
    }
}

fn parse_bunel_cond(cur: &mut TokenCursor) -> Result<Condition> {
    cur.expect("c(")?;
    let cond = match cur.next()? {
        "not" => Condition::Not(Box::new(parse_bunel_cond(cur)?)),
        "frontIsClear" => Condition::FrontIsClear,
        "leftIsClear" => Condition::LeftIsClear,
        "rightIsClear" => Condition::RightIsClear,
        "markersPresent" => Condition::MarkersPresent,
        "noMarkersPresent" => Condition::NoMarkersPresent,
        other => bail!("unknown condition token {other:?}"),
    };
    cur.expect("c)")?;
    Ok(cond)
}

fn parse_bunel_body(cur: &mut TokenCursor, close: &str) -> Result<Vec<Block>> {
    let mut body = Vec::new();
    loop {
        match cur.peek() {
            Some(t) if t == close => {
                cur.pos += 1;
                return Ok(body);
            }
            None => bail!("unterminated body, expected {close:?}"),
            _ => {}
        }
        let t = cur.next()?;
        let block = match t {
            "move" => Block::Move,
            "turnLeft" => Block::TurnLeft,
            "turnRight" => Block::TurnRight,
            "pickMarker" => Block::PickMarker,
            "putMarker" => Block::PutMarker,
            "REPEAT" => {
                let count_tok = cur.next()?;
                let count: u32 = count_tok
                    .strip_prefix("R=")
                    .and_then(|s| s.parse().ok())
                    .ok_or_else(|| anyhow::anyhow!("bad repeat count token {count_tok:?}"))?;
                cur.expect("r(")?;
                Block::Repeat {
                    count,
                    body: parse_bunel_body(cur, "r)")?,
                }
            }
            "WHILE" => {
                let cond = parse_bunel_cond(cur)?;
                cur.expect("w(")?;
                Block::While {
                    cond,
                    body: parse_bunel_body(cur, "w)")?,
                }
            }
            "IF" => {
                let cond = parse_bunel_cond(cur)?;
                cur.expect("i(")?;
                Block::If {
                    cond,
                    body: parse_bunel_body(cur, "i)")?,
                }
            }
            "IFELSE" => {
                let cond = parse_bunel_cond(cur)?;
                cur.expect("i(")?;
                let then_body = parse_bunel_body(cur, "i)")?;
                cur.expect("ELSE")?;
                cur.expect("e(")?;
                Block::IfElse {
                    cond,
                    then_body,
                    else_body: parse_bunel_body(cur, "e)")?,
                }
            }
            other => bail!("unknown program token {other:?}"),
        };
        body.push(block);
    }
}

pub fn bunel_program_to_code(tokens: &[String]) -> Result<Code> {
    let mut cur = TokenCursor { toks: tokens, pos: 0 };
    cur.expect("DEF")?;
    cur.expect("run")?;
    cur.expect("m(")?;
    let body = parse_bunel_body(&mut cur, "m)")?;
    if cur.pos != tokens.len() {
        bail!("trailing tokens after m)");
    }
    Ok(Code::new(Dialect::Karel, body))
}

fn bunel_record_to_entry(rec: &BunelRecord, max_steps: u32) -> Result<CorpusEntry> {
    let code = bunel_program_to_code(&rec.program_tokens)?;
    let mut vis = Vec::with_capacity(rec.examples.len());
    for ex in &rec.examples {
        let gj = crate::formats::GridJson {
            dialect: "karel".into(),
            rows: ex.rows.clone(),
            post_rows: Some(ex.post_rows.clone()),
            avatar: ex.avatar,
            end_avatar: Some(ex.end_avatar),
        };
        vis.push(gj.to_grid()?);
    }
    let store = code.blocks();
    let task = Task::new(rec.id.clone(), vis, store, code.size());
    if !interpreter::solves(&code, &task, max_steps) {
        bail!("code does not solve task");
    }
    Ok(CorpusEntry {
        task,
        code,
        parent_id: None,
        seq_index: None,
        method: None,
    })
}

/// Imports a token-sequence corpus (JSON-lines of [`BunelRecord`]).
pub fn import_bunel(path: &Path, max_steps: u32) -> Result<(Corpus, Vec<ImportIssue>)> {
    let file = fs::File::open(path).with_context(|| format!("open {}", path.display()))?;
    let mut corpus = Corpus::default();
    let mut issues = Vec::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let entry = serde_json::from_str::<BunelRecord>(&line)
            .map_err(|e| e.to_string())
            .and_then(|r| bunel_record_to_entry(&r, max_steps).map_err(|e| format!("{e:#}")));
        match entry {
            Ok(e) => corpus.entries.push(e),
            Err(reason) => issues.push(ImportIssue { record: i, reason }),
        }
    }
    Ok((corpus, issues))
}

/// Writes a report as stable JSON.
pub fn report_json(report: &ValidationReport) -> String {
    let mut s = serde_json::to_string_pretty(report).expect("report serializes");
    s.push('\n');
    s
}

#[cfg(test)]
mod tests {
    use super::*;
    use progressyn_core::world::{Dir, Grid, Pose};

    fn straight_entry(id: &str, len: u32) -> CorpusEntry {
        let mut rows = vec![String::new(); 2];
        rows[0] = format!("{}G", ".".repeat(len as usize));
        rows[1] = "#".repeat(len as usize + 1);
        let rows: Vec<&str> = rows.iter().map(|s| s.as_str()).collect();
        let g = Grid::maze_from_rows(&rows, Pose::new(0, 0, Dir::East)).unwrap();
        let code = Code::parse(&format!("Run{{Repeat({len}){{move}}}}")).unwrap();
        CorpusEntry {
            task: Task::new(id, vec![g], code.blocks(), code.size()),
            code,
            parent_id: None,
            seq_index: None,
            method: None,
        }
    }

    #[test]
    fn corpus_round_trips() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("c.jsonl");
        let corpus = Corpus {
            entries: vec![straight_entry("a", 4), straight_entry("b", 6)],
        };
        write_corpus(&path, &corpus).unwrap();
        let (back, issues) = read_corpus(&path, 100).unwrap();
        assert!(issues.is_empty());
        assert_eq!(back, corpus);
    }

    #[test]
    fn empty_file_gives_empty_corpus() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("empty.jsonl");
        std::fs::write(&path, "").unwrap();
        let (corpus, issues) = read_corpus(&path, 100).unwrap();
        assert!(corpus.entries.is_empty() && issues.is_empty());
    }

    #[test]
    fn non_solving_record_is_skipped_with_issue() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("c.jsonl");
        let mut bad = straight_entry("bad", 4);
        bad.code = Code::parse("Run{move}").unwrap();
        write_corpus(&path, &Corpus { entries: vec![bad] }).unwrap();
        let (corpus, issues) = read_corpus(&path, 100).unwrap();
        assert!(corpus.entries.is_empty());
        assert_eq!(issues.len(), 1);
        assert!(issues[0].reason.contains("solve"));
    }

    #[test]
    fn prune_drops_partial_coverage() {
        // the If body never runs: coverage < 1
        let g = Grid::maze_from_rows(&["..G", "###"], Pose::new(0, 0, Dir::East)).unwrap();
        let code = Code::parse("Run{If(pathRight){turnRight} move move}").unwrap();
        let dead = CorpusEntry {
            task: Task::new("dead", vec![g], code.blocks(), code.size()),
            code,
            parent_id: None,
            seq_index: None,
            method: None,
        };
        assert!(interpreter::solves(&dead.code, &dead.task, 100));
        let corpus = Corpus {
            entries: vec![straight_entry("live", 4), dead],
        };
        let pruned = prune_full_coverage(&corpus, 100);
        assert_eq!(pruned.entries.len(), 1);
        assert_eq!(pruned.entries[0].task.id, "live");
    }

    #[test]
    fn same_taskcode_augment_appends_copies_without_new_complexities() {
        let corpus = Corpus {
            entries: vec![straight_entry("a", 4)],
        };
        let base_report = validate(&corpus, 1000).unwrap();
        let cfg = AugmentConfig {
            method: Method::SameTaskcode,
            k: Some(9),
            ..AugmentConfig::default()
        };
        let (aug, report) = augment(&corpus, &cfg).unwrap();
        assert_eq!(aug.entries.len(), 9);
        assert!(aug.entries.iter().all(|e| e.code == corpus.entries[0].code));
        assert_eq!(
            report.unique_complexity_count,
            base_report.unique_complexity_count
        );
        // last item preserves the original verbatim
        assert_eq!(aug.entries.last().unwrap().task, corpus.entries[0].task);
    }

    #[test]
    fn validate_is_pure_function_of_corpus() {
        let corpus = Corpus {
            entries: vec![straight_entry("a", 5), straight_entry("b", 7)],
        };
        let cfg = AugmentConfig {
            method: Method::Progressyn,
            synthesis: SynthesisConfig {
                k_prime: 3,
                max_steps: 200,
                ..SynthesisConfig::default()
            },
            ..AugmentConfig::default()
        };
        let (aug, report) = augment(&corpus, &cfg).unwrap();
        let revalidated = validate(&aug, 1000).unwrap();
        assert_eq!(report.unique_complexity_count, revalidated.unique_complexity_count);
        assert_eq!(report.avg_max_jump, revalidated.avg_max_jump);
        assert_eq!(report.tasks, revalidated.tasks);
    }

    #[test]
    fn parallel_augment_matches_serial() {
        let corpus = Corpus {
            entries: (0..8).map(|i| straight_entry(&format!("t{i}"), 4 + i % 3)).collect(),
        };
        let mut cfg = AugmentConfig {
            method: Method::Progressyn,
            synthesis: SynthesisConfig {
                k_prime: 2,
                max_steps: 200,
                ..SynthesisConfig::default()
            },
            ..AugmentConfig::default()
        };
        let (serial, _) = augment(&corpus, &cfg).unwrap();
        cfg.jobs = 4;
        let (parallel, _) = augment(&corpus, &cfg).unwrap();
        assert_eq!(serial, parallel);
    }

    fn toks(v: &[&str]) -> Vec<String> {
        v.iter().map(|s| s.to_string()).collect()
    }

    // three hand-translated token programs pin the importer's table
    #[test]
    fn bunel_tokens_translate_straight_program() {
        let code = bunel_program_to_code(&toks(&[
            "DEF", "run", "m(", "move", "move", "putMarker", "m)",
        ]))
        .unwrap();
        assert_eq!(code.serialize(), "Run{move move putMarker}");
    }

    #[test]
    fn bunel_tokens_translate_repeat_and_while() {
        let code = bunel_program_to_code(&toks(&[
            "DEF", "run", "m(", "REPEAT", "R=3", "r(", "move", "r)", "WHILE", "c(",
            "frontIsClear", "c)", "w(", "putMarker", "move", "w)", "m)",
        ]))
        .unwrap();
        assert_eq!(
            code.serialize(),
            "Run{Repeat(3){move} While(frontIsClear){putMarker move}}"
        );
    }

    #[test]
    fn bunel_tokens_translate_ifelse_with_not() {
        let code = bunel_program_to_code(&toks(&[
            "DEF", "run", "m(", "IFELSE", "c(", "not", "c(", "markersPresent", "c)", "c)",
            "i(", "putMarker", "i)", "ELSE", "e(", "pickMarker", "e)", "m)",
        ]))
        .unwrap();
        assert_eq!(
            code.serialize(),
            "Run{IfElse(not(markersPresent)){putMarker}{pickMarker}}"
        );
    }

    #[test]
    fn bunel_bad_token_is_an_error() {
        let err = bunel_program_to_code(&toks(&["DEF", "run", "m(", "jump", "m)"])).unwrap_err();
        assert!(err.to_string().contains("jump"));
    }
}
