//! Subtask progression synthesis: trace filtering with loop re-rolling,
//! grid realization of partial codes, DP subsequence selection, grid-count
//! progressions, the combined pipeline, and the two baselines.
//!
//! A progression is an ordered list of (task, solution) pairs that ends at
//! the reference pair; its cost is the worst complexity jump between an item
//! and the closest easier item before it (`metrics::jump_objective`).

use alloc::collections::{BTreeMap, BTreeSet};
use alloc::format;
use alloc::vec;
use alloc::vec::Vec;
use core::fmt;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::dsl::{AstPath, Block, BlockKind, Code, Condition, Dialect};
use crate::interpreter::{self, ExecNode, Trace, TraceError, DEFAULT_MAX_STEPS};
use crate::metrics;
use crate::reduction::{self, ReductionError};
use crate::symexec::{self, CondScript, SymExecError};
use crate::world::{self, Grid, QualityConfig, Task};

#[derive(Debug, Clone, PartialEq)]
pub struct ProgressionItem {
    pub task: Task,
    pub code: Code,
}

/// Ordered subtask sequence ending at the reference pair.
#[derive(Debug, Clone, PartialEq)]
pub struct Progression {
    pub items: Vec<ProgressionItem>,
    pub reference: (Task, Code),
}

impl Progression {
    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SynthesisConfig {
    /// Single-grid budget K'.
    pub k_prime: u32,
    pub kappa: u32,
    pub max_steps: u32,
    pub quality: QualityConfig,
    /// Grid count above which grid ordering switches from permutation
    /// enumeration to greedy coverage ordering.
    pub greedy_threshold: u32,
}

impl Default for SynthesisConfig {
    fn default() -> Self {
        SynthesisConfig {
            k_prime: 4,
            kappa: metrics::DEFAULT_KAPPA,
            max_steps: DEFAULT_MAX_STEPS,
            quality: QualityConfig::default(),
            greedy_threshold: 6,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum SynthesisError {
    /// The operation requires a single-grid task.
    NotSingleGrid { n: u32 },
    /// The supplied solution does not solve the task.
    DoesNotSolve,
    /// Fewer realized candidates than the requested budget.
    TooFewCandidates { have: usize, need: usize },
    Trace(TraceError),
    Reduction(ReductionError),
    BadConfig(&'static str),
}

impl fmt::Display for SynthesisError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            SynthesisError::NotSingleGrid { n } => {
                write!(f, "expected a single-grid task, got {n} grids")
            }
            SynthesisError::DoesNotSolve => f.write_str("solution does not solve the task"),
            SynthesisError::TooFewCandidates { have, need } => {
                write!(f, "only {have} candidate subtasks for a budget of {need}")
            }
            SynthesisError::Trace(e) => write!(f, "trace failed: {e}"),
            SynthesisError::Reduction(e) => write!(f, "reduction failed: {e}"),
            SynthesisError::BadConfig(m) => write!(f, "bad config: {m}"),
        }
    }
}

impl core::error::Error for SynthesisError {}

impl From<TraceError> for SynthesisError {
    fn from(e: TraceError) -> Self {
        SynthesisError::Trace(e)
    }
}

impl From<ReductionError> for SynthesisError {
    fn from(e: ReductionError) -> Self {
        SynthesisError::Reduction(e)
    }
}

// ---------------------------------------------------------------------------
// Stage 2: trace filtering and code emission with loop re-rolling

/// A surviving trace element: the cut position, the grid state after it, the
/// emitted candidate code, and the condition outcomes its intended run takes.
#[derive(Debug, Clone)]
pub struct FilteredStep {
    pub tau: u32,
    pub grid_state: Grid,
    pub code: Code,
    pub script: CondScript,
}

fn action_block(kind: BlockKind) -> Block {
    match kind {
        BlockKind::Move => Block::Move,
        BlockKind::TurnLeft => Block::TurnLeft,
        BlockKind::TurnRight => Block::TurnRight,
        BlockKind::PickMarker => Block::PickMarker,
        BlockKind::PutMarker => Block::PutMarker,
        _ => unreachable!("not an action kind"),
    }
}

fn count_actions(nodes: &[ExecNode]) -> u32 {
    nodes
        .iter()
        .map(|n| match n {
            ExecNode::Action { .. } => 1,
            ExecNode::Loop { iterations, .. } => {
                iterations.iter().map(|it| count_actions(it)).sum()
            }
            ExecNode::Cond { children, .. } => count_actions(children),
        })
        .sum()
}

fn collect_branch_counts(nodes: &[ExecNode], counts: &mut BTreeMap<(AstPath, bool), u32>) {
    for n in nodes {
        match n {
            ExecNode::Action { .. } => {}
            ExecNode::Loop { iterations, .. } => {
                for it in iterations {
                    collect_branch_counts(it, counts);
                }
            }
            ExecNode::Cond {
                path,
                taken,
                children,
                ..
            } => {
                if let Some(t) = taken {
                    *counts.entry((path.clone(), *t)).or_insert(0) += 1;
                }
                collect_branch_counts(children, counts);
            }
        }
    }
}

/// Re-rolling rule for a loop whose included iterations are `iters`: roll a
/// plain body executed more than once; with conditionals inside, roll only
/// when at least one branch executed more than once.
fn should_roll(iters: &[Vec<ExecNode>]) -> bool {
    if iters.len() < 2 {
        return false;
    }
    let mut counts = BTreeMap::new();
    for it in iters {
        collect_branch_counts(it, &mut counts);
    }
    counts.is_empty() || counts.values().any(|&c| c >= 2)
}

/// Condition-outcome script of a fully executed exec forest, in evaluation
/// order. Loop outcomes are implied by their iteration counts.
fn script_of_nodes(nodes: &[ExecNode], script: &mut Vec<bool>) {
    for n in nodes {
        match n {
            ExecNode::Action { .. } => {}
            ExecNode::Cond { taken, children, .. } => {
                script.push(taken.unwrap_or(false));
                script_of_nodes(children, script);
            }
            ExecNode::Loop {
                kind, iterations, ..
            } => match kind {
                BlockKind::Repeat => {
                    for it in iterations {
                        script_of_nodes(it, script);
                    }
                }
                BlockKind::RepeatUntil => {
                    for it in iterations {
                        script.push(false);
                        script_of_nodes(it, script);
                    }
                    script.push(true);
                }
                _ => {
                    for it in iterations {
                        script.push(true);
                        script_of_nodes(it, script);
                    }
                    script.push(false);
                }
            },
        }
    }
}

/// Emits blocks (and their condition script) for the first `remaining`
/// actions of an exec forest. Conditionals in unrolled segments collapse to
/// their taken content; loops roll or unroll per `should_roll`. Rolled loops
/// keep their original body verbatim.
fn emit_seq(
    nodes: &[ExecNode],
    remaining: &mut u32,
    solution: &Code,
    blocks: &mut Vec<Block>,
    script: &mut Vec<bool>,
) {
    for n in nodes {
        if *remaining == 0 {
            return;
        }
        match n {
            ExecNode::Action { kind, .. } => {
                blocks.push(action_block(*kind));
                *remaining -= 1;
            }
            ExecNode::Cond { children, .. } => {
                emit_seq(children, remaining, solution, blocks, script);
            }
            ExecNode::Loop {
                path,
                kind,
                iterations,
                ..
            } => {
                // Included iterations: leading iterations that fit in the
                // remaining action budget. A valid cut never splits one.
                let mut m = 0usize;
                let mut rem = *remaining;
                for it in iterations {
                    let a = count_actions(it);
                    if a > rem {
                        debug_assert!(false, "cut splits a loop iteration at a valid cut");
                        break;
                    }
                    m += 1;
                    rem -= a;
                    if rem == 0 {
                        break;
                    }
                }
                let included = &iterations[..m];
                if should_roll(included) {
                    let orig = solution
                        .block_at(path)
                        .expect("executed path exists in solution");
                    let block = match (kind, orig) {
                        (BlockKind::Repeat, Block::Repeat { body, .. }) => Block::Repeat {
                            count: m as u32,
                            body: body.clone(),
                        },
                        _ => orig.clone(),
                    };
                    match kind {
                        BlockKind::Repeat => {
                            for it in included {
                                script_of_nodes(it, script);
                            }
                        }
                        BlockKind::RepeatUntil => {
                            for it in included {
                                script.push(false);
                                script_of_nodes(it, script);
                            }
                            script.push(true);
                        }
                        _ => {
                            for it in included {
                                script.push(true);
                                script_of_nodes(it, script);
                            }
                            script.push(false);
                        }
                    }
                    blocks.push(block);
                    *remaining = rem;
                } else {
                    for it in included {
                        emit_seq(it, remaining, solution, blocks, script);
                    }
                }
            }
        }
    }
}

/// Λ^filter: keeps valid-cut trace elements and converts each surviving
/// prefix into a concrete candidate code plus its condition script. The last
/// element is always the full solution.
pub fn filter_trace(t: &Trace, solution: &Code) -> Vec<FilteredStep> {
    let total = t.len() as u32;
    let mut out = Vec::new();
    for step in &t.steps {
        if !step.valid_cut {
            continue;
        }
        let (code, script) = if step.tau == total {
            let mut script = Vec::new();
            script_of_nodes(&t.exec_tree, &mut script);
            (solution.clone(), script)
        } else {
            let mut blocks = Vec::new();
            let mut script = Vec::new();
            let mut remaining = step.tau;
            emit_seq(&t.exec_tree, &mut remaining, solution, &mut blocks, &mut script);
            debug_assert_eq!(remaining, 0);
            (Code::new(solution.dialect, blocks), script)
        };
        out.push(FilteredStep {
            tau: step.tau,
            grid_state: step.grid_state.clone(),
            code,
            script: CondScript(script),
        });
    }
    out
}

// ---------------------------------------------------------------------------
// Stage 3: grid realization

/// A realized single-grid subtask candidate with the scores the selection
/// stage consumes.
#[derive(Debug, Clone)]
pub struct Candidate {
    pub tau: u32,
    pub task: Task,
    pub code: Code,
    pub complexity: u64,
    pub quality: f64,
    pub diss_to_ref: u32,
}

/// Per-synthesis element counts: trace length, post-filter survivors, and
/// realized candidates.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct StageCounts {
    pub m_all: u32,
    pub m_filter: u32,
    pub m_se: u32,
    pub dropped_unsat: u32,
}

/// Λ^SE: realizes a grid for every filtered element via symbolic execution,
/// dropping unsatisfiable ones. The final element is packaged as the
/// reference pair itself.
pub fn lift_grids(
    filtered: &[FilteredStep],
    ref_task: &Task,
    ref_code: &Code,
    config: &SynthesisConfig,
) -> (Vec<Candidate>, StageCounts) {
    let ref_grid = &ref_task.vis[0];
    let mut out = Vec::new();
    let mut dropped = 0u32;
    for (i, f) in filtered.iter().enumerate() {
        let is_last = i + 1 == filtered.len();
        let (task, code) = if is_last {
            (ref_task.clone(), ref_code.clone())
        } else {
            match symexec::realize_grid(&f.code, &f.script, ref_grid, config.max_steps) {
                Ok((grid, _)) => {
                    let mut store = f.code.blocks();
                    if store.is_empty() {
                        store.insert(BlockKind::Move);
                    }
                    let task = Task::new(
                        format!("{}-s{}", ref_task.id, f.tau),
                        vec![grid],
                        store,
                        f.code.size().max(1),
                    );
                    (task, f.code.clone())
                }
                Err(SymExecError::Unsat(_)) | Err(SymExecError::PostCheckFailed(_)) => {
                    dropped += 1;
                    continue;
                }
                Err(SymExecError::ScriptMismatch) => {
                    debug_assert!(false, "emitted script mismatches emitted code");
                    dropped += 1;
                    continue;
                }
            }
        };
        debug_assert!(interpreter::solves(&code, &task, config.max_steps));
        let quality = world::quality(&task, &code, &config.quality, config.max_steps)
            .map(|(s, _)| s)
            .unwrap_or(0.0);
        let diss_to_ref = world::task_dissimilarity(&task, ref_task).unwrap_or(u32::MAX);
        out.push(Candidate {
            tau: f.tau,
            complexity: metrics::code_complexity(&code, config.kappa),
            task,
            code,
            quality,
            diss_to_ref,
        });
    }
    let counts = StageCounts {
        m_all: 0,
        m_filter: filtered.len() as u32,
        m_se: out.len() as u32,
        dropped_unsat: dropped,
    };
    (out, counts)
}

// ---------------------------------------------------------------------------
// Stage 4: subsequence selection

fn jump(c: u64, running_max: u64) -> i64 {
    c as i64 - running_max as i64
}

/// Feasibility DP for a jump bound: `g[j]` is the largest achievable running
/// max over picks of `t` items ending at `j` with every jump ≤ `bound`.
/// A larger running max only shrinks later jumps, so maximizing it is safe.
fn feasible_pick(c: &[u64], kappa: u64, k: usize, bound: i64) -> Option<Vec<Vec<Option<u64>>>> {
    let n = c.len();
    let mut g: Vec<Vec<Option<u64>>> = vec![vec![None; n]; k + 1];
    for j in 0..n {
        if jump(c[j], kappa) <= bound {
            g[1][j] = Some(c[j].max(kappa));
        }
    }
    for t in 2..=k {
        let mut best: Option<u64> = None;
        for j in 0..n {
            if let Some(prev) = best {
                if jump(c[j], prev) <= bound {
                    g[t][j] = Some(prev.max(c[j]));
                }
            }
            best = best.max(g[t - 1][j]);
        }
    }
    if g[k][n - 1].is_some() {
        Some(g)
    } else {
        None
    }
}

/// One optimal pick reconstructed from the feasibility tables: walk back
/// choosing the predecessor with the largest running max (ties: earliest).
fn reconstruct_pick(c: &[u64], g: &[Vec<Option<u64>>], k: usize, bound: i64) -> Vec<usize> {
    let n = c.len();
    let mut picks = vec![n - 1];
    let mut cur = n - 1;
    for t in (2..=k).rev() {
        let mut best: Option<(u64, usize)> = None;
        for (j, slot) in g[t - 1].iter().enumerate().take(cur) {
            if let Some(gv) = *slot {
                if jump(c[cur], gv) <= bound {
                    let better = match best {
                        None => true,
                        Some((bv, _)) => gv > bv,
                    };
                    if better {
                        best = Some((gv, j));
                    }
                }
            }
        }
        cur = best.expect("feasible table admits a predecessor").1;
        picks.push(cur);
    }
    picks.reverse();
    picks
}

const SOLUTION_CAP: usize = 20_000;
const NODE_CAP: u64 = 2_000_000;

/// All optimal picks (up to caps), found by DFS over indices with the jump
/// bound as the pruning rule. Deterministic: indices explored ascending.
fn enumerate_picks(c: &[u64], kappa: u64, k: usize, bound: i64) -> Vec<Vec<usize>> {
    let mut sols = Vec::new();
    let mut picked: Vec<usize> = Vec::new();
    let mut nodes = 0u64;
    #[allow(clippy::too_many_arguments)]
    fn dfs(
        c: &[u64],
        k: usize,
        bound: i64,
        start: usize,
        running_max: u64,
        picked: &mut Vec<usize>,
        sols: &mut Vec<Vec<usize>>,
        nodes: &mut u64,
    ) {
        if sols.len() >= SOLUTION_CAP || *nodes >= NODE_CAP {
            return;
        }
        *nodes += 1;
        let n = c.len();
        let slots_left = k - picked.len();
        // the last slot is pinned to the final candidate; earlier slots must
        // leave room for the rest
        let range = if slots_left == 1 {
            (n - 1).max(start)..n
        } else {
            start..(n - slots_left + 1)
        };
        for j in range {
            if jump(c[j], running_max) > bound {
                continue;
            }
            picked.push(j);
            if slots_left == 1 {
                sols.push(picked.clone());
            } else {
                dfs(
                    c,
                    k,
                    bound,
                    j + 1,
                    running_max.max(c[j]),
                    picked,
                    sols,
                    nodes,
                );
            }
            picked.pop();
        }
    }
    // the running max starts at the baseline kappa
    dfs(c, k, bound, 0, kappa, &mut picked, &mut sols, &mut nodes);
    sols
}

/// Stage 4: the order-preserving K'-subsequence of candidates ending at the
/// reference, minimizing the worst complexity jump. Ties break by higher
/// summed quality, then lower summed dissimilarity to the reference, then
/// higher normalized diversity, then candidate index order.
pub fn select_subsequence(
    candidates: &[Candidate],
    config: &SynthesisConfig,
) -> Result<Progression, SynthesisError> {
    let k = config.k_prime as usize;
    if k == 0 {
        return Err(SynthesisError::BadConfig("K' must be at least 1"));
    }
    let n = candidates.len();
    if n < k {
        return Err(SynthesisError::TooFewCandidates { have: n, need: k });
    }
    let kappa = config.kappa as u64;
    let c: Vec<u64> = candidates.iter().map(|x| x.complexity).collect();

    // minimal feasible bound over the finite set of possible jump values
    let mut values: Vec<i64> = Vec::new();
    for i in 0..n {
        values.push(jump(c[i], kappa));
        for j in 0..i {
            values.push(jump(c[i], c[j].max(kappa)));
        }
    }
    values.sort_unstable();
    values.dedup();
    let mut best_bound = *values.last().expect("non-empty candidate set");
    let mut best_tables = None;
    let (mut lo, mut hi) = (0usize, values.len() - 1);
    while lo <= hi {
        let mid = (lo + hi) / 2;
        match feasible_pick(&c, kappa, k, values[mid]) {
            Some(g) => {
                best_bound = values[mid];
                best_tables = Some(g);
                if mid == 0 {
                    break;
                }
                hi = mid - 1;
            }
            None => lo = mid + 1,
        }
    }
    let tables = best_tables.expect("largest jump value is always feasible");

    let mut picks = enumerate_picks(&c, kappa, k, best_bound);
    if picks.is_empty() {
        picks.push(reconstruct_pick(&c, &tables, k, best_bound));
    }

    let build = |pick: &[usize]| -> Progression {
        let items = pick
            .iter()
            .map(|&i| ProgressionItem {
                task: candidates[i].task.clone(),
                code: candidates[i].code.clone(),
            })
            .collect();
        let last = &candidates[n - 1];
        Progression {
            items,
            reference: (last.task.clone(), last.code.clone()),
        }
    };

    // lexicographic minimization: (quality desc, diss asc, diversity desc,
    // index order asc)
    let mut best: Option<((f64, f64, f64), Vec<usize>)> = None;
    for pick in picks {
        let q: f64 = pick.iter().map(|&i| candidates[i].quality).sum();
        let d: u64 = pick.iter().map(|&i| candidates[i].diss_to_ref as u64).sum();
        let div = metrics::normalized_diversity(&build(&pick));
        let key = (-q, d as f64, -div);
        let better = match &best {
            None => true,
            Some((bkey, bpick)) => match key.partial_cmp(bkey) {
                Some(core::cmp::Ordering::Less) => true,
                Some(core::cmp::Ordering::Equal) => pick < *bpick,
                _ => false,
            },
        };
        if better {
            best = Some((key, pick));
        }
    }
    let (_, pick) = best.expect("at least one optimal pick");
    let prog = build(&pick);
    debug_assert_eq!(metrics::progression_complexity(&prog, config.kappa), best_bound);
    Ok(prog)
}

// ---------------------------------------------------------------------------
// Pipelines

/// Single-grid synthesis: trace → filter → realize → select K'.
pub fn progressyn_single(
    task: &Task,
    solution: &Code,
    config: &SynthesisConfig,
) -> Result<Progression, SynthesisError> {
    if task.n() != 1 {
        return Err(SynthesisError::NotSingleGrid { n: task.n() });
    }
    if !interpreter::solves(solution, task, config.max_steps) {
        return Err(SynthesisError::DoesNotSolve);
    }
    let t = interpreter::trace(solution, &task.vis[0], config.max_steps)?;
    let filtered = filter_trace(&t, solution);
    let (candidates, _) = lift_grids(&filtered, task, solution, config);
    select_subsequence(&candidates, config)
}

/// Like [`progressyn_single`] but also reports per-stage element counts.
pub fn progressyn_single_with_counts(
    task: &Task,
    solution: &Code,
    config: &SynthesisConfig,
) -> Result<(Progression, StageCounts), SynthesisError> {
    if task.n() != 1 {
        return Err(SynthesisError::NotSingleGrid { n: task.n() });
    }
    if !interpreter::solves(solution, task, config.max_steps) {
        return Err(SynthesisError::DoesNotSolve);
    }
    let t = interpreter::trace(solution, &task.vis[0], config.max_steps)?;
    let m_all = t.len() as u32;
    let filtered = filter_trace(&t, solution);
    let (candidates, mut counts) = lift_grids(&filtered, task, solution, config);
    counts.m_all = m_all;
    let prog = select_subsequence(&candidates, config)?;
    Ok((prog, counts))
}

fn permutations(n: usize) -> Vec<Vec<usize>> {
    fn rec(prefix: &mut Vec<usize>, rest: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
        if rest.is_empty() {
            out.push(prefix.clone());
            return;
        }
        for i in 0..rest.len() {
            let x = rest.remove(i);
            prefix.push(x);
            rec(prefix, rest, out);
            prefix.pop();
            rest.insert(i, x);
        }
    }
    let mut out = Vec::new();
    rec(&mut Vec::new(), &mut (0..n).collect(), &mut out);
    out
}

/// Builds the grid-introduction progression for one grid ordering: the k-th
/// subtask spans the first k grids with the solution reduced to them; the
/// last item is the reference pair verbatim.
fn grids_progression_for_order(
    order: &[usize],
    task: &Task,
    solution: &Code,
    config: &SynthesisConfig,
) -> Result<Progression, ReductionError> {
    let n = order.len();
    let mut items = Vec::with_capacity(n);
    for k in 1..n {
        let (sub, code) = reduction::subtask_from_grids(&order[..k], task, solution, config.max_steps)?;
        items.push(ProgressionItem { task: sub, code });
    }
    items.push(ProgressionItem {
        task: task.clone(),
        code: solution.clone(),
    });
    Ok(Progression {
        items,
        reference: (task.clone(), solution.clone()),
    })
}

fn tie_tuple(p: &Progression, config: &SynthesisConfig) -> (f64, f64, f64) {
    let mut q = 0.0;
    let mut d = 0u64;
    for it in &p.items {
        q += world::quality(&it.task, &it.code, &config.quality, config.max_steps)
            .map(|(s, _)| s)
            .unwrap_or(0.0);
        d += world::task_dissimilarity(&it.task, &p.reference.0).unwrap_or(u32::MAX) as u64;
    }
    let div = metrics::normalized_diversity(p);
    // lexicographic minimization target
    (-q, d as f64, -div)
}

/// Grid-count progression: introduce the reference task's grids one by one,
/// ordering them by permutation enumeration (small n) or greedily by
/// marginal code coverage (large n).
pub fn progressyn_grids(
    task: &Task,
    solution: &Code,
    config: &SynthesisConfig,
) -> Result<Progression, SynthesisError> {
    if !interpreter::solves(solution, task, config.max_steps) {
        return Err(SynthesisError::DoesNotSolve);
    }
    let n = task.n() as usize;
    if n == 1 {
        return Ok(Progression {
            items: vec![ProgressionItem {
                task: task.clone(),
                code: solution.clone(),
            }],
            reference: (task.clone(), solution.clone()),
        });
    }
    if n <= config.greedy_threshold as usize {
        let mut best: Option<(i64, (f64, f64, f64), Progression)> = None;
        let mut last_err = None;
        for order in permutations(n) {
            let p = match grids_progression_for_order(&order, task, solution, config) {
                Ok(p) => p,
                Err(e) => {
                    last_err = Some(e);
                    continue;
                }
            };
            let obj = metrics::progression_complexity(&p, config.kappa);
            let tie = tie_tuple(&p, config);
            let better = match &best {
                None => true,
                Some((bo, bt, _)) => (obj, tie) < (*bo, *bt),
            };
            if better {
                best = Some((obj, tie, p));
            }
        }
        match best {
            Some((_, _, p)) => Ok(p),
            None => Err(SynthesisError::Reduction(
                last_err.expect("permutations of n >= 2 are non-empty"),
            )),
        }
    } else {
        // greedy: start with the grid covering the most of the solution,
        // then append whichever grid adds the most uncovered nodes
        let mut per_grid: Vec<BTreeSet<AstPath>> = Vec::with_capacity(n);
        for g in &task.vis {
            let (nodes, _) = interpreter::coverage_on_grid(solution, g, config.max_steps)
                .map_err(|_| SynthesisError::DoesNotSolve)?;
            per_grid.push(nodes);
        }
        let mut order: Vec<usize> = Vec::with_capacity(n);
        let mut covered: BTreeSet<AstPath> = BTreeSet::new();
        let mut remaining: Vec<usize> = (0..n).collect();
        while !remaining.is_empty() {
            let (pos, &gi) = remaining
                .iter()
                .enumerate()
                .max_by_key(|(_, &gi)| {
                    (
                        per_grid[gi].difference(&covered).count(),
                        usize::MAX - gi, // ties: lowest grid index
                    )
                })
                .expect("non-empty remaining set");
            covered.extend(per_grid[gi].iter().cloned());
            order.push(gi);
            remaining.remove(pos);
        }
        grids_progression_for_order(&order, task, solution, config).map_err(SynthesisError::from)
    }
}

/// Combined synthesis: single-grid precursors of the first grid-stage
/// subtask, then the grid-introduction tail. Output length is K' + n − 1.
pub fn progressyn(
    task: &Task,
    solution: &Code,
    config: &SynthesisConfig,
) -> Result<Progression, SynthesisError> {
    if task.n() == 1 {
        return progressyn_single(task, solution, config);
    }
    let grids = progressyn_grids(task, solution, config)?;
    let first = grids.items.first().expect("grids progression is non-empty");
    let single = progressyn_single(&first.task, &first.code, config)?;
    let mut items = single.items;
    // the junction subtask appears in both halves; keep one copy
    items.extend(grids.items.into_iter().skip(1));
    Ok(Progression {
        items,
        reference: (task.clone(), solution.clone()),
    })
}

// ---------------------------------------------------------------------------
// Baselines

/// Same-TaskCode: K copies of the reference pair.
pub fn baseline_same_taskcode(task: &Task, solution: &Code, k: u32) -> Progression {
    let item = ProgressionItem {
        task: task.clone(),
        code: solution.clone(),
    };
    Progression {
        items: vec![item; k.max(1) as usize],
        reference: (task.clone(), solution.clone()),
    }
}

/// Cells the solution's run constrains up to trace position `tau` on `grid`:
/// the trajectory, every condition's queried cell, the start, and the goal.
fn constrained_cells(t: &Trace, grid: &Grid, tau: u32) -> BTreeSet<(u32, u32)> {
    let mut cells = BTreeSet::new();
    cells.insert(grid.start.cell());
    if let Some(g) = grid.goal {
        cells.insert(g);
    }
    for step in t.steps.iter().take(tau as usize) {
        cells.insert(step.grid_state.start.cell());
    }
    let mut add_target = |cond: &Condition, pose: &crate::world::Pose| {
        let mut c = cond;
        while let Condition::Not(inner) = c {
            c = inner;
        }
        let target = match c {
            Condition::Goal | Condition::MarkersPresent | Condition::NoMarkersPresent => {
                Some((pose.row as i32, pose.col as i32))
            }
            Condition::PathAhead | Condition::FrontIsClear => Some(pose.ahead()),
            Condition::PathLeft | Condition::LeftIsClear => Some(pose.toward(pose.dir.left())),
            Condition::PathRight | Condition::RightIsClear => Some(pose.toward(pose.dir.right())),
            Condition::Not(_) => None,
        };
        if let Some((r, c)) = target {
            if grid.in_bounds(r, c) {
                cells.insert((r as u32, c as u32));
            }
        }
    };
    for ev in t.conditions.iter().filter(|e| e.after_step <= tau) {
        add_target(&ev.cond, &ev.pose);
    }
    cells
}

/// Same-Code: K items sharing the reference solution, with grids perturbed
/// on cells unconstrained at uniformly spaced trace points. Every perturbed
/// grid is verified to still be solved; after a bounded number of rejected
/// draws the unmodified grid is used. The last item is the reference.
pub fn baseline_same_code(
    task: &Task,
    solution: &Code,
    k: u32,
    seed: u64,
    config: &SynthesisConfig,
) -> Result<Progression, SynthesisError> {
    if !interpreter::solves(solution, task, config.max_steps) {
        return Err(SynthesisError::DoesNotSolve);
    }
    let grid = &task.vis[0];
    let t = interpreter::trace(solution, grid, config.max_steps)?;
    let total = t.len() as u32;
    let k = k.max(1);
    let mut items = Vec::with_capacity(k as usize);
    for j in 1..=k {
        if j == k {
            items.push(ProgressionItem {
                task: task.clone(),
                code: solution.clone(),
            });
            break;
        }
        let tau = (j * total) / k;
        let constrained = constrained_cells(&t, grid, tau);
        let mut free_cells: Vec<(u32, u32)> = Vec::new();
        for r in 0..grid.height {
            for c in 0..grid.width {
                if !constrained.contains(&(r, c)) {
                    free_cells.push((r, c));
                }
            }
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_add(j as u64));
        let mut chosen = grid.clone();
        if !free_cells.is_empty() {
            'retry: for _ in 0..20 {
                let mut g = grid.clone();
                let muts = rng.gen_range(1..=3usize).min(free_cells.len());
                for _ in 0..muts {
                    let (r, c) = free_cells[rng.gen_range(0..free_cells.len())];
                    if grid.dialect == Dialect::Karel && rng.gen_bool(0.5) {
                        let v = if g.markers_pre_at(r, c) > 0 { 0 } else { 1 };
                        g.set_markers_pre(r, c, v);
                        g.set_markers_post(r, c, v);
                    } else {
                        let w = g.is_wall(r, c);
                        g.set_wall(r, c, !w);
                    }
                }
                if g.validate().is_err() {
                    continue 'retry;
                }
                match interpreter::execute(solution, &g, config.max_steps) {
                    Ok(r) if r.outcome == interpreter::Outcome::Solved => {
                        chosen = g;
                        break 'retry;
                    }
                    _ => {}
                }
            }
        }
        items.push(ProgressionItem {
            task: Task::new(
                format!("{}-sc{}", task.id, j),
                vec![chosen],
                task.store.clone(),
                task.size_budget,
            ),
            code: solution.clone(),
        });
    }
    Ok(Progression {
        items,
        reference: (task.clone(), solution.clone()),
    })
}

/// Brute-force Eq. 1 optimum over all order-preserving K-subsequences ending
/// at the last candidate; test oracle for [`select_subsequence`].
pub fn brute_force_objective(complexities: &[u64], k: usize, kappa: u32) -> Option<i64> {
    let n = complexities.len();
    if n < k || k == 0 {
        return None;
    }
    fn rec(
        c: &[u64],
        kappa: u32,
        k: usize,
        start: usize,
        picked: &mut Vec<u64>,
        best: &mut Option<i64>,
    ) {
        let n = c.len();
        let slots = k - picked.len();
        for j in start..=n - slots {
            picked.push(c[j]);
            if picked.len() == k {
                if j == n - 1 {
                    let obj = metrics::jump_objective(picked, kappa);
                    *best = Some(best.map_or(obj, |b| b.min(obj)));
                }
            } else {
                rec(c, kappa, k, j + 1, picked, best);
            }
            picked.pop();
        }
    }
    let mut best = None;
    rec(complexities, kappa, k, 0, &mut Vec::new(), &mut best);
    best
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::world::{Dir, Pose};

    fn cfg(k_prime: u32) -> SynthesisConfig {
        SynthesisConfig {
            k_prime,
            max_steps: 200,
            ..SynthesisConfig::default()
        }
    }

    fn corridor_task() -> (Task, Code) {
        let g = Grid::maze_from_rows(&["....G", "#####"], Pose::new(0, 0, Dir::East)).unwrap();
        let code = Code::parse("Run{Repeat(4){move}}").unwrap();
        let store = code.blocks();
        (Task::new("corridor", vec![g], store, code.size()), code)
    }

    #[test]
    fn filter_trace_rerolls_repeat() {
        let (task, code) = corridor_task();
        let t = interpreter::trace(&code, &task.vis[0], 100).unwrap();
        let filtered = filter_trace(&t, &code);
        let texts: Vec<String> = filtered.iter().map(|f| f.code.serialize()).collect();
        assert_eq!(
            texts,
            vec![
                "Run{move}",
                "Run{Repeat(2){move}}",
                "Run{Repeat(3){move}}",
                "Run{Repeat(4){move}}",
            ]
        );
        assert!(filtered.iter().all(|f| f.script.0.is_empty()));
    }

    #[test]
    fn filter_trace_drops_mid_body_cuts() {
        let g = Grid::maze_from_rows(&["....G", "#####"], Pose::new(0, 0, Dir::East)).unwrap();
        let code = Code::parse("Run{RepeatUntil(goal){move move}}").unwrap();
        let t = interpreter::trace(&code, &g, 100).unwrap();
        let filtered = filter_trace(&t, &code);
        assert_eq!(filtered.iter().map(|f| f.tau).collect::<Vec<_>>(), vec![2, 4]);
        // one iteration: unrolled without the loop, no conditions
        assert_eq!(filtered[0].code.serialize(), "Run{move move}");
        assert!(filtered[0].script.0.is_empty());
        // full solution kept verbatim with its real outcome script
        assert_eq!(filtered[1].code, code);
        assert_eq!(filtered[1].script.0, vec![false, false, true]);
    }

    #[test]
    fn filter_trace_unrolls_single_branch_conditionals() {
        // iteration 1 picks the marker, iteration 2 skips the If
        let g = Grid::karel_from_rows(
            &["1.2.", "...."],
            &["0.2.", "...."],
            Pose::new(0, 0, Dir::East),
            Pose::new(0, 2, Dir::East),
        )
        .unwrap();
        let code = Code::parse_with_dialect(
            "Run{Repeat(2){If(markersPresent){pickMarker} move}}",
            Dialect::Karel,
        )
        .unwrap();
        let t = interpreter::trace(&code, &g, 100).unwrap();
        let filtered = filter_trace(&t, &code);
        // cut after iteration 1 (tau=2): branch taken once -> unrolled
        let first_full_iter = filtered
            .iter()
            .find(|f| f.tau == 2)
            .expect("iteration boundary is a valid cut");
        assert_eq!(first_full_iter.code.serialize(), "Run{pickMarker move}");
        assert!(first_full_iter.script.0.is_empty());
        // full trace: the pick branch ran once, the skip branch once -> no
        // branch repeats, but the last element keeps the solution verbatim
        assert_eq!(filtered.last().unwrap().code, code);
        assert_eq!(filtered.last().unwrap().script.0, vec![true, false]);
    }

    #[test]
    fn emitted_prefix_replays_on_realized_grid() {
        let g = Grid::maze_from_rows(&["......", "#####G"], Pose::new(0, 0, Dir::East)).unwrap();
        let code = Code::parse("Run{Repeat(5){move} turnRight move}").unwrap();
        let t = interpreter::trace(&code, &g, 100).unwrap();
        let filtered = filter_trace(&t, &code);
        let config = cfg(2);
        for f in &filtered {
            let (realized, _) =
                symexec::realize_grid(&f.code, &f.script, &g, config.max_steps).unwrap();
            let run = interpreter::execute(&f.code, &realized, config.max_steps).unwrap();
            assert_eq!(run.outcome, interpreter::Outcome::Solved);
            assert_eq!(run.actions, f.tau);
        }
    }

    #[test]
    fn single_grid_pipeline_selects_low_jump() {
        let (task, code) = corridor_task();
        let p = progressyn_single(&task, &code, &cfg(2)).unwrap();
        assert_eq!(p.items.len(), 2);
        assert_eq!(p.items[1].task, task);
        assert_eq!(p.items[1].code, code);
        // candidates have complexities [1001, 2002, 2002, 2002]; the best
        // 2-subsequence ending at the reference is [1001, 2002]
        assert_eq!(metrics::progression_complexity(&p, 1000), 1001);
        assert_eq!(p.items[0].code.serialize(), "Run{move}");
    }

    #[test]
    fn k_prime_one_returns_reference_only() {
        let (task, code) = corridor_task();
        let p = progressyn_single(&task, &code, &cfg(1)).unwrap();
        assert_eq!(p.items.len(), 1);
        assert_eq!(p.items[0].task, task);
        assert_eq!(
            metrics::progression_complexity(&p, 1000),
            metrics::code_complexity(&code, 1000) as i64 - 1000
        );
    }

    #[test]
    fn select_matches_brute_force_on_pipeline_candidates() {
        let g = Grid::maze_from_rows(&["........G", "#########"], Pose::new(0, 0, Dir::East))
            .unwrap();
        let code = Code::parse("Run{Repeat(4){move move}}").unwrap();
        let store = code.blocks();
        let task = Task::new("long", vec![g], store, code.size());
        let config = cfg(3);
        let t = interpreter::trace(&code, &task.vis[0], 200).unwrap();
        let filtered = filter_trace(&t, &code);
        let (cands, _) = lift_grids(&filtered, &task, &code, &config);
        let cs: Vec<u64> = cands.iter().map(|c| c.complexity).collect();
        let p = select_subsequence(&cands, &config).unwrap();
        let expected = brute_force_objective(&cs, 3, config.kappa).unwrap();
        assert_eq!(metrics::progression_complexity(&p, config.kappa), expected);
    }

    fn branch_task() -> (Task, Code) {
        // grid 0 exercises the pick branch, grid 1 the put branch
        let g0 = Grid::karel_from_rows(
            &[".1.", "..."],
            &[".0.", "..."],
            Pose::new(0, 0, Dir::East),
            Pose::new(0, 2, Dir::East),
        )
        .unwrap();
        let g1 = Grid::karel_from_rows(
            &["...", "..."],
            &[".1.", "..."],
            Pose::new(0, 0, Dir::East),
            Pose::new(0, 2, Dir::East),
        )
        .unwrap();
        let code = Code::parse_with_dialect(
            "Run{move IfElse(markersPresent){pickMarker}{putMarker} move}",
            Dialect::Karel,
        )
        .unwrap();
        let store = code.blocks();
        let task = Task::new("branchy", vec![g0, g1], store, code.size());
        (task, code)
    }

    #[test]
    fn grids_progression_grows_and_ends_at_reference() {
        let (task, code) = branch_task();
        let p = progressyn_grids(&task, &code, &cfg(2)).unwrap();
        assert_eq!(p.items.len(), 2);
        assert_eq!(p.items[0].task.n(), 1);
        assert_eq!(p.items[1].task, task);
        assert_eq!(p.items[1].code, code);
        assert!(p.items[0].task.store.is_subset(&task.store));
        assert!(p.items[0].code.size() <= code.size());
    }

    #[test]
    fn combined_length_is_k_prime_plus_n_minus_one() {
        let (task, code) = branch_task();
        let p = progressyn(&task, &code, &cfg(2)).unwrap();
        assert_eq!(p.items.len(), 2 + 2 - 1);
        assert_eq!(p.items.last().unwrap().task, task);
        // grid counts never shrink across the progression
        let ns: Vec<u32> = p.items.iter().map(|it| it.task.n()).collect();
        assert!(ns.windows(2).all(|w| w[0] <= w[1]));
        for it in &p.items {
            assert!(interpreter::solves(&it.code, &it.task, 200));
        }
    }

    #[test]
    fn same_taskcode_is_k_copies() {
        let (task, code) = corridor_task();
        let p = baseline_same_taskcode(&task, &code, 3);
        assert_eq!(p.items.len(), 3);
        assert!(p.items.iter().all(|it| it.task == task && it.code == code));
        assert_eq!(metrics::normalized_diversity(&p), 0.0);
        assert_eq!(
            metrics::progression_complexity(&p, 1000),
            metrics::code_complexity(&code, 1000) as i64 - 1000
        );
    }

    #[test]
    fn same_code_items_all_solve_with_reference_code() {
        let g = Grid::maze_from_rows(
            &["....G", ".....", "....."],
            Pose::new(0, 0, Dir::East),
        )
        .unwrap();
        let code = Code::parse("Run{Repeat(4){move}}").unwrap();
        let store = code.blocks();
        let task = Task::new("open", vec![g], store, code.size());
        let p = baseline_same_code(&task, &code, 4, 7, &cfg(4)).unwrap();
        assert_eq!(p.items.len(), 4);
        assert_eq!(p.items.last().unwrap().task, task);
        for it in &p.items {
            assert_eq!(it.code, code);
            assert!(interpreter::solves(&code, &it.task, 200));
        }
        // determinism
        let q = baseline_same_code(&task, &code, 4, 7, &cfg(4)).unwrap();
        assert_eq!(p, q);
        // some non-final grid actually differs from the reference
        assert!(p.items[..3].iter().any(|it| it.task.vis[0] != task.vis[0]));
    }

    #[test]
    fn too_few_candidates_is_an_error() {
        let g = Grid::maze_from_rows(&[".G", ".."], Pose::new(0, 0, Dir::East)).unwrap();
        let code = Code::parse("Run{move}").unwrap();
        let task = Task::new("tiny", vec![g], code.blocks(), 1);
        let err = progressyn_single(&task, &code, &cfg(3)).unwrap_err();
        assert_eq!(err, SynthesisError::TooFewCandidates { have: 1, need: 3 });
    }
}
