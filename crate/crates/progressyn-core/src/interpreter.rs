//! Deterministic execution of codes on grids: outcomes, solution checking,
//! coverage, and instrumented traces for the progression pipeline.
//!
//! A trace records one element per executed action (the command prefix, the
//! grid state after it, and every condition evaluation so far), plus the
//! dynamic execution tree and, per element, whether cutting the program there
//! lands on an iteration/body boundary of every enclosing construct.

use alloc::collections::BTreeSet;
use alloc::vec::Vec;
use core::fmt;

use crate::dsl::{AstPath, Block, BlockKind, Code, Condition, Dialect, PathStep};
use crate::world::{Grid, Pose, Task, MAX_MARKERS};

pub const DEFAULT_MAX_STEPS: u32 = 1000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum CrashReason {
    HitWall,
    NoMarkerToPick,
    MarkerOverflow,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Outcome {
    Solved,
    NotSolved,
    Crashed(CrashReason),
    Timeout,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ExecError {
    DialectMismatch,
}

impl fmt::Display for ExecError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ExecError::DialectMismatch => f.write_str("code and grid dialects differ"),
        }
    }
}

impl core::error::Error for ExecError {}

/// Result of running a code on a grid, with the execution statistics the
/// quality score consumes.
#[derive(Debug, Clone)]
pub struct RunResult {
    pub outcome: Outcome,
    pub final_grid: Grid,
    pub final_pose: Pose,
    pub actions: u32,
    pub moves: u32,
    pub turns: u32,
    pub visited_cells: BTreeSet<(u32, u32)>,
}

/// One condition evaluation: which condition, where in the AST, at what pose,
/// and its outcome. `after_step` is the number of actions executed before it.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CondEval {
    pub after_step: u32,
    pub cond: Condition,
    pub path: AstPath,
    pub pose: Pose,
    pub outcome: bool,
}

/// Per-action trace element. `grid_state` is the initial grid with the
/// avatar pose and (karel) marker layer advanced to just after step `tau`.
#[derive(Debug, Clone)]
pub struct TraceStep {
    pub tau: u32,
    pub grid_state: Grid,
    /// Cutting the program after this action leaves no enclosing loop or
    /// conditional body mid-iteration.
    pub valid_cut: bool,
    /// Innermost construct body left unfinished by a cut here.
    pub terminated_inside: Option<AstPath>,
}

/// Dynamic execution structure of a run, mirroring the AST but expanded per
/// loop iteration and resolved per branch.
#[derive(Debug, Clone)]
pub enum ExecNode {
    Action {
        step: u32,
        kind: BlockKind,
        path: AstPath,
    },
    Loop {
        path: AstPath,
        kind: BlockKind,
        cond: Option<Condition>,
        iterations: Vec<Vec<ExecNode>>,
    },
    Cond {
        path: AstPath,
        kind: BlockKind,
        cond: Condition,
        /// `Some(true)`: body/then branch ran; `Some(false)` for `If` means
        /// skipped, for `IfElse` means the else branch ran.
        taken: Option<bool>,
        children: Vec<ExecNode>,
    },
}

#[derive(Debug, Clone)]
pub struct Trace {
    pub initial: Grid,
    /// Executed actions in order; the command prefix of step tau is
    /// `actions[..tau]`.
    pub actions: Vec<(BlockKind, AstPath)>,
    pub conditions: Vec<CondEval>,
    pub steps: Vec<TraceStep>,
    pub exec_tree: Vec<ExecNode>,
}

impl Trace {
    pub fn len(&self) -> usize {
        self.steps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.steps.is_empty()
    }

    pub fn prefix(&self, tau: u32) -> &[(BlockKind, AstPath)] {
        &self.actions[..tau as usize]
    }

    pub fn conditions_up_to(&self, tau: u32) -> impl Iterator<Item = &CondEval> {
        self.conditions.iter().filter(move |c| c.after_step < tau)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum TraceError {
    DialectMismatch,
    NotSolved(Outcome),
}

impl fmt::Display for TraceError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            TraceError::DialectMismatch => f.write_str("code and grid dialects differ"),
            TraceError::NotSolved(o) => write!(f, "reference solution does not solve grid: {o:?}"),
        }
    }
}

impl core::error::Error for TraceError {}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum CoverageError {
    DialectMismatch,
    NotSolving { grid: usize, outcome: Outcome },
}

impl fmt::Display for CoverageError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CoverageError::DialectMismatch => f.write_str("code and grid dialects differ"),
            CoverageError::NotSolving { grid, outcome } => {
                write!(f, "code does not solve grid {grid}: {outcome:?}")
            }
        }
    }
}

impl core::error::Error for CoverageError {}

enum Stop {
    Crash(CrashReason),
    Timeout,
}

type FrameId = u32;

/// Instrumentation hooks. The plain runner uses the no-op impl.
trait Recorder {
    fn action(&mut self, step: u32, kind: BlockKind, path: &AstPath, pose: Pose, markers: &[u8]);
    fn cond_eval(&mut self, ev: CondEval);
    fn loop_enter(&mut self, path: &AstPath, kind: BlockKind, cond: Option<&Condition>) -> FrameId;
    fn iteration_end(&mut self, frame: FrameId);
    fn loop_exit(&mut self, frame: FrameId);
    fn cond_enter(&mut self, path: &AstPath, kind: BlockKind, cond: &Condition, taken: bool) -> FrameId;
    fn cond_exit(&mut self, frame: FrameId);
    fn if_skipped(&mut self, path: &AstPath, cond: &Condition);
}

struct NoRecorder;

impl Recorder for NoRecorder {
    fn action(&mut self, _: u32, _: BlockKind, _: &AstPath, _: Pose, _: &[u8]) {}
    fn cond_eval(&mut self, _: CondEval) {}
    fn loop_enter(&mut self, _: &AstPath, _: BlockKind, _: Option<&Condition>) -> FrameId {
        0
    }
    fn iteration_end(&mut self, _: FrameId) {}
    fn loop_exit(&mut self, _: FrameId) {}
    fn cond_enter(&mut self, _: &AstPath, _: BlockKind, _: &Condition, _: bool) -> FrameId {
        0
    }
    fn cond_exit(&mut self, _: FrameId) {}
    fn if_skipped(&mut self, _: &AstPath, _: &Condition) {}
}

struct Vm<'a, R: Recorder> {
    grid: &'a Grid,
    pose: Pose,
    markers: Vec<u8>,
    actions_executed: u32,
    max_steps: u32,
    ticks: u64,
    max_ticks: u64,
    moves: u32,
    turns: u32,
    visited: BTreeSet<(u32, u32)>,
    executed: BTreeSet<AstPath>,
    rec: &'a mut R,
}

#[derive(Clone, Copy)]
enum BodyKind {
    Plain,
    Then,
    Else,
}

impl<'a, R: Recorder> Vm<'a, R> {
    fn new(grid: &'a Grid, max_steps: u32, rec: &'a mut R) -> Self {
        let mut visited = BTreeSet::new();
        visited.insert(grid.start.cell());
        Vm {
            grid,
            pose: grid.start,
            markers: grid.markers_pre.clone(),
            actions_executed: 0,
            max_steps,
            ticks: 0,
            // Guards loops whose bodies execute no actions; generous enough
            // never to fire for action-bounded programs.
            max_ticks: (max_steps as u64 + 16) * 128,
            moves: 0,
            turns: 0,
            visited,
            executed: BTreeSet::new(),
            rec,
        }
    }

    fn tick(&mut self) -> Result<(), Stop> {
        self.ticks += 1;
        if self.ticks > self.max_ticks {
            Err(Stop::Timeout)
        } else {
            Ok(())
        }
    }

    fn eval_raw(&self, cond: &Condition) -> bool {
        match cond {
            Condition::Goal => Some(self.pose.cell()) == self.grid.goal,
            Condition::PathAhead | Condition::FrontIsClear => {
                let (r, c) = self.pose.ahead();
                self.grid.is_clear(r, c)
            }
            Condition::PathLeft | Condition::LeftIsClear => {
                let (r, c) = self.pose.toward(self.pose.dir.left());
                self.grid.is_clear(r, c)
            }
            Condition::PathRight | Condition::RightIsClear => {
                let (r, c) = self.pose.toward(self.pose.dir.right());
                self.grid.is_clear(r, c)
            }
            Condition::MarkersPresent => self.current_markers() > 0,
            Condition::NoMarkersPresent => self.current_markers() == 0,
            Condition::Not(inner) => !self.eval_raw(inner),
        }
    }

    fn current_markers(&self) -> u8 {
        self.markers[(self.pose.row * self.grid.width + self.pose.col) as usize]
    }

    fn eval_cond(&mut self, cond: &Condition, path: &AstPath) -> Result<bool, Stop> {
        self.tick()?;
        let outcome = self.eval_raw(cond);
        self.rec.cond_eval(CondEval {
            after_step: self.actions_executed,
            cond: cond.clone(),
            path: path.clone(),
            pose: self.pose,
            outcome,
        });
        Ok(outcome)
    }

    fn do_action(&mut self, kind: BlockKind, path: &AstPath) -> Result<(), Stop> {
        if self.actions_executed >= self.max_steps {
            return Err(Stop::Timeout);
        }
        match kind {
            BlockKind::Move => {
                let (r, c) = self.pose.ahead();
                if !self.grid.is_clear(r, c) {
                    return Err(Stop::Crash(CrashReason::HitWall));
                }
                self.pose.row = r as u32;
                self.pose.col = c as u32;
                self.visited.insert(self.pose.cell());
                self.moves += 1;
            }
            BlockKind::TurnLeft => {
                self.pose.dir = self.pose.dir.left();
                self.turns += 1;
            }
            BlockKind::TurnRight => {
                self.pose.dir = self.pose.dir.right();
                self.turns += 1;
            }
            BlockKind::PickMarker => {
                let i = (self.pose.row * self.grid.width + self.pose.col) as usize;
                if self.markers[i] == 0 {
                    return Err(Stop::Crash(CrashReason::NoMarkerToPick));
                }
                self.markers[i] -= 1;
            }
            BlockKind::PutMarker => {
                let i = (self.pose.row * self.grid.width + self.pose.col) as usize;
                if self.markers[i] >= MAX_MARKERS {
                    return Err(Stop::Crash(CrashReason::MarkerOverflow));
                }
                self.markers[i] += 1;
            }
            _ => unreachable!("not an action"),
        }
        self.actions_executed += 1;
        self.rec
            .action(self.actions_executed, kind, path, self.pose, &self.markers);
        Ok(())
    }

    fn exec_body(&mut self, blocks: &[Block], prefix: &AstPath, kind: BodyKind) -> Result<(), Stop> {
        for (i, b) in blocks.iter().enumerate() {
            let step = match kind {
                BodyKind::Plain => PathStep::Body(i as u32),
                BodyKind::Then => PathStep::Then(i as u32),
                BodyKind::Else => PathStep::Else(i as u32),
            };
            let path = prefix.child(step);
            self.exec_block(b, path)?;
        }
        Ok(())
    }

    fn exec_block(&mut self, block: &Block, path: AstPath) -> Result<(), Stop> {
        self.tick()?;
        self.executed.insert(path.clone());
        match block {
            Block::Move | Block::TurnLeft | Block::TurnRight | Block::PickMarker | Block::PutMarker => {
                self.do_action(block.kind(), &path)
            }
            Block::Repeat { count, body } => {
                let f = self.rec.loop_enter(&path, BlockKind::Repeat, None);
                for _ in 0..*count {
                    self.exec_body(body, &path, BodyKind::Plain)?;
                    self.rec.iteration_end(f);
                }
                self.rec.loop_exit(f);
                Ok(())
            }
            Block::RepeatUntil { cond, body } => {
                let f = self.rec.loop_enter(&path, BlockKind::RepeatUntil, Some(cond));
                loop {
                    if self.eval_cond(cond, &path)? {
                        break;
                    }
                    self.exec_body(body, &path, BodyKind::Plain)?;
                    self.rec.iteration_end(f);
                }
                self.rec.loop_exit(f);
                Ok(())
            }
            Block::While { cond, body } => {
                let f = self.rec.loop_enter(&path, BlockKind::While, Some(cond));
                loop {
                    if !self.eval_cond(cond, &path)? {
                        break;
                    }
                    self.exec_body(body, &path, BodyKind::Plain)?;
                    self.rec.iteration_end(f);
                }
                self.rec.loop_exit(f);
                Ok(())
            }
            Block::If { cond, body } => {
                if self.eval_cond(cond, &path)? {
                    let f = self.rec.cond_enter(&path, BlockKind::If, cond, true);
                    self.exec_body(body, &path, BodyKind::Plain)?;
                    self.rec.cond_exit(f);
                } else {
                    self.rec.if_skipped(&path, cond);
                }
                Ok(())
            }
            Block::IfElse {
                cond,
                then_body,
                else_body,
            } => {
                let taken = self.eval_cond(cond, &path)?;
                let f = self.rec.cond_enter(&path, BlockKind::IfElse, cond, taken);
                if taken {
                    self.exec_body(then_body, &path, BodyKind::Then)?;
                } else {
                    self.exec_body(else_body, &path, BodyKind::Else)?;
                }
                self.rec.cond_exit(f);
                Ok(())
            }
        }
    }

    fn solved(&self) -> bool {
        match self.grid.dialect {
            Dialect::Maze => Some(self.pose.cell()) == self.grid.goal,
            Dialect::Karel => {
                self.markers == self.grid.markers_post
                    && Some(self.pose) == self.grid.end_pose
            }
        }
    }

    fn snapshot(&self) -> Grid {
        let mut g = self.grid.clone();
        g.start = self.pose;
        if self.grid.dialect == Dialect::Karel {
            g.markers_pre = self.markers.clone();
        }
        g
    }
}

fn run_vm<R: Recorder>(code: &Code, grid: &Grid, max_steps: u32, rec: &mut R) -> RunResult {
    let mut vm = Vm::new(grid, max_steps, rec);
    let outcome = match vm.exec_body(&code.body, &AstPath::default(), BodyKind::Plain) {
        Ok(()) => {
            if vm.solved() {
                Outcome::Solved
            } else {
                Outcome::NotSolved
            }
        }
        Err(Stop::Crash(r)) => Outcome::Crashed(r),
        Err(Stop::Timeout) => Outcome::Timeout,
    };
    RunResult {
        outcome,
        final_grid: vm.snapshot(),
        final_pose: vm.pose,
        actions: vm.actions_executed,
        moves: vm.moves,
        turns: vm.turns,
        visited_cells: vm.visited.clone(),
    }
}

/// Runs `code` on `grid` and reports the outcome and final state.
pub fn execute(code: &Code, grid: &Grid, max_steps: u32) -> Result<RunResult, ExecError> {
    if code.dialect != grid.dialect {
        return Err(ExecError::DialectMismatch);
    }
    let mut rec = NoRecorder;
    Ok(run_vm(code, grid, max_steps, &mut rec))
}

/// True iff `code` solves every grid of `task` within the task's block store
/// and size budget.
pub fn solves(code: &Code, task: &Task, max_steps: u32) -> bool {
    if code.dialect != task.dialect() {
        return false;
    }
    if code.size() > task.size_budget {
        return false;
    }
    if !code.blocks().is_subset(&task.store) {
        return false;
    }
    task.vis.iter().all(|g| {
        execute(code, g, max_steps).is_ok_and(|r| r.outcome == Outcome::Solved)
    })
}

/// Executed AST nodes on a single grid, with the run statistics.
pub fn coverage_on_grid(
    code: &Code,
    grid: &Grid,
    max_steps: u32,
) -> Result<(BTreeSet<AstPath>, RunResult), CoverageError> {
    if code.dialect != grid.dialect {
        return Err(CoverageError::DialectMismatch);
    }
    let mut rec = NoRecorder;
    let mut vm = Vm::new(grid, max_steps, &mut rec);
    let res = vm.exec_body(&code.body, &AstPath::default(), BodyKind::Plain);
    let outcome = match res {
        Ok(()) if vm.solved() => Outcome::Solved,
        Ok(()) => Outcome::NotSolved,
        Err(Stop::Crash(r)) => Outcome::Crashed(r),
        Err(Stop::Timeout) => Outcome::Timeout,
    };
    let executed = vm.executed.clone();
    let run = RunResult {
        outcome,
        final_grid: vm.snapshot(),
        final_pose: vm.pose,
        actions: vm.actions_executed,
        moves: vm.moves,
        turns: vm.turns,
        visited_cells: vm.visited.clone(),
    };
    if outcome != Outcome::Solved {
        return Err(CoverageError::NotSolving { grid: 0, outcome });
    }
    Ok((executed, run))
}

/// Union of AST nodes reached across `grids`, and the covered fraction of
/// all nodes excluding `Run`.
pub fn coverage(
    code: &Code,
    grids: &[Grid],
    max_steps: u32,
) -> Result<(BTreeSet<AstPath>, f64), CoverageError> {
    let mut union: BTreeSet<AstPath> = BTreeSet::new();
    for (i, grid) in grids.iter().enumerate() {
        let (nodes, _) = coverage_on_grid(code, grid, max_steps).map_err(|e| match e {
            CoverageError::NotSolving { outcome, .. } => {
                CoverageError::NotSolving { grid: i, outcome }
            }
            other => other,
        })?;
        union.extend(nodes);
    }
    let total = code.node_count();
    let fraction = if total == 0 {
        1.0
    } else {
        union.len() as f64 / total as f64
    };
    Ok((union, fraction))
}

#[derive(Debug)]
enum Ev {
    Action { frames: Vec<FrameId> },
    Boundary(FrameId),
}

/// Full trace recorder: validity events, execution tree, per-step snapshots.
struct TraceRecorder {
    next_frame: FrameId,
    open_frames: Vec<(FrameId, AstPath)>,
    events: Vec<Ev>,
    actions: Vec<(BlockKind, AstPath)>,
    conditions: Vec<CondEval>,
    snapshots: Vec<(Pose, Vec<u8>)>,
    // exec tree construction
    children_stack: Vec<Vec<ExecNode>>,
    construct_stack: Vec<OpenConstruct>,
}

struct OpenConstruct {
    frame: FrameId,
    path: AstPath,
    kind: BlockKind,
    cond: Option<Condition>,
    taken: Option<bool>,
    iterations: Vec<Vec<ExecNode>>,
    is_loop: bool,
}

impl TraceRecorder {
    fn new() -> Self {
        TraceRecorder {
            next_frame: 1,
            open_frames: Vec::new(),
            events: Vec::new(),
            actions: Vec::new(),
            conditions: Vec::new(),
            snapshots: Vec::new(),
            children_stack: alloc::vec![Vec::new()],
            construct_stack: Vec::new(),
        }
    }

    fn push_node(&mut self, node: ExecNode) {
        self.children_stack
            .last_mut()
            .expect("children stack never empty")
            .push(node);
    }
}

impl Recorder for TraceRecorder {
    fn action(&mut self, step: u32, kind: BlockKind, path: &AstPath, pose: Pose, markers: &[u8]) {
        self.actions.push((kind, path.clone()));
        self.snapshots.push((pose, markers.to_vec()));
        self.events.push(Ev::Action {
            frames: self.open_frames.iter().map(|(f, _)| *f).collect(),
        });
        self.push_node(ExecNode::Action {
            step,
            kind,
            path: path.clone(),
        });
    }

    fn cond_eval(&mut self, ev: CondEval) {
        self.conditions.push(ev);
    }

    fn loop_enter(&mut self, path: &AstPath, kind: BlockKind, cond: Option<&Condition>) -> FrameId {
        let f = self.next_frame;
        self.next_frame += 1;
        self.open_frames.push((f, path.clone()));
        self.construct_stack.push(OpenConstruct {
            frame: f,
            path: path.clone(),
            kind,
            cond: cond.cloned(),
            taken: None,
            iterations: Vec::new(),
            is_loop: true,
        });
        self.children_stack.push(Vec::new());
        f
    }

    fn iteration_end(&mut self, frame: FrameId) {
        self.events.push(Ev::Boundary(frame));
        let iter = self.children_stack.pop().expect("iteration children");
        let open = self.construct_stack.last_mut().expect("open loop");
        debug_assert_eq!(open.frame, frame);
        open.iterations.push(iter);
        self.children_stack.push(Vec::new());
    }

    fn loop_exit(&mut self, frame: FrameId) {
        // the vec pushed for the next (never started) iteration
        let leftover = self.children_stack.pop().expect("loop leftover children");
        debug_assert!(leftover.is_empty());
        let open = self.construct_stack.pop().expect("open loop");
        debug_assert_eq!(open.frame, frame);
        debug_assert!(self.open_frames.last().map(|(f, _)| *f) == Some(frame));
        self.open_frames.pop();
        self.push_node(ExecNode::Loop {
            path: open.path,
            kind: open.kind,
            cond: open.cond,
            iterations: open.iterations,
        });
    }

    fn cond_enter(&mut self, path: &AstPath, kind: BlockKind, cond: &Condition, taken: bool) -> FrameId {
        let f = self.next_frame;
        self.next_frame += 1;
        self.open_frames.push((f, path.clone()));
        self.construct_stack.push(OpenConstruct {
            frame: f,
            path: path.clone(),
            kind,
            cond: Some(cond.clone()),
            taken: Some(taken),
            iterations: Vec::new(),
            is_loop: false,
        });
        self.children_stack.push(Vec::new());
        f
    }

    fn cond_exit(&mut self, frame: FrameId) {
        self.events.push(Ev::Boundary(frame));
        let children = self.children_stack.pop().expect("cond children");
        let open = self.construct_stack.pop().expect("open cond");
        debug_assert_eq!(open.frame, frame);
        debug_assert!(!open.is_loop);
        self.open_frames.pop();
        self.push_node(ExecNode::Cond {
            path: open.path,
            kind: open.kind,
            cond: open.cond.expect("conditional has a condition"),
            taken: open.taken,
            children,
        });
    }

    fn if_skipped(&mut self, path: &AstPath, cond: &Condition) {
        self.push_node(ExecNode::Cond {
            path: path.clone(),
            kind: BlockKind::If,
            cond: cond.clone(),
            taken: Some(false),
            children: Vec::new(),
        });
    }
}

/// Produces the full instrumented trace of a solving run.
pub fn trace(code: &Code, grid: &Grid, max_steps: u32) -> Result<Trace, TraceError> {
    if code.dialect != grid.dialect {
        return Err(TraceError::DialectMismatch);
    }
    let mut rec = TraceRecorder::new();
    let mut vm = Vm::new(grid, max_steps, &mut rec);
    let res = vm.exec_body(&code.body, &AstPath::default(), BodyKind::Plain);
    let outcome = match res {
        Ok(()) if vm.solved() => Outcome::Solved,
        Ok(()) => Outcome::NotSolved,
        Err(Stop::Crash(r)) => Outcome::Crashed(r),
        Err(Stop::Timeout) => Outcome::Timeout,
    };
    if outcome != Outcome::Solved {
        return Err(TraceError::NotSolved(outcome));
    }
    drop(vm);

    // Validity pass: an action is a clean cut iff every construct body open
    // at that action reaches an iteration/body end before the next action.
    let mut steps = Vec::with_capacity(rec.actions.len());
    let mut action_indices: Vec<usize> = Vec::new();
    for (i, ev) in rec.events.iter().enumerate() {
        if matches!(ev, Ev::Action { .. }) {
            action_indices.push(i);
        }
    }
    for (ai, &ei) in action_indices.iter().enumerate() {
        let Ev::Action { frames } = &rec.events[ei] else {
            unreachable!()
        };
        let end = action_indices
            .get(ai + 1)
            .copied()
            .unwrap_or(rec.events.len());
        let mut closed: BTreeSet<FrameId> = BTreeSet::new();
        for ev in &rec.events[ei + 1..end] {
            if let Ev::Boundary(f) = ev {
                closed.insert(*f);
            }
        }
        let unfinished = frames.iter().rev().find(|f| !closed.contains(f)).copied();
        let (pose, markers) = rec.snapshots[ai].clone();
        let mut grid_state = grid.clone();
        grid_state.start = pose;
        if grid.dialect == Dialect::Karel {
            grid_state.markers_pre = markers;
        }
        steps.push(TraceStep {
            tau: ai as u32 + 1,
            grid_state,
            valid_cut: unfinished.is_none(),
            terminated_inside: unfinished.map(|f| frame_path(&rec, f)),
        });
    }

    Ok(Trace {
        initial: grid.clone(),
        actions: rec.actions,
        conditions: rec.conditions,
        steps,
        exec_tree: rec.children_stack.pop().unwrap_or_default(),
    })
}

/// Frame paths are recovered from the exec tree; frames are numbered in the
/// order constructs open, matching a pre-order walk of construct entries.
fn frame_path(rec: &TraceRecorder, frame: FrameId) -> AstPath {
    fn walk(nodes: &[ExecNode], next: &mut FrameId, want: FrameId, out: &mut Option<AstPath>) {
        for n in nodes {
            if out.is_some() {
                return;
            }
            match n {
                ExecNode::Action { .. } => {}
                ExecNode::Loop {
                    path, iterations, ..
                } => {
                    let me = *next;
                    *next += 1;
                    if me == want {
                        *out = Some(path.clone());
                        return;
                    }
                    for it in iterations {
                        walk(it, next, want, out);
                    }
                }
                ExecNode::Cond {
                    path,
                    taken,
                    children,
                    ..
                } => {
                    // skipped Ifs never opened a frame
                    if *taken == Some(false) && children.is_empty() {
                        continue;
                    }
                    let me = *next;
                    *next += 1;
                    if me == want {
                        *out = Some(path.clone());
                        return;
                    }
                    walk(children, next, want, out);
                }
            }
        }
    }
    let mut next: FrameId = 1;
    let mut out = None;
    // children_stack may already be drained; use the last remaining level
    let root: &[ExecNode] = rec.children_stack.last().map(|v| v.as_slice()).unwrap_or(&[]);
    walk(root, &mut next, frame, &mut out);
    out.unwrap_or_default()
}

/// Replays a command prefix directly on a grid; used by replay checks and by
/// marker-delta bookkeeping. Paths are ignored.
pub fn apply_actions(
    grid: &Grid,
    actions: &[(BlockKind, AstPath)],
) -> Result<(Pose, Vec<u8>), CrashReason> {
    let mut pose = grid.start;
    let mut markers = grid.markers_pre.clone();
    for (kind, _) in actions {
        match kind {
            BlockKind::Move => {
                let (r, c) = pose.ahead();
                if !grid.is_clear(r, c) {
                    return Err(CrashReason::HitWall);
                }
                pose.row = r as u32;
                pose.col = c as u32;
            }
            BlockKind::TurnLeft => pose.dir = pose.dir.left(),
            BlockKind::TurnRight => pose.dir = pose.dir.right(),
            BlockKind::PickMarker => {
                let i = (pose.row * grid.width + pose.col) as usize;
                if markers[i] == 0 {
                    return Err(CrashReason::NoMarkerToPick);
                }
                markers[i] -= 1;
            }
            BlockKind::PutMarker => {
                let i = (pose.row * grid.width + pose.col) as usize;
                if markers[i] >= MAX_MARKERS {
                    return Err(CrashReason::MarkerOverflow);
                }
                markers[i] += 1;
            }
            _ => {}
        }
    }
    Ok((pose, markers))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::world::{Dir, Grid, Pose};
    use alloc::vec;

    fn corridor() -> Grid {
        // open 1x? corridor with goal at the far end
        Grid::maze_from_rows(&["....G", "#####"], Pose::new(0, 0, Dir::East)).unwrap()
    }

    #[test]
    fn empty_code_on_goal_is_solved() {
        let g = Grid::maze_from_rows(&["G...", "...."], Pose::new(0, 0, Dir::East)).unwrap();
        let c = Code::parse("Run{}").unwrap();
        let r = execute(&c, &g, 100).unwrap();
        assert_eq!(r.outcome, Outcome::Solved);
        assert_eq!(r.actions, 0);
    }

    #[test]
    fn move_into_wall_crashes() {
        let g = Grid::maze_from_rows(&[".#G", "..."], Pose::new(0, 0, Dir::East)).unwrap();
        let c = Code::parse("Run{move}").unwrap();
        let r = execute(&c, &g, 100).unwrap();
        assert_eq!(r.outcome, Outcome::Crashed(CrashReason::HitWall));
    }

    #[test]
    fn move_off_boundary_crashes() {
        let g = Grid::maze_from_rows(&["..G", "..."], Pose::new(0, 0, Dir::North)).unwrap();
        let c = Code::parse("Run{move}").unwrap();
        assert_eq!(
            execute(&c, &g, 100).unwrap().outcome,
            Outcome::Crashed(CrashReason::HitWall)
        );
    }

    #[test]
    fn repeat_solves_corridor() {
        let c = Code::parse("Run{Repeat(4){move}}").unwrap();
        let r = execute(&c, &corridor(), 100).unwrap();
        assert_eq!(r.outcome, Outcome::Solved);
        assert_eq!(r.actions, 4);
        assert_eq!(r.moves, 4);
    }

    #[test]
    fn timeout_on_action_budget() {
        let g = corridor();
        let c = Code::parse("Run{RepeatUntil(goal){turnLeft}}").unwrap();
        assert_eq!(execute(&c, &g, 50).unwrap().outcome, Outcome::Timeout);
    }

    #[test]
    fn karel_exact_post_state_required() {
        let g = Grid::karel_from_rows(
            &["1..", "..."],
            &["0..", "..."],
            Pose::new(0, 0, Dir::East),
            Pose::new(0, 0, Dir::East),
        )
        .unwrap();
        let pick = Code::parse_with_dialect("Run{pickMarker}", Dialect::Karel).unwrap();
        assert_eq!(execute(&pick, &g, 100).unwrap().outcome, Outcome::Solved);
        // same markers but wrong final direction
        let turn = Code::parse_with_dialect("Run{pickMarker turnLeft}", Dialect::Karel).unwrap();
        assert_eq!(execute(&turn, &g, 100).unwrap().outcome, Outcome::NotSolved);
        // picking from an empty cell crashes
        let two = Code::parse_with_dialect("Run{pickMarker pickMarker}", Dialect::Karel).unwrap();
        assert_eq!(
            execute(&two, &g, 100).unwrap().outcome,
            Outcome::Crashed(CrashReason::NoMarkerToPick)
        );
    }

    #[test]
    fn solves_enforces_store_and_budget() {
        use crate::dsl::BlockKind;
        use crate::world::Task;
        let g = corridor();
        let c = Code::parse("Run{Repeat(4){move}}").unwrap();
        let full: alloc::collections::BTreeSet<_> =
            vec![BlockKind::Move, BlockKind::Repeat].into_iter().collect();
        let t = Task::new("t", vec![g.clone()], full.clone(), 2);
        assert!(solves(&c, &t, 100));
        let t_small = Task::new("t", vec![g.clone()], full, 1);
        assert!(!solves(&c, &t_small, 100));
        let no_repeat: alloc::collections::BTreeSet<_> = vec![BlockKind::Move].into_iter().collect();
        let t_store = Task::new("t", vec![g], no_repeat, 2);
        assert!(!solves(&c, &t_store, 100));
    }

    #[test]
    fn trace_two_moves() {
        let g = Grid::maze_from_rows(&["..G", "###"], Pose::new(0, 0, Dir::East)).unwrap();
        let c = Code::parse("Run{move move}").unwrap();
        let t = trace(&c, &g, 100).unwrap();
        assert_eq!(t.len(), 2);
        assert_eq!(t.actions.len(), 2);
        assert!(t.steps.iter().all(|s| s.valid_cut));
        assert_eq!(t.steps[0].grid_state.start.cell(), (0, 1));
        assert_eq!(t.steps[1].grid_state.start.cell(), (0, 2));
    }

    #[test]
    fn trace_repeat_unrolls() {
        let c = Code::parse("Run{Repeat(4){move}}").unwrap();
        let t = trace(&c, &corridor(), 100).unwrap();
        assert_eq!(t.len(), 4);
        // each action closes the Repeat body iteration, so every cut is clean
        assert!(t.steps.iter().all(|s| s.valid_cut));
        assert_eq!(t.prefix(2).len(), 2);
    }

    #[test]
    fn trace_marks_mid_body_cuts() {
        // body is two moves; cutting after the first move of an iteration is
        // mid-body
        let g = Grid::maze_from_rows(&["....G", "#####"], Pose::new(0, 0, Dir::East)).unwrap();
        let c = Code::parse("Run{Repeat(2){move move}}").unwrap();
        let t = trace(&c, &g, 100).unwrap();
        assert_eq!(t.len(), 4);
        assert_eq!(
            t.steps.iter().map(|s| s.valid_cut).collect::<Vec<_>>(),
            vec![false, true, false, true]
        );
        assert!(t.steps[0].terminated_inside.is_some());
        assert!(t.steps[1].terminated_inside.is_none());
    }

    #[test]
    fn trace_nested_loops_validity() {
        // outer body: inner loop then a turn; only the turn closes the outer
        // iteration
        // path: east to (0,2), turn south, down to (2,2), turn west, two
        // moves to the goal at (2,0)
        let g = Grid::maze_from_rows(
            &["...#", "...#", "G..#", "...#"],
            Pose::new(0, 0, Dir::East),
        )
        .unwrap();
        let c = Code::parse("Run{Repeat(2){Repeat(2){move} turnRight} move move}").unwrap();
        let t = trace(&c, &g, 100).unwrap();
        // actions: m m t m m t m m (8 actions)
        assert_eq!(t.len(), 8);
        let validity: Vec<bool> = t.steps.iter().map(|s| s.valid_cut).collect();
        assert_eq!(validity, vec![false, false, true, false, false, true, true, true]);
        // cut after step 2 (inner loop done, outer mid-body) blames the outer loop
        assert_eq!(
            t.steps[1].terminated_inside.as_ref().map(|p| p.0.len()),
            Some(1)
        );
    }

    #[test]
    fn trace_rejects_non_solving_code() {
        let c = Code::parse("Run{move}").unwrap();
        let err = trace(&c, &corridor(), 100).unwrap_err();
        assert_eq!(err, TraceError::NotSolved(Outcome::NotSolved));
    }

    #[test]
    fn coverage_straight_line_full() {
        let g = Grid::maze_from_rows(&["..G", "..."], Pose::new(0, 0, Dir::East)).unwrap();
        let c = Code::parse("Run{move move}").unwrap();
        let (_, frac) = coverage(&c, &[g], 100).unwrap();
        assert_eq!(frac, 1.0);
    }

    #[test]
    fn coverage_reports_dead_branch() {
        let g = Grid::karel_from_rows(
            &["1..", "..."],
            &["0..", "..."],
            Pose::new(0, 0, Dir::East),
            Pose::new(0, 0, Dir::East),
        )
        .unwrap();
        let c = Code::parse("Run{IfElse(markersPresent){pickMarker}{putMarker}}").unwrap();
        let (nodes, frac) = coverage(&c, &[g], 100).unwrap();
        // IfElse + pickMarker reached, putMarker not: 2 of 3
        assert_eq!(nodes.len(), 2);
        assert!(frac < 1.0);
    }

    #[test]
    fn replay_reproduces_trace_states() {
        let g = Grid::maze_from_rows(
            &["....", ".##.", "...G"],
            Pose::new(0, 0, Dir::East),
        )
        .unwrap();
        let c = Code::parse("Run{Repeat(3){move} turnRight Repeat(2){move}}").unwrap();
        let r = execute(&c, &g, 100).unwrap();
        assert_eq!(r.outcome, Outcome::Solved);
        let t = trace(&c, &g, 100).unwrap();
        for step in &t.steps {
            let (pose, markers) = apply_actions(&g, t.prefix(step.tau)).unwrap();
            assert_eq!(pose, step.grid_state.start);
            assert_eq!(markers, step.grid_state.markers_pre);
        }
    }

    #[test]
    fn determinism() {
        let g = corridor();
        let c = Code::parse("Run{RepeatUntil(goal){move}}").unwrap();
        let a = execute(&c, &g, 100).unwrap();
        let b = execute(&c, &g, 100).unwrap();
        assert_eq!(a.outcome, b.outcome);
        assert_eq!(a.final_grid, b.final_grid);
        assert_eq!(a.actions, b.actions);
    }
}
