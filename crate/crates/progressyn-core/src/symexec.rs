//! Grid realization for partial codes: the code's intended execution path is
//! replayed symbolically, every condition outcome and visited cell becomes a
//! constraint over grid cells, and a grid is assembled by modifying the
//! reference grid only where a constraint demands it.
//!
//! Constraint solving is direct propagation: each constraint pins a single
//! cell or attribute, so no search is involved and realization is
//! deterministic.

use alloc::collections::{BTreeMap, BTreeSet};
use alloc::vec::Vec;
use core::fmt;

use crate::dsl::{Block, Code, Condition, Dialect};
use crate::interpreter::{self, Outcome};
use crate::world::{Grid, Pose, MAX_MARKERS};

/// Intended outcome of every condition evaluation of a code's target path,
/// in evaluation order. Loop-entry checks, loop exits, and branch choices are
/// all driven by this script.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct CondScript(pub Vec<bool>);

/// Inclusive bounds on a pre-grid marker count.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct MarkerBounds {
    pub lo: u8,
    pub hi: u8,
}

/// Requirements accumulated over a symbolic run. Cells absent from every map
/// are unconstrained and copy the reference grid on realization.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CellConstraintSet {
    /// Required wall layer values; `true` means wall.
    pub walls: BTreeMap<(u32, u32), bool>,
    /// Bounds on pre-grid marker counts (karel).
    pub pre_markers: BTreeMap<(u32, u32), MarkerBounds>,
    /// Net marker change per cell over the run (karel); the post grid is
    /// the realized pre grid plus this delta.
    pub marker_delta: BTreeMap<(u32, u32), i32>,
    /// Goal placement (maze): the avatar's final cell.
    pub goal: Option<(u32, u32)>,
    /// Cells the goal must avoid: loop-exit checks that saw "not at goal".
    pub goal_forbidden: BTreeSet<(u32, u32)>,
    /// Required end pose (karel).
    pub end_pose: Option<Pose>,
    pub final_pose: Pose,
}

impl CellConstraintSet {
    /// Cells any realization may differ from the reference on: wall or
    /// marker constrained, marker-delta touched, or goal cells.
    pub fn touched_cells(&self, ref_grid: &Grid) -> BTreeSet<(u32, u32)> {
        let mut out: BTreeSet<(u32, u32)> = BTreeSet::new();
        out.extend(self.walls.keys().copied());
        out.extend(self.pre_markers.keys().copied());
        out.extend(self.marker_delta.keys().copied());
        if let Some(g) = self.goal {
            out.insert(g);
        }
        if let Some(g) = ref_grid.goal {
            out.insert(g);
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Unsat {
    /// A cell must be both free and a wall.
    CellConflict { row: u32, col: u32 },
    /// A condition requires a cell outside the grid to be free.
    ClearBeyondBoundary,
    /// Marker bounds on a cell became empty.
    MarkerConflict { row: u32, col: u32 },
    /// Two different goal placements are required.
    GoalConflict,
    /// The goal would land on a cell an earlier check excluded.
    GoalForbidden { row: u32, col: u32 },
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum SymExecError {
    Unsat(Unsat),
    /// Script length or structure does not match the code; caller bug.
    ScriptMismatch,
    /// The realized grid failed the interpreter post-check; extraction bug.
    PostCheckFailed(Outcome),
}

impl fmt::Display for SymExecError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            SymExecError::Unsat(u) => write!(f, "unsatisfiable constraints: {u:?}"),
            SymExecError::ScriptMismatch => f.write_str("condition script does not match code"),
            SymExecError::PostCheckFailed(o) => {
                write!(f, "internal: realized grid fails execution: {o:?}")
            }
        }
    }
}

impl core::error::Error for SymExecError {}

struct SymVm<'a> {
    ref_grid: &'a Grid,
    pose: Pose,
    script: &'a [bool],
    cursor: usize,
    walls: BTreeMap<(u32, u32), bool>,
    pre_markers: BTreeMap<(u32, u32), MarkerBounds>,
    delta: BTreeMap<(u32, u32), i32>,
    goal: Option<(u32, u32)>,
    goal_forbidden: BTreeSet<(u32, u32)>,
    actions: u64,
    max_actions: u64,
}

impl<'a> SymVm<'a> {
    fn require_cell(&mut self, row: u32, col: u32, wall: bool) -> Result<(), SymExecError> {
        match self.walls.insert((row, col), wall) {
            Some(prev) if prev != wall => {
                Err(SymExecError::Unsat(Unsat::CellConflict { row, col }))
            }
            _ => Ok(()),
        }
    }

    /// Constrain the cell one step toward `dir` to be clear (`true`) or
    /// blocked (`false`); the boundary is blocked and cannot be made clear.
    fn require_clear(&mut self, toward: (i32, i32), clear: bool) -> Result<(), SymExecError> {
        let (r, c) = toward;
        if !self.ref_grid.in_bounds(r, c) {
            return if clear {
                Err(SymExecError::Unsat(Unsat::ClearBeyondBoundary))
            } else {
                Ok(())
            };
        }
        self.require_cell(r as u32, c as u32, !clear)
    }

    fn delta_at(&self, cell: (u32, u32)) -> i32 {
        self.delta.get(&cell).copied().unwrap_or(0)
    }

    fn bounds_mut(&mut self, cell: (u32, u32)) -> &mut MarkerBounds {
        self.pre_markers.entry(cell).or_insert(MarkerBounds {
            lo: 0,
            hi: MAX_MARKERS,
        })
    }

    /// Current markers at `cell` must be at least `n`.
    fn require_markers_at_least(&mut self, cell: (u32, u32), n: i32) -> Result<(), SymExecError> {
        let need = n - self.delta_at(cell);
        if need <= 0 {
            return Ok(());
        }
        let b = self.bounds_mut(cell);
        if need > b.hi as i32 {
            return Err(SymExecError::Unsat(Unsat::MarkerConflict {
                row: cell.0,
                col: cell.1,
            }));
        }
        b.lo = b.lo.max(need as u8);
        Ok(())
    }

    /// Current markers at `cell` must be at most `n`.
    fn require_markers_at_most(&mut self, cell: (u32, u32), n: i32) -> Result<(), SymExecError> {
        let cap = n - self.delta_at(cell);
        if cap >= MAX_MARKERS as i32 {
            return Ok(());
        }
        let b = self.bounds_mut(cell);
        if cap < b.lo as i32 {
            return Err(SymExecError::Unsat(Unsat::MarkerConflict {
                row: cell.0,
                col: cell.1,
            }));
        }
        b.hi = b.hi.min(cap.max(0) as u8);
        Ok(())
    }

    fn next_outcome(&mut self) -> Result<bool, SymExecError> {
        let v = self
            .script
            .get(self.cursor)
            .copied()
            .ok_or(SymExecError::ScriptMismatch)?;
        self.cursor += 1;
        Ok(v)
    }

    /// Impose the constraint that `cond` evaluates to `expected` here.
    fn impose(&mut self, cond: &Condition, expected: bool) -> Result<(), SymExecError> {
        match cond {
            Condition::Not(inner) => self.impose(inner, !expected),
            Condition::Goal => {
                let cell = self.pose.cell();
                if expected {
                    match self.goal {
                        Some(g) if g != cell => Err(SymExecError::Unsat(Unsat::GoalConflict)),
                        _ => {
                            self.goal = Some(cell);
                            Ok(())
                        }
                    }
                } else {
                    self.goal_forbidden.insert(cell);
                    Ok(())
                }
            }
            Condition::PathAhead | Condition::FrontIsClear => {
                self.require_clear(self.pose.ahead(), expected)
            }
            Condition::PathLeft | Condition::LeftIsClear => {
                self.require_clear(self.pose.toward(self.pose.dir.left()), expected)
            }
            Condition::PathRight | Condition::RightIsClear => {
                self.require_clear(self.pose.toward(self.pose.dir.right()), expected)
            }
            Condition::MarkersPresent => {
                let cell = self.pose.cell();
                if expected {
                    self.require_markers_at_least(cell, 1)
                } else {
                    let d = self.delta_at(cell);
                    self.require_markers_at_least(cell, d.min(0))?; // pre >= -d is implicit (pre >= 0)
                    self.require_markers_at_most(cell, 0)
                }
            }
            Condition::NoMarkersPresent => {
                self.impose(&Condition::MarkersPresent, !expected)
            }
        }
    }

    fn eval(&mut self, cond: &Condition) -> Result<bool, SymExecError> {
        let outcome = self.next_outcome()?;
        self.impose(cond, outcome)?;
        Ok(outcome)
    }

    fn do_action(&mut self, block: &Block) -> Result<(), SymExecError> {
        self.actions += 1;
        if self.actions > self.max_actions {
            return Err(SymExecError::ScriptMismatch);
        }
        match block {
            Block::Move => {
                let (r, c) = self.pose.ahead();
                self.require_clear((r, c), true)?;
                self.pose.row = r as u32;
                self.pose.col = c as u32;
            }
            Block::TurnLeft => self.pose.dir = self.pose.dir.left(),
            Block::TurnRight => self.pose.dir = self.pose.dir.right(),
            Block::PickMarker => {
                let cell = self.pose.cell();
                self.require_markers_at_least(cell, 1)?;
                *self.delta.entry(cell).or_insert(0) -= 1;
            }
            Block::PutMarker => {
                let cell = self.pose.cell();
                self.require_markers_at_most(cell, MAX_MARKERS as i32 - 1)?;
                *self.delta.entry(cell).or_insert(0) += 1;
            }
            _ => unreachable!("not an action"),
        }
        Ok(())
    }

    fn exec_body(&mut self, blocks: &[Block]) -> Result<(), SymExecError> {
        for b in blocks {
            match b {
                Block::Move
                | Block::TurnLeft
                | Block::TurnRight
                | Block::PickMarker
                | Block::PutMarker => self.do_action(b)?,
                Block::Repeat { count, body } => {
                    for _ in 0..*count {
                        self.exec_body(body)?;
                    }
                }
                Block::RepeatUntil { cond, body } => loop {
                    if self.eval(cond)? {
                        break;
                    }
                    self.exec_body(body)?;
                },
                Block::While { cond, body } => loop {
                    if !self.eval(cond)? {
                        break;
                    }
                    self.exec_body(body)?;
                },
                Block::If { cond, body } => {
                    if self.eval(cond)? {
                        self.exec_body(body)?;
                    }
                }
                Block::IfElse {
                    cond,
                    then_body,
                    else_body,
                } => {
                    if self.eval(cond)? {
                        self.exec_body(then_body)?;
                    } else {
                        self.exec_body(else_body)?;
                    }
                }
            }
        }
        Ok(())
    }
}

/// Derives the cell constraints that force `code` to follow the intended
/// path given by `script` on a grid shaped like `ref_grid`.
pub fn constraints_of(
    code: &Code,
    script: &CondScript,
    ref_grid: &Grid,
) -> Result<CellConstraintSet, SymExecError> {
    let mut vm = SymVm {
        ref_grid,
        pose: ref_grid.start,
        script: &script.0,
        cursor: 0,
        walls: BTreeMap::new(),
        pre_markers: BTreeMap::new(),
        delta: BTreeMap::new(),
        goal: None,
        goal_forbidden: BTreeSet::new(),
        actions: 0,
        max_actions: 4 * (script.0.len() as u64 + 64) * 64,
    };
    // the avatar stands on its start cell
    vm.require_cell(ref_grid.start.row, ref_grid.start.col, false)?;
    vm.exec_body(&code.body)?;
    if vm.cursor != vm.script.len() {
        return Err(SymExecError::ScriptMismatch);
    }
    let final_pose = vm.pose;
    let mut goal = vm.goal;
    if code.dialect == Dialect::Maze {
        let final_cell = final_pose.cell();
        match goal {
            Some(g) if g != final_cell => return Err(SymExecError::Unsat(Unsat::GoalConflict)),
            _ => goal = Some(final_cell),
        }
        if vm.goal_forbidden.contains(&final_cell) {
            return Err(SymExecError::Unsat(Unsat::GoalForbidden {
                row: final_cell.0,
                col: final_cell.1,
            }));
        }
        // the avatar ends on the goal, so the goal cell is on the trajectory
        // and already constrained free; walls there would have conflicted.
    }
    Ok(CellConstraintSet {
        walls: vm.walls,
        pre_markers: vm.pre_markers,
        marker_delta: vm.delta,
        goal,
        goal_forbidden: vm.goal_forbidden,
        end_pose: (code.dialect == Dialect::Karel).then_some(final_pose),
        final_pose,
    })
}

/// Realizes a grid for `(code, script)` by modifying `ref_grid` only on
/// constrained cells; unconstrained cells keep their reference values. The
/// result is interpreter-verified to be solved by `code`.
pub fn realize_grid(
    code: &Code,
    script: &CondScript,
    ref_grid: &Grid,
    max_steps: u32,
) -> Result<(Grid, CellConstraintSet), SymExecError> {
    let cs = constraints_of(code, script, ref_grid)?;
    let mut grid = ref_grid.clone();
    for (&(r, c), &wall) in &cs.walls {
        grid.set_wall(r, c, wall);
    }
    match code.dialect {
        Dialect::Maze => {
            grid.goal = cs.goal;
        }
        Dialect::Karel => {
            for (&(r, c), b) in &cs.pre_markers {
                let current = grid.markers_pre_at(r, c);
                grid.set_markers_pre(r, c, current.clamp(b.lo, b.hi));
            }
            // post grid is the realized pre grid advanced by the run's delta
            grid.markers_post = grid.markers_pre.clone();
            for (&(r, c), &d) in &cs.marker_delta {
                let v = grid.markers_pre_at(r, c) as i32 + d;
                debug_assert!((0..=MAX_MARKERS as i32).contains(&v));
                grid.set_markers_post(r, c, v as u8);
            }
            grid.end_pose = cs.end_pose;
        }
    }
    let run = interpreter::execute(code, &grid, max_steps)
        .map_err(|_| SymExecError::ScriptMismatch)?;
    if run.outcome != Outcome::Solved {
        return Err(SymExecError::PostCheckFailed(run.outcome));
    }
    Ok((grid, cs))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::world::{Dir, Grid, Pose};
    use alloc::vec;

    fn corridor() -> Grid {
        Grid::maze_from_rows(&["....G", "#####"], Pose::new(0, 0, Dir::East)).unwrap()
    }

    #[test]
    fn full_solution_realizes_reference_unchanged() {
        let g = corridor();
        let code = Code::parse("Run{Repeat(4){move}}").unwrap();
        let (realized, _) = realize_grid(&code, &CondScript::default(), &g, 100).unwrap();
        assert_eq!(realized, g);
    }

    #[test]
    fn mid_corridor_prefix_moves_goal() {
        let g = corridor();
        let code = Code::parse("Run{move move}").unwrap();
        let (realized, cs) = realize_grid(&code, &CondScript::default(), &g, 100).unwrap();
        assert_eq!(realized.goal, Some((0, 2)));
        assert_eq!(realized.walls(), g.walls());
        assert!(cs.touched_cells(&g).contains(&(0, 2)));
        assert_eq!(crate::world::dissimilarity(&realized, &g).unwrap(), 1);
    }

    #[test]
    fn repeat_until_exit_constraints() {
        let g = corridor();
        let code = Code::parse("Run{RepeatUntil(goal){move}}").unwrap();
        // two iterations then exit
        let script = CondScript(vec![false, false, true]);
        let (realized, cs) = realize_grid(&code, &script, &g, 100).unwrap();
        assert_eq!(realized.goal, Some((0, 2)));
        assert!(cs.goal_forbidden.contains(&(0, 0)));
        assert!(cs.goal_forbidden.contains(&(0, 1)));
    }

    #[test]
    fn goal_revisit_is_unsat() {
        let g = corridor();
        // spins in place: final cell equals the start cell, which the first
        // check already excluded
        let code = Code::parse("Run{RepeatUntil(goal){turnLeft turnLeft turnLeft turnLeft}}").unwrap();
        let script = CondScript(vec![false, true]);
        let err = realize_grid(&code, &script, &g, 100).unwrap_err();
        assert!(matches!(err, SymExecError::Unsat(Unsat::GoalForbidden { .. })));
    }

    #[test]
    fn conflicting_clear_requirements_are_unsat() {
        let g = Grid::karel_from_rows(
            &["...", "..."],
            &["...", "..."],
            Pose::new(0, 0, Dir::East),
            Pose::new(0, 0, Dir::East),
        )
        .unwrap();
        let code = Code::parse_with_dialect(
            "Run{If(frontIsClear){putMarker} If(frontIsClear){putMarker}}",
            Dialect::Karel,
        )
        .unwrap();
        let err = constraints_of(&code, &CondScript(vec![true, false]), &g).unwrap_err();
        assert!(matches!(err, SymExecError::Unsat(Unsat::CellConflict { .. })));
    }

    #[test]
    fn boundary_counts_as_wall() {
        let g = Grid::maze_from_rows(&["..", ".G"], Pose::new(0, 0, Dir::North)).unwrap();
        let code = Code::parse("Run{If(pathAhead){move} turnRight If(pathAhead){move} turnRight}").unwrap();
        // facing north off the boundary: pathAhead false is fine, true is not
        let cs = constraints_of(&code, &CondScript(vec![false, true]), &g).unwrap();
        assert_eq!(cs.final_pose.cell(), (0, 1));
        let err = constraints_of(&code, &CondScript(vec![true, true]), &g).unwrap_err();
        assert_eq!(err, SymExecError::Unsat(Unsat::ClearBeyondBoundary));
    }

    #[test]
    fn marker_constraints_adjust_pre_grid() {
        let g = Grid::karel_from_rows(
            &["...", "..."],
            &["...", "..."],
            Pose::new(0, 0, Dir::East),
            Pose::new(0, 0, Dir::East),
        )
        .unwrap();
        // picking requires a marker the reference pre grid lacks
        let code = Code::parse_with_dialect("Run{pickMarker}", Dialect::Karel).unwrap();
        let (realized, _) = realize_grid(&code, &CondScript::default(), &g, 100).unwrap();
        assert_eq!(realized.markers_pre_at(0, 0), 1);
        assert_eq!(realized.markers_post_at(0, 0), 0);
    }

    #[test]
    fn while_loop_script_places_walls() {
        let g = Grid::karel_from_rows(
            &["....", "...."],
            &["....", "...."],
            Pose::new(0, 0, Dir::East),
            Pose::new(0, 0, Dir::East),
        )
        .unwrap();
        let code = Code::parse_with_dialect("Run{While(frontIsClear){move putMarker}}", Dialect::Karel)
            .unwrap();
        // two iterations, then the exit check demands a wall ahead
        let script = CondScript(vec![true, true, false]);
        let (realized, _) = realize_grid(&code, &script, &g, 100).unwrap();
        assert!(realized.is_wall(0, 3));
        assert_eq!(realized.markers_post_at(0, 1), 1);
        assert_eq!(realized.markers_post_at(0, 2), 1);
        assert_eq!(realized.end_pose, Some(Pose::new(0, 2, Dir::East)));
    }

    #[test]
    fn script_length_mismatch_detected() {
        let g = corridor();
        let code = Code::parse("Run{RepeatUntil(goal){move}}").unwrap();
        assert_eq!(
            constraints_of(&code, &CondScript(vec![false]), &g).unwrap_err(),
            SymExecError::ScriptMismatch
        );
        let straight = Code::parse("Run{move}").unwrap();
        assert_eq!(
            constraints_of(&straight, &CondScript(vec![true]), &g).unwrap_err(),
            SymExecError::ScriptMismatch
        );
    }

    #[test]
    fn minimality_only_touched_cells_differ() {
        let g = Grid::maze_from_rows(
            &["..#.", "....", ".#.G"],
            Pose::new(0, 0, Dir::East),
        )
        .unwrap();
        let code = Code::parse("Run{move turnRight move}").unwrap();
        let (realized, cs) = realize_grid(&code, &CondScript::default(), &g, 100).unwrap();
        let touched = cs.touched_cells(&g);
        for r in 0..g.height {
            for c in 0..g.width {
                if !touched.contains(&(r, c)) {
                    assert_eq!(realized.is_wall(r, c), g.is_wall(r, c));
                }
            }
        }
        assert_eq!(realized.goal, Some((1, 1)));
    }
}
