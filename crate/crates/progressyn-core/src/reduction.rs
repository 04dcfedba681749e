//! Code reduction over grid subsets: removes branches the solution never
//! executes on the chosen grids, and packages the result as a subtask.

use alloc::collections::BTreeSet;
use alloc::format;
use alloc::vec::Vec;
use core::fmt;

use crate::dsl::{AstPath, Block, BlockKind, Code, PathStep};
use crate::interpreter::{self, Outcome};
use crate::world::Task;

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ReductionError {
    EmptySubset,
    BadGridIndex(usize),
    SolutionFails { grid: usize, outcome: Outcome },
    /// The reduced code failed interpreter verification; reduction bug.
    ReducedCodeFails { grid: usize, outcome: Outcome },
}

impl fmt::Display for ReductionError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ReductionError::EmptySubset => f.write_str("grid subset is empty"),
            ReductionError::BadGridIndex(i) => write!(f, "grid index {i} out of range"),
            ReductionError::SolutionFails { grid, outcome } => {
                write!(f, "solution fails on grid {grid}: {outcome:?}")
            }
            ReductionError::ReducedCodeFails { grid, outcome } => {
                write!(f, "internal: reduced code fails on grid {grid}: {outcome:?}")
            }
        }
    }
}

impl core::error::Error for ReductionError {}

#[derive(Clone, Copy)]
enum BodyKind {
    Plain,
    Then,
    Else,
}

fn child(prefix: &AstPath, kind: BodyKind, i: usize) -> AstPath {
    prefix.child(match kind {
        BodyKind::Plain => PathStep::Body(i as u32),
        BodyKind::Then => PathStep::Then(i as u32),
        BodyKind::Else => PathStep::Else(i as u32),
    })
}

/// True iff the first block of a body was ever reached; bodies run
/// sequentially, so this decides whether the body ran at all.
fn body_entered(
    prefix: &AstPath,
    kind: BodyKind,
    executed: &BTreeSet<AstPath>,
) -> bool {
    executed.contains(&child(prefix, kind, 0))
}

fn reduce_body(
    blocks: &[Block],
    prefix: &AstPath,
    kind: BodyKind,
    executed: &BTreeSet<AstPath>,
) -> Vec<Block> {
    let mut out = Vec::new();
    for (i, b) in blocks.iter().enumerate() {
        let path = child(prefix, kind, i);
        if !executed.contains(&path) {
            continue;
        }
        match b {
            Block::Move | Block::TurnLeft | Block::TurnRight | Block::PickMarker | Block::PutMarker => {
                out.push(b.clone())
            }
            Block::Repeat { count, body } => {
                let reduced = reduce_body(body, &path, BodyKind::Plain, executed);
                if !reduced.is_empty() {
                    out.push(Block::Repeat {
                        count: *count,
                        body: reduced,
                    });
                }
            }
            Block::RepeatUntil { cond, body } => {
                if body_entered(&path, BodyKind::Plain, executed) {
                    let reduced = reduce_body(body, &path, BodyKind::Plain, executed);
                    if !reduced.is_empty() {
                        out.push(Block::RepeatUntil {
                            cond: cond.clone(),
                            body: reduced,
                        });
                    }
                }
            }
            Block::While { cond, body } => {
                if body_entered(&path, BodyKind::Plain, executed) {
                    let reduced = reduce_body(body, &path, BodyKind::Plain, executed);
                    if !reduced.is_empty() {
                        out.push(Block::While {
                            cond: cond.clone(),
                            body: reduced,
                        });
                    }
                }
            }
            Block::If { cond, body } => {
                if body_entered(&path, BodyKind::Plain, executed) {
                    let reduced = reduce_body(body, &path, BodyKind::Plain, executed);
                    if !reduced.is_empty() {
                        out.push(Block::If {
                            cond: cond.clone(),
                            body: reduced,
                        });
                    }
                }
            }
            Block::IfElse {
                cond,
                then_body,
                else_body,
            } => {
                let then_ran = body_entered(&path, BodyKind::Then, executed);
                let else_ran = body_entered(&path, BodyKind::Else, executed);
                match (then_ran, else_ran) {
                    (true, true) => out.push(Block::IfElse {
                        cond: cond.clone(),
                        then_body: reduce_body(then_body, &path, BodyKind::Then, executed),
                        else_body: reduce_body(else_body, &path, BodyKind::Else, executed),
                    }),
                    (true, false) => {
                        out.extend(reduce_body(then_body, &path, BodyKind::Then, executed))
                    }
                    (false, true) => {
                        out.extend(reduce_body(else_body, &path, BodyKind::Else, executed))
                    }
                    (false, false) => {}
                }
            }
        }
    }
    out
}

/// Reduced solution code for the grid subset `grid_indices` of `task`:
/// branches never executed on those grids are removed, a never-entered loop
/// is dropped, and an `IfElse` whose single branch runs collapses to that
/// branch. The result is interpreter-verified against every selected grid.
pub fn red_code(
    grid_indices: &[usize],
    task: &Task,
    solution: &Code,
    max_steps: u32,
) -> Result<Code, ReductionError> {
    if grid_indices.is_empty() {
        return Err(ReductionError::EmptySubset);
    }
    let mut executed: BTreeSet<AstPath> = BTreeSet::new();
    for &gi in grid_indices {
        let grid = task.vis.get(gi).ok_or(ReductionError::BadGridIndex(gi))?;
        let (nodes, run) = interpreter::coverage_on_grid(solution, grid, max_steps)
            .map_err(|e| match e {
                interpreter::CoverageError::NotSolving { outcome, .. } => {
                    ReductionError::SolutionFails { grid: gi, outcome }
                }
                interpreter::CoverageError::DialectMismatch => ReductionError::SolutionFails {
                    grid: gi,
                    outcome: Outcome::NotSolved,
                },
            })?;
        debug_assert_eq!(run.outcome, Outcome::Solved);
        executed.extend(nodes);
    }
    let reduced = Code::new(
        solution.dialect,
        reduce_body(&solution.body, &AstPath::default(), BodyKind::Plain, &executed),
    );
    for &gi in grid_indices {
        let grid = &task.vis[gi];
        let run = interpreter::execute(&reduced, grid, max_steps).map_err(|_| {
            ReductionError::ReducedCodeFails {
                grid: gi,
                outcome: Outcome::NotSolved,
            }
        })?;
        if run.outcome != Outcome::Solved {
            return Err(ReductionError::ReducedCodeFails {
                grid: gi,
                outcome: run.outcome,
            });
        }
    }
    Ok(reduced)
}

/// Subtask over a grid subset, paired with its reduced solution. The store
/// and size budget derive from the reduced code.
pub fn subtask_from_grids(
    grid_indices: &[usize],
    task: &Task,
    solution: &Code,
    max_steps: u32,
) -> Result<(Task, Code), ReductionError> {
    let reduced = red_code(grid_indices, task, solution, max_steps)?;
    let vis: Vec<_> = grid_indices.iter().map(|&i| task.vis[i].clone()).collect();
    let mut store = reduced.blocks();
    if store.is_empty() {
        // empty reduced code; keep the store/budget invariants intact
        store.insert(BlockKind::Move);
    }
    let size_budget = reduced.size().max(1);
    let subtask = Task::new(
        format!("{}-g{}", task.id, grid_indices.len()),
        vis,
        store,
        size_budget,
    );
    Ok((subtask, reduced))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dsl::Dialect;
    use crate::world::{task_dissimilarity, Dir, Grid, Pose};
    use alloc::vec;

    fn karel_task_with_branches() -> (Task, Code) {
        // grid 0: marker on the second cell gets picked; grid 1: no markers,
        // the else branch puts one instead
        let g0 = Grid::karel_from_rows(
            &["..", ".1"],
            &["..", ".0"],
            Pose::new(1, 0, Dir::East),
            Pose::new(1, 1, Dir::East),
        )
        .unwrap();
        let g1 = Grid::karel_from_rows(
            &["..", ".."],
            &["..", ".1"],
            Pose::new(1, 0, Dir::East),
            Pose::new(1, 1, Dir::East),
        )
        .unwrap();
        let code = Code::parse_with_dialect(
            "Run{move IfElse(markersPresent){pickMarker}{putMarker}}",
            Dialect::Karel,
        )
        .unwrap();
        let store = code.blocks();
        let task = Task::new("branchy", vec![g0, g1], store, code.size());
        (task, code)
    }

    #[test]
    fn full_coverage_subset_is_identity() {
        let (task, code) = karel_task_with_branches();
        let reduced = red_code(&[0, 1], &task, &code, 100).unwrap();
        assert_eq!(reduced, code);
    }

    #[test]
    fn ifelse_collapses_to_taken_branch() {
        let (task, code) = karel_task_with_branches();
        let reduced = red_code(&[0], &task, &code, 100).unwrap();
        assert_eq!(reduced.serialize(), "Run{move pickMarker}");
        let other = red_code(&[1], &task, &code, 100).unwrap();
        assert_eq!(other.serialize(), "Run{move putMarker}");
    }

    #[test]
    fn unentered_while_is_removed() {
        // grid starts facing a wall, so the While never runs
        let g = Grid::maze_from_rows(&[".#", "G."], Pose::new(0, 0, Dir::East)).unwrap();
        let code = Code::parse("Run{While(pathAhead){move} turnRight move}").unwrap();
        let store = code.blocks();
        let task = Task::new("t", vec![g], store, code.size());
        let reduced = red_code(&[0], &task, &code, 100).unwrap();
        assert_eq!(reduced.serialize(), "Run{turnRight move}");
    }

    #[test]
    fn untaken_if_inside_repeat_is_removed() {
        let g = Grid::karel_from_rows(
            &["...", "..."],
            &["...", "..."],
            Pose::new(0, 0, Dir::East),
            Pose::new(0, 2, Dir::East),
        )
        .unwrap();
        let code = Code::parse_with_dialect(
            "Run{Repeat(2){If(markersPresent){pickMarker} move}}",
            Dialect::Karel,
        )
        .unwrap();
        let store = code.blocks();
        let task = Task::new("t", vec![g], store, code.size());
        let reduced = red_code(&[0], &task, &code, 100).unwrap();
        assert_eq!(reduced.serialize(), "Run{Repeat(2){move}}");
    }

    #[test]
    fn reduction_shrinks_metrics_monotonically() {
        let (task, code) = karel_task_with_branches();
        let r1 = red_code(&[0], &task, &code, 100).unwrap();
        let r2 = red_code(&[0, 1], &task, &code, 100).unwrap();
        assert!(r1.blocks().is_subset(&code.blocks()));
        assert!(r1.blocks().is_subset(&r2.blocks()));
        assert!(r1.size() <= code.size());
        assert!(r1.depth() <= code.depth());
    }

    #[test]
    fn singleton_subtasks_differ() {
        let (task, code) = karel_task_with_branches();
        let (s0, c0) = subtask_from_grids(&[0], &task, &code, 100).unwrap();
        let (s1, c1) = subtask_from_grids(&[1], &task, &code, 100).unwrap();
        assert!(crate::interpreter::solves(&c0, &s0, 100));
        assert!(crate::interpreter::solves(&c1, &s1, 100));
        assert!(s0.store.is_subset(&task.store) && s0.store != task.store);
        assert!(task_dissimilarity(&s0, &s1).unwrap() > 0);
    }
}
