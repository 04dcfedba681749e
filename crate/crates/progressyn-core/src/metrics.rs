//! Scalar measures over codes, tasks, and progressions.

use alloc::vec::Vec;
use core::fmt;

use crate::dsl::Code;
use crate::progression::Progression;
use crate::world::{task_dissimilarity, Task};

pub const DEFAULT_KAPPA: u32 = 1000;

/// `kappa * depth + size`.
pub fn code_complexity(code: &Code, kappa: u32) -> u64 {
    kappa as u64 * code.depth() as u64 + code.size() as u64
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum TaskComplexityError {
    EmptySolutionSet,
    NonSolvingMember { index: usize },
}

impl fmt::Display for TaskComplexityError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            TaskComplexityError::EmptySolutionSet => f.write_str("solution set is empty"),
            TaskComplexityError::NonSolvingMember { index } => {
                write!(f, "solution {index} does not solve the task")
            }
        }
    }
}

impl core::error::Error for TaskComplexityError {}

/// Minimum code complexity over a representative solution set.
pub fn task_complexity(
    task: &Task,
    solutions: &[Code],
    kappa: u32,
    max_steps: u32,
) -> Result<u64, TaskComplexityError> {
    if solutions.is_empty() {
        return Err(TaskComplexityError::EmptySolutionSet);
    }
    let mut best = u64::MAX;
    for (i, c) in solutions.iter().enumerate() {
        if !crate::interpreter::solves(c, task, max_steps) {
            return Err(TaskComplexityError::NonSolvingMember { index: i });
        }
        best = best.min(code_complexity(c, kappa));
    }
    Ok(best)
}

/// Worst-case complexity jump of a sequence of code complexities: the max
/// over positions of the distance to the closest earlier complexity, with a
/// virtual empty-program start of complexity `kappa`.
pub fn jump_objective(complexities: &[u64], kappa: u32) -> i64 {
    let mut worst = i64::MIN;
    for (k, &c) in complexities.iter().enumerate() {
        let mut best_jump = c as i64 - kappa as i64;
        for &earlier in &complexities[..k] {
            best_jump = best_jump.min(c as i64 - earlier as i64);
        }
        worst = worst.max(best_jump);
    }
    if worst == i64::MIN {
        0
    } else {
        worst
    }
}

/// Worst-case complexity jump in the solution codes of a progression.
pub fn progression_complexity(p: &Progression, kappa: u32) -> i64 {
    let cs: Vec<u64> = p
        .items
        .iter()
        .map(|it| code_complexity(&it.code, kappa))
        .collect();
    jump_objective(&cs, kappa)
}

/// Normalized task diversity: pairwise task dissimilarity scaled by the
/// summed dissimilarity to the reference. Zero for length-1 progressions and
/// when the denominator vanishes (e.g. all items identical to the reference).
pub fn normalized_diversity(p: &Progression) -> f64 {
    let k = p.items.len();
    if k < 2 {
        return 0.0;
    }
    let mut pairwise = 0u64;
    for i in 0..k {
        for j in 0..i {
            pairwise += task_dissimilarity(&p.items[i].task, &p.items[j].task)
                .expect("progression tasks share a dialect") as u64;
        }
    }
    let mut to_ref = 0u64;
    for it in &p.items {
        to_ref += task_dissimilarity(&it.task, &p.reference.0)
            .expect("progression tasks share a dialect") as u64;
    }
    if to_ref == 0 {
        return 0.0;
    }
    (2.0 / (k as f64 - 1.0)) * pairwise as f64 / to_ref as f64
}
