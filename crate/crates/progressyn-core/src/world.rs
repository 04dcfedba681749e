//! Visual grids and tasks, plus task-level dissimilarity and quality.

use alloc::collections::BTreeSet;
use alloc::string::String;
use alloc::vec::Vec;
use core::fmt;

use crate::dsl::{BlockKind, Code, Dialect};
use crate::interpreter::{self, Outcome};

pub const DEFAULT_MIN_DIM: u32 = 2;
pub const DEFAULT_MAX_DIM: u32 = 16;
/// Marker counts render as a single digit in the text schema.
pub const MAX_MARKERS: u8 = 9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Dir {
    North,
    East,
    South,
    West,
}

impl Dir {
    pub fn left(self) -> Dir {
        match self {
            Dir::North => Dir::West,
            Dir::West => Dir::South,
            Dir::South => Dir::East,
            Dir::East => Dir::North,
        }
    }

    pub fn right(self) -> Dir {
        self.left().left().left()
    }

    /// (row, col) unit offset.
    pub fn delta(self) -> (i32, i32) {
        match self {
            Dir::North => (-1, 0),
            Dir::East => (0, 1),
            Dir::South => (1, 0),
            Dir::West => (0, -1),
        }
    }

    pub fn letter(self) -> char {
        match self {
            Dir::North => 'N',
            Dir::East => 'E',
            Dir::South => 'S',
            Dir::West => 'W',
        }
    }

    pub fn from_letter(c: char) -> Option<Dir> {
        match c {
            'N' => Some(Dir::North),
            'E' => Some(Dir::East),
            'S' => Some(Dir::South),
            'W' => Some(Dir::West),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Pose {
    pub row: u32,
    pub col: u32,
    pub dir: Dir,
}

impl Pose {
    pub fn new(row: u32, col: u32, dir: Dir) -> Pose {
        Pose { row, col, dir }
    }

    pub fn cell(&self) -> (u32, u32) {
        (self.row, self.col)
    }

    /// Cell one step in `dir` from this pose, as signed coordinates (may be
    /// out of bounds).
    pub fn toward(&self, dir: Dir) -> (i32, i32) {
        let (dr, dc) = dir.delta();
        (self.row as i32 + dr, self.col as i32 + dc)
    }

    pub fn ahead(&self) -> (i32, i32) {
        self.toward(self.dir)
    }
}

/// One visual world. Maze grids carry a goal cell; karel grids carry pre/post
/// marker layers and a required end pose. Walls are shared between the karel
/// pre and post worlds.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Grid {
    pub dialect: Dialect,
    pub width: u32,
    pub height: u32,
    walls: Vec<bool>,
    pub start: Pose,
    pub goal: Option<(u32, u32)>,
    pub markers_pre: Vec<u8>,
    pub markers_post: Vec<u8>,
    pub end_pose: Option<Pose>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum GridError {
    BadDimensions { width: u32, height: u32 },
    StartNotFree,
    GoalNotFree,
    MissingGoal,
    MissingEndPose,
    MarkerOverflow { row: u32, col: u32 },
    OutOfBounds { row: u32, col: u32 },
    DialectMismatch,
}

impl fmt::Display for GridError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            GridError::BadDimensions { width, height } => {
                write!(f, "grid dimensions {width}x{height} out of allowed range")
            }
            GridError::StartNotFree => f.write_str("avatar start cell is not free"),
            GridError::GoalNotFree => f.write_str("goal cell is not free"),
            GridError::MissingGoal => f.write_str("maze grid is missing a goal"),
            GridError::MissingEndPose => f.write_str("karel grid is missing an end pose"),
            GridError::MarkerOverflow { row, col } => {
                write!(f, "marker count at ({row},{col}) exceeds the maximum")
            }
            GridError::OutOfBounds { row, col } => write!(f, "cell ({row},{col}) out of bounds"),
            GridError::DialectMismatch => f.write_str("dialect mismatch"),
        }
    }
}

impl core::error::Error for GridError {}

impl Grid {
    pub fn maze(
        width: u32,
        height: u32,
        walls: Vec<bool>,
        start: Pose,
        goal: (u32, u32),
    ) -> Result<Grid, GridError> {
        let g = Grid {
            dialect: Dialect::Maze,
            width,
            height,
            walls,
            start,
            goal: Some(goal),
            markers_pre: Vec::new(),
            markers_post: Vec::new(),
            end_pose: None,
        };
        g.validate()?;
        Ok(g)
    }

    pub fn karel(
        width: u32,
        height: u32,
        walls: Vec<bool>,
        start: Pose,
        markers_pre: Vec<u8>,
        markers_post: Vec<u8>,
        end_pose: Pose,
    ) -> Result<Grid, GridError> {
        let g = Grid {
            dialect: Dialect::Karel,
            width,
            height,
            walls,
            start,
            goal: None,
            markers_pre,
            markers_post,
            end_pose: Some(end_pose),
        };
        g.validate()?;
        Ok(g)
    }

    /// Builds a maze grid from row strings: `#` wall, `.` free, `G` goal.
    pub fn maze_from_rows(rows: &[&str], start: Pose) -> Result<Grid, GridError> {
        let height = rows.len() as u32;
        let width = rows.first().map_or(0, |r| r.chars().count()) as u32;
        let mut walls = Vec::with_capacity((width * height) as usize);
        let mut goal = None;
        for (r, row) in rows.iter().enumerate() {
            for (c, ch) in row.chars().enumerate() {
                walls.push(ch == '#');
                if ch == 'G' {
                    goal = Some((r as u32, c as u32));
                }
            }
        }
        Grid::maze(width, height, walls, start, goal.ok_or(GridError::MissingGoal)?)
    }

    /// Builds a karel grid from pre/post row strings: `#` wall, `.` free,
    /// digits for marker counts. Walls must agree between layers.
    pub fn karel_from_rows(
        pre: &[&str],
        post: &[&str],
        start: Pose,
        end_pose: Pose,
    ) -> Result<Grid, GridError> {
        let height = pre.len() as u32;
        let width = pre.first().map_or(0, |r| r.chars().count()) as u32;
        let parse_layer = |rows: &[&str]| -> (Vec<bool>, Vec<u8>) {
            let mut walls = Vec::new();
            let mut markers = Vec::new();
            for row in rows {
                for ch in row.chars() {
                    walls.push(ch == '#');
                    markers.push(ch.to_digit(10).unwrap_or(0) as u8);
                }
            }
            (walls, markers)
        };
        let (walls, markers_pre) = parse_layer(pre);
        let (_, markers_post) = parse_layer(post);
        Grid::karel(width, height, walls, start, markers_pre, markers_post, end_pose)
    }

    pub fn validate(&self) -> Result<(), GridError> {
        self.validate_with_bounds(DEFAULT_MIN_DIM, DEFAULT_MAX_DIM)
    }

    pub fn validate_with_bounds(&self, min_dim: u32, max_dim: u32) -> Result<(), GridError> {
        let area = (self.width * self.height) as usize;
        if self.width < min_dim || self.width > max_dim || self.height < min_dim || self.height > max_dim
        {
            return Err(GridError::BadDimensions {
                width: self.width,
                height: self.height,
            });
        }
        if self.walls.len() != area {
            return Err(GridError::BadDimensions {
                width: self.width,
                height: self.height,
            });
        }
        if !self.in_bounds(self.start.row as i32, self.start.col as i32)
            || self.is_wall(self.start.row, self.start.col)
        {
            return Err(GridError::StartNotFree);
        }
        match self.dialect {
            Dialect::Maze => {
                let (r, c) = self.goal.ok_or(GridError::MissingGoal)?;
                if !self.in_bounds(r as i32, c as i32) {
                    return Err(GridError::OutOfBounds { row: r, col: c });
                }
                if self.is_wall(r, c) {
                    return Err(GridError::GoalNotFree);
                }
            }
            Dialect::Karel => {
                if self.markers_pre.len() != area || self.markers_post.len() != area {
                    return Err(GridError::BadDimensions {
                        width: self.width,
                        height: self.height,
                    });
                }
                let end = self.end_pose.ok_or(GridError::MissingEndPose)?;
                if !self.in_bounds(end.row as i32, end.col as i32) {
                    return Err(GridError::OutOfBounds {
                        row: end.row,
                        col: end.col,
                    });
                }
                for (i, (&pre, &post)) in
                    self.markers_pre.iter().zip(&self.markers_post).enumerate()
                {
                    if pre > MAX_MARKERS || post > MAX_MARKERS {
                        return Err(GridError::MarkerOverflow {
                            row: i as u32 / self.width,
                            col: i as u32 % self.width,
                        });
                    }
                }
            }
        }
        Ok(())
    }

    pub fn in_bounds(&self, row: i32, col: i32) -> bool {
        row >= 0 && col >= 0 && (row as u32) < self.height && (col as u32) < self.width
    }

    fn idx(&self, row: u32, col: u32) -> usize {
        (row * self.width + col) as usize
    }

    pub fn is_wall(&self, row: u32, col: u32) -> bool {
        self.walls[self.idx(row, col)]
    }

    pub fn set_wall(&mut self, row: u32, col: u32, wall: bool) {
        let i = self.idx(row, col);
        self.walls[i] = wall;
    }

    /// Free and inside the grid; boundary counts as blocked.
    pub fn is_clear(&self, row: i32, col: i32) -> bool {
        self.in_bounds(row, col) && !self.is_wall(row as u32, col as u32)
    }

    pub fn markers_pre_at(&self, row: u32, col: u32) -> u8 {
        self.markers_pre[self.idx(row, col)]
    }

    pub fn set_markers_pre(&mut self, row: u32, col: u32, count: u8) {
        let i = self.idx(row, col);
        self.markers_pre[i] = count;
    }

    pub fn markers_post_at(&self, row: u32, col: u32) -> u8 {
        self.markers_post[self.idx(row, col)]
    }

    pub fn set_markers_post(&mut self, row: u32, col: u32, count: u8) {
        let i = self.idx(row, col);
        self.markers_post[i] = count;
    }

    pub fn walls(&self) -> &[bool] {
        &self.walls
    }
}

/// Hamming-style grid dissimilarity. Same-dimension grids compare cell kinds,
/// avatar start position and direction, and the dialect-specific components
/// (goal cell for maze, pre/post marker layers for karel). Different
/// dimensions compare the overlap anchored at (0,0) and count every
/// non-overlapping cell as a mismatch.
pub fn dissimilarity(a: &Grid, b: &Grid) -> Result<u32, GridError> {
    if a.dialect != b.dialect {
        return Err(GridError::DialectMismatch);
    }
    let mut d = 0u32;
    let ow = a.width.min(b.width);
    let oh = a.height.min(b.height);
    for r in 0..oh {
        for c in 0..ow {
            if a.is_wall(r, c) != b.is_wall(r, c) {
                d += 1;
            }
        }
    }
    let overlap = ow * oh;
    d += a.width * a.height - overlap;
    d += b.width * b.height - overlap;
    if a.start.cell() != b.start.cell() {
        d += 1;
    }
    if a.start.dir != b.start.dir {
        d += 1;
    }
    match a.dialect {
        Dialect::Maze => {
            if a.goal != b.goal {
                d += 1;
            }
        }
        Dialect::Karel => {
            for r in 0..oh {
                for c in 0..ow {
                    if a.markers_pre_at(r, c) != b.markers_pre_at(r, c) {
                        d += 1;
                    }
                    if a.markers_post_at(r, c) != b.markers_post_at(r, c) {
                        d += 1;
                    }
                }
            }
        }
    }
    Ok(d)
}

/// A programming task: grids to solve, the allowed block store, and the
/// solution size budget.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Task {
    pub id: String,
    pub vis: Vec<Grid>,
    pub store: BTreeSet<BlockKind>,
    pub size_budget: u32,
}

impl Task {
    pub fn new(
        id: impl Into<String>,
        vis: Vec<Grid>,
        store: BTreeSet<BlockKind>,
        size_budget: u32,
    ) -> Task {
        debug_assert!(!vis.is_empty());
        debug_assert!(size_budget >= 1);
        Task {
            id: id.into(),
            vis,
            store,
            size_budget,
        }
    }

    pub fn n(&self) -> u32 {
        self.vis.len() as u32
    }

    pub fn dialect(&self) -> Dialect {
        self.vis[0].dialect
    }
}

/// Task dissimilarity: every grid of the larger task is matched to the most
/// similar grid of the smaller one and the distances summed; symmetric by
/// construction. Used only comparatively.
pub fn task_dissimilarity(a: &Task, b: &Task) -> Result<u32, GridError> {
    if a.dialect() != b.dialect() {
        return Err(GridError::DialectMismatch);
    }
    let (big, small) = if a.vis.len() >= b.vis.len() {
        (a, b)
    } else {
        (b, a)
    };
    let mut total = 0u32;
    for g in &big.vis {
        let mut best = u32::MAX;
        for h in &small.vis {
            best = best.min(dissimilarity(g, h)?);
        }
        total += best;
    }
    Ok(total)
}

/// Weights and threshold for the task quality score. The score is a
/// [0,1]-weighted combination of execution features, averaged over grids.
#[derive(Debug, Clone, PartialEq)]
pub struct QualityConfig {
    pub w_coverage: f64,
    pub w_trajectory: f64,
    pub w_distinct: f64,
    pub w_balance: f64,
    pub threshold: f64,
}

impl Default for QualityConfig {
    fn default() -> Self {
        QualityConfig {
            w_coverage: 0.4,
            w_trajectory: 0.3,
            w_distinct: 0.2,
            w_balance: 0.1,
            threshold: 0.5,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum QualityError {
    DialectMismatch,
    ExecutionFailed { grid: usize, outcome: Outcome },
}

impl fmt::Display for QualityError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            QualityError::DialectMismatch => f.write_str("dialect mismatch"),
            QualityError::ExecutionFailed { grid, outcome } => {
                write!(f, "solution does not solve grid {grid}: {outcome:?}")
            }
        }
    }
}

impl core::error::Error for QualityError {}

/// Quality score of a (task, solution) pair and whether it clears the
/// configured threshold.
pub fn quality(
    task: &Task,
    solution: &Code,
    cfg: &QualityConfig,
    max_steps: u32,
) -> Result<(f64, bool), QualityError> {
    if solution.dialect != task.dialect() {
        return Err(QualityError::DialectMismatch);
    }
    let mut total = 0.0;
    for (gi, grid) in task.vis.iter().enumerate() {
        let run = interpreter::execute(solution, grid, max_steps)
            .map_err(|_| QualityError::DialectMismatch)?;
        if run.outcome != Outcome::Solved {
            return Err(QualityError::ExecutionFailed {
                grid: gi,
                outcome: run.outcome,
            });
        }
        let area = (grid.width * grid.height) as f64;
        let (covered, _) = interpreter::coverage_on_grid(solution, grid, max_steps)
            .expect("solved grid must be coverable");
        let node_count = solution.node_count();
        let coverage = if node_count == 0 {
            1.0
        } else {
            covered.len() as f64 / node_count as f64
        };
        let trajectory = (run.moves as f64 / area).min(1.0);
        let distinct = (run.visited_cells.len() as f64 / area).min(1.0);
        let turns_moves = run.turns + run.moves;
        let balance = if turns_moves == 0 {
            0.0
        } else {
            1.0 - (run.turns as f64 - run.moves as f64).abs() / turns_moves as f64
        };
        total += cfg.w_coverage * coverage
            + cfg.w_trajectory * trajectory
            + cfg.w_distinct * distinct
            + cfg.w_balance * balance;
    }
    let score = total / task.vis.len() as f64;
    Ok((score, score >= cfg.threshold))
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    fn simple_maze() -> Grid {
        Grid::maze_from_rows(
            &["....", ".##.", "...G"],
            Pose::new(0, 0, Dir::East),
        )
        .unwrap()
    }

    #[test]
    fn dissimilarity_identity() {
        let g = simple_maze();
        assert_eq!(dissimilarity(&g, &g).unwrap(), 0);
    }

    #[test]
    fn dissimilarity_single_wall_toggle() {
        let g = simple_maze();
        let mut h = g.clone();
        h.set_wall(1, 1, false);
        assert_eq!(dissimilarity(&g, &h).unwrap(), 1);
    }

    #[test]
    fn dissimilarity_goal_moved_and_wall_toggled() {
        let g = simple_maze();
        let mut h = g.clone();
        h.set_wall(1, 2, false);
        h.goal = Some((2, 2));
        // one cell kind mismatch + one goal mismatch, counted by hand
        assert_eq!(dissimilarity(&g, &h).unwrap(), 2);
    }

    #[test]
    fn dissimilarity_is_symmetric_on_mixed_dims() {
        let g = simple_maze();
        let h = Grid::maze_from_rows(&["..", ".G"], Pose::new(0, 0, Dir::East)).unwrap();
        let d1 = dissimilarity(&g, &h).unwrap();
        let d2 = dissimilarity(&h, &g).unwrap();
        assert_eq!(d1, d2);
        // 8 non-overlapping cells of g, one wall mismatch in the 2x2
        // overlap at (1,1), and the goal mismatch
        assert_eq!(d1, 10);
    }

    #[test]
    fn dialect_mismatch_rejected() {
        let g = simple_maze();
        let k = Grid::karel_from_rows(
            &["...", "..."],
            &["...", "..1"],
            Pose::new(0, 0, Dir::East),
            Pose::new(1, 2, Dir::East),
        )
        .unwrap();
        assert_eq!(dissimilarity(&g, &k), Err(GridError::DialectMismatch));
    }

    fn single_grid_task(g: Grid) -> Task {
        let store: BTreeSet<BlockKind> = BlockKind::ALL.into_iter().collect();
        Task::new("t", vec![g], store, 10)
    }

    #[test]
    fn task_dissimilarity_reduces_to_grid() {
        let g = simple_maze();
        let mut h = g.clone();
        h.set_wall(1, 1, false);
        let ta = single_grid_task(g.clone());
        let tb = single_grid_task(h);
        assert_eq!(task_dissimilarity(&ta, &ta).unwrap(), 0);
        assert_eq!(
            task_dissimilarity(&ta, &tb).unwrap(),
            dissimilarity(&ta.vis[0], &tb.vis[0]).unwrap()
        );
    }

    #[test]
    fn task_dissimilarity_matches_alignment_oracle() {
        let g = simple_maze();
        let mut h = g.clone();
        h.set_wall(1, 1, false);
        let mut k = g.clone();
        k.goal = Some((0, 3));
        let store: BTreeSet<BlockKind> = BlockKind::ALL.into_iter().collect();
        let two = Task::new("a", vec![h.clone(), k.clone()], store.clone(), 10);
        let one = Task::new("b", vec![g.clone()], store, 10);
        // brute force: every grid of the 2-grid task aligned to its best
        // counterpart in the 1-grid task
        let expect = dissimilarity(&h, &g).unwrap() + dissimilarity(&k, &g).unwrap();
        assert_eq!(task_dissimilarity(&two, &one).unwrap(), expect);
        assert_eq!(task_dissimilarity(&one, &two).unwrap(), expect);
    }
}
