//! On-disk JSON schemas and their conversions to the core types.
//!
//! Grids are stored as row strings: `#` wall, `.` free cell, `G` goal (maze),
//! digits `1`-`9` for marker counts (karel). The avatar is `{r, c, dir}` with
//! `dir` one of `N E S W`. Karel grids carry a `post_rows` layer and an end
//! avatar; maze grids carry neither. All structs serialize with fixed field
//! order, so equal values produce byte-identical JSON.

use std::fmt;

use progressyn_core::dsl::{BlockKind, Code, Dialect, ParseError};
use progressyn_core::metrics;
use progressyn_core::progression::{Progression, StageCounts};
use progressyn_core::world::{self, Dir, Grid, GridError, Pose, Task};
use serde::{Deserialize, Serialize};

#[derive(Debug)]
pub enum FormatError {
    BadDir(char),
    BadCell { row: usize, col: usize, ch: char },
    MissingGoal,
    MissingPostRows,
    MissingEndAvatar,
    RaggedRows,
    BadDialect(String),
    UnknownBlock(String),
    Grid(GridError),
    Code(ParseError),
}

impl fmt::Display for FormatError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            FormatError::BadDir(c) => write!(f, "bad direction {c:?}, expected N/E/S/W"),
            FormatError::BadCell { row, col, ch } => {
                write!(f, "bad cell character {ch:?} at row {row}, col {col}")
            }
            FormatError::MissingGoal => f.write_str("maze grid has no G cell"),
            FormatError::MissingPostRows => f.write_str("karel grid needs post_rows"),
            FormatError::MissingEndAvatar => f.write_str("karel grid needs end_avatar"),
            FormatError::RaggedRows => f.write_str("grid rows differ in length"),
            FormatError::BadDialect(s) => write!(f, "bad dialect {s:?}, expected maze or karel"),
            FormatError::UnknownBlock(s) => write!(f, "unknown block name {s:?}"),
            FormatError::Grid(e) => write!(f, "invalid grid: {e}"),
            FormatError::Code(e) => write!(f, "invalid code: {e}"),
        }
    }
}

impl std::error::Error for FormatError {}

impl From<GridError> for FormatError {
    fn from(e: GridError) -> Self {
        FormatError::Grid(e)
    }
}

impl From<ParseError> for FormatError {
    fn from(e: ParseError) -> Self {
        FormatError::Code(e)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct PoseJson {
    pub r: u32,
    pub c: u32,
    pub dir: char,
}

impl PoseJson {
    pub fn from_pose(p: &Pose) -> PoseJson {
        PoseJson {
            r: p.row,
            c: p.col,
            dir: p.dir.letter(),
        }
    }

    pub fn to_pose(&self) -> Result<Pose, FormatError> {
        let dir = Dir::from_letter(self.dir).ok_or(FormatError::BadDir(self.dir))?;
        Ok(Pose::new(self.r, self.c, dir))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridJson {
    pub dialect: String,
    pub rows: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub post_rows: Option<Vec<String>>,
    pub avatar: PoseJson,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub end_avatar: Option<PoseJson>,
}

fn layer_rows(grid: &Grid, markers: impl Fn(u32, u32) -> u8) -> Vec<String> {
    let mut rows = Vec::with_capacity(grid.height as usize);
    for r in 0..grid.height {
        let mut row = String::with_capacity(grid.width as usize);
        for c in 0..grid.width {
            let ch = if grid.is_wall(r, c) {
                '#'
            } else if grid.dialect == Dialect::Maze && grid.goal == Some((r, c)) {
                'G'
            } else {
                match markers(r, c) {
                    0 => '.',
                    n => char::from_digit(n as u32, 10).unwrap_or('.'),
                }
            };
            row.push(ch);
        }
        rows.push(row);
    }
    rows
}

impl GridJson {
    pub fn from_grid(grid: &Grid) -> GridJson {
        match grid.dialect {
            Dialect::Maze => GridJson {
                dialect: "maze".into(),
                rows: layer_rows(grid, |_, _| 0),
                post_rows: None,
                avatar: PoseJson::from_pose(&grid.start),
                end_avatar: None,
            },
            Dialect::Karel => GridJson {
                dialect: "karel".into(),
                rows: layer_rows(grid, |r, c| grid.markers_pre_at(r, c)),
                post_rows: Some(layer_rows(grid, |r, c| grid.markers_post_at(r, c))),
                avatar: PoseJson::from_pose(&grid.start),
                end_avatar: grid.end_pose.as_ref().map(PoseJson::from_pose),
            },
        }
    }

    pub fn to_grid(&self) -> Result<Grid, FormatError> {
        let height = self.rows.len() as u32;
        let width = self.rows.first().map_or(0, |r| r.chars().count()) as u32;
        if self.rows.iter().any(|r| r.chars().count() as u32 != width) {
            return Err(FormatError::RaggedRows);
        }
        type Layer = (Vec<bool>, Vec<u8>, Option<(u32, u32)>);
        let parse_layer = |rows: &[String]| -> Result<Layer, FormatError> {
            let mut walls = Vec::new();
            let mut markers = Vec::new();
            let mut goal = None;
            for (ri, row) in rows.iter().enumerate() {
                for (ci, ch) in row.chars().enumerate() {
                    let (wall, m) = match ch {
                        '#' => (true, 0),
                        '.' => (false, 0),
                        'G' => {
                            goal = Some((ri as u32, ci as u32));
                            (false, 0)
                        }
                        d if d.is_ascii_digit() => (false, d as u8 - b'0'),
                        other => {
                            return Err(FormatError::BadCell {
                                row: ri,
                                col: ci,
                                ch: other,
                            })
                        }
                    };
                    walls.push(wall);
                    markers.push(m);
                }
            }
            Ok((walls, markers, goal))
        };
        let start = self.avatar.to_pose()?;
        match self.dialect.as_str() {
            "maze" => {
                let (walls, _, goal) = parse_layer(&self.rows)?;
                let goal = goal.ok_or(FormatError::MissingGoal)?;
                Ok(Grid::maze(width, height, walls, start, goal)?)
            }
            "karel" => {
                let (walls, pre, _) = parse_layer(&self.rows)?;
                let post_rows = self.post_rows.as_ref().ok_or(FormatError::MissingPostRows)?;
                if post_rows.len() as u32 != height
                    || post_rows.iter().any(|r| r.chars().count() as u32 != width)
                {
                    return Err(FormatError::RaggedRows);
                }
                let (_, post, _) = parse_layer(post_rows)?;
                let end = self
                    .end_avatar
                    .as_ref()
                    .ok_or(FormatError::MissingEndAvatar)?
                    .to_pose()?;
                Ok(Grid::karel(width, height, walls, start, pre, post, end)?)
            }
            other => Err(FormatError::BadDialect(other.into())),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TaskJson {
    pub id: String,
    pub grids: Vec<GridJson>,
    pub store: Vec<String>,
    pub size_budget: u32,
}

impl TaskJson {
    pub fn from_task(task: &Task) -> TaskJson {
        TaskJson {
            id: task.id.clone(),
            grids: task.vis.iter().map(GridJson::from_grid).collect(),
            store: task.store.iter().map(|k| k.name().to_string()).collect(),
            size_budget: task.size_budget,
        }
    }

    pub fn to_task(&self) -> Result<Task, FormatError> {
        let vis = self
            .grids
            .iter()
            .map(|g| g.to_grid())
            .collect::<Result<Vec<_>, _>>()?;
        let store = self
            .store
            .iter()
            .map(|s| BlockKind::from_name(s).ok_or_else(|| FormatError::UnknownBlock(s.clone())))
            .collect::<Result<_, _>>()?;
        Ok(Task::new(self.id.clone(), vis, store, self.size_budget))
    }
}

/// One line of a JSON-lines corpus file. Augmented items carry their source
/// task and position so reports can be recomputed from the file alone.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorpusLine {
    pub task: TaskJson,
    pub code: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub parent_id: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seq_index: Option<u32>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub method: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProgressionItemJson {
    pub task: TaskJson,
    pub code: String,
    pub complexity: u64,
    pub quality: f64,
    pub dissimilarity_to_ref: u32,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProgressionJson {
    pub method: String,
    pub kappa: u32,
    pub objective: i64,
    pub items: Vec<ProgressionItemJson>,
    pub reference_task: TaskJson,
    pub reference_code: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub stage_counts: Option<StageCountsJson>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct StageCountsJson {
    pub m_all: u32,
    pub m_filter: u32,
    pub m_se: u32,
    pub dropped_unsat: u32,
}

impl From<StageCounts> for StageCountsJson {
    fn from(c: StageCounts) -> Self {
        StageCountsJson {
            m_all: c.m_all,
            m_filter: c.m_filter,
            m_se: c.m_se,
            dropped_unsat: c.dropped_unsat,
        }
    }
}

/// Quality scores are written with fixed precision so output is stable.
fn round4(x: f64) -> f64 {
    (x * 10_000.0).round() / 10_000.0
}

pub fn progression_json(
    p: &Progression,
    method: &str,
    kappa: u32,
    max_steps: u32,
    counts: Option<StageCounts>,
) -> ProgressionJson {
    let qcfg = world::QualityConfig::default();
    let items = p
        .items
        .iter()
        .map(|it| ProgressionItemJson {
            task: TaskJson::from_task(&it.task),
            code: it.code.serialize(),
            complexity: metrics::code_complexity(&it.code, kappa),
            quality: round4(
                world::quality(&it.task, &it.code, &qcfg, max_steps)
                    .map(|(s, _)| s)
                    .unwrap_or(0.0),
            ),
            dissimilarity_to_ref: world::task_dissimilarity(&it.task, &p.reference.0)
                .unwrap_or(u32::MAX),
        })
        .collect();
    ProgressionJson {
        method: method.to_string(),
        kappa,
        objective: metrics::progression_complexity(p, kappa),
        items,
        reference_task: TaskJson::from_task(&p.reference.0),
        reference_code: p.reference.1.serialize(),
        stage_counts: counts.map(Into::into),
    }
}

/// Trace export for debugging and golden tests.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceJson {
    pub actions: Vec<TraceActionJson>,
    pub conditions: Vec<TraceCondJson>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceActionJson {
    pub tau: u32,
    pub kind: String,
    pub path: String,
    pub valid_cut: bool,
    pub avatar: PoseJson,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceCondJson {
    pub after_step: u32,
    pub cond: String,
    pub path: String,
    pub outcome: bool,
}

pub fn trace_json(t: &progressyn_core::interpreter::Trace) -> TraceJson {
    let actions = t
        .steps
        .iter()
        .zip(&t.actions)
        .map(|(step, (kind, path))| TraceActionJson {
            tau: step.tau,
            kind: kind.name().to_string(),
            path: path.to_string(),
            valid_cut: step.valid_cut,
            avatar: PoseJson::from_pose(&step.grid_state.start),
        })
        .collect();
    let conditions = t
        .conditions
        .iter()
        .map(|c| TraceCondJson {
            after_step: c.after_step,
            cond: c.cond.to_string(),
            path: c.path.to_string(),
            outcome: c.outcome,
        })
        .collect();
    TraceJson {
        actions,
        conditions,
    }
}

pub fn parse_code(text: &str, dialect: Option<Dialect>) -> Result<Code, FormatError> {
    let code = match dialect {
        Some(d) => Code::parse_with_dialect(text.trim(), d)?,
        None => Code::parse(text.trim())?,
    };
    Ok(code)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn maze() -> Grid {
        Grid::maze_from_rows(&["..#", ".G#", "..."], Pose::new(0, 0, Dir::East)).unwrap()
    }

    fn karel() -> Grid {
        Grid::karel_from_rows(
            &["1..", ".#2"],
            &["0..", ".#3"],
            Pose::new(0, 0, Dir::East),
            Pose::new(0, 2, Dir::South),
        )
        .unwrap()
    }

    #[test]
    fn maze_grid_round_trips() {
        let g = maze();
        let j = GridJson::from_grid(&g);
        assert_eq!(j.rows, vec!["..#", ".G#", "..."]);
        assert_eq!(j.to_grid().unwrap(), g);
    }

    #[test]
    fn karel_grid_round_trips() {
        let g = karel();
        let j = GridJson::from_grid(&g);
        assert_eq!(j.rows, vec!["1..", ".#2"]);
        // zero markers render as '.', also in the post layer
        assert_eq!(j.post_rows.as_deref().unwrap(), vec!["...", ".#3"]);
        assert_eq!(j.to_grid().unwrap(), g);
    }

    #[test]
    fn task_round_trips_through_json_text() {
        let code = Code::parse("Run{move move}").unwrap();
        let task = Task::new("t1", vec![maze()], code.blocks(), 4);
        let j = TaskJson::from_task(&task);
        let text = serde_json::to_string(&j).unwrap();
        let back: TaskJson = serde_json::from_str(&text).unwrap();
        assert_eq!(back.to_task().unwrap(), task);
    }

    #[test]
    fn bad_cells_are_reported_with_position() {
        let j = GridJson {
            dialect: "maze".into(),
            rows: vec!["..".into(), ".x".into()],
            post_rows: None,
            avatar: PoseJson { r: 0, c: 0, dir: 'E' },
            end_avatar: None,
        };
        match j.to_grid() {
            Err(FormatError::BadCell { row: 1, col: 1, ch: 'x' }) => {}
            other => panic!("expected BadCell, got {other:?}"),
        }
    }
}
