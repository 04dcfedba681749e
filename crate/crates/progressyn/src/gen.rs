//! Seeded generation of solvable tasks for testing and benchmarking.
//!
//! Each template builds grids plus a solution code, then verifies the pair
//! with the interpreter before emitting it. Karel post-states and end poses
//! are computed by running the solution, so templates only have to lay out
//! walls and pre-markers. Generation is deterministic given the seed.

use anyhow::{ensure, Context, Result};
use progressyn_core::dsl::{Block, Code, Condition, Dialect};
use progressyn_core::interpreter::{self, Outcome, DEFAULT_MAX_STEPS};
use progressyn_core::world::{Dir, Grid, Pose, Task};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::dataset::{Corpus, CorpusEntry};

/// Completes a karel grid: runs `code` on the walls/pre-markers of `draft`
/// and fills in the post-markers and end pose from the run.
fn realize_karel(draft: &Grid, code: &Code) -> Result<Grid> {
    let res = interpreter::execute(code, draft, DEFAULT_MAX_STEPS).context("execute")?;
    ensure!(
        matches!(res.outcome, Outcome::Solved | Outcome::NotSolved),
        "solution crashed on template grid: {:?}",
        res.outcome
    );
    let mut pre = Vec::new();
    for r in 0..draft.height {
        for c in 0..draft.width {
            pre.push(draft.markers_pre_at(r, c));
        }
    }
    let mut post = Vec::new();
    for r in 0..draft.height {
        for c in 0..draft.width {
            post.push(res.final_grid.markers_pre_at(r, c));
        }
    }
    Grid::karel(
        draft.width,
        draft.height,
        draft.walls().to_vec(),
        draft.start,
        pre,
        post,
        res.final_pose,
    )
    .context("karel grid")
}

/// Karel grid with the given wall rows ('#'/'.') and explicit pre-markers;
/// post layer is filled by `realize_karel`.
fn karel_draft(rows: &[String], markers: &[(u32, u32, u8)], start: Pose) -> Result<Grid> {
    let pre: Vec<String> = rows
        .iter()
        .enumerate()
        .map(|(r, row)| {
            row.chars()
                .enumerate()
                .map(|(c, ch)| {
                    markers
                        .iter()
                        .find(|&&(mr, mc, _)| (mr, mc) == (r as u32, c as u32))
                        .map(|&(_, _, n)| char::from_digit(n as u32, 10).unwrap())
                        .unwrap_or(ch)
                })
                .collect()
        })
        .collect();
    let pre_refs: Vec<&str> = pre.iter().map(|s| s.as_str()).collect();
    // post layer is a placeholder until realize_karel recomputes it
    Grid::karel_from_rows(&pre_refs, &pre_refs, start, start).context("karel draft")
}

fn entry(id: String, vis: Vec<Grid>, code: Code) -> Result<CorpusEntry> {
    let task = Task::new(id, vis, code.blocks(), code.size());
    ensure!(
        interpreter::solves(&code, &task, DEFAULT_MAX_STEPS),
        "generated code does not solve generated task {}",
        task.id
    );
    Ok(CorpusEntry {
        task,
        code,
        parent_id: None,
        seq_index: None,
        method: None,
    })
}

/// Straight maze corridor solved by `Repeat(len){move}`.
fn maze_straight(id: String, rng: &mut ChaCha8Rng) -> Result<CorpusEntry> {
    let len = rng.gen_range(6..=9u32);
    let row = format!("{}G", ".".repeat(len as usize));
    let walls = "#".repeat(len as usize + 1);
    let g = Grid::maze_from_rows(&[row.as_str(), walls.as_str()], Pose::new(0, 0, Dir::East))?;
    let code = Code::new(
        Dialect::Maze,
        vec![Block::Repeat {
            count: len,
            body: vec![Block::Move],
        }],
    );
    entry(id, vec![g], code)
}

/// L-shaped maze path: a moves east, a turn, b moves south.
fn maze_turn(id: String, rng: &mut ChaCha8Rng) -> Result<CorpusEntry> {
    let a = rng.gen_range(3..=5u32) as usize;
    let b = rng.gen_range(3..=5u32) as usize;
    let width = a + 1;
    let mut rows = vec![".".repeat(width)];
    for r in 1..=b {
        let mut row = "#".repeat(width);
        row.replace_range(a..a + 1, if r == b { "G" } else { "." });
        rows.push(row);
    }
    let row_refs: Vec<&str> = rows.iter().map(|s| s.as_str()).collect();
    let g = Grid::maze_from_rows(&row_refs, Pose::new(0, 0, Dir::East))?;
    let mut body = vec![Block::Repeat {
        count: a as u32,
        body: vec![Block::Move],
    }];
    body.push(Block::TurnRight);
    body.push(Block::Repeat {
        count: b as u32,
        body: vec![Block::Move],
    });
    let code = Code::new(Dialect::Maze, body);
    entry(id, vec![g], code)
}

/// Corridor solved by `RepeatUntil(goal){move}`.
fn maze_repeat_until(id: String, rng: &mut ChaCha8Rng) -> Result<CorpusEntry> {
    let len = rng.gen_range(6..=9u32);
    let row = format!("{}G", ".".repeat(len as usize));
    let walls = "#".repeat(len as usize + 1);
    let g = Grid::maze_from_rows(&[row.as_str(), walls.as_str()], Pose::new(0, 0, Dir::East))?;
    let code = Code::new(
        Dialect::Maze,
        vec![Block::RepeatUntil {
            cond: Condition::Goal,
            body: vec![Block::Move],
        }],
    );
    entry(id, vec![g], code)
}

/// Two maze grids disambiguating an `IfElse(pathAhead)`: grid 1 continues
/// straight to the goal, grid 2 hits a wall and detours south.
fn maze_ifelse_pair(id: String, rng: &mut ChaCha8Rng) -> Result<CorpusEntry> {
    let p = rng.gen_range(3..=5u32) as usize;
    let w = p + 3;
    let straight = {
        let mut row0 = ".".repeat(w);
        row0.replace_range(p + 2..p + 3, "G");
        let walls = "#".repeat(w);
        let rows = [row0.as_str(), walls.as_str(), walls.as_str()];
        Grid::maze_from_rows(&rows, Pose::new(0, 0, Dir::East))?
    };
    let detour = {
        let row0 = format!("{}{}", ".".repeat(p + 1), "#".repeat(w - p - 1));
        let mut row1 = "#".repeat(w);
        row1.replace_range(p..p + 1, ".");
        let mut row2 = "#".repeat(w);
        row2.replace_range(p..p + 1, "G");
        let rows = [row0.as_str(), row1.as_str(), row2.as_str()];
        Grid::maze_from_rows(&rows, Pose::new(0, 0, Dir::East))?
    };
    let code = Code::new(
        Dialect::Maze,
        vec![
            Block::Repeat {
                count: p as u32,
                body: vec![Block::Move],
            },
            Block::IfElse {
                cond: Condition::PathAhead,
                then_body: vec![Block::Move, Block::Move],
                else_body: vec![Block::TurnRight, Block::Move, Block::Move],
            },
        ],
    );
    entry(id, vec![straight, detour], code)
}

/// Karel corridor solved by `Repeat(len){putMarker move}`.
fn karel_straight_markers(id: String, rng: &mut ChaCha8Rng) -> Result<CorpusEntry> {
    let len = rng.gen_range(4..=7u32);
    let rows = vec![
        ".".repeat(len as usize + 1),
        "#".repeat(len as usize + 1),
    ];
    let draft = karel_draft(&rows, &[], Pose::new(0, 0, Dir::East))?;
    let code = Code::new(
        Dialect::Karel,
        vec![Block::Repeat {
            count: len,
            body: vec![Block::PutMarker, Block::Move],
        }],
    );
    let g = realize_karel(&draft, &code)?;
    entry(id, vec![g], code)
}

/// Karel corridor walked by `While(frontIsClear)` after a fixed prefix.
fn karel_while_walk(id: String, rng: &mut ChaCha8Rng) -> Result<CorpusEntry> {
    let p = rng.gen_range(1..=3u32);
    let w = p + rng.gen_range(4..=6u32);
    let rows = vec![".".repeat(w as usize), "#".repeat(w as usize)];
    let draft = karel_draft(&rows, &[], Pose::new(0, 0, Dir::East))?;
    let mut body = vec![Block::Move; p as usize];
    body.push(Block::While {
        cond: Condition::FrontIsClear,
        body: vec![Block::PutMarker, Block::Move],
    });
    let code = Code::new(Dialect::Karel, body);
    let g = realize_karel(&draft, &code)?;
    entry(id, vec![g], code)
}

/// Three karel grids exercising two `If` branches after a `While` walk:
/// grid 1 takes neither branch, grid 2 has a marker at the end of the
/// corridor (first branch), grid 3 has an opening to the north (second).
pub fn karel_branch3(id: String, rng: &mut ChaCha8Rng) -> Result<CorpusEntry> {
    let p = rng.gen_range(2..=5u32);
    let w = p + rng.gen_range(3..=5u32);
    let b2 = rng.gen_range(1..=3usize);
    let b3 = rng.gen_range(1..=3usize);
    let last = (w - 1) as usize;

    let walls_closed = vec![
        "#".repeat(w as usize),
        ".".repeat(w as usize),
        "#".repeat(w as usize),
    ];
    let mut walls_open = walls_closed.clone();
    walls_open[0].replace_range(last..last + 1, ".");
    let start = Pose::new(1, 0, Dir::East);

    let g1 = karel_draft(&walls_closed, &[], start)?;
    let g2 = karel_draft(&walls_closed, &[(1, w - 1, 1)], start)?;
    let g3 = karel_draft(&walls_open, &[], start)?;

    let mut body = vec![Block::Move; p as usize];
    body.push(Block::While {
        cond: Condition::FrontIsClear,
        body: vec![Block::PutMarker, Block::Move],
    });
    body.push(Block::If {
        cond: Condition::MarkersPresent,
        body: vec![Block::PutMarker; b2],
    });
    let mut north = vec![Block::TurnLeft, Block::Move];
    north.extend(vec![Block::PutMarker; b3 - 1]);
    body.push(Block::If {
        cond: Condition::LeftIsClear,
        body: north,
    });
    let code = Code::new(Dialect::Karel, body);

    let vis = vec![
        realize_karel(&g1, &code)?,
        realize_karel(&g2, &code)?,
        realize_karel(&g3, &code)?,
    ];
    entry(id, vis, code)
}

type Template = fn(String, &mut ChaCha8Rng) -> Result<CorpusEntry>;

const MAZE_TEMPLATES: &[(&str, Template)] = &[
    ("maze-straight", maze_straight),
    ("maze-turn", maze_turn),
    ("maze-until", maze_repeat_until),
    ("maze-ifelse", maze_ifelse_pair),
];

const KAREL_TEMPLATES: &[(&str, Template)] = &[
    ("karel-straight", karel_straight_markers),
    ("karel-while", karel_while_walk),
    ("karel-branch3", |id, rng| karel_branch3(id, rng)),
];

/// Generates `count` solvable tasks, cycling through the templates of the
/// requested dialect (both when `dialect` is `None`).
pub fn generate(count: u32, seed: u64, dialect: Option<Dialect>) -> Result<Corpus> {
    let templates: Vec<(&str, Template)> = match dialect {
        Some(Dialect::Maze) => MAZE_TEMPLATES.to_vec(),
        Some(Dialect::Karel) => KAREL_TEMPLATES.to_vec(),
        None => MAZE_TEMPLATES
            .iter()
            .chain(KAREL_TEMPLATES)
            .copied()
            .collect(),
    };
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut corpus = Corpus::default();
    for i in 0..count {
        let (name, f) = templates[i as usize % templates.len()];
        let id = format!("{name}-{i:04}");
        corpus.entries.push(f(id, &mut rng)?);
    }
    Ok(corpus)
}

/// A corpus made entirely from the three-grid karel template; progressions
/// over it separate the synthesis methods cleanly, which makes it a good
/// benchmarking fixture.
pub fn generate_branch3(count: u32, seed: u64) -> Result<Corpus> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut corpus = Corpus::default();
    for i in 0..count {
        corpus
            .entries
            .push(karel_branch3(format!("karel-branch3-{i:04}"), &mut rng)?);
    }
    Ok(corpus)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn generated_tasks_solve_and_are_deterministic() {
        let a = generate(32, 7, None).unwrap();
        let b = generate(32, 7, None).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.entries.len(), 32);
        for e in &a.entries {
            assert!(interpreter::solves(&e.code, &e.task, DEFAULT_MAX_STEPS), "{}", e.task.id);
        }
    }

    #[test]
    fn dialect_filter_is_respected() {
        let mazes = generate(8, 1, Some(Dialect::Maze)).unwrap();
        assert!(mazes.entries.iter().all(|e| e.code.dialect == Dialect::Maze));
        let karels = generate(8, 1, Some(Dialect::Karel)).unwrap();
        assert!(karels.entries.iter().all(|e| e.code.dialect == Dialect::Karel));
    }

    #[test]
    fn branch3_grids_diverge_on_the_two_ifs() {
        let corpus = generate_branch3(4, 3).unwrap();
        for e in &corpus.entries {
            assert_eq!(e.task.n(), 3);
            // grid 2 carries the pre-marker, grid 3 the northern opening
            let g2 = &e.task.vis[1];
            let g3 = &e.task.vis[2];
            let last = g2.width - 1;
            assert!(g2.markers_pre_at(1, last) > 0);
            assert!(!g3.is_wall(0, last));
            assert!(g2.is_wall(0, last));
        }
    }
}
