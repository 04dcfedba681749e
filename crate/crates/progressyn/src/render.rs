//! Text and SVG rendering of grids and execution traces.
//!
//! ASCII frames use the corpus row characters (`#` wall, `.` free, `G` goal,
//! digits for markers) with the avatar overlaid as `^`, `>`, `v`, or `<`.

use std::fmt::Write as _;

use progressyn_core::dsl::{Code, Dialect};
use progressyn_core::interpreter;
use progressyn_core::world::{Dir, Grid, Pose};

fn avatar_char(dir: Dir) -> char {
    match dir {
        Dir::North => '^',
        Dir::East => '>',
        Dir::South => 'v',
        Dir::West => '<',
    }
}

fn cell_char(grid: &Grid, r: u32, c: u32, markers: Option<&dyn Fn(u32, u32) -> u8>) -> char {
    if grid.is_wall(r, c) {
        return '#';
    }
    if grid.dialect == Dialect::Maze && grid.goal == Some((r, c)) {
        return 'G';
    }
    if let Some(m) = markers {
        let n = m(r, c);
        if n > 0 {
            return char::from_digit(n as u32, 10).unwrap_or('9');
        }
    }
    '.'
}

/// One ASCII frame: the grid with `pose` overlaid. For karel grids the
/// marker counts come from `markers` (current state), for mazes pass `None`.
pub fn ascii_frame(grid: &Grid, pose: Pose, markers: Option<&dyn Fn(u32, u32) -> u8>) -> String {
    let mut out = String::new();
    for r in 0..grid.height {
        for c in 0..grid.width {
            if (r, c) == (pose.row, pose.col) {
                out.push(avatar_char(pose.dir));
            } else {
                out.push(cell_char(grid, r, c, markers));
            }
        }
        out.push('\n');
    }
    out
}

/// The grid's initial state as an ASCII frame.
pub fn ascii_grid(grid: &Grid) -> String {
    let markers = |r: u32, c: u32| grid.markers_pre_at(r, c);
    let m: Option<&dyn Fn(u32, u32) -> u8> = match grid.dialect {
        Dialect::Karel => Some(&markers),
        Dialect::Maze => None,
    };
    ascii_frame(grid, grid.start, m)
}

/// Frames of a full run: the initial state plus one frame per action.
pub fn ascii_run(code: &Code, grid: &Grid, max_steps: u32) -> Result<Vec<String>, String> {
    let trace = interpreter::trace(code, grid, max_steps).map_err(|e| format!("{e:?}"))?;
    let mut frames = Vec::with_capacity(trace.steps.len() + 1);
    frames.push(ascii_grid(grid));
    for step in &trace.steps {
        let state = &step.grid_state;
        let markers = |r: u32, c: u32| state.markers_pre_at(r, c);
        let m: Option<&dyn Fn(u32, u32) -> u8> = match grid.dialect {
            Dialect::Karel => Some(&markers),
            Dialect::Maze => None,
        };
        frames.push(ascii_frame(grid, state.start, m));
    }
    Ok(frames)
}

const CELL: u32 = 24;

/// A static SVG of the grid's initial state. Walls are dark squares, the
/// goal is green, markers are numbered circles, the avatar an arrow glyph.
pub fn svg_grid(grid: &Grid) -> String {
    let w = grid.width * CELL;
    let h = grid.height * CELL;
    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{w}" height="{h}" viewBox="0 0 {w} {h}">"#
    );
    let _ = writeln!(s, r#"<rect width="{w}" height="{h}" fill="white"/>"#);
    for r in 0..grid.height {
        for c in 0..grid.width {
            let x = c * CELL;
            let y = r * CELL;
            if grid.is_wall(r, c) {
                let _ = writeln!(
                    s,
                    r##"<rect x="{x}" y="{y}" width="{CELL}" height="{CELL}" fill="#444"/>"##
                );
            } else if grid.dialect == Dialect::Maze && grid.goal == Some((r, c)) {
                let _ = writeln!(
                    s,
                    r##"<rect x="{x}" y="{y}" width="{CELL}" height="{CELL}" fill="#8c8"/>"##
                );
            }
            if grid.dialect == Dialect::Karel {
                let n = grid.markers_pre_at(r, c);
                if n > 0 {
                    let cx = x + CELL / 2;
                    let cy = y + CELL / 2;
                    let _ = writeln!(
                        s,
                        r##"<circle cx="{cx}" cy="{cy}" r="8" fill="#fc6"/><text x="{cx}" y="{cy}" font-size="10" text-anchor="middle" dominant-baseline="central">{n}</text>"##
                    );
                }
            }
            let _ = writeln!(
                s,
                r##"<rect x="{x}" y="{y}" width="{CELL}" height="{CELL}" fill="none" stroke="#ccc"/>"##
            );
        }
    }
    let ax = grid.start.col * CELL + CELL / 2;
    let ay = grid.start.row * CELL + CELL / 2;
    let glyph = match avatar_char(grid.start.dir) {
        '>' => "&gt;",
        '<' => "&lt;",
        '^' => "^",
        _ => "v",
    };
    let _ = writeln!(
        s,
        r##"<text x="{ax}" y="{ay}" font-size="16" text-anchor="middle" dominant-baseline="central" fill="#06c">{glyph}</text>"##
    );
    s.push_str("</svg>\n");
    s
}
