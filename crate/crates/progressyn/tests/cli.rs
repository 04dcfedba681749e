//! Exit-code and contract tests for the command-line interface, run
//! in-process through `cli::run`.

use std::fs;
use std::path::{Path, PathBuf};

use progressyn::cli;
use progressyn::formats::ProgressionJson;

fn fixture(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR"))
        .join("tests/fixtures")
        .join(name)
}

fn run(args: &[&str]) -> i32 {
    cli::run(std::iter::once("progressyn").chain(args.iter().copied()))
}

fn maze_record(id: &str, store: &[&str], code: &str) -> serde_json::Value {
    serde_json::json!({
        "task": {
            "id": id,
            "grids": [{
                "dialect": "maze",
                "rows": [".......G", "########"],
                "avatar": {"r": 0, "c": 0, "dir": "E"},
            }],
            "store": store,
            "size_budget": 8,
        },
        "code": code,
    })
}

/// A single-grid maze record usable by synthesize/run/trace/render.
fn record(dir: &Path) -> PathBuf {
    let path = dir.join("record.json");
    let line = maze_record("demo", &["move", "Repeat"], "Run{Repeat(7){move}}");
    fs::write(&path, line.to_string()).unwrap();
    path
}

#[test]
fn synthesize_writes_a_progression() {
    let dir = tempfile::tempdir().unwrap();
    let input = record(dir.path());
    let out = dir.path().join("p.json");
    let code = run(&[
        "synthesize",
        input.to_str().unwrap(),
        "--k-prime",
        "3",
        "--output",
        out.to_str().unwrap(),
    ]);
    assert_eq!(code, 0);
    let p: ProgressionJson = serde_json::from_str(&fs::read_to_string(&out).unwrap()).unwrap();
    assert_eq!(p.method, "progressyn");
    assert_eq!(p.items.len(), 3);
    assert_eq!(p.items.last().unwrap().code, "Run{Repeat(7){move}}");
    assert!(p.items.windows(2).all(|w| w[0].complexity <= w[1].complexity));
}

#[test]
fn synthesize_reports_infeasible_budgets_with_exit_3() {
    let dir = tempfile::tempdir().unwrap();
    let input = record(dir.path());
    let code = run(&["synthesize", input.to_str().unwrap(), "--k-prime", "50"]);
    assert_eq!(code, 3);
}

#[test]
fn missing_and_malformed_inputs_exit_2() {
    assert_eq!(run(&["run", "/nonexistent/task.json"]), 2);
    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.json");
    fs::write(&bad, "{not json").unwrap();
    assert_eq!(run(&["run", bad.to_str().unwrap()]), 2);
}

#[test]
fn run_trace_render_succeed_on_a_solving_record() {
    let dir = tempfile::tempdir().unwrap();
    let input = record(dir.path());
    assert_eq!(run(&["run", input.to_str().unwrap()]), 0);
    assert_eq!(run(&["trace", input.to_str().unwrap()]), 0);
    let ascii = dir.path().join("grid.txt");
    assert_eq!(
        run(&[
            "render",
            input.to_str().unwrap(),
            "--output",
            ascii.to_str().unwrap(),
        ]),
        0
    );
    assert_eq!(fs::read_to_string(&ascii).unwrap(), ">......G\n########\n");
    let svg = dir.path().join("grid.svg");
    assert_eq!(
        run(&[
            "render",
            input.to_str().unwrap(),
            "--format",
            "svg",
            "--output",
            svg.to_str().unwrap(),
        ]),
        0
    );
    assert!(fs::read_to_string(&svg).unwrap().starts_with("<svg"));
}

#[test]
fn run_exits_2_when_the_code_does_not_solve() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("short.json");
    let line = maze_record("short", &["move"], "Run{move}");
    fs::write(&path, line.to_string()).unwrap();
    assert_eq!(run(&["run", path.to_str().unwrap()]), 2);
}

#[test]
fn validate_prints_the_report_with_exit_0() {
    assert_eq!(
        run(&["validate", fixture("branch3-100.jsonl").to_str().unwrap()]),
        0
    );
}

#[test]
fn config_file_presets_knobs_and_flags_override() {
    let dir = tempfile::tempdir().unwrap();
    let input = record(dir.path());
    let cfg = dir.path().join("cfg");
    fs::write(&cfg, "k_prime = 3\nmax_steps = 500\n").unwrap();
    let out = dir.path().join("p.json");
    assert_eq!(
        run(&[
            "synthesize",
            input.to_str().unwrap(),
            "--config",
            cfg.to_str().unwrap(),
            "--output",
            out.to_str().unwrap(),
        ]),
        0
    );
    let p: ProgressionJson = serde_json::from_str(&fs::read_to_string(&out).unwrap()).unwrap();
    assert_eq!(p.items.len(), 3);

    // explicit flag wins over the file
    assert_eq!(
        run(&[
            "synthesize",
            input.to_str().unwrap(),
            "--config",
            cfg.to_str().unwrap(),
            "--k-prime",
            "4",
            "--output",
            out.to_str().unwrap(),
        ]),
        0
    );
    let p: ProgressionJson = serde_json::from_str(&fs::read_to_string(&out).unwrap()).unwrap();
    assert_eq!(p.items.len(), 4);
}

#[test]
fn seed_env_var_is_the_fallback() {
    let dir = tempfile::tempdir().unwrap();
    let input = fixture("branch3-100.jsonl");
    let from_env = dir.path().join("env.jsonl");
    let from_flag = dir.path().join("flag.jsonl");
    std::env::set_var("PROGRESSYN_SEED", "99");
    let code = run(&[
        "augment",
        input.to_str().unwrap(),
        "--method",
        "same-code",
        "--output",
        from_env.to_str().unwrap(),
    ]);
    std::env::remove_var("PROGRESSYN_SEED");
    assert_eq!(code, 0);
    assert_eq!(
        run(&[
            "augment",
            input.to_str().unwrap(),
            "--method",
            "same-code",
            "--seed",
            "99",
            "--output",
            from_flag.to_str().unwrap(),
        ]),
        0
    );
    assert_eq!(fs::read(&from_env).unwrap(), fs::read(&from_flag).unwrap());
}

#[test]
fn import_translates_a_token_corpus() {
    let dir = tempfile::tempdir().unwrap();
    let input = dir.path().join("tokens.jsonl");
    // two moves and a put on a short corridor
    let line = serde_json::json!({
        "id": "imp-0",
        "program_tokens": ["DEF", "run", "m(", "move", "move", "putMarker", "m)"],
        "examples": [{
            "rows": ["...", "###"],
            "post_rows": ["..1", "###"],
            "avatar": {"r": 0, "c": 0, "dir": "E"},
            "end_avatar": {"r": 0, "c": 2, "dir": "E"},
        }],
    });
    fs::write(&input, format!("{line}\n")).unwrap();
    let out = dir.path().join("native.jsonl");
    assert_eq!(
        run(&[
            "import",
            input.to_str().unwrap(),
            "--output",
            out.to_str().unwrap(),
        ]),
        0
    );
    let text = fs::read_to_string(&out).unwrap();
    assert!(text.contains("Run{move move putMarker}"));
    assert_eq!(run(&["validate", out.to_str().unwrap()]), 0);
}

#[test]
fn gen_produces_a_readable_corpus() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("gen.jsonl");
    assert_eq!(
        run(&["gen", "--count", "10", "--seed", "5", "--output", out.to_str().unwrap()]),
        0
    );
    assert_eq!(run(&["validate", out.to_str().unwrap()]), 0);
    assert_eq!(fs::read_to_string(&out).unwrap().lines().count(), 10);
}

#[test]
fn help_exits_0_and_unknown_flags_exit_2() {
    assert_eq!(run(&["--help"]), 0);
    assert_eq!(run(&["synthesize", "--bogus"]), 2);
}
