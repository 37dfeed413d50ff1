use std::path::Path;
use std::process::{Command, Output};

fn run(args: &[&str], dir: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_poserefine")).args(args).current_dir(dir).output().unwrap()
}

const SCENE: &str = r#"{"camera":{"fx":160,"fy":160,"cx":63.5,"cy":63.5,"width":128,"height":128,"near":0.05,"far":10},
"instances":[{"mesh":"builtin:mug","pose":[1,0,0,0,1,0,0,0,1,X,0,0.5]}]}"#;

fn write_scenes(dir: &Path) {
    std::fs::write(dir.join("gt.json"), SCENE.replace('X', "0")).unwrap();
    std::fs::write(dir.join("init.json"), SCENE.replace('X', "0.01")).unwrap();
}

#[test]
fn usage_errors_exit_with_one() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(run(&["bogus"], dir.path()).status.code(), Some(1));
    assert_eq!(run(&["refine"], dir.path()).status.code(), Some(1));
    write_scenes(dir.path());
    // An observation is required.
    assert_eq!(run(&["refine", "init.json"], dir.path()).status.code(), Some(1));
    assert_eq!(run(&["basin", "--study", "sideways"], dir.path()).status.code(), Some(1));
    assert_eq!(run(&["--help"], dir.path()).status.code(), Some(0));
}

#[test]
fn data_errors_exit_with_two() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(run(&["render", "missing.json"], dir.path()).status.code(), Some(2));
    std::fs::write(dir.path().join("bad.json"), "{").unwrap();
    assert_eq!(run(&["render", "bad.json"], dir.path()).status.code(), Some(2));
}

#[test]
fn numeric_failure_exits_with_three_and_keeps_the_trace() {
    let dir = tempfile::tempdir().unwrap();
    write_scenes(dir.path());
    let out = run(
        &["refine", "init.json", "--observed-scene", "gt.json", "--lr", "1.7e308", "--lr-decay", "1", "--out-dir", "o"],
        dir.path(),
    );
    assert_eq!(out.status.code(), Some(3));
    let trace = std::fs::read_to_string(dir.path().join("o/trace.csv")).unwrap();
    assert!(trace.starts_with("iteration,loss"));
}

#[test]
fn render_refine_eval_pipeline() {
    let dir = tempfile::tempdir().unwrap();
    write_scenes(dir.path());
    let ok = |args: &[&str]| {
        let o = run(args, dir.path());
        assert!(o.status.success(), "{args:?}: {}", String::from_utf8_lossy(&o.stderr));
    };
    ok(&["render", "gt.json", "--out-dir", "r"]);
    for f in ["descriptor.pfm", "depth.pfm", "instances.png", "render.csv"] {
        assert!(dir.path().join("r").join(f).exists(), "{f}");
    }
    ok(&["refine", "init.json", "--observed", "r/descriptor.pfm", "--out-dir", "a", "--dump-renders", "--iterations", "5"]);
    assert!(dir.path().join("a/renders/005.pfm").exists());
    ok(&["refine", "init.json", "--observed-scene", "gt.json", "--out-dir", "b"]);
    ok(&["eval", "b/poses.csv", "--out-dir", "e"]);
    let summary = std::fs::read_to_string(dir.path().join("e/summary.csv")).unwrap();
    let all = summary.lines().find(|l| l.starts_with("ALL")).unwrap();
    let add_auc: f64 = all.split(',').nth(2).unwrap().parse().unwrap();
    assert!(add_auc > 95.0, "{summary}");
    let trace = std::fs::read_to_string(dir.path().join("b/trace.csv")).unwrap();
    assert_eq!(trace.lines().count(), 52);
}
