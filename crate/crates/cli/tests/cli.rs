use std::path::Path;
use std::process::{Command, Output};

fn hubtopo(args: &[&str], out: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_hubtopo"))
        .args(args)
        .env_remove("HUBTOPO_SEED")
        .env("HUBTOPO_OUT", out)
        .output()
        .expect("binary runs")
}

fn code(o: &Output) -> i32 {
    o.status.code().expect("exited normally")
}

#[test]
fn configuration_errors_exit_with_2() {
    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.conf");
    std::fs::write(&bad, "epsilon = 0.001\nno_such_key = 3\n").unwrap();
    let o = hubtopo(&["gen-demos", "--config", bad.to_str().unwrap()], dir.path());
    assert_eq!(code(&o), 2);
    assert!(String::from_utf8_lossy(&o.stderr).contains("no_such_key"));

    let missing = dir.path().join("missing.conf");
    assert_eq!(code(&hubtopo(&["eval", "--config", missing.to_str().unwrap()], dir.path())), 2);

    std::fs::write(&bad, "epsilon = -1\n").unwrap();
    assert_eq!(code(&hubtopo(&["run-all", "--config", bad.to_str().unwrap()], dir.path())), 2);

    let o = hubtopo(&["plan", "--start", "0", "--goal", "red,red"], dir.path());
    assert_eq!(code(&o), 2);
    let o = hubtopo(&["plan", "--start", "5", "--goal", "0"], dir.path());
    assert_eq!(code(&o), 2);
}

#[test]
fn missing_stage_exits_with_1() {
    let dir = tempfile::tempdir().unwrap();
    let o = hubtopo(&["train-high"], &dir.path().join("run"));
    assert_eq!(code(&o), 1);
    assert!(String::from_utf8_lossy(&o.stderr).contains("build-topology"));
    let o = hubtopo(&["plan", "--start", "0", "--goal", "red,blue"], &dir.path().join("run"));
    assert_eq!(code(&o), 1);
}

#[test]
fn gen_demos_writes_the_dataset() {
    let dir = tempfile::tempdir().unwrap();
    let run = dir.path().join("run");
    let o = hubtopo(&["gen-demos"], &run);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    assert!(run.join("demos").join("manifest.txt").is_file());
    assert!(run.join("stages").join("gen-demos.done").is_file());
    // a second run reuses the stage
    assert_eq!(code(&hubtopo(&["gen-demos"], &run)), 0);
}
