use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn rpcf(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_rpcf"))
        .args(args)
        .output()
        .expect("run rpcf")
}

fn text(bytes: &[u8]) -> String {
    String::from_utf8_lossy(bytes).into_owned()
}

fn synth(dir: &Path) {
    let out = rpcf(&[
        "synth",
        dir.to_str().unwrap(),
        "--frames",
        "6",
        "--amplitudes",
        "0.1",
    ]);
    assert!(out.status.success(), "{}", text(&out.stderr));
}

#[test]
fn selftest_passes() {
    let out = rpcf(&["selftest"]);
    assert!(out.status.success(), "{}", text(&out.stdout));
    let stdout = text(&out.stdout);
    assert_eq!(stdout.lines().count(), 4);
    assert!(stdout.lines().all(|l| l.starts_with("PASS")));
}

#[test]
fn track_prints_boxes_and_writes_outputs() {
    let tmp = tempfile::tempdir().unwrap();
    let data = tmp.path().join("data");
    synth(&data);
    let seq = data.join("translate");

    let out = rpcf(&["track", seq.to_str().unwrap()]);
    assert!(out.status.success(), "{}", text(&out.stderr));
    let stdout = text(&out.stdout);
    let lines: Vec<&str> = stdout.lines().collect();
    assert_eq!(lines.len(), 7);
    assert_eq!(lines[0], "frame,x,y,w,h");
    assert_eq!(lines[1], "1,40.000000,40.000000,40.000000,40.000000");

    let dir = tmp.path().join("out");
    let out = rpcf(&[
        "track",
        seq.to_str().unwrap(),
        "--out",
        dir.to_str().unwrap(),
    ]);
    assert!(out.status.success(), "{}", text(&out.stderr));
    assert_eq!(
        fs::read_to_string(dir.join("translate.csv")).unwrap(),
        stdout
    );
    let metrics = fs::read_to_string(dir.join("metrics.txt")).unwrap();
    assert!(metrics.lines().any(|l| l.starts_with("dp20 = ")));
    assert_eq!(
        fs::read_to_string(dir.join("precision.csv"))
            .unwrap()
            .lines()
            .count(),
        52
    );
}

#[test]
fn eval_single_variant_and_ablation() {
    let tmp = tempfile::tempdir().unwrap();
    let data = tmp.path().join("data");
    synth(&data);

    let out = rpcf(&["eval", data.to_str().unwrap(), "--variant", "baseline"]);
    assert!(out.status.success(), "{}", text(&out.stderr));
    assert!(text(&out.stdout).starts_with("baseline sequences 2 failed 0"));

    let dir = tmp.path().join("ablation");
    let out = rpcf(&[
        "eval",
        data.to_str().unwrap(),
        "--variant",
        "all",
        "--out",
        dir.to_str().unwrap(),
    ]);
    assert!(out.status.success(), "{}", text(&out.stderr));
    let table = fs::read_to_string(dir.join("ablation.txt")).unwrap();
    assert_eq!(table, text(&out.stdout));
    assert_eq!(table.lines().count(), 5);
    for v in [
        "baseline",
        "feature_map_avg_pool",
        "feature_map_max_pool",
        "rpcf",
    ] {
        assert!(dir.join(v).join("success.csv").is_file(), "{v}");
    }
}

#[test]
fn config_file_is_applied() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = tmp.path().join("tracker.cfg");
    fs::write(&cfg, "# ablation\ne = 1\nT = 20\n").unwrap();
    let out = rpcf(&["config", "--config", cfg.to_str().unwrap()]);
    assert!(out.status.success(), "{}", text(&out.stderr));
    let stdout = text(&out.stdout);
    assert!(stdout.contains("kernel = 1\n"));
    assert!(stdout.contains("memory_capacity = 20\n"));

    // The printed configuration reads back unchanged.
    let round = tmp.path().join("round.cfg");
    fs::write(&round, &stdout).unwrap();
    let again = rpcf(&["config", "--config", round.to_str().unwrap()]);
    assert_eq!(text(&again.stdout), stdout);
}

#[test]
fn errors_exit_nonzero_with_diagnostics() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = tmp.path().join("bad.cfg");
    fs::write(&cfg, "lambda = 0.01\nbogus = 1\n").unwrap();
    let out = rpcf(&["config", "--config", cfg.to_str().unwrap()]);
    assert!(!out.status.success());
    assert!(
        text(&out.stderr).contains("bad.cfg:2"),
        "{}",
        text(&out.stderr)
    );

    let out = rpcf(&["track", tmp.path().join("missing").to_str().unwrap()]);
    assert!(!out.status.success());
    assert!(text(&out.stderr).starts_with("error: "));

    let data = tmp.path().join("data");
    synth(&data);
    let out = rpcf(&["eval", data.to_str().unwrap(), "--variant", "nope"]);
    assert!(!out.status.success());
    assert!(text(&out.stderr).contains("unknown variant"));

    let gt = data.join("translate/groundtruth_rect.txt");
    let mut lines = fs::read_to_string(&gt).unwrap();
    lines.push_str("1,2,3\n");
    fs::write(&gt, lines).unwrap();
    let out = rpcf(&["track", data.join("translate").to_str().unwrap()]);
    assert!(!out.status.success());
    assert!(
        text(&out.stderr).contains("groundtruth_rect.txt:7"),
        "{}",
        text(&out.stderr)
    );
}
