use std::path::Path;
use std::process::{Command, Output};

fn anchorsync(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_anchorsync"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn code(out: &Output) -> i32 {
    out.status.code().expect("exited normally")
}

#[test]
fn unknown_experiment_exits_2() {
    let dir = tempfile::tempdir().unwrap();
    let out = anchorsync(&["sweep_moon", "--out", dir.path().to_str().unwrap()]);
    assert_eq!(code(&out), 2);
    assert!(String::from_utf8_lossy(&out.stderr).contains("sweep_moon"));
}

#[test]
fn usage_errors_exit_2() {
    assert_eq!(code(&anchorsync(&[])), 2);
    assert_eq!(code(&anchorsync(&["sweep_drop", "--set", "novalue"])), 2);
    assert_eq!(code(&anchorsync(&["sweep_drop", "--iterations", "ten"])), 2);
}

#[test]
fn invalid_overrides_exit_4() {
    let dir = tempfile::tempdir().unwrap();
    let o = dir.path().to_str().unwrap();
    assert_eq!(code(&anchorsync(&["sweep_drop", "--out", o, "--set", "n_sigma=-2"])), 4);
    assert_eq!(code(&anchorsync(&["sweep_drop", "--out", o, "--set", "bogus=1"])), 4);
    assert_eq!(
        code(&anchorsync(&["fusion_bench", "--out", o, "--set", "scenario=highway"])),
        4
    );
    assert_eq!(code(&anchorsync(&["timing_hist", "--out", o, "--iterations", "0"])), 4);
}

#[test]
fn io_failures_exit_3() {
    let dir = tempfile::tempdir().unwrap();
    let blocker = dir.path().join("file");
    std::fs::write(&blocker, "x").unwrap();
    let out = anchorsync(&[
        "sweep_drop",
        "--iterations",
        "10",
        "--out",
        blocker.join("sub").to_str().unwrap(),
    ]);
    assert_eq!(code(&out), 3);
    let missing = dir.path().join("missing.toml");
    let out = anchorsync(&["sweep_drop", "--config", missing.to_str().unwrap()]);
    assert_eq!(code(&out), 3);
}

fn read(dir: &Path, name: &str) -> String {
    std::fs::read_to_string(dir.join(name)).unwrap_or_else(|e| panic!("{name}: {e}"))
}

#[test]
fn sweep_writes_csv_and_manifest() {
    let dir = tempfile::tempdir().unwrap();
    let out = anchorsync(&[
        "sweep_drop",
        "--iterations",
        "500",
        "--seed",
        "3",
        "--out",
        dir.path().to_str().unwrap(),
    ]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let csv = read(dir.path(), "sweep_drop.csv");
    let mut lines = csv.lines();
    assert!(lines
        .next()
        .unwrap()
        .starts_with("drop_rate,full_match_rate,theoretical,"));
    assert_eq!(lines.count(), 6);
    let manifest = read(dir.path(), "manifest.json");
    assert!(manifest.contains("\"seed\": 3"));
    assert!(String::from_utf8_lossy(&out.stdout).contains("sweep_drop.csv"));
}

#[test]
fn config_file_feeds_the_simulation() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("sim.toml");
    std::fs::write(
        &cfg,
        "num_nodes = 3\nanchor_interval = 100.0\nduration = 1000.0\ntrigger_mode = \"NaiveAsync\"\nseed = 1\n\n[[node_profiles]]\nnormal_mu = 40.0\nnormal_sigma = 5.0\n",
    )
    .unwrap();
    let out_dir = dir.path().join("out");
    let out = anchorsync(&[
        "minmax_delay",
        "--config",
        cfg.to_str().unwrap(),
        "--iterations",
        "20",
        "--out",
        out_dir.to_str().unwrap(),
    ]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let summary = read(&out_dir, "minmax_summary.csv");
    // 20 runs of 10 anchors each
    assert!(summary.lines().nth(1).unwrap().starts_with("synchronized,200,"));
}

#[test]
fn reruns_are_byte_identical() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    for dir in [&a, &b] {
        let out = anchorsync(&[
            "fusion_bench",
            "--iterations",
            "3",
            "--seed",
            "11",
            "--out",
            dir.path().to_str().unwrap(),
        ]);
        assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    }
    for name in [
        "fusion_bench.csv",
        "fusion_draws.csv",
        "eval_lf_hd.csv",
        "tracks.csv",
        "predictions_ef.jsonl",
    ] {
        assert_eq!(read(a.path(), name), read(b.path(), name), "{name}");
    }
}
