use std::path::Path;
use std::process::{Command, Output};

use revox::encoder::{encode_grid, Encoder};
use revox::format::read_rfea1;
use revox::{load_bin, partition, reconfigure, BinLayout, FeatureMode, FeatureSpec, GridConfig};

fn revox(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_revox"))
        .args(args)
        .env_remove("REVOX_THREADS")
        .output()
        .expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn small_scene(dir: &Path) -> String {
    let path = dir.join("scene.bin5").display().to_string();
    let o = revox(&["synth", &path, "--seed", "4", "--rings", "8", "--points-per-ring", "1500"]);
    assert!(o.status.success(), "{}", stderr(&o));
    path
}

fn value(text: &str, key: &str) -> f64 {
    text.lines()
        .find_map(|l| l.strip_prefix(key).and_then(|r| r.split_whitespace().next()))
        .unwrap_or_else(|| panic!("{key} missing from:\n{text}"))
        .parse()
        .unwrap()
}

#[test]
fn help_lists_defaults() {
    let o = revox(&["reconfigure", "--help"]);
    assert!(o.status.success());
    let help = stdout(&o);
    for needle in ["--pillar-size", "0.25 0.25", "--max-points", "25 pillars", "--seed", "--threads"] {
        assert!(help.contains(needle), "help lacks {needle}:\n{help}");
    }
}

#[test]
fn usage_errors_exit_two_with_one_line() {
    for args in [
        &["reconfigure"][..],
        &["frobnicate"],
        &["voxelize", "x.bin", "--pillar-size", "1", "1", "--voxel-size", "1", "1", "1"],
    ] {
        let o = revox(args);
        assert_eq!(o.status.code(), Some(2), "{args:?}");
        assert_eq!(stderr(&o).trim_end().lines().count(), 1, "{args:?}: {}", stderr(&o));
    }
}

#[test]
fn runtime_errors_exit_one_with_one_line() {
    let dir = tempfile::tempdir().unwrap();
    let missing = dir.path().join("nope.bin").display().to_string();
    let out = dir.path().display().to_string();
    let cases: Vec<Vec<&str>> = vec![
        vec!["voxelize", &missing, "--out", &out],
        vec!["stats", "--before", &missing],
        vec!["bench", "--max-points", "0"],
        vec!["--threads", "0", "bench"],
    ];
    for args in cases {
        let o = revox(&args);
        assert_eq!(o.status.code(), Some(1), "{args:?}");
        let err = stderr(&o);
        assert_eq!(err.trim_end().lines().count(), 1, "{args:?}: {err}");
        assert!(err.starts_with("error: "), "{err}");
    }
}

#[test]
fn reconfigure_is_reproducible_and_flattens_counts() {
    let dir = tempfile::tempdir().unwrap();
    let scene = small_scene(dir.path());
    let mut dumps = Vec::new();
    for run in ["a", "b"] {
        let out = dir.path().join(run);
        let o = revox(&["reconfigure", &scene, "--seed", "7", "--out", out.to_str().unwrap()]);
        assert!(o.status.success(), "{}", stderr(&o));
        dumps.push((
            std::fs::read(out.join("voxels.rvox1")).unwrap(),
            std::fs::read(out.join("walks.rwlk1")).unwrap(),
            std::fs::read(out.join("run.json")).unwrap(),
        ));
    }
    assert!(dumps[0] == dumps[1], "same seed produced different dumps");

    let a = dir.path().join("a");
    let o = revox(&[
        "stats",
        "--before",
        a.join("voxels.rvox1").to_str().unwrap(),
        "--after",
        a.join("walks.rwlk1").to_str().unwrap(),
        "--out",
        a.to_str().unwrap(),
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    let text = stdout(&o);
    assert!(value(&text, "cov_after") < value(&text, "cov_before"), "{text}");
    assert!(value(&text, "count1_after") < value(&text, "count1_before"), "{text}");
    for f in ["hist_before.csv", "hist_after.csv", "stats.json"] {
        assert!(a.join(f).exists(), "{f}");
    }
}

#[test]
fn encoded_features_match_the_library() {
    let dir = tempfile::tempdir().unwrap();
    let scene = small_scene(dir.path());
    let out = dir.path().join("enc");
    let o = revox(&["encode", &scene, "--seed", "3", "--csv", "--out", out.to_str().unwrap()]);
    assert!(o.status.success(), "{}", stderr(&o));
    let got = read_rfea1(&std::fs::read(out.join("features.rfea1")).unwrap()).unwrap();

    let cloud = load_bin(Path::new(&scene), BinLayout::Xyzrt).unwrap();
    let (grid, graph) = partition(&cloud, &GridConfig::pillars()).unwrap();
    let rc = reconfigure(&grid, &graph, 3).unwrap();
    let want =
        encode_grid(&grid, &rc, &cloud, FeatureSpec::new(FeatureMode::Pillars), &Encoder::Avg).unwrap();
    assert_eq!(got, want);
    let csv = std::fs::read_to_string(out.join("features.csv")).unwrap();
    assert_eq!(csv.lines().count(), want.len() + 1);
}

#[test]
fn thread_count_does_not_change_outputs() {
    let dir = tempfile::tempdir().unwrap();
    let scene = small_scene(dir.path());
    let mut seen = Vec::new();
    for (i, threads) in ["1", "4"].iter().enumerate() {
        let out = dir.path().join(format!("t{i}"));
        let mut cmd = Command::new(env!("CARGO_BIN_EXE_revox"));
        cmd.args(["multires", &scene, "--seed", "11", "--out", out.to_str().unwrap()]);
        // one run via the flag, one via the environment
        if i == 0 {
            cmd.args(["--threads", threads]).env_remove("REVOX_THREADS");
        } else {
            cmd.env("REVOX_THREADS", threads);
        }
        let o = cmd.output().unwrap();
        assert!(o.status.success(), "{}", stderr(&o));
        seen.push(std::fs::read(out.join("walks.rwlk2")).unwrap());
    }
    assert_eq!(seen[0], seen[1]);
}
