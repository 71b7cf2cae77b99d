use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn fgp(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_fgp"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

/// Small world plus a fast config.
fn setup(dir: &Path) -> (PathBuf, PathBuf) {
    let data = dir.join("data");
    let out = fgp(&[
        "gen-data",
        "--out",
        s(&data),
        "--samples",
        "8",
        "--seed",
        "3",
    ]);
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    let config = dir.join("fast.json");
    fs::write(
        &config,
        r#"{"stage1.epochs": 2, "gcn.hidden": 8, "gcn.epochs": 20, "stage2.epochs": 1}"#,
    )
    .unwrap();
    (data.join("manifest.json"), config)
}

#[test]
fn every_subcommand_has_help_with_defaults() {
    for sub in [
        "gen-data",
        "cluster",
        "train",
        "eval",
        "ablate",
        "sweep",
        "export-attn",
    ] {
        let out = fgp(&[sub, "--help"]);
        assert!(out.status.success(), "{sub}");
        let text = String::from_utf8(out.stdout).unwrap();
        assert!(text.contains("--out"), "{sub}: {text}");
    }
    let eval = String::from_utf8(fgp(&["eval", "--help"]).stdout).unwrap();
    assert!(eval.contains("[default: 1,2,5,10,20]"), "{eval}");
    assert!(eval.contains("[default: zsl]"), "{eval}");
}

#[test]
fn unknown_flag_exits_one() {
    assert_eq!(fgp(&["train", "--no-such-flag"]).status.code(), Some(1));
}

#[test]
fn invalid_config_key_is_named() {
    let dir = tempfile::tempdir().unwrap();
    let (manifest, _) = setup(dir.path());
    let bad = dir.path().join("bad.json");
    fs::write(&bad, r#"{"gcn.epochz": 3}"#).unwrap();
    let out = fgp(&[
        "train",
        "-m",
        s(&manifest),
        "-c",
        s(&bad),
        "-o",
        s(&dir.path().join("o")),
    ]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("gcn.epochz"));
    let out = fgp(&[
        "train",
        "-m",
        s(&manifest),
        "--set",
        "stage9.lr=1",
        "-o",
        s(&dir.path().join("o")),
    ]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("stage9.lr"));
}

#[test]
fn train_eval_and_export() {
    let dir = tempfile::tempdir().unwrap();
    let (manifest, config) = setup(dir.path());
    let run = dir.path().join("run");
    let out = fgp(&[
        "train",
        "-m",
        s(&manifest),
        "-c",
        s(&config),
        "-o",
        s(&run),
        "--skip-stage1",
        "--skip-stage2",
    ]);
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    let meta: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(run.join("run.json")).unwrap()).unwrap();
    assert_eq!(meta["config"]["stage1.skip"], true);
    assert_eq!(meta["config"]["stage2.skip"], true);
    assert_eq!(meta["command"], "train");
    let curves: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(run.join("curves.json")).unwrap()).unwrap();
    assert_eq!(curves["stage2"].as_array().unwrap().len(), 0);

    let ck = run.join("model.fgpc");
    let ev = dir.path().join("eval");
    let out = fgp(&[
        "eval",
        "-m",
        s(&manifest),
        "--checkpoint",
        s(&ck),
        "--topk",
        "1,2,5,10,20",
        "-o",
        s(&ev),
    ]);
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    let report: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(ev.join("report.json")).unwrap()).unwrap();
    let ks: Vec<u64> = report["hits"]
        .as_array()
        .unwrap()
        .iter()
        .map(|h| h["k"].as_u64().unwrap())
        .collect();
    assert_eq!(ks, vec![1, 2, 5, 10, 20]);
    assert!(ev.join("run.json").exists());

    let heat = dir.path().join("heat");
    let out = fgp(&[
        "export-attn",
        "-m",
        s(&manifest),
        "--checkpoint",
        s(&ck),
        "--samples",
        "0,3",
        "--channel",
        "1",
        "-o",
        s(&heat),
    ]);
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    for f in ["sample0_channel1.csv", "sample3_channel1.pgm", "run.json"] {
        assert!(heat.join(f).exists(), "{f}");
    }
    let out = fgp(&[
        "export-attn",
        "-m",
        s(&manifest),
        "--checkpoint",
        s(&ck),
        "--samples",
        "0",
        "--channel",
        "9",
        "-o",
        s(&heat),
    ]);
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn reruns_are_byte_identical() {
    let dir = tempfile::tempdir().unwrap();
    let (manifest, config) = setup(dir.path());
    let mut runs = Vec::new();
    for name in ["a", "b"] {
        let o = dir.path().join(name);
        let out = fgp(&["train", "-m", s(&manifest), "-c", s(&config), "-o", s(&o)]);
        assert!(out.status.success());
        runs.push(o);
    }
    for f in ["model.fgpc", "curves.json", "run.json"] {
        assert_eq!(
            fs::read(runs[0].join(f)).unwrap(),
            fs::read(runs[1].join(f)).unwrap(),
            "{f}"
        );
    }
}

#[test]
fn cluster_sweep_and_ablate_write_their_files() {
    let dir = tempfile::tempdir().unwrap();
    let (manifest, config) = setup(dir.path());
    let o = dir.path().join("out");
    let out = fgp(&["cluster", "-m", s(&manifest), "-k", "3", "-o", s(&o)]);
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    let parts: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(o.join("partitions.json")).unwrap()).unwrap();
    assert_eq!(parts.as_array().unwrap().len(), 24);

    let out = fgp(&[
        "sweep",
        "-m",
        s(&manifest),
        "-c",
        s(&config),
        "--k-range",
        "1-2",
        "--l-range",
        "1",
        "-o",
        s(&o),
    ]);
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    let csv = fs::read_to_string(o.join("sweep.csv")).unwrap();
    assert_eq!(csv.lines().count(), 3);

    let out = fgp(&[
        "ablate",
        "-m",
        s(&manifest),
        "-c",
        s(&config),
        "--variant",
        "F",
        "-o",
        s(&o),
    ]);
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    assert!(o.join("global_only.report.json").exists());
    let out = fgp(&[
        "ablate",
        "-m",
        s(&manifest),
        "--variant",
        "nope",
        "-o",
        s(&o),
    ]);
    assert_eq!(out.status.code(), Some(1));
}
