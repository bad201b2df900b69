use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use dream_core::io::read_pose_yaws;

fn dream(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_dream"))
        .args(args)
        .current_dir(dir)
        .env_remove("DREAM_SEED")
        .output()
        .expect("binary runs")
}

fn ok(dir: &Path, args: &[&str]) -> String {
    let out = dream(dir, args);
    assert!(
        out.status.success(),
        "dream {} failed: {}",
        args.join(" "),
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

fn value(stdout: &str, key: &str) -> f64 {
    stdout
        .lines()
        .find_map(|l| l.strip_prefix(&format!("{key}=")))
        .unwrap_or_else(|| panic!("no `{key}=` in:\n{stdout}"))
        .parse()
        .unwrap()
}

const SYNTH: &[&str] = &[
    "synth", "--out", "data", "--subjects", "30", "--images", "8", "--dim", "12", "--folds", "3", "--same", "4",
    "--not-same", "4", "--seed", "21",
];

#[test]
fn pipeline_corrects_synthetic_embeddings() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path();
    ok(dir, SYNTH);
    ok(dir, &["pose", "--landmarks", "data/landmarks.csv", "--out", "est.csv"]);

    let truth = read_pose_yaws(fs::File::open(dir.join("data/poses.csv")).unwrap()).unwrap();
    let est = read_pose_yaws(fs::File::open(dir.join("est.csv")).unwrap()).unwrap();
    assert_eq!(truth.len(), est.len());
    for (id, y) in &truth {
        assert!((est[id] - y).abs() < 1e-4, "{id}: {} vs {y}", est[id]);
    }

    let train = ok(
        dir,
        &[
            "train", "--embeddings", "data/embeddings.bin", "--pairs", "data/train_pairs.csv", "--poses", "est.csv",
            "--checkpoint", "block.ckpt", "--epochs", "150", "--batch", "8", "--lr", "0.003", "--dropout", "0",
        ],
    );
    assert!(value(&train, "mean_distance_after") < value(&train, "mean_distance_before"));
    assert!(value(&train, "final_loss") < value(&train, "initial_loss"));

    ok(dir, &["apply", "--embeddings", "data/probes.bin", "--checkpoint", "block.ckpt", "--out", "fixed.bin"]);
    let naive = ok(dir, &["eval-verify", "--embeddings", "data/probes.bin", "--pairs", "data/protocol.csv"]);
    let fixed = ok(dir, &["eval-verify", "--embeddings", "fixed.bin", "--pairs", "data/protocol.csv", "--out", "rep"]);
    assert!(value(&fixed, "eer") < value(&naive, "eer"), "naive:\n{naive}\ncorrected:\n{fixed}");
    for f in ["report.txt", "roc.csv", "heatmap_fpr.csv", "heatmap_fnr.csv"] {
        assert!(dir.join("rep").join(f).is_file(), "missing {f}");
    }

    // correcting on the fly gives the same numbers as the applied file
    let inline = ok(
        dir,
        &["eval-verify", "--embeddings", "data/probes.bin", "--pairs", "data/protocol.csv", "--checkpoint", "block.ckpt"],
    );
    assert_eq!(value(&inline, "eer"), value(&fixed, "eer"));

    let rank_naive = ok(dir, &["eval-identify", "--embeddings", "data/probes.bin", "--gallery", "data/gallery.bin"]);
    let rank_fixed = ok(dir, &["eval-identify", "--embeddings", "fixed.bin", "--gallery", "data/gallery.bin"]);
    assert!(value(&rank_fixed, "rank1") >= value(&rank_naive, "rank1"));
    assert!(value(&rank_fixed, "rank5") >= value(&rank_fixed, "rank1"));
}

#[test]
fn separable_scores_give_zero_eer() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path();
    fs::write(
        dir.join("emb.csv"),
        "id,yaw,v0,v1\na/1,0,1,0\na/2,0.3,1,0.01\nb/1,0,0,1\nb/2,-0.4,0.01,1\n",
    )
    .unwrap();
    fs::write(dir.join("pairs.csv"), "id1,id2,label\na/1,a/2,1\nb/1,b/2,1\na/1,b/1,0\na/2,b/2,0\n").unwrap();
    let out = ok(dir, &["eval-verify", "--embeddings", "emb.csv", "--pairs", "pairs.csv"]);
    assert!(out.lines().any(|l| l == "eer=0.0000"), "{out}");
}

fn artifacts(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut v: Vec<(String, Vec<u8>)> = fs::read_dir(dir)
        .unwrap()
        .flatten()
        .filter(|e| e.path().is_file())
        .map(|e| (e.file_name().to_string_lossy().into_owned(), fs::read(e.path()).unwrap()))
        .collect();
    v.sort();
    v
}

#[test]
fn reruns_are_byte_identical() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    let train = [
        "train", "--embeddings", "data/embeddings.bin", "--pairs", "data/train_pairs.csv", "--checkpoint",
        "data/block.ckpt", "--epochs", "5", "--out", "data/loss.csv",
    ];
    let mut logs = Vec::new();
    for dir in [a.path(), b.path()] {
        let mut log = ok(dir, SYNTH);
        log += &ok(dir, &train);
        logs.push(log);
    }
    assert_eq!(logs[0], logs[1]);
    assert_eq!(artifacts(&a.path().join("data")), artifacts(&b.path().join("data")));
}

#[test]
fn seed_comes_from_environment_unless_flag_given() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path();
    let run = |out: &str, seed_env: Option<&str>, flag: Option<&str>| {
        let mut cmd = Command::new(env!("CARGO_BIN_EXE_dream"));
        cmd.current_dir(dir).args(["synth", "--subjects", "6", "--images", "2", "--dim", "4", "--folds", "1"]);
        cmd.args(["--same", "1", "--not-same", "1", "--out", out]).env_remove("DREAM_SEED");
        if let Some(s) = seed_env {
            cmd.env("DREAM_SEED", s);
        }
        if let Some(s) = flag {
            cmd.args(["--seed", s]);
        }
        assert!(cmd.output().unwrap().status.success());
        fs::read(dir.join(out).join("embeddings.bin")).unwrap()
    };
    let by_flag = run("flag", None, Some("77"));
    let by_env = run("env", Some("77"), None);
    let overridden = run("both", Some("5"), Some("77"));
    let other = run("other", Some("78"), None);
    assert_eq!(by_flag, by_env);
    assert_eq!(by_flag, overridden);
    assert_ne!(by_flag, other);
}

fn fails_with(dir: &Path, args: &[&str], code: i32, kind: &str) {
    let out = dream(dir, args);
    assert_eq!(out.status.code(), Some(code), "dream {}: {}", args.join(" "), String::from_utf8_lossy(&out.stderr));
    let err = String::from_utf8(out.stderr).unwrap();
    let lines: Vec<&str> = err.lines().collect();
    assert_eq!(lines.len(), 1, "{err}");
    assert!(lines[0].starts_with(&format!("error={kind} code={code} message=")), "{err}");
}

#[test]
fn exit_codes_follow_error_class() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path();
    fails_with(dir, &["train", "--bogus"], 2, "usage");
    fails_with(dir, &["eval-verify", "--embeddings", "missing.bin", "--pairs", "missing.csv"], 3, "data");

    ok(dir, SYNTH);
    fails_with(
        dir,
        &["train", "--embeddings", "data/embeddings.bin", "--pairs", "data/train_pairs.csv", "--checkpoint", "x",
          "--lr", "1e200", "--epochs", "3"],
        4,
        "numerical",
    );
    fails_with(
        dir,
        &["train", "--embeddings", "data/embeddings.bin", "--pairs", "data/train_pairs.csv", "--checkpoint", "x",
          "--batch", "0"],
        2,
        "usage",
    );
    assert!(!dir.join("x").exists(), "failed training must not leave a checkpoint");
}
