use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn geostream(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_geostream"))
        .args(args)
        .env_remove("GEOSTREAM_WORDVECS")
        .output()
        .unwrap()
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

const SMALL: &str = "\
dataset = synthetic:drift
stream_length = 150
d = 8
hidden = 16
k = 2
w = 3
init_epochs = 1
gamma = 0.5
lr = 0.01
seed = 4
";

fn write_config(dir: &Path, extra: &str) -> String {
    let path = dir.join("run.cfg");
    fs::write(&path, format!("{SMALL}{extra}")).unwrap();
    path.to_str().unwrap().to_string()
}

#[test]
fn train_eval_inspect_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "");
    let out = dir.path().join("art");
    let out = out.to_str().unwrap();
    let t = geostream(&["train", "--config", &cfg, "--out", out]);
    assert!(t.status.success(), "{}", String::from_utf8_lossy(&t.stderr));
    assert!(stdout(&t).contains("120 training events"));
    for f in ["trace.csv", "metrics.json", "qnet.bin", "kg.snapshot", "config.txt"] {
        assert!(Path::new(out).join(f).exists(), "{f}");
    }

    let e = geostream(&["eval", "--config", &cfg, "--artifacts", out]);
    assert!(e.status.success(), "{}", String::from_utf8_lossy(&e.stderr));
    assert!(stdout(&e).contains("30 test events"));
    assert!(stdout(&e).contains("prec_cat="));

    let i = geostream(&["inspect-kg", "--artifacts", out]);
    assert!(i.status.success());
    let text = stdout(&i);
    assert!(text.contains("version 120"), "{text}");
    assert!(text.contains("  poi 30"));
    assert!(text.contains("  user 20"));
}

#[test]
fn repeated_training_is_byte_identical_and_seed_matters() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "");
    let run = |name: &str, seed: Option<&str>| {
        let out = dir.path().join(name);
        let out = out.to_str().unwrap().to_string();
        let mut args = vec!["train", "--config", &cfg, "--out", &out];
        if let Some(s) = seed {
            args.extend(["--seed", s]);
        }
        assert!(geostream(&args).status.success());
        fs::read(Path::new(&out).join("trace.csv")).unwrap()
    };
    let a = run("a", None);
    let b = run("b", None);
    let c = run("c", Some("5"));
    assert_eq!(a, b);
    assert_ne!(a, c);
}

#[test]
fn sweep_prints_one_row_per_weight_setting() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "stream_length = 60\n");
    let o = geostream(&["sweep-reward", "--config", &cfg, "--grid-steps", "2"]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let text = stdout(&o);
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(
        lines[0],
        "lambda_d,lambda_c,lambda_p,prec_cat,rec_cat,avg_sim,avg_dist_km"
    );
    assert_eq!(lines.len(), 7);
}

#[test]
fn tsv_dataset_with_word_vectors_from_env() {
    let dir = tempfile::tempdir().unwrap();
    let mut tsv = String::new();
    let venues = [
        ("v0", "Coffee Shop", 40.70),
        ("v1", "Bar", 40.72),
        ("v2", "Park", 40.75),
    ];
    for i in 0..40 {
        let (v, cat, lat) = venues[i % 3];
        tsv.push_str(&format!(
            "u{}\t{v}\tc{}\t{cat}\t{lat}\t-74.0\t-240\t{}\n",
            i % 2,
            i % 3,
            1_333_476_009 + 60 * i
        ));
    }
    fs::write(dir.path().join("checkins.tsv"), tsv).unwrap();
    fs::write(dir.path().join("vec.txt"), "coffee 1 0\nshop 0 1\nbar 1 1\npark -1 0\n").unwrap();
    let cfg = dir.path().join("run.cfg");
    fs::write(
        &cfg,
        "dataset = checkins.tsv\nstream_length = 40\nd = 8\nhidden = 8\nk = 1\nw = 2\ninit_epochs = 1\n",
    )
    .unwrap();
    let out = dir.path().join("art");
    let o = Command::new(env!("CARGO_BIN_EXE_geostream"))
        .args([
            "train",
            "--config",
            cfg.to_str().unwrap(),
            "--out",
            out.to_str().unwrap(),
        ])
        .env("GEOSTREAM_WORDVECS", dir.path().join("vec.txt"))
        .output()
        .unwrap();
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    assert!(stdout(&o).contains("32 training events"));

    let o = Command::new(env!("CARGO_BIN_EXE_geostream"))
        .args([
            "train",
            "--config",
            cfg.to_str().unwrap(),
            "--out",
            out.to_str().unwrap(),
        ])
        .env("GEOSTREAM_WORDVECS", dir.path().join("missing.txt"))
        .output()
        .unwrap();
    assert!(!o.status.success());
    assert!(String::from_utf8_lossy(&o.stderr).contains("missing.txt"));
}

#[test]
fn bad_input_exits_nonzero() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "colour = red\n");
    let o = geostream(&["train", "--config", &cfg]);
    assert!(!o.status.success());
    assert!(String::from_utf8_lossy(&o.stderr).contains("colour"));

    let good = write_config(dir.path(), "");
    let o = geostream(&[
        "eval",
        "--config",
        &good,
        "--artifacts",
        dir.path().join("none").to_str().unwrap(),
    ]);
    assert!(!o.status.success());
    assert!(!geostream(&["train"]).status.success());
}

#[test]
fn mismatched_artifacts_are_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "");
    let out = dir.path().join("art");
    assert!(geostream(&["train", "--config", &cfg, "--out", out.to_str().unwrap()])
        .status
        .success());
    let wide = write_config(dir.path(), "d = 12\n");
    let o = geostream(&["eval", "--config", &wide, "--artifacts", out.to_str().unwrap()]);
    assert!(!o.status.success());
    assert!(String::from_utf8_lossy(&o.stderr).to_lowercase().contains("compat"));
}
