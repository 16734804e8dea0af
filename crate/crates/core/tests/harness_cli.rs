//! Config parsing, the optimizer schedule and the `fume` binary end to end.

use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use fume::harness::cli::{cli_eval, count_table};
use fume::harness::{cosine_lr, TrainConfig, KEYS};
use fume::net::{checkpoint, FumeNet, Variant};
use fume::synthgas::{build_dataset, Split};

fn fume(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_fume")).args(args).output().unwrap()
}

fn write_config(dir: &Path, lines: &[&str]) -> String {
    let path = dir.join("run.cfg");
    fs::write(&path, lines.join("\n")).unwrap();
    path.to_str().unwrap().to_string()
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

#[test]
fn defaults_follow_the_training_protocol() {
    let c = TrainConfig::default();
    assert_eq!((c.lr, c.batch_size, c.epochs), (1e-3, 16, 20));
    assert_eq!((c.weight_decay, c.beta1, c.beta2), (1e-2, 0.9, 0.999));
    assert_eq!((c.bench_warmup, c.bench_iterations), (100, 1000));
    assert_eq!(c.variant, Variant::Fume);
    assert_eq!(c.size, 64);
}

#[test]
fn config_text_round_trips() {
    let mut c = TrainConfig::default();
    c.set("variant", "co2-only", Path::new("/x")).unwrap();
    c.set("dataset", "data/a", Path::new("/x")).unwrap();
    c.set("lambda", "0.25", Path::new("/x")).unwrap();
    c.set("out", "/abs/runs", Path::new("/x")).unwrap();
    let text = c.to_text();
    assert_eq!(text.lines().filter(|l| l.contains(" = ")).count(), KEYS.len());
    let back = TrainConfig::parse(&text, Path::new("/elsewhere")).unwrap();
    assert_eq!(back, c);
    assert_eq!(back.dataset, Path::new("/x/data/a"));
}

#[test]
fn config_errors_are_exit_code_two() {
    for text in [
        "epochs = 3\nepochs = 4",
        "colour = blue",
        "variant = no-such-variant",
        "lr = fast",
        "size = 48",
        "just words",
        "counts = 6.5",
    ] {
        let e = TrainConfig::parse(text, Path::new(".")).unwrap_err();
        assert_eq!(e.exit_code(), 2, "{text}: {e}");
    }
    let ok = TrainConfig::parse("# comment\n\n seed = 4 # trailing\n", Path::new(".")).unwrap();
    assert_eq!(ok.seed, 4);
}

#[test]
fn cosine_schedule_halves_midway() {
    assert_eq!(cosine_lr(1e-3, 0, 100), 1e-3);
    assert!((cosine_lr(1e-3, 50, 100) - 5e-4).abs() < 1e-18);
    assert!(cosine_lr(1e-3, 100, 100).abs() < 1e-18);
    for t in 0..100 {
        assert!(cosine_lr(1e-3, t + 1, 100) <= cosine_lr(1e-3, t, 100));
    }
}

#[test]
fn count_lists_every_variant() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), &["seed = 0"]);
    let o = fume(&["count", "--config", &cfg]);
    assert!(o.status.success());
    let text = stdout(&o);
    assert_eq!(text, count_table().unwrap());
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some("variant,params,params_m,macs_g"));
    assert_eq!(lines.count(), Variant::ALL.len());
    let fume_row = text.lines().find(|l| l.starts_with("fume,")).unwrap();
    let params: f64 = fume_row.split(',').nth(1).unwrap().parse().unwrap();
    assert!((params / 1.28e6 - 1.0).abs() <= 0.15);
}

#[test]
fn failures_have_distinct_exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let code = |o: Output| o.status.code().unwrap();

    let missing_cfg = code(fume(&["train", "--config", d.join("absent.cfg").to_str().unwrap()]));
    let bad_variant = write_config(d, &["variant = tri-modal"]);
    let unknown_variant = code(fume(&["count", "--config", &bad_variant]));
    let cfg = write_config(d, &["dataset = nowhere", "out = runs"]);
    let missing_data = code(fume(&["train", "--config", &cfg]));
    fs::write(d.join("broken.fume"), b"FUME?").unwrap();
    let corrupt = code(fume(&["bench", "--config", &cfg, "--checkpoint", d.join("broken.fume").to_str().unwrap()]));
    let bad_arg = code(fume(&["explode", "--config", &cfg]));

    assert_eq!((missing_cfg, unknown_variant, missing_data, corrupt), (2, 2, 3, 5));
    assert_ne!(bad_arg, 0);
}

#[test]
fn generate_train_eval_bench_pipeline() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let cfg = write_config(
        d,
        &[
            "seed = 3",
            "size = 32",
            "counts = 6.5:10,5.9:10,5.0:10",
            "epochs = 2",
            "batch_size = 8",
            "dataset = data",
            "out = runs",
            "bench_size = 32",
            "bench_warmup = 2",
            "bench_iterations = 5",
        ],
    );
    let g = fume(&["generate", "--config", &cfg]);
    assert!(g.status.success(), "{}", String::from_utf8_lossy(&g.stderr));
    assert!(stdout(&g).contains("train: 21"));
    assert!(d.join("data/manifest.csv").exists());

    let t = fume(&["train", "--config", &cfg]);
    assert!(t.status.success(), "{}", String::from_utf8_lossy(&t.stderr));
    assert_eq!(stdout(&t).lines().filter(|l| l.starts_with("epoch")).count(), 2);
    assert!(d.join("runs/checkpoint.fume").exists());
    let record = fs::read_to_string(d.join("runs/run_record.csv")).unwrap();
    assert_eq!(record.lines().filter(|l| !l.starts_with('#')).count(), 3);

    let e = fume(&["eval", "--config", &cfg, "--split", "val", "--out", d.join("evals").to_str().unwrap(), "--checkpoint", d.join("runs/checkpoint.fume").to_str().unwrap()]);
    assert!(e.status.success(), "{}", String::from_utf8_lossy(&e.stderr));
    assert!(stdout(&e).contains("accuracy="));
    let csv = fs::read_to_string(d.join("evals/eval_val.csv")).unwrap();
    assert_eq!(csv.lines().count(), 2);
    assert!(d.join("evals/eval_val.txt").exists());

    let b = fume(&["bench", "--config", &cfg]);
    let text = stdout(&b);
    assert!(text.contains("warmup=2\n") && text.contains("iterations=5\n"), "{text}");
}

#[test]
fn random_init_eval_is_near_chance() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = TrainConfig {
        size: 32,
        counts: "6.5:60,5.9:60,5.0:60".parse().unwrap(),
        dataset: dir.path().join("data"),
        out: dir.path().join("out"),
        ..TrainConfig::default()
    };
    cfg.seed = 12;
    build_dataset(&cfg.counts, cfg.seed, cfg.size, &cfg.dataset).unwrap();
    let ckpt = dir.path().join("init.fume");
    checkpoint::save(&FumeNet::build(Variant::Fume, 5).unwrap(), &ckpt).unwrap();
    let mut sink = Vec::new();
    let report = cli_eval(&cfg, &ckpt, Split::Test, &mut sink).unwrap();
    let acc = report.accuracy.unwrap();
    assert!((acc - 100.0 / 3.0).abs() <= 10.0, "{acc}");
    assert!(report.params_m.is_some() && report.macs_g.is_some());
}
