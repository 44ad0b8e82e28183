//! End-to-end behavior of the `entangle` binary: exit codes, output headers, determinism.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use entangle_cli::config::{
    AttackMethod, AttackSection, DataSource, DknnSection, ExperimentConfig, ModelConfig,
};
use entangle_cli::data::load_dataset;
use entangle_cli::presets::digits_base;
use entangle_core::dataio::{read_csv, read_idx_images};
use entangle_core::dknn::DknnConfig;
use tempfile::TempDir;

fn entangle(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_entangle"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn code(o: &Output) -> i32 {
    o.status.code().expect("exited normally")
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

/// Small digits configuration that trains in well under a second.
fn tiny(seed: u64) -> ExperimentConfig {
    let mut cfg = digits_base(seed);
    cfg.dataset.as_mut().unwrap().source = DataSource::SyntheticDigits {
        n_train: 200,
        n_test: 20,
    };
    cfg.model = Some(ModelConfig { hidden: vec![12] });
    let sched = cfg.schedule.as_mut().unwrap();
    sched.steps = 20;
    sched.batch_size = 32;
    sched.eval_every = 10;
    sched.train_eval_rows = Some(50);
    cfg
}

fn write_config(dir: &Path, name: &str, cfg: &ExperimentConfig) -> PathBuf {
    let p = dir.join(name);
    fs::write(&p, cfg.to_json()).unwrap();
    p
}

fn sorted_files(dir: &Path) -> Vec<PathBuf> {
    let mut v: Vec<_> = fs::read_dir(dir)
        .unwrap()
        .map(|e| e.unwrap().path())
        .collect();
    v.sort();
    v
}

fn train_tiny(dir: &Path) -> PathBuf {
    let cfg = write_config(dir, "tiny.json", &tiny(0));
    let out = dir.join("train");
    let o = entangle(&["train", "--config", s(&cfg), "--out", s(&out)]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    out.join("model.ckpt")
}

#[test]
fn unknown_preset_is_a_usage_error() {
    let o = entangle(&["toy", "--preset", "nope"]);
    assert_eq!(code(&o), 2);
    assert!(String::from_utf8_lossy(&o.stderr).contains("nope"));
    assert_eq!(code(&entangle(&["show-config", "--preset", "nope"])), 2);
}

#[test]
fn missing_preset_and_config_is_a_usage_error() {
    assert_eq!(code(&entangle(&["toy"])), 2);
}

#[test]
fn missing_checkpoint_exits_2() {
    let dir = TempDir::new().unwrap();
    let ckpt = dir.path().join("absent.ckpt");
    for cmd in ["measure", "attack", "dknn"] {
        let preset = match cmd {
            "measure" => "optimized",
            "attack" => "fgsm-sweep",
            _ => "credibility",
        };
        let o = entangle(&[
            cmd,
            "--preset",
            preset,
            "--checkpoint",
            s(&ckpt),
            "--out",
            s(dir.path()),
        ]);
        assert_eq!(code(&o), 2, "{cmd}");
    }
}

#[test]
fn malformed_or_unknown_config_keys_exit_2() {
    let dir = TempDir::new().unwrap();
    let bad = dir.path().join("bad.json");
    fs::write(&bad, "{ \"seed\": 0, ").unwrap();
    assert_eq!(code(&entangle(&["toy", "--config", s(&bad)])), 2);

    let mut v: serde_json::Value = serde_json::from_str(&tiny(0).to_json()).unwrap();
    v["learning_rate"] = serde_json::json!(0.1);
    fs::write(&bad, v.to_string()).unwrap();
    assert_eq!(code(&entangle(&["train", "--config", s(&bad)])), 2);

    assert_eq!(
        code(&entangle(&[
            "toy",
            "--config",
            s(&dir.path().join("absent.json"))
        ])),
        2
    );
}

#[test]
fn missing_section_exits_2() {
    let dir = TempDir::new().unwrap();
    let cfg = write_config(dir.path(), "c.json", &tiny(0));
    let o = entangle(&["toy", "--config", s(&cfg), "--out", s(dir.path())]);
    assert_eq!(code(&o), 2);
}

#[test]
fn empty_test_set_exits_2() {
    let dir = TempDir::new().unwrap();
    let mut cfg = tiny(0);
    cfg.dataset.as_mut().unwrap().source = DataSource::SyntheticDigits {
        n_train: 200,
        n_test: 0,
    };
    let p = write_config(dir.path(), "c.json", &cfg);
    let o = entangle(&[
        "train",
        "--config",
        s(&p),
        "--out",
        s(&dir.path().join("o")),
    ]);
    assert_eq!(code(&o), 2);
}

#[test]
fn toy_outputs_are_deterministic_and_carry_the_config_hash() {
    let dir = TempDir::new().unwrap();
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    for out in [&a, &b] {
        let o = entangle(&[
            "toy",
            "--preset",
            "triplet-compare",
            "--steps",
            "20",
            "--seed",
            "3",
            "--out",
            s(out),
        ]);
        assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    }
    let (fa, fb) = (sorted_files(&a), sorted_files(&b));
    assert!(!fa.is_empty());
    assert_eq!(fa.len(), fb.len());
    for (x, y) in fa.iter().zip(&fb) {
        let bytes = fs::read(x).unwrap();
        assert_eq!(bytes, fs::read(y).unwrap(), "{}", x.display());
        let text = String::from_utf8(bytes).unwrap();
        let mut lines = text.lines();
        let hash = lines
            .next()
            .unwrap()
            .strip_prefix("# config_hash=")
            .expect("hash line");
        assert_eq!(hash.len(), 64);
        assert!(hash.chars().all(|c| c.is_ascii_hexdigit()));
        assert_eq!(lines.next(), Some("# command=toy"));
    }
}

#[test]
fn seeds_change_toy_outputs() {
    let dir = TempDir::new().unwrap();
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    for (out, seed) in [(&a, "1"), (&b, "2")] {
        assert_eq!(
            code(&entangle(&[
                "toy",
                "--preset",
                "fig1",
                "--steps",
                "5",
                "--seed",
                seed,
                "--out",
                s(out)
            ])),
            0
        );
    }
    let f = "trajectory_snn_min.csv";
    assert_ne!(fs::read(a.join(f)).unwrap(), fs::read(b.join(f)).unwrap());
}

#[test]
fn shown_config_reproduces_the_preset_run() {
    let dir = TempDir::new().unwrap();
    let shown = entangle(&["show-config", "--preset", "fig7", "--seed", "4"]);
    assert_eq!(code(&shown), 0);
    let cfg = dir.path().join("fig7.json");
    fs::write(&cfg, &shown.stdout).unwrap();
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    let args = ["--steps", "10", "--seed", "4"];
    assert_eq!(
        code(&entangle(
            &[&["toy", "--preset", "fig7", "--out", s(&a)][..], &args].concat()
        )),
        0
    );
    assert_eq!(
        code(&entangle(
            &[&["toy", "--config", s(&cfg), "--out", s(&b)][..], &args].concat()
        )),
        0
    );
    for (x, y) in sorted_files(&a).iter().zip(&sorted_files(&b)) {
        assert_eq!(
            fs::read(x).unwrap(),
            fs::read(y).unwrap(),
            "{}",
            x.display()
        );
    }
}

#[test]
fn zero_epsilon_attack_returns_the_clean_inputs() {
    let dir = TempDir::new().unwrap();
    let ckpt = train_tiny(dir.path());
    let mut cfg = tiny(0);
    cfg.attack = Some(AttackSection {
        method: AttackMethod::Fgsm,
        epsilons: vec![0.0, 0.3],
        step_size: 0.01,
        steps: 1,
        targeted: None,
        points: 15,
    });
    let p = write_config(dir.path(), "attack.json", &cfg);
    let out = dir.path().join("attack");
    let o = entangle(&[
        "attack",
        "--config",
        s(&p),
        "--checkpoint",
        s(&ckpt),
        "--out",
        s(&out),
    ]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));

    let data = load_dataset(cfg.dataset.as_ref().unwrap(), cfg.seed).unwrap();
    let clean = data.test.points();
    let adv0 = read_idx_images(&out.join("adv_0_images.idx")).unwrap();
    assert_eq!(adv0.shape(), (15, clean.cols()));
    for i in 0..15 {
        assert_eq!(adv0.row(i), clean.row(i));
    }
    let adv1 = read_idx_images(&out.join("adv_1_images.idx")).unwrap();
    for i in 0..15 {
        for (a, c) in adv1.row(i).iter().zip(clean.row(i)) {
            assert!((a - c).abs() <= 0.3 + 1e-12 && (0.0..=1.0).contains(a));
        }
    }
    let manifest = read_csv(&out.join("attack.csv")).unwrap();
    assert_eq!(manifest.floats("epsilon").unwrap(), vec![0.0, 0.3]);
}

#[test]
fn ood_run_exports_logits_for_both_sets() {
    let dir = TempDir::new().unwrap();
    let ckpt = train_tiny(dir.path());
    let mut cfg = tiny(0);
    cfg.dknn = Some(DknnSection {
        index: DknnConfig {
            k: 5,
            ..DknnConfig::default()
        },
        points: 10,
        ood: true,
        bins: 4,
    });
    let p = write_config(dir.path(), "dknn.json", &cfg);
    let out = dir.path().join("dknn");
    let o = entangle(&[
        "dknn",
        "--config",
        s(&p),
        "--checkpoint",
        s(&ckpt),
        "--out",
        s(&out),
    ]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let logits = read_csv(&out.join("logits.csv")).unwrap();
    assert_eq!(logits.floats("logit_9").unwrap().len(), 20);
    for f in [
        "credibility.csv",
        "curve.csv",
        "ood_credibility.csv",
        "summary.csv",
    ] {
        assert!(out.join(f).exists(), "{f}");
    }
}
