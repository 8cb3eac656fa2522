use std::fs;
use std::path::{Path, PathBuf};
use std::process::Command;

use sha2::{Digest, Sha256};
use tempfile::TempDir;

use symconn_cli::{
    cmd_ablate, cmd_analyze, cmd_eval, cmd_sample, cmd_synth, cmd_train, evaluate_subjects, train_config,
};
use symconn_core::conndata::{load_connectome, load_matrix, synth_dataset, SynthConfig};
use symconn_core::symdiffusion::{build_schedule, sample_sc, Denoiser};
use symconn_core::trainer::{Sample, TrainConfig, CHECKPOINT_FILE};
use symconn_core::{Connectome, Error, Group, Result, TimeSeriesPanel};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_symconn"))
}

fn write_json(dir: &Path, name: &str, json: &str) -> PathBuf {
    let p = dir.join(name);
    fs::write(&p, json).unwrap();
    p
}

const SMALL_SYNTH: &str = r#"{"n_subjects": 20, "n": 8, "s": 32, "seed": 3, "store_volumes": false}"#;
const TINY_TRAIN: &str = r#"{"T": 20, "d": 5, "L": 1, "epochs": 2, "batch_size": 4, "model_dim": 8, "heads": 2}"#;

fn small_dataset(dir: &Path) -> PathBuf {
    let cfg = write_json(dir, "synth.json", SMALL_SYNTH);
    let data = dir.join("data");
    cmd_synth(Some(&cfg), None, &data).unwrap();
    data
}

fn tiny_config(dir: &Path) -> TrainConfig {
    train_config(Some(&write_json(dir, "train.json", TINY_TRAIN)), None).unwrap()
}

fn hash_file(p: &Path) -> String {
    hex::encode(Sha256::digest(fs::read(p).unwrap()))
}

#[test]
fn default_synth_has_120_subjects_per_group_and_16x16_scs() {
    let dir = TempDir::new().unwrap();
    let m = cmd_synth(None, None, dir.path()).unwrap();
    assert_eq!(m.subjects.len(), 240);
    assert_eq!(m.subjects.iter().filter(|e| e.group == Group::Nc).count(), 120);
    assert_eq!(m.subjects.iter().filter(|e| e.group == Group::Mci).count(), 120);
    for e in &m.subjects {
        let (r, c, _) = load_matrix(&dir.path().join(e.sc.as_ref().unwrap())).unwrap();
        assert_eq!((r, c), (16, 16));
    }
}

#[test]
fn same_seed_gives_identical_manifest_hash() {
    let dir = TempDir::new().unwrap();
    let cfg = write_json(dir.path(), "synth.json", SMALL_SYNTH);
    let (a, b, c) = (dir.path().join("a"), dir.path().join("b"), dir.path().join("c"));
    cmd_synth(Some(&cfg), None, &a).unwrap();
    cmd_synth(Some(&cfg), None, &b).unwrap();
    cmd_synth(Some(&cfg), Some(4), &c).unwrap();
    let h = |d: &Path| hash_file(&d.join("manifest.json"));
    assert_eq!(h(&a), h(&b));
    assert_ne!(h(&a), h(&c));
}

#[test]
fn sampling_with_equal_seeds_is_identical_and_eval_is_finite() {
    let dir = TempDir::new().unwrap();
    let data = small_dataset(dir.path());
    let cfg = tiny_config(dir.path());
    let run = dir.path().join("run");
    cmd_train(&cfg, &data, &run, false, false).unwrap();
    let ckpt = run.join(CHECKPOINT_FILE);
    let ids = vec!["sub0003".to_string(), "sub0010".to_string()];
    for out in ["s1", "s2"] {
        cmd_sample(&ckpt, &data, &ids, 9, &dir.path().join(out)).unwrap();
    }
    for id in &ids {
        let f = format!("{id}.csv");
        assert_eq!(
            fs::read(dir.path().join("s1").join(&f)).unwrap(),
            fs::read(dir.path().join("s2").join(&f)).unwrap()
        );
    }
    let rows = cmd_eval(&ckpt, &data, 0, &dir.path().join("eval")).unwrap();
    assert!(!rows.is_empty());
    assert!(rows.iter().all(|r| r.metrics.as_array().iter().all(|v| v.is_finite())));
    let metrics = fs::read_to_string(dir.path().join("eval/metrics.csv")).unwrap();
    assert_eq!(metrics.lines().count(), rows.len() + 1);
    assert!(dir.path().join("eval/scatter.csv").exists());
}

struct Oracle(Connectome);

impl Denoiser for Oracle {
    fn predict(&self, _a: &Connectome, _f: &TimeSeriesPanel, _t: usize) -> Result<Connectome> {
        Ok(self.0.clone())
    }
}

#[test]
fn oracle_generator_scores_perfectly() {
    let dir = TempDir::new().unwrap();
    let ds = synth_dataset(&SynthConfig {
        n_subjects: 12,
        n: 8,
        s: 32,
        store_volumes: false,
        ..SynthConfig::default()
    })
    .unwrap();
    let samples: Vec<Sample> = ds.subjects.iter().map(|r| Sample::from_record(r).unwrap()).collect();
    let sched = build_schedule(100, 1e-4, 0.02).unwrap();
    let which: Vec<usize> = (0..samples.len()).collect();
    let rows = evaluate_subjects(
        &samples,
        &which,
        0,
        dir.path(),
        |s, rng| {
            let f = TimeSeriesPanel::new(s.target.n(), 1, vec![0.0; s.target.n()])?;
            sample_sc(&Oracle(s.target.clone()), &f, &sched, 10, rng)
        },
        0.2,
    )
    .unwrap();
    for r in &rows {
        assert_eq!(r.metrics.mae, 0.0, "{}", r.id);
        assert_eq!(r.metrics.cc, 1.0, "{}", r.id);
    }
}

#[test]
fn empirical_analysis_recovers_all_planted_edges() {
    let dir = TempDir::new().unwrap();
    let cfg = SynthConfig {
        n_subjects: 80,
        store_volumes: false,
        ..SynthConfig::default()
    };
    let ds = synth_dataset(&cfg).unwrap();
    ds.write(dir.path()).unwrap();
    let report = cmd_analyze(
        &dir.path().join("sc"),
        &dir.path().join("manifest.json"),
        None,
        &dir.path().join("out"),
    )
    .unwrap();
    let found: Vec<(usize, usize)> = report.increased.iter().map(|e| (e.i, e.j)).collect();
    for e in &ds.planted_edges {
        assert!(found.contains(e), "planted edge {e:?} missing from {found:?}");
    }
    // The four hubs carry four planted edges each, every other ROI at most one.
    let mut hubs: Vec<usize> = (0..cfg.n)
        .filter(|&r| ds.planted_edges.iter().filter(|&&(i, j)| i == r || j == r).count() == 4)
        .collect();
    let mut top20 = report.top20.clone();
    hubs.sort_unstable();
    top20.sort_unstable();
    assert_eq!(top20, hubs);
    let text = fs::read_to_string(dir.path().join("out/report.txt")).unwrap();
    assert!(text.contains("top 20% ROIs"));
}

#[test]
fn analyze_with_an_empty_group_is_a_data_error() {
    let dir = TempDir::new().unwrap();
    let data = small_dataset(dir.path());
    let only = dir.path().join("only");
    fs::create_dir_all(&only).unwrap();
    fs::copy(data.join("sc/sub0000.csv"), only.join("sub0000.csv")).unwrap();
    let err = cmd_analyze(&only, &data.join("manifest.json"), None, &dir.path().join("out")).unwrap_err();
    assert!(matches!(err, Error::Data(_)), "{err}");
}

#[test]
fn resume_with_a_different_config_is_a_version_error() {
    let dir = TempDir::new().unwrap();
    let data = small_dataset(dir.path());
    let cfg = tiny_config(dir.path());
    let run = dir.path().join("run");
    cmd_train(&cfg, &data, &run, false, false).unwrap();
    let other = TrainConfig {
        lr: 5e-4,
        ..cfg.clone()
    };
    let err = cmd_train(&other, &data, &run, true, false).unwrap_err();
    assert!(matches!(err, Error::Version(_)), "{err}");
    // A longer budget is not a different configuration.
    let longer = TrainConfig { epochs: 3, ..cfg };
    assert_eq!(cmd_train(&longer, &data, &run, true, false).unwrap().epoch, 3);
}

#[test]
fn ablation_table_has_three_rows_of_eight_metrics() {
    let dir = TempDir::new().unwrap();
    let data = small_dataset(dir.path());
    let cfg = tiny_config(dir.path());
    let table = cmd_ablate(&cfg, &data, &dir.path().join("abl")).unwrap();
    let lines: Vec<&str> = table.lines().collect();
    assert_eq!(lines.len(), 4);
    assert_eq!(lines[0].split(',').count(), 9);
    for (line, name) in lines[1..].iter().zip(["full", "no_gan", "no_scc"]) {
        let cells: Vec<&str> = line.split(',').collect();
        assert_eq!(cells[0], name);
        assert_eq!(cells.len(), 9);
        assert!(cells[1..].iter().all(|c| c.contains('±')));
    }
    assert_eq!(fs::read_to_string(dir.path().join("abl/ablation.csv")).unwrap(), table);
}

#[test]
fn binary_exit_codes() {
    let dir = TempDir::new().unwrap();
    let out = dir.path().join("x");

    let bad = write_json(dir.path(), "bad.json", r#"{"n": 2}"#);
    let s = bin()
        .args(["synth", "--config"])
        .arg(&bad)
        .arg("--out")
        .arg(&out)
        .status()
        .unwrap();
    assert_eq!(s.code(), Some(2), "invalid synth config");

    let s = bin()
        .args(["train", "--data"])
        .arg(dir.path().join("missing"))
        .arg("--out")
        .arg(&out)
        .status()
        .unwrap();
    assert_eq!(s.code(), Some(3), "missing dataset");

    let data = small_dataset(dir.path());
    let wild = write_json(
        dir.path(),
        "wild.json",
        r#"{"T": 20, "d": 5, "L": 1, "epochs": 3, "batch_size": 4, "model_dim": 8, "heads": 2, "lr": 1e300}"#,
    );
    let s = bin()
        .args(["train", "--config"])
        .arg(&wild)
        .arg("--data")
        .arg(&data)
        .arg("--out")
        .arg(dir.path().join("wild"))
        .output()
        .unwrap();
    assert_eq!(s.status.code(), Some(4), "{}", String::from_utf8_lossy(&s.stderr));
    assert!(dir.path().join("wild/diverged.ckpt").exists());

    let s = bin()
        .args(["synth", "--config"])
        .arg(write_json(dir.path(), "ok.json", SMALL_SYNTH))
        .arg("--out")
        .arg(dir.path().join("ok"))
        .status()
        .unwrap();
    assert_eq!(s.code(), Some(0));
    assert!(load_connectome(&dir.path().join("ok/sc/sub0000.csv")).is_ok());
}
