use std::collections::HashSet;
use std::path::{Path, PathBuf};
use std::process::Command;

use haaqi_cli::config::RunConfig;
use haaqi_cli::manifest::{Manifest, Split, MANIFEST_FILE};

struct Out {
    code: i32,
    stdout: String,
    stderr: String,
}

impl Out {
    fn run_dir(&self) -> PathBuf {
        PathBuf::from(self.stdout.trim())
    }
}

fn haaqi(root: &Path, args: &[&str]) -> Out {
    let o = Command::new(env!("CARGO_BIN_EXE_haaqi"))
        .args(args)
        .arg("--out")
        .arg(root.join("runs"))
        .env_remove("HAAQI_RUN_ROOT")
        .current_dir(root)
        .output()
        .unwrap();
    Out { code: o.status.code().unwrap_or(-1), stdout: String::from_utf8_lossy(&o.stdout).into(), stderr: String::from_utf8_lossy(&o.stderr).into() }
}

fn ok(root: &Path, args: &[&str]) -> PathBuf {
    let o = haaqi(root, args);
    assert_eq!(o.code, 0, "{args:?}: {}", o.stderr);
    o.run_dir()
}

fn write_config(root: &Path, body: &str) -> String {
    let p = root.join("run.toml");
    std::fs::write(&p, body).unwrap();
    p.to_string_lossy().into_owned()
}

const SMALL: &str = r#"
seed = 5

[corpus]
synth_clips = 10
clip_seconds = 0.5
conditions_per_clip = 5
audiograms_per_row = 2
"#;

const TOY: &str = r#"
seed = 9

[corpus]
synth_clips = 6
clip_seconds = 0.5
conditions_per_clip = 4

[encoder]
num_layers = 4
model_dim = 16
num_heads = 2
ff_dim = 32

[predictor]
features = "encoder-ws-adapter"
model_dim = 16
num_layers = 4
lstm_hidden = 8
fc_dim = 16
att_heads = 2

[train]
batch_size = 4
max_steps = 5

[student]
kept_layers = 2
tapped_teacher_layers = [2, 3, 4]

[distill]
batch_size = 4
steps = 3

[eval]
spl_clips = 4
bench_clips = 2
bench_warmup = 0
bench_repeats = 2
"#;

#[test]
fn corpus_cardinality_partition_and_determinism() {
    let t = tempfile::tempdir().unwrap();
    let cfg = write_config(t.path(), SMALL);
    let a = ok(t.path(), &["corpus", "build", "--config", &cfg, "--jobs", "3"]);
    let b = ok(t.path(), &["corpus", "build", "--config", &cfg, "--jobs", "1"]);
    assert!(a.ends_with("corpus-build-001") && b.ends_with("corpus-build-002"));

    let m = Manifest::load(&a).unwrap();
    assert_eq!(m.rows.len(), 100);
    assert_eq!(std::fs::read_dir(a.join("audio")).unwrap().count(), 100);
    for r in &m.rows {
        assert!(m.resolve(&r.audio_path).is_file());
    }

    let train_conditions: HashSet<&str> = m.rows_in(&[Split::Train]).iter().map(|r| r.condition_id.as_str()).collect();
    for r in m.rows_in(&[Split::TestUnseen]) {
        assert!(!train_conditions.contains(r.condition_id.as_str()));
        assert!(m.conditions.is_unseen(&r.condition_id));
    }
    for r in &m.rows {
        assert_eq!(m.conditions.is_unseen(&r.condition_id), r.split == Split::TestUnseen);
    }

    assert_eq!(std::fs::read(a.join(MANIFEST_FILE)).unwrap(), std::fs::read(b.join(MANIFEST_FILE)).unwrap());
    for r in m.rows.iter().step_by(7) {
        assert_eq!(std::fs::read(a.join(&r.audio_path)).unwrap(), std::fs::read(b.join(&r.audio_path)).unwrap());
    }
    let c = ok(t.path(), &["corpus", "build", "--config", &cfg, "--seed", "6"]);
    assert_ne!(std::fs::read(a.join(MANIFEST_FILE)).unwrap(), std::fs::read(c.join(MANIFEST_FILE)).unwrap());
}

#[test]
fn manifest_round_trip_and_relocation() {
    let t = tempfile::tempdir().unwrap();
    let cfg = write_config(t.path(), SMALL);
    let dir = ok(t.path(), &["corpus", "build", "--config", &cfg]);
    let m = Manifest::load(&dir.join(MANIFEST_FILE)).unwrap();
    let elsewhere = t.path().join("copy");
    m.save(&elsewhere).unwrap();
    let back = Manifest::load(&elsewhere).unwrap();
    assert_eq!(back.rows, m.rows);
    assert_eq!(back.audiograms, m.audiograms);
    assert_eq!(back.conditions, m.conditions);

    let moved = m.relocated(&elsewhere).unwrap();
    moved.save(&elsewhere).unwrap();
    let back = Manifest::load(&elsewhere).unwrap();
    for (x, y) in back.rows.iter().zip(&m.rows) {
        assert_eq!(std::fs::canonicalize(back.resolve(&x.audio_path)).unwrap(), std::fs::canonicalize(m.resolve(&y.audio_path)).unwrap());
    }
}

#[test]
fn csv_labels_are_imported_and_validated() {
    let t = tempfile::tempdir().unwrap();
    let cfg = write_config(t.path(), &SMALL.replace("audiograms_per_row = 2", "audiograms_per_row = 1"));
    let dir = ok(t.path(), &["corpus", "build", "--config", &cfg]);
    let m = Manifest::load(&dir).unwrap();
    let mut csv = String::from("clip_id,score\n");
    for (i, r) in m.rows.iter().enumerate() {
        csv.push_str(&format!("{},{}\n", r.clip_id, (i % 11) as f64 / 10.0));
    }
    std::fs::write(t.path().join("full.csv"), &csv).unwrap();
    let d = dir.to_string_lossy().into_owned();
    let labeled = ok(t.path(), &["label", "--config", &cfg, "--manifest", &d, "--provider", "csv", "--scores", "full.csv"]);
    let lm = Manifest::load(&labeled).unwrap();
    for (i, r) in lm.rows.iter().enumerate() {
        assert_eq!(r.true_score, Some((i % 11) as f64 / 10.0));
        assert!(lm.resolve(&r.audio_path).is_file());
    }

    let missing: String = csv.lines().take(csv.lines().count() - 1).map(|l| format!("{l}\n")).collect();
    std::fs::write(t.path().join("missing.csv"), missing).unwrap();
    let o = haaqi(t.path(), &["label", "--config", &cfg, "--manifest", &d, "--provider", "csv", "--scores", "missing.csv"]);
    assert_eq!(o.code, 1);
    let err: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(o.run_dir_from_stderr(t.path(), "label")).unwrap()).unwrap();
    assert!(err["error"].as_str().unwrap().contains("no score"));

    std::fs::write(t.path().join("bad.csv"), csv.replacen(",0\n", ",1.5\n", 1)).unwrap();
    let o = haaqi(t.path(), &["label", "--config", &cfg, "--manifest", &d, "--provider", "csv", "--scores", "bad.csv"]);
    assert_eq!(o.code, 1, "{}", o.stderr);
}

trait ErrorDir {
    fn run_dir_from_stderr(&self, root: &Path, command: &str) -> PathBuf;
}

impl ErrorDir for Out {
    /// The most recent `<command>-NNN/error.json`.
    fn run_dir_from_stderr(&self, root: &Path, command: &str) -> PathBuf {
        let mut dirs: Vec<PathBuf> = std::fs::read_dir(root.join("runs"))
            .unwrap()
            .map(|e| e.unwrap().path())
            .filter(|p| p.file_name().unwrap().to_string_lossy().starts_with(&format!("{command}-")))
            .collect();
        dirs.sort();
        dirs.last().unwrap().join("error.json")
    }
}

#[test]
fn usage_and_config_errors_have_distinct_exit_codes() {
    let t = tempfile::tempdir().unwrap();
    assert_eq!(haaqi(t.path(), &["frobnicate"]).code, 2);
    assert_eq!(haaqi(t.path(), &["eval", "--seed", "1"]).code, 2);

    let o = haaqi(t.path(), &["corpus", "audiograms"]);
    assert_eq!(o.code, 1);
    let rec: serde_json::Value = serde_json::from_str(&o.stderr).unwrap();
    assert_eq!(rec["exit_code"], 1);
    assert!(rec["chain"].as_array().unwrap().iter().any(|c| c.as_str().unwrap().contains("seed")));

    let bad = write_config(t.path(), "seed = 1\n[corpus]\nclip_seconds = -1.0\n");
    assert_eq!(haaqi(t.path(), &["corpus", "build", "--config", &bad]).code, 1);
    let unknown = write_config(t.path(), "seed = 1\n[corpus]\nclips = 3\n");
    assert_eq!(haaqi(t.path(), &["corpus", "build", "--config", &unknown]).code, 1);
    let missing_path = write_config(t.path(), "seed = 1\n[paths]\nencoder = \"nope.bin\"\n");
    assert_eq!(haaqi(t.path(), &["corpus", "build", "--config", &missing_path]).code, 1);
    assert!(!t.path().join("runs").join("corpus-build-001").exists());
}

#[test]
fn audiogram_bank_and_snapshot() {
    let t = tempfile::tempdir().unwrap();
    let dir = ok(t.path(), &["corpus", "audiograms", "--seed", "17"]);
    let csv = std::fs::read_to_string(dir.join("audiograms.csv")).unwrap();
    assert_eq!(csv.lines().count(), 301);
    let cats = std::fs::read_to_string(dir.join("categories.csv")).unwrap();
    assert_eq!(cats.lines().skip(1).filter(|l| l.ends_with(",50,40,10")).count(), 6);
    let snap = RunConfig::from_toml(&std::fs::read_to_string(dir.join("config.toml")).unwrap()).unwrap();
    assert_eq!(snap.seed, 17);
    assert_eq!(snap, snap.clone().with_seed(17));
    let again = ok(t.path(), &["corpus", "audiograms", "--config", dir.join("config.toml").to_str().unwrap()]);
    assert_eq!(csv, std::fs::read_to_string(again.join("audiograms.csv")).unwrap());
}

#[test]
fn train_distill_eval_bench_and_plot_data() {
    let t = tempfile::tempdir().unwrap();
    let cfg = write_config(t.path(), TOY);
    let corpus = ok(t.path(), &["corpus", "build", "--config", &cfg]);
    let labeled = ok(t.path(), &["label", "--config", &cfg, "--manifest", corpus.to_str().unwrap()]);
    let l = labeled.to_str().unwrap();
    let trained = ok(t.path(), &["train", "--config", &cfg, "--manifest", l]);
    for f in ["predictor.bin", "encoder.bin", "loss.csv", "train_report.json", "config.toml"] {
        assert!(trained.join(f).is_file(), "{f}");
    }
    assert_eq!(std::fs::read_to_string(trained.join("loss.csv")).unwrap().lines().count(), 6);
    let tr = trained.to_str().unwrap();
    let distilled = ok(t.path(), &["distill", "--config", &cfg, "--manifest", l, "--model", tr]);
    assert!(distilled.join("distilled.bin").is_file());
    assert_eq!(std::fs::read_to_string(distilled.join("distill.csv")).unwrap().lines().next().unwrap(), "step,L_qual,L_distil,cos2,cos3,cos4,mean_d");

    for model in [&trained, &distilled] {
        let ev = ok(t.path(), &["eval", "--config", &cfg, "--manifest", l, "--model", model.to_str().unwrap(), "--quantiles", "4", "--tolerance", "0.1"]);
        let report: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(ev.join("eval.json")).unwrap()).unwrap();
        let m = Manifest::load(&labeled).unwrap();
        assert_eq!(report["overall"]["count"].as_u64().unwrap() as usize, m.rows_in(&[Split::TestSeen, Split::TestUnseen]).len());
        assert!(std::fs::read_to_string(ev.join("eval.csv")).unwrap().starts_with("slice,count,lcc,srcc,mse\n"));
        assert!(std::fs::read_to_string(ev.join("eval_long.csv")).unwrap().starts_with("slice,metric,value,count\n"));
        assert_eq!(std::fs::read_to_string(ev.join("anchor.csv")).unwrap().lines().count(), 5);
    }

    let sw = ok(t.path(), &["spl-sweep", "--config", &cfg, "--manifest", l, "--model", tr, "--levels", "45,65,85"]);
    let csv = std::fs::read_to_string(sw.join("spl_sweep.csv")).unwrap();
    assert_eq!(csv.lines().count(), 4);
    assert!(csv.lines().nth(2).unwrap().starts_with("65,"));

    let b = ok(t.path(), &["bench", "--config", &cfg, "--manifest", l, "--model", tr, "--distilled", distilled.to_str().unwrap(), "--variants", "teacher,student"]);
    let report: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(b.join("bench.json")).unwrap()).unwrap();
    let names: Vec<&str> = report["variants"].as_array().unwrap().iter().map(|v| v["name"].as_str().unwrap()).collect();
    assert_eq!(names, ["teacher", "student"]);

    let p = ok(t.path(), &["plot-data", "--config", &cfg, "--manifest", l, "--model", tr]);
    for f in ["scatter.csv", "anchor.csv", "layer_weights.csv", "frame_scores.csv", "attention.csv", "loss.csv"] {
        assert!(p.join(f).is_file(), "{f}");
    }
    let weights = std::fs::read_to_string(p.join("layer_weights.csv")).unwrap();
    let total: f64 = weights.lines().skip(1).map(|l| l.split(',').nth(1).unwrap().parse::<f64>().unwrap()).sum();
    assert!((total - 1.0).abs() < 1e-9);

    let o = haaqi(t.path(), &["distill", "--config", &cfg, "--manifest", l, "--model", distilled.to_str().unwrap()]);
    assert_eq!(o.code, 1);
}
