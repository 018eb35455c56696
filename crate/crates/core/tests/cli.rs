use std::path::{Path, PathBuf};
use std::process::{Command, Output};
use std::sync::OnceLock;

use rarecall::config::PipelineConfig;
use rarecall::synth::{write_corpus, Corpus, CorpusSpec};

fn rarecall(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_rarecall"))
        .args(args)
        .output()
        .expect("spawn rarecall")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn fixture(name: &str) -> String {
    Path::new(env!("CARGO_MANIFEST_DIR"))
        .join("tests/fixtures")
        .join(name)
        .to_string_lossy()
        .into_owned()
}

fn scratch(name: &str) -> PathBuf {
    let dir = Path::new(env!("CARGO_TARGET_TMPDIR")).join("cli").join(name);
    let _ = std::fs::remove_dir_all(&dir);
    std::fs::create_dir_all(&dir).unwrap();
    dir
}

/// Shared corpus plus a config pointing at it.
fn corpus() -> &'static (Corpus, PathBuf) {
    static CORPUS: OnceLock<(Corpus, PathBuf)> = OnceLock::new();
    CORPUS.get_or_init(|| {
        let dir = scratch("corpus");
        let corpus = write_corpus(&dir.join("data"), &CorpusSpec::default()).unwrap();
        let cfg = PipelineConfig {
            data_root: corpus.root.clone(),
            ..PipelineConfig::default()
        };
        let cfg_path = dir.join("config.toml");
        std::fs::write(&cfg_path, cfg.to_toml().unwrap()).unwrap();
        (corpus, cfg_path)
    })
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn help_and_version_exit_zero() {
    assert!(rarecall(&["--help"]).status.success());
    assert!(rarecall(&["--version"]).status.success());
    assert!(stdout(&rarecall(&["train", "--help"])).contains("--target"));
}

#[test]
fn bad_arguments_exit_one() {
    assert_eq!(rarecall(&[]).status.code(), Some(1));
    assert_eq!(rarecall(&["frobnicate"]).status.code(), Some(1));
    assert_eq!(rarecall(&["train", "x.csv"]).status.code(), Some(1));
}

#[test]
fn config_init_round_trips() {
    let o = rarecall(&["config", "init"]);
    assert!(o.status.success());
    let cfg = PipelineConfig::from_toml(&stdout(&o)).unwrap();
    assert_eq!(cfg, PipelineConfig::default());
}

#[test]
fn unknown_config_key_is_a_usage_error() {
    let dir = scratch("bad-config");
    let path = dir.join("c.toml");
    std::fs::write(&path, "sample_rat = 22050\n").unwrap();
    let o = rarecall(&["--config", s(&path), "config", "init"]);
    assert_eq!(o.status.code(), Some(1), "{}", stderr(&o));
    assert!(stderr(&o).contains("sample_rat"));
}

#[test]
fn rank_metrics_table_puts_perch_first() {
    let dir = scratch("rank-metrics");
    let json = dir.join("rank.json");
    let o = rarecall(&["rank", "--metrics", &fixture("provider_metrics.csv"), "--out", s(&json)]);
    assert!(o.status.success(), "{}", stderr(&o));
    let table = stdout(&o);
    let first = table.lines().nth(1).unwrap();
    assert!(first.starts_with("Perch") && first.contains("0.99"), "{table}");
    assert!(table.lines().nth(2).unwrap().starts_with("BirdNET"));
    let v: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(&json).unwrap()).unwrap();
    let overall = v["entries"][0]["overall_score"].as_f64().unwrap();
    assert!((overall - 0.99).abs() <= 0.03);
}

#[test]
fn rank_accepts_unbounded_dunn() {
    let dir = scratch("rank-inf");
    let csv = dir.join("m.csv");
    std::fs::write(
        &csv,
        "provider,silhouette,davies_bouldin,dunn\na,0.5,1.0,inf\nb,0.2,2.0,0.4\n",
    )
    .unwrap();
    let o = rarecall(&["rank", "--metrics", s(&csv)]);
    assert!(o.status.success(), "{}", stderr(&o));
    assert!(stdout(&o).contains("capped"));
}

#[test]
fn rank_with_one_provider_is_a_usage_error() {
    let dir = scratch("rank-one");
    let csv = dir.join("m.csv");
    std::fs::write(&csv, "provider,silhouette,davies_bouldin,dunn\nonly,0.2,1.5,0.3\n").unwrap();
    assert_eq!(rarecall(&["rank", "--metrics", s(&csv)]).status.code(), Some(1));
}

#[test]
fn malformed_metrics_are_a_data_error() {
    let dir = scratch("rank-bad");
    let csv = dir.join("m.csv");
    std::fs::write(
        &csv,
        "provider,silhouette,davies_bouldin,dunn\na,0.2,oops,0.3\nb,0.1,1.0,0.2\n",
    )
    .unwrap();
    let o = rarecall(&["rank", "--metrics", s(&csv)]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("davies_bouldin"), "{}", stderr(&o));
}

#[test]
fn train_classify_evaluate() {
    let (corpus, cfg) = corpus();
    let dir = scratch("train");
    let profile = dir.join("profile.json");
    let o = rarecall(&[
        "--config",
        s(cfg),
        "train",
        s(&corpus.train_csv),
        "--target",
        "species-B",
        "--out",
        s(&profile),
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    assert!(stderr(&o).contains("training recall"));
    let text = std::fs::read_to_string(&profile).unwrap();
    assert!(text.contains("rarecall-profile/1") && text.contains("species-B"));

    let rows = dir.join("classified.csv");
    let o = rarecall(&[
        "--config",
        s(cfg),
        "classify",
        s(&corpus.test_csv),
        "--profile",
        s(&profile),
        "--out",
        s(&rows),
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    let csv = std::fs::read_to_string(&rows).unwrap();
    assert!(csv.starts_with("recording,start_s,end_s,score,decision"));
    assert_eq!(csv.lines().count(), corpus.test.len() + 1);

    let metrics = dir.join("metrics.json");
    let o = rarecall(&[
        "--config",
        s(cfg),
        "evaluate",
        s(&rows),
        s(&corpus.test_csv),
        "--target",
        "species-B",
        "--out",
        s(&metrics),
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    assert!(stdout(&o).contains("recall"));
    let m: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(&metrics).unwrap()).unwrap();
    let total: u64 = ["tp", "fp", "fn", "tn"].iter().map(|k| m[k].as_u64().unwrap()).sum();
    assert_eq!(total as usize, corpus.test.len());
}

#[test]
fn detect_writes_sorted_rows_and_images() {
    let (corpus, cfg) = corpus();
    let dir = scratch("detect");
    let profile = dir.join("profile.json");
    let o = rarecall(&[
        "--config",
        s(cfg),
        "train",
        s(&corpus.train_csv),
        "--target",
        "species-C",
        "--out",
        s(&profile),
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    let rec = corpus.root.join(&corpus.test[0].recording);
    let images = dir.join("img");
    let o = rarecall(&[
        "--config",
        s(cfg),
        "detect",
        s(&rec),
        "--profile",
        s(&profile),
        "--images",
        "--image-dir",
        s(&images),
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    let out = stdout(&o);
    let starts: Vec<f64> = out
        .lines()
        .skip(1)
        .map(|l| l.split(',').nth(1).unwrap().parse().unwrap())
        .collect();
    assert!(!starts.is_empty());
    assert!(starts.windows(2).all(|w| w[0] <= w[1]));
    assert_eq!(std::fs::read_dir(&images).unwrap().count(), 1);
}

#[test]
fn unknown_target_is_a_data_error() {
    let (corpus, cfg) = corpus();
    let dir = scratch("no-target");
    let o = rarecall(&[
        "--config",
        s(cfg),
        "train",
        s(&corpus.train_csv),
        "--target",
        "dodo",
        "--out",
        s(&dir.join("p.json")),
    ]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("species-A"), "{}", stderr(&o));
}

#[test]
fn missing_recordings_are_listed() {
    let dir = scratch("missing");
    let csv = dir.join("a.csv");
    std::fs::write(
        &csv,
        "recording,start_s,end_s,label\ngone1.wav,0.1,0.9,x\ngone2.wav,0.1,0.9,y\n",
    )
    .unwrap();
    let cfg = dir.join("c.toml");
    std::fs::write(&cfg, format!("data_root = {:?}\n", s(&dir))).unwrap();
    let o = rarecall(&[
        "--config",
        s(&cfg),
        "train",
        s(&csv),
        "--target",
        "x",
        "--out",
        s(&dir.join("p.json")),
    ]);
    assert_eq!(o.status.code(), Some(2));
    let err = stderr(&o);
    assert!(err.contains("gone1.wav") && err.contains("gone2.wav"), "{err}");
}

#[test]
fn analyze_reports_every_species() {
    let (corpus, cfg) = corpus();
    let dir = scratch("analyze");
    let o = rarecall(&[
        "--config",
        s(cfg),
        "analyze",
        s(&corpus.train_csv),
        "--images",
        "--image-dir",
        s(&dir),
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    let v: serde_json::Value = serde_json::from_str(&stdout(&o)).unwrap();
    assert_eq!(v["species"].as_array().unwrap().len(), 5);
    assert_eq!(std::fs::read_dir(&dir).unwrap().count(), 5);
}

#[cfg(unix)]
mod bridge {
    use super::*;
    use std::os::unix::fs::PermissionsExt;

    fn bridge_config(dir: &Path, body: &str) -> PathBuf {
        let script = dir.join("bridge.sh");
        std::fs::write(&script, format!("#!/bin/sh\n{body}\n")).unwrap();
        std::fs::set_permissions(&script, std::fs::Permissions::from_mode(0o755)).unwrap();
        let (corpus, _) = corpus();
        let cfg = PipelineConfig::from_toml(&format!(
            "data_root = {:?}\n[bridge.fake]\ncommand = [{:?}]\ndimension = 4\n",
            s(&corpus.root),
            s(&script)
        ))
        .unwrap();
        let path = dir.join("config.toml");
        std::fs::write(&path, cfg.to_toml().unwrap()).unwrap();
        path
    }

    #[test]
    fn failing_bridge_exits_three() {
        let (corpus, _) = corpus();
        let dir = scratch("bridge-fail");
        let cfg = bridge_config(&dir, "echo boom >&2\nexit 1");
        let o = rarecall(&[
            "--config",
            s(&cfg),
            "embed",
            s(&corpus.train_csv),
            "--provider",
            "fake",
            "--out",
            s(&dir.join("e.tsv")),
        ]);
        assert_eq!(o.status.code(), Some(3), "{}", stderr(&o));
        assert!(stderr(&o).contains("boom"));
    }

    #[test]
    fn unknown_provider_is_a_usage_error() {
        let (corpus, cfg) = corpus();
        let dir = scratch("bridge-unknown");
        let o = rarecall(&[
            "--config",
            s(cfg),
            "embed",
            s(&corpus.train_csv),
            "--provider",
            "nope",
            "--out",
            s(&dir.join("e.tsv")),
        ]);
        assert_eq!(o.status.code(), Some(1), "{}", stderr(&o));
    }

    #[test]
    fn ranking_embedding_files_ignores_argument_order() {
        let (corpus, _) = corpus();
        let dir = scratch("bridge-rank");
        // two coordinates follow the species letter in the segment id
        let cfg = bridge_config(
            &dir,
            r#"awk -F'\t' '{ k = index("ABCDE", substr($1, index($1, "species-") + 8, 1));
  printf "%s\t4\t%d,%d,%d,1\n", $1, 50 * k + NR % 3, 50 * (k * k % 7), NR % 11 }' "$2" > "$4""#,
        );
        let base = dir.join("baseline.tsv");
        let fake = dir.join("fake.tsv");
        let labels = dir.join("labels.csv");
        for (provider, out) in [("baseline", &base), ("fake", &fake)] {
            let o = rarecall(&[
                "--config",
                s(&cfg),
                "embed",
                s(&corpus.train_csv),
                "--provider",
                provider,
                "--out",
                s(out),
                "--labels-out",
                s(&labels),
            ]);
            assert!(o.status.success(), "{}", stderr(&o));
        }
        let first = rarecall(&[
            "--config",
            s(&cfg),
            "rank",
            "--embeddings",
            s(&base),
            s(&fake),
            "--labels",
            s(&labels),
        ]);
        let second = rarecall(&[
            "--config",
            s(&cfg),
            "rank",
            "--embeddings",
            &format!("fake={}", s(&fake)),
            &format!("baseline={}", s(&base)),
            "--labels",
            s(&labels),
        ]);
        assert!(first.status.success(), "{}", stderr(&first));
        assert_eq!(stdout(&first), stdout(&second));
        assert!(
            stdout(&first).lines().nth(1).unwrap().starts_with("fake"),
            "{}",
            stdout(&first)
        );
    }
}
