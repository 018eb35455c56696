use std::collections::{BTreeMap, HashMap};
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use log::{info, warn};

use rarecall::annotations::{read_annotations, read_detections, write_detections};
use rarecall::classify::EvalMetrics;
use rarecall::cluster::{normalize_and_rank, ClusterReport};
use rarecall::config::PipelineConfig;
use rarecall::embed::exchange::{format_response, parse_response};
use rarecall::embed::{fit_pca, EmbeddingVector};
use rarecall::pipeline::{self, Conditioning};
use rarecall::profile::SpeciesProfile;
use rarecall::synth::{write_corpus, CorpusSpec};
use rarecall::{render, Error, Result};

/// Few-shot rare bird call detection.
#[derive(Parser)]
#[command(name = "rarecall", version)]
struct Cli {
    /// Pipeline configuration (TOML); defaults apply when omitted.
    #[arg(long, global = true, value_name = "PATH")]
    config: Option<PathBuf>,
    /// Recordings processed in parallel (0: all cores).
    #[arg(long, global = true, value_name = "N")]
    workers: Option<usize>,
    /// More log output; repeat for debug detail.
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    verbose: u8,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Estimate per-species frequency range, call duration and clip length.
    Analyze {
        annotations: PathBuf,
        /// JSON report; printed to stdout when omitted.
        #[arg(long)]
        out: Option<PathBuf>,
        #[command(flatten)]
        images: ImageArgs,
    },
    /// Rank embedding providers by clustering quality.
    Rank {
        /// CSV `provider,silhouette,davies_bouldin,dunn[,n_components]`.
        #[arg(long, conflicts_with = "embeddings")]
        metrics: Option<PathBuf>,
        /// Exchange-format embedding files, one per provider, as `ID=PATH`
        /// or `PATH` (provider id taken from the file stem).
        #[arg(long, num_args = 1.., requires = "labels")]
        embeddings: Vec<String>,
        /// CSV `segment_id,label` for the embedding files.
        #[arg(long)]
        labels: Option<PathBuf>,
        /// JSON ranking; the table is always printed.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Write embeddings of annotated calls in exchange format.
    Embed {
        annotations: PathBuf,
        #[arg(long)]
        provider: Option<String>,
        #[arg(long)]
        out: PathBuf,
        /// Where to write the `segment_id,label` table.
        #[arg(long)]
        labels_out: Option<PathBuf>,
    },
    /// Build a species profile from annotated training calls.
    Train {
        annotations: PathBuf,
        #[arg(long)]
        target: String,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        provider: Option<String>,
        /// Extra annotated calls used only to fit PCA when `pca_fit = "pooled"`.
        #[arg(long)]
        pca_pool: Option<PathBuf>,
    },
    /// Find and classify calls in field recordings.
    Detect {
        #[arg(required = true)]
        recordings: Vec<PathBuf>,
        #[arg(long)]
        profile: PathBuf,
        /// Detections CSV; printed to stdout when omitted.
        #[arg(long)]
        out: Option<PathBuf>,
        #[command(flatten)]
        images: ImageArgs,
    },
    /// Classify annotated calls under field conditioning.
    Classify {
        annotations: PathBuf,
        #[arg(long)]
        profile: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Score detections against annotated truth.
    Evaluate {
        detections: PathBuf,
        truth: PathBuf,
        #[arg(long)]
        target: String,
        /// JSON metrics; a summary is always printed.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Configuration helpers.
    Config {
        #[command(subcommand)]
        action: ConfigAction,
    },
    /// Write a seeded synthetic five-species corpus.
    Synth {
        out_dir: PathBuf,
        #[arg(long, default_value_t = 7)]
        seed: u64,
    },
}

#[derive(Subcommand)]
enum ConfigAction {
    /// Print the default configuration.
    Init {
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Args)]
struct ImageArgs {
    /// Emit spectrogram renders.
    #[arg(long)]
    images: bool,
    #[arg(long, default_value = "images", value_name = "DIR")]
    image_dir: PathBuf,
}

fn write_output(out: Option<&Path>, text: &str) -> Result<()> {
    match out {
        Some(path) => std::fs::write(path, text).map_err(|e| Error::Data(format!("writing {}: {e}", path.display()))),
        None => std::io::stdout()
            .write_all(text.as_bytes())
            .map_err(|e| Error::Data(format!("writing stdout: {e}"))),
    }
}

fn to_json<T: serde::Serialize>(value: &T) -> Result<String> {
    serde_json::to_string_pretty(value)
        .map(|s| s + "\n")
        .map_err(|e| Error::Data(e.to_string()))
}

fn create_dir(dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::Data(format!("creating {}: {e}", dir.display())))
}

fn safe_name(s: &str) -> String {
    s.chars()
        .map(|c| {
            if c.is_ascii_alphanumeric() || c == '-' || c == '_' || c == '.' {
                c
            } else {
                '_'
            }
        })
        .collect()
}

fn bridge_dir() -> Result<tempfile::TempDir> {
    tempfile::Builder::new()
        .prefix("rarecall-bridge-")
        .tempdir()
        .map_err(|e| Error::Data(format!("creating bridge work dir: {e}")))
}

fn analyze(cfg: &PipelineConfig, annotations: &Path, out: Option<&Path>, images: &ImageArgs) -> Result<()> {
    let rows = read_annotations(annotations)?;
    let (report, averages) = pipeline::analyze(&rows, cfg)?;
    for s in &report.species {
        eprintln!(
            "{:<24} {:>8.1} - {:>8.1} Hz  {:>5.2} s  ({} calls)",
            s.species, s.low_hz, s.high_hz, s.mean_duration_s, s.n_calls
        );
    }
    eprintln!("suggested clip length: {:.1} s", report.suggested_clip_len_s);
    if images.images {
        create_dir(&images.image_dir)?;
        for (species, avg) in &averages {
            render::save_mel_png(
                avg,
                &images.image_dir.join(format!("{}-average.png", safe_name(species))),
            )?;
        }
    }
    write_output(out, &to_json(&report)?)
}

fn read_labels(path: &Path) -> Result<HashMap<String, String>> {
    let mut rdr = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| Error::Usage(format!("{}: {e}", path.display())))?;
    let mut labels = HashMap::new();
    for rec in rdr.records() {
        let rec = rec.map_err(|e| Error::Data(format!("{}: {e}", path.display())))?;
        match (rec.get(0), rec.get(1)) {
            (Some(id), Some(label)) if !id.is_empty() && !label.is_empty() => {
                labels.insert(id.to_string(), label.to_string());
            }
            _ => return Err(Error::Data(format!("{}: rows need `segment_id,label`", path.display()))),
        }
    }
    Ok(labels)
}

fn read_metrics(path: &Path) -> Result<Vec<ClusterReport>> {
    let mut rdr = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| Error::Usage(format!("{}: {e}", path.display())))?;
    let mut reports = Vec::new();
    for (i, rec) in rdr.records().enumerate() {
        let rec = rec.map_err(|e| Error::Data(format!("{}: {e}", path.display())))?;
        let bad = |what: &str| Error::Data(format!("{}: row {}: bad {what}", path.display(), i + 2));
        let num = |k: usize, what: &str| -> Result<f64> {
            rec.get(k).and_then(|s| s.parse::<f64>().ok()).ok_or_else(|| bad(what))
        };
        let dunn = num(3, "dunn")?;
        reports.push(ClusterReport {
            provider_id: rec
                .get(0)
                .filter(|s| !s.is_empty())
                .ok_or_else(|| bad("provider"))?
                .to_string(),
            silhouette: num(1, "silhouette")?,
            davies_bouldin: num(2, "davies_bouldin")?,
            dunn: if dunn.is_finite() { dunn } else { 0.0 },
            dunn_unbounded: dunn == f64::INFINITY,
            n_components: match rec.get(4) {
                Some(s) if !s.is_empty() => s.parse().map_err(|_| bad("n_components"))?,
                _ => 0,
            },
        });
    }
    Ok(reports)
}

fn report_from_embeddings(cfg: &PipelineConfig, spec: &str, labels: &HashMap<String, String>) -> Result<ClusterReport> {
    let (id, path) = match spec.split_once('=') {
        Some((id, path)) => (id.to_string(), PathBuf::from(path)),
        None => {
            let p = PathBuf::from(spec);
            let stem = p
                .file_stem()
                .map(|s| s.to_string_lossy().into_owned())
                .unwrap_or_default();
            (stem.split('.').next().unwrap_or_default().to_string(), p)
        }
    };
    let text = std::fs::read_to_string(&path).map_err(|e| Error::Usage(format!("{}: {e}", path.display())))?;
    let parsed = parse_response(&text)?;
    let mut vectors = Vec::with_capacity(parsed.len());
    let mut names = Vec::with_capacity(parsed.len());
    for (seg, v) in parsed {
        let label = labels
            .get(&seg)
            .ok_or_else(|| Error::Data(format!("{}: segment {seg} has no label", path.display())))?;
        vectors.push(v);
        names.push(label.clone());
    }
    let pca = fit_pca(&vectors, cfg.variance_target)?;
    let reduced = vectors.iter().map(|v| pca.project(v)).collect::<Result<Vec<_>>>()?;
    ClusterReport::from_points(id, &reduced, &names, pca.n_components)
}

fn rank(
    cfg: &PipelineConfig,
    metrics: Option<&Path>,
    embeddings: &[String],
    labels: Option<&Path>,
    out: Option<&Path>,
) -> Result<()> {
    let reports = match (metrics, embeddings.is_empty()) {
        (Some(m), _) => read_metrics(m)?,
        (None, false) => {
            let labels = read_labels(labels.ok_or_else(|| Error::Usage("--embeddings needs --labels".into()))?)?;
            embeddings
                .iter()
                .map(|spec| report_from_embeddings(cfg, spec, &labels))
                .collect::<Result<Vec<_>>>()?
        }
        (None, true) => return Err(Error::Usage("give --metrics or --embeddings".into())),
    };
    let ranked = normalize_and_rank(&reports)?;
    print!("{ranked}");
    if let Some(out) = out {
        write_output(Some(out), &to_json(&ranked)?)?;
    }
    Ok(())
}

fn embed(
    cfg: &PipelineConfig,
    annotations: &Path,
    provider: Option<&str>,
    out: &Path,
    labels_out: Option<&Path>,
) -> Result<()> {
    let rows = read_annotations(annotations)?;
    let work = bridge_dir()?;
    let provider_id = provider.unwrap_or(&cfg.provider);
    let provider = pipeline::make_provider(cfg, provider_id, work.path())?;
    let calls = pipeline::prepare_calls(&rows, &cfg.data_root, &Conditioning::training(cfg))?;
    let vectors = pipeline::embed_calls(&calls, provider.as_ref())?;
    let mut kept = Vec::new();
    let mut label_rows = String::from("segment_id,label\n");
    for (c, v) in calls.iter().zip(vectors) {
        let Some(values) = v else { continue };
        label_rows += &format!("{},{}\n", c.id, c.annotation.label);
        kept.push(EmbeddingVector {
            values,
            provider_id: provider_id.to_string(),
            segment_ref: c.id.clone(),
        });
    }
    write_output(Some(out), &format_response(&kept)?)?;
    if let Some(path) = labels_out {
        write_output(Some(path), &label_rows)?;
    }
    info!("{} embeddings written", kept.len());
    Ok(())
}

fn train(
    cfg: &PipelineConfig,
    annotations: &Path,
    target: &str,
    out: &Path,
    provider: Option<&str>,
    pool: Option<&Path>,
) -> Result<()> {
    let rows = read_annotations(annotations)?;
    let pool_rows = match pool {
        Some(p) => read_annotations(p)?,
        None => Vec::new(),
    };
    let work = bridge_dir()?;
    let provider = pipeline::make_provider(cfg, provider.unwrap_or(&cfg.provider), work.path())?;
    let (profile, summary) = pipeline::train(&rows, target, cfg, provider.as_ref(), &pool_rows)?;
    profile.save(out)?;
    for (species, n) in &summary.class_counts {
        eprintln!("{species:<24} {n:>4} calls");
    }
    eprintln!(
        "band {:.1}-{:.1} Hz{}, {} components, threshold {:.6}, training recall {:.3}",
        summary.band.0,
        summary.band.1,
        if summary.band_estimated { " (estimated)" } else { "" },
        summary.n_components,
        summary.threshold,
        summary.training_recall
    );
    Ok(())
}

fn detect(
    cfg: &PipelineConfig,
    recordings: &[PathBuf],
    profile: &Path,
    out: Option<&Path>,
    images: &ImageArgs,
) -> Result<()> {
    let profile = SpeciesProfile::load(profile)?;
    let work = bridge_dir()?;
    let provider = pipeline::make_provider(cfg, &profile.provider_id, work.path())?;
    let named: Vec<(String, PathBuf)> = recordings
        .iter()
        .map(|p| (p.to_string_lossy().into_owned(), p.clone()))
        .collect();
    let rows = pipeline::detect_recordings(&named, &profile, provider.as_ref())?;
    let positives = rows.iter().filter(|r| r.decision.is_positive()).count();
    eprintln!("{} events, {} positive", rows.len(), positives);
    if images.images {
        create_dir(&images.image_dir)?;
        for (name, path) in &named {
            let clip = match rarecall::audio::load_recording(path) {
                Ok(c) => c,
                Err(e) => {
                    warn!("{name}: {e}");
                    continue;
                }
            };
            let mine: Vec<_> = rows.iter().filter(|r| &r.recording == name).cloned().collect();
            let stem = path
                .file_stem()
                .map(|s| s.to_string_lossy().into_owned())
                .unwrap_or_default();
            render::save_detection_png(
                &clip,
                &mine,
                &images.image_dir.join(format!("{}.png", safe_name(&stem))),
            )?;
        }
    }
    write_output(out, &write_detections(&rows)?)
}

fn classify(cfg: &PipelineConfig, annotations: &Path, profile: &Path, out: Option<&Path>) -> Result<()> {
    let rows = read_annotations(annotations)?;
    let profile = SpeciesProfile::load(profile)?;
    let work = bridge_dir()?;
    let provider = pipeline::make_provider(cfg, &profile.provider_id, work.path())?;
    let detections = pipeline::classify_calls(&rows, &cfg.data_root, &profile, provider.as_ref())?;
    write_output(out, &write_detections(&detections)?)
}

fn evaluate(cfg: &PipelineConfig, detections: &Path, truth: &Path, target: &str, out: Option<&Path>) -> Result<()> {
    let dets = read_detections(detections)?;
    let truth = read_annotations(truth)?;
    if !truth.iter().any(|t| t.label == target) {
        warn!("truth table has no {target:?} calls");
    }
    let metrics: EvalMetrics = pipeline::match_and_evaluate(&dets, &truth, target, cfg.evaluate.min_overlap)?;
    println!("{metrics}");
    if let Some(out) = out {
        write_output(Some(out), &to_json(&metrics)?)?;
    }
    Ok(())
}

fn synth(out_dir: &Path, seed: u64) -> Result<()> {
    create_dir(out_dir)?;
    let corpus = write_corpus(
        out_dir,
        &CorpusSpec {
            seed,
            ..CorpusSpec::default()
        },
    )?;
    let mut counts: BTreeMap<&str, (usize, usize)> = BTreeMap::new();
    for a in &corpus.train {
        counts.entry(&a.label).or_default().0 += 1;
    }
    for a in &corpus.test {
        counts.entry(&a.label).or_default().1 += 1;
    }
    for (species, (tr, te)) in counts {
        eprintln!("{species:<12} train {tr:>3}  test {te:>3}");
    }
    eprintln!("wrote {} and {}", corpus.train_csv.display(), corpus.test_csv.display());
    Ok(())
}

fn run(cli: Cli) -> Result<()> {
    let mut cfg = match &cli.config {
        Some(path) => PipelineConfig::load(path)?,
        None => PipelineConfig::default(),
    };
    if let Some(w) = cli.workers {
        cfg.workers = w;
    }
    if cfg.workers > 0 {
        rayon::ThreadPoolBuilder::new()
            .num_threads(cfg.workers)
            .build_global()
            .map_err(|e| Error::Usage(format!("worker pool: {e}")))?;
    }
    match &cli.command {
        Command::Analyze {
            annotations,
            out,
            images,
        } => analyze(&cfg, annotations, out.as_deref(), images),
        Command::Rank {
            metrics,
            embeddings,
            labels,
            out,
        } => rank(&cfg, metrics.as_deref(), embeddings, labels.as_deref(), out.as_deref()),
        Command::Embed {
            annotations,
            provider,
            out,
            labels_out,
        } => embed(&cfg, annotations, provider.as_deref(), out, labels_out.as_deref()),
        Command::Train {
            annotations,
            target,
            out,
            provider,
            pca_pool,
        } => train(&cfg, annotations, target, out, provider.as_deref(), pca_pool.as_deref()),
        Command::Detect {
            recordings,
            profile,
            out,
            images,
        } => detect(&cfg, recordings, profile, out.as_deref(), images),
        Command::Classify {
            annotations,
            profile,
            out,
        } => classify(&cfg, annotations, profile, out.as_deref()),
        Command::Evaluate {
            detections,
            truth,
            target,
            out,
        } => evaluate(&cfg, detections, truth, target, out.as_deref()),
        Command::Config {
            action: ConfigAction::Init { out },
        } => write_output(out.as_deref(), &PipelineConfig::default().to_toml()?),
        Command::Synth { out_dir, seed } => synth(out_dir, *seed),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                ExitCode::from(1)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level))
        .format_timestamp(None)
        .init();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
