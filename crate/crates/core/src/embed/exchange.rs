//! File exchange with an external embedding bridge.
//!
//! Request manifest, one line per segment:
//! `{segment_id}\t{absolute wav path}`
//!
//! Response, one line per segment:
//! `{segment_id}\t{dimension}\t{comma-separated floats}`
//!
//! The bridge is invoked as
//! `bridge-cmd --manifest {path} --out {path} --model {provider_id}` and must
//! exit with status 0.

use std::collections::{HashMap, HashSet};
use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::process::Command;
use std::sync::Mutex;

use super::{EmbedInput, EmbeddingProvider, EmbeddingVector, InputMode};
use crate::audio::write_wav;
use crate::error::{BridgeError, Error, Result};

/// One bridge process at a time.
static BRIDGE_LOCK: Mutex<()> = Mutex::new(());

#[derive(Debug, Clone, PartialEq)]
pub struct ManifestEntry {
    pub segment_id: String,
    pub wav_path: PathBuf,
}

fn check_id(id: &str) -> Result<()> {
    if id.is_empty() || id.contains(['\t', '\n', '\r']) {
        return Err(Error::InvalidParameter(format!(
            "segment id {id:?} cannot be used in an exchange file"
        )));
    }
    Ok(())
}

pub fn format_manifest(entries: &[ManifestEntry]) -> Result<String> {
    let mut out = String::new();
    for e in entries {
        check_id(&e.segment_id)?;
        let _ = writeln!(out, "{}\t{}", e.segment_id, e.wav_path.display());
    }
    Ok(out)
}

pub fn parse_manifest(text: &str) -> std::result::Result<Vec<ManifestEntry>, BridgeError> {
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.is_empty())
        .map(|(i, line)| {
            let (id, path) = line.split_once('\t').ok_or_else(|| BridgeError::Malformed {
                line: i + 1,
                message: "expected `id<TAB>path`".into(),
            })?;
            Ok(ManifestEntry {
                segment_id: id.to_string(),
                wav_path: PathBuf::from(path),
            })
        })
        .collect()
}

/// Serializes vectors in response format with 17 significant digits.
pub fn format_response(vectors: &[EmbeddingVector]) -> Result<String> {
    let mut out = String::new();
    for v in vectors {
        check_id(&v.segment_ref)?;
        let _ = write!(out, "{}\t{}\t", v.segment_ref, v.values.len());
        for (i, x) in v.values.iter().enumerate() {
            if i > 0 {
                out.push(',');
            }
            let _ = write!(out, "{x:.16e}");
        }
        out.push('\n');
    }
    Ok(out)
}

/// Parses response lines into `(segment_id, values)` in file order.
pub fn parse_response(text: &str) -> std::result::Result<Vec<(String, Vec<f64>)>, BridgeError> {
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if line.is_empty() {
            continue;
        }
        let malformed = |message: String| BridgeError::Malformed { line: i + 1, message };
        let mut fields = line.splitn(3, '\t');
        let (id, dim, floats) = match (fields.next(), fields.next(), fields.next()) {
            (Some(a), Some(b), Some(c)) => (a, b, c),
            _ => return Err(malformed("expected `id<TAB>dim<TAB>values`".into())),
        };
        let dim: usize = dim
            .trim()
            .parse()
            .map_err(|_| malformed(format!("bad dimension {dim:?}")))?;
        let values: Vec<f64> = if floats.trim().is_empty() {
            Vec::new()
        } else {
            floats
                .split(',')
                .map(|f| {
                    f.trim()
                        .parse::<f64>()
                        .ok()
                        .filter(|x| x.is_finite())
                        .ok_or_else(|| malformed(format!("bad value {f:?}")))
                })
                .collect::<std::result::Result<_, _>>()?
        };
        if values.len() != dim {
            return Err(BridgeError::Dimension {
                segment: id.to_string(),
                expected: dim,
                got: values.len(),
            });
        }
        out.push((id.to_string(), values));
    }
    Ok(out)
}

/// Pairs a parsed response with the manifest, in manifest order.
///
/// Every manifest id must appear exactly once with `expected_dim` values
/// (or, when `None`, the dimension of the first vector).
pub fn match_response(
    manifest: &[ManifestEntry],
    response: Vec<(String, Vec<f64>)>,
    expected_dim: Option<usize>,
    provider_id: &str,
) -> std::result::Result<Vec<EmbeddingVector>, BridgeError> {
    let wanted: HashSet<&str> = manifest.iter().map(|e| e.segment_id.as_str()).collect();
    let mut by_id: HashMap<String, Vec<f64>> = HashMap::with_capacity(response.len());
    let mut dim = expected_dim;
    for (id, values) in response {
        if !wanted.contains(id.as_str()) {
            return Err(BridgeError::UnknownSegment(id));
        }
        let expected = *dim.get_or_insert(values.len());
        if values.len() != expected {
            return Err(BridgeError::Dimension {
                segment: id,
                expected,
                got: values.len(),
            });
        }
        if by_id.insert(id.clone(), values).is_some() {
            return Err(BridgeError::Duplicate(id));
        }
    }
    manifest
        .iter()
        .map(|e| {
            by_id
                .remove(&e.segment_id)
                .map(|values| EmbeddingVector {
                    values,
                    provider_id: provider_id.to_string(),
                    segment_ref: e.segment_id.clone(),
                })
                .ok_or_else(|| BridgeError::Incomplete(e.segment_id.clone()))
        })
        .collect()
}

/// Runs `command --manifest M --out O --model ID`.
pub fn run_bridge(command: &[String], manifest: &Path, out: &Path, model: &str) -> Result<()> {
    let (program, leading) = command
        .split_first()
        .ok_or_else(|| Error::Usage("no bridge command configured".into()))?;
    let shown = command.join(" ");
    let _guard = BRIDGE_LOCK.lock().unwrap_or_else(|p| p.into_inner());
    let output = Command::new(program)
        .args(leading)
        .arg("--manifest")
        .arg(manifest)
        .arg("--out")
        .arg(out)
        .arg("--model")
        .arg(model)
        .output()
        .map_err(|source| BridgeError::Launch {
            command: shown.clone(),
            source,
        })?;
    if !output.status.success() {
        return Err(BridgeError::Exit {
            command: shown,
            status: output.status.to_string(),
            stderr: String::from_utf8_lossy(&output.stderr).trim().to_string(),
        }
        .into());
    }
    Ok(())
}

/// Writes the manifest, invokes the bridge, and reads back one vector per
/// manifest entry.
pub fn external_embed(manifest: &[ManifestEntry], provider: &ExternalProvider) -> Result<Vec<EmbeddingVector>> {
    if manifest.is_empty() {
        return Ok(Vec::new());
    }
    std::fs::create_dir_all(&provider.work_dir)
        .map_err(|e| Error::io(format!("creating {}", provider.work_dir.display()), e))?;
    let manifest_path = provider.work_dir.join(format!("{}.manifest.tsv", provider.id));
    let out_path = provider.work_dir.join(format!("{}.embeddings.tsv", provider.id));
    std::fs::write(&manifest_path, format_manifest(manifest)?)
        .map_err(|e| Error::io(format!("writing {}", manifest_path.display()), e))?;
    let _ = std::fs::remove_file(&out_path);
    run_bridge(&provider.command, &manifest_path, &out_path, &provider.id)?;
    let text = std::fs::read_to_string(&out_path).map_err(|_| BridgeError::Exit {
        command: provider.command.join(" "),
        status: "exit status: 0".into(),
        stderr: format!("no response file at {}", out_path.display()),
    })?;
    let parsed = parse_response(&text)?;
    Ok(match_response(manifest, parsed, provider.dimension, &provider.id)?)
}

/// A provider realized by an external bridge process.
#[derive(Debug, Clone)]
pub struct ExternalProvider {
    pub id: String,
    /// Program followed by any leading arguments.
    pub command: Vec<String>,
    pub dimension: Option<usize>,
    pub input_mode: InputMode,
    /// Where segment WAVs and exchange files are written.
    pub work_dir: PathBuf,
}

impl EmbeddingProvider for ExternalProvider {
    fn id(&self) -> &str {
        &self.id
    }

    fn dimension(&self) -> Option<usize> {
        self.dimension
    }

    fn input_mode(&self) -> InputMode {
        self.input_mode
    }

    fn embed(&self, inputs: &[EmbedInput<'_>]) -> Result<Vec<EmbeddingVector>> {
        let seg_dir = self.work_dir.join("segments");
        std::fs::create_dir_all(&seg_dir).map_err(|e| Error::io(format!("creating {}", seg_dir.display()), e))?;
        let seg_dir = seg_dir
            .canonicalize()
            .map_err(|e| Error::io(format!("resolving {}", seg_dir.display()), e))?;
        let manifest = inputs
            .iter()
            .enumerate()
            .map(|(i, input)| {
                let path = seg_dir.join(format!("{i:06}.wav"));
                write_wav(&path, &input.segment.clip)?;
                Ok(ManifestEntry {
                    segment_id: input.id.to_string(),
                    wav_path: path,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        external_embed(&manifest, self)
    }
}
