//! Append-only run store.
//!
//! A run is a directory under `<root>/runs/<run-id>/` holding a manifest and
//! a handful of JSONL streams. Appends are atomic at line granularity and
//! idempotent by natural key, so an interrupted run can be reopened and
//! resumed without duplicating work already on disk.

use std::collections::BTreeMap;
use std::collections::HashSet;
use std::fs::{self, File, OpenOptions};
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::ir::{AnswerValue, ProbeInstance};
use crate::metrics::StructuralDescriptor;
use crate::solver::SolverProfile;

#[derive(Debug, Error)]
pub enum StoreError {
    #[error("run {run_id} already exists with a different {field}: stored {stored}, requested {requested}")]
    ConfigMismatch {
        run_id: String,
        field: &'static str,
        stored: String,
        requested: String,
    },
    #[error("corrupt line {line_no} in {stream}: {detail}")]
    CorruptStream {
        stream: String,
        line_no: usize,
        detail: String,
    },
    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("manifest error: {0}")]
    Manifest(String),
}

fn io_err(path: &Path, source: std::io::Error) -> StoreError {
    StoreError::Io {
        path: path.to_path_buf(),
        source,
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Manifest {
    pub run_id: String,
    pub seed: u64,
    pub config_hash: String,
    pub tool_version: String,
    pub created: String,
}

/// Hash of the run configuration snapshot; any canonical textual rendering
/// of the config works as long as it is stable for equal configs.
pub fn config_hash(config_snapshot: &str) -> String {
    let digest = Sha256::digest(config_snapshot.as_bytes());
    let mut out = String::with_capacity(16);
    for byte in &digest[..8] {
        out.push_str(&format!("{byte:02x}"));
    }
    out
}

/// One line of `instances.jsonl`. Field order is fixed; two runs with the
/// same seed and config must produce byte-identical lines.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InstanceRecord {
    pub family_id: String,
    pub param_values: BTreeMap<String, i64>,
    pub prompt: String,
    pub canonical_answer: AnswerValue,
    pub descriptor: StructuralDescriptor,
    pub instance_hash: String,
}

impl InstanceRecord {
    pub fn from_instance(i: &ProbeInstance) -> Option<InstanceRecord> {
        Some(InstanceRecord {
            family_id: i.family_id.clone(),
            param_values: i.param_values.clone(),
            prompt: i.prompt.clone()?,
            canonical_answer: i.canonical_answer.clone()?,
            descriptor: i.descriptor.clone(),
            instance_hash: i.instance_hash.clone(),
        })
    }
}

/// One line of `profiles.jsonl`: the solver cost profile for an instance,
/// kept out of `instances.jsonl` so instance lines stay reproducible even
/// when solver timings vary between hosts.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProfileRecord {
    pub instance_hash: String,
    pub profile: SolverProfile,
}

pub const STREAM_ADMISSIONS: &str = "admissions.jsonl";
pub const STREAM_INSTANCES: &str = "instances.jsonl";
pub const STREAM_RECORDS: &str = "records.jsonl";
pub const STREAM_PROFILES: &str = "profiles.jsonl";

#[derive(Debug)]
pub struct RunHandle {
    dir: PathBuf,
    manifest: Manifest,
    /// (stream, natural key) pairs already on disk; appends that collide
    /// are ignored so resumption is idempotent.
    seen: HashSet<(String, String)>,
}

/// Natural key for a stream line, extracted from its parsed JSON value.
fn natural_key(stream: &str, value: &serde_json::Value) -> Option<String> {
    let field = |name: &str| {
        value
            .get(name)
            .and_then(|v| v.as_str())
            .map(|s| s.to_string())
    };
    match stream {
        STREAM_ADMISSIONS => field("family_id"),
        STREAM_INSTANCES | STREAM_PROFILES => field("instance_hash"),
        STREAM_RECORDS => {
            let hash = field("instance_hash")?;
            let model = field("model_id")?;
            let rep = value.get("repetition_index").and_then(|v| v.as_u64())?;
            Some(format!("{hash}\u{0}{model}\u{0}{rep}"))
        }
        _ => None,
    }
}

/// Create or resume the run directory `<root>/runs/<run_id>/`.
///
/// On first open this writes `manifest.json`; on reopen it checks that the
/// seed and config hash match and then indexes the existing streams so that
/// duplicate appends become no-ops.
pub fn open_run(
    root: &Path,
    run_id: &str,
    seed: u64,
    config_snapshot: &str,
) -> Result<RunHandle, StoreError> {
    let dir = root.join("runs").join(run_id);
    let hash = config_hash(config_snapshot);
    let manifest_path = dir.join("manifest.json");
    let manifest = if manifest_path.exists() {
        let text = fs::read_to_string(&manifest_path).map_err(|e| io_err(&manifest_path, e))?;
        let stored: Manifest =
            serde_json::from_str(&text).map_err(|e| StoreError::Manifest(e.to_string()))?;
        if stored.seed != seed {
            return Err(StoreError::ConfigMismatch {
                run_id: run_id.to_string(),
                field: "seed",
                stored: stored.seed.to_string(),
                requested: seed.to_string(),
            });
        }
        if stored.config_hash != hash {
            return Err(StoreError::ConfigMismatch {
                run_id: run_id.to_string(),
                field: "config hash",
                stored: stored.config_hash.clone(),
                requested: hash,
            });
        }
        stored
    } else {
        fs::create_dir_all(&dir).map_err(|e| io_err(&dir, e))?;
        let manifest = Manifest {
            run_id: run_id.to_string(),
            seed,
            config_hash: hash,
            tool_version: env!("CARGO_PKG_VERSION").to_string(),
            created: chrono::Utc::now().to_rfc3339(),
        };
        let text = serde_json::to_string_pretty(&manifest)
            .map_err(|e| StoreError::Manifest(e.to_string()))?;
        fs::write(&manifest_path, text + "\n").map_err(|e| io_err(&manifest_path, e))?;
        manifest
    };
    for sub in ["smt", "surfaces"] {
        let p = dir.join(sub);
        fs::create_dir_all(&p).map_err(|e| io_err(&p, e))?;
    }
    let mut handle = RunHandle {
        dir,
        manifest,
        seen: HashSet::new(),
    };
    for stream in [
        STREAM_ADMISSIONS,
        STREAM_INSTANCES,
        STREAM_RECORDS,
        STREAM_PROFILES,
    ] {
        handle.index_stream(stream)?;
    }
    Ok(handle)
}

impl RunHandle {
    pub fn dir(&self) -> &Path {
        &self.dir
    }

    pub fn manifest(&self) -> &Manifest {
        &self.manifest
    }

    fn stream_path(&self, stream: &str) -> PathBuf {
        self.dir.join(stream)
    }

    fn index_stream(&mut self, stream: &str) -> Result<(), StoreError> {
        let path = self.stream_path(stream);
        if !path.exists() {
            return Ok(());
        }
        for (value, _) in read_stream_values(&path, stream)? {
            if let Some(key) = natural_key(stream, &value) {
                self.seen.insert((stream.to_string(), key));
            }
        }
        Ok(())
    }

    /// Append one record; returns false when a record with the same natural
    /// key is already present (the append is skipped).
    pub fn append<T: Serialize>(
        &mut self,
        stream: &str,
        record: &T,
    ) -> Result<bool, StoreError> {
        let value = serde_json::to_value(record).map_err(|e| StoreError::CorruptStream {
            stream: stream.to_string(),
            line_no: 0,
            detail: format!("unserializable record: {e}"),
        })?;
        if let Some(key) = natural_key(stream, &value) {
            if !self.seen.insert((stream.to_string(), key)) {
                return Ok(false);
            }
        }
        let path = self.stream_path(stream);
        let mut file = OpenOptions::new()
            .create(true)
            .append(true)
            .open(&path)
            .map_err(|e| io_err(&path, e))?;
        let mut line = serde_json::to_string(&value).expect("JSON value always serializes");
        line.push('\n');
        file.write_all(line.as_bytes()).map_err(|e| io_err(&path, e))?;
        file.flush().map_err(|e| io_err(&path, e))?;
        file.sync_all().map_err(|e| io_err(&path, e))?;
        Ok(true)
    }

    pub fn load<T: DeserializeOwned>(&self, stream: &str) -> Result<Vec<T>, StoreError> {
        let path = self.stream_path(stream);
        if !path.exists() {
            return Ok(Vec::new());
        }
        let mut out = Vec::new();
        for (value, line_no) in read_stream_values(&path, stream)? {
            let record: T =
                serde_json::from_value(value).map_err(|e| StoreError::CorruptStream {
                    stream: stream.to_string(),
                    line_no,
                    detail: e.to_string(),
                })?;
            out.push(record);
        }
        Ok(out)
    }

    /// Write an SMT-LIB script under `smt/` for later inspection.
    pub fn save_script(&self, name: &str, script: &str) -> Result<PathBuf, StoreError> {
        let path = self.dir.join("smt").join(format!("{name}.smt2"));
        fs::write(&path, script).map_err(|e| io_err(&path, e))?;
        Ok(path)
    }

    /// Path for a surface artifact (`surfaces/<name>`).
    pub fn surface_path(&self, name: &str) -> PathBuf {
        self.dir.join("surfaces").join(name)
    }
}

/// Parse a JSONL stream into values. A corrupt *final* line is tolerated —
/// that is the signature of a crash mid-append — and skipped with a warning;
/// a corrupt line anywhere else means real damage and is an error.
fn read_stream_values(
    path: &Path,
    stream: &str,
) -> Result<Vec<(serde_json::Value, usize)>, StoreError> {
    let file = File::open(path).map_err(|e| io_err(path, e))?;
    let reader = BufReader::new(file);
    let lines: Vec<String> = reader
        .lines()
        .collect::<Result<_, _>>()
        .map_err(|e| io_err(path, e))?;
    let mut out = Vec::new();
    let last = lines.len();
    for (idx, line) in lines.into_iter().enumerate() {
        let line_no = idx + 1;
        if line.trim().is_empty() {
            continue;
        }
        match serde_json::from_str::<serde_json::Value>(&line) {
            Ok(value) => out.push((value, line_no)),
            Err(e) if line_no == last => {
                log::warn!(
                    "skipping corrupt trailing line {line_no} of {stream} \
                     (interrupted append?): {e}"
                );
            }
            Err(e) => {
                return Err(StoreError::CorruptStream {
                    stream: stream.to_string(),
                    line_no,
                    detail: e.to_string(),
                });
            }
        }
    }
    Ok(out)
}
