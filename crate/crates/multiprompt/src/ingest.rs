//! File formats and persistence: line-delimited records for pools,
//! instances, and response logs; single-object JSON for tasks.
//!
//! All loaders are deterministic in the file bytes, and write/load
//! round-trips preserve every field (scores bit-exactly).

use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::de::DeserializeOwned;
use serde_json::Value;
use thiserror::Error;

use crate::template::{EvalRecord, Instance, InstructionTemplate, Method, TaskSpec, Validity};

#[derive(Debug, Error)]
pub enum IngestError {
    #[error("{path}:{line}: parse error: {detail}")]
    Parse {
        path: PathBuf,
        line: usize,
        detail: String,
    },
    #[error("{path}:{line}: schema error: field {field}: {detail}")]
    Schema {
        path: PathBuf,
        line: usize,
        field: String,
        detail: String,
    },
    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl IngestError {
    fn io(path: &Path, source: std::io::Error) -> Self {
        IngestError::Io {
            path: path.to_path_buf(),
            source,
        }
    }
}

fn require_fields(
    value: &Value,
    fields: &[&str],
    path: &Path,
    line: usize,
) -> Result<(), IngestError> {
    let object = value.as_object().ok_or_else(|| IngestError::Parse {
        path: path.to_path_buf(),
        line,
        detail: "expected a JSON object".to_string(),
    })?;
    for field in fields {
        if !object.contains_key(*field) {
            return Err(IngestError::Schema {
                path: path.to_path_buf(),
                line,
                field: field.to_string(),
                detail: "missing".to_string(),
            });
        }
    }
    Ok(())
}

fn parse_line<T: DeserializeOwned>(
    text: &str,
    fields: &[&str],
    path: &Path,
    line: usize,
) -> Result<T, IngestError> {
    let value: Value = serde_json::from_str(text).map_err(|e| IngestError::Parse {
        path: path.to_path_buf(),
        line,
        detail: e.to_string(),
    })?;
    require_fields(&value, fields, path, line)?;
    serde_json::from_value(value).map_err(|e| IngestError::Parse {
        path: path.to_path_buf(),
        line,
        detail: e.to_string(),
    })
}

fn read_lines(path: &Path) -> Result<Vec<(usize, String)>, IngestError> {
    let file = fs::File::open(path).map_err(|e| IngestError::io(path, e))?;
    let mut lines = Vec::new();
    for (idx, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| IngestError::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        lines.push((idx + 1, line));
    }
    Ok(lines)
}

fn write_jsonl<T: serde::Serialize>(path: &Path, items: &[T]) -> Result<(), IngestError> {
    if let Some(parent) = path.parent() {
        if !parent.as_os_str().is_empty() {
            fs::create_dir_all(parent).map_err(|e| IngestError::io(path, e))?;
        }
    }
    let file = fs::File::create(path).map_err(|e| IngestError::io(path, e))?;
    let mut writer = BufWriter::new(file);
    for item in items {
        let line = serde_json::to_string(item).map_err(|e| IngestError::Parse {
            path: path.to_path_buf(),
            line: 0,
            detail: e.to_string(),
        })?;
        writeln!(writer, "{line}").map_err(|e| IngestError::io(path, e))?;
    }
    writer.flush().map_err(|e| IngestError::io(path, e))
}

const POOL_FIELDS: &[&str] = &["template_id", "task_id", "body", "method"];
const INSTANCE_FIELDS: &[&str] = &["instance_id", "task_id", "fields", "gold"];
const RECORD_FIELDS: &[&str] = &[
    "model_id",
    "task_id",
    "template_id",
    "instance_id",
    "prompt",
    "completion",
    "score",
];

/// Loads a pool file: one template per line, order preserved. Validity
/// defaults to unreviewed when absent; original templates are always
/// valid.
pub fn load_pool(path: &Path) -> Result<Vec<InstructionTemplate>, IngestError> {
    let mut pool = Vec::new();
    for (line, text) in read_lines(path)? {
        let mut template: InstructionTemplate = parse_line(&text, POOL_FIELDS, path, line)?;
        if template.method == Method::Original {
            template.validity = Validity::Valid;
        }
        pool.push(template);
    }
    Ok(pool)
}

pub fn save_pool(path: &Path, pool: &[InstructionTemplate]) -> Result<(), IngestError> {
    write_jsonl(path, pool)
}

/// Loads an instance file, rejecting instances that miss a task
/// placeholder, have empty gold, or reuse an instance_id.
pub fn load_instances(path: &Path, task: &TaskSpec) -> Result<Vec<Instance>, IngestError> {
    let mut instances = Vec::new();
    let mut seen: BTreeSet<String> = BTreeSet::new();
    for (line, text) in read_lines(path)? {
        let instance: Instance = parse_line(&text, INSTANCE_FIELDS, path, line)?;
        if !seen.insert(instance.instance_id.clone()) {
            return Err(IngestError::Parse {
                path: path.to_path_buf(),
                line,
                detail: format!("duplicate instance_id {}", instance.instance_id),
            });
        }
        for name in &task.placeholder_names {
            if !instance.field_values.contains_key(name) {
                return Err(IngestError::Schema {
                    path: path.to_path_buf(),
                    line,
                    field: format!("fields.{name}"),
                    detail: "missing".to_string(),
                });
            }
        }
        if instance.gold.is_empty() {
            return Err(IngestError::Schema {
                path: path.to_path_buf(),
                line,
                field: "gold".to_string(),
                detail: "must be non-empty".to_string(),
            });
        }
        instances.push(instance);
    }
    Ok(instances)
}

pub fn save_instances(path: &Path, instances: &[Instance]) -> Result<(), IngestError> {
    write_jsonl(path, instances)
}

/// Loads a response log. Scores are taken from the file, not
/// recomputed, so replay analyses stay reproducible.
pub fn load_records(path: &Path) -> Result<Vec<EvalRecord>, IngestError> {
    let mut records = Vec::new();
    for (line, text) in read_lines(path)? {
        let record: EvalRecord = parse_line(&text, RECORD_FIELDS, path, line)?;
        if !(0.0..=1.0).contains(&record.score) {
            return Err(IngestError::Schema {
                path: path.to_path_buf(),
                line,
                field: "score".to_string(),
                detail: format!("{} outside [0,1]", record.score),
            });
        }
        records.push(record);
    }
    Ok(records)
}

pub fn write_records(path: &Path, records: &[EvalRecord]) -> Result<(), IngestError> {
    write_jsonl(path, records)
}

/// Appends records to an existing log through a single writer.
pub struct RecordWriter {
    path: PathBuf,
    writer: BufWriter<fs::File>,
}

impl RecordWriter {
    pub fn append(path: &Path) -> Result<Self, IngestError> {
        if let Some(parent) = path.parent() {
            if !parent.as_os_str().is_empty() {
                fs::create_dir_all(parent).map_err(|e| IngestError::io(path, e))?;
            }
        }
        let file = fs::OpenOptions::new()
            .create(true)
            .append(true)
            .open(path)
            .map_err(|e| IngestError::io(path, e))?;
        Ok(Self {
            path: path.to_path_buf(),
            writer: BufWriter::new(file),
        })
    }

    pub fn write(&mut self, record: &EvalRecord) -> Result<(), IngestError> {
        let line = serde_json::to_string(record).map_err(|e| IngestError::Parse {
            path: self.path.clone(),
            line: 0,
            detail: e.to_string(),
        })?;
        writeln!(self.writer, "{line}").map_err(|e| IngestError::io(&self.path, e))
    }

    pub fn flush(&mut self) -> Result<(), IngestError> {
        self.writer.flush().map_err(|e| IngestError::io(&self.path, e))
    }
}

pub fn load_task(path: &Path) -> Result<TaskSpec, IngestError> {
    let text = fs::read_to_string(path).map_err(|e| IngestError::io(path, e))?;
    let value: Value = serde_json::from_str(&text).map_err(|e| IngestError::Parse {
        path: path.to_path_buf(),
        line: 1,
        detail: e.to_string(),
    })?;
    require_fields(&value, &["task_id", "benchmark", "placeholders"], path, 1)?;
    serde_json::from_value(value).map_err(|e| IngestError::Parse {
        path: path.to_path_buf(),
        line: 1,
        detail: e.to_string(),
    })
}

pub fn save_task(path: &Path, task: &TaskSpec) -> Result<(), IngestError> {
    if let Some(parent) = path.parent() {
        if !parent.as_os_str().is_empty() {
            fs::create_dir_all(parent).map_err(|e| IngestError::io(path, e))?;
        }
    }
    let text = serde_json::to_string_pretty(task).map_err(|e| IngestError::Parse {
        path: path.to_path_buf(),
        line: 0,
        detail: e.to_string(),
    })?;
    fs::write(path, text + "\n").map_err(|e| IngestError::io(path, e))
}

/// A directory of tasks, pools, and runs laid out as
/// `tasks/<task_id>.json`, `pools/<task_id>.jsonl`, `runs/<run_id>/`.
#[derive(Debug)]
pub struct Workspace {
    pub root: PathBuf,
    pub tasks: BTreeMap<String, TaskSpec>,
    pub pools: BTreeMap<String, Vec<InstructionTemplate>>,
    pub runs: Vec<String>,
}

impl Workspace {
    pub fn open(root: &Path) -> Result<Self, IngestError> {
        let mut tasks = BTreeMap::new();
        let tasks_dir = root.join("tasks");
        if tasks_dir.is_dir() {
            let mut entries: Vec<_> = fs::read_dir(&tasks_dir)
                .map_err(|e| IngestError::io(&tasks_dir, e))?
                .filter_map(Result::ok)
                .map(|e| e.path())
                .filter(|p| p.extension().is_some_and(|ext| ext == "json"))
                .collect();
            entries.sort();
            for path in entries {
                let task = load_task(&path)?;
                tasks.insert(task.task_id.clone(), task);
            }
        }
        let mut pools = BTreeMap::new();
        for task_id in tasks.keys() {
            let pool_path = root.join("pools").join(format!("{task_id}.jsonl"));
            if pool_path.is_file() {
                pools.insert(task_id.clone(), load_pool(&pool_path)?);
            }
        }
        let mut runs = Vec::new();
        let runs_dir = root.join("runs");
        if runs_dir.is_dir() {
            let mut entries: Vec<_> = fs::read_dir(&runs_dir)
                .map_err(|e| IngestError::io(&runs_dir, e))?
                .filter_map(Result::ok)
                .filter(|e| e.path().is_dir())
                .map(|e| e.file_name().to_string_lossy().into_owned())
                .collect();
            entries.sort();
            runs = entries;
        }
        Ok(Self {
            root: root.to_path_buf(),
            tasks,
            pools,
            runs,
        })
    }

    pub fn task_path(&self, task_id: &str) -> PathBuf {
        self.root.join("tasks").join(format!("{task_id}.json"))
    }

    pub fn pool_path(&self, task_id: &str) -> PathBuf {
        self.root.join("pools").join(format!("{task_id}.jsonl"))
    }

    pub fn run_dir(&self, run_id: &str) -> PathBuf {
        self.root.join("runs").join(run_id)
    }
}
