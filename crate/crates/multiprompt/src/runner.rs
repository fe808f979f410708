//! Evaluation orchestration: instance subsampling, prompt
//! construction, backend calls, scoring, and matrix assembly.
//!
//! A run uses the same sampled instance subset for every
//! (template, model) pair so that template effects are not confounded
//! with sample effects, and persists every record so the matrix can be
//! rebuilt exactly from the log.

use std::collections::HashMap;
use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::backend::{Backend, BackendError, BackendSpec, CompletionRequest};
use crate::ingest::{self, IngestError, RecordWriter};
use crate::matrix::{MatrixError, PerformanceMatrix};
use crate::template::{
    instantiate, validate_pool, EvalRecord, Instance, InstructionTemplate, PoolViolation,
    TaskSpec, TemplateError, Validity,
};

#[derive(Debug, Error)]
pub enum RunnerError {
    #[error("pool failed validation with {} violation(s): {}", .0.len(), format_violations(.0))]
    PoolInvalid(Vec<PoolViolation>),
    #[error("template {template_id} is {validity:?}; only valid templates may run (pass allow_unreviewed for unreviewed ones)")]
    TemplateNotRunnable {
        template_id: String,
        validity: Validity,
    },
    #[error("no templates selected")]
    NoTemplates,
    #[error("no instances available")]
    NoInstances,
    #[error("unknown scorer {0}")]
    UnknownScorer(String),
    #[error("template {template_id}: backend call for instance {instance_id} failed: {source}")]
    Backend {
        template_id: String,
        instance_id: String,
        #[source]
        source: BackendError,
    },
    #[error("conflicting persisted records for ({model_id}, {template_id}, {instance_id})")]
    ConflictingRecords {
        model_id: String,
        template_id: String,
        instance_id: String,
    },
    #[error(transparent)]
    Template(#[from] TemplateError),
    #[error(transparent)]
    Ingest(#[from] IngestError),
    #[error(transparent)]
    Matrix(#[from] MatrixError),
}

fn format_violations(violations: &[PoolViolation]) -> String {
    violations
        .iter()
        .take(3)
        .map(|v| v.to_string())
        .collect::<Vec<_>>()
        .join("; ")
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FailurePolicy {
    /// A failed backend call aborts the whole template (the default;
    /// silently scoring failures as 0 would bias the aggregate).
    #[default]
    AbortTemplate,
    /// Failed calls score 0 and the record is flagged.
    ScoreZero,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TemplateSelection {
    AllValid,
    Explicit(Vec<String>),
}

impl Default for TemplateSelection {
    fn default() -> Self {
        TemplateSelection::AllValid
    }
}

/// Configuration for one evaluation run.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunConfig {
    pub run_id: String,
    pub task_id: String,
    pub backends: Vec<BackendSpec>,
    #[serde(default)]
    pub template_selection: TemplateSelection,
    #[serde(default = "default_sample_size")]
    pub instance_sample_size: usize,
    pub sampling_seed: u64,
    #[serde(default = "default_scorer_id")]
    pub scorer_id: String,
    /// Permits validity=unreviewed templates, supporting analyses of
    /// unfiltered pools.
    #[serde(default)]
    pub allow_unreviewed: bool,
    #[serde(default)]
    pub failure_policy: FailurePolicy,
    #[serde(default)]
    pub score_options: ScoreOptions,
}

fn default_sample_size() -> usize {
    100
}

fn default_scorer_id() -> String {
    "exact_match".to_string()
}

/// Draws k distinct instances uniformly without replacement using a
/// seeded Fisher-Yates partial shuffle. If k >= len, returns all in
/// shuffled order. Deterministic in (input order, k, seed).
pub fn sample_instances(instances: &[Instance], k: usize, seed: u64) -> Vec<Instance> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut indices: Vec<usize> = (0..instances.len()).collect();
    let take = k.min(instances.len());
    for i in 0..take {
        let j = rng.gen_range(i..indices.len());
        indices.swap(i, j);
    }
    indices[..take]
        .iter()
        .map(|&i| instances[i].clone())
        .collect()
}

/// Normalization knobs for exact-match scoring, applied in field
/// order: trim, casefold, strip one trailing period.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ScoreOptions {
    pub trim: bool,
    pub casefold: bool,
    pub strip_trailing_period: bool,
}

impl Default for ScoreOptions {
    fn default() -> Self {
        Self {
            trim: true,
            casefold: false,
            strip_trailing_period: false,
        }
    }
}

fn normalize(text: &str, options: &ScoreOptions) -> String {
    let mut out = if options.trim {
        text.trim().to_string()
    } else {
        text.to_string()
    };
    if options.casefold {
        out = out.to_lowercase();
    }
    if options.strip_trailing_period {
        if let Some(stripped) = out.strip_suffix('.') {
            out = stripped.to_string();
        }
    }
    out
}

/// 1 iff the normalized completion equals any normalized gold answer.
pub fn score_exact(completion: &str, gold: &[String], options: &ScoreOptions) -> f64 {
    let normalized = normalize(completion, options);
    let hit = gold.iter().any(|g| normalize(g, options) == normalized);
    if hit {
        1.0
    } else {
        0.0
    }
}

pub trait Scorer: Sync {
    fn id(&self) -> &str;
    fn score(&self, completion: &str, gold: &[String]) -> f64;
}

pub struct ExactMatchScorer {
    pub options: ScoreOptions,
}

impl Scorer for ExactMatchScorer {
    fn id(&self) -> &str {
        "exact_match"
    }

    fn score(&self, completion: &str, gold: &[String]) -> f64 {
        score_exact(completion, gold, &self.options)
    }
}

/// Dispatch seam for scorers; only exact match is built in.
pub fn scorer_for(scorer_id: &str, options: ScoreOptions) -> Result<Box<dyn Scorer>, RunnerError> {
    match scorer_id {
        "exact_match" => Ok(Box::new(ExactMatchScorer { options })),
        other => Err(RunnerError::UnknownScorer(other.to_string())),
    }
}

/// Evaluates one template on the given instances: one record per
/// instance plus the mean score.
pub fn evaluate_template(
    backend: &Backend,
    template: &InstructionTemplate,
    instances: &[Instance],
    scorer: &dyn Scorer,
    policy: FailurePolicy,
    max_in_flight: usize,
) -> Result<(Vec<EvalRecord>, f64), RunnerError> {
    if instances.is_empty() {
        return Err(RunnerError::NoInstances);
    }
    let prompts: Vec<String> = instances
        .iter()
        .map(|instance| instantiate(template, instance))
        .collect::<Result<_, _>>()?;

    let workers = max_in_flight.max(1).min(instances.len());
    let mut outcomes: Vec<Option<Result<String, BackendError>>> = Vec::new();
    outcomes.resize_with(instances.len(), || None);

    if workers <= 1 {
        for (idx, instance) in instances.iter().enumerate() {
            let req = CompletionRequest::for_instance(&prompts[idx], &template.template_id, instance);
            outcomes[idx] = Some(backend.complete(&req));
        }
    } else {
        // Results are keyed by index so aggregation order is
        // independent of completion order.
        let next = std::sync::atomic::AtomicUsize::new(0);
        let slots: Vec<std::sync::Mutex<Option<Result<String, BackendError>>>> =
            (0..instances.len()).map(|_| std::sync::Mutex::new(None)).collect();
        std::thread::scope(|scope| {
            for _ in 0..workers {
                scope.spawn(|| loop {
                    let idx = next.fetch_add(1, std::sync::atomic::Ordering::Relaxed);
                    if idx >= instances.len() {
                        break;
                    }
                    let req = CompletionRequest::for_instance(
                        &prompts[idx],
                        &template.template_id,
                        &instances[idx],
                    );
                    *slots[idx].lock().unwrap() = Some(backend.complete(&req));
                });
            }
        });
        for (idx, slot) in slots.into_iter().enumerate() {
            outcomes[idx] = slot.into_inner().unwrap();
        }
    }

    let mut records = Vec::with_capacity(instances.len());
    let mut total = 0.0;
    for (idx, instance) in instances.iter().enumerate() {
        let outcome = outcomes[idx].take().expect("every slot filled");
        let (completion, score, failed) = match outcome {
            Ok(completion) => {
                let score = scorer.score(&completion, &instance.gold);
                (completion, score, false)
            }
            Err(source) => match policy {
                FailurePolicy::AbortTemplate => {
                    return Err(RunnerError::Backend {
                        template_id: template.template_id.clone(),
                        instance_id: instance.instance_id.clone(),
                        source,
                    })
                }
                FailurePolicy::ScoreZero => (String::new(), 0.0, true),
            },
        };
        total += score;
        records.push(EvalRecord {
            model_id: backend.model_id().to_string(),
            task_id: template.task_id.clone(),
            template_id: template.template_id.clone(),
            instance_id: instance.instance_id.clone(),
            prompt: prompts[idx].clone(),
            completion,
            score,
            failed,
        });
    }
    let epsilon = total / instances.len() as f64;
    Ok((records, epsilon))
}

/// Applies the run's template selection and validity rules to a pool.
pub fn select_templates(
    pool: &[InstructionTemplate],
    config: &RunConfig,
) -> Result<Vec<InstructionTemplate>, RunnerError> {
    let runnable = |t: &InstructionTemplate| match t.validity {
        Validity::Valid => Ok(()),
        Validity::Unreviewed if config.allow_unreviewed => Ok(()),
        validity => Err(RunnerError::TemplateNotRunnable {
            template_id: t.template_id.clone(),
            validity,
        }),
    };
    let selected: Vec<InstructionTemplate> = match &config.template_selection {
        TemplateSelection::AllValid => pool
            .iter()
            .filter(|t| runnable(t).is_ok())
            .cloned()
            .collect(),
        TemplateSelection::Explicit(ids) => {
            let mut out = Vec::with_capacity(ids.len());
            for id in ids {
                let template = pool
                    .iter()
                    .find(|t| &t.template_id == id)
                    .ok_or_else(|| RunnerError::TemplateNotRunnable {
                        template_id: id.clone(),
                        validity: Validity::Unreviewed,
                    })?;
                runnable(template)?;
                out.push(template.clone());
            }
            out
        }
    };
    if selected.is_empty() {
        return Err(RunnerError::NoTemplates);
    }
    Ok(selected)
}

/// Everything `run` leaves on disk plus the assembled matrix.
#[derive(Debug)]
pub struct RunOutput {
    pub matrix: PerformanceMatrix,
    pub records_path: PathBuf,
    pub sampled_instance_ids: Vec<String>,
    /// Number of backend calls skipped because a persisted record
    /// already covered the key.
    pub resumed_cells: usize,
}

pub const RECORDS_FILE: &str = "records.jsonl";
pub const RUN_CONFIG_FILE: &str = "run.json";
pub const TASK_FILE: &str = "task.json";
pub const POOL_FILE: &str = "pool.jsonl";
pub const INSTANCES_FILE: &str = "instances.jsonl";

/// Runs the full grid: every selected template of every backend on one
/// shared instance subset. Writes a self-contained run directory
/// (config, task, pool, instances, records) and resumes from the
/// record file when keys are already present.
pub fn run(
    config: &RunConfig,
    task: &TaskSpec,
    pool: &[InstructionTemplate],
    instances: &[Instance],
    out_dir: &Path,
) -> Result<RunOutput, RunnerError> {
    let violations = validate_pool(pool, task);
    if !violations.is_empty() {
        return Err(RunnerError::PoolInvalid(violations));
    }
    let selected = select_templates(pool, config)?;
    if instances.is_empty() {
        return Err(RunnerError::NoInstances);
    }
    let scorer = scorer_for(&config.scorer_id, config.score_options)?;
    let sampled = sample_instances(instances, config.instance_sample_size, config.sampling_seed);

    std::fs::create_dir_all(out_dir).map_err(|e| IngestError::Io {
        path: out_dir.to_path_buf(),
        source: e,
    })?;
    write_run_config(&out_dir.join(RUN_CONFIG_FILE), config)?;
    ingest::save_task(&out_dir.join(TASK_FILE), task)?;
    ingest::save_pool(&out_dir.join(POOL_FILE), pool)?;
    ingest::save_instances(&out_dir.join(INSTANCES_FILE), instances)?;

    let records_path = out_dir.join(RECORDS_FILE);
    let mut persisted: HashMap<(String, String, String), EvalRecord> = HashMap::new();
    if records_path.is_file() {
        for record in ingest::load_records(&records_path)? {
            let key = (
                record.model_id.clone(),
                record.template_id.clone(),
                record.instance_id.clone(),
            );
            if let Some(existing) = persisted.get(&key) {
                if existing.score.to_bits() != record.score.to_bits()
                    || existing.completion != record.completion
                {
                    return Err(RunnerError::ConflictingRecords {
                        model_id: key.0,
                        template_id: key.1,
                        instance_id: key.2,
                    });
                }
                continue;
            }
            persisted.insert(key, record);
        }
    }

    let mut writer = RecordWriter::append(&records_path)?;
    let mut resumed_cells = 0usize;
    let mut rows: Vec<Vec<f64>> = vec![Vec::with_capacity(config.backends.len()); selected.len()];
    let model_ids: Vec<String> = config.backends.iter().map(|b| b.model_id.clone()).collect();

    for spec in &config.backends {
        let backend = Backend::from_spec(spec).map_err(|source| RunnerError::Backend {
            template_id: String::new(),
            instance_id: String::new(),
            source,
        })?;
        for (row_idx, template) in selected.iter().enumerate() {
            let have_all = sampled.iter().all(|instance| {
                persisted.contains_key(&(
                    spec.model_id.clone(),
                    template.template_id.clone(),
                    instance.instance_id.clone(),
                ))
            });
            let cell_records: Vec<EvalRecord> = if have_all {
                resumed_cells += 1;
                sampled
                    .iter()
                    .map(|instance| {
                        persisted[&(
                            spec.model_id.clone(),
                            template.template_id.clone(),
                            instance.instance_id.clone(),
                        )]
                            .clone()
                    })
                    .collect()
            } else {
                let pending: Vec<Instance> = sampled
                    .iter()
                    .filter(|instance| {
                        !persisted.contains_key(&(
                            spec.model_id.clone(),
                            template.template_id.clone(),
                            instance.instance_id.clone(),
                        ))
                    })
                    .cloned()
                    .collect();
                let (fresh, _) = evaluate_template(
                    &backend,
                    template,
                    &pending,
                    scorer.as_ref(),
                    config.failure_policy,
                    spec.max_in_flight,
                )?;
                for record in &fresh {
                    writer.write(record)?;
                    persisted.insert(
                        (
                            record.model_id.clone(),
                            record.template_id.clone(),
                            record.instance_id.clone(),
                        ),
                        record.clone(),
                    );
                }
                writer.flush()?;
                sampled
                    .iter()
                    .map(|instance| {
                        persisted[&(
                            spec.model_id.clone(),
                            template.template_id.clone(),
                            instance.instance_id.clone(),
                        )]
                            .clone()
                    })
                    .collect()
            };
            // Cell value is the exact mean of the persisted records.
            let epsilon: f64 = cell_records.iter().map(|r| r.score).sum::<f64>()
                / cell_records.len() as f64;
            rows[row_idx].push(epsilon);
        }
    }
    writer.flush()?;

    let template_ids: Vec<String> = selected.iter().map(|t| t.template_id.clone()).collect();
    let matrix = PerformanceMatrix::from_rows(&config.task_id, template_ids, model_ids, rows)?;
    Ok(RunOutput {
        matrix,
        records_path,
        sampled_instance_ids: sampled.iter().map(|i| i.instance_id.clone()).collect(),
        resumed_cells,
    })
}

pub fn write_run_config(path: &Path, config: &RunConfig) -> Result<(), RunnerError> {
    let text = serde_json::to_string_pretty(config).expect("run config serializes");
    std::fs::write(path, text + "\n").map_err(|e| {
        RunnerError::Ingest(IngestError::Io {
            path: path.to_path_buf(),
            source: e,
        })
    })
}

pub fn load_run_config(path: &Path) -> Result<RunConfig, RunnerError> {
    let text = std::fs::read_to_string(path).map_err(|e| {
        RunnerError::Ingest(IngestError::Io {
            path: path.to_path_buf(),
            source: e,
        })
    })?;
    serde_json::from_str(&text).map_err(|e| {
        RunnerError::Ingest(IngestError::Parse {
            path: path.to_path_buf(),
            line: 0,
            detail: e.to_string(),
        })
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::backend::SyntheticProfile;
    use crate::template::Method;
    use std::collections::BTreeMap;

    fn task() -> TaskSpec {
        TaskSpec {
            task_id: "t".into(),
            benchmark: "b".into(),
            placeholder_names: vec!["letter".into()],
            original_template_ids: vec!["orig".into()],
            scorer_id: "exact_match".into(),
        }
    }

    fn template(id: &str, method: Method, validity: Validity) -> InstructionTemplate {
        InstructionTemplate {
            template_id: id.into(),
            task_id: "t".into(),
            body: format!("{id}: avoid the letter {{letter}}"),
            method,
            validity,
            annotator_ids: vec![],
        }
    }

    fn instances(n: usize) -> Vec<Instance> {
        (0..n)
            .map(|i| Instance {
                instance_id: format!("i{i:03}"),
                task_id: "t".into(),
                field_values: BTreeMap::from([("letter".to_string(), "q".to_string())]),
                gold: vec![format!("word{i}")],
            })
            .collect()
    }

    fn synthetic_spec(model_id: &str, base: f64) -> BackendSpec {
        BackendSpec::synthetic(
            model_id,
            SyntheticProfile {
                base_ability: base,
                template_bias: BTreeMap::new(),
                seed: 1,
            },
        )
    }

    #[test]
    fn sampling_is_deterministic_and_distinct() {
        let pool = instances(500);
        let a = sample_instances(&pool, 100, 7);
        let b = sample_instances(&pool, 100, 7);
        assert_eq!(a, b);
        assert_eq!(a.len(), 100);
        let ids: std::collections::BTreeSet<_> = a.iter().map(|i| &i.instance_id).collect();
        assert_eq!(ids.len(), 100);
        let c = sample_instances(&pool, 100, 8);
        assert_ne!(a, c);
    }

    #[test]
    fn sampling_clamps_and_permutes() {
        let pool = instances(30);
        let sampled = sample_instances(&pool, 100, 3);
        assert_eq!(sampled.len(), 30);
        let mut ids: Vec<_> = sampled.iter().map(|i| i.instance_id.clone()).collect();
        ids.sort();
        let mut expected: Vec<_> = pool.iter().map(|i| i.instance_id.clone()).collect();
        expected.sort();
        assert_eq!(ids, expected);
    }

    #[test]
    fn exact_match_options() {
        let gold = vec!["dog".to_string()];
        let defaults = ScoreOptions::default();
        assert_eq!(score_exact("dog", &gold, &defaults), 1.0);
        assert_eq!(score_exact("  dog \n", &gold, &defaults), 1.0);
        assert_eq!(score_exact("Dog", &gold, &defaults), 0.0);
        let folded = ScoreOptions {
            casefold: true,
            ..defaults
        };
        assert_eq!(score_exact("Dog", &gold, &folded), 1.0);
        let period = ScoreOptions {
            strip_trailing_period: true,
            ..defaults
        };
        assert_eq!(score_exact("dog.", &gold, &period), 1.0);
        assert_eq!(score_exact("dog..", &gold, &period), 0.0);
    }

    #[test]
    fn evaluate_template_extremes() {
        let tpl = template("a", Method::Rephrase, Validity::Valid);
        let inst = instances(10);
        let scorer = ExactMatchScorer {
            options: ScoreOptions::default(),
        };
        let sure = Backend::from_spec(&synthetic_spec("m", 1.0)).unwrap();
        let (records, eps) =
            evaluate_template(&sure, &tpl, &inst, &scorer, FailurePolicy::AbortTemplate, 1)
                .unwrap();
        assert_eq!(records.len(), 10);
        assert_eq!(eps, 1.0);

        let never = Backend::from_spec(&synthetic_spec("m", 0.0)).unwrap();
        let (_, eps) =
            evaluate_template(&never, &tpl, &inst, &scorer, FailurePolicy::AbortTemplate, 1)
                .unwrap();
        assert_eq!(eps, 0.0);
    }

    #[test]
    fn evaluate_template_replay_fraction() {
        // 7 of 10 completions equal gold; recounted via direct sum.
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("log.jsonl");
        let inst = instances(10);
        let records: Vec<EvalRecord> = inst
            .iter()
            .enumerate()
            .map(|(i, instance)| EvalRecord {
                model_id: "m".into(),
                task_id: "t".into(),
                template_id: "a".into(),
                instance_id: instance.instance_id.clone(),
                prompt: "p".into(),
                completion: if i < 7 {
                    instance.gold[0].clone()
                } else {
                    "nope".into()
                },
                score: if i < 7 { 1.0 } else { 0.0 },
                failed: false,
            })
            .collect();
        let expected = records.iter().map(|r| r.score).sum::<f64>() / records.len() as f64;
        ingest::write_records(&path, &records).unwrap();
        let backend = Backend::from_spec(&BackendSpec::replay("m", &path)).unwrap();
        let tpl = template("a", Method::Rephrase, Validity::Valid);
        let scorer = ExactMatchScorer {
            options: ScoreOptions::default(),
        };
        let (_, eps) =
            evaluate_template(&backend, &tpl, &inst, &scorer, FailurePolicy::AbortTemplate, 1)
                .unwrap();
        assert_eq!(eps, expected);
        assert_eq!(eps, 0.7);
    }

    fn base_config(run_id: &str) -> RunConfig {
        RunConfig {
            run_id: run_id.into(),
            task_id: "t".into(),
            backends: vec![synthetic_spec("m1", 1.0), synthetic_spec("m2", 0.0)],
            template_selection: TemplateSelection::AllValid,
            instance_sample_size: 10,
            sampling_seed: 5,
            scorer_id: "exact_match".into(),
            allow_unreviewed: false,
            failure_policy: FailurePolicy::AbortTemplate,
            score_options: ScoreOptions::default(),
        }
    }

    #[test]
    fn run_produces_dense_matrix_and_records() {
        let dir = tempfile::tempdir().unwrap();
        let pool = vec![
            template("a", Method::Original, Validity::Valid),
            template("b", Method::Rephrase, Validity::Valid),
            template("c", Method::Cot, Validity::Valid),
        ];
        let out = run(&base_config("r1"), &task(), &pool, &instances(10), dir.path()).unwrap();
        assert_eq!(out.matrix.n_templates(), 3);
        assert_eq!(out.matrix.n_models(), 2);
        let records = ingest::load_records(&out.records_path).unwrap();
        assert_eq!(records.len(), 60);
        for i in 0..3 {
            assert_eq!(out.matrix.get(i, 0), 1.0);
            assert_eq!(out.matrix.get(i, 1), 0.0);
        }
    }

    #[test]
    fn run_rejects_invalid_template_without_flag() {
        let dir = tempfile::tempdir().unwrap();
        let pool = vec![
            template("a", Method::Rephrase, Validity::Valid),
            template("b", Method::Rephrase, Validity::Invalid),
        ];
        let config = RunConfig {
            template_selection: TemplateSelection::Explicit(vec!["b".into()]),
            ..base_config("r2")
        };
        let err = run(&config, &task(), &pool, &instances(10), dir.path()).unwrap_err();
        assert!(matches!(err, RunnerError::TemplateNotRunnable { .. }));
    }

    #[test]
    fn unreviewed_needs_flag() {
        let pool = vec![template("a", Method::Rephrase, Validity::Unreviewed)];
        let config = base_config("r3");
        assert!(matches!(
            select_templates(&pool, &config),
            Err(RunnerError::NoTemplates)
        ));
        let permissive = RunConfig {
            allow_unreviewed: true,
            ..config
        };
        assert_eq!(select_templates(&pool, &permissive).unwrap().len(), 1);
    }

    #[test]
    fn resume_reproduces_uninterrupted_matrix() {
        let pool = vec![
            template("a", Method::Original, Validity::Valid),
            template("b", Method::Rephrase, Validity::Valid),
        ];
        let inst = instances(10);
        let config = RunConfig {
            backends: vec![synthetic_spec("m1", 0.6), synthetic_spec("m2", 0.4)],
            ..base_config("r4")
        };

        let full_dir = tempfile::tempdir().unwrap();
        let full = run(&config, &task(), &pool, &inst, full_dir.path()).unwrap();

        // Interrupt: persist only the first 13 records, then resume.
        let resumed_dir = tempfile::tempdir().unwrap();
        std::fs::create_dir_all(resumed_dir.path()).unwrap();
        let all_records = ingest::load_records(&full.records_path).unwrap();
        ingest::write_records(
            &resumed_dir.path().join(RECORDS_FILE),
            &all_records[..13],
        )
        .unwrap();
        let resumed = run(&config, &task(), &pool, &inst, resumed_dir.path()).unwrap();
        assert_eq!(resumed.matrix, full.matrix);
        assert!(resumed.resumed_cells >= 1);

        // Idempotence: a second run over a complete log changes nothing.
        let again = run(&config, &task(), &pool, &inst, resumed_dir.path()).unwrap();
        assert_eq!(again.matrix, full.matrix);
        assert_eq!(again.resumed_cells, 4);
    }

    #[test]
    fn synthetic_epsilon_tracks_probability() {
        let n = 400;
        let p = 0.7;
        let config = RunConfig {
            backends: vec![synthetic_spec("m", p)],
            instance_sample_size: n,
            ..base_config("r5")
        };
        let pool = vec![template("a", Method::Rephrase, Validity::Valid)];
        let dir = tempfile::tempdir().unwrap();
        let out = run(&config, &task(), &pool, &instances(n), dir.path()).unwrap();
        let eps = out.matrix.get(0, 0);
        let bound = 3.0 * (p * (1.0 - p) / n as f64).sqrt();
        assert!(
            (eps - p).abs() <= bound,
            "eps {eps} should be within {bound} of {p}"
        );
    }
}
