//! Paraphrase generation via meta-prompts, the annotation/agreement
//! workflow, and minimal-edit pair analysis.

use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::backend::{Backend, BackendError, CompletionRequest};
use crate::matrix::PerformanceMatrix;
use crate::stats::{cohens_kappa, StatsError};
use crate::template::{
    normalize_body, placeholders_in, InstructionTemplate, Method, TaskSpec, Validity,
};

#[derive(Debug, Error)]
pub enum ParaphraseError {
    #[error("unknown template {0}")]
    UnknownTemplate(String),
    #[error("annotators {0} and {1} share no annotated templates")]
    NoOverlap(String, String),
    #[error("method {0:?} is not a generation method")]
    NotGenerative(Method),
    #[error("generation backend failed: {0}")]
    Backend(#[from] BackendError),
    #[error("io error on {path}: {source}")]
    Io {
        path: std::path::PathBuf,
        #[source]
        source: std::io::Error,
    },
}

/// The meta-prompt texts driving the three generation methods. Each is
/// plain text with `{seed_template}`, `{task_description}`, and
/// `{examples}` slots.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MetaPrompts {
    pub rephrase: String,
    pub cot: String,
    pub gradual_describe: String,
    pub gradual_instruct: String,
    pub gradual_finalize: String,
}

impl Default for MetaPrompts {
    fn default() -> Self {
        Self {
            rephrase: include_str!("../data/meta_prompts/rephrase.txt").to_string(),
            cot: include_str!("../data/meta_prompts/cot.txt").to_string(),
            gradual_describe: include_str!("../data/meta_prompts/gradual_describe.txt")
                .to_string(),
            gradual_instruct: include_str!("../data/meta_prompts/gradual_instruct.txt")
                .to_string(),
            gradual_finalize: include_str!("../data/meta_prompts/gradual_finalize.txt")
                .to_string(),
        }
    }
}

impl MetaPrompts {
    /// Loads overrides from a directory holding any of rephrase.txt,
    /// cot.txt, gradual_describe.txt, gradual_instruct.txt,
    /// gradual_finalize.txt; missing files keep the defaults.
    pub fn load_overrides(dir: &Path) -> Result<Self, ParaphraseError> {
        let mut prompts = Self::default();
        let read = |name: &str, slot: &mut String| -> Result<(), ParaphraseError> {
            let path = dir.join(name);
            if path.is_file() {
                *slot = std::fs::read_to_string(&path)
                    .map_err(|source| ParaphraseError::Io { path, source })?;
            }
            Ok(())
        };
        read("rephrase.txt", &mut prompts.rephrase)?;
        read("cot.txt", &mut prompts.cot)?;
        read("gradual_describe.txt", &mut prompts.gradual_describe)?;
        read("gradual_instruct.txt", &mut prompts.gradual_instruct)?;
        read("gradual_finalize.txt", &mut prompts.gradual_finalize)?;
        Ok(prompts)
    }
}

fn fill_slots(text: &str, seed_template: &str, task_description: &str, examples: &str) -> String {
    text.replace("{seed_template}", seed_template)
        .replace("{task_description}", task_description)
        .replace("{examples}", examples)
}

/// One generation request: which seeds, which method, how many
/// templates to aim for.
#[derive(Debug, Clone)]
pub struct GenerationJob {
    pub task: TaskSpec,
    pub seed_templates: Vec<InstructionTemplate>,
    pub method: Method,
    pub target_count: usize,
    /// Text filling the `{examples}` slot, typically a few formatted
    /// input-output pairs.
    pub exemplar_text: String,
    pub meta_prompts: Option<MetaPrompts>,
}

/// Why a candidate line from a completion was not turned into a
/// template.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub enum RejectReason {
    PlaceholderViolation(String),
    DuplicateOfPool(String),
    DuplicateOfBatch(String),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RejectedCandidate {
    pub text: String,
    pub reason: RejectReason,
}

#[derive(Debug, Clone, Default)]
pub struct GenerationOutcome {
    pub accepted: Vec<InstructionTemplate>,
    pub rejected: Vec<RejectedCandidate>,
    /// Completions that yielded no extractable candidate at all.
    pub parse_failures: usize,
}

/// Splits a completion into candidate template bodies: one candidate
/// per non-empty line, with list markers and wrapping quotes stripped.
pub fn split_candidates(completion: &str) -> Vec<String> {
    completion
        .lines()
        .map(strip_markers)
        .filter(|line| !line.is_empty())
        .collect()
}

fn strip_markers(line: &str) -> String {
    let mut text = line.trim();
    for prefix in ["- ", "* ", "• "] {
        if let Some(rest) = text.strip_prefix(prefix) {
            text = rest.trim_start();
        }
    }
    // numbered list markers: "3. " or "3) "
    let digits = text.chars().take_while(char::is_ascii_digit).count();
    if digits > 0 {
        let rest = &text[digits..];
        if let Some(rest) = rest.strip_prefix('.').or_else(|| rest.strip_prefix(')')) {
            text = rest.trim_start();
        }
    }
    let text = text.trim();
    if text.len() >= 2 && text.starts_with('"') && text.ends_with('"') {
        text[1..text.len() - 1].trim().to_string()
    } else {
        text.to_string()
    }
}

/// Stable generation-call keys so replay logs can drive generation.
/// The key is ("gen", method, seed template, call index) packed into
/// the instance id.
pub fn generation_key(method: Method, seed_id: &str, call: usize) -> String {
    format!("gen:{}:{}:{}", method.as_str(), seed_id, call)
}

fn call_generator(
    backend: &Backend,
    task: &TaskSpec,
    seed: &InstructionTemplate,
    method: Method,
    call: usize,
    prompt: &str,
) -> Result<String, ParaphraseError> {
    let instance_id = generation_key(method, &seed.template_id, call);
    let req = CompletionRequest {
        prompt,
        task_id: &task.task_id,
        template_id: &seed.template_id,
        instance_id: &instance_id,
        gold: &[],
    };
    Ok(backend.complete(&req)?)
}

/// Generates unreviewed paraphrase templates from the job's seeds.
/// Candidates are deduplicated against the existing pool (and each
/// other) on normalized bodies and must preserve the task's
/// placeholder set exactly; failures are reported, not fatal.
pub fn generate(
    job: &GenerationJob,
    backend: &Backend,
    existing_pool: &[InstructionTemplate],
) -> Result<GenerationOutcome, ParaphraseError> {
    let prompts = job.meta_prompts.clone().unwrap_or_default();
    let mut outcome = GenerationOutcome::default();
    let mut seen: BTreeSet<String> = existing_pool
        .iter()
        .map(|t| normalize_body(&t.body))
        .collect();
    let mut used_ids: BTreeSet<String> = existing_pool
        .iter()
        .map(|t| t.template_id.clone())
        .collect();
    let expected: BTreeSet<String> = job.task.placeholder_names.iter().cloned().collect();
    let mut counter = 0usize;

    for seed in &job.seed_templates {
        if outcome.accepted.len() >= job.target_count {
            break;
        }
        let raw = match job.method {
            Method::Rephrase => {
                let prompt = fill_slots(&prompts.rephrase, &seed.body, "", &job.exemplar_text);
                call_generator(backend, &job.task, seed, job.method, 0, &prompt)?
            }
            Method::Cot => {
                let prompt = fill_slots(&prompts.cot, &seed.body, "", &job.exemplar_text);
                call_generator(backend, &job.task, seed, job.method, 0, &prompt)?
            }
            Method::Gradual => {
                let describe =
                    fill_slots(&prompts.gradual_describe, &seed.body, "", &job.exemplar_text);
                let description =
                    call_generator(backend, &job.task, seed, job.method, 0, &describe)?;
                let instruct = fill_slots(
                    &prompts.gradual_instruct,
                    &seed.body,
                    description.trim(),
                    &job.exemplar_text,
                );
                let instruction =
                    call_generator(backend, &job.task, seed, job.method, 1, &instruct)?;
                let finalize = fill_slots(
                    &prompts.gradual_finalize,
                    &seed.body,
                    instruction.trim(),
                    &job.exemplar_text,
                );
                call_generator(backend, &job.task, seed, job.method, 2, &finalize)?
            }
            other => return Err(ParaphraseError::NotGenerative(other)),
        };

        let candidates = split_candidates(&raw);
        if candidates.is_empty() {
            outcome.parse_failures += 1;
            continue;
        }
        for body in candidates {
            if outcome.accepted.len() >= job.target_count {
                break;
            }
            match placeholders_in(&body) {
                Ok(found) if found == expected => {}
                Ok(found) => {
                    outcome.rejected.push(RejectedCandidate {
                        text: body,
                        reason: RejectReason::PlaceholderViolation(format!(
                            "found {{{}}}, expected {{{}}}",
                            found.into_iter().collect::<Vec<_>>().join(", "),
                            expected.iter().cloned().collect::<Vec<_>>().join(", ")
                        )),
                    });
                    continue;
                }
                Err(err) => {
                    outcome.rejected.push(RejectedCandidate {
                        text: body,
                        reason: RejectReason::PlaceholderViolation(err.to_string()),
                    });
                    continue;
                }
            }
            let normalized = normalize_body(&body);
            if !seen.insert(normalized) {
                let duplicate_of_pool = existing_pool
                    .iter()
                    .any(|t| normalize_body(&t.body) == normalize_body(&body));
                outcome.rejected.push(RejectedCandidate {
                    reason: if duplicate_of_pool {
                        RejectReason::DuplicateOfPool(body.clone())
                    } else {
                        RejectReason::DuplicateOfBatch(body.clone())
                    },
                    text: body,
                });
                continue;
            }
            let template_id = loop {
                let candidate = format!("{}-{}-{:04}", job.task.task_id, job.method.as_str(), counter);
                counter += 1;
                if used_ids.insert(candidate.clone()) {
                    break candidate;
                }
            };
            outcome.accepted.push(InstructionTemplate {
                template_id,
                task_id: job.task.task_id.clone(),
                body,
                method: job.method,
                validity: Validity::Unreviewed,
                annotator_ids: vec![],
            });
        }
    }
    Ok(outcome)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Verdict {
    Valid,
    Invalid,
}

impl From<Verdict> for Validity {
    fn from(v: Verdict) -> Self {
        match v {
            Verdict::Valid => Validity::Valid,
            Verdict::Invalid => Validity::Invalid,
        }
    }
}

/// One annotator's verdict on one template; append-only.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct VerdictEntry {
    pub template_id: String,
    pub annotator_id: String,
    pub verdict: Verdict,
}

/// How conflicting verdicts resolve into an effective validity.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Adjudication {
    /// The first recorded verdict wins; later annotators only feed the
    /// agreement analysis.
    #[default]
    FirstAnnotator,
    MostRecent,
}

/// A pool with its annotation history.
#[derive(Debug, Clone, Default)]
pub struct AnnotatedPool {
    pub templates: Vec<InstructionTemplate>,
    pub verdicts: Vec<VerdictEntry>,
    pub adjudication: Adjudication,
}

impl AnnotatedPool {
    pub fn new(templates: Vec<InstructionTemplate>) -> Self {
        Self {
            templates,
            verdicts: Vec::new(),
            adjudication: Adjudication::default(),
        }
    }

    pub fn with_verdicts(templates: Vec<InstructionTemplate>, verdicts: Vec<VerdictEntry>) -> Self {
        let mut pool = Self::new(templates);
        for entry in verdicts {
            // Tolerates verdicts for templates meanwhile dropped.
            let _ = pool.annotate(&entry.template_id, &entry.annotator_id, entry.verdict);
        }
        pool
    }

    /// Appends a verdict and refreshes the template's effective
    /// validity. Original templates stay valid regardless.
    pub fn annotate(
        &mut self,
        template_id: &str,
        annotator_id: &str,
        verdict: Verdict,
    ) -> Result<(), ParaphraseError> {
        let position = self
            .templates
            .iter()
            .position(|t| t.template_id == template_id)
            .ok_or_else(|| ParaphraseError::UnknownTemplate(template_id.to_string()))?;
        self.verdicts.push(VerdictEntry {
            template_id: template_id.to_string(),
            annotator_id: annotator_id.to_string(),
            verdict,
        });
        let template = &mut self.templates[position];
        if !template.annotator_ids.iter().any(|a| a == annotator_id) {
            template.annotator_ids.push(annotator_id.to_string());
        }
        if template.method != Method::Original {
            let effective = match self.adjudication {
                Adjudication::FirstAnnotator => self
                    .verdicts
                    .iter()
                    .find(|v| v.template_id == template_id)
                    .map(|v| v.verdict),
                Adjudication::MostRecent => self
                    .verdicts
                    .iter()
                    .rev()
                    .find(|v| v.template_id == template_id)
                    .map(|v| v.verdict),
            };
            if let Some(verdict) = effective {
                template.validity = verdict.into();
            }
        }
        Ok(())
    }

    fn verdict_of(&self, template_id: &str, annotator_id: &str) -> Option<Verdict> {
        self.verdicts
            .iter()
            .filter(|v| v.template_id == template_id && v.annotator_id == annotator_id)
            .map(|v| v.verdict)
            .next_back()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AgreementReport {
    pub accuracy: f64,
    /// None when expected agreement is 1 (both annotators constant and
    /// equal), where kappa is undefined.
    pub kappa: Option<f64>,
    pub n: usize,
    pub table: [[u64; 2]; 2],
}

/// Raw accuracy and Cohen's kappa between two annotators over the
/// templates both have reviewed.
pub fn agreement_report(
    pool: &AnnotatedPool,
    annotator_a: &str,
    annotator_b: &str,
) -> Result<AgreementReport, ParaphraseError> {
    let mut table = [[0u64; 2]; 2];
    let mut n = 0usize;
    for template in &pool.templates {
        let (Some(va), Some(vb)) = (
            pool.verdict_of(&template.template_id, annotator_a),
            pool.verdict_of(&template.template_id, annotator_b),
        ) else {
            continue;
        };
        let row = usize::from(va == Verdict::Invalid);
        let col = usize::from(vb == Verdict::Invalid);
        table[row][col] += 1;
        n += 1;
    }
    if n == 0 {
        return Err(ParaphraseError::NoOverlap(
            annotator_a.to_string(),
            annotator_b.to_string(),
        ));
    }
    let accuracy = (table[0][0] + table[1][1]) as f64 / n as f64;
    let kappa = match cohens_kappa(&table) {
        Ok(kappa) => Some(kappa),
        Err(StatsError::KappaUndefined) => None,
        Err(_) => None,
    };
    Ok(AgreementReport {
        accuracy,
        kappa,
        n,
        table,
    })
}

/// Splits a body into tokens: placeholders stay whole, words (with
/// internal apostrophes) stay whole, and every other non-whitespace
/// character is its own token.
pub fn tokenize(body: &str) -> Vec<String> {
    let mut tokens = Vec::new();
    let chars: Vec<char> = body.chars().collect();
    let mut i = 0;
    while i < chars.len() {
        let c = chars[i];
        if c.is_whitespace() {
            i += 1;
        } else if c == '{' {
            // placeholder or escaped brace
            if i + 1 < chars.len() && chars[i + 1] == '{' {
                tokens.push("{{".to_string());
                i += 2;
            } else if let Some(end) = chars[i + 1..].iter().position(|&c| c == '}') {
                let token: String = chars[i..=i + 1 + end].iter().collect();
                tokens.push(token);
                i += end + 2;
            } else {
                tokens.push("{".to_string());
                i += 1;
            }
        } else if c.is_alphanumeric() || c == '_' {
            let start = i;
            while i < chars.len() && (chars[i].is_alphanumeric() || chars[i] == '_' || chars[i] == '\'')
            {
                i += 1;
            }
            tokens.push(chars[start..i].iter().collect());
        } else {
            tokens.push(c.to_string());
            i += 1;
        }
    }
    tokens
}

/// Token-level Levenshtein distance.
pub fn token_edit_distance(a: &[String], b: &[String]) -> usize {
    let mut previous: Vec<usize> = (0..=b.len()).collect();
    let mut current = vec![0usize; b.len() + 1];
    for (i, ta) in a.iter().enumerate() {
        current[0] = i + 1;
        for (j, tb) in b.iter().enumerate() {
            let substitution = previous[j] + usize::from(ta != tb);
            current[j + 1] = substitution
                .min(previous[j + 1] + 1)
                .min(current[j] + 1);
        }
        std::mem::swap(&mut previous, &mut current);
    }
    previous[b.len()]
}

/// The edit script between two token sequences, described as
/// "x -> y" (substitution), "+x" (insertion), "-x" (deletion).
fn edit_description(a: &[String], b: &[String]) -> String {
    let rows = a.len() + 1;
    let cols = b.len() + 1;
    let mut dp = vec![0usize; rows * cols];
    for i in 0..rows {
        dp[i * cols] = i;
    }
    for j in 0..cols {
        dp[j] = j;
    }
    for i in 1..rows {
        for j in 1..cols {
            let substitution = dp[(i - 1) * cols + (j - 1)] + usize::from(a[i - 1] != b[j - 1]);
            dp[i * cols + j] = substitution
                .min(dp[(i - 1) * cols + j] + 1)
                .min(dp[i * cols + (j - 1)] + 1);
        }
    }
    // backtrace, preferring diagonal moves for determinism
    let mut ops = Vec::new();
    let (mut i, mut j) = (a.len(), b.len());
    while i > 0 || j > 0 {
        let here = dp[i * cols + j];
        if i > 0 && j > 0 && dp[(i - 1) * cols + (j - 1)] + usize::from(a[i - 1] != b[j - 1]) == here
        {
            if a[i - 1] != b[j - 1] {
                ops.push(format!("{} -> {}", a[i - 1], b[j - 1]));
            }
            i -= 1;
            j -= 1;
        } else if i > 0 && dp[(i - 1) * cols + j] + 1 == here {
            ops.push(format!("-{}", a[i - 1]));
            i -= 1;
        } else {
            ops.push(format!("+{}", b[j - 1]));
            j -= 1;
        }
    }
    ops.reverse();
    ops.join(", ")
}

/// A group of template pairs sharing one minimal edit, with the
/// per-model performance change it brings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EditPairReport {
    pub edit: String,
    pub pairs: Vec<(String, String)>,
    /// Mean over pairs of eps(second) - eps(first), per model.
    pub per_model_delta: BTreeMap<String, f64>,
    pub mean_delta: f64,
}

/// Finds template pairs within `max_edit_tokens` token edits and
/// groups them by edit, sorted by |mean delta| descending. Each pair
/// appears once, lexicographically ordered; identical templates
/// (distance 0) are excluded.
pub fn edit_pair_analysis(
    pool: &[InstructionTemplate],
    matrix: &PerformanceMatrix,
    max_edit_tokens: usize,
) -> Vec<EditPairReport> {
    let mut templates: Vec<&InstructionTemplate> = pool
        .iter()
        .filter(|t| matrix.template_index(&t.template_id).is_some())
        .collect();
    templates.sort_by(|a, b| a.template_id.cmp(&b.template_id));
    let tokens: Vec<Vec<String>> = templates.iter().map(|t| tokenize(&t.body)).collect();

    let mut groups: BTreeMap<String, Vec<(String, String)>> = BTreeMap::new();
    for i in 0..templates.len() {
        for j in (i + 1)..templates.len() {
            let distance = token_edit_distance(&tokens[i], &tokens[j]);
            if distance == 0 || distance > max_edit_tokens {
                continue;
            }
            let edit = edit_description(&tokens[i], &tokens[j]);
            groups.entry(edit).or_default().push((
                templates[i].template_id.clone(),
                templates[j].template_id.clone(),
            ));
        }
    }

    let mut reports: Vec<EditPairReport> = groups
        .into_iter()
        .map(|(edit, pairs)| {
            let mut per_model_delta = BTreeMap::new();
            for model_id in matrix.model_ids() {
                let model_idx = matrix.model_index(model_id).unwrap();
                let mut total = 0.0;
                for (first, second) in &pairs {
                    let fi = matrix.template_index(first).unwrap();
                    let si = matrix.template_index(second).unwrap();
                    total += matrix.get(si, model_idx) - matrix.get(fi, model_idx);
                }
                per_model_delta.insert(model_id.clone(), total / pairs.len() as f64);
            }
            let mean_delta =
                per_model_delta.values().sum::<f64>() / per_model_delta.len().max(1) as f64;
            EditPairReport {
                edit,
                pairs,
                per_model_delta,
                mean_delta,
            }
        })
        .collect();
    reports.sort_by(|a, b| {
        b.mean_delta
            .abs()
            .total_cmp(&a.mean_delta.abs())
            .then_with(|| a.edit.cmp(&b.edit))
    });
    reports
}
