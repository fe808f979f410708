//! Domain types for tasks, instruction templates, and instances, plus
//! template instantiation and pool validation.
//!
//! An instruction template is a task-description string with named
//! placeholders (`{name}`) into which an instance's field values are
//! substituted. Doubled braces (`{{`, `}}`) emit literal braces.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// How a template entered the pool.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    Original,
    Rephrase,
    Cot,
    Gradual,
    Manual,
}

impl Method {
    pub fn as_str(&self) -> &'static str {
        match self {
            Method::Original => "original",
            Method::Rephrase => "rephrase",
            Method::Cot => "cot",
            Method::Gradual => "gradual",
            Method::Manual => "manual",
        }
    }
}

/// Annotation state of a template.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Validity {
    #[default]
    Unreviewed,
    Valid,
    Invalid,
}

/// A benchmark task: identity, placeholder schema, and scorer binding.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TaskSpec {
    pub task_id: String,
    pub benchmark: String,
    #[serde(rename = "placeholders")]
    pub placeholder_names: Vec<String>,
    #[serde(default)]
    pub original_template_ids: Vec<String>,
    #[serde(rename = "scorer", default = "default_scorer")]
    pub scorer_id: String,
}

fn default_scorer() -> String {
    "exact_match".to_string()
}

impl TaskSpec {
    pub fn placeholder_set(&self) -> BTreeSet<&str> {
        self.placeholder_names.iter().map(String::as_str).collect()
    }
}

/// One instruction template with provenance.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct InstructionTemplate {
    pub template_id: String,
    pub task_id: String,
    pub body: String,
    pub method: Method,
    #[serde(default)]
    pub validity: Validity,
    #[serde(default)]
    pub annotator_ids: Vec<String>,
}

impl InstructionTemplate {
    pub fn is_original(&self) -> bool {
        self.method == Method::Original
    }
}

/// One task sample: field values for the placeholders plus the set of
/// acceptable answers.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Instance {
    pub instance_id: String,
    pub task_id: String,
    #[serde(rename = "fields")]
    pub field_values: BTreeMap<String, String>,
    pub gold: Vec<String>,
}

/// One model x template x instance prediction with its score.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalRecord {
    pub model_id: String,
    pub task_id: String,
    pub template_id: String,
    pub instance_id: String,
    pub prompt: String,
    pub completion: String,
    pub score: f64,
    /// Set when the backend call failed and the failure policy scored it 0.
    #[serde(default, skip_serializing_if = "is_false")]
    pub failed: bool,
}

fn is_false(b: &bool) -> bool {
    !b
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum TemplateError {
    #[error("template {template_id} and instance {instance_id} belong to different tasks")]
    TaskMismatch {
        template_id: String,
        instance_id: String,
    },
    #[error("placeholder {{{name}}} has no value")]
    MissingField { name: String },
    #[error("body references placeholder {{{name}}} outside the task's set")]
    UnknownPlaceholder { name: String },
    #[error("malformed placeholder syntax at byte {position}: {detail}")]
    MalformedBody { position: usize, detail: String },
}

/// A piece of a parsed template body.
#[derive(Debug, Clone, PartialEq, Eq)]
enum Segment {
    Literal(String),
    Placeholder(String),
}

fn is_name_start(c: char) -> bool {
    c == '_' || c.is_ascii_alphabetic()
}

fn is_name_char(c: char) -> bool {
    c == '_' || c.is_ascii_alphanumeric()
}

/// Splits a body into literal and placeholder segments. `{{` / `}}`
/// become literal braces; `{name}` with `[A-Za-z_][A-Za-z0-9_]*` names
/// become placeholders; anything else brace-shaped is an error.
fn parse_body(body: &str) -> Result<Vec<Segment>, TemplateError> {
    let mut segments = Vec::new();
    let mut literal = String::new();
    let mut chars = body.char_indices().peekable();
    while let Some((pos, c)) = chars.next() {
        match c {
            '{' => {
                if let Some(&(_, '{')) = chars.peek() {
                    chars.next();
                    literal.push('{');
                    continue;
                }
                let mut name = String::new();
                match chars.next() {
                    Some((_, c2)) if is_name_start(c2) => name.push(c2),
                    Some((p2, c2)) => {
                        return Err(TemplateError::MalformedBody {
                            position: p2,
                            detail: format!("invalid placeholder name start {c2:?}"),
                        })
                    }
                    None => {
                        return Err(TemplateError::MalformedBody {
                            position: pos,
                            detail: "unterminated '{'".to_string(),
                        })
                    }
                }
                loop {
                    match chars.next() {
                        Some((_, '}')) => break,
                        Some((_, c2)) if is_name_char(c2) => name.push(c2),
                        Some((p2, c2)) => {
                            return Err(TemplateError::MalformedBody {
                                position: p2,
                                detail: format!("invalid placeholder character {c2:?}"),
                            })
                        }
                        None => {
                            return Err(TemplateError::MalformedBody {
                                position: pos,
                                detail: "unterminated placeholder".to_string(),
                            })
                        }
                    }
                }
                if !literal.is_empty() {
                    segments.push(Segment::Literal(std::mem::take(&mut literal)));
                }
                segments.push(Segment::Placeholder(name));
            }
            '}' => {
                if let Some(&(_, '}')) = chars.peek() {
                    chars.next();
                    literal.push('}');
                } else {
                    return Err(TemplateError::MalformedBody {
                        position: pos,
                        detail: "unmatched '}'".to_string(),
                    });
                }
            }
            other => literal.push(other),
        }
    }
    if !literal.is_empty() {
        segments.push(Segment::Literal(literal));
    }
    Ok(segments)
}

/// Returns the set of placeholder names referenced by a body.
pub fn placeholders_in(body: &str) -> Result<BTreeSet<String>, TemplateError> {
    let mut names = BTreeSet::new();
    for segment in parse_body(body)? {
        if let Segment::Placeholder(name) = segment {
            names.insert(name);
        }
    }
    Ok(names)
}

/// Substitutes an instance's field values into a template body.
///
/// Every `{name}` placeholder is replaced by the corresponding field
/// value; `{{`/`}}` emit literal braces; no placeholder markers remain
/// in the output.
pub fn instantiate(
    template: &InstructionTemplate,
    instance: &Instance,
) -> Result<String, TemplateError> {
    if template.task_id != instance.task_id {
        return Err(TemplateError::TaskMismatch {
            template_id: template.template_id.clone(),
            instance_id: instance.instance_id.clone(),
        });
    }
    let mut out = String::with_capacity(template.body.len());
    for segment in parse_body(&template.body)? {
        match segment {
            Segment::Literal(text) => out.push_str(&text),
            Segment::Placeholder(name) => match instance.field_values.get(&name) {
                Some(value) => out.push_str(value),
                None => return Err(TemplateError::MissingField { name }),
            },
        }
    }
    Ok(out)
}

/// Checks a template's placeholder set against the task schema.
pub fn check_template(
    template: &InstructionTemplate,
    task: &TaskSpec,
) -> Result<(), TemplateError> {
    let found = placeholders_in(&template.body)?;
    let expected: BTreeSet<String> = task.placeholder_names.iter().cloned().collect();
    if let Some(name) = found.difference(&expected).next() {
        return Err(TemplateError::UnknownPlaceholder { name: name.clone() });
    }
    if let Some(name) = expected.difference(&found).next() {
        return Err(TemplateError::MissingField { name: name.clone() });
    }
    Ok(())
}

/// What `validate_pool` found wrong with one template.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub enum ViolationKind {
    PlaceholderMismatch,
    DuplicateTemplateId,
    DuplicateBody,
    TaskMismatch,
}

/// One pool violation, tied to the offending template.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct PoolViolation {
    pub template_id: String,
    pub kind: ViolationKind,
    pub detail: String,
}

impl std::fmt::Display for PoolViolation {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}: {:?}: {}", self.template_id, self.kind, self.detail)
    }
}

/// Trims, collapses internal whitespace runs, and lowercases — the
/// normalization used for duplicate-body detection.
pub fn normalize_body(body: &str) -> String {
    body.split_whitespace()
        .collect::<Vec<_>>()
        .join(" ")
        .to_lowercase()
}

/// Reports placeholder mismatches, duplicate template ids, and
/// duplicate bodies (after whitespace normalization and case folding).
/// Reports; does not throw.
pub fn validate_pool(pool: &[InstructionTemplate], task: &TaskSpec) -> Vec<PoolViolation> {
    let mut violations = Vec::new();
    let mut seen_ids: BTreeSet<&str> = BTreeSet::new();
    let mut seen_bodies: BTreeMap<String, &str> = BTreeMap::new();
    for template in pool {
        if template.task_id != task.task_id {
            violations.push(PoolViolation {
                template_id: template.template_id.clone(),
                kind: ViolationKind::TaskMismatch,
                detail: format!(
                    "template belongs to task {} not {}",
                    template.task_id, task.task_id
                ),
            });
        }
        if !seen_ids.insert(&template.template_id) {
            violations.push(PoolViolation {
                template_id: template.template_id.clone(),
                kind: ViolationKind::DuplicateTemplateId,
                detail: "template_id already present in pool".to_string(),
            });
        }
        match check_template(template, task) {
            Ok(()) => {}
            Err(err) => violations.push(PoolViolation {
                template_id: template.template_id.clone(),
                kind: ViolationKind::PlaceholderMismatch,
                detail: err.to_string(),
            }),
        }
        let normalized = normalize_body(&template.body);
        match seen_bodies.get(normalized.as_str()) {
            Some(first) => violations.push(PoolViolation {
                template_id: template.template_id.clone(),
                kind: ViolationKind::DuplicateBody,
                detail: format!("body duplicates template {first}"),
            }),
            None => {
                seen_bodies.insert(normalized, &template.template_id);
            }
        }
    }
    violations
}

#[cfg(test)]
mod tests {
    use super::*;

    fn task() -> TaskSpec {
        TaskSpec {
            task_id: "not_containing".into(),
            benchmark: "lmentry".into(),
            placeholder_names: vec!["letter".into()],
            original_template_ids: vec!["orig".into()],
            scorer_id: "exact_match".into(),
        }
    }

    fn template(id: &str, body: &str) -> InstructionTemplate {
        InstructionTemplate {
            template_id: id.into(),
            task_id: "not_containing".into(),
            body: body.into(),
            method: Method::Rephrase,
            validity: Validity::Valid,
            annotator_ids: vec![],
        }
    }

    fn instance(fields: &[(&str, &str)]) -> Instance {
        Instance {
            instance_id: "i0".into(),
            task_id: "not_containing".into(),
            field_values: fields
                .iter()
                .map(|(k, v)| (k.to_string(), v.to_string()))
                .collect(),
            gold: vec!["dog".into()],
        }
    }

    #[test]
    fn instantiate_substitutes_fields() {
        let t = template("t1", "write a word that doesn't contain the letter {letter}");
        let i = instance(&[("letter", "l")]);
        assert_eq!(
            instantiate(&t, &i).unwrap(),
            "write a word that doesn't contain the letter l"
        );
    }

    #[test]
    fn instantiate_without_placeholders_is_identity() {
        let t = template("t1", "say anything");
        let i = instance(&[]);
        assert_eq!(instantiate(&t, &i).unwrap(), "say anything");
    }

    #[test]
    fn doubled_braces_emit_literals() {
        let t = template("t1", "{{x}} {a}");
        let i = instance(&[("a", "y")]);
        assert_eq!(instantiate(&t, &i).unwrap(), "{x} y");
    }

    #[test]
    fn missing_field_is_reported() {
        let t = template("t1", "the letter {letter}");
        let i = instance(&[]);
        assert_eq!(
            instantiate(&t, &i),
            Err(TemplateError::MissingField {
                name: "letter".into()
            })
        );
    }

    #[test]
    fn task_mismatch_is_reported() {
        let t = template("t1", "plain");
        let mut i = instance(&[]);
        i.task_id = "other_task".into();
        assert!(matches!(
            instantiate(&t, &i),
            Err(TemplateError::TaskMismatch { .. })
        ));
    }

    #[test]
    fn malformed_placeholder_rejected() {
        assert!(matches!(
            placeholders_in("an {9bad} name"),
            Err(TemplateError::MalformedBody { .. })
        ));
        assert!(matches!(
            placeholders_in("unterminated {letter"),
            Err(TemplateError::MalformedBody { .. })
        ));
        assert!(matches!(
            placeholders_in("stray } brace"),
            Err(TemplateError::MalformedBody { .. })
        ));
    }

    #[test]
    fn instantiate_is_deterministic_and_embeds_values() {
        let t = template("t1", "avoid {letter} and also {letter}!");
        let i = instance(&[("letter", "q")]);
        let a = instantiate(&t, &i).unwrap();
        let b = instantiate(&t, &i).unwrap();
        assert_eq!(a, b);
        assert!(a.contains('q'));
        assert!(!a.contains('{'));
    }

    #[test]
    fn clean_pool_has_no_violations() {
        let pool = vec![
            template("a", "write a word without {letter}"),
            template("b", "give a word lacking {letter}"),
            template("c", "name a word that omits {letter}"),
        ];
        assert!(validate_pool(&pool, &task()).is_empty());
    }

    #[test]
    fn duplicate_normalized_bodies_flagged_once() {
        let pool = vec![
            template("a", "Write a word without {letter}"),
            template("b", "  write a   word without {letter} "),
        ];
        let violations = validate_pool(&pool, &task());
        assert_eq!(violations.len(), 1);
        assert_eq!(violations[0].kind, ViolationKind::DuplicateBody);
        assert_eq!(violations[0].template_id, "b");
    }

    #[test]
    fn missing_placeholder_flagged() {
        let pool = vec![template("a", "write any word at all")];
        let violations = validate_pool(&pool, &task());
        assert_eq!(violations.len(), 1);
        assert_eq!(violations[0].kind, ViolationKind::PlaceholderMismatch);
    }

    #[test]
    fn duplicate_ids_flagged() {
        let pool = vec![
            template("a", "first body with {letter}"),
            template("a", "second body with {letter}"),
        ];
        let violations = validate_pool(&pool, &task());
        assert_eq!(violations.len(), 1);
        assert_eq!(violations[0].kind, ViolationKind::DuplicateTemplateId);
    }

    #[test]
    fn validate_pool_empty_after_filtering() {
        let pool = vec![
            template("a", "word without {letter}"),
            template("b", "word without {letter}"),
            template("c", "word lacking {letter} maybe"),
        ];
        let violations = validate_pool(&pool, &task());
        let bad: BTreeSet<&str> = violations.iter().map(|v| v.template_id.as_str()).collect();
        let filtered: Vec<_> = pool
            .iter()
            .filter(|t| !bad.contains(t.template_id.as_str()))
            .cloned()
            .collect();
        assert!(validate_pool(&filtered, &task()).is_empty());
    }
}
