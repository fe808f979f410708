//! Budget-constrained estimators: a staged greedy search for the
//! best-performing template and a randomized estimator of the average
//! performance, both driven by far fewer backend calls than the full
//! grid.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::backend::{Backend, CompletionRequest};
use crate::runner::{sample_instances, RunnerError, Scorer};
use crate::template::{instantiate, Instance, InstructionTemplate};

#[derive(Debug, Error)]
pub enum BudgetError {
    #[error("empty template pool")]
    EmptyPool,
    #[error("schedule needs {needed} instances but only {available} are available")]
    InsufficientInstances { needed: usize, available: usize },
    #[error("schedule must have at least one stage")]
    EmptySchedule,
    #[error("survivor counts must be strictly decreasing (stage {stage})")]
    NonDecreasingSurvivors { stage: usize },
    #[error("invalid schedule spec {0:?}")]
    BadScheduleSpec(String),
    #[error(transparent)]
    Runner(#[from] RunnerError),
}

/// How many templates enter a stage.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Survivors {
    All,
    Top(usize),
}

/// How many fresh instances a stage consumes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StageBudget {
    Count(usize),
    /// Whatever instances remain after the earlier stages.
    Rest,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Stage {
    pub survivors: Survivors,
    pub instances: StageBudget,
}

/// Elimination schedule for the greedy search. The default mirrors the
/// all:10, 100:10, 10:rest ladder.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SearchSchedule {
    pub stages: Vec<Stage>,
}

impl Default for SearchSchedule {
    fn default() -> Self {
        Self {
            stages: vec![
                Stage {
                    survivors: Survivors::All,
                    instances: StageBudget::Count(10),
                },
                Stage {
                    survivors: Survivors::Top(100),
                    instances: StageBudget::Count(10),
                },
                Stage {
                    survivors: Survivors::Top(10),
                    instances: StageBudget::Rest,
                },
            ],
        }
    }
}

impl SearchSchedule {
    /// Parses the `all:10,100:10,10:rest` form.
    pub fn parse(text: &str) -> Result<Self, BudgetError> {
        let mut stages = Vec::new();
        for part in text.split(',') {
            let (survivors, instances) = part
                .trim()
                .split_once(':')
                .ok_or_else(|| BudgetError::BadScheduleSpec(part.to_string()))?;
            let survivors = match survivors.trim() {
                "all" => Survivors::All,
                count => Survivors::Top(
                    count
                        .parse::<usize>()
                        .ok()
                        .filter(|&c| c > 0)
                        .ok_or_else(|| BudgetError::BadScheduleSpec(part.to_string()))?,
                ),
            };
            let instances = match instances.trim() {
                "rest" => StageBudget::Rest,
                count => StageBudget::Count(
                    count
                        .parse::<usize>()
                        .ok()
                        .filter(|&c| c > 0)
                        .ok_or_else(|| BudgetError::BadScheduleSpec(part.to_string()))?,
                ),
            };
            stages.push(Stage {
                survivors,
                instances,
            });
        }
        let schedule = Self { stages };
        schedule.validate()?;
        Ok(schedule)
    }

    pub fn validate(&self) -> Result<(), BudgetError> {
        if self.stages.is_empty() {
            return Err(BudgetError::EmptySchedule);
        }
        let mut previous: Option<usize> = None;
        for (idx, stage) in self.stages.iter().enumerate() {
            if let Survivors::Top(count) = stage.survivors {
                if let Some(prev) = previous {
                    if count >= prev {
                        return Err(BudgetError::NonDecreasingSurvivors { stage: idx });
                    }
                }
                previous = Some(count);
            } else if idx > 0 {
                return Err(BudgetError::NonDecreasingSurvivors { stage: idx });
            }
        }
        Ok(())
    }

    /// Total fixed instance demand, excluding `Rest` stages.
    fn fixed_instances(&self) -> usize {
        self.stages
            .iter()
            .map(|s| match s.instances {
                StageBudget::Count(n) => n,
                StageBudget::Rest => 0,
            })
            .sum()
    }
}

/// Cumulative score of one template over every instance it has seen.
#[derive(Debug, Clone)]
struct Tally {
    template_idx: usize,
    hits: f64,
    seen: usize,
}

impl Tally {
    fn mean(&self) -> f64 {
        if self.seen == 0 {
            0.0
        } else {
            self.hits / self.seen as f64
        }
    }
}

/// Per-stage audit trail: who survived with what cumulative mean.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct StageAudit {
    pub stage: usize,
    pub entrants: usize,
    pub instances_used: usize,
    pub survivors: Vec<(String, f64)>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SearchOutcome {
    pub best_template_id: String,
    pub estimated_max: f64,
    pub calls_made: usize,
    pub audit: Vec<StageAudit>,
}

/// Staged greedy search for the best template. Each stage evaluates
/// the current survivors on the next disjoint slice of the seeded
/// instance ordering and keeps the top entrants by cumulative mean
/// (ties broken by template id). The estimate is the winner's
/// cumulative mean over everything it has seen.
pub fn greedy_max_search(
    backend: &Backend,
    pool: &[InstructionTemplate],
    instances: &[Instance],
    schedule: &SearchSchedule,
    seed: u64,
    scorer: &dyn Scorer,
) -> Result<SearchOutcome, BudgetError> {
    if pool.is_empty() {
        return Err(BudgetError::EmptyPool);
    }
    schedule.validate()?;
    let needed = schedule.fixed_instances();
    if instances.len() < needed {
        return Err(BudgetError::InsufficientInstances {
            needed,
            available: instances.len(),
        });
    }
    let ordering = sample_instances(instances, instances.len(), seed);

    let mut survivors: Vec<Tally> = (0..pool.len())
        .map(|template_idx| Tally {
            template_idx,
            hits: 0.0,
            seen: 0,
        })
        .collect();
    let mut cursor = 0usize;
    let mut calls_made = 0usize;
    let mut audit = Vec::with_capacity(schedule.stages.len());

    for (stage_idx, stage) in schedule.stages.iter().enumerate() {
        // Pools smaller than the stage's survivor count skip the cut.
        if let Survivors::Top(count) = stage.survivors {
            if survivors.len() > count {
                survivors.truncate(count);
            }
        }
        let slice_len = match stage.instances {
            StageBudget::Count(n) => n.min(ordering.len() - cursor),
            StageBudget::Rest => ordering.len() - cursor,
        };
        let slice = &ordering[cursor..cursor + slice_len];
        cursor += slice_len;

        for tally in &mut survivors {
            let template = &pool[tally.template_idx];
            for instance in slice {
                let prompt = instantiate(template, instance).map_err(RunnerError::from)?;
                let req =
                    CompletionRequest::for_instance(&prompt, &template.template_id, instance);
                let completion =
                    backend
                        .complete(&req)
                        .map_err(|source| RunnerError::Backend {
                            template_id: template.template_id.clone(),
                            instance_id: instance.instance_id.clone(),
                            source,
                        })?;
                calls_made += 1;
                tally.hits += scorer.score(&completion, &instance.gold);
                tally.seen += 1;
            }
        }
        survivors.sort_by(|a, b| {
            b.mean()
                .total_cmp(&a.mean())
                .then_with(|| pool[a.template_idx].template_id.cmp(&pool[b.template_idx].template_id))
        });
        audit.push(StageAudit {
            stage: stage_idx,
            entrants: survivors.len(),
            instances_used: slice_len,
            survivors: survivors
                .iter()
                .map(|t| (pool[t.template_idx].template_id.clone(), t.mean()))
                .collect(),
        });
    }

    let best = &survivors[0];
    Ok(SearchOutcome {
        best_template_id: pool[best.template_idx].template_id.clone(),
        estimated_max: best.mean(),
        calls_made,
        audit,
    })
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AverageEstimate {
    pub estimate: f64,
    pub per_rep: Vec<f64>,
}

/// Estimates the average template performance by drawing, per
/// instance, a template uniformly at random, scoring the whole
/// instance set, and averaging over repetitions. Repetition r uses
/// stream seed ^ r.
pub fn randomized_avg_estimate(
    backend: &Backend,
    pool: &[InstructionTemplate],
    instances: &[Instance],
    repetitions: usize,
    seed: u64,
    scorer: &dyn Scorer,
) -> Result<AverageEstimate, BudgetError> {
    if pool.is_empty() {
        return Err(BudgetError::EmptyPool);
    }
    if instances.is_empty() {
        return Err(BudgetError::InsufficientInstances {
            needed: 1,
            available: 0,
        });
    }
    let mut per_rep = Vec::with_capacity(repetitions);
    for rep in 0..repetitions {
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ rep as u64);
        let mut total = 0.0;
        for instance in instances {
            let template = &pool[rng.gen_range(0..pool.len())];
            let prompt = instantiate(template, instance).map_err(RunnerError::from)?;
            let req = CompletionRequest::for_instance(&prompt, &template.template_id, instance);
            let completion = backend
                .complete(&req)
                .map_err(|source| RunnerError::Backend {
                    template_id: template.template_id.clone(),
                    instance_id: instance.instance_id.clone(),
                    source,
                })?;
            total += scorer.score(&completion, &instance.gold);
        }
        per_rep.push(total / instances.len() as f64);
    }
    let estimate = per_rep.iter().sum::<f64>() / repetitions as f64;
    Ok(AverageEstimate { estimate, per_rep })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::backend::{BackendSpec, SyntheticProfile};
    use crate::ingest;
    use crate::runner::{ExactMatchScorer, ScoreOptions};
    use crate::template::{EvalRecord, Method, Validity};
    use std::collections::BTreeMap;

    fn scorer() -> ExactMatchScorer {
        ExactMatchScorer {
            options: ScoreOptions::default(),
        }
    }

    fn template(id: &str) -> InstructionTemplate {
        InstructionTemplate {
            template_id: id.into(),
            task_id: "t".into(),
            body: format!("{id} {{x}}"),
            method: Method::Rephrase,
            validity: Validity::Valid,
            annotator_ids: vec![],
        }
    }

    fn instances(n: usize) -> Vec<Instance> {
        (0..n)
            .map(|i| Instance {
                instance_id: format!("i{i:03}"),
                task_id: "t".into(),
                field_values: BTreeMap::from([("x".to_string(), format!("v{i}"))]),
                gold: vec![format!("g{i}")],
            })
            .collect()
    }

    fn synthetic_pool(bias: &[(&str, f64)], base: f64, seed: u64) -> (Backend, Vec<InstructionTemplate>) {
        let profile = SyntheticProfile {
            base_ability: base,
            template_bias: bias
                .iter()
                .map(|(id, b)| (id.to_string(), *b))
                .collect(),
            seed,
        };
        let backend = Backend::from_spec(&BackendSpec::synthetic("m", profile)).unwrap();
        let pool = bias.iter().map(|(id, _)| template(id)).collect();
        (backend, pool)
    }

    #[test]
    fn schedule_parsing_round_trip() {
        let schedule = SearchSchedule::parse("all:10,100:10,10:rest").unwrap();
        assert_eq!(schedule, SearchSchedule::default());
        assert!(SearchSchedule::parse("all:10,200:10,300:rest").is_err());
        assert!(SearchSchedule::parse("junk").is_err());
    }

    #[test]
    fn dominant_template_wins() {
        let (backend, pool) = synthetic_pool(
            &[("worst", -1.0), ("best", 0.0), ("mid", -0.5)],
            1.0,
            3,
        );
        let outcome = greedy_max_search(
            &backend,
            &pool,
            &instances(30),
            &SearchSchedule::parse("all:10,2:10,1:rest").unwrap(),
            9,
            &scorer(),
        )
        .unwrap();
        assert_eq!(outcome.best_template_id, "best");
        assert_eq!(outcome.estimated_max, 1.0);
        assert_eq!(outcome.audit.len(), 3);
    }

    #[test]
    fn single_template_pool_returns_immediately() {
        let (backend, pool) = synthetic_pool(&[("only", 0.0)], 1.0, 3);
        let outcome = greedy_max_search(
            &backend,
            &pool,
            &instances(20),
            &SearchSchedule::default(),
            1,
            &scorer(),
        )
        .unwrap();
        assert_eq!(outcome.best_template_id, "only");
        // full seen set: every scheduled instance
        assert_eq!(outcome.calls_made, 20);
        assert_eq!(outcome.estimated_max, 1.0);
    }

    #[test]
    fn insufficient_instances_rejected() {
        let (backend, pool) = synthetic_pool(&[("a", 0.0)], 1.0, 3);
        let err = greedy_max_search(
            &backend,
            &pool,
            &instances(5),
            &SearchSchedule::default(),
            1,
            &scorer(),
        )
        .unwrap_err();
        assert!(matches!(err, BudgetError::InsufficientInstances { .. }));
    }

    fn replay_fixture(
        dir: &std::path::Path,
        correct: &[(&str, usize)],
        instances: &[Instance],
    ) -> Backend {
        // template t is correct on the first `count` instances
        let mut records = Vec::new();
        for (template_id, count) in correct {
            for (idx, instance) in instances.iter().enumerate() {
                let good = idx < *count;
                records.push(EvalRecord {
                    model_id: "m".into(),
                    task_id: "t".into(),
                    template_id: template_id.to_string(),
                    instance_id: instance.instance_id.clone(),
                    prompt: String::new(),
                    completion: if good {
                        instance.gold[0].clone()
                    } else {
                        "nope".into()
                    },
                    score: if good { 1.0 } else { 0.0 },
                    failed: false,
                });
            }
        }
        let path = dir.join("log.jsonl");
        ingest::write_records(&path, &records).unwrap();
        Backend::from_spec(&BackendSpec::replay("m", &path)).unwrap()
    }

    #[test]
    fn single_template_average_is_its_accuracy() {
        let dir = tempfile::tempdir().unwrap();
        let inst = instances(20);
        let backend = replay_fixture(dir.path(), &[("a", 15)], &inst);
        let pool = vec![template("a")];
        let out =
            randomized_avg_estimate(&backend, &pool, &inst, 5, 11, &scorer()).unwrap();
        assert_eq!(out.estimate, 0.75);
        assert!(out.per_rep.iter().all(|&r| r == 0.75));
    }

    #[test]
    fn two_template_expectation() {
        // correctness sets of sizes a and b: E[estimate] = (a+b)/(2N)
        let dir = tempfile::tempdir().unwrap();
        let inst = instances(40);
        let backend = replay_fixture(dir.path(), &[("a", 10), ("b", 30)], &inst);
        let pool = vec![template("a"), template("b")];
        let out =
            randomized_avg_estimate(&backend, &pool, &inst, 1000, 23, &scorer()).unwrap();
        let expected = (10.0 + 30.0) / (2.0 * 40.0);
        assert!(
            (out.estimate - expected).abs() < 0.005,
            "estimate {} vs expectation {expected}",
            out.estimate
        );
    }

    #[test]
    fn all_correct_pool_estimates_one() {
        let (backend, pool) = synthetic_pool(&[("a", 0.0), ("b", 0.0)], 1.0, 3);
        let out =
            randomized_avg_estimate(&backend, &pool, &instances(10), 3, 7, &scorer()).unwrap();
        assert_eq!(out.estimate, 1.0);
    }

    #[test]
    fn estimators_are_deterministic_in_seed() {
        let (backend, pool) = synthetic_pool(&[("a", -0.3), ("b", -0.6)], 0.9, 5);
        let inst = instances(30);
        let first =
            randomized_avg_estimate(&backend, &pool, &inst, 10, 42, &scorer()).unwrap();
        let second =
            randomized_avg_estimate(&backend, &pool, &inst, 10, 42, &scorer()).unwrap();
        assert_eq!(first.per_rep, second.per_rep);

        let schedule = SearchSchedule::parse("all:10,1:rest").unwrap();
        let a = greedy_max_search(&backend, &pool, &inst, &schedule, 42, &scorer()).unwrap();
        let b = greedy_max_search(&backend, &pool, &inst, &schedule, 42, &scorer()).unwrap();
        assert_eq!(a.best_template_id, b.best_template_id);
        assert_eq!(a.estimated_max, b.estimated_max);
    }
}
