//! Find the best of 200 templates while paying for a small fraction of
//! the full grid: evaluate everyone on 10 instances, the top 100 on 10
//! more, and the top 10 on the rest.
//!
//! ```bash
//! cargo run -p multiprompt --example budget_search
//! ```

use std::collections::BTreeMap;

use multiprompt::backend::{Backend, BackendSpec, SyntheticProfile};
use multiprompt::budget::{greedy_max_search, SearchSchedule};
use multiprompt::runner::{ExactMatchScorer, ScoreOptions};
use multiprompt::template::{Instance, InstructionTemplate, Method, Validity};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    // 200 templates with success probabilities spread over [0, 0.8],
    // plus one clear winner at 0.95.
    let mut bias = BTreeMap::new();
    bias.insert("t000".to_string(), 0.95);
    for i in 1..200usize {
        bias.insert(format!("t{i:03}"), 0.80 - 0.05 * ((i - 1) % 17) as f64);
    }
    let truth = bias.clone();
    let backend = Backend::from_spec(&BackendSpec::synthetic(
        "demo-model",
        SyntheticProfile {
            base_ability: 0.0,
            template_bias: bias,
            seed: 2024,
        },
    ))?;

    let pool: Vec<InstructionTemplate> = (0..200)
        .map(|i| InstructionTemplate {
            template_id: format!("t{i:03}"),
            task_id: "demo".into(),
            body: format!("phrasing {i} of the instruction about {{x}}"),
            method: Method::Rephrase,
            validity: Validity::Valid,
            annotator_ids: vec![],
        })
        .collect();
    let instances: Vec<Instance> = (0..100)
        .map(|i| Instance {
            instance_id: format!("i{i:03}"),
            task_id: "demo".into(),
            field_values: BTreeMap::from([("x".to_string(), format!("v{i}"))]),
            gold: vec![format!("answer{i}")],
        })
        .collect();

    let schedule = SearchSchedule::parse("all:10,100:10,10:rest")?;
    let scorer = ExactMatchScorer {
        options: ScoreOptions::default(),
    };
    let outcome = greedy_max_search(&backend, &pool, &instances, &schedule, 5, &scorer)?;

    let full_grid = pool.len() * instances.len();
    println!(
        "found {} with estimated max {:.3} (true probability {:.2})",
        outcome.best_template_id, outcome.estimated_max, truth[&outcome.best_template_id]
    );
    println!(
        "calls: {} instead of {} for the full grid ({:.0}% saved)\n",
        outcome.calls_made,
        full_grid,
        100.0 * (1.0 - outcome.calls_made as f64 / full_grid as f64)
    );
    for stage in &outcome.audit {
        let survivors: Vec<String> = stage
            .survivors
            .iter()
            .take(5)
            .map(|(id, mean)| format!("{id}({mean:.2})"))
            .collect();
        println!(
            "stage {}: {} entrants on {} fresh instances -> {}",
            stage.stage,
            stage.entrants,
            stage.instances_used,
            survivors.join(" ")
        );
    }
    Ok(())
}
