//! Approximate the average template performance by drawing a random
//! template per instance instead of evaluating the whole pool.
//!
//! ```bash
//! cargo run -p multiprompt --example average_estimate
//! ```

use std::collections::BTreeMap;

use multiprompt::backend::{Backend, BackendSpec, SyntheticProfile};
use multiprompt::budget::randomized_avg_estimate;
use multiprompt::runner::{evaluate_template, ExactMatchScorer, FailurePolicy, ScoreOptions};
use multiprompt::template::{Instance, InstructionTemplate, Method, Validity};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    // 40 templates with success probabilities spread evenly over (0, 1).
    let n_templates = 40;
    let mut bias = BTreeMap::new();
    for i in 0..n_templates {
        bias.insert(
            format!("t{i:02}"),
            (2.0 * i as f64 + 1.0) / (2.0 * n_templates as f64),
        );
    }
    let backend = Backend::from_spec(&BackendSpec::synthetic(
        "demo-model",
        SyntheticProfile {
            base_ability: 0.0,
            template_bias: bias,
            seed: 9,
        },
    ))?;

    let pool: Vec<InstructionTemplate> = (0..n_templates)
        .map(|i| InstructionTemplate {
            template_id: format!("t{i:02}"),
            task_id: "demo".into(),
            body: format!("variant {i}: {{x}}"),
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
            gold: vec![format!("g{i}")],
        })
        .collect();

    let scorer = ExactMatchScorer {
        options: ScoreOptions::default(),
    };

    // Ground truth: the full grid, all templates on all instances.
    let mut total = 0.0;
    for template in &pool {
        let (_, eps) = evaluate_template(
            &backend,
            template,
            &instances,
            &scorer,
            FailurePolicy::AbortTemplate,
            1,
        )?;
        total += eps;
    }
    let grid_avg = total / pool.len() as f64;
    let grid_calls = pool.len() * instances.len();
    println!("exact pool average from the full grid: {grid_avg:.4} ({grid_calls} calls)\n");

    for reps in [1, 5, 20, 200] {
        let estimate =
            randomized_avg_estimate(&backend, &pool, &instances, reps, 31, &scorer)?;
        let calls = reps * instances.len();
        println!(
            "{reps:>4} repetition(s): estimate {:.4} (error {:+.4}, {calls} calls)",
            estimate.estimate,
            estimate.estimate - grid_avg,
        );
    }
    Ok(())
}
