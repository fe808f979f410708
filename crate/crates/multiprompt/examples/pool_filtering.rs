//! Does manual filtering of generated paraphrases change model
//! rankings? Run the same models over the unfiltered and the filtered
//! pool and compare the rankings each metric induces.
//!
//! ```bash
//! cargo run -p multiprompt --example pool_filtering
//! ```

use std::collections::BTreeMap;

use multiprompt::backend::{BackendSpec, SyntheticProfile};
use multiprompt::runner::{run, RunConfig, ScoreOptions, TemplateSelection};
use multiprompt::stats::{count_negative_tau_tasks, ranking_agreement_across_pools, RankingMetric};
use multiprompt::template::{Instance, InstructionTemplate, Method, TaskSpec, Validity};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let task = TaskSpec {
        task_id: "demo".into(),
        benchmark: "demo".into(),
        placeholder_names: vec!["x".into()],
        original_template_ids: vec!["orig".into()],
        scorer_id: "exact_match".into(),
    };
    // 12 generated templates; the last four are incoherent and will be
    // marked invalid by the annotator.
    let mut pool: Vec<InstructionTemplate> = (0..12)
        .map(|i| InstructionTemplate {
            template_id: format!("p{i:02}"),
            task_id: task.task_id.clone(),
            body: format!("phrasing {i} of {{x}}"),
            method: Method::Rephrase,
            validity: if i < 8 { Validity::Valid } else { Validity::Unreviewed },
            annotator_ids: vec![],
        })
        .collect();
    pool.insert(
        0,
        InstructionTemplate {
            template_id: "orig".into(),
            task_id: task.task_id.clone(),
            body: "the original phrasing of {x}".into(),
            method: Method::Original,
            validity: Validity::Valid,
            annotator_ids: vec![],
        },
    );

    let instances: Vec<Instance> = (0..60)
        .map(|i| Instance {
            instance_id: format!("i{i:03}"),
            task_id: task.task_id.clone(),
            field_values: BTreeMap::from([("x".to_string(), format!("v{i}"))]),
            gold: vec![format!("g{i}")],
        })
        .collect();

    // Three models whose quality degrades differently on the dubious
    // templates (p08..p11).
    let model = |id: &str, base: f64, bad_bias: f64| {
        let mut bias = BTreeMap::new();
        for i in 8..12 {
            bias.insert(format!("p{i:02}"), bad_bias);
        }
        BackendSpec::synthetic(
            id,
            SyntheticProfile {
                base_ability: base,
                template_bias: bias,
                seed: 77,
            },
        )
    };
    let backends = vec![
        model("robust", 0.55, 0.0),
        model("fragile", 0.65, -0.6),
        model("middling", 0.60, -0.3),
    ];

    let config = |run_id: &str, allow_unreviewed: bool| RunConfig {
        run_id: run_id.into(),
        task_id: task.task_id.clone(),
        backends: backends.clone(),
        template_selection: TemplateSelection::AllValid,
        instance_sample_size: 60,
        sampling_seed: 3,
        scorer_id: "exact_match".into(),
        allow_unreviewed,
        failure_policy: Default::default(),
        score_options: ScoreOptions::default(),
    };

    let base = std::env::temp_dir().join("multiprompt-filtering-demo");
    let unfiltered = run(
        &config("unfiltered", true),
        &task,
        &pool,
        &instances,
        &base.join("unfiltered"),
    )?;
    let filtered = run(
        &config("filtered", false),
        &task,
        &pool,
        &instances,
        &base.join("filtered"),
    )?;
    println!(
        "unfiltered pool: {} templates; filtered pool: {} templates",
        unfiltered.matrix.n_templates(),
        filtered.matrix.n_templates()
    );

    for metric in [RankingMetric::Max, RankingMetric::Avg, RankingMetric::Cps] {
        let tau =
            ranking_agreement_across_pools(&unfiltered.matrix, &filtered.matrix, metric)?;
        println!("ranking agreement before/after filtering ({metric:?}): tau_b {:+.3}", tau.tau_b);
    }

    let negatives = count_negative_tau_tasks(&[unfiltered.matrix]);
    println!("tasks with a negative min-tau template pair: {negatives} of 1");
    Ok(())
}
