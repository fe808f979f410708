//! Rebuild a full task report from a persisted record log: replay
//! backends answer from the log, the run directory is assembled, and
//! the report shows a model that ranks first under the original
//! template but last under the pool average.
//!
//! ```bash
//! cargo run -p multiprompt --example replay_report
//! ```

use std::path::Path;

use multiprompt::backend::BackendSpec;
use multiprompt::ingest;
use multiprompt::report::{build_report, export, render_summary, ExportFormat, ReportOptions};
use multiprompt::runner::{run, RunConfig, ScoreOptions, TemplateSelection};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let fixtures = Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures/replay");
    let task = ingest::load_task(&fixtures.join("task.json"))?;
    let pool = ingest::load_pool(&fixtures.join("pool.jsonl"))?;
    let instances = ingest::load_instances(&fixtures.join("instances.jsonl"), &task)?;
    let records = fixtures.join("records.jsonl");

    let config = RunConfig {
        run_id: "replay-demo".into(),
        task_id: task.task_id.clone(),
        backends: ["alpha", "beta", "gamma"]
            .iter()
            .map(|m| BackendSpec::replay(*m, &records))
            .collect(),
        template_selection: TemplateSelection::AllValid,
        instance_sample_size: 10,
        sampling_seed: 17,
        scorer_id: "exact_match".into(),
        allow_unreviewed: false,
        failure_policy: Default::default(),
        score_options: ScoreOptions::default(),
    };

    let run_dir = std::env::temp_dir().join("multiprompt-replay-demo");
    run(&config, &task, &pool, &instances, &run_dir)?;
    let report = build_report(&run_dir, &ReportOptions::default())?;

    print!("{}", render_summary(&report));
    println!("\nrankings:");
    if let Some(original) = &report.rankings.original {
        println!("  by original template: {}", original.join(" > "));
    }
    println!("  by max_p:             {}", report.rankings.max_p.join(" > "));
    println!("  by avg_p:             {}", report.rankings.avg_p.join(" > "));
    println!("  by cps:               {}", report.rankings.cps.join(" > "));

    let out = run_dir.join("export");
    let mut written = export(&report, ExportFormat::Csv, &out)?;
    written.extend(export(&report, ExportFormat::Json, &out)?);
    println!("\nexported:");
    for path in written {
        println!("  {}", path.display());
    }
    Ok(())
}
