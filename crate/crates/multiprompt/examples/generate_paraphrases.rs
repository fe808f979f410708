//! The paraphrase-generation workflow: seed templates go through a
//! meta-prompt, the generator's completions are split into candidates,
//! and candidates survive only if they keep the task's placeholders
//! and are not duplicates.
//!
//! ```bash
//! cargo run -p multiprompt --example generate_paraphrases
//! ```
//!
//! A replay log stands in for the generator model, keyed by the same
//! deterministic generation keys a live backend would see, so the
//! whole flow runs offline.

use multiprompt::backend::{Backend, BackendSpec};
use multiprompt::ingest;
use multiprompt::paraphrase::{generate, generation_key, GenerationJob, MetaPrompts};
use multiprompt::template::{EvalRecord, InstructionTemplate, Method, TaskSpec, Validity};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let task = TaskSpec {
        task_id: "avoid_letter".into(),
        benchmark: "demo".into(),
        placeholder_names: vec!["letter".into()],
        original_template_ids: vec!["orig".into()],
        scorer_id: "exact_match".into(),
    };
    let seed = InstructionTemplate {
        template_id: "orig".into(),
        task_id: task.task_id.clone(),
        body: "Write a word that doesn't contain the letter {letter}.".into(),
        method: Method::Original,
        validity: Validity::Valid,
        annotator_ids: vec![],
    };

    // What the "generator model" answers: a list of candidates of
    // varying quality. One drops the placeholder, one duplicates the
    // seed, the rest are usable.
    let scripted = "\
1. Give a word without the letter {letter}.
2. Write a word that doesn't contain the letter {letter}.
3. Name any word you like.
4. Produce a word avoiding the letter \"{letter}\".
5. Spell out a word that lacks {letter}.";
    let dir = std::env::temp_dir().join("multiprompt-gen-demo");
    std::fs::create_dir_all(&dir)?;
    let log = dir.join("generator.jsonl");
    ingest::write_records(
        &log,
        &[EvalRecord {
            model_id: "generator".into(),
            task_id: task.task_id.clone(),
            template_id: seed.template_id.clone(),
            instance_id: generation_key(Method::Rephrase, &seed.template_id, 0),
            prompt: String::new(),
            completion: scripted.into(),
            score: 0.0,
            failed: false,
        }],
    )?;
    let backend = Backend::from_spec(&BackendSpec::replay("generator", &log))?;

    let prompts = MetaPrompts::default();
    println!("meta-prompt sent to the generator:\n---");
    println!(
        "{}---\n",
        prompts.rephrase.replace("{seed_template}", &seed.body)
    );

    let job = GenerationJob {
        task,
        seed_templates: vec![seed.clone()],
        method: Method::Rephrase,
        target_count: 50,
        exemplar_text: String::new(),
        meta_prompts: None,
    };
    let outcome = generate(&job, &backend, &[seed])?;

    println!("accepted ({}):", outcome.accepted.len());
    for template in &outcome.accepted {
        println!("  [{}] {}", template.template_id, template.body);
    }
    println!("rejected ({}):", outcome.rejected.len());
    for rejected in &outcome.rejected {
        println!("  {:?} <- {:?}", rejected.reason, rejected.text);
    }
    Ok(())
}
