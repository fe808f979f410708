//! Mine template pairs one token apart and show how much that single
//! edit moves each model's accuracy.
//!
//! ```bash
//! cargo run -p multiprompt --example edit_pairs
//! ```

use multiprompt::matrix::PerformanceMatrix;
use multiprompt::paraphrase::{edit_pair_analysis, tokenize};
use multiprompt::template::{InstructionTemplate, Method, Validity};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let template = |id: &str, body: &str| InstructionTemplate {
        template_id: id.into(),
        task_id: "demo".into(),
        body: body.into(),
        method: Method::Rephrase,
        validity: Validity::Valid,
        annotator_ids: vec![],
    };
    let pool = vec![
        template("t1", "Write a word that excludes the letter \"{letter}\"."),
        template("t2", "Write a word that lacks the letter \"{letter}\"."),
        template("t3", "Write a word that omits the letter \"{letter}\"."),
        template("t4", "Write a word that omits the letter \"{letter}\""),
        template("t5", "Please find the longest common substring of {a} and {b}."),
    ];

    println!("tokenization of t1:");
    println!("  {:?}\n", tokenize(&pool[0].body));

    // Accuracy of two models under each template; t5 is unrelated and
    // pairs with nothing.
    let matrix = PerformanceMatrix::from_rows(
        "demo",
        vec!["t1".into(), "t2".into(), "t3".into(), "t4".into(), "t5".into()],
        vec!["flan-large".into(), "alpaca-13b".into()],
        vec![
            vec![0.54, 0.31],
            vec![0.12, 0.36],
            vec![0.62, 0.19],
            vec![0.77, 0.04],
            vec![0.10, 0.12],
        ],
    )?;

    for report in edit_pair_analysis(&pool, &matrix, 1) {
        println!(
            "edit {:<22} mean delta {:+.3} over {} pair(s)",
            format!("{:?}", report.edit),
            report.mean_delta,
            report.pairs.len()
        );
        for (model, delta) in &report.per_model_delta {
            println!("    {model:<12} {delta:+.3}");
        }
    }
    Ok(())
}
