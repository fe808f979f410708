//! Manual validation of generated paraphrases: two annotators review a
//! shared subset, verdicts accumulate append-only, and the agreement
//! report gives raw accuracy plus Cohen's kappa.
//!
//! ```bash
//! cargo run -p multiprompt --example annotate_agreement
//! ```

use multiprompt::paraphrase::{agreement_report, AnnotatedPool, Verdict};
use multiprompt::template::{InstructionTemplate, Method, Validity};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let templates: Vec<InstructionTemplate> = (0..30)
        .map(|i| InstructionTemplate {
            template_id: format!("p{i:02}"),
            task_id: "demo".into(),
            body: format!("phrasing {i} with {{x}}"),
            method: Method::Rephrase,
            validity: Validity::Unreviewed,
            annotator_ids: vec![],
        })
        .collect();
    let mut pool = AnnotatedPool::new(templates);

    // First annotator reviews everything; every third template is a
    // bad paraphrase. The second annotator re-reviews the first twenty
    // and disagrees on two of them.
    for i in 0..30 {
        let verdict = if i % 3 == 0 { Verdict::Invalid } else { Verdict::Valid };
        pool.annotate(&format!("p{i:02}"), "ann-one", verdict)?;
    }
    for i in 0..20 {
        let mut verdict = if i % 3 == 0 { Verdict::Invalid } else { Verdict::Valid };
        if i == 4 || i == 9 {
            verdict = match verdict {
                Verdict::Valid => Verdict::Invalid,
                Verdict::Invalid => Verdict::Valid,
            };
        }
        pool.annotate(&format!("p{i:02}"), "ann-two", verdict)?;
    }

    let valid = pool
        .templates
        .iter()
        .filter(|t| t.validity == Validity::Valid)
        .count();
    println!(
        "effective pool after adjudication (first annotator wins): {valid} valid of {}",
        pool.templates.len()
    );

    let report = agreement_report(&pool, "ann-one", "ann-two")?;
    println!("\ndoubly annotated subset: n = {}", report.n);
    println!("observed agreement     : {:.3}", report.accuracy);
    match report.kappa {
        Some(kappa) => println!("cohens kappa           : {kappa:.3}"),
        None => println!("cohens kappa           : undefined (no label variety)"),
    }
    println!(
        "contingency [[vv, vi], [iv, ii]]: {:?}",
        report.table
    );
    Ok(())
}
