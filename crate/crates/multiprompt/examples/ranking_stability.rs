//! How stable is the model ranking across templates? Kendall's W over
//! all templates, the Friedman test, and the template pair whose
//! rankings disagree the most.
//!
//! ```bash
//! cargo run -p multiprompt --example ranking_stability
//! ```

use multiprompt::matrix::PerformanceMatrix;
use multiprompt::report::format_p_value;
use multiprompt::stats::{
    friedman, kendalls_tau_b, kendalls_w, min_tau_pair, Orientation, WOptions,
};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    // Five templates ranking four models. The first three templates
    // roughly agree; the last two invert the ordering.
    let matrix = PerformanceMatrix::from_rows(
        "demo_task",
        vec![
            "t-original".into(),
            "t-polite".into(),
            "t-terse".into(),
            "t-question".into(),
            "t-colon".into(),
        ],
        vec!["m-a".into(), "m-b".into(), "m-c".into(), "m-d".into()],
        vec![
            vec![0.82, 0.65, 0.40, 0.22],
            vec![0.75, 0.60, 0.45, 0.30],
            vec![0.70, 0.72, 0.35, 0.25],
            vec![0.20, 0.42, 0.55, 0.61],
            vec![0.15, 0.33, 0.50, 0.70],
        ],
    )?;

    let w = kendalls_w(&matrix, &WOptions::default())?;
    println!(
        "kendalls W = {:.3} over {} judges x {} objects -> {:?} agreement",
        w.w, w.judges, w.objects, w.band
    );

    let f = friedman(&matrix, Orientation::TreatmentsAreTemplates)?;
    println!(
        "friedman (templates as treatments): statistic {:.3}, df {}, p {}",
        f.statistic,
        f.df,
        format_p_value(f.p_value)
    );
    let f = friedman(&matrix, Orientation::TreatmentsAreModels)?;
    println!(
        "friedman (models as treatments):    statistic {:.3}, df {}, p {}",
        f.statistic,
        f.df,
        format_p_value(f.p_value)
    );

    let pair = min_tau_pair(&matrix)?;
    println!(
        "\nleast agreeing templates: {} vs {} (tau_b {:+.3})",
        pair.template_a, pair.template_b, pair.result.tau_b
    );
    let ia = matrix.template_index(&pair.template_a).unwrap();
    let ib = matrix.template_index(&pair.template_b).unwrap();
    println!("{:<12}{:>8}{:>8}", "model", pair.template_a, pair.template_b);
    for (j, model) in matrix.model_ids().iter().enumerate() {
        println!("{model:<12}{:>8.2}{:>8.2}", matrix.get(ia, j), matrix.get(ib, j));
    }

    // tau between two specific templates, with the pair counts
    let result = kendalls_tau_b(matrix.row(0), matrix.row(3))?;
    println!(
        "\ntau(t-original, t-question) = {:+.3} (P {}, Q {}, T {}, U {})",
        result.tau_b,
        result.concordant,
        result.discordant,
        result.ties_first,
        result.ties_second
    );
    Ok(())
}
