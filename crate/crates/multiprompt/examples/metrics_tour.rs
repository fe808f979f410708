//! The metric family on a single model's template performances:
//! maximum, average, saturation, combined score, divergence, and the
//! success-rate summary.
//!
//! ```bash
//! cargo run -p multiprompt --example metrics_tour
//! ```

use multiprompt::metrics::{
    avg_p, cps, divergence, max_p, sat, success_rate_above, SigmaMode,
};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    // One model's accuracy under the original template and nine
    // paraphrases. The best template is far above the typical one.
    let original = 0.62;
    let paraphrases = [0.74, 0.55, 0.08, 0.61, 0.12, 0.47, 0.58, 0.05, 0.33];
    let all: Vec<f64> = std::iter::once(original)
        .chain(paraphrases.iter().copied())
        .collect();

    let max = max_p(&all)?;
    let avg = avg_p(&all)?;
    let saturation = sat(max, avg)?;
    let combined = cps(max, avg)?;

    println!("pool of {} templates", all.len());
    println!("max_p  = {max:.4}   best single template");
    println!("avg_p  = {avg:.4}   robustness across rephrasings");
    println!("sat    = {saturation:.4}   1 - (max - avg)");
    println!("cps    = {combined:.4}   sat x max");

    // How unusual is the original template relative to paraphrases?
    let d = divergence(original, &paraphrases, SigmaMode::Sample)?;
    println!(
        "\ndivergence of the original: {:+.3} standard deviations{}",
        d.value,
        if d.substantial { " (substantial)" } else { "" },
    );

    // Share of templates that clear a minimal bar.
    for threshold in [0.05, 0.25, 0.5] {
        println!(
            "fraction of templates with accuracy > {threshold}: {:.2}",
            success_rate_above(&all, threshold)?
        );
    }

    // The same numbers on a model whose performance barely moves.
    let stable = [0.58, 0.60, 0.59, 0.61, 0.60];
    let max_s = max_p(&stable)?;
    let avg_s = avg_p(&stable)?;
    println!(
        "\na stable model: max {max_s:.2}, avg {avg_s:.2}, sat {:.3}, cps {:.3}",
        sat(max_s, avg_s)?,
        cps(max_s, avg_s)?
    );
    Ok(())
}
