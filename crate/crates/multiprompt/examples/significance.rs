//! Significance machinery: is the best found template really better
//! than the original? McNemar's test on paired per-instance outcomes,
//! with the chi-squared survival function underneath.
//!
//! ```bash
//! cargo run -p multiprompt --example significance
//! ```

use multiprompt::stats::{chi_square_sf, mcnemar, McNemarMethod, MCNEMAR_EXACT_THRESHOLD};

fn main() {
    // Paired outcomes of two templates on the same 100 instances:
    // b = instances only the original got right,
    // c = instances only the challenger got right.
    let cases = [
        ("small disagreement", 3u64, 0u64),
        ("balanced", 10, 10),
        ("challenger ahead", 5, 15),
        ("challenger far ahead", 4, 26),
    ];
    for (label, b, c) in cases {
        let result = mcnemar(b, c, MCNEMAR_EXACT_THRESHOLD);
        let method = match result.method {
            McNemarMethod::ExactBinomial => "exact binomial",
            McNemarMethod::ChiSquare => "chi-square + continuity",
        };
        println!(
            "{label:<22} b={b:<3} c={c:<3} p={:.4} ({method}{})",
            result.p_value,
            if result.no_information { ", no information" } else { "" },
        );
    }

    println!("\nchi-squared survival function:");
    for (x, df) in [(3.84, 1), (6.0, 2), (4.05, 1), (15.0, 5)] {
        println!("  sf({x:>5}, df={df}) = {:.6}", chi_square_sf(x, df));
    }
}
