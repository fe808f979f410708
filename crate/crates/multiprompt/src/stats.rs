//! Nonparametric ranking statistics and significance tests: midranks,
//! Kendall's coefficient of concordance with agreement bands, the
//! Friedman test with tie correction, Kendall's tau-b, minimal-tau
//! pair discovery, McNemar's test, Cohen's kappa, and the chi-squared
//! survival function that backs the p-values.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::matrix::PerformanceMatrix;

#[derive(Debug, Error, PartialEq)]
pub enum StatsError {
    #[error("degenerate input: need at least {needed} {what}, got {got}")]
    DegenerateInput {
        what: &'static str,
        needed: usize,
        got: usize,
    },
    #[error("vectors differ in length: {0} vs {1}")]
    LengthMismatch(usize, usize),
    #[error("tau denominator is zero: all pairs tied in one vector")]
    ZeroDenominator,
    #[error("all template pairs are degenerate")]
    AllPairsDegenerate,
    #[error("kappa undefined: expected agreement is 1")]
    KappaUndefined,
    #[error("empty contingency table")]
    EmptyTable,
    #[error("model sets differ between matrices")]
    ModelSetMismatch,
}

/// Ranks scores with 1 = best (descending) or 1 = smallest
/// (ascending); tied values receive the mean of the rank positions
/// they span. The output always sums to n(n+1)/2.
pub fn midrank(scores: &[f64], descending: bool) -> Vec<f64> {
    let n = scores.len();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| {
        let cmp = scores[a].total_cmp(&scores[b]);
        if descending {
            cmp.reverse()
        } else {
            cmp
        }
    });
    let mut ranks = vec![0.0; n];
    let mut start = 0;
    while start < n {
        let mut end = start + 1;
        while end < n && scores[order[end]] == scores[order[start]] {
            end += 1;
        }
        // positions start+1 ..= end, averaged
        let rank = (start + 1 + end) as f64 / 2.0;
        for &idx in &order[start..end] {
            ranks[idx] = rank;
        }
        start = end;
    }
    ranks
}

/// Sizes of the tie groups in one score vector (groups of size 1
/// included).
fn tie_group_sizes(scores: &[f64]) -> Vec<usize> {
    let mut sorted: Vec<f64> = scores.to_vec();
    sorted.sort_by(f64::total_cmp);
    let mut sizes = Vec::new();
    let mut start = 0;
    while start < sorted.len() {
        let mut end = start + 1;
        while end < sorted.len() && sorted[end] == sorted[start] {
            end += 1;
        }
        sizes.push(end - start);
        start = end;
    }
    sizes
}

/// m judges' midranks over n objects, with per-judge tie-group sizes.
#[derive(Debug, Clone)]
pub struct RankMatrix {
    pub ranks: Vec<Vec<f64>>,
    pub tie_groups: Vec<Vec<usize>>,
}

impl RankMatrix {
    /// Each judge is a row of scores over the objects; higher score =
    /// rank 1 when `descending`.
    pub fn from_rows(rows: &[Vec<f64>], descending: bool) -> Self {
        let ranks = rows.iter().map(|row| midrank(row, descending)).collect();
        let tie_groups = rows.iter().map(|row| tie_group_sizes(row)).collect();
        Self { ranks, tie_groups }
    }

    pub fn judges(&self) -> usize {
        self.ranks.len()
    }

    pub fn objects(&self) -> usize {
        self.ranks.first().map_or(0, Vec::len)
    }

    /// Column sums R_i over judges.
    pub fn rank_sums(&self) -> Vec<f64> {
        let n = self.objects();
        let mut sums = vec![0.0; n];
        for row in &self.ranks {
            for (i, &r) in row.iter().enumerate() {
                sums[i] += r;
            }
        }
        sums
    }

    /// Sum over tie groups of (t^3 - t) for one judge.
    pub fn tie_correction(&self, judge: usize) -> f64 {
        self.tie_groups[judge]
            .iter()
            .map(|&t| {
                let t = t as f64;
                t * t * t - t
            })
            .sum()
    }
}

/// Agreement band for a concordance value.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Band {
    Weak,
    Medium,
    Strong,
}

/// Cutoffs between the bands: weak < medium_at <= medium < strong_at
/// <= strong.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BandThresholds {
    pub medium_at: f64,
    pub strong_at: f64,
}

impl Default for BandThresholds {
    fn default() -> Self {
        Self {
            medium_at: 0.60,
            strong_at: 0.85,
        }
    }
}

impl BandThresholds {
    pub fn classify(&self, w: f64) -> Band {
        if w >= self.strong_at {
            Band::Strong
        } else if w >= self.medium_at {
            Band::Medium
        } else {
            Band::Weak
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct WOptions {
    /// Subtract m * sum_j T_j from the denominator. Off by default:
    /// the uncorrected form on midranks is the reference behavior.
    pub tie_correction: bool,
    #[serde(default)]
    pub bands: Option<BandThresholds>,
}

/// Kendall's W with its agreement band.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ConcordanceResult {
    pub w: f64,
    pub band: Band,
    pub judges: usize,
    pub objects: usize,
}

/// Concordance of the m template rankings over the n models. Each
/// template row ranks the models with midranks (higher performance =
/// rank 1); W = 12 * sum_i (R_i - Rbar)^2 / (m^2 (n^3 - n)).
pub fn kendalls_w(
    matrix: &PerformanceMatrix,
    options: &WOptions,
) -> Result<ConcordanceResult, StatsError> {
    let rows: Vec<Vec<f64>> = (0..matrix.n_templates())
        .map(|i| matrix.row(i).to_vec())
        .collect();
    kendalls_w_rows(&rows, options)
}

/// Same as [`kendalls_w`] on raw judge rows.
pub fn kendalls_w_rows(
    rows: &[Vec<f64>],
    options: &WOptions,
) -> Result<ConcordanceResult, StatsError> {
    let m = rows.len();
    if m < 2 {
        return Err(StatsError::DegenerateInput {
            what: "judges",
            needed: 2,
            got: m,
        });
    }
    let n = rows[0].len();
    if n < 2 {
        return Err(StatsError::DegenerateInput {
            what: "objects",
            needed: 2,
            got: n,
        });
    }
    for row in rows {
        if row.len() != n {
            return Err(StatsError::LengthMismatch(n, row.len()));
        }
    }
    let ranked = RankMatrix::from_rows(rows, true);
    let sums = ranked.rank_sums();
    let mean = m as f64 * (n as f64 + 1.0) / 2.0;
    let spread: f64 = sums.iter().map(|&r| (r - mean).powi(2)).sum();
    let m_f = m as f64;
    let n_f = n as f64;
    let mut denominator = m_f * m_f * (n_f.powi(3) - n_f);
    if options.tie_correction {
        let total_ties: f64 = (0..m).map(|j| ranked.tie_correction(j)).sum();
        denominator -= m_f * total_ties;
    }
    if denominator <= 0.0 {
        return Err(StatsError::DegenerateInput {
            what: "untied objects",
            needed: 2,
            got: 0,
        });
    }
    let w = 12.0 * spread / denominator;
    let bands = options.bands.unwrap_or_default();
    Ok(ConcordanceResult {
        w,
        band: bands.classify(w),
        judges: m,
        objects: n,
    })
}

/// Which axis of the performance matrix plays the treatments in the
/// Friedman test.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Orientation {
    /// Blocks are models; asks whether templates differ. The default:
    /// the interesting question is whether instructions lead to
    /// significant performance differences.
    #[default]
    TreatmentsAreTemplates,
    /// Blocks are templates; asks whether models differ.
    TreatmentsAreModels,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FriedmanResult {
    pub statistic: f64,
    pub df: usize,
    pub p_value: f64,
    pub blocks: usize,
    pub treatments: usize,
    /// Ties were present, so the correction changed the denominator.
    pub tie_corrected: bool,
    /// Every block was fully tied; the statistic is undefined and the
    /// p-value reported as 1.
    pub degenerate: bool,
}

pub fn friedman(
    matrix: &PerformanceMatrix,
    orientation: Orientation,
) -> Result<FriedmanResult, StatsError> {
    let blocks: Vec<Vec<f64>> = match orientation {
        Orientation::TreatmentsAreTemplates => (0..matrix.n_models())
            .map(|j| matrix.column(j))
            .collect(),
        Orientation::TreatmentsAreModels => (0..matrix.n_templates())
            .map(|i| matrix.row(i).to_vec())
            .collect(),
    };
    friedman_blocks(&blocks)
}

/// Friedman test with tie correction on raw blocks (each block is one
/// row of treatment scores). Within each block, treatments are
/// midranked; the statistic is
/// (k-1) * sum_j (R_j - b(k+1)/2)^2 / (A1 - C1) with A1 the sum of all
/// squared ranks and C1 = b k (k+1)^2 / 4, referred to chi-squared
/// with k-1 degrees of freedom.
pub fn friedman_blocks(blocks: &[Vec<f64>]) -> Result<FriedmanResult, StatsError> {
    let b = blocks.len();
    if b < 2 {
        return Err(StatsError::DegenerateInput {
            what: "blocks",
            needed: 2,
            got: b,
        });
    }
    let k = blocks[0].len();
    if k < 2 {
        return Err(StatsError::DegenerateInput {
            what: "treatments",
            needed: 2,
            got: k,
        });
    }
    for block in blocks {
        if block.len() != k {
            return Err(StatsError::LengthMismatch(k, block.len()));
        }
    }
    let ranked = RankMatrix::from_rows(blocks, false);
    let sums = ranked.rank_sums();
    let b_f = b as f64;
    let k_f = k as f64;
    let mean = b_f * (k_f + 1.0) / 2.0;
    let spread: f64 = sums.iter().map(|&r| (r - mean).powi(2)).sum();
    let squares: f64 = ranked
        .ranks
        .iter()
        .flat_map(|row| row.iter())
        .map(|&r| r * r)
        .sum();
    let c1 = b_f * k_f * (k_f + 1.0) * (k_f + 1.0) / 4.0;
    let tie_corrected = (0..b).any(|j| ranked.tie_correction(j) > 0.0);
    let denominator = squares - c1;
    if denominator.abs() < 1e-12 {
        return Ok(FriedmanResult {
            statistic: 0.0,
            df: k - 1,
            p_value: 1.0,
            blocks: b,
            treatments: k,
            tie_corrected,
            degenerate: true,
        });
    }
    let statistic = (k_f - 1.0) * spread / denominator;
    Ok(FriedmanResult {
        statistic,
        df: k - 1,
        p_value: chi_square_sf(statistic, k - 1),
        blocks: b,
        treatments: k,
        tie_corrected,
        degenerate: false,
    })
}

/// Kendall's tau-b with its pair counts: P concordant, Q discordant,
/// ties in the first vector only, ties in the second only. Pairs tied
/// in both count in neither.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TauResult {
    pub tau_b: f64,
    pub concordant: u64,
    pub discordant: u64,
    pub ties_first: u64,
    pub ties_second: u64,
}

/// tau_b = (P - Q) / sqrt((P + Q + T) (P + Q + U)) over all n(n-1)/2
/// index pairs.
pub fn kendalls_tau_b(x: &[f64], y: &[f64]) -> Result<TauResult, StatsError> {
    if x.len() != y.len() {
        return Err(StatsError::LengthMismatch(x.len(), y.len()));
    }
    let n = x.len();
    if n < 2 {
        return Err(StatsError::DegenerateInput {
            what: "observations",
            needed: 2,
            got: n,
        });
    }
    let mut concordant = 0u64;
    let mut discordant = 0u64;
    let mut ties_first = 0u64;
    let mut ties_second = 0u64;
    for i in 0..n {
        for j in (i + 1)..n {
            let dx = x[i].total_cmp(&x[j]);
            let dy = y[i].total_cmp(&y[j]);
            use std::cmp::Ordering::*;
            match (dx, dy) {
                (Equal, Equal) => {}
                (Equal, _) => ties_first += 1,
                (_, Equal) => ties_second += 1,
                (a, b) if a == b => concordant += 1,
                _ => discordant += 1,
            }
        }
    }
    let left = concordant + discordant + ties_first;
    let right = concordant + discordant + ties_second;
    if left == 0 || right == 0 {
        return Err(StatsError::ZeroDenominator);
    }
    let tau_b =
        (concordant as f64 - discordant as f64) / ((left as f64) * (right as f64)).sqrt();
    Ok(TauResult {
        tau_b,
        concordant,
        discordant,
        ties_first,
        ties_second,
    })
}

/// The template pair whose rankings of the models agree least.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MinTauPair {
    pub template_a: String,
    pub template_b: String,
    pub result: TauResult,
}

/// Exhaustively evaluates tau-b over all template-row pairs and
/// returns the minimizing pair. Degenerate pairs are skipped; ties on
/// tau break toward the lexicographically smallest (a, b).
pub fn min_tau_pair(matrix: &PerformanceMatrix) -> Result<MinTauPair, StatsError> {
    let m = matrix.n_templates();
    if m < 2 {
        return Err(StatsError::DegenerateInput {
            what: "templates",
            needed: 2,
            got: m,
        });
    }
    let ids = matrix.template_ids();
    let mut candidates: Vec<(String, String, usize, usize)> = Vec::new();
    for i in 0..m {
        for j in (i + 1)..m {
            let (a, b, ia, ib) = if ids[i] <= ids[j] {
                (ids[i].clone(), ids[j].clone(), i, j)
            } else {
                (ids[j].clone(), ids[i].clone(), j, i)
            };
            candidates.push((a, b, ia, ib));
        }
    }
    candidates.sort();
    let mut best: Option<MinTauPair> = None;
    for (a, b, ia, ib) in candidates {
        let result = match kendalls_tau_b(matrix.row(ia), matrix.row(ib)) {
            Ok(result) => result,
            Err(StatsError::ZeroDenominator) => continue,
            Err(err) => return Err(err),
        };
        let better = match &best {
            None => true,
            Some(current) => result.tau_b < current.result.tau_b,
        };
        if better {
            best = Some(MinTauPair {
                template_a: a,
                template_b: b,
                result,
            });
        }
    }
    best.ok_or(StatsError::AllPairsDegenerate)
}

/// How many tasks contain a template pair with negative tau. Tasks
/// whose pairs are all degenerate do not count.
pub fn count_negative_tau_tasks(matrices: &[PerformanceMatrix]) -> usize {
    matrices
        .iter()
        .filter(|matrix| match min_tau_pair(matrix) {
            Ok(pair) => pair.result.tau_b < 0.0,
            Err(_) => false,
        })
        .count()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum McNemarMethod {
    ExactBinomial,
    ChiSquare,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct McNemarResult {
    pub statistic: f64,
    pub p_value: f64,
    pub method: McNemarMethod,
    /// b = c = 0: the discordant counts carry no information.
    pub no_information: bool,
}

pub const MCNEMAR_EXACT_THRESHOLD: u64 = 25;

/// McNemar's test on the discordant counts b (correct under the first
/// condition only) and c (correct under the second only). Small counts
/// use the exact two-sided binomial; otherwise the continuity-corrected
/// statistic (|b - c| - 1)^2 / (b + c) referred to chi-squared with one
/// degree of freedom.
pub fn mcnemar(b: u64, c: u64, exact_threshold: u64) -> McNemarResult {
    let total = b + c;
    if total == 0 {
        return McNemarResult {
            statistic: 0.0,
            p_value: 1.0,
            method: McNemarMethod::ExactBinomial,
            no_information: true,
        };
    }
    if total < exact_threshold {
        let tail = binomial_cdf_half(b.min(c), total);
        let p_value = (2.0 * tail).min(1.0);
        McNemarResult {
            statistic: b.min(c) as f64,
            p_value,
            method: McNemarMethod::ExactBinomial,
            no_information: false,
        }
    } else {
        let diff = b.abs_diff(c) as f64;
        let statistic = (diff - 1.0).powi(2) / total as f64;
        McNemarResult {
            statistic,
            p_value: chi_square_sf(statistic, 1),
            method: McNemarMethod::ChiSquare,
            no_information: false,
        }
    }
}

/// P(X <= m) for X ~ Binomial(n, 1/2).
fn binomial_cdf_half(m: u64, n: u64) -> f64 {
    let scale = 0.5f64.powi(n as i32);
    let mut coefficient = 1.0;
    let mut total = 0.0;
    for i in 0..=m {
        if i > 0 {
            coefficient *= (n - i + 1) as f64 / i as f64;
        }
        total += coefficient;
    }
    total * scale
}

/// Cohen's kappa over a 2x2 agreement table:
/// (p_o - p_e) / (1 - p_e).
pub fn cohens_kappa(table: &[[u64; 2]; 2]) -> Result<f64, StatsError> {
    let total: u64 = table.iter().flatten().sum();
    if total == 0 {
        return Err(StatsError::EmptyTable);
    }
    let total_f = total as f64;
    let observed = (table[0][0] + table[1][1]) as f64 / total_f;
    let row0 = (table[0][0] + table[0][1]) as f64;
    let row1 = (table[1][0] + table[1][1]) as f64;
    let col0 = (table[0][0] + table[1][0]) as f64;
    let col1 = (table[0][1] + table[1][1]) as f64;
    let expected = (row0 * col0 + row1 * col1) / (total_f * total_f);
    if expected >= 1.0 {
        return Err(StatsError::KappaUndefined);
    }
    Ok((observed - expected) / (1.0 - expected))
}

// Lanczos approximation (g = 7, 9 terms), accurate to ~1e-15 for the
// half-integer arguments used here.
fn ln_gamma(z: f64) -> f64 {
    const COEFFICIENTS: [f64; 9] = [
        0.999_999_999_999_809_93,
        676.520_368_121_885_1,
        -1_259.139_216_722_402_8,
        771.323_428_777_653_13,
        -176.615_029_162_140_59,
        12.507_343_278_686_905,
        -0.138_571_095_265_720_12,
        9.984_369_578_019_571_6e-6,
        1.505_632_735_149_311_6e-7,
    ];
    debug_assert!(z > 0.0);
    let mut series = COEFFICIENTS[0];
    for (i, &c) in COEFFICIENTS.iter().enumerate().skip(1) {
        series += c / (z + i as f64 - 1.0);
    }
    let t = z + 6.5;
    0.5 * (2.0 * std::f64::consts::PI).ln() + (z - 0.5) * t.ln() - t + series.ln()
}

const GAMMA_EPS: f64 = 1e-16;
const GAMMA_MAX_ITER: usize = 500;

/// Lower regularized incomplete gamma P(a, x) by series expansion.
fn gamma_p_series(a: f64, x: f64) -> f64 {
    let mut ap = a;
    let mut sum = 1.0 / a;
    let mut delta = sum;
    for _ in 0..GAMMA_MAX_ITER {
        ap += 1.0;
        delta *= x / ap;
        sum += delta;
        if delta.abs() < sum.abs() * GAMMA_EPS {
            break;
        }
    }
    sum * (-x + a * x.ln() - ln_gamma(a)).exp()
}

/// Upper regularized incomplete gamma Q(a, x) by continued fraction
/// (modified Lentz).
fn gamma_q_continued_fraction(a: f64, x: f64) -> f64 {
    const FPMIN: f64 = 1e-300;
    let mut b = x + 1.0 - a;
    let mut c = 1.0 / FPMIN;
    let mut d = 1.0 / b;
    let mut h = d;
    for i in 1..=GAMMA_MAX_ITER {
        let an = -(i as f64) * (i as f64 - a);
        b += 2.0;
        d = an * d + b;
        if d.abs() < FPMIN {
            d = FPMIN;
        }
        c = b + an / c;
        if c.abs() < FPMIN {
            c = FPMIN;
        }
        d = 1.0 / d;
        let delta = d * c;
        h *= delta;
        if (delta - 1.0).abs() < GAMMA_EPS {
            break;
        }
    }
    (-x + a * x.ln() - ln_gamma(a)).exp() * h
}

/// Chi-squared survival function: the upper regularized incomplete
/// gamma Q(df/2, x/2), by series for x < df + 1 and continued fraction
/// otherwise.
pub fn chi_square_sf(x: f64, df: usize) -> f64 {
    debug_assert!(df >= 1);
    if x <= 0.0 {
        return 1.0;
    }
    let a = df as f64 / 2.0;
    let half = x / 2.0;
    let q = if x < df as f64 + 1.0 {
        1.0 - gamma_p_series(a, half)
    } else {
        gamma_q_continued_fraction(a, half)
    };
    q.clamp(0.0, 1.0)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RankingMetric {
    Max,
    Avg,
    Cps,
}

fn metric_per_model(
    matrix: &PerformanceMatrix,
    metric: RankingMetric,
) -> Result<Vec<(String, f64)>, StatsError> {
    let mut out = Vec::with_capacity(matrix.n_models());
    for (j, model_id) in matrix.model_ids().iter().enumerate() {
        let eps = matrix.column(j);
        let max = eps.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let avg = eps.iter().sum::<f64>() / eps.len() as f64;
        let value = match metric {
            RankingMetric::Max => max,
            RankingMetric::Avg => avg,
            RankingMetric::Cps => (1.0 - (max - avg)) * max,
        };
        out.push((model_id.clone(), value));
    }
    Ok(out)
}

/// tau-b between the model rankings induced by a metric on the full
/// pool versus the filtered pool. Model sets must coincide.
pub fn ranking_agreement_across_pools(
    full: &PerformanceMatrix,
    filtered: &PerformanceMatrix,
    metric: RankingMetric,
) -> Result<TauResult, StatsError> {
    if full.n_models() != filtered.n_models() {
        return Err(StatsError::ModelSetMismatch);
    }
    let full_values = metric_per_model(full, metric)?;
    let mut filtered_values = Vec::with_capacity(full_values.len());
    for (model_id, _) in &full_values {
        let idx = filtered
            .model_index(model_id)
            .ok_or(StatsError::ModelSetMismatch)?;
        filtered_values.push(metric_per_model(filtered, metric)?[idx].1);
    }
    let x: Vec<f64> = full_values.iter().map(|(_, v)| *v).collect();
    let rank_x = midrank(&x, true);
    let rank_y = midrank(&filtered_values, true);
    kendalls_tau_b(&rank_x, &rank_y)
}
