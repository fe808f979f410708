//! Multi-prompt performance metrics over one model's column of a
//! performance matrix: maximum, average, saturation, combined score,
//! divergence of originals from the paraphrase distribution, and the
//! success-rate-above-threshold summary.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::matrix::PerformanceMatrix;
use crate::template::{InstructionTemplate, Method};

#[derive(Debug, Error, PartialEq)]
pub enum MetricsError {
    #[error("empty input")]
    EmptyInput,
    #[error("avg_p {avg_p} exceeds max_p {max_p}")]
    OrderViolation { max_p: f64, avg_p: f64 },
    #[error("divergence needs at least 2 paraphrase values, got {0}")]
    TooFewParaphrases(usize),
    #[error("threshold {0} outside [0,1]")]
    BadThreshold(f64),
    #[error("unknown model {0}")]
    UnknownModel(String),
}

/// Maximum individual template performance.
pub fn max_p(eps: &[f64]) -> Result<f64, MetricsError> {
    eps.iter()
        .copied()
        .reduce(f64::max)
        .ok_or(MetricsError::EmptyInput)
}

/// Mean of the individual template performances.
pub fn avg_p(eps: &[f64]) -> Result<f64, MetricsError> {
    if eps.is_empty() {
        return Err(MetricsError::EmptyInput);
    }
    Ok(eps.iter().sum::<f64>() / eps.len() as f64)
}

/// Saturation: 1 - (max_p - avg_p). 1 means the best template performs
/// no better than the average one.
pub fn sat(max_p: f64, avg_p: f64) -> Result<f64, MetricsError> {
    if avg_p > max_p + 1e-12 {
        return Err(MetricsError::OrderViolation { max_p, avg_p });
    }
    Ok((1.0 - (max_p - avg_p)).clamp(0.0, 1.0))
}

/// Combined performance score: sat x max_p.
pub fn cps(max_p: f64, avg_p: f64) -> Result<f64, MetricsError> {
    Ok(sat(max_p, avg_p)? * max_p)
}

/// Which standard deviation the divergence denominator uses.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SigmaMode {
    /// Sample standard deviation (divisor n-1). Small pools make the
    /// population estimator noticeably biased.
    #[default]
    Sample,
    Population,
}

/// Signed distance, in paraphrase standard deviations, of the original
/// template's performance from the paraphrase mean.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Divergence {
    pub value: f64,
    /// |value| > 1: more than one standard deviation away.
    pub substantial: bool,
    /// The paraphrase distribution had zero variance.
    pub degenerate: bool,
}

/// (eps_original - mean) / sigma over the paraphrase values only. Zero
/// variance yields +/- infinity by the numerator's sign, or a flagged
/// 0 when the numerator is 0 too.
pub fn divergence(
    eps_original: f64,
    eps_paraphrases: &[f64],
    sigma: SigmaMode,
) -> Result<Divergence, MetricsError> {
    if eps_paraphrases.len() < 2 {
        return Err(MetricsError::TooFewParaphrases(eps_paraphrases.len()));
    }
    let n = eps_paraphrases.len() as f64;
    let mean = eps_paraphrases.iter().sum::<f64>() / n;
    let ss: f64 = eps_paraphrases.iter().map(|e| (e - mean).powi(2)).sum();
    let divisor = match sigma {
        SigmaMode::Sample => n - 1.0,
        SigmaMode::Population => n,
    };
    let sd = (ss / divisor).sqrt();
    let numerator = eps_original - mean;
    if sd == 0.0 {
        let value = if numerator == 0.0 {
            0.0
        } else if numerator > 0.0 {
            f64::INFINITY
        } else {
            f64::NEG_INFINITY
        };
        return Ok(Divergence {
            value,
            substantial: value.abs() > 1.0,
            degenerate: true,
        });
    }
    let value = numerator / sd;
    Ok(Divergence {
        value,
        substantial: value.abs() > 1.0,
        degenerate: false,
    })
}

/// Fraction of templates with performance strictly above the
/// threshold.
pub fn success_rate_above(eps: &[f64], threshold: f64) -> Result<f64, MetricsError> {
    if eps.is_empty() {
        return Err(MetricsError::EmptyInput);
    }
    if !(0.0..=1.0).contains(&threshold) {
        return Err(MetricsError::BadThreshold(threshold));
    }
    let hits = eps.iter().filter(|&&e| e > threshold).count();
    Ok(hits as f64 / eps.len() as f64)
}

/// Knobs for metric-set computation.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct MetricsConfig {
    /// Drop original templates from the pool used for max/avg. By
    /// default originals count as pool members.
    pub exclude_originals: bool,
    pub sigma: SigmaMode,
}

/// All per-model metrics for one task.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricSet {
    pub model_id: String,
    pub task_id: String,
    pub max_p: f64,
    pub avg_p: f64,
    pub sat: f64,
    pub cps: f64,
    /// Performance under each original template present in the matrix.
    pub original_eps: BTreeMap<String, f64>,
    /// Divergence of each original from the paraphrase distribution.
    pub divergence: BTreeMap<String, Divergence>,
    pub n_templates: usize,
}

/// Computes the metric set for one model column. Original templates
/// are identified by their method tag in the pool.
pub fn metric_set(
    matrix: &PerformanceMatrix,
    model_id: &str,
    pool: &[InstructionTemplate],
    config: &MetricsConfig,
) -> Result<MetricSet, MetricsError> {
    let column = matrix
        .column_by_id(model_id)
        .map_err(|_| MetricsError::UnknownModel(model_id.to_string()))?;
    let original_ids: BTreeSet<&str> = pool
        .iter()
        .filter(|t| t.method == Method::Original)
        .map(|t| t.template_id.as_str())
        .collect();

    let mut pool_eps = Vec::with_capacity(column.len());
    let mut paraphrase_eps = Vec::new();
    let mut original_eps = BTreeMap::new();
    for (idx, template_id) in matrix.template_ids().iter().enumerate() {
        let eps = column[idx];
        let is_original = original_ids.contains(template_id.as_str());
        if is_original {
            original_eps.insert(template_id.clone(), eps);
        } else {
            paraphrase_eps.push(eps);
        }
        if !(is_original && config.exclude_originals) {
            pool_eps.push(eps);
        }
    }

    let max = max_p(&pool_eps)?;
    let avg = avg_p(&pool_eps)?;
    let mut divergences = BTreeMap::new();
    if paraphrase_eps.len() >= 2 {
        for (template_id, &eps) in &original_eps {
            divergences.insert(
                template_id.clone(),
                divergence(eps, &paraphrase_eps, config.sigma)?,
            );
        }
    }
    Ok(MetricSet {
        model_id: model_id.to_string(),
        task_id: matrix.task_id.clone(),
        max_p: max,
        avg_p: avg,
        sat: sat(max, avg)?,
        cps: cps(max, avg)?,
        original_eps,
        divergence: divergences,
        n_templates: pool_eps.len(),
    })
}
