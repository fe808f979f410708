//! Report assembly and export: per-model metric sets, ranking
//! stability, the minimal-tau exhibit, divergence matrices, and
//! deterministic CSV/JSON emission.

use std::collections::BTreeSet;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::ingest::{self, IngestError};
use crate::matrix::{MatrixError, PerformanceMatrix};
use crate::metrics::{metric_set, Divergence, MetricSet, MetricsConfig, MetricsError};
use crate::runner::{
    load_run_config, sample_instances, select_templates, RunnerError, INSTANCES_FILE, POOL_FILE,
    RECORDS_FILE, RUN_CONFIG_FILE, TASK_FILE,
};
use crate::stats::{
    friedman, kendalls_w, min_tau_pair, ConcordanceResult, FriedmanResult, MinTauPair,
    Orientation, StatsError, TauResult, WOptions,
};
use crate::template::InstructionTemplate;

#[derive(Debug, Error)]
pub enum ReportError {
    #[error("run directory {0} is missing {1}")]
    MissingRunFile(PathBuf, &'static str),
    #[error("incomplete run: no record for (model {model_id}, template {template_id}, instance {instance_id})")]
    IncompleteRun {
        model_id: String,
        template_id: String,
        instance_id: String,
    },
    #[error(transparent)]
    Runner(#[from] RunnerError),
    #[error(transparent)]
    Ingest(#[from] IngestError),
    #[error(transparent)]
    Matrix(#[from] MatrixError),
    #[error(transparent)]
    Metrics(#[from] MetricsError),
    #[error(transparent)]
    Stats(#[from] StatsError),
    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

/// Analysis knobs for report building.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportOptions {
    pub metrics: MetricsConfig,
    pub w_options: WOptions,
    pub friedman_orientation: Orientation,
    #[serde(default = "default_success_threshold")]
    pub success_threshold: f64,
}

impl Default for ReportOptions {
    fn default() -> Self {
        Self {
            metrics: MetricsConfig::default(),
            w_options: WOptions::default(),
            friedman_orientation: Orientation::default(),
            success_threshold: default_success_threshold(),
        }
    }
}

fn default_success_threshold() -> f64 {
    0.05
}

/// The minimal-tau template pair with each model's performance under
/// both templates.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MinTauExhibit {
    pub template_a: String,
    pub template_b: String,
    pub tau: TauResult,
    pub eps_a: Vec<f64>,
    pub eps_b: Vec<f64>,
}

/// Model orders (best first) under each view of the matrix. Ties break
/// lexicographically on model id.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Rankings {
    pub original: Option<Vec<String>>,
    pub max_p: Vec<String>,
    pub avg_p: Vec<String>,
    pub cps: Vec<String>,
}

/// Models whose order versus some other model strictly flips between
/// the original-template ranking and a metric ranking.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ReshuffleFlags {
    pub max_p: Vec<String>,
    pub avg_p: Vec<String>,
    pub cps: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TaskReport {
    pub task_id: String,
    pub run_id: String,
    pub model_ids: Vec<String>,
    pub n_templates: usize,
    pub n_instances: usize,
    pub metrics: Vec<MetricSet>,
    pub concordance: Option<ConcordanceResult>,
    pub friedman: Option<FriedmanResult>,
    pub min_tau: Option<MinTauExhibit>,
    /// Rows of the divergence matrix: original template ids in matrix
    /// order.
    pub divergence_rows: Vec<String>,
    /// originals x models grid of divergences.
    pub divergence: Vec<Vec<Divergence>>,
    pub success_threshold: f64,
    /// Fraction of templates above the threshold, per model.
    pub success_rate_above: Vec<f64>,
    pub rankings: Rankings,
    pub reshuffle: ReshuffleFlags,
}

/// Orders model ids by metric value descending, ties by id.
fn rank_order(model_ids: &[String], values: &[f64]) -> Vec<String> {
    let mut order: Vec<usize> = (0..model_ids.len()).collect();
    order.sort_by(|&a, &b| {
        values[b]
            .total_cmp(&values[a])
            .then_with(|| model_ids[a].cmp(&model_ids[b]))
    });
    order.into_iter().map(|i| model_ids[i].clone()).collect()
}

/// Models involved in a strictly discordant pair between two value
/// vectors (better in one, worse in the other).
fn discordant_models(model_ids: &[String], reference: &[f64], other: &[f64]) -> Vec<String> {
    let mut flagged = BTreeSet::new();
    for i in 0..model_ids.len() {
        for j in (i + 1)..model_ids.len() {
            let a = reference[i].total_cmp(&reference[j]);
            let b = other[i].total_cmp(&other[j]);
            if a != std::cmp::Ordering::Equal && b != std::cmp::Ordering::Equal && a != b {
                flagged.insert(model_ids[i].clone());
                flagged.insert(model_ids[j].clone());
            }
        }
    }
    flagged.into_iter().collect()
}

/// Computes the full report from an assembled matrix and its pool.
pub fn report_from_matrix(
    run_id: &str,
    matrix: &PerformanceMatrix,
    pool: &[InstructionTemplate],
    n_instances: usize,
    options: &ReportOptions,
) -> Result<TaskReport, ReportError> {
    let model_ids: Vec<String> = matrix.model_ids().to_vec();
    let metrics: Vec<MetricSet> = model_ids
        .iter()
        .map(|m| metric_set(matrix, m, pool, &options.metrics))
        .collect::<Result<_, _>>()?;

    let concordance = match kendalls_w(matrix, &options.w_options) {
        Ok(result) => Some(result),
        Err(StatsError::DegenerateInput { .. }) => None,
        Err(err) => return Err(err.into()),
    };
    let friedman_result = match friedman(matrix, options.friedman_orientation) {
        Ok(result) => Some(result),
        Err(StatsError::DegenerateInput { .. }) => None,
        Err(err) => return Err(err.into()),
    };
    let min_tau = match min_tau_pair(matrix) {
        Ok(MinTauPair {
            template_a,
            template_b,
            result,
        }) => {
            let ia = matrix.template_index(&template_a).expect("pair from matrix");
            let ib = matrix.template_index(&template_b).expect("pair from matrix");
            Some(MinTauExhibit {
                template_a,
                template_b,
                tau: result,
                eps_a: matrix.row(ia).to_vec(),
                eps_b: matrix.row(ib).to_vec(),
            })
        }
        Err(StatsError::DegenerateInput { .. }) | Err(StatsError::AllPairsDegenerate) => None,
        Err(err) => return Err(err.into()),
    };

    let divergence_rows: Vec<String> = matrix
        .template_ids()
        .iter()
        .filter(|id| metrics.first().is_some_and(|m| m.divergence.contains_key(*id)))
        .cloned()
        .collect();
    let divergence: Vec<Vec<Divergence>> = divergence_rows
        .iter()
        .map(|row| metrics.iter().map(|m| m.divergence[row]).collect())
        .collect();

    let success_rate_above: Vec<f64> = (0..model_ids.len())
        .map(|j| {
            crate::metrics::success_rate_above(&matrix.column(j), options.success_threshold)
                .map_err(ReportError::from)
        })
        .collect::<Result<_, _>>()?;

    let max_values: Vec<f64> = metrics.iter().map(|m| m.max_p).collect();
    let avg_values: Vec<f64> = metrics.iter().map(|m| m.avg_p).collect();
    let cps_values: Vec<f64> = metrics.iter().map(|m| m.cps).collect();
    let original_values: Option<Vec<f64>> = if metrics.iter().all(|m| !m.original_eps.is_empty())
    {
        Some(
            metrics
                .iter()
                .map(|m| m.original_eps.values().sum::<f64>() / m.original_eps.len() as f64)
                .collect(),
        )
    } else {
        None
    };

    let rankings = Rankings {
        original: original_values
            .as_ref()
            .map(|values| rank_order(&model_ids, values)),
        max_p: rank_order(&model_ids, &max_values),
        avg_p: rank_order(&model_ids, &avg_values),
        cps: rank_order(&model_ids, &cps_values),
    };
    let reshuffle = match &original_values {
        Some(reference) => ReshuffleFlags {
            max_p: discordant_models(&model_ids, reference, &max_values),
            avg_p: discordant_models(&model_ids, reference, &avg_values),
            cps: discordant_models(&model_ids, reference, &cps_values),
        },
        None => ReshuffleFlags::default(),
    };

    Ok(TaskReport {
        task_id: matrix.task_id.clone(),
        run_id: run_id.to_string(),
        model_ids,
        n_templates: matrix.n_templates(),
        n_instances,
        metrics,
        concordance,
        friedman: friedman_result,
        min_tau,
        divergence_rows,
        divergence,
        success_threshold: options.success_threshold,
        success_rate_above,
        rankings,
        reshuffle,
    })
}

/// Rebuilds the matrix from a run directory's record file and derives
/// the report. Every value is reproducible from the persisted records.
pub fn build_report(run_dir: &Path, options: &ReportOptions) -> Result<TaskReport, ReportError> {
    let (config, task, pool, matrix, sampled_ids) = load_run(run_dir)?;
    let _ = task;
    report_from_matrix(&config.run_id, &matrix, &pool, sampled_ids.len(), options)
}

/// Loads a run directory and reassembles its matrix from records.
pub fn load_run(
    run_dir: &Path,
) -> Result<
    (
        crate::runner::RunConfig,
        crate::template::TaskSpec,
        Vec<InstructionTemplate>,
        PerformanceMatrix,
        Vec<String>,
    ),
    ReportError,
> {
    for file in [RUN_CONFIG_FILE, TASK_FILE, POOL_FILE, INSTANCES_FILE, RECORDS_FILE] {
        if !run_dir.join(file).is_file() {
            return Err(ReportError::MissingRunFile(run_dir.to_path_buf(), file));
        }
    }
    let config = load_run_config(&run_dir.join(RUN_CONFIG_FILE))?;
    let task = ingest::load_task(&run_dir.join(TASK_FILE))?;
    let pool = ingest::load_pool(&run_dir.join(POOL_FILE))?;
    let instances = ingest::load_instances(&run_dir.join(INSTANCES_FILE), &task)?;
    let records = ingest::load_records(&run_dir.join(RECORDS_FILE))?;

    let selected = select_templates(&pool, &config)?;
    let sampled = sample_instances(&instances, config.instance_sample_size, config.sampling_seed);
    let sampled_ids: Vec<String> = sampled.iter().map(|i| i.instance_id.clone()).collect();

    let mut scores: std::collections::HashMap<(&str, &str, &str), f64> = Default::default();
    for record in &records {
        scores.insert(
            (
                record.model_id.as_str(),
                record.template_id.as_str(),
                record.instance_id.as_str(),
            ),
            record.score,
        );
    }
    let model_ids: Vec<String> = config.backends.iter().map(|b| b.model_id.clone()).collect();
    let mut rows: Vec<Vec<f64>> = Vec::with_capacity(selected.len());
    for template in &selected {
        let mut row = Vec::with_capacity(model_ids.len());
        for model_id in &model_ids {
            let mut total = 0.0;
            for instance_id in &sampled_ids {
                match scores.get(&(
                    model_id.as_str(),
                    template.template_id.as_str(),
                    instance_id.as_str(),
                )) {
                    Some(score) => total += score,
                    None => {
                        return Err(ReportError::IncompleteRun {
                            model_id: model_id.clone(),
                            template_id: template.template_id.clone(),
                            instance_id: instance_id.clone(),
                        })
                    }
                }
            }
            row.push(total / sampled_ids.len() as f64);
        }
        rows.push(row);
    }
    let template_ids: Vec<String> = selected.iter().map(|t| t.template_id.clone()).collect();
    let matrix = PerformanceMatrix::from_rows(&config.task_id, template_ids, model_ids, rows)?;
    Ok((config, task, pool, matrix, sampled_ids))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ExportFormat {
    Csv,
    Json,
}

/// Fixed formatting for exported values: metrics at 4 decimal places.
pub fn format_metric(value: f64) -> String {
    if value.is_infinite() {
        return if value > 0.0 { "inf".into() } else { "-inf".into() };
    }
    format!("{value:.4}")
}

/// p-values switch to scientific notation below 1e-4.
pub fn format_p_value(p: f64) -> String {
    if p < 1e-4 {
        format!("{p:.4e}")
    } else {
        format!("{p:.4}")
    }
}

fn csv_field(text: &str) -> String {
    if text.contains(',') || text.contains('"') || text.contains('\n') {
        format!("\"{}\"", text.replace('"', "\"\""))
    } else {
        text.to_string()
    }
}

fn metrics_csv(report: &TaskReport) -> String {
    let mut out = String::from(
        "model_id,max_p,avg_p,sat,cps,original_eps_mean,success_rate_above,n_templates\n",
    );
    for (idx, set) in report.metrics.iter().enumerate() {
        let original_mean = if set.original_eps.is_empty() {
            String::new()
        } else {
            format_metric(
                set.original_eps.values().sum::<f64>() / set.original_eps.len() as f64,
            )
        };
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{},{}",
            csv_field(&set.model_id),
            format_metric(set.max_p),
            format_metric(set.avg_p),
            format_metric(set.sat),
            format_metric(set.cps),
            original_mean,
            format_metric(report.success_rate_above[idx]),
            set.n_templates,
        );
    }
    out
}

fn divergence_csv(report: &TaskReport) -> String {
    let mut out = String::from("original_template_id");
    for model_id in &report.model_ids {
        out.push(',');
        out.push_str(&csv_field(model_id));
    }
    out.push('\n');
    for (row_idx, row_id) in report.divergence_rows.iter().enumerate() {
        out.push_str(&csv_field(row_id));
        for cell in &report.divergence[row_idx] {
            out.push(',');
            out.push_str(&format_metric(cell.value));
        }
        out.push('\n');
    }
    out
}

fn rankings_csv(report: &TaskReport) -> String {
    let mut out = String::from("metric,rank,model_id\n");
    let mut emit = |name: &str, order: &[String]| {
        for (idx, model_id) in order.iter().enumerate() {
            let _ = writeln!(out, "{},{},{}", name, idx + 1, csv_field(model_id));
        }
    };
    if let Some(original) = &report.rankings.original {
        emit("original_eps", original);
    }
    emit("max_p", &report.rankings.max_p);
    emit("avg_p", &report.rankings.avg_p);
    emit("cps", &report.rankings.cps);
    out
}

fn stability_csv(report: &TaskReport) -> String {
    let mut out = String::from("statistic,value\n");
    match &report.concordance {
        Some(c) => {
            let _ = writeln!(out, "kendalls_w,{}", format_metric(c.w));
            let _ = writeln!(out, "w_band,{:?}", c.band);
        }
        None => {
            out.push_str("kendalls_w,\nw_band,undefined\n");
        }
    }
    match &report.friedman {
        Some(f) => {
            let _ = writeln!(out, "friedman_statistic,{}", format_metric(f.statistic));
            let _ = writeln!(out, "friedman_df,{}", f.df);
            let _ = writeln!(out, "friedman_p,{}", format_p_value(f.p_value));
            let _ = writeln!(out, "friedman_degenerate,{}", f.degenerate);
        }
        None => {
            out.push_str(
                "friedman_statistic,\nfriedman_df,\nfriedman_p,\nfriedman_degenerate,\n",
            );
        }
    }
    match &report.min_tau {
        Some(pair) => {
            let _ = writeln!(out, "min_tau_template_a,{}", csv_field(&pair.template_a));
            let _ = writeln!(out, "min_tau_template_b,{}", csv_field(&pair.template_b));
            let _ = writeln!(out, "min_tau,{}", format_metric(pair.tau.tau_b));
        }
        None => {
            out.push_str("min_tau_template_a,\nmin_tau_template_b,\nmin_tau,\n");
        }
    }
    out
}

fn min_tau_csv(report: &TaskReport) -> String {
    let Some(pair) = &report.min_tau else {
        return String::from("model_id\n");
    };
    let mut out = format!(
        "model_id,eps_under_{},eps_under_{}\n",
        csv_field(&pair.template_a),
        csv_field(&pair.template_b)
    );
    for (idx, model_id) in report.model_ids.iter().enumerate() {
        let _ = writeln!(
            out,
            "{},{},{}",
            csv_field(model_id),
            format_metric(pair.eps_a[idx]),
            format_metric(pair.eps_b[idx]),
        );
    }
    out
}

/// Serializes the report to JSON at full precision (round-trips
/// exactly).
pub fn report_json(report: &TaskReport) -> String {
    let mut text = serde_json::to_string_pretty(report).expect("report serializes");
    text.push('\n');
    text
}

/// Writes the report in the chosen format, returning the written
/// paths. Output bytes are deterministic for a fixed report.
pub fn export(
    report: &TaskReport,
    format: ExportFormat,
    out_dir: &Path,
) -> Result<Vec<PathBuf>, ReportError> {
    std::fs::create_dir_all(out_dir).map_err(|source| ReportError::Io {
        path: out_dir.to_path_buf(),
        source,
    })?;
    let write = |name: &str, contents: String| -> Result<PathBuf, ReportError> {
        let path = out_dir.join(name);
        std::fs::write(&path, contents).map_err(|source| ReportError::Io {
            path: path.clone(),
            source,
        })?;
        Ok(path)
    };
    match format {
        ExportFormat::Json => Ok(vec![write("report.json", report_json(report))?]),
        ExportFormat::Csv => Ok(vec![
            write("metrics.csv", metrics_csv(report))?,
            write("divergence.csv", divergence_csv(report))?,
            write("rankings.csv", rankings_csv(report))?,
            write("stability.csv", stability_csv(report))?,
            write("min_tau.csv", min_tau_csv(report))?,
        ]),
    }
}

/// A short human-readable summary for the CLI.
pub fn render_summary(report: &TaskReport) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "task {}  run {}", report.task_id, report.run_id);
    let _ = writeln!(
        out,
        "{} templates x {} models over {} instances",
        report.n_templates,
        report.model_ids.len(),
        report.n_instances
    );
    let _ = writeln!(out, "model        max_p   avg_p   sat     cps");
    for set in &report.metrics {
        let _ = writeln!(
            out,
            "{:<12} {:<7} {:<7} {:<7} {:<7}",
            set.model_id,
            format_metric(set.max_p),
            format_metric(set.avg_p),
            format_metric(set.sat),
            format_metric(set.cps),
        );
    }
    if let Some(c) = &report.concordance {
        let _ = writeln!(out, "kendalls_w {} ({:?})", format_metric(c.w), c.band);
    }
    if let Some(f) = &report.friedman {
        let _ = writeln!(
            out,
            "friedman {} (df {}, p {})",
            format_metric(f.statistic),
            f.df,
            format_p_value(f.p_value)
        );
    }
    if let Some(pair) = &report.min_tau {
        let _ = writeln!(
            out,
            "min tau {} between {} and {}",
            format_metric(pair.tau.tau_b),
            pair.template_a,
            pair.template_b
        );
    }
    for (metric, flagged) in [
        ("max_p", &report.reshuffle.max_p),
        ("avg_p", &report.reshuffle.avg_p),
        ("cps", &report.reshuffle.cps),
    ] {
        if !flagged.is_empty() {
            let _ = writeln!(out, "rank reshuffle under {metric}: {}", flagged.join(", "));
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::template::{Method, Validity};

    fn pool() -> Vec<InstructionTemplate> {
        let mk = |id: &str, method: Method| InstructionTemplate {
            template_id: id.into(),
            task_id: "t".into(),
            body: format!("{id} {{x}}"),
            method,
            validity: Validity::Valid,
            annotator_ids: vec![],
        };
        vec![
            mk("orig", Method::Original),
            mk("p1", Method::Rephrase),
            mk("p2", Method::Cot),
            mk("p3", Method::Gradual),
        ]
    }

    fn fixture_matrix() -> PerformanceMatrix {
        PerformanceMatrix::from_rows(
            "t",
            vec!["orig".into(), "p1".into(), "p2".into(), "p3".into()],
            vec!["alpha".into(), "beta".into(), "gamma".into()],
            vec![
                vec![0.9, 0.5, 0.4],
                vec![0.1, 0.6, 0.8],
                vec![0.2, 0.7, 0.5],
                vec![0.0, 0.6, 0.6],
            ],
        )
        .unwrap()
    }

    #[test]
    fn report_fields_match_hand_computation() {
        let report = report_from_matrix(
            "r0",
            &fixture_matrix(),
            &pool(),
            10,
            &ReportOptions::default(),
        )
        .unwrap();
        assert_eq!(report.rankings.original.as_deref().unwrap(), ["alpha", "beta", "gamma"]);
        assert_eq!(report.rankings.avg_p, ["beta", "gamma", "alpha"]);
        assert_eq!(report.rankings.max_p, ["alpha", "gamma", "beta"]);
        let w = report.concordance.unwrap();
        assert!((w.w - 0.203125).abs() < 1e-12);
        let f = report.friedman.unwrap();
        assert!((f.statistic - 19.5 / 14.5).abs() < 1e-12);
        let pair = report.min_tau.unwrap();
        assert_eq!((pair.template_a.as_str(), pair.template_b.as_str()), ("orig", "p1"));
        assert_eq!(pair.tau.tau_b, -1.0);
        // alpha leads originals, trails averages: flagged under avg_p
        assert!(report.reshuffle.avg_p.contains(&"alpha".to_string()));
    }

    #[test]
    fn single_template_run_flags_undefined_stability() {
        let matrix = PerformanceMatrix::from_rows(
            "t",
            vec!["orig".into()],
            vec!["alpha".into(), "beta".into()],
            vec![vec![0.9, 0.5]],
        )
        .unwrap();
        let only_orig: Vec<InstructionTemplate> = pool().into_iter().take(1).collect();
        let report =
            report_from_matrix("r0", &matrix, &only_orig, 10, &ReportOptions::default()).unwrap();
        assert!(report.concordance.is_none());
        assert!(report.min_tau.is_none());
        let m = &report.metrics[0];
        assert_eq!(m.max_p, m.avg_p);
        assert_eq!(m.sat, 1.0);
    }

    #[test]
    fn identical_models_tie_everywhere() {
        let matrix = PerformanceMatrix::from_rows(
            "t",
            vec!["orig".into(), "p1".into()],
            vec!["alpha".into(), "beta".into()],
            vec![vec![0.6, 0.6], vec![0.4, 0.4]],
        )
        .unwrap();
        let two: Vec<InstructionTemplate> = pool().into_iter().take(2).collect();
        let report =
            report_from_matrix("r0", &matrix, &two, 10, &ReportOptions::default()).unwrap();
        // ties break lexicographically and nothing is flagged
        assert_eq!(report.rankings.max_p, ["alpha", "beta"]);
        assert!(report.reshuffle.max_p.is_empty());
        assert!(report.reshuffle.avg_p.is_empty());
    }

    #[test]
    fn exports_are_deterministic(){
        let report = report_from_matrix(
            "r0",
            &fixture_matrix(),
            &pool(),
            10,
            &ReportOptions::default(),
        )
        .unwrap();
        let dir = tempfile::tempdir().unwrap();
        let first = export(&report, ExportFormat::Csv, dir.path()).unwrap();
        let bytes_first: Vec<Vec<u8>> = first.iter().map(|p| std::fs::read(p).unwrap()).collect();
        let second = export(&report, ExportFormat::Csv, dir.path()).unwrap();
        let bytes_second: Vec<Vec<u8>> =
            second.iter().map(|p| std::fs::read(p).unwrap()).collect();
        assert_eq!(bytes_first, bytes_second);

        let json_path = export(&report, ExportFormat::Json, dir.path()).unwrap();
        let text = std::fs::read_to_string(&json_path[0]).unwrap();
        let round_tripped: TaskReport = serde_json::from_str(&text).unwrap();
        assert_eq!(round_tripped, report);
    }

    #[test]
    fn divergence_csv_shape() {
        let report = report_from_matrix(
            "r0",
            &fixture_matrix(),
            &pool(),
            10,
            &ReportOptions::default(),
        )
        .unwrap();
        let csv = divergence_csv(&report);
        let lines: Vec<&str> = csv.lines().collect();
        // header + one row per original
        assert_eq!(lines.len(), 1 + report.divergence_rows.len());
        assert_eq!(lines[0].split(',').count(), 1 + report.model_ids.len());
    }

    #[test]
    fn p_value_formatting_switches_to_scientific() {
        assert_eq!(format_p_value(0.7185), "0.7185");
        assert_eq!(format_p_value(5.6e-13), "5.6000e-13");
        assert_eq!(format_metric(0.3182), "0.3182");
        assert_eq!(format_metric(f64::INFINITY), "inf");
    }
}
