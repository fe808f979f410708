//! The `key=value` configuration file shared by the CLI commands.

use std::path::Path;

use thiserror::Error;

use crate::metrics::SigmaMode;
use crate::report::ReportOptions;
use crate::runner::{FailurePolicy, ScoreOptions};
use crate::stats::Orientation;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("{path}:{line}: expected key=value, got {text:?}")]
    BadLine {
        path: String,
        line: usize,
        text: String,
    },
    #[error("{path}:{line}: bad value for {key}: {value:?}")]
    BadValue {
        path: String,
        line: usize,
        key: String,
        value: String,
    },
    #[error("{path}:{line}: unknown key {key:?}")]
    UnknownKey {
        path: String,
        line: usize,
        key: String,
    },
    #[error("cannot read {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

/// Analysis and runner settings adjustable without code changes.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct HarnessConfig {
    pub report: ReportOptions,
    pub score: ScoreOptions,
    pub allow_unreviewed: bool,
    pub failure_policy: FailurePolicy,
}

impl HarnessConfig {
    /// Parses a file of `key=value` lines; `#` starts a comment.
    ///
    /// Keys: exclude_originals, divergence_sigma (sample|population),
    /// w_tie_correction, w_band_medium, w_band_strong,
    /// friedman_orientation (templates|models), success_threshold,
    /// score_trim, score_casefold, score_strip_trailing_period,
    /// allow_unreviewed, failure_policy (abort|zero).
    pub fn from_file(path: &Path) -> Result<Self, ConfigError> {
        let display = path.display().to_string();
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
            path: display.clone(),
            source,
        })?;
        let mut config = Self::default();
        for (idx, raw) in text.lines().enumerate() {
            let line = idx + 1;
            let trimmed = raw.split('#').next().unwrap_or("").trim();
            if trimmed.is_empty() {
                continue;
            }
            let Some((key, value)) = trimmed.split_once('=') else {
                return Err(ConfigError::BadLine {
                    path: display.clone(),
                    line,
                    text: raw.to_string(),
                });
            };
            let key = key.trim();
            let value = value.trim();
            config.apply(key, value).map_err(|kind| match kind {
                ApplyError::BadValue => ConfigError::BadValue {
                    path: display.clone(),
                    line,
                    key: key.to_string(),
                    value: value.to_string(),
                },
                ApplyError::UnknownKey => ConfigError::UnknownKey {
                    path: display.clone(),
                    line,
                    key: key.to_string(),
                },
            })?;
        }
        Ok(config)
    }

    fn apply(&mut self, key: &str, value: &str) -> Result<(), ApplyError> {
        let parse_bool = |v: &str| match v {
            "true" | "1" | "yes" => Ok(true),
            "false" | "0" | "no" => Ok(false),
            _ => Err(ApplyError::BadValue),
        };
        let parse_f64 = |v: &str| v.parse::<f64>().map_err(|_| ApplyError::BadValue);
        match key {
            "exclude_originals" => self.report.metrics.exclude_originals = parse_bool(value)?,
            "divergence_sigma" => {
                self.report.metrics.sigma = match value {
                    "sample" => SigmaMode::Sample,
                    "population" => SigmaMode::Population,
                    _ => return Err(ApplyError::BadValue),
                }
            }
            "w_tie_correction" => self.report.w_options.tie_correction = parse_bool(value)?,
            "w_band_medium" => {
                let mut bands = self.report.w_options.bands.unwrap_or_default();
                bands.medium_at = parse_f64(value)?;
                self.report.w_options.bands = Some(bands);
            }
            "w_band_strong" => {
                let mut bands = self.report.w_options.bands.unwrap_or_default();
                bands.strong_at = parse_f64(value)?;
                self.report.w_options.bands = Some(bands);
            }
            "friedman_orientation" => {
                self.report.friedman_orientation = match value {
                    "templates" => Orientation::TreatmentsAreTemplates,
                    "models" => Orientation::TreatmentsAreModels,
                    _ => return Err(ApplyError::BadValue),
                }
            }
            "success_threshold" => self.report.success_threshold = parse_f64(value)?,
            "score_trim" => self.score.trim = parse_bool(value)?,
            "score_casefold" => self.score.casefold = parse_bool(value)?,
            "score_strip_trailing_period" => {
                self.score.strip_trailing_period = parse_bool(value)?
            }
            "allow_unreviewed" => self.allow_unreviewed = parse_bool(value)?,
            "failure_policy" => {
                self.failure_policy = match value {
                    "abort" => FailurePolicy::AbortTemplate,
                    "zero" => FailurePolicy::ScoreZero,
                    _ => return Err(ApplyError::BadValue),
                }
            }
            _ => return Err(ApplyError::UnknownKey),
        }
        Ok(())
    }
}

enum ApplyError {
    BadValue,
    UnknownKey,
}
