//! The dense templates x models grid of aggregated performances.

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum MatrixError {
    #[error("duplicate {axis} label {label}")]
    DuplicateLabel { axis: &'static str, label: String },
    #[error("value {value} at ({template_id}, {model_id}) outside [0,1]")]
    ValueOutOfRange {
        template_id: String,
        model_id: String,
        value: f64,
    },
    #[error("expected {expected} values, got {got}")]
    ShapeMismatch { expected: usize, got: usize },
    #[error("unknown {axis} label {label}")]
    UnknownLabel { axis: &'static str, label: String },
}

/// Aggregated performance per (template, model) cell. Rows are
/// templates, columns are models; every cell holds a value in [0,1].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PerformanceMatrix {
    pub task_id: String,
    model_ids: Vec<String>,
    template_ids: Vec<String>,
    values: Vec<f64>, // row-major, template_ids.len() x model_ids.len()
}

impl PerformanceMatrix {
    pub fn new(
        task_id: impl Into<String>,
        template_ids: Vec<String>,
        model_ids: Vec<String>,
        values: Vec<f64>,
    ) -> Result<Self, MatrixError> {
        for (axis, labels) in [("template", &template_ids), ("model", &model_ids)] {
            let mut seen = std::collections::BTreeSet::new();
            for label in labels {
                if !seen.insert(label.as_str()) {
                    return Err(MatrixError::DuplicateLabel {
                        axis,
                        label: label.clone(),
                    });
                }
            }
        }
        let expected = template_ids.len() * model_ids.len();
        if values.len() != expected {
            return Err(MatrixError::ShapeMismatch {
                expected,
                got: values.len(),
            });
        }
        for (idx, &value) in values.iter().enumerate() {
            if !(0.0..=1.0).contains(&value) {
                return Err(MatrixError::ValueOutOfRange {
                    template_id: template_ids[idx / model_ids.len()].clone(),
                    model_id: model_ids[idx % model_ids.len()].clone(),
                    value,
                });
            }
        }
        Ok(Self {
            task_id: task_id.into(),
            model_ids,
            template_ids,
            values,
        })
    }

    /// Builds from per-template rows in the given order.
    pub fn from_rows(
        task_id: impl Into<String>,
        template_ids: Vec<String>,
        model_ids: Vec<String>,
        rows: Vec<Vec<f64>>,
    ) -> Result<Self, MatrixError> {
        let n = model_ids.len();
        let mut values = Vec::with_capacity(template_ids.len() * n);
        for row in &rows {
            if row.len() != n {
                return Err(MatrixError::ShapeMismatch {
                    expected: n,
                    got: row.len(),
                });
            }
            values.extend_from_slice(row);
        }
        Self::new(task_id, template_ids, model_ids, values)
    }

    pub fn n_templates(&self) -> usize {
        self.template_ids.len()
    }

    pub fn n_models(&self) -> usize {
        self.model_ids.len()
    }

    pub fn template_ids(&self) -> &[String] {
        &self.template_ids
    }

    pub fn model_ids(&self) -> &[String] {
        &self.model_ids
    }

    pub fn get(&self, template_idx: usize, model_idx: usize) -> f64 {
        self.values[template_idx * self.model_ids.len() + model_idx]
    }

    /// One template's performances across all models.
    pub fn row(&self, template_idx: usize) -> &[f64] {
        let n = self.model_ids.len();
        &self.values[template_idx * n..(template_idx + 1) * n]
    }

    /// One model's performances across all templates.
    pub fn column(&self, model_idx: usize) -> Vec<f64> {
        (0..self.template_ids.len())
            .map(|i| self.get(i, model_idx))
            .collect()
    }

    pub fn template_index(&self, template_id: &str) -> Option<usize> {
        self.template_ids.iter().position(|t| t == template_id)
    }

    pub fn model_index(&self, model_id: &str) -> Option<usize> {
        self.model_ids.iter().position(|m| m == model_id)
    }

    pub fn column_by_id(&self, model_id: &str) -> Result<Vec<f64>, MatrixError> {
        let idx = self
            .model_index(model_id)
            .ok_or_else(|| MatrixError::UnknownLabel {
                axis: "model",
                label: model_id.to_string(),
            })?;
        Ok(self.column(idx))
    }
}
