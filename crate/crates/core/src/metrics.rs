//! Error metrics and comparison tables.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::dataset::{ScenarioMeta, TimeSeriesDataset};
use crate::error::{Error, Result};
use crate::regressors::{ModelKind, RegressionModel};
use crate::thermal::Mode;

fn check_lengths(actual: &[f64], predicted: &[f64]) -> Result<()> {
    if actual.len() != predicted.len() {
        return Err(Error::LengthMismatch {
            actual: actual.len(),
            predicted: predicted.len(),
        });
    }
    if actual.is_empty() {
        return Err(Error::DegenerateInput("no samples to score".into()));
    }
    Ok(())
}

/// Coefficient of determination 1 − SS_res / SS_tot. Negative for models worse
/// than the mean; nothing is clamped.
pub fn r2(actual: &[f64], predicted: &[f64]) -> Result<f64> {
    check_lengths(actual, predicted)?;
    if actual.len() < 2 {
        return Err(Error::DegenerateInput("R² needs at least 2 samples".into()));
    }
    let mean = actual.iter().sum::<f64>() / actual.len() as f64;
    let ss_tot: f64 = actual.iter().map(|a| (a - mean).powi(2)).sum();
    if ss_tot == 0.0 {
        return Err(Error::ConstantActual);
    }
    let ss_res: f64 = actual
        .iter()
        .zip(predicted)
        .map(|(a, p)| (a - p).powi(2))
        .sum();
    Ok(1.0 - ss_res / ss_tot)
}

pub fn mae(actual: &[f64], predicted: &[f64]) -> Result<f64> {
    check_lengths(actual, predicted)?;
    let sum: f64 = actual
        .iter()
        .zip(predicted)
        .map(|(a, p)| (a - p).abs())
        .sum();
    Ok(sum / actual.len() as f64)
}

pub fn rmse(actual: &[f64], predicted: &[f64]) -> Result<f64> {
    check_lengths(actual, predicted)?;
    let sum: f64 = actual
        .iter()
        .zip(predicted)
        .map(|(a, p)| (a - p).powi(2))
        .sum();
    Ok((sum / actual.len() as f64).sqrt())
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RelativeError {
    /// (ER − PR) / ER × 100
    pub percent: f64,
    pub magnitude: f64,
}

/// Relative percentage error of a prediction `pr` against a reference `er`.
pub fn relative_percent_error(er: f64, pr: f64) -> Result<RelativeError> {
    if er == 0.0 {
        return Err(Error::ZeroReference);
    }
    let percent = (er - pr) / er * 100.0;
    Ok(RelativeError {
        percent,
        magnitude: percent.abs(),
    })
}

/// Held-out performance of one model on one scenario.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub model_kind: ModelKind,
    pub scenario: ScenarioMeta,
    /// Which partition was scored, e.g. "test" or "train".
    pub partition: String,
    pub n: usize,
    pub r2: f64,
    pub mae: f64,
    pub rmse: f64,
    pub mean_actual: f64,
    pub mean_predicted: f64,
    /// Relative error between the mean actual and mean predicted temperatures.
    pub relative_error: RelativeError,
}

pub fn evaluate(model: &RegressionModel, test: &TimeSeriesDataset) -> Result<MetricsReport> {
    evaluate_partition(model, test, "test")
}

pub fn evaluate_partition(
    model: &RegressionModel,
    data: &TimeSeriesDataset,
    partition: &str,
) -> Result<MetricsReport> {
    if data.is_empty() {
        return Err(Error::DegenerateInput("evaluation set is empty".into()));
    }
    let actual = data.temperatures();
    let predicted = model.predict_many(&data.times());
    let n = actual.len();
    let mean_actual = actual.iter().sum::<f64>() / n as f64;
    let mean_predicted = predicted.iter().sum::<f64>() / n as f64;
    Ok(MetricsReport {
        model_kind: model.kind(),
        scenario: data.meta().clone(),
        partition: partition.to_string(),
        n,
        r2: r2(&actual, &predicted)?,
        mae: mae(&actual, &predicted)?,
        rmse: rmse(&actual, &predicted)?,
        mean_actual,
        mean_predicted,
        relative_error: relative_percent_error(mean_actual, mean_predicted)?,
    })
}

/// Row key of a comparison table: current (in milliamps, for ordering) and mode.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord)]
struct RowKey {
    current_ma: i64,
    mode: Mode,
}

/// Comparison grid with one row per (current, mode) and R²/MAE/RMSE columns
/// per model kind.
#[derive(Clone, Debug, Default)]
pub struct ComparisonTable {
    rows: BTreeMap<RowKey, BTreeMap<ModelKind, MetricsReport>>,
    pub warnings: Vec<String>,
}

impl ComparisonTable {
    pub fn from_reports<'a>(reports: impl IntoIterator<Item = &'a MetricsReport>) -> Self {
        let mut table = ComparisonTable::default();
        for r in reports {
            let key = RowKey {
                current_ma: (r.scenario.current_a * 1000.0).round() as i64,
                mode: r.scenario.mode,
            };
            let row = table.rows.entry(key).or_default();
            if row.insert(r.model_kind, r.clone()).is_some() {
                table.warnings.push(format!(
                    "duplicate {} report for {} A {}; keeping the last one",
                    r.model_kind, r.scenario.current_a, r.scenario.mode
                ));
            }
        }
        for (key, row) in &table.rows {
            for kind in ModelKind::ALL {
                if !row.contains_key(&kind) {
                    table.warnings.push(format!(
                        "missing {kind} report for {} A {}",
                        key.current_ma as f64 / 1000.0,
                        key.mode
                    ));
                }
            }
        }
        table
    }

    pub fn row_count(&self) -> usize {
        self.rows.len()
    }

    /// Number of filled metric cells.
    pub fn filled_cells(&self) -> usize {
        self.rows.values().map(|r| 3 * r.len()).sum()
    }

    /// CSV rendering: `current_a,mode` then R²/MAE/RMSE for LR, SVR and GBT.
    /// Missing cells are left blank.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("current_a,mode");
        for kind in ModelKind::ALL {
            let l = kind.as_str();
            let _ = write!(out, ",{l}_r2,{l}_mae,{l}_rmse");
        }
        out.push('\n');
        for (key, row) in &self.rows {
            let _ = write!(out, "{},{}", fmt_current(key.current_ma), key.mode);
            for kind in ModelKind::ALL {
                match row.get(&kind) {
                    Some(r) => {
                        let _ = write!(out, ",{:.4},{:.4},{:.4}", r.r2, r.mae, r.rmse);
                    }
                    None => out.push_str(",,,"),
                }
            }
            out.push('\n');
        }
        out
    }

    /// Mean-temperature comparison for one model kind: experimental mean,
    /// predicted mean and relative percentage error per row.
    pub fn mean_comparison_csv(&self, kind: ModelKind) -> String {
        let mut out =
            String::from("current_a,mode,mean_actual_c,mean_predicted_c,relative_error_pct\n");
        for (key, row) in &self.rows {
            if let Some(r) = row.get(&kind) {
                let _ = writeln!(
                    out,
                    "{},{},{:.4},{:.4},{:.4}",
                    fmt_current(key.current_ma),
                    key.mode,
                    r.mean_actual,
                    r.mean_predicted,
                    r.relative_error.magnitude
                );
            }
        }
        out
    }
}

fn fmt_current(current_ma: i64) -> String {
    format!("{:?}", current_ma as f64 / 1000.0)
}
