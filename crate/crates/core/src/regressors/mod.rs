//! Univariate regressors mapping time (s) to stack temperature (°C).

pub mod gbt;
pub mod linear;
pub mod persist;
pub mod svr;

use serde::{Deserialize, Serialize};

use crate::dataset::TimeSeriesDataset;
use crate::error::Result;

pub use gbt::{fit_gbt, leaf_output, split_gain, GbtModel, GbtParams, RegressionTree};
pub use linear::{fit_lr, LinearModel};
pub use persist::{load_model, load_stored, save_model, save_stored, SplitProvenance, StoredModel};
pub use svr::{fit_svr, Gamma, Kernel, SvrModel, SvrParams};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ModelKind {
    Lr,
    Svr,
    Gbt,
}

impl ModelKind {
    pub const ALL: [ModelKind; 3] = [ModelKind::Lr, ModelKind::Svr, ModelKind::Gbt];

    pub fn as_str(self) -> &'static str {
        match self {
            ModelKind::Lr => "lr",
            ModelKind::Svr => "svr",
            ModelKind::Gbt => "gbt",
        }
    }

    pub fn label(self) -> &'static str {
        match self {
            ModelKind::Lr => "LR",
            ModelKind::Svr => "SVR",
            ModelKind::Gbt => "GBT",
        }
    }
}

impl std::fmt::Display for ModelKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for ModelKind {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "lr" => Ok(ModelKind::Lr),
            "svr" => Ok(ModelKind::Svr),
            "gbt" => Ok(ModelKind::Gbt),
            other => Err(format!(
                "unknown model kind `{other}` (expected lr, svr or gbt)"
            )),
        }
    }
}

/// Hyperparameters for one model kind.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Hyperparameters {
    Lr,
    Svr(SvrParams),
    Gbt(GbtParams),
}

impl Hyperparameters {
    pub fn default_for(kind: ModelKind) -> Self {
        match kind {
            ModelKind::Lr => Hyperparameters::Lr,
            ModelKind::Svr => Hyperparameters::Svr(SvrParams::default()),
            ModelKind::Gbt => Hyperparameters::Gbt(GbtParams::default()),
        }
    }

    pub fn kind(&self) -> ModelKind {
        match self {
            Hyperparameters::Lr => ModelKind::Lr,
            Hyperparameters::Svr(_) => ModelKind::Svr,
            Hyperparameters::Gbt(_) => ModelKind::Gbt,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum RegressionModel {
    Linear(LinearModel),
    Svr(SvrModel),
    Gbt(GbtModel),
}

impl RegressionModel {
    pub fn kind(&self) -> ModelKind {
        match self {
            RegressionModel::Linear(_) => ModelKind::Lr,
            RegressionModel::Svr(_) => ModelKind::Svr,
            RegressionModel::Gbt(_) => ModelKind::Gbt,
        }
    }

    pub fn predict(&self, time_s: f64) -> f64 {
        match self {
            RegressionModel::Linear(m) => m.predict(time_s),
            RegressionModel::Svr(m) => m.predict(time_s),
            RegressionModel::Gbt(m) => m.predict(time_s),
        }
    }

    pub fn predict_many(&self, times: &[f64]) -> Vec<f64> {
        times.iter().map(|&t| self.predict(t)).collect()
    }
}

/// Training diagnostics that accompany a fitted model.
#[derive(Clone, Debug, Default)]
pub struct FitReport {
    /// SVR only: whether the KKT tolerance was reached, and the final violation.
    pub converged: Option<bool>,
    pub violation: Option<f64>,
    pub iterations: Option<usize>,
    /// GBT only: training RMSE before boosting and after each round.
    pub train_rmse_curve: Vec<f64>,
}

pub fn fit(
    train: &TimeSeriesDataset,
    hyper: &Hyperparameters,
) -> Result<(RegressionModel, FitReport)> {
    match hyper {
        Hyperparameters::Lr => Ok((
            RegressionModel::Linear(fit_lr(train)?),
            FitReport::default(),
        )),
        Hyperparameters::Svr(p) => {
            let fit = fit_svr(train, p)?;
            let report = FitReport {
                converged: Some(fit.converged),
                violation: Some(fit.violation),
                iterations: Some(fit.iterations),
                ..FitReport::default()
            };
            Ok((RegressionModel::Svr(fit.model), report))
        }
        Hyperparameters::Gbt(p) => {
            let fit = fit_gbt(train, p)?;
            let report = FitReport {
                train_rmse_curve: fit.train_rmse,
                ..FitReport::default()
            };
            Ok((RegressionModel::Gbt(fit.model), report))
        }
    }
}
