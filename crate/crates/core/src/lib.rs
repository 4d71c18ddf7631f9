//! Vanadium redox flow battery (VRFB) electrolyte temperature simulation and
//! from-scratch regression models for predicting the temperature time series.
//!
//! The crate is organised around the pipeline it supports:
//!
//! - [`thermal`]: lumped stack/tank energy balance, Nernst open-circuit voltage
//!   and resistance calibration.
//! - [`dataset`]: time-series datasets, the CSV format, cleaning, train/test
//!   splitting and seeded synthetic data.
//! - [`regressors`]: ordinary least squares, ε-SVR and second-order gradient
//!   boosted trees behind one fit/predict interface, plus model files.
//! - [`metrics`]: R², MAE, RMSE, relative percentage error and comparison tables.

pub mod dataset;
pub mod error;
pub mod metrics;
pub mod regressors;
pub mod scenario;
pub mod thermal;

pub use dataset::{
    load_csv, load_csv_raw, preprocess, split, synthesize, write_csv, PreprocessConfig,
    Preprocessed, Sample, ScenarioMeta, Source, SplitDataset, SplitStrategy, SynthOptions,
    TimeSeriesDataset,
};
pub use error::{Error, Result};
pub use metrics::{
    evaluate, mae, r2, relative_percent_error, rmse, ComparisonTable, MetricsReport,
};
pub use regressors::{ModelKind, RegressionModel};
pub use scenario::{reference_scenarios, Scenario};
pub use thermal::{
    calibrate_resistance, closed_form_temp, nernst_ocv, ode_rhs, simulate_cycle, Mode,
    OperatingProfile, ThermalState, VrfbParams,
};
