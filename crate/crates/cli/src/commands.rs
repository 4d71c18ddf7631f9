use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{anyhow, Context};
use sha2::{Digest, Sha256};

use vrfbml::dataset::{load_csv_raw, preprocess, split, synthesize, SynthOptions};
use vrfbml::metrics::{evaluate_partition, ComparisonTable, MetricsReport};
use vrfbml::regressors::{
    fit, load_stored, save_stored, FitReport, ModelKind, SplitProvenance, StoredModel,
};
use vrfbml::scenario::Scenario;
use vrfbml::thermal::{simulate_cycle, simulate_sampled};
use vrfbml::{SplitDataset, TimeSeriesDataset};

use crate::config::RunConfig;

pub const EXIT_CONFIG: u8 = 2;
pub const EXIT_SIMULATION: u8 = 3;
pub const EXIT_DATA: u8 = 4;
pub const EXIT_TRAINING: u8 = 5;

/// An error tagged with the process exit code it maps to.
#[derive(Debug)]
pub struct Failure {
    pub code: u8,
    pub error: anyhow::Error,
}

pub type CmdResult<T = ()> = std::result::Result<T, Failure>;

pub trait WithCode<T> {
    fn code(self, code: u8) -> CmdResult<T>;
}

impl<T, E: Into<anyhow::Error>> WithCode<T> for std::result::Result<T, E> {
    fn code(self, code: u8) -> CmdResult<T> {
        self.map_err(|e| Failure {
            code,
            error: e.into(),
        })
    }
}

macro_rules! log {
    ($($arg:tt)*) => { eprintln!("vrfbml: {}", format!($($arg)*)) };
}

fn ensure_dir(dir: &Path) -> CmdResult {
    fs::create_dir_all(dir)
        .with_context(|| format!("cannot create output directory {}", dir.display()))
        .code(EXIT_CONFIG)
}

fn write_artifact(path: &Path, contents: &str, code: u8) -> CmdResult {
    fs::write(path, contents)
        .with_context(|| format!("cannot write {}", path.display()))
        .code(code)?;
    log!("wrote {}", path.display());
    Ok(())
}

fn selected<'a>(config: &'a RunConfig, id: Option<&str>) -> CmdResult<Vec<&'a Scenario>> {
    match id {
        Some(id) => Ok(vec![config.scenario(id).code(EXIT_CONFIG)?]),
        None if config.scenarios.is_empty() => {
            Err(anyhow!("no scenarios configured")).code(EXIT_CONFIG)
        }
        None => Ok(config.scenarios.iter().collect()),
    }
}

fn calibrated(
    config: &RunConfig,
    scenario: &Scenario,
) -> CmdResult<(vrfbml::VrfbParams, vrfbml::OperatingProfile)> {
    let profile = scenario.profile(&config.params).code(EXIT_CONFIG)?;
    for w in profile.rating_warnings() {
        log!("warning: {}: {w}", scenario.id);
    }
    let (params, r) = scenario
        .calibrated_params(&config.params, config.simulation.dt)
        .with_context(|| format!("calibrating scenario `{}`", scenario.id))
        .code(EXIT_SIMULATION)?;
    if let Some(r) = r {
        log!(
            "{}: calibrated {} resistance {r:.6} ohm",
            scenario.id,
            scenario.mode
        );
    }
    Ok((params, profile))
}

/// Noise-free simulation of each selected scenario.
pub fn simulate(config: &RunConfig, scenario: Option<&str>, out: &Path) -> CmdResult<Vec<PathBuf>> {
    ensure_dir(out)?;
    let mut written = Vec::new();
    for s in selected(config, scenario)? {
        let (params, profile) = calibrated(config, s)?;
        // statistics over every integration step; the file keeps every n-th sample
        let full = simulate_cycle(&params, &profile, config.simulation.dt)
            .code(EXIT_SIMULATION)?
            .dataset;
        let data = simulate_sampled(
            &params,
            &profile,
            config.simulation.dt,
            config.simulation.sample_every,
        )
        .code(EXIT_SIMULATION)?
        .dataset;
        let mut summary = format!(
            "{}: mean {:.3} °C, max {:.3} °C over {:.0} s",
            s.id,
            full.mean_temperature(),
            full.max_temperature(),
            profile.duration
        );
        if let (Some(mean), Some(max)) = (s.target_mean_c, s.reference_max_c) {
            summary.push_str(&format!(" (reference mean {mean:.3} °C, max {max:.4} °C)"));
        }
        println!("{summary}");
        let path = out.join(format!("{}.sim.csv", s.id));
        write_artifact(
            &path,
            &data.to_csv_string().code(EXIT_SIMULATION)?,
            EXIT_SIMULATION,
        )?;
        written.push(path);
    }
    Ok(written)
}

/// Simulation plus seeded measurement noise.
pub fn synth(config: &RunConfig, scenario: Option<&str>, out: &Path) -> CmdResult<Vec<PathBuf>> {
    ensure_dir(out)?;
    let mut written = Vec::new();
    for (i, s) in selected(config, scenario)?.into_iter().enumerate() {
        let (params, profile) = calibrated(config, s)?;
        // each scenario gets its own stream, offset by its position in the config
        let position = config
            .scenarios
            .iter()
            .position(|c| c.id == s.id)
            .unwrap_or(i) as u64;
        let options = SynthOptions {
            noise_sigma: config.noise.sigma,
            seed: config.noise.seed.wrapping_add(position),
            dt: config.simulation.dt,
            sample_every: config.simulation.sample_every,
        };
        let data = synthesize(&params, &profile, &options).code(EXIT_SIMULATION)?;
        println!(
            "{}: {} samples, mean {:.3} °C, max {:.3} °C, seed {}",
            s.id,
            data.len(),
            data.mean_temperature(),
            data.max_temperature(),
            options.seed
        );
        let path = out.join(format!("{}.csv", s.id));
        write_artifact(
            &path,
            &data.to_csv_string().code(EXIT_SIMULATION)?,
            EXIT_SIMULATION,
        )?;
        written.push(path);
    }
    Ok(written)
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes)
        .iter()
        .map(|b| format!("{b:02x}"))
        .collect()
}

struct LoadedData {
    hash: String,
    n_samples: usize,
    dataset: TimeSeriesDataset,
}

fn load_dataset(config: &RunConfig, path: &Path) -> CmdResult<LoadedData> {
    let bytes = fs::read(path)
        .with_context(|| format!("cannot read dataset {}", path.display()))
        .code(EXIT_DATA)?;
    let raw = load_csv_raw(path).code(EXIT_DATA)?;
    let cleaned = preprocess(&raw, &config.preprocess).code(EXIT_DATA)?;
    if cleaned.dropped_non_finite + cleaned.dropped_duplicates > 0 {
        log!(
            "{}: dropped {} non-finite and {} duplicate rows",
            path.display(),
            cleaned.dropped_non_finite,
            cleaned.dropped_duplicates
        );
    }
    Ok(LoadedData {
        hash: sha256_hex(&bytes),
        n_samples: cleaned.dataset.len(),
        dataset: cleaned.dataset,
    })
}

fn model_stem(dataset: &Path) -> String {
    let name = dataset
        .file_name()
        .map(|n| n.to_string_lossy().into_owned())
        .unwrap_or_default();
    name.strip_suffix(".csv").unwrap_or(&name).to_string()
}

/// Preprocess, split and fit; writes `<stem>.<kind>.json` and a training log
/// `<stem>.<kind>.train.json` for every requested kind.
pub fn train(
    config: &RunConfig,
    dataset: &Path,
    kinds: &[ModelKind],
    out: &Path,
) -> CmdResult<Vec<PathBuf>> {
    ensure_dir(out)?;
    let loaded = load_dataset(config, dataset)?;
    let parts = split(
        &loaded.dataset,
        config.split.ratio,
        config.split.seed,
        config.split.strategy,
    )
    .code(EXIT_DATA)?;
    log!(
        "{}: {} samples -> {} train / {} test ({} split, seed {})",
        dataset.display(),
        loaded.n_samples,
        parts.train.len(),
        parts.test.len(),
        parts.strategy,
        parts.seed
    );
    let provenance = SplitProvenance {
        dataset_hash: loaded.hash.clone(),
        n_samples: loaded.n_samples,
        ratio: config.split.ratio,
        seed: config.split.seed,
        strategy: config.split.strategy,
    };

    let fits: Vec<_> = std::thread::scope(|scope| {
        let handles: Vec<_> = kinds
            .iter()
            .map(|&kind| {
                let hyper = config.hyperparameters(kind);
                let train = &parts.train;
                scope.spawn(move || (kind, fit(train, &hyper)))
            })
            .collect();
        handles
            .into_iter()
            .map(|h| h.join().expect("training thread panicked"))
            .collect()
    });

    let stem = model_stem(dataset);
    let mut written = Vec::new();
    for (kind, result) in fits {
        let (model, report) = result
            .with_context(|| format!("training {kind} on {}", dataset.display()))
            .code(EXIT_TRAINING)?;
        log_fit(kind, &report);
        let train_metrics =
            evaluate_partition(&model, &parts.train, "train").code(EXIT_TRAINING)?;
        log!(
            "{kind}: train R2 {:.4}, MAE {:.4}, RMSE {:.4}",
            train_metrics.r2,
            train_metrics.mae,
            train_metrics.rmse
        );
        let stored = StoredModel {
            model,
            provenance: Some(provenance.clone()),
        };
        let path = out.join(format!("{stem}.{kind}.json"));
        save_stored(&stored, &path)
            .with_context(|| format!("cannot write {}", path.display()))
            .code(EXIT_TRAINING)?;
        log!("wrote {}", path.display());
        let log_path = out.join(format!("{stem}.{kind}.train.json"));
        let log_json = serde_json::json!({
            "metrics": train_metrics,
            "svr_converged": report.converged,
            "svr_kkt_violation": report.violation,
            "svr_iterations": report.iterations,
            "gbt_train_rmse": report.train_rmse_curve,
        });
        write_artifact(&log_path, &pretty(&log_json), EXIT_TRAINING)?;
        written.push(path);
    }
    Ok(written)
}

fn log_fit(kind: ModelKind, report: &FitReport) {
    if let (Some(converged), Some(violation), Some(iters)) =
        (report.converged, report.violation, report.iterations)
    {
        if converged {
            log!("{kind}: converged after {iters} iterations (KKT violation {violation:.2e})");
        } else {
            log!("{kind}: warning: stopped after {iters} iterations with KKT violation {violation:.2e}");
        }
    }
    if let (Some(first), Some(last)) = (
        report.train_rmse_curve.first(),
        report.train_rmse_curve.last(),
    ) {
        log!(
            "{kind}: training RMSE {first:.4} -> {last:.4} over {} rounds",
            report.train_rmse_curve.len() - 1
        );
    }
}

fn pretty<T: serde::Serialize>(value: &T) -> String {
    let mut text = serde_json::to_string_pretty(value).expect("serializable value");
    text.push('\n');
    text
}

/// Rebuilds the split recorded in the model file and scores one partition.
pub fn evaluate(
    config: &RunConfig,
    model_path: &Path,
    dataset: &Path,
    partition: &str,
    out: &Path,
) -> CmdResult<(PathBuf, MetricsReport)> {
    ensure_dir(out)?;
    let stored = load_stored(model_path)
        .with_context(|| format!("cannot load model {}", model_path.display()))
        .code(EXIT_DATA)?;
    let loaded = load_dataset(config, dataset)?;
    let parts = match &stored.provenance {
        Some(p) => {
            if p.dataset_hash != loaded.hash || p.n_samples != loaded.n_samples {
                return Err(anyhow!(
                    "split provenance mismatch: {} was trained on dataset {} ({} samples) but {} hashes to {} ({} samples)",
                    model_path.display(),
                    p.dataset_hash,
                    p.n_samples,
                    dataset.display(),
                    loaded.hash,
                    loaded.n_samples
                ))
                .code(EXIT_DATA);
            }
            split(&loaded.dataset, p.ratio, p.seed, p.strategy).code(EXIT_DATA)?
        }
        None => {
            log!(
                "warning: {} has no split provenance; using the configured split",
                model_path.display()
            );
            split(
                &loaded.dataset,
                config.split.ratio,
                config.split.seed,
                config.split.strategy,
            )
            .code(EXIT_DATA)?
        }
    };
    let SplitDataset { train, test, .. } = parts;
    let data = match partition {
        "test" => test,
        "train" => train,
        other => return Err(anyhow!("unknown partition `{other}`")).code(EXIT_CONFIG),
    };
    let report = evaluate_partition(&stored.model, &data, partition).code(EXIT_DATA)?;
    println!(
        "{} {} A {} ({}): R2 {:.4}  MAE {:.4}  RMSE {:.4}  mean {:.4} vs {:.4} ({:.4} %)",
        report.model_kind.label(),
        report.scenario.current_a,
        report.scenario.mode,
        partition,
        report.r2,
        report.mae,
        report.rmse,
        report.mean_actual,
        report.mean_predicted,
        report.relative_error.magnitude
    );
    if report.r2 < 0.0 {
        log!(
            "warning: negative R2 ({:.4}): the model is worse than predicting the mean",
            report.r2
        );
    }
    let stem = model_path
        .file_name()
        .map(|n| n.to_string_lossy().into_owned())
        .unwrap_or_default();
    let stem = stem.strip_suffix(".json").unwrap_or(&stem);
    let suffix = if partition == "test" {
        String::new()
    } else {
        format!(".{partition}")
    };
    let path = out.join(format!("{stem}{suffix}.report.json"));
    write_artifact(&path, &pretty(&report), EXIT_DATA)?;
    Ok((path, report))
}

/// Merges report files into the comparison grid.
pub fn report(reports: &[PathBuf], means: bool, out: &Path) -> CmdResult<PathBuf> {
    if reports.is_empty() {
        return Err(anyhow!("report needs at least one report file")).code(EXIT_CONFIG);
    }
    ensure_dir(out)?;
    let mut parsed = Vec::new();
    for path in reports {
        let text = fs::read_to_string(path)
            .with_context(|| format!("cannot read report {}", path.display()))
            .code(EXIT_DATA)?;
        let r: MetricsReport = serde_json::from_str(&text)
            .with_context(|| format!("invalid report {}", path.display()))
            .code(EXIT_DATA)?;
        parsed.push(r);
    }
    let table = ComparisonTable::from_reports(&parsed);
    for w in &table.warnings {
        log!("warning: {w}");
    }
    let mut text = table.to_csv();
    if means {
        for kind in ModelKind::ALL {
            let section = table.mean_comparison_csv(kind);
            if section.lines().count() > 1 {
                text.push_str(&format!("\n# mean temperature, {}\n", kind.label()));
                text.push_str(&section);
            }
        }
    }
    print!("{text}");
    let path = out.join("comparison.csv");
    write_artifact(&path, &text, EXIT_DATA)?;
    Ok(path)
}
