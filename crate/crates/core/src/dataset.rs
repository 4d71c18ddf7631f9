//! Temperature time series: representation, the `vrfb-dataset v1` CSV format,
//! cleaning, train/test splitting and seeded synthetic data.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::thermal::{simulate_sampled, Mode, OperatingProfile, VrfbParams};

pub const CSV_MAGIC: &str = "# vrfb-dataset v1";
pub const CSV_COLUMNS: &str = "time_s,temperature_c";

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Sample {
    pub time_s: f64,
    pub temperature_c: f64,
}

impl Sample {
    pub fn new(time_s: f64, temperature_c: f64) -> Self {
        Self {
            time_s,
            temperature_c,
        }
    }

    fn is_finite(&self) -> bool {
        self.time_s.is_finite() && self.temperature_c.is_finite()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Source {
    Experimental,
    Synthetic,
}

impl Source {
    pub fn as_str(self) -> &'static str {
        match self {
            Source::Experimental => "experimental",
            Source::Synthetic => "synthetic",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScenarioMeta {
    pub current_a: f64,
    pub mode: Mode,
    pub flow_l_min: f64,
    pub ambient_c: f64,
    pub source: Source,
    pub seed: Option<u64>,
}

impl ScenarioMeta {
    pub fn validate(&self) -> Result<()> {
        if !(self.current_a.is_finite() && self.current_a >= 0.0) {
            return Err(Error::InvalidDataset(format!(
                "current_a must be >= 0, got {}",
                self.current_a
            )));
        }
        if !(self.flow_l_min.is_finite() && self.flow_l_min > 0.0) {
            return Err(Error::InvalidDataset(format!(
                "flow_l_min must be > 0, got {}",
                self.flow_l_min
            )));
        }
        if !self.ambient_c.is_finite() {
            return Err(Error::InvalidDataset("ambient_c must be finite".into()));
        }
        Ok(())
    }

    fn header_line(&self) -> String {
        let seed = self
            .seed
            .map_or_else(|| "none".to_string(), |s| s.to_string());
        format!(
            "# current_a={:?} mode={} flow_l_min={:?} ambient_c={:?} source={} seed={}",
            self.current_a,
            self.mode,
            self.flow_l_min,
            self.ambient_c,
            self.source.as_str(),
            seed
        )
    }

    fn parse_header(line: &str) -> std::result::Result<Self, String> {
        let body = line
            .strip_prefix('#')
            .ok_or_else(|| "metadata line must start with `#`".to_string())?;
        let mut current_a = None;
        let mut mode = None;
        let mut flow_l_min = None;
        let mut ambient_c = None;
        let mut source = None;
        let mut seed = None;
        for token in body.split_whitespace() {
            let (key, value) = token
                .split_once('=')
                .ok_or_else(|| format!("malformed metadata field `{token}`"))?;
            let float = |v: &str| {
                v.parse::<f64>()
                    .map_err(|_| format!("invalid number `{v}` for `{key}`"))
            };
            match key {
                "current_a" => current_a = Some(float(value)?),
                "mode" => mode = Some(value.parse::<Mode>()?),
                "flow_l_min" => flow_l_min = Some(float(value)?),
                "ambient_c" => ambient_c = Some(float(value)?),
                "source" => {
                    source = Some(match value {
                        "experimental" => Source::Experimental,
                        "synthetic" => Source::Synthetic,
                        other => return Err(format!("unknown source `{other}`")),
                    })
                }
                "seed" => {
                    seed = Some(match value {
                        "none" => None,
                        v => Some(
                            v.parse::<u64>()
                                .map_err(|_| format!("invalid seed `{v}`"))?,
                        ),
                    })
                }
                other => return Err(format!("unknown metadata field `{other}`")),
            }
        }
        let missing = |name: &str| format!("metadata field `{name}` is missing");
        Ok(Self {
            current_a: current_a.ok_or_else(|| missing("current_a"))?,
            mode: mode.ok_or_else(|| missing("mode"))?,
            flow_l_min: flow_l_min.ok_or_else(|| missing("flow_l_min"))?,
            ambient_c: ambient_c.ok_or_else(|| missing("ambient_c"))?,
            source: source.ok_or_else(|| missing("source"))?,
            seed: seed.ok_or_else(|| missing("seed"))?,
        })
    }
}

/// Ordered (time, stack temperature) samples of one scenario.
///
/// Datasets built with [`TimeSeriesDataset::new`] are nonempty, finite and
/// strictly increasing in time. [`TimeSeriesDataset::from_raw`] skips those
/// checks and is the input type of [`preprocess`].
#[derive(Clone, Debug, PartialEq)]
pub struct TimeSeriesDataset {
    samples: Vec<Sample>,
    meta: ScenarioMeta,
}

impl TimeSeriesDataset {
    pub fn new(samples: Vec<Sample>, meta: ScenarioMeta) -> Result<Self> {
        let dataset = Self { samples, meta };
        dataset.validate()?;
        Ok(dataset)
    }

    pub fn from_raw(samples: Vec<Sample>, meta: ScenarioMeta) -> Self {
        Self { samples, meta }
    }

    pub fn validate(&self) -> Result<()> {
        self.meta.validate()?;
        if self.samples.is_empty() {
            return Err(Error::InvalidDataset("dataset has no samples".into()));
        }
        if let Some(i) = self.samples.iter().position(|s| !s.is_finite()) {
            return Err(Error::InvalidDataset(format!("sample {i} is not finite")));
        }
        if let Some(i) = self
            .samples
            .windows(2)
            .position(|w| w[1].time_s <= w[0].time_s)
        {
            return Err(Error::InvalidDataset(format!(
                "time is not strictly increasing at sample {}",
                i + 1
            )));
        }
        Ok(())
    }

    pub fn samples(&self) -> &[Sample] {
        &self.samples
    }

    pub fn meta(&self) -> &ScenarioMeta {
        &self.meta
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn times(&self) -> Vec<f64> {
        self.samples.iter().map(|s| s.time_s).collect()
    }

    pub fn temperatures(&self) -> Vec<f64> {
        self.samples.iter().map(|s| s.temperature_c).collect()
    }

    pub fn mean_temperature(&self) -> f64 {
        self.samples.iter().map(|s| s.temperature_c).sum::<f64>() / self.samples.len() as f64
    }

    pub fn max_temperature(&self) -> f64 {
        self.samples
            .iter()
            .map(|s| s.temperature_c)
            .fold(f64::NEG_INFINITY, f64::max)
    }

    /// Renders the dataset in the `vrfb-dataset v1` CSV format.
    pub fn to_csv_string(&self) -> Result<String> {
        self.validate()?;
        let mut out = String::with_capacity(32 * (self.samples.len() + 3));
        out.push_str(CSV_MAGIC);
        out.push('\n');
        out.push_str(&self.meta.header_line());
        out.push('\n');
        out.push_str(CSV_COLUMNS);
        out.push('\n');
        for s in &self.samples {
            // `{:?}` is the shortest representation that parses back to the same f64
            let _ = writeln!(out, "{:?},{:?}", s.time_s, s.temperature_c);
        }
        Ok(out)
    }

    /// Parses CSV text. With `strict`, unsorted or duplicate timestamps are
    /// rejected with the offending line number.
    pub fn parse_csv(text: &str, path: &Path, strict: bool) -> Result<Self> {
        let schema = |message: String| Error::Schema {
            path: path.to_path_buf(),
            message,
        };
        let mut lines = text.lines().enumerate();
        match lines.next() {
            Some((_, l)) if l.trim_end() == CSV_MAGIC => {}
            _ => return Err(schema(format!("first line must be `{CSV_MAGIC}`"))),
        }
        let meta = match lines.next() {
            Some((i, l)) => {
                ScenarioMeta::parse_header(l.trim_end()).map_err(|message| Error::Parse {
                    path: path.to_path_buf(),
                    line: i + 1,
                    message,
                })?
            }
            None => return Err(schema("metadata line is missing".into())),
        };
        meta.validate().map_err(|e| schema(e.to_string()))?;
        match lines.next() {
            Some((_, l)) if l.trim_end() == CSV_COLUMNS => {}
            Some((_, l)) => {
                return Err(schema(format!(
                    "expected columns `{CSV_COLUMNS}`, found `{}`",
                    l.trim_end()
                )))
            }
            None => return Err(schema("column header is missing".into())),
        }

        let mut samples = Vec::new();
        for (i, line) in lines {
            let line_no = i + 1;
            let line = line.trim_end_matches('\r');
            if line.trim().is_empty() {
                continue;
            }
            let parse_err = |message: String| Error::Parse {
                path: path.to_path_buf(),
                line: line_no,
                message,
            };
            let mut fields = line.split(',');
            let (time, temp) = match (fields.next(), fields.next(), fields.next()) {
                (Some(a), Some(b), None) => (a.trim(), b.trim()),
                _ => return Err(parse_err(format!("expected 2 fields in `{line}`"))),
            };
            let time_s: f64 = time
                .parse()
                .map_err(|_| parse_err(format!("invalid time `{time}`")))?;
            let temperature_c: f64 = temp
                .parse()
                .map_err(|_| parse_err(format!("invalid temperature `{temp}`")))?;
            let sample = Sample::new(time_s, temperature_c);
            if !sample.is_finite() {
                return Err(Error::NonFinite {
                    path: path.to_path_buf(),
                    line: line_no,
                });
            }
            if strict {
                if let Some(prev) = samples.last() {
                    let prev: &Sample = prev;
                    if time_s <= prev.time_s {
                        return Err(parse_err(format!(
                            "time {time_s} does not increase (previous {})",
                            prev.time_s
                        )));
                    }
                }
            }
            samples.push(sample);
        }
        if samples.is_empty() {
            return Err(schema("dataset has no samples".into()));
        }
        Ok(Self { samples, meta })
    }
}

/// Reads a `vrfb-dataset v1` CSV file; timestamps must be strictly increasing.
pub fn load_csv(path: impl AsRef<Path>) -> Result<TimeSeriesDataset> {
    let path = path.as_ref();
    TimeSeriesDataset::parse_csv(&fs::read_to_string(path)?, path, true)
}

/// Reads a CSV file without the ordering check, for logs that still need [`preprocess`].
pub fn load_csv_raw(path: impl AsRef<Path>) -> Result<TimeSeriesDataset> {
    let path = path.as_ref();
    TimeSeriesDataset::parse_csv(&fs::read_to_string(path)?, path, false)
}

pub fn write_csv(dataset: &TimeSeriesDataset, path: impl AsRef<Path>) -> Result<()> {
    fs::write(path, dataset.to_csv_string()?)?;
    Ok(())
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PreprocessConfig {
    /// Shift time so that the first retained sample sits at t = 0.
    pub rebase_time: bool,
}

#[derive(Clone, Debug)]
pub struct Preprocessed {
    pub dataset: TimeSeriesDataset,
    pub dropped_non_finite: usize,
    pub dropped_duplicates: usize,
}

/// Drops non-finite rows, sorts by time and keeps the first row of every
/// duplicated timestamp (first in input order).
pub fn preprocess(dataset: &TimeSeriesDataset, config: &PreprocessConfig) -> Result<Preprocessed> {
    let mut samples: Vec<Sample> = dataset
        .samples
        .iter()
        .copied()
        .filter(Sample::is_finite)
        .collect();
    let dropped_non_finite = dataset.samples.len() - samples.len();
    // stable: equal timestamps keep their input order
    samples.sort_by(|a, b| a.time_s.total_cmp(&b.time_s));
    let before = samples.len();
    samples.dedup_by(|later, earlier| later.time_s == earlier.time_s);
    let dropped_duplicates = before - samples.len();

    if samples.is_empty() {
        return Err(Error::EmptyAfterCleaning {
            dropped: dropped_non_finite,
        });
    }
    if config.rebase_time {
        let t0 = samples[0].time_s;
        for s in &mut samples {
            s.time_s -= t0;
        }
    }
    Ok(Preprocessed {
        dataset: TimeSeriesDataset::new(samples, dataset.meta.clone())?,
        dropped_non_finite,
        dropped_duplicates,
    })
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SplitStrategy {
    #[default]
    Shuffled,
    Chronological,
}

impl std::fmt::Display for SplitStrategy {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            SplitStrategy::Shuffled => "shuffled",
            SplitStrategy::Chronological => "chronological",
        })
    }
}

#[derive(Clone, Debug)]
pub struct SplitDataset {
    pub train: TimeSeriesDataset,
    pub test: TimeSeriesDataset,
    pub seed: u64,
    pub ratio: f64,
    pub strategy: SplitStrategy,
}

/// Size of the training partition: ⌊ratio · n⌋.
pub fn train_size(n: usize, ratio: f64) -> usize {
    // the small offset keeps products such as 0.29 · 100 from rounding below the integer
    ((ratio * n as f64) + 1e-9).floor() as usize
}

/// Partitions a dataset into train and test sets. Both sides keep time order.
pub fn split(
    dataset: &TimeSeriesDataset,
    ratio: f64,
    seed: u64,
    strategy: SplitStrategy,
) -> Result<SplitDataset> {
    if !(ratio > 0.0 && ratio < 1.0) {
        return Err(Error::param(
            "ratio",
            format!("must lie in (0, 1), got {ratio}"),
        ));
    }
    let n = dataset.len();
    let n_train = train_size(n, ratio).min(n);
    if n_train == 0 || n_train == n {
        return Err(Error::DegenerateSplit {
            train: n_train,
            test: n - n_train,
        });
    }

    let mut order: Vec<usize> = (0..n).collect();
    if strategy == SplitStrategy::Shuffled {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        order.shuffle(&mut rng);
    }
    let (train_idx, test_idx) = order.split_at_mut(n_train);
    train_idx.sort_unstable();
    test_idx.sort_unstable();

    let take = |idx: &[usize]| {
        TimeSeriesDataset::from_raw(
            idx.iter().map(|&i| dataset.samples[i]).collect(),
            dataset.meta.clone(),
        )
    };
    Ok(SplitDataset {
        train: take(train_idx),
        test: take(test_idx),
        seed,
        ratio,
        strategy,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SynthOptions {
    /// Standard deviation of the additive Gaussian measurement noise, °C.
    pub noise_sigma: f64,
    pub seed: u64,
    /// Integration step, s.
    pub dt: f64,
    /// Keep every n-th integration step as a sample.
    pub sample_every: usize,
}

impl Default for SynthOptions {
    fn default() -> Self {
        Self {
            noise_sigma: 0.15,
            seed: 42,
            dt: 1.0,
            sample_every: 1,
        }
    }
}

/// Simulated stack temperatures plus i.i.d. Gaussian noise from a seeded generator.
pub fn synthesize(
    params: &VrfbParams,
    profile: &OperatingProfile,
    options: &SynthOptions,
) -> Result<TimeSeriesDataset> {
    if !(options.noise_sigma.is_finite() && options.noise_sigma >= 0.0) {
        return Err(Error::param("noise_sigma", "must be finite and >= 0"));
    }
    let run = simulate_sampled(params, profile, options.dt, options.sample_every)?;
    let mut samples = run.dataset.samples;
    if options.noise_sigma > 0.0 {
        let noise = Normal::new(0.0, options.noise_sigma)
            .map_err(|e| Error::param("noise_sigma", e.to_string()))?;
        let mut rng = ChaCha8Rng::seed_from_u64(options.seed);
        for s in &mut samples {
            s.temperature_c += noise.sample(&mut rng);
        }
    }
    let meta = ScenarioMeta {
        seed: Some(options.seed),
        source: Source::Synthetic,
        ..run.dataset.meta
    };
    TimeSeriesDataset::new(samples, meta)
}
