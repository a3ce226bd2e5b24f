//! Experiment runner.
//!
//! An [`ExperimentSpec`] (usually read from TOML) names a stream, the
//! techniques to run, the pipeline configuration and a list of seeds. Every
//! (technique, seed) run writes its own directory:
//!
//! ```text
//! <output_dir>/<technique>-seed<seed>/
//!     steps.jsonl        one record per arrival
//!     metrics.csv        seq, balanced_accuracy, recall, cspd, ceod, warmup_flag
//!     drift.jsonl        drift events
//!     predictions.csv    seq, sensitive, truth, prediction
//!     summary.json       final metrics, drift events and synthesis totals
//! ```
//!
//! Runs are independent and execute in parallel; aggregated outputs are
//! written in (technique, seed) order so repeated runs are byte-identical.

use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::error::ConfigError;
use crate::fbu::{fbu_report, write_plot_csv, FairnessMetric, FbuError, FbuOptions, FbuReport, FbuRun, PerformanceMetric, PredictionLog};
use crate::metrics::ConfusionAccumulator;
use crate::pipeline::{DriftEvent, Fs2Config, Pipeline, RebalanceStatus, StepOutcome, Technique};
use crate::stream::{load_csv, CsvError, CsvSchema, ImbalanceSchedule, Instance, Label, StreamConfig, Subgroup};

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("stream error after seq {seq}: {source}")]
    Stream {
        seq: u64,
        #[source]
        source: CsvError,
    },
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: {source}")]
    Serialize {
        path: PathBuf,
        #[source]
        source: Box<dyn std::error::Error + Send + Sync>,
    },
    #[error(transparent)]
    Fbu(#[from] FbuError),
}

impl HarnessError {
    /// Whether the error stems from invalid user input rather than a failure
    /// while running.
    pub fn is_usage(&self) -> bool {
        matches!(self, HarnessError::Config(_))
    }

    fn io(path: &Path, source: std::io::Error) -> Self {
        HarnessError::Io {
            path: path.to_path_buf(),
            source,
        }
    }

    fn ser(path: &Path, source: impl std::error::Error + Send + Sync + 'static) -> Self {
        HarnessError::Serialize {
            path: path.to_path_buf(),
            source: Box::new(source),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum StreamSource {
    /// Generated stream; its seed is replaced by the run seed.
    Synthetic(StreamConfig),
    Csv { path: PathBuf, schema: CsvSchema },
}

impl StreamSource {
    pub fn validate(&self) -> Result<(), ConfigError> {
        match self {
            StreamSource::Synthetic(cfg) => cfg.validate(),
            StreamSource::Csv { path, .. } => {
                if path.as_os_str().is_empty() {
                    Err(ConfigError::new("stream.path", "must not be empty"))
                } else {
                    Ok(())
                }
            }
        }
    }

    fn synthetic(&self) -> Option<&StreamConfig> {
        match self {
            StreamSource::Synthetic(cfg) => Some(cfg),
            StreamSource::Csv { .. } => None,
        }
    }

    /// Instances of one run.
    pub fn open(&self, seed: u64) -> Result<Box<dyn Iterator<Item = Result<Instance, HarnessError>>>, HarnessError> {
        match self {
            StreamSource::Synthetic(cfg) => {
                let stream = StreamConfig { seed, ..cfg.clone() }.stream()?;
                Ok(Box::new(stream.map(Ok)))
            }
            StreamSource::Csv { path, schema } => {
                let csv = load_csv(path, schema).map_err(|e| match e {
                    CsvError::MissingColumn(_) | CsvError::Schema(_) => {
                        HarnessError::Config(ConfigError::new("stream.schema", e.to_string()))
                    }
                    other => HarnessError::Stream { seq: 0, source: other },
                })?;
                let mut last = 0;
                Ok(Box::new(csv.map(move |r| match r {
                    Ok(inst) => {
                        last = inst.seq;
                        Ok(inst)
                    }
                    Err(source) => Err(HarnessError::Stream { seq: last, source }),
                })))
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentSpec {
    pub stream: StreamSource,
    pub techniques: Vec<Technique>,
    /// Pipeline settings; the seed is replaced by the run seed.
    pub fs2: Fs2Config,
    pub fairness_metrics: Vec<FairnessMetric>,
    pub performance_metrics: Vec<PerformanceMetric>,
    pub output_dir: PathBuf,
    pub seeds: Vec<u64>,
    /// Write the per-arrival JSON lines file.
    pub write_steps: bool,
}

impl Default for ExperimentSpec {
    fn default() -> Self {
        Self {
            stream: StreamSource::Synthetic(StreamConfig::canonical(0)),
            techniques: vec![Technique::Fs2],
            fs2: Fs2Config::default(),
            fairness_metrics: vec![FairnessMetric::Cspd, FairnessMetric::Ceod],
            performance_metrics: vec![PerformanceMetric::BalancedAccuracy, PerformanceMetric::Recall],
            output_dir: PathBuf::from("out"),
            seeds: vec![0],
            write_steps: true,
        }
    }
}

impl ExperimentSpec {
    pub fn from_toml_str(text: &str) -> Result<Self, ConfigError> {
        let spec: Self = toml::from_str(text).map_err(|e| ConfigError::new(toml_key(&e), e.message().to_string()))?;
        spec.validate()?;
        Ok(spec)
    }

    pub fn load(path: &Path) -> Result<Self, HarnessError> {
        let text = fs::read_to_string(path).map_err(|e| HarnessError::io(path, e))?;
        Ok(Self::from_toml_str(&text)?)
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string_pretty(self).expect("spec serializes")
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        if self.seeds.is_empty() {
            return Err(ConfigError::new("seeds", "at least one seed is required"));
        }
        if self.techniques.is_empty() {
            return Err(ConfigError::new("techniques", "at least one technique is required"));
        }
        if self.fairness_metrics.is_empty() {
            return Err(ConfigError::new("fairness_metrics", "must not be empty"));
        }
        if self.performance_metrics.is_empty() {
            return Err(ConfigError::new("performance_metrics", "must not be empty"));
        }
        self.stream.validate()?;
        self.fs2.validate()
    }
}

/// Best-effort name of the offending key in a TOML error.
fn toml_key(e: &toml::de::Error) -> String {
    let msg = e.message();
    let quoted = msg.split('`').nth(1);
    match quoted {
        Some(k) if msg.contains("unknown field") || msg.contains("missing field") => k.to_string(),
        _ => "config".to_string(),
    }
}

/// Favorable-class share of the unprivileged group, on arrival and in
/// everything the learner trained on (arrivals plus synthetics).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct UnprivilegedFavorableShare {
    pub arrival: f64,
    pub training: f64,
}

impl UnprivilegedFavorableShare {
    pub fn from_counts(arrivals: &[u64; 4], synthesized: &[u64; 4]) -> Self {
        let uf = Subgroup::UnprivilegedFavorable.index();
        let pf = Subgroup::PrivilegedFavorable.index();
        let share = |c: &[u64; 4]| {
            let fav = c[uf] + c[pf];
            if fav == 0 {
                0.0
            } else {
                c[uf] as f64 / fav as f64
            }
        };
        let mut training = *arrivals;
        for i in 0..4 {
            training[i] += synthesized[i];
        }
        Self {
            arrival: share(arrivals),
            training: share(&training),
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct RebalanceCounts {
    pub completed: u64,
    pub ceiling: u64,
    pub aborted: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub technique: Technique,
    pub seed: u64,
    pub instances: u64,
    pub balanced_accuracy: Option<f64>,
    pub recall: Option<f64>,
    pub cspd: f64,
    pub ceod: f64,
    pub fairness_warmup: bool,
    pub total_synthetics: u64,
    /// Indexed privileged-favorable, privileged-unfavorable,
    /// unprivileged-favorable, unprivileged-unfavorable.
    pub arrivals_by_subgroup: [u64; 4],
    pub synthetics_by_subgroup: [u64; 4],
    pub unprivileged_favorable_share: UnprivilegedFavorableShare,
    pub rebalancing: RebalanceCounts,
    pub drift_events: Vec<DriftEvent>,
}

/// Non-overlapping chunks of a prequential metric.
#[derive(Debug, Clone)]
pub struct ChunkedBalancedAccuracy {
    chunk: u64,
    current: ConfusionAccumulator,
    series: Vec<(u64, f64)>,
}

impl ChunkedBalancedAccuracy {
    pub fn new(chunk: u64) -> Self {
        Self {
            chunk: chunk.max(1),
            current: ConfusionAccumulator::new(),
            series: Vec::new(),
        }
    }

    pub fn record(&mut self, seq: u64, truth: Label, prediction: Label) {
        self.current.record(truth, prediction);
        if self.current.total() == self.chunk {
            if let Ok(ba) = self.current.balanced_accuracy() {
                self.series.push((seq, ba));
            }
            self.current = ConfusionAccumulator::new();
        }
    }

    /// `(last seq of chunk, balanced accuracy)` pairs.
    pub fn series(&self) -> &[(u64, f64)] {
        &self.series
    }
}

/// Outcome of the dip-then-recovery check.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DipRecovery {
    pub pre_drift_mean: f64,
    pub trough: f64,
    pub trough_seq: u64,
    /// First chunk end after the trough where the three-chunk mean is back
    /// within tolerance of the pre-drift mean.
    pub recovered_at: Option<u64>,
    pub passed: bool,
}

/// Looks for a dip of at least `min_dip` below the pre-drift mean after
/// `drift_seq`, followed by a recovery to within `tolerance` of it.
///
/// The pre-drift mean averages the chunks ending in the `lookback` arrivals
/// before the drift. The trough is searched within `lookback` arrivals after
/// it; recovery uses a three-chunk moving average.
pub fn detect_dip_recovery(
    series: &[(u64, f64)],
    drift_seq: u64,
    lookback: u64,
    min_dip: f64,
    tolerance: f64,
) -> DipRecovery {
    let pre: Vec<f64> = series
        .iter()
        .filter(|(s, _)| *s < drift_seq && *s + lookback >= drift_seq)
        .map(|p| p.1)
        .collect();
    let pre_drift_mean = if pre.is_empty() {
        f64::NAN
    } else {
        pre.iter().sum::<f64>() / pre.len() as f64
    };
    let after: Vec<(usize, &(u64, f64))> = series
        .iter()
        .enumerate()
        .filter(|(_, (s, _))| *s >= drift_seq && *s < drift_seq + lookback)
        .collect();
    let Some(&(ti, &(trough_seq, trough))) = after.iter().min_by(|a, b| a.1 .1.total_cmp(&b.1 .1)) else {
        return DipRecovery {
            pre_drift_mean,
            trough: f64::NAN,
            trough_seq: drift_seq,
            recovered_at: None,
            passed: false,
        };
    };
    let recovered_at = series[ti..].windows(3).find_map(|w| {
        let mean = (w[0].1 + w[1].1 + w[2].1) / 3.0;
        (mean >= pre_drift_mean - tolerance).then_some(w[2].0)
    });
    DipRecovery {
        pre_drift_mean,
        trough,
        trough_seq,
        recovered_at,
        passed: pre_drift_mean - trough >= min_dip && recovered_at.is_some(),
    }
}

/// Everything a single run produced, kept in memory.
pub struct RunResult {
    pub summary: RunSummary,
    pub log: PredictionLog,
    pub chunked: ChunkedBalancedAccuracy,
}

/// Runs one technique over one seeded stream, calling `observe` after every
/// step.
pub fn run_with(
    source: &StreamSource,
    technique: Technique,
    fs2: &Fs2Config,
    seed: u64,
    chunk: u64,
    mut observe: impl FnMut(&StepOutcome, &Pipeline),
) -> Result<RunResult, HarnessError> {
    let cfg = Fs2Config { seed, ..fs2.clone() };
    let mut pipeline = Pipeline::new(cfg, technique)?;
    let mut arrivals = [0u64; 4];
    let mut synthesized = [0u64; 4];
    let mut rebalancing = RebalanceCounts::default();
    let mut drift_events = Vec::new();
    let mut log = PredictionLog::new();
    let mut chunked = ChunkedBalancedAccuracy::new(chunk);
    let mut last = None;
    for inst in source.open(seed)? {
        let inst = inst?;
        arrivals[inst.subgroup().index()] += 1;
        let out = pipeline.step(inst);
        for i in 0..4 {
            synthesized[i] += out.synthesized[i];
        }
        match out.rebalance {
            Some(RebalanceStatus::Completed) => rebalancing.completed += 1,
            Some(RebalanceStatus::Ceiling) => rebalancing.ceiling += 1,
            Some(RebalanceStatus::Aborted) => rebalancing.aborted += 1,
            None => {}
        }
        drift_events.extend(out.drift.iter().copied());
        log.push(out.seq, out.sensitive, out.truth, out.prediction.label);
        chunked.record(out.seq, out.truth, out.prediction.label);
        observe(&out, &pipeline);
        last = Some(out);
    }
    let fairness = pipeline.fairness();
    let summary = RunSummary {
        technique,
        seed,
        instances: pipeline.seen(),
        balanced_accuracy: last.as_ref().and_then(|o| o.balanced_accuracy),
        recall: last.as_ref().and_then(|o| o.recall),
        cspd: fairness.cspd.value,
        ceod: fairness.ceod.value,
        fairness_warmup: fairness.warmup(),
        total_synthetics: synthesized.iter().sum(),
        arrivals_by_subgroup: arrivals,
        synthetics_by_subgroup: synthesized,
        unprivileged_favorable_share: UnprivilegedFavorableShare::from_counts(&arrivals, &synthesized),
        rebalancing,
        drift_events,
    };
    Ok(RunResult {
        summary,
        log,
        chunked,
    })
}

/// Chunk length of the windowed balanced-accuracy series.
pub const SERIES_CHUNK: u64 = 1000;

fn create(path: &Path) -> Result<BufWriter<File>, HarnessError> {
    File::create(path)
        .map(BufWriter::new)
        .map_err(|e| HarnessError::io(path, e))
}

fn write_json(path: &Path, value: &impl Serialize) -> Result<(), HarnessError> {
    let mut w = create(path)?;
    serde_json::to_writer_pretty(&mut w, value).map_err(|e| HarnessError::ser(path, e))?;
    writeln!(w).and_then(|_| w.flush()).map_err(|e| HarnessError::io(path, e))
}

#[derive(Serialize)]
struct StepRecord<'a> {
    seq: u64,
    prediction: Label,
    truth: Label,
    cspd: f64,
    ceod: f64,
    balanced_accuracy: Option<f64>,
    drift: &'a [DriftEvent],
    synthetics: u64,
}

#[derive(Serialize)]
struct MetricRow {
    seq: u64,
    balanced_accuracy: Option<f64>,
    recall: Option<f64>,
    cspd: f64,
    ceod: f64,
    warmup_flag: bool,
}

/// Per-run output files, streamed while the run progresses.
struct RunWriter {
    dir: PathBuf,
    steps: Option<BufWriter<File>>,
    metrics: csv::Writer<BufWriter<File>>,
    drift: BufWriter<File>,
    error: Option<HarnessError>,
}

impl RunWriter {
    fn new(dir: PathBuf, write_steps: bool) -> Result<Self, HarnessError> {
        fs::create_dir_all(&dir).map_err(|e| HarnessError::io(&dir, e))?;
        let steps = if write_steps {
            Some(create(&dir.join("steps.jsonl"))?)
        } else {
            None
        };
        Ok(Self {
            metrics: csv::Writer::from_writer(create(&dir.join("metrics.csv"))?),
            drift: create(&dir.join("drift.jsonl"))?,
            steps,
            dir,
            error: None,
        })
    }

    fn record(&mut self, out: &StepOutcome) {
        if self.error.is_some() {
            return;
        }
        if let Err(e) = self.try_record(out) {
            self.error = Some(e);
        }
    }

    fn try_record(&mut self, out: &StepOutcome) -> Result<(), HarnessError> {
        if let Some(w) = self.steps.as_mut() {
            let rec = StepRecord {
                seq: out.seq,
                prediction: out.prediction.label,
                truth: out.truth,
                cspd: out.fairness.cspd.value,
                ceod: out.fairness.ceod.value,
                balanced_accuracy: out.balanced_accuracy,
                drift: &out.drift,
                synthetics: out.synthesized_total(),
            };
            let path = self.dir.join("steps.jsonl");
            serde_json::to_writer(&mut *w, &rec).map_err(|e| HarnessError::ser(&path, e))?;
            writeln!(w).map_err(|e| HarnessError::io(&path, e))?;
        }
        self.metrics
            .serialize(MetricRow {
                seq: out.seq,
                balanced_accuracy: out.balanced_accuracy,
                recall: out.recall,
                cspd: out.fairness.cspd.value,
                ceod: out.fairness.ceod.value,
                warmup_flag: out.fairness.warmup(),
            })
            .map_err(|e| HarnessError::ser(&self.dir.join("metrics.csv"), e))?;
        for ev in &out.drift {
            let path = self.dir.join("drift.jsonl");
            serde_json::to_writer(&mut self.drift, ev).map_err(|e| HarnessError::ser(&path, e))?;
            writeln!(self.drift).map_err(|e| HarnessError::io(&path, e))?;
        }
        Ok(())
    }

    fn finish(mut self, result: &RunResult) -> Result<(), HarnessError> {
        if let Some(e) = self.error.take() {
            return Err(e);
        }
        if let Some(mut w) = self.steps.take() {
            w.flush().map_err(|e| HarnessError::io(&self.dir.join("steps.jsonl"), e))?;
        }
        self.metrics
            .flush()
            .map_err(|e| HarnessError::io(&self.dir.join("metrics.csv"), e))?;
        self.drift
            .flush()
            .map_err(|e| HarnessError::io(&self.dir.join("drift.jsonl"), e))?;
        let pred_path = self.dir.join("predictions.csv");
        result.log.write_csv(create(&pred_path)?)?;
        write_json(&self.dir.join("summary.json"), &result.summary)
    }
}

fn run_dir(spec: &ExperimentSpec, technique: Technique, seed: u64) -> PathBuf {
    spec.output_dir.join(format!("{technique}-seed{seed}"))
}

fn run_and_write(spec: &ExperimentSpec, technique: Technique, seed: u64) -> Result<RunResult, HarnessError> {
    let mut writer = RunWriter::new(run_dir(spec, technique, seed), spec.write_steps)?;
    let result = run_with(&spec.stream, technique, &spec.fs2, seed, SERIES_CHUNK, |out, _| {
        writer.record(out)
    })?;
    writer.finish(&result)?;
    Ok(result)
}

/// Runs every (technique, seed) pair, writes the per-run files and an
/// aggregate `summary.json`, and returns the summaries in that order.
pub fn cmd_run(spec: &ExperimentSpec) -> Result<Vec<RunSummary>, HarnessError> {
    spec.validate()?;
    fs::create_dir_all(&spec.output_dir).map_err(|e| HarnessError::io(&spec.output_dir, e))?;
    let jobs: Vec<(Technique, u64)> = spec
        .techniques
        .iter()
        .flat_map(|&t| spec.seeds.iter().map(move |&s| (t, s)))
        .collect();
    let summaries = jobs
        .par_iter()
        .map(|&(t, s)| run_and_write(spec, t, s).map(|r| r.summary))
        .collect::<Result<Vec<_>, _>>()?;
    write_json(&spec.output_dir.join("summary.json"), &summaries)?;
    Ok(summaries)
}

/// Runs every listed technique on identical per-seed streams and evaluates
/// them against the pseudo-model baseline of the unmitigated learner.
pub fn cmd_fbu(spec: &ExperimentSpec) -> Result<FbuReport, HarnessError> {
    spec.validate()?;
    if spec.techniques.len() < 2 {
        return Err(ConfigError::new("techniques", "the trade-off comparison needs at least two techniques").into());
    }
    fs::create_dir_all(&spec.output_dir).map_err(|e| HarnessError::io(&spec.output_dir, e))?;
    let mut needed: Vec<Technique> = spec.techniques.clone();
    needed.push(Technique::NoRebalance);
    needed.sort();
    needed.dedup();
    let jobs: Vec<(Technique, u64)> = spec
        .seeds
        .iter()
        .flat_map(|&s| needed.iter().map(move |&t| (t, s)))
        .collect();
    let logs = jobs
        .par_iter()
        .map(|&(t, s)| run_and_write(spec, t, s).map(|r| ((t, s), r.log)))
        .collect::<Result<Vec<_>, _>>()?;
    let find = |t: Technique, s: u64| {
        logs.iter()
            .find(|(k, _)| *k == (t, s))
            .map(|(_, l)| l.clone())
            .expect("every job ran")
    };
    let runs: Vec<FbuRun> = spec
        .seeds
        .iter()
        .map(|&seed| FbuRun {
            seed,
            original: find(Technique::NoRebalance, seed),
            techniques: spec
                .techniques
                .iter()
                .enumerate()
                .map(|(i, &t)| {
                    let name = if spec.techniques[..i].contains(&t) {
                        format!("{t}#{}", i + 1)
                    } else {
                        t.to_string()
                    };
                    (name, find(t, seed))
                })
                .collect(),
        })
        .collect();
    let options = FbuOptions {
        fairness: spec.fairness_metrics.clone(),
        performance: spec.performance_metrics.clone(),
        decay: spec.fs2.decay,
        constant_label: None,
    };
    let report = fbu_report(&runs, &options)?;
    write_json(&spec.output_dir.join("fbu_report.json"), &report)?;
    let plot = spec.output_dir.join("fbu_plot.csv");
    write_plot_csv(&report, create(&plot)?)?;
    Ok(report)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum StudyKind {
    Decay,
    Window,
    DriftRecovery,
}

impl std::str::FromStr for StudyKind {
    type Err = ConfigError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "decay" => Ok(StudyKind::Decay),
            "window" => Ok(StudyKind::Window),
            "drift-recovery" => Ok(StudyKind::DriftRecovery),
            _ => Err(ConfigError::new("study", format!("unknown study `{s}`"))),
        }
    }
}

impl StudyKind {
    pub fn name(self) -> &'static str {
        match self {
            StudyKind::Decay => "decay",
            StudyKind::Window => "window",
            StudyKind::DriftRecovery => "drift-recovery",
        }
    }

    /// Decay factors, window lengths, or drift magnitudes.
    pub fn default_grid(self) -> Vec<f64> {
        match self {
            StudyKind::Decay => (1..=9).map(|i| i as f64 / 10.0).collect(),
            StudyKind::Window => vec![500.0, 1000.0, 2000.0, 5000.0, 10000.0],
            StudyKind::DriftRecovery => vec![2.0],
        }
    }
}

/// Imbalance scenarios of the decay study, over a stream of `n` arrivals.
pub fn imbalance_scenarios(n: u64) -> Vec<(&'static str, ImbalanceSchedule)> {
    vec![
        ("fixed", ImbalanceSchedule::Fixed { favorable: 0.25 }),
        (
            "increasing",
            ImbalanceSchedule::Linear {
                from: 0.4,
                to: 0.1,
                start_seq: 0,
                end_seq: n,
            },
        ),
        (
            "decreasing",
            ImbalanceSchedule::Linear {
                from: 0.1,
                to: 0.4,
                start_seq: 0,
                end_seq: n,
            },
        ),
        (
            "fluctuating",
            ImbalanceSchedule::Fluctuating {
                low: 0.2,
                high: 0.8,
                period: (n / 5).max(1),
            },
        ),
    ]
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StudyRow {
    pub study: String,
    pub scenario: String,
    pub param: f64,
    pub seed: u64,
    pub technique: Technique,
    /// Set for series rows.
    pub seq: Option<u64>,
    pub metric: String,
    pub value: f64,
}

fn final_rows(study: StudyKind, scenario: &str, param: f64, r: &RunResult) -> Vec<StudyRow> {
    let s = &r.summary;
    let row = |metric: &str, value: f64| StudyRow {
        study: study.name().into(),
        scenario: scenario.into(),
        param,
        seed: s.seed,
        technique: s.technique,
        seq: None,
        metric: metric.into(),
        value,
    };
    let mut rows = vec![
        row("balanced_accuracy", s.balanced_accuracy.unwrap_or(f64::NAN)),
        row("recall", s.recall.unwrap_or(f64::NAN)),
        row("cspd", s.cspd),
        row("ceod", s.ceod),
        row("synthetics", s.total_synthetics as f64),
    ];
    if study == StudyKind::DriftRecovery {
        for &(seq, v) in r.chunked.series() {
            rows.push(StudyRow {
                seq: Some(seq),
                ..row("windowed_balanced_accuracy", v)
            });
        }
    }
    rows
}

/// Base stream of a study: the experiment's synthetic stream if it has one,
/// otherwise the canonical stream.
fn study_base(spec: &ExperimentSpec) -> StreamConfig {
    spec.stream
        .synthetic()
        .cloned()
        .unwrap_or_else(|| StreamConfig::canonical(0))
}

/// Runs a parameter study with the first listed technique and writes
/// `<output_dir>/study-<kind>.csv` in long format.
pub fn cmd_study(spec: &ExperimentSpec, kind: StudyKind, grid: &[f64]) -> Result<Vec<StudyRow>, HarnessError> {
    spec.validate()?;
    if grid.is_empty() {
        return Err(ConfigError::new("grid", "must not be empty").into());
    }
    let technique = spec.techniques[0];
    let base = study_base(spec);
    let mut jobs: Vec<(String, f64, u64, StreamSource, Fs2Config)> = Vec::new();
    for &param in grid {
        for &seed in &spec.seeds {
            match kind {
                StudyKind::Decay => {
                    if !(0.0..=1.0).contains(&param) {
                        return Err(ConfigError::new("grid", format!("decay {param} outside [0, 1]")).into());
                    }
                    for (name, schedule) in imbalance_scenarios(base.n_instances) {
                        let stream = StreamConfig {
                            imbalance: schedule,
                            ..base.clone()
                        };
                        let fs2 = Fs2Config {
                            decay: param,
                            ..spec.fs2.clone()
                        };
                        jobs.push((name.into(), param, seed, StreamSource::Synthetic(stream), fs2));
                    }
                }
                StudyKind::Window => {
                    if !(param >= 2.0 && param.fract() == 0.0) {
                        return Err(ConfigError::new("grid", format!("window length {param} is not an integer >= 2")).into());
                    }
                    let len = param as usize;
                    let fs2 = Fs2Config {
                        max_window: len,
                        min_size: spec.fs2.min_size.min(len / 2).max(2),
                        ..spec.fs2.clone()
                    };
                    jobs.push(("window".into(), param, seed, StreamSource::Synthetic(base.clone()), fs2));
                }
                StudyKind::DriftRecovery => {
                    let mut stream = StreamConfig::canonical_with_drift(seed, param);
                    stream.n_instances = base.n_instances;
                    if let Some(d) = stream.drift.first_mut() {
                        d.seq = d.seq.min(base.n_instances / 2);
                    }
                    jobs.push(("drift".into(), param, seed, StreamSource::Synthetic(stream), spec.fs2.clone()));
                }
            }
        }
    }
    let results = jobs
        .par_iter()
        .map(|(scenario, param, seed, stream, fs2)| {
            let r = run_with(stream, technique, fs2, *seed, SERIES_CHUNK, |_, _| {})?;
            let mut rows = final_rows(kind, scenario, *param, &r);
            if kind == StudyKind::DriftRecovery {
                let drift_seq = stream.synthetic().and_then(|c| c.drift.first()).map_or(0, |d| d.seq);
                let dip = detect_dip_recovery(r.chunked.series(), drift_seq, 5 * SERIES_CHUNK, 0.05, 0.03);
                let row = |metric: &str, value: f64| StudyRow {
                    study: kind.name().into(),
                    scenario: scenario.clone(),
                    param: *param,
                    seed: *seed,
                    technique,
                    seq: None,
                    metric: metric.into(),
                    value,
                };
                rows.push(row("pre_drift_mean", dip.pre_drift_mean));
                rows.push(row("trough", dip.trough));
                rows.push(row("dip_then_recover", if dip.passed { 1.0 } else { 0.0 }));
            }
            Ok(rows)
        })
        .collect::<Result<Vec<_>, HarnessError>>()?;
    let rows: Vec<StudyRow> = results.into_iter().flatten().collect();
    fs::create_dir_all(&spec.output_dir).map_err(|e| HarnessError::io(&spec.output_dir, e))?;
    let path = spec.output_dir.join(format!("study-{}.csv", kind.name()));
    let mut w = csv::Writer::from_writer(create(&path)?);
    for row in &rows {
        w.serialize(row).map_err(|e| HarnessError::ser(&path, e))?;
    }
    w.flush().map_err(|e| HarnessError::io(&path, e))?;
    Ok(rows)
}

/// Writes a synthetic stream as CSV: features `f0..`, then `sensitive` and
/// `label` columns readable with [`synthetic_csv_schema`].
pub fn write_synthetic_csv(cfg: &StreamConfig, path: &Path) -> Result<u64, HarnessError> {
    let mut w = csv::Writer::from_writer(create(path)?);
    let mut header: Vec<String> = (0..cfg.n_features).map(|j| format!("f{j}")).collect();
    header.push("sensitive".into());
    header.push("label".into());
    w.write_record(&header).map_err(|e| HarnessError::ser(path, e))?;
    let mut n = 0;
    for inst in cfg.stream()? {
        let mut rec: Vec<String> = inst.features.iter().map(|v| v.to_string()).collect();
        rec.push(
            match inst.sensitive {
                crate::stream::Group::Privileged => "privileged",
                crate::stream::Group::Unprivileged => "unprivileged",
            }
            .into(),
        );
        rec.push(if inst.label.is_favorable() { "favorable" } else { "unfavorable" }.into());
        w.write_record(&rec).map_err(|e| HarnessError::ser(path, e))?;
        n += 1;
    }
    w.flush().map_err(|e| HarnessError::io(path, e))?;
    Ok(n)
}

pub fn synthetic_csv_schema() -> CsvSchema {
    CsvSchema {
        unfavorable_value: Some("unfavorable".into()),
        unprivileged_value: Some("unprivileged".into()),
        ..CsvSchema::new("sensitive", "label", "favorable", "privileged")
    }
}
