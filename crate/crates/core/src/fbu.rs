//! Trade-off evaluation against a pseudo-model baseline.
//!
//! The original model's predictions are progressively replaced by a constant
//! label (10%, 20%, ..., 100% of them). Each pseudo-model trades performance
//! for lower bias, and the polyline through their (bias, performance) points
//! is the baseline any mitigation technique should beat. A technique is
//! placed in one of five regions relative to the original model and the
//! baseline; trade-off techniques above the baseline also get an area score.

use std::io::{Read, Write};

use log::info;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::metrics::{ConfusionAccumulator, FairnessAccumulator, MetricError};
use crate::stream::{Group, Label};

#[derive(Debug, Error)]
pub enum FbuError {
    #[error("prediction log is empty")]
    EmptyLog,
    #[error("protocol error: {0}")]
    Protocol(String),
    #[error(transparent)]
    Metric(#[from] MetricError),
    #[error("prediction log csv: {0}")]
    Csv(#[from] csv::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct LogEntry {
    pub seq: u64,
    pub sensitive: Group,
    pub truth: Label,
    pub prediction: Label,
}

/// Predictions of one technique on one stream, in arrival order.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct PredictionLog {
    entries: Vec<LogEntry>,
}

impl PredictionLog {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn from_entries(entries: Vec<LogEntry>) -> Self {
        Self { entries }
    }

    pub fn push(&mut self, seq: u64, sensitive: Group, truth: Label, prediction: Label) {
        self.entries.push(LogEntry {
            seq,
            sensitive,
            truth,
            prediction,
        });
    }

    pub fn entries(&self) -> &[LogEntry] {
        &self.entries
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Most frequent predicted label; unfavorable on ties.
    pub fn majority_prediction(&self) -> Label {
        let fav = self.entries.iter().filter(|e| e.prediction.is_favorable()).count();
        if 2 * fav > self.entries.len() {
            Label::Favorable
        } else {
            Label::Unfavorable
        }
    }

    /// Reads `seq,sensitive,truth,prediction` rows.
    pub fn read_csv(reader: impl Read) -> Result<Self, FbuError> {
        let mut rdr = csv::Reader::from_reader(reader);
        let entries = rdr.deserialize().collect::<Result<Vec<LogEntry>, _>>()?;
        Ok(Self { entries })
    }

    pub fn write_csv(&self, writer: impl Write) -> Result<(), FbuError> {
        let mut w = csv::Writer::from_writer(writer);
        for e in &self.entries {
            w.serialize(e)?;
        }
        w.flush().map_err(csv::Error::from)?;
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum FairnessMetric {
    Cspd,
    Ceod,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PerformanceMetric {
    BalancedAccuracy,
    Recall,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TradeoffPoint {
    /// Absolute fairness metric value.
    pub bias: f64,
    pub performance: f64,
}

impl TradeoffPoint {
    pub fn new(bias: f64, performance: f64) -> Self {
        Self { bias, performance }
    }
}

/// Final (signed) fairness value and performance of a log.
pub fn evaluate_signed(
    log: &PredictionLog,
    fairness: FairnessMetric,
    performance: PerformanceMetric,
    decay: f64,
) -> Result<(f64, f64), FbuError> {
    if log.is_empty() {
        return Err(FbuError::EmptyLog);
    }
    let mut acc = FairnessAccumulator::new(decay)?;
    let mut confusion = ConfusionAccumulator::new();
    for e in &log.entries {
        acc.update(e.sensitive, e.truth, e.prediction);
        confusion.record(e.truth, e.prediction);
    }
    let value = match fairness {
        FairnessMetric::Cspd => acc.cspd(),
        FairnessMetric::Ceod => acc.ceod(),
    };
    if value.warmup {
        return Err(MetricError::Undefined {
            metric: match fairness {
                FairnessMetric::Cspd => "CSPD",
                FairnessMetric::Ceod => "CEOD",
            },
            missing: "privileged or unprivileged",
        }
        .into());
    }
    let perf = match performance {
        PerformanceMetric::BalancedAccuracy => confusion.balanced_accuracy()?,
        PerformanceMetric::Recall => confusion.recall()?,
    };
    Ok((value.value, perf))
}

pub fn evaluate_point(
    log: &PredictionLog,
    fairness: FairnessMetric,
    performance: PerformanceMetric,
    decay: f64,
) -> Result<TradeoffPoint, FbuError> {
    let (signed, perf) = evaluate_signed(log, fairness, performance, decay)?;
    Ok(TradeoffPoint::new(signed.abs(), perf))
}

/// The ten pseudo-models: for `p = 10%, ..., 100%`, the first `⌊p·n⌋` entries
/// of one seeded permutation get the constant label. The replaced sets are
/// nested, so each pseudo-model extends the previous one.
pub fn build_pseudo_models(original: &PredictionLog, constant: Label, seed: u64) -> Vec<PredictionLog> {
    let n = original.len();
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    (1..=10)
        .map(|tenth| {
            let mut log = original.clone();
            for &i in &order[..tenth * n / 10] {
                log.entries[i].prediction = constant;
            }
            log
        })
        .collect()
}

/// Polyline from the original model through the ten pseudo-models.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TradeoffBaseline {
    /// Original model first, then 10% to 100% substitution.
    pub points: Vec<TradeoffPoint>,
}

impl TradeoffBaseline {
    pub fn build(
        original: &PredictionLog,
        constant: Label,
        seed: u64,
        fairness: FairnessMetric,
        performance: PerformanceMetric,
        decay: f64,
    ) -> Result<Self, FbuError> {
        let mut points = vec![evaluate_point(original, fairness, performance, decay)?];
        for log in build_pseudo_models(original, constant, seed) {
            points.push(evaluate_point(&log, fairness, performance, decay)?);
        }
        Ok(Self { points })
    }

    /// Points sorted by bias. Points sharing a bias keep the best
    /// performance, so every baseline point lies on or below the curve.
    fn curve(&self) -> Vec<(f64, f64)> {
        let mut pts: Vec<(f64, f64)> = self.points.iter().map(|p| (p.bias, p.performance)).collect();
        pts.sort_by(|a, b| a.0.total_cmp(&b.0));
        let mut out: Vec<(f64, f64)> = Vec::new();
        for (b, q) in pts {
            match out.last_mut() {
                Some(last) if last.0 == b => last.1 = last.1.max(q),
                _ => out.push((b, q)),
            }
        }
        out
    }

    /// Baseline performance at `bias`, linearly interpolated; biases outside
    /// the baseline's span take the nearest endpoint.
    pub fn performance_at(&self, bias: f64) -> f64 {
        interpolate(&self.curve(), bias)
    }

    pub fn bias_span(&self) -> (f64, f64) {
        let c = self.curve();
        (c[0].0, c[c.len() - 1].0)
    }
}

fn interpolate(curve: &[(f64, f64)], x: f64) -> f64 {
    let (first, last) = (curve[0], curve[curve.len() - 1]);
    if x <= first.0 {
        return first.1;
    }
    if x >= last.0 {
        return last.1;
    }
    let i = curve.partition_point(|p| p.0 <= x);
    let (x0, y0) = curve[i - 1];
    let (x1, y1) = curve[i];
    y0 + (y1 - y0) * (x - x0) / (x1 - x0)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Region {
    WinWin,
    Good,
    Inverted,
    Poor,
    LoseLose,
}

impl Region {
    pub const ALL: [Region; 5] = [
        Region::WinWin,
        Region::Good,
        Region::Inverted,
        Region::Poor,
        Region::LoseLose,
    ];

    /// Region number, 1 (win-win) to 5 (lose-lose).
    pub fn number(self) -> u8 {
        self as u8 + 1
    }
}

/// Places a technique relative to the original model.
///
/// Better or equal on both axes (but not identical) is win-win; better
/// performance with more bias is inverted; worse on both is lose-lose. The
/// remaining trade-off quadrant is good when strictly above the baseline at
/// the technique's bias and poor otherwise.
pub fn classify_region(technique: TradeoffPoint, original: TradeoffPoint, baseline: &TradeoffBaseline) -> Region {
    let d_perf = technique.performance - original.performance;
    let d_bias = technique.bias - original.bias;
    if d_perf >= 0.0 && d_bias <= 0.0 && !(d_perf == 0.0 && d_bias == 0.0) {
        return Region::WinWin;
    }
    if d_perf > 0.0 && d_bias > 0.0 {
        return Region::Inverted;
    }
    if d_perf < 0.0 && d_bias > 0.0 {
        return Region::LoseLose;
    }
    let (lo, hi) = baseline.bias_span();
    if technique.bias < lo || technique.bias > hi {
        info!(
            "bias {} outside the baseline span [{lo}, {hi}]; using the nearest endpoint",
            technique.bias
        );
    }
    if technique.performance > baseline.performance_at(technique.bias) {
        Region::Good
    } else {
        Region::Poor
    }
}

/// Area between the technique's performance level and the baseline, over
/// biases from the technique's bias up to the largest baseline bias, counting
/// only where the baseline lies below the technique.
pub fn region2_area(technique: TradeoffPoint, baseline: &TradeoffBaseline) -> f64 {
    let curve = baseline.curve();
    let hi = curve[curve.len() - 1].0;
    let lo = technique.bias;
    if lo >= hi {
        return 0.0;
    }
    // breakpoints of the clamped polyline inside [lo, hi]
    let mut xs = vec![lo];
    xs.extend(curve.iter().map(|p| p.0).filter(|&x| x > lo && x < hi));
    xs.push(hi);
    let level = technique.performance;
    xs.windows(2)
        .map(|w| {
            let (x0, x1) = (w[0], w[1]);
            let g0 = level - interpolate(&curve, x0);
            let g1 = level - interpolate(&curve, x1);
            positive_part_integral(x1 - x0, g0, g1)
        })
        .sum()
}

/// Integral of `max(0, g)` over an interval of width `w` where `g` is linear
/// from `g0` to `g1`.
fn positive_part_integral(w: f64, g0: f64, g1: f64) -> f64 {
    if g0 >= 0.0 && g1 >= 0.0 {
        0.5 * w * (g0 + g1)
    } else if g0 <= 0.0 && g1 <= 0.0 {
        0.0
    } else {
        let top = g0.max(g1);
        // width of the part where g is positive
        let part = w * top / (g0 - g1).abs();
        0.5 * part * top
    }
}

/// Logs of all techniques on one run, plus the original (unmitigated) model.
#[derive(Debug, Clone)]
pub struct FbuRun {
    pub seed: u64,
    pub original: PredictionLog,
    pub techniques: Vec<(String, PredictionLog)>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FbuOptions {
    pub fairness: Vec<FairnessMetric>,
    pub performance: Vec<PerformanceMetric>,
    pub decay: f64,
    /// Label given by the pseudo-models; the original model's majority
    /// prediction when unset.
    pub constant_label: Option<Label>,
}

impl Default for FbuOptions {
    fn default() -> Self {
        Self {
            fairness: vec![FairnessMetric::Cspd, FairnessMetric::Ceod],
            performance: vec![PerformanceMetric::BalancedAccuracy, PerformanceMetric::Recall],
            decay: 0.5,
            constant_label: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FbuCase {
    pub run: usize,
    pub seed: u64,
    pub technique: String,
    pub fairness: FairnessMetric,
    pub performance: PerformanceMetric,
    pub signed_bias: f64,
    pub point: TradeoffPoint,
    pub original: TradeoffPoint,
    pub region: Region,
    /// Set for cases in the good region.
    pub area: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BaselineRecord {
    pub run: usize,
    pub seed: u64,
    pub fairness: FairnessMetric,
    pub performance: PerformanceMetric,
    pub constant_label: Label,
    pub baseline: TradeoffBaseline,
}

/// Percentage of cases per region.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct RegionShares {
    pub win_win: f64,
    pub good: f64,
    pub inverted: f64,
    pub poor: f64,
    pub lose_lose: f64,
}

impl RegionShares {
    fn slot(&mut self, r: Region) -> &mut f64 {
        match r {
            Region::WinWin => &mut self.win_win,
            Region::Good => &mut self.good,
            Region::Inverted => &mut self.inverted,
            Region::Poor => &mut self.poor,
            Region::LoseLose => &mut self.lose_lose,
        }
    }

    pub fn get(&self, r: Region) -> f64 {
        let mut copy = *self;
        *copy.slot(r)
    }

    pub fn sum(&self) -> f64 {
        Region::ALL.iter().map(|&r| self.get(r)).sum()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TechniqueSummary {
    pub technique: String,
    pub cases: usize,
    pub shares: RegionShares,
    /// Mean area over the technique's good-region cases.
    pub mean_area: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FbuReport {
    pub decay: f64,
    pub runs: usize,
    pub techniques: Vec<TechniqueSummary>,
    pub cases: Vec<FbuCase>,
    pub baselines: Vec<BaselineRecord>,
}

/// Evaluates every (run, technique, fairness metric, performance metric)
/// case and aggregates region percentages per technique.
pub fn fbu_report(runs: &[FbuRun], options: &FbuOptions) -> Result<FbuReport, FbuError> {
    if runs.is_empty() {
        return Err(FbuError::Protocol("no runs".into()));
    }
    let names: Vec<&str> = runs[0].techniques.iter().map(|(n, _)| n.as_str()).collect();
    let mut cases = Vec::new();
    let mut baselines = Vec::new();
    for (r, run) in runs.iter().enumerate() {
        let run_names: Vec<&str> = run.techniques.iter().map(|(n, _)| n.as_str()).collect();
        if run_names != names {
            return Err(FbuError::Protocol(format!("run {r} lists different techniques")));
        }
        for (name, log) in &run.techniques {
            if log.len() != run.original.len() {
                return Err(FbuError::Protocol(format!(
                    "run {r}: `{name}` has {} predictions, the original model {}",
                    log.len(),
                    run.original.len()
                )));
            }
        }
        let constant = options
            .constant_label
            .unwrap_or_else(|| run.original.majority_prediction());
        for &fm in &options.fairness {
            for &pm in &options.performance {
                let baseline = TradeoffBaseline::build(&run.original, constant, run.seed, fm, pm, options.decay)?;
                let original = baseline.points[0];
                for (name, log) in &run.techniques {
                    let (signed, perf) = evaluate_signed(log, fm, pm, options.decay)?;
                    let point = TradeoffPoint::new(signed.abs(), perf);
                    let region = classify_region(point, original, &baseline);
                    cases.push(FbuCase {
                        run: r,
                        seed: run.seed,
                        technique: name.clone(),
                        fairness: fm,
                        performance: pm,
                        signed_bias: signed,
                        point,
                        original,
                        region,
                        area: (region == Region::Good).then(|| region2_area(point, &baseline)),
                    });
                }
                baselines.push(BaselineRecord {
                    run: r,
                    seed: run.seed,
                    fairness: fm,
                    performance: pm,
                    constant_label: constant,
                    baseline,
                });
            }
        }
    }
    let techniques = names
        .iter()
        .map(|&name| {
            let mine: Vec<&FbuCase> = cases.iter().filter(|c| c.technique == name).collect();
            let mut shares = RegionShares::default();
            for c in &mine {
                *shares.slot(c.region) += 100.0 / mine.len() as f64;
            }
            let areas: Vec<f64> = mine.iter().filter_map(|c| c.area).collect();
            TechniqueSummary {
                technique: name.to_string(),
                cases: mine.len(),
                shares,
                mean_area: (!areas.is_empty()).then(|| areas.iter().sum::<f64>() / areas.len() as f64),
            }
        })
        .collect();
    Ok(FbuReport {
        decay: options.decay,
        runs: runs.len(),
        techniques,
        cases,
        baselines,
    })
}

#[derive(Serialize)]
struct PlotRow<'a> {
    kind: &'a str,
    run: usize,
    fairness: FairnessMetric,
    performance_metric: PerformanceMetric,
    name: String,
    bias: f64,
    performance: f64,
}

/// Long-format CSV of every baseline vertex and technique point.
pub fn write_plot_csv(report: &FbuReport, writer: impl Write) -> Result<(), FbuError> {
    let mut w = csv::Writer::from_writer(writer);
    for b in &report.baselines {
        for (i, p) in b.baseline.points.iter().enumerate() {
            w.serialize(PlotRow {
                kind: "baseline",
                run: b.run,
                fairness: b.fairness,
                performance_metric: b.performance,
                name: if i == 0 { "original".into() } else { format!("pseudo-{}", i * 10) },
                bias: p.bias,
                performance: p.performance,
            })?;
        }
    }
    for c in &report.cases {
        w.serialize(PlotRow {
            kind: "technique",
            run: c.run,
            fairness: c.fairness,
            performance_metric: c.performance,
            name: c.technique.clone(),
            bias: c.point.bias,
            performance: c.point.performance,
        })?;
    }
    w.flush().map_err(csv::Error::from)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn log_from(rows: &[(Group, Label, Label)]) -> PredictionLog {
        let mut log = PredictionLog::new();
        for (i, &(g, t, p)) in rows.iter().enumerate() {
            log.push(i as u64, g, t, p);
        }
        log
    }

    fn baseline(points: &[(f64, f64)]) -> TradeoffBaseline {
        TradeoffBaseline {
            points: points.iter().map(|&(b, q)| TradeoffPoint::new(b, q)).collect(),
        }
    }

    fn biased_log(n: usize) -> PredictionLog {
        let mut log = PredictionLog::new();
        for i in 0..n {
            let g = if i % 3 == 0 { Group::Unprivileged } else { Group::Privileged };
            let t = if i % 4 == 0 { Label::Favorable } else { Label::Unfavorable };
            let p = if g == Group::Privileged && i % 2 == 0 { Label::Favorable } else { t };
            log.push(i as u64, g, t, p);
        }
        log
    }

    #[test]
    fn pseudo_model_counts() {
        let mut log = biased_log(10);
        for e in log.entries.iter_mut() {
            e.prediction = Label::Favorable;
        }
        let models = build_pseudo_models(&log, Label::Unfavorable, 1);
        assert_eq!(models.len(), 10);
        for (i, m) in models.iter().enumerate() {
            let replaced = m.entries().iter().filter(|e| e.prediction == Label::Unfavorable).count();
            assert_eq!(replaced, i + 1);
        }
        // nested substitution sets
        for w in models.windows(2) {
            for (a, b) in w[0].entries().iter().zip(w[1].entries()) {
                assert!(a.prediction == Label::Favorable || b.prediction == Label::Unfavorable);
            }
        }
    }

    #[test]
    fn full_substitution_has_zero_bias() {
        let log = biased_log(200);
        for constant in Label::ALL {
            let b = TradeoffBaseline::build(
                &log,
                constant,
                3,
                FairnessMetric::Cspd,
                PerformanceMetric::BalancedAccuracy,
                0.5,
            )
            .unwrap();
            assert_eq!(b.points.len(), 11);
            assert_eq!(b.points[10].bias, 0.0);
            assert_eq!(b.points[10].performance, 0.5);
        }
    }

    #[test]
    fn perfect_log_point() {
        let log = log_from(&[
            (Group::Privileged, Label::Favorable, Label::Favorable),
            (Group::Unprivileged, Label::Favorable, Label::Favorable),
            (Group::Privileged, Label::Unfavorable, Label::Unfavorable),
            (Group::Unprivileged, Label::Unfavorable, Label::Unfavorable),
        ]);
        let p = evaluate_point(&log, FairnessMetric::Cspd, PerformanceMetric::BalancedAccuracy, 0.0).unwrap();
        assert_eq!(p, TradeoffPoint::new(0.0, 1.0));
    }

    #[test]
    fn empty_class_is_an_error() {
        let log = log_from(&[
            (Group::Privileged, Label::Unfavorable, Label::Unfavorable),
            (Group::Unprivileged, Label::Unfavorable, Label::Unfavorable),
        ]);
        assert!(evaluate_point(&log, FairnessMetric::Cspd, PerformanceMetric::BalancedAccuracy, 0.0).is_err());
    }

    #[test]
    fn region_quadrants() {
        let b = baseline(&[(0.2, 0.8), (0.0, 0.5)]);
        let ori = TradeoffPoint::new(0.2, 0.8);
        assert_eq!(classify_region(TradeoffPoint::new(0.15, 0.82), ori, &b), Region::WinWin);
        assert_eq!(classify_region(TradeoffPoint::new(0.3, 0.85), ori, &b), Region::Inverted);
        assert_eq!(classify_region(TradeoffPoint::new(0.3, 0.7), ori, &b), Region::LoseLose);
        assert_eq!(classify_region(TradeoffPoint::new(0.1, 0.75), ori, &b), Region::Good);
        assert_eq!(classify_region(TradeoffPoint::new(0.1, 0.6), ori, &b), Region::Poor);
        // identical to the original: on the line
        assert_eq!(classify_region(ori, ori, &b), Region::Poor);
    }

    #[test]
    fn area_examples() {
        let flat = baseline(&[(0.0, 0.5), (0.2, 0.5)]);
        assert!((region2_area(TradeoffPoint::new(0.1, 0.7), &flat) - 0.02).abs() < 1e-12);
        let rising = baseline(&[(0.0, 0.5), (0.2, 0.8)]);
        assert!((region2_area(TradeoffPoint::new(0.0, 0.8), &rising) - 0.03).abs() < 1e-12);
        assert_eq!(region2_area(TradeoffPoint::new(0.1, 0.65), &rising), 0.0);
    }

    #[test]
    fn crossing_segment_area() {
        // baseline rises through the technique level halfway across
        let b = baseline(&[(0.0, 0.4), (1.0, 0.8)]);
        let a = region2_area(TradeoffPoint::new(0.0, 0.6), &b);
        assert!((a - 0.05).abs() < 1e-12, "{a}");
    }

    #[test]
    fn report_counts_and_shares() {
        let original = biased_log(120);
        let mut fixed = original.clone();
        for e in fixed.entries.iter_mut() {
            e.prediction = e.truth;
        }
        let run = FbuRun {
            seed: 0,
            original: original.clone(),
            techniques: vec![("fixed".into(), fixed), ("same".into(), original)],
        };
        let report = fbu_report(&[run], &FbuOptions::default()).unwrap();
        assert_eq!(report.cases.len(), 8);
        for t in &report.techniques {
            assert_eq!(t.cases, 4);
            assert!((t.shares.sum() - 100.0).abs() < 1e-9);
        }
        // the original already has perfect recall and equal true positive
        // rates, so (CEOD, recall) ties it exactly and lands on the line
        assert_eq!(report.techniques[0].shares.win_win, 75.0);
        assert_eq!(report.techniques[0].shares.poor, 25.0);
        assert_eq!(report.techniques[1].shares.poor, 100.0);
    }

    #[test]
    fn mismatched_lengths_rejected() {
        let run = FbuRun {
            seed: 0,
            original: biased_log(20),
            techniques: vec![("short".into(), biased_log(10))],
        };
        assert!(matches!(fbu_report(&[run], &FbuOptions::default()), Err(FbuError::Protocol(_))));
    }

    #[test]
    fn csv_round_trip() {
        let log = biased_log(5);
        let mut buf = Vec::new();
        log.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert!(text.starts_with("seq,sensitive,truth,prediction\n"));
        assert_eq!(PredictionLog::read_csv(buf.as_slice()).unwrap(), log);
    }
}
