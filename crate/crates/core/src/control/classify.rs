use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::{spc_chart, SpcChart, Tolerances};
use crate::error::{Error, Result};
use crate::metrology::average_trace;
use crate::nnet::{train, Dataset, Network, Topology, TrainConfig};
use crate::plant::{CycleRecord, DisturbanceState, PartQuality, Plant, ProcessParams};
use crate::rng::{SeedTree, Stream};

/// A production stream in which some cycles carry a hot-melt event whose
/// viscosity is offset by a contaminated batch, so the cavity pressure peak
/// is unchanged while the part falls out of tolerance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct HiddenDefectStream {
    pub defect_rate: f64,
    /// Melt-temperature excursion of a defect event, °C.
    pub offset_range: (f64, f64),
    /// Ordinary cycle-to-cycle melt temperature wander, °C.
    pub normal_sigma: f64,
    /// Ordinary viscosity-factor wander, ± fraction.
    pub viscosity_jitter: f64,
}

impl Default for HiddenDefectStream {
    fn default() -> Self {
        HiddenDefectStream {
            defect_rate: 0.2,
            offset_range: (12.0, 30.0),
            normal_sigma: 1.5,
            viscosity_jitter: 0.01,
        }
    }
}

impl HiddenDefectStream {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.defect_rate) {
            return Err(Error::range("defect_rate", self.defect_rate, 0.0, 1.0));
        }
        let (lo, hi) = self.offset_range;
        if !(lo <= hi && lo.abs() <= 60.0 && hi.abs() <= 60.0) {
            return Err(Error::Invalid(format!("bad offset range ({lo}, {hi})")));
        }
        if !(self.normal_sigma >= 0.0 && (0.0..0.5).contains(&self.viscosity_jitter)) {
            return Err(Error::Invalid("bad stream noise settings".into()));
        }
        Ok(())
    }

    /// Disturbance for cycle `i`.
    pub fn state(&self, plant: &Plant, seeds: &SeedTree, i: usize) -> Result<DisturbanceState> {
        let mut rng = seeds.rng(Stream::Disturbance, i as u64);
        let defect = rng.random::<f64>() < self.defect_rate;
        let scale = plant.config.viscosity_temp_scale;
        let (offset, viscosity) = if defect {
            let x = rng.random_range(self.offset_range.0..=self.offset_range.1);
            (x, (x / scale).exp())
        } else {
            let n = Normal::new(0.0, self.normal_sigma).map_err(|_| Error::NumericalFault("stream noise"))?;
            let j = self.viscosity_jitter;
            (n.sample(&mut rng), 1.0 + rng.random_range(-j..=j))
        };
        Ok(DisturbanceState {
            melt_temp_offset: offset,
            viscosity_factor: viscosity,
            checkring_leak: 0.0,
        })
    }
}

/// `n` cycles at fixed `params`, cycle indices starting at `first`.
pub fn generate_hidden_defect_stream(
    plant: &Plant,
    params: &ProcessParams,
    first: usize,
    n: usize,
    stream: &HiddenDefectStream,
    seeds: &SeedTree,
) -> Result<Vec<CycleRecord>> {
    stream.validate()?;
    (first..first + n)
        .map(|i| {
            let d = stream.state(plant, seeds, i)?;
            plant.run_cycle(i, params, &d, seeds.seed(Stream::Plant, i as u64))
        })
        .collect()
}

/// Inputs for both inspection methods plus the ground-truth label.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabeledCycle {
    /// Averaged pressure then temperature profile.
    pub features: Vec<f64>,
    pub peak_pressure: f64,
    /// `None` when no ground truth is attached.
    pub conforming: Option<bool>,
}

pub fn label_cycle(rec: &CycleRecord, window: usize, tol: &Tolerances, target: &PartQuality) -> Result<LabeledCycle> {
    Ok(LabeledCycle {
        features: average_trace(&rec.trace, window)?.features(),
        peak_pressure: rec.trace.peak_pressure(),
        conforming: Some(tol.conforms(&rec.true_quality, target)),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ClassifierConfig {
    pub window: usize,
    pub hidden: Vec<usize>,
    pub detection_target: f64,
    pub train: TrainConfig,
}

impl Default for ClassifierConfig {
    fn default() -> Self {
        ClassifierConfig {
            window: 100,
            hidden: vec![6],
            detection_target: 0.8,
            train: TrainConfig {
                epochs: 500,
                learning_rate: 0.01,
                ..TrainConfig::default()
            },
        }
    }
}

fn labels(cycles: &[LabeledCycle]) -> Result<Vec<bool>> {
    if cycles.is_empty() {
        return Err(Error::range("cycle count", 0.0, 1.0, f64::INFINITY));
    }
    cycles
        .iter()
        .enumerate()
        .map(|(i, c)| c.conforming.ok_or_else(|| Error::range("unlabeled cycle", i as f64, 0.0, 0.0)))
        .collect()
}

/// Network scoring non-conformity (1) against conformity (0).
pub fn train_classifier(cycles: &[LabeledCycle], cfg: &ClassifierConfig) -> Result<Network> {
    let ok = labels(cycles)?;
    let data = Dataset::new(
        cycles.iter().map(|c| c.features.clone()).collect(),
        ok.iter().map(|&k| vec![if k { 0.0 } else { 1.0 }]).collect(),
    )?;
    let mut sizes = vec![data.input_width()];
    sizes.extend_from_slice(&cfg.hidden);
    sizes.push(1);
    let init = Network::init(&Topology::feed_forward(&sizes), cfg.train.seed)?;
    Ok(train(&init, &data, &cfg.train)?.0)
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Confusion {
    pub tp: usize,
    pub fp: usize,
    pub tn: usize,
    #[serde(rename = "fn")]
    pub fn_: usize,
}

impl Confusion {
    fn tally(flags: &[bool], nonconforming: &[bool]) -> Self {
        let mut c = Confusion::default();
        for (&f, &bad) in flags.iter().zip(nonconforming) {
            match (f, bad) {
                (true, true) => c.tp += 1,
                (true, false) => c.fp += 1,
                (false, false) => c.tn += 1,
                (false, true) => c.fn_ += 1,
            }
        }
        c
    }

    pub fn detection_rate(&self) -> Option<f64> {
        let p = self.tp + self.fn_;
        (p > 0).then(|| self.tp as f64 / p as f64)
    }

    pub fn false_positive_rate(&self) -> Option<f64> {
        let n = self.fp + self.tn;
        (n > 0).then(|| self.fp as f64 / n as f64)
    }

    pub fn accuracy(&self) -> f64 {
        (self.tp + self.tn) as f64 / (self.tp + self.fp + self.tn + self.fn_).max(1) as f64
    }

    pub fn f1(&self) -> f64 {
        let d = 2 * self.tp + self.fp + self.fn_;
        if d == 0 {
            0.0
        } else {
            2.0 * self.tp as f64 / d as f64
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MethodReport {
    pub method: String,
    /// Cycles scoring at or above this are rejected.
    pub threshold: f64,
    pub confusion: Confusion,
    pub detection_rate: Option<f64>,
    pub false_positive_rate: Option<f64>,
    pub accuracy: f64,
    pub f1: f64,
}

impl MethodReport {
    fn new(method: &str, threshold: f64, scores: &[f64], nonconforming: &[bool]) -> Self {
        let flags: Vec<bool> = scores.iter().map(|&s| s >= threshold).collect();
        let confusion = Confusion::tally(&flags, nonconforming);
        MethodReport {
            method: method.into(),
            threshold,
            confusion,
            detection_rate: confusion.detection_rate(),
            false_positive_rate: confusion.false_positive_rate(),
            accuracy: confusion.accuracy(),
            f1: confusion.f1(),
        }
    }
}

/// Both methods on one stream: at their default operating points and at
/// thresholds matched to the same detection rate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonReport {
    pub n_cycles: usize,
    pub n_nonconforming: usize,
    pub detection_target: f64,
    pub nn_default: MethodReport,
    pub spc_default: MethodReport,
    /// Present when the stream has non-conforming parts.
    pub nn_matched: Option<MethodReport>,
    pub spc_matched: Option<MethodReport>,
}

impl ComparisonReport {
    /// NN false-positive rate over SPC false-positive rate at matched
    /// detection.
    pub fn matched_fp_ratio(&self) -> Option<f64> {
        let nn = self.nn_matched.as_ref()?.false_positive_rate?;
        let spc = self.spc_matched.as_ref()?.false_positive_rate?;
        (spc > 0.0).then(|| nn / spc)
    }
}

/// Highest threshold that still flags at least `target` of the positives.
fn matched_threshold(scores: &[f64], nonconforming: &[bool], target: f64) -> Option<f64> {
    let mut pos: Vec<f64> = scores.iter().zip(nonconforming).filter(|(_, &b)| b).map(|(&s, _)| s).collect();
    if pos.is_empty() {
        return None;
    }
    pos.sort_by(|a, b| b.total_cmp(a));
    let k = ((target * pos.len() as f64).ceil() as usize).clamp(1, pos.len());
    Some(pos[k - 1])
}

/// Per-cycle scores: classifier output on the full averaged profile, and
/// |z| of peak pressure on an individuals chart built from `spc_baseline`.
pub fn score_parts(classifier: &Network, spc_baseline: &[f64], cycles: &[LabeledCycle]) -> Result<(Vec<f64>, Vec<f64>)> {
    let chart: SpcChart = spc_chart(spc_baseline, spc_baseline.len())?;
    let nn = cycles
        .iter()
        .map(|c| classifier.forward(&c.features).map(|y| y[0]))
        .collect::<Result<_>>()?;
    let spc = cycles.iter().map(|c| chart.z(c.peak_pressure).abs()).collect();
    Ok((nn, spc))
}

/// Confusion tables for precomputed scores.
pub fn compare_scores(nn: &[f64], spc: &[f64], nonconforming: &[bool], detection_target: f64) -> Result<ComparisonReport> {
    if nonconforming.is_empty() {
        return Err(Error::range("cycle count", 0.0, 1.0, f64::INFINITY));
    }
    if nn.len() != nonconforming.len() || spc.len() != nonconforming.len() {
        return Err(Error::Shape(format!(
            "{} / {} scores for {} labels",
            nn.len(),
            spc.len(),
            nonconforming.len()
        )));
    }
    if !(detection_target > 0.0 && detection_target <= 1.0) {
        return Err(Error::range("detection_target", detection_target, 0.0, 1.0));
    }
    let bad = nonconforming;
    let nn_matched = matched_threshold(nn, bad, detection_target).map(|t| MethodReport::new("nn", t, nn, bad));
    let spc_matched = matched_threshold(spc, bad, detection_target).map(|t| MethodReport::new("spc", t, spc, bad));
    Ok(ComparisonReport {
        n_cycles: bad.len(),
        n_nonconforming: bad.iter().filter(|&&b| b).count(),
        detection_target,
        nn_default: MethodReport::new("nn", 0.5, nn, bad),
        spc_default: MethodReport::new("spc", 3.0_f64.next_up(), spc, bad),
        nn_matched,
        spc_matched,
    })
}

/// Scores every cycle with both methods and compares them on the labels.
pub fn classify_parts(
    classifier: &Network,
    spc_baseline: &[f64],
    cycles: &[LabeledCycle],
    detection_target: f64,
) -> Result<ComparisonReport> {
    let ok = labels(cycles)?;
    if !(detection_target > 0.0 && detection_target <= 1.0) {
        return Err(Error::range("detection_target", detection_target, 0.0, 1.0));
    }
    let (nn, spc) = score_parts(classifier, spc_baseline, cycles)?;
    let bad: Vec<bool> = ok.iter().map(|k| !k).collect();
    compare_scores(&nn, &spc, &bad, detection_target)
}
