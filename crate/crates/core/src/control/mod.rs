//! Closed-loop layer: forward and inverse quality models, cycle-to-cycle
//! adjustment, in-cycle profile regulation and the SPC baseline.

mod classify;
mod inverse_loop;
mod models;
mod regulation;
mod spc;

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::plant::{ParamKind, PartQuality, ProcessParams, QualityComponent};

pub use classify::{
    classify_parts, compare_scores, generate_hidden_defect_stream, label_cycle, train_classifier, ClassifierConfig, ComparisonReport,
    Confusion, HiddenDefectStream, LabeledCycle, MethodReport, score_parts,
};
pub use inverse_loop::{
    grid_search_oracle, inverse_adjust, run_inverse_loop, run_inverse_loop_timed, GridOracle, LoopConfig, Measurement,
    StepTiming, DEFAULT_WINDOW,
};
pub use models::{
    collect_cycles, fit_forward, fit_inverse, held_out_split, random_support, ForwardModel, InverseModel, ModelSpec,
    MIN_CYCLES,
};
pub use regulation::{
    profile_features, regulate_profile, train_regulator, FallbackLaw, ProfileRegulator, RegulationConfig, Regulator,
    RegulatorTraining,
};
pub use spc::{spc_chart, SpcChart, SpcPoint, SIGMA_FLOOR};

/// Relative tolerance bands used for RMS normalization and conformity.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Tolerances {
    /// Mass band as a fraction of target mass.
    pub mass: f64,
    /// Dimension band as a fraction of target dimension.
    pub dimension: f64,
    /// A part with a defect score at or above this is rejected.
    pub defect_threshold: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        Tolerances {
            mass: 0.01,
            dimension: 0.005,
            defect_threshold: 0.5,
        }
    }
}

impl Tolerances {
    /// Absolute half-width of the band for `c` around `target`.
    pub fn band(&self, c: QualityComponent, target: &PartQuality) -> f64 {
        match c {
            QualityComponent::Mass => self.mass * target.mass,
            QualityComponent::DefectScore => self.defect_threshold,
            dim => self.dimension * target.get(dim),
        }
    }

    /// Every component inside its band and defect score below threshold.
    pub fn conforms(&self, q: &PartQuality, target: &PartQuality) -> bool {
        QualityComponent::ALL.iter().all(|&c| match c {
            QualityComponent::DefectScore => q.defect_score < self.defect_threshold,
            c => (q.get(c) - target.get(c)).abs() <= self.band(c, target),
        })
    }
}

/// Per-component errors in units of the tolerance band.
pub fn normalized_errors(
    measured: &PartQuality,
    target: &PartQuality,
    components: &[QualityComponent],
    tol: &Tolerances,
) -> Vec<f64> {
    components
        .iter()
        .map(|&c| (measured.get(c) - target.get(c)) / tol.band(c, target))
        .collect()
}

/// Root of the mean of squared errors.
pub fn rms(errors: &[f64]) -> f64 {
    if errors.is_empty() {
        return 0.0;
    }
    (errors.iter().map(|e| e * e).sum::<f64>() / errors.len() as f64).sqrt()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ActionTag {
    InverseStep,
    Regulation,
    Hold,
}

impl ActionTag {
    pub fn name(self) -> &'static str {
        match self {
            ActionTag::InverseStep => "inverse_step",
            ActionTag::Regulation => "regulation",
            ActionTag::Hold => "hold",
        }
    }
}

/// A set-point change decided after one cycle.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ControlAction {
    pub cycle_index: usize,
    pub old: ProcessParams,
    pub new: ProcessParams,
    /// Adjusted parameters and the requested step for each, before clamping.
    pub adjusted: Vec<ParamKind>,
    pub step: Vec<f64>,
    pub predicted: Option<PartQuality>,
    pub rationale: ActionTag,
    /// Set when any requested value was pulled back into machine range.
    pub clamped: bool,
}

impl ControlAction {
    pub fn hold(cycle_index: usize, params: ProcessParams) -> Self {
        ControlAction {
            cycle_index,
            old: params,
            new: params,
            adjusted: Vec::new(),
            step: Vec::new(),
            predicted: None,
            rationale: ActionTag::Hold,
            clamped: false,
        }
    }

    /// Applies `step` to `old` for each adjusted parameter, clamping into
    /// machine ranges.
    pub(crate) fn stepped(
        cycle_index: usize,
        old: ProcessParams,
        adjusted: Vec<ParamKind>,
        step: Vec<f64>,
        rationale: ActionTag,
    ) -> Result<Self> {
        let mut new = old;
        let mut clamped = false;
        for (&k, &s) in adjusted.iter().zip(&step) {
            if !s.is_finite() {
                return Err(Error::NumericalFault("non-finite control step"));
            }
            let want = old.get(k) + s;
            let got = k.clamp(want);
            clamped |= got != want;
            new.set(k, got);
        }
        new.validate()?;
        Ok(ControlAction {
            cycle_index,
            old,
            new,
            adjusted,
            step,
            predicted: None,
            rationale,
            clamped,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogEntry {
    pub cycle_index: usize,
    pub params: ProcessParams,
    pub measured: PartQuality,
    pub target: PartQuality,
    pub errors: Vec<f64>,
    pub rms: f64,
    pub action: ControlAction,
    pub warning: Option<String>,
}

/// Per-cycle record of a control run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ControlLog {
    /// Components entering the normalized error vector.
    pub components: Vec<QualityComponent>,
    pub tolerances: Tolerances,
    pub entries: Vec<LogEntry>,
}

impl ControlLog {
    pub fn new(components: Vec<QualityComponent>, tolerances: Tolerances) -> Self {
        ControlLog {
            components,
            tolerances,
            entries: Vec::new(),
        }
    }

    pub fn rms_trajectory(&self) -> Vec<f64> {
        self.entries.iter().map(|e| e.rms).collect()
    }

    pub fn warnings(&self) -> impl Iterator<Item = &str> {
        self.entries.iter().filter_map(|e| e.warning.as_deref())
    }

    /// Recomputes every RMS value from its stored error vector.
    pub fn check_consistency(&self) -> Result<()> {
        for e in &self.entries {
            let again = rms(&e.errors);
            if (again - e.rms).abs() > 1e-12 * again.max(1.0) {
                return Err(Error::Invalid(format!("cycle {}: stored RMS {} != {}", e.cycle_index, e.rms, again)));
            }
        }
        Ok(())
    }

    pub fn csv_header(&self) -> Vec<String> {
        let mut h = vec!["cycle".to_string()];
        h.extend(ParamKind::ALL.iter().map(|k| k.name().to_string()));
        h.extend(QualityComponent::ALL.iter().map(|c| format!("measured_{}", c.name())));
        h.extend(QualityComponent::ALL.iter().map(|c| format!("target_{}", c.name())));
        h.extend(self.components.iter().map(|c| format!("err_{}", c.name())));
        h.extend(["rms", "action", "clamped"].map(String::from));
        h
    }

    /// One row per cycle in the column order of [`ControlLog::csv_header`].
    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut out = csv::Writer::from_writer(w);
        out.write_record(self.csv_header())?;
        for e in &self.entries {
            let mut row = vec![e.cycle_index.to_string()];
            row.extend(ParamKind::ALL.iter().map(|&k| e.params.get(k).to_string()));
            row.extend(QualityComponent::ALL.iter().map(|&c| e.measured.get(c).to_string()));
            row.extend(QualityComponent::ALL.iter().map(|&c| e.target.get(c).to_string()));
            row.extend(e.errors.iter().map(f64::to_string));
            row.push(e.rms.to_string());
            row.push(e.action.rationale.name().to_string());
            row.push(e.action.clamped.to_string());
            out.write_record(&row)?;
        }
        out.flush()?;
        Ok(())
    }

    pub fn write_json<W: Write>(&self, w: W) -> Result<()> {
        serde_json::to_writer_pretty(w, self)?;
        Ok(())
    }
}
