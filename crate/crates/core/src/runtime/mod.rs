//! Scenario runner: config loading, pipeline wiring, artifacts and reports.
//!
//! Every scenario writes its CSV/JSON artifacts plus `report.json` into the
//! output directory. CSV artifacts are byte-identical for a given config and
//! seed; the report additionally carries wall-clock timings.

mod artifacts;
mod config;
mod profile;
mod scenarios;


use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::control::{ComparisonReport, GridOracle};
use crate::doe::ScreeningReport;
use crate::error::{Error, Result};
use crate::nnet::{DepthResult, PruneRound, SizeResult};
use crate::plant::{ParamKind, ProcessParams, QualityComponent};

pub use artifacts::{spot_check, ArtifactWriter, SpotCheck};
pub use config::{
    load_config, load_config_with_seed, parse_config, ClassifierSection, ControlConfig, DesignConfig, MetrologyConfig,
    ProfileConfig, ScenarioConfig, ScenarioKind, SupportRange, TuneConfig,
};
pub use profile::{collect_profiles, fit_profile_model, nrmse, profile_sequences, ProfilePrediction, ProfileResult};

pub const REPORT_SCHEMA_VERSION: u32 = 1;
pub const REPORT_FILE: &str = "report.json";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum CheckOp {
    #[serde(rename = "<")]
    Lt,
    #[serde(rename = "<=")]
    Le,
    #[serde(rename = ">=")]
    Ge,
    #[serde(rename = "==")]
    Eq,
}

/// A scenario-level pass/fail threshold, evaluated in self-test mode.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Check {
    pub name: String,
    pub value: f64,
    pub op: CheckOp,
    pub threshold: f64,
    pub passed: bool,
}

impl Check {
    pub fn new(name: &str, value: f64, op: CheckOp, threshold: f64) -> Self {
        let passed = match op {
            CheckOp::Lt => value < threshold,
            CheckOp::Le => value <= threshold,
            CheckOp::Ge => value >= threshold,
            CheckOp::Eq => value == threshold,
        };
        Check {
            name: name.into(),
            value,
            op,
            threshold,
            passed,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageTiming {
    pub stage: String,
    pub seconds: f64,
}

/// Per-cycle timing: the measurement plan is simulated time, inference and
/// adjustment are measured wall time.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CycleTiming {
    pub cycle: usize,
    pub measure_s: f64,
    pub infer_s: f64,
    pub adjust_s: f64,
}

impl CycleTiming {
    pub fn compute_s(&self) -> f64 {
        self.infer_s + self.adjust_s
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Timing {
    pub total_s: f64,
    pub stages: Vec<StageTiming>,
    pub cycles: Vec<CycleTiming>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BudgetEntry {
    pub cycle: usize,
    pub used_s: f64,
    pub window_s: f64,
    pub pass: bool,
}

/// Fails a cycle when measurement plan + inference + adjustment exceeds the
/// idle window.
pub fn check_budget(cycles: &[CycleTiming], window_s: f64) -> Vec<BudgetEntry> {
    cycles
        .iter()
        .map(|c| {
            let used_s = c.measure_s + c.infer_s + c.adjust_s;
            BudgetEntry {
                cycle: c.cycle,
                used_s,
                window_s,
                pass: used_s <= window_s,
            }
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelSummary {
    pub inputs: Vec<String>,
    pub outputs: Vec<String>,
    pub topology: String,
    pub held_out_correlation: Vec<f64>,
    pub n_cycles: usize,
    pub n_train: usize,
    pub n_test: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SearchSummary {
    pub sizes: Vec<SizeResult>,
    pub selected_hidden: usize,
    pub rounds: Vec<PruneRound>,
    pub final_hidden: usize,
    pub depth_comparison: Vec<DepthResult>,
    pub topology: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum ScenarioResults {
    Screen {
        response: QualityComponent,
        significant: Vec<String>,
        screening: ScreeningReport,
    },
    TrainForward {
        model: ModelSummary,
    },
    TrainInverse {
        model: ModelSummary,
    },
    TuneTopology {
        search: SearchSummary,
        profile: ProfileResult,
    },
    ClosedLoop {
        model: ModelSummary,
        oracle: GridOracle,
        start: ProcessParams,
        rms_trajectory: Vec<f64>,
        /// Adjustments made before the threshold was met, if it was.
        iterations_to_threshold: Option<usize>,
        final_params: ProcessParams,
        warnings: Vec<String>,
    },
    Regulate {
        regulator: String,
        reference_mass: f64,
        /// Final cycles averaged into the steady-state deviations.
        steady_cycles: usize,
        open_loop_deviation: f64,
        regulated_deviation: f64,
        rejection_ratio: f64,
        final_params: ProcessParams,
    },
    SpcCompare {
        comparison: ComparisonReport,
        matched_fp_ratio: Option<f64>,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub schema_version: u32,
    pub toolkit_version: String,
    /// Config with every default resolved.
    pub config: ScenarioConfig,
    pub results: ScenarioResults,
    pub checks: Vec<Check>,
    pub timing: Timing,
    pub budget: Vec<BudgetEntry>,
    /// Artifact name → file name inside `out_dir`.
    pub artifacts: BTreeMap<String, String>,
    pub out_dir: PathBuf,
}

impl RunReport {
    pub fn all_checks_pass(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }

    pub fn read(dir: &Path) -> Result<Self> {
        let f = std::fs::File::open(dir.join(REPORT_FILE))?;
        Ok(serde_json::from_reader(std::io::BufReader::new(f))?)
    }
}

pub(crate) fn param_names(ps: &[ParamKind]) -> Vec<String> {
    ps.iter().map(|k| k.name().to_string()).collect()
}

pub(crate) fn quality_names(qs: &[QualityComponent]) -> Vec<String> {
    qs.iter().map(|c| c.name().to_string()).collect()
}

/// Stage stopwatch.
pub(crate) struct Clock {
    start: Instant,
    last: Instant,
    stages: Vec<StageTiming>,
}

impl Clock {
    pub(crate) fn start() -> Self {
        let now = Instant::now();
        Clock {
            start: now,
            last: now,
            stages: Vec::new(),
        }
    }

    pub(crate) fn lap(&mut self, stage: &str) {
        let now = Instant::now();
        self.stages.push(StageTiming {
            stage: stage.into(),
            seconds: (now - self.last).as_secs_f64(),
        });
        self.last = now;
    }

    pub(crate) fn finish(self, cycles: Vec<CycleTiming>) -> Timing {
        Timing {
            total_s: self.start.elapsed().as_secs_f64(),
            stages: self.stages,
            cycles,
        }
    }
}

/// Runs the scenario, writes its artifacts and `report.json` into
/// `config.out_dir`, and returns the report.
pub fn run_scenario(config: &ScenarioConfig) -> Result<RunReport> {
    let mut config = config.clone();
    config.resolve()?;
    let kind = config.kind;
    let wrap = |e: Error| Error::Scenario {
        scenario: kind.name().into(),
        source: Box::new(e),
    };
    let mut out = ArtifactWriter::create(&config.out_dir).map_err(wrap)?;
    let mut clock = Clock::start();
    let run = scenarios::run(&config, &mut out, &mut clock).map_err(wrap)?;
    let window_s = config.metrology.window.1 - config.metrology.window.0;
    let timing = clock.finish(run.cycles);
    let budget = check_budget(&timing.cycles, window_s);
    let mut checks = run.checks;
    if kind == ScenarioKind::ClosedLoop {
        let worst = timing.cycles.iter().map(CycleTiming::compute_s).fold(0.0, f64::max);
        checks.push(Check::new("compute_per_cycle_s", worst, CheckOp::Lt, 1.0));
        let fails = budget.iter().filter(|b| !b.pass).count();
        checks.push(Check::new("budget_failures", fails as f64, CheckOp::Eq, 0.0));
    }
    let report = RunReport {
        schema_version: REPORT_SCHEMA_VERSION,
        toolkit_version: env!("CARGO_PKG_VERSION").into(),
        out_dir: config.out_dir.clone(),
        config,
        results: run.results,
        checks,
        timing,
        budget,
        artifacts: out.files().clone(),
    };
    out.write_json(REPORT_FILE, REPORT_FILE, &report).map_err(wrap)?;
    Ok(report)
}
