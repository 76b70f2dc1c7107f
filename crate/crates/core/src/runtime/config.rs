//! Scenario files.
//!
//! A scenario is a TOML document with a mandatory `kind` and `seed`; every
//! other section is optional and falls back to the documented defaults.
//! Unknown keys are rejected at every level.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::control::{
    ClassifierConfig, FallbackLaw, HiddenDefectStream, LoopConfig, ModelSpec, RegulationConfig, RegulatorTraining,
    DEFAULT_WINDOW,
};
use crate::doe::FactorSpec;
use crate::error::{Error, Result};
use crate::metrology::Station;
use crate::nnet::{SearchConfig, TrainConfig};
use crate::plant::{DisturbanceProfile, DisturbanceTarget, ParamKind, PlantConfig, QualityComponent};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ScenarioKind {
    Screen,
    TrainForward,
    TrainInverse,
    TuneTopology,
    ClosedLoop,
    Regulate,
    SpcCompare,
}

impl ScenarioKind {
    pub const ALL: [ScenarioKind; 7] = [
        ScenarioKind::Screen,
        ScenarioKind::TrainForward,
        ScenarioKind::TrainInverse,
        ScenarioKind::TuneTopology,
        ScenarioKind::ClosedLoop,
        ScenarioKind::Regulate,
        ScenarioKind::SpcCompare,
    ];

    pub fn name(self) -> &'static str {
        match self {
            ScenarioKind::Screen => "screen",
            ScenarioKind::TrainForward => "train-forward",
            ScenarioKind::TrainInverse => "train-inverse",
            ScenarioKind::TuneTopology => "tune-topology",
            ScenarioKind::ClosedLoop => "closed-loop",
            ScenarioKind::Regulate => "regulate",
            ScenarioKind::SpcCompare => "spc-compare",
        }
    }

    /// Default main cycle count, where the kind has one.
    fn default_cycles(self) -> Option<usize> {
        match self {
            ScenarioKind::Screen | ScenarioKind::TrainForward => None,
            ScenarioKind::TrainInverse | ScenarioKind::ClosedLoop => Some(120),
            ScenarioKind::TuneTopology => Some(40),
            ScenarioKind::Regulate => Some(20),
            ScenarioKind::SpcCompare => Some(2000),
        }
    }
}

impl std::fmt::Display for ScenarioKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MetrologyConfig {
    pub station: Station,
    /// (ejection, next ejection), s.
    pub window: (f64, f64),
}

impl Default for MetrologyConfig {
    fn default() -> Self {
        MetrologyConfig {
            station: Station::default(),
            window: DEFAULT_WINDOW,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SupportRange {
    pub param: ParamKind,
    pub low: f64,
    pub high: f64,
}

/// Experimental designs: the screening plan and the forward-model factorial.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DesignConfig {
    pub screen_factors: Vec<FactorSpec>,
    pub screen_replicates: usize,
    pub screen_response: QualityComponent,
    pub alpha: f64,
    /// Factors the screen is expected to flag (self-test check).
    pub expected_active: Vec<String>,
    /// Three-level full factorial for the forward model.
    pub factorial_factors: Vec<FactorSpec>,
    pub factorial_replicates: usize,
    /// Random-support ranges for inverse-model training data.
    pub support: Vec<SupportRange>,
}

impl Default for DesignConfig {
    fn default() -> Self {
        let mut screen_factors = vec![
            FactorSpec::param(ParamKind::HoldPressure, 340.0, 460.0),
            FactorSpec::param(ParamKind::MeltTemp, 215.0, 245.0),
            FactorSpec::param(ParamKind::InjectSpeed, 30.0, 70.0),
            FactorSpec::param(ParamKind::HoldTime, 3.0, 5.0),
            FactorSpec::param(ParamKind::CoolTime, 8.0, 12.0),
            FactorSpec::param(ParamKind::MoldTemp, 40.0, 60.0),
        ];
        screen_factors.extend((1..=5).map(|k| FactorSpec::inert(&format!("dummy_{k}"))));
        DesignConfig {
            screen_factors,
            screen_replicates: 6,
            screen_response: QualityComponent::WidthA,
            alpha: 0.001,
            expected_active: ["hold_pressure", "melt_temp", "inject_speed"].map(String::from).to_vec(),
            factorial_factors: vec![
                FactorSpec::param(ParamKind::HoldPressure, 350.0, 450.0),
                FactorSpec::param(ParamKind::MeltTemp, 220.0, 240.0),
                FactorSpec::param(ParamKind::InjectSpeed, 40.0, 60.0),
            ],
            factorial_replicates: 6,
            support: vec![
                SupportRange {
                    param: ParamKind::HoldPressure,
                    low: 340.0,
                    high: 460.0,
                },
                SupportRange {
                    param: ParamKind::MeltTemp,
                    low: 215.0,
                    high: 245.0,
                },
            ],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ControlConfig {
    /// Closed-loop start: hold pressure and melt temperature; the rest nominal.
    pub start_hold: f64,
    pub start_melt: f64,
    #[serde(rename = "loop")]
    pub loop_: LoopConfig,
    /// Grid resolution per axis for the reachability oracle.
    pub oracle_steps: usize,
    pub regulation: RegulationConfig,
    pub regulator: RegulatorTraining,
    /// Use the fixed proportional law instead of a trained regulator.
    pub use_fallback: bool,
    pub fallback: FallbackLaw,
}

impl Default for ControlConfig {
    fn default() -> Self {
        ControlConfig {
            start_hold: 360.0,
            start_melt: 240.0,
            loop_: LoopConfig::default(),
            oracle_steps: 61,
            regulation: RegulationConfig::default(),
            regulator: RegulatorTraining::default(),
            use_fallback: false,
            fallback: FallbackLaw::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ClassifierSection {
    pub stream: HiddenDefectStream,
    pub model: ClassifierConfig,
    pub n_train: usize,
    /// Conforming training cycles used as the SPC baseline.
    pub baseline_n: usize,
}

impl Default for ClassifierSection {
    fn default() -> Self {
        ClassifierSection {
            stream: HiddenDefectStream::default(),
            model: ClassifierConfig::default(),
            n_train: 600,
            baseline_n: 100,
        }
    }
}

/// Topology search on the forward dataset plus the recurrent profile model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TuneConfig {
    pub max_hidden: usize,
    pub search: SearchConfig,
    pub profile: ProfileConfig,
}

impl Default for TuneConfig {
    fn default() -> Self {
        TuneConfig {
            max_hidden: 8,
            search: SearchConfig {
                train: TrainConfig {
                    epochs: 1000,
                    ..TrainConfig::default()
                },
                ..SearchConfig::default()
            },
            profile: ProfileConfig::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ProfileConfig {
    /// Cycles used for training; the remaining ones are held out.
    pub train_cycles: usize,
    pub window: usize,
    /// Conditioning points per sequence.
    pub history: usize,
    pub hidden: usize,
    pub context_decay: f64,
    pub train: TrainConfig,
}

impl Default for ProfileConfig {
    fn default() -> Self {
        ProfileConfig {
            train_cycles: 30,
            window: 20,
            history: 4,
            hidden: 8,
            context_decay: 0.5,
            train: TrainConfig {
                epochs: 300,
                learning_rate: 0.01,
                ..TrainConfig::default()
            },
        }
    }
}

fn default_out_dir() -> PathBuf {
    PathBuf::from("moldloop-out")
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    pub kind: ScenarioKind,
    pub seed: u64,
    /// Main cycle count of the scenario; its meaning depends on the kind
    /// (training cycles, regulated cycles, evaluation stream length...).
    #[serde(default)]
    pub n_cycles: Option<usize>,
    #[serde(default = "default_out_dir")]
    pub out_dir: PathBuf,
    #[serde(default)]
    pub plant: PlantConfig,
    #[serde(default)]
    pub metrology: MetrologyConfig,
    #[serde(default)]
    pub design: DesignConfig,
    /// Quality-model network; defaults depend on the kind.
    #[serde(default)]
    pub network: Option<ModelSpec>,
    /// Defaults to a +20 °C melt step at cycle 3 for `regulate`, none otherwise.
    #[serde(default)]
    pub disturbance: Option<DisturbanceProfile>,
    #[serde(default)]
    pub control: ControlConfig,
    #[serde(default)]
    pub classifier: ClassifierSection,
    #[serde(default)]
    pub tune: TuneConfig,
}

impl ScenarioConfig {
    /// All defaults for `kind`, already resolved.
    pub fn new(kind: ScenarioKind, seed: u64) -> Self {
        let mut c = ScenarioConfig {
            kind,
            seed,
            n_cycles: None,
            out_dir: default_out_dir(),
            plant: PlantConfig::default(),
            metrology: MetrologyConfig::default(),
            design: DesignConfig::default(),
            network: None,
            disturbance: None,
            control: ControlConfig::default(),
            classifier: ClassifierSection::default(),
            tune: TuneConfig::default(),
        };
        c.resolve().expect("defaults are valid");
        c
    }

    /// Fill kind-dependent defaults and check cross-field constraints.
    pub fn resolve(&mut self) -> Result<()> {
        match (self.n_cycles, self.kind.default_cycles()) {
            (None, d) => self.n_cycles = d,
            (Some(_), None) => {
                return Err(Error::Config(format!("`n_cycles` is not used by the {} scenario", self.kind)));
            }
            (Some(0), Some(_)) => return Err(Error::Config("`n_cycles` must be positive".into())),
            _ => {}
        }
        if self.network.is_none() {
            self.network = match self.kind {
                ScenarioKind::TrainInverse | ScenarioKind::ClosedLoop => Some(ModelSpec::inverse()),
                _ => Some(ModelSpec::default()),
            };
        }
        if self.disturbance.is_none() {
            self.disturbance = Some(match self.kind {
                ScenarioKind::Regulate => DisturbanceProfile::step(DisturbanceTarget::MeltTempOffset, 20.0, 3),
                _ => DisturbanceProfile::none(),
            });
        }
        self.check_window()?;
        if let Some(d) = &self.disturbance {
            d.validate().map_err(|e| Error::Config(format!("disturbance: {e}")))?;
        }
        if self.kind == ScenarioKind::TuneTopology {
            let total = self.n_cycles.unwrap_or(0);
            if self.tune.profile.train_cycles == 0 || self.tune.profile.train_cycles >= total {
                return Err(Error::Config(format!(
                    "tune.profile.train_cycles must be in 1..{total} (n_cycles)"
                )));
            }
        }
        Ok(())
    }

    fn check_window(&self) -> Result<()> {
        let (e, end) = self.metrology.window;
        if !(e.is_finite() && end.is_finite() && end > e) {
            return Err(Error::Config(format!("metrology.window ({e}, {end}) must be increasing")));
        }
        Ok(())
    }

    pub fn seeds(&self) -> crate::rng::SeedTree {
        crate::rng::SeedTree::new(self.seed)
    }
}

/// Parse a scenario from TOML text. `seed_override` replaces (or supplies)
/// the file's seed.
pub fn parse_config(text: &str, seed_override: Option<u64>) -> Result<ScenarioConfig> {
    let mut table: toml::Table = text.parse().map_err(|e: toml::de::Error| Error::Config(e.to_string()))?;
    if let Some(seed) = seed_override {
        let seed = i64::try_from(seed).map_err(|_| Error::Config(format!("seed {seed} exceeds the TOML integer range")))?;
        table.insert("seed".into(), toml::Value::Integer(seed));
    }
    if !table.contains_key("seed") {
        return Err(Error::MissingSeed);
    }
    // Re-parse from text when possible so errors carry line and column.
    let mut cfg: ScenarioConfig = if seed_override.is_none() {
        toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?
    } else {
        table.try_into().map_err(|e: toml::de::Error| Error::Config(e.to_string()))?
    };
    cfg.resolve()?;
    Ok(cfg)
}

pub fn load_config(path: &Path) -> Result<ScenarioConfig> {
    load_config_with_seed(path, None)
}

pub fn load_config_with_seed(path: &Path, seed_override: Option<u64>) -> Result<ScenarioConfig> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
    parse_config(&text, seed_override).map_err(|e| match e {
        Error::Config(m) => Error::Config(format!("{}: {m}", path.display())),
        other => other,
    })
}
