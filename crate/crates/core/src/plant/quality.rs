use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Quality characteristics of one molded part.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PartQuality {
    /// g
    pub mass: f64,
    /// mm
    pub length: f64,
    /// mm
    pub width_a: f64,
    /// mm
    pub width_b: f64,
    /// mm
    pub thickness: f64,
    /// Aspect-defect proxy in [0, 1].
    pub defect_score: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, PartialOrd, Ord)]
#[serde(rename_all = "snake_case")]
pub enum QualityComponent {
    Mass,
    Length,
    WidthA,
    WidthB,
    Thickness,
    DefectScore,
}

impl QualityComponent {
    pub const ALL: [QualityComponent; 6] = [
        QualityComponent::Mass,
        QualityComponent::Length,
        QualityComponent::WidthA,
        QualityComponent::WidthB,
        QualityComponent::Thickness,
        QualityComponent::DefectScore,
    ];

    pub const DIMENSIONS: [QualityComponent; 4] = [
        QualityComponent::Length,
        QualityComponent::WidthA,
        QualityComponent::WidthB,
        QualityComponent::Thickness,
    ];

    pub fn name(self) -> &'static str {
        match self {
            QualityComponent::Mass => "mass",
            QualityComponent::Length => "length",
            QualityComponent::WidthA => "width_a",
            QualityComponent::WidthB => "width_b",
            QualityComponent::Thickness => "thickness",
            QualityComponent::DefectScore => "defect_score",
        }
    }
}

impl std::str::FromStr for QualityComponent {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        QualityComponent::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| Error::Invalid(format!("unknown quality component `{s}`")))
    }
}

impl PartQuality {
    pub fn get(&self, c: QualityComponent) -> f64 {
        match c {
            QualityComponent::Mass => self.mass,
            QualityComponent::Length => self.length,
            QualityComponent::WidthA => self.width_a,
            QualityComponent::WidthB => self.width_b,
            QualityComponent::Thickness => self.thickness,
            QualityComponent::DefectScore => self.defect_score,
        }
    }

    pub fn set(&mut self, c: QualityComponent, v: f64) {
        match c {
            QualityComponent::Mass => self.mass = v,
            QualityComponent::Length => self.length = v,
            QualityComponent::WidthA => self.width_a = v,
            QualityComponent::WidthB => self.width_b = v,
            QualityComponent::Thickness => self.thickness = v,
            QualityComponent::DefectScore => self.defect_score = v,
        }
    }

    pub fn validate(&self) -> Result<()> {
        for c in [QualityComponent::Mass]
            .into_iter()
            .chain(QualityComponent::DIMENSIONS)
        {
            let v = self.get(c);
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::range(c.name(), v, f64::MIN_POSITIVE, f64::INFINITY));
            }
        }
        if !(0.0..=1.0).contains(&self.defect_score) {
            return Err(Error::range("defect_score", self.defect_score, 0.0, 1.0));
        }
        Ok(())
    }
}
