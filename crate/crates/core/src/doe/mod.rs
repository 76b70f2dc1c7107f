//! Screening designs and Fisher-test factor screening.

mod design;

pub use design::{decode, factorial_design, pb_design, DesignMatrix, FactorSpec, MAX_FACTORIAL_RUNS, PB_SIZES};

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::plant::{ParamKind, ProcessParams};
use crate::stats::f_sf;

pub const DEFAULT_ALPHA: f64 = 0.05;

/// Main effect of every column: mean response at +1 minus mean at −1.
pub fn effects(design: &DesignMatrix, responses: &[f64]) -> Result<Vec<f64>> {
    if responses.len() != design.n_runs() {
        return Err(Error::Shape(format!(
            "{} responses for {} runs",
            responses.len(),
            design.n_runs()
        )));
    }
    Ok((0..design.n_columns())
        .map(|j| {
            let (mut hi, mut nh, mut lo, mut nl) = (0.0, 0usize, 0.0, 0usize);
            for (row, &y) in design.runs.iter().zip(responses) {
                match row[j] {
                    1 => {
                        hi += y;
                        nh += 1;
                    }
                    -1 => {
                        lo += y;
                        nl += 1;
                    }
                    _ => {}
                }
            }
            hi / nh as f64 - lo / nl as f64
        })
        .collect())
}

/// Fisher test of one design column.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FactorTest {
    pub factor: String,
    pub column: usize,
    pub effect: f64,
    pub sum_of_squares: f64,
    pub f_statistic: f64,
    pub p_value: f64,
    pub significant: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScreeningReport {
    /// Assigned factors, in column order.
    pub factors: Vec<FactorTest>,
    pub error_df: usize,
    pub error_mean_square: f64,
    pub alpha: f64,
}

impl ScreeningReport {
    pub fn significant_factors(&self) -> Vec<&str> {
        self.factors
            .iter()
            .filter(|f| f.significant)
            .map(|f| f.factor.as_str())
            .collect()
    }

    /// `factor,effect,SS,F,p,significant`
    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut out = csv::Writer::from_writer(w);
        out.write_record(["factor", "effect", "SS", "F", "p", "significant"])?;
        for f in &self.factors {
            out.write_record([
                f.factor.clone(),
                f.effect.to_string(),
                f.sum_of_squares.to_string(),
                f.f_statistic.to_string(),
                f.p_value.to_string(),
                f.significant.to_string(),
            ])?;
        }
        out.flush()?;
        Ok(())
    }
}

/// Screen the assigned factors of a two-level design.
///
/// `responses[i]` holds the replicates of run `i` (balanced: every run has
/// the same count). Error is pooled from the dummy columns plus pure
/// replicate error.
pub fn fisher_screen(design: &DesignMatrix, responses: &[Vec<f64>], alpha: f64) -> Result<ScreeningReport> {
    if design.levels != 2 {
        return Err(Error::Invalid("Fisher screening needs a two-level design".into()));
    }
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(Error::range("alpha", alpha, 0.0, 1.0));
    }
    if responses.len() != design.n_runs() {
        return Err(Error::Shape(format!(
            "{} response sets for {} runs",
            responses.len(),
            design.n_runs()
        )));
    }
    let reps = responses.first().map_or(0, Vec::len);
    if reps == 0 || responses.iter().any(|r| r.len() != reps) {
        return Err(Error::Shape("every run needs the same, non-zero number of replicates".into()));
    }
    if responses.iter().flatten().any(|y| !y.is_finite()) {
        return Err(Error::Invalid("responses must be finite".into()));
    }

    let n_obs = (design.n_runs() * reps) as f64;
    let run_means: Vec<f64> = responses.iter().map(|r| r.iter().sum::<f64>() / reps as f64).collect();
    let eff = effects(design, &run_means)?;
    let ss = |e: f64| n_obs * e * e / 4.0;

    let ss_dummy: f64 = design.dummy_columns.iter().map(|&j| ss(eff[j])).sum();
    let ss_pure: f64 = responses
        .iter()
        .zip(&run_means)
        .map(|(r, m)| r.iter().map(|y| (y - m).powi(2)).sum::<f64>())
        .sum();
    let error_df = design.dummy_columns.len() + design.n_runs() * (reps - 1);
    if error_df == 0 {
        return Err(Error::Inference(
            "no dummy columns and no replicates: error variance cannot be estimated; add replicates".into(),
        ));
    }
    let error_ms = (ss_dummy + ss_pure) / error_df as f64;

    let factors = (0..design.n_assigned())
        .map(|j| {
            let s = ss(eff[j]);
            let (f, p) = if s == 0.0 {
                (0.0, 1.0)
            } else if error_ms == 0.0 {
                (f64::INFINITY, 0.0)
            } else {
                let f = s / error_ms;
                (f, f_sf(f, 1.0, error_df as f64))
            };
            FactorTest {
                factor: design.factor_names[j].clone(),
                column: j,
                effect: eff[j],
                sum_of_squares: s,
                f_statistic: f,
                p_value: p,
                significant: p < alpha,
            }
        })
        .collect();
    Ok(ScreeningReport {
        factors,
        error_df,
        error_mean_square: error_ms,
        alpha,
    })
}

/// Unreplicated convenience wrapper.
pub fn fisher_screen_single(design: &DesignMatrix, responses: &[f64], alpha: f64) -> Result<ScreeningReport> {
    let sets: Vec<Vec<f64>> = responses.iter().map(|&y| vec![y]).collect();
    fisher_screen(design, &sets, alpha)
}

/// Design table: run index, coded columns, decoded parameters, then
/// response replicates.
pub fn write_design_csv<W: Write>(
    w: W,
    design: &DesignMatrix,
    decoded: &[ProcessParams],
    response_name: &str,
    responses: &[Vec<f64>],
) -> Result<()> {
    if decoded.len() != design.n_runs() || responses.len() != design.n_runs() {
        return Err(Error::Shape("decoded runs and responses must match the design".into()));
    }
    let mut out = csv::Writer::from_writer(w);
    let reps = responses.first().map_or(0, Vec::len);
    let mut header = vec!["run".to_string()];
    header.extend((0..design.n_columns()).map(|j| design.column_name(j)));
    header.extend(ParamKind::ALL.iter().map(|k| k.name().to_string()));
    header.extend((1..=reps).map(|r| format!("{response_name}_{r}")));
    out.write_record(&header)?;
    for (i, row) in design.runs.iter().enumerate() {
        let mut rec = vec![i.to_string()];
        rec.extend(row.iter().map(|c| c.to_string()));
        rec.extend(ParamKind::ALL.iter().map(|&k| decoded[i].get(k).to_string()));
        rec.extend(responses[i].iter().map(f64::to_string));
        out.write_record(&rec)?;
    }
    out.flush()?;
    Ok(())
}
