//! Artifact files and the spot-check that recomputes report values from
//! them.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::scenarios::steady_deviation;
use super::{nrmse, ProfilePrediction, RunReport, ScenarioResults};
use crate::control::{compare_scores, rms};
use crate::doe::{fisher_screen, pb_design};
use crate::error::{Error, Result};
use crate::stats::pearson;

/// Writes files into one output directory and remembers what it wrote.
#[derive(Debug)]
pub struct ArtifactWriter {
    dir: PathBuf,
    files: BTreeMap<String, String>,
}

impl ArtifactWriter {
    pub fn create(dir: &Path) -> Result<Self> {
        std::fs::create_dir_all(dir)?;
        Ok(ArtifactWriter {
            dir: dir.to_path_buf(),
            files: BTreeMap::new(),
        })
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    pub fn files(&self) -> &BTreeMap<String, String> {
        &self.files
    }

    /// Hands a buffered writer for `file` to `f`.
    pub fn write_with<F>(&mut self, name: &str, file: &str, f: F) -> Result<()>
    where
        F: FnOnce(&mut BufWriter<File>) -> Result<()>,
    {
        let mut w = BufWriter::new(File::create(self.dir.join(file))?);
        f(&mut w)?;
        w.flush()?;
        self.files.insert(name.into(), file.into());
        Ok(())
    }

    pub fn write_json<T: Serialize>(&mut self, name: &str, file: &str, value: &T) -> Result<()> {
        self.write_with(name, file, |w| {
            serde_json::to_writer_pretty(&mut *w, value)?;
            writeln!(w)?;
            Ok(())
        })
    }

    /// CSV with a header row and string cells.
    pub fn write_rows(&mut self, name: &str, file: &str, header: &[String], rows: &[Vec<String>]) -> Result<()> {
        self.write_with(name, file, |w| {
            let mut out = csv::Writer::from_writer(w);
            out.write_record(header)?;
            for r in rows {
                out.write_record(r)?;
            }
            out.flush()?;
            Ok(())
        })
    }
}

/// One report value recomputed from an artifact.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpotCheck {
    pub value: String,
    pub artifact: String,
    pub reported: f64,
    pub recomputed: f64,
    pub passed: bool,
}

impl SpotCheck {
    fn new(value: &str, artifact: &str, reported: f64, recomputed: f64) -> Self {
        let scale = reported.abs().max(recomputed.abs()).max(1e-300);
        let passed = reported == recomputed
            || (reported.is_nan() && recomputed.is_nan())
            || (reported - recomputed).abs() / scale <= 1e-12;
        SpotCheck {
            value: value.into(),
            artifact: artifact.into(),
            reported,
            recomputed,
            passed,
        }
    }
}

struct Table {
    header: Vec<String>,
    rows: Vec<Vec<String>>,
}

impl Table {
    fn read(dir: &Path, report: &RunReport, name: &str) -> Result<(Self, String)> {
        let file = report
            .artifacts
            .get(name)
            .ok_or_else(|| Error::Invalid(format!("report lists no `{name}` artifact")))?;
        let mut rdr = csv::Reader::from_path(dir.join(file))?;
        let header = rdr.headers()?.iter().map(String::from).collect();
        let rows = rdr
            .records()
            .map(|r| r.map(|r| r.iter().map(String::from).collect()))
            .collect::<std::result::Result<_, _>>()?;
        Ok((Table { header, rows }, file.clone()))
    }

    fn col(&self, name: &str) -> Result<usize> {
        self.header
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| Error::Shape(format!("missing column `{name}`")))
    }

    fn floats(&self, name: &str) -> Result<Vec<f64>> {
        let j = self.col(name)?;
        self.rows
            .iter()
            .map(|r| r[j].parse::<f64>().map_err(|e| Error::Invalid(format!("column {name}: {e}"))))
            .collect()
    }
}

fn correlations(dir: &Path, report: &RunReport, outputs: &[String], reported: &[f64]) -> Result<Vec<SpotCheck>> {
    let (t, file) = Table::read(dir, report, "held_out")?;
    outputs
        .iter()
        .zip(reported)
        .map(|(o, &r)| {
            let c = pearson(&t.floats(&format!("predicted_{o}"))?, &t.floats(&format!("target_{o}"))?);
            Ok(SpotCheck::new(&format!("held_out_correlation[{o}]"), &file, r, c))
        })
        .collect()
}

/// Recompute the headline numbers of `report` from the artifacts in `dir`.
pub fn spot_check(report: &RunReport, dir: &Path) -> Result<Vec<SpotCheck>> {
    let mut out = Vec::new();
    match &report.results {
        ScenarioResults::Screen {
            response, screening, ..
        } => {
            let (t, file) = Table::read(dir, report, "design")?;
            let prefix = format!("{}_", response.name());
            let cols: Vec<usize> = (0..t.header.len()).filter(|&j| t.header[j].starts_with(&prefix)).collect();
            let responses: Vec<Vec<f64>> = t
                .rows
                .iter()
                .map(|r| cols.iter().map(|&j| r[j].parse::<f64>()).collect::<std::result::Result<_, _>>())
                .collect::<std::result::Result<_, _>>()
                .map_err(|e| Error::Invalid(format!("design responses: {e}")))?;
            let names: Vec<&str> = screening.factors.iter().map(|f| f.factor.as_str()).collect();
            let design = pb_design(names.len())?.with_factor_names(&names)?;
            let again = fisher_screen(&design, &responses, screening.alpha)?;
            for (a, b) in screening.factors.iter().zip(&again.factors) {
                out.push(SpotCheck::new(&format!("p[{}]", a.factor), &file, a.p_value, b.p_value));
            }
        }
        ScenarioResults::TrainForward { model } | ScenarioResults::TrainInverse { model } => {
            out.extend(correlations(dir, report, &model.outputs, &model.held_out_correlation)?);
        }
        ScenarioResults::TuneTopology { search, profile } => {
            let (t, file) = Table::read(dir, report, "profile_predictions")?;
            let targets = t.floats("target")?;
            let preds = t.floats("predicted")?;
            let rows: Vec<ProfilePrediction> = targets
                .iter()
                .zip(&preds)
                .map(|(&target, &predicted)| ProfilePrediction {
                    cycle: 0,
                    step: 0,
                    target,
                    predicted,
                })
                .collect();
            out.push(SpotCheck::new("profile.nrmse", &file, profile.nrmse, nrmse(&rows).2));
            let (t, file) = Table::read(dir, report, "search_sizes")?;
            let hidden = t.floats("hidden")?;
            let val = t.floats("validation_mse")?;
            let best = val
                .iter()
                .enumerate()
                .min_by(|a, b| a.1.total_cmp(b.1))
                .map_or(f64::NAN, |(i, _)| hidden[i]);
            out.push(SpotCheck::new("search.selected_hidden", &file, search.selected_hidden as f64, best));
        }
        ScenarioResults::ClosedLoop {
            model, rms_trajectory, ..
        } => {
            out.extend(correlations(dir, report, &model.outputs, &model.held_out_correlation)?);
            let (t, file) = Table::read(dir, report, "control_log")?;
            let errs: Vec<Vec<f64>> = t
                .header
                .iter()
                .filter(|h| h.starts_with("err_"))
                .map(|h| t.floats(h))
                .collect::<Result<_>>()?;
            for (i, &r) in rms_trajectory.iter().enumerate() {
                let e: Vec<f64> = errs.iter().map(|c| c[i]).collect();
                out.push(SpotCheck::new(&format!("rms[{i}]"), &file, r, rms(&e)));
            }
        }
        ScenarioResults::Regulate {
            reference_mass,
            steady_cycles,
            open_loop_deviation,
            regulated_deviation,
            ..
        } => {
            let (t, file) = Table::read(dir, report, "control_log")?;
            let dev = steady_deviation(&t.floats("measured_mass")?, *reference_mass, *steady_cycles);
            out.push(SpotCheck::new("regulated_deviation", &file, *regulated_deviation, dev));
            let (t, file) = Table::read(dir, report, "open_loop")?;
            let dev = steady_deviation(&t.floats("mass")?, *reference_mass, *steady_cycles);
            out.push(SpotCheck::new("open_loop_deviation", &file, *open_loop_deviation, dev));
        }
        ScenarioResults::SpcCompare {
            comparison,
            matched_fp_ratio,
        } => {
            let (t, file) = Table::read(dir, report, "scores")?;
            let bad: Vec<bool> = t.floats("nonconforming")?.iter().map(|&b| b != 0.0).collect();
            let again = compare_scores(&t.floats("nn_score")?, &t.floats("spc_abs_z")?, &bad, comparison.detection_target)?;
            let fpr = |m: &Option<crate::control::MethodReport>| {
                m.as_ref().and_then(|m| m.false_positive_rate).unwrap_or(f64::NAN)
            };
            out.push(SpotCheck::new("nn_matched.fp_rate", &file, fpr(&comparison.nn_matched), fpr(&again.nn_matched)));
            out.push(SpotCheck::new("spc_matched.fp_rate", &file, fpr(&comparison.spc_matched), fpr(&again.spc_matched)));
            out.push(SpotCheck::new(
                "matched_fp_ratio",
                &file,
                matched_fp_ratio.unwrap_or(f64::NAN),
                again.matched_fp_ratio().unwrap_or(f64::NAN),
            ));
        }
    }
    Ok(out)
}
