use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::plant::{ParamKind, ProcessParams};

/// Supported Plackett-Burman run counts.
pub const PB_SIZES: [usize; 5] = [8, 12, 16, 20, 24];

/// Largest full factorial we will enumerate.
pub const MAX_FACTORIAL_RUNS: usize = 10_000;

/// First-row generators of the cyclic Plackett-Burman designs.
const PB12: &str = "++-+++---+-";
const PB16: &str = "++++-+-++--+---";
const PB20: &str = "++--++++-+-+----++-";
const PB24: &str = "+++++-+-++--++--+-+----";

/// A coded experimental design.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DesignMatrix {
    /// Row-major coded levels in {-1, 0, +1}.
    pub runs: Vec<Vec<i8>>,
    /// One name per assigned column; assigned columns come first.
    pub factor_names: Vec<String>,
    pub dummy_columns: Vec<usize>,
    /// 2 or 3.
    pub levels: u8,
}

impl DesignMatrix {
    pub fn n_runs(&self) -> usize {
        self.runs.len()
    }

    pub fn n_columns(&self) -> usize {
        self.runs.first().map_or(0, Vec::len)
    }

    pub fn n_assigned(&self) -> usize {
        self.factor_names.len()
    }

    pub fn column(&self, j: usize) -> Vec<i8> {
        self.runs.iter().map(|r| r[j]).collect()
    }

    /// Name of column `j`, assigned or dummy.
    pub fn column_name(&self, j: usize) -> String {
        match self.factor_names.get(j) {
            Some(n) => n.clone(),
            None => format!("dummy_{}", j - self.factor_names.len() + 1),
        }
    }

    /// Rename the assigned factors.
    pub fn with_factor_names<S: AsRef<str>>(mut self, names: &[S]) -> Result<Self> {
        if names.len() != self.factor_names.len() {
            return Err(Error::Shape(format!(
                "{} names for {} assigned factors",
                names.len(),
                self.factor_names.len()
            )));
        }
        self.factor_names = names.iter().map(|s| s.as_ref().to_string()).collect();
        Ok(self)
    }

    /// Column sums and the Gram matrix, in integer arithmetic.
    pub fn gram(&self) -> (Vec<i64>, Vec<Vec<i64>>) {
        let k = self.n_columns();
        let sums = (0..k)
            .map(|j| self.runs.iter().map(|r| r[j] as i64).sum())
            .collect();
        let gram = (0..k)
            .map(|a| {
                (0..k)
                    .map(|b| self.runs.iter().map(|r| r[a] as i64 * r[b] as i64).sum())
                    .collect()
            })
            .collect();
        (sums, gram)
    }
}

fn parse_generator(g: &str) -> Vec<i8> {
    g.bytes().map(|c| if c == b'+' { 1 } else { -1 }).collect()
}

fn cyclic(generator: &str) -> Vec<Vec<i8>> {
    let g = parse_generator(generator);
    let k = g.len();
    let mut rows: Vec<Vec<i8>> = (0..k)
        .map(|i| (0..k).map(|j| g[(j + k - i) % k]).collect())
        .collect();
    rows.push(vec![-1; k]);
    rows
}

/// Full 2^3 factorial with all interaction columns: A, B, C, AB, AC, BC, ABC.
fn hadamard8() -> Vec<Vec<i8>> {
    (0..8)
        .map(|i| {
            let a: i8 = if i & 4 != 0 { 1 } else { -1 };
            let b: i8 = if i & 2 != 0 { 1 } else { -1 };
            let c: i8 = if i & 1 != 0 { 1 } else { -1 };
            vec![a, b, c, a * b, a * c, b * c, a * b * c]
        })
        .collect()
}

fn default_names(n: usize) -> Vec<String> {
    (1..=n).map(|i| format!("x{i}")).collect()
}

/// Smallest supported Plackett-Burman design holding `n_factors` factors.
pub fn pb_design(n_factors: usize) -> Result<DesignMatrix> {
    if !(1..=23).contains(&n_factors) {
        return Err(Error::range("n_factors", n_factors as f64, 1.0, 23.0));
    }
    let n_runs = PB_SIZES
        .into_iter()
        .find(|&n| n > n_factors)
        .expect("23 factors fit in 24 runs");
    let runs = match n_runs {
        8 => hadamard8(),
        12 => cyclic(PB12),
        16 => cyclic(PB16),
        20 => cyclic(PB20),
        _ => cyclic(PB24),
    };
    Ok(DesignMatrix {
        runs,
        factor_names: default_names(n_factors),
        dummy_columns: (n_factors..n_runs - 1).collect(),
        levels: 2,
    })
}

/// Full factorial in lexicographic order (first factor varies slowest).
pub fn factorial_design(n_factors: usize, levels: u8) -> Result<DesignMatrix> {
    if n_factors == 0 {
        return Err(Error::range("n_factors", 0.0, 1.0, f64::INFINITY));
    }
    let coded: &[i8] = match levels {
        2 => &[-1, 1],
        3 => &[-1, 0, 1],
        _ => return Err(Error::Invalid(format!("levels must be 2 or 3, got {levels}"))),
    };
    let size = (levels as u64).checked_pow(n_factors as u32).unwrap_or(u64::MAX);
    if size > MAX_FACTORIAL_RUNS as u64 {
        return Err(Error::Capacity(format!(
            "{levels}^{n_factors} runs exceeds the {MAX_FACTORIAL_RUNS}-run limit"
        )));
    }
    let l = levels as usize;
    let runs = (0..size as usize)
        .map(|mut i| {
            let mut row = vec![0i8; n_factors];
            for j in (0..n_factors).rev() {
                row[j] = coded[i % l];
                i /= l;
            }
            row
        })
        .collect();
    Ok(DesignMatrix {
        runs,
        factor_names: default_names(n_factors),
        dummy_columns: Vec::new(),
        levels,
    })
}

/// How one assigned design column maps onto the plant.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FactorSpec {
    pub name: String,
    /// `None` for a factor with no plant counterpart.
    #[serde(default)]
    pub param: Option<ParamKind>,
    #[serde(default)]
    pub low: f64,
    #[serde(default)]
    pub high: f64,
}

impl FactorSpec {
    pub fn param(kind: ParamKind, low: f64, high: f64) -> Self {
        FactorSpec {
            name: kind.name().to_string(),
            param: Some(kind),
            low,
            high,
        }
    }

    pub fn inert(name: &str) -> Self {
        FactorSpec {
            name: name.to_string(),
            param: None,
            low: -1.0,
            high: 1.0,
        }
    }

    fn level(&self, coded: i8) -> f64 {
        match coded {
            -1 => self.low,
            1 => self.high,
            _ => 0.5 * (self.low + self.high),
        }
    }
}

/// Turn coded runs into process parameters around `base`.
pub fn decode(design: &DesignMatrix, specs: &[FactorSpec], base: &ProcessParams) -> Result<Vec<ProcessParams>> {
    if specs.len() != design.n_assigned() {
        return Err(Error::Shape(format!(
            "{} factor ranges for {} assigned columns",
            specs.len(),
            design.n_assigned()
        )));
    }
    for s in specs {
        if let Some(kind) = s.param {
            let (lo, hi) = kind.range();
            for v in [s.low, s.high] {
                if !(v >= lo && v <= hi) {
                    return Err(Error::range(format!("{} level", s.name), v, lo, hi));
                }
            }
        }
    }
    design
        .runs
        .iter()
        .map(|row| {
            let mut p = *base;
            for (spec, &c) in specs.iter().zip(row) {
                if let Some(kind) = spec.param {
                    p.set(kind, spec.level(c));
                }
            }
            p.validate()?;
            Ok(p)
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn assert_orthogonal(d: &DesignMatrix) {
        let n = d.n_runs() as i64;
        let (sums, gram) = d.gram();
        assert!(sums.iter().all(|&s| s == 0), "{sums:?}");
        for (a, row) in gram.iter().enumerate() {
            for (b, &g) in row.iter().enumerate() {
                assert_eq!(g, if a == b { n } else { 0 }, "columns {a},{b}");
            }
        }
    }

    #[test]
    fn pb_sizes_are_orthogonal() {
        for (n_factors, n_runs) in [(7, 8), (11, 12), (15, 16), (19, 20), (23, 24)] {
            let d = pb_design(n_factors).unwrap();
            assert_eq!(d.n_runs(), n_runs);
            assert_eq!(d.n_columns(), n_runs - 1);
            assert_orthogonal(&d);
        }
    }

    #[test]
    fn pb_selects_smallest_size() {
        let d = pb_design(11).unwrap();
        assert_eq!((d.n_runs(), d.n_columns()), (12, 11));
        assert!(d.dummy_columns.is_empty());
        let d = pb_design(6).unwrap();
        assert_eq!(d.n_runs(), 8);
        assert_eq!(d.dummy_columns, vec![6]);
        assert_orthogonal(&d);
        assert_eq!(pb_design(12).unwrap().n_runs(), 16);
        assert!(pb_design(0).is_err());
        assert!(pb_design(24).is_err());
    }

    #[test]
    fn pb_last_row_all_low() {
        for n in [11, 15, 19, 23] {
            let d = pb_design(n).unwrap();
            assert!(d.runs.last().unwrap().iter().all(|&x| x == -1));
        }
    }

    #[test]
    fn factorial_designs() {
        let d = factorial_design(3, 3).unwrap();
        assert_eq!(d.n_runs(), 27);
        let mut seen = std::collections::HashSet::new();
        for r in &d.runs {
            assert!(seen.insert(r.clone()));
        }
        assert_eq!(factorial_design(1, 2).unwrap().runs, vec![vec![-1], vec![1]]);
        let d = factorial_design(2, 3).unwrap();
        assert_eq!(d.n_runs(), 9);
        for j in 0..2 {
            for lvl in [-1i8, 0, 1] {
                assert_eq!(d.column(j).iter().filter(|&&x| x == lvl).count(), 3);
            }
        }
        // lexicographic: first factor slowest
        assert_eq!(d.runs[0..3], [vec![-1, -1], vec![-1, 0], vec![-1, 1]]);
        assert!(matches!(factorial_design(9, 3), Err(Error::Capacity(_))));
        assert!(factorial_design(13, 2).is_ok());
        assert!(matches!(factorial_design(14, 2), Err(Error::Capacity(_))));
        assert!(factorial_design(2, 4).is_err());
    }

    #[test]
    fn decode_levels() {
        let d = factorial_design(1, 3).unwrap();
        let specs = [FactorSpec::param(ParamKind::HoldPressure, 300.0, 500.0)];
        let p = decode(&d, &specs, &ProcessParams::NOMINAL).unwrap();
        assert_eq!(p[0].hold_pressure, 300.0);
        assert_eq!(p[1].hold_pressure, 400.0);
        assert_eq!(p[2].hold_pressure, 500.0);
        assert_eq!(p[0].melt_temp, 230.0);

        let bad = [FactorSpec::param(ParamKind::HoldPressure, 100.0, 500.0)];
        assert!(matches!(decode(&d, &bad, &ProcessParams::NOMINAL), Err(Error::Range { .. })));
        assert!(decode(&d, &[], &ProcessParams::NOMINAL).is_err());
    }

    #[test]
    fn decode_pb12_rowwise() {
        let d = pb_design(11).unwrap();
        let mut specs = vec![
            FactorSpec::param(ParamKind::HoldPressure, 350.0, 450.0),
            FactorSpec::param(ParamKind::MeltTemp, 220.0, 240.0),
            FactorSpec::param(ParamKind::InjectSpeed, 30.0, 70.0),
        ];
        specs.extend((0..8).map(|i| FactorSpec::inert(&format!("inert{i}"))));
        let ps = decode(&d, &specs, &ProcessParams::NOMINAL).unwrap();
        assert_eq!(ps.len(), 12);
        for (row, p) in d.runs.iter().zip(&ps) {
            assert_eq!(p.hold_pressure, if row[0] > 0 { 450.0 } else { 350.0 });
            assert_eq!(p.melt_temp, if row[1] > 0 { 240.0 } else { 220.0 });
            assert_eq!(p.inject_speed, if row[2] > 0 { 70.0 } else { 30.0 });
            assert_eq!(p.cool_time, 15.0);
        }
    }
}
