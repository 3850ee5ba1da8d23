//! Peaks-over-threshold preprocessing and the tabular CSV input format.
//!
//! Input CSV: a header row with a `y` column (response), optional linear
//! covariates `x_1 … x_{p−1}` (the intercept is prepended automatically),
//! smooth covariates `z_1 … z_d`, and any further numeric columns, which can
//! be referenced by a `column:<name>` threshold.

use std::collections::BTreeMap;
use std::fmt;
use std::io::Read;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Exceedance fractions above this trigger a warning: the tail approximation
/// needs `n/N → 0`.
pub const EXCEEDANCE_FRACTION_WARN: f64 = 0.2;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "value", rename_all = "kebab-case")]
pub enum ThresholdSpec {
    /// `τ ≡ w`.
    Constant(f64),
    /// Marginal empirical quantile of the response at level `a`.
    MarginalQuantile(f64),
    /// Per-row thresholds from a named column.
    Column(String),
}

impl ThresholdSpec {
    pub fn validate(&self) -> Result<()> {
        match self {
            ThresholdSpec::Constant(w) if !w.is_finite() => Err(Error::Validation(format!(
                "constant threshold must be finite, got {w}"
            ))),
            ThresholdSpec::MarginalQuantile(a) if !(*a > 0.0 && *a < 1.0) => Err(
                Error::Validation(format!("quantile level must lie in (0, 1), got {a}")),
            ),
            ThresholdSpec::Column(name) if name.is_empty() => {
                Err(Error::Validation("threshold column name is empty".into()))
            }
            _ => Ok(()),
        }
    }
}

impl FromStr for ThresholdSpec {
    type Err = Error;

    /// Parses `const:<w>`, `quantile:<a>` or `column:<name>`.
    fn from_str(s: &str) -> Result<Self> {
        let (kind, value) = s.split_once(':').ok_or_else(|| {
            Error::Validation(format!(
                "threshold '{s}' must look like const:<w>, quantile:<a> or column:<name>"
            ))
        })?;
        let num = |v: &str| {
            v.trim()
                .parse::<f64>()
                .map_err(|_| Error::Validation(format!("threshold value '{v}' is not a number")))
        };
        let spec = match kind.trim() {
            "const" | "constant" => ThresholdSpec::Constant(num(value)?),
            "quantile" => ThresholdSpec::MarginalQuantile(num(value)?),
            "column" => ThresholdSpec::Column(value.trim().to_string()),
            other => {
                return Err(Error::Validation(format!(
                    "unknown threshold kind '{other}'"
                )))
            }
        };
        spec.validate()?;
        Ok(spec)
    }
}

impl fmt::Display for ThresholdSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ThresholdSpec::Constant(w) => write!(f, "const:{w}"),
            ThresholdSpec::MarginalQuantile(a) => write!(f, "quantile:{a}"),
            ThresholdSpec::Column(c) => write!(f, "column:{c}"),
        }
    }
}

/// Raw observations `(y*, x, z)` before thresholding. `x` rows exclude the
/// intercept.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct RawTable {
    pub y: Vec<f64>,
    pub x: Vec<Vec<f64>>,
    pub z: Vec<Vec<f64>>,
    pub extra: BTreeMap<String, Vec<f64>>,
}

impl RawTable {
    pub fn len(&self) -> usize {
        self.y.len()
    }

    pub fn is_empty(&self) -> bool {
        self.y.is_empty()
    }

    /// Number of linear covariates, excluding the intercept.
    pub fn num_x(&self) -> usize {
        self.x.first().map_or(0, Vec::len)
    }

    pub fn num_z(&self) -> usize {
        self.z.first().map_or(0, Vec::len)
    }

    pub fn read_csv_path(path: &Path) -> Result<Self> {
        let file = std::fs::File::open(path)?;
        Self::read_csv(file, true)
    }

    /// Reads the CSV format described in the module docs. With
    /// `require_y = false` the response column may be absent (prediction
    /// input) and is then filled with NaN.
    pub fn read_csv<R: Read>(reader: R, require_y: bool) -> Result<Self> {
        let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
        let headers: Vec<String> = rdr.headers()?.iter().map(str::to_string).collect();
        let y_col = headers.iter().position(|h| h == "y");
        if require_y && y_col.is_none() {
            return Err(Error::Csv {
                line: 1,
                column: "y".into(),
                message: "required response column 'y' is missing".into(),
            });
        }
        let x_cols = indexed_columns(&headers, "x_")?;
        let z_cols = indexed_columns(&headers, "z_")?;
        let mut extra_cols: Vec<(usize, String)> = headers
            .iter()
            .enumerate()
            .filter(|(i, _)| {
                Some(*i) != y_col && !x_cols.contains(i) && !z_cols.contains(i)
            })
            .map(|(i, h)| (i, h.clone()))
            .collect();
        extra_cols.sort();

        let mut table = RawTable::default();
        for (_, name) in &extra_cols {
            table.extra.insert(name.clone(), Vec::new());
        }
        for record in rdr.records() {
            let record = record?;
            let line = record.position().map_or(0, |p| p.line() as usize);
            let field = |i: usize| -> Result<f64> {
                let raw = record.get(i).unwrap_or("");
                raw.parse::<f64>().map_err(|_| Error::Csv {
                    line,
                    column: headers[i].clone(),
                    message: format!("'{raw}' is not a number"),
                })
            };
            table.y.push(match y_col {
                Some(i) => field(i)?,
                None => f64::NAN,
            });
            table.x.push(x_cols.iter().map(|&i| field(i)).collect::<Result<_>>()?);
            table.z.push(z_cols.iter().map(|&i| field(i)).collect::<Result<_>>()?);
            for (i, name) in &extra_cols {
                // non-numeric extra columns are tolerated and stored as NaN
                let v = record.get(*i).and_then(|s| s.parse().ok()).unwrap_or(f64::NAN);
                table.extra.get_mut(name).expect("inserted above").push(v);
            }
        }
        Ok(table)
    }

    /// Writes `y, x_1.., z_1.., extra..` with full round-trip precision.
    pub fn write_csv<W: std::io::Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        let mut header = vec!["y".to_string()];
        header.extend((1..=self.num_x()).map(|k| format!("x_{k}")));
        header.extend((1..=self.num_z()).map(|k| format!("z_{k}")));
        header.extend(self.extra.keys().cloned());
        w.write_record(&header)?;
        for i in 0..self.len() {
            let mut row = vec![self.y[i].to_string()];
            row.extend(self.x[i].iter().map(f64::to_string));
            row.extend(self.z[i].iter().map(f64::to_string));
            row.extend(self.extra.values().map(|c| c[i].to_string()));
            w.write_record(&row)?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Columns `prefix1, prefix2, …` in index order; gaps are an error.
fn indexed_columns(headers: &[String], prefix: &str) -> Result<Vec<usize>> {
    let mut found: Vec<(usize, usize)> = headers
        .iter()
        .enumerate()
        .filter_map(|(i, h)| {
            h.strip_prefix(prefix)
                .and_then(|rest| rest.parse::<usize>().ok())
                .map(|k| (k, i))
        })
        .collect();
    found.sort();
    for (expected, (k, _)) in (1..).zip(&found) {
        if *k != expected {
            return Err(Error::Csv {
                line: 1,
                column: format!("{prefix}{expected}"),
                message: format!("covariate columns {prefix}1..{prefix}{} must be contiguous", found.len()),
            });
        }
    }
    Ok(found.into_iter().map(|(_, i)| i).collect())
}

/// Threshold exceedances `Y_i = Y*_i − τ_i` with covariates.
#[derive(Debug, Clone, PartialEq)]
pub struct ExceedanceSample {
    pub y: Vec<f64>,
    /// Rows `(1, x_1, …, x_{p−1})`.
    pub x: Vec<Vec<f64>>,
    pub z: Vec<Vec<f64>>,
    /// Threshold applied to each retained row.
    pub tau: Vec<f64>,
    pub big_n: usize,
    pub threshold: ThresholdSpec,
}

impl ExceedanceSample {
    /// Builds a sample directly from exceedances (no thresholding step);
    /// `x` rows exclude the intercept.
    pub fn from_exceedances(y: Vec<f64>, x: Vec<Vec<f64>>, z: Vec<Vec<f64>>) -> Result<Self> {
        if y.is_empty() {
            return Err(Error::EmptySample("no observations".into()));
        }
        if x.len() != y.len() || z.len() != y.len() {
            return Err(Error::Dimension("x, z and y must have equal length".into()));
        }
        if let Some(bad) = y.iter().find(|v| !(**v > 0.0) || !v.is_finite()) {
            return Err(Error::Domain {
                what: "exceedance",
                value: *bad,
                domain: "(0, inf)",
            });
        }
        let n = y.len();
        Ok(Self {
            x: x.into_iter().map(with_intercept).collect(),
            z,
            tau: vec![0.0; n],
            big_n: n,
            threshold: ThresholdSpec::Constant(0.0),
            y,
        })
    }

    pub fn n(&self) -> usize {
        self.y.len()
    }

    /// Number of linear covariates including the intercept.
    pub fn p(&self) -> usize {
        self.x.first().map_or(1, Vec::len)
    }

    pub fn d(&self) -> usize {
        self.z.first().map_or(0, Vec::len)
    }

    pub fn exceedance_fraction(&self) -> f64 {
        self.n() as f64 / self.big_n as f64
    }

    pub fn mean_y(&self) -> f64 {
        self.y.iter().sum::<f64>() / self.n() as f64
    }

    pub fn warnings(&self) -> Vec<String> {
        let frac = self.exceedance_fraction();
        if frac > EXCEEDANCE_FRACTION_WARN {
            vec![format!(
                "exceedance fraction n/N = {frac:.3} exceeds {EXCEEDANCE_FRACTION_WARN}; \
                 the threshold is likely too low for the GPD tail approximation"
            )]
        } else {
            Vec::new()
        }
    }

    /// Keeps the rows selected by `keep`, preserving the original `N`.
    pub fn subset(&self, keep: impl Fn(usize) -> bool) -> Self {
        let idx: Vec<usize> = (0..self.n()).filter(|&i| keep(i)).collect();
        Self {
            y: idx.iter().map(|&i| self.y[i]).collect(),
            x: idx.iter().map(|&i| self.x[i].clone()).collect(),
            z: idx.iter().map(|&i| self.z[i].clone()).collect(),
            tau: idx.iter().map(|&i| self.tau[i]).collect(),
            big_n: self.big_n,
            threshold: self.threshold.clone(),
        }
    }
}

fn with_intercept(row: Vec<f64>) -> Vec<f64> {
    let mut out = Vec::with_capacity(row.len() + 1);
    out.push(1.0);
    out.extend(row);
    out
}

/// Empirical `a`-quantile as the order statistic `y_(⌈N a⌉)`, so that
/// `⌊N(1−a)⌋` observations lie strictly above it when there are no ties.
pub fn marginal_quantile(values: &[f64], a: f64) -> f64 {
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    let n = sorted.len();
    let rank = ((n as f64 * a) - 1e-9).ceil().max(1.0) as usize;
    sorted[rank.min(n) - 1]
}

/// Keeps strict exceedances `Y*_i > τ_i` and returns `Y_i = Y*_i − τ_i`.
pub fn apply_threshold(raw: &RawTable, spec: &ThresholdSpec) -> Result<ExceedanceSample> {
    spec.validate()?;
    if raw.is_empty() {
        return Err(Error::EmptySample("input table has no rows".into()));
    }
    let big_n = raw.len();
    let tau: Vec<f64> = match spec {
        ThresholdSpec::Constant(w) => vec![*w; big_n],
        ThresholdSpec::MarginalQuantile(a) => vec![marginal_quantile(&raw.y, *a); big_n],
        ThresholdSpec::Column(name) => raw
            .extra
            .get(name)
            .ok_or_else(|| {
                Error::Schema(format!("threshold column '{name}' is not present in the input"))
            })?
            .clone(),
    };
    let mut out = ExceedanceSample {
        y: Vec::new(),
        x: Vec::new(),
        z: Vec::new(),
        tau: Vec::new(),
        big_n,
        threshold: spec.clone(),
    };
    for i in 0..big_n {
        let t = tau[i];
        if !t.is_finite() {
            return Err(Error::Validation(format!("threshold for row {i} is not finite")));
        }
        if raw.y[i] > t {
            out.y.push(raw.y[i] - t);
            out.x.push(with_intercept(raw.x[i].clone()));
            out.z.push(raw.z[i].clone());
            out.tau.push(t);
        }
    }
    if out.y.is_empty() {
        return Err(Error::EmptySample(format!(
            "no observation exceeds the threshold {spec}"
        )));
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn table(y: &[f64]) -> RawTable {
        RawTable {
            y: y.to_vec(),
            x: vec![vec![]; y.len()],
            z: vec![vec![0.5]; y.len()],
            extra: BTreeMap::new(),
        }
    }

    #[test]
    fn constant_threshold() {
        let s = apply_threshold(&table(&[1.0, 2.0, 3.0]), &ThresholdSpec::Constant(1.5)).unwrap();
        assert_eq!(s.y, vec![0.5, 1.5]);
        assert_eq!((s.n(), s.big_n), (2, 3));
        assert!(s.x.iter().all(|r| r == &vec![1.0]));
    }

    #[test]
    fn quantile_threshold_count() {
        let y: Vec<f64> = (0..1000).map(|i| ((i * 7919) % 1000) as f64 + 0.5).collect();
        let s = apply_threshold(&table(&y), &ThresholdSpec::MarginalQuantile(0.9)).unwrap();
        assert_eq!(s.n(), 100);
        assert!(s.y.iter().all(|&v| v > 0.0));
    }

    #[test]
    fn column_threshold() {
        let mut t = table(&[3.0, 5.0, 9.0]);
        t.extra.insert("tau".into(), vec![2.0, 4.0, 8.0]);
        let s = apply_threshold(&t, &ThresholdSpec::Column("tau".into())).unwrap();
        assert_eq!(s.y, vec![1.0, 1.0, 1.0]);
        assert_eq!(s.n(), s.big_n);
        assert!(matches!(
            apply_threshold(&t, &ThresholdSpec::Column("nope".into())),
            Err(Error::Schema(_))
        ));
    }

    #[test]
    fn empty_exceedances() {
        let t = table(&[1.0, 2.0]);
        assert!(matches!(
            apply_threshold(&t, &ThresholdSpec::Constant(5.0)),
            Err(Error::EmptySample(_))
        ));
        assert!(matches!(
            apply_threshold(&RawTable::default(), &ThresholdSpec::Constant(0.0)),
            Err(Error::EmptySample(_))
        ));
    }

    #[test]
    fn ties_at_threshold_are_dropped() {
        let s = apply_threshold(&table(&[1.0, 2.0, 2.0, 3.0]), &ThresholdSpec::Constant(2.0)).unwrap();
        assert_eq!(s.y, vec![1.0]);
    }

    #[test]
    fn threshold_parsing() {
        assert_eq!(
            "quantile:0.9".parse::<ThresholdSpec>().unwrap(),
            ThresholdSpec::MarginalQuantile(0.9)
        );
        assert_eq!(
            "const:1.5".parse::<ThresholdSpec>().unwrap(),
            ThresholdSpec::Constant(1.5)
        );
        assert_eq!(
            "column:u".parse::<ThresholdSpec>().unwrap(),
            ThresholdSpec::Column("u".into())
        );
        assert!("quantile:1.5".parse::<ThresholdSpec>().is_err());
        assert!("0.9".parse::<ThresholdSpec>().is_err());
    }

    #[test]
    fn csv_reading() {
        let data = "y,x_1,z_1,u\n1.5,0.2,0.3,1\n2.5,-0.1,0.9,2\n";
        let t = RawTable::read_csv(data.as_bytes(), true).unwrap();
        assert_eq!(t.y, vec![1.5, 2.5]);
        assert_eq!(t.x, vec![vec![0.2], vec![-0.1]]);
        assert_eq!(t.z, vec![vec![0.3], vec![0.9]]);
        assert_eq!(t.extra["u"], vec![1.0, 2.0]);

        let missing = RawTable::read_csv("x_1,z_1\n0.1,0.2\n".as_bytes(), true).unwrap_err();
        assert!(missing.to_string().contains("'y'"));

        let bad = RawTable::read_csv("y,z_1\n1.0,abc\n".as_bytes(), true).unwrap_err();
        match bad {
            Error::Csv { line, column, .. } => {
                assert_eq!(line, 2);
                assert_eq!(column, "z_1");
            }
            other => panic!("unexpected {other}"),
        }
    }

    #[test]
    fn exceedance_fraction_warning() {
        let s = apply_threshold(&table(&[1.0, 2.0, 3.0]), &ThresholdSpec::Constant(0.0)).unwrap();
        assert_eq!(s.warnings().len(), 1);
    }
}
