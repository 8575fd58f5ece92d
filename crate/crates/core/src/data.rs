//! Balanced panel containers, long-format CSV I/O and covariate time averages.

use std::collections::HashMap;
use std::io::{Read, Write};
use std::path::Path;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// A balanced panel of `N` units observed over `T` periods with `Q` covariates.
///
/// Outcomes are stored as an N×T matrix and each covariate as its own N×T
/// matrix, so cross-sectional operators act on all periods at once.
#[derive(Debug, Clone, PartialEq)]
pub struct PanelData {
    y: DMatrix<f64>,
    x: Vec<DMatrix<f64>>,
    unit_ids: Vec<String>,
    time_ids: Vec<String>,
    covariate_names: Vec<String>,
}

impl PanelData {
    pub fn new(
        y: DMatrix<f64>,
        x: Vec<DMatrix<f64>>,
        unit_ids: Vec<String>,
        time_ids: Vec<String>,
        covariate_names: Vec<String>,
    ) -> Result<Self> {
        let (n, t) = y.shape();
        if n < 2 || t < 2 {
            return Err(Error::InvalidPanel(format!("need N >= 2 and T >= 2, got N={n}, T={t}")));
        }
        if x.is_empty() {
            return Err(Error::InvalidPanel("need at least one covariate".into()));
        }
        if let Some(bad) = x.iter().position(|m| m.shape() != (n, t)) {
            return Err(Error::InvalidPanel(format!(
                "covariate {bad} has shape {:?}, expected ({n}, {t})",
                x[bad].shape()
            )));
        }
        if unit_ids.len() != n || time_ids.len() != t || covariate_names.len() != x.len() {
            return Err(Error::InvalidPanel("label counts do not match data dimensions".into()));
        }
        if y.iter().chain(x.iter().flat_map(|m| m.iter())).any(|v| !v.is_finite()) {
            return Err(Error::InvalidPanel("non-finite value in panel".into()));
        }
        Ok(Self {
            y,
            x,
            unit_ids,
            time_ids,
            covariate_names,
        })
    }

    /// Panel with generated labels `u0..`, `0..` and `x1..`.
    pub fn from_matrices(y: DMatrix<f64>, x: Vec<DMatrix<f64>>) -> Result<Self> {
        let units = (0..y.nrows()).map(|i| format!("u{i}")).collect();
        let times = (0..y.ncols()).map(|t| t.to_string()).collect();
        let names = (1..=x.len()).map(|q| format!("x{q}")).collect();
        Self::new(y, x, units, times, names)
    }

    pub fn n_units(&self) -> usize {
        self.y.nrows()
    }

    pub fn n_periods(&self) -> usize {
        self.y.ncols()
    }

    pub fn n_covariates(&self) -> usize {
        self.x.len()
    }

    /// Outcomes, N×T.
    pub fn y(&self) -> &DMatrix<f64> {
        &self.y
    }

    /// Covariate `q`, N×T.
    pub fn x(&self, q: usize) -> &DMatrix<f64> {
        &self.x[q]
    }

    pub fn covariates(&self) -> &[DMatrix<f64>] {
        &self.x
    }

    /// The N×Q regressor matrix of period `t`.
    pub fn x_period(&self, t: usize) -> DMatrix<f64> {
        DMatrix::from_fn(self.n_units(), self.n_covariates(), |i, q| self.x[q][(i, t)])
    }

    pub fn unit_ids(&self) -> &[String] {
        &self.unit_ids
    }

    pub fn time_ids(&self) -> &[String] {
        &self.time_ids
    }

    pub fn covariate_names(&self) -> &[String] {
        &self.covariate_names
    }

    /// Column norms of the stacked NT×Q design.
    pub fn covariate_norms(&self) -> Vec<f64> {
        self.x.iter().map(|m| m.norm()).collect()
    }

    /// Residual matrix `Y - Σ_q β_q X_q`.
    pub fn residuals(&self, beta: &[f64]) -> DMatrix<f64> {
        let mut out = self.y.clone();
        for (xq, b) in self.x.iter().zip(beta) {
            out -= xq * *b;
        }
        out
    }
}

/// Per-unit time averages of the covariates, N×Q.
#[derive(Debug, Clone, PartialEq)]
pub struct CovariateAverages {
    pub xbar: DMatrix<f64>,
}

pub fn compute_time_averages(panel: &PanelData) -> CovariateAverages {
    let (n, t) = (panel.n_units(), panel.n_periods());
    let xbar = DMatrix::from_fn(n, panel.n_covariates(), |i, q| {
        panel.x(q).row(i).iter().sum::<f64>() / t as f64
    });
    CovariateAverages { xbar }
}

/// Column names of a long-format panel CSV.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CsvSchema {
    pub unit: String,
    pub time: String,
    pub y: String,
    /// Covariate columns; `None` takes every remaining column in file order.
    pub covariates: Option<Vec<String>>,
}

impl Default for CsvSchema {
    fn default() -> Self {
        Self {
            unit: "unit".into(),
            time: "time".into(),
            y: "y".into(),
            covariates: None,
        }
    }
}

pub fn load_panel_csv(path: impl AsRef<Path>, schema: &CsvSchema) -> Result<PanelData> {
    let file = std::fs::File::open(path)?;
    read_panel_csv(file, schema)
}

/// Parse a long-format panel. Units keep their order of first appearance;
/// times are sorted ascending (numerically when every label parses as a
/// number). Parse errors report the 1-based data row, header excluded.
pub fn read_panel_csv<R: Read>(reader: R, schema: &CsvSchema) -> Result<PanelData> {
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).trim(csv::Trim::All).from_reader(reader);
    let headers = rdr.headers()?.clone();
    let find = |name: &str| {
        headers
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| Error::InvalidPanel(format!("missing column `{name}`")))
    };
    let unit_col = find(&schema.unit)?;
    let time_col = find(&schema.time)?;
    let y_col = find(&schema.y)?;
    let cov_names: Vec<String> = match &schema.covariates {
        Some(names) => names.clone(),
        None => headers
            .iter()
            .enumerate()
            .filter(|(i, _)| ![unit_col, time_col, y_col].contains(i))
            .map(|(_, h)| h.to_string())
            .collect(),
    };
    if cov_names.is_empty() {
        return Err(Error::InvalidPanel("no covariate columns".into()));
    }
    let cov_cols = cov_names.iter().map(|c| find(c)).collect::<Result<Vec<_>>>()?;

    let mut units: Vec<String> = Vec::new();
    let mut unit_index: HashMap<String, usize> = HashMap::new();
    let mut times: Vec<String> = Vec::new();
    let mut time_seen: HashMap<String, ()> = HashMap::new();
    let mut cells: HashMap<(usize, String), Vec<f64>> = HashMap::new();

    for (k, record) in rdr.records().enumerate() {
        let row = k + 1;
        let record = record?;
        let unit = record.get(unit_col).unwrap_or("").to_string();
        let time = record.get(time_col).unwrap_or("").to_string();
        let parse = |col: usize, name: &str| -> Result<f64> {
            let raw = record.get(col).unwrap_or("");
            let v: f64 = raw.parse().map_err(|_| Error::Parse {
                row,
                column: name.to_string(),
                message: format!("`{raw}` is not a number"),
            })?;
            if !v.is_finite() {
                return Err(Error::Parse {
                    row,
                    column: name.to_string(),
                    message: format!("`{raw}` is not finite"),
                });
            }
            Ok(v)
        };
        let mut values = Vec::with_capacity(1 + cov_cols.len());
        values.push(parse(y_col, &schema.y)?);
        for (&c, name) in cov_cols.iter().zip(&cov_names) {
            values.push(parse(c, name)?);
        }
        let ui = *unit_index.entry(unit.clone()).or_insert_with(|| {
            units.push(unit.clone());
            units.len() - 1
        });
        if time_seen.insert(time.clone(), ()).is_none() {
            times.push(time.clone());
        }
        if cells.insert((ui, time.clone()), values).is_some() {
            return Err(Error::DuplicateKey { unit, time });
        }
    }

    if times.iter().all(|t| t.parse::<f64>().is_ok()) {
        times.sort_by(|a, b| a.parse::<f64>().unwrap().total_cmp(&b.parse::<f64>().unwrap()));
    } else {
        times.sort();
    }

    let (n, t, q) = (units.len(), times.len(), cov_names.len());
    let mut y = DMatrix::zeros(n, t);
    let mut x = vec![DMatrix::zeros(n, t); q];
    for (i, unit) in units.iter().enumerate() {
        for (s, time) in times.iter().enumerate() {
            let values = cells.get(&(i, time.clone())).ok_or_else(|| Error::UnbalancedPanel {
                unit: unit.clone(),
                time: time.clone(),
            })?;
            y[(i, s)] = values[0];
            for (qq, xq) in x.iter_mut().enumerate() {
                xq[(i, s)] = values[qq + 1];
            }
        }
    }
    PanelData::new(y, x, units, times, cov_names)
}

pub fn write_panel_csv(panel: &PanelData, path: impl AsRef<Path>) -> Result<()> {
    let file = std::fs::File::create(path)?;
    write_panel(panel, file)
}

/// Write `unit,time,y,<covariates>` rows, unit-major. Floats use the
/// shortest representation that round-trips exactly.
pub fn write_panel<W: Write>(panel: &PanelData, writer: W) -> Result<()> {
    let mut wtr = csv::Writer::from_writer(writer);
    let mut header = vec!["unit".to_string(), "time".to_string(), "y".to_string()];
    header.extend(panel.covariate_names().iter().cloned());
    wtr.write_record(&header)?;
    for i in 0..panel.n_units() {
        for t in 0..panel.n_periods() {
            let mut rec = vec![
                panel.unit_ids()[i].clone(),
                panel.time_ids()[t].clone(),
                panel.y()[(i, t)].to_string(),
            ];
            rec.extend(panel.covariates().iter().map(|m| m[(i, t)].to_string()));
            wtr.write_record(&rec)?;
        }
    }
    wtr.flush()?;
    Ok(())
}
