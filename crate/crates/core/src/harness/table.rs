use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Marker written for a failed cell.
pub const FAILED_CELL: &str = "NA";

/// A rectangular table of reals keyed by one or more label columns.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResultTable {
    pub caption: String,
    /// Names of the key columns, e.g. `["N", "T"]`.
    pub key_names: Vec<String>,
    pub columns: Vec<String>,
    pub rows: Vec<TableRow>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TableRow {
    pub keys: Vec<String>,
    /// `None` marks a failed cell.
    pub cells: Vec<Option<f64>>,
}

impl ResultTable {
    pub fn new(caption: impl Into<String>, key_names: &[&str], columns: Vec<String>) -> Self {
        Self {
            caption: caption.into(),
            key_names: key_names.iter().map(|s| s.to_string()).collect(),
            columns,
            rows: Vec::new(),
        }
    }

    pub fn push_row(&mut self, keys: Vec<String>, cells: Vec<Option<f64>>) {
        assert_eq!(keys.len(), self.key_names.len(), "key count mismatch");
        assert_eq!(cells.len(), self.columns.len(), "cell count mismatch");
        self.rows.push(TableRow { keys, cells });
    }

    /// Cell lookup by key tuple and column name.
    pub fn get(&self, keys: &[&str], column: &str) -> Option<f64> {
        let c = self.columns.iter().position(|h| h == column)?;
        let row = self.rows.iter().find(|r| r.keys.iter().map(String::as_str).eq(keys.iter().copied()))?;
        row.cells[c]
    }

    /// CSV with the caption and key-column count in two leading `#` lines.
    /// Cells use the shortest exact float representation.
    pub fn to_csv(&self) -> String {
        let mut wtr = csv::Writer::from_writer(Vec::new());
        let mut header = self.key_names.clone();
        header.extend(self.columns.iter().cloned());
        wtr.write_record(&header).expect("in-memory write");
        for row in &self.rows {
            let mut rec = row.keys.clone();
            rec.extend(row.cells.iter().map(|c| match c {
                Some(v) if v.is_finite() => v.to_string(),
                _ => FAILED_CELL.to_string(),
            }));
            wtr.write_record(&rec).expect("in-memory write");
        }
        let body = String::from_utf8(wtr.into_inner().expect("in-memory flush")).expect("utf-8 csv");
        format!("# {}\n# key_columns={}\n{}", self.caption.replace('\n', " "), self.key_names.len(), body)
    }

    pub fn from_csv(text: &str) -> Result<Self> {
        let mut lines = text.lines();
        let caption = lines
            .next()
            .and_then(|l| l.strip_prefix("# "))
            .ok_or_else(|| Error::InvalidConfig("table is missing its caption line".into()))?
            .to_string();
        let n_keys: usize = lines
            .next()
            .and_then(|l| l.strip_prefix("# key_columns="))
            .and_then(|v| v.trim().parse().ok())
            .ok_or_else(|| Error::InvalidConfig("table is missing its key_columns line".into()))?;
        let rest: String = text.lines().skip(2).map(|l| format!("{l}\n")).collect();
        let mut rdr = csv::ReaderBuilder::new().from_reader(rest.as_bytes());
        let header = rdr.headers()?.clone();
        if header.len() < n_keys {
            return Err(Error::InvalidConfig("table header shorter than its key columns".into()));
        }
        let key_names: Vec<String> = header.iter().take(n_keys).map(String::from).collect();
        let columns: Vec<String> = header.iter().skip(n_keys).map(String::from).collect();
        let mut rows = Vec::new();
        for (r, rec) in rdr.records().enumerate() {
            let rec = rec?;
            let keys = rec.iter().take(n_keys).map(String::from).collect();
            let cells = rec
                .iter()
                .skip(n_keys)
                .enumerate()
                .map(|(c, v)| {
                    if v == FAILED_CELL {
                        return Ok(None);
                    }
                    v.parse::<f64>().map(Some).map_err(|e| Error::Parse {
                        row: r + 1,
                        column: columns[c].clone(),
                        message: e.to_string(),
                    })
                })
                .collect::<Result<Vec<_>>>()?;
            rows.push(TableRow { keys, cells });
        }
        Ok(Self {
            caption,
            key_names,
            columns,
            rows,
        })
    }

    /// Plain text with right-aligned columns, four decimals per cell.
    pub fn to_text(&self) -> String {
        let mut grid: Vec<Vec<String>> = Vec::with_capacity(self.rows.len() + 1);
        let mut header = self.key_names.clone();
        header.extend(self.columns.iter().cloned());
        grid.push(header);
        for row in &self.rows {
            let mut line = row.keys.clone();
            line.extend(row.cells.iter().map(|c| match c {
                Some(v) if v.is_finite() => format!("{v:.4}"),
                _ => FAILED_CELL.to_string(),
            }));
            grid.push(line);
        }
        let widths: Vec<usize> = (0..grid[0].len())
            .map(|c| grid.iter().map(|l| l[c].chars().count()).max().unwrap_or(0))
            .collect();
        let mut out = format!("{}\n", self.caption);
        for line in &grid {
            let cells: Vec<String> = line.iter().zip(&widths).map(|(v, w)| format!("{v:>w$}")).collect();
            let _ = writeln!(out, "{}", cells.join("  "));
        }
        out
    }

    /// Write `<stem>.csv` and `<stem>.txt` into `dir`.
    pub fn write(&self, dir: &Path, stem: &str) -> Result<()> {
        std::fs::write(dir.join(format!("{stem}.csv")), self.to_csv())?;
        std::fs::write(dir.join(format!("{stem}.txt")), self.to_text())?;
        Ok(())
    }
}
