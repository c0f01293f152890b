//! CSV files with a `#` metadata header and fixed-precision numbers.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use thiserror::Error;

#[derive(Debug, Error)]
pub enum OutputError {
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("{path}: {source}")]
    Csv { path: PathBuf, source: csv::Error },
    #[error("{path}: column {column} holds {value:?}, not a number")]
    Parse { path: PathBuf, column: String, value: String },
}

/// Twelve significant digits in scientific notation, independent of locale.
pub fn format_number(x: f64) -> String {
    format!("{x:.11e}")
}

/// Metadata written above every table.
#[derive(Debug, Clone, PartialEq)]
pub struct Metadata {
    pub experiment: String,
    pub seed: u64,
    /// Config echo, one TOML line per header line.
    pub config: String,
    /// Seconds since the Unix epoch; omitted for byte-stable output.
    pub timestamp: Option<u64>,
}

impl Metadata {
    pub(crate) fn write_to(&self, w: &mut impl Write) -> std::io::Result<()> {
        writeln!(w, "# tiltcert {}", env!("CARGO_PKG_VERSION"))?;
        writeln!(w, "# experiment = {}", self.experiment)?;
        writeln!(w, "# seed = {}", self.seed)?;
        if let Some(t) = self.timestamp {
            writeln!(w, "# created_unix = {t}")?;
        }
        writeln!(w, "# config:")?;
        for line in self.config.lines() {
            if line.is_empty() {
                writeln!(w, "#")?;
            } else {
                writeln!(w, "#   {line}")?;
            }
        }
        Ok(())
    }
}

/// Cell of a table row.
#[derive(Debug, Clone, PartialEq)]
pub enum Cell {
    Num(f64),
    Int(u64),
    Text(String),
}

impl Cell {
    fn render(&self) -> String {
        match self {
            Cell::Num(x) => format_number(*x),
            Cell::Int(n) => n.to_string(),
            Cell::Text(s) => s.clone(),
        }
    }
}

impl From<f64> for Cell {
    fn from(x: f64) -> Self {
        Cell::Num(x)
    }
}

impl From<u64> for Cell {
    fn from(n: u64) -> Self {
        Cell::Int(n)
    }
}

impl From<usize> for Cell {
    fn from(n: usize) -> Self {
        Cell::Int(n as u64)
    }
}

impl From<String> for Cell {
    fn from(s: String) -> Self {
        Cell::Text(s)
    }
}

impl From<&str> for Cell {
    fn from(s: &str) -> Self {
        Cell::Text(s.to_string())
    }
}

/// In-memory table written in one go.
#[derive(Debug, Clone, PartialEq)]
pub struct Table {
    pub columns: Vec<String>,
    pub rows: Vec<Vec<Cell>>,
}

impl Table {
    pub fn new<S: Into<String>>(columns: impl IntoIterator<Item = S>) -> Self {
        Table { columns: columns.into_iter().map(Into::into).collect(), rows: Vec::new() }
    }

    pub fn push(&mut self, row: Vec<Cell>) {
        debug_assert_eq!(row.len(), self.columns.len());
        self.rows.push(row);
    }

    /// Writes header comments, the column names and every row to `path`.
    pub fn write(&self, path: &Path, meta: &Metadata) -> Result<(), OutputError> {
        let io = |source| OutputError::Io { path: path.to_path_buf(), source };
        let csv_err = |source| OutputError::Csv { path: path.to_path_buf(), source };
        let mut file = BufWriter::new(File::create(path).map_err(io)?);
        meta.write_to(&mut file).map_err(io)?;
        let mut w = csv::Writer::from_writer(file);
        w.write_record(&self.columns).map_err(csv_err)?;
        for row in &self.rows {
            w.write_record(row.iter().map(Cell::render)).map_err(csv_err)?;
        }
        w.flush().map_err(io)?;
        Ok(())
    }
}

/// Parsed table: column names and raw string cells.
#[derive(Debug, Clone, PartialEq)]
pub struct ReadTable {
    pub path: PathBuf,
    pub columns: Vec<String>,
    pub rows: Vec<Vec<String>>,
}

impl ReadTable {
    pub fn column(&self, name: &str) -> Option<usize> {
        self.columns.iter().position(|c| c == name)
    }

    /// Numeric values of column `name`.
    pub fn numbers(&self, name: &str) -> Result<Vec<f64>, OutputError> {
        let missing = || OutputError::Parse { path: self.path.clone(), column: name.to_string(), value: String::new() };
        let j = self.column(name).ok_or_else(missing)?;
        self.rows
            .iter()
            .map(|r| {
                r[j].parse().map_err(|_| OutputError::Parse {
                    path: self.path.clone(),
                    column: name.to_string(),
                    value: r[j].clone(),
                })
            })
            .collect()
    }
}

/// Reads a CSV written by [`Table::write`], skipping `#` lines.
pub fn read_table(path: &Path) -> Result<ReadTable, OutputError> {
    let csv_err = |source| OutputError::Csv { path: path.to_path_buf(), source };
    let mut r = csv::ReaderBuilder::new().comment(Some(b'#')).from_path(path).map_err(csv_err)?;
    let columns = r.headers().map_err(csv_err)?.iter().map(String::from).collect();
    let mut rows = Vec::new();
    for rec in r.records() {
        rows.push(rec.map_err(csv_err)?.iter().map(String::from).collect());
    }
    Ok(ReadTable { path: path.to_path_buf(), columns, rows })
}
