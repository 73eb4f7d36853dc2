use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use tempfile::NamedTempFile;

use crate::{CliError, Result};

/// A numeric table. The first `keys` columns identify a row.
#[derive(Debug, Clone, PartialEq)]
pub struct Table {
    pub name: String,
    pub header: Vec<String>,
    pub keys: usize,
    pub rows: Vec<Vec<f64>>,
}

impl Table {
    pub fn new<S: AsRef<str>>(name: &str, keys: usize, header: &[S]) -> Self {
        let header: Vec<String> = header.iter().map(|s| s.as_ref().to_string()).collect();
        assert!(keys <= header.len());
        Table { name: name.into(), header, keys, rows: Vec::new() }
    }

    pub fn push(&mut self, row: Vec<f64>) {
        assert_eq!(row.len(), self.header.len(), "row width for table {}", self.name);
        self.rows.push(row);
    }

    pub fn column(&self, name: &str) -> Option<Vec<f64>> {
        let j = self.header.iter().position(|h| h == name)?;
        Some(self.rows.iter().map(|r| r[j]).collect())
    }

    fn records(&self) -> impl Iterator<Item = Vec<String>> + '_ {
        self.rows.iter().map(|r| r.iter().map(|&v| fmt(v)).collect())
    }

    /// Key columns, then one `quantity,value` pair per remaining cell.
    fn long_records(&self) -> impl Iterator<Item = Vec<String>> + '_ {
        self.rows.iter().flat_map(move |r| {
            (self.keys..r.len()).map(move |j| {
                let mut rec: Vec<String> = r[..self.keys].iter().map(|&v| fmt(v)).collect();
                rec.push(self.header[j].clone());
                rec.push(fmt(r[j]));
                rec
            })
        })
    }
}

pub fn fmt(v: f64) -> String {
    format!("{v:.15e}")
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct Report {
    pub command: String,
    pub tables: Vec<Table>,
    pub summary: Vec<(String, f64)>,
}

impl Report {
    pub fn new(command: &str) -> Self {
        Report { command: command.into(), ..Default::default() }
    }

    pub fn note(&mut self, key: &str, value: f64) {
        self.summary.push((key.into(), value));
    }

    pub fn summary_value(&self, key: &str) -> Option<f64> {
        self.summary.iter().find(|(k, _)| k == key).map(|&(_, v)| v)
    }

    pub fn table(&self, name: &str) -> Option<&Table> {
        self.tables.iter().find(|t| t.name == name)
    }

    /// Writes every table (and the summary) into `dir`; returns the paths.
    ///
    /// Each file is staged next to its target and renamed into place.
    pub fn write(&self, dir: &Path, plot_data: bool) -> Result<Vec<PathBuf>> {
        fs::create_dir_all(dir).map_err(|source| CliError::Io { path: dir.into(), source })?;
        let mut written = Vec::new();
        for t in &self.tables {
            let path = dir.join(format!("{}_{}.csv", self.command, t.name));
            write_csv(&path, &t.header, t.records())?;
            written.push(path);
            if plot_data {
                let path = dir.join(format!("{}_{}_long.csv", self.command, t.name));
                let mut header = t.header[..t.keys].to_vec();
                header.extend(["quantity".to_string(), "value".to_string()]);
                write_csv(&path, &header, t.long_records())?;
                written.push(path);
            }
        }
        if !self.summary.is_empty() {
            let path = dir.join(format!("{}_summary.csv", self.command));
            let rows = self.summary.iter().map(|(k, v)| vec![k.clone(), fmt(*v)]);
            write_csv(&path, &["quantity".to_string(), "value".to_string()], rows)?;
            written.push(path);
        }
        Ok(written)
    }

    /// Summary as aligned text, for the terminal.
    pub fn summary_text(&self) -> String {
        let w = self.summary.iter().map(|(k, _)| k.len()).max().unwrap_or(0);
        self.summary.iter().map(|(k, v)| format!("{k:<w$}  {v:.10e}\n")).collect()
    }
}

fn write_csv(path: &Path, header: &[String], rows: impl Iterator<Item = Vec<String>>) -> Result<()> {
    let io_err = |source| CliError::Io { path: path.into(), source };
    let dir = path.parent().unwrap_or(Path::new("."));
    let tmp = NamedTempFile::new_in(dir).map_err(io_err)?;
    {
        let mut w = csv::Writer::from_writer(tmp.as_file());
        w.write_record(header)?;
        for r in rows {
            w.write_record(&r)?;
        }
        w.flush().map_err(io_err)?;
    }
    tmp.as_file().flush().map_err(io_err)?;
    tmp.persist(path).map_err(|e| io_err(e.error))?;
    Ok(())
}
