//! Header-addressed CSV reading with file/line/column error reporting.

use std::collections::HashMap;
use std::path::Path;
use std::str::FromStr;

use crate::error::{Error, Result};

pub struct Table {
    pub file: String,
    headers: HashMap<String, usize>,
    pub header_names: Vec<String>,
    rows: Vec<(u64, csv::StringRecord)>,
}

pub struct Row<'a> {
    table: &'a Table,
    pub line: u64,
    record: &'a csv::StringRecord,
}

impl Table {
    pub fn read(path: &Path) -> Result<Table> {
        let file = path
            .file_name()
            .map(|f| f.to_string_lossy().into_owned())
            .unwrap_or_default();
        let mut rdr = csv::ReaderBuilder::new()
            .trim(csv::Trim::All)
            .from_path(path)
            .map_err(|e| match e.kind() {
                csv::ErrorKind::Io(io) if io.kind() == std::io::ErrorKind::NotFound => Error::MissingFile {
                    name: file.clone(),
                    dir: path.parent().map(Path::to_path_buf).unwrap_or_default(),
                },
                _ => Error::Csv(e),
            })?;
        let header_names: Vec<String> = rdr.headers()?.iter().map(String::from).collect();
        let headers = header_names
            .iter()
            .enumerate()
            .map(|(i, h)| (h.clone(), i))
            .collect();
        let mut rows = Vec::new();
        for rec in rdr.records() {
            let rec = rec.map_err(|e| Error::Malformed {
                file: file.clone(),
                line: e.position().map_or(0, |p| p.line()),
                column: "-".into(),
                message: e.to_string(),
            })?;
            let line = rec.position().map_or(0, |p| p.line());
            rows.push((line, rec));
        }
        Ok(Table {
            file,
            headers,
            header_names,
            rows,
        })
    }

    pub fn require(&self, columns: &[&str]) -> Result<()> {
        for c in columns {
            if !self.headers.contains_key(*c) {
                return Err(Error::Malformed {
                    file: self.file.clone(),
                    line: 1,
                    column: (*c).into(),
                    message: "required column missing from header".into(),
                });
            }
        }
        Ok(())
    }

    pub fn rows(&self) -> impl Iterator<Item = Row<'_>> {
        self.rows.iter().map(move |(line, record)| Row {
            table: self,
            line: *line,
            record,
        })
    }
}

impl Row<'_> {
    pub fn error(&self, column: &str, message: impl Into<String>) -> Error {
        Error::Malformed {
            file: self.table.file.clone(),
            line: self.line,
            column: column.into(),
            message: message.into(),
        }
    }

    pub fn str(&self, column: &str) -> Result<&str> {
        let idx = *self
            .table
            .headers
            .get(column)
            .ok_or_else(|| self.error(column, "column missing"))?;
        self.record
            .get(idx)
            .ok_or_else(|| self.error(column, "row too short"))
    }

    pub fn opt_str(&self, column: &str) -> Option<&str> {
        let idx = *self.table.headers.get(column)?;
        self.record.get(idx).filter(|s| !s.is_empty())
    }

    pub fn parse<T: FromStr>(&self, column: &str) -> Result<T>
    where
        T::Err: std::fmt::Display,
    {
        let s = self.str(column)?;
        s.parse::<T>()
            .map_err(|e| self.error(column, format!("cannot parse `{s}`: {e}")))
    }

    pub fn parse_opt<T: FromStr>(&self, column: &str) -> Result<Option<T>>
    where
        T::Err: std::fmt::Display,
    {
        match self.opt_str(column) {
            None => Ok(None),
            Some(s) => s
                .parse::<T>()
                .map(Some)
                .map_err(|e| self.error(column, format!("cannot parse `{s}`: {e}"))),
        }
    }

    /// Non-negative count.
    pub fn count(&self, column: &str) -> Result<f64> {
        let v: f64 = self.parse(column)?;
        if !(v >= 0.0 && v.is_finite()) {
            return Err(self.error(column, format!("count must be a finite value >= 0, got {v}")));
        }
        Ok(v)
    }

    pub fn flag(&self, column: &str) -> Result<bool> {
        match self.str(column)?.to_ascii_lowercase().as_str() {
            "1" | "true" | "yes" | "y" => Ok(true),
            "0" | "false" | "no" | "n" | "" => Ok(false),
            other => Err(self.error(column, format!("not a flag: `{other}`"))),
        }
    }
}
