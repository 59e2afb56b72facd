use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{invalid, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", content = "values", rename_all = "snake_case")]
pub enum Column {
    F64(Vec<f64>),
    U64(Vec<u64>),
    I64(Vec<i64>),
}

impl Column {
    pub fn len(&self) -> usize {
        match self {
            Column::F64(v) => v.len(),
            Column::U64(v) => v.len(),
            Column::I64(v) => v.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    fn cell(&self, i: usize) -> String {
        match self {
            Column::F64(v) => fmt_f64(v[i]),
            Column::U64(v) => v[i].to_string(),
            Column::I64(v) => v[i].to_string(),
        }
    }
}

/// Shortest round-trip representation; exponent form for very small or
/// large magnitudes.
fn fmt_f64(x: f64) -> String {
    let a = x.abs();
    if x == 0.0 || !x.is_finite() || (1e-5..1e15).contains(&a) {
        x.to_string()
    } else {
        format!("{x:e}")
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TableMeta {
    pub kind: String,
    /// The fully resolved experiment spec.
    pub spec: serde_json::Value,
    pub code_version: String,
    pub seed: u64,
    /// Derived summaries (fitted slopes, crossings, checks).
    pub summary: serde_json::Map<String, serde_json::Value>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExperimentTable {
    pub names: Vec<String>,
    pub columns: Vec<Column>,
    pub meta: TableMeta,
}

impl ExperimentTable {
    pub fn new(kind: &str, spec: &impl Serialize, seed: u64) -> Result<Self> {
        Ok(Self {
            names: Vec::new(),
            columns: Vec::new(),
            meta: TableMeta {
                kind: kind.into(),
                spec: serde_json::to_value(spec)?,
                code_version: env!("CARGO_PKG_VERSION").into(),
                seed,
                summary: serde_json::Map::new(),
            },
        })
    }

    pub fn push(&mut self, name: &str, column: Column) -> Result<()> {
        if let Some(first) = self.columns.first() {
            if first.len() != column.len() {
                return Err(invalid(format!(
                    "column {name} has {} rows, table has {}",
                    column.len(),
                    first.len()
                )));
            }
        }
        if self.names.iter().any(|n| n == name) {
            return Err(invalid(format!("duplicate column {name}")));
        }
        self.names.push(name.into());
        self.columns.push(column);
        Ok(())
    }

    pub fn summarize(&mut self, key: &str, value: impl Serialize) -> Result<()> {
        self.meta.summary.insert(key.into(), serde_json::to_value(value)?);
        Ok(())
    }

    pub fn rows(&self) -> usize {
        self.columns.first().map_or(0, Column::len)
    }

    pub fn column(&self, name: &str) -> Option<&Column> {
        self.names.iter().position(|n| n == name).map(|i| &self.columns[i])
    }

    pub fn f64_column(&self, name: &str) -> Option<&[f64]> {
        match self.column(name)? {
            Column::F64(v) => Some(v),
            _ => None,
        }
    }

    pub fn u64_column(&self, name: &str) -> Option<&[u64]> {
        match self.column(name)? {
            Column::U64(v) => Some(v),
            _ => None,
        }
    }

    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(&self.names)?;
        for i in 0..self.rows() {
            w.write_record(self.columns.iter().map(|c| c.cell(i)))?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn to_csv_string(&self) -> Result<String> {
        let mut buf = Vec::new();
        self.write_csv(&mut buf)?;
        Ok(String::from_utf8(buf).expect("csv output is utf-8"))
    }

    /// `{kind}-{first 12 hex digits of sha256(kind, spec)}`.
    pub fn file_stem(&self) -> Result<String> {
        let mut h = Sha256::new();
        h.update(self.meta.kind.as_bytes());
        h.update([0u8]);
        h.update(serde_json::to_vec(&self.meta.spec)?);
        let digest = h.finalize();
        let hex: String = digest.iter().take(6).map(|b| format!("{b:02x}")).collect();
        Ok(format!("{}-{hex}", self.meta.kind))
    }

    /// Writes `<stem>.csv` and `<stem>.meta.json` into `dir`.
    pub fn write_to(&self, dir: &Path) -> Result<(PathBuf, PathBuf)> {
        fs::create_dir_all(dir)?;
        let stem = self.file_stem()?;
        let csv_path = dir.join(format!("{stem}.csv"));
        let meta_path = dir.join(format!("{stem}.meta.json"));
        self.write_csv(fs::File::create(&csv_path)?)?;
        fs::write(&meta_path, serde_json::to_vec_pretty(&self.meta)?)?;
        Ok((csv_path, meta_path))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn table() -> ExperimentTable {
        let mut t = ExperimentTable::new("demo", &serde_json::json!({"a": 1}), 9).unwrap();
        t.push("x", Column::F64(vec![0.5, 1e-20])).unwrap();
        t.push("n", Column::U64(vec![1, 2])).unwrap();
        t
    }

    #[test]
    fn csv_layout() {
        assert_eq!(table().to_csv_string().unwrap(), "x,n\n0.5,1\n1e-20,2\n");
    }

    #[test]
    fn rejects_ragged_columns() {
        let mut t = table();
        assert!(t.push("bad", Column::I64(vec![1])).is_err());
        assert!(t.push("x", Column::I64(vec![1, 2])).is_err());
    }

    #[test]
    fn stem_depends_on_spec_only() {
        let a = table();
        let mut b = table();
        b.summarize("fit", 3.0).unwrap();
        assert_eq!(a.file_stem().unwrap(), b.file_stem().unwrap());
        let c = ExperimentTable::new("demo", &serde_json::json!({"a": 2}), 9).unwrap();
        assert_ne!(a.file_stem().unwrap(), c.file_stem().unwrap());
        assert_eq!(a.file_stem().unwrap().len(), "demo-".len() + 12);
    }
}
