//! Result tables and their deterministic CSV/JSON emission.

use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};
use std::io::Write;
use std::path::Path;

use crate::error::{FluxtuneError, Result};

/// One table entry.
#[derive(Debug, Clone, PartialEq)]
pub enum Cell {
    Float(f64),
    Int(i64),
    Bool(bool),
    Text(String),
}

impl Cell {
    /// Floats use the shortest decimal that round-trips.
    pub fn render(&self) -> String {
        match self {
            Self::Float(x) => x.to_string(),
            Self::Int(i) => i.to_string(),
            Self::Bool(b) => b.to_string(),
            Self::Text(s) => s.clone(),
        }
    }

    fn parse(s: &str) -> Self {
        if let Ok(i) = s.parse::<i64>() {
            Self::Int(i)
        } else if let Ok(b) = s.parse::<bool>() {
            Self::Bool(b)
        } else if let Ok(x) = s.parse::<f64>() {
            Self::Float(x)
        } else {
            Self::Text(s.to_string())
        }
    }

    fn to_json(&self) -> Value {
        match self {
            Self::Float(x) => serde_json::Number::from_f64(*x).map_or(Value::Null, Value::Number),
            Self::Int(i) => Value::from(*i),
            Self::Bool(b) => Value::Bool(*b),
            Self::Text(s) => Value::String(s.clone()),
        }
    }

    pub fn as_f64(&self) -> Option<f64> {
        match self {
            Self::Float(x) => Some(*x),
            Self::Int(i) => Some(*i as f64),
            _ => None,
        }
    }
}

impl From<f64> for Cell {
    fn from(x: f64) -> Self {
        Self::Float(x)
    }
}

impl From<bool> for Cell {
    fn from(b: bool) -> Self {
        Self::Bool(b)
    }
}

impl From<&str> for Cell {
    fn from(s: &str) -> Self {
        Self::Text(s.to_string())
    }
}

impl From<usize> for Cell {
    fn from(i: usize) -> Self {
        Self::Int(i as i64)
    }
}

/// Header attached to every emitted file.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Provenance {
    pub tool: String,
    pub version: String,
    pub subcommand: String,
    pub engine: String,
    pub config_sha256: String,
}

impl Provenance {
    pub fn new(subcommand: &str, engine: &str, config_sha256: &str) -> Self {
        Self {
            tool: "fluxtune".into(),
            version: env!("CARGO_PKG_VERSION").into(),
            subcommand: subcommand.into(),
            engine: engine.into(),
            config_sha256: config_sha256.into(),
        }
    }

    fn pairs(&self) -> [(&'static str, &str); 5] {
        [
            ("tool", &self.tool),
            ("version", &self.version),
            ("subcommand", &self.subcommand),
            ("engine", &self.engine),
            ("config_sha256", &self.config_sha256),
        ]
    }
}

/// Named columns, row-major cells, provenance and optional JSON notes.
#[derive(Debug, Clone, PartialEq)]
pub struct ResultTable {
    pub provenance: Provenance,
    pub columns: Vec<String>,
    pub rows: Vec<Vec<Cell>>,
    /// Extra structured records, emitted after the provenance.
    pub notes: Vec<(String, Value)>,
}

impl ResultTable {
    pub fn new(provenance: Provenance, columns: &[&str]) -> Self {
        Self {
            provenance,
            columns: columns.iter().map(|c| c.to_string()).collect(),
            rows: Vec::new(),
            notes: Vec::new(),
        }
    }

    /// Appends a row; its length must match the column count.
    pub fn push(&mut self, row: Vec<Cell>) -> Result<()> {
        if row.len() != self.columns.len() {
            return Err(FluxtuneError::Dimension {
                expected: self.columns.len(),
                got: row.len(),
            });
        }
        self.rows.push(row);
        Ok(())
    }

    pub fn column(&self, name: &str) -> Option<Vec<&Cell>> {
        let j = self.columns.iter().position(|c| c == name)?;
        Some(self.rows.iter().map(|r| &r[j]).collect())
    }

    pub fn column_f64(&self, name: &str) -> Option<Vec<f64>> {
        self.column(name)
            .map(|cells| cells.into_iter().map(|c| c.as_f64().unwrap_or(f64::NAN)).collect())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Format {
    #[default]
    Csv,
    Json,
}

impl std::str::FromStr for Format {
    type Err = FluxtuneError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "csv" => Ok(Self::Csv),
            "json" => Ok(Self::Json),
            other => Err(FluxtuneError::config("--format", format!("unknown format `{other}`"))),
        }
    }
}

/// CSV with `# key=value` provenance lines, then an RFC-4180 header and rows.
pub fn to_csv(table: &ResultTable) -> Result<String> {
    let mut out = String::new();
    for (k, v) in table.provenance.pairs() {
        out.push_str(&format!("# {k}={v}\n"));
    }
    for (k, v) in &table.notes {
        out.push_str(&format!("# {k}={v}\n"));
    }
    let mut w = csv::Writer::from_writer(Vec::new());
    let ser = |e: csv::Error| FluxtuneError::Serialization(e.to_string());
    w.write_record(&table.columns).map_err(ser)?;
    for row in &table.rows {
        w.write_record(row.iter().map(Cell::render)).map_err(ser)?;
    }
    let bytes = w.into_inner().map_err(|e| FluxtuneError::Serialization(e.to_string()))?;
    out.push_str(&String::from_utf8(bytes).map_err(|e| FluxtuneError::Serialization(e.to_string()))?);
    Ok(out)
}

/// Inverse of [`to_csv`].
pub fn from_csv(text: &str) -> Result<ResultTable> {
    let mut prov = Map::new();
    let mut notes = Vec::new();
    for line in text.lines().take_while(|l| l.starts_with('#')) {
        let body = line.trim_start_matches('#').trim_start();
        let (k, v) = body
            .split_once('=')
            .ok_or_else(|| FluxtuneError::Serialization(format!("bad header line `{line}`")))?;
        match k {
            "tool" | "version" | "subcommand" | "engine" | "config_sha256" => {
                prov.insert(k.into(), Value::String(v.into()));
            }
            _ => notes.push((
                k.to_string(),
                serde_json::from_str(v).map_err(|e| FluxtuneError::Serialization(e.to_string()))?,
            )),
        }
    }
    let provenance: Provenance =
        serde_json::from_value(Value::Object(prov)).map_err(|e| FluxtuneError::Serialization(e.to_string()))?;
    let mut rdr = csv::ReaderBuilder::new()
        .comment(Some(b'#'))
        .from_reader(text.as_bytes());
    let ser = |e: csv::Error| FluxtuneError::Serialization(e.to_string());
    let columns = rdr.headers().map_err(ser)?.iter().map(String::from).collect();
    let mut rows = Vec::new();
    for rec in rdr.records() {
        rows.push(rec.map_err(ser)?.iter().map(Cell::parse).collect());
    }
    Ok(ResultTable {
        provenance,
        columns,
        rows,
        notes,
    })
}

/// `{"provenance": {...}, <notes>, "rows": [{column: value}, ...]}`.
pub fn to_json(table: &ResultTable) -> Result<String> {
    let mut root = Map::new();
    root.insert(
        "provenance".into(),
        serde_json::to_value(&table.provenance).map_err(|e| FluxtuneError::Serialization(e.to_string()))?,
    );
    for (k, v) in &table.notes {
        root.insert(k.clone(), v.clone());
    }
    let rows = table
        .rows
        .iter()
        .map(|r| {
            Value::Object(
                table
                    .columns
                    .iter()
                    .cloned()
                    .zip(r.iter().map(Cell::to_json))
                    .collect(),
            )
        })
        .collect();
    root.insert("rows".into(), Value::Array(rows));
    let mut s = serde_json::to_string_pretty(&Value::Object(root))
        .map_err(|e| FluxtuneError::Serialization(e.to_string()))?;
    s.push('\n');
    Ok(s)
}

pub fn render(table: &ResultTable, format: Format) -> Result<String> {
    match format {
        Format::Csv => to_csv(table),
        Format::Json => to_json(table),
    }
}

/// Writes to a temporary file beside `path` and renames it into place.
pub fn write_atomic(path: &Path, contents: &str) -> Result<()> {
    let io = |source| FluxtuneError::Io {
        path: path.display().to_string(),
        source,
    };
    let dir = match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p,
        _ => Path::new("."),
    };
    let mut tmp = tempfile::NamedTempFile::new_in(dir).map_err(io)?;
    tmp.write_all(contents.as_bytes()).map_err(io)?;
    tmp.as_file().sync_all().map_err(io)?;
    tmp.persist(path).map_err(|e| io(e.error))?;
    Ok(())
}

/// Renders `table` and writes it atomically to `path`.
pub fn emit(table: &ResultTable, format: Format, path: &Path) -> Result<()> {
    write_atomic(path, &render(table, format)?)
}
