//! File formats: CSV data tables (cell-preserving), CSV transition
//! matrices, JSON estimand configs, and JSON result reports.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use pram_core::{Dataset, EstimandSpec, SensitiveRole, TransitionMatrix};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Current JSON schema version for configs and reports.
pub const SCHEMA_VERSION: u32 = 1;

// ---------------------------------------------------------------------------
// CSV data tables
// ---------------------------------------------------------------------------

/// A CSV table kept as raw cells, so columns we do not touch are written
/// back byte-for-byte.
#[derive(Debug, Clone)]
pub struct Table {
    headers: Vec<String>,
    /// Row-major raw cells.
    rows: Vec<Vec<String>>,
}

impl Table {
    pub fn new(headers: Vec<String>) -> Self {
        Self {
            headers,
            rows: Vec::new(),
        }
    }

    pub fn read_csv(path: &Path) -> Result<Self> {
        let mut reader = csv::ReaderBuilder::new()
            .has_headers(true)
            .flexible(false)
            .from_path(path)
            .map_err(|source| Error::Csv {
                path: path.to_path_buf(),
                source,
            })?;
        let headers = reader
            .headers()
            .map_err(|source| Error::Csv {
                path: path.to_path_buf(),
                source,
            })?
            .iter()
            .map(|h| h.to_string())
            .collect();
        let mut rows = Vec::new();
        for record in reader.records() {
            let record = record.map_err(|source| Error::Csv {
                path: path.to_path_buf(),
                source,
            })?;
            rows.push(record.iter().map(|c| c.to_string()).collect());
        }
        Ok(Self { headers, rows })
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut writer = csv::WriterBuilder::new()
            .has_headers(false)
            .from_path(path)
            .map_err(|source| Error::Csv {
                path: path.to_path_buf(),
                source,
            })?;
        let io_err = |source: csv::Error| Error::Csv {
            path: path.to_path_buf(),
            source,
        };
        writer.write_record(&self.headers).map_err(io_err)?;
        for row in &self.rows {
            writer.write_record(row).map_err(io_err)?;
        }
        writer.flush().map_err(|source| Error::Io {
            path: Some(path.to_path_buf()),
            source,
        })?;
        Ok(())
    }

    pub fn n_rows(&self) -> usize {
        self.rows.len()
    }

    pub fn headers(&self) -> &[String] {
        &self.headers
    }

    pub fn push_row(&mut self, row: Vec<String>) {
        debug_assert_eq!(row.len(), self.headers.len());
        self.rows.push(row);
    }

    pub fn column_index(&self, name: &str) -> Result<usize> {
        self.headers
            .iter()
            .position(|h| h == name)
            .ok_or(Error::Core(pram_core::Error::MissingColumn {
                name: name.to_string(),
            }))
    }

    /// Parse a column as real numbers.
    pub fn numeric_column(&self, name: &str) -> Result<Vec<f64>> {
        let idx = self.column_index(name)?;
        self.rows
            .iter()
            .enumerate()
            .map(|(r, row)| {
                row[idx].trim().parse::<f64>().map_err(|_| {
                    Error::parse(format!(
                        "column '{name}', row {}: '{}' is not a number",
                        r + 1,
                        row[idx]
                    ))
                })
            })
            .collect()
    }

    /// Parse a column as integer-coded levels 0..K-1.
    pub fn level_column(&self, name: &str, levels: usize) -> Result<Vec<usize>> {
        let idx = self.column_index(name)?;
        self.rows
            .iter()
            .enumerate()
            .map(|(r, row)| {
                let cell = row[idx].trim();
                let value: usize = cell.parse().map_err(|_| {
                    Error::parse(format!(
                        "column '{name}', row {}: '{cell}' is not an integer level \
                         (use --recode for string-coded levels)",
                        r + 1
                    ))
                })?;
                if value >= levels {
                    return Err(Error::Core(pram_core::Error::LevelOutOfRange {
                        record: r,
                        level: value,
                        levels,
                    }));
                }
                Ok(value)
            })
            .collect()
    }

    /// Replace a column's cells (adds the column if absent).
    pub fn set_column(&mut self, name: &str, cells: Vec<String>) -> Result<()> {
        if cells.len() != self.rows.len() {
            return Err(Error::parse(format!(
                "replacement column '{name}' has {} cells for {} rows",
                cells.len(),
                self.rows.len()
            )));
        }
        match self.headers.iter().position(|h| h == name) {
            Some(idx) => {
                for (row, cell) in self.rows.iter_mut().zip(cells) {
                    row[idx] = cell;
                }
            }
            None => {
                self.headers.push(name.to_string());
                for (row, cell) in self.rows.iter_mut().zip(cells) {
                    row.push(cell);
                }
            }
        }
        Ok(())
    }

    /// Map a string-coded level column to integers 0..K-1 (levels sorted
    /// lexicographically), returning the mapping.
    pub fn recode_column(&mut self, name: &str, levels: usize) -> Result<BTreeMap<String, usize>> {
        let idx = self.column_index(name)?;
        let mut distinct: Vec<String> = self
            .rows
            .iter()
            .map(|row| row[idx].trim().to_string())
            .collect();
        distinct.sort();
        distinct.dedup();
        if distinct.len() != levels {
            return Err(Error::parse(format!(
                "column '{name}' has {} distinct values but the mechanism has {levels} levels",
                distinct.len()
            )));
        }
        let map: BTreeMap<String, usize> = distinct
            .into_iter()
            .enumerate()
            .map(|(i, v)| (v, i))
            .collect();
        for row in &mut self.rows {
            let coded = map[row[idx].trim()];
            row[idx] = coded.to_string();
        }
        Ok(map)
    }
}

/// Assemble a core dataset from a table: the named numeric columns plus the
/// sensitive level column in the requested role.
pub fn dataset_from_table(
    table: &Table,
    levels: usize,
    numeric_columns: &[String],
    sensitive_column: &str,
    sensitive_is_original: bool,
) -> Result<Dataset> {
    let mut data = Dataset::new(levels)?;
    for name in numeric_columns {
        if name == sensitive_column {
            continue;
        }
        data.push_column(name, table.numeric_column(name)?)?;
    }
    let coded = table.level_column(sensitive_column, levels)?;
    if sensitive_is_original {
        data.set_original_levels(coded)?;
    } else {
        data.set_perturbed_levels(coded)?;
    }
    Ok(data)
}

// ---------------------------------------------------------------------------
// Transition matrices
// ---------------------------------------------------------------------------

/// Read a K×K transition matrix from a headerless CSV of K rows.
pub fn read_matrix_csv(path: &Path) -> Result<TransitionMatrix> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(false)
        .from_path(path)
        .map_err(|source| Error::Csv {
            path: path.to_path_buf(),
            source,
        })?;
    let mut rows: Vec<Vec<f64>> = Vec::new();
    for (r, record) in reader.records().enumerate() {
        let record = record.map_err(|source| Error::Csv {
            path: path.to_path_buf(),
            source,
        })?;
        let row = record
            .iter()
            .map(|cell| {
                cell.trim().parse::<f64>().map_err(|_| {
                    Error::parse(format!(
                        "matrix {}, row {}: '{cell}' is not a number",
                        path.display(),
                        r + 1
                    ))
                })
            })
            .collect::<Result<Vec<f64>>>()?;
        rows.push(row);
    }
    Ok(TransitionMatrix::from_rows(&rows)?)
}

pub fn write_matrix_csv(path: &Path, rows: &[Vec<f64>]) -> Result<()> {
    let mut out = String::new();
    for row in rows {
        let cells: Vec<String> = row.iter().map(|v| format!("{v}")).collect();
        out.push_str(&cells.join(","));
        out.push('\n');
    }
    fs::write(path, out).map_err(|source| Error::Io {
        path: Some(path.to_path_buf()),
        source,
    })
}

// ---------------------------------------------------------------------------
// Estimand config (JSON)
// ---------------------------------------------------------------------------

fn default_schema() -> u32 {
    SCHEMA_VERSION
}

fn default_intercept() -> bool {
    true
}

/// JSON description of the estimand, e.g.
/// `{"schema":1,"kind":"logistic","response":"y_pram","covariates":["x"],
///   "sensitive_role":"response","sensitive_column":"y_pram","levels":2}`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EstimandConfig {
    #[serde(default = "default_schema")]
    pub schema: u32,
    pub kind: String,
    #[serde(default)]
    pub response: Option<String>,
    #[serde(default)]
    pub covariates: Vec<String>,
    pub sensitive_column: String,
    pub sensitive_role: String,
    pub levels: usize,
    #[serde(default = "default_intercept")]
    pub intercept: bool,
}

impl EstimandConfig {
    pub fn read(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|source| Error::Io {
            path: Some(path.to_path_buf()),
            source,
        })?;
        let cfg: Self = serde_json::from_str(&text).map_err(|source| Error::Json {
            path: Some(path.to_path_buf()),
            source,
        })?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: Self = serde_json::from_str(text).map_err(|source| Error::Json {
            path: None,
            source,
        })?;
        cfg.validate()?;
        Ok(cfg)
    }

    fn validate(&self) -> Result<()> {
        if self.schema != SCHEMA_VERSION {
            return Err(Error::parse(format!(
                "unsupported schema version {} (this build reads {SCHEMA_VERSION})",
                self.schema
            )));
        }
        Ok(())
    }

    /// Column names (other than the sensitive one) the estimand reads.
    pub fn numeric_columns(&self) -> Vec<String> {
        let mut cols: Vec<String> = Vec::new();
        if let Some(r) = &self.response {
            if *r != self.sensitive_column {
                cols.push(r.clone());
            }
        }
        for c in &self.covariates {
            if *c != self.sensitive_column && !cols.contains(c) {
                cols.push(c.clone());
            }
        }
        cols
    }

    pub fn to_spec(&self) -> Result<EstimandSpec> {
        let kind = match self.kind.as_str() {
            "mean" => pram_core::estfun::EstimandKind::Mean,
            "logistic" => pram_core::estfun::EstimandKind::Logistic,
            "linear" => pram_core::estfun::EstimandKind::Linear,
            other => {
                return Err(Error::parse(format!(
                    "unknown estimand kind '{other}' (expected mean, logistic or linear)"
                )))
            }
        };
        let sensitive_role = match self.sensitive_role.as_str() {
            "response" => SensitiveRole::Response,
            "covariate" => SensitiveRole::Covariate,
            other => {
                return Err(Error::parse(format!(
                    "unknown sensitive_role '{other}' (expected response or covariate)"
                )))
            }
        };
        let response = match (&self.response, sensitive_role) {
            (Some(r), _) => r.clone(),
            (None, SensitiveRole::Response) => self.sensitive_column.clone(),
            (None, SensitiveRole::Covariate) => {
                return Err(Error::parse(
                    "estimand with a sensitive covariate needs a 'response' column",
                ))
            }
        };
        Ok(EstimandSpec {
            kind,
            response,
            covariates: self.covariates.clone(),
            sensitive_column: self.sensitive_column.clone(),
            sensitive_role,
            levels: self.levels,
            intercept: self.intercept,
        })
    }
}

// ---------------------------------------------------------------------------
// Result reports (JSON)
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SolveReport {
    pub iterations: usize,
    pub residual_norm: f64,
    pub converged: bool,
    pub jacobian_condition: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct VarianceReport {
    /// "resample" or "plugin".
    pub method: String,
    pub covariance: Vec<Vec<f64>>,
    pub std_errors: Vec<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub resamples_used: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub failures: Option<usize>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EstimateReport {
    pub schema: u32,
    pub method: String,
    pub n: usize,
    pub beta_hat: Vec<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub std_errors: Option<Vec<f64>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub covariance: Option<Vec<Vec<f64>>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub ci_level: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub conf_intervals: Option<Vec<[f64; 2]>>,
    pub solver: SolveReport,
    #[serde(skip_serializing_if = "Vec::is_empty", default)]
    pub variance: Vec<VarianceReport>,
}

pub fn covariance_to_rows(cov: &pram_core::SquareMat) -> Vec<Vec<f64>> {
    let d = cov.size();
    (0..d)
        .map(|r| (0..d).map(|c| cov.get(r, c)).collect())
        .collect()
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FrequencyReport {
    pub schema: u32,
    pub levels: usize,
    pub observed: Vec<f64>,
    pub recovered: Vec<f64>,
    pub outside_simplex: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub projected: Option<Vec<f64>>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RecodeReport {
    pub schema: u32,
    pub column: String,
    pub mapping: BTreeMap<String, usize>,
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value).map_err(|source| Error::Json {
        path: Some(path.to_path_buf()),
        source,
    })?;
    text.push('\n');
    fs::write(path, text).map_err(|source| Error::Io {
        path: Some(path.to_path_buf()),
        source,
    })
}

pub fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path).map_err(|source| Error::Io {
        path: Some(path.to_path_buf()),
        source,
    })?;
    serde_json::from_str(&text).map_err(|source| Error::Json {
        path: Some(path.to_path_buf()),
        source,
    })
}

/// Sidecar path for a recode mapping: `<output>.recode.json`.
pub fn recode_sidecar_path(output: &Path) -> PathBuf {
    let mut name = output.file_name().unwrap_or_default().to_os_string();
    name.push(".recode.json");
    output.with_file_name(name)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn untouched_columns_survive_byte_for_byte() {
        let dir = tempfile::tempdir().unwrap();
        let input = dir.path().join("in.csv");
        // Quirky-but-valid formatting that naive float round-tripping would
        // destroy: trailing zeros, exponent notation, bare integers.
        std::fs::write(&input, "id,x,s\nr1,0.500,1\nr2,1e-3,0\nr3,2.25,1\n").unwrap();
        let mut table = Table::read_csv(&input).unwrap();
        table
            .set_column("s", vec!["0".into(), "0".into(), "1".into()])
            .unwrap();
        let output = dir.path().join("out.csv");
        table.write_csv(&output).unwrap();
        let text = std::fs::read_to_string(&output).unwrap();
        assert_eq!(text, "id,x,s\nr1,0.500,0\nr2,1e-3,0\nr3,2.25,1\n");
    }

    #[test]
    fn numeric_and_level_parsing_report_row_and_column() {
        let dir = tempfile::tempdir().unwrap();
        let input = dir.path().join("in.csv");
        std::fs::write(&input, "x,s\n0.5,1\noops,0\n").unwrap();
        let table = Table::read_csv(&input).unwrap();
        let err = table.numeric_column("x").unwrap_err();
        assert_eq!(err.code(), "parse");
        assert!(err.to_string().contains("row 2"));

        let levels = table.level_column("s", 2).unwrap();
        assert_eq!(levels, vec![1, 0]);
        assert!(table.level_column("s", 1).is_err());
        assert_eq!(
            table.numeric_column("nope").unwrap_err().code(),
            "missing-column"
        );
    }

    #[test]
    fn recode_maps_sorted_levels_and_rewrites_cells() {
        let dir = tempfile::tempdir().unwrap();
        let input = dir.path().join("in.csv");
        std::fs::write(&input, "s\nyes\nno\nyes\n").unwrap();
        let mut table = Table::read_csv(&input).unwrap();
        let map = table.recode_column("s", 2).unwrap();
        assert_eq!(map["no"], 0);
        assert_eq!(map["yes"], 1);
        assert_eq!(table.level_column("s", 2).unwrap(), vec![1, 0, 1]);

        // Wrong K is refused.
        std::fs::write(&input, "s\na\nb\nc\n").unwrap();
        let mut t3 = Table::read_csv(&input).unwrap();
        assert!(t3.recode_column("s", 2).is_err());
    }

    #[test]
    fn matrix_csv_roundtrip_and_validation() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("p.csv");
        write_matrix_csv(&path, &[vec![0.8, 0.1], vec![0.2, 0.9]]).unwrap();
        let p = read_matrix_csv(&path).unwrap();
        assert_eq!(p.levels(), 2);
        assert!((p.entry(1, 0) - 0.2).abs() < 1e-15);

        std::fs::write(&path, "0.5,0.5\n0.4,0.5\n").unwrap();
        assert_eq!(read_matrix_csv(&path).unwrap_err().code(), "non-stochastic");
    }

    #[test]
    fn estimand_config_maps_to_core_spec() {
        let cfg = EstimandConfig::from_json(
            r#"{"kind":"logistic","response":"y_pram","covariates":["x"],
                "sensitive_role":"response","sensitive_column":"y_pram","levels":2}"#,
        )
        .unwrap();
        assert_eq!(cfg.schema, SCHEMA_VERSION);
        let spec = cfg.to_spec().unwrap();
        assert_eq!(spec.levels, 2);
        assert_eq!(spec.response, "y_pram");
        assert_eq!(cfg.numeric_columns(), vec!["x".to_string()]);

        let bad = EstimandConfig::from_json(
            r#"{"schema":9,"kind":"mean","sensitive_role":"response",
                "sensitive_column":"s","levels":2}"#,
        );
        assert!(bad.is_err());

        let unknown_kind = EstimandConfig::from_json(
            r#"{"kind":"poisson","sensitive_role":"response",
                "sensitive_column":"s","levels":2}"#,
        )
        .unwrap()
        .to_spec();
        assert!(unknown_kind.is_err());

        // Sensitive covariate without a response is refused.
        let missing_resp = EstimandConfig::from_json(
            r#"{"kind":"linear","covariates":["s"],"sensitive_role":"covariate",
                "sensitive_column":"s","levels":2}"#,
        )
        .unwrap()
        .to_spec();
        assert!(missing_resp.is_err());
    }

    #[test]
    fn dataset_assembly_respects_roles() {
        let dir = tempfile::tempdir().unwrap();
        let input = dir.path().join("in.csv");
        std::fs::write(&input, "y,s\n1.5,0\n-0.5,1\n").unwrap();
        let table = Table::read_csv(&input).unwrap();
        let data =
            dataset_from_table(&table, 2, &["y".to_string()], "s", false).unwrap();
        assert_eq!(data.n(), 2);
        assert_eq!(data.require_perturbed().unwrap(), &[0, 1]);
        assert!(data.require_original().is_err());
        assert_eq!(data.values("y").unwrap(), &[1.5, -0.5]);
    }
}
