//! Cohort data model: schema declaration, CSV ingestion with validation,
//! and descriptive statistics.

use serde::{Deserialize, Serialize};
use std::io::Read;
use std::sync::Arc;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum CohortError {
    #[error("schema error: {0}")]
    BadSchema(String),
    #[error("missing column '{0}' in CSV header")]
    MissingColumn(String),
    #[error("bad value at row {row}, column '{column}': {reason}")]
    BadValue {
        row: usize,
        column: String,
        reason: String,
    },
    #[error("cohort is empty or has fewer than 2 records")]
    EmptyCohort,
    #[error("unknown column '{0}'")]
    UnknownColumn(String),
    #[error("cohort must contain both treatment levels")]
    SingleArm,
    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum VarKind {
    Binary,
    Continuous,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum VarRole {
    Covariate,
    Treatment,
    Outcome,
}

/// One column of the cohort: name, value kind, and role in the analysis.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CovariateSpec {
    pub name: String,
    pub kind: VarKind,
    pub role: VarRole,
    /// Lower bound for continuous columns (e.g. Age >= 18). Ignored for binary.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub min: Option<f64>,
}

impl CovariateSpec {
    pub fn binary(name: &str, role: VarRole) -> Self {
        CovariateSpec {
            name: name.to_string(),
            kind: VarKind::Binary,
            role,
            min: None,
        }
    }

    pub fn continuous(name: &str, role: VarRole, min: Option<f64>) -> Self {
        CovariateSpec {
            name: name.to_string(),
            kind: VarKind::Continuous,
            role,
            min,
        }
    }
}

/// A validated column schema: unique names, exactly one binary treatment
/// column and one binary outcome column.
#[derive(Debug, Clone, Serialize)]
pub struct Schema {
    specs: Vec<CovariateSpec>,
}

impl Schema {
    pub fn new(specs: Vec<CovariateSpec>) -> Result<Self, CohortError> {
        let mut names = std::collections::HashSet::new();
        for s in &specs {
            if !names.insert(s.name.clone()) {
                return Err(CohortError::BadSchema(format!(
                    "duplicate column name '{}'",
                    s.name
                )));
            }
        }
        let n_treat = specs.iter().filter(|s| s.role == VarRole::Treatment).count();
        let n_out = specs.iter().filter(|s| s.role == VarRole::Outcome).count();
        if n_treat != 1 {
            return Err(CohortError::BadSchema(format!(
                "expected exactly one treatment column, found {n_treat}"
            )));
        }
        if n_out != 1 {
            return Err(CohortError::BadSchema(format!(
                "expected exactly one outcome column, found {n_out}"
            )));
        }
        for s in &specs {
            if s.role != VarRole::Covariate && s.kind != VarKind::Binary {
                return Err(CohortError::BadSchema(format!(
                    "column '{}' has role {:?} but is not binary",
                    s.name, s.role
                )));
            }
        }
        Ok(Schema { specs })
    }

    /// Parse a schema from JSON: an array of CovariateSpec objects.
    pub fn from_json(text: &str) -> Result<Self, CohortError> {
        let specs: Vec<CovariateSpec> = serde_json::from_str(text)
            .map_err(|e| CohortError::BadSchema(e.to_string()))?;
        Schema::new(specs)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(&self.specs).expect("schema serializes")
    }

    pub fn specs(&self) -> &[CovariateSpec] {
        &self.specs
    }

    pub fn len(&self) -> usize {
        self.specs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.specs.is_empty()
    }

    pub fn index_of(&self, name: &str) -> Option<usize> {
        self.specs.iter().position(|s| s.name == name)
    }

    pub fn treatment_index(&self) -> usize {
        self.specs
            .iter()
            .position(|s| s.role == VarRole::Treatment)
            .expect("schema has a treatment column")
    }

    pub fn outcome_index(&self) -> usize {
        self.specs
            .iter()
            .position(|s| s.role == VarRole::Outcome)
            .expect("schema has an outcome column")
    }

    /// Indices of plain covariate columns, in schema order.
    pub fn covariate_indices(&self) -> Vec<usize> {
        self.specs
            .iter()
            .enumerate()
            .filter(|(_, s)| s.role == VarRole::Covariate)
            .map(|(i, _)| i)
            .collect()
    }
}

/// The canonical schema for the glioma cohort: Age plus twelve binary
/// mutation markers as covariates, Gender as treatment, Grade as outcome.
pub fn glioma_schema() -> Schema {
    let mut specs = vec![
        CovariateSpec::continuous("Age", VarRole::Covariate, Some(18.0)),
        CovariateSpec::binary("Gender", VarRole::Treatment),
    ];
    for m in [
        "IDH1", "ATRX", "PTEN", "EGFR", "CIC", "BCOR", "MUC16", "PIK3R1", "PDGFRA", "CSMD3",
        "IDH2", "FAT4",
    ] {
        specs.push(CovariateSpec::binary(m, VarRole::Covariate));
    }
    specs.push(CovariateSpec::binary("Grade", VarRole::Outcome));
    Schema::new(specs).expect("canonical schema is valid")
}

/// An immutable, validated rectangular table of patient records.
#[derive(Debug, Clone)]
pub struct Cohort {
    schema: Arc<Schema>,
    records: Vec<Vec<f64>>,
}

impl Cohort {
    pub fn new(schema: Schema, records: Vec<Vec<f64>>) -> Result<Self, CohortError> {
        let schema = Arc::new(schema);
        let cohort = Cohort { schema, records };
        cohort.validate()?;
        Ok(cohort)
    }

    fn validate(&self) -> Result<(), CohortError> {
        if self.records.len() < 2 {
            return Err(CohortError::EmptyCohort);
        }
        for (row, rec) in self.records.iter().enumerate() {
            if rec.len() != self.schema.len() {
                return Err(CohortError::BadValue {
                    row,
                    column: String::new(),
                    reason: format!(
                        "record has {} values, schema has {} columns",
                        rec.len(),
                        self.schema.len()
                    ),
                });
            }
            for (spec, &v) in self.schema.specs().iter().zip(rec) {
                check_value(row, spec, v)?;
            }
        }
        let t = self.schema.treatment_index();
        let n1 = self.records.iter().filter(|r| r[t] == 1.0).count();
        if n1 == 0 || n1 == self.records.len() {
            return Err(CohortError::SingleArm);
        }
        Ok(())
    }

    pub fn schema(&self) -> &Schema {
        &self.schema
    }

    pub fn n(&self) -> usize {
        self.records.len()
    }

    pub fn records(&self) -> &[Vec<f64>] {
        &self.records
    }

    pub fn column(&self, index: usize) -> Vec<f64> {
        self.records.iter().map(|r| r[index]).collect()
    }

    /// Row indices with treatment == 1 and treatment == 0, in row order.
    pub fn arms(&self) -> (Vec<usize>, Vec<usize>) {
        let t = self.schema.treatment_index();
        let mut treated = Vec::new();
        let mut control = Vec::new();
        for (i, r) in self.records.iter().enumerate() {
            if r[t] == 1.0 {
                treated.push(i);
            } else {
                control.push(i);
            }
        }
        (treated, control)
    }

    /// Serialize back to CSV in schema column order.
    pub fn to_csv(&self) -> String {
        let mut out = String::new();
        let names: Vec<&str> = self.schema.specs().iter().map(|s| s.name.as_str()).collect();
        out.push_str(&names.join(","));
        out.push('\n');
        for rec in &self.records {
            let cells: Vec<String> = rec
                .iter()
                .zip(self.schema.specs())
                .map(|(&v, s)| match s.kind {
                    VarKind::Binary => format!("{}", v as i64),
                    VarKind::Continuous => format!("{v}"),
                })
                .collect();
            out.push_str(&cells.join(","));
            out.push('\n');
        }
        out
    }
}

fn check_value(row: usize, spec: &CovariateSpec, v: f64) -> Result<(), CohortError> {
    if !v.is_finite() {
        return Err(CohortError::BadValue {
            row,
            column: spec.name.clone(),
            reason: format!("non-finite value {v}"),
        });
    }
    match spec.kind {
        VarKind::Binary => {
            if v != 0.0 && v != 1.0 {
                return Err(CohortError::BadValue {
                    row,
                    column: spec.name.clone(),
                    reason: format!("binary column holds {v}, expected 0 or 1"),
                });
            }
        }
        VarKind::Continuous => {
            if let Some(min) = spec.min {
                if v < min {
                    return Err(CohortError::BadValue {
                        row,
                        column: spec.name.clone(),
                        reason: format!("value {v} below domain minimum {min}"),
                    });
                }
            }
        }
    }
    Ok(())
}

/// Read a cohort from CSV. The header must cover every schema column; extra
/// CSV columns are ignored. Rows with missing or unparseable cells are
/// rejected, not imputed.
pub fn load_cohort<R: Read>(source: R, schema: Schema) -> Result<Cohort, CohortError> {
    let mut reader = csv::ReaderBuilder::new().has_headers(true).from_reader(source);
    let headers = reader.headers()?.clone();
    let mut col_map = Vec::with_capacity(schema.len());
    for spec in schema.specs() {
        let pos = headers
            .iter()
            .position(|h| h.trim() == spec.name)
            .ok_or_else(|| CohortError::MissingColumn(spec.name.clone()))?;
        col_map.push(pos);
    }
    let mut records = Vec::new();
    for (row, result) in reader.records().enumerate() {
        let record = result?;
        let mut values = Vec::with_capacity(schema.len());
        for (spec, &pos) in schema.specs().iter().zip(&col_map) {
            let cell = record.get(pos).unwrap_or("").trim();
            if cell.is_empty() {
                return Err(CohortError::BadValue {
                    row,
                    column: spec.name.clone(),
                    reason: "missing value".to_string(),
                });
            }
            let v: f64 = cell.parse().map_err(|_| CohortError::BadValue {
                row,
                column: spec.name.clone(),
                reason: format!("cannot parse '{cell}' as a number"),
            })?;
            check_value(row, spec, v)?;
            values.push(v);
        }
        records.push(values);
    }
    Cohort::new(schema, records)
}

/// Summary of one column within one stratum.
#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ColumnSummary {
    Binary { count: usize, percent: f64 },
    Continuous { mean: f64, sd: f64 },
}

#[derive(Debug, Clone, Serialize)]
pub struct DescriptiveRow {
    pub name: String,
    /// Summaries in stratum order: overall, stratifier == 0, stratifier == 1.
    pub strata: Vec<ColumnSummary>,
}

#[derive(Debug, Clone, Serialize)]
pub struct DescriptiveSummary {
    pub stratified_by: String,
    pub stratum_sizes: Vec<usize>,
    pub rows: Vec<DescriptiveRow>,
}

pub fn sample_mean(values: &[f64]) -> f64 {
    values.iter().sum::<f64>() / values.len() as f64
}

/// Sample standard deviation with the n-1 denominator.
pub fn sample_sd(values: &[f64]) -> f64 {
    if values.len() < 2 {
        return 0.0;
    }
    let m = sample_mean(values);
    let ss: f64 = values.iter().map(|v| (v - m) * (v - m)).sum();
    (ss / (values.len() - 1) as f64).sqrt()
}

/// Per-covariate descriptive statistics, overall and within each level of a
/// binary stratifier. Binary columns report count and percentage of ones;
/// continuous columns report mean and sample SD.
pub fn describe(cohort: &Cohort, stratify_by: &str) -> Result<DescriptiveSummary, CohortError> {
    let schema = cohort.schema();
    let strat_idx = schema
        .index_of(stratify_by)
        .ok_or_else(|| CohortError::UnknownColumn(stratify_by.to_string()))?;
    if schema.specs()[strat_idx].kind != VarKind::Binary {
        return Err(CohortError::BadSchema(format!(
            "stratifier '{stratify_by}' is not binary"
        )));
    }
    let all: Vec<usize> = (0..cohort.n()).collect();
    let s0: Vec<usize> = all
        .iter()
        .copied()
        .filter(|&i| cohort.records()[i][strat_idx] == 0.0)
        .collect();
    let s1: Vec<usize> = all
        .iter()
        .copied()
        .filter(|&i| cohort.records()[i][strat_idx] == 1.0)
        .collect();
    let strata = [&all, &s0, &s1];

    let mut rows = Vec::new();
    for (ci, spec) in schema.specs().iter().enumerate() {
        if ci == strat_idx {
            continue;
        }
        let mut entries = Vec::with_capacity(3);
        for idx in strata {
            let vals: Vec<f64> = idx.iter().map(|&i| cohort.records()[i][ci]).collect();
            entries.push(match spec.kind {
                VarKind::Binary => {
                    let count = vals.iter().filter(|&&v| v == 1.0).count();
                    let percent = if vals.is_empty() {
                        0.0
                    } else {
                        100.0 * count as f64 / vals.len() as f64
                    };
                    ColumnSummary::Binary { count, percent }
                }
                VarKind::Continuous => ColumnSummary::Continuous {
                    mean: sample_mean(&vals),
                    sd: sample_sd(&vals),
                },
            });
        }
        rows.push(DescriptiveRow {
            name: spec.name.clone(),
            strata: entries,
        });
    }
    Ok(DescriptiveSummary {
        stratified_by: stratify_by.to_string(),
        stratum_sizes: vec![all.len(), s0.len(), s1.len()],
        rows,
    })
}
