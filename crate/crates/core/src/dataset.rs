//! Cohort ingestion, covariate encoding and moment targets.
//!
//! A [`Dataset`] holds the raw outcome, exposure and typed covariate columns.
//! [`encode`] expands it into a numeric [`DesignMatrix`] (categorical
//! covariates become `k - 1` dummy columns, everything else passes through),
//! and [`moment_targets`] computes the equally weighted sample moments that
//! the balancing constraints are centred on.

use std::collections::BTreeSet;
use std::fmt;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Highest moment order accepted for covariates and exposure.
pub const MAX_MOMENT_ORDER: usize = 4;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CovariateKind {
    Continuous,
    Binary,
    Ordinal,
    Categorical,
}

impl FromStr for CovariateKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "continuous" | "cont" | "c" => Ok(Self::Continuous),
            "binary" | "bin" | "b" => Ok(Self::Binary),
            "ordinal" | "ord" | "o" => Ok(Self::Ordinal),
            "categorical" | "cat" | "factor" => Ok(Self::Categorical),
            other => Err(Error::Schema(format!(
                "unknown covariate kind `{other}` (expected continuous, binary, ordinal or categorical)"
            ))),
        }
    }
}

impl fmt::Display for CovariateKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            Self::Continuous => "continuous",
            Self::Binary => "binary",
            Self::Ordinal => "ordinal",
            Self::Categorical => "categorical",
        };
        f.write_str(s)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum CovariateValues {
    Numeric(Vec<f64>),
    Levels(Vec<String>),
}

impl CovariateValues {
    pub fn len(&self) -> usize {
        match self {
            Self::Numeric(v) => v.len(),
            Self::Levels(v) => v.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    fn select(&self, rows: &[usize]) -> Self {
        match self {
            Self::Numeric(v) => Self::Numeric(rows.iter().map(|&i| v[i]).collect()),
            Self::Levels(v) => Self::Levels(rows.iter().map(|&i| v[i].clone()).collect()),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Covariate {
    pub name: String,
    pub kind: CovariateKind,
    pub values: CovariateValues,
}

impl Covariate {
    pub fn numeric(name: impl Into<String>, kind: CovariateKind, values: Vec<f64>) -> Self {
        Self {
            name: name.into(),
            kind,
            values: CovariateValues::Numeric(values),
        }
    }

    pub fn categorical(name: impl Into<String>, levels: Vec<String>) -> Self {
        Self {
            name: name.into(),
            kind: CovariateKind::Categorical,
            values: CovariateValues::Levels(levels),
        }
    }
}

/// Outcome, exposure and typed covariates for `n` units.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dataset {
    outcome: Vec<f64>,
    exposure: Vec<f64>,
    covariates: Vec<Covariate>,
}

impl Dataset {
    pub fn new(outcome: Vec<f64>, exposure: Vec<f64>, covariates: Vec<Covariate>) -> Result<Self> {
        let n = outcome.len();
        if n < 2 {
            return Err(Error::InvalidData(format!("need at least 2 rows, got {n}")));
        }
        if exposure.len() != n {
            return Err(Error::InvalidData(format!(
                "exposure has {} rows, outcome has {n}",
                exposure.len()
            )));
        }
        check_finite("outcome", &outcome)?;
        check_finite("exposure", &exposure)?;
        for cov in &covariates {
            if cov.values.len() != n {
                return Err(Error::InvalidData(format!(
                    "covariate `{}` has {} rows, outcome has {n}",
                    cov.name,
                    cov.values.len()
                )));
            }
            match (&cov.values, cov.kind) {
                (CovariateValues::Levels(_), CovariateKind::Categorical) => {}
                (CovariateValues::Levels(_), kind) => {
                    return Err(Error::Schema(format!(
                        "covariate `{}` is {kind} but holds text levels",
                        cov.name
                    )))
                }
                (CovariateValues::Numeric(v), kind) => {
                    check_finite(&cov.name, v)?;
                    if kind == CovariateKind::Binary {
                        if let Some((row, &value)) =
                            v.iter().enumerate().find(|(_, x)| **x != 0.0 && **x != 1.0)
                        {
                            return Err(Error::InvalidBinary {
                                row: row + 1,
                                column: cov.name.clone(),
                                value,
                            });
                        }
                    }
                }
            }
        }
        Ok(Self {
            outcome,
            exposure,
            covariates,
        })
    }

    pub fn n(&self) -> usize {
        self.outcome.len()
    }

    pub fn outcome(&self) -> &[f64] {
        &self.outcome
    }

    pub fn exposure(&self) -> &[f64] {
        &self.exposure
    }

    pub fn covariates(&self) -> &[Covariate] {
        &self.covariates
    }

    /// Rows `rows` (repeats allowed) as a new dataset, e.g. a bootstrap resample.
    pub fn select_rows(&self, rows: &[usize]) -> Result<Self> {
        let outcome = rows.iter().map(|&i| self.outcome[i]).collect();
        let exposure = rows.iter().map(|&i| self.exposure[i]).collect();
        let covariates = self
            .covariates
            .iter()
            .map(|c| Covariate {
                name: c.name.clone(),
                kind: c.kind,
                values: c.values.select(rows),
            })
            .collect();
        Self::new(outcome, exposure, covariates)
    }

    /// Writes the dataset as CSV with columns `outcome,exposure,<covariates>`
    /// under the given outcome/exposure header names.
    pub fn write_csv(&self, path: &Path, outcome_name: &str, exposure_name: &str) -> Result<()> {
        let mut wtr = csv::Writer::from_path(path)?;
        let mut header = vec![outcome_name.to_string(), exposure_name.to_string()];
        header.extend(self.covariates.iter().map(|c| c.name.clone()));
        wtr.write_record(&header)?;
        for i in 0..self.n() {
            let mut rec = vec![self.outcome[i].to_string(), self.exposure[i].to_string()];
            for c in &self.covariates {
                rec.push(match &c.values {
                    CovariateValues::Numeric(v) => v[i].to_string(),
                    CovariateValues::Levels(v) => v[i].clone(),
                });
            }
            wtr.write_record(&rec)?;
        }
        wtr.flush().map_err(|e| Error::io(path, e))?;
        Ok(())
    }
}

fn check_finite(column: &str, values: &[f64]) -> Result<()> {
    match values.iter().position(|v| !v.is_finite()) {
        Some(row) => Err(Error::NonFinite {
            row: row + 1,
            column: column.to_string(),
        }),
        None => Ok(()),
    }
}

/// Column-role assignment for [`load_csv`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Schema {
    pub outcome: String,
    pub exposure: String,
    pub covariates: Vec<(String, CovariateKind)>,
}

impl Schema {
    /// Parses `name:kind` covariate specs, as accepted on the command line.
    pub fn from_specs(outcome: &str, exposure: &str, specs: &[String]) -> Result<Self> {
        let covariates = specs
            .iter()
            .map(|s| {
                let (name, kind) = s.rsplit_once(':').ok_or_else(|| {
                    Error::Schema(format!("covariate spec `{s}` must look like name:kind"))
                })?;
                Ok((name.to_string(), kind.parse()?))
            })
            .collect::<Result<Vec<_>>>()?;
        let schema = Self {
            outcome: outcome.to_string(),
            exposure: exposure.to_string(),
            covariates,
        };
        schema.validate()?;
        Ok(schema)
    }

    fn validate(&self) -> Result<()> {
        if self.covariates.is_empty() {
            return Err(Error::Schema("at least one covariate is required".into()));
        }
        let mut seen = BTreeSet::new();
        for name in std::iter::once(&self.outcome)
            .chain(std::iter::once(&self.exposure))
            .chain(self.covariates.iter().map(|(n, _)| n))
        {
            if !seen.insert(name.as_str()) {
                return Err(Error::Schema(format!("column `{name}` assigned twice")));
            }
        }
        Ok(())
    }
}

fn is_missing(cell: &str) -> bool {
    matches!(cell, "" | "NA" | "na" | "N/A" | "NaN" | "nan" | "." | "null" | "NULL")
}

fn parse_cell(cell: &str, row: usize, column: &str) -> Result<f64> {
    let cell = cell.trim();
    if is_missing(cell) {
        return Err(Error::MissingValue {
            row,
            column: column.to_string(),
        });
    }
    cell.parse::<f64>().map_err(|_| Error::Parse {
        row,
        column: column.to_string(),
        value: cell.to_string(),
    })
}

/// Reads a headed CSV file and validates it against `schema`.
///
/// Row numbers in errors count data rows from 1 (the header is row 0).
pub fn load_csv(path: &Path, schema: &Schema) -> Result<Dataset> {
    schema.validate()?;
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(file);
    let headers = rdr.headers()?.clone();
    let find = |name: &str| {
        headers
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| Error::Schema(format!("column `{name}` not found in {}", path.display())))
    };
    let y_idx = find(&schema.outcome)?;
    let a_idx = find(&schema.exposure)?;
    let cov_idx = schema
        .covariates
        .iter()
        .map(|(n, _)| find(n))
        .collect::<Result<Vec<_>>>()?;

    let mut outcome = Vec::new();
    let mut exposure = Vec::new();
    let mut numeric: Vec<Vec<f64>> = vec![Vec::new(); cov_idx.len()];
    let mut levels: Vec<Vec<String>> = vec![Vec::new(); cov_idx.len()];
    for (r, rec) in rdr.records().enumerate() {
        let rec = rec?;
        let row = r + 1;
        let get = |idx: usize| rec.get(idx).unwrap_or("");
        outcome.push(parse_cell(get(y_idx), row, &schema.outcome)?);
        exposure.push(parse_cell(get(a_idx), row, &schema.exposure)?);
        for (c, ((name, kind), &idx)) in schema.covariates.iter().zip(&cov_idx).enumerate() {
            let cell = get(idx).trim();
            if *kind == CovariateKind::Categorical {
                if is_missing(cell) {
                    return Err(Error::MissingValue {
                        row,
                        column: name.clone(),
                    });
                }
                levels[c].push(cell.to_string());
            } else {
                numeric[c].push(parse_cell(cell, row, name)?);
            }
        }
    }
    let covariates = schema
        .covariates
        .iter()
        .zip(numeric.into_iter().zip(levels))
        .map(|((name, kind), (num, lev))| match kind {
            CovariateKind::Categorical => Covariate::categorical(name.clone(), lev),
            _ => Covariate::numeric(name.clone(), *kind, num),
        })
        .collect();
    Dataset::new(outcome, exposure, covariates)
}

/// Numeric role of an encoded column. Dummies behave as binary columns.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EncodedKind {
    Continuous,
    Binary,
}

/// Encoded covariates, stored column-major.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DesignMatrix {
    n: usize,
    columns: Vec<Vec<f64>>,
    names: Vec<String>,
    kinds: Vec<EncodedKind>,
    /// Index of the originating covariate in the dataset for each column.
    source_map: Vec<usize>,
}

impl DesignMatrix {
    pub fn from_columns(
        columns: Vec<Vec<f64>>,
        names: Vec<String>,
        kinds: Vec<EncodedKind>,
    ) -> Result<Self> {
        let n = columns.first().map_or(0, Vec::len);
        if columns.is_empty() || columns.iter().any(|c| c.len() != n) {
            return Err(Error::InvalidData("design columns must be non-empty and equally long".into()));
        }
        if names.len() != columns.len() || kinds.len() != columns.len() {
            return Err(Error::InvalidData("names/kinds do not match column count".into()));
        }
        let source_map = (0..columns.len()).collect();
        Ok(Self {
            n,
            columns,
            names,
            kinds,
            source_map,
        })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn m(&self) -> usize {
        self.columns.len()
    }

    pub fn column(&self, j: usize) -> &[f64] {
        &self.columns[j]
    }

    pub fn columns(&self) -> &[Vec<f64>] {
        &self.columns
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn kind(&self, j: usize) -> EncodedKind {
        self.kinds[j]
    }

    pub fn kinds(&self) -> &[EncodedKind] {
        &self.kinds
    }

    pub fn source_map(&self) -> &[usize] {
        &self.source_map
    }

    /// The encoded columns as plain numeric covariates (continuous or binary).
    pub fn as_covariates(&self) -> Vec<Covariate> {
        self.columns
            .iter()
            .zip(&self.names)
            .zip(&self.kinds)
            .map(|((col, name), kind)| {
                let kind = match kind {
                    EncodedKind::Continuous => CovariateKind::Continuous,
                    EncodedKind::Binary => CovariateKind::Binary,
                };
                Covariate::numeric(name.clone(), kind, col.clone())
            })
            .collect()
    }

    /// Standardizes continuous columns to mean 0 and unit variance.
    ///
    /// Binary columns are left untouched. Powers of the standardized columns
    /// span the same polynomial space as powers of the raw columns, so balance
    /// constraints built on either describe the same feasible weights.
    pub fn standardized(&self) -> (DesignMatrix, Vec<ColumnTransform>) {
        let mut out = self.clone();
        let transforms = self
            .columns
            .iter()
            .zip(&self.kinds)
            .zip(out.columns.iter_mut())
            .map(|((col, kind), dst)| match kind {
                EncodedKind::Binary => ColumnTransform::IDENTITY,
                EncodedKind::Continuous => {
                    let t = ColumnTransform::fit(col);
                    t.apply_in_place(dst);
                    t
                }
            })
            .collect();
        (out, transforms)
    }
}

/// Affine map `z = (x - center) / scale` recorded for reporting on the raw scale.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ColumnTransform {
    pub center: f64,
    pub scale: f64,
}

impl ColumnTransform {
    pub const IDENTITY: Self = Self {
        center: 0.0,
        scale: 1.0,
    };

    /// Centres on the mean and scales by the population standard deviation;
    /// constant columns keep unit scale.
    pub fn fit(x: &[f64]) -> Self {
        let n = x.len() as f64;
        let center = x.iter().sum::<f64>() / n;
        let var = x.iter().map(|v| (v - center) * (v - center)).sum::<f64>() / n;
        let sd = var.sqrt();
        let scale = if sd > 0.0 && sd.is_finite() { sd } else { 1.0 };
        Self { center, scale }
    }

    pub fn apply(&self, x: f64) -> f64 {
        (x - self.center) / self.scale
    }

    pub fn apply_in_place(&self, x: &mut [f64]) {
        for v in x {
            *v = self.apply(*v);
        }
    }

    pub fn invert(&self, z: f64) -> f64 {
        z * self.scale + self.center
    }
}

fn sorted_levels(values: &[String]) -> Vec<String> {
    let unique: BTreeSet<&str> = values.iter().map(String::as_str).collect();
    let mut levels: Vec<String> = unique.into_iter().map(str::to_string).collect();
    let numeric: Option<Vec<f64>> = levels.iter().map(|l| l.parse::<f64>().ok()).collect();
    if let Some(nums) = numeric {
        let mut paired: Vec<(f64, String)> = nums.into_iter().zip(levels).collect();
        paired.sort_by(|a, b| a.0.total_cmp(&b.0));
        levels = paired.into_iter().map(|(_, l)| l).collect();
    }
    levels
}

/// Expands covariates into the numeric design used for balancing.
///
/// Categorical covariates become `k - 1` dummies with the first level
/// (numeric order when every label parses as a number, lexical otherwise)
/// as the dropped reference. Ordinal covariates pass through as numbers.
pub fn encode(ds: &Dataset) -> Result<DesignMatrix> {
    let mut columns = Vec::new();
    let mut names = Vec::new();
    let mut kinds = Vec::new();
    let mut source_map = Vec::new();
    for (src, cov) in ds.covariates().iter().enumerate() {
        match &cov.values {
            CovariateValues::Numeric(v) => {
                columns.push(v.clone());
                names.push(cov.name.clone());
                kinds.push(match cov.kind {
                    CovariateKind::Binary => EncodedKind::Binary,
                    _ => EncodedKind::Continuous,
                });
                source_map.push(src);
            }
            CovariateValues::Levels(v) => {
                let levels = sorted_levels(v);
                if levels.len() < 2 {
                    return Err(Error::DegenerateColumn(format!(
                        "{} (categorical with a single level)",
                        cov.name
                    )));
                }
                for level in &levels[1..] {
                    columns.push(v.iter().map(|x| f64::from(u8::from(x == level))).collect());
                    names.push(format!("{}={}", cov.name, level));
                    kinds.push(EncodedKind::Binary);
                    source_map.push(src);
                }
            }
        }
    }
    Ok(DesignMatrix {
        n: ds.n(),
        columns,
        names,
        kinds,
        source_map,
    })
}

/// Equally weighted sample moments used as balance targets.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MomentTargets {
    /// `covariate[j][p - 1]` = mean of `X_j^p`; binary columns carry only `p = 1`.
    pub covariate: Vec<Vec<f64>>,
    /// `exposure[q - 1]` = mean of `A^q`.
    pub exposure: Vec<f64>,
}

pub fn moment_targets(
    dm: &DesignMatrix,
    exposure: &[f64],
    covariate_order: usize,
    exposure_order: usize,
) -> Result<MomentTargets> {
    check_order("covariate", covariate_order)?;
    check_order("exposure", exposure_order)?;
    if exposure.len() != dm.n() {
        return Err(Error::InvalidData("exposure length differs from design rows".into()));
    }
    let covariate = dm
        .columns()
        .iter()
        .zip(dm.kinds())
        .map(|(col, kind)| {
            let order = match kind {
                EncodedKind::Binary => 1,
                EncodedKind::Continuous => covariate_order,
            };
            (1..=order).map(|p| power_mean(col, p)).collect()
        })
        .collect();
    let exposure = (1..=exposure_order).map(|q| power_mean(exposure, q)).collect();
    Ok(MomentTargets { covariate, exposure })
}

fn check_order(what: &str, order: usize) -> Result<()> {
    if (1..=MAX_MOMENT_ORDER).contains(&order) {
        Ok(())
    } else {
        Err(Error::InvalidArgument(format!(
            "{what} moment order must lie in 1..={MAX_MOMENT_ORDER}, got {order}"
        )))
    }
}

pub(crate) fn power_mean(x: &[f64], p: usize) -> f64 {
    x.iter().map(|v| v.powi(p as i32)).sum::<f64>() / x.len() as f64
}
