//! Datasets, column roles and standardization.

use std::collections::HashSet;
use std::io::Read;
use std::path::Path;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::select_columns;

pub const INTERCEPT_NAME: &str = "(Intercept)";

/// A rectangular numeric table with named columns, as read from CSV.
#[derive(Debug, Clone, PartialEq)]
pub struct Table {
    pub headers: Vec<String>,
    /// Column-major storage: `columns[k][row]`.
    pub columns: Vec<Vec<f64>>,
}

impl Table {
    pub fn new(headers: Vec<String>, columns: Vec<Vec<f64>>) -> Result<Self> {
        if headers.len() != columns.len() {
            return Err(Error::Dimension(format!(
                "{} headers but {} columns",
                headers.len(),
                columns.len()
            )));
        }
        let nrows = columns.first().map_or(0, Vec::len);
        if let Some((k, _)) = columns.iter().enumerate().find(|(_, c)| c.len() != nrows) {
            return Err(Error::InvalidData(format!(
                "table is not rectangular: column '{}' has {} rows, expected {}",
                headers[k],
                columns[k].len(),
                nrows
            )));
        }
        let mut seen = HashSet::new();
        for h in &headers {
            if !seen.insert(h.as_str()) {
                return Err(Error::InvalidData(format!("duplicate column name '{h}'")));
            }
        }
        Ok(Self { headers, columns })
    }

    pub fn nrows(&self) -> usize {
        self.columns.first().map_or(0, Vec::len)
    }

    pub fn column(&self, name: &str) -> Option<&[f64]> {
        self.headers
            .iter()
            .position(|h| h == name)
            .map(|k| self.columns[k].as_slice())
    }

    /// Parses comma-separated text with a header row. Empty cells become NaN so
    /// that validation can report them by row and column.
    pub fn from_csv_reader<R: Read>(reader: R) -> Result<Self> {
        let mut rdr = csv::ReaderBuilder::new().has_headers(true).from_reader(reader);
        let headers: Vec<String> = rdr.headers()?.iter().map(|h| h.trim().to_string()).collect();
        let mut columns = vec![Vec::new(); headers.len()];
        for (row, record) in rdr.records().enumerate() {
            let record = record?;
            if record.len() != headers.len() {
                return Err(Error::InvalidData(format!(
                    "row {} has {} fields, header has {}",
                    row + 1,
                    record.len(),
                    headers.len()
                )));
            }
            for (k, cell) in record.iter().enumerate() {
                let cell = cell.trim();
                let value = if cell.is_empty() || cell.eq_ignore_ascii_case("na") {
                    f64::NAN
                } else {
                    cell.parse::<f64>().map_err(|_| {
                        Error::InvalidData(format!(
                            "cannot parse '{cell}' in column '{}' at row {}",
                            headers[k],
                            row + 1
                        ))
                    })?
                };
                columns[k].push(value);
            }
        }
        Table::new(headers, columns)
    }

    pub fn from_csv_path(path: impl AsRef<Path>) -> Result<Self> {
        let f = std::fs::File::open(path)?;
        Self::from_csv_reader(std::io::BufReader::new(f))
    }
}

/// Assignment of table columns to the response and the two linear predictors.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ColumnRoles {
    pub response: String,
    pub mean: Vec<String>,
    pub var: Vec<String>,
    pub add_intercepts: bool,
}

impl ColumnRoles {
    /// Response `response`, every other column in both models, intercepts added.
    pub fn all_predictors(table: &Table, response: &str) -> Self {
        let preds: Vec<String> = table
            .headers
            .iter()
            .filter(|h| h.as_str() != response)
            .cloned()
            .collect();
        Self {
            response: response.to_string(),
            mean: preds.clone(),
            var: preds,
            add_intercepts: true,
        }
    }
}

/// Response plus mean and variance designs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DesignData {
    pub y: DVector<f64>,
    pub x: DMatrix<f64>,
    pub z: DMatrix<f64>,
    pub mean_names: Vec<String>,
    pub var_names: Vec<String>,
    pub intercept_mean: Option<usize>,
    pub intercept_var: Option<usize>,
}

impl DesignData {
    pub fn new(
        y: DVector<f64>,
        x: DMatrix<f64>,
        z: DMatrix<f64>,
        mean_names: Vec<String>,
        var_names: Vec<String>,
        intercept_mean: Option<usize>,
        intercept_var: Option<usize>,
    ) -> Result<Self> {
        let n = y.len();
        if n == 0 {
            return Err(Error::InvalidData("dataset has zero rows".into()));
        }
        if x.nrows() != n || z.nrows() != n {
            return Err(Error::Dimension(format!(
                "response has {n} rows, mean design {}, variance design {}",
                x.nrows(),
                z.nrows()
            )));
        }
        if x.ncols() == 0 || z.ncols() == 0 {
            return Err(Error::InvalidData(
                "mean and variance designs need at least one column".into(),
            ));
        }
        if mean_names.len() != x.ncols() || var_names.len() != z.ncols() {
            return Err(Error::Dimension("column name count does not match design".into()));
        }
        for (i, v) in y.iter().enumerate() {
            if !v.is_finite() {
                return Err(Error::NonFinite { row: i + 1, column: "response".into() });
            }
        }
        for (m, names) in [(&x, &mean_names), (&z, &var_names)] {
            for j in 0..m.ncols() {
                if let Some(i) = m.column(j).iter().position(|v| !v.is_finite()) {
                    return Err(Error::NonFinite { row: i + 1, column: names[j].clone() });
                }
            }
        }
        for (m, icpt, which) in [(&x, intercept_mean, "mean"), (&z, intercept_var, "variance")] {
            if let Some(k) = icpt {
                if k >= m.ncols() || m.column(k).iter().any(|&v| v != 1.0) {
                    return Err(Error::InvalidData(format!(
                        "{which} intercept column {k} is not constant 1"
                    )));
                }
            }
        }
        Ok(Self { y, x, z, mean_names, var_names, intercept_mean, intercept_var })
    }

    pub fn n(&self) -> usize {
        self.y.len()
    }

    pub fn p(&self) -> usize {
        self.x.ncols()
    }

    pub fn q(&self) -> usize {
        self.z.ncols()
    }

    /// Sub-design restricted to mean columns `mean` and variance columns `var`.
    pub fn model_data(&self, mean: &[usize], var: &[usize]) -> ModelData {
        ModelData {
            y: self.y.clone(),
            x: select_columns(&self.x, mean),
            z: select_columns(&self.z, var),
        }
    }

    pub fn full_model_data(&self) -> ModelData {
        ModelData { y: self.y.clone(), x: self.x.clone(), z: self.z.clone() }
    }

    /// Replaces the response (and keeps the designs), used by simulations.
    pub fn with_response(&self, y: DVector<f64>) -> Result<Self> {
        Self::new(
            y,
            self.x.clone(),
            self.z.clone(),
            self.mean_names.clone(),
            self.var_names.clone(),
            self.intercept_mean,
            self.intercept_var,
        )
    }
}

/// The numbers a fit actually touches: response and the active designs.
///
/// Unlike [`DesignData`], zero rows are allowed here; the prior-only case is a
/// useful test of the bound.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelData {
    pub y: DVector<f64>,
    pub x: DMatrix<f64>,
    pub z: DMatrix<f64>,
}

impl ModelData {
    pub fn new(y: DVector<f64>, x: DMatrix<f64>, z: DMatrix<f64>) -> Result<Self> {
        if x.nrows() != y.len() || z.nrows() != y.len() {
            return Err(Error::Dimension(format!(
                "response has {} rows, mean design {}, variance design {}",
                y.len(),
                x.nrows(),
                z.nrows()
            )));
        }
        Ok(Self { y, x, z })
    }

    pub fn n(&self) -> usize {
        self.y.len()
    }

    pub fn p(&self) -> usize {
        self.x.ncols()
    }

    pub fn q(&self) -> usize {
        self.z.ncols()
    }
}

/// Builds a [`DesignData`] from a table and a role assignment. Intercepts, when
/// requested, are prepended as column 0 of both designs.
pub fn validate_dataset(table: &Table, roles: &ColumnRoles) -> Result<DesignData> {
    if table.nrows() == 0 {
        return Err(Error::InvalidData("dataset has zero rows".into()));
    }
    if roles.mean.is_empty() && !roles.add_intercepts {
        return Err(Error::InvalidData("at least one mean predictor is required".into()));
    }
    let lookup = |name: &str| -> Result<&[f64]> {
        table
            .column(name)
            .ok_or_else(|| Error::InvalidData(format!("unknown column '{name}'")))
    };
    for list in [&roles.mean, &roles.var] {
        let mut seen = HashSet::new();
        for name in list {
            if !seen.insert(name.as_str()) {
                return Err(Error::InvalidData(format!("duplicate column name '{name}'")));
            }
            if name == &roles.response {
                return Err(Error::InvalidData(format!(
                    "response column '{name}' cannot also be a predictor"
                )));
            }
        }
    }
    let check = |name: &str, col: &[f64]| -> Result<()> {
        match col.iter().position(|v| !v.is_finite()) {
            Some(i) => Err(Error::NonFinite { row: i + 1, column: name.to_string() }),
            None => Ok(()),
        }
    };
    let ycol = lookup(&roles.response)?;
    check(&roles.response, ycol)?;
    let n = table.nrows();
    let build = |names: &[String]| -> Result<(DMatrix<f64>, Vec<String>, Option<usize>)> {
        let offset = usize::from(roles.add_intercepts);
        let mut m = DMatrix::zeros(n, names.len() + offset);
        let mut out_names = Vec::with_capacity(names.len() + offset);
        if roles.add_intercepts {
            m.column_mut(0).fill(1.0);
            out_names.push(INTERCEPT_NAME.to_string());
        }
        for (k, name) in names.iter().enumerate() {
            let col = lookup(name)?;
            check(name, col)?;
            m.column_mut(k + offset).copy_from_slice(col);
            out_names.push(name.clone());
        }
        Ok((m, out_names, roles.add_intercepts.then_some(0)))
    };
    let (x, mean_names, im) = build(&roles.mean)?;
    let (z, var_names, iv) = build(&roles.var)?;
    if z.ncols() == 0 {
        return Err(Error::InvalidData("variance model has no columns".into()));
    }
    DesignData::new(DVector::from_column_slice(ycol), x, z, mean_names, var_names, im, iv)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
pub enum StandardizePolicy {
    #[default]
    None,
    /// Centre, then scale so that every column has sum of squares `n`.
    UnitSs,
    /// Centre, then divide by the sample standard deviation.
    Zscore,
}

impl std::str::FromStr for StandardizePolicy {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "none" => Ok(Self::None),
            "unit_ss" | "unit-ss" => Ok(Self::UnitSs),
            "zscore" => Ok(Self::Zscore),
            other => Err(Error::InvalidData(format!("unknown standardization policy '{other}'"))),
        }
    }
}

/// Per-column affine maps applied by [`standardize`]: `x_std = (x - shift) / scale`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScalingInfo {
    pub policy: StandardizePolicy,
    pub mean_shift: Vec<f64>,
    pub mean_scale: Vec<f64>,
    pub var_shift: Vec<f64>,
    pub var_scale: Vec<f64>,
}

impl ScalingInfo {
    pub fn identity(p: usize, q: usize) -> Self {
        Self {
            policy: StandardizePolicy::None,
            mean_shift: vec![0.0; p],
            mean_scale: vec![1.0; p],
            var_shift: vec![0.0; q],
            var_scale: vec![1.0; q],
        }
    }

    pub fn unit_ss_applied(&self) -> bool {
        self.policy == StandardizePolicy::UnitSs
    }

    /// Applies the stored transform to other data on the same columns, e.g. a
    /// validation set scaled with training-set statistics.
    pub fn apply(&self, data: &DesignData) -> Result<DesignData> {
        if data.p() != self.mean_shift.len() || data.q() != self.var_shift.len() {
            return Err(Error::Dimension("scaling and design have different widths".into()));
        }
        let mut out = data.clone();
        for (m, shift, scale) in [
            (&mut out.x, &self.mean_shift, &self.mean_scale),
            (&mut out.z, &self.var_shift, &self.var_scale),
        ] {
            for j in 0..m.ncols() {
                m.column_mut(j).iter_mut().for_each(|v| *v = (*v - shift[j]) / scale[j]);
            }
        }
        Ok(out)
    }

    /// Inverts the transform on the designs.
    pub fn unstandardize(&self, data: &DesignData) -> DesignData {
        let mut out = data.clone();
        for (m, shift, scale) in [
            (&mut out.x, &self.mean_shift, &self.mean_scale),
            (&mut out.z, &self.var_shift, &self.var_scale),
        ] {
            for j in 0..m.ncols() {
                m.column_mut(j).iter_mut().for_each(|v| *v = *v * scale[j] + shift[j]);
            }
        }
        out
    }

    /// Maps coefficients of a standardized design (full length, zeros for
    /// excluded columns) back to the original column scale. The intercept
    /// absorbs the centring shifts; without an intercept the shifts are dropped.
    pub fn coefficients_to_original(
        shift: &[f64],
        scale: &[f64],
        coef: &[f64],
        intercept: Option<usize>,
    ) -> Vec<f64> {
        let mut out: Vec<f64> = coef.iter().zip(scale).map(|(b, s)| b / s).collect();
        if let Some(k) = intercept {
            let adj: f64 = (0..coef.len())
                .filter(|&j| j != k)
                .map(|j| out[j] * shift[j])
                .sum();
            out[k] -= adj;
        }
        out
    }

    pub fn mean_coefficients_to_original(&self, coef: &[f64], intercept: Option<usize>) -> Vec<f64> {
        Self::coefficients_to_original(&self.mean_shift, &self.mean_scale, coef, intercept)
    }

    pub fn var_coefficients_to_original(&self, coef: &[f64], intercept: Option<usize>) -> Vec<f64> {
        Self::coefficients_to_original(&self.var_shift, &self.var_scale, coef, intercept)
    }
}

fn standardize_matrix(
    m: &mut DMatrix<f64>,
    names: &[String],
    intercept: Option<usize>,
    policy: StandardizePolicy,
) -> Result<(Vec<f64>, Vec<f64>)> {
    let n = m.nrows();
    let mut shift = vec![0.0; m.ncols()];
    let mut scale = vec![1.0; m.ncols()];
    if policy == StandardizePolicy::None {
        return Ok((shift, scale));
    }
    for j in 0..m.ncols() {
        if Some(j) == intercept {
            continue;
        }
        let mut col = m.column_mut(j);
        let mean = col.iter().sum::<f64>() / n as f64;
        let ss: f64 = col.iter().map(|v| (v - mean).powi(2)).sum();
        let denom = match policy {
            StandardizePolicy::UnitSs => n as f64,
            StandardizePolicy::Zscore => (n as f64 - 1.0).max(1.0),
            StandardizePolicy::None => unreachable!(),
        };
        let s = (ss / denom).sqrt();
        if !(s > 1e-14 * mean.abs().max(1.0)) {
            return Err(Error::InvalidData(format!(
                "column '{}' is constant and cannot be standardized",
                names[j]
            )));
        }
        col.iter_mut().for_each(|v| *v = (*v - mean) / s);
        shift[j] = mean;
        scale[j] = s;
    }
    Ok((shift, scale))
}

/// Centres and scales every non-intercept column of both designs.
pub fn standardize(data: &DesignData, policy: StandardizePolicy) -> Result<(DesignData, ScalingInfo)> {
    let mut out = data.clone();
    let (mean_shift, mean_scale) =
        standardize_matrix(&mut out.x, &data.mean_names, data.intercept_mean, policy)?;
    let (var_shift, var_scale) =
        standardize_matrix(&mut out.z, &data.var_names, data.intercept_var, policy)?;
    Ok((out, ScalingInfo { policy, mean_shift, mean_scale, var_shift, var_scale }))
}
