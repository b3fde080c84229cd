//! Builders for the two real-data designs: the quadratic diabetes model and
//! the grouped-temperature petrol vapour ("sniffer") model.

use nalgebra::{DMatrix, DVector};

use crate::data::{DesignData, Table, INTERCEPT_NAME};
use crate::error::{Error, Result};

/// 442 patients, ten baseline inputs and the progression response `y`.
pub const DIABETES_CSV: &str = include_str!("../data/diabetes.csv");

pub const DIABETES_INPUTS: [&str; 10] = ["age", "sex", "bmi", "map", "tc", "ldl", "hdl", "tch", "ltg", "glu"];

pub fn diabetes_table() -> Result<Table> {
    Table::from_csv_reader(DIABETES_CSV.as_bytes())
}

fn column<'a>(table: &'a Table, name: &str) -> Result<&'a [f64]> {
    table
        .column(name)
        .or_else(|| {
            table
                .headers
                .iter()
                .position(|h| h.eq_ignore_ascii_case(name))
                .map(|k| table.columns[k].as_slice())
        })
        .ok_or_else(|| Error::InvalidData(format!("missing column '{name}'")))
}

/// The 64-predictor quadratic model: ten main effects, nine squares (the
/// binary `sex` has none) and all 45 pairwise interactions, in that order,
/// with an intercept at column 0. The same columns form both designs.
///
/// Inputs are centred and scaled to unit sum of squares `n` before squares
/// and products are formed, so that, e.g., `bmi:ltg` is an interaction and
/// not mostly a rescaled main effect.
pub fn diabetes_quadratic(table: &Table) -> Result<DesignData> {
    let y = DVector::from_column_slice(column(table, "y")?);
    let n = y.len();
    let mains: Vec<Vec<f64>> = DIABETES_INPUTS
        .iter()
        .map(|c| column(table, c).map(standardize_input))
        .collect::<Result<_>>()?;
    let mut names = vec![INTERCEPT_NAME.to_string()];
    let mut cols: Vec<Vec<f64>> = vec![vec![1.0; n]];
    for (k, m) in mains.iter().enumerate() {
        names.push(DIABETES_INPUTS[k].to_string());
        cols.push(m.clone());
    }
    for (k, m) in mains.iter().enumerate() {
        if DIABETES_INPUTS[k] == "sex" {
            continue;
        }
        names.push(format!("{}^2", DIABETES_INPUTS[k]));
        cols.push(m.iter().map(|v| v * v).collect());
    }
    for a in 0..mains.len() {
        for b in a + 1..mains.len() {
            names.push(format!("{}:{}", DIABETES_INPUTS[a], DIABETES_INPUTS[b]));
            cols.push(mains[a].iter().zip(&mains[b]).map(|(u, v)| u * v).collect());
        }
    }
    let x = DMatrix::from_fn(n, cols.len(), |i, j| cols[j][i]);
    DesignData::new(y, x.clone(), x, names.clone(), names, Some(0), Some(0))
}

fn standardize_input(v: &[f64]) -> Vec<f64> {
    let n = v.len() as f64;
    let m = v.iter().sum::<f64>() / n;
    let s = (v.iter().map(|x| (x - m).powi(2)).sum::<f64>() / n).sqrt();
    v.iter().map(|x| (x - m) / s).collect()
}

/// `TankTemp` thresholds splitting the data into three groups:
/// `g1 = x1 < low`, `g2 = low <= x1 < high`, `g3 = x1 >= high`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SnifferGroups {
    pub low: f64,
    pub high: f64,
}

/// Mean model `g1, g2, g3, x2, (g1+g2) x4, g3 x4` with the last three
/// columns centred within temperature groups (so the indicator coefficients
/// are group means); variance model intercept plus centred `x2` and `x4`.
/// Columns are read case-insensitively as `TankTemp`, `GasTemp`, `GasPres`, `Y`.
pub fn sniffer_design(table: &Table, groups: SnifferGroups) -> Result<DesignData> {
    if !(groups.low < groups.high) {
        return Err(Error::InvalidData("group thresholds must be increasing".into()));
    }
    let x1 = column(table, "TankTemp")?;
    let x2 = column(table, "GasTemp")?;
    let x4 = column(table, "GasPres")?;
    let y = DVector::from_column_slice(column(table, "Y")?);
    let n = y.len();
    let group: Vec<usize> = x1
        .iter()
        .map(|&t| if t < groups.low { 0 } else if t < groups.high { 1 } else { 2 })
        .collect();
    for g in 0..3 {
        if !group.contains(&g) {
            return Err(Error::InvalidData(format!("temperature group g{} is empty", g + 1)));
        }
    }
    let within_centre = |v: Vec<f64>| -> Vec<f64> {
        let mut sum = [0.0; 3];
        let mut cnt = [0.0; 3];
        for (i, &g) in group.iter().enumerate() {
            sum[g] += v[i];
            cnt[g] += 1.0;
        }
        v.iter().zip(&group).map(|(x, &g)| x - sum[g] / cnt[g]).collect()
    };
    let ind = |k: usize| -> Vec<f64> { group.iter().map(|&g| f64::from(u8::from(g == k))).collect() };
    let mean_cols = [
        ind(0),
        ind(1),
        ind(2),
        within_centre(x2.to_vec()),
        within_centre(x4.iter().zip(&group).map(|(v, &g)| if g < 2 { *v } else { 0.0 }).collect()),
        within_centre(x4.iter().zip(&group).map(|(v, &g)| if g == 2 { *v } else { 0.0 }).collect()),
    ];
    let centre = |v: &[f64]| -> Vec<f64> {
        let m = v.iter().sum::<f64>() / v.len() as f64;
        v.iter().map(|x| x - m).collect()
    };
    let var_cols = [vec![1.0; n], centre(x2), centre(x4)];
    let x = DMatrix::from_fn(n, 6, |i, j| mean_cols[j][i]);
    let z = DMatrix::from_fn(n, 3, |i, j| var_cols[j][i]);
    let mean_names = ["g1", "g2", "g3", "x2", "g12:x4", "g3:x4"].map(String::from).to_vec();
    let var_names = vec![INTERCEPT_NAME.to_string(), "x2".into(), "x4".into()];
    DesignData::new(y, x, z, mean_names, var_names, None, Some(0))
}
