//! CSV writers for traces, selection paths, coefficients and study output,
//! and the `key = value` config-file reader.

use std::io::Write;

use crate::error::{Error, Result};
use crate::fit::VariationalFit;
use crate::selection::{PathStep, SelectionResult};
use crate::simulate::StudySummary;
use crate::vb::FitTrace;

fn fmt_f(v: f64) -> String {
    if v.is_nan() {
        "NaN".into()
    } else if v == 0.0 {
        "0".into()
    } else {
        format!("{v}")
    }
}

/// `iteration,elbo,alpha_accepted`; row 0 is the initial bound.
pub fn write_trace_csv<W: Write>(trace: &FitTrace, writer: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(["iteration", "elbo", "alpha_accepted"])?;
    w.write_record(["0".to_string(), fmt_f(trace.initial_elbo), String::new()])?;
    for (k, e) in trace.elbo_per_iteration.iter().enumerate() {
        let acc = trace.alpha_update_accepted.get(k).map(|a| a.to_string()).unwrap_or_default();
        w.write_record([(k + 1).to_string(), fmt_f(*e), acc])?;
    }
    w.flush()?;
    Ok(())
}

/// One row per accepted move.
pub fn write_path_csv<W: Write>(path: &[PathStep], writer: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record([
        "step",
        "phase",
        "iteration",
        "action",
        "predictor",
        "name",
        "one_step_score",
        "exact_score",
        "elbo",
        "log_prior",
    ])?;
    for s in path {
        w.write_record([
            s.step.to_string(),
            format!("{:?}", s.phase).to_lowercase(),
            s.iteration.to_string(),
            s.action.as_str().to_string(),
            s.predictor.map(|j| j.to_string()).unwrap_or_default(),
            s.name.clone(),
            fmt_f(s.one_step_score),
            fmt_f(s.exact_score),
            fmt_f(s.elbo),
            fmt_f(s.log_prior),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// `name,mu,sd,model` for the active columns of a fit. `mean_names` and
/// `var_names` label the fit's own columns in order.
pub fn write_coefficients_csv<W: Write>(
    fit: &VariationalFit,
    mean_names: &[&str],
    var_names: &[&str],
    writer: W,
) -> Result<()> {
    if mean_names.len() != fit.p() || var_names.len() != fit.q() {
        return Err(Error::Dimension("coefficient names do not match the fit".into()));
    }
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(["name", "mu", "sd", "model"])?;
    let sd_b = fit.sd_beta();
    for (k, name) in mean_names.iter().enumerate() {
        w.write_record([name.to_string(), fmt_f(fit.mu_beta[k]), fmt_f(sd_b[k]), "mean".into()])?;
    }
    let sd_a = fit.sd_alpha();
    for (k, name) in var_names.iter().enumerate() {
        w.write_record([name.to_string(), fmt_f(fit.mu_alpha[k]), fmt_f(sd_a[k]), "var".into()])?;
    }
    w.flush()?;
    Ok(())
}

/// Coefficients of the final model of a selection run.
pub fn write_selection_coefficients_csv<W: Write>(result: &SelectionResult, writer: W) -> Result<()> {
    let mean: Vec<&str> = result.index.mean.iter().map(|&j| result.mean_names[j].as_str()).collect();
    let var: Vec<&str> = result.index.var.iter().map(|&j| result.var_names[j].as_str()).collect();
    write_coefficients_csv(&result.fit, &mean, &var, writer)
}

/// Solution paths in long form: `step,iteration,model,predictor,name,value`
/// for every non-intercept column that is active at some step, with 0 at
/// steps where it is inactive.
pub fn write_solution_paths_csv<W: Write>(result: &SelectionResult, writer: W) -> Result<()> {
    let ever = |model: usize, j: usize| {
        result.path.iter().any(|s| {
            let c = if model == 0 { &s.mean_coefficients } else { &s.var_coefficients };
            c.get(j).is_some_and(|v| *v != 0.0)
        })
    };
    let mean_cols: Vec<usize> = (0..result.index.p)
        .filter(|&j| Some(j) != result.index.intercept_mean && ever(0, j))
        .collect();
    let var_cols: Vec<usize> =
        (0..result.index.q).filter(|&j| Some(j) != result.index.intercept_var && ever(1, j)).collect();
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(["step", "iteration", "model", "predictor", "name", "value"])?;
    for s in &result.path {
        for &j in &mean_cols {
            w.write_record([
                s.step.to_string(),
                s.iteration.to_string(),
                "mean".into(),
                j.to_string(),
                result.mean_names[j].clone(),
                fmt_f(s.mean_coefficients[j]),
            ])?;
        }
        for &j in &var_cols {
            w.write_record([
                s.step.to_string(),
                s.iteration.to_string(),
                "var".into(),
                j.to_string(),
                result.var_names[j].clone(),
                fmt_f(s.var_coefficients[j]),
            ])?;
        }
    }
    w.flush()?;
    Ok(())
}

fn join(v: &[usize]) -> String {
    v.iter().map(|j| j.to_string()).collect::<Vec<_>>().join(" ")
}

/// One row per replication.
pub fn write_study_records_csv<W: Write>(summary: &StudySummary, writer: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record([
        "replication",
        "correct_mean",
        "correct_var",
        "nzc_mean",
        "nzc_var",
        "mse",
        "pps",
        "coef_mse",
        "mean_selected",
        "var_selected",
        "error",
    ])?;
    for r in &summary.records {
        w.write_record([
            r.replication.to_string(),
            r.correct_mean.to_string(),
            r.correct_var.to_string(),
            r.nzc_mean.to_string(),
            r.nzc_var.to_string(),
            fmt_f(r.mse),
            fmt_f(r.pps),
            fmt_f(r.coef_mse),
            join(&r.mean_selected),
            join(&r.var_selected),
            r.error.clone().unwrap_or_default(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// `metric,mean,sd` rows for the aggregate study figures.
pub fn write_study_summary_csv<W: Write>(summary: &StudySummary, writer: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(["metric", "mean", "sd"])?;
    let nan = f64::NAN;
    let rows = [
        ("replications", summary.replications as f64, nan),
        ("failures", summary.failures as f64, nan),
        ("cfr_mean", summary.cfr_mean, nan),
        ("cfr_var", summary.cfr_var, nan),
        ("nzc_mean", summary.nzc_mean.mean, summary.nzc_mean.sd),
        ("nzc_var", summary.nzc_var.mean, summary.nzc_var.sd),
        ("mse", summary.mse.mean, summary.mse.sd),
        ("pps", summary.pps.mean, summary.pps.sd),
        ("coef_mse", summary.coef_mse.mean, summary.coef_mse.sd),
    ];
    for (name, m, s) in rows {
        w.write_record([name.to_string(), fmt_f(m), if s.is_nan() { String::new() } else { fmt_f(s) }])?;
    }
    w.flush()?;
    Ok(())
}

/// Parses `key = value` lines. Blank lines and lines starting with `#` are
/// skipped; keys may be written with or without leading dashes. Later
/// duplicates override earlier ones.
pub fn parse_config(text: &str) -> Result<Vec<(String, String)>> {
    let mut out: Vec<(String, String)> = Vec::new();
    for (k, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (key, value) = line
            .split_once('=')
            .ok_or_else(|| Error::InvalidData(format!("config line {}: expected key = value", k + 1)))?;
        let key = key.trim().trim_start_matches('-').replace('_', "-");
        if key.is_empty() {
            return Err(Error::InvalidData(format!("config line {}: empty key", k + 1)));
        }
        let value = value.trim().to_string();
        match out.iter_mut().find(|(k, _)| *k == key) {
            Some(slot) => slot.1 = value,
            None => out.push((key, value)),
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn config_lines() {
        let c = parse_config("# comment\nprior = bernoulli\n\n--pi_mu=0.2\nprior=ebic\n").unwrap();
        assert_eq!(c, vec![("prior".into(), "ebic".into()), ("pi-mu".into(), "0.2".into())]);
        let err = parse_config("a = 1\nnonsense\n").unwrap_err();
        assert!(err.to_string().contains("line 2"));
    }

    #[test]
    fn trace_rows() {
        let t = FitTrace {
            initial_elbo: -10.0,
            elbo_per_iteration: vec![-5.0, -4.5],
            alpha_update_accepted: vec![true, false],
            ..Default::default()
        };
        let mut buf = Vec::new();
        write_trace_csv(&t, &mut buf).unwrap();
        assert_eq!(
            String::from_utf8(buf).unwrap(),
            "iteration,elbo,alpha_accepted\n0,-10,\n1,-5,true\n2,-4.5,false\n"
        );
    }
}
