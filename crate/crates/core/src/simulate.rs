//! Synthetic heteroscedastic data, prediction metrics and a replication harness.

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};

use crate::data::{standardize, DesignData, StandardizePolicy, INTERCEPT_NAME};
use crate::error::{Error, Result};
use crate::fit::VariationalFit;
use crate::linalg::{row_quad_forms, select_columns};
use crate::selection::{forward_backward_var, forward_var, ModelIndex, NewtonStats, SelectionConfig};

/// `y = b0 + x^T beta + sigma exp(x^T alpha / 2) eps` with AR(1)-correlated
/// Gaussian predictors, optionally mapped into (0, 1) by the normal CDF.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimulationSpec {
    pub beta_tilde: Vec<f64>,
    pub alpha_tilde: Vec<f64>,
    pub intercept_mean: f64,
    pub sigma: f64,
    pub n_train: usize,
    pub n_valid: usize,
    /// Predictor correlations are `decay^|i-j|`.
    pub correlation_decay: f64,
    pub transform_to_unit: bool,
}

impl SimulationSpec {
    /// Eight predictors, three in the mean and two in the variance.
    pub fn small_p(n: usize, sigma: f64) -> Self {
        Self {
            beta_tilde: vec![3.0, 1.5, 0.0, 0.0, 2.0, 0.0, 0.0, 0.0],
            alpha_tilde: vec![0.0, 3.0, 0.0, 0.0, -3.0, 0.0, 0.0, 0.0],
            intercept_mean: 2.0,
            sigma,
            n_train: n,
            n_valid: n,
            correlation_decay: 0.5,
            transform_to_unit: true,
        }
    }

    /// Constant variance, `p` predictors of which the first five are active.
    pub fn sparse_homoscedastic(p: usize, n: usize, sigma: f64) -> Self {
        assert!(p >= 5, "need at least five predictors");
        let mut beta = vec![0.0; p];
        beta[..5].copy_from_slice(&[5.0, -4.0, 3.0, -2.0, 2.0]);
        Self {
            beta_tilde: beta,
            alpha_tilde: vec![0.0; p],
            intercept_mean: 2.0,
            sigma,
            n_train: n,
            n_valid: n,
            correlation_decay: 0.5,
            transform_to_unit: false,
        }
    }

    pub fn p(&self) -> usize {
        self.beta_tilde.len()
    }

    pub fn validate(&self) -> Result<()> {
        if self.beta_tilde.len() != self.alpha_tilde.len() || self.beta_tilde.is_empty() {
            return Err(Error::InvalidData("mean and variance coefficient vectors must have equal, positive length".into()));
        }
        if !(self.sigma > 0.0) || !self.sigma.is_finite() {
            return Err(Error::InvalidData("sigma must be positive".into()));
        }
        if !(self.correlation_decay.abs() < 1.0) {
            return Err(Error::InvalidData("correlation decay must lie in (-1, 1)".into()));
        }
        if self.n_train == 0 || self.n_valid == 0 {
            return Err(Error::InvalidData("sample sizes must be positive".into()));
        }
        let finite = |v: &[f64]| v.iter().all(|x| x.is_finite());
        if !finite(&self.beta_tilde) || !finite(&self.alpha_tilde) || !self.intercept_mean.is_finite() {
            return Err(Error::InvalidData("coefficients must be finite".into()));
        }
        Ok(())
    }

    /// True full-length mean coefficients (intercept first).
    pub fn beta(&self) -> Vec<f64> {
        std::iter::once(self.intercept_mean).chain(self.beta_tilde.iter().copied()).collect()
    }

    /// True full-length log-variance coefficients (intercept `log sigma^2` first).
    pub fn alpha(&self) -> Vec<f64> {
        std::iter::once(2.0 * self.sigma.ln()).chain(self.alpha_tilde.iter().copied()).collect()
    }

    pub fn column_names(&self) -> Vec<String> {
        std::iter::once(INTERCEPT_NAME.to_string())
            .chain((1..=self.p()).map(|j| format!("x{j}")))
            .collect()
    }
}

/// Predictor rows drawn from the stationary AR(1) process.
pub fn simulate_predictors<R: Rng>(spec: &SimulationSpec, n: usize, rng: &mut R) -> DMatrix<f64> {
    let p = spec.p();
    let rho = spec.correlation_decay;
    let innov = (1.0 - rho * rho).sqrt();
    let phi = Normal::standard();
    let mut x = DMatrix::from_element(n, p + 1, 1.0);
    for i in 0..n {
        let mut prev: f64 = rng.sample(StandardNormal);
        for j in 0..p {
            if j > 0 {
                let e: f64 = rng.sample(StandardNormal);
                prev = rho * prev + innov * e;
            }
            x[(i, j + 1)] = if spec.transform_to_unit { phi.cdf(prev) } else { prev };
        }
    }
    x
}

fn simulate_response<R: Rng>(spec: &SimulationSpec, x: &DMatrix<f64>, rng: &mut R) -> DVector<f64> {
    let beta = DVector::from_vec(spec.beta());
    let alpha_t = DVector::from_vec(spec.alpha_tilde.clone());
    let mean = x * beta;
    let p = spec.p();
    DVector::from_fn(x.nrows(), |i, _| {
        let xa: f64 = (0..p).map(|j| x[(i, j + 1)] * alpha_t[j]).sum();
        let e: f64 = rng.sample(StandardNormal);
        mean[i] + spec.sigma * (0.5 * xa).exp() * e
    })
}

fn design(spec: &SimulationSpec, x: DMatrix<f64>, y: DVector<f64>) -> Result<DesignData> {
    let names = spec.column_names();
    DesignData::new(y, x.clone(), x, names.clone(), names, Some(0), Some(0))
}

/// Training set, validation set and the true model, driven by `rng`.
pub fn simulate_hetero_with<R: Rng>(
    spec: &SimulationSpec,
    rng: &mut R,
) -> Result<(DesignData, DesignData, ModelIndex)> {
    spec.validate()?;
    let xt = simulate_predictors(spec, spec.n_train, rng);
    let yt = simulate_response(spec, &xt, rng);
    let xv = simulate_predictors(spec, spec.n_valid, rng);
    let yv = simulate_response(spec, &xv, rng);
    let train = design(spec, xt, yt)?;
    let valid = design(spec, xv, yv)?;
    let mean: Vec<usize> = (0..spec.p()).filter(|&j| spec.beta_tilde[j] != 0.0).map(|j| j + 1).collect();
    let var: Vec<usize> = (0..spec.p()).filter(|&j| spec.alpha_tilde[j] != 0.0).map(|j| j + 1).collect();
    let truth = ModelIndex::with_sets(&train, &mean, &var)?;
    Ok((train, valid, truth))
}

pub fn simulate_hetero(spec: &SimulationSpec, seed: u64) -> Result<(DesignData, DesignData, ModelIndex)> {
    simulate_hetero_with(spec, &mut ChaCha8Rng::seed_from_u64(seed))
}

/// Generator for replication `r` of a study with master seed `seed`: the same
/// key on independent streams.
pub fn replication_rng(seed: u64, r: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(r as u64);
    rng
}

/// `(1/n) sum (y - yhat)^2`
pub fn mse(predictions: &[f64], truth: &[f64]) -> Result<f64> {
    if predictions.len() != truth.len() || truth.is_empty() {
        return Err(Error::Dimension(format!(
            "{} predictions for {} observations",
            predictions.len(),
            truth.len()
        )));
    }
    Ok(predictions.iter().zip(truth).map(|(a, b)| (a - b).powi(2)).sum::<f64>() / truth.len() as f64)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PpsMode {
    /// Normal density at the variational means.
    #[default]
    PlugIn,
    /// Adds the mean-factor predictive variance `x^T Sigma_beta x`.
    IntegratedMean,
}

fn check_model(data: &DesignData, index: &ModelIndex, fit: &VariationalFit) -> Result<()> {
    if index.p != data.p() || index.q != data.q() || fit.p() != index.mean.len() || fit.q() != index.var.len() {
        return Err(Error::Dimension("fitted model does not match the design".into()));
    }
    Ok(())
}

/// Predicted means `x_C^T mu_beta` on `data`.
pub fn predict_mean(data: &DesignData, index: &ModelIndex, fit: &VariationalFit) -> Result<DVector<f64>> {
    check_model(data, index, fit)?;
    Ok(select_columns(&data.x, &index.mean) * &fit.mu_beta)
}

/// Average negative predictive log-density on `data`.
pub fn pps(data: &DesignData, index: &ModelIndex, fit: &VariationalFit, mode: PpsMode) -> Result<f64> {
    check_model(data, index, fit)?;
    let x = select_columns(&data.x, &index.mean);
    let z = select_columns(&data.z, &index.var);
    let mean = &x * &fit.mu_beta;
    let logvar = &z * &fit.mu_alpha;
    let extra = match mode {
        PpsMode::PlugIn => DVector::zeros(data.n()),
        PpsMode::IntegratedMean => row_quad_forms(&x, &fit.sigma_beta),
    };
    let ln2pi = (2.0 * std::f64::consts::PI).ln();
    let total: f64 = (0..data.n())
        .map(|i| {
            let var = logvar[i].exp() + extra[i];
            0.5 * ln2pi + 0.5 * var.ln() + 0.5 * (data.y[i] - mean[i]).powi(2) / var
        })
        .sum();
    Ok(total / data.n() as f64)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Classification {
    pub correct_mean: bool,
    pub correct_var: bool,
    /// Non-intercept columns left out of each model.
    pub nzc_mean: usize,
    pub nzc_var: usize,
}

/// Exact support recovery (intercepts excluded) and zero counts.
pub fn classify_fit(selected: &ModelIndex, truth: &ModelIndex) -> Classification {
    let (cm, cv) = (selected.mean_predictors(), selected.var_predictors());
    Classification {
        correct_mean: cm == truth.mean_predictors(),
        correct_var: cv == truth.var_predictors(),
        nzc_mean: selected.mean_universe() - cm.len(),
        nzc_var: selected.var_universe() - cv.len(),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StudyConfig {
    pub selection: SelectionConfig,
    /// Run the backward phase after the forward phase.
    pub backward: bool,
    pub standardize: StandardizePolicy,
    pub pps_mode: PpsMode,
}

impl Default for StudyConfig {
    fn default() -> Self {
        Self {
            selection: SelectionConfig::default(),
            backward: true,
            standardize: StandardizePolicy::UnitSs,
            pps_mode: PpsMode::PlugIn,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReplicationRecord {
    pub replication: usize,
    pub correct_mean: bool,
    pub correct_var: bool,
    pub nzc_mean: usize,
    pub nzc_var: usize,
    /// Prediction error on the validation set.
    pub mse: f64,
    pub pps: f64,
    /// `||beta - beta_hat||^2` over all mean coefficients, original scale.
    pub coef_mse: f64,
    pub mean_selected: Vec<usize>,
    pub var_selected: Vec<usize>,
    pub error: Option<String>,
    #[serde(skip)]
    pub newton: NewtonStats,
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct MeanSd {
    pub mean: f64,
    pub sd: f64,
}

impl MeanSd {
    /// Sample mean and standard deviation; the sd of a single value is 0.
    pub fn of(values: &[f64]) -> Self {
        let n = values.len();
        if n == 0 {
            return Self { mean: f64::NAN, sd: f64::NAN };
        }
        let mean = values.iter().sum::<f64>() / n as f64;
        let sd = if n == 1 {
            0.0
        } else {
            (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64).sqrt()
        };
        Self { mean, sd }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StudySummary {
    pub replications: usize,
    pub failures: usize,
    /// Percentages over successful replications.
    pub cfr_mean: f64,
    pub cfr_var: f64,
    pub nzc_mean: MeanSd,
    pub nzc_var: MeanSd,
    pub mse: MeanSd,
    pub pps: MeanSd,
    pub coef_mse: MeanSd,
    pub records: Vec<ReplicationRecord>,
    #[serde(skip)]
    pub newton: NewtonStats,
}

/// Simulate, select and evaluate one replication. Everything happens on the
/// standardized scale except the coefficient error, which is measured on the
/// original scale.
pub fn run_replication(spec: &SimulationSpec, cfg: &StudyConfig, seed: u64, r: usize) -> ReplicationRecord {
    let mut rec = ReplicationRecord {
        replication: r,
        correct_mean: false,
        correct_var: false,
        nzc_mean: 0,
        nzc_var: 0,
        mse: f64::NAN,
        pps: f64::NAN,
        coef_mse: f64::NAN,
        mean_selected: Vec::new(),
        var_selected: Vec::new(),
        error: None,
        newton: NewtonStats::default(),
    };
    let outcome = (|| -> Result<()> {
        let (train, valid, truth) = simulate_hetero_with(spec, &mut replication_rng(seed, r))?;
        let (train_s, scaling) = standardize(&train, cfg.standardize)?;
        let valid_s = scaling.apply(&valid)?;
        let res = if cfg.backward {
            forward_backward_var(&train_s, &cfg.selection)?
        } else {
            forward_var(&train_s, &cfg.selection)?
        };
        let class = classify_fit(&res.index, &truth);
        let pred = predict_mean(&valid_s, &res.index, &res.fit)?;
        let mut coef = vec![0.0; res.index.p];
        for (k, &j) in res.index.mean.iter().enumerate() {
            coef[j] = res.fit.mu_beta[k];
        }
        let coef = scaling.mean_coefficients_to_original(&coef, res.index.intercept_mean);
        rec.correct_mean = class.correct_mean;
        rec.correct_var = class.correct_var;
        rec.nzc_mean = class.nzc_mean;
        rec.nzc_var = class.nzc_var;
        rec.mse = mse(pred.as_slice(), valid_s.y.as_slice())?;
        rec.pps = pps(&valid_s, &res.index, &res.fit, cfg.pps_mode)?;
        rec.coef_mse = coef.iter().zip(spec.beta()).map(|(a, b)| (a - b).powi(2)).sum();
        rec.mean_selected = res.index.mean_predictors();
        rec.var_selected = res.index.var_predictors();
        rec.newton = res.newton;
        Ok(())
    })();
    if let Err(e) = outcome {
        rec.error = Some(e.to_string());
    }
    rec
}

/// Aggregates records (in the given order) into a summary.
pub fn summarize(records: Vec<ReplicationRecord>) -> StudySummary {
    let ok: Vec<&ReplicationRecord> = records.iter().filter(|r| r.error.is_none()).collect();
    let pct = |f: &dyn Fn(&ReplicationRecord) -> bool| {
        if ok.is_empty() {
            f64::NAN
        } else {
            100.0 * ok.iter().filter(|r| f(r)).count() as f64 / ok.len() as f64
        }
    };
    let col = |f: &dyn Fn(&ReplicationRecord) -> f64| MeanSd::of(&ok.iter().map(|r| f(r)).collect::<Vec<_>>());
    let mut newton = NewtonStats::default();
    for r in &ok {
        newton.merge(&r.newton);
    }
    StudySummary {
        replications: records.len(),
        failures: records.len() - ok.len(),
        cfr_mean: pct(&|r| r.correct_mean),
        cfr_var: pct(&|r| r.correct_var),
        nzc_mean: col(&|r| r.nzc_mean as f64),
        nzc_var: col(&|r| r.nzc_var as f64),
        mse: col(&|r| r.mse),
        pps: col(&|r| r.pps),
        coef_mse: col(&|r| r.coef_mse),
        newton,
        records,
    }
}

/// `replications` independent runs, in parallel, aggregated in replication order.
pub fn replicate_study(spec: &SimulationSpec, replications: usize, cfg: &StudyConfig, seed: u64) -> Result<StudySummary> {
    if replications == 0 {
        return Err(Error::InvalidData("need at least one replication".into()));
    }
    spec.validate()?;
    let records: Vec<ReplicationRecord> =
        (0..replications).into_par_iter().map(|r| run_replication(spec, cfg, seed, r)).collect();
    Ok(summarize(records))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn small_p_truth() {
        let spec = SimulationSpec::small_p(50, 0.5);
        let (train, valid, truth) = simulate_hetero(&spec, 1).unwrap();
        assert_eq!(train.n(), 50);
        assert_eq!(valid.n(), 50);
        assert_eq!(truth.mean_predictors(), vec![1, 2, 5]);
        assert_eq!(truth.var_predictors(), vec![2, 5]);
        let c = classify_fit(&truth, &truth);
        assert_eq!((c.nzc_mean, c.nzc_var), (5, 6));
        assert!(train.x.column(1).iter().all(|v| *v > 0.0 && *v < 1.0));
    }

    #[test]
    fn deterministic_given_seed() {
        let spec = SimulationSpec::small_p(20, 1.0);
        assert_eq!(simulate_hetero(&spec, 9).unwrap().0, simulate_hetero(&spec, 9).unwrap().0);
        assert_ne!(replication_rng(9, 0).random::<u64>(), replication_rng(9, 1).random::<u64>());
    }

    #[test]
    fn mse_basics() {
        assert_eq!(mse(&[1.0, 2.0], &[1.0, 2.0]).unwrap(), 0.0);
        assert_eq!(mse(&[2.0, 3.0], &[1.0, 2.0]).unwrap(), 1.0);
        assert!(mse(&[1.0], &[1.0, 2.0]).is_err());
    }

    #[test]
    fn single_replication_sd_is_zero() {
        let s = MeanSd::of(&[3.5]);
        assert_eq!((s.mean, s.sd), (3.5, 0.0));
    }
}
