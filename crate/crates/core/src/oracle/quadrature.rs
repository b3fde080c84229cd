use std::f64::consts::PI;

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::ModelData;
use crate::error::{Error, Result};
use crate::prior::PriorSpec;

/// Largest variance dimension `q` accepted by the tensor-product rule. The
/// mean coefficients are integrated out in closed form, so `p` is free.
pub const MAX_QUADRATURE_DIM: usize = 4;
/// Absolute accuracy the evidence is reported to.
pub const QUADRATURE_TOL: f64 = 1e-4;

const MAX_NODES: usize = 4_000_000;
const RULE_SIZES: [usize; 9] = [8, 12, 16, 24, 32, 48, 64, 96, 128];

/// Gauss-Hermite rule for the weight `exp(-x^2)`: nodes in decreasing order
/// and weights, by Newton iteration on the normalized Hermite recurrence.
pub fn gauss_hermite(k: usize) -> (Vec<f64>, Vec<f64>) {
    assert!(k >= 1);
    let pim4 = PI.powf(-0.25);
    let nf = k as f64;
    let mut x = vec![0.0; k];
    let mut w = vec![0.0; k];
    let mut z = 0.0f64;
    for i in 0..k.div_ceil(2) {
        z = match i {
            0 => (2.0 * nf + 1.0).sqrt() - 1.85575 * (2.0 * nf + 1.0).powf(-1.0 / 6.0),
            1 => z - 1.14 * nf.powf(0.426) / z,
            2 => 1.86 * z - 0.86 * x[0],
            3 => 1.91 * z - 0.91 * x[1],
            _ => 2.0 * z - x[i - 2],
        };
        let mut pp = 0.0;
        for _ in 0..100 {
            let (mut p1, mut p2) = (pim4, 0.0);
            for j in 0..k {
                let p3 = p2;
                p2 = p1;
                let jf = j as f64;
                p1 = z * (2.0 / (jf + 1.0)).sqrt() * p2 - (jf / (jf + 1.0)).sqrt() * p3;
            }
            pp = (2.0 * nf).sqrt() * p2;
            let z1 = z;
            z = z1 - p1 / pp;
            if (z - z1).abs() <= 1e-15 * z.abs().max(1.0) {
                break;
            }
        }
        x[i] = z;
        x[k - 1 - i] = -z;
        w[i] = 2.0 / (pp * pp);
        w[k - 1 - i] = w[i];
    }
    (x, w)
}

fn gaussian_log_pdf(x: &DVector<f64>, mean: &DVector<f64>, prec: &DMatrix<f64>, logdet_cov: f64) -> f64 {
    let d = x - mean;
    -0.5 * x.len() as f64 * (2.0 * PI).ln() - 0.5 * logdet_cov - 0.5 * d.dot(&(prec * &d))
}

struct Joint<'a> {
    data: &'a ModelData,
    mb: DVector<f64>,
    ma: DVector<f64>,
    pb: DMatrix<f64>,
    pa: DMatrix<f64>,
    ldb: f64,
    lda: f64,
    /// `X mu_beta0` and `X Sigma_beta0 X^T`, for the beta-marginal likelihood.
    xm: DVector<f64>,
    xsx: DMatrix<f64>,
}

impl<'a> Joint<'a> {
    fn new(data: &'a ModelData, prior: &PriorSpec) -> Result<Self> {
        let inv = |m: &DMatrix<f64>, what: &str| -> Result<(DMatrix<f64>, f64)> {
            let c = m.clone().cholesky().ok_or_else(|| Error::NotPositiveDefinite(what.into()))?;
            let ld = 2.0 * c.l().diagonal().iter().map(|v| v.ln()).sum::<f64>();
            Ok((c.inverse(), ld))
        };
        let (pb, ldb) = inv(prior.sigma_beta0(), "prior covariance of beta")?;
        let (pa, lda) = inv(prior.sigma_alpha0(), "prior covariance of alpha")?;
        let xm = &data.x * prior.mu_beta0();
        let xsx = &data.x * prior.sigma_beta0() * data.x.transpose();
        Ok(Self { data, mb: prior.mu_beta0().clone(), ma: prior.mu_alpha0().clone(), pb, pa, ldb, lda, xm, xsx })
    }

    fn split(&self, theta: &DVector<f64>) -> (DVector<f64>, DVector<f64>) {
        let p = self.data.p();
        (theta.rows(0, p).into_owned(), theta.rows(p, self.data.q()).into_owned())
    }

    fn value(&self, theta: &DVector<f64>) -> f64 {
        let (b, a) = self.split(theta);
        let mean = &self.data.x * &b;
        let logvar = &self.data.z * &a;
        let c = -0.5 * (2.0 * PI).ln();
        let ll: f64 = (0..self.data.n())
            .map(|i| c - 0.5 * logvar[i] - 0.5 * (self.data.y[i] - mean[i]).powi(2) * (-logvar[i]).exp())
            .sum();
        ll + gaussian_log_pdf(&b, &self.mb, &self.pb, self.ldb) + gaussian_log_pdf(&a, &self.ma, &self.pa, self.lda)
    }

    /// Gradient and Hessian.
    fn derivs(&self, theta: &DVector<f64>) -> (DVector<f64>, DMatrix<f64>) {
        let (p, q) = (self.data.p(), self.data.q());
        let (b, a) = self.split(theta);
        let mut g = DVector::zeros(p + q);
        let mut h = DMatrix::zeros(p + q, p + q);
        for i in 0..self.data.n() {
            let x = self.data.x.row(i).transpose();
            let z = self.data.z.row(i).transpose();
            let r = self.data.y[i] - x.dot(&b);
            let e = (-z.dot(&a)).exp();
            g.rows_mut(0, p).axpy(r * e, &x, 1.0);
            g.rows_mut(p, q).axpy(-0.5 + 0.5 * r * r * e, &z, 1.0);
            h.view_mut((0, 0), (p, p)).ger(-e, &x, &x, 1.0);
            h.view_mut((0, p), (p, q)).ger(-r * e, &x, &z, 1.0);
            h.view_mut((p, 0), (q, p)).ger(-r * e, &z, &x, 1.0);
            h.view_mut((p, p), (q, q)).ger(-0.5 * r * r * e, &z, &z, 1.0);
        }
        g.rows_mut(0, p).axpy(-1.0, &(&self.pb * (&b - &self.mb)), 1.0);
        g.rows_mut(p, q).axpy(-1.0, &(&self.pa * (&a - &self.ma)), 1.0);
        h.view_mut((0, 0), (p, p)).zip_apply(&self.pb, |a, b| *a -= b);
        h.view_mut((p, p), (q, q)).zip_apply(&self.pa, |a, b| *a -= b);
        (g, h)
    }

    /// `log p(alpha) + log p(y | alpha)` with beta integrated out:
    /// `y | alpha ~ N(X mu_beta0, X Sigma_beta0 X^T + diag(exp(Z alpha)))`.
    fn marginal_alpha(&self, a: &DVector<f64>) -> f64 {
        let n = self.data.n();
        let logvar = &self.data.z * a;
        let mut cov = self.xsx.clone();
        for i in 0..n {
            cov[(i, i)] += logvar[i].exp();
        }
        let Some(c) = cov.cholesky() else {
            return f64::NEG_INFINITY;
        };
        let r = &self.data.y - &self.xm;
        let ld = 2.0 * c.l().diagonal().iter().map(|v| v.ln()).sum::<f64>();
        let ll = -0.5 * n as f64 * (2.0 * PI).ln() - 0.5 * ld - 0.5 * r.dot(&c.solve(&r));
        ll + gaussian_log_pdf(a, &self.ma, &self.pa, self.lda)
    }

    /// Central-difference gradient and Hessian of [`Self::marginal_alpha`].
    fn marginal_derivs(&self, a: &DVector<f64>, h: f64) -> (DVector<f64>, DMatrix<f64>) {
        let q = a.len();
        let f = |v: &DVector<f64>| self.marginal_alpha(v);
        let f0 = f(a);
        let e = |k: usize| DVector::from_fn(q, |i, _| if i == k { h } else { 0.0 });
        let mut g = DVector::zeros(q);
        let mut hess = DMatrix::zeros(q, q);
        for k in 0..q {
            let (fp, fm) = (f(&(a + e(k))), f(&(a - e(k))));
            g[k] = (fp - fm) / (2.0 * h);
            hess[(k, k)] = (fp - 2.0 * f0 + fm) / (h * h);
            for l in 0..k {
                let v = (f(&(a + e(k) + e(l))) - f(&(a + e(k) - e(l))) - f(&(a - e(k) + e(l)))
                    + f(&(a - e(k) - e(l))))
                    / (4.0 * h * h);
                hess[(k, l)] = v;
                hess[(l, k)] = v;
            }
        }
        (g, hess)
    }

    /// Mode and inverse negative Hessian of the beta-marginal density of
    /// alpha, started from the alpha block of the joint mode.
    fn marginal_mode(&self) -> (DVector<f64>, DMatrix<f64>) {
        let (p, q) = (self.data.p(), self.data.q());
        let (mut a, fallback) = match self.mode() {
            Ok((theta, cov)) => (theta.rows(p, q).into_owned(), cov.view((p, p), (q, q)).into_owned()),
            Err(_) => (self.ma.clone(), self.pa.clone().try_inverse().unwrap_or_else(|| DMatrix::identity(q, q))),
        };
        let mut f = self.marginal_alpha(&a);
        for _ in 0..100 {
            let (g, h) = self.marginal_derivs(&a, 1e-4);
            if g.amax() < 1e-8 {
                break;
            }
            let step = match (-h).cholesky() {
                Some(c) => c.solve(&g),
                None => &fallback * &g,
            };
            let mut t = 1.0;
            let mut moved = false;
            while t > 1e-12 {
                let cand = &a + &step * t;
                let fc = self.marginal_alpha(&cand);
                if fc.is_finite() && fc > f {
                    a = cand;
                    f = fc;
                    moved = true;
                    break;
                }
                t *= 0.5;
            }
            if !moved {
                break;
            }
        }
        let (_, h) = self.marginal_derivs(&a, 1e-4);
        let cov = (-h).cholesky().map(|c| c.inverse()).unwrap_or(fallback);
        (a, cov)
    }

    /// Newton ascent with step halving; falls back to the block-diagonal
    /// Hessian (always negative definite) where the full one is not.
    fn mode(&self) -> Result<(DVector<f64>, DMatrix<f64>)> {
        let (p, q) = (self.data.p(), self.data.q());
        let mut theta = DVector::zeros(p + q);
        theta.rows_mut(0, p).copy_from(&self.mb);
        theta.rows_mut(p, q).copy_from(&self.ma);
        let mut f = self.value(&theta);
        for _ in 0..500 {
            let (g, h) = self.derivs(&theta);
            if g.amax() < 1e-9 {
                break;
            }
            let neg = -h.clone();
            let step = match neg.clone().cholesky() {
                Some(c) => c.solve(&g),
                None => {
                    let mut blk = neg;
                    blk.view_mut((0, p), (p, q)).fill(0.0);
                    blk.view_mut((p, 0), (q, p)).fill(0.0);
                    blk.cholesky()
                        .ok_or_else(|| Error::NotPositiveDefinite("posterior Hessian block".into()))?
                        .solve(&g)
                }
            };
            let mut t = 1.0;
            let mut moved = false;
            while t > 1e-14 {
                let cand = &theta + &step * t;
                let fc = self.value(&cand);
                if fc.is_finite() && fc >= f {
                    moved = cand != theta;
                    theta = cand;
                    f = fc;
                    break;
                }
                t *= 0.5;
            }
            if !moved {
                break;
            }
        }
        let (_, h) = self.derivs(&theta);
        let cov = (-h)
            .cholesky()
            .ok_or_else(|| Error::NotPositiveDefinite("posterior is not log-concave at its mode".into()))?
            .inverse();
        Ok((theta, cov))
    }
}

/// `log p(theta) + log p(y | theta)` with `theta = (beta, alpha)`.
pub fn log_joint_density(data: &ModelData, prior: &PriorSpec, theta: &DVector<f64>) -> Result<f64> {
    if theta.len() != data.p() + data.q() {
        return Err(Error::Dimension("parameter vector has the wrong length".into()));
    }
    Ok(Joint::new(data, prior)?.value(theta))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QuadratureResult {
    pub log_evidence: f64,
    /// Change from the previous rule size.
    pub error_estimate: f64,
    pub nodes_per_dim: usize,
}

fn log_sum_exp(v: &[f64]) -> f64 {
    let m = v.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if !m.is_finite() {
        return m;
    }
    m + v.iter().map(|x| (x - m).exp()).sum::<f64>().ln()
}

fn tensor_rule(joint: &Joint<'_>, mode: &DVector<f64>, lower: &DMatrix<f64>, k: usize) -> f64 {
    let d = mode.len();
    let (x, w) = gauss_hermite(k);
    let log_w: Vec<f64> = w.iter().zip(&x).map(|(w, x)| w.ln() + x * x).collect();
    let total = k.pow(d as u32);
    let scale = lower * 2f64.sqrt();
    let terms: Vec<f64> = (0..total)
        .into_par_iter()
        .map(|mut idx| {
            let mut t = DVector::zeros(d);
            let mut lw = 0.0;
            for c in 0..d {
                let i = idx % k;
                idx /= k;
                t[c] = x[i];
                lw += log_w[i];
            }
            lw + joint.marginal_alpha(&(mode + &scale * t))
        })
        .collect();
    let log_det_l: f64 = lower.diagonal().iter().map(|v| v.ln()).sum();
    log_det_l + 0.5 * d as f64 * 2f64.ln() + log_sum_exp(&terms)
}

/// Log marginal likelihood. The mean coefficients are integrated out exactly
/// (the model is conjugate in beta given alpha); the remaining integral over
/// alpha uses Gauss-Hermite quadrature centred at the mode of the
/// beta-marginal density and scaled by its inverse Hessian. The rule is
/// refined until two successive sizes agree to a tenth of
/// [`QUADRATURE_TOL`].
pub fn log_evidence_quadrature_detailed(data: &ModelData, prior: &PriorSpec) -> Result<QuadratureResult> {
    let d = data.q();
    if d > MAX_QUADRATURE_DIM {
        return Err(Error::Unsupported(format!(
            "quadrature needs q <= {MAX_QUADRATURE_DIM}, got {d}"
        )));
    }
    if prior.p() != data.p() || prior.q() != data.q() {
        return Err(Error::Dimension("prior and data disagree".into()));
    }
    let joint = Joint::new(data, prior)?;
    let (mode, cov) = joint.marginal_mode();
    let lower = cov
        .cholesky()
        .ok_or_else(|| Error::NotPositiveDefinite("posterior covariance".into()))?
        .l();
    let mut prev: Option<(f64, usize)> = None;
    let mut last = None;
    for &k in RULE_SIZES.iter().filter(|&&k| k.pow(d as u32) <= MAX_NODES) {
        let v = tensor_rule(&joint, &mode, &lower, k);
        if let Some((pv, _)) = prev {
            let r = QuadratureResult { log_evidence: v, error_estimate: (v - pv).abs(), nodes_per_dim: k };
            if r.error_estimate < 0.1 * QUADRATURE_TOL {
                return Ok(r);
            }
            last = Some(r);
        }
        prev = Some((v, k));
    }
    Ok(last.expect("at least two rule sizes"))
}

/// As [`log_evidence_quadrature_detailed`]; fails if the rule did not settle
/// within [`QUADRATURE_TOL`].
pub fn log_evidence_quadrature(data: &ModelData, prior: &PriorSpec) -> Result<f64> {
    let r = log_evidence_quadrature_detailed(data, prior)?;
    if r.error_estimate > QUADRATURE_TOL {
        return Err(Error::Unsupported(format!(
            "quadrature did not settle: last change {:.2e}",
            r.error_estimate
        )));
    }
    Ok(r.log_evidence)
}
