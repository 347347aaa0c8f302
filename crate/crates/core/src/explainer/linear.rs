//! Weighted elastic net by cyclic coordinate descent, and weighted OLS.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

pub const MAX_SWEEPS: usize = 10_000;
pub const OLS_RIDGE_JITTER: f64 = 1e-10;

#[derive(Debug, Clone, PartialEq)]
pub struct ElasticNetModel {
    pub intercept: f64,
    pub coefs: Vec<f64>,
    pub alpha: f64,
    pub rho: f64,
    pub tol: f64,
    pub n_iters: usize,
    pub converged: bool,
}

impl ElasticNetModel {
    pub fn predict_row(&self, x: &[f64]) -> f64 {
        self.intercept + self.coefs.iter().zip(x).map(|(b, v)| b * v).sum::<f64>()
    }

    pub fn predict(&self, x: &DMatrix<f64>) -> Vec<f64> {
        (0..x.nrows())
            .map(|r| self.intercept + (0..x.ncols()).map(|c| self.coefs[c] * x[(r, c)]).sum::<f64>())
            .collect()
    }
}

fn validate(x: &DMatrix<f64>, y: &[f64], w: &[f64]) -> Result<()> {
    if x.nrows() != y.len() || y.len() != w.len() {
        return Err(Error::Input(format!(
            "{} rows, {} targets, {} weights",
            x.nrows(),
            y.len(),
            w.len()
        )));
    }
    if y.is_empty() {
        return Err(Error::InsufficientData("no rows to fit".into()));
    }
    if x.iter().chain(y).any(|v| !v.is_finite()) {
        return Err(Error::Input("non-finite value in design or target".into()));
    }
    if w.iter().any(|v| !(v.is_finite() && *v > 0.0)) {
        return Err(Error::Input("weights must be positive and finite".into()));
    }
    Ok(())
}

/// Weighted-centred sufficient statistics, everything divided by n:
/// `G = XcᵀWXc/n`, `c = XcᵀW yc/n`.
#[derive(Debug, Clone)]
pub struct WeightedGram {
    xbar: DVector<f64>,
    ybar: f64,
    g: DMatrix<f64>,
    c: DVector<f64>,
    yy: f64,
}

impl WeightedGram {
    pub fn new(x: &DMatrix<f64>, y: &[f64], w: &[f64]) -> Result<Self> {
        validate(x, y, w)?;
        let (n, d) = x.shape();
        let sw: f64 = w.iter().sum();
        let xbar = DVector::from_fn(d, |j, _| (0..n).map(|i| w[i] * x[(i, j)]).sum::<f64>() / sw);
        let ybar = y.iter().zip(w).map(|(a, b)| a * b).sum::<f64>() / sw;
        let nf = n as f64;
        // Rows scaled by sqrt(w) so one product gives the weighted Gram.
        let xs = DMatrix::from_fn(n, d, |i, j| (x[(i, j)] - xbar[j]) * w[i].sqrt());
        let ys = DVector::from_fn(n, |i, _| (y[i] - ybar) * w[i].sqrt());
        let g = xs.tr_mul(&xs) / nf;
        let c = xs.tr_mul(&ys) / nf;
        let yy = ys.norm_squared() / nf;
        Ok(Self { xbar, ybar, g, c, yy })
    }

    pub fn n_features(&self) -> usize {
        self.c.len()
    }

    /// Objective of a coefficient vector with the optimal intercept.
    pub fn objective(&self, beta: &[f64], alpha: f64, rho: f64) -> f64 {
        let b = DVector::from_column_slice(beta);
        let quad = 0.5 * (self.yy - 2.0 * self.c.dot(&b) + b.dot(&(&self.g * &b)));
        quad + penalty(beta, alpha, rho)
    }

    fn intercept(&self, beta: &[f64]) -> f64 {
        self.ybar - self.xbar.iter().zip(beta).map(|(m, b)| m * b).sum::<f64>()
    }

    /// Coordinate descent from `init` (zeros when `None`). When `trace` is
    /// given it receives the objective after every sweep.
    pub fn solve(
        &self,
        alpha: f64,
        rho: f64,
        tol: f64,
        init: Option<&[f64]>,
        mut trace: Option<&mut Vec<f64>>,
    ) -> Result<ElasticNetModel> {
        if !(alpha >= 0.0 && alpha.is_finite()) || !(0.0..=1.0).contains(&rho) || !(tol > 0.0) {
            return Err(Error::Input(format!(
                "invalid elastic-net parameters alpha={alpha}, rho={rho}, tol={tol}"
            )));
        }
        let d = self.n_features();
        let mut beta = match init {
            Some(b) if b.len() == d => b.to_vec(),
            Some(_) => return Err(Error::Input("warm start has the wrong length".into())),
            None => vec![0.0; d],
        };
        let mut gb: Vec<f64> = (0..d)
            .map(|j| (0..d).map(|k| self.g[(j, k)] * beta[k]).sum())
            .collect();
        let l1 = alpha * rho;
        let l2 = alpha * (1.0 - rho);
        // G is column-major, so column j is a contiguous slice.
        let g = self.g.as_slice();
        let c = self.c.as_slice();
        let mut n_iters = 0;
        let mut converged = false;
        while n_iters < MAX_SWEEPS {
            n_iters += 1;
            let mut max_delta: f64 = 0.0;
            for j in 0..d {
                let col = &g[j * d..(j + 1) * d];
                let gjj = col[j];
                let denom = gjj + l2;
                let old = beta[j];
                let new = if denom > 0.0 {
                    soft_threshold(c[j] - gb[j] + gjj * old, l1) / denom
                } else {
                    0.0
                };
                let delta = new - old;
                if delta != 0.0 {
                    beta[j] = new;
                    for (v, gk) in gb.iter_mut().zip(col) {
                        *v += gk * delta;
                    }
                }
                max_delta = max_delta.max(delta.abs());
            }
            if let Some(t) = trace.as_deref_mut() {
                t.push(self.objective(&beta, alpha, rho));
            }
            if max_delta < tol {
                converged = true;
                break;
            }
        }
        if !converged {
            log::warn!("elastic net (alpha={alpha}, rho={rho}) stopped after {MAX_SWEEPS} sweeps");
        }
        Ok(ElasticNetModel {
            intercept: self.intercept(&beta),
            coefs: beta,
            alpha,
            rho,
            tol,
            n_iters,
            converged,
        })
    }

    /// Ridge-jittered normal equations.
    pub fn solve_ols(&self) -> Result<ElasticNetModel> {
        let d = self.n_features();
        let a = &self.g + DMatrix::identity(d, d) * OLS_RIDGE_JITTER;
        let beta = match a.clone().cholesky() {
            Some(ch) => ch.solve(&self.c),
            None => a
                .lu()
                .solve(&self.c)
                .ok_or_else(|| Error::Numeric("singular normal equations".into()))?,
        };
        if beta.iter().any(|v| !v.is_finite()) {
            return Err(Error::Numeric("OLS produced non-finite coefficients".into()));
        }
        let coefs: Vec<f64> = beta.iter().copied().collect();
        Ok(ElasticNetModel {
            intercept: self.intercept(&coefs),
            coefs,
            alpha: 0.0,
            rho: 0.0,
            tol: 0.0,
            n_iters: 1,
            converged: true,
        })
    }
}

fn soft_threshold(z: f64, t: f64) -> f64 {
    if z > t {
        z - t
    } else if z < -t {
        z + t
    } else {
        0.0
    }
}

fn penalty(beta: &[f64], alpha: f64, rho: f64) -> f64 {
    let l1: f64 = beta.iter().map(|b| b.abs()).sum();
    let l2: f64 = beta.iter().map(|b| b * b).sum();
    alpha * (rho * l1 + 0.5 * (1.0 - rho) * l2)
}

/// `(1/2n) Σ w(y − β₀ − xᵀβ)² + α[ρ‖β‖₁ + (1−ρ)/2 ‖β‖²]`, evaluated row by row.
pub fn elastic_net_objective(
    x: &DMatrix<f64>,
    y: &[f64],
    w: &[f64],
    intercept: f64,
    beta: &[f64],
    alpha: f64,
    rho: f64,
) -> f64 {
    let n = y.len() as f64;
    let mut loss = 0.0;
    for i in 0..y.len() {
        let pred = intercept + (0..x.ncols()).map(|j| x[(i, j)] * beta[j]).sum::<f64>();
        loss += w[i] * (y[i] - pred).powi(2);
    }
    loss / (2.0 * n) + penalty(beta, alpha, rho)
}

pub fn fit_elastic_net(
    x: &DMatrix<f64>,
    y: &[f64],
    w: &[f64],
    alpha: f64,
    rho: f64,
    tol: f64,
) -> Result<ElasticNetModel> {
    WeightedGram::new(x, y, w)?.solve(alpha, rho, tol, None, None)
}

/// As [`fit_elastic_net`], also returning the objective after each sweep.
pub fn fit_elastic_net_traced(
    x: &DMatrix<f64>,
    y: &[f64],
    w: &[f64],
    alpha: f64,
    rho: f64,
    tol: f64,
) -> Result<(ElasticNetModel, Vec<f64>)> {
    let mut trace = Vec::new();
    let m = WeightedGram::new(x, y, w)?.solve(alpha, rho, tol, None, Some(&mut trace))?;
    Ok((m, trace))
}

pub fn fit_ols(x: &DMatrix<f64>, y: &[f64], w: &[f64]) -> Result<ElasticNetModel> {
    WeightedGram::new(x, y, w)?.solve_ols()
}
