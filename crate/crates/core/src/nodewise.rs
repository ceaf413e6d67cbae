//! Node-wise Lasso regressions.
//!
//! For every variable `j` the remaining columns are regressed onto column `j`
//! with an L1 penalty:
//!
//! ```text
//! minimize over gamma with gamma_j = -1:
//!     (1/n) sum_t (gamma' y_t)^2 + 2 lambda_j sum_{k != j} |gamma_k|
//! ```
//!
//! The solver is cyclic coordinate descent on the Gram matrix `Y'Y / n`,
//! which is formed once and shared by all `p` problems. A fit is accepted
//! only when the coefficient change of the last sweep is below `tol` *and*
//! the KKT conditions hold to `tol`, so every returned fit carries its own
//! optimality certificate.

use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dataset::Dataset;
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LassoConfig {
    /// Multiplier `c` in `lambda_j = c * sd(y_j) * sqrt(2 log p / n)`.
    pub lambda_scale: f64,
    pub max_iter: usize,
    pub tol: f64,
    /// Per-node penalties used verbatim when present.
    pub lambda_override: Option<Vec<f64>>,
}

impl Default for LassoConfig {
    fn default() -> Self {
        Self {
            lambda_scale: 0.5,
            max_iter: 10_000,
            tol: 1e-7,
            lambda_override: None,
        }
    }
}

impl LassoConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.tol > 0.0) {
            return Err(Error::Config(format!("tol must be positive, got {}", self.tol)));
        }
        if self.max_iter == 0 {
            return Err(Error::Config("max_iter must be at least 1".into()));
        }
        if !(self.lambda_scale > 0.0) || !self.lambda_scale.is_finite() {
            return Err(Error::Config(format!(
                "lambda_scale must be positive, got {}",
                self.lambda_scale
            )));
        }
        Ok(())
    }
}

/// `Y'Y / n` for a centered dataset.
#[derive(Debug, Clone)]
pub struct Gram {
    g: DMatrix<f64>,
    n: usize,
}

impl Gram {
    pub fn new(data: &Dataset) -> Result<Self> {
        require_centered(data)?;
        let y = data.values();
        let g = (y.transpose() * y) / data.n() as f64;
        Ok(Self { g, n: data.n() })
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.g
    }

    pub fn p(&self) -> usize {
        self.g.nrows()
    }

    pub fn n(&self) -> usize {
        self.n
    }
}

fn require_centered(data: &Dataset) -> Result<()> {
    if data.is_centered() {
        Ok(())
    } else {
        Err(Error::InvalidInput(
            "node-wise regressions require centered data".into(),
        ))
    }
}

/// Per-node penalties `lambda_j = lambda_scale * sd(y_j) * sqrt(2 log p / n)`.
pub fn default_lambdas(data: &Dataset, cfg: &LassoConfig) -> Result<Vec<f64>> {
    let p = data.p();
    if let Some(over) = &cfg.lambda_override {
        if over.len() != p {
            return Err(Error::ShapeError(format!(
                "lambda_override has {} entries for p = {p}",
                over.len()
            )));
        }
        if let Some(bad) = over.iter().find(|l| !(**l > 0.0) || !l.is_finite()) {
            return Err(Error::Config(format!("lambda must be positive, got {bad}")));
        }
        return Ok(over.clone());
    }
    require_centered(data)?;
    let n = data.n() as f64;
    let rate = (2.0 * (p as f64).ln() / n).sqrt();
    (0..p)
        .map(|j| {
            let ss: f64 = data.column(j).iter().map(|v| v * v).sum();
            let sd = (ss / (n - 1.0)).sqrt();
            if sd > 0.0 {
                Ok(cfg.lambda_scale * sd * rate)
            } else {
                Err(Error::DegenerateColumn(j))
            }
        })
        .collect()
}

/// One node's solution. `coefficients[j] == -1`.
#[derive(Debug, Clone, PartialEq)]
pub struct NodeFit {
    pub coefficients: Vec<f64>,
    pub iterations: usize,
    pub converged: bool,
}

#[inline]
fn soft_threshold(z: f64, t: f64) -> f64 {
    if z > t {
        z - t
    } else if z < -t {
        z + t
    } else {
        0.0
    }
}

/// `(1/n) sum_t r_t y_{k,t}` for every `k`, with `r_t = -gamma' y_t`,
/// evaluated from the Gram matrix.
fn correlations(gram: &Gram, j: usize, gamma: &[f64]) -> Vec<f64> {
    let g = &gram.g;
    let p = gram.p();
    (0..p)
        .map(|k| {
            if k == j {
                0.0
            } else {
                -(0..p).map(|m| g[(k, m)] * gamma[m]).sum::<f64>()
            }
        })
        .collect()
}

/// Largest violation of the stationarity conditions at `gamma`.
pub fn kkt_violation(gram: &Gram, j: usize, gamma: &[f64], lambda: f64) -> f64 {
    let c = correlations(gram, j, gamma);
    (0..gram.p())
        .filter(|&k| k != j)
        .map(|k| {
            if gamma[k] == 0.0 {
                (c[k].abs() - lambda).max(0.0)
            } else {
                (c[k] - lambda * gamma[k].signum()).abs()
            }
        })
        .fold(0.0, f64::max)
}

/// Penalized objective `(1/n)||Y gamma||^2 + 2 lambda |gamma_{-j}|_1`.
pub fn objective(gram: &Gram, j: usize, gamma: &[f64], lambda: f64) -> f64 {
    let g = &gram.g;
    let p = gram.p();
    let mut quad = 0.0;
    for a in 0..p {
        for b in 0..p {
            quad += gamma[a] * g[(a, b)] * gamma[b];
        }
    }
    let l1: f64 = (0..p).filter(|&k| k != j).map(|k| gamma[k].abs()).sum();
    quad + 2.0 * lambda * l1
}

/// Solves node `j` by coordinate descent on a precomputed Gram matrix.
pub fn fit_node_gram(gram: &Gram, j: usize, lambda: f64, cfg: &LassoConfig) -> Result<NodeFit> {
    let p = gram.p();
    if j >= p {
        return Err(Error::InvalidDimension(format!("node {} out of range", j + 1)));
    }
    if !(lambda > 0.0) || !lambda.is_finite() {
        return Err(Error::Config(format!("lambda must be positive, got {lambda}")));
    }
    let g = &gram.g;
    let mut gamma = vec![0.0; p];
    gamma[j] = -1.0;
    // grad[k] = (1/n) sum_t r_t y_{k,t}
    let mut grad: Vec<f64> = (0..p).map(|k| g[(k, j)]).collect();

    let mut iterations = 0;
    let mut converged = false;
    while iterations < cfg.max_iter {
        iterations += 1;
        let mut max_change: f64 = 0.0;
        for k in 0..p {
            if k == j {
                continue;
            }
            let gkk = g[(k, k)];
            let old = gamma[k];
            let new = if gkk > 0.0 {
                soft_threshold(grad[k] + gkk * old, lambda) / gkk
            } else {
                0.0
            };
            let delta = new - old;
            if delta != 0.0 {
                gamma[k] = new;
                let col = g.column(k);
                for (gm, gc) in grad.iter_mut().zip(col.iter()) {
                    *gm -= delta * gc;
                }
                max_change = max_change.max(delta.abs());
            }
        }
        if max_change < cfg.tol {
            if kkt_violation(gram, j, &gamma, lambda) <= cfg.tol {
                converged = true;
                break;
            }
            // Refresh the running gradient against drift.
            let fresh = correlations(gram, j, &gamma);
            for k in 0..p {
                if k != j {
                    grad[k] = fresh[k];
                }
            }
        }
    }
    if !converged {
        log::warn!(
            "node {}: coordinate descent did not converge in {} sweeps",
            j + 1,
            cfg.max_iter
        );
    }
    Ok(NodeFit {
        coefficients: gamma,
        iterations,
        converged,
    })
}

/// Solves node `j` directly from data.
pub fn fit_node(data: &Dataset, j: usize, lambda: f64, cfg: &LassoConfig) -> Result<NodeFit> {
    cfg.validate()?;
    let gram = Gram::new(data)?;
    fit_node_gram(&gram, j, lambda, cfg).map_err(|e| e.at_node(j))
}

/// All `p` node-wise fits plus residuals.
#[derive(Debug, Clone)]
pub struct NodewiseFit {
    /// Row `j` is `alpha_j`, with `alpha[(j, j)] == -1`.
    pub alpha: DMatrix<f64>,
    pub lambda: Vec<f64>,
    /// `residuals[(t, j)] = -alpha_j' y_t`.
    pub residuals: DMatrix<f64>,
    pub iterations: Vec<usize>,
    pub converged: Vec<bool>,
}

impl NodewiseFit {
    pub fn n(&self) -> usize {
        self.residuals.nrows()
    }

    pub fn p(&self) -> usize {
        self.alpha.nrows()
    }

    /// Residual series of node `j`.
    pub fn residual(&self, j: usize) -> &[f64] {
        let n = self.n();
        &self.residuals.as_slice()[j * n..(j + 1) * n]
    }
}

/// Fits every node. Nodes are solved in parallel; each fit reads only the
/// shared Gram matrix, so the result does not depend on scheduling.
pub fn fit_all(data: &Dataset, cfg: &LassoConfig) -> Result<NodewiseFit> {
    cfg.validate()?;
    let lambda = default_lambdas(data, cfg)?;
    let gram = Gram::new(data)?;
    let p = data.p();
    let fits: Vec<NodeFit> = (0..p)
        .into_par_iter()
        .map(|j| fit_node_gram(&gram, j, lambda[j], cfg).map_err(|e| e.at_node(j)))
        .collect::<Result<_>>()?;

    let mut alpha = DMatrix::zeros(p, p);
    for (j, f) in fits.iter().enumerate() {
        for (k, &c) in f.coefficients.iter().enumerate() {
            alpha[(j, k)] = c;
        }
    }
    let residuals = -(data.values() * alpha.transpose());
    Ok(NodewiseFit {
        alpha,
        lambda,
        residuals,
        iterations: fits.iter().map(|f| f.iterations).collect(),
        converged: fits.iter().map(|f| f.converged).collect(),
    })
}
