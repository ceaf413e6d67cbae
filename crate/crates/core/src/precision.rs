//! Bias-corrected residual covariance `v_hat`, the precision estimate
//! `omega_hat`, and the per-pair score series built from them.

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::index_set::IndexSet;
use crate::dataset::Dataset;
use crate::nodewise::{fit_all, LassoConfig, NodewiseFit};
use crate::sym_matrix::SymMatrix;

/// Default cap on `n * r` for materializing a dense score matrix.
pub const DEFAULT_SCORE_BUDGET: usize = 1 << 31;

/// Residual cross-moments with the first-order Lasso bias removed:
///
/// ```text
/// v_jj  = (1/n) sum_t e_jt^2
/// v_ab  = -(1/n) sum_t (e_at e_bt + alpha_ab e_bt^2 + alpha_ba e_at^2),  a != b
/// ```
pub fn estimate_v(fit: &NodewiseFit) -> Result<SymMatrix> {
    let n = fit.n() as f64;
    let p = fit.p();
    let sq: Vec<f64> = (0..p)
        .map(|j| fit.residual(j).iter().map(|e| e * e).sum::<f64>())
        .collect();
    if let Some(j) = (0..p).find(|&j| !(sq[j] > 0.0)) {
        return Err(Error::DegenerateResiduals(j));
    }
    Ok(SymMatrix::from_fn(p, |a, b| {
        if a == b {
            sq[a] / n
        } else {
            let cross: f64 = fit
                .residual(a)
                .iter()
                .zip(fit.residual(b))
                .map(|(x, y)| x * y)
                .sum();
            -(cross + fit.alpha[(a, b)] * sq[b] + fit.alpha[(b, a)] * sq[a]) / n
        }
    }))
}

/// `omega_ab = v_ab / (v_aa v_bb)`.
pub fn estimate_omega(v: &SymMatrix) -> Result<SymMatrix> {
    let d = v.diagonal();
    if let Some(j) = d.iter().position(|x| !(*x > 0.0)) {
        return Err(Error::DegenerateResiduals(j));
    }
    Ok(SymMatrix::from_fn(v.dim(), |a, b| v.get(a, b) / (d[a] * d[b])))
}

/// A fitted pipeline: node-wise fit plus `v_hat` and `omega_hat`.
#[derive(Debug, Clone)]
pub struct PrecisionEstimate {
    pub fit: NodewiseFit,
    pub v_hat: SymMatrix,
    pub omega_hat: SymMatrix,
}

impl PrecisionEstimate {
    pub fn new(fit: NodewiseFit) -> Result<Self> {
        let v_hat = estimate_v(&fit)?;
        let omega_hat = estimate_omega(&v_hat)?;
        Ok(Self {
            fit,
            v_hat,
            omega_hat,
        })
    }

    /// Centers `data` if needed and runs the whole estimation.
    pub fn from_data(data: &Dataset, cfg: &LassoConfig) -> Result<Self> {
        let centered = data.center()?;
        Self::new(fit_all(&centered, cfg)?)
    }

    pub fn n(&self) -> usize {
        self.fit.n()
    }

    pub fn p(&self) -> usize {
        self.fit.p()
    }

    /// `omega_hat` restricted to `set`, in set order.
    pub fn omega_on(&self, set: &IndexSet) -> Vec<f64> {
        set.pairs()
            .iter()
            .map(|&(a, b)| self.omega_hat.get(a, b))
            .collect()
    }

    /// Diagonal of `H_hat`: `1 / (v_aa v_bb)` per pair.
    pub fn h_diag(&self, set: &IndexSet) -> Vec<f64> {
        h_diag(&self.v_hat, set)
    }

    pub fn scores<'a>(&'a self, set: &'a IndexSet) -> EtaScores<'a> {
        EtaScores::new(&self.fit, &self.v_hat, set)
    }
}

pub fn h_diag(v: &SymMatrix, set: &IndexSet) -> Vec<f64> {
    set.pairs()
        .iter()
        .map(|&(a, b)| 1.0 / (v.get(a, a) * v.get(b, b)))
        .collect()
}

/// Column access to an `n x r` score matrix.
pub trait ScoreColumns: Sync {
    fn n(&self) -> usize;
    fn r(&self) -> usize;

    /// Writes columns `start..start + out.ncols()` into `out` (`n` rows).
    fn fill_block(&self, start: usize, out: &mut DMatrix<f64>);

    /// The whole matrix, when it is already materialized.
    fn dense(&self) -> Option<&DMatrix<f64>> {
        None
    }

    fn column(&self, l: usize) -> Vec<f64> {
        let mut out = DMatrix::zeros(self.n(), 1);
        self.fill_block(l, &mut out);
        out.as_slice().to_vec()
    }
}

impl ScoreColumns for DMatrix<f64> {
    fn n(&self) -> usize {
        self.nrows()
    }

    fn r(&self) -> usize {
        self.ncols()
    }

    fn fill_block(&self, start: usize, out: &mut DMatrix<f64>) {
        let n = self.nrows();
        let len = out.ncols();
        out.as_mut_slice()
            .copy_from_slice(&self.as_slice()[start * n..(start + len) * n]);
    }

    fn dense(&self) -> Option<&DMatrix<f64>> {
        Some(self)
    }

    fn column(&self, l: usize) -> Vec<f64> {
        self.column(l).iter().copied().collect()
    }
}

/// Scores `eta_{l,t} = e_{a,t} e_{b,t} - v_ab` for `(a, b) = S[l]`, computed
/// on demand from the residuals.
#[derive(Debug, Clone, Copy)]
pub struct EtaScores<'a> {
    fit: &'a NodewiseFit,
    v: &'a SymMatrix,
    set: &'a IndexSet,
}

impl<'a> EtaScores<'a> {
    pub fn new(fit: &'a NodewiseFit, v: &'a SymMatrix, set: &'a IndexSet) -> Self {
        Self { fit, v, set }
    }

    fn write_column(&self, l: usize, dst: &mut [f64]) {
        let (a, b) = self.set.get(l);
        let v = self.v.get(a, b);
        for ((d, x), y) in dst.iter_mut().zip(self.fit.residual(a)).zip(self.fit.residual(b)) {
            *d = x * y - v;
        }
    }

    /// Dense `n x r` matrix; fails when `n * r` exceeds `budget`.
    pub fn materialize(&self, budget: usize) -> Result<DMatrix<f64>> {
        let n = self.fit.n();
        let r = self.set.r();
        if n.saturating_mul(r) > budget {
            return Err(Error::UseDiagonalPath { r, budget });
        }
        let mut out = DMatrix::zeros(n, r);
        self.fill_block(0, &mut out);
        Ok(out)
    }
}

impl ScoreColumns for EtaScores<'_> {
    fn n(&self) -> usize {
        self.fit.n()
    }

    fn r(&self) -> usize {
        self.set.r()
    }

    fn fill_block(&self, start: usize, out: &mut DMatrix<f64>) {
        let n = self.fit.n();
        for (i, dst) in out.as_mut_slice().chunks_exact_mut(n).enumerate() {
            self.write_column(start + i, dst);
        }
    }
}

/// Dense `n x r` score matrix.
pub fn eta_scores(fit: &NodewiseFit, v: &SymMatrix, set: &IndexSet) -> Result<DMatrix<f64>> {
    EtaScores::new(fit, v, set).materialize(DEFAULT_SCORE_BUDGET)
}
