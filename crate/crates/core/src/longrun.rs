//! Kernel long-run covariance of the score series.
//!
//! ```text
//! Gamma_k = (1/n) sum_{t > k} eta_t eta_{t-k}'          (Gamma_{-k} = Gamma_k')
//! Xi      = sum_{|k| < n} K(k / S_n) Gamma_k
//! W       = H Xi H,   H = diag(1 / (v_aa v_bb))
//! ```
//!
//! Lags whose kernel weight is below `truncation_eps` in absolute value are
//! skipped everywhere (Xi, diag W, and the multiplier covariance in the
//! bootstrap), so all three stay algebraically consistent.

use std::f64::consts::PI;

use nalgebra::DMatrix;
use rand::seq::index::sample;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::precision::ScoreColumns;
use crate::rng::RngSpec;
use crate::sym_matrix::SymMatrix;

/// Relative floor for non-positive long-run variances.
pub const VARIANCE_FLOOR_EPS: f64 = 1e-8;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum KernelKind {
    #[serde(rename = "qs")]
    QuadraticSpectral,
    Bartlett,
}

impl std::fmt::Display for KernelKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            KernelKind::QuadraticSpectral => write!(f, "qs"),
            KernelKind::Bartlett => write!(f, "bartlett"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KernelSpec {
    pub kind: KernelKind,
    pub truncation_eps: f64,
}

impl Default for KernelSpec {
    fn default() -> Self {
        Self {
            kind: KernelKind::QuadraticSpectral,
            truncation_eps: 1e-4,
        }
    }
}

impl KernelSpec {
    pub fn new(kind: KernelKind) -> Self {
        Self {
            kind,
            ..Self::default()
        }
    }

    pub fn eval(&self, u: f64) -> f64 {
        kernel_eval(self.kind, u)
    }

    /// Weight of lag `k` under bandwidth `s`, zero when truncated.
    pub fn weight(&self, k: usize, bandwidth: f64) -> f64 {
        let w = self.eval(k as f64 / bandwidth);
        if w.abs() < self.truncation_eps {
            0.0
        } else {
            w
        }
    }

    /// `(k, K(k / s))` for the positive lags `1..n` that survive truncation.
    pub fn lag_weights(&self, n: usize, bandwidth: f64) -> Vec<(usize, f64)> {
        (1..n)
            .map(|k| (k, self.weight(k, bandwidth)))
            .filter(|&(_, w)| w != 0.0)
            .collect()
    }
}

/// Quadratic Spectral or Bartlett kernel at `u`.
pub fn kernel_eval(kind: KernelKind, u: f64) -> f64 {
    match kind {
        KernelKind::Bartlett => (1.0 - u.abs()).max(0.0),
        KernelKind::QuadraticSpectral => {
            let x = 6.0 * PI * u / 5.0;
            if x.abs() < 1e-3 {
                let x2 = x * x;
                1.0 - x2 / 10.0 + x2 * x2 / 280.0
            } else {
                3.0 / (x * x) * (x.sin() / x - x.cos())
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BandwidthConfig {
    /// Columns used for the AR(1) plug-in; larger sets are subsampled.
    pub max_columns: usize,
    pub rho_clip: f64,
    /// Seed for the column subsample.
    pub seed: u64,
}

impl Default for BandwidthConfig {
    fn default() -> Self {
        Self {
            max_columns: 5000,
            rho_clip: 0.97,
            seed: 0,
        }
    }
}

/// Lag-1 autoregression of a demeaned series: `(rho, innovation variance)`.
/// `None` for a constant series.
pub fn ar1_fit(series: &[f64]) -> Option<(f64, f64)> {
    let n = series.len();
    if n < 3 {
        return None;
    }
    let mean = series.iter().sum::<f64>() / n as f64;
    let a: Vec<f64> = series.iter().map(|x| x - mean).collect();
    let mut num = 0.0;
    let mut den = 0.0;
    for t in 1..n {
        num += a[t] * a[t - 1];
        den += a[t - 1] * a[t - 1];
    }
    if !(den > 0.0) {
        return None;
    }
    let rho = num / den;
    let sse: f64 = (1..n).map(|t| (a[t] - rho * a[t - 1]).powi(2)).sum();
    let sigma2 = sse / (n - 1) as f64;
    if !(sigma2 > 0.0) {
        return None;
    }
    Some((rho, sigma2))
}

/// Andrews' AR(1) plug-in bandwidth from per-series `(rho, sigma^2)` with unit
/// weights, clipped to `[1, 3 n^{1/5}]`. `rho` values must already be clipped.
pub fn plug_in_bandwidth(ar: &[(f64, f64)], n: usize, kind: KernelKind) -> f64 {
    let nf = n as f64;
    let mut num = 0.0;
    let mut den = 0.0;
    for &(rho, s2) in ar {
        let s4 = s2 * s2;
        let one_minus = 1.0 - rho;
        den += s4 / one_minus.powi(4);
        num += match kind {
            KernelKind::QuadraticSpectral => 4.0 * rho * rho * s4 / one_minus.powi(8),
            KernelKind::Bartlett => {
                4.0 * rho * rho * s4 / (one_minus.powi(6) * (1.0 + rho).powi(2))
            }
        };
    }
    let alpha = num / den;
    let raw = match kind {
        KernelKind::QuadraticSpectral => 1.3221 * (alpha * nf).powf(0.2),
        KernelKind::Bartlett => 1.1447 * (alpha * nf).powf(1.0 / 3.0),
    };
    let upper = 3.0 * nf.powf(0.2);
    if raw.is_nan() {
        1.0
    } else {
        raw.clamp(1.0, upper)
    }
}

/// Data-driven bandwidth for the score columns.
pub fn andrews_bandwidth<S: ScoreColumns + ?Sized>(
    scores: &S,
    kind: KernelKind,
    cfg: &BandwidthConfig,
) -> Result<f64> {
    let n = scores.n();
    if n < 8 {
        return Err(Error::InsufficientData(format!(
            "bandwidth selection needs n >= 8, got {n}"
        )));
    }
    let r = scores.r();
    let columns: Vec<usize> = if r > cfg.max_columns {
        let mut rng = RngSpec::new(cfg.seed, "bandwidth-columns").substream(0);
        let mut idx = sample(&mut rng, r, cfg.max_columns).into_vec();
        idx.sort_unstable();
        idx
    } else {
        (0..r).collect()
    };
    let ar: Vec<(f64, f64)> = columns
        .par_iter()
        .filter_map(|&l| ar1_fit(&scores.column(l)))
        .map(|(rho, s2)| (rho.clamp(-cfg.rho_clip, cfg.rho_clip), s2))
        .collect();
    if ar.is_empty() {
        return Err(Error::BandwidthFallback);
    }
    Ok(plug_in_bandwidth(&ar, n, kind))
}

/// `(1/n) sum_{t >= k} a_t b_{t-k}`.
#[inline]
fn lagged_cross(a: &[f64], b: &[f64], k: usize) -> f64 {
    let n = a.len();
    let mut s = 0.0;
    for t in k..n {
        s += a[t] * b[t - k];
    }
    s / n as f64
}

/// Kernel-weighted sum of lagged cross moments of two series. The diagonal
/// path and the full matrix path both go through this function, so they
/// agree bit-for-bit.
#[inline]
fn xi_entry(a: &[f64], b: &[f64], weights: &[(usize, f64)]) -> f64 {
    let mut s = lagged_cross(a, b, 0);
    for &(k, w) in weights {
        s += w * (lagged_cross(a, b, k) + lagged_cross(b, a, k));
    }
    s
}

/// `xi_entry(a, a, weights)` at half the cost; `x + x == 2x` exactly, so the
/// two agree bit-for-bit.
#[inline]
fn xi_diag_entry(a: &[f64], weights: &[(usize, f64)]) -> f64 {
    let mut s = lagged_cross(a, a, 0);
    for &(k, w) in weights {
        s += w * (2.0 * lagged_cross(a, a, k));
    }
    s
}

/// `Gamma_k` for `|k| < n`.
pub fn gamma_hat(eta: &DMatrix<f64>, k: i64) -> Result<DMatrix<f64>> {
    let n = eta.nrows();
    let lag = k.unsigned_abs() as usize;
    if lag >= n {
        return Err(Error::InvalidLag { lag: k, n });
    }
    let r = eta.ncols();
    let col = |l: usize| &eta.as_slice()[l * n..(l + 1) * n];
    let g = DMatrix::from_fn(r, r, |a, b| lagged_cross(col(a), col(b), lag));
    Ok(if k < 0 { g.transpose() } else { g })
}

/// Full `Xi_hat`. Fails with [`Error::UseDiagonalPath`] when `r * r`
/// exceeds `budget`.
pub fn xi_hat(
    eta: &DMatrix<f64>,
    bandwidth: f64,
    kernel: &KernelSpec,
    budget: usize,
) -> Result<SymMatrix> {
    let n = eta.nrows();
    let r = eta.ncols();
    if r.saturating_mul(r) > budget {
        return Err(Error::UseDiagonalPath { r, budget });
    }
    let weights = kernel.lag_weights(n, bandwidth);
    let col = |l: usize| &eta.as_slice()[l * n..(l + 1) * n];
    Ok(SymMatrix::from_fn(r, |a, b| xi_entry(col(a), col(b), &weights)))
}

/// Diagonal of `W_hat` with flooring of non-positive entries.
#[derive(Debug, Clone, PartialEq)]
pub struct WDiag {
    pub values: Vec<f64>,
    /// Coordinates whose estimate was non-positive and got floored.
    pub floored: Vec<usize>,
}

pub fn w_diag<S: ScoreColumns + ?Sized>(
    scores: &S,
    h_diag: &[f64],
    bandwidth: f64,
    kernel: &KernelSpec,
) -> Result<WDiag> {
    let n = scores.n();
    let r = scores.r();
    if h_diag.len() != r {
        return Err(Error::ShapeError(format!(
            "h has {} entries for r = {r}",
            h_diag.len()
        )));
    }
    let weights = kernel.lag_weights(n, bandwidth);
    const BLOCK: usize = 256;
    let chunks: Vec<Vec<(f64, bool)>> = (0..r.div_ceil(BLOCK))
        .into_par_iter()
        .map(|c| {
            let start = c * BLOCK;
            let len = BLOCK.min(r - start);
            let mut block = DMatrix::zeros(n, len);
            scores.fill_block(start, &mut block);
            block
                .as_slice()
                .chunks_exact(n)
                .enumerate()
                .map(|(i, col)| {
                    let h = h_diag[start + i];
                    let w = h * xi_diag_entry(col, &weights) * h;
                    if w > 0.0 {
                        (w, false)
                    } else {
                        let scale = h * h * lagged_cross(col, col, 0);
                        let floor = if scale > 0.0 {
                            VARIANCE_FLOOR_EPS * scale
                        } else {
                            VARIANCE_FLOOR_EPS
                        };
                        (floor, true)
                    }
                })
                .collect()
        })
        .collect();
    let mut values = Vec::with_capacity(r);
    let mut floored = Vec::new();
    for (l, (w, f)) in chunks.into_iter().flatten().enumerate() {
        values.push(w);
        if f {
            floored.push(l);
        }
    }
    if !floored.is_empty() {
        log::warn!(
            "{} of {} long-run variances were non-positive and floored",
            floored.len(),
            r
        );
    }
    Ok(WDiag { values, floored })
}

/// Everything the bootstrap needs about the long-run covariance.
#[derive(Debug, Clone)]
pub struct LongRunEstimate {
    pub bandwidth: f64,
    pub bandwidth_fallback: bool,
    pub kernel: KernelSpec,
    pub h_diag: Vec<f64>,
    pub w_diag: Vec<f64>,
    pub floored: Vec<usize>,
    /// `Xi_hat`, present only when requested and small enough.
    pub xi_full: Option<SymMatrix>,
}

impl LongRunEstimate {
    /// `W_hat = H Xi H` when `Xi_hat` was materialized.
    pub fn w_full(&self) -> Option<SymMatrix> {
        self.xi_full.as_ref().map(|xi| {
            SymMatrix::from_fn(xi.dim(), |a, b| self.h_diag[a] * xi.get(a, b) * self.h_diag[b])
        })
    }
}

/// Resolves the bandwidth (given or data-driven, with fallback to 1).
pub fn resolve_bandwidth<S: ScoreColumns + ?Sized>(
    scores: &S,
    kernel: &KernelSpec,
    bandwidth: Option<f64>,
    cfg: &BandwidthConfig,
) -> Result<(f64, bool)> {
    match bandwidth {
        Some(b) if b > 0.0 && b.is_finite() => Ok((b, false)),
        Some(b) => Err(Error::Config(format!("bandwidth must be positive, got {b}"))),
        None => match andrews_bandwidth(scores, kernel.kind, cfg) {
            Ok(b) => Ok((b, false)),
            Err(Error::BandwidthFallback) => {
                log::warn!("all score columns constant; using bandwidth 1");
                Ok((1.0, true))
            }
            Err(e) => Err(e),
        },
    }
}

/// Bandwidth, `H_hat`, and `diag(W_hat)` for a score matrix; `xi_budget`
/// additionally materializes `Xi_hat` when `r * r` fits.
pub fn estimate_long_run<S: ScoreColumns + ?Sized>(
    scores: &S,
    h_diag: &[f64],
    kernel: &KernelSpec,
    bandwidth: Option<f64>,
    bw_cfg: &BandwidthConfig,
    xi_budget: Option<usize>,
) -> Result<LongRunEstimate> {
    let (bandwidth, bandwidth_fallback) = resolve_bandwidth(scores, kernel, bandwidth, bw_cfg)?;
    let w = w_diag(scores, h_diag, bandwidth, kernel)?;
    let xi_full = match xi_budget {
        Some(budget) if scores.r().saturating_mul(scores.r()) <= budget => {
            let mut dense = DMatrix::zeros(scores.n(), scores.r());
            scores.fill_block(0, &mut dense);
            Some(xi_hat(&dense, bandwidth, kernel, budget)?)
        }
        _ => None,
    };
    Ok(LongRunEstimate {
        bandwidth,
        bandwidth_fallback,
        kernel: *kernel,
        h_diag: h_diag.to_vec(),
        w_diag: w.values,
        floored: w.floored,
        xi_full,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    const QS: KernelKind = KernelKind::QuadraticSpectral;

    #[test]
    fn kernel_values() {
        assert_eq!(kernel_eval(QS, 0.0), 1.0);
        // 25/(12 pi^2) * (sin(6pi/5)/(6pi/5) - cos(6pi/5)) at 30 digits
        assert!((kernel_eval(QS, 1.0) - 0.137_860_581_674_593_55).abs() < 1e-14);
        assert_eq!(kernel_eval(KernelKind::Bartlett, 1.5), 0.0);
        assert_eq!(kernel_eval(KernelKind::Bartlett, -0.25), 0.75);
        // series branch is continuous with the closed form
        let u = 2.6e-4;
        let x = 6.0 * PI * u / 5.0;
        let closed = 3.0 / (x * x) * (x.sin() / x - x.cos());
        assert!((kernel_eval(QS, u) - closed).abs() < 1e-9);
    }

    #[test]
    fn kernel_bounded_and_even() {
        for i in -4000..=4000 {
            let u = i as f64 * 0.01;
            for kind in [QS, KernelKind::Bartlett] {
                let k = kernel_eval(kind, u);
                assert!(k.abs() <= 1.0 + 1e-15);
                assert_eq!(k, kernel_eval(kind, -u));
            }
        }
    }

    #[test]
    fn plug_in_formula() {
        let n = 300;
        let s = plug_in_bandwidth(&[(0.5, 1.0)], n, QS);
        // alpha(2) = 4 * 0.25 / 0.5^8 / (1 / 0.5^4) = 16
        let expected = 1.3221 * (16.0 * 300.0f64).powf(0.2);
        assert!((s - expected).abs() < 1e-12);
        assert!((s - 7.202_985_702).abs() < 1e-8);
        assert!(s < 3.0 * 300f64.powf(0.2));
        // no persistence: lower clip
        assert_eq!(plug_in_bandwidth(&[(0.0, 1.0)], n, QS), 1.0);
        // strong persistence: upper clip
        let hi = plug_in_bandwidth(&[(0.97, 1.0)], n, QS);
        assert!((hi - 3.0 * 300f64.powf(0.2)).abs() < 1e-12);
    }

    #[test]
    fn zero_autocorrelation_column_gives_unit_bandwidth() {
        let pattern = [1.0, 1.0, -1.0, -1.0];
        let col: Vec<f64> = (0..40).map(|t| pattern[t % 4]).collect();
        let eta = DMatrix::from_column_slice(40, 1, &col);
        // lag-1 products alternate in sign; 39 of them leave one over
        let (rho, _) = ar1_fit(&col).unwrap();
        assert_eq!(rho, 1.0 / 39.0);
        let s = andrews_bandwidth(&eta, QS, &BandwidthConfig::default()).unwrap();
        assert_eq!(s, 1.0);
    }

    #[test]
    fn constant_columns_fall_back() {
        let eta = DMatrix::from_element(20, 1, 3.0);
        assert_eq!(
            andrews_bandwidth(&eta, QS, &BandwidthConfig::default()),
            Err(Error::BandwidthFallback)
        );
        let (b, fb) =
            resolve_bandwidth(&eta, &KernelSpec::default(), None, &BandwidthConfig::default())
                .unwrap();
        assert_eq!((b, fb), (1.0, true));
    }

    #[test]
    fn gamma_examples() {
        let eta = DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, 1.0]);
        let g0 = gamma_hat(&eta, 0).unwrap();
        assert_eq!(g0, DMatrix::from_row_slice(2, 2, &[0.5, 0.0, 0.0, 0.5]));
        let zeros = DMatrix::zeros(5, 3);
        for k in -4..=4 {
            assert!(gamma_hat(&zeros, k).unwrap().iter().all(|&v| v == 0.0));
        }
        let ones = DMatrix::from_element(6, 1, 1.0);
        assert_eq!(gamma_hat(&ones, 5).unwrap()[(0, 0)], 1.0 / 6.0);
        assert!(matches!(gamma_hat(&ones, 6), Err(Error::InvalidLag { .. })));
        assert!(matches!(gamma_hat(&ones, -6), Err(Error::InvalidLag { .. })));
    }

    #[test]
    fn gamma_negative_lag_is_transpose() {
        let eta = DMatrix::from_fn(7, 3, |t, l| ((t * 5 + l * 11) % 7) as f64 - 3.0);
        let g = gamma_hat(&eta, 2).unwrap();
        let gm = gamma_hat(&eta, -2).unwrap();
        assert_eq!(gm, g.transpose());
    }

    #[test]
    fn bartlett_unit_bandwidth_is_gamma0() {
        let eta = DMatrix::from_fn(9, 3, |t, l| ((t * 3 + l * 7) % 5) as f64 - 2.0);
        let xi = xi_hat(&eta, 1.0, &KernelSpec::new(KernelKind::Bartlett), usize::MAX).unwrap();
        let g0 = gamma_hat(&eta, 0).unwrap();
        assert_eq!(xi.to_dense(), g0);
        let z = xi_hat(&DMatrix::zeros(5, 2), 2.0, &KernelSpec::default(), usize::MAX).unwrap();
        assert!(z.to_dense().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn xi_brute_force_over_all_lags() {
        let eta = DMatrix::from_column_slice(3, 1, &[1.0, 0.0, -1.0]);
        let spec = KernelSpec {
            kind: QS,
            truncation_eps: 0.0,
        };
        let xi = xi_hat(&eta, 2.0, &spec, usize::MAX).unwrap().get(0, 0);
        let e = [1.0, 0.0, -1.0];
        let mut brute = 0.0;
        for k in -2i64..=2 {
            let mut g = 0.0;
            for t in 0..3i64 {
                let s = t - k;
                if (0..3).contains(&s) {
                    g += e[t as usize] * e[s as usize];
                }
            }
            brute += kernel_eval(QS, k as f64 / 2.0) * g / 3.0;
        }
        assert!((xi - brute).abs() < 1e-15);
        // (2/3) + 2 K(1) (-1/3): the lag-1 term vanishes
        let closed = 2.0 / 3.0 - 2.0 * kernel_eval(QS, 1.0) / 3.0;
        assert!((xi - closed).abs() < 1e-15);
    }

    #[test]
    fn w_diag_matches_full_path() {
        let eta = DMatrix::from_fn(12, 4, |t, l| (((t * 7 + l * 13) % 11) as f64 - 5.0) / 3.0);
        let h = [0.5, 2.0, 1.5, 0.75];
        for kernel in [KernelSpec::default(), KernelSpec::new(KernelKind::Bartlett)] {
            let est = estimate_long_run(
                &eta,
                &h,
                &kernel,
                Some(2.5),
                &BandwidthConfig::default(),
                Some(usize::MAX),
            )
            .unwrap();
            let w = est.w_full().unwrap();
            for l in 0..4 {
                if est.floored.contains(&l) {
                    continue;
                }
                assert_eq!(est.w_diag[l], w.get(l, l));
            }
        }
    }

    #[test]
    fn zero_column_is_floored() {
        let eta = DMatrix::zeros(10, 2);
        let w = w_diag(&eta, &[1.0, 1.0], 2.0, &KernelSpec::default()).unwrap();
        assert_eq!(w.floored, vec![0, 1]);
        assert!(w.values.iter().all(|&v| v > 0.0));
    }

    #[test]
    fn iid_unit_variance_gives_unit_w() {
        use rand::Rng;
        let mut rng = RngSpec::new(11, "w-iid").substream(0);
        let n = 5000;
        let eta = DMatrix::from_fn(n, 3, |_, _| rng.sample::<f64, _>(rand_distr::StandardNormal));
        let w = w_diag(&eta, &[1.0; 3], 1.0, &KernelSpec::new(KernelKind::Bartlett)).unwrap();
        // sd of the sample second moment is sqrt(2 / n) = 0.02
        for v in w.values {
            assert!((v - 1.0).abs() <= 0.1, "w = {v}");
        }
    }
}
