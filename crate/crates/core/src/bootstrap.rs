//! Kernel-based multiplier bootstrap (KMB) and its Studentized variant
//! (SKMB).
//!
//! Each draw takes `g ~ N(0, A)` with `A[i][j] = K(|i - j| / S_n)` and forms
//!
//! ```text
//! xi_l = n^{-1/2} h_l sum_t g_t eta_{l,t}          (KMB)
//! xi_l = n^{-1/2} h_l sum_t g_t eta_{l,t} / sqrt(w_l)   (SKMB)
//! ```
//!
//! so that `xi ~ N(0, H Xi H)` given the data, without forming any `r x r`
//! matrix. Only the maximum `|xi|_inf` of each draw is kept. Draw `m` uses
//! substream `m` of the configured [`RngSpec`], and draws are processed in
//! fixed batches, so results are identical for any thread count.

use nalgebra::{Cholesky, DMatrix, SymmetricEigen};
use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::longrun::{resolve_bandwidth, BandwidthConfig, KernelSpec};
use crate::precision::ScoreColumns;
use crate::rng::RngSpec;

const DRAW_BATCH: usize = 128;
const COLUMN_BLOCK: usize = 1024;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BootstrapConfig {
    pub draws: usize,
    pub studentized: bool,
    pub rng: RngSpec,
    pub kernel: KernelSpec,
    /// Fixed bandwidth; `None` selects it from the data.
    pub bandwidth: Option<f64>,
    pub bandwidth_cfg: BandwidthConfig,
}

impl Default for BootstrapConfig {
    fn default() -> Self {
        Self {
            draws: 3000,
            studentized: false,
            rng: RngSpec::new(0, "kmb"),
            kernel: KernelSpec::default(),
            bandwidth: None,
            bandwidth_cfg: BandwidthConfig::default(),
        }
    }
}

impl BootstrapConfig {
    pub fn validate(&self) -> Result<()> {
        if self.draws == 0 {
            return Err(Error::Config("bootstrap needs at least one draw".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BootstrapResult {
    /// `|xi_m|_inf`, sorted ascending.
    pub stats: Vec<f64>,
    pub bandwidth: f64,
    pub studentized: bool,
    pub w_diag: Option<Vec<f64>>,
    pub rng: RngSpec,
}

impl BootstrapResult {
    pub fn draws(&self) -> usize {
        self.stats.len()
    }

    /// Smallest `x` with empirical CDF `>= level`: the `ceil(M * level)`-th
    /// order statistic.
    pub fn quantile(&self, level: f64) -> Result<f64> {
        quantile(&self.stats, level)
    }

    /// Fraction of draws `>= statistic`.
    pub fn p_value(&self, statistic: f64) -> f64 {
        let below = self.stats.partition_point(|&s| s < statistic);
        (self.stats.len() - below) as f64 / self.stats.len() as f64
    }
}

/// Rank `k` (1-based) of the `level` quantile among `m` sorted values.
pub fn quantile_rank(m: usize, level: f64) -> usize {
    let raw = (m as f64 * level).ceil() as usize;
    // guard against m * level landing one ulp above an integer
    let k = if raw > 1 && ((raw - 1) as f64) >= m as f64 * level - 1e-9 * m as f64 {
        raw - 1
    } else {
        raw
    };
    k.clamp(1, m)
}

/// `ceil(M * level)`-th order statistic of ascending `sorted`.
pub fn quantile(sorted: &[f64], level: f64) -> Result<f64> {
    if !(level > 0.0 && level < 1.0) {
        return Err(Error::InvalidLevel(level));
    }
    if sorted.is_empty() {
        return Err(Error::InsufficientData("no bootstrap statistics".into()));
    }
    Ok(sorted[quantile_rank(sorted.len(), level) - 1])
}

/// How the square root of the multiplier covariance was obtained.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum FactorMethod {
    Cholesky,
    Eigen,
}

#[derive(Debug, Clone)]
pub struct MultiplierFactor {
    /// `n x n` with `factor * factor' = A` (up to clipping).
    pub factor: DMatrix<f64>,
    pub method: FactorMethod,
    /// Sum of absolute values of clipped negative eigenvalues.
    pub clipped_mass: f64,
}

/// `A[i][j] = K(|i - j| / S_n)` with the kernel's lag truncation.
pub fn multiplier_covariance(n: usize, bandwidth: f64, kernel: &KernelSpec) -> DMatrix<f64> {
    let w: Vec<f64> = (0..n)
        .map(|k| if k == 0 { 1.0 } else { kernel.weight(k, bandwidth) })
        .collect();
    DMatrix::from_fn(n, n, |i, j| w[i.abs_diff(j)])
}

/// Square root of the multiplier covariance: Cholesky when it succeeds,
/// otherwise a symmetric eigendecomposition with negative eigenvalues set to
/// zero.
pub fn gaussian_mult_factor(n: usize, bandwidth: f64, kernel: &KernelSpec) -> MultiplierFactor {
    let a = multiplier_covariance(n, bandwidth, kernel);
    if let Some(ch) = Cholesky::new(a.clone()) {
        return MultiplierFactor {
            factor: ch.l(),
            method: FactorMethod::Cholesky,
            clipped_mass: 0.0,
        };
    }
    let eig = SymmetricEigen::new(a);
    let mut clipped_mass = 0.0;
    let roots: Vec<f64> = eig
        .eigenvalues
        .iter()
        .map(|&l| {
            if l < 0.0 {
                clipped_mass -= l;
                0.0
            } else {
                l.sqrt()
            }
        })
        .collect();
    let mut factor = eig.eigenvectors;
    for (mut col, s) in factor.column_iter_mut().zip(roots) {
        col *= s;
    }
    if clipped_mass > 0.0 {
        log::debug!("multiplier covariance: clipped eigenvalue mass {clipped_mass:e}");
    }
    MultiplierFactor {
        factor,
        method: FactorMethod::Eigen,
        clipped_mass,
    }
}

/// Multipliers `g = L z` for draws `first..first + count`, one column each.
fn multipliers(factor: &DMatrix<f64>, rng: &RngSpec, first: usize, count: usize) -> DMatrix<f64> {
    let n = factor.nrows();
    let mut z = DMatrix::zeros(n, count);
    for (i, col) in z.as_mut_slice().chunks_exact_mut(n).enumerate() {
        let mut g = rng.substream((first + i) as u64);
        for v in col.iter_mut() {
            *v = g.sample(StandardNormal);
        }
    }
    factor * z
}

/// Projects a batch of multipliers on every score column and reports, for
/// each draw and each scaling, the largest absolute coordinate.
fn batch_maxima<S: ScoreColumns + ?Sized>(
    scores: &S,
    g: &DMatrix<f64>,
    scalings: &[Vec<f64>],
) -> Vec<Vec<f64>> {
    let n = scores.n();
    let r = scores.r();
    let b = g.ncols();
    let mut maxima = vec![vec![0.0f64; b]; scalings.len()];
    let mut update = |proj: &DMatrix<f64>, start: usize| {
        for (i, _) in (0..b).enumerate() {
            let col = proj.column(i);
            for (s, scale) in scalings.iter().enumerate() {
                let mut m = maxima[s][i];
                for (c, &v) in col.iter().enumerate() {
                    let a = (v * scale[start + c]).abs();
                    if a > m {
                        m = a;
                    }
                }
                maxima[s][i] = m;
            }
        }
    };
    if let Some(dense) = scores.dense() {
        update(&dense.tr_mul(g), 0);
    } else {
        let mut block = DMatrix::zeros(n, 0);
        let mut start = 0;
        while start < r {
            let len = COLUMN_BLOCK.min(r - start);
            if block.ncols() != len {
                block = DMatrix::zeros(n, len);
            }
            scores.fill_block(start, &mut block);
            update(&block.tr_mul(g), start);
            start += len;
        }
    }
    maxima
}

fn check_shapes<S: ScoreColumns + ?Sized>(scores: &S, h_diag: &[f64], factor: &MultiplierFactor) -> Result<()> {
    if h_diag.len() != scores.r() {
        return Err(Error::ShapeError(format!(
            "h has {} entries for r = {}",
            h_diag.len(),
            scores.r()
        )));
    }
    if factor.factor.nrows() != scores.n() {
        return Err(Error::ShapeError(format!(
            "multiplier factor is {}x{} for n = {}",
            factor.factor.nrows(),
            factor.factor.ncols(),
            scores.n()
        )));
    }
    Ok(())
}

/// Coordinate scalings `h / sqrt(n)` and optionally `h / sqrt(n w)`.
fn scalings(n: usize, h_diag: &[f64], w_diag: Option<&[f64]>) -> Result<Vec<Vec<f64>>> {
    let root_n = (n as f64).sqrt();
    let mut out = vec![h_diag.iter().map(|h| h / root_n).collect::<Vec<_>>()];
    if let Some(w) = w_diag {
        if w.len() != h_diag.len() {
            return Err(Error::ShapeError(format!(
                "w has {} entries for r = {}",
                w.len(),
                h_diag.len()
            )));
        }
        if w.iter().any(|v| !(*v > 0.0)) {
            return Err(Error::MissingScale);
        }
        out.push(
            h_diag
                .iter()
                .zip(w)
                .map(|(h, w)| h / (root_n * w.sqrt()))
                .collect(),
        );
    }
    Ok(out)
}

/// Sorted maxima for each scaling, over `draws` draws.
fn run_draws<S: ScoreColumns + ?Sized>(
    scores: &S,
    factor: &MultiplierFactor,
    scalings: &[Vec<f64>],
    draws: usize,
    rng: &RngSpec,
) -> Vec<Vec<f64>> {
    let batches: Vec<Vec<Vec<f64>>> = (0..draws.div_ceil(DRAW_BATCH))
        .into_par_iter()
        .map(|bi| {
            let first = bi * DRAW_BATCH;
            let count = DRAW_BATCH.min(draws - first);
            let g = multipliers(&factor.factor, rng, first, count);
            batch_maxima(scores, &g, scalings)
        })
        .collect();
    let mut out = vec![Vec::with_capacity(draws); scalings.len()];
    for batch in batches {
        for (dst, src) in out.iter_mut().zip(batch) {
            dst.extend(src);
        }
    }
    for v in &mut out {
        v.sort_by(f64::total_cmp);
    }
    out
}

/// KMB (or SKMB when `cfg.studentized`) maxima for a fixed factor.
pub fn kmb_draws_with_factor<S: ScoreColumns + ?Sized>(
    scores: &S,
    h_diag: &[f64],
    w_diag: Option<&[f64]>,
    factor: &MultiplierFactor,
    bandwidth: f64,
    cfg: &BootstrapConfig,
) -> Result<BootstrapResult> {
    cfg.validate()?;
    check_shapes(scores, h_diag, factor)?;
    if cfg.studentized && w_diag.is_none() {
        return Err(Error::MissingScale);
    }
    let all = scalings(scores.n(), h_diag, if cfg.studentized { w_diag } else { None })?;
    let chosen = if cfg.studentized { &all[1..] } else { &all[..1] };
    let stats = run_draws(scores, factor, chosen, cfg.draws, &cfg.rng)
        .pop()
        .expect("one scaling");
    Ok(BootstrapResult {
        stats,
        bandwidth,
        studentized: cfg.studentized,
        w_diag: if cfg.studentized { w_diag.map(<[f64]>::to_vec) } else { None },
        rng: cfg.rng.clone(),
    })
}

/// KMB/SKMB maxima. The bandwidth comes from `cfg.bandwidth` or the
/// data-driven rule; `w_diag` is required when `cfg.studentized`.
pub fn kmb_draws<S: ScoreColumns + ?Sized>(
    scores: &S,
    h_diag: &[f64],
    cfg: &BootstrapConfig,
    w_diag: Option<&[f64]>,
) -> Result<BootstrapResult> {
    cfg.validate()?;
    if cfg.studentized && w_diag.is_none() {
        return Err(Error::MissingScale);
    }
    let (bandwidth, _) = resolve_bandwidth(scores, &cfg.kernel, cfg.bandwidth, &cfg.bandwidth_cfg)?;
    let factor = gaussian_mult_factor(scores.n(), bandwidth, &cfg.kernel);
    kmb_draws_with_factor(scores, h_diag, w_diag, &factor, bandwidth, cfg)
}

/// KMB and SKMB from the same multiplier draws. `cfg.studentized` is
/// ignored.
pub fn kmb_draws_dual<S: ScoreColumns + ?Sized>(
    scores: &S,
    h_diag: &[f64],
    w_diag: &[f64],
    factor: &MultiplierFactor,
    bandwidth: f64,
    cfg: &BootstrapConfig,
) -> Result<(BootstrapResult, BootstrapResult)> {
    cfg.validate()?;
    check_shapes(scores, h_diag, factor)?;
    let all = scalings(scores.n(), h_diag, Some(w_diag))?;
    let mut out = run_draws(scores, factor, &all, cfg.draws, &cfg.rng);
    let stud = out.pop().expect("two scalings");
    let plain = out.pop().expect("two scalings");
    Ok((
        BootstrapResult {
            stats: plain,
            bandwidth,
            studentized: false,
            w_diag: None,
            rng: cfg.rng.clone(),
        },
        BootstrapResult {
            stats: stud,
            bandwidth,
            studentized: true,
            w_diag: Some(w_diag.to_vec()),
            rng: cfg.rng.clone(),
        },
    ))
}

/// Full bootstrap vectors `xi_m` (non-Studentized), one column per draw.
/// Uses the same multipliers as [`kmb_draws`] for the same `rng`.
pub fn kmb_vectors<S: ScoreColumns + ?Sized>(
    scores: &S,
    h_diag: &[f64],
    factor: &MultiplierFactor,
    draws: usize,
    rng: &RngSpec,
) -> Result<DMatrix<f64>> {
    check_shapes(scores, h_diag, factor)?;
    let n = scores.n();
    let mut e = DMatrix::zeros(n, scores.r());
    scores.fill_block(0, &mut e);
    let g = multipliers(&factor.factor, rng, 0, draws);
    let mut xi = e.tr_mul(&g);
    let root_n = (n as f64).sqrt();
    for mut col in xi.column_iter_mut() {
        for (v, h) in col.iter_mut().zip(h_diag) {
            *v *= h / root_n;
        }
    }
    Ok(xi)
}

/// One interval per coordinate of `S`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Interval {
    pub lower: f64,
    pub upper: f64,
}

impl Interval {
    pub fn contains(&self, x: f64) -> bool {
        self.lower <= x && x <= self.upper
    }
}

/// Box region `{a : sqrt(n) |D^{-1}(omega_S - a)|_inf <= q}` with `D = I`
/// or `D = diag(W)^{1/2}`.
#[derive(Debug, Clone, PartialEq)]
pub struct ConfidenceRegion {
    pub intervals: Vec<Interval>,
}

impl ConfidenceRegion {
    pub fn contains(&self, a: &[f64]) -> bool {
        a.len() == self.intervals.len()
            && self.intervals.iter().zip(a).all(|(iv, &x)| iv.contains(x))
    }
}

pub fn confidence_region(
    omega_s: &[f64],
    q: f64,
    n: usize,
    w_diag: Option<&[f64]>,
) -> Result<ConfidenceRegion> {
    if let Some(w) = w_diag {
        if w.len() != omega_s.len() {
            return Err(Error::ShapeError(format!(
                "w has {} entries for r = {}",
                w.len(),
                omega_s.len()
            )));
        }
    }
    let root_n = (n as f64).sqrt();
    let intervals = omega_s
        .iter()
        .enumerate()
        .map(|(l, &o)| {
            let half = match w_diag {
                Some(w) => q * w[l].sqrt() / root_n,
                None => q / root_n,
            };
            Interval {
                lower: o - half,
                upper: o + half,
            }
        })
        .collect();
    Ok(ConfidenceRegion { intervals })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::longrun::{kernel_eval, KernelKind};

    #[test]
    fn quantile_order_statistics() {
        let s = [1.0, 2.0, 3.0, 4.0];
        assert_eq!(quantile(&s, 0.5).unwrap(), 2.0);
        assert_eq!(quantile(&s, 0.95).unwrap(), 4.0);
        assert_eq!(quantile(&s, 1.0), Err(Error::InvalidLevel(1.0)));
        assert_eq!(quantile(&s, 0.0), Err(Error::InvalidLevel(0.0)));
        assert_eq!(quantile_rank(1000, 0.95), 950);
        assert_eq!(quantile_rank(1000, 0.975), 975);
        assert_eq!(quantile_rank(3000, 0.925), 2775);
        assert_eq!(quantile_rank(4, 0.51), 3);
    }

    #[test]
    fn quantile_matches_inf_definition() {
        for m in [1usize, 2, 3, 7, 10, 100, 1000, 3000] {
            for i in 1..200 {
                let level = i as f64 / 200.0;
                let k = quantile_rank(m, level);
                let smallest = (1..=m).find(|&j| j as f64 / m as f64 >= level).unwrap();
                assert_eq!(k, smallest, "m = {m}, level = {level}");
            }
        }
    }

    #[test]
    fn bartlett_unit_bandwidth_factor_is_identity() {
        let f = gaussian_mult_factor(5, 1.0, &KernelSpec::new(KernelKind::Bartlett));
        assert_eq!(f.factor, DMatrix::identity(5, 5));
        let one = gaussian_mult_factor(1, 3.0, &KernelSpec::default());
        assert_eq!(one.factor, DMatrix::from_element(1, 1, 1.0));
    }

    #[test]
    fn two_by_two_factor() {
        let f = gaussian_mult_factor(2, 2.0, &KernelSpec::default());
        let a = &f.factor * f.factor.transpose();
        let k = kernel_eval(KernelKind::QuadraticSpectral, 0.5);
        let expect = DMatrix::from_row_slice(2, 2, &[1.0, k, k, 1.0]);
        assert!((a - expect).abs().max() < 1e-12);
    }

    #[test]
    fn eigen_path_reproduces_covariance() {
        // wide QS bandwidth: nearly singular A
        let kernel = KernelSpec::default();
        let n = 60;
        let f = gaussian_mult_factor(n, 9.0, &kernel);
        let a = multiplier_covariance(n, 9.0, &kernel);
        let err = (&f.factor * f.factor.transpose() - a).abs().max();
        assert!(err <= 1e-8 + f.clipped_mass, "err {err}, method {:?}", f.method);
    }

    #[test]
    fn zero_scores_give_zero_stats() {
        let eta = DMatrix::zeros(10, 3);
        let cfg = BootstrapConfig {
            draws: 50,
            bandwidth: Some(2.0),
            ..Default::default()
        };
        let res = kmb_draws(&eta, &[1.0; 3], &cfg, None).unwrap();
        assert!(res.stats.iter().all(|&s| s == 0.0));
    }

    #[test]
    fn studentized_requires_scale() {
        let eta = DMatrix::from_element(10, 1, 1.0);
        let cfg = BootstrapConfig {
            draws: 5,
            studentized: true,
            bandwidth: Some(1.0),
            ..Default::default()
        };
        assert_eq!(kmb_draws(&eta, &[1.0], &cfg, None), Err(Error::MissingScale));
        assert_eq!(
            kmb_draws(&eta, &[1.0], &cfg, Some(&[0.0])),
            Err(Error::MissingScale)
        );
    }

    #[test]
    fn p_value_counts_ties() {
        let r = BootstrapResult {
            stats: vec![1.0, 2.0, 3.0, 4.0],
            bandwidth: 1.0,
            studentized: false,
            w_diag: None,
            rng: RngSpec::new(0, "x"),
        };
        assert_eq!(r.p_value(2.5), 0.5);
        assert_eq!(r.p_value(2.0), 0.75);
        assert_eq!(r.p_value(0.0), 1.0);
        assert_eq!(r.p_value(5.0), 0.0);
    }

    #[test]
    fn region_widths() {
        let c = confidence_region(&[0.5], 2.0, 100, None).unwrap();
        assert!((c.intervals[0].lower - 0.3).abs() < 1e-15);
        assert!((c.intervals[0].upper - 0.7).abs() < 1e-15);
        let point = confidence_region(&[0.5], 0.0, 100, None).unwrap();
        assert_eq!(point.intervals[0].lower, point.intervals[0].upper);
        let w1 = confidence_region(&[0.0], 1.0, 4, Some(&[1.0])).unwrap();
        let w4 = confidence_region(&[0.0], 1.0, 4, Some(&[4.0])).unwrap();
        assert_eq!(w4.intervals[0].upper, 2.0 * w1.intervals[0].upper);
    }

    fn half_normal_sd() -> f64 {
        (1.0 - 2.0 / std::f64::consts::PI).sqrt()
    }

    #[test]
    fn unit_scores_follow_half_normal() {
        let eta = DMatrix::from_element(100, 1, 1.0);
        let cfg = BootstrapConfig {
            draws: 20000,
            bandwidth: Some(1.0),
            kernel: KernelSpec::new(KernelKind::Bartlett),
            ..Default::default()
        };
        let res = kmb_draws(&eta, &[1.0], &cfg, None).unwrap();
        let m = res.stats.len() as f64;
        let mean = res.stats.iter().sum::<f64>() / m;
        let sd = (res.stats.iter().map(|s| (s - mean).powi(2)).sum::<f64>() / (m - 1.0)).sqrt();
        assert!((sd / half_normal_sd() - 1.0).abs() < 0.02, "sd {sd}");
    }

    #[test]
    fn studentized_stats_are_standard_half_normal() {
        let eta = DMatrix::from_fn(80, 1, |t, _| 7.0 * (((t * 13) % 9) as f64 - 4.0));
        let h = [0.3];
        let lr = crate::longrun::w_diag(&eta, &h, 3.0, &KernelSpec::default()).unwrap();
        let cfg = BootstrapConfig {
            draws: 20000,
            studentized: true,
            bandwidth: Some(3.0),
            ..Default::default()
        };
        let res = kmb_draws(&eta, &h, &cfg, Some(&lr.values)).unwrap();
        let mean = res.stats.iter().sum::<f64>() / res.stats.len() as f64;
        let target = (2.0 / std::f64::consts::PI).sqrt();
        assert!((mean / target - 1.0).abs() < 0.02, "mean {mean}");
    }

    #[test]
    fn draw_covariance_matches_long_run_covariance() {
        let n = 4;
        let r = 3;
        let eta = DMatrix::from_row_slice(
            n,
            r,
            &[0.3, -1.2, 0.8, 1.1, 0.4, -0.5, -0.7, 0.9, 0.2, 0.6, -0.3, -1.4],
        );
        let h = [1.5, 0.8, 1.2];
        let bw = 2.0;
        let kernel = KernelSpec::default();
        let factor = gaussian_mult_factor(n, bw, &kernel);
        let draws = 200_000;
        let xi = kmb_vectors(&eta, &h, &factor, draws, &RngSpec::new(11, "cov")).unwrap();

        let a = multiplier_covariance(n, bw, &kernel);
        let xi_a = eta.transpose() * &a * &eta / n as f64;
        let target = DMatrix::from_fn(r, r, |i, j| h[i] * xi_a[(i, j)] * h[j]);
        let emp = &xi * xi.transpose() / draws as f64;
        for i in 0..r {
            for j in 0..r {
                let se = ((target[(i, i)] * target[(j, j)] + target[(i, j)].powi(2)) / draws as f64)
                    .sqrt();
                assert!(
                    (emp[(i, j)] - target[(i, j)]).abs() < 4.0 * se,
                    "({i},{j}): {} vs {}",
                    emp[(i, j)],
                    target[(i, j)]
                );
            }
        }
        let lr = crate::longrun::xi_hat(&eta, bw, &kernel, usize::MAX).unwrap();
        for i in 0..r {
            for j in 0..r {
                assert!((lr.get(i, j) - xi_a[(i, j)]).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn deterministic_across_thread_counts() {
        let eta = DMatrix::from_fn(30, 40, |t, l| (((t * 31 + l * 17) % 23) as f64 - 11.0) / 7.0);
        let h = vec![1.0; 40];
        let cfg = BootstrapConfig {
            draws: 700,
            ..Default::default()
        };
        let run = |threads| {
            rayon::ThreadPoolBuilder::new()
                .num_threads(threads)
                .build()
                .unwrap()
                .install(|| kmb_draws(&eta, &h, &cfg, None).unwrap())
        };
        assert_eq!(run(1), run(4));
    }

    #[test]
    fn dual_matches_separate_runs() {
        let eta = DMatrix::from_fn(25, 6, |t, l| (((t * 7 + l * 5) % 11) as f64 - 5.0) / 3.0);
        let h = [1.0, 2.0, 0.5, 1.0, 1.5, 0.7];
        let kernel = KernelSpec::default();
        let w = crate::longrun::w_diag(&eta, &h, 2.0, &kernel).unwrap().values;
        let factor = gaussian_mult_factor(25, 2.0, &kernel);
        let cfg = BootstrapConfig {
            draws: 300,
            bandwidth: Some(2.0),
            ..Default::default()
        };
        let (plain, stud) = kmb_draws_dual(&eta, &h, &w, &factor, 2.0, &cfg).unwrap();
        assert_eq!(plain, kmb_draws(&eta, &h, &cfg, None).unwrap());
        let scfg = BootstrapConfig {
            studentized: true,
            ..cfg.clone()
        };
        assert_eq!(stud, kmb_draws(&eta, &h, &scfg, Some(&w)).unwrap());
    }

    #[test]
    fn lazy_scores_match_dense() {
        use crate::precision::ScoreColumns;
        struct Lazy(DMatrix<f64>);
        impl ScoreColumns for Lazy {
            fn n(&self) -> usize {
                self.0.nrows()
            }
            fn r(&self) -> usize {
                self.0.ncols()
            }
            fn fill_block(&self, start: usize, out: &mut DMatrix<f64>) {
                self.0.fill_block(start, out)
            }
        }
        let eta = DMatrix::from_fn(20, 2500, |t, l| (((t * 3 + l * 7) % 13) as f64 - 6.0) / 4.0);
        let h = vec![0.9; 2500];
        let cfg = BootstrapConfig {
            draws: 150,
            bandwidth: Some(1.5),
            ..Default::default()
        };
        let dense = kmb_draws(&eta, &h, &cfg, None).unwrap();
        let lazy = kmb_draws(&Lazy(eta), &h, &cfg, None).unwrap();
        for (a, b) in dense.stats.iter().zip(&lazy.stats) {
            assert!((a - b).abs() <= 1e-12 * a.abs().max(1.0));
        }
    }

    use proptest::prelude::*;

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(24))]

        #[test]
        fn quantile_is_monotone(mut xs in prop::collection::vec(0.0f64..10.0, 1..60), a in 0.001f64..0.999, b in 0.001f64..0.999) {
            xs.sort_by(f64::total_cmp);
            let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
            prop_assert!(quantile(&xs, lo).unwrap() <= quantile(&xs, hi).unwrap());
        }

        #[test]
        fn studentized_invariant_to_column_scale(scales in prop::collection::vec(0.1f64..10.0, 3)) {
            let eta = DMatrix::from_fn(16, 3, |t, l| (((t * 5 + l * 3) % 7) as f64 - 3.0) / 2.0);
            let h = [1.0, 0.5, 2.0];
            let kernel = KernelSpec::default();
            let cfg = BootstrapConfig { draws: 64, studentized: true, bandwidth: Some(2.0), ..Default::default() };
            let w = crate::longrun::w_diag(&eta, &h, 2.0, &kernel).unwrap().values;
            let base = kmb_draws(&eta, &h, &cfg, Some(&w)).unwrap();

            let scaled = DMatrix::from_fn(16, 3, |t, l| eta[(t, l)] * scales[l]);
            let hs: Vec<f64> = h.iter().zip(&scales).map(|(h, c)| h * c).collect();
            let ws = crate::longrun::w_diag(&scaled, &hs, 2.0, &kernel).unwrap().values;
            let other = kmb_draws(&scaled, &hs, &cfg, Some(&ws)).unwrap();
            for (a, b) in base.stats.iter().zip(&other.stats) {
                prop_assert!((a - b).abs() <= 1e-10 * a.max(1.0));
            }
        }
    }
}
