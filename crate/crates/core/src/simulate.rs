//! Gaussian AR(1) data-generating processes and the coverage harness.
//!
//! `y_1 = e_1`, `y_t = rho y_{t-1} + sqrt(1 - rho^2) e_t` with
//! `e_t ~ N(0, Sigma)`, so every `y_t` is marginally `N(0, Sigma)`.
//! `Sigma = D^{1/2} Sigma* D^{1/2}` with `D = diag(Sigma*^{-1})`, which makes
//! the precision matrix unit-diagonal.

use std::io::Write;

use nalgebra::{Cholesky, DMatrix};
use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::bootstrap::{gaussian_mult_factor, kmb_draws_dual, BootstrapConfig};
use crate::dataset::Dataset;
use crate::error::{Error, Result};
use crate::index_set::IndexSet;
use crate::inference::sup_statistic;
use crate::longrun::{resolve_bandwidth, w_diag};
use crate::nodewise::LassoConfig;
use crate::precision::{PrecisionEstimate, ScoreColumns, DEFAULT_SCORE_BUDGET};
use crate::rng::RngSpec;
use crate::sym_matrix::SymMatrix;

const BLOCK: usize = 5;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Structure {
    /// `sigma*_ij = 0.5^|i - j|`.
    A,
    /// 5 x 5 diagonal blocks with 0.5 off the diagonal.
    B,
}

impl std::fmt::Display for Structure {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Structure::A => write!(f, "A"),
            Structure::B => write!(f, "B"),
        }
    }
}

impl Structure {
    fn check(self, p: usize) -> Result<()> {
        if p < 2 {
            return Err(Error::InvalidDimension(format!("p must be at least 2, got {p}")));
        }
        if self == Structure::B && p % BLOCK != 0 {
            return Err(Error::InvalidDimension(format!(
                "structure B needs p divisible by {BLOCK}, got {p}"
            )));
        }
        Ok(())
    }

    fn base(self, i: usize, j: usize) -> f64 {
        match self {
            Structure::A => 0.5f64.powi(i.abs_diff(j) as i32),
            Structure::B if i == j => 1.0,
            Structure::B if i / BLOCK == j / BLOCK => 0.5,
            Structure::B => 0.0,
        }
    }

    /// Whether `omega_ij` is structurally zero.
    pub fn is_zero(self, i: usize, j: usize) -> bool {
        match self {
            Structure::A => i.abs_diff(j) > 1,
            Structure::B => i / BLOCK != j / BLOCK,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DgpSpec {
    pub structure: Structure,
    pub p: usize,
    pub rho: f64,
    pub n: usize,
    pub rng: RngSpec,
}

impl DgpSpec {
    pub fn validate(&self) -> Result<()> {
        self.structure.check(self.p)?;
        if !(0.0..1.0).contains(&self.rho) {
            return Err(Error::Config(format!("rho must lie in [0, 1), got {}", self.rho)));
        }
        if self.n < 4 {
            return Err(Error::Config(format!("n must be at least 4, got {}", self.n)));
        }
        Ok(())
    }
}

/// `(Sigma, Omega)` for a structure; `Omega` is obtained by solving
/// `Sigma X = I`.
pub fn build_sigma(structure: Structure, p: usize) -> Result<(SymMatrix, SymMatrix)> {
    structure.check(p)?;
    let base = DMatrix::from_fn(p, p, |i, j| structure.base(i, j));
    let base_inv = invert_spd(&base)?;
    let scale: Vec<f64> = (0..p).map(|j| base_inv[(j, j)].sqrt()).collect();
    let sigma = SymMatrix::from_fn(p, |i, j| scale[i] * base[(i, j)] * scale[j]);
    let omega_dense = invert_spd(&sigma.to_dense())?;
    let omega = SymMatrix::from_fn(p, |i, j| 0.5 * (omega_dense[(i, j)] + omega_dense[(j, i)]));
    Ok((sigma, omega))
}

fn invert_spd(m: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let p = m.nrows();
    let ch = Cholesky::new(m.clone())
        .ok_or_else(|| Error::GenerationError("covariance is not positive definite".into()))?;
    Ok(ch.solve(&DMatrix::identity(p, p)))
}

/// Structural zeros of `Omega`, row-major.
pub fn zero_set(structure: Structure, p: usize) -> Result<IndexSet> {
    structure.check(p)?;
    IndexSet::from_predicate(p, |i, j| structure.is_zero(i, j))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum IndexChoice {
    Zeros,
    Offdiag,
}

impl std::fmt::Display for IndexChoice {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            IndexChoice::Zeros => write!(f, "zeros"),
            IndexChoice::Offdiag => write!(f, "offdiag"),
        }
    }
}

impl IndexChoice {
    pub fn index_set(self, structure: Structure, p: usize) -> Result<IndexSet> {
        match self {
            IndexChoice::Zeros => zero_set(structure, p),
            IndexChoice::Offdiag => IndexSet::all_offdiag(p),
        }
    }
}

/// `n` observations of the AR(1) recursion with innovation covariance
/// `sigma`, using substream 0 of `rng`.
pub fn generate_ar(sigma: &SymMatrix, n: usize, rho: f64, rng: &RngSpec) -> Result<Dataset> {
    let p = sigma.dim();
    let chol = Cholesky::new(sigma.to_dense())
        .ok_or_else(|| Error::GenerationError("covariance is not positive definite".into()))?;
    let lower = chol.l();
    let mut g = rng.substream(0);
    // row t of z is drawn before row t + 1
    let mut z = DMatrix::<f64>::zeros(n, p);
    for t in 0..n {
        for j in 0..p {
            z[(t, j)] = g.sample(StandardNormal);
        }
    }
    let mut y = z * lower.transpose();
    let keep = (1.0 - rho * rho).sqrt();
    if rho != 0.0 {
        for j in 0..p {
            for t in 1..n {
                y[(t, j)] = rho * y[(t - 1, j)] + keep * y[(t, j)];
            }
        }
    }
    if y.iter().any(|v| !v.is_finite()) {
        return Err(Error::GenerationError("non-finite sample".into()));
    }
    Dataset::new(y)
}

pub fn generate(dgp: &DgpSpec) -> Result<Dataset> {
    dgp.validate()?;
    let (sigma, _) = build_sigma(dgp.structure, dgp.p)?;
    generate_ar(&sigma, dgp.n, dgp.rho, &dgp.rng)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Method {
    Kmb,
    Skmb,
}

impl std::fmt::Display for Method {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Method::Kmb => write!(f, "KMB"),
            Method::Skmb => write!(f, "SKMB"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoverageConfig {
    pub replicates: usize,
    pub benchmark_reps: usize,
    pub levels: Vec<f64>,
    pub choices: Vec<IndexChoice>,
    pub lasso: LassoConfig,
    pub boot: BootstrapConfig,
    /// Replaces every bootstrap quantile; for tests.
    #[serde(skip)]
    pub force_quantile: Option<f64>,
}

impl Default for CoverageConfig {
    fn default() -> Self {
        Self {
            replicates: 100,
            benchmark_reps: 1000,
            levels: vec![0.925, 0.95, 0.975],
            choices: vec![IndexChoice::Zeros, IndexChoice::Offdiag],
            lasso: LassoConfig::default(),
            boot: BootstrapConfig {
                draws: 3000,
                ..BootstrapConfig::default()
            },
            force_quantile: None,
        }
    }
}

impl CoverageConfig {
    pub fn validate(&self) -> Result<()> {
        if self.replicates == 0 || self.benchmark_reps == 0 {
            return Err(Error::Config("replicate counts must be at least 1".into()));
        }
        if self.choices.is_empty() {
            return Err(Error::Config("no index sets requested".into()));
        }
        if let Some(&l) = self.levels.iter().find(|l| !(**l > 0.0 && **l < 1.0)) {
            return Err(Error::InvalidLevel(l));
        }
        if self.levels.is_empty() {
            return Err(Error::Config("no levels requested".into()));
        }
        self.lasso.validate()?;
        self.boot.validate()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CoverageCell {
    pub method: Method,
    pub level: f64,
    pub choice: IndexChoice,
    pub mean: f64,
    pub sd: f64,
    /// Monte Carlo standard error of `mean`.
    pub se: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CoverageReport {
    pub structure: Structure,
    pub p: usize,
    pub n: usize,
    pub rho: f64,
    pub cells: Vec<CoverageCell>,
    pub replicates: usize,
    pub failed: usize,
    pub benchmark_reps: usize,
    pub benchmark_failed: usize,
    pub draws: usize,
    pub lambda_scale: f64,
    /// Bandwidths chosen in the replicates, per index set, in replicate order.
    pub bandwidths: Vec<Vec<f64>>,
}

impl CoverageReport {
    pub fn cell(&self, method: Method, level: f64, choice: IndexChoice) -> Option<&CoverageCell> {
        self.cells
            .iter()
            .find(|c| c.method == method && c.level == level && c.choice == choice)
    }

    /// One row per level; a mean and sd column per method and index set.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        write_coverage_csv(std::slice::from_ref(self), out)
    }
}

/// Rows `structure x rho x level` for several reports sharing a layout.
pub fn write_coverage_csv<W: Write>(reports: &[CoverageReport], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let Some(first) = reports.first() else {
        w.flush()?;
        return Ok(());
    };
    let mut header = vec![
        "structure".to_string(),
        "rho".into(),
        "p".into(),
        "n".into(),
        "lambda_scale".into(),
        "level".into(),
    ];
    let mut columns = Vec::new();
    for c in &first.cells {
        if !columns.contains(&(c.method, c.choice)) {
            columns.push((c.method, c.choice));
        }
    }
    for (m, c) in &columns {
        let tag = format!("{}_{}", m.to_string().to_lowercase(), c);
        header.push(tag.clone());
        header.push(format!("{tag}_sd"));
    }
    w.write_record(&header)?;
    for rep in reports {
        let mut levels: Vec<f64> = Vec::new();
        for c in &rep.cells {
            if !levels.contains(&c.level) {
                levels.push(c.level);
            }
        }
        for level in levels {
            let mut row = vec![
                rep.structure.to_string(),
                rep.rho.to_string(),
                rep.p.to_string(),
                rep.n.to_string(),
                rep.lambda_scale.to_string(),
                level.to_string(),
            ];
            for &(m, c) in &columns {
                match rep.cell(m, level, c) {
                    Some(cell) => {
                        row.push(format!("{:.6}", cell.mean));
                        row.push(format!("{:.6}", cell.sd));
                    }
                    None => {
                        row.push(String::new());
                        row.push(String::new());
                    }
                }
            }
            w.write_record(&row)?;
        }
    }
    w.flush()?;
    Ok(())
}

/// Per-set inputs shared by all replicates.
struct Target {
    choice: IndexChoice,
    set: IndexSet,
    omega_s: Vec<f64>,
}

/// Scores, `h`, bandwidth and `diag(W)` for one fitted sample on one set.
struct SetFit {
    scores: DMatrix<f64>,
    h: Vec<f64>,
    bandwidth: f64,
    w: Vec<f64>,
    omega_s: Vec<f64>,
}

fn fit_set(est: &PrecisionEstimate, set: &IndexSet, boot: &BootstrapConfig) -> Result<SetFit> {
    let scores = est.scores(set).materialize(DEFAULT_SCORE_BUDGET)?;
    let h = est.h_diag(set);
    let (bandwidth, _) = resolve_bandwidth(&scores, &boot.kernel, boot.bandwidth, &boot.bandwidth_cfg)?;
    let w = w_diag(&scores, &h, bandwidth, &boot.kernel)?.values;
    Ok(SetFit {
        scores,
        h,
        bandwidth,
        w,
        omega_s: est.omega_on(set),
    })
}

/// `(plain, studentized)` statistics of one sample per target.
fn benchmark_one(
    data: &Dataset,
    targets: &[Target],
    cfg: &CoverageConfig,
) -> Result<Vec<(f64, f64)>> {
    let est = PrecisionEstimate::from_data(data, &cfg.lasso)?;
    let n = data.n();
    targets
        .iter()
        .map(|t| {
            let f = fit_set(&est, &t.set, &cfg.boot)?;
            Ok((
                sup_statistic(&f.omega_s, &t.omega_s, n, None)?,
                sup_statistic(&f.omega_s, &t.omega_s, n, Some(&f.w))?,
            ))
        })
        .collect()
}

/// Quantiles `[target][method][level]` and bandwidths for one replicate.
type ReplicateOut = (Vec<[Vec<f64>; 2]>, Vec<f64>);

fn replicate_one(
    data: &Dataset,
    targets: &[Target],
    cfg: &CoverageConfig,
    rng: RngSpec,
) -> Result<ReplicateOut> {
    let est = PrecisionEstimate::from_data(data, &cfg.lasso)?;
    let mut quantiles = Vec::with_capacity(targets.len());
    let mut bandwidths = Vec::with_capacity(targets.len());
    for t in targets {
        let f = fit_set(&est, &t.set, &cfg.boot)?;
        let factor = gaussian_mult_factor(f.scores.n(), f.bandwidth, &cfg.boot.kernel);
        let boot_cfg = BootstrapConfig {
            rng: rng.child(&t.choice.to_string()),
            ..cfg.boot.clone()
        };
        let (plain, stud) = kmb_draws_dual(&f.scores, &f.h, &f.w, &factor, f.bandwidth, &boot_cfg)?;
        let q = |b: &crate::bootstrap::BootstrapResult| -> Result<Vec<f64>> {
            cfg.levels
                .iter()
                .map(|&l| match cfg.force_quantile {
                    Some(q) => Ok(q),
                    None => b.quantile(l),
                })
                .collect()
        };
        quantiles.push([q(&plain)?, q(&stud)?]);
        bandwidths.push(f.bandwidth);
    }
    Ok((quantiles, bandwidths))
}

fn mean_sd(xs: &[f64]) -> (f64, f64) {
    let m = xs.len() as f64;
    if xs.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let mean = xs.iter().sum::<f64>() / m;
    let sd = if xs.len() > 1 {
        (xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (m - 1.0)).sqrt()
    } else {
        0.0
    };
    (mean, sd)
}

/// Two-stage coverage protocol: a benchmark distribution of the sup
/// statistics from `benchmark_reps` samples, then, per replicate, the
/// fraction of that distribution below the bootstrap quantile.
pub fn coverage_experiment(dgp: &DgpSpec, cfg: &CoverageConfig) -> Result<CoverageReport> {
    dgp.validate()?;
    cfg.validate()?;
    let (sigma, omega) = build_sigma(dgp.structure, dgp.p)?;
    let targets: Vec<Target> = cfg
        .choices
        .iter()
        .map(|&choice| {
            let set = choice.index_set(dgp.structure, dgp.p)?;
            let omega_s = set.pairs().iter().map(|&(a, b)| omega.get(a, b)).collect();
            Ok(Target {
                choice,
                set,
                omega_s,
            })
        })
        .collect::<Result<_>>()?;

    let sample = |label: &str, i: usize| {
        generate_ar(&sigma, dgp.n, dgp.rho, &dgp.rng.child_indexed(label, i as u64))
    };

    let bench: Vec<Result<Vec<(f64, f64)>>> = (0..cfg.benchmark_reps)
        .into_par_iter()
        .map(|i| benchmark_one(&sample("benchmark", i)?, &targets, cfg))
        .collect();
    let mut benchmark_failed = 0;
    // [target][method] sorted statistics
    let mut truth: Vec<[Vec<f64>; 2]> = vec![[Vec::new(), Vec::new()]; targets.len()];
    for b in bench {
        match b {
            Ok(stats) => {
                for (k, (plain, stud)) in stats.into_iter().enumerate() {
                    truth[k][0].push(plain);
                    truth[k][1].push(stud);
                }
            }
            Err(e) => {
                log::warn!("benchmark replicate failed: {e}");
                benchmark_failed += 1;
            }
        }
    }
    if truth[0][0].is_empty() {
        return Err(Error::InsufficientData("every benchmark replicate failed".into()));
    }
    for t in &mut truth {
        t[0].sort_by(f64::total_cmp);
        t[1].sort_by(f64::total_cmp);
    }

    let reps: Vec<Result<ReplicateOut>> = (0..cfg.replicates)
        .into_par_iter()
        .map(|i| {
            let data = sample("replicate", i)?;
            replicate_one(&data, &targets, cfg, cfg.boot.rng.child_indexed("replicate", i as u64))
        })
        .collect();
    let mut failed = 0;
    let mut coverages = vec![[vec![Vec::new(); cfg.levels.len()], vec![Vec::new(); cfg.levels.len()]]; targets.len()];
    let mut bandwidths = vec![Vec::new(); targets.len()];
    for r in reps {
        match r {
            Ok((q, bw)) => {
                for k in 0..targets.len() {
                    for m in 0..2 {
                        let bench = &truth[k][m];
                        for (li, &qv) in q[k][m].iter().enumerate() {
                            let below = bench.partition_point(|&s| s <= qv);
                            coverages[k][m][li].push(below as f64 / bench.len() as f64);
                        }
                    }
                    bandwidths[k].push(bw[k]);
                }
            }
            Err(e) => {
                log::warn!("replicate failed: {e}");
                failed += 1;
            }
        }
    }

    let mut cells = Vec::new();
    for (k, t) in targets.iter().enumerate() {
        for (m, method) in [Method::Kmb, Method::Skmb].into_iter().enumerate() {
            for (li, &level) in cfg.levels.iter().enumerate() {
                let xs = &coverages[k][m][li];
                let (mean, sd) = mean_sd(xs);
                cells.push(CoverageCell {
                    method,
                    level,
                    choice: t.choice,
                    mean,
                    sd,
                    se: sd / (xs.len().max(1) as f64).sqrt(),
                });
            }
        }
    }
    Ok(CoverageReport {
        structure: dgp.structure,
        p: dgp.p,
        n: dgp.n,
        rho: dgp.rho,
        cells,
        replicates: cfg.replicates,
        failed,
        benchmark_reps: cfg.benchmark_reps,
        benchmark_failed,
        draws: cfg.boot.draws,
        lambda_scale: cfg.lasso.lambda_scale,
        bandwidths,
    })
}

/// Coverage for each penalty multiplier in `scales`, same seeds.
pub fn lambda_sensitivity(
    dgp: &DgpSpec,
    cfg: &CoverageConfig,
    scales: &[f64],
) -> Result<Vec<CoverageReport>> {
    scales
        .iter()
        .map(|&s| {
            let cfg = CoverageConfig {
                lasso: LassoConfig {
                    lambda_scale: s,
                    ..cfg.lasso.clone()
                },
                ..cfg.clone()
            };
            coverage_experiment(dgp, &cfg)
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn two_by_two_structure_a() {
        let (sigma, omega) = build_sigma(Structure::A, 2).unwrap();
        // base inverse (4/3)[[1, -0.5], [-0.5, 1]]: rescale by sqrt(4/3)
        let inv = [[4.0 / 3.0, -2.0 / 3.0], [-2.0 / 3.0, 4.0 / 3.0]];
        let d = inv[0][0];
        assert!((sigma.get(0, 0) - d).abs() < 1e-12);
        assert!((sigma.get(0, 1) - 0.5 * d).abs() < 1e-12);
        assert!((omega.get(0, 0) - 1.0).abs() < 1e-12);
        assert!((omega.get(0, 1) - inv[0][1] / d).abs() < 1e-12);
        assert!((omega.get(0, 1) + 0.5).abs() < 1e-12);
    }

    #[test]
    fn unit_diagonal_precision() {
        for p in [10, 25, 100] {
            for s in [Structure::A, Structure::B] {
                let (_, omega) = build_sigma(s, p).unwrap();
                for j in 0..p {
                    assert!((omega.get(j, j) - 1.0).abs() < 1e-10, "{s} p={p}");
                }
            }
        }
    }

    #[test]
    fn sigma_times_omega_is_identity() {
        for p in [5, 50, 200] {
            for s in [Structure::A, Structure::B] {
                let (sigma, omega) = build_sigma(s, p).unwrap();
                let prod = sigma.to_dense() * omega.to_dense();
                let err = (prod - DMatrix::identity(p, p)).abs().max();
                assert!(err < 1e-8, "{s} p={p}: {err}");
            }
        }
    }

    #[test]
    fn structure_b_block_entries() {
        let (_, omega) = build_sigma(Structure::B, 10).unwrap();
        assert!((omega.get(0, 1) + 0.2).abs() < 1e-12);
        assert!(omega.get(0, 5).abs() < 1e-12);
        assert!(matches!(build_sigma(Structure::B, 7), Err(Error::InvalidDimension(_))));
        let (_, single) = build_sigma(Structure::B, 5).unwrap();
        for i in 0..5 {
            for j in 0..5 {
                assert!(single.get(i, j).abs() > 0.1);
            }
        }
    }

    #[test]
    fn zero_sets_match_precision() {
        for (s, p) in [(Structure::A, 12), (Structure::B, 15)] {
            let (_, omega) = build_sigma(s, p).unwrap();
            let zs = zero_set(s, p).unwrap();
            for a in 0..p {
                for b in 0..p {
                    if a == b {
                        continue;
                    }
                    let is_zero = omega.get(a, b).abs() < 1e-10;
                    assert_eq!(zs.position_of((a, b)).is_some(), is_zero, "{s} ({a},{b})");
                }
            }
        }
        assert_eq!(zero_set(Structure::A, 4).unwrap().r(), 6);
    }

    #[test]
    fn generation_is_reproducible() {
        let dgp = DgpSpec {
            structure: Structure::A,
            p: 4,
            rho: 0.3,
            n: 30,
            rng: RngSpec::new(5, "gen"),
        };
        assert_eq!(generate(&dgp).unwrap(), generate(&dgp).unwrap());
        let other = DgpSpec {
            rng: RngSpec::new(6, "gen"),
            ..dgp.clone()
        };
        assert_ne!(generate(&dgp).unwrap(), generate(&other).unwrap());
    }

    #[test]
    fn zero_rho_is_iid_innovations() {
        let sigma = SymMatrix::identity(3);
        let rng = RngSpec::new(1, "iid");
        let y = generate_ar(&sigma, 10, 0.0, &rng).unwrap();
        let mut g = rng.substream(0);
        for t in 0..10 {
            for j in 0..3 {
                let z: f64 = g.sample(StandardNormal);
                assert_eq!(y.values()[(t, j)], z);
            }
        }
    }

    #[test]
    fn identity_columns_pass_moment_check() {
        let n = 4000;
        let y = generate_ar(&SymMatrix::identity(5), n, 0.0, &RngSpec::new(2, "moments")).unwrap();
        let nf = n as f64;
        for j in 0..5 {
            let col = y.column(j);
            let mean = col.iter().sum::<f64>() / nf;
            let var = col.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (nf - 1.0);
            assert!(mean.abs() <= 4.0 / nf.sqrt());
            assert!((var - 1.0).abs() <= 4.0 * (2.0 / nf).sqrt());
        }
    }

    #[test]
    fn lag_one_autocovariance() {
        let n = 50_000;
        let rho = 0.3;
        let (sigma, _) = build_sigma(Structure::A, 2).unwrap();
        let y = generate_ar(&sigma, n, rho, &RngSpec::new(3, "lag")).unwrap();
        let v = y.values();
        for a in 0..2 {
            for b in 0..2 {
                let mut s = 0.0;
                let mut s2 = 0.0;
                for t in 1..n {
                    let x = v[(t, a)] * v[(t - 1, b)];
                    s += x;
                    s2 += x * x;
                }
                let m = (n - 1) as f64;
                let mean = s / m;
                // products are serially dependent; inflate the iid se
                let se = ((s2 / m - mean * mean) / m).sqrt() * 2.0;
                let target = rho * sigma.get(a, b);
                assert!((mean - target).abs() < 4.0 * se, "({a},{b}) {mean} vs {target}");
            }
        }
    }

    fn small_cfg() -> CoverageConfig {
        CoverageConfig {
            replicates: 2,
            benchmark_reps: 5,
            choices: vec![IndexChoice::Zeros],
            boot: BootstrapConfig {
                draws: 50,
                ..BootstrapConfig::default()
            },
            ..CoverageConfig::default()
        }
    }

    #[test]
    fn forced_infinite_quantile_covers_everything() {
        let dgp = DgpSpec {
            structure: Structure::A,
            p: 6,
            rho: 0.0,
            n: 60,
            rng: RngSpec::new(9, "cov"),
        };
        let cfg = CoverageConfig {
            replicates: 1,
            force_quantile: Some(f64::INFINITY),
            ..small_cfg()
        };
        let rep = coverage_experiment(&dgp, &cfg).unwrap();
        assert_eq!(rep.cells.len(), 6);
        assert!(rep.cells.iter().all(|c| c.mean == 1.0));
    }

    #[test]
    fn report_shape_and_csv() {
        let dgp = DgpSpec {
            structure: Structure::B,
            p: 10,
            rho: 0.2,
            n: 40,
            rng: RngSpec::new(4, "csv"),
        };
        let cfg = CoverageConfig {
            choices: vec![IndexChoice::Zeros, IndexChoice::Offdiag],
            ..small_cfg()
        };
        let rep = coverage_experiment(&dgp, &cfg).unwrap();
        assert_eq!(rep.cells.len(), 12);
        assert!(rep.cells.iter().all(|c| (0.0..=1.0).contains(&c.mean) && c.sd >= 0.0));
        let mut buf = Vec::new();
        rep.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines.len(), 4);
        assert_eq!(
            lines[0],
            "structure,rho,p,n,lambda_scale,level,kmb_zeros,kmb_zeros_sd,skmb_zeros,skmb_zeros_sd,\
             kmb_offdiag,kmb_offdiag_sd,skmb_offdiag,skmb_offdiag_sd"
        );
        assert!(lines[1].starts_with("B,0.2,10,40,0.5,0.925,"));
        assert_eq!(rep, coverage_experiment(&dgp, &cfg).unwrap());
    }

    #[test]
    fn long_run_scale_grows_with_persistence() {
        let p = 10;
        let set = zero_set(Structure::A, p).unwrap();
        let (sigma, _) = build_sigma(Structure::A, p).unwrap();
        let median_w = |rho: f64| {
            let mut meds = Vec::new();
            for i in 0..6 {
                let data = generate_ar(&sigma, 300, rho, &RngSpec::new(i, "trend")).unwrap();
                let est = PrecisionEstimate::from_data(&data, &LassoConfig::default()).unwrap();
                let f = fit_set(&est, &set, &BootstrapConfig::default()).unwrap();
                let mut w = f.w.clone();
                w.sort_by(f64::total_cmp);
                meds.push(w[w.len() / 2]);
            }
            meds.sort_by(f64::total_cmp);
            meds[meds.len() / 2]
        };
        assert!(median_w(0.3) > median_w(0.0));
    }
}
