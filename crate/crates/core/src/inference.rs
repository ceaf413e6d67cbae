//! Sup-norm tests on entries of the precision matrix, support recovery,
//! and Benjamini-Hochberg screening of block hypotheses.

use std::io::Write;

use rayon::prelude::*;
use serde::Serialize;

use crate::bootstrap::{kmb_draws, BootstrapConfig, BootstrapResult};
use crate::dataset::Dataset;
use crate::error::{Error, Result};
use crate::index_set::{IndexSet, Pair};
use crate::longrun::{resolve_bandwidth, w_diag};
use crate::nodewise::LassoConfig;
use crate::precision::PrecisionEstimate;
use crate::sym_matrix::SymMatrix;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TestOutcome {
    pub statistic: f64,
    pub quantile: f64,
    pub reject: bool,
    pub p_value: f64,
    pub alpha: f64,
}

fn check_alpha(alpha: f64) -> Result<()> {
    if alpha > 0.0 && alpha < 1.0 {
        Ok(())
    } else {
        Err(Error::InvalidLevel(alpha))
    }
}

/// `sqrt(n) max_l |omega_l - c_l|`, each coordinate divided by `sqrt(w_l)`
/// when scales are given.
pub fn sup_statistic(omega_s: &[f64], c: &[f64], n: usize, w_diag: Option<&[f64]>) -> Result<f64> {
    if omega_s.len() != c.len() {
        return Err(Error::ShapeError(format!(
            "{} estimates against {} null values",
            omega_s.len(),
            c.len()
        )));
    }
    if let Some(w) = w_diag {
        if w.len() != c.len() {
            return Err(Error::ShapeError(format!(
                "{} scales for {} coordinates",
                w.len(),
                c.len()
            )));
        }
    }
    let root_n = (n as f64).sqrt();
    Ok(omega_s
        .iter()
        .zip(c)
        .enumerate()
        .map(|(l, (o, c))| {
            let d = (o - c).abs();
            match w_diag {
                Some(w) => d / w[l].sqrt(),
                None => d,
            }
        })
        .fold(0.0, f64::max)
        * root_n)
}

/// Tests `omega_S = c` against the bootstrap quantile at level `1 - alpha`.
pub fn test_structure(
    omega_s: &[f64],
    c: &[f64],
    boot: &BootstrapResult,
    n: usize,
    alpha: f64,
) -> Result<TestOutcome> {
    check_alpha(alpha)?;
    let scales = if boot.studentized {
        Some(boot.w_diag.as_deref().ok_or(Error::MissingScale)?)
    } else {
        None
    };
    let statistic = sup_statistic(omega_s, c, n, scales)?;
    let quantile = boot.quantile(1.0 - alpha)?;
    Ok(TestOutcome {
        statistic,
        quantile,
        reject: statistic > quantile,
        p_value: boot.p_value(statistic),
        alpha,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SupportEstimate {
    pub selected: Vec<Pair>,
    pub alpha: f64,
    /// Per-pair cutoff on `|omega|`: `q / sqrt(n)`, times `sqrt(w_l)` when
    /// Studentized.
    pub threshold: Vec<f64>,
}

/// Pairs of `set` whose simultaneous interval excludes zero.
pub fn recover_support(
    omega_hat: &SymMatrix,
    set: &IndexSet,
    boot: &BootstrapResult,
    n: usize,
    alpha: f64,
) -> Result<SupportEstimate> {
    check_alpha(alpha)?;
    let q = boot.quantile(1.0 - alpha)?;
    let root_n = (n as f64).sqrt();
    let threshold: Vec<f64> = match (&boot.w_diag, boot.studentized) {
        (Some(w), true) => {
            if w.len() != set.r() {
                return Err(Error::ShapeError(format!(
                    "{} scales for {} pairs",
                    w.len(),
                    set.r()
                )));
            }
            w.iter().map(|w| q * w.sqrt() / root_n).collect()
        }
        (None, true) => return Err(Error::MissingScale),
        _ => vec![q / root_n; set.r()],
    };
    let selected = set
        .pairs()
        .iter()
        .zip(&threshold)
        .filter(|(&(a, b), &t)| omega_hat.get(a, b).abs() > t)
        .map(|(&pair, _)| pair)
        .collect();
    Ok(SupportEstimate {
        selected,
        alpha,
        threshold,
    })
}

/// Benjamini-Hochberg step-up. Returns the rejected positions, ascending.
pub fn bh_select(p_values: &[f64], alpha: f64) -> Result<Vec<usize>> {
    if let Some(&bad) = p_values.iter().find(|p| !(0.0..=1.0).contains(*p)) {
        return Err(Error::InvalidPValue(bad));
    }
    let k = p_values.len();
    let mut order: Vec<usize> = (0..k).collect();
    order.sort_by(|&a, &b| p_values[a].total_cmp(&p_values[b]).then(a.cmp(&b)));
    let cutoff = (1..=k)
        .rev()
        .find(|&j| p_values[order[j - 1]] <= alpha * j as f64 / k as f64)
        .unwrap_or(0);
    let mut rejected = order[..cutoff].to_vec();
    rejected.sort_unstable();
    Ok(rejected)
}

/// A named set of columns.
#[derive(Debug, Clone, PartialEq)]
pub struct Group {
    pub name: String,
    pub members: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BlockTestConfig {
    pub lasso: LassoConfig,
    /// Draw count, kernel, bandwidth and RNG for each block. Blocks always
    /// use the Studentized statistic.
    pub boot: BootstrapConfig,
    pub fdr: f64,
    /// Also test `h1 == h2` blocks.
    pub within: bool,
}

impl Default for BlockTestConfig {
    fn default() -> Self {
        Self {
            lasso: LassoConfig::default(),
            boot: BootstrapConfig::default(),
            fdr: 0.1,
            within: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BlockEdge {
    pub group1: usize,
    pub group2: usize,
    pub statistic: f64,
    pub bandwidth: f64,
    pub p_value: f64,
    pub rejected: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BlockReport {
    pub names: Vec<String>,
    pub edges: Vec<BlockEdge>,
}

impl BlockReport {
    /// Edge list `group1,group2,p_value,rejected`.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["group1", "group2", "p_value", "rejected"])?;
        for e in &self.edges {
            w.write_record([
                self.names[e.group1].as_str(),
                self.names[e.group2].as_str(),
                &format!("{:?}", e.p_value),
                if e.rejected { "true" } else { "false" },
            ])?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn rejected(&self) -> impl Iterator<Item = &BlockEdge> {
        self.edges.iter().filter(|e| e.rejected)
    }
}

/// Block pairs `(h1, h2)` with `h1 < h2`, plus `h1 == h2` when `within`.
pub fn block_pairs(groups: usize, within: bool) -> Vec<(usize, usize)> {
    (0..groups)
        .flat_map(|a| (a..groups).map(move |b| (a, b)))
        .filter(|&(a, b)| a != b || within)
        .collect()
}

/// Tests `omega = 0` on every block `I_{h1} x I_{h2}` with the Studentized
/// sup statistic and screens the P-values with Benjamini-Hochberg.
pub fn block_test_matrix(
    data: &Dataset,
    groups: &[Group],
    cfg: &BlockTestConfig,
) -> Result<BlockReport> {
    let est = PrecisionEstimate::from_data(data, &cfg.lasso)?;
    block_test_with(&est, groups, cfg)
}

/// [`block_test_matrix`] on an existing fit.
pub fn block_test_with(
    est: &PrecisionEstimate,
    groups: &[Group],
    cfg: &BlockTestConfig,
) -> Result<BlockReport> {
    cfg.boot.validate()?;
    check_alpha(cfg.fdr)?;
    let members: Vec<Vec<usize>> = groups.iter().map(|g| g.members.clone()).collect();
    // a single column has no within-block pairs
    let pairs: Vec<(usize, usize)> = block_pairs(groups.len(), cfg.within)
        .into_iter()
        .filter(|&(a, b)| a != b || members[a].len() > 1)
        .collect();
    let n = est.n();
    let mut edges: Vec<BlockEdge> = pairs
        .par_iter()
        .map(|&(h1, h2)| {
            let set = IndexSet::from_blocks(&members, h1, h2, est.p())?;
            let scores = est.scores(&set);
            let h = est.h_diag(&set);
            let (bw, _) =
                resolve_bandwidth(&scores, &cfg.boot.kernel, cfg.boot.bandwidth, &cfg.boot.bandwidth_cfg)?;
            let w = w_diag(&scores, &h, bw, &cfg.boot.kernel)?.values;
            let boot_cfg = BootstrapConfig {
                studentized: true,
                bandwidth: Some(bw),
                rng: cfg.boot.rng.child(&format!("block-{h1}-{h2}")),
                ..cfg.boot.clone()
            };
            let boot = kmb_draws(&scores, &h, &boot_cfg, Some(&w))?;
            let omega_s = est.omega_on(&set);
            let statistic = sup_statistic(&omega_s, &vec![0.0; set.r()], n, Some(&w))?;
            Ok(BlockEdge {
                group1: h1,
                group2: h2,
                statistic,
                bandwidth: bw,
                p_value: boot.p_value(statistic),
                rejected: false,
            })
        })
        .collect::<Result<_>>()?;
    let p: Vec<f64> = edges.iter().map(|e| e.p_value).collect();
    for i in bh_select(&p, cfg.fdr)? {
        edges[i].rejected = true;
    }
    Ok(BlockReport {
        names: groups.iter().map(|g| g.name.clone()).collect(),
        edges,
    })
}
