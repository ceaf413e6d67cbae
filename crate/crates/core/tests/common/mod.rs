//! Helpers shared by the integration tests.
#![allow(dead_code)]

use hdprec::bootstrap::{gaussian_mult_factor, kmb_draws_dual, BootstrapConfig, BootstrapResult};
use hdprec::longrun::{resolve_bandwidth, w_diag};
use hdprec::precision::{PrecisionEstimate, DEFAULT_SCORE_BUDGET};
use hdprec::{IndexSet, Result, RngSpec};
use hdprec::nodewise::LassoConfig;
use hdprec::Dataset;

/// Estimate plus KMB and SKMB draws on `set` from shared multipliers.
pub struct Fitted {
    pub est: PrecisionEstimate,
    pub omega_s: Vec<f64>,
    pub plain: BootstrapResult,
    pub stud: BootstrapResult,
}

pub fn fit_and_bootstrap(data: &Dataset, set: &IndexSet, draws: usize, rng: RngSpec) -> Result<Fitted> {
    let est = PrecisionEstimate::from_data(data, &LassoConfig::default())?;
    let cfg = BootstrapConfig {
        draws,
        rng,
        ..BootstrapConfig::default()
    };
    let scores = est.scores(set).materialize(DEFAULT_SCORE_BUDGET)?;
    let h = est.h_diag(set);
    let (bw, _) = resolve_bandwidth(&scores, &cfg.kernel, None, &cfg.bandwidth_cfg)?;
    let w = w_diag(&scores, &h, bw, &cfg.kernel)?.values;
    let factor = gaussian_mult_factor(scores.nrows(), bw, &cfg.kernel);
    let (plain, stud) = kmb_draws_dual(&scores, &h, &w, &factor, bw, &cfg)?;
    let omega_s = est.omega_on(set);
    Ok(Fitted {
        est,
        omega_s,
        plain,
        stud,
    })
}

/// Binomial standard error of a rate `p` over `n` trials.
pub fn binom_se(p: f64, n: usize) -> f64 {
    (p * (1.0 - p) / n as f64).sqrt()
}

/// Prints the result line and fails the test when `ok` is false.
pub fn report(id: &str, ok: bool, detail: String) {
    println!("criterion {id}: {} | {detail}", if ok { "PASS" } else { "FAIL" });
    assert!(ok, "criterion {id} failed: {detail}");
}
