use std::collections::HashMap;
use std::path::Path;

use serde::Deserialize;
use serde_json::json;

use super::index_spec::IndexSpec;
use super::ingest::{build_groups, ingest_returns, read_group_map, read_table, ReturnsSpec};
use super::output::{fmt_f64, write_matrix_csv, InputRecord, Manifest, OutDir};
use super::{Command, CommonArgs, DataArgs, EstimateArgs, SimulateArgs, TestArgs};
use crate::bootstrap::{
    confidence_region, gaussian_mult_factor, kmb_draws_with_factor, BootstrapConfig, BootstrapResult,
};
use crate::dataset::Dataset;
use crate::error::{Error, Result};
use crate::index_set::IndexSet;
use crate::inference::{block_test_with, recover_support, test_structure, BlockTestConfig, Group};
use crate::longrun::{resolve_bandwidth, w_diag, KernelKind, KernelSpec};
use crate::nodewise::LassoConfig;
use crate::precision::PrecisionEstimate;
use crate::rng::RngSpec;
use crate::simulate::{
    lambda_sensitivity, write_coverage_csv, CoverageConfig, DgpSpec, IndexChoice, Structure,
};

const SENSITIVITY_SCALES: [f64; 3] = [0.25, 0.5, 1.0];

pub(super) fn dispatch(cmd: &Command) -> Result<()> {
    match cmd {
        Command::Simulate(a) => simulate(a),
        Command::Estimate(a) => estimate(a),
        Command::Test(a) => test(a),
        Command::Recover(a) => recover(a),
        Command::Blocks(a) => blocks(a),
    }
}

/// Common settings after defaults are applied.
#[derive(Debug, Clone)]
struct Settings {
    seed: u64,
    draws: usize,
    kernel: KernelSpec,
    bandwidth: Option<f64>,
    studentized: bool,
    alpha: f64,
    lambda_scale: f64,
}

impl Settings {
    fn resolve(c: &CommonArgs, file: &SimulateFile) -> Result<Self> {
        let s = Self {
            seed: c.seed.or(file.seed).unwrap_or(0),
            draws: c.boot_m.or(file.boot_m).unwrap_or(3000),
            kernel: KernelSpec::new(
                c.kernel.map(KernelKind::from).or(file.kernel).unwrap_or(KernelKind::QuadraticSpectral),
            ),
            bandwidth: match c.bandwidth {
                Some(b) => b.value(),
                None => file.bandwidth,
            },
            studentized: c.studentized,
            alpha: c.alpha.or(file.alpha).unwrap_or(0.05),
            lambda_scale: c.lambda_scale.or(file.lambda_scale).unwrap_or(0.5),
        };
        if !(s.alpha > 0.0 && s.alpha < 1.0) {
            return Err(Error::Config(format!("--alpha must lie in (0, 1), got {}", s.alpha)));
        }
        if s.draws == 0 {
            return Err(Error::Config("--boot-M must be at least 1".into()));
        }
        if let Some(b) = s.bandwidth {
            if !(b > 0.0) {
                return Err(Error::Config(format!("bandwidth must be positive, got {b}")));
            }
        }
        Ok(s)
    }

    fn lasso(&self) -> LassoConfig {
        LassoConfig {
            lambda_scale: self.lambda_scale,
            ..LassoConfig::default()
        }
    }

    fn boot(&self, stream: &str) -> BootstrapConfig {
        BootstrapConfig {
            draws: self.draws,
            studentized: self.studentized,
            rng: RngSpec::new(self.seed, stream),
            kernel: self.kernel,
            bandwidth: self.bandwidth,
            ..BootstrapConfig::default()
        }
    }

    fn manifest(&self, command: &'static str) -> Manifest {
        Manifest {
            tool: "hdprec",
            version: env!("CARGO_PKG_VERSION"),
            command,
            seed: self.seed,
            kernel: self.kernel.kind.to_string(),
            truncation_eps: self.kernel.truncation_eps,
            bandwidth_rule: match self.bandwidth {
                Some(b) => b.to_string(),
                None => "auto".into(),
            },
            bandwidths: Vec::new(),
            draws: self.draws,
            studentized: self.studentized,
            alpha: self.alpha,
            lambda_scale: self.lambda_scale,
            lambdas: Vec::new(),
            inputs: Vec::new(),
            outputs: Vec::new(),
            settings: json!({}),
        }
    }
}

struct Loaded {
    data: Dataset,
    names: Vec<String>,
    groups: Vec<Group>,
    inputs: Vec<InputRecord>,
}

fn load(args: &DataArgs) -> Result<Loaded> {
    let mut inputs = Vec::new();
    let (data, names, groups) = if let Some(path) = &args.prices {
        inputs.push(InputRecord::from_file("prices", path)?);
        let spec = ReturnsSpec {
            price_csv: path.clone(),
            log_returns: !args.simple_returns,
            standardize: !args.no_standardize,
            group_map: args.groups.clone(),
        };
        let got = ingest_returns(&spec)?;
        let names = got.data.names().map(<[String]>::to_vec).unwrap_or_default();
        (got.data, names, got.groups)
    } else {
        let path = args.data.as_ref().ok_or_else(|| Error::Config("need --data or --prices".into()))?;
        inputs.push(InputRecord::from_file("data", path)?);
        let (names, values) = read_table(path)?;
        let data = Dataset::new(values)?.with_names(names.clone())?;
        let groups = match &args.groups {
            Some(g) => {
                let (groups, ungrouped) = build_groups(&names, &read_group_map(g)?);
                if !ungrouped.is_empty() {
                    log::warn!("{} columns have no group", ungrouped.len());
                }
                groups
            }
            None => Vec::new(),
        };
        (data, names, groups)
    };
    if let Some(g) = &args.groups {
        inputs.push(InputRecord::from_file("groups", g)?);
    }
    Ok(Loaded {
        data,
        names,
        groups,
        inputs,
    })
}

fn resolve_set(spec: &str, loaded: &Loaded, inputs: &mut Vec<InputRecord>) -> Result<IndexSet> {
    let spec: IndexSpec = spec.parse()?;
    match &spec {
        IndexSpec::ZerosOf(p) | IndexSpec::Pairs(p) => inputs.push(InputRecord::from_file("set", p)?),
        _ => {}
    }
    spec.resolve(loaded.data.p(), &loaded.groups)
}

/// Fit, long-run scales and bootstrap on one index set.
struct Analysis {
    est: PrecisionEstimate,
    set: IndexSet,
    bandwidth: f64,
    boot: BootstrapResult,
}

fn analyse(data: &Dataset, set: IndexSet, s: &Settings) -> Result<Analysis> {
    let est = PrecisionEstimate::from_data(data, &s.lasso())?;
    if set.p() != est.p() {
        return Err(Error::ShapeError(format!(
            "index set is for p = {}, data has p = {}",
            set.p(),
            est.p()
        )));
    }
    let cfg = s.boot("kmb");
    let (boot, bandwidth) = {
        let scores = est.scores(&set);
        let h = est.h_diag(&set);
        let (bandwidth, _) = resolve_bandwidth(&scores, &cfg.kernel, cfg.bandwidth, &cfg.bandwidth_cfg)?;
        let w = if s.studentized {
            Some(w_diag(&scores, &h, bandwidth, &cfg.kernel)?.values)
        } else {
            None
        };
        let factor = gaussian_mult_factor(est.n(), bandwidth, &cfg.kernel);
        (
            kmb_draws_with_factor(&scores, &h, w.as_deref(), &factor, bandwidth, &cfg)?,
            bandwidth,
        )
    };
    Ok(Analysis {
        est,
        set,
        bandwidth,
        boot,
    })
}

fn base_manifest(s: &Settings, command: &'static str, a: &Analysis, inputs: Vec<InputRecord>) -> Manifest {
    let mut m = s.manifest(command);
    m.bandwidths = vec![a.bandwidth];
    m.lambdas = a.est.fit.lambda.clone();
    m.inputs = inputs;
    m
}

fn estimate(args: &EstimateArgs) -> Result<()> {
    let s = Settings::resolve(&args.common, &SimulateFile::default())?;
    let loaded = load(&args.data)?;
    let mut inputs = loaded.inputs.clone();
    let set = resolve_set(&args.set, &loaded, &mut inputs)?;
    let a = analyse(&loaded.data, set, &s)?;
    let q = a.boot.quantile(1.0 - s.alpha)?;
    let omega_s = a.est.omega_on(&a.set);
    let region = confidence_region(&omega_s, q, a.est.n(), a.boot.w_diag.as_deref())?;

    let mut out = OutDir::create(&args.common.out)?;
    out.write("omega.csv", |buf| write_matrix_csv(&a.est.omega_hat, &loaded.names, buf))?;
    out.write("intervals.csv", |buf| {
        let mut w = csv::Writer::from_writer(buf);
        w.write_record(["j1", "j2", "name1", "name2", "estimate", "lower", "upper"])?;
        for (l, &(j1, j2)) in a.set.pairs().iter().enumerate() {
            let iv = region.intervals[l];
            w.write_record([
                (j1 + 1).to_string(),
                (j2 + 1).to_string(),
                loaded.names[j1].clone(),
                loaded.names[j2].clone(),
                fmt_f64(omega_s[l]),
                fmt_f64(iv.lower),
                fmt_f64(iv.upper),
            ])?;
        }
        w.flush()?;
        Ok(())
    })?;
    let mut m = base_manifest(&s, "estimate", &a, inputs);
    m.settings = json!({ "set": args.set, "r": a.set.r(), "quantile": q });
    out.finish(m)
}

fn read_null(path: &Path, set: &IndexSet) -> Result<Vec<f64>> {
    let mut r = csv::ReaderBuilder::new().trim(csv::Trim::All).from_path(path)?;
    let mut values: HashMap<(usize, usize), f64> = HashMap::new();
    for (i, rec) in r.records().enumerate() {
        let rec = rec?;
        let bad = || Error::InvalidInput(format!("{} line {}: expected j1,j2,value", path.display(), i + 2));
        let j1: usize = rec.get(0).and_then(|v| v.parse().ok()).filter(|&v| v >= 1).ok_or_else(bad)?;
        let j2: usize = rec.get(1).and_then(|v| v.parse().ok()).filter(|&v| v >= 1).ok_or_else(bad)?;
        let v: f64 = rec.get(2).and_then(|v| v.parse().ok()).ok_or_else(bad)?;
        values.insert((j1 - 1, j2 - 1), v);
    }
    set.pairs()
        .iter()
        .map(|&(a, b)| {
            values.get(&(a, b)).copied().ok_or_else(|| {
                Error::ShapeError(format!("null file has no value for ({}, {})", a + 1, b + 1))
            })
        })
        .collect()
}

fn test(args: &TestArgs) -> Result<()> {
    let s = Settings::resolve(&args.common, &SimulateFile::default())?;
    let loaded = load(&args.data)?;
    let mut inputs = loaded.inputs.clone();
    let set = resolve_set(&args.set, &loaded, &mut inputs)?;
    let c = match &args.null {
        Some(path) => {
            inputs.push(InputRecord::from_file("null", path)?);
            read_null(path, &set)?
        }
        None => vec![0.0; set.r()],
    };
    let a = analyse(&loaded.data, set, &s)?;
    let omega_s = a.est.omega_on(&a.set);
    let t = test_structure(&omega_s, &c, &a.boot, a.est.n(), s.alpha)?;

    let mut out = OutDir::create(&args.common.out)?;
    out.write("test.csv", |buf| {
        let mut w = csv::Writer::from_writer(buf);
        w.write_record(["statistic", "quantile", "reject", "p_value", "alpha", "r", "studentized"])?;
        w.write_record([
            fmt_f64(t.statistic),
            fmt_f64(t.quantile),
            t.reject.to_string(),
            fmt_f64(t.p_value),
            t.alpha.to_string(),
            a.set.r().to_string(),
            s.studentized.to_string(),
        ])?;
        w.flush()?;
        Ok(())
    })?;
    let mut m = base_manifest(&s, "test", &a, inputs);
    m.settings = json!({ "set": args.set, "r": a.set.r(), "null": if args.zero { "zero" } else { "file" } });
    out.finish(m)
}

fn recover(args: &EstimateArgs) -> Result<()> {
    let s = Settings::resolve(&args.common, &SimulateFile::default())?;
    let loaded = load(&args.data)?;
    let mut inputs = loaded.inputs.clone();
    let set = resolve_set(&args.set, &loaded, &mut inputs)?;
    let a = analyse(&loaded.data, set, &s)?;
    let support = recover_support(&a.est.omega_hat, &a.set, &a.boot, a.est.n(), s.alpha)?;

    let mut out = OutDir::create(&args.common.out)?;
    out.write("edges.csv", |buf| {
        let mut w = csv::Writer::from_writer(buf);
        w.write_record(["j1", "j2", "name1", "name2", "estimate", "threshold"])?;
        for &(j1, j2) in &support.selected {
            let l = a.set.position_of((j1, j2)).expect("selected pairs come from the set");
            w.write_record([
                (j1 + 1).to_string(),
                (j2 + 1).to_string(),
                loaded.names[j1].clone(),
                loaded.names[j2].clone(),
                fmt_f64(a.est.omega_hat.get(j1, j2)),
                fmt_f64(support.threshold[l]),
            ])?;
        }
        w.flush()?;
        Ok(())
    })?;
    let mut m = base_manifest(&s, "recover", &a, inputs);
    m.settings = json!({ "set": args.set, "r": a.set.r(), "selected": support.selected.len() });
    out.finish(m)
}

fn blocks(args: &super::BlocksArgs) -> Result<()> {
    let s = Settings::resolve(&args.common, &SimulateFile::default())?;
    if args.data.groups.is_none() {
        return Err(Error::Config("blocks needs --groups".into()));
    }
    let loaded = load(&args.data)?;
    if loaded.groups.is_empty() {
        return Err(Error::Config("the group map assigns no column to a group".into()));
    }
    let cfg = BlockTestConfig {
        lasso: s.lasso(),
        boot: BootstrapConfig {
            studentized: true,
            ..s.boot("blocks")
        },
        fdr: args.fdr,
        within: args.within,
    };
    let est = PrecisionEstimate::from_data(&loaded.data, &cfg.lasso)?;
    let report = block_test_with(&est, &loaded.groups, &cfg)?;

    let mut out = OutDir::create(&args.common.out)?;
    out.write("blocks.csv", |buf| report.write_csv(buf))?;
    let mut m = s.manifest("blocks");
    m.studentized = true;
    m.bandwidths = report.edges.iter().map(|e| e.bandwidth).collect();
    m.lambdas = est.fit.lambda.clone();
    m.inputs = loaded.inputs.clone();
    m.settings = json!({
        "fdr": args.fdr,
        "within": args.within,
        "groups": loaded.groups.iter().map(|g| json!({ "name": g.name, "size": g.members.len() })).collect::<Vec<_>>(),
        "rejected": report.rejected().count(),
    });
    out.finish(m)
}

/// Optional TOML settings for `simulate`.
#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub(super) struct SimulateFile {
    structure: Option<Structure>,
    p: Option<usize>,
    n: Option<usize>,
    rho: Option<f64>,
    reps: Option<usize>,
    bench_reps: Option<usize>,
    levels: Option<Vec<f64>>,
    sets: Option<Vec<IndexChoice>>,
    lambda_sensitivity: Option<bool>,
    seed: Option<u64>,
    boot_m: Option<usize>,
    kernel: Option<KernelKind>,
    bandwidth: Option<f64>,
    alpha: Option<f64>,
    lambda_scale: Option<f64>,
}

fn read_simulate_file(path: &Path) -> Result<SimulateFile> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::Io(format!("{}: {e}", path.display())))?;
    toml::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))
}

fn simulate(args: &SimulateArgs) -> Result<()> {
    let (file, inputs) = match &args.config {
        Some(p) => (read_simulate_file(p)?, vec![InputRecord::from_file("config", p)?]),
        None => (SimulateFile::default(), Vec::new()),
    };
    let s = Settings::resolve(&args.common, &file)?;
    let missing = |what: &str| Error::Config(format!("simulate needs --{what} (or `{what}` in --config)"));
    let dgp = DgpSpec {
        structure: args
            .structure
            .map(Structure::from)
            .or(file.structure)
            .ok_or_else(|| missing("structure"))?,
        p: args.p.or(file.p).ok_or_else(|| missing("p"))?,
        n: args.n.or(file.n).ok_or_else(|| missing("n"))?,
        rho: args.rho.or(file.rho).unwrap_or(0.0),
        rng: RngSpec::new(s.seed, "simulate"),
    };
    let defaults = CoverageConfig::default();
    let cfg = CoverageConfig {
        replicates: args.reps.or(file.reps).unwrap_or(defaults.replicates),
        benchmark_reps: args.bench_reps.or(file.bench_reps).unwrap_or(defaults.benchmark_reps),
        levels: args.levels.clone().or(file.levels).unwrap_or(defaults.levels),
        choices: args
            .sets
            .as_ref()
            .map(|v| v.iter().map(|&c| c.into()).collect())
            .or(file.sets)
            .unwrap_or(defaults.choices),
        lasso: s.lasso(),
        boot: s.boot("kmb"),
        force_quantile: None,
    };
    let scales: Vec<f64> = if args.lambda_sensitivity || file.lambda_sensitivity == Some(true) {
        SENSITIVITY_SCALES.to_vec()
    } else {
        vec![s.lambda_scale]
    };
    let reports = lambda_sensitivity(&dgp, &cfg, &scales)?;

    let mut out = OutDir::create(&args.common.out)?;
    out.write("coverage.csv", |buf| write_coverage_csv(&reports, buf))?;
    let mut m = s.manifest("simulate");
    m.inputs = inputs;
    m.bandwidths = reports
        .iter()
        .flat_map(|r| r.bandwidths.iter().flatten().copied())
        .collect();
    m.settings = json!({
        "structure": dgp.structure.to_string(),
        "p": dgp.p,
        "n": dgp.n,
        "rho": dgp.rho,
        "reps": cfg.replicates,
        "bench_reps": cfg.benchmark_reps,
        "levels": cfg.levels,
        "sets": cfg.choices.iter().map(|c| c.to_string()).collect::<Vec<_>>(),
        "lambda_scales": scales,
        "failed": reports.iter().map(|r| r.failed).collect::<Vec<_>>(),
        "benchmark_failed": reports.iter().map(|r| r.benchmark_failed).collect::<Vec<_>>(),
        "cells": reports.iter().map(|r| &r.cells).collect::<Vec<_>>(),
    });
    out.finish(m)
}
