//! Price files to standardized returns, and symbol-to-group maps.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use nalgebra::DMatrix;

use crate::dataset::Dataset;
use crate::error::{Error, Result};
use crate::inference::Group;

/// Label marking a symbol without a group.
pub const NO_GROUP: &str = "NA";

#[derive(Debug, Clone, PartialEq)]
pub struct ReturnsSpec {
    pub price_csv: PathBuf,
    pub log_returns: bool,
    pub standardize: bool,
    pub group_map: Option<PathBuf>,
}

impl ReturnsSpec {
    pub fn new(price_csv: impl Into<PathBuf>) -> Self {
        Self {
            price_csv: price_csv.into(),
            log_returns: true,
            standardize: true,
            group_map: None,
        }
    }
}

#[derive(Debug, Clone)]
pub struct Ingested {
    pub data: Dataset,
    pub groups: Vec<Group>,
    /// Symbols removed from the data (constant returns).
    pub dropped: Vec<String>,
    /// Symbols kept in the data but assigned to no group.
    pub ungrouped: Vec<String>,
}

/// A header row of names and one numeric row per observation. A leading
/// `date` column is skipped.
pub fn read_table(path: &Path) -> Result<(Vec<String>, DMatrix<f64>)> {
    let mut reader = csv::ReaderBuilder::new().trim(csv::Trim::All).from_path(path)?;
    read_table_from(&mut reader)
}

fn read_table_from<R: std::io::Read>(reader: &mut csv::Reader<R>) -> Result<(Vec<String>, DMatrix<f64>)> {
    let header: Vec<String> = reader.headers()?.iter().map(str::to_string).collect();
    let skip = usize::from(header.first().is_some_and(|h| h.eq_ignore_ascii_case("date")));
    let names: Vec<String> = header[skip..].to_vec();
    if names.is_empty() {
        return Err(Error::InvalidInput("no data columns".into()));
    }
    let mut rows: Vec<f64> = Vec::new();
    let mut n = 0;
    for (i, rec) in reader.records().enumerate() {
        let rec = rec?;
        let row = i + 1;
        if rec.len() != header.len() {
            return Err(Error::InvalidInput(format!(
                "row {row} has {} fields, expected {}",
                rec.len(),
                header.len()
            )));
        }
        for (name, field) in names.iter().zip(rec.iter().skip(skip)) {
            if field.is_empty() || field.eq_ignore_ascii_case("na") || field.eq_ignore_ascii_case("nan") {
                return Err(Error::MissingValue {
                    row,
                    column: name.clone(),
                });
            }
            let v: f64 = field.parse().map_err(|_| {
                Error::InvalidInput(format!("row {row}, column {name}: cannot parse {field:?}"))
            })?;
            rows.push(v);
        }
        n += 1;
    }
    Ok((names.clone(), DMatrix::from_row_slice(n, names.len(), &rows)))
}

/// Period-over-period returns; `log` selects log differences over simple
/// returns. Row `t` of the output is the change from price row `t` to
/// `t + 1`.
pub fn returns_matrix(prices: &DMatrix<f64>, names: &[String], log: bool) -> Result<DMatrix<f64>> {
    let (rows, p) = prices.shape();
    for j in 0..p {
        for t in 0..rows {
            let v = prices[(t, j)];
            if !(v > 0.0) || !v.is_finite() {
                return Err(Error::InvalidPrice {
                    row: t + 1,
                    symbol: names[j].clone(),
                });
            }
        }
    }
    if rows < 2 {
        return Err(Error::InsufficientData(format!(
            "need at least 2 price rows, got {rows}"
        )));
    }
    Ok(DMatrix::from_fn(rows - 1, p, |t, j| {
        let (a, b) = (prices[(t, j)], prices[(t + 1, j)]);
        if log {
            b.ln() - a.ln()
        } else {
            b / a - 1.0
        }
    }))
}

/// Scales columns to mean 0 and standard deviation 1 (divisor `n - 1`)
/// when `standardize`, and removes constant columns either way. Returns
/// the kept column indices.
pub fn standardize_columns(m: &DMatrix<f64>, standardize: bool) -> (DMatrix<f64>, Vec<usize>) {
    let n = m.nrows() as f64;
    let mut kept = Vec::new();
    let mut cols = Vec::new();
    for (j, col) in m.column_iter().enumerate() {
        let mean = col.iter().sum::<f64>() / n;
        let var = col.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
        let sd = var.sqrt();
        if !(sd > 1e-12 * mean.abs().max(1.0)) {
            continue;
        }
        kept.push(j);
        cols.push(if standardize {
            col.map(|v| (v - mean) / sd)
        } else {
            col.into_owned()
        });
    }
    let out = if cols.is_empty() {
        DMatrix::zeros(m.nrows(), 0)
    } else {
        DMatrix::from_columns(&cols)
    };
    (out, kept)
}

/// `symbol,group` pairs. Returns the map in file order.
pub fn read_group_map(path: &Path) -> Result<Vec<(String, String)>> {
    let mut reader = csv::ReaderBuilder::new().trim(csv::Trim::All).from_path(path)?;
    let mut out = Vec::new();
    for rec in reader.records() {
        let rec = rec?;
        if rec.len() < 2 {
            return Err(Error::InvalidInput(format!(
                "group map line {:?} needs symbol and group",
                rec.iter().collect::<Vec<_>>()
            )));
        }
        out.push((rec[0].to_string(), rec[1].to_string()));
    }
    Ok(out)
}

/// Groups of column indices, sorted by group name. Symbols mapped to `NA`
/// or absent from the map are returned separately.
pub fn build_groups(names: &[String], map: &[(String, String)]) -> (Vec<Group>, Vec<String>) {
    let lookup: BTreeMap<&str, &str> = map.iter().map(|(s, g)| (s.as_str(), g.as_str())).collect();
    let mut groups: BTreeMap<String, Vec<usize>> = BTreeMap::new();
    let mut ungrouped = Vec::new();
    for (j, name) in names.iter().enumerate() {
        match lookup.get(name.as_str()) {
            Some(&g) if g != NO_GROUP && !g.is_empty() => groups.entry(g.to_string()).or_default().push(j),
            _ => ungrouped.push(name.clone()),
        }
    }
    let groups = groups
        .into_iter()
        .map(|(name, members)| Group { name, members })
        .collect();
    (groups, ungrouped)
}

pub fn ingest_returns(spec: &ReturnsSpec) -> Result<Ingested> {
    let (names, prices) = read_table(&spec.price_csv)?;
    let returns = returns_matrix(&prices, &names, spec.log_returns)?;
    let (values, kept) = standardize_columns(&returns, spec.standardize);
    let dropped: Vec<String> = (0..names.len())
        .filter(|j| !kept.contains(j))
        .map(|j| names[j].clone())
        .collect();
    if !dropped.is_empty() {
        log::warn!("dropped {} constant return series: {}", dropped.len(), dropped.join(", "));
    }
    let kept_names: Vec<String> = kept.iter().map(|&j| names[j].clone()).collect();
    let data = Dataset::new(values)?.with_names(kept_names.clone())?;
    let (groups, ungrouped) = match &spec.group_map {
        Some(path) => build_groups(&kept_names, &read_group_map(path)?),
        None => (Vec::new(), Vec::new()),
    };
    if !ungrouped.is_empty() {
        log::warn!(
            "{} symbols have no group and are left out of block tests: {}",
            ungrouped.len(),
            ungrouped.join(", ")
        );
    }
    Ok(Ingested {
        data,
        groups,
        dropped,
        ungrouped,
    })
}
