//! Index-set mini-language:
//!
//! ```text
//! offdiag              all (j1, j2) with j1 != j2
//! zeros-of <file>      off-diagonal zeros of a p x p matrix CSV
//! band-outside <k>     |j1 - j2| > k
//! pairs <file>         CSV with columns j1,j2 (1-based)
//! block <h1> <h2>      group h1 x group h2 (1-based, needs groups)
//! ```

use std::path::{Path, PathBuf};

use crate::error::{Error, Result};
use crate::index_set::IndexSet;
use crate::inference::Group;

#[derive(Debug, Clone, PartialEq)]
pub enum IndexSpec {
    Offdiag,
    ZerosOf(PathBuf),
    BandOutside(usize),
    Pairs(PathBuf),
    Block(usize, usize),
}

impl std::str::FromStr for IndexSpec {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let words: Vec<&str> = s.split_whitespace().collect();
        let bad = || {
            Error::Config(format!(
                "cannot parse index set {s:?}; expected offdiag, zeros-of <file>, \
                 band-outside <k>, pairs <file>, or block <h1> <h2>"
            ))
        };
        let int = |w: &str| w.parse::<usize>().map_err(|_| bad());
        match words.as_slice() {
            ["offdiag"] => Ok(IndexSpec::Offdiag),
            ["zeros-of", f] => Ok(IndexSpec::ZerosOf(f.into())),
            ["band-outside", k] => Ok(IndexSpec::BandOutside(int(k)?)),
            ["pairs", f] => Ok(IndexSpec::Pairs(f.into())),
            ["block", a, b] => {
                let (a, b) = (int(a)?, int(b)?);
                if a == 0 || b == 0 {
                    return Err(Error::Config("block indices are 1-based".into()));
                }
                Ok(IndexSpec::Block(a - 1, b - 1))
            }
            _ => Err(bad()),
        }
    }
}

impl IndexSpec {
    pub fn resolve(&self, p: usize, groups: &[Group]) -> Result<IndexSet> {
        match self {
            IndexSpec::Offdiag => IndexSet::all_offdiag(p),
            IndexSpec::BandOutside(k) => IndexSet::band_outside(p, *k),
            IndexSpec::ZerosOf(path) => {
                let m = read_square(path, p)?;
                IndexSet::from_predicate(p, |a, b| m[a * p + b] == 0.0)
            }
            IndexSpec::Pairs(path) => IndexSet::new(read_pairs(path)?, p),
            IndexSpec::Block(a, b) => {
                if groups.is_empty() {
                    return Err(Error::Config("block sets need --groups".into()));
                }
                let members: Vec<Vec<usize>> = groups.iter().map(|g| g.members.clone()).collect();
                IndexSet::from_blocks(&members, *a, *b, p)
            }
        }
    }
}

/// Row-major `p x p` values; a header row is allowed.
fn read_square(path: &Path, p: usize) -> Result<Vec<f64>> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .trim(csv::Trim::All)
        .from_path(path)?;
    let mut values = Vec::with_capacity(p * p);
    for rec in reader.records() {
        let rec = rec?;
        let parsed: std::result::Result<Vec<f64>, _> = rec.iter().map(str::parse::<f64>).collect();
        match parsed {
            Ok(row) => values.extend(row),
            Err(_) if values.is_empty() => continue,
            Err(_) => {
                return Err(Error::InvalidInput(format!(
                    "{}: non-numeric entry",
                    path.display()
                )))
            }
        }
    }
    if values.len() != p * p {
        return Err(Error::ShapeError(format!(
            "{}: expected a {p} x {p} matrix, got {} values",
            path.display(),
            values.len()
        )));
    }
    Ok(values)
}

fn read_pairs(path: &Path) -> Result<Vec<(usize, usize)>> {
    let mut reader = csv::ReaderBuilder::new().trim(csv::Trim::All).from_path(path)?;
    let mut pairs = Vec::new();
    for (i, rec) in reader.records().enumerate() {
        let rec = rec?;
        let get = |k: usize| -> Result<usize> {
            rec.get(k)
                .and_then(|v| v.parse::<usize>().ok())
                .filter(|&v| v >= 1)
                .map(|v| v - 1)
                .ok_or_else(|| {
                    Error::InvalidInput(format!("{} line {}: expected j1,j2 >= 1", path.display(), i + 2))
                })
        };
        pairs.push((get(0)?, get(1)?));
    }
    Ok(pairs)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_specs() {
        assert_eq!("offdiag".parse::<IndexSpec>().unwrap(), IndexSpec::Offdiag);
        assert_eq!(
            "band-outside 2".parse::<IndexSpec>().unwrap(),
            IndexSpec::BandOutside(2)
        );
        assert_eq!("block 1 3".parse::<IndexSpec>().unwrap(), IndexSpec::Block(0, 2));
        assert!("block 0 1".parse::<IndexSpec>().is_err());
        assert!("diagonal".parse::<IndexSpec>().is_err());
    }

    #[test]
    fn resolves_files() {
        let dir = tempfile::tempdir().unwrap();
        let z = dir.path().join("z.csv");
        std::fs::write(&z, "a,b,c\n1,0.5,0\n0.5,1,0.2\n0,0.2,1\n").unwrap();
        let set = IndexSpec::ZerosOf(z).resolve(3, &[]).unwrap();
        assert_eq!(set.pairs(), &[(0, 2), (2, 0)]);

        let pf = dir.path().join("p.csv");
        std::fs::write(&pf, "j1,j2\n1,2\n3,1\n").unwrap();
        let set = IndexSpec::Pairs(pf).resolve(3, &[]).unwrap();
        assert_eq!(set.pairs(), &[(0, 1), (2, 0)]);
    }

    #[test]
    fn block_needs_groups() {
        assert!(IndexSpec::Block(0, 1).resolve(4, &[]).is_err());
        let groups = vec![
            Group {
                name: "a".into(),
                members: vec![0, 1],
            },
            Group {
                name: "b".into(),
                members: vec![2],
            },
        ];
        let set = IndexSpec::Block(0, 1).resolve(3, &groups).unwrap();
        assert_eq!(set.pairs(), &[(0, 2), (1, 2)]);
    }
}
