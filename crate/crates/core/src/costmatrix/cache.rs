//! Versioned text cache for cost matrices.
//!
//! ```text
//! mhcloc-costmatrix 1
//! kind distance_m
//! n 3
//! provider synthetic(speed_mps=5.5,wait_s=0)
//! departure 2018-12-10T10:00:00
//! values
//! 0 1523.5 880.25
//! ...
//! missing
//! 0 0 1
//! ...
//! end
//! ```
//!
//! Floats use Rust's shortest round-trip formatting, so a load reproduces the
//! saved bits exactly.

use std::fmt::Write as _;
use std::path::Path;

use chrono::NaiveDateTime;

use super::{CostKind, CostMatrix};
use crate::error::{Error, Result};

pub const CACHE_MAGIC: &str = "mhcloc-costmatrix";
pub const CACHE_VERSION: u32 = 1;
const DATETIME_FORMAT: &str = "%Y-%m-%dT%H:%M:%S";

pub fn save_matrix(m: &CostMatrix, path: &Path) -> Result<()> {
    let mut s = String::new();
    let _ = writeln!(s, "{CACHE_MAGIC} {CACHE_VERSION}");
    let _ = writeln!(s, "kind {}", m.kind);
    let _ = writeln!(s, "n {}", m.n);
    let _ = writeln!(s, "provider {}", m.provider);
    let _ = writeln!(s, "departure {}", m.departure.format(DATETIME_FORMAT));
    s.push_str("values\n");
    for i in 0..m.n {
        let row: Vec<String> = (0..m.n).map(|j| m.get(i, j).to_string()).collect();
        s.push_str(&row.join(" "));
        s.push('\n');
    }
    s.push_str("missing\n");
    for i in 0..m.n {
        let row: Vec<&str> = (0..m.n).map(|j| if m.is_missing(i, j) { "1" } else { "0" }).collect();
        s.push_str(&row.join(" "));
        s.push('\n');
    }
    s.push_str("end\n");
    std::fs::write(path, s).map_err(|e| Error::io(path, e))
}

pub fn load_matrix(path: &Path) -> Result<CostMatrix> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let corrupt = |message: String| Error::Corrupt {
        path: path.into(),
        message,
    };
    let mut lines = text.lines();
    let mut next = |what: &str| lines.next().ok_or_else(|| corrupt(format!("truncated before {what}")));

    let header = next("header")?;
    let version = header
        .strip_prefix(CACHE_MAGIC)
        .map(str::trim)
        .ok_or_else(|| corrupt(format!("not a cost-matrix cache (header {header:?})")))?;
    if version != CACHE_VERSION.to_string() {
        return Err(Error::Version {
            path: path.into(),
            found: version.to_owned(),
            expected: CACHE_VERSION.to_string(),
        });
    }
    let field = |line: &str, key: &str| -> Result<String> {
        line.strip_prefix(key)
            .and_then(|r| r.strip_prefix(' '))
            .map(str::to_owned)
            .ok_or_else(|| corrupt(format!("expected `{key} ...`, found {line:?}")))
    };
    let kind_s = field(next("kind")?, "kind")?;
    let kind = CostKind::parse(&kind_s).ok_or_else(|| corrupt(format!("unknown kind {kind_s:?}")))?;
    let n: usize = field(next("n")?, "n")?.parse().map_err(|_| corrupt("bad n".into()))?;
    let provider = field(next("provider")?, "provider")?;
    let departure_s = field(next("departure")?, "departure")?;
    let departure = NaiveDateTime::parse_from_str(&departure_s, DATETIME_FORMAT)
        .map_err(|_| corrupt(format!("bad departure {departure_s:?}")))?;

    let mut m = CostMatrix::new(kind, n, provider, departure);
    if next("values")? != "values" {
        return Err(corrupt("missing `values` section".into()));
    }
    for i in 0..n {
        let line = next("value rows")?;
        let row: Vec<f64> = line
            .split(' ')
            .map(str::parse)
            .collect::<std::result::Result<_, _>>()
            .map_err(|_| corrupt(format!("bad value row {i}")))?;
        if row.len() != n {
            return Err(corrupt(format!("value row {i} has {} entries, expected {n}", row.len())));
        }
        m.values[i * n..(i + 1) * n].copy_from_slice(&row);
    }
    if next("missing")? != "missing" {
        return Err(corrupt("missing `missing` section".into()));
    }
    for i in 0..n {
        let line = next("mask rows")?;
        let row: Vec<bool> = line
            .split(' ')
            .map(|t| match t {
                "0" => Ok(false),
                "1" => Ok(true),
                _ => Err(()),
            })
            .collect::<std::result::Result<_, _>>()
            .map_err(|_| corrupt(format!("bad mask row {i}")))?;
        if row.len() != n {
            return Err(corrupt(format!("mask row {i} has {} entries, expected {n}", row.len())));
        }
        m.missing[i * n..(i + 1) * n].copy_from_slice(&row);
    }
    if next("end marker")? != "end" {
        return Err(corrupt("missing end marker".into()));
    }
    Ok(m)
}

#[cfg(test)]
mod tests {
    use super::*;
    use chrono::NaiveDate;
    use proptest::prelude::*;

    fn sample() -> CostMatrix {
        let dep = NaiveDate::from_ymd_opt(2018, 12, 10).unwrap().and_hms_opt(10, 0, 0).unwrap();
        let mut m = CostMatrix::from_rows(
            CostKind::DurationS,
            &[vec![0.0, 1.0 / 3.0, 2.5e7], vec![0.1 + 0.2, 0.0, 7.0], vec![1e-300, 42.0, 0.0]],
            "synthetic(speed_mps=5.5,wait_s=600)",
            dep,
        )
        .unwrap();
        m.missing[5] = true;
        m
    }

    #[test]
    fn round_trip_is_bit_exact() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("m.cmx");
        let m = sample();
        save_matrix(&m, &p).unwrap();
        let back = load_matrix(&p).unwrap();
        assert_eq!(back, m);
        assert!(back.values.iter().zip(&m.values).all(|(a, b)| a.to_bits() == b.to_bits()));
    }

    #[test]
    fn truncated_file_is_corrupt() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("m.cmx");
        save_matrix(&sample(), &p).unwrap();
        let text = std::fs::read_to_string(&p).unwrap();
        for cut in [10, text.len() / 2, text.len() - 4] {
            std::fs::write(&p, &text[..cut]).unwrap();
            assert!(matches!(load_matrix(&p), Err(Error::Corrupt { .. })), "cut at {cut}");
        }
    }

    #[test]
    fn version_mismatch_is_explicit() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("m.cmx");
        save_matrix(&sample(), &p).unwrap();
        let text = std::fs::read_to_string(&p).unwrap().replacen("mhcloc-costmatrix 1", "mhcloc-costmatrix 2", 1);
        std::fs::write(&p, text).unwrap();
        assert!(matches!(load_matrix(&p), Err(Error::Version { .. })));
    }

    #[test]
    fn dimension_checked_at_use_site() {
        let m = sample();
        assert!(m.expect_dim(3).is_ok());
        assert!(matches!(m.expect_dim(4), Err(Error::Dimension { expected: 4, found: 3 })));
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(32))]
        #[test]
        fn arbitrary_matrices_round_trip(
            n in 1usize..6,
            seed in proptest::collection::vec((0.0f64..1e9, any::<bool>()), 36),
        ) {
            let dep = NaiveDate::from_ymd_opt(2020, 1, 1).unwrap().and_hms_opt(0, 0, 0).unwrap();
            let mut m = CostMatrix::new(CostKind::DistanceM, n, "p", dep);
            for k in 0..n * n {
                if k % (n + 1) != 0 {
                    m.values[k] = seed[k].0;
                    m.missing[k] = seed[k].1;
                }
            }
            let dir = tempfile::tempdir().unwrap();
            let p = dir.path().join("m.cmx");
            save_matrix(&m, &p).unwrap();
            prop_assert_eq!(load_matrix(&p).unwrap(), m);
        }
    }
}
