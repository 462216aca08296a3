use std::path::{Path, PathBuf};

use num_rational::Ratio;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::CliError;

/// How a row is judged.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Check {
    /// `N` is a rational identity; checked at `EXACT_TOL`.
    Exact,
    /// Solver output; checked at the table tolerance.
    Numeric,
    /// Printed values are internally inconsistent; looser absolute floor.
    Flagged,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FixtureRow {
    pub table_id: u8,
    pub m: u32,
    /// Exact rational (`45/16`) or decimal string.
    pub u: String,
    pub c: i8,
    #[serde(rename = "expected_M")]
    pub expected_m: String,
    #[serde(rename = "expected_N")]
    pub expected_n: String,
    pub check: Check,
}

impl FixtureRow {
    pub fn u_exact(&self) -> Result<Ratio<i128>, CliError> {
        parse_exact(&self.u)
    }

    pub fn u_value(&self) -> Result<f64, CliError> {
        let r = self.u_exact()?;
        Ok(*r.numer() as f64 / *r.denom() as f64)
    }

    pub fn expected_m_value(&self) -> Result<f64, CliError> {
        parse_f64(&self.expected_m)
    }

    pub fn expected_n_value(&self) -> Result<f64, CliError> {
        parse_f64(&self.expected_n)
    }
}

fn parse_f64(s: &str) -> Result<f64, CliError> {
    s.trim().parse().map_err(|e| CliError::Fixture(format!("bad number `{s}`: {e}")))
}

/// Parses `p/q`, an integer, or a finite decimal into an exact rational.
pub fn parse_exact(s: &str) -> Result<Ratio<i128>, CliError> {
    let s = s.trim();
    let bad = || CliError::Fixture(format!("bad exact number `{s}`"));
    if let Some((p, q)) = s.split_once('/') {
        let p: i128 = p.trim().parse().map_err(|_| bad())?;
        let q: i128 = q.trim().parse().map_err(|_| bad())?;
        if q == 0 {
            return Err(bad());
        }
        return Ok(Ratio::new(p, q));
    }
    let (neg, body) = match s.strip_prefix('-') {
        Some(rest) => (true, rest),
        None => (false, s),
    };
    let (int, frac) = body.split_once('.').unwrap_or((body, ""));
    if int.is_empty() && frac.is_empty() || !int.chars().chain(frac.chars()).all(|c| c.is_ascii_digit()) {
        return Err(bad());
    }
    let digits = format!("{int}{frac}");
    let num: i128 = digits.parse().map_err(|_| bad())?;
    let den = 10i128.checked_pow(frac.len() as u32).ok_or_else(bad)?;
    let r = Ratio::new(num, den);
    Ok(if neg { -r } else { r })
}

#[derive(Debug, Clone, PartialEq)]
pub struct Fixture {
    pub path: PathBuf,
    pub sha256: String,
    pub rows: Vec<FixtureRow>,
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}

/// Fixture shipped with the crate.
pub fn default_path() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("fixtures").join("tables.csv")
}

pub fn load(path: &Path) -> Result<Fixture, CliError> {
    let bytes = std::fs::read(path).map_err(|e| CliError::FixtureMissing(format!("{}: {e}", path.display())))?;
    let mut rdr = csv::Reader::from_reader(bytes.as_slice());
    let mut rows = Vec::new();
    for (i, rec) in rdr.deserialize().enumerate() {
        let row: FixtureRow = rec.map_err(|e| CliError::Fixture(format!("row {}: {e}", i + 1)))?;
        if !(1..=9).contains(&row.table_id) || ![-1, 0, 1].contains(&row.c) {
            return Err(CliError::Fixture(format!("row {}: table or c out of range", i + 1)));
        }
        row.u_exact()?;
        row.expected_m_value()?;
        row.expected_n_value()?;
        rows.push(row);
    }
    Ok(Fixture { path: path.to_path_buf(), sha256: sha256_hex(&bytes), rows })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exact_parsing() {
        assert_eq!(parse_exact("45/16").unwrap(), Ratio::new(45, 16));
        assert_eq!(parse_exact("-70/11").unwrap(), Ratio::new(-70, 11));
        assert_eq!(parse_exact("0.1").unwrap(), Ratio::new(1, 10));
        assert_eq!(parse_exact("-40").unwrap(), Ratio::from_integer(-40));
        assert!(parse_exact("1/0").is_err());
        assert!(parse_exact("1e3").is_err());
        assert!(parse_exact("").is_err());
    }
}
