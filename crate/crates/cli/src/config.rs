use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use circsos::boundary::AnalysisConfig;
use circsos::heig::SolverConfig;
use circsos::sdp::SdpOptions;
use circsos::sos::SosConfig;
use serde::{Deserialize, Serialize};

use crate::CliError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum OutputFormat {
    #[default]
    Pretty,
    Json,
    Csv,
}

impl FromStr for OutputFormat {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "pretty" => Ok(OutputFormat::Pretty),
            "json" => Ok(OutputFormat::Json),
            "csv" => Ok(OutputFormat::Csv),
            _ => Err(format!("unknown format `{s}` (expected pretty, json or csv)")),
        }
    }
}

impl fmt::Display for OutputFormat {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            OutputFormat::Pretty => "pretty",
            OutputFormat::Json => "json",
            OutputFormat::Csv => "csv",
        })
    }
}

/// Fully resolved run settings. Defaults, then the config file, then flags.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub tol_d: f64,
    pub eigen_residual: f64,
    pub sdp_tol: f64,
    pub sos_tol: f64,
    pub n_starts: usize,
    pub seed: u64,
    pub max_m: u32,
    pub confirm_abs: f64,
    pub confirm_rel: f64,
    pub jobs: usize,
    pub format: OutputFormat,
    pub out: Option<PathBuf>,
}

impl Default for RunConfig {
    fn default() -> Self {
        let eigen = SolverConfig::default();
        let sos = SosConfig::default();
        let analysis = AnalysisConfig::default();
        RunConfig {
            tol_d: sos.tol_d,
            eigen_residual: eigen.residual_tol,
            sdp_tol: sos.sdp.tol,
            sos_tol: sos.tol,
            n_starts: eigen.n_starts,
            seed: eigen.seed,
            max_m: circsos::tensor::MAX_ORDER,
            confirm_abs: analysis.confirm_abs,
            confirm_rel: analysis.confirm_rel,
            jobs: 1,
            format: OutputFormat::Pretty,
            out: None,
        }
    }
}

pub const CONFIG_KEYS: &[&str] = &[
    "tol_d",
    "eigen_residual",
    "sdp_tol",
    "sos_tol",
    "n_starts",
    "seed",
    "max_m",
    "confirm_abs",
    "confirm_rel",
    "jobs",
    "format",
    "out",
];

fn parse_value<T: FromStr>(key: &str, value: &str, line: usize) -> Result<T, CliError>
where
    T::Err: fmt::Display,
{
    value.parse().map_err(|e| CliError::Config(format!("line {line}: bad value for `{key}`: {e}")))
}

impl RunConfig {
    /// Applies `key = value` lines. Blank lines and `#` comments are skipped;
    /// unknown keys are errors.
    pub fn apply_text(&mut self, text: &str) -> Result<(), CliError> {
        for (i, raw) in text.lines().enumerate() {
            let line = i + 1;
            let content = raw.split('#').next().unwrap_or("").trim();
            if content.is_empty() {
                continue;
            }
            let (key, value) = content
                .split_once('=')
                .ok_or_else(|| CliError::Config(format!("line {line}: expected `key = value`")))?;
            let (key, value) = (key.trim(), value.trim());
            match key {
                "tol_d" => self.tol_d = parse_value(key, value, line)?,
                "eigen_residual" => self.eigen_residual = parse_value(key, value, line)?,
                "sdp_tol" => self.sdp_tol = parse_value(key, value, line)?,
                "sos_tol" => self.sos_tol = parse_value(key, value, line)?,
                "n_starts" => self.n_starts = parse_value(key, value, line)?,
                "seed" => self.seed = parse_value(key, value, line)?,
                "max_m" => self.max_m = parse_value(key, value, line)?,
                "confirm_abs" => self.confirm_abs = parse_value(key, value, line)?,
                "confirm_rel" => self.confirm_rel = parse_value(key, value, line)?,
                "jobs" => self.jobs = parse_value(key, value, line)?,
                "format" => self.format = parse_value(key, value, line)?,
                "out" => self.out = Some(PathBuf::from(value)),
                _ => {
                    return Err(CliError::Config(format!(
                        "line {line}: unknown key `{key}` (known: {})",
                        CONFIG_KEYS.join(", ")
                    )))
                }
            }
        }
        self.validate()
    }

    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
        let mut cfg = RunConfig::default();
        cfg.apply_text(&text)?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<(), CliError> {
        let positive = [
            ("tol_d", self.tol_d),
            ("eigen_residual", self.eigen_residual),
            ("sdp_tol", self.sdp_tol),
            ("sos_tol", self.sos_tol),
            ("confirm_abs", self.confirm_abs),
        ];
        for (k, v) in positive {
            if !(v > 0.0 && v.is_finite()) {
                return Err(CliError::Config(format!("`{k}` must be positive")));
            }
        }
        if !(self.confirm_rel >= 0.0 && self.confirm_rel.is_finite()) {
            return Err(CliError::Config("`confirm_rel` must be non-negative".into()));
        }
        if self.n_starts == 0 || self.jobs == 0 {
            return Err(CliError::Config("`n_starts` and `jobs` must be at least 1".into()));
        }
        if self.max_m < 4 || self.max_m > circsos::tensor::MAX_ORDER {
            return Err(CliError::Config(format!("`max_m` must lie in 4..={}", circsos::tensor::MAX_ORDER)));
        }
        Ok(())
    }

    pub fn analysis(&self, certify: bool) -> AnalysisConfig {
        let eigen = SolverConfig {
            n_starts: self.n_starts,
            residual_tol: self.eigen_residual,
            seed: self.seed,
            ..SolverConfig::default()
        };
        let sos = SosConfig {
            sdp: SdpOptions { tol: self.sdp_tol, ..SdpOptions::default() },
            tol: self.sos_tol,
            tol_d: self.tol_d,
            eigen,
            ..SosConfig::default()
        };
        AnalysisConfig { sos, confirm_abs: self.confirm_abs, confirm_rel: self.confirm_rel, certify }
    }
}
