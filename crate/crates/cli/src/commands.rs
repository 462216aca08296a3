use std::ffi::OsString;
use std::fmt::Write as _;
use std::io::Write;
use std::path::{Path, PathBuf};

use circsos::boundary::{analyze, breakpoint_u0, breakpoint_v0, Breakpoint, BoundaryReport, ReportStatus};
use circsos::sos::{certify_pns_free, BundleStatus};
use circsos::{CirculantTensor, Vec3};
use clap::{Parser, Subcommand};
use serde::Serialize;

use crate::config::{OutputFormat, RunConfig};
use crate::table::{run_rows, write_csv, RowOutcome};
use crate::{exit, fixture, CliError};

#[derive(Debug, Parser)]
#[command(name = "circsos", version, about = "PSD and SOS thresholds of three-dimensional circulant tensors")]
pub struct Cli {
    /// Flat `key = value` settings file.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Worker threads for table mode.
    #[arg(long, global = true)]
    pub jobs: Option<usize>,
    #[arg(long, global = true, value_enum)]
    pub format: Option<OutputFormat>,
    /// Output file (CSV for `table`, JSON bundle for `certify`).
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Evaluate the form and `A x^(m-1)` at one point.
    #[command(allow_negative_numbers = true)]
    Eval {
        #[arg(long)]
        m: u32,
        #[arg(long)]
        d: f64,
        #[arg(long)]
        u: f64,
        #[arg(long)]
        c: f64,
        /// Point as `x1,x2,x3`.
        #[arg(long, value_parser = parse_point)]
        x: Vec3,
    },
    /// PSD threshold, SOS threshold and certificates at one `(m, u, c)`.
    #[command(allow_negative_numbers = true)]
    Analyze {
        #[arg(long)]
        m: u32,
        #[arg(long)]
        u: f64,
        #[arg(long)]
        c: f64,
        /// Skip the certificate bundle.
        #[arg(long)]
        no_certify: bool,
    },
    /// Recompute reference table rows and compare.
    Table {
        #[arg(long, value_parser = clap::value_parser!(u8).range(1..=9), required_unless_present = "all", conflicts_with = "all")]
        table: Option<u8>,
        #[arg(long)]
        all: bool,
        #[arg(long)]
        fixture: Option<PathBuf>,
    },
    /// Breakpoint formulas and their PSD verification.
    Breakpoints {
        #[arg(long)]
        m: u32,
    },
    /// Write the certificate bundle for one `(m, u, c)` to `--out`.
    #[command(allow_negative_numbers = true)]
    Certify {
        #[arg(long)]
        m: u32,
        #[arg(long)]
        u: f64,
        #[arg(long)]
        c: f64,
    },
}

fn parse_point(s: &str) -> Result<Vec3, String> {
    let parts: Vec<f64> = s
        .split(',')
        .map(|p| p.trim().parse::<f64>().map_err(|e| format!("`{p}`: {e}")))
        .collect::<Result<_, _>>()?;
    match parts.as_slice() {
        [a, b, c] if parts.iter().all(|v| v.is_finite()) => Ok(Vec3::new(*a, *b, *c)),
        _ => Err("expected three finite numbers `x1,x2,x3`".into()),
    }
}

/// Parses `args` (including the program name), runs the command and returns
/// the exit code.
pub fn run<I, T>(args: I, stdout: &mut dyn Write, stderr: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = e.exit_code();
            let text = e.render().to_string();
            let _ = if code == 0 { stdout.write_all(text.as_bytes()) } else { stderr.write_all(text.as_bytes()) };
            return if code == 0 { exit::OK } else { exit::USAGE };
        }
    };
    match execute(&cli, stdout) {
        Ok(code) => code,
        Err(e) => {
            let _ = writeln!(stderr, "error: {e}");
            e.exit_code()
        }
    }
}

pub fn resolve_config(cli: &Cli) -> Result<RunConfig, CliError> {
    let mut cfg = match &cli.config {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    };
    if let Some(s) = cli.seed {
        cfg.seed = s;
    }
    if let Some(j) = cli.jobs {
        cfg.jobs = j;
    }
    if let Some(f) = cli.format {
        cfg.format = f;
    }
    if let Some(o) = &cli.out {
        cfg.out = Some(o.clone());
    }
    cfg.validate()?;
    Ok(cfg)
}

fn check_order(m: u32, cfg: &RunConfig) -> Result<(), CliError> {
    if m > cfg.max_m {
        return Err(CliError::Usage(format!("m = {m} exceeds max_m = {}", cfg.max_m)));
    }
    Ok(())
}

fn execute(cli: &Cli, stdout: &mut dyn Write) -> Result<i32, CliError> {
    let cfg = resolve_config(cli)?;
    match &cli.command {
        Command::Eval { m, d, u, c, x } => cmd_eval(&cfg, *m, *d, *u, *c, x, stdout),
        Command::Analyze { m, u, c, no_certify } => cmd_analyze(&cfg, *m, *u, *c, !no_certify, stdout),
        Command::Table { table, all: _, fixture } => {
            let path = fixture.clone().unwrap_or_else(fixture::default_path);
            cmd_table(&cfg, *table, &path, stdout)
        }
        Command::Breakpoints { m } => cmd_breakpoints(&cfg, *m, stdout),
        Command::Certify { m, u, c } => cmd_certify(&cfg, *m, *u, *c, stdout),
    }
}

#[derive(Serialize)]
struct Envelope<'a, T: Serialize> {
    config: &'a RunConfig,
    #[serde(flatten)]
    body: T,
}

fn json<T: Serialize>(cfg: &RunConfig, body: T) -> Result<String, CliError> {
    Ok(serde_json::to_string_pretty(&Envelope { config: cfg, body })? + "\n")
}

/// Prints `text` and mirrors it to `--out` when set.
fn emit(cfg: &RunConfig, text: &str, stdout: &mut dyn Write) -> Result<(), CliError> {
    stdout.write_all(text.as_bytes())?;
    if let Some(p) = &cfg.out {
        std::fs::write(p, text)?;
    }
    Ok(())
}

#[derive(Serialize)]
struct EvalOutput {
    m: u32,
    d: f64,
    u: f64,
    c: f64,
    x: [f64; 3],
    f: f64,
    power: [f64; 3],
}

pub fn cmd_eval(cfg: &RunConfig, m: u32, d: f64, u: f64, c: f64, x: &Vec3, stdout: &mut dyn Write) -> Result<i32, CliError> {
    check_order(m, cfg)?;
    let t = CirculantTensor::new(m, d, u, c)?;
    let f = t.eval_form(x);
    let p = t.apply_power(x).0;
    let text = match cfg.format {
        OutputFormat::Pretty => format!("f(x) = {f}\nA x^(m-1) = [{}, {}, {}]\n", p[0], p[1], p[2]),
        OutputFormat::Csv => format!("f,p1,p2,p3\n{f},{},{},{}\n", p[0], p[1], p[2]),
        OutputFormat::Json => json(cfg, EvalOutput { m, d, u, c, x: x.0, f, power: p })?,
    };
    emit(cfg, &text, stdout)?;
    Ok(exit::OK)
}

#[derive(Serialize)]
struct ReportBody<'a> {
    report: &'a BoundaryReport,
}

fn opt(v: Option<f64>) -> String {
    v.map(|x| format!("{x:.12}")).unwrap_or_else(|| "n/a".into())
}

fn pretty_report(r: &BoundaryReport) -> String {
    let mut s = String::new();
    let _ = writeln!(s, "m = {}, u = {}, c = {}", r.m, r.u, r.c);
    let tag = |t: Option<String>| t.map(|t| format!(" ({t})")).unwrap_or_default();
    let json_tag = |v: Option<serde_json::Value>| v.and_then(|v| v.as_str().map(str::to_owned));
    let _ = writeln!(s, "N = {}{}", opt(r.n), tag(json_tag(r.n_provenance.map(|p| serde_json::to_value(p).unwrap_or_default()))));
    let _ = writeln!(s, "M = {}{}", opt(r.m_value), tag(json_tag(r.m_method.map(|p| serde_json::to_value(p).unwrap_or_default()))));
    let _ = writeln!(s, "gap = {}", r.gap.map(|g| format!("{g:e}")).unwrap_or_else(|| "n/a".into()));
    if let Some(bp) = &r.breakpoint {
        let _ = writeln!(s, "breakpoint {bp} (verified: {})", bp.verified);
    }
    if let Some(b) = &r.bundle {
        let x = b.minimizer.as_ref().map(|e| format!("{:?}", e.x.0)).unwrap_or_else(|| "none".into());
        let _ = writeln!(s, "certificate bundle: {:?}, minimizer {x}", b.status);
        for n in &b.notes {
            let _ = writeln!(s, "  note: {n}");
        }
    }
    for e in &r.errors {
        let _ = writeln!(s, "error: {e}");
    }
    let status = match r.status {
        ReportStatus::Confirmed => "CONFIRMED",
        ReportStatus::Unconfirmed => "UNCONFIRMED",
        ReportStatus::SolverFailure => "SOLVER_FAILURE",
    };
    let _ = writeln!(s, "status: {status}");
    s
}

pub fn cmd_analyze(cfg: &RunConfig, m: u32, u: f64, c: f64, certify: bool, stdout: &mut dyn Write) -> Result<i32, CliError> {
    check_order(m, cfg)?;
    let report = analyze(m, u, c, &cfg.analysis(certify))?;
    let text = match cfg.format {
        OutputFormat::Pretty => pretty_report(&report),
        OutputFormat::Json => json(cfg, ReportBody { report: &report })?,
        OutputFormat::Csv => format!(
            "m,c,u,M,N,gap,confirmed\n{},{},{},{},{},{},{}\n",
            m,
            c,
            u,
            report.m_value.map(|v| v.to_string()).unwrap_or_default(),
            report.n.map(|v| v.to_string()).unwrap_or_default(),
            report.gap.map(|v| v.to_string()).unwrap_or_default(),
            report.status == ReportStatus::Confirmed
        ),
    };
    emit(cfg, &text, stdout)?;
    Ok(match report.status {
        ReportStatus::Confirmed => exit::OK,
        ReportStatus::Unconfirmed => exit::UNCONFIRMED,
        ReportStatus::SolverFailure => exit::SOLVER,
    })
}

#[derive(Serialize)]
struct TableBody<'a> {
    fixture: &'a Path,
    fixture_sha256: &'a str,
    rows: &'a [RowOutcome],
    all_pass: bool,
}

pub fn cmd_table(cfg: &RunConfig, table: Option<u8>, path: &Path, stdout: &mut dyn Write) -> Result<i32, CliError> {
    let fx = fixture::load(path)?;
    let rows: Vec<_> = fx.rows.iter().filter(|r| table.is_none_or(|t| r.table_id == t)).cloned().collect();
    let outcomes = run_rows(&rows, &cfg.analysis(false), cfg.jobs)?;
    let all_pass = outcomes.iter().all(|o| o.pass);

    let mut csv_bytes = Vec::new();
    write_csv(&outcomes, &mut csv_bytes)?;
    match cfg.format {
        OutputFormat::Csv => stdout.write_all(&csv_bytes)?,
        OutputFormat::Json => stdout.write_all(
            json(cfg, TableBody { fixture: &fx.path, fixture_sha256: &fx.sha256, rows: &outcomes, all_pass })?.as_bytes(),
        )?,
        OutputFormat::Pretty => {
            let mut s = String::new();
            for o in &outcomes {
                let _ = writeln!(
                    s,
                    "table {} m={:<2} c={:>2} u={:<12} M={:<20} N={:<20} {}",
                    o.row.table_id,
                    o.row.m,
                    o.row.c,
                    o.row.u,
                    opt(o.m_value),
                    opt(o.n),
                    if o.pass { "pass" } else { "FAIL" }
                );
                for f in &o.failures {
                    let _ = writeln!(s, "    {f}");
                }
            }
            let passed = outcomes.iter().filter(|o| o.pass).count();
            let _ = writeln!(s, "{passed}/{} rows pass (fixture sha256 {})", outcomes.len(), fx.sha256);
            stdout.write_all(s.as_bytes())?;
        }
    }
    if let Some(p) = &cfg.out {
        std::fs::write(p, &csv_bytes)?;
    }
    Ok(if all_pass { exit::OK } else { exit::FAILURE })
}

#[derive(Serialize)]
struct BreakpointBody<'a> {
    u0: &'a Breakpoint,
    v0: &'a Breakpoint,
}

pub fn cmd_breakpoints(cfg: &RunConfig, m: u32, stdout: &mut dyn Write) -> Result<i32, CliError> {
    check_order(m, cfg)?;
    if !m.is_multiple_of(2) || m < 4 {
        return Err(CliError::Usage(format!("m = {m} must be even and at least 4")));
    }
    let eigen = cfg.analysis(false).sos.for_order(m).eigen;
    let u0 = breakpoint_u0(m, &eigen);
    let v0 = breakpoint_v0(m, &eigen);
    let text = match cfg.format {
        OutputFormat::Json => json(cfg, BreakpointBody { u0: &u0, v0: &v0 })?,
        OutputFormat::Csv => {
            let mut s = String::from("kind,m,exact,value,verified,lambda,lambda_residual\n");
            for (k, b) in [("u0", &u0), ("v0", &v0)] {
                let _ = writeln!(
                    s,
                    "{k},{m},{},{},{},{},{}",
                    b.rational(),
                    b.value,
                    b.verified,
                    b.lambda.map(|v| v.to_string()).unwrap_or_default(),
                    b.lambda_residual.map(|v| v.to_string()).unwrap_or_default()
                );
            }
            s
        }
        OutputFormat::Pretty => {
            let mut s = String::new();
            for b in [&u0, &v0] {
                let _ = writeln!(
                    s,
                    "{b}  verified: {}  lambda_min: {}  residual: {}",
                    b.verified,
                    b.lambda.map(|v| format!("{v:e}")).unwrap_or_else(|| "n/a".into()),
                    b.lambda_residual.map(|v| format!("{v:e}")).unwrap_or_else(|| "n/a".into())
                );
                if let Some(n) = &b.note {
                    let _ = writeln!(s, "  note: {n}");
                }
            }
            s
        }
    };
    emit(cfg, &text, stdout)?;
    Ok(if u0.verified && v0.verified { exit::OK } else { exit::UNCONFIRMED })
}

pub fn cmd_certify(cfg: &RunConfig, m: u32, u: f64, c: f64, stdout: &mut dyn Write) -> Result<i32, CliError> {
    check_order(m, cfg)?;
    let Some(out) = &cfg.out else {
        return Err(CliError::Usage("certify needs --out <path>".into()));
    };
    let sos = cfg.analysis(true).sos.for_order(m);
    let bundle = certify_pns_free(m, u, c, &sos)?;

    #[derive(Serialize)]
    struct Body<'a> {
        bundle: &'a circsos::sos::CertificateBundle,
    }
    std::fs::write(out, json(cfg, Body { bundle: &bundle })?)?;
    let x = bundle.minimizer.as_ref().map(|e| format!("{:?}", e.x.0)).unwrap_or_else(|| "none".into());
    let _ = writeln!(
        stdout,
        "M = {}  minimizer {x}  status {:?}  written to {}",
        bundle.critical_value,
        bundle.status,
        out.display()
    );
    for n in &bundle.notes {
        let _ = writeln!(stdout, "note: {n}");
    }
    Ok(match bundle.status {
        BundleStatus::Confirmed => exit::OK,
        BundleStatus::Unconfirmed => exit::UNCONFIRMED,
    })
}
