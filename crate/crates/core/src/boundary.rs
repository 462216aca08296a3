//! The PSD threshold `N_c(u)`, the breakpoints where it leaves its linear
//! branch, and reports that put the PSD and SOS thresholds side by side.

use std::fmt;

use num_rational::Ratio;
use num_traits::{Signed, ToPrimitive};
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::heig::{self, EigenResult, SolverConfig};
use crate::sos::{self, CertificateBundle, MMethod, SosConfig};
use crate::tensor::{
    pow2, pow3, require_even_order, three_index_count, two_index_count, CirculantTensor,
};

/// `A = alpha * A(m, d', u', c')` with `c'` in `{-1, 0, 1}`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Normalized {
    pub scale: f64,
    pub tensor: CirculantTensor,
}

pub fn normalize(t: &CirculantTensor) -> Normalized {
    let scale = if t.c != 0.0 { t.c.abs() } else { 1.0 };
    let sign = if t.c > 0.0 {
        1.0
    } else if t.c < 0.0 {
        -1.0
    } else {
        0.0
    };
    let tensor = CirculantTensor { m: t.m, d: t.d / scale, u: t.u / scale, c: sign };
    Normalized { scale, tensor }
}

/// Which closed form or eigenvalue relation produced `N`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum NProvenance {
    /// `u, c <= 0`: the off-diagonal absolute row sum.
    RowSum,
    /// `u = c > 0`: the value `u`.
    EqualEntries,
    /// `c = 0, u > 0`: `u` times the unit threshold `-lambda_min(m, 0, 1, 0)`.
    ScaledUnit,
    /// `c = -1` at or below the breakpoint: linear in `u`.
    LinearMinusOne,
    /// `c = -1` above the breakpoint: linear part minus `phi(u)`.
    PhiBranch,
    /// `c = 1` at or below the breakpoint: linear in `u`.
    LinearPlusOne,
    /// `c = 1` above the breakpoint: linear part minus `psi(u)`.
    PsiBranch,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NValue {
    pub value: f64,
    pub provenance: NProvenance,
    /// Normalization factor `|c|` applied before dispatch (1 if none).
    pub scale: f64,
    /// Breakpoint consulted, if any.
    pub breakpoint: Option<f64>,
    /// Eigen evidence for the non-closed-form branches.
    pub eigen: Option<EigenResult>,
}

/// `3^(m-1) - 2^m + 1 - u (2^m - 2)`: the diagonal that makes `A(m, d, u, -1)`
/// equal to `B - u T`.
pub fn linear_minus_one(m: u32, u: f64) -> f64 {
    three_index_count(m) as f64 - u * two_index_count(m) as f64
}

/// `-(3^(m-1) - 2^m + 1) - u (2^m - 2)`: the diagonal that makes
/// `A(m, d, u, 1)` equal to `-u T - B`.
pub fn linear_plus_one(m: u32, u: f64) -> f64 {
    -(three_index_count(m) as f64) - u * two_index_count(m) as f64
}

/// Level below which a computed `phi`/`psi` counts as zero.
fn zero_level(t: &CirculantTensor, cfg: &SolverConfig) -> f64 {
    cfg.residual_tol * heig::tensor_scale(t)
}

/// `N_c(u)`, the smallest `d` making `A(m, d, u, c)` PSD.
pub fn n_value(m: u32, u: f64, c: f64, cfg: &SolverConfig) -> Result<NValue> {
    require_even_order(m)?;
    if m < 4 {
        return Err(invalid("order must be at least 4"));
    }
    if !(u.is_finite() && c.is_finite()) {
        return Err(invalid("u and c must be finite"));
    }
    let plain = |value, provenance| NValue { value, provenance, scale: 1.0, breakpoint: None, eigen: None };
    if u <= 0.0 && c <= 0.0 {
        let v = -u * two_index_count(m) as f64 - c * three_index_count(m) as f64;
        return Ok(plain(v, NProvenance::RowSum));
    }
    if u == c && u > 0.0 {
        return Ok(plain(u, NProvenance::EqualEntries));
    }
    if c == 0.0 {
        let r = heig::lambda_min(&CirculantTensor::new(m, 0.0, 1.0, 0.0)?, cfg)?;
        return Ok(NValue {
            value: -u * r.lambda,
            provenance: NProvenance::ScaledUnit,
            scale: 1.0,
            breakpoint: None,
            eigen: Some(r),
        });
    }
    let alpha = c.abs();
    let un = u / alpha;
    let mut out = if c < 0.0 { n_minus_one(m, un, cfg)? } else { n_plus_one(m, un, cfg)? };
    out.value *= alpha;
    out.scale = alpha;
    Ok(out)
}

fn n_minus_one(m: u32, u: f64, cfg: &SolverConfig) -> Result<NValue> {
    let bp = breakpoint_u0(m, cfg);
    let lin = linear_minus_one(m, u);
    branch(m, u, lin, &bp, cfg, NProvenance::LinearMinusOne, NProvenance::PhiBranch, heig::phi)
}

fn n_plus_one(m: u32, u: f64, cfg: &SolverConfig) -> Result<NValue> {
    let bp = breakpoint_v0(m, cfg);
    let lin = linear_plus_one(m, u);
    branch(m, u, lin, &bp, cfg, NProvenance::LinearPlusOne, NProvenance::PsiBranch, heig::psi)
}

#[allow(clippy::too_many_arguments)]
fn branch(
    m: u32,
    u: f64,
    lin: f64,
    bp: &Breakpoint,
    cfg: &SolverConfig,
    linear: NProvenance,
    shifted: NProvenance,
    shift: fn(u32, f64, &SolverConfig) -> Result<EigenResult>,
) -> Result<NValue> {
    let at = Some(bp.value);
    // The formula value bounds the true breakpoint from above, so it can be
    // used as the switch only once verified.
    if u <= bp.value && bp.verified {
        return Ok(NValue { value: lin, provenance: linear, scale: 1.0, breakpoint: at, eigen: None });
    }
    let r = shift(m, u, cfg)?;
    let tensor = CirculantTensor::new(m, lin, u, if linear == NProvenance::LinearMinusOne { -1.0 } else { 1.0 })?;
    if u <= bp.value && r.lambda.abs() <= zero_level(&tensor, cfg) {
        return Ok(NValue { value: lin, provenance: linear, scale: 1.0, breakpoint: at, eigen: Some(r) });
    }
    Ok(NValue { value: lin - r.lambda, provenance: shifted, scale: 1.0, breakpoint: at, eigen: Some(r) })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BreakpointKind {
    U0,
    V0,
}

/// A breakpoint from its closed formula plus the PSD check at it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Breakpoint {
    pub kind: BreakpointKind,
    pub m: u32,
    pub numerator: i128,
    pub denominator: i128,
    pub value: f64,
    pub verified: bool,
    /// Smallest H-eigenvalue of the boundary tensor.
    pub lambda: Option<f64>,
    pub lambda_residual: Option<f64>,
    pub note: Option<String>,
}

impl Breakpoint {
    pub fn rational(&self) -> Ratio<i128> {
        Ratio::new(self.numerator, self.denominator)
    }
}

impl fmt::Display for Breakpoint {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let name = match self.kind {
            BreakpointKind::U0 => "u0",
            BreakpointKind::V0 => "v0",
        };
        write!(f, "{name} = {} = {:.15}", self.rational(), self.value)
    }
}

/// `(3^(m-1) + 1) / 2^m - 1`.
pub fn u0_formula(m: u32) -> Ratio<i128> {
    Ratio::new(pow3(m - 1) + 1, pow2(m)) - Ratio::from_integer(1)
}

/// `1 - 3^(m-1) / (2^(m-1) + 1)`.
pub fn v0_formula(m: u32) -> Ratio<i128> {
    Ratio::from_integer(1) - Ratio::new(pow3(m - 1), pow2(m - 1) + 1)
}

/// Absolute level for the PSD check at a breakpoint.
pub const BREAKPOINT_TOL: f64 = 1e-7;

fn breakpoint(kind: BreakpointKind, m: u32, cfg: &SolverConfig) -> Breakpoint {
    let r = match kind {
        BreakpointKind::U0 => u0_formula(m),
        BreakpointKind::V0 => v0_formula(m),
    };
    let value = r.to_f64().unwrap_or(f64::NAN);
    let mut bp = Breakpoint {
        kind,
        m,
        numerator: *r.numer(),
        denominator: *r.denom(),
        value,
        verified: false,
        lambda: None,
        lambda_residual: None,
        note: None,
    };
    if !m.is_multiple_of(2) || m < 4 {
        bp.note = Some("order must be even and at least 4".into());
        return bp;
    }
    let res = match kind {
        BreakpointKind::U0 => heig::phi(m, value, cfg),
        BreakpointKind::V0 => heig::psi(m, value, cfg),
    };
    match res {
        Ok(e) => {
            bp.lambda = Some(e.lambda);
            bp.lambda_residual = Some(e.residual);
            bp.verified = e.lambda >= -BREAKPOINT_TOL;
        }
        Err(Error::SolverFailure { best }) => {
            bp.lambda = Some(best.lambda);
            bp.lambda_residual = Some(best.residual);
            bp.note = Some("eigen solver did not converge".into());
        }
        Err(e) => bp.note = Some(e.to_string()),
    }
    bp
}

pub fn breakpoint_u0(m: u32, cfg: &SolverConfig) -> Breakpoint {
    breakpoint(BreakpointKind::U0, m, cfg)
}

pub fn breakpoint_v0(m: u32, cfg: &SolverConfig) -> Breakpoint {
    breakpoint(BreakpointKind::V0, m, cfg)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AnalysisConfig {
    pub sos: SosConfig,
    /// `|M - N| <= max(confirm_abs, confirm_rel * max(|M|, 1))` confirms.
    pub confirm_abs: f64,
    pub confirm_rel: f64,
    /// Also build the certificate bundle.
    pub certify: bool,
}

impl Default for AnalysisConfig {
    fn default() -> Self {
        AnalysisConfig { sos: SosConfig::default(), confirm_abs: 1e-5, confirm_rel: 1e-5, certify: true }
    }
}

impl AnalysisConfig {
    pub fn confirm_tol(&self, m_value: f64) -> f64 {
        self.confirm_abs.max(self.confirm_rel * m_value.abs().max(1.0))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum ReportStatus {
    Confirmed,
    Unconfirmed,
    SolverFailure,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundaryReport {
    pub m: u32,
    pub u: f64,
    pub c: f64,
    pub n: Option<f64>,
    pub n_provenance: Option<NProvenance>,
    #[serde(rename = "M")]
    pub m_value: Option<f64>,
    pub m_method: Option<MMethod>,
    pub gap: Option<f64>,
    pub breakpoint: Option<Breakpoint>,
    pub bundle: Option<CertificateBundle>,
    pub status: ReportStatus,
    pub errors: Vec<String>,
    pub config: AnalysisConfig,
}

/// Both thresholds at one `(m, u, c)`; component failures are recorded in
/// the report rather than returned.
pub fn analyze(m: u32, u: f64, c: f64, cfg: &AnalysisConfig) -> Result<BoundaryReport> {
    require_even_order(m)?;
    let sos_cfg = cfg.sos.for_order(m);
    let mut errors = Vec::new();

    let nv = match n_value(m, u, c, &sos_cfg.eigen) {
        Ok(v) => Some(v),
        Err(e) => {
            errors.push(format!("N: {e}"));
            None
        }
    };
    let lower = nv.as_ref().map(|v| v.value);
    let mv = match sos::m_value_bracketed(m, u, c, lower, &sos_cfg) {
        Ok(v) => Some(v),
        Err(e) => {
            errors.push(format!("M: {e}"));
            None
        }
    };
    let bundle = match (&mv, cfg.certify) {
        (Some(mv), true) => match sos::certify_at(m, u, c, mv, &sos_cfg) {
            Ok(b) => Some(b),
            Err(e) => {
                errors.push(format!("certificate: {e}"));
                None
            }
        },
        _ => None,
    };
    let breakpoint = match nv.as_ref().and_then(|v| v.breakpoint) {
        Some(_) if c < 0.0 => Some(breakpoint_u0(m, &sos_cfg.eigen)),
        Some(_) => Some(breakpoint_v0(m, &sos_cfg.eigen)),
        None => None,
    };

    let n = nv.as_ref().map(|v| v.value);
    let mval = mv.as_ref().map(|v| v.value);
    let gap = match (mval, n) {
        (Some(a), Some(b)) => Some(a - b),
        _ => None,
    };
    let status = match (gap, mval) {
        (Some(g), Some(mv)) if g.abs() <= cfg.confirm_tol(mv) => ReportStatus::Confirmed,
        (Some(_), _) => ReportStatus::Unconfirmed,
        _ => ReportStatus::SolverFailure,
    };
    Ok(BoundaryReport {
        m,
        u,
        c,
        n,
        n_provenance: nv.map(|v| v.provenance),
        m_value: mval,
        m_method: mv.map(|v| v.method),
        gap,
        breakpoint,
        bundle,
        status,
        errors,
        config: *cfg,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SegmentPoint {
    pub u: f64,
    pub linear: f64,
    pub n: Option<f64>,
    #[serde(rename = "M")]
    pub m_value: Option<f64>,
    /// The shifted-Gram combination verified as a certificate at this point.
    pub combination_ok: bool,
    pub confirmed: bool,
    pub note: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SegmentReport {
    pub m: u32,
    pub c: f64,
    pub breakpoint: Breakpoint,
    pub points: Vec<SegmentPoint>,
    pub ok: bool,
}

/// Checks `M = N = linear form` at the breakpoint and three points below it.
///
/// Below the breakpoint the critical form splits as
/// `f(u) = f(breakpoint) + (breakpoint - u) * T(x)`, and `T` is diagonally
/// dominated, so the Gram matrix of the critical form at the breakpoint plus
/// `(breakpoint - u)` times a Gram matrix of `T` must certify `f(u)`.
pub fn verify_linear_segment(m: u32, c: f64, cfg: &AnalysisConfig) -> Result<SegmentReport> {
    require_even_order(m)?;
    if c != 1.0 && c != -1.0 {
        return Err(invalid("c must be -1 or 1"));
    }
    let sos_cfg = cfg.sos.for_order(m);
    let bp = if c < 0.0 { breakpoint_u0(m, &sos_cfg.eigen) } else { breakpoint_v0(m, &sos_cfg.eigen) };
    let linear = |u: f64| if c < 0.0 { linear_minus_one(m, u) } else { linear_plus_one(m, u) };
    let b = bp.rational();
    let us: Vec<Ratio<i128>> = if c < 0.0 {
        [3, 2, 1].iter().map(|k| b * Ratio::new(*k, 4)).chain([b]).collect()
    } else {
        let w = b.abs();
        [4, 2, 1].iter().map(|k| b - w * Ratio::new(4, *k) / Ratio::from_integer(4)).chain([b]).collect()
    };
    let mut us: Vec<f64> = us.iter().map(|r| r.to_f64().unwrap_or(f64::NAN)).collect();
    us.sort_by(|a, b| a.total_cmp(b));

    let base = sos::is_sos(&CirculantTensor::new(m, linear(bp.value), bp.value, c)?, &sos_cfg);
    let shift = sos::is_sos(&CirculantTensor::reference_t(m)?, &sos_cfg);
    let (base_gram, shift_gram) = match (&base, &shift) {
        (Ok(b), Ok(s)) => (b.certificate.as_ref().map(|c| c.weighted_gram()), s.certificate.as_ref().map(|c| c.weighted_gram())),
        _ => (None, None),
    };

    let mut points = Vec::new();
    for &u in &us {
        let lin = linear(u);
        let mut note = None;
        let n = n_value(m, u, c, &sos_cfg.eigen).map(|v| v.value).map_err(|e| note = Some(e.to_string())).ok();
        let mv = sos::m_value_bracketed(m, u, c, n, &sos_cfg)
            .map(|v| v.value)
            .map_err(|e| note = Some(e.to_string()))
            .ok();
        let combination_ok = match (&base_gram, &shift_gram) {
            (Some(g0), Some(gt)) => {
                let gp = sos::build_gram_problem(&CirculantTensor::new(m, lin, u, c)?.to_form())?;
                let g = g0 + gt * (bp.value - u);
                let tol = 10.0 * sos_cfg.tol * gp.problem.max_abs_rhs().max(1.0);
                crate::sdp::check_certificate(&g, &gp.problem, tol)?.ok
            }
            _ => false,
        };
        let tol = cfg.confirm_tol(lin);
        let confirmed = matches!((n, mv), (Some(a), Some(b)) if (a - lin).abs() <= tol && (b - lin).abs() <= tol);
        points.push(SegmentPoint { u, linear: lin, n, m_value: mv, combination_ok, confirmed, note });
    }
    let ok = bp.verified && points.iter().all(|p| p.confirmed && p.combination_ok);
    Ok(SegmentReport { m, c, breakpoint: bp, points, ok })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cfg() -> SolverConfig {
        SolverConfig { n_starts: 16, ..SolverConfig::default() }
    }

    #[test]
    fn normalization() {
        let n = normalize(&CirculantTensor::new(6, 10.0, 4.0, -2.0).unwrap());
        assert_eq!(n.scale, 2.0);
        assert_eq!((n.tensor.d, n.tensor.u, n.tensor.c), (5.0, 2.0, -1.0));
        let n = normalize(&CirculantTensor::new(6, 3.0, 1.0, 0.0).unwrap());
        assert_eq!(n.scale, 1.0);
        assert_eq!((n.tensor.d, n.tensor.u, n.tensor.c), (3.0, 1.0, 0.0));
        let n = normalize(&CirculantTensor::new(6, -1.0, 0.5, 0.5).unwrap());
        assert_eq!(n.scale, 0.5);
        assert_eq!((n.tensor.d, n.tensor.u, n.tensor.c), (-2.0, 1.0, 1.0));
    }

    #[test]
    fn breakpoint_formulas() {
        assert_eq!(u0_formula(6), Ratio::new(45, 16));
        assert_eq!(u0_formula(8), Ratio::new(2188, 256) - 1);
        assert_eq!(u0_formula(8), Ratio::new(483, 64));
        assert_eq!(u0_formula(4), Ratio::new(3, 4));
        assert_eq!(v0_formula(6), Ratio::new(-70, 11));
        assert_eq!(v0_formula(8), Ratio::new(-686, 43));
        assert_eq!(v0_formula(10), Ratio::new(-710, 19));
        assert_eq!(v0_formula(12), Ratio::new(-58366, 683));
    }

    #[test]
    fn breakpoints_verify_for_small_orders() {
        for m in [6, 8] {
            let u0 = breakpoint_u0(m, &cfg());
            let v0 = breakpoint_v0(m, &cfg());
            assert!(u0.verified, "{u0:?}");
            assert!(v0.verified, "{v0:?}");
        }
        assert_eq!(breakpoint_u0(6, &cfg()).to_string(), "u0 = 45/16 = 2.812500000000000");
    }

    #[test]
    fn n_value_examples() {
        let v = n_value(6, 45.0 / 16.0, -1.0, &cfg()).unwrap();
        assert_eq!(v.value, 5.625);
        assert_eq!(v.provenance, NProvenance::LinearMinusOne);
        let v = n_value(6, -70.0 / 11.0, 1.0, &cfg()).unwrap();
        assert!((v.value - 2360.0 / 11.0).abs() < 1e-9);
        assert_eq!(v.provenance, NProvenance::LinearPlusOne);
        let v = n_value(6, 1.0, 0.0, &cfg()).unwrap();
        assert!((v.value - 1.737348471777547).abs() < 1e-9);
        assert_eq!(v.provenance, NProvenance::ScaledUnit);
        let v = n_value(6, 5.0, -1.0, &cfg()).unwrap();
        assert_eq!(v.provenance, NProvenance::PhiBranch);
        assert!((v.value - 9.425_446_501_184_26).abs() < 1e-6);
        assert!(n_value(7, 1.0, 0.0, &cfg()).is_err());
    }

    #[test]
    fn n_value_general_c() {
        let a = n_value(6, 10.0, -2.0, &cfg()).unwrap();
        let b = n_value(6, 5.0, -1.0, &cfg()).unwrap();
        assert!((a.value - 2.0 * b.value).abs() < 1e-9);
        assert_eq!(a.scale, 2.0);
        assert_eq!(n_value(6, 3.0, 3.0, &cfg()).unwrap().value, 3.0);
    }
}
