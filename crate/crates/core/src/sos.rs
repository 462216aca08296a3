//! Sum-of-squares decisions through Gram matrices.
//!
//! A degree-`m` form is SOS exactly when it equals `z(x)^T G z(x)` for some
//! PSD `G`, with `z` the vector of degree-`m/2` monomials. The Gram problem is
//! assembled in the weighted basis `sqrt(multinomial(k; alpha)) x^alpha` and
//! each coefficient equation is divided by `multinomial(m; mu)`, so for
//! tensors in the family the right-hand sides are just `d`, `u` and `c`.
//! Certificates are reported back in the plain monomial basis.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::boundary;
use crate::error::{invalid, Error, Result};
use crate::heig::{self, EigenResult, SolverConfig};
use crate::sdp::{self, Constraint, SdpOptions, SdpProblem, SdpStatus};
use crate::tensor::{
    dd_bound, exponent_triples, multinomial, require_even_order, three_index_count, two_index_count,
    CirculantTensor, TernaryForm,
};

/// Degree-`k` monomials in lexicographically descending order, which for a
/// single degree coincides with graded-lex.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MonomialBasis {
    pub k: u32,
    pub monos: Vec<[u32; 3]>,
}

impl MonomialBasis {
    pub fn new(k: u32) -> Self {
        MonomialBasis { k, monos: exponent_triples(k) }
    }

    pub fn len(&self) -> usize {
        self.monos.len()
    }

    pub fn is_empty(&self) -> bool {
        self.monos.is_empty()
    }

    /// `sqrt(k! / (a! b! g!))` per basis element.
    pub fn weights(&self) -> Vec<f64> {
        self.monos.iter().map(|e| (multinomial(e[0], e[1], e[2]) as f64).sqrt()).collect()
    }
}

/// A Gram SDP together with the bookkeeping needed to map solutions back to
/// the plain monomial basis.
#[derive(Debug, Clone)]
pub struct GramProblem {
    pub basis: MonomialBasis,
    /// Degree-`m` monomial of each constraint, same order as the constraints.
    pub monomials: Vec<[u32; 3]>,
    pub problem: SdpProblem,
    form: TernaryForm,
}

fn add(a: &[u32; 3], b: &[u32; 3]) -> [u32; 3] {
    [a[0] + b[0], a[1] + b[1], a[2] + b[2]]
}

/// One equation per degree-`m` monomial `mu`:
/// `sum_{alpha + beta = mu} w_alpha w_beta G_{alpha beta} = coeff(mu)`,
/// divided through by `multinomial(m; mu)`.
pub fn build_gram_problem(form: &TernaryForm) -> Result<GramProblem> {
    if !form.m.is_multiple_of(2) {
        return Err(invalid(format!("form degree {} is odd", form.m)));
    }
    let basis = MonomialBasis::new(form.m / 2);
    let w = basis.weights();
    let monomials = exponent_triples(form.m);
    let index: std::collections::HashMap<[u32; 3], usize> =
        monomials.iter().enumerate().map(|(i, e)| (*e, i)).collect();
    let mut entries: Vec<Vec<(usize, usize, f64)>> = vec![Vec::new(); monomials.len()];
    for i in 0..basis.len() {
        for j in i..basis.len() {
            let mu = add(&basis.monos[i], &basis.monos[j]);
            let l = index[&mu];
            let norm = multinomial(mu[0], mu[1], mu[2]) as f64;
            entries[l].push((i, j, w[i] * w[j] / norm));
        }
    }
    let constraints = entries
        .into_iter()
        .zip(&monomials)
        .map(|(e, mu)| Constraint::new(e, form.coeff(*mu) / multinomial(mu[0], mu[1], mu[2]) as f64))
        .collect();
    let problem = SdpProblem::new(basis.len(), constraints)?;
    Ok(GramProblem { basis, monomials, problem, form: form.clone() })
}

impl GramProblem {
    /// Plain-basis Gram matrix from a weighted-basis one.
    pub fn to_plain(&self, weighted: &DMatrix<f64>) -> DMatrix<f64> {
        let w = self.basis.weights();
        DMatrix::from_fn(w.len(), w.len(), |i, j| w[i] * w[j] * weighted[(i, j)])
    }

    pub fn certificate(&self, weighted: &DMatrix<f64>) -> GramCertificate {
        let plain = self.to_plain(weighted);
        let gram = (&plain + plain.transpose()) * 0.5;
        let scale = self.form.max_abs_coeff().max(f64::MIN_POSITIVE);
        let mut err: f64 = 0.0;
        for mu in &self.monomials {
            err = err.max((reconstruct(&self.basis, &gram, *mu) - self.form.coeff(*mu)).abs());
        }
        GramCertificate {
            basis: self.basis.clone(),
            min_eig: sdp::min_eigenvalue(&gram) / scale,
            reconstruction_error: err / scale,
            gram,
        }
    }
}

/// Coefficient of `x^mu` in `z(x)^T G z(x)` for a plain-basis `G`.
fn reconstruct(basis: &MonomialBasis, gram: &DMatrix<f64>, mu: [u32; 3]) -> f64 {
    let mut s = 0.0;
    for (i, a) in basis.monos.iter().enumerate() {
        for (j, b) in basis.monos.iter().enumerate() {
            if add(a, b) == mu {
                s += gram[(i, j)];
            }
        }
    }
    s
}

/// A PSD matrix over the half-degree monomial basis witnessing an SOS
/// decomposition: `f(x) = z(x)^T gram z(x)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(into = "CertificateDoc", try_from = "CertificateDoc")]
pub struct GramCertificate {
    pub basis: MonomialBasis,
    pub gram: DMatrix<f64>,
    /// Smallest eigenvalue of `gram` divided by the largest absolute
    /// coefficient of the form.
    pub min_eig: f64,
    /// Largest coefficient mismatch, relative to the largest coefficient.
    pub reconstruction_error: f64,
}

/// JSON layout of a certificate.
#[derive(Debug, Clone, Serialize, Deserialize)]
struct CertificateDoc {
    half_degree: u32,
    basis: Vec<[u32; 3]>,
    gram_lower: Vec<Vec<f64>>,
    min_eig: f64,
    reconstruction_error: f64,
}

impl From<GramCertificate> for CertificateDoc {
    fn from(c: GramCertificate) -> Self {
        let n = c.basis.len();
        let gram_lower = (0..n).map(|i| (0..=i).map(|j| c.gram[(i, j)]).collect()).collect();
        CertificateDoc {
            half_degree: c.basis.k,
            basis: c.basis.monos,
            gram_lower,
            min_eig: c.min_eig,
            reconstruction_error: c.reconstruction_error,
        }
    }
}

impl TryFrom<CertificateDoc> for GramCertificate {
    type Error = String;

    fn try_from(doc: CertificateDoc) -> std::result::Result<Self, String> {
        let n = doc.basis.len();
        if doc.gram_lower.len() != n || doc.gram_lower.iter().enumerate().any(|(i, r)| r.len() != i + 1) {
            return Err("gram_lower is not a lower triangle matching the basis".into());
        }
        let gram = DMatrix::from_fn(n, n, |i, j| if j <= i { doc.gram_lower[i][j] } else { doc.gram_lower[j][i] });
        Ok(GramCertificate {
            basis: MonomialBasis { k: doc.half_degree, monos: doc.basis },
            gram,
            min_eig: doc.min_eig,
            reconstruction_error: doc.reconstruction_error,
        })
    }
}

impl GramCertificate {
    /// Same matrix in the weighted basis used by the solver.
    pub fn weighted_gram(&self) -> DMatrix<f64> {
        let w = self.basis.weights();
        DMatrix::from_fn(w.len(), w.len(), |i, j| self.gram[(i, j)] / (w[i] * w[j]))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SosConfig {
    pub sdp: SdpOptions,
    /// SOS when `t_star >= -tol * max|rhs|` in the weighted Gram problem.
    pub tol: f64,
    /// Bisection width on `d`.
    pub tol_d: f64,
    /// Certificate acceptance level for `min_eig` and `reconstruction_error`.
    pub cert_tol: f64,
    pub eigen: SolverConfig,
}

impl Default for SosConfig {
    fn default() -> Self {
        SosConfig { sdp: SdpOptions::default(), tol: 1e-7, tol_d: 1e-7, cert_tol: 1e-7, eigen: SolverConfig::default() }
    }
}

impl SosConfig {
    /// Doubled iteration caps for `m >= 14`.
    pub fn for_order(&self, m: u32) -> Self {
        if m >= 14 {
            let mut c = *self;
            c.sdp.max_iter *= 2;
            c.eigen = c.eigen.doubled();
            c
        } else {
            *self
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SosVerdict {
    pub sos: bool,
    /// Achieved `t_star` divided by `max|rhs|`.
    pub margin: f64,
    pub status: SdpStatus,
    pub certificate: Option<GramCertificate>,
}

/// Decides SOS membership of the form of `t`.
pub fn is_sos(t: &CirculantTensor, cfg: &SosConfig) -> Result<SosVerdict> {
    t.require_even()?;
    is_sos_form(&t.to_form(), cfg)
}

pub fn is_sos_form(form: &TernaryForm, cfg: &SosConfig) -> Result<SosVerdict> {
    let gp = build_gram_problem(form)?;
    let scale = gp.problem.max_abs_rhs();
    if scale == 0.0 {
        let zero = DMatrix::zeros(gp.basis.len(), gp.basis.len());
        return Ok(SosVerdict { sos: true, margin: 0.0, status: SdpStatus::Optimal, certificate: Some(gp.certificate(&zero)) });
    }
    let sol = sdp::solve(&gp.problem, &cfg.sdp)?;
    let margin = sol.t_star / scale;
    let verify = |g: &DMatrix<f64>| -> Result<Option<GramCertificate>> {
        let chk = sdp::check_certificate(g, &gp.problem, 10.0 * cfg.tol * scale)?;
        let cert = gp.certificate(g);
        let ok = chk.ok && cert.min_eig >= -cfg.cert_tol && cert.reconstruction_error <= cfg.cert_tol;
        Ok(ok.then_some(cert))
    };
    match sol.status {
        SdpStatus::Optimal => {
            if margin >= -cfg.tol {
                match verify(&sol.gram)? {
                    Some(cert) => Ok(SosVerdict { sos: true, margin, status: sol.status, certificate: Some(cert) }),
                    None => Err(Error::SosUndecided(format!(
                        "solver margin {margin:.3e} accepted but the Gram certificate failed verification"
                    ))),
                }
            } else {
                Ok(SosVerdict { sos: false, margin, status: sol.status, certificate: None })
            }
        }
        SdpStatus::MaxIterations => {
            // A verified certificate, or a dual bound below the threshold, is
            // conclusive even without convergence.
            if margin >= -cfg.tol {
                if let Some(cert) = verify(&sol.gram)? {
                    return Ok(SosVerdict { sos: true, margin, status: sol.status, certificate: Some(cert) });
                }
            }
            if sol.t_upper / scale < -cfg.tol {
                return Ok(SosVerdict { sos: false, margin, status: sol.status, certificate: None });
            }
            Err(Error::SosUndecided(format!(
                "SDP hit the iteration cap (gap {:.3e}, margin {margin:.3e})",
                sol.gap
            )))
        }
        SdpStatus::Infeasible | SdpStatus::Unbounded => Err(Error::Internal(format!(
            "Gram system reported {:?}; these systems are consistent and bounded by construction",
            sol.status
        ))),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum MMethod {
    ClosedForm,
    Bisection,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MValue {
    pub value: f64,
    pub method: MMethod,
    /// Number of SOS decisions made.
    pub probes: usize,
    /// Certificate at the returned value.
    pub certificate: GramCertificate,
}

/// Closed forms for the SOS threshold where they are known: `u, c <= 0`
/// gives the row sum, `u = c > 0` gives `u`.
pub fn closed_form_m(m: u32, u: f64, c: f64) -> Option<f64> {
    if u <= 0.0 && c <= 0.0 {
        Some(-u * two_index_count(m) as f64 - c * three_index_count(m) as f64)
    } else if u == c && u > 0.0 {
        Some(u)
    } else {
        None
    }
}

/// With `d = u = c` every entry equals `u`, so the form is
/// `u (x1 + x2 + x3)^m` and `u v v^T` with `v_alpha = multinomial(k; alpha)`
/// is an exact Gram matrix. The SDP is highly degenerate there.
fn rank_one_certificate(m: u32, u: f64, c: f64, cfg: &SosConfig) -> Result<Option<GramCertificate>> {
    if !(u == c && u > 0.0) {
        return Ok(None);
    }
    let gp = build_gram_problem(&CirculantTensor::new(m, u, u, u)?.to_form())?;
    let w = DVector::from_vec(gp.basis.weights());
    let cert = gp.certificate(&(&w * w.transpose() * u));
    Ok((cert.min_eig >= -cfg.cert_tol && cert.reconstruction_error <= cfg.cert_tol).then_some(cert))
}

/// `M_c(u)`, the smallest `d` making `A(m, d, u, c)` SOS.
///
/// The lower bracket is the PSD threshold `N_c(u)` (zero if it cannot be
/// computed); the upper bracket is the diagonal dominance bound.
pub fn m_value(m: u32, u: f64, c: f64, cfg: &SosConfig) -> Result<MValue> {
    require_even_order(m)?;
    let lower = if closed_form_m(m, u, c).is_some() {
        None
    } else {
        boundary::n_value(m, u, c, &cfg.eigen).ok().map(|n| n.value)
    };
    m_value_bracketed(m, u, c, lower, cfg)
}

/// As [`m_value`] with an explicit lower bracket.
pub fn m_value_bracketed(m: u32, u: f64, c: f64, lower: Option<f64>, cfg: &SosConfig) -> Result<MValue> {
    require_even_order(m)?;
    if !(u.is_finite() && c.is_finite()) {
        return Err(invalid("u and c must be finite"));
    }
    if cfg.tol_d.is_nan() || cfg.tol_d <= 0.0 {
        return Err(invalid("tol_d must be positive"));
    }
    let probe = |d: f64| is_sos(&CirculantTensor::new(m, d, u, c)?, cfg);

    if let Some(value) = closed_form_m(m, u, c) {
        if let Some(certificate) = rank_one_certificate(m, u, c, cfg)? {
            return Ok(MValue { value, method: MMethod::ClosedForm, probes: 0, certificate });
        }
        let v = probe(value)?;
        return match v.certificate {
            Some(certificate) if v.sos => Ok(MValue { value, method: MMethod::ClosedForm, probes: 1, certificate }),
            _ => Err(Error::Internal(format!(
                "closed-form threshold {value} failed its SOS check (margin {:.3e})",
                v.margin
            ))),
        };
    }

    let hi0 = dd_bound(m, u, c);
    let mut lo = lower.unwrap_or(0.0).clamp(0.0, hi0);
    let mut hi = hi0;
    let mut probes = 0;

    let top = probe(hi)?;
    probes += 1;
    let mut cert = match top.certificate {
        Some(c) if top.sos => c,
        _ => {
            return Err(Error::Internal(format!(
                "diagonally dominated tensor at d = {hi} was not certified SOS (margin {:.3e})",
                top.margin
            )))
        }
    };
    if lo < hi {
        let bottom = probe(lo)?;
        probes += 1;
        if let (true, Some(c)) = (bottom.sos, bottom.certificate) {
            return Ok(MValue { value: lo, method: MMethod::Bisection, probes, certificate: c });
        }
    }
    while hi - lo > cfg.tol_d {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        let v = probe(mid)?;
        probes += 1;
        match (v.sos, v.certificate) {
            (true, Some(c)) => {
                hi = mid;
                cert = c;
            }
            _ => lo = mid,
        }
    }
    Ok(MValue { value: hi, method: MMethod::Bisection, probes, certificate: cert })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum BundleStatus {
    Confirmed,
    Unconfirmed,
}

/// Critical value, critical SOS decomposition and critical minimiser for one
/// `(m, u, c)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CertificateBundle {
    pub m: u32,
    pub u: f64,
    pub c: f64,
    pub critical_value: f64,
    pub method: MMethod,
    /// Diagonal at which the certificate was produced: `critical_value + tol_d`,
    /// or the critical value itself for closed-form thresholds.
    pub certificate_d: f64,
    pub certificate: Option<GramCertificate>,
    pub minimizer: Option<EigenResult>,
    /// `f(x)` at the minimiser with `d = critical_value`.
    pub minimizer_value: Option<f64>,
    pub status: BundleStatus,
    pub notes: Vec<String>,
}

/// Assembles and checks the three pieces that make `u` PNS-free for `c`.
pub fn certify_pns_free(m: u32, u: f64, c: f64, cfg: &SosConfig) -> Result<CertificateBundle> {
    let mv = m_value(m, u, c, cfg)?;
    certify_at(m, u, c, &mv, cfg)
}

pub fn certify_at(m: u32, u: f64, c: f64, mv: &MValue, cfg: &SosConfig) -> Result<CertificateBundle> {
    let mut notes = Vec::new();
    let mut certificate_d = mv.value + cfg.tol_d;
    let certificate = match is_sos(&CirculantTensor::new(m, certificate_d, u, c)?, cfg) {
        Ok(v) if v.sos => v.certificate,
        // the closed-form certificate is already at the critical value
        _ if mv.method == MMethod::ClosedForm => {
            certificate_d = mv.value;
            Some(mv.certificate.clone())
        }
        Ok(v) => {
            notes.push(format!("no SOS certificate at d = {certificate_d} (margin {:.3e})", v.margin));
            None
        }
        Err(e) => {
            notes.push(format!("SOS check at d = {certificate_d} failed: {e}"));
            None
        }
    };
    let minimizer = match heig::lambda_min(&CirculantTensor::new(m, mv.value, u, c)?, &cfg.eigen) {
        Ok(r) => Some(r),
        Err(e) => {
            notes.push(format!("eigen solve at the critical value failed: {e}"));
            None
        }
    };
    let minimizer_value = minimizer.as_ref().map(|r| r.lambda);
    let level = 10.0 * cfg.tol_d;
    let has_zero = matches!(minimizer_value, Some(v) if v.abs() <= level);
    if let Some(v) = minimizer_value {
        if !has_zero {
            notes.push(format!("minimum {v:.3e} at the critical value exceeds {level:.1e} in magnitude"));
        }
    }
    let status = if certificate.is_some() && has_zero { BundleStatus::Confirmed } else { BundleStatus::Unconfirmed };
    Ok(CertificateBundle {
        m,
        u,
        c,
        critical_value: mv.value,
        method: mv.method,
        certificate_d,
        certificate,
        minimizer,
        minimizer_value,
        status,
        notes,
    })
}
