//! Small dense semidefinite programs of the form
//!
//! ```text
//! maximize t  subject to  <A_l, G> = b_l  (l = 1..p),   G - t I >= 0
//! ```
//!
//! `t` is eliminated against the trace direction of the constraint system,
//! which leaves a standard-form primal `min <C, X>, <A_i, X> = b_i, X >= 0`
//! in `X = G - t I`. That problem is solved by an infeasible primal-dual
//! path-following method with Nesterov-Todd scaling and a Mehrotra
//! predictor-corrector. Sizes here are tiny (side at most 64, a few hundred
//! constraints), so everything is dense.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};

/// Largest supported matrix side.
pub const MAX_DIM: usize = 64;

/// One equality `<A, G> = rhs`. `entries` lists `(i, j, a_ij)` of the
/// symmetric matrix `A`; each off-diagonal entry stands for both `(i, j)` and
/// `(j, i)`, so it contributes `2 a_ij G_ij`. Repeated positions add up.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Constraint {
    pub entries: Vec<(usize, usize, f64)>,
    pub rhs: f64,
}

impl Constraint {
    pub fn new(entries: Vec<(usize, usize, f64)>, rhs: f64) -> Self {
        Constraint { entries, rhs }
    }

    pub fn dense(&self, n: usize) -> DMatrix<f64> {
        let mut a = DMatrix::zeros(n, n);
        for &(i, j, v) in &self.entries {
            a[(i, j)] += v;
            if i != j {
                a[(j, i)] += v;
            }
        }
        a
    }

    /// `<A, G>` for a dense symmetric `G`.
    pub fn apply(&self, g: &DMatrix<f64>) -> f64 {
        self.entries
            .iter()
            .map(|&(i, j, v)| if i == j { v * g[(i, i)] } else { v * (g[(i, j)] + g[(j, i)]) })
            .sum()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SdpProblem {
    pub dim: usize,
    pub constraints: Vec<Constraint>,
}

impl SdpProblem {
    pub fn new(dim: usize, constraints: Vec<Constraint>) -> Result<Self> {
        let p = SdpProblem { dim, constraints };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        if self.dim == 0 || self.dim > MAX_DIM {
            return Err(invalid(format!("matrix side {} outside 1..={MAX_DIM}", self.dim)));
        }
        if self.constraints.is_empty() {
            return Err(invalid("constraint list is empty"));
        }
        for (l, c) in self.constraints.iter().enumerate() {
            if !c.rhs.is_finite() {
                return Err(invalid(format!("constraint {l}: non-finite right-hand side")));
            }
            for &(i, j, v) in &c.entries {
                if i >= self.dim || j >= self.dim || !v.is_finite() {
                    return Err(invalid(format!("constraint {l}: bad entry ({i}, {j}, {v})")));
                }
            }
        }
        Ok(())
    }

    pub fn max_abs_rhs(&self) -> f64 {
        self.constraints.iter().fold(0.0, |acc, c| acc.max(c.rhs.abs()))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SdpStatus {
    Optimal,
    /// The linear equality system has no solution.
    Infeasible,
    /// `t` can be made arbitrarily large.
    Unbounded,
    MaxIterations,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SdpSolution {
    pub gram: DMatrix<f64>,
    /// Smallest eigenvalue of `gram`, the achieved `t`.
    pub t_star: f64,
    /// `max_l |<A_l, G> - b_l|`.
    pub primal_residual: f64,
    /// Least-squares residual of the equality system, in scaled units.
    pub lsq_residual: f64,
    pub status: SdpStatus,
    pub iterations: usize,
    /// Upper bound on the optimal `t` from the best dual-feasible iterate
    /// (`inf` if none was dual feasible).
    pub t_upper: f64,
    /// `(t_upper - t_star) / (1 + |t_star|)` in right-hand-side units.
    pub gap: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SdpOptions {
    pub tol: f64,
    pub max_iter: usize,
    /// Equality systems with a least-squares residual above this (after
    /// scaling the right-hand side to unit max norm) are infeasible.
    pub lsq_tol: f64,
}

impl Default for SdpOptions {
    fn default() -> Self {
        SdpOptions { tol: 1e-9, max_iter: 100, lsq_tol: 1e-8 }
    }
}

fn svec_len(n: usize) -> usize {
    n * (n + 1) / 2
}

/// Symmetric vectorisation with `sqrt 2` on off-diagonals, so that
/// `svec(A) . svec(B) = <A, B>`.
fn svec(a: &DMatrix<f64>) -> DVector<f64> {
    let n = a.nrows();
    let r2 = std::f64::consts::SQRT_2;
    let mut out = DVector::zeros(svec_len(n));
    let mut k = 0;
    for j in 0..n {
        for i in 0..=j {
            out[k] = if i == j { a[(i, i)] } else { r2 * 0.5 * (a[(i, j)] + a[(j, i)]) };
            k += 1;
        }
    }
    out
}

fn smat(v: &DVector<f64>, n: usize) -> DMatrix<f64> {
    let r2 = std::f64::consts::SQRT_2;
    let mut a = DMatrix::zeros(n, n);
    let mut k = 0;
    for j in 0..n {
        for i in 0..=j {
            if i == j {
                a[(i, i)] = v[k];
            } else {
                a[(i, j)] = v[k] / r2;
                a[(j, i)] = v[k] / r2;
            }
            k += 1;
        }
    }
    a
}

fn sym(a: &DMatrix<f64>) -> DMatrix<f64> {
    (a + a.transpose()) * 0.5
}

fn inner(a: &DMatrix<f64>, b: &DMatrix<f64>) -> f64 {
    a.component_mul(b).sum()
}

/// Smallest eigenvalue of a symmetric matrix.
pub fn min_eigenvalue(a: &DMatrix<f64>) -> f64 {
    SymmetricEigen::new(sym(a)).eigenvalues.iter().cloned().fold(f64::INFINITY, f64::min)
}

/// Equality system with orthonormal rows.
struct Orthonormal {
    rows: Vec<DVector<f64>>,
    rhs: Vec<f64>,
    lsq_residual: f64,
}

/// Modified Gram-Schmidt with one re-orthogonalisation pass. Rows that are
/// numerically dependent are dropped; the right-hand side they leave behind
/// is the least-squares residual of the system.
fn orthonormalize(rows: Vec<DVector<f64>>, rhs: Vec<f64>) -> Orthonormal {
    let mut q: Vec<DVector<f64>> = Vec::new();
    let mut beta: Vec<f64> = Vec::new();
    let mut lsq: f64 = 0.0;
    for (mut v, mut b) in rows.into_iter().zip(rhs) {
        let norm0 = v.norm();
        if norm0 == 0.0 {
            lsq = lsq.max(b.abs());
            continue;
        }
        for _ in 0..2 {
            for (qk, bk) in q.iter().zip(&beta) {
                let c = qk.dot(&v);
                v.axpy(-c, qk, 1.0);
                b -= c * bk;
            }
        }
        let nv = v.norm();
        if nv <= 1e-10 * norm0 {
            lsq = lsq.max(b.abs() / norm0);
        } else {
            q.push(v / nv);
            beta.push(b / nv);
        }
    }
    Orthonormal { rows: q, rhs: beta, lsq_residual: lsq }
}

/// Standard-form data after eliminating `t`.
struct StandardForm {
    c: DMatrix<f64>,
    a: Vec<DMatrix<f64>>,
    b: DVector<f64>,
    /// Recovery: `t = (pivot_rhs - pivot . svec(X)) / pivot_trace`.
    pivot: DVector<f64>,
    pivot_rhs: f64,
    pivot_trace: f64,
}

/// Rotates the orthonormal system so that only its first row couples to the
/// trace direction, then drops that row into the objective.
fn eliminate_t(sys: &Orthonormal, n: usize) -> Option<StandardForm> {
    let k = sys.rows.len();
    let e = svec(&DMatrix::identity(n, n));
    let tau = DVector::from_iterator(k, sys.rows.iter().map(|r| r.dot(&e)));
    let tau_norm = tau.norm();
    if tau_norm <= 1e-12 * e.norm() {
        return None;
    }
    // Householder reflector H with H tau = |tau| e_1.
    let mut w = tau.clone() / tau_norm;
    w[0] -= 1.0;
    let wn = w.norm();
    let reflect = |v: &DVector<f64>| -> DVector<f64> {
        if wn <= 1e-14 {
            v.clone()
        } else {
            let wu = &w / wn;
            v - &wu * (2.0 * wu.dot(v))
        }
    };
    let nv = svec_len(n);
    let mut rows = vec![DVector::zeros(nv); k];
    let mut rhs = DVector::zeros(k);
    // Row r of H Q is sum_l H[r][l] Q_l; apply H column-wise through unit vectors.
    for l in 0..k {
        let mut unit = DVector::zeros(k);
        unit[l] = 1.0;
        let col = reflect(&unit);
        for r in 0..k {
            rows[r].axpy(col[r], &sys.rows[l], 1.0);
            rhs[r] += col[r] * sys.rhs[l];
        }
    }
    let pivot = rows[0].clone();
    let pivot_trace = pivot.dot(&e);
    let pivot_rhs = rhs[0];
    let c = smat(&pivot, n) / pivot_trace;
    let a: Vec<DMatrix<f64>> = rows[1..].iter().map(|r| smat(r, n)).collect();
    let b = DVector::from_iterator(k - 1, rhs.iter().skip(1).cloned());
    Some(StandardForm { c, a, b, pivot, pivot_rhs, pivot_trace })
}

/// Best recovered primal point and best dual bound seen by the IPM.
struct IpmOutcome {
    gram: DVector<f64>,
    t_star: f64,
    t_upper: f64,
    converged: bool,
    unbounded: bool,
    iterations: usize,
}

/// Nesterov-Todd scaling: `G` with `G^-1 X G^-T = G^T Z G = diag(lambda)`.
fn nt_scaling(x: &DMatrix<f64>, z: &DMatrix<f64>) -> Option<(DMatrix<f64>, DVector<f64>)> {
    let lx = x.clone().cholesky()?.l();
    let lz = z.clone().cholesky()?.l();
    let svd = (lz.transpose() * &lx).svd(false, true);
    let vt = svd.v_t?;
    let sigma = svd.singular_values;
    if sigma.iter().any(|&s| s.is_nan() || s <= 0.0) {
        return None;
    }
    let mut g = lx * vt.transpose();
    for (j, s) in sigma.iter().enumerate() {
        let f = 1.0 / s.sqrt();
        g.column_mut(j).scale_mut(f);
    }
    Some((g, sigma))
}

/// Largest `alpha` with `diag(lambda) + alpha D >= 0`.
fn max_step(lambda: &DVector<f64>, d: &DMatrix<f64>) -> f64 {
    let n = lambda.len();
    let mut s = d.clone();
    for i in 0..n {
        for j in 0..n {
            s[(i, j)] /= (lambda[i] * lambda[j]).sqrt();
        }
    }
    let nu = min_eigenvalue(&s);
    if nu >= 0.0 {
        f64::INFINITY
    } else {
        -1.0 / nu
    }
}

/// Solves `diag(lambda) o H = R` for symmetric `H`, with `o` the symmetrised
/// product.
fn lyap(lambda: &DVector<f64>, r: &DMatrix<f64>) -> DMatrix<f64> {
    let n = lambda.len();
    DMatrix::from_fn(n, n, |i, j| 2.0 * r[(i, j)] / (lambda[i] + lambda[j]))
}

fn ipm(sf: &StandardForm, n: usize, opts: &SdpOptions, recover: impl Fn(&DMatrix<f64>) -> (DVector<f64>, f64)) -> IpmOutcome {
    let p = sf.a.len();
    let bnorm = sf.b.norm();
    let cnorm = sf.c.norm();
    let amax = sf.a.iter().map(|a| a.norm()).fold(0.0, f64::max);
    let nf = n as f64;
    let t_offset = sf.pivot_rhs / sf.pivot_trace;

    let xi = (0..p)
        .map(|i| nf * (1.0 + sf.b[i].abs()) / (1.0 + sf.a[i].norm()))
        .fold(10.0f64.max(nf.sqrt()), f64::max);
    let eta = 10.0f64.max(nf.sqrt()).max(amax).max(cnorm);
    let mut x = DMatrix::identity(n, n) * xi;
    let mut z = DMatrix::identity(n, n) * eta;
    let mut y = DVector::zeros(p);

    let apply_a = |m: &DMatrix<f64>| DVector::from_iterator(p, sf.a.iter().map(|a| inner(a, m)));
    let adjoint = |v: &DVector<f64>| {
        let mut out = DMatrix::zeros(n, n);
        for (a, &vi) in sf.a.iter().zip(v.iter()) {
            out += a * vi;
        }
        out
    };

    let (g0, t0) = recover(&x);
    let mut out = IpmOutcome {
        gram: g0,
        t_star: t0,
        t_upper: f64::INFINITY,
        converged: false,
        unbounded: false,
        iterations: 0,
    };
    let certified_gap = |o: &IpmOutcome| (o.t_upper - o.t_star) / (1.0 + o.t_star.abs());
    for it in 0..opts.max_iter {
        out.iterations = it;
        let rp = &sf.b - apply_a(&x);
        let rd = &sf.c - adjoint(&y) - &z;
        let pobj = inner(&sf.c, &x);
        let dobj = sf.b.dot(&y);
        let gap = (pobj - dobj).abs() / (1.0 + pobj.abs() + dobj.abs());
        let pinf = rp.norm() / (1.0 + bnorm);
        let dinf = rd.norm() / (1.0 + cnorm);

        // Z stays positive definite, so a dual-feasible y bounds t from above.
        if dinf <= opts.tol {
            out.t_upper = out.t_upper.min(t_offset - dobj);
        }
        let (g, t) = recover(&x);
        if t > out.t_star {
            out.gram = g;
            out.t_star = t;
        }
        if certified_gap(&out) <= opts.tol || gap.max(pinf).max(dinf) <= opts.tol {
            out.converged = true;
            return out;
        }
        if x.norm() > 1e12 * (1.0 + xi) && dinf > 1e-6 {
            out.unbounded = true;
            return out;
        }
        let mu = inner(&x, &z) / nf;

        let Some((g, lambda)) = nt_scaling(&x, &z) else { break };
        let gt = g.transpose();
        let at: Vec<DMatrix<f64>> = sf.a.iter().map(|a| &gt * a * &g).collect();
        let rdt = &gt * &rd * &g;
        let mut schur = DMatrix::zeros(p, p);
        for i in 0..p {
            for j in i..p {
                let v = inner(&at[i], &at[j]);
                schur[(i, j)] = v;
                schur[(j, i)] = v;
            }
        }
        let chol = match schur.clone().cholesky() {
            Some(c) => c,
            None => {
                let reg = 1e-14 * (1.0 + schur.diagonal().max());
                match (schur + DMatrix::identity(p, p) * reg).cholesky() {
                    Some(c) => c,
                    None => break,
                }
            }
        };
        let lam2 = DMatrix::from_diagonal(&lambda.map(|l| l * l));

        let direction = |rc: &DMatrix<f64>| {
            let h = lyap(&lambda, rc);
            let hr = &h - &rdt;
            let rhs = DVector::from_iterator(p, (0..p).map(|i| rp[i] - inner(&at[i], &hr)));
            let dy = chol.solve(&rhs);
            let mut dzt = rdt.clone();
            for (a, &v) in at.iter().zip(dy.iter()) {
                dzt -= a * v;
            }
            let dxt = &h - &dzt;
            (sym(&dxt), sym(&dzt), dy)
        };

        // Predictor.
        let (dxa, dza, _) = direction(&(-&lam2));
        let ap = max_step(&lambda, &dxa).min(1.0);
        let ad = max_step(&lambda, &dza).min(1.0);
        let lmat = DMatrix::from_diagonal(&lambda);
        let mu_aff = inner(&(&lmat + &dxa * ap), &(&lmat + &dza * ad)) / nf;
        let sigma = (mu_aff / mu).clamp(0.0, 1.0).powi(3);

        // Corrector.
        let cross = sym(&(&dxa * &dza));
        let rc = DMatrix::identity(n, n) * (sigma * mu) - &lam2 - cross;
        let (dxt, dzt, dy) = direction(&rc);
        let gamma = 0.9 + 0.09 * ap.min(ad);
        let alpha_p = (gamma * max_step(&lambda, &dxt)).min(1.0);
        let alpha_d = (gamma * max_step(&lambda, &dzt)).min(1.0);
        if alpha_p < 1e-12 && alpha_d < 1e-12 {
            break;
        }

        let dx = &g * dxt * &gt;
        let dz = &rd - adjoint(&dy);
        x = sym(&(x + dx * alpha_p));
        z = sym(&(z + dz * alpha_d));
        y += dy * alpha_d;
        out.iterations = it + 1;
    }
    // Stalled or capped: the best recovered point may still be certified.
    out.converged = certified_gap(&out) <= opts.tol;
    out
}

/// Maximises `lambda_min(G)` subject to the equality constraints.
pub fn solve(problem: &SdpProblem, opts: &SdpOptions) -> Result<SdpSolution> {
    problem.validate()?;
    let n = problem.dim;
    let scale = match problem.max_abs_rhs() {
        s if s > 0.0 => s,
        _ => 1.0,
    };
    let rows: Vec<DVector<f64>> = problem.constraints.iter().map(|c| svec(&c.dense(n))).collect();
    let rhs: Vec<f64> = problem.constraints.iter().map(|c| c.rhs / scale).collect();
    let sys = orthonormalize(rows, rhs);

    let empty = |status, iterations| SdpSolution {
        gram: DMatrix::zeros(n, n),
        t_star: f64::NAN,
        primal_residual: f64::NAN,
        lsq_residual: sys.lsq_residual,
        status,
        iterations,
        t_upper: f64::NAN,
        gap: f64::NAN,
    };
    if sys.lsq_residual > opts.lsq_tol {
        return Ok(empty(SdpStatus::Infeasible, 0));
    }
    let Some(sf) = eliminate_t(&sys, n) else {
        return Ok(empty(SdpStatus::Unbounded, 0));
    };

    // Primal recovery: t from the eliminated row, then a least-norm
    // correction back onto the affine constraint set.
    let recover = |x: &DMatrix<f64>| {
        let t = (sf.pivot_rhs - sf.pivot.dot(&svec(x))) / sf.pivot_trace;
        let mut gv = svec(&(x + DMatrix::identity(n, n) * t));
        for (q, b) in sys.rows.iter().zip(&sys.rhs) {
            let r = b - q.dot(&gv);
            gv.axpy(r, q, 1.0);
        }
        let t_star = min_eigenvalue(&smat(&gv, n));
        (gv, t_star)
    };
    let out = ipm(&sf, n, opts, recover);
    if out.unbounded {
        return Ok(empty(SdpStatus::Unbounded, out.iterations));
    }
    let gram = smat(&out.gram, n) * scale;
    let primal_residual =
        problem.constraints.iter().map(|c| (c.apply(&gram) - c.rhs).abs()).fold(0.0, f64::max);
    Ok(SdpSolution {
        t_star: min_eigenvalue(&gram),
        t_upper: out.t_upper * scale,
        gap: (out.t_upper - out.t_star) / (1.0 + out.t_star.abs()),
        gram,
        primal_residual,
        lsq_residual: sys.lsq_residual,
        status: if out.converged { SdpStatus::Optimal } else { SdpStatus::MaxIterations },
        iterations: out.iterations,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CertificateCheck {
    pub ok: bool,
    /// `max(equality_violation, max(0, -min_eig))`.
    pub max_violation: f64,
    pub equality_violation: f64,
    pub min_eig: f64,
}

/// Independent check of a candidate `G`: every equality within `tol` and
/// `lambda_min(G) >= -tol`, both absolute.
pub fn check_certificate(g: &DMatrix<f64>, problem: &SdpProblem, tol: f64) -> Result<CertificateCheck> {
    if g.nrows() != problem.dim || g.ncols() != problem.dim {
        return Err(invalid(format!(
            "certificate is {}x{}, problem side is {}",
            g.nrows(),
            g.ncols(),
            problem.dim
        )));
    }
    let asym = (g - g.transpose()).abs().max();
    if asym > 1e-9 * (1.0 + g.abs().max()) {
        return Err(invalid("certificate matrix is not symmetric"));
    }
    let equality_violation =
        problem.constraints.iter().map(|c| (c.apply(g) - c.rhs).abs()).fold(0.0, f64::max);
    let min_eig = min_eigenvalue(g);
    let max_violation = equality_violation.max((-min_eig).max(0.0));
    Ok(CertificateCheck { ok: equality_violation <= tol && min_eig >= -tol, max_violation, equality_violation, min_eig })
}
