//! Smallest H-eigenvalue of an even-order tensor in the family.
//!
//! For even `m` the smallest H-eigenvalue equals the minimum of `f(x)` over
//! the set `sum |x_i|^m = 1`, so we minimise the degree-zero quotient
//! `R(x) = f(x) / sum x_i^m` instead. Two searches feed the result:
//!
//! * a structured one-dimensional scan over `x = (s, s, t)` and its coordinate
//!   rotations, polished by safeguarded Newton on the angle;
//! * Riemannian Newton on the unit sphere from seeded random starts.
//!
//! The returned value is the best point found, which is only an upper bound
//! on the true minimum. Disagreement between the two searches is recorded in
//! the result rather than hidden.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tensor::{dd_bound, three_index_count, two_index_count, CirculantTensor, TernaryForm, Vec3};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SolverConfig {
    pub n_starts: usize,
    pub structured_first: bool,
    pub max_iters: usize,
    /// Stationarity tolerance, relative to the absolute row sum of the tensor.
    pub tol_grad: f64,
    /// KKT residual tolerance, relative to the absolute row sum of the tensor.
    pub residual_tol: f64,
    /// Angle samples for the structured scan.
    pub grid_points: usize,
    pub seed: u64,
}

impl Default for SolverConfig {
    fn default() -> Self {
        SolverConfig {
            n_starts: 64,
            structured_first: true,
            max_iters: 100,
            tol_grad: 1e-11,
            residual_tol: 1e-9,
            grid_points: 2001,
            seed: 0x5eed_c1c0,
        }
    }
}

impl SolverConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_starts == 0 && !self.structured_first {
            return Err(Error::InvalidArgument("at least one start is required".into()));
        }
        if !(self.tol_grad > 0.0 && self.residual_tol > 0.0) {
            return Err(Error::InvalidArgument("solver tolerances must be positive".into()));
        }
        if self.grid_points < 8 {
            return Err(Error::InvalidArgument("structured grid needs at least 8 points".into()));
        }
        Ok(())
    }

    /// Same configuration with doubled iteration caps.
    pub fn doubled(&self) -> Self {
        SolverConfig { max_iters: 2 * self.max_iters, ..*self }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EigenResult {
    pub lambda: f64,
    /// Minimiser scaled to `sum |x_i|^m = 1`, in canonical order.
    pub x: Vec3,
    /// `||A x^(m-1) - lambda x^[m-1]||_inf` divided by `max(1, |d| + row sum)`.
    pub residual: f64,
    pub starts_used: usize,
    pub structured_lambda: Option<f64>,
    pub multistart_lambda: Option<f64>,
    /// A multistart point that beat the structured scan by more than the
    /// stationarity tolerance, if any.
    pub counterexample: Option<Vec3>,
}

/// Scale used for relative tolerances: `max(1, |d| + off-diagonal row sum)`.
pub fn tensor_scale(t: &CirculantTensor) -> f64 {
    (t.d.abs() + dd_bound(t.m, t.u, t.c)).max(1.0)
}

struct Quotient {
    m: u32,
    form: TernaryForm,
}

struct QuotientEval {
    value: f64,
    grad: [f64; 3],
    hess: [[f64; 3]; 3],
}

impl Quotient {
    fn new(t: &CirculantTensor) -> Self {
        Quotient { m: t.m, form: t.to_form() }
    }

    fn value(&self, x: &Vec3) -> f64 {
        let g: f64 = x.0.iter().map(|v| v.powi(self.m as i32)).sum();
        self.form.eval(x) / g
    }

    fn eval(&self, x: &Vec3) -> QuotientEval {
        let m = self.m as i32;
        let mf = self.m as f64;
        let (f, df, hf) = self.form.derivatives(x);
        let g: f64 = x.0.iter().map(|v| v.powi(m)).sum();
        let dg = x.0.map(|v| mf * v.powi(m - 1));
        let r = f / g;
        let mut grad = [0.0; 3];
        for i in 0..3 {
            grad[i] = (df[i] - r * dg[i]) / g;
        }
        let mut hess = [[0.0; 3]; 3];
        for i in 0..3 {
            for j in 0..3 {
                let hg = if i == j { mf * (mf - 1.0) * x.0[i].powi(m - 2) } else { 0.0 };
                hess[i][j] = (hf[i][j] - r * hg - grad[i] * dg[j] - dg[i] * grad[j]) / g;
            }
        }
        QuotientEval { value: r, grad, hess }
    }
}

fn dot(a: &[f64; 3], b: &[f64; 3]) -> f64 {
    a[0] * b[0] + a[1] * b[1] + a[2] * b[2]
}

fn quad(h: &[[f64; 3]; 3], a: &[f64; 3], b: &[f64; 3]) -> f64 {
    let mut s = 0.0;
    for i in 0..3 {
        for j in 0..3 {
            s += a[i] * h[i][j] * b[j];
        }
    }
    s
}

fn unit(x: [f64; 3]) -> [f64; 3] {
    let n = dot(&x, &x).sqrt();
    x.map(|v| v / n)
}

/// Orthonormal basis of the tangent plane at unit `x`.
fn tangent_basis(x: &[f64; 3]) -> ([f64; 3], [f64; 3]) {
    let k = (0..3).min_by(|&a, &b| x[a].abs().total_cmp(&x[b].abs())).unwrap();
    let mut e = [0.0; 3];
    e[k] = 1.0;
    let p = dot(&e, x);
    let e1 = unit([e[0] - p * x[0], e[1] - p * x[1], e[2] - p * x[2]]);
    let e2 = [
        x[1] * e1[2] - x[2] * e1[1],
        x[2] * e1[0] - x[0] * e1[2],
        x[0] * e1[1] - x[1] * e1[0],
    ];
    (e1, e2)
}

/// Riemannian Newton on the unit sphere with a Levenberg shift and
/// backtracking. Returns the final unit point.
fn sphere_newton(q: &Quotient, start: [f64; 3], scale: f64, cfg: &SolverConfig) -> [f64; 3] {
    let mut x = unit(start);
    let gtol = cfg.tol_grad * scale;
    for _ in 0..cfg.max_iters {
        let ev = q.eval(&Vec3(x));
        let (e1, e2) = tangent_basis(&x);
        let g = [dot(&e1, &ev.grad), dot(&e2, &ev.grad)];
        let gnorm = (g[0] * g[0] + g[1] * g[1]).sqrt();
        if gnorm <= gtol {
            break;
        }
        let h11 = quad(&ev.hess, &e1, &e1);
        let h12 = quad(&ev.hess, &e1, &e2);
        let h22 = quad(&ev.hess, &e2, &e2);
        let tr = 0.5 * (h11 + h22);
        let disc = (0.25 * (h11 - h22).powi(2) + h12 * h12).sqrt();
        let lo = tr - disc;
        let shift = if lo > 1e-12 * scale { 0.0 } else { -lo + 1e-6 * scale.max(disc.abs()) };
        let (a, b, c) = (h11 + shift, h12, h22 + shift);
        let det = a * c - b * b;
        let step = [-(c * g[0] - b * g[1]) / det, -(-b * g[0] + a * g[1]) / det];

        let mut alpha = 1.0;
        let mut accepted = false;
        for _ in 0..60 {
            let trial = unit([
                x[0] + alpha * (step[0] * e1[0] + step[1] * e2[0]),
                x[1] + alpha * (step[0] * e1[1] + step[1] * e2[1]),
                x[2] + alpha * (step[0] * e1[2] + step[1] * e2[2]),
            ]);
            let v = q.value(&Vec3(trial));
            if v <= ev.value + 1e-4 * alpha * (g[0] * step[0] + g[1] * step[1]) || (alpha < 1e-3 && v <= ev.value) {
                x = trial;
                accepted = true;
                break;
            }
            alpha *= 0.5;
        }
        if !accepted {
            break;
        }
    }
    x
}

/// Structured point for angle `theta`; coordinate `rot` carries `sin`.
fn structured_point(theta: f64, rot: usize) -> [f64; 3] {
    let (s, c) = theta.sin_cos();
    let mut v = [c, c, c];
    v[rot] = s;
    v
}

fn structured_derivs(theta: f64, rot: usize) -> ([f64; 3], [f64; 3]) {
    let (s, c) = theta.sin_cos();
    let mut d1 = [-s, -s, -s];
    d1[rot] = c;
    let mut d2 = [-c, -c, -c];
    d2[rot] = -s;
    (d1, d2)
}

/// Safeguarded Newton on `h(theta) = R(v(theta))` inside `[lo, hi]`.
fn polish_angle(q: &Quotient, rot: usize, mut lo: f64, mut hi: f64, theta0: f64, max_iters: usize) -> f64 {
    let dh = |th: f64| {
        let v = structured_point(th, rot);
        let ev = q.eval(&Vec3(v));
        let (d1, d2) = structured_derivs(th, rot);
        (dot(&ev.grad, &d1), quad(&ev.hess, &d1, &d1) + dot(&ev.grad, &d2))
    };
    let (dlo, _) = dh(lo);
    let (dhi, _) = dh(hi);
    let bracketed = dlo <= 0.0 && dhi >= 0.0;
    let mut th = theta0;
    for _ in 0..max_iters.max(60) {
        let (d1, d2) = dh(th);
        if d1 == 0.0 {
            break;
        }
        if bracketed {
            if d1 < 0.0 {
                lo = th;
            } else {
                hi = th;
            }
        }
        let newton = if d2 > 0.0 { th - d1 / d2 } else { f64::NAN };
        let next = if newton.is_finite() && newton > lo && newton < hi {
            newton
        } else if bracketed {
            0.5 * (lo + hi)
        } else {
            break;
        };
        if (next - th).abs() <= 1e-16 * th.abs().max(1.0) {
            th = next;
            break;
        }
        th = next;
    }
    th
}

struct Candidate {
    lambda: f64,
    x: Vec3,
    residual: f64,
}

fn make_candidate(t: &CirculantTensor, v: [f64; 3], scale: f64) -> Candidate {
    let x = Vec3(v).normalize_p(t.m);
    let lambda = t.eval_form(&x);
    let ax = t.apply_power(&x);
    let m1 = t.m as i32 - 1;
    let residual = (0..3)
        .map(|i| (ax.0[i] - lambda * x.0[i].powi(m1)).abs())
        .fold(0.0, f64::max)
        / scale;
    Candidate { lambda, x: canonical(&x), residual }
}

/// Canonical representative under coordinate permutations and `x -> -x`
/// (both symmetries of every even-order form in the family): coordinates
/// sorted descending, then the lexicographically larger of `x` and `-x`,
/// so `(1, 1, 1)` and `(2, -1, -1)` come out in that form.
pub fn canonical(x: &Vec3) -> Vec3 {
    let sort_desc = |mut v: [f64; 3]| {
        v.sort_by(|a, b| b.total_cmp(a));
        v
    };
    let a = sort_desc(x.0);
    let b = sort_desc(x.0.map(|v| -v));
    let first_diff = a.iter().zip(&b).find(|(p, q)| p != q);
    match first_diff {
        Some((p, q)) if q > p => Vec3(b),
        _ => Vec3(a),
    }
}

fn lex_greater(a: &Vec3, b: &Vec3) -> bool {
    for i in 0..3 {
        if a.0[i] != b.0[i] {
            return a.0[i] > b.0[i];
        }
    }
    false
}

/// Picks the lowest value; among values within `tie` of it, the
/// lexicographically largest canonical point.
fn select(cands: &[Candidate], tie: f64) -> Option<&Candidate> {
    let best = cands.iter().map(|c| c.lambda).fold(f64::INFINITY, f64::min);
    cands
        .iter()
        .filter(|c| c.lambda <= best + tie)
        .reduce(|a, b| if lex_greater(&b.x, &a.x) { b } else { a })
}

fn structured_search(t: &CirculantTensor, q: &Quotient, scale: f64, cfg: &SolverConfig) -> Vec<Candidate> {
    let n = cfg.grid_points;
    let h = std::f64::consts::PI / n as f64;
    let mut out = Vec::new();
    for rot in 0..3 {
        let vals: Vec<f64> = (0..n).map(|j| q.value(&Vec3(structured_point(j as f64 * h, rot)))).collect();
        // R(v(theta + pi)) = R(v(theta)), so the grid is cyclic.
        let mut minima: Vec<usize> = (0..n)
            .filter(|&j| {
                let prev = vals[(j + n - 1) % n];
                let next = vals[(j + 1) % n];
                vals[j] <= prev && vals[j] <= next
            })
            .collect();
        minima.sort_by(|&a, &b| vals[a].total_cmp(&vals[b]));
        minima.truncate(8);
        for j in minima {
            let th0 = j as f64 * h;
            let th = polish_angle(q, rot, th0 - h, th0 + h, th0, cfg.max_iters);
            out.push(make_candidate(t, structured_point(th, rot), scale));
        }
    }
    out
}

fn multistart(t: &CirculantTensor, q: &Quotient, scale: f64, cfg: &SolverConfig) -> Vec<Candidate> {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut out = Vec::with_capacity(cfg.n_starts);
    while out.len() < cfg.n_starts {
        let v = [rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)];
        let r2 = dot(&v, &v);
        if !(1e-6..=1.0).contains(&r2) {
            continue;
        }
        let x = sphere_newton(q, v, scale, cfg);
        out.push(make_candidate(t, x, scale));
    }
    out
}

/// Smallest H-eigenvalue and a minimiser.
pub fn lambda_min(t: &CirculantTensor, cfg: &SolverConfig) -> Result<EigenResult> {
    t.require_even()?;
    cfg.validate()?;
    let scale = tensor_scale(t);
    let q = Quotient::new(t);
    let tie = cfg.tol_grad * scale;

    let structured = if cfg.structured_first { structured_search(t, &q, scale, cfg) } else { Vec::new() };
    let general = multistart(t, &q, scale, cfg);
    let starts_used = structured.len() + general.len();

    let ok = |c: &&Candidate| c.residual <= cfg.residual_tol;
    let s_ok: Vec<&Candidate> = structured.iter().filter(ok).collect();
    let g_ok: Vec<&Candidate> = general.iter().filter(ok).collect();
    let best_of = |v: &[&Candidate]| v.iter().map(|c| c.lambda).reduce(f64::min);
    let structured_lambda = best_of(&s_ok);
    let multistart_lambda = best_of(&g_ok);

    let counterexample = match (structured_lambda, multistart_lambda) {
        (Some(s), Some(g)) if g < s - tie => g_ok.iter().find(|c| c.lambda == g).map(|c| c.x),
        _ => None,
    };

    let pool: Vec<Candidate> = s_ok
        .iter()
        .chain(g_ok.iter())
        .map(|c| Candidate { lambda: c.lambda, x: c.x, residual: c.residual })
        .collect();
    // Structured points win ties.
    let chosen = match (structured_lambda, select(&pool, tie)) {
        (Some(s), Some(best)) if s <= best.lambda + tie => {
            let s_pool: Vec<Candidate> =
                s_ok.iter().map(|c| Candidate { lambda: c.lambda, x: c.x, residual: c.residual }).collect();
            select(&s_pool, tie).map(|c| Candidate { lambda: c.lambda, x: c.x, residual: c.residual })
        }
        (_, best) => best.map(|c| Candidate { lambda: c.lambda, x: c.x, residual: c.residual }),
    };

    match chosen {
        Some(c) => Ok(EigenResult {
            lambda: c.lambda,
            x: c.x,
            residual: c.residual,
            starts_used,
            structured_lambda,
            multistart_lambda,
            counterexample,
        }),
        None => {
            let best = structured
                .iter()
                .chain(general.iter())
                .min_by(|a, b| a.residual.total_cmp(&b.residual))
                .expect("at least one start");
            Err(Error::SolverFailure {
                best: Box::new(EigenResult {
                    lambda: best.lambda,
                    x: best.x,
                    residual: best.residual,
                    starts_used,
                    structured_lambda,
                    multistart_lambda,
                    counterexample,
                }),
            })
        }
    }
}

/// PSD verdict: `lambda_min >= -tol`, with the eigen evidence either way.
pub fn is_psd(t: &CirculantTensor, cfg: &SolverConfig, tol: f64) -> Result<(bool, EigenResult)> {
    let r = lambda_min(t, cfg)?;
    Ok((r.lambda >= -tol, r))
}

/// `B - u T = A(m, 3^(m-1) - 2^m + 1 - u (2^m - 2), u, -1)`.
pub fn b_minus_ut(m: u32, u: f64) -> Result<CirculantTensor> {
    CirculantTensor::new(m, three_index_count(m) as f64 - u * two_index_count(m) as f64, u, -1.0)
}

/// `-u T - B = A(m, -(3^(m-1) - 2^m + 1) - u (2^m - 2), u, 1)`.
pub fn minus_ut_minus_b(m: u32, u: f64) -> Result<CirculantTensor> {
    CirculantTensor::new(m, -(three_index_count(m) as f64) - u * two_index_count(m) as f64, u, 1.0)
}

/// `phi(u) = lambda_min(B - u T)`.
pub fn phi(m: u32, u: f64, cfg: &SolverConfig) -> Result<EigenResult> {
    lambda_min(&b_minus_ut(m, u)?, cfg)
}

/// `psi(u) = lambda_min(-u T - B)`.
pub fn psi(m: u32, u: f64, cfg: &SolverConfig) -> Result<EigenResult> {
    lambda_min(&minus_ut_minus_b(m, u)?, cfg)
}
