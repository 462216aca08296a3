//! The tensor family `A(m, d, u, c)` and its homogeneous form.
//!
//! An order-`m` three dimensional strongly symmetric circulant tensor is fixed
//! by three numbers: the diagonal entry `d`, the entry `u` shared by every
//! index tuple with exactly two distinct values, and the entry `c` shared by
//! every tuple that uses all three values. The dense `3^m` array is never
//! built; everything is computed from the grouped expansion of the form
//!
//! ```text
//! f(x) = d (x1^m + x2^m + x3^m)
//!      + u sum_{p=1}^{m-1} C(m,p) (x1^{m-p} x2^p + x1^{m-p} x3^p + x2^{m-p} x3^p)
//!      + c sum_{p,q >= 1, p+q <= m-1} C(m,p) C(m-p,q) x1^{m-p-q} x2^p x3^q
//! ```

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};

/// Largest supported order. Every binomial and power used below stays exact
/// in 64-bit integers up to this order.
pub const MAX_ORDER: u32 = 20;

/// `2^m` exactly.
pub fn pow2(m: u32) -> i128 {
    1i128 << m
}

/// `3^m` exactly.
pub fn pow3(m: u32) -> i128 {
    3i128.pow(m)
}

/// Binomial coefficient `C(n, k)` in exact integer arithmetic.
pub fn binomial(n: u32, k: u32) -> u64 {
    if k > n {
        return 0;
    }
    let k = k.min(n - k);
    let mut acc: u64 = 1;
    for i in 0..k {
        // acc * (n - i) is divisible by (i + 1) at every step.
        acc = acc * u64::from(n - i) / u64::from(i + 1);
    }
    acc
}

/// Multinomial coefficient `n! / (a! b! g!)` with `a + b + g = n`.
pub fn multinomial(a: u32, b: u32, g: u32) -> u64 {
    binomial(a + b + g, a) * binomial(b + g, b)
}

/// Number of off-diagonal entries in one row with exactly two distinct
/// indices: `2^m - 2`.
pub fn two_index_count(m: u32) -> i128 {
    pow2(m) - 2
}

/// Number of off-diagonal entries in one row using all three indices:
/// `3^(m-1) - 2^m + 1`.
pub fn three_index_count(m: u32) -> i128 {
    pow3(m - 1) - pow2(m) + 1
}

/// Off-diagonal absolute row sum, `|u|(2^m - 2) + |c|(3^(m-1) - 2^m + 1)`.
///
/// All three rows share this value; a diagonal entry at least this large makes
/// the tensor diagonally dominated.
pub fn dd_bound(m: u32, u: f64, c: f64) -> f64 {
    u.abs() * two_index_count(m) as f64 + c.abs() * three_index_count(m) as f64
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Vec3(pub [f64; 3]);

impl Vec3 {
    pub fn new(x1: f64, x2: f64, x3: f64) -> Self {
        Vec3([x1, x2, x3])
    }

    pub fn is_finite(&self) -> bool {
        self.0.iter().all(|v| v.is_finite())
    }

    pub fn is_zero(&self) -> bool {
        self.0.iter().all(|&v| v == 0.0)
    }

    pub fn norm2(&self) -> f64 {
        self.0.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    pub fn max_abs(&self) -> f64 {
        self.0.iter().fold(0.0, |acc, v| acc.max(v.abs()))
    }

    /// `(sum |x_i|^p)^(1/p)`.
    pub fn p_norm(&self, p: u32) -> f64 {
        let scale = self.max_abs();
        if scale == 0.0 {
            return 0.0;
        }
        let s: f64 = self.0.iter().map(|v| (v.abs() / scale).powi(p as i32)).sum();
        scale * s.powf(1.0 / p as f64)
    }

    pub fn scale(&self, alpha: f64) -> Self {
        Vec3(self.0.map(|v| v * alpha))
    }

    /// Rescales so that `sum |x_i|^p = 1`.
    pub fn normalize_p(&self, p: u32) -> Self {
        self.scale(1.0 / self.p_norm(p))
    }
}

impl From<[f64; 3]> for Vec3 {
    fn from(v: [f64; 3]) -> Self {
        Vec3(v)
    }
}

/// The tensor `A(m, d, u, c)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CirculantTensor {
    pub m: u32,
    pub d: f64,
    pub u: f64,
    pub c: f64,
}

impl CirculantTensor {
    pub fn new(m: u32, d: f64, u: f64, c: f64) -> Result<Self> {
        if m < 3 {
            return Err(invalid(format!("order m = {m} must be at least 3")));
        }
        if m > MAX_ORDER {
            return Err(invalid(format!("order m = {m} exceeds the supported maximum {MAX_ORDER}")));
        }
        if !(d.is_finite() && u.is_finite() && c.is_finite()) {
            return Err(invalid("tensor entries must be finite"));
        }
        Ok(CirculantTensor { m, d, u, c })
    }

    /// `B = A(m, 3^(m-1) - 2^m + 1, 0, -1)`.
    pub fn reference_b(m: u32) -> Result<Self> {
        Self::new(m, three_index_count(m) as f64, 0.0, -1.0)
    }

    /// `T = A(m, 2^m - 2, -1, 0)`.
    pub fn reference_t(m: u32) -> Result<Self> {
        Self::new(m, two_index_count(m) as f64, -1.0, 0.0)
    }

    pub fn is_even(&self) -> bool {
        self.m.is_multiple_of(2)
    }

    /// Errors unless the order is even and at least 4, which every positivity
    /// question requires.
    pub fn require_even(&self) -> Result<()> {
        require_even_order(self.m)
    }

    pub fn with_diagonal(&self, d: f64) -> Self {
        CirculantTensor { d, ..*self }
    }

    pub fn scaled(&self, alpha: f64) -> Self {
        CirculantTensor { m: self.m, d: alpha * self.d, u: alpha * self.u, c: alpha * self.c }
    }

    /// `self + alpha * other`; both must have the same order.
    pub fn axpy(&self, alpha: f64, other: &Self) -> Result<Self> {
        if self.m != other.m {
            return Err(invalid(format!("order mismatch: {} vs {}", self.m, other.m)));
        }
        Self::new(self.m, self.d + alpha * other.d, self.u + alpha * other.u, self.c + alpha * other.c)
    }

    /// Entry value for a set of `distinct` index values.
    fn value_for_support(&self, distinct: usize) -> f64 {
        match distinct {
            1 => self.d,
            2 => self.u,
            _ => self.c,
        }
    }

    /// Entry `a_{i_1 ... i_m}` with one-based indices.
    pub fn entry(&self, idx: &[usize]) -> Result<f64> {
        if idx.len() != self.m as usize {
            return Err(invalid(format!("expected {} indices, got {}", self.m, idx.len())));
        }
        let mut seen = [false; 3];
        for &i in idx {
            if !(1..=3).contains(&i) {
                return Err(invalid(format!("index {i} outside 1..=3")));
            }
            seen[i - 1] = true;
        }
        Ok(self.value_for_support(seen.iter().filter(|&&s| s).count()))
    }

    /// Coefficient of `x^(a,b,g)` in the form, `a + b + g = m`.
    pub fn coefficient(&self, e: [u32; 3]) -> f64 {
        let distinct = e.iter().filter(|&&v| v > 0).count();
        multinomial(e[0], e[1], e[2]) as f64 * self.value_for_support(distinct)
    }

    /// `f(x) = A x^m` through the grouped expansion.
    pub fn eval_form(&self, x: &Vec3) -> f64 {
        let m = self.m as usize;
        let pw = powers(x, m);
        let diag = pw[0][m] + pw[1][m] + pw[2][m];

        let mut two = 0.0;
        for p in 1..m {
            let b = binomial(self.m, p as u32) as f64;
            two += b * (pw[0][m - p] * pw[1][p] + pw[0][m - p] * pw[2][p] + pw[1][m - p] * pw[2][p]);
        }

        let mut three = 0.0;
        for p in 1..m.saturating_sub(1) {
            let bp = binomial(self.m, p as u32) as f64;
            for q in 1..(m - p) {
                let bq = binomial((m - p) as u32, q as u32) as f64;
                three += bp * bq * pw[0][m - p - q] * pw[1][p] * pw[2][q];
            }
        }
        self.d * diag + self.u * two + self.c * three
    }

    /// The vector `A x^(m-1)`.
    ///
    /// Component `i` groups the trailing `m - 1` indices by their exponent
    /// pattern; the entry for each group is fixed by the support of the
    /// pattern together with `i`.
    pub fn apply_power(&self, x: &Vec3) -> Vec3 {
        let n = self.m - 1;
        let pw = powers(x, n as usize);
        let mut out = [0.0; 3];
        for a in 0..=n {
            for b in 0..=(n - a) {
                let g = n - a - b;
                let mono = multinomial(a, b, g) as f64 * pw[0][a as usize] * pw[1][b as usize] * pw[2][g as usize];
                let support = [a > 0, b > 0, g > 0];
                for (i, o) in out.iter_mut().enumerate() {
                    let mut s = support;
                    s[i] = true;
                    let distinct = s.iter().filter(|&&v| v).count();
                    *o += self.value_for_support(distinct) * mono;
                }
            }
        }
        Vec3(out)
    }

    pub fn to_form(&self) -> TernaryForm {
        let mut coeffs = BTreeMap::new();
        for e in exponent_triples(self.m) {
            coeffs.insert(e, self.coefficient(e));
        }
        TernaryForm { m: self.m, coeffs }
    }
}

pub(crate) fn require_even_order(m: u32) -> Result<()> {
    if !m.is_multiple_of(2) || m < 4 {
        return Err(invalid(format!("order m = {m} must be even and at least 4")));
    }
    if m > MAX_ORDER {
        return Err(invalid(format!("order m = {m} exceeds the supported maximum {MAX_ORDER}")));
    }
    Ok(())
}

/// `pw[i][p] = x_i^p` for `p = 0..=n`.
fn powers(x: &Vec3, n: usize) -> [Vec<f64>; 3] {
    let mk = |v: f64| {
        let mut out = Vec::with_capacity(n + 1);
        let mut acc = 1.0;
        for _ in 0..=n {
            out.push(acc);
            acc *= v;
        }
        out
    };
    [mk(x.0[0]), mk(x.0[1]), mk(x.0[2])]
}

/// All `(a, b, g)` with `a + b + g = n`, lexicographically descending.
pub fn exponent_triples(n: u32) -> Vec<[u32; 3]> {
    let mut out = Vec::with_capacity(((n + 1) * (n + 2) / 2) as usize);
    for a in (0..=n).rev() {
        for b in (0..=(n - a)).rev() {
            out.push([a, b, n - a - b]);
        }
    }
    out
}

/// A homogeneous polynomial of degree `m` in three variables.
///
/// Triples missing from the map have coefficient zero.
#[derive(Debug, Clone, PartialEq)]
pub struct TernaryForm {
    pub m: u32,
    coeffs: BTreeMap<[u32; 3], f64>,
}

impl TernaryForm {
    pub fn new(m: u32, coeffs: BTreeMap<[u32; 3], f64>) -> Result<Self> {
        if let Some(bad) = coeffs.keys().find(|e| e.iter().sum::<u32>() != m) {
            return Err(invalid(format!("exponent {bad:?} does not have degree {m}")));
        }
        Ok(TernaryForm { m, coeffs })
    }

    pub fn coeff(&self, e: [u32; 3]) -> f64 {
        self.coeffs.get(&e).copied().unwrap_or(0.0)
    }

    pub fn terms(&self) -> impl Iterator<Item = ([u32; 3], f64)> + '_ {
        self.coeffs.iter().map(|(e, c)| (*e, *c))
    }

    pub fn max_abs_coeff(&self) -> f64 {
        self.coeffs.values().fold(0.0, |acc, c| acc.max(c.abs()))
    }

    pub fn eval(&self, x: &Vec3) -> f64 {
        let pw = powers(x, self.m as usize);
        self.terms()
            .map(|(e, c)| c * pw[0][e[0] as usize] * pw[1][e[1] as usize] * pw[2][e[2] as usize])
            .sum()
    }

    /// Value, gradient and Hessian at `x`.
    pub fn derivatives(&self, x: &Vec3) -> (f64, [f64; 3], [[f64; 3]; 3]) {
        let pw = powers(x, self.m as usize);
        // x_i^(e-k) with a zero guard for negative exponents.
        let p = |i: usize, e: u32, k: u32| if e >= k { pw[i][(e - k) as usize] } else { 0.0 };
        let mut val = 0.0;
        let mut grad = [0.0; 3];
        let mut hess = [[0.0; 3]; 3];
        for (e, c) in self.terms() {
            val += c * p(0, e[0], 0) * p(1, e[1], 0) * p(2, e[2], 0);
            for i in 0..3 {
                if e[i] == 0 {
                    continue;
                }
                let mut k = [0u32; 3];
                k[i] = 1;
                grad[i] += c * e[i] as f64 * p(0, e[0], k[0]) * p(1, e[1], k[1]) * p(2, e[2], k[2]);
                for j in i..3 {
                    let mut kk = k;
                    kk[j] += 1;
                    let fac = if i == j { (e[i] * (e[i] - 1)) as f64 } else { (e[i] * e[j]) as f64 };
                    if fac == 0.0 {
                        continue;
                    }
                    let h = c * fac * p(0, e[0], kk[0]) * p(1, e[1], kk[1]) * p(2, e[2], kk[2]);
                    hess[i][j] += h;
                    if i != j {
                        hess[j][i] += h;
                    }
                }
            }
        }
        (val, grad, hess)
    }
}
