//! One line per acceptance criterion; the test fails if any line fails.

use std::io::Write;

use circsos::boundary::{analyze, breakpoint_u0, breakpoint_v0, n_value, u0_formula, v0_formula, AnalysisConfig};
use circsos::heig::{lambda_min, phi, psi, SolverConfig};
use circsos::sdp::{check_certificate, Constraint, SdpProblem};
use circsos::sos::{certify_pns_free, is_sos, m_value, BundleStatus, GramCertificate, SosConfig};
use circsos::tensor::{exponent_triples, three_index_count, two_index_count};
use circsos::{CirculantTensor, TernaryForm, Vec3};
use circsos_cli::fixture::{self, Check, Fixture};
use circsos_cli::table::run_rows;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Writes past the test harness capture so the lines show in plain `cargo test` output.
fn report(line: &str) {
    let mut out = std::io::stdout().lock();
    let _ = writeln!(out, "{line}");
    let _ = out.flush();
}

struct Outcome {
    pass: bool,
    detail: String,
}

impl Outcome {
    fn new(failures: Vec<String>, summary: String) -> Self {
        if failures.is_empty() {
            Outcome { pass: true, detail: summary }
        } else {
            Outcome { pass: false, detail: failures.join("; ") }
        }
    }
}

fn fixture() -> Fixture {
    fixture::load(&fixture::default_path()).expect("bundled fixture")
}

fn jobs() -> usize {
    std::thread::available_parallelism().map(|n| n.get()).unwrap_or(1)
}

fn table_one() -> Outcome {
    let fx = fixture();
    let cfg = AnalysisConfig { certify: false, ..AnalysisConfig::default() };
    let mut failures = Vec::new();
    let mut worst: f64 = 0.0;
    for row in fx.rows.iter().filter(|r| r.table_id == 1) {
        let tol = if row.m == 14 { 5e-4 } else { 1e-4 };
        let r = analyze(row.m, 1.0, 0.0, &cfg).unwrap();
        let pairs = [("M", r.m_value, row.expected_m_value().unwrap()), ("N", r.n, row.expected_n_value().unwrap())];
        for (name, got, want) in pairs {
            match got {
                Some(g) if (g - want).abs() <= tol => worst = worst.max((g - want).abs()),
                other => failures.push(format!("m={} {name}={other:?} vs {want}", row.m)),
            }
        }
    }
    Outcome::new(failures, format!("m=6..14, max deviation {worst:.2e}"))
}

fn closed_form_value(m: u32, u: f64, c: f64) -> f64 {
    -u * two_index_count(m) as f64 - c * three_index_count(m) as f64
}

fn closed_forms() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(20);
    let eigen = SolverConfig::default();
    let mut failures = Vec::new();
    let mut cases = Vec::new();
    for _ in 0..20 {
        let m = [4u32, 6, 8, 10, 12][rng.gen_range(0..5)];
        cases.push((m, -rng.gen_range(0.0..5.0f64), -rng.gen_range(0.0..5.0f64), None));
    }
    for _ in 0..5 {
        let m = [4u32, 6, 8, 10, 12][rng.gen_range(0..5)];
        let u = rng.gen_range(0.1..5.0f64);
        cases.push((m, u, u, Some(u)));
    }
    for (m, u, c, equal) in cases {
        let want = equal.unwrap_or_else(|| closed_form_value(m, u, c));
        let n = n_value(m, u, c, &eigen).unwrap().value;
        let mv = m_value(m, u, c, &SosConfig::default().for_order(m)).unwrap().value;
        if (n - want).abs() > 1e-9 || (mv - want).abs() > 1e-9 {
            failures.push(format!("m={m} u={u} c={c}: N={n} M={mv} want {want}"));
        }
    }
    Outcome::new(failures, "20 points with u,c <= 0 and 5 with u = c > 0".into())
}

fn tables_two_to_nine() -> Outcome {
    let fx = fixture();
    let rows: Vec<_> = fx.rows.iter().filter(|r| r.table_id >= 2).cloned().collect();
    let outcomes = run_rows(&rows, &AnalysisConfig::default(), jobs()).unwrap();
    let failures = outcomes
        .iter()
        .filter(|o| !o.pass)
        .map(|o| format!("table {} m={} u={}: {}", o.row.table_id, o.row.m, o.row.u, o.failures.join(", ")))
        .collect();
    for o in outcomes.iter().filter(|o| o.row.check == Check::Flagged) {
        let n = o.n.unwrap_or(f64::NAN);
        let dev = (n - o.row.expected_n_value().unwrap()).abs();
        report(&format!("    note: flagged row m={} u={} |N - printed N| = {dev:.3e} (strict 5e-3 absolute: {})", o.row.m, o.row.u, dev <= 5e-3));
    }
    let exact = outcomes.iter().filter(|o| o.row.check == Check::Exact).count();
    Outcome::new(failures, format!("{} rows, {exact} exact at 1e-9", outcomes.len()))
}

fn breakpoints() -> Outcome {
    let mut failures = Vec::new();
    let mut worst = f64::INFINITY;
    for m in [6u32, 8, 10, 12, 14] {
        let eigen = SosConfig::default().for_order(m).eigen;
        for bp in [breakpoint_u0(m, &eigen), breakpoint_v0(m, &eigen)] {
            match bp.lambda {
                Some(l) if l >= -1e-7 => worst = worst.min(l),
                l => failures.push(format!("{bp}: lambda {l:?}")),
            }
        }
    }
    let fx = fixture();
    for (table, m, c) in [(2, 6, -1), (3, 8, -1), (4, 10, -1), (5, 12, -1), (6, 6, 1), (7, 8, 1), (8, 10, 1), (9, 12, 1)] {
        let want = if c == -1 { u0_formula(m) } else { v0_formula(m) };
        let found = fx.rows.iter().any(|r| r.table_id == table && r.m == m && r.c == c && r.u_exact().unwrap() == want);
        if !found {
            failures.push(format!("table {table} has no kink row at u = {want}"));
        }
    }
    Outcome::new(failures, format!("m=6..14, smallest lambda {worst:.2e}; kink abscissas exact"))
}

/// Plain-basis Gram equations straight from the coefficients.
fn plain_problem(form: &TernaryForm) -> SdpProblem {
    let basis = exponent_triples(form.m / 2);
    let constraints = exponent_triples(form.m)
        .into_iter()
        .map(|mu| {
            let mut entries = Vec::new();
            for (i, a) in basis.iter().enumerate() {
                for (j, b) in basis.iter().enumerate().skip(i) {
                    if [a[0] + b[0], a[1] + b[1], a[2] + b[2]] == mu {
                        entries.push((i, j, 1.0));
                    }
                }
            }
            Constraint::new(entries, form.coeff(mu))
        })
        .collect();
    SdpProblem::new(basis.len(), constraints).unwrap()
}

fn verifies(cert: &GramCertificate, t: &CirculantTensor) -> bool {
    let form = t.to_form();
    let tol = 1e-7 * form.max_abs_coeff().max(1.0);
    check_certificate(&cert.gram, &plain_problem(&form), tol).map(|c| c.ok).unwrap_or(false)
}

fn brute_form(t: &CirculantTensor, x: &Vec3) -> (f64, f64) {
    let (mut sum, mut abs) = (0.0, 0.0);
    for mut k in 0..3usize.pow(t.m) {
        let idx: Vec<usize> = (0..t.m)
            .map(|_| {
                let i = k % 3;
                k /= 3;
                i + 1
            })
            .collect();
        let term = t.entry(&idx).unwrap() * idx.iter().map(|&i| x.0[i - 1]).product::<f64>();
        sum += term;
        abs += term.abs();
    }
    (sum, abs)
}

fn properties() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let eigen = SolverConfig { n_starts: 16, ..SolverConfig::default() };
    let sos_cfg = SosConfig { eigen, ..SosConfig::default() };
    let mut failures = Vec::new();
    let point = |rng: &mut ChaCha8Rng| Vec3::new(rng.gen_range(-2.0..2.0), rng.gen_range(-2.0..2.0), rng.gen_range(-2.0..2.0));
    let coeffs = |rng: &mut ChaCha8Rng| (rng.gen_range(-20.0..20.0f64), rng.gen_range(-5.0..5.0f64), rng.gen_range(-5.0..5.0f64));

    // (a) contraction
    for i in 0..100 {
        let m = if i % 2 == 0 { 4 } else { 6 };
        let (d, u, c) = coeffs(&mut rng);
        let t = CirculantTensor::new(m, d, u, c).unwrap();
        let x = point(&mut rng);
        let (brute, scale) = brute_form(&t, &x);
        if (t.eval_form(&x) - brute).abs() > 1e-10 * scale.max(1e-300) {
            failures.push(format!("(a) m={m} d={d} u={u} c={c}"));
        }
    }
    // (b) gradient = m A x^(m-1)
    for _ in 0..50 {
        let m = [4u32, 6, 8][rng.gen_range(0..3)];
        let (d, u, c) = coeffs(&mut rng);
        let t = CirculantTensor::new(m, d, u, c).unwrap();
        let x = point(&mut rng);
        let grad = t.apply_power(&x).scale(m as f64);
        let h = 1e-5;
        for i in 0..3 {
            let (mut xp, mut xm) = (x, x);
            xp.0[i] += h;
            xm.0[i] -= h;
            let fd = (t.eval_form(&xp) - t.eval_form(&xm)) / (2.0 * h);
            if (fd - grad.0[i]).abs() > 1e-4 * grad.max_abs().max(1.0) {
                failures.push(format!("(b) m={m} component {i}: {fd} vs {}", grad.0[i]));
            }
        }
    }
    // (c) upward closure
    for _ in 0..20 {
        let u = rng.gen_range(-3.0..3.0);
        let c = [-1.0, 0.0, 1.0][rng.gen_range(0..3)];
        let n = n_value(6, u, c, &eigen).unwrap().value;
        let d1 = n + rng.gen_range(-0.5..0.5);
        let d2 = d1 + rng.gen_range(0.0..1.0);
        let v1 = is_sos(&CirculantTensor::new(6, d1, u, c).unwrap(), &sos_cfg).unwrap().sos;
        let v2 = is_sos(&CirculantTensor::new(6, d2, u, c).unwrap(), &sos_cfg).unwrap().sos;
        if v1 && !v2 {
            failures.push(format!("(c) u={u} c={c}: SOS at {d1}, not at {d2}"));
        }
    }
    // (d) shift covariance
    for _ in 0..20 {
        let (d, u, c) = coeffs(&mut rng);
        let s = rng.gen_range(-10.0..10.0);
        let t = CirculantTensor::new(6, d, u, c).unwrap();
        let a = lambda_min(&t, &eigen).unwrap().lambda;
        let b = lambda_min(&t.with_diagonal(d + s), &eigen).unwrap().lambda;
        if (b - a - s).abs() > 1e-8 {
            failures.push(format!("(d) d={d} u={u} c={c} s={s}: {a} -> {b}"));
        }
    }
    // (e) certificates
    let mut checked = 0;
    for _ in 0..10 {
        let m = [4u32, 6, 8][rng.gen_range(0..3)];
        let (_, u, c) = coeffs(&mut rng);
        let d = n_value(m, u, c, &eigen).unwrap().value + rng.gen_range(0.0..2.0);
        let t = CirculantTensor::new(m, d, u, c).unwrap();
        let v = is_sos(&t, &sos_cfg).unwrap();
        if let Some(cert) = &v.certificate {
            checked += 1;
            if !verifies(cert, &t) {
                failures.push(format!("(e) m={m} d={d} u={u} c={c}"));
            }
        }
    }
    for (u, c) in [(1.0, 1.0), (-1.0, -1.0), (1.0, 0.0)] {
        let b = certify_pns_free(6, u, c, &sos_cfg).unwrap();
        if let Some(cert) = &b.certificate {
            checked += 1;
            if !verifies(cert, &CirculantTensor::new(6, b.certificate_d, u, c).unwrap()) {
                failures.push(format!("(e) bundle u={u} c={c}"));
            }
        }
    }
    // (f) phi, psi
    for m in [6u32, 8] {
        for k in 0..20 {
            let u = -40.0 + 4.0 * k as f64;
            let p = phi(m, u, &eigen).unwrap().lambda;
            let q = psi(m, u, &eigen).unwrap().lambda;
            if p > 1e-10 || q > 1e-10 {
                failures.push(format!("(f) m={m} u={u}: phi {p} psi {q}"));
            }
        }
    }
    // (g) midpoint convexity
    for _ in 0..6 {
        let c = [-1.0, 0.0, 1.0][rng.gen_range(0..3)];
        let u1 = rng.gen_range(-10.0..10.0f64);
        let u2 = rng.gen_range(-10.0..10.0f64);
        let mid = 0.5 * (u1 + u2);
        let n = |u: f64| n_value(6, u, c, &eigen).unwrap().value;
        let mv = |u: f64| m_value(6, u, c, &sos_cfg).unwrap().value;
        if n(mid) > 0.5 * (n(u1) + n(u2)) + 1e-5 || mv(mid) > 0.5 * (mv(u1) + mv(u2)) + 1e-5 {
            failures.push(format!("(g) c={c} u1={u1} u2={u2}"));
        }
    }
    Outcome::new(failures, format!("(a)-(g) hold, {checked} certificates verified independently"))
}

/// Same direction up to sign, scale and cyclic order.
fn parallel_cyclic(x: &Vec3, y: [f64; 3]) -> bool {
    (0..3).any(|s| {
        let z = [y[s % 3], y[(s + 1) % 3], y[(s + 2) % 3]];
        let dot: f64 = (0..3).map(|i| x.0[i] * z[i]).sum();
        let nz = (z.iter().map(|v| v * v).sum::<f64>()).sqrt();
        (dot.abs() / (x.norm2() * nz) - 1.0).abs() < 1e-6
    })
}

fn bundles() -> Outcome {
    let cfg = SosConfig::default().for_order(6);
    let mut failures = Vec::new();
    for (u, c, direction) in [(1.0, 1.0, Some([2.0, -1.0, -1.0])), (-1.0, -1.0, Some([1.0, 1.0, 1.0])), (1.0, 0.0, None)] {
        let b = certify_pns_free(6, u, c, &cfg).unwrap();
        if b.status != BundleStatus::Confirmed {
            failures.push(format!("(u,c)=({u},{c}) {:?}: {}", b.status, b.notes.join(", ")));
            continue;
        }
        let Some(min) = &b.minimizer else {
            failures.push(format!("(u,c)=({u},{c}) has no minimizer"));
            continue;
        };
        let t = CirculantTensor::new(6, b.critical_value, u, c).unwrap();
        let f = t.eval_form(&min.x);
        if f > 1e-6 {
            failures.push(format!("(u,c)=({u},{c}) f(x) = {f}"));
        }
        if let Some(dir) = direction {
            if !parallel_cyclic(&min.x, dir) {
                failures.push(format!("(u,c)=({u},{c}) minimizer {:?} not along {dir:?}", min.x.0));
            }
        }
    }
    Outcome::new(failures, "(1,1), (-1,-1), (1,0) CONFIRMED at m=6".into())
}

type Criterion = (&'static str, fn() -> Outcome);

#[test]
fn acceptance() {
    let criteria: [Criterion; 6] = [
        ("table 1 thresholds", table_one),
        ("closed-form exactness", closed_forms),
        ("tables 2-9", tables_two_to_nine),
        ("breakpoint verification", breakpoints),
        ("property suite", properties),
        ("certification bundles", bundles),
    ];
    report("");
    let mut failed = Vec::new();
    for (i, (name, check)) in criteria.iter().enumerate() {
        let start = std::time::Instant::now();
        let o = check();
        let verdict = if o.pass { "PASS" } else { "FAIL" };
        report(&format!("criterion {} {name}: {verdict} ({:.1}s) {}", i + 1, start.elapsed().as_secs_f64(), o.detail));
        if !o.pass {
            failed.push(i + 1);
        }
    }
    assert!(failed.is_empty(), "failed criteria: {failed:?}");
}
