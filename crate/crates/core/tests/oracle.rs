//! The grouped form and power evaluations against a brute-force contraction
//! over all `3^m` index tuples.

use circsos::{CirculantTensor, Vec3};
use proptest::prelude::*;

fn tuples(m: u32) -> impl Iterator<Item = Vec<usize>> {
    (0..3usize.pow(m)).map(move |mut k| {
        (0..m)
            .map(|_| {
                let i = k % 3;
                k /= 3;
                i + 1
            })
            .collect()
    })
}

fn brute_form(t: &CirculantTensor, x: &Vec3) -> f64 {
    tuples(t.m)
        .map(|idx| t.entry(&idx).unwrap() * idx.iter().map(|&i| x.0[i - 1]).product::<f64>())
        .sum()
}

/// Component `i` of `A x^(m-1)`: fix the first index, contract the rest.
fn brute_power(t: &CirculantTensor, x: &Vec3) -> [f64; 3] {
    let mut out = [0.0; 3];
    for idx in tuples(t.m) {
        let rest: f64 = idx[1..].iter().map(|&i| x.0[i - 1]).product();
        out[idx[0] - 1] += t.entry(&idx).unwrap() * rest;
    }
    out
}

/// Magnitude of the sum with all terms made positive, the natural error
/// scale for a contraction.
fn abs_form(t: &CirculantTensor, x: &Vec3) -> f64 {
    tuples(t.m)
        .map(|idx| (t.entry(&idx).unwrap() * idx.iter().map(|&i| x.0[i - 1]).product::<f64>()).abs())
        .sum()
}

fn tensor(orders: &'static [u32]) -> impl Strategy<Value = CirculantTensor> {
    (prop::sample::select(orders), -50.0..50.0f64, -10.0..10.0f64, -10.0..10.0f64)
        .prop_map(|(m, d, u, c)| CirculantTensor::new(m, d, u, c).unwrap())
}

fn point() -> impl Strategy<Value = Vec3> {
    (-2.0..2.0f64, -2.0..2.0f64, -2.0..2.0f64).prop_map(|(a, b, c)| Vec3::new(a, b, c))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(100))]

    #[test]
    fn form_matches_brute_force(t in tensor(&[4, 6]), x in point()) {
        let scale = abs_form(&t, &x).max(1e-300);
        let err = (t.eval_form(&x) - brute_form(&t, &x)).abs() / scale;
        prop_assert!(err <= 1e-10, "relative error {err:e}");
        let err = (t.to_form().eval(&x) - brute_form(&t, &x)).abs() / scale;
        prop_assert!(err <= 1e-10, "expanded form relative error {err:e}");
    }

    #[test]
    fn power_matches_brute_force(t in tensor(&[4, 6]), x in point()) {
        let fast = t.apply_power(&x);
        let slow = brute_power(&t, &x);
        let scale = abs_form(&t, &x).max(1.0) / x.max_abs().max(1e-3);
        for i in 0..3 {
            prop_assert!((fast.0[i] - slow[i]).abs() <= 1e-10 * scale, "{:?} vs {:?}", fast, slow);
        }
    }

    #[test]
    fn euler_identity(t in tensor(&[4, 6, 8, 10]), x in point()) {
        let ax = t.apply_power(&x);
        let lhs: f64 = (0..3).map(|i| x.0[i] * ax.0[i]).sum();
        let f = t.eval_form(&x);
        prop_assert!((lhs - f).abs() <= 1e-9 * (1.0 + abs_scale(&t, &x)));
    }

    #[test]
    fn gradient_matches_finite_differences(t in tensor(&[4, 6, 8]), x in point()) {
        prop_assume!(x.max_abs() > 0.1);
        let ax = t.apply_power(&x);
        let h = 1e-6 * x.max_abs();
        let scale = abs_scale(&t, &x) / x.max_abs();
        for i in 0..3 {
            let mut plus = x;
            let mut minus = x;
            plus.0[i] += h;
            minus.0[i] -= h;
            let fd = (t.eval_form(&plus) - t.eval_form(&minus)) / (2.0 * h);
            let exact = t.m as f64 * ax.0[i];
            prop_assert!((fd - exact).abs() <= 1e-4 * scale.max(exact.abs()), "{fd} vs {exact}");
        }
    }

    #[test]
    fn permutation_symmetry(t in tensor(&[4, 6, 8]), x in point(), p in 0usize..6) {
        let perms = [[0, 1, 2], [0, 2, 1], [1, 0, 2], [1, 2, 0], [2, 0, 1], [2, 1, 0]];
        let q = perms[p];
        let y = Vec3::new(x.0[q[0]], x.0[q[1]], x.0[q[2]]);
        let f = t.eval_form(&x);
        prop_assert!((t.eval_form(&y) - f).abs() <= 1e-12 * (1.0 + abs_scale(&t, &x)));
    }

    #[test]
    fn linear_in_parameters(
        a in tensor(&[6]),
        (d, u, c) in (-5.0..5.0f64, -5.0..5.0f64, -5.0..5.0f64),
        s in -3.0..3.0f64,
        x in point(),
    ) {
        let b = CirculantTensor::new(6, d, u, c).unwrap();
        let sum = a.axpy(s, &b).unwrap();
        let expect = a.eval_form(&x) + s * b.eval_form(&x);
        let scale = 1.0 + abs_scale(&a, &x) + s.abs() * abs_scale(&b, &x);
        prop_assert!((sum.eval_form(&x) - expect).abs() <= 1e-11 * scale);
    }
}

/// Cheap upper bound for `sum |terms|`: the form of `|d|, |u|, |c|` at `|x|`.
fn abs_scale(t: &CirculantTensor, x: &Vec3) -> f64 {
    let a = CirculantTensor::new(t.m, t.d.abs(), t.u.abs(), t.c.abs()).unwrap();
    a.eval_form(&Vec3::new(x.0[0].abs(), x.0[1].abs(), x.0[2].abs()))
}

#[test]
fn entries_by_index_pattern() {
    let t = CirculantTensor::new(6, 5.0, 2.0, -1.0).unwrap();
    assert_eq!(t.entry(&[1, 1, 1, 1, 1, 1]).unwrap(), 5.0);
    assert_eq!(t.entry(&[1, 2, 2, 1, 2, 2]).unwrap(), 2.0);
    assert_eq!(t.entry(&[3, 1, 2, 1, 1, 1]).unwrap(), -1.0);
    assert!(t.entry(&[1, 2, 4, 1, 1, 1]).is_err());
    assert!(t.entry(&[1, 2]).is_err());
}

#[test]
fn brute_force_reference_points() {
    let t = CirculantTensor::new(6, 0.0, 1.0, 0.0).unwrap();
    assert_eq!(brute_form(&t, &Vec3::new(1.0, 1.0, 1.0)), 186.0);
    let t = CirculantTensor::new(6, 62.0, -1.0, 0.0).unwrap();
    assert_eq!(brute_form(&t, &Vec3::new(1.0, 1.0, -3.0)), 46592.0);
}
