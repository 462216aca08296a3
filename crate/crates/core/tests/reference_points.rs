use circsos::boundary::{self, analyze, breakpoint_u0, breakpoint_v0, n_value, AnalysisConfig, BoundaryReport, ReportStatus};
use circsos::heig::SolverConfig;
use circsos::sos::{certify_pns_free, m_value, BundleStatus, CertificateBundle, SosConfig};
use circsos::Vec3;

fn sos_cfg() -> SosConfig {
    SosConfig { eigen: SolverConfig { n_starts: 16, ..SolverConfig::default() }, ..SosConfig::default() }
}

fn analysis() -> AnalysisConfig {
    AnalysisConfig { sos: sos_cfg(), ..AnalysisConfig::default() }
}

/// Direction check up to sign and scale.
fn parallel(x: &Vec3, y: [f64; 3]) -> bool {
    let nx = x.norm2();
    let ny = (y[0] * y[0] + y[1] * y[1] + y[2] * y[2]).sqrt();
    let dot: f64 = (0..3).map(|i| x.0[i] * y[i]).sum();
    (dot.abs() / (nx * ny) - 1.0).abs() < 1e-6
}

#[test]
fn sos_thresholds() {
    let cfg = sos_cfg();
    assert!((m_value(6, 1.0, 0.0, &cfg).unwrap().value - 1.7373485).abs() < 1e-6);
    assert_eq!(m_value(6, -1.0, -1.0, &cfg).unwrap().value, 242.0);
    assert!((m_value(6, 10.0, 1.0, &cfg).unwrap().value - 16.634790).abs() < 1e-5);
}

#[test]
fn bundles_at_known_points() {
    let cfg = sos_cfg();
    let b = certify_pns_free(6, 1.0, 1.0, &cfg).unwrap();
    assert_eq!(b.status, BundleStatus::Confirmed);
    assert_eq!(b.critical_value, 1.0);
    assert!(parallel(&b.minimizer.as_ref().unwrap().x, [2.0, -1.0, -1.0]));

    let b = certify_pns_free(6, -1.0, -1.0, &cfg).unwrap();
    assert_eq!(b.status, BundleStatus::Confirmed);
    assert_eq!(b.critical_value, 242.0);
    assert!(parallel(&b.minimizer.as_ref().unwrap().x, [1.0, 1.0, 1.0]));

    let b = certify_pns_free(6, 1.0, 0.0, &cfg).unwrap();
    assert_eq!(b.status, BundleStatus::Confirmed);
    assert!(b.minimizer_value.unwrap().abs() <= 1e-6);

    let b = certify_pns_free(6, -3.0, -1.0, &cfg).unwrap();
    assert_eq!(b.critical_value, 366.0);
    assert!(parallel(&b.minimizer.as_ref().unwrap().x, [1.0, 1.0, 1.0]));

    let json = serde_json::to_string(&b).unwrap();
    let back: CertificateBundle = serde_json::from_str(&json).unwrap();
    assert_eq!(back, b);
}

#[test]
fn reports_at_table_points() {
    let r = analyze(6, 0.1, -1.0, &analysis()).unwrap();
    assert_eq!(r.status, ReportStatus::Confirmed);
    assert!((r.n.unwrap() - 173.8).abs() < 1e-12);
    assert!((r.m_value.unwrap() - 173.8).abs() < 1e-5);

    let r = analyze(8, 3.0, -1.0, &analysis()).unwrap();
    assert_eq!(r.n.unwrap(), 1170.0);

    let r = analyze(12, 10.0, 1.0, &AnalysisConfig { certify: false, ..analysis() }).unwrap();
    assert!((r.n.unwrap() - 18.79190).abs() < 1e-4);
    assert!((r.m_value.unwrap() - 18.79190).abs() < 1e-4);

    let json = serde_json::to_string(&r).unwrap();
    let back: BoundaryReport = serde_json::from_str(&json).unwrap();
    assert_eq!(back, r);
}

#[test]
fn odd_orders_are_rejected() {
    assert!(analyze(7, 1.0, 0.0, &analysis()).is_err());
    assert!(m_value(5, 1.0, 0.0, &sos_cfg()).is_err());
    assert!(n_value(9, 1.0, 0.0, &sos_cfg().eigen).is_err());
}

#[test]
fn linear_segments_hold() {
    for (m, c) in [(6, -1.0), (6, 1.0), (8, 1.0)] {
        let s = boundary::verify_linear_segment(m, c, &analysis()).unwrap();
        assert!(s.ok, "{s:?}");
        assert_eq!(s.points.len(), 4);
    }
    assert_eq!(n_value(8, -20.0, 1.0, &sos_cfg().eigen).unwrap().value, 3148.0);
    assert!(boundary::verify_linear_segment(6, 0.0, &analysis()).is_err());
}

#[test]
fn breakpoints_beyond_verified_orders_still_report() {
    let cfg = sos_cfg().eigen;
    let b = breakpoint_u0(4, &cfg);
    assert_eq!(b.value, 0.75);
    assert!(b.lambda.is_some());
    for m in [16, 18] {
        let u0 = breakpoint_u0(m, &cfg);
        let v0 = breakpoint_v0(m, &cfg);
        assert!(u0.lambda.is_some() && v0.lambda.is_some());
        assert_eq!(u0.rational(), boundary::u0_formula(m));
    }
}
