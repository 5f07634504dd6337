//! Full-scale acceptance runs: one test per criterion, at the ensemble sizes
//! the library's default configurations pin down.
//!
//! Each test prints one `criterion N … PASS/FAIL` line (with indented
//! sub-checks) and then asserts, so the printed verdict and the test result
//! always agree. Run `cargo test --test acceptance -- --nocapture` to watch
//! the lines appear; the whole suite is sized for well under an hour on one
//! core, dominated by the rough-environment crossover.

use heatfield::cadlag::{
    m1_upper_bound, oscillation_v, oscillation_ws, segment_distance, uniform_distance,
    CadlagPath,
};
use heatfield::experiments::{
    report_bytes, run_covariance_probes, run_long_time, run_short_time, run_trace_audit,
    run_zero_laws, CovarianceProbeConfig, LongTimeConfig, ShortTimeConfig, TraceAuditConfig,
    ZeroLawConfig,
};
use heatfield::rough_env::{crossover_report, CrossoverConfig};
use heatfield::stats::{EnsembleReport, LabeledTest};
use std::time::Instant;

/// Sub-check collector: buffers the detail lines so the criterion verdict can
/// be printed first, then panics with every failing sub-check at once.
struct Checks {
    lines: Vec<String>,
    failures: Vec<String>,
}

impl Checks {
    fn new() -> Self {
        Checks {
            lines: Vec::new(),
            failures: Vec::new(),
        }
    }

    fn check(&mut self, name: &str, ok: bool, detail: String) {
        let verdict = if ok { "PASS" } else { "FAIL" };
        self.lines.push(format!("  {name}: {verdict} — {detail}"));
        if !ok {
            self.failures.push(format!("{name}: {detail}"));
        }
    }

    fn info(&mut self, line: String) {
        self.lines.push(format!("  {line}"));
    }

    fn finish(self, criterion: &str, started: Instant) {
        let verdict = if self.failures.is_empty() {
            "PASS"
        } else {
            "FAIL"
        };
        println!(
            "{criterion}: {verdict} [{:.1} s]",
            started.elapsed().as_secs_f64()
        );
        for line in &self.lines {
            println!("{line}");
        }
        assert!(
            self.failures.is_empty(),
            "{criterion} failed: {}",
            self.failures.join("; ")
        );
    }
}

fn scalar(report: &EnsembleReport, label: &str) -> f64 {
    report
        .body
        .scalars
        .iter()
        .find(|s| s.label == label)
        .unwrap_or_else(|| panic!("missing scalar row {label:?}"))
        .value
}

fn test_row<'a>(report: &'a EnsembleReport, label: &str) -> &'a LabeledTest {
    report
        .body
        .tests
        .iter()
        .find(|t| t.label == label)
        .unwrap_or_else(|| panic!("missing test row {label:?}"))
}

#[test]
fn criterion_1_covariance_fidelity() {
    let started = Instant::now();
    let report = run_covariance_probes(&CovarianceProbeConfig::default()).unwrap();
    let max_z = scalar(&report, "max |z| over probes");
    let mut c = Checks::new();
    c.check(
        "field and slope products vs exact periodized covariance",
        max_z <= 4.0,
        format!("max |z| over 6 probe pairs = {max_z:.3} (bound 4)"),
    );
    c.finish("criterion 1 (covariance fidelity)", started);
}

#[test]
fn criterion_2_short_time_law() {
    let started = Instant::now();
    let report = run_short_time(&ShortTimeConfig::default()).unwrap();
    let ks = test_row(&report, "rescaled endpoint vs limiting Gaussian");
    let fit = &report
        .body
        .fits
        .iter()
        .find(|f| f.label == "squared displacement growth exponent")
        .expect("missing growth-exponent fit")
        .fit;
    let mut c = Checks::new();
    c.check(
        "endpoint over T^(3/4) vs centered Gaussian, variance 0.31159",
        ks.p_value >= 0.01,
        format!("KS D = {:.4}, p = {:.4} (need p ≥ 0.01)", ks.statistic, ks.p_value),
    );
    c.check(
        "second-moment growth exponent",
        (fit.slope - 1.5).abs() <= 0.1,
        format!("slope = {:.4} ± {:.4} (need 1.5 ± 0.1)", fit.slope, fit.slope_se),
    );
    c.finish("criterion 2 (short-time law)", started);
}

#[test]
fn criterion_3_long_time_trapping() {
    let started = Instant::now();
    let cfg = LongTimeConfig::default();
    let report = run_long_time(&cfg).unwrap();
    let ks = test_row(
        &report,
        "tracer endpoint over sqrt(T) vs independent trap location",
    );
    let gap_small = scalar(
        &report,
        &format!("median sup gap over sqrt(T), T = {}", cfg.t_small),
    );
    let gap_large = scalar(
        &report,
        &format!("median sup gap over sqrt(T), T = {}", cfg.t_large),
    );
    let ws_small = scalar(
        &report,
        &format!("median jump oscillation, T = {}", cfg.t_small),
    );
    let ws_large = scalar(
        &report,
        &format!("median jump oscillation, T = {}", cfg.t_large),
    );
    let mut c = Checks::new();
    c.check(
        "a: endpoint over sqrt(T) vs independent trap sample",
        ks.p_value >= 0.01,
        format!("KS D = {:.4}, p = {:.4} (need p ≥ 0.01)", ks.statistic, ks.p_value),
    );
    let trap = test_row(&report, "trap over sqrt(T) vs independent trap location");
    c.info(format!(
        "   (trap-only cross-check: D = {:.4}, p = {:.4})",
        trap.statistic, trap.p_value
    ));
    c.check(
        "b: sup-gap median decays",
        gap_large <= 0.8 * gap_small,
        format!("medians {gap_small:.3} → {gap_large:.3} (need late ≤ 0.8 × early)"),
    );
    c.check(
        "c: jump-oscillation median decays",
        ws_large <= 0.8 * ws_small,
        format!("medians {ws_small:.4} → {ws_large:.4} (need late ≤ 0.8 × early)"),
    );
    c.finish("criterion 3 (long-time trapping)", started);
}

#[test]
fn criterion_4_trap_process_laws() {
    let started = Instant::now();
    let report = run_zero_laws(&ZeroLawConfig::default()).unwrap();
    let viol = scalar(&report, "frontier alternative violation fraction");
    let jumps = scalar(&report, "frontier jumps detected");
    let explained = scalar(&report, "jump explanation fraction");
    let ks = test_row(&report, "rescaled trap location vs shrunk-scale reference");
    let tail = report.body.tail.as_ref().expect("missing tail fit");
    let density = report.body.density.as_ref().expect("missing density diagnostic");
    let mut c = Checks::new();
    c.check(
        "a: frontier alternative violations",
        viol < 0.01,
        format!("violation fraction = {viol:.6} (need < 0.01)"),
    );
    c.check(
        "b: every jump sits on an annihilation within merge tolerance",
        jumps >= 1.0 && explained == 1.0,
        format!("{jumps} jumps, explained fraction = {explained}"),
    );
    c.check(
        "c: rescaled trap location scale invariance",
        ks.p_value >= 0.01,
        format!("KS D = {:.4}, p = {:.4} (need p ≥ 0.01)", ks.statistic, ks.p_value),
    );
    c.check(
        "d: exponential tail",
        tail.r_squared >= 0.9 && tail.n_tail >= 100,
        format!(
            "log-survival affine fit r² = {:.4} on {} tail samples (need r² ≥ 0.9, n ≥ 100)",
            tail.r_squared, tail.n_tail
        ),
    );
    c.check(
        "e: bounded density",
        density.doubling_ratio >= 0.7 && density.doubling_ratio <= 1.4,
        format!(
            "max-height bin-doubling ratio = {:.4} (need within [0.7, 1.4])",
            density.doubling_ratio
        ),
    );
    c.finish("criterion 4 (trap-process laws)", started);
}

#[test]
fn criterion_5_zero_tracing_round_trips() {
    let started = Instant::now();
    let report = run_trace_audit(&TraceAuditConfig::default()).unwrap();
    let attempted = scalar(&report, "round trips attempted");
    let within = scalar(&report, "round trips within tolerance");
    let worst = scalar(&report, "worst round trip error over tolerance");
    let laps = scalar(&report, "lap count violations");
    let mismatched = scalar(&report, "events with mismatched kinds");
    let mut c = Checks::new();
    c.check(
        "round trips return to the start",
        attempted >= 100.0 && within == attempted,
        format!("{within}/{attempted} within 10³·zero_tol (worst = {worst:.4} of allowance)"),
    );
    c.check(
        "zero counts never increase",
        laps == 0.0,
        format!("{laps} violations"),
    );
    c.check(
        "annihilations pair stable with unstable",
        mismatched == 0.0,
        format!("{mismatched} mismatched events"),
    );
    c.finish("criterion 5 (zero tracing)", started);
}

#[test]
fn criterion_6_path_distance_toolkit() {
    let started = Instant::now();
    let mut c = Checks::new();

    let d1 = segment_distance(2.0, 0.0, 1.0);
    let d2 = segment_distance(0.5, 0.0, 1.0);
    let d3 = segment_distance(-1.0, 0.0, 0.0);
    c.check(
        "segment distance",
        d1 == 1.0 && d2 == 0.0 && d3 == 1.0,
        format!("(2,0,1) → {d1}, (0.5,0,1) → {d2}, (−1,0,0) → {d3}"),
    );

    let pl = |t: &[f64], v: &[f64]| CadlagPath::piecewise_linear(t.to_vec(), v.to_vec()).unwrap();
    let pc = |t: &[f64], v: &[f64]| CadlagPath::piecewise_constant(t.to_vec(), v.to_vec()).unwrap();

    let c2 = pl(&[0.0, 1.0], &[2.0, 2.0]);
    let zero = pl(&[0.0, 1.0], &[0.0, 0.0]);
    let jump = pc(&[0.0, 0.5, 1.0], &[0.0, 1.0, 1.0]);
    let v_const = oscillation_v(&c2, &c2, 0.5, 0.1).unwrap();
    let v_jump = oscillation_v(&zero, &jump, 0.5, 0.1).unwrap();
    let wiggly = pl(&[0.0, 0.25, 0.5, 0.75, 1.0], &[0.0, 1.0, -0.5, 0.25, 0.0]);
    let mut v_monotone = true;
    let mut prev = 0.0;
    for &delta in &[0.0, 0.05, 0.1, 0.2, 0.4, 1.0] {
        let v = oscillation_v(&wiggly, &zero, 0.4, delta).unwrap();
        v_monotone &= v >= prev;
        prev = v;
    }
    c.check(
        "two-path window oscillation",
        v_const == 0.0 && v_jump == 1.0 && v_monotone,
        format!("const pair → {v_const}, unit jump → {v_jump}, non-decreasing in δ: {v_monotone}"),
    );

    let mono = pl(&[0.0, 0.3, 1.0], &[0.0, 0.4, 2.0]);
    let ws_mono = oscillation_ws(&mono, 0.5, 1.0);
    let over = pl(&[0.0, 0.5, 1.0], &[0.0, 2.0, 1.0]);
    let ws_over = oscillation_ws(&over, 0.5, 1.0);
    let mut ws_jump_zero = true;
    for &(t, d) in &[(0.5, 0.2), (0.5, 1.0), (0.4, 0.05), (0.9, 0.5)] {
        ws_jump_zero &= oscillation_ws(&jump, t, d) == 0.0;
    }
    c.check(
        "overshoot modulus",
        ws_mono == 0.0 && ws_over >= 1.0 && ws_jump_zero,
        format!(
            "monotone → {ws_mono}, values (0,2,1) → {ws_over}, single jump → 0 everywhere: {ws_jump_zero}"
        ),
    );

    let f = pl(&[0.0, 0.5, 1.0], &[0.0, 1.0, 0.5]);
    let shifted = pl(&[0.0, 0.5, 1.0], &[0.75, 1.75, 1.25]);
    let u_same = uniform_distance(&f, &f).unwrap();
    let u_shift = uniform_distance(&f, &shifted).unwrap();
    c.check(
        "uniform distance",
        u_same == 0.0 && (u_shift - 0.75).abs() < 1e-12,
        format!("identical → {u_same}, shift by 0.75 → {u_shift}"),
    );

    let m_same = m1_upper_bound(&f, &f, 64).unwrap();
    let c08 = pl(&[0.0, 1.0], &[0.8, 0.8]);
    let m_const = m1_upper_bound(&zero, &c08, 128).unwrap();
    c.check(
        "graph-matching bound, fixed points",
        m_same == 0.0 && (m_const - 0.8).abs() < 1e-12,
        format!("identical → {m_same}, constant offset 0.8 → {m_const}"),
    );

    let mut ramp_ok = true;
    let mut ramp_detail = Vec::new();
    for &h in &[0.1, 0.01] {
        let ramp = pl(&[0.0, 0.5 - h, 0.5 + h, 1.0], &[0.0, 0.0, 1.0, 1.0]);
        let bound = m1_upper_bound(&jump, &ramp, 4097).unwrap();
        ramp_ok &= bound < 2.0 * h + 1e-6;
        ramp_detail.push(format!("h = {h}: {bound:.6} (bound {})", 2.0 * h + 1e-6));
    }
    c.check(
        "graph-matching bound, jump vs steep ramp",
        ramp_ok,
        ramp_detail.join(", "),
    );

    c.finish("criterion 6 (path-distance toolkit)", started);
}

#[test]
fn criterion_7_rough_environment_crossover() {
    let started = Instant::now();
    let report = crossover_report(&CrossoverConfig::default()).unwrap();
    let d_expected = 4.0 / (3.0 * std::f64::consts::PI.sqrt());
    let mut c = Checks::new();
    for lam in &report.per_lambda {
        let tag = format!("λ = {}", lam.lambda);
        match &lam.sub_fit {
            Some(fit) => c.check(
                &format!("{tag}: sub-diffusive slope on [{:.0}, {:.0}]", lam.sub_window.0, lam.sub_window.1),
                (fit.slope - 1.5).abs() <= 0.15,
                format!("slope = {:.3} ± {:.3} (need 1.5 ± 0.15)", fit.slope, fit.slope_se),
            ),
            None => c.check(
                &format!("{tag}: sub-diffusive slope"),
                false,
                format!("fit skipped: {}", lam.sub_skip.clone().unwrap_or_default()),
            ),
        }
        match &lam.diff_fit {
            Some(fit) => c.check(
                &format!("{tag}: diffusive slope on [{:.0}, {:.0}]", lam.diff_window.0, lam.diff_window.1),
                (fit.slope - 1.0).abs() <= 0.15,
                format!("slope = {:.3} ± {:.3} (need 1.0 ± 0.15)", fit.slope, fit.slope_se),
            ),
            None => c.check(
                &format!("{tag}: diffusive slope"),
                false,
                format!("fit skipped: {}", lam.diff_skip.clone().unwrap_or_default()),
            ),
        }
        match (lam.d_estimate, lam.d_estimate_se) {
            (Some(d), se) => c.check(
                &format!("{tag}: sub-diffusive amplitude"),
                (d / d_expected - 1.0).abs() <= 0.15,
                format!(
                    "D̂ = {:.4} ± {:.4} vs 4/(3√π) = {:.4} (need within 15%)",
                    d,
                    se.unwrap_or(f64::NAN),
                    d_expected
                ),
            ),
            (None, _) => c.check(&format!("{tag}: sub-diffusive amplitude"), false, "no estimate".into()),
        }
        if let Some(k) = lam.kink_time {
            c.info(format!(
                "   ({tag}: fitted crossover near t = {k:.1}, predicted λ⁻⁴ = {:.1})",
                lam.t_cross
            ));
        }
    }
    for pair in &report.collapse {
        c.info(format!(
            "   (diffusivity collapse {} / {}: ratio {:.3} ± {:.3})",
            pair.lambda_a, pair.lambda_b, pair.ratio, pair.se
        ));
    }
    c.finish("criterion 7 (rough-environment crossover)", started);
}

#[test]
fn criterion_8_determinism_across_worker_counts() {
    let started = Instant::now();
    let mut c = Checks::new();

    let pair = |name: &str, a: Vec<u8>, b: Vec<u8>, c: &mut Checks| {
        c.check(
            name,
            a == b,
            if a == b {
                format!("{} report bytes identical", a.len())
            } else {
                "reports differ between worker counts".into()
            },
        );
    };

    let cov = |w| {
        let cfg = CovarianceProbeConfig {
            n_env: 200,
            worker_count: w,
            ..CovarianceProbeConfig::default()
        };
        report_bytes(&run_covariance_probes(&cfg).unwrap()).unwrap()
    };
    pair("covariance probes", cov(1), cov(3), &mut c);

    let short = |w| {
        let cfg = ShortTimeConfig {
            n_env: 100,
            worker_count: w,
            ..ShortTimeConfig::default()
        };
        report_bytes(&run_short_time(&cfg).unwrap()).unwrap()
    };
    pair("short-time suite", short(1), short(3), &mut c);

    let long = |w| {
        let cfg = LongTimeConfig {
            n_env: 4,
            domain_length: 500.0,
            mode_count: 2000,
            t_small: 40.0,
            t_large: 160.0,
            theta_count: 81,
            path_theta_count: 401,
            reference_domain_length: 250.0,
            reference_mode_count: 1000,
            worker_count: w,
            ..LongTimeConfig::default()
        };
        report_bytes(&run_long_time(&cfg).unwrap()).unwrap()
    };
    pair("long-time suite", long(1), long(3), &mut c);

    let zeros = |w| {
        let cfg = ZeroLawConfig {
            n_env: 50,
            worker_count: w,
            ..ZeroLawConfig::default()
        };
        report_bytes(&run_zero_laws(&cfg).unwrap()).unwrap()
    };
    pair("trap-law suite", zeros(1), zeros(3), &mut c);

    let audit = |w| {
        let cfg = TraceAuditConfig {
            n_env: 6,
            worker_count: w,
            ..TraceAuditConfig::default()
        };
        report_bytes(&run_trace_audit(&cfg).unwrap()).unwrap()
    };
    pair("trace audit", audit(1), audit(3), &mut c);

    let crossover = |w| {
        let cfg = CrossoverConfig {
            lambdas: vec![1.0],
            n_env_long: 2,
            n_env_short: 3,
            t_max_factor: 10.0,
            worker_count: w,
            ..CrossoverConfig::default()
        };
        report_bytes(&crossover_report(&cfg).unwrap()).unwrap()
    };
    pair("rough-environment crossover", crossover(1), crossover(3), &mut c);

    c.finish("criterion 8 (determinism across worker counts)", started);
}
