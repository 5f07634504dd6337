//! Canned experiment drivers: seed-deterministic ensembles that measure the
//! statistical laws of the field, the tracer and the frontier process.
//!
//! Each driver owns a JSON-serializable configuration whose `Default` is the
//! full verification scale, runs a deterministic ensemble through the
//! [`stats`](crate::stats) harness, and returns an [`EnsembleReport`] whose
//! manifest echoes the configuration. The same drivers back the command-line
//! subcommands and the acceptance suite; scaled-down configurations are used
//! for smoke tests and determinism checks.

use crate::cadlag::{oscillation_ws, CadlagPath};
use crate::environment::{
    covariance, Backend, CovarianceRequest, EnvironmentSpec, Field, PairOrder,
};
use crate::stats::{
    density_histogram, fit_exponent, ks_one_sample, ks_two_sample, mean_and_se, median,
    run_ensemble, run_parallel, tail_fit, EnsembleConfig, EnsembleReport, LabeledFit,
    LabeledTest, MomentRow, ReportBody, ScalarRow, StatsError, FAILURE_BUDGET,
};
use crate::tracer::{init_tracer, integrate_tracer, IntegratorConfig};
use crate::zeros::{
    continue_zero, find_zeros_torus, merge_tol, trace_zero, track_zero_curves, z_path,
    zero_tol, TraceConfig, ZeroKind, ZeroPoint,
};
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};

/// Variance of the limiting law of the rescaled short-time endpoint
/// `X_T / T^{3/4}`: the double integral of the field's temporal covariance at
/// the origin over the unit square,
/// `∫₀¹∫₀¹ (4π(s+s'))^{-1/2} ds ds' = 4(√2−1)/(3√π)`.
pub const SHORT_TIME_LIMIT_VARIANCE: f64 = 0.311_593_303_006_812_1;

/// Strictly increasing geometric grid from `lo` to `hi`, endpoints included.
pub fn geometric_grid(lo: f64, hi: f64, n: usize) -> Result<Vec<f64>, StatsError> {
    if !(lo > 0.0 && hi > lo) {
        return Err(StatsError::Config(format!(
            "geometric grid needs 0 < lo < hi, got ({lo}, {hi})"
        )));
    }
    if n < 2 {
        return Err(StatsError::Config(format!(
            "geometric grid needs at least 2 points, got {n}"
        )));
    }
    let ratio = hi / lo;
    Ok((0..n)
        .map(|k| lo * ratio.powf(k as f64 / (n - 1) as f64))
        .collect())
}

/// Sorted union of two increasing grids, collapsing points closer than a
/// relative `1e-9`.
fn merge_grids(a: &[f64], b: &[f64]) -> Vec<f64> {
    let mut all: Vec<f64> = a.iter().chain(b.iter()).copied().collect();
    all.sort_unstable_by(|x, y| x.partial_cmp(y).unwrap());
    let mut out: Vec<f64> = Vec::with_capacity(all.len());
    for t in all {
        match out.last() {
            Some(&last) if t - last <= 1e-9 * t.abs().max(1.0) => {}
            _ => out.push(t),
        }
    }
    out
}

fn echo<T: Serialize>(cfg: &T) -> Result<serde_json::Value, StatsError> {
    serde_json::to_value(cfg).map_err(|e| StatsError::Config(format!("config echo: {e}")))
}

/// Canonical JSON bytes of a serializable report, for bitwise determinism
/// comparisons between runs with different worker counts.
pub fn report_bytes<T: Serialize>(value: &T) -> Result<Vec<u8>, StatsError> {
    serde_json::to_vec(value).map_err(|e| StatsError::Config(format!("serialize: {e}")))
}

// ---------------------------------------------------------------------------
// Covariance probes
// ---------------------------------------------------------------------------

/// Two space-time probe points whose product moments are accumulated.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ProbePair {
    pub t1: f64,
    pub x1: f64,
    pub t2: f64,
    pub x2: f64,
}

fn default_probe_pairs() -> Vec<ProbePair> {
    vec![
        // Field variance at t = 1.
        ProbePair { t1: 1.0, x1: 0.0, t2: 1.0, x2: 0.0 },
        // Equal-time spatial decay.
        ProbePair { t1: 1.0, x1: 0.0, t2: 1.0, x2: 2.0 },
        // Equal-place temporal decay.
        ProbePair { t1: 1.0, x1: 0.0, t2: 3.0, x2: 0.0 },
        // Mixed offsets away from the origin.
        ProbePair { t1: 0.5, x1: -5.0, t2: 1.5, x2: -3.0 },
        // Separation beyond half the torus: exercises periodization.
        ProbePair { t1: 2.0, x1: 10.0, t2: 2.0, x2: 36.0 },
        // Close to the sampled resolution floor.
        ProbePair { t1: 0.25, x1: 0.0, t2: 0.75, x2: 1.0 },
    ]
}

/// Ensemble comparison of sampled product moments `u·u` and `∂x u·∂x u`
/// against the exact periodized covariance at a handful of probe pairs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CovarianceProbeConfig {
    pub n_env: u64,
    pub base_seed: u64,
    /// Execution plumbing, not experiment identity: left out of serialized
    /// echoes so reruns with different worker counts compare bitwise equal.
    #[serde(skip_serializing)]
    pub worker_count: usize,
    pub domain_length: f64,
    pub mode_count: usize,
    pub probes: Vec<ProbePair>,
}

impl Default for CovarianceProbeConfig {
    fn default() -> Self {
        CovarianceProbeConfig {
            n_env: 10_000,
            base_seed: 9_001,
            worker_count: 0,
            domain_length: 50.0,
            mode_count: 256,
            probes: default_probe_pairs(),
        }
    }
}

/// For each probe pair, the sample means of `u(p1)·u(p2)` and
/// `∂x u(p1)·∂x u(p2)` with standard errors (moment rows), the exact
/// periodized covariances, and the studentized deviations (scalar rows
/// `z score …`; `max |z| over probes` summarizes them).
pub fn run_covariance_probes(
    cfg: &CovarianceProbeConfig,
) -> Result<EnsembleReport, StatsError> {
    if cfg.probes.is_empty() {
        return Err(StatsError::Config("at least one probe pair is required".into()));
    }
    if !(cfg.domain_length > 0.0) || cfg.mode_count == 0 {
        return Err(StatsError::Config(format!(
            "domain_length and mode_count must be positive, got {} and {}",
            cfg.domain_length, cfg.mode_count
        )));
    }
    let t_floor = (cfg.domain_length / cfg.mode_count as f64).powi(2);
    for (i, p) in cfg.probes.iter().enumerate() {
        if !(p.t1 >= t_floor && p.t2 >= t_floor) {
            return Err(StatsError::Config(format!(
                "probe {i} has a time below the resolution floor {t_floor:.3e}"
            )));
        }
    }
    let ecfg = EnsembleConfig {
        n_env: cfg.n_env,
        base_seed: cfg.base_seed,
        env_spec: EnvironmentSpec {
            domain_length: cfg.domain_length,
            mode_count: cfg.mode_count,
            seed: 0,
            backend: Backend::Spectral,
        },
        experiment: "covariance-probes".into(),
        worker_count: cfg.worker_count,
    };
    run_ensemble(
        &ecfg,
        echo(cfg)?,
        |env, _i| {
            let mut out = Vec::with_capacity(2 * cfg.probes.len());
            for p in &cfg.probes {
                let u1 = env.eval_u(p.t1, p.x1, 0).map_err(|e| e.to_string())?;
                let u2 = env.eval_u(p.t2, p.x2, 0).map_err(|e| e.to_string())?;
                let d1 = env.eval_u(p.t1, p.x1, 1).map_err(|e| e.to_string())?;
                let d2 = env.eval_u(p.t2, p.x2, 1).map_err(|e| e.to_string())?;
                out.push(u1 * u2);
                out.push(d1 * d2);
            }
            Ok(out)
        },
        |outs| {
            let n = outs.outputs.len();
            let mut body = ReportBody::default();
            let mut max_abs_z: f64 = 0.0;
            for (i, p) in cfg.probes.iter().enumerate() {
                for (j, (name, order)) in [("uu", PairOrder::Uu), ("dxu dxu", PairOrder::DxuDxu)]
                    .into_iter()
                    .enumerate()
                {
                    let samples: Vec<f64> =
                        outs.outputs.iter().map(|v| v[2 * i + j]).collect();
                    let (mean, se) = mean_and_se(&samples);
                    let predicted = covariance(
                        &CovarianceRequest {
                            p1: (p.t1, p.x1),
                            p2: (p.t2, p.x2),
                            pair_order: order,
                        },
                        Some(cfg.domain_length),
                    )
                    .map_err(|e| StatsError::Config(e.to_string()))?;
                    let z = (mean - predicted) / se;
                    max_abs_z = max_abs_z.max(z.abs());
                    body.moments.push(MomentRow {
                        label: format!("{name} product, probe {i}"),
                        t: p.t1 + p.t2,
                        mean,
                        se,
                        n: n as u64,
                    });
                    body.scalars.push(ScalarRow {
                        label: format!("predicted {name} covariance, probe {i}"),
                        value: predicted,
                    });
                    body.scalars.push(ScalarRow {
                        label: format!("z score {name}, probe {i}"),
                        value: z,
                    });
                }
            }
            body.scalars.push(ScalarRow {
                label: "max |z| over probes".into(),
                value: max_abs_z,
            });
            body.notes.push(
                "z = (sample mean − exact periodized covariance) / standard error".into(),
            );
            Ok(body)
        },
    )
}

// ---------------------------------------------------------------------------
// Short-time law
// ---------------------------------------------------------------------------

/// Short-horizon tracer ensemble: distribution of the rescaled endpoint
/// `X_T / T^{3/4}` and growth exponent of `E[X_t²]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ShortTimeConfig {
    pub n_env: u64,
    pub base_seed: u64,
    /// Execution plumbing, not experiment identity: left out of serialized
    /// echoes so reruns with different worker counts compare bitwise equal.
    #[serde(skip_serializing)]
    pub worker_count: usize,
    pub domain_length: f64,
    /// Sites on the torus; the resolution floor `(Λ/M)²` must sit well below
    /// the earliest moment time.
    pub mode_count: usize,
    /// Endpoint observation time `T`.
    pub t_scale: f64,
    /// Times at which `E[X_t²]` is accumulated (increasing).
    pub moment_times: Vec<f64>,
    pub rel_tol: f64,
    pub abs_tol: f64,
}

impl Default for ShortTimeConfig {
    fn default() -> Self {
        ShortTimeConfig {
            n_env: 2000,
            base_seed: 20_001,
            worker_count: 0,
            domain_length: 50.0,
            mode_count: 16_384,
            t_scale: 1e-3,
            moment_times: geometric_grid(1e-4, 1e-2, 13).unwrap(),
            rel_tol: 1e-6,
            abs_tol: 1e-12,
        }
    }
}

/// Integrates each tracer from the sub-resolution handoff to the last moment
/// time, then aggregates the rescaled endpoint sample (Kolmogorov–Smirnov
/// test against the limiting centered Gaussian) and the displacement moment
/// curve with its log-log growth exponent.
pub fn run_short_time(cfg: &ShortTimeConfig) -> Result<EnsembleReport, StatsError> {
    if cfg.moment_times.len() < 5 {
        return Err(StatsError::Config(
            "need at least 5 moment times for the exponent fit".into(),
        ));
    }
    for w in cfg.moment_times.windows(2) {
        if !(w[1] > w[0]) {
            return Err(StatsError::Config("moment times must be increasing".into()));
        }
    }
    if !(cfg.t_scale > 0.0) {
        return Err(StatsError::Config(format!(
            "t_scale must be positive, got {}",
            cfg.t_scale
        )));
    }
    let t_floor = (cfg.domain_length / cfg.mode_count as f64).powi(2);
    let t_init = 10.0 * t_floor;
    if cfg.moment_times[0] < t_init || cfg.t_scale < t_init {
        return Err(StatsError::Config(format!(
            "earliest observation {:.3e} is below the tracer handoff time {:.3e}; \
             raise mode_count",
            cfg.moment_times[0].min(cfg.t_scale),
            t_init
        )));
    }
    let icfg = IntegratorConfig {
        rel_tol: cfg.rel_tol,
        abs_tol: cfg.abs_tol,
        max_step: f64::INFINITY,
        t_init_factor: 10.0,
    };
    let t_hi = cfg.t_scale.max(*cfg.moment_times.last().unwrap());
    let ecfg = EnsembleConfig {
        n_env: cfg.n_env,
        base_seed: cfg.base_seed,
        env_spec: EnvironmentSpec {
            domain_length: cfg.domain_length,
            mode_count: cfg.mode_count,
            seed: 0,
            backend: Backend::Spectral,
        },
        experiment: "short-time".into(),
        worker_count: cfg.worker_count,
    };
    run_ensemble(
        &ecfg,
        echo(cfg)?,
        |env, _i| {
            let (t0, x0) = init_tracer(env, &icfg).map_err(|e| e.to_string())?;
            let path =
                integrate_tracer(env, x0, t0, t_hi, &icfg).map_err(|e| e.to_string())?;
            let endpoint = path.eval(cfg.t_scale) / cfg.t_scale.powf(0.75);
            let squares: Vec<f64> = cfg
                .moment_times
                .iter()
                .map(|&t| {
                    let x = path.eval(t);
                    x * x
                })
                .collect();
            Ok((endpoint, squares))
        },
        |outs| {
            let mut body = ReportBody::default();
            let n = outs.outputs.len();
            let endpoints: Vec<f64> = outs.outputs.iter().map(|o| o.0).collect();
            let mut means = Vec::with_capacity(cfg.moment_times.len());
            let mut weights = Vec::with_capacity(cfg.moment_times.len());
            for (j, &t) in cfg.moment_times.iter().enumerate() {
                let samples: Vec<f64> = outs.outputs.iter().map(|o| o.1[j]).collect();
                let (mean, se) = mean_and_se(&samples);
                body.moments.push(MomentRow {
                    label: "squared displacement".into(),
                    t,
                    mean,
                    se,
                    n: n as u64,
                });
                means.push(mean);
                weights.push((mean / se) * (mean / se));
            }
            let usable = weights.iter().all(|w| w.is_finite() && *w > 0.0);
            let fit = fit_exponent(
                &cfg.moment_times,
                &means,
                if usable { Some(&weights) } else { None },
            )?;
            body.fits.push(LabeledFit {
                label: "squared displacement growth exponent".into(),
                fit,
            });
            let (emean, _ese) = mean_and_se(&endpoints);
            let var = if endpoints.len() > 1 {
                endpoints.iter().map(|x| (x - emean) * (x - emean)).sum::<f64>()
                    / (endpoints.len() as f64 - 1.0)
            } else {
                f64::NAN
            };
            body.scalars.push(ScalarRow {
                label: "rescaled endpoint sample mean".into(),
                value: emean,
            });
            body.scalars.push(ScalarRow {
                label: "rescaled endpoint sample variance".into(),
                value: var,
            });
            body.scalars.push(ScalarRow {
                label: "rescaled endpoint limit variance".into(),
                value: SHORT_TIME_LIMIT_VARIANCE,
            });
            if endpoints.len() >= 50 {
                let normal = Normal::new(0.0, SHORT_TIME_LIMIT_VARIANCE.sqrt())
                    .map_err(|e| StatsError::Config(e.to_string()))?;
                let ks = ks_one_sample(&endpoints, |x| normal.cdf(x))?;
                body.tests.push(LabeledTest {
                    label: "rescaled endpoint vs limiting Gaussian".into(),
                    statistic: ks.statistic,
                    p_value: ks.p_value,
                    n_eff: ks.n_eff,
                });
            } else {
                body.notes.push(
                    "endpoint distribution test skipped: fewer than 50 samples".into(),
                );
            }
            Ok(body)
        },
    )
}

// ---------------------------------------------------------------------------
// Long-time trapping
// ---------------------------------------------------------------------------

/// Long-horizon ensemble: the tracer against the trapping frontier process.
///
/// Torus sizing note: the frontier needs zero curves of both trace-back sign
/// classes alive at `t_large`. The expected zero count at time `t` is
/// `Λ/(2π√t)`, so each sign class holds `Λ/(4π√t)` curves on average; the
/// default `Λ = 5000` keeps ≈ 6.3 per class at `t = 4000`, putting class
/// extinction (an environment failure) safely inside the failure budget.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LongTimeConfig {
    pub n_env: u64,
    pub base_seed: u64,
    /// Execution plumbing, not experiment identity: left out of serialized
    /// echoes so reruns with different worker counts compare bitwise equal.
    #[serde(skip_serializing)]
    pub worker_count: usize,
    pub domain_length: f64,
    pub mode_count: usize,
    /// Earlier comparison horizon.
    pub t_small: f64,
    /// Later comparison horizon; decay checks compare the two.
    pub t_large: f64,
    /// Sample count of the sup-gap θ-grid on [1/2, 1].
    pub theta_count: usize,
    /// Breakpoint count of the rescaled tracer path used for the jump
    /// oscillation functional.
    pub path_theta_count: usize,
    /// Half-width of the oscillation window (in rescaled time θ).
    pub delta: f64,
    pub rel_tol: f64,
    pub abs_tol: f64,
    /// Torus of the independent trap-location reference ensemble.
    pub reference_domain_length: f64,
    pub reference_mode_count: usize,
}

impl Default for LongTimeConfig {
    fn default() -> Self {
        LongTimeConfig {
            n_env: 500,
            base_seed: 30_001,
            worker_count: 0,
            domain_length: 5000.0,
            mode_count: 20_000,
            t_small: 1000.0,
            t_large: 4000.0,
            theta_count: 201,
            path_theta_count: 2001,
            delta: 0.05,
            rel_tol: 1e-6,
            abs_tol: 1e-9,
            reference_domain_length: 2500.0,
            reference_mode_count: 10_000,
        }
    }
}

struct LongTimeEnvOut {
    endpoint_small: f64,
    trap_small: f64,
    gap_small: f64,
    gap_large: f64,
    end_gap_small: f64,
    end_gap_large: f64,
    ws_small: Vec<f64>,
    ws_large: Vec<f64>,
}

/// Seed offset of the independent reference stream (an arbitrary odd
/// constant, echoed in the report notes).
const REFERENCE_SEED_OFFSET: u64 = 0x9E37_79B9_7F4A_7C15;

/// Per environment: integrate the tracer to `t_large`, track all zero curves,
/// build the frontier paths, and record (i) the rescaled endpoint at
/// `t_small`, (ii) `sup_{θ∈[1/2,1]} |X(θT) − Z(θT)|/√T` at both horizons,
/// (iii) the M1 oscillation of the rescaled tracer path at every frontier
/// jump with `t_jump/T ∈ [2δ, 1−2δ]`. An independent ensemble contributes
/// trap locations `Z(t_small)/√t_small` for the endpoint-law comparison.
pub fn run_long_time(cfg: &LongTimeConfig) -> Result<EnsembleReport, StatsError> {
    if !(cfg.t_small > 0.0 && cfg.t_large > cfg.t_small) {
        return Err(StatsError::Config(format!(
            "need 0 < t_small < t_large, got {} and {}",
            cfg.t_small, cfg.t_large
        )));
    }
    if cfg.theta_count < 2 || cfg.path_theta_count < 8 {
        return Err(StatsError::Config(
            "theta_count must be ≥ 2 and path_theta_count ≥ 8".into(),
        ));
    }
    if !(cfg.delta > 0.0 && cfg.delta < 0.25) {
        return Err(StatsError::Config(format!(
            "delta must lie in (0, 0.25), got {}",
            cfg.delta
        )));
    }
    let icfg = IntegratorConfig {
        rel_tol: cfg.rel_tol,
        abs_tol: cfg.abs_tol,
        max_step: f64::INFINITY,
        t_init_factor: 10.0,
    };
    let tc = TraceConfig::default();
    let half = cfg.domain_length / 2.0;

    // Reference trap locations from an independent seed stream.
    let ref_spec = EnvironmentSpec {
        domain_length: cfg.reference_domain_length,
        mode_count: cfg.reference_mode_count,
        seed: 0,
        backend: Backend::Spectral,
    };
    let ref_half = cfg.reference_domain_length / 2.0;
    let t_small = cfg.t_small;
    let ref_results = run_parallel(
        cfg.n_env,
        cfg.worker_count,
        cfg.base_seed.wrapping_add(REFERENCE_SEED_OFFSET),
        |seed, _i| {
            let spec = EnvironmentSpec { seed, ..ref_spec };
            let env =
                crate::environment::sample_environment(&spec).map_err(|e| e.to_string())?;
            let t0 = 10.0 * env.t_floor();
            if !(t0 < t_small) {
                return Err(format!(
                    "reference handoff {t0} is not below t_small {t_small}"
                ));
            }
            let tracked = track_zero_curves(&env, t0, t_small, (-ref_half, ref_half), &tc)
                .map_err(|e| e.to_string())?;
            let grid =
                geometric_grid(t0, t_small, 120).map_err(|e| e.to_string())?;
            let zp = z_path(&tracked, &grid).map_err(|e| e.to_string())?;
            Ok(zp.z.eval(t_small) / t_small.sqrt())
        },
    )?;
    let mut z_ref: Vec<f64> = Vec::with_capacity(ref_results.len());
    let mut ref_failures: Vec<String> = Vec::new();
    for r in ref_results {
        match r {
            Ok(v) => z_ref.push(v),
            Err(m) => ref_failures.push(m),
        }
    }
    let allowed = (FAILURE_BUDGET * cfg.n_env as f64).floor() as usize;
    if ref_failures.len() > allowed {
        return Err(StatsError::Config(format!(
            "reference ensemble failure budget exceeded: {}/{} failed (allowed {allowed}); \
             first failure: {}",
            ref_failures.len(),
            cfg.n_env,
            ref_failures.first().cloned().unwrap_or_default()
        )));
    }
    let ref_failure_count = ref_failures.len();

    let ecfg = EnsembleConfig {
        n_env: cfg.n_env,
        base_seed: cfg.base_seed,
        env_spec: EnvironmentSpec {
            domain_length: cfg.domain_length,
            mode_count: cfg.mode_count,
            seed: 0,
            backend: Backend::Spectral,
        },
        experiment: "long-time".into(),
        worker_count: cfg.worker_count,
    };
    run_ensemble(
        &ecfg,
        echo(cfg)?,
        |env, _i| {
            let (t0, x0) = init_tracer(env, &icfg).map_err(|e| e.to_string())?;
            let path = integrate_tracer(env, x0, t0, cfg.t_large, &icfg)
                .map_err(|e| e.to_string())?;
            let tracked = track_zero_curves(env, t0, cfg.t_large, (-half, half), &tc)
                .map_err(|e| e.to_string())?;
            let base = geometric_grid(t0, cfg.t_large, 160).map_err(|e| e.to_string())?;
            let mut grid = base;
            for &t_obs in &[cfg.t_small, cfg.t_large] {
                let thetas: Vec<f64> = (0..cfg.theta_count)
                    .map(|k| {
                        let th =
                            0.5 + 0.5 * k as f64 / (cfg.theta_count - 1) as f64;
                        th * t_obs
                    })
                    .collect();
                grid = merge_grids(&grid, &thetas);
            }
            let zp = z_path(&tracked, &grid).map_err(|e| e.to_string())?;

            let sup_gap = |t_obs: f64| -> f64 {
                let mut sup: f64 = 0.0;
                for k in 0..cfg.theta_count {
                    let th = 0.5 + 0.5 * k as f64 / (cfg.theta_count - 1) as f64;
                    let t = th * t_obs;
                    sup = sup.max((path.eval(t) - zp.z.eval(t)).abs());
                }
                // The frontier path is exact at its own breakpoints; check the
                // left limits there so a jump between θ-samples is not missed.
                for &tb in zp.z.breakpoints() {
                    if tb >= 0.5 * t_obs && tb <= t_obs {
                        let x = path.eval(tb);
                        sup = sup
                            .max((x - zp.z.eval(tb)).abs())
                            .max((x - zp.z.eval_left(tb)).abs());
                    }
                }
                sup / t_obs.sqrt()
            };
            let gap_small = sup_gap(cfg.t_small);
            let gap_large = sup_gap(cfg.t_large);

            let ws_at = |t_obs: f64| -> Result<Vec<f64>, String> {
                let th0 = t0 / t_obs;
                let m = cfg.path_theta_count;
                let mut bps = Vec::with_capacity(m);
                let mut vals = Vec::with_capacity(m);
                for k in 0..m {
                    let th = th0 + (1.0 - th0) * k as f64 / (m - 1) as f64;
                    bps.push(th);
                    vals.push(path.eval(th * t_obs) / t_obs.sqrt());
                }
                let y = CadlagPath::piecewise_linear(bps, vals).map_err(|e| e.to_string())?;
                let mut out = Vec::new();
                for j in &zp.z_jumps {
                    let th_j = j.t / t_obs;
                    if th_j >= 2.0 * cfg.delta && th_j <= 1.0 - 2.0 * cfg.delta {
                        out.push(oscillation_ws(&y, th_j, cfg.delta));
                    }
                }
                Ok(out)
            };
            let ws_small = ws_at(cfg.t_small)?;
            let ws_large = ws_at(cfg.t_large)?;

            let end_gap = |t_obs: f64| -> f64 {
                (path.eval(t_obs) - zp.z.eval(t_obs)).abs() / t_obs.sqrt()
            };
            Ok(LongTimeEnvOut {
                endpoint_small: path.eval(cfg.t_small) / cfg.t_small.sqrt(),
                trap_small: zp.z.eval(cfg.t_small) / cfg.t_small.sqrt(),
                gap_small,
                gap_large,
                end_gap_small: end_gap(cfg.t_small),
                end_gap_large: end_gap(cfg.t_large),
                ws_small,
                ws_large,
            })
        },
        |outs| {
            let mut body = ReportBody::default();
            let n = outs.outputs.len();
            let endpoints: Vec<f64> =
                outs.outputs.iter().map(|o| o.endpoint_small).collect();
            let gaps_small: Vec<f64> = outs.outputs.iter().map(|o| o.gap_small).collect();
            let gaps_large: Vec<f64> = outs.outputs.iter().map(|o| o.gap_large).collect();
            let ws_small: Vec<f64> = outs
                .outputs
                .iter()
                .flat_map(|o| o.ws_small.iter().copied())
                .collect();
            let ws_large: Vec<f64> = outs
                .outputs
                .iter()
                .flat_map(|o| o.ws_large.iter().copied())
                .collect();

            let sq = |v: &[f64]| -> Vec<f64> { v.iter().map(|x| x * x).collect() };
            let (m2, m2se) = mean_and_se(&sq(&endpoints));
            body.moments.push(MomentRow {
                label: "endpoint second moment over T".into(),
                t: cfg.t_small,
                mean: m2,
                se: m2se,
                n: n as u64,
            });

            let med_gap_small = median(&gaps_small);
            let med_gap_large = median(&gaps_large);
            body.scalars.push(ScalarRow {
                label: format!("median sup gap over sqrt(T), T = {}", cfg.t_small),
                value: med_gap_small,
            });
            body.scalars.push(ScalarRow {
                label: format!("median sup gap over sqrt(T), T = {}", cfg.t_large),
                value: med_gap_large,
            });
            if med_gap_small > 0.0 {
                body.scalars.push(ScalarRow {
                    label: "sup gap ratio (late over early)".into(),
                    value: med_gap_large / med_gap_small,
                });
            }
            let end_small: Vec<f64> =
                outs.outputs.iter().map(|o| o.end_gap_small).collect();
            let end_large: Vec<f64> =
                outs.outputs.iter().map(|o| o.end_gap_large).collect();
            body.scalars.push(ScalarRow {
                label: format!("median endpoint gap over sqrt(T), T = {}", cfg.t_small),
                value: median(&end_small),
            });
            body.scalars.push(ScalarRow {
                label: format!("median endpoint gap over sqrt(T), T = {}", cfg.t_large),
                value: median(&end_large),
            });

            let med_ws_small = median(&ws_small);
            let med_ws_large = median(&ws_large);
            body.scalars.push(ScalarRow {
                label: format!("median jump oscillation, T = {}", cfg.t_small),
                value: med_ws_small,
            });
            body.scalars.push(ScalarRow {
                label: format!("median jump oscillation, T = {}", cfg.t_large),
                value: med_ws_large,
            });
            if med_ws_small > 0.0 {
                body.scalars.push(ScalarRow {
                    label: "jump oscillation ratio (late over early)".into(),
                    value: med_ws_large / med_ws_small,
                });
            }
            body.scalars.push(ScalarRow {
                label: format!("jump count, T = {}", cfg.t_small),
                value: ws_small.len() as f64,
            });
            body.scalars.push(ScalarRow {
                label: format!("jump count, T = {}", cfg.t_large),
                value: ws_large.len() as f64,
            });
            body.scalars.push(ScalarRow {
                label: "reference sample size".into(),
                value: z_ref.len() as f64,
            });

            let traps: Vec<f64> = outs.outputs.iter().map(|o| o.trap_small).collect();
            let (tm2, tm2se) = mean_and_se(&sq(&traps));
            body.moments.push(MomentRow {
                label: "trap second moment over T".into(),
                t: cfg.t_small,
                mean: tm2,
                se: tm2se,
                n: n as u64,
            });
            let (rm2, rm2se) = mean_and_se(&sq(&z_ref));
            body.moments.push(MomentRow {
                label: "reference trap second moment over T".into(),
                t: cfg.t_small,
                mean: rm2,
                se: rm2se,
                n: z_ref.len() as u64,
            });
            if endpoints.len() >= 50 && z_ref.len() >= 50 {
                let ks = ks_two_sample(&endpoints, &z_ref)?;
                body.tests.push(LabeledTest {
                    label: "tracer endpoint over sqrt(T) vs independent trap location"
                        .into(),
                    statistic: ks.statistic,
                    p_value: ks.p_value,
                    n_eff: ks.n_eff,
                });
                let ks_t = ks_two_sample(&traps, &z_ref)?;
                body.tests.push(LabeledTest {
                    label: "trap over sqrt(T) vs independent trap location".into(),
                    statistic: ks_t.statistic,
                    p_value: ks_t.p_value,
                    n_eff: ks_t.n_eff,
                });
            } else {
                body.notes.push(
                    "endpoint-law comparison skipped: fewer than 50 samples on a side"
                        .into(),
                );
            }
            body.notes.push(format!(
                "reference trap locations use seed stream base_seed + {REFERENCE_SEED_OFFSET:#x} \
                 ({ref_failure_count} reference failures)"
            ));
            body.notes.push(format!(
                "jump oscillations pool frontier jumps with t/T in [{}, {}]",
                2.0 * cfg.delta,
                1.0 - 2.0 * cfg.delta
            ));
            Ok(body)
        },
    )
}

// ---------------------------------------------------------------------------
// Frontier laws
// ---------------------------------------------------------------------------

/// Frontier-process audit and trap-location laws.
///
/// The reference ensemble lives on a torus shrunk by `√scale_factor` with the
/// same site count, observed at `t_scale/scale_factor`: the diffusive
/// rescaling `u ↦ λ^{1/4} u(λt, √λ x)` maps one setup exactly onto the other
/// (lattice spacing, tracking floor and merge tolerances included), so the
/// two rescaled trap samples share one law up to the claim under test.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ZeroLawConfig {
    pub n_env: u64,
    pub base_seed: u64,
    /// Execution plumbing, not experiment identity: left out of serialized
    /// echoes so reruns with different worker counts compare bitwise equal.
    #[serde(skip_serializing)]
    pub worker_count: usize,
    pub domain_length: f64,
    pub mode_count: usize,
    /// Late observation time of the trap location.
    pub t_scale: f64,
    /// Number of log-spaced frontier query times per environment.
    pub query_count: usize,
    /// Time shrink factor of the reference ensemble.
    pub scale_factor: f64,
}

impl Default for ZeroLawConfig {
    fn default() -> Self {
        ZeroLawConfig {
            n_env: 10_000,
            base_seed: 40_001,
            worker_count: 0,
            domain_length: 160.0,
            mode_count: 640,
            t_scale: 4.0,
            query_count: 12,
            scale_factor: 4.0,
        }
    }
}

/// Per environment: track all zero curves to `t_scale`, query the frontier on
/// a log grid (counting stable/unstable-alternative violations), register
/// every frontier jump against its annihilation event, and record the trap
/// location. The reference ensemble contributes exactly rescaled independent
/// trap locations; the aggregate reports the violation and jump-explanation
/// fractions, the two-sample distribution comparison, and the tail fit and
/// histogram of the reference sample.
pub fn run_zero_laws(cfg: &ZeroLawConfig) -> Result<EnsembleReport, StatsError> {
    if !(cfg.t_scale > 0.0) || !(cfg.scale_factor > 1.0) {
        return Err(StatsError::Config(format!(
            "need t_scale > 0 and scale_factor > 1, got {} and {}",
            cfg.t_scale, cfg.scale_factor
        )));
    }
    if cfg.query_count < 2 {
        return Err(StatsError::Config("query_count must be at least 2".into()));
    }
    let tc = TraceConfig::default();
    let half = cfg.domain_length / 2.0;
    let t_floor = (cfg.domain_length / cfg.mode_count as f64).powi(2);
    let t0 = 10.0 * t_floor;
    if !(t0 < cfg.t_scale) {
        return Err(StatsError::Config(format!(
            "tracking floor {t0} is not below t_scale {}",
            cfg.t_scale
        )));
    }

    // Exactly rescaled reference: torus and observation time shrink together.
    let mu = cfg.scale_factor;
    let ref_len = cfg.domain_length / mu.sqrt();
    let ref_t = cfg.t_scale / mu;
    let ref_half = ref_len / 2.0;
    let ref_spec = EnvironmentSpec {
        domain_length: ref_len,
        mode_count: cfg.mode_count,
        seed: 0,
        backend: Backend::Spectral,
    };
    let query_count = cfg.query_count;
    let ref_results = run_parallel(
        cfg.n_env,
        cfg.worker_count,
        cfg.base_seed.wrapping_add(REFERENCE_SEED_OFFSET),
        |seed, _i| {
            let spec = EnvironmentSpec { seed, ..ref_spec };
            let env =
                crate::environment::sample_environment(&spec).map_err(|e| e.to_string())?;
            let t0r = 10.0 * env.t_floor();
            let tracked = track_zero_curves(&env, t0r, ref_t, (-ref_half, ref_half), &tc)
                .map_err(|e| e.to_string())?;
            let grid = geometric_grid(t0r, ref_t, query_count.max(24))
                .map_err(|e| e.to_string())?;
            let zp = z_path(&tracked, &grid).map_err(|e| e.to_string())?;
            Ok(zp.z.eval(ref_t) / ref_t.sqrt())
        },
    )?;
    let mut z_ref: Vec<f64> = Vec::with_capacity(ref_results.len());
    let mut ref_failure_count = 0usize;
    let mut first_ref_failure = String::new();
    for r in ref_results {
        match r {
            Ok(v) => z_ref.push(v),
            Err(m) => {
                if ref_failure_count == 0 {
                    first_ref_failure = m;
                }
                ref_failure_count += 1;
            }
        }
    }
    let allowed = (FAILURE_BUDGET * cfg.n_env as f64).floor() as usize;
    if ref_failure_count > allowed {
        return Err(StatsError::Config(format!(
            "reference ensemble failure budget exceeded: {ref_failure_count}/{} failed \
             (allowed {allowed}); first failure: {first_ref_failure}",
            cfg.n_env
        )));
    }

    struct ZeroLawEnvOut {
        violations: u32,
        queried: u32,
        jumps: u32,
        explained: u32,
        z_late: f64,
    }

    let ecfg = EnsembleConfig {
        n_env: cfg.n_env,
        base_seed: cfg.base_seed,
        env_spec: EnvironmentSpec {
            domain_length: cfg.domain_length,
            mode_count: cfg.mode_count,
            seed: 0,
            backend: Backend::Spectral,
        },
        experiment: "zero-laws".into(),
        worker_count: cfg.worker_count,
    };
    run_ensemble(
        &ecfg,
        echo(cfg)?,
        |env, _i| {
            let tracked = track_zero_curves(env, t0, cfg.t_scale, (-half, half), &tc)
                .map_err(|e| e.to_string())?;
            let grid = geometric_grid(t0, cfg.t_scale, cfg.query_count)
                .map_err(|e| e.to_string())?;
            let zp = z_path(&tracked, &grid).map_err(|e| e.to_string())?;
            let mut jumps = 0u32;
            let mut explained = 0u32;
            for j in &zp.z_jumps {
                jumps += 1;
                if let Some(ei) = j.event {
                    let ev = &tracked.events[ei];
                    // Merge tolerance at the event, using the step bound in
                    // effect there.  Distance is taken on the torus because
                    // the pre-jump location and the recorded event location
                    // may sit in different periodic windows.
                    let tol = merge_tol(tc.max_step_frac * ev.t);
                    let raw = (j.from - ev.x).abs() % cfg.domain_length;
                    let dist = raw.min(cfg.domain_length - raw);
                    if dist <= tol {
                        explained += 1;
                    }
                }
            }
            Ok(ZeroLawEnvOut {
                violations: zp.violations.len() as u32,
                queried: grid.len() as u32,
                jumps,
                explained,
                z_late: zp.z.eval(cfg.t_scale),
            })
        },
        |outs| {
            let mut body = ReportBody::default();
            let total_viol: u64 = outs.outputs.iter().map(|o| o.violations as u64).sum();
            let total_query: u64 = outs.outputs.iter().map(|o| o.queried as u64).sum();
            let total_jumps: u64 = outs.outputs.iter().map(|o| o.jumps as u64).sum();
            let total_expl: u64 = outs.outputs.iter().map(|o| o.explained as u64).sum();
            let scaled_main: Vec<f64> = outs
                .outputs
                .iter()
                .map(|o| o.z_late / cfg.t_scale.sqrt())
                .collect();

            body.scalars.push(ScalarRow {
                label: "frontier queried times".into(),
                value: total_query as f64,
            });
            body.scalars.push(ScalarRow {
                label: "frontier alternative violations".into(),
                value: total_viol as f64,
            });
            body.scalars.push(ScalarRow {
                label: "frontier alternative violation fraction".into(),
                value: total_viol as f64 / total_query as f64,
            });
            body.scalars.push(ScalarRow {
                label: "frontier jumps detected".into(),
                value: total_jumps as f64,
            });
            body.scalars.push(ScalarRow {
                label: "jumps explained by annihilation events".into(),
                value: total_expl as f64,
            });
            body.scalars.push(ScalarRow {
                label: "jump explanation fraction".into(),
                value: if total_jumps > 0 {
                    total_expl as f64 / total_jumps as f64
                } else {
                    f64::NAN
                },
            });
            body.scalars.push(ScalarRow {
                label: "reference sample size".into(),
                value: z_ref.len() as f64,
            });

            let n_main = scaled_main.len();
            let (mm, mse) = mean_and_se(&scaled_main.iter().map(|x| x * x).collect::<Vec<_>>());
            body.moments.push(MomentRow {
                label: "rescaled trap location second moment".into(),
                t: cfg.t_scale,
                mean: mm,
                se: mse,
                n: n_main as u64,
            });

            if n_main >= 50 && z_ref.len() >= 50 {
                let ks = ks_two_sample(&scaled_main, &z_ref)?;
                body.tests.push(LabeledTest {
                    label: "rescaled trap location vs shrunk-scale reference".into(),
                    statistic: ks.statistic,
                    p_value: ks.p_value,
                    n_eff: ks.n_eff,
                });
            } else {
                body.notes.push(
                    "scaling comparison skipped: fewer than 50 samples on a side".into(),
                );
            }

            let abs_ref: Vec<f64> = z_ref.iter().map(|z| z.abs()).collect();
            let mut sorted = abs_ref.clone();
            sorted.sort_unstable_by(|a, b| a.partial_cmp(b).unwrap());
            if sorted.len() >= 200 {
                let lower = median(&sorted);
                let upper = sorted[sorted.len() - 100];
                if upper > lower {
                    body.tail = Some(tail_fit(&abs_ref, (lower, upper))?);
                    body.notes.push(format!(
                        "tail fit range [{lower:.4}, {upper:.4}]: median to the \
                         100th-largest |trap location|"
                    ));
                } else {
                    body.notes
                        .push("tail fit skipped: degenerate range".into());
                }
            } else {
                body.notes
                    .push("tail fit skipped: fewer than 200 reference samples".into());
            }
            if z_ref.len() >= 1000 {
                body.density = Some(density_histogram(&z_ref, 50)?);
            } else {
                body.notes.push(
                    "density diagnostic skipped: fewer than 1000 reference samples".into(),
                );
            }
            body.notes.push(format!(
                "reference trap locations use seed stream base_seed + \
                 {REFERENCE_SEED_OFFSET:#x} ({ref_failure_count} reference failures)"
            ));
            Ok(body)
        },
    )
}

// ---------------------------------------------------------------------------
// Zero-tracing audit
// ---------------------------------------------------------------------------

/// Round-trip and bookkeeping audit of zero continuation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TraceAuditConfig {
    pub n_env: u64,
    pub base_seed: u64,
    /// Execution plumbing, not experiment identity: left out of serialized
    /// echoes so reruns with different worker counts compare bitwise equal.
    #[serde(skip_serializing)]
    pub worker_count: usize,
    pub domain_length: f64,
    pub mode_count: usize,
    /// Upper time: zeros found here are traced back and re-continued forward.
    pub t_top: f64,
    /// Lower time of the round trip.
    pub s_low: f64,
    /// Trace-back round trips attempted per environment.
    pub traces_per_env: usize,
    /// Sample count of the lap-monotonicity time grid.
    pub lap_grid_count: usize,
}

impl Default for TraceAuditConfig {
    fn default() -> Self {
        TraceAuditConfig {
            n_env: 30,
            base_seed: 50_001,
            worker_count: 0,
            domain_length: 64.0,
            mode_count: 256,
            t_top: 2.0,
            s_low: 0.7,
            traces_per_env: 4,
            lap_grid_count: 25,
        }
    }
}

/// Per environment: (i) alive zero counts along a log time grid must never
/// increase; (ii) every annihilation event must pair a stable curve with an
/// unstable one; (iii) zeros found at `t_top` are traced back to `s_low` and
/// continued forward again — the round trip must return within
/// `10³ · zero_tol(t_top)`. Scalar rows report totals and the worst
/// round-trip error relative to that tolerance.
pub fn run_trace_audit(cfg: &TraceAuditConfig) -> Result<EnsembleReport, StatsError> {
    let t_floor = (cfg.domain_length / cfg.mode_count as f64).powi(2);
    let t0 = 10.0 * t_floor;
    if !(t0 < cfg.s_low && cfg.s_low < cfg.t_top) {
        return Err(StatsError::Config(format!(
            "need tracking floor {t0} < s_low {} < t_top {}",
            cfg.s_low, cfg.t_top
        )));
    }
    if cfg.traces_per_env == 0 || cfg.lap_grid_count < 2 {
        return Err(StatsError::Config(
            "traces_per_env must be positive and lap_grid_count at least 2".into(),
        ));
    }
    let tc = TraceConfig::default();
    let half = cfg.domain_length / 2.0;

    struct AuditEnvOut {
        lap_violations: u32,
        mismatched_events: u32,
        events: u32,
        attempted: u32,
        within_tol: u32,
        worst_ratio: f64,
    }

    let ecfg = EnsembleConfig {
        n_env: cfg.n_env,
        base_seed: cfg.base_seed,
        env_spec: EnvironmentSpec {
            domain_length: cfg.domain_length,
            mode_count: cfg.mode_count,
            seed: 0,
            backend: Backend::Spectral,
        },
        experiment: "trace-audit".into(),
        worker_count: cfg.worker_count,
    };
    run_ensemble(
        &ecfg,
        echo(cfg)?,
        |env, _i| {
            let tracked = track_zero_curves(env, t0, cfg.t_top, (-half, half), &tc)
                .map_err(|e| e.to_string())?;
            let grid = geometric_grid(t0, cfg.t_top, cfg.lap_grid_count)
                .map_err(|e| e.to_string())?;
            let mut lap_violations = 0u32;
            let mut prev = usize::MAX;
            for &t in &grid {
                let (s, u) = tracked.kind_counts(t);
                let total = s + u;
                if total > prev {
                    lap_violations += 1;
                }
                prev = total;
            }
            let mut mismatched_events = 0u32;
            for ev in &tracked.events {
                if tracked.curves[ev.curve_stable].kind != ZeroKind::Stable
                    || tracked.curves[ev.curve_unstable].kind != ZeroKind::Unstable
                {
                    mismatched_events += 1;
                }
            }

            let n_scan =
                (2.0 * (8.0 * cfg.domain_length / cfg.t_top.sqrt()).ceil()).max(16.0) as usize;
            let zeros = find_zeros_torus(env, cfg.t_top, n_scan).map_err(|e| e.to_string())?;
            let usable: Vec<&ZeroPoint> =
                zeros.iter().filter(|z| z.kind != ZeroKind::Neutral).collect();
            let take = cfg.traces_per_env.min(usable.len());
            let tol = 1e3 * zero_tol(env, cfg.t_top);
            let mut attempted = 0u32;
            let mut within_tol = 0u32;
            let mut worst_ratio: f64 = 0.0;
            for k in 0..take {
                let z0 = usable[k * usable.len() / take];
                attempted += 1;
                let round_trip = || -> Result<f64, String> {
                    let back =
                        trace_zero(env, z0, cfg.s_low, &tc).map_err(|e| e.to_string())?;
                    let restart = ZeroPoint {
                        t: back.times[0],
                        x: back.positions[0],
                        kind: back.kind,
                        slope: back.slopes[0],
                    };
                    let fwd = continue_zero(env, &restart, cfg.t_top, &tc)
                        .map_err(|e| e.to_string())?;
                    Ok((fwd.positions.last().unwrap() - z0.x).abs())
                };
                match round_trip() {
                    Ok(err) => {
                        if err <= tol {
                            within_tol += 1;
                        }
                        worst_ratio = worst_ratio.max(err / tol);
                    }
                    Err(_) => {
                        worst_ratio = f64::INFINITY;
                    }
                }
            }
            Ok(AuditEnvOut {
                lap_violations,
                mismatched_events,
                events: tracked.events.len() as u32,
                attempted,
                within_tol,
                worst_ratio,
            })
        },
        |outs| {
            let mut body = ReportBody::default();
            let sum = |f: &dyn Fn(&AuditEnvOut) -> u32| -> f64 {
                outs.outputs.iter().map(|o| f(o) as u64).sum::<u64>() as f64
            };
            body.scalars.push(ScalarRow {
                label: "lap count violations".into(),
                value: sum(&|o| o.lap_violations),
            });
            body.scalars.push(ScalarRow {
                label: "annihilation events observed".into(),
                value: sum(&|o| o.events),
            });
            body.scalars.push(ScalarRow {
                label: "events with mismatched kinds".into(),
                value: sum(&|o| o.mismatched_events),
            });
            body.scalars.push(ScalarRow {
                label: "round trips attempted".into(),
                value: sum(&|o| o.attempted),
            });
            body.scalars.push(ScalarRow {
                label: "round trips within tolerance".into(),
                value: sum(&|o| o.within_tol),
            });
            body.scalars.push(ScalarRow {
                label: "worst round trip error over tolerance".into(),
                value: outs
                    .outputs
                    .iter()
                    .map(|o| o.worst_ratio)
                    .fold(0.0, f64::max),
            });
            body.notes.push(format!(
                "round trip: trace back from t_top = {} to s_low = {}, continue forward, \
                 compare against the starting zero within 1e3·zero_tol(t_top)",
                cfg.t_top, cfg.s_low
            ));
            Ok(body)
        },
    )
}
