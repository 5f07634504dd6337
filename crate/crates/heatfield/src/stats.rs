//! Monte Carlo ensemble harness and estimators: moment curves, log-log
//! exponent fits, one- and two-sample Kolmogorov–Smirnov tests, exponential
//! tail fits, and histogram density diagnostics.
//!
//! Determinism contract: a report depends only on the configuration and
//! `base_seed`, never on `worker_count` or scheduling. Environment `i` uses
//! seed `base_seed + i` (wrapping); outputs are reduced in index order.

use crate::environment::{sample_environment, Environment, EnvironmentSpec};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

/// Fraction of per-environment failures tolerated before a run aborts.
/// Near-degenerate zero tracking is expected at tolerance scale; silently
/// excluding more than this would bias the sampled laws.
pub const FAILURE_BUDGET: f64 = 0.02;

#[derive(Debug, Error)]
pub enum StatsError {
    #[error("insufficient data: {0}")]
    InsufficientData(String),
    #[error("fit inputs must span at least one decade (got ratio {ratio:.3})")]
    SpanTooNarrow { ratio: f64 },
    #[error("non-positive value where a positive one is required: {0}")]
    NonPositive(String),
    #[error("mismatched input lengths: {0}")]
    MismatchedLengths(String),
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error(
        "failure budget exceeded: {failed}/{n_env} environments failed (allowed {allowed}); \
         first failures: {examples:?}"
    )]
    FailureBudget {
        failed: u64,
        n_env: u64,
        allowed: u64,
        examples: Vec<(u64, String)>,
    },
}

// ---------------------------------------------------------------------------
// Ensemble harness
// ---------------------------------------------------------------------------

/// Configuration of a Monte Carlo ensemble over independent environments.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EnsembleConfig {
    pub n_env: u64,
    pub base_seed: u64,
    /// Template environment; its `seed` field is ignored (environment `i`
    /// runs with seed `base_seed + i`).
    pub env_spec: EnvironmentSpec,
    /// Short experiment name, echoed in the manifest.
    pub experiment: String,
    /// 0 means "let the thread pool decide"; any value yields identical
    /// results.
    pub worker_count: usize,
}

/// Everything needed to trace a report back to its seeds.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub experiment: String,
    /// Full experiment parameters (grids, horizons, …) as supplied by the
    /// caller.
    pub config: serde_json::Value,
    /// SHA-256 of the canonical JSON of (experiment, config, env_spec,
    /// n_env, base_seed).
    pub config_hash: String,
    pub env_spec: EnvironmentSpec,
    pub n_env: u64,
    pub base_seed: u64,
    pub seed_note: String,
    pub failed_indices: Vec<u64>,
    pub failure_messages: Vec<String>,
    pub version: String,
    /// Filled by the command-line driver's manifest file only; kept `None`
    /// inside reports so that reports are bitwise reproducible.
    pub wall_time_seconds: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MomentRow {
    pub label: String,
    pub t: f64,
    pub mean: f64,
    pub se: f64,
    pub n: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabeledFit {
    pub label: String,
    pub fit: ExponentFit,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabeledTest {
    pub label: String,
    pub statistic: f64,
    pub p_value: f64,
    pub n_eff: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScalarRow {
    pub label: String,
    pub value: f64,
}

/// The estimator payload of a report; every experiment fills the subset it
/// uses.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct ReportBody {
    pub moments: Vec<MomentRow>,
    pub fits: Vec<LabeledFit>,
    pub tests: Vec<LabeledTest>,
    pub tail: Option<TailFit>,
    pub density: Option<DensityDiagnostic>,
    pub scalars: Vec<ScalarRow>,
    pub notes: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnsembleReport {
    pub manifest: RunManifest,
    pub body: ReportBody,
}

/// Successful per-environment outputs, in index order, plus the indices that
/// produced them.
pub struct EnsembleOutputs<O> {
    pub outputs: Vec<O>,
    pub kept_indices: Vec<u64>,
}

fn config_hash(
    experiment: &str,
    config: &serde_json::Value,
    env_spec: &EnvironmentSpec,
    n_env: u64,
    base_seed: u64,
) -> String {
    let canon = serde_json::json!({
        "experiment": experiment,
        "config": config,
        "env_spec": env_spec,
        "n_env": n_env,
        "base_seed": base_seed,
    });
    let mut h = Sha256::new();
    h.update(serde_json::to_string(&canon).expect("manifest serialization").as_bytes());
    format!("{:x}", h.finalize())
}

/// Map `index -> job(seed, index)` over `0..n` on a dedicated thread pool,
/// returning results in index order regardless of scheduling.
pub fn run_parallel<O, F>(
    n: u64,
    worker_count: usize,
    base_seed: u64,
    job: F,
) -> Result<Vec<Result<O, String>>, StatsError>
where
    O: Send,
    F: Fn(u64, u64) -> Result<O, String> + Sync,
{
    use rayon::prelude::*;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(worker_count)
        .build()
        .map_err(|e| StatsError::Config(format!("thread pool: {e}")))?;
    Ok(pool.install(|| {
        (0..n)
            .into_par_iter()
            .map(|i| job(base_seed.wrapping_add(i), i))
            .collect()
    }))
}

/// Generic ensemble driver: runs `make(seed, index)` for each index, enforces
/// the failure budget, aggregates in index order, and attaches the manifest.
pub fn run_ensemble_with<O, F, G>(
    cfg: &EnsembleConfig,
    config_echo: serde_json::Value,
    make: F,
    aggregate: G,
) -> Result<EnsembleReport, StatsError>
where
    O: Send,
    F: Fn(u64, u64) -> Result<O, String> + Sync,
    G: FnOnce(EnsembleOutputs<O>) -> Result<ReportBody, StatsError>,
{
    if cfg.n_env == 0 {
        return Err(StatsError::Config("n_env must be positive".into()));
    }
    let results = run_parallel(cfg.n_env, cfg.worker_count, cfg.base_seed, make)?;
    let mut outputs = Vec::with_capacity(results.len());
    let mut kept_indices = Vec::with_capacity(results.len());
    let mut failed_indices = Vec::new();
    let mut failure_messages = Vec::new();
    for (i, r) in results.into_iter().enumerate() {
        match r {
            Ok(o) => {
                outputs.push(o);
                kept_indices.push(i as u64);
            }
            Err(msg) => {
                failed_indices.push(i as u64);
                if failure_messages.len() < 100 {
                    failure_messages.push(msg);
                }
            }
        }
    }
    let failed = failed_indices.len() as u64;
    let allowed = (FAILURE_BUDGET * cfg.n_env as f64).floor() as u64;
    if failed > allowed {
        let examples = failed_indices
            .iter()
            .zip(&failure_messages)
            .take(5)
            .map(|(&i, m)| (i, m.clone()))
            .collect();
        return Err(StatsError::FailureBudget {
            failed,
            n_env: cfg.n_env,
            allowed,
            examples,
        });
    }
    let body = aggregate(EnsembleOutputs {
        outputs,
        kept_indices,
    })?;
    let manifest = RunManifest {
        experiment: cfg.experiment.clone(),
        config_hash: config_hash(
            &cfg.experiment,
            &config_echo,
            &cfg.env_spec,
            cfg.n_env,
            cfg.base_seed,
        ),
        config: config_echo,
        env_spec: cfg.env_spec,
        n_env: cfg.n_env,
        base_seed: cfg.base_seed,
        seed_note: "environment i uses seed base_seed + i (wrapping)".into(),
        failed_indices,
        failure_messages,
        version: env!("CARGO_PKG_VERSION").into(),
        wall_time_seconds: None,
    };
    Ok(EnsembleReport { manifest, body })
}

/// Ensemble driver over sampled environments: environment `i` is drawn with
/// seed `base_seed + i` and handed to `per_env`. Aborts if more than 2% of
/// environments fail.
pub fn run_ensemble<O, F, G>(
    cfg: &EnsembleConfig,
    config_echo: serde_json::Value,
    per_env: F,
    aggregate: G,
) -> Result<EnsembleReport, StatsError>
where
    O: Send,
    F: Fn(&Environment, u64) -> Result<O, String> + Sync,
    G: FnOnce(EnsembleOutputs<O>) -> Result<ReportBody, StatsError>,
{
    let env_spec = cfg.env_spec;
    run_ensemble_with(
        cfg,
        config_echo,
        |seed, i| {
            let spec = EnvironmentSpec { seed, ..env_spec };
            let env = sample_environment(&spec).map_err(|e| e.to_string())?;
            per_env(&env, i)
        },
        aggregate,
    )
}

/// Sample mean and its standard error.
pub fn mean_and_se(samples: &[f64]) -> (f64, f64) {
    let n = samples.len() as f64;
    if samples.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let mean = samples.iter().sum::<f64>() / n;
    if samples.len() < 2 {
        return (mean, f64::NAN);
    }
    let var = samples.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / (n - 1.0);
    (mean, (var / n).sqrt())
}

/// Median (average of central pair for even lengths).
pub fn median(samples: &[f64]) -> f64 {
    let mut v = samples.to_vec();
    v.sort_unstable_by(|a, b| a.partial_cmp(b).unwrap());
    let n = v.len();
    if n == 0 {
        f64::NAN
    } else if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

// ---------------------------------------------------------------------------
// Log-log exponent fit
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExponentFit {
    pub slope: f64,
    pub intercept: f64,
    pub slope_se: f64,
    /// Half-width of the 95% confidence interval for the slope (Student-t,
    /// n−2 degrees of freedom, residual-scaled weighted covariance).
    pub ci_half_width: f64,
    pub r_squared: f64,
    pub n_points: usize,
}

/// Weighted least squares of `log m` on `log t`.
///
/// Requires ≥ 5 points spanning ≥ 1 decade in `t`, positive `t` and `m`.
/// Weights are relative (scaled by the reduced chi-square), so slope errors
/// stay honest when the caller's weights are only proportional to inverse
/// variances; `None` means equal weights.
pub fn fit_exponent(
    t_values: &[f64],
    moments: &[f64],
    weights: Option<&[f64]>,
) -> Result<ExponentFit, StatsError> {
    fit_exponent_spanning(t_values, moments, weights, 10.0)
}

/// As [`fit_exponent`] but with an explicit minimum span ratio; used by
/// crossover diagnostics whose windows are fixed by the theory to less than a
/// decade.
pub fn fit_exponent_spanning(
    t_values: &[f64],
    moments: &[f64],
    weights: Option<&[f64]>,
    min_span_ratio: f64,
) -> Result<ExponentFit, StatsError> {
    let n = t_values.len();
    if n != moments.len() {
        return Err(StatsError::MismatchedLengths(format!(
            "{} t-values vs {} moments",
            n,
            moments.len()
        )));
    }
    if let Some(w) = weights {
        if w.len() != n {
            return Err(StatsError::MismatchedLengths(format!(
                "{} t-values vs {} weights",
                n,
                w.len()
            )));
        }
        if w.iter().any(|&x| !(x > 0.0)) {
            return Err(StatsError::NonPositive("weights must be positive".into()));
        }
    }
    if n < 5 {
        return Err(StatsError::InsufficientData(format!(
            "exponent fit needs at least 5 points, got {n}"
        )));
    }
    let (mut tmin, mut tmax) = (f64::INFINITY, 0.0f64);
    for &t in t_values {
        if !(t > 0.0) {
            return Err(StatsError::NonPositive(format!("t value {t}")));
        }
        tmin = tmin.min(t);
        tmax = tmax.max(t);
    }
    let ratio = tmax / tmin;
    if ratio < min_span_ratio {
        return Err(StatsError::SpanTooNarrow { ratio });
    }
    for &m in moments {
        if !(m > 0.0) {
            return Err(StatsError::NonPositive(format!("moment value {m}")));
        }
    }

    let w_of = |i: usize| weights.map_or(1.0, |w| w[i]);
    let sw: f64 = (0..n).map(w_of).sum();
    let xbar: f64 = (0..n).map(|i| w_of(i) * t_values[i].ln()).sum::<f64>() / sw;
    let ybar: f64 = (0..n).map(|i| w_of(i) * moments[i].ln()).sum::<f64>() / sw;
    let mut sxx = 0.0;
    let mut sxy = 0.0;
    let mut syy = 0.0;
    for i in 0..n {
        let dx = t_values[i].ln() - xbar;
        let dy = moments[i].ln() - ybar;
        let w = w_of(i);
        sxx += w * dx * dx;
        sxy += w * dx * dy;
        syy += w * dy * dy;
    }
    let slope = sxy / sxx;
    let intercept = ybar - slope * xbar;
    let mut ssr = 0.0;
    for i in 0..n {
        let r = moments[i].ln() - (intercept + slope * t_values[i].ln());
        ssr += w_of(i) * r * r;
    }
    let dof = (n - 2) as f64;
    let sigma2 = ssr / dof;
    let slope_se = (sigma2 / sxx).sqrt();
    let r_squared = if syy > 0.0 { 1.0 - ssr / syy } else { 1.0 };
    let tq = student_t_975(dof);
    Ok(ExponentFit {
        slope,
        intercept,
        slope_se,
        ci_half_width: tq * slope_se,
        r_squared,
        n_points: n,
    })
}

fn student_t_975(dof: f64) -> f64 {
    use statrs::distribution::{ContinuousCDF, StudentsT};
    StudentsT::new(0.0, 1.0, dof)
        .map(|d| d.inverse_cdf(0.975))
        .unwrap_or(f64::NAN)
}

// ---------------------------------------------------------------------------
// Kolmogorov–Smirnov tests
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KsResult {
    pub statistic: f64,
    pub p_value: f64,
    /// `n` for one sample, `nm/(n+m)` for two samples.
    pub n_eff: f64,
}

/// Asymptotic Kolmogorov tail `Q(λ) = 2 Σ_{j≥1} (−1)^{j−1} e^{−2 j² λ²}`.
fn kolmogorov_q(lambda: f64) -> f64 {
    if lambda < 0.05 {
        return 1.0;
    }
    let mut sum = 0.0;
    let mut sign = 1.0;
    for j in 1..=101 {
        let jf = j as f64;
        let term = (-2.0 * jf * jf * lambda * lambda).exp();
        sum += sign * term;
        sign = -sign;
        if term < 1e-18 {
            break;
        }
    }
    (2.0 * sum).clamp(0.0, 1.0)
}

fn ks_p_value(statistic: f64, n_eff: f64) -> f64 {
    // Finite-sample argument correction (Stephens); accurate to a few
    // percent in p for n ≳ 50, which is all the acceptance gates need.
    let root = n_eff.sqrt();
    kolmogorov_q((root + 0.12 + 0.11 / root) * statistic)
}

/// One-sample KS test of `samples` against a reference CDF.
/// Requires n ≥ 50; the p-value uses the asymptotic Kolmogorov distribution
/// with a finite-sample argument correction.
pub fn ks_one_sample<F: Fn(f64) -> f64>(
    samples: &[f64],
    cdf: F,
) -> Result<KsResult, StatsError> {
    let n = samples.len();
    if n < 50 {
        return Err(StatsError::InsufficientData(format!(
            "one-sample KS needs ≥ 50 samples, got {n}"
        )));
    }
    let mut xs = samples.to_vec();
    xs.sort_unstable_by(|a, b| a.partial_cmp(b).unwrap());
    let nf = n as f64;
    let mut d: f64 = 0.0;
    for (i, &x) in xs.iter().enumerate() {
        let f = cdf(x);
        d = d.max(f - i as f64 / nf).max((i + 1) as f64 / nf - f);
    }
    Ok(KsResult {
        statistic: d,
        p_value: ks_p_value(d, nf),
        n_eff: nf,
    })
}

/// Two-sample KS test. Requires both sizes ≥ 50. Ties are handled by the
/// strict-inequality convention: both empirical CDFs step past a shared value
/// together before the gap is measured.
pub fn ks_two_sample(a: &[f64], b: &[f64]) -> Result<KsResult, StatsError> {
    if a.len() < 50 || b.len() < 50 {
        return Err(StatsError::InsufficientData(format!(
            "two-sample KS needs ≥ 50 samples each, got {} and {}",
            a.len(),
            b.len()
        )));
    }
    let mut xs = a.to_vec();
    let mut ys = b.to_vec();
    xs.sort_unstable_by(|p, q| p.partial_cmp(q).unwrap());
    ys.sort_unstable_by(|p, q| p.partial_cmp(q).unwrap());
    let (n, m) = (xs.len(), ys.len());
    let (nf, mf) = (n as f64, m as f64);
    let (mut i, mut j) = (0usize, 0usize);
    let mut d: f64 = 0.0;
    while i < n && j < m {
        let v = xs[i].min(ys[j]);
        while i < n && xs[i] <= v {
            i += 1;
        }
        while j < m && ys[j] <= v {
            j += 1;
        }
        d = d.max((i as f64 / nf - j as f64 / mf).abs());
    }
    let n_eff = nf * mf / (nf + mf);
    Ok(KsResult {
        statistic: d,
        p_value: ks_p_value(d, n_eff),
        n_eff,
    })
}

// ---------------------------------------------------------------------------
// Tail fit
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TailFit {
    /// Exponential decay rate: survival ≈ exp(intercept − rate·z).
    pub rate: f64,
    pub intercept: f64,
    pub r_squared: f64,
    /// Samples beyond the lower edge of the fit range.
    pub n_tail: usize,
}

/// Least squares of log empirical survival on `z` over `z_range`.
/// Requires ≥ 100 samples beyond the lower range edge. Survival uses the
/// strict convention `S(z) = #{x > z}/n`, evaluated at the distinct sample
/// values inside the range.
pub fn tail_fit(samples: &[f64], z_range: (f64, f64)) -> Result<TailFit, StatsError> {
    let (z_lo, z_hi) = z_range;
    if !(z_hi > z_lo) {
        return Err(StatsError::Config(format!(
            "tail range must be increasing, got ({z_lo}, {z_hi})"
        )));
    }
    let n = samples.len();
    let mut xs = samples.to_vec();
    xs.sort_unstable_by(|a, b| a.partial_cmp(b).unwrap());
    let n_tail = xs.iter().filter(|&&x| x > z_lo).count();
    if n_tail < 100 {
        return Err(StatsError::InsufficientData(format!(
            "tail fit needs ≥ 100 samples beyond z = {z_lo}, got {n_tail}"
        )));
    }
    // Distinct values in range with positive strict survival.
    let mut pts: Vec<(f64, f64)> = Vec::new();
    let mut i = 0;
    while i < n {
        let v = xs[i];
        let mut j = i;
        while j < n && xs[j] == v {
            j += 1;
        }
        if v >= z_lo && v <= z_hi && j < n {
            let surv = (n - j) as f64 / n as f64;
            pts.push((v, surv.ln()));
        }
        i = j;
    }
    if pts.len() < 3 {
        return Err(StatsError::InsufficientData(format!(
            "tail fit needs ≥ 3 distinct values in range, got {}",
            pts.len()
        )));
    }
    let np = pts.len() as f64;
    let xbar = pts.iter().map(|p| p.0).sum::<f64>() / np;
    let ybar = pts.iter().map(|p| p.1).sum::<f64>() / np;
    let mut sxx = 0.0;
    let mut sxy = 0.0;
    let mut syy = 0.0;
    for &(x, y) in &pts {
        sxx += (x - xbar) * (x - xbar);
        sxy += (x - xbar) * (y - ybar);
        syy += (y - ybar) * (y - ybar);
    }
    let slope = sxy / sxx;
    let intercept = ybar - slope * xbar;
    let ssr: f64 = pts
        .iter()
        .map(|&(x, y)| {
            let r = y - (intercept + slope * x);
            r * r
        })
        .sum();
    let r_squared = if syy > 0.0 { 1.0 - ssr / syy } else { 1.0 };
    Ok(TailFit {
        rate: -slope,
        intercept,
        r_squared,
        n_tail,
    })
}

// ---------------------------------------------------------------------------
// Density histogram
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DensityDiagnostic {
    pub bin_edges: Vec<f64>,
    /// Normalized heights (integrates to 1).
    pub heights: Vec<f64>,
    pub max_height: f64,
    /// max height with 2·bins divided by max height with `bins`; ≈ 1 for
    /// bounded densities, ≈ 2 for a point mass.
    pub doubling_ratio: f64,
}

/// Normalized histogram over `[min, max]` with a bin-doubling stability
/// metric. Requires ≥ 1000 samples.
pub fn density_histogram(samples: &[f64], bins: usize) -> Result<DensityDiagnostic, StatsError> {
    if samples.len() < 1000 {
        return Err(StatsError::InsufficientData(format!(
            "density diagnostic needs ≥ 1000 samples, got {}",
            samples.len()
        )));
    }
    if bins == 0 {
        return Err(StatsError::Config("bins must be positive".into()));
    }
    let lo = samples.iter().cloned().fold(f64::INFINITY, f64::min);
    let hi = samples.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    // Degenerate support (point mass): give it unit width so the doubling
    // metric still reports ≈ 2.
    let (lo, hi) = if hi > lo { (lo, hi) } else { (lo - 0.5, lo + 0.5) };
    let heights_for = |b: usize| -> Vec<f64> {
        let mut counts = vec![0u64; b];
        let width = (hi - lo) / b as f64;
        for &x in samples {
            let mut k = ((x - lo) / width) as usize;
            if k >= b {
                k = b - 1;
            }
            counts[k] += 1;
        }
        counts
            .into_iter()
            .map(|c| c as f64 / (samples.len() as f64 * width))
            .collect()
    };
    let heights = heights_for(bins);
    let max_height = heights.iter().cloned().fold(0.0, f64::max);
    let max2 = heights_for(2 * bins).iter().cloned().fold(0.0, f64::max);
    let width = (hi - lo) / bins as f64;
    let bin_edges = (0..=bins).map(|i| lo + i as f64 * width).collect();
    Ok(DensityDiagnostic {
        bin_edges,
        heights,
        max_height,
        doubling_ratio: max2 / max_height,
    })
}
