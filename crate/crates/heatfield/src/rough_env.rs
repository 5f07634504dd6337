//! Stationary rough environment, its heat-kernel smoothing, the slow tracer
//! `S` driven by the unit-scale smoothed field, and the crossover of `E[S²]`
//! from `t^{3/2}` growth to linear growth.
//!
//! The rough velocity field is the stationary, zero-spatial-mean solution of
//! the stochastic heat equation `∂_t u = ∂_xx u + ∂_x ξ` (space–time white
//! noise `ξ`) on a torus of circumference `L = N·Δx`, represented spectrally.
//! Each Fourier mode is an independent Ornstein–Uhlenbeck process with decay
//! rate `k²` and stationary coefficient variance `2/L`, which reproduces the
//! field covariance
//!
//! ```text
//! E[u(s,x) u(s',y)] = P_{|s-s'|}(x-y) - 1/L   (+ wrap-around images),
//! ```
//!
//! with `P` the Gaussian heat kernel; the `-1/L` reflects the excluded `k = 0`
//! mode (the torus field has zero spatial mean). Updates between snapshots use
//! the exact OU transition, so the sampled law is stationary at any snapshot
//! spacing and carries no time-discretization bias.
//!
//! Smoothing at length `ℓ` is spectral multiplication by `exp(-k²ℓ²)`, i.e.
//! convolution with `P_{ℓ²}`; the smoothed field at `ℓ = 1` has temporal
//! covariance `P_{|s-s'| + 2}(0) - 1/L` at a fixed point. The slow tracer
//! solves `∂_t S = λ·u₁(t, S)` with `S(0) = 0`. While the tracer displacement
//! stays inside one correlation length, `E[S²(t)]` tracks
//! `λ²·q(t)` where `q` is the exact double time-integral of the smoothed
//! covariance ([`frozen_integral_second_moment`]); as the smoothing scale
//! becomes negligible (`t ≫ 2ℓ²`) this approaches
//! `λ²·A·t^{3/2}` with `A = 4/(3√π)` ([`SUB_DIFFUSIVE_AMPLITUDE`]). Beyond
//! `t ≈ λ⁻⁴` the tracer hops between potential wells and the growth becomes
//! linear in `t`. [`crossover_report`] measures both regimes.

use std::collections::VecDeque;
use std::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::environment::{Field, FieldError};
use crate::stats::{
    fit_exponent_spanning, mean_and_se, run_parallel, ExponentFit, StatsError, FAILURE_BUDGET,
};
use crate::tracer::{integrate_tracer, IntegratorConfig, TracerError};

// ---------------------------------------------------------------------------
// Constants
// ---------------------------------------------------------------------------

/// Largest admissible lattice spacing; finer than the unit smoothing scale by
/// a factor of four so that `ℓ ≥ 4·Δx` always holds at `ℓ = 1`.
pub const DX_MAX: f64 = 0.25;

/// The torus must be at least this many times `√t_max` long, keeping the
/// tracer far from its own periodic images for the whole run.
pub const LENGTH_FACTOR_MIN: f64 = 20.0;

/// Largest snapshot spacing the slow-tracer integrator accepts. The smoothed
/// field decorrelates on a unit time scale; 0.1-spaced snapshots keep the
/// law-level bias of the interpolated drift near 3e-5 in time-integrated
/// statistics (see [`INTERP_BIAS_AT_REFERENCE`](self)).
pub const SNAPSHOT_SPACING_MAX: f64 = 0.1;

/// Smoothing lengths must be at least this multiple of the lattice spacing.
pub const MIN_ELL_FACTOR: f64 = 4.0;

/// `4/(3√π)`: the prefactor of the early-time law `E[S²] ≈ λ²·A·t^{3/2}`
/// obtained by integrating the unsmoothed covariance `(4π|s-s'|)^{-1/2}`
/// twice over `[0,t]`.
pub const SUB_DIFFUSIVE_AMPLITUDE: f64 = 0.752_252_778_063_675_0;

/// Infinite-volume variance of the field smoothed at `ℓ = 1`:
/// `P_2(0) = 1/√(8π)`. On a torus of circumference `L` the variance is this
/// minus `1/L` (no zero mode).
pub const UNIT_SMOOTHED_VARIANCE: f64 = 0.199_471_140_200_716_34;

/// Law-level bias left in time-integrated field statistics by the snapshot
/// representation at the reference spacing 0.1. Spatial smoothing does not
/// smooth the field in time: the temporal covariance of `u₁` has a kink at
/// zero lag, so `u₁(·, x)` is Brownian-like below the snapshot scale with
/// volatility `σ_v = (2·Σ (2/L) k² e^{-2k²})^{1/2} ≈ 0.32` per unit √time.
/// Polynomial interpolation replaces that sub-snapshot roughness by a smooth
/// fill; the missing fine structure perturbs the variance of time integrals
/// by ≈ `(c·σ_v·δ)²·t` relative to their `O(t^{3/2})` scale, ≈ 3e-5 at
/// `δ = 0.1`, scaling as the square of the spacing.
const INTERP_BIAS_AT_REFERENCE: f64 = 3e-5;

/// An integration tolerance tighter than `bias/INTERP_GUARD` is rejected:
/// the snapshots cannot support it.
const INTERP_GUARD: f64 = 50.0;

/// Streaming integration advances in sub-chunks of this many snapshots.
const CHUNK_SNAPSHOTS: usize = 16;

fn min_rel_tol_for_spacing(spacing: f64) -> f64 {
    let r = spacing / 0.1;
    INTERP_BIAS_AT_REFERENCE * (r * r) / INTERP_GUARD
}

// ---------------------------------------------------------------------------
// Errors
// ---------------------------------------------------------------------------

#[derive(Debug, Error)]
pub enum RoughError {
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("field evaluation failed: {0}")]
    Field(#[from] FieldError),
    #[error(transparent)]
    Stats(#[from] StatsError),
    #[error("slow-tracer integration failed: {0}")]
    Tracer(#[from] TracerError),
}

// ---------------------------------------------------------------------------
// Lattice configuration and simulation
// ---------------------------------------------------------------------------

/// Parameters of one rough-environment realization.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RoughConfig {
    /// Number of lattice sites (even); the torus circumference is
    /// `n_sites · dx`.
    pub n_sites: usize,
    /// Lattice spacing, at most [`DX_MAX`].
    pub dx: f64,
    /// Time horizon; snapshots cover `[0, t_max]`.
    pub t_max: f64,
    pub seed: u64,
    /// Interval between stored field snapshots (at most 1; the slow-tracer
    /// integrator additionally requires ≤ [`SNAPSHOT_SPACING_MAX`]).
    pub snapshot_spacing: f64,
    /// Optional spectral truncation: only modes with `|k|` at most this value
    /// are simulated. Exact (to round-off) for any consumer that reads the
    /// field smoothed at a length `ℓ` with `exp(-k_cut²ℓ²)` below round-off;
    /// raw-field statistics (site values, mode series) need the full band
    /// (`None`). Thanks to per-mode noise streams, truncation leaves the
    /// retained modes' sample paths bitwise unchanged.
    pub mode_k_cut: Option<f64>,
}

impl RoughConfig {
    pub fn new(n_sites: usize, dx: f64, t_max: f64, seed: u64) -> RoughConfig {
        RoughConfig {
            n_sites,
            dx,
            t_max,
            seed,
            snapshot_spacing: 0.1,
            mode_k_cut: None,
        }
    }

    pub fn length(&self) -> f64 {
        self.n_sites as f64 * self.dx
    }

    /// Number of retained Fourier modes (`1..=m`); the full band keeps
    /// `n_sites/2 - 1`.
    pub fn mode_count(&self) -> usize {
        let full = self.n_sites / 2 - 1;
        match self.mode_k_cut {
            None => full,
            Some(kc) => {
                let k1 = 2.0 * PI / self.length();
                full.min((kc / k1).floor() as usize)
            }
        }
    }

    fn n_snapshots(&self) -> usize {
        (self.t_max / self.snapshot_spacing - 1e-9).ceil().max(1.0) as usize + 1
    }

    fn validate(&self) -> Result<(), RoughError> {
        if self.n_sites < 8 || self.n_sites % 2 != 0 {
            return Err(RoughError::Config(format!(
                "site count must be even and at least 8, got {}",
                self.n_sites
            )));
        }
        if !(self.dx > 0.0) || self.dx > DX_MAX + 1e-12 {
            return Err(RoughError::Config(format!(
                "lattice spacing must lie in (0, {DX_MAX}], got {}",
                self.dx
            )));
        }
        if !(self.t_max > 0.0 && self.t_max.is_finite()) {
            return Err(RoughError::Config(format!(
                "time horizon must be positive and finite, got {}",
                self.t_max
            )));
        }
        let needed = LENGTH_FACTOR_MIN * self.t_max.sqrt();
        if self.length() + 1e-9 < needed {
            return Err(RoughError::Config(format!(
                "torus of length {} is too short for t_max = {}: need at least {LENGTH_FACTOR_MIN}·√t_max = {:.3}",
                self.length(),
                self.t_max,
                needed
            )));
        }
        if !(self.snapshot_spacing > 0.0) || self.snapshot_spacing > 1.0 + 1e-12 {
            return Err(RoughError::Config(format!(
                "snapshot spacing must lie in (0, 1], got {}",
                self.snapshot_spacing
            )));
        }
        if let Some(kc) = self.mode_k_cut {
            if !(kc > 0.0) {
                return Err(RoughError::Config(format!(
                    "mode cutoff must be positive, got {kc}"
                )));
            }
        }
        if self.mode_count() == 0 {
            return Err(RoughError::Config(
                "mode cutoff removes every Fourier mode".into(),
            ));
        }
        let cells = self.n_snapshots() as u128 * 2 * self.mode_count() as u128;
        if cells > 250_000_000 {
            return Err(RoughError::Config(format!(
                "stored trajectory would hold {cells} coefficients; stream it instead"
            )));
        }
        Ok(())
    }
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Independent, reproducible noise stream for one Fourier mode. Keying the
/// stream by `(seed, mode)` keeps low-mode sample paths bitwise identical
/// under spectral truncation.
fn mode_rng(seed: u64, m: usize) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(splitmix64(
        seed ^ (m as u64).wrapping_mul(0xA076_1D64_78BD_642F),
    ))
}

/// Exact per-mode OU evolution: state, decay/refresh tables and noise
/// streams. Shared by the stored and the streaming simulation so both produce
/// bitwise-identical coefficient sequences for the same seed and schedule.
struct ModeEngine {
    m_max: usize,
    decay: Vec<f64>,
    refresh: Vec<f64>,
    rngs: Vec<ChaCha8Rng>,
    /// Cosine then sine coefficients, `a[0..m_max]`, `b[0..m_max]`.
    a: Vec<f64>,
    b: Vec<f64>,
}

impl ModeEngine {
    /// Draws the stationary initial state (coefficient variance `2/L`).
    fn new(length: f64, m_max: usize, dt: f64, seed: u64) -> ModeEngine {
        let k1 = 2.0 * PI / length;
        let sigma = (2.0 / length).sqrt();
        let mut decay = Vec::with_capacity(m_max);
        let mut refresh = Vec::with_capacity(m_max);
        let mut rngs = Vec::with_capacity(m_max);
        let mut a = Vec::with_capacity(m_max);
        let mut b = Vec::with_capacity(m_max);
        for m in 1..=m_max {
            let k = k1 * m as f64;
            let d = (-k * k * dt).exp();
            decay.push(d);
            refresh.push(sigma * (1.0 - d * d).sqrt());
            let mut rng = mode_rng(seed, m);
            let g0: f64 = rng.sample(StandardNormal);
            let g1: f64 = rng.sample(StandardNormal);
            a.push(sigma * g0);
            b.push(sigma * g1);
            rngs.push(rng);
        }
        ModeEngine {
            m_max,
            decay,
            refresh,
            rngs,
            a,
            b,
        }
    }

    /// Advance one snapshot interval with the exact OU transition.
    fn step(&mut self) {
        for i in 0..self.m_max {
            let ga: f64 = self.rngs[i].sample(StandardNormal);
            let gb: f64 = self.rngs[i].sample(StandardNormal);
            self.a[i] = self.decay[i] * self.a[i] + self.refresh[i] * ga;
            self.b[i] = self.decay[i] * self.b[i] + self.refresh[i] * gb;
        }
    }

    fn snapshot(&self) -> Vec<f64> {
        let mut v = Vec::with_capacity(2 * self.m_max);
        v.extend_from_slice(&self.a);
        v.extend_from_slice(&self.b);
        v
    }
}

/// A stored rough-environment realization: uniform snapshot times and the
/// spectral coefficients at each snapshot.
#[derive(Debug, Clone)]
pub struct RoughTrajectory {
    cfg: RoughConfig,
    length: f64,
    k1: f64,
    m_max: usize,
    times: Vec<f64>,
    coeffs: Vec<Vec<f64>>,
}

/// Simulate with explicit control over snapshot spacing and truncation.
pub fn simulate_rough_with(cfg: &RoughConfig) -> Result<RoughTrajectory, RoughError> {
    cfg.validate()?;
    let length = cfg.length();
    let m_max = cfg.mode_count();
    let dt = cfg.snapshot_spacing;
    let n_snap = cfg.n_snapshots();
    let mut engine = ModeEngine::new(length, m_max, dt, cfg.seed);
    let mut times = Vec::with_capacity(n_snap);
    let mut coeffs = Vec::with_capacity(n_snap);
    times.push(0.0);
    coeffs.push(engine.snapshot());
    for j in 1..n_snap {
        engine.step();
        times.push(j as f64 * dt);
        coeffs.push(engine.snapshot());
    }
    Ok(RoughTrajectory {
        cfg: *cfg,
        length,
        k1: 2.0 * PI / length,
        m_max,
        times,
        coeffs,
    })
}

/// Simulate `n_sites` sites at spacing `dx` up to `t_max` with the default
/// snapshot spacing 0.1 and the full spectral band.
pub fn simulate_rough(
    n_sites: usize,
    dx: f64,
    t_max: f64,
    seed: u64,
) -> Result<RoughTrajectory, RoughError> {
    simulate_rough_with(&RoughConfig::new(n_sites, dx, t_max, seed))
}

impl RoughTrajectory {
    pub fn config(&self) -> &RoughConfig {
        &self.cfg
    }

    pub fn length(&self) -> f64 {
        self.length
    }

    pub fn snapshot_spacing(&self) -> f64 {
        self.cfg.snapshot_spacing
    }

    pub fn times(&self) -> &[f64] {
        &self.times
    }

    pub fn t_max(&self) -> f64 {
        *self.times.last().unwrap()
    }

    pub fn n_snapshots(&self) -> usize {
        self.times.len()
    }

    /// Number of retained Fourier modes.
    pub fn mode_count(&self) -> usize {
        self.m_max
    }

    /// Cosine and sine coefficient slices at one snapshot.
    pub fn coefficients(&self, snapshot: usize) -> Result<(&[f64], &[f64]), RoughError> {
        let c = self
            .coeffs
            .get(snapshot)
            .ok_or_else(|| RoughError::Config(format!("snapshot {snapshot} out of range")))?;
        Ok(c.split_at(self.m_max))
    }

    /// Time series of the `(cosine, sine)` coefficient pair of mode `m`
    /// (1-based).
    pub fn mode_series(&self, m: usize) -> Result<Vec<(f64, f64)>, RoughError> {
        if m == 0 || m > self.m_max {
            return Err(RoughError::Config(format!(
                "mode index must lie in 1..={}, got {m}",
                self.m_max
            )));
        }
        Ok(self
            .coeffs
            .iter()
            .map(|c| (c[m - 1], c[self.m_max + m - 1]))
            .collect())
    }

    /// Raw field values at the lattice sites for one snapshot. Meaningful only
    /// without spectral truncation.
    pub fn site_values(&self, snapshot: usize) -> Result<Vec<f64>, RoughError> {
        let (a, b) = self.coefficients(snapshot)?;
        Ok((0..self.cfg.n_sites)
            .map(|j| spectral_sum(a, b, None, self.k1, j as f64 * self.cfg.dx, 0))
            .collect())
    }

    /// Keep every `stride`-th snapshot (for interpolation-refinement studies).
    /// The snapshot count minus one must be divisible by `stride`.
    pub fn thin(&self, stride: usize) -> Result<RoughTrajectory, RoughError> {
        if stride == 0 {
            return Err(RoughError::Config("stride must be positive".into()));
        }
        if (self.times.len() - 1) % stride != 0 {
            return Err(RoughError::Config(format!(
                "{} snapshot intervals are not divisible by stride {stride}",
                self.times.len() - 1
            )));
        }
        let times: Vec<f64> = self.times.iter().step_by(stride).copied().collect();
        if times.len() < 4 {
            return Err(RoughError::Config(
                "thinning would leave fewer than 4 snapshots".into(),
            ));
        }
        let coeffs = self.coeffs.iter().step_by(stride).cloned().collect();
        let mut cfg = self.cfg;
        cfg.snapshot_spacing *= stride as f64;
        Ok(RoughTrajectory {
            cfg,
            length: self.length,
            k1: self.k1,
            m_max: self.m_max,
            times,
            coeffs,
        })
    }
}

// ---------------------------------------------------------------------------
// Spectral evaluation
// ---------------------------------------------------------------------------

/// `Σ_m damp_m · ∂_x^d [a_m cos(k_m x) + b_m sin(k_m x)]` via a rotation
/// recurrence (one `sin_cos` for the fundamental; the recurrence drift over
/// the full band stays below ~1e-12 relative).
fn spectral_sum(a: &[f64], b: &[f64], damp: Option<&[f64]>, k1: f64, x: f64, d: u8) -> f64 {
    let (s1, c1) = (k1 * x).sin_cos();
    let mut c = 1.0f64;
    let mut s = 0.0f64;
    let mut acc = 0.0f64;
    for m in 0..a.len() {
        let cn = c * c1 - s * s1;
        let sn = s * c1 + c * s1;
        c = cn;
        s = sn;
        let w = damp.map_or(1.0, |dm| dm[m]);
        let k = k1 * (m + 1) as f64;
        let term = match d {
            0 => a[m] * c + b[m] * s,
            1 => k * (b[m] * c - a[m] * s),
            _ => -k * k * (a[m] * c + b[m] * s),
        };
        acc += w * term;
    }
    acc
}

/// As [`spectral_sum`] but over a 5-snapshot time stencil combined with
/// weights `w`, in a single pass over the modes.
fn spectral_sum5(
    ab: &[(&[f64], &[f64]); 5],
    w: &[f64; 5],
    damp: &[f64],
    k1: f64,
    x: f64,
    d: u8,
) -> f64 {
    let (s1, c1) = (k1 * x).sin_cos();
    let mut c = 1.0f64;
    let mut s = 0.0f64;
    let mut acc = 0.0f64;
    for m in 0..damp.len() {
        let cn = c * c1 - s * s1;
        let sn = s * c1 + c * s1;
        c = cn;
        s = sn;
        let at = w[0] * ab[0].0[m]
            + w[1] * ab[1].0[m]
            + w[2] * ab[2].0[m]
            + w[3] * ab[3].0[m]
            + w[4] * ab[4].0[m];
        let bt = w[0] * ab[0].1[m]
            + w[1] * ab[1].1[m]
            + w[2] * ab[2].1[m]
            + w[3] * ab[3].1[m]
            + w[4] * ab[4].1[m];
        let k = k1 * (m + 1) as f64;
        let term = match d {
            0 => at * c + bt * s,
            1 => k * (bt * c - at * s),
            _ => -k * k * (at * c + bt * s),
        };
        acc += damp[m] * term;
    }
    acc
}

/// Uniform-grid 4-point Lagrange weights at normalized offset `s` from the
/// stencil start (nodes 0, 1, 2, 3).
fn lagrange4(s: f64) -> [f64; 4] {
    [
        -(s - 1.0) * (s - 2.0) * (s - 3.0) / 6.0,
        s * (s - 2.0) * (s - 3.0) / 2.0,
        -s * (s - 1.0) * (s - 3.0) / 2.0,
        s * (s - 1.0) * (s - 2.0) / 6.0,
    ]
}

/// Interpolation stencil in time: start index, number of nodes used (4 or 5;
/// weight slots beyond it are zero), and weights.
struct TimeStencil {
    j0: usize,
    n: usize,
    w: [f64; 5],
}

impl TimeStencil {
    /// Highest snapshot index the stencil touches.
    fn j_hi(&self) -> usize {
        self.j0 + self.n - 1
    }
}

/// Stencil for time `t` on a uniform grid of `n_times ≥ 4` snapshots spaced
/// `dt`. Interior segments blend the two neighboring centered cubic stencils
/// with a quintic smoothstep, which interpolates every snapshot exactly and
/// is globally twice continuously differentiable — kinks in the drift's time
/// derivatives would otherwise pin the adaptive integrator's step size to the
/// snapshot spacing. The outermost segments fall back to one-sided cubic
/// stencils.
fn time_stencil(n_times: usize, dt: f64, t: f64) -> TimeStencil {
    let pos = (t / dt).clamp(0.0, (n_times - 1) as f64);
    let jc = (pos.floor() as usize).min(n_times - 2);
    if n_times >= 6 && jc >= 2 && jc <= n_times - 3 {
        let s = pos - jc as f64;
        let phi = s * s * s * (10.0 - s * (15.0 - 6.0 * s));
        let wa = lagrange4(s + 2.0);
        let wb = lagrange4(s + 1.0);
        let c = 1.0 - phi;
        TimeStencil {
            j0: jc - 2,
            n: 5,
            w: [
                c * wa[0],
                c * wa[1] + phi * wb[0],
                c * wa[2] + phi * wb[1],
                c * wa[3] + phi * wb[2],
                phi * wb[3],
            ],
        }
    } else {
        let j0 = jc.saturating_sub(1).min(n_times - 4);
        let w4 = lagrange4(pos - j0 as f64);
        TimeStencil {
            j0,
            n: 4,
            w: [w4[0], w4[1], w4[2], w4[3], 0.0],
        }
    }
}

// ---------------------------------------------------------------------------
// Smoothed field
// ---------------------------------------------------------------------------

/// A stored trajectory smoothed at length `ℓ`: spectral damping by
/// `exp(-k²ℓ²)` (convolution with the heat kernel at time `ℓ²`), evaluable at
/// arbitrary `(t, x)` with spatial derivatives up to order two. Time between
/// snapshots is filled by 4-point polynomial interpolation of the
/// coefficients.
#[derive(Debug, Clone)]
pub struct RegularizedField<'a> {
    traj: &'a RoughTrajectory,
    ell: f64,
    damp: Vec<f64>,
    sigma: [f64; 3],
}

/// Stationary standard deviations of `∂_x^d` of the damped field,
/// `d = 0, 1, 2`, from the mode sum `Σ (2/L) k^{2d} damp².`
fn damped_sigmas(length: f64, k1: f64, damp: &[f64]) -> [f64; 3] {
    let mut var = [0.0f64; 3];
    for (m, dm) in damp.iter().enumerate() {
        let k = k1 * (m + 1) as f64;
        let base = 2.0 / length * dm * dm;
        var[0] += base;
        var[1] += base * k * k;
        var[2] += base * k * k * k * k;
    }
    [var[0].sqrt(), var[1].sqrt(), var[2].sqrt()]
}

/// Smooth a stored trajectory at length `ell` (requires `ell ≥ 4·Δx` so the
/// lattice resolves the smoothing scale, and at least 4 snapshots).
pub fn regularize(traj: &RoughTrajectory, ell: f64) -> Result<RegularizedField<'_>, RoughError> {
    if !(ell.is_finite() && ell > 0.0) {
        return Err(RoughError::Config(format!(
            "smoothing length must be positive and finite, got {ell}"
        )));
    }
    if ell + 1e-12 < MIN_ELL_FACTOR * traj.cfg.dx {
        return Err(RoughError::Config(format!(
            "smoothing length {ell} under-resolved: need at least {MIN_ELL_FACTOR}·Δx = {}",
            MIN_ELL_FACTOR * traj.cfg.dx
        )));
    }
    if traj.times.len() < 4 {
        return Err(RoughError::Config(
            "smoothed evaluation needs at least 4 snapshots".into(),
        ));
    }
    let damp: Vec<f64> = (1..=traj.m_max)
        .map(|m| {
            let k = traj.k1 * m as f64;
            (-k * k * ell * ell).exp()
        })
        .collect();
    let sigma = damped_sigmas(traj.length, traj.k1, &damp);
    Ok(RegularizedField {
        traj,
        ell,
        damp,
        sigma,
    })
}

impl<'a> RegularizedField<'a> {
    pub fn ell(&self) -> f64 {
        self.ell
    }

    pub fn trajectory(&self) -> &'a RoughTrajectory {
        self.traj
    }

    /// Smooth further by `extra_ell`; the damping factors multiply, so the
    /// result agrees with a single smoothing at `√(ℓ² + extra²)` to round-off.
    pub fn regularize(&self, extra_ell: f64) -> Result<RegularizedField<'a>, RoughError> {
        if !(extra_ell.is_finite() && extra_ell > 0.0) {
            return Err(RoughError::Config(format!(
                "smoothing length must be positive and finite, got {extra_ell}"
            )));
        }
        let damp: Vec<f64> = self
            .damp
            .iter()
            .enumerate()
            .map(|(i, dm)| {
                let k = self.traj.k1 * (i + 1) as f64;
                dm * (-k * k * extra_ell * extra_ell).exp()
            })
            .collect();
        let sigma = damped_sigmas(self.traj.length, self.traj.k1, &damp);
        Ok(RegularizedField {
            traj: self.traj,
            ell: self.ell.hypot(extra_ell),
            damp,
            sigma,
        })
    }

    fn check_time(&self, t: f64) -> Result<f64, FieldError> {
        let t_last = self.traj.t_max();
        if !t.is_finite() || t < -1e-9 || t > t_last + 1e-9 {
            return Err(FieldError::Config(format!(
                "time {t} outside the stored range [0, {t_last}]"
            )));
        }
        Ok(t.clamp(0.0, t_last))
    }
}

impl Field for RegularizedField<'_> {
    fn eval_u(&self, t: f64, x: f64, d_order: u8) -> Result<f64, FieldError> {
        if d_order > 2 {
            return Err(FieldError::UnsupportedDerivative { d_order });
        }
        let t = self.check_time(t)?;
        let x = x.rem_euclid(self.traj.length);
        let st = time_stencil(self.traj.times.len(), self.traj.cfg.snapshot_spacing, t);
        let gather = |i: usize| {
            self.traj.coeffs[(st.j0 + i).min(st.j_hi())].split_at(self.traj.m_max)
        };
        let ab = [gather(0), gather(1), gather(2), gather(3), gather(4)];
        Ok(spectral_sum5(
            &ab,
            &st.w,
            &self.damp,
            self.traj.k1,
            x,
            d_order,
        ))
    }

    fn t_floor(&self) -> f64 {
        0.0
    }

    fn scale(&self, _t: f64, d_order: u8) -> f64 {
        self.sigma[d_order.min(2) as usize]
    }

    fn domain_length(&self) -> Option<f64> {
        Some(self.traj.length)
    }
}

// ---------------------------------------------------------------------------
// Slow tracer
// ---------------------------------------------------------------------------

/// Path of the slow tracer `∂_t S = λ·u₁(t, S)`, `S(0) = 0`, at the accepted
/// integration points.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SLambdaPath {
    lambda: f64,
    times: Vec<f64>,
    positions: Vec<f64>,
}

impl SLambdaPath {
    pub fn lambda(&self) -> f64 {
        self.lambda
    }

    pub fn times(&self) -> &[f64] {
        &self.times
    }

    pub fn positions(&self) -> &[f64] {
        &self.positions
    }

    pub fn end_position(&self) -> f64 {
        *self.positions.last().unwrap()
    }

    /// Linear interpolation between accepted points (steps are at most 0.5,
    /// over which the slow path is very nearly linear), clamped to the covered
    /// interval.
    pub fn position_at(&self, t: f64) -> f64 {
        let t = t.clamp(self.times[0], *self.times.last().unwrap());
        let k = match self.times.partition_point(|&ti| ti <= t) {
            0 => 0,
            p if p >= self.times.len() => self.times.len() - 2,
            p => p - 1,
        };
        let (t0, t1) = (self.times[k], self.times[k + 1]);
        let s = if t1 > t0 { (t - t0) / (t1 - t0) } else { 0.0 };
        self.positions[k] + s * (self.positions[k + 1] - self.positions[k])
    }
}

/// The drift `λ·u_ℓ` as a field, for handing to the adaptive integrator.
struct LambdaDrift<'a, 'b> {
    field: &'b RegularizedField<'a>,
    lambda: f64,
}

impl Field for LambdaDrift<'_, '_> {
    fn eval_u(&self, t: f64, x: f64, d_order: u8) -> Result<f64, FieldError> {
        Ok(self.lambda * self.field.eval_u(t, x, d_order)?)
    }

    fn t_floor(&self) -> f64 {
        0.0
    }

    fn scale(&self, t: f64, d_order: u8) -> f64 {
        self.lambda * self.field.scale(t, d_order)
    }

    fn domain_length(&self) -> Option<f64> {
        self.field.domain_length()
    }
}

fn validate_slow_setup(
    lambda: f64,
    spacing: f64,
    cfg: &IntegratorConfig,
) -> Result<(), RoughError> {
    if !(lambda.is_finite() && (0.0..=1.0).contains(&lambda)) {
        return Err(RoughError::Config(format!(
            "coupling λ must lie in [0, 1], got {lambda}"
        )));
    }
    if spacing > SNAPSHOT_SPACING_MAX + 1e-9 {
        return Err(RoughError::Config(format!(
            "snapshot spacing {spacing} too coarse for slow-tracer integration: \
             the smoothed field decorrelates on a unit time scale, need ≤ {SNAPSHOT_SPACING_MAX}"
        )));
    }
    let floor = min_rel_tol_for_spacing(spacing);
    if cfg.rel_tol < floor {
        return Err(RoughError::Config(format!(
            "snapshot gap {spacing} too coarse relative to the requested tolerance {}: the \
             interpolated drift carries a bias ≈ {:.1e} at this spacing; need rel_tol ≥ {:.1e} \
             or finer snapshots",
            cfg.rel_tol,
            floor * INTERP_GUARD,
            floor
        )));
    }
    Ok(())
}

/// Integrate the slow tracer against a stored, unit-scale smoothed field.
/// `λ = 0` returns the constant zero path exactly.
pub fn integrate_s_lambda(
    field: &RegularizedField<'_>,
    lambda: f64,
    t_max: f64,
    cfg: &IntegratorConfig,
) -> Result<SLambdaPath, RoughError> {
    if (field.ell - 1.0).abs() > 1e-9 {
        return Err(RoughError::Config(format!(
            "the slow tracer is defined against the unit-scale smoothed field; got ℓ = {}",
            field.ell
        )));
    }
    validate_slow_setup(lambda, field.traj.cfg.snapshot_spacing, cfg)?;
    if !(t_max > 0.0) || t_max > field.traj.t_max() + 1e-9 {
        return Err(RoughError::Config(format!(
            "integration horizon {t_max} outside the stored range (0, {}]",
            field.traj.t_max()
        )));
    }
    if lambda == 0.0 {
        return Ok(SLambdaPath {
            lambda,
            times: vec![0.0, t_max],
            positions: vec![0.0, 0.0],
        });
    }
    // Steps capped at 0.5 so each spans only a few snapshot stencils.
    let icfg = IntegratorConfig {
        max_step: cfg.max_step.min(0.5),
        ..*cfg
    };
    let drift = LambdaDrift { field, lambda };
    let path = integrate_tracer(&drift, 0.0, 0.0, t_max, &icfg)?;
    Ok(SLambdaPath {
        lambda,
        times: path.times().to_vec(),
        positions: path.positions().to_vec(),
    })
}

// ---------------------------------------------------------------------------
// Streaming slow-tracer runs
// ---------------------------------------------------------------------------

/// Output of one streamed slow-tracer run: the tracer `S` and the
/// frozen-point drift integral `F(t) = λ·∫₀ᵗ u₁(s, 0) ds` (trapezoid on the
/// snapshot grid), both at the requested sample times. `F` is the
/// exactly-solvable companion used as a variance-control and consistency
/// diagnostic: `E[F(t)²] = λ²·q(t)` with `q` from
/// [`frozen_integral_second_moment_modes`].
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SlowTracerRun {
    pub s_values: Vec<f64>,
    pub f_values: Vec<f64>,
}

/// Sliding window of coefficient snapshots during a streamed run.
struct Window {
    start: usize,
    coeffs: VecDeque<Vec<f64>>,
}

struct WindowField<'a> {
    win: &'a Window,
    m_max: usize,
    n_total: usize,
    dt: f64,
    k1: f64,
    length: f64,
    damp: &'a [f64],
    lambda: f64,
    sigma: [f64; 3],
}

impl Field for WindowField<'_> {
    fn eval_u(&self, t: f64, x: f64, d_order: u8) -> Result<f64, FieldError> {
        if d_order > 2 {
            return Err(FieldError::UnsupportedDerivative { d_order });
        }
        let st = time_stencil(self.n_total, self.dt, t);
        if st.j0 < self.win.start || st.j_hi() >= self.win.start + self.win.coeffs.len() {
            return Err(FieldError::Config(format!(
                "internal: snapshot window [{}, {}) does not cover the stencil at t = {t}",
                self.win.start,
                self.win.start + self.win.coeffs.len()
            )));
        }
        let gather = |i: usize| {
            self.win.coeffs[(st.j0 + i).min(st.j_hi()) - self.win.start].split_at(self.m_max)
        };
        let ab = [gather(0), gather(1), gather(2), gather(3), gather(4)];
        Ok(self.lambda
            * spectral_sum5(&ab, &st.w, self.damp, self.k1, x.rem_euclid(self.length), d_order))
    }

    fn t_floor(&self) -> f64 {
        0.0
    }

    fn scale(&self, _t: f64, d_order: u8) -> f64 {
        self.lambda * self.sigma[d_order.min(2) as usize]
    }

    fn domain_length(&self) -> Option<f64> {
        Some(self.length)
    }
}

/// Run the slow tracer over a freshly simulated environment without storing
/// the trajectory: the spectral state advances snapshot by snapshot and the
/// integrator consumes a sliding window of coefficients. Sample times must be
/// positive, strictly increasing multiples of the snapshot spacing;
/// `cfg.t_max` must cover the last of them. Identical in law — and in
/// coefficients, for the same seed — to storing the trajectory and calling
/// [`integrate_s_lambda`].
pub fn run_slow_tracer_streaming(
    cfg: &RoughConfig,
    lambda: f64,
    sample_times: &[f64],
    icfg: &IntegratorConfig,
) -> Result<SlowTracerRun, RoughError> {
    cfg.validate()?;
    validate_slow_setup(lambda, cfg.snapshot_spacing, icfg)?;
    if sample_times.is_empty() {
        return Err(RoughError::Config("no sample times requested".into()));
    }
    let dt = cfg.snapshot_spacing;
    let mut prev = 0.0;
    for &t in sample_times {
        if !(t > prev) {
            return Err(RoughError::Config(format!(
                "sample times must be positive and strictly increasing; saw {t} after {prev}"
            )));
        }
        let j = (t / dt).round();
        if (t / dt - j).abs() > 1e-6 {
            return Err(RoughError::Config(format!(
                "sample time {t} does not sit on the snapshot grid (spacing {dt})"
            )));
        }
        prev = t;
    }
    let t_end = *sample_times.last().unwrap();
    if t_end > cfg.t_max + 1e-9 {
        return Err(RoughError::Config(format!(
            "last sample time {t_end} exceeds the configured horizon {}",
            cfg.t_max
        )));
    }
    let n_total = (t_end / dt).round() as usize + 1;

    let length = cfg.length();
    let m_max = cfg.mode_count();
    let k1 = 2.0 * PI / length;
    let ell = 1.0f64;
    let damp: Vec<f64> = (1..=m_max)
        .map(|m| {
            let k = k1 * m as f64;
            (-k * k * ell * ell).exp()
        })
        .collect();
    let sigma = damped_sigmas(length, k1, &damp);
    let icfg = IntegratorConfig {
        max_step: icfg.max_step.min(0.5),
        ..*icfg
    };

    let mut engine = ModeEngine::new(length, m_max, dt, cfg.seed);
    let mut win = Window {
        start: 0,
        coeffs: VecDeque::with_capacity(CHUNK_SNAPSHOTS + 8),
    };
    // Smoothed field at the origin per snapshot (cosine coefficients only at
    // x = 0) and its running trapezoid integral.
    struct Stream {
        u0_prev: f64,
        f_running: Vec<f64>,
        pushed: usize,
    }
    impl Stream {
        fn push(&mut self, engine: &ModeEngine, win: &mut Window, damp: &[f64], dt: f64) {
            let snap = engine.snapshot();
            let m_max = damp.len();
            let u0: f64 = snap[..m_max].iter().zip(damp).map(|(a, dm)| a * dm).sum();
            if self.pushed > 0 {
                self.f_running[self.pushed] =
                    self.f_running[self.pushed - 1] + 0.5 * dt * (self.u0_prev + u0);
            }
            self.u0_prev = u0;
            win.coeffs.push_back(snap);
            self.pushed += 1;
        }
    }
    let mut st = Stream {
        u0_prev: 0.0,
        f_running: vec![0.0f64; n_total],
        pushed: 0,
    };
    st.push(&engine, &mut win, &damp, dt);

    let mut s = 0.0f64;
    let mut t_prev = 0.0f64;
    let mut s_values = Vec::with_capacity(sample_times.len());
    let mut f_values = Vec::with_capacity(sample_times.len());
    let chunk = CHUNK_SNAPSHOTS as f64 * dt;

    for &target in sample_times {
        // The 1e-6 gate absorbs accumulated rounding drift in `t_prev` (up to
        // a few 1e-9 after thousands of chunk additions); skipping a gap that
        // small moves the tracer by at most λ·|u|·1e-6, far below abs_tol.
        while t_prev < target - 1e-6 {
            let t_next = (t_prev + chunk).min(target);
            // Cover the interpolation stencils for [t_prev, t_next].
            let j_need = time_stencil(n_total, dt, t_next).j_hi().min(n_total - 1);
            while st.pushed <= j_need {
                engine.step();
                st.push(&engine, &mut win, &damp, dt);
            }
            let j_low = time_stencil(n_total, dt, t_prev).j0;
            while win.start < j_low {
                win.coeffs.pop_front();
                win.start += 1;
            }
            if lambda > 0.0 {
                let view = WindowField {
                    win: &win,
                    m_max,
                    n_total,
                    dt,
                    k1,
                    length,
                    damp: &damp,
                    lambda,
                    sigma,
                };
                let path = integrate_tracer(&view, s, t_prev, t_next, &icfg)?;
                s = path.end_position();
            }
            t_prev = t_next;
        }
        let j_target = (target / dt).round() as usize;
        while st.pushed <= j_target {
            engine.step();
            st.push(&engine, &mut win, &damp, dt);
        }
        s_values.push(s);
        f_values.push(lambda * st.f_running[j_target]);
    }
    Ok(SlowTracerRun { s_values, f_values })
}

// ---------------------------------------------------------------------------
// Frozen-tracer oracle
// ---------------------------------------------------------------------------

/// Closed form of `∫₀ᵗ∫₀ᵗ P_{|s-s'| + 2ℓ²}(0) ds ds'`, the second moment of
/// `∫₀ᵗ u_ℓ(s, 0) ds` for the infinite-volume field smoothed at `ℓ`:
///
/// ```text
/// q_ℓ(t) = (1/√π)·[ (4/3)((t + 2ℓ²)^{3/2} − (2ℓ²)^{3/2}) − 2√(2ℓ²)·t ].
/// ```
///
/// At `ℓ = 0` this is exactly `A·t^{3/2}` with `A = 4/(3√π)`.
pub fn frozen_integral_second_moment(ell: f64, t: f64) -> f64 {
    let tl = 2.0 * ell * ell;
    ((4.0 / 3.0) * ((t + tl).powf(1.5) - tl.powf(1.5)) - 2.0 * tl.sqrt() * t) / PI.sqrt()
}

/// Exact lattice version of [`frozen_integral_second_moment`] on the retained
/// mode set: `Σ_m (2/L)·e^{-2k²ℓ²}·2(k²t − 1 + e^{-k²t})/k⁴`. Differs from the
/// continuum value by the missing zero mode (≈ `t²/L`) plus an exponentially
/// small discretization term.
pub fn frozen_integral_second_moment_modes(length: f64, m_max: usize, ell: f64, t: f64) -> f64 {
    let k1 = 2.0 * PI / length;
    let mut acc = 0.0;
    for m in 1..=m_max {
        let k = k1 * m as f64;
        let k2 = k * k;
        let double_int = 2.0 * (k2 * t - 1.0 + (-k2 * t).exp()) / (k2 * k2);
        acc += 2.0 / length * (-2.0 * k2 * ell * ell).exp() * double_int;
    }
    acc
}

// ---------------------------------------------------------------------------
// Crossover measurement
// ---------------------------------------------------------------------------

/// Ensemble configuration for the crossover measurement.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CrossoverConfig {
    /// Couplings to measure, each in (0, 1].
    pub lambdas: Vec<f64>,
    /// Environments per coupling for the full-horizon ensemble (linear-growth
    /// window, crossover location, collapse).
    pub n_env_long: u64,
    /// Environments per coupling for the short ensemble feeding the early
    /// `t^{3/2}` window (cheap, so typically several times larger).
    pub n_env_short: u64,
    pub base_seed: u64,
    /// 0 lets the thread pool decide; results are identical for any value.
    /// Execution plumbing, not experiment identity: left out of serialized
    /// echoes so reruns with different worker counts compare bitwise equal.
    #[serde(skip_serializing)]
    pub worker_count: usize,
    pub dx: f64,
    /// Horizon per coupling: `t_max = t_max_factor · λ⁻⁴` (at least 10).
    pub t_max_factor: f64,
    /// Torus length per run: at least `length_factor · √t_max`.
    pub length_factor: f64,
    pub snapshot_spacing: f64,
    /// Sample-time density of the log grid.
    pub points_per_decade: usize,
    pub rel_tol: f64,
    pub abs_tol: f64,
    /// Spectral truncation for the simulations (safe for unit-scale smoothed
    /// output; see [`RoughConfig::mode_k_cut`]).
    pub mode_k_cut: Option<f64>,
    /// A fit window whose endpoint ratio is below this is skipped, with the
    /// reason recorded.
    pub min_window_ratio: f64,
}

impl Default for CrossoverConfig {
    fn default() -> Self {
        CrossoverConfig {
            lambdas: vec![0.25, 0.5],
            n_env_long: 250,
            n_env_short: 800,
            base_seed: 1,
            worker_count: 0,
            dx: 0.25,
            t_max_factor: 25.0,
            length_factor: LENGTH_FACTOR_MIN,
            snapshot_spacing: 0.1,
            points_per_decade: 8,
            // The tracer's step size is pinned by the sub-snapshot temporal
            // roughness of the drift (steps scale as rel_tol^{1/3}); 1e-4
            // keeps path-law errors two orders below the ensemble standard
            // error at a fraction of the cost of tighter settings.
            rel_tol: 1e-4,
            abs_tol: 1e-7,
            mode_k_cut: Some(4.0),
            min_window_ratio: 4.0,
        }
    }
}

impl CrossoverConfig {
    fn validate(&self) -> Result<(), RoughError> {
        if self.lambdas.is_empty() {
            return Err(RoughError::Config("no couplings requested".into()));
        }
        for &l in &self.lambdas {
            if !(l > 0.0 && l <= 1.0) {
                return Err(RoughError::Config(format!(
                    "couplings must lie in (0, 1], got {l}"
                )));
            }
        }
        if self.n_env_long == 0 || self.n_env_short == 0 {
            return Err(RoughError::Config("ensemble sizes must be positive".into()));
        }
        if !(self.t_max_factor >= 10.0) {
            return Err(RoughError::Config(format!(
                "t_max_factor must be at least 10 (the horizon must clear the crossover), got {}",
                self.t_max_factor
            )));
        }
        if !(self.length_factor >= LENGTH_FACTOR_MIN) {
            return Err(RoughError::Config(format!(
                "length_factor must be at least {LENGTH_FACTOR_MIN}, got {}",
                self.length_factor
            )));
        }
        if self.points_per_decade < 4 {
            return Err(RoughError::Config(format!(
                "points_per_decade must be at least 4, got {}",
                self.points_per_decade
            )));
        }
        if !(self.min_window_ratio > 1.0) {
            return Err(RoughError::Config(format!(
                "min_window_ratio must exceed 1, got {}",
                self.min_window_ratio
            )));
        }
        Ok(())
    }
}

/// `E[S²]` against time for one ensemble.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MomentCurve {
    pub times: Vec<f64>,
    pub mean_sq: Vec<f64>,
    pub se: Vec<f64>,
    pub n_env: u64,
    pub n_failed: u64,
}

/// Per-coupling crossover measurements.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LambdaReport {
    pub lambda: f64,
    /// Predicted crossover time `λ⁻⁴`.
    pub t_cross: f64,
    pub t_max: f64,
    /// Early-time window `[1, λ⁻⁴/4]` for the `t^{3/2}` regime.
    pub sub_window: (f64, f64),
    /// Late-time window `[4λ⁻⁴, t_max]` for the linear regime.
    pub diff_window: (f64, f64),
    /// Short-horizon ensemble curve (present when the early window is
    /// usable).
    pub short_curve: Option<MomentCurve>,
    /// Full-horizon ensemble curve.
    pub long_curve: MomentCurve,
    /// `λ²·q(t)` on the short grid: the exact frozen-tracer prediction.
    pub frozen_prediction: Option<Vec<f64>>,
    pub sub_fit: Option<ExponentFit>,
    pub sub_skip: Option<String>,
    pub diff_fit: Option<ExponentFit>,
    pub diff_skip: Option<String>,
    /// Amplitude estimate of the `t^{3/2}` law, rescaled to the rough-field
    /// constant: `D̂ = A·⟨E[S²(t)] / (λ²·q(t))⟩` over the early window, with
    /// `q` the exact frozen-tracer second moment on the simulated lattice.
    /// Normalizing by `q` rather than by `A·t^{3/2}` removes the known
    /// finite-smoothing bias `q(t)/(A·t^{3/2}) = (1 + 2/t)^{3/2} + O(t^{-1/2})`,
    /// which is substantial for `t ≲ 100`; what remains measures how far the
    /// moving tracer deviates from the frozen-point integral. Jackknife
    /// standard error over environments; variance is reduced with `F²` as a
    /// control variate.
    pub d_estimate: Option<f64>,
    pub d_estimate_se: Option<f64>,
    /// The uncorrected ratio `E[S²(t)]/(λ²·A·t^{3/2})` at the top of the early
    /// window, recorded for transparency (it carries the full smoothing
    /// bias).
    pub d_top_ratio: Option<f64>,
    /// `⟨E[S²(t)]/t⟩` over the late window with jackknife standard error.
    pub diffusivity: Option<f64>,
    pub diffusivity_se: Option<f64>,
    /// Break time of a continuous two-segment log-log fit to the full curve.
    pub kink_time: Option<f64>,
}

/// Ratio of late-window diffusivities for a pair of couplings; the linear
/// regime predicts ratios near 1 independently of `λ`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CollapsePair {
    pub lambda_a: f64,
    pub lambda_b: f64,
    pub ratio: f64,
    pub se: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CrossoverReport {
    pub per_lambda: Vec<LambdaReport>,
    pub collapse: Vec<CollapsePair>,
}

/// Logarithmic sample grid snapped to multiples of the snapshot spacing
/// (deduplicated, strictly increasing).
pub fn snapshot_log_grid(t_lo: f64, t_hi: f64, points_per_decade: usize, dt: f64) -> Vec<f64> {
    let mut out: Vec<f64> = Vec::new();
    if !(t_lo > 0.0 && t_hi > t_lo && dt > 0.0) {
        return out;
    }
    let n = ((t_hi / t_lo).log10() * points_per_decade as f64).ceil() as usize;
    let mut last_j = 0u64;
    for i in 0..=n {
        let t = t_lo * (t_hi / t_lo).powf(i as f64 / n as f64);
        let j = (t / dt).round().max(1.0) as u64;
        if j > last_j {
            out.push(j as f64 * dt);
            last_j = j;
        }
    }
    out
}

/// Break time of the best continuous two-segment linear fit to
/// `log(values)` against `log(times)`; `None` if fewer than 7 points or the
/// data are not positive.
pub fn kink_time(times: &[f64], values: &[f64]) -> Option<f64> {
    let n = times.len();
    if n != values.len() || n < 7 {
        return None;
    }
    if times.iter().chain(values.iter()).any(|&v| !(v > 0.0)) {
        return None;
    }
    let xs: Vec<f64> = times.iter().map(|t| t.ln()).collect();
    let ys: Vec<f64> = values.iter().map(|v| v.ln()).collect();
    let mut best: Option<(f64, f64)> = None;
    for bi in 2..n - 2 {
        let xb = xs[bi];
        // Model y = c0 + c1·min(x − xb, 0) + c2·max(x − xb, 0).
        let mut m = nalgebra::Matrix3::<f64>::zeros();
        let mut rhs = nalgebra::Vector3::<f64>::zeros();
        for i in 0..n {
            let u1 = (xs[i] - xb).min(0.0);
            let u2 = (xs[i] - xb).max(0.0);
            let row = [1.0, u1, u2];
            for r in 0..3 {
                for c in 0..3 {
                    m[(r, c)] += row[r] * row[c];
                }
                rhs[r] += row[r] * ys[i];
            }
        }
        let sol = m.lu().solve(&rhs)?;
        let mut sse = 0.0;
        for i in 0..n {
            let u1 = (xs[i] - xb).min(0.0);
            let u2 = (xs[i] - xb).max(0.0);
            let r = ys[i] - (sol[0] + sol[1] * u1 + sol[2] * u2);
            sse += r * r;
        }
        if best.map_or(true, |(s, _)| sse < s) {
            best = Some((sse, xb));
        }
    }
    best.map(|(_, xb)| xb.exp())
}

/// Even site count giving a torus of at least `l_min` at spacing `dx`.
fn sites_for(l_min: f64, dx: f64) -> usize {
    let n = (l_min / dx).ceil() as usize;
    (n + n % 2).max(8)
}

/// Disjoint seed streams per (coupling index, ensemble kind).
fn ensemble_seed(base: u64, lambda_index: usize, kind: u64) -> u64 {
    base.wrapping_add(splitmix64(
        (lambda_index as u64 + 1) * 2 + kind,
    ))
}

struct EnsembleRuns {
    /// `s²` per environment per sample time, kept environments only.
    s_sq: Vec<Vec<f64>>,
    /// `F²` per environment per sample time.
    f_sq: Vec<Vec<f64>>,
    n_failed: u64,
}

fn run_crossover_ensemble(
    cfg: &CrossoverConfig,
    lambda: f64,
    grid: &[f64],
    n_env: u64,
    seed_base: u64,
) -> Result<EnsembleRuns, RoughError> {
    let t_end = *grid.last().unwrap();
    let n_sites = sites_for(cfg.length_factor * t_end.sqrt(), cfg.dx);
    let icfg = IntegratorConfig {
        rel_tol: cfg.rel_tol,
        abs_tol: cfg.abs_tol,
        max_step: 0.5,
        t_init_factor: 10.0,
    };
    let results = run_parallel(n_env, cfg.worker_count, seed_base, |seed, _i| {
        let run_cfg = RoughConfig {
            n_sites,
            dx: cfg.dx,
            t_max: t_end,
            seed,
            snapshot_spacing: cfg.snapshot_spacing,
            mode_k_cut: cfg.mode_k_cut,
        };
        run_slow_tracer_streaming(&run_cfg, lambda, grid, &icfg).map_err(|e| e.to_string())
    })?;
    let mut s_sq = Vec::new();
    let mut f_sq = Vec::new();
    let mut n_failed = 0u64;
    let mut examples: Vec<(u64, String)> = Vec::new();
    for (i, r) in results.into_iter().enumerate() {
        match r {
            Ok(run) => {
                s_sq.push(run.s_values.iter().map(|s| s * s).collect());
                f_sq.push(run.f_values.iter().map(|f| f * f).collect());
            }
            Err(msg) => {
                n_failed += 1;
                if examples.len() < 5 {
                    examples.push((i as u64, msg));
                }
            }
        }
    }
    let allowed = (FAILURE_BUDGET * n_env as f64).floor() as u64;
    if n_failed > allowed {
        return Err(RoughError::Stats(StatsError::FailureBudget {
            failed: n_failed,
            n_env,
            allowed,
            examples,
        }));
    }
    Ok(EnsembleRuns {
        s_sq,
        f_sq,
        n_failed,
    })
}

fn moment_curve(grid: &[f64], runs: &EnsembleRuns, n_env: u64) -> MomentCurve {
    let k = grid.len();
    let mut mean_sq = Vec::with_capacity(k);
    let mut se = Vec::with_capacity(k);
    for j in 0..k {
        let col: Vec<f64> = runs.s_sq.iter().map(|row| row[j]).collect();
        let (m, s) = mean_and_se(&col);
        mean_sq.push(m);
        se.push(s);
    }
    MomentCurve {
        times: grid.to_vec(),
        mean_sq,
        se,
        n_env,
        n_failed: runs.n_failed,
    }
}

fn points_in_window(curve: &MomentCurve, window: (f64, f64)) -> (Vec<f64>, Vec<f64>, Vec<f64>) {
    let mut ts = Vec::new();
    let mut ms = Vec::new();
    let mut ws = Vec::new();
    for i in 0..curve.times.len() {
        let t = curve.times[i];
        if t >= window.0 * (1.0 - 1e-9) && t <= window.1 * (1.0 + 1e-9) && curve.mean_sq[i] > 0.0 {
            ts.push(t);
            ms.push(curve.mean_sq[i]);
            let rel = curve.se[i] / curve.mean_sq[i];
            ws.push(1.0 / (rel * rel).max(1e-12));
        }
    }
    (ts, ms, ws)
}

/// Amplitude estimate with `F²` control variate and jackknife standard error.
/// `q_values[j]` is the exact frozen-tracer second moment (lattice mode sum)
/// at the `j`-th in-window time, already scaled by `λ²`.
fn amplitude_jackknife(
    s_sq: &[Vec<f64>],
    f_sq: &[Vec<f64>],
    cols: &[usize],
    q_values: &[f64],
) -> Option<(f64, f64)> {
    let n = s_sq.len();
    let k = cols.len();
    if n < 8 || k == 0 {
        return None;
    }
    // Control-variate slope per column.
    let mut beta = vec![0.0f64; k];
    let mut y = vec![vec![0.0f64; k]; n];
    for (j, &c) in cols.iter().enumerate() {
        let ms: f64 = s_sq.iter().map(|r| r[c]).sum::<f64>() / n as f64;
        let mf: f64 = f_sq.iter().map(|r| r[c]).sum::<f64>() / n as f64;
        let mut cov = 0.0;
        let mut var = 0.0;
        for i in 0..n {
            let df = f_sq[i][c] - mf;
            cov += (s_sq[i][c] - ms) * df;
            var += df * df;
        }
        beta[j] = if var > 0.0 { cov / var } else { 0.0 };
        for i in 0..n {
            // Centering F² by its exact expectation keeps the estimator
            // unbiased regardless of the fitted slope.
            y[i][j] = s_sq[i][c] - beta[j] * (f_sq[i][c] - q_values[j]);
        }
    }
    let mut col_sum = vec![0.0f64; k];
    for row in &y {
        for (j, v) in row.iter().enumerate() {
            col_sum[j] += v;
        }
    }
    // Inverse-variance weights from the full-sample column scatter.
    let mut weights = vec![0.0f64; k];
    for j in 0..k {
        let mean = col_sum[j] / n as f64;
        let var: f64 = y.iter().map(|r| (r[j] - mean).powi(2)).sum::<f64>() / (n as f64 - 1.0);
        let se2 = var / n as f64;
        weights[j] = if se2 > 0.0 {
            (q_values[j] / se2.sqrt()).powi(2)
        } else {
            0.0
        };
    }
    let wsum: f64 = weights.iter().sum();
    if !(wsum > 0.0) {
        return None;
    }
    let estimate = |sums: &[f64], count: f64| -> f64 {
        let mut acc = 0.0;
        for j in 0..k {
            acc += weights[j] * (sums[j] / count) / q_values[j];
        }
        SUB_DIFFUSIVE_AMPLITUDE * acc / wsum
    };
    let full = estimate(&col_sum, n as f64);
    let mut jack_mean = 0.0;
    let mut jack = Vec::with_capacity(n);
    for i in 0..n {
        let sums: Vec<f64> = (0..k).map(|j| col_sum[j] - y[i][j]).collect();
        let e = estimate(&sums, (n - 1) as f64);
        jack_mean += e;
        jack.push(e);
    }
    jack_mean /= n as f64;
    let var: f64 = jack.iter().map(|e| (e - jack_mean).powi(2)).sum::<f64>() * (n - 1) as f64
        / n as f64;
    Some((full, var.sqrt()))
}

/// Mean of `E[S²(t)]/t` over the given columns with jackknife standard error.
fn diffusivity_jackknife(s_sq: &[Vec<f64>], cols: &[usize], times: &[f64]) -> Option<(f64, f64)> {
    let n = s_sq.len();
    let k = cols.len();
    if n < 8 || k == 0 {
        return None;
    }
    let mut col_sum = vec![0.0f64; k];
    for row in s_sq {
        for (j, &c) in cols.iter().enumerate() {
            col_sum[j] += row[c];
        }
    }
    let estimate = |sums: &[f64], count: f64| -> f64 {
        sums.iter()
            .zip(times)
            .map(|(s, t)| s / count / t)
            .sum::<f64>()
            / k as f64
    };
    let full = estimate(&col_sum, n as f64);
    let mut jack = Vec::with_capacity(n);
    for row in s_sq {
        let sums: Vec<f64> = (0..k)
            .map(|j| col_sum[j] - row[cols[j]])
            .collect();
        jack.push(estimate(&sums, (n - 1) as f64));
    }
    let jm: f64 = jack.iter().sum::<f64>() / n as f64;
    let var: f64 = jack.iter().map(|e| (e - jm).powi(2)).sum::<f64>() * (n - 1) as f64 / n as f64;
    Some((full, var.sqrt()))
}

/// Measure `E[S²(t)]` for each coupling over two ensembles (short horizon for
/// the early `t^{3/2}` window, full horizon for the linear window), fit both
/// regimes, estimate the `t^{3/2}` amplitude, locate the crossover, and check
/// that the late-window diffusivity is coupling-independent. Windows too
/// narrow to fit are skipped with the reason recorded.
pub fn crossover_report(cfg: &CrossoverConfig) -> Result<CrossoverReport, RoughError> {
    cfg.validate()?;
    let dt = cfg.snapshot_spacing;
    let mut per_lambda = Vec::new();
    for (li, &lambda) in cfg.lambdas.iter().enumerate() {
        let t_cross = lambda.powi(-4);
        let t_max = cfg.t_max_factor * t_cross;
        let sub_window = (1.0, t_cross / 4.0);
        let diff_window = (4.0 * t_cross, t_max);
        let t_grid_lo = (2.0 * dt).max(0.5);

        // Full-horizon ensemble.
        let grid_long = snapshot_log_grid(t_grid_lo, t_max, cfg.points_per_decade, dt);
        if grid_long.len() < 7 {
            return Err(RoughError::Config(format!(
                "sample grid for λ = {lambda} has only {} points",
                grid_long.len()
            )));
        }
        let runs_long =
            run_crossover_ensemble(cfg, lambda, &grid_long, cfg.n_env_long, ensemble_seed(cfg.base_seed, li, 1))?;
        let long_curve = moment_curve(&grid_long, &runs_long, cfg.n_env_long);

        // Short ensemble only when the early window is usable.
        let sub_ratio = sub_window.1 / sub_window.0;
        let mut short_curve = None;
        let mut frozen_prediction = None;
        let mut sub_fit = None;
        let mut sub_skip = None;
        let mut d_estimate = None;
        let mut d_estimate_se = None;
        let mut d_top_ratio = None;
        if sub_ratio < cfg.min_window_ratio {
            sub_skip = Some(format!(
                "early window [{}, {:.3}] spans a ratio of {:.2}, below the minimum {:.2}",
                sub_window.0, sub_window.1, sub_ratio, cfg.min_window_ratio
            ));
        } else {
            let t_short_end = (sub_window.1 * 1.25).min(t_max);
            let grid_short = snapshot_log_grid(t_grid_lo, t_short_end, cfg.points_per_decade, dt);
            let runs_short = run_crossover_ensemble(
                cfg,
                lambda,
                &grid_short,
                cfg.n_env_short,
                ensemble_seed(cfg.base_seed, li, 0),
            )?;
            let curve = moment_curve(&grid_short, &runs_short, cfg.n_env_short);
            let n_sites = sites_for(cfg.length_factor * t_short_end.sqrt(), cfg.dx);
            let geom = RoughConfig {
                n_sites,
                dx: cfg.dx,
                t_max: t_short_end,
                seed: 0,
                snapshot_spacing: dt,
                mode_k_cut: cfg.mode_k_cut,
            };
            let q_at = |t: f64| {
                lambda
                    * lambda
                    * frozen_integral_second_moment_modes(geom.length(), geom.mode_count(), 1.0, t)
            };
            frozen_prediction = Some(grid_short.iter().map(|&t| q_at(t)).collect());

            let (ts, ms, ws) = points_in_window(&curve, sub_window);
            match fit_exponent_spanning(&ts, &ms, Some(&ws), cfg.min_window_ratio * 0.85) {
                Ok(f) => sub_fit = Some(f),
                Err(e) => sub_skip = Some(format!("early-window fit skipped: {e}")),
            }
            let cols: Vec<usize> = (0..grid_short.len())
                .filter(|&i| {
                    grid_short[i] >= sub_window.0 * (1.0 - 1e-9)
                        && grid_short[i] <= sub_window.1 * (1.0 + 1e-9)
                })
                .collect();
            let q_vals: Vec<f64> = cols.iter().map(|&i| q_at(grid_short[i])).collect();
            if let Some((d, se)) =
                amplitude_jackknife(&runs_short.s_sq, &runs_short.f_sq, &cols, &q_vals)
            {
                d_estimate = Some(d);
                d_estimate_se = Some(se);
            }
            if let Some(&last) = cols.last() {
                let t = grid_short[last];
                d_top_ratio = Some(
                    curve.mean_sq[last]
                        / (lambda * lambda * SUB_DIFFUSIVE_AMPLITUDE * t.powf(1.5)),
                );
            }
            short_curve = Some(curve);
        }

        // Late-window fit and diffusivity from the full-horizon ensemble.
        let mut diff_fit = None;
        let mut diff_skip = None;
        let mut diffusivity = None;
        let mut diffusivity_se = None;
        let diff_ratio = diff_window.1 / diff_window.0;
        if diff_ratio < cfg.min_window_ratio {
            diff_skip = Some(format!(
                "late window [{:.3}, {:.3}] spans a ratio of {:.2}, below the minimum {:.2}",
                diff_window.0, diff_window.1, diff_ratio, cfg.min_window_ratio
            ));
        } else {
            let (ts, ms, ws) = points_in_window(&long_curve, diff_window);
            match fit_exponent_spanning(&ts, &ms, Some(&ws), cfg.min_window_ratio * 0.85) {
                Ok(f) => diff_fit = Some(f),
                Err(e) => diff_skip = Some(format!("late-window fit skipped: {e}")),
            }
            let cols: Vec<usize> = (0..grid_long.len())
                .filter(|&i| {
                    grid_long[i] >= diff_window.0 * (1.0 - 1e-9)
                        && grid_long[i] <= diff_window.1 * (1.0 + 1e-9)
                })
                .collect();
            let times: Vec<f64> = cols.iter().map(|&i| grid_long[i]).collect();
            if let Some((d, se)) = diffusivity_jackknife(&runs_long.s_sq, &cols, &times) {
                diffusivity = Some(d);
                diffusivity_se = Some(se);
            }
        }

        per_lambda.push(LambdaReport {
            lambda,
            t_cross,
            t_max,
            sub_window,
            diff_window,
            short_curve,
            long_curve: long_curve.clone(),
            frozen_prediction,
            sub_fit,
            sub_skip,
            diff_fit,
            diff_skip,
            d_estimate,
            d_estimate_se,
            d_top_ratio,
            diffusivity,
            diffusivity_se,
            kink_time: kink_time(&long_curve.times, &long_curve.mean_sq),
        });
    }

    let mut collapse = Vec::new();
    for i in 0..per_lambda.len() {
        for j in i + 1..per_lambda.len() {
            let (a, b) = (&per_lambda[i], &per_lambda[j]);
            if let (Some(da), Some(db), Some(sa), Some(sb)) = (
                a.diffusivity,
                b.diffusivity,
                a.diffusivity_se,
                b.diffusivity_se,
            ) {
                if db != 0.0 {
                    let ratio = da / db;
                    let se = ratio.abs() * ((sa / da).powi(2) + (sb / db).powi(2)).sqrt();
                    collapse.push(CollapsePair {
                        lambda_a: a.lambda,
                        lambda_b: b.lambda,
                        ratio,
                        se,
                    });
                }
            }
        }
    }
    Ok(CrossoverReport {
        per_lambda,
        collapse,
    })
}

// ---------------------------------------------------------------------------
// Tests
// ---------------------------------------------------------------------------

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn heat_kernel(t: f64, x: f64) -> f64 {
        (-x * x / (4.0 * t)).exp() / (4.0 * PI * t).sqrt()
    }

    #[test]
    fn same_seed_reproduces_and_seeds_differ() {
        let a = simulate_rough(64, 0.25, 0.6, 42).unwrap();
        let b = simulate_rough(64, 0.25, 0.6, 42).unwrap();
        let c = simulate_rough(64, 0.25, 0.6, 43).unwrap();
        assert_eq!(a.times, b.times);
        assert_eq!(a.coeffs, b.coeffs);
        assert_ne!(a.coeffs[0], c.coeffs[0]);
    }

    #[test]
    fn preconditions_are_enforced() {
        // Too coarse a lattice.
        assert!(matches!(
            simulate_rough(64, 0.3, 0.5, 1),
            Err(RoughError::Config(_))
        ));
        // Torus too short for the horizon.
        assert!(matches!(
            simulate_rough(64, 0.25, 400.0, 1),
            Err(RoughError::Config(_))
        ));
        // Odd site count.
        assert!(matches!(
            simulate_rough(65, 0.25, 0.5, 1),
            Err(RoughError::Config(_))
        ));
        // Under-resolved smoothing length.
        let traj = simulate_rough(64, 0.25, 0.5, 1).unwrap();
        assert!(matches!(regularize(&traj, 0.5), Err(RoughError::Config(_))));
        assert!(regularize(&traj, 1.0).is_ok());
    }

    /// The stationary law holds at every snapshot: site-averaged second
    /// moments at early, middle and late times agree with each other and with
    /// the exact lattice variance `(N-2)/L`.
    #[test]
    fn stationary_moments_are_constant_in_time() {
        let n_env = 60u64;
        let (n_sites, dx, t_max) = (440usize, 0.25, 30.0);
        let results = run_parallel(n_env, 0, 9_100, |seed, _| {
            let mut cfg = RoughConfig::new(n_sites, dx, t_max, seed);
            cfg.snapshot_spacing = 0.5;
            let traj = simulate_rough_with(&cfg).map_err(|e| e.to_string())?;
            let probes = [1usize, 30, 59];
            let mut out = [0.0f64; 3];
            for (pi, &j) in probes.iter().enumerate() {
                let v = traj.site_values(j).map_err(|e| e.to_string())?;
                out[pi] = v.iter().map(|u| u * u).sum::<f64>() / v.len() as f64;
            }
            Ok(out)
        })
        .unwrap();
        let per_probe: Vec<Vec<f64>> = (0..3)
            .map(|pi| results.iter().map(|r| r.as_ref().unwrap()[pi]).collect())
            .collect();
        let stats: Vec<(f64, f64)> = per_probe.iter().map(|v| mean_and_se(v)).collect();
        let exact = (n_sites as f64 - 2.0) / (n_sites as f64 * dx);
        for &(m, se) in &stats {
            assert!(
                (m - exact).abs() < 4.0 * se,
                "site-averaged second moment {m} vs exact {exact} (se {se})"
            );
        }
        for i in 0..3 {
            for j in i + 1..3 {
                let (mi, si) = stats[i];
                let (mj, sj) = stats[j];
                let se = (si * si + sj * sj).sqrt();
                assert!(
                    (mi - mj).abs() < 3.0 * se,
                    "moments drift in time: {mi} vs {mj} (se {se})"
                );
            }
        }
    }

    /// A fixed mode's autocovariance decays at the heat rate `k²` (half the
    /// rate would be `2k²`; the test discriminates between the two by many
    /// standard errors) and its stationary variance is `2/L`.
    #[test]
    fn mode_autocovariance_decays_at_heat_rate() {
        let (n_sites, dx) = (1960usize, 0.25);
        let length = n_sites as f64 * dx; // 490
        let mut cfg = RoughConfig::new(n_sites, dx, 600.0, 777);
        cfg.snapshot_spacing = 0.5;
        let traj = simulate_rough_with(&cfg).unwrap();
        let k1 = 2.0 * PI / length;
        let tau = 0.5;
        for m in [92usize, 123] {
            let k = k1 * m as f64;
            let series = traj.mode_series(m).unwrap();
            let both: [Vec<f64>; 2] = [
                series.iter().map(|p| p.0).collect(),
                series.iter().map(|p| p.1).collect(),
            ];
            let mut lag0 = Vec::new();
            let mut lag1 = Vec::new();
            for vals in &both {
                for w in vals.windows(2) {
                    lag0.push(w[0] * w[0]);
                    lag1.push(w[0] * w[1]);
                }
            }
            let (c0, _) = mean_and_se(&lag0);
            let (c1, _) = mean_and_se(&lag1);
            let rho = c1 / c0;
            let expected = (-k * k * tau).exp();
            let wrong_rate = (-2.0 * k * k * tau).exp();
            let n_eff = lag1.len() as f64 * (1.0 - expected) / (1.0 + expected);
            let se = ((1.0 - expected * expected) / n_eff).sqrt();
            assert!(
                (rho - expected).abs() < 4.0 * se,
                "mode {m}: autocorrelation {rho} vs expected {expected} (se {se})"
            );
            assert!(
                (rho - expected).abs() < (rho - wrong_rate).abs(),
                "mode {m}: decay rate closer to 2k² than to k²"
            );
            let var_exact = 2.0 / length;
            assert!(
                (c0 - var_exact).abs() < 0.3 * var_exact,
                "mode {m}: stationary variance {c0} vs {var_exact}"
            );
        }
    }

    /// Variance of the unit-scale smoothed field: the exact mode sum equals
    /// the infinite-volume value `P_2(0)` minus the zero-mode share `1/L`, and
    /// sampled field values agree with the mode sum.
    #[test]
    fn smoothed_field_variance_matches_mode_sum_oracle() {
        let (n_sites, dx) = (120usize, 0.25);
        let length = n_sites as f64 * dx;
        let traj0 = simulate_rough(n_sites, dx, 2.0, 5).unwrap();
        let reg0 = regularize(&traj0, 1.0).unwrap();
        let mode_sum_var = reg0.scale(1.0, 0).powi(2);
        assert_relative_eq!(
            mode_sum_var,
            UNIT_SMOOTHED_VARIANCE - 1.0 / length,
            max_relative = 1e-10
        );

        let n_env = 400u64;
        let results = run_parallel(n_env, 0, 13_000, |seed, _| {
            let traj = simulate_rough(n_sites, dx, 2.0, seed).map_err(|e| e.to_string())?;
            let reg = regularize(&traj, 1.0).unwrap();
            // Well-separated probes are nearly independent draws.
            let mut acc = 0.0;
            let probes = [(0.9, 0.0), (1.7, 11.3), (0.4, 22.6)];
            for &(t, x) in &probes {
                let u = reg.eval_u(t, x, 0).map_err(|e| e.to_string())?;
                acc += u * u;
            }
            Ok(acc / 3.0)
        })
        .unwrap();
        let samples: Vec<f64> = results.into_iter().map(|r| r.unwrap()).collect();
        let (mean, se) = mean_and_se(&samples);
        assert!(
            (mean - mode_sum_var).abs() < 4.0 * se,
            "sampled smoothed variance {mean} vs mode sum {mode_sum_var} (se {se})"
        );
    }

    /// Smoothing is convolution with the heat kernel at time ℓ²: spectral
    /// evaluation agrees with direct wrapped-kernel quadrature against the
    /// site values, and the field is periodic.
    #[test]
    fn smoothed_field_matches_direct_convolution() {
        let (n_sites, dx) = (192usize, 0.25);
        let length = n_sites as f64 * dx;
        let traj = simulate_rough(n_sites, dx, 2.0, 31).unwrap();
        let ell = 1.3f64;
        let reg = regularize(&traj, ell).unwrap();
        let j_snap = 10usize;
        let t = traj.times()[j_snap];
        let sites = traj.site_values(j_snap).unwrap();
        for &x in &[0.0, 3.37, 19.9, 41.7] {
            let spectral = reg.eval_u(t, x, 0).unwrap();
            let mut conv = 0.0;
            for (j, &u) in sites.iter().enumerate() {
                let mut kernel = 0.0;
                for img in -6i64..=6 {
                    kernel += heat_kernel(ell * ell, x - j as f64 * dx + img as f64 * length);
                }
                conv += dx * kernel * u;
            }
            // The quadrature is exact for the band-limited field up to the
            // kernel's (negligible) super-Nyquist tail; the zero mode is the
            // one real difference: the site values have none, and neither
            // does the spectral sum, so the two agree directly.
            assert!(
                (spectral - conv).abs() < 1e-8,
                "x = {x}: spectral {spectral} vs convolution {conv}"
            );
            let wrapped = reg.eval_u(t, x + length, 0).unwrap();
            assert!((spectral - wrapped).abs() < 1e-10);
        }
    }

    /// Two successive smoothings compose into one at the root-sum-square
    /// length, for values and both derivatives.
    #[test]
    fn smoothing_semigroup_composes() {
        let traj = simulate_rough(120, 0.25, 1.5, 8).unwrap();
        let once = regularize(&traj, 1.5).unwrap();
        let twice = regularize(&traj, 1.2)
            .unwrap()
            .regularize(0.9)
            .unwrap();
        assert_relative_eq!(twice.ell(), 1.5, max_relative = 1e-15);
        for d in 0..=2u8 {
            for &(t, x) in &[(0.3, 0.0), (0.85, 7.3), (1.2, 21.9), (1.5, 14.01)] {
                let a = once.eval_u(t, x, d).unwrap();
                let b = twice.eval_u(t, x, d).unwrap();
                assert_relative_eq!(a, b, max_relative = 1e-12, epsilon = 1e-13);
            }
        }
    }

    /// Temporal covariance of the unit-smoothed field at a fixed point equals
    /// the heat kernel at the lag plus twice the smoothing time, minus the
    /// zero-mode share.
    #[test]
    fn smoothed_temporal_covariance_matches_heat_kernel_law() {
        let (n_sites, dx) = (192usize, 0.25);
        let length = n_sites as f64 * dx;
        let n_env = 600u64;
        let lags = [0.0, 1.0, 2.5];
        let results = run_parallel(n_env, 0, 21_000, |seed, _| {
            let traj = simulate_rough(n_sites, dx, 4.0, seed).map_err(|e| e.to_string())?;
            let reg = regularize(&traj, 1.0).unwrap();
            let s = 1.0;
            let base = reg.eval_u(s, 0.0, 0).map_err(|e| e.to_string())?;
            let mut out = [0.0f64; 3];
            for (i, &lag) in lags.iter().enumerate() {
                let v = reg.eval_u(s + lag, 0.0, 0).map_err(|e| e.to_string())?;
                out[i] = base * v;
            }
            Ok(out)
        })
        .unwrap();
        for (i, &lag) in lags.iter().enumerate() {
            let vals: Vec<f64> = results.iter().map(|r| r.as_ref().unwrap()[i]).collect();
            let (mean, se) = mean_and_se(&vals);
            let expected = heat_kernel(lag + 2.0, 0.0) - 1.0 / length;
            assert!(
                (mean - expected).abs() < 4.0 * se,
                "lag {lag}: covariance {mean} vs {expected} (se {se})"
            );
        }
    }

    /// The law of `ℓ^{1/2}·u_ℓ(ℓ²t, ℓx)` does not depend on `ℓ` when the
    /// domain is scaled along: two-sample KS across `ℓ = 1` and `ℓ = 2`.
    #[test]
    fn scaling_bridge_law_is_ell_independent() {
        let n = 350u64;
        let (t0, x0) = (1.3, 0.7);
        let a: Vec<f64> = run_parallel(n, 0, 31_000, |seed, _| {
            let traj = simulate_rough(112, 0.25, 1.5, seed).map_err(|e| e.to_string())?;
            let reg = regularize(&traj, 1.0).unwrap();
            reg.eval_u(t0, x0, 0).map_err(|e| e.to_string())
        })
        .unwrap()
        .into_iter()
        .map(|r| r.unwrap())
        .collect();
        let b: Vec<f64> = run_parallel(n, 0, 32_000, |seed, _| {
            let traj = simulate_rough(224, 0.25, 5.5, seed).map_err(|e| e.to_string())?;
            let reg = regularize(&traj, 2.0).unwrap();
            Ok(2.0f64.sqrt() * reg.eval_u(4.0 * t0, 2.0 * x0, 0).map_err(|e| e.to_string())?)
        })
        .unwrap()
        .into_iter()
        .map(|r| r.unwrap())
        .collect();
        let ks = crate::stats::ks_two_sample(&a, &b).unwrap();
        assert!(
            ks.p_value > 0.01,
            "rescaled smoothed fields differ in law: KS statistic {} p {}",
            ks.statistic,
            ks.p_value
        );
    }

    /// Closed form of the frozen-tracer second moment: matches direct
    /// quadrature of the smoothed covariance, reduces to `A·t^{3/2}` without
    /// smoothing, and the lattice mode sum reproduces it minus the zero-mode
    /// share `t²/L`.
    #[test]
    fn frozen_integral_oracle_is_consistent() {
        for &t in &[2.0, 8.0, 32.0] {
            // Simpson quadrature of 2·∫₀ᵗ (t−τ)·P_{τ+2}(0) dτ.
            let n = 4000usize;
            let h = t / n as f64;
            let f = |tau: f64| 2.0 * (t - tau) * heat_kernel(tau + 2.0, 0.0);
            let mut acc = f(0.0) + f(t);
            for i in 1..n {
                acc += f(i as f64 * h) * if i % 2 == 1 { 4.0 } else { 2.0 };
            }
            let quad = acc * h / 3.0;
            assert_relative_eq!(
                frozen_integral_second_moment(1.0, t),
                quad,
                max_relative = 1e-9
            );
            assert_relative_eq!(
                frozen_integral_second_moment(0.0, t),
                SUB_DIFFUSIVE_AMPLITUDE * t.powf(1.5),
                max_relative = 1e-12
            );
            let length = 1600.0;
            let m_max = 1000usize;
            let lattice = frozen_integral_second_moment_modes(length, m_max, 1.0, t);
            let continuum = frozen_integral_second_moment(1.0, t) - t * t / length;
            assert_relative_eq!(lattice, continuum, max_relative = 1e-7);
        }
    }

    #[test]
    fn zero_coupling_freezes_the_tracer() {
        let traj = simulate_rough(360, 0.25, 20.0, 3).unwrap();
        let reg = regularize(&traj, 1.0).unwrap();
        let cfg = IntegratorConfig {
            rel_tol: 1e-6,
            abs_tol: 1e-9,
            ..Default::default()
        };
        let path = integrate_s_lambda(&reg, 0.0, 20.0, &cfg).unwrap();
        assert!(path.positions().iter().all(|&p| p == 0.0));

        let run_cfg = RoughConfig::new(360, 0.25, 20.0, 3);
        let run = run_slow_tracer_streaming(&run_cfg, 0.0, &[10.0, 20.0], &cfg).unwrap();
        assert_eq!(run.s_values, vec![0.0, 0.0]);
        assert_eq!(run.f_values, vec![0.0, 0.0]);
    }

    #[test]
    fn slow_tracer_rejects_unsupported_setups() {
        let cfg = IntegratorConfig {
            rel_tol: 1e-6,
            abs_tol: 1e-9,
            ..Default::default()
        };
        // Snapshots too coarse for integration.
        let mut coarse = RoughConfig::new(360, 0.25, 20.0, 3);
        coarse.snapshot_spacing = 0.12;
        let traj = simulate_rough_with(&coarse).unwrap();
        let reg = regularize(&traj, 1.0).unwrap();
        let err = integrate_s_lambda(&reg, 0.5, 20.0, &cfg).unwrap_err();
        assert!(err.to_string().contains("too coarse"), "{err}");

        // Tolerance finer than the snapshot representation supports.
        let traj = simulate_rough(360, 0.25, 20.0, 3).unwrap();
        let reg = regularize(&traj, 1.0).unwrap();
        let tight = IntegratorConfig {
            rel_tol: 1e-9,
            abs_tol: 1e-12,
            ..Default::default()
        };
        let err = integrate_s_lambda(&reg, 0.5, 20.0, &tight).unwrap_err();
        assert!(
            err.to_string().contains("too coarse relative to the requested tolerance"),
            "{err}"
        );

        // Wrong smoothing scale.
        let reg14 = regularize(&traj, 1.4).unwrap();
        assert!(integrate_s_lambda(&reg14, 0.5, 20.0, &cfg).is_err());

        // Coupling out of range.
        assert!(integrate_s_lambda(&reg, 1.3, 20.0, &cfg).is_err());

        // Off-grid sample time in a streamed run.
        let run_cfg = RoughConfig::new(360, 0.25, 20.0, 3);
        let err = run_slow_tracer_streaming(&run_cfg, 0.5, &[1.03], &cfg).unwrap_err();
        assert!(err.to_string().contains("snapshot grid"), "{err}");
    }

    /// Refining the snapshot spacing four-fold barely moves the integrated
    /// path: the interpolation error is far below the path scale. Also checks
    /// the integrated path satisfies the governing equation at step midpoints.
    #[test]
    fn snapshot_refinement_does_not_move_the_path() {
        let mut cfg = RoughConfig::new(360, 0.25, 20.0, 97);
        cfg.snapshot_spacing = 0.025;
        let fine = simulate_rough_with(&cfg).unwrap();
        let coarse = fine.thin(4).unwrap();
        assert_relative_eq!(coarse.snapshot_spacing(), 0.1, max_relative = 1e-12);
        let icfg = IntegratorConfig {
            rel_tol: 1e-6,
            abs_tol: 1e-9,
            ..Default::default()
        };
        let lambda = 0.8;
        let reg_f = regularize(&fine, 1.0).unwrap();
        let reg_c = regularize(&coarse, 1.0).unwrap();
        let pf = integrate_s_lambda(&reg_f, lambda, 20.0, &icfg).unwrap();
        let pc = integrate_s_lambda(&reg_c, lambda, 20.0, &icfg).unwrap();
        let diff = (pf.end_position() - pc.end_position()).abs();
        assert!(
            diff < 5e-3 * (1.0 + pf.end_position().abs()),
            "end positions differ by {diff}: {} vs {}",
            pf.end_position(),
            pc.end_position()
        );

        // Midpoint residual against the drift: the chord slope of a step
        // differs from the midpoint drift by the per-step solution error
        // divided by h plus an O(h²) chord-vs-curve term. Checked on the
        // larger (above-median) steps of the coarse path.
        let times = pc.times();
        let pos = pc.positions();
        let mut steps: Vec<f64> = times.windows(2).map(|w| w[1] - w[0]).collect();
        steps.sort_by(f64::total_cmp);
        let h_floor = steps[steps.len() / 2].max(1e-4);
        let mut checked = 0usize;
        for w in 0..times.len() - 1 {
            let h = times[w + 1] - times[w];
            if h < h_floor {
                continue;
            }
            let tm = 0.5 * (times[w] + times[w + 1]);
            let xm = pc.position_at(tm);
            let slope = (pos[w + 1] - pos[w]) / h;
            let drift = lambda * reg_c.eval_u(tm, xm, 0).unwrap();
            let tol = 160.0 * icfg.rel_tol * (1.0 + xm.abs()) / h + 0.02 * h * h + 1e-6;
            assert!(
                (slope - drift).abs() < tol,
                "step at t = {tm} (h = {h}): chord slope {slope} vs drift {drift}"
            );
            checked += 1;
        }
        assert!(checked > 10, "too few steps to check: {checked}");
    }

    /// The streamed runner reproduces the stored-trajectory pipeline: same
    /// coefficients (checked through the frozen-point integral, which hits
    /// every snapshot) and the same tracer within integration accuracy.
    #[test]
    fn streaming_run_matches_stored_trajectory() {
        let (n_sites, dx, t_max, seed, lambda) = (360usize, 0.25, 20.0, 1234u64, 0.5);
        let icfg = IntegratorConfig {
            rel_tol: 1e-6,
            abs_tol: 1e-9,
            ..Default::default()
        };
        let run_cfg = RoughConfig::new(n_sites, dx, t_max, seed);
        let samples = [5.0, 10.0, 20.0];
        let run = run_slow_tracer_streaming(&run_cfg, lambda, &samples, &icfg).unwrap();

        let traj = simulate_rough(n_sites, dx, t_max, seed).unwrap();
        let reg = regularize(&traj, 1.0).unwrap();
        let path = integrate_s_lambda(&reg, lambda, t_max, &icfg).unwrap();
        for (i, &t) in samples.iter().enumerate() {
            let stored = path.position_at(t);
            let diff = (run.s_values[i] - stored).abs();
            assert!(
                diff < 0.05 * (1.0 + stored.abs()),
                "t = {t}: streamed {} vs stored {stored}",
                run.s_values[i]
            );
        }
        // Frozen-point integral recomputed from the stored trajectory
        // (trapezoid over snapshots, like the streamed runner).
        let dt = traj.snapshot_spacing();
        let mut acc = 0.0;
        let mut prev = reg.eval_u(0.0, 0.0, 0).unwrap();
        let mut j = 0usize;
        for (i, &t) in traj.times().iter().enumerate().skip(1) {
            let v = reg.eval_u(t, 0.0, 0).unwrap();
            acc += 0.5 * dt * (prev + v);
            prev = v;
            if j < samples.len() && (t - samples[j]).abs() < 1e-9 {
                let f_stored = lambda * acc;
                assert!(
                    (run.f_values[j] - f_stored).abs() < 1e-9,
                    "frozen integral at t = {t}: streamed {} vs stored {f_stored}",
                    run.f_values[j]
                );
                j += 1;
            }
            let _ = i;
        }
        assert_eq!(j, samples.len());
    }

    /// Dropping modes beyond the smoothing cutoff leaves the smoothed-field
    /// tracer unchanged: per-mode noise streams keep the retained modes'
    /// paths identical, and the dropped tail is below round-off after
    /// damping.
    #[test]
    fn mode_truncation_is_invisible_to_the_smoothed_tracer() {
        let icfg = IntegratorConfig {
            rel_tol: 1e-6,
            abs_tol: 1e-9,
            ..Default::default()
        };
        let samples = [5.0, 10.0, 20.0];
        let full_cfg = RoughConfig::new(360, 0.25, 20.0, 555);
        let full = run_slow_tracer_streaming(&full_cfg, 0.5, &samples, &icfg).unwrap();
        let cut_cfg = RoughConfig {
            mode_k_cut: Some(4.0),
            ..full_cfg
        };
        let cut = run_slow_tracer_streaming(&cut_cfg, 0.5, &samples, &icfg).unwrap();
        for i in 0..samples.len() {
            assert!(
                (full.s_values[i] - cut.s_values[i]).abs() < 1e-4,
                "t = {}: full {} vs truncated {}",
                samples[i],
                full.s_values[i],
                cut.s_values[i]
            );
            // F differs only by the damped spectral tail's time integral
            // (standard deviation ~1e-8 at this cutoff).
            assert!((full.f_values[i] - cut.f_values[i]).abs() < 1e-6);
        }
    }

    /// While the tracer's displacement stays within one correlation length,
    /// `E[S²]` matches the exact frozen-tracer prediction `λ²·q(t)`
    /// pointwise.
    #[test]
    fn early_second_moment_matches_frozen_oracle() {
        let lambda = 0.5f64;
        let n_env = 400u64;
        let dt = 0.1;
        let grid = snapshot_log_grid(0.5, 4.5, 8, dt);
        let n_sites = sites_for(20.0 * 4.5f64.sqrt(), 0.25);
        let icfg = IntegratorConfig {
            rel_tol: 1e-6,
            abs_tol: 1e-9,
            ..Default::default()
        };
        let results = run_parallel(n_env, 0, 47_000, |seed, _| {
            let cfg = RoughConfig {
                n_sites,
                dx: 0.25,
                t_max: 4.5,
                seed,
                snapshot_spacing: dt,
                mode_k_cut: Some(4.0),
            };
            run_slow_tracer_streaming(&cfg, lambda, &grid, &icfg).map_err(|e| e.to_string())
        })
        .unwrap();
        let runs: Vec<SlowTracerRun> = results.into_iter().map(|r| r.unwrap()).collect();
        let geom = RoughConfig {
            n_sites,
            dx: 0.25,
            t_max: 4.5,
            seed: 0,
            snapshot_spacing: dt,
            mode_k_cut: Some(4.0),
        };
        for (j, &t) in grid.iter().enumerate() {
            let sq: Vec<f64> = runs.iter().map(|r| r.s_values[j].powi(2)).collect();
            let (mean, se) = mean_and_se(&sq);
            let expected = lambda
                * lambda
                * frozen_integral_second_moment_modes(geom.length(), geom.mode_count(), 1.0, t);
            assert!(
                (mean - expected).abs() < 4.0 * se + 0.03 * expected,
                "t = {t}: E[S²] = {mean} vs frozen prediction {expected} (se {se})"
            );
        }
    }

    /// Full crossover pipeline on two couplings: the early window fits and
    /// amplitude estimate appear for the small coupling, the early window is
    /// skipped with a reason for the large one, the fitted break sits within
    /// a factor 4 of `λ⁻⁴`, and the late-window diffusivities collapse
    /// across couplings at matched multiples of the crossover time.
    ///
    /// The late-window exponents are asserted against their honest values at
    /// this horizon, which sit *above* 1: the effective diffusivity E[S²]/t
    /// still grows like a logarithm through the entire factor-25 window (the
    /// asymptotic exponent 1 is approached at far larger times; see
    /// `late_time_exponent_carries_log_correction`).
    #[test]
    fn crossover_report_fits_skips_and_collapse() {
        let cfg = CrossoverConfig {
            lambdas: vec![0.45, 0.8],
            n_env_long: 120,
            n_env_short: 300,
            base_seed: 2_026,
            ..Default::default()
        };
        let report = crossover_report(&cfg).unwrap();
        assert_eq!(report.per_lambda.len(), 2);
        for lam in &report.per_lambda {
            eprintln!(
                "λ = {}: sub {:?} (skip {:?}), diff {:?}, D̂ {:?} ± {:?}, kink {:?}",
                lam.lambda,
                lam.sub_fit.as_ref().map(|f| (f.slope, f.slope_se)),
                lam.sub_skip,
                lam.diff_fit.as_ref().map(|f| (f.slope, f.slope_se)),
                lam.d_estimate,
                lam.d_estimate_se,
                lam.kink_time,
            );
        }
        for pair in &report.collapse {
            eprintln!(
                "collapse {} vs {}: ratio {}",
                pair.lambda_a, pair.lambda_b, pair.ratio
            );
        }

        let a = &report.per_lambda[0];
        assert_relative_eq!(a.t_cross, 0.45f64.powi(-4), max_relative = 1e-12);
        let sub = a.sub_fit.as_ref().expect("early fit for λ = 0.45");
        // In this window the smoothing scale is still felt, so the growth is
        // steeper than t^{3/2}: the frozen-tracer oracle predicts a log-log
        // slope near 1.86 here.
        assert!(
            sub.slope > 1.70 && sub.slope < 2.02,
            "early slope {} outside the smoothing-dominated range",
            sub.slope
        );
        let d = a.d_estimate.expect("amplitude estimate for λ = 0.45");
        assert!(
            (d / SUB_DIFFUSIVE_AMPLITUDE - 1.0).abs() < 0.15,
            "amplitude estimate {d} vs {SUB_DIFFUSIVE_AMPLITUDE}"
        );
        let diff = a.diff_fit.as_ref().expect("late fit for λ = 0.45");
        assert!(
            diff.slope > 1.05 && diff.slope < 1.45,
            "late slope {} outside the log-corrected band at this horizon",
            diff.slope
        );
        let kink = a.kink_time.expect("kink for λ = 0.45");
        assert!(
            kink > a.t_cross / 4.0 && kink < 4.0 * a.t_cross,
            "kink at {kink} vs predicted crossover {}",
            a.t_cross
        );

        let b = &report.per_lambda[1];
        let reason = b.sub_skip.as_ref().expect("skip reason for λ = 0.8");
        assert!(reason.contains("window"), "unexpected reason: {reason}");
        assert!(b.sub_fit.is_none());
        let diff_b = b.diff_fit.as_ref().expect("late fit for λ = 0.8");
        assert!(
            diff_b.slope > 1.1 && diff_b.slope < 1.65,
            "late slope {} outside the log-corrected band at this horizon",
            diff_b.slope
        );

        assert_eq!(report.collapse.len(), 1);
        let pair = &report.collapse[0];
        assert!(
            pair.ratio > 0.55 && pair.ratio < 1.8,
            "late-window diffusivities do not collapse: ratio {}",
            pair.ratio
        );
    }

    #[test]
    #[ignore]
    fn diag_late_regime() {
        // How the growth exponent of E[S²] approaches its late-time value:
        // local log-log slopes on an extended horizon.
        let lambda: f64 = std::env::var("DIAG_LAMBDA")
            .ok()
            .and_then(|v| v.parse().ok())
            .unwrap_or(0.7);
        let factor: f64 = std::env::var("DIAG_FACTOR")
            .ok()
            .and_then(|v| v.parse().ok())
            .unwrap_or(384.0);
        let n_env: u64 = std::env::var("DIAG_NENV")
            .ok()
            .and_then(|v| v.parse().ok())
            .unwrap_or(100);
        let rel_tol: f64 = std::env::var("DIAG_RELTOL")
            .ok()
            .and_then(|v| v.parse().ok())
            .unwrap_or(3e-4);
        let t_cross = lambda.powi(-4);
        let t_max = factor * t_cross;
        let dt = 0.1;
        let grid = snapshot_log_grid(0.5, t_max, 6, dt);
        let n_sites = sites_for(20.0 * t_max.sqrt(), 0.25);
        let icfg = IntegratorConfig {
            rel_tol,
            abs_tol: 1e-7,
            ..Default::default()
        };
        let t0 = std::time::Instant::now();
        let results = run_parallel(n_env, 0, 555_000, |seed, _| {
            let cfg = RoughConfig {
                n_sites,
                dx: 0.25,
                t_max,
                seed,
                snapshot_spacing: dt,
                mode_k_cut: Some(2.5),
            };
            run_slow_tracer_streaming(&cfg, lambda, &grid, &icfg).map_err(|e| e.to_string())
        })
        .unwrap();
        let runs: Vec<SlowTracerRun> = results.into_iter().map(|r| r.unwrap()).collect();
        eprintln!(
            "lambda {lambda} t_cross {t_cross:.2} t_max {t_max:.0} n_env {n_env} rel_tol {rel_tol:.0e}: {:?}",
            t0.elapsed()
        );
        let mut m2 = Vec::new();
        for j in 0..grid.len() {
            let sq: Vec<f64> = runs.iter().map(|r| r.s_values[j].powi(2)).collect();
            let (m, se) = mean_and_se(&sq);
            m2.push(m);
            eprintln!(
                "  t/t_c {:8.2}  m2 {:10.4}  se% {:4.1}  m2/t {:8.4}",
                grid[j] / t_cross,
                m,
                100.0 * se / m,
                m / grid[j]
            );
        }
        // Local slopes over sliding factor-4 windows.
        for lo in [1.0, 4.0, 16.0, 64.0] {
            let (ts, ms): (Vec<f64>, Vec<f64>) = grid
                .iter()
                .zip(&m2)
                .filter(|(t, _)| **t >= lo * t_cross && **t <= 4.0 * lo * t_cross)
                .map(|(t, m)| (*t, *m))
                .unzip();
            if ts.len() >= 3 {
                if let Ok(fit) = fit_exponent_spanning(&ts, &ms, None, 2.0) {
                    eprintln!(
                        "  slope on [{:5.0},{:6.0}]·t_c : {:.3} ± {:.3}",
                        lo,
                        4.0 * lo,
                        fit.slope,
                        fit.slope_se
                    );
                }
            }
        }
    }

    /// How the diffusive regime is approached: the effective diffusivity
    /// E[S²]/t keeps a slowly decaying (logarithmic-looking) growth long past
    /// the crossover time, so a log-log fit over `t ∈ [16, 400]` at λ = 0.7
    /// reads an exponent near 1.3, not 1. Sliding-window fits on extended
    /// horizons (see `diag_late_regime`) show the local exponent falling
    /// 1.47 → 1.25 → 1.11 over `[4.7, 384]·λ⁻⁴`, and at λ = 0.25 — whose
    /// rescaling reaches the rough-field limit sooner — the same scaled
    /// window `[4, 25]·λ⁻⁴` already fits 1.00. This test pins the honest
    /// moderate-coupling value so any drift in the integrator or field
    /// sampling that changes the late-time law is caught.
    #[test]
    fn late_time_exponent_carries_log_correction() {
        let cfg = CrossoverConfig {
            lambdas: vec![0.7],
            n_env_long: 150,
            n_env_short: 8,
            t_max_factor: 96.0,
            points_per_decade: 6,
            base_seed: 4_200,
            // Moment-level accuracy only: a looser tolerance and spectral
            // cut move the measured exponent by far less than its se.
            rel_tol: 3e-4,
            mode_k_cut: Some(2.5),
            ..Default::default()
        };
        let report = crossover_report(&cfg).unwrap();
        let lam = &report.per_lambda[0];
        let fit = lam.diff_fit.as_ref().expect("late-window fit");
        eprintln!(
            "λ = 0.7 fit on [16, 400]: slope {} ± {}",
            fit.slope, fit.slope_se
        );
        assert!(
            fit.slope > 1.15 && fit.slope < 1.45,
            "late-window slope {} ± {} left the log-corrected band",
            fit.slope,
            fit.slope_se
        );
    }
}
