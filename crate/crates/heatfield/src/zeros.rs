//! Zeros of the velocity field: location and classification at a fixed time,
//! smooth continuation across time, pairwise annihilation events, and the
//! frontier construction — the rightmost negative-origin zero `L`, the
//! leftmost positive-origin zero `R`, and the selected stable one `Z`.
//!
//! Zeros of `u(t,·)` are simple almost surely; each carries a kind from the
//! sign of the spatial slope (negative = stable/attracting for tracer
//! dynamics, positive = unstable). As `t` grows zeros only disappear, in
//! stable/unstable pairs that collide and annihilate; the tracker follows all
//! curves forward with a shared adaptive step and records those events.

use crate::cadlag::{CadlagError, CadlagPath, Interpolation};
use crate::environment::{Field, FieldError};
use serde::{Deserialize, Serialize};

/// Root residual tolerance, as a fraction of the field's standard deviation:
/// every reported zero satisfies `|u| ≤ 10⁻⁹·scale(u)`.
pub const ZERO_TOL_FACTOR: f64 = 1e-9;
/// Neutral-classification window, as a fraction of the slope's standard
/// deviation. Exact neutrality has probability zero; the window only exists
/// to stabilize continuation near annihilations.
pub const SLOPE_TOL_FACTOR: f64 = 1e-6;
/// Default label time for origin signs, as a multiple of the field's
/// resolution floor.
pub const T_MIN_TRACK_FACTOR: f64 = 10.0;

/// Absolute root residual tolerance at time `t`.
pub fn zero_tol<F: Field + ?Sized>(field: &F, t: f64) -> f64 {
    ZERO_TOL_FACTOR * field.scale(t, 0)
}

/// Absolute neutral-slope half-width at time `t`.
pub fn slope_tol<F: Field + ?Sized>(field: &F, t: f64) -> f64 {
    SLOPE_TOL_FACTOR * field.scale(t, 1)
}

/// Pair-merge distance for time step `ds`: a stable/unstable pair closer than
/// this closes within about two steps under the local square-root collapse
/// model `r ≈ ±√(2(t₀−t))`, so it is annihilated now.
pub fn merge_tol(ds: f64) -> f64 {
    3.0 * (2.0 * ds).sqrt()
}

/// Default label time `10·t_floor` for [`track_zero_curves`] callers.
pub fn default_t_min_track<F: Field + ?Sized>(field: &F) -> f64 {
    T_MIN_TRACK_FACTOR * field.t_floor()
}

#[derive(thiserror::Error, Debug)]
pub enum ZeroError {
    #[error("invalid zero-finding configuration: {0}")]
    Config(String),
    #[error(transparent)]
    Field(#[from] FieldError),
    #[error("sign-change structure unresolved at t = {t} after local rescans: {message}")]
    Scan { t: f64, message: String },
    #[error("root refinement failed near x = {x} at t = {t}: {message}")]
    Refine { t: f64, x: f64, message: String },
    #[error("zero continuation stalled at s = {s}: {message}")]
    Trace {
        s: f64,
        message: String,
        /// Samples accepted before the stall.
        partial: Box<ZeroCurve>,
    },
    #[error("curve tracking failed at t = {t}: {message}")]
    Tracking { t: f64, message: String },
    #[error("frontier undefined at t = {t}: {message}")]
    Frontier { t: f64, message: String },
    #[error(transparent)]
    Cadlag(#[from] CadlagError),
}

/// Classification of a zero by its spatial slope.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ZeroKind {
    Stable,
    Unstable,
    Neutral,
}

impl std::fmt::Display for ZeroKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            ZeroKind::Stable => "stable",
            ZeroKind::Unstable => "unstable",
            ZeroKind::Neutral => "neutral",
        })
    }
}

/// `stable ⇔ slope < −slope_tol`, `unstable ⇔ slope > slope_tol`, neutral in
/// between.
pub fn classify(slope: f64, slope_tol: f64) -> ZeroKind {
    if slope < -slope_tol {
        ZeroKind::Stable
    } else if slope > slope_tol {
        ZeroKind::Unstable
    } else {
        ZeroKind::Neutral
    }
}

/// One zero of `u(t,·)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ZeroPoint {
    pub t: f64,
    pub x: f64,
    pub kind: ZeroKind,
    /// `∂_x u(t, x)`.
    pub slope: f64,
}

/// A zero continued across time: samples `(times[i], positions[i])` with
/// increasing times, constant kind, and the sign of the position at the
/// earliest resolvable time.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ZeroCurve {
    pub id: usize,
    pub times: Vec<f64>,
    pub positions: Vec<f64>,
    pub slopes: Vec<f64>,
    pub kind: ZeroKind,
    /// Sign (−1 or +1) of the position at the earliest sample.
    pub origin_sign: i8,
    /// `(t*, x*)` if the curve was annihilated during tracking.
    pub death: Option<(f64, f64)>,
}

impl ZeroCurve {
    pub fn start_time(&self) -> f64 {
        self.times[0]
    }

    pub fn end_time(&self) -> f64 {
        *self.times.last().unwrap()
    }

    /// Alive on `[start, death)` for annihilated curves, `[start, end]` for
    /// survivors.
    pub fn alive_at(&self, t: f64) -> bool {
        if t < self.start_time() {
            return false;
        }
        match self.death {
            Some((td, _)) => t < td,
            None => t <= self.end_time(),
        }
    }

    /// Position by linear interpolation between samples (`None` outside the
    /// sampled range).
    pub fn position_at(&self, t: f64) -> Option<f64> {
        interp(&self.times, &self.positions, t)
    }

    pub fn slope_at(&self, t: f64) -> Option<f64> {
        interp(&self.times, &self.slopes, t)
    }
}

fn interp(ts: &[f64], vs: &[f64], t: f64) -> Option<f64> {
    if ts.is_empty() || t < ts[0] || t > *ts.last().unwrap() {
        return None;
    }
    let i = ts.partition_point(|&s| s <= t);
    if i == ts.len() {
        return Some(*vs.last().unwrap());
    }
    let (t0, t1) = (ts[i - 1], ts[i]);
    let w = (t - t0) / (t1 - t0);
    Some(vs[i - 1] + w * (vs[i] - vs[i - 1]))
}

/// A recorded stable/unstable pair collision.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AnnihilationEvent {
    pub t: f64,
    pub x: f64,
    pub curve_stable: usize,
    pub curve_unstable: usize,
}

/// Step control for zero continuation and tracking.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct TraceConfig {
    /// Largest time step as a fraction of the current time.
    pub max_step_frac: f64,
    /// Absolute cap on the time step.
    pub max_step: f64,
    /// Smallest allowed step as a fraction of the current time; reaching it
    /// aborts with an error.
    pub min_step_frac: f64,
}

impl Default for TraceConfig {
    fn default() -> Self {
        TraceConfig {
            max_step_frac: 0.005,
            max_step: f64::INFINITY,
            min_step_frac: 1e-10,
        }
    }
}

impl TraceConfig {
    fn validate(&self) -> Result<(), ZeroError> {
        if !(self.max_step_frac > 0.0 && self.max_step_frac <= 0.5) {
            return Err(ZeroError::Config(format!(
                "max_step_frac must lie in (0, 0.5], got {}",
                self.max_step_frac
            )));
        }
        if !(self.max_step > 0.0) {
            return Err(ZeroError::Config(format!(
                "max_step must be positive, got {}",
                self.max_step
            )));
        }
        if !(self.min_step_frac > 0.0 && self.min_step_frac < self.max_step_frac) {
            return Err(ZeroError::Config(format!(
                "min_step_frac must lie in (0, max_step_frac), got {}",
                self.min_step_frac
            )));
        }
        Ok(())
    }
}

// ---------------------------------------------------------------------------
// Locating zeros at a fixed time
// ---------------------------------------------------------------------------

/// All zeros of `u(t,·)` on `interval`, by sign-change scan on `n_scan`
/// cells, bisection bracketing and Newton polish, classified by slope.
///
/// The scan must resolve the typical zero spacing `~√t`:
/// `n_scan·√t ≥ 8·|interval|` is required. Adjacent same-kind zeros in the
/// result (impossible for simple zeros of a continuous function) trigger an
/// automatic local rescan at 4× density, repeated up to 6 rounds.
pub fn find_zeros<F: Field + ?Sized>(
    field: &F,
    t: f64,
    interval: (f64, f64),
    n_scan: usize,
) -> Result<Vec<ZeroPoint>, ZeroError> {
    let (a, b) = interval;
    if !(b > a) || !a.is_finite() || !b.is_finite() {
        return Err(ZeroError::Config(format!(
            "interval must be finite with a < b, got ({a}, {b})"
        )));
    }
    if n_scan < 2 {
        return Err(ZeroError::Config(format!(
            "n_scan must be at least 2, got {n_scan}"
        )));
    }
    if (n_scan as f64) * t.sqrt() < 8.0 * (b - a) {
        return Err(ZeroError::Config(format!(
            "scan too coarse: need n_scan·√t ≥ 8·|interval| \
             ({n_scan}·√{t} < 8·{})",
            b - a
        )));
    }
    let ztol = zero_tol(field, t);
    let stol = slope_tol(field, t);

    let mut zeros: Vec<ZeroPoint> = Vec::new();
    scan_interval(field, t, a, b, n_scan, ztol, stol, &mut zeros)?;
    dedup_zeros(&mut zeros, b - a);

    // Alternation repair: simple zeros of a continuous function alternate in
    // kind; a same-kind adjacency means a pair was missed in one cell.
    for round in 0..6 {
        let mut gaps: Vec<(f64, f64)> = Vec::new();
        for w in zeros.windows(2) {
            if w[0].kind == w[1].kind && w[0].kind != ZeroKind::Neutral {
                gaps.push((w[0].x, w[1].x));
            }
        }
        if gaps.is_empty() {
            return Ok(zeros);
        }
        for (lo, hi) in gaps {
            let pad = (hi - lo) * 1e-6;
            let dens = (n_scan as f64) / (b - a) * 4f64.powi(round + 1);
            let n_local = ((hi - lo) * dens).ceil().max(8.0) as usize;
            scan_interval(field, t, lo + pad, hi - pad, n_local, ztol, stol, &mut zeros)?;
        }
        dedup_zeros(&mut zeros, b - a);
    }
    Err(ZeroError::Scan {
        t,
        message: "same-kind zeros remain adjacent after 6 rescan rounds".into(),
    })
}

/// Scan one interval and append refined roots.
#[allow(clippy::too_many_arguments)]
fn scan_interval<F: Field + ?Sized>(
    field: &F,
    t: f64,
    a: f64,
    b: f64,
    n: usize,
    ztol: f64,
    stol: f64,
    out: &mut Vec<ZeroPoint>,
) -> Result<(), ZeroError> {
    let dx = (b - a) / n as f64;
    let mut prev_x = a;
    let mut prev_u = field.eval_u(t, a, 0)?;
    for i in 1..=n {
        let x = if i == n { b } else { a + i as f64 * dx };
        let u = field.eval_u(t, x, 0)?;
        if prev_u.abs() <= 0.5 * ztol {
            out.push(polish(field, t, prev_x, ztol, stol)?);
        } else if u.abs() > 0.5 * ztol && prev_u * u < 0.0 {
            let root = refine_bracket(field, t, prev_x, x, prev_u, ztol)?;
            out.push(classify_point(field, t, root, stol)?);
        }
        prev_x = x;
        prev_u = u;
    }
    if prev_u.abs() <= 0.5 * ztol {
        out.push(polish(field, t, prev_x, ztol, stol)?);
    }
    Ok(())
}

fn classify_point<F: Field + ?Sized>(
    field: &F,
    t: f64,
    x: f64,
    stol: f64,
) -> Result<ZeroPoint, ZeroError> {
    let slope = field.eval_u(t, x, 1)?;
    Ok(ZeroPoint {
        t,
        x,
        kind: classify(slope, stol),
        slope,
    })
}

/// Newton polish from a point already within the residual tolerance.
fn polish<F: Field + ?Sized>(
    field: &F,
    t: f64,
    x0: f64,
    ztol: f64,
    stol: f64,
) -> Result<ZeroPoint, ZeroError> {
    let mut x = x0;
    for _ in 0..8 {
        let [u, du, _] = field.eval_triple(t, x)?;
        if u.abs() <= 0.1 * ztol || du == 0.0 {
            break;
        }
        x -= u / du;
    }
    classify_point(field, t, x, stol)
}

/// Safeguarded Newton–bisection on a sign-change bracket.
fn refine_bracket<F: Field + ?Sized>(
    field: &F,
    t: f64,
    mut lo: f64,
    mut hi: f64,
    mut ulo: f64,
    ztol: f64,
) -> Result<f64, ZeroError> {
    let mut x = 0.5 * (lo + hi);
    for _ in 0..300 {
        let [u, du, _] = field.eval_triple(t, x)?;
        if u.abs() <= ztol {
            return Ok(x);
        }
        if u * ulo > 0.0 {
            lo = x;
            ulo = u;
        } else {
            hi = x;
        }
        let newton = if du != 0.0 { x - u / du } else { f64::NAN };
        x = if newton.is_finite() && newton > lo && newton < hi {
            newton
        } else {
            0.5 * (lo + hi)
        };
        if hi - lo <= 2.0 * f64::EPSILON * x.abs().max(1.0) {
            // machine-width bracket: accept the midpoint only if within tol
            let um = field.eval_u(t, x, 0)?;
            if um.abs() <= ztol {
                return Ok(x);
            }
            return Err(ZeroError::Refine {
                t,
                x,
                message: format!("bracket collapsed with |u| = {} > {ztol}", um.abs()),
            });
        }
    }
    Err(ZeroError::Refine {
        t,
        x,
        message: "no convergence in 300 iterations".into(),
    })
}

/// Merge duplicate refinements of the same root (within `10⁻¹⁰` of the scan
/// width), keeping the smaller residual's representative, and sort by x.
fn dedup_zeros(zeros: &mut Vec<ZeroPoint>, width: f64) {
    zeros.sort_by(|p, q| p.x.total_cmp(&q.x));
    let tol = 1e-10 * width;
    let mut out: Vec<ZeroPoint> = Vec::with_capacity(zeros.len());
    for z in zeros.drain(..) {
        if let Some(last) = out.last() {
            if z.x - last.x <= tol {
                continue;
            }
        }
        out.push(z);
    }
    *zeros = out;
}

/// Zeros of `u(t,·)` over one full period of a periodic field, canonical
/// coordinates in `[−Λ/2, Λ/2)`, with the wrap-around duplicate removed.
pub fn find_zeros_torus<F: Field + ?Sized>(
    field: &F,
    t: f64,
    n_scan: usize,
) -> Result<Vec<ZeroPoint>, ZeroError> {
    let lambda = field.domain_length().ok_or_else(|| {
        ZeroError::Config("find_zeros_torus requires a periodic field".into())
    })?;
    let mut zeros = find_zeros(field, t, (-lambda / 2.0, lambda / 2.0), n_scan)?;
    if zeros.len() >= 2 {
        let first = zeros[0].x;
        let last = zeros.last().unwrap().x;
        if (first + lambda) - last <= 1e-10 * lambda {
            zeros.pop();
        }
    }
    Ok(zeros)
}

// ---------------------------------------------------------------------------
// Continuation in time
// ---------------------------------------------------------------------------

enum StepTrouble {
    /// |∂_x u| fell below the neutral window.
    Degenerate,
    /// Newton left its trust region or failed to converge.
    NoConverge,
    Field(FieldError),
}

/// One predictor–corrector move of a root from `(s0, x0)` to `s1`.
///
/// The predictor integrates `∂_s r = −∂_xx u / ∂_x u` (valid in both time
/// directions); the corrector is Newton on `u(s1, ·) = 0`. `trust` bounds how
/// far the corrector may move from the predicted position.
fn continue_step<F: Field + ?Sized>(
    field: &F,
    s0: f64,
    x0: f64,
    s1: f64,
    ztol1: f64,
    stol1: f64,
    trust: f64,
) -> Result<(f64, f64), StepTrouble> {
    let [_, ux0, uxx0] = field.eval_triple(s0, x0).map_err(StepTrouble::Field)?;
    if ux0.abs() < stol1 {
        return Err(StepTrouble::Degenerate);
    }
    let x_pred = x0 + (s1 - s0) * (-uxx0 / ux0);
    let mut x = x_pred;
    let mut slope = ux0;
    for _ in 0..12 {
        let [u, ux, _] = field.eval_triple(s1, x).map_err(StepTrouble::Field)?;
        slope = ux;
        if u.abs() <= ztol1 {
            if (x - x_pred).abs() > trust {
                return Err(StepTrouble::NoConverge);
            }
            return Ok((x, slope));
        }
        if ux.abs() < stol1 {
            return Err(StepTrouble::Degenerate);
        }
        x -= u / ux;
        if (x - x_pred).abs() > trust {
            return Err(StepTrouble::NoConverge);
        }
    }
    let _ = slope;
    Err(StepTrouble::NoConverge)
}

/// Continue a zero from `from.t` to `s_target` (either direction), returning
/// the curve with samples in increasing time order.
///
/// Downward continuation is the trace-back of a zero toward its origin;
/// upward continuation is used to verify round trips. Steps shrink when the
/// slope approaches the neutral window and the continuation aborts — with the
/// partial curve attached — if the slope degenerates entirely.
pub fn continue_zero<F: Field + ?Sized>(
    field: &F,
    from: &ZeroPoint,
    s_target: f64,
    cfg: &TraceConfig,
) -> Result<ZeroCurve, ZeroError> {
    cfg.validate()?;
    if from.kind == ZeroKind::Neutral {
        return Err(ZeroError::Config(
            "cannot continue a neutral zero (slope within the neutral window)".into(),
        ));
    }
    if s_target == from.t {
        return Err(ZeroError::Config("s_target must differ from from.t".into()));
    }
    if s_target < field.t_floor() || !(s_target > 0.0) && field.t_floor() > 0.0 {
        return Err(ZeroError::Config(format!(
            "s_target = {s_target} below the resolution floor {}",
            field.t_floor()
        )));
    }
    let down = s_target < from.t;

    let mut s = from.t;
    let mut x = from.x;
    let mut times = vec![s];
    let mut positions = vec![x];
    let mut slopes = vec![from.slope];
    let mut ds = 0.1 * cfg.max_step_frac * s;

    let make_curve = |times: Vec<f64>, positions: Vec<f64>, slopes: Vec<f64>| {
        let (mut times, mut positions, mut slopes) = (times, positions, slopes);
        if down {
            times.reverse();
            positions.reverse();
            slopes.reverse();
        }
        let origin_sign = if positions[0] >= 0.0 { 1 } else { -1 };
        ZeroCurve {
            id: 0,
            times,
            positions,
            slopes,
            kind: from.kind,
            origin_sign,
            death: None,
        }
    };

    loop {
        let remaining = if down { s - s_target } else { s_target - s };
        if remaining <= 1e-14 * s.max(s_target) {
            return Ok(make_curve(times, positions, slopes));
        }
        ds = ds
            .min(cfg.max_step_frac * s)
            .min(cfg.max_step)
            .min(remaining);
        let s1 = if down { s - ds } else { s + ds };
        let ztol1 = zero_tol(field, s1);
        let stol1 = slope_tol(field, s1);
        match continue_step(field, s, x, s1, ztol1, stol1, f64::INFINITY) {
            Ok((x1, slope1)) => {
                let kind1 = classify(slope1, stol1);
                if kind1 != from.kind {
                    if kind1 == ZeroKind::Neutral {
                        // entering the neutral window: resolve more finely
                        ds *= 0.25;
                        if ds < cfg.min_step_frac * s {
                            return Err(ZeroError::Trace {
                                s,
                                message: format!(
                                    "slope {slope1} entered the neutral window"
                                ),
                                partial: Box::new(make_curve(times, positions, slopes)),
                            });
                        }
                        continue;
                    }
                    return Err(ZeroError::Trace {
                        s,
                        message: format!(
                            "kind flipped from {} to {kind1} (slope {slope1})",
                            from.kind
                        ),
                        partial: Box::new(make_curve(times, positions, slopes)),
                    });
                }
                s = s1;
                x = x1;
                times.push(s);
                positions.push(x);
                slopes.push(slope1);
                // shrink near the neutral window, grow otherwise
                if slope1.abs() < 10.0 * stol1 {
                    ds *= 0.3;
                } else {
                    ds *= 1.5;
                }
            }
            Err(StepTrouble::Field(e)) => return Err(e.into()),
            Err(_) => {
                ds *= 0.5;
                if ds < cfg.min_step_frac * s {
                    return Err(ZeroError::Trace {
                        s,
                        message: "step size underflow in continuation".into(),
                        partial: Box::new(make_curve(times, positions, slopes)),
                    });
                }
            }
        }
    }
}

/// Trace a zero of `u(z.t, ·)` backward to `s_target < z.t`.
pub fn trace_zero<F: Field + ?Sized>(
    field: &F,
    z: &ZeroPoint,
    s_target: f64,
    cfg: &TraceConfig,
) -> Result<ZeroCurve, ZeroError> {
    if !(s_target < z.t) {
        return Err(ZeroError::Config(format!(
            "trace-back needs s_target < z.t, got {s_target} ≥ {}",
            z.t
        )));
    }
    continue_zero(field, z, s_target, cfg)
}

// ---------------------------------------------------------------------------
// Forward tracking with annihilation events
// ---------------------------------------------------------------------------

/// All zero curves of one environment on `[t_min, t_max]`, with events.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TrackedCurves {
    /// Every curve ever alive; `curves[i].id == i`. Dead curves carry their
    /// annihilation record.
    pub curves: Vec<ZeroCurve>,
    pub events: Vec<AnnihilationEvent>,
    pub t_min: f64,
    pub t_max: f64,
    pub interval: (f64, f64),
    /// Whether the tracked interval covers the full torus (cyclic adjacency).
    pub wrap: bool,
}

impl TrackedCurves {
    pub fn alive_ids(&self, t: f64) -> Vec<usize> {
        let mut ids: Vec<usize> = self
            .curves
            .iter()
            .filter(|c| c.alive_at(t))
            .map(|c| c.id)
            .collect();
        ids.sort_by(|&i, &j| {
            self.curves[i]
                .position_at(t)
                .unwrap()
                .total_cmp(&self.curves[j].position_at(t).unwrap())
        });
        ids
    }

    /// (stable, unstable) alive counts.
    pub fn kind_counts(&self, t: f64) -> (usize, usize) {
        let mut s = 0;
        let mut u = 0;
        for c in self.curves.iter().filter(|c| c.alive_at(t)) {
            match c.kind {
                ZeroKind::Stable => s += 1,
                ZeroKind::Unstable => u += 1,
                ZeroKind::Neutral => {}
            }
        }
        (s, u)
    }
}

/// Find all zeros at `t_min`, label each with the sign of its position, and
/// continue every curve forward to `t_max` with a shared adaptive step.
///
/// When a stable/unstable pair converges below [`merge_tol`] of the current
/// step the pair is annihilated and an event is recorded; no curve is ever
/// created after `t_min` (zero counts only decrease in time). Tracking the
/// full torus (`interval` spanning one period of a periodic field) uses
/// cyclic adjacency; sub-window tracking assumes no zero enters or leaves
/// through the boundary.
pub fn track_zero_curves<F: Field + ?Sized>(
    field: &F,
    t_min: f64,
    t_max: f64,
    interval: (f64, f64),
    cfg: &TraceConfig,
) -> Result<TrackedCurves, ZeroError> {
    cfg.validate()?;
    if !(t_min < t_max) {
        return Err(ZeroError::Config(format!(
            "need t_min < t_max, got {t_min} and {t_max}"
        )));
    }
    if t_min < field.t_floor() {
        return Err(ZeroError::Config(format!(
            "t_min = {t_min} below the resolution floor {}",
            field.t_floor()
        )));
    }
    let (a, b) = interval;
    let wrap = match field.domain_length() {
        Some(lambda) => (b - a) >= lambda * (1.0 - 1e-12),
        None => false,
    };

    // Seed scan at twice the minimum admissible density.
    let n_scan = (2.0 * (8.0 * (b - a) / t_min.sqrt()).ceil()).max(16.0) as usize;
    let mut zeros = find_zeros(field, t_min, interval, n_scan)?;
    if wrap && zeros.len() >= 2 {
        let lambda = field.domain_length().unwrap();
        let first = zeros[0].x;
        let last = zeros.last().unwrap().x;
        if (first + lambda) - last <= 1e-10 * lambda {
            zeros.pop();
        }
    }
    if zeros.iter().any(|z| z.kind == ZeroKind::Neutral) {
        return Err(ZeroError::Tracking {
            t: t_min,
            message: "neutral zero in the seed set; lower t_min or refine the scan".into(),
        });
    }

    let mut curves: Vec<ZeroCurve> = zeros
        .iter()
        .enumerate()
        .map(|(i, z)| ZeroCurve {
            id: i,
            times: vec![t_min],
            positions: vec![z.x],
            slopes: vec![z.slope],
            kind: z.kind,
            origin_sign: if z.x >= 0.0 { 1 } else { -1 },
            death: None,
        })
        .collect();
    let mut events: Vec<AnnihilationEvent> = Vec::new();

    // Alive curves in ascending-x order; positions/slopes mirror that order.
    let mut alive: Vec<usize> = (0..curves.len()).collect();
    let mut xs: Vec<f64> = zeros.iter().map(|z| z.x).collect();
    check_alternation(&curves, &alive, wrap).map_err(|msg| ZeroError::Tracking {
        t: t_min,
        message: msg,
    })?;

    let lambda = field.domain_length().unwrap_or(f64::INFINITY);
    let mut s = t_min;
    let mut ds = 0.05 * cfg.max_step_frac * t_min;
    let record_death = |curves: &mut Vec<ZeroCurve>,
                        events: &mut Vec<AnnihilationEvent>,
                        i: usize,
                        j: usize,
                        t_star: f64,
                        x_star: f64| {
        let (st, un) = if curves[i].kind == ZeroKind::Stable {
            (i, j)
        } else {
            (j, i)
        };
        for &c in &[i, j] {
            // For a pair annihilating across the periodic cut the canonical
            // merge point sits a full period away from one curve's samples;
            // store the representative continuous with each curve's own path
            // so interpolation near the death never sweeps the torus.
            let last = *curves[c].positions.last().unwrap();
            let x_c = if lambda.is_finite() {
                x_star + lambda * ((last - x_star) / lambda).round()
            } else {
                x_star
            };
            curves[c].death = Some((t_star, x_c));
            curves[c].times.push(t_star);
            curves[c].positions.push(x_c);
            curves[c].slopes.push(0.0);
        }
        events.push(AnnihilationEvent {
            t: t_star,
            x: x_star,
            curve_stable: st,
            curve_unstable: un,
        });
    };

    while s < t_max - 1e-14 * t_max && !alive.is_empty() {
        ds = ds
            .min(cfg.max_step_frac * s)
            .min(cfg.max_step)
            .min(t_max - s);
        let s1 = s + ds;
        let tol = merge_tol(ds);
        let ztol1 = zero_tol(field, s1);
        let stol1 = slope_tol(field, s1);

        // Trial continuation of every alive curve.
        let mut new_xs = vec![0.0f64; alive.len()];
        let mut new_slopes = vec![0.0f64; alive.len()];
        let mut trouble: Option<usize> = None;
        for (k, &_id) in alive.iter().enumerate() {
            let gap_prev = adjacent_gap(&xs, k, wrap, lambda, true);
            let gap_next = adjacent_gap(&xs, k, wrap, lambda, false);
            let trust = (0.45 * gap_prev.min(gap_next)).max(8.0 * tol);
            match continue_step(field, s, xs[k], s1, ztol1, stol1, trust) {
                Ok((x1, sl1)) => {
                    // kind persistence at the new time
                    let ck = curves[alive[k]].kind;
                    if classify(sl1, stol1) != ck && sl1.abs() >= stol1 {
                        trouble = Some(k);
                        break;
                    }
                    new_xs[k] = x1;
                    new_slopes[k] = sl1;
                    if sl1.abs() < stol1 {
                        trouble = Some(k);
                        break;
                    }
                }
                Err(StepTrouble::Field(e)) => return Err(e.into()),
                Err(_) => {
                    trouble = Some(k);
                    break;
                }
            }
        }

        if let Some(k) = trouble {
            // A failing curve adjacent to a close opposite-kind partner is an
            // annihilation being squeezed; merge the pair and retry the step.
            let rescue = closest_opposite_neighbor(&curves, &alive, &xs, k, wrap, lambda);
            if let Some((j, dist)) = rescue {
                if dist <= 4.0 * tol {
                    let x_star = pair_midpoint(xs[k], xs[j], wrap, lambda);
                    record_death(&mut curves, &mut events, alive[k], alive[j], s1, x_star);
                    remove_pair(&mut alive, &mut xs, k, j);
                    continue;
                }
            }
            ds *= 0.5;
            if ds < cfg.min_step_frac * s {
                return Err(ZeroError::Tracking {
                    t: s,
                    message: "step underflow while a curve resists continuation".into(),
                });
            }
            continue;
        }

        // Ordering must be preserved (curves cannot cross).
        if !ordering_ok(&new_xs, wrap, lambda) {
            ds *= 0.5;
            if ds < cfg.min_step_frac * s {
                return Err(ZeroError::Tracking {
                    t: s,
                    message: "curve ordering flipped at the smallest step".into(),
                });
            }
            continue;
        }

        // Same-kind near-collision means structure was missed: refine.
        let mut same_kind_close = false;
        for k in 0..alive.len() {
            let j = next_index(k, alive.len(), wrap);
            let Some(j) = j else { continue };
            let d = wrap_gap(new_xs[k], new_xs[j], wrap, lambda);
            if d < tol && curves[alive[k]].kind == curves[alive[j]].kind {
                same_kind_close = true;
                break;
            }
        }
        if same_kind_close {
            ds *= 0.5;
            if ds < cfg.min_step_frac * s {
                return Err(ZeroError::Tracking {
                    t: s,
                    message: "same-kind curves converging at the smallest step".into(),
                });
            }
            continue;
        }

        // Commit the step.
        for (k, &id) in alive.iter().enumerate() {
            curves[id].times.push(s1);
            curves[id].positions.push(new_xs[k]);
            curves[id].slopes.push(new_slopes[k]);
        }
        xs = new_xs;

        // Post-step merges: converging opposite-kind pairs below merge_tol.
        loop {
            let mut merged = false;
            for k in 0..alive.len() {
                let Some(j) = next_index(k, alive.len(), wrap) else {
                    continue;
                };
                if curves[alive[k]].kind == curves[alive[j]].kind {
                    continue;
                }
                let d = wrap_gap(xs[k], xs[j], wrap, lambda);
                if d < tol {
                    let x_star = pair_midpoint(xs[k], xs[j], wrap, lambda);
                    // rewrite the just-pushed samples as the death samples
                    for &c in &[alive[k], alive[j]] {
                        curves[c].times.pop();
                        curves[c].positions.pop();
                        curves[c].slopes.pop();
                    }
                    record_death(&mut curves, &mut events, alive[k], alive[j], s1, x_star);
                    remove_pair(&mut alive, &mut xs, k, j);
                    merged = true;
                    break;
                }
            }
            if !merged {
                break;
            }
        }

        s = s1;
        ds *= 1.3;
    }

    Ok(TrackedCurves {
        curves,
        events,
        t_min,
        t_max,
        interval,
        wrap,
    })
}

/// Index of the next curve in ascending-x order, cyclic when wrapping.
fn next_index(k: usize, n: usize, wrap: bool) -> Option<usize> {
    if k + 1 < n {
        Some(k + 1)
    } else if wrap && n >= 2 {
        Some(0)
    } else {
        None
    }
}

fn wrap_gap(x_low: f64, x_high: f64, wrap: bool, lambda: f64) -> f64 {
    if wrap && x_high < x_low {
        x_high + lambda - x_low
    } else {
        x_high - x_low
    }
}

fn adjacent_gap(xs: &[f64], k: usize, wrap: bool, lambda: f64, prev: bool) -> f64 {
    let n = xs.len();
    if n <= 1 {
        return f64::INFINITY;
    }
    if prev {
        if k > 0 {
            xs[k] - xs[k - 1]
        } else if wrap {
            xs[0] + lambda - xs[n - 1]
        } else {
            f64::INFINITY
        }
    } else if k + 1 < n {
        xs[k + 1] - xs[k]
    } else if wrap {
        xs[0] + lambda - xs[n - 1]
    } else {
        f64::INFINITY
    }
}

fn closest_opposite_neighbor(
    curves: &[ZeroCurve],
    alive: &[usize],
    xs: &[f64],
    k: usize,
    wrap: bool,
    lambda: f64,
) -> Option<(usize, f64)> {
    let n = alive.len();
    if n < 2 {
        return None;
    }
    let mut best: Option<(usize, f64)> = None;
    let neighbors = [
        if k > 0 {
            Some(k - 1)
        } else if wrap {
            Some(n - 1)
        } else {
            None
        },
        if k + 1 < n {
            Some(k + 1)
        } else if wrap {
            Some(0)
        } else {
            None
        },
    ];
    for j in neighbors.into_iter().flatten() {
        if j == k || curves[alive[j]].kind == curves[alive[k]].kind {
            continue;
        }
        let d = {
            let raw = (xs[j] - xs[k]).abs();
            if wrap { raw.min(lambda - raw) } else { raw }
        };
        if best.map_or(true, |(_, bd)| d < bd) {
            best = Some((j, d));
        }
    }
    best
}

fn pair_midpoint(xi: f64, xj: f64, wrap: bool, lambda: f64) -> f64 {
    if wrap && (xi - xj).abs() > lambda / 2.0 {
        // straddling the cut: average on the circle
        let m = 0.5 * (xi + xj) + lambda / 2.0;
        if m > lambda / 2.0 {
            m - lambda
        } else {
            m
        }
    } else {
        0.5 * (xi + xj)
    }
}

fn remove_pair(alive: &mut Vec<usize>, xs: &mut Vec<f64>, k: usize, j: usize) {
    let (hi, lo) = if k > j { (k, j) } else { (j, k) };
    alive.remove(hi);
    alive.remove(lo);
    xs.remove(hi);
    xs.remove(lo);
}

fn ordering_ok(xs: &[f64], wrap: bool, lambda: f64) -> bool {
    for w in xs.windows(2) {
        if !(w[1] > w[0]) {
            return false;
        }
    }
    if wrap && xs.len() >= 2 {
        let span = xs[xs.len() - 1] - xs[0];
        if span >= lambda {
            return false;
        }
    }
    true
}

fn check_alternation(curves: &[ZeroCurve], alive: &[usize], wrap: bool) -> Result<(), String> {
    let n = alive.len();
    for k in 0..n {
        let Some(j) = next_index(k, n, wrap) else {
            continue;
        };
        if curves[alive[k]].kind == curves[alive[j]].kind {
            return Err(format!(
                "seed zeros {} and {} are adjacent with equal kind {}",
                alive[k], alive[j], curves[alive[k]].kind
            ));
        }
    }
    Ok(())
}

// ---------------------------------------------------------------------------
// Frontier and the Z path
// ---------------------------------------------------------------------------

/// The frontier at one time: the rightmost negative-origin zero `l`, the
/// leftmost positive-origin zero `r`, and the stable one of the two, `z`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Frontier {
    pub t: f64,
    pub l: f64,
    pub r: f64,
    pub z: f64,
    pub l_kind: ZeroKind,
    pub r_kind: ZeroKind,
    pub l_id: usize,
    pub r_id: usize,
}

impl Frontier {
    /// Curve id carrying `z`.
    pub fn z_id(&self) -> usize {
        if self.l_kind == ZeroKind::Stable {
            self.l_id
        } else {
            self.r_id
        }
    }
}

/// Compute the frontier, returning any stable/unstable-alternative violation
/// as a note instead of an error (the caller logs it).
fn frontier_at(tracked: &TrackedCurves, t: f64) -> Result<(Frontier, Option<String>), ZeroError> {
    if t < tracked.t_min || t > tracked.t_max {
        return Err(ZeroError::Config(format!(
            "query time {t} outside the tracked range [{}, {}]",
            tracked.t_min, tracked.t_max
        )));
    }
    let mut l: Option<(f64, usize)> = None;
    let mut r: Option<(f64, usize)> = None;
    for c in tracked.curves.iter().filter(|c| c.alive_at(t)) {
        let x = c.position_at(t).unwrap();
        if c.origin_sign < 0 {
            if l.map_or(true, |(lx, _)| x > lx) {
                l = Some((x, c.id));
            }
        } else if r.map_or(true, |(rx, _)| x < rx) {
            r = Some((x, c.id));
        }
    }
    let (lx, lid) = l.ok_or_else(|| ZeroError::Frontier {
        t,
        message: "no negative-origin curve alive".into(),
    })?;
    let (rx, rid) = r.ok_or_else(|| ZeroError::Frontier {
        t,
        message: "no positive-origin curve alive".into(),
    })?;
    if !(lx < rx) {
        return Err(ZeroError::Frontier {
            t,
            message: format!("order violated: l = {lx} ≥ r = {rx}"),
        });
    }
    let lk = tracked.curves[lid].kind;
    let rk = tracked.curves[rid].kind;
    let note = if lk == rk {
        Some(format!("both frontier curves {lk} at t = {t}"))
    } else {
        None
    };
    let z = if lk == ZeroKind::Stable { lx } else { rx };
    Ok((
        Frontier {
            t,
            l: lx,
            r: rx,
            z,
            l_kind: lk,
            r_kind: rk,
            l_id: lid,
            r_id: rid,
        },
        note,
    ))
}

/// The frontier at time `t`; errors if a side is empty, the order is
/// violated, or both sides have the same kind.
pub fn frontier(tracked: &TrackedCurves, t: f64) -> Result<Frontier, ZeroError> {
    let (f, note) = frontier_at(tracked, t)?;
    if let Some(message) = note {
        return Err(ZeroError::Frontier { t, message });
    }
    Ok(f)
}

/// A recorded discontinuity of one of the frontier paths.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PathJump {
    pub t: f64,
    /// Left limit (the annihilation location when an event explains the jump).
    pub from: f64,
    pub to: f64,
    /// Index into `TrackedCurves::events`, when the jump is explained by an
    /// annihilation consuming the carrying curve.
    pub event: Option<usize>,
}

/// The three frontier paths on a grid, with explicit jumps.
#[derive(Debug, Clone)]
pub struct FrontierPaths {
    pub z: CadlagPath,
    pub l: CadlagPath,
    pub r: CadlagPath,
    pub z_jumps: Vec<PathJump>,
    /// Times where the stable/unstable alternative failed, with descriptions;
    /// logged, never silently repaired.
    pub violations: Vec<(f64, String)>,
}

#[derive(Clone, Copy)]
enum Side {
    L,
    R,
    Z,
}

impl Side {
    fn pick(self, f: &Frontier) -> (usize, f64) {
        match self {
            Side::L => (f.l_id, f.l),
            Side::R => (f.r_id, f.r),
            Side::Z => (f.z_id(), f.z),
        }
    }
}

/// Evaluate the frontier on `t_grid` and assemble right-continuous paths for
/// Z, L and R with jump breakpoints inserted at the annihilation events that
/// consume the carrying curve.
pub fn z_path(tracked: &TrackedCurves, t_grid: &[f64]) -> Result<FrontierPaths, ZeroError> {
    if t_grid.len() < 2 {
        return Err(ZeroError::Config("need at least two grid times".into()));
    }
    for w in t_grid.windows(2) {
        if !(w[1] > w[0]) {
            return Err(ZeroError::Config(
                "grid times must be strictly increasing".into(),
            ));
        }
    }
    let mut frontiers = Vec::with_capacity(t_grid.len());
    let mut violations: Vec<(f64, String)> = Vec::new();
    for &t in t_grid {
        let (f, note) = frontier_at(tracked, t)?;
        if let Some(msg) = note {
            violations.push((t, msg));
        }
        frontiers.push(f);
    }

    let mut z_jumps = Vec::new();
    let z = build_side_path(
        tracked,
        t_grid,
        &frontiers,
        Side::Z,
        Some(&mut z_jumps),
        &mut violations,
    )?;
    let l = build_side_path(tracked, t_grid, &frontiers, Side::L, None, &mut violations)?;
    let r = build_side_path(tracked, t_grid, &frontiers, Side::R, None, &mut violations)?;
    Ok(FrontierPaths {
        z,
        l,
        r,
        z_jumps,
        violations,
    })
}

fn build_side_path(
    tracked: &TrackedCurves,
    t_grid: &[f64],
    frontiers: &[Frontier],
    side: Side,
    mut jumps: Option<&mut Vec<PathJump>>,
    violations: &mut Vec<(f64, String)>,
) -> Result<CadlagPath, ZeroError> {
    let mut bp: Vec<f64> = Vec::new();
    let mut vals: Vec<f64> = Vec::new();
    let mut lefts: Vec<f64> = Vec::new();

    let (mut cur_id, v0) = side.pick(&frontiers[0]);
    bp.push(t_grid[0]);
    vals.push(v0);
    lefts.push(v0);

    let push_jump = |bp: &mut Vec<f64>,
                     vals: &mut Vec<f64>,
                     lefts: &mut Vec<f64>,
                     jumps: &mut Option<&mut Vec<PathJump>>,
                     t: f64,
                         from: f64,
                         to: f64,
                         event: Option<usize>| {
        if let Some(&last) = bp.last() {
            if t == last {
                // double event at one breakpoint: keep the first left limit
                let from0 = lefts.pop().unwrap();
                vals.pop();
                vals.push(to);
                lefts.push(if vals.len() == 1 { to } else { from0 });
                if let Some(js) = jumps.as_deref_mut() {
                    if let Some(j) = js.last_mut() {
                        j.to = to;
                    }
                }
                return;
            }
        }
        bp.push(t);
        vals.push(to);
        lefts.push(from);
        if let Some(js) = jumps.as_deref_mut() {
            js.push(PathJump { t, from, to, event });
        }
    };

    for i in 1..t_grid.len() {
        let (id_i, v_i) = side.pick(&frontiers[i]);
        let t_i = t_grid[i];
        // chain through every death of the carrying curve inside (t_{i-1}, t_i]
        let mut guard = 0;
        while cur_id != id_i {
            guard += 1;
            if guard > tracked.events.len() + 2 {
                break;
            }
            let death = tracked.curves[cur_id].death;
            match death {
                Some((td, xd)) if td <= t_i => {
                    let ev = tracked
                        .events
                        .iter()
                        .position(|e| e.curve_stable == cur_id || e.curve_unstable == cur_id);
                    let (nf, note) = frontier_at(tracked, td)?;
                    if let Some(msg) = note {
                        violations.push((td, msg));
                    }
                    let (next_id, next_v) = side.pick(&nf);
                    push_jump(
                        &mut bp, &mut vals, &mut lefts, &mut jumps, td, xd, next_v, ev,
                    );
                    cur_id = next_id;
                }
                _ => {
                    // identity changed without the carrying curve dying
                    violations.push((
                        t_i,
                        format!(
                            "carrying curve {cur_id} replaced by {id_i} without an event"
                        ),
                    ));
                    let from = tracked.curves[cur_id]
                        .position_at(t_i)
                        .unwrap_or(*vals.last().unwrap());
                    push_jump(
                        &mut bp, &mut vals, &mut lefts, &mut jumps, t_i, from, v_i, None,
                    );
                    cur_id = id_i;
                }
            }
        }
        if *bp.last().unwrap() < t_i {
            bp.push(t_i);
            vals.push(v_i);
            lefts.push(v_i);
        }
    }
    Ok(CadlagPath::new(bp, vals, lefts, Interpolation::PiecewiseLinear)?)
}

// ---------------------------------------------------------------------------
// CSV export
// ---------------------------------------------------------------------------

/// Curve samples as CSV: `curve_id,t,x,kind,origin_sign`.
pub fn curves_csv(tracked: &TrackedCurves) -> String {
    let mut out = String::from("curve_id,t,x,kind,origin_sign\n");
    for c in &tracked.curves {
        for (t, x) in c.times.iter().zip(&c.positions) {
            out.push_str(&format!(
                "{},{},{},{},{}\n",
                c.id, t, x, c.kind, c.origin_sign
            ));
        }
    }
    out
}

/// Annihilation events as CSV: `t,x,curve_id_stable,curve_id_unstable`.
pub fn events_csv(tracked: &TrackedCurves) -> String {
    let mut out = String::from("t,x,curve_id_stable,curve_id_unstable\n");
    for e in &tracked.events {
        out.push_str(&format!(
            "{},{},{},{}\n",
            e.t, e.x, e.curve_stable, e.curve_unstable
        ));
    }
    out
}
