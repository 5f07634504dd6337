//! Càdlàg paths on a compact interval and the diagnostics used to certify
//! convergence in the M1 sense: uniform distance, the two-path local
//! oscillation `v(f,g,t,δ)`, and the one-path M1 oscillation `w_s(f,t,δ)`
//! (how far a middle value overshoots the segment spanned by an earlier and a
//! later value).
//!
//! For piecewise-linear and piecewise-constant paths every supremum here is
//! attained at a breakpoint, a left limit at a breakpoint, or a window edge,
//! so all quantities are computed exactly rather than sampled.

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Clone, Error, PartialEq)]
pub enum CadlagError {
    #[error("invalid path: {0}")]
    Config(String),
    #[error("paths must share the same domain (got [{a0}, {a1}] vs [{b0}, {b1}])")]
    DomainMismatch { a0: f64, a1: f64, b0: f64, b1: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Interpolation {
    PiecewiseLinear,
    PiecewiseConstant,
}

/// A right-continuous path with left limits on `[first breakpoint, last
/// breakpoint]`. `values[i]` is the right limit at `breakpoints[i]`,
/// `left_limits[i]` the limit from below (equal to `values[i]` where the path
/// is continuous). Between breakpoints the path follows the interpolation
/// mode; jumps happen only at breakpoints.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CadlagPath {
    breakpoints: Vec<f64>,
    values: Vec<f64>,
    left_limits: Vec<f64>,
    interpolation: Interpolation,
}

/// One CSV row of a serialized path.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PathRow {
    pub t: f64,
    pub value: f64,
    pub left_limit: f64,
    pub is_jump: bool,
}

impl CadlagPath {
    /// Continuous piecewise-linear path through `(breakpoints[i], values[i])`.
    pub fn piecewise_linear(breakpoints: Vec<f64>, values: Vec<f64>) -> Result<Self, CadlagError> {
        let left = values.clone();
        Self::new(breakpoints, values, left, Interpolation::PiecewiseLinear)
    }

    /// Step path: `f = values[i]` on `[breakpoints[i], breakpoints[i+1])`.
    pub fn piecewise_constant(
        breakpoints: Vec<f64>,
        values: Vec<f64>,
    ) -> Result<Self, CadlagError> {
        if values.is_empty() {
            return Err(CadlagError::Config("empty path".into()));
        }
        let mut left = Vec::with_capacity(values.len());
        left.push(values[0]);
        left.extend_from_slice(&values[..values.len() - 1]);
        Self::new(breakpoints, values, left, Interpolation::PiecewiseConstant)
    }

    /// General constructor with explicit left limits (piecewise-linear
    /// segments run from `values[i]` to `left_limits[i+1]`).
    pub fn new(
        breakpoints: Vec<f64>,
        values: Vec<f64>,
        left_limits: Vec<f64>,
        interpolation: Interpolation,
    ) -> Result<Self, CadlagError> {
        let n = breakpoints.len();
        if n == 0 {
            return Err(CadlagError::Config("empty path".into()));
        }
        if values.len() != n || left_limits.len() != n {
            return Err(CadlagError::Config(format!(
                "length mismatch: {} breakpoints, {} values, {} left limits",
                n,
                values.len(),
                left_limits.len()
            )));
        }
        for w in breakpoints.windows(2) {
            if !(w[1] > w[0]) {
                return Err(CadlagError::Config(format!(
                    "breakpoints must be strictly increasing ({} then {})",
                    w[0], w[1]
                )));
            }
        }
        for &x in breakpoints.iter().chain(&values).chain(&left_limits) {
            if !x.is_finite() {
                return Err(CadlagError::Config(format!("non-finite entry {x}")));
            }
        }
        if left_limits[0] != values[0] {
            return Err(CadlagError::Config(
                "no jump at the domain start: left_limits[0] must equal values[0]".into(),
            ));
        }
        if interpolation == Interpolation::PiecewiseConstant {
            for i in 1..n {
                if left_limits[i] != values[i - 1] {
                    return Err(CadlagError::Config(format!(
                        "piecewise-constant path must have left_limits[{i}] = values[{}]",
                        i - 1
                    )));
                }
            }
        }
        Ok(CadlagPath {
            breakpoints,
            values,
            left_limits,
            interpolation,
        })
    }

    pub fn domain(&self) -> (f64, f64) {
        (self.breakpoints[0], *self.breakpoints.last().unwrap())
    }

    pub fn breakpoints(&self) -> &[f64] {
        &self.breakpoints
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn left_limits(&self) -> &[f64] {
        &self.left_limits
    }

    pub fn interpolation(&self) -> Interpolation {
        self.interpolation
    }

    /// Index of the last breakpoint ≤ t (t clamped to the domain).
    fn seg_index(&self, t: f64) -> usize {
        match self
            .breakpoints
            .partition_point(|&b| b <= t)
        {
            0 => 0,
            k => k - 1,
        }
    }

    /// Right-continuous value at `t` (clamped to the domain).
    pub fn eval(&self, t: f64) -> f64 {
        let (d0, d1) = self.domain();
        let t = t.clamp(d0, d1);
        let i = self.seg_index(t);
        if i + 1 >= self.breakpoints.len() || t == self.breakpoints[i] {
            return self.values[i];
        }
        match self.interpolation {
            Interpolation::PiecewiseConstant => self.values[i],
            Interpolation::PiecewiseLinear => {
                let (t0, t1) = (self.breakpoints[i], self.breakpoints[i + 1]);
                let frac = (t - t0) / (t1 - t0);
                self.values[i] + frac * (self.left_limits[i + 1] - self.values[i])
            }
        }
    }

    /// Left limit at `t` (equals `eval` away from breakpoints; at the domain
    /// start the path value itself).
    pub fn eval_left(&self, t: f64) -> f64 {
        let (d0, d1) = self.domain();
        let t = t.clamp(d0, d1);
        let i = self.seg_index(t);
        if t == self.breakpoints[i] {
            return self.left_limits[i];
        }
        match self.interpolation {
            Interpolation::PiecewiseConstant => self.values[i],
            Interpolation::PiecewiseLinear => self.eval(t),
        }
    }

    /// CSV-ready rows: `(t, value, left_limit, is_jump)`.
    pub fn rows(&self) -> Vec<PathRow> {
        (0..self.breakpoints.len())
            .map(|i| PathRow {
                t: self.breakpoints[i],
                value: self.values[i],
                left_limit: self.left_limits[i],
                is_jump: self.left_limits[i] != self.values[i],
            })
            .collect()
    }

    /// Times and values attainable (as values or limits) inside `[a, b]`,
    /// in time order with left limits listed before right values.
    fn window_events(&self, a: f64, b: f64) -> Vec<(f64, f64)> {
        let mut ev = Vec::new();
        ev.push((a, self.eval(a)));
        for i in 0..self.breakpoints.len() {
            let t = self.breakpoints[i];
            if t > a && t < b {
                ev.push((t, self.left_limits[i]));
                ev.push((t, self.values[i]));
            }
        }
        if b > a {
            ev.push((b, self.eval_left(b)));
            ev.push((b, self.eval(b)));
        }
        ev
    }

    fn window_clipped(&self, t: f64, delta: f64) -> (f64, f64) {
        let (d0, d1) = self.domain();
        (((t - delta).max(d0)).min(d1), ((t + delta).min(d1)).max(d0))
    }

    fn extrema_on(&self, a: f64, b: f64) -> (f64, f64) {
        let ev = self.window_events(a, b);
        let mut lo = f64::INFINITY;
        let mut hi = f64::NEG_INFINITY;
        for &(_, v) in &ev {
            lo = lo.min(v);
            hi = hi.max(v);
        }
        (lo, hi)
    }
}

fn check_same_domain(f: &CadlagPath, g: &CadlagPath) -> Result<(), CadlagError> {
    let (a0, a1) = f.domain();
    let (b0, b1) = g.domain();
    if a0 != b0 || a1 != b1 {
        return Err(CadlagError::DomainMismatch { a0, a1, b0, b1 });
    }
    Ok(())
}

/// Distance from `a` to the segment spanned by `b` and `c`:
/// `min_{τ∈[0,1]} |a − (τ b + (1−τ) c)|`; zero iff `a` lies between them.
pub fn segment_distance(a: f64, b: f64, c: f64) -> f64 {
    let lo = b.min(c);
    let hi = b.max(c);
    if a < lo {
        lo - a
    } else if a > hi {
        a - hi
    } else {
        0.0
    }
}

/// Two-path local oscillation
/// `v(f,g,t,δ) = sup{|f(t₁) − g(t₂)| : t₁,t₂ in the δ-window around t}`,
/// the window clipped to the (shared) domain. Exact for both interpolation
/// modes: extrema sit at breakpoints, their left limits, or window edges.
pub fn oscillation_v(
    f: &CadlagPath,
    g: &CadlagPath,
    t: f64,
    delta: f64,
) -> Result<f64, CadlagError> {
    check_same_domain(f, g)?;
    let (a, b) = f.window_clipped(t, delta.max(0.0));
    let (f_lo, f_hi) = f.extrema_on(a, b);
    let (g_lo, g_hi) = g.extrema_on(a, b);
    Ok((f_hi - g_lo).max(g_hi - f_lo).max(0.0))
}

/// M1 oscillation
/// `w_s(f,t,δ) = sup{‖f(t₂) − [f(t₁), f(t₃)]‖ : t₁ < t₂ < t₃ in the window}`:
/// the largest amount by which a middle value escapes the segment spanned by
/// an earlier and a later value. Zero for paths monotone on the window
/// (single jumps included).
///
/// Computed in O(n) with prefix/suffix envelopes: for each middle candidate
/// `m`, the best flanking pair realizes
/// `max(m − max(min_before, min_after), min(max_before, max_after) − m)`.
pub fn oscillation_ws(f: &CadlagPath, t: f64, delta: f64) -> f64 {
    let (a, b) = f.window_clipped(t, delta.max(0.0));
    let vals: Vec<f64> = f.window_events(a, b).into_iter().map(|(_, v)| v).collect();
    let n = vals.len();
    if n < 3 {
        return 0.0;
    }
    let mut min_pre = vec![0.0; n];
    let mut max_pre = vec![0.0; n];
    let mut min_suf = vec![0.0; n];
    let mut max_suf = vec![0.0; n];
    min_pre[0] = vals[0];
    max_pre[0] = vals[0];
    for i in 1..n {
        min_pre[i] = min_pre[i - 1].min(vals[i]);
        max_pre[i] = max_pre[i - 1].max(vals[i]);
    }
    min_suf[n - 1] = vals[n - 1];
    max_suf[n - 1] = vals[n - 1];
    for i in (0..n - 1).rev() {
        min_suf[i] = min_suf[i + 1].min(vals[i]);
        max_suf[i] = max_suf[i + 1].max(vals[i]);
    }
    let mut best: f64 = 0.0;
    for j in 1..n - 1 {
        let up = vals[j] - min_pre[j - 1].max(min_suf[j + 1]);
        let down = max_pre[j - 1].min(max_suf[j + 1]) - vals[j];
        best = best.max(up).max(down);
    }
    best
}

/// Cubic-scan reference for [`oscillation_ws`]: explicit supremum over all
/// ordered event triples. Kept as the correctness oracle for the fast path.
pub fn oscillation_ws_by_scan(f: &CadlagPath, t: f64, delta: f64) -> f64 {
    let (a, b) = f.window_clipped(t, delta.max(0.0));
    let vals: Vec<f64> = f.window_events(a, b).into_iter().map(|(_, v)| v).collect();
    let n = vals.len();
    let mut best: f64 = 0.0;
    for i in 0..n {
        for j in i + 1..n {
            for k in j + 1..n {
                best = best.max(segment_distance(vals[j], vals[i], vals[k]));
            }
        }
    }
    best
}

/// `sup_t |f(t) − g(t)|`, exact via the union of breakpoints (left limits
/// included).
pub fn uniform_distance(f: &CadlagPath, g: &CadlagPath) -> Result<f64, CadlagError> {
    check_same_domain(f, g)?;
    let mut times: Vec<f64> = f
        .breakpoints
        .iter()
        .chain(g.breakpoints.iter())
        .copied()
        .collect();
    times.sort_unstable_by(|a, b| a.partial_cmp(b).unwrap());
    times.dedup();
    let mut best: f64 = 0.0;
    for &t in &times {
        best = best.max((f.eval(t) - g.eval(t)).abs());
        best = best.max((f.eval_left(t) - g.eval_left(t)).abs());
    }
    Ok(best)
}

/// Vertices of the completed graph: the path polyline in the (t, value)
/// plane with jumps traversed as vertical segments.
fn completed_graph(f: &CadlagPath) -> Vec<(f64, f64)> {
    let mut verts: Vec<(f64, f64)> = vec![(f.breakpoints[0], f.values[0])];
    for i in 1..f.breakpoints.len() {
        let t = f.breakpoints[i];
        let pre = (t, f.left_limits[i]);
        if *verts.last().unwrap() != pre {
            verts.push(pre);
        }
        let post = (t, f.values[i]);
        if *verts.last().unwrap() != post {
            verts.push(post);
        }
    }
    verts
}

/// Points on the completed graph at the given arclength fractions plus all
/// polyline vertices (so consecutive samples always lie on one segment).
fn sample_graph(verts: &[(f64, f64)], fractions: &[f64]) -> Vec<(f64, f64)> {
    let mut cum = vec![0.0];
    for w in verts.windows(2) {
        let d = (w[1].0 - w[0].0).abs() + (w[1].1 - w[0].1).abs();
        cum.push(cum.last().unwrap() + d);
    }
    let total = *cum.last().unwrap();
    if total == 0.0 {
        return vec![verts[0]];
    }
    let mut targets: Vec<f64> = fractions.iter().map(|f| f * total).collect();
    targets.extend(cum.iter().copied());
    targets.sort_unstable_by(|a, b| a.partial_cmp(b).unwrap());
    targets.dedup();
    let mut out = Vec::with_capacity(targets.len());
    let mut seg = 0usize;
    for &s in &targets {
        while seg + 2 < cum.len() && cum[seg + 1] < s {
            seg += 1;
        }
        let len = cum[seg + 1] - cum[seg];
        let frac = if len > 0.0 { (s - cum[seg]) / len } else { 0.0 };
        let (p, q) = (verts[seg], verts[seg + 1]);
        out.push((p.0 + frac.clamp(0.0, 1.0) * (q.0 - p.0), p.1 + frac.clamp(0.0, 1.0) * (q.1 - p.1)));
    }
    out
}

/// Upper bound on the M1 distance between `f` and `g`.
///
/// Both completed graphs are discretized along arclength at dyadic fractions
/// (the largest dyadic level with at most `n_param` points, vertices always
/// included) and aligned by a monotone dynamic program minimizing the largest
/// pairwise `max(|Δt|, |Δvalue|)`. Linear interpolation of an alignment is a
/// genuine pair of parametrizations of the graphs, so the result bounds the
/// M1 distance from above; dyadic nesting makes it non-increasing in
/// `n_param`, and it converges to the distance as `n_param` grows.
///
/// Requires `n_param` at least the breakpoint count of both paths.
pub fn m1_upper_bound(
    f: &CadlagPath,
    g: &CadlagPath,
    n_param: usize,
) -> Result<f64, CadlagError> {
    check_same_domain(f, g)?;
    let need = f.breakpoints.len().max(g.breakpoints.len());
    if n_param < need {
        return Err(CadlagError::Config(format!(
            "n_param = {n_param} is below the breakpoint count {need}"
        )));
    }
    // Largest dyadic level with 2^j + 1 ≤ n_param (so sample sets nest).
    let mut level: u32 = 0;
    while (1usize << (level + 1)) + 1 <= n_param && level < 24 {
        level += 1;
    }
    let steps = 1usize << level;
    let fractions: Vec<f64> = (0..=steps).map(|k| k as f64 / steps as f64).collect();
    let pf = sample_graph(&completed_graph(f), &fractions);
    let pg = sample_graph(&completed_graph(g), &fractions);

    let cost = |a: (f64, f64), b: (f64, f64)| (a.0 - b.0).abs().max((a.1 - b.1).abs());
    let (n, m) = (pf.len(), pg.len());
    let mut prev = vec![f64::INFINITY; m];
    let mut cur = vec![f64::INFINITY; m];
    for i in 0..n {
        for j in 0..m {
            let c = cost(pf[i], pg[j]);
            let reach = if i == 0 && j == 0 {
                0.0
            } else {
                let mut r = f64::INFINITY;
                if i > 0 {
                    r = r.min(prev[j]);
                    if j > 0 {
                        r = r.min(prev[j - 1]);
                    }
                }
                if j > 0 {
                    r = r.min(cur[j - 1]);
                }
                r
            };
            cur[j] = c.max(reach);
        }
        std::mem::swap(&mut prev, &mut cur);
    }
    Ok(prev[m - 1])
}
