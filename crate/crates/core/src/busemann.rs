//! Busemann functions of timelike lines on the cover.

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::action::{maximize_between, ActionOptions};
use crate::curve::{chord_length, chord_length_midpoint, Parametrization, SampledCurve};
use crate::distance::{distance, max_null_slope, periodic_maximizer, random_causal_step, DistanceOptions, GridSpec};
use crate::error::{LabError, Result};
use crate::foliation::{Direction, Rationality, StableCone};
use crate::geodesic::{integrate_geodesic, GeodesicState};
use crate::metric::{Character, MetricField, TangentVector, TimeDirection};
use crate::rational::{convergents, Q_MAX};
use crate::vec2::{Homology, Vec2};

/// Which extreme periodic line a rational Busemann function is built from.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Side {
    Plus,
    Minus,
    Single,
}

impl std::str::FromStr for Side {
    type Err = String;
    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "plus" => Ok(Side::Plus),
            "minus" => Ok(Side::Minus),
            "single" => Ok(Side::Single),
            _ => Err(format!("side must be plus, minus or single, got `{s}`")),
        }
    }
}

/// A maximizing line, stored as a time graph with Lorentzian arclength parameters.
///
/// Periodic lines keep one period and repeat it by `shift`; segments are finite and
/// parametrized so that `γ(0)` sits at their middle.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ReferenceLine {
    pub direction: Direction,
    /// Set when an irrational direction was replaced by a convergent.
    pub surrogate: bool,
    pub curve: SampledCurve,
    /// `Some((h, T_h))` for periodic lines.
    pub period: Option<(Homology, f64)>,
}

/// Closest direction distance below which a line is refused.
pub const EDGE_TOL: f64 = 1e-3;

impl ReferenceLine {
    /// The periodic line through a closed maximizer.
    pub fn periodic(m: &MetricField, pm: &crate::distance::PeriodicMaximizer) -> ReferenceLine {
        let mut cum = vec![0.0];
        for w in pm.curve.nodes.windows(2) {
            cum.push(cum.last().unwrap() + chord_length(m, w[0], w[1]).unwrap_or(0.0));
        }
        let total = *cum.last().unwrap();
        let scale = if total > 0.0 { pm.period / total } else { 1.0 };
        cum.iter_mut().for_each(|c| *c *= scale);
        ReferenceLine {
            direction: Direction::rational(pm.homology),
            surrogate: false,
            curve: SampledCurve::new(Parametrization::Arclength, cum, pm.curve.nodes.clone()),
            period: Some((pm.homology, pm.period)),
        }
    }

    pub fn base(&self) -> Vec2 {
        match self.period {
            Some(_) => self.curve.start(),
            None => self.point_at(0.0),
        }
    }

    pub fn translated(&self, v: Vec2) -> ReferenceLine {
        ReferenceLine { curve: self.curve.translated(v), ..self.clone() }
    }

    /// `γ(s)`.
    pub fn point_at(&self, s: f64) -> Vec2 {
        match self.period {
            Some((h, tp)) => {
                let k = (s / tp).floor();
                self.curve.point_at(s - k * tp) + h.as_vec() * k
            }
            None => self.curve.point_at(s),
        }
    }

    /// The point of the line on the slice at time `t`, with its parameter.
    pub fn at_time(&self, t: f64) -> Option<(Vec2, f64)> {
        let (c, shift, ds) = match self.period {
            Some((h, tp)) => {
                let k = ((t - self.curve.start().t) / h.t as f64).floor();
                (&self.curve, h.as_vec() * k, k * tp)
            }
            None => (&self.curve, Vec2::default(), 0.0),
        };
        let tl = t - shift.t;
        let n = &c.nodes;
        if tl < n[0].t || tl > c.end().t {
            return None;
        }
        let i = n.partition_point(|p| p.t <= tl).clamp(1, n.len() - 1) - 1;
        let dt = n[i + 1].t - n[i].t;
        let u = if dt > 0.0 { (tl - n[i].t) / dt } else { 0.0 };
        let p = n[i].lerp(n[i + 1], u) + shift;
        Some((p, c.params[i] + u * (c.params[i + 1] - c.params[i]) + ds))
    }

    /// Nodes of the line with `t` in `[a, b]`.
    fn nodes_between(&self, a: f64, b: f64) -> Vec<Vec2> {
        match self.period {
            Some((h, _)) => {
                let t0 = self.curve.start().t;
                let k0 = ((a - t0) / h.t as f64).floor() as i64;
                let k1 = ((b - t0) / h.t as f64).ceil() as i64;
                let n = self.curve.nodes.len();
                (k0..=k1)
                    .flat_map(|k| self.curve.nodes[..n - 1].iter().map(move |p| *p + h.as_vec() * k as f64))
                    .filter(|p| p.t >= a && p.t <= b)
                    .collect()
            }
            None => self.curve.nodes.iter().copied().filter(|p| p.t >= a && p.t <= b).collect(),
        }
    }

    /// Transverse coordinate of `p` relative to the line's average direction.
    fn transverse(&self, p: Vec2) -> f64 {
        let d = self.direction.vector.normalized();
        d.cross(p - self.base())
    }
}

/// Rational class approximating the direction `alpha` inside the cone.
pub fn surrogate_class(alpha: Vec2, cone: &StableCone) -> Result<Homology> {
    if !(alpha.t > 0.0) {
        return Err(LabError::NotInCone(0, 0));
    }
    convergents(alpha.x / alpha.t, Q_MAX)
        .into_iter()
        .rev()
        .map(|(p, q)| Homology::new(q, p))
        .find(|h| cone.membership(h.as_vec(), 1e-9))
        .ok_or_else(|| LabError::NoMaximizer("no rational surrogate inside the cone".into()))
}

/// Line with asymptotic direction `alpha`.
///
/// Rational directions give periodic maximizers; irrational ones give a maximizer
/// between `±L·α` with `α` scaled to unit time, accepted if its fitted direction is
/// within [`EDGE_TOL`] of `α`.
pub fn reference_line(
    m: &MetricField,
    cone: &StableCone,
    alpha: &Direction,
    half_length: f64,
    opts: &ActionOptions,
) -> Result<ReferenceLine> {
    let v = alpha.vector;
    if cone.distance_to_boundary(v) < EDGE_TOL || !cone.contains(v) {
        return Err(LabError::Config("direction too close to null boundary".into()));
    }
    if let Rationality::Rational { .. } = alpha.rationality {
        let h = alpha.homology().expect("rational direction");
        let pm = periodic_maximizer(m, cone, h.primitive(), opts)?;
        return Ok(ReferenceLine::periodic(m, &pm));
    }
    let slope = v.x / v.t;
    let p = Vec2::new(-half_length, -half_length * slope);
    let q = Vec2::new(half_length, half_length * slope);
    let c = maximize_between(m, p, q, None, opts)?;
    let mid: Vec<Vec2> = c.nodes.iter().copied().filter(|n| n.t.abs() <= half_length / 2.0).collect();
    let fitted = fit_slope(&mid);
    let err = (fitted.atan() - slope.atan()).abs();
    if !(err < EDGE_TOL) {
        return Err(LabError::NoMaximizer(format!("segment direction is off by {err:.2e} rad")));
    }
    let mut cum = vec![0.0];
    for w in c.nodes.windows(2) {
        cum.push(cum.last().unwrap() + chord_length(m, w[0], w[1]).unwrap_or(0.0));
    }
    // Put γ(0) at the node closest to t = 0.
    let i0 = c.nodes.iter().enumerate().min_by(|a, b| a.1.t.abs().total_cmp(&b.1.t.abs())).map(|(i, _)| i).unwrap();
    let c0 = cum[i0];
    cum.iter_mut().for_each(|s| *s -= c0);
    Ok(ReferenceLine {
        direction: *alpha,
        surrogate: false,
        curve: SampledCurve::new(Parametrization::Arclength, cum, c.nodes),
        period: None,
    })
}

fn fit_slope(p: &[Vec2]) -> f64 {
    let n = p.len() as f64;
    let (mt, mx) = p.iter().fold((0.0, 0.0), |(a, b), q| (a + q.t / n, b + q.x / n));
    let (sxy, sxx) = p.iter().fold((0.0, 0.0), |(a, b), q| (a + (q.t - mt) * (q.x - mx), b + (q.t - mt).powi(2)));
    sxy / sxx
}

/// Options for [`busemann_field`].
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct BusemannOptions {
    /// Horizon schedule, in window heights above the window top.
    pub heights: Vec<f64>,
    /// Stop when the sup-node decrement falls below this.
    pub tol: f64,
    /// Decrement tolerance for constant metrics, whose fields converge only algebraically.
    pub constant_tol: f64,
    /// Distance tolerance; sets the monotonicity slack.
    pub distance_tol: f64,
    /// Corridor margin around the window, in `x`.
    pub margin: f64,
}

impl Default for BusemannOptions {
    fn default() -> Self {
        Self { heights: vec![8.0, 16.0, 32.0, 64.0], tol: 1e-4, constant_tol: 1e-6, distance_tol: 1e-3, margin: 0.75 }
    }
}

/// Local regularity of a Busemann grid node.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum NodeFlag {
    Smooth,
    /// Too close to the window edge for centered differences.
    Boundary,
    /// One-sided differences disagree: a corner.
    Corner,
}

impl NodeFlag {
    pub fn code(self) -> u8 {
        match self {
            NodeFlag::Smooth => 0,
            NodeFlag::Boundary => 1,
            NodeFlag::Corner => 2,
        }
    }
}

/// A Busemann function sampled on a grid window.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct BusemannGrid {
    pub direction: Direction,
    pub side: Side,
    pub spec: GridSpec,
    pub values: Vec<f64>,
    /// `∇b = g⁻¹ db`; meaningful only where `flags` is smooth.
    pub gradient: Vec<Vec2>,
    pub flags: Vec<NodeFlag>,
    /// `γ(0)` of the line actually used; `b(anchor) = 0`.
    pub anchor: Vec2,
    /// Final horizon `s`.
    pub horizon: f64,
    /// Sup-node decrement between successive horizons.
    pub decrements: Vec<f64>,
    pub converged: bool,
    /// Largest increase of `b_s` over successive horizons.
    pub monotone_violation: f64,
}

/// Values on one sweep layer, in index units.
///
/// Interpolation is the local 4-point cubic where second differences are steady and
/// linear where they jump, so that kinks of the value function cause no overshoot.
struct Layer {
    j0: i64,
    y: Vec<f64>,
    d2: Vec<f64>,
    /// Fractional indices of the past-cone boundary just outside the nodes, where the value is 0.
    edges: (Option<f64>, Option<f64>),
}

impl Layer {
    fn new(j0: i64, y: Vec<f64>) -> Layer {
        let n = y.len();
        let d2 = (0..n)
            .map(|k| if k == 0 || k + 1 == n { f64::NAN } else { (y[k + 1] - 2.0 * y[k] + y[k - 1]).abs() })
            .collect();
        Layer { j0, y, d2, edges: (None, None) }
    }

    fn last(&self) -> f64 {
        (self.j0 + self.y.len() as i64 - 1) as f64
    }

    fn range(&self) -> (f64, f64) {
        (self.edges.0.unwrap_or(self.j0 as f64), self.edges.1.unwrap_or(self.last()))
    }

    fn smooth_at(&self, k: usize) -> bool {
        let lo = k.saturating_sub(1).max(1);
        let hi = (k + 2).min(self.y.len() - 2);
        let (mut mn, mut mx) = (f64::INFINITY, 0.0f64);
        for d in &self.d2[lo..=hi] {
            mn = mn.min(*d);
            mx = mx.max(*d);
        }
        mx <= 4.0 * mn + 1e-12
    }

    fn eval(&self, f: f64) -> Option<f64> {
        let n = self.y.len();
        if n > 0 {
            let (a, b) = (self.j0 as f64, self.last());
            match self.edges {
                (Some(e), _) if f < a && f >= e - 1e-9 => return Some(self.y[0] * ((f - e) / (a - e)).max(0.0)),
                (_, Some(e)) if f > b && f <= e + 1e-9 => return Some(self.y[n - 1] * ((e - f) / (e - b)).max(0.0)),
                _ => {}
            }
        }
        let r = f - self.j0 as f64;
        if n == 0 || r < -1e-9 || r > (n - 1) as f64 + 1e-9 {
            return None;
        }
        if n == 1 {
            return Some(self.y[0]);
        }
        let k = (r.floor().max(0.0) as usize).min(n - 2);
        let u = (r - k as f64).clamp(0.0, 1.0);
        let y = &self.y;
        let lin = y[k] * (1.0 - u) + y[k + 1] * u;
        if k < 1 || k + 2 >= n || !self.smooth_at(k) {
            return Some(lin);
        }
        // Lagrange cubic through k-1..k+2.
        let (a, b, c, d) = (y[k - 1], y[k], y[k + 1], y[k + 2]);
        Some(
            -a * u * (u - 1.0) * (u - 2.0) / 6.0 + b * (u + 1.0) * (u - 1.0) * (u - 2.0) / 2.0
                - c * (u + 1.0) * u * (u - 2.0) / 2.0
                + d * (u + 1.0) * u * (u - 1.0) / 6.0,
        )
    }
}

const SCAN: usize = 9;
const GOLDEN_ITERS: usize = 16;

/// Maximizes `f` on `[lo, hi]` by a coarse scan followed by golden-section search.
fn maximize_1d(lo: f64, hi: f64, f: impl Fn(f64) -> f64) -> f64 {
    let h = (hi - lo) / (SCAN - 1) as f64;
    let (mut best, mut bi) = (f64::NEG_INFINITY, 0);
    for k in 0..SCAN {
        let v = f(lo + k as f64 * h);
        if v > best {
            best = v;
            bi = k;
        }
    }
    if !best.is_finite() {
        return best;
    }
    let (mut a, mut b) = (lo + bi.saturating_sub(1) as f64 * h, lo + (bi + 1).min(SCAN - 1) as f64 * h);
    let g = 0.5 * (5f64.sqrt() - 1.0);
    let (mut c, mut d) = (b - g * (b - a), a + g * (b - a));
    let (mut fc, mut fd) = (f(c), f(d));
    for _ in 0..GOLDEN_ITERS {
        if fc >= fd {
            b = d;
            d = c;
            fd = fc;
            c = b - g * (b - a);
            fc = f(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + g * (b - a);
            fd = f(d);
        }
    }
    best.max(fc).max(fd)
}

/// Lorentzian distance from every window node, and from `(t0, extra_x)`, to `target`,
/// by a backward semi-Lagrangian sweep with continuous chord slopes.
fn sweep_to(
    m: &MetricField,
    target: Vec2,
    spec: &GridSpec,
    extra_x: f64,
    margin: f64,
    smax: f64,
    drift: f64,
) -> Result<(Vec<f64>, f64)> {
    let (dt, dx) = (spec.dt(), spec.dx());
    if m.is_constant() {
        let vals = (0..=spec.n_t)
            .flat_map(|i| (0..=spec.n_x).map(move |j| (i, j)))
            .map(|(i, j)| chord_length(m, spec.node(i, j), target).unwrap_or(f64::NEG_INFINITY))
            .collect();
        let a = chord_length(m, Vec2::new(spec.t0, extra_x), target).unwrap_or(f64::NEG_INFINITY);
        return Ok((vals, a));
    }
    // Start a few layers below the target so the first layer spans several nodes.
    let i_top = ((target.t - spec.t0) / dt - 6.0).floor() as i64;
    if i_top <= spec.n_t as i64 {
        return Err(LabError::Config("horizon does not clear the window".into()));
    }
    let xlo_w = spec.x0.min(extra_x) - margin;
    let xhi_w = spec.x1.max(extra_x) + margin;
    let t_row = |i: i64| spec.t0 + i as f64 * dt;
    let corridor = |i: i64| -> (f64, f64) {
        // Slide the window corridor along the line above the window.
        let shift = if i > spec.n_t as i64 { drift * (t_row(i) - spec.t1) } else { 0.0 };
        (xlo_w + shift, xhi_w + shift)
    };
    let band = |i: i64| -> (i64, i64) {
        let t = t_row(i);
        let (mut lo, mut hi) = corridor(i);
        let reach = smax * (target.t - t) + dx;
        lo = lo.max(target.x - reach);
        hi = hi.min(target.x + reach);
        (((lo - spec.x0) / dx).ceil() as i64, ((hi - spec.x0) / dx).floor() as i64)
    };
    let trim = |j0: i64, v: Vec<f64>| -> Layer {
        // Longest contiguous run of finite values.
        let (mut best, mut cur) = ((0usize, 0usize), None::<usize>);
        for (k, x) in v.iter().enumerate() {
            match (x.is_finite(), cur) {
                (true, None) => cur = Some(k),
                (false, Some(s)) => {
                    if k - s > best.1 - best.0 {
                        best = (s, k);
                    }
                    cur = None;
                }
                _ => {}
            }
        }
        if let Some(s) = cur {
            if v.len() - s > best.1 - best.0 {
                best = (s, v.len());
            }
        }
        Layer::new(j0 + best.0 as i64, v[best.0..best.1].to_vec())
    };

    // Past-cone boundary of the target, followed down by Heun steps. Rows between
    // the boundary and the first reachable node interpolate to d = 0 there.
    let edge_step = |x: f64, t: f64, h: f64, upper: bool| -> f64 {
        let s = |t: f64, x: f64| m.null_slopes(Vec2::new(t, x)).map(|(a, b)| if upper { b } else { a }).unwrap_or(f64::NAN);
        let k1 = s(t, x);
        let k2 = s(t - h, x - h * k1);
        x - 0.5 * h * (k1 + k2)
    };
    let mut edges = (target.x, target.x);
    let sub = 16;
    let h0 = (target.t - t_row(i_top)) / sub as f64;
    for k in 0..sub {
        let t = target.t - k as f64 * h0;
        edges = (edge_step(edges.0, t, h0, false), edge_step(edges.1, t, h0, true));
    }
    let attach = |layer: &mut Layer, i: i64, (el, er): (f64, f64)| {
        if layer.y.is_empty() {
            return;
        }
        let (clo, chi) = corridor(i);
        let (fl, fr) = ((el - spec.x0) / dx, (er - spec.x0) / dx);
        let (a, b) = (layer.j0 as f64, layer.last());
        if clo <= el && fl < a - 1e-9 && a - fl <= 1.0 + 1e-9 {
            layer.edges.0 = Some(fl);
        }
        if chi >= er && fr > b + 1e-9 && fr - b <= 1.0 + 1e-9 {
            layer.edges.1 = Some(fr);
        }
    };
    let (jl, jh) = band(i_top);
    let top: Vec<f64> = (jl..=jh)
        .into_par_iter()
        .map(|j| chord_length(m, Vec2::new(t_row(i_top), spec.x0 + j as f64 * dx), target).unwrap_or(f64::NEG_INFINITY))
        .collect();
    let mut layer = trim(jl, top);
    attach(&mut layer, i_top, edges);
    let mut out = vec![f64::NEG_INFINITY; spec.len()];
    let mut anchor = f64::NEG_INFINITY;
    for i in (0..i_top).rev() {
        let t = t_row(i);
        let (jl, jh) = band(i);
        let prev = &layer;
        let (fa, fb) = prev.range();
        let node_value = |x: f64| -> f64 {
            let p = Vec2::new(t, x);
            let Ok((s1, s2)) = m.null_slopes(p) else { return f64::NEG_INFINITY };
            let lo = s2.max((spec.x0 + fa * dx - x) / dt);
            let hi = s1.min((spec.x0 + fb * dx - x) / dt);
            if !(hi >= lo) {
                return f64::NEG_INFINITY;
            }
            maximize_1d(lo, hi, |sig| {
                let xq = x + sig * dt;
                match (prev.eval((xq - spec.x0) / dx), chord_length_midpoint(m, p, Vec2::new(t + dt, xq))) {
                    (Some(u), Some(l)) => u + l,
                    _ => f64::NEG_INFINITY,
                }
            })
        };
        let vals: Vec<f64> = if jh >= jl {
            (jl..=jh).into_par_iter().map(|j| node_value(spec.x0 + j as f64 * dx)).collect()
        } else {
            Vec::new()
        };
        if i == 0 {
            anchor = node_value(extra_x);
        }
        if i <= spec.n_t as i64 {
            for j in 0..=spec.n_x as i64 {
                if j >= jl && j <= jh {
                    out[spec.index(i as usize, j as usize)] = vals[(j - jl) as usize];
                }
            }
        }
        edges = (edge_step(edges.0, t + dt, dt, false), edge_step(edges.1, t + dt, dt, true));
        layer = trim(jl, vals);
        attach(&mut layer, i, edges);
    }
    Ok((out, anchor))
}

/// `b_γ` on a window for a periodic line, built per side.
///
/// `Plus` and `Minus` translate the line by a transverse lattice vector so that the
/// window lies entirely below (plus) or above (minus) it; `Single` uses the line itself.
/// Each horizon `s = kT_h` is a backward sweep to `γ(s)`; values are normalized so that
/// `b(γ(0)) = 0` on the line used.
pub fn busemann_field(
    m: &MetricField,
    line: &ReferenceLine,
    side: Side,
    spec: &GridSpec,
    opts: &BusemannOptions,
) -> Result<BusemannGrid> {
    spec.validate()?;
    let line = side_line(line, side, spec)?;
    let (h, tp) = line.period.ok_or_else(|| LabError::Config("busemann_field needs a periodic line".into()))?;
    let (anchor_pt, anchor_s) = line
        .at_time(spec.t0)
        .ok_or_else(|| LabError::Config("line does not reach the window bottom".into()))?;
    let smax = max_null_slope(m)?;
    let height = spec.t1 - spec.t0;
    let base = line.base();
    let constant = m.is_constant();
    let tol = if constant { opts.constant_tol } else { opts.tol };
    let mut heights = opts.heights.clone();
    if constant {
        // Flat fields converge like 1/s: keep doubling.
        while heights.len() < 40 {
            heights.push(heights.last().copied().unwrap_or(8.0) * 2.0);
        }
    }
    let mut prev: Option<Vec<f64>> = None;
    let mut decrements = Vec::new();
    let mut violation = 0.0f64;
    let mut converged = false;
    let mut horizon = 0.0;
    for hh in heights {
        let k = ((spec.t1 + hh * height - base.t) / h.t as f64).ceil().max(1.0);
        let target = base + h.as_vec() * k;
        let (u, ua) = sweep_to(m, target, spec, anchor_pt.x, opts.margin, smax, h.x as f64 / h.t as f64)?;
        if !ua.is_finite() {
            return Err(LabError::NoMaximizer("anchor not reached by the sweep".into()));
        }
        let mut b: Vec<f64> = u.iter().map(|&v| ua - v + anchor_s).collect();
        horizon = k * tp;
        if let Some(p) = &prev {
            let mut dec = 0.0f64;
            for (bn, bp) in b.iter_mut().zip(p) {
                let up = *bn - *bp;
                violation = violation.max(up);
                if up > 0.0 {
                    *bn = *bp;
                }
                dec = dec.max(up.abs());
            }
            decrements.push(dec);
            if violation > 10.0 * opts.distance_tol {
                return Err(LabError::NoMaximizer(format!(
                    "b_s increases by {violation:.3e} with s: reference line is not maximizing"
                )));
            }
            if dec < tol {
                prev = Some(b);
                converged = true;
                break;
            }
        }
        prev = Some(b);
    }
    let values = prev.expect("at least one horizon");
    if let Some(k) = values.iter().position(|v| !v.is_finite()) {
        let bad = values.iter().filter(|v| !v.is_finite()).count();
        return Err(LabError::NoMaximizer(format!(
            "{bad} window nodes outside the past of the horizon, first at {:?}",
            spec.node(k / (spec.n_x + 1), k % (spec.n_x + 1))
        )));
    }
    let (gradient, flags) = gradient_and_flags(m, spec, &values);
    Ok(BusemannGrid {
        direction: line.direction,
        side,
        spec: *spec,
        values,
        gradient,
        flags,
        anchor: line.base(),
        horizon,
        decrements,
        converged,
        monotone_violation: violation.max(0.0),
    })
}

/// The line translated by a transverse lattice vector so the window sits on `side`.
pub fn side_line(line: &ReferenceLine, side: Side, spec: &GridSpec) -> Result<ReferenceLine> {
    if side == Side::Single {
        return Ok(line.clone());
    }
    let (h, _) = line.period.ok_or_else(|| LabError::Config("sided fields need a rational direction".into()))?;
    let w = h.complement();
    let corners = [(spec.t0, spec.x0), (spec.t0, spec.x1), (spec.t1, spec.x0), (spec.t1, spec.x1)].map(|(t, x)| line.transverse(Vec2::new(t, x)));
    let hn = h.as_vec().norm();
    // One step of w moves the line by 1/|h| transversally.
    let n = match side {
        Side::Plus => ((corners.iter().copied().fold(f64::MIN, f64::max) + 1.5) * hn).ceil(),
        Side::Minus => ((corners.iter().copied().fold(f64::MAX, f64::min) - 1.5) * hn).floor(),
        Side::Single => unreachable!(),
    };
    Ok(line.translated(w.as_vec() * n))
}

/// Second differences two cells away on either side, as a truncation scale.
fn far_second_difference(b: &dyn Fn(i64) -> Option<f64>) -> Option<f64> {
    let sd = |k: i64| Some((b(k + 1)? - 2.0 * b(k)? + b(k - 1)?).abs());
    Some(sd(-2)?.max(sd(2)?))
}

fn gradient_and_flags(m: &MetricField, spec: &GridSpec, v: &[f64]) -> (Vec<Vec2>, Vec<NodeFlag>) {
    let (nt, nx) = (spec.n_t as i64, spec.n_x as i64);
    let at = |i: i64, j: i64| -> Option<f64> {
        (i >= 0 && j >= 0 && i <= nt && j <= nx).then(|| v[spec.index(i as usize, j as usize)])
    };
    let mut gradient = vec![Vec2::new(f64::NAN, f64::NAN); v.len()];
    let mut flags = vec![NodeFlag::Boundary; v.len()];
    let mut corner = vec![false; v.len()];
    for i in 0..=nt {
        for j in 0..=nx {
            for axis in 0..2 {
                let f = |k: i64| if axis == 0 { at(i + k, j) } else { at(i, j + k) };
                let (Some(bm), Some(b0), Some(bp), Some(e)) = (f(-1), f(0), f(1), far_second_difference(&f)) else { continue };
                let jump = (bp - 2.0 * b0 + bm).abs();
                let d = if axis == 0 { spec.dt() } else { spec.dx() };
                if jump / d > 1e-3 && jump > 5.0 * e {
                    corner[spec.index(i as usize, j as usize)] = true;
                    // A kink between nodes shows on both neighbours.
                    for k in [-1, 1] {
                        let (a, c) = if axis == 0 { (i + k, j) } else { (i, j + k) };
                        if at(a, c).is_some() {
                            corner[spec.index(a as usize, c as usize)] = true;
                        }
                    }
                }
            }
        }
    }
    for i in 1..nt {
        for j in 1..nx {
            let idx = spec.index(i as usize, j as usize);
            let bt = (at(i + 1, j).unwrap() - at(i - 1, j).unwrap()) / (2.0 * spec.dt());
            let bx = (at(i, j + 1).unwrap() - at(i, j - 1).unwrap()) / (2.0 * spec.dx());
            let p = spec.node(i as usize, j as usize);
            gradient[idx] = m.eval(p).raise(Vec2::new(bt, bx));
            flags[idx] = if corner[idx] { NodeFlag::Corner } else { NodeFlag::Smooth };
        }
    }
    (gradient, flags)
}

fn catmull_rom(p: [f64; 4], u: f64) -> f64 {
    0.5 * (2.0 * p[1]
        + (p[2] - p[0]) * u
        + (2.0 * p[0] - 5.0 * p[1] + 4.0 * p[2] - p[3]) * u * u
        + (3.0 * (p[1] - p[2]) + p[3] - p[0]) * u * u * u)
}

impl BusemannGrid {
    pub fn value(&self, i: usize, j: usize) -> f64 {
        self.values[self.spec.index(i, j)]
    }

    fn cell(&self, p: Vec2) -> Option<(usize, usize, f64, f64)> {
        if !self.spec.contains(p) {
            return None;
        }
        let s = &self.spec;
        let ft = (p.t - s.t0) / s.dt();
        let fx = (p.x - s.x0) / s.dx();
        let i = (ft.floor() as usize).min(s.n_t - 1);
        let j = (fx.floor() as usize).min(s.n_x - 1);
        Some((i, j, ft - i as f64, fx - j as f64))
    }

    /// Bicubic (Catmull–Rom) interpolation of `b`, bilinear next to the window edge.
    pub fn value_at(&self, p: Vec2) -> Option<f64> {
        let (i, j, u, w) = self.cell(p)?;
        let s = &self.spec;
        if i >= 1 && j >= 1 && i + 2 <= s.n_t && j + 2 <= s.n_x {
            let rows: Vec<f64> = (0..4)
                .map(|a| {
                    let r = [0, 1, 2, 3].map(|c| self.value(i + a - 1, j + c - 1));
                    catmull_rom(r, w)
                })
                .collect();
            return Some(catmull_rom([rows[0], rows[1], rows[2], rows[3]], u));
        }
        let c = [self.value(i, j), self.value(i, j + 1), self.value(i + 1, j), self.value(i + 1, j + 1)];
        Some((1.0 - u) * (1.0 - w) * c[0] + (1.0 - u) * w * c[1] + u * (1.0 - w) * c[2] + u * w * c[3])
    }

    /// Bilinear interpolation of `∇b`; `None` unless all four corners are smooth.
    pub fn gradient_at(&self, p: Vec2) -> Option<Vec2> {
        let (i, j, u, w) = self.cell(p)?;
        let ids = [(i, j), (i, j + 1), (i + 1, j), (i + 1, j + 1)].map(|(a, b)| self.spec.index(a, b));
        if ids.iter().any(|&k| self.flags[k] != NodeFlag::Smooth) {
            return None;
        }
        let g = ids.map(|k| self.gradient[k]);
        Some(g[0] * ((1.0 - u) * (1.0 - w)) + g[1] * ((1.0 - u) * w) + g[2] * (u * (1.0 - w)) + g[3] * (u * w))
    }

    /// Largest `|Δb| / d_R` over grid edges.
    pub fn lipschitz_constant(&self, m: &MetricField) -> f64 {
        let s = &self.spec;
        let et = m.aux.norm(Vec2::new(s.dt(), 0.0));
        let ex = m.aux.norm(Vec2::new(0.0, s.dx()));
        let mut l = 0.0f64;
        for i in 0..=s.n_t {
            for j in 0..=s.n_x {
                if i < s.n_t {
                    l = l.max((self.value(i + 1, j) - self.value(i, j)).abs() / et);
                }
                if j < s.n_x {
                    l = l.max((self.value(i, j + 1) - self.value(i, j)).abs() / ex);
                }
            }
        }
        l
    }

    /// Mean and spread of `b(x + v) − b(x)` over nodes with `x + v` in the window.
    pub fn equivariance(&self, v: Vec2) -> Option<(f64, f64)> {
        let s = &self.spec;
        let d: Vec<f64> = (0..=s.n_t)
            .flat_map(|i| (0..=s.n_x).map(move |j| (i, j)))
            .filter_map(|(i, j)| Some(self.value_at(s.node(i, j) + v)? - self.value(i, j)))
            .collect();
        if d.is_empty() {
            return None;
        }
        let mean = d.iter().sum::<f64>() / d.len() as f64;
        let (lo, hi) = d.iter().fold((f64::MAX, f64::MIN), |(a, b), &x| (a.min(x), b.max(x)));
        Some((mean, hi - lo))
    }

    pub fn corner_fraction(&self) -> f64 {
        let c = self.flags.iter().filter(|f| **f == NodeFlag::Corner).count();
        c as f64 / self.flags.len() as f64
    }
}

/// Summary of `|g(∇b,∇b) + 1|` over smooth nodes.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct EikonalStats {
    pub nodes: usize,
    pub median: f64,
    pub p90: f64,
    pub sup: f64,
    /// Smooth nodes whose gradient is not past-directed timelike.
    pub not_past_timelike: usize,
}

fn percentile(sorted: &[f64], q: f64) -> f64 {
    if sorted.is_empty() {
        return f64::NAN;
    }
    let k = ((sorted.len() - 1) as f64 * q).round() as usize;
    sorted[k]
}

pub fn eikonal_residual(m: &MetricField, b: &BusemannGrid) -> EikonalStats {
    let s = &b.spec;
    let mut r = Vec::new();
    let mut bad = 0;
    for i in 0..=s.n_t {
        for j in 0..=s.n_x {
            let k = s.index(i, j);
            if b.flags[k] != NodeFlag::Smooth {
                continue;
            }
            let p = s.node(i, j);
            let g = b.gradient[k];
            r.push((m.eval(p).quad(g) + 1.0).abs());
            let c = m.classify(TangentVector { base: p, v: g });
            if !(c.character == Character::Timelike && c.direction == TimeDirection::Past) {
                bad += 1;
            }
        }
    }
    r.sort_by(f64::total_cmp);
    EikonalStats {
        nodes: r.len(),
        median: percentile(&r, 0.5),
        p90: percentile(&r, 0.9),
        sup: r.last().copied().unwrap_or(f64::NAN),
        not_past_timelike: bad,
    }
}

/// Integrated co-ray of a Busemann grid with its three checks.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct GradientLine {
    pub curve: SampledCurve,
    /// Stopped early on entering a corner or leaving the window.
    pub truncated: bool,
    /// `sup |b(ζ(t)) − b(ζ(0)) − t|`.
    pub calibration_error: f64,
    /// `sup |g(ζ̇,ζ̇) + 1|`.
    pub speed_error: f64,
    /// `sup |geodesic(t) − ζ(t)|` for the geodesic from `(q, ζ̇(0))`.
    pub geodesic_deviation: f64,
}

/// Integrates `ζ̇ = −∇b(ζ)` from `q` for parameter length `length` by RK4.
pub fn gradient_line(m: &MetricField, b: &BusemannGrid, q: Vec2, length: f64) -> Result<GradientLine> {
    let field = |p: Vec2| b.gradient_at(p).map(|g| -g);
    let v0 = field(q).ok_or(LabError::OutsideWindow)?;
    let step = 0.25 * b.spec.dt().min(b.spec.dx());
    let n = (length / step).ceil().max(1.0) as usize;
    let h = length / n as f64;
    let (mut p, mut nodes, mut params) = (q, vec![q], vec![0.0]);
    let b0 = b.value_at(q).ok_or(LabError::OutsideWindow)?;
    let mut truncated = false;
    let (mut cal, mut speed) = (0.0f64, (m.eval(q).quad(v0) + 1.0).abs());
    for k in 1..=n {
        let next = (|| {
            let k1 = field(p)?;
            let k2 = field(p + k1 * (h / 2.0))?;
            let k3 = field(p + k2 * (h / 2.0))?;
            let k4 = field(p + k3 * h)?;
            Some(p + (k1 + k2 * 2.0 + k3 * 2.0 + k4) * (h / 6.0))
        })();
        let Some(np) = next.filter(|np| field(*np).is_some()) else {
            truncated = true;
            break;
        };
        p = np;
        let t = k as f64 * h;
        nodes.push(p);
        params.push(t);
        cal = cal.max((b.value_at(p).unwrap() - b0 - t).abs());
        speed = speed.max((m.eval(p).quad(field(p).unwrap()) + 1.0).abs());
    }
    let reached = *params.last().unwrap();
    let geo = integrate_geodesic(m, GeodesicState::new(q, v0), reached, h)?;
    let dev = params
        .iter()
        .zip(&nodes)
        .map(|(&t, &z)| (geo.point_at(t) - z).norm())
        .fold(0.0, f64::max);
    let curve = SampledCurve::new(Parametrization::Affine, params, nodes).classified(m);
    Ok(GradientLine { curve, truncated, calibration_error: cal, speed_error: speed, geodesic_deviation: dev })
}

/// Fitted semiconcavity constants.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SemiconcavityReport {
    pub samples: usize,
    pub k99: f64,
    pub k_max: f64,
}

/// Smallest `K` with `(f(a)+f(b))/2 − f(c) ≤ K d²/8` at the midpoint `c` of random chords
/// of `g_R`-length in `[d_lo, d_hi]` inside `[t0,t1]×[x0,x1]`; negative fits count as 0.
pub fn semiconcavity_of<R: Rng>(
    f: impl Fn(Vec2) -> Option<f64>,
    window: (Vec2, Vec2),
    chord: (f64, f64),
    n: usize,
    rng: &mut R,
) -> SemiconcavityReport {
    let (lo, hi) = window;
    let mut ks = Vec::with_capacity(n);
    let mut tries = 0;
    while ks.len() < n && tries < 20 * n {
        tries += 1;
        let d = rng.gen_range(chord.0..chord.1);
        let e = Vec2::from_angle(rng.gen_range(0.0..std::f64::consts::TAU)) * (d / 2.0);
        let c = Vec2::new(rng.gen_range(lo.t..hi.t), rng.gen_range(lo.x..hi.x));
        if let (Some(fa), Some(fb), Some(fc)) = (f(c - e), f(c + e), f(c)) {
            ks.push((8.0 * (0.5 * (fa + fb) - fc) / (d * d)).max(0.0));
        }
    }
    ks.sort_by(f64::total_cmp);
    SemiconcavityReport { samples: ks.len(), k99: percentile(&ks, 0.99), k_max: ks.last().copied().unwrap_or(f64::NAN) }
}

/// [`semiconcavity_of`] for a Busemann grid, with chords of 5–15% of the smaller side.
pub fn semiconcavity_check<R: Rng>(b: &BusemannGrid, n_paths: usize, rng: &mut R) -> SemiconcavityReport {
    let s = &b.spec;
    let side = (s.t1 - s.t0).min(s.x1 - s.x0);
    let pad = 0.08 * side;
    semiconcavity_of(
        |p| b.value_at(p),
        (Vec2::new(s.t0 + pad, s.x0 + pad), Vec2::new(s.t1 - pad, s.x1 - pad)),
        (0.05 * side, 0.15 * side),
        n_paths,
        rng,
    )
}

/// Outcome of a sampled calibration check.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct CalibrationReport {
    pub pairs: usize,
    pub violations: usize,
    pub slack: f64,
    /// Smallest `b(y) − b(x) − d(x,y)`.
    pub worst_margin: f64,
}

/// Samples causal pairs `x ≤ y` in the window and checks `b(y) − b(x) ≥ d(x,y) − slack`.
pub fn check_calibration<R: Rng>(
    m: &MetricField,
    b: &BusemannGrid,
    n: usize,
    slack: f64,
    opts: &DistanceOptions,
    rng: &mut R,
) -> Result<CalibrationReport> {
    let s = &b.spec;
    let mut pairs = Vec::with_capacity(n);
    let mut tries = 0;
    while pairs.len() < n && tries < 50 * n {
        tries += 1;
        let x = Vec2::new(rng.gen_range(s.t0..s.t1), rng.gen_range(s.x0..s.x1));
        let y = x + random_causal_step(m, x, 0.5 * (s.t1 - s.t0), rng)?;
        if s.contains(y) {
            pairs.push((x, y));
        }
    }
    let margins: Vec<f64> = pairs
        .par_iter()
        .map(|&(x, y)| -> Result<f64> {
            let d = distance(m, x, y, opts)?.value;
            Ok(b.value_at(y).unwrap() - b.value_at(x).unwrap() - d)
        })
        .collect::<Result<_>>()?;
    Ok(CalibrationReport {
        pairs: margins.len(),
        violations: margins.iter().filter(|&&g| g < -slack).count(),
        slack,
        worst_margin: margins.iter().copied().fold(f64::INFINITY, f64::min),
    })
}

/// Pointwise Busemann function of a periodic line, by long maximizers to `γ(kT_h)` with
/// doubling `k`, with a Romberg table in `1/k` for values that settle only algebraically. Normalized
/// so that `b(γ(0)) = 0`.
pub struct PointBusemann<'a> {
    pub m: &'a MetricField,
    pub line: &'a ReferenceLine,
    pub action: ActionOptions,
    /// Stop when successive horizons agree to this.
    pub tol: f64,
    /// Largest time separation to the horizon point.
    pub max_span: f64,
}

/// A pointwise Busemann value.
#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct PointValue {
    pub value: f64,
    pub horizon: f64,
    pub converged: bool,
}

/// Multiples of the basic lead time tried as starting curves.
const LEAD_FACTORS: [f64; 4] = [0.5, 1.0, 2.0, 4.0];

/// Extrapolation levels in the horizon.
const ROMBERG_LEVELS: usize = 3;

impl<'a> PointBusemann<'a> {
    pub fn new(m: &'a MetricField, line: &'a ReferenceLine) -> Self {
        let tol = if m.is_constant() { 1e-7 } else { 2e-5 };
        let max_span = if m.is_constant() { 1e9 } else { 1024.0 };
        PointBusemann { m, line, action: ActionOptions::default(), tol, max_span }
    }

    fn distance_to(&self, y: Vec2, p: Vec2) -> Result<f64> {
        if self.m.is_constant() {
            return chord_length(self.m, y, p).ok_or_else(|| LabError::NoMaximizer("horizon point not in the future".into()));
        }
        let mut best = maximize_between(self.m, y, p, None, &self.action).map(|c| c.extrapolated).unwrap_or(f64::NEG_INFINITY);
        // Also start from curves that join the line after a lead time and follow it.
        let (lp, _) = self.line.at_time(y.t).ok_or(LabError::OutsideWindow)?;
        let (s1, s2) = self.m.null_slopes(y)?;
        let lead = 4.0 * (lp.x - y.x).abs() / (s1 - s2);
        for f in LEAD_FACTORS {
            let lead = (f * lead).clamp(0.5, (p.t - y.t) / 2.0);
            let mut nodes = vec![y];
            nodes.extend(self.line.nodes_between(y.t + lead, p.t));
            if nodes.last().is_none_or(|l| l.t < p.t) {
                nodes.push(p);
            }
            let init = SampledCurve::new(Parametrization::Time, nodes.iter().map(|n| n.t).collect(), nodes);
            if let Ok(c) = maximize_between(self.m, y, p, Some(&init), &self.action) {
                best = best.max(c.extrapolated);
            }
        }
        if best.is_finite() {
            Ok(best)
        } else {
            Err(LabError::NoMaximizer(format!("no causal curve from {y:?} to the horizon")))
        }
    }

    pub fn value(&self, y: Vec2) -> Result<PointValue> {
        let (h, tp) = self.line.period.ok_or_else(|| LabError::Config("pointwise Busemann needs a periodic line".into()))?;
        let base = self.line.base();
        if (y - base).norm() == 0.0 {
            return Ok(PointValue { value: 0.0, horizon: 0.0, converged: true });
        }
        let mut k = ((y.t + 4.0 + 2.0 * (y - base).norm() - base.t) / h.t as f64).ceil().max(1.0);
        // Romberg table in 1/s, one row per horizon.
        let mut prev: Vec<f64> = Vec::new();
        loop {
            let p = base + h.as_vec() * k;
            let mut row = vec![k * tp - self.distance_to(y, p)?];
            for (j, &q) in prev.iter().enumerate().take(ROMBERG_LEVELS) {
                let f = f64::powi(2.0, j as i32 + 1);
                row.push((f * row[j] - q) / (f - 1.0));
            }
            let best = *row.last().expect("row is never empty");
            let settled = row.iter().zip(&prev).any(|(a, b)| (a - b).abs() < self.tol);
            if settled {
                let j = row.iter().zip(&prev).position(|(a, b)| (a - b).abs() < self.tol).unwrap_or(0);
                return Ok(PointValue { value: row[j], horizon: k * tp, converged: true });
            }
            if !prev.is_empty() && 2.0 * (p.t - y.t) > self.max_span {
                return Ok(PointValue { value: best, horizon: k * tp, converged: false });
            }
            prev = row;
            k *= 2.0;
        }
    }
}

/// Linear part of `b_α^±` on the lattice.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct LinearParts {
    pub side: Side,
    pub h: Homology,
    pub w: Homology,
    /// `l(h) = T_h`.
    pub l_h: f64,
    pub l_w: f64,
    /// Coefficients `(c_t, c_x)` with `l(v) = c_t v_t + c_x v_x`.
    pub coefficients: Vec2,
    /// Spread of the `l(w)` estimates over base points on the line.
    pub spread: f64,
}

impl LinearParts {
    pub fn apply(&self, v: Vec2) -> f64 {
        self.coefficients.dot(v)
    }
}

/// Number of base points on the line used by [`linear_parts`].
pub const LINEAR_PART_BASES: usize = 4;

/// `l_α^±` from a periodic line γ in class `h`.
///
/// Below γ the Busemann function has linear part `l⁺` and above it `l⁻`; with `w` the
/// transverse lattice vector, `l⁻(w) = b_γ(x + w) − b_γ(x)` and
/// `l⁺(w) = b_γ(x) − b_γ(x − w)` for `x` on γ.
pub fn linear_parts(pb: &PointBusemann, side: Side, tol: f64) -> Result<LinearParts> {
    let (h, tp) = pb.line.period.ok_or_else(|| LabError::Config("linear parts need a rational direction".into()))?;
    let w = h.complement();
    let sign = match side {
        Side::Minus => 1.0,
        Side::Plus => -1.0,
        Side::Single => return Err(LabError::Config("linear parts need side plus or minus".into())),
    };
    let est: Vec<f64> = (0..LINEAR_PART_BASES)
        .map(|j| -> Result<f64> {
            let x = pb.line.point_at(tp * j as f64 / LINEAR_PART_BASES as f64);
            let bx = pb.value(x)?.value;
            let bw = pb.value(x + w.as_vec() * sign)?.value;
            Ok(sign * (bw - bx))
        })
        .collect::<Result<_>>()?;
    let (lo, hi) = est.iter().fold((f64::MAX, f64::MIN), |(a, b), &x| (a.min(x), b.max(x)));
    if hi - lo > tol {
        return Err(LabError::NoMaximizer(format!("horizon too small: base-point spread {:.3e}", hi - lo)));
    }
    let l_w = est.iter().sum::<f64>() / est.len() as f64;
    let (hv, wv) = (h.as_vec(), w.as_vec());
    // Solve [h; w] c = [T, l_w]; det = cross(h, w) = 1.
    let coefficients = Vec2::new(tp * wv.x - l_w * hv.x, l_w * hv.t - tp * wv.t);
    Ok(LinearParts { side, h, w, l_h: tp, l_w, coefficients, spread: hi - lo })
}

/// `A = b_{γ1}(γ2(0)) + b_{γ2}(γ1(0))` for periodic lines in the same class.
pub fn foliation_gap(m: &MetricField, g1: &ReferenceLine, g2: &ReferenceLine, action: &ActionOptions) -> Result<f64> {
    let (a, b) = (g1.period.map(|p| p.0), g2.period.map(|p| p.0));
    if a.is_none() || a != b {
        return Err(LabError::Config("foliation gap needs two periodic lines in the same class".into()));
    }
    let p1 = PointBusemann { action: *action, ..PointBusemann::new(m, g1) };
    let p2 = PointBusemann { action: *action, ..PointBusemann::new(m, g2) };
    Ok(p1.value(g2.base())?.value + p2.value(g1.base())?.value)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::metric::Bump;
    use approx::assert_abs_diff_eq;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn flat_line(h: Homology) -> ReferenceLine {
        let m = MetricField::flat();
        let pm = periodic_maximizer(&m, &StableCone::flat(), h, &ActionOptions::default()).unwrap();
        ReferenceLine::periodic(&m, &pm).translated(-pm.base)
    }

    fn window(n: usize) -> GridSpec {
        GridSpec::new((0.0, 2.0), (-1.0, 1.0), n, n).unwrap()
    }

    #[test]
    fn layer_edges_interpolate_to_zero() {
        let mut l = Layer::new(3, vec![0.4, 0.7, 0.9]);
        assert!(l.eval(2.5).is_none());
        l.edges = (Some(2.5), Some(5.75));
        assert_eq!(l.range(), (2.5, 5.75));
        assert_abs_diff_eq!(l.eval(2.75).unwrap(), 0.2, epsilon = 1e-12);
        assert_abs_diff_eq!(l.eval(5.5).unwrap(), 0.3, epsilon = 1e-12);
        assert!(l.eval(5.8).is_none());
    }

    #[test]
    fn narrow_cone_sweep_covers_window() {
        // Null slopes inside (-1, 1) on a grid with dx = dt.
        let m = MetricField::tilted(crate::metric::Shear { tilt: 0.1, shear_t: 0.1, shear_x: 0.0, half_opening: 0.6 }).unwrap();
        let cone = crate::foliation::stable_cone(&m).unwrap();
        let pm = periodic_maximizer(&m, &cone, Homology::new(1, 0), &ActionOptions::default()).unwrap();
        let line = ReferenceLine::periodic(&m, &pm);
        for side in [Side::Single, Side::Minus] {
            let b = busemann_field(&m, &line, side, &window(32), &BusemannOptions::default()).unwrap();
            assert!(b.values.iter().all(|v| v.is_finite()), "{side:?}");
        }
    }

    #[test]
    fn tilted_pointwise_matches_straightened_flat() {
        // With y = x - C(t), C' = tilt + shear_t sin 2πt, the metric is dy² - a² dt² and
        // the deck vector (1, 0) becomes (1, -tilt).
        let (tilt, a) = (0.1, 0.6);
        let m = MetricField::tilted(crate::metric::Shear { tilt, shear_t: 0.1, shear_x: 0.0, half_opening: a }).unwrap();
        let cone = crate::foliation::stable_cone(&m).unwrap();
        let pm = periodic_maximizer(&m, &cone, Homology::new(1, 0), &ActionOptions::default()).unwrap();
        assert_abs_diff_eq!(pm.period, (a * a - tilt * tilt).sqrt(), epsilon = 1e-6);
        let line = ReferenceLine::periodic(&m, &pm);
        let pb = PointBusemann::new(&m, &line);
        for j in [-1.0, 2.0] {
            let v = pb.value(line.base() + Vec2::new(0.0, j)).unwrap();
            assert_abs_diff_eq!(v.value, tilt * j / (a * a - tilt * tilt).sqrt(), epsilon = 1e-4);
        }
    }

    #[test]
    fn bump_grid_matches_pointwise() {
        let bump = Bump { amplitude: 0.3, center: Vec2::new(0.5, 0.5), width_t: Some(0.3), width_x: 0.3 };
        let m = MetricField::conformal(bump).unwrap();
        let cone = crate::foliation::stable_cone(&m).unwrap();
        let pm = periodic_maximizer(&m, &cone, Homology::new(1, 0), &ActionOptions::default()).unwrap();
        let line = ReferenceLine::periodic(&m, &pm);
        let spec = window(64);
        let b = busemann_field(&m, &line, Side::Minus, &spec, &BusemannOptions::default()).unwrap();
        let sided = side_line(&line, Side::Minus, &spec).unwrap();
        let pb = PointBusemann::new(&m, &sided);
        let nodes = [(8, 32), (20, 12), (32, 50), (44, 30), (56, 40)];
        let (i0, j0) = nodes[0];
        let r0 = pb.value(spec.node(i0, j0)).unwrap().value;
        for (i, j) in &nodes[1..] {
            let exact = pb.value(spec.node(*i, *j)).unwrap().value - r0;
            assert_abs_diff_eq!(b.value(*i, *j) - b.value(i0, j0), exact, epsilon = 2e-3);
        }
    }

    #[test]
    fn layer_interpolation() {
        let y: Vec<f64> = (0..40).map(|j| 0.5 * (j as f64 * 0.1 + 0.2).sin()).collect();
        let l = Layer::new(-5, y);
        assert_abs_diff_eq!(l.eval(10.3 - 5.0).unwrap(), 0.5 * (1.23f64).sin(), epsilon = 1e-6);
        assert!(l.eval(-5.5).is_none());
        assert!(l.eval(35.0).is_none());
        // A concave kink is never overshot.
        let k: Vec<f64> = (0..20).map(|j| -(j as f64 - 9.6).abs()).collect();
        let l = Layer::new(0, k);
        for i in 0..190 {
            let f = i as f64 / 10.0;
            assert!(l.eval(f).unwrap() <= -(f - 9.6).abs() + 1e-12, "{f}");
        }
    }

    #[test]
    fn one_dimensional_maximizer() {
        let v = maximize_1d(-1.0, 2.0, |s| -(s - 0.3f64).powi(2) + 1.0);
        assert_abs_diff_eq!(v, 1.0, epsilon = 1e-8);
    }

    #[test]
    fn flat_vertical_field_is_t() {
        let m = MetricField::flat();
        let line = flat_line(Homology::new(1, 0));
        let b = busemann_field(&m, &line, Side::Single, &window(64), &BusemannOptions::default()).unwrap();
        assert!(b.converged);
        for i in 0..=64 {
            for j in 0..=64 {
                let p = b.spec.node(i, j);
                assert!((b.value(i, j) - p.t).abs() < 1e-5, "{p:?} {}", b.value(i, j));
            }
        }
        let e = eikonal_residual(&m, &b);
        assert!(e.sup < 1e-6, "{e:?}");
        assert_eq!(e.not_past_timelike, 0);
        assert_eq!(b.corner_fraction(), 0.0);
    }

    #[test]
    fn flat_tilted_field_closed_form() {
        let m = MetricField::flat();
        let line = flat_line(Homology::new(2, 1));
        let b = busemann_field(&m, &line, Side::Single, &window(64), &BusemannOptions::default()).unwrap();
        let s3 = 3f64.sqrt();
        let worst = (0..=64)
            .flat_map(|i| (0..=64).map(move |j| (i, j)))
            .map(|(i, j)| {
                let p = b.spec.node(i, j);
                (b.value(i, j) - (2.0 * p.t - p.x) / s3).abs()
            })
            .fold(0.0, f64::max);
        assert!(worst < 1e-4, "{worst}");
        assert!(eikonal_residual(&m, &b).sup < 1e-6);
    }

    #[test]
    fn flat_sided_fields_agree() {
        let m = MetricField::flat();
        let line = flat_line(Homology::new(1, 0));
        let o = BusemannOptions::default();
        let p = busemann_field(&m, &line, Side::Plus, &window(32), &o).unwrap();
        let q = busemann_field(&m, &line, Side::Minus, &window(32), &o).unwrap();
        for (a, b) in p.values.iter().zip(&q.values) {
            assert!((a - b).abs() < 1e-4);
        }
    }

    #[test]
    fn flat_gradient_line_is_vertical() {
        let m = MetricField::flat();
        let line = flat_line(Homology::new(1, 0));
        let b = busemann_field(&m, &line, Side::Single, &window(64), &BusemannOptions::default()).unwrap();
        let g = gradient_line(&m, &b, Vec2::new(0.3, 0.2), 1.0).unwrap();
        assert!(!g.truncated);
        assert!((g.curve.end() - Vec2::new(1.3, 0.2)).norm() < 1e-4);
        assert!(g.calibration_error < 1e-4 && g.speed_error < 1e-4 && g.geodesic_deviation < 1e-4);
    }

    #[test]
    fn semiconcavity_controls() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let w = (Vec2::new(-1.0, -1.0), Vec2::new(1.0, 1.0));
        let lin = semiconcavity_of(|p| Some(0.3 * p.t - 0.2 * p.x), w, (0.1, 0.3), 500, &mut rng);
        assert!(lin.k_max < 1e-12);
        let concave = semiconcavity_of(|p| Some(p.x.min(-p.x)), w, (0.1, 0.3), 500, &mut rng);
        assert_eq!(concave.k_max, 0.0);
        let convex = |d: f64, rng: &mut ChaCha8Rng| semiconcavity_of(|p| Some(p.x.abs()), w, (d, 2.0 * d), 4000, rng).k_max;
        let (a, b) = (convex(0.1, &mut rng), convex(0.01, &mut rng));
        assert!(b > 5.0 * a, "{a} {b}");
    }

    #[test]
    fn pointwise_flat_values_and_linear_parts() {
        let m = MetricField::flat();
        let line = flat_line(Homology::new(2, 1));
        let pb = PointBusemann::new(&m, &line);
        let y = Vec2::new(0.4, -0.7);
        assert_abs_diff_eq!(pb.value(y).unwrap().value, (2.0 * y.t - y.x) / 3f64.sqrt(), epsilon = 1e-5);
        for side in [Side::Plus, Side::Minus] {
            let l = linear_parts(&pb, side, 1e-3).unwrap();
            assert_abs_diff_eq!(l.coefficients.t, 2.0 / 3f64.sqrt(), epsilon = 1e-4);
            assert_abs_diff_eq!(l.coefficients.x, -1.0 / 3f64.sqrt(), epsilon = 1e-4);
        }
    }

    #[test]
    fn flat_foliation_gap_vanishes() {
        let m = MetricField::flat();
        let g1 = flat_line(Homology::new(1, 0));
        let g2 = g1.translated(Vec2::new(0.0, 0.37));
        let a = foliation_gap(&m, &g1, &g2, &ActionOptions::default()).unwrap();
        assert!(a.abs() < 1e-5, "{a}");
        assert_eq!(foliation_gap(&m, &g1, &g1, &ActionOptions::default()).unwrap(), 0.0);
    }

    #[test]
    fn edge_directions_are_refused() {
        let m = MetricField::flat();
        let d = Direction::detect(Vec2::new(1.0, 0.9999), 1e-9, Q_MAX);
        let e = reference_line(&m, &StableCone::flat(), &d, 8.0, &ActionOptions::default());
        assert!(e.is_err());
    }

    #[test]
    fn irrational_flat_segment() {
        let m = MetricField::flat();
        let v = Vec2::new(1.0, 0.5f64.sqrt() - 0.3);
        let d = Direction { vector: v, rationality: Rationality::Irrational };
        let l = reference_line(&m, &StableCone::flat(), &d, 8.0, &ActionOptions::default()).unwrap();
        assert!(l.base().norm() < 1e-9);
        let p = l.point_at(1.0);
        assert_abs_diff_eq!(p.x / p.t, v.x, epsilon = 1e-9);
    }

    #[test]
    fn stripe_sides_and_gap() {
        // Ridge at x = 0.5; exact gap 2J with J = ∫ sqrt(e^{2a} - e^{2φ}) dx.
        let bump = Bump { amplitude: 0.15, center: Vec2::new(0.0, 0.5), width_t: None, width_x: 0.35 };
        let m = MetricField::conformal(bump).unwrap();
        let n = 20000;
        let j: f64 = (0..n)
            .map(|k| {
                let x = (k as f64 + 0.5) / n as f64;
                let phi = bump.phi(Vec2::new(0.0, x)).0;
                ((0.3f64).exp() - (2.0 * phi).exp()).max(0.0).sqrt() / n as f64
            })
            .sum();
        let cone = crate::foliation::stable_cone(&m).unwrap();
        let pm = periodic_maximizer(&m, &cone, Homology::new(1, 0), &ActionOptions::default()).unwrap();
        let g1 = ReferenceLine::periodic(&m, &pm);
        assert!((g1.base().x.rem_euclid(1.0) - 0.5).abs() < 1e-3);
        let pb = PointBusemann::new(&m, &g1);
        let lm = linear_parts(&pb, Side::Minus, 1e-3).unwrap();
        let lp = linear_parts(&pb, Side::Plus, 1e-3).unwrap();
        assert_abs_diff_eq!(lm.l_w, j, epsilon = 1e-3);
        assert_abs_diff_eq!(lp.l_w, -j, epsilon = 1e-3);
        let g2 = g1.translated(Vec2::new(0.0, 1.0));
        let a = foliation_gap(&m, &g1, &g2, &ActionOptions::default()).unwrap();
        assert_abs_diff_eq!(a, 2.0 * j, epsilon = 2e-3);
    }
}
