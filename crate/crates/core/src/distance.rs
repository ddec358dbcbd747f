//! Lorentzian distance on a window of the cover: layered causal dynamic programming,
//! shooting and action refinement, closed maximizers, and distance-level checks.

use crate::action::{maximize_between, maximize_closed, maximize_closed_from, ActionOptions};
use crate::curve::{chord_length, chord_length_midpoint, chord_length_simpson, SampledCurve};
use crate::error::{LabError, Result};
use crate::foliation::StableCone;
use crate::geodesic::shoot_maximizer;
use crate::metric::MetricField;
use crate::vec2::{Homology, Vec2};
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

/// Rectangular window `[t0,t1]×[x0,x1]` with `n_t × n_x` cells; layers run along `t`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    pub t0: f64,
    pub t1: f64,
    pub x0: f64,
    pub x1: f64,
    pub n_t: usize,
    pub n_x: usize,
}

impl GridSpec {
    pub fn new(t: (f64, f64), x: (f64, f64), n_t: usize, n_x: usize) -> Result<Self> {
        let g = GridSpec { t0: t.0, t1: t.1, x0: x.0, x1: x.1, n_t, n_x };
        g.validate()?;
        Ok(g)
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_t < 16 || self.n_x < 16 {
            return Err(LabError::Config(format!(
                "grid resolution must be at least 16 cells per axis, got {}x{}",
                self.n_t, self.n_x
            )));
        }
        if !(self.t1 > self.t0) || !(self.x1 > self.x0) {
            return Err(LabError::Config("grid window must have positive side lengths".into()));
        }
        Ok(())
    }

    pub fn dt(&self) -> f64 {
        (self.t1 - self.t0) / self.n_t as f64
    }

    pub fn dx(&self) -> f64 {
        (self.x1 - self.x0) / self.n_x as f64
    }

    pub fn node(&self, i: usize, j: usize) -> Vec2 {
        Vec2::new(self.t0 + i as f64 * self.dt(), self.x0 + j as f64 * self.dx())
    }

    pub fn index(&self, i: usize, j: usize) -> usize {
        i * (self.n_x + 1) + j
    }

    pub fn len(&self) -> usize {
        (self.n_t + 1) * (self.n_x + 1)
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn contains(&self, p: Vec2) -> bool {
        p.t >= self.t0 && p.t <= self.t1 && p.x >= self.x0 && p.x <= self.x1
    }

    /// Nearest node indices.
    pub fn nearest(&self, p: Vec2) -> Option<(usize, usize)> {
        if !self.contains(p) {
            return None;
        }
        let i = ((p.t - self.t0) / self.dt()).round() as usize;
        let j = ((p.x - self.x0) / self.dx()).round() as usize;
        Some((i.min(self.n_t), j.min(self.n_x)))
    }

    /// Same window with the resolution multiplied by `k`.
    pub fn refined(&self, k: usize) -> GridSpec {
        GridSpec { n_t: self.n_t * k, n_x: self.n_x * k, ..*self }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum Quadrature {
    #[default]
    Midpoint,
    Simpson,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct DpOptions {
    /// Stencil half-width in fine `x` steps; `None` picks the minimum covering the cone.
    pub stencil: Option<usize>,
    /// Fine `x` nodes per grid cell used inside each layer.
    pub oversample: usize,
    pub quadrature: Quadrature,
}

impl Default for DpOptions {
    fn default() -> Self {
        Self { stencil: None, oversample: 4, quadrature: Quadrature::Midpoint }
    }
}

/// Sampled `d(source, ·)`; unreachable nodes hold `-∞`.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct DistanceGrid {
    pub source: Vec2,
    pub spec: GridSpec,
    pub values: Vec<f64>,
}

impl DistanceGrid {
    pub fn raw(&self, i: usize, j: usize) -> f64 {
        self.values[self.spec.index(i, j)]
    }

    pub fn reachable(&self, i: usize, j: usize) -> bool {
        self.raw(i, j).is_finite()
    }

    /// Distance with the unreachable convention `d = 0`.
    pub fn value(&self, i: usize, j: usize) -> f64 {
        let v = self.raw(i, j);
        if v.is_finite() { v } else { 0.0 }
    }

    /// Bilinear interpolation; `None` if any corner is unreachable or `p` is outside.
    pub fn interpolate(&self, p: Vec2) -> Option<f64> {
        let s = &self.spec;
        if !s.contains(p) {
            return None;
        }
        let ft = ((p.t - s.t0) / s.dt()).min(s.n_t as f64 - 1e-12);
        let fx = ((p.x - s.x0) / s.dx()).min(s.n_x as f64 - 1e-12);
        let (i, j) = (ft.floor() as usize, fx.floor() as usize);
        let (u, v) = (ft - i as f64, fx - j as f64);
        let c = [self.raw(i, j), self.raw(i + 1, j), self.raw(i, j + 1), self.raw(i + 1, j + 1)];
        if c.iter().any(|x| !x.is_finite()) {
            return None;
        }
        Some((1.0 - u) * (1.0 - v) * c[0] + u * (1.0 - v) * c[1] + (1.0 - u) * v * c[2] + u * v * c[3])
    }
}

/// Largest absolute null slope over a sample of the torus, padded by 5%.
pub fn max_null_slope(m: &MetricField) -> Result<f64> {
    let mut s = 0.0f64;
    for a in 0..48 {
        for b in 0..48 {
            let (s1, s2) = m.null_slopes(Vec2::new(a as f64 / 48.0, b as f64 / 48.0))?;
            s = s.max(s1.abs()).max(s2.abs());
        }
    }
    Ok(s * 1.05)
}

/// Layered causal dynamic programming from `source` (snapped to the nearest node).
///
/// Each layer is relaxed from the previous one over chords whose `x` offset lies within
/// the stencil; layer nodes are oversampled in `x` and the result is reported on the grid.
pub fn causal_dp(m: &MetricField, source: Vec2, spec: &GridSpec, opts: &DpOptions) -> Result<DistanceGrid> {
    spec.validate()?;
    if !m.dt_timelike() {
        return Err(LabError::Config("layered distance needs ∂_t timelike everywhere".into()));
    }
    let (is, js) = spec.nearest(source).ok_or(LabError::OutsideWindow)?;
    let r = opts.oversample.max(1);
    let nf = spec.n_x * r;
    let dxf = spec.dx() / r as f64;
    let dt = spec.dt();
    let need = (max_null_slope(m)? * dt / dxf).ceil() as usize + 2;
    let w = match opts.stencil {
        Some(w) if w < need => {
            return Err(LabError::Config(format!(
                "cone slope exceeds stencil half-width {w}; use at least {need}"
            )))
        }
        Some(w) => w,
        None => need,
    };
    let chord = match opts.quadrature {
        Quadrature::Midpoint => chord_length_midpoint,
        Quadrature::Simpson => chord_length_simpson,
    };
    let mut values = vec![f64::NEG_INFINITY; spec.len()];
    let mut prev = vec![f64::NEG_INFINITY; nf + 1];
    prev[js * r] = 0.0;
    values[spec.index(is, js)] = 0.0;
    let xf = |j: usize| spec.x0 + j as f64 * dxf;
    for i in is + 1..=spec.n_t {
        let (ta, tb) = (spec.t0 + (i - 1) as f64 * dt, spec.t0 + i as f64 * dt);
        let next: Vec<f64> = (0..=nf)
            .into_par_iter()
            .map(|j| {
                let b = Vec2::new(tb, xf(j));
                let lo = j.saturating_sub(w);
                let hi = (j + w).min(nf);
                let mut best = f64::NEG_INFINITY;
                for (k, &pv) in prev.iter().enumerate().take(hi + 1).skip(lo) {
                    if pv == f64::NEG_INFINITY {
                        continue;
                    }
                    if let Some(l) = chord(m, Vec2::new(ta, xf(k)), b) {
                        best = best.max(pv + l);
                    }
                }
                best
            })
            .collect();
        for j in 0..=spec.n_x {
            values[spec.index(i, j)] = next[j * r];
        }
        prev = next;
    }
    Ok(DistanceGrid { source: spec.node(is, js), spec: *spec, values })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct DistanceOptions {
    /// DP layers between the two endpoints.
    pub dp_layers: usize,
    pub dp: DpOptions,
    pub shoot: bool,
    pub polish: bool,
    pub action: ActionOptions,
    /// Endpoint tolerance for shooting.
    pub tol: f64,
}

impl Default for DistanceOptions {
    fn default() -> Self {
        Self {
            dp_layers: 32,
            dp: DpOptions::default(),
            shoot: true,
            polish: true,
            action: ActionOptions::default(),
            tol: 1e-8,
        }
    }
}

impl DistanceOptions {
    /// Options that skip shooting, relying on DP and action refinement.
    pub fn fast() -> Self {
        Self { shoot: false, ..Self::default() }
    }
}

/// Distance estimate with its ingredients.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct DistanceResult {
    /// `d(p,q)`, 0 when unreachable.
    pub value: f64,
    pub reachable: bool,
    pub dp: Option<f64>,
    pub shooting: Option<f64>,
    pub polished: Option<f64>,
    pub curve: Option<SampledCurve>,
}

impl DistanceResult {
    fn unreachable() -> Self {
        Self { value: 0.0, reachable: false, dp: None, shooting: None, polished: None, curve: None }
    }
}

/// Whether `q` lies between the two null curves issuing from `p` (closed causal future).
pub fn causally_reachable(m: &MetricField, p: Vec2, q: Vec2) -> Result<bool> {
    if q == p {
        return Ok(true);
    }
    if !(q.t > p.t) {
        return Ok(false);
    }
    let n = ((q.t - p.t) * 200.0).ceil().max(16.0) as usize;
    let h = (q.t - p.t) / n as f64;
    let edge = |which: u8| -> Result<f64> {
        let mut x = p.x;
        for k in 0..n {
            let t = p.t + k as f64 * h;
            let f = |t: f64, x: f64| -> Result<f64> {
                let (a, b) = m.null_slopes(Vec2::new(t, x))?;
                Ok(if which == 1 { a } else { b })
            };
            let k1 = f(t, x)?;
            let k2 = f(t + 0.5 * h, x + 0.5 * h * k1)?;
            let k3 = f(t + 0.5 * h, x + 0.5 * h * k2)?;
            let k4 = f(t + h, x + h * k3)?;
            x += h * (k1 + 2.0 * k2 + 2.0 * k3 + k4) / 6.0;
        }
        Ok(x)
    };
    let (hi, lo) = (edge(1)?, edge(2)?);
    let slack = 1e-10 * (1.0 + q.x.abs());
    Ok(q.x <= hi + slack && q.x >= lo - slack)
}

/// `d(p, q)`: DP guess refined by shooting and by discrete-action maximization; the
/// result is the largest of the available estimates.
pub fn distance(m: &MetricField, p: Vec2, q: Vec2, opts: &DistanceOptions) -> Result<DistanceResult> {
    if q == p {
        return Ok(DistanceResult { value: 0.0, reachable: true, ..DistanceResult::unreachable() });
    }
    if !causally_reachable(m, p, q)? {
        return Ok(DistanceResult::unreachable());
    }
    let dp = dp_between(m, p, q, opts)?;
    let shot = if opts.shoot { shoot_maximizer(m, p, q, 1e-6).ok() } else { None };
    // Shot chords of a constant metric are already exact.
    let pol = if opts.polish && !(m.is_constant() && shot.is_some()) {
        maximize_between(m, p, q, shot.as_ref().map(|s| &s.curve), &opts.action).ok()
    } else {
        None
    };
    let mut value = dp.unwrap_or(0.0);
    let mut curve = None;
    if let Some(s) = &shot {
        if s.length >= value {
            value = s.length;
            curve = Some(s.curve.clone());
        }
    }
    if let Some(a) = &pol {
        if a.extrapolated >= value {
            value = a.extrapolated;
            curve = Some(a.to_curve(m));
        }
    }
    Ok(DistanceResult {
        value,
        reachable: true,
        dp,
        shooting: shot.map(|s| s.length),
        polished: pol.map(|a| a.extrapolated),
        curve,
    })
}

/// `d(source, q)` for several targets from one DP grid over `spec`, each refined by
/// shooting and action polish as enabled in `opts`. Unreachable targets give 0.
/// The source is snapped to the nearest grid node.
pub fn distances_from(m: &MetricField, source: Vec2, spec: &GridSpec, targets: &[Vec2], opts: &DistanceOptions) -> Result<Vec<f64>> {
    let g = causal_dp(m, source, spec, &opts.dp)?;
    let source = g.source;
    targets
        .par_iter()
        .map(|&q| {
            if !causally_reachable(m, source, q)? {
                return Ok(0.0);
            }
            let mut v = g.interpolate(q).unwrap_or(0.0);
            let shot = if opts.shoot { shoot_maximizer(m, source, q, 1e-6).ok() } else { None };
            if let Some(s) = &shot {
                v = v.max(s.length);
            }
            if opts.polish && !(m.is_constant() && shot.is_some()) {
                if let Ok(a) = maximize_between(m, source, q, shot.as_ref().map(|s| &s.curve), &opts.action) {
                    v = v.max(a.extrapolated);
                }
            }
            Ok(v)
        })
        .collect()
}

/// DP estimate on a small grid from `p` to the last layer below `q`, closed by one chord
/// to `q`, so that `q` need not be a node.
fn dp_between(m: &MetricField, p: Vec2, q: Vec2, opts: &DistanceOptions) -> Result<Option<f64>> {
    let nt = opts.dp_layers.max(16);
    let dt = (q.t - p.t) / nt as f64;
    let dx = dt;
    let reach = max_null_slope(m)? * (q.t - p.t);
    let cells_side = ((reach / dx).ceil() as usize).max(8);
    let lo = p.x - cells_side as f64 * dx;
    let nx = 2 * cells_side;
    let spec = GridSpec { t0: p.t, t1: q.t - dt, x0: lo, x1: lo + nx as f64 * dx, n_t: nt - 1, n_x: nx };
    let g = causal_dp(m, p, &spec, &opts.dp)?;
    let chord = match opts.dp.quadrature {
        Quadrature::Midpoint => chord_length_midpoint,
        Quadrature::Simpson => chord_length_simpson,
    };
    let best = (0..=nx)
        .filter(|&j| g.reachable(nt - 1, j))
        .filter_map(|j| chord(m, spec.node(nt - 1, j), q).map(|l| g.raw(nt - 1, j) + l))
        .fold(f64::NEG_INFINITY, f64::max);
    Ok(Some(best).filter(|v| v.is_finite()))
}

/// Refines the DP value at every reachable grid node by action maximization.
pub fn refine_grid(m: &MetricField, g: &DistanceGrid, opts: &ActionOptions) -> DistanceGrid {
    let s = g.spec;
    let values = (0..g.values.len())
        .into_par_iter()
        .map(|idx| {
            let v = g.values[idx];
            let (i, j) = (idx / (s.n_x + 1), idx % (s.n_x + 1));
            let q = s.node(i, j);
            if !v.is_finite() || q.t <= g.source.t {
                return v;
            }
            maximize_between(m, g.source, q, None, opts).map_or(v, |a| a.extrapolated.max(v))
        })
        .collect();
    DistanceGrid { values, ..g.clone() }
}

/// Random future causal vector strictly inside the pointwise cone at `p`, with `t`
/// extent at most `t_max`.
pub fn random_causal_step<R: Rng>(m: &MetricField, p: Vec2, t_max: f64, rng: &mut R) -> Result<Vec2> {
    let (s1, s2) = m.null_slopes(p)?;
    let dt = rng.gen_range(0.05 * t_max..t_max);
    // Keep away from the null edges so that the step stays causal over its extent.
    let u: f64 = rng.gen_range(0.15..0.85);
    Ok(Vec2::new(dt, dt * (s2 + u * (s1 - s2))))
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct TriangleReport {
    pub triples: usize,
    pub violations: usize,
    pub slack: f64,
    /// Smallest `d(x,z) - d(x,y) - d(y,z)`.
    pub worst_margin: f64,
    pub worst_triple: Option<[Vec2; 3]>,
}

impl TriangleReport {
    pub fn passed(&self) -> bool {
        self.violations == 0
    }
}

/// Checks `d(x,z) ≥ d(x,y) + d(y,z) - slack` on random causal chains.
pub fn check_reverse_triangle<R: Rng>(
    m: &MetricField,
    n_triples: usize,
    slack: f64,
    opts: &DistanceOptions,
    rng: &mut R,
) -> Result<TriangleReport> {
    let mut chains = Vec::with_capacity(n_triples);
    for _ in 0..n_triples {
        let x = Vec2::new(rng.gen_range(0.0..1.0), rng.gen_range(0.0..1.0));
        let y = x + random_causal_step(m, x, 1.0, rng)?;
        let z = y + random_causal_step(m, y, 1.0, rng)?;
        chains.push([x, y, z]);
    }
    let margins: Vec<Result<f64>> = chains
        .par_iter()
        .map(|c| {
            let a = distance(m, c[0], c[1], opts)?.value;
            let b = distance(m, c[1], c[2], opts)?.value;
            let ac = distance(m, c[0], c[2], opts)?.value;
            Ok(ac - a - b)
        })
        .collect();
    let mut rep = TriangleReport { triples: n_triples, violations: 0, slack, worst_margin: f64::INFINITY, worst_triple: None };
    for (c, mg) in chains.iter().zip(margins) {
        let mg = mg?;
        if mg < -slack {
            rep.violations += 1;
        }
        if mg < rep.worst_margin {
            rep.worst_margin = mg;
            rep.worst_triple = Some(*c);
        }
    }
    Ok(rep)
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct LipschitzReport {
    pub eps: f64,
    /// Empirical Lipschitz constant at the base and doubled resolution.
    pub coarse: f64,
    pub fine: f64,
    pub relative_change: f64,
}

/// Empirical Lipschitz constant of `d(x, ·)` on `x + 𝔗^ε` beyond radius `radius`.
///
/// Samples grid nodes `y` with `y - x ∈ 𝔗^ε`, `|y - x| ≥ radius`, perturbs them by one
/// cell along 16 directions and takes the largest difference quotient of the bilinear
/// interpolant of the DP grid.
pub fn check_lipschitz_on_cone<R: Rng>(
    m: &MetricField,
    cone: &StableCone,
    eps: f64,
    n_pairs: usize,
    radius: f64,
    spec: &GridSpec,
    rng: &mut R,
) -> Result<LipschitzReport> {
    let source = Vec2::new(spec.t0, 0.5 * (spec.x0 + spec.x1));
    let mut samples = vec![];
    let mut tries = 0;
    while samples.len() < n_pairs && tries < 1000 * n_pairs {
        tries += 1;
        let y = Vec2::new(rng.gen_range(spec.t0..spec.t1), rng.gen_range(spec.x0..spec.x1));
        let h = y - source;
        if h.norm() >= radius && cone.membership(h, eps) {
            samples.push((y, rng.gen_range(0.0..std::f64::consts::TAU)));
        }
    }
    let measure = |spec: &GridSpec| -> Result<f64> {
        let g = causal_dp(m, source, spec, &DpOptions::default())?;
        let step = spec.dt().max(spec.dx());
        let mut sup = 0.0f64;
        for &(y, phase) in &samples {
            let Some(d0) = g.interpolate(y) else { continue };
            for k in 0..16 {
                let dir = Vec2::from_angle(phase + k as f64 * std::f64::consts::TAU / 16.0);
                if let Some(d1) = g.interpolate(y + dir * step) {
                    sup = sup.max((d1 - d0).abs() / step);
                }
            }
        }
        Ok(sup)
    };
    let coarse = measure(spec)?;
    let fine = measure(&spec.refined(2))?;
    Ok(LipschitzReport { eps, coarse, fine, relative_change: (fine - coarse).abs() / coarse.max(1e-300) })
}

/// A closed maximizer in an integral class.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct PeriodicMaximizer {
    pub homology: Homology,
    /// `T_h`, the largest length of a closed causal curve in the class.
    pub period: f64,
    /// Base point on the slice `t = 0`.
    pub base: Vec2,
    /// One period of the curve, from `base` to `base + h`.
    pub curve: SampledCurve,
    /// Lengths reached from each starting base point.
    pub starts: Vec<(f64, f64)>,
}

/// Number of starting base points for closed maximization.
pub const PERIODIC_STARTS: usize = 8;

/// Largest closed causal curve in class `h`.
///
/// Starts from `PERIODIC_STARTS` base points on `t = 0` at low resolution, then refines
/// the best one with Richardson extrapolation.
pub fn periodic_maximizer(m: &MetricField, cone: &StableCone, h: Homology, opts: &ActionOptions) -> Result<PeriodicMaximizer> {
    if h.t <= 0 || !cone.membership(h.as_vec(), 1e-9) {
        return Err(LabError::NotInCone(h.t, h.x));
    }
    if m.is_constant() {
        // Closed maximizers of a constant metric are straight.
        let n = ((h.t as f64 * opts.nodes_per_unit as f64).ceil() as usize).max(8);
        let nodes: Vec<Vec2> = (0..=n).map(|i| h.as_vec() * (i as f64 / n as f64)).collect();
        let period = chord_length(m, Vec2::default(), h.as_vec()).ok_or(LabError::NotInCone(h.t, h.x))?;
        let curve = SampledCurve::new(crate::curve::Parametrization::Time, nodes.iter().map(|p| p.t).collect(), nodes).classified(m);
        return Ok(PeriodicMaximizer { homology: h, period, base: Vec2::default(), curve, starts: vec![(0.0, period)] });
    }
    let coarse = ActionOptions { nodes_per_unit: (opts.nodes_per_unit / 3).max(8), richardson: false, ..*opts };
    let runs: Vec<(f64, Option<crate::action::ActionCurve>)> = (0..PERIODIC_STARTS)
        .into_par_iter()
        .map(|k| {
            let x0 = k as f64 / PERIODIC_STARTS as f64;
            (x0, maximize_closed(m, h, x0, &coarse).ok())
        })
        .collect();
    let starts: Vec<(f64, f64)> = runs.iter().map(|(x0, r)| (*x0, r.as_ref().map_or(f64::NAN, |c| c.length))).collect();
    let best = runs
        .into_iter()
        .filter_map(|(_, r)| r)
        .max_by(|a, b| a.length.total_cmp(&b.length))
        .ok_or_else(|| LabError::NoMaximizer(format!("no closed causal curve found in class {h}")))?;
    let n = ((h.t as f64 * opts.nodes_per_unit as f64).ceil() as usize).max(8);
    let x = resample_closed(&best.nodes, h, n);
    let fine = maximize_closed_from(m, h, &x, opts)?;
    let base = fine.nodes[0];
    Ok(PeriodicMaximizer { homology: h, period: fine.extrapolated, base, curve: fine.to_curve(m), starts })
}

/// Linear resampling of a closed time graph over one period onto `n` chords.
fn resample_closed(nodes: &[Vec2], h: Homology, n: usize) -> Vec<f64> {
    let c = SampledCurve::new(crate::curve::Parametrization::Time, nodes.iter().map(|p| p.t).collect(), nodes.to_vec());
    (0..=n)
        .map(|i| {
            let t = h.t as f64 * i as f64 / n as f64;
            c.x_at_time(t).unwrap_or(nodes[0].x + h.x as f64 * i as f64 / n as f64)
        })
        .collect()
}
