//! Sampled curves in the cover.

use crate::error::{LabError, Result};
use crate::metric::{Character, MetricField};
use crate::vec2::Vec2;
use serde::{Deserialize, Serialize};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Parametrization {
    Affine,
    Arclength,
    /// Parametrized by the coordinate `t`.
    Time,
}

/// Ordered nodes with strictly increasing parameter values.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SampledCurve {
    pub parametrization: Parametrization,
    pub params: Vec<f64>,
    pub nodes: Vec<Vec2>,
    /// Worst causal character over the chords.
    pub character: Character,
}

const GAUSS3: [(f64, f64); 3] = [
    (0.112_701_665_379_258_31, 5.0 / 18.0),
    (0.5, 8.0 / 18.0),
    (0.887_298_334_620_741_7, 5.0 / 18.0),
];

/// Lorentzian length of the straight chord `a → b` by 3-point Gauss quadrature.
///
/// Returns `None` if the chord is spacelike at a quadrature node; lightlike nodes
/// contribute 0.
pub fn chord_length(m: &MetricField, a: Vec2, b: Vec2) -> Option<f64> {
    let d = b - a;
    let band = crate::metric::TAU_NULL * d.dot(d);
    let mut s = 0.0;
    for (u, w) in GAUSS3 {
        let q = -m.eval(a.lerp(b, u)).quad(d);
        if q < -band {
            return None;
        }
        s += w * q.max(0.0).sqrt();
    }
    Some(s)
}

/// Lorentzian length of the chord by the midpoint rule.
pub fn chord_length_midpoint(m: &MetricField, a: Vec2, b: Vec2) -> Option<f64> {
    let d = b - a;
    let q = -m.eval(a.lerp(b, 0.5)).quad(d);
    if q < -crate::metric::TAU_NULL * d.dot(d) {
        return None;
    }
    Some(q.max(0.0).sqrt())
}

/// Lorentzian length of the chord by Simpson's rule.
pub fn chord_length_simpson(m: &MetricField, a: Vec2, b: Vec2) -> Option<f64> {
    let d = b - a;
    let band = crate::metric::TAU_NULL * d.dot(d);
    let mut s = 0.0;
    for (u, w) in [(0.0, 1.0 / 6.0), (0.5, 4.0 / 6.0), (1.0, 1.0 / 6.0)] {
        let q = -m.eval(a.lerp(b, u)).quad(d);
        if q < -band {
            return None;
        }
        s += w * q.max(0.0).sqrt();
    }
    Some(s)
}

impl SampledCurve {
    pub fn new(parametrization: Parametrization, params: Vec<f64>, nodes: Vec<Vec2>) -> Self {
        Self { parametrization, params, nodes, character: Character::Timelike }
    }

    /// Sets `character` to the worst chord character under `m`.
    pub fn classified(mut self, m: &MetricField) -> Self {
        let mut worst = Character::Timelike;
        for w in self.nodes.windows(2) {
            let d = w[1] - w[0];
            let q = m.eval(w[0].lerp(w[1], 0.5)).quad(d);
            let band = crate::metric::TAU_NULL * d.dot(d);
            if q > band || d.t <= 0.0 {
                worst = Character::Spacelike;
                break;
            } else if q >= -band {
                worst = Character::Lightlike;
            }
        }
        self.character = worst;
        self
    }

    pub fn start(&self) -> Vec2 {
        self.nodes[0]
    }

    pub fn end(&self) -> Vec2 {
        *self.nodes.last().expect("curve has nodes")
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Lorentzian length by Gauss quadrature of each chord.
    pub fn lorentz_length(&self, m: &MetricField) -> Result<f64> {
        self.nodes
            .windows(2)
            .enumerate()
            .try_fold(0.0, |acc, (i, w)| {
                chord_length(m, w[0], w[1])
                    .map(|l| acc + l)
                    .ok_or(LabError::SpacelikeChord { index: i })
            })
    }

    /// Length with respect to the auxiliary metric.
    pub fn riemann_length(&self, m: &MetricField) -> f64 {
        self.nodes.windows(2).map(|w| m.aux.norm(w[1] - w[0])).sum()
    }

    /// Linear interpolation at parameter `s` (clamped to the parameter range).
    pub fn point_at(&self, s: f64) -> Vec2 {
        let ps = &self.params;
        if s <= ps[0] {
            return self.nodes[0];
        }
        if s >= *ps.last().unwrap() {
            return self.end();
        }
        let i = ps.partition_point(|&p| p <= s).max(1) - 1;
        let u = (s - ps[i]) / (ps[i + 1] - ps[i]);
        self.nodes[i].lerp(self.nodes[i + 1], u)
    }

    /// Linear interpolation of the `x` coordinate at coordinate time `t`, for curves that
    /// are graphs over `t`.
    pub fn x_at_time(&self, t: f64) -> Option<f64> {
        let n = &self.nodes;
        if t < n[0].t || t > self.end().t {
            return None;
        }
        let i = n.partition_point(|p| p.t <= t).clamp(1, n.len() - 1) - 1;
        let dt = n[i + 1].t - n[i].t;
        let u = if dt > 0.0 { (t - n[i].t) / dt } else { 0.0 };
        Some(n[i].x + u * (n[i + 1].x - n[i].x))
    }

    /// Resamples at uniform auxiliary arclength with `n` chords.
    pub fn reparametrize_arclength(&self, m: &MetricField, n: usize) -> SampledCurve {
        let mut cum = Vec::with_capacity(self.nodes.len());
        cum.push(0.0);
        for w in self.nodes.windows(2) {
            cum.push(cum.last().unwrap() + m.aux.norm(w[1] - w[0]));
        }
        let total = *cum.last().unwrap();
        let n = n.max(1);
        let mut nodes = Vec::with_capacity(n + 1);
        let mut params = Vec::with_capacity(n + 1);
        let mut j = 0;
        for k in 0..=n {
            let s = total * k as f64 / n as f64;
            while j + 2 < cum.len() && cum[j + 1] < s {
                j += 1;
            }
            let seg = cum[j + 1] - cum[j];
            let u = if seg > 0.0 { ((s - cum[j]) / seg).clamp(0.0, 1.0) } else { 0.0 };
            nodes.push(self.nodes[j].lerp(self.nodes[j + 1], u));
            params.push(s);
        }
        SampledCurve { parametrization: Parametrization::Arclength, params, nodes, character: self.character }
    }

    /// Translates every node by `v`.
    pub fn translated(&self, v: Vec2) -> SampledCurve {
        let mut c = self.clone();
        c.nodes.iter_mut().for_each(|p| *p += v);
        c
    }
}

/// Kind of an intersection between two sampled curves.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CrossingKind {
    Transversal,
    Touching,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Crossing {
    pub point: Vec2,
    pub kind: CrossingKind,
    /// Chord indices in the two curves.
    pub segments: (usize, usize),
}

fn side(a: Vec2, b: Vec2, p: Vec2, snap: f64) -> i8 {
    let c = (b - a).cross(p - a);
    let scale = (b - a).norm().max(1e-300);
    if c.abs() <= snap * scale {
        0
    } else if c > 0.0 {
        1
    } else {
        -1
    }
}

/// Segment-pair intersections between two polylines with snap tolerance `snap`.
///
/// A proper crossing (both segments strictly separate each other's endpoints) is
/// transversal. Contacts through snapped endpoints are merged and classified by whether
/// the curves switch sides.
pub fn crossings(a: &SampledCurve, b: &SampledCurve, snap: f64) -> Vec<Crossing> {
    let mut out: Vec<Crossing> = vec![];
    let bbox = |p: Vec2, q: Vec2| (p.t.min(q.t), p.t.max(q.t), p.x.min(q.x), p.x.max(q.x));
    for (i, wa) in a.nodes.windows(2).enumerate() {
        let ba = bbox(wa[0], wa[1]);
        for (j, wb) in b.nodes.windows(2).enumerate() {
            let bb = bbox(wb[0], wb[1]);
            if ba.1 + snap < bb.0 || bb.1 + snap < ba.0 || ba.3 + snap < bb.2 || bb.3 + snap < ba.2 {
                continue;
            }
            let s1 = side(wa[0], wa[1], wb[0], snap);
            let s2 = side(wa[0], wa[1], wb[1], snap);
            let s3 = side(wb[0], wb[1], wa[0], snap);
            let s4 = side(wb[0], wb[1], wa[1], snap);
            if s1 * s2 > 0 || s3 * s4 > 0 {
                continue;
            }
            let da = wa[1] - wa[0];
            let db = wb[1] - wb[0];
            let den = da.cross(db);
            let point = if den.abs() > 1e-300 {
                let u = (wb[0] - wa[0]).cross(db) / den;
                wa[0] + da * u.clamp(0.0, 1.0)
            } else {
                wa[0]
            };
            let proper = s1 * s2 < 0 && s3 * s4 < 0;
            if let Some(prev) = out.last_mut() {
                if (prev.point - point).norm() <= 10.0 * snap.max(1e-12) {
                    continue;
                }
            }
            let kind = if proper { CrossingKind::Transversal } else { contact_kind(a, b, i, j, point) };
            out.push(Crossing { point, kind, segments: (i, j) });
        }
    }
    out
}

/// Classifies a snapped contact by comparing the side of `b` relative to `a` just before
/// and just after the contact.
fn contact_kind(a: &SampledCurve, b: &SampledCurve, i: usize, j: usize, _p: Vec2) -> CrossingKind {
    let lo_b = j.saturating_sub(1);
    let hi_b = (j + 2).min(b.nodes.len() - 1);
    let lo_a = i.saturating_sub(1);
    let hi_a = (i + 2).min(a.nodes.len() - 1);
    let sa = |k: usize| {
        let p = b.nodes[k];
        let (s, e) = (a.nodes[lo_a], a.nodes[hi_a]);
        (e - s).cross(p - s)
    };
    let before = sa(lo_b);
    let after = sa(hi_b);
    if before * after < 0.0 { CrossingKind::Transversal } else { CrossingKind::Touching }
}

/// Number of transversal crossings strictly away from the endpoints of either curve.
pub fn interior_transversal_count(a: &SampledCurve, b: &SampledCurve, snap: f64) -> usize {
    let ends = [a.start(), a.end(), b.start(), b.end()];
    crossings(a, b, snap)
        .iter()
        .filter(|c| c.kind == CrossingKind::Transversal)
        .filter(|c| ends.iter().all(|e| (c.point - *e).norm() > 1e3 * snap.max(1e-9)))
        .count()
}
