//! Stable time separation `𝔩` on the stable cone, its unit sphere and corners.

use std::collections::HashMap;
use std::sync::Mutex;

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::action::ActionOptions;
use crate::busemann::PointBusemann;
use crate::distance::{distance, periodic_maximizer, DistanceOptions};
use crate::error::{LabError, Result};
use crate::foliation::{Direction, StableCone};
use crate::metric::{AuxMetric, MetricField};
use crate::rational::{convergents, farey_brackets, simplest_in, Q_MAX};
use crate::vec2::{Homology, Vec2};

/// Convergence tolerance of `𝔩` estimates.
pub const L_TOL: f64 = 1e-3;

/// Relative depth below which directions are refused.
pub const EDGE_EPS: f64 = 0.05;

/// Difference-quotient steps `t = 1/N`.
pub const QUOTIENT_STEPS: [i64; 3] = [8, 16, 32];

/// An estimate of `𝔩(h)`.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SepEstimate {
    pub value: f64,
    /// Largest `t`-winding of the classes used.
    pub q_used: i64,
    /// Successive bracket estimates.
    pub history: Vec<f64>,
    pub converged: bool,
}

/// One-sided derivative of `𝔩` at an integral class along a lattice vector.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct OneSided {
    /// Difference quotients at `t = 1/8, 1/16, 1/32`.
    pub quotients: [f64; 3],
    /// Richardson extrapolation to `t = 0`.
    pub value: f64,
    /// Quotients nondecreasing as `t` shrinks, within `tol`.
    pub monotone: bool,
}

/// `D_v𝔩(h) + D_{-v}𝔩(h)` with its parts.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct CornerGap {
    pub h: Homology,
    pub v: Vec2,
    pub d_plus: f64,
    pub d_minus: f64,
    pub gap: f64,
    pub monotone: bool,
}

impl CornerGap {
    /// Corner when the gap is below `−3·tol`.
    pub fn is_corner(&self, tol: f64) -> bool {
        self.gap < -3.0 * tol
    }
}

/// Stable time separation of one metric, with a cache of closed-maximizer lengths.
pub struct StableSep {
    pub m: MetricField,
    pub cone: StableCone,
    pub action: ActionOptions,
    pub tol: f64,
    cache: Mutex<HashMap<Homology, f64>>,
}

fn solve_pair(h: Vec2, a: Vec2, b: Vec2) -> (f64, f64) {
    let det = a.cross(b);
    (h.cross(b) / det, a.cross(h) / det)
}

impl StableSep {
    pub fn new(m: MetricField, cone: StableCone) -> Self {
        StableSep { m, cone, action: ActionOptions::default(), tol: L_TOL, cache: Mutex::new(HashMap::new()) }
    }

    /// `T_h`, the length of the longest closed causal curve in class `h`.
    pub fn class_length(&self, h: Homology) -> Result<f64> {
        if let Some(v) = self.cache.lock().unwrap().get(&h) {
            return Ok(*v);
        }
        let v = periodic_maximizer(&self.m, &self.cone, h, &self.action)?.period;
        self.cache.lock().unwrap().insert(h, v);
        Ok(v)
    }

    fn check_depth(&self, h: Vec2) -> Result<()> {
        if !self.cone.membership(h, EDGE_EPS) {
            return Err(LabError::Config(format!(
                "direction ({:.4}, {:.4}) is within {EDGE_EPS} of the cone edge",
                h.t, h.x
            )));
        }
        Ok(())
    }

    /// `𝔩(h)` from Farey brackets.
    ///
    /// With `a, b` neighbouring classes of the slope of `h`, superadditivity and
    /// homogeneity give `𝔩(h) ≥ α T_a + β T_b` for `h = α a + β b`, `α, β ≥ 0`; the
    /// bound is refined along the convergents until successive values agree to `tol`.
    pub fn value(&self, h: Vec2) -> Result<SepEstimate> {
        self.check_depth(h)?;
        let y = h.x / h.t;
        if let Some(&(p, q)) = convergents(y, Q_MAX).last().filter(|&&(p, q)| (p as f64 - y * q as f64).abs() < 1e-12 * q as f64) {
            let c = Homology::new(q, p);
            let v = h.t / q as f64 * self.class_length(c)?;
            return Ok(SepEstimate { value: v, q_used: c.t, history: vec![v], converged: true });
        }
        let pairs: Vec<(Homology, Homology)> =
            farey_brackets(y, Q_MAX).into_iter().map(|(a, b)| (Homology::new(a.1, a.0), Homology::new(b.1, b.0))).collect();
        let mut history = Vec::new();
        let mut q_used = 0;
        for (a, b) in pairs {
            if !self.cone.membership(a.as_vec(), 1e-9) || !self.cone.membership(b.as_vec(), 1e-9) {
                continue;
            }
            let (al, be) = solve_pair(h, a.as_vec(), b.as_vec());
            let e = al * self.class_length(a)? + be * self.class_length(b)?;
            q_used = a.t.max(b.t);
            history.push(e);
            let n = history.len();
            if n >= 2 && (history[n - 1] - history[n - 2]).abs() < self.tol {
                return Ok(SepEstimate { value: e, q_used, history, converged: true });
            }
        }
        let value = *history.last().ok_or_else(|| LabError::NoMaximizer("no bracketing pair inside the cone".into()))?;
        Ok(SepEstimate { value, q_used, history, converged: false })
    }

    /// `D_{s·w}𝔩(h)` for primitive `h`, `w = h.complement()`, `s = ±1`, from
    /// `Q(1/N) = T_{Nh+sw} − N T_h`.
    pub fn one_sided(&self, h: Homology, s: i64) -> Result<OneSided> {
        let w = h.complement();
        let th = self.class_length(h)?;
        let q: Vec<f64> = QUOTIENT_STEPS
            .iter()
            .map(|&n| Ok(self.class_length(Homology::new(n * h.t + s * w.t, n * h.x + s * w.x))? - n as f64 * th))
            .collect::<Result<_>>()?;
        let quotients = [q[0], q[1], q[2]];
        let value = (8.0 * q[2] - 6.0 * q[1] + q[0]) / 3.0;
        let monotone = q[1] >= q[0] - self.tol && q[2] >= q[1] - self.tol;
        Ok(OneSided { quotients, value, monotone })
    }

    /// One-sided directional derivative `D_{±v}𝔩(h)`.
    ///
    /// Rational directions split `v = a h₀ + b w` and use `a 𝔩(h₀) + |b| D_{sign(b) w}𝔩(h₀)`;
    /// other directions fall back to Richardson-extrapolated quotients of bracket values.
    pub fn directional_derivative(&self, h: Vec2, v: Vec2, plus: bool) -> Result<(f64, bool)> {
        self.check_depth(h)?;
        let v = if plus { v } else { -v };
        let d = Direction::detect(h, 1e-12, Q_MAX);
        if let Some(h0) = d.homology() {
            let w = h0.complement().as_vec();
            let (a, b) = (v.cross(w), h0.as_vec().cross(v));
            let mut out = a * self.class_length(h0)?;
            let mut mono = true;
            if b != 0.0 {
                let o = self.one_sided(h0, b.signum() as i64)?;
                out += b.abs() * o.value;
                mono = o.monotone;
            }
            return Ok((out, mono));
        }
        let l0 = self.value(h)?.value;
        let q: Vec<f64> = QUOTIENT_STEPS
            .iter()
            .map(|&n| {
                let t = 1.0 / n as f64;
                Ok((self.value(h + v * t)?.value - l0) / t)
            })
            .collect::<Result<_>>()?;
        let mono = q[1] >= q[0] - self.tol && q[2] >= q[1] - self.tol;
        Ok(((8.0 * q[2] - 6.0 * q[1] + q[0]) / 3.0, mono))
    }

    /// Corner gap at the primitive class `h` along `v`.
    pub fn corner_gap(&self, h: Homology, v: Vec2) -> Result<CornerGap> {
        let hv = h.as_vec();
        let (dp, mp) = self.directional_derivative(hv, v, true)?;
        let (dm, mm) = self.directional_derivative(hv, v, false)?;
        Ok(CornerGap { h, v, d_plus: dp, d_minus: dm, gap: dp + dm, monotone: mp && mm })
    }

    /// Turning angle of the unit sphere `𝔩⁻¹(1)` at `h/T_h`, from chords to the sphere
    /// points of `Nh ± w`, extrapolated in `1/N`.
    pub fn sphere_turn(&self, h: Homology) -> Result<f64> {
        let w = h.complement();
        let p0 = h.as_vec() * (1.0 / self.class_length(h)?);
        let mut turns = Vec::new();
        for &n in &QUOTIENT_STEPS {
            let side = |s: i64| -> Result<Vec2> {
                let c = Homology::new(n * h.t + s * w.t, n * h.x + s * w.x);
                Ok((c.as_vec() * (1.0 / self.class_length(c)?) - p0).normalized())
            };
            let (a, b) = (side(1)?, side(-1)?);
            // Zero for a straight line through p0.
            turns.push(std::f64::consts::PI - a.cross(b).abs().atan2(a.dot(b)));
        }
        Ok((8.0 * turns[2] - 6.0 * turns[1] + turns[0]) / 3.0)
    }

    /// Classical Fekete estimates `d(x, x+Th)/T`, averaged over 4 base points, for `T` in
    /// `lengths`. A slow cross-check of [`StableSep::value`].
    pub fn fekete(&self, h: Vec2, lengths: &[f64], opts: &DistanceOptions) -> Result<Vec<(f64, f64)>> {
        lengths
            .iter()
            .map(|&t| {
                let s: f64 = (0..4)
                    .map(|j| {
                        let x = Vec2::new(0.0, j as f64 / 4.0);
                        Ok(distance(&self.m, x, x + h * t, opts)?.value)
                    })
                    .collect::<Result<Vec<f64>>>()?
                    .iter()
                    .sum();
                Ok((t, s / (4.0 * t)))
            })
            .collect()
    }

    /// `T_h` against `max_x d(x, x+h)` over `n_bases` base points on `t = 0`.
    /// Returns `(T_h, max_x d(x, x+h))`.
    pub fn period_cross_check(&self, h: Homology, n_bases: usize, opts: &DistanceOptions) -> Result<(f64, f64)> {
        let th = self.class_length(h)?;
        let best = (0..n_bases)
            .into_par_iter()
            .map(|j| {
                let x = Vec2::new(0.0, j as f64 / n_bases as f64);
                Ok(distance(&self.m, x, x + h.as_vec(), opts)?.value)
            })
            .collect::<Result<Vec<f64>>>()?
            .into_iter()
            .fold(f64::NEG_INFINITY, f64::max);
        Ok((th, best))
    }

    /// Random vector of norm in `[0.5, 2]` in the `eps`-interior of the cone.
    pub fn sample<R: Rng>(&self, eps: f64, rng: &mut R) -> Vec2 {
        loop {
            let h = self.cone.interpolate(rng.gen_range(0.0..1.0)) * rng.gen_range(0.5..2.0);
            if self.cone.membership(h, eps) {
                return h;
            }
        }
    }
}

/// A sample of the separation profile.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ProfileSample {
    /// Unit Euclidean direction.
    pub alpha: Vec2,
    pub class: Option<Homology>,
    /// `𝔩(alpha)`.
    pub l: f64,
    /// `alpha / 𝔩(alpha)`, on `𝔩⁻¹(1)`.
    pub sphere: Vec2,
    pub d_plus: Option<f64>,
    pub d_minus: Option<f64>,
    pub gap: Option<f64>,
    pub q_used: i64,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SeparationProfile {
    pub cone: StableCone,
    pub samples: Vec<ProfileSample>,
}

impl SeparationProfile {
    /// `𝔩` of unit vectors nondecreasing over the first `k` samples and nonincreasing over
    /// the last `k`, within `tol`.
    pub fn edge_monotone(&self, k: usize, tol: f64) -> bool {
        let l: Vec<f64> = self.samples.iter().map(|s| s.l).collect();
        let k = k.min(l.len());
        l[..k].windows(2).all(|w| w[1] >= w[0] - tol) && l[l.len() - k..].windows(2).all(|w| w[1] <= w[0] + tol)
    }

    /// Largest corner gap among samples that carry one.
    pub fn max_gap(&self) -> Option<f64> {
        self.samples.iter().filter_map(|s| s.gap).reduce(f64::max)
    }
}

/// `𝔩` along `n_dirs` directions spread over the `EDGE_EPS`-interior, snapped to the simplest
/// nearby rational slope when one exists. Derivatives are added for classes with
/// `t`-winding at most `derivative_q`.
pub fn unit_sphere(sep: &StableSep, n_dirs: usize, derivative_q: i64) -> Result<SeparationProfile> {
    if n_dirs < 8 {
        return Err(LabError::Config("unit_sphere needs at least 8 directions".into()));
    }
    let cone = sep.cone;
    let margin = EDGE_EPS.asin() / cone.angle() + 1e-3;
    let du = (1.0 - 2.0 * margin) / (n_dirs - 1) as f64;
    let samples = (0..n_dirs)
        .into_par_iter()
        .map(|k| -> Result<ProfileSample> {
            let u = margin + k as f64 * du;
            let a0 = cone.interpolate(u);
            let (lo, hi) = (cone.interpolate(u - du / 3.0), cone.interpolate(u + du / 3.0));
            let class = simplest_in(lo.x / lo.t, hi.x / hi.t, Q_MAX).map(|(p, q)| Homology::new(q, p));
            let alpha = class.map_or(a0, |c| c.as_vec().normalized());
            let est = sep.value(alpha)?;
            let (mut d_plus, mut d_minus, mut gap) = (None, None, None);
            if let Some(c) = class.filter(|c| c.t <= derivative_q) {
                let g = sep.corner_gap(c, c.complement().as_vec())?;
                d_plus = Some(g.d_plus);
                d_minus = Some(g.d_minus);
                gap = Some(g.gap);
            }
            Ok(ProfileSample { alpha, class, l: est.value, sphere: alpha * (1.0 / est.value), d_plus, d_minus, gap, q_used: est.q_used })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(SeparationProfile { cone, samples })
}

/// Outcome of a sampled inequality check on `𝔩`.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct LawReport {
    pub samples: usize,
    pub violations: usize,
    /// Smallest slack margin seen (negative means a violation).
    pub worst_margin: f64,
    /// Inputs of the worst sample.
    pub worst: Vec<Vec2>,
}

impl LawReport {
    fn collect(items: Vec<(f64, Vec<Vec2>)>) -> LawReport {
        let violations = items.iter().filter(|(m, _)| *m < 0.0).count();
        let worst = items.iter().min_by(|a, b| a.0.total_cmp(&b.0)).cloned().unwrap_or((f64::INFINITY, vec![]));
        LawReport { samples: items.len(), violations, worst_margin: worst.0, worst: worst.1 }
    }

    pub fn passed(&self) -> bool {
        self.violations == 0
    }
}

/// `𝔩(h+h′) ≥ 𝔩(h) + 𝔩(h′) − 3·tol` on random pairs.
pub fn superadditivity_check<R: Rng>(sep: &StableSep, n_pairs: usize, rng: &mut R) -> Result<LawReport> {
    let pairs: Vec<(Vec2, Vec2)> = (0..n_pairs).map(|_| (sep.sample(0.1, rng), sep.sample(0.1, rng))).collect();
    let items = pairs
        .par_iter()
        .map(|&(a, b)| {
            let m = sep.value(a + b)?.value - sep.value(a)?.value - sep.value(b)?.value + 3.0 * sep.tol;
            Ok((m, vec![a, b]))
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(LawReport::collect(items))
}

/// `𝔩(θh + (1−θ)h′) ≥ θ𝔩(h) + (1−θ)𝔩(h′) − 3·tol` on random triples.
pub fn concavity_check<R: Rng>(sep: &StableSep, n: usize, rng: &mut R) -> Result<LawReport> {
    let triples: Vec<(Vec2, Vec2, f64)> = (0..n).map(|_| (sep.sample(0.1, rng), sep.sample(0.1, rng), rng.gen_range(0.05..0.95))).collect();
    let items = triples
        .par_iter()
        .map(|&(a, b, th)| {
            let m = sep.value(a * th + b * (1.0 - th))?.value - th * sep.value(a)?.value - (1.0 - th) * sep.value(b)?.value
                + 3.0 * sep.tol;
            Ok((m, vec![a, b, Vec2::new(th, 0.0)]))
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(LawReport::collect(items))
}

/// Homogeneity on integral classes: `|T_{λh} − λT_h| ≤ (1+λ)·tol` for `λ ∈ {2, 3}`, and
/// `|T_h − T_{2h}/2| ≤ 1.5·tol` for `λ = 1/2`, with `h` a random primitive class of
/// `t`-winding at most 4 in the 0.1-interior. Closed maximizers in `λh` are computed
/// directly, not as covers.
pub fn homogeneity_check<R: Rng>(sep: &StableSep, n: usize, rng: &mut R) -> Result<LawReport> {
    let mut classes = Vec::new();
    for q in 1..=4i64 {
        for p in -q..=q {
            let h = Homology::new(q, p);
            if h.gcd() == 1 && sep.cone.membership(h.as_vec(), 0.1) {
                classes.push(h);
            }
        }
    }
    let picks: Vec<(Homology, f64)> =
        (0..n).map(|_| (classes[rng.gen_range(0..classes.len())], [0.5, 2.0, 3.0][rng.gen_range(0..3)])).collect();
    let items = picks
        .par_iter()
        .map(|&(h, lam)| {
            let k = if lam == 3.0 { 3 } else { 2 };
            let big = sep.class_length(Homology::new(k * h.t, k * h.x))?;
            let th = sep.class_length(h)?;
            let (err, allow) = if lam == 0.5 { ((th - big / 2.0).abs(), 1.5 * sep.tol) } else { ((big - lam * th).abs(), (1.0 + lam) * sep.tol) };
            Ok((allow - err, vec![h.as_vec(), Vec2::new(lam, 0.0)]))
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(LawReport::collect(items))
}

/// Bounded difference between `b_γ` and the one-sided derivatives of `𝔩` on the lattice.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ConsistencyReport {
    pub radius: f64,
    /// `sup |b_γ(γ(0)+v) + D_{−v}𝔩(h)|` over lattice `v` with `|v| ≤ R`.
    pub sup: f64,
    /// The same with `− D_v𝔩(h)` in place of `+ D_{−v}𝔩(h)`.
    pub sup_opposite: f64,
    /// `(j, b_γ(γ(0) + j w))` for the transverse offsets reached.
    pub offsets: Vec<(i64, f64)>,
}

/// Compares `b_γ(γ(0)+v)` with `−D_{−v}𝔩(h)` over lattice points `|v| ≤ R`.
///
/// Writing `v = a h + j w`, periodicity of γ gives `b_γ(γ(0)+v) = b_γ(γ(0)+jw) + a T_h`
/// and homogeneity gives `D_{−v}𝔩(h) = −a T_h + |j| D_{−sign(j) w}𝔩(h)`, so the
/// difference depends on `j` only and one Busemann value per offset suffices.
pub fn busemann_consistency(sep: &StableSep, pb: &PointBusemann, radius: f64) -> Result<ConsistencyReport> {
    let (h, _) = pb.line.period.ok_or_else(|| LabError::Config("consistency needs a periodic line".into()))?;
    let hv = h.as_vec();
    let r = radius.floor() as i64;
    let mut js: Vec<i64> = (-r..=r)
        .flat_map(|t| (-r..=r).map(move |x| Vec2::new(t as f64, x as f64)))
        .filter(|v| v.norm() <= radius)
        .map(|v| hv.cross(v).round() as i64)
        .collect();
    js.sort_unstable();
    js.dedup();
    if js.len() < 2 {
        return Err(LabError::Config("lattice ball holds no transverse offsets".into()));
    }
    let d_plus = sep.one_sided(h, 1)?.value;
    let d_minus = sep.one_sided(h, -1)?.value;
    let w = h.complement().as_vec();
    let base = pb.line.base();
    let offsets: Vec<(i64, f64)> =
        js.par_iter().map(|&j| Ok((j, pb.value(base + w * j as f64)?.value))).collect::<Result<_>>()?;
    let (mut sup, mut sup_opp) = (0.0f64, 0.0f64);
    for &(j, b) in &offsets {
        let n = j.abs() as f64;
        // D_{−jw} and D_{jw} at h.
        let (d_neg, d_pos) = if j >= 0 { (d_minus, d_plus) } else { (d_plus, d_minus) };
        sup = sup.max((b + n * d_neg).abs());
        sup_opp = sup_opp.max((b - n * d_pos).abs());
    }
    Ok(ConsistencyReport { radius, sup, sup_opposite: sup_opp, offsets })
}

/// Stable norm of the auxiliary metric; only the Euclidean case is supported.
pub fn riemann_stable_norm(aux: &AuxMetric, v: Vec2) -> Result<f64> {
    match aux {
        AuxMetric::Euclidean => Ok(v.norm()),
        _ => Err(LabError::NotImplemented("stable norm of a non-Euclidean auxiliary metric".into())),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::busemann::ReferenceLine;
    use crate::metric::Bump;
    use approx::assert_abs_diff_eq;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn flat() -> MetricField {
        MetricField::flat()
    }

    #[test]
    fn flat_examples() {
        let m = flat();
        let s = StableSep::new(m, StableCone::flat());
        assert_abs_diff_eq!(s.value(Vec2::new(1.0, 0.0)).unwrap().value, 1.0, epsilon = 1e-12);
        assert_abs_diff_eq!(s.value(Vec2::new(5.0, 3.0)).unwrap().value, 4.0, epsilon = 1e-12);
        assert_abs_diff_eq!(s.value(Vec2::new(2.0, 0.0)).unwrap().value, 2.0, epsilon = 1e-12);
        assert!(s.value(Vec2::new(1.0, 0.99)).is_err());
    }

    #[test]
    fn flat_closed_form_on_irrational_directions() {
        let m = flat();
        let s = StableSep::new(m, StableCone::flat());
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        for _ in 0..100 {
            let h = s.sample(0.1, &mut rng);
            let e = s.value(h).unwrap();
            assert!((e.value - (h.t * h.t - h.x * h.x).sqrt()).abs() <= 5e-3, "{h:?} {e:?}");
        }
    }

    #[test]
    fn flat_derivatives() {
        let m = flat();
        let s = StableSep::new(m, StableCone::flat());
        let (d, mono) = s.directional_derivative(Vec2::new(1.0, 0.0), Vec2::new(0.0, 1.0), true).unwrap();
        assert!(d.abs() < 1e-3 && mono, "{d}");
        let (d, _) = s.directional_derivative(Vec2::new(5.0, 3.0) * 0.25, Vec2::new(0.0, 1.0), true).unwrap();
        assert_abs_diff_eq!(d, -0.75, epsilon = 1e-3);
        let h = Vec2::new(5.0, 3.0) * 0.25;
        let (d, _) = s.directional_derivative(h, h, true).unwrap();
        assert_abs_diff_eq!(d, 1.0, epsilon = 1e-9);
        let g = s.corner_gap(Homology::new(1, 0), Vec2::new(0.0, 1.0)).unwrap();
        assert!(g.gap.abs() <= 3.0 * L_TOL && !g.is_corner(L_TOL));
        assert!(s.sphere_turn(Homology::new(1, 0)).unwrap().abs() < 1e-3);
    }

    #[test]
    fn flat_laws() {
        let m = flat();
        let s = StableSep::new(m, StableCone::flat());
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        assert!(superadditivity_check(&s, 50, &mut rng).unwrap().passed());
        assert!(concavity_check(&s, 50, &mut rng).unwrap().passed());
        assert!(homogeneity_check(&s, 20, &mut rng).unwrap().passed());
        assert_abs_diff_eq!(s.value(Vec2::new(7.0, 3.0)).unwrap().value, 40f64.sqrt(), epsilon = 1e-9);
    }

    #[test]
    fn flat_unit_sphere_is_hyperbola() {
        let m = flat();
        let s = StableSep::new(m, StableCone::flat());
        let p = unit_sphere(&s, 17, 1).unwrap();
        for x in &p.samples {
            let q = x.sphere;
            assert!((q.t * q.t - q.x * q.x - 1.0).abs() < 5e-3, "{x:?}");
        }
        let mid = &p.samples[8];
        assert_eq!(mid.class, Some(Homology::new(1, 0)));
        assert!((mid.sphere - Vec2::new(1.0, 0.0)).norm() < 1e-12);
        assert!(mid.gap.unwrap().abs() < 3e-3);
        assert!(p.edge_monotone(4, 1e-3));
    }

    #[test]
    fn flat_consistency_vanishes() {
        let m = flat();
        let s = StableSep::new(m, StableCone::flat());
        let pm = periodic_maximizer(&m, &s.cone, Homology::new(1, 0), &ActionOptions::default()).unwrap();
        let line = ReferenceLine::periodic(&m, &pm);
        let pb = PointBusemann::new(&m, &line);
        let r = busemann_consistency(&s, &pb, 4.0).unwrap();
        assert!(r.sup < 1e-3 && r.sup_opposite < 1e-3, "{r:?}");
    }

    #[test]
    fn stable_norm() {
        assert_eq!(riemann_stable_norm(&AuxMetric::Euclidean, Vec2::new(3.0, 4.0)).unwrap(), 5.0);
        assert_eq!(riemann_stable_norm(&AuxMetric::Euclidean, Vec2::default()).unwrap(), 0.0);
        assert_eq!(riemann_stable_norm(&AuxMetric::Euclidean, Vec2::new(1.0, 0.0)).unwrap(), 1.0);
        let d = AuxMetric::Diagonal { tt: 2.0, xx: 1.0 };
        assert!(matches!(riemann_stable_norm(&d, Vec2::new(1.0, 0.0)), Err(LabError::NotImplemented(_))));
    }

    #[test]
    fn stripe_corner_matches_linear_parts() {
        let bump = Bump { amplitude: 0.15, center: Vec2::new(0.0, 0.5), width_t: None, width_x: 0.35 };
        let m = MetricField::conformal(bump).unwrap();
        let s = StableSep::new(m, StableCone::flat());
        let g = s.corner_gap(Homology::new(1, 0), Vec2::new(0.0, 1.0)).unwrap();
        assert!(g.is_corner(L_TOL) && g.monotone, "{g:?}");
        assert!(s.sphere_turn(Homology::new(1, 0)).unwrap() > 3.0 * L_TOL);
        let pm = periodic_maximizer(&m, &s.cone, Homology::new(1, 0), &s.action).unwrap();
        let line = ReferenceLine::periodic(&m, &pm);
        let pb = PointBusemann::new(&m, &line);
        let lm = crate::busemann::linear_parts(&pb, crate::busemann::Side::Minus, 1e-3).unwrap();
        let lp = crate::busemann::linear_parts(&pb, crate::busemann::Side::Plus, 1e-3).unwrap();
        assert_abs_diff_eq!(g.gap.abs(), lm.l_w - lp.l_w, epsilon = 2.0 * L_TOL);
        let (th, dmax) = s.period_cross_check(Homology::new(1, 0), 8, &DistanceOptions::fast()).unwrap();
        assert_abs_diff_eq!(th, 0.15f64.exp(), epsilon = 1e-4);
        assert!((th - dmax).abs() <= 2.0 * L_TOL, "{th} {dmax}");
        let r = busemann_consistency(&s, &pb, 3.0).unwrap();
        assert!(r.sup < 2e-3, "{r:?}");
        assert!(r.sup_opposite > 1.0, "{r:?}");
    }
}
