//! Geodesic flow and maximal segments by shooting.

use crate::curve::{chord_length, Parametrization, SampledCurve};
use crate::error::{LabError, Result};
use crate::metric::MetricField;
use crate::vec2::Vec2;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

/// Allowed drift of `g(ẋ,ẋ)` per unit affine time.
pub const TAU_CONS: f64 = 1e-8;

/// Position and velocity on the geodesic flow.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct GeodesicState {
    pub position: Vec2,
    pub velocity: Vec2,
}

impl GeodesicState {
    pub fn new(position: Vec2, velocity: Vec2) -> Self {
        Self { position, velocity }
    }

    pub fn translated(self, k: Vec2) -> Self {
        Self { position: self.position + k, velocity: self.velocity }
    }
}

/// One classical RK4 step of the geodesic equation.
pub fn rk4_step(m: &MetricField, s: GeodesicState, h: f64) -> GeodesicState {
    let f = |p: Vec2, v: Vec2| (v, m.geodesic_acceleration(p, v));
    let (p, v) = (s.position, s.velocity);
    let (k1p, k1v) = f(p, v);
    let (k2p, k2v) = f(p + k1p * (0.5 * h), v + k1v * (0.5 * h));
    let (k3p, k3v) = f(p + k2p * (0.5 * h), v + k2v * (0.5 * h));
    let (k4p, k4v) = f(p + k3p * h, v + k3v * h);
    GeodesicState {
        position: p + (k1p + k2p * 2.0 + k3p * 2.0 + k4p) * (h / 6.0),
        velocity: v + (k1v + k2v * 2.0 + k3v * 2.0 + k4v) * (h / 6.0),
    }
}

/// Integrates the geodesic equation over affine time `[0, τ_max]` with fixed-step RK4.
///
/// Fails when `g(ẋ,ẋ)` drifts by more than `10·τ_cons` with `τ_cons = TAU_CONS·max(1, τ_max)`.
pub fn integrate_geodesic(m: &MetricField, s0: GeodesicState, tau_max: f64, step: f64) -> Result<SampledCurve> {
    Ok(integrate_geodesic_states(m, s0, tau_max, step)?.0)
}

/// As [`integrate_geodesic`], also returning the velocity at each node.
pub fn integrate_geodesic_states(
    m: &MetricField,
    s0: GeodesicState,
    tau_max: f64,
    step: f64,
) -> Result<(SampledCurve, Vec<Vec2>)> {
    if !(step > 0.0) || !(tau_max >= 0.0) {
        return Err(LabError::Config("geodesic step and length must be positive".into()));
    }
    let n = ((tau_max / step).ceil() as usize).max(1);
    let h = tau_max / n as f64;
    let q0 = m.lorentz_norm(s0.position, s0.velocity);
    let tau_cons = TAU_CONS * tau_max.max(1.0) * q0.abs().max(1.0);
    let mut s = s0;
    let mut nodes = Vec::with_capacity(n + 1);
    let mut vels = Vec::with_capacity(n + 1);
    let mut params = Vec::with_capacity(n + 1);
    nodes.push(s.position);
    vels.push(s.velocity);
    params.push(0.0);
    for k in 1..=n {
        s = rk4_step(m, s, h);
        if !s.position.is_finite() || !s.velocity.is_finite() {
            return Err(LabError::Integration(format!("non-finite state at step {k}")));
        }
        let drift = (m.lorentz_norm(s.position, s.velocity) - q0).abs();
        if drift > 10.0 * tau_cons {
            return Err(LabError::Integration(format!(
                "g(v,v) drifted by {drift:e} at step {k}; reduce the step size"
            )));
        }
        nodes.push(s.position);
        vels.push(s.velocity);
        params.push(k as f64 * h);
    }
    Ok((SampledCurve::new(Parametrization::Affine, params, nodes).classified(m), vels))
}

/// Result of flying a geodesic from `p` until coordinate time `t_target`.
#[derive(Clone, Debug)]
struct Flight {
    end: Vec2,
    affine: f64,
    nodes: Vec<Vec2>,
}

/// Integrates from `(p, v0)` until `t = t_target`, landing exactly on the slice.
fn fly_to_time(m: &MetricField, p: Vec2, v0: Vec2, t_target: f64, h: f64, keep: bool) -> Option<Flight> {
    let mut s = GeodesicState::new(p, v0);
    let mut lam = 0.0;
    let mut nodes = vec![];
    if keep {
        nodes.push(p);
    }
    let max_steps = (1e7 as usize).min(((t_target - p.t).abs() / h * 1e3) as usize + 1000);
    for _ in 0..max_steps {
        if s.velocity.t <= 1e-9 {
            return None;
        }
        let next = rk4_step(m, s, h);
        if next.position.t >= t_target {
            // Secant on the partial step size.
            let (mut a, mut fa) = (0.0, s.position.t - t_target);
            let (mut b, mut fb) = (h, next.position.t - t_target);
            let mut land = next;
            for _ in 0..60 {
                let c = if fb != fa { b - fb * (b - a) / (fb - fa) } else { 0.5 * (a + b) };
                let c = if c > a.min(b) && c < a.max(b) { c } else { 0.5 * (a + b) };
                land = rk4_step(m, s, c);
                let fc = land.position.t - t_target;
                if fc.abs() < 1e-14 {
                    lam += c;
                    if keep {
                        nodes.push(land.position);
                    }
                    return Some(Flight { end: land.position, affine: lam, nodes });
                }
                if fc * fa < 0.0 {
                    b = c;
                    fb = fc;
                } else {
                    a = c;
                    fa = fc;
                }
            }
            lam += 0.5 * (a + b);
            if keep {
                nodes.push(land.position);
            }
            return Some(Flight { end: land.position, affine: lam, nodes });
        }
        s = next;
        lam += h;
        if !s.position.is_finite() {
            return None;
        }
        if keep {
            nodes.push(s.position);
        }
    }
    None
}

/// A shot maximal segment.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Shot {
    pub curve: SampledCurve,
    pub length: f64,
    /// Initial slope `dx/dt` of the velocity at `p`.
    pub slope: f64,
    /// Auxiliary distance between the endpoint and `q`.
    pub miss: f64,
}

/// Number of interior rays used to bracket the endpoint.
pub const SHOOT_RAYS: usize = 64;

/// Finds the longest geodesic from `p` to `q` by bisection over the initial slope.
///
/// Rays `(1, σ)` with `σ` strictly between the null slopes at `p` are flown to the time
/// slice of `q`; every sign change of the endpoint offset is refined, and the longest
/// connecting geodesic is returned.
pub fn shoot_maximizer(m: &MetricField, p: Vec2, q: Vec2, tol: f64) -> Result<Shot> {
    let unreachable = || LabError::NoMaximizer("not causally reachable or cone too degenerate".into());
    let dt = q.t - p.t;
    if !(dt > 0.0) {
        return Err(unreachable());
    }
    if m.is_constant() {
        // Straight chords are the geodesics of a constant metric.
        let len = chord_length(m, p, q).ok_or_else(unreachable)?;
        let n = 64;
        let nodes: Vec<Vec2> = (0..=n).map(|k| p.lerp(q, k as f64 / n as f64)).collect();
        let params = (0..=n).map(|k| k as f64 / n as f64).collect();
        let curve = SampledCurve::new(Parametrization::Affine, params, nodes).classified(m);
        return Ok(Shot { curve, length: len, slope: (q.x - p.x) / dt, miss: 0.0 });
    }
    let h = (dt / 400.0).clamp(2.5e-4, 2e-3);
    let (s1, s2) = m.null_slopes(p)?;
    let mut us: Vec<f64> = vec![1e-6];
    us.extend((0..SHOOT_RAYS).map(|j| (j as f64 + 0.5) / SHOOT_RAYS as f64));
    us.push(1.0 - 1e-6);
    let slopes: Vec<f64> = us.iter().map(|u| s2 + (s1 - s2) * u).collect();
    let offs: Vec<Option<f64>> = slopes
        .par_iter()
        .map(|&s| fly_to_time(m, p, Vec2::new(1.0, s), q.t, h, false).map(|f| f.end.x - q.x))
        .collect();
    let mut best: Option<Shot> = None;
    for i in 0..slopes.len() - 1 {
        let (Some(fa), Some(fb)) = (offs[i], offs[i + 1]) else { continue };
        if fa * fb > 0.0 {
            continue;
        }
        let root = refine(m, p, q, h, (slopes[i], fa), (slopes[i + 1], fb));
        let Some(s) = root else { continue };
        let v0 = Vec2::new(1.0, s);
        let Some(f) = fly_to_time(m, p, v0, q.t, h, true) else { continue };
        let miss = m.aux.norm(f.end - q);
        if miss > tol {
            continue;
        }
        let speed = (-m.lorentz_norm(p, v0)).max(0.0).sqrt();
        let length = speed * f.affine;
        let n = f.nodes.len();
        let mut params: Vec<f64> = (0..n - 1).map(|k| k as f64 * h).collect();
        params.push(f.affine.max(params.last().copied().unwrap_or(0.0) + 1e-15));
        let curve = SampledCurve::new(Parametrization::Affine, params, f.nodes).classified(m);
        if best.as_ref().is_none_or(|b| length > b.length) {
            best = Some(Shot { curve, length, slope: s, miss });
        }
    }
    best.ok_or_else(unreachable)
}

/// Illinois iteration on the slope until the endpoint offset vanishes.
fn refine(m: &MetricField, p: Vec2, q: Vec2, h: f64, a: (f64, f64), b: (f64, f64)) -> Option<f64> {
    let (mut a, mut fa) = a;
    let (mut b, mut fb) = b;
    if fa == 0.0 {
        return Some(a);
    }
    if fb == 0.0 {
        return Some(b);
    }
    let mut side = 0i8;
    for _ in 0..200 {
        let c = (a * fb - b * fa) / (fb - fa);
        let c = if c.is_finite() && c > a.min(b) && c < a.max(b) { c } else { 0.5 * (a + b) };
        let fc = fly_to_time(m, p, Vec2::new(1.0, c), q.t, h, false)?.end.x - q.x;
        if fc.abs() < 1e-12 || (b - a).abs() < 1e-15 {
            return Some(c);
        }
        if fc * fb < 0.0 {
            a = b;
            fa = fb;
            side = 0;
        } else {
            if side == 1 {
                fa *= 0.5;
            }
            side = 1;
        }
        b = c;
        fb = fc;
    }
    Some(0.5 * (a + b))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::metric::{Bump, Shear};
    use approx::assert_abs_diff_eq;

    fn bump() -> MetricField {
        MetricField::conformal(Bump { amplitude: 0.3, center: Vec2::new(0.5, 0.5), width_t: Some(0.3), width_x: 0.3 }).unwrap()
    }

    #[test]
    fn flat_geodesics_are_straight() {
        let m = MetricField::flat();
        let c = integrate_geodesic(&m, GeodesicState::new(Vec2::default(), Vec2::new(1.0, 0.0)), 3.0, 1e-2).unwrap();
        assert_abs_diff_eq!(c.end().t, 3.0, epsilon = 1e-12);
        assert_eq!(c.end().x, 0.0);
        let c = integrate_geodesic(&m, GeodesicState::new(Vec2::default(), Vec2::new(2.0, 1.0)), 1.0, 1e-2).unwrap();
        assert_abs_diff_eq!(c.end().t, 2.0, epsilon = 1e-14);
        assert_eq!(m.lorentz_norm(c.end(), Vec2::new(2.0, 1.0)), -3.0);
    }

    #[test]
    fn bump_geodesic_step_halving() {
        let m = bump();
        let s0 = GeodesicState::new(Vec2::new(0.1, 0.2), Vec2::new(1.0, 0.3));
        let a = integrate_geodesic(&m, s0, 2.0, 2e-3).unwrap().end();
        let b = integrate_geodesic(&m, s0, 2.0, 1e-3).unwrap().end();
        assert!((a - b).norm() < 1e-6);
    }

    #[test]
    fn conservation_drift_is_small() {
        for m in [bump(), MetricField::tilted(Shear { tilt: 0.1, shear_t: 0.2, shear_x: 0.1, half_opening: 0.7 }).unwrap()] {
            let s0 = GeodesicState::new(Vec2::new(0.3, 0.1), Vec2::new(1.0, 0.2));
            let (c, v) = integrate_geodesic_states(&m, s0, 5.0, 1e-3).unwrap();
            let q0 = m.lorentz_norm(c.start(), v[0]);
            let q1 = m.lorentz_norm(c.end(), *v.last().unwrap());
            assert!((q1 - q0).abs() <= 1e-8 * 5.0);
        }
    }

    #[test]
    fn deck_equivariance() {
        let m = bump();
        let s0 = GeodesicState::new(Vec2::new(0.3, 0.1), Vec2::new(1.0, -0.4));
        let k = Vec2::new(2.0, -3.0);
        let a = integrate_geodesic(&m, s0, 1.5, 1e-3).unwrap();
        let b = integrate_geodesic(&m, s0.translated(k), 1.5, 1e-3).unwrap();
        for (p, q) in a.nodes.iter().zip(&b.nodes) {
            assert!((*p + k - *q).norm() < 1e-11);
        }
    }

    #[test]
    fn arclength_of_affine_line() {
        let m = MetricField::flat();
        let c = integrate_geodesic(&m, GeodesicState::new(Vec2::default(), Vec2::new(2.0, 0.0)), 1.0, 0.01).unwrap();
        let r = c.reparametrize_arclength(&m, 100);
        assert_abs_diff_eq!(*r.params.last().unwrap(), 2.0 * c.params.last().unwrap(), epsilon = 1e-12);
        assert_abs_diff_eq!(r.end().t, c.end().t, epsilon = 1e-12);
    }

    #[test]
    fn conformal_geodesic_keeps_lorentz_length_under_reparametrization() {
        let m = bump();
        let c = integrate_geodesic(&m, GeodesicState::new(Vec2::new(0.1, 0.3), Vec2::new(1.0, 0.2)), 2.0, 1e-3).unwrap();
        let r = c.reparametrize_arclength(&m, c.len() - 1);
        let (a, b) = (c.lorentz_length(&m).unwrap(), r.lorentz_length(&m).unwrap());
        assert!((a - b).abs() / a < 1e-4);
    }

    #[test]
    fn flat_shooting_examples() {
        let m = MetricField::flat();
        let o = Vec2::default();
        assert_abs_diff_eq!(shoot_maximizer(&m, o, Vec2::new(2.0, 0.0), 1e-9).unwrap().length, 2.0, epsilon = 1e-14);
        assert_abs_diff_eq!(shoot_maximizer(&m, o, Vec2::new(5.0, 3.0), 1e-9).unwrap().length, 4.0, epsilon = 1e-13);
        assert!(shoot_maximizer(&m, o, Vec2::new(1.0, 2.0), 1e-9).is_err());
    }

    #[test]
    fn bump_shot_hits_target_and_is_geodesic_length() {
        let m = bump();
        let (p, q) = (Vec2::new(0.05, 0.1), Vec2::new(1.6, 0.7));
        let s = shoot_maximizer(&m, p, q, 1e-8).unwrap();
        assert!(s.miss < 1e-8);
        // Quadrature of the sampled curve agrees with speed × affine length.
        let l = s.curve.lorentz_length(&m).unwrap();
        assert!((l - s.length).abs() < 1e-6, "{l} vs {}", s.length);
        let flat = ((q.t - p.t).powi(2) - (q.x - p.x).powi(2)).sqrt();
        assert!(s.length > flat);
    }
}
