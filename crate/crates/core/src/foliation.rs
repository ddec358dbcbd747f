//! Lightlike foliations, their asymptotic directions, and the stable time cone.

use crate::curve::{Parametrization, SampledCurve};
use crate::error::{LabError, Result};
use crate::metric::{Character, MetricField};
use crate::rational::{simplest_in, Q_MAX};
use crate::vec2::{Homology, Vec2};
use serde::{Deserialize, Serialize};

/// Convergence tolerance for rotation-number doubling.
pub const ROTATION_TOL: f64 = 1e-4;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum Rationality {
    /// Proportional to the class `(q, p)`; `p` counts `x`-windings, `q` counts `t`-windings.
    Rational { p: i64, q: i64 },
    Irrational,
    Unknown,
}

/// Unit homology direction.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Direction {
    pub vector: Vec2,
    pub rationality: Rationality,
}

impl Direction {
    pub fn rational(h: Homology) -> Direction {
        let h = h.primitive();
        Direction {
            vector: h.as_vec().normalized(),
            rationality: Rationality::Rational { p: h.x, q: h.t },
        }
    }

    /// Direction of `v`, tagged rational when within `tol` (in angle) of a class with
    /// denominator at most `q_max`.
    pub fn detect(v: Vec2, tol: f64, q_max: i64) -> Direction {
        let vector = v.normalized();
        let a = vector.angle();
        let rationality = if vector.t > 0.0 && a.abs() + tol < std::f64::consts::FRAC_PI_2 {
            match simplest_in((a - tol).tan(), (a + tol).tan(), q_max) {
                Some((p, q)) => Rationality::Rational { p, q },
                None => Rationality::Unknown,
            }
        } else {
            Rationality::Unknown
        };
        Direction { vector, rationality }
    }

    pub fn homology(&self) -> Option<Homology> {
        match self.rationality {
            Rationality::Rational { p, q } => Some(Homology::new(q, p)),
            _ => None,
        }
    }
}

/// Integrates `ẋ = X_which(x)` from `p0` over auxiliary arclength `length` with RK4.
pub fn integrate_null_curve(
    m: &MetricField,
    p0: Vec2,
    which: u8,
    length: f64,
    step: f64,
) -> Result<SampledCurve> {
    if !(length > 0.0) || !(step > 0.0) {
        return Err(LabError::Config("length and step must be positive".into()));
    }
    let field = |p: Vec2| -> Result<Vec2> {
        let (x1, x2) = m.null_directions(p)?;
        Ok(if which == 1 { x1 } else { x2 })
    };
    let n = (length / step).ceil() as usize;
    let h = length / n as f64;
    let mut nodes = Vec::with_capacity(n + 1);
    let mut params = Vec::with_capacity(n + 1);
    let mut p = p0;
    nodes.push(p);
    params.push(0.0);
    for k in 1..=n {
        let k1 = field(p)?;
        let k2 = field(p + k1 * (0.5 * h))?;
        let k3 = field(p + k2 * (0.5 * h))?;
        let k4 = field(p + k3 * h)?;
        p += (k1 + k2 * 2.0 + k3 * 2.0 + k4) * (h / 6.0);
        nodes.push(p);
        params.push(k as f64 * h);
    }
    let mut c = SampledCurve::new(Parametrization::Arclength, params, nodes);
    c.character = Character::Lightlike;
    Ok(c)
}

/// Position `x(t)` of the null curve of slope `σ_which` starting at `(0, x0)`, integrated
/// over coordinate time with RK4 of step `dt`, sampled at each multiple of `record`.
fn null_graph(
    m: &MetricField,
    which: u8,
    x0: f64,
    t_end: f64,
    dt: f64,
) -> Result<f64> {
    let slope = |t: f64, x: f64| -> Result<f64> {
        let (s1, s2) = m.null_slopes(Vec2::new(t, x))?;
        Ok(if which == 1 { s1 } else { s2 })
    };
    let n = (t_end / dt).round() as usize;
    let mut x = x0;
    for k in 0..n {
        let t = k as f64 * dt;
        let k1 = slope(t, x)?;
        let k2 = slope(t + 0.5 * dt, x + 0.5 * dt * k1)?;
        let k3 = slope(t + 0.5 * dt, x + 0.5 * dt * k2)?;
        let k4 = slope(t + dt, x + dt * k3)?;
        x += dt * (k1 + 2.0 * k2 + 2.0 * k3 + k4) / 6.0;
    }
    Ok(x)
}

/// Asymptotic direction of the integral curves of `X_which`.
///
/// The estimate `(γ(L) - γ(0))/|γ(L) - γ(0)|` is computed for `L, 2L, 4L, …` (in units of
/// coordinate time) until successive estimates differ by less than `tol`.
pub fn null_rotation_number(m: &MetricField, which: u8, length: f64, tol: f64) -> Result<Direction> {
    const MAX_LENGTH: f64 = 65536.0;
    const DT: f64 = 0.01;
    let est = |l: f64| -> Result<Vec2> {
        let x = null_graph(m, which, 0.0, l, DT)?;
        Ok(Vec2::new(l, x).normalized())
    };
    let mut l = length.max(1.0);
    let mut prev = est(l)?;
    loop {
        let next_l = 2.0 * l;
        let next = est(next_l)?;
        if (next - prev).norm() < tol {
            return Ok(Direction::detect(next, tol, Q_MAX));
        }
        if next_l >= MAX_LENGTH {
            return Err(LabError::Integration(format!(
                "rotation number did not converge: last estimates ({:.8}, {:.8}) and ({:.8}, {:.8})",
                prev.t, prev.x, next.t, next.x
            )));
        }
        prev = next;
        l = next_l;
    }
}

/// The stable time cone spanned by the asymptotic null directions `m⁻ < m⁺`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct StableCone {
    pub m_minus: Direction,
    pub m_plus: Direction,
}

impl StableCone {
    /// Builds the cone from two directions, ordering them counterclockwise.
    pub fn from_directions(a: Direction, b: Direction, tol: f64) -> Result<StableCone> {
        let c = a.vector.cross(b.vector);
        if c.abs() < tol || (a.vector - b.vector).norm() < tol {
            return Err(LabError::NotClassA(format!(
                "asymptotic null directions coincide: ({:.6}, {:.6}) and ({:.6}, {:.6})",
                a.vector.t, a.vector.x, b.vector.t, b.vector.x
            )));
        }
        Ok(if c > 0.0 {
            StableCone { m_minus: a, m_plus: b }
        } else {
            StableCone { m_minus: b, m_plus: a }
        })
    }

    pub fn flat() -> StableCone {
        StableCone {
            m_minus: Direction::rational(Homology::new(1, -1)),
            m_plus: Direction::rational(Homology::new(1, 1)),
        }
    }

    pub fn angle(&self) -> f64 {
        self.m_minus.vector.cross(self.m_plus.vector).atan2(self.m_minus.vector.dot(self.m_plus.vector))
    }

    pub fn contains(&self, h: Vec2) -> bool {
        self.m_minus.vector.cross(h) >= 0.0 && h.cross(self.m_plus.vector) >= 0.0
    }

    /// Euclidean distance from `h` to the boundary rays.
    pub fn distance_to_boundary(&self, h: Vec2) -> f64 {
        let ray = |m: Vec2| {
            let s = h.dot(m);
            if s <= 0.0 { h.norm() } else { m.cross(h).abs() }
        };
        ray(self.m_minus.vector).min(ray(self.m_plus.vector))
    }

    /// Relative depth `dist(h, ∂𝔗)/|h|` for `h` inside the cone, negative outside.
    pub fn depth(&self, h: Vec2) -> f64 {
        let d = self.distance_to_boundary(h) / h.norm();
        if self.contains(h) { d } else { -d }
    }

    /// `h ∈ 𝔗^ε`: inside the cone with `dist(h, ∂𝔗) ≥ ε|h|`.
    pub fn membership(&self, h: Vec2, eps: f64) -> bool {
        h.norm() > 0.0 && self.contains(h) && self.distance_to_boundary(h) >= eps * h.norm()
    }

    /// Unit vector at fraction `u ∈ [0,1]` of the cone angle, from `m⁻` toward `m⁺`.
    pub fn interpolate(&self, u: f64) -> Vec2 {
        let a = self.m_minus.vector.angle();
        Vec2::from_angle(a + u * self.angle())
    }
}

/// `cone_membership(c, h, ε)`.
pub fn cone_membership(c: &StableCone, h: Vec2, eps: f64) -> bool {
    c.membership(h, eps)
}

/// Tolerance below which the two asymptotic directions are considered equal.
pub const CLASS_A_TOL: f64 = 1e-3;

/// Integrates both null foliations and returns the stable cone, or `NotClassA`.
pub fn stable_cone(m: &MetricField) -> Result<StableCone> {
    if matches!(m.family, crate::metric::Family::Flat | crate::metric::Family::Conformal(_)) {
        return Ok(StableCone::flat());
    }
    let a = null_rotation_number(m, 1, 16.0, ROTATION_TOL)?;
    let b = null_rotation_number(m, 2, 16.0, ROTATION_TOL)?;
    StableCone::from_directions(a, b, CLASS_A_TOL)
}

/// Same as [`stable_cone`] but integrates the foliations for every family.
pub fn stable_cone_integrated(m: &MetricField) -> Result<StableCone> {
    let a = null_rotation_number(m, 1, 16.0, ROTATION_TOL)?;
    let b = null_rotation_number(m, 2, 16.0, ROTATION_TOL)?;
    StableCone::from_directions(a, b, CLASS_A_TOL)
}

/// Largest distance of `γ(t) - γ(s)` from the ray `R₊m` over sampled windows of a null curve.
pub fn confinement_sup<R: rand::Rng>(
    curve: &SampledCurve,
    m: Vec2,
    n_windows: usize,
    rng: &mut R,
) -> f64 {
    let n = curve.nodes.len();
    (0..n_windows)
        .map(|_| {
            let i = rng.gen_range(0..n);
            let j = rng.gen_range(i..n);
            let d = curve.nodes[j] - curve.nodes[i];
            if d.dot(m) <= 0.0 { d.norm() } else { m.cross(d).abs() }
        })
        .fold(0.0, f64::max)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::metric::{Bump, Shear};
    use approx::assert_abs_diff_eq;
    use rand::SeedableRng;

    fn bump() -> MetricField {
        MetricField::conformal(Bump { amplitude: 0.4, center: Vec2::new(0.3, 0.6), width_t: Some(0.3), width_x: 0.3 }).unwrap()
    }

    fn shear_t(s: f64) -> MetricField {
        MetricField::tilted(Shear { tilt: 0.1, shear_t: s, shear_x: 0.0, half_opening: 0.7 }).unwrap()
    }

    #[test]
    fn flat_null_curve_endpoint() {
        let c = integrate_null_curve(&MetricField::flat(), Vec2::default(), 1, 2f64.sqrt(), 0.01).unwrap();
        assert_abs_diff_eq!(c.end().t, 1.0, epsilon = 1e-12);
        assert_abs_diff_eq!(c.end().x, 1.0, epsilon = 1e-12);
    }

    #[test]
    fn conformal_null_curve_matches_flat() {
        let c = integrate_null_curve(&bump(), Vec2::default(), 1, 2f64.sqrt(), 0.01).unwrap();
        assert_abs_diff_eq!(c.end().t, 1.0, epsilon = 1e-6);
        assert_abs_diff_eq!(c.end().x, 1.0, epsilon = 1e-6);
        let m = bump();
        for w in c.nodes.windows(2) {
            let d = (w[1] - w[0]).normalized();
            assert!(m.lorentz_norm(w[0], d).abs() <= 10.0 * crate::metric::TAU_NULL);
        }
    }

    #[test]
    fn tilted_null_curve_step_halving() {
        let m = MetricField::tilted(Shear { tilt: 0.1, shear_t: 0.2, shear_x: 0.15, half_opening: 0.8 }).unwrap();
        let a = integrate_null_curve(&m, Vec2::new(0.1, 0.2), 1, 3.0, 0.02).unwrap().end();
        let b = integrate_null_curve(&m, Vec2::new(0.1, 0.2), 1, 3.0, 0.01).unwrap().end();
        // Richardson for a 4th-order scheme.
        let r = b + (b - a) * (1.0 / 15.0);
        assert!((r - b).norm() < 1e-6);
    }

    #[test]
    fn flat_and_conformal_rotation_numbers() {
        let s = 0.5f64.sqrt();
        for m in [MetricField::flat(), bump()] {
            let d1 = null_rotation_number(&m, 1, 16.0, ROTATION_TOL).unwrap();
            let d2 = null_rotation_number(&m, 2, 16.0, ROTATION_TOL).unwrap();
            assert_abs_diff_eq!(d1.vector.x, s, epsilon = 1e-9);
            assert_abs_diff_eq!(d2.vector.x, -s, epsilon = 1e-9);
            assert_eq!(d1.rationality, Rationality::Rational { p: 1, q: 1 });
        }
        let c = stable_cone_integrated(&bump()).unwrap();
        let f = StableCone::flat();
        assert!((c.m_plus.vector - f.m_plus.vector).norm() < 1e-9);
        assert!((c.m_minus.vector - f.m_minus.vector).norm() < 1e-9);
    }

    #[test]
    fn tilted_rotation_matches_slope_average() {
        // Slopes depend on t only, so the mean slope over one period is exact.
        let m = shear_t(0.2);
        let cone = stable_cone(&m).unwrap();
        let avg = |which: u8| {
            let n = 10_000;
            (0..n).map(|k| {
                let (a, b) = m.null_slopes(Vec2::new((k as f64 + 0.5) / n as f64, 0.0)).unwrap();
                if which == 1 { a } else { b }
            }).sum::<f64>() / n as f64
        };
        let plus = Vec2::new(1.0, avg(1)).normalized();
        let minus = Vec2::new(1.0, avg(2)).normalized();
        assert!((cone.m_plus.vector - plus).norm() < 1e-4);
        assert!((cone.m_minus.vector - minus).norm() < 1e-4);
        assert!(cone.angle() > 0.0 && cone.angle() < std::f64::consts::PI);
    }

    #[test]
    fn locked_foliations_are_not_class_a() {
        let m = MetricField::tilted(Shear { tilt: 0.0, shear_t: 0.0, shear_x: 0.5, half_opening: 0.3 }).unwrap();
        assert!(matches!(stable_cone(&m), Err(LabError::NotClassA(_))));
    }

    #[test]
    fn membership_examples() {
        let c = StableCone::flat();
        assert!(cone_membership(&c, Vec2::new(1.0, 0.0), 0.5));
        assert!(!cone_membership(&c, Vec2::new(1.0, 1.0), 1e-9));
        assert!(!cone_membership(&c, Vec2::new(1.0, 0.99), 0.5));
        assert!(!cone_membership(&c, Vec2::new(-1.0, 0.0), 0.1));
        assert_abs_diff_eq!(c.distance_to_boundary(Vec2::new(1.0, 0.0)), 0.5f64.sqrt(), epsilon = 1e-15);
    }

    #[test]
    fn null_curves_stay_near_their_ray() {
        let m = MetricField::tilted(Shear { tilt: 0.1, shear_t: 0.2, shear_x: 0.15, half_opening: 0.8 }).unwrap();
        let cone = stable_cone(&m).unwrap();
        let c = integrate_null_curve(&m, Vec2::default(), 1, 400.0, 0.05).unwrap();
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(11);
        let short = confinement_sup(&SampledCurve { nodes: c.nodes[..2000].to_vec(), ..c.clone() }, cone.m_plus.vector, 100, &mut rng);
        let long = confinement_sup(&c, cone.m_plus.vector, 100, &mut rng);
        assert!(long.is_finite() && long < 2.0 * short.max(0.5));
    }

    #[test]
    fn detected_rationality() {
        let d = Direction::detect(Vec2::new(3.0, 1.0), 1e-4, 50);
        assert_eq!(d.rationality, Rationality::Rational { p: 1, q: 3 });
        let g = Direction::detect(Vec2::new(1.0, 2f64.sqrt() - 1.0), 1e-6, 50);
        assert_eq!(g.rationality, Rationality::Unknown);
    }
}
