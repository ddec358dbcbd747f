//! Periodic Lorentzian metrics on the torus and pointwise causal geometry.

use crate::error::{LabError, Result};
use crate::vec2::Vec2;
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

/// Width of the band around the null cone inside which a vector counts as lightlike.
pub const TAU_NULL: f64 = 1e-9;

/// Finite-difference step for metric derivatives.
pub const H_GAMMA: f64 = 1e-5;

/// Symmetric 2×2 component matrix in coordinates `(t, x)`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Components {
    pub tt: f64,
    pub tx: f64,
    pub xx: f64,
}

impl Components {
    pub fn minkowski() -> Self {
        Self { tt: -1.0, tx: 0.0, xx: 1.0 }
    }

    pub fn det(&self) -> f64 {
        self.tt * self.xx - self.tx * self.tx
    }

    pub fn apply(&self, a: Vec2, b: Vec2) -> f64 {
        self.tt * a.t * b.t + self.tx * (a.t * b.x + a.x * b.t) + self.xx * a.x * b.x
    }

    pub fn quad(&self, v: Vec2) -> f64 {
        self.apply(v, v)
    }

    pub fn inverse(&self) -> Components {
        let d = self.det();
        Components { tt: self.xx / d, tx: -self.tx / d, xx: self.tt / d }
    }

    /// `g^{-1} w` for a covector `w = (w_t, w_x)`.
    pub fn raise(&self, w: Vec2) -> Vec2 {
        let inv = self.inverse();
        Vec2::new(inv.tt * w.t + inv.tx * w.x, inv.tx * w.t + inv.xx * w.x)
    }

    fn scaled(&self, s: f64) -> Components {
        Components { tt: self.tt * s, tx: self.tx * s, xx: self.xx * s }
    }
}

/// Smooth periodic bump `φ = a·exp(-(S(t-t0)/w_t² + S(x-x0)/w_x²))` with `S(u) = sin²(πu)/π²`.
///
/// With `width_t = None` the bump is a stripe independent of `t`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Bump {
    pub amplitude: f64,
    pub center: Vec2,
    pub width_t: Option<f64>,
    pub width_x: f64,
}

fn bump_s(u: f64) -> (f64, f64, f64) {
    let s = (PI * u).sin();
    (s * s / (PI * PI), (2.0 * PI * u).sin() / PI, 2.0 * (2.0 * PI * u).cos())
}

impl Bump {
    /// Returns `φ` and its first partial derivatives `(φ_t, φ_x)`.
    pub fn phi(&self, p: Vec2) -> (f64, Vec2) {
        let (sx, dsx, _) = bump_s(p.x - self.center.x);
        let wx2 = self.width_x * self.width_x;
        let (mut e, mut de) = (sx / wx2, Vec2::new(0.0, dsx / wx2));
        if let Some(wt) = self.width_t {
            let (st, dst, _) = bump_s(p.t - self.center.t);
            e += st / (wt * wt);
            de.t = dst / (wt * wt);
        }
        let phi = self.amplitude * (-e).exp();
        (phi, de * (-phi))
    }
}

/// Shear data for `g = (dx - σ₁ dt)(dx - σ₂ dt)` with `σ₁,₂ = c ± w`,
/// `c(t,x) = tilt + shear_t·sin(2πt) + shear_x·sin(2πx)`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Shear {
    pub tilt: f64,
    pub shear_t: f64,
    pub shear_x: f64,
    pub half_opening: f64,
}

impl Shear {
    /// Returns `c` and `(c_t, c_x)`.
    pub fn center_slope(&self, p: Vec2) -> (f64, Vec2) {
        let c = self.tilt
            + self.shear_t * (2.0 * PI * p.t).sin()
            + self.shear_x * (2.0 * PI * p.x).sin();
        let dc = Vec2::new(
            2.0 * PI * self.shear_t * (2.0 * PI * p.t).cos(),
            2.0 * PI * self.shear_x * (2.0 * PI * p.x).cos(),
        );
        (c, dc)
    }
}

/// Built-in metric families.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "lowercase")]
pub enum Family {
    Flat,
    Conformal(Bump),
    Tilted(Shear),
}

/// Auxiliary Riemannian metric. Only constant diagonal metrics are supported.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub enum AuxMetric {
    Euclidean,
    Diagonal { tt: f64, xx: f64 },
}

impl AuxMetric {
    pub fn apply(&self, a: Vec2, b: Vec2) -> f64 {
        match *self {
            AuxMetric::Euclidean => a.dot(b),
            AuxMetric::Diagonal { tt, xx } => tt * a.t * b.t + xx * a.x * b.x,
        }
    }

    pub fn norm(&self, v: Vec2) -> f64 {
        self.apply(v, v).max(0.0).sqrt()
    }
}

/// Causal character of a tangent vector.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Character {
    Timelike,
    Lightlike,
    Spacelike,
}

/// Time orientation of a tangent vector.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TimeDirection {
    Future,
    Past,
    None,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct CausalClass {
    pub character: Character,
    pub direction: TimeDirection,
}

impl CausalClass {
    pub fn is_future_causal(&self) -> bool {
        self.character != Character::Spacelike && self.direction == TimeDirection::Future
    }

    pub fn is_future_timelike(&self) -> bool {
        self.character == Character::Timelike && self.direction == TimeDirection::Future
    }
}

/// Tangent vector with its base point.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TangentVector {
    pub base: Vec2,
    pub v: Vec2,
}

/// Christoffel symbols `gamma[k][i][j] = Γ^k_{ij}`, index 0 = t, 1 = x.
pub type Christoffel = [[[f64; 2]; 2]; 2];

/// Periodic Lorentzian metric on the torus with auxiliary metric and time orientation.
///
/// Future is increasing `t` for every built-in family.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricField {
    pub family: Family,
    pub aux: AuxMetric,
}

impl MetricField {
    pub fn flat() -> Self {
        Self { family: Family::Flat, aux: AuxMetric::Euclidean }
    }

    pub fn conformal(bump: Bump) -> Result<Self> {
        let widths_ok = bump.width_x > 0.0 && bump.width_t.is_none_or(|w| w > 0.0);
        if !widths_ok || !bump.amplitude.is_finite() {
            return Err(LabError::Config("conformal bump needs positive widths".into()));
        }
        Ok(Self { family: Family::Conformal(bump), aux: AuxMetric::Euclidean })
    }

    pub fn tilted(shear: Shear) -> Result<Self> {
        if !(shear.half_opening > 0.0) {
            return Err(LabError::Config("tilted metric needs half_opening > 0".into()));
        }
        Ok(Self { family: Family::Tilted(shear), aux: AuxMetric::Euclidean })
    }

    pub fn with_aux(mut self, aux: AuxMetric) -> Self {
        self.aux = aux;
        self
    }

    /// True when geodesics are straight lines in coordinates (constant components).
    pub fn is_constant(&self) -> bool {
        match self.family {
            Family::Flat => true,
            Family::Conformal(b) => b.amplitude == 0.0,
            Family::Tilted(s) => s.shear_t == 0.0 && s.shear_x == 0.0,
        }
    }

    /// Sufficient condition for `∂_t` to be timelike everywhere.
    pub fn dt_timelike(&self) -> bool {
        match self.family {
            Family::Flat | Family::Conformal(_) => true,
            Family::Tilted(s) => {
                s.tilt.abs() + s.shear_t.abs() + s.shear_x.abs() < s.half_opening
            }
        }
    }

    pub fn eval(&self, p: Vec2) -> Components {
        self.eval_with_derivatives(p).0
    }

    /// Components and their partial derivatives `(∂_t g, ∂_x g)`.
    pub fn eval_with_derivatives(&self, p: Vec2) -> (Components, [Components; 2]) {
        match self.family {
            Family::Flat => {
                let z = Components { tt: 0.0, tx: 0.0, xx: 0.0 };
                (Components::minkowski(), [z, z])
            }
            Family::Conformal(b) => {
                let (phi, dphi) = b.phi(p);
                let e = (2.0 * phi).exp();
                let g = Components::minkowski().scaled(e);
                (g, [g.scaled(2.0 * dphi.t), g.scaled(2.0 * dphi.x)])
            }
            Family::Tilted(s) => {
                let (c, dc) = s.center_slope(p);
                let w = s.half_opening;
                let g = Components { tt: c * c - w * w, tx: -c, xx: 1.0 };
                let d = |dci: f64| Components { tt: 2.0 * c * dci, tx: -dci, xx: 0.0 };
                (g, [d(dc.t), d(dc.x)])
            }
        }
    }

    pub fn lorentz_norm(&self, p: Vec2, v: Vec2) -> f64 {
        self.eval(p).quad(v)
    }

    pub fn classify(&self, tv: TangentVector) -> CausalClass {
        let n2 = self.aux.apply(tv.v, tv.v);
        let spacelike = CausalClass { character: Character::Spacelike, direction: TimeDirection::None };
        if n2 == 0.0 {
            return spacelike;
        }
        let q = self.lorentz_norm(tv.base, tv.v);
        let character = if q.abs() <= TAU_NULL * n2 {
            Character::Lightlike
        } else if q < 0.0 {
            Character::Timelike
        } else {
            return spacelike;
        };
        let direction = if tv.v.t > 0.0 {
            TimeDirection::Future
        } else if tv.v.t < 0.0 {
            TimeDirection::Past
        } else {
            // Causal with vanishing dt happens only on the band edge; orient by x.
            if tv.v.x > 0.0 { TimeDirection::Future } else { TimeDirection::Past }
        };
        CausalClass { character, direction }
    }

    /// Null slopes `dx/dt` at `p`, larger first.
    pub fn null_slopes(&self, p: Vec2) -> Result<(f64, f64)> {
        let g = self.eval(p);
        let det = g.det();
        if !(det < 0.0) {
            return Err(LabError::Degenerate { t: p.t, x: p.x, det });
        }
        let r = (-det).sqrt();
        let (a, b) = ((-g.tx + r) / g.xx, (-g.tx - r) / g.xx);
        Ok(if a >= b { (a, b) } else { (b, a) })
    }

    /// Future lightlike `g_R`-unit vectors; `X1` has the larger slope `dx/dt`.
    pub fn null_directions(&self, p: Vec2) -> Result<(Vec2, Vec2)> {
        let (s1, s2) = self.null_slopes(p)?;
        let u = |s: f64| {
            let v = Vec2::new(1.0, s);
            v * (1.0 / self.aux.norm(v))
        };
        Ok((u(s1), u(s2)))
    }

    pub fn christoffel(&self, p: Vec2) -> Christoffel {
        let (g, dg) = self.eval_with_derivatives(p);
        christoffel_from(&g, &dg)
    }

    /// Christoffel symbols from central differences of the components with step `h`.
    pub fn christoffel_fd(&self, p: Vec2, h: f64) -> Christoffel {
        let g = self.eval(p);
        let d = |e: Vec2| {
            let (a, b) = (self.eval(p + e * h), self.eval(p - e * h));
            Components {
                tt: (a.tt - b.tt) / (2.0 * h),
                tx: (a.tx - b.tx) / (2.0 * h),
                xx: (a.xx - b.xx) / (2.0 * h),
            }
        };
        christoffel_from(&g, &[d(Vec2::new(1.0, 0.0)), d(Vec2::new(0.0, 1.0))])
    }

    /// Geodesic acceleration `-Γ^k_{ij} v^i v^j`.
    pub fn geodesic_acceleration(&self, p: Vec2, v: Vec2) -> Vec2 {
        let gam = self.christoffel(p);
        let c = [v.t, v.x];
        let mut a = [0.0; 2];
        for (k, ak) in a.iter_mut().enumerate() {
            for i in 0..2 {
                for j in 0..2 {
                    *ak -= gam[k][i][j] * c[i] * c[j];
                }
            }
        }
        Vec2::new(a[0], a[1])
    }

    /// `g_R`-distance from `v` to the null cone at `p` (union of both null rays, future and past).
    pub fn distance_to_light(&self, p: Vec2, v: Vec2) -> Result<f64> {
        let (x1, x2) = self.null_directions(p)?;
        let ray = |x: Vec2| {
            let best = [x, -x]
                .iter()
                .map(|&r| {
                    let s = self.aux.apply(v, r);
                    if s <= 0.0 { self.aux.norm(v) } else { self.aux.norm(v - r * s) }
                })
                .fold(f64::INFINITY, f64::min);
            best
        };
        Ok(ray(x1).min(ray(x2)))
    }

    /// Membership of `v` in `Time^ε` at `p`.
    pub fn time_eps_test(&self, p: Vec2, v: Vec2, eps: f64) -> bool {
        let class = self.classify(TangentVector { base: p, v });
        if !class.is_future_timelike() {
            return false;
        }
        self.distance_to_light(p, v).is_ok_and(|d| d >= eps * self.aux.norm(v))
    }

    /// `K(p) = sqrt((1 - g_R(X1,X2)²) / (2|g(X1,X2)|))`.
    pub fn time_bound_constant(&self, p: Vec2) -> Result<f64> {
        let (x1, x2) = self.null_directions(p)?;
        let r = self.aux.apply(x1, x2);
        let l = self.eval(p).apply(x1, x2);
        Ok(((1.0 - r * r) / (2.0 * l.abs())).sqrt())
    }
}

fn christoffel_from(g: &Components, dg: &[Components; 2]) -> Christoffel {
    let inv = g.inverse();
    let gi = [[inv.tt, inv.tx], [inv.tx, inv.xx]];
    // dgm[k][i][j] = ∂_k g_ij
    let dgm = dg.map(|c| [[c.tt, c.tx], [c.tx, c.xx]]);
    let mut out = [[[0.0; 2]; 2]; 2];
    for (k, row) in out.iter_mut().enumerate() {
        for i in 0..2 {
            for j in i..2 {
                let mut s = 0.0;
                for l in 0..2 {
                    s += gi[k][l] * (dgm[i][l][j] + dgm[j][l][i] - dgm[l][i][j]);
                }
                row[i][j] = 0.5 * s;
                row[j][i] = 0.5 * s;
            }
        }
    }
    out
}

/// Samples future timelike vectors with `g(v,v) = -1` passing `time_eps_test` at `p`.
///
/// Vectors are `λX1 + μX2` with `log(λ/μ)` uniform on a range wide enough to reach the
/// `ε`-boundary on both sides.
pub fn sample_time_unit_vectors<R: rand::Rng>(
    m: &MetricField,
    p: Vec2,
    eps: f64,
    n: usize,
    rng: &mut R,
) -> Result<Vec<Vec2>> {
    let (x1, x2) = m.null_directions(p)?;
    let g12 = m.eval(p).apply(x1, x2);
    let span = 2.0 * (2.0 / eps.min(0.999)).ln() + 4.0;
    let mut out = Vec::with_capacity(n);
    let mut tries = 0usize;
    while out.len() < n && tries < 200 * n.max(1) {
        tries += 1;
        let r: f64 = rng.gen_range(-span..span);
        // g(λX1+μX2, same) = 2λμ g12 = -1 with λ/μ = e^r.
        let mu = (1.0 / (2.0 * g12.abs() * r.exp())).sqrt();
        let v = x1 * (mu * r.exp()) + x2 * mu;
        if m.time_eps_test(p, v, eps) {
            out.push(v);
        }
    }
    Ok(out)
}

/// Supremum of `|v|` over `Time^{1,ε}` at `p`, located by golden-section search along the
/// boundary of the admissible ratio interval.
pub fn time_unit_sup(m: &MetricField, p: Vec2, eps: f64) -> Result<f64> {
    let (x1, x2) = m.null_directions(p)?;
    let g12 = m.eval(p).apply(x1, x2);
    let vec = |r: f64| {
        let mu = (1.0 / (2.0 * g12.abs() * r.exp())).sqrt();
        x1 * (mu * r.exp()) + x2 * mu
    };
    let ok = |r: f64| m.time_eps_test(p, vec(r), eps);
    if !ok(0.0) {
        return Ok(0.0);
    }
    // |v| is convex in r on each side, so the sup sits at an end of the admissible interval.
    let edge = |dir: f64| {
        let (mut lo, mut hi) = (0.0, dir);
        while ok(hi) && hi.abs() < 200.0 {
            lo = hi;
            hi *= 2.0;
        }
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if ok(mid) { lo = mid } else { hi = mid }
        }
        m.aux.norm(vec(lo))
    };
    Ok(edge(1.0).max(edge(-1.0)))
}
