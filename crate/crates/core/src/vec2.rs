use serde::{Deserialize, Serialize};
use std::ops::{Add, AddAssign, Mul, Neg, Sub};

/// Vector or point in the universal cover, coordinates `(t, x)`.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Vec2 {
    pub t: f64,
    pub x: f64,
}

/// Point of the universal cover.
pub type CoverPoint = Vec2;

impl Vec2 {
    pub const fn new(t: f64, x: f64) -> Self {
        Self { t, x }
    }

    pub fn dot(self, o: Vec2) -> f64 {
        self.t * o.t + self.x * o.x
    }

    /// `t1 x2 - x1 t2`; positive when `o` lies counterclockwise of `self`.
    pub fn cross(self, o: Vec2) -> f64 {
        self.t * o.x - self.x * o.t
    }

    pub fn norm(self) -> f64 {
        self.t.hypot(self.x)
    }

    pub fn normalized(self) -> Vec2 {
        let n = self.norm();
        Vec2::new(self.t / n, self.x / n)
    }

    /// Angle from the positive `t` axis toward the positive `x` axis.
    pub fn angle(self) -> f64 {
        self.x.atan2(self.t)
    }

    pub fn from_angle(a: f64) -> Vec2 {
        Vec2::new(a.cos(), a.sin())
    }

    pub fn lerp(self, o: Vec2, u: f64) -> Vec2 {
        self + (o - self) * u
    }

    pub fn is_finite(self) -> bool {
        self.t.is_finite() && self.x.is_finite()
    }
}

impl From<(i64, i64)> for Vec2 {
    fn from((t, x): (i64, i64)) -> Self {
        Vec2::new(t as f64, x as f64)
    }
}

impl Add for Vec2 {
    type Output = Vec2;
    fn add(self, o: Vec2) -> Vec2 {
        Vec2::new(self.t + o.t, self.x + o.x)
    }
}

impl AddAssign for Vec2 {
    fn add_assign(&mut self, o: Vec2) {
        self.t += o.t;
        self.x += o.x;
    }
}

impl Sub for Vec2 {
    type Output = Vec2;
    fn sub(self, o: Vec2) -> Vec2 {
        Vec2::new(self.t - o.t, self.x - o.x)
    }
}

impl Neg for Vec2 {
    type Output = Vec2;
    fn neg(self) -> Vec2 {
        Vec2::new(-self.t, -self.x)
    }
}

impl Mul<f64> for Vec2 {
    type Output = Vec2;
    fn mul(self, s: f64) -> Vec2 {
        Vec2::new(self.t * s, self.x * s)
    }
}

/// Integer homology class `(t, x)` of a closed curve.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Homology {
    pub t: i64,
    pub x: i64,
}

impl Homology {
    pub const fn new(t: i64, x: i64) -> Self {
        Self { t, x }
    }

    pub fn as_vec(self) -> Vec2 {
        Vec2::new(self.t as f64, self.x as f64)
    }

    pub fn gcd(self) -> i64 {
        gcd(self.t, self.x)
    }

    pub fn primitive(self) -> Homology {
        let g = self.gcd().max(1);
        Homology::new(self.t / g, self.x / g)
    }

    /// Lattice vector `w` with `cross(self, w) = 1`, reduced modulo `self` to be short.
    /// Requires a primitive class.
    pub fn complement(self) -> Homology {
        // Extended Euclid on (t, x): t·a + x·b = 1, then w = (-b, a).
        let (mut r0, mut r1, mut a0, mut a1, mut b0, mut b1) = (self.t, self.x, 1i64, 0i64, 0i64, 1i64);
        while r1 != 0 {
            let q = r0.div_euclid(r1);
            (r0, r1) = (r1, r0 - q * r1);
            (a0, a1) = (a1, a0 - q * a1);
            (b0, b1) = (b1, b0 - q * b1);
        }
        let (a, b) = if r0 < 0 { (-a0, -b0) } else { (a0, b0) };
        let w = Homology::new(-b, a);
        let n2 = (self.t * self.t + self.x * self.x).max(1) as f64;
        let k = ((w.t * self.t + w.x * self.x) as f64 / n2).round() as i64;
        Homology::new(w.t - k * self.t, w.x - k * self.x)
    }
}

pub fn gcd(a: i64, b: i64) -> i64 {
    let (mut a, mut b) = (a.abs(), b.abs());
    while b != 0 {
        (a, b) = (b, a % b);
    }
    a
}

impl std::fmt::Display for Homology {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "({},{})", self.t, self.x)
    }
}

impl std::str::FromStr for Homology {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        let s = s.trim().trim_start_matches('(').trim_end_matches(')');
        let mut it = s.split(',').map(|p| p.trim().parse::<i64>());
        match (it.next(), it.next(), it.next()) {
            (Some(Ok(t)), Some(Ok(x)), None) => Ok(Homology::new(t, x)),
            _ => Err(format!("expected two integers `t,x`, got `{s}`")),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn cross_orientation() {
        let a = Vec2::new(1.0, -1.0);
        let b = Vec2::new(1.0, 1.0);
        assert!(a.cross(b) > 0.0);
    }

    #[test]
    fn homology_parse_and_primitive() {
        let h: Homology = "4,2".parse().unwrap();
        assert_eq!(h.primitive(), Homology::new(2, 1));
        assert_eq!(Homology::new(-3, 0).primitive(), Homology::new(-1, 0));
        assert!("1;2".parse::<Homology>().is_err());
    }

    #[test]
    fn complement_has_unit_cross() {
        for h in [Homology::new(1, 0), Homology::new(2, 1), Homology::new(3, -2), Homology::new(5, 3), Homology::new(1, -1)] {
            let w = h.complement();
            assert_eq!(h.t * w.x - h.x * w.t, 1, "{h} {w}");
        }
        assert_eq!(Homology::new(1, 0).complement(), Homology::new(0, 1));
    }
}
