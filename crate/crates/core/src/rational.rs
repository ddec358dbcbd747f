//! Rational approximation of slopes.

/// Default denominator cap for rationality detection.
pub const Q_MAX: i64 = 50;

/// Simplest fraction `p/q` (smallest `q`, `q ≤ q_max`) in the closed interval `[lo, hi]`,
/// found by Stern–Brocot descent.
pub fn simplest_in(lo: f64, hi: f64, q_max: i64) -> Option<(i64, i64)> {
    if !(lo <= hi) || !lo.is_finite() || !hi.is_finite() {
        return None;
    }
    let fl = lo.floor();
    if fl + 1.0 <= hi || fl == lo {
        let p = if fl == lo { fl } else { fl + 1.0 };
        return Some((p as i64, 1));
    }
    let base = fl as i64;
    let (lo, hi) = (lo - fl, hi - fl);
    // Mediants between 0/1 and 1/1.
    let (mut a, mut b) = ((0i64, 1i64), (1i64, 1i64));
    loop {
        let m = (a.0 + b.0, a.1 + b.1);
        if m.1 > q_max {
            return None;
        }
        let v = m.0 as f64 / m.1 as f64;
        if v < lo {
            a = m;
        } else if v > hi {
            b = m;
        } else {
            return Some((m.0 + base * m.1, m.1));
        }
    }
}

/// Continued-fraction convergents `(p, q)` of `y` with `q ≤ q_max`.
pub fn convergents(y: f64, q_max: i64) -> Vec<(i64, i64)> {
    let mut out = vec![];
    let (mut p0, mut q0, mut p1, mut q1) = (1i64, 0i64, y.floor() as i64, 1i64);
    out.push((p1, q1));
    let mut frac = y - y.floor();
    for _ in 0..64 {
        if frac.abs() < 1e-15 {
            break;
        }
        let inv = 1.0 / frac;
        let a = inv.floor() as i64;
        frac = inv - inv.floor();
        let (p2, q2) = (a * p1 + p0, a * q1 + q0);
        if q2 > q_max {
            break;
        }
        (p0, q0, p1, q1) = (p1, q1, p2, q2);
        out.push((p1, q1));
    }
    out
}

/// Farey neighbours `(a, b)` with `a < y < b`, `p/q` pairs, from Stern–Brocot descent toward
/// `y` until the mediant exceeds `q_max`. Only brackets where the descent turns are kept,
/// together with the final one.
pub fn farey_brackets(y: f64, q_max: i64) -> Vec<((i64, i64), (i64, i64))> {
    let fl = y.floor() as i64;
    let (mut a, mut b) = ((fl, 1i64), (fl + 1, 1i64));
    let mut out = vec![];
    let mut last_left = None;
    loop {
        let m = (a.0 + b.0, a.1 + b.1);
        if m.1 > q_max || m.0 as f64 == y * m.1 as f64 {
            out.push((a, b));
            return out;
        }
        let left = (m.0 as f64) < y * m.1 as f64;
        if last_left.is_some_and(|l| l != left) {
            out.push((a, b));
        }
        last_left = Some(left);
        if left {
            a = m;
        } else {
            b = m;
        }
    }
}
