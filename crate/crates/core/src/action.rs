//! Maximization of the discrete Lorentzian action over piecewise-linear time graphs.
//!
//! A causal curve is represented by its `x` values on a uniform grid of coordinate times;
//! the length is the sum of Gauss-quadrature chord lengths. The maximum is found by a
//! damped Newton iteration on the tridiagonal (or cyclic tridiagonal) Hessian, and two
//! resolutions are combined by Richardson extrapolation.

use crate::curve::{chord_length, Parametrization, SampledCurve};
use crate::error::{LabError, Result};
use crate::metric::MetricField;
use crate::vec2::{Homology, Vec2};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ActionOptions {
    /// Chords per unit of coordinate time at the coarse resolution.
    pub nodes_per_unit: usize,
    pub max_iter: usize,
    /// Also solve at twice the resolution and extrapolate.
    pub richardson: bool,
}

impl Default for ActionOptions {
    fn default() -> Self {
        Self { nodes_per_unit: 48, max_iter: 100, richardson: true }
    }
}

/// A maximizing piecewise-linear time graph.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ActionCurve {
    pub nodes: Vec<Vec2>,
    /// Length at the finest resolution solved.
    pub length: f64,
    /// Richardson-extrapolated length (equal to `length` without extrapolation).
    pub extrapolated: f64,
}

impl ActionCurve {
    pub fn to_curve(&self, m: &MetricField) -> SampledCurve {
        let params = self.nodes.iter().map(|p| p.t).collect();
        SampledCurve::new(Parametrization::Time, params, self.nodes.clone()).classified(m)
    }
}

#[derive(Clone, Copy)]
enum Ends {
    /// Both endpoint `x` values fixed.
    Fixed(f64, f64),
    /// `x_n = x_0 + shift`; `x_0` is free.
    Periodic(f64),
}

struct Problem<'a> {
    m: &'a MetricField,
    t: Vec<f64>,
    ends: Ends,
}

struct Derivs {
    grad: Vec<f64>,
    diag: Vec<f64>,
    off: Vec<f64>,
    corner: f64,
}

/// Chord length with first and second derivatives in the two endpoint `x` values.
fn chord_derivs(m: &MetricField, a: Vec2, b: Vec2) -> Option<[f64; 6]> {
    let h = 1e-4 * (b.t - a.t);
    let f = |da: f64, db: f64| chord_length(m, Vec2::new(a.t, a.x + da), Vec2::new(b.t, b.x + db));
    let f0 = f(0.0, 0.0)?;
    let (fap, fam) = (f(h, 0.0)?, f(-h, 0.0)?);
    let (fbp, fbm) = (f(0.0, h)?, f(0.0, -h)?);
    let (fpp, fpm) = (f(h, h)?, f(h, -h)?);
    let (fmp, fmm) = (f(-h, h)?, f(-h, -h)?);
    Some([
        f0,
        (fap - fam) / (2.0 * h),
        (fbp - fbm) / (2.0 * h),
        (fap - 2.0 * f0 + fam) / (h * h),
        (fpp - fpm - fmp + fmm) / (4.0 * h * h),
        (fbp - 2.0 * f0 + fbm) / (h * h),
    ])
}

impl Problem<'_> {
    fn n(&self) -> usize {
        self.t.len() - 1
    }

    fn full(&self, u: &[f64]) -> Vec<f64> {
        match self.ends {
            Ends::Fixed(a, b) => {
                let mut x = Vec::with_capacity(u.len() + 2);
                x.push(a);
                x.extend_from_slice(u);
                x.push(b);
                x
            }
            Ends::Periodic(s) => {
                let mut x = u.to_vec();
                x.push(u[0] + s);
                x
            }
        }
    }

    fn points(&self, u: &[f64]) -> Vec<Vec2> {
        self.full(u).iter().zip(&self.t).map(|(&x, &t)| Vec2::new(t, x)).collect()
    }

    fn length(&self, u: &[f64]) -> Option<f64> {
        let p = self.points(u);
        let ls: Option<Vec<f64>> = p.par_windows(2).map(|w| chord_length(self.m, w[0], w[1])).collect();
        ls.map(|v| v.iter().sum())
    }

    fn derivs(&self, u: &[f64]) -> Option<Derivs> {
        let p = self.points(u);
        let cd: Option<Vec<[f64; 6]>> = p.par_windows(2).map(|w| chord_derivs(self.m, w[0], w[1])).collect();
        let cd = cd?;
        let n = self.n();
        match self.ends {
            Ends::Fixed(..) => {
                let k = n - 1;
                let grad = (0..k).map(|i| cd[i][2] + cd[i + 1][1]).collect();
                let diag = (0..k).map(|i| cd[i][5] + cd[i + 1][3]).collect();
                let off = (0..k.saturating_sub(1)).map(|i| cd[i + 1][4]).collect();
                Some(Derivs { grad, diag, off, corner: 0.0 })
            }
            Ends::Periodic(_) => {
                let prev = |j: usize| (j + n - 1) % n;
                let grad = (0..n).map(|j| cd[prev(j)][2] + cd[j][1]).collect();
                let diag = (0..n).map(|j| cd[prev(j)][5] + cd[j][3]).collect();
                let off = (0..n - 1).map(|j| cd[j][4]).collect();
                Some(Derivs { grad, diag, off, corner: cd[n - 1][4] })
            }
        }
    }

    /// Damped Newton ascent from `u`.
    fn maximize(&self, mut u: Vec<f64>, max_iter: usize) -> Result<(Vec<f64>, f64)> {
        let invalid = || LabError::NoMaximizer("initial curve is not timelike".into());
        let mut cur = self.length(&u).ok_or_else(invalid)?;
        let mut mu = 0.0f64;
        for _ in 0..max_iter {
            let Some(d) = self.derivs(&u) else { return Err(invalid()) };
            let gmax = d.grad.iter().fold(0.0f64, |a, g| a.max(g.abs()));
            if gmax < 1e-11 {
                break;
            }
            let scale = d.diag.iter().map(|v| v.abs()).sum::<f64>() / d.diag.len() as f64;
            let mut accepted = false;
            for _ in 0..60 {
                let a: Vec<f64> = d.diag.iter().map(|v| -v + mu * scale).collect();
                let off: Vec<f64> = d.off.iter().map(|v| -v).collect();
                let step = match self.ends {
                    Ends::Fixed(..) => solve_spd_tridiagonal(&a, &off, &d.grad),
                    Ends::Periodic(_) => solve_cyclic(&a, &off, -d.corner, &d.grad),
                };
                let Some(step) = step.filter(|s| s.iter().zip(&d.grad).map(|(a, b)| a * b).sum::<f64>() > 0.0)
                else {
                    mu = (mu * 4.0).max(1e-8);
                    continue;
                };
                let trial: Vec<f64> = u.iter().zip(&step).map(|(a, b)| a + b).collect();
                match self.length(&trial) {
                    Some(l) if l >= cur => {
                        let gain = l - cur;
                        u = trial;
                        cur = l;
                        mu = if mu < 1e-7 { 0.0 } else { mu / 8.0 };
                        accepted = gain > 1e-15 * cur.abs().max(1.0)
                            || step.iter().any(|s| s.abs() > 1e-13);
                        break;
                    }
                    _ => mu = (mu * 4.0).max(1e-8),
                }
            }
            if !accepted {
                break;
            }
        }
        Ok((u, cur))
    }
}

/// Thomas algorithm for a symmetric tridiagonal system; `None` on a nonpositive pivot.
fn solve_spd_tridiagonal(diag: &[f64], off: &[f64], rhs: &[f64]) -> Option<Vec<f64>> {
    let n = diag.len();
    if n == 0 {
        return Some(vec![]);
    }
    let mut c = vec![0.0; n];
    let mut d = vec![0.0; n];
    let mut piv = diag[0];
    if !(piv > 0.0) {
        return None;
    }
    c[0] = if n > 1 { off[0] / piv } else { 0.0 };
    d[0] = rhs[0] / piv;
    for i in 1..n {
        piv = diag[i] - off[i - 1] * c[i - 1];
        if !(piv > 0.0) {
            return None;
        }
        c[i] = if i < n - 1 { off[i] / piv } else { 0.0 };
        d[i] = (rhs[i] - off[i - 1] * d[i - 1]) / piv;
    }
    for i in (0..n - 1).rev() {
        d[i] -= c[i] * d[i + 1];
    }
    Some(d)
}

/// Cyclic symmetric tridiagonal solve by Sherman–Morrison.
fn solve_cyclic(diag: &[f64], off: &[f64], corner: f64, rhs: &[f64]) -> Option<Vec<f64>> {
    let n = diag.len();
    if n < 3 {
        return None;
    }
    let gamma = -diag[0];
    let mut bb = diag.to_vec();
    bb[0] -= gamma;
    bb[n - 1] -= corner * corner / gamma;
    let x = solve_spd_tridiagonal(&bb, off, rhs)?;
    let mut uvec = vec![0.0; n];
    uvec[0] = gamma;
    uvec[n - 1] = corner;
    let z = solve_spd_tridiagonal(&bb, off, &uvec)?;
    let fact = (x[0] + corner * x[n - 1] / gamma) / (1.0 + z[0] + corner * z[n - 1] / gamma);
    Some(x.iter().zip(&z).map(|(a, b)| a - fact * b).collect())
}

/// `x` values on the time grid `t` of the curve `dx/dt = θσ₁ + (1-θ)σ₂` from `x0`.
fn blended_characteristic(m: &MetricField, t: &[f64], x0: f64, theta: f64) -> Result<Vec<f64>> {
    let slope = |t: f64, x: f64| -> Result<f64> {
        let (s1, s2) = m.null_slopes(Vec2::new(t, x))?;
        Ok(theta * s1 + (1.0 - theta) * s2)
    };
    let mut x = Vec::with_capacity(t.len());
    x.push(x0);
    for w in t.windows(2) {
        let (t0, h) = (w[0], w[1] - w[0]);
        let xi = *x.last().unwrap();
        let k1 = slope(t0, xi)?;
        let k2 = slope(t0 + 0.5 * h, xi + 0.5 * h * k1)?;
        let k3 = slope(t0 + 0.5 * h, xi + 0.5 * h * k2)?;
        let k4 = slope(t0 + h, xi + h * k3)?;
        x.push(xi + h * (k1 + 2.0 * k2 + 2.0 * k3 + k4) / 6.0);
    }
    Ok(x)
}

/// Timelike curve through `(t[0], x0)` ending at `x_end`, built from blended null slopes.
fn blended_init(m: &MetricField, t: &[f64], x0: f64, x_end: f64) -> Result<Vec<f64>> {
    let end = |th: f64| blended_characteristic(m, t, x0, th).map(|x| *x.last().unwrap() - x_end);
    let (mut lo, mut hi) = (0.0, 1.0);
    if end(lo)? > 0.0 || end(hi)? < 0.0 {
        return Err(LabError::NoMaximizer("endpoint outside the causal future".into()));
    }
    for _ in 0..80 {
        let mid = 0.5 * (lo + hi);
        if end(mid)? < 0.0 { lo = mid } else { hi = mid }
    }
    let mut x = blended_characteristic(m, t, x0, 0.5 * (lo + hi))?;
    // Distribute the residual offset linearly so the end matches exactly.
    let r = *x.last().unwrap() - x_end;
    let n = x.len() - 1;
    for (i, xi) in x.iter_mut().enumerate() {
        *xi -= r * i as f64 / n as f64;
    }
    Ok(x)
}

fn time_grid(t0: f64, t1: f64, n: usize) -> Vec<f64> {
    (0..=n).map(|i| t0 + (t1 - t0) * i as f64 / n as f64).collect()
}

fn refine_x(x: &[f64]) -> Vec<f64> {
    let mut out = Vec::with_capacity(2 * x.len() - 1);
    for w in x.windows(2) {
        out.push(w[0]);
        out.push(0.5 * (w[0] + w[1]));
    }
    out.push(*x.last().unwrap());
    out
}

fn chords_for(dt: f64, opts: &ActionOptions) -> usize {
    ((dt * opts.nodes_per_unit as f64).ceil() as usize).max(8)
}

/// Longest piecewise-linear causal time graph from `p` to `q`.
///
/// `init` seeds the iteration (resampled on the time grid); otherwise a blended null
/// characteristic through both endpoints is used.
pub fn maximize_between(
    m: &MetricField,
    p: Vec2,
    q: Vec2,
    init: Option<&SampledCurve>,
    opts: &ActionOptions,
) -> Result<ActionCurve> {
    if !(q.t > p.t) {
        return Err(LabError::NoMaximizer("endpoint is not in the future".into()));
    }
    let n = chords_for(q.t - p.t, opts);
    let t = time_grid(p.t, q.t, n);
    let x0 = match init.and_then(|c| resample(c, &t, p.x, q.x)) {
        Some(x) => x,
        None => blended_init(m, &t, p.x, q.x)?,
    };
    let prob = Problem { m, t, ends: Ends::Fixed(p.x, q.x) };
    let u0 = x0[1..n].to_vec();
    let u0 = if prob.length(&u0).is_some() { u0 } else { blended_init(m, &prob.t, p.x, q.x)?[1..n].to_vec() };
    let (u, l) = prob.maximize(u0, opts.max_iter)?;
    if !opts.richardson {
        return Ok(ActionCurve { nodes: prob.points(&u), length: l, extrapolated: l });
    }
    let fine = Problem { m, t: time_grid(p.t, q.t, 2 * n), ends: Ends::Fixed(p.x, q.x) };
    let xf = refine_x(&prob.full(&u));
    let (uf, lf) = fine.maximize(xf[1..2 * n].to_vec(), opts.max_iter)?;
    Ok(ActionCurve { nodes: fine.points(&uf), length: lf, extrapolated: lf + (lf - l) / 3.0 })
}

fn resample(c: &SampledCurve, t: &[f64], xa: f64, xb: f64) -> Option<Vec<f64>> {
    let mut x: Vec<f64> = t.iter().map(|&ti| c.x_at_time(ti)).collect::<Option<Vec<f64>>>()?;
    let n = x.len() - 1;
    let (ra, rb) = (x[0] - xa, x[n] - xb);
    for (i, xi) in x.iter_mut().enumerate() {
        let u = i as f64 / n as f64;
        *xi -= ra * (1.0 - u) + rb * u;
    }
    Some(x)
}

/// Longest closed causal curve in class `h` through the slice `t = 0`, started from the
/// blended characteristic through `(0, x0)`.
pub fn maximize_closed(m: &MetricField, h: Homology, x0: f64, opts: &ActionOptions) -> Result<ActionCurve> {
    if h.t <= 0 {
        return Err(LabError::NotInCone(h.t, h.x));
    }
    let n = chords_for(h.t as f64, opts);
    let t = time_grid(0.0, h.t as f64, n);
    let x = blended_init(m, &t, x0, x0 + h.x as f64).map_err(|_| LabError::NotInCone(h.t, h.x))?;
    maximize_closed_from(m, h, &x, opts)
}

/// As [`maximize_closed`], seeded by `x` values on a uniform time grid over one period.
pub fn maximize_closed_from(m: &MetricField, h: Homology, x: &[f64], opts: &ActionOptions) -> Result<ActionCurve> {
    let n = x.len() - 1;
    let shift = h.x as f64;
    let prob = Problem { m, t: time_grid(0.0, h.t as f64, n), ends: Ends::Periodic(shift) };
    let (u, l) = prob.maximize(x[..n].to_vec(), opts.max_iter)?;
    if !opts.richardson {
        return Ok(ActionCurve { nodes: prob.points(&u), length: l, extrapolated: l });
    }
    let fine = Problem { m, t: time_grid(0.0, h.t as f64, 2 * n), ends: Ends::Periodic(shift) };
    let xf = refine_x(&prob.full(&u));
    let (uf, lf) = fine.maximize(xf[..2 * n].to_vec(), opts.max_iter)?;
    Ok(ActionCurve { nodes: fine.points(&uf), length: lf, extrapolated: lf + (lf - l) / 3.0 })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::metric::Bump;
    use approx::assert_abs_diff_eq;

    fn stripe(a: f64, w: f64) -> MetricField {
        MetricField::conformal(Bump { amplitude: a, center: Vec2::new(0.0, 0.5), width_t: None, width_x: w }).unwrap()
    }

    #[test]
    fn cyclic_solver_matches_dense() {
        let n = 7;
        let diag: Vec<f64> = (0..n).map(|i| 4.0 + i as f64 * 0.1).collect();
        let off: Vec<f64> = (0..n - 1).map(|i| -1.0 + 0.05 * i as f64).collect();
        let corner = -0.7;
        let rhs: Vec<f64> = (0..n).map(|i| (i as f64).sin()).collect();
        let x = solve_cyclic(&diag, &off, corner, &rhs).unwrap();
        for i in 0..n {
            let mut s = diag[i] * x[i];
            if i > 0 { s += off[i - 1] * x[i - 1]; }
            if i < n - 1 { s += off[i] * x[i + 1]; }
            if i == 0 { s += corner * x[n - 1]; }
            if i == n - 1 { s += corner * x[0]; }
            assert_abs_diff_eq!(s, rhs[i], epsilon = 1e-12);
        }
    }

    #[test]
    fn flat_segment_is_straight() {
        let m = MetricField::flat();
        let c = maximize_between(&m, Vec2::default(), Vec2::new(5.0, 3.0), None, &ActionOptions::default()).unwrap();
        assert_abs_diff_eq!(c.extrapolated, 4.0, epsilon = 1e-9);
    }

    #[test]
    fn flat_closed_curves() {
        let m = MetricField::flat();
        let o = ActionOptions::default();
        assert_abs_diff_eq!(maximize_closed(&m, Homology::new(1, 0), 0.3, &o).unwrap().extrapolated, 1.0, epsilon = 1e-9);
        assert_abs_diff_eq!(maximize_closed(&m, Homology::new(2, 1), 0.3, &o).unwrap().extrapolated, 3f64.sqrt(), epsilon = 1e-9);
        assert!(maximize_closed(&m, Homology::new(1, 2), 0.0, &o).is_err());
    }

    #[test]
    fn stripe_vertical_period_is_ridge_factor() {
        // A vertical closed curve on the ridge has length e^a; nothing is longer.
        let (a, w) = (0.15, 0.35);
        let m = stripe(a, w);
        let c = maximize_closed(&m, Homology::new(1, 0), 0.3, &ActionOptions::default()).unwrap();
        assert_abs_diff_eq!(c.extrapolated, a.exp(), epsilon = 1e-8);
        assert!(c.nodes.iter().all(|p| (p.x - 0.5).abs() < 1e-5));
    }

    #[test]
    fn stripe_energy_oracle_two_point() {
        // t-invariant metric: geodesics conserve E = e^{2φ} ṫ; length and elapsed time
        // follow from quadratures over x.
        let (a, w) = (0.15, 0.35);
        let m = stripe(a, w);
        let phi = |x: f64| {
            let s = (std::f64::consts::PI * (x - 0.5)).sin() / std::f64::consts::PI;
            a * (-(s * s) / (w * w)).exp()
        };
        let e = 1.6f64;
        let quad = |f: &dyn Fn(f64) -> f64| {
            let n = 20_000;
            (0..n).map(|k| f((k as f64 + 0.5) / n as f64)).sum::<f64>() / n as f64
        };
        let t_el = quad(&|x| e / (e * e - (2.0 * phi(x)).exp()).sqrt());
        let len = quad(&|x| (2.0 * phi(x)).exp() / (e * e - (2.0 * phi(x)).exp()).sqrt());
        let c = maximize_between(&m, Vec2::new(0.0, 0.0), Vec2::new(t_el, 1.0), None, &ActionOptions::default()).unwrap();
        assert_abs_diff_eq!(c.extrapolated, len, epsilon = 1e-6);
    }
}
