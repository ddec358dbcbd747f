//! The `verify` suite: every sampled invariant of one configured metric, with verdicts.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::action::ActionOptions;
use crate::busemann::{
    busemann_field, check_calibration, eikonal_residual, foliation_gap, gradient_line,
    linear_parts, reference_line, semiconcavity_check, BusemannGrid, NodeFlag, PointBusemann, ReferenceLine, Side,
};
use crate::config::{ExperimentConfig, MetricConfig, WindowUse};
use crate::curve::interior_transversal_count;
use crate::distance::{check_reverse_triangle, distances_from, random_causal_step, DistanceOptions, GridSpec};
use crate::error::Result;
use crate::foliation::{stable_cone, Direction};
use crate::geodesic::shoot_maximizer;
use crate::metric::{sample_time_unit_vectors, time_unit_sup, MetricField};
use crate::stablesep::{
    busemann_consistency, concavity_check, homogeneity_check, superadditivity_check, unit_sphere, LawReport, SeparationProfile, StableSep,
};
use crate::vec2::Vec2;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Relation {
    AtMost,
    AtLeast,
}

/// One pass/fail check: `measured` compared against `tolerance`.
#[derive(Clone, Debug, Serialize)]
pub struct Check {
    pub name: String,
    pub property: String,
    pub measured: f64,
    pub relation: Relation,
    pub tolerance: f64,
    pub samples: usize,
    pub passed: bool,
}

/// A reported measurement without a verdict.
#[derive(Clone, Debug, Serialize)]
pub struct Note {
    pub name: String,
    pub property: String,
    pub value: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct Verdict {
    pub seed: u64,
    pub metric: MetricConfig,
    pub passed: bool,
    pub checks: Vec<Check>,
    pub notes: Vec<Note>,
}

/// Verdict plus the artifacts the suite computed along the way.
pub struct SuiteOutput {
    pub verdict: Verdict,
    pub busemann: BusemannGrid,
    pub gradient_lines: Vec<Vec<Vec2>>,
    pub profile: SeparationProfile,
}

#[derive(Default)]
struct Suite {
    checks: Vec<Check>,
    notes: Vec<Note>,
}

impl Suite {
    fn check(&mut self, name: &str, property: &str, measured: f64, relation: Relation, tolerance: f64, samples: usize) {
        let passed = match relation {
            Relation::AtMost => measured <= tolerance,
            Relation::AtLeast => measured >= tolerance,
        };
        self.checks.push(Check {
            name: name.into(),
            property: property.into(),
            measured,
            relation,
            tolerance,
            samples,
            passed,
        });
    }

    fn law(&mut self, name: &str, property: &str, r: &LawReport) {
        self.check(name, property, r.violations as f64, Relation::AtMost, 0.0, r.samples);
        self.note(&format!("{name}.worst_margin"), "smallest slack margin over the samples", r.worst_margin);
    }

    fn note(&mut self, name: &str, property: &str, value: f64) {
        self.notes.push(Note { name: name.into(), property: property.into(), value });
    }
}

/// Independent random stream per check, so checks do not perturb each other.
pub fn stream(seed: u64, id: u64) -> ChaCha8Rng {
    let mut r = ChaCha8Rng::seed_from_u64(seed);
    r.set_stream(id);
    r
}

fn is_flat(cfg: &ExperimentConfig) -> bool {
    matches!(cfg.metric, MetricConfig::Flat {}) && cfg.aux.is_none()
}

fn distance_options(m: &MetricField) -> DistanceOptions {
    if m.is_constant() {
        DistanceOptions::default()
    } else {
        DistanceOptions::fast()
    }
}

/// Random node pairs `(p, q)` with `q` in the closed flat causal future of `p`, grouped
/// by source.
pub fn golden_pairs<R: Rng>(spec: &GridSpec, sources: usize, per_source: usize, rng: &mut R) -> Vec<(Vec2, Vec<Vec2>)> {
    (0..sources)
        .map(|_| {
            let i = rng.gen_range(0..spec.n_t / 2);
            let j = rng.gen_range(spec.n_x / 4..3 * spec.n_x / 4);
            let p = spec.node(i, j);
            let mut targets = Vec::with_capacity(per_source);
            while targets.len() < per_source {
                let q = spec.node(rng.gen_range(i + 1..=spec.n_t), rng.gen_range(0..=spec.n_x));
                if (q.x - p.x).abs() <= q.t - p.t {
                    targets.push(q);
                }
            }
            (p, targets)
        })
        .collect()
}

/// Gradient lines of unit length from random smooth nodes in the lower part of the window;
/// lines that leave the smooth region early are skipped.
pub fn sample_gradient_lines<R: Rng>(
    m: &MetricField,
    b: &BusemannGrid,
    n: usize,
    rng: &mut R,
) -> Vec<crate::busemann::GradientLine> {
    let s = b.spec;
    let mut out = Vec::with_capacity(n);
    let mut starts = Vec::new();
    let mut tries = 0;
    while starts.len() < 4 * n && tries < 400 * n {
        tries += 1;
        let i = rng.gen_range(s.n_t / 40..=s.n_t / 5);
        let j = rng.gen_range(s.n_x / 5..=4 * s.n_x / 5);
        if b.flags[s.index(i, j)] == NodeFlag::Smooth {
            starts.push(s.node(i, j));
        }
    }
    for chunk in starts.chunks(n.max(1)) {
        let lines: Vec<_> = chunk.par_iter().filter_map(|&q| gradient_line(m, b, q, 1.0).ok()).filter(|g| !g.truncated).collect();
        out.extend(lines);
        if out.len() >= n {
            break;
        }
    }
    out.truncate(n);
    out
}

/// Counts interior transversal crossings between pairs of shot maximal segments.
/// Returns the largest count and the number of pairs that were shot successfully.
pub fn morse_pairs<R: Rng>(m: &MetricField, n: usize, rng: &mut R) -> Result<(usize, usize)> {
    let mut segs = Vec::with_capacity(n);
    for _ in 0..n {
        let p1 = Vec2::new(rng.gen_range(0.0..1.0), rng.gen_range(0.0..1.0));
        let q1 = p1 + random_causal_step(m, p1, 1.5, rng)?;
        let p2 = p1 + Vec2::new(rng.gen_range(-0.3..0.3), rng.gen_range(-0.3..0.3));
        let q2 = p2 + random_causal_step(m, p2, 1.5, rng)?;
        segs.push([(p1, q1), (p2, q2)]);
    }
    let counts: Vec<Option<usize>> = segs
        .par_iter()
        .map(|[(p1, q1), (p2, q2)]| {
            let a = shoot_maximizer(m, *p1, *q1, 1e-6).ok()?;
            let b = shoot_maximizer(m, *p2, *q2, 1e-6).ok()?;
            Some(interior_transversal_count(&a.curve, &b.curve, 1e-9))
        })
        .collect();
    let ok: Vec<usize> = counts.into_iter().flatten().collect();
    Ok((ok.iter().copied().max().unwrap_or(0), ok.len()))
}

/// Runs the suite for `cfg`.
pub fn run_suite(cfg: &ExperimentConfig) -> Result<SuiteOutput> {
    let m = cfg.metric_field()?;
    let cone = stable_cone(&m)?;
    let tol = &cfg.tolerances;
    let v = &cfg.verify;
    let seed = cfg.seed;
    let flat = is_flat(cfg);
    let dopts = distance_options(&m);
    let mut s = Suite::default();
    s.note("cone.angle", "opening angle of the stable time cone", cone.angle());

    // Distance.
    if flat {
        let spec = cfg.grid_spec(WindowUse::Distance)?;
        let per = v.distance_pairs.div_ceil(20).max(1);
        let groups = golden_pairs(&spec, 20, per, &mut stream(seed, 1));
        let mut err = 0.0f64;
        let mut n = 0;
        for (p, targets) in &groups {
            let d = distances_from(&m, *p, &spec, targets, &dopts)?;
            for (q, dv) in targets.iter().zip(d) {
                let dq = *q - *p;
                err = err.max((dv - (dq.t * dq.t - dq.x * dq.x).max(0.0).sqrt()).abs());
                n += 1;
            }
        }
        s.check("distance.closed_form", "distance equals sqrt(dt^2 - dx^2) on flat pairs", err, Relation::AtMost, tol.distance, n);
    }
    let tri = check_reverse_triangle(&m, v.triangle_triples, 2.0 * tol.distance, &dopts, &mut stream(seed, 2))?;
    s.check("distance.reverse_triangle", "d(x,z) >= d(x,y) + d(y,z) - slack", tri.violations as f64, Relation::AtMost, 0.0, tri.triples);
    s.note("distance.reverse_triangle.worst_margin", "smallest d(x,z) - d(x,y) - d(y,z)", tri.worst_margin);

    // Busemann function of the configured direction.
    let h = cfg.direction().primitive();
    let action = ActionOptions::default();
    let line = reference_line(&m, &cone, &Direction::rational(h), 8.0, &action)?;
    let bspec = cfg.grid_spec(WindowUse::Busemann)?;
    let bopts = cfg.busemann_options();
    let side = cfg.busemann.side;
    let b = busemann_field(&m, &line, side, &bspec, &bopts)?;
    let eik = eikonal_residual(&m, &b);
    s.note("busemann.horizon", "final horizon of the Busemann sweep", b.horizon);
    s.note("busemann.eikonal_median", "median of |g(grad b, grad b) + 1| over smooth nodes", eik.median);
    s.check(
        "busemann.past_timelike_gradient",
        "grad b is past-directed timelike at smooth nodes",
        eik.not_past_timelike as f64,
        Relation::AtMost,
        0.0,
        eik.nodes,
    );
    let coarse_spec = GridSpec { n_t: (bspec.n_t / 2).max(8), n_x: (bspec.n_x / 2).max(8), ..bspec };
    let coarse = if flat { None } else { Some(busemann_field(&m, &line, side, &coarse_spec, &bopts)?) };
    if let Some(c) = &coarse {
        let ce = eikonal_residual(&m, c);
        s.check("busemann.eikonal_median", "median |g(grad b, grad b) + 1| over smooth nodes", eik.median, Relation::AtMost, 5e-2, eik.nodes);
        s.check(
            "busemann.eikonal_refinement",
            "eikonal median residual does not grow under grid refinement",
            eik.median,
            Relation::AtMost,
            ce.median,
            eik.nodes,
        );
    } else {
        s.check("busemann.eikonal_sup", "sup |g(grad b, grad b) + 1| on the flat metric", eik.sup, Relation::AtMost, 1e-6, eik.nodes);
    }
    let cal = check_calibration(&m, &b, v.calibration_pairs, 2.0 * tol.distance, &dopts, &mut stream(seed, 3))?;
    s.check("busemann.calibration", "b(y) - b(x) >= d(x,y) - slack on causal pairs", cal.violations as f64, Relation::AtMost, 0.0, cal.pairs);
    s.note("busemann.calibration.worst_margin", "smallest b(y) - b(x) - d(x,y)", cal.worst_margin);

    let lines = sample_gradient_lines(&m, &b, v.gradient_lines, &mut stream(seed, 4));
    let ray = lines.iter().map(|g| g.calibration_error).fold(0.0, f64::max);
    let dev = lines.iter().map(|g| g.geodesic_deviation).fold(0.0, f64::max);
    let cell = bspec.dt().max(bspec.dx());
    s.check("busemann.ray_identity", "b(z(t)) - b(z(0)) = t along gradient lines", ray, Relation::AtMost, tol.calibration, lines.len());
    s.check("busemann.geodesic_deviation", "gradient lines are geodesics to one grid cell", dev, Relation::AtMost, cell, lines.len());

    let semi = semiconcavity_check(&b, v.semiconcavity_paths, &mut stream(seed, 5));
    s.note("busemann.semiconcavity_k99", "99th percentile of the fitted semiconcavity constant", semi.k99);
    if let Some(c) = &coarse {
        let sc = semiconcavity_check(c, v.semiconcavity_paths, &mut stream(seed, 5));
        let change = (semi.k99 - sc.k99).abs() / semi.k99.max(sc.k99).max(1e-12);
        s.check("busemann.semiconcavity_stability", "relative change of K99 under grid refinement", change, Relation::AtMost, 0.2, semi.samples);
    } else {
        s.check("busemann.semiconcavity_flat", "K99 on the flat metric", semi.k99, Relation::AtMost, 1e-4, semi.samples);
    }

    let w = h.complement().as_vec();
    let shifted = line.translated(w);
    let gap_a = foliation_gap(&m, &line, &shifted, &action)?;
    s.check("busemann.foliation_gap_sign", "A(g1, g2) >= -tol", gap_a, Relation::AtLeast, -tol.separation, 1);
    if flat {
        s.check("busemann.foliation_gap_flat", "|A(g1, g2)| on the flat metric", gap_a.abs(), Relation::AtMost, tol.separation, 1);
    } else {
        s.note("busemann.foliation_gap", "A(g, g + w) for adjacent translates of the line", gap_a);
    }

    // Stable time separation.
    let mut sep = StableSep::new(m, cone);
    sep.tol = tol.separation;
    let r = homogeneity_check(&sep, v.homogeneity_samples, &mut stream(seed, 6))?;
    s.law("stablesep.homogeneity", "|l(lambda h) - lambda l(h)| <= (1 + lambda) tol", &r);
    let r = superadditivity_check(&sep, v.separation_samples, &mut stream(seed, 7))?;
    s.law("stablesep.superadditivity", "l(h + h') >= l(h) + l(h') - 3 tol", &r);
    let r = concavity_check(&sep, v.separation_samples, &mut stream(seed, 8))?;
    s.law("stablesep.concavity", "l(th + (1-t)h') >= t l(h) + (1-t) l(h') - 3 tol", &r);
    if flat {
        let mut rng = stream(seed, 9);
        let hs: Vec<Vec2> = (0..100).map(|_| sep.sample(0.1, &mut rng)).collect();
        let err = hs
            .iter()
            .map(|h| Ok((sep.value(*h)?.value - (h.t * h.t - h.x * h.x).sqrt()).abs()))
            .collect::<Result<Vec<f64>>>()?
            .into_iter()
            .fold(0.0, f64::max);
        s.check("stablesep.closed_form", "l(h) = sqrt(t^2 - x^2) on the flat 0.1-interior", err, Relation::AtMost, 5e-3, hs.len());
    }
    let corner = sep.corner_gap(h, w)?;
    s.note("stablesep.corner_gap", "D_w l(h) + D_{-w} l(h) at the configured class", corner.gap);
    s.check("stablesep.corner_gap_sign", "corner gap is never positive", corner.gap, Relation::AtMost, sep.tol, 1);
    s.check("stablesep.quotient_monotone", "difference quotients are monotone", f64::from(u8::from(!corner.monotone)), Relation::AtMost, 0.0, 1);
    if flat {
        s.check("stablesep.corner_gap_flat", "|corner gap| on the flat metric", corner.gap.abs(), Relation::AtMost, 3.0 * sep.tol, 1);
    }
    let turn = sep.sphere_turn(h)?;
    s.note("stablesep.sphere_turn", "turning angle of the unit sphere at h / l(h)", turn);
    let agree = corner.is_corner(sep.tol) == (turn > 3.0 * sep.tol);
    s.check("stablesep.sphere_linkage", "corner verdicts of l and of its unit sphere agree", f64::from(u8::from(!agree)), Relation::AtMost, 0.0, 1);

    let pb = PointBusemann::new(&m, &line);
    let lm = linear_parts(&pb, Side::Minus, tol.separation)?;
    let lp = linear_parts(&pb, Side::Plus, tol.separation)?;
    let mismatch = (corner.gap.abs() - (lm.apply(w) - lp.apply(w))).abs();
    s.check("stablesep.gap_vs_linear_parts", "|corner gap| = l-(w) - l+(w)", mismatch, Relation::AtMost, 2.0 * sep.tol, 1);
    let c4 = busemann_consistency(&sep, &pb, 4.0)?;
    let c8 = busemann_consistency(&sep, &pb, 8.0)?;
    s.note("stablesep.consistency_r4", "sup |b(g(0) + v) + D_{-v} l(h)| over lattice v, |v| <= 4", c4.sup);
    s.note("stablesep.consistency_r4_opposite", "the same bound with -D_v l(h) in place of D_{-v} l(h)", c4.sup_opposite);
    s.check(
        "stablesep.consistency_growth",
        "lattice Busemann bound does not grow from radius 4 to 8",
        c8.sup,
        Relation::AtMost,
        1.3 * c4.sup + sep.tol,
        c8.offsets.len(),
    );

    let profile = unit_sphere(&sep, cfg.stablesep.n_dirs, cfg.stablesep.derivative_q)?;
    s.check("stablesep.profile_positive", "l > 0 inside the cone", profile.samples.iter().map(|p| p.l).fold(f64::INFINITY, f64::min), Relation::AtLeast, 0.0, profile.samples.len());
    s.check(
        "stablesep.edge_monotone",
        "l of unit vectors decreases toward the cone edges",
        f64::from(u8::from(!profile.edge_monotone(3, sep.tol))),
        Relation::AtMost,
        0.0,
        profile.samples.len(),
    );
    if let MetricConfig::Conformal { amplitude, .. } = cfg.metric {
        if amplitude >= 0.0 && cfg.aux.is_none() {
            let worst = profile.samples.iter().map(|p| (p.sphere.t * p.sphere.t - p.sphere.x * p.sphere.x).sqrt()).fold(0.0, f64::max);
            s.check("stablesep.flat_comparison", "unit sphere lies inside the flat hyperbola", worst, Relation::AtMost, 1.0 + sep.tol, profile.samples.len());
        }
    }

    // Time-bound and Morse property.
    let mut rng = stream(seed, 10);
    let points: Vec<Vec2> = (0..16).map(|_| Vec2::new(rng.gen_range(0.0..1.0), rng.gen_range(0.0..1.0))).collect();
    for (k, eps) in [0.1, 0.3, 0.5].into_iter().enumerate() {
        let per = (v.time_vectors / 48).max(1);
        let mut excess = f64::NEG_INFINITY;
        let mut n = 0;
        for p in &points {
            let kp = m.time_bound_constant(*p)?;
            for vv in sample_time_unit_vectors(&m, *p, eps, per, &mut rng)? {
                excess = excess.max(m.aux.norm(vv) - kp / eps);
                n += 1;
            }
        }
        s.check(&format!("time_bound.eps_{k}"), &format!("|V| <= K(p)/eps for eps = {eps}"), excess, Relation::AtMost, 1e-6, n);
    }
    let o = Vec2::default();
    s.note("time_bound.reach", "sup |V| / (K/eps) at eps = 0.1", time_unit_sup(&m, o, 0.1)? / (m.time_bound_constant(o)? / 0.1));
    let (worst, shot) = morse_pairs(&m, v.morse_pairs, &mut stream(seed, 11))?;
    s.check("morse.transversal", "maximal segments cross transversally at most once", worst as f64, Relation::AtMost, 1.0, shot);

    let passed = s.checks.iter().all(|c| c.passed);
    let gradient_lines = lines.into_iter().map(|g| g.curve.nodes).collect();
    Ok(SuiteOutput {
        verdict: Verdict { seed, metric: cfg.metric.clone(), passed, checks: s.checks, notes: s.notes },
        busemann: b,
        gradient_lines,
        profile,
    })
}

/// The line of the configured direction, shared by subcommands.
pub fn configured_line(cfg: &ExperimentConfig) -> Result<(MetricField, ReferenceLine)> {
    let m = cfg.metric_field()?;
    let cone = stable_cone(&m)?;
    let line = reference_line(&m, &cone, &Direction::rational(cfg.direction()), 8.0, &ActionOptions::default())?;
    Ok((m, line))
}
