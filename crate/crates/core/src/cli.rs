//! Command-line front end.
//!
//! Exit codes: 0 on success, 1 on a failed check or computation, 2 on a bad configuration.

use std::ffi::OsString;
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand};
use serde::Serialize;

use crate::action::ActionOptions;
use crate::busemann::{busemann_field, eikonal_residual, BusemannGrid, EikonalStats, Side};
use crate::config::{ExperimentConfig, WindowUse};
use crate::distance::{causal_dp, periodic_maximizer, Quadrature};
use crate::error::{LabError, Result};
use crate::foliation::{stable_cone, StableCone};
use crate::output::{heatmap_svg, polar_svg, write_json, Cell, Csv};
use crate::stablesep::{unit_sphere, SeparationProfile, StableSep};
use crate::vec2::{Homology, Vec2};
use crate::verify::{configured_line, run_suite, sample_gradient_lines, stream};

#[derive(Debug, Parser)]
#[command(name = "torus-lab", version, about = "Lorentzian distance, Busemann functions and stable time separation on 2-tori")]
pub struct Cli {
    /// Experiment configuration (TOML). Defaults to the flat metric.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Output directory; overrides `output` in the config, default `out`.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    /// Overrides the configured seed.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Stable time cone and class A verdict.
    Cone,
    /// Layered DP distance from a source over the grid window.
    Distance {
        /// Source point `t,x`.
        #[arg(long, value_parser = parse_point)]
        source: Option<Vec2>,
    },
    /// Closed maximizer in a homology class.
    Maximizer {
        /// Class `q,p`: `q` windings in `t`, `p` in `x`.
        #[arg(long)]
        homology: Homology,
    },
    /// Busemann function of a periodic line.
    Busemann {
        /// Class `q,p` of the line.
        #[arg(long)]
        direction: Option<Homology>,
        #[arg(long)]
        side: Option<Side>,
    },
    /// Stable time separation profile and unit sphere.
    Stablesep {
        #[arg(long)]
        n_dirs: Option<usize>,
    },
    /// Runs every check and writes a verdict.
    Verify,
}

fn parse_point(s: &str) -> std::result::Result<Vec2, String> {
    let v: Vec<f64> = s.split(',').map(|p| p.trim().parse::<f64>().map_err(|e| format!("`{s}`: {e}"))).collect::<std::result::Result<_, _>>()?;
    match v[..] {
        [t, x] => Ok(Vec2::new(t, x)),
        _ => Err(format!("expected `t,x`, got `{s}`")),
    }
}

/// Parses `args` and runs; returns the process exit code.
pub fn main_with<I: IntoIterator<Item = OsString>>(args: I) -> i32 {
    match Cli::try_parse_from(args) {
        Ok(cli) => run(&cli),
        Err(e) => {
            let _ = e.print();
            if e.use_stderr() {
                2
            } else {
                0
            }
        }
    }
}

pub fn run(cli: &Cli) -> i32 {
    match execute(cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            match e {
                LabError::Config(_) => 2,
                _ => 1,
            }
        }
    }
}

fn load(cli: &Cli) -> Result<ExperimentConfig> {
    let mut cfg = match &cli.config {
        Some(p) => ExperimentConfig::load(p).map_err(|e| match e {
            LabError::Io(io) => LabError::Config(format!("{}: {io}", p.display())),
            e => e,
        })?,
        None => ExperimentConfig::flat(),
    };
    if let Some(s) = cli.seed {
        cfg.seed = s;
    }
    Ok(cfg)
}

/// Runs the parsed command and returns its exit code.
pub fn execute(cli: &Cli) -> Result<i32> {
    let mut cfg = load(cli)?;
    let out = cli.out.clone().or_else(|| cfg.output.clone()).unwrap_or_else(|| PathBuf::from("out"));
    let out = out.as_path();
    match &cli.command {
        Command::Cone => cone(&cfg, out),
        Command::Distance { source } => {
            if let Some(s) = source {
                cfg.distance.source = [s.t, s.x];
            }
            distance(&cfg, out)
        }
        Command::Maximizer { homology } => maximizer(&cfg, *homology, out),
        Command::Busemann { direction, side } => {
            if let Some(d) = direction {
                cfg.busemann.direction = format!("{},{}", d.t, d.x);
            }
            if let Some(s) = side {
                cfg.busemann.side = *s;
            }
            cfg.validate()?;
            busemann(&cfg, out)
        }
        Command::Stablesep { n_dirs } => {
            if let Some(n) = n_dirs {
                cfg.stablesep.n_dirs = *n;
            }
            cfg.validate()?;
            stablesep(&cfg, out)
        }
        Command::Verify => verify(&cfg, out),
    }
}

#[derive(Serialize)]
struct ConeReport {
    class_a: bool,
    reason: Option<String>,
    cone: Option<StableCone>,
    angle: Option<f64>,
}

fn cone(cfg: &ExperimentConfig, out: &Path) -> Result<i32> {
    let m = cfg.metric_field()?;
    match stable_cone(&m) {
        Ok(c) => {
            write_json(&out.join("cone.json"), &ConeReport { class_a: true, reason: None, cone: Some(c), angle: Some(c.angle()) })?;
            Ok(0)
        }
        Err(LabError::NotClassA(why)) => {
            write_json(&out.join("cone.json"), &ConeReport { class_a: false, reason: Some(why.clone()), cone: None, angle: None })?;
            eprintln!("not class A: {why}");
            Ok(1)
        }
        Err(e) => Err(e),
    }
}

fn distance(cfg: &ExperimentConfig, out: &Path) -> Result<i32> {
    let m = cfg.metric_field()?;
    let spec = cfg.grid_spec(WindowUse::Distance)?;
    let mut dp = crate::distance::DpOptions::default();
    if cfg.distance.simpson {
        dp.quadrature = Quadrature::Simpson;
    }
    let [t, x] = cfg.distance.source;
    let g = causal_dp(&m, Vec2::new(t, x), &spec, &dp)?;
    let mut csv = Csv::new(&["t", "x", "d", "reachable"]);
    for i in 0..=spec.n_t {
        for j in 0..=spec.n_x {
            let p = spec.node(i, j);
            csv.row(&[Cell::F(p.t), Cell::F(p.x), Cell::F(g.value(i, j)), Cell::I(i64::from(g.reachable(i, j)))]);
        }
    }
    csv.write(&out.join("distance.csv"))?;
    let f = |t: f64, x: f64| g.interpolate(Vec2::new(t, x));
    let svg = heatmap_svg("Lorentzian distance from the source", ((spec.t0, spec.t1), (spec.x0, spec.x1)), &f, 128, &[]);
    crate::output::write_atomic(&out.join("distance.svg"), svg.as_bytes())?;
    Ok(0)
}

#[derive(Serialize)]
struct MaximizerReport {
    homology: Homology,
    period: f64,
    base: Vec2,
    riemann_length: f64,
}

fn maximizer(cfg: &ExperimentConfig, h: Homology, out: &Path) -> Result<i32> {
    let m = cfg.metric_field()?;
    let cone = stable_cone(&m)?;
    let pm = periodic_maximizer(&m, &cone, h, &ActionOptions::default())?;
    let mut csv = Csv::new(&["parameter", "t", "x"]);
    for (s, p) in pm.curve.params.iter().zip(&pm.curve.nodes) {
        csv.row(&[Cell::F(*s), Cell::F(p.t), Cell::F(p.x)]);
    }
    csv.write(&out.join("maximizer.csv"))?;
    let report = MaximizerReport { homology: h, period: pm.period, base: pm.base, riemann_length: pm.curve.riemann_length(&m) };
    write_json(&out.join("maximizer.json"), &report)?;
    Ok(0)
}

/// Busemann grid as CSV `t,x,b,grad_t,grad_x,flag` with flag 0 smooth, 1 boundary, 2 corner.
pub fn busemann_csv(b: &BusemannGrid) -> Csv {
    let s = &b.spec;
    let mut csv = Csv::new(&["t", "x", "b", "grad_t", "grad_x", "flag"]);
    for i in 0..=s.n_t {
        for j in 0..=s.n_x {
            let (p, k) = (s.node(i, j), s.index(i, j));
            let g = b.gradient[k];
            csv.row(&[Cell::F(p.t), Cell::F(p.x), Cell::F(b.values[k]), Cell::F(g.t), Cell::F(g.x), Cell::I(b.flags[k].code() as i64)]);
        }
    }
    csv
}

fn busemann_svg(b: &BusemannGrid, lines: &[Vec<Vec2>]) -> String {
    let s = &b.spec;
    let f = |t: f64, x: f64| b.value_at(Vec2::new(t, x));
    heatmap_svg("Busemann function with gradient lines", ((s.t0, s.t1), (s.x0, s.x1)), &f, 128, lines)
}

#[derive(Serialize)]
struct BusemannReport {
    direction: Homology,
    side: Side,
    horizon: f64,
    converged: bool,
    decrements: Vec<f64>,
    eikonal: EikonalStats,
    corner_fraction: f64,
}

fn busemann(cfg: &ExperimentConfig, out: &Path) -> Result<i32> {
    let (m, line) = configured_line(cfg)?;
    let spec = cfg.grid_spec(WindowUse::Busemann)?;
    let b = busemann_field(&m, &line, cfg.busemann.side, &spec, &cfg.busemann_options())?;
    busemann_csv(&b).write(&out.join("busemann.csv"))?;
    let lines: Vec<Vec<Vec2>> = sample_gradient_lines(&m, &b, cfg.busemann.gradient_lines, &mut stream(cfg.seed, 4))
        .into_iter()
        .map(|g| g.curve.nodes)
        .collect();
    crate::output::write_atomic(&out.join("busemann.svg"), busemann_svg(&b, &lines).as_bytes())?;
    let report = BusemannReport {
        direction: cfg.direction(),
        side: b.side,
        horizon: b.horizon,
        converged: b.converged,
        decrements: b.decrements.clone(),
        eikonal: eikonal_residual(&m, &b),
        corner_fraction: b.corner_fraction(),
    };
    write_json(&out.join("busemann.json"), &report)?;
    Ok(0)
}

/// Profile as CSV `alpha_t,alpha_x,l,D_plus,D_minus,gap`; derivative cells are empty where
/// not computed.
pub fn profile_csv(p: &SeparationProfile) -> Csv {
    let opt = |v: Option<f64>| v.map_or(Cell::Missing, Cell::F);
    let mut csv = Csv::new(&["alpha_t", "alpha_x", "l", "D_plus", "D_minus", "gap"]);
    for s in &p.samples {
        csv.row(&[Cell::F(s.alpha.t), Cell::F(s.alpha.x), Cell::F(s.l), opt(s.d_plus), opt(s.d_minus), opt(s.gap)]);
    }
    csv
}

fn profile_svg(p: &SeparationProfile) -> String {
    let pts: Vec<Vec2> = p.samples.iter().map(|s| s.sphere).collect();
    let r = pts.iter().map(|q| q.norm()).fold(1.0, f64::max);
    let hyperbola: Vec<Vec2> = (-40..=40)
        .map(|k| {
            let u = k as f64 / 40.0 * (2.0 * r).acosh().max(1.0);
            Vec2::new(u.cosh(), u.sinh())
        })
        .filter(|q| q.norm() <= 1.1 * r)
        .collect();
    polar_svg("unit sphere of the stable time separation (dashed: flat hyperbola)", &pts, &hyperbola)
}

fn stablesep(cfg: &ExperimentConfig, out: &Path) -> Result<i32> {
    let m = cfg.metric_field()?;
    let cone = stable_cone(&m)?;
    let mut sep = StableSep::new(m, cone);
    sep.tol = cfg.tolerances.separation;
    let p = unit_sphere(&sep, cfg.stablesep.n_dirs, cfg.stablesep.derivative_q)?;
    profile_csv(&p).write(&out.join("stablesep.csv"))?;
    crate::output::write_atomic(&out.join("stablesep.svg"), profile_svg(&p).as_bytes())?;
    write_json(&out.join("stablesep.json"), &p)?;
    Ok(0)
}

fn verify(cfg: &ExperimentConfig, out: &Path) -> Result<i32> {
    let r = run_suite(cfg)?;
    busemann_csv(&r.busemann).write(&out.join("busemann.csv"))?;
    crate::output::write_atomic(&out.join("busemann.svg"), busemann_svg(&r.busemann, &r.gradient_lines).as_bytes())?;
    profile_csv(&r.profile).write(&out.join("stablesep.csv"))?;
    crate::output::write_atomic(&out.join("stablesep.svg"), profile_svg(&r.profile).as_bytes())?;
    write_json(&out.join("verdict.json"), &r.verdict)?;
    for c in &r.verdict.checks {
        println!("{} {} measured {:.6e} tolerance {:.6e}", if c.passed { "PASS" } else { "FAIL" }, c.name, c.measured, c.tolerance);
    }
    Ok(if r.verdict.passed { 0 } else { 1 })
}
