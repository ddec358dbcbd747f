//! Experiment configuration files.
//!
//! ```toml
//! seed = 7
//!
//! [metric]
//! family = "conformal"
//! amplitude = 0.3
//! center = [0.5, 0.5]
//! width_t = 0.3
//! width_x = 0.3
//!
//! [grid]
//! n = 256
//! ```
//!
//! Unknown keys are errors.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::busemann::{BusemannOptions, Side};
use crate::distance::GridSpec;
use crate::error::{LabError, Result};
use crate::metric::{AuxMetric, Bump, MetricField, Shear};
use crate::vec2::{Homology, Vec2};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "lowercase", deny_unknown_fields)]
pub enum MetricConfig {
    Flat {},
    Conformal {
        amplitude: f64,
        center: [f64; 2],
        /// Omit for a stripe independent of `t`.
        width_t: Option<f64>,
        width_x: f64,
    },
    Tilted {
        #[serde(default)]
        tilt: f64,
        #[serde(default)]
        shear_t: f64,
        #[serde(default)]
        shear_x: f64,
        half_opening: f64,
    },
}

/// Constant diagonal auxiliary metric `tt dt² + xx dx²`. Absent means Euclidean.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AuxConfig {
    pub tt: f64,
    pub xx: f64,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridConfig {
    /// Nodes per axis minus one; `n_t`, `n_x` override it.
    pub n: Option<usize>,
    pub n_t: Option<usize>,
    pub n_x: Option<usize>,
    pub window_t: Option<[f64; 2]>,
    pub window_x: Option<[f64; 2]>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Tolerances {
    /// Null-vector classification.
    pub null: f64,
    /// Calibration and gradient-line checks.
    pub calibration: f64,
    pub distance: f64,
    /// Stable time separation convergence.
    pub separation: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        Tolerances { null: 1e-9, calibration: 1e-2, distance: 1e-3, separation: 1e-3 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DistanceConfig {
    pub source: [f64; 2],
    /// Second-order Simpson chords instead of the midpoint rule.
    pub simpson: bool,
}

impl Default for DistanceConfig {
    fn default() -> Self {
        DistanceConfig { source: [0.0, 0.0], simpson: false }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct BusemannConfig {
    /// Class `t,x` of the reference line.
    pub direction: String,
    pub side: Side,
    pub heights: Vec<f64>,
    pub margin: f64,
    /// Gradient lines drawn on the heatmap.
    pub gradient_lines: usize,
}

impl Default for BusemannConfig {
    fn default() -> Self {
        let o = BusemannOptions::default();
        BusemannConfig { direction: "1,0".into(), side: Side::Minus, heights: o.heights, margin: o.margin, gradient_lines: 8 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct StableSepConfig {
    pub n_dirs: usize,
    /// Largest `t`-winding of the classes that get one-sided derivatives.
    pub derivative_q: i64,
}

impl Default for StableSepConfig {
    fn default() -> Self {
        StableSepConfig { n_dirs: 17, derivative_q: 2 }
    }
}

/// Sample counts of the `verify` suite.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct VerifyConfig {
    pub distance_pairs: usize,
    pub calibration_pairs: usize,
    pub triangle_triples: usize,
    pub gradient_lines: usize,
    pub semiconcavity_paths: usize,
    pub separation_samples: usize,
    pub homogeneity_samples: usize,
    pub time_vectors: usize,
    pub morse_pairs: usize,
}

impl Default for VerifyConfig {
    fn default() -> Self {
        VerifyConfig {
            distance_pairs: 500,
            calibration_pairs: 1000,
            triangle_triples: 1000,
            gradient_lines: 50,
            semiconcavity_paths: 2000,
            separation_samples: 200,
            homogeneity_samples: 50,
            time_vectors: 20000,
            morse_pairs: 200,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    #[serde(default)]
    pub seed: u64,
    /// Output directory; the `--out` flag takes precedence.
    pub output: Option<PathBuf>,
    pub metric: MetricConfig,
    pub aux: Option<AuxConfig>,
    #[serde(default)]
    pub grid: GridConfig,
    #[serde(default)]
    pub tolerances: Tolerances,
    #[serde(default)]
    pub distance: DistanceConfig,
    #[serde(default)]
    pub busemann: BusemannConfig,
    #[serde(default)]
    pub stablesep: StableSepConfig,
    #[serde(default)]
    pub verify: VerifyConfig,
}

/// Default grid windows per use.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum WindowUse {
    Distance,
    Busemann,
}

impl ExperimentConfig {
    pub fn flat() -> Self {
        ExperimentConfig {
            seed: 0,
            output: None,
            metric: MetricConfig::Flat {},
            aux: None,
            grid: GridConfig::default(),
            tolerances: Tolerances::default(),
            distance: DistanceConfig::default(),
            busemann: BusemannConfig::default(),
            stablesep: StableSepConfig::default(),
            verify: VerifyConfig::default(),
        }
    }

    /// Parses and validates; errors name the offending line or field.
    pub fn parse(text: &str) -> Result<Self> {
        let c: ExperimentConfig = toml::from_str(text).map_err(|e| LabError::Config(e.to_string().trim_end().to_string()))?;
        c.validate()?;
        Ok(c)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::parse(&text).map_err(|e| match e {
            LabError::Config(msg) => LabError::Config(format!("{}: {msg}", path.display())),
            e => e,
        })
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |field: &str, why: &str| Err(LabError::Config(format!("field `{field}`: {why}")));
        let t = &self.tolerances;
        for (name, v) in [("null", t.null), ("calibration", t.calibration), ("distance", t.distance), ("separation", t.separation)] {
            if !(v > 0.0 && v.is_finite()) {
                return bad(&format!("tolerances.{name}"), "must be positive");
            }
        }
        for (name, v) in [("grid.n", self.grid.n), ("grid.n_t", self.grid.n_t), ("grid.n_x", self.grid.n_x)] {
            if v.is_some_and(|n| n < 8) {
                return bad(name, "must be at least 8");
            }
        }
        for (name, w) in [("grid.window_t", self.grid.window_t), ("grid.window_x", self.grid.window_x)] {
            if w.is_some_and(|[a, b]| !(a < b && a.is_finite() && b.is_finite())) {
                return bad(name, "needs two finite increasing bounds");
            }
        }
        if self.busemann.direction.parse::<Homology>().is_err() {
            return bad("busemann.direction", "expected two integers `t,x`");
        }
        if self.busemann.heights.is_empty() || self.busemann.heights.iter().any(|h| !(*h > 0.0)) {
            return bad("busemann.heights", "needs positive entries");
        }
        if !(self.busemann.margin >= 0.0) {
            return bad("busemann.margin", "must be nonnegative");
        }
        if self.stablesep.n_dirs < 8 {
            return bad("stablesep.n_dirs", "must be at least 8");
        }
        if let Some(a) = self.aux {
            if !(a.tt > 0.0 && a.xx > 0.0) {
                return bad("aux", "needs positive `tt` and `xx`");
            }
        }
        self.metric_field().map(|_| ()).map_err(|e| LabError::Config(format!("field `metric`: {e}")))
    }

    pub fn metric_field(&self) -> Result<MetricField> {
        let m = match self.metric {
            MetricConfig::Flat {} => MetricField::flat(),
            MetricConfig::Conformal { amplitude, center, width_t, width_x } => {
                MetricField::conformal(Bump { amplitude, center: Vec2::new(center[0], center[1]), width_t, width_x })?
            }
            MetricConfig::Tilted { tilt, shear_t, shear_x, half_opening } => {
                MetricField::tilted(Shear { tilt, shear_t, shear_x, half_opening })?
            }
        };
        Ok(match self.aux {
            Some(AuxConfig { tt, xx }) => m.with_aux(AuxMetric::Diagonal { tt, xx }),
            None => m,
        })
    }

    pub fn grid_spec(&self, usage: WindowUse) -> Result<GridSpec> {
        let (wt, wx, n) = match usage {
            WindowUse::Distance => ([0.0, 3.0], [-1.5, 1.5], 256),
            WindowUse::Busemann => ([0.0, 2.0], [-1.0, 1.0], 256),
        };
        let g = &self.grid;
        let n = g.n.unwrap_or(n);
        let (wt, wx) = (g.window_t.unwrap_or(wt), g.window_x.unwrap_or(wx));
        GridSpec::new((wt[0], wt[1]), (wx[0], wx[1]), g.n_t.unwrap_or(n), g.n_x.unwrap_or(n))
    }

    pub fn busemann_options(&self) -> BusemannOptions {
        BusemannOptions {
            heights: self.busemann.heights.clone(),
            margin: self.busemann.margin,
            distance_tol: self.tolerances.distance,
            ..BusemannOptions::default()
        }
    }

    pub fn direction(&self) -> Homology {
        self.busemann.direction.parse().expect("validated")
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_conformal() {
        let c = ExperimentConfig::parse(
            "seed = 3\n[metric]\nfamily = \"conformal\"\namplitude = 0.3\ncenter = [0.5, 0.5]\nwidth_x = 0.3\n[grid]\nn = 64\n",
        )
        .unwrap();
        assert_eq!(c.seed, 3);
        assert!(matches!(c.metric, MetricConfig::Conformal { width_t: None, .. }));
        let g = c.grid_spec(WindowUse::Busemann).unwrap();
        assert_eq!((g.n_t, g.t1, g.x0), (64, 2.0, -1.0));
        assert_eq!(c.direction(), Homology::new(1, 0));
    }

    #[test]
    fn unknown_keys_are_rejected() {
        let e = ExperimentConfig::parse("[metric]\nfamily = \"flat\"\n[tolerances]\ndistanse = 1e-3\n").unwrap_err();
        let msg = e.to_string();
        assert!(msg.contains("distanse") && msg.contains("line"), "{msg}");
        assert!(ExperimentConfig::parse("[metric]\nfamily = \"flat\"\namplitude = 1.0\n").is_err());
        assert!(ExperimentConfig::parse("[metric]\nfamily = \"flat\"\nbogus = 1\n").is_err());
    }

    #[test]
    fn validation_names_the_field() {
        let e = ExperimentConfig::parse("[metric]\nfamily = \"flat\"\n[tolerances]\ndistance = -1.0\n").unwrap_err();
        assert!(e.to_string().contains("tolerances.distance"), "{e}");
        let e = ExperimentConfig::parse("[metric]\nfamily = \"tilted\"\nhalf_opening = 0.0\n").unwrap_err();
        assert!(e.to_string().contains("metric"), "{e}");
    }

    #[test]
    fn shipped_configs_parse() {
        let dir = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs");
        let mut n = 0;
        for e in std::fs::read_dir(dir).unwrap() {
            let p = e.unwrap().path();
            ExperimentConfig::load(&p).unwrap();
            n += 1;
        }
        assert!(n >= 5);
    }
}
