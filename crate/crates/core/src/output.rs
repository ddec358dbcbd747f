//! Deterministic CSV, JSON and SVG artifacts, written atomically.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use serde::Serialize;

use crate::error::{LabError, Result};
use crate::vec2::Vec2;

/// Writes `bytes` to a sibling temporary file and renames it over `path`.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir)?;
    }
    let mut tmp = path.as_os_str().to_owned();
    tmp.push(".tmp");
    fs::write(&tmp, bytes)?;
    fs::rename(&tmp, path)?;
    Ok(())
}

/// Float with 17 significant digits; `NaN` is written as `nan`.
pub fn fmt_float(v: f64) -> String {
    if v.is_nan() {
        "nan".into()
    } else {
        format!("{v:.16e}")
    }
}

/// A CSV table with a fixed header.
pub struct Csv {
    text: String,
    columns: usize,
}

/// One CSV cell.
pub enum Cell {
    F(f64),
    I(i64),
    Missing,
}

impl Csv {
    pub fn new(header: &[&str]) -> Csv {
        Csv { text: header.join(",") + "\n", columns: header.len() }
    }

    pub fn row(&mut self, cells: &[Cell]) {
        assert_eq!(cells.len(), self.columns, "row width");
        let fields: Vec<String> = cells
            .iter()
            .map(|c| match c {
                Cell::F(v) => fmt_float(*v),
                Cell::I(v) => v.to_string(),
                Cell::Missing => String::new(),
            })
            .collect();
        self.text.push_str(&fields.join(","));
        self.text.push('\n');
    }

    pub fn as_str(&self) -> &str {
        &self.text
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        write_atomic(path, self.text.as_bytes())
    }
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut s = serde_json::to_string_pretty(value).map_err(|e| LabError::Config(format!("serialization: {e}")))?;
    s.push('\n');
    write_atomic(path, s.as_bytes())
}

/// Linear blue-white-red map of `u ∈ [0, 1]`.
fn color(u: f64) -> String {
    let u = if u.is_finite() { u.clamp(0.0, 1.0) } else { 0.5 };
    let (lo, mid, hi) = ([49.0, 84.0, 149.0], [247.0, 247.0, 247.0], [178.0, 24.0, 43.0]);
    let (a, b, s) = if u < 0.5 { (lo, mid, 2.0 * u) } else { (mid, hi, 2.0 * u - 1.0) };
    let c: Vec<u8> = (0..3).map(|k| (a[k] + (b[k] - a[k]) * s).round() as u8).collect();
    format!("#{:02x}{:02x}{:02x}", c[0], c[1], c[2])
}

const SIZE: f64 = 512.0;
const PAD: f64 = 40.0;

/// Heatmap of a field on `[t0,t1]×[x0,x1]` with `t` upward and `x` to the right,
/// downsampled to at most 128 cells per axis, with polyline overlays.
pub fn heatmap_svg(
    title: &str,
    window: ((f64, f64), (f64, f64)),
    values: &dyn Fn(f64, f64) -> Option<f64>,
    cells: usize,
    overlays: &[Vec<Vec2>],
) -> String {
    let ((t0, t1), (x0, x1)) = window;
    let n = cells.clamp(1, 128);
    let mut grid = vec![f64::NAN; n * n];
    for i in 0..n {
        for j in 0..n {
            let t = t0 + (i as f64 + 0.5) / n as f64 * (t1 - t0);
            let x = x0 + (j as f64 + 0.5) / n as f64 * (x1 - x0);
            grid[i * n + j] = values(t, x).unwrap_or(f64::NAN);
        }
    }
    let (lo, hi) = grid.iter().filter(|v| v.is_finite()).fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &v| (a.min(v), b.max(v)));
    let span = if hi > lo { hi - lo } else { 1.0 };
    let px = |t: f64, x: f64| (PAD + (x - x0) / (x1 - x0) * SIZE, PAD + (t1 - t) / (t1 - t0) * SIZE);
    let cell = SIZE / n as f64;
    let mut s = String::new();
    let total = SIZE + 2.0 * PAD;
    let _ = writeln!(s, r#"<svg xmlns="http://www.w3.org/2000/svg" width="{total}" height="{total}" viewBox="0 0 {total} {total}">"#);
    let _ = writeln!(s, r#"<title>{}</title>"#, escape(title));
    let _ = writeln!(s, r##"<rect width="{total}" height="{total}" fill="#ffffff"/>"##);
    for i in 0..n {
        for j in 0..n {
            let v = grid[i * n + j];
            let fill = if v.is_finite() { color((v - lo) / span) } else { "#cccccc".into() };
            let (x, y) = (PAD + j as f64 * cell, PAD + SIZE - (i + 1) as f64 * cell);
            let _ = writeln!(s, r#"<rect x="{x:.3}" y="{y:.3}" width="{:.3}" height="{:.3}" fill="{fill}"/>"#, cell + 0.01, cell + 0.01);
        }
    }
    for line in overlays.iter().filter(|l| l.len() >= 2) {
        let pts: Vec<String> = line
            .iter()
            .map(|p| {
                let (a, b) = px(p.t, p.x);
                format!("{a:.3},{b:.3}")
            })
            .collect();
        let _ = writeln!(s, r##"<polyline points="{}" fill="none" stroke="#111111" stroke-width="1.2"/>"##, pts.join(" "));
    }
    let _ = writeln!(s, r##"<rect x="{PAD}" y="{PAD}" width="{SIZE}" height="{SIZE}" fill="none" stroke="#000000"/>"##);
    let _ = writeln!(s, r#"<text x="{PAD}" y="{:.1}" font-size="12">x in [{x0}, {x1}], t in [{t0}, {t1}] upward, value in [{lo:.6}, {hi:.6}]</text>"#, PAD - 10.0);
    s.push_str("</svg>\n");
    s
}

/// Polar plot of points `(t, x)` with `t` upward, joined in order, with an optional
/// reference curve drawn dashed.
pub fn polar_svg(title: &str, points: &[Vec2], reference: &[Vec2]) -> String {
    let all: Vec<Vec2> = points.iter().chain(reference).copied().filter(|p| p.is_finite()).collect();
    let r = all.iter().map(|p| p.t.abs().max(p.x.abs())).fold(1e-9, f64::max) * 1.1;
    let px = |p: Vec2| (PAD + (p.x + r) / (2.0 * r) * SIZE, PAD + (r - p.t) / (2.0 * r) * SIZE);
    let path = |pts: &[Vec2]| -> String {
        pts.iter()
            .filter(|p| p.is_finite())
            .map(|&p| {
                let (a, b) = px(p);
                format!("{a:.3},{b:.3}")
            })
            .collect::<Vec<_>>()
            .join(" ")
    };
    let total = SIZE + 2.0 * PAD;
    let mut s = String::new();
    let _ = writeln!(s, r#"<svg xmlns="http://www.w3.org/2000/svg" width="{total}" height="{total}" viewBox="0 0 {total} {total}">"#);
    let _ = writeln!(s, r#"<title>{}</title>"#, escape(title));
    let _ = writeln!(s, r##"<rect width="{total}" height="{total}" fill="#ffffff"/>"##);
    let (o, top, right, left) = (px(Vec2::default()), px(Vec2::new(r, 0.0)), px(Vec2::new(0.0, r)), px(Vec2::new(0.0, -r)));
    let _ = writeln!(s, r##"<line x1="{:.3}" y1="{:.3}" x2="{:.3}" y2="{:.3}" stroke="#888888"/>"##, o.0, o.1, top.0, top.1);
    let _ = writeln!(s, r##"<line x1="{:.3}" y1="{:.3}" x2="{:.3}" y2="{:.3}" stroke="#888888"/>"##, left.0, left.1, right.0, right.1);
    if reference.len() >= 2 {
        let _ = writeln!(s, r##"<polyline points="{}" fill="none" stroke="#888888" stroke-dasharray="4 3"/>"##, path(reference));
    }
    let _ = writeln!(s, r##"<polyline points="{}" fill="none" stroke="#b2182b" stroke-width="1.5"/>"##, path(points));
    for p in points.iter().filter(|p| p.is_finite()) {
        let (a, b) = px(*p);
        let _ = writeln!(s, r##"<circle cx="{a:.3}" cy="{b:.3}" r="2.5" fill="#b2182b"/>"##);
    }
    s.push_str("</svg>\n");
    s
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn floats_round_trip() {
        for v in [0.1, 1.0 / 3.0, -2.5e-17, 6.02214076e23] {
            assert_eq!(fmt_float(v).parse::<f64>().unwrap(), v);
        }
    }

    #[test]
    fn csv_rows_and_missing_cells() {
        let mut c = Csv::new(&["a", "b", "c"]);
        c.row(&[Cell::F(0.5), Cell::Missing, Cell::I(2)]);
        assert_eq!(c.as_str(), "a,b,c\n5.0000000000000000e-1,,2\n");
    }

    #[test]
    fn atomic_write_replaces() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("sub/out.txt");
        write_atomic(&p, b"one").unwrap();
        write_atomic(&p, b"two").unwrap();
        assert_eq!(fs::read_to_string(&p).unwrap(), "two");
        assert_eq!(fs::read_dir(p.parent().unwrap()).unwrap().count(), 1);
    }

    #[test]
    fn svg_is_bounded_and_deterministic() {
        let f = |t: f64, x: f64| Some(t - x);
        let a = heatmap_svg("b", ((0.0, 1.0), (0.0, 1.0)), &f, 500, &[vec![Vec2::new(0.1, 0.1), Vec2::new(0.9, 0.2)]]);
        assert_eq!(a, heatmap_svg("b", ((0.0, 1.0), (0.0, 1.0)), &f, 500, &[vec![Vec2::new(0.1, 0.1), Vec2::new(0.9, 0.2)]]));
        assert_eq!(a.matches("<rect x=").count(), 128 * 128 + 1);
        let p = polar_svg("s", &[Vec2::new(1.0, 0.0), Vec2::new(1.2, 0.6)], &[]);
        assert!(p.contains("<circle") && p.ends_with("</svg>\n"));
    }
}
