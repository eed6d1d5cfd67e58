//! Static SVG figures of trajectories over the constraint geometry.

use std::fmt::Write as _;
use std::path::Path;

use crate::config::{ConstraintSpec, ConstraintType};
use crate::dataset::LabeledTrajectory;
use crate::error::{Error, Result};

const SIZE: f64 = 600.0;
const MARGIN: f64 = 0.15;
const CLASS_COLORS: [&str; 4] = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd"];

#[derive(Debug, Clone, Copy, PartialEq)]
struct Bounds {
    min: [f64; 2],
    max: [f64; 2],
}

impl Bounds {
    fn empty() -> Self {
        Self {
            min: [f64::INFINITY; 2],
            max: [f64::NEG_INFINITY; 2],
        }
    }

    fn include(&mut self, p: [f64; 2], pad: f64) {
        for k in 0..2 {
            self.min[k] = self.min[k].min(p[k] - pad);
            self.max[k] = self.max[k].max(p[k] + pad);
        }
    }

    /// Square box around everything, so disks stay round.
    fn squared(self) -> Self {
        if !self.min[0].is_finite() {
            return Self {
                min: [-1.0, -1.0],
                max: [1.0, 1.0],
            };
        }
        let span = (self.max[0] - self.min[0]).max(self.max[1] - self.min[1]).max(1e-9) * (1.0 + 2.0 * MARGIN);
        let mid = [0.5 * (self.min[0] + self.max[0]), 0.5 * (self.min[1] + self.max[1])];
        Self {
            min: [mid[0] - 0.5 * span, mid[1] - 0.5 * span],
            max: [mid[0] + 0.5 * span, mid[1] + 0.5 * span],
        }
    }

    fn scale(&self) -> f64 {
        SIZE / (self.max[0] - self.min[0])
    }

    fn map(&self, p: [f64; 2]) -> (f64, f64) {
        let s = self.scale();
        ((p[0] - self.min[0]) * s, (self.max[1] - p[1]) * s)
    }
}

/// Renders containment disks in green, keep-out disks in grey, and one
/// polyline per trajectory colored by class. Only the first two state
/// coordinates of each waypoint are drawn.
pub fn render_svg(trajs: &[LabeledTrajectory], constraints: &[ConstraintSpec]) -> String {
    let mut bounds = Bounds::empty();
    for c in constraints {
        bounds.include(c.center, c.radius);
    }
    for t in trajs {
        for s in t.trajectory.waypoints() {
            bounds.include([s[0], s[1]], 0.0);
        }
    }
    let bounds = bounds.squared();
    let scale = bounds.scale();

    let mut svg = String::new();
    let _ = writeln!(
        svg,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{SIZE}" height="{SIZE}" viewBox="0 0 {SIZE} {SIZE}">"#
    );
    let _ = writeln!(svg, r#"<rect width="{SIZE}" height="{SIZE}" fill="white"/>"#);
    for c in constraints {
        let (cx, cy) = bounds.map(c.center);
        let (fill, stroke) = match c.kind {
            ConstraintType::DiskContainment => ("#2ca02c33", "#2ca02c"),
            ConstraintType::DiskKeepout => ("#55555599", "#222222"),
        };
        let _ = writeln!(
            svg,
            r#"<circle cx="{cx:.3}" cy="{cy:.3}" r="{:.3}" fill="{fill}" stroke="{stroke}" stroke-width="1.5"/>"#,
            c.radius * scale
        );
    }
    for t in trajs {
        let color = CLASS_COLORS[t.class.id() % CLASS_COLORS.len()];
        let mut points = String::new();
        for s in t.trajectory.waypoints() {
            let (x, y) = bounds.map([s[0], s[1]]);
            let _ = write!(points, "{x:.2},{y:.2} ");
        }
        let _ = writeln!(
            svg,
            r#"<polyline points="{}" fill="none" stroke="{color}" stroke-opacity="0.5" stroke-width="1"/>"#,
            points.trim_end()
        );
    }
    svg.push_str("</svg>\n");
    svg
}

pub fn write_svg(path: impl AsRef<Path>, trajs: &[LabeledTrajectory], constraints: &[ConstraintSpec]) -> Result<()> {
    let path = path.as_ref();
    std::fs::write(path, render_svg(trajs, constraints)).map_err(|e| Error::io(path, e))
}
