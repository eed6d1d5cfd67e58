//! Synthetic two-class planar navigation data.
//!
//! Each trajectory is a cubic Bezier curve evaluated at uniformly spaced
//! parameters. Endpoints are drawn uniformly from goal disks (class 0 runs
//! lower-left to upper-right, class 1 upper-left to lower-right); the two
//! interior control points are uniform in a square box, independently of
//! the class.

use std::fs;
use std::io::{BufWriter, Write};
use std::path::Path;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::{class_stream, stream_rng};
use crate::trajectory::{ClassLabel, Trajectory};

pub const NUM_CLASSES: usize = 2;

/// Start-disk centers per class.
pub const START_CENTERS: [[f64; 2]; NUM_CLASSES] = [[-1.0, -1.0], [-1.0, 1.0]];
/// End-disk centers per class.
pub const END_CENTERS: [[f64; 2]; NUM_CLASSES] = [[1.0, 1.0], [1.0, -1.0]];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DatasetSpec {
    pub samples_per_class: usize,
    pub points_per_trajectory: usize,
    pub goal_radius: f64,
    /// Interior control points are uniform in `[-control_box, control_box]^2`.
    pub control_box: f64,
    pub seed: u64,
}

impl Default for DatasetSpec {
    fn default() -> Self {
        Self {
            samples_per_class: 10_000,
            points_per_trajectory: 100,
            goal_radius: 0.2,
            control_box: 1.5,
            seed: 0,
        }
    }
}

impl DatasetSpec {
    pub fn validate(&self) -> Result<()> {
        if !(self.goal_radius > 0.0 && self.goal_radius.is_finite()) {
            return Err(Error::Parameter(format!(
                "goal_radius must be positive, got {}",
                self.goal_radius
            )));
        }
        if self.points_per_trajectory < 2 {
            return Err(Error::Parameter(format!(
                "points_per_trajectory must be at least 2, got {}",
                self.points_per_trajectory
            )));
        }
        if !(self.control_box >= 0.0 && self.control_box.is_finite()) {
            return Err(Error::Parameter("control_box must be finite and non-negative".into()));
        }
        Ok(())
    }

    pub fn horizon(&self) -> usize {
        self.points_per_trajectory - 1
    }

    /// Flattened trajectory dimension `2 * points_per_trajectory`.
    pub fn trajectory_dim(&self) -> usize {
        2 * self.points_per_trajectory
    }

    pub fn start_center(&self, class: ClassLabel) -> [f64; 2] {
        START_CENTERS[class.id()]
    }

    pub fn end_center(&self, class: ClassLabel) -> [f64; 2] {
        END_CENTERS[class.id()]
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LabeledTrajectory {
    pub trajectory: Trajectory,
    pub class: ClassLabel,
}

/// Uniform draw from the closed disk of `radius` around `center`.
pub fn sample_endpoint<R: Rng + ?Sized>(center: [f64; 2], radius: f64, rng: &mut R) -> Result<[f64; 2]> {
    if !(radius > 0.0 && radius.is_finite()) {
        return Err(Error::Parameter(format!("radius must be positive, got {radius}")));
    }
    let r = radius * rng.random::<f64>().sqrt();
    let theta = std::f64::consts::TAU * rng.random::<f64>();
    Ok([center[0] + r * theta.cos(), center[1] + r * theta.sin()])
}

/// Cubic Bezier curve through `ctrl[0]` and `ctrl[3]`, sampled at `n` uniform parameters.
pub fn cubic_bezier(ctrl: &[[f64; 2]; 4], n: usize) -> Vec<f64> {
    let mut out = Vec::with_capacity(2 * n);
    for k in 0..n {
        let s = if n == 1 { 0.0 } else { k as f64 / (n - 1) as f64 };
        let r = 1.0 - s;
        let w = [r * r * r, 3.0 * r * r * s, 3.0 * r * s * s, s * s * s];
        for dim in 0..2 {
            out.push(w.iter().zip(ctrl).map(|(wi, p)| wi * p[dim]).sum());
        }
    }
    out
}

fn draw_control_points<R: Rng + ?Sized>(
    class: ClassLabel,
    spec: &DatasetSpec,
    rng: &mut R,
) -> Result<[[f64; 2]; 4]> {
    let p0 = sample_endpoint(spec.start_center(class), spec.goal_radius, rng)?;
    let p3 = sample_endpoint(spec.end_center(class), spec.goal_radius, rng)?;
    let b = spec.control_box;
    let p1 = [rng.random_range(-b..=b), rng.random_range(-b..=b)];
    let p2 = [rng.random_range(-b..=b), rng.random_range(-b..=b)];
    Ok([p0, p1, p2, p3])
}

pub fn generate_trajectory<R: Rng + ?Sized>(
    class: ClassLabel,
    spec: &DatasetSpec,
    rng: &mut R,
) -> Result<Trajectory> {
    spec.validate()?;
    let ctrl = draw_control_points(class, spec, rng)?;
    let mut data = cubic_bezier(&ctrl, spec.points_per_trajectory);
    // pin the endpoints to the sampled values
    let n = data.len();
    data[..2].copy_from_slice(&ctrl[0]);
    data[n - 2..].copy_from_slice(&ctrl[3]);
    Trajectory::new(data, 2)
}

/// The control points behind sample `index` of `class` in [`generate_dataset`].
pub fn control_points(class: ClassLabel, index: usize, spec: &DatasetSpec) -> Result<[[f64; 2]; 4]> {
    let mut rng = stream_rng(spec.seed, class_stream(class.id(), index));
    draw_control_points(class, spec, &mut rng)
}

/// All samples ordered by (class, index); sample `k` of class `c` uses
/// stream [`class_stream`]`(c, k)` of `spec.seed`.
pub fn generate_dataset(spec: &DatasetSpec) -> Result<Vec<LabeledTrajectory>> {
    spec.validate()?;
    let mut out = Vec::with_capacity(NUM_CLASSES * spec.samples_per_class);
    for c in 0..NUM_CLASSES {
        let class = ClassLabel::new(c, NUM_CLASSES)?;
        for k in 0..spec.samples_per_class {
            let mut rng = stream_rng(spec.seed, class_stream(c, k));
            out.push(LabeledTrajectory {
                trajectory: generate_trajectory(class, spec, &mut rng)?,
                class,
            });
        }
    }
    Ok(out)
}

/// Writes `class,x0,y0,x1,y1,...` rows, one per trajectory, with shortest
/// round-trip decimal formatting.
pub fn write_dataset(path: impl AsRef<Path>, data: &[LabeledTrajectory]) -> Result<()> {
    let path = path.as_ref();
    let file = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    write_rows(&mut w, data.iter().map(|s| (s.class.id(), &s.trajectory))).map_err(|e| Error::io(path, e))?;
    w.flush().map_err(|e| Error::io(path, e))
}

pub(crate) fn write_rows<'a, W: Write>(
    w: &mut W,
    rows: impl Iterator<Item = (usize, &'a Trajectory)>,
) -> std::io::Result<()> {
    for (class, traj) in rows {
        write!(w, "{class}")?;
        for x in traj.as_slice() {
            write!(w, ",{x}")?;
        }
        writeln!(w)?;
    }
    Ok(())
}

/// Reads a file written by [`write_dataset`]. Every row must carry the same
/// number of waypoints; blank lines are skipped.
pub fn read_dataset(path: impl AsRef<Path>) -> Result<Vec<LabeledTrajectory>> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_dataset(&text, path)
}

fn parse_dataset(text: &str, path: &Path) -> Result<Vec<LabeledTrajectory>> {
    let perr = |line: usize, message: String| Error::Parse {
        path: path.to_path_buf(),
        line,
        message,
    };
    let mut out = Vec::new();
    let mut expected_len: Option<usize> = None;
    for (lineno, line) in text.lines().enumerate() {
        let lineno = lineno + 1;
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let mut fields = line.split(',');
        let class_field = fields.next().unwrap_or_default().trim();
        let class_id: usize = class_field
            .parse()
            .map_err(|_| perr(lineno, format!("bad class id {class_field:?}")))?;
        let class = ClassLabel::new(class_id, NUM_CLASSES).map_err(|e| perr(lineno, e.to_string()))?;
        let coords = fields
            .enumerate()
            .map(|(k, f)| {
                f.trim()
                    .parse::<f64>()
                    .ok()
                    .filter(|x| x.is_finite())
                    .ok_or_else(|| perr(lineno, format!("bad coordinate {f:?} in column {}", k + 2)))
            })
            .collect::<Result<Vec<f64>>>()?;
        if coords.is_empty() || coords.len() % 2 != 0 {
            return Err(perr(
                lineno,
                format!("expected an even, positive number of coordinates, found {}", coords.len()),
            ));
        }
        match expected_len {
            None => expected_len = Some(coords.len()),
            Some(n) if n != coords.len() => {
                return Err(perr(
                    lineno,
                    format!("row has {} coordinates, previous rows have {n}", coords.len()),
                ))
            }
            _ => {}
        }
        out.push(LabeledTrajectory {
            trajectory: Trajectory::new(coords, 2).map_err(|e| perr(lineno, e.to_string()))?,
            class,
        });
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small_spec(n: usize) -> DatasetSpec {
        DatasetSpec {
            samples_per_class: n,
            seed: 11,
            ..DatasetSpec::default()
        }
    }

    #[test]
    fn endpoint_in_disk() {
        let mut rng = stream_rng(3, 0);
        for _ in 0..1000 {
            let p = sample_endpoint([-1.0, -1.0], 0.2, &mut rng).unwrap();
            assert!(((p[0] + 1.0).powi(2) + (p[1] + 1.0).powi(2)).sqrt() <= 0.2);
        }
        assert!(sample_endpoint([0.0, 0.0], 0.0, &mut rng).is_err());
        assert!(sample_endpoint([0.0, 0.0], -1.0, &mut rng).is_err());
        let p = sample_endpoint([0.5, -0.25], 1e-300, &mut rng).unwrap();
        assert_eq!(p, [0.5, -0.25]);
    }

    #[test]
    fn endpoint_mean_and_spread() {
        // Monte-Carlo oracle: the uniform disk has mean = center and
        // E|p - c|^2 = r^2 / 2.
        let mut rng = stream_rng(9, 1);
        let n = 100_000;
        let (mut mx, mut my, mut m2) = (0.0, 0.0, 0.0);
        for _ in 0..n {
            let p = sample_endpoint([1.0, -1.0], 0.2, &mut rng).unwrap();
            mx += p[0];
            my += p[1];
            m2 += (p[0] - 1.0).powi(2) + (p[1] + 1.0).powi(2);
        }
        let n = n as f64;
        assert!((mx / n - 1.0).abs() < 0.01);
        assert!((my / n + 1.0).abs() < 0.01);
        assert!((m2 / n - 0.02).abs() < 0.001);
    }

    #[test]
    fn dataset_counts_and_determinism() {
        let spec = small_spec(7);
        let a = generate_dataset(&spec).unwrap();
        assert_eq!(a.len(), 14);
        assert!(a[..7].iter().all(|s| s.class.id() == 0));
        assert!(a[7..].iter().all(|s| s.class.id() == 1));
        assert_eq!(a, generate_dataset(&spec).unwrap());
        assert!(generate_dataset(&small_spec(0)).unwrap().is_empty());
    }

    #[test]
    fn full_size_dataset_has_twenty_thousand_rows() {
        let spec = DatasetSpec {
            points_per_trajectory: 2,
            ..DatasetSpec::default()
        };
        assert_eq!(generate_dataset(&spec).unwrap().len(), 20_000);
    }

    #[test]
    fn trajectories_hit_their_goal_disks() {
        let spec = small_spec(200);
        for s in generate_dataset(&spec).unwrap() {
            let t = &s.trajectory;
            assert_eq!(t.num_waypoints(), 100);
            let start = t.select_waypoint(0).unwrap();
            let end = t.select_waypoint(t.horizon()).unwrap();
            let sc = spec.start_center(s.class);
            let ec = spec.end_center(s.class);
            assert!(((start[0] - sc[0]).powi(2) + (start[1] - sc[1]).powi(2)).sqrt() <= 0.2);
            assert!(((end[0] - ec[0]).powi(2) + (end[1] - ec[1]).powi(2)).sqrt() <= 0.2);
        }
    }

    #[test]
    fn control_points_reproduce_curve() {
        let spec = small_spec(3);
        let data = generate_dataset(&spec).unwrap();
        let class = ClassLabel::new(1, 2).unwrap();
        let ctrl = control_points(class, 2, &spec).unwrap();
        let curve = cubic_bezier(&ctrl, spec.points_per_trajectory);
        for (x, y) in curve.iter().zip(data[5].trajectory.as_slice()) {
            assert!((x - y).abs() < 1e-14);
        }
    }

    #[test]
    fn invalid_spec() {
        let mut spec = small_spec(1);
        spec.goal_radius = 0.0;
        assert!(generate_dataset(&spec).is_err());
        let mut spec = small_spec(1);
        spec.points_per_trajectory = 1;
        assert!(spec.validate().is_err());
    }

    #[test]
    fn parse_errors_name_the_line() {
        let p = Path::new("mem.csv");
        let err = parse_dataset("0,1,2,3,4\n1,1,2,3\n", p).unwrap_err();
        assert!(matches!(err, Error::Parse { line: 2, .. }), "{err}");
        let err = parse_dataset("0,1,2\n0,1,x\n", p).unwrap_err();
        assert!(matches!(err, Error::Parse { line: 2, .. }));
        let err = parse_dataset("5,1,2\n", p).unwrap_err();
        assert!(matches!(err, Error::Parse { line: 1, .. }));
        let err = parse_dataset("0,1,2,3\n", p).unwrap_err();
        assert!(matches!(err, Error::Parse { line: 1, .. }));
        assert!(parse_dataset("", p).unwrap().is_empty());
    }
}
