//! The JSON experiment configuration.
//!
//! One file describes the dataset, network, training, sampling, evaluation
//! and constraint set. Unknown keys are rejected. A single master `seed`
//! drives everything: the dataset uses `seed`, training `seed + 1`, and
//! sampling `seed + 2`.

use std::collections::BTreeSet;
use std::path::Path;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::barrier::PhiSchedule;
use crate::constraint::{Constraint, DiskBarrier, DiskKind, WaypointMask};
use crate::dataset::{DatasetSpec, END_CENTERS, NUM_CLASSES, START_CENTERS};
use crate::error::{Error, Result};
use crate::flow::RunConfig;
use crate::model::{ModelConfig, TrainConfig};
use crate::trajectory::ClassLabel;

pub const CONFIG_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ConstraintType {
    DiskKeepout,
    DiskContainment,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum NamedMask {
    All,
    First,
    Last,
}

/// `"all"`, `"first"`, `"last"`, or a list of waypoint indices.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum MaskSpec {
    Named(NamedMask),
    Indices(Vec<usize>),
}

impl Default for MaskSpec {
    fn default() -> Self {
        MaskSpec::Named(NamedMask::All)
    }
}

impl MaskSpec {
    pub fn to_mask(&self) -> WaypointMask {
        match self {
            MaskSpec::Named(NamedMask::All) => WaypointMask::All,
            MaskSpec::Named(NamedMask::First) => WaypointMask::First,
            MaskSpec::Named(NamedMask::Last) => WaypointMask::Last,
            MaskSpec::Indices(ix) => WaypointMask::Indices(ix.iter().copied().collect::<BTreeSet<_>>()),
        }
    }
}

fn default_phi0() -> f64 {
    5.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConstraintSpec {
    #[serde(rename = "type")]
    pub kind: ConstraintType,
    pub center: [f64; 2],
    pub radius: f64,
    #[serde(default)]
    pub mask: MaskSpec,
    #[serde(default = "default_phi0")]
    pub phi0: f64,
    /// Numerator of the blow-up branch `phi1(t) = blowup_scale / (1 - t)`;
    /// defaults to `phi0`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub blowup_scale: Option<f64>,
    /// Classes the constraint applies to; all classes when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub classes: Option<Vec<usize>>,
}

impl ConstraintSpec {
    pub fn applies_to_class(&self, class: ClassLabel) -> bool {
        self.classes.as_ref().is_none_or(|c| c.contains(&class.id()))
    }

    pub fn disk(&self) -> Result<DiskBarrier> {
        let kind = match self.kind {
            ConstraintType::DiskKeepout => DiskKind::Keepout,
            ConstraintType::DiskContainment => DiskKind::Containment,
        };
        DiskBarrier::new(self.center.to_vec(), self.radius, kind)
    }

    pub fn build(&self) -> Result<Constraint> {
        let schedule = PhiSchedule::with_blowup(self.phi0, self.blowup_scale.unwrap_or(self.phi0))?;
        Ok(Constraint::new(Arc::new(self.disk()?), self.mask.to_mask(), schedule))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvalConfig {
    pub samples_per_class: usize,
    /// Single-trajectory runs timed per (method, class).
    pub timing_samples: usize,
}

impl Default for EvalConfig {
    fn default() -> Self {
        Self {
            samples_per_class: 1000,
            timing_samples: 20,
        }
    }
}

/// Sampling options exposed in the config file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SamplingConfig {
    pub ode_steps: usize,
    pub solver: crate::flow::Solver,
}

impl Default for SamplingConfig {
    fn default() -> Self {
        let run = RunConfig::default();
        Self {
            ode_steps: run.ode_steps,
            solver: run.solver,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Config {
    pub version: u32,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub dataset: DatasetSection,
    #[serde(default)]
    pub model: ModelConfig,
    #[serde(default)]
    pub train: TrainSection,
    #[serde(default)]
    pub sampling: SamplingConfig,
    #[serde(default)]
    pub eval: EvalConfig,
    #[serde(default = "default_constraints")]
    pub constraints: Vec<ConstraintSpec>,
}

/// Dataset options in the config (the seed comes from the master seed).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DatasetSection {
    pub samples_per_class: usize,
    pub points_per_trajectory: usize,
    pub goal_radius: f64,
    pub control_box: f64,
}

impl Default for DatasetSection {
    fn default() -> Self {
        let d = DatasetSpec::default();
        Self {
            samples_per_class: d.samples_per_class,
            points_per_trajectory: d.points_per_trajectory,
            goal_radius: d.goal_radius,
            control_box: d.control_box,
        }
    }
}

/// Training options in the config (the seed comes from the master seed).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainSection {
    pub steps: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    pub cosine_decay: bool,
    pub min_lr_ratio: f64,
}

impl Default for TrainSection {
    fn default() -> Self {
        let t = TrainConfig::default();
        Self {
            steps: t.steps,
            batch_size: t.batch_size,
            learning_rate: t.learning_rate,
            beta1: t.beta1,
            beta2: t.beta2,
            epsilon: t.epsilon,
            cosine_decay: t.cosine_decay,
            min_lr_ratio: t.min_lr_ratio,
        }
    }
}

/// Obstacle of radius 0.25 at the origin on every waypoint, plus each
/// class's start and end disks on the first and last waypoint.
pub fn default_constraints() -> Vec<ConstraintSpec> {
    let radius = DatasetSpec::default().goal_radius;
    let mut out = vec![ConstraintSpec {
        kind: ConstraintType::DiskKeepout,
        center: [0.0, 0.0],
        radius: 0.25,
        mask: MaskSpec::default(),
        phi0: default_phi0(),
        blowup_scale: None,
        classes: None,
    }];
    for c in 0..NUM_CLASSES {
        for (center, mask) in [(START_CENTERS[c], NamedMask::First), (END_CENTERS[c], NamedMask::Last)] {
            out.push(ConstraintSpec {
                kind: ConstraintType::DiskContainment,
                center,
                radius,
                mask: MaskSpec::Named(mask),
                phi0: default_phi0(),
                blowup_scale: None,
                classes: Some(vec![c]),
            });
        }
    }
    out
}

impl Default for Config {
    fn default() -> Self {
        Self {
            version: CONFIG_VERSION,
            seed: 0,
            dataset: DatasetSection::default(),
            model: ModelConfig::default(),
            train: TrainSection::default(),
            sampling: SamplingConfig::default(),
            eval: EvalConfig::default(),
            constraints: default_constraints(),
        }
    }
}

impl Config {
    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: Config = serde_json::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text).map_err(|e| match e {
            Error::Config(m) => Error::Config(format!("{}: {m}", path.display())),
            other => other,
        })
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }

    pub fn validate(&self) -> Result<()> {
        if self.version != CONFIG_VERSION {
            return Err(Error::Config(format!(
                "unsupported config version {} (expected {CONFIG_VERSION})",
                self.version
            )));
        }
        let wrap = |e: Error| Error::Config(e.to_string());
        self.dataset_spec().validate().map_err(wrap)?;
        self.model.validate().map_err(wrap)?;
        self.train_config().validate().map_err(wrap)?;
        self.run_config().validate().map_err(wrap)?;
        if self.eval.samples_per_class == 0 {
            return Err(Error::Config("eval.samples_per_class must be positive".into()));
        }
        for (k, c) in self.constraints.iter().enumerate() {
            c.build().map_err(|e| Error::Config(format!("constraints[{k}]: {e}")))?;
            if let Some(classes) = &c.classes {
                if let Some(bad) = classes.iter().find(|id| **id >= NUM_CLASSES) {
                    return Err(Error::Config(format!("constraints[{k}]: unknown class {bad}")));
                }
            }
            if let MaskSpec::Indices(ix) = &c.mask {
                let horizon = self.dataset.points_per_trajectory.saturating_sub(1);
                if let Some(bad) = ix.iter().find(|i| **i > horizon) {
                    return Err(Error::Config(format!(
                        "constraints[{k}]: mask index {bad} exceeds horizon {horizon}"
                    )));
                }
            }
        }
        Ok(())
    }

    pub fn dataset_spec(&self) -> DatasetSpec {
        DatasetSpec {
            samples_per_class: self.dataset.samples_per_class,
            points_per_trajectory: self.dataset.points_per_trajectory,
            goal_radius: self.dataset.goal_radius,
            control_box: self.dataset.control_box,
            seed: self.seed,
        }
    }

    pub fn train_config(&self) -> TrainConfig {
        let t = &self.train;
        TrainConfig {
            steps: t.steps,
            batch_size: t.batch_size,
            learning_rate: t.learning_rate,
            beta1: t.beta1,
            beta2: t.beta2,
            epsilon: t.epsilon,
            cosine_decay: t.cosine_decay,
            min_lr_ratio: t.min_lr_ratio,
            seed: self.seed.wrapping_add(1),
        }
    }

    pub fn run_config(&self) -> RunConfig {
        RunConfig {
            ode_steps: self.sampling.ode_steps,
            solver: self.sampling.solver,
            horizon: self.dataset.points_per_trajectory.saturating_sub(1),
            state_dim: 2,
            seed: self.seed.wrapping_add(2),
        }
    }

    /// Constraints active when sampling `class`.
    pub fn constraints_for(&self, class: ClassLabel) -> Result<Vec<Constraint>> {
        self.constraints
            .iter()
            .filter(|c| c.applies_to_class(class))
            .map(ConstraintSpec::build)
            .collect()
    }

    /// Keep-out disks applied to every waypoint of `class`; these define the
    /// obstacle-violation metric.
    pub fn obstacles_for(&self, class: ClassLabel) -> Result<Vec<DiskBarrier>> {
        self.constraints
            .iter()
            .filter(|c| {
                c.kind == ConstraintType::DiskKeepout
                    && c.applies_to_class(class)
                    && c.mask == MaskSpec::Named(NamedMask::All)
            })
            .map(ConstraintSpec::disk)
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_round_trips() {
        let cfg = Config::default();
        let back = Config::from_json(&cfg.to_json()).unwrap();
        assert_eq!(back, cfg);
    }

    #[test]
    fn minimal_config_uses_defaults() {
        let cfg = Config::from_json(r#"{"version": 1, "seed": 4}"#).unwrap();
        assert_eq!(cfg.constraints.len(), 5);
        assert_eq!(cfg.dataset_spec().seed, 4);
        assert_eq!(cfg.train_config().seed, 5);
        assert_eq!(cfg.run_config().seed, 6);
        assert_eq!(cfg.run_config().horizon, 99);
    }

    #[test]
    fn rejects_unknown_keys() {
        let err = Config::from_json(r#"{"version": 1, "sead": 4}"#).unwrap_err();
        assert!(err.to_string().contains("sead"), "{err}");
        let err = Config::from_json(r#"{"version": 1, "train": {"step": 4}}"#).unwrap_err();
        assert!(err.to_string().contains("step"), "{err}");
        let err = Config::from_json(
            r#"{"version": 1, "constraints": [{"type": "disk_keepout", "center": [0,0], "radius": 1, "colour": 2}]}"#,
        )
        .unwrap_err();
        assert!(err.to_string().contains("colour"), "{err}");
    }

    #[test]
    fn rejects_bad_values() {
        assert!(Config::from_json(r#"{"version": 2}"#).is_err());
        assert!(Config::from_json(r#"{"seed": 2}"#).is_err());
        assert!(Config::from_json(r#"{"version": 1, "sampling": {"ode_steps": 1}}"#).is_err());
        assert!(Config::from_json(
            r#"{"version": 1, "constraints": [{"type": "disk_keepout", "center": [0,0], "radius": -1}]}"#
        )
        .is_err());
        assert!(Config::from_json(
            r#"{"version": 1, "constraints": [{"type": "disk_keepout", "center": [0,0], "radius": 1, "mask": [100]}]}"#
        )
        .is_err());
    }

    #[test]
    fn class_filtering() {
        let cfg = Config::default();
        let c0 = ClassLabel::new(0, 2).unwrap();
        let cs = cfg.constraints_for(c0).unwrap();
        assert_eq!(cs.len(), 3);
        assert!(cs[1].applies_to(0, 99) && !cs[1].applies_to(1, 99));
        assert!(cs[2].applies_to(99, 99) && !cs[2].applies_to(98, 99));
        assert_eq!(cs[1].h(&[-1.0, -1.0]), 0.2f64 * 0.2);
        assert_eq!(cfg.obstacles_for(c0).unwrap().len(), 1);
    }

    #[test]
    fn mask_forms() {
        let cfg = Config::from_json(
            r#"{"version": 1, "constraints": [
                {"type": "disk_containment", "center": [1,1], "radius": 0.2, "mask": "last"},
                {"type": "disk_keepout", "center": [0,0], "radius": 0.25, "mask": [0, 5]}
            ]}"#,
        )
        .unwrap();
        assert_eq!(cfg.constraints[0].mask.to_mask(), WaypointMask::Last);
        assert_eq!(
            cfg.constraints[1].mask.to_mask(),
            WaypointMask::Indices([0, 5].into_iter().collect())
        );
    }
}
