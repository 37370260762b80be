//! Scenario documents: JSON with units in the field names.

use std::path::Path;

use serde::{Deserialize, Serialize};
use serde_json::Value;
use thiserror::Error;

use crate::boundary::{BoundaryConfig, RoadModel};
use crate::geometry::{CartesianPose, VehicleParams};
use crate::pjpath::PjConfig;
use crate::smoother::SmootherConfig;

#[derive(Debug, Error)]
pub enum ScenarioError {
    #[error("reading {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("parsing scenario: {0}")]
    Json(#[from] serde_json::Error),
    #[error("invalid scenario: {0}")]
    Invalid(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EgoSpec {
    pub x_m: f64,
    pub y_m: f64,
    pub theta_rad: f64,
    #[serde(default)]
    pub kappa_per_m: f64,
    #[serde(default)]
    pub speed_mps: f64,
}

impl EgoSpec {
    pub fn pose(&self) -> CartesianPose {
        CartesianPose::new(self.x_m, self.y_m, self.theta_rad, self.kappa_per_m)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ObstacleSpec {
    pub id: String,
    pub polygon_m: Vec<[f64; 2]>,
    #[serde(default)]
    pub speed_mps: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub path_length_m: f64,
    pub sample_ds_m: f64,
    /// Obstacles at or above this speed are left to speed planning.
    pub static_speed_threshold_mps: f64,
    /// Uniform noise added to interior map points, seeded by the run seed.
    pub raw_noise_m: f64,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            path_length_m: 150.0,
            sample_ds_m: 0.25,
            static_speed_threshold_mps: 0.5,
            raw_noise_m: 0.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    pub name: String,
    #[serde(default, skip_serializing_if = "String::is_empty")]
    pub description: String,
    pub raw_line_m: Vec<[f64; 2]>,
    pub road: RoadModel,
    pub ego: EgoSpec,
    #[serde(default)]
    pub vehicle: VehicleParams,
    #[serde(default)]
    pub obstacles: Vec<ObstacleSpec>,
    #[serde(default)]
    pub smoother: SmootherConfig,
    #[serde(default)]
    pub boundary: BoundaryConfig,
    #[serde(default)]
    pub path: PjConfig,
    #[serde(default)]
    pub run: RunConfig,
}

impl Scenario {
    pub fn from_json(text: &str) -> Result<Self, ScenarioError> {
        let sc: Scenario = serde_json::from_str(text)?;
        sc.validate()?;
        Ok(sc)
    }

    pub fn load(path: &Path) -> Result<Self, ScenarioError> {
        let text = std::fs::read_to_string(path).map_err(|source| ScenarioError::Io {
            path: path.display().to_string(),
            source,
        })?;
        Self::from_json(&text)
    }

    pub fn validate(&self) -> Result<(), ScenarioError> {
        let bad = |m: String| Err(ScenarioError::Invalid(m));
        if self.name.is_empty()
            || !self
                .name
                .chars()
                .all(|c| c.is_ascii_alphanumeric() || c == '_' || c == '-')
        {
            return bad(format!(
                "name {:?} must be a non-empty token of [A-Za-z0-9_-]",
                self.name
            ));
        }
        if self.raw_line_m.len() < 2 {
            return bad("raw_line_m needs at least 2 points".into());
        }
        let e = &self.ego;
        if ![e.x_m, e.y_m, e.theta_rad, e.kappa_per_m, e.speed_mps]
            .iter()
            .all(|v| v.is_finite())
        {
            return bad("ego fields must be finite".into());
        }
        let mut ids: Vec<&str> = self.obstacles.iter().map(|o| o.id.as_str()).collect();
        ids.sort_unstable();
        if let Some(w) = ids.windows(2).find(|w| w[0] == w[1]) {
            return bad(format!("duplicate obstacle id {}", w[0]));
        }
        for o in &self.obstacles {
            if o.polygon_m.len() < 3 {
                return bad(format!("obstacle {} needs at least 3 vertices", o.id));
            }
            if !o.speed_mps.is_finite() {
                return bad(format!("obstacle {} speed must be finite", o.id));
            }
        }
        let r = &self.run;
        if !(r.path_length_m > 0.0
            && r.sample_ds_m > 0.0
            && r.raw_noise_m >= 0.0
            && r.static_speed_threshold_mps >= 0.0)
        {
            return bad("run: path_length_m and sample_ds_m must be > 0, raw_noise_m and the speed threshold >= 0".into());
        }
        self.road
            .validate()
            .map_err(|e| ScenarioError::Invalid(e.to_string()))?;
        self.vehicle
            .validate()
            .map_err(|e| ScenarioError::Invalid(e.to_string()))?;
        self.smoother
            .validate()
            .map_err(|e| ScenarioError::Invalid(e.to_string()))?;
        self.boundary
            .validate()
            .map_err(|e| ScenarioError::Invalid(e.to_string()))?;
        self.path
            .validate()
            .map_err(|e| ScenarioError::Invalid(e.to_string()))?;
        Ok(())
    }

    /// Reflection across the map x-axis, which negates every lateral
    /// quantity of the plan. Map noise drawn with the default seed is baked
    /// into the reflected line, so both runs see mirror-image maps.
    pub fn mirrored(&self) -> Self {
        let flip = |p: &[f64; 2]| [p[0], -p[1]];
        let raw = super::noisy_raw_line(self, super::RunOptions::default().seed);
        Self {
            name: format!("{}_mirrored", self.name),
            raw_line_m: raw.iter().map(flip).collect(),
            run: RunConfig {
                raw_noise_m: 0.0,
                ..self.run
            },
            road: self.road.mirrored(),
            ego: EgoSpec {
                y_m: -self.ego.y_m,
                theta_rad: -self.ego.theta_rad,
                kappa_per_m: -self.ego.kappa_per_m,
                ..self.ego.clone()
            },
            obstacles: self
                .obstacles
                .iter()
                .map(|o| ObstacleSpec {
                    polygon_m: o.polygon_m.iter().rev().map(flip).collect(),
                    ..o.clone()
                })
                .collect(),
            ..self.clone()
        }
    }

    /// Sets configuration fields by their JSON names, e.g. `w_obs=5` or
    /// `lateral_buffer_m=0.2`. A key must name a field of exactly one of the
    /// smoother, boundary, path or run sections.
    pub fn apply_overrides(&mut self, overrides: &[(String, f64)]) -> Result<(), ScenarioError> {
        let mut sections = [
            ("smoother", serde_json::to_value(self.smoother)?),
            ("boundary", serde_json::to_value(self.boundary)?),
            ("path", serde_json::to_value(self.path)?),
            ("run", serde_json::to_value(self.run)?),
        ];
        for (key, value) in overrides {
            let (section, field) = match key.split_once('.') {
                Some((s, f)) => (Some(s), f),
                None => (None, key.as_str()),
            };
            let hits: Vec<usize> = sections
                .iter()
                .enumerate()
                .filter(|(_, (name, v))| {
                    section.map_or(true, |s| s == *name) && v.get(field).is_some()
                })
                .map(|(i, _)| i)
                .collect();
            match hits[..] {
                [i] => sections[i].1[field] = Value::from(*value),
                [] => {
                    return Err(ScenarioError::Invalid(format!(
                        "unknown override key {key}"
                    )))
                }
                _ => {
                    return Err(ScenarioError::Invalid(format!(
                        "override key {key} is ambiguous; prefix it with a section name"
                    )))
                }
            }
        }
        let [(_, sm), (_, bd), (_, pa), (_, ru)] = sections;
        self.smoother = serde_json::from_value(sm)?;
        self.boundary = serde_json::from_value(bd)?;
        self.path = serde_json::from_value(pa)?;
        self.run = serde_json::from_value(ru)?;
        self.validate()
    }

    /// Sets the station spacing of both the boundary and the path.
    pub fn set_ds(&mut self, ds: f64) -> Result<(), ScenarioError> {
        self.boundary.ds = ds;
        self.path.ds = ds;
        self.validate()
    }
}

/// Parses `k=v,k=v`.
pub fn parse_overrides(text: &str) -> Result<Vec<(String, f64)>, ScenarioError> {
    text.split(',')
        .map(str::trim)
        .filter(|t| !t.is_empty())
        .map(|t| {
            let (k, v) = t.split_once('=').ok_or_else(|| {
                ScenarioError::Invalid(format!("override {t:?} is not key=value"))
            })?;
            let v: f64 = v.trim().parse().map_err(|_| {
                ScenarioError::Invalid(format!("override {t:?} has a non-numeric value"))
            })?;
            Ok((k.trim().to_string(), v))
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = r#"{
        "name": "tiny",
        "raw_line_m": [[0, 0], [50, 0]],
        "road": {"lanes": [{"id": "ego", "direction": "forward", "left_l_m": 1.75, "right_l_m": -1.75}], "ego_lane_index": 0},
        "ego": {"x_m": 0, "y_m": 0, "theta_rad": 0}
    }"#;

    #[test]
    fn minimal_document_takes_defaults() {
        let sc = Scenario::from_json(MINIMAL).unwrap();
        assert_eq!(sc.path, PjConfig::default());
        assert_eq!(sc.vehicle, VehicleParams::default());
        assert_eq!(sc.run.path_length_m, 150.0);
        assert!(sc.obstacles.is_empty());
    }

    #[test]
    fn unknown_fields_and_bad_names_are_rejected() {
        let extra = MINIMAL.replace("\"name\": \"tiny\"", "\"name\": \"tiny\", \"colour\": 3");
        assert!(matches!(
            Scenario::from_json(&extra),
            Err(ScenarioError::Json(_))
        ));
        let spaced = MINIMAL.replace("\"tiny\"", "\"a b\"");
        assert!(matches!(
            Scenario::from_json(&spaced),
            Err(ScenarioError::Invalid(_))
        ));
    }

    #[test]
    fn overrides_reach_the_right_section() {
        let mut sc = Scenario::from_json(MINIMAL).unwrap();
        sc.apply_overrides(&parse_overrides("w_obs=5, lateral_buffer_m=0.2,w_smooth=10").unwrap())
            .unwrap();
        assert_eq!(sc.path.w_obs, 5.0);
        assert_eq!(sc.boundary.lateral_buffer, 0.2);
        assert_eq!(sc.smoother.w_smooth, 10.0);
        assert!(sc.apply_overrides(&[("nope".into(), 1.0)]).is_err());
        assert!(sc.apply_overrides(&[("ds_m".into(), 0.25)]).is_err());
        sc.apply_overrides(&[("path.ds_m".into(), 0.25), ("boundary.ds_m".into(), 0.25)])
            .unwrap();
        assert_eq!((sc.path.ds, sc.boundary.ds), (0.25, 0.25));
        assert!(parse_overrides("w_l").is_err());
    }

    #[test]
    fn mirroring_twice_is_identity_up_to_name() {
        let mut sc = Scenario::from_json(MINIMAL).unwrap();
        sc.obstacles.push(ObstacleSpec {
            id: "o".into(),
            polygon_m: vec![[10.0, 0.5], [12.0, 0.5], [12.0, 1.5]],
            speed_mps: 0.0,
        });
        let mut back = sc.mirrored().mirrored();
        back.name = sc.name.clone();
        assert_eq!(back, sc);
        assert_eq!(sc.mirrored().obstacles[0].polygon_m[0], [12.0, -1.5]);
    }
}
