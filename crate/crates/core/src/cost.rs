//! Human annotation time per action.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum ActionKind {
    DefineKeypoints,
    CorrectMask,
    DrawPolygon,
}

impl ActionKind {
    pub fn as_str(self) -> &'static str {
        match self {
            ActionKind::DefineKeypoints => "DefineKeypoints",
            ActionKind::CorrectMask => "CorrectMask",
            ActionKind::DrawPolygon => "DrawPolygon",
        }
    }
}

impl std::fmt::Display for ActionKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct AnnotationAction {
    pub kind: ActionKind,
    pub frame_id: u64,
    pub instance_id: u64,
}

/// Seconds of annotator time per instance for each action.
///
/// Defaults are the averages measured on player annotation: 4 s for the
/// extreme points, 45 s to correct an isolated instance mask, 70 s when its
/// box overlaps another one, 95 s for a full polygon.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CostModel {
    pub keypoints_s: f64,
    pub correct_isolated_s: f64,
    pub correct_overlapping_s: f64,
    pub polygon_s: f64,
    /// Box overlap at or below which an instance counts as isolated.
    pub isolation_threshold: f64,
}

impl Default for CostModel {
    fn default() -> Self {
        CostModel {
            keypoints_s: 4.0,
            correct_isolated_s: 45.0,
            correct_overlapping_s: 70.0,
            polygon_s: 95.0,
            isolation_threshold: 0.0,
        }
    }
}

#[derive(Deserialize)]
struct CostConfig {
    #[serde(default)]
    cost: CostModel,
}

impl CostModel {
    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("keypoints_s", self.keypoints_s),
            ("correct_isolated_s", self.correct_isolated_s),
            ("correct_overlapping_s", self.correct_overlapping_s),
            ("polygon_s", self.polygon_s),
        ];
        for (name, v) in positive {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::validation(
                    "cost",
                    name,
                    format!("{v} is not strictly positive"),
                ));
            }
        }
        if self.correct_overlapping_s < self.correct_isolated_s {
            return Err(Error::validation(
                "cost",
                "correct_overlapping_s",
                "must not be below correct_isolated_s",
            ));
        }
        if !(0.0..=1.0).contains(&self.isolation_threshold) {
            return Err(Error::validation(
                "cost",
                "isolation_threshold",
                "outside [0, 1]",
            ));
        }
        Ok(())
    }

    /// Reads the `[cost]` table of a TOML document, or the `"cost"` object of
    /// a JSON one. Missing keys keep their defaults.
    pub fn from_config_str(text: &str) -> Result<Self> {
        let config: CostConfig = if text.trim_start().starts_with('{') {
            serde_json::from_str(text)?
        } else {
            toml::from_str(text)?
        };
        config.cost.validate()?;
        Ok(config.cost)
    }

    pub fn correction_cost(&self, overlap: f64) -> f64 {
        if overlap <= self.isolation_threshold {
            self.correct_isolated_s
        } else {
            self.correct_overlapping_s
        }
    }
}

/// Seconds spent on `action` for an instance whose box overlap score is `overlap`.
pub fn action_cost(action: &AnnotationAction, overlap: f64, model: &CostModel) -> f64 {
    match action.kind {
        ActionKind::DefineKeypoints => model.keypoints_s,
        ActionKind::DrawPolygon => model.polygon_s,
        ActionKind::CorrectMask => model.correction_cost(overlap),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn act(kind: ActionKind) -> AnnotationAction {
        AnnotationAction {
            kind,
            frame_id: 0,
            instance_id: 0,
        }
    }

    #[test]
    fn default_costs() {
        let m = CostModel::default();
        assert_eq!(action_cost(&act(ActionKind::DefineKeypoints), 0.7, &m), 4.0);
        assert_eq!(action_cost(&act(ActionKind::CorrectMask), 0.0, &m), 45.0);
        assert_eq!(action_cost(&act(ActionKind::CorrectMask), 0.3, &m), 70.0);
        assert_eq!(action_cost(&act(ActionKind::DrawPolygon), 0.0, &m), 95.0);
        m.validate().unwrap();
    }

    #[test]
    fn isolation_threshold_is_configurable() {
        let m = CostModel {
            isolation_threshold: 0.1,
            ..CostModel::default()
        };
        assert_eq!(m.correction_cost(0.05), 45.0);
        assert_eq!(m.correction_cost(0.1), 45.0);
        assert_eq!(m.correction_cost(0.11), 70.0);
    }

    #[test]
    fn config_overrides() {
        let m = CostModel::from_config_str("[cost]\nkeypoints_s = 6\npolygon_s = 120.5\n").unwrap();
        assert_eq!(m.keypoints_s, 6.0);
        assert_eq!(m.polygon_s, 120.5);
        assert_eq!(m.correct_isolated_s, 45.0);

        let m = CostModel::from_config_str(r#"{"cost": {"correct_overlapping_s": 80}}"#).unwrap();
        assert_eq!(m.correct_overlapping_s, 80.0);

        assert_eq!(
            CostModel::from_config_str("").unwrap(),
            CostModel::default()
        );
    }

    #[test]
    fn invalid_configs() {
        assert!(CostModel::from_config_str("[cost]\nkeypoints_s = 0\n").is_err());
        assert!(CostModel::from_config_str("[cost]\ncorrect_overlapping_s = 30\n").is_err());
        assert!(CostModel::from_config_str("[cost]\nbogus = 1\n").is_err());
    }
}
