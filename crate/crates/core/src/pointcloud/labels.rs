//! Mapping from semantic dataset classes to the binary moving/static label.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::pointcloud::scan::{MOVING, STATIC};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ClassEntry {
    pub id: i64,
    pub name: String,
    /// Whether an object of this class with a valid track counts as moving.
    pub dynamic: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LabelMapping {
    pub classes: Vec<ClassEntry>,
}

impl Default for LabelMapping {
    /// RadarScenes semantic label ids. Every object class is dynamic; a
    /// detection only becomes "moving" when it also carries a valid track,
    /// so parked vehicles end up static.
    fn default() -> Self {
        let names = [
            "car",
            "large_vehicle",
            "truck",
            "bus",
            "train",
            "bicycle",
            "motorized_two_wheeler",
            "pedestrian",
            "pedestrian_group",
            "animal",
            "other",
            "static",
        ];
        Self {
            classes: names
                .iter()
                .enumerate()
                .map(|(i, &name)| ClassEntry {
                    id: i as i64,
                    name: name.to_string(),
                    dynamic: name != "static",
                })
                .collect(),
        }
    }
}

impl LabelMapping {
    pub fn from_json_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Ok(serde_json::from_str(&text)?)
    }

    pub fn class(&self, id: i64) -> Option<&ClassEntry> {
        self.classes.iter().find(|c| c.id == id)
    }

    pub fn id_of(&self, name: &str) -> Option<i64> {
        self.classes.iter().find(|c| c.name == name).map(|c| c.id)
    }

    /// `1` iff the class is dynamic and the detection has a valid track.
    pub fn map_label(&self, semantic_label: i64, track_valid: bool) -> Result<u8> {
        let class = self
            .class(semantic_label)
            .ok_or_else(|| Error::Mapping(format!("unknown semantic label id {semantic_label}")))?;
        Ok(if class.dynamic && track_valid { MOVING } else { STATIC })
    }
}

pub fn map_labels(mapping: &LabelMapping, semantic_label: i64, track_valid: bool) -> Result<u8> {
    mapping.map_label(semantic_label, track_valid)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn basic_cases() {
        let m = LabelMapping::default();
        let car = m.id_of("car").unwrap();
        let stat = m.id_of("static").unwrap();
        assert_eq!(m.map_label(stat, false).unwrap(), 0);
        assert_eq!(m.map_label(car, true).unwrap(), 1);
        assert_eq!(m.map_label(car, false).unwrap(), 0);
        assert!(matches!(m.map_label(99, true), Err(Error::Mapping(_))));
    }

    #[test]
    fn parked_versus_moving_fixture() {
        // ten detections: two moving cars, one parked car, a pedestrian,
        // a cyclist without a track, and static background
        let m = LabelMapping::default();
        let id = |n: &str| m.id_of(n).unwrap();
        let fixture = [
            (id("car"), true, 1),
            (id("car"), true, 1),
            (id("car"), false, 0),
            (id("car"), false, 0),
            (id("pedestrian"), true, 1),
            (id("bicycle"), false, 0),
            (id("static"), false, 0),
            (id("static"), true, 0),
            (id("truck"), true, 1),
            (id("static"), false, 0),
        ];
        let got: Vec<u8> = fixture
            .iter()
            .map(|&(c, t, _)| m.map_label(c, t).unwrap())
            .collect();
        let want: Vec<u8> = fixture.iter().map(|&(_, _, w)| w).collect();
        assert_eq!(got, want);
    }

    #[test]
    fn json_round_trip() {
        let m = LabelMapping::default();
        let text = serde_json::to_string_pretty(&m).unwrap();
        let back: LabelMapping = serde_json::from_str(&text).unwrap();
        assert_eq!(m, back);
    }
}
