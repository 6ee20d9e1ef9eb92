//! Radar scan data model, file formats, sensor merging and synthetic data.

pub mod augment;
pub mod dataset;
pub mod labels;
mod merge;
mod scan;
pub mod synth;

pub use augment::{augment, AugConfig};
pub use dataset::{write_dataset, Dataset, Split};
pub use labels::{map_labels, LabelMapping};
pub use merge::{merge_sensor_scans, SensorPose};
pub use scan::{load_scan, save_scan, save_scan_with_predictions, RadarScan, MOVING, STATIC};
pub use synth::{synth_scene, synth_scene_indexed, SynthConfig};
