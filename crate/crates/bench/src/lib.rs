//! Fixtures shared by the benchmarks.

use velo_attn_core::pointcloud::{synth_scene_indexed, SynthConfig};
use velo_attn_core::RadarScan;

/// A synthetic scan with roughly `points` detections.
pub fn scan_of_size(points: usize, index: u64) -> RadarScan {
    let hi = points.saturating_sub(5).max(1);
    let cfg = SynthConfig {
        n_static_range: [hi.saturating_sub(40).max(1), hi],
        ..SynthConfig::default()
    };
    synth_scene_indexed(&cfg, index).expect("valid synthetic config")
}

pub fn positions(scan: &RadarScan) -> Vec<[f64; 2]> {
    scan.positions.clone()
}
