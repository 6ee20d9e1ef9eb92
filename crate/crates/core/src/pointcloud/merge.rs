use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::pointcloud::RadarScan;

/// Rigid transform from a sensor frame into the vehicle frame.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SensorPose {
    /// Yaw, radians.
    pub yaw: f64,
    /// Meters.
    pub translation: [f64; 2],
}

impl SensorPose {
    pub const IDENTITY: SensorPose = SensorPose {
        yaw: 0.0,
        translation: [0.0, 0.0],
    };

    pub fn apply(&self, p: [f64; 2]) -> [f64; 2] {
        let (s, c) = self.yaw.sin_cos();
        [
            c * p[0] - s * p[1] + self.translation[0],
            s * p[0] + c * p[1] + self.translation[1],
        ]
    }
}

/// Merges per-sensor scans into one vehicle-frame scan. Positions are
/// transformed; Doppler velocities and RCS are copied as-is because they are
/// already compensated scalars. Points keep input order. The result is
/// labeled only if every input is.
pub fn merge_sensor_scans(scans: &[(RadarScan, SensorPose)]) -> Result<RadarScan> {
    if scans.is_empty() {
        return Err(Error::Argument("merge_sensor_scans needs at least one scan".into()));
    }
    let all_labeled = scans.iter().all(|(s, _)| s.labels.is_some());
    let mut positions = Vec::new();
    let mut velocities = Vec::new();
    let mut rcs = Vec::new();
    let mut labels = Vec::new();
    for (scan, pose) in scans {
        if !pose.yaw.is_finite() || !pose.translation.iter().all(|t| t.is_finite()) {
            return Err(Error::Argument(format!("non-finite pose for {}", scan.scan_id)));
        }
        positions.extend(scan.positions.iter().map(|&p| pose.apply(p)));
        velocities.extend_from_slice(&scan.velocities);
        rcs.extend_from_slice(&scan.rcs);
        if let (true, Some(l)) = (all_labeled, &scan.labels) {
            labels.extend_from_slice(l);
        }
    }
    let id = if scans.len() == 1 {
        scans[0].0.scan_id.clone()
    } else {
        scans
            .iter()
            .map(|(s, _)| s.scan_id.as_str())
            .collect::<Vec<_>>()
            .join("+")
    };
    RadarScan::new(id, positions, velocities, rcs, all_labeled.then_some(labels))
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::FRAC_PI_2;

    fn scan(id: &str, n: usize, offset: f64) -> RadarScan {
        RadarScan::new(
            id,
            (0..n).map(|i| [i as f64 + offset, -(i as f64)]).collect(),
            (0..n).map(|i| 0.5 * i as f64 - offset).collect(),
            (0..n).map(|i| i as f64 * 2.0).collect(),
            Some((0..n).map(|i| (i % 2) as u8).collect()),
        )
        .unwrap()
    }

    #[test]
    fn identity_pose_single_scan_is_unchanged() {
        let s = scan("a", 5, 0.3);
        assert_eq!(merge_sensor_scans(&[(s.clone(), SensorPose::IDENTITY)]).unwrap(), s);
    }

    #[test]
    fn quarter_turn_rotates_x_onto_y() {
        let pose = SensorPose {
            yaw: FRAC_PI_2,
            translation: [0.0, 0.0],
        };
        let q = pose.apply([1.0, 0.0]);
        assert!(q[0].abs() < 1e-12 && (q[1] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn concatenates_in_input_order_and_keeps_scalars() {
        let a = scan("a", 3, 0.0);
        let b = scan("b", 4, 10.0);
        let pose = SensorPose {
            yaw: 0.7,
            translation: [3.0, -1.0],
        };
        let m = merge_sensor_scans(&[(a.clone(), SensorPose::IDENTITY), (b.clone(), pose)]).unwrap();
        assert_eq!(m.len(), 7);
        assert_eq!(&m.positions[..3], &a.positions[..]);
        assert_eq!(&m.velocities[3..], &b.velocities[..]);
        assert_eq!(&m.rcs[3..], &b.rcs[..]);
        assert_eq!(m.labels.as_ref().unwrap()[3..], b.labels.as_ref().unwrap()[..]);
    }

    #[test]
    fn empty_list_is_argument_error() {
        assert!(matches!(merge_sensor_scans(&[]), Err(Error::Argument(_))));
    }
}
