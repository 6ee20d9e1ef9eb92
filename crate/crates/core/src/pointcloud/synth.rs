//! Synthetic radar scenes with moving/static ground truth.
//!
//! A scene consists of three populations:
//!
//! * static background detections with small Doppler noise (label 0),
//! * moving objects: compact blobs whose detections share the object's
//!   radial speed plus noise (label 1),
//! * clutter: isolated detections with heavy-tailed (Student-t) false
//!   velocities (label 0), the regime in which a plain `|v| > t` rule fails.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, StudentT};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::pointcloud::scan::{MOVING, STATIC};
use crate::pointcloud::RadarScan;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SynthConfig {
    /// Static detections per scan (background plus clutter), inclusive.
    pub n_static_range: [usize; 2],
    pub n_clusters_range: [usize; 2],
    pub points_per_cluster_range: [usize; 2],
    /// Object speed over ground, m/s.
    pub cluster_speed_range: [f64; 2],
    /// Largest angle between an object's heading and its line of sight, degrees.
    pub max_aspect_deg: f64,
    /// Standard deviation of detections around an object center, m.
    pub cluster_radius: f64,
    pub noise_sigma_pos: f64,
    pub noise_sigma_vel: f64,
    /// Share of the static detections that are clutter.
    pub clutter_fraction: f64,
    pub clutter_vel_scale: f64,
    pub clutter_vel_dof: f64,
    /// Half-width of the square scene around the vehicle, m.
    pub field_extent: f64,
    pub rcs_static: [f64; 2],
    pub rcs_moving: [f64; 2],
    pub rng_seed: u64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            n_static_range: [120, 220],
            n_clusters_range: [1, 4],
            points_per_cluster_range: [5, 14],
            cluster_speed_range: [2.0, 12.0],
            max_aspect_deg: 75.0,
            cluster_radius: 0.8,
            noise_sigma_pos: 0.05,
            noise_sigma_vel: 0.15,
            clutter_fraction: 0.2,
            clutter_vel_scale: 1.5,
            clutter_vel_dof: 2.0,
            field_extent: 40.0,
            rcs_static: [0.0, 6.0],
            rcs_moving: [3.0, 6.0],
            rng_seed: 0,
        }
    }
}

impl SynthConfig {
    /// Noise-free separable variant: no clutter, no velocity noise and every
    /// object's radial speed at least `min_speed·cos(max_aspect)`.
    pub fn noiseless() -> Self {
        Self {
            clutter_fraction: 0.0,
            noise_sigma_vel: 0.0,
            cluster_speed_range: [3.0, 10.0],
            max_aspect_deg: 60.0,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let int_range = |name: &str, r: [usize; 2]| {
            if r[0] > r[1] {
                Err(Error::Config(format!("{name} is empty: {r:?}")))
            } else {
                Ok(())
            }
        };
        int_range("n_static_range", self.n_static_range)?;
        int_range("n_clusters_range", self.n_clusters_range)?;
        int_range("points_per_cluster_range", self.points_per_cluster_range)?;
        if self.n_static_range[0] == 0
            && (self.n_clusters_range[0] == 0 || self.points_per_cluster_range[0] == 0)
        {
            return Err(Error::Config("configuration can produce empty scans".into()));
        }
        let r = self.cluster_speed_range;
        if !(r[0].is_finite() && r[1].is_finite() && 0.0 <= r[0] && r[0] <= r[1]) {
            return Err(Error::Config(format!("cluster_speed_range invalid: {r:?}")));
        }
        for (name, v) in [
            ("noise_sigma_pos", self.noise_sigma_pos),
            ("noise_sigma_vel", self.noise_sigma_vel),
            ("cluster_radius", self.cluster_radius),
            ("clutter_vel_scale", self.clutter_vel_scale),
            ("rcs_static sigma", self.rcs_static[1]),
            ("rcs_moving sigma", self.rcs_moving[1]),
        ] {
            if !(v.is_finite() && v >= 0.0) {
                return Err(Error::Config(format!("{name} must be finite and >= 0, got {v}")));
            }
        }
        if !(0.0..=1.0).contains(&self.clutter_fraction) {
            return Err(Error::Config(format!(
                "clutter_fraction {} not in [0,1]",
                self.clutter_fraction
            )));
        }
        if !(self.clutter_vel_dof > 0.0) {
            return Err(Error::Config("clutter_vel_dof must be > 0".into()));
        }
        if !(self.field_extent > 0.0) || !(0.0..=90.0).contains(&self.max_aspect_deg) {
            return Err(Error::Config("field_extent must be > 0, max_aspect_deg in [0,90]".into()));
        }
        Ok(())
    }

    /// Ratio of expected moving detections to expected total detections.
    pub fn expected_moving_fraction(&self) -> f64 {
        let mean = |r: [usize; 2]| (r[0] + r[1]) as f64 / 2.0;
        let moving = mean(self.n_clusters_range) * mean(self.points_per_cluster_range);
        moving / (moving + mean(self.n_static_range))
    }
}

/// Ground truth for one generated moving object.
#[derive(Clone, Debug, PartialEq)]
pub struct ClusterInfo {
    pub center: [f64; 2],
    pub speed: f64,
    /// Angle between heading and line of sight, radians.
    pub aspect: f64,
    /// Signed radial speed shared by the object's detections (before noise).
    pub radial_speed: f64,
    pub first_point: usize,
    pub n_points: usize,
}

fn normal(mean: f64, sigma: f64) -> Normal<f64> {
    Normal::new(mean, sigma).expect("validated sigma")
}

fn uniform_position(rng: &mut impl Rng, extent: f64) -> [f64; 2] {
    [rng.random_range(-extent..=extent), rng.random_range(-extent..=extent)]
}

/// Generates one scene together with the moving-object ground truth.
pub fn synth_scene_with_clusters(
    config: &SynthConfig,
    rng: &mut impl Rng,
    scan_id: impl Into<String>,
) -> Result<(RadarScan, Vec<ClusterInfo>)> {
    config.validate()?;
    let n_static = rng.random_range(config.n_static_range[0]..=config.n_static_range[1]);
    let n_clusters = rng.random_range(config.n_clusters_range[0]..=config.n_clusters_range[1]);
    let n_clutter = (config.clutter_fraction * n_static as f64).round() as usize;

    let pos_noise = normal(0.0, config.noise_sigma_pos);
    let vel_noise = normal(0.0, config.noise_sigma_vel);
    let blob = normal(0.0, config.cluster_radius);
    let rcs_static = normal(config.rcs_static[0], config.rcs_static[1]);
    let rcs_moving = normal(config.rcs_moving[0], config.rcs_moving[1]);
    let clutter_t = StudentT::new(config.clutter_vel_dof).expect("validated dof");

    let mut positions = Vec::new();
    let mut velocities = Vec::new();
    let mut rcs = Vec::new();
    let mut labels = Vec::new();
    let mut clusters = Vec::with_capacity(n_clusters);

    for i in 0..n_static {
        let p = uniform_position(rng, config.field_extent);
        let v = if i < n_clutter {
            config.clutter_vel_scale * clutter_t.sample(rng)
        } else {
            vel_noise.sample(rng)
        };
        positions.push([p[0] + pos_noise.sample(rng), p[1] + pos_noise.sample(rng)]);
        velocities.push(v);
        rcs.push(rcs_static.sample(rng));
        labels.push(STATIC);
    }

    let max_aspect = config.max_aspect_deg.to_radians();
    for _ in 0..n_clusters {
        let n_pts = rng.random_range(
            config.points_per_cluster_range[0]..=config.points_per_cluster_range[1],
        );
        let center = uniform_position(rng, config.field_extent);
        let speed = rng.random_range(config.cluster_speed_range[0]..=config.cluster_speed_range[1]);
        let aspect = rng.random_range(-max_aspect..=max_aspect);
        let toward = rng.random_bool(0.5);
        let radial_speed = if toward { -1.0 } else { 1.0 } * speed * aspect.cos();
        clusters.push(ClusterInfo {
            center,
            speed,
            aspect,
            radial_speed,
            first_point: positions.len(),
            n_points: n_pts,
        });
        for _ in 0..n_pts {
            positions.push([
                center[0] + blob.sample(rng) + pos_noise.sample(rng),
                center[1] + blob.sample(rng) + pos_noise.sample(rng),
            ]);
            velocities.push(radial_speed + vel_noise.sample(rng));
            rcs.push(rcs_moving.sample(rng));
            labels.push(MOVING);
        }
    }

    let scan = RadarScan::new(scan_id, positions, velocities, rcs, Some(labels))?;
    Ok((scan, clusters))
}

pub fn synth_scene(config: &SynthConfig, rng: &mut impl Rng, scan_id: impl Into<String>) -> Result<RadarScan> {
    synth_scene_with_clusters(config, rng, scan_id).map(|(s, _)| s)
}

/// Scene `index` of the stream defined by `config.rng_seed`.
pub fn synth_scene_indexed(config: &SynthConfig, index: u64) -> Result<RadarScan> {
    let mut rng = ChaCha8Rng::seed_from_u64(config.rng_seed);
    rng.set_stream(index);
    synth_scene(config, &mut rng, format!("scan_{index:06}"))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn noiseless_single_cluster_has_exact_radial_speeds() {
        let cfg = SynthConfig {
            clutter_fraction: 0.0,
            noise_sigma_vel: 0.0,
            n_clusters_range: [1, 1],
            cluster_speed_range: [5.0, 5.0],
            max_aspect_deg: 90.0,
            ..SynthConfig::default()
        };
        for seed in 0..20 {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let (scan, clusters) = synth_scene_with_clusters(&cfg, &mut rng, "t").unwrap();
            assert_eq!(clusters.len(), 1);
            let expected = 5.0 * clusters[0].aspect.cos().abs();
            let labels = scan.labels.as_ref().unwrap();
            for (i, &l) in labels.iter().enumerate() {
                if l == MOVING {
                    assert_eq!(scan.velocities[i].abs(), expected);
                } else {
                    assert_eq!(scan.velocities[i], 0.0);
                }
            }
        }
    }

    #[test]
    fn same_seed_same_scene() {
        let cfg = SynthConfig::default();
        let a = synth_scene_indexed(&cfg, 17).unwrap();
        let b = synth_scene_indexed(&cfg, 17).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, synth_scene_indexed(&cfg, 18).unwrap());
    }

    #[test]
    fn moving_fraction_matches_configuration() {
        let cfg = SynthConfig::default();
        let (mut moving, mut total) = (0usize, 0usize);
        for i in 0..1000 {
            let s = synth_scene_indexed(&cfg, i).unwrap();
            moving += s.moving_count();
            total += s.len();
        }
        let observed = moving as f64 / total as f64;
        let expected = cfg.expected_moving_fraction();
        assert!(
            (observed - expected).abs() <= 0.1 * expected,
            "observed {observed}, expected {expected}"
        );
    }

    #[test]
    fn clutter_count_follows_fraction() {
        let cfg = SynthConfig {
            n_static_range: [100, 100],
            clutter_fraction: 0.25,
            noise_sigma_vel: 0.0,
            ..SynthConfig::default()
        };
        let s = synth_scene_indexed(&cfg, 0).unwrap();
        let labels = s.labels.unwrap();
        let nonzero_static = (0..s.velocities.len())
            .filter(|&i| labels[i] == STATIC && s.velocities[i] != 0.0)
            .count();
        assert_eq!(nonzero_static, 25);
    }

    #[test]
    fn invalid_configs_rejected() {
        let bad = SynthConfig {
            clutter_fraction: 1.5,
            ..SynthConfig::default()
        };
        assert!(bad.validate().is_err());
        let bad = SynthConfig {
            n_static_range: [5, 2],
            ..SynthConfig::default()
        };
        assert!(bad.validate().is_err());
        let bad = SynthConfig {
            noise_sigma_pos: -1.0,
            ..SynthConfig::default()
        };
        assert!(bad.validate().is_err());
    }
}
