use std::f64::consts::PI;

use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::pointcloud::scan::MOVING;
use crate::pointcloud::RadarScan;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AugConfig {
    pub p_jitter: f64,
    /// Per-coordinate jitter standard deviation, m.
    pub jitter_sigma: f64,
    pub p_scale: f64,
    pub scale_range: [f64; 2],
    pub p_rotate: f64,
    pub p_instance: f64,
    /// Moving detections closer than this belong to the same object, m.
    pub instance_link_radius: f64,
}

impl Default for AugConfig {
    fn default() -> Self {
        Self {
            p_jitter: 0.5,
            jitter_sigma: 0.1,
            p_scale: 0.5,
            scale_range: [0.95, 1.05],
            p_rotate: 0.5,
            p_instance: 0.5,
            instance_link_radius: 2.0,
        }
    }
}

impl AugConfig {
    pub fn none() -> Self {
        Self {
            p_jitter: 0.0,
            p_scale: 0.0,
            p_rotate: 0.0,
            p_instance: 0.0,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        for p in [self.p_jitter, self.p_scale, self.p_rotate, self.p_instance] {
            if !(0.0..=1.0).contains(&p) {
                return Err(Error::Config(format!("augmentation probability {p} not in [0,1]")));
            }
        }
        if !(self.jitter_sigma >= 0.0) || !(self.scale_range[0] > 0.0 && self.scale_range[0] <= self.scale_range[1]) {
            return Err(Error::Config("invalid jitter sigma or scale range".into()));
        }
        Ok(())
    }
}

fn rotate(p: [f64; 2], yaw: f64) -> [f64; 2] {
    let (s, c) = yaw.sin_cos();
    [c * p[0] - s * p[1], s * p[0] + c * p[1]]
}

/// Connected components of the moving detections under the link radius.
pub fn moving_instances(scan: &RadarScan, link_radius: f64) -> Vec<Vec<usize>> {
    let Some(labels) = &scan.labels else {
        return Vec::new();
    };
    let moving: Vec<usize> = (0..scan.len()).filter(|&i| labels[i] == MOVING).collect();
    let mut parent: Vec<usize> = (0..moving.len()).collect();
    fn find(parent: &mut [usize], mut i: usize) -> usize {
        while parent[i] != i {
            parent[i] = parent[parent[i]];
            i = parent[i];
        }
        i
    }
    let r2 = link_radius * link_radius;
    for a in 0..moving.len() {
        for b in a + 1..moving.len() {
            let (pa, pb) = (scan.positions[moving[a]], scan.positions[moving[b]]);
            let d2 = (pa[0] - pb[0]).powi(2) + (pa[1] - pb[1]).powi(2);
            if d2 <= r2 {
                let (ra, rb) = (find(&mut parent, a), find(&mut parent, b));
                if ra != rb {
                    parent[ra.max(rb)] = ra.min(rb);
                }
            }
        }
    }
    let mut groups: Vec<Vec<usize>> = Vec::new();
    let mut root_slot = vec![usize::MAX; moving.len()];
    for a in 0..moving.len() {
        let r = find(&mut parent, a);
        if root_slot[r] == usize::MAX {
            root_slot[r] = groups.len();
            groups.push(Vec::new());
        }
        groups[root_slot[r]].push(moving[a]);
    }
    groups
}

/// Training-time augmentation. Velocities and RCS are never modified:
/// Doppler is a radial scalar that is invariant to rotating or scaling the
/// scene about the sensor origin.
pub fn augment(scan: &RadarScan, rng: &mut impl Rng, cfg: &AugConfig) -> Result<RadarScan> {
    cfg.validate()?;
    let mut out = scan.clone();

    // Decide every coin first so the random stream layout does not depend
    // on which augmentations fire.
    let do_instance = rng.random_bool(cfg.p_instance);
    let instance_yaw = rng.random_range(-PI..PI);
    let instance_pick: u64 = rng.random();
    let do_rotate = rng.random_bool(cfg.p_rotate);
    let yaw = rng.random_range(-PI..PI);
    let do_scale = rng.random_bool(cfg.p_scale);
    let scale = rng.random_range(cfg.scale_range[0]..=cfg.scale_range[1]);
    let do_jitter = rng.random_bool(cfg.p_jitter);

    if do_instance && out.labels.is_some() {
        let groups = moving_instances(&out, cfg.instance_link_radius);
        if !groups.is_empty() {
            let group = &groups[(instance_pick % groups.len() as u64) as usize];
            for &i in group {
                out.positions.push(rotate(scan.positions[i], instance_yaw));
                out.velocities.push(scan.velocities[i]);
                out.rcs.push(scan.rcs[i]);
                out.labels.as_mut().expect("checked").push(MOVING);
            }
        }
    }
    if do_rotate {
        for p in &mut out.positions {
            *p = rotate(*p, yaw);
        }
    }
    if do_scale {
        for p in &mut out.positions {
            p[0] *= scale;
            p[1] *= scale;
        }
    }
    if do_jitter && cfg.jitter_sigma > 0.0 {
        let noise = Normal::new(0.0, cfg.jitter_sigma).expect("validated sigma");
        for p in &mut out.positions {
            p[0] += noise.sample(rng);
            p[1] += noise.sample(rng);
        }
    }
    out.validate()?;
    Ok(out)
}
