//! Independent reference implementations used as test oracles. Everything
//! here is written as plain loops over `f64` without touching the library's
//! kernels, tape, or sampling code.

#![allow(dead_code)]

use rand::Rng;
use rand_distr::{Distribution, Normal};
use velo_attn_core::{ParamStore, RadarScan};

pub fn random_scan(rng: &mut impl Rng, n: usize, extent: f64) -> RadarScan {
    let normal = Normal::new(0.0, 2.0).unwrap();
    let positions = (0..n)
        .map(|_| [rng.random_range(-extent..extent), rng.random_range(-extent..extent)])
        .collect();
    let velocities = (0..n).map(|_| normal.sample(rng)).collect();
    let rcs = (0..n).map(|_| rng.random_range(-10.0..20.0)).collect();
    let labels = (0..n).map(|_| u8::from(rng.random_bool(0.3))).collect();
    RadarScan::new(format!("rand_{n}"), positions, velocities, rcs, Some(labels)).unwrap()
}

pub fn key_of(scan: &RadarScan, i: usize) -> [f64; 4] {
    [scan.positions[i][0], scan.positions[i][1], scan.velocities[i], scan.rcs[i]]
}

fn d2(a: [f64; 2], b: [f64; 2]) -> f64 {
    (a[0] - b[0]) * (a[0] - b[0]) + (a[1] - b[1]) * (a[1] - b[1])
}

fn key_less(a: &[f64; 4], b: &[f64; 4]) -> std::cmp::Ordering {
    for (x, y) in a.iter().zip(b) {
        match x.partial_cmp(y).unwrap() {
            std::cmp::Ordering::Equal => continue,
            o => return o,
        }
    }
    std::cmp::Ordering::Equal
}

/// Full sort of every reference point per query.
pub fn brute_knn(queries: &[[f64; 2]], refs: &[[f64; 2]], keys: &[[f64; 4]], k: usize) -> Vec<Vec<usize>> {
    queries
        .iter()
        .map(|&q| {
            let mut all: Vec<usize> = (0..refs.len()).collect();
            all.sort_by(|&a, &b| {
                d2(q, refs[a])
                    .partial_cmp(&d2(q, refs[b]))
                    .unwrap()
                    .then(key_less(&keys[a], &keys[b]))
                    .then(a.cmp(&b))
            });
            all.truncate(k.min(refs.len()));
            all
        })
        .collect()
}

/// Max-min selection recomputing every distance from scratch each round.
pub fn brute_fps(positions: &[[f64; 2]], keys: &[[f64; 4]], m: usize) -> Vec<usize> {
    let n = positions.len();
    let mut by_key: Vec<usize> = (0..n).collect();
    by_key.sort_by(|&a, &b| key_less(&keys[a], &keys[b]).then(a.cmp(&b)));
    let mut c = [0.0, 0.0];
    for &i in &by_key {
        c[0] += positions[i][0];
        c[1] += positions[i][1];
    }
    c = [c[0] / n as f64, c[1] / n as f64];

    let pick = |score: &dyn Fn(usize) -> f64, exclude: &[usize]| -> usize {
        let mut cands: Vec<usize> = (0..n).filter(|i| !exclude.contains(i)).collect();
        cands.sort_by(|&a, &b| {
            score(b)
                .partial_cmp(&score(a))
                .unwrap()
                .then(key_less(&keys[a], &keys[b]))
                .then(a.cmp(&b))
        });
        cands[0]
    };

    let mut sel = vec![pick(&|i| d2(positions[i], c), &[])];
    while sel.len() < m {
        let chosen = sel.clone();
        let score = |i: usize| {
            chosen
                .iter()
                .map(|&s| d2(positions[i], positions[s]))
                .fold(f64::INFINITY, f64::min)
        };
        sel.push(pick(&score, &chosen));
    }
    sel
}

pub fn gelu(x: f64) -> f64 {
    0.5 * x * (1.0 + libm::erf(x / std::f64::consts::SQRT_2))
}

/// `x·W + b` with `W` stored `din × dout` row-major.
pub fn affine(params: &ParamStore<f64>, prefix: &str, x: &[f64], bias: bool) -> Vec<f64> {
    let w = params.get(&format!("{prefix}.w")).unwrap();
    let (din, dout) = w.value.shape();
    assert_eq!(x.len(), din, "{prefix}");
    let mut y = vec![0.0; dout];
    for (o, yo) in y.iter_mut().enumerate() {
        for (i, xi) in x.iter().enumerate() {
            *yo += xi * w.value.get(i, o);
        }
    }
    if bias {
        let b = params.get(&format!("{prefix}.b")).unwrap();
        for (o, yo) in y.iter_mut().enumerate() {
            *yo += b.value.get(0, o);
        }
    }
    y
}

pub fn mlp(params: &ParamStore<f64>, prefix: &str, x: &[f64]) -> Vec<f64> {
    let h: Vec<f64> = affine(params, &format!("{prefix}.fc1"), x, true)
        .into_iter()
        .map(gelu)
        .collect();
    affine(params, &format!("{prefix}.fc2"), &h, true)
}

/// Per-channel softmax over a list of neighbor vectors.
fn channel_softmax(logits: &[Vec<f64>]) -> Vec<Vec<f64>> {
    let d = logits[0].len();
    let mut out = vec![vec![0.0; d]; logits.len()];
    for c in 0..d {
        let m = logits.iter().map(|l| l[c]).fold(f64::NEG_INFINITY, f64::max);
        let z: f64 = logits.iter().map(|l| (l[c] - m).exp()).sum();
        for (i, l) in logits.iter().enumerate() {
            out[i][c] = (l[c] - m).exp() / z;
        }
    }
    out
}

/// Velocity attention for every query over the given neighbor lists.
pub fn vtl_reference(
    params: &ParamStore<f64>,
    prefix: &str,
    x: &[Vec<f64>],
    pos: &[[f64; 2]],
    vel: &[f64],
    nbrs: &[Vec<usize>],
) -> Vec<Vec<f64>> {
    let q: Vec<_> = x.iter().map(|r| affine(params, &format!("{prefix}.w_q"), r, false)).collect();
    let k: Vec<_> = x.iter().map(|r| affine(params, &format!("{prefix}.w_k"), r, false)).collect();
    let v: Vec<_> = x.iter().map(|r| affine(params, &format!("{prefix}.w_v"), r, false)).collect();
    nbrs.iter()
        .enumerate()
        .map(|(j, nb)| {
            let mut logits = Vec::new();
            let mut values = Vec::new();
            for &i in nb {
                let dp = mlp(
                    params,
                    &format!("{prefix}.pos_enc"),
                    &[pos[i][0] - pos[j][0], pos[i][1] - pos[j][1]],
                );
                let dv = mlp(params, &format!("{prefix}.vel_enc"), &[vel[i] - vel[j]]);
                logits.push((0..q[j].len()).map(|c| q[j][c] - k[i][c] + dp[c] + dv[c]).collect());
                values.push((0..q[j].len()).map(|c| v[i][c] + dp[c] + dv[c]).collect::<Vec<f64>>());
            }
            let a = channel_softmax(&logits);
            (0..q[j].len())
                .map(|c| (0..nb.len()).map(|n| a[n][c] * values[n][c]).sum())
                .collect()
        })
        .collect()
}

/// Transformer upsampling of `coarse` features onto the `skip` points.
#[allow(clippy::too_many_arguments)]
pub fn upsample_reference(
    params: &ParamStore<f64>,
    prefix: &str,
    x_coarse: &[Vec<f64>],
    pos_c: &[[f64; 2]],
    vel_c: &[f64],
    x_skip: &[Vec<f64>],
    pos_s: &[[f64; 2]],
    vel_s: &[f64],
    nbrs: &[Vec<usize>],
) -> Vec<Vec<f64>> {
    nbrs.iter()
        .enumerate()
        .map(|(j, nb)| {
            let q = affine(params, &format!("{prefix}.w_q"), &x_skip[j], false);
            let mut qk = Vec::new();
            let mut vals = Vec::new();
            let mut dps = Vec::new();
            let mut dvs = Vec::new();
            for &i in nb {
                let k = affine(params, &format!("{prefix}.w_k"), &x_coarse[i], false);
                qk.push(q.iter().zip(&k).map(|(a, b)| a - b).collect::<Vec<f64>>());
                vals.push(affine(params, &format!("{prefix}.w_v"), &x_coarse[i], false));
                dps.push(mlp(
                    params,
                    &format!("{prefix}.pos_enc"),
                    &[pos_c[i][0] - pos_s[j][0], pos_c[i][1] - pos_s[j][1]],
                ));
                dvs.push(mlp(params, &format!("{prefix}.vel_enc"), &[vel_c[i] - vel_s[j]]));
            }
            let (a_qk, a_p, a_v) = (channel_softmax(&qk), channel_softmax(&dps), channel_softmax(&dvs));
            let mut y = Vec::new();
            for c in 0..q.len() {
                y.push((0..nb.len()).map(|n| a_qk[n][c] * vals[n][c]).sum::<f64>());
            }
            for c in 0..dps[0].len() {
                y.push((0..nb.len()).map(|n| a_p[n][c] * dps[n][c]).sum::<f64>());
            }
            for c in 0..dvs[0].len() {
                y.push((0..nb.len()).map(|n| a_v[n][c] * dvs[n][c]).sum::<f64>());
            }
            let z = affine(params, &format!("{prefix}.w_y"), &y, false);
            x_skip[j].iter().zip(z).map(|(a, b)| a + b).collect()
        })
        .collect()
}

fn softmax2(l: [f64; 2]) -> [f64; 2] {
    let e0 = l[0].exp();
    let e1 = l[1].exp();
    [e0 / (e0 + e1), e1 / (e0 + e1)]
}

/// Jaccard loss of a set of mispredicted points `err_set` for class `c`.
fn jaccard_loss(labels: &[u8], c: u8, err_set: &[bool]) -> f64 {
    let union = labels
        .iter()
        .zip(err_set)
        .filter(|(&l, &e)| l == c || e)
        .count();
    let errs = err_set.iter().filter(|&&e| e).count();
    if union == 0 {
        0.0
    } else {
        errs as f64 / union as f64
    }
}

/// Lovász extension as the integral `∫ Δ({i : m_i ≥ t}) dt` over the error
/// levels, averaged over classes present.
pub fn lovasz_oracle(logits: &[[f64; 2]], labels: &[u8]) -> f64 {
    let probs: Vec<[f64; 2]> = logits.iter().map(|&l| softmax2(l)).collect();
    let mut total = 0.0;
    let mut classes = 0;
    for c in 0..2u8 {
        if !labels.contains(&c) {
            continue;
        }
        classes += 1;
        let m: Vec<f64> = labels
            .iter()
            .zip(&probs)
            .map(|(&l, p)| if l == c { 1.0 - p[c as usize] } else { p[c as usize] })
            .collect();
        let mut levels = m.clone();
        levels.sort_by(|a, b| b.partial_cmp(a).unwrap());
        levels.dedup();
        levels.push(0.0);
        for w in levels.windows(2) {
            let set: Vec<bool> = m.iter().map(|&x| x >= w[0]).collect();
            total += (w[0] - w[1]) * jaccard_loss(labels, c, &set);
        }
    }
    total / classes as f64
}

/// Weighted cross-entropy written out term by term.
pub fn wce_oracle(logits: &[[f64; 2]], labels: &[u8], w: [f64; 2]) -> f64 {
    let mut num = 0.0;
    let mut den = 0.0;
    for (l, &y) in logits.iter().zip(labels) {
        let p = softmax2(*l);
        num += -w[y as usize] * p[y as usize].ln();
        den += w[y as usize];
    }
    num / den
}

fn pooled_iou(scans: &[RadarScan], t: f64) -> f64 {
    let (mut tp, mut fp, mut fn_) = (0u64, 0u64, 0u64);
    for s in scans {
        for (v, &l) in s.velocities.iter().zip(s.labels.as_ref().unwrap()) {
            match (v.abs() > t, l == 1) {
                (true, true) => tp += 1,
                (true, false) => fp += 1,
                (false, true) => fn_ += 1,
                _ => {}
            }
        }
    }
    if tp + fp + fn_ == 0 {
        1.0
    } else {
        tp as f64 / (tp + fp + fn_) as f64
    }
}

/// Evaluates every threshold that can change the labeling (zero and the
/// midpoints between consecutive distinct speeds) and returns the best one.
pub fn breakpoint_oracle(scans: &[RadarScan]) -> (f64, f64) {
    let mut speeds: Vec<f64> = scans.iter().flat_map(|s| s.velocities.iter().map(|v| v.abs())).collect();
    speeds.sort_by(|a, b| a.partial_cmp(b).unwrap());
    speeds.dedup();
    let mut cands = vec![0.0];
    cands.extend(speeds.windows(2).map(|w| 0.5 * (w[0] + w[1])));
    cands.push(speeds.last().copied().unwrap_or(0.0) + 1.0);
    let mut best = (f64::NAN, f64::NEG_INFINITY);
    for t in cands {
        let iou = pooled_iou(scans, t);
        if iou > best.1 {
            best = (t, iou);
        }
    }
    best
}

pub fn iou_at(scans: &[RadarScan], t: f64) -> f64 {
    pooled_iou(scans, t)
}
