mod common;

use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use velo_attn_core::sampling::{fps, fps_keyed, knn, knn_keyed};

/// Random instance; every third one is snapped to a coarse integer grid with
/// duplicated points and repeated velocities so distances tie often.
fn instance(seed: u64) -> (Vec<[f64; 2]>, Vec<[f64; 4]>, usize) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = rng.random_range(1..=64);
    let tied = seed % 3 == 0;
    let mut pos: Vec<[f64; 2]> = (0..n)
        .map(|_| {
            if tied {
                [rng.random_range(-3..=3) as f64, rng.random_range(-3..=3) as f64]
            } else {
                [rng.random_range(-10.0..10.0), rng.random_range(-10.0..10.0)]
            }
        })
        .collect();
    if tied && n > 3 {
        pos[n - 1] = pos[0];
    }
    let keys = pos
        .iter()
        .map(|p| {
            let v = if tied { rng.random_range(0..2) as f64 } else { rng.random_range(-5.0..5.0) };
            [p[0], p[1], v, if tied { 1.0 } else { rng.random_range(0.0..10.0) }]
        })
        .collect();
    let k = rng.random_range(1..=16);
    (pos, keys, k)
}

#[test]
fn knn_matches_full_sort_on_200_instances() {
    for seed in 0..200 {
        let (pos, keys, k) = instance(seed);
        let got = knn_keyed(&pos, &pos, &keys, k).unwrap();
        let want = common::brute_knn(&pos, &pos, &keys, k);
        assert_eq!(got.k_effective(), k.min(pos.len()));
        for (j, row) in want.iter().enumerate() {
            assert_eq!(got.row(j), row.as_slice(), "seed {seed} query {j}");
        }
    }
}

#[test]
fn fps_matches_naive_max_min_on_200_instances() {
    for seed in 0..200 {
        let (pos, keys, _) = instance(seed);
        let m = pos.len().div_ceil(2);
        assert_eq!(
            fps_keyed(&pos, &keys, m).unwrap(),
            common::brute_fps(&pos, &keys, m),
            "seed {seed}"
        );
    }
}

#[test]
fn engineered_ties() {
    // corners equidistant from the centroid: seed is the smallest key, then
    // the opposite corner, then the two remaining ones by key
    let sq = [[1.0, 1.0], [-1.0, 1.0], [-1.0, -1.0], [1.0, -1.0]];
    assert_eq!(fps(&sq, 4).unwrap(), vec![2, 0, 1, 3]);
    // exact duplicates resolve to the lower index
    let dup = [[0.0, 0.0], [2.0, 0.0], [2.0, 0.0]];
    assert_eq!(knn(&[[2.0, 0.0]], &dup, 3).unwrap().row(0), &[1, 2, 0]);
}

proptest! {
    #[test]
    fn knn_rows_are_sorted_and_distinct(
        pts in prop::collection::vec((-50.0f64..50.0, -50.0f64..50.0), 1..40),
        k in 1usize..20,
    ) {
        let pos: Vec<[f64; 2]> = pts.iter().map(|&(x, y)| [x, y]).collect();
        let nb = knn(&pos, &pos, k).unwrap();
        for (j, row) in nb.rows().enumerate() {
            let d: Vec<f64> = row.iter().map(|&i| {
                let (dx, dy) = (pos[i][0] - pos[j][0], pos[i][1] - pos[j][1]);
                dx * dx + dy * dy
            }).collect();
            prop_assert!(d.windows(2).all(|w| w[0] <= w[1]));
            let mut uniq = row.to_vec();
            uniq.sort_unstable();
            uniq.dedup();
            prop_assert_eq!(uniq.len(), row.len());
            // the query itself is at distance zero
            prop_assert_eq!(d[0], 0.0);
        }
    }

    #[test]
    fn fps_is_a_prefix_of_longer_runs(
        pts in prop::collection::vec((-50.0f64..50.0, -50.0f64..50.0), 1..40),
        frac in 0.0f64..1.0,
    ) {
        let pos: Vec<[f64; 2]> = pts.iter().map(|&(x, y)| [x, y]).collect();
        let m = 1 + ((pos.len() - 1) as f64 * frac) as usize;
        let full = fps(&pos, pos.len()).unwrap();
        prop_assert_eq!(fps(&pos, m).unwrap(), full[..m].to_vec());
    }
}
