//! Deterministic neighborhood machinery: farthest point sampling, exact kNN
//! and gather/scatter over neighborhoods.
//!
//! Every ordering decision is made on `(squared distance, attribute key,
//! index)`, where the attribute key is the point's `(x, y, v, σ)` tuple
//! compared lexicographically. The index only matters for exact duplicates,
//! so on tie-free inputs the results are equivariant to any permutation of
//! the point order.

use std::cmp::Ordering;

use crate::error::{Error, Result};
use crate::numerics::{gather_rows, scatter_add_rows, Tensor};
use crate::real::Real;

/// Attribute tuple used to break distance ties.
pub type TieKey<T> = [T; 4];

/// Neighbor lists for `M` queries, `k` entries each, nearest first.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct NeighborhoodIndex {
    indices: Vec<usize>,
    k: usize,
}

impl NeighborhoodIndex {
    pub fn new(indices: Vec<usize>, k: usize) -> Result<Self> {
        if k == 0 || indices.len() % k != 0 {
            return Err(Error::Argument(format!(
                "{} indices do not form rows of {k}",
                indices.len()
            )));
        }
        Ok(Self { indices, k })
    }

    /// Row `j` is `[j]`.
    pub fn identity(n: usize) -> Self {
        Self {
            indices: (0..n).collect(),
            k: 1,
        }
    }

    pub fn k_effective(&self) -> usize {
        self.k
    }

    pub fn num_queries(&self) -> usize {
        self.indices.len() / self.k
    }

    pub fn row(&self, j: usize) -> &[usize] {
        &self.indices[j * self.k..(j + 1) * self.k]
    }

    /// Row-major flattening, `M·k` entries.
    pub fn flat(&self) -> &[usize] {
        &self.indices
    }

    /// `[0,0,…,0,1,1,…]`: each query index repeated `k` times.
    pub fn query_repeat(&self) -> Vec<usize> {
        (0..self.num_queries())
            .flat_map(|j| std::iter::repeat_n(j, self.k))
            .collect()
    }

    pub fn rows(&self) -> impl Iterator<Item = &[usize]> {
        self.indices.chunks(self.k)
    }
}

fn dist2<T: Real>(a: [T; 2], b: [T; 2]) -> T {
    let dx = a[0] - b[0];
    let dy = a[1] - b[1];
    dx * dx + dy * dy
}

pub(crate) fn cmp_keys<T: Real>(a: &TieKey<T>, b: &TieKey<T>) -> Ordering {
    a.iter()
        .zip(b)
        .map(|(x, y)| x.total_order(y))
        .find(|o| o.is_ne())
        .unwrap_or(Ordering::Equal)
}

fn position_keys<T: Real>(positions: &[[T; 2]]) -> Vec<TieKey<T>> {
    positions
        .iter()
        .map(|p| [p[0], p[1], T::zero(), T::zero()])
        .collect()
}

/// Farthest point sampling on positions alone; ties broken by `(x, y)`.
pub fn fps<T: Real>(positions: &[[T; 2]], m: usize) -> Result<Vec<usize>> {
    fps_keyed(positions, &position_keys(positions), m)
}

/// Greedy max-min selection of `m` points, in selection order. The first
/// pick is the point farthest from the centroid.
pub fn fps_keyed<T: Real>(positions: &[[T; 2]], keys: &[TieKey<T>], m: usize) -> Result<Vec<usize>> {
    let n = positions.len();
    if m == 0 || m > n {
        return Err(Error::Argument(format!("fps: m = {m} outside [1, {n}]")));
    }
    if keys.len() != n {
        return Err(Error::Argument(format!("fps: {} keys for {n} points", keys.len())));
    }

    // Sum in key order so the centroid does not depend on input order.
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| cmp_keys(&keys[a], &keys[b]).then(a.cmp(&b)));
    let (mut cx, mut cy) = (T::zero(), T::zero());
    for &i in &order {
        cx += positions[i][0];
        cy += positions[i][1];
    }
    let nn = T::of(n as f64);
    let centroid = [cx / nn, cy / nn];

    // Larger distance wins; equal distances go to the smaller key, then index.
    let better = |i: usize, di: T, j: usize, dj: T| -> bool {
        match di.total_order(&dj) {
            Ordering::Greater => true,
            Ordering::Less => false,
            Ordering::Equal => cmp_keys(&keys[i], &keys[j]).then(i.cmp(&j)) == Ordering::Less,
        }
    };

    let mut seed = 0;
    let mut seed_d = dist2(positions[0], centroid);
    for i in 1..n {
        let d = dist2(positions[i], centroid);
        if better(i, d, seed, seed_d) {
            seed = i;
            seed_d = d;
        }
    }

    let mut selected = Vec::with_capacity(m);
    let mut taken = vec![false; n];
    let mut min_d = vec![T::infinity(); n];
    let mut current = seed;
    loop {
        selected.push(current);
        taken[current] = true;
        if selected.len() == m {
            break;
        }
        let mut best: Option<(usize, T)> = None;
        for i in 0..n {
            if taken[i] {
                continue;
            }
            let d = dist2(positions[i], positions[current]);
            if d < min_d[i] {
                min_d[i] = d;
            }
            match best {
                Some((b, bd)) if !better(i, min_d[i], b, bd) => {}
                _ => best = Some((i, min_d[i])),
            }
        }
        current = best.expect("m <= n leaves a candidate").0;
    }
    Ok(selected)
}

/// Exact kNN on positions alone; ties broken by `(x, y)`.
pub fn knn<T: Real>(queries: &[[T; 2]], refs: &[[T; 2]], k: usize) -> Result<NeighborhoodIndex> {
    knn_keyed(queries, refs, &position_keys(refs), k)
}

/// Exact brute-force kNN with `k_effective = min(k, N)`. Each row is sorted
/// by `(distance, key, index)`.
pub fn knn_keyed<T: Real>(
    queries: &[[T; 2]],
    refs: &[[T; 2]],
    ref_keys: &[TieKey<T>],
    k: usize,
) -> Result<NeighborhoodIndex> {
    let n = refs.len();
    if n == 0 || k == 0 {
        return Err(Error::Argument(format!("knn: need N >= 1 and k >= 1 (N = {n}, k = {k})")));
    }
    if ref_keys.len() != n {
        return Err(Error::Argument(format!("knn: {} keys for {n} points", ref_keys.len())));
    }
    let k_eff = k.min(n);
    let mut indices = Vec::with_capacity(queries.len() * k_eff);
    let mut cand: Vec<(T, usize)> = Vec::with_capacity(n);
    for q in queries {
        cand.clear();
        cand.extend(refs.iter().enumerate().map(|(i, &r)| (dist2(*q, r), i)));
        let cmp = |a: &(T, usize), b: &(T, usize)| {
            a.0.total_order(&b.0)
                .then_with(|| cmp_keys(&ref_keys[a.1], &ref_keys[b.1]))
                .then(a.1.cmp(&b.1))
        };
        if k_eff < n {
            cand.select_nth_unstable_by(k_eff - 1, cmp);
        }
        let head = &mut cand[..k_eff];
        head.sort_unstable_by(cmp);
        indices.extend(head.iter().map(|&(_, i)| i));
    }
    NeighborhoodIndex::new(indices, k_eff)
}

/// `out[j·k + i] = source[nbr.row(j)[i]]`.
pub fn group<T: Real>(source: &Tensor<T>, nbr: &NeighborhoodIndex) -> Result<Tensor<T>> {
    gather_rows(source, nbr.flat())
}

/// Adjoint of [`group`]: gradients are scattered additively onto the source rows.
pub fn group_backward<T: Real>(grad: &Tensor<T>, nbr: &NeighborhoodIndex, source_rows: usize) -> Result<Tensor<T>> {
    scatter_add_rows(grad, nbr.flat(), source_rows)
}
