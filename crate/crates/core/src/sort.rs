//! Linear-time ordering of particles by height.

/// Returns `perm` with `z[perm[0]] <= z[perm[1]] <= ...`; equal heights keep
/// their input order.
///
/// Values are distributed into `n` equal-width buckets over their range and
/// each bucket is insertion-sorted, so uniformly spread input costs O(n).
pub fn sort_by_z(z: &[f64]) -> Vec<usize> {
    let n = z.len();
    if n < 2 {
        return (0..n).collect();
    }
    let (lo, hi) = z.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| (lo.min(v), hi.max(v)));
    let span = hi - lo;
    if !(span > 0.0) {
        return (0..n).collect();
    }
    let nb = n;
    let bucket = |v: f64| (((v - lo) / span * nb as f64) as usize).min(nb - 1);

    // counting pass then stable scatter
    let mut start = vec![0usize; nb + 1];
    for &v in z {
        start[bucket(v) + 1] += 1;
    }
    for b in 0..nb {
        start[b + 1] += start[b];
    }
    let mut fill = start.clone();
    let mut perm = vec![0usize; n];
    for (i, &v) in z.iter().enumerate() {
        let b = bucket(v);
        perm[fill[b]] = i;
        fill[b] += 1;
    }
    for b in 0..nb {
        let seg = &mut perm[start[b]..start[b + 1]];
        for i in 1..seg.len() {
            let cur = seg[i];
            let mut j = i;
            while j > 0 && z[seg[j - 1]] > z[cur] {
                seg[j] = seg[j - 1];
                j -= 1;
            }
            seg[j] = cur;
        }
    }
    perm
}

/// Inverse of a permutation: `inv[perm[i]] = i`.
pub fn invert(perm: &[usize]) -> Vec<usize> {
    let mut inv = vec![0; perm.len()];
    for (i, &p) in perm.iter().enumerate() {
        inv[p] = i;
    }
    inv
}
