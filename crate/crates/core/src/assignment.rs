//! Maximum-weight one-to-one assignment (Hungarian algorithm).

use alloc::vec;
use alloc::vec::Vec;

use crate::Matrix;

/// Assigns each row of `score` to a distinct column maximizing the summed
/// score. Requires `rows <= cols`. Returns the column chosen for every row.
pub fn max_weight_assignment(score: &Matrix) -> Vec<usize> {
    let (n, m) = score.shape();
    assert!(n <= m, "assignment needs rows <= cols");
    if n == 0 {
        return Vec::new();
    }
    // Shortest augmenting path formulation on costs = -score (1-based arrays).
    let cost = |i: usize, j: usize| -score[(i - 1, j - 1)];
    let inf = f64::INFINITY;
    let mut u = vec![0.0; n + 1];
    let mut v = vec![0.0; m + 1];
    let mut p = vec![0usize; m + 1];
    let mut way = vec![0usize; m + 1];
    for i in 1..=n {
        p[0] = i;
        let mut j0 = 0;
        let mut minv = vec![inf; m + 1];
        let mut used = vec![false; m + 1];
        loop {
            used[j0] = true;
            let i0 = p[j0];
            let mut delta = inf;
            let mut j1 = 0;
            for j in 1..=m {
                if !used[j] {
                    let cur = cost(i0, j) - u[i0] - v[j];
                    if cur < minv[j] {
                        minv[j] = cur;
                        way[j] = j0;
                    }
                    if minv[j] < delta {
                        delta = minv[j];
                        j1 = j;
                    }
                }
            }
            for j in 0..=m {
                if used[j] {
                    u[p[j]] += delta;
                    v[j] -= delta;
                } else {
                    minv[j] -= delta;
                }
            }
            j0 = j1;
            if p[j0] == 0 {
                break;
            }
        }
        loop {
            let j1 = way[j0];
            p[j0] = p[j1];
            j0 = j1;
            if j0 == 0 {
                break;
            }
        }
    }
    let mut out = vec![0; n];
    for j in 1..=m {
        if p[j] != 0 {
            out[p[j] - 1] = j - 1;
        }
    }
    out
}
