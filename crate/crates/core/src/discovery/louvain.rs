//! Greedy modularity maximization (local moving plus aggregation).

use alloc::vec;
use alloc::vec::Vec;

use crate::numerics::rng::{shuffle, stream_rng, Stream};
use crate::Matrix;

/// Partitions the nodes of a symmetric, non-negative weighted graph.
/// Self-loops in `w` are ignored. Returns one community label per node,
/// relabelled densely in order of first appearance.
pub fn louvain(w: &Matrix, resolution: f64, seed: u64) -> Vec<usize> {
    let n = w.rows();
    let mut graph = w.clone();
    for i in 0..n {
        graph[(i, i)] = 0.0;
    }
    // node -> community of the original graph
    let mut membership: Vec<usize> = (0..n).collect();
    let mut level = 0u32;
    loop {
        let (labels, moved) = local_moving(&graph, resolution, seed, level);
        if !moved {
            break;
        }
        let labels = relabel(&labels);
        for m in membership.iter_mut() {
            *m = labels[*m];
        }
        graph = aggregate(&graph, &labels);
        level += 1;
        if graph.rows() <= 1 {
            break;
        }
    }
    relabel(&membership)
}

fn relabel(labels: &[usize]) -> Vec<usize> {
    let mut map: Vec<Option<usize>> = vec![None; labels.iter().max().map_or(0, |m| m + 1)];
    let mut next = 0;
    labels
        .iter()
        .map(|&l| {
            *map[l].get_or_insert_with(|| {
                next += 1;
                next - 1
            })
        })
        .collect()
}

fn local_moving(g: &Matrix, resolution: f64, seed: u64, level: u32) -> (Vec<usize>, bool) {
    let n = g.rows();
    let degree: Vec<f64> = g.iter_rows().map(|r| r.iter().sum()).collect();
    let two_m: f64 = degree.iter().sum();
    let mut community: Vec<usize> = (0..n).collect();
    if two_m <= 0.0 {
        return (community, false);
    }
    let mut total: Vec<f64> = degree.clone();
    let mut order: Vec<usize> = (0..n).collect();
    shuffle(&mut stream_rng(seed, Stream::Louvain, level), &mut order);

    let mut links = vec![0.0; n];
    let mut touched: Vec<usize> = Vec::new();
    let mut any_move = false;
    loop {
        let mut moved = false;
        for &i in &order {
            let own = community[i];
            touched.clear();
            for (j, &wij) in g.row(i).iter().enumerate() {
                if j == i || wij == 0.0 {
                    continue;
                }
                let c = community[j];
                if links[c] == 0.0 {
                    touched.push(c);
                }
                links[c] += wij;
            }
            total[own] -= degree[i];
            let ki = degree[i];
            let gain = |c: usize, l: f64| l - resolution * total[c] * ki / two_m;
            let mut best = own;
            let mut best_gain = gain(own, links[own]);
            touched.sort_unstable();
            for &c in &touched {
                let g_c = gain(c, links[c]);
                if g_c > best_gain + 1e-12 {
                    best_gain = g_c;
                    best = c;
                }
            }
            total[best] += ki;
            for &c in &touched {
                links[c] = 0.0;
            }
            links[own] = 0.0;
            if best != own {
                community[i] = best;
                moved = true;
                any_move = true;
            }
        }
        if !moved {
            break;
        }
    }
    (community, any_move)
}

fn aggregate(g: &Matrix, labels: &[usize]) -> Matrix {
    let k = labels.iter().copied().max().map_or(0, |m| m + 1);
    let mut out = Matrix::zeros(k, k);
    for i in 0..g.rows() {
        for j in 0..g.cols() {
            out[(labels[i], labels[j])] += g[(i, j)];
        }
    }
    out
}

/// Newman modularity of `labels` on `w` (self-loops ignored).
pub fn modularity(w: &Matrix, labels: &[usize], resolution: f64) -> f64 {
    let n = w.rows();
    let mut degree = vec![0.0; n];
    let mut two_m = 0.0;
    for i in 0..n {
        for j in 0..n {
            if i != j {
                degree[i] += w[(i, j)];
                two_m += w[(i, j)];
            }
        }
    }
    if two_m <= 0.0 {
        return 0.0;
    }
    let mut q = 0.0;
    for i in 0..n {
        for j in 0..n {
            if labels[i] == labels[j] {
                let a = if i == j { 0.0 } else { w[(i, j)] };
                q += a - resolution * degree[i] * degree[j] / two_m;
            }
        }
    }
    q / two_m
}

#[cfg(test)]
mod tests {
    use super::*;

    fn blocks(sizes: &[usize], inside: f64, across: f64) -> (Matrix, Vec<usize>) {
        let truth: Vec<usize> = sizes.iter().enumerate().flat_map(|(b, &s)| vec![b; s]).collect();
        let n = truth.len();
        let mut w = Matrix::zeros(n, n);
        for i in 0..n {
            for j in 0..n {
                w[(i, j)] = if truth[i] == truth[j] { inside } else { across };
            }
        }
        (w, truth)
    }

    #[test]
    fn perfect_blocks_are_recovered() {
        let (w, truth) = blocks(&[4, 5, 3], 1.0, 0.0);
        assert_eq!(louvain(&w, 1.0, 3), truth);
    }

    #[test]
    fn empty_graph_gives_singletons() {
        let w = Matrix::zeros(4, 4);
        assert_eq!(louvain(&w, 1.0, 0), vec![0, 1, 2, 3]);
    }

    #[test]
    fn huge_resolution_gives_singletons() {
        let (w, _) = blocks(&[4, 4], 1.0, 0.1);
        let labels = louvain(&w, 1e6, 0);
        assert_eq!(labels, (0..8).collect::<Vec<_>>());
    }

    #[test]
    fn result_is_at_least_as_modular_as_singletons() {
        let (w, _) = blocks(&[3, 3, 3], 0.7, 0.2);
        let labels = louvain(&w, 1.0, 9);
        let single: Vec<usize> = (0..9).collect();
        assert!(modularity(&w, &labels, 1.0) >= modularity(&w, &single, 1.0));
    }

    #[test]
    fn relabel_is_dense_in_first_appearance_order() {
        assert_eq!(relabel(&[7, 2, 7, 0]), vec![0, 1, 0, 2]);
    }
}
