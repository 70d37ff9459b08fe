//! Property tests for structural invariants across modules.

use hhsae_core::data::{
    inverse_transform, preprocess_apply, preprocess_fit, stratified_folds, stratified_split, Dataset,
};
use hhsae_core::discovery::{affinity_from_codes, detect_modules, louvain};
use hhsae_core::model::{full_forward, top_k_positive, ModelDims, ModelParams};
use hhsae_core::numerics::rng::{gaussian_matrix, stream_rng, uniform, Stream};
use hhsae_core::synthesis::{snap, SnapBounds};
use hhsae_core::Matrix;
use proptest::prelude::*;

fn small_dims(k1: usize, k2: usize) -> ModelDims {
    ModelDims {
        input_dim: 6,
        d_dense: 2,
        d1: 16,
        k1,
        d2: 6,
        k2,
        dense_enabled: true,
    }
}

fn random_x(seed: u64, n: usize, d: usize, scale: f64) -> Matrix {
    let mut rng = stream_rng(seed, Stream::Generator, 0);
    gaussian_matrix(&mut rng, n, d).scale(scale)
}

fn nnz(row: &[f64]) -> usize {
    row.iter().filter(|v| **v != 0.0).count()
}

/// Adjusted Rand index between two labelings.
fn ari(a: &[usize], b: &[usize]) -> f64 {
    let ka = a.iter().max().map_or(0, |m| m + 1);
    let kb = b.iter().max().map_or(0, |m| m + 1);
    let mut table = vec![vec![0u64; kb]; ka];
    for (x, y) in a.iter().zip(b) {
        table[*x][*y] += 1;
    }
    let c2 = |n: u64| (n * n.saturating_sub(1)) as f64 / 2.0;
    let sum_ij: f64 = table.iter().flatten().map(|&n| c2(n)).sum();
    let sum_a: f64 = table.iter().map(|r| c2(r.iter().sum())).sum();
    let sum_b: f64 = (0..kb).map(|j| c2(table.iter().map(|r| r[j]).sum())).sum();
    let total = c2(a.len() as u64);
    let expected = sum_a * sum_b / total;
    let max = (sum_a + sum_b) / 2.0;
    if max == expected {
        return 1.0;
    }
    (sum_ij - expected) / (max - expected)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn sparsity_budget_holds(seed in 0u64..10_000, k1 in 1usize..=6, k2 in 1usize..=4, scale in 0.1f64..5.0) {
        let p = ModelParams::init(small_dims(k1, k2), seed).unwrap();
        let x = random_x(seed, 24, 6, scale);
        let t = full_forward(&x, &p).unwrap();
        for i in 0..x.rows() {
            prop_assert!(nnz(t.z1.row(i)) <= k1);
            prop_assert!(nnz(t.z2.row(i)) <= k2);
            prop_assert!(t.z1.row(i).iter().all(|v| *v >= 0.0));
            prop_assert!(t.z2.row(i).iter().all(|v| *v >= 0.0));
            prop_assert_eq!(t.active1[i].len(), nnz(t.z1.row(i)));
        }
    }

    #[test]
    fn top_k_picks_the_largest_positives(v in prop::collection::vec(-2.0f64..2.0, 1..40), k in 0usize..8) {
        let sel = top_k_positive(&v, k);
        prop_assert!(sel.len() <= k);
        prop_assert!(sel.iter().all(|&i| v[i] > 0.0));
        prop_assert!(sel.windows(2).all(|w| v[w[0]] >= v[w[1]]));
        let positives = v.iter().filter(|x| **x > 0.0).count();
        prop_assert_eq!(sel.len(), k.min(positives));
        if let Some(&last) = sel.last() {
            for (i, x) in v.iter().enumerate() {
                if !sel.contains(&i) {
                    prop_assert!(*x <= v[last]);
                }
            }
        }
    }

    #[test]
    fn affinity_is_symmetric_cofire_rate(codes in prop::collection::vec(prop::collection::vec(prop_oneof![Just(0.0f64), 0.1f64..2.0], 5), 1..30)) {
        let z2 = Matrix::from_rows(&codes).unwrap();
        let aff = affinity_from_codes(&z2).unwrap();
        let n = codes.len() as f64;
        for j in 0..5 {
            for k in 0..5 {
                prop_assert_eq!(aff.a[(j, k)], aff.a[(k, j)]);
                let both = codes.iter().filter(|r| r[j] != 0.0 && r[k] != 0.0).count() as f64;
                prop_assert_eq!(aff.a[(j, k)], both / n);
                prop_assert!(aff.a[(j, k)] <= aff.a[(j, j)]);
            }
        }
    }

    #[test]
    fn modules_partition_live_neurons(codes in prop::collection::vec(prop::collection::vec(prop_oneof![Just(0.0f64), 0.1f64..2.0], 8), 1..40), seed in 0u64..100) {
        let z2 = Matrix::from_rows(&codes).unwrap();
        let aff = affinity_from_codes(&z2).unwrap();
        let modules = detect_modules(&aff, 1.0, seed).unwrap();
        let mut seen: Vec<usize> = modules.iter().flat_map(|m| m.neuron_ids.clone()).collect();
        let n_seen = seen.len();
        seen.sort_unstable();
        seen.dedup();
        prop_assert_eq!(seen.len(), n_seen);
        let live: Vec<usize> = (0..8).filter(|&j| aff.alive()[j]).collect();
        prop_assert_eq!(seen, live);
        for (i, m) in modules.iter().enumerate() {
            prop_assert_eq!(m.module_id, i);
            prop_assert_eq!(m.size, m.neuron_ids.len());
        }
    }

    #[test]
    fn louvain_recovers_noisy_blocks(seed in 0u64..1000, blocks in 2usize..5, size in 3usize..7) {
        let n = blocks * size;
        let truth: Vec<usize> = (0..n).map(|i| i / size).collect();
        let mut rng = stream_rng(seed, Stream::Louvain, 1);
        let mut w = Matrix::zeros(n, n);
        for i in 0..n {
            for j in i + 1..n {
                let v = if truth[i] == truth[j] { uniform(&mut rng, 0.6, 1.0) } else { uniform(&mut rng, 0.0, 0.15) };
                w[(i, j)] = v;
                w[(j, i)] = v;
            }
        }
        let labels = louvain(&w, 1.0, seed);
        prop_assert!(ari(&labels, &truth) >= 0.9);
    }

    #[test]
    fn snap_lands_inside_support(seed in 0u64..1000, scale in 0.5f64..10.0) {
        let mut rng = stream_rng(seed, Stream::Generator, 3);
        let mut train = gaussian_matrix(&mut rng, 20, 3);
        for i in 0..20 {
            train[(i, 2)] = if uniform(&mut rng, 0.0, 1.0) < 0.5 { -0.7 } else { 1.3 };
        }
        let mut d = Dataset::with_default_names(train, vec![0; 20]).unwrap();
        d.feature_kinds[2] = hhsae_core::data::FeatureKind::Flag;
        let bounds = SnapBounds::from_data(&d).unwrap();
        let q = gaussian_matrix(&mut rng, 15, 3).scale(scale);
        let s = snap(&q, &bounds).unwrap();
        for row in s.iter_rows() {
            for (v, b) in row.iter().zip(&bounds.features) {
                prop_assert!(*v >= b.lo && *v <= b.hi);
            }
            prop_assert!(row[2] == bounds.features[2].lo || row[2] == bounds.features[2].hi);
        }
        prop_assert_eq!(snap(&s, &bounds).unwrap(), s);
    }

    #[test]
    fn preprocessing_round_trips(seed in 0u64..1000, scale in 0.1f64..100.0, shift in -50.0f64..50.0) {
        let x = random_x(seed, 40, 4, scale).map(|v| v + shift);
        let d = Dataset::with_default_names(x.clone(), vec![0; 40]).unwrap();
        let stats = preprocess_fit(&d, (0.0, 1.0), &[]).unwrap();
        let back = inverse_transform(&preprocess_apply(&d, &stats).unwrap().x, &stats).unwrap();
        for (a, b) in x.as_slice().iter().zip(back.as_slice()) {
            prop_assert!((a - b).abs() <= 1e-9 * (1.0 + a.abs()));
        }
    }

    #[test]
    fn splits_are_stratified(n_pos in 2usize..30, n_neg in 5usize..80, seed in 0u64..1000) {
        let n = n_pos + n_neg;
        let y: Vec<u8> = (0..n).map(|i| u8::from(i % (n / n_pos).max(1) == 0 && i / (n / n_pos).max(1) < n_pos)).collect();
        prop_assume!(y.iter().filter(|v| **v == 1).count() >= 3);
        let d = Dataset::with_default_names(Matrix::zeros(n, 1), y.clone()).unwrap();
        let (a, b) = stratified_split(&d, 0.3, seed).unwrap();
        prop_assert_eq!(a.len() + b.len(), n);
        prop_assert_eq!(a.n_positive() + b.n_positive(), d.n_positive());
        let folds = stratified_folds(&y, 3, seed).unwrap();
        for f in 0..3 {
            let pos = (0..n).filter(|&i| folds[i] == f && y[i] == 1).count();
            prop_assert!(pos * 3 + 3 >= d.n_positive() && pos * 3 <= d.n_positive() + 3);
        }
    }
}
