use alloc::vec::Vec;

use super::Dataset;
use crate::numerics::rng::{shuffle, stream_rng, Stream};
use crate::{Error, Result};

fn class_indices(d: &Dataset) -> [Vec<usize>; 2] {
    let mut by_class = [Vec::new(), Vec::new()];
    for (i, &y) in d.y.iter().enumerate() {
        by_class[y as usize].push(i);
    }
    by_class
}

/// Splits `d` into `(part, rest)` with `part` holding `fraction` of each
/// class (rounded). Rows keep their original relative order.
pub fn stratified_split(d: &Dataset, fraction: f64, rng_seed: u64) -> Result<(Dataset, Dataset)> {
    if !(fraction > 0.0 && fraction < 1.0) {
        return Err(Error::invalid("split fraction must lie in (0, 1)"));
    }
    let mut rng = stream_rng(rng_seed, Stream::Split, 0);
    let mut first = Vec::new();
    let mut second = Vec::new();
    for (class, mut idx) in class_indices(d).into_iter().enumerate() {
        if idx.len() < 2 {
            return Err(Error::data(alloc::format!(
                "class {class} has {} members; stratified split needs at least 2",
                idx.len()
            )));
        }
        shuffle(&mut rng, &mut idx);
        let take = libm::round(fraction * idx.len() as f64) as usize;
        let take = take.clamp(1, idx.len() - 1);
        first.extend_from_slice(&idx[..take]);
        second.extend_from_slice(&idx[take..]);
    }
    first.sort_unstable();
    second.sort_unstable();
    Ok((d.subset(&first), d.subset(&second)))
}

/// Assigns each row to one of `k` stratified folds. Returns the fold id per row.
pub fn stratified_folds(y: &[u8], k: usize, rng_seed: u64) -> Result<Vec<usize>> {
    if k < 2 {
        return Err(Error::invalid("need at least 2 folds"));
    }
    let mut by_class = [Vec::new(), Vec::new()];
    for (i, &label) in y.iter().enumerate() {
        by_class[label as usize].push(i);
    }
    let mut rng = stream_rng(rng_seed, Stream::Folds, 0);
    let mut fold = alloc::vec![0usize; y.len()];
    for (class, idx) in by_class.iter_mut().enumerate() {
        if idx.len() < k {
            return Err(Error::data(alloc::format!(
                "class {class} has {} members, fewer than {k} folds",
                idx.len()
            )));
        }
        shuffle(&mut rng, idx);
        for (pos, &i) in idx.iter().enumerate() {
            fold[i] = pos % k;
        }
    }
    Ok(fold)
}
