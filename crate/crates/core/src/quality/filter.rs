//! Stage filters: exact top-k, the binned CTR filter and sub-batch stitching.
//!
//! Ranking order is score descending, then item id ascending.

use std::cmp::Ordering;

use crate::catalog::FilterMode;
use crate::error::{Error, Result};
use crate::scalar::Scalar;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Scored<T> {
    pub id: u32,
    pub score: T,
}

#[inline]
pub fn rank_order<T: Scalar>(a: &Scored<T>, b: &Scored<T>) -> Ordering {
    b.score.cmp_total(&a.score).then(a.id.cmp(&b.id))
}

pub fn indexed<T: Scalar>(scores: &[T]) -> Vec<Scored<T>> {
    scores
        .iter()
        .enumerate()
        .map(|(i, &score)| Scored { id: i as u32, score })
        .collect()
}

/// Keeps the `k` best entries of `items`, leaving them in rank order.
pub fn select_topk<T: Scalar>(items: &mut Vec<Scored<T>>, k: usize) {
    if k == 0 {
        items.clear();
        return;
    }
    if k < items.len() {
        items.select_nth_unstable_by(k - 1, rank_order);
        items.truncate(k);
    }
    items.sort_unstable_by(rank_order);
}

/// Ids of the `k` highest scores, in rank order.
pub fn exact_topk<T: Scalar>(scores: &[T], k: usize) -> Result<Vec<u32>> {
    if k > scores.len() {
        return Err(Error::Precondition(format!(
            "k = {k} exceeds {} scores",
            scores.len()
        )));
    }
    let mut items = indexed(scores);
    select_topk(&mut items, k);
    Ok(items.into_iter().map(|s| s.id).collect())
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BucketParams<T> {
    pub n_bins: u32,
    pub threshold: T,
}

impl<T: Scalar> Default for BucketParams<T> {
    fn default() -> Self {
        BucketParams {
            n_bins: 16,
            threshold: T::lit(0.5),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Filtered<T> {
    /// Forwarded items in input order.
    pub items: Vec<Scored<T>>,
    /// Fewer than `k` items cleared the threshold.
    pub underflow: bool,
}

#[inline]
fn bin_of<T: Scalar>(score: T, n_bins: u32) -> usize {
    let b = (score * T::lit(n_bins as f64)).floor().to_usize().unwrap_or(0);
    b.min(n_bins as usize - 1)
}

/// Binned CTR filter over `(id, score)` pairs.
///
/// Items below the threshold are dropped, the rest are binned on
/// `[b/n, (b+1)/n)` and whole bins are taken from the top until at least
/// `k` items are held.
pub fn bucket_filter_items<T: Scalar>(
    items: &[Scored<T>],
    k: usize,
    params: &BucketParams<T>,
) -> Filtered<T> {
    let n_bins = params.n_bins.max(2);
    let mut counts = vec![0usize; n_bins as usize];
    let mut survivors = 0usize;
    for s in items {
        if s.score >= params.threshold {
            counts[bin_of(s.score, n_bins)] += 1;
            survivors += 1;
        }
    }
    let mut lowest_taken = n_bins as usize;
    let mut held = 0usize;
    while lowest_taken > 0 && held < k {
        lowest_taken -= 1;
        held += counts[lowest_taken];
    }
    let kept = items
        .iter()
        .filter(|s| s.score >= params.threshold && bin_of(s.score, n_bins) >= lowest_taken)
        .copied()
        .collect();
    Filtered {
        items: kept,
        underflow: survivors < k,
    }
}

/// Binned filter over a plain score vector; ids are positions.
pub fn bucket_filter<T: Scalar>(scores: &[T], k: usize, params: &BucketParams<T>) -> Filtered<T> {
    bucket_filter_items(&indexed(scores), k, params)
}

/// Applies one stage filter to `items`, returning the forwarded entries.
pub fn apply_filter<T: Scalar>(
    items: &[Scored<T>],
    k: usize,
    mode: FilterMode,
    params: &BucketParams<T>,
) -> Filtered<T> {
    match mode {
        FilterMode::ExactTopk => {
            let mut v = items.to_vec();
            select_topk(&mut v, k);
            Filtered {
                underflow: v.len() < k,
                items: v,
            }
        }
        FilterMode::BucketFilter => bucket_filter_items(items, k, params),
    }
}

/// Splits `items` into `n_sub` contiguous near-equal chunks, keeps
/// `k / n_sub` (remainder spread over the leading chunks) from each, and
/// concatenates the results.
pub fn stitch<T: Scalar>(
    items: &[Scored<T>],
    k: usize,
    n_sub: usize,
    mode: FilterMode,
    params: &BucketParams<T>,
) -> Filtered<T> {
    let n_sub = n_sub.clamp(1, items.len().max(1));
    let mut out = Vec::new();
    let mut underflow = false;
    let mut start = 0;
    for j in 0..n_sub {
        let len = items.len() / n_sub + usize::from(j < items.len() % n_sub);
        let kj = k / n_sub + usize::from(j < k % n_sub);
        let f = apply_filter(&items[start..start + len], kj, mode, params);
        underflow |= f.underflow;
        out.extend(f.items);
        start += len;
    }
    Filtered {
        items: out,
        underflow,
    }
}

/// Sub-batched top-k over a score vector. `n_sub` must divide both the
/// score count and `k`.
pub fn subbatch_topk<T: Scalar>(
    scores: &[T],
    k: usize,
    n_sub: usize,
    mode: FilterMode,
    params: &BucketParams<T>,
) -> Result<Filtered<T>> {
    if n_sub == 0 || scores.len() % n_sub != 0 || k % n_sub != 0 {
        return Err(Error::Precondition(format!(
            "n_sub = {n_sub} must divide |scores| = {} and k = {k}",
            scores.len()
        )));
    }
    if mode == FilterMode::ExactTopk && k > scores.len() {
        return Err(Error::Precondition(format!("k = {k} exceeds {} scores", scores.len())));
    }
    Ok(stitch(&indexed(scores), k, n_sub, mode, params))
}
