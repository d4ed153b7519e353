//! Discounted cumulative gain on a 0-100 scale.

use crate::scalar::Scalar;

/// `sum_i rel_i / log2(i + 1)` over 1-based positions.
pub fn dcg<T: Scalar>(gains: impl IntoIterator<Item = T>) -> T {
    gains
        .into_iter()
        .enumerate()
        .fold(T::zero(), |acc, (i, g)| {
            acc + g / T::lit((i + 2) as f64).log2()
        })
}

/// DCG of the `n` highest relevances in descending order.
pub fn ideal_dcg<T: Scalar>(relevance: &[T], n: usize) -> T {
    let mut top = relevance.to_vec();
    let n = n.min(top.len());
    if n == 0 {
        return T::zero();
    }
    if n < top.len() {
        top.select_nth_unstable_by(n - 1, |a, b| b.cmp_total(a));
        top.truncate(n);
    }
    top.sort_unstable_by(|a, b| b.cmp_total(a));
    dcg(top)
}

/// NDCG x 100 of a served id list against the full candidate relevances.
///
/// The ideal ranks the `serve_count` best items of the whole candidate set.
/// An all-zero ideal scores 100.
pub fn ndcg<T: Scalar>(served: &[u32], relevance: &[T], serve_count: usize) -> T {
    let ideal = ideal_dcg(relevance, serve_count);
    ndcg_with_ideal(served, relevance, serve_count, ideal)
}

pub(crate) fn ndcg_with_ideal<T: Scalar>(
    served: &[u32],
    relevance: &[T],
    serve_count: usize,
    ideal: T,
) -> T {
    let hundred = T::lit(100.0);
    if ideal <= T::zero() {
        return hundred;
    }
    let measured = dcg(served.iter().take(serve_count).map(|&i| relevance[i as usize]));
    (measured / ideal * hundred).min(hundred)
}
