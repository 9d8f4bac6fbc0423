//! Top-K ranking metrics against a set of held-out relevant items.
//!
//! `relevant` is always a sorted, duplicate-free slice.

fn hits(recommended: &[u32], relevant: &[u32], k: usize) -> usize {
    recommended
        .iter()
        .take(k)
        .filter(|i| relevant.binary_search(i).is_ok())
        .count()
}

/// `|top-K ∩ relevant| / |R̂_u|`, where `|R̂_u|` is the list length truncated
/// at `k` (equal to `k` for full lists). An empty list scores 0.
pub fn precision_at_k(recommended: &[u32], relevant: &[u32], k: usize) -> f64 {
    let denom = recommended.len().min(k);
    if denom == 0 {
        return 0.0;
    }
    hits(recommended, relevant, k) as f64 / denom as f64
}

/// `|top-K ∩ relevant| / |relevant|`; `None` when nothing is relevant.
pub fn recall_at_k(recommended: &[u32], relevant: &[u32], k: usize) -> Option<f64> {
    if relevant.is_empty() {
        return None;
    }
    Some(hits(recommended, relevant, k) as f64 / relevant.len() as f64)
}

/// Binary-gain NDCG: `Σ_k 1[hit_k] / log2(k+1)` over the ideal DCG of
/// `min(K, |relevant|)` leading hits.
pub fn ndcg_at_k(recommended: &[u32], relevant: &[u32], k: usize) -> f64 {
    let ideal_len = k.min(relevant.len());
    if ideal_len == 0 {
        return 0.0;
    }
    let dcg: f64 = recommended
        .iter()
        .take(k)
        .enumerate()
        .filter(|(_, i)| relevant.binary_search(i).is_ok())
        .map(|(rank, _)| 1.0 / ((rank + 2) as f64).log2())
        .sum();
    let idcg: f64 = (0..ideal_len).map(|rank| 1.0 / ((rank + 2) as f64).log2()).sum();
    dcg / idcg
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn precision_cases() {
        assert_eq!(precision_at_k(&[1, 2, 3, 4, 5], &[1, 2, 3, 4, 5], 5), 1.0);
        assert_eq!(precision_at_k(&[1, 2, 3, 4, 5], &[9], 5), 0.0);
        // [a,b,c,d,e] with relevant {b,e}
        assert_eq!(precision_at_k(&[10, 11, 12, 13, 14], &[11, 14], 5), 0.4);
        assert_eq!(precision_at_k(&[], &[1], 5), 0.0);
        // short list: denominator is the list length
        assert_eq!(precision_at_k(&[1, 2], &[1], 5), 0.5);
    }

    #[test]
    fn recall_cases() {
        assert_eq!(recall_at_k(&[3, 1, 2], &[1, 2], 3), Some(1.0));
        assert_eq!(recall_at_k(&[3, 4], &[1, 2], 2), Some(0.0));
        let rel = [1, 2, 3, 4, 5, 6, 7, 8];
        assert_eq!(recall_at_k(&[1, 20, 5, 30], &rel, 4), Some(0.25));
        assert_eq!(recall_at_k(&[1], &[], 1), None);
    }

    #[test]
    fn ndcg_cases() {
        assert!((ndcg_at_k(&[4, 2, 9], &[2, 4, 9], 3) - 1.0).abs() < 1e-15);
        let v = ndcg_at_k(&[7, 3, 8], &[3], 3);
        assert!((v - 1.0 / 3f64.log2()).abs() < 1e-15);
        assert!((v - 0.6309).abs() < 1e-4);
        assert_eq!(ndcg_at_k(&[1, 2], &[5], 2), 0.0);
    }
}
