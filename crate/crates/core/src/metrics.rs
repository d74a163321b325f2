//! Attack scoring metrics.

use crate::{Error, Result};

/// Area under the ROC curve for `(score, is_member)` pairs.
///
/// Computed as the Mann-Whitney statistic with mid-ranks, so tied scores
/// count one half. The statistic is accumulated in integers (twice the
/// rank sum) and divided once, which makes the result exact.
pub fn auc(data: &[(f64, bool)]) -> Result<f64> {
    if data.iter().any(|(s, _)| !s.is_finite()) {
        return Err(Error::NonFinite("scores"));
    }
    let n_pos = data.iter().filter(|(_, l)| *l).count() as u64;
    let n_neg = data.len() as u64 - n_pos;
    if n_pos == 0 || n_neg == 0 {
        return Err(Error::SingleClass);
    }

    let mut order: Vec<usize> = (0..data.len()).collect();
    order.sort_by(|&a, &b| data[a].0.total_cmp(&data[b].0));

    // twice the sum of positive mid-ranks
    let mut twice_rank_sum: u64 = 0;
    let mut start = 0;
    while start < order.len() {
        let mut end = start + 1;
        while end < order.len() && data[order[end]].0 == data[order[start]].0 {
            end += 1;
        }
        // 1-based ranks start+1 ..= end share the mid-rank (start+1+end)/2
        let twice_mid = (start + 1 + end) as u64;
        let pos_in_group = order[start..end].iter().filter(|&&i| data[i].1).count() as u64;
        twice_rank_sum += twice_mid * pos_in_group;
        start = end;
    }
    let twice_u = twice_rank_sum - n_pos * (n_pos + 1);
    Ok(twice_u as f64 / (2 * n_pos * n_neg) as f64)
}

/// [`auc`] over parallel score and label slices.
pub fn auc_from_labels(scores: &[f64], labels: &[u8]) -> Result<f64> {
    if scores.len() != labels.len() {
        return Err(Error::DimensionMismatch {
            expected: scores.len(),
            actual: labels.len(),
        });
    }
    let pairs: Vec<(f64, bool)> = scores.iter().zip(labels).map(|(&s, &l)| (s, l == 1)).collect();
    auc(&pairs)
}
