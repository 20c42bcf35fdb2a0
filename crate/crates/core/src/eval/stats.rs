//! Rank statistics: AUROC, Pearson and Spearman.

use std::cmp::Ordering;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum StatError {
    #[error("labels contain a single class")]
    DegenerateLabels,
    #[error("a variable has zero variance")]
    DegenerateVariance,
    #[error("length mismatch: {0} vs {1}")]
    LengthMismatch(usize, usize),
    #[error("need at least two observations")]
    TooShort,
    #[error("scores contain NaN")]
    NotANumber,
}

/// Positions of `values` sorted ascending, plus the tie groups as ranges of
/// that order. Incomparable values (NaN) are rejected upstream.
fn tie_groups<T: PartialOrd>(values: &[T]) -> (Vec<usize>, Vec<(usize, usize)>) {
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&i, &j| values[i].partial_cmp(&values[j]).unwrap_or(Ordering::Equal));
    let mut groups = Vec::new();
    let mut start = 0;
    for end in 1..=order.len() {
        if end == order.len() || values[order[end]].partial_cmp(&values[order[start]]) != Some(Ordering::Equal) {
            groups.push((start, end));
            start = end;
        }
    }
    (order, groups)
}

/// Average ranks starting at 1; tied values share the mean of their ranks.
pub fn midranks<T: PartialOrd>(values: &[T]) -> Vec<f64> {
    let (order, groups) = tie_groups(values);
    let mut ranks = vec![0.0; values.len()];
    for (start, end) in groups {
        let mid = (start + end + 1) as f64 / 2.0;
        for &i in &order[start..end] {
            ranks[i] = mid;
        }
    }
    ranks
}

/// Twice the Mann-Whitney count of (failure, success) pairs won by the
/// failure, with ties counting one, plus the number of such pairs. Exact
/// for any totally ordered score type.
pub fn mann_whitney_twice<T: PartialOrd>(scores: &[T], failure: &[bool]) -> Result<(u64, u64), StatError> {
    if scores.len() != failure.len() {
        return Err(StatError::LengthMismatch(scores.len(), failure.len()));
    }
    if scores.iter().any(|s| s.partial_cmp(s).is_none()) {
        return Err(StatError::NotANumber);
    }
    let positives = failure.iter().filter(|&&f| f).count() as u64;
    let negatives = failure.len() as u64 - positives;
    if positives == 0 || negatives == 0 {
        return Err(StatError::DegenerateLabels);
    }
    let (order, groups) = tie_groups(scores);
    let mut twice_u = 0u64;
    let mut negatives_below = 0u64;
    for (start, end) in groups {
        let group = &order[start..end];
        let pos = group.iter().filter(|&&i| failure[i]).count() as u64;
        let neg = group.len() as u64 - pos;
        twice_u += pos * (2 * negatives_below + neg);
        negatives_below += neg;
    }
    Ok((twice_u, positives * negatives))
}

/// P(score of a failure > score of a success) + P(tie) / 2.
pub fn auroc<T: PartialOrd>(scores: &[T], failure: &[bool]) -> Result<f64, StatError> {
    let (twice_u, pairs) = mann_whitney_twice(scores, failure)?;
    Ok(twice_u as f64 / (2 * pairs) as f64)
}

fn check_pair(x: &[f64], y: &[f64]) -> Result<(), StatError> {
    if x.len() != y.len() {
        return Err(StatError::LengthMismatch(x.len(), y.len()));
    }
    if x.len() < 2 {
        return Err(StatError::TooShort);
    }
    if x.iter().chain(y).any(|v| v.is_nan()) {
        return Err(StatError::NotANumber);
    }
    Ok(())
}

/// Product-moment correlation.
pub fn pearson(x: &[f64], y: &[f64]) -> Result<f64, StatError> {
    check_pair(x, y)?;
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (a, b) in x.iter().zip(y) {
        let (dx, dy) = (a - mx, b - my);
        sxy += dx * dy;
        sxx += dx * dx;
        syy += dy * dy;
    }
    if sxx == 0.0 || syy == 0.0 {
        return Err(StatError::DegenerateVariance);
    }
    Ok((sxy / (sxx.sqrt() * syy.sqrt())).clamp(-1.0, 1.0))
}

/// Pearson correlation of mid-ranks.
pub fn spearman(x: &[f64], y: &[f64]) -> Result<f64, StatError> {
    check_pair(x, y)?;
    pearson(&midranks(x), &midranks(y))
}
