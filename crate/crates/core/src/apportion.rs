//! Largest-remainder integerization.

/// Integer counts proportional to `weights` summing exactly to `total`.
///
/// Floors are taken first; the leftover units go to the largest fractional
/// remainders, ties resolved by position (earlier index first). All-zero or
/// non-finite weights yield all zeros.
pub fn largest_remainder(weights: &[f64], total: u64) -> Vec<u64> {
    let sum: f64 = weights.iter().filter(|w| w.is_finite() && **w > 0.0).sum();
    if weights.is_empty() || sum <= 0.0 {
        return vec![0; weights.len()];
    }
    let quotas: Vec<f64> = weights
        .iter()
        .map(|&w| if w.is_finite() && w > 0.0 { w / sum * total as f64 } else { 0.0 })
        .collect();
    let mut out: Vec<u64> = quotas.iter().map(|q| q.floor() as u64).collect();
    let assigned: u64 = out.iter().sum();
    let mut order: Vec<usize> = (0..weights.len()).collect();
    // stable sort keeps index order among equal remainders
    order.sort_by(|&a, &b| {
        let ra = quotas[a] - quotas[a].floor();
        let rb = quotas[b] - quotas[b].floor();
        rb.partial_cmp(&ra).unwrap_or(std::cmp::Ordering::Equal)
    });
    let mut left = total.saturating_sub(assigned);
    for &i in order.iter().cycle() {
        if left == 0 {
            break;
        }
        if quotas[i] > 0.0 || weights[i] > 0.0 {
            out[i] += 1;
            left -= 1;
        }
    }
    out
}

/// Largest-remainder rounding of a real vector to its own rounded total.
pub fn round_preserving_total(values: &[f64]) -> Vec<u64> {
    let total: f64 = values.iter().filter(|v| **v > 0.0).sum();
    largest_remainder(values, total.round().max(0.0) as u64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn split_of_seventy() {
        assert_eq!(largest_remainder(&[0.5, 0.3, 0.2], 70), vec![35, 21, 14]);
    }

    #[test]
    fn tie_goes_to_earlier_column() {
        assert_eq!(largest_remainder(&[6.5, 3.5], 10), vec![7, 3]);
    }

    #[test]
    fn zero_weights() {
        assert_eq!(largest_remainder(&[0.0, 0.0], 5), vec![0, 0]);
        assert_eq!(largest_remainder(&[], 5), Vec::<u64>::new());
    }

    proptest! {
        #[test]
        fn conserves_total(weights in prop::collection::vec(0.0f64..100.0, 1..20), total in 0u64..10_000) {
            let out = largest_remainder(&weights, total);
            if weights.iter().any(|w| *w > 0.0) {
                prop_assert_eq!(out.iter().sum::<u64>(), total);
            }
            for (o, w) in out.iter().zip(&weights) {
                if *w == 0.0 { prop_assert_eq!(*o, 0); }
            }
        }
    }
}
