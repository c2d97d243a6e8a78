use crate::error::{Error, Result};

/// Fraction of positions where `predictions[i] == labels[i]`.
pub fn accuracy(predictions: &[f64], labels: &[f64]) -> Result<f64> {
    if predictions.len() != labels.len() {
        return Err(Error::Dimension(format!(
            "{} predictions for {} labels",
            predictions.len(),
            labels.len()
        )));
    }
    if labels.is_empty() {
        return Err(Error::InvalidParameter("accuracy of an empty set".into()));
    }
    let hits = predictions
        .iter()
        .zip(labels)
        .filter(|(p, l)| p == l)
        .count();
    Ok(hits as f64 / labels.len() as f64)
}

/// Area under the ROC curve as the Mann-Whitney statistic
/// `P(s⁺ > s⁻) + ½ P(s⁺ = s⁻)`, computed exactly from midranks.
/// Labels are positive when `> 0`.
pub fn auc(scores: &[f64], labels: &[f64]) -> Result<f64> {
    if scores.len() != labels.len() {
        return Err(Error::Dimension(format!(
            "{} scores for {} labels",
            scores.len(),
            labels.len()
        )));
    }
    if scores.iter().any(|s| s.is_nan()) {
        return Err(Error::InvalidParameter("NaN score".into()));
    }
    let n_pos = labels.iter().filter(|&&y| y > 0.0).count();
    let n_neg = labels.len() - n_pos;
    if n_pos == 0 || n_neg == 0 {
        return Err(Error::InvalidLabels("AUC needs both classes".into()));
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[a].total_cmp(&scores[b]));

    // Twice the positive rank sum, so tied midranks stay integral.
    let mut rank_sum2: u64 = 0;
    let mut start = 0;
    while start < order.len() {
        let mut end = start + 1;
        while end < order.len() && scores[order[end]] == scores[order[start]] {
            end += 1;
        }
        let pos_in_tie = order[start..end]
            .iter()
            .filter(|&&i| labels[i] > 0.0)
            .count() as u64;
        // ranks start+1 ..= end, midrank (start + 1 + end) / 2
        rank_sum2 += pos_in_tie * (start + 1 + end) as u64;
        start = end;
    }
    let (p, q) = (n_pos as u64, n_neg as u64);
    let u2 = rank_sum2 - p * (p + 1);
    Ok(u2 as f64 / (2 * p * q) as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn brute_force(scores: &[f64], labels: &[f64]) -> f64 {
        let mut wins = 0.0;
        let mut pairs = 0.0;
        for (i, &si) in scores.iter().enumerate() {
            for (j, &sj) in scores.iter().enumerate() {
                if labels[i] > 0.0 && labels[j] <= 0.0 {
                    pairs += 1.0;
                    if si > sj {
                        wins += 1.0;
                    } else if si == sj {
                        wins += 0.5;
                    }
                }
            }
        }
        wins / pairs
    }

    #[test]
    fn accuracy_examples() {
        assert_eq!(accuracy(&[1.0, -1.0], &[1.0, -1.0]).unwrap(), 1.0);
        assert_eq!(accuracy(&[1.0, -1.0], &[-1.0, 1.0]).unwrap(), 0.0);
        assert!((accuracy(&[1.0, -1.0, 1.0], &[1.0, 1.0, 1.0]).unwrap() - 2.0 / 3.0).abs() < 1e-15);
        assert!(accuracy(&[], &[]).is_err());
    }

    #[test]
    fn auc_examples() {
        assert_eq!(
            auc(&[0.1, 0.2, 0.8, 0.9], &[-1.0, -1.0, 1.0, 1.0]).unwrap(),
            1.0
        );
        assert_eq!(auc(&[0.3; 5], &[-1.0, 1.0, 1.0, -1.0, 1.0]).unwrap(), 0.5);
        assert_eq!(
            auc(&[0.1, 0.4, 0.35, 0.8], &[-1.0, -1.0, 1.0, 1.0]).unwrap(),
            0.75
        );
        assert!(auc(&[0.1, 0.2], &[1.0, 1.0]).is_err());
    }

    proptest! {
        #[test]
        fn auc_matches_pairwise_count(
            data in prop::collection::vec((0u8..6, any::<bool>()), 2..50),
        ) {
            let scores: Vec<f64> = data.iter().map(|(s, _)| *s as f64 * 0.25).collect();
            let labels: Vec<f64> = data.iter().map(|(_, b)| if *b { 1.0 } else { -1.0 }).collect();
            prop_assume!(labels.contains(&1.0) && labels.contains(&-1.0));
            prop_assert_eq!(auc(&scores, &labels).unwrap(), brute_force(&scores, &labels));
        }
    }
}
