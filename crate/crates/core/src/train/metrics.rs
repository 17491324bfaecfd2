//! Threshold-free AUC and the confusion-based F1-macro and Gmean.

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum MetricError {
    #[error("empty input")]
    Empty,
    #[error("{scores} scores for {labels} labels")]
    LengthMismatch { scores: usize, labels: usize },
    #[error("both classes must be present ({positives} positive, {negatives} negative)")]
    SingleClass { positives: usize, negatives: usize },
    #[error("non-finite score at position {0}")]
    NonFiniteScore(usize),
}

fn check_lengths(a: usize, b: usize) -> Result<(), MetricError> {
    if a != b {
        return Err(MetricError::LengthMismatch { scores: a, labels: b });
    }
    if a == 0 {
        return Err(MetricError::Empty);
    }
    Ok(())
}

/// Probability that a random positive outranks a random negative, ties
/// counted one half. Computed from mid-ranks, so it is exact.
pub fn auc(scores: &[f64], labels: &[bool]) -> Result<f64, MetricError> {
    check_lengths(scores.len(), labels.len())?;
    if let Some(i) = scores.iter().position(|s| !s.is_finite()) {
        return Err(MetricError::NonFiniteScore(i));
    }
    let positives = labels.iter().filter(|&&l| l).count();
    let negatives = labels.len() - positives;
    if positives == 0 || negatives == 0 {
        return Err(MetricError::SingleClass { positives, negatives });
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[a].total_cmp(&scores[b]));
    // Twice the rank sum keeps mid-ranks integral.
    let mut rank2_sum: u64 = 0;
    let mut start = 0;
    while start < order.len() {
        let mut end = start + 1;
        while end < order.len() && scores[order[end]] == scores[order[start]] {
            end += 1;
        }
        // Ranks start+1..=end share the mid-rank (start+1+end)/2.
        let mid2 = (start + 1 + end) as u64;
        let pos_in_group = order[start..end].iter().filter(|&&i| labels[i]).count() as u64;
        rank2_sum += mid2 * pos_in_group;
        start = end;
    }
    let p = positives as u64;
    // U = R_pos − p(p+1)/2, all doubled.
    let u2 = rank2_sum - p * (p + 1);
    Ok(u2 as f64 / (2.0 * positives as f64 * negatives as f64))
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Confusion {
    pub tp: usize,
    pub fp: usize,
    pub tn: usize,
    #[serde(rename = "fn")]
    pub fn_: usize,
}

impl Confusion {
    pub fn from_predictions(predicted: &[bool], labels: &[bool]) -> Result<Self, MetricError> {
        check_lengths(predicted.len(), labels.len())?;
        let mut c = Confusion::default();
        for (&p, &l) in predicted.iter().zip(labels) {
            match (p, l) {
                (true, true) => c.tp += 1,
                (true, false) => c.fp += 1,
                (false, false) => c.tn += 1,
                (false, true) => c.fn_ += 1,
            }
        }
        Ok(c)
    }

    pub fn total(&self) -> usize {
        self.tp + self.fp + self.tn + self.fn_
    }

    fn f1(tp: usize, fp: usize, fn_: usize) -> f64 {
        let denom = 2 * tp + fp + fn_;
        if denom == 0 {
            0.0
        } else {
            2.0 * tp as f64 / denom as f64
        }
    }

    /// Mean of the fraud-class and benign-class F1.
    pub fn f1_macro(&self) -> Result<f64, MetricError> {
        if self.total() == 0 {
            return Err(MetricError::Empty);
        }
        let fraud = Self::f1(self.tp, self.fp, self.fn_);
        let benign = Self::f1(self.tn, self.fn_, self.fp);
        Ok((fraud + benign) / 2.0)
    }

    /// `√(TPR · TNR)`.
    pub fn gmean(&self) -> Result<f64, MetricError> {
        let positives = self.tp + self.fn_;
        let negatives = self.tn + self.fp;
        if positives == 0 || negatives == 0 {
            return Err(MetricError::SingleClass { positives, negatives });
        }
        let tpr = self.tp as f64 / positives as f64;
        let tnr = self.tn as f64 / negatives as f64;
        Ok((tpr * tnr).sqrt())
    }
}

pub fn f1_macro(predicted: &[bool], labels: &[bool]) -> Result<f64, MetricError> {
    Confusion::from_predictions(predicted, labels)?.f1_macro()
}

pub fn gmean(predicted: &[bool], labels: &[bool]) -> Result<f64, MetricError> {
    Confusion::from_predictions(predicted, labels)?.gmean()
}

/// Scores at or above this are predicted fraud.
pub const DECISION_THRESHOLD: f64 = 0.5;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub split: String,
    pub auc: f64,
    pub f1_macro: f64,
    pub gmean: f64,
    #[serde(flatten)]
    pub confusion: Confusion,
}

impl MetricsReport {
    pub fn compute(split: &str, scores: &[f64], labels: &[bool]) -> Result<Self, MetricError> {
        let auc = auc(scores, labels)?;
        let predicted: Vec<bool> = scores.iter().map(|&s| s >= DECISION_THRESHOLD).collect();
        let confusion = Confusion::from_predictions(&predicted, labels)?;
        Ok(Self {
            split: split.to_string(),
            auc,
            f1_macro: confusion.f1_macro()?,
            gmean: confusion.gmean()?,
            confusion,
        })
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("report serializes");
        s.push('\n');
        s
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn pairwise(scores: &[f64], labels: &[bool]) -> f64 {
        let (mut wins, mut pairs) = (0.0, 0.0);
        for (i, &li) in labels.iter().enumerate() {
            for (j, &lj) in labels.iter().enumerate() {
                if li && !lj {
                    pairs += 1.0;
                    wins += match scores[i].partial_cmp(&scores[j]).unwrap() {
                        std::cmp::Ordering::Greater => 1.0,
                        std::cmp::Ordering::Equal => 0.5,
                        std::cmp::Ordering::Less => 0.0,
                    };
                }
            }
        }
        wins / pairs
    }

    #[test]
    fn auc_examples() {
        let s = [0.9, 0.8, 0.3, 0.1];
        assert_eq!(auc(&s, &[true, true, false, false]).unwrap(), 1.0);
        assert_eq!(auc(&s, &[true, false, true, false]).unwrap(), 0.75);
        assert_eq!(auc(&[0.4; 5], &[true, false, true, false, false]).unwrap(), 0.5);
    }

    #[test]
    fn auc_errors() {
        assert!(matches!(auc(&[0.1, 0.2], &[true, true]), Err(MetricError::SingleClass { .. })));
        assert_eq!(auc(&[], &[]), Err(MetricError::Empty));
        assert!(matches!(auc(&[0.1], &[true, false]), Err(MetricError::LengthMismatch { .. })));
        assert_eq!(auc(&[f64::NAN, 0.1], &[true, false]), Err(MetricError::NonFiniteScore(0)));
    }

    #[test]
    fn f1_examples() {
        let l = [true, true, false, false];
        assert_eq!(f1_macro(&l, &l).unwrap(), 1.0);
        let v = f1_macro(&[true, false, false, false], &l).unwrap();
        assert!((v - (2.0 / 3.0 + 4.0 / 5.0) / 2.0).abs() < 1e-15);
        let v = f1_macro(&[true, true], &[true, false]).unwrap();
        assert!((v - 1.0 / 3.0).abs() < 1e-15);
        assert_eq!(f1_macro(&[], &[]), Err(MetricError::Empty));
    }

    #[test]
    fn gmean_examples() {
        let c = Confusion { tp: 8, fn_: 2, tn: 9, fp: 1 };
        assert!((c.gmean().unwrap() - 0.72f64.sqrt()).abs() < 1e-15);
        let all_benign = gmean(&[false; 4], &[true, false, false, true]).unwrap();
        assert_eq!(all_benign, 0.0);
        assert_eq!(gmean(&[true, true], &[true, true]).unwrap_err(), MetricError::SingleClass { positives: 2, negatives: 0 });
    }

    #[test]
    fn report_on_perfect_scores() {
        let r = MetricsReport::compute("test", &[0.9, 0.7, 0.2, 0.1], &[true, true, false, false]).unwrap();
        assert_eq!((r.auc, r.f1_macro, r.gmean), (1.0, 1.0, 1.0));
        assert_eq!(r.confusion.total(), 4);
        let json: serde_json::Value = serde_json::from_str(&r.to_json()).unwrap();
        for key in ["split", "auc", "f1_macro", "gmean", "tp", "fp", "tn", "fn"] {
            assert!(json.get(key).is_some(), "{key}");
        }
    }

    fn scored_labels() -> impl Strategy<Value = (Vec<f64>, Vec<bool>)> {
        (2usize..40).prop_flat_map(|n| {
            (
                proptest::collection::vec((0u8..8).prop_map(|v| v as f64 / 7.0), n),
                proptest::collection::vec(any::<bool>(), n)
                    .prop_filter("both classes", |l| l.iter().any(|&b| b) && l.iter().any(|&b| !b)),
            )
        })
    }

    proptest! {
        #[test]
        fn auc_equals_pairwise((s, l) in scored_labels()) {
            prop_assert_eq!(auc(&s, &l).unwrap(), pairwise(&s, &l));
        }

        #[test]
        fn auc_ignores_monotone_transforms((s, l) in scored_labels()) {
            let t: Vec<f64> = s.iter().map(|v| (3.0 * v).exp() - 7.0).collect();
            prop_assert_eq!(auc(&s, &l).unwrap(), auc(&t, &l).unwrap());
        }

        #[test]
        fn flipped_labels_complement(l in proptest::collection::vec(any::<bool>(), 2..30)
            .prop_filter("both classes", |l| l.iter().any(|&b| b) && l.iter().any(|&b| !b))) {
            let s: Vec<f64> = (0..l.len()).map(|i| ((i * 7919) % 101) as f64 + i as f64 * 1e-3).collect();
            let flipped: Vec<bool> = l.iter().map(|b| !b).collect();
            let total = auc(&s, &l).unwrap() + auc(&s, &flipped).unwrap();
            prop_assert!((total - 1.0).abs() < 1e-12);
        }

        #[test]
        fn metrics_ignore_node_order((s, l) in scored_labels(), rot in 0usize..40) {
            let r = MetricsReport::compute("x", &s, &l).unwrap();
            let k = rot % s.len();
            let (mut s2, mut l2) = (s.clone(), l.clone());
            s2.rotate_left(k);
            l2.rotate_left(k);
            let r2 = MetricsReport::compute("x", &s2, &l2).unwrap();
            prop_assert_eq!(r.confusion.total(), s.len());
            prop_assert_eq!(r, r2);
        }
    }
}
