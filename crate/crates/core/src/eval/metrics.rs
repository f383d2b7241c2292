use std::cmp::Ordering;
use std::collections::HashSet;

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum MetricError {
    #[error("no defective images among the scored set")]
    NoPositives,
    #[error("score of `{0}` is not finite")]
    NonFinite(String),
    #[error("image id `{0}` appears twice")]
    DuplicateId(String),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScoredItem {
    pub image_id: String,
    pub score: f64,
    pub defective: bool,
}

/// Image-level scores with unique ids.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct ScoredSet {
    items: Vec<ScoredItem>,
}

impl ScoredSet {
    pub fn new(items: Vec<ScoredItem>) -> Result<Self, MetricError> {
        let mut ids = HashSet::new();
        for it in &items {
            if !it.score.is_finite() {
                return Err(MetricError::NonFinite(it.image_id.clone()));
            }
            if !ids.insert(it.image_id.as_str()) {
                return Err(MetricError::DuplicateId(it.image_id.clone()));
            }
        }
        Ok(Self { items })
    }

    /// Convenience constructor with generated ids.
    pub fn from_pairs(scores: &[f64], labels: &[bool]) -> Result<Self, MetricError> {
        Self::new(
            scores
                .iter()
                .zip(labels)
                .enumerate()
                .map(|(i, (s, l))| ScoredItem {
                    image_id: i.to_string(),
                    score: *s,
                    defective: *l,
                })
                .collect(),
        )
    }

    pub fn items(&self) -> &[ScoredItem] {
        &self.items
    }

    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    pub fn positives(&self) -> usize {
        self.items.iter().filter(|i| i.defective).count()
    }

    pub fn negatives(&self) -> usize {
        self.len() - self.positives()
    }

    pub fn extend(&mut self, other: ScoredSet) -> Result<(), MetricError> {
        let mut all = std::mem::take(&mut self.items);
        all.extend(other.items);
        *self = ScoredSet::new(all)?;
        Ok(())
    }
}

/// Operating point at one distinct score threshold (`score ≥ threshold`
/// counts as defective).
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PrPoint {
    pub threshold: f64,
    pub recall: f64,
    pub precision: f64,
    pub tp: usize,
    pub fp: usize,
}

/// One point per distinct score, highest threshold first. Tied scores
/// enter together.
pub fn pr_curve(set: &ScoredSet) -> Result<Vec<PrPoint>, MetricError> {
    let pos = set.positives();
    if pos == 0 {
        return Err(MetricError::NoPositives);
    }
    let mut sorted: Vec<&ScoredItem> = set.items().iter().collect();
    sorted.sort_by(|a, b| b.score.partial_cmp(&a.score).unwrap_or(Ordering::Equal));
    let mut points = Vec::new();
    let (mut tp, mut fp) = (0usize, 0usize);
    let mut i = 0;
    while i < sorted.len() {
        let threshold = sorted[i].score;
        while i < sorted.len() && sorted[i].score == threshold {
            if sorted[i].defective {
                tp += 1;
            } else {
                fp += 1;
            }
            i += 1;
        }
        points.push(PrPoint {
            threshold,
            recall: tp as f64 / pos as f64,
            precision: tp as f64 / (tp + fp) as f64,
            tp,
            fp,
        });
    }
    Ok(points)
}

/// `Σ (R_k − R_{k−1})·P_k` over the curve (no interpolation).
pub fn average_precision(set: &ScoredSet) -> Result<f64, MetricError> {
    let mut prev = 0.0;
    let mut ap = 0.0;
    for p in pr_curve(set)? {
        ap += (p.recall - prev) * p.precision;
        prev = p.recall;
    }
    Ok(ap)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct BestF {
    pub threshold: f64,
    pub f1: f64,
    pub fp: usize,
    #[serde(rename = "fn")]
    pub fn_: usize,
}

/// Threshold maximizing F1 among the distinct scores; ties go to the higher
/// threshold.
pub fn best_f_threshold(set: &ScoredSet) -> Result<BestF, MetricError> {
    let pos = set.positives();
    let mut best: Option<(PrPoint, usize, usize)> = None;
    for p in pr_curve(set)? {
        let fn_ = pos - p.tp;
        // F1 = 2tp / (2tp + fp + fn), compared exactly
        let (num, den) = (2 * p.tp, 2 * p.tp + p.fp + fn_);
        let better = match best {
            None => true,
            Some((_, bn, bd)) => num * bd > bn * den,
        };
        if better {
            best = Some((p, num, den));
        }
    }
    let (p, num, den) = best.expect("curve has at least one point");
    Ok(BestF {
        threshold: p.threshold,
        f1: num as f64 / den as f64,
        fp: p.fp,
        fn_: pos - p.tp,
    })
}

/// False positives when the threshold is the lowest defective score.
pub fn fp_at_full_recall(set: &ScoredSet) -> Result<usize, MetricError> {
    let min_pos = set
        .items()
        .iter()
        .filter(|i| i.defective)
        .map(|i| i.score)
        .fold(None, |m: Option<f64>, s| Some(m.map_or(s, |m| m.min(s))))
        .ok_or(MetricError::NoPositives)?;
    Ok(set
        .items()
        .iter()
        .filter(|i| !i.defective && i.score >= min_pos)
        .count())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn set(scores: &[f64], labels: &[u8]) -> ScoredSet {
        let l: Vec<bool> = labels.iter().map(|v| *v == 1).collect();
        ScoredSet::from_pairs(scores, &l).unwrap()
    }

    #[test]
    fn hand_enumerated_curve() {
        let c = pr_curve(&set(&[0.9, 0.8, 0.4], &[1, 1, 0])).unwrap();
        let pts: Vec<(f64, f64)> = c.iter().map(|p| (p.recall, p.precision)).collect();
        assert_eq!(pts, vec![(0.5, 1.0), (1.0, 1.0), (1.0, 2.0 / 3.0)]);
    }

    #[test]
    fn ties_form_one_point() {
        let c = pr_curve(&set(&[0.3; 4], &[1, 0, 0, 0])).unwrap();
        assert_eq!(c.len(), 1);
        assert_eq!((c[0].recall, c[0].precision), (1.0, 0.25));
    }

    #[test]
    fn ap_examples() {
        assert_eq!(average_precision(&set(&[0.9, 0.2, 0.1], &[1, 0, 0])).unwrap(), 1.0);
        let ap = average_precision(&set(&[0.9, 0.5, 0.1], &[1, 0, 1])).unwrap();
        assert!((ap - (0.5 + 0.5 * 2.0 / 3.0)).abs() < 1e-15);
        assert_eq!(average_precision(&set(&[0.5], &[0])), Err(MetricError::NoPositives));
    }

    #[test]
    fn best_f_prefers_f1_then_higher_threshold() {
        let b = best_f_threshold(&set(&[0.9, 0.6, 0.4], &[1, 0, 1])).unwrap();
        assert_eq!((b.threshold, b.fp, b.fn_), (0.4, 1, 0));
        assert!((b.f1 - 0.8).abs() < 1e-15);
        let perfect = best_f_threshold(&set(&[0.9, 0.8, 0.1], &[1, 1, 0])).unwrap();
        assert_eq!((perfect.threshold, perfect.fp, perfect.fn_), (0.8, 0, 0));
        // F1 tie between thresholds 0.9 (tp1 fp0 fn1) and 0.5 (tp2 fp2 fn0): both 2/3
        let tie = best_f_threshold(&set(&[0.9, 0.7, 0.6, 0.5], &[1, 0, 0, 1])).unwrap();
        assert_eq!(tie.threshold, 0.9);
    }

    #[test]
    fn fp_at_full_recall_cases() {
        assert_eq!(fp_at_full_recall(&set(&[0.9, 0.8, 0.1], &[1, 1, 0])).unwrap(), 0);
        assert_eq!(
            fp_at_full_recall(&set(&[0.1, 0.8, 0.5, 0.9], &[1, 0, 0, 1])).unwrap(),
            2
        );
        assert_eq!(fp_at_full_recall(&set(&[0.5, 0.5], &[1, 0])).unwrap(), 1);
    }

    #[test]
    fn invalid_sets() {
        assert!(matches!(
            ScoredSet::from_pairs(&[f64::NAN], &[true]),
            Err(MetricError::NonFinite(_))
        ));
        let dup = vec![
            ScoredItem {
                image_id: "a".into(),
                score: 0.1,
                defective: true,
            };
            2
        ];
        assert!(matches!(ScoredSet::new(dup), Err(MetricError::DuplicateId(_))));
    }
}
