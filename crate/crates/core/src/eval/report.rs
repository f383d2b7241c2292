use std::io::Write;

use serde::{Deserialize, Serialize};

use super::metrics::{
    average_precision, best_f_threshold, fp_at_full_recall, pr_curve, MetricError, ScoredItem, ScoredSet,
};

/// Metric suite for one configuration.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub config: String,
    pub ap: f64,
    pub best_f_threshold: f64,
    pub best_f1: f64,
    pub fp: usize,
    #[serde(rename = "fn")]
    pub fn_: usize,
    pub fp_at_zero_miss: usize,
    pub positives: usize,
    pub negatives: usize,
    /// AP of each held-out fold on its own; `None` when a fold has no defective image.
    pub per_fold_ap: Vec<Option<f64>>,
    /// `(recall, precision)` in descending-threshold order.
    pub pr_points: Vec<(f64, f64)>,
    pub records: Vec<ScoredItem>,
}

impl EvalReport {
    pub fn from_scores(
        config: impl Into<String>,
        set: &ScoredSet,
        per_fold_ap: Vec<Option<f64>>,
    ) -> Result<Self, MetricError> {
        let best = best_f_threshold(set)?;
        Ok(Self {
            config: config.into(),
            ap: average_precision(set)?,
            best_f_threshold: best.threshold,
            best_f1: best.f1,
            fp: best.fp,
            fn_: best.fn_,
            fp_at_zero_miss: fp_at_full_recall(set)?,
            positives: set.positives(),
            negatives: set.negatives(),
            per_fold_ap,
            pr_points: pr_curve(set)?.iter().map(|p| (p.recall, p.precision)).collect(),
            records: set.items().to_vec(),
        })
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }

    pub fn write_pr_csv(&self, mut out: impl Write) -> std::io::Result<()> {
        writeln!(out, "recall,precision")?;
        for (r, p) in &self.pr_points {
            writeln!(out, "{r},{p}")?;
        }
        Ok(())
    }
}

pub const SUMMARY_HEADER: &str =
    "config,ap,best_f_threshold,best_f1,fp,fn,fp_at_zero_miss,positives,negatives,per_fold_ap";

/// One CSV row per report; per-fold APs are `;`-separated (`na` for a fold
/// without defects).
pub fn write_summary_csv(reports: &[EvalReport], mut out: impl Write) -> std::io::Result<()> {
    writeln!(out, "{SUMMARY_HEADER}")?;
    for r in reports {
        let folds: Vec<String> = r
            .per_fold_ap
            .iter()
            .map(|a| a.map_or_else(|| "na".to_string(), |v| format!("{v:.6}")))
            .collect();
        writeln!(
            out,
            "{},{:.6},{},{:.6},{},{},{},{},{},{}",
            r.config,
            r.ap,
            r.best_f_threshold,
            r.best_f1,
            r.fp,
            r.fn_,
            r.fp_at_zero_miss,
            r.positives,
            r.negatives,
            folds.join(";")
        )?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn perfect_scores_report() {
        let s = ScoredSet::from_pairs(&[0.95, 0.9, 0.2, 0.1], &[true, true, false, false]).unwrap();
        let r = EvalReport::from_scores("x", &s, vec![Some(1.0)]).unwrap();
        assert_eq!((r.ap, r.fp, r.fn_, r.fp_at_zero_miss), (1.0, 0, 0, 0));
        let back: EvalReport = serde_json::from_str(&r.to_json()).unwrap();
        assert_eq!(back, r);
        let mut csv = Vec::new();
        write_summary_csv(&[r], &mut csv).unwrap();
        let text = String::from_utf8(csv).unwrap();
        assert!(text.lines().nth(1).unwrap().starts_with("x,1.000000,"));
    }
}
