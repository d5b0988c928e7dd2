use std::fmt::Write as _;

use crate::autodiff::Tensor;
use crate::error::{Error, Result};

/// One-vs-rest curve summaries for a single event type.
#[derive(Clone, Debug, PartialEq)]
pub struct EventMetrics {
    pub support: usize,
    /// `None` when the event has no positive samples.
    pub aupr: Option<f64>,
    /// `None` when the event has no positive or no negative samples.
    pub auc: Option<f64>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct MetricsReport {
    pub acc: f64,
    pub aupr: f64,
    pub auc: f64,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub per_event: Vec<EventMetrics>,
    pub warnings: Vec<String>,
}

/// Area under the ROC curve from the Mann-Whitney statistic; ties count one half.
pub fn roc_auc(scores: &[f64], positive: &[bool]) -> Option<f64> {
    let n_pos = positive.iter().filter(|&&p| p).count();
    let n_neg = positive.len() - n_pos;
    if n_pos == 0 || n_neg == 0 {
        return None;
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[a].total_cmp(&scores[b]));
    let mut rank_sum = 0.0;
    let mut start = 0;
    while start < order.len() {
        let mut end = start;
        while end + 1 < order.len() && scores[order[end + 1]] == scores[order[start]] {
            end += 1;
        }
        let avg_rank = (start + end) as f64 / 2.0 + 1.0;
        for &i in &order[start..=end] {
            if positive[i] {
                rank_sum += avg_rank;
            }
        }
        start = end + 1;
    }
    let u = rank_sum - (n_pos * (n_pos + 1)) as f64 / 2.0;
    Some(u / (n_pos as f64 * n_neg as f64))
}

/// Average precision: precision at each distinct score threshold weighted by the recall gained there.
pub fn average_precision(scores: &[f64], positive: &[bool]) -> Option<f64> {
    let n_pos = positive.iter().filter(|&&p| p).count();
    if n_pos == 0 {
        return None;
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]));
    let (mut tp, mut seen, mut ap) = (0usize, 0usize, 0.0);
    let mut start = 0;
    while start < order.len() {
        let mut end = start;
        while end + 1 < order.len() && scores[order[end + 1]] == scores[order[start]] {
            end += 1;
        }
        let gained = order[start..=end].iter().filter(|&&i| positive[i]).count();
        tp += gained;
        seen += end - start + 1;
        if gained > 0 {
            ap += (gained as f64 / n_pos as f64) * (tp as f64 / seen as f64);
        }
        start = end + 1;
    }
    Some(ap)
}

/// Index of the largest entry; ties resolve to the lowest index.
pub fn argmax(row: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in row.iter().enumerate() {
        if v > row[best] {
            best = i;
        }
    }
    best
}

pub fn compute_metrics(probs: &Tensor, labels: &[usize]) -> Result<MetricsReport> {
    let (k, r) = probs.dims2()?;
    if k != labels.len() {
        return Err(Error::shape(format!("{k} prediction rows but {} labels", labels.len())));
    }
    if k == 0 {
        return Err(Error::contract("cannot score an empty prediction set"));
    }
    if let Some(&bad) = labels.iter().find(|&&y| y >= r) {
        return Err(Error::data(format!("label {bad} outside 0..{r}")));
    }
    let mut warnings = Vec::new();
    let predicted: Vec<usize> = (0..k).map(|i| argmax(probs.row(i))).collect();
    let acc = predicted.iter().zip(labels).filter(|(p, y)| p == y).count() as f64 / k as f64;

    let flat_pos: Vec<bool> = (0..k).flat_map(|i| (0..r).map(move |c| labels[i] == c)).collect();
    let auc = roc_auc(probs.data(), &flat_pos).unwrap_or_else(|| {
        warnings.push("micro AUC undefined (one class in the flattened labels); reported as 1".into());
        1.0
    });
    let aupr = average_precision(probs.data(), &flat_pos).expect("every row has a positive entry");

    let mut per_event = Vec::with_capacity(r);
    let (mut p_sum, mut r_sum, mut f_sum, mut present) = (0.0, 0.0, 0.0, 0usize);
    for c in 0..r {
        let column: Vec<f64> = (0..k).map(|i| probs.at(i, c)).collect();
        let is_c: Vec<bool> = labels.iter().map(|&y| y == c).collect();
        let support = is_c.iter().filter(|&&b| b).count();
        per_event.push(EventMetrics {
            support,
            aupr: average_precision(&column, &is_c),
            auc: roc_auc(&column, &is_c),
        });
        if support == 0 {
            continue;
        }
        present += 1;
        let tp = (0..k).filter(|&i| predicted[i] == c && labels[i] == c).count() as f64;
        let pred_c = predicted.iter().filter(|&&p| p == c).count() as f64;
        let precision = if pred_c > 0.0 { tp / pred_c } else { 0.0 };
        let recall = tp / support as f64;
        let f1 = if precision + recall > 0.0 {
            2.0 * precision * recall / (precision + recall)
        } else {
            0.0
        };
        p_sum += precision;
        r_sum += recall;
        f_sum += f1;
    }
    if present == 1 {
        warnings.push("labels contain a single event type; per-event AUC is undefined".into());
    }
    let n = present as f64;
    Ok(MetricsReport {
        acc,
        aupr,
        auc,
        precision: p_sum / n,
        recall: r_sum / n,
        f1: f_sum / n,
        per_event,
        warnings,
    })
}

fn opt(v: Option<f64>) -> String {
    v.map_or_else(|| "NA".to_string(), |x| x.to_string())
}

impl MetricsReport {
    pub const KEYS: [&'static str; 6] = ["acc", "aupr", "auc", "precision", "recall", "f1"];

    pub fn values(&self) -> [f64; 6] {
        [self.acc, self.aupr, self.auc, self.precision, self.recall, self.f1]
    }

    /// `key=value` lines for the six headline metrics, then a per-event table.
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        for (k, v) in Self::KEYS.iter().zip(self.values()) {
            let _ = writeln!(s, "{k}={v}");
        }
        for w in &self.warnings {
            let _ = writeln!(s, "# warning: {w}");
        }
        let _ = writeln!(s, "# event\tsupport\taupr\tauc");
        for (c, e) in self.per_event.iter().enumerate() {
            let _ = writeln!(s, "# {c}\t{}\t{}\t{}", e.support, opt(e.aupr), opt(e.auc));
        }
        s
    }

    pub fn summary(&self) -> String {
        Self::KEYS
            .iter()
            .zip(self.values())
            .map(|(k, v)| format!("{k}={v:.4}"))
            .collect::<Vec<_>>()
            .join(" ")
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn two_sample_binary_cases() {
        assert_eq!(roc_auc(&[0.9, 0.1], &[true, false]), Some(1.0));
        assert_eq!(average_precision(&[0.9, 0.1], &[true, false]), Some(1.0));
        assert_eq!(roc_auc(&[0.1, 0.9], &[true, false]), Some(0.0));
        assert_eq!(roc_auc(&[0.5, 0.5], &[true, false]), Some(0.5));
        assert_eq!(roc_auc(&[0.5], &[true]), None);
    }

    #[test]
    fn perfect_predictions_score_one() {
        let labels = [0, 1, 2, 1];
        let mut p = Tensor::zeros(&[4, 3]);
        for (i, &y) in labels.iter().enumerate() {
            p.set(i, y, 1.0);
        }
        let m = compute_metrics(&p, &labels).unwrap();
        assert_eq!(m.values(), [1.0; 6]);
    }

    #[test]
    fn uniform_predictions_are_chance() {
        let p = Tensor::full(&[4, 2], 0.5);
        let m = compute_metrics(&p, &[0, 1, 0, 1]).unwrap();
        assert_eq!(m.acc, 0.5);
        assert_eq!(m.auc, 0.5);
    }

    #[test]
    fn macro_scores_skip_absent_classes() {
        let p = Tensor::from_rows(&[vec![0.8, 0.1, 0.1], vec![0.6, 0.3, 0.1], vec![0.2, 0.7, 0.1]]).unwrap();
        let m = compute_metrics(&p, &[0, 1, 1]).unwrap();
        // class 0: P 1/2, R 1, F1 2/3; class 1: P 1, R 1/2, F1 2/3
        assert!((m.precision - 0.75).abs() < 1e-15);
        assert!((m.recall - 0.75).abs() < 1e-15);
        assert!((m.f1 - 2.0 / 3.0).abs() < 1e-15);
        assert_eq!(m.per_event[2].auc, None);
        assert_eq!(m.per_event[2].aupr, None);
    }

    #[test]
    fn single_class_labels_warn() {
        let p = Tensor::from_rows(&[vec![0.8, 0.2], vec![0.6, 0.4]]).unwrap();
        let m = compute_metrics(&p, &[0, 0]).unwrap();
        assert!(!m.warnings.is_empty());
        let p = Tensor::from_rows(&[vec![1.0], vec![1.0]]).unwrap();
        let m = compute_metrics(&p, &[0, 0]).unwrap();
        assert_eq!(m.auc, 1.0);
    }

    #[test]
    fn report_lists_the_six_keys() {
        let p = Tensor::full(&[2, 2], 0.5);
        let text = compute_metrics(&p, &[0, 1]).unwrap().to_text();
        let keys: Vec<&str> = text
            .lines()
            .filter(|l| !l.starts_with('#'))
            .map(|l| l.split('=').next().unwrap())
            .collect();
        assert_eq!(keys, MetricsReport::KEYS);
    }
}
