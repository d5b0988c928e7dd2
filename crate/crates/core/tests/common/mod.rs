//! Slow, direct reference implementations used as test oracles.
#![allow(dead_code)]

use std::collections::BTreeSet;

/// Fraction of positive/negative pairs ranked correctly; ties count one half.
pub fn brute_auc(scores: &[f64], positive: &[bool]) -> Option<f64> {
    let (mut wins, mut pairs) = (0.0, 0.0);
    for (i, &si) in scores.iter().enumerate() {
        for (j, &sj) in scores.iter().enumerate() {
            if positive[i] && !positive[j] {
                pairs += 1.0;
                if si > sj {
                    wins += 1.0;
                } else if si == sj {
                    wins += 0.5;
                }
            }
        }
    }
    (pairs > 0.0).then(|| wins / pairs)
}

/// Walks every distinct threshold from high to low and integrates precision over recall steps.
pub fn brute_aupr(scores: &[f64], positive: &[bool]) -> Option<f64> {
    let total = positive.iter().filter(|&&p| p).count() as f64;
    if total == 0.0 {
        return None;
    }
    let mut thresholds: Vec<f64> = scores.to_vec();
    thresholds.sort_by(|a, b| b.total_cmp(a));
    thresholds.dedup();
    let (mut ap, mut prev_recall) = (0.0, 0.0);
    for t in thresholds {
        let called: Vec<usize> = (0..scores.len()).filter(|&i| scores[i] >= t).collect();
        let tp = called.iter().filter(|&&i| positive[i]).count() as f64;
        let recall = tp / total;
        ap += (recall - prev_recall) * tp / called.len() as f64;
        prev_recall = recall;
    }
    Some(ap)
}

/// acc, micro AUPR, micro AUC, macro precision, recall, F1 by direct counting.
pub fn brute_metrics(probs: &[Vec<f64>], labels: &[usize]) -> [f64; 6] {
    let r = probs[0].len();
    let pred: Vec<usize> = probs
        .iter()
        .map(|row| {
            let best = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            row.iter().position(|&v| v == best).unwrap()
        })
        .collect();
    let acc = pred.iter().zip(labels).filter(|(p, y)| p == y).count() as f64 / labels.len() as f64;
    let flat: Vec<f64> = probs.iter().flatten().cloned().collect();
    let pos: Vec<bool> = labels.iter().flat_map(|&y| (0..r).map(move |c| c == y)).collect();
    let present: BTreeSet<usize> = labels.iter().cloned().collect();
    let (mut ps, mut rs, mut fs) = (0.0, 0.0, 0.0);
    for &c in &present {
        let tp = (0..labels.len()).filter(|&i| pred[i] == c && labels[i] == c).count() as f64;
        let fp = (0..labels.len()).filter(|&i| pred[i] == c && labels[i] != c).count() as f64;
        let fneg = (0..labels.len()).filter(|&i| pred[i] != c && labels[i] == c).count() as f64;
        let p = if tp + fp > 0.0 { tp / (tp + fp) } else { 0.0 };
        let rc = tp / (tp + fneg);
        ps += p;
        rs += rc;
        fs += if tp > 0.0 { 2.0 * tp / (2.0 * tp + fp + fneg) } else { 0.0 };
    }
    let n = present.len() as f64;
    [
        acc,
        brute_aupr(&flat, &pos).unwrap(),
        brute_auc(&flat, &pos).unwrap_or(1.0),
        ps / n,
        rs / n,
        fs / n,
    ]
}

/// Ten samples over three classes, with a tie and a class never predicted.
pub fn hand_table() -> (Vec<Vec<f64>>, Vec<usize>) {
    let probs = vec![
        vec![0.7, 0.2, 0.1],
        vec![0.6, 0.3, 0.1],
        vec![0.2, 0.5, 0.3],
        vec![0.1, 0.8, 0.1],
        vec![0.4, 0.4, 0.2],
        vec![0.3, 0.3, 0.4],
        vec![0.5, 0.1, 0.4],
        vec![0.2, 0.6, 0.2],
        vec![0.1, 0.2, 0.7],
        vec![0.6, 0.2, 0.2],
    ];
    let labels = vec![0, 1, 1, 1, 0, 2, 2, 0, 2, 0];
    (probs, labels)
}
