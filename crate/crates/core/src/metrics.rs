//! Classifier and link quality metrics.

use std::cmp::Ordering;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::codec::{encode_packet, LineCodeConfig, Payload};
use crate::decoder::{DecodeReport, DecodeStatus};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum MetricsError {
    #[error("scores and labels differ in length ({scores} vs {labels})")]
    LengthMismatch { scores: usize, labels: usize },
    #[error("both classes must be present (positives: {positives}, negatives: {negatives})")]
    DegenerateLabels { positives: usize, negatives: usize },
    #[error("no samples")]
    EmptyInput,
    #[error("score at index {0} is not a finite number")]
    NonFinite(usize),
}

fn check_inputs(scores: &[f64], labels: &[bool]) -> Result<(), MetricsError> {
    if scores.len() != labels.len() {
        return Err(MetricsError::LengthMismatch {
            scores: scores.len(),
            labels: labels.len(),
        });
    }
    if let Some(i) = scores.iter().position(|s| !s.is_finite()) {
        return Err(MetricsError::NonFinite(i));
    }
    Ok(())
}

/// A threshold-swept ROC curve and its area.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RocCurve {
    /// `(false_positive_rate, true_positive_rate)` from `(0, 0)` to `(1, 1)`.
    pub points: Vec<(f64, f64)>,
    pub auc: f64,
}

impl RocCurve {
    /// Trapezoidal area under `points`. Agrees with `auc` up to rounding.
    pub fn trapezoid_area(&self) -> f64 {
        self.points
            .windows(2)
            .map(|w| (w[1].0 - w[0].0) * (w[1].1 + w[0].1) / 2.0)
            .sum()
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("fpr,tpr\n");
        for (fpr, tpr) in &self.points {
            out.push_str(&format!("{fpr},{tpr}\n"));
        }
        out
    }
}

/// Exact ROC AUC, equal to the Mann-Whitney U statistic with ties given half
/// credit, divided by `positives * negatives`.
///
/// The statistic is accumulated in integer half-units from mid-ranks, so the
/// returned area is exact up to the final division.
pub fn roc_auc(scores: &[f64], labels: &[bool]) -> Result<RocCurve, MetricsError> {
    check_inputs(scores, labels)?;
    let positives = labels.iter().filter(|&&l| l).count();
    let negatives = labels.len() - positives;
    if positives == 0 || negatives == 0 {
        return Err(MetricsError::DegenerateLabels {
            positives,
            negatives,
        });
    }

    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[a].total_cmp(&scores[b]));

    // Tie groups in ascending score order, as (positives, negatives).
    let mut groups: Vec<(u64, u64)> = Vec::new();
    let mut prev: Option<f64> = None;
    for &i in &order {
        if prev.is_none_or(|p| p.partial_cmp(&scores[i]) != Some(Ordering::Equal)) {
            groups.push((0, 0));
            prev = Some(scores[i]);
        }
        let g = groups.last_mut().expect("group pushed above");
        if labels[i] {
            g.0 += 1;
        } else {
            g.1 += 1;
        }
    }

    // Twice the positive rank sum, using mid-ranks for ties.
    let mut twice_rank_sum: u128 = 0;
    let mut next_rank: u128 = 1;
    for &(pos, neg) in &groups {
        let size = (pos + neg) as u128;
        let twice_mid = 2 * next_rank + size - 1;
        twice_rank_sum += pos as u128 * twice_mid;
        next_rank += size;
    }
    let p = positives as u128;
    let twice_u = twice_rank_sum - p * (p + 1);
    let auc = twice_u as f64 / (2 * p * negatives as u128) as f64;

    let mut points = Vec::with_capacity(groups.len() + 1);
    points.push((0.0, 0.0));
    let (mut tp, mut fp) = (0u64, 0u64);
    for &(pos, neg) in groups.iter().rev() {
        tp += pos;
        fp += neg;
        points.push((fp as f64 / negatives as f64, tp as f64 / positives as f64));
    }
    Ok(RocCurve { points, auc })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct ConfusionMatrix {
    pub tp: u64,
    pub fp: u64,
    pub tn: u64,
    #[serde(rename = "fn")]
    pub fn_: u64,
}

impl ConfusionMatrix {
    pub fn total(&self) -> u64 {
        self.tp + self.fp + self.tn + self.fn_
    }

    pub fn accuracy(&self) -> f64 {
        (self.tp + self.tn) as f64 / self.total() as f64
    }
}

/// Accuracy of the predictions `score >= threshold`.
pub fn accuracy_at(
    scores: &[f64],
    labels: &[bool],
    threshold: f64,
) -> Result<(f64, ConfusionMatrix), MetricsError> {
    check_inputs(scores, labels)?;
    if scores.is_empty() {
        return Err(MetricsError::EmptyInput);
    }
    let mut cm = ConfusionMatrix::default();
    for (&s, &l) in scores.iter().zip(labels) {
        match (s >= threshold, l) {
            (true, true) => cm.tp += 1,
            (true, false) => cm.fp += 1,
            (false, false) => cm.tn += 1,
            (false, true) => cm.fn_ += 1,
        }
    }
    Ok((cm.accuracy(), cm))
}

/// Bit and message error counts of a decoding run.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct LinkStats {
    pub bit_errors: u64,
    pub bits_total: u64,
    pub messages_ok: u64,
    pub messages_total: u64,
    pub ber: f64,
    pub message_success_rate: f64,
}

impl LinkStats {
    pub fn from_counts(bit_errors: u64, bits_total: u64, messages_ok: u64, messages_total: u64) -> Self {
        let ratio = |a: u64, b: u64| if b == 0 { 0.0 } else { a as f64 / b as f64 };
        LinkStats {
            bit_errors,
            bits_total,
            messages_ok,
            messages_total,
            ber: ratio(bit_errors, bits_total),
            message_success_rate: ratio(messages_ok, messages_total),
        }
    }

    pub fn merge(&self, other: &LinkStats) -> LinkStats {
        LinkStats::from_counts(
            self.bit_errors + other.bit_errors,
            self.bits_total + other.bits_total,
            self.messages_ok + other.messages_ok,
            self.messages_total + other.messages_total,
        )
    }
}

/// Scores decoded reports against the sent payloads.
///
/// Report `i` is matched with sent message `i`. Bit errors are counted only
/// for reports that carry a full set of bit decisions.
pub fn link_stats(sent: &[Payload], reports: &[DecodeReport], line_code: &LineCodeConfig) -> LinkStats {
    let mut bit_errors = 0;
    let mut bits_total = 0;
    let mut messages_ok = 0;
    for (&payload, report) in sent.iter().zip(reports) {
        if report.status == DecodeStatus::Ok && report.payload == Some(payload) {
            messages_ok += 1;
        }
        let expected = encode_packet(payload, line_code);
        if report.bits.len() == expected.bits().len() {
            bits_total += report.bits.len() as u64;
            bit_errors += expected
                .bits()
                .iter()
                .zip(&report.bits)
                .filter(|(e, d)| **e != d.value)
                .count() as u64;
        }
    }
    LinkStats::from_counts(bit_errors, bits_total, messages_ok, sent.len() as u64)
}
