use serde::{Deserialize, Serialize};

use crate::corpus::Label;
use crate::error::{Error, Result};

/// Scores at or above this value are predicted incivil.
pub const THRESHOLD: f64 = 0.5;

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Confusion {
    pub tp: usize,
    pub fp: usize,
    pub tn: usize,
    #[serde(rename = "fn")]
    pub fn_: usize,
}

impl Confusion {
    pub fn total(&self) -> usize {
        self.tp + self.fp + self.tn + self.fn_
    }

    /// F1 of the positive class; zero when there are no true positives.
    pub fn f1(&self) -> f64 {
        if self.tp == 0 {
            return 0.0;
        }
        2.0 * self.tp as f64 / (2 * self.tp + self.fp + self.fn_) as f64
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub n: usize,
    pub accuracy: f64,
    pub f1_positive: f64,
    /// Absent when only one class occurs in the labels.
    pub roc_auc: Option<f64>,
    pub confusion: Confusion,
}

/// Area under the ROC curve via the Mann-Whitney statistic with mid-ranks,
/// so ties count one half. `None` for a single-class label set.
pub fn roc_auc(scores: &[f64], positive: &[bool]) -> Option<f64> {
    let n_pos = positive.iter().filter(|&&p| p).count();
    let n_neg = positive.len() - n_pos;
    if n_pos == 0 || n_neg == 0 {
        return None;
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[a].total_cmp(&scores[b]));
    let mut rank_sum = 0.0;
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && scores[order[j + 1]] == scores[order[i]] {
            j += 1;
        }
        // ranks i+1 ..= j+1 share their mean
        let mid = (i + j + 2) as f64 / 2.0;
        rank_sum += mid * order[i..=j].iter().filter(|&&k| positive[k]).count() as f64;
        i = j + 1;
    }
    let u = rank_sum - (n_pos * (n_pos + 1)) as f64 / 2.0;
    Some(u / (n_pos * n_neg) as f64)
}

pub fn evaluate(scores: &[f64], labels: &[Label]) -> Result<EvalReport> {
    if scores.is_empty() {
        return Err(Error::Empty("evaluation set".into()));
    }
    if scores.len() != labels.len() {
        return Err(Error::Shape(format!(
            "{} scores for {} labels",
            scores.len(),
            labels.len()
        )));
    }
    if scores.iter().any(|s| !s.is_finite()) {
        return Err(Error::InvalidArgument("non-finite score".into()));
    }
    let positive: Vec<bool> = labels.iter().map(|l| l.is_incivil()).collect();
    let mut c = Confusion::default();
    for (&s, &p) in scores.iter().zip(&positive) {
        match (s >= THRESHOLD, p) {
            (true, true) => c.tp += 1,
            (true, false) => c.fp += 1,
            (false, false) => c.tn += 1,
            (false, true) => c.fn_ += 1,
        }
    }
    Ok(EvalReport {
        n: scores.len(),
        accuracy: (c.tp + c.tn) as f64 / scores.len() as f64,
        f1_positive: c.f1(),
        roc_auc: roc_auc(scores, &positive),
        confusion: c,
    })
}
