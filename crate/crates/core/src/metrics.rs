//! Classification metrics, prediction consistency and the fairness gain
//! scores.

use ndarray::ArrayView1;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::{perturb_sensitive, Dataset, SensitiveSpec};
use crate::error::{Error, Result};
use crate::graph::SimilarityMatrix;
use crate::model::{predict_labels, ModelParams};

fn check_lengths(a: usize, b: usize) -> Result<()> {
    if a != b {
        return Err(Error::Dimension(format!("{a} predictions for {b} labels")));
    }
    Ok(())
}

/// Area under the ROC curve from the Mann–Whitney statistic, with tied
/// scores contributing one half.
pub fn auc(probabilities: ArrayView1<'_, f64>, labels: ArrayView1<'_, f64>) -> Result<f64> {
    check_lengths(probabilities.len(), labels.len())?;
    let n = labels.len();
    let n_pos = labels.iter().filter(|&&y| y == 1.0).count();
    let n_neg = n - n_pos;
    if n_pos == 0 || n_neg == 0 {
        return Err(Error::Undefined("AUC needs both classes".into()));
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| probabilities[a].total_cmp(&probabilities[b]));
    let mut rank_sum_pos = 0.0;
    let mut start = 0;
    while start < n {
        let mut end = start + 1;
        while end < n && probabilities[order[end]] == probabilities[order[start]] {
            end += 1;
        }
        // ranks start+1 ..= end share their average
        let mid_rank = (start + 1 + end) as f64 / 2.0;
        let pos_in_block = order[start..end].iter().filter(|&&i| labels[i] == 1.0).count();
        rank_sum_pos += mid_rank * pos_in_block as f64;
        start = end;
    }
    let u = rank_sum_pos - (n_pos * (n_pos + 1)) as f64 / 2.0;
    Ok(u / (n_pos as f64 * n_neg as f64))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct Confusion {
    pub tp: usize,
    pub fp: usize,
    pub tn: usize,
    pub fn_: usize,
}

pub fn confusion(predicted: ArrayView1<'_, f64>, labels: ArrayView1<'_, f64>) -> Result<Confusion> {
    check_lengths(predicted.len(), labels.len())?;
    let mut c = Confusion::default();
    for (&p, &y) in predicted.iter().zip(labels) {
        match (p == 1.0, y == 1.0) {
            (true, true) => c.tp += 1,
            (true, false) => c.fp += 1,
            (false, false) => c.tn += 1,
            (false, true) => c.fn_ += 1,
        }
    }
    Ok(c)
}

/// `FN / (FN + TP)`; undefined without positives.
pub fn fnr(predicted: ArrayView1<'_, f64>, labels: ArrayView1<'_, f64>) -> Result<f64> {
    let c = confusion(predicted, labels)?;
    if c.fn_ + c.tp == 0 {
        return Err(Error::Undefined("FNR without positive labels".into()));
    }
    Ok(c.fn_ as f64 / (c.fn_ + c.tp) as f64)
}

/// `FP / (FP + TN)`; undefined without negatives.
pub fn fpr(predicted: ArrayView1<'_, f64>, labels: ArrayView1<'_, f64>) -> Result<f64> {
    let c = confusion(predicted, labels)?;
    if c.fp + c.tn == 0 {
        return Err(Error::Undefined("FPR without negative labels".into()));
    }
    Ok(c.fp as f64 / (c.fp + c.tn) as f64)
}

/// Fraction of rows whose predicted label survives the sensitive swap.
pub fn prediction_consistency(
    model: &ModelParams,
    dataset: &Dataset,
    spec: &SensitiveSpec,
) -> Result<f64> {
    let original = predict_labels(model, dataset.design_matrix().view())?;
    let swapped = perturb_sensitive(dataset, spec)?;
    let perturbed = predict_labels(model, swapped.design_matrix().view())?;
    let same = original.iter().zip(&perturbed).filter(|(a, b)| a == b).count();
    Ok(same as f64 / dataset.n() as f64)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SelectionMode {
    /// Pairs with `K_ij <= sigma`.
    #[default]
    AtMost,
    /// Pairs with `K_ij >= sigma`.
    AtLeast,
}

/// Which unordered pairs enter the fairness gain.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PairSelection {
    pub sigma: f64,
    pub mode: SelectionMode,
}

impl Default for PairSelection {
    fn default() -> Self {
        PairSelection {
            sigma: 1.0,
            mode: SelectionMode::AtMost,
        }
    }
}

impl PairSelection {
    pub fn validate(&self) -> Result<()> {
        if !(self.sigma > 0.0 && self.sigma <= 1.0) {
            return Err(Error::Config(format!("sigma must lie in (0, 1], got {}", self.sigma)));
        }
        Ok(())
    }

    pub fn selects(&self, k: f64) -> bool {
        match self.mode {
            SelectionMode::AtMost => k <= self.sigma,
            SelectionMode::AtLeast => k >= self.sigma,
        }
    }
}

/// Pair counts behind one fairness gain score.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct PairCounts {
    /// Pairs passing the similarity predicate.
    pub selected: u64,
    /// Selected pairs with different true labels.
    pub eligible: u64,
    /// Eligible pairs with equal predicted labels.
    pub gained: u64,
}

impl PairCounts {
    /// `gained / eligible`, or 0 when no pair is eligible.
    pub fn score(&self) -> f64 {
        if self.eligible == 0 {
            0.0
        } else {
            self.gained as f64 / self.eligible as f64
        }
    }

    /// `gained / selected`: the same numerator over every selected pair.
    pub fn score_over_selected(&self) -> f64 {
        if self.selected == 0 {
            0.0
        } else {
            self.gained as f64 / self.selected as f64
        }
    }

    pub fn is_degenerate(&self) -> bool {
        self.eligible == 0
    }
}

/// Counts pairs `i < j` over the upper triangle of `k`.
pub fn pair_counts(
    predicted: ArrayView1<'_, f64>,
    labels: ArrayView1<'_, f64>,
    k: &SimilarityMatrix,
    selection: &PairSelection,
) -> Result<PairCounts> {
    check_lengths(predicted.len(), labels.len())?;
    if k.n() != labels.len() {
        return Err(Error::Dimension(format!(
            "{}-node kernel for {} rows",
            k.n(),
            labels.len()
        )));
    }
    let n = labels.len();
    let km = k.matrix();
    let row = |i: usize| {
        let mut c = PairCounts::default();
        for j in (i + 1)..n {
            if !selection.selects(km[[i, j]]) {
                continue;
            }
            c.selected += 1;
            if labels[i] != labels[j] {
                c.eligible += 1;
                if predicted[i] == predicted[j] {
                    c.gained += 1;
                }
            }
        }
        c
    };
    let sum = |a: PairCounts, b: PairCounts| PairCounts {
        selected: a.selected + b.selected,
        eligible: a.eligible + b.eligible,
        gained: a.gained + b.gained,
    };
    Ok((0..n).into_par_iter().map(row).reduce(PairCounts::default, sum))
}

/// Fairness gain of one model: among selected pairs with different true
/// labels, the fraction predicted alike.
pub fn fairness_gain(
    model: &ModelParams,
    dataset: &Dataset,
    k: &SimilarityMatrix,
    selection: &PairSelection,
) -> Result<PairCounts> {
    let predicted = predict_labels(model, dataset.design_matrix().view())?;
    pair_counts(predicted.view(), dataset.labels(), k, selection)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FairnessGainReport {
    pub i_alpha: f64,
    pub i_zero: f64,
    pub nfg: f64,
    pub eligible_pairs: u64,
    pub gained_pairs: u64,
    pub selected_pairs: u64,
    pub zero_gained_pairs: u64,
    /// `nfg > 0`.
    pub enforces_fairness: bool,
    /// No eligible pair; both scores were set to 0.
    pub degenerate: bool,
}

impl FairnessGainReport {
    pub fn from_counts(alpha: PairCounts, zero: PairCounts) -> Self {
        let i_alpha = alpha.score();
        let i_zero = zero.score();
        let nfg = i_alpha - i_zero;
        FairnessGainReport {
            i_alpha,
            i_zero,
            nfg,
            eligible_pairs: alpha.eligible,
            gained_pairs: alpha.gained,
            selected_pairs: alpha.selected,
            zero_gained_pairs: zero.gained,
            enforces_fairness: nfg > 0.0,
            degenerate: alpha.is_degenerate(),
        }
    }

    /// Both scores taken over every selected pair instead of the eligible ones.
    pub fn over_selected(&self) -> (f64, f64) {
        if self.selected_pairs == 0 {
            return (0.0, 0.0);
        }
        let s = self.selected_pairs as f64;
        let fg = self.gained_pairs as f64 / s;
        (fg, fg - self.zero_gained_pairs as f64 / s)
    }
}

/// Gain of the regularized model minus that of its unregularized counterpart.
pub fn normalized_fairness_gain(
    model_alpha: &ModelParams,
    model_zero: &ModelParams,
    dataset: &Dataset,
    k: &SimilarityMatrix,
    selection: &PairSelection,
) -> Result<FairnessGainReport> {
    let alpha = fairness_gain(model_alpha, dataset, k, selection)?;
    let zero = fairness_gain(model_zero, dataset, k, selection)?;
    Ok(FairnessGainReport::from_counts(alpha, zero))
}
