use ndarray::{Array1, Array2, ArrayView1};

use crate::data::{Dataset, Schema, SensitiveSpec, Standardizer};
use crate::error::{Error, Result};
use crate::graph::{pairwise_kernel, KernelParams, SimilarityMatrix};
use crate::metrics::{auc, fnr, fpr, pair_counts, prediction_consistency, FairnessGainReport, PairCounts, PairSelection};
use crate::model::{fit_variant, forward, ModelParams, TrainConfig, Variant, VariantFit};
use crate::reweight::ReweightVector;

/// Metric column names in report order.
pub fn metric_names(specs: &[SensitiveSpec], with_fairness_gain: bool) -> Vec<String> {
    let mut names: Vec<String> = ["AUC", "FNR", "FPR"].map(String::from).to_vec();
    if with_fairness_gain {
        names.extend(["FG", "NFG"].map(String::from));
    }
    names.extend(specs.iter().map(|s| format!("PC_{}", s.name())));
    if with_fairness_gain {
        names.extend(["FG_mixed", "NFG_mixed"].map(String::from));
    }
    names
}

/// Picks the named sensitive declarations, or all of them for an empty list.
pub fn select_specs(schema: &Schema, dataset: &Dataset, names: &[String]) -> Result<Vec<SensitiveSpec>> {
    let all = schema.sensitive_specs(dataset)?;
    if names.is_empty() {
        return Ok(all);
    }
    names
        .iter()
        .map(|n| {
            all.iter()
                .find(|s| s.name() == n)
                .cloned()
                .ok_or_else(|| Error::Config(format!("schema declares no sensitive attribute '{n}'")))
        })
        .collect()
}

/// Z-scores `columns` of both partitions with statistics of `fit_on`.
pub fn standardize_pair(fit_on: &Dataset, other: &Dataset, columns: &[usize]) -> Result<(Dataset, Dataset)> {
    if columns.is_empty() {
        return Ok((fit_on.clone(), other.clone()));
    }
    let z = Standardizer::fit(fit_on, columns)?;
    Ok((z.apply(fit_on)?, z.apply(other)?))
}

/// Fits `variant` at `alpha = 0` with no fine-tuning stage: the baseline a
/// regularized model's fairness gain is normalized against.
pub fn fit_counterpart(
    variant: Variant,
    source: &Dataset,
    target: &Dataset,
    weights: &ReweightVector,
    config: &TrainConfig,
    kernel: &KernelParams,
) -> Result<VariantFit> {
    let target = match variant {
        Variant::Ifda => Some(target),
        Variant::Lr | Variant::Ifrt => None,
    };
    fit_variant(variant, source, target, weights, &config.with_alpha(0.0), kernel)
}

/// An evaluation partition with its kernel and design matrix built once.
pub struct EvalSet<'a> {
    data: &'a Dataset,
    design: Array2<f64>,
    kernel: SimilarityMatrix,
    specs: &'a [SensitiveSpec],
    selection: PairSelection,
}

impl<'a> EvalSet<'a> {
    pub fn new(
        data: &'a Dataset,
        specs: &'a [SensitiveSpec],
        kernel: &KernelParams,
        selection: PairSelection,
    ) -> Result<Self> {
        Ok(EvalSet {
            data,
            design: data.design_matrix(),
            kernel: pairwise_kernel(data.features(), kernel)?,
            specs,
            selection,
        })
    }

    pub fn predictions(&self, theta: ArrayView1<'_, f64>) -> Result<(Array1<f64>, Array1<f64>)> {
        let p = forward(self.design.view(), theta)?;
        let labels = p.mapv(|v| if v >= 0.5 { 1.0 } else { 0.0 });
        Ok((p, labels))
    }

    pub fn pair_counts(&self, theta: ArrayView1<'_, f64>) -> Result<PairCounts> {
        let (_, labels) = self.predictions(theta)?;
        pair_counts(labels.view(), self.data.labels(), &self.kernel, &self.selection)
    }

    /// Scores aligned with [`metric_names`]. Fairness-gain entries are `None`
    /// when no baseline counts are given.
    pub fn scores(&self, model: &ModelParams, baseline: Option<PairCounts>, with_fairness_gain: bool) -> Result<Vec<Option<f64>>> {
        let (p, labels) = self.predictions(model.theta.view())?;
        let y = self.data.labels();
        let mut out = vec![
            Some(auc(p.view(), y)?),
            Some(fnr(labels.view(), y)?),
            Some(fpr(labels.view(), y)?),
        ];
        let report = match baseline {
            Some(zero) => {
                let counts = pair_counts(labels.view(), y, &self.kernel, &self.selection)?;
                Some(FairnessGainReport::from_counts(counts, zero))
            }
            None => None,
        };
        let global = report.map(|r| r.over_selected());
        if with_fairness_gain {
            out.push(global.map(|g| g.0));
            out.push(global.map(|g| g.1));
        }
        for spec in self.specs {
            out.push(Some(prediction_consistency(model, self.data, spec)?));
        }
        if with_fairness_gain {
            out.push(report.map(|r| r.i_alpha));
            out.push(report.map(|r| r.nfg));
        }
        Ok(out)
    }
}
