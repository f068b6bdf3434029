use rayon::prelude::*;

use super::config::{ExperimentConfig, ExperimentKind};
use super::evaluate::{fit_counterpart, metric_names, select_specs, standardize_pair, EvalSet};
use super::report::{compare_models, Diagnostic, ExperimentReport, FoldRecord};
use crate::data::{load_csv, stratified_kfold, Dataset, Schema, SensitiveSpec};
use crate::error::{Error, Result};
use crate::model::{fit_variant, History, VariantFit};
use crate::reweight::uniform_weights;

struct FoldOutcome {
    records: Vec<FoldRecord>,
    diagnostics: Vec<Diagnostic>,
}

/// Stratified k-fold cross-validation of every configured variant.
///
/// Each fold standardizes on its training rows, trains with uniform weights
/// and scores on the validation rows. IFDA sees the validation features at
/// train time and IFRT fine-tunes on them; neither sees their labels.
pub fn run_iid_experiment(config: &ExperimentConfig) -> Result<ExperimentReport> {
    if config.kind != ExperimentKind::IidCv {
        return Err(Error::Config(format!("expected an iid_cv config, got {}", config.kind)));
    }
    config.validate()?;
    let schema = Schema::from_file(&config.schema)?;
    let data = load_csv(&config.dataset, &schema)?;
    let specs = select_specs(&schema, &data, &config.sensitive)?;
    let continuous = if config.standardize { schema.continuous_indices(&data)? } else { Vec::new() };
    let folds = stratified_kfold(&data, config.folds, config.train.seed)?;
    let with_fg = config.variants.iter().any(|v| v.is_regularized());
    let metrics = metric_names(&specs, with_fg);

    let outcomes = (0..config.folds)
        .into_par_iter()
        .map(|f| {
            let train = data.subset(&folds.train_indices(f))?;
            let valid = data.subset(&folds.validation_indices(f))?;
            run_fold(f, &train, &valid, &continuous, &specs, &metrics, config)
                .map_err(|e| e.in_stage(format!("fold {f}")))
        })
        .collect::<Result<Vec<_>>>()?;

    let mut records = Vec::new();
    for &model in &config.variants {
        for o in &outcomes {
            records.extend(o.records.iter().filter(|r| r.model == model).cloned());
        }
    }
    let diagnostics = outcomes.into_iter().flat_map(|o| o.diagnostics).collect();
    let (anova, tukey) = compare_models(&records, &config.variants, &metrics, config)?;
    Ok(ExperimentReport {
        config: config.clone(),
        metrics,
        records,
        anova,
        tukey,
        traces: Vec::new(),
        diagnostics,
        folds: Some(folds),
        weights: None,
    })
}

fn run_fold(
    fold: usize,
    train: &Dataset,
    valid: &Dataset,
    continuous: &[usize],
    specs: &[SensitiveSpec],
    metrics: &[String],
    config: &ExperimentConfig,
) -> Result<FoldOutcome> {
    let (train, valid) = standardize_pair(train, valid, continuous)?;
    let weights = uniform_weights(train.n())?;
    let eval = EvalSet::new(&valid, specs, &config.kernel, config.selection)?;
    let with_fg = metrics.iter().any(|m| m == "FG");
    let mut out = FoldOutcome { records: Vec::new(), diagnostics: Vec::new() };
    for &variant in &config.variants {
        let stage = |e: Error| e.in_stage(variant.to_string());
        let fit = fit_variant(variant, &train, Some(&valid), &weights, &config.train, &config.kernel)
            .map_err(stage)?;
        out.diagnostics.extend(fit_diagnostics(fold, &fit));
        let baseline = if variant.is_regularized() {
            let zero = fit_counterpart(variant, &train, &valid, &weights, &config.train, &config.kernel)
                .map_err(stage)?;
            out.diagnostics.push(diagnostic(fold, &zero, "counterpart", &zero.train_history, zero.model.trained_epochs, zero.model.converged));
            Some(eval.pair_counts(zero.model.theta.view()).map_err(stage)?)
        } else {
            None
        };
        let values = eval.scores(&fit.model, baseline, with_fg).map_err(stage)?;
        for (metric, value) in metrics.iter().zip(values) {
            if let Some(value) = value {
                out.records.push(FoldRecord { fold, model: variant, metric: metric.clone(), value });
            }
        }
    }
    Ok(out)
}

pub(crate) fn diagnostic(
    fold: usize,
    fit: &VariantFit,
    stage: &'static str,
    history: &History,
    epochs: usize,
    converged: bool,
) -> Diagnostic {
    Diagnostic {
        fold,
        model: fit.model.variant,
        stage,
        epochs,
        converged,
        objective_increases: history.increases().len(),
        final_objective: history.objective.last().copied().unwrap_or(f64::NAN),
    }
}

pub(crate) fn fit_diagnostics(fold: usize, fit: &VariantFit) -> Vec<Diagnostic> {
    let mut out = vec![diagnostic(fold, fit, "train", &fit.train_history, fit.model.trained_epochs, fit.model.converged)];
    if let (Some(h), Some(t)) = (&fit.tune_history, fit.model.fine_tune) {
        out.push(diagnostic(fold, fit, "tune", h, t.epochs, t.converged));
    }
    out
}
