use rayon::prelude::*;

use super::config::{ExperimentConfig, ExperimentKind};
use super::evaluate::{fit_counterpart, metric_names, select_specs, standardize_pair, EvalSet};
use super::iid::{diagnostic, fit_diagnostics};
use super::report::{Diagnostic, ExperimentReport, FoldRecord, Phase, TraceRow};
use crate::data::{load_csv, split_by_attribute, Schema};
use crate::error::{Error, Result};
use crate::model::{fit_variant, ModelParams, Variant};
use crate::reweight::propensity_weights;

struct VariantOutcome {
    records: Vec<FoldRecord>,
    traces: Vec<TraceRow>,
    diagnostics: Vec<Diagnostic>,
}

/// Trains on the source domain with inverse-propensity weights and scores
/// every iterate on the target domain.
///
/// Trace rows cover each training epoch and, for IFRT, each fine-tuning
/// epoch; tune epoch 0 is the untuned model. Final target scores are
/// reported as fold 0.
pub fn run_covariate_shift_experiment(config: &ExperimentConfig) -> Result<ExperimentReport> {
    if config.kind != ExperimentKind::CovariateShift {
        return Err(Error::Config(format!("expected a covariate_shift config, got {}", config.kind)));
    }
    config.validate()?;
    let shift = config.shift.as_ref().expect("validated");
    let schema = Schema::from_file(&config.schema)?;
    let data = load_csv(&config.dataset, &schema)?;
    let specs = select_specs(&schema, &data, &config.sensitive)?;
    let column = data
        .column_index(&shift.split_column)
        .ok_or_else(|| Error::Config(format!("unknown split column '{}'", shift.split_column)))?;
    let (source, target) = split_by_attribute(&data, column, shift.source_value)?;
    if !source.has_both_classes() || !target.has_both_classes() {
        return Err(Error::Data("both domains need positive and negative rows".into()));
    }
    let continuous = if config.standardize { schema.continuous_indices(&data)? } else { Vec::new() };
    let (source, target) = standardize_pair(&source, &target, &continuous)?;

    let weights = if shift.exclude_split_from_propensity {
        let (s, t) = (source.without_column(column)?, target.without_column(column)?);
        propensity_weights(s.features(), t.features(), &config.propensity)?
    } else {
        propensity_weights(source.features(), target.features(), &config.propensity)?
    };

    let eval = EvalSet::new(&target, &specs, &config.kernel, config.selection)?;
    let with_fg = config.variants.iter().any(|v| v.is_regularized());
    let metrics = metric_names(&specs, with_fg);

    let outcomes = config
        .variants
        .par_iter()
        .map(|&variant| {
            let run = || -> Result<VariantOutcome> {
                let fit = fit_variant(
                    variant,
                    &source,
                    Some(&target),
                    &weights,
                    &config.train,
                    &config.kernel,
                )?;
                let mut diagnostics = fit_diagnostics(0, &fit);
                let baseline = if variant.is_regularized() {
                    let zero = fit_counterpart(variant, &source, &target, &weights, &config.train, &config.kernel)?;
                    diagnostics.push(diagnostic(
                        0,
                        &zero,
                        "counterpart",
                        &zero.train_history,
                        zero.model.trained_epochs,
                        zero.model.converged,
                    ));
                    Some(eval.pair_counts(zero.model.theta.view())?)
                } else {
                    None
                };
                let score = |theta: &ndarray::Array1<f64>| {
                    let model = ModelParams { theta: theta.clone(), ..fit.model.clone() };
                    eval.scores(&model, baseline, with_fg)
                };
                let mut traces = Vec::new();
                let mut phases = vec![(Phase::Train, &fit.train_history)];
                if let Some(h) = &fit.tune_history {
                    phases.push((Phase::Tune, h));
                }
                for (phase, history) in phases {
                    for (epoch, (theta, &objective)) in history.thetas.iter().zip(&history.objective).enumerate() {
                        traces.push(TraceRow { model: variant, phase, epoch, objective, values: score(theta)? });
                    }
                }
                let records = metrics
                    .iter()
                    .zip(eval.scores(&fit.model, baseline, with_fg)?)
                    .filter_map(|(m, v)| v.map(|value| FoldRecord { fold: 0, model: variant, metric: m.clone(), value }))
                    .collect();
                Ok(VariantOutcome { records, traces, diagnostics })
            };
            run().map_err(|e| e.in_stage(variant.to_string()))
        })
        .collect::<Result<Vec<_>>>()?;

    let mut report = ExperimentReport {
        config: config.clone(),
        metrics,
        records: Vec::new(),
        anova: Vec::new(),
        tukey: Vec::new(),
        traces: Vec::new(),
        diagnostics: Vec::new(),
        folds: None,
        weights: Some(weights),
    };
    for o in outcomes {
        report.records.extend(o.records);
        report.traces.extend(o.traces);
        report.diagnostics.extend(o.diagnostics);
    }
    Ok(report)
}

/// `true` when the fine-tuning objective never rose between epochs.
pub fn tune_is_monotone(report: &ExperimentReport, model: Variant) -> bool {
    let rows = report.trace(model, Phase::Tune);
    rows.windows(2).all(|w| w[1].objective <= w[0].objective)
}
