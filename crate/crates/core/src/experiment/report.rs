use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use super::config::ExperimentConfig;
use crate::data::FoldAssignment;
use crate::error::{Error, Result};
use crate::model::Variant;
use crate::reweight::ReweightVector;
use crate::stats::{self, one_way_anova, tukey_hsd, AnovaResult, ScoreGroups, TukeyRow};

/// One metric value of one model on one fold.
#[derive(Debug, Clone, PartialEq)]
pub struct FoldRecord {
    pub fold: usize,
    pub model: Variant,
    pub metric: String,
    pub value: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SummaryCell {
    pub n: usize,
    pub mean: f64,
    /// Sample standard deviation; `None` for a single observation.
    pub std: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AnovaEntry {
    pub metric: String,
    pub groups: Vec<Variant>,
    /// `None` when every observation in every group is the same constant.
    pub result: Option<AnovaResult>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TukeyTable {
    pub metric: String,
    pub groups: Vec<Variant>,
    pub rows: Vec<TukeyRow>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Phase {
    Train,
    Tune,
}

impl Phase {
    pub fn as_str(&self) -> &'static str {
        match self {
            Phase::Train => "train",
            Phase::Tune => "tune",
        }
    }
}

/// Target-set scores of one iterate. `objective` is the training objective
/// in the train phase and the target regularizer `R_t` in the tune phase.
#[derive(Debug, Clone, PartialEq)]
pub struct TraceRow {
    pub model: Variant,
    pub phase: Phase,
    pub epoch: usize,
    pub objective: f64,
    pub values: Vec<Option<f64>>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Diagnostic {
    pub fold: usize,
    pub model: Variant,
    pub stage: &'static str,
    pub epochs: usize,
    pub converged: bool,
    pub objective_increases: usize,
    pub final_objective: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentReport {
    pub config: ExperimentConfig,
    pub metrics: Vec<String>,
    pub records: Vec<FoldRecord>,
    pub anova: Vec<AnovaEntry>,
    pub tukey: Vec<TukeyTable>,
    pub traces: Vec<TraceRow>,
    pub diagnostics: Vec<Diagnostic>,
    pub folds: Option<FoldAssignment>,
    pub weights: Option<ReweightVector>,
}

impl ExperimentReport {
    /// Per-fold values of `metric` for `model`, in fold order.
    pub fn values(&self, model: Variant, metric: &str) -> Vec<f64> {
        self.records
            .iter()
            .filter(|r| r.model == model && r.metric == metric)
            .map(|r| r.value)
            .collect()
    }

    pub fn summary(&self, model: Variant, metric: &str) -> Option<SummaryCell> {
        let v = self.values(model, metric);
        if v.is_empty() {
            return None;
        }
        Some(SummaryCell {
            n: v.len(),
            mean: stats::mean(&v),
            std: (v.len() > 1).then(|| stats::sample_std(&v)),
        })
    }

    pub fn anova_for(&self, metric: &str) -> Option<&AnovaEntry> {
        self.anova.iter().find(|a| a.metric == metric)
    }

    pub fn tukey_for(&self, metric: &str) -> Option<&TukeyTable> {
        self.tukey.iter().find(|t| t.metric == metric)
    }

    pub fn trace(&self, model: Variant, phase: Phase) -> Vec<&TraceRow> {
        self.traces.iter().filter(|t| t.model == model && t.phase == phase).collect()
    }

    /// Every output file as `(relative name, contents)`, in a fixed order.
    pub fn render(&self) -> Result<Vec<(String, String)>> {
        let mut files = vec![
            ("manifest.toml".to_string(), self.render_manifest()?),
            ("summary.csv".to_string(), self.render_summary()),
            ("summary_full.csv".to_string(), self.render_summary_full()),
            ("per_fold.csv".to_string(), self.render_per_fold()),
            ("diagnostics.csv".to_string(), self.render_diagnostics()),
        ];
        if !self.anova.is_empty() {
            files.push(("anova.csv".into(), self.render_anova()));
        }
        for t in &self.tukey {
            files.push((format!("tukey_{}.csv", t.metric), render_tukey(t)));
        }
        if !self.tukey.is_empty() {
            files.push(("tukey_full.csv".into(), self.render_tukey_full()));
        }
        for &model in &self.config.variants {
            if self.traces.iter().any(|t| t.model == model) {
                files.push((format!("trace_{model}.csv"), self.render_trace(model)));
            }
        }
        if let Some(folds) = &self.folds {
            files.push(("folds.csv".into(), folds.to_csv_string()));
        }
        if let Some(w) = &self.weights {
            files.push(("weights.csv".into(), w.to_csv_string()));
        }
        Ok(files)
    }

    fn render_manifest(&self) -> Result<String> {
        let mut out = String::from(
            "# Resolved configuration of this run; pass it back as a config to reproduce the report.\n\
             # Scores are computed on validation folds (iid_cv) or on the target domain (covariate_shift).\n",
        );
        out.push_str(&self.config.to_toml_string()?);
        Ok(out)
    }

    fn render_summary(&self) -> String {
        let mut out = String::from("model");
        for m in &self.metrics {
            out.push(',');
            out.push_str(m);
        }
        out.push('\n');
        for &model in &self.config.variants {
            out.push_str(model.as_str());
            for m in &self.metrics {
                out.push(',');
                match self.summary(model, m) {
                    Some(SummaryCell { mean, std: Some(sd), .. }) => {
                        let _ = write!(out, "{mean:.3}±{sd:.3}");
                    }
                    Some(SummaryCell { mean, std: None, .. }) => {
                        let _ = write!(out, "{mean:.3}");
                    }
                    None => out.push('-'),
                }
            }
            out.push('\n');
        }
        if !self.anova.is_empty() {
            out.push_str("ANOVA p-values");
            for m in &self.metrics {
                out.push(',');
                match self.anova_for(m).and_then(|a| a.result) {
                    Some(r) => out.push_str(&format_p(r.p_value)),
                    None => out.push('-'),
                }
            }
            out.push('\n');
        }
        out
    }

    fn render_summary_full(&self) -> String {
        let mut out = String::from("model,metric,n,mean,std\n");
        for &model in &self.config.variants {
            for m in &self.metrics {
                if let Some(c) = self.summary(model, m) {
                    let sd = c.std.map(|s| s.to_string()).unwrap_or_default();
                    let _ = writeln!(out, "{model},{m},{},{},{sd}", c.n, c.mean);
                }
            }
        }
        out
    }

    fn render_per_fold(&self) -> String {
        let mut out = String::from("fold,model,metric,value\n");
        for r in &self.records {
            let _ = writeln!(out, "{},{},{},{}", r.fold, r.model, r.metric, r.value);
        }
        out
    }

    fn render_anova(&self) -> String {
        let mut out = String::from("metric,groups,f,p_value,df_between,df_within\n");
        for a in &self.anova {
            let groups = a.groups.iter().map(Variant::as_str).collect::<Vec<_>>().join(";");
            match a.result {
                Some(r) => {
                    let _ = writeln!(
                        out,
                        "{},{groups},{},{},{},{}",
                        a.metric, r.f, r.p_value, r.df_between, r.df_within
                    );
                }
                None => {
                    let _ = writeln!(out, "{},{groups},,,,", a.metric);
                }
            }
        }
        out
    }

    fn render_tukey_full(&self) -> String {
        let mut out = String::from("metric,a,b,statistic,p_value,ci_low,ci_high\n");
        for t in &self.tukey {
            for r in &t.rows {
                let _ = writeln!(
                    out,
                    "{},{},{},{},{},{},{}",
                    t.metric, t.groups[r.a], t.groups[r.b], r.statistic, r.p_value, r.ci_low, r.ci_high
                );
            }
        }
        out
    }

    fn render_trace(&self, model: Variant) -> String {
        let mut out = String::from("phase,epoch,objective");
        for m in &self.metrics {
            out.push(',');
            out.push_str(m);
        }
        out.push('\n');
        for t in self.traces.iter().filter(|t| t.model == model) {
            let _ = write!(out, "{},{},{}", t.phase.as_str(), t.epoch, t.objective);
            for v in &t.values {
                out.push(',');
                if let Some(v) = v {
                    let _ = write!(out, "{v}");
                }
            }
            out.push('\n');
        }
        out
    }

    fn render_diagnostics(&self) -> String {
        let mut out = String::from("fold,model,stage,epochs,converged,objective_increases,final_objective\n");
        for d in &self.diagnostics {
            let _ = writeln!(
                out,
                "{},{},{},{},{},{},{}",
                d.fold, d.model, d.stage, d.epochs, d.converged, d.objective_increases, d.final_objective
            );
        }
        out
    }
}

fn format_p(p: f64) -> String {
    if p >= 0.01 || p == 0.0 {
        format!("{p:.2}")
    } else {
        format!("{p:.1e}")
    }
}

/// Rounded to three decimals, in the usual published column order.
fn render_tukey(t: &TukeyTable) -> String {
    let mut out = String::from("Comparison,Statistic,p-value,Lower CI,Upper CI\n");
    for r in &t.rows {
        let _ = writeln!(
            out,
            "({} - {}),{:.3},{:.3},{:.3},{:.3}",
            t.groups[r.a], t.groups[r.b], r.statistic, r.p_value, r.ci_low, r.ci_high
        );
    }
    out
}

/// ANOVA per metric over the models that have scores for it, and Tukey
/// tables where ANOVA rejects at `significance` (or everywhere with
/// `tukey_all`). Groups are ordered by model name.
pub fn compare_models(
    records: &[FoldRecord],
    models: &[Variant],
    metrics: &[String],
    config: &ExperimentConfig,
) -> Result<(Vec<AnovaEntry>, Vec<TukeyTable>)> {
    let mut ordered = models.to_vec();
    ordered.sort_by_key(|v| v.as_str());
    let mut anova = Vec::new();
    let mut tukey = Vec::new();
    for metric in metrics {
        let mut groups = Vec::new();
        let mut values = Vec::new();
        for &model in &ordered {
            let v: Vec<f64> = records
                .iter()
                .filter(|r| r.model == model && &r.metric == metric)
                .map(|r| r.value)
                .collect();
            if !v.is_empty() {
                groups.push(model);
                values.push(v);
            }
        }
        if groups.len() < 2 || values.iter().any(|v| v.len() < 2) {
            continue;
        }
        let labels = groups.iter().map(|g| g.to_string()).collect();
        let scores = ScoreGroups::labeled(labels, values)?;
        let result = match one_way_anova(&scores) {
            Ok(r) => Some(r),
            Err(Error::Undefined(_)) => None,
            Err(e) => return Err(e),
        };
        let rejected = result.is_some_and(|r| r.p_value < config.significance);
        if rejected || config.tukey_all {
            tukey.push(TukeyTable {
                metric: metric.clone(),
                groups: groups.clone(),
                rows: tukey_hsd(&scores, config.confidence)?,
            });
        }
        anova.push(AnovaEntry {
            metric: metric.clone(),
            groups,
            result,
        });
    }
    Ok((anova, tukey))
}

/// Writes every rendered file into `directory`, creating it if needed.
pub fn emit_report(report: &ExperimentReport, directory: impl AsRef<Path>) -> Result<Vec<PathBuf>> {
    let dir = directory.as_ref();
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let mut written = Vec::new();
    for (name, contents) in report.render()? {
        let path = dir.join(name);
        std::fs::write(&path, contents).map_err(|e| Error::io(&path, e))?;
        written.push(path);
    }
    Ok(written)
}
