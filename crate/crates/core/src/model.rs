//! Logistic regression with a graph Laplacian regularizer.
//!
//! Training minimizes the weighted cross-entropy on the source data plus
//! `alpha * ½ fᵀ L f`; fine-tuning then minimizes the target regularizer
//! `½ f_tᵀ L_t f_t` alone. Both run plain full-batch gradient descent from
//! the given starting point with a fixed step, stopping when the gradient's
//! infinity norm drops below the tolerance.

use std::fmt;
use std::str::FromStr;

use ndarray::{Array1, ArrayView1, ArrayView2};
use serde::{Deserialize, Serialize};

use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::graph::{laplacian, pairwise_kernel, quadratic_form, GraphLaplacian, KernelParams};
use crate::reweight::ReweightVector;

/// Probabilities are clamped to `[PROB_EPS, 1 - PROB_EPS]` inside logs.
pub const PROB_EPS: f64 = 1e-12;

/// Relative slack before a rise in the recorded objective counts as an increase.
const MONOTONE_SLACK: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Variant {
    /// Unregularized logistic regression.
    #[serde(rename = "LR")]
    Lr,
    /// Regularizer built on source and target rows together at train time.
    #[serde(rename = "IFDA")]
    Ifda,
    /// Source regularizer at train time, target regularizer by fine-tuning.
    #[serde(rename = "IFRT")]
    Ifrt,
}

impl Variant {
    pub const ALL: [Variant; 3] = [Variant::Lr, Variant::Ifda, Variant::Ifrt];

    pub fn as_str(&self) -> &'static str {
        match self {
            Variant::Lr => "LR",
            Variant::Ifda => "IFDA",
            Variant::Ifrt => "IFRT",
        }
    }

    pub fn is_regularized(&self) -> bool {
        !matches!(self, Variant::Lr)
    }
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Variant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_uppercase().as_str() {
            "LR" => Ok(Variant::Lr),
            "IFDA" => Ok(Variant::Ifda),
            "IFRT" => Ok(Variant::Ifrt),
            other => Err(Error::Config(format!("unknown variant '{other}'"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainConfig {
    pub alpha: f64,
    pub lr_train: f64,
    pub lr_tune: f64,
    pub tol_train: f64,
    pub tol_tune: f64,
    pub max_epochs: usize,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            alpha: 10.0,
            lr_train: 0.1,
            lr_tune: 0.1,
            tol_train: 1e-7,
            tol_tune: 1e-10,
            max_epochs: 200,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let positive = |name: &str, v: f64| {
            if v > 0.0 && v.is_finite() {
                Ok(())
            } else {
                Err(Error::Config(format!("{name} must be positive, got {v}")))
            }
        };
        if !(self.alpha >= 0.0 && self.alpha.is_finite()) {
            return Err(Error::Config(format!("alpha must be >= 0, got {}", self.alpha)));
        }
        positive("lr_train", self.lr_train)?;
        if !(self.lr_tune >= 0.0 && self.lr_tune.is_finite()) {
            return Err(Error::Config(format!("lr_tune must be >= 0, got {}", self.lr_tune)));
        }
        positive("tol_train", self.tol_train)?;
        positive("tol_tune", self.tol_tune)?;
        if self.max_epochs == 0 {
            return Err(Error::Config("max_epochs must be positive".into()));
        }
        Ok(())
    }

    pub fn with_alpha(&self, alpha: f64) -> Self {
        TrainConfig { alpha, ..*self }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct TuneRecord {
    pub epochs: usize,
    pub converged: bool,
}

/// Learned coefficients, intercept first, with how they were obtained.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelParams {
    pub theta: Array1<f64>,
    pub trained_epochs: usize,
    pub converged: bool,
    pub variant: Variant,
    pub alpha_used: f64,
    pub fine_tune: Option<TuneRecord>,
}

const MODEL_FORMAT_VERSION: u32 = 1;

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ModelFile {
    format_version: u32,
    variant: Variant,
    alpha_used: f64,
    trained_epochs: usize,
    converged: bool,
    theta: Vec<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    fine_tune: Option<TuneRecord>,
    config: TrainConfig,
}

impl ModelParams {
    pub fn n_coefficients(&self) -> usize {
        self.theta.len()
    }

    /// Versioned TOML record of the model together with the config that produced it.
    pub fn to_toml_string(&self, config: &TrainConfig) -> Result<String> {
        let file = ModelFile {
            format_version: MODEL_FORMAT_VERSION,
            variant: self.variant,
            alpha_used: self.alpha_used,
            trained_epochs: self.trained_epochs,
            converged: self.converged,
            theta: self.theta.to_vec(),
            fine_tune: self.fine_tune,
            config: *config,
        };
        toml::to_string(&file).map_err(|e| Error::Config(format!("serializing model: {e}")))
    }

    pub fn from_toml_str(s: &str) -> Result<(ModelParams, TrainConfig)> {
        let file: ModelFile =
            toml::from_str(s).map_err(|e| Error::Config(format!("model file: {e}")))?;
        if file.format_version != MODEL_FORMAT_VERSION {
            return Err(Error::Config(format!(
                "model format version {} is not supported",
                file.format_version
            )));
        }
        if file.theta.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("model coefficients".into()));
        }
        Ok((
            ModelParams {
                theta: Array1::from(file.theta),
                trained_epochs: file.trained_epochs,
                converged: file.converged,
                variant: file.variant,
                alpha_used: file.alpha_used,
                fine_tune: file.fine_tune,
            },
            file.config,
        ))
    }
}

#[inline]
pub fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

fn check_theta(x: ArrayView2<'_, f64>, theta: ArrayView1<'_, f64>) -> Result<()> {
    if x.ncols() != theta.len() {
        return Err(Error::Dimension(format!(
            "design has {} columns, theta has {} entries",
            x.ncols(),
            theta.len()
        )));
    }
    if theta.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("theta".into()));
    }
    Ok(())
}

/// `sigmoid(X θ)` row by row. `x` is a design matrix (intercept column included).
pub fn forward(x: ArrayView2<'_, f64>, theta: ArrayView1<'_, f64>) -> Result<Array1<f64>> {
    check_theta(x, theta)?;
    Ok(x.dot(&theta).mapv(sigmoid))
}

/// Labels thresholded at 0.5; a probability of exactly 0.5 maps to 1.
pub fn predict_labels(model: &ModelParams, x: ArrayView2<'_, f64>) -> Result<Array1<f64>> {
    Ok(forward(x, model.theta.view())?.mapv(|p| if p >= 0.5 { 1.0 } else { 0.0 }))
}

/// Rows whose model outputs enter the regularizer, with their Laplacian.
#[derive(Debug, Clone, Copy)]
pub struct GraphTerm<'a> {
    pub design: ArrayView2<'a, f64>,
    pub laplacian: &'a GraphLaplacian,
}

impl<'a> GraphTerm<'a> {
    pub fn new(design: ArrayView2<'a, f64>, laplacian: &'a GraphLaplacian) -> Result<Self> {
        if design.nrows() != laplacian.n() {
            return Err(Error::Dimension(format!(
                "{} graph rows for a {}-node Laplacian",
                design.nrows(),
                laplacian.n()
            )));
        }
        Ok(GraphTerm { design, laplacian })
    }

    /// `½ fᵀ L f` and `Xᵀ J L f` with `J = diag(f (1 - f))`.
    fn value_and_gradient(&self, theta: ArrayView1<'_, f64>) -> Result<(f64, Array1<f64>)> {
        let f = forward(self.design, theta)?;
        let lf = self.laplacian.apply(f.view())?;
        let value = 0.5 * f.dot(&lf);
        let jlf = &f * &(1.0 - &f) * &lf;
        Ok((value, self.design.t().dot(&jlf)))
    }
}

/// The weighted, regularized training objective.
#[derive(Debug, Clone, Copy)]
pub struct SourceObjective<'a> {
    pub x: ArrayView2<'a, f64>,
    pub y: ArrayView1<'a, f64>,
    pub w: ArrayView1<'a, f64>,
    pub graph: Option<GraphTerm<'a>>,
    pub alpha: f64,
}

impl<'a> SourceObjective<'a> {
    pub fn new(
        x: ArrayView2<'a, f64>,
        y: ArrayView1<'a, f64>,
        w: &'a ReweightVector,
        graph: Option<GraphTerm<'a>>,
        alpha: f64,
    ) -> Result<Self> {
        let n = x.nrows();
        if y.len() != n || w.len() != n {
            return Err(Error::Dimension(format!(
                "{} rows, {} labels, {} weights",
                n,
                y.len(),
                w.len()
            )));
        }
        if let Some(g) = graph {
            if g.design.ncols() != x.ncols() {
                return Err(Error::Dimension("graph design has a different width".into()));
            }
        }
        Ok(SourceObjective {
            x,
            y,
            w: w.as_view(),
            graph,
            alpha,
        })
    }

    /// Loss and gradient at `theta`.
    pub fn evaluate(&self, theta: ArrayView1<'_, f64>) -> Result<(f64, Array1<f64>)> {
        let f = forward(self.x, theta)?;
        let n = self.x.nrows() as f64;
        let mut loss = 0.0;
        for ((&fi, &yi), &wi) in f.iter().zip(self.y).zip(self.w) {
            let p = fi.clamp(PROB_EPS, 1.0 - PROB_EPS);
            loss -= wi * (yi * p.ln() + (1.0 - yi) * (1.0 - p).ln());
        }
        loss /= n;
        let residual = (&f - &self.y) * self.w;
        let mut grad = self.x.t().dot(&residual) / n;
        if self.alpha > 0.0 {
            if let Some(g) = &self.graph {
                let (r, rg) = g.value_and_gradient(theta)?;
                loss += self.alpha * r;
                grad.scaled_add(self.alpha, &rg);
            }
        }
        Ok((loss, grad))
    }
}

/// `(1/n) Σ w_i ℓ_i + α ½ fᵀ L_s f` with the regularizer on the same rows as the loss.
pub fn source_loss(
    x: ArrayView2<'_, f64>,
    y: ArrayView1<'_, f64>,
    theta: ArrayView1<'_, f64>,
    w: &ReweightVector,
    l_s: Option<&GraphLaplacian>,
    alpha: f64,
) -> Result<f64> {
    let graph = l_s.map(|l| GraphTerm::new(x, l)).transpose()?;
    Ok(SourceObjective::new(x, y, w, graph, alpha)?.evaluate(theta)?.0)
}

/// `(1/n) Σ w_i (f_i - y_i) x_i + α Xᵀ J_s L_s f`.
pub fn source_gradient(
    x: ArrayView2<'_, f64>,
    y: ArrayView1<'_, f64>,
    theta: ArrayView1<'_, f64>,
    w: &ReweightVector,
    l_s: Option<&GraphLaplacian>,
    alpha: f64,
) -> Result<Array1<f64>> {
    let graph = l_s.map(|l| GraphTerm::new(x, l)).transpose()?;
    Ok(SourceObjective::new(x, y, w, graph, alpha)?.evaluate(theta)?.1)
}

/// The target regularizer `½ f_tᵀ L_t f_t`.
pub fn target_loss(
    x_t: ArrayView2<'_, f64>,
    theta_hat: ArrayView1<'_, f64>,
    l_t: &GraphLaplacian,
) -> Result<f64> {
    GraphTerm::new(x_t, l_t)?;
    let f = forward(x_t, theta_hat)?;
    quadratic_form(l_t, f.view())
}

/// `X_tᵀ J_t L_t f(X_t; θ̂)`.
pub fn target_gradient(
    x_t: ArrayView2<'_, f64>,
    theta_hat: ArrayView1<'_, f64>,
    l_t: &GraphLaplacian,
) -> Result<Array1<f64>> {
    Ok(GraphTerm::new(x_t, l_t)?.value_and_gradient(theta_hat)?.1)
}

/// Iterates and objective values visited by gradient descent.
///
/// `thetas[e]` is the iterate after `e` updates and `objective[e]` its
/// objective value, so both have `epochs + 1` entries.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct History {
    pub objective: Vec<f64>,
    pub thetas: Vec<Array1<f64>>,
}

impl History {
    /// Epochs whose objective rose above the previous epoch's.
    pub fn increases(&self) -> Vec<usize> {
        self.objective
            .windows(2)
            .enumerate()
            .filter(|(_, w)| w[1] > w[0] + MONOTONE_SLACK * w[0].abs().max(1e-300))
            .map(|(e, _)| e + 1)
            .collect()
    }
}

struct Descent {
    theta: Array1<f64>,
    epochs: usize,
    converged: bool,
    history: History,
}

fn descend(
    start: Array1<f64>,
    lr: f64,
    tol: f64,
    max_epochs: usize,
    mut evaluate: impl FnMut(ArrayView1<'_, f64>) -> Result<(f64, Array1<f64>)>,
) -> Result<Descent> {
    let mut theta = start;
    let mut history = History::default();
    let mut epochs = 0;
    let converged = loop {
        let (value, grad) = evaluate(theta.view())?;
        if !value.is_finite() || grad.iter().any(|g| !g.is_finite()) {
            return Err(Error::Divergence {
                epoch: epochs,
                message: format!("objective = {value}"),
            });
        }
        history.objective.push(value);
        history.thetas.push(theta.clone());
        let norm = grad.iter().fold(0.0f64, |m, g| m.max(g.abs()));
        if norm < tol {
            break true;
        }
        if epochs == max_epochs {
            break false;
        }
        theta.scaled_add(-lr, &grad);
        epochs += 1;
    };
    Ok(Descent {
        theta,
        epochs,
        converged,
        history,
    })
}

#[derive(Debug, Clone)]
pub struct Fit {
    pub params: ModelParams,
    pub history: History,
}

/// Gradient descent on the source objective from `θ = 0`.
pub fn train<'a>(
    x_s: ArrayView2<'a, f64>,
    y: ArrayView1<'a, f64>,
    w: &'a ReweightVector,
    graph: Option<GraphTerm<'a>>,
    config: &TrainConfig,
    variant: Variant,
) -> Result<Fit> {
    config.validate()?;
    let objective = SourceObjective::new(x_s, y, w, graph, config.alpha)?;
    let run = descend(
        Array1::zeros(x_s.ncols()),
        config.lr_train,
        config.tol_train,
        config.max_epochs,
        |theta| objective.evaluate(theta),
    )?;
    Ok(Fit {
        params: ModelParams {
            theta: run.theta,
            trained_epochs: run.epochs,
            converged: run.converged,
            variant,
            alpha_used: config.alpha,
            fine_tune: None,
        },
        history: run.history,
    })
}

/// Gradient descent on the target regularizer starting from `model`.
pub fn fine_tune(
    model: &ModelParams,
    x_t: ArrayView2<'_, f64>,
    l_t: &GraphLaplacian,
    config: &TrainConfig,
) -> Result<Fit> {
    config.validate()?;
    let graph = GraphTerm::new(x_t, l_t)?;
    check_theta(x_t, model.theta.view())?;
    let run = descend(
        model.theta.clone(),
        config.lr_tune,
        config.tol_tune,
        config.max_epochs,
        |theta| graph.value_and_gradient(theta),
    )?;
    Ok(Fit {
        params: ModelParams {
            theta: run.theta,
            fine_tune: Some(TuneRecord {
                epochs: run.epochs,
                converged: run.converged,
            }),
            ..model.clone()
        },
        history: run.history,
    })
}

#[derive(Debug, Clone)]
pub struct VariantFit {
    pub model: ModelParams,
    pub train_history: History,
    /// Present for IFRT when a target was supplied.
    pub tune_history: Option<History>,
}

/// Trains one of the three model variants.
///
/// `source` and `target` must already be on a common feature scale; kernels
/// are built on their raw feature rows, without the intercept column.
/// LR ignores `config.alpha`. IFDA needs `target` at train time. IFRT
/// fine-tunes on `target` when one is given and skips the tuning stage
/// otherwise.
pub fn fit_variant(
    variant: Variant,
    source: &Dataset,
    target: Option<&Dataset>,
    weights: &ReweightVector,
    config: &TrainConfig,
    kernel: &KernelParams,
) -> Result<VariantFit> {
    let x_s = source.design_matrix();
    let y = source.labels();
    let source_graph = |alpha: f64| -> Result<Option<GraphLaplacian>> {
        if alpha > 0.0 {
            Ok(Some(laplacian(&pairwise_kernel(source.features(), kernel)?)))
        } else {
            Ok(None)
        }
    };
    match variant {
        Variant::Lr => {
            let cfg = config.with_alpha(0.0);
            let fit = train(x_s.view(), y, weights, None, &cfg, variant)?;
            Ok(VariantFit {
                model: fit.params,
                train_history: fit.history,
                tune_history: None,
            })
        }
        Variant::Ifda => {
            let target = target.ok_or_else(|| {
                Error::InvalidArgument("IFDA needs target data at train time".into())
            })?;
            let fit = if config.alpha > 0.0 {
                let combined = source.stack(target)?;
                let l = laplacian(&pairwise_kernel(combined.features(), kernel)?);
                let x_all = combined.design_matrix();
                let graph = GraphTerm::new(x_all.view(), &l)?;
                train(x_s.view(), y, weights, Some(graph), config, variant)?
            } else {
                train(x_s.view(), y, weights, None, config, variant)?
            };
            Ok(VariantFit {
                model: fit.params,
                train_history: fit.history,
                tune_history: None,
            })
        }
        Variant::Ifrt => {
            let l_s = source_graph(config.alpha)?;
            let graph = l_s.as_ref().map(|l| GraphTerm::new(x_s.view(), l)).transpose()?;
            let fit = train(x_s.view(), y, weights, graph, config, variant)?;
            match target {
                Some(target) => {
                    let x_t = target.design_matrix();
                    let l_t = laplacian(&pairwise_kernel(target.features(), kernel)?);
                    let tuned = fine_tune(&fit.params, x_t.view(), &l_t, config)?;
                    Ok(VariantFit {
                        model: tuned.params,
                        train_history: fit.history,
                        tune_history: Some(tuned.history),
                    })
                }
                None => Ok(VariantFit {
                    model: fit.params,
                    train_history: fit.history,
                    tune_history: None,
                }),
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::design_matrix;
    use crate::graph::SimilarityMatrix;
    use crate::reweight::uniform_weights;
    use ndarray::{array, Array2};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_problem(
        rng: &mut ChaCha8Rng,
        n: usize,
        m: usize,
    ) -> (Array2<f64>, Array1<f64>, GraphLaplacian) {
        let raw = Array2::from_shape_fn((n, m), |_| rng.random_range(-1.0..1.0));
        let y = Array1::from_shape_fn(n, |_| if rng.random_bool(0.5) { 1.0 } else { 0.0 });
        let l = laplacian(&pairwise_kernel(raw.view(), &KernelParams { delta: 1.0, ..Default::default() }).unwrap());
        (design_matrix(raw.view()), y, l)
    }

    fn central_difference(mut f: impl FnMut(&Array1<f64>) -> f64, theta: &Array1<f64>) -> Array1<f64> {
        let h = 1e-6;
        Array1::from_shape_fn(theta.len(), |k| {
            let mut up = theta.clone();
            let mut down = theta.clone();
            up[k] += h;
            down[k] -= h;
            (f(&up) - f(&down)) / (2.0 * h)
        })
    }

    #[test]
    fn zero_theta_gives_one_half() {
        let x = design_matrix(array![[1.0, -2.0], [3.0, 4.0]].view());
        assert_eq!(forward(x.view(), Array1::zeros(3).view()).unwrap().to_vec(), vec![0.5, 0.5]);
    }

    #[test]
    fn sigmoid_saturates_without_overflow() {
        let x = array![[1.0], [1.0]];
        let p = forward(x.view(), array![1000.0].view()).unwrap();
        assert_eq!(p[0], 1.0);
        let q = forward(x.view(), array![-1000.0].view()).unwrap();
        assert!(q[0] >= 0.0 && q[0] < 1e-300);
        assert!(forward(x.view(), array![f64::NAN].view()).is_err());
        assert!(forward(x.view(), array![1.0, 2.0].view()).is_err());
    }

    #[test]
    fn forward_matches_scalar_reference() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let x = Array2::from_shape_fn((10, 4), |_| rng.random_range(-3.0..3.0));
        let theta = Array1::from_shape_fn(4, |_| rng.random_range(-2.0..2.0));
        let p = forward(x.view(), theta.view()).unwrap();
        for i in 0..10 {
            let z: f64 = (0..4).map(|j| x[[i, j]] * theta[j]).sum();
            assert!((p[i] - 1.0 / (1.0 + (-z).exp())).abs() < 1e-15);
        }
    }

    #[test]
    fn balanced_constant_prediction_loss_is_ln2() {
        let x = design_matrix(array![[0.3], [-0.2], [1.0], [2.0]].view());
        let y = array![1.0, 0.0, 1.0, 0.0];
        let w = uniform_weights(4).unwrap();
        let loss = source_loss(x.view(), y.view(), Array1::zeros(2).view(), &w, None, 0.0).unwrap();
        assert!((loss - std::f64::consts::LN_2).abs() < 1e-15);
    }

    #[test]
    fn separated_data_has_near_zero_loss_and_gradient() {
        let x = design_matrix(array![[-1.0], [1.0]].view());
        let y = array![0.0, 1.0];
        let w = uniform_weights(2).unwrap();
        let theta = array![0.0, 60.0];
        assert!(source_loss(x.view(), y.view(), theta.view(), &w, None, 0.0).unwrap() < 1e-12);
        let g = source_gradient(x.view(), y.view(), theta.view(), &w, None, 0.0).unwrap();
        assert!(g.iter().all(|v| v.abs() < 1e-12));
    }

    #[test]
    fn gradient_at_origin_closed_form() {
        let x = design_matrix(array![[1.0, 2.0], [3.0, -1.0], [0.5, 0.5]].view());
        let y = array![1.0, 0.0, 0.0];
        let w = uniform_weights(3).unwrap();
        let g = source_gradient(x.view(), y.view(), Array1::zeros(3).view(), &w, None, 0.0).unwrap();
        for k in 0..3 {
            let expected: f64 = (0..3).map(|i| (0.5 - y[i]) * x[[i, k]]).sum::<f64>() / 3.0;
            assert!((g[k] - expected).abs() < 1e-15);
        }
    }

    #[test]
    fn regularizer_adds_alpha_times_quadratic_form() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let (x, y, l) = random_problem(&mut rng, 9, 3);
        let w = uniform_weights(9).unwrap();
        let theta = Array1::from_shape_fn(4, |_| rng.random_range(-1.0..1.0));
        let plain = source_loss(x.view(), y.view(), theta.view(), &w, Some(&l), 0.0).unwrap();
        let reg = source_loss(x.view(), y.view(), theta.view(), &w, Some(&l), 3.0).unwrap();
        let f = forward(x.view(), theta.view()).unwrap();
        let q = quadratic_form(&l, f.view()).unwrap();
        assert!((reg - plain - 3.0 * q).abs() < 1e-13);
    }

    #[test]
    fn source_gradient_matches_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let (x, y, l) = random_problem(&mut rng, 15, 4);
        let w = ReweightVector::new(Array1::from_shape_fn(15, |_| rng.random_range(0.2..2.0))).unwrap();
        let theta = Array1::from_shape_fn(5, |_| rng.random_range(-1.0..1.0));
        let g = source_gradient(x.view(), y.view(), theta.view(), &w, Some(&l), 10.0).unwrap();
        let fd = central_difference(
            |t| source_loss(x.view(), y.view(), t.view(), &w, Some(&l), 10.0).unwrap(),
            &theta,
        );
        for k in 0..5 {
            assert!((g[k] - fd[k]).abs() <= 1e-5 * fd[k].abs().max(1e-3), "{k}: {} vs {}", g[k], fd[k]);
        }
    }

    #[test]
    fn target_gradient_matches_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let (x, _, l) = random_problem(&mut rng, 12, 3);
        let theta = Array1::from_shape_fn(4, |_| rng.random_range(-2.0..2.0));
        let g = target_gradient(x.view(), theta.view(), &l).unwrap();
        let fd = central_difference(|t| target_loss(x.view(), t.view(), &l).unwrap(), &theta);
        for k in 0..4 {
            assert!((g[k] - fd[k]).abs() <= 1e-5 * fd[k].abs().max(1e-3));
        }
    }

    #[test]
    fn constant_predictions_give_exactly_zero_target_gradient() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let (x, _, l) = random_problem(&mut rng, 8, 2);
        let theta = array![0.7, 0.0, 0.0];
        let g = target_gradient(x.view(), theta.view(), &l).unwrap();
        assert!(g.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn single_sample_target_gradient_is_zero() {
        let x = design_matrix(array![[0.4, -0.3]].view());
        let l = laplacian(&SimilarityMatrix::from_matrix(array![[1.0]]).unwrap());
        let g = target_gradient(x.view(), array![0.1, 2.0, -1.0].view(), &l).unwrap();
        assert!(g.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn separable_data_is_fit_exactly() {
        let x = design_matrix(array![[-2.0], [-1.0], [-0.5], [0.5], [1.0], [2.0]].view());
        let y = array![0.0, 0.0, 0.0, 1.0, 1.0, 1.0];
        let w = uniform_weights(6).unwrap();
        let fit = train(x.view(), y.view(), &w, None, &TrainConfig::default().with_alpha(0.0), Variant::Lr)
            .unwrap();
        let labels = predict_labels(&fit.params, x.view()).unwrap();
        assert_eq!(labels, y);
        assert_eq!(fit.params.trained_epochs, 200);
        assert!(!fit.params.converged);
        assert_eq!(fit.history.thetas.len(), 201);
        assert!(fit.history.increases().is_empty());
    }

    #[test]
    fn training_is_deterministic() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let (x, y, l) = random_problem(&mut rng, 20, 3);
        let w = uniform_weights(20).unwrap();
        let run = || {
            let graph = GraphTerm::new(x.view(), &l).unwrap();
            train(x.view(), y.view(), &w, Some(graph), &TrainConfig::default(), Variant::Ifrt)
                .unwrap()
                .params
        };
        assert_eq!(run(), run());
    }

    #[test]
    fn fine_tune_identity_cases() {
        let mut rng = ChaCha8Rng::seed_from_u64(10);
        let (x, _, l) = random_problem(&mut rng, 10, 2);
        let model = ModelParams {
            theta: array![0.2, -0.5, 1.0],
            trained_epochs: 0,
            converged: false,
            variant: Variant::Ifrt,
            alpha_used: 10.0,
            fine_tune: None,
        };
        let frozen = TrainConfig {
            lr_tune: 0.0,
            ..TrainConfig::default()
        };
        let tuned = fine_tune(&model, x.view(), &l, &frozen).unwrap();
        assert_eq!(tuned.params.theta, model.theta);

        // constant-feature target: every prediction equal, nothing to do
        let flat = design_matrix(Array2::from_elem((5, 2), 0.3).view());
        let l_flat = laplacian(&pairwise_kernel(Array2::from_elem((5, 2), 0.3).view(), &KernelParams::default()).unwrap());
        let tuned = fine_tune(&model, flat.view(), &l_flat, &TrainConfig::default()).unwrap();
        assert_eq!(tuned.params.theta, model.theta);
        assert_eq!(tuned.params.fine_tune, Some(TuneRecord { epochs: 0, converged: true }));
    }

    #[test]
    fn fine_tune_does_not_increase_target_regularizer() {
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        let (x, _, l) = random_problem(&mut rng, 25, 3);
        let model = ModelParams {
            theta: Array1::from_shape_fn(4, |_| rng.random_range(-2.0..2.0)),
            trained_epochs: 0,
            converged: false,
            variant: Variant::Ifrt,
            alpha_used: 10.0,
            fine_tune: None,
        };
        let tuned = fine_tune(&model, x.view(), &l, &TrainConfig::default()).unwrap();
        assert!(tuned.history.increases().is_empty());
        let first = tuned.history.objective[0];
        let last = *tuned.history.objective.last().unwrap();
        assert!(last <= first);
        assert_eq!(first, target_loss(x.view(), model.theta.view(), &l).unwrap());
    }

    #[test]
    fn divergence_is_reported_with_epoch() {
        let x = design_matrix(array![[1e200], [-1e200]].view());
        let y = array![1.0, 0.0];
        let w = uniform_weights(2).unwrap();
        let cfg = TrainConfig { lr_train: 1e200, ..TrainConfig::default() };
        let err = train(x.view(), y.view(), &w, None, &cfg.with_alpha(0.0), Variant::Lr).unwrap_err();
        assert!(matches!(err, Error::Divergence { .. } | Error::NonFinite(_)), "{err}");
    }

    #[test]
    fn predict_ties_resolve_to_one_and_match_sign() {
        let mut rng = ChaCha8Rng::seed_from_u64(13);
        let x = Array2::from_shape_fn((30, 3), |_| rng.random_range(-1.0..1.0));
        let zero = ModelParams {
            theta: Array1::zeros(3),
            trained_epochs: 0,
            converged: true,
            variant: Variant::Lr,
            alpha_used: 0.0,
            fine_tune: None,
        };
        assert!(predict_labels(&zero, x.view()).unwrap().iter().all(|&v| v == 1.0));
        let model = ModelParams {
            theta: Array1::from_shape_fn(3, |_| rng.random_range(-1.0..1.0)),
            ..zero
        };
        let labels = predict_labels(&model, x.view()).unwrap();
        let z = x.dot(&model.theta);
        for i in 0..30 {
            if z[i] != 0.0 {
                assert_eq!(labels[i], if z[i] > 0.0 { 1.0 } else { 0.0 });
            }
        }
        let one = ModelParams { theta: array![(0.7f64 / 0.3).ln()], ..zero.clone() };
        assert_eq!(predict_labels(&one, array![[1.0]].view()).unwrap()[0], 1.0);
    }

    #[test]
    fn model_round_trips_through_toml() {
        let model = ModelParams {
            theta: array![0.1, -2.5e-9, 3.0],
            trained_epochs: 17,
            converged: true,
            variant: Variant::Ifrt,
            alpha_used: 10.0,
            fine_tune: Some(TuneRecord { epochs: 4, converged: false }),
        };
        let cfg = TrainConfig::default();
        let text = model.to_toml_string(&cfg).unwrap();
        assert!(text.contains("format_version = 1"));
        let (back, cfg_back) = ModelParams::from_toml_str(&text).unwrap();
        assert_eq!(back, model);
        assert_eq!(cfg_back, cfg);
        assert!(ModelParams::from_toml_str(&text.replace("format_version = 1", "format_version = 9")).is_err());
    }

    #[test]
    fn variant_names_parse() {
        for v in Variant::ALL {
            assert_eq!(v.as_str().parse::<Variant>().unwrap(), v);
        }
        assert!("svm".parse::<Variant>().is_err());
    }

    #[test]
    fn fit_variant_rules() {
        let mut rng = ChaCha8Rng::seed_from_u64(14);
        let n = 12;
        let feats = Array2::from_shape_fn((n, 2), |_| rng.random_range(-1.0..1.0));
        let labels = Array1::from_shape_fn(n, |i| (i % 2) as f64);
        let src = Dataset::new(feats, labels, vec!["a".into(), "b".into()]).unwrap();
        let tgt = src.subset(&[0, 3, 5]).unwrap();
        let w = uniform_weights(n).unwrap();
        let cfg = TrainConfig::default();
        let k = KernelParams::default();

        let lr = fit_variant(Variant::Lr, &src, None, &w, &cfg, &k).unwrap();
        let plain = train(src.design_matrix().view(), src.labels(), &w, None, &cfg.with_alpha(0.0), Variant::Lr).unwrap();
        assert_eq!(lr.model, plain.params);

        assert!(fit_variant(Variant::Ifda, &src, None, &w, &cfg, &k).is_err());
        let ifda = fit_variant(Variant::Ifda, &src, Some(&tgt), &w, &cfg, &k).unwrap();
        assert_eq!(ifda.model.variant, Variant::Ifda);
        assert!(ifda.tune_history.is_none() && ifda.model.fine_tune.is_none());

        let single = src.subset(&[4]).unwrap();
        let tuned = fit_variant(Variant::Ifrt, &src, Some(&single), &w, &cfg, &k).unwrap();
        let untuned = fit_variant(Variant::Ifrt, &src, None, &w, &cfg, &k).unwrap();
        assert_eq!(tuned.model.theta, untuned.model.theta);
        assert_eq!(tuned.tune_history.unwrap().thetas.len(), 1);
    }
}
