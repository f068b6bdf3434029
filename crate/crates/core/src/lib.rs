//! Logistic regression with a graph-Laplacian fairness penalty, fitted on a
//! source domain and optionally adapted to an unlabeled target domain.
//!
//! Three variants share one gradient-descent core:
//!
//! * `LR`: weighted logistic loss only.
//! * `IFDA`: the penalty is built on the similarity graph of source and
//!   target rows together.
//! * `IFRT`: trained with the source graph, then fine-tuned on the target
//!   graph alone.
//!
//! Evaluation covers AUC, error rates, prediction consistency under
//! sensitive-attribute perturbation and the pairwise fairness gain, with
//! ANOVA and Tukey HSD across folds.

pub mod data;
pub mod error;
pub mod experiment;
pub mod graph;
pub mod metrics;
pub mod model;
pub mod reweight;
pub mod stats;

pub use data::{
    design_matrix, load_csv, perturb_sensitive, split_by_attribute, stratified_kfold, Dataset,
    FoldAssignment, Schema, SensitiveSpec, Standardizer, SwapGroup,
};
pub use error::{Error, ErrorKind, Result};
pub use graph::{laplacian, pairwise_kernel, Distance, GraphLaplacian, KernelParams, SimilarityMatrix};
pub use metrics::{
    auc, fairness_gain, fnr, fpr, normalized_fairness_gain, prediction_consistency,
    FairnessGainReport, PairCounts, PairSelection, SelectionMode,
};
pub use model::{fine_tune, fit_variant, forward, predict_labels, train, ModelParams, TrainConfig, Variant};
pub use reweight::{propensity_weights, uniform_weights, PropensityConfig, ReweightVector};
pub use stats::{one_way_anova, tukey_hsd, AnovaResult, ScoreGroups, TukeyRow};
