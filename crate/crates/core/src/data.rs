//! Tabular datasets: CSV loading with one-hot encoding, train-only
//! standardization, stratified folds, attribute splits, and the
//! sensitive-attribute swaps used by prediction consistency.

use std::collections::{BTreeSet, HashMap};
use std::path::Path;

use ndarray::{concatenate, s, Array1, Array2, ArrayView1, ArrayView2, Axis};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Numeric feature matrix with binary labels.
///
/// Labels are stored as `f64` but only ever hold `0.0` or `1.0`.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    features: Array2<f64>,
    labels: Array1<f64>,
    feature_names: Vec<String>,
}

impl Dataset {
    pub fn new(
        features: Array2<f64>,
        labels: Array1<f64>,
        feature_names: Vec<String>,
    ) -> Result<Self> {
        let (n, m) = features.dim();
        if n == 0 || m == 0 {
            return Err(Error::Data(format!("empty dataset ({n}x{m})")));
        }
        if labels.len() != n {
            return Err(Error::Dimension(format!(
                "{} labels for {} rows",
                labels.len(),
                n
            )));
        }
        if feature_names.len() != m {
            return Err(Error::Dimension(format!(
                "{} feature names for {} columns",
                feature_names.len(),
                m
            )));
        }
        if let Some(bad) = labels.iter().find(|&&y| y != 0.0 && y != 1.0) {
            return Err(Error::Data(format!("label {bad} is not 0 or 1")));
        }
        if features.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("feature matrix".into()));
        }
        Ok(Dataset {
            features,
            labels,
            feature_names,
        })
    }

    pub fn n(&self) -> usize {
        self.features.nrows()
    }

    pub fn m(&self) -> usize {
        self.features.ncols()
    }

    pub fn features(&self) -> ArrayView2<'_, f64> {
        self.features.view()
    }

    pub fn labels(&self) -> ArrayView1<'_, f64> {
        self.labels.view()
    }

    pub fn feature_names(&self) -> &[String] {
        &self.feature_names
    }

    pub fn column_index(&self, name: &str) -> Option<usize> {
        self.feature_names.iter().position(|c| c == name)
    }

    pub fn positives(&self) -> usize {
        self.labels.iter().filter(|&&y| y == 1.0).count()
    }

    pub fn has_both_classes(&self) -> bool {
        let p = self.positives();
        p > 0 && p < self.n()
    }

    /// Features with a leading column of ones for the intercept.
    pub fn design_matrix(&self) -> Array2<f64> {
        design_matrix(self.features.view())
    }

    /// Rows at `indices`, in the given order.
    pub fn subset(&self, indices: &[usize]) -> Result<Dataset> {
        if indices.is_empty() {
            return Err(Error::Data("empty row subset".into()));
        }
        if let Some(&i) = indices.iter().find(|&&i| i >= self.n()) {
            return Err(Error::InvalidArgument(format!(
                "row {i} out of range for n = {}",
                self.n()
            )));
        }
        Ok(Dataset {
            features: self.features.select(Axis(0), indices),
            labels: self.labels.select(Axis(0), indices),
            feature_names: self.feature_names.clone(),
        })
    }

    pub fn without_column(&self, column: usize) -> Result<Dataset> {
        if column >= self.m() {
            return Err(Error::InvalidArgument(format!(
                "column {column} out of range for m = {}",
                self.m()
            )));
        }
        if self.m() == 1 {
            return Err(Error::Data("cannot drop the only feature column".into()));
        }
        let keep: Vec<usize> = (0..self.m()).filter(|&j| j != column).collect();
        Ok(Dataset {
            features: self.features.select(Axis(1), &keep),
            labels: self.labels.clone(),
            feature_names: keep.iter().map(|&j| self.feature_names[j].clone()).collect(),
        })
    }

    /// Rows of `self` followed by rows of `other`.
    pub fn stack(&self, other: &Dataset) -> Result<Dataset> {
        if self.feature_names != other.feature_names {
            return Err(Error::Dimension("stacking datasets with different columns".into()));
        }
        Ok(Dataset {
            features: concatenate![Axis(0), self.features, other.features],
            labels: concatenate![Axis(0), self.labels, other.labels],
            feature_names: self.feature_names.clone(),
        })
    }
}

/// Prepends a column of ones to `features`.
pub fn design_matrix(features: ArrayView2<'_, f64>) -> Array2<f64> {
    let (n, m) = features.dim();
    let mut x = Array2::ones((n, m + 1));
    x.slice_mut(s![.., 1..]).assign(&features);
    x
}

/// Column roles for [`load_csv`], read from a TOML file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Schema {
    /// Name of the label column.
    pub label: String,
    /// Label cell value mapped to class 1.
    pub positive_label: String,
    /// When set, every label cell must equal either this or `positive_label`.
    #[serde(default)]
    pub negative_label: Option<String>,
    /// Columns one-hot encoded as `name=value`, categories in sorted order.
    #[serde(default)]
    pub categorical: Vec<String>,
    /// Numeric columns that get z-scored with training statistics.
    #[serde(default)]
    pub continuous: Vec<String>,
    #[serde(default)]
    pub drop: Vec<String>,
    #[serde(default)]
    pub sensitive: Vec<SensitiveDecl>,
}

/// A named sensitive attribute, given by encoded column names.
///
/// Each entry of `swaps` is either a single binary column, which is flipped,
/// or a pair of one-hot columns whose values are exchanged.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SensitiveDecl {
    pub name: String,
    pub swaps: Vec<Vec<String>>,
}

impl Schema {
    pub fn from_toml_str(s: &str) -> Result<Self> {
        toml::from_str(s).map_err(|e| Error::Config(format!("schema: {e}")))
    }

    pub fn from_file(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml_str(&text)
    }

    /// Resolves every sensitive declaration against the encoded columns.
    pub fn sensitive_specs(&self, dataset: &Dataset) -> Result<Vec<SensitiveSpec>> {
        self.sensitive
            .iter()
            .map(|decl| {
                let groups = decl
                    .swaps
                    .iter()
                    .map(|cols| {
                        let idx = cols
                            .iter()
                            .map(|c| {
                                dataset.column_index(c).ok_or_else(|| {
                                    Error::Config(format!(
                                        "sensitive '{}' references unknown column '{c}'",
                                        decl.name
                                    ))
                                })
                            })
                            .collect::<Result<Vec<_>>>()?;
                        SwapGroup::from_columns(&idx)
                    })
                    .collect::<Result<Vec<_>>>()?;
                SensitiveSpec::new(decl.name.clone(), groups, dataset.m())
            })
            .collect()
    }

    pub fn continuous_indices(&self, dataset: &Dataset) -> Result<Vec<usize>> {
        self.continuous
            .iter()
            .map(|c| {
                dataset
                    .column_index(c)
                    .ok_or_else(|| Error::Config(format!("unknown continuous column '{c}'")))
            })
            .collect()
    }
}

/// Loads a headered CSV and encodes it according to `schema`.
///
/// Numeric columns keep header order; one-hot blocks follow in the order
/// they are listed in `schema.categorical`.
pub fn load_csv(path: impl AsRef<Path>, schema: &Schema) -> Result<Dataset> {
    let path = path.as_ref();
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let csv_err = |message: String| Error::Csv {
        path: path.to_path_buf(),
        message,
    };
    let mut reader = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(file);
    let header: Vec<String> = reader
        .headers()
        .map_err(|e| csv_err(e.to_string()))?
        .iter()
        .map(str::to_owned)
        .collect();
    let position = |name: &str| header.iter().position(|h| h == name);

    let label_col = position(&schema.label)
        .ok_or_else(|| Error::Config(format!("label column '{}' not in header", schema.label)))?;
    for name in schema.categorical.iter().chain(&schema.continuous).chain(&schema.drop) {
        if position(name).is_none() {
            return Err(Error::Config(format!("schema column '{name}' not in header")));
        }
    }
    let categorical_cols: Vec<usize> =
        schema.categorical.iter().filter_map(|c| position(c)).collect();
    let dropped: Vec<usize> = schema.drop.iter().filter_map(|c| position(c)).collect();
    let numeric_cols: Vec<usize> = (0..header.len())
        .filter(|j| *j != label_col && !categorical_cols.contains(j) && !dropped.contains(j))
        .collect();

    let mut numeric: Vec<Vec<f64>> = Vec::new();
    let mut categories: Vec<Vec<String>> = Vec::new();
    let mut labels = Vec::new();
    for (row_idx, record) in reader.records().enumerate() {
        let record = record.map_err(|e| csv_err(e.to_string()))?;
        let line = row_idx + 2;
        if record.len() != header.len() {
            return Err(csv_err(format!(
                "line {line}: {} cells, expected {}",
                record.len(),
                header.len()
            )));
        }
        let cell = |j: usize| -> Result<&str> {
            let v = &record[j];
            if v.is_empty() {
                Err(Error::Data(format!("line {line}: missing value in '{}'", header[j])))
            } else {
                Ok(v)
            }
        };
        let label = cell(label_col)?;
        labels.push(if label == schema.positive_label {
            1.0
        } else {
            match &schema.negative_label {
                Some(neg) if neg != label => {
                    return Err(Error::Data(format!(
                        "line {line}: label '{label}' is neither '{}' nor '{neg}'",
                        schema.positive_label
                    )))
                }
                _ => 0.0,
            }
        });
        let mut nums = Vec::with_capacity(numeric_cols.len());
        for &j in &numeric_cols {
            let raw = cell(j)?;
            let v: f64 = raw.parse().map_err(|_| {
                Error::Data(format!(
                    "line {line}: non-numeric value '{raw}' in column '{}'",
                    header[j]
                ))
            })?;
            nums.push(v);
        }
        numeric.push(nums);
        categories.push(
            categorical_cols
                .iter()
                .map(|&j| cell(j).map(str::to_owned))
                .collect::<Result<_>>()?,
        );
    }

    let n = labels.len();
    if n < 2 {
        return Err(Error::Data(format!("{n} data rows, need at least 2")));
    }

    let levels: Vec<Vec<String>> = (0..categorical_cols.len())
        .map(|c| {
            categories
                .iter()
                .map(|row| row[c].clone())
                .collect::<BTreeSet<_>>()
                .into_iter()
                .collect()
        })
        .collect();

    let mut names: Vec<String> = numeric_cols.iter().map(|&j| header[j].clone()).collect();
    for (c, &j) in categorical_cols.iter().enumerate() {
        names.extend(levels[c].iter().map(|lv| format!("{}={lv}", header[j])));
    }
    let m = names.len();
    if m == 0 {
        return Err(Error::Data("no feature columns".into()));
    }

    let lookup: Vec<HashMap<&str, usize>> = levels
        .iter()
        .map(|lv| lv.iter().enumerate().map(|(i, s)| (s.as_str(), i)).collect())
        .collect();
    let mut features = Array2::zeros((n, m));
    for i in 0..n {
        let mut row = features.row_mut(i);
        for (j, v) in numeric[i].iter().enumerate() {
            row[j] = *v;
        }
        let mut offset = numeric_cols.len();
        for c in 0..categorical_cols.len() {
            row[offset + lookup[c][categories[i][c].as_str()]] = 1.0;
            offset += levels[c].len();
        }
    }

    let dataset = Dataset::new(features, Array1::from(labels), names)?;
    if !dataset.has_both_classes() {
        return Err(Error::Data("labels contain a single class".into()));
    }
    Ok(dataset)
}

/// Per-column z-scoring fitted on one partition and applied to others.
#[derive(Debug, Clone, PartialEq)]
pub struct Standardizer {
    columns: Vec<usize>,
    means: Vec<f64>,
    scales: Vec<f64>,
}

impl Standardizer {
    /// Population mean and standard deviation of each listed column.
    /// Constant columns get unit scale.
    pub fn fit(dataset: &Dataset, columns: &[usize]) -> Result<Self> {
        if let Some(&j) = columns.iter().find(|&&j| j >= dataset.m()) {
            return Err(Error::InvalidArgument(format!("column {j} out of range")));
        }
        let n = dataset.n() as f64;
        let x = dataset.features();
        let mut means = Vec::with_capacity(columns.len());
        let mut scales = Vec::with_capacity(columns.len());
        for &j in columns {
            let col = x.column(j);
            let mean = col.sum() / n;
            let var = col.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
            let sd = var.sqrt();
            means.push(mean);
            scales.push(if sd > 0.0 { sd } else { 1.0 });
        }
        Ok(Standardizer {
            columns: columns.to_vec(),
            means,
            scales,
        })
    }

    pub fn apply(&self, dataset: &Dataset) -> Result<Dataset> {
        let mut out = dataset.clone();
        for ((&j, &mean), &scale) in self.columns.iter().zip(&self.means).zip(&self.scales) {
            if j >= out.m() {
                return Err(Error::Dimension(format!("column {j} out of range")));
            }
            out.features.column_mut(j).mapv_inplace(|v| (v - mean) / scale);
        }
        Ok(out)
    }
}

/// One swap applied by [`perturb_sensitive`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SwapGroup {
    /// Binary column: 0 becomes 1 and 1 becomes 0.
    Flip(usize),
    /// Two mutually exclusive one-hot columns whose values are exchanged.
    Exchange(usize, usize),
}

impl SwapGroup {
    pub fn from_columns(columns: &[usize]) -> Result<Self> {
        match *columns {
            [c] => Ok(SwapGroup::Flip(c)),
            [a, b] if a != b => Ok(SwapGroup::Exchange(a, b)),
            _ => Err(Error::Config(format!(
                "swap group must name one binary column or two distinct one-hot columns, got {columns:?}"
            ))),
        }
    }

    fn columns(&self) -> Vec<usize> {
        match *self {
            SwapGroup::Flip(c) => vec![c],
            SwapGroup::Exchange(a, b) => vec![a, b],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SensitiveSpec {
    name: String,
    swap_groups: Vec<SwapGroup>,
}

impl SensitiveSpec {
    pub fn new(name: impl Into<String>, swap_groups: Vec<SwapGroup>, m: usize) -> Result<Self> {
        let name = name.into();
        if swap_groups.is_empty() {
            return Err(Error::Config(format!("sensitive spec '{name}' has no swaps")));
        }
        let mut seen = BTreeSet::new();
        for c in swap_groups.iter().flat_map(SwapGroup::columns) {
            if c >= m {
                return Err(Error::InvalidArgument(format!(
                    "sensitive spec '{name}' references column {c} but m = {m}"
                )));
            }
            if !seen.insert(c) {
                return Err(Error::Config(format!(
                    "sensitive spec '{name}' uses column {c} twice"
                )));
            }
        }
        Ok(SensitiveSpec { name, swap_groups })
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn swap_groups(&self) -> &[SwapGroup] {
        &self.swap_groups
    }

    pub fn columns(&self) -> Vec<usize> {
        self.swap_groups.iter().flat_map(SwapGroup::columns).collect()
    }
}

/// Swaps the sensitive categories of every row.
///
/// Only the spec's columns change, and applying it twice is the identity.
pub fn perturb_sensitive(dataset: &Dataset, spec: &SensitiveSpec) -> Result<Dataset> {
    let mut out = dataset.clone();
    for group in spec.swap_groups() {
        if let Some(&c) = group.columns().iter().find(|&&c| c >= dataset.m()) {
            return Err(Error::InvalidArgument(format!(
                "sensitive spec '{}' references column {c} but m = {}",
                spec.name(),
                dataset.m()
            )));
        }
        match *group {
            SwapGroup::Flip(c) => {
                for v in out.features.column_mut(c) {
                    *v = match *v {
                        0.0 => 1.0,
                        1.0 => 0.0,
                        other => {
                            return Err(Error::Data(format!(
                                "column '{}' holds {other}, flip needs 0/1",
                                dataset.feature_names[c]
                            )))
                        }
                    };
                }
            }
            SwapGroup::Exchange(a, b) => {
                for mut row in out.features.rows_mut() {
                    row.swap(a, b);
                }
            }
        }
    }
    Ok(out)
}

/// Splits rows by whether `column` equals `source_value` exactly.
/// Row order is preserved on both sides.
pub fn split_by_attribute(
    dataset: &Dataset,
    column: usize,
    source_value: f64,
) -> Result<(Dataset, Dataset)> {
    if column >= dataset.m() {
        return Err(Error::InvalidArgument(format!(
            "column {column} out of range for m = {}",
            dataset.m()
        )));
    }
    let (source, target): (Vec<usize>, Vec<usize>) =
        (0..dataset.n()).partition(|&i| dataset.features[[i, column]] == source_value);
    if source.is_empty() || target.is_empty() {
        return Err(Error::Data(format!(
            "split on '{}' = {source_value} leaves {} source and {} target rows",
            dataset.feature_names[column],
            source.len(),
            target.len()
        )));
    }
    Ok((dataset.subset(&source)?, dataset.subset(&target)?))
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FoldAssignment {
    fold_of: Vec<usize>,
    k: usize,
}

impl FoldAssignment {
    pub fn k(&self) -> usize {
        self.k
    }

    pub fn fold_of(&self) -> &[usize] {
        &self.fold_of
    }

    pub fn validation_indices(&self, fold: usize) -> Vec<usize> {
        (0..self.fold_of.len()).filter(|&i| self.fold_of[i] == fold).collect()
    }

    pub fn train_indices(&self, fold: usize) -> Vec<usize> {
        (0..self.fold_of.len()).filter(|&i| self.fold_of[i] != fold).collect()
    }

    /// `row_index,fold` lines with a header.
    pub fn to_csv_string(&self) -> String {
        let mut out = String::from("row_index,fold\n");
        for (i, f) in self.fold_of.iter().enumerate() {
            out.push_str(&format!("{i},{f}\n"));
        }
        out
    }
}

/// Stratified fold assignment.
///
/// Indices of each class are shuffled with a ChaCha8 stream seeded by `seed`
/// and dealt round-robin; the second class continues dealing where the first
/// stopped so fold sizes differ by at most one.
pub fn stratified_kfold(dataset: &Dataset, k: usize, seed: u64) -> Result<FoldAssignment> {
    if k < 2 {
        return Err(Error::InvalidArgument(format!("k = {k}, need k >= 2")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut fold_of = vec![0; dataset.n()];
    let mut next = 0;
    for class in [0.0, 1.0] {
        let mut idx: Vec<usize> = (0..dataset.n())
            .filter(|&i| dataset.labels[i] == class)
            .collect();
        if idx.len() < k {
            return Err(Error::Data(format!(
                "class {class} has {} samples, cannot stratify into {k} folds",
                idx.len()
            )));
        }
        idx.shuffle(&mut rng);
        for i in idx {
            fold_of[i] = next;
            next = (next + 1) % k;
        }
    }
    Ok(FoldAssignment { fold_of, k })
}
