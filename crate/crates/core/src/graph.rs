//! Similarity kernels, the unnormalized graph Laplacian and its quadratic
//! form, plus a checker for the pairwise Lipschitz condition.

use ndarray::{Array1, Array2, ArrayView1, ArrayView2, Zip};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

const PARALLEL_ROWS: usize = 256;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Distance {
    #[default]
    Euclidean,
}

impl Distance {
    pub fn between(&self, a: ArrayView1<'_, f64>, b: ArrayView1<'_, f64>) -> f64 {
        match self {
            Distance::Euclidean => Zip::from(a)
                .and(b)
                .fold(0.0, |acc, &x, &y| acc + (x - y) * (x - y))
                .sqrt(),
        }
    }
}

/// `K_ij = exp(-delta * d(x_i, x_j))`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct KernelParams {
    pub delta: f64,
    pub distance: Distance,
}

impl Default for KernelParams {
    fn default() -> Self {
        KernelParams {
            delta: 5.0,
            distance: Distance::Euclidean,
        }
    }
}

impl KernelParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.delta > 0.0 && self.delta.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "kernel delta must be positive, got {}",
                self.delta
            )));
        }
        Ok(())
    }
}

/// Symmetric pairwise similarity matrix with unit diagonal.
///
/// Off-diagonal entries lie in `[0, 1]`; they are strictly positive unless
/// `exp` underflows for very distant rows.
#[derive(Debug, Clone, PartialEq)]
pub struct SimilarityMatrix {
    k: Array2<f64>,
}

impl SimilarityMatrix {
    /// Wraps a precomputed matrix after checking the invariants.
    pub fn from_matrix(k: Array2<f64>) -> Result<Self> {
        let n = k.nrows();
        if n != k.ncols() {
            return Err(Error::Dimension(format!("kernel is {}x{}", n, k.ncols())));
        }
        for i in 0..n {
            if k[[i, i]] != 1.0 {
                return Err(Error::InvalidArgument(format!("K[{i}][{i}] = {}", k[[i, i]])));
            }
            for j in (i + 1)..n {
                let v = k[[i, j]];
                if v != k[[j, i]] || !(0.0..=1.0).contains(&v) {
                    return Err(Error::InvalidArgument(format!(
                        "K[{i}][{j}] = {v}, K[{j}][{i}] = {}",
                        k[[j, i]]
                    )));
                }
            }
        }
        Ok(SimilarityMatrix { k })
    }

    pub fn n(&self) -> usize {
        self.k.nrows()
    }

    pub fn matrix(&self) -> ArrayView2<'_, f64> {
        self.k.view()
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.k[[i, j]]
    }

    pub fn to_csv_string(&self) -> String {
        matrix_to_csv(self.k.view())
    }
}

/// Builds the similarity matrix of the rows of `x`.
///
/// Each unordered pair is evaluated once and mirrored; rows are processed in
/// parallel but every entry comes from the same arithmetic, so the result
/// does not depend on the thread count.
pub fn pairwise_kernel(x: ArrayView2<'_, f64>, params: &KernelParams) -> Result<SimilarityMatrix> {
    params.validate()?;
    let n = x.nrows();
    if n == 0 {
        return Err(Error::Data("kernel of an empty matrix".into()));
    }
    if x.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("kernel input features".into()));
    }
    let upper: Vec<Vec<f64>> = (0..n)
        .into_par_iter()
        .map(|i| {
            let xi = x.row(i);
            ((i + 1)..n)
                .map(|j| (-params.delta * params.distance.between(xi, x.row(j))).exp())
                .collect()
        })
        .collect();
    let mut k = Array2::eye(n);
    for (i, row) in upper.into_iter().enumerate() {
        for (off, v) in row.into_iter().enumerate() {
            let j = i + 1 + off;
            k[[i, j]] = v;
            k[[j, i]] = v;
        }
    }
    Ok(SimilarityMatrix { k })
}

/// `L = M - K` with `M = diag(row sums of K)`.
#[derive(Debug, Clone, PartialEq)]
pub struct GraphLaplacian {
    l: Array2<f64>,
    degree: Array1<f64>,
}

impl GraphLaplacian {
    pub fn n(&self) -> usize {
        self.degree.len()
    }

    pub fn matrix(&self) -> ArrayView2<'_, f64> {
        self.l.view()
    }

    pub fn degree(&self) -> ArrayView1<'_, f64> {
        self.degree.view()
    }

    /// `L f`.
    pub fn apply(&self, f: ArrayView1<'_, f64>) -> Result<Array1<f64>> {
        if f.len() != self.n() {
            return Err(Error::Dimension(format!(
                "vector of length {} against {}-node Laplacian",
                f.len(),
                self.n()
            )));
        }
        // Σ_j L_ij (f_j - f_i): equal to (L f)_i because rows of L sum to zero,
        // and exactly zero for constant f.
        let row = |i: usize| {
            let fi = f[i];
            self.l
                .row(i)
                .iter()
                .zip(f.iter())
                .fold(0.0, |acc, (&lij, &fj)| acc + lij * (fj - fi))
        };
        let n = self.n();
        let out: Vec<f64> = if n >= PARALLEL_ROWS {
            (0..n).into_par_iter().map(row).collect()
        } else {
            (0..n).map(row).collect()
        };
        Ok(Array1::from(out))
    }

    pub fn to_csv_string(&self) -> String {
        matrix_to_csv(self.l.view())
    }
}

pub fn laplacian(k: &SimilarityMatrix) -> GraphLaplacian {
    // Degree includes the self-similarity K_ii = 1; it cancels on the diagonal of L.
    let degree = k.k.sum_axis(ndarray::Axis(1));
    let mut l = -&k.k;
    for (i, d) in degree.iter().enumerate() {
        l[[i, i]] += d;
    }
    GraphLaplacian { l, degree }
}

/// Graph Laplacian regularizer `½ fᵀ L f`.
pub fn quadratic_form(l: &GraphLaplacian, f: ArrayView1<'_, f64>) -> Result<f64> {
    let lf = l.apply(f)?;
    Ok(0.5 * f.dot(&lf))
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LipschitzReport {
    pub violations: usize,
    pub pairs: Vec<(usize, usize)>,
}

/// Unordered pairs `i < j` with `|f_i - f_j| > tau * d(x_i, x_j)`.
pub fn lipschitz_violations(
    outputs: ArrayView1<'_, f64>,
    x: ArrayView2<'_, f64>,
    tau: f64,
    distance: Distance,
) -> Result<LipschitzReport> {
    if tau.is_nan() || tau <= 0.0 {
        return Err(Error::InvalidArgument(format!("tau must be positive, got {tau}")));
    }
    if outputs.len() != x.nrows() {
        return Err(Error::Dimension(format!(
            "{} outputs for {} rows",
            outputs.len(),
            x.nrows()
        )));
    }
    let n = outputs.len();
    let mut pairs = Vec::new();
    for i in 0..n {
        for j in (i + 1)..n {
            let gap = (outputs[i] - outputs[j]).abs();
            if gap > tau * distance.between(x.row(i), x.row(j)) {
                pairs.push((i, j));
            }
        }
    }
    Ok(LipschitzReport {
        violations: pairs.len(),
        pairs,
    })
}

fn matrix_to_csv(m: ArrayView2<'_, f64>) -> String {
    let mut out = String::new();
    for row in m.rows() {
        let cells: Vec<String> = row.iter().map(|v| v.to_string()).collect();
        out.push_str(&cells.join(","));
        out.push('\n');
    }
    out
}
