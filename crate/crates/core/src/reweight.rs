//! Instance weights for the source rows: uniform under IID, inverse
//! propensity (density ratio through a domain classifier) under covariate
//! shift.

use ndarray::{concatenate, Array1, ArrayView1, ArrayView2, Axis};
use serde::{Deserialize, Serialize};

use crate::data::design_matrix;
use crate::error::{Error, Result};
use crate::model::{forward, train, TrainConfig, Variant, PROB_EPS};

/// Nonnegative, finite, not-all-zero per-row weights.
#[derive(Debug, Clone, PartialEq)]
pub struct ReweightVector {
    w: Array1<f64>,
}

impl ReweightVector {
    pub fn new(w: Array1<f64>) -> Result<Self> {
        if w.is_empty() {
            return Err(Error::InvalidArgument("empty weight vector".into()));
        }
        if w.iter().any(|v| !v.is_finite() || *v < 0.0) {
            return Err(Error::InvalidArgument("weights must be finite and >= 0".into()));
        }
        if w.iter().all(|v| *v == 0.0) {
            return Err(Error::InvalidArgument("weights are all zero".into()));
        }
        Ok(ReweightVector { w })
    }

    pub fn len(&self) -> usize {
        self.w.len()
    }

    pub fn is_empty(&self) -> bool {
        self.w.is_empty()
    }

    pub fn as_view(&self) -> ArrayView1<'_, f64> {
        self.w.view()
    }

    pub fn mean(&self) -> f64 {
        self.w.sum() / self.w.len() as f64
    }

    /// `row_index,weight` lines with a header.
    pub fn to_csv_string(&self) -> String {
        let mut out = String::from("row_index,weight\n");
        for (i, w) in self.w.iter().enumerate() {
            out.push_str(&format!("{i},{w}\n"));
        }
        out
    }
}

/// A vector of ones.
pub fn uniform_weights(n: usize) -> Result<ReweightVector> {
    ReweightVector::new(Array1::ones(n))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PropensityConfig {
    /// Weights are kept within `[1/clip, clip]`.
    pub clip: f64,
    /// Rescale to mean one (within the clip bounds).
    pub normalize: bool,
    pub lr: f64,
    pub tol: f64,
    pub max_epochs: usize,
}

impl Default for PropensityConfig {
    fn default() -> Self {
        PropensityConfig {
            clip: 10.0,
            normalize: true,
            lr: 0.1,
            tol: 1e-7,
            max_epochs: 200,
        }
    }
}

impl PropensityConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.clip >= 1.0 && self.clip.is_finite()) {
            return Err(Error::Config(format!("clip must be >= 1, got {}", self.clip)));
        }
        self.classifier().validate()
    }

    fn classifier(&self) -> TrainConfig {
        TrainConfig {
            alpha: 0.0,
            lr_train: self.lr,
            tol_train: self.tol,
            max_epochs: self.max_epochs,
            ..TrainConfig::default()
        }
    }
}

/// Inverse-propensity weights for the source rows.
///
/// A logistic domain classifier separates source (0) from target (1); each
/// source row gets `p/(1-p) * n_s/n_t`. The ratios are then scaled by the
/// single factor that makes the clipped weights average one, so both the
/// clip bounds and the unit mean hold exactly.
pub fn propensity_weights(
    x_s: ArrayView2<'_, f64>,
    x_t: ArrayView2<'_, f64>,
    config: &PropensityConfig,
) -> Result<ReweightVector> {
    config.validate()?;
    let (n_s, n_t) = (x_s.nrows(), x_t.nrows());
    if n_s == 0 || n_t == 0 {
        return Err(Error::Data("propensity weights need nonempty source and target".into()));
    }
    if x_s.ncols() != x_t.ncols() {
        return Err(Error::Dimension(format!(
            "source has {} features, target has {}",
            x_s.ncols(),
            x_t.ncols()
        )));
    }
    let stacked = design_matrix(concatenate![Axis(0), x_s, x_t].view());
    let domain = Array1::from_iter((0..n_s + n_t).map(|i| if i < n_s { 0.0 } else { 1.0 }));
    let fit = train(
        stacked.view(),
        domain.view(),
        &uniform_weights(n_s + n_t)?,
        None,
        &config.classifier(),
        Variant::Lr,
    )?;
    let p = forward(design_matrix(x_s).view(), fit.params.theta.view())?;
    let scale = n_s as f64 / n_t as f64;
    let ratios = p.mapv(|pi| {
        let pi = pi.clamp(PROB_EPS, 1.0 - PROB_EPS);
        pi / (1.0 - pi) * scale
    });
    let (lo, hi) = (1.0 / config.clip, config.clip);
    let w = if config.normalize {
        let c = unit_mean_scale(ratios.view(), lo, hi);
        ratios.mapv(|r| (c * r).clamp(lo, hi))
    } else {
        ratios.mapv(|r| r.clamp(lo, hi))
    };
    ReweightVector::new(w)
}

/// The factor `c` with `mean(clamp(c r_i, lo, hi)) = 1`, for positive `r`
/// and `lo <= 1 <= hi`.
fn unit_mean_scale(r: ArrayView1<'_, f64>, lo: f64, hi: f64) -> f64 {
    let n = r.len() as f64;
    let total = |c: f64| r.iter().map(|&ri| (c * ri).clamp(lo, hi)).sum::<f64>();
    let mut breaks: Vec<f64> = r.iter().flat_map(|&ri| [lo / ri, hi / ri]).collect();
    breaks.sort_by(f64::total_cmp);
    // First breakpoint where the clipped sum reaches n; the answer lies in
    // the segment ending there, on which the sum is affine in c.
    let k = breaks.partition_point(|&c| total(c) < n);
    if k == breaks.len() {
        return breaks[k - 1];
    }
    if k == 0 {
        return breaks[0];
    }
    let mid = 0.5 * (breaks[k - 1] + breaks[k]);
    let (mut fixed, mut slope) = (0.0, 0.0);
    for &ri in r {
        let v = mid * ri;
        if v <= lo {
            fixed += lo;
        } else if v >= hi {
            fixed += hi;
        } else {
            slope += ri;
        }
    }
    if slope == 0.0 {
        breaks[k]
    } else {
        (n - fixed) / slope
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::{array, Array2};
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn uniform_is_all_ones() {
        assert_eq!(uniform_weights(3).unwrap().as_view(), array![1.0, 1.0, 1.0]);
        assert_eq!(uniform_weights(1).unwrap().as_view(), array![1.0]);
        assert_eq!(uniform_weights(7).unwrap().as_view().sum(), 7.0);
        assert!(uniform_weights(0).is_err());
    }

    #[test]
    fn vector_invariants() {
        assert!(ReweightVector::new(array![1.0, -0.1]).is_err());
        assert!(ReweightVector::new(array![0.0, 0.0]).is_err());
        assert!(ReweightVector::new(array![0.0, f64::INFINITY]).is_err());
        assert!(ReweightVector::new(array![0.0, 2.0]).is_ok());
    }

    #[test]
    fn identical_domains_give_unit_weights() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let x = Array2::from_shape_fn((60, 3), |_| rng.random_range(-1.0..1.0));
        let w = propensity_weights(x.view(), x.view(), &PropensityConfig::default()).unwrap();
        for v in w.as_view() {
            assert!((v - 1.0).abs() < 0.1, "{v}");
        }
    }

    #[test]
    fn clip_one_collapses_to_ones() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let xs = Array2::from_shape_fn((30, 2), |_| rng.random_range(-1.0..0.0));
        let xt = Array2::from_shape_fn((20, 2), |_| rng.random_range(0.0..1.0));
        let cfg = PropensityConfig { clip: 1.0, ..Default::default() };
        let w = propensity_weights(xs.view(), xt.view(), &cfg).unwrap();
        assert!(w.as_view().iter().all(|&v| v == 1.0));
    }

    #[test]
    fn shifted_domains_respect_bounds_and_mean() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let xs = Array2::from_shape_fn((50, 2), |_| rng.random_range(-2.0..1.0));
        let xt = Array2::from_shape_fn((80, 2), |_| rng.random_range(-1.0..2.0));
        let cfg = PropensityConfig { clip: 3.0, ..Default::default() };
        let w = propensity_weights(xs.view(), xt.view(), &cfg).unwrap();
        assert!((w.mean() - 1.0).abs() < 1e-12);
        assert!(w.as_view().iter().all(|&v| (1.0 / 3.0..=3.0).contains(&v)));
        // rows closer to the target region weigh more
        let (imax, _) = w.as_view().iter().enumerate().fold((0, 0.0), |acc, (i, &v)| if v > acc.1 { (i, v) } else { acc });
        let (imin, _) = w.as_view().iter().enumerate().fold((0, f64::MAX), |acc, (i, &v)| if v < acc.1 { (i, v) } else { acc });
        assert!(xs.row(imax).sum() > xs.row(imin).sum());
    }

    #[test]
    fn rejects_bad_inputs() {
        let a = Array2::<f64>::zeros((3, 2));
        let b = Array2::<f64>::zeros((3, 3));
        let cfg = PropensityConfig::default();
        assert!(propensity_weights(a.view(), b.view(), &cfg).is_err());
        assert!(propensity_weights(a.view(), Array2::zeros((0, 2)).view(), &cfg).is_err());
        let bad = PropensityConfig { clip: 0.5, ..Default::default() };
        assert!(propensity_weights(a.view(), a.view(), &bad).is_err());
    }

    #[test]
    fn csv_export() {
        let csv = ReweightVector::new(array![0.5, 1.5]).unwrap().to_csv_string();
        assert_eq!(csv, "row_index,weight\n0,0.5\n1,1.5\n");
    }

    proptest! {
        #[test]
        fn scale_solves_clipped_unit_mean(
            r in proptest::collection::vec(1e-3f64..1e3, 1..60),
            clip in 1.0f64..20.0,
        ) {
            let r = Array1::from(r);
            let (lo, hi) = (1.0 / clip, clip);
            let c = unit_mean_scale(r.view(), lo, hi);
            let w = r.mapv(|v| (c * v).clamp(lo, hi));
            prop_assert!((w.mean().unwrap() - 1.0).abs() < 1e-12);
        }

        #[test]
        fn permuting_sources_permutes_weights(seed in any::<u64>()) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let xs = Array2::from_shape_fn((15, 2), |_| rng.random_range(-1.0..1.0));
            let xt = Array2::from_shape_fn((10, 2), |_| rng.random_range(-0.5..1.5));
            let mut perm: Vec<usize> = (0..15).collect();
            rand::seq::SliceRandom::shuffle(perm.as_mut_slice(), &mut rng);
            let cfg = PropensityConfig::default();
            let w = propensity_weights(xs.view(), xt.view(), &cfg).unwrap();
            let wp = propensity_weights(xs.select(Axis(0), &perm).view(), xt.view(), &cfg).unwrap();
            for (k, &i) in perm.iter().enumerate() {
                prop_assert!((wp.as_view()[k] - w.as_view()[i]).abs() < 1e-9);
            }
        }
    }
}
