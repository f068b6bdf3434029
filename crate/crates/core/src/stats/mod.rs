//! One-way ANOVA and Tukey's HSD over per-fold scores.

pub mod quadrature;
pub mod studentized_range;

use statrs::distribution::{ContinuousCDF, FisherSnedecor};

use crate::error::{Error, Result};

/// Validated groups of observations, one group per treatment.
#[derive(Debug, Clone, PartialEq)]
pub struct ScoreGroups {
    labels: Vec<String>,
    groups: Vec<Vec<f64>>,
}

impl ScoreGroups {
    /// Groups labelled by their index.
    pub fn new(groups: Vec<Vec<f64>>) -> Result<Self> {
        let labels = (0..groups.len()).map(|i| i.to_string()).collect();
        Self::labeled(labels, groups)
    }

    pub fn labeled(labels: Vec<String>, groups: Vec<Vec<f64>>) -> Result<Self> {
        if labels.len() != groups.len() {
            return Err(Error::Dimension(format!("{} labels for {} groups", labels.len(), groups.len())));
        }
        if groups.len() < 2 {
            return Err(Error::InvalidArgument(format!("need at least 2 groups, got {}", groups.len())));
        }
        for (i, g) in groups.iter().enumerate() {
            if g.len() < 2 {
                return Err(Error::InvalidArgument(format!("group {i} has fewer than 2 observations")));
            }
            if g.iter().any(|v| !v.is_finite()) {
                return Err(Error::NonFinite(format!("group {i} contains a non-finite value")));
            }
        }
        Ok(ScoreGroups { labels, groups })
    }

    pub fn labels(&self) -> &[String] {
        &self.labels
    }

    pub fn groups(&self) -> &[Vec<f64>] {
        &self.groups
    }

    pub fn len(&self) -> usize {
        self.groups.len()
    }

    pub fn is_empty(&self) -> bool {
        self.groups.is_empty()
    }

    pub fn total(&self) -> usize {
        self.groups.iter().map(Vec::len).sum()
    }

    pub fn means(&self) -> Vec<f64> {
        self.groups.iter().map(|g| mean(g)).collect()
    }

    /// Within-group sum of squares and its degrees of freedom.
    fn within(&self) -> (f64, f64) {
        let ssw = self
            .groups
            .iter()
            .map(|g| {
                let m = mean(g);
                g.iter().map(|v| (v - m).powi(2)).sum::<f64>()
            })
            .sum();
        (ssw, (self.total() - self.len()) as f64)
    }
}

pub fn mean(values: &[f64]) -> f64 {
    values.iter().sum::<f64>() / values.len() as f64
}

/// Sample standard deviation (n - 1 denominator). Zero for fewer than two values.
pub fn sample_std(values: &[f64]) -> f64 {
    if values.len() < 2 {
        return 0.0;
    }
    let m = mean(values);
    (values.iter().map(|v| (v - m).powi(2)).sum::<f64>() / (values.len() - 1) as f64).sqrt()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AnovaResult {
    pub f: f64,
    pub p_value: f64,
    pub df_between: f64,
    pub df_within: f64,
    pub ss_between: f64,
    pub ss_within: f64,
}

pub fn one_way_anova(groups: &ScoreGroups) -> Result<AnovaResult> {
    let means = groups.means();
    let grand = mean(&groups.groups.concat());
    // Equal means give exactly zero rather than rounding residue around `grand`.
    let ss_between: f64 = if means.iter().all(|&m| m == means[0]) {
        0.0
    } else {
        groups.groups.iter().zip(&means).map(|(g, &m)| g.len() as f64 * (m - grand).powi(2)).sum()
    };
    let (ss_within, df_within) = groups.within();
    let df_between = (groups.len() - 1) as f64;
    let (f, p_value) = if ss_within == 0.0 {
        if ss_between == 0.0 {
            return Err(Error::Undefined("ANOVA of identical constant groups".into()));
        }
        (f64::INFINITY, 0.0)
    } else {
        let f = (ss_between / df_between) / (ss_within / df_within);
        let dist = FisherSnedecor::new(df_between, df_within)
            .map_err(|e| Error::InvalidArgument(e.to_string()))?;
        (f, dist.sf(f))
    };
    Ok(AnovaResult { f, p_value, df_between, df_within, ss_between, ss_within })
}

/// One pairwise comparison: `statistic = mean[a] - mean[b]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TukeyRow {
    pub a: usize,
    pub b: usize,
    pub statistic: f64,
    pub p_value: f64,
    pub ci_low: f64,
    pub ci_high: f64,
}

/// Tukey's honestly significant difference for equal-size groups.
///
/// Rows cover every ordered pair `a != b`, sorted by `a` then `b`.
pub fn tukey_hsd(groups: &ScoreGroups, confidence: f64) -> Result<Vec<TukeyRow>> {
    if !(confidence > 0.0 && confidence < 1.0) {
        return Err(Error::InvalidArgument(format!("confidence must be in (0, 1), got {confidence}")));
    }
    let size = groups.groups[0].len();
    if groups.groups.iter().any(|g| g.len() != size) {
        return Err(Error::InvalidArgument("Tukey HSD here requires equal group sizes".into()));
    }
    let k = groups.len();
    let (ssw, df) = groups.within();
    let msw = ssw / df;
    let se = (msw / size as f64).sqrt();
    let q_crit = studentized_range::quantile(confidence, k, df)?;
    let means = groups.means();
    let mut rows = Vec::with_capacity(k * (k - 1));
    for a in 0..k {
        for b in (0..k).filter(|&b| b != a) {
            let statistic = means[a] - means[b];
            let p_value = if se == 0.0 {
                if statistic == 0.0 { 1.0 } else { 0.0 }
            } else {
                studentized_range::sf(statistic.abs() / se, k, df)?
            };
            let half = q_crit * se;
            rows.push(TukeyRow {
                a,
                b,
                statistic,
                p_value,
                ci_low: statistic - half,
                ci_high: statistic + half,
            });
        }
    }
    Ok(rows)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn textbook() -> ScoreGroups {
        ScoreGroups::new(vec![
            vec![6.0, 8.0, 4.0, 5.0, 3.0],
            vec![8.0, 12.0, 9.0, 11.0, 6.0],
            vec![13.0, 9.0, 11.0, 8.0, 7.0],
        ])
        .unwrap()
    }

    #[test]
    fn anova_textbook() {
        let r = one_way_anova(&textbook()).unwrap();
        assert!((r.ss_between - 59.2).abs() < 1e-12);
        assert!((r.ss_within - 60.8).abs() < 1e-12);
        assert!((r.f - 5.842105263157896).abs() < 1e-12);
        assert!((r.p_value - 0.01691741485440876).abs() < 1e-10);
        assert_eq!((r.df_between, r.df_within), (2.0, 12.0));
    }

    #[test]
    fn anova_degenerate() {
        let same = ScoreGroups::new(vec![vec![1.0, 1.0], vec![1.0, 1.0]]).unwrap();
        assert!(matches!(one_way_anova(&same), Err(Error::Undefined(_))));
        let apart = ScoreGroups::new(vec![vec![1.0, 1.0], vec![2.0, 2.0]]).unwrap();
        let r = one_way_anova(&apart).unwrap();
        assert_eq!((r.f, r.p_value), (f64::INFINITY, 0.0));
    }

    #[test]
    fn group_validation() {
        assert!(ScoreGroups::new(vec![vec![1.0, 2.0]]).is_err());
        assert!(ScoreGroups::new(vec![vec![1.0, 2.0], vec![1.0]]).is_err());
        assert!(ScoreGroups::new(vec![vec![1.0, 2.0], vec![1.0, f64::NAN]]).is_err());
    }

    #[test]
    fn tukey_textbook() {
        let rows = tukey_hsd(&textbook(), 0.95).unwrap();
        let pairs: Vec<_> = rows.iter().map(|r| (r.a, r.b)).collect();
        assert_eq!(pairs, vec![(0, 1), (0, 2), (1, 0), (1, 2), (2, 0), (2, 1)]);
        for r in &rows {
            let mirror = rows.iter().find(|m| (m.a, m.b) == (r.b, r.a)).unwrap();
            assert_eq!(r.statistic, -mirror.statistic);
            assert_eq!(r.p_value, mirror.p_value);
            assert!(r.ci_low <= r.statistic && r.statistic <= r.ci_high);
        }
        // means 5.2, 9.2, 9.6; MSW = 60.8/12; se = sqrt(MSW/5)
        let se = (60.8f64 / 12.0 / 5.0).sqrt();
        let half = 3.772928965726967 * se;
        assert!((rows[0].statistic + 4.0).abs() < 1e-12);
        assert!((rows[0].ci_low - (-4.0 - half)).abs() < 1e-7);
        assert!((rows[1].ci_high - (-4.4 + half)).abs() < 1e-7);
        // scipy.stats.tukey_hsd on the same data
        assert!((rows[0].p_value - 0.03891349721101467).abs() < 1e-8);
        assert!((rows[1].p_value - 0.023563032482236346).abs() < 1e-8);
        assert!((rows[3].p_value - 0.9575661165283808).abs() < 1e-8);
    }

    #[test]
    fn identical_groups_show_no_effect() {
        let g = vec![0.2, 0.4, 0.5, 0.9, 1.0];
        let groups = ScoreGroups::new(vec![g.clone(), g.clone(), g]).unwrap();
        let r = one_way_anova(&groups).unwrap();
        assert_eq!((r.f, r.p_value), (0.0, 1.0));
        for row in tukey_hsd(&groups, 0.95).unwrap() {
            assert_eq!(row.statistic, 0.0);
            assert_eq!(row.p_value, 1.0);
            assert_eq!(row.ci_low, -row.ci_high);
        }
    }

    #[test]
    fn reproduces_published_fnr_comparisons() {
        // Fold vectors with means 0.763, 0.743, 0.518 and a spread chosen so
        // the 95% half-width is 0.0612.
        let q = 3.772928965726967;
        let se: f64 = 0.0612 / q;
        let c = (5.0 * se * se / 2.5).sqrt();
        let make = |m: f64| (-2..=2).map(|i| m + c * i as f64).collect::<Vec<_>>();
        let labels = vec!["IFDA".to_string(), "IFRT".into(), "LR".into()];
        let groups = ScoreGroups::labeled(labels, vec![make(0.763), make(0.743), make(0.518)]).unwrap();
        let rows = tukey_hsd(&groups, 0.95).unwrap();
        let close = |a: f64, b: f64| (a - b).abs() < 2e-3;
        // (0 - 1) 0.020 0.668 -0.041 0.081
        assert!(close(rows[0].statistic, 0.020) && close(rows[0].p_value, 0.668));
        assert!(close(rows[0].ci_low, -0.041) && close(rows[0].ci_high, 0.081));
        // (0 - 2) 0.245 0.000 0.184 0.307
        assert!(close(rows[1].statistic, 0.245) && rows[1].p_value < 5e-4);
        assert!(close(rows[1].ci_low, 0.184) && close(rows[1].ci_high, 0.307));
        // (1 - 2) 0.225 0.000 0.164 0.287
        assert!(close(rows[3].statistic, 0.225) && rows[3].p_value < 5e-4);
        assert!(close(rows[3].ci_low, 0.164) && close(rows[3].ci_high, 0.287));
        assert_eq!(groups.labels()[rows[1].b], "LR");
    }

    #[test]
    fn tukey_requires_equal_sizes() {
        let g = ScoreGroups::new(vec![vec![1.0, 2.0], vec![1.0, 2.0, 3.0]]).unwrap();
        assert!(tukey_hsd(&g, 0.95).is_err());
        assert!(tukey_hsd(&textbook(), 1.0).is_err());
    }

    #[test]
    fn std_uses_sample_denominator() {
        assert!((sample_std(&[1.0, 2.0, 3.0, 4.0]) - (5.0f64 / 3.0).sqrt()).abs() < 1e-15);
        assert_eq!(sample_std(&[2.0]), 0.0);
    }
}
