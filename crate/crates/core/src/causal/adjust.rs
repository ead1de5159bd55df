//! Covariate model and the backdoor adjustment sum over `x2`.

use serde::{Deserialize, Serialize};

use crate::environment::{CategoricalSpec, GroundTruth};
use crate::error::{Error, Result};
use crate::features::Cell;
use crate::glm::FittedModel;
use crate::scenarios::Interaction;

pub const DEFAULT_COV_ALPHA: f64 = 0.5;

/// Estimated `P(x2 | x1)` with the counts it came from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CovModel {
    pub p_x2_given_x1_hat: Vec<Vec<f64>>,
    pub counts: Vec<Vec<u64>>,
}

impl CovModel {
    /// The true covariate model of `gt`, with empty counts.
    pub fn from_ground_truth(gt: &GroundTruth) -> Self {
        Self {
            p_x2_given_x1_hat: gt.p_x2_given_x1.clone(),
            counts: vec![vec![0; gt.spec.k2]; gt.spec.k1],
        }
    }

    /// Point mass on `x2 = j` for every `x1`.
    pub fn point_mass(spec: &CategoricalSpec, j: usize) -> Result<Self> {
        if j >= spec.k2 {
            return Err(Error::OutOfRange {
                what: "x2",
                value: j,
                card: spec.k2,
            });
        }
        let mut row = vec![0.0; spec.k2];
        row[j] = 1.0;
        Ok(Self {
            p_x2_given_x1_hat: vec![row; spec.k1],
            counts: vec![vec![0; spec.k2]; spec.k1],
        })
    }

    pub fn k1(&self) -> usize {
        self.p_x2_given_x1_hat.len()
    }

    pub fn k2(&self) -> usize {
        self.p_x2_given_x1_hat.first().map_or(0, Vec::len)
    }

    pub fn row(&self, x1: usize) -> &[f64] {
        &self.p_x2_given_x1_hat[x1]
    }

    /// Largest absolute difference to the true `P(x2 | x1)`.
    pub fn max_abs_error(&self, gt: &GroundTruth) -> f64 {
        self.p_x2_given_x1_hat
            .iter()
            .zip(&gt.p_x2_given_x1)
            .flat_map(|(a, b)| a.iter().zip(b).map(|(x, y)| (x - y).abs()))
            .fold(0.0, f64::max)
    }
}

pub fn fit_cov_model(records: &[Interaction], spec: &CategoricalSpec) -> Result<CovModel> {
    fit_cov_model_with(records, spec, DEFAULT_COV_ALPHA)
}

/// Add-`alpha` smoothed row frequencies. Rows with no mass at all come out
/// uniform.
pub fn fit_cov_model_with(records: &[Interaction], spec: &CategoricalSpec, alpha: f64) -> Result<CovModel> {
    if !(alpha >= 0.0 && alpha.is_finite()) {
        return Err(Error::InvalidParameter(format!("smoothing alpha must be >= 0, got {alpha}")));
    }
    let mut counts = vec![vec![0u64; spec.k2]; spec.k1];
    for r in records {
        if r.x1 >= spec.k1 {
            return Err(Error::OutOfRange {
                what: "x1",
                value: r.x1,
                card: spec.k1,
            });
        }
        if r.x2 >= spec.k2 {
            return Err(Error::OutOfRange {
                what: "x2",
                value: r.x2,
                card: spec.k2,
            });
        }
        counts[r.x1][r.x2] += 1;
    }
    let p = counts
        .iter()
        .map(|row| {
            let total: f64 = row.iter().map(|&c| c as f64 + alpha).sum();
            if total > 0.0 {
                row.iter().map(|&c| (c as f64 + alpha) / total).collect()
            } else {
                vec![1.0 / spec.k2 as f64; spec.k2]
            }
        })
        .collect();
    Ok(CovModel {
        p_x2_given_x1_hat: p,
        counts,
    })
}

/// `Σ_x2 P(c | x1, x2, a) P(x2 | x1)` with the click model `full_model` and
/// the covariate model `cov`. `a` is a joint action index.
pub fn backdoor_adjust(full_model: &FittedModel, cov: &CovModel, x1: usize, a: usize) -> Result<f64> {
    let fs = &full_model.feature_spec;
    if !fs.included.x2 {
        return Err(Error::InvalidParameter(format!(
            "adjusting over x2 needs a model that uses x2, got {}",
            fs.descriptor()
        )));
    }
    let spec = fs.spec;
    if cov.k1() != spec.k1 || cov.k2() != spec.k2 {
        return Err(Error::ShapeMismatch(format!(
            "covariate model is {}x{}, model expects {}x{}",
            cov.k1(),
            cov.k2(),
            spec.k1,
            spec.k2
        )));
    }
    if x1 >= spec.k1 {
        return Err(Error::OutOfRange {
            what: "x1",
            value: x1,
            card: spec.k1,
        });
    }
    let (act, d) = spec.split_action(a);
    let mut total = 0.0;
    for (x2, &w) in cov.row(x1).iter().enumerate() {
        total += w * full_model.predict(&Cell::with_decision(x1, x2, act, d))?;
    }
    Ok(total)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::environment::make_default_ground_truth;
    use crate::features::{CovariateSet, FeatureSpec};
    use crate::glm::Target;

    fn rec(x1: usize, x2: usize) -> Interaction {
        Interaction {
            day: 0,
            x1,
            x2,
            a: 0,
            d: None,
            propensity: 1.0,
            c: false,
            s: None,
            arm: None,
        }
    }

    fn exact_model(gt: &GroundTruth) -> FittedModel {
        let fs = FeatureSpec::over_actions(CovariateSet::BOTH, gt.spec);
        let mut beta = vec![0.0; fs.dim()];
        for x1 in 0..gt.spec.k1 {
            for x2 in 0..gt.spec.k2 {
                for a in 0..gt.spec.n_actions {
                    let cell = Cell::new(x1, x2, a);
                    beta[fs.encode(&cell).unwrap()] = gt.click_logit[(x1 * gt.spec.k2 + x2) * gt.spec.n_actions + a];
                }
            }
        }
        FittedModel::from_beta(fs, beta, Target::Click).unwrap()
    }

    #[test]
    fn normalized_counts_without_smoothing() {
        let spec = CategoricalSpec::new(2, 2, 2).unwrap();
        let recs = vec![rec(0, 0), rec(0, 0), rec(0, 0), rec(0, 1)];
        let cov = fit_cov_model_with(&recs, &spec, 0.0).unwrap();
        assert_eq!(cov.row(0), &[0.75, 0.25]);
        assert_eq!(cov.counts[0], vec![3, 1]);
    }

    #[test]
    fn empty_rows_are_uniform() {
        let spec = CategoricalSpec::new(2, 4, 2).unwrap();
        let cov = fit_cov_model(&[rec(0, 1)], &spec).unwrap();
        assert_eq!(cov.row(1), &[0.25; 4]);
        let cov0 = fit_cov_model_with(&[], &spec, 0.0).unwrap();
        assert_eq!(cov0.row(0), &[0.25; 4]);
        for row in &cov.p_x2_given_x1_hat {
            assert!((row.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn point_mass_picks_one_prediction() {
        let gt = make_default_ground_truth(CategoricalSpec::default(), 3, 0.0).unwrap();
        let m = exact_model(&gt);
        let cov = CovModel::point_mass(&gt.spec, 2).unwrap();
        let got = backdoor_adjust(&m, &cov, 1, 4).unwrap();
        assert_eq!(got, m.predict(&Cell::new(1, 2, 4)).unwrap());
    }

    #[test]
    fn exact_inputs_reproduce_interventional_ctr() {
        let gt = make_default_ground_truth(CategoricalSpec::default(), 11, 0.0).unwrap();
        let m = exact_model(&gt);
        let cov = CovModel::from_ground_truth(&gt);
        for x1 in 0..gt.spec.k1 {
            for a in 0..gt.spec.n_actions {
                let adj = backdoor_adjust(&m, &cov, x1, a).unwrap();
                assert!((adj - gt.interventional_ctr(x1, a)).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn x1_only_model_rejected() {
        let spec = CategoricalSpec::default();
        let fs = FeatureSpec::over_actions(CovariateSet::X1, spec);
        let m = FittedModel::from_beta(fs, vec![0.0; fs.dim()], Target::Click).unwrap();
        let cov = CovModel::point_mass(&spec, 0).unwrap();
        assert!(backdoor_adjust(&m, &cov, 0, 0).is_err());
    }
}
