//! Post-click sales from two separately trained models.
//!
//! The recommendation maximises `P(s = 1 | a, x', c = 1) P(c = 1 | a, x'')`.
//! Day 0 explores uniformly. Day 1 deploys an epsilon-greedy product policy
//! built from full-feature models, so its actions depend on both covariates.
//! The sale model (on `x'`) and the click model (on `x''`) are then fit on
//! day 1's log and combined. Each variant is scored by its exact post-click
//! sale rate `E[c s]`.
//!
//! Every variant is built twice: from models fit to the simulated log, and
//! from the infinite-data limit of the same fits on the same logging policy.

use serde::{Deserialize, Serialize};

use super::{simulate_day, DayOptions, DayReport, Interaction, Routing, ScenarioConfig};
use crate::environment::{CategoricalSpec, GroundTruth};
use crate::error::{Error, Result};
use crate::features::{Cell, CovariateSet, FeatureSpec};
use crate::glm::{fit, population_fit, FittedModel, Target};
use crate::policy::{epsilon_greedy_on, uniform_policy, Policy};

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ClickSaleVariant {
    pub name: String,
    pub sale_features: CovariateSet,
    pub click_features: CovariateSet,
    /// `E[c s]` of the greedy product policy from the sampled fits.
    pub rate: f64,
    /// `E[c s]` of the greedy product policy from the infinite-data fits.
    pub population_rate: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ClickSaleReport {
    pub ground_truth: GroundTruth,
    pub x_prime: CovariateSet,
    pub x_dprime: CovariateSet,
    /// Click-rate reports of the two logging days.
    pub days: Vec<DayReport>,
    /// `mismatched` (the requested features) then `full`.
    pub variants: Vec<ClickSaleVariant>,
    /// `E[c s]` of the best policy that sees both covariates.
    pub oracle_rate: f64,
}

impl ClickSaleReport {
    pub fn mismatched(&self) -> &ClickSaleVariant {
        &self.variants[0]
    }

    pub fn full(&self) -> &ClickSaleVariant {
        &self.variants[1]
    }
}

pub fn scenario_click_sale(cfg: &ScenarioConfig, x_prime: CovariateSet, x_dprime: CovariateSet) -> Result<ClickSaleReport> {
    cfg.validate()?;
    let gt = cfg.ground_truth()?;
    scenario_click_sale_on(&gt, cfg, x_prime, x_dprime, &mut |_| Ok(()))
}

pub fn scenario_click_sale_on(
    gt: &GroundTruth,
    cfg: &ScenarioConfig,
    x_prime: CovariateSet,
    x_dprime: CovariateSet,
    sink: &mut dyn FnMut(&[Interaction]) -> Result<()>,
) -> Result<ClickSaleReport> {
    cfg.validate()?;
    if !gt.has_sale_model() {
        return Err(Error::NoSaleModel);
    }
    if gt.spec.n_decisions.is_some() {
        return Err(Error::InvalidParameter("the click/sale scenario has no display decision".into()));
    }
    let spec = gt.spec;
    let mut rng = cfg.sim_rng();
    let opts = DayOptions {
        with_sale: true,
        threads: cfg.threads,
    };

    let explore = uniform_policy(spec);
    let day0 = simulate_day(gt, Routing::Single(&explore), cfg.samples_per_day, 0, &mut rng, opts)?;
    sink(&day0)?;
    let rep0 = DayReport::new(gt, &explore, 0, None, &day0)?;

    let sale0 = fit(&day0, &FeatureSpec::over_actions(CovariateSet::BOTH, spec), Target::SaleGivenClick)?;
    let click0 = fit(&day0, &FeatureSpec::over_actions(CovariateSet::BOTH, spec), Target::Click)?;
    let logging = product_policy(&sale0, &click0, cfg.epsilon, spec)?;
    let day1 = simulate_day(gt, Routing::Single(&logging), cfg.samples_per_day, 1, &mut rng, opts)?;
    sink(&day1)?;
    let mut rep1 = DayReport::new(gt, &logging, 1, None, &day1)?;
    rep1.trained_on = Some((0, 0));

    let mut variants = Vec::new();
    for (name, sf, cf) in [
        ("mismatched", x_prime, x_dprime),
        ("full", CovariateSet::BOTH, CovariateSet::BOTH),
    ] {
        let (sfs, cfs) = (FeatureSpec::over_actions(sf, spec), FeatureSpec::over_actions(cf, spec));
        let sampled = product_policy(
            &fit(&day1, &sfs, Target::SaleGivenClick)?,
            &fit(&day1, &cfs, Target::Click)?,
            0.0,
            spec,
        )?;
        let limit = product_policy(
            &population_fit(gt, &logging, &sfs, Target::SaleGivenClick)?,
            &population_fit(gt, &logging, &cfs, Target::Click)?,
            0.0,
            spec,
        )?;
        variants.push(ClickSaleVariant {
            name: name.to_string(),
            sale_features: sf,
            click_features: cf,
            rate: gt.expected_policy_sale_rate(&sampled)?,
            population_rate: gt.expected_policy_sale_rate(&limit)?,
        });
    }
    Ok(ClickSaleReport {
        ground_truth: gt.clone(),
        x_prime,
        x_dprime,
        days: vec![rep0, rep1],
        variants,
        oracle_rate: gt.expected_policy_sale_rate(&sale_oracle_policy(gt)?)?,
    })
}

/// Epsilon-greedy on `P(s | a, x', c) P(c | a, x'')`; sees the union of the
/// two models' covariates.
pub fn product_policy(sale: &FittedModel, click: &FittedModel, epsilon: f64, spec: CategoricalSpec) -> Result<Policy> {
    if sale.feature_spec.spec != spec || click.feature_spec.spec != spec {
        return Err(Error::ShapeMismatch("models and spec disagree".into()));
    }
    let (sv, cv) = (sale.feature_spec.included, click.feature_spec.included);
    let visibility = CovariateSet {
        x1: sv.x1 || cv.x1,
        x2: sv.x2 || cv.x2,
    };
    let mut p = epsilon_greedy_on(spec, epsilon, visibility, |x1, x2, a| {
        let cell = Cell::new(x1, x2, a);
        sale.predict(&cell).expect("cell in range") * click.predict(&cell).expect("cell in range")
    })?;
    p.source = Some(format!("{} * {}", sale.describe(), click.describe()));
    Ok(p)
}

/// Greedy policy on the true `P(c) P(s | c)`.
pub fn sale_oracle_policy(gt: &GroundTruth) -> Result<Policy> {
    if !gt.has_sale_model() {
        return Err(Error::NoSaleModel);
    }
    let mut p = epsilon_greedy_on(gt.spec, 0.0, CovariateSet::BOTH, |x1, x2, a| {
        gt.click_prob_joint(x1, x2, a) * gt.true_sale_prob(x1, x2, a).expect("sale model checked")
    })?;
    p.source = Some("sale oracle".into());
    Ok(p)
}
