//! Adding a feature for one day and then removing it again.
//!
//! Day 0 explores uniformly. Every later day deploys an epsilon-greedy policy
//! on a model fit to the previous day's log. The model fit after day 1 uses
//! `x1` and `x2`; all others use `x1` only. The model fit on day 2's log is
//! therefore an `x1`-only model trained on data whose actions depended on
//! `x2`, and the policy it drives on day 3 is confounded.

use serde::{Deserialize, Serialize};

use super::{run_day, DayReport, Interaction, ScenarioConfig};
use crate::environment::GroundTruth;
use crate::error::Result;
use crate::features::{CovariateSet, FeatureSpec};
use crate::glm::{fit, FittedModel, Target};
use crate::policy::{epsilon_greedy, uniform_policy};

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FeatureEngineeringRun {
    pub ground_truth: GroundTruth,
    pub reports: Vec<DayReport>,
    /// Model deployed on day `i + 1` is `models[i]`.
    pub models: Vec<FittedModel>,
}

pub fn scenario_feature_engineering(cfg: &ScenarioConfig) -> Result<FeatureEngineeringRun> {
    scenario_feature_engineering_with(cfg, &mut |_| Ok(()))
}

/// As [`scenario_feature_engineering`], handing each day's log to `sink`.
pub fn scenario_feature_engineering_with(
    cfg: &ScenarioConfig,
    sink: &mut dyn FnMut(&[Interaction]) -> Result<()>,
) -> Result<FeatureEngineeringRun> {
    cfg.validate()?;
    let gt = cfg.ground_truth()?;
    scenario_feature_engineering_on(&gt, cfg, CovariateSet::BOTH, sink)
}

/// Runs the schedule on a given environment. `day1_features` are the
/// covariates of the model fit on day 1's log; pass `X1` for the control
/// schedule in which no policy ever looks at `x2`.
pub fn scenario_feature_engineering_on(
    gt: &GroundTruth,
    cfg: &ScenarioConfig,
    day1_features: CovariateSet,
    sink: &mut dyn FnMut(&[Interaction]) -> Result<()>,
) -> Result<FeatureEngineeringRun> {
    cfg.validate()?;
    let mut rng = cfg.sim_rng();
    let mut policy = uniform_policy(gt.spec);
    let mut trained_on = None;
    let mut reports = Vec::with_capacity(cfg.days as usize);
    let mut models = Vec::new();
    for day in 0..cfg.days {
        let (log, mut report) = run_day_with_threads(gt, &policy, cfg, day, &mut rng)?;
        report.trained_on = trained_on;
        reports.push(report);
        sink(&log)?;
        if day + 1 == cfg.days {
            break;
        }
        let included = if day == 1 { day1_features } else { CovariateSet::X1 };
        let fs = FeatureSpec::over_actions(included, gt.spec);
        let model = fit(&log, &fs, Target::Click)?;
        policy = epsilon_greedy(&model, cfg.epsilon, gt.spec)?;
        trained_on = model.training_days;
        models.push(model);
    }
    Ok(FeatureEngineeringRun {
        ground_truth: gt.clone(),
        reports,
        models,
    })
}

pub(super) fn run_day_with_threads(
    gt: &GroundTruth,
    policy: &crate::policy::Policy,
    cfg: &ScenarioConfig,
    day: u32,
    rng: &mut rand_chacha::ChaCha8Rng,
) -> Result<(Vec<Interaction>, DayReport)> {
    if cfg.threads == 1 {
        return run_day(gt, policy, cfg.samples_per_day, day, rng);
    }
    let opts = super::DayOptions {
        with_sale: false,
        threads: cfg.threads,
    };
    let log = super::simulate_day(gt, super::Routing::Single(policy), cfg.samples_per_day, day, rng, opts)?;
    let report = DayReport::new(gt, policy, day, None, &log)?;
    Ok((log, report))
}
