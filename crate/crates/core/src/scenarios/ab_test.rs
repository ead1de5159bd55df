//! A/B test in which arm A keeps the `x1`-only model and arm B adds `x2`.
//!
//! Before `ab_start_day` a single system runs the usual schedule (uniform on
//! day 0, `x1`-only epsilon-greedy afterwards). From `ab_start_day` traffic is
//! split 50/50. With a shared log each arm retrains on the whole previous day,
//! so arm A's training data contains arm B's `x2`-dependent actions for as
//! long as the test runs. With separate logs each arm retrains on its own
//! traffic only.

use serde::{Deserialize, Serialize};

use super::feature_engineering::run_day_with_threads;
use super::{run_split_day, Arm, DayOptions, DayReport, Interaction, ScenarioConfig};
use crate::environment::GroundTruth;
use crate::error::{Error, Result};
use crate::features::{CovariateSet, FeatureSpec};
use crate::glm::{fit, Target};
use crate::policy::{epsilon_greedy, uniform_policy, Policy};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AbOptions {
    pub shared_log: bool,
    /// Covariates of arm B's model.
    pub arm_b_features: CovariateSet,
}

impl Default for AbOptions {
    fn default() -> Self {
        Self {
            shared_log: true,
            arm_b_features: CovariateSet::BOTH,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AbTestRun {
    pub ground_truth: GroundTruth,
    pub shared_log: bool,
    /// Days before the split have `arm = None` and appear in both lists.
    pub arm_a: Vec<DayReport>,
    pub arm_b: Vec<DayReport>,
}

pub fn scenario_ab_test(cfg: &ScenarioConfig, shared_log: bool) -> Result<AbTestRun> {
    cfg.validate()?;
    let gt = cfg.ground_truth()?;
    scenario_ab_test_with(
        &gt,
        cfg,
        AbOptions {
            shared_log,
            ..Default::default()
        },
        &mut |_| Ok(()),
    )
}

pub fn scenario_ab_test_with(
    gt: &GroundTruth,
    cfg: &ScenarioConfig,
    opts: AbOptions,
    sink: &mut dyn FnMut(&[Interaction]) -> Result<()>,
) -> Result<AbTestRun> {
    cfg.validate()?;
    if cfg.ab_start_day >= cfg.days {
        return Err(Error::InvalidParameter(format!(
            "ab_start_day {} must precede the last day {}",
            cfg.ab_start_day,
            cfg.days - 1
        )));
    }
    if cfg.ab_start_day == 0 {
        return Err(Error::InvalidParameter(
            "the test needs at least one day of history before it starts".into(),
        ));
    }
    let spec = gt.spec;
    let mut rng = cfg.sim_rng();
    let mut arm_a = Vec::new();
    let mut arm_b = Vec::new();

    let retrain = |records: &[Interaction], included: CovariateSet| -> Result<(Policy, Option<(u32, u32)>)> {
        let model = fit(records, &FeatureSpec::over_actions(included, spec), Target::Click)?;
        Ok((epsilon_greedy(&model, cfg.epsilon, spec)?, model.training_days))
    };

    // single system until the split
    let mut policy = uniform_policy(spec);
    let mut trained_on = None;
    let mut last_log = Vec::new();
    for day in 0..cfg.ab_start_day {
        let (log, mut report) = run_day_with_threads(gt, &policy, cfg, day, &mut rng)?;
        report.trained_on = trained_on;
        arm_a.push(report.clone());
        arm_b.push(report);
        sink(&log)?;
        let (p, t) = retrain(&log, CovariateSet::X1)?;
        policy = p;
        trained_on = t;
        last_log = log;
    }

    let (mut pol_a, mut on_a) = (policy, trained_on);
    let (mut pol_b, mut on_b) = retrain(&last_log, opts.arm_b_features)?;
    let day_opts = DayOptions {
        with_sale: false,
        threads: cfg.threads,
    };
    for day in cfg.ab_start_day..cfg.days {
        let (log, mut rep_a, mut rep_b) =
            run_split_day(gt, &pol_a, &pol_b, cfg.samples_per_day, day, &mut rng, day_opts)?;
        rep_a.trained_on = on_a;
        rep_b.trained_on = on_b;
        arm_a.push(rep_a);
        arm_b.push(rep_b);
        sink(&log)?;
        if day + 1 == cfg.days {
            break;
        }
        let (train_a, train_b): (Vec<Interaction>, Vec<Interaction>) = if opts.shared_log {
            (log.clone(), log)
        } else {
            log.into_iter().partition(|r| r.arm == Some(Arm::A))
        };
        (pol_a, on_a) = retrain(&train_a, CovariateSet::X1)?;
        (pol_b, on_b) = retrain(&train_b, opts.arm_b_features)?;
    }

    Ok(AbTestRun {
        ground_truth: gt.clone(),
        shared_log: opts.shared_log,
        arm_a,
        arm_b,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn start_day_must_precede_end() {
        let cfg = ScenarioConfig {
            samples_per_day: 1000,
            ab_start_day: 6,
            ..Default::default()
        };
        assert!(scenario_ab_test(&cfg, true).is_err());
    }

    #[test]
    fn arms_report_every_day() {
        let cfg = ScenarioConfig {
            samples_per_day: 4000,
            ..Default::default()
        };
        let run = scenario_ab_test(&cfg, false).unwrap();
        assert_eq!(run.arm_a.len(), 6);
        assert_eq!(run.arm_b.len(), 6);
        assert_eq!(run.arm_a[1].arm, None);
        assert_eq!(run.arm_a[2].arm, Some(Arm::A));
        assert_eq!(run.arm_b[2].features_used, "x1+x2");
        assert_eq!(run.arm_a[2].features_used, "x1");
    }
}
