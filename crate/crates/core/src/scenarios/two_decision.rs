//! Two display decisions `a` and `d` chosen by separate components.
//!
//! Day 0 explores uniformly over `(a, d)`. Day 1 deploys the common practice:
//! a model `P(c | a, x')` picks `a` and a model `P(c | d, x'')` picks `d`,
//! each epsilon-greedy and each ignoring the other decision. On day 1's log
//! three policies are built and compared:
//!
//! 1. the argmax of a joint model `P(c | a, d, x1, x2)`;
//! 2. the product of the two independently refit factor models;
//! 3. REINFORCE on the joint model, over factored policies, started at 2.

use serde::{Deserialize, Serialize};

use super::{simulate_day, DayOptions, DayReport, Interaction, Routing, ScenarioConfig};
use crate::environment::{argmax, make_default_ground_truth, GroundTruth};
use crate::error::{Error, Result};
use crate::features::{ActionFactors, Cell, CovariateSet, FeatureSpec};
use crate::glm::{fit, population_fit, FittedModel, Target};
use crate::policy::{uniform_policy, FactoredPolicyParams, Policy};
use crate::policy_search::{
    exact_objective, exact_policy_objective, factored_from_models, joint_argmax_policy, reinforce_optimize,
    SearchConfig,
};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TwoDecisionOptions {
    pub x_prime: CovariateSet,
    pub x_dprime: CovariateSet,
    /// Logit given to the chosen option when turning the factor models'
    /// argmaxes into softmax parameters.
    pub init_scale: f64,
    pub search: SearchConfig,
    /// Use the infinite-data limit of every fit instead of the sampled log.
    pub exact_fits: bool,
}

impl Default for TwoDecisionOptions {
    fn default() -> Self {
        Self {
            x_prime: CovariateSet::X1,
            x_dprime: CovariateSet::X2,
            init_scale: 4.0,
            search: SearchConfig::default(),
            exact_fits: false,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PolicyScore {
    pub name: String,
    /// Objective under the fitted joint model.
    pub model_objective: f64,
    /// Click rate in the true environment.
    pub true_ctr: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TwoDecisionReport {
    pub ground_truth: GroundTruth,
    pub days: Vec<DayReport>,
    /// `joint_argmax`, `independent`, `reinforce`, in that order.
    pub policies: Vec<PolicyScore>,
    /// Joint click model fit on day 1; the optimizer's objective.
    pub joint_model: FittedModel,
    pub independent_params: FactoredPolicyParams,
    pub reinforce_params: FactoredPolicyParams,
    /// Click rate of the best policy that sees both covariates.
    pub oracle_ctr: f64,
}

impl TwoDecisionReport {
    pub fn joint_argmax(&self) -> &PolicyScore {
        &self.policies[0]
    }

    pub fn independent(&self) -> &PolicyScore {
        &self.policies[1]
    }

    pub fn reinforce(&self) -> &PolicyScore {
        &self.policies[2]
    }
}

/// Runs on an environment drawn from `cfg`, adding a binary decision when
/// `cfg.spec` has none. The optimizer is seeded with `cfg.seed`.
pub fn scenario_two_decision(cfg: &ScenarioConfig) -> Result<TwoDecisionReport> {
    cfg.validate()?;
    let spec = match cfg.spec.n_decisions {
        Some(_) => cfg.spec,
        None => cfg.spec.with_decisions(2)?,
    };
    let gt = make_default_ground_truth(spec, cfg.seed, cfg.min_gap)?;
    let mut opts = TwoDecisionOptions::default();
    opts.search.seed = cfg.seed;
    scenario_two_decision_on(&gt, cfg, opts, &mut |_| Ok(()))
}

pub fn scenario_two_decision_on(
    gt: &GroundTruth,
    cfg: &ScenarioConfig,
    opts: TwoDecisionOptions,
    sink: &mut dyn FnMut(&[Interaction]) -> Result<()>,
) -> Result<TwoDecisionReport> {
    cfg.validate()?;
    let spec = gt.spec;
    spec.n_decisions.ok_or(Error::NoDecision)?;
    let mut rng = cfg.sim_rng();
    let day_opts = DayOptions {
        with_sale: false,
        threads: cfg.threads,
    };
    let a_fs = FeatureSpec::new(opts.x_prime, ActionFactors::A, spec)?;
    let d_fs = FeatureSpec::new(opts.x_dprime, ActionFactors::D, spec)?;
    let joint_fs = FeatureSpec::new(CovariateSet::BOTH, ActionFactors::AD, spec)?;

    let explore = uniform_policy(spec);
    let day0 = simulate_day(gt, Routing::Single(&explore), cfg.samples_per_day, 0, &mut rng, day_opts)?;
    sink(&day0)?;
    let rep0 = DayReport::new(gt, &explore, 0, None, &day0)?;

    let logging = factored_epsilon_greedy(
        &fit(&day0, &a_fs, Target::Click)?,
        &fit(&day0, &d_fs, Target::Click)?,
        cfg.epsilon,
    )?;
    let day1 = simulate_day(gt, Routing::Single(&logging), cfg.samples_per_day, 1, &mut rng, day_opts)?;
    sink(&day1)?;
    let mut rep1 = DayReport::new(gt, &logging, 1, None, &day1)?;
    rep1.trained_on = Some((0, 0));

    let refit = |fs: &FeatureSpec| -> Result<FittedModel> {
        if opts.exact_fits {
            population_fit(gt, &logging, fs, Target::Click)
        } else {
            fit(&day1, fs, Target::Click)
        }
    };
    let joint_model = refit(&joint_fs)?;
    let a_model = refit(&a_fs)?;
    let d_model = refit(&d_fs)?;
    let context = gt.context_probs();

    let joint = joint_argmax_policy(&joint_model)?;
    let independent_params = factored_from_models(&a_model, &d_model, spec, opts.init_scale)?;
    let reinforce_params = reinforce_optimize(&joint_model, &independent_params, &opts.search, &context)?;

    let mut policies = Vec::new();
    policies.push(PolicyScore {
        name: "joint_argmax".into(),
        model_objective: exact_policy_objective(&joint_model, &joint, &context)?,
        true_ctr: gt.expected_policy_ctr(&joint)?,
    });
    for (name, params) in [("independent", &independent_params), ("reinforce", &reinforce_params)] {
        policies.push(PolicyScore {
            name: name.into(),
            model_objective: exact_objective(&joint_model, params, &context)?,
            true_ctr: gt.expected_policy_ctr(&params.to_joint()?)?,
        });
    }

    Ok(TwoDecisionReport {
        ground_truth: gt.clone(),
        days: vec![rep0, rep1],
        policies,
        joint_model,
        independent_params,
        reinforce_params,
        oracle_ctr: gt.expected_policy_ctr(&gt.oracle_policy(CovariateSet::BOTH))?,
    })
}

/// `a` epsilon-greedy on `a_model`, `d` epsilon-greedy on `d_model`, drawn
/// independently.
pub fn factored_epsilon_greedy(a_model: &FittedModel, d_model: &FittedModel, epsilon: f64) -> Result<Policy> {
    let spec = a_model.feature_spec.spec;
    if d_model.feature_spec.spec != spec {
        return Err(Error::ShapeMismatch("factor models disagree on the categorical spec".into()));
    }
    if !(0.0..=1.0).contains(&epsilon) {
        return Err(Error::InvalidParameter(format!("epsilon must lie in [0, 1], got {epsilon}")));
    }
    let nd = spec.n_decisions.ok_or(Error::NoDecision)?;
    let greedy_row = |n: usize, best: usize| -> Vec<f64> {
        (0..n)
            .map(|k| if k == best { 1.0 - epsilon + epsilon / n as f64 } else { epsilon / n as f64 })
            .collect()
    };
    let mut probs = Vec::with_capacity(spec.k1 * spec.k2 * spec.n_joint_actions());
    for x1 in 0..spec.k1 {
        for x2 in 0..spec.k2 {
            let a_scores = (0..spec.n_actions)
                .map(|a| a_model.predict(&Cell::with_decision(x1, x2, a, 0)))
                .collect::<Result<Vec<_>>>()?;
            let d_scores = (0..nd)
                .map(|d| d_model.predict(&Cell::with_decision(x1, x2, 0, d)))
                .collect::<Result<Vec<_>>>()?;
            let pa = greedy_row(spec.n_actions, argmax(a_scores));
            let pd = greedy_row(nd, argmax(d_scores));
            let start = probs.len();
            for qa in &pa {
                probs.extend(pd.iter().map(|qd| qa * qd));
            }
            let z: f64 = probs[start..].iter().sum();
            probs[start..].iter_mut().for_each(|p| *p /= z);
        }
    }
    let (va, vd) = (a_model.feature_spec.included, d_model.feature_spec.included);
    Policy::from_parts(
        spec,
        probs,
        CovariateSet {
            x1: va.x1 || vd.x1,
            x2: va.x2 || vd.x2,
        },
        Some(epsilon),
        Some(format!("{} x {}", a_model.describe(), d_model.describe())),
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::environment::CategoricalSpec;

    fn small_cfg() -> ScenarioConfig {
        ScenarioConfig {
            spec: CategoricalSpec::new(3, 3, 3).unwrap().with_decisions(2).unwrap(),
            samples_per_day: 20_000,
            ..Default::default()
        }
    }

    /// Click logit `f(x1, a) + g(x2, d)`.
    fn separable(spec: CategoricalSpec) -> GroundTruth {
        let (k1, k2, na) = (spec.k1, spec.k2, spec.n_actions);
        let mut click = Vec::new();
        for x1 in 0..k1 {
            for x2 in 0..k2 {
                for a in 0..na {
                    for d in 0..2 {
                        let f = ((x1 * 2 + a * 5) % 7) as f64 / 3.0 - 1.0;
                        let g = if d == x2 % 2 { 0.8 } else { -0.8 };
                        click.push(f + g);
                    }
                }
            }
        }
        let p_x1 = vec![1.0 / k1 as f64; k1];
        let rows = vec![vec![1.0 / k2 as f64; k2]; k1];
        GroundTruth::new(spec, p_x1, rows, click, None).unwrap()
    }

    #[test]
    fn ordering_of_the_three_policies() {
        let r = scenario_two_decision(&small_cfg()).unwrap();
        assert!(r.joint_argmax().model_objective + 1e-12 >= r.reinforce().model_objective);
        assert!(r.reinforce().model_objective + 1e-6 >= r.independent().model_objective);
        for p in &r.policies {
            assert!(p.true_ctr <= r.oracle_ctr + 1e-12);
        }
    }

    #[test]
    fn separable_environment_all_reach_optimum() {
        let cfg = small_cfg();
        let gt = separable(cfg.spec);
        let opts = TwoDecisionOptions {
            exact_fits: true,
            init_scale: 30.0,
            ..Default::default()
        };
        let r = scenario_two_decision_on(&gt, &cfg, opts, &mut |_| Ok(())).unwrap();
        for p in &r.policies {
            assert!((p.true_ctr - r.oracle_ctr).abs() < 1e-9, "{} {} {}", p.name, p.true_ctr, r.oracle_ctr);
        }
    }

    #[test]
    fn requires_a_decision() {
        let cfg = ScenarioConfig {
            samples_per_day: 1000,
            ..Default::default()
        };
        let gt = cfg.ground_truth().unwrap();
        assert!(matches!(
            scenario_two_decision_on(&gt, &cfg, TwoDecisionOptions::default(), &mut |_| Ok(())),
            Err(Error::NoDecision)
        ));
    }
}
