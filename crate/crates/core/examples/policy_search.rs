//! REINFORCE on a fitted joint model, over policies whose two factors see
//! different covariates. Prints the exact objective as it climbs.

use confounding::environment::{make_default_ground_truth, CategoricalSpec};
use confounding::features::{ActionFactors, CovariateSet, FeatureSpec};
use confounding::glm::{fit, Target};
use confounding::policy::{uniform_policy, FactoredPolicyParams};
use confounding::policy_search::{exact_objective, reinforce_optimize_traced, SearchConfig};
use confounding::scenarios::{run_day, ScenarioConfig};

fn main() -> confounding::Result<()> {
    let spec = CategoricalSpec::default().with_decisions(2)?;
    let gt = make_default_ground_truth(spec, 0, 0.02)?;
    let cfg = ScenarioConfig { spec, ..Default::default() };
    let (log, _) = run_day(&gt, &uniform_policy(spec), cfg.samples_per_day, 0, &mut cfg.sim_rng())?;
    let model = fit(&log, &FeatureSpec::new(CovariateSet::BOTH, ActionFactors::AD, spec)?, Target::Click)?;

    let context = gt.context_probs();
    let start = FactoredPolicyParams::zeros(spec, CovariateSet::X1, CovariateSet::X2)?;
    let search = SearchConfig { iterations: 500, ..Default::default() };
    let mut trace = Vec::new();
    let best = reinforce_optimize_traced(&model, &start, &search, &context, Some(&mut trace))?;
    for line in String::from_utf8_lossy(&trace).lines().step_by(100) {
        println!("{line}");
    }
    println!("start {:.4} -> end {:.4}", exact_objective(&model, &start, &context)?, exact_objective(&model, &best, &context)?);
    Ok(())
}
