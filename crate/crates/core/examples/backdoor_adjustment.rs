//! Log one day under a policy that looks at `x2`, then estimate the click
//! rate of each action for `x1 = 0` three ways.

use confounding::causal::{backdoor_adjust, fit_cov_model};
use confounding::features::{Cell, CovariateSet, FeatureSpec};
use confounding::glm::{fit, Target};
use confounding::policy::epsilon_greedy_on;
use confounding::scenarios::{run_day, ScenarioConfig};

fn main() -> confounding::Result<()> {
    let cfg = ScenarioConfig::default();
    let gt = cfg.ground_truth()?;
    let spec = gt.spec;
    let logging = epsilon_greedy_on(spec, 0.2, CovariateSet::BOTH, |x1, x2, a| gt.click_prob_joint(x1, x2, a))?;
    let (log, _) = run_day(&gt, &logging, cfg.samples_per_day, 0, &mut cfg.sim_rng())?;

    let naive = fit(&log, &FeatureSpec::over_actions(CovariateSet::X1, spec), Target::Click)?;
    let full = fit(&log, &FeatureSpec::over_actions(CovariateSet::BOTH, spec), Target::Click)?;
    let cov = fit_cov_model(&log, &spec)?;

    let x1 = 0;
    println!("action  naive    adjusted  true do(a)");
    for a in 0..spec.n_actions {
        println!(
            "{a:>6}  {:.4}   {:.4}    {:.4}",
            naive.predict(&Cell::new(x1, 0, a))?,
            backdoor_adjust(&full, &cov, x1, a)?,
            gt.interventional_ctr(x1, a)
        );
    }
    Ok(())
}
