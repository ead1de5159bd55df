//! A logging policy that only distinguishes `x2 < 2` from `x2 >= 2`.
//! Adjusting over those two classes is as good as adjusting over `x2`.

use confounding::causal::{balancing_coarsen, class_adjusted_ctr};
use confounding::features::CovariateSet;
use confounding::policy::epsilon_greedy_on;
use confounding::scenarios::ScenarioConfig;

fn main() -> confounding::Result<()> {
    let gt = ScenarioConfig::default().ground_truth()?;
    let policy = epsilon_greedy_on(gt.spec, 0.1, CovariateSet::BOTH, |_, x2, a| {
        f64::from(u8::from(a == usize::from(x2 >= 2)))
    })?;
    for x1 in 0..gt.spec.k1 {
        let part = balancing_coarsen(&policy, x1);
        let a = 3;
        println!(
            "x1={x1}: classes {:?}, adjusted ctr of a={a} {:.6}, do(a) {:.6}",
            part.classes,
            class_adjusted_ctr(&gt, &policy, &part, a)?,
            gt.interventional_ctr(x1, a)
        );
    }
    Ok(())
}
