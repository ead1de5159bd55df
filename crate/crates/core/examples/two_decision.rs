//! Two decisions made by separate models, compared with a joint argmax and
//! with REINFORCE over factored policies.

use confounding::scenarios::{scenario_two_decision, ScenarioConfig};

fn main() -> confounding::Result<()> {
    let cfg = ScenarioConfig::default();
    let rep = scenario_two_decision(&cfg)?;
    println!("policy         model obj.  true ctr");
    for p in &rep.policies {
        println!("{:<13}  {:.4}      {:.4}", p.name, p.model_objective, p.true_ctr);
    }
    println!("oracle                     {:.4}", rep.oracle_ctr);
    Ok(())
}
