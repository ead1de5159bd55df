//! Post-click sales: multiply a sale model and a click model into one
//! policy, once with each model on a single covariate and once with both.

use confounding::features::CovariateSet;
use confounding::scenarios::{scenario_click_sale, ScenarioConfig};

fn main() -> confounding::Result<()> {
    let cfg = ScenarioConfig::default();
    let rep = scenario_click_sale(&cfg, CovariateSet::X1, CovariateSet::X2)?;
    for v in [rep.mismatched(), rep.full()] {
        println!(
            "{:<10} sale on {:<6} click on {:<6} sale rate {:.4} (infinite data {:.4})",
            v.name, v.sale_features.to_string(), v.click_features.to_string(), v.rate, v.population_rate
        );
    }
    println!("best achievable sale rate {:.4}", rep.oracle_rate);
    Ok(())
}
