//! Six-day schedule: a model that sees `x2` is deployed on day 2, then `x2`
//! is dropped again. The `x1`-only model fit on day 2's log picks worse
//! actions on day 3.

use confounding::scenarios::{scenario_feature_engineering, ScenarioConfig};

fn main() -> confounding::Result<()> {
    let cfg = ScenarioConfig::default();
    let run = scenario_feature_engineering(&cfg)?;
    println!("confounding gap of this environment: {:.4}", run.ground_truth.gap.unwrap_or(0.0));
    println!("day  features  expected  oracle   regret");
    for r in &run.reports {
        println!(
            "{:>3}  {:<8}  {:.4}    {:.4}   {:.4}",
            r.day, r.features_used, r.expected_ctr, r.oracle_ctr, r.regret
        );
    }
    let e: Vec<f64> = run.reports.iter().map(|r| r.expected_ctr).collect();
    println!("day 3 - day 1 = {:+.4}", e[3] - e[1]);
    Ok(())
}
