//! Backdoor checks on the recommender graph with and without `x2 -> a`.

use confounding::causal::{recommender_graph, Dag};

fn report(name: &str, g: &Dag, adjust: &[&str]) -> confounding::Result<()> {
    let (a, c) = (g.id("a")?, g.id("c")?);
    let verdict = g.backdoor_check(a, c, &g.ids(adjust)?)?;
    println!("{name}, adjusting for {adjust:?}: admissible = {}", verdict.admissible);
    for p in &verdict.open {
        println!("  open:    {}", g.render(p));
    }
    for (p, by) in &verdict.blocked {
        println!("  blocked: {}  (at {})", g.render(p), g.name(*by));
    }
    Ok(())
}

fn main() -> confounding::Result<()> {
    let base = recommender_graph(false);
    let personalised = recommender_graph(true);
    report("x1-only policy", &base, &["x1"])?;
    report("x2-aware policy", &personalised, &["x1"])?;
    report("x2-aware policy", &personalised, &["x1", "x2"])?;

    let custom = Dag::parse("u -> t\nu -> y\nt -> m\nm -> y\n")?;
    println!(
        "t _||_ y | {{u, m}}: {}",
        custom.d_separated_by_name(&["t"], &["y"], &["u", "m"])?
    );
    Ok(())
}
