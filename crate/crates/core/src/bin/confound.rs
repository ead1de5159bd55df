//! `confound`: run the scenarios and identification checks from the shell.
//!
//! Exit status: 0 success (or admissible), 1 negative verdict, 2 usage error,
//! 3 internal error.

use std::fs;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde::Serialize;

use confounding::causal::Dag;
use confounding::environment::{confounding_gap, make_default_ground_truth, CategoricalSpec, GroundTruth};
use confounding::features::CovariateSet;
use confounding::policy_search::reinforce_optimize_traced;
use confounding::report::{
    ArtifactDir, ComparisonRow, ReportRow, RunManifest, COMPARISON_FILE, LOG_FILE, REPORT_FILE, SUMMARY_FILE,
};
use confounding::scenarios::{
    scenario_ab_test_with, scenario_click_sale_on, scenario_feature_engineering_on, scenario_two_decision_on,
    AbOptions, Interaction, ScenarioConfig, TwoDecisionOptions, TwoDecisionReport,
};
use confounding::{Error, Result};

#[derive(Parser, Debug)]
#[command(name = "confound", version, about = "Simulate confounding from recommender training practices")]
struct Cli {
    #[command(flatten)]
    global: Global,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug, Clone, Serialize)]
struct Global {
    /// Seed for the environment and the simulation.
    #[arg(long, global = true, default_value_t = 0)]
    seed: u64,
    /// Number of `x1` states.
    #[arg(long, global = true, default_value_t = 5)]
    k1: usize,
    /// Number of `x2` states.
    #[arg(long, global = true, default_value_t = 5)]
    k2: usize,
    /// Number of actions.
    #[arg(long, global = true, default_value_t = 10)]
    actions: usize,
    #[arg(long, global = true, default_value_t = 400_000)]
    samples_per_day: usize,
    #[arg(long, global = true, default_value_t = 0.05)]
    epsilon: f64,
    /// Minimum confounding gap of the drawn environment.
    #[arg(long, global = true, default_value_t = 0.02)]
    min_gap: f64,
    /// Output directory; each command writes into a subdirectory.
    #[arg(long, global = true, env = "CONFOUND_OUT", default_value = "confound-out")]
    out: PathBuf,
    /// Also write every simulated interaction as NDJSON.
    #[arg(long, global = true)]
    dump_log: bool,
    /// Worker threads for simulation (0 = all cores); output is unaffected.
    #[arg(long, global = true, default_value_t = 1)]
    threads: usize,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Add `x2` to the model for one day, then drop it again.
    FeatureEngineering {
        #[arg(long, default_value_t = 6)]
        days: u32,
    },
    /// A/B test of an `x1` model against an `x1+x2` model.
    AbTest {
        #[arg(long, conflicts_with_all = ["separate_logs", "both"])]
        shared_log: bool,
        #[arg(long, conflicts_with = "both")]
        separate_logs: bool,
        /// Run both training regimes.
        #[arg(long)]
        both: bool,
        #[arg(long, default_value_t = 2)]
        ab_start_day: u32,
        #[arg(long, default_value_t = 6)]
        days: u32,
    },
    /// Sale model on `x'` times click model on `x''`.
    ClickSale {
        #[arg(long, default_value = "X1", value_parser = parse_subset)]
        x_prime: CovariateSet,
        #[arg(long, default_value = "X2", value_parser = parse_subset)]
        x_dprime: CovariateSet,
    },
    /// Two display decisions chosen jointly, independently, or by REINFORCE.
    TwoDecision {
        #[arg(long, default_value = "X1", value_parser = parse_subset)]
        x_prime: CovariateSet,
        #[arg(long, default_value = "X2", value_parser = parse_subset)]
        x_dprime: CovariateSet,
        #[arg(long, default_value_t = 2)]
        decisions: usize,
        #[arg(long, default_value_t = 2000)]
        iterations: usize,
        #[arg(long, default_value_t = 0.1)]
        learning_rate: f64,
        #[arg(long, default_value_t = 1024)]
        batch_size: usize,
        /// Write the optimization trace as CSV.
        #[arg(long)]
        trace: bool,
    },
    /// Check whether an adjustment set satisfies the backdoor criterion.
    DagCheck {
        /// Edge-list file, one `from -> to` per line.
        file: Option<PathBuf>,
        /// Inline edges separated by `;`, instead of a file.
        #[arg(long, conflicts_with = "file")]
        edges: Option<String>,
        #[arg(long)]
        treatment: String,
        #[arg(long)]
        outcome: String,
        /// Comma-separated adjustment set, e.g. `x1,x2` or `{}`.
        #[arg(long, default_value = "")]
        adjust: String,
    },
}

fn parse_subset(s: &str) -> std::result::Result<CovariateSet, String> {
    s.parse().map_err(|e: Error| e.to_string())
}

enum Outcome {
    Done,
    Negative,
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(Outcome::Done) => ExitCode::SUCCESS,
        Ok(Outcome::Negative) => ExitCode::from(1),
        Err(e @ (Error::InvalidParameter(_) | Error::InvalidSpec(_) | Error::UnknownNode(_) | Error::Parse { .. } | Error::Cyclic(_))) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
        Err(e) => {
            eprintln!("internal error: {e}");
            ExitCode::from(3)
        }
    }
}

fn run(cli: Cli) -> Result<Outcome> {
    let g = cli.global;
    let spec = CategoricalSpec::new(g.k1, g.k2, g.actions)?;
    let base = ScenarioConfig {
        spec,
        samples_per_day: g.samples_per_day,
        epsilon: g.epsilon,
        seed: g.seed,
        min_gap: g.min_gap,
        threads: g.threads,
        ..Default::default()
    };
    match cli.command {
        Command::FeatureEngineering { days } => {
            let cfg = ScenarioConfig { days, ..base };
            cfg.validate()?;
            let gt = cfg.ground_truth()?;
            let mut out = ArtifactDir::create(g.out.join("feature-engineering"))?;
            let mut log = LogSink::new(&mut out, g.dump_log)?;
            let run = scenario_feature_engineering_on(&gt, &cfg, CovariateSet::BOTH, &mut |r| log.push(r))?;
            drop(log);
            let rows: Vec<ReportRow> = run.reports.iter().map(|r| ReportRow::from_day("feature-engineering", r)).collect();
            print_days(&rows);
            out.csv(REPORT_FILE, &rows)?;
            out.json(SUMMARY_FILE, &summary("feature-engineering", &gt, &run))?;
            finish(out, "feature-engineering", &cfg, &gt)?;
        }
        Command::AbTest {
            shared_log,
            separate_logs,
            both,
            ab_start_day,
            days,
        } => {
            let cfg = ScenarioConfig {
                ab_start_day,
                days,
                shared_log: !separate_logs,
                ..base
            };
            cfg.validate()?;
            let gt = cfg.ground_truth()?;
            let regimes: Vec<bool> = if both {
                vec![true, false]
            } else {
                vec![shared_log || !separate_logs]
            };
            let mut out = ArtifactDir::create(g.out.join("ab-test"))?;
            let mut rows = Vec::new();
            let mut runs = Vec::new();
            for shared in regimes {
                let name = if shared { "ab-test:shared-log" } else { "ab-test:separate-logs" };
                let file = format!("log-{}.ndjson", if shared { "shared" } else { "separate" });
                let mut log = LogSink::named(&mut out, g.dump_log, &file)?;
                let opts = AbOptions {
                    shared_log: shared,
                    ..Default::default()
                };
                let run = scenario_ab_test_with(&gt, &cfg, opts, &mut |r| log.push(r))?;
                drop(log);
                for r in &run.arm_a {
                    rows.push(ReportRow::from_day(name, r));
                }
                for r in run.arm_b.iter().filter(|r| r.arm.is_some()) {
                    rows.push(ReportRow::from_day(name, r));
                }
                runs.push(run);
            }
            print_days(&rows);
            out.csv(REPORT_FILE, &rows)?;
            out.json(SUMMARY_FILE, &summary("ab-test", &gt, &runs))?;
            finish(out, "ab-test", &cfg, &gt)?;
        }
        Command::ClickSale { x_prime, x_dprime } => {
            base.validate()?;
            let gt = base.ground_truth()?;
            let mut out = ArtifactDir::create(g.out.join("click-sale"))?;
            let mut log = LogSink::new(&mut out, g.dump_log)?;
            let rep = scenario_click_sale_on(&gt, &base, x_prime, x_dprime, &mut |r| log.push(r))?;
            drop(log);
            let rows: Vec<ReportRow> = rep.days.iter().map(|r| ReportRow::from_day("click-sale", r)).collect();
            let mut cmp: Vec<ComparisonRow> = rep
                .variants
                .iter()
                .flat_map(|v| {
                    let features = format!("sale:{} click:{}", v.sale_features, v.click_features);
                    [
                        ComparisonRow {
                            scenario: "click-sale".into(),
                            policy: v.name.clone(),
                            features: features.clone(),
                            model_objective: None,
                            expected_reward: v.rate,
                            oracle_reward: rep.oracle_rate,
                        },
                        ComparisonRow {
                            scenario: "click-sale".into(),
                            policy: format!("{}:population", v.name),
                            features,
                            model_objective: None,
                            expected_reward: v.population_rate,
                            oracle_reward: rep.oracle_rate,
                        },
                    ]
                })
                .collect();
            cmp.push(ComparisonRow {
                scenario: "click-sale".into(),
                policy: "oracle".into(),
                features: CovariateSet::BOTH.to_string(),
                model_objective: None,
                expected_reward: rep.oracle_rate,
                oracle_reward: rep.oracle_rate,
            });
            print_comparison(&cmp);
            out.csv(REPORT_FILE, &rows)?;
            out.csv(COMPARISON_FILE, &cmp)?;
            out.json(SUMMARY_FILE, &summary("click-sale", &gt, &rep))?;
            let manifest_cfg = WithSubsets {
                config: &base,
                x_prime,
                x_dprime,
            };
            finish(out, "click-sale", &manifest_cfg, &gt)?;
        }
        Command::TwoDecision {
            x_prime,
            x_dprime,
            decisions,
            iterations,
            learning_rate,
            batch_size,
            trace,
        } => {
            let cfg = ScenarioConfig {
                spec: spec.with_decisions(decisions)?,
                ..base
            };
            cfg.validate()?;
            let gt = make_default_ground_truth(cfg.spec, cfg.seed, cfg.min_gap)?;
            let mut opts = TwoDecisionOptions {
                x_prime,
                x_dprime,
                ..Default::default()
            };
            opts.search.iterations = iterations;
            opts.search.learning_rate = learning_rate;
            opts.search.batch_size = batch_size;
            opts.search.seed = cfg.seed;
            let mut out = ArtifactDir::create(g.out.join("two-decision"))?;
            let mut log = LogSink::new(&mut out, g.dump_log)?;
            let rep = scenario_two_decision_on(&gt, &cfg, opts, &mut |r| log.push(r))?;
            drop(log);
            if trace {
                write_trace(&mut out, &gt, &rep, &opts)?;
            }
            let rows: Vec<ReportRow> = rep.days.iter().map(|r| ReportRow::from_day("two-decision", r)).collect();
            let mut cmp: Vec<ComparisonRow> = rep
                .policies
                .iter()
                .map(|p| ComparisonRow {
                    scenario: "two-decision".into(),
                    policy: p.name.clone(),
                    features: if p.name == "joint_argmax" {
                        CovariateSet::BOTH.to_string()
                    } else {
                        format!("a:{} d:{}", x_prime, x_dprime)
                    },
                    model_objective: Some(p.model_objective),
                    expected_reward: p.true_ctr,
                    oracle_reward: rep.oracle_ctr,
                })
                .collect();
            cmp.push(ComparisonRow {
                scenario: "two-decision".into(),
                policy: "oracle".into(),
                features: CovariateSet::BOTH.to_string(),
                model_objective: None,
                expected_reward: rep.oracle_ctr,
                oracle_reward: rep.oracle_ctr,
            });
            print_comparison(&cmp);
            out.csv(REPORT_FILE, &rows)?;
            out.csv(COMPARISON_FILE, &cmp)?;
            out.json(SUMMARY_FILE, &summary("two-decision", &gt, &rep))?;
            finish(out, "two-decision", &TwoDecisionManifest { config: &cfg, options: &opts }, &gt)?;
        }
        Command::DagCheck {
            file,
            edges,
            treatment,
            outcome,
            adjust,
        } => return dag_check(file, edges, &treatment, &outcome, &adjust),
    }
    Ok(Outcome::Done)
}

fn dag_check(file: Option<PathBuf>, edges: Option<String>, treatment: &str, outcome: &str, adjust: &str) -> Result<Outcome> {
    let text = match (file, edges) {
        (Some(path), _) => fs::read_to_string(path)?,
        (None, Some(inline)) => inline.replace(';', "\n"),
        (None, None) => return Err(Error::InvalidParameter("give an edge-list file or --edges".into())),
    };
    let g = Dag::parse(&text)?;
    let names: Vec<&str> = adjust
        .trim()
        .trim_start_matches('{')
        .trim_end_matches('}')
        .split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .collect();
    let (t, y, zs) = (g.id(treatment)?, g.id(outcome)?, g.ids(&names)?);
    let verdict = g.backdoor_check(t, y, &zs)?;
    let set = format!("{{{}}}", names.join(", "));
    if verdict.admissible {
        println!("admissible: {set} satisfies the backdoor criterion for {treatment} -> {outcome}");
        for (p, b) in &verdict.blocked {
            println!("  blocked: {}  (by {})", g.render(p), g.name(*b));
        }
        Ok(Outcome::Done)
    } else {
        println!("inadmissible: {set} does not satisfy the backdoor criterion for {treatment} -> {outcome}");
        for &d in &verdict.descendants_in_set {
            println!("  descendant of {treatment} in the adjustment set: {}", g.name(d));
        }
        for p in &verdict.open {
            println!("  open backdoor path: {}", g.render(p));
        }
        Ok(Outcome::Negative)
    }
}

/// Streams logs to NDJSON when enabled, otherwise discards them.
struct LogSink {
    writer: Option<std::io::BufWriter<fs::File>>,
}

impl LogSink {
    fn new(out: &mut ArtifactDir, enabled: bool) -> Result<Self> {
        Self::named(out, enabled, LOG_FILE)
    }

    fn named(out: &mut ArtifactDir, enabled: bool, name: &str) -> Result<Self> {
        let writer = if enabled {
            Some(std::io::BufWriter::new(out.file(name)?))
        } else {
            None
        };
        Ok(Self { writer })
    }

    fn push(&mut self, records: &[Interaction]) -> Result<()> {
        if let Some(w) = self.writer.as_mut() {
            confounding::scenarios::write_ndjson(records, &mut *w)?;
        }
        Ok(())
    }
}

impl Drop for LogSink {
    fn drop(&mut self) {
        if let Some(w) = self.writer.as_mut() {
            use std::io::Write;
            let _ = w.flush();
        }
    }
}

#[derive(Serialize)]
struct Summary<'a, T: Serialize> {
    scenario: &'a str,
    confounding_gap: f64,
    ground_truth_fingerprint: String,
    result: &'a T,
}

fn summary<'a, T: Serialize>(scenario: &'a str, gt: &GroundTruth, result: &'a T) -> Summary<'a, T> {
    Summary {
        scenario,
        confounding_gap: confounding_gap(gt),
        ground_truth_fingerprint: gt.fingerprint(),
        result,
    }
}

#[derive(Serialize)]
struct WithSubsets<'a> {
    #[serde(flatten)]
    config: &'a ScenarioConfig,
    x_prime: CovariateSet,
    x_dprime: CovariateSet,
}

#[derive(Serialize)]
struct TwoDecisionManifest<'a> {
    #[serde(flatten)]
    config: &'a ScenarioConfig,
    options: &'a TwoDecisionOptions,
}

fn finish(out: ArtifactDir, scenario: &str, cfg: &impl Serialize, gt: &GroundTruth) -> Result<()> {
    let seed = gt.seed.unwrap_or_default();
    let dir = out.finish(RunManifest::new(scenario, cfg, seed, gt)?)?;
    println!("artifacts written to {}", dir.display());
    Ok(())
}

/// Reruns the optimizer from the same start with a trace attached; the run
/// is deterministic, so the trace belongs to the reported result.
fn write_trace(out: &mut ArtifactDir, gt: &GroundTruth, rep: &TwoDecisionReport, opts: &TwoDecisionOptions) -> Result<()> {
    let mut w = std::io::BufWriter::new(out.file("trace.csv")?);
    reinforce_optimize_traced(&rep.joint_model, &rep.independent_params, &opts.search, &gt.context_probs(), Some(&mut w))?;
    Ok(())
}

fn print_days(rows: &[ReportRow]) {
    println!("{:<24} {:>3} {:>4} {:>10} {:>10} {:>10} {:>8}  features", "scenario", "arm", "day", "empirical", "expected", "oracle", "regret");
    for r in rows {
        println!(
            "{:<24} {:>3} {:>4} {:>10.5} {:>10.5} {:>10.5} {:>8.5}  {}",
            r.scenario,
            r.arm.as_deref().unwrap_or("-"),
            r.day,
            r.empirical_ctr,
            r.expected_ctr,
            r.oracle_ctr,
            r.regret,
            r.features_used
        );
    }
}

fn print_comparison(rows: &[ComparisonRow]) {
    println!("{:<24} {:<24} {:>10} {:>10}", "policy", "features", "model", "expected");
    for r in rows {
        let m = r.model_objective.map_or("-".to_string(), |v| format!("{v:.5}"));
        println!("{:<24} {:<24} {:>10} {:>10.5}", r.policy, r.features, m, r.expected_reward);
    }
}
