//! Day-loop engine and the experiments built on it.
//!
//! A day draws `n` i.i.d. impressions from the environment under the deployed
//! policy. Impressions are generated in fixed-size chunks, each with its own
//! ChaCha stream derived from one per-day seed, so the log does not depend on
//! how many threads produce it.

mod ab_test;
mod click_sale;
mod feature_engineering;
mod log;
mod two_decision;

use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::environment::{make_default_ground_truth, sample_index, CategoricalSpec, GroundTruth};
use crate::error::{Error, Result};
use crate::policy::Policy;

pub use ab_test::{scenario_ab_test, scenario_ab_test_with, AbOptions, AbTestRun};
pub use click_sale::{
    product_policy, sale_oracle_policy, scenario_click_sale, scenario_click_sale_on, ClickSaleReport, ClickSaleVariant,
};
pub use feature_engineering::{
    scenario_feature_engineering, scenario_feature_engineering_on, scenario_feature_engineering_with,
    FeatureEngineeringRun,
};
pub use log::{write_ndjson, Arm, Interaction, Log};
pub use two_decision::{
    factored_epsilon_greedy, scenario_two_decision, scenario_two_decision_on, PolicyScore, TwoDecisionOptions,
    TwoDecisionReport,
};

/// Records per independently seeded chunk.
pub const CHUNK_SIZE: usize = 8192;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioConfig {
    pub spec: CategoricalSpec,
    pub samples_per_day: usize,
    pub epsilon: f64,
    pub seed: u64,
    pub min_gap: f64,
    pub ab_start_day: u32,
    /// Number of simulated days, starting at day 0.
    pub days: u32,
    pub shared_log: bool,
    /// Worker threads for impression generation; 0 lets rayon decide.
    /// Output does not depend on this value.
    pub threads: usize,
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        Self {
            spec: CategoricalSpec::default(),
            samples_per_day: 400_000,
            epsilon: 0.05,
            seed: 0,
            min_gap: 0.02,
            ab_start_day: 2,
            days: 6,
            shared_log: true,
            threads: 1,
        }
    }
}

impl ScenarioConfig {
    pub fn validate(&self) -> Result<()> {
        self.spec.validate()?;
        if self.samples_per_day == 0 {
            return Err(Error::InvalidParameter("samples_per_day must be >= 1".into()));
        }
        if !(0.0..=1.0).contains(&self.epsilon) {
            return Err(Error::InvalidParameter(format!(
                "epsilon must lie in [0, 1], got {}",
                self.epsilon
            )));
        }
        if self.days == 0 {
            return Err(Error::InvalidParameter("days must be >= 1".into()));
        }
        Ok(())
    }

    pub fn ground_truth(&self) -> Result<GroundTruth> {
        make_default_ground_truth(self.spec, self.seed, self.min_gap)
    }

    /// Simulation stream, independent of the stream that drew the environment.
    pub fn sim_rng(&self) -> ChaCha8Rng {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        rng.set_stream(1);
        rng
    }
}

/// One row of a per-day trajectory.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DayReport {
    pub day: u32,
    pub arm: Option<Arm>,
    pub samples: u64,
    pub clicks: u64,
    pub empirical_ctr: f64,
    pub binomial_se: f64,
    /// Exact click rate of the deployed policy.
    pub expected_ctr: f64,
    /// Exact click rate of the best policy with the same visibility.
    pub oracle_ctr: f64,
    pub regret: f64,
    pub trained_on: Option<(u32, u32)>,
    pub features_used: String,
}

impl DayReport {
    fn new(
        gt: &GroundTruth,
        policy: &Policy,
        day: u32,
        arm: Option<Arm>,
        records: &[Interaction],
    ) -> Result<Self> {
        let samples = records.len() as u64;
        let clicks = records.iter().filter(|r| r.c).count() as u64;
        let empirical_ctr = if samples > 0 {
            clicks as f64 / samples as f64
        } else {
            f64::NAN
        };
        let expected_ctr = gt.expected_policy_ctr(policy)?;
        let oracle_ctr = gt.expected_policy_ctr(&gt.oracle_policy(policy.visibility))?;
        Ok(Self {
            day,
            arm,
            samples,
            clicks,
            empirical_ctr,
            binomial_se: binomial_se(expected_ctr, samples),
            expected_ctr,
            oracle_ctr,
            regret: oracle_ctr - expected_ctr,
            trained_on: None,
            features_used: policy.visibility.to_string(),
        })
    }

    pub fn z_score(&self) -> f64 {
        (self.empirical_ctr - self.expected_ctr) / self.binomial_se
    }
}

/// Standard error of a mean of `n` Bernoulli(p) draws.
pub fn binomial_se(p: f64, n: u64) -> f64 {
    (p * (1.0 - p) / n as f64).sqrt()
}

/// How traffic is routed on a day.
#[derive(Debug, Clone, Copy)]
pub enum Routing<'a> {
    Single(&'a Policy),
    /// 50/50 split between arm A and arm B.
    Split(&'a Policy, &'a Policy),
}

#[derive(Debug, Clone, Copy, Default)]
pub struct DayOptions {
    /// Draw post-click sales (requires a sale mechanism).
    pub with_sale: bool,
    pub threads: usize,
}

/// Simulates `n` impressions and reports the day's click rate against the
/// exact expectation.
pub fn run_day<R: RngCore>(
    gt: &GroundTruth,
    policy: &Policy,
    n: usize,
    day: u32,
    rng: &mut R,
) -> Result<(Vec<Interaction>, DayReport)> {
    let records = simulate_day(gt, Routing::Single(policy), n, day, rng, DayOptions::default())?;
    let report = DayReport::new(gt, policy, day, None, &records)?;
    Ok((records, report))
}

/// Simulates an A/B day; returns the log and one report per arm.
pub fn run_split_day<R: RngCore>(
    gt: &GroundTruth,
    a: &Policy,
    b: &Policy,
    n: usize,
    day: u32,
    rng: &mut R,
    opts: DayOptions,
) -> Result<(Vec<Interaction>, DayReport, DayReport)> {
    let records = simulate_day(gt, Routing::Split(a, b), n, day, rng, opts)?;
    let (ra, rb): (Vec<_>, Vec<_>) = records.iter().partition(|r| r.arm == Some(Arm::A));
    let rep_a = DayReport::new(gt, a, day, Some(Arm::A), &ra)?;
    let rep_b = DayReport::new(gt, b, day, Some(Arm::B), &rb)?;
    Ok((records, rep_a, rep_b))
}

/// Generates one day's log. Consumes exactly one `u64` from `rng`.
pub fn simulate_day<R: RngCore>(
    gt: &GroundTruth,
    routing: Routing<'_>,
    n: usize,
    day: u32,
    rng: &mut R,
    opts: DayOptions,
) -> Result<Vec<Interaction>> {
    if n == 0 {
        return Err(Error::InvalidParameter("a day needs at least one impression".into()));
    }
    if opts.with_sale && !gt.has_sale_model() {
        return Err(Error::NoSaleModel);
    }
    let policies: &[&Policy] = match &routing {
        Routing::Single(p) => &[*p][..],
        Routing::Split(a, b) => &[*a, *b][..],
    };
    for p in policies {
        if p.spec != gt.spec {
            return Err(Error::ShapeMismatch("policy spec differs from environment".into()));
        }
    }
    let base = rng.next_u64();
    let n_chunks = n.div_ceil(CHUNK_SIZE);
    let chunk = |i: usize| {
        let len = CHUNK_SIZE.min(n - i * CHUNK_SIZE);
        simulate_chunk(gt, routing, len, day, base, i as u64, opts.with_sale)
    };
    let chunks: Vec<Vec<Interaction>> = if opts.threads == 1 || n_chunks == 1 {
        (0..n_chunks).map(chunk).collect()
    } else {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(opts.threads)
            .build()
            .map_err(|e| Error::InvalidParameter(e.to_string()))?;
        pool.install(|| (0..n_chunks).into_par_iter().map(chunk).collect())
    };
    Ok(chunks.concat())
}

fn simulate_chunk(
    gt: &GroundTruth,
    routing: Routing<'_>,
    len: usize,
    day: u32,
    base: u64,
    stream: u64,
    with_sale: bool,
) -> Vec<Interaction> {
    let mut rng = ChaCha8Rng::seed_from_u64(base);
    rng.set_stream(stream);
    let spec = gt.spec;
    let mut out = Vec::with_capacity(len);
    for _ in 0..len {
        let (arm, policy) = match routing {
            Routing::Single(p) => (None, p),
            Routing::Split(a, b) => {
                if rng.random::<f64>() < 0.5 {
                    (Some(Arm::A), a)
                } else {
                    (Some(Arm::B), b)
                }
            }
        };
        let x1 = sample_index(&gt.p_x1, &mut rng);
        let x2 = sample_index(&gt.p_x2_given_x1[x1], &mut rng);
        let (joint, propensity) = policy.sample_action(x1, x2, &mut rng);
        let c = rng.random::<f64>() < gt.click_prob_joint(x1, x2, joint);
        let (a, d) = spec.split_action(joint);
        let s = (with_sale && c).then(|| {
            let p = gt.true_sale_prob(x1, x2, a).expect("sale model checked above");
            rng.random::<f64>() < p
        });
        out.push(Interaction {
            day,
            x1,
            x2,
            a,
            d: spec.n_decisions.map(|_| d),
            propensity,
            c,
            s,
            arm,
        });
    }
    out
}

/// Draws a context for callers that want one outside a day loop.
pub fn draw_context<R: Rng + ?Sized>(gt: &GroundTruth, rng: &mut R) -> (usize, usize) {
    gt.sample_context(rng)
}
