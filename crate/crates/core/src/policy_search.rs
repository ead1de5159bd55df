//! Score-function (REINFORCE) ascent for factored policies against a fitted
//! joint click model.
//!
//! The objective is `E_x Σ_{a,d} π_ξ(a | x') π_γ(d | x'') P_m(c = 1 | a, d, x)`
//! with `x ~ P(x1, x2)`. It is cheap to enumerate, so the same module also
//! exposes the exact value and gradient that the stochastic optimizer is
//! checked against. The per-sample reward is the model probability itself
//! rather than a Bernoulli draw from it.

use std::io::Write;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::environment::{argmax, sample_index, CategoricalSpec};
use crate::error::{Error, Result};
use crate::features::{Cell, CovariateSet};
use crate::glm::FittedModel;
use crate::policy::{context_index, n_contexts, FactoredPolicyParams, Policy};

/// Allowed drop of the exact objective over a run before it is reported.
pub const OBJECTIVE_SLACK: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Baseline {
    None,
    RunningMean,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SearchConfig {
    pub learning_rate: f64,
    pub iterations: usize,
    pub batch_size: usize,
    pub baseline: Baseline,
    pub seed: u64,
}

impl Default for SearchConfig {
    fn default() -> Self {
        Self {
            learning_rate: 0.1,
            iterations: 2000,
            batch_size: 1024,
            baseline: Baseline::RunningMean,
            seed: 0,
        }
    }
}

impl SearchConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate >= 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "learning rate must be finite and >= 0, got {}",
                self.learning_rate
            )));
        }
        if self.iterations == 0 || self.batch_size == 0 {
            return Err(Error::InvalidParameter("iterations and batch size must be >= 1".into()));
        }
        Ok(())
    }
}

/// Gradient with respect to the two logit tables of a factored policy.
#[derive(Debug, Clone, PartialEq)]
pub struct FactoredGradient {
    pub xi: Vec<f64>,
    pub gamma: Vec<f64>,
}

impl FactoredGradient {
    fn zeros_like(fp: &FactoredPolicyParams) -> Self {
        Self {
            xi: vec![0.0; fp.xi.len()],
            gamma: vec![0.0; fp.gamma.len()],
        }
    }

    pub fn norm(&self) -> f64 {
        self.xi.iter().chain(&self.gamma).map(|g| g * g).sum::<f64>().sqrt()
    }

    /// Both tables concatenated, `xi` first.
    pub fn flatten(&self) -> Vec<f64> {
        self.xi.iter().chain(&self.gamma).copied().collect()
    }
}

/// Model predictions for every `(x1, x2, a, d)`, laid out like a joint policy.
struct RewardTable {
    spec: CategoricalSpec,
    r: Vec<f64>,
}

impl RewardTable {
    fn new(model: &FittedModel, spec: CategoricalSpec) -> Result<Self> {
        if model.feature_spec.spec != spec {
            return Err(Error::ShapeMismatch(format!(
                "model is over {:?}, policy over {:?}",
                model.feature_spec.spec, spec
            )));
        }
        let n = spec.n_joint_actions();
        let mut r = Vec::with_capacity(spec.k1 * spec.k2 * n);
        for x1 in 0..spec.k1 {
            for x2 in 0..spec.k2 {
                for j in 0..n {
                    r.push(model.predict(&spec.cell(x1, x2, j))?);
                }
            }
        }
        Ok(Self { spec, r })
    }

    fn get(&self, x1: usize, x2: usize, a: usize, d: usize) -> f64 {
        let s = &self.spec;
        self.r[(x1 * s.k2 + x2) * s.n_joint_actions() + s.joint_action(a, d)]
    }
}

fn check_context(spec: &CategoricalSpec, context: &[f64]) -> Result<()> {
    if context.len() != spec.k1 * spec.k2 {
        return Err(Error::ShapeMismatch(format!(
            "context distribution has {} entries, expected {}",
            context.len(),
            spec.k1 * spec.k2
        )));
    }
    Ok(())
}

/// Exact objective by enumeration. `context[x1 * k2 + x2]` is `P(x1, x2)`.
pub fn exact_objective(model: &FittedModel, fp: &FactoredPolicyParams, context: &[f64]) -> Result<f64> {
    fp.validate()?;
    check_context(&fp.spec, context)?;
    let table = RewardTable::new(model, fp.spec)?;
    Ok(objective_on(&table, fp, context))
}

fn objective_on(table: &RewardTable, fp: &FactoredPolicyParams, context: &[f64]) -> f64 {
    let s = fp.spec;
    let mut total = 0.0;
    for x1 in 0..s.k1 {
        for x2 in 0..s.k2 {
            let w = context[x1 * s.k2 + x2];
            if w == 0.0 {
                continue;
            }
            let pa = fp.a_probs(x1, x2);
            let pd = fp.d_probs(x1, x2);
            let mut v = 0.0;
            for (a, &qa) in pa.iter().enumerate() {
                for (d, &qd) in pd.iter().enumerate() {
                    v += qa * qd * table.get(x1, x2, a, d);
                }
            }
            total += w * v;
        }
    }
    total
}

/// Analytic gradient of [`exact_objective`] through both softmax factors.
pub fn exact_gradient(model: &FittedModel, fp: &FactoredPolicyParams, context: &[f64]) -> Result<FactoredGradient> {
    fp.validate()?;
    check_context(&fp.spec, context)?;
    let table = RewardTable::new(model, fp.spec)?;
    Ok(gradient_on(&table, fp, context))
}

fn gradient_on(table: &RewardTable, fp: &FactoredPolicyParams, context: &[f64]) -> FactoredGradient {
    let s = fp.spec;
    let (na, nd) = (s.n_actions, fp.n_decisions());
    let mut g = FactoredGradient::zeros_like(fp);
    for x1 in 0..s.k1 {
        for x2 in 0..s.k2 {
            let w = context[x1 * s.k2 + x2];
            if w == 0.0 {
                continue;
            }
            let pa = fp.a_probs(x1, x2);
            let pd = fp.d_probs(x1, x2);
            // q_a[a] = E_d R(a, d), q_d[d] = E_a R(a, d)
            let mut q_a = vec![0.0; na];
            let mut q_d = vec![0.0; nd];
            for a in 0..na {
                for d in 0..nd {
                    let r = table.get(x1, x2, a, d);
                    q_a[a] += pd[d] * r;
                    q_d[d] += pa[a] * r;
                }
            }
            let v: f64 = pa.iter().zip(&q_a).map(|(p, q)| p * q).sum();
            let ca = context_index(&s, fp.x_prime, x1, x2);
            let cd = context_index(&s, fp.x_dprime, x1, x2);
            for a in 0..na {
                g.xi[ca * na + a] += w * pa[a] * (q_a[a] - v);
            }
            for d in 0..nd {
                g.gamma[cd * nd + d] += w * pd[d] * (q_d[d] - v);
            }
        }
    }
    g
}

/// One REINFORCE draw.
#[derive(Debug, Clone, PartialEq)]
pub struct ReinforceSample {
    pub x1: usize,
    pub x2: usize,
    pub a: usize,
    pub d: usize,
    pub reward: f64,
}

/// Draws `(x, a, d)` and evaluates the model probability as reward.
fn draw<R: Rng + ?Sized>(table: &RewardTable, fp: &FactoredPolicyParams, context: &[f64], rng: &mut R) -> ReinforceSample {
    let k2 = fp.spec.k2;
    let ctx = sample_index(context, rng);
    let (x1, x2) = (ctx / k2, ctx % k2);
    let a = sample_index(&fp.a_probs(x1, x2), rng);
    let d = sample_index(&fp.d_probs(x1, x2), rng);
    ReinforceSample {
        x1,
        x2,
        a,
        d,
        reward: table.get(x1, x2, a, d),
    }
}

/// Adds `scale * ∇ log π(a, d | x)` for `sample` into `g`.
fn add_score(g: &mut FactoredGradient, fp: &FactoredPolicyParams, sample: &ReinforceSample, scale: f64) {
    let s = &fp.spec;
    let (na, nd) = (s.n_actions, fp.n_decisions());
    let ca = context_index(s, fp.x_prime, sample.x1, sample.x2);
    let cd = context_index(s, fp.x_dprime, sample.x1, sample.x2);
    for (k, p) in fp.a_probs(sample.x1, sample.x2).into_iter().enumerate() {
        g.xi[ca * na + k] += scale * (f64::from(u8::from(k == sample.a)) - p);
    }
    for (k, p) in fp.d_probs(sample.x1, sample.x2).into_iter().enumerate() {
        g.gamma[cd * nd + k] += scale * (f64::from(u8::from(k == sample.d)) - p);
    }
}

/// Stream of single-sample REINFORCE gradient estimates `(r - b) ∇ log π`
/// with a fixed baseline `b`; each is unbiased for [`exact_gradient`].
pub struct ReinforceSampler<'a> {
    table: RewardTable,
    fp: &'a FactoredPolicyParams,
    context: &'a [f64],
    baseline: f64,
    rng: ChaCha8Rng,
}

impl<'a> ReinforceSampler<'a> {
    pub fn new(
        model: &FittedModel,
        fp: &'a FactoredPolicyParams,
        context: &'a [f64],
        baseline: f64,
        seed: u64,
    ) -> Result<Self> {
        fp.validate()?;
        check_context(&fp.spec, context)?;
        Ok(Self {
            table: RewardTable::new(model, fp.spec)?,
            fp,
            context,
            baseline,
            rng: ChaCha8Rng::seed_from_u64(seed),
        })
    }

    /// Writes the next per-sample gradient into `out` (cleared first).
    pub fn next_into(&mut self, out: &mut FactoredGradient) -> ReinforceSample {
        out.xi.iter_mut().chain(out.gamma.iter_mut()).for_each(|g| *g = 0.0);
        let s = draw(&self.table, self.fp, self.context, &mut self.rng);
        add_score(out, self.fp, &s, s.reward - self.baseline);
        s
    }

    pub fn zero_gradient(&self) -> FactoredGradient {
        FactoredGradient::zeros_like(self.fp)
    }
}

/// One row of the optional optimization trace.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TraceRow {
    pub iteration: usize,
    pub exact_objective: f64,
    pub gradient_norm: f64,
}

pub fn reinforce_optimize(
    model: &FittedModel,
    init: &FactoredPolicyParams,
    cfg: &SearchConfig,
    context: &[f64],
) -> Result<FactoredPolicyParams> {
    reinforce_optimize_traced(model, init, cfg, context, None)
}

/// Mini-batch score-function ascent. Each iteration draws `batch_size`
/// samples, averages `(r - b) ∇ log π` and steps by `learning_rate`. With a
/// running-mean baseline `b` is the mean reward of all earlier batches.
///
/// When `trace` is given, one CSV row per iteration is written to it. Fails
/// if a parameter turns non-finite or if the exact objective of the result is
/// more than [`OBJECTIVE_SLACK`] below that of `init`.
pub fn reinforce_optimize_traced(
    model: &FittedModel,
    init: &FactoredPolicyParams,
    cfg: &SearchConfig,
    context: &[f64],
    trace: Option<&mut dyn Write>,
) -> Result<FactoredPolicyParams> {
    cfg.validate()?;
    init.validate()?;
    check_context(&init.spec, context)?;
    let table = RewardTable::new(model, init.spec)?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut writer = trace.map(csv::Writer::from_writer);
    let mut fp = init.clone();
    let initial = objective_on(&table, &fp, context);
    let (mut reward_sum, mut reward_n) = (0.0, 0u64);
    let mut samples = Vec::with_capacity(cfg.batch_size);

    for it in 0..cfg.iterations {
        let b = match cfg.baseline {
            Baseline::RunningMean if reward_n > 0 => reward_sum / reward_n as f64,
            _ => 0.0,
        };
        samples.clear();
        samples.extend((0..cfg.batch_size).map(|_| draw(&table, &fp, context, &mut rng)));
        let mut g = FactoredGradient::zeros_like(&fp);
        let scale = 1.0 / cfg.batch_size as f64;
        for s in &samples {
            add_score(&mut g, &fp, s, (s.reward - b) * scale);
            reward_sum += s.reward;
        }
        reward_n += samples.len() as u64;

        for (p, gi) in fp.xi.iter_mut().zip(&g.xi).chain(fp.gamma.iter_mut().zip(&g.gamma)) {
            *p += cfg.learning_rate * gi;
        }
        if fp.xi.iter().chain(&fp.gamma).any(|v| !v.is_finite()) {
            return Err(Error::Diverged(it));
        }
        if let Some(w) = writer.as_mut() {
            w.serialize(TraceRow {
                iteration: it,
                exact_objective: objective_on(&table, &fp, context),
                gradient_norm: g.norm(),
            })?;
        }
    }
    if let Some(mut w) = writer {
        w.flush()?;
    }

    let last = objective_on(&table, &fp, context);
    if last < initial - OBJECTIVE_SLACK {
        return Err(Error::ObjectiveDecreased { initial, last });
    }
    Ok(fp)
}

/// Deterministic joint policy `argmax_{a,d} P_m(c | a, d, x1, x2)`.
pub fn joint_argmax_policy(model: &FittedModel) -> Result<Policy> {
    let spec = model.feature_spec.spec;
    let n = spec.n_joint_actions();
    let mut probs = vec![0.0; spec.k1 * spec.k2 * n];
    for x1 in 0..spec.k1 {
        for x2 in 0..spec.k2 {
            let scores = (0..n)
                .map(|j| model.predict(&spec.cell(x1, x2, j)))
                .collect::<Result<Vec<_>>>()?;
            probs[(x1 * spec.k2 + x2) * n + argmax(scores)] = 1.0;
        }
    }
    Policy::from_parts(
        spec,
        probs,
        model.feature_spec.included,
        None,
        Some(format!("joint argmax of {}", model.describe())),
    )
}

/// `E_x Σ_j π(j | x) P_m(c | j, x)` for any joint policy.
pub fn exact_policy_objective(model: &FittedModel, policy: &Policy, context: &[f64]) -> Result<f64> {
    let spec = policy.spec;
    check_context(&spec, context)?;
    let table = RewardTable::new(model, spec)?;
    let n = spec.n_joint_actions();
    let mut total = 0.0;
    for x1 in 0..spec.k1 {
        for x2 in 0..spec.k2 {
            let row = policy.row(x1, x2);
            let base = (x1 * spec.k2 + x2) * n;
            let v: f64 = row.iter().zip(&table.r[base..base + n]).map(|(p, r)| p * r).sum();
            total += context[x1 * spec.k2 + x2] * v;
        }
    }
    Ok(total)
}

/// Factored policy that puts logit `scale` on the best action of each
/// context of `x_prime` (under a model of the action alone) and likewise for
/// the decision.
pub fn factored_from_models(
    a_model: &FittedModel,
    d_model: &FittedModel,
    spec: CategoricalSpec,
    scale: f64,
) -> Result<FactoredPolicyParams> {
    let x_prime = a_model.feature_spec.included;
    let x_dprime = d_model.feature_spec.included;
    let nd = spec.n_decisions.ok_or(Error::NoDecision)?;
    let a_choice = best_per_context(spec, x_prime, spec.n_actions, |x1, x2, a| {
        a_model.predict(&Cell::with_decision(x1, x2, a, 0))
    })?;
    let d_choice = best_per_context(spec, x_dprime, nd, |x1, x2, d| {
        d_model.predict(&Cell::with_decision(x1, x2, 0, d))
    })?;
    FactoredPolicyParams::from_choices(spec, x_prime, x_dprime, &a_choice, &d_choice, scale)
}

fn best_per_context(
    spec: CategoricalSpec,
    set: CovariateSet,
    n: usize,
    score: impl Fn(usize, usize, usize) -> Result<f64>,
) -> Result<Vec<usize>> {
    let mut out = vec![0; n_contexts(&spec, set)];
    for x1 in 0..if set.x1 { spec.k1 } else { 1 } {
        for x2 in 0..if set.x2 { spec.k2 } else { 1 } {
            let scores = (0..n).map(|k| score(x1, x2, k)).collect::<Result<Vec<_>>>()?;
            out[context_index(&spec, set, x1, x2)] = argmax(scores);
        }
    }
    Ok(out)
}
