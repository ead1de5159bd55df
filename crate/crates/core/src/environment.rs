//! Ground-truth data-generating process and exact-enumeration oracles.
//!
//! The environment realises the graph `x1 -> x2`, `x1 -> c`, `x2 -> c`,
//! `a -> c` (plus a post-click sale node with the same parents). Whether the
//! recommendation depends on `x2` is a property of the deployed [`Policy`],
//! never of the environment.
//!
//! Everything here that returns a probability is computed by exhaustive
//! enumeration over the finite state space, so it is exact and seed-free.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::Exp1;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::features::{Cell, CovariateSet};
use crate::policy::Policy;

/// Logits are clamped to `[-LOGIT_CAP, LOGIT_CAP]` wherever they become
/// probabilities.
pub const LOGIT_CAP: f64 = 15.0;

const SUM_TOL: f64 = 1e-12;

pub fn sigmoid(z: f64) -> f64 {
    let z = z.clamp(-LOGIT_CAP, LOGIT_CAP);
    1.0 / (1.0 + (-z).exp())
}

pub fn logit(p: f64) -> f64 {
    (p / (1.0 - p)).ln().clamp(-LOGIT_CAP, LOGIT_CAP)
}

/// Lowest index attaining the maximum.
pub fn argmax(values: impl IntoIterator<Item = f64>) -> usize {
    let mut best = 0;
    let mut best_v = f64::NEG_INFINITY;
    for (i, v) in values.into_iter().enumerate() {
        if v > best_v {
            best = i;
            best_v = v;
        }
    }
    best
}

/// Draws an index from a discrete distribution using one uniform variate.
pub fn sample_index<R: Rng + ?Sized>(probs: &[f64], rng: &mut R) -> usize {
    let u: f64 = rng.random();
    let mut acc = 0.0;
    for (i, p) in probs.iter().enumerate() {
        acc += p;
        if u < acc {
            return i;
        }
    }
    // u landed in the rounding slack above the last partial sum
    probs.iter().rposition(|p| *p > 0.0).unwrap_or(0)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct CategoricalSpec {
    pub k1: usize,
    pub k2: usize,
    pub n_actions: usize,
    /// Number of display-decision states; present only in two-decision mode.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub n_decisions: Option<usize>,
}

impl Default for CategoricalSpec {
    fn default() -> Self {
        Self {
            k1: 5,
            k2: 5,
            n_actions: 10,
            n_decisions: None,
        }
    }
}

impl CategoricalSpec {
    pub fn new(k1: usize, k2: usize, n_actions: usize) -> Result<Self> {
        let s = Self {
            k1,
            k2,
            n_actions,
            n_decisions: None,
        };
        s.validate()?;
        Ok(s)
    }

    pub fn with_decisions(mut self, n_decisions: usize) -> Result<Self> {
        self.n_decisions = Some(n_decisions);
        self.validate()?;
        Ok(self)
    }

    pub fn validate(&self) -> Result<()> {
        if self.k1 < 2 || self.k2 < 2 || self.n_actions < 2 {
            return Err(Error::InvalidSpec(format!(
                "need k1, k2, n_actions >= 2, got {}, {}, {}",
                self.k1, self.k2, self.n_actions
            )));
        }
        if matches!(self.n_decisions, Some(d) if d < 2) {
            return Err(Error::InvalidSpec("n_decisions must be >= 2".into()));
        }
        Ok(())
    }

    pub fn n_decisions_or_one(&self) -> usize {
        self.n_decisions.unwrap_or(1)
    }

    /// Number of joint treatment values: `A` or `A * D` in two-decision mode.
    pub fn n_joint_actions(&self) -> usize {
        self.n_actions * self.n_decisions_or_one()
    }

    pub fn joint_action(&self, a: usize, d: usize) -> usize {
        a * self.n_decisions_or_one() + d
    }

    pub fn split_action(&self, joint: usize) -> (usize, usize) {
        let nd = self.n_decisions_or_one();
        (joint / nd, joint % nd)
    }

    pub fn cell(&self, x1: usize, x2: usize, joint: usize) -> Cell {
        let (a, d) = self.split_action(joint);
        Cell::with_decision(x1, x2, a, d)
    }

    fn check_context(&self, x1: usize, x2: usize) -> Result<()> {
        if x1 >= self.k1 {
            return Err(Error::OutOfRange {
                what: "x1",
                value: x1,
                card: self.k1,
            });
        }
        if x2 >= self.k2 {
            return Err(Error::OutOfRange {
                what: "x2",
                value: x2,
                card: self.k2,
            });
        }
        Ok(())
    }

    fn check_cell(&self, c: &Cell) -> Result<()> {
        self.check_context(c.x1, c.x2)?;
        if c.a >= self.n_actions {
            return Err(Error::OutOfRange {
                what: "a",
                value: c.a,
                card: self.n_actions,
            });
        }
        if c.d >= self.n_decisions_or_one() {
            return Err(Error::OutOfRange {
                what: "d",
                value: c.d,
                card: self.n_decisions_or_one(),
            });
        }
        Ok(())
    }
}

/// Exact categorical environment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroundTruth {
    pub spec: CategoricalSpec,
    pub p_x1: Vec<f64>,
    pub p_x2_given_x1: Vec<Vec<f64>>,
    /// Flattened `k1 x k2 x A (x D)`, row-major.
    pub click_logit: Vec<f64>,
    /// Flattened `k1 x k2 x A`: logit of a sale given a click.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sale_logit: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gap: Option<f64>,
}

impl GroundTruth {
    pub fn new(
        spec: CategoricalSpec,
        p_x1: Vec<f64>,
        p_x2_given_x1: Vec<Vec<f64>>,
        click_logit: Vec<f64>,
        sale_logit: Option<Vec<f64>>,
    ) -> Result<Self> {
        let gt = Self {
            spec,
            p_x1,
            p_x2_given_x1,
            click_logit,
            sale_logit,
            seed: None,
            gap: None,
        };
        gt.validate()?;
        Ok(gt)
    }

    pub fn validate(&self) -> Result<()> {
        let s = &self.spec;
        s.validate()?;
        check_distribution("p_x1", &self.p_x1, s.k1)?;
        if self.p_x2_given_x1.len() != s.k1 {
            return Err(Error::ShapeMismatch(format!(
                "p_x2_given_x1 has {} rows, expected {}",
                self.p_x2_given_x1.len(),
                s.k1
            )));
        }
        for row in &self.p_x2_given_x1 {
            check_distribution("p_x2_given_x1 row", row, s.k2)?;
        }
        let n_click = s.k1 * s.k2 * s.n_joint_actions();
        check_logits("click_logit", &self.click_logit, n_click)?;
        if let Some(sale) = &self.sale_logit {
            check_logits("sale_logit", sale, s.k1 * s.k2 * s.n_actions)?;
        }
        Ok(())
    }

    fn click_index(&self, c: &Cell) -> usize {
        let s = &self.spec;
        ((c.x1 * s.k2 + c.x2) * s.n_actions + c.a) * s.n_decisions_or_one() + c.d
    }

    /// Logit of a click in `cell`, using the joint action index.
    pub(crate) fn click_logit_joint(&self, x1: usize, x2: usize, joint: usize) -> f64 {
        let s = &self.spec;
        self.click_logit[(x1 * s.k2 + x2) * s.n_joint_actions() + joint]
    }

    pub fn click_prob_joint(&self, x1: usize, x2: usize, joint: usize) -> f64 {
        sigmoid(self.click_logit_joint(x1, x2, joint))
    }

    pub fn true_click_prob(&self, cell: &Cell) -> Result<f64> {
        self.spec.check_cell(cell)?;
        Ok(sigmoid(self.click_logit[self.click_index(cell)]))
    }

    pub fn true_sale_prob(&self, x1: usize, x2: usize, a: usize) -> Result<f64> {
        let sale = self.sale_logit.as_ref().ok_or(Error::NoSaleModel)?;
        self.spec.check_cell(&Cell::new(x1, x2, a))?;
        let s = &self.spec;
        Ok(sigmoid(sale[(x1 * s.k2 + x2) * s.n_actions + a]))
    }

    pub fn has_sale_model(&self) -> bool {
        self.sale_logit.is_some()
    }

    /// `P(x1, x2)` for every context, row-major.
    pub fn context_probs(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.spec.k1 * self.spec.k2);
        for (x1, row) in self.p_x2_given_x1.iter().enumerate() {
            out.extend(row.iter().map(|p| self.p_x1[x1] * p));
        }
        out
    }

    pub fn sample_context<R: Rng + ?Sized>(&self, rng: &mut R) -> (usize, usize) {
        let x1 = sample_index(&self.p_x1, rng);
        let x2 = sample_index(&self.p_x2_given_x1[x1], rng);
        (x1, x2)
    }

    /// `sum_{x2} P(x2|x1) P(c=1|x1,x2,a)`: the click rate of action `joint`
    /// under an intervention, for a user with covariate `x1`.
    pub fn interventional_ctr(&self, x1: usize, joint: usize) -> f64 {
        self.p_x2_given_x1[x1]
            .iter()
            .enumerate()
            .map(|(x2, p)| p * self.click_prob_joint(x1, x2, joint))
            .sum()
    }

    /// Exact click-through rate of `policy` deployed in this environment.
    pub fn expected_policy_ctr(&self, policy: &Policy) -> Result<f64> {
        self.expected_policy_reward(policy, |x1, x2, j| self.click_prob_joint(x1, x2, j))
    }

    /// Exact rate of clicks followed by sales, `E[c * s]`, under `policy`.
    pub fn expected_policy_sale_rate(&self, policy: &Policy) -> Result<f64> {
        if self.spec.n_decisions.is_some() {
            return Err(Error::ShapeMismatch(
                "sale rate is defined over single-decision policies".into(),
            ));
        }
        let sale = self.sale_logit.as_ref().ok_or(Error::NoSaleModel)?;
        let s = self.spec;
        self.expected_policy_reward(policy, |x1, x2, a| {
            self.click_prob_joint(x1, x2, a) * sigmoid(sale[(x1 * s.k2 + x2) * s.n_actions + a])
        })
    }

    fn expected_policy_reward(
        &self,
        policy: &Policy,
        reward: impl Fn(usize, usize, usize) -> f64,
    ) -> Result<f64> {
        if policy.spec != self.spec {
            return Err(Error::ShapeMismatch(format!(
                "policy spec {:?} differs from environment spec {:?}",
                policy.spec, self.spec
            )));
        }
        let s = &self.spec;
        let mut total = 0.0;
        for x1 in 0..s.k1 {
            for x2 in 0..s.k2 {
                let w = self.p_x1[x1] * self.p_x2_given_x1[x1][x2];
                let row = policy.row(x1, x2);
                let inner: f64 = row
                    .iter()
                    .enumerate()
                    .map(|(j, p)| p * reward(x1, x2, j))
                    .sum();
                total += w * inner;
            }
        }
        Ok(total)
    }

    /// Best deterministic policy that may look only at `visibility`.
    ///
    /// Covariates outside `visibility` are averaged out under the true
    /// covariate distribution, so the x1-only oracle maximises the
    /// interventional click rate. Ties go to the lowest action index.
    pub fn oracle_policy(&self, visibility: CovariateSet) -> Policy {
        let s = self.spec;
        let n = s.n_joint_actions();
        let scores = |x1: usize, x2: usize| -> Vec<f64> {
            (0..n)
                .map(|j| match (visibility.x1, visibility.x2) {
                    (true, true) => self.click_prob_joint(x1, x2, j),
                    (true, false) => self.interventional_ctr(x1, j),
                    (false, true) => {
                        let pz = self.p_x2_marginal()[x2];
                        (0..s.k1)
                            .map(|u| {
                                self.p_x1[u] * self.p_x2_given_x1[u][x2]
                                    * self.click_prob_joint(u, x2, j)
                            })
                            .sum::<f64>()
                            / pz.max(f64::MIN_POSITIVE)
                    }
                    (false, false) => (0..s.k1)
                        .map(|u| self.p_x1[u] * self.interventional_ctr(u, j))
                        .sum(),
                })
                .collect()
        };
        let mut probs = vec![0.0; s.k1 * s.k2 * n];
        for x1 in 0..s.k1 {
            for x2 in 0..s.k2 {
                let best = argmax(scores(x1, x2));
                probs[(x1 * s.k2 + x2) * n + best] = 1.0;
            }
        }
        Policy::from_parts(s, probs, visibility, None, Some("oracle".into()))
            .expect("oracle policy rows are one-hot")
    }

    pub fn p_x2_marginal(&self) -> Vec<f64> {
        let mut m = vec![0.0; self.spec.k2];
        for (x1, row) in self.p_x2_given_x1.iter().enumerate() {
            for (x2, p) in row.iter().enumerate() {
                m[x2] += self.p_x1[x1] * p;
            }
        }
        m
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let gt: Self = serde_json::from_str(s)?;
        gt.validate()?;
        Ok(gt)
    }

    /// SHA-256 of the compact JSON serialisation, hex encoded.
    pub fn fingerprint(&self) -> String {
        let bytes = serde_json::to_vec(self).expect("ground truth serialises");
        hex::encode(Sha256::digest(&bytes))
    }
}

fn check_distribution(name: &str, p: &[f64], len: usize) -> Result<()> {
    if p.len() != len {
        return Err(Error::ShapeMismatch(format!(
            "{name} has length {}, expected {len}",
            p.len()
        )));
    }
    if p.iter().any(|v| !v.is_finite() || *v < 0.0) {
        return Err(Error::InvalidParameter(format!("{name} has a negative entry")));
    }
    let sum: f64 = p.iter().sum();
    if (sum - 1.0).abs() > SUM_TOL {
        return Err(Error::InvalidParameter(format!("{name} sums to {sum}")));
    }
    Ok(())
}

fn check_logits(name: &str, l: &[f64], len: usize) -> Result<()> {
    if l.len() != len {
        return Err(Error::ShapeMismatch(format!(
            "{name} has length {}, expected {len}",
            l.len()
        )));
    }
    if l.iter().any(|v| !v.is_finite()) {
        return Err(Error::InvalidParameter(format!("{name} has a non-finite entry")));
    }
    Ok(())
}

/// Per-`x1` breakdown of the confounding gap.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConfoundingGapReport {
    pub rows: Vec<GapRow>,
    /// `sum_x1 P(x1) * gap(x1)`.
    pub gap: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GapRow {
    pub x1: usize,
    /// Maximiser of the interventional click rate.
    pub oracle_action: usize,
    /// Maximiser of the click rate an `x1`-only model learns from a log
    /// collected by the `x2`-aware greedy policy.
    pub confounded_action: usize,
    pub gap: f64,
}

/// Exact loss an `x1`-only policy suffers when its model is fit on a log
/// produced by the `x2`-aware greedy policy.
///
/// Under that logging policy, action `a` is played for context `(x1, x2)`
/// essentially only when it is the greedy choice there, so the naive model's
/// estimate for `(x1, a)` averages the click rate over
/// `Q(x2 | x1, a) ∝ P(x2 | x1) 1{greedy(x1, x2) = a}`. Actions that are never
/// greedy are reached only through uniform exploration and are estimated
/// without bias. This is the small-exploration limit of an epsilon-greedy
/// logger.
pub fn confounding_gap_report(gt: &GroundTruth) -> ConfoundingGapReport {
    let s = gt.spec;
    let n = s.n_joint_actions();
    let mut rows = Vec::with_capacity(s.k1);
    let mut total = 0.0;
    for x1 in 0..s.k1 {
        let greedy: Vec<usize> = (0..s.k2)
            .map(|x2| argmax((0..n).map(|j| gt.click_prob_joint(x1, x2, j))))
            .collect();
        let truth: Vec<f64> = (0..n).map(|j| gt.interventional_ctr(x1, j)).collect();
        let naive: Vec<f64> = (0..n)
            .map(|j| {
                let mut w = 0.0;
                let mut acc = 0.0;
                for x2 in (0..s.k2).filter(|x2| greedy[*x2] == j) {
                    let p = gt.p_x2_given_x1[x1][x2];
                    w += p;
                    acc += p * gt.click_prob_joint(x1, x2, j);
                }
                if w > 0.0 {
                    acc / w
                } else {
                    truth[j]
                }
            })
            .collect();
        let oracle_action = argmax(truth.iter().copied());
        let confounded_action = argmax(naive.iter().copied());
        let gap = (truth[oracle_action] - truth[confounded_action]).max(0.0);
        total += gt.p_x1[x1] * gap;
        rows.push(GapRow {
            x1,
            oracle_action,
            confounded_action,
            gap,
        });
    }
    ConfoundingGapReport { rows, gap: total }
}

pub fn confounding_gap(gt: &GroundTruth) -> f64 {
    confounding_gap_report(gt).gap
}

/// Distribution the default generator draws environments from.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GroundTruthPrior {
    /// Logits are i.i.d. uniform on `[-logit_bound, logit_bound]`.
    pub logit_bound: f64,
    /// Concentration of the symmetric Dirichlet for `P(x1)` and `P(x2|x1)`.
    pub dirichlet_alpha: f64,
    pub max_rounds: usize,
    pub with_sale: bool,
    /// Minimum gap between the best and second-best interventional click
    /// rate for every `x1`.
    pub min_action_margin: f64,
}

impl Default for GroundTruthPrior {
    fn default() -> Self {
        Self {
            logit_bound: 2.0,
            dirichlet_alpha: 1.0,
            max_rounds: 1000,
            with_sale: true,
            min_action_margin: 0.0,
        }
    }
}

/// Draws a seeded environment and rejection-resamples until
/// [`confounding_gap`] reaches `min_gap`.
pub fn make_default_ground_truth(
    spec: CategoricalSpec,
    seed: u64,
    min_gap: f64,
) -> Result<GroundTruth> {
    make_ground_truth(spec, seed, min_gap, &GroundTruthPrior::default())
}

pub fn make_ground_truth(
    spec: CategoricalSpec,
    seed: u64,
    min_gap: f64,
    prior: &GroundTruthPrior,
) -> Result<GroundTruth> {
    spec.validate()?;
    if !(0.0..=0.2).contains(&min_gap) {
        return Err(Error::InvalidParameter(format!(
            "min_gap must lie in [0, 0.2], got {min_gap}"
        )));
    }
    if !(prior.logit_bound > 0.0 && prior.logit_bound <= LOGIT_CAP) || prior.dirichlet_alpha <= 0.0
    {
        return Err(Error::InvalidParameter(format!("bad prior {prior:?}")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut best = f64::NEG_INFINITY;
    for _ in 0..prior.max_rounds.max(1) {
        let mut gt = draw_ground_truth(spec, prior, &mut rng);
        let gap = confounding_gap(&gt);
        if gap >= min_gap && action_margin(&gt) >= prior.min_action_margin {
            gt.seed = Some(seed);
            gt.gap = Some(gap);
            return Ok(gt);
        }
        best = best.max(gap);
    }
    Err(Error::GapNotReached {
        min_gap,
        rounds: prior.max_rounds,
        best,
    })
}

/// Smallest, over `x1`, distance between the best and the second-best
/// interventional click rate.
pub fn action_margin(gt: &GroundTruth) -> f64 {
    let n = gt.spec.n_joint_actions();
    (0..gt.spec.k1)
        .map(|x1| {
            let mut v: Vec<f64> = (0..n).map(|j| gt.interventional_ctr(x1, j)).collect();
            v.sort_by(|a, b| b.total_cmp(a));
            v[0] - v[1]
        })
        .fold(f64::INFINITY, f64::min)
}

fn draw_ground_truth(
    spec: CategoricalSpec,
    prior: &GroundTruthPrior,
    rng: &mut ChaCha8Rng,
) -> GroundTruth {
    let p_x1 = dirichlet(spec.k1, prior.dirichlet_alpha, rng);
    let p_x2_given_x1 = (0..spec.k1)
        .map(|_| dirichlet(spec.k2, prior.dirichlet_alpha, rng))
        .collect();
    let b = prior.logit_bound;
    let mut draw = |n: usize| -> Vec<f64> { (0..n).map(|_| rng.random_range(-b..=b)).collect() };
    let click_logit = draw(spec.k1 * spec.k2 * spec.n_joint_actions());
    let sale_logit = prior
        .with_sale
        .then(|| draw(spec.k1 * spec.k2 * spec.n_actions));
    GroundTruth {
        spec,
        p_x1,
        p_x2_given_x1,
        click_logit,
        sale_logit,
        seed: None,
        gap: None,
    }
}

/// Symmetric Dirichlet draw via normalised Gamma variates.
fn dirichlet(k: usize, alpha: f64, rng: &mut ChaCha8Rng) -> Vec<f64> {
    let draws: Vec<f64> = if (alpha - 1.0).abs() < f64::EPSILON {
        (0..k).map(|_| rng.sample::<f64, _>(Exp1)).collect()
    } else {
        let g = rand_distr::Gamma::new(alpha, 1.0).expect("alpha > 0");
        (0..k).map(|_| rng.sample(g)).collect()
    };
    normalize(draws)
}

/// Scales to unit sum; the last entry absorbs rounding so the sum is exactly
/// representable to within one ulp.
pub(crate) fn normalize(mut v: Vec<f64>) -> Vec<f64> {
    let sum: f64 = v.iter().sum();
    v.iter_mut().for_each(|x| *x /= sum);
    let head: f64 = v[..v.len() - 1].iter().sum();
    let last = v.len() - 1;
    v[last] = (1.0 - head).max(0.0);
    v
}
