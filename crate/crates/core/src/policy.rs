//! Recommendation policies: uniform exploration, epsilon-greedy on a fitted
//! click model, and factored two-decision policies.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::environment::{argmax, sample_index, CategoricalSpec};
use crate::error::{Error, Result};
use crate::features::CovariateSet;
use crate::glm::FittedModel;

const ROW_TOL: f64 = 1e-12;

/// Conditional action distribution for every context `(x1, x2)`.
///
/// In two-decision mode the action axis is the joint index `a * D + d`.
/// `visibility` records which covariates the policy may depend on; when it
/// excludes `x2` the rows for a given `x1` are identical.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Policy {
    pub spec: CategoricalSpec,
    pub probs: Vec<f64>,
    pub visibility: CovariateSet,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub epsilon: Option<f64>,
    /// Free-form reference to the model that produced the policy.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub source: Option<String>,
}

impl Policy {
    pub fn from_parts(
        spec: CategoricalSpec,
        probs: Vec<f64>,
        visibility: CovariateSet,
        epsilon: Option<f64>,
        source: Option<String>,
    ) -> Result<Self> {
        let p = Self {
            spec,
            probs,
            visibility,
            epsilon,
            source,
        };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        let s = &self.spec;
        let n = s.n_joint_actions();
        if self.probs.len() != s.k1 * s.k2 * n {
            return Err(Error::ShapeMismatch(format!(
                "policy table has {} entries, expected {}",
                self.probs.len(),
                s.k1 * s.k2 * n
            )));
        }
        for (i, row) in self.probs.chunks(n).enumerate() {
            if row.iter().any(|p| !(*p >= 0.0)) {
                return Err(Error::InvalidParameter(format!("negative mass in row {i}")));
            }
            let sum: f64 = row.iter().sum();
            if (sum - 1.0).abs() > ROW_TOL {
                return Err(Error::InvalidParameter(format!("row {i} sums to {sum}")));
            }
        }
        Ok(())
    }

    pub fn n_actions(&self) -> usize {
        self.spec.n_joint_actions()
    }

    pub fn row(&self, x1: usize, x2: usize) -> &[f64] {
        let n = self.n_actions();
        let start = (x1 * self.spec.k2 + x2) * n;
        &self.probs[start..start + n]
    }

    /// Whether the rows really are constant in the covariates the policy
    /// claims not to see.
    pub fn respects_visibility(&self) -> bool {
        let s = &self.spec;
        for x1 in 0..s.k1 {
            for x2 in 0..s.k2 {
                let r1 = if self.visibility.x1 { x1 } else { 0 };
                let r2 = if self.visibility.x2 { x2 } else { 0 };
                if self.row(x1, x2) != self.row(r1, r2) {
                    return false;
                }
            }
        }
        true
    }

    /// Draws a (joint) action and returns it with its propensity.
    pub fn sample_action<R: Rng + ?Sized>(&self, x1: usize, x2: usize, rng: &mut R) -> (usize, f64) {
        let row = self.row(x1, x2);
        let a = sample_index(row, rng);
        (a, row[a])
    }

    pub fn min_prob(&self) -> f64 {
        self.probs.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let p: Self = serde_json::from_str(s)?;
        p.validate()?;
        Ok(p)
    }
}

/// `pi_0(a) = 1 / A` for every context.
pub fn uniform_policy(spec: CategoricalSpec) -> Policy {
    let n = spec.n_joint_actions();
    Policy {
        spec,
        probs: vec![1.0 / n as f64; spec.k1 * spec.k2 * n],
        visibility: CovariateSet::NONE,
        epsilon: Some(1.0),
        source: Some("uniform".into()),
    }
}

/// Epsilon-greedy policy on a function of `(x1, x2, joint action)`.
///
/// `(1 - eps)` extra mass goes to the lowest-index maximiser; every action
/// keeps `eps / A`.
pub fn epsilon_greedy_on(
    spec: CategoricalSpec,
    epsilon: f64,
    visibility: CovariateSet,
    mut score: impl FnMut(usize, usize, usize) -> f64,
) -> Result<Policy> {
    if !(0.0..=1.0).contains(&epsilon) {
        return Err(Error::InvalidParameter(format!(
            "epsilon must lie in [0, 1], got {epsilon}"
        )));
    }
    let n = spec.n_joint_actions();
    let floor = epsilon / n as f64;
    let mut probs = Vec::with_capacity(spec.k1 * spec.k2 * n);
    for x1 in 0..spec.k1 {
        for x2 in 0..spec.k2 {
            let best = argmax((0..n).map(|j| score(x1, x2, j)));
            probs.extend((0..n).map(|j| if j == best { 1.0 - epsilon + floor } else { floor }));
        }
    }
    Ok(Policy {
        spec,
        probs,
        visibility,
        epsilon: Some(epsilon),
        source: None,
    })
}

/// Epsilon-greedy policy on a fitted click model. The policy sees exactly the
/// covariates the model was trained on.
pub fn epsilon_greedy(model: &FittedModel, epsilon: f64, spec: CategoricalSpec) -> Result<Policy> {
    let fs = model.feature_spec;
    if fs.spec != spec {
        return Err(Error::ShapeMismatch("model and policy specs differ".into()));
    }
    let full_actions = fs.action_factors.a && (fs.action_factors.d == spec.n_decisions.is_some());
    if !full_actions {
        return Err(Error::ShapeMismatch(format!(
            "model over `{}` does not score every joint action",
            fs.descriptor()
        )));
    }
    // each context is scored once per (x1, x2) even when the model ignores x2,
    // which keeps ignored-covariate rows bitwise identical
    let mut p = epsilon_greedy_on(spec, epsilon, fs.included, |x1, x2, j| {
        model.predict_cell(&spec.cell(x1, x2, j))
    })?;
    p.source = Some(model.describe());
    Ok(p)
}

/// Logits of a factored policy `pi(a, d | x) = pi_xi(a | x') pi_gamma(d | x'')`.
///
/// `xi` is laid out `n_ctx(x_prime) x A`, `gamma` is `n_ctx(x_dprime) x D`,
/// where contexts of a covariate subset are indexed mixed-radix `(x1, x2)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FactoredPolicyParams {
    pub spec: CategoricalSpec,
    pub x_prime: CovariateSet,
    pub x_dprime: CovariateSet,
    pub xi: Vec<f64>,
    pub gamma: Vec<f64>,
}

pub fn n_contexts(spec: &CategoricalSpec, set: CovariateSet) -> usize {
    (if set.x1 { spec.k1 } else { 1 }) * (if set.x2 { spec.k2 } else { 1 })
}

pub fn context_index(spec: &CategoricalSpec, set: CovariateSet, x1: usize, x2: usize) -> usize {
    match (set.x1, set.x2) {
        (true, true) => x1 * spec.k2 + x2,
        (true, false) => x1,
        (false, true) => x2,
        (false, false) => 0,
    }
}

pub fn softmax(logits: &[f64]) -> Vec<f64> {
    let m = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let e: Vec<f64> = logits.iter().map(|l| (l - m).exp()).collect();
    let z: f64 = e.iter().sum();
    e.into_iter().map(|v| v / z).collect()
}

impl FactoredPolicyParams {
    pub fn zeros(spec: CategoricalSpec, x_prime: CovariateSet, x_dprime: CovariateSet) -> Result<Self> {
        let d = spec.n_decisions.ok_or(Error::NoDecision)?;
        Ok(Self {
            spec,
            x_prime,
            x_dprime,
            xi: vec![0.0; n_contexts(&spec, x_prime) * spec.n_actions],
            gamma: vec![0.0; n_contexts(&spec, x_dprime) * d],
        })
    }

    /// Softened deterministic policy: logit `scale` on the chosen action of
    /// each context, 0 elsewhere.
    pub fn from_choices(
        spec: CategoricalSpec,
        x_prime: CovariateSet,
        x_dprime: CovariateSet,
        a_choice: &[usize],
        d_choice: &[usize],
        scale: f64,
    ) -> Result<Self> {
        let mut p = Self::zeros(spec, x_prime, x_dprime)?;
        let (na, nd) = (spec.n_actions, p.n_decisions());
        if a_choice.len() != n_contexts(&spec, x_prime) || d_choice.len() != n_contexts(&spec, x_dprime) {
            return Err(Error::ShapeMismatch("choice tables do not match contexts".into()));
        }
        for (c, &a) in a_choice.iter().enumerate() {
            p.xi[c * na + a] = scale;
        }
        for (c, &d) in d_choice.iter().enumerate() {
            p.gamma[c * nd + d] = scale;
        }
        Ok(p)
    }

    pub fn n_decisions(&self) -> usize {
        self.spec.n_decisions_or_one()
    }

    pub fn validate(&self) -> Result<()> {
        let s = &self.spec;
        let nd = s.n_decisions.ok_or(Error::NoDecision)?;
        if self.xi.len() != n_contexts(s, self.x_prime) * s.n_actions
            || self.gamma.len() != n_contexts(s, self.x_dprime) * nd
        {
            return Err(Error::ShapeMismatch("factored logits have the wrong length".into()));
        }
        if self.xi.iter().chain(&self.gamma).any(|v| !v.is_finite()) {
            return Err(Error::InvalidParameter("non-finite factored logit".into()));
        }
        Ok(())
    }

    pub fn a_probs(&self, x1: usize, x2: usize) -> Vec<f64> {
        let na = self.spec.n_actions;
        let c = context_index(&self.spec, self.x_prime, x1, x2);
        softmax(&self.xi[c * na..(c + 1) * na])
    }

    pub fn d_probs(&self, x1: usize, x2: usize) -> Vec<f64> {
        let nd = self.n_decisions();
        let c = context_index(&self.spec, self.x_dprime, x1, x2);
        softmax(&self.gamma[c * nd..(c + 1) * nd])
    }

    /// Outer product of the two softmax factors for every context.
    pub fn to_joint(&self) -> Result<Policy> {
        self.validate()?;
        let s = self.spec;
        let mut probs = Vec::with_capacity(s.k1 * s.k2 * s.n_joint_actions());
        for x1 in 0..s.k1 {
            for x2 in 0..s.k2 {
                let pa = self.a_probs(x1, x2);
                let pd = self.d_probs(x1, x2);
                for a in &pa {
                    probs.extend(pd.iter().map(|d| a * d));
                }
            }
        }
        // outer products of normalised rows can drift by a few ulps
        let n = s.n_joint_actions();
        for row in probs.chunks_mut(n) {
            let z: f64 = row.iter().sum();
            row.iter_mut().for_each(|p| *p /= z);
        }
        Policy::from_parts(
            s,
            probs,
            CovariateSet {
                x1: self.x_prime.x1 || self.x_dprime.x1,
                x2: self.x_prime.x2 || self.x_dprime.x2,
            },
            None,
            Some(format!("factored({} | {})", self.x_prime, self.x_dprime)),
        )
    }
}
