//! Maximum-likelihood logistic regression on one-hot Kronecker designs.
//!
//! Because every design here is saturated, the log-likelihood separates into
//! one Bernoulli term per cell and the MLE is the per-cell empirical log-odds.
//! Cells whose empirical rate is 0 or 1 have no finite maximiser and are
//! clipped to `-LOGIT_CAP` / `+LOGIT_CAP`; unvisited cells get 0.

use serde::{Deserialize, Serialize};

use crate::environment::{logit, sigmoid, GroundTruth, LOGIT_CAP};
use crate::error::{Error, Result};
use crate::features::{Cell, FeatureSpec};
use crate::policy::Policy;
use crate::scenarios::Interaction;

/// What the model predicts.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Target {
    Click,
    /// Sale probability given a click; trained on clicked records only.
    SaleGivenClick,
}

impl Target {
    /// Label of `r` under this target, or `None` if `r` is not a training
    /// record for it.
    pub fn label(self, r: &Interaction) -> Option<bool> {
        match self {
            Target::Click => Some(r.c),
            Target::SaleGivenClick => r.c.then(|| r.s.unwrap_or(false)),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FitOptions {
    /// Pseudo-count added to both outcomes of every visited cell.
    pub alpha: f64,
}

impl Default for FitOptions {
    fn default() -> Self {
        Self { alpha: 0.0 }
    }
}

/// Impression and success counts per design cell.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CellCounts {
    pub impressions: Vec<u64>,
    pub successes: Vec<u64>,
}

impl CellCounts {
    pub fn zeros(dim: usize) -> Self {
        Self {
            impressions: vec![0; dim],
            successes: vec![0; dim],
        }
    }

    pub fn from_records(fs: &FeatureSpec, target: Target, records: &[Interaction]) -> Result<Self> {
        let mut counts = Self::zeros(fs.dim());
        for r in records {
            if let Some(y) = target.label(r) {
                let i = fs.encode(&r.cell())?;
                counts.impressions[i] += 1;
                counts.successes[i] += y as u64;
            }
        }
        Ok(counts)
    }

    /// Associative merge of two partitions of the same design.
    pub fn merge(mut self, other: &Self) -> Self {
        for (a, b) in self.impressions.iter_mut().zip(&other.impressions) {
            *a += b;
        }
        for (a, b) in self.successes.iter_mut().zip(&other.successes) {
            *a += b;
        }
        self
    }

    pub fn total(&self) -> u64 {
        self.impressions.iter().sum()
    }

    /// Whether cell `i` has both outcomes observed.
    pub fn is_interior(&self, i: usize) -> bool {
        self.successes[i] > 0 && self.successes[i] < self.impressions[i]
    }
}

/// A fitted click (or sale) model `P(y = 1 | features) = sigmoid(beta[cell])`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FittedModel {
    pub feature_spec: FeatureSpec,
    pub beta: Vec<f64>,
    pub target: Target,
    /// Inclusive day range of the training log.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub training_days: Option<(u32, u32)>,
    pub n_train: u64,
}

impl FittedModel {
    pub fn from_beta(feature_spec: FeatureSpec, beta: Vec<f64>, target: Target) -> Result<Self> {
        if beta.len() != feature_spec.dim() {
            return Err(Error::ShapeMismatch(format!(
                "beta has {} entries, design has {}",
                beta.len(),
                feature_spec.dim()
            )));
        }
        if beta.iter().any(|b| !b.is_finite()) {
            return Err(Error::InvalidParameter("non-finite coefficient".into()));
        }
        Ok(Self {
            feature_spec,
            beta: beta.into_iter().map(|b| b.clamp(-LOGIT_CAP, LOGIT_CAP)).collect(),
            target,
            training_days: None,
            n_train: 0,
        })
    }

    pub fn predict(&self, cell: &Cell) -> Result<f64> {
        Ok(sigmoid(self.beta[self.feature_spec.encode(cell)?]))
    }

    /// [`predict`](Self::predict) for cells already known to be in range.
    pub(crate) fn predict_cell(&self, cell: &Cell) -> f64 {
        self.predict(cell).expect("cell in range")
    }

    pub fn describe(&self) -> String {
        let days = match self.training_days {
            Some((a, b)) if a == b => format!(" on day {a}"),
            Some((a, b)) => format!(" on days {a}-{b}"),
            None => String::new(),
        };
        format!("logit({}){}", self.feature_spec.descriptor(), days)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let m: Self = serde_json::from_str(s)?;
        if m.beta.len() != m.feature_spec.dim() {
            return Err(Error::ShapeMismatch("beta length does not match feature spec".into()));
        }
        Ok(m)
    }
}

/// Saturated-design MLE on `records`.
pub fn fit(records: &[Interaction], fs: &FeatureSpec, target: Target) -> Result<FittedModel> {
    fit_with(records, fs, target, FitOptions::default())
}

pub fn fit_with(
    records: &[Interaction],
    fs: &FeatureSpec,
    target: Target,
    opts: FitOptions,
) -> Result<FittedModel> {
    if records.is_empty() {
        return Err(Error::EmptyLog);
    }
    if matches!(target, Target::SaleGivenClick) && fs.action_factors.d {
        return Err(Error::InvalidParameter("sale models do not use the decision factor".into()));
    }
    let counts = CellCounts::from_records(fs, target, records)?;
    let mut m = fit_counts(fs, target, &counts, opts)?;
    let first = records.first().map(|r| r.day).unwrap_or(0);
    let last = records.iter().map(|r| r.day).max().unwrap_or(first);
    m.training_days = Some((first, last));
    Ok(m)
}

/// Closed-form MLE from per-cell counts.
pub fn fit_counts(
    fs: &FeatureSpec,
    target: Target,
    counts: &CellCounts,
    opts: FitOptions,
) -> Result<FittedModel> {
    if counts.impressions.len() != fs.dim() {
        return Err(Error::ShapeMismatch("counts do not match design".into()));
    }
    if opts.alpha < 0.0 || !opts.alpha.is_finite() {
        return Err(Error::InvalidParameter(format!("bad pseudo-count {}", opts.alpha)));
    }
    let beta = counts
        .impressions
        .iter()
        .zip(&counts.successes)
        .map(|(&n, &k)| cell_log_odds(n, k, opts.alpha))
        .collect();
    Ok(FittedModel {
        feature_spec: *fs,
        beta,
        target,
        training_days: None,
        n_train: counts.total(),
    })
}

fn cell_log_odds(n: u64, k: u64, alpha: f64) -> f64 {
    if n == 0 {
        return 0.0;
    }
    let succ = k as f64 + alpha;
    let fail = (n - k) as f64 + alpha;
    if fail <= 0.0 {
        LOGIT_CAP
    } else if succ <= 0.0 {
        -LOGIT_CAP
    } else {
        (succ / fail).ln().clamp(-LOGIT_CAP, LOGIT_CAP)
    }
}

/// The fit an infinite log collected under `logging` would produce: each
/// cell gets the log-odds of its target conditional on the cell, with the
/// covariates the design leaves out averaged under the logging distribution.
/// Cells the logging policy never reaches get 0, as in [`fit`].
pub fn population_fit(
    gt: &GroundTruth,
    logging: &Policy,
    fs: &FeatureSpec,
    target: Target,
) -> Result<FittedModel> {
    let spec = gt.spec;
    if fs.spec != spec || logging.spec != spec {
        return Err(Error::ShapeMismatch("design, policy and environment disagree".into()));
    }
    if matches!(target, Target::SaleGivenClick) && !gt.has_sale_model() {
        return Err(Error::NoSaleModel);
    }
    let mut num = vec![0.0; fs.dim()];
    let mut den = vec![0.0; fs.dim()];
    let ctx = gt.context_probs();
    for x1 in 0..spec.k1 {
        for x2 in 0..spec.k2 {
            for (j, &pj) in logging.row(x1, x2).iter().enumerate() {
                let w = ctx[x1 * spec.k2 + x2] * pj;
                if w == 0.0 {
                    continue;
                }
                let cell = spec.cell(x1, x2, j);
                let i = fs.encode(&cell)?;
                let pc = gt.click_prob_joint(x1, x2, j);
                match target {
                    Target::Click => {
                        den[i] += w;
                        num[i] += w * pc;
                    }
                    Target::SaleGivenClick => {
                        den[i] += w * pc;
                        num[i] += w * pc * gt.true_sale_prob(x1, x2, cell.a)?;
                    }
                }
            }
        }
    }
    let beta = num
        .iter()
        .zip(&den)
        .map(|(&n, &d)| if d > 0.0 { logit(n / d) } else { 0.0 })
        .collect();
    Ok(FittedModel {
        feature_spec: *fs,
        beta,
        target,
        training_days: None,
        n_train: 0,
    })
}

/// `sum_i y_i log p_i + (1 - y_i) log(1 - p_i)` over the model's training
/// records in `records`.
pub fn log_likelihood(m: &FittedModel, records: &[Interaction]) -> Result<f64> {
    let mut ll = 0.0;
    for r in records {
        if let Some(y) = m.target.label(r) {
            let z = m.beta[m.feature_spec.encode(&r.cell())?];
            // log sigmoid(z) = -log(1 + e^-z), computed stably
            ll += if y { -softplus(-z) } else { -softplus(z) };
        }
    }
    Ok(ll)
}

/// `gradient[j] = sum_i (y_i - p_i) x_ij`.
pub fn gradient(m: &FittedModel, records: &[Interaction]) -> Result<Vec<f64>> {
    let mut g = vec![0.0; m.beta.len()];
    for r in records {
        if let Some(y) = m.target.label(r) {
            let j = m.feature_spec.encode(&r.cell())?;
            g[j] += y as u8 as f64 - sigmoid(m.beta[j]);
        }
    }
    Ok(g)
}

fn softplus(x: f64) -> f64 {
    if x > 0.0 {
        x + (-x).exp().ln_1p()
    } else {
        x.exp().ln_1p()
    }
}
