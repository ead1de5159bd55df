//! Balancing scores: classes of `x2` states that the logging policy treats
//! identically.

use serde::{Deserialize, Serialize};

use super::adjust::CovModel;
use crate::environment::GroundTruth;
use crate::error::{Error, Result};
use crate::policy::Policy;
use crate::scenarios::Interaction;

pub const BALANCING_TOL: f64 = 1e-9;

/// Partition of the `x2` states under one `x1`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BalancingPartition {
    pub x1: usize,
    /// Classes in order of their smallest member.
    pub classes: Vec<Vec<usize>>,
    /// `label[x2]` is the class index of `x2`.
    pub label: Vec<usize>,
}

impl BalancingPartition {
    pub fn n_classes(&self) -> usize {
        self.classes.len()
    }

    /// `P(b | x1)` for each class under the covariate distribution `p_x2`.
    pub fn class_weights(&self, p_x2: &[f64]) -> Vec<f64> {
        self.classes
            .iter()
            .map(|c| c.iter().map(|&x2| p_x2[x2]).sum())
            .collect()
    }
}

/// Groups `x2` states whose action distributions under `logging_policy` agree
/// within [`BALANCING_TOL`] in every coordinate.
pub fn balancing_coarsen(logging_policy: &Policy, x1: usize) -> BalancingPartition {
    let k2 = logging_policy.spec.k2;
    let mut classes: Vec<Vec<usize>> = Vec::new();
    let mut label = vec![0; k2];
    for x2 in 0..k2 {
        let row = logging_policy.row(x1, x2);
        let found = classes.iter().position(|c| {
            let rep = logging_policy.row(x1, c[0]);
            rep.iter().zip(row).all(|(p, q)| (p - q).abs() <= BALANCING_TOL)
        });
        match found {
            Some(i) => {
                classes[i].push(x2);
                label[x2] = i;
            }
            None => {
                label[x2] = classes.len();
                classes.push(vec![x2]);
            }
        }
    }
    BalancingPartition { x1, classes, label }
}

pub fn balancing_coarsen_all(logging_policy: &Policy) -> Vec<BalancingPartition> {
    (0..logging_policy.spec.k1)
        .map(|x1| balancing_coarsen(logging_policy, x1))
        .collect()
}

/// `Σ_b P(b | x1) P(c | x1, b, a)` computed exactly, where `P(c | x1, b, a)`
/// is the click rate among impressions of class `b` that received action `a`
/// under `logging_policy`. When the policy is constant within each class this
/// equals the interventional click rate.
pub fn class_adjusted_ctr(
    gt: &GroundTruth,
    logging_policy: &Policy,
    part: &BalancingPartition,
    a: usize,
) -> Result<f64> {
    let x1 = part.x1;
    let p_x2 = &gt.p_x2_given_x1[x1];
    let mut total = 0.0;
    for (class, w) in part.classes.iter().zip(part.class_weights(p_x2)) {
        if w == 0.0 {
            continue;
        }
        let mut num = 0.0;
        let mut den = 0.0;
        for &x2 in class {
            let pa = p_x2[x2] * logging_policy.row(x1, x2)[a];
            num += pa * gt.click_prob_joint(x1, x2, a);
            den += pa;
        }
        if den == 0.0 {
            return Err(Error::InvalidParameter(format!(
                "action {a} never logged in balancing class {class:?} of x1={x1}"
            )));
        }
        total += w * num / den;
    }
    Ok(total)
}

/// Sample version of [`class_adjusted_ctr`]: pooled click rate of each class
/// in `records`, weighted by the class mass under `cov`.
pub fn class_adjusted_ctr_from_log(
    records: &[Interaction],
    cov: &CovModel,
    part: &BalancingPartition,
    a: usize,
) -> Result<f64> {
    let n = part.n_classes();
    let mut shown = vec![0u64; n];
    let mut clicked = vec![0u64; n];
    for r in records.iter().filter(|r| r.x1 == part.x1 && r.a == a) {
        let b = *part.label.get(r.x2).ok_or(Error::OutOfRange {
            what: "x2",
            value: r.x2,
            card: part.label.len(),
        })?;
        shown[b] += 1;
        clicked[b] += u64::from(r.c);
    }
    let weights = part.class_weights(cov.row(part.x1));
    let mut total = 0.0;
    for b in 0..n {
        if weights[b] == 0.0 {
            continue;
        }
        if shown[b] == 0 {
            return Err(Error::InvalidParameter(format!(
                "action {a} never logged in balancing class {b} of x1={}",
                part.x1
            )));
        }
        total += weights[b] * clicked[b] as f64 / shown[b] as f64;
    }
    Ok(total)
}
