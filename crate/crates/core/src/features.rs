//! One-hot Kronecker encodings of categorical contexts and actions.
//!
//! Every design in this crate is saturated: the feature vector of a record is
//! the Kronecker product of one-hot indicators for each included factor, so it
//! has exactly one nonzero coordinate. We therefore represent it by the index of
//! that coordinate. The index is mixed-radix with the most significant factor
//! first, in the fixed order `X1, X2, A, D`.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::environment::CategoricalSpec;
use crate::error::{Error, Result};

/// A fully specified cell of the environment. `d` is 0 outside two-decision mode.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Cell {
    pub x1: usize,
    pub x2: usize,
    pub a: usize,
    pub d: usize,
}

impl Cell {
    pub fn new(x1: usize, x2: usize, a: usize) -> Self {
        Self { x1, x2, a, d: 0 }
    }

    pub fn with_decision(x1: usize, x2: usize, a: usize, d: usize) -> Self {
        Self { x1, x2, a, d }
    }
}

/// Subset of the covariates `{X1, X2}`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
pub struct CovariateSet {
    pub x1: bool,
    pub x2: bool,
}

impl CovariateSet {
    pub const NONE: Self = Self { x1: false, x2: false };
    pub const X1: Self = Self { x1: true, x2: false };
    pub const X2: Self = Self { x1: false, x2: true };
    pub const BOTH: Self = Self { x1: true, x2: true };

    pub fn contains_x2(self) -> bool {
        self.x2
    }
}

impl fmt::Display for CovariateSet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match (self.x1, self.x2) {
            (false, false) => f.write_str("none"),
            (true, false) => f.write_str("x1"),
            (false, true) => f.write_str("x2"),
            (true, true) => f.write_str("x1+x2"),
        }
    }
}

impl FromStr for CovariateSet {
    type Err = Error;

    /// Accepts `{X1}`, `X1,X2`, `x1+x2`, `none`, `{}` and similar spellings.
    fn from_str(s: &str) -> Result<Self> {
        let inner = s.trim().trim_start_matches('{').trim_end_matches('}').trim();
        let mut set = CovariateSet::NONE;
        if inner.is_empty() || inner.eq_ignore_ascii_case("none") {
            return Ok(set);
        }
        for tok in inner.split([',', '+', ' ']).filter(|t| !t.is_empty()) {
            match tok.to_ascii_lowercase().as_str() {
                "x1" if !set.x1 => set.x1 = true,
                "x2" if !set.x2 => set.x2 = true,
                _ => {
                    return Err(Error::InvalidParameter(format!(
                        "bad covariate subset `{s}` (expected members of {{X1, X2}})"
                    )))
                }
            }
        }
        Ok(set)
    }
}

/// Subset of the decision factors `{A, D}` crossed with the covariates.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ActionFactors {
    pub a: bool,
    pub d: bool,
}

impl ActionFactors {
    pub const A: Self = Self { a: true, d: false };
    pub const D: Self = Self { a: false, d: true };
    pub const AD: Self = Self { a: true, d: true };
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct FeatureSpec {
    pub included: CovariateSet,
    pub action_factors: ActionFactors,
    pub spec: CategoricalSpec,
}

impl FeatureSpec {
    pub fn new(
        included: CovariateSet,
        action_factors: ActionFactors,
        spec: CategoricalSpec,
    ) -> Result<Self> {
        if !action_factors.a && !action_factors.d {
            return Err(Error::InvalidParameter(
                "feature spec needs at least one action factor".into(),
            ));
        }
        if action_factors.d && spec.n_decisions.is_none() {
            return Err(Error::NoDecision);
        }
        Ok(Self {
            included,
            action_factors,
            spec,
        })
    }

    /// `x ⊗ a` over the given covariates.
    pub fn over_actions(included: CovariateSet, spec: CategoricalSpec) -> Self {
        Self {
            included,
            action_factors: ActionFactors::A,
            spec,
        }
    }

    /// Radices of the included factors in `X1, X2, A, D` order.
    fn radices(&self) -> impl Iterator<Item = (Factor, usize)> + '_ {
        let s = &self.spec;
        [
            (Factor::X1, self.included.x1, s.k1),
            (Factor::X2, self.included.x2, s.k2),
            (Factor::A, self.action_factors.a, s.n_actions),
            (
                Factor::D,
                self.action_factors.d,
                s.n_decisions.unwrap_or(1),
            ),
        ]
        .into_iter()
        .filter(|(_, on, _)| *on)
        .map(|(f, _, card)| (f, card))
    }

    pub fn dim(&self) -> usize {
        self.radices().map(|(_, card)| card).product()
    }

    /// Index of the single hot coordinate of `cell`'s feature vector.
    pub fn encode(&self, cell: &Cell) -> Result<usize> {
        let mut idx = 0;
        for (factor, card) in self.radices() {
            let (what, v) = match factor {
                Factor::X1 => ("x1", cell.x1),
                Factor::X2 => ("x2", cell.x2),
                Factor::A => ("a", cell.a),
                Factor::D => ("d", cell.d),
            };
            if v >= card {
                return Err(Error::OutOfRange {
                    what,
                    value: v,
                    card,
                });
            }
            idx = idx * card + v;
        }
        Ok(idx)
    }

    /// Dense form of [`encode`](Self::encode). Mostly useful for tests and
    /// for generic solvers that want an explicit design row.
    pub fn encode_dense(&self, cell: &Cell) -> Result<Vec<f64>> {
        let mut v = vec![0.0; self.dim()];
        v[self.encode(cell)?] = 1.0;
        Ok(v)
    }

    /// Short descriptor such as `x1*x2*a`.
    pub fn descriptor(&self) -> String {
        let names: Vec<&str> = self
            .radices()
            .map(|(f, _)| match f {
                Factor::X1 => "x1",
                Factor::X2 => "x2",
                Factor::A => "a",
                Factor::D => "d",
            })
            .collect();
        names.join("*")
    }
}

#[derive(Debug, Clone, Copy)]
enum Factor {
    X1,
    X2,
    A,
    D,
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::collections::HashSet;

    fn spec(k1: usize, k2: usize, a: usize) -> CategoricalSpec {
        CategoricalSpec::new(k1, k2, a).unwrap()
    }

    #[test]
    fn dims_at_default_sizes() {
        let s = spec(5, 5, 10);
        assert_eq!(FeatureSpec::over_actions(CovariateSet::X1, s).dim(), 50);
        assert_eq!(FeatureSpec::over_actions(CovariateSet::BOTH, s).dim(), 250);
        assert_eq!(FeatureSpec::over_actions(CovariateSet::NONE, s).dim(), 10);
    }

    #[test]
    fn mixed_radix_index() {
        let fs = FeatureSpec::over_actions(CovariateSet::X1, spec(2, 2, 2));
        assert_eq!(fs.encode(&Cell::new(0, 1, 1)).unwrap(), 1);
        let fs = FeatureSpec::over_actions(CovariateSet::BOTH, spec(2, 2, 2));
        assert_eq!(fs.encode(&Cell::new(1, 0, 1)).unwrap(), 5);
    }

    #[test]
    fn dense_vector_is_one_hot() {
        let fs = FeatureSpec::over_actions(CovariateSet::BOTH, spec(3, 4, 5));
        let v = fs.encode_dense(&Cell::new(2, 3, 4)).unwrap();
        assert_eq!(v.iter().sum::<f64>(), 1.0);
        assert_eq!(v.iter().filter(|x| **x != 0.0).count(), 1);
    }

    #[test]
    fn out_of_range_rejected() {
        let fs = FeatureSpec::over_actions(CovariateSet::X1, spec(2, 2, 2));
        assert!(matches!(
            fs.encode(&Cell::new(2, 0, 0)),
            Err(Error::OutOfRange { what: "x1", .. })
        ));
        // x2 is not part of this design so it is never checked
        assert!(fs.encode(&Cell::new(0, 7, 0)).is_ok());
    }

    #[test]
    fn decision_factor_requires_two_decision_spec() {
        assert!(FeatureSpec::new(CovariateSet::X1, ActionFactors::D, spec(2, 2, 2)).is_err());
        let s = spec(2, 3, 4).with_decisions(2).unwrap();
        let fs = FeatureSpec::new(CovariateSet::BOTH, ActionFactors::AD, s).unwrap();
        assert_eq!(fs.dim(), 48);
        assert_eq!(fs.descriptor(), "x1*x2*a*d");
    }

    #[test]
    fn encode_is_bijective_exhaustively() {
        for k1 in 2..=4 {
            for k2 in 2..=4 {
                for a in 2..=5 {
                    for d in [None, Some(2), Some(3)] {
                        let mut s = spec(k1, k2, a);
                        s.n_decisions = d;
                        for inc in [
                            CovariateSet::NONE,
                            CovariateSet::X1,
                            CovariateSet::X2,
                            CovariateSet::BOTH,
                        ] {
                            let factors = if d.is_some() {
                                vec![ActionFactors::A, ActionFactors::D, ActionFactors::AD]
                            } else {
                                vec![ActionFactors::A]
                            };
                            for af in factors {
                                check_bijection(FeatureSpec::new(inc, af, s).unwrap());
                            }
                        }
                    }
                }
            }
        }
    }

    fn check_bijection(fs: FeatureSpec) {
        let s = fs.spec;
        let mut seen = HashSet::new();
        for x1 in 0..(if fs.included.x1 { s.k1 } else { 1 }) {
            for x2 in 0..(if fs.included.x2 { s.k2 } else { 1 }) {
                for a in 0..(if fs.action_factors.a { s.n_actions } else { 1 }) {
                    for d in 0..(if fs.action_factors.d { s.n_decisions.unwrap() } else { 1 }) {
                        let i = fs.encode(&Cell::with_decision(x1, x2, a, d)).unwrap();
                        assert!(i < fs.dim());
                        assert!(seen.insert(i), "collision at {i}");
                    }
                }
            }
        }
        assert_eq!(seen.len(), fs.dim());
    }

    #[test]
    fn covariate_set_parsing() {
        assert_eq!("{X1}".parse::<CovariateSet>().unwrap(), CovariateSet::X1);
        assert_eq!("{X2}".parse::<CovariateSet>().unwrap(), CovariateSet::X2);
        assert_eq!("{X1,X2}".parse::<CovariateSet>().unwrap(), CovariateSet::BOTH);
        assert_eq!("x1+x2".parse::<CovariateSet>().unwrap(), CovariateSet::BOTH);
        assert_eq!("{}".parse::<CovariateSet>().unwrap(), CovariateSet::NONE);
        assert!("{X3}".parse::<CovariateSet>().is_err());
        assert!("X1,X1".parse::<CovariateSet>().is_err());
        for s in [CovariateSet::NONE, CovariateSet::X1, CovariateSet::X2, CovariateSet::BOTH] {
            assert_eq!(s.to_string().parse::<CovariateSet>().unwrap(), s);
        }
    }
}
