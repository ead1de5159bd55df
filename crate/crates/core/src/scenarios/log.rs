use std::fmt;
use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::environment::CategoricalSpec;
use crate::error::Result;
use crate::features::Cell;

/// A/B test arm label.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Arm {
    A,
    B,
}

impl fmt::Display for Arm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Arm::A => "A",
            Arm::B => "B",
        })
    }
}

/// One logged impression.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Interaction {
    pub day: u32,
    pub x1: usize,
    pub x2: usize,
    pub a: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub d: Option<usize>,
    pub propensity: f64,
    pub c: bool,
    /// Post-click sale; only recorded when `c` is true.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub s: Option<bool>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub arm: Option<Arm>,
}

impl Interaction {
    pub fn cell(&self) -> Cell {
        Cell::with_decision(self.x1, self.x2, self.a, self.d.unwrap_or(0))
    }

    pub fn joint_action(&self, spec: &CategoricalSpec) -> usize {
        spec.joint_action(self.a, self.d.unwrap_or(0))
    }
}

/// Interactions ordered by day.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Log {
    records: Vec<Interaction>,
}

impl Log {
    pub fn new() -> Self {
        Self::default()
    }

    /// Appends records; panics if they would make days decrease.
    pub fn extend(&mut self, more: impl IntoIterator<Item = Interaction>) {
        for r in more {
            if let Some(last) = self.records.last() {
                assert!(r.day >= last.day, "log days must be nondecreasing");
            }
            self.records.push(r);
        }
    }

    pub fn records(&self) -> &[Interaction] {
        &self.records
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    /// Records with `first <= day <= last`.
    pub fn days(&self, first: u32, last: u32) -> &[Interaction] {
        let lo = self.records.partition_point(|r| r.day < first);
        let hi = self.records.partition_point(|r| r.day <= last);
        &self.records[lo..hi.max(lo)]
    }

    pub fn day(&self, day: u32) -> &[Interaction] {
        self.days(day, day)
    }

    /// Writes one JSON object per line.
    pub fn write_ndjson<W: Write>(&self, mut w: W) -> Result<()> {
        write_ndjson(&self.records, &mut w)
    }
}

pub fn write_ndjson<W: Write>(records: &[Interaction], mut w: W) -> Result<()> {
    for r in records {
        serde_json::to_writer(&mut w, r)?;
        w.write_all(b"\n")?;
    }
    Ok(())
}

impl From<Vec<Interaction>> for Log {
    fn from(v: Vec<Interaction>) -> Self {
        let mut log = Log::new();
        log.extend(v);
        log
    }
}
