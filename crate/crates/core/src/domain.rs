//! Core value types shared by every stage of the pipeline: customer records with
//! their market context, the discrete action grid, quote outcomes, and datasets
//! with their CSV form.

use serde::{Deserialize, Serialize};
use std::collections::HashSet;
use std::io::{BufRead, Write};
use thiserror::Error;

/// Number of customer features carried by every record.
pub const FEATURE_COUNT: usize = 16;

#[derive(Debug, Error)]
pub enum DomainError {
    #[error("action index {index} out of range for grid of {count} actions")]
    ActionIndexOutOfRange { index: usize, count: usize },

    #[error("non-finite value for {0}")]
    NonFinite(&'static str),

    #[error("invalid customer record {id}: {reason}")]
    InvalidRecord { id: u64, reason: String },

    #[error("duplicate customer id {0}")]
    DuplicateId(u64),

    #[error("csv error at line {line}: {reason}")]
    Csv { line: usize, reason: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// One quote request on the comparison site: the customer's features plus the
/// market context and cost attached to them.
///
/// `avg_top5` / `avg_top6_10` are the mean of the five cheapest competitor quotes
/// and of the quotes ranked 6-10. `benchmark_premium` is the reference price the
/// agent scales, and `burn_cost` is the expected claims cost (the breakeven floor).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CustomerRecord {
    pub id: u64,
    pub features: [f64; FEATURE_COUNT],
    pub avg_top5: f64,
    pub avg_top6_10: f64,
    pub benchmark_premium: f64,
    pub burn_cost: f64,
}

impl CustomerRecord {
    pub fn validate(&self) -> Result<(), DomainError> {
        let invalid = |reason: &str| DomainError::InvalidRecord {
            id: self.id,
            reason: reason.to_string(),
        };
        for (name, v) in [
            ("avg_top5", self.avg_top5),
            ("avg_top6_10", self.avg_top6_10),
            ("benchmark_premium", self.benchmark_premium),
            ("burn_cost", self.burn_cost),
        ] {
            if !(v.is_finite() && v > 0.0) {
                return Err(invalid(&format!(
                    "{name} must be finite and positive, got {v}"
                )));
            }
        }
        if self.avg_top6_10 <= self.avg_top5 {
            return Err(invalid(&format!(
                "avg_top6_10 ({}) must exceed avg_top5 ({})",
                self.avg_top6_10, self.avg_top5
            )));
        }
        if self.features.iter().any(|f| !f.is_finite()) {
            return Err(invalid("all features must be finite"));
        }
        Ok(())
    }
}

/// The discrete set of premium multipliers an agent may quote.
///
/// The standard grid is `{0.7, 0.701, ..., 1.299, 1.3}`: 601 points, endpoints
/// inclusive, spaced 0.001 apart.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ActionGrid {
    lo: f64,
    hi: f64,
    step: f64,
    count: usize,
}

impl ActionGrid {
    pub fn standard() -> Self {
        ActionGrid {
            lo: 0.7,
            hi: 1.3,
            step: 0.001,
            count: 601,
        }
    }

    /// A custom grid (mainly for reduced test setups): `count` points starting
    /// at `lo`, spaced `step` apart.
    pub fn new(lo: f64, step: f64, count: usize) -> Result<Self, DomainError> {
        if !(lo.is_finite() && step.is_finite() && step > 0.0) {
            return Err(DomainError::NonFinite("grid parameters"));
        }
        if count == 0 {
            return Err(DomainError::ActionIndexOutOfRange { index: 0, count });
        }
        Ok(ActionGrid {
            lo,
            hi: lo + (count - 1) as f64 * step,
            step,
            count,
        })
    }

    pub fn lo(&self) -> f64 {
        self.lo
    }

    pub fn hi(&self) -> f64 {
        self.hi
    }

    pub fn step(&self) -> f64 {
        self.step
    }

    pub fn count(&self) -> usize {
        self.count
    }

    /// Multiplier at a grid index: `lo + index * step`.
    pub fn value(&self, index: usize) -> Result<f64, DomainError> {
        if index >= self.count {
            return Err(DomainError::ActionIndexOutOfRange {
                index,
                count: self.count,
            });
        }
        Ok(self.lo + index as f64 * self.step)
    }

    /// Index of the grid point closest to `multiplier`, clamped to the grid.
    pub fn nearest_index(&self, multiplier: f64) -> usize {
        let raw = ((multiplier - self.lo) / self.step).round();
        (raw.max(0.0) as usize).min(self.count - 1)
    }

    pub fn values(&self) -> impl Iterator<Item = f64> + '_ {
        (0..self.count).map(move |k| self.lo + k as f64 * self.step)
    }
}

impl Default for ActionGrid {
    fn default() -> Self {
        Self::standard()
    }
}

/// Outcome of quoting one customer: what was offered and what it earned.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QuoteOutcome {
    pub customer_id: u64,
    pub action_index: usize,
    pub premium: f64,
    pub accepted: bool,
    pub reward: f64,
}

impl QuoteOutcome {
    /// Builds an outcome with the reward identity enforced: the reward is the
    /// margin `premium - burn_cost` on acceptance and exactly zero otherwise.
    pub fn new(
        customer_id: u64,
        action_index: usize,
        premium: f64,
        burn_cost: f64,
        accepted: bool,
    ) -> Self {
        QuoteOutcome {
            customer_id,
            action_index,
            premium,
            accepted,
            reward: if accepted { premium - burn_cost } else { 0.0 },
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SplitTag {
    Train,
    Test,
}

/// An ordered collection of customer records with a train/test tag.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub records: Vec<CustomerRecord>,
    pub split_tag: SplitTag,
}

impl Dataset {
    /// Validates every record and checks id uniqueness.
    pub fn new(records: Vec<CustomerRecord>, split_tag: SplitTag) -> Result<Self, DomainError> {
        let mut seen = HashSet::with_capacity(records.len());
        for record in &records {
            record.validate()?;
            if !seen.insert(record.id) {
                return Err(DomainError::DuplicateId(record.id));
            }
        }
        Ok(Dataset { records, split_tag })
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn ids(&self) -> impl Iterator<Item = u64> + '_ {
        self.records.iter().map(|r| r.id)
    }

    /// Serializes to the dataset CSV format: fixed header, one row per record in
    /// order, floats at 17 significant digits so values round-trip exactly.
    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<(), DomainError> {
        w.write_all(CSV_HEADER.as_bytes())?;
        w.write_all(b"\n")?;
        let mut line = String::with_capacity(512);
        for r in &self.records {
            line.clear();
            line.push_str(&r.id.to_string());
            for f in &r.features {
                line.push(',');
                line.push_str(&fmt_f64(*f));
            }
            for v in [r.avg_top5, r.avg_top6_10, r.benchmark_premium, r.burn_cost] {
                line.push(',');
                line.push_str(&fmt_f64(v));
            }
            line.push('\n');
            w.write_all(line.as_bytes())?;
        }
        Ok(())
    }

    pub fn read_csv<R: BufRead>(r: R, split_tag: SplitTag) -> Result<Self, DomainError> {
        let mut lines = r.lines();
        let header = lines
            .next()
            .ok_or(DomainError::Csv {
                line: 1,
                reason: "empty file".to_string(),
            })?
            .map_err(DomainError::Io)?;
        if header.trim_end() != CSV_HEADER {
            return Err(DomainError::Csv {
                line: 1,
                reason: format!("unexpected header: {header}"),
            });
        }
        let mut records = Vec::new();
        for (i, line) in lines.enumerate() {
            let line_no = i + 2;
            let line = line.map_err(DomainError::Io)?;
            if line.trim().is_empty() {
                continue;
            }
            records.push(parse_csv_row(&line, line_no)?);
        }
        Dataset::new(records, split_tag)
    }
}

pub const CSV_HEADER: &str = "id,f1,f2,f3,f4,f5,f6,f7,f8,f9,f10,f11,f12,f13,f14,f15,f16,avg_top5,avg_top6_10,benchmark_premium,burn_cost";

/// Formats a float with 17 significant digits (round-trip exact for f64).
pub fn fmt_f64(x: f64) -> String {
    format!("{x:.16e}")
}

fn parse_csv_row(line: &str, line_no: usize) -> Result<CustomerRecord, DomainError> {
    let csv_err = |reason: String| DomainError::Csv {
        line: line_no,
        reason,
    };
    let fields: Vec<&str> = line.trim_end().split(',').collect();
    if fields.len() != FEATURE_COUNT + 5 {
        return Err(csv_err(format!(
            "expected {} fields, got {}",
            FEATURE_COUNT + 5,
            fields.len()
        )));
    }
    let id: u64 = fields[0]
        .parse()
        .map_err(|e| csv_err(format!("bad id: {e}")))?;
    let mut nums = [0.0; FEATURE_COUNT + 4];
    for (slot, field) in nums.iter_mut().zip(&fields[1..]) {
        *slot = field
            .parse()
            .map_err(|e| csv_err(format!("bad float {field:?}: {e}")))?;
    }
    let mut features = [0.0; FEATURE_COUNT];
    features.copy_from_slice(&nums[..FEATURE_COUNT]);
    Ok(CustomerRecord {
        id,
        features,
        avg_top5: nums[FEATURE_COUNT],
        avg_top6_10: nums[FEATURE_COUNT + 1],
        benchmark_premium: nums[FEATURE_COUNT + 2],
        burn_cost: nums[FEATURE_COUNT + 3],
    })
}

/// Multiplier for a grid index (the grid's own accessor, re-exported as a free
/// function for callers that hold indexes).
pub fn action_value(grid: &ActionGrid, index: usize) -> Result<f64, DomainError> {
    grid.value(index)
}

/// Final quoted premium for a record at a given multiplier.
pub fn premium_for(record: &CustomerRecord, multiplier: f64) -> Result<f64, DomainError> {
    if !multiplier.is_finite() {
        return Err(DomainError::NonFinite("multiplier"));
    }
    if !record.benchmark_premium.is_finite() {
        return Err(DomainError::NonFinite("benchmark_premium"));
    }
    Ok(multiplier * record.benchmark_premium)
}
