//! Consistent offline evaluation of pricing policies: every agent quotes the
//! same customers, the customer's decision for all agents is driven by one
//! shared uniform variate per customer, and rewards are scored under the true
//! conversion model. A cheaper relative quote accepted by the customer is then
//! always accepted at any even cheaper one, which makes the comparison fair and
//! low-variance.

use crate::agents::{AgentError, PricingPolicy};
use crate::conversion::{normalized_price, true_conversion, ConversionError};
use crate::domain::{ActionGrid, Dataset, DomainError};
use crate::rng::DrawStream;
use std::io::{BufRead, Write};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("agent {agent} returned action index {index} outside the {count}-action grid")]
    ActionOutOfRange {
        agent: String,
        index: usize,
        count: usize,
    },

    #[error("agent {agent} failed to quote customer {customer}: {source}")]
    AgentFailed {
        agent: String,
        customer: u64,
        source: AgentError,
    },

    #[error("duplicate agent name {0}")]
    DuplicateAgent(String),

    #[error("empty roster")]
    EmptyRoster,

    #[error("csv error at line {line}: {reason}")]
    Csv { line: usize, reason: String },

    #[error(transparent)]
    Domain(#[from] DomainError),

    #[error(transparent)]
    Conversion(#[from] ConversionError),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// One agent's scored quote for one customer.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AgentOutcome {
    pub action_index: usize,
    pub premium: f64,
    pub z: f64,
    pub p_true: f64,
    pub expected_reward: f64,
    pub realised_reward: f64,
}

/// The full evaluation record: per customer, the shared uniform and one
/// outcome per agent; customers appear in visit order.
#[derive(Debug, Clone, PartialEq)]
pub struct EvaluationTrace {
    pub agent_names: Vec<String>,
    pub customer_ids: Vec<u64>,
    pub us: Vec<f64>,
    /// Row-major: `outcomes[t * agent_names.len() + i]`.
    pub outcomes: Vec<AgentOutcome>,
    pub seed: u64,
}

impl EvaluationTrace {
    pub fn n_customers(&self) -> usize {
        self.customer_ids.len()
    }

    pub fn n_agents(&self) -> usize {
        self.agent_names.len()
    }

    pub fn outcome(&self, t: usize, agent: usize) -> &AgentOutcome {
        &self.outcomes[t * self.agent_names.len() + agent]
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct EvalConfig {
    pub seed: u64,
    /// Visit customers in a seeded shuffled order instead of dataset order.
    pub shuffle: bool,
}

impl EvalConfig {
    pub fn new(seed: u64) -> Self {
        EvalConfig {
            seed,
            shuffle: false,
        }
    }
}

/// The shared per-customer uniform, keyed by customer id so evaluation order
/// cannot change decisions.
pub fn shared_uniform(seed: u64, customer_id: u64) -> f64 {
    DrawStream::new(seed, "eval", customer_id).uniform()
}

/// Runs the evaluation protocol over the test set.
///
/// Per customer: every agent quotes (their draws keyed per agent and customer),
/// the premium is scored with the true conversion model at the true market
/// quantiles, and both the expected reward `p * (premium - burn_cost)` and the
/// realised reward `1(u <= p) * (premium - burn_cost)` are recorded with the
/// shared `u`.
pub fn evaluate(
    agents: &[&dyn PricingPolicy],
    test: &Dataset,
    grid: ActionGrid,
    config: EvalConfig,
) -> Result<EvaluationTrace, EvalError> {
    if agents.is_empty() {
        return Err(EvalError::EmptyRoster);
    }
    let agent_names: Vec<String> = agents.iter().map(|a| a.name().to_string()).collect();
    for (i, name) in agent_names.iter().enumerate() {
        if agent_names[..i].contains(name) {
            return Err(EvalError::DuplicateAgent(name.clone()));
        }
    }
    let agent_tags: Vec<String> = agent_names.iter().map(|n| format!("agent:{n}")).collect();

    let mut order: Vec<usize> = (0..test.len()).collect();
    if config.shuffle {
        let mut stream = DrawStream::new(config.seed, "eval-shuffle", 0);
        for i in (1..order.len()).rev() {
            order.swap(i, stream.index(i + 1));
        }
    }

    let mut customer_ids = Vec::with_capacity(test.len());
    let mut us = Vec::with_capacity(test.len());
    let mut outcomes = Vec::with_capacity(test.len() * agents.len());

    for &record_index in &order {
        let record = &test.records[record_index];
        let u = shared_uniform(config.seed, record.id);
        customer_ids.push(record.id);
        us.push(u);

        for (i, agent) in agents.iter().enumerate() {
            let mut stream = DrawStream::new(config.seed, &agent_tags[i], record.id);
            let action_index =
                agent
                    .quote(record, &mut stream)
                    .map_err(|source| EvalError::AgentFailed {
                        agent: agent_names[i].clone(),
                        customer: record.id,
                        source,
                    })?;
            let multiplier = grid
                .value(action_index)
                .map_err(|_| EvalError::ActionOutOfRange {
                    agent: agent_names[i].clone(),
                    index: action_index,
                    count: grid.count(),
                })?;
            let premium = multiplier * record.benchmark_premium;
            let z = normalized_price(premium, record.avg_top5, record.avg_top6_10)?;
            let p_true = true_conversion(z);
            let margin = premium - record.burn_cost;
            outcomes.push(AgentOutcome {
                action_index,
                premium,
                z,
                p_true,
                expected_reward: p_true * margin,
                realised_reward: if u <= p_true { margin } else { 0.0 },
            });
        }
    }

    Ok(EvaluationTrace {
        agent_names,
        customer_ids,
        us,
        outcomes,
        seed: config.seed,
    })
}

/// Running prefix sums of both reward streams, per agent.
#[derive(Debug, Clone, PartialEq)]
pub struct CumulativeCurves {
    pub agent_names: Vec<String>,
    /// `expected[i][t]` is agent i's cumulative expected reward after t + 1 customers.
    pub expected: Vec<Vec<f64>>,
    pub realised: Vec<Vec<f64>>,
}

pub fn cumulative_curves(trace: &EvaluationTrace) -> CumulativeCurves {
    let n_agents = trace.n_agents();
    let n_customers = trace.n_customers();
    let mut expected = vec![Vec::with_capacity(n_customers); n_agents];
    let mut realised = vec![Vec::with_capacity(n_customers); n_agents];
    let mut sums_expected = vec![0.0; n_agents];
    let mut sums_realised = vec![0.0; n_agents];
    for t in 0..n_customers {
        for i in 0..n_agents {
            let outcome = trace.outcome(t, i);
            sums_expected[i] += outcome.expected_reward;
            sums_realised[i] += outcome.realised_reward;
            expected[i].push(sums_expected[i]);
            realised[i].push(sums_realised[i]);
        }
    }
    CumulativeCurves {
        agent_names: trace.agent_names.clone(),
        expected,
        realised,
    }
}

/// Final standing of one agent.
#[derive(Debug, Clone, PartialEq)]
pub struct AgentSummary {
    pub name: String,
    pub final_expected: f64,
    pub final_realised: f64,
    pub acceptance_rate: f64,
    pub avg_accepted_premium: Option<f64>,
    /// 1-based rank by final cumulative expected reward.
    pub rank: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RankingTable {
    /// Sorted by rank (best expected first).
    pub rows: Vec<AgentSummary>,
}

pub fn summarize(trace: &EvaluationTrace) -> RankingTable {
    let n_agents = trace.n_agents();
    let n_customers = trace.n_customers();
    let mut rows: Vec<AgentSummary> = (0..n_agents)
        .map(|i| {
            let mut expected = 0.0;
            let mut realised = 0.0;
            let mut accepted = 0usize;
            let mut accepted_premium = 0.0;
            for t in 0..n_customers {
                let outcome = trace.outcome(t, i);
                expected += outcome.expected_reward;
                realised += outcome.realised_reward;
                if trace.us[t] <= outcome.p_true {
                    accepted += 1;
                    accepted_premium += outcome.premium;
                }
            }
            AgentSummary {
                name: trace.agent_names[i].clone(),
                final_expected: expected,
                final_realised: realised,
                acceptance_rate: if n_customers > 0 {
                    accepted as f64 / n_customers as f64
                } else {
                    0.0
                },
                avg_accepted_premium: if accepted > 0 {
                    Some(accepted_premium / accepted as f64)
                } else {
                    None
                },
                rank: 0,
            }
        })
        .collect();
    rows.sort_by(|a, b| b.final_expected.total_cmp(&a.final_expected));
    for (i, row) in rows.iter_mut().enumerate() {
        row.rank = i + 1;
    }
    RankingTable { rows }
}

const TRACE_CSV_HEADER: &str =
    "t,customer_id,u,agent,premium,z,p_true,expected_reward,realised_reward";
const CURVES_CSV_HEADER: &str = "t,agent,cum_expected,cum_realised";

/// Trace CSV: one row per (customer, agent), floats at full precision.
pub fn write_trace_csv<W: Write>(trace: &EvaluationTrace, mut w: W) -> Result<(), EvalError> {
    use crate::domain::fmt_f64;
    writeln!(w, "{TRACE_CSV_HEADER}")?;
    for t in 0..trace.n_customers() {
        for (i, name) in trace.agent_names.iter().enumerate() {
            let o = trace.outcome(t, i);
            writeln!(
                w,
                "{},{},{},{},{},{},{},{},{}",
                t,
                trace.customer_ids[t],
                fmt_f64(trace.us[t]),
                name,
                fmt_f64(o.premium),
                fmt_f64(o.z),
                fmt_f64(o.p_true),
                fmt_f64(o.expected_reward),
                fmt_f64(o.realised_reward),
            )?;
        }
    }
    Ok(())
}

/// Curves CSV: one row per (customer, agent) with both running sums.
pub fn write_curves_csv<W: Write>(curves: &CumulativeCurves, mut w: W) -> Result<(), EvalError> {
    use crate::domain::fmt_f64;
    writeln!(w, "{CURVES_CSV_HEADER}")?;
    let n = curves.expected.first().map_or(0, Vec::len);
    for t in 0..n {
        for (i, name) in curves.agent_names.iter().enumerate() {
            writeln!(
                w,
                "{},{},{},{}",
                t,
                name,
                fmt_f64(curves.expected[i][t]),
                fmt_f64(curves.realised[i][t]),
            )?;
        }
    }
    Ok(())
}

/// Reads a curves CSV back into memory (used by the standalone report step).
pub fn read_curves_csv<R: BufRead>(r: R) -> Result<CumulativeCurves, EvalError> {
    let mut lines = r.lines();
    let header = lines
        .next()
        .ok_or(EvalError::Csv {
            line: 1,
            reason: "empty file".to_string(),
        })?
        .map_err(EvalError::Io)?;
    if header.trim_end() != CURVES_CSV_HEADER {
        return Err(EvalError::Csv {
            line: 1,
            reason: format!("unexpected header: {header}"),
        });
    }
    let mut agent_names: Vec<String> = Vec::new();
    let mut expected: Vec<Vec<f64>> = Vec::new();
    let mut realised: Vec<Vec<f64>> = Vec::new();
    for (idx, line) in lines.enumerate() {
        let line_no = idx + 2;
        let line = line.map_err(EvalError::Io)?;
        if line.trim().is_empty() {
            continue;
        }
        let csv_err = |reason: String| EvalError::Csv {
            line: line_no,
            reason,
        };
        let fields: Vec<&str> = line.trim_end().split(',').collect();
        if fields.len() != 4 {
            return Err(csv_err(format!("expected 4 fields, got {}", fields.len())));
        }
        let agent = fields[1];
        let cum_expected: f64 = fields[2]
            .parse()
            .map_err(|e| csv_err(format!("bad float: {e}")))?;
        let cum_realised: f64 = fields[3]
            .parse()
            .map_err(|e| csv_err(format!("bad float: {e}")))?;
        let i = match agent_names.iter().position(|n| n == agent) {
            Some(i) => i,
            None => {
                agent_names.push(agent.to_string());
                expected.push(Vec::new());
                realised.push(Vec::new());
                agent_names.len() - 1
            }
        };
        expected[i].push(cum_expected);
        realised[i].push(cum_realised);
    }
    if agent_names.is_empty() {
        return Err(EvalError::Csv {
            line: 2,
            reason: "no curve rows".to_string(),
        });
    }
    Ok(CumulativeCurves {
        agent_names,
        expected,
        realised,
    })
}

/// Plain-text ranking table.
pub fn render_ranking_text(table: &RankingTable) -> String {
    let mut out = String::new();
    out.push_str(&format!(
        "{:<4} {:<22} {:>16} {:>16} {:>12} {:>18}\n",
        "rank", "agent", "cum_expected", "cum_realised", "accept_rate", "avg_accepted_prem"
    ));
    for row in &table.rows {
        let avg_premium = row
            .avg_accepted_premium
            .map_or_else(|| "-".to_string(), |v| format!("{v:.2}"));
        out.push_str(&format!(
            "{:<4} {:<22} {:>16.2} {:>16.2} {:>12.4} {:>18}\n",
            row.rank,
            row.name,
            row.final_expected,
            row.final_realised,
            row.acceptance_rate,
            avg_premium
        ));
    }
    out
}
