//! Synthetic market generator: customer features, market quantile prices,
//! benchmark premium and burn cost, the train/test split, and the resampled
//! quote pool the conversion estimator and the simulator are built from.
//!
//! All randomness is keyed per customer (or per pool row), so generation is
//! order-independent and any draw can be reproduced in isolation.

use crate::conversion::{normalized_price, ConversionCurve};
use crate::domain::{CustomerRecord, Dataset, DomainError, SplitTag, FEATURE_COUNT};
use crate::rng::DrawStream;
use serde::{Deserialize, Serialize};
use std::io::{BufRead, Write};
use thiserror::Error;

/// Burn cost multiplier: `avg_top5 * N(0.8, 0.2)`, floored at 0.05.
pub const BURN_MULT_MEAN: f64 = 0.8;
pub const BURN_MULT_SD: f64 = 0.2;
pub const BURN_MULT_FLOOR: f64 = 0.05;

/// Benchmark premium multiplier: `avg_top5 * N(1, 0.1)`, floored at 0.05.
pub const BENCHMARK_MULT_MEAN: f64 = 1.0;
pub const BENCHMARK_MULT_SD: f64 = 0.1;

/// Top 6-10 ratio: `avg_top5 * |N(1, 0.3)|`, floored at 1.05 so the market gap
/// stays positive and demand keeps its direction.
pub const TOP6_10_RATIO_MEAN: f64 = 1.0;
pub const TOP6_10_RATIO_SD: f64 = 0.3;
pub const TOP6_10_RATIO_FLOOR: f64 = 1.05;

/// Historical quoted premium in the pool: `avg_top5 * N(1, 0.3)`, floored at 0.1.
pub const POOL_PREMIUM_MULT_MEAN: f64 = 1.0;
pub const POOL_PREMIUM_MULT_SD: f64 = 0.3;
pub const POOL_PREMIUM_MULT_FLOOR: f64 = 0.1;

/// Log-normal noise applied to the feature-driven top-5 price index.
pub const TOP5_NOISE_SIGMA: f64 = 0.05;
/// Hard range for the generated top-5 average price.
pub const TOP5_MIN: f64 = 100.0;
pub const TOP5_MAX: f64 = 5000.0;

#[derive(Debug, Error)]
pub enum DatagenError {
    #[error("invalid generator config: {0}")]
    InvalidConfig(String),

    #[error("pool references unknown customer id {0}")]
    UnknownCustomerId(u64),

    #[error("pool row {line}: {reason}")]
    PoolRow { line: usize, reason: String },

    #[error(transparent)]
    Domain(#[from] DomainError),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Configuration of the synthetic market.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenConfig {
    pub n_customers: usize,
    pub n_train: usize,
    pub n_test: usize,
    pub n_resamples: usize,
    pub seed: u64,
    /// Weights of the standardized features in the log-linear top-5 price index.
    pub feature_weights: [f64; FEATURE_COUNT],
    /// Scale anchor: top-5 average price for a customer at the feature means.
    pub base_premium: f64,
}

impl Default for GenConfig {
    fn default() -> Self {
        GenConfig {
            n_customers: 35_000,
            n_train: 28_000,
            n_test: 7_000,
            n_resamples: 5_000_000,
            seed: 20_250_807,
            feature_weights: [
                -0.12, 0.18, -0.08, 0.10, 0.05, -0.05, 0.04, -0.04, 0.03, -0.03, 0.06, -0.06, 0.05,
                -0.05, 0.04, 0.03,
            ],
            base_premium: 400.0,
        }
    }
}

impl GenConfig {
    pub fn validate(&self) -> Result<(), DatagenError> {
        if self.n_customers == 0 || self.n_train == 0 || self.n_test == 0 {
            return Err(DatagenError::InvalidConfig(
                "customer counts must be positive".to_string(),
            ));
        }
        if self.n_train + self.n_test != self.n_customers {
            return Err(DatagenError::InvalidConfig(format!(
                "n_train ({}) + n_test ({}) must equal n_customers ({})",
                self.n_train, self.n_test, self.n_customers
            )));
        }
        if self.n_resamples == 0 {
            return Err(DatagenError::InvalidConfig(
                "n_resamples must be positive".to_string(),
            ));
        }
        if !(self.base_premium.is_finite() && self.base_premium > 0.0) {
            return Err(DatagenError::InvalidConfig(
                "base_premium must be finite and positive".to_string(),
            ));
        }
        if self.feature_weights.iter().any(|w| !w.is_finite()) {
            return Err(DatagenError::InvalidConfig(
                "feature_weights must be finite".to_string(),
            ));
        }
        Ok(())
    }
}

/// One resampled historical quote: which training customer it came from, the
/// premium that was quoted, and the simulated decision.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ResampledQuote {
    /// Index into the training dataset's record vector.
    pub customer_index: usize,
    pub premium: f64,
    pub accepted: bool,
}

impl ResampledQuote {
    pub fn new(customer_index: usize, premium: f64, accepted: bool) -> Self {
        ResampledQuote {
            customer_index,
            premium,
            accepted,
        }
    }
}

/// Analytic mean and standard deviation of each feature's generating
/// distribution, used to standardize features inside the price index without
/// a data-dependent pass.
fn feature_moments() -> [(f64, f64); FEATURE_COUNT] {
    let mut m = [(0.0, 1.0); FEATURE_COUNT];
    // f1: age ~ Uniform[18, 80]
    m[0] = (49.0, 62.0 / 12f64.sqrt());
    // f2: vehicle value ~ LogNormal(ln 8000, 0.5)
    let lnorm_mean = 8000.0 * (0.125f64).exp();
    m[1] = (lnorm_mean, lnorm_mean * ((0.25f64).exp() - 1.0).sqrt());
    // f3: no-claims-discount years ~ Uniform{0..9}
    m[2] = (4.5, (99.0f64 / 12.0).sqrt());
    // f4: annual mileage ~ N(8000, 3000) floored at 1000 (moments of the parent)
    m[3] = (8000.0, 3000.0);
    // f5-f10: standard normal; f11-f16: Bernoulli(0.3)
    for slot in m.iter_mut().take(10).skip(4) {
        *slot = (0.0, 1.0);
    }
    for slot in m.iter_mut().take(16).skip(10) {
        *slot = (0.3, 0.21f64.sqrt());
    }
    m
}

fn draw_features(stream: &mut DrawStream) -> [f64; FEATURE_COUNT] {
    let mut f = [0.0; FEATURE_COUNT];
    f[0] = stream.uniform_in(18.0, 80.0);
    f[1] = stream.lognormal(8000f64.ln(), 0.5);
    f[2] = stream.index(10) as f64;
    f[3] = stream.normal(8000.0, 3000.0).max(1000.0);
    for slot in f.iter_mut().take(10).skip(4) {
        *slot = stream.normal(0.0, 1.0);
    }
    for slot in f.iter_mut().take(16).skip(10) {
        *slot = if stream.bernoulli(0.3) { 1.0 } else { 0.0 };
    }
    f
}

/// Derives the three augmented quantities from their raw multiplier draws:
/// burn cost, benchmark premium, and the top 6-10 average.
pub fn augment_from_draws(
    avg_top5: f64,
    burn_draw: f64,
    benchmark_draw: f64,
    ratio_draw: f64,
) -> (f64, f64, f64) {
    let burn_cost = avg_top5 * burn_draw.max(BURN_MULT_FLOOR);
    let benchmark_premium = avg_top5 * benchmark_draw.max(BURN_MULT_FLOOR);
    let avg_top6_10 = avg_top5 * ratio_draw.abs().max(TOP6_10_RATIO_FLOOR);
    (burn_cost, benchmark_premium, avg_top6_10)
}

/// Samples the augmentation multipliers for one customer and applies them.
pub fn augment_record(avg_top5: f64, stream: &mut DrawStream) -> (f64, f64, f64) {
    let burn_draw = stream.normal(BURN_MULT_MEAN, BURN_MULT_SD);
    let benchmark_draw = stream.normal(BENCHMARK_MULT_MEAN, BENCHMARK_MULT_SD);
    let ratio_draw = stream.normal(TOP6_10_RATIO_MEAN, TOP6_10_RATIO_SD);
    augment_from_draws(avg_top5, burn_draw, benchmark_draw, ratio_draw)
}

fn generate_one(
    config: &GenConfig,
    moments: &[(f64, f64); FEATURE_COUNT],
    id: u64,
) -> CustomerRecord {
    let features = draw_features(&mut DrawStream::new(config.seed, "gen-features", id));

    let mut index = 0.0;
    for ((f, (mean, sd)), w) in features.iter().zip(moments).zip(&config.feature_weights) {
        index += w * (f - mean) / sd;
    }
    let noise = DrawStream::new(config.seed, "gen-top5", id).lognormal(0.0, TOP5_NOISE_SIGMA);
    let avg_top5 = (config.base_premium * index.exp() * noise).clamp(TOP5_MIN, TOP5_MAX);

    let (burn_cost, benchmark_premium, avg_top6_10) = augment_record(
        avg_top5,
        &mut DrawStream::new(config.seed, "gen-augment", id),
    );

    CustomerRecord {
        id,
        features,
        avg_top5,
        avg_top6_10,
        benchmark_premium,
        burn_cost,
    }
}

/// Generates the full customer roster, ids `0..n_customers` in order.
pub fn generate_customers(config: &GenConfig) -> Result<Vec<CustomerRecord>, DatagenError> {
    config.validate()?;
    let moments = feature_moments();
    Ok((0..config.n_customers as u64)
        .map(|id| generate_one(config, &moments, id))
        .collect())
}

/// Generates and splits the roster: the first `n_train` customers form the
/// training set, the remainder the test set.
pub fn generate(config: &GenConfig) -> Result<(Dataset, Dataset), DatagenError> {
    let mut records = generate_customers(config)?;
    let test_records = records.split_off(config.n_train);
    let train = Dataset::new(records, SplitTag::Train)?;
    let test = Dataset::new(test_records, SplitTag::Test)?;
    Ok((train, test))
}

/// Word layout of the per-row pool stream (tag "pool", id = row index):
/// word 0 picks the customer, words 1-2 draw the premium multiplier,
/// word 3 is the acceptance uniform.
pub fn pool_row_stream(seed: u64, row: u64) -> DrawStream {
    DrawStream::new(seed, "pool", row)
}

/// The acceptance uniform of a pool row, reproducible in isolation.
pub fn pool_row_acceptance_u(seed: u64, row: u64) -> f64 {
    (pool_row_stream(seed, row).word_at(3) >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
}

/// Resamples the training data with replacement into the large quote pool:
/// each row draws a customer, quotes `avg_top5 * N(1, 0.3)` (floored), and
/// simulates the decision from the supplied conversion curve.
pub fn build_training_pool<C: ConversionCurve>(
    train: &Dataset,
    curve: &C,
    config: &GenConfig,
) -> Result<Vec<ResampledQuote>, DatagenError> {
    if train.is_empty() {
        return Err(DatagenError::InvalidConfig(
            "training dataset is empty".to_string(),
        ));
    }
    let mut pool = Vec::with_capacity(config.n_resamples);
    for row in 0..config.n_resamples as u64 {
        let mut stream = pool_row_stream(config.seed, row);
        let customer_index = stream.index(train.len());
        let record = &train.records[customer_index];
        let multiplier = stream
            .normal(POOL_PREMIUM_MULT_MEAN, POOL_PREMIUM_MULT_SD)
            .max(POOL_PREMIUM_MULT_FLOOR);
        let premium = record.avg_top5 * multiplier;
        let z = normalized_price(premium, record.avg_top5, record.avg_top6_10)
            .expect("generated records have a positive market gap");
        let u = stream.uniform();
        let accepted = u <= curve.probability(z);
        pool.push(ResampledQuote::new(customer_index, premium, accepted));
    }
    Ok(pool)
}

#[derive(Serialize, Deserialize)]
struct PoolRowJson {
    customer_id: u64,
    premium: f64,
    accepted: bool,
}

/// Writes the pool as JSON lines: `{"customer_id":..,"premium":..,"accepted":..}`.
pub fn write_pool_jsonl<W: Write>(
    pool: &[ResampledQuote],
    train: &Dataset,
    mut w: W,
) -> Result<(), DatagenError> {
    for q in pool {
        let record = &train.records[q.customer_index];
        let row = PoolRowJson {
            customer_id: record.id,
            premium: q.premium,
            accepted: q.accepted,
        };
        serde_json::to_writer(&mut w, &row).map_err(|e| DatagenError::PoolRow {
            line: 0,
            reason: e.to_string(),
        })?;
        w.write_all(b"\n")?;
    }
    Ok(())
}

/// Reads a JSON-lines pool back, resolving customer ids against the dataset.
pub fn read_pool_jsonl<R: BufRead>(
    r: R,
    train: &Dataset,
) -> Result<Vec<ResampledQuote>, DatagenError> {
    let index_by_id: std::collections::HashMap<u64, usize> = train
        .records
        .iter()
        .enumerate()
        .map(|(i, rec)| (rec.id, i))
        .collect();
    let mut pool = Vec::new();
    for (i, line) in r.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let row: PoolRowJson = serde_json::from_str(&line).map_err(|e| DatagenError::PoolRow {
            line: i + 1,
            reason: e.to_string(),
        })?;
        let customer_index = *index_by_id
            .get(&row.customer_id)
            .ok_or(DatagenError::UnknownCustomerId(row.customer_id))?;
        pool.push(ResampledQuote::new(
            customer_index,
            row.premium,
            row.accepted,
        ));
    }
    Ok(pool)
}
