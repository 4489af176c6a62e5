//! Demand-side models: the exact analytic conversion curve, the normalized-price
//! transform, and the binned, smoothed, monotone conversion estimator fitted from
//! resampled quote logs.

use crate::datagen::ResampledQuote;
use crate::domain::Dataset;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use thiserror::Error;

/// Bin width of the fitted estimator, in normalized-price units.
pub const BIN_WIDTH: f64 = 0.01;
/// Fitted-model support, in hundredths of a normalized-price unit.
const LO_CENTS: i64 = -600;
const HI_CENTS: i64 = 600;
const MODEL_VERSION: u32 = 1;

/// Smallest market gap `avg_top6_10 - avg_top5` accepted by the transform.
pub const MIN_MARKET_GAP: f64 = 1e-9;

#[derive(Debug, Error)]
pub enum ConversionError {
    #[error("degenerate market: avg_top6_10 - avg_top5 = {gap} is below {MIN_MARKET_GAP}")]
    DegenerateMarket { gap: f64 },

    #[error("cannot fit a conversion model from an empty pool")]
    EmptyPool,

    #[error("resampled quote references customer index {index} outside dataset of {len}")]
    BadCustomerIndex { index: usize, len: usize },

    #[error("unsupported conversion model version {found} (expected {MODEL_VERSION})")]
    VersionMismatch { found: u32 },

    #[error("conversion model file invalid: {0}")]
    InvalidModel(String),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

/// Normalized price: how competitive a quote is relative to the market,
/// `z = (premium - avg_top5) / (avg_top6_10 - avg_top5)`.
pub fn normalized_price(
    premium: f64,
    avg_top5: f64,
    avg_top6_10: f64,
) -> Result<f64, ConversionError> {
    let gap = avg_top6_10 - avg_top5;
    // NaN also lands here: the comparison is written to reject it.
    if gap.partial_cmp(&MIN_MARKET_GAP) != Some(std::cmp::Ordering::Greater) {
        return Err(ConversionError::DegenerateMarket { gap });
    }
    Ok((premium - avg_top5) / gap)
}

/// Anything that maps a normalized price to an acceptance probability.
pub trait ConversionCurve {
    fn probability(&self, z: f64) -> f64;
}

/// The exact analytic demand curve: 0.2 for very competitive quotes, a quadratic
/// fall-off on `[-8, 0)`, and zero once the quote is above the top-5 average.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct TrueConversionModel;

/// Evaluates the exact conversion probability at a normalized price.
pub fn true_conversion(z: f64) -> f64 {
    if z < -8.0 {
        0.2
    } else if z < 0.0 {
        let t = z / 8.0 + 1.0;
        -0.2 * t * t + 0.2
    } else {
        0.0
    }
}

impl ConversionCurve for TrueConversionModel {
    fn probability(&self, z: f64) -> f64 {
        true_conversion(z)
    }
}

/// Conversion estimator over 0.01-wide normalized-price bins on `[-6, 6]`,
/// monotone non-increasing by construction, with constant extrapolation
/// outside the support.
#[derive(Debug, Clone, PartialEq)]
pub struct FittedConversionModel {
    /// One probability per bin center `-6.00, -5.99, ..., 6.00`.
    values: Vec<f64>,
    left_value: f64,
    right_value: f64,
}

impl FittedConversionModel {
    pub fn bin_count(&self) -> usize {
        self.values.len()
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn left_value(&self) -> f64 {
        self.left_value
    }

    pub fn right_value(&self) -> f64 {
        self.right_value
    }

    pub fn bin_center(&self, bin: usize) -> f64 {
        (LO_CENTS + bin as i64) as f64 * BIN_WIDTH
    }

    /// A constant-probability model (degenerate but valid; used as a stub curve).
    pub fn constant(p: f64) -> Self {
        let n = (HI_CENTS - LO_CENTS + 1) as usize;
        FittedConversionModel {
            values: vec![p; n],
            left_value: p,
            right_value: p,
        }
    }

    /// Looks up the bin for `z` (rounded to two decimals, ties to even) and
    /// returns its probability; outside `[-6, 6]` the edge values apply.
    pub fn probability(&self, z: f64) -> f64 {
        debug_assert!(!z.is_nan());
        let cents = (z * 100.0).round_ties_even();
        if cents < LO_CENTS as f64 {
            self.left_value
        } else if cents > HI_CENTS as f64 {
            self.right_value
        } else {
            self.values[(cents as i64 - LO_CENTS) as usize]
        }
    }

    pub fn to_json_string(&self) -> Result<String, ConversionError> {
        let file = FittedModelFile {
            bin_width: BIN_WIDTH,
            lo: LO_CENTS as f64 * BIN_WIDTH,
            hi: HI_CENTS as f64 * BIN_WIDTH,
            values: self.values.clone(),
            left: self.left_value,
            right: self.right_value,
            version: MODEL_VERSION,
        };
        Ok(serde_json::to_string(&file)?)
    }

    pub fn from_json_str(s: &str) -> Result<Self, ConversionError> {
        let file: FittedModelFile = serde_json::from_str(s)?;
        if file.version != MODEL_VERSION {
            return Err(ConversionError::VersionMismatch {
                found: file.version,
            });
        }
        let expected = (HI_CENTS - LO_CENTS + 1) as usize;
        if file.values.len() != expected {
            return Err(ConversionError::InvalidModel(format!(
                "expected {expected} bin values, found {}",
                file.values.len()
            )));
        }
        if file.values.windows(2).any(|w| w[1] > w[0]) {
            return Err(ConversionError::InvalidModel(
                "bin values must be non-increasing".to_string(),
            ));
        }
        if file.left != file.values[0] || file.right != file.values[expected - 1] {
            return Err(ConversionError::InvalidModel(
                "edge values must equal the outermost bins".to_string(),
            ));
        }
        Ok(FittedConversionModel {
            values: file.values,
            left_value: file.left,
            right_value: file.right,
        })
    }
}

impl ConversionCurve for FittedConversionModel {
    fn probability(&self, z: f64) -> f64 {
        FittedConversionModel::probability(self, z)
    }
}

#[derive(Serialize, Deserialize)]
struct FittedModelFile {
    bin_width: f64,
    lo: f64,
    hi: f64,
    values: Vec<f64>,
    left: f64,
    right: f64,
    version: u32,
}

/// Bin key for a normalized price: hundredths, rounded ties-to-even.
pub fn z_to_cents(z: f64) -> i64 {
    (z * 100.0).round_ties_even().clamp(-9e15, 9e15) as i64
}

/// Fits the estimator from a resampled training pool, resolving each quote's
/// market context through the dataset it was drawn from.
pub fn fit_conversion(
    pool: &[ResampledQuote],
    train: &Dataset,
) -> Result<FittedConversionModel, ConversionError> {
    let mut observations = Vec::with_capacity(pool.len());
    for q in pool {
        let record =
            train
                .records
                .get(q.customer_index)
                .ok_or(ConversionError::BadCustomerIndex {
                    index: q.customer_index,
                    len: train.len(),
                })?;
        let z = normalized_price(q.premium, record.avg_top5, record.avg_top6_10)?;
        observations.push((z, q.accepted));
    }
    fit_from_observations(observations)
}

/// Fits the estimator from raw `(normalized price, accepted)` observations:
/// empirical rate per 0.01 bin, a centered 100-bin moving average over populated
/// bins, then a left-to-right running-minimum pass so the estimate never
/// increases with price.
pub fn fit_from_observations(
    observations: impl IntoIterator<Item = (f64, bool)>,
) -> Result<FittedConversionModel, ConversionError> {
    let mut bins: BTreeMap<i64, (u64, u64)> = BTreeMap::new();
    for (z, accepted) in observations {
        let entry = bins.entry(z_to_cents(z)).or_insert((0, 0));
        entry.0 += 1;
        entry.1 += u64::from(accepted);
    }
    if bins.is_empty() {
        return Err(ConversionError::EmptyPool);
    }

    let cents: Vec<i64> = bins.keys().copied().collect();
    let rates: Vec<f64> = bins
        .values()
        .map(|&(total, accepted)| accepted as f64 / total as f64)
        .collect();
    // Prefix sums of the populated-bin rates make each window average O(1).
    let mut prefix = vec![0.0; rates.len() + 1];
    for (i, r) in rates.iter().enumerate() {
        prefix[i + 1] = prefix[i] + r;
    }

    let leftmost = cents[0];
    let rightmost = *cents.last().unwrap();
    let pass_end = rightmost.max(HI_CENTS);

    // Moving average at bin R covers populated bins in [R-49, R+50]; empty bins
    // are excluded from the mean. Windows with no populated bin inherit the value
    // to their left in the monotone pass below.
    let mut lo_ptr = 0usize;
    let mut hi_ptr = 0usize;
    let smoothed_at = |r: i64, lo_ptr: &mut usize, hi_ptr: &mut usize| -> Option<f64> {
        while *hi_ptr < cents.len() && cents[*hi_ptr] <= r + 50 {
            *hi_ptr += 1;
        }
        while *lo_ptr < cents.len() && cents[*lo_ptr] < r - 49 {
            *lo_ptr += 1;
        }
        if *lo_ptr >= *hi_ptr {
            None
        } else {
            Some((prefix[*hi_ptr] - prefix[*lo_ptr]) / (*hi_ptr - *lo_ptr) as f64)
        }
    };

    // Running-minimum pass, seeded at the leftmost populated bin.
    let mut by_cents: Vec<f64> = Vec::with_capacity((pass_end - leftmost + 1) as usize);
    let first = smoothed_at(leftmost, &mut lo_ptr, &mut hi_ptr)
        .expect("window at a populated bin contains that bin");
    by_cents.push(first);
    let mut prev = first;
    for r in (leftmost + 1)..=pass_end {
        let value = match smoothed_at(r, &mut lo_ptr, &mut hi_ptr) {
            Some(tilde) => prev.min(tilde),
            None => prev,
        };
        by_cents.push(value);
        prev = value;
    }

    // Restrict to [-6, 6]; bins left of all data take the first computed value.
    let values: Vec<f64> = (LO_CENTS..=HI_CENTS)
        .map(|c| {
            if c < leftmost {
                first
            } else {
                by_cents[(c - leftmost) as usize]
            }
        })
        .collect();
    let left_value = values[0];
    let right_value = *values.last().unwrap();
    Ok(FittedConversionModel {
        values,
        left_value,
        right_value,
    })
}

/// Running-minimum pass on a dense series: `out[i] = min(out[i-1], in[i])`.
/// Applying it twice gives the same result as applying it once.
pub fn monotone_min_pass(series: &[f64]) -> Vec<f64> {
    let mut out = Vec::with_capacity(series.len());
    let mut prev = f64::INFINITY;
    for &v in series {
        prev = prev.min(v);
        out.push(prev);
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn normalized_price_examples() {
        assert_eq!(normalized_price(100.0, 110.0, 120.0).unwrap(), -1.0);
        assert_eq!(normalized_price(110.0, 110.0, 120.0).unwrap(), 0.0);
        assert_eq!(normalized_price(130.0, 110.0, 120.0).unwrap(), 2.0);
    }

    #[test]
    fn normalized_price_degenerate_market() {
        assert!(matches!(
            normalized_price(100.0, 110.0, 110.0),
            Err(ConversionError::DegenerateMarket { .. })
        ));
        assert!(normalized_price(100.0, 110.0, 109.0).is_err());
    }

    #[test]
    fn true_conversion_pinned_points() {
        assert_eq!(true_conversion(-10.0), 0.2);
        assert_eq!(true_conversion(0.0), 0.0);
        assert_eq!(true_conversion(5.0), 0.0);
        assert!((true_conversion(-4.0) - 0.15).abs() < 1e-15);
        // Continuous at the -8 boundary.
        assert!((true_conversion(-8.0) - 0.2).abs() < 1e-15);
        assert!((true_conversion(-8.0 - 1e-12) - 0.2).abs() < 1e-12);
    }

    #[test]
    fn true_conversion_monotone_and_bounded() {
        let mut prev = f64::INFINITY;
        let mut z = -12.0;
        while z <= 4.0 {
            let p = true_conversion(z);
            assert!((0.0..=0.2).contains(&p));
            assert!(p <= prev + 1e-15);
            prev = p;
            z += 0.001;
        }
    }

    /// Synthetic observations with the same acceptance rate in every bin.
    fn constant_rate_observations(rate_num: usize, rate_den: usize) -> Vec<(f64, bool)> {
        let mut obs = Vec::new();
        for cent in -700..700 {
            let z = cent as f64 / 100.0;
            for k in 0..rate_den {
                obs.push((z, k < rate_num));
            }
        }
        obs
    }

    #[test]
    fn constant_rate_is_fixed_point() {
        let model = fit_from_observations(constant_rate_observations(1, 5)).unwrap();
        for &v in model.values() {
            assert!((v - 0.2).abs() < 1e-12);
        }
        assert!((model.left_value() - 0.2).abs() < 1e-12);
        assert!((model.right_value() - 0.2).abs() < 1e-12);
    }

    #[test]
    fn fitted_is_non_increasing() {
        // A deliberately non-monotone empirical profile still fits monotone.
        let mut obs = Vec::new();
        for cent in -650..650 {
            let z = cent as f64 / 100.0;
            let bumpy = 0.1 + 0.05 * ((cent as f64) / 7.0).sin();
            let n = 50;
            let k = (bumpy * n as f64).round() as usize;
            for i in 0..n {
                obs.push((z, i < k));
            }
        }
        let model = fit_from_observations(obs).unwrap();
        for pair in model.values().windows(2) {
            assert!(pair[1] <= pair[0]);
        }
    }

    #[test]
    fn empty_pool_is_an_error() {
        assert!(matches!(
            fit_from_observations(Vec::new()),
            Err(ConversionError::EmptyPool)
        ));
    }

    #[test]
    fn lookup_rounds_to_two_decimals() {
        let mut values: Vec<f64> = Vec::new();
        for c in -600..=600 {
            values.push(1.0 - (c + 600) as f64 * 1e-4);
        }
        let model = FittedConversionModel {
            left_value: values[0],
            right_value: *values.last().unwrap(),
            values,
        };
        // -2.004 rounds to the -2.00 bin.
        let expected = model.values()[(-200 + 600) as usize];
        assert_eq!(model.probability(-2.004), expected);
        // Ties round to even: -2.005 -> -200.5 -> -200 (even), -2.015 -> -202.
        assert_eq!(model.probability(-2.005), expected);
        let expected_202 = model.values()[(-202 + 600) as usize];
        assert_eq!(model.probability(-2.015), expected_202);
    }

    #[test]
    fn lookup_extrapolates_constant() {
        let model = fit_from_observations(constant_rate_observations(1, 10)).unwrap();
        assert_eq!(model.probability(-7.3), model.left_value());
        assert_eq!(model.probability(8.1), model.right_value());
    }

    #[test]
    fn json_round_trip_and_version_gate() {
        let model = fit_from_observations(constant_rate_observations(1, 4)).unwrap();
        let json = model.to_json_string().unwrap();
        assert!(json.contains("\"version\":1"));
        let back = FittedConversionModel::from_json_str(&json).unwrap();
        assert_eq!(model, back);

        let bad = json.replace("\"version\":1", "\"version\":9");
        assert!(matches!(
            FittedConversionModel::from_json_str(&bad),
            Err(ConversionError::VersionMismatch { found: 9 })
        ));
    }

    #[test]
    fn adjacent_bins_never_increase_after_fit() {
        // Spot-check the pinned pair from the contract: bin -3.00 >= bin -2.99.
        let model = fit_from_observations(constant_rate_observations(1, 3)).unwrap();
        let at = |cents: i64| model.values()[(cents + 600) as usize];
        assert!(at(-300) >= at(-299));
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]

        #[test]
        fn monotone_min_pass_is_idempotent(series in proptest::collection::vec(0.0f64..1.0, 1..200)) {
            let once = monotone_min_pass(&series);
            let twice = monotone_min_pass(&once);
            prop_assert_eq!(once, twice);
        }

        #[test]
        fn fit_output_is_monotone_for_any_pool(
            raw in proptest::collection::vec((-2000i32..2000, any::<bool>()), 1..500)
        ) {
            let obs: Vec<(f64, bool)> = raw
                .into_iter()
                .map(|(c, a)| (c as f64 / 100.0, a))
                .collect();
            let model = fit_from_observations(obs).unwrap();
            for pair in model.values().windows(2) {
                prop_assert!(pair[1] <= pair[0]);
            }
            prop_assert_eq!(model.left_value(), model.values()[0]);
            prop_assert_eq!(model.right_value(), *model.values().last().unwrap());
        }
    }
}
