//! The discretized scaled-price axis.
//!
//! Raw prices are divided by the ad duration and log-transformed
//! ([`scale_price`]); the resulting axis is cut into equal-width, half-open
//! buckets. A model predicts one probability per bucket, and the winning
//! rate of a bid is the cumulative mass up to and including the bid's bucket.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

const INTEGRAL_TOLERANCE: f64 = 1e-9;
const MASS_TOLERANCE: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "GridParams", into = "GridParams")]
pub struct PriceGrid {
    lower: f64,
    upper: f64,
    width: f64,
    n_buckets: usize,
}

/// Serialized form of a grid; `n_buckets` is always derived.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct GridParams {
    pub lower: f64,
    pub upper: f64,
    pub width: f64,
}

impl Default for GridParams {
    fn default() -> Self {
        GridParams {
            lower: -3.0,
            upper: 4.0,
            width: 0.1,
        }
    }
}

impl TryFrom<GridParams> for PriceGrid {
    type Error = Error;

    fn try_from(p: GridParams) -> Result<Self> {
        make_grid(p.lower, p.upper, p.width)
    }
}

impl From<PriceGrid> for GridParams {
    fn from(g: PriceGrid) -> Self {
        GridParams {
            lower: g.lower,
            upper: g.upper,
            width: g.width,
        }
    }
}

impl Default for PriceGrid {
    fn default() -> Self {
        make_grid(-3.0, 4.0, 0.1).expect("default grid is valid")
    }
}

/// Builds a grid over `[lower, upper)` with buckets of `width`.
pub fn make_grid(lower: f64, upper: f64, width: f64) -> Result<PriceGrid> {
    if !(lower.is_finite() && upper.is_finite() && width.is_finite()) {
        return Err(Error::config("grid bounds must be finite"));
    }
    if width <= 0.0 {
        return Err(Error::config(format!("bucket width must be positive, got {width}")));
    }
    if upper <= lower {
        return Err(Error::config(format!("inverted price range [{lower}, {upper}]")));
    }
    let ratio = (upper - lower) / width;
    let n = ratio.round();
    if (ratio - n).abs() >= INTEGRAL_TOLERANCE {
        return Err(Error::config(format!(
            "range {} is not an integral number of {width}-wide buckets",
            upper - lower
        )));
    }
    let n_buckets = n as usize;
    if n_buckets < 2 {
        return Err(Error::config("a grid needs at least two buckets"));
    }
    Ok(PriceGrid {
        lower,
        upper,
        width,
        n_buckets,
    })
}

impl PriceGrid {
    pub fn lower(&self) -> f64 {
        self.lower
    }

    pub fn upper(&self) -> f64 {
        self.upper
    }

    pub fn width(&self) -> f64 {
        self.width
    }

    pub fn n_buckets(&self) -> usize {
        self.n_buckets
    }

    /// Bucket containing `scaled`; prices outside the range clamp to the
    /// boundary buckets.
    pub fn bucket_of(&self, scaled: f64) -> Result<usize> {
        if !scaled.is_finite() {
            return Err(Error::data(format!("non-finite price {scaled}")));
        }
        let raw = ((scaled - self.lower) / self.width).floor();
        if raw <= 0.0 {
            Ok(0)
        } else {
            Ok((raw as usize).min(self.n_buckets - 1))
        }
    }

    pub fn midpoint(&self, index: usize) -> Result<f64> {
        if index >= self.n_buckets {
            return Err(Error::logic(format!(
                "bucket {index} out of range for {} buckets",
                self.n_buckets
            )));
        }
        Ok(self.lower + (index as f64 + 0.5) * self.width)
    }

    /// `[lo, hi)` edges of a bucket.
    pub fn edges(&self, index: usize) -> (f64, f64) {
        let lo = self.lower + index as f64 * self.width;
        (lo, lo + self.width)
    }

    pub fn midpoints(&self) -> Vec<f64> {
        (0..self.n_buckets)
            .map(|i| self.lower + (i as f64 + 0.5) * self.width)
            .collect()
    }
}

/// Unit price on the log axis: `ln(raw_price / duration)`.
pub fn scale_price(raw_price: f64, duration: f64) -> Result<f64> {
    if !(raw_price > 0.0 && raw_price.is_finite()) {
        return Err(Error::data(format!("price must be positive, got {raw_price}")));
    }
    if !(duration > 0.0 && duration.is_finite()) {
        return Err(Error::data(format!("duration must be positive, got {duration}")));
    }
    Ok((raw_price / duration).ln())
}

/// Inverse of [`scale_price`].
pub fn unscale_price(scaled: f64, duration: f64) -> f64 {
    scaled.exp() * duration
}

/// A probability vector over the buckets of a grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct BucketDistribution {
    probs: Vec<f64>,
}

impl TryFrom<Vec<f64>> for BucketDistribution {
    type Error = Error;

    fn try_from(probs: Vec<f64>) -> Result<Self> {
        BucketDistribution::new(probs)
    }
}

impl From<BucketDistribution> for Vec<f64> {
    fn from(d: BucketDistribution) -> Self {
        d.probs
    }
}

impl BucketDistribution {
    /// Validates non-negativity and unit mass (to 1e-6).
    pub fn new(probs: Vec<f64>) -> Result<Self> {
        if probs.is_empty() {
            return Err(Error::data("empty distribution"));
        }
        if let Some((i, p)) = probs
            .iter()
            .enumerate()
            .find(|(_, p)| !(p.is_finite() && **p >= 0.0))
        {
            return Err(Error::data(format!("invalid probability {p} at bucket {i}")));
        }
        let total: f64 = probs.iter().sum();
        if (total - 1.0).abs() > MASS_TOLERANCE {
            return Err(Error::data(format!("distribution mass {total} is not 1")));
        }
        Ok(BucketDistribution { probs })
    }

    /// Rescales non-negative weights to unit mass.
    pub fn from_weights(weights: Vec<f64>) -> Result<Self> {
        let total: f64 = weights.iter().sum();
        if !(total > 0.0 && total.is_finite()) {
            return Err(Error::data(format!("cannot normalize weights with mass {total}")));
        }
        BucketDistribution::new(weights.into_iter().map(|w| w / total).collect())
    }

    pub fn uniform(n: usize) -> Self {
        BucketDistribution {
            probs: vec![1.0 / n as f64; n],
        }
    }

    pub fn one_hot(n: usize, index: usize) -> Self {
        let mut probs = vec![0.0; n];
        probs[index] = 1.0;
        BucketDistribution { probs }
    }

    /// Trusted constructor for softmax outputs that are normalized by
    /// construction.
    pub(crate) fn from_softmax(probs: Vec<f64>) -> Self {
        debug_assert!((probs.iter().sum::<f64>() - 1.0).abs() <= MASS_TOLERANCE);
        BucketDistribution { probs }
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    pub fn len(&self) -> usize {
        self.probs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.probs.is_empty()
    }

    pub fn total_mass(&self) -> f64 {
        self.probs.iter().sum()
    }

    /// Probability that a bid in bucket `bid_bucket` wins: the mass of
    /// buckets `0..=bid_bucket`.
    pub fn winning_rate(&self, bid_bucket: usize) -> Result<f64> {
        if bid_bucket >= self.probs.len() {
            return Err(Error::logic(format!(
                "bucket {bid_bucket} out of range for {} buckets",
                self.probs.len()
            )));
        }
        Ok(self.probs[..=bid_bucket].iter().sum())
    }

    /// Winning rate at every bucket.
    pub fn cdf(&self) -> Vec<f64> {
        self.probs
            .iter()
            .scan(0.0, |acc, p| {
                *acc += p;
                Some(*acc)
            })
            .collect()
    }

    /// Index of the most probable bucket; ties go to the lowest index.
    pub fn argmax(&self) -> usize {
        let mut best = 0;
        for (i, p) in self.probs.iter().enumerate() {
            if *p > self.probs[best] {
                best = i;
            }
        }
        best
    }

    /// Entropy in nats with `0 ln 0 = 0`.
    pub fn entropy(&self) -> f64 {
        -self
            .probs
            .iter()
            .filter(|p| **p > 0.0)
            .map(|p| p * p.ln())
            .sum::<f64>()
    }
}

/// Free-function form of [`PriceGrid::bucket_of`].
pub fn bucket_of(scaled: f64, grid: &PriceGrid) -> Result<usize> {
    grid.bucket_of(scaled)
}

/// Free-function form of [`PriceGrid::midpoint`].
pub fn midpoint(index: usize, grid: &PriceGrid) -> Result<f64> {
    grid.midpoint(index)
}

/// Free-function form of [`BucketDistribution::winning_rate`].
pub fn winning_rate(dist: &BucketDistribution, bid_bucket: usize) -> Result<f64> {
    dist.winning_rate(bid_bucket)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn grid() -> PriceGrid {
        make_grid(-3.0, 4.0, 0.1).unwrap()
    }

    #[test]
    fn default_grid_has_seventy_buckets() {
        assert_eq!(grid().n_buckets(), 70);
        assert_eq!(PriceGrid::default(), grid());
        assert_eq!(make_grid(0.0, 1.0, 0.5).unwrap().n_buckets(), 2);
    }

    #[test]
    fn rejects_bad_grids() {
        assert!(matches!(make_grid(0.0, 1.0, 0.3), Err(Error::Config(_))));
        assert!(matches!(make_grid(0.0, 1.0, 0.0), Err(Error::Config(_))));
        assert!(matches!(make_grid(0.0, 1.0, -0.1), Err(Error::Config(_))));
        assert!(matches!(make_grid(1.0, 0.0, 0.1), Err(Error::Config(_))));
        assert!(matches!(make_grid(0.0, 1.0, 1.0), Err(Error::Config(_))));
    }

    #[test]
    fn scales_prices() {
        assert!((scale_price(20.0, 2.0).unwrap() - 10f64.ln()).abs() < 1e-12);
        assert_eq!(scale_price(1.0, 1.0).unwrap(), 0.0);
        assert!((scale_price(std::f64::consts::E, 1.0).unwrap() - 1.0).abs() < 1e-12);
        assert!(matches!(scale_price(0.0, 1.0), Err(Error::Data(_))));
        assert!(matches!(scale_price(1.0, -2.0), Err(Error::Data(_))));
        let s = scale_price(37.5, 15.0).unwrap();
        assert!((unscale_price(s, 15.0) - 37.5).abs() < 1e-12);
    }

    #[test]
    fn buckets_and_clamping() {
        let g = grid();
        assert_eq!(g.bucket_of(0.55).unwrap(), 35);
        assert_eq!(g.bucket_of(-3.0).unwrap(), 0);
        assert_eq!(g.bucket_of(5.2).unwrap(), 69);
        assert_eq!(g.bucket_of(4.0).unwrap(), 69);
        assert_eq!(g.bucket_of(-10.0).unwrap(), 0);
        assert!(matches!(g.bucket_of(f64::NAN), Err(Error::Data(_))));
        assert!(matches!(g.bucket_of(f64::INFINITY), Err(Error::Data(_))));
    }

    #[test]
    fn midpoints() {
        let g = grid();
        assert!((g.midpoint(0).unwrap() + 2.95).abs() < 1e-12);
        assert!((g.midpoint(69).unwrap() - 3.95).abs() < 1e-12);
        assert!((g.midpoint(30).unwrap() - 0.05).abs() < 1e-12);
        assert!(matches!(g.midpoint(70), Err(Error::Logic(_))));
        for i in 0..g.n_buckets() {
            assert_eq!(g.bucket_of(g.midpoint(i).unwrap()).unwrap(), i);
        }
    }

    #[test]
    fn winning_rates() {
        let u = BucketDistribution::uniform(70);
        assert!((u.winning_rate(34).unwrap() - 0.5).abs() < 1e-12);
        let h = BucketDistribution::one_hot(70, 10);
        assert_eq!(h.winning_rate(9).unwrap(), 0.0);
        assert_eq!(h.winning_rate(10).unwrap(), 1.0);
        assert!((u.winning_rate(69).unwrap() - 1.0).abs() < 1e-9);
        assert!(matches!(u.winning_rate(70), Err(Error::Logic(_))));
    }

    #[test]
    fn validates_distributions() {
        assert!(BucketDistribution::new(vec![0.5, 0.6]).is_err());
        assert!(BucketDistribution::new(vec![1.5, -0.5]).is_err());
        assert!(BucketDistribution::new(vec![f64::NAN, 1.0]).is_err());
        assert!(BucketDistribution::new(vec![0.25, 0.75]).is_ok());
        let d = BucketDistribution::from_weights(vec![1.0, 3.0]).unwrap();
        assert_eq!(d.probs(), &[0.25, 0.75]);
    }

    #[test]
    fn entropy_and_argmax() {
        assert!((BucketDistribution::uniform(70).entropy() - 70f64.ln()).abs() < 1e-12);
        assert_eq!(BucketDistribution::one_hot(70, 3).entropy(), 0.0);
        let mut p = vec![0.0; 70];
        p[0] = 0.5;
        p[1] = 0.5;
        let d = BucketDistribution::new(p).unwrap();
        assert!((d.entropy() - 2f64.ln()).abs() < 1e-12);
        assert_eq!(d.argmax(), 0);
    }

    #[test]
    fn grid_serde_recomputes_bucket_count() {
        let json = serde_json::to_string(&grid()).unwrap();
        assert!(!json.contains("n_buckets"));
        let back: PriceGrid = serde_json::from_str(&json).unwrap();
        assert_eq!(back, grid());
        assert!(serde_json::from_str::<PriceGrid>(r#"{"lower":0,"upper":1,"width":0.3}"#).is_err());
    }
}
