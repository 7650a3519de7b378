//! Evaluation metrics, naive and Gaussian-linear baselines, and the
//! hyperparameter sweep harness.

use std::collections::BTreeMap;
use std::io::Write;
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::admnet::NetConfig;
use crate::error::{Error, Result};
use crate::features::{Dataset, EncodedSample, FeatureSchema};
use crate::linalg::softmax;
use crate::nllloss::PROB_FLOOR;
use crate::pricegrid::{BucketDistribution, PriceGrid};
use crate::synthgen::{context_value, Oracle};
use crate::trainer::{self, LossKind, ParamSet, TrainConfig, TrainReport, TrainableModel};

/// A probabilistic bidder: predicts a distribution over price buckets.
pub trait Landscape {
    fn grid(&self) -> &PriceGrid;
    fn distribution(&self, sample: &EncodedSample) -> Result<BucketDistribution>;
}

/// A point bidder: produces a scaled bid price directly.
pub trait PointBidder {
    fn bid(&mut self, sample: &EncodedSample) -> Result<f64>;
}

/// Midpoint of the most probable bucket (lowest index on ties).
pub fn point_prediction(dist: &BucketDistribution, grid: &PriceGrid) -> Result<f64> {
    if dist.len() != grid.n_buckets() {
        return Err(Error::logic("distribution length does not match grid"));
    }
    grid.midpoint(dist.argmax())
}

fn check_lengths(a: usize, b: usize, what: &str) -> Result<()> {
    if a != b {
        return Err(Error::logic(format!("{what}: length mismatch ({a} vs {b})")));
    }
    if a == 0 {
        return Err(Error::logic(format!("{what}: empty input")));
    }
    Ok(())
}

pub fn mae(predictions: &[f64], truths: &[f64]) -> Result<f64> {
    check_lengths(predictions.len(), truths.len(), "mae")?;
    Ok(predictions.iter().zip(truths).map(|(p, t)| (p - t).abs()).sum::<f64>() / predictions.len() as f64)
}

/// Average negative log probability of the true buckets.
pub fn anlp_of(dists: &[BucketDistribution], truths: &[f64], grid: &PriceGrid) -> Result<f64> {
    check_lengths(dists.len(), truths.len(), "anlp")?;
    let mut total = 0.0;
    for (d, &z) in dists.iter().zip(truths) {
        let p = d.probs()[grid.bucket_of(z)?];
        total -= p.max(PROB_FLOOR).ln();
    }
    Ok(total / dists.len() as f64)
}

pub fn anlp<L: Landscape + ?Sized>(model: &L, rows: &[(&EncodedSample, f64)]) -> Result<f64> {
    let dists = rows
        .iter()
        .map(|(s, _)| model.distribution(s))
        .collect::<Result<Vec<_>>>()?;
    let truths: Vec<f64> = rows.iter().map(|(_, z)| *z).collect();
    anlp_of(&dists, &truths, model.grid())
}

/// Concordance between scores and binary labels via average-rank
/// Mann-Whitney statistics: P(score_won > score_lost) + ½·P(tie).
pub fn c_index_scores(scores: &[f64], won: &[bool]) -> Result<f64> {
    check_lengths(scores.len(), won.len(), "c_index")?;
    if scores.iter().any(|s| s.is_nan()) {
        return Err(Error::numeric("c_index", "NaN score"));
    }
    let n_won = won.iter().filter(|w| **w).count();
    let n_lost = won.len() - n_won;
    if n_won == 0 || n_lost == 0 {
        return Err(Error::logic("c_index needs both won and lost rows"));
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[a].total_cmp(&scores[b]));
    let mut rank_sum_won = 0.0;
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && scores[order[j + 1]] == scores[order[i]] {
            j += 1;
        }
        // ranks are 1-based; the tied block i..=j shares the average rank
        let avg_rank = (i + j) as f64 / 2.0 + 1.0;
        for &k in &order[i..=j] {
            if won[k] {
                rank_sum_won += avg_rank;
            }
        }
        i = j + 1;
    }
    let (nw, nl) = (n_won as f64, n_lost as f64);
    Ok((rank_sum_won - nw * (nw + 1.0) / 2.0) / (nw * nl))
}

/// Which price a row's winning-rate score is read at.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum CIndexReference {
    #[default]
    Bid,
    WinningPrice,
}

/// C-index of a landscape over `(sample, reference bucket, won)` rows.
pub fn c_index<L: Landscape + ?Sized>(model: &L, rows: &[(&EncodedSample, usize, bool)]) -> Result<f64> {
    let mut scores = Vec::with_capacity(rows.len());
    for (s, bucket, _) in rows {
        scores.push(model.distribution(s)?.winning_rate(*bucket)?);
    }
    let won: Vec<bool> = rows.iter().map(|r| r.2).collect();
    c_index_scores(&scores, &won)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ReplayOutcome {
    pub wins: u64,
    /// Mean true price over won rows; 0 with no wins.
    pub value: f64,
}

/// Replays bids against true prices; a bid equal to the price wins.
pub fn replay(bids: &[f64], truths: &[f64]) -> Result<ReplayOutcome> {
    check_lengths(bids.len(), truths.len(), "replay")?;
    let mut wins = 0u64;
    let mut total = 0.0;
    for (b, z) in bids.iter().zip(truths) {
        if b >= z {
            wins += 1;
            total += z;
        }
    }
    Ok(ReplayOutcome {
        wins,
        value: if wins > 0 { total / wins as f64 } else { 0.0 },
    })
}

pub fn tv_divergence(pred: &BucketDistribution, truth: &BucketDistribution) -> Result<f64> {
    if pred.len() != truth.len() {
        return Err(Error::logic("tv_divergence: length mismatch"));
    }
    Ok(0.5 * pred.probs().iter().zip(truth.probs()).map(|(p, q)| (p - q).abs()).sum::<f64>())
}

// ---------------------------------------------------------------------------
// Naive baselines

/// Bids uniformly over the grid's price range.
#[derive(Debug, Clone)]
pub struct RandomBidder {
    grid: PriceGrid,
    rng: ChaCha8Rng,
}

pub fn baseline_rdm(grid: PriceGrid, seed: u64) -> RandomBidder {
    RandomBidder {
        grid,
        rng: ChaCha8Rng::seed_from_u64(seed),
    }
}

impl PointBidder for RandomBidder {
    fn bid(&mut self, _: &EncodedSample) -> Result<f64> {
        Ok(self.rng.random_range(self.grid.lower()..self.grid.upper()))
    }
}

/// Always bids the mean observed winning price.
#[derive(Debug, Clone, Copy)]
pub struct AverageBidder {
    pub price: f64,
}

fn observed_wins(train: &Dataset) -> Result<Vec<f64>> {
    let wins: Vec<f64> = train
        .observations
        .iter()
        .filter_map(|o| o.observed_winning_price())
        .collect();
    if wins.is_empty() {
        return Err(Error::data("baseline needs at least one won observation"));
    }
    Ok(wins)
}

pub fn baseline_avg(train: &Dataset) -> Result<AverageBidder> {
    let wins = observed_wins(train)?;
    Ok(AverageBidder {
        price: wins.iter().sum::<f64>() / wins.len() as f64,
    })
}

impl PointBidder for AverageBidder {
    fn bid(&mut self, _: &EncodedSample) -> Result<f64> {
        Ok(self.price)
    }
}

/// Empirical histogram of observed winning prices; bids by sampling it and
/// doubles as a context-free landscape.
#[derive(Debug, Clone)]
pub struct FrequencyBidder {
    grid: PriceGrid,
    histogram: BucketDistribution,
    cdf: Vec<f64>,
    rng: ChaCha8Rng,
}

pub fn baseline_frq(train: &Dataset, seed: u64) -> Result<FrequencyBidder> {
    let grid = train.grid;
    let mut counts = vec![0.0; grid.n_buckets()];
    for z in observed_wins(train)? {
        counts[grid.bucket_of(z)?] += 1.0;
    }
    let histogram = BucketDistribution::from_weights(counts)?;
    Ok(FrequencyBidder {
        grid,
        cdf: histogram.cdf(),
        histogram,
        rng: ChaCha8Rng::seed_from_u64(seed),
    })
}

impl FrequencyBidder {
    pub fn histogram(&self) -> &BucketDistribution {
        &self.histogram
    }
}

impl PointBidder for FrequencyBidder {
    fn bid(&mut self, _: &EncodedSample) -> Result<f64> {
        let u: f64 = self.rng.random();
        let i = self.cdf.partition_point(|c| *c <= u).min(self.cdf.len() - 1);
        // skip empty buckets that only appear through rounding at u ≈ 1
        let i = (0..=i).rev().find(|&k| self.histogram.probs()[k] > 0.0).unwrap_or(i);
        self.grid.midpoint(i)
    }
}

impl Landscape for FrequencyBidder {
    fn grid(&self) -> &PriceGrid {
        &self.grid
    }

    fn distribution(&self, _: &EncodedSample) -> Result<BucketDistribution> {
        Ok(self.histogram.clone())
    }
}

// ---------------------------------------------------------------------------
// Gaussian-linear baseline

/// ln Q(x) = ln P(N(0,1) > x), accurate deep into the upper tail.
fn ln_upper_tail(x: f64) -> f64 {
    if x < 30.0 {
        (0.5 * libm::erfc(x / std::f64::consts::SQRT_2)).ln()
    } else {
        // asymptotic series of the Mills ratio
        let x2 = x * x;
        -0.5 * x2 - (x * (2.0 * std::f64::consts::PI).sqrt()).ln()
            + (1.0 - 1.0 / x2 + 3.0 / (x2 * x2) - 15.0 / (x2 * x2 * x2)).ln()
    }
}

fn ln_std_normal_pdf(x: f64) -> f64 {
    -0.5 * x * x - 0.5 * (2.0 * std::f64::consts::PI).ln()
}

/// ln(Φ(b) − Φ(a)) for a < b, stable in both tails.
fn ln_normal_mass(a: f64, b: f64) -> f64 {
    if a >= 0.0 {
        let (la, lb) = (ln_upper_tail(a), ln_upper_tail(b));
        la + (-(lb - la).exp()).ln_1p()
    } else if b <= 0.0 {
        ln_normal_mass(-b, -a)
    } else {
        let cdf = |x: f64| 0.5 * libm::erfc(-x / std::f64::consts::SQRT_2);
        (cdf(b) - cdf(a)).ln()
    }
}

/// First-order linear weights: one row of per-value weights per
/// categorical field, one weight per numeric field, and a bias.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinearWeights {
    pub categorical: Vec<Vec<f64>>,
    pub numeric: Vec<f64>,
    pub bias: Vec<f64>,
}

impl ParamSet for LinearWeights {
    fn slices(&self) -> Vec<&[f64]> {
        let mut v: Vec<&[f64]> = self.categorical.iter().map(Vec::as_slice).collect();
        v.push(&self.numeric);
        v.push(&self.bias);
        v
    }

    fn slices_mut(&mut self) -> Vec<&mut [f64]> {
        let mut v: Vec<&mut [f64]> = self.categorical.iter_mut().map(Vec::as_mut_slice).collect();
        v.push(&mut self.numeric);
        v.push(&mut self.bias);
        v
    }
}

/// Normal(μ(x), σ) landscape with a linear mean, integrated per bucket and
/// renormalized over the grid.
#[derive(Debug, Clone, PartialEq)]
pub struct GaussianLinear {
    pub schema: Arc<FeatureSchema>,
    pub grid: PriceGrid,
    pub sigma: f64,
    pub weights: LinearWeights,
}

#[derive(Debug, Clone)]
pub struct GaussianCache {
    sample: EncodedSample,
    /// d logit_i / dμ per bucket.
    dlogit_dmu: Vec<f64>,
}

impl GaussianLinear {
    pub fn new(schema: Arc<FeatureSchema>, grid: PriceGrid, sigma: f64, initial_mean: f64) -> Result<Self> {
        if !(sigma > 0.0 && sigma.is_finite()) {
            return Err(Error::config("gaussian sigma must be positive"));
        }
        let weights = LinearWeights {
            categorical: schema.categorical.iter().map(|f| vec![0.0; f.vocab_size()]).collect(),
            numeric: vec![0.0; schema.numeric.len()],
            bias: vec![initial_mean],
        };
        Ok(GaussianLinear {
            schema,
            grid,
            sigma,
            weights,
        })
    }

    pub fn mean(&self, sample: &EncodedSample) -> Result<f64> {
        let w = &self.weights;
        if sample.cat_indices.len() != w.categorical.len() || sample.num_values.len() != w.numeric.len() {
            return Err(Error::logic("sample does not match the baseline schema"));
        }
        let mut mu = w.bias[0];
        for (row, &i) in w.categorical.iter().zip(&sample.cat_indices) {
            mu += row
                .get(i)
                .ok_or_else(|| Error::logic("categorical index out of range"))?;
        }
        mu += w.numeric.iter().zip(&sample.num_values).map(|(a, b)| a * b).sum::<f64>();
        Ok(mu)
    }

    /// Log bucket masses and their derivatives with respect to the mean.
    pub fn log_masses(&self, mu: f64) -> (Vec<f64>, Vec<f64>) {
        let n = self.grid.n_buckets();
        let mut logits = Vec::with_capacity(n);
        let mut d = Vec::with_capacity(n);
        for i in 0..n {
            let (lo, hi) = self.grid.edges(i);
            let (a, b) = ((lo - mu) / self.sigma, (hi - mu) / self.sigma);
            let lm = ln_normal_mass(a, b);
            logits.push(lm);
            d.push(((ln_std_normal_pdf(a) - lm).exp() - (ln_std_normal_pdf(b) - lm).exp()) / self.sigma);
        }
        (logits, d)
    }
}

impl Landscape for GaussianLinear {
    fn grid(&self) -> &PriceGrid {
        &self.grid
    }

    fn distribution(&self, sample: &EncodedSample) -> Result<BucketDistribution> {
        self.forward_cached(sample).map(|(p, _)| p)
    }
}

impl TrainableModel for GaussianLinear {
    type Params = LinearWeights;
    type Cache = GaussianCache;

    fn params(&self) -> &LinearWeights {
        &self.weights
    }

    fn params_mut(&mut self) -> &mut LinearWeights {
        &mut self.weights
    }

    fn zero_grads(&self) -> LinearWeights {
        LinearWeights {
            categorical: self.weights.categorical.iter().map(|r| vec![0.0; r.len()]).collect(),
            numeric: vec![0.0; self.weights.numeric.len()],
            bias: vec![0.0],
        }
    }

    fn forward_cached(&self, sample: &EncodedSample) -> Result<(BucketDistribution, GaussianCache)> {
        let mu = self.mean(sample)?;
        if !mu.is_finite() {
            return Err(Error::numeric("gaussian mean", "non-finite value"));
        }
        let (logits, dlogit_dmu) = self.log_masses(mu);
        if logits.iter().all(|l| *l == f64::NEG_INFINITY) {
            return Err(Error::numeric("gaussian masses", "all buckets underflowed"));
        }
        let probs = BucketDistribution::from_softmax(softmax(&logits));
        Ok((
            probs,
            GaussianCache {
                sample: sample.clone(),
                dlogit_dmu,
            },
        ))
    }

    fn accumulate_grads(
        &self,
        cache: &GaussianCache,
        dl_dlogits: &[f64],
        scale: f64,
        grads: &mut LinearWeights,
    ) -> Result<()> {
        let dmu = scale
            * dl_dlogits
                .iter()
                .zip(&cache.dlogit_dmu)
                .filter(|(g, _)| **g != 0.0)
                .map(|(g, d)| g * d)
                .sum::<f64>();
        if !dmu.is_finite() {
            return Err(Error::numeric("gaussian backward", "non-finite gradient"));
        }
        grads.bias[0] += dmu;
        for (row, &i) in grads.categorical.iter_mut().zip(&cache.sample.cat_indices) {
            row[i] += dmu;
        }
        for (g, x) in grads.numeric.iter_mut().zip(&cache.sample.num_values) {
            *g += dmu * x;
        }
        Ok(())
    }
}

/// Fits the Gaussian-linear baseline with the legacy censored likelihood.
pub fn baseline_gaussian_linear(
    train: &Dataset,
    val: &Dataset,
    sigma: f64,
    cfg: &TrainConfig,
) -> Result<(GaussianLinear, TrainReport)> {
    if train.is_empty() {
        return Err(Error::config("empty training set"));
    }
    let start = observed_wins(train)?;
    let start = start.iter().sum::<f64>() / start.len() as f64;
    let model = GaussianLinear::new(Arc::clone(&train.schema), train.grid, sigma, start)?;
    let cfg = TrainConfig {
        loss_kind: LossKind::Legacy,
        ..*cfg
    };
    trainer::train_model(model, train, val, &cfg)
}

// ---------------------------------------------------------------------------
// Aggregate evaluation

/// Per-context oracle distributions keyed by the `context` field's
/// vocabulary index.
#[derive(Debug, Clone)]
pub struct ContextOracle {
    grid: PriceGrid,
    field: usize,
    truths: BTreeMap<usize, (usize, BucketDistribution)>,
}

impl ContextOracle {
    pub fn new(schema: &FeatureSchema, oracle: &Oracle) -> Result<Self> {
        let (field, cat) = schema
            .categorical_field("context")
            .ok_or_else(|| Error::config("oracle evaluation needs a categorical `context` field"))?;
        let mut truths = BTreeMap::new();
        for c in &oracle.contexts {
            let idx = cat.index_of(Some(&context_value(c.id)));
            if idx < cat.cardinality() {
                truths.insert(idx, (c.id, c.probs.clone()));
            }
        }
        if truths.is_empty() {
            return Err(Error::data("no oracle context appears in the schema vocabulary"));
        }
        Ok(ContextOracle {
            grid: oracle.grid,
            field,
            truths,
        })
    }

    /// Oracle context id and distribution for a sample, if known.
    pub fn lookup(&self, sample: &EncodedSample) -> Option<(usize, &BucketDistribution)> {
        let idx = *sample.cat_indices.get(self.field)?;
        self.truths.get(&idx).map(|(id, d)| (*id, d))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EvalOptions {
    pub c_index_reference: CIndexReference,
    /// Also report prices per unit duration in currency.
    pub raw_currency: bool,
}

impl Default for EvalOptions {
    fn default() -> Self {
        EvalOptions {
            c_index_reference: CIndexReference::Bid,
            raw_currency: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalResult {
    pub bidder: String,
    pub rows: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub mae: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub anlp: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub c_index: Option<f64>,
    pub wins: u64,
    pub value: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub tv_divergence: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub mean_prediction: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub mae_raw: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub value_raw: Option<f64>,
}

struct EvalRows<'a> {
    samples: Vec<&'a EncodedSample>,
    truths: Vec<f64>,
}

fn eval_rows(test: &Dataset) -> Result<EvalRows<'_>> {
    let mut samples = Vec::new();
    let mut truths = Vec::new();
    for o in &test.observations {
        let z = o
            .true_winning_price()
            .ok_or_else(|| Error::data("evaluation rows need known winning prices"))?;
        samples.push(&o.sample);
        truths.push(z);
    }
    if samples.is_empty() {
        return Err(Error::logic("empty evaluation set"));
    }
    Ok(EvalRows { samples, truths })
}

fn point_metrics(name: &str, bids: &[f64], truths: &[f64], opts: &EvalOptions) -> Result<EvalResult> {
    let r = replay(bids, truths)?;
    let (mae_raw, value_raw) = if opts.raw_currency {
        let raw_err = bids.iter().zip(truths).map(|(b, z)| (b.exp() - z.exp()).abs()).sum::<f64>();
        let won: Vec<f64> = bids.iter().zip(truths).filter(|(b, z)| b >= z).map(|(_, z)| z.exp()).collect();
        let value = if won.is_empty() { 0.0 } else { won.iter().sum::<f64>() / won.len() as f64 };
        (Some(raw_err / bids.len() as f64), Some(value))
    } else {
        (None, None)
    };
    Ok(EvalResult {
        bidder: name.to_string(),
        rows: bids.len(),
        mae: Some(mae(bids, truths)?),
        anlp: None,
        c_index: None,
        wins: r.wins,
        value: r.value,
        tv_divergence: None,
        mean_prediction: Some(bids.iter().sum::<f64>() / bids.len() as f64),
        mae_raw,
        value_raw,
    })
}

/// The oracle as a landscape: the true distribution of each sample's context.
impl Landscape for ContextOracle {
    fn grid(&self) -> &PriceGrid {
        &self.grid
    }

    fn distribution(&self, sample: &EncodedSample) -> Result<BucketDistribution> {
        self.lookup(sample)
            .map(|(_, d)| d.clone())
            .ok_or_else(|| Error::Lookup("sample context not in the oracle".into()))
    }
}

/// Mean over oracle contexts of the mean per-row total variation.
pub fn oracle_tv(dists: &[BucketDistribution], samples: &[&EncodedSample], oracle: &ContextOracle) -> Result<f64> {
    let mut per_context: BTreeMap<usize, (f64, usize)> = BTreeMap::new();
    for (d, s) in dists.iter().zip(samples) {
        if let Some((id, truth)) = oracle.lookup(s) {
            let e = per_context.entry(id).or_default();
            e.0 += tv_divergence(d, truth)?;
            e.1 += 1;
        }
    }
    if per_context.is_empty() {
        return Err(Error::data("no evaluation row matches an oracle context"));
    }
    Ok(per_context.values().map(|(s, n)| s / *n as f64).sum::<f64>() / per_context.len() as f64)
}

/// Full metric set for a probabilistic bidder.
pub fn evaluate_landscape<L: Landscape + ?Sized>(
    name: &str,
    model: &L,
    test: &Dataset,
    oracle: Option<&ContextOracle>,
    opts: &EvalOptions,
) -> Result<EvalResult> {
    let rows = eval_rows(test)?;
    let grid = model.grid();
    let dists = rows
        .samples
        .iter()
        .map(|s| model.distribution(s))
        .collect::<Result<Vec<_>>>()?;
    let bids = dists
        .iter()
        .map(|d| point_prediction(d, grid))
        .collect::<Result<Vec<_>>>()?;
    let mut result = point_metrics(name, &bids, &rows.truths, opts)?;
    result.anlp = Some(anlp_of(&dists, &rows.truths, grid)?);

    let mut scores = Vec::with_capacity(dists.len());
    let mut labels = Vec::with_capacity(dists.len());
    for (d, o) in dists.iter().zip(&test.observations) {
        let reference = match opts.c_index_reference {
            CIndexReference::Bid => o.bid_scaled,
            CIndexReference::WinningPrice => o.true_winning_price().expect("checked by eval_rows"),
        };
        scores.push(d.winning_rate(grid.bucket_of(reference)?)?);
        labels.push(o.is_won());
    }
    result.c_index = match c_index_scores(&scores, &labels) {
        Ok(c) => Some(c),
        Err(Error::Logic(_)) => None,
        Err(e) => return Err(e),
    };
    if let Some(oracle) = oracle {
        result.tv_divergence = Some(oracle_tv(&dists, &rows.samples, oracle)?);
    }
    Ok(result)
}

/// Regression and replay metrics for a point bidder.
pub fn evaluate_point<B: PointBidder + ?Sized>(
    name: &str,
    bidder: &mut B,
    test: &Dataset,
    opts: &EvalOptions,
) -> Result<EvalResult> {
    let rows = eval_rows(test)?;
    let bids = rows
        .samples
        .iter()
        .map(|s| bidder.bid(s))
        .collect::<Result<Vec<_>>>()?;
    point_metrics(name, &bids, &rows.truths, opts)
}

/// Mean over oracle contexts of the TV between the context's average
/// predicted distribution and the oracle.
pub fn oracle_tv_of_means(
    dists: &[BucketDistribution],
    samples: &[&EncodedSample],
    oracle: &ContextOracle,
) -> Result<f64> {
    let mut sums: BTreeMap<usize, (Vec<f64>, usize, &BucketDistribution)> = BTreeMap::new();
    for (d, s) in dists.iter().zip(samples) {
        if let Some((id, truth)) = oracle.lookup(s) {
            let e = sums.entry(id).or_insert_with(|| (vec![0.0; d.len()], 0, truth));
            crate::linalg::axpy(1.0, d.probs(), &mut e.0);
            e.1 += 1;
        }
    }
    if sums.is_empty() {
        return Err(Error::data("no evaluation row matches an oracle context"));
    }
    let mut total = 0.0;
    for (sum, _, truth) in sums.values() {
        total += tv_divergence(&BucketDistribution::from_weights(sum.clone())?, truth)?;
    }
    Ok(total / sums.len() as f64)
}

/// Empirical histogram of every true winning price (won and hidden) per
/// oracle context; the reference floor for oracle-recovery TV.
pub fn empirical_oracle_tv(data: &Dataset, oracle: &ContextOracle) -> Result<f64> {
    let n = data.grid.n_buckets();
    let mut counts: BTreeMap<usize, Vec<f64>> = BTreeMap::new();
    for o in &data.observations {
        if let (Some((id, _)), Some(z)) = (oracle.lookup(&o.sample), o.true_winning_price()) {
            counts.entry(id).or_insert_with(|| vec![0.0; n])[data.grid.bucket_of(z)?] += 1.0;
        }
    }
    if counts.is_empty() {
        return Err(Error::data("no rows match an oracle context"));
    }
    let truths: BTreeMap<usize, &BucketDistribution> = oracle.truths.values().map(|(id, d)| (*id, d)).collect();
    let mut total = 0.0;
    for (id, c) in &counts {
        total += tv_divergence(&BucketDistribution::from_weights(c.clone())?, truths[id])?;
    }
    Ok(total / counts.len() as f64)
}

/// Landscape-plot rows: per oracle context, the bucket midpoint, the mean
/// predicted probability over that context's rows, and the true probability.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PlotRow {
    pub context: String,
    pub bucket: usize,
    pub midpoint: f64,
    pub predicted: f64,
    pub truth: Option<f64>,
}

pub fn plot_data<L: Landscape + ?Sized>(
    model: &L,
    test: &Dataset,
    oracle: Option<&ContextOracle>,
) -> Result<Vec<PlotRow>> {
    let grid = *model.grid();
    let n = grid.n_buckets();
    let mut groups: BTreeMap<Option<usize>, (Vec<f64>, usize)> = BTreeMap::new();
    for o in &test.observations {
        let key = oracle.and_then(|or| or.lookup(&o.sample)).map(|(id, _)| id);
        let d = model.distribution(&o.sample)?;
        let e = groups.entry(key).or_insert_with(|| (vec![0.0; n], 0));
        crate::linalg::axpy(1.0, d.probs(), &mut e.0);
        e.1 += 1;
    }
    let truths: BTreeMap<usize, &BucketDistribution> = oracle
        .map(|o| o.truths.values().map(|(id, d)| (*id, d)).collect())
        .unwrap_or_default();
    let mut rows = Vec::with_capacity(groups.len() * n);
    for (key, (sum, count)) in groups {
        let context = key.map_or_else(|| "all".to_string(), context_value);
        for (bucket, s) in sum.iter().enumerate() {
            rows.push(PlotRow {
                context: context.clone(),
                bucket,
                midpoint: grid.midpoint(bucket)?,
                predicted: s / count as f64,
                truth: key.and_then(|k| truths.get(&k)).map(|t| t.probs()[bucket]),
            });
        }
    }
    Ok(rows)
}

pub fn write_plot_csv(rows: &[PlotRow], out: &mut impl Write) -> Result<()> {
    writeln!(out, "context,bucket,midpoint,predicted,truth")?;
    for r in rows {
        let truth = r.truth.map(|t| t.to_string()).unwrap_or_default();
        writeln!(out, "{},{},{},{},{}", r.context, r.bucket, r.midpoint, r.predicted, truth)?;
    }
    Ok(())
}

// ---------------------------------------------------------------------------
// Sweep

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SweepAxis {
    DeltaLose,
    AlphaBeta,
}

impl std::str::FromStr for SweepAxis {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "delta_lose" => Ok(SweepAxis::DeltaLose),
            "alpha_beta" => Ok(SweepAxis::AlphaBeta),
            other => Err(Error::config(format!("unknown sweep axis `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepRow {
    pub alpha: f64,
    pub beta: f64,
    pub delta_lose: usize,
    pub result: EvalResult,
}

/// The loss settings visited by a sweep, in output order.
pub fn sweep_points(axis: SweepAxis, values: &[f64], base: &TrainConfig) -> Result<Vec<TrainConfig>> {
    if values.is_empty() {
        return Err(Error::config("sweep needs at least one value"));
    }
    let mut points = Vec::new();
    match axis {
        SweepAxis::DeltaLose => {
            for &v in values {
                if v < 1.0 || v.fract() != 0.0 {
                    return Err(Error::config(format!("delta_lose must be a positive integer, got {v}")));
                }
                let mut cfg = *base;
                cfg.loss.delta_lose = v as usize;
                points.push(cfg);
            }
        }
        SweepAxis::AlphaBeta => {
            for &a in values {
                for &b in values {
                    let mut cfg = *base;
                    cfg.loss.alpha = a;
                    cfg.loss.beta = b;
                    points.push(cfg);
                }
            }
        }
    }
    for p in &points {
        p.validate()?;
    }
    Ok(points)
}

/// Trains and evaluates one model per sweep point with shared seeds.
#[allow(clippy::too_many_arguments)]
pub fn sweep(
    axis: SweepAxis,
    values: &[f64],
    net: NetConfig,
    base: &TrainConfig,
    train: &Dataset,
    val: &Dataset,
    test: &Dataset,
    oracle: Option<&ContextOracle>,
    opts: &EvalOptions,
) -> Result<Vec<SweepRow>> {
    let mut rows = Vec::new();
    for cfg in sweep_points(axis, values, base)? {
        let (model, _) = trainer::train(train, val, net, &cfg)?;
        let result = evaluate_landscape("adm", &model, test, oracle, opts)?;
        rows.push(SweepRow {
            alpha: cfg.loss.alpha,
            beta: cfg.loss.beta,
            delta_lose: cfg.loss.delta_lose,
            result,
        });
    }
    Ok(rows)
}

pub fn write_sweep_csv(rows: &[SweepRow], out: &mut impl Write) -> Result<()> {
    writeln!(out, "alpha,beta,delta_lose,mae,anlp,c_index,wins,value,tv_divergence")?;
    let opt = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
    for r in rows {
        let e = &r.result;
        writeln!(
            out,
            "{},{},{},{},{},{},{},{},{}",
            r.alpha,
            r.beta,
            r.delta_lose,
            opt(e.mae),
            opt(e.anlp),
            opt(e.c_index),
            e.wins,
            e.value,
            opt(e.tv_divergence)
        )?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::pricegrid::make_grid;

    fn close(a: f64, b: f64, tol: f64) -> bool {
        (a - b).abs() <= tol
    }

    #[test]
    fn point_prediction_examples() {
        let g = PriceGrid::default();
        assert!(close(point_prediction(&BucketDistribution::one_hot(70, 30), &g).unwrap(), 0.05, 1e-12));
        assert!(close(point_prediction(&BucketDistribution::uniform(70), &g).unwrap(), -2.95, 1e-12));
        let small = make_grid(0.0, 3.0, 1.0).unwrap();
        let d = BucketDistribution::new(vec![0.2, 0.5, 0.3]).unwrap();
        assert_eq!(point_prediction(&d, &small).unwrap(), 1.5);
    }

    #[test]
    fn mae_examples() {
        assert_eq!(mae(&[1.0, 2.0], &[1.5, 1.5]).unwrap(), 0.5);
        assert_eq!(mae(&[1.0, -2.0], &[1.0, -2.0]).unwrap(), 0.0);
        assert_eq!(mae(&[0.0], &[3.0]).unwrap(), 3.0);
        assert!(matches!(mae(&[1.0], &[1.0, 2.0]), Err(Error::Logic(_))));
        assert!(matches!(mae(&[], &[]), Err(Error::Logic(_))));
    }

    #[test]
    fn anlp_examples() {
        let g = PriceGrid::default();
        let u = vec![BucketDistribution::uniform(70); 3];
        assert!(close(anlp_of(&u, &[0.0, 1.0, -2.0], &g).unwrap(), 70f64.ln(), 1e-12));
        let hot = vec![BucketDistribution::one_hot(70, 30)];
        assert!(close(anlp_of(&hot, &[0.05], &g).unwrap(), 0.0, 1e-12));
        assert!(close(anlp_of(&hot, &[1.05], &g).unwrap(), -(1e-12f64).ln(), 1e-9));
        assert!(close(-(1e-12f64).ln(), 27.631, 1e-3));
        assert!(anlp_of(&[], &[], &g).is_err());
    }

    fn brute_c_index(scores: &[f64], won: &[bool]) -> f64 {
        let (mut num, mut den) = (0.0, 0.0);
        for i in 0..scores.len() {
            for j in 0..scores.len() {
                if won[i] && !won[j] {
                    den += 1.0;
                    if scores[i] > scores[j] {
                        num += 1.0;
                    } else if scores[i] == scores[j] {
                        num += 0.5;
                    }
                }
            }
        }
        num / den
    }

    #[test]
    fn c_index_examples() {
        assert_eq!(c_index_scores(&[0.9, 0.8, 0.2, 0.1], &[true, true, false, false]).unwrap(), 1.0);
        assert_eq!(c_index_scores(&[0.4; 5], &[true, false, true, false, false]).unwrap(), 0.5);
        assert_eq!(c_index_scores(&[0.9, 0.9, 0.1], &[true, false, false]).unwrap(), 0.75);
        assert!(matches!(c_index_scores(&[0.1, 0.2], &[true, true]), Err(Error::Logic(_))));
    }

    #[test]
    fn c_index_matches_pairwise_count() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        for _ in 0..50 {
            let n = rng.random_range(2..60);
            let scores: Vec<f64> = (0..n).map(|_| (rng.random_range(0..8) as f64) / 7.0).collect();
            let mut won: Vec<bool> = (0..n).map(|_| rng.random_bool(0.5)).collect();
            won[0] = true;
            won[1] = false;
            let fast = c_index_scores(&scores, &won).unwrap();
            assert!(close(fast, brute_c_index(&scores, &won), 1e-12));
            let mono: Vec<f64> = scores.iter().map(|s| (3.0 * s).exp()).collect();
            assert!(close(c_index_scores(&mono, &won).unwrap(), fast, 1e-12));
        }
    }

    #[test]
    fn replay_examples() {
        assert_eq!(replay(&[2.0, 1.0], &[1.5, 1.5]).unwrap(), ReplayOutcome { wins: 1, value: 1.5 });
        assert_eq!(replay(&[0.3, 0.7], &[0.3, 0.7]).unwrap().wins, 2);
        assert_eq!(replay(&[0.0, 0.1], &[1.0, 2.0]).unwrap(), ReplayOutcome { wins: 0, value: 0.0 });
        assert!(replay(&[], &[]).is_err());
    }

    #[test]
    fn tv_examples() {
        let u = BucketDistribution::uniform(2);
        assert_eq!(tv_divergence(&u, &u).unwrap(), 0.0);
        let (a, b) = (BucketDistribution::one_hot(2, 0), BucketDistribution::one_hot(2, 1));
        assert_eq!(tv_divergence(&a, &b).unwrap(), 1.0);
        assert_eq!(tv_divergence(&u, &a).unwrap(), 0.5);
        assert!(tv_divergence(&u, &BucketDistribution::uniform(3)).is_err());
    }

    #[test]
    fn normal_mass_is_stable() {
        let direct = |a: f64, b: f64| {
            let cdf = |x: f64| 0.5 * libm::erfc(-x / std::f64::consts::SQRT_2);
            (cdf(b) - cdf(a)).ln()
        };
        for (a, b) in [(-1.0, 0.5), (0.2, 0.9), (-3.0, -2.0), (2.0, 2.5), (5.0, 5.1)] {
            assert!(close(ln_normal_mass(a, b), direct(a, b), 1e-9), "{a} {b}");
        }
        // far tails stay finite and ordered
        let far = ln_normal_mass(100.0, 101.0);
        let farther = ln_normal_mass(200.0, 201.0);
        assert!(far.is_finite() && farther.is_finite() && farther < far);
        assert!(close(ln_normal_mass(-101.0, -100.0), far, 1e-12));
        // reference values of ln Q(x) on both sides of the asymptotic switch
        for (x, want) in [
            (5.0, -15.064998393988727),
            (20.0, -203.9171553710973),
            (29.99, -454.0209613044682),
            (30.0, -454.32124395634327),
            (45.0, -1017.2260942419525),
            (100.0, -5005.524208694205),
        ] {
            assert!(close(ln_upper_tail(x), want, 1e-9 * want.abs()), "{x}");
        }
    }

    fn gl_model(sigma: f64, mean: f64) -> GaussianLinear {
        let schema = crate::admnet::tests::toy_schema(2, 3, 1);
        GaussianLinear::new(schema, PriceGrid::default(), sigma, mean).unwrap()
    }

    fn sample() -> EncodedSample {
        EncodedSample {
            cat_indices: vec![0, 1],
            num_values: vec![0.5],
        }
    }

    #[test]
    fn gaussian_limits() {
        let g = PriceGrid::default();
        let tight = gl_model(1e-3, g.midpoint(30).unwrap());
        let d = tight.distribution(&sample()).unwrap();
        assert!(d.probs()[30] > 0.999);
        assert!(close(d.total_mass(), 1.0, 1e-6));
        let wide = gl_model(1e4, 0.5);
        let d = wide.distribution(&sample()).unwrap();
        assert!(d.probs().iter().all(|p| close(*p, 1.0 / 70.0, 1e-6)));
        // far off-grid means remain valid distributions
        let off = gl_model(0.05, 50.0);
        let d = off.distribution(&sample()).unwrap();
        assert!(close(d.total_mass(), 1.0, 1e-6));
        assert_eq!(d.argmax(), 69);
    }

    #[test]
    fn gaussian_gradient_matches_finite_difference() {
        let mut m = gl_model(0.4, 0.3);
        m.weights.numeric[0] = 0.2;
        m.weights.categorical[1][1] = -0.1;
        let obs = crate::nllloss::ObservationBuckets::Won { winning: 31, bid: 36 };
        let loss = |m: &GaussianLinear| {
            let p = m.distribution(&sample()).unwrap();
            crate::nllloss::legacy_sample_loss(&p, obs).unwrap().0
        };
        let (p, cache) = m.forward_cached(&sample()).unwrap();
        let (_, g) = crate::nllloss::legacy_sample_loss(&p, obs).unwrap();
        let mut grads = m.zero_grads();
        m.accumulate_grads(&cache, &g, 1.0, &mut grads).unwrap();
        let h = 1e-5;
        let mut plus = m.clone();
        plus.weights.numeric[0] += h;
        let mut minus = m.clone();
        minus.weights.numeric[0] -= h;
        let fd = (loss(&plus) - loss(&minus)) / (2.0 * h);
        assert!(close(grads.numeric[0], fd, 1e-6 * fd.abs().max(1.0)), "{} vs {fd}", grads.numeric[0]);
        let mut plus = m.clone();
        plus.weights.bias[0] += h;
        let mut minus = m.clone();
        minus.weights.bias[0] -= h;
        let fd = (loss(&plus) - loss(&minus)) / (2.0 * h);
        assert!(close(grads.bias[0], fd, 1e-6 * fd.abs().max(1.0)));
        assert_eq!(grads.categorical[1][1], grads.bias[0]);
        assert_eq!(grads.categorical[1][0], 0.0);
    }

    #[test]
    fn sweep_point_counts() {
        let base = TrainConfig::default();
        assert_eq!(sweep_points(SweepAxis::AlphaBeta, &[0.2, 0.5, 0.8], &base).unwrap().len(), 9);
        let d = sweep_points(SweepAxis::DeltaLose, &[1.0, 20.0, 40.0, 70.0], &base).unwrap();
        assert_eq!(d.iter().map(|c| c.loss.delta_lose).collect::<Vec<_>>(), vec![1, 20, 40, 70]);
        assert!(sweep_points(SweepAxis::DeltaLose, &[], &base).is_err());
        assert!(sweep_points(SweepAxis::DeltaLose, &[0.5], &base).is_err());
    }
}
