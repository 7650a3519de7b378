//! Synthetic censored auctions with known winning-price landscapes.
//!
//! Each context owns a two-component Gaussian mixture over the scaled price
//! axis. Its bucket distribution is computed analytically and serves as
//! ground truth; sampled auctions never feed back into it.

use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::Path;
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::features::{build_schema, Dataset, FeatureSchema, FieldDecl, FieldGroup, LogRow, RawRecord};
use crate::pricegrid::{BucketDistribution, PriceGrid};

pub const CONTEXT_FIELD: &str = "context";

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MixtureComponent {
    pub mean: f64,
    pub std: f64,
    pub weight: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MixtureSpec {
    pub components: [MixtureComponent; 2],
}

impl MixtureSpec {
    pub fn bimodal(low: (f64, f64), high: (f64, f64), low_weight: f64) -> Self {
        MixtureSpec {
            components: [
                MixtureComponent {
                    mean: low.0,
                    std: low.1,
                    weight: low_weight,
                },
                MixtureComponent {
                    mean: high.0,
                    std: high.1,
                    weight: 1.0 - low_weight,
                },
            ],
        }
    }

    pub fn mean(&self) -> f64 {
        self.components.iter().map(|c| c.weight * c.mean).sum()
    }

    fn validate(&self) -> Result<()> {
        let mut total = 0.0;
        for c in &self.components {
            if !(c.std > 0.0 && c.std.is_finite() && c.mean.is_finite()) {
                return Err(Error::config(format!("bad mixture component {c:?}")));
            }
            if !(0.0..=1.0).contains(&c.weight) {
                return Err(Error::config(format!("mixture weight {} outside [0, 1]", c.weight)));
            }
            total += c.weight;
        }
        if (total - 1.0).abs() > 1e-9 {
            return Err(Error::config(format!("mixture weights sum to {total}")));
        }
        Ok(())
    }
}

fn default_noise_features() -> usize {
    8
}

fn default_noise_cardinality() -> usize {
    100
}

fn default_durations() -> Vec<f64> {
    vec![15.0, 30.0]
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthConfig {
    pub n_contexts: usize,
    #[serde(default)]
    pub grid: PriceGrid,
    /// Explicit mixtures for the first contexts; the rest are drawn from
    /// the seed.
    #[serde(default)]
    pub mixtures: Vec<MixtureSpec>,
    pub bid_noise_std: f64,
    /// Fraction of the gap between the winning price and the context's
    /// mean price that the bidder's estimate closes. Zero gives bids
    /// centered on the winning price.
    #[serde(default)]
    pub bid_anchor_pull: f64,
    #[serde(default = "default_noise_features")]
    pub n_extra_noise_features: usize,
    #[serde(default = "default_noise_cardinality")]
    pub noise_cardinality: usize,
    #[serde(default = "default_durations")]
    pub durations: Vec<f64>,
    pub seed: u64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig {
            n_contexts: 3,
            grid: PriceGrid::default(),
            mixtures: Vec::new(),
            bid_noise_std: 0.2,
            bid_anchor_pull: 0.0,
            n_extra_noise_features: default_noise_features(),
            noise_cardinality: default_noise_cardinality(),
            durations: default_durations(),
            seed: 1,
        }
    }
}

impl SynthConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_contexts == 0 {
            return Err(Error::config("need at least one context"));
        }
        if self.mixtures.len() > self.n_contexts {
            return Err(Error::config("more mixtures than contexts"));
        }
        for m in &self.mixtures {
            m.validate()?;
        }
        if !(self.bid_noise_std >= 0.0 && self.bid_noise_std.is_finite()) {
            return Err(Error::config("bid noise std must be non-negative"));
        }
        if !(0.0..=1.0).contains(&self.bid_anchor_pull) {
            return Err(Error::config("bid anchor pull must lie in [0, 1]"));
        }
        if self.noise_cardinality == 0 {
            return Err(Error::config("noise cardinality must be positive"));
        }
        if self.durations.is_empty() || self.durations.iter().any(|d| d.is_nan() || *d <= 0.0) {
            return Err(Error::config("durations must be positive"));
        }
        Ok(())
    }
}

fn std_normal_cdf(x: f64) -> f64 {
    if x == f64::INFINITY {
        1.0
    } else if x == f64::NEG_INFINITY {
        0.0
    } else {
        0.5 * libm::erfc(-x / std::f64::consts::SQRT_2)
    }
}

/// Mixture mass per bucket; mass beyond the range folds into the edge
/// buckets.
pub fn discretize_mixture(mixture: &MixtureSpec, grid: &PriceGrid) -> Result<BucketDistribution> {
    let n = grid.n_buckets();
    let weights: Vec<f64> = (0..n)
        .map(|i| {
            let (mut lo, mut hi) = grid.edges(i);
            if i == 0 {
                lo = f64::NEG_INFINITY;
            }
            if i == n - 1 {
                hi = f64::INFINITY;
            }
            mixture
                .components
                .iter()
                .map(|c| {
                    c.weight
                        * (std_normal_cdf((hi - c.mean) / c.std) - std_normal_cdf((lo - c.mean) / c.std))
                })
                .sum::<f64>()
                .max(0.0)
        })
        .collect();
    BucketDistribution::from_weights(weights)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ContextTruth {
    pub id: usize,
    pub mixture: MixtureSpec,
    pub distribution: BucketDistribution,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SynthWorld {
    pub config: SynthConfig,
    pub contexts: Vec<ContextTruth>,
    pub fields: Vec<FieldDecl>,
}

/// Feature value naming a context.
pub fn context_value(id: usize) -> String {
    format!("c{id}")
}

fn random_mixture(rng: &mut ChaCha8Rng, grid: &PriceGrid) -> MixtureSpec {
    let center = rng.random_range(grid.lower() + 1.5..grid.upper() - 2.0);
    let gap = rng.random_range(0.8..1.6);
    let low_weight = rng.random_range(0.2..0.8);
    MixtureSpec::bimodal(
        (center, rng.random_range(0.15..0.35)),
        (center + gap, rng.random_range(0.15..0.35)),
        low_weight,
    )
}

fn noise_fields(n: usize) -> Vec<FieldDecl> {
    (0..n)
        .map(|i| {
            if i % 4 == 3 {
                FieldDecl::num(&format!("noise_num_{i}"), FieldGroup::Context)
            } else {
                let group = if i % 2 == 0 { FieldGroup::User } else { FieldGroup::Ad };
                FieldDecl::cat(&format!("noise_cat_{i}"), group)
            }
        })
        .collect()
}

pub fn build_world(config: &SynthConfig) -> Result<SynthWorld> {
    config.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut contexts = Vec::with_capacity(config.n_contexts);
    for id in 0..config.n_contexts {
        let mixture = match config.mixtures.get(id) {
            Some(m) => *m,
            None => random_mixture(&mut rng, &config.grid),
        };
        contexts.push(ContextTruth {
            id,
            mixture,
            distribution: discretize_mixture(&mixture, &config.grid)?,
        });
    }
    let mut fields = vec![FieldDecl::cat(CONTEXT_FIELD, FieldGroup::Publisher)];
    fields.extend(noise_fields(config.n_extra_noise_features));
    Ok(SynthWorld {
        config: config.clone(),
        contexts,
        fields,
    })
}

/// One generated auction with its ground truth kept alongside.
#[derive(Debug, Clone, PartialEq)]
pub struct SynthAuction {
    pub context: usize,
    pub winning_scaled: f64,
    pub bid_scaled: f64,
    pub row: LogRow,
}

impl SynthAuction {
    pub fn won(&self) -> bool {
        self.row.won
    }
}

impl SynthWorld {
    pub fn grid(&self) -> &PriceGrid {
        &self.config.grid
    }

    fn context(&self, id: usize) -> Result<&ContextTruth> {
        self.contexts
            .get(id)
            .ok_or_else(|| Error::Lookup(format!("unknown context {id}")))
    }

    pub fn true_distribution(&self, id: usize) -> Result<&BucketDistribution> {
        Ok(&self.context(id)?.distribution)
    }

    pub fn true_entropy(&self, id: usize) -> Result<f64> {
        Ok(self.context(id)?.distribution.entropy())
    }

    /// Draws `n` auctions. A pure function of `(self, n, seed)`.
    pub fn sample_auctions(&self, n: usize, seed: u64) -> Vec<SynthAuction> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let grid = self.grid();
        let cdfs: Vec<Vec<f64>> = self.contexts.iter().map(|c| c.distribution.cdf()).collect();
        let sigma = self.config.bid_noise_std;
        let pull = self.config.bid_anchor_pull;
        let mut out = Vec::with_capacity(n);
        for _ in 0..n {
            let ctx = rng.random_range(0..self.contexts.len());
            let u: f64 = rng.random();
            let cdf = &cdfs[ctx];
            let bucket = cdf.partition_point(|c| *c <= u).min(cdf.len() - 1);
            let (lo, _) = grid.edges(bucket);
            let z = lo + rng.random::<f64>() * grid.width();

            let noise = if sigma > 0.0 {
                loop {
                    let e: f64 = rng.sample(StandardNormal);
                    if e.abs() <= 3.0 {
                        break e * sigma;
                    }
                }
            } else {
                0.0
            };
            let anchor = self.contexts[ctx].mixture.mean();
            let b = z + pull * (anchor - z) + noise;
            let won = b >= z;

            let duration = self.config.durations[rng.random_range(0..self.config.durations.len())];
            let mut record = RawRecord::new();
            record.insert(CONTEXT_FIELD.to_string(), context_value(ctx));
            for decl in &self.fields[1..] {
                let value = match decl.kind {
                    crate::features::FieldKind::Num => format!("{:?}", rng.random::<f64>()),
                    crate::features::FieldKind::Cat => {
                        format!("v{}", rng.random_range(0..self.config.noise_cardinality))
                    }
                };
                record.insert(decl.name.clone(), value);
            }
            out.push(SynthAuction {
                context: ctx,
                winning_scaled: z,
                bid_scaled: b,
                row: LogRow {
                    won,
                    bid_price: b.exp() * duration,
                    // hidden on losses but kept for evaluation
                    winning_price: Some(z.exp() * duration),
                    duration,
                    record,
                },
            });
        }
        out
    }

    /// Encodes auctions into a dataset. Without a schema, one is built
    /// from these auctions.
    pub fn to_dataset(&self, auctions: &[SynthAuction], schema: Option<Arc<FeatureSchema>>) -> Result<Dataset> {
        let schema = match schema {
            Some(s) => s,
            None => Arc::new(build_schema(auctions.iter().map(|a| &a.row.record), &self.fields)?),
        };
        let observations = auctions
            .iter()
            .map(|a| a.row.to_observation(&schema))
            .collect::<Result<Vec<_>>>()?;
        Ok(Dataset::new(schema, observations, *self.grid()))
    }

    pub fn oracle(&self) -> Oracle {
        Oracle {
            grid: *self.grid(),
            contexts: self
                .contexts
                .iter()
                .map(|c| OracleContext {
                    id: c.id,
                    probs: c.distribution.clone(),
                })
                .collect(),
        }
    }
}

/// Ground-truth file written next to a generated dataset.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Oracle {
    pub grid: PriceGrid,
    pub contexts: Vec<OracleContext>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OracleContext {
    pub id: usize,
    pub probs: BucketDistribution,
}

impl Oracle {
    pub fn write(&self, path: &Path) -> Result<()> {
        let mut w = BufWriter::new(File::create(path)?);
        serde_json::to_writer(&mut w, self)?;
        w.write_all(b"\n")?;
        w.flush()?;
        Ok(())
    }

    pub fn read(path: &Path) -> Result<Self> {
        Ok(serde_json::from_reader(BufReader::new(File::open(path)?))?)
    }

    pub fn distribution(&self, id: usize) -> Option<&BucketDistribution> {
        self.contexts.iter().find(|c| c.id == id).map(|c| &c.probs)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn one_context(mixture: MixtureSpec, sigma: f64) -> SynthWorld {
        build_world(&SynthConfig {
            n_contexts: 1,
            mixtures: vec![mixture],
            bid_noise_std: sigma,
            n_extra_noise_features: 2,
            ..SynthConfig::default()
        })
        .unwrap()
    }

    #[test]
    fn narrow_component_lands_in_its_bucket() {
        // Bucket 30 is [0.0, 0.1); a 0.001-wide Gaussian at 0.05 sits 50 std
        // from both edges, so the Gaussian CDF puts essentially all mass there.
        let world = one_context(MixtureSpec::bimodal((0.05, 0.001), (1.0, 0.1), 1.0), 0.1);
        let d = world.true_distribution(0).unwrap();
        assert!(d.probs()[30] >= 0.99);
        assert_eq!(d.len(), 70);
        assert!((d.total_mass() - 1.0).abs() < 1e-6);
    }

    #[test]
    fn boundary_mass_folds_into_edges() {
        let world = one_context(MixtureSpec::bimodal((-5.0, 0.3), (6.0, 0.3), 0.5), 0.1);
        let d = world.true_distribution(0).unwrap();
        assert!((d.probs()[0] - 0.5).abs() < 1e-9);
        assert!((d.probs()[69] - 0.5).abs() < 1e-9);
    }

    #[test]
    fn lookup_and_entropy() {
        let world = one_context(MixtureSpec::bimodal((0.0, 0.3), (1.0, 0.3), 0.5), 0.1);
        assert!(matches!(world.true_distribution(99), Err(Error::Lookup(_))));
        assert!(matches!(world.true_entropy(99), Err(Error::Lookup(_))));
        let h = world.true_entropy(0).unwrap();
        assert!(h > 0.0 && h < 70f64.ln());
    }

    #[test]
    fn deterministic_world_and_samples() {
        let cfg = SynthConfig {
            n_contexts: 4,
            seed: 11,
            ..SynthConfig::default()
        };
        let a = build_world(&cfg).unwrap();
        let b = build_world(&cfg).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.sample_auctions(50, 3), b.sample_auctions(50, 3));
        assert_ne!(a.sample_auctions(50, 3), a.sample_auctions(50, 4));
        assert!(a.sample_auctions(0, 3).is_empty());
    }

    #[test]
    fn zero_noise_always_wins_at_the_winning_price() {
        let world = one_context(MixtureSpec::bimodal((0.0, 0.3), (1.0, 0.3), 0.5), 0.0);
        for a in world.sample_auctions(500, 5) {
            assert!(a.won());
            assert_eq!(a.bid_scaled, a.winning_scaled);
        }
    }

    #[test]
    fn symmetric_noise_wins_half_the_time() {
        let world = one_context(MixtureSpec::bimodal((0.0, 0.3), (1.0, 0.3), 0.5), 0.2);
        let auctions = world.sample_auctions(100_000, 9);
        let frac = auctions.iter().filter(|a| a.won()).count() as f64 / auctions.len() as f64;
        assert!((0.48..=0.52).contains(&frac), "won fraction {frac}");
        for a in &auctions {
            assert!((a.bid_scaled - a.winning_scaled).abs() <= 3.0 * 0.2 + 1e-12);
        }
    }

    #[test]
    fn anchor_pull_makes_censoring_informative() {
        let cfg = SynthConfig {
            n_contexts: 1,
            mixtures: vec![MixtureSpec::bimodal((0.0, 0.2), (1.5, 0.2), 0.5)],
            bid_anchor_pull: 0.5,
            n_extra_noise_features: 0,
            ..SynthConfig::default()
        };
        let world = build_world(&cfg).unwrap();
        let auctions = world.sample_auctions(20_000, 2);
        let mean = |won: bool| {
            let zs: Vec<f64> = auctions
                .iter()
                .filter(|a| a.won() == won)
                .map(|a| a.winning_scaled)
                .collect();
            zs.iter().sum::<f64>() / zs.len() as f64
        };
        assert!(mean(true) + 0.5 < mean(false));
    }

    #[test]
    fn rejects_bad_configs() {
        let bad_weights = SynthConfig {
            mixtures: vec![MixtureSpec::bimodal((0.0, 0.3), (1.0, 0.3), 1.5)],
            ..SynthConfig::default()
        };
        assert!(matches!(build_world(&bad_weights), Err(Error::Config(_))));
        let no_ctx = SynthConfig {
            n_contexts: 0,
            ..SynthConfig::default()
        };
        assert!(matches!(build_world(&no_ctx), Err(Error::Config(_))));
        let neg_noise = SynthConfig {
            bid_noise_std: -1.0,
            ..SynthConfig::default()
        };
        assert!(matches!(build_world(&neg_noise), Err(Error::Config(_))));
    }
}
