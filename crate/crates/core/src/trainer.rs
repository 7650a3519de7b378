//! Mini-batch training with adaptive-moment updates and early stopping on
//! validation ANLP.

use std::time::Instant;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::admnet::{init_params, ModelParams, NetConfig};
use crate::error::{Error, Result};
use crate::evalkit::{self, Landscape};
use crate::features::{BidObservation, Dataset, EncodedSample, Outcome};
use crate::linalg::axpy;
use crate::nllloss::{legacy_sample_loss, nll_terms, LossConfig, ObservationBuckets};
use crate::pricegrid::{BucketDistribution, PriceGrid};

/// A collection of flat parameter buffers with a fixed layout.
pub trait ParamSet {
    fn slices(&self) -> Vec<&[f64]>;
    fn slices_mut(&mut self) -> Vec<&mut [f64]>;

    fn all_finite_values(&self) -> bool {
        self.slices().iter().all(|s| s.iter().all(|v| v.is_finite()))
    }
}

/// A landscape model trainable through logit gradients.
pub trait TrainableModel: Landscape + Clone {
    type Params: ParamSet;
    type Cache;

    fn params(&self) -> &Self::Params;
    fn params_mut(&mut self) -> &mut Self::Params;
    fn zero_grads(&self) -> Self::Params;
    fn forward_cached(&self, sample: &EncodedSample) -> Result<(BucketDistribution, Self::Cache)>;
    fn accumulate_grads(
        &self,
        cache: &Self::Cache,
        dl_dlogits: &[f64],
        scale: f64,
        grads: &mut Self::Params,
    ) -> Result<()>;
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum LossKind {
    #[default]
    Nll,
    Legacy,
    WinOnly,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub batch_size: usize,
    pub max_epochs: usize,
    pub patience: usize,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    pub seed: u64,
    /// Set through the run configuration's top-level `loss` section.
    #[serde(skip)]
    pub loss: LossConfig,
    pub loss_kind: LossKind,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            learning_rate: 0.001,
            batch_size: 256,
            max_epochs: 30,
            patience: 3,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
            seed: 42,
            loss: LossConfig::default(),
            loss_kind: LossKind::Nll,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::config("learning rate must be positive"));
        }
        if self.batch_size == 0 || self.patience == 0 || self.max_epochs == 0 {
            return Err(Error::config("batch size, patience and max epochs must be positive"));
        }
        if !(0.0..1.0).contains(&self.beta1) || !(0.0..1.0).contains(&self.beta2) || self.epsilon <= 0.0 {
            return Err(Error::config("bad optimizer moment settings"));
        }
        self.loss.validate()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct OptimizerState {
    pub first_moment: Vec<Vec<f64>>,
    pub second_moment: Vec<Vec<f64>>,
    pub step: u64,
}

impl OptimizerState {
    pub fn new<P: ParamSet>(params: &P) -> Self {
        let zeros: Vec<Vec<f64>> = params.slices().iter().map(|s| vec![0.0; s.len()]).collect();
        OptimizerState {
            first_moment: zeros.clone(),
            second_moment: zeros,
            step: 0,
        }
    }
}

/// One bias-corrected adaptive-moment update.
pub fn adam_step<P: ParamSet>(
    params: &mut P,
    grads: &P,
    state: &mut OptimizerState,
    lr: f64,
    (beta1, beta2, epsilon): (f64, f64, f64),
) -> Result<()> {
    let grads = grads.slices();
    if grads.len() != state.first_moment.len() {
        return Err(Error::logic("optimizer state does not match parameters"));
    }
    if !grads.iter().all(|g| g.iter().all(|v| v.is_finite())) {
        return Err(Error::numeric("optimizer", "non-finite gradient"));
    }
    state.step += 1;
    let t = state.step as i32;
    let c1 = 1.0 - beta1.powi(t);
    let c2 = 1.0 - beta2.powi(t);
    for (((p, g), m), v) in params
        .slices_mut()
        .into_iter()
        .zip(grads)
        .zip(&mut state.first_moment)
        .zip(&mut state.second_moment)
    {
        if p.len() != g.len() {
            return Err(Error::logic("gradient shape does not match parameter"));
        }
        for i in 0..p.len() {
            m[i] = beta1 * m[i] + (1.0 - beta1) * g[i];
            v[i] = beta2 * v[i] + (1.0 - beta2) * g[i] * g[i];
            let m_hat = m[i] / c1;
            let v_hat = v[i] / c2;
            p[i] -= lr * m_hat / (v_hat.sqrt() + epsilon);
        }
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub train_loss: f64,
    pub val_anlp: f64,
    pub val_mae: f64,
    pub seconds: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
pub struct GradientSampleCounts {
    pub won: u64,
    pub lost: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainReport {
    pub epochs: Vec<EpochRecord>,
    pub best_epoch: usize,
    /// Observations that reached the gradient path, by outcome.
    pub gradient_samples: GradientSampleCounts,
}

impl TrainReport {
    pub fn best(&self) -> &EpochRecord {
        &self.epochs[self.best_epoch - 1]
    }

    /// The report with wall-clock fields zeroed, for reproducibility checks.
    pub fn without_timings(&self) -> TrainReport {
        let mut r = self.clone();
        r.epochs.iter_mut().for_each(|e| e.seconds = 0.0);
        r
    }
}

pub(crate) fn observation_buckets(obs: &BidObservation, grid: &PriceGrid) -> Result<ObservationBuckets> {
    let bid = grid.bucket_of(obs.bid_scaled)?;
    Ok(match obs.outcome {
        Outcome::Won { winning_scaled } => ObservationBuckets::Won {
            winning: grid.bucket_of(winning_scaled)?,
            bid,
        },
        Outcome::Lost { .. } => ObservationBuckets::Lost { bid },
    })
}

/// Loss and per-sample logit gradients over one batch. NLL terms are each
/// averaged over their own contributing samples before weighting.
fn batch_objective(
    probs: &[BucketDistribution],
    buckets: &[ObservationBuckets],
    cfg: &TrainConfig,
) -> Result<(f64, Vec<Vec<f64>>)> {
    let n = probs.len();
    let won = buckets
        .iter()
        .filter(|b| matches!(b, ObservationBuckets::Won { .. }))
        .count();
    let lost = n - won;
    let mut grads = Vec::with_capacity(n);
    let mut loss = 0.0;
    match cfg.loss_kind {
        LossKind::Nll | LossKind::WinOnly => {
            let lc = &cfg.loss;
            let (w1, w2, w3) = if cfg.loss_kind == LossKind::WinOnly {
                (1.0, 0.0, 0.0)
            } else {
                (lc.alpha, (1.0 - lc.alpha) * lc.beta, (1.0 - lc.alpha) * (1.0 - lc.beta))
            };
            let per_won = if won > 0 { 1.0 / won as f64 } else { 0.0 };
            let per_lost = if lost > 0 { 1.0 / lost as f64 } else { 0.0 };
            for (p, b) in probs.iter().zip(buckets) {
                let terms = nll_terms(p, *b, lc)?;
                let mut g = vec![0.0; p.len()];
                for (term, w) in [(&terms.l1, w1 * per_won), (&terms.l2, w2 * per_won), (&terms.l3, w3 * per_lost)] {
                    if let Some(t) = term {
                        if w != 0.0 {
                            loss += w * t.loss;
                            axpy(w, &t.grad, &mut g);
                        }
                    }
                }
                grads.push(g);
            }
        }
        LossKind::Legacy => {
            let w = 1.0 / n as f64;
            for (p, b) in probs.iter().zip(buckets) {
                let (l, mut g) = legacy_sample_loss(p, *b)?;
                loss += w * l;
                g.iter_mut().for_each(|v| *v *= w);
                grads.push(g);
            }
        }
    }
    Ok((loss, grads))
}

/// Validation ANLP and MAE over rows with a known winning price.
pub fn validation_metrics<L: Landscape + ?Sized>(model: &L, val: &Dataset) -> Result<(f64, f64)> {
    let rows: Vec<(&EncodedSample, f64)> = val
        .observations
        .iter()
        .filter_map(|o| o.true_winning_price().map(|z| (&o.sample, z)))
        .collect();
    if rows.is_empty() {
        return Err(Error::config("validation set has no known winning prices"));
    }
    let dists = rows
        .iter()
        .map(|(s, _)| model.distribution(s))
        .collect::<Result<Vec<_>>>()?;
    let truths: Vec<f64> = rows.iter().map(|(_, z)| *z).collect();
    let grid = model.grid();
    let anlp = evalkit::anlp_of(&dists, &truths, grid)?;
    let preds = dists
        .iter()
        .map(|d| evalkit::point_prediction(d, grid))
        .collect::<Result<Vec<_>>>()?;
    Ok((anlp, evalkit::mae(&preds, &truths)?))
}

/// Trains any [`TrainableModel`] in place and returns the best-epoch copy.
pub fn train_model<M: TrainableModel>(
    mut model: M,
    train: &Dataset,
    val: &Dataset,
    cfg: &TrainConfig,
) -> Result<(M, TrainReport)> {
    train_model_with(&mut model, train, val, cfg, |_| {})
}

/// As [`train_model`], calling `on_epoch` after each completed epoch.
pub fn train_model_with<M: TrainableModel>(
    model: &mut M,
    train: &Dataset,
    val: &Dataset,
    cfg: &TrainConfig,
    mut on_epoch: impl FnMut(&EpochRecord),
) -> Result<(M, TrainReport)> {
    cfg.validate()?;
    if train.is_empty() {
        return Err(Error::config("empty training set"));
    }
    let grid = *model.grid();
    let visible: Vec<usize> = (0..train.len())
        .filter(|&i| cfg.loss_kind != LossKind::WinOnly || train.observations[i].is_won())
        .collect();
    if visible.is_empty() {
        return Err(Error::config("no training observations usable by this loss"));
    }
    if cfg.loss_kind != LossKind::WinOnly && train.lost_count() == 0 {
        return Err(Error::config("censored losses need at least one lost observation"));
    }
    let buckets: Vec<Option<ObservationBuckets>> = (0..train.len())
        .map(|i| {
            if visible.binary_search(&i).is_ok() {
                observation_buckets(&train.observations[i], &grid).map(Some)
            } else {
                Ok(None)
            }
        })
        .collect::<Result<_>>()?;

    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed ^ 0x005e_ed0f_5a17);
    let mut state = OptimizerState::new(model.params());
    let mut grads = model.zero_grads();
    let mut order = visible.clone();
    let mut report = TrainReport {
        epochs: Vec::new(),
        best_epoch: 0,
        gradient_samples: GradientSampleCounts::default(),
    };
    let mut best: Option<(f64, M)> = None;
    let mut since_best = 0;

    for epoch in 1..=cfg.max_epochs {
        let started = Instant::now();
        order.shuffle(&mut rng);
        let mut loss_sum = 0.0;
        let mut batches = 0usize;
        for (b, chunk) in order.chunks(cfg.batch_size).enumerate() {
            let mut probs = Vec::with_capacity(chunk.len());
            let mut caches = Vec::with_capacity(chunk.len());
            let mut chunk_buckets = Vec::with_capacity(chunk.len());
            for &i in chunk {
                let obs = &train.observations[i];
                let (p, c) = model.forward_cached(&obs.sample).map_err(|e| context(e, epoch, b))?;
                probs.push(p);
                caches.push(c);
                let bk = buckets[i].expect("visible observation has buckets");
                if obs.is_won() {
                    report.gradient_samples.won += 1;
                } else {
                    report.gradient_samples.lost += 1;
                }
                chunk_buckets.push(bk);
            }
            let (loss, sample_grads) = batch_objective(&probs, &chunk_buckets, cfg)?;
            if !loss.is_finite() {
                return Err(Error::numeric(format!("epoch {epoch} batch {b}"), "non-finite loss"));
            }
            for s in grads.slices_mut() {
                s.iter_mut().for_each(|v| *v = 0.0);
            }
            for (cache, g) in caches.iter().zip(&sample_grads) {
                model.accumulate_grads(cache, g, 1.0, &mut grads)?;
            }
            adam_step(
                model.params_mut(),
                &grads,
                &mut state,
                cfg.learning_rate,
                (cfg.beta1, cfg.beta2, cfg.epsilon),
            )
            .map_err(|e| context(e, epoch, b))?;
            loss_sum += loss;
            batches += 1;
        }
        let (val_anlp, val_mae) = validation_metrics(&*model, val)?;
        let record = EpochRecord {
            epoch,
            train_loss: loss_sum / batches as f64,
            val_anlp,
            val_mae,
            seconds: started.elapsed().as_secs_f64(),
        };
        on_epoch(&record);
        report.epochs.push(record);

        let improved = best.as_ref().is_none_or(|(a, _)| val_anlp < *a);
        if improved {
            best = Some((val_anlp, model.clone()));
            report.best_epoch = epoch;
            since_best = 0;
        } else {
            since_best += 1;
            if since_best >= cfg.patience {
                break;
            }
        }
    }
    let (_, best_model) = best.expect("at least one epoch ran");
    Ok((best_model, report))
}

fn context(e: Error, epoch: usize, batch: usize) -> Error {
    match e {
        Error::Numeric { location, message } => Error::numeric(
            format!("epoch {epoch} batch {batch}: {location}"),
            message,
        ),
        other => other,
    }
}

/// Initializes a landscape network from the training schema and trains it.
pub fn train(
    train: &Dataset,
    val: &Dataset,
    net: NetConfig,
    cfg: &TrainConfig,
) -> Result<(ModelParams, TrainReport)> {
    if train.is_empty() {
        return Err(Error::config("empty training set"));
    }
    let model = init_params(train.schema.clone(), train.grid, net, cfg.seed)?;
    train_model(model, train, val, cfg)
}
