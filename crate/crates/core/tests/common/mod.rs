//! Helpers shared by the integration test targets.

#![allow(dead_code)]

use std::sync::Arc;

use bidscape::admnet::{init_params, InteractionKind, ModelParams, NetConfig};
use bidscape::features::{build_schema, EncodedSample, FeatureSchema, FieldDecl, FieldGroup, RawRecord};
use bidscape::nllloss::{legacy_sample_loss, nll_sample_loss, LossConfig, ObservationBuckets};
use bidscape::pricegrid::{BucketDistribution, PriceGrid};
use bidscape::synthgen::{MixtureSpec, SynthConfig};
use bidscape::trainer::{LossKind, ParamSet};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Schema with `cats` categorical fields of `card` observed values each and
/// `nums` numeric fields.
pub fn schema(cats: usize, card: usize, nums: usize) -> Arc<FeatureSchema> {
    let mut fields = Vec::new();
    for i in 0..cats {
        fields.push(FieldDecl::cat(&format!("c{i}"), FieldGroup::User));
    }
    for i in 0..nums {
        fields.push(FieldDecl::num(&format!("n{i}"), FieldGroup::Context));
    }
    let records: Vec<RawRecord> = (0..card)
        .map(|v| fields.iter().map(|f| (f.name.clone(), format!("{v}"))).collect())
        .collect();
    Arc::new(build_schema(&records, &fields).unwrap())
}

pub fn random_sample(schema: &FeatureSchema, rng: &mut impl Rng) -> EncodedSample {
    EncodedSample {
        cat_indices: schema
            .categorical
            .iter()
            .map(|f| rng.random_range(0..f.vocab_size()))
            .collect(),
        num_values: schema.numeric.iter().map(|_| rng.random_range(0.0..1.0)).collect(),
    }
}

pub fn random_observation(n: usize, won: bool, rng: &mut impl Rng) -> ObservationBuckets {
    if won {
        let bid = rng.random_range(0..n);
        ObservationBuckets::Won {
            winning: rng.random_range(0..=bid),
            bid,
        }
    } else {
        ObservationBuckets::Lost {
            bid: rng.random_range(0..n),
        }
    }
}

/// Per-sample loss and logit gradient for one objective.
pub fn sample_loss(
    kind: LossKind,
    probs: &BucketDistribution,
    obs: ObservationBuckets,
    cfg: &LossConfig,
) -> (f64, Vec<f64>) {
    match kind {
        LossKind::Nll => {
            let s = nll_sample_loss(probs, obs, cfg).unwrap();
            (s.contribution, s.dl_dlogits)
        }
        LossKind::WinOnly => {
            let only_exact = LossConfig { alpha: 1.0, ..*cfg };
            let s = nll_sample_loss(probs, obs, &only_exact).unwrap();
            (s.contribution, s.dl_dlogits)
        }
        LossKind::Legacy => legacy_sample_loss(probs, obs).unwrap(),
    }
}

/// A random network, sample, observation and objective.
pub struct GradCase {
    pub model: ModelParams,
    pub sample: EncodedSample,
    pub obs: ObservationBuckets,
    pub kind: LossKind,
    pub cfg: LossConfig,
}

pub fn random_grad_case(rng: &mut ChaCha8Rng) -> GradCase {
    loop {
        let s = schema(
            rng.random_range(1..4),
            rng.random_range(2..12),
            rng.random_range(0..6),
        );
        let net = NetConfig {
            interaction: [InteractionKind::None, InteractionKind::Fm, InteractionKind::InnerProduct]
                [rng.random_range(0..3)],
            layers: rng.random_range(1..4),
            interaction_dim: rng.random_range(2..6),
            head_bias: rng.random_bool(0.5),
        };
        let grid = PriceGrid::default();
        let Ok(mut model) = init_params(s.clone(), grid, net, rng.random()) else {
            continue;
        };
        // spread the weights so every layer carries real signal
        for slice in model.tensors.slices_mut() {
            for v in slice.iter_mut() {
                *v += rng.random_range(-0.3..0.3);
            }
        }
        let kind = [LossKind::Nll, LossKind::Legacy, LossKind::WinOnly][rng.random_range(0..3)];
        let won = kind == LossKind::WinOnly || rng.random_bool(0.5);
        let cfg = LossConfig {
            alpha: rng.random_range(0.0..1.0),
            beta: rng.random_range(0.0..1.0),
            r_win_l: rng.random_range(0.0..2.0),
            r_win_r: rng.random_range(0.0..2.0),
            delta_lose: rng.random_range(1..71),
        };
        return GradCase {
            sample: random_sample(&s, rng),
            obs: random_observation(grid.n_buckets(), won, rng),
            model,
            kind,
            cfg,
        };
    }
}

fn relu_mask(model: &ModelParams, sample: &EncodedSample) -> Vec<bool> {
    let (_, cache) = model.forward(sample).unwrap();
    cache.pre_activations.iter().flatten().map(|v| *v > 0.0).collect()
}

fn case_loss(case: &GradCase, model: &ModelParams) -> f64 {
    let (probs, _) = model.forward(&case.sample).unwrap();
    sample_loss(case.kind, &probs, case.obs, &case.cfg).0
}

pub struct GradCheck {
    pub max_rel_error: f64,
    pub checked: usize,
    pub skipped_at_kinks: usize,
}

/// Central finite differences against the analytic backward pass over
/// every parameter. Coordinates whose perturbation flips a ReLU are
/// skipped, since the loss is not differentiable there.
pub fn check_gradients(case: &GradCase, h: f64) -> GradCheck {
    let (probs, cache) = case.model.forward(&case.sample).unwrap();
    let (_, dl) = sample_loss(case.kind, &probs, case.obs, &case.cfg);
    let grads = case.model.backward(&cache, &dl).unwrap();
    let analytic: Vec<f64> = grads.slices().into_iter().flatten().copied().collect();
    let base_mask = relu_mask(&case.model, &case.sample);

    let mut probe = case.model.clone();
    let mut out = GradCheck {
        max_rel_error: 0.0,
        checked: 0,
        skipped_at_kinks: 0,
    };
    let mut flat = 0;
    let n_slices = probe.tensors.slices().len();
    for si in 0..n_slices {
        let len = probe.tensors.slices()[si].len();
        for k in 0..len {
            let original = probe.tensors.slices()[si][k];
            probe.tensors.slices_mut()[si][k] = original + h;
            let plus = case_loss(case, &probe);
            let plus_mask = relu_mask(&probe, &case.sample);
            probe.tensors.slices_mut()[si][k] = original - h;
            let minus = case_loss(case, &probe);
            let minus_mask = relu_mask(&probe, &case.sample);
            probe.tensors.slices_mut()[si][k] = original;

            if plus_mask != base_mask || minus_mask != base_mask {
                out.skipped_at_kinks += 1;
            } else {
                let numeric = (plus - minus) / (2.0 * h);
                let a = analytic[flat];
                let rel = (a - numeric).abs() / a.abs().max(numeric.abs()).max(1e-6);
                out.max_rel_error = out.max_rel_error.max(rel);
                out.checked += 1;
            }
            flat += 1;
        }
    }
    out
}

/// Three contexts with bimodal winning prices whose low modes sit
/// close to the typical bid, so censoring hides much of each upper mode.
pub fn censored_world() -> SynthConfig {
    SynthConfig {
        n_contexts: 3,
        bid_noise_std: 0.2,
        bid_anchor_pull: 0.25,
        seed: 7,
        mixtures: vec![
            MixtureSpec::bimodal((1.0, 0.3), (1.8, 0.2), 0.4),
            MixtureSpec::bimodal((1.6, 0.3), (2.4, 0.2), 0.4),
            MixtureSpec::bimodal((0.4, 0.3), (1.2, 0.2), 0.4),
        ],
        ..SynthConfig::default()
    }
}

/// Narrow, well-separated contexts whose bids scatter around the context
/// mean independently of the winning price, so the predicted winning rate
/// at the bid is highly informative about the outcome.
pub fn strong_signal_world() -> SynthConfig {
    SynthConfig {
        n_contexts: 3,
        bid_noise_std: 0.5,
        bid_anchor_pull: 1.0,
        seed: 7,
        mixtures: vec![
            MixtureSpec::bimodal((0.9, 0.1), (1.1, 0.1), 0.5),
            MixtureSpec::bimodal((1.9, 0.1), (2.1, 0.1), 0.5),
            MixtureSpec::bimodal((-0.1, 0.1), (0.1, 0.1), 0.5),
        ],
        ..SynthConfig::default()
    }
}

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}
