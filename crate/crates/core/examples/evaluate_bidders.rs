// Comparing a trained landscape with naive and Gaussian-linear baselines.

use bidscape::admnet::NetConfig;
use bidscape::evalkit::{
    baseline_avg, baseline_frq, baseline_gaussian_linear, baseline_rdm, evaluate_landscape, evaluate_point,
    ContextOracle, EvalOptions,
};
use bidscape::synthgen::{build_world, SynthConfig};
use bidscape::trainer::{train, TrainConfig};

pub fn run_example() -> anyhow::Result<()> {
    let world = build_world(&SynthConfig {
        n_contexts: 2,
        bid_anchor_pull: 0.25,
        n_extra_noise_features: 2,
        seed: 9,
        ..SynthConfig::default()
    })?;
    let train_set = world.to_dataset(&world.sample_auctions(5_000, 1), None)?;
    let schema = Some(train_set.schema.clone());
    let val_set = world.to_dataset(&world.sample_auctions(1_000, 2), schema.clone())?;
    let test_set = world.to_dataset(&world.sample_auctions(2_000, 3), schema)?;
    let oracle = ContextOracle::new(&train_set.schema, &world.oracle())?;
    let opts = EvalOptions {
        raw_currency: true,
        ..EvalOptions::default()
    };

    let cfg = TrainConfig {
        max_epochs: 3,
        learning_rate: 0.003,
        ..TrainConfig::default()
    };
    let (model, _) = train(&train_set, &val_set, NetConfig::default(), &cfg)?;
    let (gaussian, _) = baseline_gaussian_linear(&train_set, &val_set, 0.5, &TrainConfig { learning_rate: 0.01, ..cfg })?;

    let results = vec![
        evaluate_landscape("adm", &model, &test_set, Some(&oracle), &opts)?,
        evaluate_landscape("gaussian", &gaussian, &test_set, Some(&oracle), &opts)?,
        evaluate_landscape("oracle", &oracle, &test_set, Some(&oracle), &opts)?,
        evaluate_point("avg", &mut baseline_avg(&train_set)?, &test_set, &opts)?,
        evaluate_point("frq", &mut baseline_frq(&train_set, 1)?, &test_set, &opts)?,
        evaluate_point("rdm", &mut baseline_rdm(train_set.grid, 1), &test_set, &opts)?,
    ];
    for r in &results {
        println!("{}", serde_json::to_string(r)?);
    }
    assert_eq!(results[2].tv_divergence, Some(0.0));
    Ok(())
}

#[allow(dead_code)]
fn main() -> anyhow::Result<()> {
    run_example()
}
