// Sweeping the lose-neighborhood width and writing the result table.

use bidscape::admnet::NetConfig;
use bidscape::evalkit::{sweep, write_sweep_csv, EvalOptions, SweepAxis};
use bidscape::synthgen::{build_world, SynthConfig};
use bidscape::trainer::TrainConfig;

pub fn run_example() -> anyhow::Result<()> {
    let world = build_world(&SynthConfig {
        n_contexts: 2,
        bid_anchor_pull: 0.25,
        n_extra_noise_features: 2,
        seed: 2,
        ..SynthConfig::default()
    })?;
    let train_set = world.to_dataset(&world.sample_auctions(3_000, 1), None)?;
    let schema = Some(train_set.schema.clone());
    let val_set = world.to_dataset(&world.sample_auctions(500, 2), schema.clone())?;
    let test_set = world.to_dataset(&world.sample_auctions(1_000, 3), schema)?;

    let cfg = TrainConfig {
        max_epochs: 2,
        learning_rate: 0.003,
        ..TrainConfig::default()
    };
    let rows = sweep(
        SweepAxis::DeltaLose,
        &[1.0, 20.0, 40.0, 70.0],
        NetConfig::default(),
        &cfg,
        &train_set,
        &val_set,
        &test_set,
        None,
        &EvalOptions::default(),
    )?;
    let mut csv = Vec::new();
    write_sweep_csv(&rows, &mut csv)?;
    print!("{}", String::from_utf8(csv)?);
    assert_eq!(rows.len(), 4);
    Ok(())
}

#[allow(dead_code)]
fn main() -> anyhow::Result<()> {
    run_example()
}
