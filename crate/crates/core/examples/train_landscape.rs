// Training a landscape network with the neighborhood loss and early
// stopping on validation ANLP.

use bidscape::admnet::NetConfig;
use bidscape::synthgen::{build_world, SynthConfig};
use bidscape::trainer::{train, TrainConfig};

pub fn run_example() -> anyhow::Result<()> {
    let world = build_world(&SynthConfig {
        n_contexts: 2,
        bid_anchor_pull: 0.25,
        n_extra_noise_features: 4,
        seed: 5,
        ..SynthConfig::default()
    })?;
    let train_set = world.to_dataset(&world.sample_auctions(6_000, 1), None)?;
    let val_set = world.to_dataset(&world.sample_auctions(1_000, 2), Some(train_set.schema.clone()))?;

    let cfg = TrainConfig {
        max_epochs: 4,
        learning_rate: 0.003,
        ..TrainConfig::default()
    };
    let (model, report) = train(&train_set, &val_set, NetConfig::default(), &cfg)?;
    for e in &report.epochs {
        println!(
            "epoch {}: train loss {:.4}, val ANLP {:.4}, val MAE {:.4}",
            e.epoch, e.train_loss, e.val_anlp, e.val_mae
        );
    }
    println!("best epoch {}", report.best_epoch);
    assert!(report.best().val_anlp <= report.epochs[0].val_anlp);
    assert!(model.tensors.all_finite());
    Ok(())
}

#[allow(dead_code)]
fn main() -> anyhow::Result<()> {
    run_example()
}
