// Forward and backward passes of the landscape network and a checkpoint
// round trip.

use bidscape::admnet::{init_params, read_checkpoint_bytes, write_checkpoint_bytes, InteractionKind, NetConfig};
use bidscape::nllloss::{nll_sample_loss, LossConfig, ObservationBuckets};
use bidscape::synthgen::{build_world, SynthConfig};
use bidscape::trainer::ParamSet;

pub fn run_example() -> anyhow::Result<()> {
    let world = build_world(&SynthConfig::default())?;
    let data = world.to_dataset(&world.sample_auctions(2_000, 1), None)?;
    let net = NetConfig {
        interaction: InteractionKind::Fm,
        ..NetConfig::default()
    };
    let model = init_params(data.schema.clone(), data.grid, net, 42)?;
    println!(
        "first-order width {}, {} parameters",
        model.first_order_width(),
        model.parameter_count()
    );

    let obs = &data.observations[0];
    let (probs, cache) = model.forward(&obs.sample)?;
    println!("argmax bucket {}, entropy {:.3}", probs.argmax(), probs.entropy());

    let bid = data.grid.bucket_of(obs.bid_scaled)?;
    let buckets = match obs.observed_winning_price() {
        Some(z) => ObservationBuckets::Won { winning: data.grid.bucket_of(z)?, bid },
        None => ObservationBuckets::Lost { bid },
    };
    let loss = nll_sample_loss(&probs, buckets, &LossConfig::default())?;
    let grads = model.backward(&cache, &loss.dl_dlogits)?;
    let norm: f64 = grads.slices().iter().flat_map(|s| s.iter()).map(|g| g * g).sum::<f64>().sqrt();
    println!("loss {:.4}, gradient norm {norm:.4}", loss.contribution);

    let bytes = write_checkpoint_bytes(&model)?;
    let restored = read_checkpoint_bytes(&bytes)?;
    assert_eq!(restored, model);
    println!("checkpoint: {} bytes", bytes.len());
    Ok(())
}

#[allow(dead_code)]
fn main() -> anyhow::Result<()> {
    run_example()
}
