// Generating censored auctions from a world with known landscapes.

use bidscape::synthgen::{build_world, MixtureSpec, SynthConfig};

pub fn run_example() -> anyhow::Result<()> {
    let config = SynthConfig {
        mixtures: vec![
            MixtureSpec::bimodal((0.4, 0.3), (1.2, 0.2), 0.4),
            MixtureSpec::bimodal((1.0, 0.3), (1.8, 0.2), 0.4),
        ],
        n_contexts: 2,
        bid_anchor_pull: 0.25,
        n_extra_noise_features: 4,
        seed: 3,
        ..SynthConfig::default()
    };
    let world = build_world(&config)?;
    for c in &world.contexts {
        println!(
            "context {}: mean {:.2}, entropy {:.3} nats",
            c.id,
            c.mixture.mean(),
            world.true_entropy(c.id)?
        );
    }

    let auctions = world.sample_auctions(20_000, 11);
    let won = auctions.iter().filter(|a| a.won()).count();
    println!("{won} of {} auctions won", auctions.len());

    // losses keep the hidden winning price for evaluation only
    let lost = auctions.iter().find(|a| !a.won()).expect("some auction is lost");
    assert!(lost.bid_scaled < lost.winning_scaled);

    let data = world.to_dataset(&auctions, None)?;
    println!("dataset: {} won / {} lost", data.won_count(), data.lost_count());
    let oracle = world.oracle();
    assert_eq!(oracle.contexts.len(), 2);
    Ok(())
}

#[allow(dead_code)]
fn main() -> anyhow::Result<()> {
    run_example()
}
