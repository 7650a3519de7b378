// The neighborhood likelihood loss on won and lost observations, next to
// the legacy censored loss.

use bidscape::nllloss::{legacy_sample_loss, lose_zone, nll_sample_loss, win_zone, LossConfig, ObservationBuckets};
use bidscape::pricegrid::BucketDistribution;

pub fn run_example() -> anyhow::Result<()> {
    let cfg = LossConfig::default();
    let probs = BucketDistribution::uniform(70);

    let won = ObservationBuckets::Won { winning: 30, bid: 33 };
    println!("win zone {:?}", win_zone(30, 33, &cfg, 70)?);
    let s = nll_sample_loss(&probs, won, &cfg)?;
    println!("won: exact {:.5}, neighborhood {:.5}, merged {:.5}", s.l1.unwrap(), s.l2.unwrap(), s.contribution);
    assert!((s.contribution - 2.32336).abs() < 1e-5);

    let lost = ObservationBuckets::Lost { bid: 20 };
    println!("lose zone {:?}", lose_zone(20, &cfg, 70)?);
    let s = nll_sample_loss(&probs, lost, &cfg)?;
    println!("lost: neighborhood {:.5}, merged {:.5}", s.l3.unwrap(), s.contribution);

    // gradients with respect to logits always sum to zero
    assert!(s.dl_dlogits.iter().sum::<f64>().abs() < 1e-12);

    let (legacy, _) = legacy_sample_loss(&probs, ObservationBuckets::Won { winning: 30, bid: 34 })?;
    println!("legacy won loss {legacy:.5}");
    Ok(())
}

#[allow(dead_code)]
fn main() -> anyhow::Result<()> {
    run_example()
}
