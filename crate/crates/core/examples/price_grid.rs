// Bucketizing scaled prices and reading winning rates off a distribution.

use bidscape::pricegrid::{make_grid, scale_price, unscale_price, BucketDistribution};

pub fn run_example() -> anyhow::Result<()> {
    let grid = make_grid(-3.0, 4.0, 0.1)?;
    println!("{} buckets of width {}", grid.n_buckets(), grid.width());

    // a 2.5 currency-unit price for a 30-second slot
    let scaled = scale_price(2.5, 30.0)?;
    let bucket = grid.bucket_of(scaled)?;
    println!("scaled {scaled:.4} -> bucket {bucket} (midpoint {:.2})", grid.midpoint(bucket)?);
    assert!((unscale_price(scaled, 30.0) - 2.5).abs() < 1e-12);

    // prices beyond the grid clamp to the edge buckets
    assert_eq!(grid.bucket_of(-10.0)?, 0);
    assert_eq!(grid.bucket_of(10.0)?, grid.n_buckets() - 1);

    let weights: Vec<f64> = (0..grid.n_buckets()).map(|i| (-((i as f64 - 30.0) / 5.0).powi(2)).exp()).collect();
    let dist = BucketDistribution::from_weights(weights)?;
    for bid_bucket in [25, 30, 35] {
        println!("winning rate at bucket {bid_bucket}: {:.3}", dist.winning_rate(bid_bucket)?);
    }
    println!("entropy {:.3} nats, argmax bucket {}", dist.entropy(), dist.argmax());
    assert!((dist.total_mass() - 1.0).abs() < 1e-9);
    Ok(())
}

#[allow(dead_code)]
fn main() -> anyhow::Result<()> {
    run_example()
}
