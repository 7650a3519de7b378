//! Property tests over the core types and metrics.

use bidscape::evalkit::{c_index_scores, mae, replay, tv_divergence};
use bidscape::features::{BidObservation, EncodedSample, Outcome};
use bidscape::nllloss::{lose_zone, nll_sample_loss, win_zone, zone_loss_grad, LossConfig, ObservationBuckets, Zone};
use bidscape::pricegrid::{scale_price, unscale_price, BucketDistribution, PriceGrid};
use proptest::prelude::*;

const CASES: u32 = 10_000;

fn config() -> ProptestConfig {
    ProptestConfig {
        cases: CASES,
        failure_persistence: None,
        ..ProptestConfig::default()
    }
}

fn weights(n: impl Into<proptest::collection::SizeRange>) -> impl Strategy<Value = Vec<f64>> {
    proptest::collection::vec(0.0f64..10.0, n).prop_filter("positive mass", |w| w.iter().sum::<f64>() > 1e-6)
}

fn distribution(n: usize) -> impl Strategy<Value = BucketDistribution> {
    weights(n).prop_map(|w| BucketDistribution::from_weights(w).unwrap())
}

fn loss_config() -> impl Strategy<Value = LossConfig> {
    (0.0f64..=1.0, 0.0f64..=1.0, 0.0f64..3.0, 0.0f64..3.0, 1usize..100).prop_map(|(alpha, beta, l, r, d)| LossConfig {
        alpha,
        beta,
        r_win_l: l,
        r_win_r: r,
        delta_lose: d,
    })
}

fn empty_sample() -> EncodedSample {
    EncodedSample {
        cat_indices: vec![],
        num_values: vec![],
    }
}

proptest! {
    #![proptest_config(config())]

    #[test]
    fn distributions_are_normalized_with_monotone_cdf(w in weights(1..100)) {
        let d = BucketDistribution::from_weights(w).unwrap();
        prop_assert!((d.total_mass() - 1.0).abs() <= 1e-9);
        let cdf = d.cdf();
        prop_assert!(cdf.windows(2).all(|p| p[0] <= p[1]));
        prop_assert!((cdf[cdf.len() - 1] - 1.0).abs() <= 1e-9);
        for (i, c) in cdf.iter().enumerate() {
            prop_assert_eq!(d.winning_rate(i).unwrap(), *c);
        }
        prop_assert!(d.winning_rate(d.len()).is_err());
        prop_assert!(d.entropy() >= -1e-12 && d.entropy() <= (d.len() as f64).ln() + 1e-9);
    }

    #[test]
    fn prices_bucket_into_their_interval(raw in 1e-4f64..1e3, duration in 1.0f64..120.0) {
        let grid = PriceGrid::default();
        let scaled = scale_price(raw, duration).unwrap();
        prop_assert!((unscale_price(scaled, duration) - raw).abs() <= 1e-9 * raw.max(1.0));
        let i = grid.bucket_of(scaled).unwrap();
        prop_assert!(i < grid.n_buckets());
        let (lo, hi) = grid.edges(i);
        if scaled >= grid.lower() && scaled < grid.upper() {
            prop_assert!(lo <= scaled + 1e-12 && scaled < hi + 1e-12);
        }
    }

    #[test]
    fn won_and_lost_orderings_are_enforced(b in -3.0f64..4.0, gap in 1e-6f64..2.0) {
        let accepts = |outcome| BidObservation::new(empty_sample(), b, outcome).is_ok();
        let (below, above) = (b - gap, b + gap);
        let won_below = Outcome::Won { winning_scaled: below };
        let won_at = Outcome::Won { winning_scaled: b };
        let won_above = Outcome::Won { winning_scaled: above };
        let lost_above = Outcome::Lost { hidden_winning_scaled: Some(above) };
        let lost_below = Outcome::Lost { hidden_winning_scaled: Some(below) };
        let lost_hidden = Outcome::Lost { hidden_winning_scaled: None };
        prop_assert!(accepts(won_below) && accepts(won_at) && !accepts(won_above));
        prop_assert!(accepts(lost_above) && !accepts(lost_below) && accepts(lost_hidden));
    }

    #[test]
    fn zones_stay_in_bounds(n in 1usize..120, a in 0usize..120, b in 0usize..120, cfg in loss_config()) {
        let (i_z, i_b) = ((a.min(b)) % n, (a.max(b)) % n);
        let (i_z, i_b) = (i_z.min(i_b), i_z.max(i_b));
        let w = win_zone(i_z, i_b, &cfg, n).unwrap();
        prop_assert!(w.lo <= i_z && i_z <= w.hi && w.hi < n);
        if i_z < i_b {
            prop_assert!(win_zone(i_b, i_z, &cfg, n).is_err());
        }
        let l = lose_zone(i_b, &cfg, n).unwrap();
        prop_assert!(l.lo <= l.hi && l.hi < n);
        prop_assert!(l.lo > i_b || i_b == n - 1);
        prop_assert!(l.len() <= cfg.delta_lose);
    }

    #[test]
    fn zone_loss_is_nonnegative_with_zero_sum_gradient(d in distribution(70), a in 0usize..70, b in 0usize..70) {
        let zone = Zone::new(a.min(b), a.max(b), 70).unwrap();
        let (loss, grad) = zone_loss_grad(&d, zone);
        prop_assert!(loss >= 0.0 && loss.is_finite());
        prop_assert!(grad.iter().sum::<f64>().abs() <= 1e-10);
        // promoting the zone means pushing its logits up and the rest down
        for (j, g) in grad.iter().enumerate() {
            if zone.contains(j) { prop_assert!(*g <= 1e-15) } else { prop_assert!(*g >= 0.0) }
        }
    }

    #[test]
    fn sample_loss_is_finite_and_nonnegative(d in distribution(70), a in 0usize..70, b in 0usize..70, won: bool, cfg in loss_config()) {
        let obs = if won {
            ObservationBuckets::Won { winning: a.min(b), bid: a.max(b) }
        } else {
            ObservationBuckets::Lost { bid: a }
        };
        let s = nll_sample_loss(&d, obs, &cfg).unwrap();
        prop_assert!(s.contribution >= 0.0 && s.contribution.is_finite());
        prop_assert!(s.dl_dlogits.iter().sum::<f64>().abs() <= 1e-10);
        prop_assert_eq!(s.l3.is_some(), !won);
    }

    #[test]
    fn c_index_is_rank_based(
        rows in proptest::collection::vec((-5.0f64..5.0, any::<bool>()), 2..60)
            .prop_filter("both classes", |r| r.iter().any(|x| x.1) && r.iter().any(|x| !x.1)),
        shift in -3.0f64..3.0,
        scale in 0.1f64..4.0,
    ) {
        let scores: Vec<f64> = rows.iter().map(|r| r.0).collect();
        let won: Vec<bool> = rows.iter().map(|r| r.1).collect();
        let c = c_index_scores(&scores, &won).unwrap();
        prop_assert!((0.0..=1.0).contains(&c));
        // any strictly increasing transform keeps the value
        let moved: Vec<f64> = scores.iter().map(|s| (s * scale + shift).exp()).collect();
        prop_assert!((c_index_scores(&moved, &won).unwrap() - c).abs() <= 1e-12);
        // reversing the order mirrors it
        let flipped: Vec<f64> = scores.iter().map(|s| -s).collect();
        prop_assert!((c_index_scores(&flipped, &won).unwrap() - (1.0 - c)).abs() <= 1e-12);
    }

    #[test]
    fn higher_bids_never_win_less(
        rows in proptest::collection::vec((-3.0f64..4.0, -3.0f64..4.0), 1..80),
        raise in 0.0f64..2.0,
    ) {
        let bids: Vec<f64> = rows.iter().map(|r| r.0).collect();
        let truths: Vec<f64> = rows.iter().map(|r| r.1).collect();
        let raised: Vec<f64> = bids.iter().map(|b| b + raise).collect();
        let base = replay(&bids, &truths).unwrap();
        let more = replay(&raised, &truths).unwrap();
        prop_assert!(more.wins >= base.wins);
        prop_assert!(base.wins as usize <= bids.len());
        if base.wins == 0 { prop_assert_eq!(base.value, 0.0) }
        prop_assert!(mae(&bids, &truths).unwrap() >= 0.0);
        prop_assert_eq!(mae(&truths, &truths).unwrap(), 0.0);
    }

    #[test]
    fn total_variation_is_a_metric(p in distribution(30), q in distribution(30), r in distribution(30)) {
        let pq = tv_divergence(&p, &q).unwrap();
        prop_assert!((0.0..=1.0 + 1e-12).contains(&pq));
        prop_assert!((pq - tv_divergence(&q, &p).unwrap()).abs() <= 1e-15);
        prop_assert!(tv_divergence(&p, &p).unwrap() == 0.0);
        prop_assert!(pq <= tv_divergence(&p, &r).unwrap() + tv_divergence(&r, &q).unwrap() + 1e-12);
    }
}
