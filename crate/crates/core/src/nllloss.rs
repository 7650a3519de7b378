//! Neighborhood likelihood loss.
//!
//! Every term has the same shape: the negative log of the probability mass
//! a distribution puts on a contiguous range of buckets (a [`Zone`]). For a
//! won auction the exact winning bucket and a neighborhood around it whose
//! breadth scales with the bid/price gap are promoted; for a lost auction a
//! fixed-breadth neighborhood just above the bid is promoted.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::pricegrid::BucketDistribution;

/// Probabilities are clamped here before taking logs.
pub const PROB_FLOOR: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LossConfig {
    pub alpha: f64,
    pub beta: f64,
    pub r_win_l: f64,
    pub r_win_r: f64,
    pub delta_lose: usize,
}

impl Default for LossConfig {
    fn default() -> Self {
        LossConfig {
            alpha: 0.2,
            beta: 0.8,
            r_win_l: 1.0,
            r_win_r: 1.0,
            delta_lose: 40,
        }
    }
}

impl LossConfig {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.alpha) || !(0.0..=1.0).contains(&self.beta) {
            return Err(Error::config("alpha and beta must lie in [0, 1]"));
        }
        if !(self.r_win_l >= 0.0 && self.r_win_r >= 0.0)
            || !self.r_win_l.is_finite()
            || !self.r_win_r.is_finite()
        {
            return Err(Error::config("zone ratios must be non-negative"));
        }
        if self.delta_lose == 0 {
            return Err(Error::config("delta_lose must be at least one bucket"));
        }
        Ok(())
    }
}

/// Inclusive bucket range `[lo, hi]`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Zone {
    pub lo: usize,
    pub hi: usize,
}

impl Zone {
    pub fn new(lo: usize, hi: usize, n: usize) -> Result<Self> {
        if lo > hi || hi >= n {
            return Err(Error::logic(format!("invalid zone [{lo}, {hi}] for {n} buckets")));
        }
        Ok(Zone { lo, hi })
    }

    pub fn len(&self) -> usize {
        self.hi - self.lo + 1
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn contains(&self, i: usize) -> bool {
        (self.lo..=self.hi).contains(&i)
    }
}

/// Neighborhood of a won auction's winning bucket, `r·δ` buckets each side
/// where `δ = i_b − i_z`.
pub fn win_zone(i_z: usize, i_b: usize, cfg: &LossConfig, n: usize) -> Result<Zone> {
    if i_z > i_b {
        return Err(Error::data(format!(
            "winning bucket {i_z} above bid bucket {i_b} on a won auction"
        )));
    }
    if i_b >= n {
        return Err(Error::logic(format!("bucket {i_b} out of range for {n} buckets")));
    }
    let delta = (i_b - i_z) as f64;
    let left = (cfg.r_win_l * delta).round() as usize;
    let right = (cfg.r_win_r * delta).round() as usize;
    Ok(Zone {
        lo: i_z.saturating_sub(left),
        hi: i_z.saturating_add(right).min(n - 1),
    })
}

/// `delta_lose` buckets strictly above the bid; collapses to the top bucket
/// when the bid is already there.
pub fn lose_zone(i_b: usize, cfg: &LossConfig, n: usize) -> Result<Zone> {
    if i_b >= n {
        return Err(Error::logic(format!("bucket {i_b} out of range for {n} buckets")));
    }
    Ok(Zone {
        lo: (i_b + 1).min(n - 1),
        hi: i_b.saturating_add(cfg.delta_lose).min(n - 1),
    })
}

/// `L = −ln Σ_{zone} p` and its gradient with respect to the softmax
/// logits, `p_j − 1[j ∈ zone]·p_j / P_zone`.
pub fn zone_loss_grad(probs: &BucketDistribution, zone: Zone) -> (f64, Vec<f64>) {
    let p = probs.probs();
    debug_assert!(zone.hi < p.len());
    let mass: f64 = p[zone.lo..=zone.hi].iter().sum();
    // rounding can push a full-range sum a hair above one
    let loss = -mass.clamp(PROB_FLOOR, 1.0).ln();
    let mut grad = p.to_vec();
    if mass > 0.0 {
        for j in zone.lo..=zone.hi {
            grad[j] -= p[j] / mass;
        }
    } else {
        let share = 1.0 / zone.len() as f64;
        for g in &mut grad[zone.lo..=zone.hi] {
            *g -= share;
        }
    }
    (loss, grad)
}

/// Buckets an observation contributes to the loss.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ObservationBuckets {
    Won { winning: usize, bid: usize },
    Lost { bid: usize },
}

/// One loss term value and its logit gradient.
#[derive(Debug, Clone, PartialEq)]
pub struct Term {
    pub loss: f64,
    pub grad: Vec<f64>,
}

impl From<(f64, Vec<f64>)> for Term {
    fn from((loss, grad): (f64, Vec<f64>)) -> Self {
        Term { loss, grad }
    }
}

/// Unweighted per-sample terms: exact-bucket likelihood and win
/// neighborhood for wins, lose neighborhood for losses.
#[derive(Debug, Clone, PartialEq)]
pub struct NllTerms {
    pub l1: Option<Term>,
    pub l2: Option<Term>,
    pub l3: Option<Term>,
}

pub fn nll_terms(
    probs: &BucketDistribution,
    obs: ObservationBuckets,
    cfg: &LossConfig,
) -> Result<NllTerms> {
    let n = probs.len();
    match obs {
        ObservationBuckets::Won { winning, bid } => {
            let zone = win_zone(winning, bid, cfg, n)?;
            Ok(NllTerms {
                l1: Some(zone_loss_grad(probs, Zone::new(winning, winning, n)?).into()),
                l2: Some(zone_loss_grad(probs, zone).into()),
                l3: None,
            })
        }
        ObservationBuckets::Lost { bid } => Ok(NllTerms {
            l1: None,
            l2: None,
            l3: Some(zone_loss_grad(probs, lose_zone(bid, cfg, n)?).into()),
        }),
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct NllSample {
    pub l1: Option<f64>,
    pub l2: Option<f64>,
    pub l3: Option<f64>,
    /// `α·l1 + (1−α)·β·l2` for wins, `(1−α)·(1−β)·l3` for losses.
    pub contribution: f64,
    pub dl_dlogits: Vec<f64>,
}

pub fn nll_sample_loss(
    probs: &BucketDistribution,
    obs: ObservationBuckets,
    cfg: &LossConfig,
) -> Result<NllSample> {
    let terms = nll_terms(probs, obs, cfg)?;
    let weights = [
        cfg.alpha,
        (1.0 - cfg.alpha) * cfg.beta,
        (1.0 - cfg.alpha) * (1.0 - cfg.beta),
    ];
    let mut contribution = 0.0;
    let mut grad = vec![0.0; probs.len()];
    for (term, w) in [&terms.l1, &terms.l2, &terms.l3].into_iter().zip(weights) {
        if let Some(t) = term {
            contribution += w * t.loss;
            crate::linalg::axpy(w, &t.grad, &mut grad);
        }
    }
    Ok(NllSample {
        l1: terms.l1.map(|t| t.loss),
        l2: terms.l2.map(|t| t.loss),
        l3: terms.l3.map(|t| t.loss),
        contribution,
        dl_dlogits: grad,
    })
}

/// Censored likelihood with the full left tail: `−ln p_z − ln wr(b)` for
/// wins and `−ln(1 − wr(b))` for losses.
pub fn legacy_sample_loss(probs: &BucketDistribution, obs: ObservationBuckets) -> Result<(f64, Vec<f64>)> {
    let n = probs.len();
    match obs {
        ObservationBuckets::Won { winning, bid } => {
            if winning > bid {
                return Err(Error::data(format!(
                    "winning bucket {winning} above bid bucket {bid} on a won auction"
                )));
            }
            let (l_pdf, g_pdf) = zone_loss_grad(probs, Zone::new(winning, winning, n)?);
            let (l_cdf, g_cdf) = zone_loss_grad(probs, Zone::new(0, bid, n)?);
            let grad = g_pdf.iter().zip(&g_cdf).map(|(a, b)| a + b).collect();
            Ok((l_pdf + l_cdf, grad))
        }
        ObservationBuckets::Lost { bid } => {
            let zone = Zone::new((bid + 1).min(n - 1), n - 1, n)?;
            Ok(zone_loss_grad(probs, zone))
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const N: usize = 70;

    fn uniform() -> BucketDistribution {
        BucketDistribution::uniform(N)
    }

    #[test]
    fn defaults() {
        let c = LossConfig::default();
        assert_eq!((c.alpha, c.beta, c.r_win_l, c.r_win_r, c.delta_lose), (0.2, 0.8, 1.0, 1.0, 40));
        assert!(c.validate().is_ok());
        assert!(LossConfig { alpha: 1.5, ..c }.validate().is_err());
        assert!(LossConfig { delta_lose: 0, ..c }.validate().is_err());
        assert!(LossConfig { r_win_r: -1.0, ..c }.validate().is_err());
    }

    #[test]
    fn win_zones() {
        let c = LossConfig::default();
        assert_eq!(win_zone(30, 33, &c, N).unwrap(), Zone { lo: 27, hi: 33 });
        assert_eq!(win_zone(30, 30, &c, N).unwrap(), Zone { lo: 30, hi: 30 });
        assert_eq!(win_zone(1, 5, &c, N).unwrap(), Zone { lo: 0, hi: 5 });
        let wide = LossConfig { r_win_r: 2.0, ..c };
        assert_eq!(win_zone(65, 68, &wide, N).unwrap(), Zone { lo: 62, hi: 69 });
        let half = LossConfig { r_win_l: 0.5, r_win_r: 0.0, ..c };
        assert_eq!(win_zone(30, 33, &half, N).unwrap(), Zone { lo: 28, hi: 30 });
        assert!(matches!(win_zone(31, 30, &c, N), Err(Error::Data(_))));
    }

    #[test]
    fn lose_zones() {
        let c = LossConfig::default();
        assert_eq!(lose_zone(20, &c, N).unwrap(), Zone { lo: 21, hi: 60 });
        assert_eq!(lose_zone(50, &c, N).unwrap(), Zone { lo: 51, hi: 69 });
        assert_eq!(lose_zone(69, &c, N).unwrap(), Zone { lo: 69, hi: 69 });
        assert!(lose_zone(70, &c, N).is_err());
    }

    #[test]
    fn zone_kernel_values() {
        let (l, g) = zone_loss_grad(&uniform(), Zone { lo: 27, hi: 33 });
        assert!((l - 10f64.ln()).abs() < 1e-12);
        assert!(g.iter().sum::<f64>().abs() < 1e-12);

        let hot = BucketDistribution::one_hot(N, 30);
        let (l, g) = zone_loss_grad(&hot, Zone { lo: 27, hi: 33 });
        assert_eq!(l, 0.0);
        assert!(g.iter().all(|v| *v == 0.0));

        // all mass outside the zone: loss hits the floor, stays finite
        let (l, g) = zone_loss_grad(&hot, Zone { lo: 0, hi: 3 });
        assert!((l + PROB_FLOOR.ln()).abs() < 1e-9);
        assert!(g.iter().all(|v| v.is_finite()));
    }

    #[test]
    fn singleton_zone_gradient_is_softmax_cross_entropy() {
        let p = BucketDistribution::from_weights((1..=N).map(|i| i as f64).collect()).unwrap();
        let (_, g) = zone_loss_grad(&p, Zone { lo: 12, hi: 12 });
        for (j, gj) in g.iter().enumerate() {
            let expect = p.probs()[j] - if j == 12 { 1.0 } else { 0.0 };
            assert!((gj - expect).abs() < 1e-15);
        }
    }

    #[test]
    fn merged_won_example() {
        let s = nll_sample_loss(
            &uniform(),
            ObservationBuckets::Won { winning: 30, bid: 33 },
            &LossConfig::default(),
        )
        .unwrap();
        assert!((s.l1.unwrap() - 70f64.ln()).abs() < 1e-12);
        assert!((s.l2.unwrap() - 10f64.ln()).abs() < 1e-12);
        assert!(s.l3.is_none());
        assert!((s.contribution - 2.32336).abs() < 1e-5);
        assert!((s.contribution - (0.2 * 70f64.ln() + 0.64 * 10f64.ln())).abs() < 1e-12);

        let hot = BucketDistribution::one_hot(N, 30);
        let s = nll_sample_loss(&hot, ObservationBuckets::Won { winning: 30, bid: 33 }, &LossConfig::default()).unwrap();
        assert_eq!((s.l1, s.l2, s.contribution), (Some(0.0), Some(0.0), 0.0));
    }

    #[test]
    fn merged_lost_example() {
        let s = nll_sample_loss(&uniform(), ObservationBuckets::Lost { bid: 20 }, &LossConfig::default()).unwrap();
        assert!((s.l3.unwrap() - 0.55962).abs() < 5e-6);
        assert!((s.contribution - 0.08954).abs() < 5e-6);
        assert!(s.l1.is_none() && s.l2.is_none());
    }

    #[test]
    fn legacy_examples() {
        let (l, _) = legacy_sample_loss(&uniform(), ObservationBuckets::Won { winning: 30, bid: 34 }).unwrap();
        assert!((l - 4.94165).abs() < 1e-5);
        assert!((l - (70f64.ln() + 2f64.ln())).abs() < 1e-12);
        let (l, _) = legacy_sample_loss(&uniform(), ObservationBuckets::Lost { bid: 34 }).unwrap();
        assert!((l - 2f64.ln()).abs() < 1e-12);
        let p = BucketDistribution::from_weights((1..=N).map(|i| i as f64).collect()).unwrap();
        let (l, _) = legacy_sample_loss(&p, ObservationBuckets::Lost { bid: N - 1 }).unwrap();
        assert!((l + p.probs()[N - 1].ln()).abs() < 1e-12);
    }
}
