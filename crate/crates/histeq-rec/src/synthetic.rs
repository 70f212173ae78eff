//! Seeded generator of MovieLens-shaped rating files, for demos and smoke
//! runs when the real datasets are not at hand.
//!
//! Users and items get log-normal activity/popularity weights, scores come
//! from a biased low-rank model with Gaussian noise, and the scores are cut at
//! global quantiles so the five rating levels occur with the requested shares.

use std::collections::HashSet;
use std::io::Write;

use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{LogNormal, Normal};

#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticSpec {
    pub n_users: usize,
    pub n_items: usize,
    pub n_ratings: usize,
    pub rank: usize,
    pub noise: f64,
    /// Share of each rating level 1..=5; must sum to 1.
    pub level_shares: [f64; 5],
    pub seed: u64,
}

impl Default for SyntheticSpec {
    /// MovieLens-1M dimensions and its rating-level shares.
    fn default() -> Self {
        SyntheticSpec {
            n_users: 6040,
            n_items: 3706,
            n_ratings: 1_000_209,
            rank: 8,
            noise: 0.6,
            level_shares: [0.0562, 0.1075, 0.2611, 0.3489, 0.2263],
            seed: 2023,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SyntheticRating {
    pub user: u32,
    pub item: u32,
    pub rating: u8,
}

pub fn generate(spec: &SyntheticSpec) -> Vec<SyntheticRating> {
    assert!(spec.n_ratings <= spec.n_users * spec.n_items / 2, "requested density too high");
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let user_weight = LogNormal::new(0.0, 0.8).unwrap();
    let item_weight = LogNormal::new(0.0, 0.9).unwrap();
    let users: Vec<f64> = (0..spec.n_users).map(|_| user_weight.sample(&mut rng)).collect();
    let items: Vec<f64> = (0..spec.n_items).map(|_| item_weight.sample(&mut rng)).collect();
    let pick_user = WeightedIndex::new(&users).unwrap();
    let pick_item = WeightedIndex::new(&items).unwrap();

    let unit = Normal::new(0.0, 1.0).unwrap();
    let factor_sd = 0.4 / (spec.rank as f64).sqrt().max(1.0) * 2.0;
    let gauss = |sd: f64, rng: &mut ChaCha8Rng| sd * unit.sample(rng);
    let user_bias: Vec<f64> = (0..spec.n_users).map(|_| gauss(0.45, &mut rng)).collect();
    // popular items skew slightly higher, as in real catalogues
    let mean_log_pop = items.iter().map(|w| w.ln()).sum::<f64>() / items.len() as f64;
    let item_bias: Vec<f64> = items.iter().map(|w| 0.25 * (w.ln() - mean_log_pop) + gauss(0.45, &mut rng)).collect();
    let p: Vec<f64> = (0..spec.n_users * spec.rank).map(|_| gauss(factor_sd, &mut rng)).collect();
    let q: Vec<f64> = (0..spec.n_items * spec.rank).map(|_| gauss(factor_sd, &mut rng)).collect();

    let mut seen = HashSet::with_capacity(spec.n_ratings);
    let mut pairs = Vec::with_capacity(spec.n_ratings);
    while pairs.len() < spec.n_ratings {
        let (u, i) = (pick_user.sample(&mut rng), pick_item.sample(&mut rng));
        if seen.insert((u, i)) {
            pairs.push((u, i));
        }
    }
    let scores: Vec<f64> = pairs
        .iter()
        .map(|&(u, i)| {
            let inner: f64 = (0..spec.rank).map(|f| p[u * spec.rank + f] * q[i * spec.rank + f]).sum();
            user_bias[u] + item_bias[i] + inner + gauss(spec.noise, &mut rng)
        })
        .collect();

    let mut sorted = scores.clone();
    sorted.sort_by(f64::total_cmp);
    let mut cuts = [0.0; 4];
    let mut cumulative = 0.0;
    for (cut, share) in cuts.iter_mut().zip(spec.level_shares) {
        cumulative += share;
        let k = ((cumulative * sorted.len() as f64) as usize).min(sorted.len() - 1);
        *cut = sorted[k];
    }
    pairs
        .into_iter()
        .zip(scores)
        .map(|((u, i), s)| SyntheticRating {
            user: u as u32,
            item: i as u32,
            rating: 1 + cuts.iter().filter(|&&c| s >= c).count() as u8,
        })
        .collect()
}

/// Writes `UserID::MovieID::Rating::Timestamp` lines with 1-based ids.
pub fn write_movielens<W: Write>(ratings: &[SyntheticRating], mut out: W) -> std::io::Result<()> {
    for (k, r) in ratings.iter().enumerate() {
        writeln!(out, "{}::{}::{}::{}", r.user + 1, r.item + 1, r.rating, 956_703_932 + k as u64)?;
    }
    out.flush()
}
