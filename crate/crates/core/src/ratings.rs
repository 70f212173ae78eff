//! Sparse user-item rating matrices, dense re-indexing and seeded splits.

use alloc::collections::BTreeMap;
use alloc::string::{String, ToString};
use alloc::vec::Vec;

use rand::seq::{index, SliceRandom};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{domain, Error, Result};

/// One observed cell of the rating matrix.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Observation {
    pub user: u32,
    pub item: u32,
    pub rating: f64,
}

/// The observed entries of a user-item rating matrix.
///
/// Users and items are densely indexed from 0; `user_ids[u]` and `item_ids[i]`
/// hold the raw dataset identifiers that were mapped to those indices.
/// Every stored rating is one of `levels`, which is strictly increasing.
#[derive(Debug, Clone, PartialEq)]
pub struct SparseRatings {
    observations: Vec<Observation>,
    n_users: usize,
    n_items: usize,
    levels: Vec<f64>,
    user_ids: Vec<String>,
    item_ids: Vec<String>,
}

impl SparseRatings {
    /// Validates and assembles a rating set from already-dense parts.
    pub fn new(
        observations: Vec<Observation>,
        levels: Vec<f64>,
        user_ids: Vec<String>,
        item_ids: Vec<String>,
    ) -> Result<Self> {
        let ratings = SparseRatings {
            n_users: user_ids.len(),
            n_items: item_ids.len(),
            observations,
            levels,
            user_ids,
            item_ids,
        };
        ratings.validate()?;
        Ok(ratings)
    }

    /// Like [`SparseRatings::new`], naming every user and item by its index.
    pub fn from_dense(
        observations: Vec<Observation>,
        n_users: usize,
        n_items: usize,
        levels: Vec<f64>,
    ) -> Result<Self> {
        let user_ids = (0..n_users).map(|u| u.to_string()).collect();
        let item_ids = (0..n_items).map(|i| i.to_string()).collect();
        Self::new(observations, levels, user_ids, item_ids)
    }

    fn validate(&self) -> Result<()> {
        if self.levels.is_empty() {
            return Err(domain!("rating levels must be non-empty"));
        }
        if self.levels.iter().any(|l| !l.is_finite()) {
            return Err(domain!("rating levels must be finite"));
        }
        if self.levels.windows(2).any(|w| w[0] >= w[1]) {
            return Err(domain!("rating levels must be strictly increasing"));
        }
        if self.n_users > u32::MAX as usize || self.n_items > u32::MAX as usize {
            return Err(domain!("index space exceeds u32"));
        }
        for o in &self.observations {
            if o.user as usize >= self.n_users || o.item as usize >= self.n_items {
                return Err(domain!(
                    "observation ({}, {}) outside {}x{} index space",
                    o.user,
                    o.item,
                    self.n_users,
                    self.n_items
                ));
            }
            if self.level_index(o.rating).is_none() {
                return Err(domain!("rating {} is not one of the declared levels", o.rating));
            }
        }
        let mut pairs: Vec<(u32, u32)> = self.observations.iter().map(|o| (o.user, o.item)).collect();
        pairs.sort_unstable();
        if let Some(w) = pairs.windows(2).find(|w| w[0] == w[1]) {
            return Err(domain!("duplicate observation for user {} item {}", w[0].0, w[0].1));
        }
        Ok(())
    }

    pub fn observations(&self) -> &[Observation] {
        &self.observations
    }

    pub fn len(&self) -> usize {
        self.observations.len()
    }

    pub fn is_empty(&self) -> bool {
        self.observations.is_empty()
    }

    pub fn n_users(&self) -> usize {
        self.n_users
    }

    pub fn n_items(&self) -> usize {
        self.n_items
    }

    pub fn levels(&self) -> &[f64] {
        &self.levels
    }

    pub fn user_ids(&self) -> &[String] {
        &self.user_ids
    }

    pub fn item_ids(&self) -> &[String] {
        &self.item_ids
    }

    /// Position of `rating` in `levels`, if it is exactly one of them.
    pub fn level_index(&self, rating: f64) -> Option<usize> {
        self.levels.binary_search_by(|l| l.total_cmp(&rating)).ok()
    }

    /// Number of observations per item.
    pub fn item_counts(&self) -> Vec<u64> {
        let mut counts = alloc::vec![0u64; self.n_items];
        for o in &self.observations {
            counts[o.item as usize] += 1;
        }
        counts
    }

    /// Same index spaces and identifiers, different observations and levels.
    /// Callers guarantee the invariants.
    pub(crate) fn with_observations(&self, observations: Vec<Observation>, levels: Vec<f64>) -> Self {
        SparseRatings {
            observations,
            n_users: self.n_users,
            n_items: self.n_items,
            levels,
            user_ids: self.user_ids.clone(),
            item_ids: self.item_ids.clone(),
        }
    }

    /// Drops users and items without observations and re-indexes the rest in
    /// first-appearance order. Levels are kept.
    pub fn redensify(&self) -> SparseRatings {
        let mut user_map = alloc::vec![u32::MAX; self.n_users];
        let mut item_map = alloc::vec![u32::MAX; self.n_items];
        let mut user_ids = Vec::new();
        let mut item_ids = Vec::new();
        let observations = self
            .observations
            .iter()
            .map(|o| {
                let u = &mut user_map[o.user as usize];
                if *u == u32::MAX {
                    *u = user_ids.len() as u32;
                    user_ids.push(self.user_ids[o.user as usize].clone());
                }
                let i = &mut item_map[o.item as usize];
                if *i == u32::MAX {
                    *i = item_ids.len() as u32;
                    item_ids.push(self.item_ids[o.item as usize].clone());
                }
                Observation { user: *u, item: *i, rating: o.rating }
            })
            .collect();
        SparseRatings {
            observations,
            n_users: user_ids.len(),
            n_items: item_ids.len(),
            levels: self.levels.clone(),
            user_ids,
            item_ids,
        }
    }
}

/// How a builder decides the level scale of the finished rating set.
#[derive(Debug, Clone, PartialEq)]
pub enum LevelScale {
    /// A fixed scale known up front (e.g. MovieLens 1..=5).
    Fixed(Vec<f64>),
    /// The sorted distinct observed ratings.
    Observed,
}

/// Accumulates raw `(user, item, rating)` records, assigning dense indices in
/// first-appearance order. Repeated `(user, item)` pairs keep the last rating.
#[derive(Debug, Default)]
pub struct RatingsBuilder {
    users: BTreeMap<String, u32>,
    items: BTreeMap<String, u32>,
    user_ids: Vec<String>,
    item_ids: Vec<String>,
    observations: Vec<Observation>,
}

impl RatingsBuilder {
    pub fn new() -> Self {
        Self::default()
    }

    fn intern(map: &mut BTreeMap<String, u32>, ids: &mut Vec<String>, raw: &str) -> u32 {
        if let Some(&idx) = map.get(raw) {
            return idx;
        }
        let idx = ids.len() as u32;
        map.insert(raw.to_string(), idx);
        ids.push(raw.to_string());
        idx
    }

    pub fn push(&mut self, user: &str, item: &str, rating: f64) {
        let user = Self::intern(&mut self.users, &mut self.user_ids, user);
        let item = Self::intern(&mut self.items, &mut self.item_ids, item);
        self.observations.push(Observation { user, item, rating });
    }

    pub fn len(&self) -> usize {
        self.observations.len()
    }

    pub fn is_empty(&self) -> bool {
        self.observations.is_empty()
    }

    pub fn finish(self, scale: LevelScale) -> Result<SparseRatings> {
        if self.observations.is_empty() {
            return Err(Error::EmptyInput("no ratings"));
        }
        // Keep the last record of each (user, item) pair, at its first position.
        let mut order: Vec<usize> = (0..self.observations.len()).collect();
        order.sort_by_key(|&k| (self.observations[k].user, self.observations[k].item, k));
        let mut keep = alloc::vec![false; self.observations.len()];
        let mut replace: Vec<(usize, f64)> = Vec::new();
        let mut start = 0;
        while start < order.len() {
            let first = order[start];
            let key = (self.observations[first].user, self.observations[first].item);
            let mut end = start + 1;
            while end < order.len() {
                let o = &self.observations[order[end]];
                if (o.user, o.item) != key {
                    break;
                }
                end += 1;
            }
            keep[first] = true;
            if end - start > 1 {
                replace.push((first, self.observations[order[end - 1]].rating));
            }
            start = end;
        }
        let mut observations = self.observations;
        for (k, rating) in replace {
            observations[k].rating = rating;
        }
        let observations: Vec<Observation> = observations
            .into_iter()
            .zip(keep)
            .filter_map(|(o, k)| k.then_some(o))
            .collect();

        let levels = match scale {
            LevelScale::Fixed(levels) => levels,
            LevelScale::Observed => {
                let mut levels: Vec<f64> = observations.iter().map(|o| o.rating).collect();
                levels.sort_by(f64::total_cmp);
                levels.dedup();
                levels
            }
        };
        SparseRatings::new(observations, levels, self.user_ids, self.item_ids)
    }
}

/// A train/test partition of one rating set. Both halves share the source's
/// index spaces and levels.
#[derive(Debug, Clone, PartialEq)]
pub struct Split {
    pub train: SparseRatings,
    pub test: SparseRatings,
    pub seed: u64,
    pub test_fraction: f64,
}

/// `ceil(n * fraction)`, tolerant of products that land a rounding error above
/// an integer (e.g. `0.07 * 100`).
fn ceil_count(n: usize, fraction: f64) -> usize {
    let x = n as f64 * fraction;
    let r = libm::round(x);
    if libm::fabs(x - r) <= 1e-9 * x.max(1.0) {
        r as usize
    } else {
        libm::ceil(x) as usize
    }
}

/// Seeded global shuffle; the first `ceil(N * test_fraction)` shuffled
/// observations form the test set. Survivors keep their source order.
pub fn split(ratings: &SparseRatings, test_fraction: f64, seed: u64) -> Result<Split> {
    if !(test_fraction > 0.0 && test_fraction < 1.0) {
        return Err(domain!("test_fraction must lie in (0, 1), got {}", test_fraction));
    }
    if ratings.is_empty() {
        return Err(Error::EmptyInput("cannot split an empty rating set"));
    }
    let n = ratings.len();
    let n_test = ceil_count(n, test_fraction).min(n);
    let mut order: Vec<usize> = (0..n).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    order.shuffle(&mut rng);
    let mut in_test = alloc::vec![false; n];
    for &k in &order[..n_test] {
        in_test[k] = true;
    }
    let (mut train, mut test) = (Vec::with_capacity(n - n_test), Vec::with_capacity(n_test));
    for (o, t) in ratings.observations.iter().zip(in_test) {
        if t {
            test.push(*o);
        } else {
            train.push(*o);
        }
    }
    Ok(Split {
        train: ratings.with_observations(train, ratings.levels.clone()),
        test: ratings.with_observations(test, ratings.levels.clone()),
        seed,
        test_fraction,
    })
}

/// Seeded uniform sample of `n` observations without replacement, re-densified.
/// Sampled observations keep their source order.
pub fn subsample(ratings: &SparseRatings, n: usize, seed: u64) -> Result<SparseRatings> {
    if n == 0 || n > ratings.len() {
        return Err(domain!("subsample size {} outside 1..={}", n, ratings.len()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut picked = index::sample(&mut rng, ratings.len(), n).into_vec();
    picked.sort_unstable();
    let observations = picked.into_iter().map(|k| ratings.observations[k]).collect();
    Ok(ratings.with_observations(observations, ratings.levels.clone()).redensify())
}
