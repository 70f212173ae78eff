//! Histogram equalization of rating values.
//!
//! Given the observed ratings of a sparse matrix with distinct levels
//! `l_1 < ... < l_K` and frequency ratios `P(l_k)`, each level is sent to
//!
//! ```text
//! T(l_K) = r_max * sum_{k <= K} P(l_k)
//! ```
//!
//! i.e. `r_max` times the empirical CDF at that level. This is the rating
//! analogue of grey-level equalization `S(K) = sum_k P(r_k)` rescaled to an
//! output range whose maximum is `L - 1`; here `r_max` is that range.
//! Frequencies count observed entries only. Missing cells are not zeros.

use alloc::vec::Vec;

use crate::error::{domain, Error, Result};
use crate::ratings::SparseRatings;

/// Per-level counts and frequency ratios over the observed entries.
/// Levels with zero count are never stored.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct RatingHistogram {
    levels: Vec<f64>,
    counts: Vec<u64>,
    frequencies: Vec<f64>,
}

impl RatingHistogram {
    /// Builds a histogram from explicit `(level, count)` columns. Zero-count
    /// levels are dropped; the remaining levels must be strictly increasing.
    pub fn from_counts(levels: &[f64], counts: &[u64]) -> Result<Self> {
        if levels.len() != counts.len() {
            return Err(domain!("{} levels but {} counts", levels.len(), counts.len()));
        }
        if levels.iter().any(|l| !l.is_finite()) || levels.windows(2).any(|w| w[0] >= w[1]) {
            return Err(domain!("histogram levels must be finite and strictly increasing"));
        }
        let (levels, counts): (Vec<f64>, Vec<u64>) =
            levels.iter().zip(counts).filter(|(_, &c)| c > 0).map(|(&l, &c)| (l, c)).unzip();
        let total: u64 = counts.iter().sum();
        if total == 0 {
            return Err(Error::EmptyInput("histogram has no observations"));
        }
        let frequencies = counts.iter().map(|&c| c as f64 / total as f64).collect();
        Ok(RatingHistogram { levels, counts, frequencies })
    }

    pub fn levels(&self) -> &[f64] {
        &self.levels
    }

    pub fn counts(&self) -> &[u64] {
        &self.counts
    }

    pub fn frequencies(&self) -> &[f64] {
        &self.frequencies
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().sum()
    }
}

/// Counts every observed rating by level.
pub fn build_histogram(ratings: &SparseRatings) -> Result<RatingHistogram> {
    if ratings.is_empty() {
        return Err(Error::EmptyInput("cannot build a histogram of no ratings"));
    }
    let mut counts = alloc::vec![0u64; ratings.levels().len()];
    for o in ratings.observations() {
        let k = ratings
            .level_index(o.rating)
            .ok_or_else(|| domain!("rating {} is not one of the declared levels", o.rating))?;
        counts[k] += 1;
    }
    RatingHistogram::from_counts(ratings.levels(), &counts)
}

/// What [`apply`] does with a rating that is not one of the map's levels.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "snake_case"))]
pub enum UnseenLevel {
    #[default]
    Reject,
    /// Use the nearest level by absolute distance; ties go to the lower level.
    Nearest,
}

/// Monotone level -> equalized value table with a piecewise-linear inverse.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct EqualizationMap {
    levels: Vec<f64>,
    transformed: Vec<f64>,
    r_max: f64,
}

/// `transformed[k] = r_max * cdf(k)`. The CDF is taken from integer prefix
/// counts so the last entry is exactly `r_max`.
pub fn build_equalization_map(hist: &RatingHistogram, r_max: f64) -> Result<EqualizationMap> {
    if !r_max.is_finite() || r_max <= 0.0 {
        return Err(domain!("r_max must be positive and finite, got {}", r_max));
    }
    let total = hist.total() as f64;
    let mut running = 0u64;
    let transformed = hist
        .counts
        .iter()
        .map(|&c| {
            running += c;
            r_max * (running as f64 / total)
        })
        .collect();
    Ok(EqualizationMap { levels: hist.levels.clone(), transformed, r_max })
}

impl EqualizationMap {
    /// Reassembles a map from its table, checking the map invariants.
    pub fn from_parts(levels: Vec<f64>, transformed: Vec<f64>, r_max: f64) -> Result<Self> {
        if levels.is_empty() || levels.len() != transformed.len() {
            return Err(domain!("map needs matching non-empty level and value columns"));
        }
        if !r_max.is_finite() || r_max <= 0.0 {
            return Err(domain!("r_max must be positive and finite, got {}", r_max));
        }
        let increasing = |v: &[f64]| v.windows(2).all(|w| w[0] < w[1]) && v.iter().all(|x| x.is_finite());
        if !increasing(&levels) || !increasing(&transformed) {
            return Err(domain!("map columns must be finite and strictly increasing"));
        }
        if transformed[0] <= 0.0 || transformed[transformed.len() - 1] != r_max {
            return Err(domain!("map values must lie in (0, r_max] and end at r_max"));
        }
        Ok(EqualizationMap { levels, transformed, r_max })
    }

    pub fn levels(&self) -> &[f64] {
        &self.levels
    }

    pub fn transformed(&self) -> &[f64] {
        &self.transformed
    }

    pub fn r_max(&self) -> f64 {
        self.r_max
    }

    /// Equalized value of a single rating.
    pub fn forward(&self, rating: f64, unseen: UnseenLevel) -> Result<f64> {
        if let Ok(k) = self.levels.binary_search_by(|l| l.total_cmp(&rating)) {
            return Ok(self.transformed[k]);
        }
        match unseen {
            UnseenLevel::Reject => Err(Error::UnknownLevel(rating)),
            UnseenLevel::Nearest if rating.is_nan() => Err(Error::UnknownLevel(rating)),
            UnseenLevel::Nearest => {
                let j = self.levels.partition_point(|&l| l < rating);
                let k = if j == 0 {
                    0
                } else if j == self.levels.len() || rating - self.levels[j - 1] <= self.levels[j] - rating {
                    j - 1
                } else {
                    j
                };
                Ok(self.transformed[k])
            }
        }
    }

    /// Maps an equalized-scale value back onto the rating scale.
    ///
    /// Knots `(transformed[k], levels[k])` are joined linearly; values below
    /// the first knot clamp to the lowest level and values above `r_max` to the
    /// highest. Exact knot values return their level exactly. NaN stays NaN.
    pub fn invert(&self, value: f64) -> f64 {
        let last = self.levels.len() - 1;
        if value.is_nan() {
            return value;
        }
        if value <= self.transformed[0] {
            return self.levels[0];
        }
        if value >= self.transformed[last] {
            return self.levels[last];
        }
        let j = self.transformed.partition_point(|&t| t <= value);
        let (t0, t1) = (self.transformed[j - 1], self.transformed[j]);
        let (l0, l1) = (self.levels[j - 1], self.levels[j]);
        if value == t0 {
            return l0;
        }
        l0 + (value - t0) / (t1 - t0) * (l1 - l0)
    }
}

/// Replaces every rating by its equalized value. The result's levels are the
/// map's equalized values.
pub fn apply(map: &EqualizationMap, ratings: &SparseRatings, unseen: UnseenLevel) -> Result<SparseRatings> {
    if ratings.is_empty() {
        return Err(Error::EmptyInput("cannot equalize an empty rating set"));
    }
    let observations = ratings
        .observations()
        .iter()
        .map(|o| Ok(crate::ratings::Observation { rating: map.forward(o.rating, unseen)?, ..*o }))
        .collect::<Result<Vec<_>>>()?;
    Ok(ratings.with_observations(observations, map.transformed.clone()))
}

/// Convenience: histogram of `ratings`, then its map with scale `r_max`.
pub fn fit(ratings: &SparseRatings, r_max: f64) -> Result<EqualizationMap> {
    build_equalization_map(&build_histogram(ratings)?, r_max)
}
