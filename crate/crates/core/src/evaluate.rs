//! Accuracy and popularity-fairness metrics.

use alloc::vec::Vec;
use core::cmp::Ordering;

use crate::equalize::{EqualizationMap, UnseenLevel};
use crate::error::{domain, Error, Result};
use crate::factorize::FactorModel;
use crate::ratings::SparseRatings;

fn check_pairs(predictions: &[f64], truths: &[f64]) -> Result<()> {
    if predictions.is_empty() {
        return Err(domain!("metric over zero predictions"));
    }
    if predictions.len() != truths.len() {
        return Err(domain!("{} predictions but {} truths", predictions.len(), truths.len()));
    }
    Ok(())
}

pub fn mae(predictions: &[f64], truths: &[f64]) -> Result<f64> {
    check_pairs(predictions, truths)?;
    let sum: f64 = predictions.iter().zip(truths).map(|(p, t)| libm::fabs(p - t)).sum();
    Ok(sum / predictions.len() as f64)
}

pub fn rmse(predictions: &[f64], truths: &[f64]) -> Result<f64> {
    check_pairs(predictions, truths)?;
    let sum: f64 = predictions.iter().zip(truths).map(|(p, t)| (p - t) * (p - t)).sum();
    Ok(libm::sqrt(sum / predictions.len() as f64))
}

/// Scale on which accuracy is measured.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "snake_case"))]
pub enum EvalSpace {
    Original,
    Equalized,
}

impl EvalSpace {
    pub fn as_str(self) -> &'static str {
        match self {
            EvalSpace::Original => "original",
            EvalSpace::Equalized => "equalized",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Accuracy {
    pub mae: f64,
    pub rmse: f64,
    pub n: usize,
}

/// MAE and RMSE of `model` on `test`, whose ratings are on the original scale.
///
/// `map` is the equalization the model was trained under, or `None` for a
/// model trained on raw ratings. In the original space predictions go
/// through the map's inverse (when present) and are clamped to the level
/// range. In the equalized space predictions are clamped to `(0, r_max]` and
/// compared with the equalized test ratings.
pub fn evaluate_accuracy(
    model: &FactorModel,
    map: Option<&EqualizationMap>,
    test: &SparseRatings,
    space: EvalSpace,
    unseen: UnseenLevel,
) -> Result<Accuracy> {
    if test.is_empty() {
        return Err(Error::EmptyInput("no test ratings"));
    }
    let raw: Vec<f64> = test
        .observations()
        .iter()
        .map(|o| model.predict(o.user as usize, o.item as usize))
        .collect::<Result<_>>()?;
    let (predictions, truths): (Vec<f64>, Vec<f64>) = match (space, map) {
        (EvalSpace::Original, map) => {
            let levels = test.levels();
            let (lo, hi) = (levels[0], levels[levels.len() - 1]);
            let predictions = raw
                .iter()
                .map(|&p| map.map_or(p, |m| m.invert(p)).clamp(lo, hi))
                .collect();
            (predictions, test.observations().iter().map(|o| o.rating).collect())
        }
        (EvalSpace::Equalized, Some(map)) => {
            let predictions = raw.iter().map(|&p| p.clamp(f64::MIN_POSITIVE, map.r_max())).collect();
            let truths =
                test.observations().iter().map(|o| map.forward(o.rating, unseen)).collect::<Result<_>>()?;
            (predictions, truths)
        }
        (EvalSpace::Equalized, None) => {
            return Err(Error::Config("equalized-space evaluation requires an equalization map".into()));
        }
    };
    Ok(Accuracy { mae: mae(&predictions, &truths)?, rmse: rmse(&predictions, &truths)?, n: truths.len() })
}

/// Anything that assigns a ranking score to a (user, item) pair.
pub trait Scorer {
    fn score(&self, user: usize, item: usize) -> f64;
}

impl Scorer for FactorModel {
    fn score(&self, user: usize, item: usize) -> f64 {
        FactorModel::score(self, user, item)
    }
}

/// Higher score first, then lower item index.
fn rank_order(a: &(f64, u32), b: &(f64, u32)) -> Ordering {
    b.0.total_cmp(&a.0).then(a.1.cmp(&b.1))
}

/// How often each item lands in a user's top-`k` list, where a user's
/// candidates are the items they have not rated in `train`. Users with fewer
/// than `k` candidates receive all of them.
pub fn top_k_exposure<S: Scorer + ?Sized>(scorer: &S, k: usize, train: &SparseRatings) -> Result<Vec<u64>> {
    if k == 0 {
        return Err(domain!("top-k needs k >= 1"));
    }
    let (n_users, n_items) = (train.n_users(), train.n_items());
    let mut rated: Vec<Vec<u32>> = alloc::vec![Vec::new(); n_users];
    for o in train.observations() {
        rated[o.user as usize].push(o.item);
    }
    let mut counts = alloc::vec![0u64; n_items];
    let mut seen = alloc::vec![false; n_items];
    let mut candidates: Vec<(f64, u32)> = Vec::with_capacity(n_items);
    for (user, rated) in rated.iter().enumerate() {
        for &i in rated {
            seen[i as usize] = true;
        }
        candidates.clear();
        candidates.extend((0..n_items).filter(|&i| !seen[i]).map(|i| (scorer.score(user, i), i as u32)));
        for &i in rated {
            seen[i as usize] = false;
        }
        if candidates.len() > k {
            candidates.select_nth_unstable_by(k - 1, rank_order);
            candidates.truncate(k);
        }
        for &(_, item) in &candidates {
            counts[item as usize] += 1;
        }
    }
    Ok(counts)
}

fn check_exposure(counts: &[f64]) -> Result<f64> {
    if counts.is_empty() {
        return Err(domain!("exposure over an empty catalog"));
    }
    if counts.iter().any(|c| !(c.is_finite() && *c >= 0.0)) {
        return Err(domain!("exposure counts must be finite and non-negative"));
    }
    let total: f64 = counts.iter().sum();
    if total <= 0.0 {
        return Err(domain!("zero total exposure"));
    }
    Ok(total)
}

/// Gini coefficient of per-item exposure over the whole catalog, zeros
/// included: `sum_i sum_j |x_i - x_j| / (2 n sum x)`.
pub fn exposure_gini(counts: &[f64]) -> Result<f64> {
    let total = check_exposure(counts)?;
    let mut sorted = counts.to_vec();
    sorted.sort_by(f64::total_cmp);
    let n = sorted.len() as f64;
    // With ascending order, sum_{i<j} (x_j - x_i) = sum_k (2k - n + 1) x_k.
    let weighted: f64 = sorted.iter().enumerate().map(|(k, x)| (2.0 * k as f64 - n + 1.0) * x).sum();
    Ok((weighted / (n * total)).clamp(0.0, 1.0))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PopularityCorrelation {
    pub value: f64,
    /// One of the two series had zero variance; `value` is then 0.
    pub degenerate: bool,
}

/// Pearson correlation, over items that occur in `test`, between an item's
/// training rating count and its mean raw score on its test pairs.
pub fn popularity_corr<S: Scorer + ?Sized>(
    scorer: &S,
    train: &SparseRatings,
    test: &SparseRatings,
) -> Result<PopularityCorrelation> {
    let popularity = train.item_counts();
    let n_items = popularity.len().max(test.n_items());
    let mut sums = alloc::vec![0.0; n_items];
    let mut hits = alloc::vec![0u64; n_items];
    for o in test.observations() {
        sums[o.item as usize] += scorer.score(o.user as usize, o.item as usize);
        hits[o.item as usize] += 1;
    }
    let (xs, ys): (Vec<f64>, Vec<f64>) = (0..n_items)
        .filter(|&i| hits[i] > 0)
        .map(|i| (popularity.get(i).copied().unwrap_or(0) as f64, sums[i] / hits[i] as f64))
        .unzip();
    pearson(&xs, &ys)
}

/// Pearson correlation of two equal-length series (at least two points).
pub fn pearson(xs: &[f64], ys: &[f64]) -> Result<PopularityCorrelation> {
    if xs.len() != ys.len() {
        return Err(domain!("{} vs {} points", xs.len(), ys.len()));
    }
    if xs.len() < 2 {
        return Err(domain!("correlation needs at least 2 items, got {}", xs.len()));
    }
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (x, y) in xs.iter().zip(ys) {
        let (dx, dy) = (x - mx, y - my);
        sxy += dx * dy;
        sxx += dx * dx;
        syy += dy * dy;
    }
    if sxx == 0.0 || syy == 0.0 {
        return Ok(PopularityCorrelation { value: 0.0, degenerate: true });
    }
    let value = (sxy / libm::sqrt(sxx * syy)).clamp(-1.0, 1.0);
    Ok(PopularityCorrelation { value, degenerate: false })
}

/// Share of total exposure received by the `floor(tail_fraction * n)` least
/// popular items, popularity being the training rating count (ties: the lower
/// index counts as less popular).
pub fn tail_share(counts: &[f64], train: &SparseRatings, tail_fraction: f64) -> Result<f64> {
    tail_share_by_popularity(counts, &train.item_counts(), tail_fraction)
}

pub fn tail_share_by_popularity(counts: &[f64], popularity: &[u64], tail_fraction: f64) -> Result<f64> {
    if !(tail_fraction > 0.0 && tail_fraction < 1.0) {
        return Err(domain!("tail fraction must lie in (0, 1), got {}", tail_fraction));
    }
    let total = check_exposure(counts)?;
    if popularity.len() != counts.len() {
        return Err(domain!("{} exposure counts for {} items", counts.len(), popularity.len()));
    }
    let n = counts.len();
    let x = n as f64 * tail_fraction;
    let tail = (libm::floor(x + 1e-9 * x.max(1.0)) as usize).min(n);
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by_key(|&i| (popularity[i], i));
    let tail_exposure: f64 = order[..tail].iter().map(|&i| counts[i]).sum();
    Ok(tail_exposure / total)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Fairness {
    pub exposure_gini: f64,
    pub popularity_corr: PopularityCorrelation,
    pub tail_share: f64,
}

/// All three popularity-fairness metrics for one model.
pub fn evaluate_fairness<S: Scorer + ?Sized>(
    scorer: &S,
    train: &SparseRatings,
    test: &SparseRatings,
    top_k: usize,
    tail_fraction: f64,
) -> Result<Fairness> {
    let exposure: Vec<f64> = top_k_exposure(scorer, top_k, train)?.into_iter().map(|c| c as f64).collect();
    Ok(Fairness {
        exposure_gini: exposure_gini(&exposure)?,
        popularity_corr: popularity_corr(scorer, train, test)?,
        tail_share: tail_share(&exposure, train, tail_fraction)?,
    })
}

/// Metrics of one pipeline run in one evaluation space.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct EvalReport {
    pub mae: f64,
    pub rmse: f64,
    pub eval_space: EvalSpace,
    pub exposure_gini: f64,
    pub popularity_corr: f64,
    pub popularity_corr_degenerate: bool,
    pub tail_share: f64,
    pub n_test: usize,
}

impl EvalReport {
    pub fn new(space: EvalSpace, accuracy: Accuracy, fairness: Fairness) -> Self {
        EvalReport {
            mae: accuracy.mae,
            rmse: accuracy.rmse,
            eval_space: space,
            exposure_gini: fairness.exposure_gini,
            popularity_corr: fairness.popularity_corr.value,
            popularity_corr_degenerate: fairness.popularity_corr.degenerate,
            tail_share: fairness.tail_share,
            n_test: accuracy.n,
        }
    }
}
