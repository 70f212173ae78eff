//! Latent-factor models trained by per-observation SGD.
//!
//! The training objective over the observed set `O` is
//!
//! ```text
//! J(U, V) = sum_{(u,i) in O} (r_ui - U_u . V_i)^2
//!         + l2 * (|U|^2 + |V|^2)
//!         + kl_weight * |O| * KL(q || uniform)
//! ```
//!
//! where the last term is present only for [`Regularizer::KlUniform`]. `q` is
//! the distribution of training predictions over the rating levels, obtained
//! by soft-binning each prediction with a Gaussian kernel of width
//! `bandwidth` centred on every level and averaging the normalized weights.
//! The penalty pushes predictions to spread evenly over the rating scale.
//! It is a stand-in for KL-Mat, not a reconstruction of it.
//!
//! SGD steps use the half-gradient convention of the classic update
//! `U_u += lr * (e * V_i - l2 * U_u)`; the KL share of an observation enters
//! the same step with weight `kl_weight / 2`.

use alloc::vec::Vec;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{domain, Error, Result};
use crate::ratings::SparseRatings;

#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(tag = "kind", rename_all = "snake_case"))]
pub enum Regularizer {
    None,
    KlUniform { weight: f64, bandwidth: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct TrainConfig {
    pub rank: usize,
    pub epochs: usize,
    pub learning_rate: f64,
    pub l2: f64,
    pub regularizer: Regularizer,
    pub seed: u64,
    pub init_scale: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            rank: 16,
            epochs: 30,
            learning_rate: 0.005,
            l2: 0.02,
            regularizer: Regularizer::None,
            seed: 42,
            init_scale: 0.1,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.rank == 0 {
            return Err(domain!("rank must be positive"));
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(domain!("learning rate must be positive, got {}", self.learning_rate));
        }
        if !(self.l2 >= 0.0 && self.l2.is_finite()) {
            return Err(domain!("l2 must be non-negative, got {}", self.l2));
        }
        if !(self.init_scale > 0.0 && self.init_scale.is_finite()) {
            return Err(domain!("init_scale must be positive, got {}", self.init_scale));
        }
        if let Regularizer::KlUniform { weight, bandwidth } = self.regularizer {
            if !(weight >= 0.0 && weight.is_finite()) {
                return Err(domain!("kl weight must be non-negative, got {}", weight));
            }
            check_bandwidth(bandwidth)?;
        }
        Ok(())
    }
}

fn check_bandwidth(bandwidth: f64) -> Result<()> {
    if bandwidth > 0.0 && bandwidth.is_finite() {
        Ok(())
    } else {
        Err(domain!("kl bandwidth must be positive, got {}", bandwidth))
    }
}

/// User and item factor matrices, row-major, `rank` columns each.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct FactorModel {
    n_users: usize,
    n_items: usize,
    rank: usize,
    user_factors: Vec<f64>,
    item_factors: Vec<f64>,
}

impl FactorModel {
    pub fn from_parts(
        n_users: usize,
        n_items: usize,
        rank: usize,
        user_factors: Vec<f64>,
        item_factors: Vec<f64>,
    ) -> Result<Self> {
        if n_users == 0 || n_items == 0 || rank == 0 {
            return Err(domain!("model dimensions must be positive"));
        }
        if user_factors.len() != n_users * rank || item_factors.len() != n_items * rank {
            return Err(domain!("factor matrix sizes do not match {}x{} rank {}", n_users, n_items, rank));
        }
        Ok(FactorModel { n_users, n_items, rank, user_factors, item_factors })
    }

    pub fn n_users(&self) -> usize {
        self.n_users
    }

    pub fn n_items(&self) -> usize {
        self.n_items
    }

    pub fn rank(&self) -> usize {
        self.rank
    }

    pub fn user_factors(&self) -> &[f64] {
        &self.user_factors
    }

    pub fn item_factors(&self) -> &[f64] {
        &self.item_factors
    }

    pub fn user_row(&self, user: usize) -> &[f64] {
        &self.user_factors[user * self.rank..(user + 1) * self.rank]
    }

    pub fn item_row(&self, item: usize) -> &[f64] {
        &self.item_factors[item * self.rank..(item + 1) * self.rank]
    }

    /// Raw inner product of the user and item rows. Not clamped.
    pub fn predict(&self, user: usize, item: usize) -> Result<f64> {
        if user >= self.n_users || item >= self.n_items {
            return Err(domain!(
                "({}, {}) outside model of {} users and {} items",
                user,
                item,
                self.n_users,
                self.n_items
            ));
        }
        Ok(self.score(user, item))
    }

    #[inline]
    pub(crate) fn score(&self, user: usize, item: usize) -> f64 {
        dot(self.user_row(user), self.item_row(item))
    }

    /// Frobenius norm of both factor matrices together.
    pub fn norm(&self) -> f64 {
        let sq: f64 = self.user_factors.iter().chain(&self.item_factors).map(|x| x * x).sum();
        libm::sqrt(sq)
    }

    fn is_finite(&self) -> bool {
        self.user_factors.iter().chain(&self.item_factors).all(|x| x.is_finite())
    }
}

#[inline]
fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Factors drawn i.i.d. uniform on `(-init_scale, init_scale)`, users first.
pub fn init_model(n_users: usize, n_items: usize, config: &TrainConfig) -> Result<FactorModel> {
    if n_users == 0 || n_items == 0 {
        return Err(domain!("model needs at least one user and one item"));
    }
    config.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let s = config.init_scale;
    let mut draw = |n: usize| (0..n * config.rank).map(|_| rng.random_range(-s..s)).collect::<Vec<f64>>();
    let user_factors = draw(n_users);
    let item_factors = draw(n_items);
    FactorModel::from_parts(n_users, n_items, config.rank, user_factors, item_factors)
}

/// A trained model and its per-epoch training MSE.
#[derive(Debug, Clone, PartialEq)]
pub struct Trained {
    pub model: FactorModel,
    pub loss_trace: Vec<f64>,
}

/// Runs `config.epochs` SGD passes over `ratings`. Each pass visits the
/// observations in a fresh order drawn from stream `epoch + 1` of the seed.
pub fn train(ratings: &SparseRatings, config: &TrainConfig) -> Result<Trained> {
    if ratings.is_empty() {
        return Err(Error::EmptyInput("cannot train on an empty rating set"));
    }
    let mut model = init_model(ratings.n_users(), ratings.n_items(), config)?;
    let obs = ratings.observations();
    let rank = config.rank;
    let lr = config.learning_rate;
    let l2 = config.l2;
    let centers = ratings.levels();

    let mut order: Vec<usize> = (0..obs.len()).collect();
    let mut loss_trace = Vec::with_capacity(config.epochs);
    let mut log_ratio = alloc::vec![0.0; centers.len()];
    let mut bins = SoftBins::new(centers.len());

    for epoch in 0..config.epochs {
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        rng.set_stream(epoch as u64 + 1);
        order.shuffle(&mut rng);

        // The binned distribution is refreshed once per epoch; within the epoch
        // each observation's kernel weights follow its current prediction.
        let kl = match config.regularizer {
            Regularizer::KlUniform { weight, bandwidth } if weight > 0.0 => {
                let predictions: Vec<f64> =
                    obs.iter().map(|o| model.score(o.user as usize, o.item as usize)).collect();
                let q = binned_distribution(&predictions, centers, bandwidth, &mut bins);
                let k = centers.len() as f64;
                for (lr_k, &q_k) in log_ratio.iter_mut().zip(&q) {
                    *lr_k = safe_ln(k * q_k);
                }
                Some((weight, bandwidth))
            }
            _ => None,
        };

        for &k in &order {
            let o = obs[k];
            let (u, i) = (o.user as usize, o.item as usize);
            let ur = u * rank..(u + 1) * rank;
            let ir = i * rank..(i + 1) * rank;
            let pred = dot(&model.user_factors[ur.clone()], &model.item_factors[ir.clone()]);
            let mut residual = o.rating - pred;
            if let Some((weight, bandwidth)) = kl {
                bins.assign(pred, centers, bandwidth);
                residual -= 0.5 * weight * bins.pressure(&log_ratio);
            }
            let (uf, vf) = (&mut model.user_factors[ur], &mut model.item_factors[ir]);
            for (a, b) in uf.iter_mut().zip(vf.iter_mut()) {
                let (ua, vb) = (*a, *b);
                *a += lr * (residual * vb - l2 * ua);
                *b += lr * (residual * ua - l2 * vb);
            }
        }

        let mse = obs
            .iter()
            .map(|o| {
                let e = o.rating - model.score(o.user as usize, o.item as usize);
                e * e
            })
            .sum::<f64>()
            / obs.len() as f64;
        if !mse.is_finite() || !model.is_finite() {
            return Err(Error::Diverged { epoch });
        }
        loss_trace.push(mse);
    }
    Ok(Trained { model, loss_trace })
}

fn safe_ln(x: f64) -> f64 {
    libm::log(x.max(f64::MIN_POSITIVE))
}

/// Scratch space for the Gaussian soft assignment of one prediction.
struct SoftBins {
    weights: Vec<f64>,
    slopes: Vec<f64>,
}

impl SoftBins {
    fn new(k: usize) -> Self {
        SoftBins { weights: alloc::vec![0.0; k], slopes: alloc::vec![0.0; k] }
    }

    /// `weights[k]` = softmax over `-(p - c_k)^2 / (2 s^2)`;
    /// `slopes[k]` = derivative of that logit in `p`.
    fn assign(&mut self, p: f64, centers: &[f64], bandwidth: f64) {
        let inv = 1.0 / (bandwidth * bandwidth);
        let mut top = f64::NEG_INFINITY;
        for ((w, s), &c) in self.weights.iter_mut().zip(&mut self.slopes).zip(centers) {
            let d = p - c;
            *w = -0.5 * d * d * inv;
            *s = -d * inv;
            top = top.max(*w);
        }
        let mut z = 0.0;
        for w in &mut self.weights {
            *w = libm::exp(*w - top);
            z += *w;
        }
        for w in &mut self.weights {
            *w /= z;
        }
    }

    /// `sum_k g_k * dw_k/dp` for the last assigned prediction.
    fn pressure(&self, g: &[f64]) -> f64 {
        let mean_slope: f64 = self.weights.iter().zip(&self.slopes).map(|(w, s)| w * s).sum();
        self.weights
            .iter()
            .zip(&self.slopes)
            .zip(g)
            .map(|((w, s), g)| g * w * (s - mean_slope))
            .sum()
    }
}

fn binned_distribution(predictions: &[f64], centers: &[f64], bandwidth: f64, bins: &mut SoftBins) -> Vec<f64> {
    let mut q = alloc::vec![0.0; centers.len()];
    for &p in predictions {
        bins.assign(p, centers, bandwidth);
        for (q_k, w) in q.iter_mut().zip(&bins.weights) {
            *q_k += w;
        }
    }
    let n = predictions.len() as f64;
    for q_k in &mut q {
        *q_k /= n;
    }
    q
}

/// Soft-binned distribution of `predictions` over the bins centred at
/// `centers`.
pub fn soft_binned_distribution(predictions: &[f64], centers: &[f64], bandwidth: f64) -> Result<Vec<f64>> {
    check_bandwidth(bandwidth)?;
    if predictions.is_empty() || centers.is_empty() {
        return Err(Error::EmptyInput("soft binning needs predictions and bin centres"));
    }
    Ok(binned_distribution(predictions, centers, bandwidth, &mut SoftBins::new(centers.len())))
}

/// `KL(q || uniform)` of the soft-binned prediction distribution.
pub fn kl_uniform_penalty(predictions: &[f64], centers: &[f64], bandwidth: f64) -> Result<f64> {
    let q = soft_binned_distribution(predictions, centers, bandwidth)?;
    let k = centers.len() as f64;
    Ok(q.iter().filter(|&&q| q > 0.0).map(|&q| q * libm::log(k * q)).sum())
}

/// Derivative of [`kl_uniform_penalty`] with respect to each prediction.
pub fn kl_uniform_gradient(predictions: &[f64], centers: &[f64], bandwidth: f64) -> Result<Vec<f64>> {
    let q = soft_binned_distribution(predictions, centers, bandwidth)?;
    let k = centers.len() as f64;
    let log_ratio: Vec<f64> = q.iter().map(|&q| safe_ln(k * q)).collect();
    let n = predictions.len() as f64;
    let mut bins = SoftBins::new(centers.len());
    Ok(predictions
        .iter()
        .map(|&p| {
            bins.assign(p, centers, bandwidth);
            bins.pressure(&log_ratio) / n
        })
        .collect())
}

fn training_predictions(model: &FactorModel, ratings: &SparseRatings) -> Result<Vec<f64>> {
    ratings.observations().iter().map(|o| model.predict(o.user as usize, o.item as usize)).collect()
}

/// Per-observation derivative of the KL stand-in penalty with respect to the
/// observation's prediction, bins centred on `ratings.levels()`.
pub fn kl_regularizer_gradient(model: &FactorModel, ratings: &SparseRatings, bandwidth: f64) -> Result<Vec<f64>> {
    check_bandwidth(bandwidth)?;
    kl_uniform_gradient(&training_predictions(model, ratings)?, ratings.levels(), bandwidth)
}

/// Value of the full training objective.
pub fn objective(model: &FactorModel, ratings: &SparseRatings, config: &TrainConfig) -> Result<f64> {
    let predictions = training_predictions(model, ratings)?;
    let sq: f64 = ratings.observations().iter().zip(&predictions).map(|(o, p)| (o.rating - p) * (o.rating - p)).sum();
    let norm = model.norm();
    let mut j = sq + config.l2 * norm * norm;
    if let Regularizer::KlUniform { weight, bandwidth } = config.regularizer {
        j += weight * predictions.len() as f64 * kl_uniform_penalty(&predictions, ratings.levels(), bandwidth)?;
    }
    Ok(j)
}

/// Exact gradient of [`objective`] as `(dJ/dU, dJ/dV)`, row-major like the
/// factor matrices.
pub fn objective_gradient(
    model: &FactorModel,
    ratings: &SparseRatings,
    config: &TrainConfig,
) -> Result<(Vec<f64>, Vec<f64>)> {
    let predictions = training_predictions(model, ratings)?;
    let kl = match config.regularizer {
        Regularizer::KlUniform { weight, bandwidth } => {
            let n = predictions.len() as f64;
            let g = kl_uniform_gradient(&predictions, ratings.levels(), bandwidth)?;
            Some(g.into_iter().map(|g| weight * n * g).collect::<Vec<_>>())
        }
        Regularizer::None => None,
    };
    let rank = model.rank;
    let mut grad_u: Vec<f64> = model.user_factors.iter().map(|x| 2.0 * config.l2 * x).collect();
    let mut grad_v: Vec<f64> = model.item_factors.iter().map(|x| 2.0 * config.l2 * x).collect();
    for (k, (o, p)) in ratings.observations().iter().zip(&predictions).enumerate() {
        let mut d = -2.0 * (o.rating - p);
        if let Some(kl) = &kl {
            d += kl[k];
        }
        let (u, i) = (o.user as usize, o.item as usize);
        for f in 0..rank {
            grad_u[u * rank + f] += d * model.item_factors[i * rank + f];
            grad_v[i * rank + f] += d * model.user_factors[u * rank + f];
        }
    }
    Ok((grad_u, grad_v))
}
