//! Brute-force reference computations. Each one is written from the metric's
//! definition and shares no code with the crate under test.
#![allow(dead_code)]

/// `r_max * P(rating <= level_k)` by expanding the histogram into individual
/// observations and counting, one level at a time.
pub fn equalized_levels(counts: &[u64], r_max: f64) -> Vec<f64> {
    let mut observations = Vec::new();
    for (k, &c) in counts.iter().enumerate() {
        for _ in 0..c {
            observations.push(k);
        }
    }
    let n = observations.len() as f64;
    (0..counts.len())
        .filter(|&k| counts[k] > 0)
        .map(|k| r_max * observations.iter().filter(|&&o| o <= k).count() as f64 / n)
        .collect()
}

/// Central finite differences of `f` at `x`.
pub fn central_difference(f: &dyn Fn(&[f64]) -> f64, x: &[f64], step: f64) -> Vec<f64> {
    let mut probe = x.to_vec();
    (0..x.len())
        .map(|k| {
            probe[k] = x[k] + step;
            let up = f(&probe);
            probe[k] = x[k] - step;
            let down = f(&probe);
            probe[k] = x[k];
            (up - down) / (2.0 * step)
        })
        .collect()
}

/// `|a - b| / max(|a|, |b|)` over whole vectors; 0 when both are zero.
pub fn relative_error(a: &[f64], b: &[f64]) -> f64 {
    let norm = |v: &[f64]| v.iter().map(|x| x * x).sum::<f64>().sqrt();
    let diff: Vec<f64> = a.iter().zip(b).map(|(x, y)| x - y).collect();
    let scale = norm(a).max(norm(b));
    if scale == 0.0 {
        0.0
    } else {
        norm(&diff) / scale
    }
}

/// Soft-binned KL(q || uniform) straight from its definition.
pub fn kl_uniform(predictions: &[f64], centers: &[f64], bandwidth: f64) -> f64 {
    let k = centers.len();
    let mut q = vec![0.0; k];
    for &p in predictions {
        let raw: Vec<f64> =
            centers.iter().map(|c| (-(p - c) * (p - c) / (2.0 * bandwidth * bandwidth)).exp()).collect();
        let z: f64 = raw.iter().sum();
        for (q, r) in q.iter_mut().zip(raw) {
            *q += r / z / predictions.len() as f64;
        }
    }
    q.iter().filter(|&&q| q > 0.0).map(|q| q * (q * k as f64).ln()).sum()
}

pub fn gini(x: &[f64]) -> f64 {
    let n = x.len() as f64;
    let total: f64 = x.iter().sum();
    let mut pairwise = 0.0;
    for a in x {
        for b in x {
            pairwise += (a - b).abs();
        }
    }
    pairwise / (2.0 * n * total)
}

/// Textbook single-pass Pearson formula.
pub fn pearson(xs: &[f64], ys: &[f64]) -> f64 {
    let n = xs.len() as f64;
    let (sx, sy): (f64, f64) = (xs.iter().sum(), ys.iter().sum());
    let sxy: f64 = xs.iter().zip(ys).map(|(x, y)| x * y).sum();
    let sxx: f64 = xs.iter().map(|x| x * x).sum();
    let syy: f64 = ys.iter().map(|y| y * y).sum();
    (n * sxy - sx * sy) / ((n * sxx - sx * sx).sqrt() * (n * syy - sy * sy).sqrt())
}

/// Item `i` is in the tail when fewer than `tail` items are less popular than
/// it (lower count, or equal count and lower index).
pub fn tail_share(exposure: &[f64], popularity: &[u64], tail: usize) -> f64 {
    let n = exposure.len();
    let total: f64 = exposure.iter().sum();
    let mut share = 0.0;
    for i in 0..n {
        let less_popular = (0..n)
            .filter(|&j| popularity[j] < popularity[i] || (popularity[j] == popularity[i] && j < i))
            .count();
        if less_popular < tail {
            share += exposure[i];
        }
    }
    share / total
}

/// Item `i` makes user `u`'s list when fewer than `k` candidates outrank it.
pub fn top_k_exposure(scores: &[Vec<f64>], rated: &[Vec<bool>], k: usize) -> Vec<u64> {
    let n_items = scores[0].len();
    let mut counts = vec![0u64; n_items];
    for (u, row) in scores.iter().enumerate() {
        for i in 0..n_items {
            if rated[u][i] {
                continue;
            }
            let beaten_by = (0..n_items)
                .filter(|&j| !rated[u][j] && (row[j] > row[i] || (row[j] == row[i] && j < i)))
                .count();
            if beaten_by < k {
                counts[i] += 1;
            }
        }
    }
    counts
}
