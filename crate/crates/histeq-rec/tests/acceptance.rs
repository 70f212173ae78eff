//! Acceptance checks. Prints one PASS / FAIL / SKIP line per criterion and
//! exits non-zero if anything failed.
//!
//! Real datasets are looked up through `HISTEQ_ML1M` (MovieLens-1M
//! `ratings.dat`) and `HISTEQ_COMODA` (CoMoDa CSV), falling back to
//! `data/ml-1m/ratings.dat` and `data/comoda.csv` under the workspace root.

#[path = "../../core/tests/oracles/mod.rs"]
mod oracles;

use std::fs;
use std::path::{Path, PathBuf};
use std::time::{Duration, Instant};

use histeq_rec::formats::{load_comoda_csv, load_movielens_1m, ComodaColumns};
use histeq_rec::harness::{Algorithm, DatasetFormat, EqualizeMode, EvalSpaces, ExperimentConfig};
use histeq_rec::synthetic::{generate, write_movielens, SyntheticSpec};
use histeq_rec::{run_experiment, write_report, ComparisonReport};
use histeq_rec_core::equalize::{apply, build_equalization_map, build_histogram, RatingHistogram, UnseenLevel};
use histeq_rec_core::evaluate::{
    exposure_gini, mae, popularity_corr, rmse, tail_share, top_k_exposure, EvalSpace, Scorer,
};
use histeq_rec_core::factorize::{objective, objective_gradient};
use histeq_rec_core::{train, FactorModel, Observation, Regularizer, SparseRatings, TrainConfig};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

enum Outcome {
    Pass(String),
    Fail(String),
    Skip(String),
}

use Outcome::{Fail, Pass, Skip};

fn check(ok: bool, detail: String) -> Outcome {
    if ok {
        Pass(detail)
    } else {
        Fail(detail)
    }
}

fn secs(d: Duration) -> String {
    format!("{:.3}s", d.as_secs_f64())
}

fn random_histogram(rng: &mut ChaCha8Rng) -> (Vec<f64>, Vec<u64>, f64) {
    let n = rng.random_range(1..=10);
    let mut levels: Vec<f64> = Vec::with_capacity(n);
    let mut next = rng.random_range(-5.0..5.0);
    for _ in 0..n {
        levels.push(next);
        next += rng.random_range(0.01..3.0);
    }
    let mut counts: Vec<u64> = (0..n).map(|_| rng.random_range(1..=40)).collect();
    // a few zero counts exercise the level-dropping path
    if n > 1 && rng.random_bool(0.2) {
        counts[rng.random_range(0..n - 1)] = 0;
    }
    (levels, counts, rng.random_range(0.5..20.0))
}

fn c1_map_matches_cdf_oracle() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let cases: Vec<_> = (0..1000).map(|_| random_histogram(&mut rng)).collect();
    let start = Instant::now();
    let mut worst = 0.0f64;
    for (levels, counts, r_max) in &cases {
        let hist = RatingHistogram::from_counts(levels, counts).unwrap();
        let map = build_equalization_map(&hist, *r_max).unwrap();
        let want = oracles::equalized_levels(counts, *r_max);
        if map.transformed().len() != want.len() {
            return Fail("level count mismatch".into());
        }
        for (a, b) in map.transformed().iter().zip(&want) {
            worst = worst.max((a - b).abs());
        }
    }
    let elapsed = start.elapsed();
    check(
        worst <= 1e-12 && elapsed < Duration::from_secs(1),
        format!("1000 histograms, max |diff| {worst:.3e}, {}", secs(elapsed)),
    )
}

fn c2_map_invariants() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    for (levels, counts, r_max) in (0..1000).map(|_| random_histogram(&mut rng)) {
        let map = build_equalization_map(&RatingHistogram::from_counts(&levels, &counts).unwrap(), r_max).unwrap();
        let t = map.transformed();
        if t.windows(2).any(|w| w[0] >= w[1]) {
            return Fail(format!("not strictly increasing: {t:?}"));
        }
        if *t.last().unwrap() != r_max {
            return Fail(format!("last value {} != r_max {r_max}", t.last().unwrap()));
        }
        for (level, value) in map.levels().iter().zip(t) {
            if map.invert(*value) != *level {
                return Fail(format!("invert({value}) != {level}"));
            }
        }
    }
    Pass("1000 histograms: strictly increasing, last == r_max, invert exact".into())
}

fn random_ratings(rng: &mut ChaCha8Rng) -> SparseRatings {
    let (levels, _, _) = random_histogram(rng);
    let (n_users, n_items) = (rng.random_range(1..=40u32), rng.random_range(1..=40u32));
    let cells = (n_users * n_items) as usize;
    let n = rng.random_range(1..=500.min(cells));
    let mut used = vec![false; levels.len()];
    let observations: Vec<Observation> = rand::seq::index::sample(rng, cells, n)
        .into_iter()
        .map(|cell| {
            let k = rng.random_range(0..levels.len());
            used[k] = true;
            Observation { user: cell as u32 / n_items, item: cell as u32 % n_items, rating: levels[k] }
        })
        .collect();
    let levels = levels.iter().zip(&used).filter(|(_, u)| **u).map(|(l, _)| *l).collect();
    SparseRatings::from_dense(observations, n_users as usize, n_items as usize, levels).unwrap()
}

fn c3_apply_preserves_order_and_counts() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for case in 0..200 {
        let ratings = random_ratings(&mut rng);
        let map = build_equalization_map(&build_histogram(&ratings).unwrap(), 5.0).unwrap();
        let out = apply(&map, &ratings, UnseenLevel::Reject).unwrap();
        let (a, b) = (ratings.observations(), out.observations());
        if a.len() != b.len() {
            return Fail(format!("case {case}: length changed"));
        }
        for (x, y) in a.iter().zip(b) {
            if (x.user, x.item) != (y.user, y.item) {
                return Fail(format!("case {case}: cell moved"));
            }
        }
        for i in 0..a.len() {
            for j in 0..a.len() {
                if a[i].rating.partial_cmp(&a[j].rating) != b[i].rating.partial_cmp(&b[j].rating) {
                    return Fail(format!("case {case}: order of {i} and {j} changed"));
                }
            }
        }
        if build_histogram(&ratings).unwrap().counts() != build_histogram(&out).unwrap().counts() {
            return Fail(format!("case {case}: level counts changed"));
        }
    }
    Pass("200 random rating sets (<= 500 observations): pairwise order and level counts kept".into())
}

struct GradInstance {
    ratings: SparseRatings,
    model: FactorModel,
    config: TrainConfig,
}

fn grad_instance(rng: &mut ChaCha8Rng) -> GradInstance {
    let n_users = rng.random_range(2..=10);
    let n_items = rng.random_range(2..=10);
    let rank = rng.random_range(1..=4);
    let levels = vec![1.0, 2.0, 3.0, 4.0, 5.0];
    let mut observations = Vec::new();
    for user in 0..n_users as u32 {
        for item in 0..n_items as u32 {
            if rng.random_bool(0.4) {
                observations.push(Observation { user, item, rating: levels[rng.random_range(0..5)] });
            }
        }
    }
    if observations.is_empty() {
        observations.push(Observation { user: 0, item: 0, rating: 3.0 });
    }
    let ratings = SparseRatings::from_dense(observations, n_users, n_items, levels).unwrap();
    let mut draw = |n: usize| (0..n * rank).map(|_| rng.random_range(-1.5..1.5)).collect::<Vec<f64>>();
    let (u, v) = (draw(n_users), draw(n_items));
    let model = FactorModel::from_parts(n_users, n_items, rank, u, v).unwrap();
    let config = TrainConfig {
        rank,
        l2: rng.random_range(0.0..0.5),
        regularizer: Regularizer::KlUniform {
            weight: rng.random_range(0.1..3.0),
            bandwidth: rng.random_range(0.3..1.5),
        },
        ..TrainConfig::default()
    };
    GradInstance { ratings, model, config }
}

fn oracle_objective(inst: &GradInstance, flat: &[f64]) -> f64 {
    let rank = inst.model.rank();
    let (u, v) = flat.split_at(inst.model.n_users() * rank);
    let Regularizer::KlUniform { weight, bandwidth } = inst.config.regularizer else { unreachable!() };
    let obs = inst.ratings.observations();
    let predictions: Vec<f64> = obs
        .iter()
        .map(|o| (0..rank).map(|f| u[o.user as usize * rank + f] * v[o.item as usize * rank + f]).sum())
        .collect();
    let sq: f64 = obs.iter().zip(&predictions).map(|(o, p)| (o.rating - p).powi(2)).sum();
    let l2 = inst.config.l2 * flat.iter().map(|x| x * x).sum::<f64>();
    sq + l2 + weight * predictions.len() as f64 * oracles::kl_uniform(&predictions, inst.ratings.levels(), bandwidth)
}

fn c4_gradient_check() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let start = Instant::now();
    let mut worst = 0.0f64;
    for case in 0..20 {
        let inst = grad_instance(&mut rng);
        let flat: Vec<f64> = inst.model.user_factors().iter().chain(inst.model.item_factors()).copied().collect();
        let value = objective(&inst.model, &inst.ratings, &inst.config).unwrap();
        let want = oracle_objective(&inst, &flat);
        if (value - want).abs() > 1e-10 * want.abs().max(1.0) {
            return Fail(format!("case {case}: objective {value} vs oracle {want}"));
        }
        let (gu, gv) = objective_gradient(&inst.model, &inst.ratings, &inst.config).unwrap();
        let analytic: Vec<f64> = gu.into_iter().chain(gv).collect();
        let numeric = oracles::central_difference(&|x| oracle_objective(&inst, x), &flat, 1e-5);
        worst = worst.max(oracles::relative_error(&analytic, &numeric));
    }
    let elapsed = start.elapsed();
    check(
        worst <= 1e-4 && elapsed < Duration::from_secs(5),
        format!("20 instances, squared error + L2 + kl_uniform, max rel err {worst:.3e}, {}", secs(elapsed)),
    )
}

fn c5_rank_one_recovery() -> Outcome {
    let observations = [(0, 0, 1.0), (0, 1, 2.0), (1, 0, 2.0), (1, 1, 4.0)]
        .map(|(user, item, rating)| Observation { user, item, rating })
        .to_vec();
    let ratings = SparseRatings::from_dense(observations, 2, 2, vec![1.0, 2.0, 4.0]).unwrap();
    let config = TrainConfig { rank: 1, epochs: 500, learning_rate: 0.05, l2: 0.0, ..TrainConfig::default() };
    let start = Instant::now();
    let trained = train(&ratings, &config).unwrap();
    let elapsed = start.elapsed();
    let rmse = trained.loss_trace.last().unwrap().sqrt();
    let first = trained.loss_trace.iter().position(|m| m.sqrt() <= 1e-3).map_or(0, |e| e + 1);
    check(
        rmse <= 1e-3 && elapsed < Duration::from_secs(2),
        format!("train rmse {rmse:.3e} after 500 epochs (first <= 1e-3 at epoch {first}), {}", secs(elapsed)),
    )
}

fn workspace_root() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../..")
}

fn dataset(var: &str, fallback: &str) -> Option<PathBuf> {
    let path = std::env::var_os(var).map(PathBuf::from).unwrap_or_else(|| workspace_root().join(fallback));
    path.is_file().then_some(path)
}

fn ml1m() -> Option<PathBuf> {
    dataset("HISTEQ_ML1M", "data/ml-1m/ratings.dat")
}

fn c6_ml1m_counts() -> Outcome {
    let Some(path) = ml1m() else {
        return Skip("MovieLens-1M ratings.dat not found (set HISTEQ_ML1M)".into());
    };
    let r = load_movielens_1m(&path).unwrap();
    let got = (r.n_users(), r.n_items(), r.len());
    check(got == (6040, 3706, 1_000_209), format!("users/items/ratings = {got:?}"))
}

fn c6_comoda_counts() -> Outcome {
    let Some(path) = dataset("HISTEQ_COMODA", "data/comoda.csv") else {
        return Skip("CoMoDa CSV not found (set HISTEQ_COMODA)".into());
    };
    let r = load_comoda_csv(&path, &ComodaColumns::default()).unwrap();
    let got = (r.n_users(), r.n_items());
    check(got == (121, 1232), format!("users/items = {got:?}, {} ratings", r.len()))
}

fn subsample_config(path: &Path) -> ExperimentConfig {
    ExperimentConfig {
        subsample: Some(100_000),
        rank: 16,
        epochs: 30,
        algorithms: vec![Algorithm::Mf, Algorithm::KlUniform],
        equalize: EqualizeMode::Both,
        eval_space: EvalSpaces::Both,
        ..ExperimentConfig::new(path, DatasetFormat::Movielens1m)
    }
}

struct Run {
    report: ComparisonReport,
    elapsed: Duration,
    bytes: Vec<u8>,
}

fn run_once(config: &ExperimentConfig, out: &Path) -> Run {
    let start = Instant::now();
    let report = run_experiment(config).unwrap();
    write_report(&report, out).unwrap();
    let elapsed = start.elapsed();
    Run { report, elapsed, bytes: fs::read(out).unwrap() }
}

fn baseline_mae(report: &ComparisonReport) -> f64 {
    report
        .rows
        .iter()
        .find(|r| r.algorithm == Algorithm::Mf && !r.equalized && r.eval.eval_space == EvalSpace::Original)
        .map(|r| r.eval.mae)
        .unwrap()
}

fn c7_outcome(label: &str, run: &Run, with_bound: bool) -> Outcome {
    let finite = run.report.rows.iter().all(|r| r.eval.mae.is_finite());
    let mae = baseline_mae(&run.report);
    let fast = run.elapsed < Duration::from_secs(120);
    let detail = format!(
        "{label}: {} rows, all MAE finite = {finite}, mf original-space MAE {mae:.4}, {}",
        run.report.rows.len(),
        secs(run.elapsed)
    );
    check(finite && fast && (!with_bound || mae <= 0.95), detail)
}

fn main() {
    let mut results: Vec<(&str, Outcome)> = vec![
        ("1 equalization map vs CDF oracle", c1_map_matches_cdf_oracle()),
        ("2 equalization map invariants", c2_map_invariants()),
        ("3 apply keeps order and counts", c3_apply_preserves_order_and_counts()),
        ("4 full-objective gradient check", c4_gradient_check()),
        ("5 rank-1 recovery", c5_rank_one_recovery()),
        ("6 MovieLens-1M ingestion counts", c6_ml1m_counts()),
        ("6 CoMoDa ingestion counts", c6_comoda_counts()),
    ];

    let scratch = tempfile::TempDir::new().unwrap();
    match ml1m() {
        Some(path) => {
            let config = subsample_config(&path);
            let first = run_once(&config, &scratch.path().join("a.json"));
            let second = run_once(&config, &scratch.path().join("a.json"));
            results.push(("7 100k MovieLens-1M comparison run", c7_outcome("MovieLens-1M", &first, true)));
            results.push(("8 rerun is byte-identical", check(first.bytes == second.bytes, format!("{} bytes", first.bytes.len()))));
        }
        None => {
            // Same pipeline on a seeded MovieLens-shaped file. It checks the
            // runtime, finiteness and determinism parts only; the MAE bound
            // is about the real data and is reported as skipped.
            let path = scratch.path().join("synthetic.dat");
            write_movielens(&generate(&SyntheticSpec::default()), fs::File::create(&path).unwrap()).unwrap();
            let config = subsample_config(&path);
            let first = run_once(&config, &scratch.path().join("a.json"));
            let second = run_once(&config, &scratch.path().join("a.json"));
            results.push(("7 100k comparison run [synthetic stand-in]", c7_outcome("synthetic", &first, false)));
            results.push((
                "7 baseline MAE <= 0.95 on MovieLens-1M",
                Skip("MovieLens-1M ratings.dat not found (set HISTEQ_ML1M)".into()),
            ));
            results.push((
                "8 rerun is byte-identical [synthetic stand-in]",
                check(first.bytes == second.bytes, format!("{} bytes", first.bytes.len())),
            ));
        }
    }

    results.push(("9 fairness metrics vs brute force", c9_fairness_oracles()));
    results.push(("10 mae <= rmse, gini in [0, 1]", c10_metric_bounds()));

    let mut failed = 0;
    for (name, outcome) in &results {
        let (tag, detail) = match outcome {
            Pass(d) => ("PASS", d),
            Fail(d) => {
                failed += 1;
                ("FAIL", d)
            }
            Skip(d) => ("SKIP", d),
        };
        println!("{tag} criterion {name}: {detail}");
    }
    if failed > 0 {
        eprintln!("{failed} acceptance criteria failed");
        std::process::exit(1);
    }
}

struct Table(Vec<Vec<f64>>);

impl Scorer for Table {
    fn score(&self, user: usize, item: usize) -> f64 {
        self.0[user][item]
    }
}

fn c9_fairness_oracles() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let mut worst = 0.0f64;
    let mut corr_checked = 0;
    for case in 0..100 {
        let n_users = rng.random_range(1..=5);
        let n_items = rng.random_range(2..=10);
        let scores: Vec<Vec<f64>> =
            (0..n_users).map(|_| (0..n_items).map(|_| f64::from(rng.random_range(0..8u8)) * 0.25).collect()).collect();
        let rated: Vec<Vec<bool>> =
            (0..n_users).map(|_| (0..n_items).map(|_| rng.random_bool(0.3)).collect()).collect();
        let (mut train, mut test) = (Vec::new(), Vec::new());
        for (u, row) in rated.iter().enumerate() {
            for (i, &is_rated) in row.iter().enumerate() {
                let o = Observation { user: u as u32, item: i as u32, rating: 1.0 };
                if is_rated {
                    train.push(o);
                } else if rng.random_bool(0.5) {
                    test.push(o);
                }
            }
        }
        let train = SparseRatings::from_dense(train, n_users, n_items, vec![1.0]).unwrap();
        let test = SparseRatings::from_dense(test, n_users, n_items, vec![1.0]).unwrap();
        let k = rng.random_range(1..=n_items);
        let table = Table(scores.clone());

        let exposure = top_k_exposure(&table, k, &train).unwrap();
        if exposure != oracles::top_k_exposure(&scores, &rated, k) {
            return Fail(format!("case {case}: top-k exposure differs"));
        }
        let exposure: Vec<f64> = exposure.into_iter().map(|c| c as f64).collect();
        if exposure.iter().sum::<f64>() > 0.0 {
            worst = worst.max((exposure_gini(&exposure).unwrap() - oracles::gini(&exposure)).abs());
            let fraction = rng.random_range(0.05..0.95);
            let tail = (n_items as f64 * fraction).floor() as usize;
            let got = tail_share(&exposure, &train, fraction).unwrap();
            worst = worst.max((got - oracles::tail_share(&exposure, &train.item_counts(), tail)).abs());
        }

        let popularity = train.item_counts();
        let items: Vec<usize> =
            (0..n_items).filter(|&i| test.observations().iter().any(|o| o.item as usize == i)).collect();
        if items.len() >= 2 {
            let xs: Vec<f64> = items.iter().map(|&i| popularity[i] as f64).collect();
            let ys: Vec<f64> = items
                .iter()
                .map(|&i| {
                    let s: Vec<f64> = test
                        .observations()
                        .iter()
                        .filter(|o| o.item as usize == i)
                        .map(|o| scores[o.user as usize][i])
                        .collect();
                    s.iter().sum::<f64>() / s.len() as f64
                })
                .collect();
            let got = popularity_corr(&table, &train, &test).unwrap();
            let want = oracles::pearson(&xs, &ys);
            if want.is_nan() {
                if !got.degenerate {
                    return Fail(format!("case {case}: zero-variance correlation not flagged"));
                }
            } else {
                worst = worst.max((got.value - want).abs());
                corr_checked += 1;
            }
        }
    }
    check(
        worst <= 1e-12,
        format!("100 instances ({corr_checked} with a defined correlation), max |diff| {worst:.3e}"),
    )
}

fn c10_metric_bounds() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(10);
    for case in 0..1000 {
        let n = rng.random_range(1..100);
        let p: Vec<f64> = (0..n).map(|_| rng.random_range(-10.0..10.0)).collect();
        let t: Vec<f64> = (0..n).map(|_| rng.random_range(-10.0..10.0)).collect();
        let (m, r) = (mae(&p, &t).unwrap(), rmse(&p, &t).unwrap());
        if m > r {
            return Fail(format!("case {case}: mae {m} > rmse {r}"));
        }
        let mut counts: Vec<f64> = (0..n).map(|_| f64::from(rng.random_range(0..50u32))).collect();
        counts[0] += 1.0;
        let g = exposure_gini(&counts).unwrap();
        if !(0.0..=1.0).contains(&g) {
            return Fail(format!("case {case}: gini {g}"));
        }
    }
    Pass("1000 random inputs".into())
}
