use std::fs::File;
use std::io::BufWriter;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use histeq_rec::formats::{self, ComodaColumns};
use histeq_rec::harness::{
    self, Algorithm, DatasetFormat, DatasetSpec, EqualizeFit, EqualizeMode, EvalSpaces, ExperimentConfig,
};
use histeq_rec::synthetic::{self, SyntheticSpec};
use histeq_rec::{Error, Result};
use histeq_rec_core::{equalize, UnseenLevel};

#[derive(Parser)]
#[command(name = "histeq-rec", version, about = "Histogram-equalized rating preprocessing for matrix factorization")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the load / equalize / train / evaluate comparison and write a report.
    Run(RunArgs),
    /// Fit an equalization map on a whole dataset and write it as CSV.
    Map(MapArgs),
    /// Write a seeded MovieLens-shaped synthetic ratings file.
    Synth(SynthArgs),
}

#[derive(Args)]
struct DatasetArgs {
    #[arg(long)]
    dataset: PathBuf,
    #[arg(long, value_enum)]
    format: DatasetFormat,
    #[arg(long, default_value = "userID")]
    user_col: String,
    #[arg(long, default_value = "itemID")]
    item_col: String,
    #[arg(long, default_value = "rating")]
    rating_col: String,
}

impl DatasetArgs {
    fn spec(&self) -> DatasetSpec {
        DatasetSpec {
            path: self.dataset.clone(),
            format: self.format,
            columns: ComodaColumns {
                user: self.user_col.clone(),
                item: self.item_col.clone(),
                rating: self.rating_col.clone(),
            },
        }
    }
}

#[derive(Args)]
struct RunArgs {
    #[command(flatten)]
    data: DatasetArgs,
    #[arg(long, value_enum, value_delimiter = ',', default_value = "mf,kl_uniform")]
    algos: Vec<Algorithm>,
    #[arg(long, value_enum, default_value = "both")]
    equalize: EqualizeMode,
    #[arg(long, value_enum, default_value = "train-only")]
    equalize_fit: EqualizeFit,
    /// Scale of equalized values [default: the dataset's highest level]
    #[arg(long)]
    r_max: Option<f64>,
    /// Map ratings missing from the fitted map to the nearest level instead of failing.
    #[arg(long)]
    nearest_level_fallback: bool,
    #[arg(long, default_value_t = 16)]
    rank: usize,
    #[arg(long, default_value_t = 30)]
    epochs: usize,
    #[arg(long, default_value_t = 0.005)]
    lr: f64,
    #[arg(long, default_value_t = 0.02)]
    l2: f64,
    #[arg(long, default_value_t = 0.1)]
    init_scale: f64,
    #[arg(long, default_value_t = 1.0)]
    kl_weight: f64,
    #[arg(long, default_value_t = 0.5)]
    kl_bandwidth: f64,
    #[arg(long, default_value_t = 0.2)]
    test_fraction: f64,
    #[arg(long, default_value_t = 42)]
    seed: u64,
    #[arg(long)]
    subsample: Option<usize>,
    #[arg(long, value_enum, default_value = "both")]
    eval_space: EvalSpaces,
    #[arg(long, default_value_t = 10)]
    top_k: usize,
    #[arg(long, default_value_t = 0.8)]
    tail_fraction: f64,
    /// Report path; plot data goes next to it as <out>.metrics.csv and <out>.loss.csv.
    #[arg(long)]
    out: PathBuf,
}

impl RunArgs {
    fn config(&self) -> ExperimentConfig {
        ExperimentConfig {
            dataset: self.data.spec(),
            subsample: self.subsample,
            test_fraction: self.test_fraction,
            seed: self.seed,
            equalize: self.equalize,
            equalize_fit: self.equalize_fit,
            r_max: self.r_max,
            unseen_level: if self.nearest_level_fallback { UnseenLevel::Nearest } else { UnseenLevel::Reject },
            algorithms: self.algos.clone(),
            rank: self.rank,
            epochs: self.epochs,
            learning_rate: self.lr,
            l2: self.l2,
            init_scale: self.init_scale,
            kl_weight: self.kl_weight,
            kl_bandwidth: self.kl_bandwidth,
            eval_space: self.eval_space,
            top_k: self.top_k,
            tail_fraction: self.tail_fraction,
        }
    }
}

#[derive(Args)]
struct MapArgs {
    #[command(flatten)]
    data: DatasetArgs,
    #[arg(long)]
    r_max: Option<f64>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct SynthArgs {
    #[arg(long, default_value_t = 2023)]
    seed: u64,
    #[arg(long, default_value_t = 6040)]
    users: usize,
    #[arg(long, default_value_t = 3706)]
    items: usize,
    #[arg(long, default_value_t = 1_000_209)]
    ratings: usize,
    #[arg(long)]
    out: PathBuf,
}

fn run(args: &RunArgs) -> Result<()> {
    let config = args.config();
    eprintln!("{}", serde_json::to_string_pretty(&config)?);
    let report = harness::run_experiment(&config)?;
    harness::write_report(&report, &args.out)?;
    let files = harness::emit_plot_data(&report, &args.out)?;
    for row in &report.rows {
        eprintln!(
            "{:<10} equalized={:<5} {:<9} mae={:.4} rmse={:.4} gini={:.4} pop_corr={:.4} tail={:.4}",
            row.algorithm.as_str(),
            row.equalized,
            row.eval.eval_space.as_str(),
            row.eval.mae,
            row.eval.rmse,
            row.eval.exposure_gini,
            row.eval.popularity_corr,
            row.eval.tail_share
        );
    }
    eprintln!("wrote {}, {}, {}", args.out.display(), files.metrics.display(), files.loss.display());
    Ok(())
}

fn map(args: &MapArgs) -> Result<()> {
    let ratings = harness::load_dataset(&args.data.spec())?;
    let r_max = args.r_max.unwrap_or(ratings.levels()[ratings.levels().len() - 1]);
    let map = equalize::fit(&ratings, r_max)?;
    formats::save_map_csv(&map, &args.out)
}

fn synth(args: &SynthArgs) -> Result<()> {
    let spec = SyntheticSpec {
        n_users: args.users,
        n_items: args.items,
        n_ratings: args.ratings,
        seed: args.seed,
        ..SyntheticSpec::default()
    };
    let ratings = synthetic::generate(&spec);
    write_file(&args.out, |out| synthetic::write_movielens(&ratings, out))
}

fn write_file(path: &Path, body: impl FnOnce(BufWriter<File>) -> std::io::Result<()>) -> Result<()> {
    File::create(path).map(BufWriter::new).and_then(body).map_err(|e| Error::Io { path: path.into(), source: e })
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Run(args) => run(args),
        Command::Map(args) => map(args),
        Command::Synth(args) => synth(args),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
