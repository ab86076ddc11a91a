//! `fraudchain` command-line tool.
//!
//! Exit codes: 0 success, 1 usage or configuration error, 2 data validation
//! error, 3 internal error.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use fraudchain::config::RunConfig;
use fraudchain::data::{read_dataset, split_train_test, write_dataset, ClaimFeature};
use fraudchain::gbm::{CategoricalEncoding, TreeSelection};
use fraudchain::markov::ScoringMode;
use fraudchain::pipeline::{self, Detector};
use fraudchain::synth::generate;
use fraudchain::Error;

#[derive(Parser)]
#[command(name = "fraudchain", version, about = "Markov and boosted-tree fraud detectors for health insurance claims")]
struct Cli {
    /// TOML run configuration; command-line flags override its values.
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic claims dataset.
    Generate {
        #[arg(long, default_value = "dataset.csv")]
        out: PathBuf,
        #[command(flatten)]
        gen: GenArgs,
    },
    /// Split a dataset into train and test files.
    Split {
        #[arg(long)]
        input: PathBuf,
        #[arg(long, default_value = "train.csv")]
        train_out: PathBuf,
        #[arg(long, default_value = "test.csv")]
        test_out: PathBuf,
        #[command(flatten)]
        split: SplitArgs,
    },
    /// Train a model on a dataset file.
    Train {
        #[arg(long, value_enum)]
        kind: ModelKind,
        #[arg(long)]
        data: PathBuf,
        #[arg(long, default_value = ".")]
        out_dir: PathBuf,
        #[command(flatten)]
        markov: MarkovArgs,
        #[command(flatten)]
        gbm: GbmArgs,
    },
    /// Evaluate a model file on a dataset file.
    Evaluate {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        data: PathBuf,
        #[arg(long, default_value = ".")]
        out_dir: PathBuf,
        /// Decision threshold; defaults to the one stored in the model.
        #[arg(long)]
        threshold: Option<f64>,
    },
    /// Evaluate two model files on one dataset and report metric deltas.
    Compare {
        #[arg(long)]
        first: PathBuf,
        #[arg(long)]
        second: PathBuf,
        #[arg(long)]
        data: PathBuf,
        #[arg(long, default_value = ".")]
        out_dir: PathBuf,
    },
    /// generate -> split -> train both models -> evaluate -> compare.
    RunPaper {
        #[arg(long, default_value = "run")]
        out_dir: PathBuf,
        #[command(flatten)]
        gen: GenArgs,
        #[command(flatten)]
        split: SplitArgs,
        #[command(flatten)]
        markov: MarkovArgs,
        #[command(flatten)]
        gbm: GbmArgs,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum ModelKind {
    Markov,
    Gbm,
}

#[derive(Args)]
struct GenArgs {
    #[arg(long = "n")]
    n_claims: Option<usize>,
    #[arg(long)]
    fraud_rate: Option<f64>,
    #[arg(long)]
    signal_strength: Option<f64>,
    #[arg(long)]
    exact_counts: Option<bool>,
    /// Seed for generation, splitting and CV folds.
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    n_diagnosis_codes: Option<usize>,
    #[arg(long)]
    n_providers: Option<usize>,
    #[arg(long)]
    n_districts: Option<usize>,
}

#[derive(Args)]
struct SplitArgs {
    #[arg(long)]
    ratio: Option<f64>,
    #[arg(long = "split-seed")]
    split_seed: Option<u64>,
}

#[derive(Args)]
struct MarkovArgs {
    /// Comma-separated chain order of the Markov features.
    #[arg(long, value_delimiter = ',')]
    markov_features: Option<Vec<String>>,
    #[arg(long)]
    alpha: Option<f64>,
    #[arg(long)]
    markov_threshold: Option<f64>,
    #[arg(long)]
    days_bins: Option<usize>,
    #[arg(long)]
    net_bins: Option<usize>,
    #[arg(long, value_enum)]
    scoring: Option<Scoring>,
}

#[derive(Clone, Copy, ValueEnum)]
enum Scoring {
    State,
    Chain,
}

#[derive(Args)]
struct GbmArgs {
    #[arg(long, value_delimiter = ',')]
    gbm_features: Option<Vec<String>>,
    #[arg(long)]
    trees: Option<usize>,
    #[arg(long)]
    max_depth: Option<usize>,
    #[arg(long)]
    learning_rate: Option<f64>,
    #[arg(long)]
    cv_folds: Option<usize>,
    #[arg(long)]
    min_leaf: Option<usize>,
    #[arg(long)]
    gbm_seed: Option<u64>,
    /// Skip cross-validation and predict with every tree.
    #[arg(long)]
    no_cv: bool,
    /// Predict with every tree even when cross-validating.
    #[arg(long)]
    all_trees: bool,
    #[arg(long)]
    one_hot: bool,
    #[arg(long)]
    gbm_threshold: Option<f64>,
}

fn parse_features(names: &[String]) -> Result<Vec<ClaimFeature>, Error> {
    names.iter().map(|n| n.trim().parse()).collect()
}

impl GenArgs {
    fn apply(&self, cfg: &mut RunConfig) {
        let g = &mut cfg.generate;
        if let Some(v) = self.n_claims {
            g.n_claims = v;
        }
        if let Some(v) = self.fraud_rate {
            g.fraud_rate = v;
        }
        if let Some(v) = self.signal_strength {
            g.signal_strength = v;
        }
        if let Some(v) = self.exact_counts {
            g.exact_counts = v;
        }
        if let Some(v) = self.n_diagnosis_codes {
            g.n_diagnosis_codes = v;
        }
        if let Some(v) = self.n_providers {
            g.n_providers = v;
        }
        if let Some(v) = self.n_districts {
            g.n_districts = v;
        }
        if let Some(seed) = self.seed {
            cfg.set_seed(seed);
        }
    }
}

impl SplitArgs {
    fn apply(&self, cfg: &mut RunConfig) {
        if let Some(v) = self.ratio {
            cfg.split.ratio = v;
        }
        if let Some(v) = self.split_seed {
            cfg.split.seed = v;
        }
    }
}

impl MarkovArgs {
    fn apply(&self, cfg: &mut RunConfig) -> Result<(), Error> {
        let m = &mut cfg.markov;
        if let Some(names) = &self.markov_features {
            m.features = parse_features(names)?;
        }
        if let Some(v) = self.alpha {
            m.alpha = v;
        }
        if let Some(v) = self.markov_threshold {
            m.threshold = v;
        }
        if let Some(v) = self.days_bins {
            m.bins.insert("days_stayed".into(), v);
        }
        if let Some(v) = self.net_bins {
            m.bins.insert("net_amount".into(), v);
        }
        if let Some(s) = self.scoring {
            m.scoring = match s {
                Scoring::State => ScoringMode::State,
                Scoring::Chain => ScoringMode::Chain,
            };
        }
        Ok(())
    }
}

impl GbmArgs {
    fn apply(&self, cfg: &mut RunConfig) -> Result<(), Error> {
        let g = &mut cfg.gbm;
        if let Some(names) = &self.gbm_features {
            g.features = parse_features(names)?;
        }
        if let Some(v) = self.trees {
            g.n_trees = v;
        }
        if let Some(v) = self.max_depth {
            g.max_depth = v;
        }
        if let Some(v) = self.learning_rate {
            g.learning_rate = v;
        }
        if let Some(v) = self.cv_folds {
            g.cv_folds = v;
        }
        if let Some(v) = self.min_leaf {
            g.min_leaf_count = v;
        }
        if let Some(v) = self.gbm_seed {
            g.seed = v;
        }
        if self.no_cv {
            g.cross_validate = false;
        }
        if self.all_trees || self.no_cv {
            g.tree_selection = TreeSelection::All;
        }
        if self.one_hot {
            g.encoding = CategoricalEncoding::OneHot;
        }
        if let Some(v) = self.gbm_threshold {
            g.threshold = v;
        }
        Ok(())
    }
}

/// Writes the resolved config next to a file output: `<file>.config.toml`.
fn config_beside(file: &Path) -> PathBuf {
    let mut name = file.file_name().unwrap_or_default().to_os_string();
    name.push(".config.toml");
    file.with_file_name(name)
}

fn ensure_dir(dir: &Path) -> Result<(), Error> {
    std::fs::create_dir_all(dir).map_err(|source| Error::Io {
        path: dir.to_path_buf(),
        source,
    })
}

fn run(cli: Cli) -> Result<(), Error> {
    let mut cfg = match &cli.config {
        Some(path) => RunConfig::load(path)?,
        None => RunConfig::default(),
    };

    match cli.command {
        Command::Generate { out, gen } => {
            gen.apply(&mut cfg);
            cfg.validate()?;
            let ds = generate(&cfg.generate)?;
            write_dataset(&ds, &out)?;
            cfg.save(config_beside(&out))?;
            println!(
                "wrote {} claims ({} fraud, {:.2}%) to {}",
                ds.len(),
                ds.fraud_count(),
                100.0 * ds.fraud_rate(),
                out.display()
            );
        }
        Command::Split {
            input,
            train_out,
            test_out,
            split,
        } => {
            split.apply(&mut cfg);
            cfg.validate()?;
            let ds = read_dataset(&input)?;
            let s = split_train_test(&ds, cfg.split.ratio, cfg.split.seed)?;
            write_dataset(&s.train, &train_out)?;
            write_dataset(&s.test, &test_out)?;
            cfg.save(config_beside(&train_out))?;
            println!("train: {} rows, test: {} rows", s.train.len(), s.test.len());
        }
        Command::Train {
            kind,
            data,
            out_dir,
            markov,
            gbm,
        } => {
            markov.apply(&mut cfg)?;
            gbm.apply(&mut cfg)?;
            cfg.validate()?;
            let ds = read_dataset(&data)?;
            ensure_dir(&out_dir)?;
            cfg.save(out_dir.join("resolved_config.toml"))?;
            match kind {
                ModelKind::Markov => {
                    let m = pipeline::train_markov(&ds, &cfg.markov)?;
                    let path = out_dir.join("markov_model.toml");
                    m.save(&path)?;
                    println!("{} states; model written to {}", m.model.state_table.len(), path.display());
                }
                ModelKind::Gbm => {
                    let (m, cv) = pipeline::train_gbm(&ds, &cfg.gbm)?;
                    let path = out_dir.join("gbm_model.toml");
                    m.save(&path)?;
                    pipeline::write_train_deviance(&m, &out_dir.join("gbm_train_deviance.csv"))?;
                    if let Some(cv) = &cv {
                        pipeline::write_cv_report(cv, &out_dir.join("gbm_cv.csv"))?;
                        println!("cv best iteration: {}", cv.best_iteration);
                    }
                    println!("{} trees; model written to {}", m.model.trees.len(), path.display());
                }
            }
        }
        Command::Evaluate {
            model,
            data,
            out_dir,
            threshold,
        } => {
            let detector = Detector::load(&model)?;
            let ds = read_dataset(&data)?;
            let (report, _) = pipeline::evaluate(&detector, &ds, threshold, detector.kind(), &out_dir, detector.kind())?;
            print!("{}", report.to_text());
        }
        Command::Compare {
            first,
            second,
            data,
            out_dir,
        } => {
            let a = Detector::load(&first)?;
            let b = Detector::load(&second)?;
            let ds = read_dataset(&data)?;
            let (na, nb) = if a.kind() == b.kind() {
                (format!("{}_1", a.kind()), format!("{}_2", b.kind()))
            } else {
                (a.kind().to_string(), b.kind().to_string())
            };
            let cmp = pipeline::compare((&na, &a), (&nb, &b), &ds, &out_dir)?;
            print!("{}", cmp.to_text());
        }
        Command::RunPaper {
            out_dir,
            gen,
            split,
            markov,
            gbm,
        } => {
            gen.apply(&mut cfg);
            split.apply(&mut cfg);
            markov.apply(&mut cfg)?;
            gbm.apply(&mut cfg)?;
            let summary = pipeline::run_paper(&cfg, &out_dir)?;
            println!(
                "train {} / test {} claims, {} Markov states",
                summary.n_train, summary.n_test, summary.markov_states
            );
            print!("{}", summary.comparison.to_text());
            println!("outputs in {}", out_dir.display());
        }
    }
    Ok(())
}

fn exit_code(err: &Error) -> u8 {
    match err {
        Error::Config(_) => 1,
        Error::Io { source, .. } if source.kind() == std::io::ErrorKind::NotFound => 2,
        e if e.is_data_error() => 2,
        _ => 3,
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}
