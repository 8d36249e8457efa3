use std::fs::File;
use std::io::{self, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};

use scora::experiments::{
    parse_optional_law, passive_instance, run_convergence, run_sweetspot, write_rows, ExperimentConfig, ResultRow,
};
use scora::metrics::{pearson_corr, weighted_corr_exp};
use scora::model::{Embedding, ScoraModel};
use scora::rootlaw::RootLaw;
use scora::solver::{solve_map, SolverConfig};
use scora::synth::one_hot_embedding;
use scora::{io as csvio, properties};

/// Score entities from ratings and comparisons, and run synthetic experiments.
#[derive(Parser)]
#[command(name = "scora", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Passive convergence sweep over budgets and comparison fractions.
    Convergence(RunArgs),
    /// Active-learning sweep scored by the weighted correlation.
    Sweetspot(RunArgs),
    /// Run every property suite and report one line per suite.
    Properties {
        #[arg(long, default_value_t = 1)]
        seed: u64,
    },
    /// Write one synthetic dataset with its ground truth.
    Gen(GenArgs),
    /// Fit a dataset and write the estimated scores.
    Solve(SolveArgs),
}

#[derive(Args)]
struct RunArgs {
    #[command(flatten)]
    config: ConfigArgs,
    /// Result CSV path; stdout when omitted.
    #[arg(long)]
    out: Option<PathBuf>,
}

/// Overrides are applied in order: preset, config file, individual flags.
#[derive(Args)]
struct ConfigArgs {
    /// TOML file whose keys mirror the experiment configuration fields.
    #[arg(long)]
    config: Option<PathBuf>,
    /// fig1a, fig1b, fig2, fig3, fig4, appc-ratings or appc-comparisons.
    #[arg(long)]
    preset: Option<String>,
    /// Base seed of the run.
    #[arg(long)]
    seed: Option<u64>,
    /// Repetitions per grid point.
    #[arg(long)]
    reps: Option<usize>,
    #[arg(long)]
    entities: Option<usize>,
    /// `identity` or `onehot:<k>`.
    #[arg(long)]
    embedding: Option<String>,
    /// Generative comparison law: `<k>`, `uniform` or `gaussian:<v>`.
    #[arg(long)]
    k_c: Option<String>,
    /// Generative rating law.
    #[arg(long)]
    k_r: Option<String>,
    /// Inference comparison law, `none` to reuse the generative one.
    #[arg(long)]
    inference_f: Option<String>,
    /// Inference rating law, `none` to reuse the generative one.
    #[arg(long)]
    inference_g: Option<String>,
    /// Ground-truth prior on β: `gaussian:<var>` or `cauchy:<scale>`.
    #[arg(long)]
    prior: Option<String>,
    #[arg(long)]
    threshold_variance: Option<f64>,
    #[arg(long)]
    prior_var_beta: Option<f64>,
    #[arg(long)]
    prior_var_threshold: Option<f64>,
    /// Comma-separated budgets.
    #[arg(long, value_delimiter = ',')]
    budgets: Option<Vec<f64>>,
    /// Comma-separated comparison fractions.
    #[arg(long, value_delimiter = ',')]
    p_c: Option<Vec<f64>>,
    #[arg(long)]
    c_c: Option<f64>,
    #[arg(long)]
    c_r: Option<f64>,
    /// `passive`, `active-ratings` or `active-comparisons`.
    #[arg(long)]
    pipeline: Option<String>,
    #[arg(long)]
    gradient_tolerance: Option<f64>,
    #[arg(long)]
    max_iterations: Option<usize>,
    #[arg(long)]
    history_size: Option<usize>,
}

impl ConfigArgs {
    fn resolve(&self, default_preset: &str) -> Result<ExperimentConfig> {
        let mut c = ExperimentConfig::preset(self.preset.as_deref().unwrap_or(default_preset))?;
        if let Some(path) = &self.config {
            c = c
                .merge_file(path)
                .with_context(|| format!("reading config {}", path.display()))?;
        }
        if let Some(v) = self.seed {
            c.base_seed = v;
        }
        if let Some(v) = self.reps {
            c.repetitions = v;
        }
        if let Some(v) = self.entities {
            c.entities = v;
        }
        if let Some(v) = &self.embedding {
            c.embedding = v.parse()?;
        }
        if let Some(v) = &self.k_c {
            c.k_c = RootLaw::from_arity(v)?;
        }
        if let Some(v) = &self.k_r {
            c.k_r = RootLaw::from_arity(v)?;
        }
        if let Some(v) = &self.inference_f {
            c.inference_f = parse_optional_law(v)?;
        }
        if let Some(v) = &self.inference_g {
            c.inference_g = parse_optional_law(v)?;
        }
        if let Some(v) = &self.prior {
            c.prior = v.parse()?;
        }
        if let Some(v) = self.threshold_variance {
            c.threshold_variance = v;
        }
        if let Some(v) = self.prior_var_beta {
            c.prior_var_beta = v;
        }
        if let Some(v) = self.prior_var_threshold {
            c.prior_var_threshold = v;
        }
        if let Some(v) = &self.budgets {
            c.budgets = v.clone();
        }
        if let Some(v) = &self.p_c {
            c.p_c = v.clone();
        }
        if let Some(v) = self.c_c {
            c.c_c = v;
        }
        if let Some(v) = self.c_r {
            c.c_r = v;
        }
        if let Some(v) = &self.pipeline {
            c.pipeline = v.parse()?;
        }
        if let Some(v) = self.gradient_tolerance {
            c.solver.gradient_tolerance = v;
        }
        if let Some(v) = self.max_iterations {
            c.solver.max_iterations = v;
        }
        if let Some(v) = self.history_size {
            c.solver.history_size = v;
        }
        c.validate()?;
        Ok(c)
    }
}

#[derive(Args)]
struct GenArgs {
    #[command(flatten)]
    config: ConfigArgs,
    /// Which repetition's random stream to use.
    #[arg(long, default_value_t = 0)]
    rep: usize,
    /// Dataset CSV path.
    #[arg(long)]
    out: PathBuf,
    /// Ground-truth CSV path.
    #[arg(long)]
    truth: Option<PathBuf>,
    /// Cluster assignment CSV path (one-hot embeddings only).
    #[arg(long)]
    clusters: Option<PathBuf>,
}

#[derive(Args)]
struct SolveArgs {
    /// Dataset CSV.
    #[arg(long)]
    data: PathBuf,
    /// Entity count; inferred from the clusters or the largest index otherwise.
    #[arg(long)]
    entities: Option<usize>,
    /// Cluster assignment CSV; selects the one-hot embedding.
    #[arg(long)]
    clusters: Option<PathBuf>,
    /// Number of clusters; one more than the largest label by default.
    #[arg(long)]
    cluster_count: Option<usize>,
    /// Comparison law.
    #[arg(long, default_value = "uniform")]
    f: String,
    /// Rating law.
    #[arg(long, default_value = "uniform")]
    g: String,
    #[arg(long, default_value_t = 1.0)]
    prior_var_beta: f64,
    #[arg(long, default_value_t = 1.0)]
    prior_var_threshold: f64,
    #[arg(long, default_value_t = 1e-8)]
    gradient_tolerance: f64,
    #[arg(long, default_value_t = 1000)]
    max_iterations: usize,
    /// Ground-truth CSV; prints both correlations when given.
    #[arg(long)]
    truth: Option<PathBuf>,
    /// Scores CSV path; stdout when omitted.
    #[arg(long)]
    out: Option<PathBuf>,
}

fn output(path: Option<&Path>) -> Result<Box<dyn Write>> {
    Ok(match path {
        Some(p) => Box::new(BufWriter::new(
            File::create(p).with_context(|| format!("creating {}", p.display()))?,
        )),
        None => Box::new(BufWriter::new(io::stdout().lock())),
    })
}

fn open(path: &Path) -> Result<BufReader<File>> {
    Ok(BufReader::new(
        File::open(path).with_context(|| format!("opening {}", path.display()))?,
    ))
}

fn report_rows(rows: &[ResultRow], out: Option<&Path>) -> Result<ExitCode> {
    write_rows(rows, output(out)?)?;
    let failed: usize = rows.iter().map(|r| r.n_failed).sum();
    if failed > 0 {
        eprintln!("{failed} repetitions failed");
    }
    if rows.iter().all(|r| r.n_success == 0) {
        eprintln!("every repetition failed");
        return Ok(ExitCode::FAILURE);
    }
    Ok(ExitCode::SUCCESS)
}

fn gen(args: &GenArgs) -> Result<ExitCode> {
    let config = args.config.resolve("fig1a")?;
    let (&[budget], &[p_c]) = (config.budgets.as_slice(), config.p_c.as_slice()) else {
        bail!("gen writes one dataset: pass a single --budgets and --p-c value");
    };
    let inst = passive_instance(&config, budget, p_c, args.rep)?;
    csvio::write_dataset(&inst.dataset, output(Some(&args.out))?)?;
    if let Some(path) = &args.truth {
        csvio::write_ground_truth(&inst.truth.scores, output(Some(path))?)?;
    }
    match (&args.clusters, &inst.clusters) {
        (Some(path), Some(clusters)) => csvio::write_clusters(clusters, output(Some(path))?)?,
        (Some(_), None) => bail!("--clusters needs a one-hot embedding"),
        _ => {}
    }
    eprintln!(
        "{} ratings, {} comparisons, threshold {}",
        inst.dataset.ratings.len(),
        inst.dataset.comparisons.len(),
        inst.truth.theta0
    );
    Ok(ExitCode::SUCCESS)
}

fn solve(args: &SolveArgs) -> Result<ExitCode> {
    let dataset = csvio::read_dataset(open(&args.data)?)?;
    let embedding = match &args.clusters {
        Some(path) => {
            let clusters = csvio::read_clusters(open(path)?)?;
            let k = args
                .cluster_count
                .unwrap_or_else(|| clusters.iter().max().map_or(1, |m| m + 1));
            one_hot_embedding(&clusters, k)?
        }
        None => {
            let largest = dataset
                .ratings
                .iter()
                .map(|r| r.entity)
                .chain(dataset.comparisons.iter().flat_map(|c| [c.first, c.second]))
                .max();
            let entities = args
                .entities
                .or(largest.map(|m| m + 1))
                .context("empty dataset: pass --entities")?;
            Embedding::identity(entities)?
        }
    };
    let model = ScoraModel::new(
        embedding,
        RootLaw::from_arity(&args.f)?,
        RootLaw::from_arity(&args.g)?,
        args.prior_var_beta,
        args.prior_var_threshold,
    )?;
    let solver = SolverConfig {
        gradient_tolerance: args.gradient_tolerance,
        max_iterations: args.max_iterations,
        ..SolverConfig::default()
    };
    let fit = solve_map(&model, &dataset, &solver)?;
    csvio::write_scores(&fit.scores, output(args.out.as_deref())?)?;
    eprintln!(
        "threshold {} after {} iterations, gradient norm {:.3e}",
        fit.theta0, fit.iterations, fit.final_gradient_norm
    );
    if let Some(path) = &args.truth {
        let truth = csvio::read_ground_truth(open(path)?)?;
        eprintln!("corr {}", pearson_corr(&fit.scores, &truth)?);
        eprintln!("corr_exp {}", weighted_corr_exp(&fit.scores, &truth)?);
    }
    Ok(ExitCode::SUCCESS)
}

fn run(cli: Cli) -> Result<ExitCode> {
    match cli.command {
        Command::Convergence(args) => {
            let rows = run_convergence(&args.config.resolve("fig1a")?)?;
            report_rows(&rows, args.out.as_deref())
        }
        Command::Sweetspot(args) => {
            let rows = run_sweetspot(&args.config.resolve("fig4")?)?;
            report_rows(&rows, args.out.as_deref())
        }
        Command::Properties { seed } => {
            let reports = properties::run_all(seed);
            for r in &reports {
                println!("{r}");
            }
            Ok(if reports.iter().all(|r| r.passed()) {
                ExitCode::SUCCESS
            } else {
                ExitCode::FAILURE
            })
        }
        Command::Gen(args) => gen(&args),
        Command::Solve(args) => solve(&args),
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}
