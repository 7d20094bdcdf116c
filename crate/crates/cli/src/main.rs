use std::fs::{self, File};
use std::io::{self, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use tensorclass::archive::{read_truth, write_truth, ModelArchive};
use tensorclass::data::{read_csv, read_csv_with_schema, read_points_with_schema, write_csv, Dataset, LoadReport};
use tensorclass::gibbs::GibbsConfig;
use tensorclass::oracles::{
    bayes_error_mc, optimal_c, shrinkage_risk, truncation_argmin, truncation_mse, ShrinkageParams, SyntheticTruth,
    TruncationParams,
};
use tensorclass::pipeline::fit_selected;
use tensorclass::predict::{argmax, evaluate};
use tensorclass::priors::{default_hyperparams, Hyperparams};
use tensorclass::search::{run_search, summarize, SearchConfig, SearchTrace};
use tensorclass::Error;

#[derive(Parser)]
#[command(name = "tensorclass", version, about = "Bayesian tensor classification for categorical predictors")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Draw a synthetic problem: train.csv, test.csv and truth.json.
    Simulate(SimulateArgs),
    /// Stage one: stochastic search over predictor clusterings.
    Search(SearchArgs),
    /// Stage two: Gibbs sampling of the selected model.
    Fit(FitArgs),
    /// Class probabilities for new rows.
    Predict(PredictArgs),
    /// Error rates on labelled data, plus aMSE when the truth is known.
    Evaluate(EvaluateArgs),
    /// Closed-form studies.
    #[command(subcommand)]
    Study(Study),
}

#[derive(Args)]
struct SimulateArgs {
    /// Training rows.
    #[arg(long)]
    n: usize,
    /// Test rows.
    #[arg(long, default_value_t = 1000)]
    n_test: usize,
    #[arg(long)]
    p: usize,
    #[arg(long, default_value_t = 4)]
    d: usize,
    /// 1-based relevant predictors.
    #[arg(long, value_delimiter = ',', default_value = "9,11,13")]
    relevant: Vec<usize>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Output directory.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct DataArgs {
    /// Training CSV.
    #[arg(long)]
    data: PathBuf,
    /// Name of the class column.
    #[arg(long, default_value = "y")]
    response: String,
}

#[derive(Args)]
struct SearchArgs {
    #[command(flatten)]
    data: DataArgs,
    #[arg(long, default_value_t = 1000)]
    iters: usize,
    /// Defaults to half of `iters`.
    #[arg(long)]
    burnin: Option<usize>,
    /// Prior expected number of included predictors; defaults to log_d(n).
    #[arg(long)]
    r: Option<f64>,
    /// Maximum number of included predictors; defaults to ceil(2r).
    #[arg(long)]
    rbar: Option<usize>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    trace_out: PathBuf,
}

#[derive(Args)]
struct FitArgs {
    #[command(flatten)]
    data: DataArgs,
    /// Trace written by `search`.
    #[arg(long)]
    trace: PathBuf,
    /// Search sweeps to discard; defaults to half.
    #[arg(long)]
    search_burnin: Option<usize>,
    #[arg(long)]
    r: Option<f64>,
    #[arg(long)]
    rbar: Option<usize>,
    #[arg(long, default_value_t = 1000)]
    iters: usize,
    /// Defaults to half of `iters`.
    #[arg(long)]
    burnin: Option<usize>,
    #[arg(long, default_value_t = 1)]
    thin: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    model_out: PathBuf,
}

#[derive(Args)]
struct PredictArgs {
    #[arg(long)]
    model: PathBuf,
    /// CSV with the model's predictor columns.
    #[arg(long = "in")]
    input: PathBuf,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct EvaluateArgs {
    #[arg(long)]
    model: PathBuf,
    #[arg(long)]
    test: PathBuf,
    /// Truth sidecar written by `simulate`.
    #[arg(long)]
    truth: Option<PathBuf>,
    /// Key-value report; a JSON copy goes next to it with a `.json` suffix.
    #[arg(long)]
    report_out: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Study {
    /// Average per-cell MSE of truncated frequency estimates, by truncation level.
    TruncationMse {
        #[arg(long)]
        l: u32,
        #[arg(long)]
        beta: f64,
        #[arg(long)]
        p: u32,
    },
    /// Risk of shrinking level-wise frequencies toward each other.
    Shrinkage {
        #[arg(long, value_delimiter = ',', required = true)]
        probs: Vec<f64>,
        #[arg(long, value_delimiter = ',', required = true)]
        counts: Vec<u64>,
    },
    /// Monte Carlo Bayes error of the synthetic generator.
    BayesError {
        #[arg(long, default_value_t = 1_000_000)]
        draws: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}

fn run(command: Command) -> Result<(), Error> {
    match command {
        Command::Simulate(a) => simulate(a),
        Command::Search(a) => search(a),
        Command::Fit(a) => fit(a),
        Command::Predict(a) => predict(a),
        Command::Evaluate(a) => evaluate_cmd(a),
        Command::Study(s) => study(s),
    }
}

fn warn(report: &LoadReport) {
    for w in report.warnings() {
        eprintln!("warning: {w}");
    }
}

fn create(path: &Path) -> Result<BufWriter<File>, Error> {
    Ok(BufWriter::new(File::create(path)?))
}

fn load_training(args: &DataArgs) -> Result<Dataset, Error> {
    let (ds, report) = read_csv(BufReader::new(File::open(&args.data)?), &args.response)?;
    warn(&report);
    Ok(ds)
}

fn hyperparams(ds: &Dataset, r: Option<f64>, rbar: Option<usize>) -> Result<Hyperparams, Error> {
    let p = ds.predictors();
    let d = ds.dims().iter().copied().max().unwrap_or(2);
    let mut hp = default_hyperparams(ds.len(), d, p, ds.classes())?;
    if let Some(r) = r {
        hp.r = r;
        hp.r_bar = ((2.0 * r).ceil() as usize).clamp(1, p);
    }
    if let Some(rbar) = rbar {
        hp.r_bar = rbar;
    }
    hp.validate(p)?;
    Ok(hp)
}

fn simulate(a: SimulateArgs) -> Result<(), Error> {
    let relevant = a
        .relevant
        .iter()
        .map(|&j| j.checked_sub(1).ok_or_else(|| Error::InvalidInput("relevant indices are 1-based".into())))
        .collect::<Result<Vec<_>, _>>()?;
    let mut rng = ChaCha8Rng::seed_from_u64(a.seed);
    let truth = SyntheticTruth::generate(&mut rng, a.p, a.d, &relevant)?;
    let train = truth.sample(&mut rng, a.n)?;
    fs::create_dir_all(&a.out)?;
    write_csv(&train, create(&a.out.join("train.csv"))?)?;
    if a.n_test > 0 {
        let test = truth.sample(&mut rng, a.n_test)?;
        write_csv(&test, create(&a.out.join("test.csv"))?)?;
    }
    write_truth(&truth, create(&a.out.join("truth.json"))?)?;
    println!("bayes_error = {}", truth.bayes_error());
    Ok(())
}

fn search(a: SearchArgs) -> Result<(), Error> {
    let ds = load_training(&a.data)?;
    let hp = hyperparams(&ds, a.r, a.rbar)?;
    let config = SearchConfig {
        iters: a.iters,
        burnin: a.burnin.unwrap_or(a.iters / 2),
        seed: a.seed,
    };
    let trace = run_search(&ds, &hp, &config)?;
    trace.write_text(create(&a.trace_out)?)?;
    let summary = summarize(&trace, config.burnin)?;
    println!("r = {}", hp.r);
    println!("r_bar = {}", hp.r_bar);
    println!("acceptance_rate = {}", trace.acceptance_rate());
    print_selection(&ds, &summary.selected, &summary.modal_k());
    Ok(())
}

fn print_selection(ds: &Dataset, selected: &[usize], k: &[usize]) {
    let names: Vec<String> = selected
        .iter()
        .zip(k)
        .map(|(&j, k)| format!("{}:{k}", ds.schema().predictors[j].name))
        .collect();
    println!("selected = {}", names.join(","));
}

fn fit(a: FitArgs) -> Result<(), Error> {
    let ds = load_training(&a.data)?;
    let hp = hyperparams(&ds, a.r, a.rbar)?;
    let trace = SearchTrace::read_text(BufReader::new(File::open(&a.trace)?))?;
    if trace.levels != ds.dims() {
        return Err(Error::ShapeMismatch("trace was recorded on data with different levels".into()));
    }
    let search = SearchConfig {
        iters: trace.sweeps,
        burnin: a.search_burnin.unwrap_or(trace.sweeps / 2),
        seed: trace.seed,
    };
    let summary = summarize(&trace, search.burnin)?;
    let config = GibbsConfig {
        iters: a.iters,
        burnin: a.burnin.unwrap_or(a.iters / 2),
        thin: a.thin,
        seed: a.seed,
    };
    let model = fit_selected(&ds, &hp, &summary, &config)?;
    print_selection(&ds, &summary.selected, &summary.modal_k());
    println!("draws = {}", model.fit().draws.len());
    ModelArchive::new(ds.schema().clone(), hp, search, summary, &model)?.save(&a.model_out)
}

fn predict(a: PredictArgs) -> Result<(), Error> {
    let archive = ModelArchive::load(&a.model)?;
    let model = archive.model()?;
    let (rows, _, _, report) = read_points_with_schema(BufReader::new(File::open(&a.input)?), &archive.schema)?;
    warn(&report);
    let classes = &archive.schema.response.levels;
    let mut w = create(&a.out)?;
    let header: Vec<String> = std::iter::once("class".to_owned())
        .chain(classes.iter().map(|c| format!("p_{c}")))
        .chain(std::iter::once("unseen".to_owned()))
        .collect();
    writeln!(w, "{}", header.join(","))?;
    for x in &rows {
        let probs = model.predict_proba(x)?;
        let cols: Vec<String> = probs.iter().map(f64::to_string).collect();
        writeln!(w, "{},{},{}", classes[argmax(&probs)], cols.join(","), u8::from(model.has_unseen(x)))?;
    }
    w.flush()?;
    Ok(())
}

fn evaluate_cmd(a: EvaluateArgs) -> Result<(), Error> {
    let archive = ModelArchive::load(&a.model)?;
    let model = archive.model()?;
    let (test, report) = read_csv_with_schema(BufReader::new(File::open(&a.test)?), &archive.schema)?;
    warn(&report);
    let truth = match &a.truth {
        Some(path) => Some(read_truth(BufReader::new(File::open(path)?))?.aligned_to(&archive.schema)?),
        None => None,
    };
    let report = evaluate(&model, &test, truth.as_ref())?;
    let text = report.to_text();
    print!("{text}");
    if let Some(path) = &a.report_out {
        fs::write(path, &text)?;
        let mut json = path.clone().into_os_string();
        json.push(".json");
        let mut w = create(Path::new(&json))?;
        serde_json::to_writer_pretty(&mut w, &report)?;
        writeln!(w)?;
        w.flush()?;
    }
    Ok(())
}

fn study(s: Study) -> Result<(), Error> {
    let mut out = io::stdout().lock();
    match s {
        Study::TruncationMse { l, beta, p } => {
            let (best, curve) = truncation_argmin(p, l, beta)?;
            writeln!(out, "argmin_k = {best}")?;
            writeln!(out, "k\tbias2\tvariance\taverage")?;
            for (k, _) in curve {
                let m = truncation_mse(&TruncationParams { p, l, k, beta })?;
                writeln!(out, "{k}\t{:e}\t{:e}\t{:e}", m.bias2, m.variance, m.average)?;
            }
        }
        Study::Shrinkage { probs, counts } => {
            let params = ShrinkageParams { probs, counts };
            let c0 = optimal_c(&params)?;
            writeln!(out, "raw_risk = {}", params.raw_risk()?)?;
            writeln!(out, "c0 = {c0}")?;
            writeln!(out, "risk_at_c0 = {}", shrinkage_risk(&params, c0)?)?;
        }
        Study::BayesError { draws, seed } => {
            let e = bayes_error_mc(&mut ChaCha8Rng::seed_from_u64(seed), draws);
            writeln!(out, "bayes_error = {e}")?;
        }
    }
    Ok(())
}
