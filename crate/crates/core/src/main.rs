use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};

use ann_epistemic::datapipe::{synth_generate, write_raw_csv, ReducedTable, SynthConfig};
use ann_epistemic::likelihood::{jeffreys_density, likelihood_curve, mapped_density, PriorRule, ScalarLikelihood};
use ann_epistemic::mlp::{Architecture, Dataset, ModelFile, Network};
use ann_epistemic::numeric::linspace;
use ann_epistemic::reference::{coverage_mc, two_gaussian_curve, BinomialModel, CoverageFamily, TwoGaussianScene, VarianceModel};
use ann_epistemic::remap::{remap_model, weight_curves, NetCost, Remap, RemapConfig, RemapFile};
use ann_epistemic::sampler::{gaussianity_diagnostic, output_distribution, run_chain_adapting, McmcConfig, SampleSet};
use ann_epistemic::selector::compare_architectures;
use ann_epistemic::trainer::{train_to_optimum, TrainConfig};
use ann_epistemic::{Error, Result};

#[derive(Parser, Debug)]
#[command(name = "ann-epistemic", version, about = "Epistemic output uncertainty for small feed-forward classifiers")]
struct Cli {
    /// Seed for every random choice the subcommand makes.
    #[arg(long, global = true, default_value_t = 0)]
    seed: u64,
    /// JSON file overriding module defaults (sections: train, remap, mcmc, synth).
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Worker threads; 1 keeps every output reproducible.
    #[arg(long, global = true, default_value_t = 1)]
    threads: usize,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Frequentist, Jeffreys and raw likelihood curves for a reference model.
    Refcurves(RefcurvesArgs),
    /// Monte Carlo coverage of |z| intervals for a reference model.
    Coverage(CoverageArgs),
    /// Generate a synthetic cohort and its reduced five-input table.
    GenData(GenDataArgs),
    /// Train a network to a fully optimised minimum.
    Train(TrainArgs),
    /// Tabulate AIC and leave-one-out scores over architectures.
    Select(SelectArgs),
    /// Remap a trained network's weights and estimate their inverse covariance.
    Remap(RemapArgs),
    /// Sample plausible weight sets and the output distribution for one pattern.
    Sample(SampleArgs),
    /// Compare Mahalanobis estimates with true cost rises over sampled weights.
    Diagnose(DiagnoseArgs),
    /// Exact posterior and logistic fit for a two-Gaussian scene.
    DemoGauss(DemoGaussArgs),
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum RefModel {
    Binomial,
    Variance,
}

#[derive(Args, Debug)]
struct RefcurvesArgs {
    #[arg(long, value_enum)]
    model: RefModel,
    /// Successes (binomial) or sample count (variance).
    #[arg(long)]
    n: u32,
    /// Bernoulli trials for the binomial model.
    #[arg(long = "N")]
    trials: Option<u32>,
    #[arg(long, default_value_t = 801)]
    points: usize,
    /// Upper end of the variance grid, in units of the MLE.
    #[arg(long, default_value_t = 8.0)]
    v_max: f64,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum Family {
    Gaussian,
    Variance,
    Binomial,
}

#[derive(Args, Debug)]
struct CoverageArgs {
    #[arg(long, value_enum)]
    family: Family,
    /// Sample count (variance) or Bernoulli trials (binomial).
    #[arg(long, default_value_t = 4)]
    n: u32,
    #[arg(long, default_value_t = 1.0)]
    truth: f64,
    #[arg(long, default_value_t = 10_000)]
    trials: usize,
    #[arg(long, value_delimiter = ',', default_values_t = [1.645, 1.96])]
    z: Vec<f64>,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct GenDataArgs {
    /// Reduced table (CSV).
    #[arg(long)]
    out: PathBuf,
    /// Optional raw regional volumes (CSV).
    #[arg(long)]
    raw: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct TrainArgs {
    /// Hidden layer widths, e.g. `2` or `3,3`.
    #[arg(long)]
    arch: String,
    #[arg(long)]
    data: PathBuf,
    #[arg(long)]
    out: PathBuf,
    /// Cost per evaluation (CSV); defaults to the model path with `.trace.csv`.
    #[arg(long)]
    trace: Option<PathBuf>,
    /// Extra conjugate-gradient phases allowed to reach the fully-optimised flag.
    #[arg(long, default_value_t = 20)]
    refine_rounds: usize,
}

#[derive(Args, Debug)]
struct SelectArgs {
    #[arg(long)]
    data: PathBuf,
    /// Semicolon-separated hidden layer lists.
    #[arg(long, default_value = "2;3;4;5;2,2;3,3")]
    archs: String,
    /// Number of seeds, counted up from --seed.
    #[arg(long, default_value_t = 2)]
    seeds: u64,
    #[arg(long)]
    loo: bool,
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    json: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct RemapArgs {
    #[arg(long)]
    model: PathBuf,
    #[arg(long)]
    data: PathBuf,
    #[arg(long)]
    out: PathBuf,
    /// Per-weight cost profiles before and after remapping (CSV).
    #[arg(long)]
    curves: Option<PathBuf>,
    #[arg(long, default_value_t = 41)]
    points: usize,
}

#[derive(Args, Debug)]
struct ChainArgs {
    #[arg(long)]
    model: PathBuf,
    #[arg(long)]
    remap: PathBuf,
    #[arg(long)]
    data: PathBuf,
    #[arg(long)]
    sigma: Option<f64>,
    #[arg(long)]
    thin: Option<usize>,
    #[arg(long)]
    samples: Option<usize>,
    /// Times the step size may be halved after a low-acceptance error.
    #[arg(long, default_value_t = 0)]
    halvings: usize,
}

#[derive(Args, Debug)]
#[command(group = clap::ArgGroup::new("pattern").required(true))]
struct SampleArgs {
    #[command(flatten)]
    chain: ChainArgs,
    /// Row of the data table to evaluate.
    #[arg(long, group = "pattern")]
    pattern_index: Option<usize>,
    /// CSV with a header and one row of input values.
    #[arg(long, group = "pattern")]
    pattern_file: Option<PathBuf>,
    #[arg(long, default_value_t = 20)]
    bins: usize,
    #[arg(long, default_value = "samples.csv")]
    out_samples: PathBuf,
    #[arg(long, default_value = "histogram.json")]
    out_hist: PathBuf,
}

#[derive(Args, Debug)]
struct DiagnoseArgs {
    #[command(flatten)]
    chain: ChainArgs,
    /// Monte Carlo trials per candidate error size.
    #[arg(long, default_value_t = 1000)]
    trials: usize,
    /// `(D, ΔQ)` pairs (CSV).
    #[arg(long, default_value = "diagnostic.csv")]
    out: PathBuf,
    /// Summary (JSON); printed to stdout when absent.
    #[arg(long)]
    summary: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct DemoGaussArgs {
    /// Ratio of the B to the A standard deviation.
    #[arg(long, default_value_t = 3.0)]
    ratio: f64,
    #[arg(long, default_value_t = -10.0, allow_hyphen_values = true)]
    x_min: f64,
    #[arg(long, default_value_t = 12.0, allow_hyphen_values = true)]
    x_max: f64,
    #[arg(long, default_value_t = 221)]
    points: usize,
    #[arg(long, default_value_t = 50)]
    samples_per_class: usize,
    #[arg(long)]
    out: PathBuf,
}

/// Overrides read from `--config`.
#[derive(Debug, Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
struct Overrides {
    train: TrainConfig,
    remap: RemapConfig,
    mcmc: McmcConfig,
    synth: SynthConfig,
}

fn load_overrides(path: Option<&Path>) -> Result<Overrides> {
    let Some(path) = path else { return Ok(Overrides::default()) };
    let text = read(path)?;
    serde_json::from_str(&text).map_err(|e| Error::InvalidArgument(format!("{}: {e}", path.display())))
}

fn read(path: &Path) -> Result<String> {
    std::fs::read_to_string(path).map_err(|e| Error::InvalidArgument(format!("{}: {e}", path.display())))
}

fn write(path: &Path, text: &str) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(|e| Error::InvalidArgument(format!("{}: {e}", dir.display())))?;
    }
    std::fs::write(path, text).map_err(|e| Error::InvalidArgument(format!("{}: {e}", path.display())))
}

fn to_json<T: Serialize>(value: &T) -> Result<String> {
    Ok(serde_json::to_string_pretty(value)? + "\n")
}

fn emit_json<T: Serialize>(value: &T, path: Option<&Path>) -> Result<()> {
    let text = to_json(value)?;
    match path {
        Some(p) => write(p, &text),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

fn load_data(path: &Path) -> Result<Dataset> {
    ReducedTable::load(path)?.to_dataset()
}

fn interior(lo: f64, hi: f64, points: usize) -> Vec<f64> {
    let g = linspace(lo, hi, points.max(3) + 2);
    g[1..g.len() - 1].to_vec()
}

fn refcurves(a: &RefcurvesArgs) -> Result<()> {
    let curves = |model: &dyn ScalarLikelihood, grid: &[f64], priors: &[(&str, PriorRule)]| -> Result<()> {
        write(&a.out.join("frequentist.csv"), &mapped_density(model, grid)?.to_csv())?;
        write(&a.out.join("likelihood.csv"), &likelihood_curve(model, grid)?.to_csv())?;
        for (name, rule) in priors {
            write(&a.out.join(format!("{name}.csv")), &jeffreys_density(model, grid, rule)?.to_csv())?;
        }
        Ok(())
    };
    match a.model {
        RefModel::Binomial => {
            let trials = a.trials.ok_or_else(|| Error::InvalidArgument("the binomial model needs --N".into()))?;
            let model = BinomialModel::new(a.n, trials)?;
            curves(&model, &interior(0.0, 1.0, a.points), &[("jeffreys", PriorRule::General)])
        }
        RefModel::Variance => {
            if a.v_max.partial_cmp(&1.0) != Some(std::cmp::Ordering::Greater) {
                return Err(Error::InvalidArgument(format!("--v-max must exceed 1, got {}", a.v_max)));
            }
            let model = VarianceModel::unit(a.n)?;
            let priors = [("jeffreys", PriorRule::General), ("jeffreys_nonlocation", PriorRule::NonLocation)];
            curves(&model, &interior(0.0, a.v_max, a.points), &priors)
        }
    }
}

fn coverage(a: &CoverageArgs, seed: u64) -> Result<()> {
    let family = match a.family {
        Family::Gaussian => CoverageFamily::Gaussian,
        Family::Variance => CoverageFamily::Variance { n: a.n },
        Family::Binomial => CoverageFamily::Binomial { trials: a.n },
    };
    let reports = a.z.iter().map(|&z| coverage_mc(family, a.truth, z, a.trials, seed)).collect::<Result<Vec<_>>>()?;
    emit_json(&reports, a.out.as_deref())
}

fn gen_data(a: &GenDataArgs, o: &Overrides, seed: u64) -> Result<()> {
    let out = synth_generate(&o.synth, seed)?;
    write(&a.out, &out.reduced.to_csv()?)?;
    if let Some(raw) = &a.raw {
        write(raw, &write_raw_csv(&out.subjects)?)?;
    }
    for e in &out.excluded {
        eprintln!("excluded: {e:?}");
    }
    Ok(())
}

fn trace_path(model: &Path) -> PathBuf {
    model.with_extension("trace.csv")
}

fn train(a: &TrainArgs, o: &Overrides, seed: u64) -> Result<()> {
    let data = load_data(&a.data)?;
    let arch = Architecture::new(data.input_dim(), Architecture::parse_hidden(&a.arch)?, data.output_dim())?;
    let config = TrainConfig { seed, ..o.train };
    let out = train_to_optimum(&Network::random(arch, seed)?, &data, &config, a.refine_rounds)?;
    let model = ModelFile::from_network(&out.network, None, seed, out.fully_optimised, out.final_cost, out.grad_max);
    model.save(&a.out)?;
    let mut trace = String::from("eval,cost\n");
    for (i, q) in out.trace.iter().enumerate() {
        trace.push_str(&format!("{i},{q}\n"));
    }
    write(&a.trace.clone().unwrap_or_else(|| trace_path(&a.out)), &trace)?;
    if !out.fully_optimised {
        eprintln!("warning: training not fully optimised (max |g| = {:e}); remapping will refuse this model", out.grad_max);
    }
    Ok(())
}

fn select(a: &SelectArgs, o: &Overrides, seed: u64) -> Result<()> {
    let data = load_data(&a.data)?;
    let archs = a
        .archs
        .split(';')
        .map(|h| Architecture::new(data.input_dim(), Architecture::parse_hidden(h)?, data.output_dim()))
        .collect::<Result<Vec<_>>>()?;
    let seeds: Vec<u64> = (seed..seed + a.seeds).collect();
    let report = compare_architectures(&archs, &data, &o.train, &seeds, a.loo)?;
    for w in &report.warnings {
        eprintln!("warning: {w}");
    }
    write(&a.out, &report.to_csv())?;
    if let Some(p) = &a.json {
        write(p, &to_json(&report)?)?;
    }
    Ok(())
}

fn remap_cmd(a: &RemapArgs, o: &Overrides) -> Result<()> {
    let model = ModelFile::load(&a.model)?;
    let data = load_data(&a.data)?;
    let net = model.network()?;
    let remap = remap_model(&model, &data, &o.remap)?;
    for w in remap.unverified() {
        eprintln!("warning: weight {w} has no verified range on one side");
    }
    RemapFile::from_remap(&remap, &net).save(&a.out)?;
    if let Some(p) = &a.curves {
        write(p, &weight_curves(&NetCost { arch: net.arch(), data: &data }, &remap, a.points)?)?;
    }
    Ok(())
}

struct Loaded {
    net: Network,
    data: Dataset,
    remap: Remap,
}

fn load_chain(a: &ChainArgs, refuse_unoptimised: bool) -> Result<Loaded> {
    let model = ModelFile::load(&a.model)?;
    if refuse_unoptimised && !model.fully_optimised {
        return Err(Error::NotOptimised { grad_max: model.grad_max });
    }
    let net = model.network()?;
    let data = load_data(&a.data)?;
    let remap = RemapFile::load(&a.remap)?.into_remap(&net)?;
    Ok(Loaded { net, data, remap })
}

fn chain(a: &ChainArgs, l: &Loaded, o: &Overrides, seed: u64) -> Result<SampleSet> {
    let mut config = McmcConfig { seed, ..o.mcmc.clone() };
    config.step_sigma = a.sigma.unwrap_or(config.step_sigma);
    config.thin = a.thin.unwrap_or(config.thin);
    config.n_samples = a.samples.unwrap_or(config.n_samples);
    run_chain_adapting(&l.remap, &NetCost { arch: l.net.arch(), data: &l.data }, &config, a.halvings)
}

fn read_pattern(path: &Path, dim: usize) -> Result<Vec<f64>> {
    let text = read(path)?;
    let mut r = csv::ReaderBuilder::new().comment(Some(b'#')).from_reader(text.as_bytes());
    let rec = r
        .records()
        .next()
        .ok_or_else(|| Error::InvalidArgument(format!("{}: no pattern row", path.display())))??;
    let x = rec
        .iter()
        .map(|f| f.trim().parse::<f64>().map_err(|e| Error::InvalidArgument(format!("{}: `{f}`: {e}", path.display()))))
        .collect::<Result<Vec<_>>>()?;
    if x.len() != dim {
        return Err(Error::DimensionMismatch { expected: dim, got: x.len() });
    }
    Ok(x)
}

fn sample(a: &SampleArgs, o: &Overrides, seed: u64) -> Result<()> {
    let l = load_chain(&a.chain, false)?;
    let x = match (a.pattern_index, &a.pattern_file) {
        (Some(i), _) if i < l.data.len() => l.data.input(i).to_vec(),
        (Some(i), _) => return Err(Error::InvalidArgument(format!("pattern index {i} is beyond the {} data rows", l.data.len()))),
        (None, Some(p)) => read_pattern(p, l.data.input_dim())?,
        (None, None) => return Err(Error::InvalidArgument("a pattern is required".into())),
    };
    let set = chain(&a.chain, &l, o, seed)?;
    let dist = output_distribution(&set, l.net.arch(), &x, a.bins)?;
    let w = l.net.theta().len();
    let mut csv = String::from("draw,mahalanobis,delta_q");
    for prefix in ["z", "theta"] {
        for i in 0..w {
            csv.push_str(&format!(",{prefix}_{i}"));
        }
    }
    for m in 0..l.net.arch().output_dim {
        csv.push_str(&format!(",out_{m}"));
    }
    csv.push('\n');
    for (k, (d, out)) in set.draws.iter().zip(&dist.outputs).enumerate() {
        csv.push_str(&format!("{k},{},{}", d.d, d.dq));
        for v in d.z.iter().chain(&d.theta).chain(out) {
            csv.push_str(&format!(",{v}"));
        }
        csv.push('\n');
    }
    write(&a.out_samples, &csv)?;
    #[derive(Serialize)]
    struct Histogram<'a> {
        input: &'a [f64],
        samples: usize,
        acceptance: f64,
        step_sigma: f64,
        classes: &'a [ann_epistemic::sampler::OutputSummary],
    }
    let hist = Histogram {
        input: &dist.input,
        samples: dist.samples,
        acceptance: set.acceptance(),
        step_sigma: set.config.step_sigma,
        classes: &dist.classes,
    };
    write(&a.out_hist, &to_json(&hist)?)
}

fn diagnose(a: &DiagnoseArgs, o: &Overrides, seed: u64) -> Result<()> {
    let l = load_chain(&a.chain, true)?;
    let set = chain(&a.chain, &l, o, seed)?;
    let report = gaussianity_diagnostic(&set, &l.remap.ic, a.trials, seed)?;
    let mut csv = String::from("mahalanobis,delta_q\n");
    for (d, q) in &report.pairs {
        csv.push_str(&format!("{d},{q}\n"));
    }
    write(&a.out, &csv)?;
    #[derive(Serialize)]
    struct Summary {
        draws: usize,
        acceptance: f64,
        step_sigma: f64,
        slope: f64,
        scatter: f64,
        equivalent_error: f64,
    }
    let summary = Summary {
        draws: set.draws.len(),
        acceptance: set.acceptance(),
        step_sigma: set.config.step_sigma,
        slope: report.slope,
        scatter: report.scatter,
        equivalent_error: report.equivalent_error,
    };
    emit_json(&summary, a.summary.as_deref())
}

fn demo_gauss(a: &DemoGaussArgs, seed: u64) -> Result<()> {
    let base = TwoGaussianScene::default();
    let scene = TwoGaussianScene { sd_b: a.ratio * base.sd_a, ..base };
    if a.x_max.partial_cmp(&a.x_min) != Some(std::cmp::Ordering::Greater) {
        return Err(Error::InvalidArgument("--x-max must exceed --x-min".into()));
    }
    let curve = two_gaussian_curve(&scene, &linspace(a.x_min, a.x_max, a.points.max(2)), a.samples_per_class, seed)?;
    write(&a.out, &curve.to_csv())?;
    emit_json(&curve.tails, None)
}

fn run(cli: &Cli) -> Result<()> {
    let o = load_overrides(cli.config.as_deref())?;
    let seed = cli.seed;
    match &cli.command {
        Command::Refcurves(a) => refcurves(a),
        Command::Coverage(a) => coverage(a, seed),
        Command::GenData(a) => gen_data(a, &o, seed),
        Command::Train(a) => train(a, &o, seed),
        Command::Select(a) => select(a, &o, seed),
        Command::Remap(a) => remap_cmd(a, &o),
        Command::Sample(a) => sample(a, &o, seed),
        Command::Diagnose(a) => diagnose(a, &o, seed),
        Command::DemoGauss(a) => demo_gauss(a, seed),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if cli.threads == 0 {
        eprintln!("error: --threads must be at least 1");
        return ExitCode::from(2);
    }
    if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(cli.threads).build_global() {
        eprintln!("error: {e}");
        return ExitCode::from(1);
    }
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(1)
        }
    }
}
