use std::path::PathBuf;
use std::process::ExitCode;
use std::str::FromStr;

use clap::{Args, Parser, Subcommand};

use rmee_bench::csv_io::{
    load_csv, load_features_csv, load_multiclass_csv, write_dataset_csv, write_predictions,
    LabelColumn,
};
use rmee_bench::experiment::{
    emit_plot_data, proportion_grid, run_experiment, write_results, DataSource, ExperimentPlan,
    ModelKind, SigmaPolicy, DEFAULT_COV_GRID, FULL_COV_GRID,
};
use rmee_bench::model_io::{load_model, save_model};
use rmee_bench::{BenchError, Result};
use rmee_core::criteria::{CriterionKind, CriterionSpec};
use rmee_core::data::{
    generate_toy, normalize, ContaminationMode, ContaminationSpec, Dataset, Normalization, ToySpec,
};
use rmee_core::kernel::silverman_bandwidth;
use rmee_core::metrics::accuracy;
use rmee_core::model::{predict_labels, Activation, ElmConfig, Model};
use rmee_core::optim::{cross_validate_sigma, fit, training_errors, FitConfig, DEFAULT_SIGMA_GRID};
use rmee_core::quantize::QuantizerConfig;
use rmee_core::rng::{derive_seed, Rng};

#[derive(Parser)]
#[command(
    name = "rmee",
    version,
    about = "Robust classification with restricted minimum error entropy"
)]
struct Cli {
    /// Worker threads for experiments (default: all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Monte-Carlo sweep on the synthetic linear toy.
    Toy(ToyArgs),
    /// Monte-Carlo sweep on a CSV dataset.
    Bench(BenchArgs),
    /// Train one model and optionally save it.
    Fit(FitArgs),
    /// Apply a saved model to a CSV file.
    Predict(PredictArgs),
    /// Choose a kernel bandwidth by five-fold cross-validation.
    CvSigma(CvArgs),
    /// Write a toy train (and test) set as CSV.
    GenToy(GenToyArgs),
}

/// `attribute`, `label` (both flip directions) or one label direction.
#[derive(Clone, Copy, PartialEq)]
enum ToyMode {
    Attribute,
    Label,
    Directed(ContaminationMode),
}

impl FromStr for ToyMode {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "attribute" => Ok(ToyMode::Attribute),
            "label" => Ok(ToyMode::Label),
            other => match other.parse::<ContaminationMode>() {
                Ok(ContaminationMode::Attribute) => Ok(ToyMode::Attribute),
                Ok(m) => Ok(ToyMode::Directed(m)),
                Err(e) => Err(e.to_string()),
            },
        }
    }
}

#[derive(Clone, PartialEq)]
enum SigmaArg {
    Fixed(f64),
    Silverman,
    Cv,
}

impl FromStr for SigmaArg {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "cv" => Ok(SigmaArg::Cv),
            "silverman" => Ok(SigmaArg::Silverman),
            _ => match s.parse::<f64>() {
                Ok(v) if v > 0.0 && v.is_finite() => Ok(SigmaArg::Fixed(v)),
                _ => Err(format!(
                    "expected a positive number, 'cv' or 'silverman', got '{s}'"
                )),
            },
        }
    }
}

/// `none`, `attribute:<cov>:<proportion>` or `<label mode>:<proportion>`.
#[derive(Clone)]
struct CellArg(ContaminationSpec);

impl FromStr for CellArg {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        let parts: Vec<&str> = s.split(':').collect();
        let num = |t: &str| {
            t.parse::<f64>()
                .map_err(|_| format!("bad number '{t}' in '{s}'"))
        };
        let spec = match parts[..] {
            ["none"] => ContaminationSpec::attribute(0.0, 1.0),
            ["attribute", cov, p] => ContaminationSpec::attribute(num(p)?, num(cov)?),
            [mode, p] => {
                let mode: ContaminationMode =
                    mode.parse().map_err(|e: rmee_core::Error| e.to_string())?;
                if mode == ContaminationMode::Attribute {
                    return Err(format!("attribute cells need a covariance: '{s}'"));
                }
                ContaminationSpec::label(mode, num(p)?)
            }
            _ => return Err(format!("cannot parse contamination '{s}'")),
        };
        spec.validate().map_err(|e| e.to_string())?;
        Ok(CellArg(spec))
    }
}

#[derive(Args, Clone)]
struct FitKnobs {
    /// Outer iterations per fit.
    #[arg(long, default_value_t = 200)]
    max_outer_iters: usize,
    /// Adam steps per outer iteration.
    #[arg(long, default_value_t = 50)]
    inner_steps: usize,
    #[arg(long, default_value_t = 0.01)]
    learning_rate: f64,
    /// Convergence threshold on the criterion.
    #[arg(long, default_value_t = 1e-6)]
    tolerance: f64,
    /// Refit RMEE from zero weights instead of the C-Loss solution.
    #[arg(long)]
    cold_refit: bool,
    /// Quantizer threshold for QMEE.
    #[arg(long, default_value_t = 0.05)]
    epsilon: f64,
}

impl FitKnobs {
    fn config(&self, seed: u64) -> FitConfig {
        let mut cfg = FitConfig {
            max_outer_iters: self.max_outer_iters,
            inner_steps: self.inner_steps,
            varsigma: self.tolerance,
            warm_start_refit: !self.cold_refit,
            seed,
            ..FitConfig::default()
        };
        cfg.adam.learning_rate = self.learning_rate;
        cfg
    }

    fn quantizer(&self) -> Result<QuantizerConfig> {
        Ok(QuantizerConfig::new(self.epsilon)?)
    }
}

#[derive(Args, Clone)]
struct ModelArgs {
    /// `lr` (logistic regression) or `elm`.
    #[arg(long, default_value = "lr")]
    model: String,
    /// ELM hidden nodes.
    #[arg(long, default_value_t = 50)]
    hidden: usize,
    /// ELM hidden activation.
    #[arg(long, default_value = "sigmoid")]
    activation: String,
}

impl ModelArgs {
    fn kind(&self) -> Result<ModelKind> {
        match self.model.as_str() {
            "lr" | "logistic" => Ok(ModelKind::Logistic),
            "elm" => Ok(ModelKind::Elm(ElmConfig {
                hidden: self.hidden,
                activation: self.activation.parse::<Activation>()?,
                ..ElmConfig::default()
            })),
            other => Err(BenchError::Invalid(format!("unknown model '{other}'"))),
        }
    }
}

#[derive(Args, Clone)]
struct DataArgs {
    /// CSV file with one sample per line.
    #[arg(long)]
    data: PathBuf,
    /// 0-based label column (default: last).
    #[arg(long)]
    label_col: Option<usize>,
    /// Label token of the positive class.
    #[arg(long, default_value = "1")]
    positive: String,
}

impl DataArgs {
    fn label(&self) -> LabelColumn {
        self.label_col.map_or(LabelColumn::Last, LabelColumn::Index)
    }

    fn load(&self) -> Result<Dataset> {
        load_csv(&self.data, self.label(), &self.positive)
    }
}

#[derive(Args)]
struct ToyArgs {
    #[arg(long, default_value = "attribute")]
    mode: ToyMode,
    /// Input dimension.
    #[arg(long, default_value_t = 20)]
    d: usize,
    /// Training (and test) set size.
    #[arg(long, default_value_t = 1000)]
    n: usize,
    #[arg(long)]
    n_test: Option<usize>,
    /// Mean of every input coordinate; 0.4 gives the unbalanced toy.
    #[arg(long, default_value_t = 0.0)]
    mean_shift: f64,
    /// Attribute outlier covariance scales.
    #[arg(long, value_delimiter = ',')]
    cov: Vec<f64>,
    /// Sweep all nine covariance scales from 5 to 1000.
    #[arg(long)]
    full_cov_grid: bool,
    /// Outlier proportions (default 0 to 1 in steps of 0.05).
    #[arg(long, value_delimiter = ',')]
    props: Vec<f64>,
    #[command(flatten)]
    sweep: SweepArgs,
}

#[derive(Args)]
struct SweepArgs {
    #[arg(long, value_delimiter = ',', default_value = "ce,mse,closs,qmee,rmee")]
    criteria: Vec<CriterionKind>,
    #[arg(long, default_value_t = 20)]
    reps: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Kernel bandwidth: a number, `silverman` or `cv`.
    #[arg(long, default_value_t = String::from("0.4"), allow_negative_numbers = true)]
    sigma: String,
    /// Candidate bandwidths for `--sigma cv`.
    #[arg(long, value_delimiter = ',')]
    grid: Vec<f64>,
    /// Results CSV.
    #[arg(long)]
    out: PathBuf,
    /// Also write plot tables `<prefix>_<mode>_<parameter>.dat`.
    #[arg(long)]
    plot_prefix: Option<PathBuf>,
    #[command(flatten)]
    knobs: FitKnobs,
}

impl SweepArgs {
    fn sigma_policy(&self) -> Result<SigmaPolicy> {
        Ok(match parse_sigma(&self.sigma)? {
            SigmaArg::Fixed(s) => SigmaPolicy::Fixed(s),
            SigmaArg::Silverman => SigmaPolicy::Silverman,
            SigmaArg::Cv => SigmaPolicy::CrossValidate(grid_or_default(&self.grid)),
        })
    }

    fn finish(&self, mut plan: ExperimentPlan) -> Result<()> {
        plan.criteria = self.criteria.clone();
        plan.repetitions = self.reps;
        plan.master_seed = self.seed;
        plan.sigma = self.sigma_policy()?;
        plan.quantizer = self.knobs.quantizer()?;
        plan.fit = self.knobs.config(self.seed);
        let report = run_experiment(&plan)?;
        for f in &report.failures {
            eprintln!(
                "failed fit: {} {} {} p={} rep {}: {}",
                f.criterion, f.mode, f.parameter, f.proportion, f.repetition, f.message
            );
        }
        write_results(&report.rows, &self.out)?;
        if let Some(prefix) = &self.plot_prefix {
            emit_plot_data(&report.rows, prefix)?;
        }
        println!(
            "{} rows written to {} ({} failed fits)",
            report.rows.len(),
            self.out.display(),
            report.failures.len()
        );
        Ok(())
    }
}

#[derive(Args)]
struct BenchArgs {
    #[command(flatten)]
    data: DataArgs,
    #[command(flatten)]
    model: ModelArgs,
    /// Standardize features with training statistics (default).
    #[arg(long, overrides_with = "no_normalize")]
    normalize: bool,
    #[arg(long, overrides_with = "normalize")]
    no_normalize: bool,
    /// Contamination cell; repeatable. `none`, `attribute:<cov>:<p>`,
    /// `label_maj_to_min:<p>` or `label_min_to_maj:<p>`.
    #[arg(long, default_value = "none")]
    contaminate: Vec<CellArg>,
    #[arg(long, default_value_t = 2.0 / 3.0)]
    train_fraction: f64,
    #[command(flatten)]
    sweep: SweepArgs,
}

#[derive(Args)]
struct FitArgs {
    #[command(flatten)]
    data: DataArgs,
    #[command(flatten)]
    model: ModelArgs,
    #[arg(long, default_value = "rmee")]
    criterion: CriterionKind,
    /// Kernel bandwidth: a number, `silverman` or `cv`.
    #[arg(long, default_value = "cv", allow_negative_numbers = true)]
    sigma: String,
    #[arg(long, value_delimiter = ',')]
    grid: Vec<f64>,
    /// Standardize features; the statistics are stored with the model.
    #[arg(long)]
    normalize: bool,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    save_model: Option<PathBuf>,
    #[command(flatten)]
    knobs: FitKnobs,
}

#[derive(Args)]
struct PredictArgs {
    /// Model file written by `fit --save-model`.
    #[arg(long)]
    model: PathBuf,
    /// Features, optionally with a label column.
    #[arg(long)]
    data: PathBuf,
    /// 0-based label column when the file carries labels (default: last).
    #[arg(long)]
    label_col: Option<usize>,
    /// Positive label token; reports accuracy when the file carries labels.
    #[arg(long)]
    positive: Option<String>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct CvArgs {
    #[command(flatten)]
    data: DataArgs,
    #[command(flatten)]
    model: ModelArgs,
    #[arg(long, default_value = "rmee")]
    criterion: CriterionKind,
    #[arg(long, value_delimiter = ',')]
    grid: Vec<f64>,
    #[arg(long)]
    normalize: bool,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[command(flatten)]
    knobs: FitKnobs,
}

#[derive(Args)]
struct GenToyArgs {
    #[arg(long, default_value_t = 1000)]
    n: usize,
    #[arg(long)]
    n_test: Option<usize>,
    #[arg(long, default_value_t = 20)]
    d: usize,
    #[arg(long, default_value_t = 0.0)]
    mean_shift: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Optional contamination of the training set (same syntax as `bench`).
    #[arg(long)]
    contaminate: Option<CellArg>,
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    test_out: Option<PathBuf>,
}

fn parse_sigma(s: &str) -> Result<SigmaArg> {
    s.parse().map_err(BenchError::Invalid)
}

fn grid_or_default(grid: &[f64]) -> Vec<f64> {
    if grid.is_empty() {
        DEFAULT_SIGMA_GRID.to_vec()
    } else {
        grid.to_vec()
    }
}

fn criterion_spec(kind: CriterionKind, sigma: f64, q: QuantizerConfig) -> CriterionSpec {
    match kind {
        CriterionKind::Qmee => CriterionSpec::qmee(sigma, q),
        CriterionKind::Rmee => CriterionSpec::rmee(sigma, None),
        other => CriterionSpec::new(other, sigma),
    }
}

fn toy(args: ToyArgs) -> Result<()> {
    let spec = ToySpec {
        n_train: args.n,
        n_test: args.n_test.unwrap_or(args.n),
        dim: args.d,
        mean_shift: args.mean_shift,
    };
    let props = if args.props.is_empty() {
        proportion_grid(0.05)
    } else {
        args.props.clone()
    };
    let covs = match (args.full_cov_grid, args.cov.is_empty()) {
        (true, _) => FULL_COV_GRID.to_vec(),
        (false, true) => DEFAULT_COV_GRID.to_vec(),
        (false, false) => args.cov.clone(),
    };
    let mut grid = Vec::new();
    match args.mode {
        ToyMode::Attribute => {
            for &c in &covs {
                grid.extend(props.iter().map(|&p| ContaminationSpec::attribute(p, c)));
            }
        }
        ToyMode::Label => {
            for m in [
                ContaminationMode::LabelMajToMin,
                ContaminationMode::LabelMinToMaj,
            ] {
                grid.extend(props.iter().map(|&p| ContaminationSpec::label(m, p)));
            }
        }
        ToyMode::Directed(m) => grid.extend(props.iter().map(|&p| ContaminationSpec::label(m, p))),
    }
    let mut plan = ExperimentPlan::new(DataSource::Toy(spec));
    plan.grid = grid;
    plan.normalize = false;
    args.sweep.finish(plan)
}

fn bench(args: BenchArgs) -> Result<()> {
    let data = args.data.load()?;
    let mut plan = ExperimentPlan::new(DataSource::Table {
        data,
        train_fraction: args.train_fraction,
    });
    plan.model = args.model.kind()?;
    plan.normalize = !args.no_normalize;
    plan.grid = args.contaminate.iter().map(|c| c.0).collect();
    args.sweep.finish(plan)
}

fn prepare_training(data: &DataArgs, norm: bool) -> Result<(Dataset, Option<Normalization>)> {
    let ds = data.load()?;
    if !norm {
        return Ok((ds, None));
    }
    let (ds, _) = normalize(&ds, &ds)?;
    let stats = ds.normalization.clone();
    Ok((ds, stats))
}

fn resolve_sigma(
    sigma: &SigmaArg,
    grid: &[f64],
    kind: CriterionKind,
    template: &Model,
    ds: &Dataset,
    cfg: &FitConfig,
    q: QuantizerConfig,
) -> Result<f64> {
    if !kind.uses_kernel() {
        return Ok(1.0);
    }
    match sigma {
        SigmaArg::Fixed(s) => Ok(*s),
        SigmaArg::Silverman => {
            let mut ce = template.clone();
            fit(&mut ce, ds, &CriterionSpec::ce(), cfg)?;
            Ok(silverman_bandwidth(&training_errors(&ce, ds)?)?)
        }
        SigmaArg::Cv => {
            let grid = grid_or_default(grid);
            Ok(cross_validate_sigma(
                template,
                ds,
                &criterion_spec(kind, grid[0], q),
                &grid,
                cfg,
            )?)
        }
    }
}

fn fit_cmd(args: FitArgs) -> Result<()> {
    let (ds, norm) = prepare_training(&args.data, args.normalize)?;
    let cfg = args.knobs.config(derive_seed(args.seed, &[1]));
    let q = args.knobs.quantizer()?;
    let mut rng = Rng::new(derive_seed(args.seed, &[0]));
    let template = args.model.kind()?.build(ds.dim(), &mut rng)?;
    let sigma_arg = parse_sigma(&args.sigma)?;
    let sigma = resolve_sigma(
        &sigma_arg,
        &args.grid,
        args.criterion,
        &template,
        &ds,
        &cfg,
        q,
    )?;
    let mut model = template;
    let out = fit(
        &mut model,
        &ds,
        &criterion_spec(args.criterion, sigma, q),
        &cfg,
    )?;
    let pred = predict_labels(&model.predict_all(&ds.features)?);
    println!("criterion {}", args.criterion);
    if args.criterion.uses_kernel() {
        println!("sigma {sigma}");
    }
    if let Some(phi) = out.phi {
        println!("phi {} {} {}", phi.zero, phi.neg, phi.pos);
    }
    println!("iterations {}", out.trace.iters_used);
    println!("converged {}", out.trace.converged);
    println!("objective {:.9}", out.trace.final_objective());
    println!("train_accuracy {:.6}", accuracy(&pred, &ds.labels)?);
    if let Some(path) = &args.save_model {
        save_model(path, &model, norm.as_ref())?;
    }
    Ok(())
}

fn predict_cmd(args: PredictArgs) -> Result<()> {
    let (model, norm) = load_model(&args.model)?;
    let raw = load_features_csv(&args.data)?;
    let (features, truth) = if raw.cols() == model.dim() {
        (raw, None)
    } else if raw.cols() == model.dim() + 1 {
        let label = args.label_col.map_or(LabelColumn::Last, LabelColumn::Index);
        match &args.positive {
            Some(tok) => {
                let ds = load_csv(&args.data, label, tok)?;
                (ds.features, Some(ds.labels))
            }
            None => (load_multiclass_csv(&args.data, label)?.features, None),
        }
    } else {
        return Err(BenchError::Invalid(format!(
            "{}: model expects {} features, file has {} columns",
            args.data.display(),
            model.dim(),
            raw.cols()
        )));
    };
    let mut features = features;
    if let Some(n) = &norm {
        n.apply(&mut features);
    }
    let probs = model.predict_all(&features)?;
    let labels = predict_labels(&probs);
    write_predictions(&probs, &labels, &args.out)?;
    if let Some(truth) = truth {
        println!("accuracy {:.6}", accuracy(&labels, &truth)?);
    }
    println!(
        "{} predictions written to {}",
        probs.len(),
        args.out.display()
    );
    Ok(())
}

fn cv_cmd(args: CvArgs) -> Result<()> {
    if !args.criterion.uses_kernel() {
        return Err(BenchError::Invalid(format!(
            "{} has no bandwidth",
            args.criterion
        )));
    }
    let (ds, _) = prepare_training(&args.data, args.normalize)?;
    let cfg = args.knobs.config(derive_seed(args.seed, &[1]));
    let mut rng = Rng::new(derive_seed(args.seed, &[0]));
    let template = args.model.kind()?.build(ds.dim(), &mut rng)?;
    let sigma = resolve_sigma(
        &SigmaArg::Cv,
        &args.grid,
        args.criterion,
        &template,
        &ds,
        &cfg,
        args.knobs.quantizer()?,
    )?;
    println!("sigma {sigma}");
    Ok(())
}

fn gen_toy(args: GenToyArgs) -> Result<()> {
    let spec = ToySpec {
        n_train: args.n,
        n_test: args.n_test.unwrap_or(args.n),
        dim: args.d,
        mean_shift: args.mean_shift,
    };
    let mut rng = Rng::new(args.seed);
    let toy = generate_toy(&spec, &mut rng)?;
    let train = match &args.contaminate {
        Some(c) if c.0.proportion > 0.0 => {
            rmee_core::data::contaminate(&toy.train, &c.0, &mut rng.fork(1))?
        }
        _ => toy.train,
    };
    write_dataset_csv(&train, &args.out)?;
    if let Some(p) = &args.test_out {
        write_dataset_csv(&toy.test, p)?;
    }
    Ok(())
}

fn run(cli: Cli) -> Result<()> {
    if let Some(n) = cli.threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| BenchError::Invalid(e.to_string()))?;
    }
    match cli.command {
        Command::Toy(a) => toy(a),
        Command::Bench(a) => bench(a),
        Command::Fit(a) => fit_cmd(a),
        Command::Predict(a) => predict_cmd(a),
        Command::CvSigma(a) => cv_cmd(a),
        Command::GenToy(a) => gen_toy(a),
    }
}

fn one_line(s: &str) -> String {
    s.split_whitespace().collect::<Vec<_>>().join(" ")
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) if !e.use_stderr() => {
            // --help and --version
            let _ = e.print();
            return ExitCode::SUCCESS;
        }
        Err(e) => {
            let text = e.to_string();
            let first = text.lines().next().unwrap_or("bad arguments");
            eprintln!(
                "error[usage]: {}",
                one_line(first.trim_start_matches("error: "))
            );
            return ExitCode::from(2);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error[{}]: {}", e.kind(), one_line(&e.to_string()));
            ExitCode::FAILURE
        }
    }
}
