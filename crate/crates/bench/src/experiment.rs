//! Monte-Carlo robustness experiments.
//!
//! A plan is a grid of contamination cells crossed with repetitions. Every
//! (cell, repetition) task draws its data from a seed derived from the master
//! seed and its indices, contaminates only the training split, fits each
//! criterion on the same split (and the same ELM hidden layer) and records
//! test accuracy. Tasks run on the rayon pool; results are assembled in task
//! order, so output does not depend on scheduling.

use std::cmp::Ordering;
use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use rayon::prelude::*;

use rmee_core::criteria::{CriterionKind, CriterionSpec};
use rmee_core::data::{
    contaminate, generate_toy, normalize, split, ContaminationMode, ContaminationSpec, Dataset,
    ToySpec,
};
use rmee_core::kernel::silverman_bandwidth;
use rmee_core::metrics::Confusion;
use rmee_core::model::{predict_labels, ElmConfig, ElmModel, LogisticModel, Model};
use rmee_core::optim::{cross_validate_sigma, fit, training_errors, FitConfig};
use rmee_core::quantize::QuantizerConfig;
use rmee_core::rng::{derive_seed, Rng};

use crate::error::{BenchError, Result};

/// Covariance scales of the full toy attribute sweep.
pub const FULL_COV_GRID: [f64; 9] = [5.0, 10.0, 20.0, 30.0, 50.0, 100.0, 200.0, 500.0, 1000.0];
pub const DEFAULT_COV_GRID: [f64; 3] = [5.0, 100.0, 1000.0];
pub const DEFAULT_REPETITIONS: usize = 20;
pub const DEFAULT_SIGMA: f64 = 0.4;

#[derive(Debug, Clone)]
pub enum DataSource {
    /// A fresh toy per task.
    Toy(ToySpec),
    /// A fixed table, re-split per task.
    Table { data: Dataset, train_fraction: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ModelKind {
    Logistic,
    Elm(ElmConfig),
}

impl ModelKind {
    /// Zero-weight model; ELM hidden layers are drawn from `rng`.
    pub fn build(&self, dim: usize, rng: &mut Rng) -> Result<Model> {
        Ok(match self {
            ModelKind::Logistic => Model::Logistic(LogisticModel::new(dim)),
            ModelKind::Elm(cfg) => Model::Elm(ElmModel::init(dim, cfg, rng)?),
        })
    }

    pub fn name(&self) -> &'static str {
        match self {
            ModelKind::Logistic => "lr",
            ModelKind::Elm(_) => "elm",
        }
    }
}

/// How kernel criteria get their bandwidth.
#[derive(Debug, Clone, PartialEq)]
pub enum SigmaPolicy {
    Fixed(f64),
    /// Silverman's rule on the training errors of a CE fit.
    Silverman,
    /// Five-fold cross-validation over the grid, per criterion and task.
    CrossValidate(Vec<f64>),
}

#[derive(Debug, Clone)]
pub struct ExperimentPlan {
    pub source: DataSource,
    pub model: ModelKind,
    pub criteria: Vec<CriterionKind>,
    /// One cell per entry; proportion 0 is the clean baseline.
    pub grid: Vec<ContaminationSpec>,
    pub repetitions: usize,
    pub master_seed: u64,
    pub sigma: SigmaPolicy,
    /// Standardize with training statistics before contaminating.
    pub normalize: bool,
    pub quantizer: QuantizerConfig,
    pub fit: FitConfig,
}

impl ExperimentPlan {
    /// Defaults for the given data: logistic model, all criteria, no cells.
    pub fn new(source: DataSource) -> Self {
        let normalize = matches!(source, DataSource::Table { .. });
        ExperimentPlan {
            source,
            model: ModelKind::Logistic,
            criteria: CriterionKind::ALL.to_vec(),
            grid: Vec::new(),
            repetitions: DEFAULT_REPETITIONS,
            master_seed: 0,
            sigma: SigmaPolicy::Fixed(DEFAULT_SIGMA),
            normalize,
            quantizer: QuantizerConfig::default(),
            fit: FitConfig::default(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.repetitions == 0 {
            return Err(BenchError::Invalid("repetitions must be at least 1".into()));
        }
        if self.criteria.is_empty() {
            return Err(BenchError::Invalid("no criteria selected".into()));
        }
        if self.grid.is_empty() {
            return Err(BenchError::Invalid("contamination grid is empty".into()));
        }
        for spec in &self.grid {
            spec.validate()?;
        }
        match &self.sigma {
            SigmaPolicy::Fixed(s) if !(*s > 0.0 && s.is_finite()) => {
                return Err(BenchError::Invalid(format!("invalid bandwidth {s}")));
            }
            SigmaPolicy::CrossValidate(grid) if grid.is_empty() => {
                return Err(BenchError::Invalid("empty bandwidth grid".into()));
            }
            _ => {}
        }
        if let DataSource::Table {
            data,
            train_fraction,
        } = &self.source
        {
            if !(*train_fraction > 0.0 && *train_fraction < 1.0) {
                return Err(BenchError::Invalid(
                    "train fraction must lie in (0, 1)".into(),
                ));
            }
            if data.len() < 2 {
                return Err(BenchError::Invalid(
                    "dataset needs at least two samples".into(),
                ));
            }
        }
        self.fit.validate()?;
        Ok(())
    }
}

/// `(mode, parameter)` labels of a cell: attribute cells are keyed by their
/// covariance scale, label cells by flip direction.
pub fn cell_key(spec: &ContaminationSpec) -> (String, String) {
    match spec.mode {
        ContaminationMode::Attribute => {
            ("attribute".into(), format!("{}", spec.attribute_cov_scale))
        }
        ContaminationMode::LabelMajToMin => ("label".into(), "maj_to_min".into()),
        ContaminationMode::LabelMinToMaj => ("label".into(), "min_to_maj".into()),
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ResultRow {
    pub criterion: CriterionKind,
    pub mode: String,
    pub parameter: String,
    pub proportion: f64,
    pub mean_acc: f64,
    /// Sample standard deviation; 0 for a single repetition.
    pub std_acc: f64,
    /// Successful repetitions.
    pub reps: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FailedFit {
    pub criterion: CriterionKind,
    pub mode: String,
    pub parameter: String,
    pub proportion: f64,
    pub repetition: usize,
    pub message: String,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct ExperimentReport {
    pub rows: Vec<ResultRow>,
    pub failures: Vec<FailedFit>,
}

/// Data of one task: the contaminated training split, the untouched test
/// split and the zero-weight model every criterion starts from.
#[derive(Debug, Clone)]
pub struct TaskData {
    pub train: Dataset,
    pub test: Dataset,
    pub base_model: Model,
}

fn task_rng(plan: &ExperimentPlan, cell: usize, rep: usize) -> Rng {
    Rng::new(derive_seed(plan.master_seed, &[cell as u64, rep as u64]))
}

/// Builds the data of task `(cell, rep)`.
pub fn prepare_task(plan: &ExperimentPlan, cell: usize, rep: usize) -> Result<TaskData> {
    let spec = plan
        .grid
        .get(cell)
        .ok_or_else(|| BenchError::Invalid(format!("no grid cell {cell}")))?;
    prepare(plan, spec, &task_rng(plan, cell, rep))
}

fn prepare(plan: &ExperimentPlan, spec: &ContaminationSpec, rng: &Rng) -> Result<TaskData> {
    let mut data_rng = rng.fork(0);
    let (train, test) = match &plan.source {
        DataSource::Toy(toy) => {
            let t = generate_toy(toy, &mut data_rng)?;
            (t.train, t.test)
        }
        DataSource::Table {
            data,
            train_fraction,
        } => split(data, *train_fraction, &mut data_rng)?,
    };
    let (train, test) = if plan.normalize {
        normalize(&train, &test)?
    } else {
        (train, test)
    };
    // only the training split is ever handed to the contamination step
    let train = if spec.proportion > 0.0 {
        contaminate(&train, spec, &mut rng.fork(1))?
    } else {
        train
    };
    let base_model = plan.model.build(train.dim(), &mut rng.fork(2))?;
    Ok(TaskData {
        train,
        test,
        base_model,
    })
}

fn test_confusion(model: &Model, test: &Dataset) -> Result<Confusion> {
    let pred = predict_labels(&model.predict_all(&test.features)?);
    let c = Confusion::from_labels(&pred, &test.labels)?;
    debug_assert_eq!(c.total(), test.len());
    Ok(c)
}

fn silverman_sigma(p: &TaskData, cfg: &FitConfig) -> Result<f64> {
    let mut ce = p.base_model.clone();
    fit(&mut ce, &p.train, &CriterionSpec::ce(), cfg)?;
    Ok(silverman_bandwidth(&training_errors(&ce, &p.train)?)?)
}

fn criterion_spec(kind: CriterionKind, sigma: f64, q: QuantizerConfig) -> CriterionSpec {
    match kind {
        CriterionKind::Ce => CriterionSpec::ce(),
        CriterionKind::Mse => CriterionSpec::mse(),
        CriterionKind::CLoss => CriterionSpec::closs(sigma),
        CriterionKind::Qmee => CriterionSpec::qmee(sigma, q),
        CriterionKind::Rmee => CriterionSpec::rmee(sigma, None),
    }
}

/// Test confusion of each criterion for one (cell, repetition) task.
pub fn run_task(
    plan: &ExperimentPlan,
    cell: usize,
    rep: usize,
) -> Vec<(CriterionKind, Result<Confusion>)> {
    let spec = &plan.grid[cell];
    let rng = task_rng(plan, cell, rep);
    let prepared = match prepare(plan, spec, &rng) {
        Ok(p) => p,
        Err(e) => {
            let msg = e.to_string();
            return plan
                .criteria
                .iter()
                .map(|&c| (c, Err(BenchError::Invalid(msg.clone()))))
                .collect();
        }
    };
    let mut cfg = plan.fit.clone();
    cfg.seed = rng.fork(3).seed();
    let mut silverman: Option<Result<f64, String>> = None;

    plan.criteria
        .iter()
        .map(|&kind| {
            let outcome = (|| -> Result<Confusion> {
                let sigma = match (&plan.sigma, kind.uses_kernel()) {
                    (_, false) => 1.0,
                    (SigmaPolicy::Fixed(s), true) => *s,
                    (SigmaPolicy::Silverman, true) => silverman
                        .get_or_insert_with(|| {
                            silverman_sigma(&prepared, &cfg).map_err(|e| e.to_string())
                        })
                        .clone()
                        .map_err(BenchError::Invalid)?,
                    (SigmaPolicy::CrossValidate(grid), true) => cross_validate_sigma(
                        &prepared.base_model,
                        &prepared.train,
                        &criterion_spec(kind, grid[0], plan.quantizer),
                        grid,
                        &cfg,
                    )?,
                };
                let mut model = prepared.base_model.clone();
                fit(
                    &mut model,
                    &prepared.train,
                    &criterion_spec(kind, sigma, plan.quantizer),
                    &cfg,
                )?;
                test_confusion(&model, &prepared.test)
            })();
            (kind, outcome)
        })
        .collect()
}

fn mean_std(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    if xs.len() < 2 {
        return (mean, 0.0);
    }
    let var = xs.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

fn compare_parameter(a: &str, b: &str) -> Ordering {
    match (a.parse::<f64>(), b.parse::<f64>()) {
        (Ok(x), Ok(y)) => x.total_cmp(&y),
        _ => a.cmp(b),
    }
}

fn compare_rows(a: &ResultRow, b: &ResultRow) -> Ordering {
    a.criterion
        .cmp(&b.criterion)
        .then_with(|| a.mode.cmp(&b.mode))
        .then_with(|| compare_parameter(&a.parameter, &b.parameter))
        .then_with(|| a.proportion.total_cmp(&b.proportion))
}

/// Runs every task of the plan and aggregates test accuracy per
/// (criterion, cell). Failed fits are listed in the report and excluded
/// from their row; a row with no successful repetition is omitted.
pub fn run_experiment(plan: &ExperimentPlan) -> Result<ExperimentReport> {
    plan.validate()?;
    let reps = plan.repetitions;
    let outcomes: Vec<_> = (0..plan.grid.len() * reps)
        .into_par_iter()
        .map(|t| run_task(plan, t / reps, t % reps))
        .collect();

    let mut report = ExperimentReport::default();
    for (cell, spec) in plan.grid.iter().enumerate() {
        let (mode, parameter) = cell_key(spec);
        for (ci, &criterion) in plan.criteria.iter().enumerate() {
            let mut accs = Vec::with_capacity(reps);
            for rep in 0..reps {
                match &outcomes[cell * reps + rep][ci].1 {
                    Ok(c) => accs.push(c.accuracy()),
                    Err(e) => report.failures.push(FailedFit {
                        criterion,
                        mode: mode.clone(),
                        parameter: parameter.clone(),
                        proportion: spec.proportion,
                        repetition: rep,
                        message: e.to_string(),
                    }),
                }
            }
            if accs.is_empty() {
                continue;
            }
            let (mean_acc, std_acc) = mean_std(&accs);
            report.rows.push(ResultRow {
                criterion,
                mode: mode.clone(),
                parameter: parameter.clone(),
                proportion: spec.proportion,
                mean_acc,
                std_acc,
                reps: accs.len(),
            });
        }
    }
    report.rows.sort_by(compare_rows);
    Ok(report)
}

pub const RESULTS_HEADER: &str = "criterion,mode,parameter,proportion,mean_acc,std_acc,reps";

/// CSV text of the rows, floats with six decimals.
pub fn format_results(rows: &[ResultRow]) -> String {
    let mut s = String::with_capacity(64 * (rows.len() + 1));
    s.push_str(RESULTS_HEADER);
    s.push('\n');
    for r in rows {
        let _ = writeln!(
            s,
            "{},{},{},{:.6},{:.6},{:.6},{}",
            r.criterion, r.mode, r.parameter, r.proportion, r.mean_acc, r.std_acc, r.reps
        );
    }
    s
}

pub fn write_results(rows: &[ResultRow], path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    std::fs::write(path, format_results(rows)).map_err(|e| BenchError::io(path, e))
}

/// Plot tables keyed by file suffix `<mode>_<parameter>`.
///
/// Each table has a `#` header line, then one line per proportion in
/// increasing order: the proportion followed by mean and std for every
/// criterion present in `rows`. Missing cells are written as `nan`.
pub fn plot_tables(rows: &[ResultRow]) -> BTreeMap<String, String> {
    let mut criteria: Vec<CriterionKind> = rows.iter().map(|r| r.criterion).collect();
    criteria.sort();
    criteria.dedup();

    let mut groups: BTreeMap<(String, String), Vec<&ResultRow>> = BTreeMap::new();
    for r in rows {
        groups
            .entry((r.mode.clone(), r.parameter.clone()))
            .or_default()
            .push(r);
    }
    let mut out = BTreeMap::new();
    for ((mode, parameter), members) in groups {
        let mut props: Vec<f64> = members.iter().map(|r| r.proportion).collect();
        props.sort_by(f64::total_cmp);
        props.dedup();
        let mut s = String::from("# proportion");
        for c in &criteria {
            let _ = write!(s, " {c}_mean {c}_std");
        }
        s.push('\n');
        for p in props {
            let _ = write!(s, "{p:.6}");
            for c in &criteria {
                match members
                    .iter()
                    .find(|r| r.criterion == *c && r.proportion == p)
                {
                    Some(r) => {
                        let _ = write!(s, " {:.6} {:.6}", r.mean_acc, r.std_acc);
                    }
                    None => s.push_str(" nan nan"),
                }
            }
            s.push('\n');
        }
        out.insert(format!("{mode}_{parameter}"), s);
    }
    out
}

/// Writes one `<prefix>_<mode>_<parameter>.dat` file per group, returning
/// the paths written.
pub fn emit_plot_data(rows: &[ResultRow], prefix: impl AsRef<Path>) -> Result<Vec<PathBuf>> {
    let prefix = prefix.as_ref().to_string_lossy().into_owned();
    let mut written = Vec::new();
    for (suffix, text) in plot_tables(rows) {
        let path = PathBuf::from(format!("{prefix}_{suffix}.dat"));
        std::fs::write(&path, text).map_err(|e| BenchError::io(&path, e))?;
        written.push(path);
    }
    Ok(written)
}

/// Proportions `0, step, 2 step, ..., 1`.
pub fn proportion_grid(step: f64) -> Vec<f64> {
    let n = (1.0 / step).round() as usize;
    (0..=n).map(|i| (i as f64 * step).min(1.0)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn row(c: CriterionKind, param: &str, p: f64) -> ResultRow {
        ResultRow {
            criterion: c,
            mode: "attribute".into(),
            parameter: param.into(),
            proportion: p,
            mean_acc: 0.5,
            std_acc: 0.0,
            reps: 1,
        }
    }

    #[test]
    fn stats() {
        assert_eq!(mean_std(&[0.7]), (0.7, 0.0));
        let (m, s) = mean_std(&[0.5, 0.7, 0.9]);
        assert!((m - 0.7).abs() < 1e-15);
        assert!((s - 0.2).abs() < 1e-15);
    }

    #[test]
    fn rows_sort_numerically_by_parameter() {
        let mut rows = [
            row(CriterionKind::Rmee, "5", 0.0),
            row(CriterionKind::Ce, "100", 0.2),
            row(CriterionKind::Ce, "5", 0.4),
            row(CriterionKind::Ce, "5", 0.2),
        ];
        rows.sort_by(compare_rows);
        let keys: Vec<_> = rows
            .iter()
            .map(|r| (r.criterion, r.parameter.as_str(), r.proportion))
            .collect();
        assert_eq!(
            keys,
            vec![
                (CriterionKind::Ce, "5", 0.2),
                (CriterionKind::Ce, "5", 0.4),
                (CriterionKind::Ce, "100", 0.2),
                (CriterionKind::Rmee, "5", 0.0),
            ]
        );
    }

    #[test]
    fn results_text() {
        assert_eq!(format_results(&[]), format!("{RESULTS_HEADER}\n"));
        let text = format_results(&[row(CriterionKind::CLoss, "100", 0.4)]);
        assert_eq!(
            text.lines().nth(1),
            Some("closs,attribute,100,0.400000,0.500000,0.000000,1")
        );
    }

    #[test]
    fn plot_shape_and_missing_cells() {
        let mut rows = Vec::new();
        for c in CriterionKind::ALL {
            for p in proportion_grid(0.05) {
                if !(c == CriterionKind::Qmee && p == 0.5) {
                    rows.push(row(c, "100", p));
                }
            }
        }
        let tables = plot_tables(&rows);
        let table = &tables["attribute_100"];
        let data: Vec<&str> = table.lines().filter(|l| !l.starts_with('#')).collect();
        assert_eq!(data.len(), 21);
        assert!(data.iter().all(|l| l.split_whitespace().count() == 11));
        let props: Vec<f64> = data
            .iter()
            .map(|l| l.split_whitespace().next().unwrap().parse().unwrap())
            .collect();
        assert!(props.windows(2).all(|w| w[0] < w[1]));
        assert_eq!(
            data[10].split_whitespace().filter(|t| *t == "nan").count(),
            2
        );
    }

    #[test]
    fn grid_endpoints() {
        let g = proportion_grid(0.05);
        assert_eq!(g.len(), 21);
        assert_eq!(g[0], 0.0);
        assert_eq!(g[20], 1.0);
    }
}
