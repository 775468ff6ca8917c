//! Argument definitions and the five subcommands.

use std::collections::HashMap;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;
use serde_json::json;

use cifrf_core::censoring::{fit_censoring_tree, fit_reverse_km, CensoringModel, DEFAULT_EPSILON};
use cifrf_core::data::marginal_event_quantiles;
use cifrf_core::evaluation::{partial_dependence_curves, pdp_table_categorical};
use cifrf_core::forest::{self, default_mtry, ForestParams, DEFAULT_NODESIZE, DEFAULT_TREES};
use cifrf_core::imputation::Nuisance;
use cifrf_core::nuisance::{fit_aalen_johansen, fit_forest_cif, ParametricFineGray};
use cifrf_core::rng;
use cifrf_core::simulation::{self, CensoringScheme, Correlation, SimConfig, AR_RHO, BETA1, BETA2, DEFAULT_DIM, DEFAULT_P};
use cifrf_core::{CifModel, Dataset, Error, Matrix, Method, TimeGrid};

use crate::error::{CliError, CliResult};
use crate::io::{self, fmt_f64, Schema};
use crate::model::ModelFile;

/// Stream tag for the first-pass forests of the iterated nuisance.
const NUISANCE_TAG: u64 = 0x6e75_6973;

/// Quantile levels of the grid used by the first-pass forests.
const FINE_PROBS: [f64; 19] = [
    0.05, 0.10, 0.15, 0.20, 0.25, 0.30, 0.35, 0.40, 0.45, 0.50, 0.55, 0.60, 0.65, 0.70, 0.75, 0.80, 0.85, 0.90, 0.95,
];

#[derive(Debug, Parser)]
#[command(name = "cifrf", version, about = "Random forests for cumulative incidence under censoring")]
pub struct Cli {
    /// Worker threads; defaults to the available cores.
    #[arg(long, global = true)]
    pub threads: Option<usize>,
    /// Print the resolved configuration as JSON on stdout.
    #[arg(long, global = true)]
    pub verbose: bool,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Simulate competing-risks data with known incidence functions.
    Simulate(SimulateArgs),
    /// Fit a forest on imputed responses.
    Fit(FitArgs),
    /// Score a fitted forest against true incidence values.
    Evaluate(EvaluateArgs),
    /// Partial dependence of a fitted forest on one covariate.
    Pdp(PdpArgs),
    /// Grid search over nodesize and mtry by out-of-bag error.
    Tune(TuneArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum CensoringArg {
    Lognormal,
    Uniform,
    None,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum CorrelationArg {
    Independent,
    Ar,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct SimulateArgs {
    #[arg(long, default_value_t = 250)]
    pub n: usize,
    #[arg(long, default_value_t = 1)]
    pub seed: u64,
    #[arg(long, value_enum, default_value_t = CensoringArg::Lognormal)]
    pub censoring: CensoringArg,
    /// Lower end of the uniform censoring interval.
    #[arg(long, default_value_t = 0.0)]
    pub uniform_a: f64,
    /// Upper end of the uniform censoring interval.
    #[arg(long, default_value_t = 4.0)]
    pub uniform_b: f64,
    #[arg(long, value_enum, default_value_t = CorrelationArg::Independent)]
    pub correlation: CorrelationArg,
    #[arg(long, default_value_t = AR_RHO)]
    pub rho: f64,
    /// Cause-1 mass parameter of the generating model.
    #[arg(long, default_value_t = DEFAULT_P)]
    pub p: f64,
    /// Number of covariates.
    #[arg(long, default_value_t = DEFAULT_DIM)]
    pub p_dim: usize,
    /// Number of independent test points.
    #[arg(long, default_value_t = 1000)]
    pub n_test: usize,
    /// Quantile levels of the latent event time defining the grid.
    #[arg(long, value_delimiter = ',', default_values_t = vec![0.25, 0.5, 0.75])]
    pub probs: Vec<f64>,
    /// Draws used to approximate the latent-time quantiles.
    #[arg(long, default_value_t = 1_000_000)]
    pub quantile_sample: usize,
    #[arg(long, default_value = ".")]
    pub out_dir: PathBuf,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct DataArgs {
    /// Observed-data CSV with a header row.
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long, default_value = "time")]
    pub time_col: String,
    #[arg(long, default_value = "status")]
    pub status_col: String,
    /// Covariate columns; defaults to every column except time, status and id.
    #[arg(long, value_delimiter = ',')]
    pub covariates: Option<Vec<String>>,
    /// Number of causes; defaults to the largest status code.
    #[arg(long)]
    pub causes: Option<u32>,
}

impl DataArgs {
    fn schema(&self) -> Schema {
        Schema {
            time: self.time_col.clone(),
            status: self.status_col.clone(),
            covariates: self.covariates.clone(),
            causes: self.causes,
        }
    }

    fn load(&self) -> CliResult<Dataset> {
        io::load_csv(&self.data, &self.schema())
    }
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct GridArgs {
    /// Explicit evaluation times.
    #[arg(long, value_delimiter = ',', conflicts_with_all = ["probs", "grid"])]
    pub times: Option<Vec<f64>>,
    /// Quantile levels of the uncensored follow-up times.
    #[arg(long, value_delimiter = ',', conflicts_with = "grid")]
    pub probs: Option<Vec<f64>>,
    /// Take the grid from a config.json written by `simulate`.
    #[arg(long)]
    pub grid: Option<PathBuf>,
}

impl GridArgs {
    fn resolve(&self, data: &Dataset) -> CliResult<TimeGrid> {
        let times = if let Some(times) = &self.times {
            times.clone()
        } else if let Some(path) = &self.grid {
            grid_from_config(path)?
        } else {
            let probs = self.probs.clone().unwrap_or_else(|| vec![0.25, 0.5, 0.75]);
            let q = marginal_event_quantiles(data, &probs)?;
            if q.windows(2).any(|w| w[0] == w[1]) {
                return Err(Error::Configuration(format!("quantile levels {probs:?} give tied times {q:?}")).into());
            }
            q
        };
        Ok(TimeGrid::equal_weights(times)?)
    }
}

fn grid_from_config(path: &Path) -> CliResult<Vec<f64>> {
    let value: serde_json::Value = io::read_json(path)?;
    let times = value
        .pointer("/grid/times")
        .and_then(|t| t.as_array())
        .ok_or_else(|| CliError::format(path, "no grid.times entry"))?;
    times.iter().map(|t| t.as_f64().ok_or_else(|| CliError::format(path, "grid times must be numbers"))).collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum MethodArg {
    Ipcw,
    Bj,
    Dr,
    DrXi,
}

impl From<MethodArg> for Method {
    fn from(m: MethodArg) -> Method {
        match m {
            MethodArg::Ipcw => Method::Ipcw,
            MethodArg::Bj => Method::Bj,
            MethodArg::Dr => Method::Dr,
            MethodArg::DrXi => Method::DrXi,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum NuisanceArg {
    /// Marginal Aalen-Johansen estimate.
    Aj,
    /// The generating Fine-Gray model, read from --fg-params.
    FgTrue,
    /// Buckley-James forests fitted in a first pass.
    Iterated,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum CensoringModelArg {
    Km,
    Tree,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct ModelArgs {
    #[arg(long, value_enum, default_value_t = MethodArg::Dr)]
    pub method: MethodArg,
    #[arg(long, value_enum, default_value_t = NuisanceArg::Aj)]
    pub nuisance: NuisanceArg,
    /// Fine-Gray parameters: a config.json from `simulate` or a bare
    /// parameter object.
    #[arg(long)]
    pub fg_params: Option<PathBuf>,
    #[arg(long = "censoring", value_enum, default_value_t = CensoringModelArg::Km)]
    pub censoring_model: CensoringModelArg,
    /// Minimum node size of the censoring tree.
    #[arg(long, default_value_t = 30)]
    pub min_node: usize,
    /// Floor applied to censoring survivor values.
    #[arg(long, default_value_t = DEFAULT_EPSILON)]
    pub epsilon: f64,
    #[arg(long, default_value_t = 1)]
    pub cause: u32,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct ForestArgs {
    /// Trees per replicate.
    #[arg(long = "B", default_value_t = DEFAULT_TREES)]
    pub trees: usize,
    #[arg(long, default_value_t = DEFAULT_NODESIZE)]
    pub nodesize: usize,
    /// `sqrt` or a count.
    #[arg(long, default_value = "sqrt")]
    pub mtry: String,
    #[arg(long, default_value_t = 1)]
    pub seed: u64,
}

fn resolve_mtry(spec: &str, p: usize) -> CliResult<usize> {
    if spec == "sqrt" {
        return Ok(default_mtry(p));
    }
    match spec.parse::<usize>() {
        Ok(m) if m >= 1 => Ok(m.min(p)),
        _ => Err(CliError::Usage(format!("--mtry must be 'sqrt' or a positive integer, got '{spec}'"))),
    }
}

impl ForestArgs {
    fn params(&self, p: usize) -> CliResult<ForestParams> {
        Ok(ForestParams {
            n_trees: self.trees,
            nodesize: self.nodesize,
            mtry: resolve_mtry(&self.mtry, p)?,
            seed: self.seed,
            bootstrap: true,
        })
    }
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct FitArgs {
    #[command(flatten)]
    pub data: DataArgs,
    #[command(flatten)]
    pub grid: GridArgs,
    #[command(flatten)]
    pub model: ModelArgs,
    #[command(flatten)]
    pub forest: ForestArgs,
    /// Replicates of the randomized transform.
    #[arg(long = "R", default_value_t = 1)]
    pub replicates: usize,
    #[arg(long, default_value = "model.json")]
    pub out: PathBuf,
    #[arg(long, default_value = "diagnostics.csv")]
    pub diagnostics: PathBuf,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct EvaluateArgs {
    #[arg(long)]
    pub model: PathBuf,
    /// Test covariates with an id column.
    #[arg(long)]
    pub test: PathBuf,
    /// True incidence values in long form: id, cause, time, cif.
    #[arg(long)]
    pub truth: PathBuf,
    /// Score unclamped predictions.
    #[arg(long)]
    pub raw: bool,
    #[arg(long, default_value = "evaluation.csv")]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct PdpArgs {
    #[arg(long)]
    pub model: PathBuf,
    /// File whose covariate rows are averaged over.
    #[arg(long)]
    pub covariates: PathBuf,
    /// Covariate name.
    #[arg(long)]
    pub variable: String,
    /// Values at which the covariate is fixed.
    #[arg(long, value_delimiter = ',', required_unless_present = "levels", conflicts_with = "levels")]
    pub values: Option<Vec<f64>>,
    /// Levels of a categorical covariate; also writes the level table.
    #[arg(long, value_delimiter = ',')]
    pub levels: Option<Vec<f64>>,
    /// Second model; adds its estimate and the difference to each row.
    #[arg(long)]
    pub baseline: Option<PathBuf>,
    #[arg(long)]
    pub raw: bool,
    #[arg(long, default_value = "pdp.csv")]
    pub out: PathBuf,
    /// Output path of the level table.
    #[arg(long, default_value = "pdp_table.csv")]
    pub table: PathBuf,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct TuneArgs {
    #[command(flatten)]
    pub data: DataArgs,
    #[command(flatten)]
    pub grid: GridArgs,
    #[command(flatten)]
    pub model: ModelArgs,
    #[command(flatten)]
    pub forest: ForestArgs,
    #[arg(long, value_delimiter = ',', default_values_t = vec![10, 20, 50])]
    pub nodesizes: Vec<usize>,
    #[arg(long, value_delimiter = ',', default_values_t = vec![2, 4, 8])]
    pub mtrys: Vec<usize>,
    #[arg(long, default_value = "tune.csv")]
    pub out: PathBuf,
}

/// Runs a parsed command line.
pub fn run(cli: Cli) -> CliResult<()> {
    if let Some(t) = cli.threads {
        if t == 0 {
            return Err(CliError::Usage("--threads must be at least 1".into()));
        }
        // A pool may already exist when called repeatedly in one process.
        let _ = rayon::ThreadPoolBuilder::new().num_threads(t).build_global();
    }
    let echo = match cli.command {
        Command::Simulate(a) => simulate(&a)?,
        Command::Fit(a) => fit(&a)?,
        Command::Evaluate(a) => evaluate(&a)?,
        Command::Pdp(a) => pdp(&a)?,
        Command::Tune(a) => tune(&a)?,
    };
    if cli.verbose {
        println!("{}", serde_json::to_string_pretty(&echo).expect("config serializes"));
    }
    Ok(())
}

fn to_value<T: Serialize>(v: &T) -> serde_json::Value {
    serde_json::to_value(v).expect("config serializes")
}

pub fn simulate(a: &SimulateArgs) -> CliResult<serde_json::Value> {
    let config = SimConfig {
        n: a.n,
        p_dim: a.p_dim,
        correlation: match a.correlation {
            CorrelationArg::Independent => Correlation::Independent,
            CorrelationArg::Ar => Correlation::Ar { rho: a.rho },
        },
        fg: ParametricFineGray::new(a.p, BETA1, BETA2)?,
        censoring: match a.censoring {
            CensoringArg::Lognormal => CensoringScheme::LogNormal,
            CensoringArg::Uniform => CensoringScheme::Uniform { a: a.uniform_a, b: a.uniform_b },
            CensoringArg::None => CensoringScheme::None,
        },
        seed: a.seed,
    };
    let (data, oracle) = simulation::simulate_dataset(&config)?;
    let grid = simulation::oracle_time_quantiles(&config, &a.probs, a.quantile_sample)?;
    let grid = TimeGrid::equal_weights(grid)?;
    let test = simulation::gen_test_covariates(&config, a.n_test);

    let names = io::covariate_names(&data);
    io::write_dataset(&a.out_dir.join("data.csv"), &data)?;

    let mut header = vec!["id".to_string()];
    header.extend(names.iter().cloned());
    let rows = test.rows_iter().enumerate().map(|(i, w)| {
        let mut row = vec![(i + 1).to_string()];
        row.extend(w.iter().map(|&x| fmt_f64(x)));
        row
    });
    io::write_csv(&a.out_dir.join("test.csv"), &header, rows)?;

    let mut truth = Vec::with_capacity(a.n_test * 2 * grid.len());
    for (i, w) in test.rows_iter().enumerate() {
        for cause in 1..=2 {
            for &t in grid.times() {
                truth.push(vec![(i + 1).to_string(), cause.to_string(), fmt_f64(t), fmt_f64(oracle.cif(cause, t, w))]);
            }
        }
    }
    io::write_csv(&a.out_dir.join("truth.csv"), &["id", "cause", "time", "cif"], truth)?;

    let echo = json!({
        "command": "simulate",
        "args": to_value(a),
        "simulation": to_value(&config),
        "grid": { "probs": a.probs, "quantile_sample": a.quantile_sample, "times": grid.times(), "weights": grid.weights() },
        "n_test": a.n_test,
        "censored_fraction": data.censoring_fraction(),
    });
    io::write_json(&a.out_dir.join("config.json"), &echo)?;
    eprintln!("simulated {} records, {:.1}% censored", data.n(), 100.0 * data.censoring_fraction());
    Ok(echo)
}

/// Reads Fine-Gray parameters from a `simulate` config or a bare object.
fn load_fg(path: &Path) -> CliResult<ParametricFineGray> {
    let value: serde_json::Value = io::read_json(path)?;
    let inner = value.pointer("/simulation/fg").cloned().unwrap_or(value);
    let fg: ParametricFineGray = serde_json::from_value(inner).map_err(|e| CliError::format(path, e))?;
    Ok(ParametricFineGray::new(fg.p(), *fg.beta1(), *fg.beta2())?)
}

/// Censoring and incidence models for one run.
struct Fitted {
    censoring: Option<CensoringModel>,
    cif: Box<dyn CifModel>,
    label: String,
}

impl Fitted {
    fn nuisance(&self) -> Nuisance<'_> {
        Nuisance { censoring: self.censoring.as_ref().map(|c| c as _), cif: Some(self.cif.as_ref()) }
    }
}

fn fit_nuisance(data: &Dataset, m: &ModelArgs, forest: &ForestParams) -> CliResult<Fitted> {
    let method = Method::from(m.method);
    if m.cause == 0 || m.cause > data.k_causes() {
        return Err(Error::Parameter(format!("cause {} outside 1..={}", m.cause, data.k_causes())).into());
    }
    if method != Method::Bj && data.censored_count() == 0 {
        eprintln!("warning: no censored records; the {} transform reduces to the full-data indicator", method.name());
    }
    let censoring = match (method, m.censoring_model) {
        (Method::Bj, _) => None,
        (_, CensoringModelArg::Km) => Some(fit_reverse_km(data).with_epsilon(m.epsilon)?),
        (_, CensoringModelArg::Tree) => Some(fit_censoring_tree(data, m.min_node)?.with_epsilon(m.epsilon)?),
    };
    let (cif, label): (Box<dyn CifModel>, &str) = match m.nuisance {
        NuisanceArg::Aj => (Box::new(fit_aalen_johansen(data)), "aj"),
        NuisanceArg::FgTrue => {
            let path = m.fg_params.as_ref().ok_or_else(|| {
                CliError::Core(Error::Configuration("--nuisance fg-true needs --fg-params".into()))
            })?;
            (Box::new(load_fg(path)?), "fg-true")
        }
        NuisanceArg::Iterated => {
            let fine = fine_grid(data)?;
            let params = ForestParams { seed: rng::derive(forest.seed, NUISANCE_TAG, 0), ..*forest };
            (Box::new(fit_forest_cif(data, &fine, &params)?), "iterated")
        }
    };
    Ok(Fitted { censoring, cif, label: label.into() })
}

fn fine_grid(data: &Dataset) -> CliResult<TimeGrid> {
    let mut q = marginal_event_quantiles(data, &FINE_PROBS)?;
    q.dedup();
    Ok(TimeGrid::equal_weights(q)?)
}

pub fn fit(a: &FitArgs) -> CliResult<serde_json::Value> {
    let data = a.data.load()?;
    let grid = a.grid.resolve(&data)?;
    let params = a.forest.params(data.p())?;
    let fitted = fit_nuisance(&data, &a.model, &params)?;
    let method = Method::from(a.model.method);
    let nuisance = fitted.nuisance();
    let fit = match method {
        Method::DrXi => forest::fit_m1(&data, &grid, a.model.cause, &nuisance, a.replicates, &params)?,
        m => forest::fit_m0(&data, &grid, a.model.cause, m, &nuisance, &params)?,
    };
    let mut model = fit.model;
    model.set_nuisance_label(fitted.label.clone());

    let echo = json!({
        "command": "fit",
        "args": to_value(a),
        "n": data.n(),
        "p": data.p(),
        "k_causes": data.k_causes(),
        "censored": data.censored_count(),
        "grid": { "times": grid.times(), "weights": grid.weights() },
        "forest": to_value(&params),
        "replicates": if method == Method::DrXi { a.replicates } else { 1 },
    });

    let mut rows = Vec::new();
    for (r, imp) in fit.imputed.iter().enumerate() {
        let d = &imp.diagnostics;
        for i in 0..data.n() {
            for (j, &t) in grid.times().iter().enumerate() {
                rows.push(vec![
                    (i + 1).to_string(),
                    r.to_string(),
                    fmt_f64(t),
                    fmt_f64(imp.values[(i, j)]),
                    fmt_f64(d.ts1[(i, j)]),
                    fmt_f64(d.ts2[(i, j)]),
                    u8::from(d.g_clamped[i]).to_string(),
                    u8::from(d.y_floored[i]).to_string(),
                ]);
            }
        }
        eprint!(
            "replicate {r}: G floored for {:.1}% of rows, survival floored for {:.1}%",
            100.0 * d.g_clamp_fraction(),
            100.0 * d.y_floor_fraction()
        );
        if method == Method::DrXi {
            eprintln!();
        } else {
            eprintln!(", identity residual {:.2e}", d.max_identity_residual());
        }
    }
    io::write_csv(
        &a.diagnostics,
        &["row", "replicate", "time", "value", "ts1", "ts2", "g_clamped", "y_floored"],
        rows,
    )?;
    ModelFile::new(echo.clone(), io::covariate_names(&data), model).save(&a.out)?;
    Ok(echo)
}

fn parse_cell(path: &Path, row: usize, name: &str, text: &str) -> CliResult<f64> {
    text.parse().map_err(|_| CliError::Parse {
        path: path.to_path_buf(),
        row,
        message: format!("column '{name}': '{text}' is not a number"),
    })
}

fn index_of(path: &Path, header: &[String], name: &str) -> CliResult<usize> {
    header.iter().position(|h| h == name).ok_or_else(|| CliError::schema(path, format!("missing column '{name}'")))
}

/// True incidence per test id for one cause, over `times`.
fn load_truth(path: &Path, cause: u32, times: &[f64]) -> CliResult<HashMap<String, Vec<f64>>> {
    let (header, rows) = io::read_table(path)?;
    let [ci, ki, ti, vi] = ["id", "cause", "time", "cif"].map(|n| index_of(path, &header, n));
    let (ci, ki, ti, vi) = (ci?, ki?, ti?, vi?);
    let mut found: Vec<f64> = Vec::new();
    let mut by_id: HashMap<String, Vec<(f64, f64)>> = HashMap::new();
    for (k, row) in rows.iter().enumerate() {
        let cell = |j: usize| row.get(j).map(String::as_str).unwrap_or("");
        if parse_cell(path, k + 1, "cause", cell(ki))? as u32 != cause {
            continue;
        }
        let t = parse_cell(path, k + 1, "time", cell(ti))?;
        let v = parse_cell(path, k + 1, "cif", cell(vi))?;
        if !found.contains(&t) {
            found.push(t);
        }
        by_id.entry(cell(ci).to_string()).or_default().push((t, v));
    }
    found.sort_by(f64::total_cmp);
    if found != times {
        return Err(Error::Configuration(format!("truth times {found:?} differ from the model grid {times:?}")).into());
    }
    by_id
        .into_iter()
        .map(|(id, mut pairs)| {
            pairs.sort_by(|a, b| a.0.total_cmp(&b.0));
            if pairs.len() != times.len() {
                return Err(CliError::format(path, format!("id {id} has {} values for {} times", pairs.len(), times.len())));
            }
            Ok((id, pairs.into_iter().map(|p| p.1).collect()))
        })
        .collect()
}

pub fn evaluate(a: &EvaluateArgs) -> CliResult<serde_json::Value> {
    let file = ModelFile::load(&a.model)?;
    let model = &file.forest;
    let times = model.grid().times();
    let truth = load_truth(&a.truth, model.cause(), times)?;
    let test = io::read_covariates(&a.test, &file.covariate_names)?;
    let (header, rows) = io::read_table(&a.test)?;
    let id_col = index_of(&a.test, &header, "id")?;

    let raw = forest::predict_rows(model, &test, false);
    let mut sums = vec![0.0; times.len()];
    let mut outside = 0usize;
    for (i, row) in rows.iter().enumerate() {
        let id = row.get(id_col).map(String::as_str).unwrap_or("");
        let psi = truth
            .get(id)
            .ok_or_else(|| CliError::format(&a.truth, format!("no true values for test id {id}")))?;
        for j in 0..times.len() {
            let p = raw[(i, j)];
            outside += usize::from(!(0.0..=1.0).contains(&p));
            let p = if a.raw { p } else { p.clamp(0.0, 1.0) };
            sums[j] += (p - psi[j]).powi(2);
        }
    }
    let n = rows.len();
    let mse: Vec<f64> = sums.iter().map(|s| s / n as f64).collect();
    let out_of_range = outside as f64 / (n * times.len()) as f64;
    io::write_csv(
        &a.out,
        &["method", "cause", "time", "mse", "n_test", "clamped"],
        times.iter().zip(&mse).map(|(&t, &m)| {
            vec![
                model.method().name().to_string(),
                model.cause().to_string(),
                fmt_f64(t),
                fmt_f64(m),
                n.to_string(),
                (!a.raw).to_string(),
            ]
        }),
    )?;
    for (t, m) in times.iter().zip(&mse) {
        eprintln!("t = {t}: MSE {m:.6}");
    }
    Ok(json!({
        "command": "evaluate",
        "args": to_value(a),
        "method": model.method().name(),
        "times": times,
        "mse": mse,
        "n_test": n,
        "out_of_range": out_of_range,
    }))
}

pub fn pdp(a: &PdpArgs) -> CliResult<serde_json::Value> {
    let file = ModelFile::load(&a.model)?;
    let variable = file
        .covariate_names
        .iter()
        .position(|n| n == &a.variable)
        .ok_or_else(|| CliError::Usage(format!("model has no covariate '{}'", a.variable)))?;
    let covariates = io::read_covariates(&a.covariates, &file.covariate_names)?;
    let values = a.values.clone().or_else(|| a.levels.clone()).unwrap_or_default();
    let clamp = !a.raw;
    let model = &file.forest;
    let curves = partial_dependence_curves(model, &covariates, variable, &values, clamp)?;

    let baseline = match &a.baseline {
        Some(path) => {
            let base = ModelFile::load(path)?;
            if base.forest.grid() != model.grid() {
                return Err(Error::Configuration("the baseline model uses a different time grid".into()).into());
            }
            if base.covariate_names != file.covariate_names {
                return Err(Error::Configuration("the baseline model uses different covariates".into()).into());
            }
            Some(partial_dependence_curves(&base.forest, &covariates, variable, &values, clamp)?)
        }
        None => None,
    };

    let mut header = vec!["method", "variable", "value", "time", "estimate"];
    if baseline.is_some() {
        header.extend(["baseline", "difference"]);
    }
    let times = model.grid().times();
    let mut rows = Vec::new();
    for (k, &v) in values.iter().enumerate() {
        for (j, &t) in times.iter().enumerate() {
            let est = curves[(k, j)];
            let mut row = vec![model.method().name().into(), a.variable.clone(), fmt_f64(v), fmt_f64(t), fmt_f64(est)];
            if let Some(b) = &baseline {
                row.push(fmt_f64(b[(k, j)]));
                row.push(fmt_f64(est - b[(k, j)]));
            }
            rows.push(row);
        }
    }
    io::write_csv(&a.out, &header, rows)?;

    if let Some(levels) = &a.levels {
        let table = pdp_table_categorical(model, &covariates, variable, levels, clamp)?;
        write_level_table(&a.table, &a.variable, &table.levels, &table.times, &table.values)?;
    }
    Ok(json!({ "command": "pdp", "args": to_value(a), "times": times }))
}

fn write_level_table(path: &Path, variable: &str, levels: &[f64], times: &[f64], values: &Matrix) -> CliResult<()> {
    let mut header = vec!["time".to_string()];
    header.extend(levels.iter().map(|l| format!("{variable}={l}")));
    let rows = times.iter().enumerate().map(|(j, &t)| {
        let mut row = vec![fmt_f64(t)];
        row.extend(values.row(j).iter().map(|&x| fmt_f64(x)));
        row
    });
    io::write_csv(path, &header, rows)
}

pub fn tune(a: &TuneArgs) -> CliResult<serde_json::Value> {
    let data = a.data.load()?;
    let grid = a.grid.resolve(&data)?;
    let base = a.forest.params(data.p())?;
    let fitted = fit_nuisance(&data, &a.model, &base)?;
    let mtrys: Vec<usize> = a.mtrys.iter().map(|&m| m.clamp(1, data.p())).collect();
    if a.nodesizes.contains(&0) || a.mtrys.contains(&0) {
        return Err(CliError::Usage("nodesizes and mtrys must be positive".into()));
    }
    let result = forest::tune(
        &data,
        &grid,
        a.model.cause,
        Method::from(a.model.method),
        &fitted.nuisance(),
        &a.nodesizes,
        &mtrys,
        &base,
    )?;
    let rows = result.table.iter().map(|c| {
        vec![
            c.nodesize.to_string(),
            c.mtry.to_string(),
            fmt_f64(c.oob.error),
            c.oob.rows_used.to_string(),
            c.oob.rows_skipped.to_string(),
            u8::from(c.nodesize == result.nodesize && c.mtry == result.mtry).to_string(),
        ]
    });
    io::write_csv(&a.out, &["nodesize", "mtry", "oob_error", "rows_used", "rows_skipped", "selected"], rows)?;
    eprintln!("selected nodesize {} and mtry {}", result.nodesize, result.mtry);
    Ok(json!({
        "command": "tune",
        "args": to_value(a),
        "grid": { "times": grid.times(), "weights": grid.weights() },
        "selected": { "nodesize": result.nodesize, "mtry": result.mtry },
    }))
}
