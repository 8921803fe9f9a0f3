//! `bodyshape` subcommands. Exit codes: 0 success, 1 runtime failure,
//! 2 usage error.

use std::ffi::OsString;
use std::fmt::Write as _;
use std::net::SocketAddr;
use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::Instant;

use clap::{Args, Parser, Subcommand, ValueEnum};
use thiserror::Error;

use bodyshape::anthropometry::{
    index_of, measure, MeasurementSpec, ParameterMatrix, ParameterVector, Unit, PARAM_COUNT, SCHEMA,
};
use bodyshape::evaluator::{
    compare_csv, compare_markdown, locality_report, reconstruction_mae, reconstruction_mae_imputed,
    split_indices, LocalityReport, MaeReport, RegionFacets, TEST_FRACTION,
};
use bodyshape::imputer::{benchmark_imputers, ImputeMethod, Imputer, ImputerConfig, MissingPattern, MCAR_SCENARIO};
use bodyshape::mapper::{DeformationPredictor, EditAmount, Mapper};
use bodyshape::mesh::{load_mesh, save_mesh, TriangleMesh};
use bodyshape::selector::{
    components_for_variance, train_global_on, train_model, GlobalModel, MappingModel, TrainOptions,
    TrainingSet, DEFAULT_K,
};
use bodyshape::synth::{
    generate, load_dataset, write_dataset, DependencyTruth, GeneratorConfig, LoadedDataset, TemplateResolution,
    DEFAULT_BODY_COUNT, DEPENDENCIES_FILE, PARAMETERS_FILE, SPEC_FILE,
};

use crate::service::{self, AppState, MeshFormat};

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error(transparent)]
    Core(#[from] bodyshape::Error),
    #[error("{context}: {source}")]
    Io {
        context: String,
        #[source]
        source: std::io::Error,
    },
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => 2,
            _ => 1,
        }
    }
}

type Result<T, E = CliError> = std::result::Result<T, E>;

/// `println!` that tolerates a closed stdout (e.g. piped into `head`).
macro_rules! outln {
    ($($t:tt)*) => {{
        use std::io::Write as _;
        let _ = writeln!(std::io::stdout(), $($t)*);
    }};
}

macro_rules! out {
    ($($t:tt)*) => {{
        use std::io::Write as _;
        let _ = write!(std::io::stdout(), $($t)*);
    }};
}

#[derive(Debug, Parser)]
#[command(name = "bodyshape", version, about = "Reshape template bodies from anthropometric measurements")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a synthetic body dataset with known parameter dependencies.
    GenData(GenDataArgs),
    /// Train the per-facet mapping model.
    Train(TrainArgs),
    /// Train the global PCA baseline.
    TrainGlobal(TrainGlobalArgs),
    /// Build a body from a partial set of measurements.
    Reshape(ReshapeArgs),
    /// Measure the 19 parameters on a mesh.
    Measure(MeasureArgs),
    /// Fill in missing measurements, or benchmark the imputers.
    Impute(ImputeArgs),
    /// Reconstruction error of one or two models on a dataset split.
    Evaluate(EvaluateArgs),
    /// Per-region response to editing one parameter.
    Locality(LocalityArgs),
    /// Serve the HTTP API (and optionally the web client).
    Serve(ServeArgs),
}

#[derive(Debug, Args)]
pub struct GenDataArgs {
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = DEFAULT_BODY_COUNT)]
    pub n: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Use the ~25k facet template instead of the default 2,496.
    #[arg(long)]
    pub fine: bool,
}

#[derive(Debug, Args)]
pub struct SplitArgs {
    /// Fraction of bodies held out from training (0 trains on all).
    #[arg(long, default_value_t = TEST_FRACTION)]
    pub holdout: f64,
    /// Seeds the train/test split; defaults to the model's training seed.
    #[arg(long)]
    pub seed: Option<u64>,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long, default_value_t = DEFAULT_K)]
    pub k: usize,
    #[arg(long)]
    pub out: PathBuf,
    #[command(flatten)]
    pub split: SplitArgs,
}

#[derive(Debug, Args)]
pub struct TrainGlobalArgs {
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    /// Number of principal components; overrides --variance.
    #[arg(long)]
    pub components: Option<usize>,
    /// Keep the fewest components explaining this share of variance.
    #[arg(long, default_value_t = 0.95)]
    pub variance: f64,
    #[command(flatten)]
    pub split: SplitArgs,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum MethodArg {
    Mice,
    Mean,
    Knn,
}

impl From<MethodArg> for ImputeMethod {
    fn from(m: MethodArg) -> Self {
        match m {
            MethodArg::Mice => ImputeMethod::Mice,
            MethodArg::Mean => ImputeMethod::Mean,
            MethodArg::Knn => ImputeMethod::Knn,
        }
    }
}

#[derive(Debug, Args)]
pub struct ImputeOptions {
    #[arg(long, value_enum, default_value = "mice")]
    pub method: MethodArg,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

impl ImputeOptions {
    fn config(&self) -> ImputerConfig {
        ImputerConfig {
            method: self.method.into(),
            seed: self.seed,
            ..ImputerConfig::default()
        }
    }
}

#[derive(Debug, Args)]
pub struct ReshapeArgs {
    #[arg(long)]
    pub model: PathBuf,
    /// Dataset whose spec and parameters replace the ones stored in the model.
    #[arg(long)]
    pub data: Option<PathBuf>,
    /// A measurement as key=value (repeatable); see `measure` for the keys.
    #[arg(long = "set", value_name = "KEY=VALUE", value_parser = parse_assignment)]
    pub sets: Vec<(String, f64)>,
    /// Output mesh: `.obj`, or `.json` for the full response document.
    #[arg(long)]
    pub out: PathBuf,
    #[command(flatten)]
    pub impute: ImputeOptions,
}

#[derive(Debug, Args)]
pub struct MeasureArgs {
    #[arg(long)]
    pub mesh: PathBuf,
    #[arg(long, conflicts_with_all = ["model", "data"])]
    pub spec: Option<PathBuf>,
    #[arg(long, conflicts_with = "data")]
    pub model: Option<PathBuf>,
    #[arg(long)]
    pub data: Option<PathBuf>,
    #[arg(long)]
    pub json: bool,
}

#[derive(Debug, Args)]
pub struct ImputeArgs {
    #[arg(long = "set", value_name = "KEY=VALUE", value_parser = parse_assignment)]
    pub sets: Vec<(String, f64)>,
    #[arg(long, conflicts_with = "data")]
    pub model: Option<PathBuf>,
    #[arg(long)]
    pub data: Option<PathBuf>,
    #[command(flatten)]
    pub impute: ImputeOptions,
    /// Compare all methods on a held-out split instead of imputing.
    #[arg(long)]
    pub benchmark: bool,
    /// Missing-completely-at-random rate for --benchmark.
    #[arg(long, default_value_t = 0.3)]
    pub rate: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum SplitName {
    Test,
    Train,
    All,
}

#[derive(Debug, Args)]
pub struct EvaluateArgs {
    #[arg(long)]
    pub model: PathBuf,
    /// Global baseline to compare against.
    #[arg(long)]
    pub global: Option<PathBuf>,
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long, value_enum, default_value = "test")]
    pub split: SplitName,
    #[command(flatten)]
    pub holdout: SplitArgs,
    /// Comma-separated ids given as input; the rest is imputed first.
    #[arg(long, value_delimiter = ',')]
    pub present: Vec<u8>,
    #[arg(long)]
    pub csv: Option<PathBuf>,
    #[arg(long)]
    pub markdown: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct LocalityArgs {
    #[arg(long)]
    pub model: PathBuf,
    #[arg(long)]
    pub global: Option<PathBuf>,
    /// Generated dataset with planted region dependencies.
    #[arg(long)]
    pub data: PathBuf,
    /// Parameter key or 1-based id.
    #[arg(long)]
    pub param: String,
    /// Absolute change in the parameter's unit.
    #[arg(long, conflicts_with = "std", required_unless_present = "std")]
    pub delta: Option<f64>,
    /// Change as a multiple of the training standard deviation.
    #[arg(long)]
    pub std: Option<f64>,
    #[arg(long)]
    pub csv: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct ServeArgs {
    #[arg(long)]
    pub model: PathBuf,
    #[arg(long)]
    pub data: Option<PathBuf>,
    #[arg(long, env = service::BIND_ENV, default_value = service::DEFAULT_BIND)]
    pub bind: SocketAddr,
    /// Directory served at / (the web client build).
    #[arg(long = "static")]
    pub static_dir: Option<PathBuf>,
}

fn parse_assignment(s: &str) -> Result<(String, f64), String> {
    let (key, value) = s.split_once('=').ok_or_else(|| format!("expected KEY=VALUE, got {s:?}"))?;
    let value: f64 = value
        .trim()
        .parse()
        .map_err(|_| format!("value for {key:?} is not a number: {value:?}"))?;
    Ok((key.trim().to_string(), value))
}

/// Parses arguments, runs the command and returns the process exit code.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return e.exit_code();
        }
    };
    let _ = tracing_subscriber::fmt()
        .with_env_filter(
            tracing_subscriber::EnvFilter::try_from_default_env()
                .unwrap_or_else(|_| tracing_subscriber::EnvFilter::new("info")),
        )
        .with_writer(std::io::stderr)
        .try_init();
    match run(cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

pub fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::GenData(a) => gen_data(&a),
        Command::Train(a) => train(&a),
        Command::TrainGlobal(a) => train_global(&a),
        Command::Reshape(a) => reshape(&a),
        Command::Measure(a) => measure_mesh(&a),
        Command::Impute(a) => impute(&a),
        Command::Evaluate(a) => evaluate(&a),
        Command::Locality(a) => locality(&a),
        Command::Serve(a) => serve(a),
    }
}

fn write_file(path: &Path, contents: impl AsRef<[u8]>) -> Result<()> {
    std::fs::write(path, contents).map_err(|source| CliError::Io {
        context: format!("writing {}", path.display()),
        source,
    })
}

fn gen_data(a: &GenDataArgs) -> Result<()> {
    let config = GeneratorConfig {
        n: a.n,
        seed: a.seed,
        resolution: if a.fine {
            TemplateResolution::fine()
        } else {
            TemplateResolution::default()
        },
        ..GeneratorConfig::default()
    };
    let start = Instant::now();
    let data = generate(&config)?;
    write_dataset(&a.out, &data, &config)?;
    let mesh = data.generator.reference_mesh();
    outln!(
        "wrote {} bodies ({} vertices, {} facets) to {} in {:.1} s",
        data.meshes.len(),
        mesh.vertex_count(),
        mesh.face_count(),
        a.out.display(),
        start.elapsed().as_secs_f64()
    );
    Ok(())
}

/// Train/test indices for a dataset of `n` bodies.
fn split(n: usize, holdout: f64, seed: u64) -> Result<(Vec<usize>, Vec<usize>)> {
    if holdout == 0.0 {
        return Ok(((0..n).collect(), Vec::new()));
    }
    if !(0.0..1.0).contains(&holdout) {
        return Err(CliError::Usage(format!("--holdout must be in [0, 1), got {holdout}")));
    }
    Ok(split_indices(n, holdout, seed)?)
}

fn pick(meshes: &[TriangleMesh], idx: &[usize]) -> Vec<TriangleMesh> {
    idx.iter().map(|&i| meshes[i].clone()).collect()
}

fn training_meshes(data: &Path, split_args: &SplitArgs) -> Result<(LoadedDataset, Vec<TriangleMesh>, u64)> {
    let ds = load_dataset(data)?;
    let seed = split_args.seed.unwrap_or(0);
    let (train, _) = split(ds.meshes.len(), split_args.holdout, seed)?;
    let meshes = pick(&ds.meshes, &train);
    Ok((ds, meshes, seed))
}

fn train(a: &TrainArgs) -> Result<()> {
    let (ds, meshes, seed) = training_meshes(&a.data, &a.split)?;
    let start = Instant::now();
    let model = train_model(&meshes, &ds.spec, a.k, TrainOptions { seed }).map_err(usage_on_config)?;
    model.save(&a.out)?;
    outln!(
        "trained k={} on {} of {} bodies ({} facets) in {:.1} s -> {}",
        model.k(),
        meshes.len(),
        ds.meshes.len(),
        model.facets().len(),
        start.elapsed().as_secs_f64(),
        a.out.display()
    );
    outln!("selection counts:");
    let counts = model.selection_counts();
    let faces = model.facets().len().max(1) as f64;
    for (d, c) in SCHEMA.iter().zip(counts) {
        outln!(
            "  {:>2} {:<30} {:>6} ({:5.1}%)",
            d.id,
            d.key,
            c,
            100.0 * c as f64 / faces
        );
    }
    Ok(())
}

/// Invalid user-supplied settings are usage errors, not runtime failures.
fn usage_on_config(e: bodyshape::Error) -> CliError {
    match e {
        bodyshape::Error::InvalidConfig(msg) | bodyshape::Error::InvalidParameter(msg) => CliError::Usage(msg),
        other => CliError::Core(other),
    }
}

fn train_global(a: &TrainGlobalArgs) -> Result<()> {
    let (ds, meshes, _) = training_meshes(&a.data, &a.split)?;
    let start = Instant::now();
    let set = TrainingSet::build(&meshes, &ds.spec)?;
    let d = match a.components {
        Some(d) => d,
        None => components_for_variance(&set, a.variance).map_err(usage_on_config)?,
    };
    let model = train_global_on(&set, d).map_err(usage_on_config)?;
    model.save(&a.out)?;
    let explained: f64 = model.explained_variance().iter().sum();
    outln!(
        "trained global baseline d={} ({:.1}% variance) on {} bodies in {:.1} s -> {}",
        model.components(),
        100.0 * explained,
        meshes.len(),
        start.elapsed().as_secs_f64(),
        a.out.display()
    );
    Ok(())
}

/// Parameters of a dataset directory: the CSV when present, else measured.
fn dataset_parameters(dir: &Path) -> Result<ParameterMatrix> {
    let csv = dir.join(PARAMETERS_FILE);
    if csv.exists() {
        let text = std::fs::read_to_string(&csv).map_err(|source| CliError::Io {
            context: format!("reading {}", csv.display()),
            source,
        })?;
        return Ok(ParameterMatrix::from_csv(&text)?);
    }
    let ds = load_dataset(dir)?;
    Ok(bodyshape::anthropometry::extract_dataset(&ds.meshes, &ds.spec)?)
}

/// Mapper for a stored model plus the rows to impute against.
fn open_mapper(model: &Path, data: Option<&Path>) -> Result<(Mapper, ParameterMatrix)> {
    let model = MappingModel::load(model)?;
    match data {
        Some(dir) => {
            let spec = MeasurementSpec::load(dir.join(SPEC_FILE))?;
            let rows = dataset_parameters(dir)?;
            Ok((Mapper::new(model, spec)?, rows))
        }
        None => {
            let mapper = Mapper::from_model(model)
                .map_err(|e| CliError::Usage(format!("{e}; pass --data to supply a dataset")))?;
            let rows = mapper
                .training_parameters()
                .cloned()
                .ok_or_else(|| CliError::Usage("model carries no training parameters; pass --data".into()))?;
            Ok((mapper, rows))
        }
    }
}

fn partial_from_sets(sets: &[(String, f64)]) -> Result<ParameterVector> {
    let p = ParameterVector::from_named(sets.iter().map(|(k, v)| (k.as_str(), *v))).map_err(usage_on_config)?;
    p.validate().map_err(usage_on_config)?;
    Ok(p)
}

fn parameter_table(values: &ParameterVector, imputed: &[bool; PARAM_COUNT], achieved: Option<&ParameterVector>) -> String {
    let mut out = String::new();
    for (j, d) in SCHEMA.iter().enumerate() {
        let _ = write!(
            out,
            "{:<30} {:>10.2} {:<2} {:<7}",
            d.key,
            values.values[j],
            match d.unit {
                Unit::Kg => "kg",
                Unit::Mm => "mm",
            },
            if imputed[j] { "imputed" } else { "given" }
        );
        if let Some(a) = achieved {
            let _ = write!(out, " achieved {:>10.2}", a.values[j]);
        }
        out.push('\n');
    }
    out
}

fn reshape(a: &ReshapeArgs) -> Result<()> {
    let partial = partial_from_sets(&a.sets)?;
    if partial.present_count() == 0 {
        return Err(CliError::Usage("at least one --set KEY=VALUE is required".into()));
    }
    let (mapper, rows) = open_mapper(&a.model, a.data.as_deref())?;
    let config = a.impute.config();
    let imputer = Imputer::new(&rows, &config)?;
    let out = mapper.reshape_with(&partial, &imputer)?;
    let is_json = a.out.extension().is_some_and(|e| e.eq_ignore_ascii_case("json"));
    if is_json {
        let body = service::render_reshape(mapper.model().metadata(), &out, MeshFormat::JsonMesh, config.seed)?;
        write_file(&a.out, body)?;
    } else {
        save_mesh(&out.mesh, &a.out)?;
    }
    out!("{}", parameter_table(&out.parameters, &out.imputed, Some(&out.achieved)));
    outln!("wrote {}", a.out.display());
    Ok(())
}

fn measure_mesh(a: &MeasureArgs) -> Result<()> {
    let spec = match (&a.spec, &a.model, &a.data) {
        (Some(path), _, _) => MeasurementSpec::load(path)?,
        (_, Some(model), _) => MappingModel::load(model)?
            .context()
            .map(|c| c.spec.clone())
            .ok_or_else(|| CliError::Usage("model carries no measurement spec; use --spec".into()))?,
        (_, _, Some(dir)) => MeasurementSpec::load(dir.join(SPEC_FILE))?,
        _ => return Err(CliError::Usage("one of --spec, --model or --data is required".into())),
    };
    let mesh = load_mesh(&a.mesh)?;
    let p = measure(&mesh, &spec)?;
    if a.json {
        let map: serde_json::Map<String, serde_json::Value> = SCHEMA
            .iter()
            .zip(p.values)
            .map(|(d, v)| (d.key.to_string(), serde_json::Value::from(v)))
            .collect();
        outln!("{}", serde_json::Value::Object(map));
    } else {
        out!("{}", parameter_table(&p, &[false; PARAM_COUNT], None));
    }
    Ok(())
}

fn impute(a: &ImputeArgs) -> Result<()> {
    let rows = match (&a.model, &a.data) {
        (Some(model), _) => MappingModel::load(model)?
            .context()
            .map(|c| c.parameters.clone())
            .ok_or_else(|| CliError::Usage("model carries no training parameters; use --data".into()))?,
        (_, Some(dir)) => dataset_parameters(dir)?,
        _ => return Err(CliError::Usage("one of --model or --data is required".into())),
    };
    if a.benchmark {
        let report = benchmark_imputers(&rows, a.rate, &MissingPattern::defaults(), a.impute.seed)
            .map_err(usage_on_config)?;
        outln!(
            "imputation RMSE, {} training rows, {} test rows, seed {}\n",
            report.train_rows, report.test_rows, a.impute.seed
        );
        out!("{}", report.to_markdown());
        let stats = rows.stats();
        for m in ImputeMethod::ALL {
            if let Some(s) = report.score(MCAR_SCENARIO, m) {
                outln!("{} pooled standardized RMSE ({MCAR_SCENARIO}): {:.4}", m.name(), s.pooled_standardized(&stats));
            }
        }
        return Ok(());
    }
    let partial = partial_from_sets(&a.sets)?;
    if partial.present_count() == 0 {
        return Err(CliError::Usage("at least one --set KEY=VALUE is required".into()));
    }
    let imputer = Imputer::new(&rows, &a.impute.config())?;
    let filled = imputer.impute(&partial)?;
    out!("{}", parameter_table(&filled.values, &filled.imputed, None));
    Ok(())
}

fn evaluate(a: &EvaluateArgs) -> Result<()> {
    let model = MappingModel::load(&a.model)?;
    let ds = load_dataset(&a.data)?;
    let seed = a.holdout.seed.unwrap_or(model.metadata().seed);
    let (train_idx, test_idx) = split(ds.meshes.len(), a.holdout.holdout, seed)?;
    let (idx, split_name) = match a.split {
        SplitName::Test => (test_idx, "test"),
        SplitName::Train => (train_idx.clone(), "train"),
        SplitName::All => ((0..ds.meshes.len()).collect(), "all"),
    };
    if idx.is_empty() {
        return Err(CliError::Usage(format!("the {split_name} split is empty; check --holdout")));
    }
    let meshes = pick(&ds.meshes, &idx);
    let split_id = format!("{split_name} split, seed {seed}");
    let local_id = format!("local k={}", model.k());
    let train_rows = match &ds.parameters {
        Some(p) => p.select_rows(&train_idx),
        None => bodyshape::anthropometry::extract_dataset(&pick(&ds.meshes, &train_idx), &ds.spec)?,
    };
    let imputer = Imputer::new(&train_rows, &ImputerConfig::default())?;

    let local = Mapper::new(model, ds.spec.clone())?;
    let mut reports = vec![report(&local, &meshes, &a.present, &imputer, &local_id, &split_id)?];
    if let Some(path) = &a.global {
        let global = GlobalModel::load(path)?;
        let id = format!("global d={}", global.components());
        let mapper = Mapper::new(global, ds.spec.clone())?;
        reports.push(report(&mapper, &meshes, &a.present, &imputer, &id, &split_id)?);
    }
    let refs: Vec<&MaeReport> = reports.iter().collect();
    let markdown = compare_markdown(&refs);
    out!("{markdown}");
    if let Some(path) = &a.markdown {
        write_file(path, &markdown)?;
    }
    if let Some(path) = &a.csv {
        write_file(path, compare_csv(&refs))?;
    }
    Ok(())
}

fn report<M: DeformationPredictor>(
    mapper: &Mapper<M>,
    meshes: &[TriangleMesh],
    present: &[u8],
    imputer: &Imputer<'_>,
    model_id: &str,
    split_id: &str,
) -> Result<MaeReport> {
    if present.is_empty() {
        Ok(reconstruction_mae(mapper, meshes, model_id, split_id)?)
    } else {
        reconstruction_mae_imputed(mapper, meshes, present, imputer, model_id, split_id).map_err(usage_on_config)
    }
}

fn parse_param_id(s: &str) -> Result<u8> {
    if let Ok(id) = s.parse::<u8>() {
        if (1..=PARAM_COUNT as u8).contains(&id) {
            return Ok(id);
        }
    } else if let Some(j) = index_of(s) {
        return Ok(j as u8 + 1);
    }
    let keys: Vec<&str> = SCHEMA.iter().map(|d| d.key).collect();
    Err(CliError::Usage(format!(
        "unknown parameter {s:?}; use an id 1-19 or one of: {}",
        keys.join(", ")
    )))
}

fn locality(a: &LocalityArgs) -> Result<()> {
    let id = parse_param_id(&a.param)?;
    let amount = match (a.delta, a.std) {
        (Some(d), _) => EditAmount::Absolute(d),
        (_, Some(s)) => EditAmount::StdMultiple(s),
        _ => return Err(CliError::Usage("one of --delta or --std is required".into())),
    };
    let path = a.data.join(DEPENDENCIES_FILE);
    let text = std::fs::read_to_string(&path).map_err(|source| CliError::Io {
        context: format!("reading {} (locality needs a generated dataset)", path.display()),
        source,
    })?;
    let truth: DependencyTruth =
        serde_json::from_str(&text).map_err(|e| CliError::Core(bodyshape::Error::from(e)))?;
    let regions = RegionFacets::from_truth(&truth);

    let model = MappingModel::load(&a.model)?;
    let mut reports: Vec<(String, LocalityReport)> = vec![(
        format!("local k={}", model.k()),
        locality_report(&model, &regions, id, amount).map_err(usage_on_config)?,
    )];
    if let Some(g) = &a.global {
        let global = GlobalModel::load(g)?;
        reports.push((
            format!("global d={}", global.components()),
            locality_report(&global, &regions, id, amount).map_err(usage_on_config)?,
        ));
    }
    let mut csv = String::new();
    for (name, r) in &reports {
        outln!("## {name}\n");
        out!("{}", r.to_markdown());
        outln!();
        csv.push_str(&r.to_csv().lines().map(|l| format!("{name},{l}\n")).collect::<String>());
    }
    if let Some(p) = &a.csv {
        write_file(p, csv)?;
    }
    Ok(())
}

fn serve(a: ServeArgs) -> Result<()> {
    let (mapper, rows) = open_mapper(&a.model, a.data.as_deref())?;
    let state = Arc::new(AppState::new(mapper, Some(rows))?);
    let runtime = tokio::runtime::Runtime::new().map_err(|source| CliError::Io {
        context: "starting the async runtime".into(),
        source,
    })?;
    runtime
        .block_on(service::serve(state, a.bind, a.static_dir))
        .map_err(|source| CliError::Io {
            context: format!("serving on {}", a.bind),
            source,
        })
}
