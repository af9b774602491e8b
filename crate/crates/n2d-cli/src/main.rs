//! Command-line driver for the n2d pipeline.
//!
//! Subcommands compose the same library stages the pipeline runs end to
//! end: `run` (full pipeline), `train-ae`, `embed`, `manifold`, `cluster`,
//! `eval`, `ablation`, and `viz`. Exit codes: 0 success, 2 configuration
//! error, 3 stage failure.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use n2d::ae;
use n2d::cluster::{gmm_fit, kmeans_fit, GmmConfig, KmeansConfig};
use n2d::data::PreprocessSpec;
use n2d::io::export::{
    load_embedding, read_embedding_csv, save_embedding, write_assignment_csv, write_embedding_csv,
};
use n2d::manifold::{manifold_fit, Embedding, ManifoldKind};
use n2d::metrics::{accuracy, nmi};
use n2d::pipeline::{
    run_ablation, run_pipeline, AeParams, AeStage, ClustererKind, ClustererSpec, DatasetSpec,
    ManifoldStage, PipelineConfig,
};
use n2d::N2dError;

#[derive(Parser)]
#[command(name = "n2d", about = "autoencoder + manifold re-embedding + shallow clustering")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the full pipeline and write a report.
    Run(Box<RunArgs>),
    /// Train the autoencoder and save a checkpoint.
    TrainAe(TrainAeArgs),
    /// Encode a dataset with a trained checkpoint.
    Embed(EmbedArgs),
    /// Re-embed an embedding with a manifold learner.
    Manifold(ManifoldArgs),
    /// Cluster an embedding.
    Cluster(ClusterArgs),
    /// Evaluate a clustering against dataset labels.
    Eval(EvalArgs),
    /// Run the eight-configuration component ablation.
    Ablation(AblationArgs),
    /// Export a 2-D embedding as CSV + SVG scatter.
    Viz(VizArgs),
}

#[derive(Args, Clone)]
struct DatasetArgs {
    /// Dataset selector.
    #[arg(long)]
    dataset: DatasetKind,
    /// Directory holding the bundled datasets (pendigits/usps).
    #[arg(long, default_value = "data")]
    data_dir: PathBuf,
    /// CSV file path (dataset=csv).
    #[arg(long)]
    csv: Option<PathBuf>,
    /// Label column name (csv); headerless files use col_<i>.
    #[arg(long)]
    label_column: Option<String>,
    /// IDX image file (dataset=idx).
    #[arg(long)]
    images: Option<PathBuf>,
    /// IDX label file (dataset=idx).
    #[arg(long)]
    labels: Option<PathBuf>,
    /// Second IDX image file appended row-wise (train+test concatenation).
    #[arg(long)]
    images2: Option<PathBuf>,
    /// Second IDX label file.
    #[arg(long)]
    labels2: Option<PathBuf>,
    /// Declared cluster count when labels are absent.
    #[arg(long)]
    c_hint: Option<usize>,
    /// Preprocessing override.
    #[arg(long)]
    preprocess: Option<PreprocessKind>,
}

#[derive(Clone, Copy, ValueEnum)]
enum DatasetKind {
    Pendigits,
    Usps,
    Csv,
    Idx,
}

#[derive(Clone, Copy, ValueEnum)]
enum PreprocessKind {
    ImageUnitScale,
    PerFeatureMinmax,
    None,
}

impl From<PreprocessKind> for PreprocessSpec {
    fn from(v: PreprocessKind) -> Self {
        match v {
            PreprocessKind::ImageUnitScale => PreprocessSpec::ImageUnitScale,
            PreprocessKind::PerFeatureMinmax => PreprocessSpec::PerFeatureMinmax,
            PreprocessKind::None => PreprocessSpec::None,
        }
    }
}

impl DatasetArgs {
    fn to_spec(&self) -> Result<DatasetSpec, N2dError> {
        Ok(match self.dataset {
            DatasetKind::Pendigits => DatasetSpec::Pendigits {
                dir: self.data_dir.join("pendigits"),
            },
            DatasetKind::Usps => DatasetSpec::Usps {
                dir: self.data_dir.join("usps"),
            },
            DatasetKind::Csv => DatasetSpec::Csv {
                path: self
                    .csv
                    .clone()
                    .ok_or_else(|| N2dError::Config("--csv is required with --dataset csv".into()))?,
                label_column: self.label_column.clone(),
                c_hint: self.c_hint,
            },
            DatasetKind::Idx => DatasetSpec::Idx {
                images: self.images.clone().ok_or_else(|| {
                    N2dError::Config("--images is required with --dataset idx".into())
                })?,
                labels: self.labels.clone(),
                images2: self.images2.clone(),
                labels2: self.labels2.clone(),
                c_hint: self.c_hint,
            },
        })
    }

    fn load_preprocessed(&self) -> anyhow::Result<n2d::data::Dataset> {
        let spec = self.to_spec()?;
        let ds = spec.load()?;
        let rule = self
            .preprocess
            .map(Into::into)
            .unwrap_or_else(|| spec.default_preprocess());
        Ok(n2d::data::preprocess(&ds, rule)?)
    }
}

#[derive(Args)]
struct RunArgs {
    /// JSON or TOML pipeline config file; flags below override it.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    dataset: Option<DatasetKind>,
    #[arg(long, default_value = "data")]
    data_dir: PathBuf,
    #[arg(long)]
    csv: Option<PathBuf>,
    #[arg(long)]
    label_column: Option<String>,
    #[arg(long)]
    images: Option<PathBuf>,
    #[arg(long)]
    labels: Option<PathBuf>,
    #[arg(long)]
    images2: Option<PathBuf>,
    #[arg(long)]
    labels2: Option<PathBuf>,
    #[arg(long)]
    c_hint: Option<usize>,
    #[arg(long)]
    preprocess: Option<PreprocessKind>,
    /// Manifold learner.
    #[arg(long)]
    manifold: Option<ManifoldKindArg>,
    /// Skip the autoencoder (raw-data ablation).
    #[arg(long)]
    skip_ae: bool,
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    n_neighbors: Option<usize>,
    #[arg(long)]
    min_dist: Option<f64>,
    #[arg(long)]
    n_components: Option<usize>,
    /// Clusterer.
    #[arg(long)]
    clusterer: Option<ClustererArg>,
    #[arg(long)]
    n_init: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    /// Single-threaded, bit-reproducible layout mode.
    #[arg(long)]
    deterministic: bool,
    /// Output directory for report.json and artifacts.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Clone, Copy, ValueEnum)]
enum ManifoldKindArg {
    Umap,
    Tsne,
    Isomap,
    None,
}

impl From<ManifoldKindArg> for ManifoldKind {
    fn from(v: ManifoldKindArg) -> Self {
        match v {
            ManifoldKindArg::Umap => ManifoldKind::Umap,
            ManifoldKindArg::Tsne => ManifoldKind::Tsne,
            ManifoldKindArg::Isomap => ManifoldKind::Isomap,
            ManifoldKindArg::None => ManifoldKind::None,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum ClustererArg {
    Gmm,
    Kmeans,
}

#[derive(Args)]
struct TrainAeArgs {
    #[command(flatten)]
    dataset: DatasetArgs,
    #[arg(long, default_value_t = 1000)]
    epochs: usize,
    #[arg(long, default_value_t = 256)]
    batch_size: usize,
    #[arg(long, default_value_t = 1e-3)]
    learning_rate: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Checkpoint output path.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct EmbedArgs {
    #[command(flatten)]
    dataset: DatasetArgs,
    /// Trained checkpoint.
    #[arg(long)]
    checkpoint: PathBuf,
    /// Output embedding (.n2dc container or .csv by extension).
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct ManifoldArgs {
    /// Input embedding (.n2dc or .csv).
    #[arg(long)]
    input: PathBuf,
    #[arg(long)]
    manifold: ManifoldKindArg,
    #[arg(long)]
    n_components: Option<usize>,
    #[arg(long)]
    n_neighbors: Option<usize>,
    #[arg(long)]
    min_dist: Option<f64>,
    #[arg(long)]
    perplexity: Option<f64>,
    /// Cluster count fallback for the target dimension when the input has
    /// no label column.
    #[arg(long)]
    c: Option<usize>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    deterministic: bool,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct ClusterArgs {
    /// Input embedding (.n2dc or .csv).
    #[arg(long)]
    input: PathBuf,
    #[arg(long, default_value = "gmm")]
    clusterer: ClustererArg,
    /// Cluster count.
    #[arg(long)]
    c: usize,
    #[arg(long, default_value_t = 10)]
    n_init: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Assignment CSV output.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct EvalArgs {
    #[command(flatten)]
    dataset: DatasetArgs,
    /// Assignment CSV produced by `cluster` (index,hard_label,...).
    #[arg(long)]
    assignment: PathBuf,
}

#[derive(Args)]
struct AblationArgs {
    #[command(flatten)]
    dataset: DatasetArgs,
    /// Comma-separated seeds.
    #[arg(long, default_value = "0,1,2", value_delimiter = ',')]
    seeds: Vec<u64>,
    #[arg(long, default_value_t = 1000)]
    epochs: usize,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct VizArgs {
    /// Input 2-D embedding (.n2dc or .csv with labels).
    #[arg(long)]
    input: PathBuf,
    #[arg(long, default_value_t = 5000)]
    max_points: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Output directory for scatter.csv and scatter.svg.
    #[arg(long)]
    out: PathBuf,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match dispatch(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(if is_config_error(&e) { 2 } else { 3 })
        }
    }
}

/// Configuration mistakes exit 2, runtime stage failures exit 3. Stage
/// wrappers are unwrapped so a nested config error still counts.
fn is_config_error(e: &anyhow::Error) -> bool {
    fn walk(err: &N2dError) -> bool {
        match err {
            N2dError::Config(_) | N2dError::Precondition(_) => true,
            N2dError::Stage { source, .. } => walk(source),
            _ => false,
        }
    }
    e.downcast_ref::<N2dError>().map_or(false, walk)
}

fn dispatch(cli: Cli) -> anyhow::Result<()> {
    match cli.command {
        Command::Run(args) => run_cmd(*args),
        Command::TrainAe(args) => train_ae_cmd(args),
        Command::Embed(args) => embed_cmd(args),
        Command::Manifold(args) => manifold_cmd(args),
        Command::Cluster(args) => cluster_cmd(args),
        Command::Eval(args) => eval_cmd(args),
        Command::Ablation(args) => ablation_cmd(args),
        Command::Viz(args) => viz_cmd(args),
    }
}

fn load_config_file(path: &Path) -> anyhow::Result<PipelineConfig> {
    let text = std::fs::read_to_string(path)?;
    let cfg = if path.extension().is_some_and(|e| e == "toml") {
        toml::from_str(&text)?
    } else {
        serde_json::from_str(&text)?
    };
    Ok(cfg)
}

fn run_cmd(args: RunArgs) -> anyhow::Result<()> {
    let mut cfg = match &args.config {
        Some(path) => load_config_file(path)?,
        None => {
            let kind = args.dataset.ok_or_else(|| {
                N2dError::Config("either --config or --dataset is required".into())
            })?;
            let d = DatasetArgs {
                dataset: kind,
                data_dir: args.data_dir.clone(),
                csv: args.csv.clone(),
                label_column: args.label_column.clone(),
                images: args.images.clone(),
                labels: args.labels.clone(),
                images2: args.images2.clone(),
                labels2: args.labels2.clone(),
                c_hint: args.c_hint,
                preprocess: args.preprocess,
            };
            PipelineConfig {
                dataset: d.to_spec()?,
                preprocess: args.preprocess.map(Into::into),
                ae: AeStage::Train(AeParams::default()),
                manifold: ManifoldStage::default(),
                clusterer: ClustererSpec::default(),
                seed: 0,
                deterministic: false,
                out_dir: None,
            }
        }
    };

    // flag overrides
    if args.skip_ae {
        cfg.ae = AeStage::Skip;
    } else if let Some(epochs) = args.epochs {
        let mut params = match &cfg.ae {
            AeStage::Train(p) => p.clone(),
            AeStage::Skip => AeParams::default(),
        };
        params.epochs = epochs;
        cfg.ae = AeStage::Train(params);
    }
    if let Some(kind) = args.manifold {
        cfg.manifold.kind = kind.into();
    }
    if args.n_neighbors.is_some() {
        cfg.manifold.n_neighbors = args.n_neighbors;
    }
    if args.min_dist.is_some() {
        cfg.manifold.min_dist = args.min_dist;
    }
    if args.n_components.is_some() {
        cfg.manifold.n_components = args.n_components;
    }
    if let Some(ck) = args.clusterer {
        cfg.clusterer.kind = match ck {
            ClustererArg::Gmm => ClustererKind::Gmm,
            ClustererArg::Kmeans => ClustererKind::Kmeans,
        };
    }
    if let Some(n_init) = args.n_init {
        cfg.clusterer.n_init = n_init;
    }
    if let Some(seed) = args.seed {
        cfg.seed = seed;
    }
    if args.deterministic {
        cfg.deterministic = true;
    }
    if args.out.is_some() {
        cfg.out_dir = args.out;
    }

    let report = run_pipeline(&cfg)?;
    println!("{}", serde_json::to_string_pretty(&report)?);
    Ok(())
}

fn train_ae_cmd(args: TrainAeArgs) -> anyhow::Result<()> {
    let ds = args.dataset.load_preprocessed()?;
    let c = ds
        .cluster_count()
        .ok_or_else(|| N2dError::Config("cluster count unresolvable".into()))?;
    let params = AeParams {
        epochs: args.epochs,
        batch_size: args.batch_size,
        learning_rate: args.learning_rate,
        ..AeParams::default()
    };
    let ae_cfg = params.to_config(ds.n_features(), c, args.seed);
    let model = ae::init(&ae_cfg)?;
    let (model, history) = ae::train(model, &ds, &ae_cfg)?;
    ae::save_checkpoint(&args.out, &model)?;
    println!(
        "trained {} epochs; final loss {:.6}; checkpoint {}",
        history.len(),
        history.last().unwrap(),
        args.out.display()
    );
    Ok(())
}

fn load_any_embedding(path: &Path) -> anyhow::Result<(Embedding, Option<Vec<usize>>)> {
    if path.extension().is_some_and(|e| e == "csv") {
        let (coords, labels) = read_embedding_csv(path)?;
        Ok((Embedding::raw(coords)?, labels))
    } else {
        Ok((load_embedding(path)?, None))
    }
}

fn save_any_embedding(
    path: &Path,
    emb: &Embedding,
    labels: Option<&[usize]>,
) -> anyhow::Result<()> {
    if path.extension().is_some_and(|e| e == "csv") {
        write_embedding_csv(path, emb, labels)?;
    } else {
        save_embedding(path, emb)?;
    }
    Ok(())
}

fn embed_cmd(args: EmbedArgs) -> anyhow::Result<()> {
    let ds = args.dataset.load_preprocessed()?;
    let model = ae::load_checkpoint(&args.checkpoint)?;
    let emb = model.encode(&ds)?;
    save_any_embedding(&args.out, &emb, ds.labels.as_deref())?;
    println!(
        "embedded {} samples to {} dims -> {}",
        emb.n_samples(),
        emb.dim(),
        args.out.display()
    );
    Ok(())
}

fn manifold_cmd(args: ManifoldArgs) -> anyhow::Result<()> {
    let (input, labels) = load_any_embedding(&args.input)?;
    let c = args
        .n_components
        .or(args.c)
        .or_else(|| {
            labels.as_ref().map(|l| {
                let mut d = l.clone();
                d.sort_unstable();
                d.dedup();
                d.len()
            })
        })
        .ok_or_else(|| N2dError::Config("need --n-components, --c, or a labeled input".into()))?;
    let stage = ManifoldStage {
        kind: args.manifold.into(),
        n_neighbors: args.n_neighbors,
        min_dist: args.min_dist,
        n_components: Some(c),
        perplexity: args.perplexity,
        ..ManifoldStage::default()
    };
    let params = stage.resolve(c, args.seed, args.deterministic);
    let out = manifold_fit(&input, &params)?;
    save_any_embedding(&args.out, &out, labels.as_deref())?;
    println!("re-embedded to {} dims -> {}", out.dim(), args.out.display());
    Ok(())
}

fn cluster_cmd(args: ClusterArgs) -> anyhow::Result<()> {
    let (input, _) = load_any_embedding(&args.input)?;
    let assignment = match args.clusterer {
        ClustererArg::Gmm => {
            let cfg = GmmConfig {
                n_init: args.n_init,
                ..GmmConfig::new(args.c, args.seed)
            };
            gmm_fit(&input, &cfg)?.1
        }
        ClustererArg::Kmeans => {
            let cfg = KmeansConfig {
                n_init: args.n_init,
                ..KmeansConfig::new(args.c, args.seed)
            };
            kmeans_fit(&input, &cfg)?.assignment
        }
    };
    write_assignment_csv(&args.out, &assignment)?;
    println!(
        "clustered {} points into {} clusters -> {}",
        assignment.labels.len(),
        args.c,
        args.out.display()
    );
    Ok(())
}

fn eval_cmd(args: EvalArgs) -> anyhow::Result<()> {
    let spec = args.dataset.to_spec()?;
    let ds = spec.load()?;
    let truth = ds
        .labels
        .clone()
        .ok_or_else(|| N2dError::Config("eval needs a labeled dataset".into()))?;
    let mut reader = csv::Reader::from_path(&args.assignment)?;
    let mut predicted = Vec::new();
    for rec in reader.records() {
        let rec = rec?;
        predicted.push(rec[1].parse::<usize>()?);
    }
    let (acc, mapping) = accuracy(&truth, &predicted)?;
    let nmi_value = nmi(&truth, &predicted)?;
    println!(
        "{}",
        serde_json::json!({"acc": acc, "nmi": nmi_value, "mapping": mapping})
    );
    Ok(())
}

fn ablation_cmd(args: AblationArgs) -> anyhow::Result<()> {
    let spec = args.dataset.to_spec()?;
    let params = AeParams {
        epochs: args.epochs,
        ..AeParams::default()
    };
    let table = run_ablation(&spec, &args.seeds, &params, Some(&args.out))?;
    println!("{}", table.to_markdown());
    println!("written to {}", args.out.display());
    Ok(())
}

fn viz_cmd(args: VizArgs) -> anyhow::Result<()> {
    let (emb, labels) = load_any_embedding(&args.input)?;
    std::fs::create_dir_all(&args.out)?;
    let n = n2d::pipeline::viz::export_visualization(
        &emb,
        labels.as_deref(),
        args.max_points,
        args.seed,
        &args.out.join("scatter.csv"),
        &args.out.join("scatter.svg"),
    )?;
    println!("plotted {n} points -> {}", args.out.display());
    Ok(())
}
