//! Pipeline composition: autoencode, re-embed, cluster, evaluate, report.

pub mod viz;

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::ae::{self, AeConfig};
use crate::cluster::{gmm_fit, kmeans_fit, ClusterAssignment, GmmConfig, KmeansConfig};
use crate::data::{self, Dataset, PreprocessSpec};
use crate::error::{N2dError, Result};
use crate::io::export::{write_assignment_csv, write_embedding_csv};
use crate::manifold::umap::{LayoutMode, UmapConfig};
use crate::manifold::{
    isomap::IsomapConfig, manifold_fit, tsne::TsneConfig, Embedding, ManifoldKind, ManifoldParams,
};
use crate::metrics::{accuracy, nmi, MetricsReport, StageTimer};

/// Where the input data comes from.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum DatasetSpec {
    /// Bundled UCI pendigits directory (pendigits.tra / pendigits.tes).
    Pendigits { dir: PathBuf },
    /// Bundled USPS directory (usps_train.jf / usps_test.jf).
    Usps { dir: PathBuf },
    Csv {
        path: PathBuf,
        label_column: Option<String>,
        c_hint: Option<usize>,
    },
    Idx {
        images: PathBuf,
        labels: Option<PathBuf>,
        /// Second image/label pair appended row-wise (train+test style).
        #[serde(default)]
        images2: Option<PathBuf>,
        #[serde(default)]
        labels2: Option<PathBuf>,
        c_hint: Option<usize>,
    },
}

impl DatasetSpec {
    pub fn load(&self) -> Result<Dataset> {
        match self {
            DatasetSpec::Pendigits { dir } => data::load_pendigits(dir),
            DatasetSpec::Usps { dir } => data::load_usps(dir),
            DatasetSpec::Csv {
                path,
                label_column,
                c_hint,
            } => data::load_csv(path, label_column.as_deref())?.with_c_hint(*c_hint),
            DatasetSpec::Idx {
                images,
                labels,
                images2,
                labels2,
                c_hint,
            } => {
                let mut ds = data::load_idx(images, labels.as_deref())?;
                if let Some(images2) = images2 {
                    let extra = data::load_idx(images2, labels2.as_deref())?;
                    ds = ds.concat(&extra)?;
                }
                ds.with_c_hint(*c_hint)
            }
        }
    }

    /// Images divide by 255; numeric tables min-max per feature.
    pub fn default_preprocess(&self) -> PreprocessSpec {
        match self {
            DatasetSpec::Idx { .. } => PreprocessSpec::ImageUnitScale,
            _ => PreprocessSpec::PerFeatureMinmax,
        }
    }
}

/// Autoencoder stage: skip (raw-data ablation) or train with parameters.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "snake_case")]
pub enum AeStage {
    Skip,
    Train(AeParams),
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct AeParams {
    pub hidden_dims: Vec<usize>,
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
}

impl Default for AeParams {
    fn default() -> Self {
        AeParams {
            hidden_dims: vec![500, 500, 2000],
            epochs: 1000,
            batch_size: 256,
            learning_rate: 1e-3,
        }
    }
}

impl AeParams {
    pub fn to_config(&self, input_dim: usize, bottleneck_dim: usize, seed: u64) -> AeConfig {
        AeConfig {
            input_dim,
            bottleneck_dim,
            hidden_dims: self.hidden_dims.clone(),
            epochs: self.epochs,
            batch_size: self.batch_size,
            learning_rate: self.learning_rate,
            adam_beta1: 0.9,
            adam_beta2: 0.999,
            adam_eps: 1e-8,
            seed,
        }
    }
}

/// Manifold stage selection with optional per-learner overrides; anything
/// unset falls back to the learner defaults (dimensionality defaults to the
/// cluster count).
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct ManifoldStage {
    pub kind: ManifoldKind,
    pub n_neighbors: Option<usize>,
    pub min_dist: Option<f64>,
    pub n_components: Option<usize>,
    pub n_epochs: Option<usize>,
    pub perplexity: Option<f64>,
    pub n_iter: Option<usize>,
    pub max_points: Option<usize>,
    pub layout: Option<LayoutMode>,
}

impl Default for ManifoldStage {
    fn default() -> Self {
        ManifoldStage {
            kind: ManifoldKind::Umap,
            n_neighbors: None,
            min_dist: None,
            n_components: None,
            n_epochs: None,
            perplexity: None,
            n_iter: None,
            max_points: None,
            layout: None,
        }
    }
}

impl ManifoldStage {
    pub fn none() -> Self {
        ManifoldStage {
            kind: ManifoldKind::None,
            ..Default::default()
        }
    }

    pub fn of_kind(kind: ManifoldKind) -> Self {
        ManifoldStage {
            kind,
            ..Default::default()
        }
    }

    /// Builds the concrete learner parameters: unset fields fall back to
    /// defaults and the target dimension falls back to the cluster count.
    pub fn resolve(&self, c: usize, seed: u64, deterministic: bool) -> ManifoldParams {
        let m = self.n_components.unwrap_or(c);
        match self.kind {
            ManifoldKind::Umap => {
                let mut cfg = UmapConfig::new(m, seed);
                if let Some(k) = self.n_neighbors {
                    cfg.n_neighbors = k;
                }
                if let Some(d) = self.min_dist {
                    cfg.min_dist = d;
                }
                cfg.n_epochs = self.n_epochs;
                cfg.layout = if deterministic {
                    LayoutMode::Sequential
                } else {
                    self.layout.unwrap_or(LayoutMode::Sequential)
                };
                ManifoldParams::Umap(cfg)
            }
            ManifoldKind::Tsne => {
                let mut cfg = TsneConfig::new(m, seed);
                if let Some(p) = self.perplexity {
                    cfg.perplexity = p;
                }
                if let Some(it) = self.n_iter {
                    cfg.n_iter = it;
                }
                if let Some(mp) = self.max_points {
                    cfg.max_points = mp;
                }
                ManifoldParams::Tsne(cfg)
            }
            ManifoldKind::Isomap => {
                let mut cfg = IsomapConfig::new(m);
                if let Some(k) = self.n_neighbors {
                    cfg.n_neighbors = k;
                }
                if let Some(mp) = self.max_points {
                    cfg.max_points = mp;
                }
                ManifoldParams::Isomap(cfg)
            }
            ManifoldKind::None => ManifoldParams::None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ClustererKind {
    Gmm,
    Kmeans,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ClustererSpec {
    pub kind: ClustererKind,
    pub n_init: usize,
}

impl Default for ClustererSpec {
    fn default() -> Self {
        ClustererSpec {
            kind: ClustererKind::Gmm,
            n_init: 10,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PipelineConfig {
    pub dataset: DatasetSpec,
    /// Defaults to the dataset-appropriate rule when absent.
    pub preprocess: Option<PreprocessSpec>,
    pub ae: AeStage,
    pub manifold: ManifoldStage,
    #[serde(default)]
    pub clusterer: ClustererSpec,
    pub seed: u64,
    #[serde(default)]
    pub deterministic: bool,
    /// Artifacts are written here when set.
    pub out_dir: Option<PathBuf>,
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct LossSummary {
    pub epochs: usize,
    pub final_loss: f64,
    pub min_loss: f64,
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct ArtifactPaths {
    pub report: Option<PathBuf>,
    pub checkpoint: Option<PathBuf>,
    pub embedding: Option<PathBuf>,
    pub assignment: Option<PathBuf>,
    pub scatter: Option<PathBuf>,
    pub table: Option<PathBuf>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EnvironmentNote {
    pub threads: usize,
    pub precision: String,
    pub deterministic: bool,
}

/// Everything a pipeline run produced: metrics, resolved configuration,
/// loss summary, artifact paths, and an environment note.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunReport {
    pub dataset: String,
    pub n_samples: usize,
    pub n_features: usize,
    pub n_clusters: usize,
    pub metrics: Option<MetricsReport>,
    pub config: PipelineConfig,
    pub loss: Option<LossSummary>,
    pub artifacts: ArtifactPaths,
    pub environment: EnvironmentNote,
}

/// Outcome of a pipeline run kept in memory (the report plus the final
/// embedding and assignment, for callers that keep composing).
pub struct PipelineOutcome {
    pub report: RunReport,
    pub embedding: Embedding,
    pub assignment: ClusterAssignment,
}

fn stage<T>(name: &str, r: Result<T>) -> Result<T> {
    r.map_err(|e| e.in_stage(name))
}

/// Runs load -> preprocess -> autoencode -> manifold -> cluster -> evaluate,
/// timing each stage and writing artifacts when an output directory is set.
pub fn run_pipeline(cfg: &PipelineConfig) -> Result<RunReport> {
    run_pipeline_full(cfg).map(|o| o.report)
}

pub fn run_pipeline_full(cfg: &PipelineConfig) -> Result<PipelineOutcome> {
    let mut timer = StageTimer::new();

    let ds = stage("load", cfg.dataset.load())?;
    let preprocess_spec = cfg.preprocess.unwrap_or_else(|| cfg.dataset.default_preprocess());
    let ds = stage("preprocess", data::preprocess(&ds, preprocess_spec))?;
    let c = ds.cluster_count().ok_or_else(|| {
        N2dError::Config("cluster count unresolvable: no labels and no c_hint".into())
    })?;

    let mut artifacts = ArtifactPaths::default();
    let out_dir = cfg.out_dir.clone();
    if let Some(dir) = &out_dir {
        std::fs::create_dir_all(dir)?;
    }

    // autoencoder stage
    let mut loss_summary = None;
    let embedded = match &cfg.ae {
        AeStage::Skip => {
            timer.record("ae", 0.0);
            Embedding::raw(ds.features.clone())?
        }
        AeStage::Train(params) => {
            let ae_cfg = params.to_config(ds.n_features(), c, cfg.seed);
            let trained = timer.time("ae", || -> Result<_> {
                let model = ae::init(&ae_cfg)?;
                ae::train(model, &ds, &ae_cfg)
            });
            let (model, history) = stage("ae", trained)?;
            loss_summary = Some(LossSummary {
                epochs: history.len(),
                final_loss: *history.last().unwrap_or(&f64::NAN),
                min_loss: history.iter().cloned().fold(f64::INFINITY, f64::min),
            });
            if let Some(dir) = &out_dir {
                let path = dir.join("checkpoint.n2dc");
                stage("ae", ae::save_checkpoint(&path, &model))?;
                artifacts.checkpoint = Some(path);
            }
            stage("ae", model.encode(&ds))?
        }
    };

    // manifold stage
    let params = cfg.manifold.resolve(c, cfg.seed, cfg.deterministic);
    let manifold_result = timer.time("manifold", || manifold_fit(&embedded, &params));
    let re_embedded = stage("manifold", manifold_result)?;

    // The embedding is written as soon as it exists so a clustering
    // failure still leaves the partial artifacts behind for debugging.
    if let Some(dir) = &out_dir {
        let emb_path = dir.join("embedding.csv");
        write_embedding_csv(&emb_path, &re_embedded, ds.labels.as_deref())?;
        artifacts.embedding = Some(emb_path);
    }

    // clustering stage
    let cluster_result = timer.time("cluster", || -> Result<ClusterAssignment> {
        match cfg.clusterer.kind {
            ClustererKind::Gmm => {
                let gmm_cfg = GmmConfig {
                    n_init: cfg.clusterer.n_init,
                    ..GmmConfig::new(c, cfg.seed)
                };
                let (model, assignment) = gmm_fit(&re_embedded, &gmm_cfg)?;
                if let Some(dir) = &out_dir {
                    crate::cluster::gmm::save_gmm(&dir.join("gmm.n2dc"), &model)?;
                }
                Ok(assignment)
            }
            ClustererKind::Kmeans => {
                let km_cfg = KmeansConfig {
                    n_init: cfg.clusterer.n_init,
                    ..KmeansConfig::new(c, cfg.seed)
                };
                Ok(kmeans_fit(&re_embedded, &km_cfg)?.assignment)
            }
        }
    });
    let assignment = stage("cluster", cluster_result)?;

    // evaluation
    let metrics = match &ds.labels {
        Some(labels) => {
            let (acc, mapping) = accuracy(labels, &assignment.labels)?;
            let nmi_value = nmi(labels, &assignment.labels)?;
            Some(MetricsReport {
                acc,
                nmi: nmi_value,
                mapping,
                timings: timer.timings(),
            })
        }
        None => None,
    };

    // artifacts
    if let Some(dir) = &out_dir {
        let assign_path = dir.join("assignment.csv");
        write_assignment_csv(&assign_path, &assignment)?;
        artifacts.assignment = Some(assign_path);

        if re_embedded.dim() == 2 {
            let svg_path = dir.join("scatter.svg");
            viz::export_visualization(
                &re_embedded,
                ds.labels.as_deref(),
                5000,
                cfg.seed,
                &dir.join("scatter.csv"),
                &svg_path,
            )?;
            artifacts.scatter = Some(svg_path);
        }
    }

    let mut report = RunReport {
        dataset: ds.name.clone(),
        n_samples: ds.n_samples(),
        n_features: ds.n_features(),
        n_clusters: c,
        metrics,
        config: cfg.clone(),
        loss: loss_summary,
        artifacts,
        environment: EnvironmentNote {
            threads: rayon::current_num_threads(),
            precision: "f64".into(),
            deterministic: cfg.deterministic,
        },
    };

    if let Some(dir) = &out_dir {
        let path = dir.join("report.json");
        report.artifacts.report = Some(path.clone());
        let json = serde_json::to_string_pretty(&report)
            .map_err(|e| N2dError::Format(e.to_string()))?;
        std::fs::write(&path, json)?;
    }

    Ok(PipelineOutcome {
        report,
        embedding: re_embedded,
        assignment,
    })
}

/// One cell of the component-ablation table.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AblationCell {
    pub configuration: String,
    /// Metrics of the best seed (by accuracy) and the per-seed mean;
    /// `None` when every seed failed or tripped a guard.
    pub best_acc: Option<f64>,
    pub best_nmi: Option<f64>,
    pub mean_acc: Option<f64>,
    pub mean_nmi: Option<f64>,
    /// Failure reason when the cell is a dash.
    pub note: Option<String>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AblationTable {
    pub dataset: String,
    pub seeds: Vec<u64>,
    pub cells: Vec<AblationCell>,
}

impl AblationTable {
    pub fn to_csv(&self) -> String {
        let mut out = String::from("configuration,acc_best,nmi_best,acc_mean,nmi_mean,note\n");
        for cell in &self.cells {
            let fmt = |v: Option<f64>| v.map_or("-".to_string(), |x| format!("{x:.3}"));
            out.push_str(&format!(
                "{},{},{},{},{},{}\n",
                cell.configuration,
                fmt(cell.best_acc),
                fmt(cell.best_nmi),
                fmt(cell.mean_acc),
                fmt(cell.mean_nmi),
                cell.note.clone().unwrap_or_default()
            ));
        }
        out
    }

    pub fn to_markdown(&self) -> String {
        let mut out = String::new();
        out.push_str(
            "| configuration | ACC (best) | NMI (best) | ACC (mean) | NMI (mean) |\n|---|---|---|---|---|\n",
        );
        for cell in &self.cells {
            let fmt = |v: Option<f64>| v.map_or("—".to_string(), |x| format!("{x:.3}"));
            out.push_str(&format!(
                "| {} | {} | {} | {} | {} |\n",
                cell.configuration,
                fmt(cell.best_acc),
                fmt(cell.best_nmi),
                fmt(cell.mean_acc),
                fmt(cell.mean_nmi),
            ));
        }
        out
    }

    pub fn cell(&self, configuration: &str) -> Option<&AblationCell> {
        self.cells.iter().find(|c| c.configuration == configuration)
    }
}

/// The eight component-ablation configurations: each manifold learner (and
/// none) applied to the raw data and to the autoencoded embedding, all
/// clustered with the GMM.
pub fn ablation_configurations() -> Vec<(String, AeStage, ManifoldKind)> {
    let ae = |yes: bool| {
        if yes {
            AeStage::Train(AeParams::default())
        } else {
            AeStage::Skip
        }
    };
    vec![
        ("gmm".into(), ae(false), ManifoldKind::None),
        ("ae_gmm".into(), ae(true), ManifoldKind::None),
        ("isomap_gmm".into(), ae(false), ManifoldKind::Isomap),
        ("ae_isomap_gmm".into(), ae(true), ManifoldKind::Isomap),
        ("tsne_gmm".into(), ae(false), ManifoldKind::Tsne),
        ("ae_tsne_gmm".into(), ae(true), ManifoldKind::Tsne),
        ("umap_gmm".into(), ae(false), ManifoldKind::Umap),
        ("ae_umap_gmm".into(), ae(true), ManifoldKind::Umap),
    ]
}

/// Runs the eight ablation configurations over the given seeds, sharing one
/// autoencoder training per seed across the four autoencoded rows. Guard
/// trips and stage failures become dash cells with the reason recorded.
pub fn run_ablation(
    dataset: &DatasetSpec,
    seeds: &[u64],
    ae_params: &AeParams,
    out_dir: Option<&Path>,
) -> Result<AblationTable> {
    let base = dataset.load()?;
    let preprocess_spec = dataset.default_preprocess();
    let ds = data::preprocess(&base, preprocess_spec)?;
    let c = ds.cluster_count().ok_or_else(|| {
        N2dError::Config("ablation needs labels or c_hint to fix the cluster count".into())
    })?;

    let configs = ablation_configurations();
    // per configuration, per seed: Ok((acc, nmi)) or Err(reason)
    let mut results: Vec<Vec<std::result::Result<(f64, f64), String>>> =
        vec![Vec::new(); configs.len()];

    for &seed in seeds {
        // Train the autoencoder once per seed; reuse for all ae_* rows.
        let ae_embedding: std::result::Result<Embedding, String> = (|| {
            let ae_cfg = ae_params.to_config(ds.n_features(), c, seed);
            let model = ae::init(&ae_cfg).map_err(|e| e.to_string())?;
            let (model, _) = ae::train(model, &ds, &ae_cfg).map_err(|e| e.to_string())?;
            model.encode(&ds).map_err(|e| e.to_string())
        })();
        let raw_embedding = Embedding::raw(ds.features.clone()).map_err(|e| e.in_stage("load"))?;

        for (idx, (_, ae_stage, kind)) in configs.iter().enumerate() {
            let outcome: std::result::Result<(f64, f64), String> = (|| {
                let input = match ae_stage {
                    AeStage::Skip => raw_embedding.clone(),
                    AeStage::Train(_) => ae_embedding.clone()?,
                };
                let stage_cfg = ManifoldStage::of_kind(*kind);
                let params = stage_cfg.resolve(c, seed, false);
                let emb = manifold_fit(&input, &params).map_err(|e| e.to_string())?;
                let gmm_cfg = GmmConfig::new(c, seed);
                let (_, assignment) = gmm_fit(&emb, &gmm_cfg).map_err(|e| e.to_string())?;
                let labels = ds.labels.as_ref().expect("labeled dataset");
                let (acc, _) = accuracy(labels, &assignment.labels).map_err(|e| e.to_string())?;
                let nmi_value = nmi(labels, &assignment.labels).map_err(|e| e.to_string())?;
                Ok((acc, nmi_value))
            })();
            results[idx].push(outcome);
        }
    }

    let cells = configs
        .iter()
        .zip(results.iter())
        .map(|((name, _, _), runs)| {
            let ok: Vec<(f64, f64)> = runs.iter().filter_map(|r| r.as_ref().ok()).copied().collect();
            if ok.is_empty() {
                let note = runs
                    .iter()
                    .filter_map(|r| r.as_ref().err())
                    .next()
                    .cloned()
                    .unwrap_or_else(|| "no runs".into());
                AblationCell {
                    configuration: name.clone(),
                    best_acc: None,
                    best_nmi: None,
                    mean_acc: None,
                    mean_nmi: None,
                    note: Some(note),
                }
            } else {
                let best = ok
                    .iter()
                    .cloned()
                    .max_by(|a, b| a.0.partial_cmp(&b.0).unwrap())
                    .unwrap();
                let mean_acc = ok.iter().map(|r| r.0).sum::<f64>() / ok.len() as f64;
                let mean_nmi = ok.iter().map(|r| r.1).sum::<f64>() / ok.len() as f64;
                let note = runs.iter().filter_map(|r| r.as_ref().err()).next().cloned();
                AblationCell {
                    configuration: name.clone(),
                    best_acc: Some(best.0),
                    best_nmi: Some(best.1),
                    mean_acc: Some(mean_acc),
                    mean_nmi: Some(mean_nmi),
                    note,
                }
            }
        })
        .collect();

    let table = AblationTable {
        dataset: ds.name.clone(),
        seeds: seeds.to_vec(),
        cells,
    };

    if let Some(dir) = out_dir {
        std::fs::create_dir_all(dir)?;
        std::fs::write(dir.join("table.csv"), table.to_csv())?;
        std::fs::write(dir.join("table.md"), table.to_markdown())?;
    }
    Ok(table)
}
