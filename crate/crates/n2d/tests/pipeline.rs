//! Pipeline-level integration tests: stage composition, report artifacts,
//! ablation harness behavior, and reduction to the bare clusterer.

use std::io::Write;
use std::path::PathBuf;

use n2d::cluster::{gmm_fit, GmmConfig};
use n2d::manifold::{Embedding, ManifoldKind};
use n2d::pipeline::{
    run_ablation, run_pipeline, run_pipeline_full, AeParams, AeStage, ClustererSpec, DatasetSpec,
    ManifoldStage, PipelineConfig,
};

/// Three separated blobs in 4-D written as a labeled CSV.
fn blob_csv(n_per: usize, seed: u64, name: &str) -> PathBuf {
    use rand::{Rng, SeedableRng};
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    let dir = std::env::temp_dir().join(format!("n2d_pipeline_{}", std::process::id()));
    std::fs::create_dir_all(&dir).unwrap();
    let path = dir.join(name);
    let mut f = std::fs::File::create(&path).unwrap();
    writeln!(f, "a,b,c,d,y").unwrap();
    let centers = [[0.0, 0.0, 0.0, 0.0], [6.0, 0.0, 0.0, 0.0], [0.0, 6.0, 0.0, 0.0]];
    for i in 0..n_per * 3 {
        let blob = i / n_per;
        let c = centers[blob];
        writeln!(
            f,
            "{},{},{},{},{}",
            c[0] + rng.gen_range(-0.4..0.4),
            c[1] + rng.gen_range(-0.4..0.4),
            c[2] + rng.gen_range(-0.4..0.4),
            c[3] + rng.gen_range(-0.4..0.4),
            blob
        )
        .unwrap();
    }
    path
}

fn blob_spec(path: PathBuf) -> DatasetSpec {
    DatasetSpec::Csv {
        path,
        label_column: Some("y".into()),
        c_hint: None,
    }
}

#[test]
fn skip_ae_and_no_manifold_reduces_to_bare_clusterer() {
    let path = blob_csv(40, 3, "reduce.csv");
    let cfg = PipelineConfig {
        dataset: blob_spec(path.clone()),
        preprocess: None,
        ae: AeStage::Skip,
        manifold: ManifoldStage::none(),
        clusterer: ClustererSpec { n_init: 4, ..ClustererSpec::default() },
        seed: 11,
        deterministic: true,
        out_dir: None,
    };
    let outcome = run_pipeline_full(&cfg).unwrap();

    // direct clusterer invocation on the preprocessed raw features
    let ds = cfg.dataset.load().unwrap();
    let ds = n2d::data::preprocess(&ds, cfg.dataset.default_preprocess()).unwrap();
    let emb = Embedding::raw(ds.features.clone()).unwrap();
    let (_, direct) = gmm_fit(&emb, &GmmConfig { n_init: 4, ..GmmConfig::new(3, 11) }).unwrap();

    assert_eq!(outcome.assignment.labels, direct.labels);
    let m = outcome.report.metrics.unwrap();
    let (acc, _) = n2d::metrics::accuracy(ds.labels.as_ref().unwrap(), &direct.labels).unwrap();
    assert_eq!(m.acc.to_bits(), acc.to_bits());
}

#[test]
fn report_artifacts_exist_and_timings_are_consistent() {
    let path = blob_csv(30, 5, "artifacts.csv");
    let out_dir = std::env::temp_dir().join(format!("n2d_run_out_{}", std::process::id()));
    let _ = std::fs::remove_dir_all(&out_dir);
    let cfg = PipelineConfig {
        dataset: blob_spec(path),
        preprocess: None,
        ae: AeStage::Train(AeParams {
            epochs: 2,
            hidden_dims: vec![16, 8],
            ..AeParams::default()
        }),
        manifold: ManifoldStage {
            kind: ManifoldKind::Umap,
            n_components: Some(2),
            n_neighbors: Some(8),
            n_epochs: Some(20),
            ..ManifoldStage::default()
        },
        clusterer: ClustererSpec { n_init: 2, ..ClustererSpec::default() },
        seed: 4,
        deterministic: true,
        out_dir: Some(out_dir.clone()),
    };
    let report = run_pipeline(&cfg).unwrap();

    let a = &report.artifacts;
    for path in [&a.report, &a.checkpoint, &a.embedding, &a.assignment, &a.scatter] {
        let p = path.as_ref().expect("artifact path recorded");
        assert!(p.exists(), "{} missing", p.display());
    }

    let t = &report.metrics.as_ref().unwrap().timings;
    assert!(t.ae_s > 0.0 && t.manifold_s > 0.0 && t.cluster_s > 0.0);
    assert!(t.total_s >= t.ae_s + t.manifold_s + t.cluster_s - 0.05);

    // report parses back and the snapshot matches
    let text = std::fs::read_to_string(a.report.as_ref().unwrap()).unwrap();
    let parsed: n2d::pipeline::RunReport = serde_json::from_str(&text).unwrap();
    assert_eq!(parsed.n_clusters, 3);
    assert_eq!(parsed.loss.as_ref().unwrap().epochs, 2);
}

#[test]
fn stage_failures_carry_the_stage_name() {
    let cfg = PipelineConfig {
        dataset: DatasetSpec::Csv {
            path: PathBuf::from("/nonexistent/n2d.csv"),
            label_column: None,
            c_hint: Some(2),
        },
        preprocess: None,
        ae: AeStage::Skip,
        manifold: ManifoldStage::none(),
        clusterer: ClustererSpec::default(),
        seed: 0,
        deterministic: true,
        out_dir: None,
    };
    let err = run_pipeline(&cfg).unwrap_err();
    assert!(matches!(err, n2d::N2dError::Stage { ref stage, .. } if stage == "load"));
}

#[test]
fn cluster_count_unresolvable_is_a_config_error() {
    let path = blob_csv(10, 9, "nolabels.csv");
    // strip the label column by loading without it
    let cfg = PipelineConfig {
        dataset: DatasetSpec::Csv {
            path,
            label_column: None,
            c_hint: None,
        },
        preprocess: None,
        ae: AeStage::Skip,
        manifold: ManifoldStage::none(),
        clusterer: ClustererSpec::default(),
        seed: 0,
        deterministic: true,
        out_dir: None,
    };
    assert!(matches!(
        run_pipeline(&cfg).unwrap_err(),
        n2d::N2dError::Config(_)
    ));
}

/// The ablation harness produces all eight rows; guard-tripped learners
/// come back as dash cells with the reason, not as failures.
#[test]
fn ablation_table_has_eight_rows_and_dash_cells() {
    let path = blob_csv(50, 13, "ablation.csv");
    let spec = blob_spec(path);
    let ae = AeParams {
        epochs: 2,
        hidden_dims: vec![16, 8],
        ..AeParams::default()
    };
    let out_dir = std::env::temp_dir().join(format!("n2d_ablation_{}", std::process::id()));
    let table = run_ablation(&spec, &[0, 1], &ae, Some(&out_dir)).unwrap();

    assert_eq!(table.cells.len(), 8);
    for cell in &table.cells {
        assert!(
            cell.best_acc.is_some(),
            "{} should have run on this small dataset: {:?}",
            cell.configuration,
            cell.note
        );
    }
    assert!(out_dir.join("table.csv").exists());
    assert!(out_dir.join("table.md").exists());

    // the csv has a header plus eight rows
    let text = std::fs::read_to_string(out_dir.join("table.csv")).unwrap();
    assert_eq!(text.lines().count(), 9);

    // blobs this separated are easy for the rows that don't depend on the
    // deliberately under-trained autoencoder
    for name in ["gmm", "umap_gmm", "tsne_gmm", "isomap_gmm"] {
        let cell = table.cell(name).unwrap();
        assert!(
            cell.best_acc.unwrap() > 0.9,
            "{name}: {:?}",
            cell.best_acc
        );
    }
}

/// Forcing a tiny memory guard turns the O(n^2) learners into dash cells
/// (mirroring out-of-memory dashes) while the others still run.
#[test]
fn memory_guard_trips_become_dashes() {
    use n2d::manifold::tsne::TsneConfig;
    use n2d::manifold::{manifold_fit, ManifoldParams};

    let path = blob_csv(30, 17, "guard.csv");
    let ds = blob_spec(path).load().unwrap();
    let emb = Embedding::raw(ds.features.clone()).unwrap();
    let params = ManifoldParams::Tsne(TsneConfig {
        max_points: 10,
        ..TsneConfig::new(2, 0)
    });
    let err = manifold_fit(&emb, &params).unwrap_err();
    assert!(matches!(err, n2d::N2dError::MemoryGuard { .. }));
    // the harness records guard trips as notes rather than aborting
    let msg = err.to_string();
    assert!(msg.contains("memory guard"), "message: {msg}");
}
