//! CSV import/export for embeddings and cluster assignments, plus the
//! container-backed embedding format that preserves provenance.

use std::path::Path;

use ndarray::Array2;

use crate::cluster::ClusterAssignment;
use crate::error::{N2dError, Result};
use crate::io::container::{load_container, save_container, Container};
use crate::manifold::{Embedding, Provenance};

/// Writes an embedding as CSV with header `dim_0..dim_{m-1}` and an
/// optional trailing `label` column.
pub fn write_embedding_csv(path: &Path, emb: &Embedding, labels: Option<&[usize]>) -> Result<()> {
    if let Some(labels) = labels {
        if labels.len() != emb.n_samples() {
            return Err(N2dError::Consistency(
                "label count != embedding rows".into(),
            ));
        }
    }
    if let Some(parent) = path.parent() {
        std::fs::create_dir_all(parent)?;
    }
    let mut w = csv::Writer::from_path(path)?;
    let mut header: Vec<String> = (0..emb.dim()).map(|i| format!("dim_{i}")).collect();
    if labels.is_some() {
        header.push("label".into());
    }
    w.write_record(&header)?;
    for (i, row) in emb.coords.rows().into_iter().enumerate() {
        let mut rec: Vec<String> = row.iter().map(|v| format!("{v}")).collect();
        if let Some(labels) = labels {
            rec.push(labels[i].to_string());
        }
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}

/// Reads a `dim_*`/optional-`label` CSV back into coordinates and labels.
pub fn read_embedding_csv(path: &Path) -> Result<(Array2<f64>, Option<Vec<usize>>)> {
    let mut r = csv::Reader::from_path(path)?;
    let headers = r.headers()?.clone();
    let has_label = headers.iter().last() == Some("label");
    let m = headers.len() - usize::from(has_label);
    let mut values = Vec::new();
    let mut labels = Vec::new();
    let mut n = 0usize;
    for (i, rec) in r.records().enumerate() {
        let rec = rec.map_err(|e| N2dError::Parse {
            row: i + 1,
            msg: e.to_string(),
        })?;
        for cell in rec.iter().take(m) {
            values.push(cell.parse::<f64>().map_err(|e| N2dError::Parse {
                row: i + 1,
                msg: e.to_string(),
            })?);
        }
        if has_label {
            labels.push(rec[m].parse::<usize>().map_err(|e| N2dError::Parse {
                row: i + 1,
                msg: e.to_string(),
            })?);
        }
        n += 1;
    }
    let coords = Array2::from_shape_vec((n, m), values)
        .map_err(|e| N2dError::Format(e.to_string()))?;
    Ok((coords, if has_label { Some(labels) } else { None }))
}

/// Saves an embedding in the binary container (exact, keeps provenance).
pub fn save_embedding(path: &Path, emb: &Embedding) -> Result<()> {
    let meta = serde_json::json!({
        "provenance": serde_json::to_value(emb.provenance)
            .map_err(|e| N2dError::Format(e.to_string()))?,
    });
    let mut c = Container::new("embedding", meta);
    c.push("coords", emb.coords.clone());
    save_container(path, &c)
}

pub fn load_embedding(path: &Path) -> Result<Embedding> {
    let c = load_container(path)?;
    if c.kind != "embedding" {
        return Err(N2dError::Format(format!(
            "expected embedding container, found '{}'",
            c.kind
        )));
    }
    let provenance: Provenance = serde_json::from_value(c.meta["provenance"].clone())
        .map_err(|e| N2dError::Format(e.to_string()))?;
    Embedding::new(c.tensor("coords")?.clone(), provenance)
}

/// Writes `index,hard_label[,resp_0..resp_{c-1}]` rows.
pub fn write_assignment_csv(path: &Path, assignment: &ClusterAssignment) -> Result<()> {
    if let Some(parent) = path.parent() {
        std::fs::create_dir_all(parent)?;
    }
    let mut w = csv::Writer::from_path(path)?;
    let c = assignment
        .responsibilities
        .as_ref()
        .map(|r| r.ncols())
        .unwrap_or(0);
    let mut header = vec!["index".to_string(), "hard_label".to_string()];
    header.extend((0..c).map(|k| format!("resp_{k}")));
    w.write_record(&header)?;
    for (i, &label) in assignment.labels.iter().enumerate() {
        let mut rec = vec![i.to_string(), label.to_string()];
        if let Some(resp) = &assignment.responsibilities {
            rec.extend(resp.row(i).iter().map(|v| format!("{v}")));
        }
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}
