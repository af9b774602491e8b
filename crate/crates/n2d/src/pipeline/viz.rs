//! 2-D visualization export: a seeded subsample written as CSV plus a
//! static SVG scatter with one color per label.

use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{N2dError, Result};
use crate::manifold::Embedding;

const PALETTE: [&str; 10] = [
    "#1f77b4", "#ff7f0e", "#2ca02c", "#d62728", "#9467bd", "#8c564b", "#e377c2", "#7f7f7f",
    "#bcbd22", "#17becf",
];

/// Writes `(x, y, label)` CSV and an SVG scatter of at most `max_points`
/// points, subsampled uniformly with the given seed. Returns the number of
/// points plotted.
pub fn export_visualization(
    emb: &Embedding,
    labels: Option<&[usize]>,
    max_points: usize,
    seed: u64,
    out_csv: &Path,
    out_svg: &Path,
) -> Result<usize> {
    if emb.dim() != 2 {
        return Err(N2dError::Dimension {
            what: "visualization embedding".into(),
            expected: 2,
            actual: emb.dim(),
        });
    }
    let n = emb.n_samples();
    let mut picked: Vec<usize> = (0..n).collect();
    if n > max_points {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        picked.shuffle(&mut rng);
        picked.truncate(max_points);
        picked.sort_unstable();
    }

    if let Some(parent) = out_csv.parent() {
        std::fs::create_dir_all(parent)?;
    }
    let mut w = csv::Writer::from_path(out_csv)?;
    w.write_record(["x", "y", "label"])?;
    for &i in &picked {
        let label = labels.map(|l| l[i]).unwrap_or(0);
        w.write_record(&[
            format!("{}", emb.coords[[i, 0]]),
            format!("{}", emb.coords[[i, 1]]),
            label.to_string(),
        ])?;
    }
    w.flush()?;

    let svg = render_svg(emb, labels, &picked);
    std::fs::write(out_svg, svg)?;
    Ok(picked.len())
}

fn render_svg(emb: &Embedding, labels: Option<&[usize]>, picked: &[usize]) -> String {
    let (width, height, margin) = (800.0, 600.0, 30.0);
    let (mut min_x, mut max_x) = (f64::INFINITY, f64::NEG_INFINITY);
    let (mut min_y, mut max_y) = (f64::INFINITY, f64::NEG_INFINITY);
    for &i in picked {
        min_x = min_x.min(emb.coords[[i, 0]]);
        max_x = max_x.max(emb.coords[[i, 0]]);
        min_y = min_y.min(emb.coords[[i, 1]]);
        max_y = max_y.max(emb.coords[[i, 1]]);
    }
    let span_x = (max_x - min_x).max(1e-12);
    let span_y = (max_y - min_y).max(1e-12);

    let mut svg = String::with_capacity(picked.len() * 90 + 256);
    svg.push_str(&format!(
        "<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{width}\" height=\"{height}\" viewBox=\"0 0 {width} {height}\">\n"
    ));
    svg.push_str("<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n");
    for &i in picked {
        let x = margin + (emb.coords[[i, 0]] - min_x) / span_x * (width - 2.0 * margin);
        // SVG y grows downward
        let y = height - margin - (emb.coords[[i, 1]] - min_y) / span_y * (height - 2.0 * margin);
        let label = labels.map(|l| l[i]).unwrap_or(0);
        let color = PALETTE[label % PALETTE.len()];
        svg.push_str(&format!(
            "<circle cx=\"{x:.2}\" cy=\"{y:.2}\" r=\"2\" fill=\"{color}\" fill-opacity=\"0.6\"/>\n"
        ));
    }
    svg.push_str("</svg>\n");
    svg
}
