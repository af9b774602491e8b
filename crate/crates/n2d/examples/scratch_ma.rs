use ndarray::Axis;
fn main() {
    let ds = n2d::data::load_pendigits(std::path::Path::new("data/pendigits")).unwrap();
    let ds = n2d::data::preprocess(&ds, n2d::data::PreprocessSpec::PerFeatureMinmax).unwrap();
    // 2000-sample subset, same dynamics at 5x speed
    let subset = ds.features.select(Axis(0), &(0..2000).collect::<Vec<_>>());
    let ds = n2d::data::Dataset::new(subset, None, "sub", None).unwrap();
    let cfg = n2d::ae::AeConfig { epochs: 1000, ..n2d::ae::AeConfig::new(16, 10, 0) };
    let model = n2d::ae::init(&cfg).unwrap();
    let (_, hist) = n2d::ae::train(model, &ds, &cfg).unwrap();
    let tail = &hist[hist.len() - 100..];
    let ma: Vec<f64> = tail.windows(20).map(|w| w.iter().sum::<f64>() / 20.0).collect();
    let mut worst_ratio = 0.0f64;
    for w in ma.windows(2) {
        worst_ratio = worst_ratio.max(w[1] / w[0] - 1.0);
    }
    println!("final loss {:.3e}; min {:.3e}; worst MA increase ratio {:+.3e}", hist.last().unwrap(), hist.iter().cloned().fold(f64::INFINITY, f64::min), worst_ratio);
    println!("tail MA first {:.6e} last {:.6e}", ma[0], ma[ma.len()-1]);
}
