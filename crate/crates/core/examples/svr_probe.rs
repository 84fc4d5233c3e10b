use nalgebra::{DMatrix, DVector};
use polishsense::features::read_feature_table;

fn main() {
    let rows = read_feature_table(std::path::Path::new("/tmp/smoke/full_features/features_separate.csv")).unwrap();
    let n = rows.len();
    let p = rows[0].values.len();
    let x = DMatrix::from_fn(n, p, |i, j| rows[i].values[j]);
    let y = DVector::from_fn(n, |i, _| rows[i].target);
    // column scale summary
    let mut maxabs = vec![0.0f64; p];
    for i in 0..n { for j in 0..p { maxabs[j] = maxabs[j].max(x[(i,j)].abs()); } }
    println!("col max-abs: min {:.3e}, max {:.3e}", maxabs.iter().cloned().fold(f64::INFINITY, f64::min), maxabs.iter().cloned().fold(0.0, f64::max));
    let t0 = std::time::Instant::now();
    match polishsense::models::svr::solve(&x, &y, 1.0, 0.1) {
        Ok(sol) => println!("converged: iters {}, gap {:.3e}, primal {:.6e}, {:?}", sol.iterations, sol.gap, sol.primal, t0.elapsed()),
        Err(e) => println!("failed after {:?}: {e}", t0.elapsed()),
    }
}
