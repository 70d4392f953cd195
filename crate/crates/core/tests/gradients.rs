mod common;

use common::GradCase;

#[test]
fn analytic_gradients_match_central_differences() {
    for seed in 0..20 {
        let case = GradCase::random(seed);
        let errs = case.relative_errors();
        let bad = errs.iter().filter(|&&e| e >= 1e-4).count();
        let worst = errs.iter().cloned().fold(0.0, f64::max);
        println!("seed {seed}: {} coords, {bad} above 1e-4, worst {worst:.3e}", errs.len());
        assert!((bad as f64) <= 0.01 * errs.len() as f64, "seed {seed}: {bad}/{} coordinates off", errs.len());
    }
}
