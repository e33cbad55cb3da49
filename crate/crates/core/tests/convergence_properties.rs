use tcsde::convergence::{strong_error, LevelLadder, StrongErrorConfig};
use tcsde::models::{builtin_linear, CoefficientModel};
use tcsde::noise::JumpMeasureSpec;

fn model() -> impl CoefficientModel {
    builtin_linear(-1.0, 0.5, 0.2, JumpMeasureSpec::uniform(1.0, 0.5, 1.0).unwrap(), 1.0).unwrap()
}

#[test]
fn fitted_order_is_reproducible_across_seeds() {
    let m = model();
    let orders: Vec<f64> = (1..=5)
        .map(|seed| strong_error(&m, &StrongErrorConfig::new(0.8, 1.0, 1.0, 5000, seed)).unwrap().fitted_order().unwrap())
        .collect();
    let hi = orders.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let lo = orders.iter().cloned().fold(f64::INFINITY, f64::min);
    println!("orders {orders:?}");
    assert!(hi - lo < 0.1, "{orders:?}");
}

#[test]
fn error_decreases_with_step() {
    for theta in [0.5, 1.0] {
        let rep = strong_error(&model(), &StrongErrorConfig::new(0.8, 1.0, theta, 2000, 31)).unwrap();
        assert!(rep.levels.windows(2).all(|w| w[1].error < w[0].error), "theta {theta}: {:?}", rep.levels);
        assert!(rep.levels.windows(2).all(|w| w[1].delta == 0.5 * w[0].delta));
        assert_eq!(rep.failed_paths, 0);
    }
}

#[test]
fn finer_reference_moves_order_within_interval() {
    let m = model();
    let mut base = StrongErrorConfig::new(0.8, 1.0, 1.0, 5000, 41);
    base.ladder = LevelLadder::powers_of_two(4, 8, 10).unwrap();
    let mut finer = base.clone();
    finer.ladder = LevelLadder::powers_of_two(4, 8, 11).unwrap();
    let a = strong_error(&m, &base).unwrap().fit.unwrap();
    let b = strong_error(&m, &finer).unwrap().fit.unwrap();
    let half_width = 0.5 * (a.ci_high - a.ci_low);
    println!("reference 2^-10: {:.4}, 2^-11: {:.4}, half width {:.4}", a.slope, b.slope, half_width);
    assert!((a.slope - b.slope).abs() < half_width);
}
