use dumbbell::oracle::{scaling_fit, sturm_liouville_neumann, Profile1D, StepScene};
use proptest::prelude::*;
use std::f64::consts::PI;

#[test]
fn flat_error_quarters_under_refinement() {
    let exact = PI * PI;
    let e1 = sturm_liouville_neumann(&Profile1D::flat(64), 2).unwrap().coarse[1] - exact;
    let e2 = sturm_liouville_neumann(&Profile1D::flat(128), 2).unwrap().coarse[1] - exact;
    let ratio = e1 / e2;
    assert!((3.5..=4.5).contains(&ratio), "ratio {ratio}");
}

#[test]
fn richardson_beats_both_resolutions() {
    let ev = sturm_liouville_neumann(&Profile1D::flat(128), 4).unwrap();
    for k in 1..4 {
        let exact = (k as f64 * PI).powi(2);
        assert!((ev.extrapolated[k] - exact).abs() < (ev.fine[k] - exact).abs());
    }
}

#[test]
fn second_eigenvalue_approaches_the_outer_neumann_value() {
    // Symmetric step: lambda_2 tends to the first Neumann eigenvalue of an outer
    // interval of length 0.5 - eta in the metric kappa0 g0.
    let eta = 0.125;
    let s = StepScene { d: 3, epsilon: 1e-6, eta, offset: 0.5, warp: None };
    let ev = sturm_liouville_neumann(&Profile1D::step(&s, 1024).unwrap(), 3).unwrap();
    let kappa0 = (1.0f64 / (1.0 - 2.0 * eta)).powf(2.0 / 3.0);
    let target = (PI / (0.5 - eta)).powi(2) / kappa0;
    assert!((ev.coarse[2] - target).abs() / target < 0.02, "{} vs {target}", ev.coarse[2]);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn fit_recovers_exact_power_laws(a in -2.0f64..2.0, c in 0.1f64..10.0) {
        let eps = [1e-1, 3e-2, 1e-2, 3e-3, 1e-3];
        let lam: Vec<f64> = eps.iter().map(|e: &f64| c * e.powf(a)).collect();
        let fit = scaling_fit(&eps, &lam).unwrap();
        prop_assert!((fit.slope - a).abs() < 1e-10);
        prop_assert!(fit.max_residual < 1e-10);
    }

    #[test]
    fn step_eigenvalue_grows_with_epsilon(e1 in 1e-4f64..1.0, e2 in 1e-4f64..1.0) {
        let (lo, hi) = if e1 < e2 { (e1, e2) } else { (e2, e1) };
        let l = |e| {
            let s = StepScene { d: 3, epsilon: e, eta: 0.125, offset: 0.5, warp: None };
            sturm_liouville_neumann(&Profile1D::step(&s, 128).unwrap(), 2).unwrap().coarse[1]
        };
        prop_assert!(l(lo) <= l(hi) * (1.0 + 1e-12));
    }
}
