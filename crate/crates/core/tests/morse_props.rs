use dumbbell::mesh::{build_box_grid, build_periodic_grid_2d};
use dumbbell::morse::{betti_bound_check, classify_critical_points, VertexClass};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use std::f64::consts::PI;

#[test]
fn cosine_product_counts_per_unit_cell() {
    for r in [16, 24, 32] {
        let mesh = build_periodic_grid_2d(2 * r, r, 2.0, 1.0).unwrap();
        let u: Vec<f64> = mesh.vertices().iter().map(|p| (2.0 * PI * p[0]).cos() * (2.0 * PI * p[1]).cos()).collect();
        let rep = classify_critical_points(&mesh, &u, None);
        assert_eq!((rep.minima(), rep.maxima(), rep.saddles()), (4, 4, 8), "resolution {r}");
        assert_eq!(rep.euler_characteristic(), mesh.euler_characteristic());
    }
}

#[test]
fn region_filter_excludes_outside_stars() {
    let mesh = build_box_grid(3, 6, None).unwrap();
    let u: Vec<f64> = mesh.vertices().iter().map(|p| (p[0] - 0.5).powi(2) + (p[1] - 0.5).powi(2) + (p[2] - 0.5).powi(2)).collect();
    let none = vec![false; mesh.num_cells()];
    let rep = classify_critical_points(&mesh, &u, Some(&none));
    assert!(rep.classes.iter().all(|c| *c == VertexClass::Excluded));
    assert!(!betti_bound_check(&rep, &[1]));
}

fn random_field(seed: u64) -> (dumbbell::mesh::Mesh, Vec<f64>) {
    let mesh = build_box_grid(3, 4, None).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let u = (0..mesh.num_vertices()).map(|_| rng.gen_range(-1.0..1.0)).collect();
    (mesh, u)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn monotone_reparameterization_is_invisible(seed in any::<u64>()) {
        let (mesh, u) = random_field(seed);
        let w: Vec<f64> = u.iter().map(|x| (3.0 * x).exp() + x.powi(3)).collect();
        prop_assert_eq!(classify_critical_points(&mesh, &u, None), classify_critical_points(&mesh, &w, None));
    }

    #[test]
    fn negation_swaps_extrema(seed in any::<u64>()) {
        let (mesh, u) = random_field(seed);
        let neg: Vec<f64> = u.iter().map(|x| -x).collect();
        let (a, b) = (classify_critical_points(&mesh, &u, None), classify_critical_points(&mesh, &neg, None));
        prop_assert_eq!(a.minima(), b.maxima());
        prop_assert_eq!(a.maxima(), b.minima());
        prop_assert_eq!(a.saddles(), b.saddles());
    }

    #[test]
    fn counts_match_classes(seed in any::<u64>()) {
        let (mesh, u) = random_field(seed);
        let rep = classify_critical_points(&mesh, &u, None);
        let nonregular = rep.classes.iter().filter(|c| !matches!(c, VertexClass::Regular | VertexClass::Excluded)).count();
        prop_assert_eq!(rep.critical_vertices, nonregular);
    }
}
