use dumbbell::mesh::{build_box_grid, cell_gradient};
use dumbbell::metric::{CollarGeometry, Sigma};
use dumbbell::nodal::{extract_nodal_set, localization_report, nodal_domain_count, positive};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn random_field(n: usize, seed: u64, d: usize) -> (dumbbell::mesh::Mesh, Vec<f64>) {
    let mesh = build_box_grid(d, n, None).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let u = (0..mesh.num_vertices()).map(|_| rng.gen_range(-1.0..1.0)).collect();
    (mesh, u)
}

#[test]
fn affine_field_nodal_set_sits_at_its_root() {
    let mesh = build_box_grid(3, 10, None).unwrap();
    let geom = CollarGeometry::from_sigma(&mesh, &Sigma::Plane { offset: 0.5 }, 0.2).unwrap();
    let root = 0.037;
    let u: Vec<f64> = geom.rho.iter().map(|r| r - root).collect();
    let ns = extract_nodal_set(&mesh, &u);
    let loc = localization_report(&ns, &geom);
    assert_eq!(loc.components, 1);
    assert!((loc.max_abs_rho - root).abs() <= 0.1);
    assert!((ns.stats.total_area - 1.0).abs() < 1e-12);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn fragments_lie_in_their_cells_on_the_zero_set(seed in any::<u64>(), d in 2usize..4) {
        let (mesh, u) = random_field(4, seed, d);
        let ns = extract_nodal_set(&mesh, &u);
        for f in &ns.fragments {
            let cell = mesh.cell(f.cell);
            prop_assert!(cell.iter().any(|&v| positive(u[v])) && cell.iter().any(|&v| !positive(u[v])));
            for (&(a, b, t), val) in f.edges.iter().zip(f.sample(&u)) {
                prop_assert!(cell.contains(&a) && cell.contains(&b));
                prop_assert!((0.0..=1.0).contains(&t));
                prop_assert!(positive(u[a]) != positive(u[b]));
                prop_assert!(val.abs() <= 1e-12);
            }
        }
    }

    #[test]
    fn zero_set_is_sign_symmetric(seed in any::<u64>()) {
        let (mesh, u) = random_field(4, seed, 3);
        let neg: Vec<f64> = u.iter().map(|x| -x).collect();
        let (a, b) = (extract_nodal_set(&mesh, &u), extract_nodal_set(&mesh, &neg));
        let cells = |s: &dumbbell::nodal::NodalSet| s.fragments.iter().map(|f| f.cell).collect::<Vec<_>>();
        prop_assert_eq!(cells(&a), cells(&b));
        prop_assert_eq!(a.num_components, b.num_components);
        prop_assert!((a.stats.total_area - b.stats.total_area).abs() <= 1e-12 * a.stats.total_area.max(1.0));
    }

    #[test]
    fn domain_count_ignores_positive_rescaling(seed in any::<u64>(), c in 1e-3f64..1e3) {
        let (mesh, u) = random_field(5, seed, 2);
        let scaled: Vec<f64> = u.iter().map(|x| c * x).collect();
        prop_assert_eq!(nodal_domain_count(&mesh, &u), nodal_domain_count(&mesh, &scaled));
    }

    #[test]
    fn gradients_of_crossing_cells_are_positive(seed in any::<u64>()) {
        let (mesh, u) = random_field(3, seed, 3);
        for f in &extract_nodal_set(&mesh, &u).fragments {
            let vals: Vec<f64> = mesh.cell(f.cell).iter().map(|&v| u[v]).collect();
            prop_assert!(cell_gradient(&mesh, f.cell).unwrap().norm_sq(&vals) > 0.0);
        }
    }
}
