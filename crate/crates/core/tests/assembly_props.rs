use dumbbell::assembly::{assemble, restrict_dirichlet, subdomain_neumann};
use dumbbell::mesh::build_box_grid;
use dumbbell::metric::{build_conformal_field, CollarGeometry, ConformalField, Profile, Region, Sigma};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

#[test]
fn constants_span_the_null_space() {
    let mesh = build_box_grid(3, 4, None).unwrap();
    let pair = assemble(&mesh, &ConformalField::uniform(mesh.num_cells(), 1.0)).unwrap();
    let k1 = pair.k.matvec(&vec![1.0; pair.len()]);
    assert!(k1.iter().all(|x| x.abs() < 1e-13));
    assert!((pair.total_mass() - 1.0).abs() < 1e-13);
    assert!(pair.m.row_sums().iter().all(|&s| s > 0.0));
}

#[test]
fn dirichlet_lift_of_constant_data_is_constant() {
    let mesh = build_box_grid(2, 6, None).unwrap();
    let pair = assemble(&mesh, &ConformalField::uniform(mesh.num_cells(), 1.0)).unwrap();
    let boundary: Vec<usize> = mesh.boundary_vertex_mask().iter().enumerate().filter(|(_, &b)| b).map(|(i, _)| i).collect();
    let values = vec![2.5; boundary.len()];
    let sys = restrict_dirichlet(&pair, &boundary, &values).unwrap();
    assert!(sys.solve().unwrap().iter().all(|x| (x - 2.5).abs() < 1e-12));
}

#[test]
fn subdomain_neumann_mirror_symmetry() {
    let mesh = build_box_grid(3, 6, None).unwrap();
    let geom = CollarGeometry::from_sigma(&mesh, &Sigma::Plane { offset: 0.5 }, 1.0 / 6.0).unwrap();
    let p = subdomain_neumann(&mesh, &geom, Region::Plus).unwrap();
    let m = subdomain_neumann(&mesh, &geom, Region::Minus).unwrap();
    assert_eq!(p.len(), m.len());
    assert!((p.total_mass() - m.total_mass()).abs() < 1e-14);
    assert!(p.k.matvec(&vec![1.0; p.len()]).iter().all(|x| x.abs() < 1e-13));
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn operators_are_symmetric(eps in 1e-4f64..1.0, seed in any::<u64>()) {
        let mesh = build_box_grid(3, 4, None).unwrap();
        let geom = CollarGeometry::from_sigma(&mesh, &Sigma::Plane { offset: 0.5 }, 0.25).unwrap();
        let pair = assemble(&mesh, &build_conformal_field(&geom, eps, Profile::Step).unwrap()).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let x: Vec<f64> = (0..pair.len()).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let y: Vec<f64> = (0..pair.len()).map(|_| rng.gen_range(-1.0..1.0)).collect();
        for a in [&pair.k, &pair.m] {
            let (xy, yx) = (a.bilinear(&x, &y), a.bilinear(&y, &x));
            prop_assert!((xy - yx).abs() <= 1e-14 * a.max_abs() * pair.len() as f64);
        }
        prop_assert!(pair.k.bilinear(&x, &x) >= -1e-12);
        prop_assert!(pair.m.bilinear(&x, &x) > 0.0);
    }

    #[test]
    fn scaling_covariance(c in 0.1f64..10.0) {
        let mesh = build_box_grid(3, 4, None).unwrap();
        let geom = CollarGeometry::from_sigma(&mesh, &Sigma::Plane { offset: 0.5 }, 0.25).unwrap();
        let f = build_conformal_field(&geom, 0.01, Profile::Step).unwrap();
        let a = assemble(&mesh, &f).unwrap();
        let b = assemble(&mesh, &f.scaled(c)).unwrap();
        let x: Vec<f64> = mesh.vertices().iter().map(|p| (3.0 * p[0]).sin() + p[1] * p[2]).collect();
        let (ka, kb) = (a.k.bilinear(&x, &x), b.k.bilinear(&x, &x));
        let (ma, mb) = (a.m.bilinear(&x, &x), b.m.bilinear(&x, &x));
        prop_assert!((kb / ka - c.sqrt()).abs() < 1e-12 * c.sqrt());
        prop_assert!((mb / ma - c.powf(1.5)).abs() < 1e-12 * c.powf(1.5));
    }
}
