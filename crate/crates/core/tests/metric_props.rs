use dumbbell::mesh::build_box_grid;
use dumbbell::metric::{
    build_conformal_field, kappa, verify_volume_preservation, CollarGeometry, Profile, Region, Sigma,
};
use proptest::prelude::*;

fn geometry(n: usize, offset_cells: usize, eta_cells: usize) -> CollarGeometry {
    let mesh = build_box_grid(3, n, None).unwrap();
    let h = 1.0 / n as f64;
    CollarGeometry::from_sigma(&mesh, &Sigma::Plane { offset: offset_cells as f64 * h }, eta_cells as f64 * h).unwrap()
}

#[test]
fn unit_epsilon_gives_unit_kappa() {
    assert_eq!(kappa(1.0, 0.3, 0.7, 3).unwrap(), 1.0);
}

#[test]
fn regions_partition_the_volume() {
    let g = geometry(8, 4, 1);
    let total = g.vol_collar + g.vol_plus + g.vol_minus;
    assert!((total - g.total_volume()).abs() < 1e-15);
    let mesh = build_box_grid(3, 8, None).unwrap();
    let again = CollarGeometry::new(&mesh, g.rho.clone(), g.eta).unwrap();
    assert_eq!(again.region, g.region);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn kappa_is_nonincreasing(e1 in 1e-6f64..1.0, e2 in 1e-6f64..1.0, vc in 0.01f64..0.9) {
        let (lo, hi) = if e1 < e2 { (e1, e2) } else { (e2, e1) };
        for d in [2, 3] {
            prop_assert!(kappa(lo, vc, 1.0 - vc, d).unwrap() >= kappa(hi, vc, 1.0 - vc, d).unwrap());
        }
    }

    #[test]
    fn step_volume_identity(eps in 1e-5f64..1.0, offset in 3usize..6, eta in 1usize..3) {
        let g = geometry(8, offset, eta);
        let f = build_conformal_field(&g, eps, Profile::Step).unwrap();
        prop_assert!(verify_volume_preservation(&f, &g) <= 1e-12);
        let mut values = f.f.clone();
        values.sort_by(f64::total_cmp);
        values.dedup();
        prop_assert_eq!(values.len(), if eps == f.kappa { 1 } else { 2 });
    }

    #[test]
    fn mollified_field_is_bracketed(eps in 1e-4f64..0.5, n in 8.0f64..64.0) {
        let g = geometry(16, 8, 3);
        let f = build_conformal_field(&g, eps, Profile::Mollified { n }).unwrap();
        let width = 1.0 / n;
        for ((&v, &rho), &r) in f.f.iter().zip(&g.cell_rho).zip(&g.region) {
            prop_assert!(v >= eps - 1e-15 && v <= f.kappa.max(eps) + 1e-15);
            if r != Region::Collar {
                prop_assert_eq!(v, f.kappa);
            }
            if rho.abs() <= g.eta - width {
                prop_assert_eq!(v, eps);
            }
        }
    }
}
