//! Conformally weighted P1 stiffness and mass operators, Dirichlet
//! restriction, and subdomain Neumann operators.
//!
//! With `g = f g0` in dimension `d`, the Dirichlet energy density scales by
//! `f^{d/2-1}` and the volume element by `f^{d/2}`, so
//! `v^T K v / v^T M v` is the discrete Rayleigh quotient of `g`.

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::mesh::{cell_gradient, Mesh};
use crate::metric::{CollarGeometry, ConformalField, Region};
use crate::sparse::{CsrMatrix, LdlFactor};

#[derive(Clone, Debug)]
pub struct OperatorPair {
    pub k: CsrMatrix,
    pub m: CsrMatrix,
    /// Mesh vertex of each local degree of freedom.
    pub dofs: Vec<usize>,
}

impl OperatorPair {
    pub fn len(&self) -> usize {
        self.dofs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.dofs.is_empty()
    }

    /// `M 1`, the mass carried by each degree of freedom.
    pub fn mass_weights(&self) -> Vec<f64> {
        self.m.row_sums()
    }

    pub fn total_mass(&self) -> f64 {
        self.mass_weights().iter().sum()
    }

    /// Scatters a local vector onto a mesh-vertex field (zero elsewhere).
    pub fn to_vertex_field(&self, local: &[f64], num_vertices: usize) -> Vec<f64> {
        let mut out = vec![0.0; num_vertices];
        for (&v, &x) in self.dofs.iter().zip(local) {
            out[v] = x;
        }
        out
    }

    /// Gathers a mesh-vertex field onto the local degrees of freedom.
    pub fn from_vertex_field(&self, field: &[f64]) -> Vec<f64> {
        self.dofs.iter().map(|&v| field[v]).collect()
    }
}

type LocalMatrices = (Vec<usize>, [[f64; 4]; 4], [[f64; 4]; 4]);

/// Assembles over the listed cells with per-cell stiffness and mass weights.
/// Degrees of freedom are the vertices touched by those cells, in increasing order.
pub fn assemble_weighted(
    mesh: &Mesh,
    cells: &[usize],
    stiffness_weight: &[f64],
    mass_weight: &[f64],
) -> Result<OperatorPair> {
    let d = mesh.dim();
    let nloc = d + 1;
    let mass_diag = 2.0 / ((d + 1) * (d + 2)) as f64;
    let mass_off = 1.0 / ((d + 1) * (d + 2)) as f64;

    let locals: Vec<LocalMatrices> = cells
        .par_iter()
        .enumerate()
        .map(|(k, &c)| {
            let g = cell_gradient(mesh, c)?;
            let mut ke = [[0.0; 4]; 4];
            let mut me = [[0.0; 4]; 4];
            for i in 0..nloc {
                for j in 0..nloc {
                    ke[i][j] = stiffness_weight[k] * g.volume * g.stiffness(i, j);
                    me[i][j] = mass_weight[k] * g.volume * if i == j { mass_diag } else { mass_off };
                }
            }
            Ok((mesh.cell(c).to_vec(), ke, me))
        })
        .collect::<Result<_>>()?;

    let mut local_index = vec![usize::MAX; mesh.num_vertices()];
    for &c in cells {
        for &v in mesh.cell(c) {
            local_index[v] = 0;
        }
    }
    let mut dofs = Vec::new();
    for (v, slot) in local_index.iter_mut().enumerate() {
        if *slot == 0 {
            *slot = dofs.len();
            dofs.push(v);
        }
    }
    let mut kt = Vec::with_capacity(locals.len() * nloc * nloc);
    let mut mt = Vec::with_capacity(locals.len() * nloc * nloc);
    for (verts, ke, me) in &locals {
        for i in 0..nloc {
            for j in 0..nloc {
                let (a, b) = (local_index[verts[i]], local_index[verts[j]]);
                kt.push((a, b, ke[i][j]));
                mt.push((a, b, me[i][j]));
            }
        }
    }
    let n = dofs.len();
    Ok(OperatorPair {
        k: CsrMatrix::from_triplets(n, kt),
        m: CsrMatrix::from_triplets(n, mt),
        dofs,
    })
}

/// Full-mesh operators for the metric `f g0`.
pub fn assemble(mesh: &Mesh, field: &ConformalField) -> Result<OperatorPair> {
    if field.f.len() != mesh.num_cells() {
        return Err(Error::invalid("conformal field must be cell-indexed"));
    }
    if let Some(bad) = field.f.iter().position(|&f| !(f > 0.0)) {
        return Err(Error::invalid(format!("conformal factor not positive in cell {bad}")));
    }
    let half = mesh.dim() as f64 / 2.0;
    let sw: Vec<f64> = field.f.iter().map(|f| f.powf(half - 1.0)).collect();
    let mw: Vec<f64> = field.f.iter().map(|f| f.powf(half)).collect();
    let cells: Vec<usize> = (0..mesh.num_cells()).collect();
    assemble_weighted(mesh, &cells, &sw, &mw)
}

/// Reference-metric (`f = 1`) operators over a subset of cells.
pub fn assemble_reference_on(mesh: &Mesh, cells: &[usize]) -> Result<OperatorPair> {
    let ones = vec![1.0; cells.len()];
    assemble_weighted(mesh, cells, &ones, &ones)
}

/// Reduced SPD system `K_II x = -K_IB g` and the data needed to lift its solution.
#[derive(Clone, Debug)]
pub struct DirichletSystem {
    pub reduced: CsrMatrix,
    pub rhs: Vec<f64>,
    /// Local indices of the free unknowns.
    pub interior: Vec<usize>,
    /// Local indices carrying prescribed values.
    pub boundary: Vec<usize>,
    pub values: Vec<f64>,
    n: usize,
}

impl DirichletSystem {
    /// Solves the reduced system and returns the full local vector.
    pub fn solve(&self) -> Result<Vec<f64>> {
        let fac = LdlFactor::factor(&self.reduced)
            .map_err(|_| Error::Singular("reduced stiffness has a zero pivot (interior component without boundary)".into()))?;
        if fac.negative_pivots() > 0 {
            return Err(Error::Singular("reduced stiffness is not positive definite".into()));
        }
        let x = fac.solve(&self.rhs);
        Ok(self.lift(&x))
    }

    pub fn lift(&self, interior_values: &[f64]) -> Vec<f64> {
        let mut full = vec![0.0; self.n];
        for (&i, &x) in self.interior.iter().zip(interior_values) {
            full[i] = x;
        }
        for (&b, &g) in self.boundary.iter().zip(&self.values) {
            full[b] = g;
        }
        full
    }
}

/// Eliminates prescribed values on `boundary` (local dof indices).
pub fn restrict_dirichlet(pair: &OperatorPair, boundary: &[usize], values: &[f64]) -> Result<DirichletSystem> {
    let n = pair.len();
    if boundary.len() != values.len() {
        return Err(Error::invalid("boundary and value lists differ in length"));
    }
    let mut is_bnd = vec![false; n];
    for &b in boundary {
        if b >= n {
            return Err(Error::invalid(format!("boundary dof {b} out of range")));
        }
        is_bnd[b] = true;
    }
    let interior: Vec<usize> = (0..n).filter(|&i| !is_bnd[i]).collect();
    if interior.is_empty() {
        return Err(Error::invalid("every degree of freedom is constrained"));
    }
    let mut g = vec![0.0; n];
    for (&b, &v) in boundary.iter().zip(values) {
        g[b] = v;
    }
    let kg = pair.k.matvec(&g);
    let rhs = interior.iter().map(|&i| -kg[i]).collect();
    Ok(DirichletSystem {
        reduced: pair.k.principal_submatrix(&interior),
        rhs,
        interior,
        boundary: boundary.to_vec(),
        values: values.to_vec(),
        n,
    })
}

/// Reference-metric Neumann operators on one outer region.
pub fn subdomain_neumann(mesh: &Mesh, geom: &CollarGeometry, side: Region) -> Result<OperatorPair> {
    if side == Region::Collar {
        return Err(Error::invalid("subdomain_neumann expects the plus or minus region"));
    }
    let cells = geom.cells_in(side);
    if cells.is_empty() {
        return Err(Error::invalid(format!("region {side:?} is empty")));
    }
    assemble_reference_on(mesh, &cells)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::build_box_grid;
    use crate::metric::{build_conformal_field, Profile, Sigma};
    use crate::util::sup_norm;
    use rand::{Rng, SeedableRng};

    fn setup(n: usize, eps: f64) -> (Mesh, CollarGeometry, ConformalField, OperatorPair) {
        let mesh = build_box_grid(3, n, None).unwrap();
        let geom = CollarGeometry::from_sigma(&mesh, &Sigma::Plane { offset: 0.5 }, 0.125).unwrap();
        let field = build_conformal_field(&geom, eps, Profile::Step).unwrap();
        let pair = assemble(&mesh, &field).unwrap();
        (mesh, geom, field, pair)
    }

    #[test]
    fn constants_are_in_the_kernel_and_mass_is_volume() {
        let (_, _, _, pair) = setup(4, 1.0);
        let ones = vec![1.0; pair.len()];
        assert!(sup_norm(&pair.k.matvec(&ones)) < 1e-13);
        assert!((pair.m.bilinear(&ones, &ones) - 1.0).abs() < 1e-13);
        assert!(pair.mass_weights().iter().all(|&w| w > 0.0));
        assert!(pair.k.asymmetry() < 1e-14 && pair.m.asymmetry() < 1e-14);
    }

    #[test]
    fn weighted_mass_matches_conformal_volume() {
        let (_, geom, field, pair) = setup(8, 0.01);
        let expected: f64 = field.f.iter().zip(&geom.cell_volume).map(|(f, v)| f.powf(1.5) * v).sum();
        assert!((pair.total_mass() - expected).abs() < 1e-12);
    }

    #[test]
    fn quotient_matches_direct_integration() {
        let (mesh, _, field, pair) = setup(4, 0.1);
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(3);
        let v: Vec<f64> = (0..pair.len()).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let mut energy = 0.0;
        for c in 0..mesh.num_cells() {
            let g = cell_gradient(&mesh, c).unwrap();
            let vals: Vec<f64> = mesh.cell(c).iter().map(|&i| v[i]).collect();
            energy += field.f[c].powf(0.5) * g.volume * g.norm_sq(&vals);
        }
        assert!((pair.k.bilinear(&v, &v) - energy).abs() < 1e-12 * energy.max(1.0));
    }

    #[test]
    fn scaling_covariance() {
        let (mesh, _, field, pair) = setup(4, 0.1);
        let scaled = assemble(&mesh, &field.scaled(4.0)).unwrap();
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(7);
        let v: Vec<f64> = (0..pair.len()).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let (k0, k1) = (pair.k.bilinear(&v, &v), scaled.k.bilinear(&v, &v));
        let (m0, m1) = (pair.m.bilinear(&v, &v), scaled.m.bilinear(&v, &v));
        assert!((k1 / k0 - 2.0).abs() < 1e-12);
        assert!((m1 / m0 - 8.0).abs() < 1e-12);
    }

    #[test]
    fn collar_test_function_energy_lives_in_the_collar() {
        let (mesh, geom, field, pair) = setup(8, 0.1);
        let u: Vec<f64> = geom.rho.iter().map(|r| 1.0 - (r.clamp(-0.125, 0.125) + 0.125)).collect();
        let mut outside = 0.0;
        for c in 0..mesh.num_cells() {
            let g = cell_gradient(&mesh, c).unwrap();
            let vals: Vec<f64> = mesh.cell(c).iter().map(|&i| u[i]).collect();
            if geom.region[c] != Region::Collar {
                outside += field.f[c].powf(0.5) * g.volume * g.norm_sq(&vals);
            }
        }
        assert!(outside.abs() < 1e-20);
        let total = pair.k.bilinear(&u, &u);
        // |du|^2 = 1 on the collar, weight eps^{1/2}
        assert!((total - 0.1f64.sqrt() * 0.25).abs() < 1e-12);
    }

    #[test]
    fn dirichlet_constant_and_affine_data() {
        let mesh = build_box_grid(3, 8, None).unwrap();
        let geom = CollarGeometry::from_sigma(&mesh, &Sigma::Plane { offset: 0.5 }, 0.25).unwrap();
        let collar = assemble_reference_on(&mesh, &geom.cells_in(Region::Collar)).unwrap();
        let mut bnd = Vec::new();
        let mut vals = Vec::new();
        for (i, &v) in collar.dofs.iter().enumerate() {
            let r = geom.rho[v];
            if r.abs() >= geom.eta - 1e-12 {
                bnd.push(i);
                vals.push(if r > 0.0 { 2.0 } else { -1.0 });
            }
        }
        let sys = restrict_dirichlet(&collar, &bnd, &vals).unwrap();
        let h = sys.solve().unwrap();
        for (i, &v) in collar.dofs.iter().enumerate() {
            let r = geom.rho[v];
            let exact = 0.5 + 1.5 * r / geom.eta;
            assert!((h[i] - exact).abs() < 1e-10);
        }
        let resid = collar.k.matvec(&h);
        for &i in &sys.interior {
            assert!(resid[i].abs() < 1e-10);
        }
        let sys = restrict_dirichlet(&collar, &bnd, &vec![3.0; bnd.len()]).unwrap();
        assert!(sys.solve().unwrap().iter().all(|x| (x - 3.0).abs() < 1e-12));
        let all: Vec<usize> = (0..collar.len()).collect();
        assert!(restrict_dirichlet(&collar, &all, &vec![0.0; all.len()]).is_err());
    }

    #[test]
    fn floating_component_is_singular() {
        let mesh = build_box_grid(2, 4, None).unwrap();
        let pair = assemble_reference_on(&mesh, &(0..mesh.num_cells()).collect::<Vec<_>>()).unwrap();
        let sys = restrict_dirichlet(&pair, &[], &[]).unwrap();
        assert!(matches!(sys.solve(), Err(Error::Singular(_))));
    }
}
