//! Signed distance to the separating hypersurface, the collar partition,
//! the volume-preserving constant `kappa`, and the conformal factors.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mesh::{Mesh, Point};
use crate::nodal;
use crate::util::{pairwise_sum, UnionFind};

/// Analytic level functions `phi` whose zero set is the hypersurface.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub enum LevelFunction {
    /// `|x - c| - r`
    Sphere { center: Point, radius: f64 },
    /// Torus around the axis parallel to the last coordinate through `center`:
    /// `sqrt((sqrt(x^2 + y^2) - major)^2 + z^2) - minor` in centered coordinates.
    Torus { center: Point, major: f64, minor: f64 },
}

impl LevelFunction {
    pub fn eval(&self, p: &Point) -> f64 {
        match self {
            LevelFunction::Sphere { center, radius } => {
                let r2: f64 = (0..3).map(|a| (p[a] - center[a]).powi(2)).sum();
                r2.sqrt() - radius
            }
            LevelFunction::Torus { center, major, minor } => {
                let (x, y, z) = (p[0] - center[0], p[1] - center[1], p[2] - center[2]);
                let ring = (x * x + y * y).sqrt() - major;
                (ring * ring + z * z).sqrt() - minor
            }
        }
    }
}

/// The separating hypersurface.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub enum Sigma {
    /// `{x1 = offset}`
    Plane { offset: f64 },
    Level(LevelFunction),
}

impl Sigma {
    pub fn eval(&self, p: &Point) -> f64 {
        match self {
            Sigma::Plane { offset } => p[0] - offset,
            Sigma::Level(f) => f.eval(p),
        }
    }
}

/// Signed distance to the hypersurface at every vertex.
///
/// Planes are exact. Level functions are triangulated on the mesh itself
/// (marching simplices on the P1 interpolant of `phi`) and each vertex takes
/// the Euclidean distance to the nearest facet, signed by `phi`.
pub fn signed_distance(mesh: &Mesh, sigma: &Sigma) -> Result<Vec<f64>> {
    match sigma {
        Sigma::Plane { offset } => Ok(mesh.vertices().iter().map(|p| p[0] - offset).collect()),
        Sigma::Level(level) => {
            let phi: Vec<f64> = mesh.vertices().iter().map(|p| level.eval(p)).collect();
            let zero_set = nodal::extract_nodal_set(mesh, &phi);
            if zero_set.fragments.is_empty() {
                return Err(Error::NotSeparating("level set does not meet the mesh".into()));
            }
            let mut simplices: Vec<[Point; 3]> = Vec::new();
            let mut segments: Vec<[Point; 2]> = Vec::new();
            for frag in &zero_set.fragments {
                let pts = &frag.points;
                if mesh.dim() == 2 {
                    segments.push([pts[0], pts[1]]);
                } else {
                    for k in 1..pts.len() - 1 {
                        simplices.push([pts[0], pts[k], pts[k + 1]]);
                    }
                }
            }
            let rho = mesh
                .vertices()
                .par_iter()
                .zip(phi.par_iter())
                .map(|(p, &f)| {
                    if f == 0.0 {
                        return 0.0;
                    }
                    let dist = if mesh.dim() == 2 {
                        segments
                            .iter()
                            .map(|s| point_segment_distance(p, &s[0], &s[1]))
                            .fold(f64::INFINITY, f64::min)
                    } else {
                        simplices
                            .iter()
                            .map(|t| point_triangle_distance(p, t))
                            .fold(f64::INFINITY, f64::min)
                    };
                    dist.copysign(f)
                })
                .collect();
            Ok(rho)
        }
    }
}

fn sub(a: &Point, b: &Point) -> Point {
    [a[0] - b[0], a[1] - b[1], a[2] - b[2]]
}

fn dot3(a: &Point, b: &Point) -> f64 {
    a[0] * b[0] + a[1] * b[1] + a[2] * b[2]
}

fn point_segment_distance(p: &Point, a: &Point, b: &Point) -> f64 {
    let ab = sub(b, a);
    let ap = sub(p, a);
    let len2 = dot3(&ab, &ab);
    let t = if len2 > 0.0 { (dot3(&ap, &ab) / len2).clamp(0.0, 1.0) } else { 0.0 };
    let q = [a[0] + t * ab[0], a[1] + t * ab[1], a[2] + t * ab[2]];
    dot3(&sub(p, &q), &sub(p, &q)).sqrt()
}

/// Distance from `p` to a triangle (closest-point by Voronoi regions).
pub fn point_triangle_distance(p: &Point, tri: &[Point; 3]) -> f64 {
    let [a, b, c] = tri;
    let ab = sub(b, a);
    let ac = sub(c, a);
    let ap = sub(p, a);
    let d1 = dot3(&ab, &ap);
    let d2 = dot3(&ac, &ap);
    let closest = |q: Point| dot3(&sub(p, &q), &sub(p, &q)).sqrt();
    if d1 <= 0.0 && d2 <= 0.0 {
        return closest(*a);
    }
    let bp = sub(p, b);
    let d3 = dot3(&ab, &bp);
    let d4 = dot3(&ac, &bp);
    if d3 >= 0.0 && d4 <= d3 {
        return closest(*b);
    }
    let vc = d1 * d4 - d3 * d2;
    if vc <= 0.0 && d1 >= 0.0 && d3 <= 0.0 {
        return point_segment_distance(p, a, b);
    }
    let cp = sub(p, c);
    let d5 = dot3(&ab, &cp);
    let d6 = dot3(&ac, &cp);
    if d6 >= 0.0 && d5 <= d6 {
        return closest(*c);
    }
    let vb = d5 * d2 - d1 * d6;
    if vb <= 0.0 && d2 >= 0.0 && d6 <= 0.0 {
        return point_segment_distance(p, a, c);
    }
    let va = d3 * d6 - d5 * d4;
    if va <= 0.0 && (d4 - d3) >= 0.0 && (d5 - d6) >= 0.0 {
        return point_segment_distance(p, b, c);
    }
    let denom = 1.0 / (va + vb + vc);
    let v = vb * denom;
    let w = vc * denom;
    closest([
        a[0] + ab[0] * v + ac[0] * w,
        a[1] + ab[1] * v + ac[1] * w,
        a[2] + ab[2] * v + ac[2] * w,
    ])
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Region {
    Collar,
    Plus,
    Minus,
}

/// Signed distance, collar width and the induced cell partition.
#[derive(Clone, Debug)]
pub struct CollarGeometry {
    pub dim: usize,
    pub rho: Vec<f64>,
    pub eta: f64,
    pub region: Vec<Region>,
    /// Barycentric `rho` per cell.
    pub cell_rho: Vec<f64>,
    /// `g0` volume per cell.
    pub cell_volume: Vec<f64>,
    pub vol_collar: f64,
    pub vol_plus: f64,
    pub vol_minus: f64,
    /// True when the collar boundary coincides with grid planes.
    pub grid_aligned: bool,
    /// Mesh spacing along `rho`, when known.
    pub spacing: Option<f64>,
}

impl CollarGeometry {
    /// Labels cells by barycentric `rho` and checks that both outer regions
    /// are nonempty and connected.
    pub fn new(mesh: &Mesh, rho: Vec<f64>, eta: f64) -> Result<CollarGeometry> {
        if !(eta > 0.0) {
            return Err(Error::invalid(format!("collar half-width {eta} must be positive")));
        }
        if rho.len() != mesh.num_vertices() {
            return Err(Error::invalid("rho must be vertex-indexed"));
        }
        let cell_rho: Vec<f64> = mesh
            .cells()
            .map(|cell| cell.iter().map(|&v| rho[v]).sum::<f64>() / cell.len() as f64)
            .collect();
        let region: Vec<Region> = cell_rho
            .iter()
            .map(|&r| {
                if r >= eta {
                    Region::Plus
                } else if r <= -eta {
                    Region::Minus
                } else {
                    Region::Collar
                }
            })
            .collect();
        let cell_volume = mesh.cell_volumes();
        let sum_region = |which: Region| {
            let vols: Vec<f64> = cell_volume
                .iter()
                .zip(&region)
                .map(|(&v, &r)| if r == which { v } else { 0.0 })
                .collect();
            pairwise_sum(&vols)
        };
        let geom = CollarGeometry {
            dim: mesh.dim(),
            vol_collar: sum_region(Region::Collar),
            vol_plus: sum_region(Region::Plus),
            vol_minus: sum_region(Region::Minus),
            rho,
            eta,
            region,
            cell_rho,
            cell_volume,
            grid_aligned: false,
            spacing: mesh.grid().map(|g| g.spacing[0]),
        };
        if geom.vol_collar <= 0.0 {
            return Err(Error::invalid(format!("collar of half-width {eta} contains no cell")));
        }
        for side in [Region::Plus, Region::Minus] {
            let comps = geom.region_components(mesh, side);
            if comps != 1 {
                return Err(Error::NotSeparating(format!(
                    "region {side:?} has {comps} connected components (expected 1)"
                )));
            }
        }
        Ok(geom)
    }

    /// Builds the geometry from a hypersurface descriptor. For box meshes cut by
    /// a grid plane, `eta` is snapped to the nearest positive multiple of the
    /// spacing so the collar boundary lies on mesh facets.
    pub fn from_sigma(mesh: &Mesh, sigma: &Sigma, eta: f64) -> Result<CollarGeometry> {
        let rho = signed_distance(mesh, sigma)?;
        let mut eta_used = eta;
        let mut aligned = false;
        if let (Some(grid), Sigma::Plane { offset }) = (mesh.grid(), sigma) {
            let h = grid.spacing[0];
            eta_used = (eta / h).round().max(1.0) * h;
            let k = offset / h;
            aligned = (k - k.round()).abs() < 1e-9;
        }
        let mut geom = CollarGeometry::new(mesh, rho, eta_used)?;
        geom.grid_aligned = aligned;
        Ok(geom)
    }

    pub fn vol_complement(&self) -> f64 {
        self.vol_plus + self.vol_minus
    }

    pub fn total_volume(&self) -> f64 {
        pairwise_sum(&self.cell_volume)
    }

    pub fn cells_in(&self, which: Region) -> Vec<usize> {
        (0..self.region.len()).filter(|&c| self.region[c] == which).collect()
    }

    fn region_components(&self, mesh: &Mesh, which: Region) -> usize {
        let cells = self.cells_in(which);
        if cells.is_empty() {
            return 0;
        }
        let mut local = vec![usize::MAX; self.region.len()];
        for (k, &c) in cells.iter().enumerate() {
            local[c] = k;
        }
        let mut uf = UnionFind::new(cells.len());
        for (a, b) in mesh.cell_adjacency() {
            if local[a] != usize::MAX && local[b] != usize::MAX {
                uf.union(local[a], local[b]);
            }
        }
        uf.labels().1
    }
}

fn check_volumes(vol_collar: f64, vol_complement: f64) -> Result<()> {
    if !(vol_collar > 0.0) || !(vol_complement > 0.0) {
        return Err(Error::invalid(format!(
            "volumes must be positive (collar {vol_collar}, complement {vol_complement})"
        )));
    }
    Ok(())
}

/// `kappa = (1 + (1 - eps^{d/2}) |collar| / |complement|)^{2/d}`.
pub fn kappa(epsilon: f64, vol_collar: f64, vol_complement: f64, d: usize) -> Result<f64> {
    if !(epsilon > 0.0 && epsilon <= 1.0) {
        return Err(Error::invalid(format!("epsilon {epsilon} not in (0, 1]")));
    }
    check_volumes(vol_collar, vol_complement)?;
    let half = d as f64 / 2.0;
    Ok((1.0 + (1.0 - epsilon.powf(half)) * vol_collar / vol_complement).powf(1.0 / half))
}

/// `kappa` at `eps = 0`.
pub fn kappa0(vol_collar: f64, vol_complement: f64, d: usize) -> Result<f64> {
    check_volumes(vol_collar, vol_complement)?;
    let half = d as f64 / 2.0;
    Ok((1.0 + vol_collar / vol_complement).powf(1.0 / half))
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase", tag = "kind")]
pub enum Profile {
    Step,
    /// Quintic smoothstep over `|rho| in [eta - 1/n, eta]`.
    Mollified { n: f64 },
}

/// Per-cell conformal factor `f` with `g = f g0`.
#[derive(Clone, Debug, Serialize)]
pub struct ConformalField {
    pub epsilon: f64,
    pub kappa: f64,
    pub profile: Profile,
    pub f: Vec<f64>,
}

impl ConformalField {
    /// Uniform factor (the reference metric itself when `value == 1`).
    pub fn uniform(num_cells: usize, value: f64) -> ConformalField {
        ConformalField {
            epsilon: value,
            kappa: value,
            profile: Profile::Step,
            f: vec![value; num_cells],
        }
    }

    /// `c f`, e.g. the constant volume-restoring factor of a mollified metric.
    pub fn scaled(&self, c: f64) -> ConformalField {
        ConformalField {
            f: self.f.iter().map(|x| c * x).collect(),
            ..self.clone()
        }
    }
}

/// `t^3 (10 - 15 t + 6 t^2)` clamped to `[0, 1]`: C^2 and monotone.
pub fn smoothstep(t: f64) -> f64 {
    let t = t.clamp(0.0, 1.0);
    t * t * t * (10.0 - 15.0 * t + 6.0 * t * t)
}

pub fn build_conformal_field(geom: &CollarGeometry, epsilon: f64, profile: Profile) -> Result<ConformalField> {
    if !(epsilon > 0.0) {
        return Err(Error::invalid(format!("epsilon {epsilon} must be positive")));
    }
    let kappa = kappa(epsilon, geom.vol_collar, geom.vol_complement(), geom.dim)?;
    let eta = geom.eta;
    let f = match profile {
        Profile::Step => geom
            .region
            .iter()
            .map(|&r| if r == Region::Collar { epsilon } else { kappa })
            .collect(),
        Profile::Mollified { n } => {
            if !(n > 0.0) {
                return Err(Error::invalid(format!("mollifier index n = {n} must be positive")));
            }
            let width = 1.0 / n;
            if let Some(h) = geom.spacing {
                if width < h * (1.0 - 1e-12) {
                    log::warn!("transition width {width} is below the mesh spacing {h}");
                }
            }
            geom.cell_rho
                .iter()
                .map(|&r| {
                    let a = r.abs();
                    if a >= eta {
                        kappa
                    } else {
                        epsilon + (kappa - epsilon) * smoothstep((a - (eta - width)) / width)
                    }
                })
                .collect()
        }
    };
    Ok(ConformalField {
        epsilon,
        kappa,
        profile,
        f,
    })
}

fn conformal_volume(field: &ConformalField, geom: &CollarGeometry) -> f64 {
    let half = geom.dim as f64 / 2.0;
    let vols: Vec<f64> = field
        .f
        .iter()
        .zip(&geom.cell_volume)
        .map(|(f, v)| f.powf(half) * v)
        .collect();
    pairwise_sum(&vols)
}

/// `|Vol(f g0) - Vol(g0)| / Vol(g0)` over the discrete cells.
pub fn verify_volume_preservation(field: &ConformalField, geom: &CollarGeometry) -> f64 {
    let v0 = geom.total_volume();
    (conformal_volume(field, geom) - v0).abs() / v0
}

/// Constant `gamma` with `Vol(gamma f g0) = Vol(g0)`.
pub fn volume_rescaling(field: &ConformalField, geom: &CollarGeometry) -> f64 {
    (geom.total_volume() / conformal_volume(field, geom)).powf(2.0 / geom.dim as f64)
}
