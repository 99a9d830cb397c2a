//! Zero sets of P1 fields: marching-simplex extraction, components,
//! localization, regularity, nodal domains and the single-crossing test.
//!
//! Exact zeros are read as positive, which is the limit of perturbing each
//! vertex value by `+1e-300 * (1 + id)`.

use std::fmt::Write as _;
use std::io::Write;

use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::mesh::{cell_gradient, Mesh, Point};
use crate::metric::CollarGeometry;
use crate::util::UnionFind;

#[inline]
pub fn positive(u: f64) -> bool {
    u >= 0.0
}

/// Crossing polygon of one cell. Points are in cyclic order; each lies on the
/// cell edge `(a, b)` at parameter `t` from `a`.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Fragment {
    pub cell: usize,
    pub points: Vec<Point>,
    pub edges: Vec<(usize, usize, f64)>,
}

impl Fragment {
    /// Interpolates a vertex field at the fragment points.
    pub fn sample<'a>(&'a self, field: &'a [f64]) -> impl Iterator<Item = f64> + 'a {
        self.edges.iter().map(move |&(a, b, t)| (1.0 - t) * field[a] + t * field[b])
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize)]
pub struct NodalStats {
    /// Area (length for `d = 2`) measured in the cell metrics.
    pub total_area: f64,
    pub min_gradient: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct NodalSet {
    pub fragments: Vec<Fragment>,
    /// Fragment pairs whose cells share a facet crossed by the zero set.
    pub adjacency: Vec<(usize, usize)>,
    pub components: Vec<usize>,
    pub num_components: usize,
    pub stats: NodalStats,
}

impl NodalSet {
    pub fn is_empty(&self) -> bool {
        self.fragments.is_empty()
    }

    /// `(min, max)` of a vertex field over all fragment points.
    pub fn field_range(&self, field: &[f64]) -> Option<(f64, f64)> {
        let mut range: Option<(f64, f64)> = None;
        for frag in &self.fragments {
            for v in frag.sample(field) {
                range = Some(match range {
                    None => (v, v),
                    Some((lo, hi)) => (lo.min(v), hi.max(v)),
                });
            }
        }
        range
    }
}

fn metric_dot(g: &[[f64; 3]; 3], a: &[f64; 3], b: &[f64; 3], d: usize) -> f64 {
    let mut s = 0.0;
    for i in 0..d {
        for j in 0..d {
            s += a[i] * g[i][j] * b[j];
        }
    }
    s
}

fn sub(a: &Point, b: &Point) -> [f64; 3] {
    [a[0] - b[0], a[1] - b[1], a[2] - b[2]]
}

fn fragment_measure(mesh: &Mesh, frag: &Fragment) -> f64 {
    let d = mesh.dim();
    let g = mesh.cell_metric(frag.cell);
    let p = &frag.points;
    if d == 2 {
        let e = sub(&p[1], &p[0]);
        return metric_dot(g, &e, &e, d).sqrt();
    }
    (1..p.len() - 1)
        .map(|k| {
            let a = sub(&p[k], &p[0]);
            let b = sub(&p[k + 1], &p[0]);
            let (aa, bb, ab) = (metric_dot(g, &a, &a, d), metric_dot(g, &b, &b, d), metric_dot(g, &a, &b, d));
            0.5 * (aa * bb - ab * ab).max(0.0).sqrt()
        })
        .sum()
}

fn cell_fragment(mesh: &Mesh, c: usize, u: &[f64]) -> Option<Fragment> {
    let cell = mesh.cell(c);
    let npos = cell.iter().filter(|&&v| positive(u[v])).count();
    if npos == 0 || npos == cell.len() {
        return None;
    }
    let pts = mesh.cell_points(c);
    let (pos, neg): (Vec<usize>, Vec<usize>) = (0..cell.len()).partition(|&i| positive(u[cell[i]]));
    // Cyclic edge order: a 2-2 split of a tetrahedron gives the quad p0n0, p0n1, p1n1, p1n0.
    let pairs: Vec<(usize, usize)> = match (pos.len(), neg.len()) {
        (2, 2) => vec![(pos[0], neg[0]), (pos[0], neg[1]), (pos[1], neg[1]), (pos[1], neg[0])],
        (1, _) => neg.iter().map(|&j| (pos[0], j)).collect(),
        _ => pos.iter().map(|&i| (i, neg[0])).collect(),
    };
    let mut points = Vec::with_capacity(pairs.len());
    let mut edges = Vec::with_capacity(pairs.len());
    for (i, j) in pairs {
        let (a, b) = (cell[i], cell[j]);
        let t = u[a] / (u[a] - u[b]);
        let mut p = [0.0; 3];
        for k in 0..3 {
            p[k] = (1.0 - t) * pts[i][k] + t * pts[j][k];
        }
        points.push(p);
        edges.push((a, b, t));
    }
    Some(Fragment { cell: c, points, edges })
}

/// Marching simplices on the P1 interpolant of `u`.
pub fn extract_nodal_set(mesh: &Mesh, u: &[f64]) -> NodalSet {
    let fragments: Vec<Fragment> = (0..mesh.num_cells())
        .into_par_iter()
        .filter_map(|c| cell_fragment(mesh, c, u))
        .collect();
    let mut index = vec![usize::MAX; mesh.num_cells()];
    for (k, f) in fragments.iter().enumerate() {
        index[f.cell] = k;
    }
    let mut adjacency = Vec::new();
    let mut uf = UnionFind::new(fragments.len());
    for (a, b) in mesh.cell_adjacency() {
        if index[a] == usize::MAX || index[b] == usize::MAX {
            continue;
        }
        let cb = mesh.cell(b);
        let shared: Vec<usize> = mesh.cell(a).iter().copied().filter(|v| cb.contains(v)).collect();
        let np = shared.iter().filter(|&&v| positive(u[v])).count();
        if np > 0 && np < shared.len() {
            adjacency.push((index[a], index[b]));
            uf.union(index[a], index[b]);
        }
    }
    let (components, num_components) = uf.labels();
    let measures: Vec<f64> = fragments.iter().map(|f| fragment_measure(mesh, f)).collect();
    let min_gradient = fragments
        .iter()
        .map(|f| gradient_norm(mesh, f.cell, u))
        .fold(f64::INFINITY, f64::min);
    NodalSet {
        stats: NodalStats {
            total_area: crate::util::pairwise_sum(&measures),
            min_gradient,
        },
        fragments,
        adjacency,
        components,
        num_components,
    }
}

fn gradient_norm(mesh: &Mesh, c: usize, u: &[f64]) -> f64 {
    let vals: Vec<f64> = mesh.cell(c).iter().map(|&v| u[v]).collect();
    match cell_gradient(mesh, c) {
        Ok(g) => g.norm_sq(&vals).sqrt(),
        Err(_) => 0.0,
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Localization {
    pub components: usize,
    /// `NaN` for an empty nodal set.
    pub max_abs_rho: f64,
    pub contained: bool,
}

pub fn localization_report(ns: &NodalSet, geom: &CollarGeometry) -> Localization {
    match ns.field_range(&geom.rho) {
        None => Localization {
            components: 0,
            max_abs_rho: f64::NAN,
            contained: true,
        },
        Some((lo, hi)) => {
            let m = lo.abs().max(hi.abs());
            Localization {
                components: ns.num_components,
                max_abs_rho: m,
                contained: m < geom.eta,
            }
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Regularity {
    /// `+inf` when the nodal set is empty.
    pub min_gradient: f64,
    pub empty: bool,
}

/// Smallest metric gradient norm of `u` over the crossing cells of `ns`.
pub fn regularity_min_gradient(mesh: &Mesh, u: &[f64], ns: &NodalSet) -> Regularity {
    let min_gradient = ns
        .fragments
        .iter()
        .map(|f| gradient_norm(mesh, f.cell, u))
        .fold(f64::INFINITY, f64::min);
    Regularity {
        min_gradient,
        empty: ns.is_empty(),
    }
}

/// Connected components of the vertex graph restricted to same-sign edges.
pub fn nodal_domain_count(mesh: &Mesh, u: &[f64]) -> usize {
    let mut uf = UnionFind::new(mesh.num_vertices());
    for (a, b) in mesh.edges() {
        if positive(u[a]) == positive(u[b]) {
            uf.union(a, b);
        }
    }
    uf.labels().1
}

/// True iff `u` changes sign exactly once along every grid line in the
/// `x1` direction. Requires a non-periodic grid mesh whose `rho` increases
/// along those lines.
pub fn single_crossing_check(mesh: &Mesh, u: &[f64], geom: &CollarGeometry) -> Result<bool> {
    let grid = match mesh.grid() {
        Some(g) if !mesh.is_periodic() => g,
        _ => return Err(Error::Unsupported("single-crossing check needs a box grid".into())),
    };
    let d = mesh.dim();
    let r = grid.resolution;
    let (n1, n2) = (r[1] + 1, if d == 3 { r[2] + 1 } else { 1 });
    let mut ok = true;
    for k in 0..n2 {
        for j in 0..n1 {
            let column: Vec<usize> = (0..=r[0]).map(|i| grid.vertex_index([i, j, k])).collect();
            if column.windows(2).any(|w| geom.rho[w[1]] <= geom.rho[w[0]]) {
                return Err(Error::Unsupported("grid lines are not transversal to the hypersurface".into()));
            }
            let changes = column.windows(2).filter(|w| positive(u[w[0]]) != positive(u[w[1]])).count();
            ok &= changes == 1;
        }
    }
    Ok(ok)
}

/// One polygon per line: vertex count, then coordinates.
pub fn format_polygon_soup(ns: &NodalSet, dim: usize) -> String {
    let mut out = String::new();
    for f in &ns.fragments {
        write!(out, "{}", f.points.len()).unwrap();
        for p in &f.points {
            for x in &p[..dim] {
                write!(out, " {x:?}").unwrap();
            }
        }
        out.push('\n');
    }
    out
}

pub fn write_polygon_soup(ns: &NodalSet, dim: usize, mut w: impl Write) -> Result<()> {
    w.write_all(format_polygon_soup(ns, dim).as_bytes())?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::build_box_grid;
    use crate::metric::Sigma;

    fn plane(mesh: &Mesh) -> Vec<f64> {
        mesh.vertices().iter().map(|p| p[0] - 0.5).collect()
    }

    #[test]
    fn plane_nodal_set() {
        let mesh = build_box_grid(3, 6, None).unwrap();
        let u = plane(&mesh);
        let ns = extract_nodal_set(&mesh, &u);
        assert_eq!(ns.num_components, 1);
        assert!((ns.stats.total_area - 1.0).abs() < 1e-10);
        let geom = CollarGeometry::from_sigma(&mesh, &Sigma::Plane { offset: 0.5 }, 1.0 / 6.0).unwrap();
        let loc = localization_report(&ns, &geom);
        assert_eq!(loc.components, 1);
        assert!(loc.max_abs_rho < 1e-14);
        assert!(loc.contained);
        let reg = regularity_min_gradient(&mesh, &u, &ns);
        assert!((reg.min_gradient - 1.0).abs() < 1e-12);
        assert_eq!(nodal_domain_count(&mesh, &u), 2);
        assert!(single_crossing_check(&mesh, &u, &geom).unwrap());
    }

    #[test]
    fn empty_and_positive_fields() {
        let mesh = build_box_grid(3, 3, None).unwrap();
        let u = vec![0.7; mesh.num_vertices()];
        let ns = extract_nodal_set(&mesh, &u);
        assert!(ns.is_empty());
        let geom = CollarGeometry::from_sigma(&mesh, &Sigma::Plane { offset: 0.5 }, 0.2).unwrap();
        let loc = localization_report(&ns, &geom);
        assert_eq!(loc.components, 0);
        assert!(loc.max_abs_rho.is_nan());
        assert!(loc.contained);
        let reg = regularity_min_gradient(&mesh, &u, &ns);
        assert!(reg.empty && reg.min_gradient.is_infinite());
        assert_eq!(nodal_domain_count(&mesh, &u), 1);
    }

    #[test]
    fn bubble_breaks_single_crossing() {
        let mesh = build_box_grid(3, 8, None).unwrap();
        let geom = CollarGeometry::from_sigma(&mesh, &Sigma::Plane { offset: 0.5 }, 0.125).unwrap();
        let u: Vec<f64> = mesh
            .vertices()
            .iter()
            .map(|p| {
                let r2 = (p[0] - 0.8).powi(2) + (p[1] - 0.5).powi(2) + (p[2] - 0.5).powi(2);
                p[0] - 0.5 - if r2 < 0.02 { 1.0 } else { 0.0 }
            })
            .collect();
        assert!(!single_crossing_check(&mesh, &u, &geom).unwrap());
        assert_eq!(nodal_domain_count(&mesh, &u), 3);
        assert_eq!(extract_nodal_set(&mesh, &u).num_components, 2);
    }

    #[test]
    fn tie_rule_reads_zero_as_positive() {
        let mesh = build_box_grid(2, 4, None).unwrap();
        let u: Vec<f64> = mesh.vertices().iter().map(|p| p[0] - 0.5).collect();
        // Vertices on x = 0.5 are exact zeros: the crossing moves to the next negative column.
        let ns = extract_nodal_set(&mesh, &u);
        assert_eq!(ns.num_components, 1);
        assert!(ns.field_range(&u).unwrap().1.abs() < 1e-15);
        assert_eq!(nodal_domain_count(&mesh, &u), 2);
    }

    #[test]
    fn polygon_soup_lines() {
        let mesh = build_box_grid(3, 2, None).unwrap();
        let u: Vec<f64> = mesh.vertices().iter().map(|p| p[0] - 0.3).collect();
        let ns = extract_nodal_set(&mesh, &u);
        let text = format_polygon_soup(&ns, 3);
        assert_eq!(text.lines().count(), ns.fragments.len());
        for line in text.lines() {
            let fields: Vec<&str> = line.split_whitespace().collect();
            let k: usize = fields[0].parse().unwrap();
            assert_eq!(fields.len(), 1 + 3 * k);
        }
    }

    #[test]
    fn periodic_field_has_two_loops() {
        let mesh = crate::mesh::build_periodic_grid_2d(8, 4, 1.0, 1.0).unwrap();
        let u: Vec<f64> = mesh.vertices().iter().map(|p| (2.0 * std::f64::consts::PI * (p[0] + 0.05)).cos()).collect();
        let ns = extract_nodal_set(&mesh, &u);
        assert_eq!(ns.num_components, 2);
        assert!((ns.stats.total_area - 2.0).abs() < 1e-12);
        assert_eq!(nodal_domain_count(&mesh, &u), 2);
    }
}
