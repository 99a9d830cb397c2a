//! Lower-star critical points of vertex fields and Betti lower bounds.
//!
//! Vertex values are ordered by `(value, vertex id)`, so ties never occur.

use rayon::prelude::*;
use serde::Serialize;

use crate::mesh::Mesh;
use crate::util::UnionFind;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum VertexClass {
    /// Boundary vertex or outside the region filter.
    Excluded,
    Regular,
    Minimum,
    Maximum,
    /// Lower and upper link component counts.
    Saddle { lower: usize, upper: usize },
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct CriticalReport {
    pub dim: usize,
    pub classes: Vec<VertexClass>,
    /// `counts[i]`: critical points of index `i`, saddles with multiplicity.
    pub counts: Vec<usize>,
    pub critical_vertices: usize,
    pub region_filtered: bool,
}

impl CriticalReport {
    pub fn minima(&self) -> usize {
        self.counts[0]
    }

    pub fn maxima(&self) -> usize {
        self.counts[self.dim]
    }

    pub fn saddles(&self) -> usize {
        self.counts[1..self.dim].iter().sum()
    }

    /// Alternating sum of the index counts.
    pub fn euler_characteristic(&self) -> i64 {
        self.counts
            .iter()
            .enumerate()
            .map(|(i, &c)| if i % 2 == 0 { c as i64 } else { -(c as i64) })
            .sum()
    }
}

#[inline]
fn below(u: &[f64], a: usize, b: usize) -> bool {
    u[a] < u[b] || (u[a] == u[b] && a < b)
}

fn link_components(mesh: &Mesh, v: usize, star: &[usize], u: &[f64]) -> (usize, usize) {
    let mut link: Vec<usize> = star.iter().flat_map(|&c| mesh.cell(c).iter().copied()).filter(|&w| w != v).collect();
    link.sort_unstable();
    link.dedup();
    let pos = |w: usize| link.binary_search(&w).unwrap();
    let mut lower = UnionFind::new(link.len());
    let mut upper = UnionFind::new(link.len());
    for &c in star {
        let others: Vec<usize> = mesh.cell(c).iter().copied().filter(|&w| w != v).collect();
        for i in 0..others.len() {
            for j in i + 1..others.len() {
                let (a, b) = (others[i], others[j]);
                match (below(u, a, v), below(u, b, v)) {
                    (true, true) => {
                        lower.union(pos(a), pos(b));
                    }
                    (false, false) => {
                        upper.union(pos(a), pos(b));
                    }
                    _ => {}
                }
            }
        }
    }
    let mut roots_lo = Vec::new();
    let mut roots_up = Vec::new();
    for (k, &w) in link.iter().enumerate() {
        if below(u, w, v) {
            roots_lo.push(lower.find(k));
        } else {
            roots_up.push(upper.find(k));
        }
    }
    roots_lo.sort_unstable();
    roots_lo.dedup();
    roots_up.sort_unstable();
    roots_up.dedup();
    (roots_lo.len(), roots_up.len())
}

/// Classifies interior vertices. With a cell filter, a vertex is considered
/// only when every cell of its star passes the filter.
pub fn classify_critical_points(mesh: &Mesh, u: &[f64], region: Option<&[bool]>) -> CriticalReport {
    let d = mesh.dim();
    let stars = mesh.vertex_cells();
    let boundary = mesh.boundary_vertex_mask();
    let classes: Vec<VertexClass> = (0..mesh.num_vertices())
        .into_par_iter()
        .map(|v| {
            if boundary[v] {
                return VertexClass::Excluded;
            }
            if let Some(keep) = region {
                if !stars[v].iter().all(|&c| keep[c]) {
                    return VertexClass::Excluded;
                }
            }
            match link_components(mesh, v, &stars[v], u) {
                (0, _) => VertexClass::Minimum,
                (_, 0) => VertexClass::Maximum,
                (1, 1) => VertexClass::Regular,
                (lower, upper) => VertexClass::Saddle { lower, upper },
            }
        })
        .collect();
    let mut counts = vec![0; d + 1];
    let mut critical_vertices = 0;
    for c in &classes {
        match *c {
            VertexClass::Minimum => counts[0] += 1,
            VertexClass::Maximum => counts[d] += 1,
            VertexClass::Saddle { lower, upper } => {
                if d == 2 {
                    counts[1] += lower - 1;
                } else {
                    counts[1] += lower - 1;
                    counts[d - 1] += upper - 1;
                }
            }
            _ => continue,
        }
        critical_vertices += 1;
    }
    CriticalReport {
        dim: d,
        classes,
        counts,
        critical_vertices,
        region_filtered: region.is_some(),
    }
}

/// True iff the count of every listed index reaches the given Betti number.
pub fn betti_bound_check(report: &CriticalReport, betti: &[usize]) -> bool {
    betti
        .iter()
        .enumerate()
        .all(|(i, &b)| report.counts.get(i).copied().unwrap_or(0) >= b)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::{build_box_grid, build_periodic_grid_2d};
    use std::f64::consts::PI;

    #[test]
    fn monotone_field_has_no_interior_critical_points() {
        let mesh = build_box_grid(3, 5, None).unwrap();
        let u: Vec<f64> = mesh.vertices().iter().map(|p| p[0]).collect();
        let r = classify_critical_points(&mesh, &u, None);
        assert_eq!(r.counts, vec![0, 0, 0, 0]);
    }

    #[test]
    fn convex_bowl() {
        let mesh = build_box_grid(3, 6, None).unwrap();
        let u: Vec<f64> = mesh
            .vertices()
            .iter()
            .map(|p| (p[0] - 0.5).powi(2) + (p[1] - 0.5).powi(2) + (p[2] - 0.5).powi(2))
            .collect();
        let r = classify_critical_points(&mesh, &u, None);
        assert_eq!(r.counts, vec![1, 0, 0, 0]);
        assert!(betti_bound_check(&r, &[1, 0, 0]));
        assert!(!betti_bound_check(&r, &[1, 1, 0]));
    }

    #[test]
    fn cosine_product_on_torus() {
        let mesh = build_periodic_grid_2d(32, 32, 1.0, 1.0).unwrap();
        let u: Vec<f64> = mesh
            .vertices()
            .iter()
            .map(|p| (2.0 * PI * p[0]).cos() * (2.0 * PI * p[1]).cos())
            .collect();
        let r = classify_critical_points(&mesh, &u, None);
        assert_eq!(r.euler_characteristic(), 0);
        assert_eq!((r.minima(), r.maxima(), r.saddles()), (2, 2, 4));
    }

    #[test]
    fn negation_swaps_extrema() {
        let mesh = build_periodic_grid_2d(16, 16, 1.0, 1.0).unwrap();
        let u: Vec<f64> = mesh
            .vertices()
            .iter()
            .map(|p| (2.0 * PI * p[0]).sin() + 0.5 * (4.0 * PI * p[1]).cos() + 0.05 * (2.0 * PI * p[1]).sin())
            .collect();
        let neg: Vec<f64> = u.iter().map(|x| -x).collect();
        let a = classify_critical_points(&mesh, &u, None);
        let b = classify_critical_points(&mesh, &neg, None);
        assert_eq!(a.minima(), b.maxima());
        assert_eq!(a.maxima(), b.minima());
        assert_eq!(a.saddles(), b.saddles());
    }
}
