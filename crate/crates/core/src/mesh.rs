//! Simplicial meshes of boxes (optionally warped), periodic grids and
//! file-supplied complexes, plus the per-cell gradient data used by assembly.

use std::collections::HashMap;
use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::util::{self, UnionFind};

pub type Point = [f64; 3];
/// Symmetric cell metric; only the leading `d x d` block is meaningful.
pub type CellMetric = [[f64; 3]; 3];

pub const IDENTITY: CellMetric = [[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]];

/// Structured-grid bookkeeping for box meshes. Vertex `(i, j, k)` has index
/// `i + (r0 + 1) * (j + (r1 + 1) * k)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GridInfo {
    pub resolution: [usize; 3],
    pub spacing: [f64; 3],
}

impl GridInfo {
    pub fn vertex_index(&self, idx: [usize; 3]) -> usize {
        let [r0, r1, _] = self.resolution;
        idx[0] + (r0 + 1) * (idx[1] + (r1 + 1) * idx[2])
    }
}

/// Cross-section warp `w(rho)` of a warped box; `rho = x1 - sigma_offset`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub enum WarpProfile {
    Affine { offset: f64, slope: f64 },
    Sampled { rho: Vec<f64>, w: Vec<f64> },
}

impl WarpProfile {
    pub fn eval(&self, rho: f64) -> f64 {
        match self {
            WarpProfile::Affine { offset, slope } => offset + slope * rho,
            WarpProfile::Sampled { rho: xs, w } => {
                if rho <= xs[0] {
                    return w[0];
                }
                let last = xs.len() - 1;
                if rho >= xs[last] {
                    return w[last];
                }
                let i = xs.partition_point(|&x| x <= rho) - 1;
                let t = (rho - xs[i]) / (xs[i + 1] - xs[i]);
                w[i] * (1.0 - t) + w[i + 1] * t
            }
        }
    }

    pub fn derivative(&self, rho: f64) -> f64 {
        match self {
            WarpProfile::Affine { slope, .. } => *slope,
            WarpProfile::Sampled { rho: xs, w } => {
                let last = xs.len() - 1;
                if rho < xs[0] || rho > xs[last] {
                    return 0.0;
                }
                let i = (xs.partition_point(|&x| x <= rho).max(1) - 1).min(last - 1);
                (w[i + 1] - w[i]) / (xs[i + 1] - xs[i])
            }
        }
    }

    fn validate(&self) -> Result<()> {
        if let WarpProfile::Sampled { rho, w } = self {
            if rho.len() < 2 || rho.len() != w.len() {
                return Err(Error::invalid("sampled warp needs >= 2 matching samples"));
            }
            if rho.windows(2).any(|p| p[1] <= p[0]) {
                return Err(Error::invalid("sampled warp abscissae must increase"));
            }
            if let Some(bad) = w.iter().find(|&&x| x <= 0.0 || !x.is_finite()) {
                return Err(Error::invalid(format!("non-positive warp sample {bad}")));
            }
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Warp {
    pub profile: WarpProfile,
    pub sigma_offset: f64,
}

/// A conforming simplicial complex with per-cell constant metric.
#[derive(Clone, Debug)]
pub struct Mesh {
    dim: usize,
    vertices: Vec<Point>,
    cells: Vec<usize>,
    boundary_facets: Vec<usize>,
    cell_metric: Vec<CellMetric>,
    grid: Option<GridInfo>,
    period: Option<Point>,
}

impl Mesh {
    /// Validates and builds a mesh. `cells` is flat with stride `dim + 1`.
    pub fn new(
        dim: usize,
        vertices: Vec<Point>,
        cells: Vec<usize>,
        cell_metric: Option<Vec<CellMetric>>,
    ) -> Result<Mesh> {
        Self::build(dim, vertices, cells, cell_metric, None, None)
    }

    fn build(
        dim: usize,
        vertices: Vec<Point>,
        cells: Vec<usize>,
        cell_metric: Option<Vec<CellMetric>>,
        grid: Option<GridInfo>,
        period: Option<Point>,
    ) -> Result<Mesh> {
        if !(2..=3).contains(&dim) {
            return Err(Error::invalid(format!("dimension {dim} not in {{2, 3}}")));
        }
        let stride = dim + 1;
        if cells.is_empty() || !cells.len().is_multiple_of(stride) {
            return Err(Error::InvalidMesh("cell array empty or ragged".into()));
        }
        let n_cells = cells.len() / stride;
        let cell_metric = cell_metric.unwrap_or_else(|| vec![IDENTITY; n_cells]);
        if cell_metric.len() != n_cells {
            return Err(Error::InvalidMesh(format!(
                "metric block has {} entries for {} cells",
                cell_metric.len(),
                n_cells
            )));
        }
        let mut mesh = Mesh {
            dim,
            vertices,
            cells,
            boundary_facets: Vec::new(),
            cell_metric,
            grid,
            period,
        };
        mesh.validate()?;
        Ok(mesh)
    }

    fn validate(&mut self) -> Result<()> {
        let nv = self.vertices.len();
        let mut used = vec![false; nv];
        for (c, cell) in self.cells.chunks(self.dim + 1).enumerate() {
            for &v in cell {
                if v >= nv {
                    return Err(Error::InvalidMesh(format!(
                        "cell {c}: vertex index out of range ({v} >= {nv})"
                    )));
                }
                used[v] = true;
            }
            let mut sorted = cell.to_vec();
            sorted.sort_unstable();
            if sorted.windows(2).any(|w| w[0] == w[1]) {
                return Err(Error::InvalidMesh(format!("cell {c}: repeated vertex")));
            }
        }
        if let Some(v) = used.iter().position(|u| !u) {
            return Err(Error::InvalidMesh(format!("dangling vertex {v}")));
        }
        for c in 0..self.num_cells() {
            let m = &self.cell_metric[c];
            let spd = (1..=self.dim).all(|k| util::det(m, k) > 0.0)
                && (0..self.dim).all(|i| (0..self.dim).all(|j| m[i][j] == m[j][i]));
            if !spd {
                return Err(Error::InvalidMesh(format!("cell {c}: metric not symmetric positive-definite")));
            }
            let signed = self.signed_flat_volume(c);
            if signed == 0.0 {
                return Err(Error::DegenerateCell(c));
            }
            if signed < 0.0 {
                return Err(Error::InvalidMesh(format!("cell {c}: negative orientation")));
            }
        }
        let facets = self.facet_incidence();
        let mut boundary = Vec::new();
        let mut uf = UnionFind::new(self.num_cells());
        for (key, inc) in &facets {
            match inc.len() {
                1 => boundary.push((inc[0], *key)),
                2 => {
                    uf.union(inc[0], inc[1]);
                }
                k => {
                    return Err(Error::InvalidMesh(format!(
                        "non-manifold facet {:?} shared by {k} cells",
                        &key[..self.dim]
                    )))
                }
            }
        }
        boundary.sort_unstable();
        self.boundary_facets = boundary
            .into_iter()
            .flat_map(|(_, key)| key[..self.dim].to_vec())
            .collect();
        let (_, comps) = uf.labels();
        if comps != 1 {
            return Err(Error::InvalidMesh(format!("mesh has {comps} disconnected pieces")));
        }
        Ok(())
    }

    /// Facet key (sorted, padded with `usize::MAX`) -> incident cells in cell order.
    fn facet_incidence(&self) -> HashMap<[usize; 3], Vec<usize>> {
        let mut map: HashMap<[usize; 3], Vec<usize>> = HashMap::with_capacity(self.cells.len());
        for c in 0..self.num_cells() {
            for key in self.cell_facets(c) {
                map.entry(key).or_default().push(c);
            }
        }
        map
    }

    /// The `d + 1` facets of a cell as sorted padded keys; facet `i` omits local vertex `i`.
    pub fn cell_facets(&self, c: usize) -> impl Iterator<Item = [usize; 3]> + '_ {
        let cell = self.cell(c);
        (0..=self.dim).map(move |skip| {
            let mut key = [usize::MAX; 3];
            let mut k = 0;
            for (i, &v) in cell.iter().enumerate() {
                if i != skip {
                    key[k] = v;
                    k += 1;
                }
            }
            key[..k].sort_unstable();
            key
        })
    }

    /// Interior facets as `(cell_a, cell_b)` pairs with `cell_a < cell_b`, sorted.
    pub fn cell_adjacency(&self) -> Vec<(usize, usize)> {
        let mut pairs: Vec<(usize, usize)> = self
            .facet_incidence()
            .into_values()
            .filter(|inc| inc.len() == 2)
            .map(|inc| (inc[0].min(inc[1]), inc[0].max(inc[1])))
            .collect();
        pairs.sort_unstable();
        pairs
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn num_vertices(&self) -> usize {
        self.vertices.len()
    }

    pub fn num_cells(&self) -> usize {
        self.cells.len() / (self.dim + 1)
    }

    pub fn vertices(&self) -> &[Point] {
        &self.vertices
    }

    pub fn vertex(&self, v: usize) -> &Point {
        &self.vertices[v]
    }

    pub fn cell(&self, c: usize) -> &[usize] {
        let s = self.dim + 1;
        &self.cells[c * s..(c + 1) * s]
    }

    pub fn cells(&self) -> impl Iterator<Item = &[usize]> {
        self.cells.chunks(self.dim + 1)
    }

    pub fn cell_metric(&self, c: usize) -> &CellMetric {
        &self.cell_metric[c]
    }

    pub fn grid(&self) -> Option<&GridInfo> {
        self.grid.as_ref()
    }

    pub fn is_periodic(&self) -> bool {
        self.period.is_some()
    }

    pub fn boundary_facets(&self) -> impl Iterator<Item = &[usize]> {
        self.boundary_facets.chunks(self.dim)
    }

    pub fn num_boundary_facets(&self) -> usize {
        self.boundary_facets.len() / self.dim
    }

    /// Marks vertices lying on a boundary facet.
    pub fn boundary_vertex_mask(&self) -> Vec<bool> {
        let mut mask = vec![false; self.num_vertices()];
        for &v in &self.boundary_facets {
            mask[v] = true;
        }
        mask
    }

    /// Cell vertex coordinates, unwrapped to the minimum image on periodic meshes.
    pub fn cell_points(&self, c: usize) -> [Point; 4] {
        let mut pts = [[0.0; 3]; 4];
        let cell = self.cell(c);
        let base = self.vertices[cell[0]];
        for (k, &v) in cell.iter().enumerate() {
            let mut p = self.vertices[v];
            if let Some(period) = self.period {
                for a in 0..self.dim {
                    let delta = p[a] - base[a];
                    p[a] -= period[a] * (delta / period[a]).round();
                }
            }
            pts[k] = p;
        }
        pts
    }

    pub fn barycenter(&self, c: usize) -> Point {
        let pts = self.cell_points(c);
        let mut b = [0.0; 3];
        for p in &pts[..=self.dim] {
            for a in 0..3 {
                b[a] += p[a];
            }
        }
        b.map(|x| x / (self.dim + 1) as f64)
    }

    /// Columns are the edge vectors `x_i - x_0`.
    fn edge_matrix(&self, c: usize) -> [[f64; 3]; 3] {
        let pts = self.cell_points(c);
        let mut e = [[0.0; 3]; 3];
        for i in 0..self.dim {
            for a in 0..self.dim {
                e[a][i] = pts[i + 1][a] - pts[0][a];
            }
        }
        e
    }

    fn signed_flat_volume(&self, c: usize) -> f64 {
        let fact = if self.dim == 2 { 2.0 } else { 6.0 };
        util::det(&self.edge_matrix(c), self.dim) / fact
    }

    /// Cell volume measured in its metric.
    pub fn cell_volume(&self, c: usize) -> f64 {
        self.signed_flat_volume(c).abs() * util::det(&self.cell_metric[c], self.dim).sqrt()
    }

    pub fn cell_volumes(&self) -> Vec<f64> {
        (0..self.num_cells()).map(|c| self.cell_volume(c)).collect()
    }

    pub fn total_volume(&self) -> f64 {
        util::pairwise_sum(&self.cell_volumes())
    }

    /// Cells incident to each vertex, in increasing cell order.
    pub fn vertex_cells(&self) -> Vec<Vec<usize>> {
        let mut out = vec![Vec::new(); self.num_vertices()];
        for (c, cell) in self.cells().enumerate() {
            for &v in cell {
                out[v].push(c);
            }
        }
        out
    }

    /// Unique undirected edges `(a, b)` with `a < b`, sorted.
    pub fn edges(&self) -> Vec<(usize, usize)> {
        let mut edges = Vec::with_capacity(self.cells.len() * 2);
        for cell in self.cells() {
            for i in 0..cell.len() {
                for j in i + 1..cell.len() {
                    edges.push((cell[i].min(cell[j]), cell[i].max(cell[j])));
                }
            }
        }
        edges.sort_unstable();
        edges.dedup();
        edges
    }

    /// Euler characteristic of the complex (vertices - edges + faces - cells).
    pub fn euler_characteristic(&self) -> i64 {
        let v = self.num_vertices() as i64;
        let e = self.edges().len() as i64;
        let c = self.num_cells() as i64;
        if self.dim == 2 {
            return v - e + c;
        }
        let mut faces: Vec<[usize; 3]> = (0..self.num_cells()).flat_map(|c| self.cell_facets(c)).collect();
        faces.sort_unstable();
        faces.dedup();
        v - e + faces.len() as i64 - c
    }
}

fn fix_orientation(pts: &[Point], cell: &mut [usize], dim: usize) {
    let mut e = [[0.0; 3]; 3];
    for i in 0..dim {
        for a in 0..dim {
            e[a][i] = pts[cell[i + 1]][a] - pts[cell[0]][a];
        }
    }
    if util::det(&e, dim) < 0.0 {
        cell.swap(dim - 1, dim);
    }
}

fn permutations(dim: usize) -> Vec<Vec<usize>> {
    if dim == 2 {
        vec![vec![0, 1], vec![1, 0]]
    } else {
        vec![
            vec![0, 1, 2],
            vec![0, 2, 1],
            vec![1, 0, 2],
            vec![1, 2, 0],
            vec![2, 0, 1],
            vec![2, 1, 0],
        ]
    }
}

/// Unit box `[0,1]^d` with `n` cells per axis, Freudenthal-subdivided.
pub fn build_box_grid(d: usize, n: usize, warp: Option<&Warp>) -> Result<Mesh> {
    build_box_grid_with_resolution(&vec![n; d], warp)
}

/// Unit box with per-axis resolution; `resolution.len()` is the dimension.
///
/// With a warp, each cell carries `diag(1, w^2, ..., w^2)` evaluated at the
/// barycenter's `rho = x1 - sigma_offset`.
pub fn build_box_grid_with_resolution(resolution: &[usize], warp: Option<&Warp>) -> Result<Mesh> {
    let d = resolution.len();
    if !(2..=3).contains(&d) {
        return Err(Error::invalid(format!("dimension {d} not in {{2, 3}}")));
    }
    if let Some(&bad) = resolution.iter().find(|&&n| n < 2) {
        return Err(Error::invalid(format!("resolution {bad} < 2")));
    }
    if let Some(w) = warp {
        w.profile.validate()?;
    }
    let mut res = [0usize; 3];
    res[..d].copy_from_slice(resolution);
    let spacing = [0, 1, 2].map(|a| if a < d { 1.0 / res[a] as f64 } else { 0.0 });
    let grid = GridInfo { resolution: res, spacing };
    let counts = [0, 1, 2].map(|a| if a < d { res[a] + 1 } else { 1 });

    let mut vertices = Vec::with_capacity(counts.iter().product());
    for k in 0..counts[2] {
        for j in 0..counts[1] {
            for i in 0..counts[0] {
                let idx = [i, j, k];
                let mut p = [0.0; 3];
                for a in 0..d {
                    p[a] = idx[a] as f64 * spacing[a];
                }
                vertices.push(p);
            }
        }
    }

    let perms = permutations(d);
    let cube_counts = [0, 1, 2].map(|a| if a < d { res[a] } else { 1 });
    let mut cells = Vec::new();
    for k in 0..cube_counts[2] {
        for j in 0..cube_counts[1] {
            for i in 0..cube_counts[0] {
                for perm in &perms {
                    let mut idx = [i, j, k];
                    let mut cell = vec![grid.vertex_index(idx)];
                    for &axis in perm {
                        idx[axis] += 1;
                        cell.push(grid.vertex_index(idx));
                    }
                    fix_orientation(&vertices, &mut cell, d);
                    cells.extend(cell);
                }
            }
        }
    }

    let metric = match warp {
        None => None,
        Some(w) => {
            let stride = d + 1;
            let mut out = Vec::with_capacity(cells.len() / stride);
            for (c, cell) in cells.chunks(stride).enumerate() {
                let x1 = cell.iter().map(|&v| vertices[v][0]).sum::<f64>() / stride as f64;
                let wv = w.profile.eval(x1 - w.sigma_offset);
                if !(wv > 0.0) || !wv.is_finite() {
                    return Err(Error::invalid(format!("non-positive warp sample {wv} in cell {c}")));
                }
                let mut g = IDENTITY;
                for a in 1..d {
                    g[a][a] = wv * wv;
                }
                out.push(g);
            }
            Some(out)
        }
    };
    Mesh::build(d, vertices, cells, metric, Some(grid), None)
}

/// Closed flat 2-torus `[0, lx) x [0, ly)` with `nx x ny` squares, two triangles each.
pub fn build_periodic_grid_2d(nx: usize, ny: usize, lx: f64, ly: f64) -> Result<Mesh> {
    if nx < 3 || ny < 3 {
        return Err(Error::invalid("periodic grid needs >= 3 cells per axis"));
    }
    let (hx, hy) = (lx / nx as f64, ly / ny as f64);
    let idx = |i: usize, j: usize| (i % nx) + nx * (j % ny);
    let mut vertices = Vec::with_capacity(nx * ny);
    for j in 0..ny {
        for i in 0..nx {
            vertices.push([i as f64 * hx, j as f64 * hy, 0.0]);
        }
    }
    let mut cells = Vec::with_capacity(nx * ny * 6);
    for j in 0..ny {
        for i in 0..nx {
            cells.extend([idx(i, j), idx(i + 1, j), idx(i + 1, j + 1)]);
            cells.extend([idx(i, j), idx(i + 1, j + 1), idx(i, j + 1)]);
        }
    }
    Mesh::build(2, vertices, cells, None, None, Some([lx, ly, 0.0]))
}

/// Per-cell data mapping vertex values to the constant gradient of the P1 interpolant.
#[derive(Clone, Debug)]
pub struct CellGradient {
    pub dim: usize,
    /// Coordinate covectors of the barycentric coordinates, one per local vertex.
    pub dlambda: [[f64; 3]; 4],
    pub metric_inv: CellMetric,
    /// Volume in the cell metric.
    pub volume: f64,
}

impl CellGradient {
    /// Covector `du` (coordinate components) of the interpolant of `vals`.
    pub fn covector(&self, vals: &[f64]) -> [f64; 3] {
        let mut g = [0.0; 3];
        for (i, v) in vals.iter().enumerate().take(self.dim + 1) {
            for a in 0..self.dim {
                g[a] += v * self.dlambda[i][a];
            }
        }
        g
    }

    /// Metric inner product of two covectors.
    pub fn inner(&self, a: &[f64; 3], b: &[f64; 3]) -> f64 {
        let mut s = 0.0;
        for i in 0..self.dim {
            for j in 0..self.dim {
                s += a[i] * self.metric_inv[i][j] * b[j];
            }
        }
        s
    }

    /// `|du|_g^2` for the interpolant of `vals`.
    pub fn norm_sq(&self, vals: &[f64]) -> f64 {
        let g = self.covector(vals);
        self.inner(&g, &g)
    }

    /// `g(d lambda_i, d lambda_j)`.
    pub fn stiffness(&self, i: usize, j: usize) -> f64 {
        self.inner(&self.dlambda[i], &self.dlambda[j])
    }
}

pub fn cell_gradient(mesh: &Mesh, c: usize) -> Result<CellGradient> {
    let d = mesh.dim;
    let e = mesh.edge_matrix(c);
    let det = util::det(&e, d);
    if det.abs() < 1e-300 {
        return Err(Error::DegenerateCell(c));
    }
    // Rows of E^{-1} are the covectors of lambda_1..lambda_d.
    let inv = util::inverse(&e, d);
    let mut dlambda = [[0.0; 3]; 4];
    for i in 0..d {
        for a in 0..d {
            dlambda[i + 1][a] = inv[i][a];
            dlambda[0][a] -= inv[i][a];
        }
    }
    let metric = mesh.cell_metric(c);
    let mut metric_inv = util::inverse(metric, d);
    for row in metric_inv.iter_mut().skip(d) {
        *row = [0.0; 3];
    }
    Ok(CellGradient {
        dim: d,
        dlambda,
        metric_inv,
        volume: mesh.cell_volume(c),
    })
}

pub fn simplex_gradient_data(mesh: &Mesh) -> Result<Vec<CellGradient>> {
    (0..mesh.num_cells()).map(|c| cell_gradient(mesh, c)).collect()
}

fn parse_err(path: &Path, line: usize, msg: impl Into<String>) -> Error {
    Error::Parse {
        path: path.to_path_buf(),
        line,
        msg: msg.into(),
    }
}

/// Reads the ASCII mesh format (`dim`, `vertices`, `cells`, optional `metric` blocks).
pub fn load_mesh(path: impl AsRef<Path>) -> Result<Mesh> {
    let path = path.as_ref();
    let text = fs::read_to_string(path)?;
    parse_mesh(&text, path)
}

pub fn parse_mesh(text: &str, path: &Path) -> Result<Mesh> {
    let mut lines = text
        .lines()
        .enumerate()
        .map(|(i, l)| (i + 1, l.split('#').next().unwrap_or("").trim()))
        .filter(|(_, l)| !l.is_empty());

    let mut header = |name: &str| -> Result<(usize, usize)> {
        let (ln, l) = lines
            .next()
            .ok_or_else(|| parse_err(path, 0, format!("unexpected end of file, expected `{name}`")))?;
        let mut it = l.split_whitespace();
        if it.next() != Some(name) {
            return Err(parse_err(path, ln, format!("expected `{name} <count>`")));
        }
        let count = it
            .next()
            .and_then(|s| s.parse().ok())
            .ok_or_else(|| parse_err(path, ln, format!("bad count after `{name}`")))?;
        Ok((ln, count))
    };
    let (_, dim) = header("dim")?;
    let (_, nv) = header("vertices")?;

    let mut rows = |count: usize, width: usize, what: &str| -> Result<Vec<(usize, Vec<&str>)>> {
        let mut out = Vec::with_capacity(count);
        for _ in 0..count {
            let (ln, l) = lines
                .next()
                .ok_or_else(|| parse_err(path, 0, format!("unexpected end of file in {what} block")))?;
            let toks: Vec<&str> = l.split_whitespace().collect();
            if toks.len() != width {
                return Err(parse_err(path, ln, format!("expected {width} values in {what} row, found {}", toks.len())));
            }
            out.push((ln, toks));
        }
        Ok(out)
    };
    if !(2..=3).contains(&dim) {
        return Err(parse_err(path, 1, format!("dimension {dim} not in {{2, 3}}")));
    }
    let mut vertices = Vec::with_capacity(nv);
    for (ln, toks) in rows(nv, dim, "vertex")? {
        let mut p = [0.0; 3];
        for (a, t) in toks.iter().enumerate() {
            p[a] = t.parse().map_err(|_| parse_err(path, ln, format!("bad float `{t}`")))?;
        }
        vertices.push(p);
    }

    let mut rest: Vec<(usize, &str)> = lines.collect();
    rest.reverse();
    let mut next_header = |name: &str| -> Result<Option<(usize, usize)>> {
        let Some((ln, l)) = rest.pop() else { return Ok(None) };
        let mut it = l.split_whitespace();
        if it.next() != Some(name) {
            return Err(parse_err(path, ln, format!("expected `{name} <count>`")));
        }
        let count = it
            .next()
            .and_then(|s| s.parse().ok())
            .ok_or_else(|| parse_err(path, ln, format!("bad count after `{name}`")))?;
        Ok(Some((ln, count)))
    };
    let (_, nc) = next_header("cells")?.ok_or_else(|| parse_err(path, 0, "missing `cells` block"))?;
    fn take<'a>(rest: &mut Vec<(usize, &'a str)>, path: &Path, width: usize, what: &str) -> Result<(usize, Vec<&'a str>)> {
        let (ln, l) = rest
            .pop()
            .ok_or_else(|| parse_err(path, 0, format!("unexpected end of file in {what} block")))?;
        let toks: Vec<&str> = l.split_whitespace().collect();
        if toks.len() != width {
            return Err(parse_err(path, ln, format!("expected {width} values in {what} row, found {}", toks.len())));
        }
        Ok((ln, toks))
    }
    let mut cells = Vec::with_capacity(nc * (dim + 1));
    for _ in 0..nc {
        let (ln, toks) = take(&mut rest, path, dim + 1, "cell")?;
        for t in toks {
            let v: usize = t.parse().map_err(|_| parse_err(path, ln, format!("bad index `{t}`")))?;
            if v >= nv {
                return Err(parse_err(path, ln, format!("vertex index out of range ({v} >= {nv})")));
            }
            cells.push(v);
        }
    }
    let mut metric = None;
    if let Some((ln, l)) = rest.pop() {
        let mut it = l.split_whitespace();
        let count: Option<usize> = match it.next() {
            Some("metric") => it.next().and_then(|s| s.parse().ok()),
            _ => None,
        };
        let count = count.ok_or_else(|| parse_err(path, ln, "expected `metric <count>`"))?;
        if count != nc {
            return Err(parse_err(path, ln, format!("metric block has {count} rows for {nc} cells")));
        }
        let width = dim * (dim + 1) / 2;
        let mut out = Vec::with_capacity(nc);
        for _ in 0..nc {
            let (ln, toks) = take(&mut rest, path, width, "metric")?;
            let vals: Vec<f64> = toks
                .iter()
                .map(|t| t.parse().map_err(|_| parse_err(path, ln, format!("bad float `{t}`"))))
                .collect::<Result<_>>()?;
            let mut g = IDENTITY;
            let mut k = 0;
            for i in 0..dim {
                for j in i..dim {
                    g[i][j] = vals[k];
                    g[j][i] = vals[k];
                    k += 1;
                }
            }
            out.push(g);
        }
        metric = Some(out);
    }
    if let Some((ln, _)) = rest.pop() {
        return Err(parse_err(path, ln, "trailing content after final block"));
    }
    Mesh::new(dim, vertices, cells, metric)
}

/// Serializes a mesh; the metric block is written only when some cell is non-identity.
pub fn format_mesh(mesh: &Mesh) -> String {
    let d = mesh.dim;
    let mut s = String::new();
    let _ = writeln!(s, "dim {d}");
    let _ = writeln!(s, "vertices {}", mesh.num_vertices());
    for p in mesh.vertices() {
        let row: Vec<String> = p[..d].iter().map(|x| format!("{x:?}")).collect();
        let _ = writeln!(s, "{}", row.join(" "));
    }
    let _ = writeln!(s, "cells {}", mesh.num_cells());
    for cell in mesh.cells() {
        let row: Vec<String> = cell.iter().map(|v| v.to_string()).collect();
        let _ = writeln!(s, "{}", row.join(" "));
    }
    if mesh.cell_metric.iter().any(|g| *g != IDENTITY) {
        let _ = writeln!(s, "metric {}", mesh.num_cells());
        for g in &mesh.cell_metric {
            let mut row = Vec::new();
            for i in 0..d {
                for j in i..d {
                    row.push(format!("{:?}", g[i][j]));
                }
            }
            let _ = writeln!(s, "{}", row.join(" "));
        }
    }
    s
}

pub fn write_mesh(mesh: &Mesh, path: impl AsRef<Path>) -> Result<()> {
    fs::write(path, format_mesh(mesh))?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    const TET: &str = "# one tetrahedron\ndim 3\nvertices 4\n0 0 0\n1 0 0\n0 1 0\n0 0 1\ncells 1\n0 1 2 3\n";

    #[test]
    fn box_counts_and_volume() {
        let m = build_box_grid(3, 4, None).unwrap();
        assert_eq!(m.num_vertices(), 125);
        assert_eq!(m.num_cells(), 384);
        assert!((m.total_volume() - 1.0).abs() < 1e-14);
        // 6 faces x 16 squares x 2 triangles
        assert_eq!(m.num_boundary_facets(), 192);
        let m2 = build_box_grid(2, 3, None).unwrap();
        assert_eq!(m2.num_cells(), 18);
        assert_eq!(m2.euler_characteristic(), 1);
    }

    #[test]
    fn warped_volume_matches_integral() {
        let warp = Warp {
            profile: WarpProfile::Affine { offset: 1.0, slope: 1.0 },
            sigma_offset: 0.5,
        };
        let m = build_box_grid(3, 8, Some(&warp)).unwrap();
        let exact = 1.0 + 1.0 / 12.0;
        assert!((m.total_volume() - exact).abs() / exact < 0.01);
    }

    #[test]
    fn nonpositive_warp_rejected() {
        let warp = Warp {
            profile: WarpProfile::Affine { offset: 0.1, slope: 1.0 },
            sigma_offset: 0.5,
        };
        assert!(build_box_grid(3, 4, Some(&warp)).is_err());
        assert!(build_box_grid(3, 1, None).is_err());
    }

    #[test]
    fn single_tetrahedron_file() {
        let m = parse_mesh(TET, Path::new("tet.mesh")).unwrap();
        assert_eq!((m.num_vertices(), m.num_cells(), m.num_boundary_facets()), (4, 1, 4));
    }

    #[test]
    fn out_of_range_index_is_reported_with_line() {
        let bad = TET.replace("0 1 2 3", "0 1 2 7");
        let err = parse_mesh(&bad, Path::new("bad.mesh")).unwrap_err().to_string();
        assert!(err.contains("vertex index out of range"), "{err}");
        assert!(err.contains(":9:"), "{err}");
    }

    #[test]
    fn negative_orientation_and_dangling_vertex_rejected() {
        let flipped = TET.replace("0 1 2 3", "0 2 1 3");
        let err = parse_mesh(&flipped, Path::new("f")).unwrap_err().to_string();
        assert!(err.contains("orientation"), "{err}");
        let dangling = TET.replace("vertices 4", "vertices 5").replace("0 0 1\n", "0 0 1\n2 2 2\n");
        let err = parse_mesh(&dangling, Path::new("f")).unwrap_err().to_string();
        assert!(err.contains("dangling"), "{err}");
    }

    #[test]
    fn non_manifold_facet_rejected() {
        let text = "dim 2\nvertices 5\n0 0\n1 0\n0 1\n0 -1\n-1 0.5\ncells 3\n0 1 2\n0 3 1\n0 2 4\n";
        // facet 0-1 shared by two cells, 0-2 shared by two: fine; add a third on 0-1
        assert!(parse_mesh(text, Path::new("f")).is_ok());
        let text = "dim 2\nvertices 5\n0 0\n1 0\n0 1\n0 -1\n0.5 0.8\ncells 3\n0 1 2\n0 3 1\n0 1 4\n";
        let err = parse_mesh(text, Path::new("f")).unwrap_err().to_string();
        assert!(err.contains("non-manifold"), "{err}");
    }

    #[test]
    fn roundtrip_preserves_arrays() {
        let m = build_box_grid(3, 2, None).unwrap();
        let text = format_mesh(&m);
        let back = parse_mesh(&text, Path::new("rt")).unwrap();
        assert_eq!(back.vertices(), m.vertices());
        assert_eq!(back.cells, m.cells);
        assert_eq!(format_mesh(&back), text);
        let warp = Warp {
            profile: WarpProfile::Affine { offset: 1.0, slope: 0.5 },
            sigma_offset: 0.5,
        };
        let w = build_box_grid(3, 2, Some(&warp)).unwrap();
        let back = parse_mesh(&format_mesh(&w), Path::new("rt")).unwrap();
        assert_eq!(back.cell_metric, w.cell_metric);
    }

    #[test]
    fn gradient_reproduces_affine_fields() {
        let m = build_box_grid(3, 3, None).unwrap();
        let grads = simplex_gradient_data(&m).unwrap();
        for (c, g) in grads.iter().enumerate() {
            let vals: Vec<f64> = m.cell(c).iter().map(|&v| m.vertex(v)[0]).collect();
            let cov = g.covector(&vals);
            assert!((cov[0] - 1.0).abs() < 1e-12 && cov[1].abs() < 1e-12 && cov[2].abs() < 1e-12);
            assert!(g.norm_sq(&[3.0; 4]).abs() < 1e-20);
        }
    }

    #[test]
    fn metric_contraction() {
        let mut metric = IDENTITY;
        metric[0][0] = 4.0;
        let m = Mesh::new(
            3,
            vec![[0.0; 3], [1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]],
            vec![0, 1, 2, 3],
            Some(vec![metric]),
        )
        .unwrap();
        let g = cell_gradient(&m, 0).unwrap();
        assert!((g.norm_sq(&[0.0, 1.0, 0.0, 0.0]) - 0.25).abs() < 1e-15);
        assert!((g.volume - 2.0 / 6.0).abs() < 1e-15);
    }

    #[test]
    fn periodic_torus_is_closed() {
        let m = build_periodic_grid_2d(8, 6, 2.0, 1.0).unwrap();
        assert_eq!(m.num_boundary_facets(), 0);
        assert_eq!(m.euler_characteristic(), 0);
        assert!((m.total_volume() - 2.0).abs() < 1e-12);
    }
}
