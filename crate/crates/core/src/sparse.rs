//! Compressed sparse row matrices and an envelope (skyline) LDL^T
//! factorization under reverse Cuthill-McKee ordering.

use std::collections::VecDeque;

use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq)]
pub struct CsrMatrix {
    n: usize,
    row_ptr: Vec<usize>,
    col_idx: Vec<usize>,
    vals: Vec<f64>,
}

impl CsrMatrix {
    /// Duplicate entries are summed in insertion order, so the result is
    /// deterministic for a deterministic triplet stream.
    pub fn from_triplets(n: usize, mut triplets: Vec<(usize, usize, f64)>) -> CsrMatrix {
        triplets.sort_by_key(|&(r, c, _)| (r, c));
        let mut row_ptr = vec![0; n + 1];
        let mut col_idx = Vec::with_capacity(triplets.len() / 4);
        let mut vals: Vec<f64> = Vec::with_capacity(triplets.len() / 4);
        let mut last: Option<(usize, usize)> = None;
        for (r, c, v) in triplets {
            debug_assert!(r < n && c < n);
            if last == Some((r, c)) {
                *vals.last_mut().unwrap() += v;
            } else {
                col_idx.push(c);
                vals.push(v);
                row_ptr[r + 1] += 1;
                last = Some((r, c));
            }
        }
        for i in 0..n {
            row_ptr[i + 1] += row_ptr[i];
        }
        CsrMatrix { n, row_ptr, col_idx, vals }
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn nnz(&self) -> usize {
        self.vals.len()
    }

    pub fn row(&self, i: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        let r = self.row_ptr[i]..self.row_ptr[i + 1];
        self.col_idx[r.clone()].iter().copied().zip(self.vals[r].iter().copied())
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        let r = self.row_ptr[i]..self.row_ptr[i + 1];
        match self.col_idx[r.clone()].binary_search(&j) {
            Ok(k) => self.vals[r.start + k],
            Err(_) => 0.0,
        }
    }

    pub fn matvec(&self, x: &[f64]) -> Vec<f64> {
        (0..self.n).map(|i| self.row(i).map(|(j, v)| v * x[j]).sum()).collect()
    }

    /// `x^T A y`.
    pub fn bilinear(&self, x: &[f64], y: &[f64]) -> f64 {
        (0..self.n).map(|i| x[i] * self.row(i).map(|(j, v)| v * y[j]).sum::<f64>()).sum()
    }

    pub fn row_sums(&self) -> Vec<f64> {
        (0..self.n).map(|i| self.row(i).map(|(_, v)| v).sum()).collect()
    }

    pub fn max_abs(&self) -> f64 {
        self.vals.iter().fold(0.0_f64, |m, v| m.max(v.abs()))
    }

    /// `max |A_ij - A_ji| / max |A_ij|`.
    pub fn asymmetry(&self) -> f64 {
        let mut worst = 0.0_f64;
        for i in 0..self.n {
            for (j, v) in self.row(i) {
                worst = worst.max((v - self.get(j, i)).abs());
            }
        }
        worst / self.max_abs().max(f64::MIN_POSITIVE)
    }

    /// `self + alpha * other` over the union sparsity pattern.
    pub fn add_scaled(&self, alpha: f64, other: &CsrMatrix) -> CsrMatrix {
        assert_eq!(self.n, other.n);
        let mut trip = Vec::with_capacity(self.nnz() + other.nnz());
        for i in 0..self.n {
            trip.extend(self.row(i).map(|(j, v)| (i, j, v)));
            trip.extend(other.row(i).map(|(j, v)| (i, j, alpha * v)));
        }
        CsrMatrix::from_triplets(self.n, trip)
    }

    pub fn scaled(&self, alpha: f64) -> CsrMatrix {
        CsrMatrix {
            vals: self.vals.iter().map(|v| alpha * v).collect(),
            ..self.clone()
        }
    }

    /// Principal submatrix on `keep` (in the given order).
    pub fn principal_submatrix(&self, keep: &[usize]) -> CsrMatrix {
        let mut local = vec![usize::MAX; self.n];
        for (k, &g) in keep.iter().enumerate() {
            local[g] = k;
        }
        let mut trip = Vec::new();
        for (k, &g) in keep.iter().enumerate() {
            for (j, v) in self.row(g) {
                if local[j] != usize::MAX {
                    trip.push((k, local[j], v));
                }
            }
        }
        CsrMatrix::from_triplets(keep.len(), trip)
    }

    fn neighbors(&self, i: usize) -> impl Iterator<Item = usize> + '_ {
        self.row(i).map(|(j, _)| j).filter(move |&j| j != i)
    }
}

/// Reverse Cuthill-McKee ordering of the (symmetric) sparsity graph.
/// Returns `perm` with `perm[new] = old`.
pub fn reverse_cuthill_mckee(a: &CsrMatrix) -> Vec<usize> {
    let n = a.n();
    let degree: Vec<usize> = (0..n).map(|i| a.neighbors(i).count()).collect();
    let mut visited = vec![false; n];
    let mut order = Vec::with_capacity(n);

    let bfs_levels = |start: usize, visited: &[bool]| -> (usize, usize) {
        // (eccentricity, last vertex of the deepest level with minimum degree)
        let mut dist = vec![usize::MAX; n];
        let mut q = VecDeque::from([start]);
        dist[start] = 0;
        let mut far = start;
        while let Some(v) = q.pop_front() {
            if dist[v] > dist[far] || (dist[v] == dist[far] && degree[v] < degree[far]) {
                far = v;
            }
            for w in a.neighbors(v) {
                if dist[w] == usize::MAX && !visited[w] {
                    dist[w] = dist[v] + 1;
                    q.push_back(w);
                }
            }
        }
        (dist[far], far)
    };

    for seed in 0..n {
        if visited[seed] {
            continue;
        }
        // pseudo-peripheral start
        let mut start = seed;
        let (mut ecc, mut far) = bfs_levels(start, &visited);
        for _ in 0..8 {
            let (e2, f2) = bfs_levels(far, &visited);
            if e2 <= ecc {
                break;
            }
            start = far;
            ecc = e2;
            far = f2;
        }
        let (e2, _) = bfs_levels(far, &visited);
        if e2 >= ecc {
            start = far;
        }
        let mut q = VecDeque::from([start]);
        visited[start] = true;
        while let Some(v) = q.pop_front() {
            order.push(v);
            let mut nb: Vec<usize> = a.neighbors(v).filter(|&w| !visited[w]).collect();
            nb.sort_by_key(|&w| (degree[w], w));
            for w in nb {
                visited[w] = true;
                q.push_back(w);
            }
        }
    }
    order.reverse();
    order
}

/// `P A P^T = L D L^T` with unit lower-triangular `L` stored by rows in its envelope.
#[derive(Clone, Debug)]
pub struct LdlFactor {
    n: usize,
    perm: Vec<usize>,
    first: Vec<usize>,
    offsets: Vec<usize>,
    lower: Vec<f64>,
    diag: Vec<f64>,
}

impl LdlFactor {
    /// Factors a symmetric matrix without pivoting. A pivot whose magnitude
    /// falls below `1e-14 * max|A|` is reported as a zero pivot.
    pub fn factor(a: &CsrMatrix) -> Result<LdlFactor> {
        let n = a.n();
        let perm = reverse_cuthill_mckee(a);
        let mut inv = vec![0; n];
        for (new, &old) in perm.iter().enumerate() {
            inv[old] = new;
        }
        let mut first: Vec<usize> = (0..n).collect();
        for (new, &old) in perm.iter().enumerate() {
            for (j, _) in a.row(old) {
                let jn = inv[j];
                if jn < first[new] {
                    first[new] = jn;
                }
            }
        }
        let mut offsets = vec![0; n + 1];
        for i in 0..n {
            offsets[i + 1] = offsets[i] + (i - first[i]);
        }
        let mut lower = vec![0.0; offsets[n]];
        let mut diag = vec![0.0; n];
        for (new, &old) in perm.iter().enumerate() {
            for (j, v) in a.row(old) {
                let jn = inv[j];
                if jn < new {
                    lower[offsets[new] + jn - first[new]] = v;
                } else if jn == new {
                    diag[new] = v;
                }
            }
        }
        let tiny = 1e-14 * a.max_abs();
        for i in 0..n {
            let fi = first[i];
            let row_start = offsets[i];
            // First pass: lower[i][j] <- u_ij = L_ij D_j.
            for j in fi..i {
                let fj = first[j];
                let k0 = fi.max(fj);
                let mut s = lower[row_start + j - fi];
                if k0 < j {
                    let ri = &lower[row_start + k0 - fi..row_start + j - fi];
                    let rj = &lower[offsets[j] + k0 - fj..offsets[j] + j - fj];
                    s -= ri.iter().zip(rj).map(|(x, y)| x * y).sum::<f64>();
                }
                lower[row_start + j - fi] = s;
            }
            let mut d = diag[i];
            for j in fi..i {
                let u = lower[row_start + j - fi];
                let l = u / diag[j];
                d -= u * l;
                lower[row_start + j - fi] = l;
            }
            if !(d.abs() > tiny) || !d.is_finite() {
                return Err(Error::Factorization { row: perm[i], shift: 0.0 });
            }
            diag[i] = d;
        }
        Ok(LdlFactor {
            n,
            perm,
            first,
            offsets,
            lower,
            diag,
        })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    /// Number of negative pivots, i.e. negative eigenvalues of `A` (Sylvester).
    pub fn negative_pivots(&self) -> usize {
        self.diag.iter().filter(|&&d| d < 0.0).count()
    }

    pub fn solve(&self, b: &[f64]) -> Vec<f64> {
        let n = self.n;
        let mut y: Vec<f64> = self.perm.iter().map(|&old| b[old]).collect();
        for i in 0..n {
            let fi = self.first[i];
            let row = &self.lower[self.offsets[i]..self.offsets[i + 1]];
            let s: f64 = row.iter().zip(&y[fi..i]).map(|(l, x)| l * x).sum();
            y[i] -= s;
        }
        for i in 0..n {
            y[i] /= self.diag[i];
        }
        for i in (0..n).rev() {
            let fi = self.first[i];
            let yi = y[i];
            let row = &self.lower[self.offsets[i]..self.offsets[i + 1]];
            for (k, l) in row.iter().enumerate() {
                y[fi + k] -= l * yi;
            }
        }
        let mut x = vec![0.0; n];
        for (new, &old) in self.perm.iter().enumerate() {
            x[old] = y[new];
        }
        x
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn laplacian_1d(n: usize, shift: f64) -> CsrMatrix {
        let mut t = Vec::new();
        for i in 0..n {
            t.push((i, i, 2.0 + shift));
            if i + 1 < n {
                t.push((i, i + 1, -1.0));
                t.push((i + 1, i, -1.0));
            }
        }
        CsrMatrix::from_triplets(n, t)
    }

    #[test]
    fn duplicates_are_summed() {
        let a = CsrMatrix::from_triplets(2, vec![(0, 0, 1.0), (1, 0, 2.0), (0, 0, 3.0), (0, 1, 2.0)]);
        assert_eq!(a.get(0, 0), 4.0);
        assert_eq!(a.nnz(), 3);
        assert_eq!(a.asymmetry(), 0.0);
    }

    #[test]
    fn ldl_solves_spd_and_indefinite() {
        let a = laplacian_1d(50, 0.0);
        let f = LdlFactor::factor(&a).unwrap();
        let x: Vec<f64> = (0..50).map(|i| (i as f64 * 0.3).sin()).collect();
        let b = a.matvec(&x);
        let y = f.solve(&b);
        for (u, v) in x.iter().zip(&y) {
            assert!((u - v).abs() < 1e-9);
        }
        assert_eq!(f.negative_pivots(), 0);
        // shift below zero: eigenvalues 2 - 2cos(k pi/(n+1)) - 0.5 has some negatives
        let a = laplacian_1d(50, -0.5);
        let f = LdlFactor::factor(&a).unwrap();
        let expected = (1..=50)
            .filter(|k| 2.0 - 2.0 * (*k as f64 * std::f64::consts::PI / 51.0).cos() - 0.5 < 0.0)
            .count();
        assert_eq!(f.negative_pivots(), expected);
        let b = a.matvec(&x);
        let y = f.solve(&b);
        for (u, v) in x.iter().zip(&y) {
            assert!((u - v).abs() < 1e-8);
        }
    }

    #[test]
    fn singular_matrix_reports_zero_pivot() {
        let a = CsrMatrix::from_triplets(2, vec![(0, 0, 1.0), (0, 1, 1.0), (1, 0, 1.0), (1, 1, 1.0)]);
        assert!(matches!(LdlFactor::factor(&a), Err(Error::Factorization { .. })));
    }

    #[test]
    fn rcm_is_a_permutation() {
        let a = laplacian_1d(17, 0.0);
        let mut p = reverse_cuthill_mckee(&a);
        p.sort_unstable();
        assert_eq!(p, (0..17).collect::<Vec<_>>());
    }
}
