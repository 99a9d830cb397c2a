//! Lowest eigenpairs of the pencil `K u = lambda M u`, their normalization,
//! Rayleigh quotients, and the explicit collar test-function bound.

use nalgebra::{DMatrix, SymmetricEigen};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::assembly::OperatorPair;
use crate::error::{Error, Result};
use crate::metric::{CollarGeometry, ConformalField, Profile, Region};
use crate::sparse::LdlFactor;
use crate::util::{dot, pairwise_sum};

pub const MAX_ITERATIONS: usize = 500;

#[derive(Clone, Debug, Serialize)]
pub struct EigenResult {
    pub eigenvalues: Vec<f64>,
    /// Local (dof-indexed) eigenvectors.
    pub eigenvectors: Vec<Vec<f64>>,
    pub residuals: Vec<f64>,
    pub shift: f64,
    pub iterations: usize,
    /// True once every vector has `u^T M u = 1`.
    pub unit_mass: bool,
}

#[derive(Clone, Debug)]
pub struct SolverOptions {
    pub modes: usize,
    pub tol: f64,
    /// Estimate of the first nonzero eigenvalue; the shift is a tenth of it.
    pub lambda1_estimate: Option<f64>,
    pub seed: u64,
    pub max_iterations: usize,
}

impl SolverOptions {
    pub fn new(modes: usize, tol: f64) -> Self {
        SolverOptions {
            modes,
            tol,
            lambda1_estimate: None,
            seed: 0x5eed,
            max_iterations: MAX_ITERATIONS,
        }
    }

    pub fn with_estimate(mut self, lambda1: f64) -> Self {
        self.lambda1_estimate = Some(lambda1);
        self
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    fn shift(&self) -> f64 {
        match self.lambda1_estimate {
            Some(l) if l > 0.0 => (0.1 * l).max(1e-8),
            _ => 1e-8,
        }
    }
}

fn m_dot(pair: &OperatorPair, x: &[f64], y: &[f64]) -> f64 {
    pair.m.bilinear(x, y)
}

fn residual(pair: &OperatorPair, x: &[f64], lambda: f64, shift: f64) -> f64 {
    let kx = pair.k.matvec(x);
    let mx = pair.m.matvec(x);
    let r: f64 = kx.iter().zip(&mx).map(|(k, m)| (k - lambda * m).powi(2)).sum::<f64>().sqrt();
    let mnorm = dot(&mx, &mx).sqrt();
    r / (lambda.max(shift) * mnorm)
}

/// Smallest `modes` eigenpairs (including the constant mode) by block
/// shift-invert subspace iteration with Rayleigh-Ritz projection.
///
/// `K - sigma M` is factored once at `sigma` below the first nonzero
/// eigenvalue; the constant vector is removed by explicit M-orthogonalization
/// after every solve, since the shifted inverse amplifies it by `1/sigma`.
pub fn solve_smallest(pair: &OperatorPair, opts: &SolverOptions) -> Result<EigenResult> {
    let n = pair.len();
    let m = opts.modes;
    if m < 2 {
        return Err(Error::invalid("need at least two modes"));
    }
    let block = m + 2;
    if block + 1 > n {
        return Err(Error::invalid(format!("{m} modes requested from {n} degrees of freedom")));
    }

    let mut shift = opts.shift();
    let mut factor = None;
    for attempt in 0..4 {
        let a = pair.k.add_scaled(-shift, &pair.m);
        match LdlFactor::factor(&a) {
            Ok(f) => {
                factor = Some(f);
                break;
            }
            Err(_) if attempt < 3 => shift *= 1.37,
            Err(_) => return Err(Error::Factorization { row: 0, shift }),
        }
    }
    let factor = factor.expect("factorization loop exits with a factor or an error");

    let ones = vec![1.0; n];
    let one_mass = m_dot(pair, &ones, &ones);
    let constant: Vec<f64> = ones.iter().map(|x| x / one_mass.sqrt()).collect();
    let m_constant = pair.m.matvec(&constant);
    let deflate = |v: &mut Vec<f64>| {
        let c = dot(&m_constant, v);
        for (x, e) in v.iter_mut().zip(&constant) {
            *x -= c * e;
        }
    };

    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let mut x: Vec<Vec<f64>> = (0..block)
        .map(|_| {
            let mut v: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
            deflate(&mut v);
            v
        })
        .collect();

    let wanted = m - 1;
    let mut best = f64::INFINITY;
    let mut theta = Vec::new();
    let mut resid = Vec::new();
    let mut iterations = 0;
    while iterations < opts.max_iterations {
        iterations += 1;
        let mut y: Vec<Vec<f64>> = x
            .iter()
            .map(|v| {
                let mut s = factor.solve(&pair.m.matvec(v));
                deflate(&mut s);
                deflate(&mut s);
                s
            })
            .collect();
        let (vals, vecs) = rayleigh_ritz(pair, &y)?;
        y = combine(&y, &vecs);
        theta = vals;
        x = y;
        resid = (0..wanted).map(|i| residual(pair, &x[i], theta[i], shift)).collect();
        let worst = resid.iter().cloned().fold(0.0, f64::max);
        best = best.min(worst);
        if worst <= opts.tol {
            break;
        }
    }
    if resid.iter().any(|&r| r > opts.tol) {
        return Err(Error::NoConvergence {
            iterations,
            residual: best,
        });
    }

    let lambda0 = pair.k.bilinear(&constant, &constant).max(0.0);
    let mut eigenvalues = vec![lambda0];
    let mut residuals = vec![residual(pair, &constant, lambda0, shift)];
    let mut eigenvectors = vec![constant];
    for i in 0..wanted {
        eigenvalues.push(theta[i]);
        residuals.push(resid[i]);
        eigenvectors.push(x[i].clone());
    }
    Ok(EigenResult {
        eigenvalues,
        eigenvectors,
        residuals,
        shift,
        iterations,
        unit_mass: true,
    })
}

/// Ritz values (ascending) and M-orthonormal coefficient vectors for `span(y)`.
fn rayleigh_ritz(pair: &OperatorPair, y: &[Vec<f64>]) -> Result<(Vec<f64>, DMatrix<f64>)> {
    let p = y.len();
    let ky: Vec<Vec<f64>> = y.iter().map(|v| pair.k.matvec(v)).collect();
    let my: Vec<Vec<f64>> = y.iter().map(|v| pair.m.matvec(v)).collect();
    let mut kp = DMatrix::zeros(p, p);
    let mut mp = DMatrix::zeros(p, p);
    for i in 0..p {
        for j in 0..=i {
            let k = 0.5 * (dot(&y[i], &ky[j]) + dot(&y[j], &ky[i]));
            let m = 0.5 * (dot(&y[i], &my[j]) + dot(&y[j], &my[i]));
            kp[(i, j)] = k;
            kp[(j, i)] = k;
            mp[(i, j)] = m;
            mp[(j, i)] = m;
        }
    }
    // Scale to unit diagonal before the Cholesky step.
    let scale: Vec<f64> = (0..p).map(|i| 1.0 / mp[(i, i)].sqrt()).collect();
    for i in 0..p {
        for j in 0..p {
            kp[(i, j)] *= scale[i] * scale[j];
            mp[(i, j)] *= scale[i] * scale[j];
        }
    }
    let chol = mp
        .clone()
        .cholesky()
        .ok_or_else(|| Error::Singular("projected mass matrix lost rank".into()))?;
    let l = chol.l();
    let linv = l
        .clone()
        .try_inverse()
        .ok_or_else(|| Error::Singular("projected mass factor not invertible".into()))?;
    let c = &linv * &kp * linv.transpose();
    let c = (&c + c.transpose()) * 0.5;
    let eig = SymmetricEigen::new(c);
    let mut order: Vec<usize> = (0..p).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
    let vals: Vec<f64> = order.iter().map(|&i| eig.eigenvalues[i]).collect();
    let mut coeffs = DMatrix::zeros(p, p);
    let back = linv.transpose() * &eig.eigenvectors;
    for (col, &i) in order.iter().enumerate() {
        for r in 0..p {
            coeffs[(r, col)] = back[(r, i)] * scale[r];
        }
    }
    Ok((vals, coeffs))
}

fn combine(y: &[Vec<f64>], coeffs: &DMatrix<f64>) -> Vec<Vec<f64>> {
    let n = y[0].len();
    (0..coeffs.ncols())
        .map(|col| {
            let mut out = vec![0.0; n];
            for (r, v) in y.iter().enumerate() {
                let c = coeffs[(r, col)];
                for (o, x) in out.iter_mut().zip(v) {
                    *o += c * x;
                }
            }
            out
        })
        .collect()
}

/// Scales every vector to unit mass and orients the first nontrivial one so
/// its mass-weighted mean over the plus region is positive.
pub fn normalize_and_sign(result: &EigenResult, pair: &OperatorPair, geom: &CollarGeometry) -> Result<EigenResult> {
    if result.eigenvectors.len() < 2 {
        return Err(Error::invalid("need at least two modes to fix the sign convention"));
    }
    let mut out = result.clone();
    for v in out.eigenvectors.iter_mut() {
        let norm2 = m_dot(pair, v, v);
        if !(norm2 > 0.0) {
            return Err(Error::invalid("zero eigenvector"));
        }
        if (norm2 - 1.0).abs() > 8.0 * f64::EPSILON {
            let s = 1.0 / norm2.sqrt();
            v.iter_mut().for_each(|x| *x *= s);
        }
    }
    let weights = pair.mass_weights();
    let plus_mean: f64 = pair
        .dofs
        .iter()
        .zip(&out.eigenvectors[1])
        .zip(&weights)
        .filter(|((&v, _), _)| geom.rho[v] >= geom.eta)
        .map(|((_, u), w)| u * w)
        .sum();
    if plus_mean < 0.0 {
        out.eigenvectors[1].iter_mut().for_each(|x| *x = -*x);
    }
    out.unit_mass = true;
    Ok(out)
}

pub fn rayleigh_quotient(pair: &OperatorPair, v: &[f64]) -> Result<f64> {
    let mass = m_dot(pair, v, v);
    if !(mass > 0.0) {
        return Err(Error::invalid("vector has zero mass norm"));
    }
    Ok(pair.k.bilinear(v, v) / mass)
}

#[derive(Clone, Debug, Serialize)]
pub struct TestFunctionBound {
    /// Rayleigh quotient of the mean-zero test function.
    pub bound: f64,
    /// Collar slope of the test function.
    pub slope: f64,
    /// Discrete weighted mean before re-projection.
    pub mean_before: f64,
    /// Local dof vector of the (re-projected) test function.
    pub vector: Vec<f64>,
}

/// Upper bound for the first nonzero eigenvalue from the piecewise-affine
/// test function equal to 1 on the minus region, `1 - 2 a eta` on the plus
/// region and affine in `rho` across the collar, with `a` chosen so the
/// weighted mean vanishes.
pub fn test_function_bound(geom: &CollarGeometry, field: &ConformalField, pair: &OperatorPair) -> Result<TestFunctionBound> {
    if !geom.grid_aligned {
        return Err(Error::NotGridAligned {
            eta: geom.eta,
            spacing: geom.spacing.unwrap_or(f64::NAN),
        });
    }
    if field.profile != Profile::Step {
        return Err(Error::invalid("test-function bound is defined for the step profile"));
    }
    let half = geom.dim as f64 / 2.0;
    let eta = geom.eta;
    let (eps_w, kap_w) = (field.epsilon.powf(half), field.kappa.powf(half));
    let collar_moment: Vec<f64> = geom
        .region
        .iter()
        .zip(&geom.cell_volume)
        .zip(&geom.cell_rho)
        .map(|((&r, &v), &rho)| if r == Region::Collar { v * (eta + rho) } else { 0.0 })
        .collect();
    let collar_moment = pairwise_sum(&collar_moment);
    let slope = (kap_w * geom.vol_complement() + eps_w * geom.vol_collar)
        / (2.0 * eta * kap_w * geom.vol_plus + eps_w * collar_moment);
    let mut u: Vec<f64> = pair
        .dofs
        .iter()
        .map(|&v| 1.0 - slope * (eta + geom.rho[v].clamp(-eta, eta)))
        .collect();
    let weights = pair.mass_weights();
    let total: f64 = weights.iter().sum();
    let mean_before = dot(&weights, &u);
    let shift = mean_before / total;
    u.iter_mut().for_each(|x| *x -= shift);
    let bound = rayleigh_quotient(pair, &u)?;
    Ok(TestFunctionBound {
        bound,
        slope,
        mean_before,
        vector: u,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::assembly::assemble;
    use crate::mesh::build_box_grid;
    use crate::metric::{build_conformal_field, Sigma};
    use std::f64::consts::PI;

    fn setup(n: usize, eps: f64) -> (CollarGeometry, ConformalField, OperatorPair) {
        let mesh = build_box_grid(3, n, None).unwrap();
        let geom = CollarGeometry::from_sigma(&mesh, &Sigma::Plane { offset: 0.5 }, 0.125).unwrap();
        let field = build_conformal_field(&geom, eps, Profile::Step).unwrap();
        let pair = assemble(&mesh, &field).unwrap();
        (geom, field, pair)
    }

    #[test]
    fn flat_box_spectrum() {
        let (_, _, pair) = setup(8, 1.0);
        let res = solve_smallest(&pair, &SolverOptions::new(5, 1e-9).with_estimate(PI * PI)).unwrap();
        assert!(res.eigenvalues[0] <= 1e-9);
        for k in 1..4 {
            assert!((res.eigenvalues[k] / (PI * PI) - 1.0).abs() < 0.05, "{:?}", res.eigenvalues);
        }
        assert!(res.eigenvalues[4] > 1.5 * PI * PI);
        assert!(res.residuals.iter().all(|&r| r <= 1e-9));
        for i in 0..5 {
            for j in 0..5 {
                let ip = pair.m.bilinear(&res.eigenvectors[i], &res.eigenvectors[j]);
                assert!((ip - if i == j { 1.0 } else { 0.0 }).abs() < 1e-8);
            }
        }
    }

    #[test]
    fn normalization_and_sign_convention() {
        let (geom, _, pair) = setup(6, 0.01);
        let res = solve_smallest(&pair, &SolverOptions::new(3, 1e-9)).unwrap();
        let fixed = normalize_and_sign(&res, &pair, &geom).unwrap();
        let again = normalize_and_sign(&fixed, &pair, &geom).unwrap();
        assert_eq!(fixed.eigenvectors, again.eigenvectors);
        let mut negated = fixed.clone();
        negated.eigenvectors[1].iter_mut().for_each(|x| *x = -*x);
        let back = normalize_and_sign(&negated, &pair, &geom).unwrap();
        for (a, b) in back.eigenvectors[1].iter().zip(&fixed.eigenvectors[1]) {
            assert!((a - b).abs() < 1e-14);
        }
        // plateau signs
        let u = &fixed.eigenvectors[1];
        for (&v, &x) in pair.dofs.iter().zip(u) {
            if geom.rho[v] >= 2.0 * geom.eta {
                assert!(x > 0.0);
            }
            if geom.rho[v] <= -2.0 * geom.eta {
                assert!(x < 0.0);
            }
        }
    }

    #[test]
    fn quotients_and_min_max() {
        let (geom, field, pair) = setup(6, 0.05);
        let res = solve_smallest(&pair, &SolverOptions::new(3, 1e-10)).unwrap();
        for k in 0..3 {
            let q = rayleigh_quotient(&pair, &res.eigenvectors[k]).unwrap();
            assert!((q - res.eigenvalues[k]).abs() <= 1e-8 * res.eigenvalues[k].max(1.0));
        }
        assert!(rayleigh_quotient(&pair, &vec![1.0; pair.len()]).unwrap().abs() < 1e-12);
        assert!(rayleigh_quotient(&pair, &vec![0.0; pair.len()]).is_err());
        let tb = test_function_bound(&geom, &field, &pair).unwrap();
        assert!(tb.bound >= res.eigenvalues[1]);
        assert!(tb.mean_before.abs() <= 1e-10);
        assert!(pair.m.bilinear(&tb.vector, &vec![1.0; pair.len()]).abs() <= 1e-10);
    }

    #[test]
    fn conformal_scaling_divides_eigenvalues() {
        let mesh = build_box_grid(3, 4, None).unwrap();
        let geom = CollarGeometry::from_sigma(&mesh, &Sigma::Plane { offset: 0.5 }, 0.25).unwrap();
        let field = build_conformal_field(&geom, 0.1, Profile::Step).unwrap();
        let a = assemble(&mesh, &field).unwrap();
        let b = assemble(&mesh, &field.scaled(4.0)).unwrap();
        let ra = normalize_and_sign(&solve_smallest(&a, &SolverOptions::new(3, 1e-11)).unwrap(), &a, &geom).unwrap();
        let rb = normalize_and_sign(&solve_smallest(&b, &SolverOptions::new(3, 1e-11)).unwrap(), &b, &geom).unwrap();
        assert!((rb.eigenvalues[1] * 4.0 / ra.eigenvalues[1] - 1.0).abs() < 1e-9);
        // unit-mass vectors differ by the constant factor 4^{-3/4}
        let c = 4f64.powf(-0.75);
        for (x, y) in ra.eigenvectors[1].iter().zip(&rb.eigenvectors[1]) {
            assert!((x * c - y).abs() < 1e-7);
        }
    }

    #[test]
    fn unaligned_eta_is_refused() {
        let mesh = build_box_grid(3, 4, None).unwrap();
        let geom = CollarGeometry::from_sigma(&mesh, &Sigma::Plane { offset: 0.4 }, 0.25).unwrap();
        let field = build_conformal_field(&geom, 0.1, Profile::Step).unwrap();
        let pair = assemble(&mesh, &field).unwrap();
        assert!(matches!(
            test_function_bound(&geom, &field, &pair),
            Err(Error::NotGridAligned { .. })
        ));
    }
}
