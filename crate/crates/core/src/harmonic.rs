//! Plateau constants, the collar harmonic function and its affine model, the
//! sine-series collar solver, and the exact warped-product reduction.

use std::f64::consts::PI;

use rayon::prelude::*;
use serde::Serialize;

use crate::assembly::{assemble_reference_on, restrict_dirichlet};
use crate::error::{Error, Result};
use crate::mesh::{Mesh, WarpProfile};
use crate::metric::{kappa0, CollarGeometry, Region};
use crate::oracle::adaptive_simpson;
use crate::util::gauss_legendre;

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct PlateauConstants {
    pub c_plus: f64,
    pub c_minus: f64,
    pub kappa0: f64,
}

impl PlateauConstants {
    pub fn jump(&self) -> f64 {
        self.c_plus - self.c_minus
    }
}

/// Solves `c+^2 V+ + c-^2 V- = kappa0^(-d/2)` and `c+ V+ + c- V- = 0` with `c+ > 0`.
pub fn compute_plateaus(vol_plus: f64, vol_minus: f64, kappa0: f64, d: usize) -> Result<PlateauConstants> {
    if !(vol_plus > 0.0 && vol_minus > 0.0) {
        return Err(Error::invalid("plateau volumes must be positive"));
    }
    if !(kappa0 > 0.0) {
        return Err(Error::invalid("kappa0 must be positive"));
    }
    let c_plus = kappa0.powf(-(d as f64) / 4.0) * (vol_minus / (vol_plus * (vol_plus + vol_minus))).sqrt();
    Ok(PlateauConstants {
        c_plus,
        c_minus: -c_plus * vol_plus / vol_minus,
        kappa0,
    })
}

/// Plateau constants from the discrete volumes of a collar partition.
pub fn plateaus_for(geom: &CollarGeometry) -> Result<PlateauConstants> {
    let k0 = kappa0(geom.vol_collar, geom.vol_complement(), geom.dim)?;
    compute_plateaus(geom.vol_plus, geom.vol_minus, k0, geom.dim)
}

/// Affine model `(c+ + c-)/2 + (c+ - c-) rho / (2 eta)`.
pub fn hbar(rho: f64, eta: f64, consts: &PlateauConstants) -> Result<f64> {
    if !(eta > 0.0) {
        return Err(Error::invalid("eta must be positive"));
    }
    Ok(0.5 * (consts.c_plus + consts.c_minus) + consts.jump() / (2.0 * eta) * rho)
}

#[derive(Clone, Debug, Serialize)]
pub struct HarmonicSolution {
    /// Vertices of the closed collar, ascending.
    pub vertices: Vec<usize>,
    pub h: Vec<f64>,
    pub hbar: Vec<f64>,
    pub sup_deviation: f64,
    /// Reference-metric L2 norm of `h - hbar` over the collar.
    pub l2_deviation: f64,
}

impl HarmonicSolution {
    /// Scatters `h` into a vertex field, `NaN` off the collar.
    pub fn vertex_field(&self, num_vertices: usize) -> Vec<f64> {
        let mut out = vec![f64::NAN; num_vertices];
        for (&v, &x) in self.vertices.iter().zip(&self.h) {
            out[v] = x;
        }
        out
    }
}

/// Reference-metric harmonic function on the collar equal to `c+` on the
/// interface with the plus region and `c-` on the interface with the minus
/// region, natural conditions elsewhere.
pub fn solve_harmonic(mesh: &Mesh, geom: &CollarGeometry, consts: &PlateauConstants) -> Result<HarmonicSolution> {
    let collar = geom.cells_in(Region::Collar);
    let pair = assemble_reference_on(mesh, &collar)?;
    let mut touches = vec![(false, false); mesh.num_vertices()];
    for c in 0..mesh.num_cells() {
        let side = geom.region[c];
        for &v in mesh.cell(c) {
            match side {
                Region::Plus => touches[v].0 = true,
                Region::Minus => touches[v].1 = true,
                Region::Collar => {}
            }
        }
    }
    let mut boundary = Vec::new();
    let mut values = Vec::new();
    for (i, &v) in pair.dofs.iter().enumerate() {
        match touches[v] {
            (true, true) => return Err(Error::NotSeparating(format!("vertex {v} touches both outer regions"))),
            (true, false) => {
                boundary.push(i);
                values.push(consts.c_plus);
            }
            (false, true) => {
                boundary.push(i);
                values.push(consts.c_minus);
            }
            _ => {}
        }
    }
    let h = restrict_dirichlet(&pair, &boundary, &values)?
        .solve()
        .map_err(|e| e.at_stage("collar harmonic solve"))?;
    let hb: Vec<f64> = pair
        .dofs
        .iter()
        .map(|&v| hbar(geom.rho[v].clamp(-geom.eta, geom.eta), geom.eta, consts))
        .collect::<Result<_>>()?;
    let diff: Vec<f64> = h.iter().zip(&hb).map(|(a, b)| a - b).collect();
    let sup_deviation = diff.iter().fold(0.0_f64, |m, x| m.max(x.abs()));
    let l2_deviation = pair.m.bilinear(&diff, &diff).max(0.0).sqrt();
    Ok(HarmonicSolution {
        vertices: pair.dofs,
        h,
        hbar: hb,
        sup_deviation,
        l2_deviation,
    })
}

/// Exact collar harmonic function of a warped product `d rho^2 + w(rho)^2 g_Sigma`
/// for boundary data independent of the cross-section.
#[derive(Clone, Debug)]
pub struct WarpedHarmonic1D {
    profile: WarpProfile,
    eta: f64,
    d: usize,
    consts: PlateauConstants,
    total: f64,
    tol: f64,
}

impl WarpedHarmonic1D {
    fn density(&self, rho: f64) -> f64 {
        self.profile.eval(rho).powi(1 - self.d as i32)
    }

    pub fn eval(&self, rho: f64) -> f64 {
        let r = rho.clamp(-self.eta, self.eta);
        if r == -self.eta {
            return self.consts.c_minus;
        }
        if r == self.eta {
            return self.consts.c_plus;
        }
        let part = adaptive_simpson(&|t| self.density(t), -self.eta, r, self.tol);
        self.consts.c_minus + self.consts.jump() * part / self.total
    }
}

pub fn warped_harmonic_1d(
    profile: &WarpProfile,
    eta: f64,
    consts: &PlateauConstants,
    d: usize,
    tol: f64,
) -> Result<WarpedHarmonic1D> {
    if !(eta > 0.0) {
        return Err(Error::invalid("eta must be positive"));
    }
    for i in 0..=1024 {
        let rho = -eta + 2.0 * eta * i as f64 / 1024.0;
        let w = profile.eval(rho);
        if !(w > 0.0) {
            return Err(Error::invalid(format!("non-positive warp {w} at rho = {rho}")));
        }
    }
    let mut out = WarpedHarmonic1D {
        profile: profile.clone(),
        eta,
        d,
        consts: *consts,
        total: 1.0,
        tol,
    };
    out.total = adaptive_simpson(&|t| out.density(t), -eta, eta, tol);
    Ok(out)
}

/// Cell-centered tensor grid on a box cross-section with natural boundary conditions.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct CrossSection {
    pub resolution: Vec<usize>,
    pub lengths: Vec<f64>,
}

impl CrossSection {
    /// A single sample: only cross-section-independent fields are representable.
    pub fn point() -> Self {
        CrossSection {
            resolution: vec![],
            lengths: vec![],
        }
    }

    pub fn len(&self) -> usize {
        self.resolution.iter().product()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    fn spacing(&self, axis: usize) -> f64 {
        self.lengths[axis] / self.resolution[axis] as f64
    }

    fn strides(&self) -> Vec<usize> {
        let mut s = vec![1; self.resolution.len()];
        for a in 1..self.resolution.len() {
            s[a] = s[a - 1] * self.resolution[a - 1];
        }
        s
    }

    fn multi_index(&self, mut i: usize) -> Vec<usize> {
        self.resolution
            .iter()
            .map(|&m| {
                let k = i % m;
                i /= m;
                k
            })
            .collect()
    }

    pub fn sample_point(&self, i: usize) -> Vec<f64> {
        self.multi_index(i)
            .iter()
            .enumerate()
            .map(|(a, &k)| (k as f64 + 0.5) * self.spacing(a))
            .collect()
    }

    /// Eigenvalues of `-Delta_Sigma` for each cosine mode, in mode order.
    pub fn eigenvalues(&self) -> Vec<f64> {
        (0..self.len())
            .map(|i| {
                self.multi_index(i)
                    .iter()
                    .enumerate()
                    .map(|(a, &k)| {
                        let h = self.spacing(a);
                        (2.0 - 2.0 * (PI * k as f64 / self.resolution[a] as f64).cos()) / (h * h)
                    })
                    .sum()
            })
            .collect()
    }

    /// Separable cosine transform; `inverse` maps mode amplitudes back to samples.
    fn transform(&self, data: &[f64], inverse: bool) -> Vec<f64> {
        let mut cur = data.to_vec();
        let strides = self.strides();
        for (a, &m) in self.resolution.iter().enumerate() {
            let stride = strides[a];
            let mut next = vec![0.0; cur.len()];
            for base in 0..cur.len() {
                if !(base / stride).is_multiple_of(m) {
                    continue;
                }
                for k in 0..m {
                    let mut s = 0.0;
                    for j in 0..m {
                        let x = cur[base + j * stride];
                        s += if inverse {
                            let alpha = if j == 0 { 1.0 } else { 2.0 };
                            alpha / m as f64 * x * (PI * j as f64 * (k as f64 + 0.5) / m as f64).cos()
                        } else {
                            x * (PI * k as f64 * (j as f64 + 0.5) / m as f64).cos()
                        };
                    }
                    next[base + k * stride] = s;
                }
            }
            cur = next;
        }
        cur
    }

    fn laplacian(&self, data: &[f64], eig: &[f64]) -> Vec<f64> {
        let hat = self.transform(data, false);
        let scaled: Vec<f64> = hat.iter().zip(eig).map(|(x, l)| -x * l).collect();
        self.transform(&scaled, true)
    }

    /// Centered differences with mirrored ghost cells.
    fn gradient(&self, data: &[f64]) -> Vec<Vec<f64>> {
        let strides = self.strides();
        (0..self.resolution.len())
            .map(|a| {
                let (m, s, h) = (self.resolution[a], strides[a], self.spacing(a));
                (0..data.len())
                    .map(|i| {
                        let k = (i / s) % m;
                        let lo = if k == 0 { data[i] } else { data[i - s] };
                        let hi = if k + 1 == m { data[i] } else { data[i + s] };
                        (hi - lo) / (2.0 * h)
                    })
                    .collect()
            })
            .collect()
    }
}

type Field = Box<dyn Fn(f64, &[f64]) -> f64 + Send + Sync>;
type VectorField = Box<dyn Fn(f64, &[f64]) -> Vec<f64> + Send + Sync>;

/// Forcing and coefficients of the collar equation in `(sigma, y)`,
/// `sigma = (rho + eta) pi / (2 eta)`.
pub struct CollarCoefficients {
    pub forcing: Field,
    pub g1: Field,
    pub g2: Field,
    pub g3: VectorField,
}

impl CollarCoefficients {
    pub fn zero() -> Self {
        CollarCoefficients {
            forcing: Box::new(|_, _| 0.0),
            g1: Box::new(|_, _| 0.0),
            g2: Box::new(|_, _| 0.0),
            g3: Box::new(|_, y| vec![0.0; y.len()]),
        }
    }

    /// Coefficients of `h - hbar` on the warped product `d rho^2 + w(rho)^2 g_Sigma`.
    pub fn warped(profile: &WarpProfile, eta: f64, consts: &PlateauConstants, d: usize) -> Self {
        let rho = move |s: f64| 2.0 * eta * s / PI - eta;
        let (p1, p2) = (profile.clone(), profile.clone());
        let g1 = std::sync::Arc::new(move |s: f64| {
            let r = rho(s);
            -(d as f64 - 1.0) * 0.5 * PI * p1.derivative(r) / p1.eval(r)
        });
        let g1f = g1.clone();
        let jump = consts.jump();
        CollarCoefficients {
            forcing: Box::new(move |s, _| g1f(s) * jump / PI),
            g1: Box::new(move |s, _| g1(s)),
            g2: Box::new(move |s, _| (1.0 - p2.eval(rho(s)).powi(-2)) / eta),
            g3: Box::new(|_, y| vec![0.0; y.len()]),
        }
    }
}

#[derive(Clone, Debug)]
pub struct FourierOptions {
    pub n_sigma: usize,
    pub tol: f64,
    pub max_iterations: usize,
}

impl Default for FourierOptions {
    fn default() -> Self {
        FourierOptions {
            n_sigma: 64,
            tol: 1e-10,
            max_iterations: 200,
        }
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct FourierSolution {
    pub eta: f64,
    /// `modes[n - 1][j]`: coefficient of `sin(n sigma)` at cross-section sample `j`.
    pub modes: Vec<Vec<f64>>,
    pub iterations: usize,
    /// Last observed ratio of successive update norms.
    pub contraction: f64,
}

impl FourierSolution {
    pub fn eval_sigma(&self, sigma: f64, sample: usize) -> f64 {
        self.modes
            .iter()
            .enumerate()
            .map(|(k, m)| m[sample] * ((k + 1) as f64 * sigma).sin())
            .sum()
    }

    pub fn eval_rho(&self, rho: f64, sample: usize) -> f64 {
        self.eval_sigma((rho + self.eta) * PI / (2.0 * self.eta), sample)
    }
}

/// Fixed-point iteration
/// `w_n = -(pi^2 n^2 / (4 eta^2) - Delta_Sigma)^(-1) (F_n / eta + (L w)_n)`
/// on the sine coefficients in `sigma`, with
/// `L w = (G1 / eta) w_sigma + eta G2 Delta_Sigma w + eta G3 . grad_y w`.
pub fn collar_fourier_solve(
    section: &CrossSection,
    eta: f64,
    coeffs: &CollarCoefficients,
    opts: &FourierOptions,
) -> Result<FourierSolution> {
    if !(eta > 0.0) {
        return Err(Error::invalid("eta must be positive"));
    }
    let nm = opts.n_sigma;
    if nm == 0 {
        return Err(Error::invalid("need at least one sine mode"));
    }
    let ny = section.len().max(1);
    let nq = 4 * nm + 16;
    let (nodes, weights) = gauss_legendre(nq, 0.0, PI);
    let ys: Vec<Vec<f64>> = (0..ny).map(|j| section.sample_point(j)).collect();
    let eig = section.eigenvalues();
    let eig = if eig.is_empty() { vec![0.0] } else { eig };

    let sample = |f: &Field| -> Vec<Vec<f64>> {
        nodes.iter().map(|&s| ys.iter().map(|y| f(s, y)).collect()).collect()
    };
    let forcing = sample(&coeffs.forcing);
    let g1 = sample(&coeffs.g1);
    let g2 = sample(&coeffs.g2);
    let g3: Vec<Vec<Vec<f64>>> = nodes
        .iter()
        .map(|&s| ys.iter().map(|y| (coeffs.g3)(s, y)).collect())
        .collect();
    let sines: Vec<Vec<f64>> = (1..=nm).map(|n| nodes.iter().map(|&s| (n as f64 * s).sin()).collect()).collect();
    let cosines: Vec<Vec<f64>> = (1..=nm).map(|n| nodes.iter().map(|&s| (n as f64 * s).cos()).collect()).collect();

    let project = |field: &[Vec<f64>]| -> Vec<Vec<f64>> {
        (0..nm)
            .into_par_iter()
            .map(|k| {
                (0..ny)
                    .map(|j| {
                        2.0 / PI * (0..nq).map(|q| weights[q] * field[q][j] * sines[k][q]).sum::<f64>()
                    })
                    .collect()
            })
            .collect()
    };
    let forcing_modes = project(&forcing);
    let has_y = !section.resolution.is_empty();

    // Applies -(a - Delta_Sigma)^(-1) in the cosine basis.
    let invert = |rhs: &[f64], a: f64| -> Vec<f64> {
        if !has_y {
            return rhs.iter().map(|x| -x / a).collect();
        }
        let hat = section.transform(rhs, false);
        let sol: Vec<f64> = hat.iter().zip(&eig).map(|(x, l)| -x / (a + l)).collect();
        section.transform(&sol, true)
    };

    let mut modes = vec![vec![0.0; ny]; nm];
    let mut prev_update = f64::NAN;
    let mut contraction = 0.0;
    let mut growth = 0;
    for it in 1..=opts.max_iterations {
        // L w at the quadrature nodes.
        let residual: Vec<Vec<f64>> = (0..nq)
            .into_par_iter()
            .map(|q| {
                let mut w = vec![0.0; ny];
                let mut ws = vec![0.0; ny];
                for k in 0..nm {
                    let (sn, cs) = (sines[k][q], (k + 1) as f64 * cosines[k][q]);
                    for j in 0..ny {
                        w[j] += modes[k][j] * sn;
                        ws[j] += modes[k][j] * cs;
                    }
                }
                let (lap, grad) = if has_y {
                    (section.laplacian(&w, &eig), section.gradient(&w))
                } else {
                    (vec![0.0; ny], vec![])
                };
                (0..ny)
                    .map(|j| {
                        let mut r = g1[q][j] / eta * ws[j] + eta * g2[q][j] * lap[j];
                        for (a, g) in grad.iter().enumerate() {
                            r += eta * g3[q][j][a] * g[j];
                        }
                        r
                    })
                    .collect()
            })
            .collect();
        let residual_modes = project(&residual);
        let next: Vec<Vec<f64>> = (0..nm)
            .into_par_iter()
            .map(|k| {
                let n = (k + 1) as f64;
                let rhs: Vec<f64> = (0..ny)
                    .map(|j| forcing_modes[k][j] / eta + residual_modes[k][j])
                    .collect();
                invert(&rhs, PI * PI * n * n / (4.0 * eta * eta))
            })
            .collect();
        let mut update = 0.0;
        for k in 0..nm {
            let n4 = ((k + 1) as f64).powi(4);
            let delta: Vec<f64> = next[k].iter().zip(&modes[k]).map(|(a, b)| a - b).collect();
            let lap = if has_y { section.laplacian(&delta, &eig) } else { vec![0.0; ny] };
            update += delta.iter().zip(&lap).map(|(d, l)| n4 * d * d + l * l).sum::<f64>() / ny as f64;
        }
        let update = update.sqrt();
        modes = next;
        if prev_update.is_finite() && prev_update > 0.0 {
            contraction = update / prev_update;
            growth = if contraction > 1.0 { growth + 1 } else { 0 };
            if growth >= 3 || !update.is_finite() {
                return Err(Error::Divergence { ratio: contraction });
            }
        }
        prev_update = update;
        if update * update < opts.tol {
            return Ok(FourierSolution {
                eta,
                modes,
                iterations: it,
                contraction,
            });
        }
    }
    Err(Error::NoConvergence {
        iterations: opts.max_iterations,
        residual: prev_update,
    })
}
