//! One-dimensional Sturm-Liouville reference solver for fields that depend
//! only on the distance coordinate, and log-log scaling fits.

use std::sync::Arc;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::mesh::WarpProfile;
use crate::metric::kappa;

type Coefficients = Arc<dyn Fn(f64) -> (f64, f64) + Send + Sync>;

/// `-(p u')' = lambda q u` on `(0, 1)` with natural ends, discretized by P1
/// elements on `n` uniform cells with coefficients sampled at cell midpoints.
#[derive(Clone)]
pub struct Profile1D {
    pub n: usize,
    coeffs: Coefficients,
}

impl std::fmt::Debug for Profile1D {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Profile1D").field("n", &self.n).finish_non_exhaustive()
    }
}

/// Product-scene parameters: conformal step of depth `epsilon` on
/// `|t - offset| < eta`, cross-section factor `w(t - offset)^(d-1)`.
#[derive(Clone, Debug, PartialEq)]
pub struct StepScene {
    pub d: usize,
    pub epsilon: f64,
    pub eta: f64,
    pub offset: f64,
    pub warp: Option<WarpProfile>,
}

impl Profile1D {
    /// `coeffs(t)` returns `(p(t), q(t))`.
    pub fn new(n: usize, coeffs: impl Fn(f64) -> (f64, f64) + Send + Sync + 'static) -> Self {
        Profile1D {
            n,
            coeffs: Arc::new(coeffs),
        }
    }

    pub fn flat(n: usize) -> Self {
        Profile1D::new(n, |_| (1.0, 1.0))
    }

    /// Step conformal profile with `kappa` fixed by the exact volumes of the scene.
    pub fn step(scene: &StepScene, n: usize) -> Result<Self> {
        let d = scene.d;
        let area = {
            let warp = scene.warp.clone();
            let offset = scene.offset;
            move |t: f64| match &warp {
                Some(w) => w.eval(t - offset).powi(d as i32 - 1),
                None => 1.0,
            }
        };
        let (lo, hi) = ((scene.offset - scene.eta).max(0.0), (scene.offset + scene.eta).min(1.0));
        let total = adaptive_simpson(&area, 0.0, 1.0, 1e-13);
        let collar = adaptive_simpson(&area, lo, hi, 1e-13);
        let k = kappa(scene.epsilon, collar, total - collar, d)?;
        let (eps, eta, offset) = (scene.epsilon, scene.eta, scene.offset);
        let half = d as f64 / 2.0;
        Ok(Profile1D::new(n, move |t| {
            let f = if (t - offset).abs() < eta { eps } else { k };
            let a = area(t);
            (f.powf(half - 1.0) * a, f.powf(half) * a)
        }))
    }

    pub fn with_resolution(&self, n: usize) -> Self {
        Profile1D {
            n,
            coeffs: self.coeffs.clone(),
        }
    }

    fn sampled(&self) -> Result<(Vec<f64>, Vec<f64>)> {
        let h = 1.0 / self.n as f64;
        let mut p = Vec::with_capacity(self.n);
        let mut q = Vec::with_capacity(self.n);
        for i in 0..self.n {
            let (pi, qi) = (self.coeffs)((i as f64 + 0.5) * h);
            if !(pi > 0.0 && qi > 0.0) {
                return Err(Error::invalid(format!("non-positive coefficient on cell {i}")));
            }
            p.push(pi);
            q.push(qi);
        }
        Ok((p, q))
    }
}

/// Symmetric tridiagonal pencil `(K, M)`.
struct Pencil {
    kd: Vec<f64>,
    ko: Vec<f64>,
    md: Vec<f64>,
    mo: Vec<f64>,
}

impl Pencil {
    fn assemble(p: &[f64], q: &[f64]) -> Pencil {
        let n = p.len();
        let h = 1.0 / n as f64;
        let mut kd = vec![0.0; n + 1];
        let mut md = vec![0.0; n + 1];
        let mut ko = vec![0.0; n];
        let mut mo = vec![0.0; n];
        for e in 0..n {
            let (s, m) = (p[e] / h, q[e] * h / 6.0);
            kd[e] += s;
            kd[e + 1] += s;
            ko[e] = -s;
            md[e] += 2.0 * m;
            md[e + 1] += 2.0 * m;
            mo[e] = m;
        }
        Pencil { kd, ko, md, mo }
    }

    /// Number of eigenvalues strictly below `lambda` (Sylvester inertia).
    fn count_below(&self, lambda: f64) -> usize {
        let mut count = 0;
        let mut prev = 1.0;
        for i in 0..self.kd.len() {
            let a = self.kd[i] - lambda * self.md[i];
            let mut piv = if i == 0 {
                a
            } else {
                let b = self.ko[i - 1] - lambda * self.mo[i - 1];
                a - b * b / prev
            };
            if piv == 0.0 {
                piv = -f64::MIN_POSITIVE;
            }
            if piv < 0.0 {
                count += 1;
            }
            prev = piv;
        }
        count
    }

    fn eigenvalue(&self, k: usize) -> f64 {
        let mut hi = 1.0;
        while self.count_below(hi) <= k {
            hi *= 2.0;
        }
        let mut lo = if k == 0 { -1.0 } else { 0.0 };
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if mid <= lo || mid >= hi {
                break;
            }
            if self.count_below(mid) > k {
                hi = mid;
            } else {
                lo = mid;
            }
            if hi - lo <= 1e-15 * hi.abs() {
                break;
            }
        }
        0.5 * (lo + hi)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct OracleEigenvalues {
    pub n: usize,
    /// Eigenvalues on `n` cells, starting with the zero mode.
    pub coarse: Vec<f64>,
    /// Eigenvalues on `2n` cells.
    pub fine: Vec<f64>,
    /// `(4 fine - coarse) / 3`.
    pub extrapolated: Vec<f64>,
}

fn solve_at(profile: &Profile1D, m: usize) -> Result<Vec<f64>> {
    let (p, q) = profile.sampled()?;
    let pencil = Pencil::assemble(&p, &q);
    Ok((0..m).map(|k| pencil.eigenvalue(k).max(0.0)).collect())
}

/// Smallest `m` eigenvalues (zero mode included) on `n` and `2n` cells with
/// Richardson extrapolation.
pub fn sturm_liouville_neumann(profile: &Profile1D, m: usize) -> Result<OracleEigenvalues> {
    if profile.n < 64 {
        return Err(Error::invalid("oracle resolution must be at least 64 cells"));
    }
    if m == 0 || m > profile.n {
        return Err(Error::invalid(format!("cannot compute {m} modes on {} cells", profile.n)));
    }
    let coarse = solve_at(profile, m)?;
    let fine = solve_at(&profile.with_resolution(2 * profile.n), m)?;
    let extrapolated = coarse.iter().zip(&fine).map(|(c, f)| (4.0 * f - c) / 3.0).collect();
    Ok(OracleEigenvalues {
        n: profile.n,
        coarse,
        fine,
        extrapolated,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ScalingFit {
    pub slope: f64,
    pub intercept: f64,
    pub max_residual: f64,
}

/// Least-squares fit `log lambda = slope * log eps + intercept`.
pub fn scaling_fit(epsilons: &[f64], lambdas: &[f64]) -> Result<ScalingFit> {
    if epsilons.len() != lambdas.len() {
        return Err(Error::invalid("length mismatch"));
    }
    if epsilons.len() < 3 {
        return Err(Error::invalid("need at least three points"));
    }
    if epsilons.iter().chain(lambdas).any(|&x| !(x > 0.0)) {
        return Err(Error::invalid("scaling data must be positive"));
    }
    let xs: Vec<f64> = epsilons.iter().map(|e| e.ln()).collect();
    let ys: Vec<f64> = lambdas.iter().map(|l| l.ln()).collect();
    let n = xs.len() as f64;
    let (mx, my) = (xs.iter().sum::<f64>() / n, ys.iter().sum::<f64>() / n);
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    if sxx == 0.0 {
        return Err(Error::invalid("all epsilons coincide"));
    }
    let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let max_residual = xs
        .iter()
        .zip(&ys)
        .map(|(x, y)| (y - slope * x - intercept).abs())
        .fold(0.0, f64::max);
    Ok(ScalingFit {
        slope,
        intercept,
        max_residual,
    })
}

/// Adaptive Simpson quadrature with absolute tolerance `tol`.
pub fn adaptive_simpson(f: &dyn Fn(f64) -> f64, a: f64, b: f64, tol: f64) -> f64 {
    fn rec(f: &dyn Fn(f64) -> f64, a: f64, b: f64, fa: f64, fm: f64, fb: f64, whole: f64, tol: f64, depth: u32) -> f64 {
        let m = 0.5 * (a + b);
        let (lm, rm) = (0.5 * (a + m), 0.5 * (m + b));
        let (flm, frm) = (f(lm), f(rm));
        let left = (m - a) / 6.0 * (fa + 4.0 * flm + fm);
        let right = (b - m) / 6.0 * (fm + 4.0 * frm + fb);
        let delta = left + right - whole;
        if depth == 0 || delta.abs() <= 15.0 * tol {
            return left + right + delta / 15.0;
        }
        rec(f, a, m, fa, flm, fm, left, 0.5 * tol, depth - 1) + rec(f, m, b, fm, frm, fb, right, 0.5 * tol, depth - 1)
    }
    if a == b {
        return 0.0;
    }
    let (fa, fb, fm) = (f(a), f(b), f(0.5 * (a + b)));
    let whole = (b - a) / 6.0 * (fa + 4.0 * fm + fb);
    rec(f, a, b, fa, fm, fb, whole, tol, 48)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    #[test]
    fn flat_interval_spectrum() {
        let r = sturm_liouville_neumann(&Profile1D::flat(512), 4).unwrap();
        assert!(r.coarse[0].abs() < 1e-10);
        for k in 1..4 {
            let exact = (k as f64 * PI).powi(2);
            assert!((r.coarse[k] / exact - 1.0).abs() < 1e-3 * (k * k) as f64);
            assert!((r.extrapolated[k] / exact - 1.0).abs() < 1e-8);
        }
    }

    #[test]
    fn unit_step_equals_flat() {
        let scene = StepScene {
            d: 3,
            epsilon: 1.0,
            eta: 0.125,
            offset: 0.5,
            warp: None,
        };
        let a = sturm_liouville_neumann(&Profile1D::step(&scene, 256).unwrap(), 3).unwrap();
        let b = sturm_liouville_neumann(&Profile1D::flat(256), 3).unwrap();
        for k in 0..3 {
            assert!((a.coarse[k] - b.coarse[k]).abs() <= 1e-12 * b.coarse[k].max(1.0));
        }
    }

    #[test]
    fn second_order_convergence() {
        let e: Vec<f64> = [64, 128, 256]
            .iter()
            .map(|&n| solve_at(&Profile1D::flat(n), 2).unwrap()[1] - PI * PI)
            .collect();
        for w in e.windows(2) {
            let ratio = w[0] / w[1];
            assert!((3.5..=4.5).contains(&ratio), "{ratio}");
        }
    }

    #[test]
    fn fits() {
        let eps = [1e-1, 1e-2, 1e-3];
        let f = scaling_fit(&eps, &eps).unwrap();
        assert!((f.slope - 1.0).abs() < 1e-12 && f.max_residual < 1e-12);
        let lam: Vec<f64> = eps.iter().map(|e| 7.0 * e.sqrt()).collect();
        let f = scaling_fit(&eps, &lam).unwrap();
        assert!((f.slope - 0.5).abs() < 1e-12);
        assert!((f.intercept - 7f64.ln()).abs() < 1e-12);
        assert!(scaling_fit(&eps, &[1.0, 0.0, 1.0]).is_err());
        assert!(scaling_fit(&eps[..2], &eps[..2]).is_err());
    }

    #[test]
    fn simpson() {
        let v = adaptive_simpson(&|x: f64| (1.0 + x).powi(-2), -0.2, 0.2, 1e-13);
        assert!((v - (1.0 / 0.8 - 1.0 / 1.2)).abs() < 1e-12);
    }
}
