use std::f64::consts::PI;
use std::time::Instant;

use rayon::prelude::*;

use super::config::{ScenarioConfig, ScenarioKind, SceneKind};
use super::report::{Report, Table, Threshold};
use crate::assembly::{assemble, subdomain_neumann, OperatorPair};
use crate::eigen::{normalize_and_sign, solve_smallest, test_function_bound, EigenResult, SolverOptions};
use crate::error::{Error, Result};
use crate::harmonic::{
    collar_fourier_solve, hbar, plateaus_for, solve_harmonic, warped_harmonic_1d, CollarCoefficients, CrossSection,
    FourierOptions, HarmonicSolution, PlateauConstants,
};
use crate::mesh::{build_box_grid_with_resolution, build_periodic_grid_2d, load_mesh, Mesh, Warp};
use crate::metric::{
    build_conformal_field, verify_volume_preservation, volume_rescaling, CollarGeometry, ConformalField,
    LevelFunction, Profile, Region, Sigma,
};
use crate::morse::{betti_bound_check, classify_critical_points};
use crate::nodal::{
    extract_nodal_set, format_polygon_soup, localization_report, nodal_domain_count, regularity_min_gradient,
    single_crossing_check,
};
use crate::oracle::{scaling_fit, sturm_liouville_neumann, Profile1D, StepScene};

/// Resolution of the 1D problem used only to place the shift.
const ESTIMATE_N: usize = 256;

/// Runs `f` as a named stage, recording its wall time and tagging errors.
fn stage<T>(report: &mut Report, name: &str, f: impl FnOnce() -> Result<T>) -> Result<T> {
    let start = Instant::now();
    let out = f().map_err(|e| e.at_stage(name));
    report.timings.insert(name.to_string(), start.elapsed().as_secs_f64());
    out
}

pub(super) fn dispatch(cfg: &ScenarioConfig, report: &mut Report) -> Result<()> {
    match cfg.scenario {
        ScenarioKind::Scaling => scaling(cfg, report),
        ScenarioKind::Gap => gap(cfg, report),
        ScenarioKind::Plateau => plateau(cfg, report),
        ScenarioKind::Collar => collar(cfg, report),
        ScenarioKind::HarmonicApprox => harmonic_approx(cfg, report),
        ScenarioKind::Nodal => nodal(cfg, report),
        ScenarioKind::Mollify => mollify(cfg, report),
        ScenarioKind::Morse => morse(cfg, report),
        ScenarioKind::OracleCompare => oracle_compare(cfg, report),
    }
}

fn warp_of(cfg: &ScenarioConfig) -> Option<Warp> {
    match (&cfg.scene, &cfg.warp, &cfg.sigma) {
        (SceneKind::WarpedBox, Some(p), Sigma::Plane { offset }) => Some(Warp {
            profile: p.clone(),
            sigma_offset: *offset,
        }),
        _ => None,
    }
}

pub fn build_mesh(cfg: &ScenarioConfig) -> Result<Mesh> {
    match &cfg.scene {
        SceneKind::File(path) => load_mesh(path),
        SceneKind::Box | SceneKind::WarpedBox => {
            if cfg.scene == SceneKind::WarpedBox && warp_of(cfg).is_none() {
                return Err(Error::invalid("a warped box needs a warp profile and a plane hypersurface"));
            }
            let res = cfg.resolution.clone().unwrap_or_else(|| vec![cfg.n; cfg.d]);
            build_box_grid_with_resolution(&res, warp_of(cfg).as_ref())
        }
    }
}

pub struct Scene {
    pub mesh: Mesh,
    pub geom: CollarGeometry,
}

pub fn build_scene(cfg: &ScenarioConfig, eta: f64) -> Result<Scene> {
    let mesh = build_mesh(cfg)?;
    let geom = CollarGeometry::from_sigma(&mesh, &cfg.sigma, eta)?;
    Ok(Scene { mesh, geom })
}

/// The 1D product problem matching a plane-cut box, if the scene is one.
fn step_scene(cfg: &ScenarioConfig, scene: &Scene, epsilon: f64) -> Option<StepScene> {
    match (&cfg.scene, &cfg.sigma) {
        (SceneKind::Box | SceneKind::WarpedBox, Sigma::Plane { offset }) => Some(StepScene {
            d: scene.mesh.dim(),
            epsilon,
            eta: scene.geom.eta,
            offset: *offset,
            warp: warp_of(cfg).map(|w| w.profile),
        }),
        _ => None,
    }
}

fn oracle_lambda1(s: &StepScene, n: usize) -> Result<f64> {
    let ev = sturm_liouville_neumann(&Profile1D::step(s, n)?, 2)?;
    Ok(ev.coarse[1])
}

struct Solved {
    field: ConformalField,
    pair: OperatorPair,
    eig: EigenResult,
    /// `u1` as a vertex field.
    u1: Vec<f64>,
}

fn solve_field(cfg: &ScenarioConfig, scene: &Scene, field: ConformalField, estimate: Option<f64>) -> Result<Solved> {
    let pair = assemble(&scene.mesh, &field)?;
    let mut opts = SolverOptions::new(cfg.modes.max(3), cfg.tol).with_seed(cfg.seed);
    if let Some(l) = estimate {
        opts = opts.with_estimate(l);
    }
    let raw = solve_smallest(&pair, &opts)?;
    let eig = normalize_and_sign(&raw, &pair, &scene.geom)?;
    let u1 = pair.to_vertex_field(&eig.eigenvectors[1], scene.mesh.num_vertices());
    Ok(Solved { field, pair, eig, u1 })
}

fn solve_step(cfg: &ScenarioConfig, scene: &Scene, epsilon: f64, profile: Profile) -> Result<Solved> {
    let field = build_conformal_field(&scene.geom, epsilon, profile)?;
    let estimate = match step_scene(cfg, scene, epsilon) {
        Some(s) => Some(oracle_lambda1(&s, ESTIMATE_N)?),
        None => None,
    };
    solve_field(cfg, scene, field, estimate)
}

fn max_residual(eig: &EigenResult) -> f64 {
    eig.residuals[1..].iter().fold(0.0, |m: f64, &r| m.max(r))
}

/// `max |u - c+-| / (c+ - c-)` over vertices with `|rho| >= 2 eta`.
fn plateau_deviation(geom: &CollarGeometry, u: &[f64], consts: &PlateauConstants) -> f64 {
    let jump = consts.jump();
    geom.rho
        .iter()
        .zip(u)
        .filter(|(r, _)| r.abs() >= 2.0 * geom.eta)
        .map(|(&r, &x)| (x - if r > 0.0 { consts.c_plus } else { consts.c_minus }).abs() / jump)
        .fold(f64::NAN, f64::max)
}

/// `max |u - h| / (c+ - c-)` over the closed collar.
fn collar_deviation(harm: &HarmonicSolution, u: &[f64], consts: &PlateauConstants) -> f64 {
    harm.vertices
        .iter()
        .zip(&harm.h)
        .map(|(&v, &h)| (u[v] - h).abs() / consts.jump())
        .fold(f64::NAN, f64::max)
}

/// Number of increases along `devs` (ordered by decreasing epsilon) and the
/// largest relative increase.
fn glitches(devs: &[f64]) -> (f64, f64) {
    let mut count = 0.0;
    let mut size: f64 = 0.0;
    for w in devs.windows(2) {
        if w[1] > w[0] {
            count += 1.0;
            size = size.max(w[1] / w[0] - 1.0);
        }
    }
    (count, size)
}

fn sorted_epsilons(cfg: &ScenarioConfig) -> Vec<f64> {
    let mut eps = cfg.epsilons.clone();
    eps.sort_by(|a, b| b.total_cmp(a));
    eps.dedup();
    eps
}

fn smallest_epsilon(cfg: &ScenarioConfig) -> f64 {
    cfg.epsilons.iter().copied().fold(f64::INFINITY, f64::min)
}

struct SweepPoint {
    epsilon: f64,
    solved: Solved,
    seconds: f64,
}

fn sweep(cfg: &ScenarioConfig, scene: &Scene, report: &mut Report) -> Result<Vec<SweepPoint>> {
    let eps = sorted_epsilons(cfg);
    let points: Vec<Result<SweepPoint>> = eps
        .par_iter()
        .map(|&e| {
            let start = Instant::now();
            let solved = solve_step(cfg, scene, e, Profile::Step).map_err(|err| err.at_stage(&format!("solve eps={e:e}")))?;
            Ok(SweepPoint {
                epsilon: e,
                solved,
                seconds: start.elapsed().as_secs_f64(),
            })
        })
        .collect();
    let points = points.into_iter().collect::<Result<Vec<_>>>()?;
    for p in &points {
        report.timings.insert(format!("solve eps={:e}", p.epsilon), p.seconds);
    }
    Ok(points)
}

fn scaling(cfg: &ScenarioConfig, report: &mut Report) -> Result<()> {
    let scene = stage(report, "scene", || build_scene(cfg, cfg.eta))?;
    report.scalar("eta", scene.geom.eta);
    let points = sweep(cfg, &scene, report)?;
    let oracle = stage(report, "oracle", || {
        points
            .iter()
            .map(|p| match step_scene(cfg, &scene, p.epsilon) {
                Some(s) => oracle_lambda1(&s, cfg.oracle_n),
                None => Ok(f64::NAN),
            })
            .collect::<Result<Vec<f64>>>()
    })?;
    let mut table = Table::new(&[
        "epsilon",
        "kappa",
        "lambda1",
        "lambda2",
        "bound",
        "oracle_lambda1",
        "volume_error",
        "max_residual",
    ]);
    let mut excess = f64::NEG_INFINITY;
    let mut vol_err: f64 = 0.0;
    let mut resid: f64 = 0.0;
    for (p, &o) in points.iter().zip(&oracle) {
        let s = &p.solved;
        let bound = match test_function_bound(&scene.geom, &s.field, &s.pair) {
            Ok(b) => b.bound,
            Err(e) => {
                log::warn!("no test-function bound: {e}");
                f64::NAN
            }
        };
        let ve = verify_volume_preservation(&s.field, &scene.geom);
        let (l1, l2) = (s.eig.eigenvalues[1], s.eig.eigenvalues[2]);
        excess = excess.max((l1 - bound) / bound);
        vol_err = vol_err.max(ve);
        resid = resid.max(max_residual(&s.eig));
        table.push(vec![p.epsilon, s.field.kappa, l1, l2, bound, o, ve, max_residual(&s.eig)]);
    }
    let eps: Vec<f64> = points.iter().map(|p| p.epsilon).collect();
    let l1: Vec<f64> = points.iter().map(|p| p.solved.eig.eigenvalues[1]).collect();
    let fit = scaling_fit(&eps, &l1)?;
    report.scalar("slope", fit.slope);
    report.scalar("intercept", fit.intercept);
    report.scalar("fit_max_residual", fit.max_residual);
    report.verdict("slope", fit.slope, Threshold::Within(cfg.threshold("slope_min"), cfg.threshold("slope_max")));
    if oracle.iter().all(|x| x.is_finite()) {
        let ofit = scaling_fit(&eps, &oracle)?;
        report.scalar("oracle_slope", ofit.slope);
        report.verdict(
            "oracle_slope",
            ofit.slope,
            Threshold::Within(cfg.threshold("oracle_slope_min"), cfg.threshold("oracle_slope_max")),
        );
    }
    report.verdict("sandwich_excess", excess, Threshold::AtMost(0.0));
    report.verdict("volume_error", vol_err, Threshold::AtMost(cfg.threshold("volume_error")));
    report.verdict("residual", resid, Threshold::AtMost(cfg.tol));
    report.tables.insert("sweep".into(), table);
    Ok(())
}

/// First nonzero Neumann eigenvalue of one outer region in the reference metric.
fn outer_mu(cfg: &ScenarioConfig, scene: &Scene, side: Region) -> Result<f64> {
    let pair = subdomain_neumann(&scene.mesh, &scene.geom, side)?;
    let opts = SolverOptions::new(2, cfg.tol).with_seed(cfg.seed);
    Ok(solve_smallest(&pair, &opts)?.eigenvalues[1])
}

fn gap(cfg: &ScenarioConfig, report: &mut Report) -> Result<()> {
    let scene = stage(report, "scene", || build_scene(cfg, cfg.eta))?;
    let eps = smallest_epsilon(cfg);
    let s = stage(report, "solve", || solve_step(cfg, &scene, eps, Profile::Step))?;
    let mu_plus = stage(report, "neumann plus", || outer_mu(cfg, &scene, Region::Plus))?;
    let mu_minus = stage(report, "neumann minus", || outer_mu(cfg, &scene, Region::Minus))?;
    let (l1, l2) = (s.eig.eigenvalues[1], s.eig.eigenvalues[2]);
    let kappa = s.field.kappa;
    // The outer metric is kappa g0, which divides Laplace eigenvalues by kappa.
    let target = mu_plus.min(mu_minus) / kappa;
    let rel = (l2 - target).abs() / target;
    let raw = mu_plus.min(mu_minus);
    report.scalar("epsilon", eps);
    report.scalar("kappa", kappa);
    report.scalar("lambda1", l1);
    report.scalar("lambda2", l2);
    report.scalar("mu_plus", mu_plus);
    report.scalar("mu_minus", mu_minus);
    report.scalar("gap_target", target);
    report.scalar("gap_rel_error_unscaled", (l2 - raw).abs() / raw);
    report.verdict("gap_rel_error", rel, Threshold::AtMost(cfg.threshold("gap_rel")));
    report.verdict("simplicity_ratio", l2 / l1, Threshold::AtLeast(cfg.threshold("simplicity_ratio")));
    report.verdict("residual", max_residual(&s.eig), Threshold::AtMost(cfg.tol));
    Ok(())
}

fn plateau(cfg: &ScenarioConfig, report: &mut Report) -> Result<()> {
    let scene = stage(report, "scene", || build_scene(cfg, cfg.eta))?;
    let consts = plateaus_for(&scene.geom)?;
    report.scalar("c_plus", consts.c_plus);
    report.scalar("c_minus", consts.c_minus);
    let points = sweep(cfg, &scene, report)?;
    let mut table = Table::new(&["epsilon", "lambda1", "plateau_dev"]);
    let mut devs = Vec::new();
    for p in &points {
        let dev = plateau_deviation(&scene.geom, &p.solved.u1, &consts);
        devs.push(dev);
        table.push(vec![p.epsilon, p.solved.eig.eigenvalues[1], dev]);
    }
    report.tables.insert("sweep".into(), table);
    deviation_verdicts(cfg, report, "plateau", &devs, cfg.threshold("plateau_dev"));
    Ok(())
}

fn deviation_verdicts(cfg: &ScenarioConfig, report: &mut Report, what: &str, devs: &[f64], limit: f64) {
    let (count, size) = glitches(devs);
    report.verdict(&format!("{what}_dev_at_min_eps"), *devs.last().unwrap_or(&f64::NAN), Threshold::AtMost(limit));
    report.verdict(&format!("{what}_glitches"), count, Threshold::AtMost(cfg.threshold("glitch_count")));
    report.verdict(&format!("{what}_glitch_size"), size, Threshold::AtMost(cfg.threshold("glitch_size")));
}

fn collar(cfg: &ScenarioConfig, report: &mut Report) -> Result<()> {
    let scene = stage(report, "scene", || build_scene(cfg, cfg.eta))?;
    let consts = plateaus_for(&scene.geom)?;
    let harm = stage(report, "harmonic", || solve_harmonic(&scene.mesh, &scene.geom, &consts))?;
    report.scalar("harmonic_sup_deviation", harm.sup_deviation);
    let points = sweep(cfg, &scene, report)?;
    let mut table = Table::new(&["epsilon", "lambda1", "collar_dev"]);
    let mut devs = Vec::new();
    for p in &points {
        let dev = collar_deviation(&harm, &p.solved.u1, &consts);
        devs.push(dev);
        table.push(vec![p.epsilon, p.solved.eig.eigenvalues[1], dev]);
    }
    report.tables.insert("sweep".into(), table);
    deviation_verdicts(cfg, report, "collar", &devs, cfg.threshold("collar_dev"));
    if let (Some(last), Some(grid)) = (points.last(), scene.mesh.grid()) {
        let r = grid.resolution;
        let h = harm.vertex_field(scene.mesh.num_vertices());
        let mut profile = Table::new(&["rho", "u", "h", "hbar"]);
        for i in 0..=r[0] {
            let v = grid.vertex_index([i, r[1] / 2, r[2] / 2]);
            let rho = scene.geom.rho[v];
            let outer = if rho > 0.0 { consts.c_plus } else { consts.c_minus };
            let hv = if h[v].is_nan() { outer } else { h[v] };
            let hb = hbar(rho.clamp(-scene.geom.eta, scene.geom.eta), scene.geom.eta, &consts)?;
            profile.push(vec![rho, last.solved.u1[v], hv, hb]);
        }
        report.tables.insert("profile".into(), profile);
    }
    Ok(())
}

struct WarpedRow {
    eta: f64,
    ratio: f64,
    fourier_rel: f64,
    fem_fourier_rel: f64,
    iterations: usize,
    contraction: f64,
}

fn warped_row(cfg: &ScenarioConfig, mesh: &Mesh, eta: f64) -> Result<WarpedRow> {
    let profile = cfg.warp.clone().ok_or_else(|| Error::invalid("harmonic-approx needs a warp profile"))?;
    let geom = CollarGeometry::from_sigma(mesh, &cfg.sigma, eta)?;
    let eta = geom.eta;
    let consts = plateaus_for(&geom)?;
    let harm = solve_harmonic(mesh, &geom, &consts)?;
    let d = mesh.dim();
    let exact = warped_harmonic_1d(&profile, eta, &consts, d, 1e-13)?;
    let opts = FourierOptions {
        n_sigma: cfg.n_sigma,
        ..FourierOptions::default()
    };
    let fourier = collar_fourier_solve(&CrossSection::point(), eta, &CollarCoefficients::warped(&profile, eta, &consts, d), &opts)?;
    let mut num: f64 = 0.0;
    let mut den: f64 = 0.0;
    for i in 0..=400 {
        let rho = -eta + 2.0 * eta * i as f64 / 400.0;
        let w = exact.eval(rho) - hbar(rho, eta, &consts)?;
        num = num.max((fourier.eval_rho(rho, 0) - w).abs());
        den = den.max(w.abs());
    }
    let mut fem_num: f64 = 0.0;
    for ((&v, &h), &hb) in harm.vertices.iter().zip(&harm.h).zip(&harm.hbar) {
        let rho = geom.rho[v].clamp(-eta, eta);
        fem_num = fem_num.max((h - hb - fourier.eval_rho(rho, 0)).abs());
    }
    Ok(WarpedRow {
        eta,
        ratio: harm.sup_deviation / consts.jump(),
        fourier_rel: num / den,
        fem_fourier_rel: fem_num / den,
        iterations: fourier.iterations,
        contraction: fourier.contraction,
    })
}

fn harmonic_approx(cfg: &ScenarioConfig, report: &mut Report) -> Result<()> {
    let flat = stage(report, "flat", || {
        let res = cfg.resolution.clone().unwrap_or_else(|| vec![cfg.n; cfg.d]);
        let mesh = build_box_grid_with_resolution(&res, None)?;
        let geom = CollarGeometry::from_sigma(&mesh, &cfg.sigma, cfg.eta)?;
        let consts = plateaus_for(&geom)?;
        solve_harmonic(&mesh, &geom, &consts)
    })?;
    report.scalar("flat_sup_deviation", flat.sup_deviation);
    report.verdict("flat_harmonic", flat.sup_deviation, Threshold::AtMost(cfg.threshold("flat_harmonic")));

    let mut warped_cfg = cfg.clone();
    warped_cfg.scene = SceneKind::WarpedBox;
    let mesh = stage(report, "warped mesh", || build_mesh(&warped_cfg))?;
    let mut etas = cfg.etas.clone();
    etas.sort_by(|a, b| b.total_cmp(a));
    let rows = stage(report, "warped collars", || {
        etas.par_iter().map(|&e| warped_row(cfg, &mesh, e)).collect::<Result<Vec<_>>>()
    })?;
    let mut table = Table::new(&["eta", "deviation_ratio", "fourier_rel_error", "fem_fourier_rel", "iterations", "contraction"]);
    for r in &rows {
        table.push(vec![r.eta, r.ratio, r.fourier_rel, r.fem_fourier_rel, r.iterations as f64, r.contraction]);
    }
    report.tables.insert("eta_sweep".into(), table);
    let halving = rows
        .windows(2)
        .map(|w| w[0].ratio / w[1].ratio)
        .fold(f64::INFINITY, f64::min);
    let fourier_rel = rows.iter().map(|r| r.fourier_rel).fold(0.0, f64::max);
    let fem_rel = rows.iter().map(|r| r.fem_fourier_rel).fold(0.0, f64::max);
    report.scalar("fem_fourier_max_rel", fem_rel);
    report.verdict("warped_halving_factor", halving, Threshold::AtLeast(cfg.threshold("halving_factor")));
    report.verdict("fourier_vs_closed_form", fourier_rel, Threshold::AtMost(cfg.threshold("fourier_rel")));
    Ok(())
}

fn nodal(cfg: &ScenarioConfig, report: &mut Report) -> Result<()> {
    let scene = stage(report, "scene", || build_scene(cfg, cfg.eta))?;
    let eps = smallest_epsilon(cfg);
    let s = stage(report, "solve", || solve_step(cfg, &scene, eps, Profile::Step))?;
    let consts = plateaus_for(&scene.geom)?;
    let eta = scene.geom.eta;
    let ns = stage(report, "nodal set", || Ok(extract_nodal_set(&scene.mesh, &s.u1)))?;
    let loc = localization_report(&ns, &scene.geom);
    let crossing = stage(report, "single crossing", || single_crossing_check(&scene.mesh, &s.u1, &scene.geom))?;
    let domains = nodal_domain_count(&scene.mesh, &s.u1);
    let reg = regularity_min_gradient(&scene.mesh, &s.u1, &ns);
    let floor = cfg.threshold("gradient_factor") * consts.jump() / (2.0 * eta);
    report.scalar("epsilon", eps);
    report.scalar("eta", eta);
    report.scalar("lambda1", s.eig.eigenvalues[1]);
    report.scalar("nodal_area", ns.stats.total_area);
    report.scalar("hbar_root", -(consts.c_plus + consts.c_minus) * eta / consts.jump());
    report.verdict("nodal_components", loc.components as f64, Threshold::Equals(1.0));
    report.verdict("nodal_max_abs_rho", loc.max_abs_rho, Threshold::AtMost(eta));
    report.verdict("single_crossing", if crossing { 1.0 } else { 0.0 }, Threshold::Equals(1.0));
    report.verdict("nodal_domains", domains as f64, Threshold::Equals(2.0));
    report.verdict("min_gradient", reg.min_gradient, Threshold::AtLeast(floor));
    report.attach("nodal_surface", &format!("{}_nodal_surface.txt", report.scenario), format_polygon_soup(&ns, scene.mesh.dim()));
    Ok(())
}

fn mollify(cfg: &ScenarioConfig, report: &mut Report) -> Result<()> {
    let scene = stage(report, "scene", || build_scene(cfg, cfg.eta))?;
    let eps = smallest_epsilon(cfg);
    let h = scene.geom.spacing.ok_or_else(|| Error::Unsupported("mollify needs a grid mesh".into()))?;
    let step = stage(report, "solve step", || solve_step(cfg, &scene, eps, Profile::Step))?;
    let consts = plateaus_for(&scene.geom)?;
    let mut widths = cfg.widths.clone();
    widths.sort_by(|a, b| b.total_cmp(a));
    let rows = stage(report, "solve mollified", || {
        widths
            .par_iter()
            .map(|&m| {
                let s = solve_step(cfg, &scene, eps, Profile::Mollified { n: 1.0 / (m * h) })?;
                let gamma = volume_rescaling(&s.field, &scene.geom);
                // Conformal scaling by gamma divides every eigenvalue by gamma.
                let lambda = s.eig.eigenvalues[1] / gamma;
                let u_diff = s
                    .u1
                    .iter()
                    .zip(&step.u1)
                    .map(|(a, b)| (a - b).abs())
                    .fold(0.0, f64::max)
                    / consts.jump();
                Ok((m, gamma, lambda, u_diff))
            })
            .collect::<Result<Vec<_>>>()
    })?;
    let l_step = step.eig.eigenvalues[1];
    report.scalar("epsilon", eps);
    report.scalar("lambda1_step", l_step);
    let mut table = Table::new(&["width", "gamma", "lambda1", "lambda_rel", "u_diff"]);
    let mut rels = Vec::new();
    for &(m, gamma, lambda, u_diff) in &rows {
        let rel = (lambda - l_step).abs() / l_step;
        rels.push(rel);
        table.push(vec![m * h, gamma, lambda, rel, u_diff]);
    }
    report.tables.insert("widths".into(), table);
    let increases = rels.windows(2).filter(|w| w[1] >= w[0]).count();
    report.verdict("mollify_monotone", increases as f64, Threshold::AtMost(0.0));
    let last = rows.len().checked_sub(1).ok_or_else(|| Error::invalid("no mollifier widths"))?;
    report.verdict("mollify_lambda_at_h", rels[last], Threshold::AtMost(cfg.threshold("mollify_lambda")));
    report.verdict("mollify_u_at_h", rows[last].3, Threshold::AtMost(cfg.threshold("mollify_u")));
    Ok(())
}

fn morse(cfg: &ScenarioConfig, report: &mut Report) -> Result<()> {
    let r = cfg.cosine_resolution;
    let cosine = stage(report, "cosine", || {
        let mesh = build_periodic_grid_2d(2 * r, r, 2.0, 1.0)?;
        let u: Vec<f64> = mesh
            .vertices()
            .iter()
            .map(|p| (2.0 * PI * p[0]).cos() * (2.0 * PI * p[1]).cos())
            .collect();
        Ok(classify_critical_points(&mesh, &u, None))
    })?;
    report.scalar("cosine_euler", cosine.euler_characteristic() as f64);
    report.verdict("cosine_minima", cosine.minima() as f64, Threshold::Equals(4.0));
    report.verdict("cosine_maxima", cosine.maxima() as f64, Threshold::Equals(4.0));
    report.verdict("cosine_saddles", cosine.saddles() as f64, Threshold::Equals(8.0));

    let betti: &[usize] = match &cfg.sigma {
        Sigma::Level(LevelFunction::Torus { .. }) => &[1, 1],
        Sigma::Level(LevelFunction::Sphere { .. }) => &[1, 0],
        Sigma::Plane { .. } => return Err(Error::Unsupported("morse needs a closed level-set hypersurface".into())),
    };
    let mesh = stage(report, "mesh", || build_mesh(cfg))?;
    let level = stage(report, "level set", || {
        let phi: Vec<f64> = mesh.vertices().iter().map(|p| cfg.sigma.eval(p)).collect();
        let inside: Vec<bool> = mesh.cells().map(|c| c.iter().all(|&v| phi[v] < 0.0)).collect();
        Ok(classify_critical_points(&mesh, &phi, Some(&inside)))
    })?;
    report.scalar("level_minima", level.minima() as f64);
    report.scalar("level_index1", level.counts[1] as f64);
    let ok = betti_bound_check(&level, betti);
    report.verdict("level_betti_bound", if ok { 1.0 } else { 0.0 }, Threshold::Equals(1.0));

    let geom = stage(report, "geometry", || CollarGeometry::from_sigma(&mesh, &cfg.sigma, cfg.eta))?;
    let scene = Scene { mesh, geom };
    let eps = smallest_epsilon(cfg);
    let s = stage(report, "solve", || solve_step(cfg, &scene, eps, Profile::Step))?;
    let neg: Vec<bool> = scene.mesh.cells().map(|c| c.iter().all(|&v| s.u1[v] < 0.0)).collect();
    let eig = classify_critical_points(&scene.mesh, &s.u1, Some(&neg));
    report.scalar("eigen_lambda1", s.eig.eigenvalues[1]);
    report.scalar("eigen_minima", eig.minima() as f64);
    report.scalar("eigen_index1", eig.counts[1] as f64);
    report.scalar("eigen_index2", eig.counts[2.min(eig.dim)] as f64);
    report.scalar("eigen_maxima", eig.maxima() as f64);
    report.scalar("eigen_betti_bound", if betti_bound_check(&eig, betti) { 1.0 } else { 0.0 });
    Ok(())
}

fn oracle_compare(cfg: &ScenarioConfig, report: &mut Report) -> Result<()> {
    let scene = stage(report, "scene", || build_scene(cfg, cfg.eta))?;
    let points = sweep(cfg, &scene, report)?;
    let mut table = Table::new(&["epsilon", "lambda1", "oracle_lambda1", "rel_diff"]);
    let mut worst: f64 = 0.0;
    for p in &points {
        let s = step_scene(cfg, &scene, p.epsilon)
            .ok_or_else(|| Error::Unsupported("oracle comparison needs a plane-cut box".into()))?;
        let o = stage(report, &format!("oracle eps={:e}", p.epsilon), || oracle_lambda1(&s, cfg.oracle_n))?;
        let l = p.solved.eig.eigenvalues[1];
        let rel = (l - o).abs() / o;
        worst = worst.max(rel);
        table.push(vec![p.epsilon, l, o, rel]);
    }
    report.tables.insert("sweep".into(), table);
    report.verdict("oracle_rel_diff", worst, Threshold::AtMost(cfg.threshold("oracle_rel")));
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn glitch_counting() {
        assert_eq!(glitches(&[0.5, 0.3, 0.1]), (0.0, 0.0));
        let (c, s) = glitches(&[0.5, 0.3, 0.31, 0.1]);
        assert_eq!(c, 1.0);
        assert!((s - 0.31 / 0.3 + 1.0).abs() < 1e-12);
    }

    #[test]
    fn plateau_deviation_of_exact_plateaus() {
        let mut cfg = ScenarioConfig::defaults(ScenarioKind::Plateau);
        cfg.n = 8;
        let scene = build_scene(&cfg, 0.125).unwrap();
        let consts = plateaus_for(&scene.geom).unwrap();
        let u: Vec<f64> = scene
            .geom
            .rho
            .iter()
            .map(|&r| if r > 0.0 { consts.c_plus } else { consts.c_minus })
            .collect();
        assert!(plateau_deviation(&scene.geom, &u, &consts) < 1e-15);
    }
}
