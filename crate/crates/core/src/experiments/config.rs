//! Flat `key = value` scenario configuration.

use std::collections::BTreeMap;
use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mesh::WarpProfile;
use crate::metric::{LevelFunction, Sigma};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ScenarioKind {
    Scaling,
    Gap,
    Plateau,
    Collar,
    HarmonicApprox,
    Nodal,
    Mollify,
    Morse,
    OracleCompare,
}

impl ScenarioKind {
    pub const ALL: [ScenarioKind; 9] = [
        ScenarioKind::Scaling,
        ScenarioKind::Gap,
        ScenarioKind::Plateau,
        ScenarioKind::Collar,
        ScenarioKind::HarmonicApprox,
        ScenarioKind::Nodal,
        ScenarioKind::Mollify,
        ScenarioKind::Morse,
        ScenarioKind::OracleCompare,
    ];

    pub fn name(self) -> &'static str {
        match self {
            ScenarioKind::Scaling => "scaling",
            ScenarioKind::Gap => "gap",
            ScenarioKind::Plateau => "plateau",
            ScenarioKind::Collar => "collar",
            ScenarioKind::HarmonicApprox => "harmonic-approx",
            ScenarioKind::Nodal => "nodal",
            ScenarioKind::Mollify => "mollify",
            ScenarioKind::Morse => "morse",
            ScenarioKind::OracleCompare => "oracle-compare",
        }
    }
}

impl fmt::Display for ScenarioKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ScenarioKind {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        ScenarioKind::ALL
            .iter()
            .copied()
            .find(|k| k.name() == s)
            .ok_or_else(|| format!("unknown scenario `{s}`"))
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum SceneKind {
    Box,
    WarpedBox,
    File(PathBuf),
}

/// Every field a scenario can read. Unused fields are ignored by a scenario
/// but still echoed in its report.
#[derive(Clone, Debug, PartialEq)]
pub struct ScenarioConfig {
    pub scenario: ScenarioKind,
    pub scene: SceneKind,
    pub sigma: Sigma,
    pub warp: Option<WarpProfile>,
    pub d: usize,
    pub n: usize,
    /// Per-axis cell counts; overrides `n` when set.
    pub resolution: Option<Vec<usize>>,
    pub eta: f64,
    pub etas: Vec<f64>,
    pub epsilons: Vec<f64>,
    pub tol: f64,
    pub modes: usize,
    pub oracle_n: usize,
    /// Mollifier transition widths in units of the mesh spacing.
    pub widths: Vec<f64>,
    pub n_sigma: usize,
    /// Samples per unit period for the periodic cosine benchmark.
    pub cosine_resolution: usize,
    pub seed: u64,
    pub workers: usize,
    pub out: Option<PathBuf>,
    pub thresholds: BTreeMap<String, f64>,
}

/// Default verdict thresholds; any can be overridden with `threshold.<name> = value`.
pub fn default_thresholds() -> BTreeMap<String, f64> {
    [
        ("slope_min", 0.40),
        ("slope_max", 0.60),
        ("oracle_slope_min", 0.45),
        ("oracle_slope_max", 0.55),
        ("volume_error", 1e-12),
        ("gap_rel", 0.15),
        ("simplicity_ratio", 10.0),
        ("plateau_dev", 0.05),
        ("collar_dev", 0.05),
        ("glitch_count", 1.0),
        ("glitch_size", 0.05),
        ("flat_harmonic", 1e-8),
        ("halving_factor", 1.5),
        ("fourier_rel", 1e-4),
        ("gradient_factor", 0.5),
        ("mollify_lambda", 0.01),
        ("mollify_u", 0.02),
        ("oracle_rel", 0.02),
    ]
    .into_iter()
    .map(|(k, v)| (k.to_string(), v))
    .collect()
}

const SWEEP: [f64; 5] = [1e-1, 3e-2, 1e-2, 3e-3, 1e-3];

impl ScenarioConfig {
    /// Documented defaults for each scenario.
    pub fn defaults(scenario: ScenarioKind) -> Self {
        let mut cfg = ScenarioConfig {
            scenario,
            scene: SceneKind::Box,
            sigma: Sigma::Plane { offset: 0.5 },
            warp: None,
            d: 3,
            n: 16,
            resolution: None,
            eta: 0.125,
            etas: vec![0.2, 0.1, 0.05],
            epsilons: SWEEP.to_vec(),
            tol: 1e-8,
            modes: 3,
            oracle_n: 1024,
            widths: vec![4.0, 2.0, 1.0],
            n_sigma: 64,
            cosine_resolution: 32,
            seed: 1,
            workers: 0,
            out: None,
            thresholds: default_thresholds(),
        };
        match scenario {
            ScenarioKind::Gap | ScenarioKind::Nodal => cfg.epsilons = vec![1e-3],
            ScenarioKind::OracleCompare => cfg.epsilons = vec![1.0, 0.1],
            ScenarioKind::HarmonicApprox => {
                cfg.n = 20;
                cfg.warp = Some(WarpProfile::Affine { offset: 1.0, slope: 1.0 });
            }
            ScenarioKind::Mollify => {
                cfg.resolution = Some(vec![1024, 2, 2]);
                cfg.epsilons = vec![1e-3];
            }
            ScenarioKind::Morse => {
                cfg.n = 20;
                cfg.eta = 0.05;
                cfg.epsilons = vec![1e-3];
                cfg.sigma = Sigma::Level(LevelFunction::Torus {
                    center: [0.5, 0.5, 0.5],
                    major: 0.27,
                    minor: 0.15,
                });
            }
            _ => {}
        }
        cfg
    }

    pub fn threshold(&self, name: &str) -> f64 {
        self.thresholds[name]
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path)?;
        Self::parse(&text, path)
    }

    pub fn parse(text: &str, path: &Path) -> Result<Self> {
        let err = |line: usize, msg: String| Error::Parse {
            path: path.to_path_buf(),
            line,
            msg,
        };
        let mut pairs = Vec::new();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| err(i + 1, format!("expected `key = value`, found `{line}`")))?;
            pairs.push((i + 1, k.trim().to_string(), v.trim().to_string()));
        }
        let (ln, _, name) = pairs
            .iter()
            .find(|(_, k, _)| k == "scenario")
            .ok_or_else(|| err(0, "missing `scenario` key".into()))?;
        let kind: ScenarioKind = name.parse().map_err(|e| err(*ln, e))?;
        let mut cfg = ScenarioConfig::defaults(kind);
        for (ln, key, value) in &pairs {
            cfg.set(key, value).map_err(|e| err(*ln, e))?;
        }
        cfg.validate().map_err(|e| err(0, e))?;
        Ok(cfg)
    }

    fn set(&mut self, key: &str, value: &str) -> std::result::Result<(), String> {
        fn num<T: FromStr>(key: &str, v: &str) -> std::result::Result<T, String> {
            v.parse().map_err(|_| format!("bad value `{v}` for `{key}`"))
        }
        fn list<T: FromStr>(key: &str, v: &str) -> std::result::Result<Vec<T>, String> {
            v.split(',').map(|s| num(key, s.trim())).collect()
        }
        match key {
            "scenario" => {}
            "scene" => {
                self.scene = match value {
                    "box" => SceneKind::Box,
                    "warped-box" => SceneKind::WarpedBox,
                    v => match v.strip_prefix("file:") {
                        Some(p) => SceneKind::File(PathBuf::from(p.trim())),
                        None => return Err(format!("unknown scene `{v}`")),
                    },
                }
            }
            "sigma" => self.sigma = parse_sigma(value)?,
            "warp" => self.warp = parse_warp(value)?,
            "d" => self.d = num(key, value)?,
            "n" => self.n = num(key, value)?,
            "resolution" => self.resolution = Some(list(key, value)?),
            "eta" => self.eta = num(key, value)?,
            "etas" => self.etas = list(key, value)?,
            "epsilons" | "epsilon" => self.epsilons = list(key, value)?,
            "tol" => self.tol = num(key, value)?,
            "modes" => self.modes = num(key, value)?,
            "oracle_n" => self.oracle_n = num(key, value)?,
            "widths" => self.widths = list(key, value)?,
            "n_sigma" => self.n_sigma = num(key, value)?,
            "cosine_resolution" => self.cosine_resolution = num(key, value)?,
            "seed" => self.seed = num(key, value)?,
            "workers" => self.workers = num(key, value)?,
            "out" => self.out = Some(PathBuf::from(value)),
            k => match k.strip_prefix("threshold.") {
                Some(name) if self.thresholds.contains_key(name) => {
                    self.thresholds.insert(name.to_string(), num(key, value)?);
                }
                _ => return Err(format!("unknown key `{k}`")),
            },
        }
        Ok(())
    }

    pub fn validate(&self) -> std::result::Result<(), String> {
        if !(2..=3).contains(&self.d) {
            return Err(format!("d = {} must be 2 or 3", self.d));
        }
        if self.n < 2 {
            return Err("n must be at least 2".into());
        }
        if let Some(r) = &self.resolution {
            if r.len() != self.d || r.iter().any(|&x| x < 2) {
                return Err("resolution needs d entries, each at least 2".into());
            }
        }
        if self.epsilons.is_empty() || self.epsilons.iter().any(|&e| !(e > 0.0 && e <= 1.0)) {
            return Err("epsilons must lie in (0, 1]".into());
        }
        if !(self.eta > 0.0) || self.etas.iter().any(|&e| !(e > 0.0)) {
            return Err("collar half-widths must be positive".into());
        }
        if self.modes < 2 {
            return Err("modes must be at least 2".into());
        }
        if !(self.tol > 0.0) {
            return Err("tol must be positive".into());
        }
        if self.widths.iter().any(|&w| !(w > 0.0)) {
            return Err("widths must be positive".into());
        }
        if self.scene == SceneKind::WarpedBox && self.warp.is_none() {
            return Err("warped-box scene needs a `warp`".into());
        }
        Ok(())
    }

    /// Key/value echo of every setting that can influence results.
    pub fn echo(&self) -> BTreeMap<String, String> {
        let fmt_list = |xs: &[f64]| xs.iter().map(|x| format!("{x:?}")).collect::<Vec<_>>().join(",");
        let mut m = BTreeMap::new();
        m.insert("scenario".into(), self.scenario.name().to_string());
        m.insert(
            "scene".into(),
            match &self.scene {
                SceneKind::Box => "box".into(),
                SceneKind::WarpedBox => "warped-box".into(),
                SceneKind::File(p) => format!("file:{}", p.display()),
            },
        );
        m.insert("sigma".into(), format_sigma(&self.sigma));
        m.insert("warp".into(), format_warp(self.warp.as_ref()));
        m.insert("d".into(), self.d.to_string());
        m.insert("n".into(), self.n.to_string());
        if let Some(r) = &self.resolution {
            m.insert(
                "resolution".into(),
                r.iter().map(|x| x.to_string()).collect::<Vec<_>>().join(","),
            );
        }
        m.insert("eta".into(), format!("{:?}", self.eta));
        m.insert("etas".into(), fmt_list(&self.etas));
        m.insert("epsilons".into(), fmt_list(&self.epsilons));
        m.insert("tol".into(), format!("{:?}", self.tol));
        m.insert("modes".into(), self.modes.to_string());
        m.insert("oracle_n".into(), self.oracle_n.to_string());
        m.insert("widths".into(), fmt_list(&self.widths));
        m.insert("n_sigma".into(), self.n_sigma.to_string());
        m.insert("cosine_resolution".into(), self.cosine_resolution.to_string());
        m.insert("seed".into(), self.seed.to_string());
        for (k, v) in &self.thresholds {
            m.insert(format!("threshold.{k}"), format!("{v:?}"));
        }
        m
    }

    /// The config file text that reproduces this configuration.
    pub fn to_text(&self) -> String {
        self.echo().iter().map(|(k, v)| format!("{k} = {v}\n")).collect()
    }
}

fn floats(s: &str) -> std::result::Result<Vec<f64>, String> {
    s.split(',')
        .map(|x| x.trim().parse().map_err(|_| format!("bad number `{x}`")))
        .collect()
}

pub fn parse_sigma(v: &str) -> std::result::Result<Sigma, String> {
    let (kind, args) = v.split_once(':').ok_or_else(|| format!("bad sigma `{v}`"))?;
    let a = floats(args)?;
    match (kind.trim(), a.len()) {
        ("plane", 1) => Ok(Sigma::Plane { offset: a[0] }),
        ("sphere", 4) => Ok(Sigma::Level(LevelFunction::Sphere {
            center: [a[0], a[1], a[2]],
            radius: a[3],
        })),
        ("torus", 5) => Ok(Sigma::Level(LevelFunction::Torus {
            center: [a[0], a[1], a[2]],
            major: a[3],
            minor: a[4],
        })),
        _ => Err(format!("bad sigma `{v}` (plane:s | sphere:x,y,z,r | torus:x,y,z,R,r)")),
    }
}

pub fn format_sigma(s: &Sigma) -> String {
    match s {
        Sigma::Plane { offset } => format!("plane:{offset:?}"),
        Sigma::Level(LevelFunction::Sphere { center: c, radius }) => {
            format!("sphere:{:?},{:?},{:?},{radius:?}", c[0], c[1], c[2])
        }
        Sigma::Level(LevelFunction::Torus { center: c, major, minor }) => {
            format!("torus:{:?},{:?},{:?},{major:?},{minor:?}", c[0], c[1], c[2])
        }
    }
}

pub fn parse_warp(v: &str) -> std::result::Result<Option<WarpProfile>, String> {
    if v == "none" {
        return Ok(None);
    }
    let (kind, args) = v.split_once(':').ok_or_else(|| format!("bad warp `{v}`"))?;
    let a = floats(args)?;
    match (kind.trim(), a.len()) {
        ("affine", 2) => Ok(Some(WarpProfile::Affine {
            offset: a[0],
            slope: a[1],
        })),
        ("sampled", k) if k >= 4 && k % 2 == 0 => {
            let (rho, w): (Vec<f64>, Vec<f64>) = a.chunks(2).map(|c| (c[0], c[1])).unzip();
            Ok(Some(WarpProfile::Sampled { rho, w }))
        }
        _ => Err(format!("bad warp `{v}` (none | affine:a,b | sampled:r0,w0,r1,w1,...)")),
    }
}

pub fn format_warp(w: Option<&WarpProfile>) -> String {
    match w {
        None => "none".into(),
        Some(WarpProfile::Affine { offset, slope }) => format!("affine:{offset:?},{slope:?}"),
        Some(WarpProfile::Sampled { rho, w }) => {
            let parts: Vec<String> = rho.iter().zip(w).map(|(r, x)| format!("{r:?},{x:?}")).collect();
            format!("sampled:{}", parts.join(","))
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parse_and_echo_round_trip() {
        let text = "scenario = scaling\n# comment\nn = 8\nepsilons = 0.1, 0.01,0.001\nthreshold.slope_min = 0.3\n";
        let cfg = ScenarioConfig::parse(text, Path::new("x.cfg")).unwrap();
        assert_eq!(cfg.n, 8);
        assert_eq!(cfg.epsilons, vec![0.1, 0.01, 0.001]);
        assert_eq!(cfg.threshold("slope_min"), 0.3);
        let again = ScenarioConfig::parse(&cfg.to_text(), Path::new("y.cfg")).unwrap();
        assert_eq!(again, ScenarioConfig { out: None, ..cfg });
    }

    #[test]
    fn rejects_bad_input() {
        let p = Path::new("c.cfg");
        assert!(ScenarioConfig::parse("n = 4\n", p).is_err());
        let e = ScenarioConfig::parse("scenario = gap\nbogus = 1\n", p).unwrap_err();
        assert!(e.to_string().contains("c.cfg:2"), "{e}");
        assert!(ScenarioConfig::parse("scenario = gap\nepsilons = 0,0.1\n", p).is_err());
        assert!(ScenarioConfig::parse("scenario = nope\n", p).is_err());
    }

    #[test]
    fn sigma_and_warp_strings() {
        for s in ["plane:0.5", "sphere:0.5,0.5,0.5,0.3", "torus:0.5,0.5,0.5,0.27,0.15"] {
            assert_eq!(format_sigma(&parse_sigma(s).unwrap()), s);
        }
        for w in ["none", "affine:1.0,1.0", "sampled:-0.5,0.5,0.5,1.5"] {
            assert_eq!(format_warp(parse_warp(w).unwrap().as_ref()), w);
        }
    }
}
