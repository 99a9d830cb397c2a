//! Whitespace-separated data files for external plotting tools.

use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use super::report::Report;
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum PlotKind {
    /// `epsilon lambda1` from the `sweep` table.
    Loglog,
    /// `rho u h hbar` from the `profile` table.
    Profile,
    /// The nodal polygon soup, one polygon per line.
    Surface,
}

impl PlotKind {
    pub fn name(self) -> &'static str {
        match self {
            PlotKind::Loglog => "loglog",
            PlotKind::Profile => "profile",
            PlotKind::Surface => "surface",
        }
    }
}

impl fmt::Display for PlotKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for PlotKind {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        [PlotKind::Loglog, PlotKind::Profile, PlotKind::Surface]
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| format!("unknown plot kind `{s}` (expected loglog, profile or surface)"))
    }
}

fn columns(report: &Report, table: &str, wanted: &[&str]) -> Result<String> {
    let t = report.table(table)?;
    let cols = wanted
        .iter()
        .map(|c| t.column(c).ok_or_else(|| Error::MissingTable(format!("{table}.{c}"))))
        .collect::<Result<Vec<_>>>()?;
    let mut out = format!("# {}\n", wanted.join(" "));
    for i in 0..t.rows.len() {
        let row: Vec<String> = cols.iter().map(|c| format!("{:?}", c[i])).collect();
        out.push_str(&row.join(" "));
        out.push('\n');
    }
    Ok(out)
}

/// Writes `<scenario>_<kind>.dat` into `out_dir`. `report_dir` is where the
/// report's artifacts live.
pub fn emit_plot_data(report: &Report, kind: PlotKind, report_dir: &Path, out_dir: &Path) -> Result<PathBuf> {
    let text = match kind {
        PlotKind::Loglog => columns(report, "sweep", &["epsilon", "lambda1"])?,
        PlotKind::Profile => columns(report, "profile", &["rho", "u", "h", "hbar"])?,
        PlotKind::Surface => {
            let file = report
                .artifacts
                .get("nodal_surface")
                .ok_or_else(|| Error::MissingTable("nodal_surface".into()))?;
            std::fs::read_to_string(report_dir.join(file))?
        }
    };
    std::fs::create_dir_all(out_dir)?;
    let path = out_dir.join(format!("{}_{}.dat", report.scenario, kind));
    std::fs::write(&path, text)?;
    Ok(path)
}
