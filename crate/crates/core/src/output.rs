//! CSV rendering, atomic file writes and run manifests.

use std::fmt::Write as _;
use std::io::Write as _;
use std::path::{Path, PathBuf};

use crate::config::ExperimentConfig;
use crate::error::Result;
use crate::harness::{BanditRun, CoverageReport, EllipsoidReport, Summary};
use crate::info_gain::{GainMode, InfoGainCurve};
use crate::kernel::Domain;
use crate::rkhs::RkhsFunction;
use crate::widths::WidthKind;

/// Float with 17 significant digits, enough to round-trip any `f64`.
pub fn fmt_f64(v: f64) -> String {
    if v.is_finite() {
        format!("{v:.16e}")
    } else {
        v.to_string()
    }
}

fn coord_header(dim: usize) -> String {
    (0..dim).map(|i| format!("x{i}")).collect::<Vec<_>>().join(",")
}

fn coords(x: &[f64]) -> String {
    x.iter().map(|v| fmt_f64(*v)).collect::<Vec<_>>().join(",")
}

fn push_summary(out: &mut String, step: usize, s: &Summary) {
    for (name, v) in [
        ("mean", s.mean),
        ("stderr", s.stderr),
        ("q50", s.q50),
        ("q90", s.q90),
        ("q99", s.q99),
    ] {
        let _ = writeln!(out, "{step},{name},{}", fmt_f64(v));
    }
}

/// `replicate,step,x0..,y,inst_regret,cum_regret`
pub fn regret_csv(run: &BanditRun) -> String {
    let points = run.setup.domain.points();
    let mut out = format!("replicate,step,{},y,inst_regret,cum_regret\n", coord_header(run.setup.domain.dim()));
    for t in &run.traces {
        for (i, s) in t.steps.iter().enumerate() {
            let _ = writeln!(
                out,
                "{},{},{},{},{},{}",
                t.replicate,
                i + 1,
                coords(&points[s.index]),
                fmt_f64(s.y),
                fmt_f64(s.inst_regret),
                fmt_f64(s.cum_regret)
            );
        }
    }
    out
}

/// `replicate,step,mean,std_dev`: posterior at the chosen point before each
/// observation.
pub fn posterior_csv(run: &BanditRun) -> String {
    let mut out = String::from("replicate,step,mean,std_dev\n");
    for t in &run.traces {
        for (i, s) in t.steps.iter().enumerate() {
            let _ = writeln!(out, "{},{},{},{}", t.replicate, i + 1, fmt_f64(s.mean), fmt_f64(s.std_dev));
        }
    }
    out
}

/// `step,statistic,value` over cumulative regret, plus per-replicate optima
/// and bound ratios under step `N`.
pub fn regret_summary_csv(run: &BanditRun) -> String {
    let mut out = String::from("step,statistic,value\n");
    for (t, s) in run.per_step.iter().enumerate() {
        push_summary(&mut out, t + 1, s);
    }
    let n = run.per_step.len();
    let b = &run.bound_ratio;
    for (name, v) in [
        ("bound_ratio_mean", b.mean),
        ("bound_ratio_stderr", b.stderr),
        ("bound_ratio_q50", b.q50),
    ] {
        let _ = writeln!(out, "{n},{name},{}", fmt_f64(v));
    }
    out
}

/// `replicate,best_index,best_value,bound_ratio`
pub fn optima_csv(run: &BanditRun) -> String {
    let mut out = format!("replicate,best_index,{},best_value,bound_ratio\n", coord_header(run.setup.domain.dim()));
    let points = run.setup.domain.points();
    for t in &run.traces {
        let _ = writeln!(
            out,
            "{},{},{},{},{}",
            t.replicate,
            t.best_index,
            coords(&points[t.best_index]),
            fmt_f64(t.best_value),
            fmt_f64(t.bound_ratio)
        );
    }
    out
}

/// `replicate,step,Z,rho_<s>...,covered_<s>...` where `covered_<s>` marks
/// `Z ≤ ρ` at that step.
pub fn coverage_csv(report: &CoverageReport) -> String {
    let cols: Vec<String> = report.schedules.iter().map(|k| k.column()).collect();
    let mut out = String::from("replicate,step,Z");
    for c in &cols {
        let _ = write!(out, ",rho_{c}");
    }
    for c in &cols {
        let _ = write!(out, ",covered_{c}");
    }
    out.push('\n');
    for (r, zr) in report.z.iter().enumerate() {
        for (t, z) in zr.iter().enumerate() {
            let _ = write!(out, "{r},{},{}", t + 1, fmt_f64(*z));
            for rho in &report.rho {
                let _ = write!(out, ",{}", fmt_f64(rho[t]));
            }
            for rho in &report.rho {
                let _ = write!(out, ",{}", u8::from(*z <= rho[t]));
            }
            out.push('\n');
        }
    }
    out
}

/// `step,statistic,value`: quantiles of Z per step, the width-gap ratio per
/// step, and per-schedule coverage under step `N`.
pub fn coverage_summary_csv(report: &CoverageReport) -> String {
    let mut out = String::from("step,statistic,value\n");
    for (t, s) in report.per_step.iter().enumerate() {
        for (name, v) in [("z_q50", s.q50), ("z_q90", s.q90), ("z_q99", s.q99)] {
            let _ = writeln!(out, "{},{name},{}", t + 1, fmt_f64(v));
        }
        if let Some(ratio) = &report.ratio {
            let _ = writeln!(out, "{},median_ratio_kernel_online,{}", t + 1, fmt_f64(ratio[t]));
        }
    }
    let n = report.per_step.len();
    for (i, k) in report.schedules.iter().enumerate() {
        let _ = writeln!(out, "{n},coverage_{},{}", k.column(), fmt_f64(report.coverage[i]));
        let _ = writeln!(out, "{n},final_coverage_{},{}", k.column(), fmt_f64(report.final_coverage[i]));
    }
    out
}

/// `replicate,statistic,radius,covered`
pub fn ellipsoid_csv(report: &EllipsoidReport) -> String {
    let mut out = String::from("replicate,statistic,radius,covered\n");
    for (r, (s, c)) in report.statistic.iter().zip(&report.covered).enumerate() {
        let _ = writeln!(out, "{r},{},{},{}", fmt_f64(*s), fmt_f64(report.radius), u8::from(*c));
    }
    out
}

/// `n,gamma_normalized,gamma_paper_literal,x0..` for `n = 1..=N`, the
/// coordinates being the point chosen at step `n`.
pub fn info_gain_csv(domain: &Domain, curve: &InfoGainCurve) -> String {
    let norm = curve.values(GainMode::Normalized);
    let lit = curve.values(GainMode::PaperLiteral);
    let points = domain.points();
    let mut out = format!("n,gamma_normalized,gamma_paper_literal,{}\n", coord_header(domain.dim()));
    for (i, &idx) in curve.selected().iter().enumerate() {
        let n = i + 1;
        let _ = writeln!(out, "{n},{},{},{}", fmt_f64(norm[n]), fmt_f64(lit[n]), coords(&points[idx]));
    }
    out
}

/// `n,<schedule>...` width curves for `n = 1..=N`.
pub fn widths_csv(curves: &[(WidthKind, Vec<f64>)]) -> String {
    let mut out = String::from("n");
    for (k, _) in curves {
        let _ = write!(out, ",{}", k.column());
    }
    out.push('\n');
    let n = curves.first().map_or(0, |(_, v)| v.len());
    for t in 0..n {
        let _ = write!(out, "{}", t + 1);
        for (_, v) in curves {
            let _ = write!(out, ",{}", fmt_f64(v[t]));
        }
        out.push('\n');
    }
    out
}

/// Drawn test functions as a JSON array, one entry per replicate.
pub fn functions_json<'a>(functions: impl IntoIterator<Item = &'a RkhsFunction>) -> Result<String> {
    let all: Vec<&RkhsFunction> = functions.into_iter().collect();
    Ok(serde_json::to_string_pretty(&all)? + "\n")
}

/// Write `contents` to `path` through a temporary file in the same directory
/// followed by a rename, so readers never see a partial file.
pub fn write_atomic(path: &Path, contents: &[u8]) -> Result<()> {
    let dir = path.parent().filter(|p| !p.as_os_str().is_empty()).unwrap_or(Path::new("."));
    std::fs::create_dir_all(dir)?;
    let mut tmp = tempfile::NamedTempFile::new_in(dir)?;
    tmp.write_all(contents)?;
    tmp.as_file().sync_all()?;
    tmp.persist(path).map_err(|e| e.error)?;
    Ok(())
}

/// Run manifest written as `key = value` lines followed by the resolved
/// config.
#[derive(Debug, Clone, PartialEq)]
pub struct RunManifest {
    pub tool_version: String,
    pub subcommand: String,
    pub config_hash: String,
    pub started: u64,
    pub finished: u64,
    pub outputs: Vec<String>,
    pub config: String,
}

impl RunManifest {
    pub fn render(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "tool_version = {}", self.tool_version);
        let _ = writeln!(out, "subcommand = {}", self.subcommand);
        let _ = writeln!(out, "config_hash = {}", self.config_hash);
        let _ = writeln!(out, "started_unix = {}", self.started);
        let _ = writeln!(out, "finished_unix = {}", self.finished);
        let _ = writeln!(out, "outputs = {}", self.outputs.join(", "));
        out.push_str("\n[config]\n");
        out.push_str(&self.config);
        out
    }

    /// Read back the `config_hash` line of a rendered manifest.
    pub fn hash_of(text: &str) -> Option<&str> {
        text.lines().find_map(|l| l.strip_prefix("config_hash = "))
    }
}

pub fn unix_now() -> u64 {
    std::time::SystemTime::now()
        .duration_since(std::time::UNIX_EPOCH)
        .map_or(0, |d| d.as_secs())
}

/// Write every `(name, contents)` file into `dir`, then the manifest.
pub fn write_outputs(
    dir: &Path,
    subcommand: &str,
    config: &ExperimentConfig,
    started: u64,
    files: &[(&str, String)],
) -> Result<PathBuf> {
    for (name, contents) in files {
        write_atomic(&dir.join(name), contents.as_bytes())?;
    }
    let manifest = RunManifest {
        tool_version: format!("kbl {}", env!("CARGO_PKG_VERSION")),
        subcommand: subcommand.to_string(),
        config_hash: config.hash(),
        started,
        finished: unix_now(),
        outputs: files.iter().map(|(n, _)| n.to_string()).collect(),
        config: config.canonical(),
    };
    let path = dir.join("manifest.txt");
    write_atomic(&path, manifest.render().as_bytes())?;
    Ok(path)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn floats_round_trip() {
        for v in [0.1, 1.0 / 3.0, -2.5e-300, 1e300, f64::MIN_POSITIVE, 0.0, 123456789.12345679] {
            let s = fmt_f64(v);
            assert_eq!(s.parse::<f64>().unwrap(), v, "{s}");
        }
        assert_eq!(fmt_f64(1.0), "1.0000000000000000e0");
    }

    #[test]
    fn widths_table_layout() {
        let csv = widths_csv(&[(WidthKind::OfflineFixed, vec![1.0, 1.0]), (WidthKind::Conjectured, vec![2.0, 3.0])]);
        let lines: Vec<&str> = csv.lines().collect();
        assert_eq!(lines[0], "n,offline_fixed,conjectured");
        assert_eq!(lines.len(), 3);
        assert!(lines[2].starts_with("2,"));
    }

    #[test]
    fn atomic_write_replaces_contents() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("nested").join("a.csv");
        write_atomic(&path, b"first").unwrap();
        write_atomic(&path, b"second").unwrap();
        assert_eq!(std::fs::read_to_string(&path).unwrap(), "second");
        let leftovers = std::fs::read_dir(path.parent().unwrap()).unwrap().count();
        assert_eq!(leftovers, 1);
    }

    #[test]
    fn manifest_hash_line() {
        let m = RunManifest {
            tool_version: "kbl 0".into(),
            subcommand: "version".into(),
            config_hash: "abc".into(),
            started: 1,
            finished: 2,
            outputs: vec!["a.csv".into()],
            config: "seed = 1\n".into(),
        };
        let text = m.render();
        assert_eq!(RunManifest::hash_of(&text), Some("abc"));
        assert!(text.ends_with("seed = 1\n"));
    }
}
