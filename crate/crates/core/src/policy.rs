//! Point-selection rules over a grid.
//!
//! Online rules (GP-UCB, GP-TS, the coverage probe) read the current
//! posterior; offline designs fix their whole sequence before any
//! observation. All rules return grid indices and break ties towards the
//! lowest index.

use std::fmt;
use std::str::FromStr;

use rand::Rng;

use crate::error::{Error, Result};
use crate::posterior::GridPosterior;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PolicyKind {
    GpUcb,
    GpTs,
    CoverageProbe,
    OfflineUniformRandom,
    OfflineGridSweep,
}

impl PolicyKind {
    pub const ALL: [PolicyKind; 5] = [
        PolicyKind::GpUcb,
        PolicyKind::GpTs,
        PolicyKind::CoverageProbe,
        PolicyKind::OfflineUniformRandom,
        PolicyKind::OfflineGridSweep,
    ];

    pub fn name(self) -> &'static str {
        match self {
            PolicyKind::GpUcb => "gp-ucb",
            PolicyKind::GpTs => "gp-ts",
            PolicyKind::CoverageProbe => "coverage-probe",
            PolicyKind::OfflineUniformRandom => "offline-uniform-random",
            PolicyKind::OfflineGridSweep => "offline-grid-sweep",
        }
    }

    /// Whether the rule may look at past observations.
    pub fn is_online(self) -> bool {
        matches!(self, PolicyKind::GpUcb | PolicyKind::GpTs | PolicyKind::CoverageProbe)
    }
}

impl fmt::Display for PolicyKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for PolicyKind {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        PolicyKind::ALL.into_iter().find(|k| k.name() == s).ok_or_else(|| {
            let names: Vec<_> = PolicyKind::ALL.iter().map(|k| k.name()).collect();
            format!("unknown policy `{s}` (expected one of {})", names.join(", "))
        })
    }
}

/// Index of the first maximum. NaN scores never win.
pub fn argmax(scores: impl IntoIterator<Item = f64>) -> Option<usize> {
    let mut best: Option<(usize, f64)> = None;
    for (i, s) in scores.into_iter().enumerate() {
        match best {
            Some((_, b)) if !(s > b) => {}
            _ if s.is_nan() => {}
            _ => best = Some((i, s)),
        }
    }
    best.map(|(i, _)| i)
}

/// `argmax μ(x) + ρ·σ(x)` over precomputed means and standard deviations.
pub fn ucb_index(means: &[f64], std_devs: &[f64], rho: f64) -> Result<usize> {
    argmax(means.iter().zip(std_devs).map(|(m, s)| m + rho * s)).ok_or(Error::Empty("grid"))
}

/// GP-UCB: maximise the current upper confidence bound.
pub fn ucb_next(gp: &GridPosterior, rho: f64) -> Result<usize> {
    if !(rho >= 0.0) {
        return Err(Error::InvalidParameter {
            name: "rho",
            reason: format!("must be nonnegative, got {rho}"),
        });
    }
    ucb_index(gp.means(), &gp.std_devs(), rho)
}

/// GP-TS: maximise one joint posterior draw over the grid.
pub fn ts_next<R: Rng + ?Sized>(gp: &GridPosterior, rng: &mut R) -> Result<usize> {
    let draw = gp.sample(rng)?;
    argmax(draw).ok_or(Error::Empty("grid"))
}

/// Normalised errors `|f(x) − μ(x)| / max(σ(x), σ_floor)` over the grid.
pub fn normalized_errors(gp: &GridPosterior, truth: &[f64], sigma_floor: f64) -> Vec<f64> {
    truth
        .iter()
        .zip(gp.means())
        .enumerate()
        .map(|(i, (f, m))| (f - m).abs() / gp.variance_at(i).sqrt().max(sigma_floor))
        .collect()
}

/// Coverage probe: query where the realised normalised error is largest.
/// `truth` holds `f` on the grid.
pub fn probe_next(gp: &GridPosterior, truth: &[f64], sigma_floor: f64) -> Result<usize> {
    if !(sigma_floor > 0.0) {
        return Err(Error::InvalidParameter {
            name: "sigma_floor",
            reason: format!("must be positive, got {sigma_floor}"),
        });
    }
    argmax(normalized_errors(gp, truth, sigma_floor)).ok_or(Error::Empty("grid"))
}

/// A full fixed design of `n` grid indices.
pub fn offline_design<R: Rng + ?Sized>(kind: PolicyKind, grid_len: usize, n: usize, rng: &mut R) -> Result<Vec<usize>> {
    if grid_len == 0 {
        return Err(Error::Empty("grid"));
    }
    match kind {
        PolicyKind::OfflineUniformRandom => Ok((0..n).map(|_| rng.random_range(0..grid_len)).collect()),
        PolicyKind::OfflineGridSweep => Ok((0..n).map(|i| i % grid_len).collect()),
        other => Err(Error::InvalidParameter {
            name: "policy",
            reason: format!("{other} is not an offline design"),
        }),
    }
}
