//! Maximal information gain `γ_n`, estimated greedily on a grid.
//!
//! The default (normalized) quantity is `log det(I + λ⁻²K_n)`. The
//! paper-literal variant `log det(λ²I + K_n)` differs by `n log λ²`.

use std::fmt;
use std::str::FromStr;

use itertools::Itertools;
use nalgebra::Cholesky;

use crate::error::{Error, Result};
use crate::kernel::{kernel_matrix, KernelSpec};
use crate::posterior::GridPosterior;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum GainMode {
    /// `log det(I + λ⁻²K)`.
    #[default]
    Normalized,
    /// `log det(λ²I + K)`.
    PaperLiteral,
}

impl GainMode {
    pub fn name(self) -> &'static str {
        match self {
            GainMode::Normalized => "normalized",
            GainMode::PaperLiteral => "paper-literal",
        }
    }
}

impl fmt::Display for GainMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for GainMode {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s {
            "normalized" => Ok(GainMode::Normalized),
            "paper-literal" => Ok(GainMode::PaperLiteral),
            other => Err(format!("unknown info-gain mode `{other}` (expected normalized or paper-literal)")),
        }
    }
}

/// Log-determinant information of a point multiset.
pub fn info_gain_of_set(spec: &KernelSpec, lambda: f64, points: &[Vec<f64>], mode: GainMode) -> Result<f64> {
    if !(lambda > 0.0) {
        return Err(Error::InvalidParameter {
            name: "lambda",
            reason: format!("must be positive, got {lambda}"),
        });
    }
    if points.is_empty() {
        return Ok(0.0);
    }
    let n = points.len();
    let lam2 = lambda * lambda;
    let mut m = kernel_matrix(spec, points)? / lam2;
    for i in 0..n {
        m[(i, i)] += 1.0;
    }
    let chol = Cholesky::new(m).ok_or_else(|| Error::Factorization("I + K/λ² not positive definite".into()))?;
    let normalized: f64 = 2.0 * chol.l_dirty().diagonal().iter().map(|d| d.ln()).sum::<f64>();
    Ok(match mode {
        GainMode::Normalized => normalized,
        GainMode::PaperLiteral => normalized + n as f64 * lam2.ln(),
    })
}

/// Greedy information-gain curve over a grid.
#[derive(Debug, Clone)]
pub struct InfoGainCurve {
    /// `γ̂_0 = 0, γ̂_1, ..., γ̂_N` in normalized form.
    normalized: Vec<f64>,
    /// Grid indices chosen at steps `1..=N`.
    selected: Vec<usize>,
    lambda: f64,
    spec: KernelSpec,
}

impl InfoGainCurve {
    pub fn values(&self, mode: GainMode) -> Vec<f64> {
        match mode {
            GainMode::Normalized => self.normalized.clone(),
            GainMode::PaperLiteral => {
                let log_lam2 = (self.lambda * self.lambda).ln();
                self.normalized
                    .iter()
                    .enumerate()
                    .map(|(n, g)| g + n as f64 * log_lam2)
                    .collect()
            }
        }
    }

    pub fn normalized(&self) -> &[f64] {
        &self.normalized
    }

    pub fn selected(&self) -> &[usize] {
        &self.selected
    }

    pub fn horizon(&self) -> usize {
        self.selected.len()
    }

    pub fn lambda(&self) -> f64 {
        self.lambda
    }

    pub fn spec(&self) -> &KernelSpec {
        &self.spec
    }
}

/// Greedy maximisation of the information gain: each step adds the grid
/// point with the largest `log(1 + σ²(x)/λ²)` under the target-free
/// posterior. Ties go to the lowest grid index and repeats are allowed.
pub fn greedy_max_info_gain(spec: &KernelSpec, lambda: f64, grid: &[Vec<f64>], steps: usize) -> Result<InfoGainCurve> {
    if steps == 0 {
        return Err(Error::InvalidParameter {
            name: "horizon",
            reason: "must be at least 1".into(),
        });
    }
    let mut gp = GridPosterior::new(*spec, lambda, grid)?;
    let lam2 = lambda * lambda;
    let mut normalized = Vec::with_capacity(steps + 1);
    normalized.push(0.0);
    let mut selected = Vec::with_capacity(steps);
    let mut total = 0.0;
    for _ in 0..steps {
        let (best, var) = (0..grid.len())
            .map(|i| (i, gp.variance_at(i)))
            .fold((0, f64::NEG_INFINITY), |acc, (i, v)| if v > acc.1 { (i, v) } else { acc });
        total += (var / lam2).ln_1p();
        normalized.push(total);
        selected.push(best);
        gp.update_at(best, 0.0)?;
    }
    Ok(InfoGainCurve {
        normalized,
        selected,
        lambda,
        spec: *spec,
    })
}

/// Enumeration guard for [`brute_force_max_info_gain`].
pub const BRUTE_FORCE_LIMIT: f64 = 1e6;

/// Exact maximum of the information gain over all size-`n` multisets of grid
/// points.
pub fn brute_force_max_info_gain(spec: &KernelSpec, lambda: f64, grid: &[Vec<f64>], n: usize, mode: GainMode) -> Result<f64> {
    if grid.is_empty() {
        return Err(Error::Empty("grid"));
    }
    let size = (grid.len() as f64).powi(n as i32);
    if size > BRUTE_FORCE_LIMIT {
        return Err(Error::InstanceTooLarge(size));
    }
    let mut best = f64::NEG_INFINITY;
    for combo in (0..grid.len()).combinations_with_replacement(n) {
        let pts: Vec<Vec<f64>> = combo.iter().map(|&i| grid[i].clone()).collect();
        best = best.max(info_gain_of_set(spec, lambda, &pts, mode)?);
    }
    Ok(best)
}
