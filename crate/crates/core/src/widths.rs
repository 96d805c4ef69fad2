//! Confidence-width schedules `n ↦ ρ_n(δ)`.
//!
//! Each function implements one width formula exactly as written, including
//! its own δ convention (`2/δ` for the fixed-point offline width, `1/δ`
//! elsewhere).

use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use crate::error::{Error, Result};

fn check_delta(delta: f64) -> Result<()> {
    if delta > 0.0 && delta < 1.0 {
        Ok(())
    } else {
        Err(Error::InvalidParameter {
            name: "delta",
            reason: format!("must lie in (0, 1), got {delta}"),
        })
    }
}

fn check_lambda(lambda: f64) -> Result<()> {
    if lambda > 0.0 && lambda.is_finite() {
        Ok(())
    } else {
        Err(Error::InvalidParameter {
            name: "lambda",
            reason: format!("must be positive, got {lambda}"),
        })
    }
}

/// Fixed-design pointwise width `B + (R/λ)√(2 log(2/δ))`.
pub fn offline_width(b: f64, r: f64, lambda: f64, delta: f64) -> Result<f64> {
    check_delta(delta)?;
    check_lambda(lambda)?;
    Ok(b + r / lambda * (2.0 * (2.0 / delta).ln()).sqrt())
}

/// Fixed-design uniform width `c·(B + (R/λ)√(d log max(n,2) + log(1/δ)))`.
pub fn offline_uniform_width(b: f64, r: f64, lambda: f64, delta: f64, d: usize, n: f64, c: f64) -> Result<f64> {
    check_delta(delta)?;
    check_lambda(lambda)?;
    let radicand = d as f64 * n.max(2.0).ln() + (1.0 / delta).ln();
    Ok(c * (b + r / lambda * radicand.sqrt()))
}

/// Online width for the linear model,
/// `B + (R/λ)√(d log((1 + n x̄²/λ²)/δ))`.
pub fn linear_width(b: f64, r: f64, lambda: f64, delta: f64, d: usize, n: f64, x_bar: f64) -> Result<f64> {
    check_delta(delta)?;
    check_lambda(lambda)?;
    let arg = (1.0 + n * x_bar * x_bar / (lambda * lambda)) / delta;
    Ok(b + r / lambda * (d as f64 * arg.ln()).sqrt())
}

/// Radius `λ·ρ_n(δ)` of the weight-space confidence ellipsoid in the `V_n`
/// norm.
pub fn ellipsoid_radius(b: f64, r: f64, lambda: f64, delta: f64, d: usize, n: f64, x_bar: f64) -> Result<f64> {
    Ok(lambda * linear_width(b, r, lambda, delta, d, n, x_bar)?)
}

/// Online kernel width `B + R√(2(γ_{n−1} + 1 + log(1/δ)))`.
pub fn kernel_online_width(b: f64, r: f64, delta: f64, gamma_prev: f64) -> Result<f64> {
    check_delta(delta)?;
    if !(gamma_prev >= 0.0) {
        return Err(Error::InvalidParameter {
            name: "gamma",
            reason: format!("information gain must be nonnegative, got {gamma_prev}"),
        });
    }
    Ok(b + r * (2.0 * (gamma_prev + 1.0 + (1.0 / delta).ln())).sqrt())
}

/// Hypothesised online width with `d log n` growth,
/// `B + c·(R/λ)√(d log max(n,2) + log(1/δ))`.
pub fn conjectured_width(b: f64, r: f64, lambda: f64, delta: f64, d: usize, n: f64, c: f64) -> Result<f64> {
    check_delta(delta)?;
    check_lambda(lambda)?;
    let radicand = d as f64 * n.max(2.0).ln() + (1.0 / delta).ln();
    Ok(b + c * r / lambda * radicand.sqrt())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum WidthKind {
    OfflineFixed,
    OfflineUniform,
    LinearOnline,
    KernelOnline,
    Conjectured,
    Constant,
}

impl WidthKind {
    pub const ALL: [WidthKind; 6] = [
        WidthKind::OfflineFixed,
        WidthKind::OfflineUniform,
        WidthKind::LinearOnline,
        WidthKind::KernelOnline,
        WidthKind::Conjectured,
        WidthKind::Constant,
    ];

    /// Name used in configs and CSV column headers.
    pub fn name(self) -> &'static str {
        match self {
            WidthKind::OfflineFixed => "offline-fixed",
            WidthKind::OfflineUniform => "offline-uniform",
            WidthKind::LinearOnline => "linear-online",
            WidthKind::KernelOnline => "kernel-online",
            WidthKind::Conjectured => "conjectured",
            WidthKind::Constant => "constant",
        }
    }

    /// Column-safe name (`rho_<column>`).
    pub fn column(self) -> String {
        self.name().replace('-', "_")
    }
}

impl fmt::Display for WidthKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for WidthKind {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        WidthKind::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| {
                let names: Vec<_> = WidthKind::ALL.iter().map(|k| k.name()).collect();
                format!("unknown width schedule `{s}` (expected one of {})", names.join(", "))
            })
    }
}

/// Shared parameters of every schedule.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WidthParams {
    pub b: f64,
    pub r: f64,
    pub lambda: f64,
    pub delta: f64,
    pub dim: usize,
    pub x_bar: f64,
    /// Leading constant of the offline-uniform and conjectured widths.
    pub c: f64,
    /// Value returned by the constant schedule.
    pub constant: f64,
}

/// A width rule bound to its parameters. The kernel-online kind carries the
/// information-gain curve `γ_0, γ_1, ...` it reads `γ_{n−1}` from.
#[derive(Debug, Clone)]
pub struct WidthSchedule {
    kind: WidthKind,
    params: WidthParams,
    gamma: Option<Arc<Vec<f64>>>,
}

impl WidthSchedule {
    pub fn new(kind: WidthKind, params: WidthParams) -> Result<Self> {
        check_delta(params.delta)?;
        check_lambda(params.lambda)?;
        if kind == WidthKind::KernelOnline {
            return Err(Error::InvalidParameter {
                name: "schedule",
                reason: "kernel-online needs an information-gain curve".into(),
            });
        }
        if kind == WidthKind::Constant && params.constant < params.b {
            return Err(Error::InvalidParameter {
                name: "constant_width",
                reason: format!("must be at least B = {}, got {}", params.b, params.constant),
            });
        }
        Ok(WidthSchedule {
            kind,
            params,
            gamma: None,
        })
    }

    /// Kernel-online schedule reading `γ_{n−1}` from `gamma` (with `gamma[0] = 0`).
    pub fn kernel_online(params: WidthParams, gamma: Arc<Vec<f64>>) -> Result<Self> {
        check_delta(params.delta)?;
        if gamma.is_empty() {
            return Err(Error::Empty("information-gain curve"));
        }
        Ok(WidthSchedule {
            kind: WidthKind::KernelOnline,
            params,
            gamma: Some(gamma),
        })
    }

    pub fn kind(&self) -> WidthKind {
        self.kind
    }

    pub fn params(&self) -> &WidthParams {
        &self.params
    }

    /// Largest `n` this schedule can evaluate.
    pub fn horizon(&self) -> Option<usize> {
        self.gamma.as_ref().map(|g| g.len())
    }

    /// `ρ_n(δ)`.
    ///
    /// # Panics
    ///
    /// For kernel-online schedules, if `n − 1` lies beyond the stored curve.
    pub fn rho(&self, n: usize) -> f64 {
        let p = &self.params;
        let nf = n as f64;
        let value = match self.kind {
            WidthKind::OfflineFixed => offline_width(p.b, p.r, p.lambda, p.delta),
            WidthKind::OfflineUniform => offline_uniform_width(p.b, p.r, p.lambda, p.delta, p.dim, nf, p.c),
            WidthKind::LinearOnline => linear_width(p.b, p.r, p.lambda, p.delta, p.dim, nf, p.x_bar),
            WidthKind::Conjectured => conjectured_width(p.b, p.r, p.lambda, p.delta, p.dim, nf, p.c),
            WidthKind::Constant => Ok(p.constant),
            WidthKind::KernelOnline => {
                let gamma = self.gamma.as_ref().expect("kernel-online schedule has a curve");
                let prev = gamma[n.saturating_sub(1)];
                kernel_online_width(p.b, p.r, p.delta, prev.max(0.0))
            }
        };
        value.expect("parameters validated at construction")
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    const E: f64 = std::f64::consts::E;

    fn params() -> WidthParams {
        WidthParams {
            b: 1.0,
            r: 1.0,
            lambda: 1.0,
            delta: 0.1,
            dim: 1,
            x_bar: 1.0,
            c: 1.0,
            constant: 5.0,
        }
    }

    #[test]
    fn offline_examples() {
        assert_abs_diff_eq!(offline_width(1.0, 1.0, 1.0, 2.0 / (E * E)).unwrap(), 3.0, epsilon = 1e-14);
        assert_eq!(offline_width(1.7, 0.0, 0.3, 0.05).unwrap(), 1.7);
        // 2 + (0.5/0.5)·√(2 ln 20)
        let expected = 2.0 + (2.0 * 20f64.ln()).sqrt();
        assert_abs_diff_eq!(offline_width(2.0, 0.5, 0.5, 0.1).unwrap(), expected, epsilon = 1e-14);
        assert_abs_diff_eq!(expected, 4.4478, epsilon = 1e-4);
        assert!(offline_width(1.0, 1.0, 1.0, 1.5).is_err());
        assert!(offline_width(1.0, 1.0, 1.0, 0.0).is_err());
    }

    #[test]
    fn offline_uniform_examples() {
        assert_eq!(offline_uniform_width(1.0, 0.0, 1.0, 0.3, 2, 50.0, 1.0).unwrap(), 1.0);
        assert_abs_diff_eq!(
            offline_uniform_width(0.0, 1.0, 1.0, 1.0 / E, 1, E, 1.0).unwrap(),
            2f64.sqrt(),
            epsilon = 1e-14
        );
        let one = offline_uniform_width(0.4, 0.3, 0.2, 0.1, 3, 40.0, 1.0).unwrap();
        let two = offline_uniform_width(0.4, 0.3, 0.2, 0.1, 3, 40.0, 2.0).unwrap();
        assert_eq!(two, 2.0 * one);
        assert!(offline_uniform_width(0.4, 0.3, 0.2, 1.0, 3, 40.0, 1.0).is_err());
    }

    #[test]
    fn linear_examples() {
        assert_abs_diff_eq!(linear_width(1.0, 1.0, 1.0, 1.0 / E, 1, 0.0, 1.0).unwrap(), 2.0, epsilon = 1e-14);
        assert_eq!(linear_width(0.8, 0.0, 1.0, 0.1, 3, 1e4, 2.0).unwrap(), 0.8);
        let expected = 1.0 + (2.0 * (101.0f64 / 0.05).ln()).sqrt();
        let got = linear_width(1.0, 1.0, 1.0, 0.05, 2, 100.0, 1.0).unwrap();
        assert_abs_diff_eq!(got, expected, epsilon = 1e-14);
    }

    #[test]
    fn ellipsoid_examples() {
        let lw = linear_width(1.0, 0.5, 1.0, 0.1, 2, 30.0, 1.5).unwrap();
        assert_eq!(ellipsoid_radius(1.0, 0.5, 1.0, 0.1, 2, 30.0, 1.5).unwrap(), lw);
        let lw2 = linear_width(1.0, 0.5, 2.0, 0.1, 2, 30.0, 1.5).unwrap();
        assert_eq!(ellipsoid_radius(1.0, 0.5, 2.0, 0.1, 2, 30.0, 1.5).unwrap(), 2.0 * lw2);
        // λ = 0.5: 0.5·(1 + (1/0.5)·√(2 ln((1 + 100/0.25)/0.05))).
        let expected = 0.5 * (1.0 + 2.0 * (2.0 * ((1.0 + 400.0f64) / 0.05).ln()).sqrt());
        assert_abs_diff_eq!(
            ellipsoid_radius(1.0, 1.0, 0.5, 0.05, 2, 100.0, 1.0).unwrap(),
            expected,
            epsilon = 1e-13
        );
    }

    #[test]
    fn kernel_online_examples() {
        assert_abs_diff_eq!(kernel_online_width(1.0, 1.0, 1.0 / E, 0.0).unwrap(), 3.0, epsilon = 1e-14);
        assert_eq!(kernel_online_width(2.0, 0.0, 0.2, 7.0).unwrap(), 2.0);
        let expected = 1.0 + 0.2 * (2.0 * (5.3 + 1.0 + 10f64.ln())).sqrt();
        let got = kernel_online_width(1.0, 0.2, 0.1, 5.3).unwrap();
        assert_abs_diff_eq!(got, expected, epsilon = 1e-14);
        assert!(kernel_online_width(1.0, 0.2, 0.1, -0.1).is_err());
    }

    #[test]
    fn conjectured_examples() {
        for n in [1.0, 5.0, 100.0] {
            assert_eq!(
                conjectured_width(1.3, 0.4, 0.5, 0.1, 2, n, 1.0).unwrap(),
                offline_uniform_width(1.3, 0.4, 0.5, 0.1, 2, n, 1.0).unwrap()
            );
        }
        assert_abs_diff_eq!(
            conjectured_width(0.0, 1.0, 1.0, 1.0 / E, 1, E, 1.0).unwrap(),
            2f64.sqrt(),
            epsilon = 1e-14
        );
        assert!(
            conjectured_width(1.0, 0.3, 0.2, 0.1, 2, 1000.0, 1.5).unwrap()
                >= conjectured_width(1.0, 0.3, 0.2, 0.1, 2, 10.0, 1.5).unwrap()
        );
    }

    #[test]
    fn schedule_properties() {
        let gamma = Arc::new((0..300).map(|i| (1.0 + i as f64).ln()).collect::<Vec<_>>());
        let build = |p: WidthParams| -> Vec<WidthSchedule> {
            WidthKind::ALL
                .into_iter()
                .map(|k| match k {
                    WidthKind::KernelOnline => WidthSchedule::kernel_online(p, gamma.clone()).unwrap(),
                    k => WidthSchedule::new(k, p).unwrap(),
                })
                .collect()
        };
        for s in build(params()) {
            for n in 1..300 {
                assert!(s.rho(n) >= s.params().b);
                if s.kind() != WidthKind::Constant {
                    assert!(s.rho(n + 1) >= s.rho(n), "{} not monotone", s.kind());
                }
            }
        }
        let at = |delta: f64| build(WidthParams { delta, ..params() });
        for ((a, b), c) in at(0.01).iter().zip(at(0.1)).zip(at(0.5)) {
            for n in [1, 10, 200] {
                assert!(a.rho(n) >= b.rho(n) && b.rho(n) >= c.rho(n));
            }
        }
        for s in build(WidthParams { r: 0.0, constant: 1.0, ..params() }) {
            for n in [1, 10, 200] {
                assert_eq!(s.rho(n), 1.0);
            }
        }
    }

    #[test]
    fn kernel_online_reads_previous_gamma() {
        let gamma = Arc::new(vec![0.0, 0.5, 0.9]);
        let s = WidthSchedule::kernel_online(params(), gamma).unwrap();
        assert_eq!(s.rho(0), s.rho(1));
        assert_eq!(s.rho(3), kernel_online_width(1.0, 1.0, 0.1, 0.9).unwrap());
        assert!(WidthSchedule::new(WidthKind::KernelOnline, params()).is_err());
        assert!(WidthSchedule::new(WidthKind::Constant, WidthParams { constant: 0.5, ..params() }).is_err());
    }

    #[test]
    fn names_round_trip() {
        for k in WidthKind::ALL {
            assert_eq!(k.name().parse::<WidthKind>().unwrap(), k);
        }
        assert!("t1".parse::<WidthKind>().is_err());
    }
}
