//! Test functions with exactly known RKHS norm and sub-Gaussian noise.

use std::fmt;
use std::str::FromStr;

use nalgebra::DVector;
use rand::seq::index;
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{check_dim, Error, Result};
use crate::kernel::{dot, kernel_matrix, nystrom_basis, Domain, KernelSpec, NystromBasis};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum FunctionForm {
    /// `f = Σ α_i k(z_i, ·)` over grid centers.
    Span,
    /// `f = w·ψ(·)` over a Nyström basis.
    Feature,
}

impl FunctionForm {
    pub fn name(self) -> &'static str {
        match self {
            FunctionForm::Span => "span",
            FunctionForm::Feature => "feature",
        }
    }
}

impl FromStr for FunctionForm {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s {
            "span" => Ok(FunctionForm::Span),
            "feature" => Ok(FunctionForm::Feature),
            other => Err(format!("unknown function form `{other}` (expected span or feature)")),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "form", rename_all = "lowercase")]
pub enum Representation {
    Span {
        centers: Vec<Vec<f64>>,
        coefficients: Vec<f64>,
    },
    Feature {
        basis: NystromBasis,
        weights: Vec<f64>,
    },
}

/// A concrete element of the RKHS with its norm bound `B`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RkhsFunction {
    spec: KernelSpec,
    norm_bound: f64,
    repr: Representation,
}

impl RkhsFunction {
    /// Span-form function from explicit centers and coefficients. The stored
    /// bound is the exact norm.
    pub fn from_span(spec: KernelSpec, centers: Vec<Vec<f64>>, coefficients: Vec<f64>) -> Result<Self> {
        check_dim(centers.len(), coefficients.len())?;
        for c in &centers {
            check_dim(spec.dim, c.len())?;
        }
        let mut f = RkhsFunction {
            spec,
            norm_bound: 0.0,
            repr: Representation::Span {
                centers,
                coefficients,
            },
        };
        f.norm_bound = f.rkhs_norm();
        Ok(f)
    }

    /// Feature-form function `w·ψ(x)`.
    pub fn from_features(basis: NystromBasis, weights: Vec<f64>) -> Result<Self> {
        check_dim(basis.rank(), weights.len())?;
        let norm_bound = dot(&weights, &weights).sqrt();
        Ok(RkhsFunction {
            spec: *basis.spec(),
            norm_bound,
            repr: Representation::Feature { basis, weights },
        })
    }

    pub fn spec(&self) -> &KernelSpec {
        &self.spec
    }

    pub fn representation(&self) -> &Representation {
        &self.repr
    }

    /// The norm bound `B` the function was constructed for.
    pub fn norm_bound(&self) -> f64 {
        self.norm_bound
    }

    /// `f(x)` via the reproducing property.
    pub fn evaluate(&self, x: &[f64]) -> Result<f64> {
        check_dim(self.spec.dim, x.len())?;
        Ok(self.eval_unchecked(x))
    }

    fn eval_unchecked(&self, x: &[f64]) -> f64 {
        match &self.repr {
            Representation::Span {
                centers,
                coefficients,
            } => centers
                .iter()
                .zip(coefficients)
                .map(|(z, a)| a * self.spec.eval_unchecked(z, x))
                .sum(),
            Representation::Feature { basis, weights } => {
                dot(weights, &basis.features(x).expect("dimension checked"))
            }
        }
    }

    /// Values on every point of a grid.
    pub fn values_on(&self, points: &[Vec<f64>]) -> Result<Vec<f64>> {
        points.iter().map(|p| self.evaluate(p)).collect()
    }

    /// `‖f‖_H`: `√(αᵀKα)` for span-form, `‖w‖₂` for feature-form.
    pub fn rkhs_norm(&self) -> f64 {
        match &self.repr {
            Representation::Span {
                centers,
                coefficients,
            } => {
                if centers.is_empty() {
                    return 0.0;
                }
                quadratic_norm(&self.spec, centers, coefficients)
            }
            Representation::Feature { weights, .. } => dot(weights, weights).sqrt(),
        }
    }

    /// For the linear kernel, the weight vector `w` with `f(x) = w·x`.
    pub fn linear_weights(&self) -> Option<Vec<f64>> {
        if self.spec.family.is_stationary() {
            return None;
        }
        let (centers, alpha) = match &self.repr {
            Representation::Span {
                centers,
                coefficients,
            } => (centers.as_slice(), coefficients.clone()),
            Representation::Feature { basis, weights } => {
                (basis.landmarks(), basis.span_coefficients(weights).ok()?)
            }
        };
        let mut w = vec![0.0; self.spec.dim];
        for (z, a) in centers.iter().zip(&alpha) {
            for (wk, zk) in w.iter_mut().zip(z) {
                *wk += a * zk;
            }
        }
        Some(w)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }
}

fn quadratic_norm(spec: &KernelSpec, centers: &[Vec<f64>], alpha: &[f64]) -> f64 {
    let k = kernel_matrix(spec, centers).expect("centers validated");
    let a = DVector::from_column_slice(alpha);
    (a.dot(&(&k * &a))).max(0.0).sqrt()
}

/// Draw a function of norm exactly `b`.
///
/// Span-form draws `m` distinct centers from the grid and standard-normal
/// coefficients; feature-form builds a Nyström basis on `m` distinct grid
/// landmarks and draws standard-normal weights. Either way the raw draw is
/// rescaled to norm `b`. A zero-norm draw is retried once.
pub fn sample_rkhs_function<R: Rng + ?Sized>(
    spec: &KernelSpec,
    b: f64,
    form: FunctionForm,
    m: usize,
    domain: &Domain,
    rng: &mut R,
) -> Result<RkhsFunction> {
    if !(b >= 0.0 && b.is_finite()) {
        return Err(Error::InvalidParameter {
            name: "rkhs_norm",
            reason: format!("must be nonnegative, got {b}"),
        });
    }
    check_dim(spec.dim, domain.dim())?;
    if m == 0 || m > domain.len() {
        return Err(Error::InvalidParameter {
            name: "centers",
            reason: format!("need 1 <= m <= {} grid points, got {m}", domain.len()),
        });
    }
    let centers: Vec<Vec<f64>> = index::sample(rng, domain.len(), m)
        .into_iter()
        .map(|i| domain.points()[i].clone())
        .collect();

    match form {
        FunctionForm::Span => {
            let k = kernel_matrix(spec, &centers)?;
            let mut attempts = 0;
            loop {
                let alpha: Vec<f64> = (0..m).map(|_| StandardNormal.sample(rng)).collect();
                if b == 0.0 {
                    return RkhsFunction::from_span(*spec, centers, vec![0.0; m])
                        .map(|f| f.with_bound(0.0));
                }
                let a = DVector::from_column_slice(&alpha);
                let raw = a.dot(&(&k * &a));
                if raw > 0.0 && raw.is_finite() {
                    let scale = b / raw.sqrt();
                    let alpha = alpha.into_iter().map(|v| v * scale).collect();
                    return RkhsFunction::from_span(*spec, centers, alpha).map(|f| f.with_bound(b));
                }
                attempts += 1;
                if attempts > 1 {
                    return Err(Error::DegenerateDraw);
                }
            }
        }
        FunctionForm::Feature => {
            let basis = nystrom_basis(spec, &centers)?;
            let r = basis.rank();
            let mut attempts = 0;
            loop {
                let w: Vec<f64> = (0..r).map(|_| StandardNormal.sample(rng)).collect();
                if b == 0.0 {
                    return RkhsFunction::from_features(basis, vec![0.0; r]);
                }
                let norm = dot(&w, &w).sqrt();
                if norm > 0.0 {
                    let w = w.into_iter().map(|v| v * b / norm).collect();
                    return RkhsFunction::from_features(basis, w).map(|f| f.with_bound(b));
                }
                attempts += 1;
                if attempts > 1 {
                    return Err(Error::DegenerateDraw);
                }
            }
        }
    }
}

impl RkhsFunction {
    fn with_bound(mut self, b: f64) -> Self {
        self.norm_bound = b;
        self
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum NoiseKind {
    Gaussian,
    Rademacher,
}

impl NoiseKind {
    pub fn name(self) -> &'static str {
        match self {
            NoiseKind::Gaussian => "gaussian",
            NoiseKind::Rademacher => "rademacher",
        }
    }
}

impl FromStr for NoiseKind {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s {
            "gaussian" => Ok(NoiseKind::Gaussian),
            "rademacher" => Ok(NoiseKind::Rademacher),
            other => Err(format!("unknown noise kind `{other}` (expected gaussian or rademacher)")),
        }
    }
}

/// R-sub-Gaussian observation noise.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NoiseModel {
    pub kind: NoiseKind,
    pub scale: f64,
}

impl NoiseModel {
    pub fn new(kind: NoiseKind, scale: f64) -> Result<Self> {
        if !(scale >= 0.0 && scale.is_finite()) {
            return Err(Error::InvalidParameter {
                name: "noise_scale",
                reason: format!("must be nonnegative, got {scale}"),
            });
        }
        Ok(NoiseModel { kind, scale })
    }

    pub fn gaussian(scale: f64) -> Result<Self> {
        Self::new(NoiseKind::Gaussian, scale)
    }

    pub fn rademacher(scale: f64) -> Result<Self> {
        Self::new(NoiseKind::Rademacher, scale)
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        match self.kind {
            NoiseKind::Gaussian => {
                let z: f64 = StandardNormal.sample(rng);
                self.scale * z
            }
            NoiseKind::Rademacher => {
                if rng.random::<bool>() {
                    self.scale
                } else {
                    -self.scale
                }
            }
        }
    }
}

impl fmt::Display for NoiseModel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}(R={})", self.kind.name(), self.scale)
    }
}

/// `y = f(x) + ε`.
pub fn observe<R: Rng + ?Sized>(f: &RkhsFunction, x: &[f64], noise: &NoiseModel, rng: &mut R) -> Result<f64> {
    Ok(f.evaluate(x)? + noise.sample(rng))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kernel::Smoothness;
    use approx::assert_abs_diff_eq;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn grid() -> Domain {
        Domain::unit(1, 100).unwrap()
    }

    #[test]
    fn zero_norm_is_zero_function() {
        let se = KernelSpec::squared_exponential(0.2, 1).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for form in [FunctionForm::Span, FunctionForm::Feature] {
            let f = sample_rkhs_function(&se, 0.0, form, 10, &grid(), &mut rng).unwrap();
            assert_eq!(f.rkhs_norm(), 0.0);
            assert!(f.values_on(grid().points()).unwrap().iter().all(|&v| v == 0.0));
        }
    }

    #[test]
    fn single_center() {
        let se = KernelSpec::squared_exponential(0.2, 1).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let f = sample_rkhs_function(&se, 2.0, FunctionForm::Span, 1, &grid(), &mut rng).unwrap();
        let Representation::Span { centers, coefficients } = f.representation() else {
            panic!("span expected")
        };
        assert_abs_diff_eq!(coefficients[0].abs(), 2.0, epsilon = 1e-14);
        assert_abs_diff_eq!(f.evaluate(&centers[0]).unwrap().abs(), 2.0, epsilon = 1e-14);
        for v in f.values_on(grid().points()).unwrap() {
            assert!(v.abs() <= 2.0 + 1e-12);
        }
    }

    #[test]
    fn thirty_centers_norm_and_bound() {
        let se = KernelSpec::squared_exponential(0.2, 1).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let f = sample_rkhs_function(&se, 2.0, FunctionForm::Span, 30, &grid(), &mut rng).unwrap();
        let Representation::Span { centers, coefficients } = f.representation() else {
            panic!("span expected")
        };
        // Independent quadratic form, summed entrywise.
        let mut q = 0.0;
        for i in 0..30 {
            for j in 0..30 {
                q += coefficients[i] * coefficients[j] * se.eval(&centers[i], &centers[j]).unwrap();
            }
        }
        assert_abs_diff_eq!(q.sqrt(), 2.0, epsilon = 1e-10);
        assert_abs_diff_eq!(f.rkhs_norm(), 2.0, epsilon = 1e-10);
        let max = f.values_on(grid().points()).unwrap().into_iter().fold(0.0f64, |m, v| m.max(v.abs()));
        assert!(max <= 2.0 + 1e-12);
    }

    #[test]
    fn explicit_span_values() {
        let se = KernelSpec::squared_exponential(0.3, 1).unwrap();
        let f = RkhsFunction::from_span(se, vec![vec![0.4]], vec![1.0]).unwrap();
        assert_eq!(f.evaluate(&[0.4]).unwrap(), 1.0);
        let g = RkhsFunction::from_span(se, vec![vec![0.4]], vec![3.0]).unwrap();
        assert_eq!(g.rkhs_norm(), 3.0);
        let zero = RkhsFunction::from_span(se, vec![], vec![]).unwrap();
        assert_eq!(zero.rkhs_norm(), 0.0);
        assert_eq!(zero.evaluate(&[0.9]).unwrap(), 0.0);
        assert!(f.evaluate(&[0.1, 0.2]).is_err());
    }

    #[test]
    fn evaluation_at_centers_matches_matrix_product() {
        let se = KernelSpec::squared_exponential(0.3, 1).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        let f = sample_rkhs_function(&se, 1.5, FunctionForm::Span, 5, &grid(), &mut rng).unwrap();
        let Representation::Span { centers, coefficients } = f.representation() else {
            panic!("span expected")
        };
        let k = kernel_matrix(&se, centers).unwrap();
        let expected = &k * DVector::from_column_slice(coefficients);
        for (i, c) in centers.iter().enumerate() {
            assert_abs_diff_eq!(f.evaluate(c).unwrap(), expected[i], epsilon = 1e-12);
        }
    }

    #[test]
    fn triangle_inequality_on_shared_centers() {
        let se = KernelSpec::matern(Smoothness::FiveHalves, 0.25, 1).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let centers: Vec<Vec<f64>> = (0..8).map(|i| vec![i as f64 / 8.0]).collect();
        for _ in 0..50 {
            let a: Vec<f64> = (0..8).map(|_| StandardNormal.sample(&mut rng)).collect();
            let b: Vec<f64> = (0..8).map(|_| StandardNormal.sample(&mut rng)).collect();
            let sum: Vec<f64> = a.iter().zip(&b).map(|(x, y)| x + y).collect();
            let f = RkhsFunction::from_span(se, centers.clone(), a).unwrap();
            let g = RkhsFunction::from_span(se, centers.clone(), b).unwrap();
            let h = RkhsFunction::from_span(se, centers.clone(), sum).unwrap();
            assert!(h.rkhs_norm() <= f.rkhs_norm() + g.rkhs_norm() + 1e-12);
        }
    }

    #[test]
    fn feature_form_norm_matches_span_equivalent() {
        let se = KernelSpec::squared_exponential(0.2, 1).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(33);
        let f = sample_rkhs_function(&se, 1.7, FunctionForm::Feature, 15, &grid(), &mut rng).unwrap();
        assert_abs_diff_eq!(f.rkhs_norm(), 1.7, epsilon = 1e-10);
        let Representation::Feature { basis, weights } = f.representation() else {
            panic!("feature expected")
        };
        let alpha = basis.span_coefficients(weights).unwrap();
        let g = RkhsFunction::from_span(se, basis.landmarks().to_vec(), alpha).unwrap();
        assert_abs_diff_eq!(g.rkhs_norm(), 1.7, epsilon = 1e-6);
        for p in grid().points().iter().step_by(7) {
            assert_abs_diff_eq!(f.evaluate(p).unwrap(), g.evaluate(p).unwrap(), epsilon = 1e-8);
        }
    }

    #[test]
    fn linear_weights_reproduce_function() {
        let lin = KernelSpec::linear(2).unwrap();
        let dom = Domain::new(vec![-1.0, -1.0], vec![1.0, 1.0], 11).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        for form in [FunctionForm::Span, FunctionForm::Feature] {
            let f = sample_rkhs_function(&lin, 1.0, form, 4, &dom, &mut rng).unwrap();
            let w = f.linear_weights().unwrap();
            assert_abs_diff_eq!(dot(&w, &w).sqrt(), 1.0, epsilon = 1e-10);
            for p in dom.points() {
                assert_abs_diff_eq!(f.evaluate(p).unwrap(), dot(&w, p), epsilon = 1e-10);
            }
        }
        let se = KernelSpec::squared_exponential(0.2, 1).unwrap();
        let g = RkhsFunction::from_span(se, vec![vec![0.0]], vec![1.0]).unwrap();
        assert!(g.linear_weights().is_none());
    }

    #[test]
    fn seed_determinism_and_json_round_trip() {
        let se = KernelSpec::squared_exponential(0.2, 1).unwrap();
        let draw = |seed| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            sample_rkhs_function(&se, 2.0, FunctionForm::Span, 10, &grid(), &mut rng).unwrap()
        };
        let a = draw(99).values_on(grid().points()).unwrap();
        let b = draw(99).values_on(grid().points()).unwrap();
        assert_eq!(a, b);
        let restored = RkhsFunction::from_json(&draw(99).to_json().unwrap()).unwrap();
        assert_eq!(restored.values_on(grid().points()).unwrap(), a);
    }

    #[test]
    fn rejects_negative_norm_and_oversized_m() {
        let se = KernelSpec::squared_exponential(0.2, 1).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        assert!(sample_rkhs_function(&se, -1.0, FunctionForm::Span, 3, &grid(), &mut rng).is_err());
        assert!(sample_rkhs_function(&se, 1.0, FunctionForm::Span, 101, &grid(), &mut rng).is_err());
    }

    #[test]
    fn degenerate_draw_fails() {
        // Linear kernel with the only center at the origin has K = [0].
        let lin = KernelSpec::linear(1).unwrap();
        let dom = Domain::new(vec![0.0], vec![0.0], 1).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        assert!(matches!(
            sample_rkhs_function(&lin, 1.0, FunctionForm::Span, 1, &dom, &mut rng),
            Err(Error::DegenerateDraw)
        ));
    }

    #[test]
    fn noiseless_and_rademacher_observations() {
        let se = KernelSpec::squared_exponential(0.2, 1).unwrap();
        let f = RkhsFunction::from_span(se, vec![vec![0.5]], vec![1.2]).unwrap();
        let fx = f.evaluate(&[0.3]).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let quiet = NoiseModel::gaussian(0.0).unwrap();
        assert_eq!(observe(&f, &[0.3], &quiet, &mut rng).unwrap(), fx);
        let rad = NoiseModel::rademacher(0.5).unwrap();
        for _ in 0..100 {
            let y = observe(&f, &[0.3], &rad, &mut rng).unwrap();
            assert!(y == fx - 0.5 || y == fx + 0.5);
        }
    }

    #[test]
    fn gaussian_noise_moments() {
        let se = KernelSpec::squared_exponential(0.2, 1).unwrap();
        let f = RkhsFunction::from_span(se, vec![vec![0.5]], vec![1.0]).unwrap();
        let fx = f.evaluate(&[0.45]).unwrap();
        let noise = NoiseModel::gaussian(0.1).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        let n = 100_000;
        let ys: Vec<f64> = (0..n).map(|_| observe(&f, &[0.45], &noise, &mut rng).unwrap()).collect();
        let mean = ys.iter().sum::<f64>() / n as f64;
        let var = ys.iter().map(|y| (y - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
        assert!((mean - fx).abs() <= 3.0 * 0.1 / (n as f64).sqrt());
        assert!((var - 0.01).abs() <= 0.05 * 0.01);
    }

    #[test]
    fn tail_fraction_is_small() {
        let mut rng = ChaCha8Rng::seed_from_u64(77);
        for noise in [NoiseModel::gaussian(1.0).unwrap(), NoiseModel::rademacher(1.0).unwrap()] {
            let n = 100_000;
            let big = (0..n).filter(|_| noise.sample(&mut rng).abs() > 3.0).count();
            assert!(big as f64 / n as f64 <= 0.005);
        }
    }
}
