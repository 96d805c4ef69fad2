//! Kernel families, Gram matrices, grid domains and Nyström feature maps.
//!
//! The Nyström basis is the finite-dimensional stand-in for the Mercer
//! eigen-expansion `f(x) = wᵀ Λ^{1/2} φ(x)`: on `m` landmarks the Gram matrix
//! is diagonalised as `K_m = U D Uᵀ` and every point gets the feature vector
//! `ψ(x) = D^{-1/2} Uᵀ k_m(x)`, which reproduces the kernel exactly on the
//! landmarks.

use std::fmt;
use std::str::FromStr;

use nalgebra::{DMatrix, SymmetricEigen};
use serde::{Deserialize, Serialize};

use crate::error::{check_dim, Error, Result};

/// Matérn smoothness values with closed-form kernels.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Smoothness {
    /// ν = 1/2 (exponential kernel).
    Half,
    /// ν = 3/2.
    ThreeHalves,
    /// ν = 5/2.
    FiveHalves,
}

impl Smoothness {
    pub fn nu(self) -> f64 {
        match self {
            Smoothness::Half => 0.5,
            Smoothness::ThreeHalves => 1.5,
            Smoothness::FiveHalves => 2.5,
        }
    }

    pub fn from_nu(nu: f64) -> Option<Self> {
        if nu == 0.5 {
            Some(Smoothness::Half)
        } else if nu == 1.5 {
            Some(Smoothness::ThreeHalves)
        } else if nu == 2.5 {
            Some(Smoothness::FiveHalves)
        } else {
            None
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum KernelFamily {
    SquaredExponential,
    Matern(Smoothness),
    /// `k(x, x') = x·x'`; lengthscale and output scale are ignored.
    Linear,
}

impl KernelFamily {
    pub fn name(self) -> &'static str {
        match self {
            KernelFamily::SquaredExponential => "se",
            KernelFamily::Matern(_) => "matern",
            KernelFamily::Linear => "linear",
        }
    }

    pub fn is_stationary(self) -> bool {
        !matches!(self, KernelFamily::Linear)
    }
}

/// A positive-definite kernel with its hyperparameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KernelSpec {
    pub family: KernelFamily,
    pub lengthscale: f64,
    pub output_scale: f64,
    pub dim: usize,
}

impl KernelSpec {
    pub fn new(family: KernelFamily, lengthscale: f64, output_scale: f64, dim: usize) -> Result<Self> {
        let spec = KernelSpec {
            family,
            lengthscale,
            output_scale,
            dim,
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn squared_exponential(lengthscale: f64, dim: usize) -> Result<Self> {
        Self::new(KernelFamily::SquaredExponential, lengthscale, 1.0, dim)
    }

    pub fn matern(nu: Smoothness, lengthscale: f64, dim: usize) -> Result<Self> {
        Self::new(KernelFamily::Matern(nu), lengthscale, 1.0, dim)
    }

    pub fn linear(dim: usize) -> Result<Self> {
        Self::new(KernelFamily::Linear, 1.0, 1.0, dim)
    }

    pub fn with_output_scale(mut self, output_scale: f64) -> Result<Self> {
        self.output_scale = output_scale;
        self.validate()?;
        Ok(self)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.lengthscale > 0.0 && self.lengthscale.is_finite()) {
            return Err(Error::InvalidParameter {
                name: "lengthscale",
                reason: format!("must be positive, got {}", self.lengthscale),
            });
        }
        if !(self.output_scale > 0.0 && self.output_scale.is_finite()) {
            return Err(Error::InvalidParameter {
                name: "output_scale",
                reason: format!("must be positive, got {}", self.output_scale),
            });
        }
        if self.dim == 0 {
            return Err(Error::InvalidParameter {
                name: "dim",
                reason: "must be at least 1".into(),
            });
        }
        Ok(())
    }

    /// Evaluate `k(x, x')`.
    pub fn eval(&self, x: &[f64], x_prime: &[f64]) -> Result<f64> {
        check_dim(self.dim, x.len())?;
        check_dim(self.dim, x_prime.len())?;
        Ok(self.eval_unchecked(x, x_prime))
    }

    /// Evaluate without dimension checks. Callers guarantee both points have
    /// length `dim`.
    pub(crate) fn eval_unchecked(&self, x: &[f64], x_prime: &[f64]) -> f64 {
        let s2 = self.output_scale;
        match self.family {
            KernelFamily::Linear => dot(x, x_prime),
            KernelFamily::SquaredExponential => {
                let r2 = sq_dist(x, x_prime);
                s2 * (-r2 / (2.0 * self.lengthscale * self.lengthscale)).exp()
            }
            KernelFamily::Matern(nu) => {
                let r = sq_dist(x, x_prime).sqrt() / self.lengthscale;
                match nu {
                    Smoothness::Half => s2 * (-r).exp(),
                    Smoothness::ThreeHalves => {
                        let a = 3f64.sqrt() * r;
                        s2 * (1.0 + a) * (-a).exp()
                    }
                    Smoothness::FiveHalves => {
                        let a = 5f64.sqrt() * r;
                        s2 * (1.0 + a + a * a / 3.0) * (-a).exp()
                    }
                }
            }
        }
    }

    /// Prior variance `k(x, x)`.
    pub fn diag(&self, x: &[f64]) -> f64 {
        match self.family {
            KernelFamily::Linear => dot(x, x),
            _ => self.output_scale,
        }
    }

    /// Kernel vector `[k(x, p_1), ..., k(x, p_n)]`.
    pub fn vector(&self, x: &[f64], points: &[Vec<f64>]) -> Vec<f64> {
        points.iter().map(|p| self.eval_unchecked(p, x)).collect()
    }
}

impl fmt::Display for KernelSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.family {
            KernelFamily::Matern(nu) => write!(
                f,
                "matern(nu={}, l={}, s2={}, d={})",
                nu.nu(),
                self.lengthscale,
                self.output_scale,
                self.dim
            ),
            family => write!(
                f,
                "{}(l={}, s2={}, d={})",
                family.name(),
                self.lengthscale,
                self.output_scale,
                self.dim
            ),
        }
    }
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub(crate) fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// Gram matrix `[K]_ij = k(x_i, x_j)`, filled once per unordered pair so the
/// result is exactly symmetric.
pub fn kernel_matrix(spec: &KernelSpec, points: &[Vec<f64>]) -> Result<DMatrix<f64>> {
    if points.is_empty() {
        return Err(Error::Empty("kernel_matrix needs at least one point"));
    }
    for p in points {
        check_dim(spec.dim, p.len())?;
    }
    let n = points.len();
    let mut k = DMatrix::zeros(n, n);
    for i in 0..n {
        for j in 0..=i {
            let v = spec.eval_unchecked(&points[i], &points[j]);
            k[(i, j)] = v;
            k[(j, i)] = v;
        }
    }
    Ok(k)
}

/// Axis-aligned box discretised into a uniform grid.
#[derive(Debug, Clone, PartialEq)]
pub struct Domain {
    lower: Vec<f64>,
    upper: Vec<f64>,
    resolution: usize,
    points: Vec<Vec<f64>>,
    x_bar: f64,
}

impl Domain {
    /// Grid of `resolution^d` points. Each axis gets `resolution` evenly
    /// spaced values including both endpoints (a single value sits at the
    /// midpoint).
    pub fn new(lower: Vec<f64>, upper: Vec<f64>, resolution: usize) -> Result<Self> {
        if lower.is_empty() {
            return Err(Error::Empty("domain needs at least one dimension"));
        }
        check_dim(lower.len(), upper.len())?;
        if resolution == 0 {
            return Err(Error::InvalidParameter {
                name: "grid_resolution",
                reason: "must be at least 1".into(),
            });
        }
        for (lo, hi) in lower.iter().zip(&upper) {
            if !(lo.is_finite() && hi.is_finite() && lo <= hi) {
                return Err(Error::InvalidParameter {
                    name: "domain",
                    reason: format!("invalid interval [{lo}, {hi}]"),
                });
            }
        }
        let d = lower.len();
        let axes: Vec<Vec<f64>> = (0..d)
            .map(|k| axis_values(lower[k], upper[k], resolution))
            .collect();
        let total = resolution
            .checked_pow(d as u32)
            .ok_or(Error::InvalidParameter {
                name: "grid_resolution",
                reason: "grid size overflows".into(),
            })?;
        // Last coordinate varies fastest.
        let mut points = Vec::with_capacity(total);
        for mut idx in 0..total {
            let mut p = vec![0.0; d];
            for k in (0..d).rev() {
                p[k] = axes[k][idx % resolution];
                idx /= resolution;
            }
            points.push(p);
        }
        let x_bar = points
            .iter()
            .map(|p| dot(p, p).sqrt())
            .fold(0.0, f64::max);
        Ok(Domain {
            lower,
            upper,
            resolution,
            points,
            x_bar,
        })
    }

    /// `[0, 1]^d` at the given resolution.
    pub fn unit(dim: usize, resolution: usize) -> Result<Self> {
        Self::new(vec![0.0; dim], vec![1.0; dim], resolution)
    }

    pub fn dim(&self) -> usize {
        self.lower.len()
    }

    pub fn lower(&self) -> &[f64] {
        &self.lower
    }

    pub fn upper(&self) -> &[f64] {
        &self.upper
    }

    pub fn resolution(&self) -> usize {
        self.resolution
    }

    pub fn points(&self) -> &[Vec<f64>] {
        &self.points
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    /// Largest Euclidean norm over grid points.
    pub fn x_bar(&self) -> f64 {
        self.x_bar
    }
}

fn axis_values(lo: f64, hi: f64, g: usize) -> Vec<f64> {
    if g == 1 {
        return vec![0.5 * (lo + hi)];
    }
    let step = (hi - lo) / (g - 1) as f64;
    (0..g)
        .map(|i| if i == g - 1 { hi } else { lo + step * i as f64 })
        .collect()
}

/// Nyström feature map built from an eigendecomposition of the landmark Gram
/// matrix.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct NystromBasis {
    spec: KernelSpec,
    landmarks: Vec<Vec<f64>>,
    /// Retained eigenvalues, nonincreasing and strictly positive.
    eigenvalues: Vec<f64>,
    /// Row `j` holds `D_j^{-1/2} u_j`, so `ψ(x) = projection · k_m(x)`.
    projection: Vec<Vec<f64>>,
}

/// Eigenvalues below this fraction of the largest one are treated as zero
/// directions and dropped from the feature map.
const RANK_TOLERANCE: f64 = 1e-12;

/// Eigendecompose the landmark Gram matrix and build the feature map.
pub fn nystrom_basis(spec: &KernelSpec, landmarks: &[Vec<f64>]) -> Result<NystromBasis> {
    let k = kernel_matrix(spec, landmarks)?;
    let m = landmarks.len();
    for i in 0..m {
        for j in 0..i {
            if sq_dist(&landmarks[i], &landmarks[j]).sqrt() <= 1e-12 {
                return Err(Error::DuplicateLandmark(j, i));
            }
        }
    }
    let scale = (0..m).map(|i| k[(i, i)].abs()).fold(0.0, f64::max).max(f64::MIN_POSITIVE);
    let eig = SymmetricEigen::new(k);
    let mut order: Vec<usize> = (0..m).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));

    let neg_tol = 1e-9 * scale * m as f64;
    let top = eig.eigenvalues[order[0]].max(0.0);
    let mut eigenvalues = Vec::new();
    let mut projection = Vec::new();
    for &j in &order {
        let mut ev = eig.eigenvalues[j];
        if ev < -neg_tol {
            return Err(Error::Indefinite(ev));
        }
        if ev < 0.0 {
            ev = 0.0;
        }
        if ev <= RANK_TOLERANCE * top || ev == 0.0 {
            continue;
        }
        let inv_sqrt = 1.0 / ev.sqrt();
        projection.push(eig.eigenvectors.column(j).iter().map(|u| u * inv_sqrt).collect());
        eigenvalues.push(ev);
    }
    Ok(NystromBasis {
        spec: *spec,
        landmarks: landmarks.to_vec(),
        eigenvalues,
        projection,
    })
}

impl NystromBasis {
    pub fn spec(&self) -> &KernelSpec {
        &self.spec
    }

    pub fn landmarks(&self) -> &[Vec<f64>] {
        &self.landmarks
    }

    pub fn eigenvalues(&self) -> &[f64] {
        &self.eigenvalues
    }

    /// Number of retained feature directions.
    pub fn rank(&self) -> usize {
        self.eigenvalues.len()
    }

    /// Feature vector `ψ(x)`.
    pub fn features(&self, x: &[f64]) -> Result<Vec<f64>> {
        check_dim(self.spec.dim, x.len())?;
        let kx = self.spec.vector(x, &self.landmarks);
        Ok(self.projection.iter().map(|row| dot(row, &kx)).collect())
    }

    /// Landmark coefficients `α = U D^{-1/2} w` of the function `w·ψ(x)`.
    pub fn span_coefficients(&self, weights: &[f64]) -> Result<Vec<f64>> {
        check_dim(self.rank(), weights.len())?;
        let mut alpha = vec![0.0; self.landmarks.len()];
        for (row, w) in self.projection.iter().zip(weights) {
            for (a, r) in alpha.iter_mut().zip(row) {
                *a += w * r;
            }
        }
        Ok(alpha)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ParseFamilyError(pub String);

impl fmt::Display for ParseFamilyError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "unknown kernel family `{}` (expected se, matern or linear)", self.0)
    }
}

impl std::error::Error for ParseFamilyError {}

/// Parses the family name only; Matérn smoothness comes from a separate key
/// and defaults to ν = 3/2 here.
impl FromStr for KernelFamily {
    type Err = ParseFamilyError;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s {
            "se" | "squared-exponential" | "rbf" => Ok(KernelFamily::SquaredExponential),
            "matern" => Ok(KernelFamily::Matern(Smoothness::ThreeHalves)),
            "linear" => Ok(KernelFamily::Linear),
            other => Err(ParseFamilyError(other.to_string())),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn all_specs() -> Vec<KernelSpec> {
        vec![
            KernelSpec::squared_exponential(0.3, 2).unwrap(),
            KernelSpec::matern(Smoothness::Half, 0.3, 2).unwrap(),
            KernelSpec::matern(Smoothness::ThreeHalves, 0.3, 2).unwrap(),
            KernelSpec::matern(Smoothness::FiveHalves, 0.3, 2).unwrap(),
            KernelSpec::linear(2).unwrap(),
        ]
    }

    fn random_points(rng: &mut impl Rng, n: usize, d: usize) -> Vec<Vec<f64>> {
        (0..n).map(|_| (0..d).map(|_| rng.random::<f64>()).collect()).collect()
    }

    #[test]
    fn closed_forms() {
        let se = KernelSpec::squared_exponential(1.0, 1).unwrap();
        assert_eq!(se.eval(&[0.3], &[0.3]).unwrap(), 1.0);
        let e_inv = (-1.0f64).exp();
        assert_abs_diff_eq!(
            KernelSpec::matern(Smoothness::Half, 1.0, 1).unwrap().eval(&[0.0], &[1.0]).unwrap(),
            e_inv,
            epsilon = 1e-15
        );
        assert_abs_diff_eq!(se.eval(&[0.0], &[2f64.sqrt()]).unwrap(), e_inv, epsilon = 1e-15);

        // ν = 3/2 and 5/2 at r = ℓ.
        let m32 = KernelSpec::matern(Smoothness::ThreeHalves, 1.0, 1).unwrap();
        let s3 = 3f64.sqrt();
        assert_abs_diff_eq!(m32.eval(&[0.0], &[1.0]).unwrap(), (1.0 + s3) * (-s3).exp(), epsilon = 1e-15);
        let m52 = KernelSpec::matern(Smoothness::FiveHalves, 1.0, 1).unwrap();
        let s5 = 5f64.sqrt();
        assert_abs_diff_eq!(
            m52.eval(&[0.0], &[1.0]).unwrap(),
            (1.0 + s5 + 5.0 / 3.0) * (-s5).exp(),
            epsilon = 1e-15
        );
        let lin = KernelSpec::linear(2).unwrap();
        assert_eq!(lin.eval(&[1.0, 2.0], &[3.0, -1.0]).unwrap(), 1.0);
    }

    #[test]
    fn rejects_bad_inputs() {
        let se = KernelSpec::squared_exponential(1.0, 2).unwrap();
        assert!(matches!(se.eval(&[0.0], &[0.0, 1.0]), Err(Error::DimensionMismatch { .. })));
        assert!(KernelSpec::squared_exponential(0.0, 1).is_err());
        assert!(KernelSpec::squared_exponential(-1.0, 1).is_err());
        assert!(kernel_matrix(&se, &[]).is_err());
    }

    #[test]
    fn diagonal_is_output_scale() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for spec in all_specs().into_iter().filter(|s| s.family.is_stationary()) {
            let spec = spec.with_output_scale(2.5).unwrap();
            for p in random_points(&mut rng, 20, 2) {
                assert_eq!(spec.eval(&p, &p).unwrap(), 2.5);
                assert_eq!(spec.diag(&p), 2.5);
            }
        }
    }

    #[test]
    fn symmetric_and_stationary() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for spec in all_specs() {
            for _ in 0..100 {
                let x: Vec<f64> = (0..2).map(|_| rng.random()).collect();
                let y: Vec<f64> = (0..2).map(|_| rng.random()).collect();
                assert_eq!(spec.eval(&x, &y).unwrap(), spec.eval(&y, &x).unwrap());
                if spec.family.is_stationary() {
                    let shift: Vec<f64> = (0..2).map(|_| rng.random_range(-5.0..5.0)).collect();
                    let xs: Vec<f64> = x.iter().zip(&shift).map(|(a, b)| a + b).collect();
                    let ys: Vec<f64> = y.iter().zip(&shift).map(|(a, b)| a + b).collect();
                    assert_abs_diff_eq!(
                        spec.eval(&x, &y).unwrap(),
                        spec.eval(&xs, &ys).unwrap(),
                        epsilon = 1e-12
                    );
                }
            }
        }
    }

    #[test]
    fn gram_matrix_small_cases() {
        let se = KernelSpec::squared_exponential(0.5, 1).unwrap();
        let k = kernel_matrix(&se, &[vec![0.4]]).unwrap();
        assert_eq!(k, DMatrix::from_element(1, 1, 1.0));
        let k = kernel_matrix(&se, &[vec![0.4], vec![0.4]]).unwrap();
        assert_eq!(k, DMatrix::from_element(2, 2, 1.0));
    }

    #[test]
    fn gram_matrix_is_psd() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let se = KernelSpec::squared_exponential(0.3, 1).unwrap();
        let k = kernel_matrix(&se, &random_points(&mut rng, 5, 1)).unwrap();
        assert_eq!(k, k.transpose());
        let min = SymmetricEigen::new(k).eigenvalues.min();
        assert!(min >= -1e-9, "min eigenvalue {min}");

        for spec in all_specs() {
            for n in [2, 10, 50] {
                let k = kernel_matrix(&spec, &random_points(&mut rng, n, 2)).unwrap();
                let min = SymmetricEigen::new(k).eigenvalues.min();
                assert!(min >= -1e-9 * n as f64, "{spec}: min eigenvalue {min}");
            }
        }
    }

    #[test]
    fn grid_layout() {
        let dom = Domain::new(vec![0.0, -1.0], vec![1.0, 1.0], 3).unwrap();
        assert_eq!(dom.len(), 9);
        assert_eq!(dom.points()[0], vec![0.0, -1.0]);
        assert_eq!(dom.points()[1], vec![0.0, 0.0]);
        assert_eq!(dom.points()[8], vec![1.0, 1.0]);
        assert_abs_diff_eq!(dom.x_bar(), 2f64.sqrt(), epsilon = 1e-15);
        for p in dom.points() {
            assert!(p[0] >= 0.0 && p[0] <= 1.0 && p[1] >= -1.0 && p[1] <= 1.0);
        }
        let single = Domain::unit(1, 1).unwrap();
        assert_eq!(single.points(), &[vec![0.5]]);
        assert!(Domain::new(vec![1.0], vec![0.0], 4).is_err());
    }

    #[test]
    fn nystrom_single_landmark() {
        let se = KernelSpec::squared_exponential(0.2, 1).unwrap();
        let basis = nystrom_basis(&se, &[vec![0.3]]).unwrap();
        assert_abs_diff_eq!(basis.features(&[0.3]).unwrap()[0].abs(), 1.0, epsilon = 1e-15);
    }

    #[test]
    fn nystrom_exact_on_landmarks() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        for spec in all_specs() {
            let landmarks = random_points(&mut rng, 12, 2);
            let basis = nystrom_basis(&spec, &landmarks).unwrap();
            let w = basis.eigenvalues();
            assert!(w.windows(2).all(|p| p[0] >= p[1]) && w.iter().all(|&v| v > 0.0));
            let feats: Vec<_> = landmarks.iter().map(|z| basis.features(z).unwrap()).collect();
            for i in 0..landmarks.len() {
                for j in 0..landmarks.len() {
                    let k = spec.eval(&landmarks[i], &landmarks[j]).unwrap();
                    assert_abs_diff_eq!(dot(&feats[i], &feats[j]), k, epsilon = 1e-6);
                }
            }
        }
    }

    #[test]
    fn nystrom_approximates_off_landmark() {
        let spec = KernelSpec::squared_exponential(0.2, 1).unwrap();
        let landmarks: Vec<Vec<f64>> = (0..20).map(|i| vec![i as f64 / 19.0]).collect();
        let basis = nystrom_basis(&spec, &landmarks).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        for _ in 0..100 {
            let x = [rng.random::<f64>()];
            let y = [rng.random::<f64>()];
            let approx = dot(&basis.features(&x).unwrap(), &basis.features(&y).unwrap());
            assert_abs_diff_eq!(approx, spec.eval(&x, &y).unwrap(), epsilon = 1e-2);
        }
    }

    #[test]
    fn nystrom_rejects_duplicates() {
        let spec = KernelSpec::squared_exponential(0.2, 1).unwrap();
        assert!(matches!(
            nystrom_basis(&spec, &[vec![0.1], vec![0.5], vec![0.1]]),
            Err(Error::DuplicateLandmark(0, 2))
        ));
    }

    #[test]
    fn nystrom_linear_drops_null_directions() {
        let spec = KernelSpec::linear(2).unwrap();
        let landmarks = vec![vec![1.0, 0.0], vec![0.0, 1.0], vec![1.0, 1.0], vec![0.5, 0.2]];
        let basis = nystrom_basis(&spec, &landmarks).unwrap();
        assert_eq!(basis.rank(), 2);
    }
}
