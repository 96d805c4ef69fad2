//! Sequential GP surrogate regression.
//!
//! [`Posterior`] keeps a packed lower-triangular Cholesky factor `L` of
//! `λ²I_n + K_n` and grows it by one bordering row per observation, so each
//! update costs `O(n²)` instead of a fresh `O(n³)` factorisation.
//! [`GridPosterior`] additionally tracks `L⁻¹ K_{n,grid}` for a fixed grid so
//! that means and variances over the whole grid are refreshed in `O(n·|grid|)`.
//! [`RidgeState`] is the weight-space view for the linear kernel.

use log::warn;
use nalgebra::{Cholesky, DMatrix, DVector};
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{check_dim, Error, Result};
use crate::kernel::{dot, KernelSpec};

/// Bordering breaks down when the new squared diagonal falls below this.
const BREAKDOWN_TOLERANCE: f64 = -1e-9;
/// Replacement diagonal for tiny nonpositive bordering arguments.
const CLAMPED_DIAGONAL_SQ: f64 = 1e-12;

/// GP posterior conditioned on `n` observations.
#[derive(Debug, Clone)]
pub struct Posterior {
    spec: KernelSpec,
    lambda: f64,
    points: Vec<Vec<f64>>,
    targets: Vec<f64>,
    /// Row-packed lower factor: row `i` occupies `[i(i+1)/2, i(i+1)/2 + i]`.
    chol: Vec<f64>,
    /// `L⁻¹ y`.
    whitened: Vec<f64>,
    /// `(λ²I + K)⁻¹ y`.
    coef: Vec<f64>,
}

/// The row appended to `L` by one update.
#[derive(Debug, Clone)]
pub(crate) struct Border {
    /// Off-diagonal part, solves `L v = k_n(x)`.
    pub row: Vec<f64>,
    pub diag: f64,
    /// New last entry of `L⁻¹ y`.
    pub whitened: f64,
}

#[inline]
fn row_start(i: usize) -> usize {
    i * (i + 1) / 2
}

impl Posterior {
    /// Zero-mean prior: `μ_0 = 0`, `σ_0² = k(x, x)`.
    pub fn new(spec: KernelSpec, lambda: f64) -> Result<Self> {
        if !(lambda > 0.0 && lambda.is_finite()) {
            return Err(Error::InvalidParameter {
                name: "lambda",
                reason: format!("must be positive, got {lambda}"),
            });
        }
        spec.validate()?;
        Ok(Posterior {
            spec,
            lambda,
            points: Vec::new(),
            targets: Vec::new(),
            chol: Vec::new(),
            whitened: Vec::new(),
            coef: Vec::new(),
        })
    }

    pub fn spec(&self) -> &KernelSpec {
        &self.spec
    }

    pub fn lambda(&self) -> f64 {
        self.lambda
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn points(&self) -> &[Vec<f64>] {
        &self.points
    }

    pub fn targets(&self) -> &[f64] {
        &self.targets
    }

    /// The factor `L` as a dense matrix.
    pub fn cholesky_factor(&self) -> DMatrix<f64> {
        let n = self.len();
        let mut l = DMatrix::zeros(n, n);
        for i in 0..n {
            let s = row_start(i);
            for j in 0..=i {
                l[(i, j)] = self.chol[s + j];
            }
        }
        l
    }

    /// Solve `L v = b` in place.
    fn forward_solve(&self, b: &mut [f64]) {
        for i in 0..b.len() {
            let s = row_start(i);
            let row = &self.chol[s..s + i];
            b[i] = (b[i] - dot(row, &b[..i])) / self.chol[s + i];
        }
    }

    /// Solve `Lᵀ a = b` in place.
    fn backward_solve(&self, b: &mut [f64]) {
        let n = b.len();
        for i in (0..n).rev() {
            let bi = b[i] / self.chol[row_start(i) + i];
            b[i] = bi;
            for (j, bj) in b.iter_mut().enumerate().take(i) {
                *bj -= self.chol[row_start(i) + j] * bi;
            }
        }
    }

    /// Condition on one more observation `(x, y)`.
    pub fn update(&mut self, x: &[f64], y: f64) -> Result<()> {
        self.push(x, y).map(|_| ())
    }

    pub(crate) fn push(&mut self, x: &[f64], y: f64) -> Result<Border> {
        check_dim(self.spec.dim, x.len())?;
        let n = self.len();
        let mut v = self.spec.vector(x, &self.points);
        self.forward_solve(&mut v);
        let mut d2 = self.lambda * self.lambda + self.spec.diag(x) - dot(&v, &v);
        if d2 <= BREAKDOWN_TOLERANCE {
            return Err(Error::Breakdown(d2));
        }
        if d2 <= 0.0 {
            warn!("bordering diagonal {d2:e} clamped to {CLAMPED_DIAGONAL_SQ:e}");
            d2 = CLAMPED_DIAGONAL_SQ;
        }
        let diag = d2.sqrt();
        let whitened = (y - dot(&v, &self.whitened)) / diag;

        self.chol.reserve(n + 1);
        self.chol.extend_from_slice(&v);
        self.chol.push(diag);
        self.whitened.push(whitened);
        self.points.push(x.to_vec());
        self.targets.push(y);

        let mut coef = self.whitened.clone();
        self.backward_solve(&mut coef);
        self.coef = coef;
        Ok(Border {
            row: v,
            diag,
            whitened,
        })
    }

    /// `μ_n(x) = k_n(x)·a`.
    pub fn mean(&self, x: &[f64]) -> Result<f64> {
        check_dim(self.spec.dim, x.len())?;
        if self.is_empty() {
            return Ok(0.0);
        }
        Ok(dot(&self.spec.vector(x, &self.points), &self.coef))
    }

    /// `σ_n²(x) = k(x,x) − ‖L⁻¹k_n(x)‖²`, clamped to `[0, k(x,x)]`.
    pub fn variance(&self, x: &[f64]) -> Result<f64> {
        check_dim(self.spec.dim, x.len())?;
        let prior = self.spec.diag(x);
        if self.is_empty() {
            return Ok(prior);
        }
        let mut v = self.spec.vector(x, &self.points);
        self.forward_solve(&mut v);
        Ok((prior - dot(&v, &v)).clamp(0.0, prior))
    }

    pub fn std_dev(&self, x: &[f64]) -> Result<f64> {
        self.variance(x).map(f64::sqrt)
    }

    /// Coefficient vector `a = (λ²I + K)⁻¹ y`.
    pub fn coefficients(&self) -> &[f64] {
        &self.coef
    }
}

/// A [`Posterior`] together with cached means and variances over a fixed grid.
#[derive(Debug, Clone)]
pub struct GridPosterior {
    posterior: Posterior,
    grid: Vec<Vec<f64>>,
    prior_var: Vec<f64>,
    /// Row `i` is row `i` of `L⁻¹ K_{n,grid}`.
    cross: Vec<Vec<f64>>,
    mean: Vec<f64>,
    /// Unclamped running variance.
    var: Vec<f64>,
}

impl GridPosterior {
    pub fn new(spec: KernelSpec, lambda: f64, grid: &[Vec<f64>]) -> Result<Self> {
        if grid.is_empty() {
            return Err(Error::Empty("grid"));
        }
        for p in grid {
            check_dim(spec.dim, p.len())?;
        }
        let posterior = Posterior::new(spec, lambda)?;
        let prior_var: Vec<f64> = grid.iter().map(|p| spec.diag(p)).collect();
        Ok(GridPosterior {
            posterior,
            grid: grid.to_vec(),
            var: prior_var.clone(),
            prior_var,
            cross: Vec::new(),
            mean: vec![0.0; grid.len()],
        })
    }

    pub fn posterior(&self) -> &Posterior {
        &self.posterior
    }

    pub fn grid(&self) -> &[Vec<f64>] {
        &self.grid
    }

    pub fn len(&self) -> usize {
        self.posterior.len()
    }

    pub fn is_empty(&self) -> bool {
        self.posterior.is_empty()
    }

    /// Observe `y` at an arbitrary point.
    pub fn update(&mut self, x: &[f64], y: f64) -> Result<()> {
        let border = self.posterior.push(x, y)?;
        let spec = *self.posterior.spec();
        let mut row: Vec<f64> = self.grid.iter().map(|g| spec.eval_unchecked(x, g)).collect();
        for (coef, prev) in border.row.iter().zip(&self.cross) {
            for (r, p) in row.iter_mut().zip(prev) {
                *r -= coef * p;
            }
        }
        for r in row.iter_mut() {
            *r /= border.diag;
        }
        for ((m, v), r) in self.mean.iter_mut().zip(self.var.iter_mut()).zip(&row) {
            *m += r * border.whitened;
            *v -= r * r;
        }
        self.cross.push(row);
        Ok(())
    }

    /// Observe `y` at grid point `index`.
    pub fn update_at(&mut self, index: usize, y: f64) -> Result<()> {
        let x = self.grid[index].clone();
        self.update(&x, y)
    }

    pub fn means(&self) -> &[f64] {
        &self.mean
    }

    pub fn variance_at(&self, index: usize) -> f64 {
        self.var[index].clamp(0.0, self.prior_var[index])
    }

    pub fn variances(&self) -> Vec<f64> {
        (0..self.grid.len()).map(|i| self.variance_at(i)).collect()
    }

    pub fn std_devs(&self) -> Vec<f64> {
        (0..self.grid.len()).map(|i| self.variance_at(i).sqrt()).collect()
    }

    /// Posterior covariance over the grid, `K_GG − (L⁻¹K_nG)ᵀ(L⁻¹K_nG)`.
    pub fn covariance(&self) -> DMatrix<f64> {
        let g = self.grid.len();
        let spec = self.posterior.spec();
        let mut cov = DMatrix::zeros(g, g);
        for i in 0..g {
            for j in 0..=i {
                let mut c = spec.eval_unchecked(&self.grid[i], &self.grid[j]);
                for row in &self.cross {
                    c -= row[i] * row[j];
                }
                cov[(i, j)] = c;
                cov[(j, i)] = c;
            }
        }
        cov
    }

    /// One joint draw from `N(μ_n(grid), Σ_n(grid))`.
    ///
    /// Jitter starts at `1e-10·s²` and grows tenfold up to `1e-6·s²`.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> Result<Vec<f64>> {
        let cov = self.covariance();
        let g = cov.nrows();
        let s2 = self.posterior.spec().output_scale;
        let mut jitter = 1e-10 * s2;
        let factor = loop {
            let mut m = cov.clone();
            for i in 0..g {
                m[(i, i)] += jitter;
            }
            if let Some(c) = Cholesky::new(m) {
                break c;
            }
            if jitter >= 1e-6 * s2 * (1.0 - 1e-12) {
                return Err(Error::Factorization(format!(
                    "posterior covariance not positive definite with jitter {jitter:e}"
                )));
            }
            jitter *= 10.0;
        };
        let z = DVector::from_fn(g, |_, _| StandardNormal.sample(rng));
        let draw = factor.l() * z;
        Ok(draw.iter().zip(&self.mean).map(|(d, m)| d + m).collect())
    }
}

/// Ridge regression in weight space: `V_n = λ²I + Σ x xᵀ`, `b_n = Σ x y`.
#[derive(Debug, Clone)]
pub struct RidgeState {
    lambda: f64,
    gram: DMatrix<f64>,
    moment: DVector<f64>,
    n: usize,
}

impl RidgeState {
    pub fn new(dim: usize, lambda: f64) -> Result<Self> {
        if !(lambda > 0.0 && lambda.is_finite()) {
            return Err(Error::InvalidParameter {
                name: "lambda",
                reason: format!("must be positive, got {lambda}"),
            });
        }
        if dim == 0 {
            return Err(Error::InvalidParameter {
                name: "dim",
                reason: "must be at least 1".into(),
            });
        }
        Ok(RidgeState {
            lambda,
            gram: DMatrix::identity(dim, dim) * (lambda * lambda),
            moment: DVector::zeros(dim),
            n: 0,
        })
    }

    pub fn dim(&self) -> usize {
        self.moment.len()
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    pub fn lambda(&self) -> f64 {
        self.lambda
    }

    pub fn update(&mut self, x: &[f64], y: f64) -> Result<()> {
        check_dim(self.dim(), x.len())?;
        let xv = DVector::from_column_slice(x);
        self.gram += &xv * xv.transpose();
        self.moment += xv * y;
        self.n += 1;
        Ok(())
    }

    pub fn gram(&self) -> &DMatrix<f64> {
        &self.gram
    }

    /// `(ŵ_n, V_n)`.
    pub fn weights(&self) -> (DVector<f64>, DMatrix<f64>) {
        let chol = Cholesky::new(self.gram.clone()).expect("λ²I + XᵀX is positive definite");
        (chol.solve(&self.moment), self.gram.clone())
    }

    /// `‖w − ŵ_n‖_{V_n}`.
    pub fn ellipsoid_norm(&self, w: &[f64]) -> Result<f64> {
        check_dim(self.dim(), w.len())?;
        let (w_hat, v) = self.weights();
        let diff = DVector::from_column_slice(w) - w_hat;
        Ok(diff.dot(&(&v * &diff)).max(0.0).sqrt())
    }
}
