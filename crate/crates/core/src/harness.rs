//! Monte Carlo experiments: cumulative regret, confidence-interval coverage
//! and the linear confidence-ellipsoid check.
//!
//! Replicate `r` draws its function, noise and policy randomness from three
//! substreams of a seed derived from `(master seed, r)`, so results do not
//! depend on scheduling. Replicates run on the ambient rayon pool and are
//! collected in index order before any aggregation.

use std::sync::Arc;

use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::config::ExperimentConfig;
use crate::error::{Error, Result};
use crate::info_gain::{greedy_max_info_gain, InfoGainCurve};
use crate::kernel::{Domain, KernelFamily};
use crate::policy::{self, PolicyKind};
use crate::posterior::{GridPosterior, RidgeState};
use crate::rkhs::{sample_rkhs_function, RkhsFunction};
use crate::seeds::{stream, Substream};
use crate::widths::{ellipsoid_radius, WidthKind, WidthParams, WidthSchedule};

/// Shared, replicate-independent state of one experiment.
#[derive(Debug, Clone)]
pub struct Setup {
    pub config: ExperimentConfig,
    pub domain: Domain,
    pub params: WidthParams,
    gamma: Option<Arc<InfoGainCurve>>,
}

impl Setup {
    /// Build the grid and, when `with_gamma` is set, the greedy
    /// information-gain curve over it (to horizon `N`).
    pub fn new(config: &ExperimentConfig, with_gamma: bool) -> Result<Self> {
        let domain = config.domain()?;
        let params = WidthParams {
            b: config.rkhs_norm,
            r: config.noise.scale,
            lambda: config.lambda,
            delta: config.delta,
            dim: config.kernel.dim,
            x_bar: domain.x_bar(),
            c: config.width_constant,
            constant: config.constant_width.unwrap_or(config.rkhs_norm),
        };
        let uses_kernel_online =
            config.schedules.contains(&WidthKind::KernelOnline) || config.policy_width == WidthKind::KernelOnline;
        let gamma = if with_gamma || uses_kernel_online {
            Some(Arc::new(greedy_max_info_gain(
                &config.kernel,
                config.lambda,
                domain.points(),
                config.horizon,
            )?))
        } else {
            None
        };
        Ok(Setup {
            config: config.clone(),
            domain,
            params,
            gamma,
        })
    }

    pub fn gamma(&self) -> Option<&InfoGainCurve> {
        self.gamma.as_deref()
    }

    pub fn schedule(&self, kind: WidthKind) -> Result<WidthSchedule> {
        match kind {
            WidthKind::KernelOnline => {
                let curve = self.gamma.as_ref().ok_or(Error::Empty("information-gain curve"))?;
                WidthSchedule::kernel_online(self.params, Arc::new(curve.values(self.config.info_gain_mode)))
            }
            other => WidthSchedule::new(other, self.params),
        }
    }
}

enum Driver {
    Ucb(WidthSchedule),
    Thompson(Box<ChaCha8Rng>),
    Probe { truth: Vec<f64>, floor: f64 },
    Fixed(Vec<usize>),
}

impl Driver {
    fn new(setup: &Setup, truth: &[f64], mut rng: ChaCha8Rng) -> Result<Self> {
        let cfg = &setup.config;
        Ok(match cfg.policy {
            PolicyKind::GpUcb => Driver::Ucb(setup.schedule(cfg.policy_width)?),
            PolicyKind::GpTs => Driver::Thompson(Box::new(rng)),
            PolicyKind::CoverageProbe => Driver::Probe {
                truth: truth.to_vec(),
                floor: cfg.sigma_floor,
            },
            kind => Driver::Fixed(policy::offline_design(kind, setup.domain.len(), cfg.horizon, &mut rng)?),
        })
    }

    fn next(&mut self, step: usize, gp: &GridPosterior) -> Result<usize> {
        match self {
            Driver::Ucb(schedule) => policy::ucb_next(gp, schedule.rho(gp.len())),
            Driver::Thompson(rng) => policy::ts_next(gp, rng.as_mut()),
            Driver::Probe { truth, floor } => policy::probe_next(gp, truth, *floor),
            Driver::Fixed(design) => Ok(design[step]),
        }
    }
}

/// What one simulated step exposes to the caller.
struct StepView<'a> {
    index: usize,
    y: f64,
    mean_before: f64,
    sd_before: f64,
    gp: &'a GridPosterior,
}

/// Draw replicate `r`'s test function and its values on the grid.
fn draw_function(setup: &Setup, replicate: usize) -> Result<(RkhsFunction, Vec<f64>)> {
    let cfg = &setup.config;
    let mut rng = stream(cfg.seed, replicate as u64, Substream::Function);
    let f = sample_rkhs_function(&cfg.kernel, cfg.rkhs_norm, cfg.function_form, cfg.centers, &setup.domain, &mut rng)?;
    let truth = f.values_on(setup.domain.points())?;
    Ok((f, truth))
}

/// Run replicate `r`'s design against `truth` for `N` steps, calling
/// `on_step` after each posterior update.
fn simulate(
    setup: &Setup,
    replicate: usize,
    truth: &[f64],
    mut on_step: impl FnMut(StepView<'_>) -> Result<()>,
) -> Result<()> {
    let cfg = &setup.config;
    let r = replicate as u64;
    let mut nrng = stream(cfg.seed, r, Substream::Noise);
    let prng = stream(cfg.seed, r, Substream::Policy);
    let mut gp = GridPosterior::new(cfg.kernel, cfg.lambda, setup.domain.points())?;
    let mut driver = Driver::new(setup, truth, prng)?;

    for step in 0..cfg.horizon {
        let index = driver.next(step, &gp)?;
        let mean_before = gp.means()[index];
        let sd_before = gp.variance_at(index).sqrt();
        let y = truth[index] + cfg.noise.sample(&mut nrng);
        gp.update_at(index, y)?;
        on_step(StepView {
            index,
            y,
            mean_before,
            sd_before,
            gp: &gp,
        })?;
    }
    Ok(())
}

/// Mean, standard error and quantiles of a sample.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Summary {
    pub count: usize,
    pub mean: f64,
    pub stderr: f64,
    pub q50: f64,
    pub q90: f64,
    pub q99: f64,
}

/// Linear-interpolation quantile of sorted data.
pub fn quantile(sorted: &[f64], q: f64) -> f64 {
    debug_assert!(!sorted.is_empty());
    let pos = q.clamp(0.0, 1.0) * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    sorted[lo] + (pos - lo as f64) * (sorted[hi] - sorted[lo])
}

/// Aggregate replicate values. Stderr uses the unbiased sample variance.
pub fn summarize(values: &[f64]) -> Result<Summary> {
    if values.is_empty() {
        return Err(Error::Empty("summarize needs at least one replicate"));
    }
    let n = values.len();
    let mean = values.iter().sum::<f64>() / n as f64;
    let stderr = if n > 1 {
        let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
        (var / n as f64).sqrt()
    } else {
        0.0
    };
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    Ok(Summary {
        count: n,
        mean,
        stderr,
        q50: quantile(&sorted, 0.5),
        q90: quantile(&sorted, 0.9),
        q99: quantile(&sorted, 0.99),
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct RegretStep {
    pub index: usize,
    pub y: f64,
    /// Posterior mean and standard deviation at the chosen point before the
    /// observation.
    pub mean: f64,
    pub std_dev: f64,
    pub inst_regret: f64,
    pub cum_regret: f64,
}

#[derive(Debug, Clone)]
pub struct RegretTrace {
    pub replicate: usize,
    pub best_index: usize,
    pub best_value: f64,
    pub steps: Vec<RegretStep>,
    /// `R(N) / (ρ_N √(N γ̂_N))` with the kernel-online width.
    pub bound_ratio: f64,
    pub function: RkhsFunction,
}

impl RegretTrace {
    pub fn cumulative(&self) -> Vec<f64> {
        self.steps.iter().map(|s| s.cum_regret).collect()
    }

    pub fn total(&self) -> f64 {
        self.steps.last().map_or(0.0, |s| s.cum_regret)
    }
}

#[derive(Debug, Clone)]
pub struct BanditRun {
    pub setup: Setup,
    pub traces: Vec<RegretTrace>,
    /// Cumulative regret across replicates at steps `1..=N`.
    pub per_step: Vec<Summary>,
    pub bound_ratio: Summary,
}

impl BanditRun {
    /// Mean `R(t)/t` across replicates.
    pub fn mean_average_regret(&self, t: usize) -> f64 {
        self.per_step[t - 1].mean / t as f64
    }
}

/// Cumulative-regret experiment.
pub fn run_bandit(config: &ExperimentConfig) -> Result<BanditRun> {
    let setup = Setup::new(config, true)?;
    let t1 = setup.schedule(WidthKind::KernelOnline)?;
    let n = config.horizon;
    let gamma_n = setup.gamma().expect("requested").normalized()[n];
    let denom = t1.rho(n) * (n as f64 * gamma_n).sqrt();

    let traces: Vec<RegretTrace> = (0..config.replicates)
        .into_par_iter()
        .map(|r| run_regret_replicate(&setup, r, denom))
        .collect::<Result<_>>()?;
    let per_step = (0..n)
        .map(|t| summarize(&traces.iter().map(|tr| tr.steps[t].cum_regret).collect::<Vec<_>>()))
        .collect::<Result<Vec<_>>>()?;
    let bound_ratio = summarize(&traces.iter().map(|t| t.bound_ratio).collect::<Vec<_>>())?;
    Ok(BanditRun {
        setup,
        traces,
        per_step,
        bound_ratio,
    })
}

fn run_regret_replicate(setup: &Setup, replicate: usize, bound_denominator: f64) -> Result<RegretTrace> {
    let (function, truth) = draw_function(setup, replicate)?;
    let best_index = policy::argmax(truth.iter().copied()).ok_or(Error::Empty("grid"))?;
    let best_value = truth[best_index];
    let mut steps = Vec::with_capacity(setup.config.horizon);
    let mut cum = 0.0;
    simulate(setup, replicate, &truth, |v| {
        let inst_regret = best_value - truth[v.index];
        cum += inst_regret;
        steps.push(RegretStep {
            index: v.index,
            y: v.y,
            mean: v.mean_before,
            std_dev: v.sd_before,
            inst_regret,
            cum_regret: cum,
        });
        Ok(())
    })?;
    Ok(RegretTrace {
        replicate,
        best_index,
        best_value,
        bound_ratio: cum / bound_denominator,
        steps,
        function,
    })
}

/// Coverage of confidence widths over replicates.
#[derive(Debug, Clone)]
pub struct CoverageReport {
    pub setup: Setup,
    pub schedules: Vec<WidthKind>,
    /// `rho[s][n-1] = ρ_n` of schedule `s` for `n = 1..=N`.
    pub rho: Vec<Vec<f64>>,
    /// `z[r][n-1] = Z_{n,r}`.
    pub z: Vec<Vec<f64>>,
    /// `covered[s][r]`: `Z_{n,r} ≤ ρ_n` for every `n ≤ N`.
    pub covered: Vec<Vec<bool>>,
    /// Fraction of replicates covered uniformly in `n`, per schedule.
    pub coverage: Vec<f64>,
    /// Fraction with `Z_{N,r} ≤ ρ_N`, per schedule.
    pub final_coverage: Vec<f64>,
    /// Per-step summaries of `Z_{n,·}`.
    pub per_step: Vec<Summary>,
    /// `median(Z_n) / ρ_n` for the kernel-online schedule.
    pub ratio: Option<Vec<f64>>,
    pub functions: Vec<RkhsFunction>,
}

impl CoverageReport {
    fn position(&self, kind: WidthKind) -> Option<usize> {
        self.schedules.iter().position(|k| *k == kind)
    }

    pub fn coverage_of(&self, kind: WidthKind) -> Option<f64> {
        self.position(kind).map(|i| self.coverage[i])
    }

    pub fn final_coverage_of(&self, kind: WidthKind) -> Option<f64> {
        self.position(kind).map(|i| self.final_coverage[i])
    }

    pub fn rho_of(&self, kind: WidthKind) -> Option<&[f64]> {
        self.position(kind).map(|i| self.rho[i].as_slice())
    }
}

/// Coverage experiment: after every update, the normalised error
/// `Z_n = max_x |f(x) − μ_n(x)| / max(σ_n(x), σ_floor)` over the grid (or at
/// the configured test point) is compared with every configured schedule.
pub fn run_coverage(config: &ExperimentConfig) -> Result<CoverageReport> {
    let setup = Setup::new(config, false)?;
    let n = config.horizon;
    let schedules = config.schedules.clone();
    let built: Vec<WidthSchedule> = schedules.iter().map(|&k| setup.schedule(k)).collect::<Result<_>>()?;
    let rho: Vec<Vec<f64>> = built.iter().map(|s| (1..=n).map(|t| s.rho(t)).collect()).collect();

    let runs: Vec<(Vec<f64>, RkhsFunction)> = (0..config.replicates)
        .into_par_iter()
        .map(|r| coverage_replicate(&setup, r))
        .collect::<Result<_>>()?;
    let (z, functions): (Vec<Vec<f64>>, Vec<RkhsFunction>) = runs.into_iter().unzip();

    let m = z.len() as f64;
    let covered: Vec<Vec<bool>> = rho
        .iter()
        .map(|rs| z.iter().map(|zr| zr.iter().zip(rs).all(|(zv, rv)| zv <= rv)).collect())
        .collect();
    let coverage = covered.iter().map(|c| c.iter().filter(|&&b| b).count() as f64 / m).collect();
    let final_coverage = rho
        .iter()
        .map(|rs| z.iter().filter(|zr| zr[n - 1] <= rs[n - 1]).count() as f64 / m)
        .collect();
    let per_step: Vec<Summary> = (0..n)
        .map(|t| summarize(&z.iter().map(|zr| zr[t]).collect::<Vec<_>>()))
        .collect::<Result<_>>()?;
    let ratio = schedules
        .iter()
        .position(|k| *k == WidthKind::KernelOnline)
        .map(|i| per_step.iter().zip(&rho[i]).map(|(s, r)| s.q50 / r).collect());

    Ok(CoverageReport {
        setup,
        schedules,
        rho,
        z,
        covered,
        coverage,
        final_coverage,
        per_step,
        ratio,
        functions,
    })
}

fn coverage_replicate(setup: &Setup, replicate: usize) -> Result<(Vec<f64>, RkhsFunction)> {
    let cfg = &setup.config;
    let floor = cfg.sigma_floor;
    let mut z = Vec::with_capacity(cfg.horizon);
    let (f, truth) = draw_function(setup, replicate)?;
    let point_truth = cfg.test_point.as_ref().map(|p| f.evaluate(p)).transpose()?;

    simulate(setup, replicate, &truth, |v| {
        let zn = match (&cfg.test_point, point_truth) {
            (Some(p), Some(fp)) => {
                let post = v.gp.posterior();
                (fp - post.mean(p)?).abs() / post.std_dev(p)?.max(floor)
            }
            _ => policy::normalized_errors(v.gp, &truth, floor).into_iter().fold(0.0, f64::max),
        };
        z.push(zn);
        Ok(())
    })?;
    Ok((z, f))
}

/// Weight-space ellipsoid coverage for the linear kernel.
#[derive(Debug, Clone)]
pub struct EllipsoidReport {
    pub setup: Setup,
    /// `‖w − ŵ_N‖_{V_N}` per replicate.
    pub statistic: Vec<f64>,
    /// `λ ρ_N(δ)` with the linear width.
    pub radius: f64,
    pub covered: Vec<bool>,
    pub coverage: f64,
}

pub fn run_ellipsoid_check(config: &ExperimentConfig) -> Result<EllipsoidReport> {
    if config.kernel.family != KernelFamily::Linear {
        return Err(Error::NonLinearKernel);
    }
    let setup = Setup::new(config, false)?;
    let p = setup.params;
    let radius = ellipsoid_radius(p.b, p.r, p.lambda, p.delta, p.dim, config.horizon as f64, p.x_bar)?;
    let statistic: Vec<f64> = (0..config.replicates)
        .into_par_iter()
        .map(|r| ellipsoid_replicate(&setup, r))
        .collect::<Result<_>>()?;
    let covered: Vec<bool> = statistic.iter().map(|s| *s <= radius).collect();
    let coverage = covered.iter().filter(|&&c| c).count() as f64 / covered.len() as f64;
    Ok(EllipsoidReport {
        setup,
        statistic,
        radius,
        covered,
        coverage,
    })
}

fn ellipsoid_replicate(setup: &Setup, replicate: usize) -> Result<f64> {
    let cfg = &setup.config;
    let mut ridge = RidgeState::new(cfg.kernel.dim, cfg.lambda)?;
    let points = setup.domain.points();
    let (f, truth) = draw_function(setup, replicate)?;
    simulate(setup, replicate, &truth, |v| ridge.update(&points[v.index], v.y))?;
    let w = f.linear_weights().ok_or(Error::NonLinearKernel)?;
    ridge.ellipsoid_norm(&w)
}

/// Greedy information-gain curve for the configured kernel, λ and grid.
pub fn run_info_gain(config: &ExperimentConfig) -> Result<(Domain, InfoGainCurve)> {
    let domain = config.domain()?;
    let curve = greedy_max_info_gain(&config.kernel, config.lambda, domain.points(), config.horizon)?;
    Ok((domain, curve))
}

/// Width curves `ρ_n` of every schedule for `n = 1..=N` under the config's
/// parameters. Kernel-online is included whenever a curve is available.
pub fn width_curves(setup: &Setup) -> Result<Vec<(WidthKind, Vec<f64>)>> {
    let n = setup.config.horizon;
    WidthKind::ALL
        .into_iter()
        .filter(|k| match k {
            WidthKind::KernelOnline => setup.gamma().is_some(),
            WidthKind::Constant => setup.config.constant_width.is_some(),
            _ => true,
        })
        .map(|k| {
            let s = setup.schedule(k)?;
            Ok((k, (1..=n).map(|t| s.rho(t)).collect()))
        })
        .collect()
}
