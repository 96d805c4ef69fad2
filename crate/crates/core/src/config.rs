//! Flat `key = value` experiment configuration.
//!
//! Grammar: one `key = value` pair per line; `#` starts a comment that runs
//! to the end of the line; blank lines are ignored; list values are comma
//! separated. Keys may appear at most once. [`ExperimentConfig::canonical`]
//! renders every key (defaults included) in a fixed order, and parsing that
//! text yields the same config again.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::PathBuf;

use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::info_gain::GainMode;
use crate::kernel::{Domain, KernelFamily, KernelSpec, Smoothness};
use crate::policy::PolicyKind;
use crate::rkhs::{FunctionForm, NoiseKind, NoiseModel};
use crate::widths::WidthKind;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ConfigError {
    #[error("line {line}: {message}")]
    Syntax { line: usize, message: String },

    #[error("missing required key `{0}`")]
    Missing(&'static str),

    #[error("unknown key `{key}`{}", suggestion.as_ref().map(|s| format!(" (did you mean `{s}`?)")).unwrap_or_default())]
    Unknown { key: String, suggestion: Option<String> },

    #[error("key `{0}` given more than once")]
    Duplicate(String),

    #[error("invalid value for `{key}`: {reason}")]
    Invalid { key: &'static str, reason: String },
}

impl ConfigError {
    fn invalid(key: &'static str, reason: impl Into<String>) -> Self {
        ConfigError::Invalid {
            key,
            reason: reason.into(),
        }
    }
}

type ConfigResult<T> = std::result::Result<T, ConfigError>;

/// Every accepted key, in canonical order.
pub const KEYS: &[&str] = &[
    "kernel",
    "nu",
    "lengthscale",
    "output_scale",
    "dim",
    "domain_lower",
    "domain_upper",
    "grid_resolution",
    "rkhs_norm",
    "centers",
    "function_form",
    "noise",
    "noise_scale",
    "lambda",
    "policy",
    "policy_width",
    "schedules",
    "delta",
    "width_constant",
    "constant_width",
    "sigma_floor",
    "horizon",
    "replicates",
    "seed",
    "info_gain_mode",
    "test_point",
    "output",
];

const REQUIRED: &[&str] = &["kernel", "rkhs_norm", "noise_scale", "delta", "horizon", "replicates", "seed"];

/// Common misspellings and symbol names mapped to their keys.
const ALIASES: &[(&str, &str)] = &[
    ("sigma", "noise_scale"),
    ("noise_std", "noise_scale"),
    ("r", "noise_scale"),
    ("b", "rkhs_norm"),
    ("norm", "rkhs_norm"),
    ("n", "horizon"),
    ("steps", "horizon"),
    ("m", "replicates"),
    ("reps", "replicates"),
    ("l", "lengthscale"),
    ("length_scale", "lengthscale"),
    ("s2", "output_scale"),
    ("variance", "output_scale"),
    ("c", "width_constant"),
    ("grid", "grid_resolution"),
];

/// Largest grid the harness will build.
const MAX_GRID_POINTS: usize = 1_000_000;

fn suggest(key: &str) -> Option<String> {
    let lower = key.to_ascii_lowercase();
    if let Some((_, to)) = ALIASES.iter().find(|(from, _)| *from == lower) {
        return Some((*to).to_string());
    }
    KEYS.iter()
        .map(|k| (strsim::levenshtein(&lower, k), *k))
        .filter(|(d, _)| *d <= 3)
        .min()
        .map(|(_, k)| k.to_string())
}

/// A fully validated experiment configuration with defaults applied.
#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub kernel: KernelSpec,
    pub domain_lower: Vec<f64>,
    pub domain_upper: Vec<f64>,
    pub grid_resolution: usize,
    pub rkhs_norm: f64,
    pub centers: usize,
    pub function_form: FunctionForm,
    pub noise: NoiseModel,
    pub lambda: f64,
    pub policy: PolicyKind,
    /// Width schedule driving GP-UCB.
    pub policy_width: WidthKind,
    /// Schedules whose coverage is evaluated.
    pub schedules: Vec<WidthKind>,
    pub delta: f64,
    pub width_constant: f64,
    pub constant_width: Option<f64>,
    pub sigma_floor: f64,
    pub horizon: usize,
    pub replicates: usize,
    pub seed: u64,
    pub info_gain_mode: GainMode,
    /// Measure coverage at this point instead of the grid maximum.
    pub test_point: Option<Vec<f64>>,
    pub output: Option<PathBuf>,
}

fn parse_pairs(text: &str) -> ConfigResult<BTreeMap<String, String>> {
    let mut map = BTreeMap::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (key, value) = line.split_once('=').ok_or_else(|| ConfigError::Syntax {
            line: i + 1,
            message: format!("expected `key = value`, got `{line}`"),
        })?;
        let key = key.trim();
        let value = value.trim();
        if key.is_empty() {
            return Err(ConfigError::Syntax {
                line: i + 1,
                message: "empty key".into(),
            });
        }
        if !KEYS.contains(&key) {
            return Err(ConfigError::Unknown {
                key: key.to_string(),
                suggestion: suggest(key),
            });
        }
        if map.insert(key.to_string(), value.to_string()).is_some() {
            return Err(ConfigError::Duplicate(key.to_string()));
        }
    }
    Ok(map)
}

struct Fields(BTreeMap<String, String>);

impl Fields {
    fn raw(&self, key: &'static str) -> Option<&str> {
        self.0.get(key).map(String::as_str)
    }

    fn required(&self, key: &'static str) -> ConfigResult<&str> {
        self.raw(key).ok_or(ConfigError::Missing(key))
    }

    fn parse_with<T>(&self, key: &'static str, f: impl Fn(&str) -> Result<T, String>) -> ConfigResult<Option<T>> {
        self.raw(key).map(|v| f(v).map_err(|e| ConfigError::invalid(key, e))).transpose()
    }

    fn float(&self, key: &'static str) -> ConfigResult<Option<f64>> {
        self.parse_with(key, parse_float)
    }

    fn int(&self, key: &'static str) -> ConfigResult<Option<u64>> {
        self.parse_with(key, |v| v.parse::<u64>().map_err(|e| format!("`{v}`: {e}")))
    }

    fn floats(&self, key: &'static str) -> ConfigResult<Option<Vec<f64>>> {
        self.parse_with(key, |v| v.split(',').map(|s| parse_float(s.trim())).collect())
    }
}

fn parse_float(v: &str) -> Result<f64, String> {
    let x: f64 = v.parse().map_err(|_| format!("`{v}` is not a number"))?;
    if x.is_finite() {
        Ok(x)
    } else {
        Err(format!("`{v}` is not finite"))
    }
}

fn positive(key: &'static str, v: f64) -> ConfigResult<f64> {
    if v > 0.0 {
        Ok(v)
    } else {
        Err(ConfigError::invalid(key, format!("must be positive, got {v}")))
    }
}

fn nonnegative(key: &'static str, v: f64) -> ConfigResult<f64> {
    if v >= 0.0 {
        Ok(v)
    } else {
        Err(ConfigError::invalid(key, format!("must be nonnegative, got {v}")))
    }
}

fn at_least_one(key: &'static str, v: u64) -> ConfigResult<usize> {
    if v >= 1 {
        usize::try_from(v).map_err(|_| ConfigError::invalid(key, "too large"))
    } else {
        Err(ConfigError::invalid(key, "must be at least 1"))
    }
}

fn bounds(key: &'static str, given: Option<Vec<f64>>, default: f64, dim: usize) -> ConfigResult<Vec<f64>> {
    match given {
        None => Ok(vec![default; dim]),
        Some(v) if v.len() == 1 => Ok(vec![v[0]; dim]),
        Some(v) if v.len() == dim => Ok(v),
        Some(v) => Err(ConfigError::invalid(key, format!("expected 1 or {dim} values, got {}", v.len()))),
    }
}

impl ExperimentConfig {
    /// Parse and validate config text.
    pub fn parse(text: &str) -> ConfigResult<Self> {
        let f = Fields(parse_pairs(text)?);
        for key in REQUIRED {
            f.required(key)?;
        }

        let family: KernelFamily = f
            .required("kernel")?
            .parse()
            .map_err(|e: crate::kernel::ParseFamilyError| ConfigError::invalid("kernel", e.to_string()))?;
        let family = match family {
            KernelFamily::Matern(_) => {
                let nu = f.float("nu")?.unwrap_or(1.5);
                let s = Smoothness::from_nu(nu)
                    .ok_or_else(|| ConfigError::invalid("nu", format!("must be 0.5, 1.5 or 2.5, got {nu}")))?;
                KernelFamily::Matern(s)
            }
            other => {
                if f.raw("nu").is_some() {
                    return Err(ConfigError::invalid("nu", "only valid for the matern kernel"));
                }
                other
            }
        };
        let lengthscale = positive("lengthscale", f.float("lengthscale")?.unwrap_or(0.2))?;
        let output_scale = positive("output_scale", f.float("output_scale")?.unwrap_or(1.0))?;
        let dim = at_least_one("dim", f.int("dim")?.unwrap_or(1))?;
        let kernel = KernelSpec {
            family,
            lengthscale,
            output_scale,
            dim,
        };

        let domain_lower = bounds("domain_lower", f.floats("domain_lower")?, 0.0, dim)?;
        let domain_upper = bounds("domain_upper", f.floats("domain_upper")?, 1.0, dim)?;
        for (lo, hi) in domain_lower.iter().zip(&domain_upper) {
            if lo > hi {
                return Err(ConfigError::invalid("domain_upper", format!("upper bound {hi} below lower bound {lo}")));
            }
        }
        let grid_resolution = at_least_one("grid_resolution", f.int("grid_resolution")?.unwrap_or(100))?;
        let grid_points = grid_resolution
            .checked_pow(dim as u32)
            .filter(|&g| g <= MAX_GRID_POINTS)
            .ok_or_else(|| ConfigError::invalid("grid_resolution", format!("grid exceeds {MAX_GRID_POINTS} points")))?;

        let rkhs_norm = nonnegative("rkhs_norm", f.float("rkhs_norm")?.expect("required"))?;
        let centers = at_least_one("centers", f.int("centers")?.unwrap_or(20))?;
        if centers > grid_points {
            return Err(ConfigError::invalid(
                "centers",
                format!("{centers} centers exceed the {grid_points} grid points"),
            ));
        }
        let function_form: FunctionForm = f.parse_with("function_form", str::parse)?.unwrap_or(FunctionForm::Span);

        let noise_kind: NoiseKind = f.parse_with("noise", str::parse)?.unwrap_or(NoiseKind::Gaussian);
        let noise_scale = nonnegative("noise_scale", f.float("noise_scale")?.expect("required"))?;
        let noise = NoiseModel {
            kind: noise_kind,
            scale: noise_scale,
        };
        let lambda = positive("lambda", f.float("lambda")?.unwrap_or(noise_scale.max(1e-3)))?;

        let policy: PolicyKind = f.parse_with("policy", str::parse)?.unwrap_or(PolicyKind::GpUcb);
        let default_width = if family == KernelFamily::Linear {
            WidthKind::LinearOnline
        } else {
            WidthKind::KernelOnline
        };
        let policy_width: WidthKind = f.parse_with("policy_width", str::parse)?.unwrap_or(default_width);
        let schedules: Vec<WidthKind> = f
            .parse_with("schedules", |v| v.split(',').map(|s| s.trim().parse()).collect())?
            .unwrap_or_else(|| vec![WidthKind::OfflineFixed, default_width, WidthKind::Conjectured]);
        if schedules.is_empty() {
            return Err(ConfigError::invalid("schedules", "need at least one schedule"));
        }
        for (i, s) in schedules.iter().enumerate() {
            if schedules[..i].contains(s) {
                return Err(ConfigError::invalid("schedules", format!("`{s}` listed twice")));
            }
        }

        let delta = f.float("delta")?.expect("required");
        if !(delta > 0.0 && delta < 1.0) {
            return Err(ConfigError::invalid("delta", format!("must lie in (0, 1), got {delta}")));
        }
        let width_constant = positive("width_constant", f.float("width_constant")?.unwrap_or(1.0))?;
        let constant_width = f.float("constant_width")?;
        let uses_constant = schedules.contains(&WidthKind::Constant) || policy_width == WidthKind::Constant;
        match constant_width {
            None if uses_constant => return Err(ConfigError::Missing("constant_width")),
            Some(_) if !uses_constant => {
                return Err(ConfigError::invalid("constant_width", "only valid with the constant schedule"))
            }
            Some(v) if v < rkhs_norm => {
                return Err(ConfigError::invalid(
                    "constant_width",
                    format!("must be at least rkhs_norm = {rkhs_norm}, got {v}"),
                ))
            }
            _ => {}
        }
        let sigma_floor = positive("sigma_floor", f.float("sigma_floor")?.unwrap_or(1e-6 * output_scale.sqrt()))?;

        let horizon = at_least_one("horizon", f.int("horizon")?.expect("required"))?;
        let replicates = at_least_one("replicates", f.int("replicates")?.expect("required"))?;
        let seed = f.int("seed")?.expect("required");
        let info_gain_mode: GainMode = f.parse_with("info_gain_mode", str::parse)?.unwrap_or_default();
        let test_point = f.floats("test_point")?;
        if let Some(p) = &test_point {
            if p.len() != dim {
                return Err(ConfigError::invalid("test_point", format!("expected {dim} coordinates, got {}", p.len())));
            }
        }
        let output = f.raw("output").filter(|s| !s.is_empty()).map(PathBuf::from);

        Ok(ExperimentConfig {
            kernel,
            domain_lower,
            domain_upper,
            grid_resolution,
            rkhs_norm,
            centers,
            function_form,
            noise,
            lambda,
            policy,
            policy_width,
            schedules,
            delta,
            width_constant,
            constant_width,
            sigma_floor,
            horizon,
            replicates,
            seed,
            info_gain_mode,
            test_point,
            output,
        })
    }

    /// Canonical text: every key in fixed order with defaults resolved.
    pub fn canonical(&self) -> String {
        let list = |v: &[f64]| v.iter().map(|x| x.to_string()).collect::<Vec<_>>().join(", ");
        let mut out = String::new();
        let mut put = |k: &str, v: String| {
            let _ = writeln!(out, "{k} = {v}");
        };
        put("kernel", self.kernel.family.name().to_string());
        if let KernelFamily::Matern(nu) = self.kernel.family {
            put("nu", nu.nu().to_string());
        }
        put("lengthscale", self.kernel.lengthscale.to_string());
        put("output_scale", self.kernel.output_scale.to_string());
        put("dim", self.kernel.dim.to_string());
        put("domain_lower", list(&self.domain_lower));
        put("domain_upper", list(&self.domain_upper));
        put("grid_resolution", self.grid_resolution.to_string());
        put("rkhs_norm", self.rkhs_norm.to_string());
        put("centers", self.centers.to_string());
        put("function_form", self.function_form.name().to_string());
        put("noise", self.noise.kind.name().to_string());
        put("noise_scale", self.noise.scale.to_string());
        put("lambda", self.lambda.to_string());
        put("policy", self.policy.name().to_string());
        put("policy_width", self.policy_width.name().to_string());
        put(
            "schedules",
            self.schedules.iter().map(|s| s.name()).collect::<Vec<_>>().join(", "),
        );
        put("delta", self.delta.to_string());
        put("width_constant", self.width_constant.to_string());
        if let Some(c) = self.constant_width {
            put("constant_width", c.to_string());
        }
        put("sigma_floor", self.sigma_floor.to_string());
        put("horizon", self.horizon.to_string());
        put("replicates", self.replicates.to_string());
        put("seed", self.seed.to_string());
        put("info_gain_mode", self.info_gain_mode.name().to_string());
        if let Some(p) = &self.test_point {
            put("test_point", list(p));
        }
        if let Some(o) = &self.output {
            put("output", o.display().to_string());
        }
        out
    }

    /// SHA-256 of the canonical text, hex encoded.
    pub fn hash(&self) -> String {
        hex::encode(Sha256::digest(self.canonical().as_bytes()))
    }

    pub fn domain(&self) -> crate::error::Result<Domain> {
        Domain::new(self.domain_lower.clone(), self.domain_upper.clone(), self.grid_resolution)
    }
}
