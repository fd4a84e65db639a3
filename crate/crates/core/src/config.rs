//! Run configuration: a flat dotted-key text format or an equivalent JSON
//! document, merged with command-line overrides, validated with every
//! offending field reported at once, then resolved against the dataset
//! into fully concrete parameters that are echoed into the outputs.

use std::collections::BTreeSet;
use std::path::PathBuf;

use nalgebra::{DMatrix, DVector};

use crate::data::Dataset;
use crate::energy::{ModelKind, MogNiwPrior};
use crate::error::{Error, Result};
use crate::sampler::Mode;
use crate::schedule::ScheduleParams;

/// A field that may be the literal `auto` or a concrete value.
#[derive(Debug, Clone, PartialEq)]
pub enum AutoOr<T> {
    Auto,
    Value(T),
}

impl<T> AutoOr<T> {
    fn resolve_with(self, auto: impl FnOnce() -> T) -> T {
        match self {
            AutoOr::Auto => auto(),
            AutoOr::Value(v) => v,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ConfigMode {
    Sa,
    Qast,
    Compare,
    OracleCheck,
}

impl ConfigMode {
    pub fn as_str(&self) -> &'static str {
        match self {
            ConfigMode::Sa => "sa",
            ConfigMode::Qast => "qast",
            ConfigMode::Compare => "compare",
            ConfigMode::OracleCheck => "oracle-check",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ModelType {
    MogNiw,
    SqLoss,
}

impl ModelType {
    pub fn as_str(&self) -> &'static str {
        match self {
            ModelType::MogNiw => "mog_niw",
            ModelType::SqLoss => "sq_loss",
        }
    }
}

/// Accumulated raw configuration; every field optional until validation.
#[derive(Debug, Clone, Default)]
pub struct RawConfig {
    pub data_path: Option<String>,
    pub data_format: Option<String>,
    pub model_type: Option<String>,
    pub alpha: Option<f64>,
    pub kappa0: Option<f64>,
    pub nu0: Option<AutoOr<f64>>,
    pub mu0: Option<AutoOr<Vec<f64>>>,
    pub lambda0: Option<AutoOr<Vec<f64>>>,
    pub k: Option<usize>,
    pub mode: Option<String>,
    pub m: Option<usize>,
    pub seed: Option<u64>,
    pub seeds: Option<Vec<u64>>,
    pub beta0: Option<AutoOr<f64>>,
    pub r_beta: Option<f64>,
    pub gamma0: Option<AutoOr<f64>>,
    pub r_gamma: Option<AutoOr<f64>>,
    pub beta_hold_target: Option<AutoOr<f64>>,
    pub max_iters: Option<usize>,
    pub convergence_tol: Option<f64>,
    pub convergence_window: Option<usize>,
    pub output_dir: Option<String>,
}

fn parse_scalar<T: std::str::FromStr>(key: &str, value: &str, errors: &mut Vec<String>) -> Option<T>
where
    T::Err: std::fmt::Display,
{
    match value.trim().parse::<T>() {
        Ok(v) => Some(v),
        Err(e) => {
            errors.push(format!("{key}: cannot parse {value:?}: {e}"));
            None
        }
    }
}

fn parse_auto_f64(key: &str, value: &str, errors: &mut Vec<String>) -> Option<AutoOr<f64>> {
    if value.trim() == "auto" {
        Some(AutoOr::Auto)
    } else {
        parse_scalar::<f64>(key, value, errors).map(AutoOr::Value)
    }
}

fn parse_vec_f64(key: &str, value: &str, errors: &mut Vec<String>) -> Option<Vec<f64>> {
    let items: std::result::Result<Vec<f64>, _> =
        value.split(',').map(|s| s.trim().parse::<f64>()).collect();
    match items {
        Ok(v) if !v.is_empty() => Some(v),
        _ => {
            errors.push(format!(
                "{key}: expected a comma-separated list of numbers, got {value:?}"
            ));
            None
        }
    }
}

fn parse_auto_vec_f64(
    key: &str,
    value: &str,
    errors: &mut Vec<String>,
) -> Option<AutoOr<Vec<f64>>> {
    if value.trim() == "auto" {
        Some(AutoOr::Auto)
    } else {
        parse_vec_f64(key, value, errors).map(AutoOr::Value)
    }
}

fn parse_vec_u64(key: &str, value: &str, errors: &mut Vec<String>) -> Option<Vec<u64>> {
    let items: std::result::Result<Vec<u64>, _> =
        value.split(',').map(|s| s.trim().parse::<u64>()).collect();
    match items {
        Ok(v) if !v.is_empty() => Some(v),
        _ => {
            errors.push(format!(
                "{key}: expected a comma-separated list of seeds, got {value:?}"
            ));
            None
        }
    }
}

impl RawConfig {
    /// Apply one dotted key. Unknown keys are reported, not ignored.
    pub fn apply_key(&mut self, key: &str, value: &str, errors: &mut Vec<String>) {
        match key {
            "data.path" => self.data_path = Some(value.to_string()),
            "data.format" => self.data_format = Some(value.to_string()),
            "model.type" => self.model_type = Some(value.to_string()),
            "model.alpha" => self.alpha = parse_scalar(key, value, errors),
            "model.kappa0" => self.kappa0 = parse_scalar(key, value, errors),
            "model.nu0" => self.nu0 = parse_auto_f64(key, value, errors),
            "model.mu0" => self.mu0 = parse_auto_vec_f64(key, value, errors),
            "model.lambda0" => self.lambda0 = parse_auto_vec_f64(key, value, errors),
            "k" => self.k = parse_scalar(key, value, errors),
            "mode" => self.mode = Some(value.to_string()),
            "m" => self.m = parse_scalar(key, value, errors),
            "seed" => self.seed = parse_scalar(key, value, errors),
            "seeds" => self.seeds = parse_vec_u64(key, value, errors),
            "schedule.beta0" => self.beta0 = parse_auto_f64(key, value, errors),
            "schedule.r_beta" => self.r_beta = parse_scalar(key, value, errors),
            "schedule.gamma0" => self.gamma0 = parse_auto_f64(key, value, errors),
            "schedule.r_gamma" => self.r_gamma = parse_auto_f64(key, value, errors),
            "schedule.beta_hold_target" => {
                self.beta_hold_target = parse_auto_f64(key, value, errors)
            }
            "max_iters" => self.max_iters = parse_scalar(key, value, errors),
            "convergence.tol" => self.convergence_tol = parse_scalar(key, value, errors),
            "convergence.window" => self.convergence_window = parse_scalar(key, value, errors),
            "output.dir" => self.output_dir = Some(value.to_string()),
            _ => errors.push(format!("unknown configuration key {key:?}")),
        }
    }

    /// Parse the flat `key = value` format (`#` comments, blank lines).
    pub fn apply_flat_text(&mut self, text: &str, errors: &mut Vec<String>) {
        for (lineno, raw_line) in text.lines().enumerate() {
            let line = raw_line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            match line.split_once('=') {
                Some((key, value)) => {
                    self.apply_key(key.trim(), value.trim(), errors);
                }
                None => errors.push(format!(
                    "line {}: expected `key = value`, got {line:?}",
                    lineno + 1
                )),
            }
        }
    }

    /// Parse the JSON form by flattening nested objects into dotted keys.
    pub fn apply_json(&mut self, text: &str, errors: &mut Vec<String>) {
        let value: serde_json::Value = match serde_json::from_str(text) {
            Ok(v) => v,
            Err(e) => {
                errors.push(format!("invalid JSON: {e}"));
                return;
            }
        };
        let mut pairs = Vec::new();
        flatten_json(&value, String::new(), &mut pairs, errors);
        for (key, val) in pairs {
            self.apply_key(&key, &val, errors);
        }
    }

    pub fn apply_config_file(&mut self, path: &std::path::Path, errors: &mut Vec<String>) {
        let text = match std::fs::read_to_string(path) {
            Ok(t) => t,
            Err(e) => {
                errors.push(format!("cannot read config {}: {e}", path.display()));
                return;
            }
        };
        let trimmed = text.trim_start();
        if trimmed.starts_with('{') {
            self.apply_json(&text, errors);
        } else {
            self.apply_flat_text(&text, errors);
        }
    }

    /// Validate and fill defaults. `forced_mode` comes from the subcommand.
    pub fn into_run_config(self, forced_mode: Option<ConfigMode>) -> Result<RunConfig> {
        let mut errors = Vec::new();

        let mode = match (forced_mode, self.mode.as_deref()) {
            (Some(m), None) => m,
            (None, Some(s)) => match s {
                "sa" => ConfigMode::Sa,
                "qast" => ConfigMode::Qast,
                "compare" => ConfigMode::Compare,
                "oracle-check" => ConfigMode::OracleCheck,
                other => {
                    errors.push(format!(
                        "mode: expected sa | qast | compare | oracle-check, got {other:?}"
                    ));
                    ConfigMode::Qast
                }
            },
            (Some(m), Some(s)) => {
                if s != m.as_str() {
                    errors.push(format!(
                        "mode: subcommand implies {:?} but config says {s:?}",
                        m.as_str()
                    ));
                }
                m
            }
            (None, None) => {
                errors.push("mode: required (sa | qast | compare | oracle-check)".into());
                ConfigMode::Qast
            }
        };

        let model_type = match self.model_type.as_deref() {
            None | Some("mog_niw") => ModelType::MogNiw,
            Some("sq_loss") => ModelType::SqLoss,
            Some(other) => {
                errors.push(format!(
                    "model.type: expected mog_niw | sq_loss, got {other:?}"
                ));
                ModelType::MogNiw
            }
        };

        if let Some(fmt) = self.data_format.as_deref() {
            if fmt != "csv" {
                errors.push(format!(
                    "data.format: only \"csv\" is supported, got {fmt:?}"
                ));
            }
        }

        let needs_data = !matches!(mode, ConfigMode::OracleCheck);
        if needs_data {
            if self.data_path.is_none() {
                errors.push("data.path: required".into());
            }
            match self.k {
                None => errors.push("k: required".into()),
                Some(0) => errors.push("k: must be >= 1".into()),
                _ => {}
            }
        }

        let m = self.m.unwrap_or(8);
        if m == 0 {
            errors.push("m: must be >= 1".into());
        }
        let r_beta = self.r_beta.unwrap_or(1.02);
        if !(r_beta > 1.0) {
            errors.push(format!("schedule.r_beta: must be > 1, got {r_beta}"));
        }
        if let Some(AutoOr::Value(v)) = &self.beta0 {
            if !(*v > 0.0) {
                errors.push(format!("schedule.beta0: must be positive, got {v}"));
            }
        }
        if let Some(AutoOr::Value(v)) = &self.gamma0 {
            if !(*v > 0.0) {
                errors.push(format!("schedule.gamma0: must be positive, got {v}"));
            }
        }
        if let Some(AutoOr::Value(v)) = &self.r_gamma {
            if !(*v > 1.0) {
                errors.push(format!("schedule.r_gamma: must be > 1, got {v}"));
            }
        }
        let max_iters = self.max_iters.unwrap_or(500);
        if max_iters == 0 {
            errors.push("max_iters: must be >= 1".into());
        }
        let convergence_tol = self.convergence_tol.unwrap_or(1e-9);
        if !(convergence_tol >= 0.0) {
            errors.push(format!(
                "convergence.tol: must be nonnegative, got {convergence_tol}"
            ));
        }
        let convergence_window = self.convergence_window.unwrap_or(50);
        if convergence_window == 0 {
            errors.push("convergence.window: must be >= 1".into());
        }
        let alpha = self.alpha.unwrap_or(1.0);
        if !(alpha > 0.0) {
            errors.push(format!("model.alpha: must be positive, got {alpha}"));
        }
        let kappa0 = self.kappa0.unwrap_or(0.1);
        if !(kappa0 > 0.0) {
            errors.push(format!("model.kappa0: must be positive, got {kappa0}"));
        }

        let seeds = self.seeds.clone().unwrap_or_default();
        if mode == ConfigMode::Compare {
            if seeds.len() < 2 {
                errors.push(format!(
                    "seeds: compare mode needs at least 2 seeds, got {}",
                    seeds.len()
                ));
            }
            let unique: BTreeSet<u64> = seeds.iter().copied().collect();
            if unique.len() != seeds.len() {
                errors.push("seeds: duplicate seeds in list".into());
            }
        }

        if !errors.is_empty() {
            return Err(Error::Config(errors));
        }

        Ok(RunConfig {
            data_path: self.data_path.map(PathBuf::from),
            model_type,
            alpha,
            kappa0,
            nu0: self.nu0.unwrap_or(AutoOr::Auto),
            mu0: self.mu0.unwrap_or(AutoOr::Auto),
            lambda0: self.lambda0.unwrap_or(AutoOr::Auto),
            k: self.k.unwrap_or(1),
            mode,
            m,
            seed: self.seed,
            seeds,
            beta0: self.beta0.unwrap_or(AutoOr::Auto),
            r_beta,
            gamma0: self.gamma0.unwrap_or(AutoOr::Auto),
            r_gamma: self.r_gamma.unwrap_or(AutoOr::Auto),
            beta_hold_target: self.beta_hold_target.unwrap_or(AutoOr::Auto),
            max_iters,
            convergence_tol,
            convergence_window,
            output_dir: PathBuf::from(self.output_dir.unwrap_or_else(|| "out".to_string())),
        })
    }
}

fn flatten_json(
    value: &serde_json::Value,
    prefix: String,
    out: &mut Vec<(String, String)>,
    errors: &mut Vec<String>,
) {
    use serde_json::Value;
    match value {
        Value::Object(map) => {
            for (key, sub) in map {
                let path = if prefix.is_empty() {
                    key.clone()
                } else {
                    format!("{prefix}.{key}")
                };
                flatten_json(sub, path, out, errors);
            }
        }
        Value::Array(items) => {
            let mut parts = Vec::with_capacity(items.len());
            for item in items {
                match item {
                    Value::Number(n) => parts.push(n.to_string()),
                    Value::String(s) => parts.push(s.clone()),
                    other => {
                        errors.push(format!("{prefix}: unsupported array element {other}"));
                        return;
                    }
                }
            }
            out.push((prefix, parts.join(",")));
        }
        Value::Number(n) => out.push((prefix, n.to_string())),
        Value::String(s) => out.push((prefix, s.clone())),
        Value::Bool(b) => out.push((prefix, b.to_string())),
        Value::Null => errors.push(format!("{prefix}: null is not a valid value")),
    }
}

/// Validated configuration; auto fields still pending data-dependent
/// resolution.
#[derive(Debug, Clone)]
pub struct RunConfig {
    pub data_path: Option<PathBuf>,
    pub model_type: ModelType,
    pub alpha: f64,
    pub kappa0: f64,
    pub nu0: AutoOr<f64>,
    pub mu0: AutoOr<Vec<f64>>,
    pub lambda0: AutoOr<Vec<f64>>,
    pub k: usize,
    pub mode: ConfigMode,
    pub m: usize,
    pub seed: Option<u64>,
    pub seeds: Vec<u64>,
    pub beta0: AutoOr<f64>,
    pub r_beta: f64,
    pub gamma0: AutoOr<f64>,
    pub r_gamma: AutoOr<f64>,
    pub beta_hold_target: AutoOr<f64>,
    pub max_iters: usize,
    pub convergence_tol: f64,
    pub convergence_window: usize,
    pub output_dir: PathBuf,
}

/// Fully concrete parameters, echoed verbatim into the outputs so a rerun
/// reproduces the artifacts byte for byte.
#[derive(Debug, Clone)]
pub struct ResolvedConfig {
    pub data_path: String,
    pub data_format: &'static str,
    pub model_type: ModelType,
    pub alpha: f64,
    pub kappa0: f64,
    pub nu0: f64,
    pub mu0: Vec<f64>,
    pub lambda0_diag: Vec<f64>,
    pub k: usize,
    pub mode: ConfigMode,
    pub m: usize,
    pub seed: Option<u64>,
    pub seeds: Vec<u64>,
    pub beta0: f64,
    pub r_beta: f64,
    pub gamma0: f64,
    pub r_gamma: f64,
    pub beta_hold_target: f64,
    pub max_iters: usize,
    pub convergence_tol: f64,
    pub convergence_window: usize,
    pub output_dir: String,
}

fn broadcast_dims(key: &str, values: Vec<f64>, d: usize) -> Result<Vec<f64>> {
    if values.len() == d {
        Ok(values)
    } else if values.len() == 1 {
        Ok(vec![values[0]; d])
    } else {
        Err(Error::Config(vec![format!(
            "{key}: expected 1 or {d} values, got {}",
            values.len()
        )]))
    }
}

impl RunConfig {
    /// Resolve every auto field against the dataset. The ring schedule is
    /// solved here; the companion single-chain schedule divides `beta0`
    /// by `m` so the two anneal in step.
    pub fn resolve(&self, data: &Dataset) -> Result<ResolvedConfig> {
        let d = data.d();
        let mf = self.m as f64;

        let nu0 = self.nu0.clone().resolve_with(|| d as f64 + 2.0);
        let mu0 = match self.mu0.clone() {
            AutoOr::Auto => data.mean(),
            AutoOr::Value(v) => broadcast_dims("model.mu0", v, d)?,
        };
        let lambda0_diag = match self.lambda0.clone() {
            AutoOr::Auto => data.variance_diagonal(),
            AutoOr::Value(v) => broadcast_dims("model.lambda0", v, d)?,
        };
        if self.model_type == ModelType::MogNiw {
            if !(nu0 > d as f64 - 1.0) {
                return Err(Error::Config(vec![format!(
                    "model.nu0: must exceed d - 1 = {}, got {nu0}",
                    d - 1
                )]));
            }
            if let Some(bad) = lambda0_diag.iter().find(|&&v| !(v > 0.0)) {
                return Err(Error::Config(vec![format!(
                    "model.lambda0: diagonal entries must be positive, got {bad}"
                )]));
            }
        }

        let beta_hold_target = self.beta_hold_target.clone().resolve_with(|| mf);
        let beta0 = self.beta0.clone().resolve_with(|| match self.mode {
            ConfigMode::Sa => 0.2,
            _ => 0.2 * mf,
        });
        let r_gamma = self.r_gamma.clone().resolve_with(|| 1.05 * self.r_beta);

        let gamma0 = match self.gamma0.clone() {
            AutoOr::Value(v) => v,
            AutoOr::Auto => match self.mode {
                // A single chain never evaluates the coupling; the echoed
                // placeholder keeps the schema stable.
                ConfigMode::Sa => 1.0,
                _ => {
                    // Solve for the ring: coupling still ~0 when beta first
                    // reaches the hold target.
                    let params = ScheduleParams {
                        beta0,
                        r_beta: self.r_beta,
                        gamma0: 1.0,
                        r_gamma,
                        m: self.m,
                        n: data.n(),
                        k: self.k,
                    };
                    params.validate()?;
                    crate::schedule::solve_gamma0(&params, beta_hold_target)?
                }
            },
        };

        Ok(ResolvedConfig {
            data_path: self
                .data_path
                .as_ref()
                .map(|p| p.display().to_string())
                .unwrap_or_default(),
            data_format: "csv",
            model_type: self.model_type,
            alpha: self.alpha,
            kappa0: self.kappa0,
            nu0,
            mu0,
            lambda0_diag,
            k: self.k,
            mode: self.mode,
            m: self.m,
            seed: self.seed,
            seeds: self.seeds.clone(),
            beta0,
            r_beta: self.r_beta,
            gamma0,
            r_gamma,
            beta_hold_target,
            max_iters: self.max_iters,
            convergence_tol: self.convergence_tol,
            convergence_window: self.convergence_window,
            output_dir: self.output_dir.display().to_string(),
        })
    }
}

impl ResolvedConfig {
    pub fn model_kind(&self) -> ModelKind {
        match self.model_type {
            ModelType::SqLoss => ModelKind::SqLoss,
            ModelType::MogNiw => ModelKind::MogNiw(MogNiwPrior {
                mu0: DVector::from_vec(self.mu0.clone()),
                kappa0: self.kappa0,
                nu0: self.nu0,
                lambda0: DMatrix::from_diagonal(&DVector::from_vec(self.lambda0_diag.clone())),
                alpha: self.alpha,
            }),
        }
    }

    /// Ring schedule for this configuration.
    pub fn ring_schedule(&self, n: usize) -> ScheduleParams {
        ScheduleParams {
            beta0: self.beta0,
            r_beta: self.r_beta,
            gamma0: self.gamma0,
            r_gamma: self.r_gamma,
            m: self.m,
            n,
            k: self.k,
        }
    }

    /// Single-chain schedule annealing in step with the ring: `beta0 / m`.
    pub fn single_chain_schedule(&self, n: usize) -> ScheduleParams {
        let beta0 = match self.mode {
            ConfigMode::Sa => self.beta0,
            _ => self.beta0 / self.m as f64,
        };
        ScheduleParams {
            beta0,
            r_beta: self.r_beta,
            gamma0: self.gamma0,
            r_gamma: self.r_gamma,
            m: 1,
            n,
            k: self.k,
        }
    }

    pub fn sampler_mode(&self) -> Mode {
        match self.mode {
            ConfigMode::Sa => Mode::Sa,
            _ => Mode::Qast,
        }
    }
}
