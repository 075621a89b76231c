//! Experiment configuration: a TOML file with a flat top level and the
//! sections `[spectral]`, `[solver]` and `[heat]`.
//!
//! Every key can be overridden from the environment as
//! `FBMWEAK_<KEY>` or `FBMWEAK_<SECTION>_<KEY>` (upper case). Unknown keys in
//! either place are rejected.

use std::path::{Path, PathBuf};

use fbmweak_core::solver::{Method, ScalingParams, SmoothingFamily, SolveOptions};
use fbmweak_core::{HurstParam, SamplerKind};
use serde::{Deserialize, Deserializer};

use crate::error::RunError;

pub const ENV_PREFIX: &str = "FBMWEAK_";

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ExperimentConfig {
    pub hurst: f64,
    #[serde(rename = "horizon_T")]
    pub horizon: f64,
    pub n_steps: usize,
    pub n_paths: u64,
    pub seed: u64,
    /// Paths written to per-path CSVs; statistics always use all paths.
    pub dump_paths: u64,
    pub sampler: SamplerChoice,
    pub output_dir: PathBuf,
    /// Worker threads; 0 uses every core.
    pub threads: usize,
    pub spectral: SpectralConfig,
    pub solver: SolverConfig,
    pub heat: HeatConfig,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            hurst: 0.7,
            horizon: 1.0,
            n_steps: 16,
            n_paths: 10_000,
            seed: 0,
            dump_paths: 100,
            sampler: SamplerChoice::Circulant,
            output_dir: PathBuf::from("."),
            threads: 0,
            spectral: SpectralConfig::default(),
            solver: SolverConfig::default(),
            heat: HeatConfig::default(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SamplerChoice {
    Cholesky,
    Circulant,
    Volterra,
}

impl From<SamplerChoice> for SamplerKind {
    fn from(c: SamplerChoice) -> Self {
        match c {
            SamplerChoice::Cholesky => SamplerKind::Cholesky,
            SamplerChoice::Circulant => SamplerKind::Circulant,
            SamplerChoice::Volterra => SamplerKind::Volterra,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SpectralConfig {
    pub eigen_decay_p: f64,
    #[serde(rename = "truncation_N")]
    pub truncation: usize,
}

impl Default for SpectralConfig {
    fn default() -> Self {
        Self {
            eigen_decay_p: 2.0,
            truncation: 16,
        }
    }
}

/// `k = "auto"` or an explicit even integer.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum KSetting {
    #[default]
    Auto,
    Fixed(u32),
}

impl<'de> Deserialize<'de> for KSetting {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Raw {
            Int(i64),
            Text(String),
        }
        match Raw::deserialize(d)? {
            Raw::Int(k) if k > 0 && k <= u32::MAX as i64 => Ok(KSetting::Fixed(k as u32)),
            Raw::Int(k) => Err(serde::de::Error::custom(format!("k must be positive, got {k}"))),
            Raw::Text(s) if s == "auto" => Ok(KSetting::Auto),
            Raw::Text(s) => Err(serde::de::Error::custom(format!(
                "k must be \"auto\" or an integer, got {s:?}"
            ))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MethodChoice {
    Picard,
    Newton,
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SolverConfig {
    pub epsilon: f64,
    pub k: KSetting,
    pub tol: f64,
    pub max_iter: usize,
    pub method: MethodChoice,
    /// Taper index of `S_n`; defaults to four times the truncation.
    pub smoothing_n: Option<usize>,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            epsilon: 0.5,
            k: KSetting::Auto,
            tol: 1e-8,
            max_iter: 200,
            method: MethodChoice::Picard,
            smoothing_n: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct HeatConfig {
    pub alpha: f64,
    pub beta: f64,
    pub gamma: f64,
    #[serde(rename = "L")]
    pub period: f64,
    pub n_modes: usize,
}

impl Default for HeatConfig {
    fn default() -> Self {
        let p = fbmweak_core::heat::HeatParams::default();
        Self {
            alpha: p.alpha,
            beta: p.beta,
            gamma: p.gamma,
            period: p.period,
            n_modes: p.n_modes,
        }
    }
}

/// Every accepted `(section, key)` pair; the empty section is the top level.
pub const KEYS: &[(&str, &str)] = &[
    ("", "hurst"),
    ("", "horizon_T"),
    ("", "n_steps"),
    ("", "n_paths"),
    ("", "seed"),
    ("", "dump_paths"),
    ("", "sampler"),
    ("", "output_dir"),
    ("", "threads"),
    ("spectral", "eigen_decay_p"),
    ("spectral", "truncation_N"),
    ("solver", "epsilon"),
    ("solver", "k"),
    ("solver", "tol"),
    ("solver", "max_iter"),
    ("solver", "method"),
    ("solver", "smoothing_n"),
    ("heat", "alpha"),
    ("heat", "beta"),
    ("heat", "gamma"),
    ("heat", "L"),
    ("heat", "n_modes"),
];

fn env_name(section: &str, key: &str) -> String {
    if section.is_empty() {
        format!("{ENV_PREFIX}{}", key.to_uppercase())
    } else {
        format!("{ENV_PREFIX}{}_{}", section.to_uppercase(), key.to_uppercase())
    }
}

/// Interpret an environment string as the most specific TOML scalar.
fn env_value(raw: &str) -> toml::Value {
    if let Ok(i) = raw.parse::<i64>() {
        toml::Value::Integer(i)
    } else if let Ok(f) = raw.parse::<f64>() {
        toml::Value::Float(f)
    } else if let Ok(b) = raw.parse::<bool>() {
        toml::Value::Boolean(b)
    } else {
        toml::Value::String(raw.to_string())
    }
}

impl ExperimentConfig {
    /// Parse `text` and apply overrides from `env`.
    pub fn parse<I>(text: &str, env: I) -> Result<Self, RunError>
    where
        I: IntoIterator<Item = (String, String)>,
    {
        let mut table: toml::Table =
            toml::from_str(text).map_err(|e| RunError::Usage(format!("config: {e}")))?;
        for (name, raw) in env {
            if !name.starts_with(ENV_PREFIX) {
                continue;
            }
            let (section, key) = KEYS
                .iter()
                .find(|(s, k)| env_name(s, k) == name)
                .ok_or_else(|| RunError::Usage(format!("unknown environment override {name}")))?;
            let target = if section.is_empty() {
                &mut table
            } else {
                let entry = table
                    .entry(section.to_string())
                    .or_insert_with(|| toml::Value::Table(toml::Table::new()));
                entry
                    .as_table_mut()
                    .ok_or_else(|| RunError::Usage(format!("config key {section} must be a section")))?
            };
            target.insert(key.to_string(), env_value(&raw));
        }
        let cfg: Self = toml::Value::Table(table)
            .try_into()
            .map_err(|e: toml::de::Error| RunError::Usage(format!("config: {}", e.message())))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load<I>(path: &Path, env: I) -> Result<Self, RunError>
    where
        I: IntoIterator<Item = (String, String)>,
    {
        let text = std::fs::read_to_string(path)
            .map_err(|e| RunError::Usage(format!("cannot read config {}: {e}", path.display())))?;
        Self::parse(&text, env)
    }

    /// Range checks on every field, run before any computation.
    pub fn validate(&self) -> Result<(), RunError> {
        let bad = |msg: String| Err(RunError::Usage(msg));
        HurstParam::new(self.hurst).map_err(|e| RunError::Usage(e.to_string()))?;
        if !(self.horizon > 0.0 && self.horizon.is_finite()) {
            return bad(format!("horizon_T must be positive, got {}", self.horizon));
        }
        if self.n_steps == 0 {
            return bad("n_steps must be positive".into());
        }
        if self.dump_paths == 0 {
            return bad("dump_paths must be positive".into());
        }
        let s = &self.spectral;
        if !(s.eigen_decay_p > 1.0 && s.eigen_decay_p.is_finite()) {
            return bad(format!("eigen_decay_p must exceed 1, got {}", s.eigen_decay_p));
        }
        if s.truncation == 0 {
            return bad("truncation_N must be positive".into());
        }
        let v = &self.solver;
        if !(v.epsilon > 0.0 && v.epsilon < 1.0) {
            return bad(format!("epsilon must lie in (0, 1), got {}", v.epsilon));
        }
        if let KSetting::Fixed(k) = v.k {
            if k % 2 != 0 {
                return bad(format!("k must be even, got {k}"));
            }
        }
        if !(v.tol > 0.0) {
            return bad(format!("tol must be positive, got {}", v.tol));
        }
        if v.max_iter == 0 {
            return bad("max_iter must be positive".into());
        }
        if let Some(n) = v.smoothing_n {
            SmoothingFamily::taper(n, s.truncation).map_err(|e| RunError::Usage(e.to_string()))?;
        }
        let heat = self.heat_params();
        heat.validate().map_err(|e| RunError::Usage(e.to_string()))?;
        Ok(())
    }

    pub fn hurst_param(&self) -> HurstParam {
        HurstParam::new(self.hurst).expect("validated")
    }

    /// The rescaling `(a, k)`; `k = "auto"` picks the smallest even `k` with `kH > 1`.
    pub fn rescaling(&self) -> (f64, u32) {
        let k = match self.solver.k {
            KSetting::Auto => ScalingParams::auto_k(self.hurst_param()),
            KSetting::Fixed(k) => k,
        };
        (self.solver.epsilon, k)
    }

    /// Scaling for the solver, which additionally needs `kH > 1`.
    pub fn scaling(&self) -> Result<ScalingParams, RunError> {
        let (a, k) = self.rescaling();
        ScalingParams::new(a, k, self.hurst_param()).map_err(|e| RunError::Usage(e.to_string()))
    }

    pub fn solve_options(&self) -> SolveOptions {
        SolveOptions {
            tol: self.solver.tol,
            max_iter: self.solver.max_iter,
            method: match self.solver.method {
                MethodChoice::Picard => Method::Picard,
                MethodChoice::Newton => Method::Newton,
            },
            damping: 1.0,
        }
    }

    pub fn smoothing(&self, dim: usize) -> Result<SmoothingFamily, RunError> {
        let n = self.solver.smoothing_n.unwrap_or(4 * dim);
        SmoothingFamily::taper(n, dim).map_err(|e| RunError::Usage(e.to_string()))
    }

    pub fn heat_params(&self) -> fbmweak_core::heat::HeatParams {
        fbmweak_core::heat::HeatParams {
            alpha: self.heat.alpha,
            beta: self.heat.beta,
            gamma: self.heat.gamma,
            period: self.heat.period,
            n_modes: self.heat.n_modes,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn env(pairs: &[(&str, &str)]) -> Vec<(String, String)> {
        pairs
            .iter()
            .map(|(k, v)| (k.to_string(), v.to_string()))
            .collect()
    }

    #[test]
    fn defaults_and_sections() {
        let cfg = ExperimentConfig::parse(
            "hurst = 0.3\n[solver]\nk = 4\nmethod = \"newton\"\n[heat]\nL = 3.0\n",
            env(&[]),
        )
        .unwrap();
        assert_eq!(cfg.hurst, 0.3);
        assert_eq!(cfg.solver.k, KSetting::Fixed(4));
        assert_eq!(cfg.solver.method, MethodChoice::Newton);
        assert_eq!(cfg.heat.period, 3.0);
        assert_eq!(cfg.n_steps, 16);
    }

    #[test]
    fn unknown_keys_are_usage_errors() {
        for text in ["hursst = 0.5", "[solver]\nepsilom = 0.5", "[extra]\na = 1"] {
            assert!(matches!(
                ExperimentConfig::parse(text, env(&[])),
                Err(RunError::Usage(_))
            ));
        }
        assert!(matches!(
            ExperimentConfig::parse("", env(&[("FBMWEAK_HURSST", "0.5")])),
            Err(RunError::Usage(_))
        ));
    }

    #[test]
    fn environment_overrides_every_key() {
        let cfg = ExperimentConfig::parse(
            "hurst = 0.3\n[heat]\nalpha = 0.2",
            env(&[
                ("FBMWEAK_HURST", "0.6"),
                ("FBMWEAK_HORIZON_T", "2"),
                ("FBMWEAK_SPECTRAL_TRUNCATION_N", "8"),
                ("FBMWEAK_SOLVER_K", "auto"),
                ("FBMWEAK_SOLVER_METHOD", "newton"),
                ("FBMWEAK_HEAT_L", "4.5"),
                ("FBMWEAK_HEAT_ALPHA", "0.4"),
                ("FBMWEAK_SAMPLER", "volterra"),
                ("PATH", "/bin"),
            ]),
        )
        .unwrap();
        assert_eq!(cfg.hurst, 0.6);
        assert_eq!(cfg.horizon, 2.0);
        assert_eq!(cfg.spectral.truncation, 8);
        assert_eq!(cfg.solver.method, MethodChoice::Newton);
        assert_eq!(cfg.heat.period, 4.5);
        assert_eq!(cfg.heat.alpha, 0.4);
        assert_eq!(cfg.sampler, SamplerChoice::Volterra);
        for (section, key) in KEYS {
            assert!(env_name(section, key).starts_with(ENV_PREFIX));
        }
    }

    #[test]
    fn out_of_range_values_are_rejected() {
        for text in [
            "hurst = 1.0",
            "n_steps = 0",
            "[spectral]\neigen_decay_p = 1.0",
            "dump_paths = 0",
            "[solver]\nk = 3",
            "[solver]\nepsilon = 1.5",
            "[solver]\nk = \"many\"",
            "[solver]\nsmoothing_n = 2",
            "[heat]\nalpha = -1.0",
        ] {
            assert!(
                matches!(ExperimentConfig::parse(text, env(&[])), Err(RunError::Usage(_))),
                "{text}"
            );
        }
    }

    #[test]
    fn solver_scaling_needs_k_h_above_one() {
        let cfg = ExperimentConfig::parse("hurst = 0.3\n[solver]\nk = 2", env(&[])).unwrap();
        assert_eq!(cfg.rescaling(), (0.5, 2));
        assert!(matches!(cfg.scaling(), Err(RunError::Usage(_))));
        let auto = ExperimentConfig::parse("hurst = 0.3", env(&[])).unwrap();
        assert_eq!(auto.scaling().unwrap().k(), 4);
    }
}
