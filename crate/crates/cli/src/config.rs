//! Run configuration: one JSON document per run, validated in full before
//! anything is written.

use std::ffi::OsStr;
use std::path::{Path, PathBuf};

use abr_core::abr::{AbrConfig, Method, Td3Params};
use abr_core::baselines::{BaselineConfig, BaselineMethod};
use abr_core::envs::{BehaviorSpec, Environment};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::error::{CliError, CliResult};

/// Environment variable that replaces the output root.
pub const OUT_DIR_VAR: &str = "ABR_OUT_DIR";

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MethodName {
    Abr,
    Td3,
    Td3bc,
    Bc,
}

impl MethodName {
    pub fn as_str(&self) -> &'static str {
        match self {
            MethodName::Abr => "abr",
            MethodName::Td3 => "td3",
            MethodName::Td3bc => "td3bc",
            MethodName::Bc => "bc",
        }
    }
}

/// Either a dataset file or the recipe to generate one.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DatasetSection {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub path: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub behavior: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub n: Option<usize>,
    #[serde(default)]
    pub seed: u64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AbrSection {
    pub alpha: f64,
    pub beta: f64,
    pub uniform_samples: usize,
}

impl Default for AbrSection {
    fn default() -> Self {
        let d = AbrConfig::default();
        Self {
            alpha: d.alpha,
            beta: d.beta,
            uniform_samples: d.uniform_samples,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub env: Environment,
    pub dataset: DatasetSection,
    pub method: MethodName,
    #[serde(default)]
    pub abr: AbrSection,
    /// Fixed penalty weight of `td3bc`.
    #[serde(default = "default_alpha_fixed")]
    pub alpha_fixed: f64,
    /// `seed` is replaced by each entry of `seeds`.
    #[serde(default)]
    pub td3: Td3Params,
    #[serde(default = "default_eval_episodes")]
    pub eval_episodes: usize,
    pub seeds: Vec<u64>,
    pub out_dir: PathBuf,
    /// Episodes per reference policy when references are computed here.
    #[serde(default = "default_reference_episodes")]
    pub reference_episodes: usize,
}

fn default_alpha_fixed() -> f64 {
    BaselineConfig::new(BaselineMethod::Td3bc).alpha_fixed
}

fn default_eval_episodes() -> usize {
    10
}

fn default_reference_episodes() -> usize {
    100
}

impl RunConfig {
    pub fn from_json(text: &str) -> CliResult<Self> {
        let cfg: RunConfig = parse_json(text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> CliResult<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
        Self::from_json(&text)
    }

    pub fn validate(&self) -> CliResult<()> {
        fn at(field: &'static str) -> impl Fn(abr_core::Error) -> CliError {
            move |e| CliError::Config(format!("{field}: {e}"))
        }
        self.env.validate().map_err(at("env"))?;
        self.dataset.validate(&self.env)?;
        if self.seeds.is_empty() {
            return Err(CliError::Config("seeds: at least one seed is required".into()));
        }
        let mut sorted = self.seeds.clone();
        sorted.sort_unstable();
        sorted.dedup();
        if sorted.len() != self.seeds.len() {
            return Err(CliError::Config("seeds: duplicate entries".into()));
        }
        if self.eval_episodes == 0 {
            return Err(CliError::Config("eval_episodes: must be at least 1".into()));
        }
        if self.reference_episodes == 0 {
            return Err(CliError::Config("reference_episodes: must be at least 1".into()));
        }
        if self.td3.total_steps == 0 {
            return Err(CliError::Config("td3.total_steps: must be at least 1".into()));
        }
        self.td3.validate().map_err(at("td3"))?;
        match self.method {
            MethodName::Abr => self.abr_config(0).validate().map_err(at("abr")),
            _ => self.baseline_config(0).validate().map_err(at("alpha_fixed")),
        }
    }

    pub fn td3_for_seed(&self, seed: u64) -> Td3Params {
        Td3Params {
            seed,
            ..self.td3.clone()
        }
    }

    pub fn abr_config(&self, seed: u64) -> AbrConfig {
        AbrConfig {
            alpha: self.abr.alpha,
            beta: self.abr.beta,
            uniform_samples: self.abr.uniform_samples,
            td3: self.td3_for_seed(seed),
        }
    }

    pub fn baseline_config(&self, seed: u64) -> BaselineConfig {
        let method = match self.method {
            MethodName::Td3 => BaselineMethod::Td3,
            MethodName::Td3bc => BaselineMethod::Td3bc,
            _ => BaselineMethod::Bc,
        };
        BaselineConfig {
            method,
            alpha_fixed: self.alpha_fixed,
            td3: self.td3_for_seed(seed),
        }
    }

    pub fn method(&self) -> Method {
        match self.method {
            MethodName::Abr => Method::Abr {
                alpha: self.abr.alpha,
                beta: self.abr.beta,
                uniform_samples: self.abr.uniform_samples,
            },
            _ => self.baseline_config(0).to_method(),
        }
    }
}

impl DatasetSection {
    pub fn validate(&self, env: &Environment) -> CliResult<()> {
        match (&self.path, &self.behavior, self.n) {
            (Some(_), None, None) => Ok(()),
            (None, Some(tag), Some(n)) => {
                if n == 0 {
                    return Err(CliError::Config("dataset.n: must be positive".into()));
                }
                BehaviorSpec::from_tag(env, tag)
                    .map(|_| ())
                    .map_err(|e| CliError::Config(format!("dataset.behavior: {e}")))
            }
            (None, None, _) => Err(CliError::Config("dataset: give either `path` or `behavior` with `n`".into())),
            (Some(_), _, _) => Err(CliError::Config("dataset: `path` excludes `behavior` and `n`".into())),
            (None, Some(_), None) => Err(CliError::Config("dataset.n: required with `behavior`".into())),
        }
    }
}

/// Deserializes with the failing field's path in the message.
pub fn parse_json<T: DeserializeOwned>(text: &str) -> CliResult<T> {
    let de = &mut serde_json::Deserializer::from_str(text);
    serde_path_to_error::deserialize(de).map_err(|e| {
        let path = e.path().to_string();
        let inner = e.into_inner();
        if path == "." {
            CliError::Config(inner.to_string())
        } else {
            CliError::Config(format!("{path}: {inner}"))
        }
    })
}

/// `bandit`, `point_mass` (or `pointmass`) for the defaults, otherwise a
/// path to an environment JSON file.
pub fn parse_env(spec: &str) -> CliResult<Environment> {
    let env = match spec {
        "bandit" => Environment::Bandit(Default::default()),
        "point_mass" | "pointmass" => Environment::PointMass(Default::default()),
        path => {
            let text = std::fs::read_to_string(path)
                .map_err(|e| CliError::Config(format!("env: {path}: {e}")))?;
            parse_json(&text)?
        }
    };
    env.validate().map_err(|e| CliError::Config(format!("env: {e}")))?;
    Ok(env)
}

/// Relative output paths hang off `root` (the working directory when unset).
pub fn resolve_out_with(root: Option<&OsStr>, path: &Path) -> PathBuf {
    match root {
        Some(root) if path.is_relative() && !root.is_empty() => Path::new(root).join(path),
        _ => path.to_path_buf(),
    }
}

pub fn resolve_out(path: &Path) -> PathBuf {
    resolve_out_with(std::env::var_os(OUT_DIR_VAR).as_deref(), path)
}
