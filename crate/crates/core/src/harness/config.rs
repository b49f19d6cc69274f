use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::init::{InitMethod, InitSpec};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Task {
    Decompose,
    Regress,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MethodName {
    Rgd,
    Rgn,
    Als,
}

impl MethodName {
    pub fn as_str(self) -> &'static str {
        match self {
            Self::Rgd => "rgd",
            Self::Rgn => "rgn",
            Self::Als => "als",
        }
    }
}

impl std::str::FromStr for MethodName {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "rgd" => Ok(Self::Rgd),
            "rgn" => Ok(Self::Rgn),
            "als" => Ok(Self::Als),
            other => Err(Error::Config(format!("unknown method {other:?}; expected rgd, rgn or als"))),
        }
    }
}

/// How factor vectors are drawn.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FactorLaw {
    /// Independent uniform draws from each unit sphere.
    Sphere,
    /// AR(1)-correlated columns with correlation `rho`, then a Haar rotation.
    Ar1,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum WeightLaw {
    /// `(√d + 1) · Unif(a, 2a)` with `a = p̄^{3/4}` for decomposition and
    /// `(√d + 1) · Unif(0.5, 1.5)` for regression.
    UnifScaled,
    /// `λ_i = 2 κ^{(i−1)/2} p̄^{3/4} r^{1/2}` for decomposition and
    /// `λ_i = 2 κ^{(i−2)/2}` for regression.
    GeometricKappa,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Order {
    Jacobi,
    GaussSeidel,
    Joint,
}

/// One experiment: an instance family, the solvers to run and the replicate count.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub task: Task,
    pub dims: Vec<usize>,
    pub rank: usize,
    #[serde(default = "default_factor_law")]
    pub factors: FactorLaw,
    #[serde(default)]
    pub rho: f64,
    #[serde(default = "default_weight_law")]
    pub weights: WeightLaw,
    #[serde(default = "default_kappa")]
    pub kappa: f64,
    #[serde(default)]
    pub noise_sd: f64,
    /// Standard deviation of the design entries.
    #[serde(default = "one")]
    pub design_sigma: f64,
    /// Sample size; `⌊2 p̄^{3/2} r⌋` when absent.
    #[serde(default)]
    pub n: Option<usize>,
    #[serde(default = "default_methods")]
    pub methods: Vec<MethodName>,
    /// Defaults to random for decomposition and adjoint CPCA for regression.
    #[serde(default)]
    pub init: Option<InitMethod>,
    #[serde(default)]
    pub cpca_split: Option<Vec<usize>>,
    #[serde(default = "default_alpha")]
    pub alpha: f64,
    #[serde(default = "default_max_iters")]
    pub max_iters: usize,
    #[serde(default = "default_stop_tol")]
    pub stop_tol: f64,
    #[serde(default = "default_pinv_tol")]
    pub pinv_tol: f64,
    #[serde(default = "default_order")]
    pub update_order: Order,
    /// Relative residual below which joint Gauss–Newton steps are tried;
    /// `inf` tries them on every step.
    #[serde(default = "default_joint_gate")]
    pub joint_gate: f64,
    #[serde(default = "default_replicates")]
    pub replicates: usize,
    #[serde(default)]
    pub seed: u64,
    /// Write measured wall-clock times instead of zeros.
    #[serde(default)]
    pub record_wall_time: bool,
}

fn default_factor_law() -> FactorLaw {
    FactorLaw::Sphere
}
fn default_weight_law() -> WeightLaw {
    WeightLaw::UnifScaled
}
fn default_kappa() -> f64 {
    10.0
}
fn one() -> f64 {
    1.0
}
fn default_methods() -> Vec<MethodName> {
    vec![MethodName::Rgd, MethodName::Rgn, MethodName::Als]
}
fn default_alpha() -> f64 {
    0.2
}
fn default_max_iters() -> usize {
    30
}
fn default_stop_tol() -> f64 {
    1e-12
}
fn default_pinv_tol() -> f64 {
    1e-10
}
fn default_order() -> Order {
    Order::Jacobi
}
fn default_joint_gate() -> f64 {
    0.5
}
fn default_replicates() -> usize {
    20
}

/// Prefix of environment variables that override top-level config keys,
/// e.g. `SEGRE_NOISE_SD=0.5` or `SEGRE_DIMS=[10,10,10]`.
pub const ENV_PREFIX: &str = "SEGRE_";

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        Self::from_table(parse_table(text)?)
    }

    /// Parses `text` and applies overrides from `vars` (name, value) pairs
    /// carrying [`ENV_PREFIX`].
    pub fn from_toml_with_env<I>(text: &str, vars: I) -> Result<Self>
    where
        I: IntoIterator<Item = (String, String)>,
    {
        let mut table = parse_table(text)?;
        apply_env(&mut table, vars)?;
        Self::from_table(table)
    }

    fn from_table(table: toml::Table) -> Result<Self> {
        let cfg: Self = table.try_into().map_err(|e: toml::de::Error| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if self.dims.len() < 2 || self.dims.contains(&0) {
            return bad(format!("dims must list at least two positive sizes, got {:?}", self.dims));
        }
        if self.rank == 0 {
            return bad("rank must be at least 1".into());
        }
        if !(0.0..1.0).contains(&self.rho) {
            return bad(format!("rho must lie in [0, 1), got {}", self.rho));
        }
        if self.factors == FactorLaw::Ar1 && self.dims.iter().any(|&p| p < self.rank) {
            return bad("AR(1) factors need rank ≤ every dimension".into());
        }
        if !(self.kappa >= 1.0) {
            return bad(format!("kappa must be at least 1, got {}", self.kappa));
        }
        if !(self.noise_sd >= 0.0) || !(self.design_sigma > 0.0) {
            return bad("noise_sd must be ≥ 0 and design_sigma > 0".into());
        }
        if !(self.alpha > 0.0 && self.alpha <= 1.0) {
            return bad(format!("alpha must lie in (0, 1], got {}", self.alpha));
        }
        if !(self.stop_tol > 0.0) || !(self.pinv_tol > 0.0) {
            return bad("tolerances must be positive".into());
        }
        if !(self.joint_gate >= 0.0) {
            return bad("joint_gate must be nonnegative".into());
        }
        if self.replicates == 0 {
            return bad("replicates must be at least 1".into());
        }
        if self.methods.is_empty() {
            return bad("at least one method is required".into());
        }
        if self.n == Some(0) {
            return bad("n must be positive".into());
        }
        Ok(())
    }

    pub fn order(&self) -> usize {
        self.dims.len()
    }

    pub fn p_bar(&self) -> usize {
        *self.dims.iter().max().expect("validated dims")
    }

    /// `⌊2 p̄^{3/2} r⌋` unless set explicitly.
    pub fn sample_size(&self) -> usize {
        self.n.unwrap_or_else(|| (2.0 * (self.p_bar() as f64).powf(1.5) * self.rank as f64).floor() as usize)
    }

    pub fn init_spec(&self, replicate: u64) -> InitSpec {
        let method = self.init.unwrap_or(match self.task {
            Task::Decompose => InitMethod::Random,
            Task::Regress => InitMethod::AdjointCpca,
        });
        InitSpec { method, seed: self.seed, replicate, cpca_split: self.cpca_split.clone() }
    }

    /// Sorted, deduplicated method list.
    pub fn method_list(&self) -> Vec<MethodName> {
        let mut m = self.methods.clone();
        m.sort();
        m.dedup();
        m
    }
}

fn parse_table(text: &str) -> Result<toml::Table> {
    text.parse::<toml::Table>().map_err(|e| Error::Config(e.to_string()))
}

fn apply_env<I>(table: &mut toml::Table, vars: I) -> Result<()>
where
    I: IntoIterator<Item = (String, String)>,
{
    for (name, raw) in vars {
        let Some(key) = name.strip_prefix(ENV_PREFIX) else { continue };
        let key = key.to_ascii_lowercase();
        let value = parse_env_value(&raw);
        table.insert(key, value);
    }
    Ok(())
}

/// Numbers, booleans and arrays parse as TOML; anything else is a string.
fn parse_env_value(raw: &str) -> toml::Value {
    format!("v = {raw}")
        .parse::<toml::Table>()
        .ok()
        .and_then(|mut t| t.remove("v"))
        .unwrap_or_else(|| toml::Value::String(raw.to_string()))
}
