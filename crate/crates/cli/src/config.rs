//! TOML problem configs.
//!
//! ```toml
//! n = 6
//! seed = 1
//! quad_order = 8
//!
//! [model]
//! family = "compartmental"
//! scale = { kind = "nuisance-ig", s1 = 2.0, s2 = 2.0 }
//!
//! [[prior]]
//! kind = "uniform"
//! lo = 0.01884
//! hi = 0.09884
//! # ... one entry per parameter
//!
//! [space]
//! bounds = [[0.0, 24.0]]
//!
//! [optimizer]
//! starts = 1000
//! ```
//!
//! Exponent matrices are written one row per controllable variable, one
//! column per parameter. Unknown keys are rejected everywhere.

use figdesign::model::{DesignSpace, ModelSpec, RegressionSpec, ScaleSpec};
use figdesign::optimizer::OptimizerConfig;
use figdesign::phi::PhiEvaluator;
use figdesign::prior::{InverseGammaPrior, PriorComponent, PriorSpec};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::CliError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum FamilyName {
    NormalLinear,
    Poisson,
    Logistic,
    Compartmental,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ExpectationKind {
    #[default]
    Quadrature,
    ClosedForm,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum ScaleConfig {
    Known { gamma: f64 },
    OfInterest,
    NuisanceIg { s1: f64, s2: f64 },
}

impl From<ScaleConfig> for ScaleSpec {
    fn from(s: ScaleConfig) -> Self {
        match s {
            ScaleConfig::Known { gamma } => ScaleSpec::Known { gamma },
            ScaleConfig::OfInterest => ScaleSpec::OfInterest,
            ScaleConfig::NuisanceIg { s1, s2 } => ScaleSpec::NuisanceIg { s1, s2 },
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum PriorConfig {
    Normal { mean: f64, var: f64 },
    Uniform { lo: f64, hi: f64 },
    PointMass { value: f64 },
}

impl From<PriorConfig> for PriorComponent {
    fn from(p: PriorConfig) -> Self {
        match p {
            PriorConfig::Normal { mean, var } => PriorComponent::Normal { mean, var },
            PriorConfig::Uniform { lo, hi } => PriorComponent::Uniform { lo, hi },
            PriorConfig::PointMass { value } => PriorComponent::PointMass { value },
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelConfig {
    pub family: FamilyName,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub exponents: Option<Vec<Vec<u32>>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub scale: Option<ScaleConfig>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScalePriorConfig {
    pub s1: f64,
    pub s2: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SpaceConfig {
    pub bounds: Vec<[f64; 2]>,
}

/// Optimizer settings; the seed lives at the top level of the config.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OptimizerSection {
    pub starts: usize,
    pub grad_step: f64,
    pub convergence_tol: f64,
    pub max_iters: usize,
    pub dedup_tol: f64,
    pub value_tol: f64,
}

impl Default for OptimizerSection {
    fn default() -> Self {
        let d = OptimizerConfig::default();
        Self {
            starts: d.starts,
            grad_step: d.grad_step,
            convergence_tol: d.convergence_tol,
            max_iters: d.max_iters,
            dedup_tol: d.dedup_tol,
            value_tol: d.value_tol,
        }
    }
}

fn default_quad_order() -> usize {
    8
}

fn default_draws() -> usize {
    figdesign::diagnosis::DEFAULT_DRAWS
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProblemConfig {
    pub n: usize,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_quad_order")]
    pub quad_order: usize,
    #[serde(default)]
    pub expectation: ExpectationKind,
    #[serde(default = "default_draws")]
    pub draws: usize,
    pub model: ModelConfig,
    pub prior: Vec<PriorConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub scale_prior: Option<ScalePriorConfig>,
    pub space: SpaceConfig,
    #[serde(default)]
    pub optimizer: OptimizerSection,
}

/// Command-line overrides. Precedence: flag, then config file, then default.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub starts: Option<usize>,
    pub quad_order: Option<usize>,
    pub dedup_tol: Option<f64>,
}

impl ProblemConfig {
    /// Parses and validates a config. `origin` names the source in errors.
    pub fn parse(text: &str, origin: &str) -> Result<Self, CliError> {
        let cfg: ProblemConfig =
            toml::from_str(text).map_err(|e| CliError::Config(format!("{origin}: {e}")))?;
        cfg.validate()
            .map_err(|e| CliError::Config(format!("{origin}: {e}")))?;
        Ok(cfg)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    /// SHA-256 of the canonical serialization.
    pub fn hash(&self) -> String {
        let digest = Sha256::digest(self.to_toml().as_bytes());
        digest.iter().map(|b| format!("{b:02x}")).collect()
    }

    pub fn apply(&mut self, o: &Overrides) {
        if let Some(s) = o.seed {
            self.seed = s;
        }
        if let Some(b) = o.starts {
            self.optimizer.starts = b;
        }
        if let Some(q) = o.quad_order {
            self.quad_order = q;
        }
        if let Some(t) = o.dedup_tol {
            self.optimizer.dedup_tol = t;
        }
    }

    pub fn k(&self) -> usize {
        self.space.bounds.len()
    }

    /// Cross-section checks; messages name the offending field.
    pub fn validate(&self) -> Result<(), String> {
        if self.n == 0 {
            return Err("field `n`: must be at least 1".into());
        }
        if self.quad_order == 0 {
            return Err("field `quad_order`: must be at least 1".into());
        }
        if self.draws == 0 {
            return Err("field `draws`: must be at least 1".into());
        }
        if self.space.bounds.is_empty() {
            return Err("field `space.bounds`: needs at least one variable".into());
        }
        for (r, [a, b]) in self.space.bounds.iter().enumerate() {
            if !(a < b && a.is_finite() && b.is_finite()) {
                return Err(format!("field `space.bounds[{r}]`: need lower < upper, got [{a}, {b}]"));
            }
        }
        let k = self.k();
        let m = &self.model;
        let p = match m.family {
            FamilyName::Compartmental => {
                if m.exponents.is_some() {
                    return Err("field `model.exponents`: not used by the compartmental family".into());
                }
                if k != 1 {
                    return Err(format!(
                        "field `space.bounds`: compartmental model has k = 1, got {k} variables"
                    ));
                }
                3
            }
            _ => {
                let e = m.exponents.as_ref().ok_or_else(|| {
                    "field `model.exponents`: required for regression families".to_string()
                })?;
                if e.len() != k {
                    return Err(format!(
                        "field `model.exponents`: {} rows but `space.bounds` has k = {k} variables",
                        e.len()
                    ));
                }
                let p = e.first().map_or(0, Vec::len);
                if p == 0 || e.iter().any(|row| row.len() != p) {
                    return Err("field `model.exponents`: rows must be non-empty and equally long".into());
                }
                p
            }
        };
        match (m.family, m.scale) {
            (FamilyName::NormalLinear | FamilyName::Compartmental, None) => {
                return Err("field `model.scale`: required for normal families".into())
            }
            (FamilyName::Poisson | FamilyName::Logistic, Some(_)) => {
                return Err("field `model.scale`: Poisson and logistic models have no scale".into())
            }
            (_, Some(ScaleConfig::OfInterest)) if self.scale_prior.is_none() => {
                return Err("field `scale_prior`: required when the scale is of interest".into())
            }
            _ => {}
        }
        if self.prior.len() != p {
            return Err(format!(
                "field `prior`: {} components but the model has p = {p} parameters",
                self.prior.len()
            ));
        }
        self.model_spec()
            .and_then(|_| self.prior_spec())
            .and_then(|_| self.optimizer_config().validate())
            .map_err(|e| e.to_string())
    }

    pub fn model_spec(&self) -> figdesign::Result<ModelSpec> {
        let scale = self.model.scale.map(ScaleSpec::from);
        let regression = || RegressionSpec::new(self.model.exponents.clone().unwrap_or_default());
        match self.model.family {
            FamilyName::NormalLinear => ModelSpec::normal_linear(regression()?, scale.expect("validated")),
            FamilyName::Poisson => Ok(ModelSpec::poisson(regression()?)),
            FamilyName::Logistic => Ok(ModelSpec::logistic(regression()?)),
            FamilyName::Compartmental => ModelSpec::compartmental(scale.expect("validated")),
        }
    }

    pub fn prior_spec(&self) -> figdesign::Result<PriorSpec> {
        let spec = PriorSpec::new(self.prior.iter().copied().map(PriorComponent::from).collect())?;
        match self.scale_prior {
            Some(ScalePriorConfig { s1, s2 }) => spec.with_scale_prior(InverseGammaPrior { s1, s2 }),
            None => Ok(spec),
        }
    }

    pub fn design_space(&self) -> figdesign::Result<DesignSpace> {
        DesignSpace::new(self.space.bounds.iter().map(|&[a, b]| (a, b)).collect())
    }

    pub fn optimizer_config(&self) -> OptimizerConfig {
        let o = self.optimizer;
        OptimizerConfig {
            starts: o.starts,
            seed: self.seed,
            grad_step: o.grad_step,
            convergence_tol: o.convergence_tol,
            max_iters: o.max_iters,
            dedup_tol: o.dedup_tol,
            value_tol: o.value_tol,
            ..OptimizerConfig::default()
        }
    }

    pub fn evaluator(&self) -> figdesign::Result<PhiEvaluator> {
        self.evaluator_with_order(self.quad_order)
    }

    pub fn evaluator_with_order(&self, order: usize) -> figdesign::Result<PhiEvaluator> {
        let model = self.model_spec()?;
        let prior = self.prior_spec()?;
        match self.expectation {
            ExpectationKind::Quadrature => PhiEvaluator::with_quadrature(model, prior, order),
            ExpectationKind::ClosedForm => PhiEvaluator::closed_form(model, prior),
        }
    }
}
