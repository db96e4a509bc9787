//! The per-run objective `φ(d)` whose maxima are the support points of
//! designs maximizing expected Fisher information gain, and the expected
//! utility `U(D) = c · Σ_i φ(d_i)` of a whole design.
//!
//! Three scale regimes are supported:
//!
//! * known scale: `φ(d) = Σ_j E_θ[(∂μ/∂θ_j)² / var(y | θ, d)]`;
//! * scale of interest: the same sum with the expectation also taken over
//!   `γ ~ IG(s1/2, s2/2)`. The design-free `γ` diagonal entry of the
//!   enlarged information matrix is dropped, so utilities are only
//!   comparable within this regime;
//! * normal response with inverse-gamma nuisance scale:
//!   `φ(d) = Σ_j E_θ[(∂μ/∂θ_j)²]`, and the multivariate-t marginal scales
//!   the utility by `a(a+n) / (b(a+n+2))` with `(a, b) = (s1, s2)`.

use crate::error::{FigError, Result};
use crate::model::{compartmental_gradient, logistic_variance, Design, Family, ModelSpec, RegressionSpec, ScaleSpec};
use crate::par::{map_indexed, Execution};
use crate::prior::{PriorSpec, QuadratureRule};

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Regime {
    KnownScale { gamma: f64 },
    /// `mean_precision` is `E[1/γ]` under the scale prior.
    ScaleOfInterest { mean_precision: f64 },
    NuisanceNormalIg { s1: f64, s2: f64 },
}

#[derive(Debug, Clone, PartialEq)]
pub enum Expectation {
    Quadrature(QuadratureRule),
    ClosedForm,
}

/// Anything the optimizer can maximize over a box.
pub trait Objective: Sync {
    fn dim(&self) -> usize;
    fn value(&self, d: &[f64]) -> Result<f64>;
}

/// Wraps a closure as an [`Objective`].
pub struct FnObjective<F> {
    dim: usize,
    f: F,
}

impl<F> FnObjective<F>
where
    F: Fn(&[f64]) -> f64 + Sync,
{
    pub fn new(dim: usize, f: F) -> Self {
        Self { dim, f }
    }
}

impl<F> Objective for FnObjective<F>
where
    F: Fn(&[f64]) -> f64 + Sync,
{
    fn dim(&self) -> usize {
        self.dim
    }

    fn value(&self, d: &[f64]) -> Result<f64> {
        let v = (self.f)(d);
        if v.is_finite() {
            Ok(v)
        } else {
            Err(FigError::NonFinite {
                what: "objective",
                point: d.to_vec(),
            })
        }
    }
}

/// Compiled `φ(d)` for one model, prior and expectation method.
#[derive(Debug, Clone)]
pub struct PhiEvaluator {
    model: ModelSpec,
    prior: PriorSpec,
    expectation: Expectation,
    regime: Regime,
}

impl PhiEvaluator {
    /// Prior expectations by a tensor Gauss rule of the given order.
    pub fn with_quadrature(model: ModelSpec, prior: PriorSpec, order: usize) -> Result<Self> {
        let rule = prior.quadrature_rule(order)?;
        Self::with_rule(model, prior, rule)
    }

    pub fn with_rule(model: ModelSpec, prior: PriorSpec, rule: QuadratureRule) -> Result<Self> {
        let regime = Self::regime_for(&model, &prior)?;
        if rule.dim() != model.p() {
            return Err(FigError::input("quadrature rule dimension differs from model p"));
        }
        Ok(Self {
            model,
            prior,
            expectation: Expectation::Quadrature(rule),
            regime,
        })
    }

    /// Exact `φ` for normal linear models (any regime) and Poisson models
    /// under independent centered normal priors.
    pub fn closed_form(model: ModelSpec, prior: PriorSpec) -> Result<Self> {
        let regime = Self::regime_for(&model, &prior)?;
        match model.family() {
            Family::NormalLinear { .. } => {}
            Family::Poisson { .. } if prior.centered_normal_variances().is_some() => {}
            _ => {
                return Err(FigError::input(
                    "closed-form φ needs a normal linear model or a Poisson model with N(0, σ²) priors",
                ))
            }
        }
        Ok(Self {
            model,
            prior,
            expectation: Expectation::ClosedForm,
            regime,
        })
    }

    fn regime_for(model: &ModelSpec, prior: &PriorSpec) -> Result<Regime> {
        if prior.p() != model.p() {
            return Err(FigError::input(format!(
                "prior has {} components, model has p = {}",
                prior.p(),
                model.p()
            )));
        }
        Ok(match model.scale() {
            ScaleSpec::Known { gamma } => Regime::KnownScale { gamma },
            ScaleSpec::OfInterest => {
                let ig = prior.scale_prior().ok_or_else(|| {
                    FigError::input("a scale of interest needs an inverse-gamma scale prior")
                })?;
                Regime::ScaleOfInterest {
                    mean_precision: ig.mean_precision(),
                }
            }
            ScaleSpec::NuisanceIg { s1, s2 } => Regime::NuisanceNormalIg { s1, s2 },
        })
    }

    pub fn model(&self) -> &ModelSpec {
        &self.model
    }

    pub fn prior(&self) -> &PriorSpec {
        &self.prior
    }

    pub fn regime(&self) -> Regime {
        self.regime
    }

    pub fn expectation(&self) -> &Expectation {
        &self.expectation
    }

    /// `φ(d)` in this evaluator's regime.
    pub fn phi(&self, d: &[f64]) -> Result<f64> {
        match self.regime {
            Regime::KnownScale { .. } | Regime::ScaleOfInterest { .. } => self.phi_known_scale(d),
            Regime::NuisanceNormalIg { .. } => self.phi_nuisance_normal(d),
        }
    }

    /// `Σ_j E[(∂μ/∂θ_j)² / var]`; in the scale-of-interest regime the
    /// expectation also covers `γ`.
    pub fn phi_known_scale(&self, d: &[f64]) -> Result<f64> {
        let precision = match self.regime {
            Regime::KnownScale { gamma } => 1.0 / gamma,
            Regime::ScaleOfInterest { mean_precision } => mean_precision,
            Regime::NuisanceNormalIg { .. } => {
                return Err(FigError::input(
                    "known-scale φ requested for a nuisance-scale model",
                ))
            }
        };
        match self.model.family() {
            // γ enters only through var = γ
            Family::NormalLinear { .. } | Family::CompartmentalNormal { .. } => {
                Ok(precision * self.squared_gradient_sum(d)?)
            }
            Family::Poisson { regression } => match &self.expectation {
                Expectation::ClosedForm => {
                    let sigma2 = self
                        .prior
                        .centered_normal_variances()
                        .expect("checked at construction");
                    phi_closed_poisson(regression, &sigma2, d)
                }
                Expectation::Quadrature(rule) => glm_phi(regression, rule, d, |e| e, |eta| eta.exp()),
            },
            Family::Logistic { regression } => match &self.expectation {
                Expectation::Quadrature(rule) => glm_phi(
                    regression,
                    rule,
                    d,
                    |e| e / ((1.0 + e) * (1.0 + e)),
                    logistic_variance,
                ),
                Expectation::ClosedForm => unreachable!("rejected at construction"),
            },
        }
    }

    /// `Σ_j E[(∂μ/∂θ_j)²]` for normal responses with a nuisance scale.
    pub fn phi_nuisance_normal(&self, d: &[f64]) -> Result<f64> {
        if !matches!(self.regime, Regime::NuisanceNormalIg { .. }) {
            return Err(FigError::input(
                "nuisance-scale φ requested for a model without an inverse-gamma nuisance scale",
            ));
        }
        self.squared_gradient_sum(d)
    }

    /// `Σ_j E[(∂μ/∂θ_j)²]` for the two normal families.
    fn squared_gradient_sum(&self, d: &[f64]) -> Result<f64> {
        match self.model.family() {
            Family::NormalLinear { regression, .. } => phi_closed_linear(regression, d),
            Family::CompartmentalNormal { .. } => {
                if d.len() != 1 {
                    return Err(FigError::input("compartmental model has one control variable"));
                }
                let Expectation::Quadrature(rule) = &self.expectation else {
                    unreachable!("rejected at construction")
                };
                let t = d[0];
                let mut acc = 0.0;
                for (theta, w) in rule.iter() {
                    if !(theta[1] > theta[0]) {
                        return Err(FigError::domain(format!(
                            "prior node θ = {theta:?} violates θ₂ > θ₁"
                        )));
                    }
                    let g = compartmental_gradient(theta, t);
                    acc += w * (g[0] * g[0] + g[1] * g[1] + g[2] * g[2]);
                }
                finite(acc, "φ", d)
            }
            _ => Err(FigError::input("squared-gradient φ needs a normal response")),
        }
    }

    /// `φ` straight from the definition, through the model's gradient and
    /// variance at every node. Slow; used to cross-check the fast paths.
    #[doc(hidden)]
    pub fn phi_by_definition(&self, d: &[f64]) -> Result<f64> {
        let Expectation::Quadrature(rule) = &self.expectation else {
            return self.phi(d);
        };
        let mut err = None;
        let (precision, use_variance) = match self.regime {
            Regime::KnownScale { gamma } => (1.0, Some(gamma)),
            Regime::ScaleOfInterest { mean_precision } => (mean_precision, Some(1.0)),
            Regime::NuisanceNormalIg { .. } => (1.0, None),
        };
        let v = rule.expect(|theta| {
            let run = || -> Result<f64> {
                let g = self.model.mean_gradient(theta, d)?;
                let var = match use_variance {
                    Some(gamma) => self.model.variance(theta, d, gamma)?,
                    None => 1.0,
                };
                Ok(g.iter().map(|x| x * x / var).sum())
            };
            run().unwrap_or_else(|e| {
                err.get_or_insert(e);
                0.0
            })
        })?;
        match err {
            Some(e) => Err(e),
            None => Ok(precision * v),
        }
    }

    /// Multiplier `c` in `U(D) = c · Σ φ(d_i)` for a design of `n` runs.
    pub fn utility_factor(&self, n: usize) -> f64 {
        match self.regime {
            Regime::NuisanceNormalIg { s1, s2 } => nuisance_factor(s1, s2, n),
            _ => 1.0,
        }
    }

    /// Expected Fisher information gain of a design.
    pub fn expected_fig(&self, design: &Design) -> Result<f64> {
        let mut total = 0.0;
        for d in design.points() {
            total += self.phi(d)?;
        }
        Ok(self.utility_factor(design.n()) * total)
    }
}

impl Objective for PhiEvaluator {
    fn dim(&self) -> usize {
        self.model.k()
    }

    fn value(&self, d: &[f64]) -> Result<f64> {
        self.phi(d)
    }
}

/// `a(a+n) / (b(a+n+2))`, the location-information factor of an
/// `n`-variate t marginal with `a` degrees of freedom and scale `(b/a)·I`.
pub fn nuisance_factor(a: f64, b: f64, n: usize) -> f64 {
    let n = n as f64;
    a * (a + n) / (b * (a + n + 2.0))
}

fn finite(v: f64, what: &'static str, d: &[f64]) -> Result<f64> {
    if v.is_finite() {
        Ok(v)
    } else {
        Err(FigError::NonFinite {
            what,
            point: d.to_vec(),
        })
    }
}

/// `E[h(η)] · ‖f(d)‖²` for GLMs whose per-run trace is `h(η)·‖f‖²`;
/// `g(exp(η)) = h(η)` is the same weight written in terms of `exp(η)`.
fn glm_phi<G, H>(
    regression: &RegressionSpec,
    rule: &QuadratureRule,
    d: &[f64],
    g: G,
    h: H,
) -> Result<f64>
where
    G: Fn(f64) -> f64,
    H: Fn(f64) -> f64,
{
    let f = regression.eval(d)?;
    let norm2: f64 = f.iter().map(|x| x * x).sum();
    let non_finite = |_| FigError::NonFinite {
        what: "φ",
        point: d.to_vec(),
    };
    let mean_h = match rule.expect_exp_linear_form(&f, g).map_err(non_finite)? {
        Some(v) => v,
        None => rule.expect_linear_form(&f, h).map_err(non_finite)?,
    };
    finite(mean_h * norm2, "φ", d)
}

/// `Σ_j Π_r (d_r^{u_rj})²`.
pub fn phi_closed_linear(spec: &RegressionSpec, d: &[f64]) -> Result<f64> {
    let f = spec.eval(d)?;
    Ok(f.iter().map(|x| x * x).sum())
}

/// `exp(½ Σ_j σ_j² f_j(d)²) · Σ_j f_j(d)²` for independent `N(0, σ_j²)` priors.
pub fn phi_closed_poisson(spec: &RegressionSpec, sigma2: &[f64], d: &[f64]) -> Result<f64> {
    if sigma2.len() != spec.p() {
        return Err(FigError::input(format!(
            "expected {} prior variances, got {}",
            spec.p(),
            sigma2.len()
        )));
    }
    let f = spec.eval(d)?;
    let norm2: f64 = f.iter().map(|x| x * x).sum();
    let quad: f64 = f.iter().zip(sigma2).map(|(x, s)| s * x * x).sum();
    finite((0.5 * quad).exp() * norm2, "closed-form Poisson φ", d)
}

/// One-dimensional sweep of `φ`: `axis` varies over the grid while the
/// other coordinates stay at `base`.
#[derive(Debug, Clone, PartialEq)]
pub struct CurveGrid {
    pub lo: f64,
    pub hi: f64,
    pub step: f64,
}

impl CurveGrid {
    pub fn new(lo: f64, hi: f64, step: f64) -> Result<Self> {
        if !(lo.is_finite() && hi.is_finite() && lo <= hi && step > 0.0 && step.is_finite()) {
            return Err(FigError::input(format!(
                "grid needs lo <= hi and step > 0, got {lo}:{hi}:{step}"
            )));
        }
        Ok(Self { lo, hi, step })
    }

    pub fn len(&self) -> usize {
        ((self.hi - self.lo) / self.step + 1e-9).floor() as usize + 1
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn points(&self) -> Vec<f64> {
        (0..self.len())
            .map(|i| (self.lo + i as f64 * self.step).min(self.hi))
            .collect()
    }
}

/// `(d, φ(d))` rows in ascending `d`.
pub fn phi_curve(
    ev: &PhiEvaluator,
    grid: &CurveGrid,
    axis: usize,
    base: &[f64],
    exec: Execution,
) -> Result<Vec<(f64, f64)>> {
    let k = ev.model().k();
    if base.len() != k || axis >= k {
        return Err(FigError::input(format!(
            "curve slice needs a base point of length {k} and axis < {k}"
        )));
    }
    let xs = grid.points();
    let values = map_indexed(exec, xs.len(), |i| {
        let mut d = base.to_vec();
        d[axis] = xs[i];
        ev.phi(&d)
    });
    xs.into_iter()
        .zip(values)
        .map(|(x, v)| v.map(|v| (x, v)))
        .collect()
}

/// `%.{digits}g`-style formatting.
pub fn format_significant(v: f64, digits: usize) -> String {
    if v == 0.0 {
        return "0".to_string();
    }
    if !v.is_finite() {
        return v.to_string();
    }
    let digits = digits.max(1);
    let sci = format!("{:.*e}", digits - 1, v);
    let (mantissa, exp) = sci.split_once('e').expect("exponent present");
    let exp: i32 = exp.parse().expect("integer exponent");
    if exp < -5 || exp >= digits as i32 {
        let mantissa = trim_zeros(mantissa);
        format!("{mantissa}e{}{:02}", if exp < 0 { '-' } else { '+' }, exp.abs())
    } else {
        let decimals = (digits as i32 - 1 - exp).max(0) as usize;
        trim_zeros(&format!("{v:.decimals$}")).to_string()
    }
}

fn trim_zeros(s: &str) -> &str {
    if s.contains('.') {
        s.trim_end_matches('0').trim_end_matches('.')
    } else {
        s
    }
}

/// CSV text (`d,phi` header, LF endings, 12 significant digits).
pub fn curve_csv(rows: &[(f64, f64)]) -> String {
    let mut out = String::from("d,phi\n");
    for &(d, v) in rows {
        out.push_str(&format_significant(d, 12));
        out.push(',');
        out.push_str(&format_significant(v, 12));
        out.push('\n');
    }
    out
}
