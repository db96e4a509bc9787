//! Exponential-family response models: mean functions, their parameter
//! gradients, response variances, the Jacobian `M` and the Fisher
//! information `MᵀWM`.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{FigError, Result};

/// Box-shaped design region `[a_1, b_1] × … × [a_k, b_k]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DesignSpace {
    bounds: Vec<(f64, f64)>,
}

impl DesignSpace {
    pub fn new(bounds: Vec<(f64, f64)>) -> Result<Self> {
        if bounds.is_empty() {
            return Err(FigError::input("design space needs at least one variable"));
        }
        for (r, &(a, b)) in bounds.iter().enumerate() {
            if !(a.is_finite() && b.is_finite() && a < b) {
                return Err(FigError::input(format!(
                    "bound {r} must satisfy a < b with finite ends, got [{a}, {b}]"
                )));
            }
        }
        Ok(Self { bounds })
    }

    /// `[-1, 1]^k`.
    pub fn symmetric_unit(k: usize) -> Result<Self> {
        Self::new(vec![(-1.0, 1.0); k])
    }

    pub fn k(&self) -> usize {
        self.bounds.len()
    }

    pub fn bounds(&self) -> &[(f64, f64)] {
        &self.bounds
    }

    pub fn lower(&self, r: usize) -> f64 {
        self.bounds[r].0
    }

    pub fn upper(&self, r: usize) -> f64 {
        self.bounds[r].1
    }

    pub fn width(&self, r: usize) -> f64 {
        self.bounds[r].1 - self.bounds[r].0
    }

    pub fn contains(&self, d: &[f64]) -> bool {
        d.len() == self.k()
            && d
                .iter()
                .zip(&self.bounds)
                .all(|(&x, &(a, b))| x >= a && x <= b)
    }

    /// Euclidean projection onto the box.
    pub fn project(&self, d: &mut [f64]) {
        for (x, &(a, b)) in d.iter_mut().zip(&self.bounds) {
            *x = x.clamp(a, b);
        }
    }

    /// Euclidean distance after dividing each coordinate by its bound width.
    pub fn scaled_distance(&self, x: &[f64], y: &[f64]) -> f64 {
        x.iter()
            .zip(y)
            .zip(&self.bounds)
            .map(|((&u, &v), &(a, b))| {
                let t = (u - v) / (b - a);
                t * t
            })
            .sum::<f64>()
            .sqrt()
    }

    pub fn check_point(&self, d: &[f64]) -> Result<()> {
        if d.len() != self.k() {
            return Err(FigError::input(format!(
                "point has {} coordinates, design space has {}",
                d.len(),
                self.k()
            )));
        }
        Ok(())
    }
}

/// An ordered list of `n` runs, each a control point of dimension `k`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Design {
    points: Vec<Vec<f64>>,
}

impl Design {
    pub fn new(points: Vec<Vec<f64>>) -> Result<Self> {
        let Some(first) = points.first() else {
            return Err(FigError::input("a design needs at least one run"));
        };
        let k = first.len();
        if k == 0 || points.iter().any(|p| p.len() != k) {
            return Err(FigError::input(
                "all design points must share the same non-zero dimension",
            ));
        }
        Ok(Self { points })
    }

    /// `n` copies of the same point.
    pub fn replicate(point: &[f64], n: usize) -> Result<Self> {
        Self::new(vec![point.to_vec(); n])
    }

    pub fn n(&self) -> usize {
        self.points.len()
    }

    pub fn k(&self) -> usize {
        self.points[0].len()
    }

    pub fn points(&self) -> &[Vec<f64>] {
        &self.points
    }
}

/// Monomial regression function `f_j(d) = Π_r d_r^{u_rj}`, stored as the
/// `k × p` exponent matrix (one row per controllable variable).
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RegressionSpec {
    exponents: Vec<Vec<u32>>,
}

impl RegressionSpec {
    pub fn new(exponents: Vec<Vec<u32>>) -> Result<Self> {
        let k = exponents.len();
        if k == 0 {
            return Err(FigError::input("exponent matrix needs at least one row"));
        }
        let p = exponents[0].len();
        if p == 0 {
            return Err(FigError::input("exponent matrix needs at least one column"));
        }
        if exponents.iter().any(|row| row.len() != p) {
            return Err(FigError::input("exponent matrix rows differ in length"));
        }
        let column = |j: usize| exponents.iter().map(|row| row[j]).collect::<Vec<_>>();
        for j1 in 0..p {
            for j2 in (j1 + 1)..p {
                if column(j1) == column(j2) {
                    return Err(FigError::input(format!(
                        "exponent columns {j1} and {j2} are identical"
                    )));
                }
            }
        }
        Ok(Self { exponents })
    }

    /// Intercept only, in `k` variables.
    pub fn intercept_only(k: usize) -> Result<Self> {
        Self::new(vec![vec![0]; k])
    }

    /// `(1, d_1, …, d_k)`.
    pub fn first_order(k: usize) -> Result<Self> {
        let rows = (0..k)
            .map(|r| (0..=k).map(|j| u32::from(j == r + 1)).collect())
            .collect();
        Self::new(rows)
    }

    /// Intercept, main effects, squares and all two-way interactions.
    pub fn full_second_order(k: usize) -> Result<Self> {
        let mut columns: Vec<Vec<u32>> = vec![vec![0; k]];
        for r in 0..k {
            let mut c = vec![0; k];
            c[r] = 1;
            columns.push(c);
        }
        for r in 0..k {
            let mut c = vec![0; k];
            c[r] = 2;
            columns.push(c);
        }
        for r1 in 0..k {
            for r2 in (r1 + 1)..k {
                let mut c = vec![0; k];
                c[r1] = 1;
                c[r2] = 1;
                columns.push(c);
            }
        }
        Self::from_columns(&columns)
    }

    /// The two-variable second-order response surface
    /// `(1, d1, d2, d1², d2², d1·d2)`.
    pub fn rsm2() -> Self {
        Self::new(vec![vec![0, 1, 0, 2, 0, 1], vec![0, 0, 1, 0, 2, 1]])
            .expect("rsm2 exponents are valid")
    }

    fn from_columns(columns: &[Vec<u32>]) -> Result<Self> {
        let k = columns.first().map_or(0, Vec::len);
        let rows = (0..k)
            .map(|r| columns.iter().map(|c| c[r]).collect())
            .collect();
        Self::new(rows)
    }

    pub fn k(&self) -> usize {
        self.exponents.len()
    }

    pub fn p(&self) -> usize {
        self.exponents[0].len()
    }

    pub fn exponents(&self) -> &[Vec<u32>] {
        &self.exponents
    }

    pub fn exponent(&self, r: usize, j: usize) -> u32 {
        self.exponents[r][j]
    }

    pub fn eval(&self, d: &[f64]) -> Result<Vec<f64>> {
        let mut out = vec![0.0; self.p()];
        self.eval_into(d, &mut out)?;
        Ok(out)
    }

    /// Writes `f(d)` into `out`; `0⁰` is taken as 1.
    pub fn eval_into(&self, d: &[f64], out: &mut [f64]) -> Result<()> {
        if d.len() != self.k() {
            return Err(FigError::input(format!(
                "regression function expects {} variables, got {}",
                self.k(),
                d.len()
            )));
        }
        debug_assert_eq!(out.len(), self.p());
        out.fill(1.0);
        for (row, &x) in self.exponents.iter().zip(d) {
            for (o, &u) in out.iter_mut().zip(row) {
                if u > 0 {
                    *o *= x.powi(u as i32);
                }
            }
        }
        Ok(())
    }
}

/// How the response scale `γ` is treated.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum ScaleSpec {
    Known { gamma: f64 },
    OfInterest,
    NuisanceIg { s1: f64, s2: f64 },
}

impl ScaleSpec {
    pub fn validate(&self) -> Result<()> {
        match *self {
            ScaleSpec::Known { gamma } if !(gamma > 0.0 && gamma.is_finite()) => {
                Err(FigError::input(format!("known scale must be positive, got {gamma}")))
            }
            ScaleSpec::NuisanceIg { s1, s2 }
                if !(s1 > 0.0 && s2 > 0.0 && s1.is_finite() && s2.is_finite()) =>
            {
                Err(FigError::input(format!(
                    "inverse-gamma hyperparameters must be positive, got s1={s1}, s2={s2}"
                )))
            }
            _ => Ok(()),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Family {
    NormalLinear {
        regression: RegressionSpec,
        scale: ScaleSpec,
    },
    Poisson {
        regression: RegressionSpec,
    },
    Logistic {
        regression: RegressionSpec,
    },
    /// `θ₃(exp(−θ₁d) − exp(−θ₂d))` with normal errors, `θ₂ > θ₁`.
    CompartmentalNormal {
        scale: ScaleSpec,
    },
}

/// A response family together with its mean function.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelSpec {
    family: Family,
}

impl ModelSpec {
    pub fn new(family: Family) -> Result<Self> {
        match &family {
            Family::NormalLinear { scale, .. } | Family::CompartmentalNormal { scale } => {
                scale.validate()?
            }
            Family::Poisson { .. } | Family::Logistic { .. } => {}
        }
        Ok(Self { family })
    }

    pub fn normal_linear(regression: RegressionSpec, scale: ScaleSpec) -> Result<Self> {
        Self::new(Family::NormalLinear { regression, scale })
    }

    pub fn poisson(regression: RegressionSpec) -> Self {
        Self { family: Family::Poisson { regression } }
    }

    pub fn logistic(regression: RegressionSpec) -> Self {
        Self { family: Family::Logistic { regression } }
    }

    pub fn compartmental(scale: ScaleSpec) -> Result<Self> {
        Self::new(Family::CompartmentalNormal { scale })
    }

    pub fn family(&self) -> &Family {
        &self.family
    }

    pub fn regression(&self) -> Option<&RegressionSpec> {
        match &self.family {
            Family::NormalLinear { regression, .. }
            | Family::Poisson { regression }
            | Family::Logistic { regression } => Some(regression),
            Family::CompartmentalNormal { .. } => None,
        }
    }

    pub fn scale(&self) -> ScaleSpec {
        match &self.family {
            Family::NormalLinear { scale, .. } | Family::CompartmentalNormal { scale } => *scale,
            Family::Poisson { .. } | Family::Logistic { .. } => ScaleSpec::Known { gamma: 1.0 },
        }
    }

    pub fn p(&self) -> usize {
        match &self.family {
            Family::CompartmentalNormal { .. } => 3,
            _ => self.regression().map_or(0, RegressionSpec::p),
        }
    }

    pub fn k(&self) -> usize {
        match &self.family {
            Family::CompartmentalNormal { .. } => 1,
            _ => self.regression().map_or(0, RegressionSpec::k),
        }
    }

    /// True for families whose response is normal with variance `γ`.
    pub fn is_normal(&self) -> bool {
        matches!(
            self.family,
            Family::NormalLinear { .. } | Family::CompartmentalNormal { .. }
        )
    }

    fn check_theta(&self, theta: &[f64]) -> Result<()> {
        if theta.len() != self.p() {
            return Err(FigError::input(format!(
                "θ has length {}, model has p = {}",
                theta.len(),
                self.p()
            )));
        }
        if let Family::CompartmentalNormal { .. } = self.family {
            if !(theta[1] > theta[0]) {
                return Err(FigError::domain(format!(
                    "compartmental model needs θ₂ > θ₁, got θ₁={}, θ₂={}",
                    theta[0], theta[1]
                )));
            }
        }
        Ok(())
    }

    fn check_d(&self, d: &[f64]) -> Result<()> {
        if d.len() != self.k() {
            return Err(FigError::input(format!(
                "control point has {} coordinates, model has k = {}",
                d.len(),
                self.k()
            )));
        }
        Ok(())
    }

    fn linear_predictor(regression: &RegressionSpec, theta: &[f64], d: &[f64]) -> Result<(f64, Vec<f64>)> {
        let f = regression.eval(d)?;
        let eta = f.iter().zip(theta).map(|(a, b)| a * b).sum();
        Ok((eta, f))
    }

    pub fn mean(&self, theta: &[f64], d: &[f64]) -> Result<f64> {
        self.check_theta(theta)?;
        self.check_d(d)?;
        Ok(match &self.family {
            Family::NormalLinear { regression, .. } => {
                Self::linear_predictor(regression, theta, d)?.0
            }
            Family::Poisson { regression } => Self::linear_predictor(regression, theta, d)?.0.exp(),
            Family::Logistic { regression } => {
                logistic(Self::linear_predictor(regression, theta, d)?.0)
            }
            Family::CompartmentalNormal { .. } => {
                let t = d[0];
                theta[2] * ((-theta[0] * t).exp() - (-theta[1] * t).exp())
            }
        })
    }

    /// `∂μ(θ, d)/∂θ`.
    pub fn mean_gradient(&self, theta: &[f64], d: &[f64]) -> Result<Vec<f64>> {
        self.check_theta(theta)?;
        self.check_d(d)?;
        Ok(match &self.family {
            Family::NormalLinear { regression, .. } => regression.eval(d)?,
            Family::Poisson { regression } => {
                let (eta, f) = Self::linear_predictor(regression, theta, d)?;
                let mu = eta.exp();
                f.into_iter().map(|x| mu * x).collect()
            }
            Family::Logistic { regression } => {
                let (eta, f) = Self::linear_predictor(regression, theta, d)?;
                let w = logistic_variance(eta);
                f.into_iter().map(|x| w * x).collect()
            }
            Family::CompartmentalNormal { .. } => compartmental_gradient(theta, d[0]).to_vec(),
        })
    }

    /// `var(y | θ, d)`; `gamma` is the scale and must be 1 for the
    /// Poisson and logistic families.
    pub fn variance(&self, theta: &[f64], d: &[f64], gamma: f64) -> Result<f64> {
        if !(gamma > 0.0 && gamma.is_finite()) {
            return Err(FigError::input(format!("scale must be positive, got {gamma}")));
        }
        match &self.family {
            Family::NormalLinear { .. } | Family::CompartmentalNormal { .. } => {
                self.check_theta(theta)?;
                self.check_d(d)?;
                Ok(gamma)
            }
            Family::Poisson { .. } | Family::Logistic { .. } => {
                if gamma != 1.0 {
                    return Err(FigError::input(format!(
                        "Poisson and logistic models have scale 1, got {gamma}"
                    )));
                }
                let var = match &self.family {
                    Family::Poisson { .. } => self.mean(theta, d)?,
                    Family::Logistic { regression } => {
                        self.check_theta(theta)?;
                        logistic_variance(Self::linear_predictor(regression, theta, d)?.0)
                    }
                    _ => unreachable!(),
                };
                if !(var >= f64::MIN_POSITIVE) || !var.is_finite() {
                    return Err(FigError::DegenerateVariance {
                        variance: var,
                        point: d.to_vec(),
                    });
                }
                Ok(var)
            }
        }
    }

    /// The `n × p` Jacobian of the mean over the runs of a design.
    pub fn build_m(&self, theta: &[f64], design: &Design) -> Result<DMatrix<f64>> {
        let p = self.p();
        let mut m = DMatrix::zeros(design.n(), p);
        for (i, d) in design.points().iter().enumerate() {
            let g = self.mean_gradient(theta, d)?;
            for (j, v) in g.into_iter().enumerate() {
                m[(i, j)] = v;
            }
        }
        Ok(m)
    }

    /// `MᵀWM` with `W = diag(1 / var(y_i))` for a known scale `gamma`.
    pub fn fisher_information(
        &self,
        theta: &[f64],
        design: &Design,
        gamma: f64,
    ) -> Result<DMatrix<f64>> {
        let m = self.build_m(theta, design)?;
        let mut weighted = m.clone();
        for (i, d) in design.points().iter().enumerate() {
            let w = 1.0 / self.variance(theta, d, gamma)?;
            weighted.row_mut(i).scale_mut(w);
        }
        let info = m.transpose() * weighted;
        // symmetrize away rounding in the product
        Ok((&info + info.transpose()) * 0.5)
    }
}

pub(crate) fn logistic(eta: f64) -> f64 {
    if eta >= 0.0 {
        1.0 / (1.0 + (-eta).exp())
    } else {
        let e = eta.exp();
        e / (1.0 + e)
    }
}

/// `μ(1 − μ)` for `μ = logistic(η)`, stable for large `|η|`.
pub(crate) fn logistic_variance(eta: f64) -> f64 {
    let e = (-eta.abs()).exp();
    let s = 1.0 + e;
    e / (s * s)
}

pub(crate) fn compartmental_gradient(theta: &[f64], t: f64) -> [f64; 3] {
    let e1 = (-theta[0] * t).exp();
    let e2 = (-theta[1] * t).exp();
    [-theta[2] * t * e1, theta[2] * t * e2, e1 - e2]
}
