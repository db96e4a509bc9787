//! Independent priors over the model parameters, Monte Carlo sampling, and
//! tensor-product Gauss rules for prior expectations.
//!
//! Uniform components use Gauss-Legendre nodes mapped onto the interval,
//! normal components use Gauss-Hermite nodes transformed to `m + σ√2·x`,
//! and point masses contribute a single node. Weights are normalized so each
//! rule is a probability measure and [`QuadratureRule::expect`] returns a
//! prior expectation directly.

use std::fmt::Write as _;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{FigError, Result};

/// Default cap on the number of tensor-product nodes.
pub const DEFAULT_NODE_CAP: usize = 10_000_000;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum PriorComponent {
    Normal { mean: f64, var: f64 },
    Uniform { lo: f64, hi: f64 },
    PointMass { value: f64 },
}

impl PriorComponent {
    pub fn validate(&self) -> Result<()> {
        match *self {
            PriorComponent::Normal { mean, var } if !(var > 0.0 && var.is_finite() && mean.is_finite()) => {
                Err(FigError::input(format!("normal prior needs var > 0, got {var}")))
            }
            PriorComponent::Uniform { lo, hi } if !(lo < hi && lo.is_finite() && hi.is_finite()) => {
                Err(FigError::input(format!("uniform prior needs lo < hi, got [{lo}, {hi}]")))
            }
            PriorComponent::PointMass { value } if !value.is_finite() => {
                Err(FigError::input("point mass must be finite"))
            }
            _ => Ok(()),
        }
    }

    /// Nodes and weights (summing to one) of the order-`order` rule.
    pub fn rule_1d(&self, order: usize) -> (Vec<f64>, Vec<f64>) {
        match *self {
            PriorComponent::Uniform { lo, hi } => {
                let (x, w) = gauss_legendre(order);
                let mid = 0.5 * (lo + hi);
                let half = 0.5 * (hi - lo);
                (
                    x.iter().map(|&t| mid + half * t).collect(),
                    w.iter().map(|&v| 0.5 * v).collect(),
                )
            }
            PriorComponent::Normal { mean, var } => {
                let (x, w) = gauss_hermite(order);
                let s = (2.0 * var).sqrt();
                let norm = std::f64::consts::PI.sqrt().recip();
                (
                    x.iter().map(|&t| mean + s * t).collect(),
                    w.iter().map(|&v| v * norm).collect(),
                )
            }
            PriorComponent::PointMass { value } => (vec![value], vec![1.0]),
        }
    }

    fn nodes_for(&self, order: usize) -> usize {
        match self {
            PriorComponent::PointMass { .. } => 1,
            _ => order,
        }
    }

    fn sample<R: Rng>(&self, rng: &mut R) -> f64 {
        match *self {
            PriorComponent::Normal { mean, var } => Normal::new(mean, var.sqrt())
                .expect("validated normal prior")
                .sample(rng),
            PriorComponent::Uniform { lo, hi } => rng.random_range(lo..hi),
            PriorComponent::PointMass { value } => value,
        }
    }
}

/// Inverse-gamma `IG(s1/2, s2/2)` prior on the response scale.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct InverseGammaPrior {
    pub s1: f64,
    pub s2: f64,
}

impl InverseGammaPrior {
    /// `E[1/γ]`, the mean of a `Gamma(s1/2, rate = s2/2)` variable.
    pub fn mean_precision(&self) -> f64 {
        self.s1 / self.s2
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PriorSpec {
    components: Vec<PriorComponent>,
    scale_prior: Option<InverseGammaPrior>,
}

impl PriorSpec {
    pub fn new(components: Vec<PriorComponent>) -> Result<Self> {
        if components.is_empty() {
            return Err(FigError::input("prior needs at least one component"));
        }
        for c in &components {
            c.validate()?;
        }
        Ok(Self {
            components,
            scale_prior: None,
        })
    }

    pub fn with_scale_prior(mut self, scale_prior: InverseGammaPrior) -> Result<Self> {
        if !(scale_prior.s1 > 0.0 && scale_prior.s2 > 0.0) {
            return Err(FigError::input("scale prior hyperparameters must be positive"));
        }
        self.scale_prior = Some(scale_prior);
        Ok(self)
    }

    pub fn components(&self) -> &[PriorComponent] {
        &self.components
    }

    pub fn scale_prior(&self) -> Option<InverseGammaPrior> {
        self.scale_prior
    }

    pub fn p(&self) -> usize {
        self.components.len()
    }

    /// Independent normal components with zero mean, returning their
    /// variances, or `None` if any component is of another kind.
    pub fn centered_normal_variances(&self) -> Option<Vec<f64>> {
        self.components
            .iter()
            .map(|c| match *c {
                PriorComponent::Normal { mean: 0.0, var } => Some(var),
                _ => None,
            })
            .collect()
    }

    /// `count` independent draws of θ; deterministic in `seed`.
    pub fn sample(&self, count: usize, seed: u64) -> Vec<Vec<f64>> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..count).map(|_| self.sample_with(&mut rng)).collect()
    }

    pub fn sample_with<R: Rng>(&self, rng: &mut R) -> Vec<f64> {
        self.components.iter().map(|c| c.sample(rng)).collect()
    }

    pub fn quadrature_rule(&self, order: usize) -> Result<QuadratureRule> {
        self.quadrature_rule_capped(order, DEFAULT_NODE_CAP)
    }

    pub fn quadrature_rule_capped(&self, order: usize, cap: usize) -> Result<QuadratureRule> {
        if order == 0 {
            return Err(FigError::input("quadrature order must be at least 1"));
        }
        let requested = self
            .components
            .iter()
            .map(|c| c.nodes_for(order) as u128)
            .product::<u128>();
        if requested > cap as u128 {
            return Err(FigError::Capacity {
                what: "quadrature rule",
                requested,
                cap,
            });
        }
        let factors: Vec<_> = self.components.iter().map(|c| c.rule_1d(order)).collect();
        let p = factors.len();
        let count = requested as usize;
        let mut nodes = Vec::with_capacity(count * p);
        let mut weights = Vec::with_capacity(count);
        let mut index = vec![0usize; p];
        for _ in 0..count {
            let mut w = 1.0;
            for (j, (x, wx)) in factors.iter().enumerate() {
                nodes.push(x[index[j]]);
                w *= wx[index[j]];
            }
            weights.push(w);
            // odometer, last component fastest
            for j in (0..p).rev() {
                index[j] += 1;
                if index[j] < factors[j].0.len() {
                    break;
                }
                index[j] = 0;
            }
        }
        let total: f64 = weights.iter().sum();
        weights.iter_mut().for_each(|w| *w /= total);
        Ok(QuadratureRule {
            p,
            nodes,
            weights,
            factors,
            total,
        })
    }
}

/// Tensor-product rule with nodes stored row-major (`p` values per node).
#[derive(Debug, Clone, PartialEq)]
pub struct QuadratureRule {
    p: usize,
    nodes: Vec<f64>,
    weights: Vec<f64>,
    /// One-dimensional factors of the tensor product.
    factors: Vec<(Vec<f64>, Vec<f64>)>,
    /// Sum of the unnormalized product weights.
    total: f64,
}

impl QuadratureRule {
    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.p
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn node(&self, c: usize) -> &[f64] {
        &self.nodes[c * self.p..(c + 1) * self.p]
    }

    pub fn iter(&self) -> impl Iterator<Item = (&[f64], f64)> + '_ {
        self.nodes
            .chunks_exact(self.p)
            .zip(self.weights.iter().copied())
    }

    /// `Σ_c ω_c g(t_c)`; fails on the first non-finite `g(t_c)`.
    pub fn expect<F>(&self, mut g: F) -> Result<f64>
    where
        F: FnMut(&[f64]) -> f64,
    {
        let mut acc = 0.0;
        for (t, w) in self.iter() {
            let v = g(t);
            if !v.is_finite() {
                return Err(FigError::NonFinite {
                    what: "integrand at quadrature node",
                    point: t.to_vec(),
                });
            }
            acc += w * v;
        }
        Ok(acc)
    }

    /// `E[h(cᵀθ)]` for a linear form `cᵀθ`, walking the tensor product so
    /// only the last dimension is visited per node. Agrees with
    /// [`expect`](Self::expect) up to summation order.
    pub fn expect_linear_form<H>(&self, coeffs: &[f64], h: H) -> Result<f64>
    where
        H: Fn(f64) -> f64,
    {
        if coeffs.len() != self.p {
            return Err(FigError::input(format!(
                "linear form has {} coefficients, rule has dimension {}",
                coeffs.len(),
                self.p
            )));
        }
        let (last, outer) = self.factors.split_last().expect("p >= 1");
        let mut partial: Vec<(f64, f64)> = vec![(0.0, 1.0)];
        for ((x, w), &c) in outer.iter().zip(coeffs) {
            let mut next = Vec::with_capacity(partial.len() * x.len());
            for &(s, v) in &partial {
                for (&xi, &wi) in x.iter().zip(w) {
                    next.push((s + c * xi, v * wi));
                }
            }
            partial = next;
        }
        let c_last = coeffs[self.p - 1];
        let shifted: Vec<f64> = last.0.iter().map(|&x| c_last * x).collect();
        let mut acc = 0.0;
        for &(s, v) in &partial {
            let mut inner = 0.0;
            for (&t, &w) in shifted.iter().zip(&last.1) {
                inner += w * h(s + t);
            }
            acc += v * inner;
        }
        let value = acc / self.total;
        if value.is_finite() {
            Ok(value)
        } else {
            Err(FigError::NonFinite {
                what: "expectation of linear form",
                point: coeffs.to_vec(),
            })
        }
    }

    /// `E[g(exp(cᵀθ))]`, using `exp(cᵀθ) = Π_j exp(c_j θ_j)` so the
    /// exponentials come from per-dimension tables. Returns `None` when
    /// `|cᵀθ|` could exceed 600 at some node; callers then fall back to
    /// [`expect_linear_form`](Self::expect_linear_form).
    pub fn expect_exp_linear_form<G>(&self, coeffs: &[f64], g: G) -> Result<Option<f64>>
    where
        G: Fn(f64) -> f64,
    {
        if coeffs.len() != self.p {
            return Err(FigError::input(format!(
                "linear form has {} coefficients, rule has dimension {}",
                coeffs.len(),
                self.p
            )));
        }
        let bound: f64 = self
            .factors
            .iter()
            .zip(coeffs)
            .map(|((x, _), c)| x.iter().map(|v| (c * v).abs()).fold(0.0, f64::max))
            .sum();
        if !(bound <= 600.0) {
            return Ok(None);
        }
        let (last, outer) = self.factors.split_last().expect("p >= 1");
        let mut partial: Vec<(f64, f64)> = vec![(1.0, 1.0)];
        for ((x, w), &c) in outer.iter().zip(coeffs) {
            let table: Vec<f64> = x.iter().map(|&xi| (c * xi).exp()).collect();
            let mut next = Vec::with_capacity(partial.len() * x.len());
            for &(e, v) in &partial {
                for (&ti, &wi) in table.iter().zip(w) {
                    next.push((e * ti, v * wi));
                }
            }
            partial = next;
        }
        let c_last = coeffs[self.p - 1];
        let table: Vec<f64> = last.0.iter().map(|&x| (c_last * x).exp()).collect();
        let mut acc = 0.0;
        for &(e, v) in &partial {
            let mut inner = 0.0;
            for (&t, &w) in table.iter().zip(&last.1) {
                inner += w * g(e * t);
            }
            acc += v * inner;
        }
        let value = acc / self.total;
        if value.is_finite() {
            Ok(Some(value))
        } else {
            Err(FigError::NonFinite {
                what: "expectation of exponential linear form",
                point: coeffs.to_vec(),
            })
        }
    }

    /// CSV dump: columns `theta1..thetap,weight`.
    pub fn to_csv(&self) -> String {
        let mut out = String::new();
        for j in 1..=self.p {
            let _ = write!(out, "theta{j},");
        }
        out.push_str("weight\n");
        for (t, w) in self.iter() {
            for v in t {
                let _ = write!(out, "{v:.17e},");
            }
            let _ = writeln!(out, "{w:.17e}");
        }
        out
    }
}

/// Gauss-Legendre nodes and weights on `[-1, 1]` (weights sum to 2).
pub fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    assert!(n >= 1, "order must be positive");
    let mut x = vec![0.0; n];
    let mut w = vec![0.0; n];
    let m = n.div_ceil(2);
    let nf = n as f64;
    for i in 0..m {
        // Tricomi initial guess, then Newton on P_n
        let mut z = (std::f64::consts::PI * (i as f64 + 0.75) / (nf + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (p, d) = legendre_with_derivative(n, z);
            dp = d;
            let dz = p / d;
            z -= dz;
            if dz.abs() <= 1e-16 {
                break;
            }
        }
        let (_, d) = legendre_with_derivative(n, z);
        dp = if d != 0.0 { d } else { dp };
        let weight = 2.0 / ((1.0 - z * z) * dp * dp);
        x[i] = -z;
        x[n - 1 - i] = z;
        w[i] = weight;
        w[n - 1 - i] = weight;
    }
    if n % 2 == 1 {
        x[n / 2] = 0.0;
    }
    (x, w)
}

fn legendre_with_derivative(n: usize, z: f64) -> (f64, f64) {
    let mut p0 = 1.0;
    let mut p1 = z;
    for j in 2..=n {
        let jf = j as f64;
        let p2 = ((2.0 * jf - 1.0) * z * p1 - (jf - 1.0) * p0) / jf;
        p0 = p1;
        p1 = p2;
    }
    if n == 0 {
        return (1.0, 0.0);
    }
    let d = n as f64 * (z * p1 - p0) / (z * z - 1.0);
    (p1, d)
}

/// Physicists' Gauss-Hermite nodes and weights for the weight `exp(-x²)`
/// (weights sum to `√π`).
pub fn gauss_hermite(n: usize) -> (Vec<f64>, Vec<f64>) {
    assert!(n >= 1, "order must be positive");
    // Golub-Welsch eigenvalues give the starting points; Newton on the
    // orthonormal recurrence polishes nodes and yields the weights.
    let jacobi = nalgebra::DMatrix::from_fn(n, n, |i, j| {
        if i + 1 == j || j + 1 == i {
            (i.max(j) as f64 / 2.0).sqrt()
        } else {
            0.0
        }
    });
    let mut guesses: Vec<f64> = jacobi.symmetric_eigenvalues().iter().copied().collect();
    guesses.sort_by(f64::total_cmp);

    let mut x = vec![0.0; n];
    let mut w = vec![0.0; n];
    for (i, &g) in guesses.iter().enumerate() {
        let mut z = g;
        for _ in 0..50 {
            let (p, dp) = hermite_orthonormal(n, z);
            let dz = p / dp;
            z -= dz;
            if dz.abs() <= 1e-15 * z.abs().max(1.0) {
                break;
            }
        }
        let (_, dp) = hermite_orthonormal(n, z);
        x[i] = z;
        w[i] = 2.0 / (dp * dp);
    }
    // enforce exact symmetry
    for i in 0..n / 2 {
        let a = 0.5 * (x[n - 1 - i] - x[i]);
        let b = 0.5 * (w[i] + w[n - 1 - i]);
        x[i] = -a;
        x[n - 1 - i] = a;
        w[i] = b;
        w[n - 1 - i] = b;
    }
    if n % 2 == 1 {
        x[n / 2] = 0.0;
    }
    (x, w)
}

/// Orthonormal Hermite function value and derivative, as in the classic
/// `gauher` recurrence.
fn hermite_orthonormal(n: usize, z: f64) -> (f64, f64) {
    let pim4 = std::f64::consts::PI.powf(-0.25);
    let mut p1 = pim4;
    let mut p2 = 0.0;
    for j in 1..=n {
        let p3 = p2;
        p2 = p1;
        let jf = j as f64;
        p1 = z * (2.0 / jf).sqrt() * p2 - ((jf - 1.0) / jf).sqrt() * p3;
    }
    let dp = (2.0 * n as f64).sqrt() * p2;
    (p1, dp)
}

/// Draws θ vectors from independent priors (Monte Carlo oracle support).
pub fn sample_prior(prior: &PriorSpec, count: usize, seed: u64) -> Vec<Vec<f64>> {
    prior.sample(count, seed)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use rand::Rng;

    fn uniform(lo: f64, hi: f64) -> PriorComponent {
        PriorComponent::Uniform { lo, hi }
    }

    #[test]
    fn legendre_two_point() {
        let prior = PriorSpec::new(vec![uniform(-1.0, 1.0)]).unwrap();
        let rule = prior.quadrature_rule(2).unwrap();
        let r = 1.0 / 3f64.sqrt();
        assert_relative_eq!(rule.node(0)[0], -r, epsilon = 1e-15);
        assert_relative_eq!(rule.node(1)[0], r, epsilon = 1e-15);
        assert_relative_eq!(rule.weights()[0], 0.5, epsilon = 1e-15);
        assert_relative_eq!(rule.weights()[1], 0.5, epsilon = 1e-15);
    }

    #[test]
    fn point_mass_collapses_to_one_node() {
        let prior = PriorSpec::new(vec![
            PriorComponent::PointMass { value: 21.8 },
            PriorComponent::PointMass { value: -1.0 },
        ])
        .unwrap();
        for order in [1, 5, 9] {
            let rule = prior.quadrature_rule(order).unwrap();
            assert_eq!(rule.len(), 1);
            assert_eq!(rule.weights(), &[1.0]);
            assert_eq!(rule.node(0), &[21.8, -1.0]);
        }
    }

    #[test]
    fn tensor_size_and_normalization() {
        let prior = PriorSpec::new(vec![
            uniform(0.0, 3.0),
            PriorComponent::Normal { mean: 1.0, var: 4.0 },
        ])
        .unwrap();
        let rule = prior.quadrature_rule(7).unwrap();
        assert_eq!(rule.len(), 49);
        assert!((rule.weights().iter().sum::<f64>() - 1.0).abs() <= 1e-12);
        assert!(rule.weights().iter().all(|&w| w > 0.0));
    }

    #[test]
    fn capacity_is_enforced() {
        let prior = PriorSpec::new(vec![uniform(0.0, 1.0); 8]).unwrap();
        let err = prior.quadrature_rule_capped(10, 1_000_000).unwrap_err();
        assert!(matches!(err, FigError::Capacity { requested: 100_000_000, .. }));
        assert!(prior.quadrature_rule(0).is_err());
    }

    #[test]
    fn reference_moments() {
        let u = PriorSpec::new(vec![uniform(-1.0, 1.0)]).unwrap();
        for order in 2..=6 {
            let rule = u.quadrature_rule(order).unwrap();
            assert!((rule.expect(|_| 1.0).unwrap() - 1.0).abs() <= 1e-14);
            assert!((rule.expect(|t| t[0] * t[0]).unwrap() - 1.0 / 3.0).abs() <= 1e-14);
        }
        let n = PriorSpec::new(vec![PriorComponent::Normal { mean: 0.0, var: 2.5 }]).unwrap();
        for order in 2..=8 {
            let rule = n.quadrature_rule(order).unwrap();
            assert_relative_eq!(rule.expect(|t| t[0] * t[0]).unwrap(), 2.5, max_relative = 1e-13);
        }
    }

    #[test]
    fn expect_reports_offending_node() {
        let u = PriorSpec::new(vec![uniform(-1.0, 1.0)]).unwrap();
        let rule = u.quadrature_rule(3).unwrap();
        let err = rule.expect(|t| if t[0] == 0.0 { f64::NAN } else { 1.0 }).unwrap_err();
        assert_eq!(
            err,
            FigError::NonFinite {
                what: "integrand at quadrature node",
                point: vec![0.0]
            }
        );
    }

    fn binomial(n: u32, k: u32) -> f64 {
        (0..k).fold(1.0, |acc, i| acc * f64::from(n - i) / f64::from(i + 1))
    }

    /// E[X^m] for X ~ N(mu, s2), by the binomial expansion over central moments.
    fn normal_raw_moment(mu: f64, s2: f64, m: u32) -> f64 {
        (0..=m)
            .filter(|i| i % 2 == 0)
            .map(|i| {
                let double_fact: f64 = (1..i).step_by(2).map(f64::from).product();
                binomial(m, i) * mu.powi((m - i) as i32) * s2.powi(i as i32 / 2) * double_fact
            })
            .sum()
    }

    #[test]
    fn legendre_exactness() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for order in 1..=10 {
            let deg = 2 * order - 1;
            let (lo, hi) = (rng.random_range(-3.0..0.0), rng.random_range(0.5..4.0));
            let coeffs: Vec<f64> = (0..=deg).map(|_| rng.random_range(-1.0..1.0)).collect();
            let rule = PriorSpec::new(vec![uniform(lo, hi)])
                .unwrap()
                .quadrature_rule(order)
                .unwrap();
            let got = rule
                .expect(|t| coeffs.iter().rev().fold(0.0, |acc, c| acc * t[0] + c))
                .unwrap();
            let exact: f64 = coeffs
                .iter()
                .enumerate()
                .map(|(i, c)| {
                    let e = i as i32 + 1;
                    c * (hi.powi(e) - lo.powi(e)) / f64::from(e)
                })
                .sum::<f64>()
                / (hi - lo);
            let scale: f64 = coeffs
                .iter()
                .enumerate()
                .map(|(i, c)| c.abs() * lo.abs().max(hi.abs()).powi(i as i32))
                .sum();
            assert!(
                (got - exact).abs() <= 1e-12 * scale,
                "order {order}: {got} vs {exact}"
            );
        }
    }

    #[test]
    fn hermite_exactness() {
        for order in 1..=10u32 {
            for (mu, s2) in [(0.0, 1.0), (0.7, 0.3), (-1.2, 2.0)] {
                let rule = PriorSpec::new(vec![PriorComponent::Normal { mean: mu, var: s2 }])
                    .unwrap()
                    .quadrature_rule(order as usize)
                    .unwrap();
                for m in 0..=(2 * order - 1) {
                    let got = rule.expect(|t| t[0].powi(m as i32)).unwrap();
                    let exact = normal_raw_moment(mu, s2, m);
                    // relative to the L2 size of X^m, since odd moments may vanish
                    let scale = normal_raw_moment(mu, s2, 2 * m).sqrt();
                    assert!(
                        (got - exact).abs() <= 1e-11 * scale,
                        "order {order} moment {m}: {got} vs {exact}"
                    );
                }
            }
        }
    }

    #[test]
    fn sampling_is_deterministic_and_respects_point_masses() {
        let prior = PriorSpec::new(vec![
            PriorComponent::PointMass { value: 21.8 },
            uniform(-3.0, 3.0),
            PriorComponent::Normal { mean: 1.0, var: 0.5 },
        ])
        .unwrap();
        let a = sample_prior(&prior, 100, 42);
        let b = sample_prior(&prior, 100, 42);
        assert_eq!(a, b);
        assert!(a.iter().all(|t| t[0] == 21.8 && (-3.0..3.0).contains(&t[1])));
    }

    #[test]
    fn uniform_sample_mean_within_clt_bound() {
        let prior = PriorSpec::new(vec![uniform(-3.0, 3.0)]).unwrap();
        let draws = sample_prior(&prior, 1_000_000, 7);
        let mean = draws.iter().map(|t| t[0]).sum::<f64>() / draws.len() as f64;
        assert!(mean.abs() <= 3.0 * (6.0 / 12f64.sqrt()) / 1e3);
    }

    #[test]
    fn quadrature_agrees_with_monte_carlo() {
        let prior = PriorSpec::new(vec![
            uniform(-1.0, 2.0),
            PriorComponent::Normal { mean: 0.5, var: 0.8 },
        ])
        .unwrap();
        let g = |t: &[f64]| (t[0] * t[1]).sin() + (0.3 * t[0]).cos() / (1.0 + t[1] * t[1]);
        let rule = prior.quadrature_rule(16).unwrap();
        let quad = rule.expect(g).unwrap();
        let draws = sample_prior(&prior, 1_000_000, 9);
        let vals: Vec<f64> = draws.iter().map(|t| g(t)).collect();
        let n = vals.len() as f64;
        let mean = vals.iter().sum::<f64>() / n;
        let var = vals.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
        assert!((quad - mean).abs() <= 4.0 * (var / n).sqrt());
    }

    #[test]
    fn linear_form_matches_flat_sum() {
        let prior = PriorSpec::new(vec![
            uniform(-3.0, 3.0),
            PriorComponent::PointMass { value: 0.4 },
            PriorComponent::Normal { mean: 1.0, var: 0.3 },
            uniform(4.0, 10.0),
        ])
        .unwrap();
        let rule = prior.quadrature_rule(5).unwrap();
        let c = [1.0, -0.7, 0.25, 0.6];
        let h = |e: f64| (-e.abs()).exp() / (1.0 + (-e.abs()).exp()).powi(2);
        let flat = rule
            .expect(|t| h(t.iter().zip(&c).map(|(a, b)| a * b).sum()))
            .unwrap();
        let fast = rule.expect_linear_form(&c, h).unwrap();
        assert_relative_eq!(flat, fast, max_relative = 1e-13);
        assert!(rule.expect_linear_form(&c[..2], h).is_err());

        let via_exp = rule
            .expect_exp_linear_form(&c, |e| e / ((1.0 + e) * (1.0 + e)))
            .unwrap()
            .unwrap();
        assert_relative_eq!(flat, via_exp, max_relative = 1e-12);
        let huge = [1.0, 0.0, 0.0, 100.0];
        assert_eq!(rule.expect_exp_linear_form(&huge, |e| e).unwrap(), None);
    }

    #[test]
    fn csv_dump_has_header_and_rows() {
        let prior = PriorSpec::new(vec![uniform(0.0, 1.0), uniform(0.0, 1.0)]).unwrap();
        let csv = prior.quadrature_rule(2).unwrap().to_csv();
        let lines: Vec<_> = csv.lines().collect();
        assert_eq!(lines[0], "theta1,theta2,weight");
        assert_eq!(lines.len(), 5);
    }
}
