//! Turning the maxima of `φ` into designs, and checking those designs for
//! under-support (fewer distinct points than parameters) and parameter
//! redundancy (a rank-deficient Jacobian `M` at every sampled `θ`).

use nalgebra::DMatrix;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{FigError, Result};
use crate::model::{Design, DesignSpace, ModelSpec, RegressionSpec, ScaleSpec};
use crate::optimizer::{multistart, MaximaReport, OptimizerConfig};
use crate::par::{map_indexed, Execution};
use crate::phi::{nuisance_factor, PhiEvaluator};
use crate::prior::PriorSpec;

/// Default number of prior draws for the rank check.
pub const DEFAULT_DRAWS: usize = 100;
/// Default support-point tolerance, in width-scaled units.
pub const DEFAULT_SUPPORT_TOL: f64 = 1e-6;

const MAX_RESAMPLES: usize = 10_000;

/// `n` runs spread round-robin over the maxima tied for the best value,
/// in the report's (lexicographic) order.
pub fn assemble_design(report: &MaximaReport, n: usize) -> Result<Design> {
    if n == 0 {
        return Err(FigError::input("a design needs at least one run"));
    }
    let best: Vec<&[f64]> = report.global_maxima().map(|m| m.point.as_slice()).collect();
    if best.is_empty() {
        return Err(FigError::EmptyReport);
    }
    Design::new((0..n).map(|i| best[i % best.len()].to_vec()).collect())
}

/// Number of distinct points, merging points within `tol` in
/// width-scaled distance.
pub fn support_points(design: &Design, space: &DesignSpace, tol: f64) -> usize {
    let mut reps: Vec<&[f64]> = Vec::new();
    for d in design.points() {
        if !reps.iter().any(|r| space.scaled_distance(r, d) <= tol) {
            reps.push(d);
        }
    }
    reps.len()
}

/// Singular values of `m`, largest first.
pub fn singular_values(m: &DMatrix<f64>) -> Vec<f64> {
    if m.is_empty() {
        return Vec::new();
    }
    let mut sv: Vec<f64> = m.clone().svd(false, false).singular_values.iter().copied().collect();
    sv.sort_by(|a, b| b.total_cmp(a));
    sv
}

/// Count of singular values above `tol_factor · max(n, p) · σ_max · ε`.
pub fn numerical_rank(m: &DMatrix<f64>, tol_factor: f64) -> usize {
    let sv = singular_values(m);
    let Some(&largest) = sv.first() else {
        return 0;
    };
    if largest == 0.0 {
        return 0;
    }
    let (n, p) = m.shape();
    let threshold = tol_factor * n.max(p) as f64 * largest * f64::EPSILON;
    sv.iter().filter(|&&s| s > threshold).count()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ParityCondition {
    /// `u_{r,j1} = 0` and `u_{r,j2} > 1` even.
    ZeroAndEven,
    /// `u_{r,j1} = 1` and `u_{r,j2} > 1` odd.
    OneAndOdd,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ParityWitness {
    pub variable: usize,
    pub column_low: usize,
    pub column_high: usize,
    pub condition: ParityCondition,
}

/// Closed-form diagnosis for monomial models, whose optima put every
/// coordinate at `±max(|a_r|, |b_r|)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SymbolicDiagnosis {
    /// Variables with `|a_r| = |b_r|`.
    pub symmetric_variables: usize,
    /// `2^C`, the most support points any optimal design can have.
    pub support_bound: u64,
    pub exceeds_support_bound: bool,
    pub parity_witnesses: Vec<ParityWitness>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankDraw {
    pub theta: Vec<f64>,
    pub rank: usize,
    /// `det(I) ≤ 1e-10 · (tr I / p)^p` for the information matrix at this draw.
    pub singular_information: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RedundancyReport {
    pub q: usize,
    pub p: usize,
    pub n: usize,
    pub support_points: usize,
    pub under_supported: bool,
    pub redundant: bool,
    pub draws: usize,
    pub seed: u64,
    pub resampled: usize,
    pub deficient_draws: usize,
    pub singular_draws: usize,
    pub rank_draws: Vec<RankDraw>,
    pub symbolic: Option<SymbolicDiagnosis>,
    pub verdicts: Vec<String>,
    pub warnings: Vec<String>,
}

impl RedundancyReport {
    fn finish(mut self) -> Self {
        self.verdicts.clear();
        self.warnings.clear();
        if self.under_supported {
            self.verdicts
                .push(format!("UNDER-SUPPORTED: q={} < p={}", self.q, self.p));
        } else {
            self.verdicts
                .push(format!("supported: q={} >= p={}", self.q, self.p));
        }
        if self.draws > 0 {
            let max_rank = self.rank_draws.iter().map(|d| d.rank).max().unwrap_or(0);
            if self.deficient_draws == self.draws {
                self.verdicts.push(format!(
                    "rank(M)={max_rank} < p={} at {}/{} prior draws",
                    self.p, self.deficient_draws, self.draws
                ));
            } else {
                self.verdicts.push(format!(
                    "rank(M)=p={} at {}/{} prior draws",
                    self.p,
                    self.draws - self.deficient_draws,
                    self.draws
                ));
            }
        }
        if let Some(sym) = &self.symbolic {
            if sym.exceeds_support_bound {
                self.verdicts.push(format!(
                    "p={} > 2^C={}: every optimal design is under-supported",
                    self.p, sym.support_bound
                ));
            }
            for w in &sym.parity_witnesses {
                self.verdicts.push(format!(
                    "power-parity redundancy: variable {} columns ({}, {}) {:?}",
                    w.variable, w.column_low, w.column_high, w.condition
                ));
            }
        }
        if self.redundant {
            self.warnings.push(
                "parameter redundant: some parameter combinations are not identified; \
                 conditional on the rest, their posterior equals their prior"
                    .to_string(),
            );
        }
        self
    }
}

fn information_for(
    model: &ModelSpec,
    prior: &PriorSpec,
    theta: &[f64],
    design: &Design,
    m: &DMatrix<f64>,
) -> Result<DMatrix<f64>> {
    match model.scale() {
        ScaleSpec::Known { gamma } => model.fisher_information(theta, design, gamma),
        ScaleSpec::OfInterest => {
            let precision = prior.scale_prior().map_or(1.0, |s| s.mean_precision());
            Ok(m.transpose() * m * precision)
        }
        ScaleSpec::NuisanceIg { s1, s2 } => {
            Ok(m.transpose() * m * nuisance_factor(s1, s2, design.n()))
        }
    }
}

fn is_singular(info: &DMatrix<f64>) -> bool {
    let p = info.nrows();
    let trace = info.trace();
    if trace <= 0.0 {
        return true;
    }
    info.determinant() <= 1e-10 * (trace / p as f64).powi(p as i32)
}

/// Ranks of `M` over `draws` prior draws of θ. Draws the model rejects
/// (e.g. `θ₂ ≤ θ₁`) are redrawn and counted.
pub fn redundancy_check(
    model: &ModelSpec,
    prior: &PriorSpec,
    space: &DesignSpace,
    design: &Design,
    draws: usize,
    seed: u64,
    exec: Execution,
) -> Result<RedundancyReport> {
    if draws == 0 {
        return Err(FigError::input("redundancy check needs at least one draw"));
    }
    if prior.p() != model.p() {
        return Err(FigError::input("prior and model disagree on p"));
    }
    let probe = design.points()[0].as_slice();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut thetas = Vec::with_capacity(draws);
    let mut resampled = 0;
    while thetas.len() < draws {
        let theta = prior.sample_with(&mut rng);
        match model.mean(&theta, probe) {
            Ok(_) => thetas.push(theta),
            Err(FigError::Domain(_)) if resampled < MAX_RESAMPLES => resampled += 1,
            Err(e) => return Err(e),
        }
    }

    let rank_draws = map_indexed(exec, draws, |i| -> Result<RankDraw> {
        let theta = &thetas[i];
        let m = model.build_m(theta, design)?;
        let info = information_for(model, prior, theta, design, &m)?;
        Ok(RankDraw {
            theta: theta.clone(),
            rank: numerical_rank(&m, 1.0),
            singular_information: is_singular(&info),
        })
    })
    .into_iter()
    .collect::<Result<Vec<_>>>()?;

    let p = model.p();
    let deficient_draws = rank_draws.iter().filter(|d| d.rank < p).count();
    let singular_draws = rank_draws.iter().filter(|d| d.singular_information).count();
    let support = support_points(design, space, DEFAULT_SUPPORT_TOL);
    Ok(RedundancyReport {
        q: support,
        p,
        n: design.n(),
        support_points: support,
        under_supported: support < p,
        redundant: deficient_draws == draws,
        draws,
        seed,
        resampled,
        deficient_draws,
        singular_draws,
        rank_draws,
        symbolic: None,
        verdicts: Vec::new(),
        warnings: Vec::new(),
    }
    .finish())
}

/// Closed-form support bound `2^C` and power-parity conditions for a
/// monomial normal linear model.
pub fn symbolic_diagnosis(spec: &RegressionSpec, space: &DesignSpace) -> Result<SymbolicDiagnosis> {
    if spec.k() != space.k() {
        return Err(FigError::input("regression and design space disagree on k"));
    }
    let c = space
        .bounds()
        .iter()
        .filter(|&&(a, b)| (a.abs() - b.abs()).abs() <= 1e-12 * a.abs().max(b.abs()))
        .count();
    let support_bound = 1u64.checked_shl(c as u32).unwrap_or(u64::MAX);
    let mut parity_witnesses = Vec::new();
    for r in 0..spec.k() {
        for j1 in 0..spec.p() {
            for j2 in 0..spec.p() {
                if j1 == j2 {
                    continue;
                }
                let (lo, hi) = (spec.exponent(r, j1), spec.exponent(r, j2));
                let condition = match (lo, hi) {
                    (0, h) if h > 1 && h % 2 == 0 => Some(ParityCondition::ZeroAndEven),
                    (1, h) if h > 1 && h % 2 == 1 => Some(ParityCondition::OneAndOdd),
                    _ => None,
                };
                if let Some(condition) = condition {
                    parity_witnesses.push(ParityWitness {
                        variable: r,
                        column_low: j1,
                        column_high: j2,
                        condition,
                    });
                }
            }
        }
    }
    Ok(SymbolicDiagnosis {
        symmetric_variables: c,
        support_bound,
        exceeds_support_bound: spec.p() as u64 > support_bound,
        parity_witnesses,
    })
}

/// Redundancy report built from [`symbolic_diagnosis`] alone; `q` is the
/// upper bound `2^C`.
pub fn linear_model_redundancy(spec: &RegressionSpec, space: &DesignSpace) -> Result<RedundancyReport> {
    let sym = symbolic_diagnosis(spec, space)?;
    let q = usize::try_from(sym.support_bound).unwrap_or(usize::MAX);
    Ok(RedundancyReport {
        q,
        p: spec.p(),
        n: 0,
        support_points: q,
        under_supported: sym.exceeds_support_bound,
        redundant: sym.exceeds_support_bound || !sym.parity_witnesses.is_empty(),
        draws: 0,
        seed: 0,
        resampled: 0,
        deficient_draws: 0,
        singular_draws: 0,
        rank_draws: Vec::new(),
        symbolic: Some(sym),
        verdicts: Vec::new(),
        warnings: Vec::new(),
    }
    .finish())
}

/// Maxima, assembled design and redundancy diagnosis in one pass.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FigReport {
    pub maxima: MaximaReport,
    pub design: Design,
    pub expected_fig: f64,
    pub redundancy: RedundancyReport,
}

/// Multistart search, design assembly and rank diagnosis.
pub fn fig_report(
    ev: &PhiEvaluator,
    space: &DesignSpace,
    n: usize,
    cfg: &OptimizerConfig,
    draws: usize,
) -> Result<FigReport> {
    let maxima = multistart(ev, space, cfg)?;
    fig_report_from_maxima(ev, space, n, cfg, draws, maxima)
}

/// The tail of [`fig_report`] for maxima found elsewhere (e.g. runs
/// re-clustered under a different tolerance).
pub fn fig_report_from_maxima(
    ev: &PhiEvaluator,
    space: &DesignSpace,
    n: usize,
    cfg: &OptimizerConfig,
    draws: usize,
    maxima: MaximaReport,
) -> Result<FigReport> {
    if maxima.maxima.is_empty() {
        return Err(FigError::EmptyReport);
    }
    let design = assemble_design(&maxima, n)?;
    let expected_fig = ev.expected_fig(&design)?;
    let mut redundancy =
        redundancy_check(ev.model(), ev.prior(), space, &design, draws, cfg.seed, cfg.execution)?;
    redundancy.q = maxima.q;
    redundancy.under_supported = maxima.q < redundancy.p;
    if let (crate::model::Family::NormalLinear { regression, .. }, true) =
        (ev.model().family(), regression_fits(ev.model(), space))
    {
        redundancy.symbolic = Some(symbolic_diagnosis(regression, space)?);
    }
    Ok(FigReport {
        maxima,
        design,
        expected_fig,
        redundancy: redundancy.finish(),
    })
}

fn regression_fits(model: &ModelSpec, space: &DesignSpace) -> bool {
    model.k() == space.k()
}
