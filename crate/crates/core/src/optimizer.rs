//! Box-constrained maximization of an [`Objective`]: a projected
//! quasi-Newton local search, a multistart driver that clusters the local
//! optima, and an exhaustive lattice scan used as an independent check.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{FigError, Result};
use crate::model::DesignSpace;
use crate::par::{map_indexed, Execution};
use crate::phi::Objective;

/// Default cap on lattice points for [`grid_maximize`].
pub const DEFAULT_GRID_CAP: usize = 10_000_000;

const ARMIJO: f64 = 1e-4;
const MAX_BACKTRACKS: usize = 60;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OptimizerConfig {
    pub starts: usize,
    pub seed: u64,
    /// Finite-difference step as a fraction of each bound width.
    pub grad_step: f64,
    /// Bound on the projected-gradient norm, relative to `max(1, |φ|)`.
    pub convergence_tol: f64,
    pub max_iters: usize,
    /// Clustering radius in width-scaled coordinates.
    pub dedup_tol: f64,
    /// Relative gap below the best value at which a maximum stops being global.
    pub value_tol: f64,
    #[serde(skip)]
    pub execution: Execution,
}

impl Default for OptimizerConfig {
    fn default() -> Self {
        Self {
            starts: 1000,
            seed: 0,
            grad_step: 1e-6,
            convergence_tol: 1e-8,
            max_iters: 500,
            dedup_tol: 1e-4,
            value_tol: 1e-6,
            execution: Execution::default(),
        }
    }
}

impl OptimizerConfig {
    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("grad_step", self.grad_step),
            ("convergence_tol", self.convergence_tol),
            ("dedup_tol", self.dedup_tol),
            ("value_tol", self.value_tol),
        ];
        for (name, v) in positive {
            if !(v > 0.0 && v.is_finite()) {
                return Err(FigError::input(format!("{name} must be positive, got {v}")));
            }
        }
        if self.starts == 0 || self.max_iters == 0 {
            return Err(FigError::input("starts and max_iters must be positive"));
        }
        Ok(())
    }
}

/// Outcome of one local search.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LocalResult {
    pub point: Vec<f64>,
    pub value: f64,
    pub start_value: f64,
    pub iterations: usize,
    pub converged: bool,
    pub projected_gradient: f64,
}

struct Search<'a, O: Objective + ?Sized> {
    obj: &'a O,
    space: &'a DesignSpace,
    cfg: &'a OptimizerConfig,
}

impl<O: Objective + ?Sized> Search<'_, O> {
    fn value(&self, x: &[f64]) -> Result<f64> {
        let v = self.obj.value(x)?;
        if v.is_finite() {
            Ok(v)
        } else {
            Err(FigError::NonFinite {
                what: "objective",
                point: x.to_vec(),
            })
        }
    }

    /// Central differences, one-sided where a bound cuts the stencil.
    fn gradient(&self, x: &[f64]) -> Result<Vec<f64>> {
        let mut g = vec![0.0; x.len()];
        let mut probe = x.to_vec();
        for r in 0..x.len() {
            let (a, b) = self.space.bounds()[r];
            let h = self.cfg.grad_step * (b - a);
            let hi = (x[r] + h).min(b);
            let lo = (x[r] - h).max(a);
            probe[r] = hi;
            let fp = self.value(&probe)?;
            probe[r] = lo;
            let fm = self.value(&probe)?;
            probe[r] = x[r];
            g[r] = (fp - fm) / (hi - lo);
        }
        Ok(g)
    }

    /// Coordinates pinned at a bound because the descent direction `-g`
    /// points out of the box.
    fn blocked(&self, x: &[f64], g: &[f64]) -> Vec<bool> {
        x.iter()
            .zip(g)
            .zip(self.space.bounds())
            .map(|((&xr, &gr), &(a, b))| (xr <= a && gr > 0.0) || (xr >= b && gr < 0.0))
            .collect()
    }

    fn projected_norm(g: &[f64], blocked: &[bool]) -> f64 {
        g.iter()
            .zip(blocked)
            .filter(|(_, &b)| !b)
            .map(|(v, _)| v * v)
            .sum::<f64>()
            .sqrt()
    }

    fn initial_inverse_hessian(&self, g: &[f64], free: &[bool]) -> Vec<f64> {
        // first step moves the largest scaled coordinate by a quarter width
        let k = g.len();
        let scaled_max = g
            .iter()
            .zip(free)
            .enumerate()
            .filter(|(_, (_, &f))| f)
            .map(|(r, (v, _))| (v * self.space.width(r)).abs())
            .fold(0.0, f64::max)
            .max(f64::MIN_POSITIVE);
        let mut h = vec![0.0; k * k];
        for r in 0..k {
            let w = self.space.width(r);
            h[r * k + r] = 0.25 * w * w / scaled_max;
        }
        h
    }

    fn run(&self, start: &[f64]) -> Result<LocalResult> {
        let k = self.space.k();
        if start.len() != k || self.obj.dim() != k {
            return Err(FigError::input("start point, objective and design space dimensions differ"));
        }
        if !self.space.contains(start) {
            return Err(FigError::input(format!("start {start:?} is outside the design space")));
        }
        // ascent on φ, written as descent on -φ
        let mut x = start.to_vec();
        let start_value = self.value(&x)?;
        let mut f = -start_value;
        let mut g: Vec<f64> = self.gradient(&x)?.into_iter().map(|v| -v).collect();
        let mut blocked = self.blocked(&x, &g);
        let mut h = self.initial_inverse_hessian(&g, &blocked.iter().map(|b| !b).collect::<Vec<_>>());
        let mut fresh = true;
        let mut iterations = 0;
        let mut converged = false;

        loop {
            let pg = Self::projected_norm(&g, &blocked);
            if pg <= self.cfg.convergence_tol * f.abs().max(1.0) {
                converged = true;
                break;
            }
            if iterations >= self.cfg.max_iters {
                break;
            }
            iterations += 1;

            let free: Vec<bool> = blocked.iter().map(|b| !b).collect();
            let mut p = direction(&h, &g, &free);
            let mut slope: f64 = p.iter().zip(&g).map(|(a, b)| a * b).sum();
            if !(slope < 0.0) {
                h = self.initial_inverse_hessian(&g, &free);
                fresh = true;
                p = direction(&h, &g, &free);
                slope = p.iter().zip(&g).map(|(a, b)| a * b).sum();
                if !(slope < 0.0) {
                    break;
                }
            }

            let mut alpha = 1.0;
            let mut accepted = None;
            for _ in 0..MAX_BACKTRACKS {
                let mut trial: Vec<f64> = x.iter().zip(&p).map(|(xr, pr)| xr + alpha * pr).collect();
                self.space.project(&mut trial);
                let decrease: f64 = trial
                    .iter()
                    .zip(&x)
                    .zip(&g)
                    .map(|((t, xr), gr)| gr * (t - xr))
                    .sum();
                if trial == x {
                    break;
                }
                let ft = -self.value(&trial)?;
                if ft <= f + ARMIJO * decrease && decrease < 0.0 {
                    accepted = Some((trial, ft));
                    break;
                }
                alpha *= 0.5;
            }
            let Some((x_new, f_new)) = accepted else {
                break;
            };

            let g_new: Vec<f64> = self.gradient(&x_new)?.into_iter().map(|v| -v).collect();
            let blocked_new = self.blocked(&x_new, &g_new);
            let s: Vec<f64> = x_new.iter().zip(&x).map(|(a, b)| a - b).collect();
            let y: Vec<f64> = g_new.iter().zip(&g).map(|(a, b)| a - b).collect();

            if blocked_new != blocked {
                let free_new: Vec<bool> = blocked_new.iter().map(|b| !b).collect();
                h = self.initial_inverse_hessian(&g_new, &free_new);
                fresh = true;
            } else {
                bfgs_update(&mut h, &s, &y, &free, fresh);
                fresh = false;
            }
            x = x_new;
            f = f_new;
            g = g_new;
            blocked = blocked_new;
        }

        let projected_gradient = Self::projected_norm(&g, &blocked);
        Ok(LocalResult {
            point: x,
            value: -f,
            start_value,
            iterations,
            converged,
            projected_gradient,
        })
    }
}

/// `-H g` restricted to the free coordinates.
fn direction(h: &[f64], g: &[f64], free: &[bool]) -> Vec<f64> {
    let k = g.len();
    (0..k)
        .map(|r| {
            if !free[r] {
                return 0.0;
            }
            -(0..k)
                .filter(|&c| free[c])
                .map(|c| h[r * k + c] * g[c])
                .sum::<f64>()
        })
        .collect()
}

/// Inverse-Hessian BFGS update on the free block; skipped without
/// sufficient curvature.
fn bfgs_update(h: &mut [f64], s: &[f64], y: &[f64], free: &[bool], rescale: bool) {
    let k = s.len();
    let s: Vec<f64> = s.iter().zip(free).map(|(v, &f)| if f { *v } else { 0.0 }).collect();
    let y: Vec<f64> = y.iter().zip(free).map(|(v, &f)| if f { *v } else { 0.0 }).collect();
    let sy: f64 = s.iter().zip(&y).map(|(a, b)| a * b).sum();
    let yy: f64 = y.iter().map(|v| v * v).sum();
    let ss: f64 = s.iter().map(|v| v * v).sum();
    if !(sy > 1e-12 * (ss * yy).sqrt()) || sy <= 0.0 {
        return;
    }
    if rescale {
        let gamma = sy / yy;
        for r in 0..k {
            for c in 0..k {
                h[r * k + c] = if r == c && free[r] { gamma } else { 0.0 };
            }
        }
    }
    let rho = 1.0 / sy;
    let hy: Vec<f64> = (0..k)
        .map(|r| (0..k).map(|c| h[r * k + c] * y[c]).sum())
        .collect();
    let yhy: f64 = y.iter().zip(&hy).map(|(a, b)| a * b).sum();
    for r in 0..k {
        for c in 0..k {
            h[r * k + c] += -rho * (hy[r] * s[c] + s[r] * hy[c])
                + (rho * rho * yhy + rho) * s[r] * s[c];
        }
    }
}

/// Projected quasi-Newton ascent from `start`. The returned value never
/// falls below the starting value.
pub fn local_maximize<O: Objective + ?Sized>(
    obj: &O,
    space: &DesignSpace,
    start: &[f64],
    cfg: &OptimizerConfig,
) -> Result<LocalResult> {
    Search { obj, space, cfg }.run(start)
}

/// Uniform start `index` of a multistart run, drawn from its own stream.
pub fn start_point(space: &DesignSpace, seed: u64, index: usize) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index as u64);
    space
        .bounds()
        .iter()
        .map(|&(a, b)| rng.random_range(a..=b))
        .collect()
}

/// Independent local searches, one per start, in start order.
pub fn multistart_runs<O: Objective + ?Sized>(
    obj: &O,
    space: &DesignSpace,
    cfg: &OptimizerConfig,
) -> Vec<Result<LocalResult>> {
    map_indexed(cfg.execution, cfg.starts, |i| {
        let start = start_point(space, cfg.seed, i);
        local_maximize(obj, space, &start, cfg)
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Maximum {
    pub point: Vec<f64>,
    pub value: f64,
    /// Within `value_tol` of the best value found.
    pub global: bool,
    /// Number of accepted endpoints in this cluster.
    pub hits: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StartStats {
    pub starts: usize,
    pub converged: usize,
    /// Not converged but within ten times the tolerance, so kept.
    pub accepted_unconverged: usize,
    pub discarded: usize,
    pub failed: usize,
    pub mean_iterations: f64,
}

/// Distinct maxima of an objective. `q` counts the maxima tied for the
/// best value; lower local maxima are listed with `global = false`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MaximaReport {
    pub maxima: Vec<Maximum>,
    pub q: usize,
    pub local_maxima: usize,
    pub best_value: f64,
    pub starts_converged: usize,
    pub stats: StartStats,
}

impl MaximaReport {
    pub fn global_maxima(&self) -> impl Iterator<Item = &Maximum> {
        self.maxima.iter().filter(|m| m.global)
    }
}

fn lexicographic(a: &[f64], b: &[f64]) -> std::cmp::Ordering {
    a.iter()
        .zip(b)
        .map(|(x, y)| x.total_cmp(y))
        .find(|o| o.is_ne())
        .unwrap_or(std::cmp::Ordering::Equal)
}

/// Orders clusters: global maxima first in lexicographic point order, then
/// the rest by decreasing value.
fn finish_maxima(mut maxima: Vec<Maximum>, value_tol: f64) -> (Vec<Maximum>, f64) {
    let best = maxima.iter().map(|m| m.value).fold(f64::NEG_INFINITY, f64::max);
    let cut = best - value_tol * best.abs();
    for m in &mut maxima {
        m.global = m.value >= cut;
    }
    maxima.sort_by(|a, b| {
        b.global
            .cmp(&a.global)
            .then_with(|| {
                if a.global {
                    lexicographic(&a.point, &b.point)
                } else {
                    b.value.total_cmp(&a.value).then_with(|| lexicographic(&a.point, &b.point))
                }
            })
    });
    (maxima, best)
}

/// Clusters local-search endpoints into distinct maxima.
pub fn summarize_runs(
    runs: &[Result<LocalResult>],
    space: &DesignSpace,
    cfg: &OptimizerConfig,
) -> MaximaReport {
    let mut stats = StartStats {
        starts: runs.len(),
        converged: 0,
        accepted_unconverged: 0,
        discarded: 0,
        failed: 0,
        mean_iterations: 0.0,
    };
    let mut accepted: Vec<&LocalResult> = Vec::new();
    let mut iterations = 0usize;
    for run in runs {
        match run {
            Ok(r) => {
                iterations += r.iterations;
                if r.converged {
                    stats.converged += 1;
                    accepted.push(r);
                } else if r.projected_gradient
                    <= 10.0 * cfg.convergence_tol * r.value.abs().max(1.0)
                {
                    stats.accepted_unconverged += 1;
                    accepted.push(r);
                } else {
                    stats.discarded += 1;
                }
            }
            Err(_) => stats.failed += 1,
        }
    }
    let finished = stats.converged + stats.accepted_unconverged + stats.discarded;
    if finished > 0 {
        stats.mean_iterations = iterations as f64 / finished as f64;
    }

    accepted.sort_by(|a, b| {
        b.value
            .total_cmp(&a.value)
            .then_with(|| lexicographic(&a.point, &b.point))
    });
    let mut clusters: Vec<Maximum> = Vec::new();
    for r in accepted {
        match clusters
            .iter_mut()
            .find(|c| space.scaled_distance(&c.point, &r.point) <= cfg.dedup_tol)
        {
            Some(c) => c.hits += 1,
            None => clusters.push(Maximum {
                point: r.point.clone(),
                value: r.value,
                global: false,
                hits: 1,
            }),
        }
    }
    let (maxima, best) = finish_maxima(clusters, cfg.value_tol);
    MaximaReport {
        q: maxima.iter().filter(|m| m.global).count(),
        local_maxima: maxima.len(),
        best_value: best,
        starts_converged: stats.converged,
        maxima,
        stats,
    }
}

/// `cfg.starts` local searches from uniform starts, clustered.
pub fn multistart<O: Objective + ?Sized>(
    obj: &O,
    space: &DesignSpace,
    cfg: &OptimizerConfig,
) -> Result<MaximaReport> {
    cfg.validate()?;
    let runs = multistart_runs(obj, space, cfg);
    Ok(summarize_runs(&runs, space, cfg))
}

fn axis_points(a: f64, b: f64, resolution: f64) -> Vec<f64> {
    let n = ((b - a) / resolution + 1e-9).floor() as usize + 1;
    let mut pts: Vec<f64> = (0..n).map(|i| (a + i as f64 * resolution).min(b)).collect();
    if *pts.last().expect("non-empty") < b - 1e-9 * resolution {
        pts.push(b);
    }
    pts
}

/// Exhaustive lattice scan: a lattice point is a local maximum when no
/// neighbor (including diagonals) is higher.
pub fn grid_maximize<O: Objective + ?Sized>(
    obj: &O,
    space: &DesignSpace,
    resolution: f64,
    value_tol: f64,
    exec: Execution,
) -> Result<MaximaReport> {
    grid_maximize_capped(obj, space, resolution, value_tol, exec, DEFAULT_GRID_CAP)
}

pub fn grid_maximize_capped<O: Objective + ?Sized>(
    obj: &O,
    space: &DesignSpace,
    resolution: f64,
    value_tol: f64,
    exec: Execution,
    cap: usize,
) -> Result<MaximaReport> {
    if !(resolution > 0.0) {
        return Err(FigError::input("grid resolution must be positive"));
    }
    let k = space.k();
    let mut requested: u128 = 1;
    for &(a, b) in space.bounds() {
        requested = requested.saturating_mul(((b - a) / resolution + 2.0) as u128);
    }
    if requested > cap as u128 {
        return Err(FigError::Capacity {
            what: "grid",
            requested,
            cap,
        });
    }
    let axes: Vec<Vec<f64>> = space
        .bounds()
        .iter()
        .map(|&(a, b)| axis_points(a, b, resolution))
        .collect();
    let dims: Vec<usize> = axes.iter().map(Vec::len).collect();
    let total: usize = dims.iter().product();
    if total > cap {
        return Err(FigError::Capacity {
            what: "grid",
            requested: total as u128,
            cap,
        });
    }
    let unravel = |mut idx: usize| -> Vec<usize> {
        let mut out = vec![0; k];
        for r in (0..k).rev() {
            out[r] = idx % dims[r];
            idx /= dims[r];
        }
        out
    };
    let point = |ix: &[usize]| -> Vec<f64> { ix.iter().zip(&axes).map(|(&i, ax)| ax[i]).collect() };

    let values: Vec<f64> = map_indexed(exec, total, |i| obj.value(&point(&unravel(i))))
        .into_iter()
        .collect::<Result<_>>()?;

    let mut maxima = Vec::new();
    let offsets = 3usize.pow(k as u32);
    for i in 0..total {
        let ix = unravel(i);
        let v = values[i];
        let mut is_max = true;
        'neigh: for o in 0..offsets {
            let mut flat = 0usize;
            let mut code = o;
            let mut centre = true;
            for r in 0..k {
                let delta = (code % 3) as isize - 1;
                code /= 3;
                if delta != 0 {
                    centre = false;
                }
                let j = ix[r] as isize + delta;
                if j < 0 || j >= dims[r] as isize {
                    continue 'neigh;
                }
                flat = flat * dims[r] + j as usize;
            }
            if !centre && values[flat] > v {
                is_max = false;
                break;
            }
        }
        if is_max {
            maxima.push(Maximum {
                point: point(&ix),
                value: v,
                global: false,
                hits: 1,
            });
        }
    }
    let (maxima, best) = finish_maxima(maxima, value_tol);
    Ok(MaximaReport {
        q: maxima.iter().filter(|m| m.global).count(),
        local_maxima: maxima.len(),
        best_value: best,
        starts_converged: 0,
        maxima,
        stats: StartStats {
            starts: 0,
            converged: 0,
            accepted_unconverged: 0,
            discarded: 0,
            failed: 0,
            mean_iterations: 0.0,
        },
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::phi::FnObjective;

    fn cfg(starts: usize) -> OptimizerConfig {
        OptimizerConfig {
            starts,
            seed: 17,
            ..OptimizerConfig::default()
        }
    }

    #[test]
    fn interior_concave_quadratic() {
        let c = [0.3, -0.45, 0.1];
        let obj = FnObjective::new(3, |d: &[f64]| {
            -d.iter().zip(&c).map(|(x, y)| (x - y) * (x - y)).sum::<f64>()
        });
        let space = DesignSpace::symmetric_unit(3).unwrap();
        let r = local_maximize(&obj, &space, &[0.9, 0.9, -0.9], &cfg(1)).unwrap();
        assert!(r.converged);
        for (x, y) in r.point.iter().zip(&c) {
            assert!((x - y).abs() <= 1e-6, "{:?}", r.point);
        }
    }

    #[test]
    fn boundary_maximum_of_squared_norm() {
        let obj = FnObjective::new(3, |d: &[f64]| d.iter().map(|x| x * x).sum());
        let space = DesignSpace::symmetric_unit(3).unwrap();
        let r = local_maximize(&obj, &space, &[0.2, 0.05, 0.7], &cfg(1)).unwrap();
        assert!(r.converged);
        assert_eq!(r.point, vec![1.0, 1.0, 1.0]);
        assert!(r.value >= r.start_value - 1e-12);
    }

    #[test]
    fn start_outside_box_is_rejected() {
        let obj = FnObjective::new(1, |d: &[f64]| d[0]);
        let space = DesignSpace::symmetric_unit(1).unwrap();
        assert!(local_maximize(&obj, &space, &[1.5], &cfg(1)).is_err());
    }

    #[test]
    fn non_finite_objective_is_reported() {
        let obj = FnObjective::new(1, |d: &[f64]| if d[0] > 0.5 { f64::NAN } else { d[0] });
        let space = DesignSpace::symmetric_unit(1).unwrap();
        let err = local_maximize(&obj, &space, &[0.0], &cfg(1)).unwrap_err();
        assert!(matches!(err, FigError::NonFinite { .. }));
    }

    #[test]
    fn multistart_finds_both_ends_of_parabola() {
        let obj = FnObjective::new(1, |d: &[f64]| d[0] * d[0]);
        let space = DesignSpace::symmetric_unit(1).unwrap();
        let report = multistart(&obj, &space, &cfg(50)).unwrap();
        assert_eq!(report.q, 2);
        assert_eq!(report.maxima[0].point, vec![-1.0]);
        assert_eq!(report.maxima[1].point, vec![1.0]);
        assert_eq!(report.maxima.iter().map(|m| m.hits).sum::<usize>(), 50);
    }

    #[test]
    fn lower_local_maxima_are_not_global() {
        // peaks at -1 (value 1) and +1 (value 2)
        let obj = FnObjective::new(1, |d: &[f64]| d[0] * d[0] * if d[0] > 0.0 { 2.0 } else { 1.0 });
        let space = DesignSpace::symmetric_unit(1).unwrap();
        let report = multistart(&obj, &space, &cfg(40)).unwrap();
        assert_eq!(report.q, 1);
        assert_eq!(report.local_maxima, 2);
        assert!(report.maxima[0].global && report.maxima[0].point == vec![1.0]);
        assert!(!report.maxima[1].global);
    }

    #[test]
    fn grid_parabola() {
        let obj = FnObjective::new(1, |d: &[f64]| d[0] * d[0]);
        let space = DesignSpace::symmetric_unit(1).unwrap();
        let report = grid_maximize(&obj, &space, 0.1, 1e-6, Execution::Sequential).unwrap();
        assert_eq!(report.q, 2);
        assert_eq!(report.maxima[0].point, vec![-1.0]);
        assert_eq!(report.maxima[1].point, vec![1.0]);
    }

    #[test]
    fn grid_capacity() {
        let obj = FnObjective::new(4, |_: &[f64]| 0.0);
        let space = DesignSpace::symmetric_unit(4).unwrap();
        let err = grid_maximize(&obj, &space, 0.01, 1e-6, Execution::Sequential).unwrap_err();
        assert!(matches!(err, FigError::Capacity { .. }));
    }

    #[test]
    fn start_streams_are_order_independent() {
        let space = DesignSpace::new(vec![(0.0, 24.0), (-1.0, 1.0)]).unwrap();
        let a = start_point(&space, 9, 5);
        let b = start_point(&space, 9, 5);
        assert_eq!(a, b);
        assert_ne!(a, start_point(&space, 9, 6));
        assert!(space.contains(&a));
    }

    #[test]
    fn config_validation() {
        assert!(OptimizerConfig::default().validate().is_ok());
        let bad = OptimizerConfig {
            dedup_tol: 0.0,
            ..OptimizerConfig::default()
        };
        assert!(bad.validate().is_err());
    }
}
