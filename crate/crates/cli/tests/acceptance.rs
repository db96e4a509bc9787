//! One line per acceptance criterion: `criterion N [PASS|FAIL] ...`.
//!
//! Criteria run one at a time (a shared lock) so each runtime limit is
//! measured without contention from the others.

use std::fs;
use std::sync::Mutex;
use std::time::{Duration, Instant};

use figdesign::diagnosis::assemble_design;
use figdesign::model::{Design, DesignSpace, ModelSpec, RegressionSpec, ScaleSpec};
use figdesign::optimizer::{multistart, OptimizerConfig};
use figdesign::phi::{nuisance_factor, phi_closed_linear, phi_closed_poisson, PhiEvaluator};
use figdesign::prior::{gauss_legendre, PriorComponent, PriorSpec};
use figopt::reproduce::{builtin_config, poisson_discrepancy};
use figopt::run_args;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Gamma, StandardNormal};
use serde_json::Value;

static SERIAL: Mutex<()> = Mutex::new(());

struct Criterion {
    id: u32,
    title: &'static str,
    limit: Duration,
    start: Instant,
    checks: Vec<(bool, String)>,
}

impl Criterion {
    fn new(id: u32, title: &'static str, limit_secs: u64) -> Self {
        Self {
            id,
            title,
            limit: Duration::from_secs(limit_secs),
            start: Instant::now(),
            checks: Vec::new(),
        }
    }

    fn check(&mut self, ok: bool, what: impl Into<String>) {
        self.checks.push((ok, what.into()));
    }

    fn finish(mut self) {
        let elapsed = self.start.elapsed();
        self.check(
            elapsed < self.limit,
            format!("runtime {:.1} s < {} s", elapsed.as_secs_f64(), self.limit.as_secs()),
        );
        let ok = self.checks.iter().all(|c| c.0);
        let failed: Vec<&str> = self.checks.iter().filter(|c| !c.0).map(|c| c.1.as_str()).collect();
        let detail = if ok {
            self.checks.iter().map(|c| c.1.as_str()).collect::<Vec<_>>().join("; ")
        } else {
            format!("failed: {}", failed.join("; "))
        };
        println!(
            "criterion {} [{}] {}: {}",
            self.id,
            if ok { "PASS" } else { "FAIL" },
            self.title,
            detail
        );
        assert!(ok, "criterion {} failed: {}", self.id, failed.join("; "));
    }
}

fn reproduce_json(name: &str, dir: &tempfile::TempDir) -> (Result<String, figopt::CliError>, Value) {
    let out = run_args(["figopt", "reproduce", name, "--out", dir.path().to_str().unwrap()]);
    let text = fs::read_to_string(dir.path().join(format!("{name}-report.json"))).unwrap();
    (out, serde_json::from_str(&text).unwrap())
}

#[test]
fn criterion_1_rsm_corner_optima() {
    let _guard = SERIAL.lock().unwrap_or_else(|e| e.into_inner());
    let mut c = Criterion::new(1, "RSM corner optima", 10);
    let dir = tempfile::tempdir().unwrap();
    let (out, report) = reproduce_json("rsm2", &dir);
    c.check(out.is_ok(), "reproduce rsm2 exits 0");
    let diag = &report["diagnosis"];
    let q = diag["q"].as_u64().unwrap();
    c.check(q == 4, format!("q = {q}"));
    let globals: Vec<&Value> = diag["maxima"].as_array().unwrap().iter().filter(|m| m["global"] == true).collect();
    let mut corners = Vec::new();
    let mut values = Vec::new();
    for m in &globals {
        let p: Vec<f64> = m["point"].as_array().unwrap().iter().map(|v| v.as_f64().unwrap()).collect();
        c.check(
            p.iter().all(|v| (v.abs() - 1.0).abs() <= 1e-6),
            format!("({:+.0},{:+.0}) within 1e-6 of a corner", p[0], p[1]),
        );
        corners.push((p[0].signum() as i8, p[1].signum() as i8));
        values.push(m["value"].as_f64().unwrap());
    }
    corners.sort();
    corners.dedup();
    c.check(corners.len() == 4, format!("{} distinct corners", corners.len()));
    let (lo, hi) = values.iter().fold((f64::INFINITY, 0.0f64), |(l, h), &v| (l.min(v), h.max(v)));
    c.check(hi - lo <= 1e-10 * hi, format!("corner φ spread {:.1e} (rel ≤ 1e-10)", (hi - lo) / hi));
    let verdict = diag["verdict"].as_str().unwrap();
    c.check(
        verdict.contains("UNDER-SUPPORTED: q=4 < p=6"),
        "verdict UNDER-SUPPORTED: q=4 < p=6",
    );
    c.finish();
}

#[test]
fn criterion_2_logistic_two_maxima() {
    let _guard = SERIAL.lock().unwrap_or_else(|e| e.into_inner());
    let mut c = Criterion::new(2, "logistic two maxima (B=1000, orders 6/8/10, dedup 1e-5..1e-3)", 300);
    let dir = tempfile::tempdir().unwrap();
    let (out, report) = reproduce_json("logistic-woods", &dir);
    c.check(out.is_ok(), "reproduce logistic-woods exits 0");
    c.check(report["diagnosis"]["settings"]["optimizer"]["starts"] == 1000, "B = 1000");
    let rows = report["sweep"].as_array().unwrap();
    let mut seen = Vec::new();
    for r in rows {
        let order = r["quad_order"].as_u64().unwrap();
        let tol = r["dedup_tol"].as_f64().unwrap();
        let q = r["q"].as_u64().unwrap();
        seen.push((order, tol));
        c.check(q == 2, format!("order {order}, dedup {tol:e}: q = {q}"));
    }
    let expected: Vec<(u64, f64)> = [6, 8, 10]
        .iter()
        .flat_map(|&o| [1e-5, 1e-4, 1e-3].map(|t| (o, t)))
        .collect();
    c.check(seen == expected, format!("{} configurations swept", seen.len()));
    c.finish();
}

#[test]
fn criterion_3_compartmental_single_maximum() {
    let _guard = SERIAL.lock().unwrap_or_else(|e| e.into_inner());
    let mut c = Criterion::new(3, "compartmental single maximum at d = 24", 60);
    let dir = tempfile::tempdir().unwrap();
    let (out, report) = reproduce_json("compartmental", &dir);
    c.check(out.is_ok(), "reproduce compartmental exits 0");
    let diag = &report["diagnosis"];
    let maxima = diag["maxima"].as_array().unwrap();
    c.check(
        diag["q"] == 1 && maxima.len() == 1 && maxima[0]["point"][0] == 24.0,
        format!("multistart maxima {}", Value::Array(maxima.iter().map(|m| m["point"].clone()).collect())),
    );
    let grid = report["grid_oracle"]["maxima"].as_array().unwrap();
    c.check(
        grid.len() == 1 && grid[0]["point"][0] == 24.0,
        format!("grid oracle (step 0.01) maxima {}", Value::Array(grid.iter().map(|m| m["point"].clone()).collect())),
    );
    let n = diag["settings"]["n"].as_u64().unwrap() as usize;
    let design = diag["design"].as_array().unwrap();
    c.check(
        design.len() == n && design.iter().all(|d| d[0] == 24.0),
        format!("design = 24·1_{n}"),
    );
    let draws = diag["redundancy"]["rank_draws"].as_array().unwrap();
    let rank_one = draws.iter().filter(|d| d["rank"] == 1).count();
    c.check(
        draws.len() == 100 && rank_one == 100,
        format!("rank(M)=1 < p=3 at {rank_one}/{} prior draws", draws.len()),
    );
    let csv = fs::read_to_string(dir.path().join("compartmental-phi.csv")).unwrap_or_default();
    let rows: Vec<&str> = csv.lines().collect();
    let argmax = rows
        .iter()
        .skip(1)
        .filter_map(|r| r.split_once(','))
        .map(|(d, v)| (d.parse::<f64>().unwrap(), v.parse::<f64>().unwrap()))
        .fold((f64::NAN, f64::NEG_INFINITY), |b, r| if r.1 > b.1 { r } else { b });
    c.check(
        rows.first() == Some(&"d,phi") && rows.len() == 2402 && argmax.0 == 24.0,
        format!("Fig. S1 CSV: {} rows, argmax d = {}", rows.len().saturating_sub(1), argmax.0),
    );
    c.finish();
}

#[test]
fn criterion_4_poisson_closed_form_vs_quadrature() {
    let _guard = SERIAL.lock().unwrap_or_else(|e| e.into_inner());
    let mut c = Criterion::new(4, "Poisson closed form vs Gauss-Hermite", 5);
    let cfg = builtin_config("poisson").unwrap();
    let errs: Vec<f64> = [4, 8, 12].iter().map(|&o| poisson_discrepancy(&cfg, o).unwrap()).collect();
    c.check(errs[2] < 1e-8, format!("order 12 max rel error {:.2e} < 1e-8", errs[2]));
    c.check(
        errs[0] > errs[1] && errs[1] > errs[2],
        format!("monotone over 4/8/12: {:.2e} > {:.2e} > {:.2e}", errs[0], errs[1], errs[2]),
    );
    // independent spot value: φ(1) = 2e
    let spec = RegressionSpec::first_order(1).unwrap();
    let v = phi_closed_poisson(&spec, &[1.0, 1.0], &[1.0]).unwrap();
    c.check((v - 2.0 * std::f64::consts::E).abs() < 1e-12, "closed form φ(1) = 2e");
    c.finish();
}

fn random_known_scale_problem(rng: &mut ChaCha8Rng, i: usize) -> (ModelSpec, PriorSpec, Design) {
    let k = rng.random_range(1..=2usize);
    let spec = RegressionSpec::first_order(k).unwrap();
    let p = spec.p();
    let (model, comps): (ModelSpec, Vec<PriorComponent>) = if i.is_multiple_of(2) {
        let comps = (0..p)
            .map(|_| PriorComponent::Normal {
                mean: rng.random_range(-0.5..0.5),
                var: rng.random_range(0.05..0.4),
            })
            .collect();
        (ModelSpec::poisson(spec), comps)
    } else {
        let comps = (0..p)
            .map(|_| {
                let lo = rng.random_range(-3.0..1.0);
                PriorComponent::Uniform { lo, hi: lo + rng.random_range(0.5..3.0) }
            })
            .collect();
        (ModelSpec::logistic(spec), comps)
    };
    let n = rng.random_range(1..=4usize);
    let pts = (0..n).map(|_| (0..k).map(|_| rng.random_range(-1.0..1.0)).collect()).collect();
    (model, PriorSpec::new(comps).unwrap(), Design::new(pts).unwrap())
}

#[test]
fn criterion_5_trace_identity_oracle() {
    let _guard = SERIAL.lock().unwrap_or_else(|e| e.into_inner());
    let mut c = Criterion::new(5, "expected FIG equals Monte Carlo E[tr I] (5 problems, 1e5 draws, 4 SE)", 120);
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    const DRAWS: usize = 100_000;
    for i in 0..5 {
        let (model, prior, design) = random_known_scale_problem(&mut rng, i);
        let family = if i.is_multiple_of(2) { "poisson" } else { "logistic" };
        let ev = PhiEvaluator::with_quadrature(model.clone(), prior.clone(), 16).unwrap();
        let efig = ev.expected_fig(&design).unwrap();
        let (mut sum, mut sum2) = (0.0, 0.0);
        for theta in prior.sample(DRAWS, 100 + i as u64) {
            let t = model.fisher_information(&theta, &design, 1.0).unwrap().trace();
            sum += t;
            sum2 += t * t;
        }
        let mean = sum / DRAWS as f64;
        let se = ((sum2 / DRAWS as f64 - mean * mean) / (DRAWS as f64 - 1.0)).sqrt();
        let z = (mean - efig).abs() / se;
        c.check(
            z <= 4.0,
            format!("{family} p={} n={}: |Δ| = {z:.2} SE", model.p(), design.n()),
        );
    }
    c.finish();
}

fn t_loglik(y: &[f64], m: &[[f64; 2]], theta: &[f64; 2], a: f64, b: f64) -> f64 {
    let r2: f64 = y
        .iter()
        .zip(m)
        .map(|(yi, row)| {
            let r = yi - row[0] * theta[0] - row[1] * theta[1];
            r * r
        })
        .sum();
    -0.5 * (a + y.len() as f64) * (1.0 + r2 / b).ln()
}

#[test]
fn criterion_6_nuisance_score_oracle() {
    let _guard = SERIAL.lock().unwrap_or_else(|e| e.into_inner());
    let mut c = Criterion::new(6, "multivariate-t score covariance equals c·MᵀM (1e5 draws, 5 SE)", 180);
    let (a, b) = (6.0, 3.0);
    let ds = [-1.0, 0.25, 1.0];
    let n = ds.len();
    let m: Vec<[f64; 2]> = ds.iter().map(|&d| [1.0, d]).collect();
    let theta = [0.4, -0.8];
    let factor = nuisance_factor(a, b, n);
    let nf = n as f64;
    c.check(
        (factor - a * (a + nf) / (b * (a + nf + 2.0))).abs() < 1e-15,
        format!("c = {factor:.6}"),
    );

    let model = ModelSpec::normal_linear(RegressionSpec::first_order(1).unwrap(), ScaleSpec::NuisanceIg { s1: a, s2: b }).unwrap();
    let ev = PhiEvaluator::closed_form(model, PriorSpec::new(vec![PriorComponent::Normal { mean: 0.0, var: 1.0 }; 2]).unwrap()).unwrap();
    c.check(ev.utility_factor(n) == factor, "evaluator uses the same factor");

    let mut target = [[0.0; 2]; 2];
    for row in &m {
        for i in 0..2 {
            for j in 0..2 {
                target[i][j] += factor * row[i] * row[j];
            }
        }
    }

    const DRAWS: usize = 100_000;
    let precision = Gamma::new(a / 2.0, 2.0 / b).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(77);
    let h = 1e-5;
    let mut sums = [[0.0; 2]; 2];
    let mut sq = [[0.0; 2]; 2];
    let mut mean = [0.0; 2];
    let mut y = vec![0.0; n];
    for _ in 0..DRAWS {
        let gamma = 1.0 / precision.sample(&mut rng);
        for (yi, row) in y.iter_mut().zip(&m) {
            let z: f64 = StandardNormal.sample(&mut rng);
            *yi = row[0] * theta[0] + row[1] * theta[1] + gamma.sqrt() * z;
        }
        let mut s = [0.0; 2];
        for (j, sj) in s.iter_mut().enumerate() {
            let (mut up, mut dn) = (theta, theta);
            up[j] += h;
            dn[j] -= h;
            *sj = (t_loglik(&y, &m, &up, a, b) - t_loglik(&y, &m, &dn, a, b)) / (2.0 * h);
        }
        for i in 0..2 {
            mean[i] += s[i];
            for j in 0..2 {
                sums[i][j] += s[i] * s[j];
                sq[i][j] += (s[i] * s[j]).powi(2);
            }
        }
    }
    let nd = DRAWS as f64;
    for i in 0..2 {
        for j in 0..2 {
            let cov = sums[i][j] / nd - (mean[i] / nd) * (mean[j] / nd);
            let e = sums[i][j] / nd;
            let se = ((sq[i][j] / nd - e * e) / (nd - 1.0)).sqrt();
            let z = (cov - target[i][j]).abs() / se;
            c.check(
                z <= 5.0,
                format!("entry ({i},{j}): {cov:.4} vs {:.4} ({z:.2} SE)", target[i][j]),
            );
        }
    }
    c.finish();
}

fn fd_gradient_ok(model: &ModelSpec, theta: &[f64], d: &[f64]) -> bool {
    let g = model.mean_gradient(theta, d).unwrap();
    (0..theta.len()).all(|j| {
        let h = 1e-6 * theta[j].abs().max(1.0);
        let (mut up, mut dn) = (theta.to_vec(), theta.to_vec());
        up[j] += h;
        dn[j] -= h;
        let fd = (model.mean(&up, d).unwrap() - model.mean(&dn, d).unwrap()) / (2.0 * h);
        (fd - g[j]).abs() <= 1e-5 * g[j].abs() + 1e-8
    })
}

fn normal_moment(mu: f64, s2: f64, m: u32) -> f64 {
    // E[(mu + s Z)^m] by the binomial expansion
    let s = s2.sqrt();
    let mut total = 0.0;
    let mut binom = 1.0;
    for i in 0..=m {
        if i > 0 {
            binom *= f64::from(m - i + 1) / f64::from(i);
        }
        if i % 2 == 0 {
            let z_moment: f64 = (1..i).step_by(2).map(f64::from).product();
            total += binom * s.powi(i as i32) * z_moment * mu.powi((m - i) as i32);
        }
    }
    total
}

#[test]
fn criterion_7_property_suites() {
    let _guard = SERIAL.lock().unwrap_or_else(|e| e.into_inner());
    let mut c = Criterion::new(7, "property suites", 60);
    let mut rng = ChaCha8Rng::seed_from_u64(7);

    let lin = ModelSpec::normal_linear(RegressionSpec::rsm2(), ScaleSpec::Known { gamma: 1.0 }).unwrap();
    let pois = ModelSpec::poisson(RegressionSpec::rsm2());
    let logit = ModelSpec::logistic(RegressionSpec::first_order(4).unwrap());
    let comp = ModelSpec::compartmental(ScaleSpec::Known { gamma: 1.0 }).unwrap();
    let mut grad_ok = 0;
    for _ in 0..200 {
        let d2: Vec<f64> = (0..2).map(|_| rng.random_range(-1.0..1.0)).collect();
        let d4: Vec<f64> = (0..4).map(|_| rng.random_range(-1.0..1.0)).collect();
        let t6: Vec<f64> = (0..6).map(|_| rng.random_range(-1.0..1.0)).collect();
        let t5: Vec<f64> = (0..5).map(|_| rng.random_range(-3.0..3.0)).collect();
        let tc = [rng.random_range(0.01884..0.09884), rng.random_range(0.298..8.298), 21.8];
        let dc = [rng.random_range(0.0..24.0)];
        if fd_gradient_ok(&lin, &t6, &d2)
            && fd_gradient_ok(&pois, &t6, &d2)
            && fd_gradient_ok(&logit, &t5, &d4)
            && fd_gradient_ok(&comp, &tc, &dc)
        {
            grad_ok += 1;
        }
    }
    c.check(grad_ok == 200, format!("gradient FD checks {grad_ok}/200 cases × 4 families"));

    let mut worst: f64 = 0.0;
    for order in 1..=12usize {
        let (x, w) = gauss_legendre(order);
        for deg in 0..2 * order as i32 {
            let got: f64 = x.iter().zip(&w).map(|(x, w)| w * x.powi(deg)).sum();
            let exact = if deg % 2 == 0 { 2.0 / f64::from(deg + 1) } else { 0.0 };
            worst = worst.max((got - exact).abs() / exact.abs().max(1.0));
        }
        for (mu, s2) in [(0.0, 1.0), (0.7, 0.3), (-1.2, 2.0)] {
            let rule = PriorSpec::new(vec![PriorComponent::Normal { mean: mu, var: s2 }])
                .unwrap()
                .quadrature_rule(order)
                .unwrap();
            for deg in 0..2 * order as u32 {
                let got = rule.expect(|t| t[0].powi(deg as i32)).unwrap();
                let exact = normal_moment(mu, s2, deg);
                let scale = normal_moment(mu, s2, 2 * deg).sqrt();
                worst = worst.max((got - exact).abs() / scale);
            }
        }
    }
    c.check(worst <= 1e-11, format!("Legendre/Hermite exactness to degree 2C−1, C ≤ 12: worst rel {worst:.1e}"));

    let mut nonneg = true;
    let mut symmetric = true;
    let spec = RegressionSpec::full_second_order(3).unwrap();
    let sigma2 = vec![0.3; spec.p()];
    let logit2 = ModelSpec::logistic(RegressionSpec::first_order(2).unwrap());
    let logit_prior = PriorSpec::new(vec![PriorComponent::Uniform { lo: -1.0, hi: 2.0 }; 3]).unwrap();
    let logit_ev = PhiEvaluator::with_quadrature(logit2, logit_prior, 6).unwrap();
    for _ in 0..500 {
        let d: Vec<f64> = (0..3).map(|_| rng.random_range(-1.0..1.0)).collect();
        let r = rng.random_range(0..3usize);
        let mut flipped = d.clone();
        flipped[r] = -flipped[r];
        let l = phi_closed_linear(&spec, &d).unwrap();
        let p = phi_closed_poisson(&spec, &sigma2, &d).unwrap();
        symmetric &= l == phi_closed_linear(&spec, &flipped).unwrap();
        symmetric &= p == phi_closed_poisson(&spec, &sigma2, &flipped).unwrap();
        nonneg &= l >= 0.0 && p >= 0.0 && logit_ev.phi(&d[..2]).unwrap() >= 0.0;
    }
    c.check(nonneg, "φ ≥ 0 on 500 random points");
    c.check(symmetric, "sign-flip symmetry exact on 500 random points");

    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("rsm2.toml");
    fs::write(&cfg, builtin_config("rsm2").unwrap().to_toml()).unwrap();
    let cfg = cfg.to_str().unwrap();
    let a = run_args(["figopt", "optimize", "--config", cfg, "--starts", "200"]).unwrap();
    let b = run_args(["figopt", "optimize", "--config", cfg, "--starts", "200"]).unwrap();
    let s = run_args(["figopt", "--sequential", "optimize", "--config", cfg, "--starts", "200"]).unwrap();
    c.check(a == b && a == s, "optimize reports byte-identical (repeat and sequential)");

    let ev = builtin_config("rsm2").unwrap().evaluator().unwrap();
    let space = DesignSpace::symmetric_unit(2).unwrap();
    let report = multistart(&ev, &space, &OptimizerConfig { starts: 200, ..OptimizerConfig::default() }).unwrap();
    let base = ev.expected_fig(&assemble_design(&report, 8).unwrap()).unwrap();
    let corners: Vec<Vec<f64>> = report.global_maxima().map(|m| m.point.clone()).collect();
    let mut alloc_ok = report.q == 4;
    for _ in 0..50 {
        let pts: Vec<Vec<f64>> = (0..8).map(|_| corners[rng.random_range(0..corners.len())].clone()).collect();
        let u = ev.expected_fig(&Design::new(pts).unwrap()).unwrap();
        alloc_ok &= (u - base).abs() <= 1e-12 * base;
    }
    c.check(alloc_ok, "tied-maxima allocations equal to rel 1e-12 (50 random allocations)");
    c.finish();
}
