//! Acceptance criteria 1–11. Each test prints one `ACk PASS|FAIL` line and
//! asserts the same condition. Tests hold a shared lock so that the
//! runtime budgets are measured without interference.

use std::sync::{Arc, Mutex, MutexGuard};
use std::time::Instant;

use gasket_lab::gasket::{build_graph, geometry_report, CellAddress};
use gasket_lab::ids::{self, BoundCertificate, Experiment};
use gasket_lab::montecarlo::{self, Walker};
use gasket_lab::obstacles::{self, ObstacleParams};
use gasket_lab::operators::{self, BoundaryMode, DiscreteGenerator, KillOrder};
use gasket_lab::potentials::{self, ProfileSpec};
use gasket_lab::rng::{self, Tag};
use gasket_lab::subordinators::{self, LaplaceExponent, SubordinatorSampler};
use gasket_lab::DIM_H;
use nalgebra::DMatrix;
use rand::Rng;

static SERIAL: Mutex<()> = Mutex::new(());

fn serial() -> MutexGuard<'static, ()> {
    SERIAL.lock().unwrap_or_else(|e| e.into_inner())
}

fn report(id: u32, pass: bool, detail: String) {
    println!("\nAC{id} {} {detail}", if pass { "PASS" } else { "FAIL" });
    assert!(pass, "AC{id} failed: {detail}");
}

fn phi(s: &str) -> LaplaceExponent {
    s.parse().unwrap()
}

fn profile(s: &str) -> ProfileSpec {
    s.parse().unwrap()
}

fn log_grid(a: f64, b: f64, k: usize) -> Vec<f64> {
    (0..k).map(|i| a * (b / a).powf(i as f64 / (k - 1) as f64)).collect()
}

#[test]
fn ac01_geometry_exactness() {
    let _g = serial();
    let start = Instant::now();
    let sizes: &[(u32, &[u32])] = &[(0, &[0, 1, 2, 3, 4, 5, 6, 7]), (1, &[0, 1, 2, 3, 4, 5]), (2, &[0, 1, 2, 3, 4]), (3, &[1, 2, 3]), (4, &[2])];
    let mut graphs = 0;
    let mut exact = true;
    let mut addresses = true;
    for &(m, ns) in sizes {
        for &n in ns {
            let g = build_graph(m, n).unwrap();
            let rep = geometry_report(&g);
            exact &= rep.exact_ok();
            for k in 0..g.num_cells() {
                let addr = g.cell_address(k);
                addresses &= addr.index() == k as u64
                    && CellAddress::from_index(m, n, k as u64) == addr
                    && addr.lower_left(m) == g.coords(g.cells()[k][0]);
            }
            graphs += 1;
        }
    }
    let slope = geometry_report(&build_graph(0, 7).unwrap()).dim_slope.unwrap();
    let secs = start.elapsed().as_secs_f64();
    let pass = exact && addresses && (slope - DIM_H).abs() <= 0.15 && secs < 10.0;
    report(1, pass, format!("graphs={graphs} exact={exact} addresses={addresses} slope={slope:.4} (d={DIM_H:.4}±0.15) secs={secs:.1}"));
}

/// `e^{-b t L}(x, y) / m(y)` with `L = 5^n (I - P)` and `P` the simple
/// random walk, killed at the corners in Dirichlet mode.
fn drift_kernel_oracle(m: u32, n: u32, b: f64, t: f64, dirichlet: bool) -> (Vec<usize>, DMatrix<f64>) {
    let g = build_graph(m, n).unwrap();
    let live: Vec<usize> = (0..g.num_vertices()).filter(|&v| !(dirichlet && g.is_boundary(v))).collect();
    let pos = |v: usize| live.iter().position(|&w| w == v);
    let scale = 5f64.powi(n as i32);
    let mut l = DMatrix::zeros(live.len(), live.len());
    for (i, &x) in live.iter().enumerate() {
        l[(i, i)] = scale;
        let deg = g.neighbors(x).len() as f64;
        for &y in g.neighbors(x) {
            if let Some(j) = pos(y) {
                l[(i, j)] -= scale / deg;
            }
        }
    }
    let mut e = (l * (-b * t)).exp();
    for (j, &y) in live.iter().enumerate() {
        let my = g.mass(y);
        e.column_mut(j).iter_mut().for_each(|v| *v /= my);
    }
    (live, e)
}

#[test]
fn ac02_subordination_identity() {
    let _g = serial();
    let start = Instant::now();
    let b = 1.7;
    let drift = LaplaceExponent::PureDrift { b };
    let mut worst_rel: f64 = 0.0;
    for &(m, n, t, dirichlet) in &[(0u32, 2u32, 0.5, false), (0, 2, 0.5, true), (0, 3, 0.1, false), (1, 2, 0.25, false), (1, 2, 0.25, true)] {
        let g = Arc::new(build_graph(m, n).unwrap());
        let mode = if dirichlet { BoundaryMode::Dirichlet } else { BoundaryMode::Reflected };
        let k = operators::subordinate_kernel(&DiscreteGenerator::new(g, mode), &drift, KillOrder::default(), t).unwrap();
        let (live, oracle) = drift_kernel_oracle(m, n, b, t, dirichlet);
        assert_eq!(k.indices, live);
        for i in 0..live.len() {
            for j in 0..live.len() {
                let o = oracle[(i, j)];
                worst_rel = worst_rel.max((k.values[(i, j)] - o).abs() / o.abs());
            }
        }
    }

    let stable = phi("stable:g=0.5dw");
    let g = Arc::new(build_graph(0, 1).unwrap());
    let walker = Walker::new(g, stable, 1.0).unwrap();
    let mut worst_z: f64 = 0.0;
    let mut pvals = Vec::new();
    for (k, &t) in [0.5, 1.0, 2.0].iter().enumerate() {
        let (z, p) = montecarlo::kernel_consistency(&walker, 0, t, 100_000, 20 + k as u64).unwrap();
        worst_z = worst_z.max(z);
        pvals.push(p);
    }
    let secs = start.elapsed().as_secs_f64();
    let pass = worst_rel < 1e-12 && worst_z <= 3.0 && secs < 120.0;
    report(2, pass, format!("drift_rel_err={worst_rel:.2e} (<1e-12) stable_worst_z={worst_z:.2} (<=3) chi2_p={pvals:.3?} secs={secs:.1}"));
}

#[test]
fn ac03_tail_bound() {
    let _g = serial();
    let start = Instant::now();
    let p = LaplaceExponent::StableWithDrift { b: 0.0, g: 0.5 };
    let bound = subordinators::tail_bound(&p, 1.0, 100.0).unwrap();
    let mut sampler = SubordinatorSampler::new(p, rng::stream(3, Tag::Subordinator, 0, 0)).unwrap();
    let samples = 1_000_000;
    let mut hits = 0usize;
    for _ in 0..samples {
        if sampler.sample(1.0).unwrap() > 100.0 {
            hits += 1;
        }
    }
    let freq = hits as f64 / samples as f64;
    let exact = levy_tail(100.0);
    let se = (exact * (1.0 - exact) / samples as f64).sqrt();
    let secs = start.elapsed().as_secs_f64();
    let pass = freq <= 0.31651 && freq <= bound && (freq - exact).abs() <= 4.0 * se && secs < 60.0;
    report(3, pass, format!("p_hat={freq:.5} exact={exact:.5} bound={bound:.5} (listed 0.31651) secs={secs:.1}"));
}

/// `P(S_1 > x) = erf(1 / (2 sqrt x))` for `E e^{-λ S_1} = e^{-sqrt λ}`.
fn levy_tail(x: f64) -> f64 {
    erf(1.0 / (2.0 * x.sqrt()))
}

/// Series `erf(z) = 2/sqrt(π) Σ (-1)^k z^{2k+1} / (k! (2k+1))`, for small `z`.
fn erf(z: f64) -> f64 {
    let mut term = z;
    let mut sum = z;
    for k in 1..40 {
        term *= -z * z / k as f64;
        sum += term / (2 * k + 1) as f64;
    }
    sum * 2.0 / std::f64::consts::PI.sqrt()
}

#[test]
fn ac04_exponential_formula() {
    let _g = serial();
    let start = Instant::now();
    let g = build_graph(0, 2).unwrap();
    let prof = profile("indicator:A=1,a0=0.5");
    let nu = 2.0;
    let occs: Vec<Vec<f64>> = (0..10u64)
        .map(|k| {
            let mut r = rng::stream(4, Tag::Occupation, k, 0);
            (0..g.num_vertices()).map(|_| if r.random::<f64>() < 0.5 { 0.0 } else { r.random::<f64>() * 0.8 }).collect()
        })
        .collect();
    let clouds = 100_000u64;
    let mut sums = vec![(0.0f64, 0.0f64); occs.len()];
    for rep in 0..clouds {
        let cloud = potentials::sample_cloud(&g, nu, 4, rep).unwrap();
        let v = potentials::evaluate_potential(&g, &cloud, &prof).unwrap().values;
        for (s, occ) in sums.iter_mut().zip(&occs) {
            let w = (-occ.iter().zip(&v).map(|(l, x)| l * x).sum::<f64>()).exp();
            s.0 += w;
            s.1 += w * w;
        }
    }
    let mut worst: f64 = 0.0;
    for (s, occ) in sums.iter().zip(&occs) {
        let n = clouds as f64;
        let mean = s.0 / n;
        let se = ((s.1 / n - mean * mean) / (n - 1.0)).sqrt();
        let exact = potentials::annealed_fk_weight(&g, &prof, nu, occ).unwrap();
        worst = worst.max((mean - exact).abs() / se);
    }
    let secs = start.elapsed().as_secs_f64();
    let pass = worst <= 3.0 && secs < 60.0;
    report(4, pass, format!("vectors=10 clouds={clouds} worst_z={worst:.2} (<=3) secs={secs:.1}"));
}

#[test]
fn ac05_scaling_identities() {
    let _g = serial();
    let start = Instant::now();
    let mut kernel_dev: f64 = 0.0;
    for m in [1, 2] {
        for t in [0.3, 1.0] {
            kernel_dev = kernel_dev.max(operators::reflected_kernel_scaling_check(m, 2, t).unwrap());
        }
    }
    let drift = LaplaceExponent::PureDrift { b: 1.7 };
    let cert = subordinators::classify(&drift);
    let prof = profile("indicator:A=1,a0=0.25");
    let mut eig_dev: f64 = 0.0;
    for (m, n) in [(1u32, 3u32), (2, 2)] {
        let g_m = Arc::new(build_graph(m, n).unwrap());
        let g_0 = Arc::new(build_graph(0, n + m).unwrap());
        for rep in 0..3 {
            let cloud = potentials::sample_cloud(&g_m, 1.0, 5, rep).unwrap();
            let v = potentials::evaluate_potential(&g_m, &cloud, &prof).unwrap().values;
            for mode in [BoundaryMode::Reflected, BoundaryMode::Dirichlet] {
                let e = operators::eigen_scaling_check(&drift, &cert, &v, g_m.clone(), g_0.clone(), mode).unwrap();
                eig_dev = eig_dev.max((e.lhs - e.rhs).abs() / e.rhs.abs());
            }
        }
    }
    let secs = start.elapsed().as_secs_f64();
    let pass = kernel_dev < 1e-10 && eig_dev < 1e-10 && secs < 300.0;
    report(5, pass, format!("kernel_dev={kernel_dev:.2e} eigen_rel={eig_dev:.2e} (<1e-10) secs={secs:.1}"));
}

#[test]
fn ac06_monotonicity() {
    let _g = serial();
    let start = Instant::now();
    let g = Arc::new(build_graph(1, 3).unwrap());
    let template = Experiment::new(g, BoundaryMode::Reflected, phi("drift:b=1"), profile("indicator:A=1,a0=0.25"), 1.0, 6);
    let ts = [2.0, 4.0, 8.0];
    let study = ids::monotonicity_study(&template, 1, 2, &ts, 200).unwrap();
    let mut worst: f64 = f64::INFINITY;
    for &(d, se) in study.steps[0].iter().chain(&study.domination) {
        worst = worst.min(d / se);
    }
    let secs = start.elapsed().as_secs_f64();
    let pass = worst >= -2.0 && secs < 1800.0;
    let fmt = |v: &[(f64, f64)]| v.iter().map(|(m, s)| format!("{m:.3e}±{s:.1e}")).collect::<Vec<_>>().join(",");
    report(
        6,
        pass,
        format!("step0->1=[{}] domination=[{}] min_z={worst:.2} (>=-2) secs={secs:.1}", fmt(&study.steps[0]), fmt(&study.domination)),
    );
}

#[test]
fn ac07_bound_sandwich() {
    let _g = serial();
    let start = Instant::now();
    let drift = phi("drift:b=1");
    let beta = subordinators::classify(&drift).beta;
    let prof = profile("power:K=1,theta=1.5,core=0.25");
    let theta = 1.5;
    let nu = 1.0;
    let g = Arc::new(build_graph(2, 3).unwrap());

    let lower_ts = [4.0, 8.0, 16.0];
    let dir = Experiment::new(g.clone(), BoundaryMode::Dirichlet, drift.clone(), prof.clone(), nu, 8);
    let (curve, _) = ids::annealed_laplace(&dir, &lower_ts, 200).unwrap();
    let lam = |level: u32| operators::free_dirichlet_ground(level);
    let points: Vec<_> = lower_ts.iter().map(|&t| ids::lower_certificate(&drift, beta, &prof, theta, nu, t, &g, &lam).unwrap()).collect();
    let lower = BoundCertificate::lower(&curve, &points);

    let upper_ts = [2.0, 4.0, 8.0];
    let refl = Experiment::new(g.clone(), BoundaryMode::Reflected, drift.clone(), prof.clone(), nu, 9);
    let (curve, _) = ids::annealed_laplace(&refl, &upper_ts, 200).unwrap();
    let gen = DiscreteGenerator::new(g.clone(), BoundaryMode::Reflected);
    let points: Vec<_> = upper_ts
        .iter()
        .map(|&t| {
            let c_hat = ids::kernel_sup(&gen, &drift, KillOrder::default(), t).unwrap();
            ids::upper_long_range(&g, &prof, nu, t, t.powf(1.0 / (DIM_H + theta)), c_hat).unwrap()
        })
        .collect();
    let upper = BoundCertificate::upper(&curve, &points);

    let secs = start.elapsed().as_secs_f64();
    let pass = lower.holds_within(2.0) && upper.holds_within(2.0) && lower.t.len() == 3 && upper.t.len() == 3 && secs < 1800.0;
    let rows = |c: &BoundCertificate| {
        (0..c.t.len()).map(|k| format!("t={}:{:.3e}/{:.3e}", c.t[k], c.lhs[k], c.rhs[k])).collect::<Vec<_>>().join(",")
    };
    report(7, pass, format!("lower(lhs/rhs)=[{}] upper(lhs/rhs)=[{}] secs={secs:.1}", rows(&lower), rows(&upper)));
}

struct FitCase {
    slope: f64,
    target: f64,
}

fn measure_fit(p: &str, prof: &str) -> FitCase {
    let g = Arc::new(build_graph(3, 3).unwrap());
    let exp = Experiment::new(g, BoundaryMode::Dirichlet, phi(p), profile(prof), 1.0, 7);
    let (_, ids) = ids::annealed_laplace(&exp, &[1.0], 40).unwrap();
    let window = ids.tail_window(10, (-1f64).exp()).unwrap();
    let fit = ids::lifschitz_fit_measure(&ids, window, 12, 200, 7).unwrap();
    let gamma = exp.phi.gamma().unwrap();
    FitCase { slope: fit.slope, target: ids::target_slopes(gamma).1 }
}

#[test]
fn ac08_lifschitz_fits() {
    let _g = serial();
    let start = Instant::now();
    let hard = "indicator:A=100,a0=0.25";

    let g = Arc::new(build_graph(3, 3).unwrap());
    let exp = Experiment::new(g, BoundaryMode::Dirichlet, phi("drift:b=1"), profile(hard), 1.0, 7);
    let (curve, _) = ids::annealed_laplace(&exp, &log_grid(1.0, 64.0, 13), 40).unwrap();
    let lap = ids::lifschitz_fit_laplace(&curve, (4.0, 64.0), 200, 7).unwrap();
    let lap_target = 3f64.ln() / 15f64.ln();
    let a_ok = (lap.slope / lap_target - 1.0).abs() <= 0.25;

    let stable = measure_fit("stable:g=0.5dw", hard);
    let b_ok = (stable.slope / stable.target - 1.0).abs() <= 0.25 && (stable.target - 9f64.ln() / 5f64.ln()).abs() < 1e-12;

    let long = measure_fit("drift:b=1", "power:K=10,theta=1,core=0.25");
    let short = measure_fit("drift:b=1", hard);
    let c_target = DIM_H / 1.0;
    let c_ok = (long.slope / c_target - 1.0).abs() <= 0.30 && long.slope > short.slope;

    let secs = start.elapsed().as_secs_f64();
    let pass = a_ok && b_ok && c_ok && secs < 3600.0;
    report(
        8,
        pass,
        format!(
            "(a) laplace={:.4} target={lap_target:.5} ±25% {a_ok}; (b) measure={:.4} target={:.5} ±25% {b_ok}; (c) long={:.4} target={c_target:.4} ±30% short={:.4} {c_ok}; caveat: finite volume G_3 level 3, pre-asymptotic slopes; secs={secs:.1}",
            lap.slope, stable.slope, stable.target, long.slope, short.slope
        ),
    );
}

#[test]
fn ac09_survival_bounds() {
    let _g = serial();
    let start = Instant::now();
    let drift = phi("drift:b=1");
    let beta = subordinators::classify(&drift).beta;
    let prof = profile("power:K=1,theta=1.5,core=0.25");
    let cert = montecarlo::survival_bound_check(&drift, beta, &prof, 1.5, 1.0, &[4.0, 8.0, 16.0], 3, 2000, 9).unwrap();
    let mut pass = cert.rows.len() == 3;
    let mut rows = Vec::new();
    for r in &cert.rows {
        let agree = r.estimate.agreement();
        pass &= r.lower_holds(2.0) && r.upper_holds(2.0) && agree <= 3.0;
        let (a, se) = r.estimate.mean_a();
        rows.push(format!("t={}:{:.3e}±{:.1e} in [{:.3e},{:.3e}] z_AB={agree:.2}", r.t, a, se, r.lower_rhs, r.upper_rhs));
    }
    let secs = start.elapsed().as_secs_f64();
    pass &= secs < 1200.0;
    report(9, pass, format!("{} secs={secs:.1}", rows.join(" ")));
}

fn obstacle_base(p: &str, prof: &str, n: u32, a: f64, b_exp: i32) -> ObstacleParams {
    ObstacleParams { n, scale: 4, a, b_exp, delta: 0.05, k_cap: 10.0, r: 4.0, r0: 0.5, nu: 1.0, profile: profile(prof), phi: phi(p) }
}

#[test]
fn ac10_enlargement_of_obstacles() {
    let _g = serial();
    let start = Instant::now();
    let base = obstacle_base("drift:b=1", "indicator:A=1,a0=0.25", 8, 0.25, 1);
    assert_eq!(base.b() / base.a, 8.0);
    let sweep = obstacles::enlargement_sweep(&base, &[4, 5, 6], 200, 10).unwrap();
    let fr: Vec<f64> = [4, 5, 6].iter().map(|&s| sweep.violating_fraction(2f64.powi(-s))).collect();
    let bad = sweep.bad_volume_fraction(base.delta);
    let secs = start.elapsed().as_secs_f64();
    let pass = fr[2] <= 0.05 && fr[1] <= fr[0] && fr[2] <= fr[1] && bad == 1.0 && secs < 2700.0;
    report(10, pass, format!("violating_fraction(2^-4,2^-5,2^-6)={fr:.3?} bad_volume={bad} secs={secs:.1}"));
}

#[test]
fn ac11_probe_suite() {
    let _g = serial();
    let start = Instant::now();
    let scales = [4u32, 5, 6];
    let mut pass = true;
    let mut parts = Vec::new();
    for p in ["drift:b=1", "stable:g=0.5dw"] {
        let base = obstacle_base(p, "indicator:A=1,a0=1", 6, 1.0, 1);
        let gamma = base.gamma().unwrap();
        let level = obstacles::recipe_level(1.0, base.b(), base.n - scales[0]).unwrap();
        let recipe = obstacles::recipe(&base.phi, gamma, 1.0, 1.0, base.b(), level, 11).unwrap();
        let g = build_graph(0, base.n).unwrap();
        let radii: Vec<f64> = scales.iter().flat_map(|&s| ObstacleParams { scale: s, ..base.clone() }.test_radii()).collect();
        let c_d = obstacles::doubling_constant(&g, &radii);
        let mut consts = Vec::new();
        for &s in &scales {
            let r = obstacles::probe_assumptions(&ObstacleParams { scale: s, ..base.clone() }, &recipe, c_d, 11).unwrap();
            pass &= !r.render().is_empty() && r.p1_sup.is_finite() && r.p3_holds();
            consts.push(r.p3_constant());
        }
        let lo = consts.iter().cloned().fold(f64::INFINITY, f64::min);
        let hi = consts.iter().cloned().fold(0.0, f64::max);
        pass &= lo > 0.0 && hi / lo < 2.0;
        parts.push(format!("{p}: c1={:.2e} P3_constant={consts:.4?} ratio={:.3}", recipe.c1, hi / lo));
    }
    let secs = start.elapsed().as_secs_f64();
    pass &= secs < 1200.0;
    report(11, pass, format!("{} secs={secs:.1}", parts.join("; ")));
}
