//! Invariants checked on randomized inputs.

use std::sync::Arc;

use gasket_lab::gasket::{build_graph, project_vertex, GasketGraph};
use rand::Rng;
use gasket_lab::montecarlo::{self, PathConfig, Walker};
use gasket_lab::obstacles::{self, ObstacleParams, ObstacleSetup};
use gasket_lab::operators::{self, BoundaryMode, DiscreteGenerator, KillOrder, SubordinateOperator};
use gasket_lab::potentials::{self, ObstaclePoint, ProfileSpec};
use gasket_lab::rng::{self, Tag};
use gasket_lab::subordinators::{self, LaplaceExponent, SubordinatorSampler};
use gasket_lab::{DIM_H, DIM_W};
use proptest::prelude::*;

fn graph(m: u32, n: u32) -> Arc<GasketGraph> {
    Arc::new(build_graph(m, n).unwrap())
}

fn profile(s: &str) -> ProfileSpec {
    s.parse().unwrap()
}

fn cfg(cases: u32) -> ProptestConfig {
    ProptestConfig { cases, ..ProptestConfig::default() }
}

proptest! {
    #![proptest_config(cfg(24))]

    #[test]
    fn metric_is_symmetric_and_triangular(m in 0u32..3, n in 1u32..4, seed in any::<u64>()) {
        let g = graph(m, n);
        let nv = g.num_vertices();
        let mut r = rng::stream(seed, Tag::Scratch, 0, 0);
        for _ in 0..400 {
            let (x, y, z) = (r.random_range(0..nv), r.random_range(0..nv), r.random_range(0..nv));
            prop_assert_eq!(g.distance(x, y), g.distance(y, x));
            prop_assert!(g.distance(x, z) <= g.distance(x, y) + g.distance(y, z) + 1e-12);
        }
    }

    #[test]
    fn projection_is_idempotent(m in 0u32..2, k in 1u32..3, n in 1u32..3) {
        let target = build_graph(m, n).unwrap();
        let host = build_graph(m + k, n).unwrap();
        for v in 0..host.num_vertices() {
            let p = project_vertex(&host, &target, v).unwrap();
            let back = host.vertex_at(target.coords(p)).unwrap();
            prop_assert_eq!(project_vertex(&host, &target, back).unwrap(), p);
        }
    }

    #[test]
    fn stable_drift_is_bernstein(b in 0.0f64..3.0, g in 0.05f64..0.95) {
        let phi = LaplaceExponent::StableWithDrift { b, g };
        prop_assert!(subordinators::bernstein_check(&phi).is_ok());
        prop_assert!(subordinators::classify(&phi).consistent);
    }

    #[test]
    fn psi_lower_bounds_hold(g in 0.1f64..0.9, b in 0.1f64..2.0, u in 0.0f64..1.0) {
        let phi = LaplaceExponent::StableWithDrift { b, g };
        let cert = subordinators::classify(&phi);
        prop_assert!(cert.a_bar.is_some());
        if let (Some([a1, a2]), Some(x1), Some(x2)) = (cert.a_bar, cert.alpha1, cert.alpha2) {
            let small = 10f64.powf(-6.0 * u);
            let large = 10f64.powf(6.0 * u);
            prop_assert!(phi.psi(small) >= a1 * small.powf(x1 / DIM_W) * (1.0 - 1e-9));
            prop_assert!(phi.psi(large) >= a2 * large.powf(x2 / DIM_W) * (1.0 - 1e-9));
        }
    }

    #[test]
    fn potential_increase_raises_every_eigenvalue(seed in any::<u64>(), bump in 0.0f64..5.0) {
        let g = graph(0, 2);
        let gen = DiscreteGenerator::new(g.clone(), BoundaryMode::Dirichlet);
        let phi = LaplaceExponent::StableWithDrift { b: 0.5, g: 0.5 };
        let op = SubordinateOperator::new(&gen, &phi, KillOrder::default()).unwrap();
        let mut r = rng::stream(seed, Tag::Scratch, 1, 0);
        let v: Vec<f64> = (0..g.num_vertices()).map(|_| r.random::<f64>() * 3.0).collect();
        let w: Vec<f64> = v.iter().map(|&x| x + bump * r.random::<f64>()).collect();
        let lv = op.eigenvalues(&v).unwrap();
        let lw = op.eigenvalues(&w).unwrap();
        for (a, b) in lv.iter().zip(&lw) {
            prop_assert!(*b >= a - 1e-9 * (1.0 + a.abs()));
        }
    }

    #[test]
    fn split_and_periodization(seed in 0u64..1000, a in 0.1f64..1.5) {
        let g = graph(1, 3);
        let host = build_graph(3, 3).unwrap();
        let prof = profile("power:K=1,theta=1.5,core=0.25");
        let cloud = potentials::sample_cloud(&g, 1.0, seed, 0).unwrap();
        let v = potentials::evaluate_potential(&g, &cloud, &prof).unwrap().values;
        let (short, long) = potentials::split_profile(&prof, a);
        let vs = potentials::evaluate_potential(&g, &cloud, &short).unwrap().values;
        let vl = potentials::evaluate_potential(&g, &cloud, &long).unwrap().values;
        for i in 0..v.len() {
            prop_assert!(vs[i] >= 0.0 && vs[i] <= v[i] + 1e-12);
            prop_assert!((vs[i] + vl[i] - v[i]).abs() <= 1e-12 * (1.0 + v[i]));
        }
        let star = potentials::periodize(&host, &g, &cloud, &prof).unwrap().potential.values;
        for i in 0..v.len() {
            prop_assert!(star[i] >= v[i] - 1e-12 * (1.0 + v[i]));
        }
    }

    #[test]
    fn laplace_samplers_match_exponents(idx in 0usize..5, lambda in 0.2f64..3.0) {
        let presets = ["drift:b=1", "stable_drift:b=0.5,g=0.5dw", "stable_mixture:g=0.3333dw/0.6667dw", "nested_stable:g1=0.5dw,g2=0.6dw", "relativistic:alpha=0.5dw,theta=1"];
        let phi: LaplaceExponent = presets[idx].parse().unwrap();
        let mut s = SubordinatorSampler::new(phi.clone(), rng::stream(idx as u64, Tag::Subordinator, 9, 0)).unwrap();
        let xs: Vec<f64> = (0..20_000).map(|_| (-lambda * s.sample(1.0).unwrap()).exp()).collect();
        let n = xs.len() as f64;
        let mean = xs.iter().sum::<f64>() / n;
        let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
        let exact = (-phi.evaluate(lambda).unwrap()).exp();
        prop_assert!((mean - exact).abs() <= 4.0 * (var / n).sqrt() + 1e-12, "{}: {mean} vs {exact}", presets[idx]);
    }
}

proptest! {
    #![proptest_config(cfg(8))]

    #[test]
    fn heat_semigroup(t1 in 0.05f64..1.0, t2 in 0.05f64..1.0) {
        let gen = DiscreteGenerator::new(graph(1, 2), BoundaryMode::Reflected);
        let a = operators::heat_kernel(&gen, t1).unwrap();
        let b = operators::heat_kernel(&gen, t2).unwrap();
        let c = operators::heat_kernel(&gen, t1 + t2).unwrap();
        let res = (a.compose(&b).values - &c.values).amax() / c.values.amax();
        prop_assert!(res < 1e-8);
    }

    #[test]
    fn r_w_and_s_w_monotone(t in 1.0f64..20.0, a in 0.2f64..1.0) {
        let g = build_graph(1, 3).unwrap();
        let prof = profile("power:K=1,theta=1.5,core=0.25");
        let r = potentials::r_w(&g, &prof, a, t).unwrap();
        prop_assert!(potentials::r_w(&g, &prof, a, 2.0 * t).unwrap() >= r - 1e-12);
        prop_assert!(potentials::r_w(&g, &prof, 1.5 * a, t).unwrap() <= r + 1e-12);
        let s = potentials::s_w(&g, &prof, a).unwrap();
        prop_assert!(potentials::s_w(&g, &prof, 1.5 * a).unwrap() <= s + 1e-12);
    }

    #[test]
    fn classification_monotone_under_added_points(seed in 0u64..500, extra in 1usize..20) {
        let g = graph(0, 6);
        let params = ObstacleParams {
            n: 6, scale: 3, a: 0.25, b_exp: 1, delta: 0.05, k_cap: 10.0, r: 4.0, r0: 0.5, nu: 1.0,
            profile: profile("indicator:A=1,a0=0.25"), phi: LaplaceExponent::PureDrift { b: 1.0 },
        };
        let c_d = obstacles::doubling_constant(&g, &params.test_radii());
        let base = ObstacleSetup::sample(params.clone(), g.clone(), c_d, seed, 0).unwrap();
        let before = obstacles::classify(&base);
        let mut cloud = base.cloud.clone();
        let mut r = rng::stream(seed, Tag::Scratch, 2, 0);
        for _ in 0..extra {
            cloud.points.push(ObstaclePoint { cell: r.random_range(0..g.num_cells()), corner: r.random_range(0..3u8) });
        }
        let grown = ObstacleSetup::with_cloud(params, g.clone(), c_d, cloud).unwrap();
        let after = obstacles::classify(&grown);
        for (i, &ok) in before.good.iter().enumerate() {
            prop_assert!(!ok || after.good[i]);
        }
    }
}

#[test]
fn kill_order_ground_values() {
    let g = graph(0, 3);
    let gen = DiscreteGenerator::new(g.clone(), BoundaryMode::Dirichlet);
    let zero = vec![0.0; g.num_vertices()];
    let walk = operators::free_dirichlet_ground(3).unwrap();
    for phi in ["stable:g=0.5dw", "stable_drift:b=1,g=0.3dw", "drift:b=2"] {
        let phi: LaplaceExponent = phi.parse().unwrap();
        let kts = SubordinateOperator::new(&gen, &phi, KillOrder::KillThenSubordinate).unwrap().lowest(&zero, 1).unwrap().values[0];
        let stk = SubordinateOperator::new(&gen, &phi, KillOrder::SubordinateThenKill).unwrap().lowest(&zero, 1).unwrap().values[0];
        let target = phi.evaluate(walk).unwrap();
        assert!((kts - target).abs() < 1e-10 * target, "{phi}: {kts} vs {target}");
        assert!(stk <= target * (1.0 + 1e-12), "{phi}: {stk} > {target}");
    }
}

#[test]
fn diagonal_sup_nonincreasing_after_unit_time() {
    let gen = DiscreteGenerator::new(graph(1, 3), BoundaryMode::Reflected);
    let phi: LaplaceExponent = "stable_drift:b=1,g=0.5dw".parse().unwrap();
    let sups: Vec<f64> = [1.0, 2.0, 4.0, 8.0].iter().map(|&t| gasket_lab::ids::kernel_sup(&gen, &phi, KillOrder::default(), t).unwrap()).collect();
    assert!(sups.iter().all(|s| s.is_finite()));
    assert!(sups.windows(2).all(|w| w[1] <= w[0] * (1.0 + 1e-12)), "{sups:?}");
}

#[test]
fn ball_measure_is_d_regular() {
    let g = build_graph(2, 4).unwrap();
    let mut ratios = Vec::new();
    for x in (0..g.num_vertices()).step_by(g.num_vertices() / 50) {
        for e in -3..=2 {
            let r = 2f64.powi(e);
            ratios.push(g.ball_measure(x, r) / r.powf(DIM_H));
        }
    }
    let hi = ratios.iter().cloned().fold(0.0, f64::max);
    let lo = ratios.iter().cloned().fold(f64::INFINITY, f64::min);
    let c = (hi * lo).sqrt();
    assert!(hi / c <= 4.0 && c / lo <= 4.0, "spread {lo}..{hi}");
}

#[test]
fn truncated_potential_lowers_ground_state() {
    let g = graph(1, 3);
    let gen = DiscreteGenerator::new(g.clone(), BoundaryMode::Reflected);
    let op = SubordinateOperator::new(&gen, &LaplaceExponent::PureDrift { b: 1.0 }, KillOrder::default()).unwrap();
    let prof = profile("power:K=1,theta=1.5,core=0.25");
    for seed in 0..5 {
        let cloud = potentials::sample_cloud(&g, 1.0, seed, 0).unwrap();
        let v = potentials::evaluate_potential(&g, &cloud, &prof).unwrap().values;
        let (short, _) = potentials::split_profile(&prof, 0.5);
        let vt = potentials::evaluate_potential(&g, &cloud, &short).unwrap().values;
        let full = op.lowest(&v, 1).unwrap().values[0];
        let cut = op.lowest(&vt, 1).unwrap().values[0];
        assert!(full >= cut - 1e-12, "{full} < {cut}");
    }
}

#[test]
fn estimator_a_has_smaller_variance() {
    let g = graph(0, 3);
    let walker = Walker::new(g, LaplaceExponent::PureDrift { b: 1.0 }, 1.0).unwrap();
    for (k, prof) in ["indicator:A=1,a0=0.25", "power:K=1,theta=1.5,core=0.25"].iter().enumerate() {
        let est = montecarlo::fk_survival(&walker, &profile(prof), 1.0, 5, 1.0, 2000, 40 + k as u64, &PathConfig::default()).unwrap();
        let (_, sa) = est.mean_a();
        let (_, sb) = est.mean_b();
        assert!(sa < sb, "{prof}: {sa} vs {sb}");
        assert!(est.agreement() <= 3.0);
    }
}

#[test]
fn dirichlet_survival_matches_paths() {
    let g = graph(0, 3);
    let alive: Vec<bool> = (0..g.num_vertices()).map(|v| !g.is_boundary(v)).collect();
    let walker = Walker::new(g.clone(), "stable_drift:b=1,g=0.5dw".parse().unwrap(), 1.0).unwrap();
    let x = montecarlo::center_vertex(&g);
    let t = 0.02;
    let config = PathConfig { alive: Some(Arc::new(alive)), ..PathConfig::default() };
    let est = montecarlo::fk_survival(&walker, &profile("indicator:A=1,a0=0.25"), 0.0, x, t, 20_000, 3, &config).unwrap();
    let gen = DiscreteGenerator::new(g.clone(), BoundaryMode::Dirichlet);
    let exact = montecarlo::spectral_survival(&gen, walker.exponent(), KillOrder::SubordinateThenKill, x, t).unwrap();
    let (m, se) = est.mean_a();
    assert!((m - exact).abs() <= 3.0 * se.max(1e-9), "{m} ± {se} vs {exact}");
}

#[test]
fn r_w_limit_for_bounded_support() {
    let g = build_graph(1, 3).unwrap();
    let prof = profile("indicator:A=1,a0=0.75");
    let a = 0.25;
    let limit = (0..g.num_vertices())
        .map(|x| {
            let hops = g.bfs(x);
            (0..g.num_vertices())
                .filter(|&y| {
                    let d = hops[y] as f64 * g.step();
                    d > a + 1e-12 && d <= 0.75 + 1e-12
                })
                .map(|y| g.mass(y))
                .sum::<f64>()
        })
        .fold(f64::INFINITY, f64::min);
    let r = potentials::r_w(&g, &prof, a, 1e3).unwrap();
    assert!((r - limit).abs() < 1e-6, "{r} vs {limit}");
}
