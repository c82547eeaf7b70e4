//! Frozen reference values, each checked against an independent route.

use std::sync::Arc;

use gasket_lab::gasket::{build_graph, fiber_vertices};
use gasket_lab::ids;
use gasket_lab::operators::{self, BoundaryMode, DiscreteGenerator, KillOrder, SubordinateOperator};
use gasket_lab::subordinators::{self, LaplaceExponent, Regime};
use gasket_lab::DIM_W;

fn phi(s: &str) -> LaplaceExponent {
    s.parse().unwrap()
}

#[test]
fn vertex_and_edge_counts_follow_recurrence() {
    let (mut v, mut e) = (3usize, 3usize);
    for n in 0..6 {
        let g = build_graph(0, n).unwrap();
        assert_eq!((g.num_vertices(), g.num_edges()), (v, e), "n={n}");
        assert_eq!(g.num_cells(), 3usize.pow(n));
        assert_eq!(*g.total_mass().numer(), *g.total_mass().denom());
        v = 3 * v - 3;
        e *= 3;
    }
    let g = build_graph(0, 2).unwrap();
    assert_eq!((g.num_vertices(), g.num_edges()), (15, 27));
}

#[test]
fn fibers_have_three_to_the_k_points() {
    let target = build_graph(0, 2).unwrap();
    for k in 1..=3u32 {
        let host = build_graph(k, 2).unwrap();
        for y in 0..target.num_vertices() {
            if target.is_boundary(y) {
                continue;
            }
            assert_eq!(fiber_vertices(&host, &target, y).unwrap().len(), 3usize.pow(k), "k={k} y={y}");
        }
    }
}

#[test]
fn dirichlet_ground_matches_decimation() {
    let frozen = [2.5, 2.740294919945, 2.790117350867, 2.800153652277, 2.802163795492];
    for (i, &f) in frozen.iter().enumerate() {
        let n = i as u32 + 1;
        let dense = operators::free_dirichlet_ground(n).unwrap();
        let dec = operators::decimation_ground(n);
        assert!((dense - dec).abs() < 1e-9 * dec, "n={n}: {dense} vs {dec}");
        assert!((dec - f).abs() < 1e-11, "n={n}: {dec}");
    }
    let (g5, g6) = (operators::decimation_ground(5), operators::decimation_ground(6));
    assert!((g6 - g5).abs() / g5 < 0.03);
}

#[test]
fn subordinate_then_kill_ground_n5() {
    let g = Arc::new(build_graph(0, 5).unwrap());
    let gen = DiscreteGenerator::new(g.clone(), BoundaryMode::Dirichlet);
    let zero = vec![0.0; g.num_vertices()];
    for (p, frozen) in [("drift:b=1", 2.8021637955), ("stable:g=0.5dw", 0.1618611066), ("stable_drift:b=1,g=0.5dw", 3.1634302244)] {
        let op = SubordinateOperator::new(&gen, &phi(p), KillOrder::SubordinateThenKill).unwrap();
        let l = op.lowest(&zero, 1).unwrap().values[0];
        assert!((l - frozen).abs() < 1e-8, "{p}: {l}");
    }
}

#[test]
fn stable_levy_density_at_one() {
    let rho = subordinators::levy_density(&phi("stable:g=0.5dw"), 1.0).unwrap();
    let exact = 0.5 / std::f64::consts::PI.sqrt();
    assert!((rho - exact).abs() < 1e-6, "{rho} vs {exact}");
}

#[test]
fn tail_bound_closed_form() {
    let b = subordinators::tail_bound(&phi("stable:g=0.5dw"), 1.0, 100.0).unwrap();
    let exact = 0.2 / (1.0 - (-1.0f64).exp());
    assert!((b - exact).abs() < 1e-10, "{b} vs {exact}");
    assert!((b - 0.3163953414).abs() < 1e-9);
}

#[test]
fn target_slopes_closed_forms() {
    let (lap, meas) = ids::target_slopes(DIM_W);
    assert!((lap - 3f64.ln() / 15f64.ln()).abs() < 1e-12);
    let meas_half = ids::target_slopes(DIM_W / 2.0).1;
    assert!((meas_half - 9f64.ln() / 5f64.ln()).abs() < 1e-12);
    assert!((meas - 0.6826061944859854).abs() < 1e-12);
    assert!((lap - 0.40568387108221293).abs() < 1e-12);
}

#[test]
fn exponent_values_and_regimes() {
    let cases = [
        ("drift:b=1", 2.0, Regime::U1),
        ("stable:g=0.5dw", 2f64.sqrt(), Regime::U3),
        ("relativistic:alpha=0.5dw,theta=1", 3f64.sqrt() - 1.0, Regime::None),
        ("nested_stable:g1=0.5dw,g2=0.6dw", (2.0 + 2f64.sqrt()).powf(0.6), Regime::U3),
    ];
    for (p, exact, regime) in cases {
        let f = phi(p);
        assert!((f.evaluate(2.0).unwrap() - exact).abs() < 1e-12, "{p}");
        assert_eq!(subordinators::classify(&f).regime, regime, "{p}");
    }
}

#[test]
fn kernel_scaling_is_exact_on_matched_graphs() {
    let g0 = Arc::new(build_graph(0, 3).unwrap());
    assert_eq!(operators::kernel_scaling_deviation(g0.clone(), g0, 1.0).unwrap(), 0.0);
    for (m, t) in [(1, 1.0), (2, 0.5), (2, 1.0), (2, 2.0)] {
        let dev = operators::reflected_kernel_scaling_check(m, 2, t).unwrap();
        assert!(dev < 1e-10, "M={m} t={t}: {dev}");
    }
}

#[test]
fn pure_drift_eigen_scaling_is_equality() {
    for mode in [BoundaryMode::Reflected, BoundaryMode::Dirichlet] {
        let g = Arc::new(build_graph(1, 3).unwrap());
        let v: Vec<f64> = (0..g.num_vertices()).map(|i| ((i * 7919) % 13) as f64 / 4.0).collect();
        let gen = DiscreteGenerator::new(g.clone(), mode);
        let fast = SubordinateOperator::new(&gen, &phi("drift:b=2"), KillOrder::default()).unwrap();
        let unit = SubordinateOperator::new(&gen, &phi("drift:b=1"), KillOrder::default()).unwrap();
        let scaled: Vec<f64> = v.iter().map(|x| x / 2.0).collect();
        let a = fast.lowest(&v, 1).unwrap().values[0];
        let b = 2.0 * unit.lowest(&scaled, 1).unwrap().values[0];
        assert!((a - b).abs() < 1e-10 * a, "{mode:?}: {a} vs {b}");
    }
}
