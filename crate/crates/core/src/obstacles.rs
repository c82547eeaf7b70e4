//! Enlargement of obstacles on the unit triangle: good and bad obstacle
//! points, the coarse domains built from them, the comparison of principal
//! eigenvalues with enlarged killing balls, and probes of the recurrence
//! assumptions (P1)–(P6) the comparison relies on.
//!
//! Everything lives on `G_0` at a fixed level `n`. At scale `ε = 2^{-s}` the
//! profile is `W_ε(x, y) = ε^{-γ} W(x/ε, y/ε)` and the cloud has intensity
//! `3^s ν`.

use std::collections::HashSet;
use std::io::Write;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rayon::prelude::*;

use crate::error::{LabError, Result};
use crate::gasket::{build_graph, GasketGraph, Lattice};
use crate::numerics::{self, fmt17};
use crate::operators::{BoundaryMode, DiscreteGenerator, KillOrder, Spectrum, SubordinateOperator};
use crate::potentials::{self, Frame, PoissonConfiguration, ProfileSpec};
use crate::rng::{self, Tag};
use crate::subordinators::LaplaceExponent;
use crate::{mass_factor, DIM_H, DIM_W};

/// Parameters shared by all configurations of an experiment.
#[derive(Debug, Clone)]
pub struct ObstacleParams {
    /// Level of the `G_0` graph.
    pub n: u32,
    /// `ε = 2^{-scale}`.
    pub scale: u32,
    /// Range `a` of the unit-scale profile.
    pub a: f64,
    /// `b = 2^{b_exp}`.
    pub b_exp: i32,
    pub delta: f64,
    pub k_cap: f64,
    pub r: f64,
    pub r0: f64,
    pub nu: f64,
    /// Unit-scale profile, finite range `a`.
    pub profile: ProfileSpec,
    pub phi: LaplaceExponent,
}

impl ObstacleParams {
    pub fn eps(&self) -> f64 {
        2f64.powi(-(self.scale as i32))
    }

    pub fn b(&self) -> f64 {
        2f64.powi(self.b_exp)
    }

    /// Scaling exponent `γ` of the process: `d_w` for the walk, `α d_w`
    /// for the `α`-stable subordinator.
    pub fn gamma(&self) -> Result<f64> {
        match &self.phi {
            LaplaceExponent::PureDrift { .. } => Ok(DIM_W),
            LaplaceExponent::StableWithDrift { b, g } if *b == 0.0 => Ok(g * DIM_W),
            other => Err(LabError::Config(format!("obstacle runs need the drift or a pure stable exponent, got {other}"))),
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.profile.validate()?;
        let range = self.profile.range().ok_or_else(|| LabError::Config("profile must have finite range".into()))?;
        if range > self.a + 1e-12 {
            return Err(LabError::Config(format!("profile range {range} exceeds a = {}", self.a)));
        }
        if !(self.b() > self.a) {
            return Err(LabError::Config("enlargement needs b > a".into()));
        }
        if !(self.delta > 0.0 && self.k_cap > self.delta) {
            return Err(LabError::Config("need K > δ > 0".into()));
        }
        if !(self.r > 3.0) {
            return Err(LabError::Config("need R > 3".into()));
        }
        if self.a * self.eps() < 2f64.powi(-(self.n as i32)) - 1e-15 {
            return Err(LabError::Domain(format!(
                "range aε = {} is below the graph step 2^-{}",
                self.a * self.eps(),
                self.n
            )));
        }
        self.gamma().map(|_| ())
    }

    /// Radii `10 b ε R^l < r_0` of the goodness test.
    pub fn test_radii(&self) -> Vec<f64> {
        let mut out = Vec::new();
        let mut r = 10.0 * self.b() * self.eps();
        while r < self.r0 && out.len() < 64 {
            out.push(r);
            r *= self.r;
        }
        out
    }

    /// `V(x) = Σ_i W_ε(x, x_i)`.
    pub fn potential(&self, g: &GasketGraph, cloud: &PoissonConfiguration) -> Result<Vec<f64>> {
        let amp = self.eps().powf(-self.gamma()?);
        let frame = Frame { shift: self.scale };
        let mut v = vec![0.0; g.num_vertices()];
        for p in cloud.vertices(g) {
            self.profile.accumulate(g, frame, p, false, amp, &mut v);
        }
        Ok(v)
    }

    /// `W_ε(·, y)` as a vector.
    pub fn single(&self, g: &GasketGraph, y: usize) -> Result<Vec<f64>> {
        let amp = self.eps().powf(-self.gamma()?);
        let mut v = vec![0.0; g.num_vertices()];
        self.profile.accumulate(g, Frame { shift: self.scale }, y, false, amp, &mut v);
        Ok(v)
    }
}

/// One configuration: parameters, graph and cloud.
#[derive(Debug, Clone)]
pub struct ObstacleSetup {
    pub params: ObstacleParams,
    pub graph: Arc<GasketGraph>,
    pub cloud: PoissonConfiguration,
    /// Doubling constant used by the classification.
    pub c_d: f64,
}

impl ObstacleSetup {
    pub fn sample(params: ObstacleParams, graph: Arc<GasketGraph>, c_d: f64, seed: u64, replicate: u64) -> Result<ObstacleSetup> {
        params.validate()?;
        if graph.m() != 0 || graph.n() != params.n {
            return Err(LabError::Config("obstacle setups live on G_0 at the parameter level".into()));
        }
        let cloud = potentials::sample_cloud(&graph, params.nu * mass_factor(params.scale), seed, replicate)?;
        Ok(ObstacleSetup { params, graph, cloud, c_d })
    }

    pub fn with_cloud(params: ObstacleParams, graph: Arc<GasketGraph>, c_d: f64, cloud: PoissonConfiguration) -> Result<ObstacleSetup> {
        params.validate()?;
        Ok(ObstacleSetup { params, graph, cloud, c_d })
    }

    fn hops(&self, r: f64) -> u32 {
        self.graph.hop_radius(r)
    }
}

/// Largest hop count of the open ball `B(x, r)`.
fn open_hops(g: &GasketGraph, r: f64) -> Option<u32> {
    let h = r * (1u64 << g.n()) as f64;
    let k = (h - 1e-9).ceil() - 1.0;
    (k >= 0.0).then_some(k as u32)
}

fn ball_mass(g: &GasketGraph, ball: &[(usize, u32)], max_hops: Option<u32>) -> f64 {
    match max_hops {
        Some(k) => ball.iter().filter(|(_, h)| *h <= k).map(|&(v, _)| g.mass(v)).sum(),
        None => 0.0,
    }
}

/// `max m(B(x, r)) / m(B(x, r/3))` over every vertex and the given radii,
/// with open balls.
pub fn doubling_constant(g: &GasketGraph, radii: &[f64]) -> f64 {
    let Some(rmax) = radii.iter().copied().reduce(f64::max) else { return 1.0 };
    let reach = open_hops(g, rmax).unwrap_or(0);
    (0..g.num_vertices())
        .into_par_iter()
        .map(|x| {
            let ball = g.hops_within(x, reach);
            radii
                .iter()
                .map(|&r| {
                    let big = ball_mass(g, &ball, open_hops(g, r));
                    let small = ball_mass(g, &ball, open_hops(g, r / 3.0)).max(g.mass(x));
                    big / small
                })
                .fold(1.0, f64::max)
        })
        .reduce(|| 1.0, f64::max)
}

/// Good/bad flags of the obstacle points.
#[derive(Debug, Clone)]
pub struct Classification {
    pub good: Vec<bool>,
    /// Radii of the balls `C` checked for every point.
    pub radii: Vec<f64>,
    /// Set when no radius is below `r_0`, so every point is good.
    pub trivial: bool,
    /// `m(∪_{bad} B̄(x_i, bε))`.
    pub bad_volume: f64,
}

impl Classification {
    pub fn n_good(&self) -> usize {
        self.good.iter().filter(|&&g| g).count()
    }

    pub fn n_bad(&self) -> usize {
        self.good.len() - self.n_good()
    }

    pub fn bad_volume_holds(&self, delta: f64) -> bool {
        self.bad_volume <= delta
    }
}

fn union_mask(g: &GasketGraph, centers: &[usize], hops: u32) -> Vec<bool> {
    let mut mask = vec![false; g.num_vertices()];
    for &p in centers {
        for (v, _) in g.hops_within(p, hops) {
            mask[v] = true;
        }
    }
    mask
}

fn mask_mass(g: &GasketGraph, mask: &[bool]) -> f64 {
    mask.iter().enumerate().filter(|(_, &b)| b).map(|(v, _)| g.mass(v)).sum()
}

/// Exact evaluation of the goodness condition on the graph.
pub fn classify(setup: &ObstacleSetup) -> Classification {
    let g = &setup.graph;
    let p = &setup.params;
    let pts = setup.cloud.vertices(g);
    let radii = p.test_radii();
    let b_hops = setup.hops(p.b() * p.eps());
    let covered = union_mask(g, &pts, b_hops);
    let threshold = p.delta / setup.c_d;
    let reach = radii.iter().filter_map(|&r| open_hops(g, r)).max().unwrap_or(0);
    let good: Vec<bool> = pts
        .par_iter()
        .map(|&x| {
            if radii.is_empty() {
                return true;
            }
            let ball = g.hops_within(x, reach);
            radii.iter().all(|&r| {
                let Some(k) = open_hops(g, r) else { return true };
                let (mut inside, mut total) = (0.0, 0.0);
                for &(v, h) in &ball {
                    if h <= k {
                        total += g.mass(v);
                        if covered[v] {
                            inside += g.mass(v);
                        }
                    }
                }
                inside >= threshold * total
            })
        })
        .collect();
    let bad: Vec<usize> = pts.iter().zip(&good).filter(|(_, &ok)| !ok).map(|(&v, _)| v).collect();
    let bad_volume = mask_mass(g, &union_mask(g, &bad, b_hops));
    Classification { good, trivial: radii.is_empty(), radii, bad_volume }
}

/// Vertex sets of the domains, as live masks.
#[derive(Debug, Clone)]
pub struct CoarseDomains {
    /// `Θ_b`: outside the closed balls `B̄(x_i, bε)` of good points.
    pub theta: Vec<bool>,
    /// `Û`: outside the side-`bε` triangles receiving good points.
    pub u_hat: Vec<bool>,
    /// `U`: outside the side-`bε` triangles receiving any point.
    pub u: Vec<bool>,
    pub removed_hat: usize,
    pub removed_all: usize,
}

impl CoarseDomains {
    /// `Θ_b ⊆ Û`, `U ⊆ Û` and `m(Û) - m(U) <= δ`.
    pub fn invariants(&self, g: &GasketGraph, delta: f64) -> (bool, bool, bool) {
        let sub = |a: &[bool], b: &[bool]| a.iter().zip(b).all(|(&x, &y)| !x || y);
        let gap = mask_mass(g, &self.u_hat) - mask_mass(g, &self.u);
        (sub(&self.theta, &self.u_hat), sub(&self.u, &self.u_hat), gap <= delta + 1e-12)
    }
}

pub fn coarse_domains(setup: &ObstacleSetup, class: &Classification) -> CoarseDomains {
    let g = &setup.graph;
    let p = &setup.params;
    let pts = setup.cloud.vertices(g);
    let good: Vec<usize> = pts.iter().zip(&class.good).filter(|(_, &ok)| ok).map(|(&v, _)| v).collect();
    let theta: Vec<bool> = union_mask(g, &good, setup.hops(p.b() * p.eps())).into_iter().map(|c| !c).collect();
    let k = p.b_exp - p.scale as i32;
    let tri = |vs: &[usize]| -> HashSet<Lattice> { vs.iter().flat_map(|&v| g.triangles_containing(v, k)).collect() };
    let hat = tri(&good);
    let all = tri(&pts);
    let live = |set: &HashSet<Lattice>| -> Vec<bool> {
        (0..g.num_vertices()).map(|v| !g.triangles_containing(v, k).iter().any(|t| set.contains(t))).collect()
    };
    CoarseDomains { theta, u_hat: live(&hat), u: live(&all), removed_hat: hat.len(), removed_all: all.len() }
}

/// Principal eigenvalues of the enlarged-obstacle and potential problems.
#[derive(Debug, Clone)]
pub struct Comparison {
    pub lambda_b: f64,
    pub lambda_v: f64,
    /// `λ₁(V) ∧ K + δ - λ₁(b) ∧ K`.
    pub margin: f64,
    pub n_good: usize,
    pub n_bad: usize,
    pub bad_volume: f64,
    pub invariants: (bool, bool, bool),
}

fn reflected_operator(g: &Arc<GasketGraph>, phi: &LaplaceExponent) -> Result<SubordinateOperator> {
    SubordinateOperator::new(&DiscreteGenerator::new(g.clone(), BoundaryMode::Reflected), phi, KillOrder::SubordinateThenKill)
}

/// Lowest eigenvalue of `op` killed outside `live`; infinite when nothing
/// is alive.
fn killed_ground(op: &SubordinateOperator, live: &[bool]) -> Result<f64> {
    if !live.iter().any(|&b| b) {
        return Ok(f64::INFINITY);
    }
    let zero = vec![0.0; live.len()];
    Ok(op.restricted(live.to_vec())?.lowest(&zero, 1)?.values[0])
}

pub fn compare_eigenvalues_with(setup: &ObstacleSetup, op: &SubordinateOperator) -> Result<Comparison> {
    let p = &setup.params;
    let class = classify(setup);
    let domains = coarse_domains(setup, &class);
    let v = p.potential(&setup.graph, &setup.cloud)?;
    let lambda_v = op.lowest(&v, 1)?.values[0];
    let lambda_b = killed_ground(op, &domains.theta)?;
    Ok(Comparison {
        lambda_b,
        lambda_v,
        margin: lambda_v.min(p.k_cap) + p.delta - lambda_b.min(p.k_cap),
        n_good: class.n_good(),
        n_bad: class.n_bad(),
        bad_volume: class.bad_volume,
        invariants: domains.invariants(&setup.graph, p.delta),
    })
}

pub fn compare_eigenvalues(setup: &ObstacleSetup) -> Result<Comparison> {
    compare_eigenvalues_with(setup, &reflected_operator(&setup.graph, &setup.params.phi)?)
}

/// One row per configuration and scale.
#[derive(Debug, Clone)]
pub struct SweepRow {
    pub config: u64,
    pub eps: f64,
    pub comparison: Comparison,
}

#[derive(Debug, Clone)]
pub struct SweepReport {
    pub c_d: f64,
    pub rows: Vec<SweepRow>,
}

impl SweepReport {
    fn at(&self, eps: f64) -> impl Iterator<Item = &SweepRow> {
        self.rows.iter().filter(move |r| r.eps == eps)
    }

    /// Fraction of configurations with negative margin at `ε`.
    pub fn violating_fraction(&self, eps: f64) -> f64 {
        let (bad, all) = self.at(eps).fold((0, 0), |(b, a), r| (b + (r.comparison.margin < 0.0) as usize, a + 1));
        bad as f64 / all.max(1) as f64
    }

    /// Fraction of all rows where the bad-volume bound holds.
    pub fn bad_volume_fraction(&self, delta: f64) -> f64 {
        let ok = self.rows.iter().filter(|r| r.comparison.bad_volume <= delta).count();
        ok as f64 / self.rows.len().max(1) as f64
    }

    pub fn write_csv<W: Write>(&self, out: &mut W) -> std::io::Result<()> {
        writeln!(out, "config_id,eps,lambda_b,lambda_V,margin,n_good,n_bad,bad_volume")?;
        for r in &self.rows {
            let c = &r.comparison;
            writeln!(
                out,
                "{},{},{},{},{},{},{},{}",
                r.config,
                fmt17(r.eps),
                fmt17(c.lambda_b),
                fmt17(c.lambda_v),
                fmt17(c.margin),
                c.n_good,
                c.n_bad,
                fmt17(c.bad_volume)
            )?;
        }
        Ok(())
    }
}

/// Comparison over `configs` clouds at each scale; configuration `i` uses
/// the cloud stream `(seed, i)` at every scale.
pub fn enlargement_sweep(base: &ObstacleParams, scales: &[u32], configs: usize, seed: u64) -> Result<SweepReport> {
    let graph = Arc::new(build_graph(0, base.n)?);
    let mut radii = Vec::new();
    for &s in scales {
        radii.extend(ObstacleParams { scale: s, ..base.clone() }.test_radii());
    }
    let c_d = doubling_constant(&graph, &radii);
    let op = reflected_operator(&graph, &base.phi)?;
    let mut rows = Vec::new();
    for &s in scales {
        let params = ObstacleParams { scale: s, ..base.clone() };
        params.validate()?;
        let batch: Vec<SweepRow> = (0..configs as u64)
            .into_par_iter()
            .map(|i| {
                let setup = ObstacleSetup::sample(params.clone(), graph.clone(), c_d, seed, i)?;
                Ok(SweepRow { config: i, eps: params.eps(), comparison: compare_eigenvalues_with(&setup, &op)? })
            })
            .collect::<Result<_>>()?;
        rows.extend(batch);
    }
    Ok(SweepReport { c_d, rows })
}

/// `C(K, δ) = e^K (1 + c_0 (1 + K/δ))`.
pub fn c_k_delta(k: f64, delta: f64, c0: f64) -> f64 {
    k.exp() * (1.0 + c0 * (1.0 + k / delta))
}

/// Constants of the (P3) recipe at unit scale.
#[derive(Debug, Clone)]
pub struct Recipe {
    /// `c` in `P[sup_{s <= t/2} d(X_s, X_0) > a_0/2] <= c t / a_0^γ`.
    pub c_exit: f64,
    /// `c^{(2)}` in the jump lower bound on `P_x[X_{t/2} ∈ B(y, a_0/2)]`;
    /// degenerates to 0 for the diffusion.
    pub c_density: f64,
    /// Measured `inf_x P_x[X_{t_*/2} ∈ B(y, a_0/2)]` over `d(x, y) <= b`.
    pub p_in: f64,
    pub t_star: f64,
    pub tau0: f64,
    pub c1: f64,
}

/// Process-level computations on one graph: the full subordinated matrix
/// and its killed restrictions.
struct Lab {
    g: Arc<GasketGraph>,
    op: SubordinateOperator,
}

impl Lab {
    fn new(g: Arc<GasketGraph>, phi: &LaplaceExponent) -> Result<Lab> {
        let op = reflected_operator(&g, phi)?;
        Ok(Lab { g, op })
    }

    fn ball_mask(&self, y: usize, r: f64, closed: bool) -> Vec<bool> {
        let k = if closed { Some(self.g.hop_radius(r)) } else { open_hops(&self.g, r) };
        let mut mask = vec![false; self.g.num_vertices()];
        if let Some(k) = k {
            for (v, _) in self.g.hops_within(y, k) {
                mask[v] = true;
            }
        }
        mask
    }

    fn killed_spectrum(&self, live: &[bool], v: &[f64]) -> Result<Spectrum> {
        self.op.restricted(live.to_vec())?.spectrum(v, true)
    }

    /// `P_x[not killed by time t]` for every live `x`, from a killed spectrum.
    fn survival_from(spec: &Spectrum, n: usize, t: f64) -> Result<Vec<f64>> {
        let k = spec.kernel_with(|l| (-t * l).exp())?;
        let mut out = vec![f64::NAN; n];
        for (i, &x) in k.indices.iter().enumerate() {
            out[x] = k.row_mass(i);
        }
        Ok(out)
    }

    /// `P_x[not killed by time t]` for every live `x`, killing outside
    /// `live` and by the potential `v`.
    fn survival(&self, live: &[bool], v: &[f64], t: f64) -> Result<Vec<f64>> {
        Self::survival_from(&self.killed_spectrum(live, v)?, live.len(), t)
    }

    /// `h(x) = E_x[f(X_{τ_D})]` for the exit from `live`, with `f` given on
    /// the killed vertices.
    fn exit_value(&self, live: &[bool], f: &[f64]) -> Result<Vec<f64>> {
        let g = &self.g;
        let n = g.num_vertices();
        let zero = vec![0.0; n];
        let full = self.op.matrix_with(&zero)?;
        let rows = self.op.generator().indices();
        if rows.len() != n {
            return Err(LabError::Config("exit values need the unkilled operator".into()));
        }
        let inside: Vec<usize> = (0..n).filter(|&v| live[v]).collect();
        let outside: Vec<usize> = (0..n).filter(|&v| !live[v]).collect();
        let a = DMatrix::from_fn(inside.len(), inside.len(), |i, j| full[(inside[i], inside[j])]);
        let rhs = DVector::from_fn(inside.len(), |i, _| {
            -outside.iter().map(|&o| full[(inside[i], o)] * f[o] * g.mass(o).sqrt()).sum::<f64>()
        });
        let sol = a.cholesky().ok_or_else(|| LabError::Solver("killed operator is not positive definite".into()))?.solve(&rhs);
        let mut out = f.to_vec();
        for (i, &v) in inside.iter().enumerate() {
            out[v] = sol[i] / g.mass(v).sqrt();
        }
        Ok(out)
    }

    fn probe_points(&self, count: usize, seed: u64) -> Vec<usize> {
        let mut r = rng::stream(seed, Tag::Probe, 0, 0);
        let mut pts = vec![self.g.boundary()[0], crate::montecarlo::center_vertex(&self.g)];
        while pts.len() < count {
            pts.push(r.random_range(0..self.g.num_vertices()));
        }
        pts
    }
}

/// Finest level `<= n` at which the recipe graph stays within the dense
/// cap; `None` when even the coarsest level cannot resolve `a_0 / 2`.
/// Probes on `G_0` at level `n` and scale `2^{-s}` see the unit-scale
/// process at level `n - s`, the natural choice for `n` here.
pub fn recipe_level(a0: f64, b: f64, n: u32) -> Option<u32> {
    let m = (2.0 * (b + a0)).log2().ceil().max(0.0) as u32;
    (0..=n)
        .rev()
        .find(|&l| 3 * (3usize.pow(m + l) + 1) / 2 <= crate::operators::DENSE_CAP)
        .filter(|&l| 2f64.powi(-(l as i32)) <= a0 / 2.0 + 1e-12)
}

/// Unit-scale recipe on the reflected `G_M` with `2^M >= 2(b + a_0)`.
///
/// For each horizon `t` on a dyadic grid below `a_0^γ` the inner bound
/// `s(t) = e^{-At/2}(1 - q) + q`, with `q` the measured early-exit
/// probability, and the entry probability `p_in(t)` give
/// `E <= 1 - p_in (1 - s)`; `t_*` maximizes `p_in (1 - s)`.
pub fn recipe(phi: &LaplaceExponent, gamma: f64, a0: f64, amp: f64, b: f64, n: u32, seed: u64) -> Result<Recipe> {
    let m = (2.0 * (b + a0)).log2().ceil().max(0.0) as u32;
    let g = Arc::new(build_graph(m, n)?);
    let n_v = g.num_vertices();
    let lab = Lab::new(g.clone(), phi)?;
    let ts: Vec<f64> = (0..10).map(|j| 2f64.powi(2 - j) * a0.powf(gamma)).collect();
    let pts = lab.probe_points(4, seed);
    let zero = vec![0.0; n_v];

    let mut exit = vec![0f64; ts.len()];
    for &y in &pts {
        let live = lab.ball_mask(y, a0 / 2.0, true);
        let spec = lab.killed_spectrum(&live, &zero)?;
        for (j, &t) in ts.iter().enumerate() {
            let s = Lab::survival_from(&spec, n_v, t / 2.0)?;
            exit[j] = exit[j].max((1.0 - s[y]).clamp(0.0, 1.0));
        }
    }
    let c_exit = ts.iter().zip(&exit).filter(|(&t, _)| t <= a0.powf(gamma)).map(|(&t, &q)| q * a0.powf(gamma) / t).fold(0.0, f64::max);

    let reach = b + a0 / 2.0;
    let full = lab.op.spectrum(&zero, true)?;
    let mut p_in = vec![1f64; ts.len()];
    let mut c_density = f64::INFINITY;
    for (j, &t) in ts.iter().enumerate() {
        let k = full.kernel_with(|l| (-t / 2.0 * l).exp())?;
        for &y in &pts {
            let target = lab.ball_mask(y, a0 / 2.0, false);
            for (x, _) in g.hops_within(y, g.hop_radius(b)) {
                let i = k.row_of(x).unwrap();
                let p: f64 = k.indices.iter().enumerate().filter(|(_, &z)| target[z]).map(|(c, _)| k.values[(i, c)] * k.masses[c]).sum();
                let p = p.clamp(0.0, 1.0);
                p_in[j] = p_in[j].min(p);
                if t <= a0.powf(gamma) {
                    let shape = a0.powf(DIM_H) * (t / reach.powf(DIM_H + gamma)).min(t.powf(-DIM_H / gamma));
                    c_density = c_density.min(p / shape);
                }
            }
        }
    }

    let mut best = (0.0, ts[0], 1.0);
    for (j, &t) in ts.iter().enumerate() {
        let s = (-amp * t / 2.0).exp() * (1.0 - exit[j]) + exit[j];
        let gain = p_in[j] * (1.0 - s);
        if gain > best.0 {
            best = (gain, t, p_in[j]);
        }
    }
    let (gain, t_star, p) = best;
    Ok(Recipe { c_exit, c_density, p_in: p, t_star, tau0: 2.0 * t_star, c1: gain / 2.0 })
}

/// Empirical (P1)–(P6) report at one scale.
#[derive(Debug, Clone)]
pub struct ProbeReport {
    pub eps: f64,
    pub gamma: f64,
    /// (P1): `sup_x p(1, x, x)` and `sup_{x,y} p(1, x, y)`.
    pub p1_diag: f64,
    pub p1_sup: f64,
    pub recipe: Recipe,
    /// (P2): largest early-exit probability from `B(y, 10(R-2)bε)`.
    pub p2: f64,
    /// (P3): largest `E_x[e^{-∫_0^{τ₀ε^γ/2} W_ε(X_s, y)ds}]`.
    pub p3_sup: f64,
    /// `(r, inf P_x[T_{B(y,bε)} <= τ₀ε^γ/2])` over `d(x, y) <= rε`.
    pub p4: Vec<(f64, f64)>,
    /// (P5): smallest hitting-before-exit probability, when a radius fits.
    pub p5: Option<f64>,
    /// (P6): `(A/r, largest overshoot probability)` rows.
    pub p6: Vec<(f64, f64)>,
    /// Fit `c_3 (r/A)^κ` of the overshoot rows, when it is not identically 0.
    pub p6_fit: Option<(f64, f64)>,
    pub c_k_delta: f64,
    /// Smallest `R` with `c_3 / (R^κ - 1) <= C(K,δ)^{-1} / 8`.
    pub r_min: Option<f64>,
    pub m0: Option<f64>,
    pub log10_d: Option<f64>,
}

impl ProbeReport {
    /// `1 - sup E`, the empirical stand-in for `2 c_1`.
    pub fn p3_constant(&self) -> f64 {
        1.0 - self.p3_sup
    }

    pub fn p3_holds(&self) -> bool {
        self.p3_sup <= 1.0 - 2.0 * self.recipe.c1
    }

    pub fn render(&self) -> String {
        let opt = |x: Option<f64>| x.map(fmt17).unwrap_or_else(|| "none".into());
        let rows = |r: &[(f64, f64)]| r.iter().map(|(a, b)| format!("[{}, {}]", fmt17(*a), fmt17(*b))).collect::<Vec<_>>().join(", ");
        format!(
            "probe {{\n  eps: {}\n  gamma: {}\n  P1: {{ sup_diag: {}, sup: {} }}\n  recipe: {{ c_exit: {}, c_density: {}, p_in: {}, t_star: {}, tau0: {}, c1: {} }}\n  P2: {}\n  P3: {{ sup: {}, constant: {}, holds: {} }}\n  P4: [{}]\n  P5: {}\n  P6: [{}]\n  P6_fit: {}\n  C_K_delta: {}\n  R_min: {}\n  m0: {}\n  log10_D: {}\n}}\n",
            fmt17(self.eps),
            fmt17(self.gamma),
            fmt17(self.p1_diag),
            fmt17(self.p1_sup),
            fmt17(self.recipe.c_exit),
            fmt17(self.recipe.c_density),
            fmt17(self.recipe.p_in),
            fmt17(self.recipe.t_star),
            fmt17(self.recipe.tau0),
            fmt17(self.recipe.c1),
            fmt17(self.p2),
            fmt17(self.p3_sup),
            fmt17(self.p3_constant()),
            self.p3_holds(),
            rows(&self.p4),
            opt(self.p5),
            rows(&self.p6),
            self.p6_fit.map(|(c, k)| format!("{{ c3: {}, kappa: {} }}", fmt17(c), fmt17(k))).unwrap_or_else(|| "none".into()),
            fmt17(self.c_k_delta),
            opt(self.r_min),
            opt(self.m0),
            opt(self.log10_d),
        )
    }
}

/// Probes at the scale of `params`; `recipe` comes from [`recipe`] and is
/// shared across scales.
pub fn probe_assumptions(params: &ObstacleParams, recipe: &Recipe, c_d: f64, seed: u64) -> Result<ProbeReport> {
    params.validate()?;
    params.profile.lower_plateau().ok_or_else(|| LabError::Config("(P3) needs a profile plateau (A, a0)".into()))?;
    let gamma = params.gamma()?;
    let g = Arc::new(build_graph(0, params.n)?);
    let lab = Lab::new(g.clone(), &params.phi)?;
    let n_v = g.num_vertices();
    let eps = params.eps();
    let be = params.b() * eps;
    let horizon = recipe.tau0 * eps.powf(gamma) / 2.0;
    let zero = vec![0.0; n_v];
    let all = vec![true; n_v];

    let k1 = lab.op.kernel(1.0)?;
    let p1_diag = (0..k1.indices.len()).map(|i| k1.values[(i, i)]).fold(0.0, f64::max);
    let p1_sup = k1.values.iter().copied().fold(0.0, f64::max);

    let ys = lab.probe_points(4, seed);
    let mut p2: f64 = 0.0;
    let mut p3_sup: f64 = 0.0;
    for &y in &ys {
        let near: Vec<usize> = g.hops_within(y, g.hop_radius(be)).into_iter().map(|(v, _)| v).collect();
        let ball = lab.ball_mask(y, 10.0 * (params.r - 2.0) * be, false);
        if ball.iter().any(|&b| !b) {
            let s = lab.survival(&ball, &zero, horizon)?;
            p2 = near.iter().fold(p2, |acc, &x| acc.max(1.0 - s[x]));
        }
        let w = params.single(&g, y)?;
        let e = lab.survival(&all, &w, horizon)?;
        p3_sup = near.iter().fold(p3_sup, |acc, &x| acc.max(e[x]));
    }

    let mut hits = Vec::new();
    for &y in &ys {
        let target = lab.ball_mask(y, be, true);
        let live: Vec<bool> = target.iter().map(|&t| !t).collect();
        let s = lab.survival(&live, &zero, horizon)?;
        hits.push((y, target, s));
    }
    let mut p4 = Vec::new();
    for mult in [1.0, 2.0, 4.0] {
        let r = mult * params.b();
        let mut worst: f64 = 1.0;
        for (y, target, s) in &hits {
            for (x, _) in g.hops_within(*y, g.hop_radius(r * eps)) {
                let hit = if target[x] { 1.0 } else { 1.0 - s[x] };
                worst = worst.min(hit);
            }
        }
        p4.push((r, worst));
    }

    let beta = 10.0 * be;
    let p5 = if beta <= params.r0 / params.r {
        let mut worst: f64 = 1.0;
        for &y in &ys {
            let big = lab.ball_mask(y, params.r * beta, false);
            let region: Vec<(usize, u32)> = g.hops_within(y, g.hop_radius(beta));
            let total: f64 = region.iter().map(|&(v, _)| g.mass(v)).sum();
            let &(far, _) = region.iter().max_by_key(|(_, h)| *h).unwrap();
            let mut rad = 0u32;
            let e = loop {
                let e = lab.ball_mask(far, rad as f64 * g.step(), true);
                let inside: f64 = region.iter().filter(|(v, _)| e[*v]).map(|&(v, _)| g.mass(v)).sum();
                if inside >= params.delta / c_d * total {
                    break e;
                }
                rad += 1;
            };
            let live: Vec<bool> = (0..n_v).map(|v| big[v] && !e[v]).collect();
            let f: Vec<f64> = (0..n_v).map(|v| if e[v] { 1.0 } else { 0.0 }).collect();
            let h = lab.exit_value(&live, &f)?;
            for &(x, _) in &region {
                worst = worst.min(h[x]);
            }
        }
        Some(worst)
    } else {
        None
    };

    let r6 = 4.0 * g.step();
    let mut p6 = Vec::new();
    for ratio in [4.0, 6.0, 8.0, 12.0] {
        let mut worst: f64 = 0.0;
        for &y in &ys {
            let live = lab.ball_mask(y, r6, false);
            let keep = lab.ball_mask(y, ratio * r6, false);
            let f: Vec<f64> = (0..n_v).map(|v| if keep[v] { 0.0 } else { 1.0 }).collect();
            let h = lab.exit_value(&live, &f)?;
            for (x, _) in g.hops_within(y, g.hop_radius(r6)) {
                if live[x] {
                    worst = worst.max(h[x]);
                }
            }
        }
        p6.push((ratio, worst));
    }
    let p6_fit = if p6.iter().all(|&(_, p)| p > 1e-300) {
        let xs: Vec<f64> = p6.iter().map(|(q, _)| (1.0 / q).ln()).collect();
        let ys: Vec<f64> = p6.iter().map(|(_, p)| p.ln()).collect();
        let fit = numerics::fit_line(&xs, &ys)?;
        let c3 = p6.iter().map(|&(q, p)| p / (1.0 / q).powf(fit.slope)).fold(0.0, f64::max);
        Some((c3, fit.slope))
    } else {
        None
    };

    let ckd = c_k_delta(params.k_cap, params.delta, p1_sup);
    let r_min = p6_fit.filter(|&(_, k)| k > 0.0).map(|(c3, k)| (1.0 + 8.0 * c3 * ckd).powf(1.0 / k));
    let c2 = p5;
    let jump = !matches!(params.phi, LaplaceExponent::PureDrift { .. });
    let m0 = c2.filter(|&c| c > 0.0 && recipe.c1 > 0.0).map(|c2| {
        let steps = (1.0 / (8.0 * ckd)).ln() / (1.0 - recipe.c1 * c2).ln();
        if jump { 2f64.powf(steps.ceil()) } else { steps.ceil() }
    });
    let log10_d = m0.map(|m| (10.0 * params.b()).log10() + m * params.r.log10());
    Ok(ProbeReport {
        eps,
        gamma,
        p1_diag,
        p1_sup,
        recipe: recipe.clone(),
        p2,
        p3_sup,
        p4,
        p5,
        p6,
        p6_fit,
        c_k_delta: ckd,
        r_min,
        m0,
        log10_d,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn params(scale: u32, nu: f64) -> ObstacleParams {
        ObstacleParams {
            n: 5,
            scale,
            a: 0.25,
            b_exp: 1,
            delta: 0.05,
            k_cap: 10.0,
            r: 4.0,
            r0: 4.0,
            nu,
            profile: "indicator:A=1,a0=0.25".parse().unwrap(),
            phi: LaplaceExponent::PureDrift { b: 1.0 },
        }
    }

    #[test]
    fn empty_cloud_domains() {
        let p = params(3, 0.0);
        let g = Arc::new(build_graph(0, p.n).unwrap());
        let s = ObstacleSetup::sample(p, g.clone(), 5.0, 1, 0).unwrap();
        let c = classify(&s);
        let d = coarse_domains(&s, &c);
        assert!(d.theta.iter().chain(&d.u_hat).chain(&d.u).all(|&b| b));
        assert_eq!(c.bad_volume, 0.0);
    }

    #[test]
    fn dense_cloud_all_good() {
        let p = params(3, 50.0);
        let g = Arc::new(build_graph(0, p.n).unwrap());
        let c_d = doubling_constant(&g, &p.test_radii());
        let s = ObstacleSetup::sample(p, g, c_d, 2, 0).unwrap();
        let c = classify(&s);
        assert!(!c.trivial);
        assert_eq!(c.n_bad(), 0);
    }

    #[test]
    fn isolated_point_is_bad() {
        let mut p = params(3, 0.0);
        p.delta = 0.9;
        let g = Arc::new(build_graph(0, p.n).unwrap());
        let c_d = doubling_constant(&g, &p.test_radii());
        let mut cloud = potentials::sample_cloud(&g, 0.0, 0, 0).unwrap();
        cloud.points.push(potentials::ObstaclePoint { cell: 100, corner: 0 });
        let s = ObstacleSetup::with_cloud(p, g, c_d, cloud).unwrap();
        let c = classify(&s);
        assert_eq!(c.n_bad(), 1);
        let d = coarse_domains(&s, &c);
        assert!(d.u_hat.iter().all(|&b| b));
        assert!(d.u.iter().any(|&b| !b));
    }

    #[test]
    fn margin_affine_in_delta() {
        let p = params(3, 1.0);
        let g = Arc::new(build_graph(0, p.n).unwrap());
        let c_d = doubling_constant(&g, &p.test_radii());
        let s = ObstacleSetup::sample(p.clone(), g.clone(), c_d, 3, 0).unwrap();
        let lo = compare_eigenvalues(&s).unwrap();
        let mut q = p;
        q.delta = 0.2;
        let s2 = ObstacleSetup::with_cloud(q, g, c_d, s.cloud.clone()).unwrap();
        let hi = compare_eigenvalues(&s2).unwrap();
        assert!(hi.margin >= lo.margin - 1e-9 || hi.n_good != lo.n_good);
        assert!(lo.invariants.0 && lo.invariants.1 && lo.invariants.2);
    }
}
