//! Path-level simulation of the subordinate walk `X_t = Z_{S_t}`,
//! Feynman-Kac survival estimates and the survival bound certificates.
//!
//! Physical time runs on a grid of step `dt`. Each step draws the
//! subordinator increment `ΔS`, runs the drift part `b dt` of the
//! operational clock jump by jump and the remaining pure-jump part in one
//! move, exactly sampled from the walk kernel. Occupation times are charged
//! to the vertex held at the start of the step unless the midpoint rule is
//! selected.

use std::io::Write;
use std::sync::{Arc, OnceLock};

use rand::Rng;
use rand_distr::{Distribution, Exp1, Poisson};
use rayon::prelude::*;

use crate::error::{LabError, Result};
use crate::gasket::{build_graph, GasketGraph};
use crate::numerics::{self, fmt17};
use crate::operators::{self, BoundaryMode, DiscreteGenerator, KillOrder, Spectrum, DENSE_CAP};
use crate::potentials::{self, Frame, PoissonConfiguration, ProfileSpec};
use crate::rng::{self, LabRng, Tag};
use crate::subordinators::{LaplaceExponent, SubordinatorSampler};
use crate::{ids, mass_factor, DIM_H};

/// Expected jump counts above this are sampled from the heat kernel.
const JUMP_CAP: f64 = 4096.0;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum DtPolicy {
    /// `dt = 5^{-n}`, the walk's own time step.
    Walk,
    Fixed(f64),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum OccupationRule {
    #[default]
    Left,
    Midpoint,
}

#[derive(Debug, Clone)]
pub struct PathConfig {
    pub dt: DtPolicy,
    pub rule: OccupationRule,
    /// Vertices where the path may live; landing elsewhere kills it.
    pub alive: Option<Arc<Vec<bool>>>,
}

impl Default for PathConfig {
    fn default() -> Self {
        PathConfig { dt: DtPolicy::Walk, rule: OccupationRule::Left, alive: None }
    }
}

/// The reflected simple random walk on a graph at rate `κ 5^n`, with its
/// spectral kernel built on first use.
#[derive(Debug)]
pub struct Walker {
    graph: Arc<GasketGraph>,
    phi: LaplaceExponent,
    kappa: f64,
    spectrum: OnceLock<std::result::Result<Spectrum, String>>,
}

impl Walker {
    pub fn new(graph: Arc<GasketGraph>, phi: LaplaceExponent, kappa: f64) -> Result<Walker> {
        if !phi.has_sampler() {
            return Err(LabError::NotApplicable(format!("no path sampler for {phi}")));
        }
        if !(kappa > 0.0) {
            return Err(LabError::Domain("walk speed must be positive".into()));
        }
        Ok(Walker { graph, phi, kappa, spectrum: OnceLock::new() })
    }

    pub fn graph(&self) -> &GasketGraph {
        &self.graph
    }

    pub fn exponent(&self) -> &LaplaceExponent {
        &self.phi
    }

    /// Jump rate `κ 5^n` of the walk on the operational clock.
    pub fn rate(&self) -> f64 {
        self.kappa * 5f64.powi(self.graph.n() as i32)
    }

    fn spectrum(&self) -> Result<&Spectrum> {
        let s = self.spectrum.get_or_init(|| {
            if self.graph.num_vertices() > DENSE_CAP {
                return Err(format!("{} vertices exceed the dense cap {DENSE_CAP}", self.graph.num_vertices()));
            }
            DiscreteGenerator::with_kappa(self.graph.clone(), BoundaryMode::Reflected, self.kappa)
                .full_spectrum(true)
                .map_err(|e| e.to_string())
        });
        s.as_ref().map_err(|e| LabError::Capacity(e.clone()))
    }

    fn step(&self, x: usize, rng: &mut LabRng) -> usize {
        let nb = self.graph.neighbors(x);
        nb[rng.random_range(0..nb.len())]
    }

    fn poisson(mean: f64, rng: &mut LabRng) -> Result<u64> {
        if mean <= 0.0 {
            return Ok(0);
        }
        Ok(Poisson::new(mean).map_err(|e| LabError::Numeric(e.to_string()))?.sample(rng) as u64)
    }

    /// Position after operational time `u` without looking at the
    /// intermediate vertices.
    pub fn advance(&self, x: usize, u: f64, rng: &mut LabRng) -> Result<usize> {
        let mean = self.rate() * u;
        if mean <= JUMP_CAP {
            let mut v = x;
            for _ in 0..Self::poisson(mean, rng)? {
                v = self.step(v, rng);
            }
            return Ok(v);
        }
        self.sample_kernel_row(x, u, rng)
    }

    /// Draw from `y ↦ g(u, x, y) m(y)`.
    pub fn sample_kernel_row(&self, x: usize, u: f64, rng: &mut LabRng) -> Result<usize> {
        let s = self.spectrum()?;
        let i = s.indices.iter().position(|&v| v == x).ok_or_else(|| LabError::Config(format!("vertex {x} not in spectrum")))?;
        let vecs = s.vectors.as_ref().ok_or_else(|| LabError::Solver("spectrum lacks eigenvectors".into()))?;
        let weights: Vec<f64> = s.values.iter().enumerate().map(|(k, &l)| (-u * l).exp() * vecs[(i, k)]).collect();
        let probs: Vec<f64> = (0..s.indices.len())
            .map(|j| {
                let p: f64 = weights.iter().enumerate().map(|(k, w)| w * vecs[(j, k)]).sum();
                (p * s.masses[j]).max(0.0)
            })
            .collect();
        let total: f64 = probs.iter().sum();
        let mut r = rng.random::<f64>() * total;
        for (j, p) in probs.iter().enumerate() {
            r -= p;
            if r < 0.0 {
                return Ok(s.indices[j]);
            }
        }
        Ok(*s.indices.last().unwrap())
    }
}

/// A simulated path.
#[derive(Debug, Clone)]
pub struct PathSample {
    pub start: usize,
    pub horizon: f64,
    pub dt: f64,
    /// Subordinator increment of each step.
    pub increments: Vec<f64>,
    /// Position at each grid time, starting with `start`.
    pub positions: Vec<usize>,
    /// Time spent at each vertex up to the horizon or the killing time.
    pub occupation: Vec<f64>,
    /// Grid time at which the path landed outside the live set.
    pub killed_at: Option<f64>,
}

impl PathSample {
    pub fn steps(&self) -> usize {
        self.increments.len()
    }

    pub fn end(&self) -> usize {
        *self.positions.last().unwrap()
    }

    pub fn survived(&self) -> bool {
        self.killed_at.is_none()
    }

    /// `∫ V(X_s) ds` for a potential indexed by vertex.
    pub fn integral(&self, v: &[f64]) -> f64 {
        self.occupation.iter().zip(v).map(|(l, w)| l * w).sum()
    }
}

/// Number of grid steps and step length for a horizon.
pub fn grid(g: &GasketGraph, t: f64, policy: DtPolicy) -> Result<(usize, f64)> {
    let dt = match policy {
        DtPolicy::Walk => 5f64.powi(-(g.n() as i32)),
        DtPolicy::Fixed(h) if h > 0.0 => h,
        DtPolicy::Fixed(h) => return Err(LabError::Domain(format!("time step must be positive, got {h}"))),
    };
    let steps = ((t / dt) * (1.0 - 1e-12)).ceil().max(1.0) as usize;
    Ok((steps, dt))
}

/// Simulates `X` on `[0, t]` from `x0`.
pub fn simulate_path(
    walker: &Walker,
    sampler: &mut SubordinatorSampler,
    rng: &mut LabRng,
    x0: usize,
    t: f64,
    config: &PathConfig,
) -> Result<PathSample> {
    let g = walker.graph();
    if x0 >= g.num_vertices() {
        return Err(LabError::Config(format!("start vertex {x0} is not in the graph")));
    }
    if !(t > 0.0) || !t.is_finite() {
        return Err(LabError::Domain(format!("horizon must be positive, got {t}")));
    }
    let (steps, dt) = grid(g, t, config.dt)?;
    let b = walker.exponent().drift();
    let rate = walker.rate();
    let alive = |v: usize| config.alive.as_ref().is_none_or(|a| a[v]);
    let mut occupation = vec![0.0; g.num_vertices()];
    let mut positions = Vec::with_capacity(steps + 1);
    let mut increments = Vec::with_capacity(steps);
    let mut x = x0;
    positions.push(x);
    let mut killed_at = (!alive(x)).then_some(0.0);
    let mut now = 0.0;
    for k in 0..steps {
        if killed_at.is_some() {
            break;
        }
        let h = if k + 1 == steps { t - dt * (steps - 1) as f64 } else { dt };
        let ds = sampler.sample(h)?;
        increments.push(ds);
        let start = x;
        let drift = b * h;
        let mut dead = false;
        for _ in 0..Walker::poisson(rate * drift, rng)? {
            x = walker.step(x, rng);
            if !alive(x) {
                dead = true;
                break;
            }
        }
        if !dead {
            x = walker.advance(x, (ds - drift).max(0.0), rng)?;
            dead = !alive(x);
        }
        match config.rule {
            OccupationRule::Left => occupation[start] += h,
            OccupationRule::Midpoint => {
                occupation[start] += 0.5 * h;
                occupation[x] += 0.5 * h;
            }
        }
        now += h;
        positions.push(x);
        if dead {
            killed_at = Some(now);
        }
    }
    Ok(PathSample { start: x0, horizon: t, dt, increments, positions, occupation, killed_at })
}

/// Per-obstacle additive functionals of a path with unit exponential marks.
#[derive(Debug, Clone)]
pub struct KillingClock {
    /// `A^i_t = ∫_0^t W(X_s, x_i) ds`.
    pub additive: Vec<f64>,
}

impl KillingClock {
    pub fn from_path(g: &GasketGraph, profile: &ProfileSpec, cloud: &PoissonConfiguration, occupation: &[f64]) -> KillingClock {
        let visited: Vec<(usize, f64)> = occupation.iter().copied().enumerate().filter(|(_, l)| *l > 0.0).collect();
        let additive = cloud
            .vertices(g)
            .into_iter()
            .map(|p| {
                let hops = g.hops_from(p);
                visited.iter().map(|&(v, l)| l * profile.pair(g, Frame::IDENTITY, v, p, hops[v])).sum()
            })
            .collect();
        KillingClock { additive }
    }

    /// `P[T > t | path] = e^{-Σ_i A^i_t}`.
    pub fn probability(&self) -> f64 {
        (-self.additive.iter().sum::<f64>()).exp()
    }

    /// One draw of the marks; true when no clock has rung by the horizon.
    pub fn survives(&self, rng: &mut LabRng) -> bool {
        self.additive.iter().all(|&a| {
            let e: f64 = Exp1.sample(rng);
            a < e
        })
    }
}

/// Two estimates of `E_Q E_x[e^{-∫_0^t V(X_s) ds}]`.
#[derive(Debug, Clone)]
pub struct FkEstimate {
    pub t: f64,
    /// Estimator A: annealed weight of each path's occupation vector.
    pub a: Vec<f64>,
    /// Estimator B: survival indicator of each path, cloud and clock draw.
    pub b: Vec<f64>,
}

impl FkEstimate {
    pub fn mean_a(&self) -> (f64, f64) {
        numerics::mean_se(&self.a)
    }

    pub fn mean_b(&self) -> (f64, f64) {
        numerics::mean_se(&self.b)
    }

    /// `|Â - B̂| / sqrt(se_A^2 + se_B^2)`; zero when both are exact.
    pub fn agreement(&self) -> f64 {
        let (a, sa) = self.mean_a();
        let (b, sb) = self.mean_b();
        let se = (sa * sa + sb * sb).sqrt();
        if se == 0.0 {
            if a == b { 0.0 } else { f64::INFINITY }
        } else {
            (a - b).abs() / se
        }
    }
}

/// Both estimators from `paths` independent paths; killed paths count as
/// zero.
pub fn fk_survival(
    walker: &Walker,
    profile: &ProfileSpec,
    nu: f64,
    x0: usize,
    t: f64,
    paths: usize,
    seed: u64,
    config: &PathConfig,
) -> Result<FkEstimate> {
    if t == 0.0 {
        return Ok(FkEstimate { t, a: vec![1.0; paths], b: vec![1.0; paths] });
    }
    let g = walker.graph();
    let pairs: Vec<(f64, f64)> = (0..paths as u64)
        .into_par_iter()
        .map(|i| {
            let mut sampler = SubordinatorSampler::new(walker.exponent().clone(), rng::stream(seed, Tag::Subordinator, i, 0))?;
            let mut rng = rng::stream(seed, Tag::Path, i, 0);
            let path = simulate_path(walker, &mut sampler, &mut rng, x0, t, config)?;
            if !path.survived() {
                return Ok((0.0, 0.0));
            }
            let a = potentials::annealed_fk_weight(g, profile, nu, &path.occupation)?;
            let cloud = potentials::sample_cloud(g, nu, seed, i)?;
            let clock = KillingClock::from_path(g, profile, &cloud, &path.occupation);
            let b = if clock.survives(&mut rng::stream(seed, Tag::Clock, i, 0)) { 1.0 } else { 0.0 };
            Ok((a, b))
        })
        .collect::<Result<_>>()?;
    let (a, b) = pairs.into_iter().unzip();
    Ok(FkEstimate { t, a, b })
}

/// Vertex drawn from the normalized mass.
pub fn sample_stationary(g: &GasketGraph, rng: &mut LabRng) -> usize {
    let masses = g.masses();
    let total: f64 = masses.iter().sum();
    let mut r = rng.random::<f64>() * total;
    for (v, m) in masses.iter().enumerate() {
        r -= m;
        if r < 0.0 {
            return v;
        }
    }
    masses.len() - 1
}

/// Counts of `X_t` over `samples` paths from `x0`.
pub fn endpoint_histogram(walker: &Walker, x0: usize, t: f64, samples: usize, seed: u64) -> Result<Vec<u64>> {
    let config = PathConfig::default();
    let ends: Vec<usize> = (0..samples as u64)
        .into_par_iter()
        .map(|i| {
            let mut sampler = SubordinatorSampler::new(walker.exponent().clone(), rng::stream(seed, Tag::Subordinator, i, 1))?;
            let mut rng = rng::stream(seed, Tag::Path, i, 1);
            Ok(simulate_path(walker, &mut sampler, &mut rng, x0, t, &config)?.end())
        })
        .collect::<Result<_>>()?;
    let mut counts = vec![0u64; walker.graph().num_vertices()];
    for e in ends {
        counts[e] += 1;
    }
    Ok(counts)
}

/// Spectral transition probabilities `p(t, x0, y) m(y)` of the reflected
/// subordinate walk, indexed by vertex.
pub fn kernel_probabilities(walker: &Walker, x0: usize, t: f64) -> Result<Vec<f64>> {
    let gen = DiscreteGenerator::with_kappa(walker.graph.clone(), BoundaryMode::Reflected, walker.kappa);
    let k = operators::subordinate_kernel(&gen, walker.exponent(), KillOrder::default(), t)?;
    let i = k.row_of(x0).ok_or_else(|| LabError::Config(format!("vertex {x0} not in kernel")))?;
    let mut out = vec![0.0; walker.graph().num_vertices()];
    for (j, &v) in k.indices.iter().enumerate() {
        out[v] = k.values[(i, j)] * k.masses[j];
    }
    Ok(out)
}

/// Largest per-vertex deviation `|p̂ - p| / sqrt(p (1 - p) / N)` and the χ²
/// p-value of an endpoint histogram against the spectral kernel.
pub fn kernel_consistency(walker: &Walker, x0: usize, t: f64, samples: usize, seed: u64) -> Result<(f64, f64)> {
    let counts = endpoint_histogram(walker, x0, t, samples, seed)?;
    let probs = kernel_probabilities(walker, x0, t)?;
    let n = samples as f64;
    let worst = counts
        .iter()
        .zip(&probs)
        .filter(|(_, &p)| p > 0.0)
        .map(|(&c, &p)| (c as f64 / n - p).abs() / (p * (1.0 - p) / n).sqrt())
        .fold(0.0, f64::max);
    let (pvalue, _) = numerics::chi_square_p(&counts, &probs, 5.0)?;
    Ok((worst, pvalue))
}

/// Probability that the path has not landed outside `alive` by time `t`,
/// from the spectral side: row sums of the killed subordinate kernel.
pub fn spectral_survival(gen: &DiscreteGenerator, phi: &LaplaceExponent, order: KillOrder, x: usize, t: f64) -> Result<f64> {
    let k = operators::subordinate_kernel(gen, phi, order, t)?;
    let i = k.row_of(x).ok_or_else(|| LabError::Config(format!("vertex {x} is killed")))?;
    Ok(k.row_mass(i))
}

/// Ground data of the Dirichlet walk on `G_M`.
#[derive(Debug, Clone)]
pub struct GroundState {
    pub m: u32,
    /// `λ₁` of `5^n (I - P)` with the corners removed.
    pub lambda: f64,
    /// Normalized ground state `ψ / max ψ`, indexed by vertex (zero on the
    /// corners).
    pub shape: Vec<f64>,
    /// `min ψ / max ψ` over the non-corner vertices of the half ball.
    pub c_hat: f64,
}

/// Closed ball of radius `2^{M-1}` about the origin corner.
pub fn half_ball(g: &GasketGraph) -> Vec<usize> {
    g.ball(g.boundary()[0], 2f64.powi(g.m() as i32 - 1))
}

/// Vertex `2^{M-1} e1`, the middle of the bottom edge.
pub fn center_vertex(g: &GasketGraph) -> usize {
    let half = g.side_units() / 2;
    g.vertex_at((half, 0)).expect("bottom midpoint is a gasket vertex")
}

pub fn ground_state(m: u32, n: u32) -> Result<GroundState> {
    let g = Arc::new(build_graph(m, n)?);
    let spec = DiscreteGenerator::new(g.clone(), BoundaryMode::Dirichlet).spectrum(true)?;
    let vecs = spec.vectors.as_ref().ok_or_else(|| LabError::Solver("ground state missing".into()))?;
    let mut shape = vec![0.0; g.num_vertices()];
    for (i, &v) in spec.indices.iter().enumerate() {
        shape[v] = vecs[(i, 0)].abs();
    }
    let top = shape.iter().copied().fold(0.0, f64::max);
    shape.iter_mut().for_each(|s| *s /= top);
    let c_hat = half_ball(&g).into_iter().filter(|&v| !g.is_boundary(v)).map(|v| shape[v]).fold(f64::INFINITY, f64::min);
    Ok(GroundState { m, lambda: spec.values[0], shape, c_hat })
}

/// Exit-time floor `P_x[τ > t] >= ĉ e^{-t φ(λ₁)}` on `G_M` at `x`, with the
/// survival from both killing orders.
#[derive(Debug, Clone)]
pub struct ExitFloor {
    pub t: f64,
    pub floor: f64,
    pub subordinate_then_kill: f64,
    pub kill_then_subordinate: f64,
}

pub fn exit_time_floor(phi: &LaplaceExponent, m: u32, n: u32, t: f64) -> Result<ExitFloor> {
    let ground = ground_state(m, n)?;
    let g = Arc::new(build_graph(m, n)?);
    let x = center_vertex(&g);
    let gen = DiscreteGenerator::new(g, BoundaryMode::Dirichlet);
    Ok(ExitFloor {
        t,
        floor: ground.c_hat * (-t * phi.evaluate(ground.lambda)?).exp(),
        subordinate_then_kill: spectral_survival(&gen, phi, KillOrder::SubordinateThenKill, x, t)?,
        kill_then_subordinate: spectral_survival(&gen, phi, KillOrder::KillThenSubordinate, x, t)?,
    })
}

/// One row of the survival certificate.
#[derive(Debug, Clone)]
pub struct SurvivalRow {
    pub t: f64,
    pub m: u32,
    pub a: f64,
    pub estimate: FkEstimate,
    pub c_hat: f64,
    pub lower_rhs: f64,
    pub upper_rhs: f64,
}

impl SurvivalRow {
    /// Lower bound holds for estimator A within `k` standard errors.
    pub fn lower_holds(&self, k: f64) -> bool {
        let (m, se) = self.estimate.mean_a();
        m >= self.lower_rhs - k * se
    }

    pub fn upper_holds(&self, k: f64) -> bool {
        let (m, se) = self.estimate.mean_a();
        m <= self.upper_rhs + k * se
    }
}

#[derive(Debug, Clone)]
pub struct SurvivalCertificate {
    pub host_m: u32,
    pub x: usize,
    pub rows: Vec<SurvivalRow>,
}

impl SurvivalCertificate {
    pub fn write_csv<W: Write>(&self, out: &mut W) -> std::io::Result<()> {
        writeln!(out, "t,survival_A,se_A,survival_B,se_B,lower_rhs,upper_rhs")?;
        for r in &self.rows {
            let (a, sa) = r.estimate.mean_a();
            let (b, sb) = r.estimate.mean_b();
            writeln!(
                out,
                "{},{},{},{},{},{},{}",
                fmt17(r.t),
                fmt17(a),
                fmt17(sa),
                fmt17(b),
                fmt17(sb),
                fmt17(r.lower_rhs),
                fmt17(r.upper_rhs)
            )?;
        }
        Ok(())
    }
}

/// Lower survival bound
/// `ĉ exp{-t φ(λ₁(G_M)) - ν t S_W(a) - ν(3^M + 9 a^d)}` with `M = M(t)` and
/// `a = t^{1/(d+θ)}`, and upper bound `e^{-ν R_W(a, t)}`, against estimates
/// at the middle of the bottom edge of `G_{M(t)}`. Paths run reflected on
/// `G_{M*+1}` with `M*` the largest scale of the grid.
pub fn survival_bound_check(
    phi: &LaplaceExponent,
    beta: f64,
    profile: &ProfileSpec,
    theta: f64,
    nu: f64,
    ts: &[f64],
    n: u32,
    paths: usize,
    seed: u64,
) -> Result<SurvivalCertificate> {
    if !(theta > 0.0) {
        return Err(LabError::Domain("decay exponent θ must be positive".into()));
    }
    let ms: Vec<u32> = ts
        .iter()
        .map(|&t| ids::scale_for(t, nu, beta).ok_or_else(|| LabError::NotApplicable(format!("M(t) < 0 at t = {t}"))))
        .collect::<Result<_>>()?;
    let host_m = ms.iter().copied().max().unwrap_or(0) + 1;
    let host = Arc::new(build_graph(host_m, n)?);
    let walker = Walker::new(host.clone(), phi.clone(), 1.0)?;
    let mut rows = Vec::new();
    let mut x_host = 0;
    for (k, (&t, &m)) in ts.iter().zip(&ms).enumerate() {
        let ground = ground_state(m, n)?;
        let g_m = build_graph(m, n)?;
        let x = center_vertex(&g_m);
        if !half_ball(&g_m).contains(&x) {
            return Err(LabError::NotApplicable("start vertex outside the half ball".into()));
        }
        x_host = host.vertex_at(g_m.coords(x)).ok_or_else(|| LabError::Config("start vertex missing from host".into()))?;
        let a = t.powf(1.0 / (DIM_H + theta));
        let s = potentials::s_w(&host, profile, a)?;
        let r = potentials::r_w(&host, profile, a, t.max(1.0))?;
        let lower = ground.c_hat * (-t * phi.evaluate(ground.lambda)? - nu * t * s - nu * (mass_factor(m) + 9.0 * a.powf(DIM_H))).exp();
        let estimate = fk_survival(&walker, profile, nu, x_host, t, paths, seed ^ k as u64, &PathConfig::default())?;
        rows.push(SurvivalRow { t, m, a, estimate, c_hat: ground.c_hat, lower_rhs: lower, upper_rhs: (-nu * r).exp() });
    }
    Ok(SurvivalCertificate { host_m, x: x_host, rows })
}

/// Survival estimates under the default grid, the midpoint rule and a
/// halved step, as `(label, mean, se)` of estimator A.
pub fn dt_bias_probe(walker: &Walker, profile: &ProfileSpec, nu: f64, x0: usize, t: f64, paths: usize, seed: u64) -> Result<Vec<(String, f64, f64)>> {
    let (_, dt) = grid(walker.graph(), t, DtPolicy::Walk)?;
    let configs = [
        ("left", PathConfig::default()),
        ("midpoint", PathConfig { rule: OccupationRule::Midpoint, ..PathConfig::default() }),
        ("half_step", PathConfig { dt: DtPolicy::Fixed(dt / 2.0), ..PathConfig::default() }),
    ];
    configs
        .iter()
        .map(|(name, c)| {
            let (m, se) = fk_survival(walker, profile, nu, x0, t, paths, seed, c)?.mean_a();
            Ok((name.to_string(), m, se))
        })
        .collect()
}
