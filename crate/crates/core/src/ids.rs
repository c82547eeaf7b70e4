//! Annealed spectral statistics of the random Schrödinger operators:
//! Laplace transforms of the empirical eigenvalue measures, convergence in
//! the volume, periodized traces, bound certificates and Lifschitz fits.
//!
//! Replicate `r` always uses the cloud keyed by `(seed, r)`, so curves for
//! different `t`, scales `M` and bound sides are coupled through common
//! random numbers.

use std::io::Write;
use std::sync::Arc;

use rand::Rng;
use rayon::prelude::*;

use crate::error::{LabError, Result};
use crate::gasket::{build_graph, GasketGraph};
use crate::numerics::{self, fmt17, LineFit};
use crate::operators::{self, BoundaryMode, DiscreteGenerator, KillOrder, SubordinateOperator};
use crate::potentials::{self, PoissonConfiguration, ProfileSpec};
use crate::rng::{self, Tag};
use crate::subordinators::{LaplaceExponent, Regime, ScalingCertificate};
use crate::{mass_factor, DIM_H, DIM_W};

/// One annealed experiment: a graph, a process and a potential law.
#[derive(Debug, Clone)]
pub struct Experiment {
    pub graph: Arc<GasketGraph>,
    pub mode: BoundaryMode,
    pub phi: LaplaceExponent,
    pub profile: ProfileSpec,
    pub nu: f64,
    pub kappa: f64,
    pub order: KillOrder,
    pub seed: u64,
    /// Fiber depth `k` of the periodized potential `V*_M`; plain `V` when
    /// absent.
    pub periodize: Option<u32>,
}

impl Experiment {
    pub fn new(graph: Arc<GasketGraph>, mode: BoundaryMode, phi: LaplaceExponent, profile: ProfileSpec, nu: f64, seed: u64) -> Experiment {
        Experiment { graph, mode, phi, profile, nu, kappa: 1.0, order: KillOrder::default(), seed, periodize: None }
    }

    pub fn m(&self) -> u32 {
        self.graph.m()
    }

    pub fn generator(&self) -> DiscreteGenerator {
        DiscreteGenerator::with_kappa(self.graph.clone(), self.mode, self.kappa)
    }

    pub fn operator(&self) -> Result<SubordinateOperator> {
        SubordinateOperator::new(&self.generator(), &self.phi, self.order)
    }

    pub fn cloud(&self, replicate: u64) -> Result<PoissonConfiguration> {
        potentials::sample_cloud(&self.graph, self.nu, self.seed, replicate)
    }

    /// Potential of a cloud on this graph, periodized when requested.
    pub fn potential(&self, cloud: &PoissonConfiguration, host: Option<&GasketGraph>) -> Result<Vec<f64>> {
        match (self.periodize, host) {
            (None, _) => Ok(potentials::evaluate_potential(&self.graph, cloud, &self.profile)?.values),
            (Some(_), Some(h)) => Ok(potentials::periodize(h, &self.graph, cloud, &self.profile)?.potential.values),
            (Some(_), None) => Err(LabError::Config("periodized potential needs its host graph".into())),
        }
    }

    pub fn host(&self) -> Result<Option<GasketGraph>> {
        self.periodize.map(|k| build_graph(self.m() + k, self.graph.n())).transpose()
    }

    /// Complete eigenvalue lists for replicates `0..reps`.
    pub fn spectra(&self, reps: usize) -> Result<Vec<Vec<f64>>> {
        let op = self.operator()?;
        let host = self.host()?;
        (0..reps as u64)
            .into_par_iter()
            .map(|r| {
                let cloud = self.cloud(r)?;
                let v = self.potential(&cloud, host.as_ref())?;
                op.eigenvalues(&v)
            })
            .collect()
    }
}

/// `(1/3^M) Σ_n e^{-t λ_n}` for every `t` of the grid.
pub fn laplace_curve(values: &[f64], m: u32, ts: &[f64]) -> Vec<f64> {
    ts.iter().map(|&t| operators::trace_of(values, m, t)).collect()
}

/// Replicate-averaged Laplace transforms with their errors.
#[derive(Debug, Clone)]
pub struct AnnealedCurve {
    pub m: u32,
    pub t: Vec<f64>,
    /// `per_replicate[r][k]` is `L_M(t_k, ω_r)`.
    pub per_replicate: Vec<Vec<f64>>,
    pub mean: Vec<f64>,
    pub se: Vec<f64>,
}

impl AnnealedCurve {
    pub fn from_replicates(m: u32, t: Vec<f64>, per_replicate: Vec<Vec<f64>>, seed: u64) -> AnnealedCurve {
        let (mean, se) = column_stats(&per_replicate, t.len(), seed);
        AnnealedCurve { m, t, per_replicate, mean, se }
    }

    pub fn replicates(&self) -> usize {
        self.per_replicate.len()
    }

    pub fn write_csv<W: Write>(&self, out: &mut W, lower: Option<&[f64]>, upper: Option<&[f64]>) -> std::io::Result<()> {
        writeln!(out, "t,Lhat,se,lower_rhs,upper_rhs,margin_lo,margin_hi")?;
        for k in 0..self.t.len() {
            let lo = lower.map(|l| l[k]);
            let hi = upper.map(|u| u[k]);
            let show = |x: Option<f64>| x.map(fmt17).unwrap_or_default();
            writeln!(
                out,
                "{},{},{},{},{},{},{}",
                fmt17(self.t[k]),
                fmt17(self.mean[k]),
                fmt17(self.se[k]),
                show(lo),
                show(hi),
                show(lo.map(|l| self.mean[k] - l)),
                show(hi.map(|h| h - self.mean[k])),
            )?;
        }
        Ok(())
    }
}

fn column_stats(rows: &[Vec<f64>], cols: usize, seed: u64) -> (Vec<f64>, Vec<f64>) {
    (0..cols)
        .map(|k| {
            let col: Vec<f64> = rows.iter().map(|r| r[k]).collect();
            let (mean, _) = numerics::mean_se(&col);
            (mean, numerics::bootstrap_se(&col, 400, seed ^ k as u64))
        })
        .unzip()
}

/// `L̂_M(t) = (1/R) Σ_r L_M(t, ω_r)` with bootstrap standard errors.
pub fn annealed_laplace(exp: &Experiment, ts: &[f64], reps: usize) -> Result<(AnnealedCurve, EmpiricalIds)> {
    if reps == 0 {
        return Err(LabError::Config("at least one replicate is needed".into()));
    }
    let spectra = exp.spectra(reps)?;
    let rows = spectra.iter().map(|s| laplace_curve(s, exp.m(), ts)).collect();
    let curve = AnnealedCurve::from_replicates(exp.m(), ts.to_vec(), rows, exp.seed);
    let ids = EmpiricalIds::new(exp.m(), exp.graph.n(), exp.nu, spectra);
    Ok((curve, ids))
}

/// Pooled eigenvalues of the replicates, normalized by `R m(G_M)`.
#[derive(Debug, Clone)]
pub struct EmpiricalIds {
    pub m: u32,
    pub n: u32,
    pub nu: f64,
    pub spectra: Vec<Vec<f64>>,
    pooled: Vec<f64>,
}

impl EmpiricalIds {
    pub fn new(m: u32, n: u32, nu: f64, spectra: Vec<Vec<f64>>) -> EmpiricalIds {
        let mut pooled: Vec<f64> = spectra.iter().flatten().copied().collect();
        pooled.sort_by(|a, b| a.partial_cmp(b).unwrap());
        EmpiricalIds { m, n, nu, spectra, pooled }
    }

    pub fn replicates(&self) -> usize {
        self.spectra.len()
    }

    fn weight(&self) -> f64 {
        1.0 / (self.replicates() as f64 * mass_factor(self.m))
    }

    /// Total mass `dim / 3^M`.
    pub fn total_mass(&self) -> f64 {
        self.pooled.len() as f64 * self.weight()
    }

    /// Sorted pooled eigenvalues.
    pub fn pooled(&self) -> &[f64] {
        &self.pooled
    }

    pub fn count(&self, x: f64) -> usize {
        self.pooled.partition_point(|&l| l <= x)
    }

    /// Tail window of the pooled measure: from the point where `min_count`
    /// eigenvalues have accumulated to the point where `l̂` reaches `top`.
    pub fn tail_window(&self, min_count: usize, top: f64) -> Result<(f64, f64)> {
        let k_top = (top / self.weight()).ceil() as usize;
        if min_count == 0 || k_top <= min_count || k_top > self.pooled.len() {
            return Err(LabError::Numeric(format!(
                "no tail window: {} pooled eigenvalues, need more than {} below l = {top}",
                self.pooled.len(),
                min_count
            )));
        }
        Ok((self.pooled[min_count - 1], self.pooled[k_top - 1]))
    }

    /// `l̂([0, x])`.
    pub fn counting(&self, x: f64) -> f64 {
        self.count(x) as f64 * self.weight()
    }

    /// `∫ e^{-λ t} dl̂(λ)` summed directly.
    pub fn laplace(&self, t: f64) -> f64 {
        self.pooled.iter().map(|&l| (-t * l).exp()).sum::<f64>() * self.weight()
    }

    /// The same transform through `∫_0^∞ t e^{-t x} l̂([0, x]) dx`, exact for
    /// the step function.
    pub fn laplace_by_parts(&self, t: f64) -> f64 {
        let w = self.weight();
        let mut total = 0.0;
        let mut k = 0;
        while k < self.pooled.len() {
            let x0 = self.pooled[k];
            let mut j = k;
            while j < self.pooled.len() && self.pooled[j] == x0 {
                j += 1;
            }
            let level = j as f64 * w;
            let end = if j < self.pooled.len() { (-t * self.pooled[j]).exp() } else { 0.0 };
            total += level * ((-t * x0).exp() - end);
            k = j;
        }
        total
    }

    pub fn write_csv<W: Write>(&self, out: &mut W, xs: &[f64]) -> std::io::Result<()> {
        writeln!(out, "x,l_hat,count")?;
        for &x in xs {
            writeln!(out, "{},{},{}", fmt17(x), fmt17(self.counting(x)), self.count(x))?;
        }
        Ok(())
    }
}

/// Annealed transforms on `G_M` for a range of `M`, with successive
/// differences.
#[derive(Debug, Clone)]
pub struct ConvergenceTable {
    pub curves: Vec<AnnealedCurve>,
    /// `(M, k, |L̂_{M+1} - L̂_M|, se)` for each pair of neighbours and `t_k`.
    pub differences: Vec<(u32, usize, f64, f64)>,
}

pub fn convergence_study(template: &Experiment, n: u32, ms: &[u32], ts: &[f64], reps: usize) -> Result<ConvergenceTable> {
    let mut curves = Vec::new();
    for &m in ms {
        let mut exp = template.clone();
        exp.graph = Arc::new(build_graph(m, n)?);
        curves.push(annealed_laplace(&exp, ts, reps)?.0);
    }
    let mut differences = Vec::new();
    for w in curves.windows(2) {
        for k in 0..ts.len() {
            let d = (w[1].mean[k] - w[0].mean[k]).abs();
            let se = (w[0].se[k].powi(2) + w[1].se[k].powi(2)).sqrt();
            differences.push((w[0].m, k, d, se));
        }
    }
    Ok(ConvergenceTable { curves, differences })
}

/// `E_Q L^{N*}_M(t)`: reflected traces with the periodized potential.
pub fn periodized_laplace(template: &Experiment, m: u32, depth: u32, ts: &[f64], reps: usize) -> Result<AnnealedCurve> {
    let mut exp = template.clone();
    exp.graph = Arc::new(build_graph(m, template.graph.n())?);
    exp.mode = BoundaryMode::Reflected;
    exp.periodize = Some(depth);
    Ok(annealed_laplace(&exp, ts, reps)?.0)
}

/// Coupled periodized traces for `M = 0..=top` and the Dirichlet trace on
/// `G_top`; smaller scales use the restriction of the `G_top` cloud.
#[derive(Debug, Clone)]
pub struct MonotonicityStudy {
    pub t: Vec<f64>,
    /// `periodized[M]` for `M = 0..=top`.
    pub periodized: Vec<AnnealedCurve>,
    pub dirichlet: AnnealedCurve,
    /// Paired differences `(mean, se)` of `L*_M - L*_{M+1}` per `t`.
    pub steps: Vec<Vec<(f64, f64)>>,
    /// Paired differences `(mean, se)` of `L*_top - L^D_top` per `t`.
    pub domination: Vec<(f64, f64)>,
}

pub fn monotonicity_study(template: &Experiment, top: u32, depth: u32, ts: &[f64], reps: usize) -> Result<MonotonicityStudy> {
    let n = template.graph.n();
    let graphs: Vec<Arc<GasketGraph>> = (0..=top).map(|m| build_graph(m, n).map(Arc::new)).collect::<Result<_>>()?;
    let hosts: Vec<GasketGraph> = (0..=top).map(|m| build_graph(m + depth, n)).collect::<Result<_>>()?;
    let reflected: Vec<SubordinateOperator> = graphs
        .iter()
        .map(|g| {
            let gen = DiscreteGenerator::with_kappa(g.clone(), BoundaryMode::Reflected, template.kappa);
            SubordinateOperator::new(&gen, &template.phi, template.order)
        })
        .collect::<Result<_>>()?;
    let top_graph = graphs[top as usize].clone();
    let dir_gen = DiscreteGenerator::with_kappa(top_graph.clone(), BoundaryMode::Dirichlet, template.kappa);
    let dirichlet = SubordinateOperator::new(&dir_gen, &template.phi, template.order)?;
    let rows: Vec<(Vec<Vec<f64>>, Vec<f64>)> = (0..reps as u64)
        .into_par_iter()
        .map(|r| {
            let cloud = potentials::sample_cloud(&top_graph, template.nu, template.seed, r)?;
            let mut per_m = Vec::new();
            for m in 0..=top {
                let c = cloud.restrict(m)?;
                let g = &graphs[m as usize];
                let v = potentials::periodize(&hosts[m as usize], g, &c, &template.profile)?.potential.values;
                per_m.push(laplace_curve(&reflected[m as usize].eigenvalues(&v)?, m, ts));
            }
            let v = potentials::evaluate_potential(&top_graph, &cloud, &template.profile)?.values;
            let d = laplace_curve(&dirichlet.eigenvalues(&v)?, top, ts);
            Ok((per_m, d))
        })
        .collect::<Result<_>>()?;
    let seed = template.seed;
    let periodized = (0..=top as usize)
        .map(|m| {
            let per: Vec<Vec<f64>> = rows.iter().map(|(p, _)| p[m].clone()).collect();
            AnnealedCurve::from_replicates(m as u32, ts.to_vec(), per, seed)
        })
        .collect::<Vec<_>>();
    let dirichlet = AnnealedCurve::from_replicates(top, ts.to_vec(), rows.iter().map(|(_, d)| d.clone()).collect(), seed);
    let paired = |a: &AnnealedCurve, b: &AnnealedCurve| -> Vec<(f64, f64)> {
        (0..ts.len())
            .map(|k| {
                let diff: Vec<f64> = a.per_replicate.iter().zip(&b.per_replicate).map(|(x, y)| x[k] - y[k]).collect();
                numerics::mean_se(&diff)
            })
            .collect()
    };
    let steps = periodized.windows(2).map(|w| paired(&w[0], &w[1])).collect();
    let domination = paired(&periodized[top as usize], &dirichlet);
    Ok(MonotonicityStudy { t: ts.to_vec(), periodized, dirichlet, steps, domination })
}

/// One evaluated bound.
#[derive(Debug, Clone)]
pub struct BoundPoint {
    pub t: f64,
    pub rhs: f64,
    /// Scale `M(t)` used by the bound, if any.
    pub m: Option<u32>,
    /// Radius `a` of the range split, if any.
    pub a: Option<f64>,
    pub notes: String,
}

/// Certificate rows: computed left-hand sides against bound right-hand
/// sides, with the margin sign kept per `t`.
#[derive(Debug, Clone)]
pub struct BoundCertificate {
    pub t: Vec<f64>,
    pub lhs: Vec<f64>,
    pub lhs_se: Vec<f64>,
    pub rhs: Vec<f64>,
    /// `lhs - rhs` for lower bounds, `rhs - lhs` for upper bounds.
    pub margin: Vec<f64>,
    pub params: Vec<String>,
}

impl BoundCertificate {
    pub fn lower(curve: &AnnealedCurve, points: &[BoundPoint]) -> BoundCertificate {
        Self::build(curve, points, true)
    }

    pub fn upper(curve: &AnnealedCurve, points: &[BoundPoint]) -> BoundCertificate {
        Self::build(curve, points, false)
    }

    fn build(curve: &AnnealedCurve, points: &[BoundPoint], lower: bool) -> BoundCertificate {
        let mut out = BoundCertificate { t: vec![], lhs: vec![], lhs_se: vec![], rhs: vec![], margin: vec![], params: vec![] };
        for p in points {
            let Some(k) = curve.t.iter().position(|&t| t == p.t) else { continue };
            out.t.push(p.t);
            out.lhs.push(curve.mean[k]);
            out.lhs_se.push(curve.se[k]);
            out.rhs.push(p.rhs);
            out.margin.push(if lower { curve.mean[k] - p.rhs } else { p.rhs - curve.mean[k] });
            out.params.push(format!("M={:?} a={:?} {}", p.m, p.a, p.notes));
        }
        out
    }

    /// Whether every margin is at least `-k` standard errors.
    pub fn holds_within(&self, k: f64) -> bool {
        self.margin.iter().zip(&self.lhs_se).all(|(&m, &se)| m >= -k * se)
    }
}

/// `M(t)`: the integer with `2^M <= (t/ν)^{1/(d+β)} < 2^{M+1}`.
pub fn scale_for(t: f64, nu: f64, beta: f64) -> Option<u32> {
    let x = ((t / nu).ln() / (DIM_H + beta)) / std::f64::consts::LN_2;
    let m = x.floor();
    (m >= 0.0 && m.is_finite()).then_some(m as u32)
}

/// Lower bound `exp{-t φ(5^{-M} λ₁^{BM}(G_0)) - ν t S_W(a) - ν(3^M + 9 a^d)}`
/// with `M = M(t)` and `a = t^{1/(d+θ)}`. `lambda_bm` maps a level to the
/// Brownian Dirichlet ground value of `G_0` at that level; `s_w` is
/// evaluated on `graph`.
pub fn lower_certificate(
    phi: &LaplaceExponent,
    beta: f64,
    profile: &ProfileSpec,
    theta: f64,
    nu: f64,
    t: f64,
    graph: &GasketGraph,
    lambda_bm: &dyn Fn(u32) -> Result<f64>,
) -> Result<BoundPoint> {
    let m = scale_for(t, nu, beta)
        .ok_or_else(|| LabError::NotApplicable(format!("t = {t} is too small for M(t) >= 0 at ν = {nu}")))?;
    let a = t.powf(1.0 / (DIM_H + theta));
    let lambda0 = lambda_bm(graph.n() + m)?;
    let s = potentials::s_w(graph, profile, a)?;
    let arg = crate::time_factor(m) * lambda0;
    let exponent = t * phi.evaluate(arg)? + nu * t * s + nu * (mass_factor(m) + 9.0 * a.powf(DIM_H));
    Ok(BoundPoint {
        t,
        rhs: (-exponent).exp(),
        m: Some(m),
        a: Some(a),
        notes: format!("lambda_bm={} s_w={}", fmt17(lambda0), fmt17(s)),
    })
}

/// `sup_x p(t, x, x)` of the free process in the given mode.
pub fn kernel_sup(gen: &DiscreteGenerator, phi: &LaplaceExponent, order: KillOrder, t: f64) -> Result<f64> {
    let k = operators::subordinate_kernel(gen, phi, order, t)?;
    Ok((0..k.indices.len()).map(|i| k.values[(i, i)]).fold(0.0, f64::max))
}

/// Long-range upper bound `ĉ e^{-ν R_W(a, t)}`, with `R_W` evaluated on
/// `graph`.
pub fn upper_long_range(graph: &GasketGraph, profile: &ProfileSpec, nu: f64, t: f64, a: f64, c_hat: f64) -> Result<BoundPoint> {
    let r = potentials::r_w(graph, profile, a, t)?;
    Ok(BoundPoint {
        t,
        rhs: c_hat * (-nu * r).exp(),
        m: None,
        a: Some(a),
        notes: format!("r_w={} c_hat={}", fmt17(r), fmt17(c_hat)),
    })
}

/// Both sides of the reduction to scale 0, per replicate.
#[derive(Debug, Clone)]
pub struct ReductionCheck {
    pub t: f64,
    pub m: u32,
    pub gamma: f64,
    /// Stand-in for the kernel prefactor, `sup_x p^M(1, x, x)`.
    pub c: f64,
    /// Form-comparison constant.
    pub c_prime: f64,
    pub lhs: Vec<f64>,
    pub rhs: Vec<f64>,
}

impl ReductionCheck {
    pub fn margins(&self) -> Vec<f64> {
        self.rhs.iter().zip(&self.lhs).map(|(r, l)| r - l).collect()
    }

    pub fn pass_fraction(&self) -> f64 {
        let ok = self.margins().iter().filter(|&&m| m >= -1e-12 * (1.0 + m.abs())).count();
        ok as f64 / self.lhs.len() as f64
    }

    pub fn mean_sides(&self) -> (f64, f64) {
        (numerics::mean_se(&self.lhs).0, numerics::mean_se(&self.rhs).0)
    }
}

/// Reduction of the periodized trace on `G_M` to a principal eigenvalue on
/// `G_0`, with `2^M <= (t/ν)^{1/(d+γ)} < 2^{M+1}`. Replicate `r` uses the
/// same cloud for `V*_M` on `G_M` and for `V*_{0,M,γ}` on the matched `G_0`.
pub fn upper_reduction_check(
    phi: &LaplaceExponent,
    cert: &ScalingCertificate,
    profile: &ProfileSpec,
    nu: f64,
    t: f64,
    n: u32,
    depth: u32,
    reps: usize,
    seed: u64,
) -> Result<ReductionCheck> {
    if !(t > 1.0) {
        return Err(LabError::Domain("the reduction needs t > 1".into()));
    }
    let (gamma, scale_phi) = match cert.regime {
        Regime::U1 => (DIM_W, LaplaceExponent::PureDrift { b: 1.0 }),
        Regime::U2 | Regime::U3 => {
            let a1 = cert.alpha1.ok_or_else(|| LabError::Domain("certificate lacks α₁".into()))?;
            (a1, LaplaceExponent::StableWithDrift { b: 0.0, g: a1 / DIM_W })
        }
        Regime::None => {
            return Err(LabError::NotApplicable("no upper-bound regime for this Laplace exponent".into()));
        }
    };
    let m = scale_for(t, nu, gamma).unwrap_or(0);
    let g_m = Arc::new(build_graph(m, n)?);
    let host_m = build_graph(m + depth, n)?;
    let g_0 = Arc::new(build_graph(0, n + m)?);
    let host_0 = build_graph(depth, n + m)?;
    let gen_m = DiscreteGenerator::new(g_m.clone(), BoundaryMode::Reflected);
    let gen_0 = DiscreteGenerator::new(g_0.clone(), BoundaryMode::Reflected);
    let op_m = SubordinateOperator::new(&gen_m, phi, KillOrder::default())?;
    let op_0 = SubordinateOperator::new(&gen_0, &scale_phi, KillOrder::default())?;
    let c = kernel_sup(&gen_m, phi, KillOrder::default(), 1.0)?;
    let c_prime = match cert.regime {
        Regime::U1 => phi.drift().min(1.0),
        _ => {
            let g = gamma / DIM_W;
            gen_m
                .full_spectrum(false)?
                .values
                .iter()
                .filter(|&&mu| mu > 1e-12)
                .map(|&mu| phi.phi(mu) / mu.powf(g))
                .fold(1.0f64, f64::min)
        }
    };
    let rate = c_prime * (1.0 - 1.0 / t) * nu.powf(gamma / (DIM_H + gamma)) * t.powf(DIM_H / (DIM_H + gamma));
    let sides: Vec<(f64, f64)> = (0..reps as u64)
        .into_par_iter()
        .map(|r| {
            let cloud = potentials::sample_cloud(&g_m, nu, seed, r)?;
            let v = potentials::periodize(&host_m, &g_m, &cloud, profile)?.potential.values;
            let lhs = operators::trace_of(&op_m.eigenvalues(&v)?, m, t);
            let cloud0 = cloud.transfer(&g_0)?;
            let v0 = potentials::rescaled_periodize(&host_0, &g_0, &cloud0, profile, m, gamma)?.potential.values;
            let l0 = op_0.eigenvalues(&v0)?[0];
            Ok((lhs, c * (-rate * l0).exp()))
        })
        .collect::<Result<_>>()?;
    let (lhs, rhs) = sides.into_iter().unzip();
    Ok(ReductionCheck { t, m, gamma, c, c_prime, lhs, rhs })
}

/// Fit of `log(-log y)` against `log x`.
#[derive(Debug, Clone)]
pub struct LifschitzFit {
    pub slope: f64,
    pub intercept: f64,
    pub ci: (f64, f64),
    pub window: (f64, f64),
    pub points: usize,
    pub mode: FitMode,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FitMode {
    /// Slope of `log(-log L̂(t))` in `log t`.
    Laplace,
    /// Slope of `log(-log l̂([0, x]))` in `log(1/x)`.
    Measure,
}

impl LifschitzFit {
    pub fn report(&self, seeds: &str) -> String {
        format!(
            "fit {{\n  mode: {:?}\n  slope: {}\n  ci95: [{}, {}]\n  window: [{}, {}]\n  points: {}\n  seeds: {}\n}}\n",
            self.mode,
            fmt17(self.slope),
            fmt17(self.ci.0),
            fmt17(self.ci.1),
            fmt17(self.window.0),
            fmt17(self.window.1),
            self.points,
            seeds
        )
    }
}

fn loglog_fit(x: &[f64], y: &[f64], invert_x: bool) -> Result<LineFit> {
    let mut lx = Vec::with_capacity(x.len());
    let mut ly = Vec::with_capacity(y.len());
    for (&a, &b) in x.iter().zip(y) {
        if !(b > 0.0 && b < 1.0) {
            return Err(LabError::Numeric(format!("value {b} at {a} is outside (0, 1), cannot take log(-log)")));
        }
        lx.push(if invert_x { -a.ln() } else { a.ln() });
        ly.push((-b.ln()).ln());
    }
    numerics::fit_line(&lx, &ly)
}

fn percentile_ci(mut xs: Vec<f64>) -> (f64, f64) {
    xs.retain(|x| x.is_finite());
    if xs.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    xs.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let at = |q: f64| xs[((xs.len() - 1) as f64 * q).round() as usize];
    (at(0.025), at(0.975))
}

/// Laplace-domain fit on the points of `curve` with `t` in `window`;
/// replicates are resampled for the interval.
pub fn lifschitz_fit_laplace(curve: &AnnealedCurve, window: (f64, f64), resamples: usize, seed: u64) -> Result<LifschitzFit> {
    let idx: Vec<usize> = (0..curve.t.len()).filter(|&k| curve.t[k] >= window.0 && curve.t[k] <= window.1).collect();
    if idx.len() < 5 {
        return Err(LabError::Numeric(format!("fit window holds {} points, need 5", idx.len())));
    }
    let xs: Vec<f64> = idx.iter().map(|&k| curve.t[k]).collect();
    let mean_of = |rows: &[&Vec<f64>]| -> Vec<f64> {
        idx.iter().map(|&k| rows.iter().map(|r| r[k]).sum::<f64>() / rows.len() as f64).collect()
    };
    let all: Vec<&Vec<f64>> = curve.per_replicate.iter().collect();
    let fit = loglog_fit(&xs, &mean_of(&all), false)?;
    let mut rng = rng::stream(seed, Tag::Bootstrap, 1, 0);
    let r = all.len();
    let slopes = (0..resamples)
        .filter_map(|_| {
            let pick: Vec<&Vec<f64>> = (0..r).map(|_| all[rng.random_range(0..r)]).collect();
            loglog_fit(&xs, &mean_of(&pick), false).ok().map(|f| f.slope)
        })
        .collect();
    Ok(LifschitzFit {
        slope: fit.slope,
        intercept: fit.intercept,
        ci: percentile_ci(slopes),
        window,
        points: xs.len(),
        mode: FitMode::Laplace,
    })
}

/// Measure-domain fit on the log-spaced points `xs` inside `window`.
pub fn lifschitz_fit_measure(ids: &EmpiricalIds, window: (f64, f64), steps: usize, resamples: usize, seed: u64) -> Result<LifschitzFit> {
    if steps < 5 {
        return Err(LabError::Numeric("measure-domain fit needs at least 5 grid points".into()));
    }
    let xs = numerics::log_grid(window.0, window.1, steps);
    let ys: Vec<f64> = xs.iter().map(|&x| ids.counting(x)).collect();
    if ys.iter().any(|&y| y <= 0.0) {
        return Err(LabError::Numeric("empty eigenvalue counts inside the fit window".into()));
    }
    let fit = loglog_fit(&xs, &ys, true)?;
    let mut rng = rng::stream(seed, Tag::Bootstrap, 2, 0);
    let r = ids.replicates();
    let slopes = (0..resamples)
        .filter_map(|_| {
            let pick: Vec<Vec<f64>> = (0..r).map(|_| ids.spectra[rng.random_range(0..r)].clone()).collect();
            let boot = EmpiricalIds::new(ids.m, ids.n, ids.nu, pick);
            let ys: Vec<f64> = xs.iter().map(|&x| boot.counting(x)).collect();
            loglog_fit(&xs, &ys, true).ok().map(|f| f.slope)
        })
        .collect();
    Ok(LifschitzFit {
        slope: fit.slope,
        intercept: fit.intercept,
        ci: percentile_ci(slopes),
        window,
        points: xs.len(),
        mode: FitMode::Measure,
    })
}

/// Fit of an explicit curve, without resampling.
pub fn fit_curve(x: &[f64], y: &[f64], mode: FitMode) -> Result<LifschitzFit> {
    if x.len() < 5 {
        return Err(LabError::Numeric("fit needs at least 5 points".into()));
    }
    let fit = loglog_fit(x, y, mode == FitMode::Measure)?;
    let (lo, hi) = x.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &v| (a.min(v), b.max(v)));
    Ok(LifschitzFit { slope: fit.slope, intercept: fit.intercept, ci: (fit.slope, fit.slope), window: (lo, hi), points: x.len(), mode })
}

/// Target slopes of the two fit modes for an exponent `γ`.
pub fn target_slopes(gamma: f64) -> (f64, f64) {
    (DIM_H / (DIM_H + gamma), DIM_H / gamma)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn synthetic_laplace_fit() {
        let t = numerics::log_grid(4.0, 64.0, 9);
        let y: Vec<f64> = t.iter().map(|&s| (-s.powf(0.4)).exp()).collect();
        let fit = fit_curve(&t, &y, FitMode::Laplace).unwrap();
        assert!((fit.slope - 0.4).abs() < 1e-3);
    }

    #[test]
    fn targets() {
        let (a, _) = target_slopes(DIM_W);
        assert!((a - 3f64.ln() / 15f64.ln()).abs() < 1e-12);
        let (_, b) = target_slopes(DIM_W / 2.0);
        assert!((b - 9f64.ln() / 5f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn scale_choice() {
        assert_eq!(scale_for(1.0, 1.0, 1.0), Some(0));
        let m = scale_for(1e4, 1.0, DIM_W).unwrap();
        let x = 1e4f64.powf(1.0 / (DIM_H + DIM_W));
        assert!(2f64.powi(m as i32) <= x && x < 2f64.powi(m as i32 + 1));
        assert_eq!(scale_for(0.5, 1.0, 1.0), None);
    }

    #[test]
    fn ids_transform_two_ways() {
        let ids = EmpiricalIds::new(1, 2, 1.0, vec![vec![0.5, 1.0, 1.0, 3.0], vec![0.2, 2.0]]);
        for t in [0.1, 1.0, 5.0] {
            assert!((ids.laplace(t) - ids.laplace_by_parts(t)).abs() < 1e-14);
        }
        assert!((ids.total_mass() - 6.0 / 6.0).abs() < 1e-15);
    }
}
