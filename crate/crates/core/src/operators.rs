//! Random-walk generators on gasket graphs, their subordinated versions and
//! Schrödinger perturbations, kernels via the spectral calculus, and the
//! scaling identities between scales.
//!
//! Time normalization: the level-`n` generator is `H_n = κ 5^n (I − P)`
//! with `P` the simple-random-walk matrix. The factor `5^n = (2^n)^{d_w}`
//! makes a graph step of length `2^{-n}` take time of order `2^{-n d_w}`;
//! with `κ = 1` absolute times differ from the continuum by a constant that
//! cancels in every exponent-level comparison.
//!
//! All matrices are kept in the symmetric gauge `D^{1/2} H D^{-1/2}` with
//! `D` the vertex masses, which for the gasket is
//! `κ 5^n (I − deg^{-1/2} A deg^{-1/2})`. Eigenfunctions are reported in the
//! mass-orthonormal gauge.

use std::io::Write;
use std::sync::Arc;

use nalgebra::DMatrix;

use crate::error::{LabError, Result};
use crate::gasket::GasketGraph;
use crate::linalg::{self, LowestPairs, SparseSym};
use crate::subordinators::{LaplaceExponent, ScalingCertificate};
use crate::{mass_factor, time_factor, DIM_W};

/// Largest dimension solved densely for full spectra.
pub const DENSE_CAP: usize = 3300;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BoundaryMode {
    /// The three corners of `G_M` are removed.
    Dirichlet,
    Reflected,
}

/// Order of subordination and killing in Dirichlet mode.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum KillOrder {
    /// Subordinate the reflected walk, then delete the boundary rows.
    #[default]
    SubordinateThenKill,
    /// Subordinate the killed walk.
    KillThenSubordinate,
}

/// `κ 5^n (I − P)` on a graph, restricted according to the boundary mode.
#[derive(Debug, Clone)]
pub struct DiscreteGenerator {
    graph: Arc<GasketGraph>,
    mode: BoundaryMode,
    kappa: f64,
    active: Vec<bool>,
    indices: Vec<usize>,
}

impl DiscreteGenerator {
    pub fn new(graph: Arc<GasketGraph>, mode: BoundaryMode) -> DiscreteGenerator {
        DiscreteGenerator::with_kappa(graph, mode, 1.0)
    }

    pub fn with_kappa(graph: Arc<GasketGraph>, mode: BoundaryMode, kappa: f64) -> DiscreteGenerator {
        let mut active = vec![true; graph.num_vertices()];
        if mode == BoundaryMode::Dirichlet {
            for b in graph.boundary() {
                active[b] = false;
            }
        }
        DiscreteGenerator::with_active(graph, mode, kappa, active)
    }

    /// Generator killed on every vertex with `active[v] == false`.
    pub fn with_active(graph: Arc<GasketGraph>, mode: BoundaryMode, kappa: f64, active: Vec<bool>) -> DiscreteGenerator {
        let indices = (0..graph.num_vertices()).filter(|&v| active[v]).collect();
        DiscreteGenerator { graph, mode, kappa, active, indices }
    }

    pub fn graph(&self) -> &GasketGraph {
        &self.graph
    }

    pub fn graph_arc(&self) -> Arc<GasketGraph> {
        self.graph.clone()
    }

    pub fn mode(&self) -> BoundaryMode {
        self.mode
    }

    pub fn kappa(&self) -> f64 {
        self.kappa
    }

    /// `κ 5^n`.
    pub fn scale(&self) -> f64 {
        self.kappa * 5f64.powi(self.graph.n() as i32)
    }

    pub fn active(&self) -> &[bool] {
        &self.active
    }

    /// Vertex ids of the retained rows, ascending.
    pub fn indices(&self) -> &[usize] {
        &self.indices
    }

    pub fn dim(&self) -> usize {
        self.indices.len()
    }

    /// Unscaled symmetric `I − deg^{-1/2} A deg^{-1/2}` on all vertices.
    pub fn normalized_laplacian(&self) -> SparseSym {
        let g = &self.graph;
        let pairs: Vec<(usize, usize, f64)> = g
            .edges()
            .iter()
            .map(|&(a, b)| (a, b, -1.0 / ((g.degree(a) * g.degree(b)) as f64).sqrt()))
            .collect();
        SparseSym::new(vec![1.0; g.num_vertices()], &pairs)
    }

    /// Scaled symmetric generator on all vertices (no killing).
    pub fn sparse_full(&self) -> SparseSym {
        scaled(self.normalized_laplacian(), self.scale())
    }

    /// Unscaled symmetric matrix restricted to the retained rows.
    pub fn dense_unscaled(&self) -> DMatrix<f64> {
        restrict(&self.normalized_laplacian().to_dense(), &self.indices)
    }

    fn check_cap(&self, dim: usize) -> Result<()> {
        if dim > DENSE_CAP {
            return Err(LabError::Capacity(format!(
                "dense solve of dimension {dim} exceeds the cap {DENSE_CAP}"
            )));
        }
        Ok(())
    }

    /// Spectrum of the (killed) generator itself.
    pub fn spectrum(&self, with_vectors: bool) -> Result<Spectrum> {
        self.check_cap(self.dim())?;
        let eig = linalg::eigh(self.dense_unscaled(), with_vectors)?;
        Ok(Spectrum::from_unscaled(eig, self.scale(), &self.indices, self.graph.masses()))
    }

    /// Spectrum of the generator without killing, on all vertices.
    pub fn full_spectrum(&self, with_vectors: bool) -> Result<Spectrum> {
        let nv = self.graph.num_vertices();
        self.check_cap(nv)?;
        let all: Vec<usize> = (0..nv).collect();
        let eig = linalg::eigh(self.normalized_laplacian().to_dense(), with_vectors)?;
        Ok(Spectrum::from_unscaled(eig, self.scale(), &all, self.graph.masses()))
    }
}

fn restrict(m: &DMatrix<f64>, idx: &[usize]) -> DMatrix<f64> {
    if idx.len() == m.nrows() {
        return m.clone();
    }
    DMatrix::from_fn(idx.len(), idx.len(), |i, j| m[(idx[i], idx[j])])
}

/// Eigenvalues with optional mass-orthonormal eigenfunctions.
#[derive(Debug, Clone)]
pub struct Spectrum {
    pub values: Vec<f64>,
    /// Columns are eigenfunctions, rows follow `indices`.
    pub vectors: Option<DMatrix<f64>>,
    /// Graph vertex of each row.
    pub indices: Vec<usize>,
    pub masses: Vec<f64>,
    /// False when only the lowest part of the spectrum was computed.
    pub complete: bool,
    /// Residual norms of iteratively computed pairs.
    pub residuals: Vec<f64>,
}

impl Spectrum {
    fn from_unscaled(eig: linalg::Eigen, scale: f64, indices: &[usize], all_masses: &[f64]) -> Spectrum {
        let values = eig.values.iter().map(|&l| (l * scale).max(0.0)).collect();
        Spectrum::from_symmetric(linalg::Eigen { values, vectors: eig.vectors }, indices, all_masses)
    }

    /// Converts a decomposition of a symmetric-gauge matrix.
    fn from_symmetric(eig: linalg::Eigen, indices: &[usize], all_masses: &[f64]) -> Spectrum {
        let masses: Vec<f64> = indices.iter().map(|&v| all_masses[v]).collect();
        let vectors = eig.vectors.map(|mut u| {
            for (r, &m) in masses.iter().enumerate() {
                let s = 1.0 / m.sqrt();
                u.row_mut(r).scale_mut(s);
            }
            u
        });
        Spectrum {
            values: eig.values,
            vectors,
            indices: indices.to_vec(),
            masses,
            complete: true,
            residuals: vec![],
        }
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn lowest(&self) -> f64 {
        self.values[0]
    }

    /// Kernel `Σ_k f(λ_k) φ_k(x) φ_k(y)`.
    pub fn kernel_with<F: Fn(f64) -> f64>(&self, f: F) -> Result<Kernel> {
        let v = self
            .vectors
            .as_ref()
            .ok_or_else(|| LabError::Solver("kernel needs eigenvectors".into()))?;
        if !self.complete {
            return Err(LabError::Solver("kernel needs the full spectrum".into()));
        }
        let mut scaled = v.clone();
        for (k, &lam) in self.values.iter().enumerate() {
            scaled.column_mut(k).scale_mut(f(lam));
        }
        Ok(Kernel { indices: self.indices.clone(), masses: self.masses.clone(), values: &scaled * v.transpose() })
    }

    /// Mass-weighted orthonormality residual `max |Φᵀ D Φ − I|`.
    pub fn orthonormality_residual(&self) -> Option<f64> {
        let v = self.vectors.as_ref()?;
        let mut w = v.clone();
        for (r, &m) in self.masses.iter().enumerate() {
            w.row_mut(r).scale_mut(m);
        }
        let gram = v.transpose() * w;
        let n = gram.nrows();
        Some((0..n).flat_map(|i| (0..n).map(move |j| (i, j))).fold(0.0f64, |acc, (i, j)| {
            let target = if i == j { 1.0 } else { 0.0 };
            acc.max((gram[(i, j)] - target).abs())
        }))
    }

    /// CSV `index,eigenvalue`.
    pub fn write_csv<W: Write>(&self, out: &mut W) -> std::io::Result<()> {
        writeln!(out, "index,eigenvalue")?;
        for (k, v) in self.values.iter().enumerate() {
            writeln!(out, "{},{}", k, crate::numerics::fmt17(*v))?;
        }
        Ok(())
    }
}

/// Kernel density with respect to the vertex masses.
#[derive(Debug, Clone)]
pub struct Kernel {
    pub indices: Vec<usize>,
    pub masses: Vec<f64>,
    pub values: DMatrix<f64>,
}

impl Kernel {
    /// `Σ_y k(x, y) m(y)` for row `i`.
    pub fn row_mass(&self, i: usize) -> f64 {
        self.values.row(i).iter().zip(&self.masses).map(|(k, m)| k * m).sum()
    }

    /// Mass-weighted composition `Σ_z a(x, z) b(z, y) m(z)`.
    pub fn compose(&self, other: &Kernel) -> Kernel {
        let mut weighted = other.values.clone();
        for (r, &m) in self.masses.iter().enumerate() {
            weighted.row_mut(r).scale_mut(m);
        }
        Kernel { indices: self.indices.clone(), masses: self.masses.clone(), values: &self.values * weighted }
    }

    /// Row of the kernel as a vertex-id map.
    pub fn row_of(&self, v: usize) -> Option<usize> {
        self.indices.binary_search(&v).ok()
    }

    /// CSV `x,y,value`.
    pub fn write_csv<W: Write>(&self, out: &mut W) -> std::io::Result<()> {
        writeln!(out, "x,y,value")?;
        for (i, &x) in self.indices.iter().enumerate() {
            for (j, &y) in self.indices.iter().enumerate() {
                writeln!(out, "{},{},{}", x, y, crate::numerics::fmt17(self.values[(i, j)]))?;
            }
        }
        Ok(())
    }
}

/// `g(t, ·, ·)` of the (killed) walk, by uniformization: with `S` the
/// symmetric-gauge transition matrix, `e^{-τ(I - S)} = (e^{-h} e^{hS})^{2^j}`
/// for `h = τ 2^{-j} <= 1/2`. Every term is nonnegative, so small entries
/// keep full relative precision, unlike the spectral route.
pub fn heat_kernel(gen: &DiscreteGenerator, t: f64) -> Result<Kernel> {
    if !(t > 0.0) {
        return Err(LabError::Domain("heat kernel needs t > 0".into()));
    }
    gen.check_cap(gen.dim())?;
    let mut s = -gen.dense_unscaled();
    s.fill_diagonal(0.0);
    let tau = t * gen.scale();
    let j = (2.0 * tau).log2().ceil().max(0.0) as i32;
    let h = tau / 2f64.powi(j);
    let mut term = DMatrix::identity(s.nrows(), s.ncols());
    let mut e = term.clone();
    for k in 1..60 {
        term = &term * &s * (h / k as f64);
        e += &term;
        if term.max() <= 1e-18 * e.max() {
            break;
        }
    }
    e *= (-h).exp();
    for _ in 0..j {
        e = &e * &e;
    }
    let idx = gen.indices().to_vec();
    let masses: Vec<f64> = idx.iter().map(|&v| gen.graph().mass(v)).collect();
    let values = DMatrix::from_fn(idx.len(), idx.len(), |a, b| e[(a, b)] / (masses[a] * masses[b]).sqrt());
    Ok(Kernel { indices: idx, masses, values })
}

/// `Φ(H)` in the symmetric gauge together with the data needed to add
/// potentials and solve repeatedly.
#[derive(Debug, Clone)]
pub struct SubordinateOperator {
    generator: DiscreteGenerator,
    phi: LaplaceExponent,
    order: KillOrder,
    dense: Option<DMatrix<f64>>,
}

impl SubordinateOperator {
    pub fn new(generator: &DiscreteGenerator, phi: &LaplaceExponent, order: KillOrder) -> Result<SubordinateOperator> {
        let dense = match phi {
            LaplaceExponent::PureDrift { b } => {
                if generator.dim() <= DENSE_CAP {
                    Some(generator.dense_unscaled() * (b * generator.scale()))
                } else {
                    None
                }
            }
            _ => {
                let use_full = generator.mode() == BoundaryMode::Dirichlet && order == KillOrder::SubordinateThenKill;
                let (eig, idx) = if use_full {
                    generator.check_cap(generator.graph().num_vertices())?;
                    let full = generator.normalized_laplacian().to_dense();
                    let all: Vec<usize> = (0..generator.graph().num_vertices()).collect();
                    (linalg::eigh(full, true)?, all)
                } else {
                    generator.check_cap(generator.dim())?;
                    (linalg::eigh(generator.dense_unscaled(), true)?, generator.indices().to_vec())
                };
                let scale = generator.scale();
                let m = linalg::apply_function(&eig, |l| phi.phi((l * scale).max(0.0)))?;
                if use_full {
                    let pos: Vec<usize> = generator.indices().iter().map(|&v| idx.binary_search(&v).unwrap()).collect();
                    Some(restrict(&m, &pos))
                } else {
                    Some(m)
                }
            }
        };
        Ok(SubordinateOperator { generator: generator.clone(), phi: phi.clone(), order, dense })
    }

    /// The same operator killed outside `active`, which must be a subset of
    /// the current rows; the subordinated matrix is restricted, not rebuilt.
    pub fn restricted(&self, active: Vec<bool>) -> Result<SubordinateOperator> {
        let old = self.generator.active();
        if active.len() != old.len() || active.iter().zip(old).any(|(&a, &o)| a && !o) {
            return Err(LabError::Config("restriction must keep a subset of the active vertices".into()));
        }
        let generator = DiscreteGenerator::with_active(self.generator.graph_arc(), BoundaryMode::Dirichlet, self.generator.kappa(), active);
        if matches!(self.phi, LaplaceExponent::PureDrift { .. }) {
            return SubordinateOperator::new(&generator, &self.phi, KillOrder::SubordinateThenKill);
        }
        let dense = self.dense.as_ref().map(|m| {
            let rows = self.generator.indices();
            let pos: Vec<usize> = generator.indices().iter().map(|v| rows.binary_search(v).unwrap()).collect();
            restrict(m, &pos)
        });
        Ok(SubordinateOperator { generator, phi: self.phi.clone(), order: KillOrder::SubordinateThenKill, dense })
    }

    pub fn generator(&self) -> &DiscreteGenerator {
        &self.generator
    }

    pub fn exponent(&self) -> &LaplaceExponent {
        &self.phi
    }

    pub fn order(&self) -> KillOrder {
        self.order
    }

    pub fn dim(&self) -> usize {
        self.generator.dim()
    }

    /// Dense `Φ(H) + diag(V)` on the retained rows; `v` is indexed by vertex.
    pub fn matrix_with(&self, v: &[f64]) -> Result<DMatrix<f64>> {
        let base = self.dense.as_ref().ok_or_else(|| {
            LabError::Capacity(format!("dimension {} exceeds the dense cap {DENSE_CAP}", self.dim()))
        })?;
        let mut m = base.clone();
        for (r, &vtx) in self.generator.indices().iter().enumerate() {
            m[(r, r)] += v[vtx];
        }
        Ok(m)
    }

    /// Full spectrum of `Φ(H) + diag(V)`.
    pub fn spectrum(&self, v: &[f64], with_vectors: bool) -> Result<Spectrum> {
        check_potential(v, self.generator.graph().num_vertices())?;
        let eig = linalg::eigh(self.matrix_with(v)?, with_vectors)?;
        Ok(Spectrum::from_symmetric(eig, self.generator.indices(), self.generator.graph().masses()))
    }

    pub fn eigenvalues(&self, v: &[f64]) -> Result<Vec<f64>> {
        Ok(self.spectrum(v, false)?.values)
    }

    /// Lowest `k` eigenpairs; sparse shift-invert for the drift preset,
    /// dense otherwise.
    pub fn lowest(&self, v: &[f64], k: usize) -> Result<Spectrum> {
        check_potential(v, self.generator.graph().num_vertices())?;
        if let (LaplaceExponent::PureDrift { b }, true) = (&self.phi, self.dim() > 400) {
            let mut a = scaled(self.generator.sparse_full(), *b);
            a.add_diag(v);
            let sigma = -0.05 * b * self.generator.scale().min(1.0);
            let low: LowestPairs = linalg::lowest_eigenpairs(
                self.generator.graph(),
                &a,
                self.generator.active(),
                k,
                sigma,
                1e-11,
            )?;
            let idx = self.generator.indices();
            let masses: Vec<f64> = idx.iter().map(|&x| self.generator.graph().mass(x)).collect();
            let mut vecs = DMatrix::zeros(idx.len(), k);
            for (c, u) in low.vectors.iter().enumerate() {
                for (r, &x) in idx.iter().enumerate() {
                    vecs[(r, c)] = u[x] / masses[r].sqrt();
                }
            }
            let worst = low.residuals.iter().cloned().fold(0.0, f64::max);
            if worst > 1e-6 * (1.0 + low.values.last().copied().unwrap_or(0.0).abs()) {
                return Err(LabError::Solver(format!("Lanczos residual {worst:.3e} too large")));
            }
            return Ok(Spectrum {
                values: low.values,
                vectors: Some(vecs),
                indices: idx.to_vec(),
                masses,
                complete: false,
                residuals: low.residuals,
            });
        }
        let mut s = self.spectrum(v, true)?;
        s.values.truncate(k);
        if let Some(vecs) = s.vectors.as_mut() {
            *vecs = vecs.columns(0, k).into_owned();
        }
        s.complete = k == s.indices.len();
        Ok(s)
    }

    /// `p(t, ·, ·)` of the subordinate process (with `V ≡ 0`).
    pub fn kernel(&self, t: f64) -> Result<Kernel> {
        if !(t > 0.0) {
            return Err(LabError::Domain("kernel needs t > 0".into()));
        }
        let zero = vec![0.0; self.generator.graph().num_vertices()];
        self.spectrum(&zero, true)?.kernel_with(|l| (-t * l).exp())
    }
}

fn scaled(a: SparseSym, b: f64) -> SparseSym {
    let n = a.dim();
    let mut pairs = Vec::new();
    for i in 0..n {
        for (j, v) in a.row(i) {
            if i < j {
                pairs.push((i, j, v * b));
            }
        }
    }
    SparseSym::new(a.diag().iter().map(|d| d * b).collect(), &pairs)
}

fn check_potential(v: &[f64], n: usize) -> Result<()> {
    if v.len() != n {
        return Err(LabError::Config(format!("potential has {} entries for {n} vertices", v.len())));
    }
    if v.iter().any(|x| !(x.is_finite() && *x >= 0.0)) {
        return Err(LabError::Domain("potential must be finite and nonnegative".into()));
    }
    Ok(())
}

/// Generator, Laplace exponent and potential.
#[derive(Debug, Clone)]
pub struct SchrodingerProblem {
    pub generator: DiscreteGenerator,
    pub exponent: LaplaceExponent,
    pub potential: Vec<f64>,
    pub order: KillOrder,
}

impl SchrodingerProblem {
    pub fn new(generator: DiscreteGenerator, exponent: LaplaceExponent, potential: Vec<f64>) -> SchrodingerProblem {
        SchrodingerProblem { generator, exponent, potential, order: KillOrder::default() }
    }
}

/// Spectrum of `Φ(H) + diag(V)`: complete when the dimension is within the
/// dense cap, otherwise the lowest `k` pairs (drift preset only).
pub fn schrodinger_spectrum(prob: &SchrodingerProblem, k: usize) -> Result<Spectrum> {
    let op = SubordinateOperator::new(&prob.generator, &prob.exponent, prob.order)?;
    if op.dim() <= DENSE_CAP {
        op.spectrum(&prob.potential, false)
    } else {
        op.lowest(&prob.potential, k)
    }
}

/// `(1/3^M) Σ e^{−tλ}` from a complete spectrum.
pub fn trace_laplace(spec: &Spectrum, m: u32, t: f64) -> Result<f64> {
    if !spec.complete {
        return Err(LabError::NotApplicable("trace needs the complete spectrum".into()));
    }
    Ok(spec.values.iter().map(|&l| (-t * l).exp()).sum::<f64>() / mass_factor(m))
}

/// Trace from a bare eigenvalue list.
pub fn trace_of(values: &[f64], m: u32, t: f64) -> f64 {
    values.iter().map(|&l| (-t * l).exp()).sum::<f64>() / mass_factor(m)
}

/// `p(t)` for a preset; the killed walk is subordinated directly unless
/// the order asks to kill the subordinated walk.
pub fn subordinate_kernel(gen: &DiscreteGenerator, phi: &LaplaceExponent, order: KillOrder, t: f64) -> Result<Kernel> {
    if !(t > 0.0) {
        return Err(LabError::Domain("kernel needs t > 0".into()));
    }
    let direct = gen.mode() == BoundaryMode::Reflected
        || order == KillOrder::KillThenSubordinate
        || matches!(phi, LaplaceExponent::PureDrift { .. });
    if direct {
        gen.spectrum(true)?.kernel_with(|l| (-t * phi.phi(l)).exp())
    } else {
        SubordinateOperator::new(gen, phi, order)?.kernel(t)
    }
}

/// Maximum relative deviation in `g^M(t,x,y) = 3^{-M} g^0(5^{-M} t, x/2^M, y/2^M)`
/// between `G_M` at level `n` and `G_0` at level `n + M`.
pub fn kernel_scaling_deviation(g_m: Arc<GasketGraph>, g_0: Arc<GasketGraph>, t: f64) -> Result<f64> {
    let m = g_m.m();
    if g_0.m() != 0 || g_0.n() != g_m.n() + m {
        return Err(LabError::Config(format!(
            "unmatched resolutions: G_{} level {} against G_{} level {}",
            m,
            g_m.n(),
            g_0.m(),
            g_0.n()
        )));
    }
    let lhs = heat_kernel(&DiscreteGenerator::new(g_m.clone(), BoundaryMode::Reflected), t)?;
    let rhs = heat_kernel(&DiscreteGenerator::new(g_0.clone(), BoundaryMode::Reflected), time_factor(m) * t)?;
    let map: Vec<usize> = (0..g_m.num_vertices())
        .map(|v| g_0.vertex_at(g_m.coords(v)).ok_or_else(|| LabError::Config("vertex missing in rescaled graph".into())))
        .collect::<Result<_>>()?;
    let inv = 1.0 / mass_factor(m);
    let mut worst = 0.0f64;
    for x in 0..g_m.num_vertices() {
        for y in 0..g_m.num_vertices() {
            let r = inv * rhs.values[(map[x], map[y])];
            worst = worst.max((lhs.values[(x, y)] - r).abs() / r.abs());
        }
    }
    Ok(worst)
}

/// Kernel scaling check on freshly built matched graphs.
pub fn reflected_kernel_scaling_check(m: u32, n: u32, t: f64) -> Result<f64> {
    let g_m = Arc::new(crate::gasket::build_graph(m, n)?);
    let g_0 = Arc::new(crate::gasket::build_graph(0, n + m)?);
    kernel_scaling_deviation(g_m, g_0, t)
}

/// Both sides of the principal-eigenvalue scaling comparison.
#[derive(Debug, Clone, Copy)]
pub struct EigenScaling {
    pub lhs: f64,
    pub rhs: f64,
    /// Form-comparison constant (`b` under (U1)).
    pub c: f64,
}

/// `λ₁^M(φ, V)` against its rescaled `G_0` counterpart on matched graphs:
/// equality `2^{−M d_w} b λ₁^0(d_w, Ṽ)` under (U1), lower bound
/// `2^{−M α₁} c λ₁^0(α₁, Ṽ)` under (U2)/(U3).
pub fn eigen_scaling_check(
    phi: &LaplaceExponent,
    cert: &ScalingCertificate,
    potential: &[f64],
    g_m: Arc<GasketGraph>,
    g_0: Arc<GasketGraph>,
    mode: BoundaryMode,
) -> Result<EigenScaling> {
    use crate::subordinators::Regime;
    let m = g_m.m();
    if g_0.m() != 0 || g_0.n() != g_m.n() + m {
        return Err(LabError::Config("eigen scaling needs matched graphs".into()));
    }
    let gen_m = DiscreteGenerator::new(g_m.clone(), mode);
    let gen_0 = DiscreteGenerator::new(g_0.clone(), mode);
    let lift = |factor: f64| -> Result<Vec<f64>> {
        let mut out = vec![0.0; g_0.num_vertices()];
        for v in 0..g_m.num_vertices() {
            let w = g_0.vertex_at(g_m.coords(v)).ok_or_else(|| LabError::Config("unmatched vertex".into()))?;
            out[w] = factor * potential[v];
        }
        Ok(out)
    };
    let lhs = SubordinateOperator::new(&gen_m, phi, KillOrder::default())?.lowest(potential, 1)?.values[0];
    match cert.regime {
        Regime::U1 => {
            let b = phi.drift();
            let tilde = lift(5f64.powi(m as i32) / b)?;
            let bm = LaplaceExponent::PureDrift { b: 1.0 };
            let l0 = SubordinateOperator::new(&gen_0, &bm, KillOrder::default())?.lowest(&tilde, 1)?.values[0];
            Ok(EigenScaling { lhs, rhs: time_factor(m) * b * l0, c: b })
        }
        Regime::U2 | Regime::U3 => {
            let a1 = cert.alpha1.ok_or_else(|| LabError::Domain("missing α₁".into()))?;
            let g = a1 / DIM_W;
            let free = gen_m.full_spectrum(false)?;
            let c = free
                .values
                .iter()
                .filter(|&&mu| mu > 1e-12)
                .map(|&mu| phi.phi(mu) / mu.powf(g))
                .fold(1.0f64, f64::min);
            let tilde = lift(2f64.powf(m as f64 * a1) / c)?;
            let stable = LaplaceExponent::StableWithDrift { b: 0.0, g };
            let l0 = SubordinateOperator::new(&gen_0, &stable, KillOrder::default())?.lowest(&tilde, 1)?.values[0];
            Ok(EigenScaling { lhs, rhs: 2f64.powf(-(m as f64) * a1) * c * l0, c })
        }
        Regime::None => Err(LabError::Domain("eigen scaling needs regime U1, U2 or U3".into())),
    }
}

/// Lowest Dirichlet eigenvalue of `5^n (I − P)` on `G_0` from the
/// decimation recursion `μ_k = μ_{k+1}(5 − 4μ_{k+1})`, started at level 1.
pub fn decimation_ground(n: u32) -> f64 {
    assert!(n >= 1, "Dirichlet problem on G_0 needs n >= 1");
    let mut mu: f64 = 0.5;
    for _ in 1..n {
        mu = (5.0 - (25.0 - 16.0 * mu).sqrt()) / 8.0;
    }
    mu * 5f64.powi(n as i32)
}

/// Lowest Dirichlet eigenvalue of the walk generator on `G_0` at level `n`,
/// by the dense solver within the cap and the sparse solver above it.
pub fn free_dirichlet_ground(n: u32) -> Result<f64> {
    let g = Arc::new(crate::gasket::build_graph(0, n)?);
    let gen = DiscreteGenerator::new(g.clone(), BoundaryMode::Dirichlet);
    let op = SubordinateOperator::new(&gen, &LaplaceExponent::PureDrift { b: 1.0 }, KillOrder::default())?;
    Ok(op.lowest(&vec![0.0; g.num_vertices()], 1)?.values[0])
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gasket::build_graph;

    #[test]
    fn reflected_kernel_is_stochastic() {
        let g = Arc::new(build_graph(0, 3).unwrap());
        let k = heat_kernel(&DiscreteGenerator::new(g.clone(), BoundaryMode::Reflected), 1.0).unwrap();
        for i in 0..k.indices.len() {
            assert!((k.row_mass(i) - 1.0).abs() < 1e-10);
        }
    }

    #[test]
    fn uniformized_kernel_matches_spectral() {
        let g = Arc::new(build_graph(1, 2).unwrap());
        for mode in [BoundaryMode::Reflected, BoundaryMode::Dirichlet] {
            let gen = DiscreteGenerator::new(g.clone(), mode);
            let a = heat_kernel(&gen, 0.7).unwrap();
            let b = gen.spectrum(true).unwrap().kernel_with(|l| (-0.7 * l).exp()).unwrap();
            let scale = b.values.max();
            assert!((a.values - b.values).amax() < 1e-12 * scale);
        }
    }

    #[test]
    fn decimation_agrees_with_dense() {
        for n in 1..=5 {
            let dense = free_dirichlet_ground(n).unwrap();
            let rec = decimation_ground(n);
            assert!((dense - rec).abs() < 1e-9 * rec, "n={n}: {dense} vs {rec}");
        }
    }

    #[test]
    fn sparse_ground_matches_dense_above_threshold() {
        let g = Arc::new(build_graph(0, 6).unwrap());
        let gen = DiscreteGenerator::new(g.clone(), BoundaryMode::Dirichlet);
        let op = SubordinateOperator::new(&gen, &LaplaceExponent::PureDrift { b: 2.0 }, KillOrder::default()).unwrap();
        let v: Vec<f64> = (0..g.num_vertices()).map(|i| ((i * 7) % 5) as f64).collect();
        let sparse = op.lowest(&v, 2).unwrap();
        let dense = op.eigenvalues(&v).unwrap();
        assert!((sparse.values[0] - dense[0]).abs() < 1e-8 * dense[0]);
        assert!((sparse.values[1] - dense[1]).abs() < 1e-8 * dense[1]);
    }
}
