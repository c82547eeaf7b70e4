//! Poisson obstacle clouds, profile functions and the random potentials
//! they generate, together with the annealed exponential formula, range
//! splitting and the periodized potentials on `G_M`.
//!
//! Profiles are evaluated in a [`Frame`]: physical coordinates are the graph
//! coordinates multiplied by `2^shift`. The identity frame is used for
//! potentials on `G_M`; the rescaled periodization evaluates `W(2^M x, 2^M y)`
//! on `G_0` through the frame with `shift = M`.

use std::collections::HashMap;
use std::fmt;
use std::io::Write;
use std::str::FromStr;

use rand::Rng;
use rand_distr::{Distribution, Poisson};

use crate::error::{LabError, Result};
use crate::gasket::{self, GasketGraph, Lattice};
use crate::numerics::fmt17;
use crate::rng::{self, Tag};
use crate::subordinators::{parse_f64, parse_kv, take};
use crate::DIM_H;

/// Scale between graph and physical coordinates.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Frame {
    pub shift: u32,
}

impl Frame {
    pub const IDENTITY: Frame = Frame { shift: 0 };

    fn factor(self) -> f64 {
        (1u64 << self.shift) as f64
    }
}

/// Profile `W(x, y)` of the Poissonian potential.
#[derive(Debug, Clone, PartialEq)]
pub enum ProfileSpec {
    /// `A 1{d(x, y) <= a0}`.
    Indicator { amplitude: f64, range: f64 },
    /// `ϕ(d(x, y))` with `ϕ` piecewise linear through the tabulated points
    /// and zero beyond `range`.
    Table { radii: Vec<f64>, values: Vec<f64>, range: f64 },
    /// `K max(d, core)^{-d-θ}`.
    PowerLaw { k: f64, theta: f64, core: f64 },
    /// `ψ(π_{M0}(y))` when `x`, `y` share a size-`2^{M0}` triangle, with
    /// `ψ = A (1 + tilt w)` and `w` the barycentric weight of the origin
    /// corner of `G_{M0}`.
    Cell { m0: i32, amplitude: f64, tilt: f64 },
    /// `a_n` on `D_n(x) \ D_{n-1}(x)`, zero past the last entry. `theta`
    /// records the decay rate when the sequence is `2^{-n(d+θ)}`.
    Dyadic { a: Vec<f64>, theta: Option<f64> },
    /// `W 1{lo < d(x, y) <= hi}`.
    Window { inner: Box<ProfileSpec>, lo: f64, hi: f64 },
}

fn within(d: f64, r: f64) -> bool {
    d <= r + 1e-12 * r.abs().max(1.0)
}

impl ProfileSpec {
    /// `a_n = 2^{-n(d+θ)}` for `n <= cutoff`.
    pub fn dyadic_power(theta: f64, cutoff: usize) -> ProfileSpec {
        let a = (0..=cutoff).map(|n| 2f64.powf(-(n as f64) * (DIM_H + theta))).collect();
        ProfileSpec::Dyadic { a, theta: Some(theta) }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(LabError::Domain(msg));
        match self {
            ProfileSpec::Indicator { amplitude, range } => {
                if !(*amplitude >= 0.0 && *range >= 0.0) {
                    return bad(format!("indicator needs A >= 0 and a0 >= 0, got {amplitude}, {range}"));
                }
            }
            ProfileSpec::Table { radii, values, range } => {
                if radii.len() != values.len() || radii.is_empty() {
                    return bad("table needs matching, nonempty radii and values".into());
                }
                if radii.windows(2).any(|w| w[1] <= w[0]) || radii[0] < 0.0 {
                    return bad("table radii must be increasing and nonnegative".into());
                }
                if values.windows(2).any(|w| w[1] > w[0]) || values.iter().any(|&v| v < 0.0) {
                    return bad("table values must be nonincreasing and nonnegative".into());
                }
                if !(*range >= 0.0) {
                    return bad("table range must be nonnegative".into());
                }
            }
            ProfileSpec::PowerLaw { k, theta, core } => {
                if !(*k >= 0.0 && *theta > 0.0 && *core > 0.0) {
                    return bad(format!("power law needs K >= 0, θ > 0, core > 0, got {k}, {theta}, {core}"));
                }
            }
            ProfileSpec::Cell { amplitude, tilt, .. } => {
                if !(*amplitude > 0.0 && *tilt >= 0.0) {
                    return bad("cell profile needs A > 0 and tilt >= 0".into());
                }
            }
            ProfileSpec::Dyadic { a, .. } => {
                if a.is_empty() || a.iter().any(|&v| !(v >= 0.0)) || a.windows(2).any(|w| w[1] > w[0]) {
                    return bad("dyadic sequence must be nonempty, nonnegative and nonincreasing".into());
                }
            }
            ProfileSpec::Window { inner, lo, hi } => {
                if !(hi >= lo) {
                    return bad(format!("window needs lo <= hi, got {lo}, {hi}"));
                }
                inner.validate()?;
            }
        }
        Ok(())
    }

    /// Supremum of `d(x, y)` over the support, `None` for unbounded support.
    pub fn range(&self) -> Option<f64> {
        match self {
            ProfileSpec::Indicator { range, .. } => Some(*range),
            ProfileSpec::Table { range, .. } => Some(*range),
            ProfileSpec::PowerLaw { k, .. } => (*k == 0.0).then_some(0.0),
            ProfileSpec::Cell { m0, .. } => Some(2f64.powi(*m0)),
            ProfileSpec::Dyadic { a, .. } => match a.iter().rposition(|&v| v > 0.0) {
                Some(last) => Some(1.0 + 2f64.powi(last as i32)),
                None => Some(0.0),
            },
            ProfileSpec::Window { inner, hi, .. } => match inner.range() {
                Some(r) => Some(r.min(*hi)),
                None => hi.is_finite().then_some(*hi),
            },
        }
    }

    /// Long-range decay `(θ, K)` with `W <= K d^{-d-θ}` at large distance.
    pub fn decay(&self) -> Option<(f64, f64)> {
        match self {
            ProfileSpec::PowerLaw { k, theta, .. } => Some((*theta, *k)),
            ProfileSpec::Dyadic { a, theta: Some(t) } => Some((*t, a[0].max(1.0) * 2f64.powf(DIM_H + t))),
            ProfileSpec::Window { inner, .. } => inner.decay(),
            _ => None,
        }
    }

    /// Constants `(A, a0)` with `W >= A` whenever `d <= a0`, where they are
    /// known in closed form.
    pub fn lower_plateau(&self) -> Option<(f64, f64)> {
        match self {
            ProfileSpec::Indicator { amplitude, range } => (*amplitude > 0.0 && *range > 0.0).then_some((*amplitude, *range)),
            ProfileSpec::Table { radii, values, .. } => radii
                .iter()
                .zip(values)
                .find(|(&r, &v)| r > 0.0 && v > 0.0)
                .map(|(&r, &v)| (v, r)),
            ProfileSpec::PowerLaw { k, theta, core } => {
                let a0 = 1.0;
                Some((k * core.max(a0).powf(-DIM_H - theta), a0))
            }
            _ => None,
        }
    }

    /// Profile value at distance `d` for the distance-based variants.
    fn radial(&self, d: f64) -> Option<f64> {
        match self {
            ProfileSpec::Indicator { amplitude, range } => Some(if within(d, *range) { *amplitude } else { 0.0 }),
            ProfileSpec::Table { radii, values, range } => {
                if !within(d, *range) {
                    return Some(0.0);
                }
                if d <= radii[0] {
                    return Some(values[0]);
                }
                let k = radii.partition_point(|&r| r <= d);
                if k >= radii.len() {
                    return Some(*values.last().unwrap());
                }
                let (r0, r1) = (radii[k - 1], radii[k]);
                let (v0, v1) = (values[k - 1], values[k]);
                Some(v0 + (v1 - v0) * (d - r0) / (r1 - r0))
            }
            ProfileSpec::PowerLaw { k, theta, core } => Some(k * d.max(*core).powf(-DIM_H - theta)),
            _ => None,
        }
    }

    /// Resolution requirements of the lattice-based variants.
    pub fn check_resolution(&self, g: &GasketGraph, frame: Frame) -> Result<()> {
        let e = g.n() as i64 - frame.shift as i64;
        match self {
            ProfileSpec::Cell { m0, .. } if *m0 as i64 + e < 1 => Err(LabError::Domain(format!(
                "cell profile with M0 = {m0} is below resolution {}",
                g.n()
            ))),
            ProfileSpec::Dyadic { .. } if e < 0 => {
                Err(LabError::Domain("dyadic profile needs unit triangles at the graph resolution".into()))
            }
            ProfileSpec::Window { inner, .. } => inner.check_resolution(g, frame),
            _ => Ok(()),
        }
    }

    /// `W(x, y)` for graph vertices at hop distance `hops`.
    pub fn pair(&self, g: &GasketGraph, frame: Frame, x: usize, y: usize, hops: u32) -> f64 {
        let d = hops as f64 * g.step() * frame.factor();
        if let Some(v) = self.radial(d) {
            return v;
        }
        match self {
            ProfileSpec::Cell { m0, amplitude, tilt } => {
                let e = (*m0 as i64 + g.n() as i64 - frame.shift as i64) as i32;
                cell_value(g.coords(x), g.coords(y), e, *amplitude, *tilt)
            }
            ProfileSpec::Dyadic { a, .. } => {
                let e_unit = (g.n() as i64 - frame.shift as i64) as i32;
                match dyadic_level(g.coords(x), g.coords(y), e_unit, a.len()) {
                    Some(k) => a[k],
                    None => 0.0,
                }
            }
            ProfileSpec::Window { inner, lo, hi } => {
                if (*lo == f64::NEG_INFINITY || !within(d, *lo)) && within(d, *hi) {
                    inner.pair(g, frame, x, y, hops)
                } else {
                    0.0
                }
            }
            _ => unreachable!("radial variants handled above"),
        }
    }

    fn hop_limit(&self, g: &GasketGraph, frame: Frame) -> Option<u32> {
        self.range().map(|r| {
            let h = r / (g.step() * frame.factor());
            (h + 1e-9).floor().max(0.0) as u32
        })
    }

    /// Adds `weight W(v, src)` (or `weight W(src, v)` when `src_is_x`) to
    /// `out[v]` for every vertex in range of `src`.
    pub fn accumulate(&self, g: &GasketGraph, frame: Frame, src: usize, src_is_x: bool, weight: f64, out: &mut [f64]) {
        let mut add = |v: usize, h: u32| {
            let w = if src_is_x { self.pair(g, frame, src, v, h) } else { self.pair(g, frame, v, src, h) };
            out[v] += weight * w;
        };
        match self.hop_limit(g, frame) {
            Some(limit) => {
                for (v, h) in g.hops_within(src, limit) {
                    add(v, h);
                }
            }
            None => {
                for (v, &h) in g.hops_from(src).iter().enumerate() {
                    add(v, h);
                }
            }
        }
    }

    /// Partial sums of `Σ_M Σ_{n > [M/4]} 2^{nd} a_n` for the dyadic variant.
    pub fn dyadic_partial_sums(&self, m_max: usize) -> Option<Vec<f64>> {
        let ProfileSpec::Dyadic { a, .. } = self else { return None };
        let mut acc = 0.0;
        let mut out = Vec::with_capacity(m_max);
        for m in 1..=m_max {
            acc += a
                .iter()
                .enumerate()
                .skip(m / 4 + 1)
                .map(|(n, &an)| 2f64.powf(n as f64 * DIM_H) * an)
                .sum::<f64>();
            out.push(acc);
        }
        Some(out)
    }
}

fn cell_value(px: Lattice, py: Lattice, e: i32, amplitude: f64, tilt: f64) -> f64 {
    let s = 1u64 << e;
    let shared = gasket::triangles_containing(px, e)
        .into_iter()
        .any(|ll| gasket::in_triangle(py, ll, s));
    if !shared {
        return 0.0;
    }
    let (i, j) = gasket::project_lattice(py, 0, e as u32);
    let w0 = (s - i - j) as f64 / s as f64;
    amplitude * (1.0 + tilt * w0)
}

fn corner_level(p: Lattice, e_unit: i32) -> u32 {
    if p == (0, 0) {
        return u32::MAX;
    }
    (p.0 | p.1).trailing_zeros() - e_unit as u32
}

/// Vertex `p_x` of `V_0` within unit distance of `x` with the largest
/// level, and that level (`u32::MAX` for the origin). Ties, which do not
/// occur for points of the gasket, go to the lexicographically smallest.
fn anchor(px: Lattice, e_unit: i32) -> (Lattice, u32) {
    let s = 1u64 << e_unit;
    let mut best: Option<(Lattice, u32)> = None;
    for ll in gasket::triangles_containing(px, e_unit) {
        for c in [ll, (ll.0 + s, ll.1), (ll.0, ll.1 + s)] {
            let lvl = corner_level(c, e_unit);
            best = match best {
                Some((b, bl)) if bl > lvl || (bl == lvl && b <= c) => Some((b, bl)),
                _ => Some((c, lvl)),
            };
        }
    }
    best.expect("every point lies in a unit triangle")
}

/// Smallest `k < len` with `y ∈ D_k(x)`.
fn dyadic_level(px: Lattice, py: Lattice, e_unit: i32, len: usize) -> Option<usize> {
    let (p, r) = anchor(px, e_unit);
    for k in 0..len {
        let e = e_unit + k as i32;
        let s = 1u64 << e;
        let cells = if p != (0, 0) && (k as u32) <= r {
            gasket::triangles_containing(p, e)
        } else {
            let mut t = gasket::triangles_containing(px, e);
            if t.len() > 1 {
                t.retain(|&ll| gasket::in_triangle(p, ll, s));
            }
            t
        };
        if cells.iter().any(|&ll| gasket::in_triangle(py, ll, s)) {
            return Some(k);
        }
    }
    None
}

impl fmt::Display for ProfileSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let join = |v: &[f64]| v.iter().map(|x| x.to_string()).collect::<Vec<_>>().join("/");
        match self {
            ProfileSpec::Indicator { amplitude, range } => write!(f, "indicator:A={amplitude},a0={range}"),
            ProfileSpec::Table { radii, values, range } => {
                write!(f, "table:r={},phi={},R={range}", join(radii), join(values))
            }
            ProfileSpec::PowerLaw { k, theta, core } => write!(f, "power:K={k},theta={theta},core={core}"),
            ProfileSpec::Cell { m0, amplitude, tilt } => write!(f, "cell:m0={m0},A={amplitude},tilt={tilt}"),
            ProfileSpec::Dyadic { a, theta: Some(t) } => write!(f, "dyadic:theta={t},cutoff={}", a.len() - 1),
            ProfileSpec::Dyadic { a, theta: None } => write!(f, "dyadic:a={}", join(a)),
            ProfileSpec::Window { inner, lo, hi } => write!(f, "window[{lo},{hi}]({inner})"),
        }
    }
}

impl FromStr for ProfileSpec {
    type Err = LabError;

    fn from_str(s: &str) -> Result<Self> {
        let (kind, body) = s.split_once(':').unwrap_or((s, ""));
        let mut kv = parse_kv(body)?;
        let req = |kv: &mut Vec<(String, String)>, key: &str| {
            take(kv, key).ok_or_else(|| LabError::Config(format!("profile '{kind}' needs '{key}'")))
        };
        let list = |s: String| s.split('/').map(parse_f64).collect::<Result<Vec<_>>>();
        let profile = match kind.trim() {
            "indicator" => ProfileSpec::Indicator {
                amplitude: parse_f64(&req(&mut kv, "A")?)?,
                range: parse_f64(&req(&mut kv, "a0")?)?,
            },
            "table" => ProfileSpec::Table {
                radii: list(req(&mut kv, "r")?)?,
                values: list(req(&mut kv, "phi")?)?,
                range: parse_f64(&req(&mut kv, "R")?)?,
            },
            "power" => ProfileSpec::PowerLaw {
                k: parse_f64(&req(&mut kv, "K")?)?,
                theta: parse_f64(&req(&mut kv, "theta")?)?,
                core: take(&mut kv, "core").map(|v| parse_f64(&v)).transpose()?.unwrap_or(1.0),
            },
            "cell" => ProfileSpec::Cell {
                m0: req(&mut kv, "m0")?
                    .parse()
                    .map_err(|_| LabError::Config("m0 must be an integer".into()))?,
                amplitude: parse_f64(&req(&mut kv, "A")?)?,
                tilt: take(&mut kv, "tilt").map(|v| parse_f64(&v)).transpose()?.unwrap_or(0.0),
            },
            "dyadic" => match take(&mut kv, "a") {
                Some(a) => ProfileSpec::Dyadic { a: list(a)?, theta: None },
                None => {
                    let theta = parse_f64(&req(&mut kv, "theta")?)?;
                    let cutoff = req(&mut kv, "cutoff")?
                        .parse()
                        .map_err(|_| LabError::Config("cutoff must be a nonnegative integer".into()))?;
                    ProfileSpec::dyadic_power(theta, cutoff)
                }
            },
            other => return Err(LabError::Config(format!("unknown profile preset '{other}'"))),
        };
        if let Some((k, _)) = kv.first() {
            return Err(LabError::Config(format!("unknown key '{k}' for profile '{kind}'")));
        }
        profile.validate().map_err(|e| LabError::Config(e.to_string()))?;
        Ok(profile)
    }
}

/// `(W_a, W^a)`: the parts of `W` at distance `<= a` and `> a`.
pub fn split_profile(profile: &ProfileSpec, a: f64) -> (ProfileSpec, ProfileSpec) {
    let short = ProfileSpec::Window { inner: Box::new(profile.clone()), lo: f64::NEG_INFINITY, hi: a };
    let long = ProfileSpec::Window { inner: Box::new(profile.clone()), lo: a, hi: f64::INFINITY };
    (short, long)
}

/// One obstacle: a resolution cell and the corner carrying it.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ObstaclePoint {
    pub cell: usize,
    pub corner: u8,
}

/// A sampled Poisson cloud on `G_M`.
#[derive(Debug, Clone)]
pub struct PoissonConfiguration {
    pub intensity: f64,
    pub m: u32,
    pub n: u32,
    pub seed: u64,
    pub replicate: u64,
    pub points: Vec<ObstaclePoint>,
}

impl PoissonConfiguration {
    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    /// The points lying in `G_m ⊂ G_M` at the same resolution; the
    /// restriction of a Poisson cloud is again a Poisson cloud.
    pub fn restrict(&self, m: u32) -> Result<PoissonConfiguration> {
        if m > self.m {
            return Err(LabError::Config(format!("cannot restrict a G_{} cloud to G_{m}", self.m)));
        }
        let limit = 3usize.pow(m + self.n);
        let points = self.points.iter().copied().filter(|p| p.cell < limit).collect();
        Ok(PoissonConfiguration { m, points, ..self.clone() })
    }

    /// The same points on the matched graph `G_{m'}` at level `n'` with
    /// `m' + n' = M + n`, whose cells are enumerated identically.
    pub fn transfer(&self, g: &GasketGraph) -> Result<PoissonConfiguration> {
        if g.m() + g.n() != self.m + self.n {
            return Err(LabError::Config("cloud transfer needs matched graphs".into()));
        }
        let intensity = self.intensity * 3f64.powi(self.m as i32 - g.m() as i32);
        Ok(PoissonConfiguration { m: g.m(), n: g.n(), intensity, ..self.clone() })
    }

    /// Graph vertex of each point.
    pub fn vertices(&self, g: &GasketGraph) -> Vec<usize> {
        self.points.iter().map(|p| g.cells()[p.cell][p.corner as usize]).collect()
    }

    /// CSV rows `replicate,point_index,copy,word,corner`.
    pub fn write_csv<W: Write>(&self, g: &GasketGraph, out: &mut W, header: bool) -> std::io::Result<()> {
        if header {
            writeln!(out, "replicate,point_index,copy,word,corner")?;
        }
        for (i, p) in self.points.iter().enumerate() {
            let addr = g.cell_address(p.cell);
            writeln!(out, "{},{},{},{},{}", self.replicate, i, addr.copy, addr.word_string(), p.corner)?;
        }
        Ok(())
    }
}

/// Draws `N ~ Poisson(ν m(G))` points, each in a uniform resolution cell at
/// a uniform corner of it, so that the point law on vertices is the
/// normalized vertex mass.
pub fn sample_cloud(g: &GasketGraph, nu: f64, seed: u64, replicate: u64) -> Result<PoissonConfiguration> {
    if !(nu >= 0.0) || !nu.is_finite() {
        return Err(LabError::Domain(format!("intensity must be a nonnegative number, got {nu}")));
    }
    let mean = nu * crate::mass_factor(g.m());
    let mut rng = rng::stream(seed, Tag::Cloud, replicate, 0);
    let count = if mean > 0.0 {
        Poisson::new(mean).map_err(|e| LabError::Numeric(e.to_string()))?.sample(&mut rng) as usize
    } else {
        0
    };
    let cells = g.num_cells();
    let points = (0..count)
        .map(|_| ObstaclePoint { cell: rng.random_range(0..cells), corner: rng.random_range(0..3u8) })
        .collect();
    Ok(PoissonConfiguration { intensity: nu, m: g.m(), n: g.n(), seed, replicate, points })
}

/// The cloud on `G_0` with intensity `2^{Md} ν` used by the rescaled
/// periodization; `g0` must be a level-`(n + M)` graph of `G_0`.
pub fn sample_rescaled_cloud(g0: &GasketGraph, nu: f64, m: u32, seed: u64, replicate: u64) -> Result<PoissonConfiguration> {
    if g0.m() != 0 {
        return Err(LabError::Config("rescaled clouds live on G_0".into()));
    }
    sample_cloud(g0, nu * crate::mass_factor(m), seed, replicate)
}

/// Per-vertex potential values.
#[derive(Debug, Clone, PartialEq)]
pub struct PotentialVector {
    pub values: Vec<f64>,
}

impl PotentialVector {
    pub fn zeros(n: usize) -> PotentialVector {
        PotentialVector { values: vec![0.0; n] }
    }

    pub fn write_csv<W: Write>(&self, out: &mut W) -> std::io::Result<()> {
        writeln!(out, "vertex,value")?;
        for (v, x) in self.values.iter().enumerate() {
            writeln!(out, "{v},{}", fmt17(*x))?;
        }
        Ok(())
    }
}

fn check_cloud(g: &GasketGraph, cloud: &PoissonConfiguration) -> Result<()> {
    if cloud.m != g.m() || cloud.n != g.n() {
        return Err(LabError::Config(format!(
            "cloud sampled on G_{} level {} used on G_{} level {}",
            cloud.m,
            cloud.n,
            g.m(),
            g.n()
        )));
    }
    Ok(())
}

/// `V(x) = Σ_i W(x, p_i)`.
pub fn evaluate_potential(g: &GasketGraph, cloud: &PoissonConfiguration, profile: &ProfileSpec) -> Result<PotentialVector> {
    check_cloud(g, cloud)?;
    profile.check_resolution(g, Frame::IDENTITY)?;
    let mut out = PotentialVector::zeros(g.num_vertices());
    for p in cloud.vertices(g) {
        profile.accumulate(g, Frame::IDENTITY, p, false, 1.0, &mut out.values);
    }
    Ok(out)
}

/// Annealed average of `exp(-Σ_x ℓ(x) V(x))` over the cloud law:
/// `exp(-ν Σ_y m(y) (1 - exp(-Σ_x ℓ(x) W(x, y))))`.
pub fn annealed_fk_weight(g: &GasketGraph, profile: &ProfileSpec, nu: f64, occupation: &[f64]) -> Result<f64> {
    Ok((-annealed_exponent(g, profile, nu, occupation)?).exp())
}

/// The exponent `ν Σ_y m(y) (1 - exp(-Σ_x ℓ(x) W(x, y)))`.
pub fn annealed_exponent(g: &GasketGraph, profile: &ProfileSpec, nu: f64, occupation: &[f64]) -> Result<f64> {
    if occupation.len() != g.num_vertices() {
        return Err(LabError::Config("occupation vector has the wrong length".into()));
    }
    if occupation.iter().any(|&l| !(l >= 0.0) || !l.is_finite()) {
        return Err(LabError::Domain("occupation times must be finite and nonnegative".into()));
    }
    profile.check_resolution(g, Frame::IDENTITY)?;
    let mut f = vec![0.0; g.num_vertices()];
    for (x, &l) in occupation.iter().enumerate() {
        if l > 0.0 {
            profile.accumulate(g, Frame::IDENTITY, x, true, l, &mut f);
        }
    }
    Ok(nu * f.iter().zip(g.masses()).map(|(&fy, &m)| -m * (-fy).exp_m1()).sum::<f64>())
}

fn extremum_over_vertices<F: Fn(usize, &[u32]) -> f64>(g: &GasketGraph, take_max: bool, f: F) -> f64 {
    let mut best = if take_max { f64::NEG_INFINITY } else { f64::INFINITY };
    for x in 0..g.num_vertices() {
        let hops = g.bfs(x);
        let v = f(x, &hops);
        best = if take_max { best.max(v) } else { best.min(v) };
    }
    best
}

/// `S_W(a) = max_x Σ_{d(x,y) > a} m(y) W(x, y)`.
pub fn s_w(g: &GasketGraph, profile: &ProfileSpec, a: f64) -> Result<f64> {
    if !(a > 0.0) {
        return Err(LabError::Domain("s_w needs a > 0".into()));
    }
    profile.check_resolution(g, Frame::IDENTITY)?;
    if profile.range().is_some_and(|r| r <= a) {
        return Ok(0.0);
    }
    let h = g.step();
    let masses = g.masses();
    Ok(extremum_over_vertices(g, true, |x, hops| {
        hops.iter()
            .enumerate()
            .filter(|(_, &k)| !within(k as f64 * h, a))
            .map(|(y, &k)| masses[y] * profile.pair(g, Frame::IDENTITY, x, y, k))
            .sum()
    }))
}

/// `R_W(a, t) = min_x Σ_{d(x,y) > a} m(y) (1 - e^{-t W(x, y)})`.
pub fn r_w(g: &GasketGraph, profile: &ProfileSpec, a: f64, t: f64) -> Result<f64> {
    if !(a > 0.0) || !(t >= 1.0) {
        return Err(LabError::Domain(format!("r_w needs a > 0 and t >= 1, got {a}, {t}")));
    }
    profile.check_resolution(g, Frame::IDENTITY)?;
    if profile.range().is_some_and(|r| r <= a) {
        return Ok(0.0);
    }
    let h = g.step();
    let masses = g.masses();
    Ok(extremum_over_vertices(g, false, |x, hops| {
        hops.iter()
            .enumerate()
            .filter(|(_, &k)| !within(k as f64 * h, a))
            .map(|(y, &k)| -masses[y] * (-t * profile.pair(g, Frame::IDENTITY, x, y, k)).exp_m1())
            .sum()
    }))
}

/// Periodized potential with the truncation diagnostics.
#[derive(Debug, Clone)]
pub struct Periodized {
    pub potential: PotentialVector,
    /// Number of scales `k` of the host `G_{M+k}` enumerating the fibers.
    pub depth: u32,
    /// Bound on the contribution of fiber copies outside the host.
    pub tail_bound: Option<f64>,
    pub warning: Option<String>,
}

/// `V*_M(x) = Σ_i Σ_{y' ∈ π_M^{-1}(p_i) ∩ G_{M+k}} W(x, y')` on the vertices
/// of `target = G_M`, with fibers enumerated in `host = G_{M+k}`.
pub fn periodize(host: &GasketGraph, target: &GasketGraph, cloud: &PoissonConfiguration, profile: &ProfileSpec) -> Result<Periodized> {
    periodize_scaled(host, target, cloud, profile, Frame::IDENTITY, 1.0)
}

/// `V*_{0,M,γ}` on `G_0`: the periodization in the frame `shift = M` with
/// amplitude `2^{Mγ}`. `host` and `g0` are level-`(n + M)` graphs of `G_k`
/// and `G_0`, and the cloud comes from [`sample_rescaled_cloud`].
pub fn rescaled_periodize(
    host: &GasketGraph,
    g0: &GasketGraph,
    cloud: &PoissonConfiguration,
    profile: &ProfileSpec,
    m: u32,
    gamma: f64,
) -> Result<Periodized> {
    if !(gamma > 0.0) {
        return Err(LabError::Domain(format!("γ must be positive, got {gamma}")));
    }
    if g0.m() != 0 {
        return Err(LabError::Config("rescaled periodization lives on G_0".into()));
    }
    periodize_scaled(host, g0, cloud, profile, Frame { shift: m }, 2f64.powf(m as f64 * gamma))
}

pub fn periodize_scaled(
    host: &GasketGraph,
    target: &GasketGraph,
    cloud: &PoissonConfiguration,
    profile: &ProfileSpec,
    frame: Frame,
    amplitude: f64,
) -> Result<Periodized> {
    check_cloud(target, cloud)?;
    profile.check_resolution(host, frame)?;
    if host.n() != target.n() || host.m() < target.m() {
        return Err(LabError::Config("periodization needs a host G_{M+k} at the same resolution".into()));
    }
    let depth = host.m() - target.m();
    let mut acc = vec![0.0; host.num_vertices()];
    let mut fibers: HashMap<usize, Vec<usize>> = HashMap::new();
    for y in cloud.vertices(target) {
        if !fibers.contains_key(&y) {
            fibers.insert(y, gasket::fiber_vertices(host, target, y)?);
        }
        for &yp in &fibers[&y] {
            profile.accumulate(host, frame, yp, false, amplitude, &mut acc);
        }
    }
    let values = (0..target.num_vertices())
        .map(|v| {
            let hv = host.vertex_at(target.coords(v)).expect("G_M sits at the origin corner of G_{M+k}");
            acc[hv]
        })
        .collect();
    let gap = (2f64.powi((host.m()) as i32) - 2f64.powi(target.m() as i32)) * frame.factor();
    let (tail_bound, warning) = match (profile.range(), profile.decay()) {
        (Some(r), _) if r < gap => (Some(0.0), None),
        (Some(_), _) if depth == 0 => (None, Some("depth 0 keeps only the identity copy".to_string())),
        (Some(r), _) => (
            None,
            Some(format!("profile range {r} reaches copies beyond the host at distance {gap}")),
        ),
        (None, Some((theta, k))) => {
            let per_point = 27.0 * k * gap.powf(-theta) / (1.0 - 2f64.powf(-theta));
            let bound = cloud.len() as f64 * amplitude * per_point;
            (Some(bound), Some(format!("long-range fibers truncated at depth {depth}, tail <= {bound:.3e}")))
        }
        (None, None) => (None, Some("long-range fibers truncated without a tail estimate".to_string())),
    };
    Ok(Periodized { potential: PotentialVector { values }, depth, tail_bound, warning })
}

/// Outcome of the fiber-sum monotonicity check across scales.
#[derive(Debug, Clone)]
pub struct MonotonicityReport {
    /// `(M, samples, violations, worst ratio lhs / rhs)`.
    pub rows: Vec<(i32, usize, usize, f64)>,
    /// Smallest `M0` such that no violation was seen for `M >= M0`.
    pub m0_observed: Option<i32>,
}

/// Compares `Σ_{y'} W(π_M x, y')` with `Σ_{y'} W(π_{M+1} x, y')`, both over
/// the fiber `π_M^{-1}(π_M y)` inside `host`, on random vertex pairs of the
/// host for each `M` in `scales`.
pub fn fiber_monotonicity(
    host: &GasketGraph,
    profile: &ProfileSpec,
    scales: std::ops::RangeInclusive<i32>,
    samples: usize,
    seed: u64,
) -> Result<MonotonicityReport> {
    profile.check_resolution(host, Frame::IDENTITY)?;
    let n = host.n() as i32;
    let top = host.m() as i32;
    let mut rng = rng::stream(seed, Tag::Probe, 0, 0);
    let nv = host.num_vertices();
    let mut rows = Vec::new();
    for m in scales {
        if m + n < 0 || m + 1 > top {
            return Err(LabError::Domain(format!("scale {m} outside the host range")));
        }
        let e = (m + n) as u32;
        let mut violations = 0;
        let mut worst = 0.0f64;
        for _ in 0..samples {
            let x = host.coords(rng.random_range(0..nv));
            let y = host.coords(rng.random_range(0..nv));
            let x0 = host.vertex_at(gasket::project_lattice(x, 0, e)).expect("projection in host");
            let x1 = host.vertex_at(gasket::project_lattice(x, 0, e + 1)).expect("projection in host");
            let qy = gasket::project_lattice(y, 0, e);
            let fiber = gasket::fiber(qy, 0, (top - m) as u32, e);
            let (h0, h1) = (host.hops_from(x0), host.hops_from(x1));
            let (mut lhs, mut rhs) = (0.0, 0.0);
            for p in fiber {
                let yp = host.vertex_at(p).expect("fiber in host");
                lhs += profile.pair(host, Frame::IDENTITY, x0, yp, h0[yp]);
                rhs += profile.pair(host, Frame::IDENTITY, x1, yp, h1[yp]);
            }
            if lhs > rhs * (1.0 + 1e-12) + 1e-14 {
                violations += 1;
            }
            if rhs > 0.0 {
                worst = worst.max(lhs / rhs);
            } else if lhs > 0.0 {
                worst = f64::INFINITY;
            }
        }
        rows.push((m, samples, violations, worst));
    }
    let mut m0_observed = None;
    for &(m, _, v, _) in rows.iter().rev() {
        if v > 0 {
            break;
        }
        m0_observed = Some(m);
    }
    Ok(MonotonicityReport { rows, m0_observed })
}

/// `sup_x ∫_{B(x, 2^{M/4})^c} W dm` for `M = 1..=m_max`.
pub fn w2_terms(g: &GasketGraph, profile: &ProfileSpec, m_max: u32) -> Result<Vec<f64>> {
    (1..=m_max).map(|m| s_w(g, profile, 2f64.powf(m as f64 / 4.0))).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gasket::build_graph;

    #[test]
    fn indicator_single_point() {
        let g = build_graph(0, 3).unwrap();
        let profile = ProfileSpec::Indicator { amplitude: 2.0, range: 0.25 };
        let mut cloud = sample_cloud(&g, 0.0, 1, 0).unwrap();
        assert!(cloud.is_empty());
        cloud.points.push(ObstaclePoint { cell: 0, corner: 0 });
        let v = evaluate_potential(&g, &cloud, &profile).unwrap();
        let p = cloud.vertices(&g)[0];
        for x in 0..g.num_vertices() {
            let expect = if g.distance(x, p) <= 0.25 { 2.0 } else { 0.0 };
            assert_eq!(v.values[x], expect);
        }
    }

    #[test]
    fn table_interpolates() {
        let p: ProfileSpec = "table:r=0/0.5/1,phi=4/2/1,R=1".parse().unwrap();
        assert_eq!(p.radial(0.25), Some(3.0));
        assert_eq!(p.radial(1.0), Some(1.0));
        assert_eq!(p.radial(1.5), Some(0.0));
        assert!("table:r=0/1,phi=1/2,R=1".parse::<ProfileSpec>().is_err());
        assert!("indicator:A=1,a0=1,zz=3".parse::<ProfileSpec>().is_err());
    }

    #[test]
    fn parse_round_trip() {
        for s in [
            "indicator:A=2,a0=0.25",
            "power:K=1,theta=1,core=0.125",
            "cell:m0=0,A=1,tilt=0.5",
            "dyadic:a=1/0.5/0.25",
            "dyadic:theta=1,cutoff=4",
        ] {
            let p: ProfileSpec = s.parse().unwrap();
            let q: ProfileSpec = p.to_string().parse().unwrap();
            assert_eq!(p, q, "{s}");
        }
    }

    #[test]
    fn dyadic_levels_are_nested() {
        let g = build_graph(2, 2).unwrap();
        let a = vec![1.0, 0.5, 0.25, 0.125];
        for x in 0..g.num_vertices() {
            for y in 0..g.num_vertices() {
                let k = dyadic_level(g.coords(x), g.coords(y), g.n() as i32, a.len());
                if x == y {
                    assert_eq!(k, Some(0));
                }
                if let Some(k) = k {
                    let e = g.n() as i32 + k as i32;
                    assert!(g.distance(x, y) <= 1.0 + 2f64.powi(k as i32), "{x} {y} {e}");
                }
            }
        }
        let origin = g.vertex_at((0, 0)).unwrap();
        let far = g.vertex_at((16, 0)).unwrap();
        assert_eq!(dyadic_level(g.coords(origin), g.coords(far), g.n() as i32, 5), Some(2));
    }

    #[test]
    fn cell_profile_support() {
        let g = build_graph(1, 2).unwrap();
        let p = ProfileSpec::Cell { m0: 0, amplitude: 1.0, tilt: 0.0 };
        let a = g.vertex_at((1, 1)).unwrap();
        let b = g.vertex_at((6, 1)).unwrap();
        let c = g.vertex_at((4, 0)).unwrap();
        assert_eq!(p.pair(&g, Frame::IDENTITY, a, c, 0), 1.0);
        assert_eq!(p.pair(&g, Frame::IDENTITY, a, b, 0), 0.0);
        assert_eq!(p.pair(&g, Frame::IDENTITY, b, c, 0), 1.0);
    }
}
