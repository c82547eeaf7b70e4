//! Laplace exponents of complete subordinators, their scaling certificates,
//! and exact samplers for the presets that admit one.
//!
//! Index parameters are stored as fractions of the walk dimension: a preset
//! with `g = 0.5` has `γ = d_w / 2` and contributes `λ^{1/2}`.

use std::f64::consts::PI;
use std::fmt;
use std::str::FromStr;

use num_complex::Complex64;
use rand::Rng;
use rand_distr::{Distribution, Exp1};
use statrs::function::gamma::gamma;

use crate::error::{LabError, Result};
use crate::numerics::{integrate, integrate_half_line, log_grid};
use crate::rng::LabRng;
use crate::{DIM_H, DIM_S, DIM_W};

#[derive(Debug, Clone, PartialEq)]
pub enum LaplaceExponent {
    /// `bλ`.
    PureDrift { b: f64 },
    /// `bλ + λ^g`.
    StableWithDrift { b: f64, g: f64 },
    /// `bλ + λ^{g1} log(1+λ)^{g2}`.
    LogStableWithDrift { b: f64, g1: f64, g2: f64 },
    /// `Σ λ^{g_i}`.
    StableMixture { gs: Vec<f64> },
    /// `(λ + λ^{g1})^{g2}`.
    NestedStable { g1: f64, g2: f64 },
    /// `λ^{g1} log(1+λ)^{-g2}`.
    LogCorrectedStable { g1: f64, g2: f64 },
    /// `(λ + m)^a − ϑ` with `a = α/d_w` and `m = ϑ^{1/a}`.
    RelativisticStable { alpha: f64, theta: f64 },
}

/// Which upper-bound assumption the exponent satisfies.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Regime {
    /// Pure drift.
    U1,
    /// Drift plus weakly scaling jumps.
    U2,
    /// Weakly scaling jumps only.
    U3,
    None,
}

impl fmt::Display for Regime {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            Regime::U1 => "U1",
            Regime::U2 => "U2",
            Regime::U3 => "U3",
            Regime::None => "none",
        };
        f.write_str(s)
    }
}

fn check_fraction(name: &str, g: f64) -> Result<()> {
    if g > 0.0 && g < 1.0 {
        Ok(())
    } else {
        Err(LabError::Config(format!("{name} = {g} must lie strictly between 0 and 1 (fraction of d_w)")))
    }
}

impl LaplaceExponent {
    pub fn validate(&self) -> Result<()> {
        use LaplaceExponent::*;
        match self {
            PureDrift { b } => {
                if *b <= 0.0 {
                    return Err(LabError::Config("drift b must be positive".into()));
                }
            }
            StableWithDrift { b, g } => {
                if *b < 0.0 {
                    return Err(LabError::Config("drift b must be nonnegative".into()));
                }
                check_fraction("g", *g)?;
            }
            LogStableWithDrift { b, g1, g2 } => {
                if *b < 0.0 {
                    return Err(LabError::Config("drift b must be nonnegative".into()));
                }
                check_fraction("g1", *g1)?;
                if !(*g2 > -g1 && *g2 < 1.0 - g1) {
                    return Err(LabError::Config("g2 must lie in (-g1, 1 - g1)".into()));
                }
            }
            StableMixture { gs } => {
                if gs.is_empty() {
                    return Err(LabError::Config("stable mixture needs at least one index".into()));
                }
                for &g in gs {
                    check_fraction("g", g)?;
                }
            }
            NestedStable { g1, g2 } => {
                check_fraction("g1", *g1)?;
                check_fraction("g2", *g2)?;
            }
            LogCorrectedStable { g1, g2 } => {
                check_fraction("g1", *g1)?;
                if !(*g2 > 0.0 && g2 < g1) {
                    return Err(LabError::Config("g2 must lie in (0, g1)".into()));
                }
            }
            RelativisticStable { alpha, theta } => {
                check_fraction("alpha", *alpha)?;
                if *theta <= 0.0 {
                    return Err(LabError::Config("theta must be positive".into()));
                }
            }
        }
        Ok(())
    }

    /// Drift coefficient `b`.
    pub fn drift(&self) -> f64 {
        match self {
            LaplaceExponent::PureDrift { b }
            | LaplaceExponent::StableWithDrift { b, .. }
            | LaplaceExponent::LogStableWithDrift { b, .. } => *b,
            _ => 0.0,
        }
    }

    /// `φ(λ)` for `λ ≥ 0`.
    pub fn evaluate(&self, lambda: f64) -> Result<f64> {
        if lambda.is_nan() || lambda < 0.0 {
            return Err(LabError::Domain(format!("Laplace exponent evaluated at {lambda}")));
        }
        Ok(self.phi(lambda))
    }

    /// `φ(λ)` without the domain check.
    pub fn phi(&self, lambda: f64) -> f64 {
        self.drift() * lambda + self.psi(lambda)
    }

    /// Jump part `ψ(λ) = φ(λ) − bλ`.
    pub fn psi(&self, lambda: f64) -> f64 {
        use LaplaceExponent::*;
        if lambda == 0.0 {
            return 0.0;
        }
        match self {
            PureDrift { .. } => 0.0,
            StableWithDrift { g, .. } => lambda.powf(*g),
            LogStableWithDrift { g1, g2, .. } => lambda.powf(*g1) * lambda.ln_1p().powf(*g2),
            StableMixture { gs } => gs.iter().map(|g| lambda.powf(*g)).sum(),
            NestedStable { g1, g2 } => (lambda + lambda.powf(*g1)).powf(*g2),
            LogCorrectedStable { g1, g2 } => lambda.powf(*g1) * lambda.ln_1p().powf(-g2),
            RelativisticStable { alpha, theta } => {
                let m = theta.powf(1.0 / alpha);
                theta * (alpha * (lambda / m).ln_1p()).exp_m1()
            }
        }
    }

    /// Jump part continued to the complex plane (principal branches).
    pub fn psi_complex(&self, z: Complex64) -> Complex64 {
        use LaplaceExponent::*;
        let one = Complex64::new(1.0, 0.0);
        match self {
            PureDrift { .. } => Complex64::new(0.0, 0.0),
            StableWithDrift { g, .. } => z.powf(*g),
            LogStableWithDrift { g1, g2, .. } => z.powf(*g1) * (one + z).ln().powf(*g2),
            StableMixture { gs } => gs.iter().map(|g| z.powf(*g)).sum(),
            NestedStable { g1, g2 } => (z + z.powf(*g1)).powf(*g2),
            LogCorrectedStable { g1, g2 } => z.powf(*g1) * (one + z).ln().powf(-g2),
            RelativisticStable { alpha, theta } => {
                let m = theta.powf(1.0 / alpha);
                (z + m).powf(*alpha) - theta
            }
        }
    }

    /// Exponents and regime taken from the preset table.
    fn table(&self) -> (Regime, f64, Option<[f64; 3]>) {
        use LaplaceExponent::*;
        let w = DIM_W;
        match self {
            PureDrift { .. } => (Regime::U1, w, None),
            StableWithDrift { b, g } => {
                let r = if *b > 0.0 { Regime::U2 } else { Regime::U3 };
                (r, g * w, Some([g * w, g * w, g * w]))
            }
            LogStableWithDrift { b, g1, g2 } => {
                let r = if *b > 0.0 { Regime::U2 } else { Regime::U3 };
                let a1 = (g1 + g2) * w;
                (r, a1, Some([a1, g1 * w, (g1 * w + w) / 2.0]))
            }
            StableMixture { gs } => {
                let lo = gs.iter().cloned().fold(f64::INFINITY, f64::min) * w;
                let hi = gs.iter().cloned().fold(0.0, f64::max) * w;
                (Regime::U3, lo, Some([lo, hi, hi]))
            }
            NestedStable { g1, g2 } => {
                let a1 = g1 * g2 * w;
                (Regime::U3, a1, Some([a1, g2 * w, g2 * w]))
            }
            LogCorrectedStable { g1, g2 } => {
                let a = (g1 - g2) * w;
                (Regime::U3, a, Some([a, a, g1 * w]))
            }
            RelativisticStable { .. } => (Regime::None, w, None),
        }
    }

    /// Whether an exact sampler exists for the preset.
    pub fn has_sampler(&self) -> bool {
        !matches!(
            self,
            LaplaceExponent::LogStableWithDrift { .. } | LaplaceExponent::LogCorrectedStable { .. }
        )
    }

    /// `(α₁, α₂)` used in the upper-bound pipeline: `d_w` under (U1).
    pub fn upper_indices(&self) -> Option<(f64, f64)> {
        let (regime, _, scal) = self.table();
        match regime {
            Regime::U1 => Some((DIM_W, DIM_W)),
            Regime::None => None,
            _ => scal.map(|s| (s[0], s[1])),
        }
    }

    /// Rate `γ`: `d_w` under (U1), `α₁` otherwise.
    pub fn gamma(&self) -> Option<f64> {
        self.upper_indices().map(|(a1, _)| a1)
    }
}

impl fmt::Display for LaplaceExponent {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        use LaplaceExponent::*;
        match self {
            PureDrift { b } => write!(f, "drift:b={b}"),
            StableWithDrift { b, g } => write!(f, "stable_drift:b={b},g={g}dw"),
            LogStableWithDrift { b, g1, g2 } => write!(f, "log_stable_drift:b={b},g1={g1}dw,g2={g2}dw"),
            StableMixture { gs } => {
                let list: Vec<String> = gs.iter().map(|g| format!("{g}dw")).collect();
                write!(f, "stable_mixture:g={}", list.join("/"))
            }
            NestedStable { g1, g2 } => write!(f, "nested_stable:g1={g1}dw,g2={g2}dw"),
            LogCorrectedStable { g1, g2 } => write!(f, "log_corrected:g1={g1}dw,g2={g2}dw"),
            RelativisticStable { alpha, theta } => write!(f, "relativistic:alpha={alpha}dw,theta={theta}"),
        }
    }
}

/// Parses an index: `0.5dw` is a fraction of `d_w`, a bare number is `γ`.
fn parse_index(s: &str) -> Result<f64> {
    let s = s.trim();
    let (num, frac) = match s.strip_suffix("dw") {
        Some(head) => (head, true),
        None => (s, false),
    };
    let v: f64 = num
        .trim()
        .parse()
        .map_err(|_| LabError::Config(format!("cannot parse index '{s}'")))?;
    Ok(if frac { v } else { v / DIM_W })
}

pub(crate) fn parse_kv(body: &str) -> Result<Vec<(String, String)>> {
    let mut out = Vec::new();
    for part in body.split(',').filter(|p| !p.trim().is_empty()) {
        let (k, v) = part
            .split_once('=')
            .ok_or_else(|| LabError::Config(format!("expected key=value, found '{part}'")))?;
        out.push((k.trim().to_string(), v.trim().to_string()));
    }
    Ok(out)
}

pub(crate) fn take(kv: &mut Vec<(String, String)>, key: &str) -> Option<String> {
    let pos = kv.iter().position(|(k, _)| k == key)?;
    Some(kv.remove(pos).1)
}

pub(crate) fn parse_f64(s: &str) -> Result<f64> {
    s.parse().map_err(|_| LabError::Config(format!("cannot parse number '{s}'")))
}

impl FromStr for LaplaceExponent {
    type Err = LabError;

    fn from_str(s: &str) -> Result<Self> {
        let (kind, body) = s.split_once(':').unwrap_or((s, ""));
        let mut kv = parse_kv(body)?;
        let req = |kv: &mut Vec<(String, String)>, key: &str| {
            take(kv, key).ok_or_else(|| LabError::Config(format!("preset '{kind}' needs '{key}'")))
        };
        let phi = match kind.trim() {
            "drift" => LaplaceExponent::PureDrift { b: parse_f64(&req(&mut kv, "b")?)? },
            "stable_drift" => LaplaceExponent::StableWithDrift {
                b: parse_f64(&req(&mut kv, "b")?)?,
                g: parse_index(&req(&mut kv, "g")?)?,
            },
            "stable" => LaplaceExponent::StableWithDrift { b: 0.0, g: parse_index(&req(&mut kv, "g")?)? },
            "log_stable_drift" => LaplaceExponent::LogStableWithDrift {
                b: parse_f64(&req(&mut kv, "b")?)?,
                g1: parse_index(&req(&mut kv, "g1")?)?,
                g2: parse_index(&req(&mut kv, "g2")?)?,
            },
            "stable_mixture" => LaplaceExponent::StableMixture {
                gs: req(&mut kv, "g")?.split('/').map(parse_index).collect::<Result<Vec<_>>>()?,
            },
            "nested_stable" => LaplaceExponent::NestedStable {
                g1: parse_index(&req(&mut kv, "g1")?)?,
                g2: parse_index(&req(&mut kv, "g2")?)?,
            },
            "log_corrected" => LaplaceExponent::LogCorrectedStable {
                g1: parse_index(&req(&mut kv, "g1")?)?,
                g2: parse_index(&req(&mut kv, "g2")?)?,
            },
            "relativistic" => LaplaceExponent::RelativisticStable {
                alpha: parse_index(&req(&mut kv, "alpha")?)?,
                theta: parse_f64(&req(&mut kv, "theta")?)?,
            },
            other => return Err(LabError::Config(format!("unknown Laplace exponent preset '{other}'"))),
        };
        if let Some((k, _)) = kv.first() {
            return Err(LabError::Config(format!("unknown key '{k}' for preset '{kind}'")));
        }
        phi.validate()?;
        Ok(phi)
    }
}

/// Exponents, constants and regime for one preset, with the grid checks
/// that back them.
#[derive(Debug, Clone)]
pub struct ScalingCertificate {
    pub regime: Regime,
    /// Lower index of (L1), on the `d_w` scale.
    pub beta: f64,
    pub alpha1: Option<f64>,
    pub alpha2: Option<f64>,
    pub delta: Option<f64>,
    /// `[a₁, a₂, a₃, a₄]` from the grid extremes.
    pub a: Option<[f64; 4]>,
    pub r0: f64,
    /// Fitted constant of (L1) on `(0, 1]`.
    pub c_l1: f64,
    /// Constants of the lower bounds `ψ ≥ ā_i λ^{α_i/d_w}`.
    pub a_bar: Option<[f64; 2]>,
    /// Lévy-density floor constant.
    pub c_levy: Option<f64>,
    pub consistent: bool,
    pub notes: Vec<String>,
}

const SCALE_LAMBDAS: usize = 41;
const SCALE_RS: usize = 21;

/// Exponent table plus numerical verification of every stated inequality.
pub fn classify(phi: &LaplaceExponent) -> ScalingCertificate {
    let (regime, beta, scal) = phi.table();
    let mut notes = Vec::new();
    let mut consistent = true;
    let r0 = 1.0;

    let small = log_grid(1e-10, 1.0, 81);
    let c_l1 = small.iter().map(|&s| phi.phi(s) / s.powf(beta / DIM_W)).fold(0.0, f64::max);
    if !(c_l1.is_finite() && c_l1 < 1e3) {
        consistent = false;
        notes.push(format!("(L1) constant {c_l1} not bounded on the grid"));
    }
    if let Err(e) = bernstein_check(phi) {
        consistent = false;
        notes.push(e.to_string());
    }

    let (mut a, mut a_bar, mut c_levy) = (None, None, None);
    let (alpha1, alpha2, delta) = match scal {
        Some([a1, a2, d]) => (Some(a1), Some(a2), Some(d)),
        None => (None, None, None),
    };
    if let (Some(a1), Some(a2), Some(d)) = (alpha1, alpha2, delta) {
        let lam_small = log_grid(1e-6, 1.0, SCALE_LAMBDAS);
        let lam_large = log_grid(1.0, 1e6, SCALE_LAMBDAS);
        let r_small = log_grid(1e-6, r0, SCALE_RS);
        let r_large = log_grid(r0, 1e6, SCALE_RS);
        let (mut c1, mut c3) = (f64::INFINITY, 0.0f64);
        for &l in &lam_small {
            for &r in &r_small {
                let ratio = phi.psi(l * r) / phi.psi(r);
                c1 = c1.min(ratio / l.powf(a1 / DIM_W));
                c3 = c3.max(ratio / l.powf(beta / DIM_W));
            }
        }
        let (mut c2, mut c4) = (f64::INFINITY, 0.0f64);
        for &l in &lam_large {
            for &r in &r_large {
                let ratio = phi.psi(l * r) / phi.psi(r);
                c2 = c2.min(ratio / l.powf(a2 / DIM_W));
                c4 = c4.max(ratio / l.powf(d / DIM_W));
            }
        }
        if !(c1 >= 0.01 && c2 >= 0.01 && c3 <= 100.0 && c4 <= 100.0) {
            consistent = false;
            notes.push(format!("weak scaling constants out of range: a = [{c1}, {c2}, {c3}, {c4}]"));
        }
        a = Some([c1.min(1.0), c2.min(1.0), c3.max(1.0), c4.max(1.0)]);
        let p0 = phi.psi(r0);
        a_bar = Some([
            c1.min(1.0) * p0 * r0.powf(-a1 / DIM_W),
            c2.min(1.0) * p0 * r0.powf(-a2 / DIM_W),
        ]);
        match levy_floor_constant(phi, a1, a2) {
            Ok(c) => {
                if !(c > 0.0) {
                    consistent = false;
                    notes.push("Lévy density floor constant is not positive".into());
                }
                c_levy = Some(c);
            }
            Err(e) => {
                consistent = false;
                notes.push(e.to_string());
            }
        }
    }
    if regime == Regime::None {
        notes.push("no weak-scaling upper regime; lower-bound checks only".into());
    }
    ScalingCertificate { regime, beta, alpha1, alpha2, delta, a, r0, c_l1, a_bar, c_levy, consistent, notes }
}

/// Monotonicity and concavity of `φ` on a log grid of 1000 points.
pub fn bernstein_check(phi: &LaplaceExponent) -> Result<()> {
    let grid = log_grid(1e-6, 1e6, 1000);
    let vals: Vec<f64> = grid.iter().map(|&l| phi.phi(l)).collect();
    for k in 1..grid.len() {
        if vals[k] < vals[k - 1] - 1e-8 * vals[k].abs().max(1e-300) {
            return Err(LabError::Numeric(format!("φ decreases near λ = {}", grid[k])));
        }
    }
    for k in 1..grid.len() - 1 {
        let s1 = (vals[k] - vals[k - 1]) / (grid[k] - grid[k - 1]);
        let s2 = (vals[k + 1] - vals[k]) / (grid[k + 1] - grid[k]);
        if s2 > s1 + 1e-8 * s1.abs().max(1e-12) {
            return Err(LabError::Numeric(format!("φ is not concave near λ = {}", grid[k])));
        }
    }
    Ok(())
}

/// Drift recovered as the slope of `φ` over `[10^6, 10^8]`.
pub fn recovered_drift(phi: &LaplaceExponent) -> f64 {
    (phi.phi(1e8) - phi.phi(1e6)) / (1e8 - 1e6)
}

/// `(t / (1 − e^{−1})) ∫₀^{1/A} φ(λ)/λ dλ`.
pub fn tail_bound(phi: &LaplaceExponent, t: f64, level: f64) -> Result<f64> {
    if !(t > 0.0 && level > 0.0) {
        return Err(LabError::Domain("tail bound needs t > 0 and A > 0".into()));
    }
    let upper = 1.0 / level;
    let integral = match phi {
        LaplaceExponent::PureDrift { b } => b * upper,
        LaplaceExponent::StableWithDrift { b, g } => b * upper + upper.powf(*g) / g,
        LaplaceExponent::StableMixture { gs } => gs.iter().map(|g| upper.powf(*g) / g).sum(),
        _ => integrate(|l: f64| if l > 0.0 { phi.phi(l) / l } else { 0.0 }, 0.0, upper, 1e-10)?,
    };
    if !integral.is_finite() {
        return Err(LabError::Numeric("tail integral diverges".into()));
    }
    Ok(t / (1.0 - (-1.0f64).exp()) * integral)
}

fn stable_density(g: f64, s: f64) -> f64 {
    g / gamma(1.0 - g) * s.powf(-1.0 - g)
}

/// Lévy density `ρ(s)` of the jump part: closed form for stable-type
/// presets, otherwise the Stieltjes boundary integral
/// `ρ(s) = (1/π) ∫₀^∞ e^{−st} Im ψ(−t + i0) dt`.
pub fn levy_density(phi: &LaplaceExponent, s: f64) -> Result<f64> {
    if !(s > 0.0) {
        return Err(LabError::Domain("Lévy density needs s > 0".into()));
    }
    match phi {
        LaplaceExponent::PureDrift { .. } => Ok(0.0),
        LaplaceExponent::StableWithDrift { g, .. } => Ok(stable_density(*g, s)),
        LaplaceExponent::StableMixture { gs } => Ok(gs.iter().map(|&g| stable_density(g, s)).sum()),
        LaplaceExponent::RelativisticStable { alpha, theta } => {
            let m = theta.powf(1.0 / alpha);
            Ok((-m * s).exp() * stable_density(*alpha, s))
        }
        _ => {
            let f = |x: f64| {
                if x <= 0.0 {
                    return 0.0;
                }
                let z = Complex64::new(-x / s, 0.0);
                (-x).exp() * phi.psi_complex(z).im
            };
            let rough = integrate(f, 0.0, 60.0, 1e-6)?.abs();
            let v = integrate(f, 0.0, 60.0, 1e-11 * rough.max(1e-300))?;
            Ok(v / (PI * s))
        }
    }
}

fn floor_shape(s: f64, a1: f64, a2: f64) -> f64 {
    let a = if s >= 1.0 { a1 } else { a2 };
    s.powf(-1.0 - a / DIM_W)
}

fn levy_floor_constant(phi: &LaplaceExponent, a1: f64, a2: f64) -> Result<f64> {
    let mut c = 1.0f64;
    for s in log_grid(1e-3, 1e3, 25) {
        c = c.min(levy_density(phi, s)? / floor_shape(s, a1, a2));
    }
    Ok(c)
}

/// Floor `c s^{−1−α/d_w}` with `α = α₁` for `s ≥ 1` and `α₂` below.
pub fn levy_density_floor(cert: &ScalingCertificate, s: f64) -> Result<f64> {
    if !matches!(cert.regime, Regime::U2 | Regime::U3) {
        return Err(LabError::Domain(format!("Lévy floor needs (U2) or (U3), regime is {}", cert.regime)));
    }
    if !(s > 0.0) {
        return Err(LabError::Domain("Lévy floor needs s > 0".into()));
    }
    let (a1, a2) = (cert.alpha1.unwrap(), cert.alpha2.unwrap());
    Ok(cert.c_levy.unwrap_or(0.0) * floor_shape(s, a1, a2))
}

/// `∫ u^{−d_s/2} η_t(du)` as `(1/Γ(1+d_s/2)) ∫₀^∞ e^{−tφ(λ^{2/d_s})} dλ`.
pub fn moment_integral(phi: &LaplaceExponent, t: f64) -> Result<f64> {
    let p = 2.0 / DIM_S;
    let v = integrate_half_line(|l: f64| (-t * phi.phi(l.powf(p))).exp(), 1e-11)?;
    Ok(v / gamma(1.0 + DIM_S / 2.0))
}

/// Closed form of the same moment for `φ(λ) = λ^g`.
pub fn stable_moment(g: f64, t: f64) -> f64 {
    let q = DIM_S / 2.0;
    gamma(1.0 + q / g) / gamma(1.0 + q) * t.powf(-q / g)
}

/// `t^{−d/α₁} + t^{−d/α₂}`.
pub fn moment_envelope(alpha1: f64, alpha2: f64, t: f64) -> f64 {
    t.powf(-DIM_H / alpha1) + t.powf(-DIM_H / alpha2)
}

/// One-sided stable variable with `E e^{−λS} = e^{−λ^a}` (Kanter).
pub fn stable_unit(a: f64, rng: &mut LabRng) -> f64 {
    let u = PI * rng.random::<f64>();
    let w: f64 = Exp1.sample(rng);
    let u = u.max(1e-300);
    (a * u).sin() / u.sin().powf(1.0 / a) * ((1.0 - a) * u).sin().powf((1.0 - a) / a) / w.powf((1.0 - a) / a)
}

const MAX_REJECTIONS: usize = 1_000_000;

/// Sampler of `S_t` for one preset, owning its random stream.
pub struct SubordinatorSampler {
    phi: LaplaceExponent,
    rng: LabRng,
}

impl SubordinatorSampler {
    pub fn new(phi: LaplaceExponent, rng: LabRng) -> Result<SubordinatorSampler> {
        if !phi.has_sampler() {
            return Err(LabError::NotApplicable(format!("no exact sampler for {phi}")));
        }
        Ok(SubordinatorSampler { phi, rng })
    }

    pub fn exponent(&self) -> &LaplaceExponent {
        &self.phi
    }

    /// One draw of `S_t`.
    pub fn sample(&mut self, t: f64) -> Result<f64> {
        use LaplaceExponent::*;
        if !(t > 0.0) {
            return Err(LabError::Domain("subordinator time must be positive".into()));
        }
        let rng = &mut self.rng;
        let v = match &self.phi {
            PureDrift { b } => b * t,
            StableWithDrift { b, g } => b * t + t.powf(1.0 / g) * stable_unit(*g, rng),
            StableMixture { gs } => gs.iter().map(|&g| t.powf(1.0 / g) * stable_unit(g, rng)).sum(),
            NestedStable { g1, g2 } => {
                let r = t.powf(1.0 / g2) * stable_unit(*g2, rng);
                r + r.powf(1.0 / g1) * stable_unit(*g1, rng)
            }
            RelativisticStable { alpha, theta } => {
                let m = theta.powf(1.0 / alpha);
                let scale = t.powf(1.0 / alpha);
                let mut accepted = None;
                for _ in 0..MAX_REJECTIONS {
                    let x = scale * stable_unit(*alpha, rng);
                    if rng.random::<f64>() < (-m * x).exp() {
                        accepted = Some(x);
                        break;
                    }
                }
                accepted.ok_or_else(|| LabError::Solver("relativistic rejection loop exhausted".into()))?
            }
            LogStableWithDrift { .. } | LogCorrectedStable { .. } => unreachable!(),
        };
        Ok(v)
    }

    /// Cumulative values `S_{dt}, S_{2dt}, …` from independent increments.
    pub fn sample_path(&mut self, dt: f64, steps: usize) -> Result<Vec<f64>> {
        let mut acc = 0.0;
        let mut out = Vec::with_capacity(steps);
        for _ in 0..steps {
            acc += self.sample(dt)?;
            out.push(acc);
        }
        Ok(out)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::{stream, Tag};

    #[test]
    fn closed_form_values() {
        assert_eq!(LaplaceExponent::PureDrift { b: 2.0 }.evaluate(3.0).unwrap(), 6.0);
        let s = LaplaceExponent::StableWithDrift { b: 1.0, g: 0.5 };
        assert!((s.evaluate(1.0).unwrap() - 2.0).abs() < 1e-15);
        let r = LaplaceExponent::RelativisticStable { alpha: 0.5, theta: 1.0 };
        assert_eq!(r.evaluate(0.0).unwrap(), 0.0);
        assert!(s.evaluate(-1.0).is_err());
    }

    #[test]
    fn parse_round_trip() {
        let p: LaplaceExponent = "stable_drift:b=1,g=0.5dw".parse().unwrap();
        assert_eq!(p, LaplaceExponent::StableWithDrift { b: 1.0, g: 0.5 });
        let q: LaplaceExponent = p.to_string().parse().unwrap();
        assert_eq!(p, q);
        assert!("stable_drift:b=1,g=0.5dw,x=2".parse::<LaplaceExponent>().is_err());
    }

    #[test]
    fn stieltjes_route_matches_closed_form() {
        let phi = LaplaceExponent::NestedStable { g1: 0.999_999, g2: 0.5 };
        for s in [0.3, 1.0, 4.0] {
            let quad = levy_density(&phi, s).unwrap();
            let exact = stable_density(0.5, s) * 2f64.sqrt();
            assert!(((quad - exact) / exact).abs() < 1e-3, "{s}: {quad} vs {exact}");
        }
    }

    #[test]
    fn kanter_half_stable_laplace() {
        let mut rng = stream(11, Tag::Subordinator, 0, 0);
        let n = 100_000;
        let xs: Vec<f64> = (0..n).map(|_| (-stable_unit(0.5, &mut rng)).exp()).collect();
        let (m, se) = crate::numerics::mean_se(&xs);
        assert!((m - (-1.0f64).exp()).abs() < 3.0 * se, "{m} ± {se}");
    }

    #[test]
    fn presets_classify_consistently() {
        let presets = [
            "drift:b=1",
            "stable_drift:b=1,g=0.5dw",
            "log_stable_drift:b=1,g1=0.4dw,g2=0.2dw",
            "stable_mixture:g=0.3333dw/0.6667dw",
            "nested_stable:g1=0.5dw,g2=0.6dw",
            "log_corrected:g1=0.6dw,g2=0.2dw",
            "relativistic:alpha=0.5dw,theta=1",
        ];
        for p in presets {
            let phi: LaplaceExponent = p.parse().unwrap();
            let cert = classify(&phi);
            assert!(cert.consistent, "{p}: {:?}", cert);
        }
    }
}
