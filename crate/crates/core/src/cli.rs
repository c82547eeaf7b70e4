//! Experiment runner behind the `lab` binary.
//!
//! A run is described by an [`ExperimentConfig`], assembled from an optional
//! `key = value` file and command-line flags (flags win). Every field is
//! validated before any numerical work starts. Outputs go to the directory
//! `out` together with `manifest.txt`.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::sync::Arc;
use std::time::Instant;

use clap::{Args, Parser, Subcommand};

use crate::error::{LabError, Result};
use crate::gasket::{build_graph, geometry_report, GasketGraph};
use crate::ids::{self, Experiment, FitMode};
use crate::numerics::{fmt17, log_grid};
use crate::obstacles::{self, ObstacleParams};
use crate::operators::{self, BoundaryMode, DiscreteGenerator, KillOrder, SubordinateOperator, DENSE_CAP};
use crate::potentials::ProfileSpec;
use crate::subordinators::{self, LaplaceExponent, Regime};
use crate::{montecarlo, DIM_H};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Kind {
    Geometry,
    Spectrum,
    Ids,
    Lifschitz,
    Survival,
    Obstacles,
    Probes,
}

impl Kind {
    pub fn name(self) -> &'static str {
        match self {
            Kind::Geometry => "geometry",
            Kind::Spectrum => "spectrum",
            Kind::Ids => "ids",
            Kind::Lifschitz => "lifschitz",
            Kind::Survival => "survival",
            Kind::Obstacles => "obstacles",
            Kind::Probes => "probes",
        }
    }
}

impl FromStr for Kind {
    type Err = LabError;

    fn from_str(s: &str) -> Result<Kind> {
        Ok(match s.trim() {
            "geometry" => Kind::Geometry,
            "spectrum" => Kind::Spectrum,
            "ids" => Kind::Ids,
            "lifschitz" => Kind::Lifschitz,
            "survival" => Kind::Survival,
            "obstacles" => Kind::Obstacles,
            "probes" => Kind::Probes,
            other => return Err(LabError::Config(format!("unknown experiment kind '{other}'"))),
        })
    }
}

/// Which bound the `ids` experiment attaches to the curve.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Check {
    None,
    Lower,
    Upper,
}

/// Log-spaced time grid `a:b:steps`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TGrid {
    pub a: f64,
    pub b: f64,
    pub steps: usize,
}

impl TGrid {
    pub fn points(&self) -> Vec<f64> {
        if self.steps == 1 {
            return vec![self.a];
        }
        log_grid(self.a, self.b, self.steps)
    }
}

impl FromStr for TGrid {
    type Err = LabError;

    fn from_str(s: &str) -> Result<TGrid> {
        let parts: Vec<&str> = s.split(':').collect();
        let bad = || LabError::Config(format!("t-grid '{s}' must read a:b:steps"));
        if parts.len() != 3 {
            return Err(bad());
        }
        let a: f64 = parts[0].trim().parse().map_err(|_| bad())?;
        let b: f64 = parts[1].trim().parse().map_err(|_| bad())?;
        let steps: usize = parts[2].trim().parse().map_err(|_| bad())?;
        if !(a > 0.0 && b >= a && b.is_finite() && steps >= 1) || (steps > 1 && b == a) {
            return Err(LabError::Config(format!("t-grid '{s}' needs 0 < a < b and steps >= 1")));
        }
        Ok(TGrid { a, b, steps })
    }
}

/// Every key accepted in a config file, with its default.
const KEYS: &[(&str, &str)] = &[
    ("kind", ""),
    ("M", "0"),
    ("n", "4"),
    ("phi", "drift:b=1"),
    ("profile", "indicator:A=1,a0=0.25"),
    ("nu", "1"),
    ("tgrid", "1:64:13"),
    ("reps", "20"),
    ("seed", "1"),
    ("mode", "dirichlet"),
    ("order", "subordinate_then_kill"),
    ("periodize", "none"),
    ("check", "none"),
    ("fit", "laplace"),
    ("window", "auto"),
    ("min_count", "10"),
    ("resamples", "200"),
    ("theta", "auto"),
    ("paths", "2000"),
    ("scales", "4,5,6"),
    ("a", "0.25"),
    ("b_exp", "1"),
    ("delta", "0.05"),
    ("K", "10"),
    ("R", "4"),
    ("r0", "0.5"),
    ("configs", "20"),
    ("out", "lab-out"),
    ("threads", "auto"),
];

/// Fully validated experiment description.
#[derive(Debug, Clone)]
pub struct ExperimentConfig {
    pub kind: Kind,
    pub m: u32,
    pub n: u32,
    pub phi: LaplaceExponent,
    pub profile: ProfileSpec,
    pub nu: f64,
    pub tgrid: TGrid,
    pub reps: usize,
    pub seed: u64,
    pub mode: BoundaryMode,
    pub order: KillOrder,
    pub periodize: Option<u32>,
    pub check: Check,
    pub fit: FitMode,
    /// Explicit fit window; the default depends on the fit mode.
    pub window: Option<(f64, f64)>,
    /// Eigenvalues required below the lower end of the tail window.
    pub min_count: usize,
    pub resamples: usize,
    pub theta: Option<f64>,
    pub paths: usize,
    pub scales: Vec<u32>,
    pub a: f64,
    pub b_exp: i32,
    pub delta: f64,
    pub k_cap: f64,
    pub r_cap: f64,
    pub r0: f64,
    pub configs: usize,
    pub out: PathBuf,
    pub threads: Option<usize>,
    /// Resolved `key = value` pairs, in key order.
    pub resolved: BTreeMap<String, String>,
}

/// Parses a flat `key = value` file. `[section]` headers group keys for the
/// reader only; `#` starts a comment.
pub fn parse_config_text(text: &str) -> Result<BTreeMap<String, String>> {
    let mut map = BTreeMap::new();
    for (no, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() || (line.starts_with('[') && line.ends_with(']')) {
            continue;
        }
        let (k, v) = line
            .split_once('=')
            .ok_or_else(|| LabError::Config(format!("line {}: expected 'key = value'", no + 1)))?;
        let k = k.trim().to_string();
        if map.insert(k.clone(), v.trim().to_string()).is_some() {
            return Err(LabError::Config(format!("line {}: key '{k}' given twice", no + 1)));
        }
    }
    Ok(map)
}

fn num<T: FromStr>(map: &BTreeMap<String, String>, key: &str) -> Result<T> {
    let v = &map[key];
    v.parse().map_err(|_| LabError::Config(format!("{key} = '{v}' is not a valid value")))
}

fn pair(s: &str, key: &str) -> Result<(f64, f64)> {
    let bad = || LabError::Config(format!("{key} = '{s}' must read lo:hi"));
    let (lo, hi) = s.split_once(':').ok_or_else(bad)?;
    let lo: f64 = lo.trim().parse().map_err(|_| bad())?;
    let hi: f64 = hi.trim().parse().map_err(|_| bad())?;
    if !(lo > 0.0 && hi > lo && hi.is_finite()) {
        return Err(bad());
    }
    Ok((lo, hi))
}

impl ExperimentConfig {
    /// Builds a config from raw pairs; unknown keys and malformed values
    /// are rejected.
    pub fn from_map(raw: &BTreeMap<String, String>) -> Result<ExperimentConfig> {
        let mut map: BTreeMap<String, String> = KEYS.iter().map(|(k, v)| (k.to_string(), v.to_string())).collect();
        for (k, v) in raw {
            if !map.contains_key(k) {
                return Err(LabError::Config(format!("unknown key '{k}'")));
            }
            map.insert(k.clone(), v.clone());
        }
        let kind: Kind = map["kind"].parse()?;
        let phi: LaplaceExponent = map["phi"].parse()?;
        phi.validate()?;
        let profile: ProfileSpec = map["profile"].parse()?;
        profile.validate()?;
        let nu: f64 = num(&map, "nu")?;
        if !(nu >= 0.0 && nu.is_finite()) {
            return Err(LabError::Config("nu must be a nonnegative number".into()));
        }
        let mode = match map["mode"].as_str() {
            "dirichlet" => BoundaryMode::Dirichlet,
            "reflected" => BoundaryMode::Reflected,
            other => return Err(LabError::Config(format!("mode '{other}' is not dirichlet or reflected"))),
        };
        let order = match map["order"].as_str() {
            "subordinate_then_kill" => KillOrder::SubordinateThenKill,
            "kill_then_subordinate" => KillOrder::KillThenSubordinate,
            other => return Err(LabError::Config(format!("unknown kill order '{other}'"))),
        };
        let periodize = match map["periodize"].as_str() {
            "none" => None,
            _ => Some(num::<u32>(&map, "periodize")?),
        };
        if periodize.is_some() && mode != BoundaryMode::Reflected {
            return Err(LabError::Config("a periodized potential needs mode = reflected".into()));
        }
        let check = match map["check"].as_str() {
            "none" => Check::None,
            "lower" => Check::Lower,
            "upper" => Check::Upper,
            other => return Err(LabError::Config(format!("check '{other}' is not none, lower or upper"))),
        };
        let fit = match map["fit"].as_str() {
            "laplace" => FitMode::Laplace,
            "measure" => FitMode::Measure,
            other => return Err(LabError::Config(format!("fit '{other}' is not laplace or measure"))),
        };
        let window = match map["window"].as_str() {
            "auto" => None,
            s => Some(pair(s, "window")?),
        };
        let theta = match map["theta"].as_str() {
            "auto" => profile.decay().map(|(t, _)| t),
            _ => Some(num::<f64>(&map, "theta")?),
        };
        let scales = map["scales"]
            .split(',')
            .map(|s| s.trim().parse::<u32>().map_err(|_| LabError::Config(format!("scales entry '{s}' is not an integer"))))
            .collect::<Result<Vec<_>>>()?;
        let threads = match map["threads"].as_str() {
            "auto" => None,
            _ => Some(num::<usize>(&map, "threads")?).filter(|&t| t > 0),
        };
        let reps: usize = num(&map, "reps")?;
        if reps == 0 {
            return Err(LabError::Config("reps must be positive".into()));
        }
        let cfg = ExperimentConfig {
            kind,
            m: num(&map, "M")?,
            n: num(&map, "n")?,
            phi,
            profile,
            nu,
            tgrid: map["tgrid"].parse()?,
            reps,
            seed: num(&map, "seed")?,
            mode,
            order,
            periodize,
            check,
            fit,
            window,
            min_count: num(&map, "min_count")?,
            resamples: num(&map, "resamples")?,
            theta,
            paths: num(&map, "paths")?,
            scales,
            a: num(&map, "a")?,
            b_exp: num(&map, "b_exp")?,
            delta: num(&map, "delta")?,
            k_cap: num(&map, "K")?,
            r_cap: num(&map, "R")?,
            r0: num(&map, "r0")?,
            configs: num(&map, "configs")?,
            out: PathBuf::from(&map["out"]),
            threads,
            resolved: map,
        };
        cfg.check_budget()?;
        Ok(cfg)
    }

    /// Vertex count of the experiment graph, from the closed form.
    pub fn vertex_count(&self) -> usize {
        (3 * (3usize.pow(self.m + self.n) + 1)) / 2
    }

    fn check_budget(&self) -> Result<()> {
        if 3u128.pow(self.m + self.n) > crate::gasket::DEFAULT_MAX_CELLS as u128 {
            return Err(LabError::Capacity(format!("G_{} at level {} exceeds the graph budget", self.m, self.n)));
        }
        let dense = matches!(self.kind, Kind::Spectrum | Kind::Ids | Kind::Lifschitz);
        if dense && self.vertex_count() > DENSE_CAP {
            return Err(LabError::Capacity(format!(
                "{} vertices exceed the dense cap {DENSE_CAP} needed for complete spectra",
                self.vertex_count()
            )));
        }
        Ok(())
    }

    pub fn obstacle_params(&self, scale: u32) -> ObstacleParams {
        ObstacleParams {
            n: self.n,
            scale,
            a: self.a,
            b_exp: self.b_exp,
            delta: self.delta,
            k_cap: self.k_cap,
            r: self.r_cap,
            r0: self.r0,
            nu: self.nu,
            profile: self.profile.clone(),
            phi: self.phi.clone(),
        }
    }

    fn experiment(&self, graph: Arc<GasketGraph>) -> Experiment {
        let mut exp = Experiment::new(graph, self.mode, self.phi.clone(), self.profile.clone(), self.nu, self.seed);
        exp.order = self.order;
        exp.periodize = self.periodize;
        exp
    }
}

/// Dry-run report: regime, profile conditions, sizes and refusals.
pub fn validate(raw: &BTreeMap<String, String>) -> String {
    let mut s = String::new();
    let cfg = match ExperimentConfig::from_map(raw) {
        Ok(c) => c,
        Err(e) => {
            let _ = writeln!(s, "status: invalid\nrefusal: {e}");
            return s;
        }
    };
    let cert = subordinators::classify(&cfg.phi);
    let _ = writeln!(s, "kind: {}", cfg.kind.name());
    let _ = writeln!(s, "phi: {}", cfg.phi);
    let _ = writeln!(s, "  L1: beta = {} (constant {})", fmt17(cert.beta), fmt17(cert.c_l1));
    let _ = writeln!(s, "  upper regime: {}", cert.regime);
    if let (Some(a1), Some(a2)) = (cert.alpha1, cert.alpha2) {
        let _ = writeln!(s, "  alpha1 = {}, alpha2 = {}", fmt17(a1), fmt17(a2));
    }
    let _ = writeln!(s, "  scaling checks consistent: {}", cert.consistent);
    for note in &cert.notes {
        let _ = writeln!(s, "  note: {note}");
    }
    let _ = writeln!(s, "profile: {}", cfg.profile);
    let _ = writeln!(s, "  W1 (nonnegative, measurable): ok");
    match (cfg.profile.range(), cfg.profile.decay()) {
        (Some(r), _) => {
            let _ = writeln!(s, "  W2: finite range {}", fmt17(r));
        }
        (None, Some((t, k))) => {
            let _ = writeln!(s, "  W2: polynomial decay theta = {}, K = {}", fmt17(t), fmt17(k));
        }
        (None, None) => {
            let _ = writeln!(s, "  W2: no closed-form decay, checked numerically only");
        }
    }
    let _ = writeln!(s, "  W3: checked by fiber enumeration at run time");
    match cfg.profile.lower_plateau() {
        Some((a, a0)) => {
            let _ = writeln!(s, "  W4: W >= {} on d <= {}", fmt17(a), fmt17(a0));
        }
        None => {
            let _ = writeln!(s, "  W4: no plateau known");
        }
    }
    let gamma = cfg.phi.gamma();
    let _ = writeln!(s, "gamma: {}", gamma.map(fmt17).unwrap_or_else(|| "none".into()));
    let _ = writeln!(s, "theta: {}", cfg.theta.map(fmt17).unwrap_or_else(|| "none (finite range)".into()));
    let predicted = match (cfg.theta, gamma) {
        (None, Some(_)) => "(i) short range: exponent d/(d+gamma)".to_string(),
        (Some(t), Some(g)) if t > g => "(i) short range: exponent d/(d+gamma)".to_string(),
        (Some(t), Some(g)) if t < g => "(ii) long range: exponent d/(d+theta)".to_string(),
        (Some(_), Some(_)) => "(iii) critical theta = gamma: logarithmic correction".to_string(),
        (_, None) => "unknown: no upper regime".to_string(),
    };
    let _ = writeln!(s, "predicted tail regime: {predicted}");
    let _ = writeln!(s, "dimension: M = {}, n = {}, vertices = {}, dense cap = {DENSE_CAP}", cfg.m, cfg.n, cfg.vertex_count());
    let mut refusals = Vec::new();
    if cfg.check == Check::Upper && cert.regime == Regime::None {
        refusals.push(format!("upper bound requested but {} falls in regime none; the upper bound does not cover it", cfg.phi));
    }
    if cfg.check == Check::Lower && cfg.theta.is_none() {
        refusals.push("lower certificate needs a decay exponent theta".to_string());
    }
    let _ = writeln!(s, "status: {}", if refusals.is_empty() { "ok" } else { "refused" });
    for r in refusals {
        let _ = writeln!(s, "refusal: {r}");
    }
    s
}

/// Output directory plus the list of files written, for the manifest.
struct Outputs {
    dir: PathBuf,
    files: Vec<String>,
}

impl Outputs {
    fn new(dir: &Path) -> Result<Outputs> {
        fs::create_dir_all(dir)?;
        Ok(Outputs { dir: dir.to_path_buf(), files: Vec::new() })
    }

    fn write(&mut self, name: &str, f: impl FnOnce(&mut Vec<u8>) -> std::io::Result<()>) -> Result<()> {
        let mut buf = Vec::new();
        f(&mut buf)?;
        fs::write(self.dir.join(name), buf)?;
        self.files.push(name.to_string());
        Ok(())
    }
}

/// Git-describe-style version string, `v<crate version>` when git is
/// unavailable.
pub fn version_string() -> String {
    let pkg = format!("v{}", env!("CARGO_PKG_VERSION"));
    std::process::Command::new("git")
        .args(["describe", "--always", "--dirty", "--tags"])
        .current_dir(env!("CARGO_MANIFEST_DIR"))
        .output()
        .ok()
        .filter(|o| o.status.success())
        .map(|o| format!("{pkg}-g{}", String::from_utf8_lossy(&o.stdout).trim()))
        .unwrap_or(pkg)
}

/// Executes the experiment and writes its files plus `manifest.txt`.
pub fn run(cfg: &ExperimentConfig) -> Result<Vec<String>> {
    let start = Instant::now();
    let mut out = Outputs::new(&cfg.out)?;
    let summary = match cfg.kind {
        Kind::Geometry => run_geometry(cfg, &mut out)?,
        Kind::Spectrum => run_spectrum(cfg, &mut out)?,
        Kind::Ids => run_ids(cfg, &mut out)?,
        Kind::Lifschitz => run_lifschitz(cfg, &mut out)?,
        Kind::Survival => run_survival(cfg, &mut out)?,
        Kind::Obstacles => run_obstacles(cfg, &mut out)?,
        Kind::Probes => run_probes(cfg, &mut out)?,
    };
    let wall = start.elapsed().as_secs_f64();
    let mut files = out.files.clone();
    out.write("manifest.txt", |w| {
        writeln!(w, "version = {}", version_string())?;
        for (k, v) in &cfg.resolved {
            writeln!(w, "{k} = {v}")?;
        }
        writeln!(w, "files = {}", files.join(","))?;
        writeln!(w, "wall_seconds = {wall:.3}")?;
        Ok(())
    })?;
    files.push("manifest.txt".into());
    print!("{summary}");
    Ok(files)
}

fn run_geometry(cfg: &ExperimentConfig, out: &mut Outputs) -> Result<String> {
    let g = build_graph(cfg.m, cfg.n)?;
    out.write("graph.txt", |w| g.dump(w))?;
    let report = geometry_report(&g).render();
    out.write("geometry.txt", |w| w.write_all(report.as_bytes()))?;
    Ok(report)
}

fn run_spectrum(cfg: &ExperimentConfig, out: &mut Outputs) -> Result<String> {
    let g = Arc::new(build_graph(cfg.m, cfg.n)?);
    let gen = DiscreteGenerator::new(g.clone(), cfg.mode);
    let op = SubordinateOperator::new(&gen, &cfg.phi, cfg.order)?;
    let free = op.spectrum(&vec![0.0; g.num_vertices()], false)?;
    out.write("spectrum.csv", |w| free.write_csv(w))?;
    let exp = cfg.experiment(g.clone());
    let host = exp.host()?;
    let cloud = exp.cloud(0)?;
    let v = exp.potential(&cloud, host.as_ref())?;
    let with_v = op.spectrum(&v, false)?;
    out.write("spectrum_potential.csv", |w| with_v.write_csv(w))?;
    out.write("cloud.csv", |w| cloud.write_csv(&g, w, true))?;
    let t = cfg.tgrid.a;
    let kernel = operators::subordinate_kernel(&gen, &cfg.phi, cfg.order, t)?;
    out.write("kernel.csv", |w| kernel.write_csv(w))?;
    Ok(format!(
        "spectrum {{ dim: {}, lowest_free: {}, lowest_potential: {}, kernel_t: {} }}\n",
        free.len(),
        fmt17(free.lowest()),
        fmt17(with_v.lowest()),
        fmt17(t)
    ))
}

fn ids_grid(ids: &ids::EmpiricalIds) -> Vec<f64> {
    let pooled = ids.pooled();
    match (pooled.first(), pooled.last()) {
        (Some(&lo), Some(&hi)) if lo > 0.0 && hi > lo => log_grid(lo, hi, 64),
        _ => Vec::new(),
    }
}

fn run_ids(cfg: &ExperimentConfig, out: &mut Outputs) -> Result<String> {
    let cert = subordinators::classify(&cfg.phi);
    if cfg.check == Check::Upper && cert.regime == Regime::None {
        return Err(LabError::NotApplicable(format!("{} is in regime none; the upper bound does not cover this case", cfg.phi)));
    }
    let g = Arc::new(build_graph(cfg.m, cfg.n)?);
    let exp = cfg.experiment(g.clone());
    let ts = cfg.tgrid.points();
    let (curve, ids) = ids::annealed_laplace(&exp, &ts, cfg.reps)?;
    let mut lower = None;
    let mut upper = None;
    match cfg.check {
        Check::None => {}
        Check::Lower => {
            let theta = cfg.theta.ok_or_else(|| LabError::Config("lower certificate needs theta".into()))?;
            let lam = |level: u32| operators::free_dirichlet_ground(level);
            let rhs = ts
                .iter()
                .map(|&t| match ids::lower_certificate(&cfg.phi, cert.beta, &cfg.profile, theta, cfg.nu, t, &g, &lam) {
                    Ok(p) => Ok(p.rhs),
                    Err(LabError::NotApplicable(_)) => Ok(f64::NAN),
                    Err(e) => Err(e),
                })
                .collect::<Result<Vec<_>>>()?;
            lower = Some(rhs);
        }
        Check::Upper => {
            let theta = cfg.theta.unwrap_or(f64::INFINITY);
            let gen = exp.generator();
            let rhs = ts
                .iter()
                .map(|&t| {
                    let a = if theta.is_finite() { t.powf(1.0 / (DIM_H + theta)) } else { 1.0 };
                    let c = ids::kernel_sup(&gen, &cfg.phi, cfg.order, t)?;
                    Ok(ids::upper_long_range(&g, &cfg.profile, cfg.nu, t, a, c)?.rhs)
                })
                .collect::<Result<Vec<_>>>()?;
            upper = Some(rhs);
        }
    }
    out.write("laplace.csv", |w| curve.write_csv(w, lower.as_deref(), upper.as_deref()))?;
    let xs = ids_grid(&ids);
    out.write("ids.csv", |w| ids.write_csv(w, &xs))?;
    let spectra_rows = ids.spectra.iter().map(|s| s.len()).sum::<usize>();
    Ok(format!(
        "ids {{ replicates: {}, eigenvalues: {}, t_points: {}, check: {:?} }}\n",
        cfg.reps,
        spectra_rows,
        ts.len(),
        cfg.check
    ))
}

fn run_lifschitz(cfg: &ExperimentConfig, out: &mut Outputs) -> Result<String> {
    let g = Arc::new(build_graph(cfg.m, cfg.n)?);
    let exp = cfg.experiment(g);
    let ts = cfg.tgrid.points();
    let (curve, ids) = ids::annealed_laplace(&exp, &ts, cfg.reps)?;
    out.write("laplace.csv", |w| curve.write_csv(w, None, None))?;
    let xs = ids_grid(&ids);
    out.write("ids.csv", |w| ids.write_csv(w, &xs))?;
    let fit = match cfg.fit {
        FitMode::Laplace => ids::lifschitz_fit_laplace(&curve, cfg.window.unwrap_or((4.0, 64.0)), cfg.resamples, cfg.seed)?,
        FitMode::Measure => {
            let window = match cfg.window {
                Some(w) => w,
                None => ids.tail_window(cfg.min_count, (-1f64).exp())?,
            };
            ids::lifschitz_fit_measure(&ids, window, 12, cfg.resamples, cfg.seed)?
        }
    };
    let gamma = cfg.phi.gamma();
    let (lap, meas) = gamma.map(ids::target_slopes).unwrap_or((f64::NAN, f64::NAN));
    let mut report = fit.report(&format!("seed={} replicates=0..{}", cfg.seed, cfg.reps));
    let _ = writeln!(
        report,
        "targets {{ laplace: {}, measure: {} }}\ncaveat: finite volume G_{} at level {}; slopes are pre-asymptotic estimates",
        fmt17(lap),
        fmt17(meas),
        cfg.m,
        cfg.n
    );
    out.write("fit.txt", |w| w.write_all(report.as_bytes()))?;
    Ok(report)
}

fn run_survival(cfg: &ExperimentConfig, out: &mut Outputs) -> Result<String> {
    let theta = cfg.theta.ok_or_else(|| LabError::Config("survival bounds need a decay exponent theta".into()))?;
    let beta = subordinators::classify(&cfg.phi).beta;
    let ts = cfg.tgrid.points();
    let cert = montecarlo::survival_bound_check(&cfg.phi, beta, &cfg.profile, theta, cfg.nu, &ts, cfg.n, cfg.paths, cfg.seed)?;
    out.write("survival.csv", |w| cert.write_csv(w))?;
    let lower = cert.rows.iter().filter(|r| r.lower_holds(2.0)).count();
    let upper = cert.rows.iter().filter(|r| r.upper_holds(2.0)).count();
    Ok(format!(
        "survival {{ host_M: {}, start_vertex: {}, rows: {}, lower_holds: {lower}, upper_holds: {upper} }}\n",
        cert.host_m,
        cert.x,
        cert.rows.len()
    ))
}

fn run_obstacles(cfg: &ExperimentConfig, out: &mut Outputs) -> Result<String> {
    let base = cfg.obstacle_params(cfg.scales[0]);
    let report = obstacles::enlargement_sweep(&base, &cfg.scales, cfg.configs, cfg.seed)?;
    out.write("obstacles.csv", |w| report.write_csv(w))?;
    let mut s = format!("obstacles {{\n  C_d: {}\n", fmt17(report.c_d));
    for &sc in &cfg.scales {
        let eps = 2f64.powi(-(sc as i32));
        let _ = writeln!(
            s,
            "  eps {}: violating_fraction {}, bad_volume_holds {}",
            fmt17(eps),
            fmt17(report.violating_fraction(eps)),
            fmt17(report.bad_volume_fraction(cfg.delta))
        );
    }
    s.push_str("}\n");
    Ok(s)
}

fn run_probes(cfg: &ExperimentConfig, out: &mut Outputs) -> Result<String> {
    let base = cfg.obstacle_params(cfg.scales[0]);
    base.validate()?;
    let gamma = base.gamma()?;
    let (amp, a0) = cfg.profile.lower_plateau().ok_or_else(|| LabError::Config("probes need a profile plateau".into()))?;
    let finest = cfg.n.saturating_sub(cfg.scales.iter().copied().min().unwrap_or(0));
    let level = obstacles::recipe_level(a0, base.b(), finest)
        .ok_or_else(|| LabError::Capacity(format!("no recipe level resolves a0/2 = {} within the dense cap", a0 / 2.0)))?;
    let recipe = obstacles::recipe(&cfg.phi, gamma, a0, amp, base.b(), level, cfg.seed)?;
    let graph = build_graph(0, cfg.n)?;
    let mut radii = Vec::new();
    for &sc in &cfg.scales {
        radii.extend(cfg.obstacle_params(sc).test_radii());
    }
    let c_d = obstacles::doubling_constant(&graph, &radii);
    let mut text = String::new();
    for &sc in &cfg.scales {
        let report = obstacles::probe_assumptions(&cfg.obstacle_params(sc), &recipe, c_d, cfg.seed)?;
        text.push_str(&report.render());
    }
    out.write("probes.txt", |w| w.write_all(text.as_bytes()))?;
    Ok(text)
}

/// Command-line flags; each maps to the config key of the same name.
#[derive(Debug, Clone, Default, Args)]
pub struct Flags {
    /// Config file with `key = value` lines.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Experiment kind checked by `validate`; ignored by the other commands.
    #[arg(long)]
    pub kind: Option<String>,
    #[arg(long = "M")]
    pub m: Option<String>,
    #[arg(long)]
    pub n: Option<String>,
    #[arg(long)]
    pub phi: Option<String>,
    #[arg(long)]
    pub profile: Option<String>,
    #[arg(long)]
    pub nu: Option<String>,
    /// Log-spaced grid `a:b:steps`.
    #[arg(long)]
    pub tgrid: Option<String>,
    #[arg(long)]
    pub reps: Option<String>,
    #[arg(long)]
    pub seed: Option<String>,
    #[arg(long)]
    pub out: Option<String>,
    #[arg(long)]
    pub threads: Option<String>,
    /// `dirichlet` or `reflected`.
    #[arg(long)]
    pub mode: Option<String>,
    #[arg(long)]
    pub order: Option<String>,
    #[arg(long)]
    pub periodize: Option<String>,
    /// `none`, `lower` or `upper`.
    #[arg(long)]
    pub check: Option<String>,
    /// `laplace` or `measure`.
    #[arg(long)]
    pub fit: Option<String>,
    /// Fit window `lo:hi`.
    #[arg(long)]
    pub window: Option<String>,
    #[arg(long = "min_count", alias = "min-count")]
    pub min_count: Option<String>,
    #[arg(long)]
    pub resamples: Option<String>,
    #[arg(long)]
    pub theta: Option<String>,
    #[arg(long)]
    pub paths: Option<String>,
    /// Comma-separated `ε = 2^-s` exponents.
    #[arg(long)]
    pub scales: Option<String>,
    #[arg(long)]
    pub a: Option<String>,
    #[arg(long = "b_exp", alias = "b-exp")]
    pub b_exp: Option<String>,
    #[arg(long)]
    pub delta: Option<String>,
    #[arg(long = "K")]
    pub k_cap: Option<String>,
    #[arg(long = "R")]
    pub r_cap: Option<String>,
    #[arg(long)]
    pub r0: Option<String>,
    #[arg(long)]
    pub configs: Option<String>,
}

impl Flags {
    fn pairs(&self) -> Vec<(&'static str, &Option<String>)> {
        vec![
            ("M", &self.m),
            ("n", &self.n),
            ("phi", &self.phi),
            ("profile", &self.profile),
            ("nu", &self.nu),
            ("tgrid", &self.tgrid),
            ("reps", &self.reps),
            ("seed", &self.seed),
            ("out", &self.out),
            ("threads", &self.threads),
            ("mode", &self.mode),
            ("order", &self.order),
            ("periodize", &self.periodize),
            ("check", &self.check),
            ("fit", &self.fit),
            ("window", &self.window),
            ("min_count", &self.min_count),
            ("resamples", &self.resamples),
            ("theta", &self.theta),
            ("paths", &self.paths),
            ("scales", &self.scales),
            ("a", &self.a),
            ("b_exp", &self.b_exp),
            ("delta", &self.delta),
            ("K", &self.k_cap),
            ("R", &self.r_cap),
            ("r0", &self.r0),
            ("configs", &self.configs),
        ]
    }

    /// Config file contents overridden by the flags that were given.
    pub fn raw(&self, kind: Option<Kind>) -> Result<BTreeMap<String, String>> {
        let mut map = match &self.config {
            Some(p) => parse_config_text(&fs::read_to_string(p)?)?,
            None => BTreeMap::new(),
        };
        for (k, v) in self.pairs() {
            if let Some(v) = v {
                map.insert(k.to_string(), v.clone());
            }
        }
        match kind {
            Some(kind) => {
                map.insert("kind".into(), kind.name().into());
            }
            None => {
                let k = self.kind.clone().or_else(|| map.get("kind").cloned()).unwrap_or_else(|| "ids".into());
                map.insert("kind".into(), k);
            }
        }
        Ok(map)
    }
}

#[derive(Debug, Parser)]
#[command(name = "lab", version, about = "Subordinate Brownian motion on gasket graphs with Poissonian potentials")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Graph dump and invariant report.
    Geometry(Flags),
    /// Free and perturbed spectra, one kernel.
    Spectrum(Flags),
    /// Annealed Laplace transform and empirical IDS, with optional bounds.
    Ids(Flags),
    /// Lifschitz exponent fit.
    Lifschitz(Flags),
    /// Survival estimates against the survival bounds.
    Survival(Flags),
    /// Enlargement-of-obstacles eigenvalue comparison.
    Obstacles(Flags),
    /// Assumption probes across scales.
    Probes(Flags),
    /// Dry-run report; never fails.
    Validate(Flags),
}

/// Entry point of the binary; returns the process exit code.
pub fn main_with(cli: Cli) -> i32 {
    let (kind, flags) = match cli.command {
        Command::Geometry(f) => (Kind::Geometry, f),
        Command::Spectrum(f) => (Kind::Spectrum, f),
        Command::Ids(f) => (Kind::Ids, f),
        Command::Lifschitz(f) => (Kind::Lifschitz, f),
        Command::Survival(f) => (Kind::Survival, f),
        Command::Obstacles(f) => (Kind::Obstacles, f),
        Command::Probes(f) => (Kind::Probes, f),
        Command::Validate(f) => {
            let raw = match f.raw(None) {
                Ok(r) => r,
                Err(e) => {
                    println!("status: invalid\nrefusal: {e}");
                    return 0;
                }
            };
            print!("{}", validate(&raw));
            return 0;
        }
    };
    let result = flags.raw(Some(kind)).and_then(|raw| ExperimentConfig::from_map(&raw)).and_then(|cfg| {
        if let Some(t) = cfg.threads {
            rayon::ThreadPoolBuilder::new().num_threads(t).build_global().ok();
        }
        run(&cfg)
    });
    match result {
        Ok(_) => 0,
        Err(e) => {
            eprintln!("error[{}]: {e}", e.exit_code());
            e.exit_code()
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn raw(pairs: &[(&str, &str)]) -> BTreeMap<String, String> {
        pairs.iter().map(|(k, v)| (k.to_string(), v.to_string())).collect()
    }

    #[test]
    fn config_file_parsing() {
        let text = "[gasket]\nM = 1\nn = 3 # level\n\n[run]\nkind = geometry\n";
        let map = parse_config_text(text).unwrap();
        assert_eq!(map["M"], "1");
        assert_eq!(map["n"], "3");
        assert!(parse_config_text("M = 1\nM = 2\n").is_err());
        assert!(parse_config_text("just words\n").is_err());
    }

    #[test]
    fn unknown_keys_and_bad_values_rejected() {
        let e = ExperimentConfig::from_map(&raw(&[("kind", "geometry"), ("colour", "red")])).unwrap_err();
        assert_eq!(e.exit_code(), 2);
        let e = ExperimentConfig::from_map(&raw(&[("kind", "ids"), ("tgrid", "4:1:3")])).unwrap_err();
        assert_eq!(e.exit_code(), 2);
        let e = ExperimentConfig::from_map(&raw(&[("kind", "ids"), ("nu", "-1")])).unwrap_err();
        assert_eq!(e.exit_code(), 2);
    }

    #[test]
    fn dense_cap_refusal() {
        let e = ExperimentConfig::from_map(&raw(&[("kind", "ids"), ("M", "2"), ("n", "6")])).unwrap_err();
        assert_eq!(e.exit_code(), 3);
        let report = validate(&raw(&[("kind", "ids"), ("M", "2"), ("n", "6")]));
        assert!(report.contains("status: invalid") && report.contains("dense cap"));
    }

    #[test]
    fn relativistic_upper_refused() {
        let report = validate(&raw(&[("kind", "ids"), ("phi", "relativistic:alpha=0.5,theta=1"), ("check", "upper")]));
        assert!(report.contains("regime none"), "{report}");
        assert!(report.contains("status: refused"));
    }

    #[test]
    fn regime_prediction_echoed() {
        let report = validate(&raw(&[("kind", "ids"), ("phi", "drift:b=1"), ("profile", "power:K=1,theta=1")]));
        assert!(report.contains("theta: 1"));
        assert!(report.contains("(ii) long range"));
        let report = validate(&raw(&[("kind", "ids"), ("phi", "drift:b=1"), ("profile", "power:K=1,theta=3")]));
        assert!(report.contains("(i) short range"));
    }
}
