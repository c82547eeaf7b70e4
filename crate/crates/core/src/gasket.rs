//! Level-`n` graph approximations of the gasket triangles `G_M`.
//!
//! Points are stored in integer lattice coordinates `(i, j)` meaning
//! `(i e1 + j e2) 2^{-n}` with `e1 = (1, 0)` and `e2 = (1/2, √3/2)`. The
//! triangle `G_M` has side `2^{M+n}` in these units and is split into
//! `3^{M+n}` upward cells of side one. Cells of the gasket never share an
//! edge, only corners, so the graph has `3^{M+n+1}` edges.

use std::collections::{HashMap, HashSet};
use std::io::Write;
use std::sync::OnceLock;

use num_rational::Ratio;

use crate::error::{LabError, Result};

/// Lattice coordinates in units of `2^{-n}` along `e1`, `e2`.
pub type Lattice = (u64, u64);

const OFFSETS: [Lattice; 3] = [(0, 0), (1, 0), (0, 1)];

/// Default cap on the number of resolution cells `3^{M+n}`.
pub const DEFAULT_MAX_CELLS: u64 = 3u64.pow(13);

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Label {
    A,
    B,
    C,
}

impl Label {
    pub fn from_index(k: i64) -> Label {
        match k.rem_euclid(3) {
            0 => Label::A,
            1 => Label::B,
            _ => Label::C,
        }
    }

    pub fn letter(self) -> char {
        match self {
            Label::A => 'a',
            Label::B => 'b',
            Label::C => 'c',
        }
    }
}

/// Label of the unit-lattice point `I e1 + J e2`: the cyclic permutation
/// `(a b c)` applied `I` times after its inverse applied `J` times.
pub fn unit_label(i: u64, j: u64) -> Label {
    Label::from_index((i % 3) as i64 - (j % 3) as i64)
}

/// Whether the upward triangle with lower-left corner `(I, J)` (in units of
/// its own side) belongs to the infinite gasket.
pub fn is_gasket_triangle(i: u64, j: u64) -> bool {
    i & j == 0
}

/// Address of a resolution cell inside `G_M`.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct CellAddress {
    /// Index of the size-1 triangle inside `G_M`, `0 <= copy < 3^M`.
    pub copy: u64,
    /// Digits in `{1, 2, 3}` selecting the maps `x/2`, `x/2 + e1/2`, `x/2 + e2/2`.
    pub word: Vec<u8>,
}

impl CellAddress {
    pub fn from_index(m: u32, n: u32, index: u64) -> CellAddress {
        let per_copy = 3u64.pow(n);
        let copy = index / per_copy;
        let mut rest = index % per_copy;
        let mut word = vec![0u8; n as usize];
        for slot in word.iter_mut().rev() {
            *slot = (rest % 3) as u8 + 1;
            rest /= 3;
        }
        debug_assert!(copy < 3u64.pow(m));
        CellAddress { copy, word }
    }

    pub fn index(&self) -> u64 {
        let n = self.word.len() as u32;
        let mut idx = self.copy;
        for &d in &self.word {
            idx = idx * 3 + (d - 1) as u64;
        }
        debug_assert!(idx / 3u64.pow(n) == self.copy);
        idx
    }

    /// Lower-left corner of the cell in lattice units of `2^{-n}`.
    pub fn lower_left(&self, m: u32) -> Lattice {
        let n = self.word.len() as u32;
        let (mut i, mut j) = (0u64, 0u64);
        let mut c = self.copy;
        let mut copy_digits = vec![0u64; m as usize];
        for slot in copy_digits.iter_mut().rev() {
            *slot = c % 3;
            c /= 3;
        }
        for (k, &d) in copy_digits.iter().enumerate() {
            let s = 1u64 << (m as u64 - 1 - k as u64 + n as u64);
            i += OFFSETS[d as usize].0 * s;
            j += OFFSETS[d as usize].1 * s;
        }
        for (k, &d) in self.word.iter().enumerate() {
            let s = 1u64 << (n as u64 - 1 - k as u64);
            i += OFFSETS[(d - 1) as usize].0 * s;
            j += OFFSETS[(d - 1) as usize].1 * s;
        }
        (i, j)
    }

    /// Corners of the cell: lower-left, lower-right, top.
    pub fn corners(&self, m: u32) -> [Lattice; 3] {
        let (i, j) = self.lower_left(m);
        [(i, j), (i + 1, j), (i, j + 1)]
    }

    pub fn word_string(&self) -> String {
        self.word.iter().map(|d| char::from(b'0' + d)).collect()
    }
}

/// Lower-left corners of all size-`2^{-depth}`-subdivision cells of a unit
/// triangle, in address order, in units of the cell side.
fn refine(depth: u32) -> Vec<Lattice> {
    let mut cells = vec![(0u64, 0u64)];
    for _ in 0..depth {
        let mut next = Vec::with_capacity(cells.len() * 3);
        for &(i, j) in &cells {
            for &(di, dj) in &OFFSETS {
                next.push((2 * i + di, 2 * j + dj));
            }
        }
        cells = next;
    }
    cells
}

/// Level-`n` approximation of `G_M`.
#[derive(Debug)]
pub struct GasketGraph {
    m: u32,
    n: u32,
    coords: Vec<Lattice>,
    index: HashMap<Lattice, usize>,
    cells: Vec<[usize; 3]>,
    edges: Vec<(usize, usize)>,
    nbr_start: Vec<usize>,
    nbrs: Vec<usize>,
    incident: Vec<u8>,
    masses: Vec<f64>,
    boundary: [usize; 3],
    hops: Vec<OnceLock<Vec<u32>>>,
}

/// Builds the level-`n` graph of `G_M` with the default size budget.
pub fn build_graph(m: u32, n: u32) -> Result<GasketGraph> {
    build_graph_with_budget(m, n, DEFAULT_MAX_CELLS)
}

pub fn build_graph_with_budget(m: u32, n: u32, max_cells: u64) -> Result<GasketGraph> {
    let depth = m + n;
    let cells_needed = 3u128.pow(depth);
    if cells_needed > max_cells as u128 || depth > 30 {
        return Err(LabError::Capacity(format!(
            "G_{m} at level {n} needs 3^{depth} cells, budget is {max_cells}"
        )));
    }
    let lower_left = refine(depth);
    let mut coords = Vec::new();
    let mut index = HashMap::new();
    let mut cells = Vec::with_capacity(lower_left.len());
    let mut incident = Vec::new();
    for &(i, j) in &lower_left {
        let mut tri = [0usize; 3];
        for (slot, &(di, dj)) in tri.iter_mut().zip(OFFSETS.iter()) {
            let p = (i + di, j + dj);
            let id = *index.entry(p).or_insert_with(|| {
                coords.push(p);
                incident.push(0u8);
                coords.len() - 1
            });
            incident[id] += 1;
            *slot = id;
        }
        cells.push(tri);
    }
    let nv = coords.len();
    let mut edges = Vec::with_capacity(cells.len() * 3);
    let mut adj: Vec<Vec<usize>> = vec![Vec::with_capacity(4); nv];
    for tri in &cells {
        for &(a, b) in &[(tri[0], tri[1]), (tri[1], tri[2]), (tri[0], tri[2])] {
            edges.push((a.min(b), a.max(b)));
            adj[a].push(b);
            adj[b].push(a);
        }
    }
    let mut nbr_start = Vec::with_capacity(nv + 1);
    let mut nbrs = Vec::with_capacity(edges.len() * 2);
    nbr_start.push(0);
    for list in &adj {
        nbrs.extend_from_slice(list);
        nbr_start.push(nbrs.len());
    }
    let side = 1u64 << depth;
    let boundary = [index[&(0, 0)], index[&(side, 0)], index[&(0, side)]];
    let cell_mass = 1.0 / 3f64.powi(n as i32 + 1);
    let masses = incident.iter().map(|&k| k as f64 * cell_mass).collect();
    let hops = (0..nv).map(|_| OnceLock::new()).collect();
    Ok(GasketGraph {
        m,
        n,
        coords,
        index,
        cells,
        edges,
        nbr_start,
        nbrs,
        incident,
        masses,
        boundary,
        hops,
    })
}

impl GasketGraph {
    pub fn m(&self) -> u32 {
        self.m
    }

    pub fn n(&self) -> u32 {
        self.n
    }

    pub fn num_vertices(&self) -> usize {
        self.coords.len()
    }

    pub fn num_edges(&self) -> usize {
        self.edges.len()
    }

    pub fn num_cells(&self) -> usize {
        self.cells.len()
    }

    /// Side of `G_M` in lattice units.
    pub fn side_units(&self) -> u64 {
        1u64 << (self.m + self.n)
    }

    /// Length of one lattice step, `2^{-n}`.
    pub fn step(&self) -> f64 {
        1.0 / (1u64 << self.n) as f64
    }

    pub fn coords(&self, v: usize) -> Lattice {
        self.coords[v]
    }

    pub fn planar(&self, v: usize) -> (f64, f64) {
        let (i, j) = self.coords[v];
        let h = self.step();
        ((i as f64 + 0.5 * j as f64) * h, j as f64 * 0.75f64.sqrt() * h)
    }

    pub fn vertex_at(&self, p: Lattice) -> Option<usize> {
        self.index.get(&p).copied()
    }

    pub fn neighbors(&self, v: usize) -> &[usize] {
        &self.nbrs[self.nbr_start[v]..self.nbr_start[v + 1]]
    }

    pub fn degree(&self, v: usize) -> usize {
        self.nbr_start[v + 1] - self.nbr_start[v]
    }

    pub fn edges(&self) -> &[(usize, usize)] {
        &self.edges
    }

    pub fn cells(&self) -> &[[usize; 3]] {
        &self.cells
    }

    pub fn cell_address(&self, k: usize) -> CellAddress {
        CellAddress::from_index(self.m, self.n, k as u64)
    }

    pub fn incident_cells(&self, v: usize) -> u8 {
        self.incident[v]
    }

    /// Exact vertex mass: each cell of mass `3^{-n}` is split equally among
    /// its three corners.
    pub fn vertex_mass(&self, v: usize) -> Ratio<u64> {
        Ratio::new(self.incident[v] as u64, 3u64.pow(self.n + 1))
    }

    pub fn total_mass(&self) -> Ratio<u64> {
        let num: u64 = self.incident.iter().map(|&k| k as u64).sum();
        Ratio::new(num, 3u64.pow(self.n + 1))
    }

    pub fn masses(&self) -> &[f64] {
        &self.masses
    }

    pub fn mass(&self, v: usize) -> f64 {
        self.masses[v]
    }

    /// Corners of `G_M`: origin, `2^M e1`, `2^M e2`.
    pub fn boundary(&self) -> [usize; 3] {
        self.boundary
    }

    pub fn is_boundary(&self, v: usize) -> bool {
        self.boundary.contains(&v)
    }

    /// Largest `k <= M` with the vertex in `V_k`, the corner set of the
    /// size-`2^k` triangles; negative values for sub-unit lattice points.
    pub fn vertex_scale(&self, v: usize) -> i32 {
        let (i, j) = self.coords[v];
        let tz = (i | j).trailing_zeros().min(self.m + self.n);
        tz as i32 - self.n as i32
    }

    /// Label of a vertex of `V_0`.
    pub fn label(&self, v: usize) -> Option<Label> {
        let (i, j) = self.coords[v];
        let unit = 1u64 << self.n;
        if i % unit == 0 && j % unit == 0 {
            Some(unit_label(i / unit, j / unit))
        } else {
            None
        }
    }

    /// Label of `v` as a corner of the size-`2^k` triangles, if `v` is one.
    pub fn label_at(&self, v: usize, k: u32) -> Option<Label> {
        if k > self.m || self.vertex_scale(v) < k as i32 {
            return None;
        }
        self.label(v)
    }

    /// Hop distances from `x` to every vertex (cached).
    pub fn hops_from(&self, x: usize) -> &[u32] {
        self.hops[x].get_or_init(|| self.bfs(x))
    }

    /// Hop distances from `x` to every vertex, recomputed on each call.
    pub fn bfs(&self, x: usize) -> Vec<u32> {
        let mut dist = vec![u32::MAX; self.num_vertices()];
        let mut queue = std::collections::VecDeque::new();
        dist[x] = 0;
        queue.push_back(x);
        while let Some(v) = queue.pop_front() {
            let dv = dist[v] + 1;
            for &w in self.neighbors(v) {
                if dist[w] == u32::MAX {
                    dist[w] = dv;
                    queue.push_back(w);
                }
            }
        }
        dist
    }

    /// Vertices within `max_hops` of `x` with their hop distance, without
    /// touching the cache.
    pub fn hops_within(&self, x: usize, max_hops: u32) -> Vec<(usize, u32)> {
        let mut seen: HashMap<usize, u32> = HashMap::new();
        let mut out = vec![(x, 0)];
        seen.insert(x, 0);
        let mut head = 0;
        while head < out.len() {
            let (v, h) = out[head];
            head += 1;
            if h == max_hops {
                continue;
            }
            for &w in self.neighbors(v) {
                if let std::collections::hash_map::Entry::Vacant(e) = seen.entry(w) {
                    e.insert(h + 1);
                    out.push((w, h + 1));
                }
            }
        }
        out
    }

    /// Path metric `d(x, y)` = hops times `2^{-n}`.
    pub fn distance(&self, x: usize, y: usize) -> f64 {
        self.hops_from(x)[y] as f64 * self.step()
    }

    /// Largest hop count inside a closed ball of radius `r`.
    pub fn hop_radius(&self, r: f64) -> u32 {
        let h = r * (1u64 << self.n) as f64;
        (h + 1e-9).floor().max(0.0) as u32
    }

    /// Mass of the closed metric ball `B(x, r)`.
    pub fn ball_measure(&self, x: usize, r: f64) -> f64 {
        let k = self.hop_radius(r);
        self.hops_from(x)
            .iter()
            .zip(&self.masses)
            .filter(|(&h, _)| h <= k)
            .map(|(_, &m)| m)
            .sum()
    }

    /// Vertices of the closed ball `B(x, r)`.
    pub fn ball(&self, x: usize, r: f64) -> Vec<usize> {
        let k = self.hop_radius(r);
        self.hops_from(x)
            .iter()
            .enumerate()
            .filter(|(_, &h)| h <= k)
            .map(|(v, _)| v)
            .collect()
    }

    /// Mass-weighted sum of `d(x, y)^{-d-θ}` over `d(x, y) > a`.
    pub fn tail_integral(&self, x: usize, a: f64, theta: f64) -> f64 {
        let k = self.hop_radius(a);
        let h = self.step();
        self.hops_from(x)
            .iter()
            .zip(&self.masses)
            .filter(|(&hop, _)| hop > k)
            .map(|(&hop, &m)| m * (hop as f64 * h).powf(-crate::DIM_H - theta))
            .sum()
    }

    /// Writes the text graph dump (`v`, `e`, `b`, `l` records).
    pub fn dump<W: Write>(&self, out: &mut W) -> std::io::Result<()> {
        for v in 0..self.num_vertices() {
            let (x, y) = self.planar(v);
            let mass = self.vertex_mass(v);
            writeln!(out, "v {} {:.17e} {:.17e} {}/{}", v, x, y, mass.numer(), mass.denom())?;
        }
        for &(a, b) in &self.edges {
            writeln!(out, "e {a} {b}")?;
        }
        for b in self.boundary {
            writeln!(out, "b {b}")?;
        }
        for v in 0..self.num_vertices() {
            for k in 0..=self.m {
                if let Some(l) = self.label_at(v, k) {
                    writeln!(out, "l {} {} {}", v, k, l.letter())?;
                }
            }
        }
        Ok(())
    }

    /// Size-`2^k` gasket triangles (lower-left corners in lattice units)
    /// that contain the vertex. Corners of such triangles lie in up to three.
    pub fn triangles_containing(&self, v: usize, k: i32) -> Vec<Lattice> {
        triangles_containing(self.coords[v], k + self.n as i32)
    }
}

/// Upward gasket triangles of side `2^e` lattice units containing `p`.
pub fn triangles_containing(p: Lattice, e: i32) -> Vec<Lattice> {
    if e <= 0 {
        return vec![p];
    }
    let s = 1u64 << e;
    let (ci, cj) = (p.0 / s, p.1 / s);
    let mut out = Vec::with_capacity(3);
    let mut candidates = vec![(ci, cj)];
    if p.0 % s == 0 && ci > 0 {
        candidates.push((ci - 1, cj));
    }
    if p.1 % s == 0 && cj > 0 {
        candidates.push((ci, cj - 1));
    }
    for (ti, tj) in candidates {
        if !is_gasket_triangle(ti, tj) {
            continue;
        }
        let (li, lj) = (p.0 as i128 - (ti * s) as i128, p.1 as i128 - (tj * s) as i128);
        if li >= 0 && lj >= 0 && li + lj <= s as i128 {
            out.push((ti * s, tj * s));
        }
    }
    out
}

/// Whether lattice point `p` lies in the triangle with lower-left corner
/// `ll` and side `s` lattice units.
pub fn in_triangle(p: Lattice, ll: Lattice, s: u64) -> bool {
    p.0 >= ll.0 && p.1 >= ll.1 && (p.0 - ll.0) + (p.1 - ll.1) <= s
}

/// Corner permutation of the size-`s` triangle at `ll` onto `G_M`:
/// entry `k` is the index (0 origin, 1 `e1` corner, 2 `e2` corner) of the
/// `G_M` corner carrying the same label as triangle corner `k`.
fn corner_map(ll: Lattice, s: u64, unit: u64) -> [usize; 3] {
    let tri = [ll, (ll.0 + s, ll.1), (ll.0, ll.1 + s)];
    let target = [(0, 0), (s, 0), (0, s)];
    let target_labels: Vec<Label> = target.iter().map(|&(i, j)| unit_label(i / unit, j / unit)).collect();
    let mut map = [0usize; 3];
    for (k, &(i, j)) in tri.iter().enumerate() {
        let l = unit_label(i / unit, j / unit);
        map[k] = target_labels.iter().position(|&t| t == l).expect("labels are a bijection");
    }
    map
}

/// `π_M` on lattice points of a level-`n` graph: barycentric coordinates in
/// the containing size-`2^M` triangle mapped onto the equally labelled
/// corners of `G_M`.
pub fn project_lattice(p: Lattice, m: u32, n: u32) -> Lattice {
    let s = 1u64 << (m + n);
    let unit = 1u64 << n;
    if p.0 % s == 0 && p.1 % s == 0 {
        let l = unit_label(p.0 / unit, p.1 / unit);
        let corners = [(0, 0), (s, 0), (0, s)];
        return *corners
            .iter()
            .find(|&&(i, j)| unit_label(i / unit, j / unit) == l)
            .expect("labels are a bijection");
    }
    let ll = ((p.0 / s) * s, (p.1 / s) * s);
    let (li, lj) = (p.0 - ll.0, p.1 - ll.1);
    debug_assert!(li + lj <= s, "point outside the gasket");
    let weights = [s - li - lj, li, lj];
    let map = corner_map(ll, s, unit);
    let mut out = (0u64, 0u64);
    for k in 0..3 {
        match map[k] {
            1 => out.0 += weights[k],
            2 => out.1 += weights[k],
            _ => {}
        }
    }
    out
}

/// Fiber `π_M^{-1}(y) ∩ G_{M+k}` of a lattice point `y ∈ G_M`.
pub fn fiber(y: Lattice, m: u32, k: u32, n: u32) -> Vec<Lattice> {
    let s = 1u64 << (m + n);
    let unit = 1u64 << n;
    let target = [s - y.0 - y.1, y.0, y.1];
    let mut seen = HashSet::new();
    let mut out = Vec::new();
    for (ti, tj) in refine(k) {
        let ll = (ti * s, tj * s);
        let map = corner_map(ll, s, unit);
        let w = [target[map[0]], target[map[1]], target[map[2]]];
        let p = (ll.0 + w[1], ll.1 + w[2]);
        debug_assert_eq!(w[0] + w[1] + w[2], s);
        if seen.insert(p) {
            out.push(p);
        }
    }
    out
}

/// Graph-level projection from a host graph of scale `M + k` onto a graph
/// of scale `M` at the same resolution.
pub fn project_vertex(host: &GasketGraph, target: &GasketGraph, v: usize) -> Result<usize> {
    if host.n() != target.n() || host.m() < target.m() {
        return Err(LabError::Config(format!(
            "cannot project G_{} level {} onto G_{} level {}",
            host.m(),
            host.n(),
            target.m(),
            target.n()
        )));
    }
    let p = project_lattice(host.coords(v), target.m(), target.n());
    target
        .vertex_at(p)
        .ok_or_else(|| LabError::Config("projection left the target graph".into()))
}

/// Fiber of a target vertex inside the host graph, as host vertex ids.
pub fn fiber_vertices(host: &GasketGraph, target: &GasketGraph, y: usize) -> Result<Vec<usize>> {
    if host.n() != target.n() || host.m() < target.m() {
        return Err(LabError::Config("fiber needs a finer-scale host at equal resolution".into()));
    }
    let k = host.m() - target.m();
    fiber(target.coords(y), target.m(), k, target.n())
        .into_iter()
        .map(|p| host.vertex_at(p).ok_or_else(|| LabError::Config("fiber point missing from host".into())))
        .collect()
}

/// Exact invariants of a built graph plus the ball-growth slope.
#[derive(Debug, Clone)]
pub struct GeometryReport {
    pub m: u32,
    pub n: u32,
    pub vertices: usize,
    pub edges: usize,
    pub expected_vertices: usize,
    pub expected_edges: usize,
    pub total_mass: Ratio<u64>,
    /// Corners have degree 2, every other vertex degree 4.
    pub degrees_ok: bool,
    /// Every size-`2^k` triangle, `0 <= k <= M`, has three distinct labels.
    pub labels_ok: bool,
    pub triangles_checked: usize,
    /// Slope of `log m(B(x, r))` in `log r` over dyadic radii from `4·2^{-n}`
    /// to `2^{M-1}`, about the bottom-edge midpoint; needs three radii.
    pub dim_slope: Option<f64>,
}

impl GeometryReport {
    pub fn exact_ok(&self) -> bool {
        self.vertices == self.expected_vertices
            && self.edges == self.expected_edges
            && self.total_mass == Ratio::from_integer(3u64.pow(self.m))
            && self.degrees_ok
            && self.labels_ok
    }

    pub fn render(&self) -> String {
        format!(
            "geometry {{\n  M: {}\n  n: {}\n  vertices: {} (expected {})\n  edges: {} (expected {})\n  total_mass: {}\n  degrees_ok: {}\n  labels_ok: {} ({} triangles)\n  dim_slope: {}\n  exact_ok: {}\n}}\n",
            self.m,
            self.n,
            self.vertices,
            self.expected_vertices,
            self.edges,
            self.expected_edges,
            self.total_mass,
            self.degrees_ok,
            self.labels_ok,
            self.triangles_checked,
            self.dim_slope.map(|s| format!("{s:.17e}")).unwrap_or_else(|| "none".into()),
            self.exact_ok()
        )
    }
}

pub fn geometry_report(g: &GasketGraph) -> GeometryReport {
    let depth = g.m + g.n;
    let expected_vertices = (3 * (3usize.pow(depth) + 1)) / 2;
    let expected_edges = 3usize.pow(depth + 1);
    let degrees_ok = (0..g.num_vertices()).all(|v| g.degree(v) == if g.is_boundary(v) { 2 } else { 4 });
    let mut labels_ok = true;
    let mut triangles_checked = 0;
    for k in 0..=g.m {
        let side = 1u64 << (k + g.n);
        let count = 1u64 << (g.m - k);
        for i in 0..count {
            for j in 0..count - i {
                if !is_gasket_triangle(i, j) {
                    continue;
                }
                let ll = (i * side, j * side);
                let labels: Vec<Option<Label>> = OFFSETS
                    .iter()
                    .map(|&(di, dj)| g.vertex_at((ll.0 + di * side, ll.1 + dj * side)).and_then(|v| g.label_at(v, k)))
                    .collect();
                let distinct: HashSet<Label> = labels.iter().flatten().copied().collect();
                labels_ok &= labels.iter().all(Option::is_some) && distinct.len() == 3;
                triangles_checked += 1;
            }
        }
    }
    let x = g.vertex_at((g.side_units() / 2, 0)).unwrap_or(g.boundary[0]);
    let (mut lr, mut lm) = (Vec::new(), Vec::new());
    let mut e = 2 - g.n as i32;
    while e < g.m as i32 {
        let r = 2f64.powi(e);
        lr.push(r.ln());
        lm.push(g.ball_measure(x, r).ln());
        e += 1;
    }
    let dim_slope = (lr.len() >= 3).then(|| crate::numerics::fit_line(&lr, &lm).ok().map(|f| f.slope)).flatten();
    GeometryReport {
        m: g.m,
        n: g.n,
        vertices: g.num_vertices(),
        edges: g.num_edges(),
        expected_vertices,
        expected_edges,
        total_mass: g.total_mass(),
        degrees_ok,
        labels_ok,
        triangles_checked,
        dim_slope,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn smallest_graphs() {
        let g = build_graph(0, 0).unwrap();
        assert_eq!(g.num_vertices(), 3);
        assert_eq!(g.num_edges(), 3);
        for v in 0..3 {
            assert_eq!(g.vertex_mass(v), Ratio::new(1, 3));
        }
        let g = build_graph(0, 2).unwrap();
        assert_eq!(g.num_vertices(), 15);
        assert_eq!(g.num_edges(), 27);
        let g = build_graph(1, 1).unwrap();
        assert_eq!(g.total_mass(), Ratio::from_integer(3));
    }

    #[test]
    fn masses_at_level_one() {
        let g = build_graph(0, 1).unwrap();
        let corner = g.boundary()[1];
        assert_eq!(g.vertex_mass(corner), Ratio::new(1, 9));
        let mid = g.vertex_at((1, 0)).unwrap();
        assert_eq!(g.vertex_mass(mid), Ratio::new(2, 9));
    }

    #[test]
    fn cell_address_round_trip() {
        let (m, n) = (2, 3);
        let g = build_graph(m, n).unwrap();
        for k in 0..g.num_cells() {
            let addr = g.cell_address(k);
            assert_eq!(addr.index() as usize, k);
            let corners = addr.corners(m);
            let ids: Vec<usize> = corners.iter().map(|&p| g.vertex_at(p).unwrap()).collect();
            assert_eq!(ids, g.cells()[k].to_vec());
        }
    }

    #[test]
    fn capacity_error() {
        assert!(matches!(build_graph_with_budget(2, 6, 3u64.pow(7)), Err(LabError::Capacity(_))));
    }

    #[test]
    fn projection_of_labelled_corner() {
        let g1 = build_graph(1, 0).unwrap();
        let g0 = build_graph(0, 0).unwrap();
        for v in 0..g1.num_vertices() {
            let p = project_vertex(&g1, &g0, v).unwrap();
            assert_eq!(g1.label(v), g0.label(p));
        }
    }
}
