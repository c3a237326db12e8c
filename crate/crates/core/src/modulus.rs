//! Discrete transboundary extremal length of separating curve families.
//!
//! Closed walks are found by Dijkstra on a parity cover of the quotient grid: a
//! horizontal ray from each enclosed point flips a layer bit, so walks that end in
//! the target layer wind an odd number of times around the point. The modulus is
//! the minimum metric area subject to every family walk having length ≥ 1, solved
//! by constraint generation with a dual coordinate-ascent QP.

use std::cmp::Reverse;
use std::collections::{BinaryHeap, HashMap, HashSet};

use log::{debug, warn};
use serde::{Deserialize, Serialize};

use crate::domain::DomainSpec;
use crate::error::{Error, Result};
use crate::geom::{point_in_polygon, point_segment_distance, Mobius, PlanePoint};
use crate::grid::{
    beta_curve, build_refined_grid, walk_functional, ExtendedMetric, QuotientGrid, Refinement,
    Window, NONE,
};

/// A curve family on a quotient grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum FamilySpec {
    /// Closed walks in the open annulus winding around `center`.
    Annular {
        center: PlanePoint,
        r_in: f64,
        r_out: f64,
    },
    /// Closed walks inside `beta` avoiding `q` that separate `{q, b}` from the
    /// window boundary, or that start and end at `b` and together with `b`
    /// separate `q`.
    Separating {
        q: String,
        b: String,
        beta: Vec<PlanePoint>,
    },
}

impl FamilySpec {
    /// Separating family with the canonical rectangle around `b`.
    pub fn separating(grid: &QuotientGrid, q: &str, b: &str) -> Result<FamilySpec> {
        if q == b {
            return Err(Error::InvalidParameter("q and b must differ".into()));
        }
        let beta = beta_curve(grid, b)?;
        Ok(FamilySpec::Separating {
            q: q.to_string(),
            b: b.to_string(),
            beta: beta.polygon,
        })
    }

    /// A window containing every curve of the family with a small margin.
    pub fn window(&self) -> Window {
        match self {
            FamilySpec::Annular { center, r_out, .. } => Window::square(*center, 1.01 * r_out),
            FamilySpec::Separating { beta, .. } => {
                let (mut lo, mut hi) = (beta[0], beta[0]);
                for p in beta {
                    lo = PlanePoint::new(lo.x.min(p.x), lo.y.min(p.y));
                    hi = PlanePoint::new(hi.x.max(p.x), hi.y.max(p.y));
                }
                let pad = 0.05 * (hi.x - lo.x).max(hi.y - lo.y);
                Window::new(
                    PlanePoint::new(lo.x - pad, lo.y - pad),
                    PlanePoint::new(hi.x + pad, hi.y + pad),
                )
            }
        }
    }

    /// Same family with `beta` resampled to `per_side` points per side.
    pub fn densified(&self, per_side: usize) -> FamilySpec {
        match self {
            FamilySpec::Separating { q, b, beta } => {
                let mut out = Vec::with_capacity(beta.len() * per_side);
                for i in 0..beta.len() {
                    let (p, r) = (beta[i], beta[(i + 1) % beta.len()]);
                    for k in 0..per_side {
                        out.push(p + (r - p) * (k as f64 / per_side as f64));
                    }
                }
                FamilySpec::Separating {
                    q: q.clone(),
                    b: b.clone(),
                    beta: out,
                }
            }
            other => other.clone(),
        }
    }

    /// Image of the family under `t`; annular families need an affine map.
    pub fn map_mobius(&self, t: &Mobius) -> Result<FamilySpec> {
        match self {
            FamilySpec::Annular {
                center,
                r_in,
                r_out,
            } => {
                if !t.is_affine() {
                    return Err(Error::InvalidParameter(
                        "annular families map only under affine transforms".into(),
                    ));
                }
                let k = mobius_scale(t, *center);
                Ok(FamilySpec::Annular {
                    center: t.apply_finite(*center),
                    r_in: r_in * k,
                    r_out: r_out * k,
                })
            }
            FamilySpec::Separating { q, b, beta } => {
                if let Some(pole) = t.pole() {
                    if point_in_polygon(pole, beta) {
                        return Err(Error::InvalidParameter("pole lies inside beta".into()));
                    }
                }
                Ok(FamilySpec::Separating {
                    q: q.clone(),
                    b: b.clone(),
                    beta: beta.iter().map(|&p| t.apply_finite(p)).collect(),
                })
            }
        }
    }
}

/// Local scale factor `|T'(z)|`.
pub fn mobius_scale(t: &Mobius, z: PlanePoint) -> f64 {
    let [a, b, c, d] = t.coefficients();
    let den = c * z.to_complex() + d;
    ((a * d - b * c) / (den * den)).norm()
}

/// Image of a refinement under `t`, with sizes scaled by the local derivative.
pub fn map_refinement(r: &Refinement, t: &Mobius) -> Refinement {
    Refinement {
        foci: r
            .foci
            .iter()
            .map(|f| crate::grid::Focus {
                at: t.apply_finite(f.at),
                min_size: f.min_size * mobius_scale(t, f.at),
            })
            .collect(),
        grading: r.grading,
        coarsen: r.coarsen,
    }
}

/// Outcome of a modulus solve.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ELResult {
    pub el: f64,
    pub modulus: f64,
    #[serde(skip)]
    pub extremal_metric: ExtendedMetric,
    #[serde(skip)]
    pub binding_curves: Vec<Vec<usize>>,
    pub iterations: usize,
    pub residual: f64,
    /// `1 / A` of the certified admissible metric: a lower bound on the extremal length.
    pub lower: f64,
    /// `1 / A` of the optimum over the generated constraints: an upper bound.
    pub upper: f64,
    pub constraints: usize,
}

#[derive(Debug, Clone, Copy)]
enum Check {
    Annular { hole: Option<usize> },
    Both { q: usize, b: usize },
    WithB { q: usize, b: usize },
}

struct Sub {
    allowed: Vec<bool>,
    mask: u8,
    target: u8,
    roots: Vec<u32>,
    check: Check,
}

/// A family compiled against a grid: layer flips per edge and per free node.
struct Compiled {
    flip: Vec<u8>,
    free: Vec<u8>,
    subs: Vec<Sub>,
    region: Vec<bool>,
    /// An enclosed point; seeds the start metric.
    focus: PlanePoint,
}

fn nudge(p: PlanePoint, s: f64) -> PlanePoint {
    PlanePoint::new(
        p.x + s * 1e-3 * std::f64::consts::FRAC_1_SQRT_2,
        p.y + s * 1e-3 * 0.5 * std::f64::consts::LN_2,
    )
}

/// A horizontal ray from `o`, pointing right when `dir > 0` and left otherwise.
#[derive(Debug, Clone, Copy)]
struct Ray {
    o: PlanePoint,
    dir: f64,
}

impl Ray {
    /// The horizontal ray from `o` crossed by fewer grid edges, so that fewer
    /// roots are needed to cover every winding walk.
    fn sparse(grid: &QuotientGrid, o: PlanePoint) -> Ray {
        let count = |dir: f64| {
            let ray = Ray { o, dir };
            (0..grid.edges.len())
                .filter(|&e| {
                    let (p, q) = grid.edge_segment(e);
                    crosses(p, q, ray)
                })
                .count()
        };
        let dir = if count(-1.0) < count(1.0) { -1.0 } else { 1.0 };
        Ray { o, dir }
    }
}

fn crosses(p: PlanePoint, q: PlanePoint, ray: Ray) -> bool {
    let o = ray.o;
    if (p.y > o.y) == (q.y > o.y) {
        return false;
    }
    let x = p.x + (o.y - p.y) * (q.x - p.x) / (q.y - p.y);
    (x - o.x) * ray.dir > 0.0
}

/// Ray-crossing labels of component cells and the components whose parity
/// cannot be fixed from the window (disconnected or wrapping around `o`).
fn component_labels(grid: &QuotientGrid, internal: &HashMap<u32, Vec<u32>>, o: Ray) -> (Vec<u8>, Vec<bool>) {
    let mut lam = vec![0u8; grid.num_cells()];
    let mut seen = vec![false; grid.num_cells()];
    let mut free = vec![false; grid.components.len()];
    for (k, comp) in grid.components.iter().enumerate() {
        if comp.cells.is_empty() {
            continue;
        }
        if comp.pieces > 1 {
            free[k] = true;
        }
        for &start in &comp.cells {
            if seen[start as usize] {
                continue;
            }
            seen[start as usize] = true;
            let mut stack = vec![start];
            while let Some(c) = stack.pop() {
                let pc = grid.cells[c as usize].center;
                for &d in internal.get(&c).map(|v| v.as_slice()).unwrap_or(&[]) {
                    let l = lam[c as usize] ^ crosses(pc, grid.cells[d as usize].center, o) as u8;
                    if !seen[d as usize] {
                        seen[d as usize] = true;
                        lam[d as usize] = l;
                        stack.push(d);
                    } else if lam[d as usize] != l {
                        free[k] = true;
                    }
                }
            }
        }
    }
    (lam, free)
}

fn anchor_origin(grid: &QuotientGrid, k: usize) -> PlanePoint {
    let comp = &grid.components[k];
    let s = comp
        .cells
        .first()
        .or(comp.host.as_ref())
        .map(|&c| grid.cells[c as usize].size)
        .unwrap_or(grid.h);
    nudge(comp.anchor, s)
}

fn compile(grid: &QuotientGrid, family: &FamilySpec) -> Result<Compiled> {
    let nc = grid.num_cells();
    let nn = grid.num_nodes();
    let mut internal: HashMap<u32, Vec<u32>> = HashMap::new();
    for &(a, b) in &grid.internal {
        internal.entry(a).or_default().push(b);
        internal.entry(b).or_default().push(a);
    }
    let inside: Box<dyn Fn(PlanePoint) -> bool> = match family {
        FamilySpec::Annular {
            center,
            r_in,
            r_out,
        } => {
            if !(*r_in > 0.0 && r_out > r_in) {
                return Err(Error::InvalidParameter("annulus needs 0 < r_in < r_out".into()));
            }
            let (c, a, b) = (*center, *r_in, *r_out);
            Box::new(move |p: PlanePoint| {
                let d = p.dist(c);
                d > a && d < b
            })
        }
        FamilySpec::Separating { beta, .. } => {
            if beta.len() < 3 {
                return Err(Error::InvalidParameter("beta needs at least 3 vertices".into()));
            }
            let beta = beta.clone();
            let eps = grid.eps();
            Box::new(move |p: PlanePoint| {
                point_in_polygon(p, &beta)
                    || (0..beta.len()).any(|i| {
                        point_segment_distance(p, beta[i], beta[(i + 1) % beta.len()]) <= eps
                    })
            })
        }
    };
    let mut region = vec![false; nn];
    for (i, c) in grid.cells.iter().enumerate() {
        region[i] = c.owner.is_none() && inside(c.center);
    }
    for (k, comp) in grid.components.iter().enumerate() {
        region[nc + k] = if comp.cells.is_empty() {
            inside(comp.anchor) && comp.host.map_or(false, |h| region[h as usize])
        } else {
            comp.cells.iter().all(|&c| inside(grid.cells[c as usize].center))
        };
    }
    let mut origins = Vec::new();
    let mut subs_spec = Vec::new();
    match family {
        FamilySpec::Annular { center, .. } => {
            let s = grid
                .locate(*center)
                .map(|c| grid.cells[c as usize].size)
                .unwrap_or(grid.h);
            origins.push(nudge(*center, s));
            subs_spec.push((
                region.clone(),
                1u8,
                1u8,
                Check::Annular {
                    hole: grid.locate(*center).map(|c| c as usize),
                },
            ));
        }
        FamilySpec::Separating { q, b, .. } => {
            let kq = grid
                .component_index(q)
                .ok_or_else(|| Error::EmptyFamily(format!("{q} does not meet the window")))?;
            let kb = grid
                .component_index(b)
                .ok_or_else(|| Error::EmptyFamily(format!("{b} does not meet the window")))?;
            if kq == kb {
                return Err(Error::InvalidParameter("q and b must differ".into()));
            }
            let (qn, bn) = (nc + kq, nc + kb);
            if !region[qn] || !region[bn] {
                return Err(Error::EmptyFamily("q or b lies outside beta".into()));
            }
            origins.push(anchor_origin(grid, kq));
            origins.push(anchor_origin(grid, kb));
            let mut excl_q = region.clone();
            excl_q[qn] = false;
            if let Some(h) = grid.components[kq].host {
                excl_q[h as usize] = false;
            }
            let mut excl_both = excl_q.clone();
            excl_both[bn] = false;
            if let Some(h) = grid.components[kb].host {
                excl_both[h as usize] = false;
            }
            subs_spec.push((excl_both, 3u8, 3u8, Check::Both { q: qn, b: bn }));
            subs_spec.push((excl_q, 1u8, 1u8, Check::WithB { q: qn, b: bn }));
        }
    }
    let mut flip = vec![0u8; grid.edges.len()];
    let mut free = vec![0u8; nn];
    let rays: Vec<Ray> = origins.iter().map(|&o| Ray::sparse(grid, o)).collect();
    for (bit, &o) in rays.iter().enumerate() {
        let (lam, free_k) = component_labels(grid, &internal, o);
        let lab = |k: u32| if k == NONE || grid.cells[k as usize].owner.is_none() { 0 } else { lam[k as usize] };
        for (e, ed) in grid.edges.iter().enumerate() {
            let (p, r) = grid.edge_segment(e);
            if (crosses(p, r, o) as u8 ^ lab(ed.ku) ^ lab(ed.kv)) == 1 {
                flip[e] |= 1 << bit;
            }
        }
        for (k, &f) in free_k.iter().enumerate() {
            if f {
                free[nc + k] |= 1 << bit;
            }
        }
    }
    let mut subs = Vec::new();
    for (allowed, mask, target, check) in subs_spec {
        let roots = match check {
            Check::WithB { b, .. } => vec![b as u32],
            _ => {
                // every walk crosses each ray in `mask`; cover the sparser one
                let crossing = |bit: u8| (0..grid.edges.len()).filter(|&e| flip[e] & bit != 0).count();
                let bit = if mask & 2 != 0 && crossing(2) < crossing(1) { 2u8 } else { 1u8 };
                let o = origins[(bit >> 1) as usize];
                let mut roots = Vec::new();
                for (e, ed) in grid.edges.iter().enumerate() {
                    if flip[e] & bit == 0 || !allowed[ed.u as usize] || !allowed[ed.v as usize] {
                        continue;
                    }
                    let pick = if grid.node_component(ed.u as usize).is_some() {
                        ed.u
                    } else if grid.node_component(ed.v as usize).is_some() {
                        ed.v
                    } else if grid.edge_segment(e).0.y > o.y {
                        ed.u
                    } else {
                        ed.v
                    };
                    roots.push(pick);
                }
                for v in 0..nn {
                    if free[v] & bit != 0 && allowed[v] {
                        roots.push(v as u32);
                    }
                }
                roots.sort_unstable();
                roots.dedup();
                // order roots outward from the origin so strided subsets spread out
                roots.sort_by(|&a, &b| {
                    let pa = node_point(grid, a as usize);
                    let pb = node_point(grid, b as usize);
                    pa.x.total_cmp(&pb.x).then(a.cmp(&b))
                });
                roots
            }
        };
        subs.push(Sub {
            allowed,
            mask,
            target,
            roots,
            check,
        });
    }
    Ok(Compiled {
        flip,
        free,
        subs,
        region,
        focus: origins[0],
    })
}

fn node_point(grid: &QuotientGrid, v: usize) -> PlanePoint {
    match grid.node_component(v) {
        Some(k) => grid.components[k].anchor,
        None => grid.cells[v].center,
    }
}

/// Min-heap entry: non-negative keys order like their bit patterns.
#[derive(Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
struct Item(Reverse<(u64, u32)>);

impl Item {
    fn new(key: f64, s: u32) -> Self {
        Item(Reverse((key.to_bits(), s)))
    }

    fn key(self) -> f64 {
        f64::from_bits(self.0 .0 .0)
    }

    fn state(self) -> u32 {
        self.0 .0 .1
    }
}

struct Workspace {
    dist: Vec<f64>,
    pred: Vec<u32>,
    label: Vec<u32>,
    settled: Vec<bool>,
    touched: Vec<u32>,
    heap: BinaryHeap<Item>,
}

impl Workspace {
    fn new(nn: usize) -> Self {
        Workspace {
            dist: vec![f64::INFINITY; 4 * nn],
            pred: vec![NONE; 4 * nn],
            label: vec![NONE; 4 * nn],
            settled: vec![false; 4 * nn],
            touched: Vec::new(),
            heap: BinaryHeap::new(),
        }
    }

    fn reset(&mut self) {
        for &s in &self.touched {
            self.dist[s as usize] = f64::INFINITY;
            self.pred[s as usize] = NONE;
            self.label[s as usize] = NONE;
            self.settled[s as usize] = false;
        }
        self.touched.clear();
        self.heap.clear();
    }

    fn seed(&mut self, s: u32) {
        self.dist[s as usize] = 0.0;
        self.label[s as usize] = s / 4;
        self.touched.push(s);
        self.heap.push(Item::new(0.0, s));
    }

    fn path(&self, mut s: u32) -> Vec<usize> {
        let mut out = vec![(s / 4) as usize];
        while self.pred[s as usize] != NONE {
            s = self.pred[s as usize];
            out.push((s / 4) as usize);
        }
        out.reverse();
        out
    }
}

/// Relaxes the parity-cover neighbours of state `s`, calling `f(state, weight)`.
#[inline]
fn for_each_step(grid: &QuotientGrid, comp: &Compiled, sub: &Sub, ew: &[f64], s: u32, mut f: impl FnMut(u32, f64)) {
    let x = s / 4;
    let t = s % 4;
    let mask = sub.mask;
    for &(y, e) in grid.neighbors(x as usize) {
        if sub.allowed[y as usize] {
            f(y * 4 + (t ^ (comp.flip[e as usize] & mask) as u32), ew[e as usize]);
        }
    }
    let fb = (comp.free[x as usize] & mask) as u32;
    for bit in [1u32, 2] {
        if fb & bit != 0 {
            f(x * 4 + (t ^ bit), 0.0);
        }
    }
}

/// Dijkstra on the parity cover from layer 0 of every root at once. Leaves the
/// distances in `pot` and returns a lower bound on the length of every family
/// walk through a root (exact when no component is charged twice).
fn sweep(grid: &QuotientGrid, comp: &Compiled, sub: &Sub, ew: &[f64], ws: &mut Workspace, pot: &mut Vec<f64>) -> f64 {
    let target = sub.target as u32;
    for &r in &sub.roots {
        ws.seed(r * 4);
    }
    let mut lower = f64::INFINITY;
    while let Some(it) = ws.heap.pop() {
        let (d, s) = (it.key(), it.state());
        if ws.settled[s as usize] {
            continue;
        }
        ws.settled[s as usize] = true;
        let partner = s ^ target;
        if ws.settled[partner as usize] {
            let len = d + ws.dist[partner as usize];
            let root = ws.label[s as usize];
            // a root meeting itself through a free transfer is not a walk
            if !(len == 0.0 && s / 4 == root && ws.label[partner as usize] == root) {
                lower = lower.min(len);
            }
        }
        for_each_step(grid, comp, sub, ew, s, |s2, w| {
            let nd = d + w;
            if !ws.settled[s2 as usize] && nd < ws.dist[s2 as usize] {
                if ws.dist[s2 as usize].is_infinite() {
                    ws.touched.push(s2);
                }
                ws.dist[s2 as usize] = nd;
                ws.label[s2 as usize] = ws.label[s as usize];
                ws.heap.push(Item::new(nd, s2));
            }
        });
    }
    pot.clear();
    pot.extend_from_slice(&ws.dist);
    ws.reset();
    lower
}

/// Shortest closed walk through `root` that ends in the target layer, if one is
/// shorter than `bound`. The walk must leave the root; layer changes the root
/// can absorb on its own (free parity) are applied on return. A* with the
/// multi-source distances as potential: the cover is undirected and invariant
/// under a layer flip, so the distance from `(x, t)` back to `(root, T)` is at
/// least `pot[(x, t ^ T)]`.
fn cycle_through(
    grid: &QuotientGrid,
    comp: &Compiled,
    sub: &Sub,
    ew: &[f64],
    pot: &[f64],
    root: u32,
    bound: f64,
    ws: &mut Workspace,
) -> Option<(f64, Vec<usize>)> {
    let target = sub.target as u32;
    let absorb = (comp.free[root as usize] & sub.mask) as u32;
    let h = |s: u32| pot[(s ^ target) as usize];
    ws.seed(root * 4);
    let mut best = bound;
    let mut last = NONE;
    while let Some(it) = ws.heap.pop() {
        let (f, s) = (it.key(), it.state());
        if f >= best {
            break;
        }
        if ws.settled[s as usize] {
            continue;
        }
        ws.settled[s as usize] = true;
        let d = ws.dist[s as usize];
        let at_root = s / 4 == root;
        for_each_step(grid, comp, sub, ew, s, |s2, w| {
            let nd = d + w;
            if s2 / 4 == root && !at_root {
                if ((s2 % 4) ^ target) & !absorb == 0 && nd < best {
                    best = nd;
                    last = s;
                }
                return;
            }
            if ws.settled[s2 as usize] || nd >= ws.dist[s2 as usize] {
                return;
            }
            let key = nd + h(s2);
            if key >= best {
                return;
            }
            if ws.dist[s2 as usize].is_infinite() {
                ws.touched.push(s2);
            }
            ws.dist[s2 as usize] = nd;
            ws.pred[s2 as usize] = s;
            ws.heap.push(Item::new(key, s2));
        });
    }
    let found = (last != NONE).then(|| {
        let mut walk = ws.path(last);
        walk.dedup();
        walk.push(root as usize);
        (best, walk)
    });
    ws.reset();
    found
}


/// Walks from `root` back to itself in the target layer, one per parity
/// change: the shortest such walk crossing each flip edge (or turning at each
/// free node). A single tree from `root` gives all of them, since the distance
/// from `(v, t ^ T)` back to `(root, T)` equals the distance from `(root, 0)`
/// to `(v, t)`.
fn loops_at(
    grid: &QuotientGrid,
    comp: &Compiled,
    sub: &Sub,
    ew: &[f64],
    root: u32,
    bound: f64,
    ws: &mut Workspace,
) -> Vec<(f64, Vec<usize>)> {
    let target = sub.target as u32;
    let mask = sub.mask;
    ws.seed(root * 4);
    while let Some(it) = ws.heap.pop() {
        let (d, s) = (it.key(), it.state());
        if ws.settled[s as usize] || d >= bound {
            continue;
        }
        ws.settled[s as usize] = true;
        for_each_step(grid, comp, sub, ew, s, |s2, w| {
            let nd = d + w;
            if !ws.settled[s2 as usize] && nd < ws.dist[s2 as usize] {
                if ws.dist[s2 as usize].is_infinite() {
                    ws.touched.push(s2);
                }
                ws.dist[s2 as usize] = nd;
                ws.pred[s2 as usize] = s;
                ws.heap.push(Item::new(nd, s2));
            }
        });
    }
    // (length, u-state, v-state): root → u, one step, v ← root mirrored
    let mut joins: Vec<(f64, u32, u32)> = Vec::new();
    for (e, ed) in grid.edges.iter().enumerate() {
        let fl = (comp.flip[e] & mask) as u32;
        if fl != target || !sub.allowed[ed.u as usize] || !sub.allowed[ed.v as usize] {
            continue;
        }
        for t in 0..4u32 {
            let (a, b) = (ed.u * 4 + t, ed.v * 4 + t);
            let l = ws.dist[a as usize] + ew[e] + ws.dist[b as usize];
            if l < bound && ws.settled[a as usize] && ws.settled[b as usize] {
                joins.push((l, a, b));
            }
        }
    }
    for x in 0..grid.num_nodes() as u32 {
        if (comp.free[x as usize] & mask) as u32 & target != 0 && sub.allowed[x as usize] && x != root {
            for t in 0..4u32 {
                let a = x * 4 + t;
                let l = 2.0 * ws.dist[a as usize];
                if l < bound && ws.settled[a as usize] {
                    joins.push((l, a, a));
                }
            }
        }
    }
    joins.sort_by(|p, q| p.0.total_cmp(&q.0).then(p.1.cmp(&q.1)).then(p.2.cmp(&q.2)));
    let mut out = Vec::new();
    for (l, a, b) in joins {
        if out.len() >= MAX_LOOPS {
            break;
        }
        let mut walk = ws.path(a);
        let mut back = ws.path(b);
        back.reverse();
        if a == b {
            back.remove(0);
        }
        walk.extend(back);
        walk.dedup();
        if walk.len() > 2 {
            out.push((l, walk));
        }
    }
    ws.reset();
    out
}


fn edge_weights(grid: &QuotientGrid, m: &ExtendedMetric) -> Vec<f64> {
    let nc = grid.num_cells();
    let charge = |v: u32| if (v as usize) < nc { 0.0 } else { m.weights[v as usize] };
    (0..grid.edges.len())
        .map(|e| {
            let ed = &grid.edges[e];
            grid.edge_coefs(e).map(|(c, l)| l * m.weights[c as usize]).sum::<f64>()
                + 0.5 * (charge(ed.u) + charge(ed.v))
        })
        .collect()
}

fn validate(grid: &QuotientGrid, check: Check, walk: &[usize]) -> bool {
    let r = match check {
        Check::Annular { hole: None } => return true,
        Check::Annular { hole: Some(h) } => grid.separated(walk, &[], &[h]),
        Check::Both { q, b } => grid.separated(walk, &[], &[q, b]),
        Check::WithB { q, b } => grid.separated(walk, &[b], &[q]),
    };
    r.map(|v| v.iter().all(|&x| x)).unwrap_or(false)
}

/// Separation oracle at `m`: the shortest family walk through each root among
/// those shorter than `bound`, with exact lengths, plus a lower bound on the
/// length of every family walk (the shortest walk found, else `bound`, never
/// below the multi-source bound).
fn separate(
    grid: &QuotientGrid,
    comp: &Compiled,
    m: &ExtendedMetric,
    bound: impl Fn(f64) -> f64,
    ws: &mut Workspace,
    pot: &mut Vec<f64>,
) -> (f64, Vec<(f64, Vec<usize>)>) {
    let ew = edge_weights(grid, m);
    let mut lower = f64::INFINITY;
    let mut out = Vec::new();
    for sub in &comp.subs {
        let lb = sweep(grid, comp, sub, &ew, ws, pot);
        if !lb.is_finite() {
            continue;
        }
        // Walks shorter than `b`, plus the shortest rejected one: valid walks
        // through the same root are no shorter than it.
        let search = |b: f64, ws: &mut Workspace| -> (Vec<(f64, Vec<usize>)>, f64) {
            let candidates: Vec<Vec<usize>> = match sub.check {
                Check::WithB { b: bn, .. } => loops_at(grid, comp, sub, &ew, bn as u32, b, ws)
                    .into_iter()
                    .map(|(_, w)| w)
                    .collect(),
                _ => sub
                    .roots
                    .iter()
                    // the walk through `root` is at least the distance to its far layer
                    .filter(|&&root| pot[(root * 4 + sub.target as u32) as usize] < b)
                    .filter_map(|&root| cycle_through(grid, comp, sub, &ew, pot, root, b, ws))
                    .map(|(_, w)| w)
                    .collect(),
            };
            let mut found = Vec::new();
            let mut floor = f64::INFINITY;
            let mut seen = HashSet::new();
            for w in candidates {
                if !seen.insert(w.clone()) {
                    continue;
                }
                let Ok(f) = walk_functional(grid, &w) else { continue };
                let l = f.eval(grid, m);
                if validate(grid, sub.check, &w) {
                    found.push((l, w));
                } else {
                    debug!("discarding a walk that fails the separation check");
                    floor = floor.min(l);
                }
            }
            (found, floor)
        };
        let mut b = bound(lb).max(lb);
        let (mut found, mut floor) = search(b, ws);
        let wide = bound(f64::INFINITY).max(lb);
        if found.is_empty() && floor.is_infinite() && b < wide {
            // the multi-source bound was loose: search up to the cut itself
            b = wide;
            (found, floor) = search(b, ws);
        }
        let best = found.iter().map(|x| x.0).fold(b.min(floor), f64::min);
        lower = lower.min(best);
        out.extend(found);
    }
    out.sort_by(|a, b| a.0.total_cmp(&b.0).then_with(|| a.1.cmp(&b.1)));
    (lower, out)
}

/// Minimum m-length family walk.
pub fn shortest_family_curve(
    grid: &QuotientGrid,
    m: &ExtendedMetric,
    family: &FamilySpec,
) -> Result<(Vec<usize>, f64)> {
    if m.weights.len() != grid.num_nodes() {
        return Err(Error::InvalidParameter("metric does not match grid".into()));
    }
    let comp = compile(grid, family)?;
    let mut ws = Workspace::new(grid.num_nodes());
    let mut pot = Vec::new();
    let (_, walks) = separate(grid, &comp, m, |_| f64::INFINITY, &mut ws, &mut pot);
    walks
        .into_iter()
        .next()
        .map(|(l, w)| (w, l))
        .ok_or_else(|| Error::EmptyFamily("no admissible walk at this resolution".into()))
}

/// Scale-invariant start: weight `1/|z − focus|` on the region, so that walks
/// around the focus at every distance cost about the same.
fn start_metric(grid: &QuotientGrid, comp: &Compiled) -> ExtendedMetric {
    let nc = grid.num_cells();
    let o = comp.focus;
    let weights = (0..grid.num_nodes())
        .map(|v| {
            if !comp.region[v] {
                return 0.0;
            }
            if v < nc {
                let c = &grid.cells[v];
                1.0 / c.center.dist(o).max(c.size)
            } else {
                let k = &grid.components[v - nc];
                let (lo, hi) = k.bbox;
                let d = k.anchor.dist(o).max(grid.h);
                lo.dist(hi).max(grid.h) / d
            }
        })
        .collect();
    ExtendedMetric { weights }
}

/// Loops through a fixed node kept per separation round.
const MAX_LOOPS: usize = 24;

/// Weight of the restricted optimum in the separation point.
const IN_OUT: f64 = 0.1;

/// Roots whose shortest walk is within this fraction of the overall shortest
/// contribute a constraint in each round.
const SEARCH_SLACK: f64 = 0.1;

struct Constraint {
    nodes: Vec<u32>,
    coefs: Vec<f64>,
    qjj: f64,
    mu: f64,
    walk: Vec<usize>,
}

fn rebuild_metric(cons: &[Constraint], sigma: &[f64], m: &mut [f64]) {
    m.iter_mut().for_each(|x| *x = 0.0);
    for c in cons {
        if c.mu > 0.0 {
            for (&v, &g) in c.nodes.iter().zip(&c.coefs) {
                m[v as usize] += c.mu * g / sigma[v as usize];
            }
        }
    }
}

/// Dual coordinate ascent for `min Σσm²` subject to `g·m ≥ 1`.
fn qp_solve(cons: &mut [Constraint], sigma: &[f64], m: &mut [f64], tol: f64) -> usize {
    rebuild_metric(cons, sigma, m);
    let mut sweeps = 0;
    loop {
        sweeps += 1;
        let mut kkt = 0.0f64;
        for c in cons.iter_mut() {
            let dot: f64 = c.nodes.iter().zip(&c.coefs).map(|(&v, &g)| g * m[v as usize]).sum();
            let viol = 1.0 - dot;
            kkt = kkt.max(if c.mu > 0.0 { viol.abs() } else { viol.max(0.0) });
            let new = (c.mu + viol / c.qjj).max(0.0);
            let delta = new - c.mu;
            if delta != 0.0 {
                for (&v, &g) in c.nodes.iter().zip(&c.coefs) {
                    m[v as usize] += delta * g / sigma[v as usize];
                }
                c.mu = new;
            }
        }
        if kkt <= tol || sweeps >= 20_000 {
            break;
        }
    }
    rebuild_metric(cons, sigma, m);
    for x in m.iter_mut() {
        *x = x.max(0.0);
    }
    sweeps
}

/// Discrete modulus of `family` on `grid` to relative tolerance `tol`.
///
/// Cuts are generated at a point between the restricted QP optimum (an area
/// lower bound) and the best certified admissible metric (an area upper bound);
/// the solve stops when the two areas agree to `tol`. The reported metric is the
/// admissible one, so `el` is the lower end of the bracket `[lower, upper]`.
pub fn solve_modulus(grid: &QuotientGrid, family: &FamilySpec, tol: f64, max_iter: usize) -> Result<ELResult> {
    if !(tol > 0.0 && tol <= 0.1) {
        return Err(Error::InvalidParameter(format!("tol = {tol} must lie in (0, 0.1]")));
    }
    if max_iter == 0 {
        return Err(Error::InvalidParameter("max_iter must be at least 1".into()));
    }
    let comp = compile(grid, family)?;
    let nn = grid.num_nodes();
    let sigma: Vec<f64> = (0..nn).map(|v| grid.sigma(v)).collect();
    let mut ws = Workspace::new(nn);
    let uniform = start_metric(grid, &comp);
    let mut cons: Vec<Constraint> = Vec::new();
    let mut keys: HashSet<Vec<u32>> = HashSet::new();
    let mut add = |walk: Vec<usize>, cons: &mut Vec<Constraint>| -> bool {
        let Ok(f) = walk_functional(grid, &walk) else { return false };
        let mut nodes: Vec<u32> = f.cells.iter().map(|x| x.0).collect();
        let mut coefs: Vec<f64> = f.cells.iter().map(|x| x.1).collect();
        for &k in &f.components {
            nodes.push((grid.num_cells() + k as usize) as u32);
            coefs.push(1.0);
        }
        if nodes.is_empty() || !keys.insert(nodes.clone()) {
            return false;
        }
        let qjj = nodes.iter().zip(&coefs).map(|(&v, &g)| g * g / sigma[v as usize]).sum();
        cons.push(Constraint {
            nodes,
            coefs,
            qjj,
            mu: 0.0,
            walk,
        });
        true
    };
    let mut pot = Vec::new();
    // One separation round at `m`: adds walks shorter than `cut` (and within
    // the search slack of the shortest) as constraints; returns a lower bound
    // on the m-length of every family walk.
    let mut round = |m: &ExtendedMetric, cut: f64, cons: &mut Vec<Constraint>, ws: &mut Workspace| -> (f64, usize) {
        let (lower, walks) = separate(grid, &comp, m, |lb| cut.min(lb * (1.0 + SEARCH_SLACK)), ws, &mut pot);
        let mut added = 0;
        for (l, w) in walks {
            if l < cut && add(w, cons) {
                added += 1;
            }
        }
        (lower, added)
    };
    let (l0, _) = round(&uniform, f64::INFINITY, &mut cons, &mut ws);
    if !l0.is_finite() {
        return Err(Error::EmptyFamily("no admissible walk at this resolution".into()));
    }
    if !(l0 > 0.0) {
        return Err(Error::EmptyFamily("family contains a walk of zero length".into()));
    }
    let mut feas = uniform.scaled(1.0 / l0);
    let mut a_feas = feas.area(grid);
    if cons.is_empty() {
        return Err(Error::EmptyFamily("no admissible walk at this resolution".into()));
    }
    let qp_tol = 0.1 * tol;
    let mut out = ExtendedMetric::zeros(grid);
    qp_solve(&mut cons, &sigma, &mut out.weights, qp_tol);
    let mut iterations = 1;
    loop {
        let a_out = out.area(grid);
        if a_out >= (1.0 - tol) * a_feas {
            let binding = cons
                .iter()
                .filter(|c| c.mu > 0.0)
                .filter(|c| {
                    let l: f64 = c.nodes.iter().zip(&c.coefs).map(|(&v, &g)| g * feas.weights[v as usize]).sum();
                    (l - 1.0).abs() <= tol
                })
                .map(|c| c.walk.clone())
                .collect();
            debug!("modulus converged: {iterations} iterations, {} constraints", cons.len());
            return Ok(ELResult {
                el: 1.0 / a_feas,
                modulus: a_feas,
                extremal_metric: feas,
                binding_curves: binding,
                iterations,
                residual: 0.0,
                lower: 1.0 / a_feas,
                upper: 1.0 / a_out,
                constraints: cons.len(),
            });
        }
        if iterations >= max_iter {
            warn!("modulus solve stopped after {iterations} iterations");
            return Err(Error::MaxIterExceeded {
                iterations,
                lower: 1.0 / a_feas,
                upper: 1.0 / a_out,
            });
        }
        let mid = ExtendedMetric {
            weights: out
                .weights
                .iter()
                .zip(&feas.weights)
                .map(|(o, f)| IN_OUT * o + (1.0 - IN_OUT) * f)
                .collect(),
        };
        for m in [&mid, &out] {
            let (l, more) = round(m, 1.0, &mut cons, &mut ws);
            if l > 0.0 && l.is_finite() {
                let a = m.area(grid) / (l * l);
                if a < a_feas {
                    a_feas = a;
                    feas = m.scaled(1.0 / l);
                }
            }
            // stop once a new cut separates the restricted optimum itself
            let cuts_out = cons[cons.len() - more..].iter().any(|c| {
                let l: f64 = c.nodes.iter().zip(&c.coefs).map(|(&v, &g)| g * out.weights[v as usize]).sum();
                l < 1.0 - qp_tol
            });
            if cuts_out {
                break;
            }
        }
        qp_solve(&mut cons, &sigma, &mut out.weights, qp_tol);
        iterations += 1;
    }
}

/// Extremal length before and after a Möbius change of coordinates.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct InvarianceReport {
    pub el_before: f64,
    pub el_after: f64,
    pub rel_diff: f64,
}

/// Solves the same family on `spec` and on `t(spec)`, each discretized over the
/// family's own window with the refinement carried along by `t`.
#[allow(clippy::too_many_arguments)]
pub fn verify_conformal_invariance(
    spec: &DomainSpec,
    family: &FamilySpec,
    t: &Mobius,
    n: usize,
    refinement: &Refinement,
    tol: f64,
    max_iter: usize,
) -> Result<InvarianceReport> {
    let before = family.densified(64);
    let after = before.map_mobius(t)?;
    let mapped = spec.map_mobius(t)?;
    let solve = |spec: &DomainSpec, fam: &FamilySpec, r: &Refinement| -> Result<f64> {
        let grid = build_refined_grid(spec, fam.window(), n, r)?;
        Ok(solve_modulus(&grid, fam, tol, max_iter)?.el)
    };
    let el_before = solve(spec, &before, refinement)?;
    let el_after = solve(&mapped, &after, &map_refinement(refinement, t))?;
    Ok(InvarianceReport {
        el_before,
        el_after,
        rel_diff: (el_after - el_before).abs() / el_before,
    })
}
