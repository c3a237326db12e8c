//! Quotient grid: a window of Ω discretized into square cells, with every
//! complementary component meeting the window collapsed to a single node.
//!
//! Cells are the leaves of a 2:1-balanced quadtree over an `n × n` base grid; with
//! no refinement the grid is uniform. Walks step between cell centers along a
//! 16-direction stencil, and every step carries the exact line integral of a
//! cellwise-constant metric along its segment.

use std::collections::{BTreeMap, HashMap};

use log::warn;
use serde::{Deserialize, Serialize};

use crate::domain::{shape_bbox, shape_contains, DomainSpec, Shape};
use crate::error::{Error, Result};
use crate::geom::PlanePoint;

pub const NONE: u32 = u32::MAX;

/// Stencil reach in units of the mean size of the two cells.
const STENCIL_REACH: f64 = 2.25;
const MAX_DEPTH: u8 = 24;

/// Axis-aligned rectangle.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Window {
    pub min: PlanePoint,
    pub max: PlanePoint,
}

impl Window {
    pub fn new(min: PlanePoint, max: PlanePoint) -> Self {
        Window { min, max }
    }

    /// Square of half-width `half` around `center`.
    pub fn square(center: PlanePoint, half: f64) -> Self {
        Window {
            min: PlanePoint::new(center.x - half, center.y - half),
            max: PlanePoint::new(center.x + half, center.y + half),
        }
    }

    pub fn width(&self) -> f64 {
        self.max.x - self.min.x
    }

    pub fn height(&self) -> f64 {
        self.max.y - self.min.y
    }

    /// Corners in counterclockwise order.
    pub fn corners(&self) -> Vec<PlanePoint> {
        vec![
            self.min,
            PlanePoint::new(self.max.x, self.min.y),
            self.max,
            PlanePoint::new(self.min.x, self.max.y),
        ]
    }

    pub fn contains(&self, p: PlanePoint) -> bool {
        p.x >= self.min.x && p.x <= self.max.x && p.y >= self.min.y && p.y <= self.max.y
    }
}

/// Refine cells near `at` down to size `min_size`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Focus {
    pub at: PlanePoint,
    pub min_size: f64,
}

/// Graded refinement: a cell at distance `d` from a focus is split while its size
/// exceeds `max(min_size, d / grading)`. With `coarsen`, cells far from every
/// focus may also grow beyond the base size (up to 16 base cells), except where
/// they meet a complementary component.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Refinement {
    pub foci: Vec<Focus>,
    pub grading: f64,
    #[serde(default)]
    pub coarsen: bool,
}

impl Refinement {
    pub fn none() -> Self {
        Refinement {
            foci: Vec::new(),
            grading: 1.0,
            coarsen: false,
        }
    }

    pub fn around(at: PlanePoint, min_size: f64, grading: f64) -> Self {
        Refinement {
            foci: vec![Focus { at, min_size }],
            grading,
            coarsen: false,
        }
    }

    /// Cell size proportional to the distance from `at` everywhere.
    pub fn graded(at: PlanePoint, min_size: f64, grading: f64) -> Self {
        Refinement {
            coarsen: true,
            ..Self::around(at, min_size, grading)
        }
    }

    fn target(&self, lo: PlanePoint, size: f64) -> f64 {
        let mut t = f64::INFINITY;
        for f in &self.foci {
            let dx = (lo.x - f.at.x).max(0.0).max(f.at.x - lo.x - size);
            let dy = (lo.y - f.at.y).max(0.0).max(f.at.y - lo.y - size);
            let d = (dx * dx + dy * dy).sqrt();
            t = t.min(f.min_size.max(d / self.grading));
        }
        t
    }
}

/// One leaf cell; `owner` is the index of the component node containing its center.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Cell {
    pub center: PlanePoint,
    pub size: f64,
    pub owner: Option<u32>,
}

impl Cell {
    pub fn lo(&self) -> PlanePoint {
        PlanePoint::new(self.center.x - self.size / 2.0, self.center.y - self.size / 2.0)
    }

    pub fn hi(&self) -> PlanePoint {
        PlanePoint::new(self.center.x + self.size / 2.0, self.center.y + self.size / 2.0)
    }
}

/// The collapsed image of one complementary component.
#[derive(Debug, Clone, PartialEq)]
pub struct ComponentNode {
    pub id: String,
    pub cells: Vec<u32>,
    /// A point of the component; bare nodes attach to the cell containing it.
    pub anchor: PlanePoint,
    pub host: Option<u32>,
    pub bbox: (PlanePoint, PlanePoint),
    /// Connected pieces of the footprint inside the window.
    pub pieces: usize,
}

impl ComponentNode {
    pub fn is_bare(&self) -> bool {
        self.cells.is_empty()
    }
}

/// A graph edge. `ku`/`kv` are the cells whose centers realize the step
/// geometrically (`NONE` for the anchor point of a bare node).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Edge {
    pub u: u32,
    pub v: u32,
    pub ku: u32,
    pub kv: u32,
    coef_start: u32,
    coef_len: u32,
}

#[derive(Debug, Clone, Copy)]
struct QNode {
    x0: f64,
    y0: f64,
    size: f64,
    depth: u8,
    kids: u32,
    leaf: u32,
}

/// Ends-compactified discretization of a window of Ω.
#[derive(Debug, Clone)]
pub struct QuotientGrid {
    pub window: Window,
    pub n: usize,
    pub h: f64,
    /// Tree roots: an `nx × ny` array of squares of side `root`.
    root: f64,
    nx: usize,
    ny: usize,
    tree: Vec<QNode>,
    pub cells: Vec<Cell>,
    pub components: Vec<ComponentNode>,
    pub edges: Vec<Edge>,
    coef_cell: Vec<u32>,
    coef_len: Vec<f64>,
    adj_start: Vec<u32>,
    adj: Vec<(u32, u32)>,
    /// Pairs of cells of the same component joined by a stencil step inside it.
    pub internal: Vec<(u32, u32)>,
    pub warnings: Vec<String>,
    side_start: Vec<u32>,
    side_adj: Vec<u32>,
    eps: f64,
}

struct Dsu {
    parent: Vec<u32>,
}

impl Dsu {
    fn new(n: usize) -> Self {
        Dsu {
            parent: (0..n as u32).collect(),
        }
    }

    fn find(&mut self, mut x: u32) -> u32 {
        while self.parent[x as usize] != x {
            let p = self.parent[x as usize];
            self.parent[x as usize] = self.parent[p as usize];
            x = p;
        }
        x
    }

    fn union(&mut self, a: u32, b: u32) {
        let (ra, rb) = (self.find(a), self.find(b));
        if ra != rb {
            self.parent[ra.max(rb) as usize] = ra.min(rb);
        }
    }
}

/// Parameter interval of the segment `p + t(q − p)` inside the closed box.
fn clip(p: PlanePoint, q: PlanePoint, lo: PlanePoint, hi: PlanePoint) -> Option<(f64, f64)> {
    let d = q - p;
    let (mut t0, mut t1) = (0.0f64, 1.0f64);
    for (pc, dc, l, h) in [(p.x, d.x, lo.x, hi.x), (p.y, d.y, lo.y, hi.y)] {
        if dc == 0.0 {
            if pc < l || pc > h {
                return None;
            }
        } else {
            let a = (l - pc) / dc;
            let b = (h - pc) / dc;
            let (a, b) = if a < b { (a, b) } else { (b, a) };
            t0 = t0.max(a);
            t1 = t1.min(b);
            if t0 > t1 {
                return None;
            }
        }
    }
    Some((t0, t1))
}

/// Builds a uniform `n × n` quotient grid.
pub fn build_quotient_grid(spec: &DomainSpec, window: Window, n: usize) -> Result<QuotientGrid> {
    build_refined_grid(spec, window, n, &Refinement::none())
}

/// Builds a quotient grid over an `n × n` base with graded refinement.
pub fn build_refined_grid(
    spec: &DomainSpec,
    window: Window,
    n: usize,
    refinement: &Refinement,
) -> Result<QuotientGrid> {
    if n < 16 {
        return Err(Error::InvalidParameter(format!("n = {n} must be at least 16")));
    }
    if !(window.width() > 0.0 && window.height() > 0.0)
        || !window.min.is_finite()
        || !window.max.is_finite()
    {
        return Err(Error::InvalidParameter("window must have positive size".into()));
    }
    if refinement.foci.iter().any(|f| !(f.min_size > 0.0)) || !(refinement.grading > 0.0) {
        return Err(Error::InvalidParameter("refinement sizes must be positive".into()));
    }
    let h = window.width().max(window.height()) / n as f64;
    let coarsen = refinement.coarsen && !refinement.foci.is_empty();
    // with coarsening the base is padded to whole 16-cell blocks
    let block = if coarsen { 16.0 } else { 1.0 };
    let nx = (((window.width() / h) - 1e-9) / block).ceil().max(1.0) as usize * block as usize;
    let ny = (((window.height() / h) - 1e-9) / block).ceil().max(1.0) as usize * block as usize;
    let window = Window::new(
        window.min,
        PlanePoint::new(window.min.x + nx as f64 * h, window.min.y + ny as f64 * h),
    );
    let mut k = 0;
    if coarsen {
        while k < 4 && nx % (2 << k) == 0 && ny % (2 << k) == 0 {
            k += 1;
        }
    }
    let (root, nx, ny) = (h * (1 << k) as f64, nx >> k, ny >> k);
    let mut g = QuotientGrid {
        window,
        n,
        h,
        root,
        nx,
        ny,
        tree: Vec::with_capacity(nx * ny),
        cells: Vec::new(),
        components: Vec::new(),
        edges: Vec::new(),
        coef_cell: Vec::new(),
        coef_len: Vec::new(),
        adj_start: Vec::new(),
        adj: Vec::new(),
        internal: Vec::new(),
        warnings: Vec::new(),
        side_start: Vec::new(),
        side_adj: Vec::new(),
        eps: 0.0,
    };
    for iy in 0..ny {
        for ix in 0..nx {
            g.tree.push(QNode {
                x0: window.min.x + ix as f64 * root,
                y0: window.min.y + iy as f64 * root,
                size: root,
                depth: 0,
                kids: NONE,
                leaf: NONE,
            });
        }
    }
    if !refinement.foci.is_empty() {
        let boxes: Vec<(PlanePoint, PlanePoint)> = spec.components().iter().map(|c| shape_bbox(&c.shape)).collect();
        let near_component = |nd: &QNode| {
            let m = 1e-9 * h;
            boxes.iter().any(|(lo, hi)| {
                nd.x0 <= hi.x + m && nd.x0 + nd.size >= lo.x - m && nd.y0 <= hi.y + m && nd.y0 + nd.size >= lo.y - m
            })
        };
        let mut stack: Vec<u32> = (0..g.tree.len() as u32).collect();
        while let Some(i) = stack.pop() {
            let nd = g.tree[i as usize];
            let lo = PlanePoint::new(nd.x0, nd.y0);
            let coarse = nd.size > h * (1.0 + 1e-12) && near_component(&nd);
            if nd.depth < MAX_DEPTH && (coarse || nd.size > refinement.target(lo, nd.size) * (1.0 + 1e-12)) {
                let k = g.split(i);
                stack.extend(k..k + 4);
            }
        }
        g.balance();
    }
    g.collect_leaves();
    let min_size = g.cells.iter().map(|c| c.size).fold(f64::INFINITY, f64::min);
    g.eps = 1e-9 * min_size;
    g.classify(spec);
    g.build_edges();
    g.build_side_adjacency();
    Ok(g)
}

impl QuotientGrid {
    fn split(&mut self, i: u32) -> u32 {
        let nd = self.tree[i as usize];
        let k = self.tree.len() as u32;
        let s = nd.size / 2.0;
        for (dx, dy) in [(0.0, 0.0), (1.0, 0.0), (0.0, 1.0), (1.0, 1.0)] {
            self.tree.push(QNode {
                x0: nd.x0 + dx * s,
                y0: nd.y0 + dy * s,
                size: s,
                depth: nd.depth + 1,
                kids: NONE,
                leaf: NONE,
            });
        }
        self.tree[i as usize].kids = k;
        k
    }

    fn leaf_nodes(&self) -> Vec<u32> {
        let mut out = Vec::new();
        let mut stack = Vec::new();
        for root in (0..(self.nx * self.ny) as u32).rev() {
            stack.push(root);
            while let Some(i) = stack.pop() {
                let k = self.tree[i as usize].kids;
                if k == NONE {
                    out.push(i);
                } else {
                    stack.extend([k + 3, k + 2, k + 1, k]);
                }
            }
        }
        out
    }

    fn locate_node(&self, p: PlanePoint) -> Option<u32> {
        let w = &self.window;
        if !(p.x >= w.min.x && p.x < w.max.x && p.y >= w.min.y && p.y < w.max.y) {
            return None;
        }
        let ix = (((p.x - w.min.x) / self.root) as usize).min(self.nx - 1);
        let iy = (((p.y - w.min.y) / self.root) as usize).min(self.ny - 1);
        let mut i = (iy * self.nx + ix) as u32;
        loop {
            let nd = &self.tree[i as usize];
            if nd.kids == NONE {
                return Some(i);
            }
            let half = nd.size / 2.0;
            let right = (p.x >= nd.x0 + half) as u32;
            let up = (p.y >= nd.y0 + half) as u32;
            i = nd.kids + right + 2 * up;
        }
    }

    /// Enforces a 2:1 size ratio between leaves sharing an edge or a corner.
    fn balance(&mut self) {
        loop {
            let mut split = Vec::new();
            for i in self.leaf_nodes() {
                let nd = self.tree[i as usize];
                let s = nd.size;
                let probe = 1e-7 * s;
                let mut pts = Vec::with_capacity(20);
                for f in [0.125, 0.375, 0.625, 0.875] {
                    pts.push(PlanePoint::new(nd.x0 + f * s, nd.y0 - probe));
                    pts.push(PlanePoint::new(nd.x0 + f * s, nd.y0 + s + probe));
                    pts.push(PlanePoint::new(nd.x0 - probe, nd.y0 + f * s));
                    pts.push(PlanePoint::new(nd.x0 + s + probe, nd.y0 + f * s));
                }
                for (cx, cy) in [(0.0, 0.0), (1.0, 0.0), (0.0, 1.0), (1.0, 1.0)] {
                    pts.push(PlanePoint::new(
                        nd.x0 + cx * s + (2.0 * cx - 1.0) * probe,
                        nd.y0 + cy * s + (2.0 * cy - 1.0) * probe,
                    ));
                }
                let needs = pts.iter().any(|&p| {
                    self.locate_node(p)
                        .map(|j| self.tree[j as usize].size < 0.5 * s * (1.0 - 1e-9))
                        .unwrap_or(false)
                });
                if needs {
                    split.push(i);
                }
            }
            if split.is_empty() {
                break;
            }
            for i in split {
                if self.tree[i as usize].kids == NONE {
                    self.split(i);
                }
            }
        }
    }

    fn collect_leaves(&mut self) {
        let leaves = self.leaf_nodes();
        self.cells = Vec::with_capacity(leaves.len());
        for (k, &i) in leaves.iter().enumerate() {
            let nd = self.tree[i as usize];
            self.tree[i as usize].leaf = k as u32;
            self.cells.push(Cell {
                center: PlanePoint::new(nd.x0 + nd.size / 2.0, nd.y0 + nd.size / 2.0),
                size: nd.size,
                owner: None,
            });
        }
    }

    fn classify(&mut self, spec: &DomainSpec) {
        let w = self.window;
        let mut owner_of_spec: Vec<Option<u32>> = vec![None; spec.len()];
        for (si, c) in spec.components().iter().enumerate() {
            let (lo, hi) = shape_bbox(&c.shape);
            if hi.x < w.min.x || lo.x > w.max.x || hi.y < w.min.y || lo.y > w.max.y {
                continue;
            }
            let k = self.components.len() as u32;
            owner_of_spec[si] = Some(k);
            let anchor = match &c.shape {
                Shape::Point { at } => *at,
                Shape::Disk { center, .. } => *center,
                Shape::Annulus {
                    center,
                    r_in,
                    r_out,
                } => PlanePoint::new(center.x + 0.5 * (r_in + r_out), center.y),
                Shape::Polygon { vertices } => vertices[0],
            };
            self.components.push(ComponentNode {
                id: c.id.clone(),
                cells: Vec::new(),
                anchor,
                host: None,
                bbox: (lo, hi),
                pieces: 0,
            });
        }
        for ci in 0..self.cells.len() {
            let p = self.cells[ci].center;
            for (si, c) in spec.components().iter().enumerate() {
                let Some(k) = owner_of_spec[si] else { continue };
                let (lo, hi) = self.components[k as usize].bbox;
                if p.x < lo.x || p.x > hi.x || p.y < lo.y || p.y > hi.y {
                    continue;
                }
                if shape_contains(&c.shape, p) {
                    self.cells[ci].owner = Some(k);
                    self.components[k as usize].cells.push(ci as u32);
                    break;
                }
            }
        }
        for k in 0..self.components.len() {
            let comp = &self.components[k];
            if let Some(&first) = comp.cells.first() {
                let local = self.cells[first as usize].size;
                let (lo, hi) = comp.bbox;
                if (hi.x - lo.x).max(hi.y - lo.y) < 2.0 * local {
                    let msg = format!(
                        "component {} is finer than two cells and is absorbed into a bare node",
                        comp.id
                    );
                    warn!("{msg}");
                    self.warnings.push(msg);
                    let cells = std::mem::take(&mut self.components[k].cells);
                    for c in cells {
                        self.cells[c as usize].owner = None;
                    }
                }
            } else if !matches!(spec.get(&comp.id).map(|c| &c.shape), Ok(Shape::Point { .. })) {
                let msg = format!("component {} covers no cell center; kept as a bare node", comp.id);
                warn!("{msg}");
                self.warnings.push(msg);
            }
        }
        for k in 0..self.components.len() {
            if self.components[k].cells.is_empty() {
                let host = self.locate(self.components[k].anchor);
                self.components[k].host = host;
            } else {
                let first = self.components[k].cells[0];
                self.components[k].anchor = self.cells[first as usize].center;
            }
        }
    }

    /// Leaf cell containing `p` (half-open cells), if `p` lies in the window.
    pub fn locate(&self, p: PlanePoint) -> Option<u32> {
        self.locate_node(p).map(|i| self.tree[i as usize].leaf)
    }

    pub fn num_cells(&self) -> usize {
        self.cells.len()
    }

    pub fn num_nodes(&self) -> usize {
        self.cells.len() + self.components.len()
    }

    /// Node index of component `k`.
    pub fn component_node(&self, k: usize) -> usize {
        self.cells.len() + k
    }

    /// Component index of a node, if it is a component node.
    pub fn node_component(&self, node: usize) -> Option<usize> {
        node.checked_sub(self.cells.len())
            .filter(|&k| k < self.components.len())
    }

    pub fn component_index(&self, id: &str) -> Option<usize> {
        self.components.iter().position(|c| c.id == id)
    }

    /// Measure σ: cell area for cells, 1 for component nodes.
    pub fn sigma(&self, node: usize) -> f64 {
        if node < self.cells.len() {
            let s = self.cells[node].size;
            s * s
        } else {
            1.0
        }
    }

    pub fn min_cell_size(&self) -> f64 {
        self.eps * 1e9
    }

    /// Geometric tolerance (a tiny fraction of the smallest cell).
    pub fn eps(&self) -> f64 {
        self.eps
    }

    /// Leaves whose closed square meets the segment, with the length of the
    /// segment inside each (pieces along a shared side count half on each side).
    pub fn segment_cells(&self, p: PlanePoint, q: PlanePoint) -> Vec<(u32, f64)> {
        let mut out = Vec::new();
        let e = self.eps;
        let lo = PlanePoint::new(p.x.min(q.x) - e, p.y.min(q.y) - e);
        let hi = PlanePoint::new(p.x.max(q.x) + e, p.y.max(q.y) + e);
        let w = &self.window;
        let ix0 = (((lo.x - w.min.x) / self.root).floor().max(0.0) as usize).min(self.nx - 1);
        let ix1 = (((hi.x - w.min.x) / self.root).floor().max(0.0) as usize).min(self.nx - 1);
        let iy0 = (((lo.y - w.min.y) / self.root).floor().max(0.0) as usize).min(self.ny - 1);
        let iy1 = (((hi.y - w.min.y) / self.root).floor().max(0.0) as usize).min(self.ny - 1);
        let total = p.dist(q);
        let mut stack = Vec::new();
        for iy in iy0..=iy1 {
            for ix in ix0..=ix1 {
                stack.push((iy * self.nx + ix) as u32);
            }
        }
        while let Some(i) = stack.pop() {
            let nd = self.tree[i as usize];
            let blo = PlanePoint::new(nd.x0 - e, nd.y0 - e);
            let bhi = PlanePoint::new(nd.x0 + nd.size + e, nd.y0 + nd.size + e);
            if clip(p, q, blo, bhi).is_none() {
                continue;
            }
            if nd.kids != NONE {
                stack.extend([nd.kids, nd.kids + 1, nd.kids + 2, nd.kids + 3]);
                continue;
            }
            let exact_lo = PlanePoint::new(nd.x0, nd.y0);
            let exact_hi = PlanePoint::new(nd.x0 + nd.size, nd.y0 + nd.size);
            let mut len = 0.0;
            if let Some((t0, t1)) = clip(p, q, exact_lo, exact_hi) {
                len = (t1 - t0).max(0.0) * total;
                if len > e {
                    let m = p + (q - p) * (0.5 * (t0 + t1));
                    let on_side = (m.x - exact_lo.x).abs() < e
                        || (m.x - exact_hi.x).abs() < e
                        || (m.y - exact_lo.y).abs() < e
                        || (m.y - exact_hi.y).abs() < e;
                    if on_side {
                        len *= 0.5;
                    }
                } else {
                    len = 0.0;
                }
            }
            out.push((nd.leaf, len));
        }
        out.sort_by_key(|x| x.0);
        out
    }

    fn leaves_in_box(&self, lo: PlanePoint, hi: PlanePoint) -> Vec<u32> {
        let w = &self.window;
        let clampi = |v: f64, n: usize| ((v.floor().max(0.0)) as usize).min(n - 1);
        let ix0 = clampi((lo.x - w.min.x) / self.root, self.nx);
        let ix1 = clampi((hi.x - w.min.x) / self.root, self.nx);
        let iy0 = clampi((lo.y - w.min.y) / self.root, self.ny);
        let iy1 = clampi((hi.y - w.min.y) / self.root, self.ny);
        let mut out = Vec::new();
        let mut stack = Vec::new();
        for iy in iy0..=iy1 {
            for ix in ix0..=ix1 {
                stack.push((iy * self.nx + ix) as u32);
            }
        }
        while let Some(i) = stack.pop() {
            let nd = self.tree[i as usize];
            if nd.x0 > hi.x || nd.x0 + nd.size < lo.x || nd.y0 > hi.y || nd.y0 + nd.size < lo.y {
                continue;
            }
            if nd.kids == NONE {
                out.push(nd.leaf);
            } else {
                stack.extend([nd.kids, nd.kids + 1, nd.kids + 2, nd.kids + 3]);
            }
        }
        out
    }

    fn build_edges(&mut self) {
        let nc = self.cells.len();
        let eps = self.eps;
        let mut cell_edges: Vec<(u32, u32, Vec<(u32, f64)>)> = Vec::new();
        // (cell, component) -> (omega length, attachment cell, coefs)
        let mut comp_edges: BTreeMap<(u32, u32), (f64, u32, Vec<(u32, f64)>)> = BTreeMap::new();
        // (comp a, comp b) -> (omega length, cell in a, cell in b, coefs)
        let mut comp_pairs: BTreeMap<(u32, u32), (f64, u32, u32, Vec<(u32, f64)>)> = BTreeMap::new();
        for c in 0..nc as u32 {
            let cc = self.cells[c as usize];
            let r = STENCIL_REACH * cc.size;
            let cand = self.leaves_in_box(
                PlanePoint::new(cc.center.x - r, cc.center.y - r),
                PlanePoint::new(cc.center.x + r, cc.center.y + r),
            );
            for d in cand {
                if d == c {
                    continue;
                }
                let cd = self.cells[d as usize];
                if cd.size > cc.size * (1.0 + 1e-9) || cd.size < 0.5 * cc.size * (1.0 - 1e-9) {
                    continue;
                }
                if (cd.size - cc.size).abs() <= 1e-9 * cc.size && d < c {
                    continue;
                }
                let dist = cc.center.dist(cd.center);
                if dist > STENCIL_REACH * 0.5 * (cc.size + cd.size) + eps {
                    continue;
                }
                let touched = self.segment_cells(cc.center, cd.center);
                let through_center = touched.iter().any(|&(t, _)| {
                    t != c
                        && t != d
                        && crate::geom::point_segment_distance(
                            self.cells[t as usize].center,
                            cc.center,
                            cd.center,
                        ) < eps
                });
                if through_center {
                    continue;
                }
                let (oc, od) = (cc.owner, cd.owner);
                let mut owners: Vec<u32> = touched
                    .iter()
                    .filter_map(|&(t, _)| self.cells[t as usize].owner)
                    .collect();
                owners.sort_unstable();
                owners.dedup();
                let omega: Vec<(u32, f64)> = touched
                    .iter()
                    .copied()
                    .filter(|&(t, _)| self.cells[t as usize].owner.is_none())
                    .collect();
                let omega_len: f64 = omega.iter().map(|x| x.1).sum();
                match (oc, od) {
                    (None, None) => {
                        if owners.is_empty() {
                            cell_edges.push((c, d, touched));
                        }
                    }
                    (None, Some(a)) | (Some(a), None) => {
                        if owners == [a] {
                            let (cell, k) = if oc.is_none() { (c, d) } else { (d, c) };
                            let entry = comp_edges.entry((cell, a)).or_insert((f64::INFINITY, NONE, Vec::new()));
                            if omega_len < entry.0 - eps || (omega_len <= entry.0 + eps && k < entry.1) {
                                *entry = (omega_len, k, omega);
                            }
                        }
                    }
                    (Some(a), Some(b)) if a == b => {
                        if owners == [a] && omega.is_empty() {
                            self.internal.push((c.min(d), c.max(d)));
                        }
                    }
                    (Some(a), Some(b)) => {
                        if owners.len() == 2 {
                            let (ka, kb) = if a < b { (c, d) } else { (d, c) };
                            let key = (a.min(b), a.max(b));
                            let entry = comp_pairs
                                .entry(key)
                                .or_insert((f64::INFINITY, NONE, NONE, Vec::new()));
                            if omega_len < entry.0 - eps {
                                *entry = (omega_len, ka, kb, omega);
                            }
                        }
                    }
                }
            }
        }
        for (u, v, coefs) in cell_edges {
            self.push_edge(u, v, u, v, &coefs);
        }
        for ((cell, a), (_, k, coefs)) in comp_edges {
            self.push_edge(cell, nc as u32 + a, cell, k, &coefs);
        }
        for ((a, b), (_, ka, kb, coefs)) in comp_pairs {
            self.push_edge(nc as u32 + a, nc as u32 + b, ka, kb, &coefs);
        }
        for k in 0..self.components.len() {
            if !self.components[k].cells.is_empty() {
                continue;
            }
            let Some(host) = self.components[k].host else { continue };
            let anchor = self.components[k].anchor;
            let hc = self.cells[host as usize];
            let touched = self.segment_cells(anchor, hc.center);
            let node = nc as u32 + k as u32;
            match hc.owner {
                None => {
                    if touched.iter().all(|&(t, _)| self.cells[t as usize].owner.is_none()) {
                        self.push_edge(node, host, NONE, host, &touched);
                    }
                }
                Some(a) => {
                    self.push_edge(node, nc as u32 + a, NONE, host, &[]);
                }
            }
        }
        // component pieces
        let mut dsu = Dsu::new(nc);
        for &(a, b) in &self.internal {
            dsu.union(a, b);
        }
        for k in 0..self.components.len() {
            let mut roots: Vec<u32> = self.components[k].cells.iter().map(|&c| dsu.find(c)).collect();
            roots.sort_unstable();
            roots.dedup();
            self.components[k].pieces = roots.len().max(1);
        }
        // adjacency
        let nn = self.num_nodes();
        let mut deg = vec![0u32; nn + 1];
        for e in &self.edges {
            deg[e.u as usize] += 1;
            deg[e.v as usize] += 1;
        }
        let mut start = vec![0u32; nn + 1];
        for i in 0..nn {
            start[i + 1] = start[i] + deg[i];
        }
        let mut fill = start.clone();
        self.adj = vec![(0, 0); start[nn] as usize];
        for (ei, e) in self.edges.iter().enumerate() {
            self.adj[fill[e.u as usize] as usize] = (e.v, ei as u32);
            fill[e.u as usize] += 1;
            self.adj[fill[e.v as usize] as usize] = (e.u, ei as u32);
            fill[e.v as usize] += 1;
        }
        self.adj_start = start;
    }

    fn push_edge(&mut self, u: u32, v: u32, ku: u32, kv: u32, coefs: &[(u32, f64)]) {
        let start = self.coef_cell.len() as u32;
        for &(c, l) in coefs {
            self.coef_cell.push(c);
            self.coef_len.push(l);
        }
        self.edges.push(Edge {
            u,
            v,
            ku,
            kv,
            coef_start: start,
            coef_len: coefs.len() as u32,
        });
    }

    /// `(neighbor, edge index)` pairs of a node.
    pub fn neighbors(&self, node: usize) -> &[(u32, u32)] {
        let (s, e) = (self.adj_start[node] as usize, self.adj_start[node + 1] as usize);
        &self.adj[s..e]
    }

    /// Cells touched by an edge with the segment length inside each.
    pub fn edge_coefs(&self, e: usize) -> impl Iterator<Item = (u32, f64)> + '_ {
        let ed = &self.edges[e];
        let s = ed.coef_start as usize;
        let n = ed.coef_len as usize;
        self.coef_cell[s..s + n]
            .iter()
            .copied()
            .zip(self.coef_len[s..s + n].iter().copied())
    }

    pub fn edge_between(&self, u: usize, v: usize) -> Option<usize> {
        self.neighbors(u)
            .iter()
            .find(|&&(w, _)| w as usize == v)
            .map(|&(_, e)| e as usize)
    }

    /// Geometric point realizing an edge endpoint.
    pub fn realization_point(&self, node: u32, k: u32) -> PlanePoint {
        if k != NONE {
            self.cells[k as usize].center
        } else {
            let comp = self.node_component(node as usize).expect("bare endpoint is a component");
            self.components[comp].anchor
        }
    }

    /// Segment realizing edge `e`, oriented from `u` to `v`.
    pub fn edge_segment(&self, e: usize) -> (PlanePoint, PlanePoint) {
        let ed = &self.edges[e];
        (
            self.realization_point(ed.u, ed.ku),
            self.realization_point(ed.v, ed.kv),
        )
    }

    fn build_side_adjacency(&mut self) {
        let mut start = Vec::with_capacity(self.cells.len() + 1);
        let mut adj = Vec::with_capacity(4 * self.cells.len());
        start.push(0);
        for c in 0..self.cells.len() as u32 {
            adj.extend(self.probe_side_neighbors(c));
            start.push(adj.len() as u32);
        }
        self.side_start = start;
        self.side_adj = adj;
    }

    /// Leaves sharing a side (or part of one) with `c`.
    pub fn side_neighbors(&self, c: u32) -> &[u32] {
        let (s, e) = (self.side_start[c as usize], self.side_start[c as usize + 1]);
        &self.side_adj[s as usize..e as usize]
    }

    fn probe_side_neighbors(&self, c: u32) -> Vec<u32> {
        let cell = self.cells[c as usize];
        let (lo, hi) = (cell.lo(), cell.hi());
        let s = cell.size;
        let probe = 1e-7 * s;
        let mut out = Vec::with_capacity(8);
        for f in [0.25, 0.75] {
            for p in [
                PlanePoint::new(lo.x + f * s, lo.y - probe),
                PlanePoint::new(lo.x + f * s, hi.y + probe),
                PlanePoint::new(lo.x - probe, lo.y + f * s),
                PlanePoint::new(hi.x + probe, lo.y + f * s),
            ] {
                if let Some(l) = self.locate(p) {
                    if !out.contains(&l) {
                        out.push(l);
                    }
                }
            }
        }
        out
    }

    fn touches_window_boundary(&self, c: u32) -> bool {
        let cell = self.cells[c as usize];
        let e = self.eps;
        cell.lo().x <= self.window.min.x + e
            || cell.lo().y <= self.window.min.y + e
            || cell.hi().x >= self.window.max.x - e
            || cell.hi().y >= self.window.max.y - e
    }

    /// Flood fill from the window boundary through cells not blocked by the walk
    /// (cells its steps touch, plus the cells of components it visits and of
    /// `extra` components). Returns which `targets` (nodes) stay unreached.
    pub fn separated(&self, walk: &[usize], extra: &[usize], targets: &[usize]) -> Result<Vec<bool>> {
        let nc = self.cells.len();
        let mut blocked = vec![false; nc];
        let block_node = |node: usize, blocked: &mut Vec<bool>| {
            if node < nc {
                blocked[node] = true;
            } else if let Some(k) = self.node_component(node) {
                for &c in &self.components[k].cells {
                    blocked[c as usize] = true;
                }
            }
        };
        for pair in walk.windows(2) {
            let e = self.edge_between(pair[0], pair[1]).ok_or_else(|| {
                Error::InvalidWalk(format!("nodes {} and {} are not adjacent", pair[0], pair[1]))
            })?;
            for (c, _) in self.edge_coefs(e) {
                blocked[c as usize] = true;
            }
        }
        for &node in walk.iter().chain(extra) {
            block_node(node, &mut blocked);
        }
        let mut seen = vec![false; nc];
        let mut queue: Vec<u32> = (0..nc as u32)
            .filter(|&c| !blocked[c as usize] && self.touches_window_boundary(c))
            .collect();
        for &c in &queue {
            seen[c as usize] = true;
        }
        while let Some(c) = queue.pop() {
            for &d in self.side_neighbors(c) {
                if !seen[d as usize] && !blocked[d as usize] {
                    seen[d as usize] = true;
                    queue.push(d);
                }
            }
        }
        Ok(targets
            .iter()
            .map(|&t| {
                if t < nc {
                    !seen[t]
                } else {
                    let k = self.node_component(t).expect("target node exists");
                    let comp = &self.components[k];
                    if comp.cells.is_empty() {
                        comp.host.map(|h| !seen[h as usize]).unwrap_or(true)
                    } else {
                        comp.cells.iter().all(|&c| !seen[c as usize])
                    }
                }
            })
            .collect())
    }
}

/// Nonnegative weights on cells and component nodes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExtendedMetric {
    pub weights: Vec<f64>,
}

impl ExtendedMetric {
    pub fn zeros(grid: &QuotientGrid) -> Self {
        ExtendedMetric {
            weights: vec![0.0; grid.num_nodes()],
        }
    }

    pub fn uniform(grid: &QuotientGrid, value: f64) -> Self {
        ExtendedMetric {
            weights: vec![value; grid.num_nodes()],
        }
    }

    /// `A(m) = Σ σ m²`.
    pub fn area(&self, grid: &QuotientGrid) -> f64 {
        self.weights
            .iter()
            .enumerate()
            .map(|(i, w)| grid.sigma(i) * w * w)
            .sum()
    }

    pub fn scaled(&self, c: f64) -> Self {
        ExtendedMetric {
            weights: self.weights.iter().map(|w| w * c).collect(),
        }
    }
}

/// Linear functional of a walk: `L_m = Σ len·m(cell) + Σ m(component)`.
#[derive(Debug, Clone, PartialEq)]
pub struct WalkFunctional {
    pub cells: Vec<(u32, f64)>,
    pub components: Vec<u32>,
}

impl WalkFunctional {
    pub fn eval(&self, grid: &QuotientGrid, m: &ExtendedMetric) -> f64 {
        let nc = grid.num_cells();
        self.cells.iter().map(|&(c, l)| l * m.weights[c as usize]).sum::<f64>()
            + self
                .components
                .iter()
                .map(|&k| m.weights[nc + k as usize])
                .sum::<f64>()
    }
}

/// Line-integral coefficients of a walk; each component counts once.
pub fn walk_functional(grid: &QuotientGrid, walk: &[usize]) -> Result<WalkFunctional> {
    let nn = grid.num_nodes();
    if walk.iter().any(|&v| v >= nn) {
        return Err(Error::InvalidWalk("node index out of range".into()));
    }
    let mut cells: HashMap<u32, f64> = HashMap::new();
    for pair in walk.windows(2) {
        let e = grid.edge_between(pair[0], pair[1]).ok_or_else(|| {
            Error::InvalidWalk(format!("nodes {} and {} are not adjacent", pair[0], pair[1]))
        })?;
        for (c, l) in grid.edge_coefs(e) {
            if l > 0.0 {
                *cells.entry(c).or_insert(0.0) += l;
            }
        }
    }
    let mut cells: Vec<(u32, f64)> = cells.into_iter().collect();
    cells.sort_by_key(|x| x.0);
    let mut components: Vec<u32> = walk
        .iter()
        .filter_map(|&v| grid.node_component(v).map(|k| k as u32))
        .collect();
    components.sort_unstable();
    components.dedup();
    Ok(WalkFunctional { cells, components })
}

/// m-length of a walk (a closed walk repeats its first node at the end).
pub fn curve_length(grid: &QuotientGrid, m: &ExtendedMetric, walk: &[usize]) -> Result<f64> {
    if m.weights.len() != grid.num_nodes() {
        return Err(Error::InvalidParameter("metric does not match grid".into()));
    }
    Ok(walk_functional(grid, walk)?.eval(grid, m))
}

/// A closed polygon in Ω around a component, with the cells it touches.
#[derive(Debug, Clone, PartialEq)]
pub struct BetaCurve {
    pub polygon: Vec<PlanePoint>,
    pub cells: Vec<u32>,
}

/// Smallest rectangle through cell centers around component `b` whose touched
/// cells all lie in Ω, grown one cell at a time.
pub fn beta_curve(grid: &QuotientGrid, b: &str) -> Result<BetaCurve> {
    let k = grid
        .component_index(b)
        .ok_or_else(|| Error::UnknownComponent(b.to_string()))?;
    let comp = &grid.components[k];
    let anchor_cell = comp
        .cells
        .first()
        .copied()
        .or(comp.host)
        .ok_or_else(|| Error::NoSeparatingCycle(format!("{b} lies outside the window")))?;
    let s = grid.cells[anchor_cell as usize].size;
    let w = grid.window;
    let u = |x: f64, o: f64| (x - o) / s - 0.5;
    let (lo, hi) = comp.bbox;
    let mut kx0 = (u(lo.x, w.min.x) + 0.5).floor() - 1.0;
    let mut kx1 = (u(hi.x, w.min.x) - 0.5).ceil() + 1.0;
    let mut ky0 = (u(lo.y, w.min.y) + 0.5).floor() - 1.0;
    let mut ky1 = (u(hi.y, w.min.y) - 0.5).ceil() + 1.0;
    let at = |k: f64, o: f64| o + (k + 0.5) * s;
    loop {
        let (x0, x1, y0, y1) = (at(kx0, w.min.x), at(kx1, w.min.x), at(ky0, w.min.y), at(ky1, w.min.y));
        if x0 <= w.min.x || y0 <= w.min.y || x1 >= w.max.x || y1 >= w.max.y {
            return Err(Error::NoSeparatingCycle(format!(
                "no all-Ω rectangle around {b} inside the window"
            )));
        }
        let polygon = vec![
            PlanePoint::new(x0, y0),
            PlanePoint::new(x1, y0),
            PlanePoint::new(x1, y1),
            PlanePoint::new(x0, y1),
        ];
        if let Some(cells) = polygon_cells_in_omega(grid, &polygon) {
            return Ok(BetaCurve { polygon, cells });
        }
        kx0 -= 1.0;
        ky0 -= 1.0;
        kx1 += 1.0;
        ky1 += 1.0;
    }
}

/// Cells touched by a closed polygon, or `None` if one of them (or a bare
/// component) is not in Ω.
pub fn polygon_cells_in_omega(grid: &QuotientGrid, polygon: &[PlanePoint]) -> Option<Vec<u32>> {
    let mut cells = Vec::new();
    for i in 0..polygon.len() {
        let (p, q) = (polygon[i], polygon[(i + 1) % polygon.len()]);
        for (c, _) in grid.segment_cells(p, q) {
            if grid.cells[c as usize].owner.is_some() {
                return None;
            }
            cells.push(c);
        }
        for comp in grid.components.iter().filter(|c| c.is_bare()) {
            if crate::geom::point_segment_distance(comp.anchor, p, q) <= grid.eps {
                return None;
            }
        }
    }
    cells.sort_unstable();
    cells.dedup();
    Some(cells)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::domain::{validate_domain, ComplementComponent, RawDomain};

    fn p(x: f64, y: f64) -> PlanePoint {
        PlanePoint::new(x, y)
    }

    fn spec(comps: Vec<ComplementComponent>) -> DomainSpec {
        validate_domain(RawDomain { components: comps }).unwrap()
    }

    #[test]
    fn empty_spec_is_pure_grid() {
        let g = build_quotient_grid(&spec(vec![]), Window::square(p(0.0, 0.0), 1.0), 16).unwrap();
        assert_eq!(g.num_cells(), 256);
        assert!(g.components.is_empty());
        // interior cell: 16 stencil directions
        let c = g.locate(p(0.01, 0.01)).unwrap() as usize;
        assert_eq!(g.neighbors(c).len(), 16);
    }

    #[test]
    fn disk_pixel_count() {
        let g = build_quotient_grid(
            &spec(vec![ComplementComponent::disk("d", p(0.0, 0.0), 0.5)]),
            Window::square(p(0.0, 0.0), 1.0),
            64,
        )
        .unwrap();
        assert_eq!(g.components.len(), 1);
        let h = g.h;
        let expect = std::f64::consts::PI * (0.5 / h).powi(2);
        let got = g.components[0].cells.len() as f64;
        assert!((got - expect).abs() < 2.0 * std::f64::consts::PI * 0.5 / h, "{got} vs {expect}");
        assert_eq!(g.components[0].pieces, 1);
    }

    #[test]
    fn disjoint_disks_never_merge() {
        let g = build_quotient_grid(
            &spec(vec![
                ComplementComponent::disk("a", p(-0.4, 0.0), 0.3),
                ComplementComponent::disk("b", p(0.4, 0.0), 0.3),
            ]),
            Window::square(p(0.0, 0.0), 1.0),
            64,
        )
        .unwrap();
        assert_eq!(g.components.len(), 2);
        assert!(g.cells.iter().all(|c| c.owner.map_or(true, |o| o < 2)));
    }

    #[test]
    fn step_lengths_are_exact() {
        let g = build_quotient_grid(&spec(vec![]), Window::square(p(0.0, 0.0), 1.0), 16).unwrap();
        let h = g.h;
        for e in 0..g.edges.len() {
            let (a, b) = g.edge_segment(e);
            let total: f64 = g.edge_coefs(e).map(|x| x.1).sum();
            assert!((total - a.dist(b)).abs() < 1e-12, "edge {e}");
            assert!(a.dist(b) <= 2.25 * h);
        }
    }

    #[test]
    fn curve_length_examples() {
        let g = build_quotient_grid(&spec(vec![]), Window::square(p(0.0, 0.0), 1.0), 16).unwrap();
        let m = ExtendedMetric::uniform(&g, 1.0);
        let c0 = g.locate(p(0.01, 0.01)).unwrap() as usize;
        let c1 = g.locate(p(0.01 + g.h, 0.01)).unwrap() as usize;
        let c2 = g.locate(p(0.01 + g.h, 0.01 + g.h)).unwrap() as usize;
        let c3 = g.locate(p(0.01, 0.01 + g.h)).unwrap() as usize;
        let walk = [c0, c1, c2, c3, c0];
        assert!((curve_length(&g, &m, &walk).unwrap() - 4.0 * g.h).abs() < 1e-12);
        let zero = ExtendedMetric::zeros(&g);
        assert_eq!(curve_length(&g, &zero, &walk).unwrap(), 0.0);
        let far = g.locate(p(0.9, 0.9)).unwrap() as usize;
        assert!(matches!(
            curve_length(&g, &m, &[c0, far]),
            Err(Error::InvalidWalk(_))
        ));
    }

    #[test]
    fn component_charged_once() {
        let s = spec(vec![ComplementComponent::disk("a", p(0.0, 0.0), 0.3)]);
        let g = build_quotient_grid(&s, Window::square(p(0.0, 0.0), 1.0), 32).unwrap();
        let a = g.component_node(0);
        let (nb, _) = g.neighbors(a)[0];
        let mut m = ExtendedMetric::zeros(&g);
        m.weights[a] = 5.0;
        let walk = [nb as usize, a, nb as usize, a, nb as usize];
        assert_eq!(curve_length(&g, &m, &walk).unwrap(), 5.0);
    }

    #[test]
    fn beta_curves() {
        let s = spec(vec![
            ComplementComponent::disk("d", p(0.0, 0.0), 0.2),
            ComplementComponent::point("p", p(0.51, 0.52)),
        ]);
        let g = build_quotient_grid(&s, Window::square(p(0.0, 0.0), 1.0), 32).unwrap();
        let beta = beta_curve(&g, "d").unwrap();
        let h = g.h;
        let x0 = beta.polygon[0].x;
        assert!(x0 < -0.2 && x0 > -0.2 - 2.0 * h, "{x0}");
        let bp = beta_curve(&g, "p").unwrap();
        assert_eq!(bp.cells.len(), 8);
    }

    #[test]
    fn refined_grid_is_balanced_and_exact() {
        let r = Refinement::around(p(0.1, 0.1), 1e-3, 4.0);
        let g = build_refined_grid(&spec(vec![]), Window::square(p(0.0, 0.0), 1.0), 16, &r).unwrap();
        assert!(g.num_cells() > 256);
        let area: f64 = g.cells.iter().map(|c| c.size * c.size).sum();
        assert!((area - 4.0).abs() < 1e-9);
        for c in 0..g.num_cells() as u32 {
            for &d in g.side_neighbors(c) {
                let r = g.cells[c as usize].size / g.cells[d as usize].size;
                assert!((0.49..=2.01).contains(&r));
            }
        }
        for e in 0..g.edges.len() {
            let (a, b) = g.edge_segment(e);
            let total: f64 = g.edge_coefs(e).map(|x| x.1).sum();
            assert!((total - a.dist(b)).abs() < 1e-12 * (1.0 + a.dist(b)));
        }
    }

    #[test]
    fn ring_separates_center() {
        let g = build_quotient_grid(&spec(vec![]), Window::square(p(0.0, 0.0), 1.0), 16).unwrap();
        let h = g.h;
        let mut walk = Vec::new();
        for k in -2..=2 {
            walk.push(g.locate(p(k as f64 * h + 0.01, -2.0 * h + 0.01)).unwrap() as usize);
        }
        for k in -1..=2 {
            walk.push(g.locate(p(2.0 * h + 0.01, k as f64 * h + 0.01)).unwrap() as usize);
        }
        for k in (-2..=1).rev() {
            walk.push(g.locate(p(k as f64 * h + 0.01, 2.0 * h + 0.01)).unwrap() as usize);
        }
        for k in (-2..=1).rev() {
            walk.push(g.locate(p(-2.0 * h + 0.01, k as f64 * h + 0.01)).unwrap() as usize);
        }
        let center = g.locate(p(0.01, 0.01)).unwrap() as usize;
        let outside = g.locate(p(0.9, 0.9)).unwrap() as usize;
        let sep = g.separated(&walk, &[], &[center, outside]).unwrap();
        assert_eq!(sep, vec![true, false]);
    }
}
