//! Domains described by their complementary components.
//!
//! A [`DomainSpec`] lists finitely many pairwise disjoint compact components; the
//! domain Ω is the complement of their union and always contains ∞.

use std::collections::BTreeMap;
use std::f64::consts::{FRAC_PI_4, PI, TAU};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geom::{
    point_in_polygon, point_segment_distance, polygon_is_simple, segments_intersect, signed_area,
    Mobius, PlanePoint,
};

/// Minimum separation between components, in domain units.
pub const MIN_SEPARATION: f64 = 1e-9;

const COORD_LIMIT: f64 = 1e12;

/// Geometry of one complementary component.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "lowercase", deny_unknown_fields)]
pub enum Shape {
    Point {
        at: PlanePoint,
    },
    Disk {
        center: PlanePoint,
        radius: f64,
    },
    Polygon {
        vertices: Vec<PlanePoint>,
    },
    Annulus {
        center: PlanePoint,
        r_in: f64,
        r_out: f64,
    },
}

/// One connected piece of the complement of Ω.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ComplementComponent {
    pub id: String,
    pub shape: Shape,
}

impl ComplementComponent {
    pub fn new(id: impl Into<String>, shape: Shape) -> Self {
        ComplementComponent {
            id: id.into(),
            shape,
        }
    }

    pub fn point(id: impl Into<String>, at: PlanePoint) -> Self {
        Self::new(id, Shape::Point { at })
    }

    pub fn disk(id: impl Into<String>, center: PlanePoint, radius: f64) -> Self {
        Self::new(id, Shape::Disk { center, radius })
    }

    pub fn polygon(id: impl Into<String>, vertices: Vec<PlanePoint>) -> Self {
        Self::new(id, Shape::Polygon { vertices })
    }

    pub fn annulus(id: impl Into<String>, center: PlanePoint, r_in: f64, r_out: f64) -> Self {
        Self::new(
            id,
            Shape::Annulus {
                center,
                r_in,
                r_out,
            },
        )
    }

    pub fn is_trivial(&self) -> bool {
        matches!(self.shape, Shape::Point { .. })
    }
}

/// Raw domain file contents before validation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RawDomain {
    pub components: Vec<ComplementComponent>,
}

/// A validated domain: disjoint bounded components sorted by id.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DomainSpec {
    components: Vec<ComplementComponent>,
}

impl DomainSpec {
    pub fn components(&self) -> &[ComplementComponent] {
        &self.components
    }

    pub fn get(&self, id: &str) -> Result<&ComplementComponent> {
        self.components
            .iter()
            .find(|c| c.id == id)
            .ok_or_else(|| Error::UnknownComponent(id.to_string()))
    }

    pub fn len(&self) -> usize {
        self.components.len()
    }

    pub fn is_empty(&self) -> bool {
        self.components.is_empty()
    }

    pub fn to_raw(&self) -> RawDomain {
        RawDomain {
            components: self.components.clone(),
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(&self.to_raw()).expect("domain serializes")
    }

    /// Parses and validates a domain file.
    pub fn from_json(text: &str) -> Result<DomainSpec> {
        let raw: RawDomain = serde_json::from_str(text).map_err(|e| Error::Parse(e.to_string()))?;
        validate_domain(raw)
    }

    /// Restriction to the listed components (ids not present are ignored).
    pub fn subset<'a>(&self, ids: impl IntoIterator<Item = &'a str>) -> DomainSpec {
        let keep: Vec<&str> = ids.into_iter().collect();
        DomainSpec {
            components: self
                .components
                .iter()
                .filter(|c| keep.contains(&c.id.as_str()))
                .cloned()
                .collect(),
        }
    }

    /// Axis-aligned bounding box `(min, max)` of all components.
    pub fn bbox(&self) -> Option<(PlanePoint, PlanePoint)> {
        let mut it = self.components.iter().map(|c| shape_bbox(&c.shape));
        let first = it.next()?;
        Some(it.fold(first, |(lo, hi), (a, b)| {
            (
                PlanePoint::new(lo.x.min(a.x), lo.y.min(a.y)),
                PlanePoint::new(hi.x.max(b.x), hi.y.max(b.y)),
            )
        }))
    }

    /// Image of the domain under a Möbius map whose pole lies in Ω.
    pub fn map_mobius(&self, t: &Mobius) -> Result<DomainSpec> {
        let comps = self
            .components
            .iter()
            .map(|c| Ok(ComplementComponent::new(c.id.clone(), map_shape(&c.shape, t)?)))
            .collect::<Result<Vec<_>>>()?;
        validate_domain(RawDomain { components: comps })
    }
}

fn map_shape(shape: &Shape, t: &Mobius) -> Result<Shape> {
    if let Some(pole) = t.pole() {
        if shape_distance_to_point(shape, pole) <= 0.0 {
            return Err(Error::InvalidParameter(
                "Möbius pole lies inside a component".into(),
            ));
        }
    }
    Ok(match shape {
        Shape::Point { at } => Shape::Point {
            at: t.apply_finite(*at),
        },
        Shape::Disk { center, radius } => {
            let (c, r) = t.apply_circle(*center, *radius);
            Shape::Disk {
                center: c,
                radius: r,
            }
        }
        Shape::Polygon { vertices } => {
            // Exact for affine maps; for other maps edges bend and only vertices are tracked.
            Shape::Polygon {
                vertices: vertices.iter().map(|v| t.apply_finite(*v)).collect(),
            }
        }
        Shape::Annulus {
            center,
            r_in,
            r_out,
        } => {
            if !t.is_affine() {
                return Err(Error::InvalidParameter(
                    "annulus image under a non-affine Möbius map is not an annulus".into(),
                ));
            }
            let (c, ri) = t.apply_circle(*center, *r_in);
            let (_, ro) = t.apply_circle(*center, *r_out);
            Shape::Annulus {
                center: c,
                r_in: ri,
                r_out: ro,
            }
        }
    })
}

pub(crate) fn shape_bbox(shape: &Shape) -> (PlanePoint, PlanePoint) {
    match shape {
        Shape::Point { at } => (*at, *at),
        Shape::Disk { center, radius } => (
            PlanePoint::new(center.x - radius, center.y - radius),
            PlanePoint::new(center.x + radius, center.y + radius),
        ),
        Shape::Annulus { center, r_out, .. } => (
            PlanePoint::new(center.x - r_out, center.y - r_out),
            PlanePoint::new(center.x + r_out, center.y + r_out),
        ),
        Shape::Polygon { vertices } => {
            let mut lo = vertices[0];
            let mut hi = vertices[0];
            for v in vertices {
                lo = PlanePoint::new(lo.x.min(v.x), lo.y.min(v.y));
                hi = PlanePoint::new(hi.x.max(v.x), hi.y.max(v.y));
            }
            (lo, hi)
        }
    }
}

/// Whether `p` belongs to the closed set described by `shape`.
pub fn shape_contains(shape: &Shape, p: PlanePoint) -> bool {
    match shape {
        Shape::Point { at } => *at == p,
        Shape::Disk { center, radius } => p.dist(*center) <= *radius,
        Shape::Annulus {
            center,
            r_in,
            r_out,
        } => {
            let d = p.dist(*center);
            d >= *r_in && d <= *r_out
        }
        Shape::Polygon { vertices } => point_in_polygon(p, vertices),
    }
}

/// Euclidean distance from `p` to the set (0 inside).
pub fn shape_distance_to_point(shape: &Shape, p: PlanePoint) -> f64 {
    match shape {
        Shape::Point { at } => p.dist(*at),
        Shape::Disk { center, radius } => (p.dist(*center) - radius).max(0.0),
        Shape::Annulus {
            center,
            r_in,
            r_out,
        } => {
            let d = p.dist(*center);
            if d < *r_in {
                r_in - d
            } else if d > *r_out {
                d - r_out
            } else {
                0.0
            }
        }
        Shape::Polygon { vertices } => {
            if point_in_polygon(p, vertices) {
                0.0
            } else {
                polygon_boundary_distance(vertices, p)
            }
        }
    }
}

/// Largest distance from `p` to a point of the set.
pub fn shape_farthest_distance(shape: &Shape, p: PlanePoint) -> f64 {
    match shape {
        Shape::Point { at } => p.dist(*at),
        Shape::Disk { center, radius } => p.dist(*center) + radius,
        Shape::Annulus { center, r_out, .. } => p.dist(*center) + r_out,
        Shape::Polygon { vertices } => vertices.iter().map(|v| v.dist(p)).fold(0.0, f64::max),
    }
}

pub(crate) fn polygon_boundary_distance(vertices: &[PlanePoint], p: PlanePoint) -> f64 {
    let n = vertices.len();
    (0..n)
        .map(|i| point_segment_distance(p, vertices[i], vertices[(i + 1) % n]))
        .fold(f64::INFINITY, f64::min)
}

/// Lebesgue area of a component.
pub fn component_area(c: &ComplementComponent) -> Result<f64> {
    check_shape(&c.id, &c.shape)?;
    Ok(shape_area(&c.shape))
}

pub(crate) fn shape_area(shape: &Shape) -> f64 {
    match shape {
        Shape::Point { .. } => 0.0,
        Shape::Disk { radius, .. } => PI * radius * radius,
        Shape::Annulus { r_in, r_out, .. } => PI * (r_out * r_out - r_in * r_in),
        Shape::Polygon { vertices } => signed_area(vertices).abs(),
    }
}

/// Euclidean diameter of a component.
pub fn component_diam(c: &ComplementComponent) -> Result<f64> {
    check_shape(&c.id, &c.shape)?;
    Ok(shape_diam(&c.shape))
}

pub(crate) fn shape_diam(shape: &Shape) -> f64 {
    match shape {
        Shape::Point { .. } => 0.0,
        Shape::Disk { radius, .. } => 2.0 * radius,
        Shape::Annulus { r_out, .. } => 2.0 * r_out,
        Shape::Polygon { vertices } => {
            let mut d: f64 = 0.0;
            for (i, a) in vertices.iter().enumerate() {
                for b in &vertices[i + 1..] {
                    d = d.max(a.dist(*b));
                }
            }
            d
        }
    }
}

/// Nondegeneracy ratio `area / diam²` of a non-trivial component.
pub fn kappa(c: &ComplementComponent) -> Result<f64> {
    if c.is_trivial() {
        return Err(Error::TrivialComponent(c.id.clone()));
    }
    let d = component_diam(c)?;
    Ok(component_area(c)? / (d * d))
}

fn check_shape(id: &str, shape: &Shape) -> Result<()> {
    let bad = |msg: &str| Err(Error::InvalidShape(format!("{id}: {msg}")));
    let finite = |p: &PlanePoint| p.is_finite();
    match shape {
        Shape::Point { at } => {
            if !finite(at) {
                return bad("non-finite coordinate");
            }
        }
        Shape::Disk { center, radius } => {
            if !finite(center) || !radius.is_finite() {
                return bad("non-finite coordinate");
            }
            if *radius <= 0.0 {
                return bad("disk radius must be positive");
            }
        }
        Shape::Annulus {
            center,
            r_in,
            r_out,
        } => {
            if !finite(center) || !r_in.is_finite() || !r_out.is_finite() {
                return bad("non-finite coordinate");
            }
            if !(*r_in > 0.0 && r_in < r_out) {
                return bad("annulus requires 0 < r_in < r_out");
            }
        }
        Shape::Polygon { vertices } => {
            if vertices.len() < 3 {
                return bad("polygon needs at least 3 vertices");
            }
            if !vertices.iter().all(finite) {
                return bad("non-finite coordinate");
            }
            if !polygon_is_simple(vertices) {
                return bad("polygon is not simple");
            }
            if signed_area(vertices).abs() <= 0.0 {
                return bad("polygon has zero area");
            }
        }
    }
    Ok(())
}

/// Boundary samples of the outer boundary curve, counter-clockwise, roughly
/// uniform in arc length. Polygon vertices are always included.
pub fn boundary_samples(shape: &Shape, n: usize) -> Vec<PlanePoint> {
    let n = n.max(3);
    match shape {
        Shape::Point { at } => vec![*at],
        Shape::Disk { center, radius } => circle_samples(*center, *radius, n, 0.0),
        Shape::Annulus { center, r_out, .. } => circle_samples(*center, *r_out, n, 0.0),
        Shape::Polygon { vertices } => polygon_samples(vertices, n),
    }
}

/// Samples of every boundary curve (both circles for an annulus).
pub fn all_boundary_samples(shape: &Shape, n: usize) -> Vec<PlanePoint> {
    match shape {
        Shape::Annulus {
            center,
            r_in,
            r_out,
        } => {
            let mut v = circle_samples(*center, *r_out, n, 0.0);
            v.extend(circle_samples(*center, *r_in, n, 0.0));
            v
        }
        _ => boundary_samples(shape, n),
    }
}

pub fn circle_samples(center: PlanePoint, radius: f64, n: usize, phase: f64) -> Vec<PlanePoint> {
    (0..n)
        .map(|k| {
            let t = TAU * (k as f64 + phase) / n as f64;
            PlanePoint::new(center.x + radius * t.cos(), center.y + radius * t.sin())
        })
        .collect()
}

fn polygon_samples(vertices: &[PlanePoint], n: usize) -> Vec<PlanePoint> {
    let mut verts = vertices.to_vec();
    if signed_area(&verts) < 0.0 {
        verts.reverse();
    }
    let m = verts.len();
    let lens: Vec<f64> = (0..m).map(|i| verts[i].dist(verts[(i + 1) % m])).collect();
    let total: f64 = lens.iter().sum();
    let budget = n.max(m);
    // Largest-remainder allocation of samples to edges, at least one per edge.
    let raw: Vec<f64> = lens.iter().map(|l| l / total * budget as f64).collect();
    let mut counts: Vec<usize> = raw.iter().map(|r| (r.floor() as usize).max(1)).collect();
    let mut assigned: usize = counts.iter().sum();
    let mut order: Vec<usize> = (0..m).collect();
    order.sort_by(|&a, &b| {
        let fa = raw[a] - raw[a].floor();
        let fb = raw[b] - raw[b].floor();
        fb.partial_cmp(&fa).unwrap().then(a.cmp(&b))
    });
    let mut k = 0;
    while assigned < budget {
        counts[order[k % m]] += 1;
        assigned += 1;
        k += 1;
    }
    let mut out = Vec::with_capacity(assigned);
    for i in 0..m {
        let a = verts[i];
        let b = verts[(i + 1) % m];
        for j in 0..counts[i] {
            let t = j as f64 / counts[i] as f64;
            out.push(a + (b - a) * t);
        }
    }
    out
}

/// Distance between two components (0 when they meet).
pub fn component_distance(a: &Shape, b: &Shape) -> f64 {
    use Shape::*;
    match (a, b) {
        (Point { at }, other) | (other, Point { at }) => shape_distance_to_point(other, *at),
        (Disk { center, radius }, other) | (other, Disk { center, radius }) => {
            (shape_distance_to_point(other, *center) - radius).max(0.0)
        }
        (
            Annulus {
                center,
                r_in,
                r_out,
            },
            other,
        )
        | (
            other,
            Annulus {
                center,
                r_in,
                r_out,
            },
        ) => {
            // `other` is connected, so its distances from the center form an interval.
            let near = shape_distance_to_point(other, *center);
            let far = shape_farthest_distance(other, *center);
            if far < *r_in {
                r_in - far
            } else if near > *r_out {
                near - r_out
            } else {
                0.0
            }
        }
        (Polygon { vertices: p }, Polygon { vertices: q }) => polygon_polygon_distance(p, q),
    }
}

fn polygon_polygon_distance(p: &[PlanePoint], q: &[PlanePoint]) -> f64 {
    if point_in_polygon(p[0], q) || point_in_polygon(q[0], p) {
        return 0.0;
    }
    let mut best = f64::INFINITY;
    for i in 0..p.len() {
        let (a1, a2) = (p[i], p[(i + 1) % p.len()]);
        for j in 0..q.len() {
            let (b1, b2) = (q[j], q[(j + 1) % q.len()]);
            if segments_intersect(a1, a2, b1, b2) {
                return 0.0;
            }
            best = best
                .min(point_segment_distance(a1, b1, b2))
                .min(point_segment_distance(b1, a1, a2));
        }
    }
    best
}

/// Validates shapes, disjointness and boundedness; returns components sorted by id
/// with polygons oriented counter-clockwise.
pub fn validate_domain(raw: RawDomain) -> Result<DomainSpec> {
    let mut comps = raw.components;
    for c in &comps {
        check_shape(&c.id, &c.shape)?;
        let (lo, hi) = shape_bbox(&c.shape);
        if [lo.x, lo.y, hi.x, hi.y].iter().any(|v| v.abs() > COORD_LIMIT) {
            return Err(Error::UnboundedComplement(c.id.clone()));
        }
    }
    comps.sort_by(|a, b| a.id.cmp(&b.id));
    for w in comps.windows(2) {
        if w[0].id == w[1].id {
            return Err(Error::InvalidShape(format!("duplicate id {}", w[0].id)));
        }
    }
    for c in comps.iter_mut() {
        if let Shape::Polygon { vertices } = &mut c.shape {
            if signed_area(vertices) < 0.0 {
                vertices.reverse();
            }
        }
    }
    for i in 0..comps.len() {
        for j in (i + 1)..comps.len() {
            let d = component_distance(&comps[i].shape, &comps[j].shape);
            let both_points = comps[i].is_trivial() && comps[j].is_trivial();
            let sep = if both_points { 0.0 } else { MIN_SEPARATION };
            if d <= sep {
                return Err(Error::OverlappingComponents(
                    comps[i].id.clone(),
                    comps[j].id.clone(),
                ));
            }
        }
    }
    Ok(DomainSpec { components: comps })
}

/// Partition into trivial/non-trivial components with per-component κ.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NondegeneracyReport {
    pub kappa: BTreeMap<String, f64>,
    pub kappa_min: Option<f64>,
    pub trivial: Vec<String>,
    pub nontrivial: Vec<String>,
}

pub fn classify(spec: &DomainSpec) -> NondegeneracyReport {
    let mut kappa_map = BTreeMap::new();
    let mut trivial = Vec::new();
    let mut nontrivial = Vec::new();
    for c in spec.components() {
        if shape_diam(&c.shape) > 0.0 {
            let d = shape_diam(&c.shape);
            kappa_map.insert(c.id.clone(), shape_area(&c.shape) / (d * d));
            nontrivial.push(c.id.clone());
        } else {
            trivial.push(c.id.clone());
        }
    }
    let kappa_min = kappa_map.values().copied().reduce(f64::min);
    NondegeneracyReport {
        kappa: kappa_map,
        kappa_min,
        trivial,
        nontrivial,
    }
}

/// Outcome of a sampled τ-fatness check.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FatnessReport {
    pub verdict: bool,
    pub worst_ratio: f64,
    pub witness: Option<(PlanePoint, f64)>,
}

/// Parameters for [`is_tau_fat`].
#[derive(Debug, Clone, Copy)]
pub struct FatnessSampling {
    pub n_centers: usize,
    pub n_radii: usize,
    pub n_mc: usize,
    pub seed: u64,
}

impl Default for FatnessSampling {
    fn default() -> Self {
        FatnessSampling {
            n_centers: 64,
            n_radii: 16,
            n_mc: 4000,
            seed: 0,
        }
    }
}

/// Estimates `inf area(A∩B)/area(B)` over sampled disks `B = B(x, r)` with
/// `x ∈ A` and `B ⊉ A`. Half of the centers are boundary points, where the
/// infimum is attained for convex sets.
pub fn is_tau_fat(c: &ComplementComponent, tau: f64, sampling: FatnessSampling) -> Result<FatnessReport> {
    if !(tau > 0.0 && tau <= 1.0) {
        return Err(Error::InvalidParameter(format!("tau = {tau} not in (0, 1]")));
    }
    if sampling.n_centers == 0 || sampling.n_radii == 0 || sampling.n_mc == 0 {
        return Err(Error::InvalidParameter("sample counts must be >= 1".into()));
    }
    check_shape(&c.id, &c.shape)?;
    if c.is_trivial() {
        return Ok(FatnessReport {
            verdict: true,
            worst_ratio: 1.0,
            witness: None,
        });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(sampling.seed);
    let shape = &c.shape;
    let (lo, hi) = shape_bbox(shape);
    let boundary = all_boundary_samples(shape, 4 * sampling.n_centers);
    let mut worst = f64::INFINITY;
    let mut witness = None;
    for k in 0..sampling.n_centers {
        let x = if k % 2 == 0 {
            boundary[rng.gen_range(0..boundary.len())]
        } else {
            loop {
                let p = PlanePoint::new(rng.gen_range(lo.x..=hi.x), rng.gen_range(lo.y..=hi.y));
                if shape_contains(shape, p) {
                    break p;
                }
            }
        };
        let r_far = shape_farthest_distance(shape, x);
        for j in 0..sampling.n_radii {
            // stratified in (0, r_far), always including a radius near r_far
            let u: f64 = if j + 1 == sampling.n_radii {
                1.0 - 1e-9
            } else {
                (j as f64 + rng.gen::<f64>()) / sampling.n_radii as f64
            };
            let r = (u * r_far).max(1e-12 * r_far);
            let mut hits = 0usize;
            for _ in 0..sampling.n_mc {
                let rho = r * rng.gen::<f64>().sqrt();
                let th = TAU * rng.gen::<f64>();
                let p = PlanePoint::new(x.x + rho * th.cos(), x.y + rho * th.sin());
                if shape_contains(shape, p) {
                    hits += 1;
                }
            }
            let ratio = hits as f64 / sampling.n_mc as f64;
            if ratio < worst {
                worst = ratio;
                witness = Some((x, r));
            }
        }
    }
    Ok(FatnessReport {
        verdict: worst >= tau,
        worst_ratio: worst,
        witness,
    })
}

/// Upper bound of κ, attained exactly by disks.
pub const KAPPA_DISK: f64 = FRAC_PI_4;
