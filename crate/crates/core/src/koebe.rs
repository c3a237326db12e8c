//! Koebe iteration onto circle domains.
//!
//! Each round maps the exterior of every non-point component in turn onto the
//! exterior of a disk with a zipper stage; the other boundaries are pushed
//! forward as samples and re-splined to uniform chord length.

use serde::{Deserialize, Serialize};

use crate::domain::{boundary_samples, circle_samples, DomainSpec, Shape};
use crate::error::{Error, Result};
use crate::geom::{point_in_polygon, polygon_is_simple, signed_area, ExtPoint, Mobius, PlanePoint};
use crate::zipper::{resample_closed, ExteriorStage};

/// Largest number of non-point components `koebe_iterate` accepts.
pub const MAX_COMPONENTS: usize = 8;

/// Roundness of a closed sample about its centroid.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Roundness {
    pub value: f64,
    /// Fewer than three distinct samples: no curve to measure.
    pub pointlike: bool,
}

/// `(max rᵢ − min rᵢ) / mean rᵢ` with `rᵢ = |zᵢ − c|` and `c` the sample mean.
pub fn roundness(samples: &[PlanePoint]) -> Result<Roundness> {
    let mut distinct: Vec<PlanePoint> = Vec::new();
    for &p in samples {
        if !distinct.contains(&p) {
            distinct.push(p);
            if distinct.len() >= 3 {
                break;
            }
        }
    }
    if distinct.len() < 3 {
        return Ok(Roundness {
            value: 0.0,
            pointlike: true,
        });
    }
    if samples.len() < 8 {
        return Err(Error::InvalidParameter("roundness needs at least 8 samples".into()));
    }
    let n = samples.len() as f64;
    let c = samples.iter().fold(PlanePoint::ORIGIN, |acc, &p| acc + p) * (1.0 / n);
    let (mut lo, mut hi, mut sum) = (f64::INFINITY, 0.0f64, 0.0);
    for &p in samples {
        let r = p.dist(c);
        lo = lo.min(r);
        hi = hi.max(r);
        sum += r;
    }
    Ok(Roundness {
        value: (hi - lo) / (sum / n),
        pointlike: false,
    })
}

/// One stage of a composed map.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum Stage {
    Mobius { coefficients: [[f64; 2]; 4] },
    Exterior(Box<ExteriorStage>),
}

impl Stage {
    pub fn mobius(t: &Mobius) -> Stage {
        Stage::Mobius {
            coefficients: t.coefficients().map(|c| [c.re, c.im]),
        }
    }

    fn as_mobius(coefficients: &[[f64; 2]; 4]) -> Mobius {
        let [a, b, c, d] = coefficients.map(|[re, im]| num_complex::Complex64::new(re, im));
        Mobius::new(a, b, c, d).unwrap_or_else(|_| Mobius::identity())
    }

    fn apply(&self, z: ExtPoint, inverse: bool) -> ExtPoint {
        match self {
            Stage::Mobius { coefficients } => {
                let t = Stage::as_mobius(coefficients);
                if inverse {
                    t.inverse().apply(z)
                } else {
                    t.apply(z)
                }
            }
            Stage::Exterior(st) => {
                let z = z.finite().map(PlanePoint::to_complex);
                let w = if inverse { st.inverse(z) } else { st.forward(z) };
                match w {
                    Some(w) if w.is_finite() => ExtPoint::Finite(PlanePoint::from_complex(w)),
                    _ => ExtPoint::Inf,
                }
            }
        }
    }
}

/// Composition of stages, applied first to last; `inverted[i]` runs stage `i`
/// backwards. `source` and `target` are the boundary curves of the domain and
/// of its image, used to reject points outside the map's domain.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct NumericMap {
    pub stages: Vec<Stage>,
    pub inverted: Vec<bool>,
    pub source: Vec<Vec<PlanePoint>>,
    pub target: Vec<Vec<PlanePoint>>,
}

impl NumericMap {
    pub fn identity() -> Self {
        NumericMap::default()
    }

    pub fn push(&mut self, stage: Stage) {
        self.stages.push(stage);
        self.inverted.push(false);
    }

    /// The map run backwards.
    pub fn inverse(&self) -> NumericMap {
        NumericMap {
            stages: self.stages.iter().rev().cloned().collect(),
            inverted: self.inverted.iter().rev().map(|f| !f).collect(),
            source: self.target.clone(),
            target: self.source.clone(),
        }
    }

    /// `other ∘ self`.
    pub fn then(&self, other: &NumericMap) -> NumericMap {
        let mut out = self.clone();
        out.stages.extend(other.stages.iter().cloned());
        out.inverted.extend(other.inverted.iter().copied());
        out.target = other.target.clone();
        out
    }

    pub fn len(&self) -> usize {
        self.stages.len()
    }

    pub fn is_empty(&self) -> bool {
        self.stages.is_empty()
    }

    fn eval(&self, mut z: ExtPoint, inverse: bool) -> ExtPoint {
        if inverse {
            for (s, &f) in self.stages.iter().zip(&self.inverted).rev() {
                z = s.apply(z, !f);
            }
        } else {
            for (s, &f) in self.stages.iter().zip(&self.inverted) {
                z = s.apply(z, f);
            }
        }
        z
    }

    /// Forward image of a finite point without the domain check.
    pub fn push_point(&self, p: PlanePoint) -> PlanePoint {
        match self.eval(ExtPoint::Finite(p), false) {
            ExtPoint::Finite(q) => q,
            ExtPoint::Inf => PlanePoint::new(f64::INFINITY, f64::INFINITY),
        }
    }
}

/// Evaluates `map` (or its inverse) at `z`; points strictly inside a boundary
/// curve on the relevant side are rejected.
pub fn map_apply(map: &NumericMap, z: ExtPoint, inverse: bool) -> Result<ExtPoint> {
    if let ExtPoint::Finite(p) = z {
        let curves = if inverse { &map.target } else { &map.source };
        if curves.iter().any(|c| c.len() >= 3 && point_in_polygon(p, c)) {
            return Err(Error::OutsideDomain(p.x, p.y));
        }
    }
    Ok(map.eval(z, inverse))
}

/// Largest `(max − min)/mean` radius deviation of the images of the stage's own
/// samples about its image circle.
fn self_test(stage: &ExteriorStage) -> f64 {
    let c = stage.center;
    let rs: Vec<f64> = stage
        .source
        .iter()
        .map(|&p| stage.forward_point(p).dist(c))
        .collect();
    let lo = rs.iter().cloned().fold(f64::INFINITY, f64::min);
    let hi = rs.iter().cloned().fold(0.0, f64::max);
    (hi - lo) / stage.radius
}

/// Exterior Riemann map of a simple closed sample onto a disk exterior,
/// normalized `f(z) = z + O(1/z)`. Negatively oriented input is reversed.
pub fn exterior_map(curve: &[PlanePoint], eval_tol: f64) -> Result<ExteriorStage> {
    if curve.len() < 64 {
        return Err(Error::InvalidParameter(format!(
            "exterior map needs at least 64 samples, got {}",
            curve.len()
        )));
    }
    if !polygon_is_simple(curve) {
        return Err(Error::NonSimpleCurve(format!("{} samples", curve.len())));
    }
    let mut pts = curve.to_vec();
    if signed_area(&pts) < 0.0 {
        pts.reverse();
    }
    let stage = ExteriorStage::build(&pts)?;
    let r = self_test(&stage);
    if !(r <= eval_tol) {
        return Err(Error::ConvergenceFailure(r));
    }
    Ok(stage)
}

/// A disk of a circle domain.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CircleDisk {
    pub id: String,
    pub center: PlanePoint,
    pub radius: f64,
    pub roundness: f64,
}

/// An image point of a trivial component.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CirclePoint {
    pub id: String,
    pub at: PlanePoint,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct CircleDomain {
    pub disks: Vec<CircleDisk>,
    pub points: Vec<CirclePoint>,
}

impl CircleDomain {
    /// Whether all disks are pairwise disjoint.
    pub fn disjoint(&self) -> bool {
        self.disks.iter().enumerate().all(|(i, a)| {
            self.disks[i + 1..]
                .iter()
                .all(|b| a.center.dist(b.center) > a.radius + b.radius)
        })
    }

    pub fn max_roundness(&self) -> f64 {
        self.disks.iter().map(|d| d.roundness).fold(0.0, f64::max)
    }

    /// The circle domain as a domain spec of disks and points.
    pub fn to_spec(&self) -> Result<DomainSpec> {
        let mut comps: Vec<crate::domain::ComplementComponent> = self
            .disks
            .iter()
            .map(|d| crate::domain::ComplementComponent::disk(d.id.clone(), d.center, d.radius))
            .collect();
        comps.extend(
            self.points
                .iter()
                .map(|p| crate::domain::ComplementComponent::point(p.id.clone(), p.at)),
        );
        crate::domain::validate_domain(crate::domain::RawDomain { components: comps })
    }
}

/// Per-round roundness of each non-point component, in id order.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct IterationTrace {
    pub ids: Vec<String>,
    /// Round 0 is the input.
    pub rounds: Vec<Vec<f64>>,
    pub stages: usize,
    pub converged: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KoebeOptions {
    pub roundness_target: f64,
    pub max_rounds: usize,
    pub samples: usize,
}

impl Default for KoebeOptions {
    fn default() -> Self {
        KoebeOptions {
            roundness_target: 1e-3,
            max_rounds: 100,
            samples: 256,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct KoebeOutcome {
    pub domain: CircleDomain,
    pub map: NumericMap,
    pub trace: IterationTrace,
    /// Final boundary samples of each non-point component, in id order.
    pub boundaries: Vec<(String, Vec<PlanePoint>)>,
}

fn bounding_circle(c: &[PlanePoint]) -> (PlanePoint, f64) {
    let n = c.len() as f64;
    let m = c.iter().fold(PlanePoint::ORIGIN, |a, &p| a + p) * (1.0 / n);
    (m, c.iter().map(|p| p.dist(m)).fold(0.0, f64::max))
}

fn check_collisions(ids: &[String], curves: &[Vec<PlanePoint>]) -> Result<()> {
    let circles: Vec<_> = curves.iter().map(|c| bounding_circle(c)).collect();
    for i in 0..curves.len() {
        for j in i + 1..curves.len() {
            let (ci, ri) = circles[i];
            let (cj, rj) = circles[j];
            if ci.dist(cj) > ri + rj {
                continue;
            }
            let hit = curves[i].iter().any(|&p| point_in_polygon(p, &curves[j]))
                || curves[j].iter().any(|&p| point_in_polygon(p, &curves[i]));
            if hit {
                return Err(Error::ComponentCollision(ids[i].clone(), ids[j].clone()));
            }
        }
    }
    Ok(())
}

fn round_values(curves: &[Vec<PlanePoint>]) -> Result<Vec<f64>> {
    curves.iter().map(|c| Ok(roundness(c)?.value)).collect()
}

/// Runs the iteration until every non-point component is within
/// `roundness_target` or `max_rounds` is spent; `trace.converged` tells which.
pub fn koebe_run(spec: &DomainSpec, opts: &KoebeOptions) -> Result<KoebeOutcome> {
    let nontrivial: Vec<_> = spec.components().iter().filter(|c| !c.is_trivial()).collect();
    if nontrivial.len() > MAX_COMPONENTS {
        return Err(Error::InvalidParameter(format!(
            "{} non-point components exceed the cap of {MAX_COMPONENTS}",
            nontrivial.len()
        )));
    }
    if opts.samples < 64 {
        return Err(Error::InvalidParameter("at least 64 samples per component".into()));
    }
    // Anything inside the hole of an annulus is cut off from infinity.
    for a in spec.components() {
        if let Shape::Annulus { center, r_in, .. } = a.shape {
            for c in spec.components() {
                if c.id != a.id && boundary_samples(&c.shape, 8)[0].dist(center) < r_in {
                    return Err(Error::InvalidParameter(format!(
                        "{} lies in the hole of annulus {}",
                        c.id, a.id
                    )));
                }
            }
        }
    }
    let ids: Vec<String> = nontrivial.iter().map(|c| c.id.clone()).collect();
    let n = opts.samples;
    let mut curves: Vec<Vec<PlanePoint>> = nontrivial
        .iter()
        .map(|c| boundary_samples(&c.shape, n))
        .collect();
    let mut smooth: Vec<bool> = nontrivial
        .iter()
        .map(|c| !matches!(c.shape, Shape::Polygon { .. }))
        .collect();
    let mut points: Vec<(String, PlanePoint)> = spec
        .components()
        .iter()
        .filter_map(|c| match c.shape {
            Shape::Point { at } => Some((c.id.clone(), at)),
            _ => None,
        })
        .collect();
    let mut map = NumericMap::identity();
    map.source = curves.clone();
    let mut trace = IterationTrace {
        ids: ids.clone(),
        ..Default::default()
    };
    let mut current = round_values(&curves)?;
    trace.rounds.push(current.clone());
    let done = |r: &[f64]| r.iter().all(|&v| v <= opts.roundness_target);
    trace.converged = done(&current);
    let mut round = 0;
    while !trace.converged && round < opts.max_rounds {
        round += 1;
        for j in 0..curves.len() {
            if smooth[j] {
                curves[j] = resample_closed(&curves[j], n);
            }
            let stage = ExteriorStage::build(&curves[j])?;
            for (k, c) in curves.iter_mut().enumerate() {
                if k != j {
                    for p in c.iter_mut() {
                        *p = stage.forward_point(*p);
                    }
                }
            }
            for (_, p) in points.iter_mut() {
                *p = stage.forward_point(*p);
            }
            curves[j] = circle_samples(stage.center, stage.radius, n, 0.0);
            smooth[j] = true;
            for k in 0..curves.len() {
                if k != j && smooth[k] {
                    curves[k] = resample_closed(&curves[k], n);
                }
            }
            check_collisions(&ids, &curves)?;
            map.push(Stage::Exterior(Box::new(stage)));
        }
        current = round_values(&curves)?;
        log::debug!("koebe round {round}: max roundness {:e}", current.iter().cloned().fold(0.0, f64::max));
        trace.rounds.push(current.clone());
        trace.converged = done(&current);
    }
    trace.stages = map.len();
    map.target = curves.clone();
    let disks = ids
        .iter()
        .zip(&curves)
        .zip(&current)
        .map(|((id, c), &r)| {
            let n = c.len() as f64;
            let center = c.iter().fold(PlanePoint::ORIGIN, |a, &p| a + p) * (1.0 / n);
            CircleDisk {
                id: id.clone(),
                center,
                radius: c.iter().map(|p| p.dist(center)).sum::<f64>() / n,
                roundness: r,
            }
        })
        .collect();
    let domain = CircleDomain {
        disks,
        points: points
            .into_iter()
            .map(|(id, at)| CirclePoint { id, at })
            .collect(),
    };
    if !domain.disjoint() {
        let (a, b) = first_overlap(&domain);
        return Err(Error::ComponentCollision(a, b));
    }
    Ok(KoebeOutcome {
        domain,
        map,
        trace,
        boundaries: ids.into_iter().zip(curves).collect(),
    })
}

fn first_overlap(d: &CircleDomain) -> (String, String) {
    for (i, a) in d.disks.iter().enumerate() {
        for b in &d.disks[i + 1..] {
            if a.center.dist(b.center) <= a.radius + b.radius {
                return (a.id.clone(), b.id.clone());
            }
        }
    }
    (String::new(), String::new())
}

/// Koebe iteration; failing to reach the target is an error carrying the best
/// roundness. Use [`koebe_run`] to keep the last iterate in that case.
pub fn koebe_iterate(spec: &DomainSpec, opts: &KoebeOptions) -> Result<KoebeOutcome> {
    let out = koebe_run(spec, opts)?;
    if out.trace.converged {
        Ok(out)
    } else {
        Err(Error::MaxRoundsExceeded(out.domain.max_roundness()))
    }
}

/// `n` points of a circle, handy for tracking trivial components.
pub fn tracking_circle(at: PlanePoint, radius: f64, n: usize) -> Vec<PlanePoint> {
    circle_samples(at, radius, n, 0.5)
}

/// Diameter of a finite sample (largest pairwise distance).
pub fn sample_diameter(samples: &[PlanePoint]) -> f64 {
    let mut d = 0.0f64;
    for (i, a) in samples.iter().enumerate() {
        for b in &samples[i + 1..] {
            d = d.max(a.dist(*b));
        }
    }
    d
}

/// Largest `|F(z)/z − 1|`-type check of the normalization: returns `F(z)/z`
/// at a point of modulus `r` on the positive real axis.
pub fn asymptotic_ratio(map: &NumericMap, r: f64) -> num_complex::Complex64 {
    let z = PlanePoint::new(r, 0.0);
    let w = map.push_point(z);
    w.to_complex() / z.to_complex()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::domain::{validate_domain, ComplementComponent, RawDomain};
    use num_complex::Complex64;

    fn p(x: f64, y: f64) -> PlanePoint {
        PlanePoint::new(x, y)
    }

    fn square(c: PlanePoint, s: f64) -> Vec<PlanePoint> {
        let h = s / 2.0;
        vec![
            p(c.x - h, c.y - h),
            p(c.x + h, c.y - h),
            p(c.x + h, c.y + h),
            p(c.x - h, c.y + h),
        ]
    }

    fn spec(comps: Vec<ComplementComponent>) -> DomainSpec {
        validate_domain(RawDomain { components: comps }).unwrap()
    }

    #[test]
    fn roundness_examples() {
        let c = circle_samples(p(1.0, 2.0), 3.0, 64, 0.0);
        assert!(roundness(&c).unwrap().value < 1e-12);
        let sq = boundary_samples(&Shape::Polygon { vertices: square(p(0.0, 0.0), 1.0) }, 256);
        let r = roundness(&sq).unwrap().value;
        assert!((r - 0.3609).abs() < 2e-3, "{r}");
        let two = roundness(&[p(0.0, 0.0), p(1.0, 0.0)]).unwrap();
        assert!(two.pointlike);
    }

    #[test]
    fn affine_stage_example() {
        let t = Mobius::affine(Complex64::new(2.0, 0.0), Complex64::new(1.0, 0.0)).unwrap();
        let mut m = NumericMap::identity();
        m.push(Stage::mobius(&t));
        let w = map_apply(&m, ExtPoint::Finite(p(1.0, 1.0)), false).unwrap();
        let w = w.finite().unwrap();
        assert!(w.dist(p(3.0, 2.0)) < 1e-12);
        assert_eq!(map_apply(&m, ExtPoint::Inf, false).unwrap(), ExtPoint::Inf);
    }

    #[test]
    fn square_exterior_map() {
        let sq = boundary_samples(&Shape::Polygon { vertices: square(p(0.0, 0.0), 1.0) }, 512);
        let st = exterior_map(&sq, 1e-9).unwrap();
        // logarithmic capacity of the unit square
        assert!((st.radius - 0.590170).abs() < 2e-3, "{}", st.radius);
    }

    #[test]
    fn circle_domain_is_a_fixed_point() {
        let s = spec(vec![
            ComplementComponent::disk("a", p(0.0, 0.0), 1.0),
            ComplementComponent::disk("b", p(3.0, 0.0), 0.5),
        ]);
        let out = koebe_iterate(&s, &KoebeOptions::default()).unwrap();
        assert!(out.trace.rounds.len() <= 2);
    }

    #[test]
    fn two_squares_converge() {
        let s = spec(vec![
            ComplementComponent::polygon("a", square(p(-1.0, 0.0), 1.0)),
            ComplementComponent::polygon("b", square(p(1.0, 0.0), 1.0)),
            ComplementComponent::point("q", p(0.0, 1.5)),
        ]);
        let out = koebe_iterate(&s, &KoebeOptions::default()).unwrap();
        assert!(out.domain.disjoint());
        assert!(out.domain.max_roundness() <= 1e-3);
        for k in 0..20 {
            let z = p(-3.0 + 0.3 * k as f64, 1.2 + 0.05 * k as f64);
            let w = map_apply(&out.map, ExtPoint::Finite(z), false).unwrap();
            let back = map_apply(&out.map, w, true).unwrap().finite().unwrap();
            assert!(back.dist(z) < 1e-8, "{z:?} {back:?}");
        }
        let r = asymptotic_ratio(&out.map, 1e6);
        assert!((r - 1.0).norm() < 1e-5, "{r}");
    }
}
