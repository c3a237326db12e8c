//! Gap ratios, the bounded-gap-ratio constant and the radii ladder.

use std::f64::consts::{PI, TAU};

use serde::{Deserialize, Serialize};

use crate::domain::{
    component_distance, shape_distance_to_point, shape_farthest_distance, ComplementComponent,
    DomainSpec, Shape,
};
use crate::error::{Error, Result};
use crate::geom::PlanePoint;

/// `sup |z − w| / inf |z − w|` over `z ∈ K`.
pub fn gr_point(k: &ComplementComponent, w: PlanePoint) -> Result<f64> {
    let inf = shape_distance_to_point(&k.shape, w);
    if !(inf > 0.0) {
        return Err(Error::ZeroDistance(format!(
            "({}, {}) lies in {}",
            w.x, w.y, k.id
        )));
    }
    if k.is_trivial() {
        return Ok(1.0);
    }
    Ok(shape_farthest_distance(&k.shape, w) / inf)
}

/// `sup_{w ∈ b} Gr(a, w)`.
///
/// For radially symmetric `a` the ratio depends on `|w − center|` only and is
/// monotone on each side of the ring, so the sup sits at an extreme distance.
/// Otherwise the sup is attained on `∂b` (moving `w` toward `a` never lowers the
/// ratio) and is found by dense sampling followed by golden-section refinement.
pub fn gr_pair(a: &ComplementComponent, b: &ComplementComponent) -> Result<f64> {
    if component_distance(&a.shape, &b.shape) <= 0.0 {
        return Err(Error::ZeroDistance(format!("{} touches {}", a.id, b.id)));
    }
    match (&a.shape, &b.shape) {
        (Shape::Point { .. }, _) => Ok(1.0),
        (_, Shape::Point { at }) => gr_point(a, *at),
        (Shape::Disk { center, radius }, _) => {
            let d = shape_distance_to_point(&b.shape, *center);
            Ok((d + radius) / (d - radius))
        }
        (
            Shape::Annulus {
                center,
                r_in,
                r_out,
            },
            _,
        ) => {
            let near = shape_distance_to_point(&b.shape, *center);
            let far = shape_farthest_distance(&b.shape, *center);
            if near > *r_out {
                Ok((near + r_out) / (near - r_out))
            } else {
                Ok((far + r_out) / (r_in - far))
            }
        }
        (Shape::Polygon { .. }, _) => {
            let f = |w: PlanePoint| {
                shape_farthest_distance(&a.shape, w) / shape_distance_to_point(&a.shape, w)
            };
            Ok(maximize_on_boundary(&b.shape, f))
        }
    }
}

#[derive(Debug, Clone, Copy)]
enum Piece {
    Circle { c: PlanePoint, r: f64 },
    Segment { p: PlanePoint, q: PlanePoint },
}

impl Piece {
    fn at(&self, t: f64) -> PlanePoint {
        match *self {
            Piece::Circle { c, r } => {
                let th = TAU * t;
                PlanePoint::new(c.x + r * th.cos(), c.y + r * th.sin())
            }
            Piece::Segment { p, q } => {
                let t = t.clamp(0.0, 1.0);
                p + (q - p) * t
            }
        }
    }
}

fn boundary_pieces(shape: &Shape) -> Vec<Piece> {
    match shape {
        Shape::Point { at } => vec![Piece::Segment { p: *at, q: *at }],
        Shape::Disk { center, radius } => vec![Piece::Circle {
            c: *center,
            r: *radius,
        }],
        Shape::Annulus {
            center,
            r_in,
            r_out,
        } => vec![
            Piece::Circle {
                c: *center,
                r: *r_in,
            },
            Piece::Circle {
                c: *center,
                r: *r_out,
            },
        ],
        Shape::Polygon { vertices } => (0..vertices.len())
            .map(|i| Piece::Segment {
                p: vertices[i],
                q: vertices[(i + 1) % vertices.len()],
            })
            .collect(),
    }
}

const SAMPLES_PER_PIECE: usize = 512;
const REFINED_CANDIDATES: usize = 6;

fn maximize_on_boundary(shape: &Shape, f: impl Fn(PlanePoint) -> f64) -> f64 {
    let mut best = f64::NEG_INFINITY;
    for piece in boundary_pieces(shape) {
        let n = SAMPLES_PER_PIECE;
        let closed = matches!(piece, Piece::Circle { .. });
        let ts: Vec<f64> = (0..=n).map(|k| k as f64 / n as f64).collect();
        let vals: Vec<f64> = ts.iter().map(|&t| f(piece.at(t))).collect();
        for &v in &vals {
            best = best.max(v);
        }
        let mut peaks: Vec<usize> = (0..=n)
            .filter(|&k| {
                let left = if k > 0 {
                    vals[k - 1]
                } else if closed {
                    vals[n - 1]
                } else {
                    f64::NEG_INFINITY
                };
                let right = if k < n {
                    vals[k + 1]
                } else if closed {
                    vals[1]
                } else {
                    f64::NEG_INFINITY
                };
                vals[k] >= left && vals[k] >= right
            })
            .collect();
        peaks.sort_by(|&i, &j| vals[j].partial_cmp(&vals[i]).unwrap().then(i.cmp(&j)));
        for &k in peaks.iter().take(REFINED_CANDIDATES) {
            let step = 1.0 / n as f64;
            let (lo, hi) = if closed {
                (ts[k] - step, ts[k] + step)
            } else {
                ((ts[k] - step).max(0.0), (ts[k] + step).min(1.0))
            };
            best = best.max(golden_max(|t| f(piece.at(t)), lo, hi));
        }
    }
    best
}

fn golden_max(g: impl Fn(f64) -> f64, mut lo: f64, mut hi: f64) -> f64 {
    let inv_phi = (5f64.sqrt() - 1.0) / 2.0;
    let mut x1 = hi - inv_phi * (hi - lo);
    let mut x2 = lo + inv_phi * (hi - lo);
    let mut f1 = g(x1);
    let mut f2 = g(x2);
    let mut best = g(lo).max(g(hi)).max(f1).max(f2);
    for _ in 0..200 {
        if hi - lo <= 1e-15 {
            break;
        }
        if f1 < f2 {
            lo = x1;
            x1 = x2;
            f1 = f2;
            x2 = lo + inv_phi * (hi - lo);
            f2 = g(x2);
            best = best.max(f2);
        } else {
            hi = x2;
            x2 = x1;
            f2 = f1;
            x1 = hi - inv_phi * (hi - lo);
            f1 = g(x1);
            best = best.max(f1);
        }
    }
    best
}

/// One evaluated pair gap ratio `Gr(a, b)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GapRatioPair {
    pub a: String,
    pub b: String,
    pub gr: f64,
}

/// Gap ratios of all components near a base component.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GapRatioReport {
    pub b: String,
    pub delta: f64,
    pub pairs: Vec<GapRatioPair>,
    pub rho: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ladder: Option<RadiiLadder>,
}

/// `max Gr(a, b)` over components `a` with `dist(a, b) < δ` (1 when there are none).
pub fn rho_estimate(spec: &DomainSpec, b: &str, delta: f64) -> Result<GapRatioReport> {
    if !(delta > 0.0 && delta.is_finite()) {
        return Err(Error::InvalidParameter(format!("delta = {delta} must be positive")));
    }
    let base = spec.get(b)?;
    let mut pairs = Vec::new();
    for a in spec.components() {
        if a.id == base.id || component_distance(&a.shape, &base.shape) >= delta {
            continue;
        }
        pairs.push(GapRatioPair {
            a: a.id.clone(),
            b: base.id.clone(),
            gr: gr_pair(a, base)?,
        });
    }
    let rho = pairs.iter().map(|p| p.gr).fold(1.0, f64::max);
    Ok(GapRatioReport {
        b: base.id.clone(),
        delta,
        pairs,
        rho,
        ladder: None,
    })
}

/// Domain-wide reading of the constant: the max of [`rho_estimate`] over every base.
pub fn rho_uniform(spec: &DomainSpec, delta: f64) -> Result<f64> {
    let mut rho: f64 = 1.0;
    for c in spec.components() {
        rho = rho.max(rho_estimate(spec, &c.id, delta)?.rho);
    }
    Ok(rho)
}

/// Radii `R_0 > R_1 > … > R_J` around `w` with the member sets `B_{R_j}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RadiiLadder {
    pub b: String,
    pub w: PlanePoint,
    pub radii: Vec<f64>,
    pub members: Vec<Vec<String>>,
    pub rho_observed: f64,
    #[serde(rename = "M")]
    pub m: usize,
}

impl RadiiLadder {
    /// Number of levels `J` (index of the last radius).
    pub fn levels(&self) -> usize {
        self.radii.len() - 1
    }
}

/// Whether the connected set meets the circle `C(w, r)`.
pub fn meets_circle(shape: &Shape, w: PlanePoint, r: f64) -> bool {
    shape_distance_to_point(shape, w) <= r && r <= shape_farthest_distance(shape, w)
}

/// Builds the ladder: `B_{R_j}` holds the components other than `b` meeting both
/// `C(w, R_j)` and `C(w, R_j/2)`, and `R_{j+1}` is their least distance to `w`.
/// Stops at an empty level or after `max_levels` radii beyond `R_0`.
pub fn build_radii_ladder(
    spec: &DomainSpec,
    b: &str,
    w: PlanePoint,
    r0: f64,
    max_levels: usize,
) -> Result<RadiiLadder> {
    let base = spec.get(b)?;
    if !(r0 > 0.0 && r0.is_finite()) {
        return Err(Error::InvalidR0(format!("R0 = {r0} must be positive and finite")));
    }
    if shape_distance_to_point(&base.shape, w) > 0.0 {
        return Err(Error::InvalidParameter(format!(
            "w = ({}, {}) is not in {}",
            w.x, w.y, base.id
        )));
    }
    let mut radii = vec![r0];
    let mut members = Vec::new();
    while radii.len() <= max_levels {
        let r = *radii.last().unwrap();
        let level: Vec<&ComplementComponent> = spec
            .components()
            .iter()
            .filter(|a| a.id != base.id)
            .filter(|a| meets_circle(&a.shape, w, r) && meets_circle(&a.shape, w, r / 2.0))
            .collect();
        if level.is_empty() {
            break;
        }
        let next = level
            .iter()
            .map(|a| shape_distance_to_point(&a.shape, w))
            .fold(f64::INFINITY, f64::min);
        if !(next > 0.0) {
            break;
        }
        members.push(level.iter().map(|a| a.id.clone()).collect());
        radii.push(next);
    }
    let rho_observed = radii
        .windows(2)
        .map(|p| p[0] / p[1])
        .fold(1.0, f64::max);
    let j = radii.len() - 1;
    Ok(RadiiLadder {
        b: base.id.clone(),
        w,
        radii,
        members,
        rho_observed,
        m: if j >= 1 { (j - 1) / 2 } else { 0 },
    })
}

/// Checks that no component meets `C(w, R_{j−1})` while reaching into the open
/// disk `B(w, R_j)`. Returns the offending `(level, id)` pairs.
pub fn ladder_separation_violations(spec: &DomainSpec, ladder: &RadiiLadder) -> Vec<(usize, String)> {
    let mut bad = Vec::new();
    for j in 1..ladder.radii.len() {
        for a in spec.components() {
            if a.id == ladder.b {
                continue;
            }
            if meets_circle(&a.shape, ladder.w, ladder.radii[j - 1])
                && shape_distance_to_point(&a.shape, ladder.w) < ladder.radii[j]
            {
                bad.push((j, a.id.clone()));
            }
        }
    }
    bad
}

/// `4πρ²(1 + κ⁻¹) / M`.
pub fn el_upper_bound(rho: f64, kappa_min: f64, m: usize) -> Result<f64> {
    if m == 0 {
        return Err(Error::InvalidParameter("M must be at least 1".into()));
    }
    if !(rho >= 1.0) || !(kappa_min > 0.0 && kappa_min <= PI / 4.0 + 1e-12) {
        return Err(Error::InvalidParameter(format!(
            "rho = {rho}, kappa = {kappa_min} out of range"
        )));
    }
    Ok(4.0 * PI * rho * rho * (1.0 + 1.0 / kappa_min) / m as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::domain::{validate_domain, RawDomain};

    fn p(x: f64, y: f64) -> PlanePoint {
        PlanePoint::new(x, y)
    }

    #[test]
    fn gr_point_examples() {
        let pt = ComplementComponent::point("p", p(3.0, 0.0));
        assert_eq!(gr_point(&pt, p(0.0, 0.0)).unwrap(), 1.0);
        let ring = ComplementComponent::annulus("r", p(0.0, 0.0), 1.0, 1.0 + 1e-9);
        assert!((gr_point(&ring, p(0.0, 0.0)).unwrap() - (1.0 + 1e-9)).abs() < 1e-15);
        let seg = ComplementComponent::polygon("s", vec![p(1.0, 0.0), p(2.0, 0.0), p(2.0, 1e-12)]);
        assert!((gr_point(&seg, p(0.0, 0.0)).unwrap() - 2.0).abs() < 1e-9);
        let d = ComplementComponent::disk("d", p(0.0, 0.0), 1.0);
        assert!(matches!(gr_point(&d, p(0.5, 0.0)), Err(Error::ZeroDistance(_))));
    }

    #[test]
    fn gr_pair_examples() {
        let b = ComplementComponent::disk("b", p(0.0, 0.0), 1.0);
        let a = ComplementComponent::disk("a", p(4.0, 0.0), 1.0);
        assert!((gr_pair(&a, &b).unwrap() - 2.0).abs() < 1e-12);
        let pt = ComplementComponent::point("p", p(3.0, 0.0));
        assert_eq!(gr_pair(&pt, &b).unwrap(), 1.0);
        let ring = ComplementComponent::annulus("a", p(0.0, 0.0), 1.1, 2.0);
        assert!((gr_pair(&ring, &b).unwrap() - 30.0).abs() < 1e-9);
    }

    #[test]
    fn polygon_pair_matches_brute_force() {
        let a = ComplementComponent::polygon(
            "a",
            vec![p(3.0, -1.0), p(5.0, -0.5), p(4.5, 1.5), p(3.2, 0.8)],
        );
        let b = ComplementComponent::disk("b", p(0.0, 0.3), 1.0);
        let got = gr_pair(&a, &b).unwrap();
        let brute = (0..10_000)
            .map(|k| {
                let t = TAU * k as f64 / 10_000.0;
                gr_point(&a, p(t.cos(), 0.3 + t.sin())).unwrap()
            })
            .fold(0.0, f64::max);
        assert!(got >= brute - 1e-12 && got - brute < 1e-5, "{got} vs {brute}");
    }

    #[test]
    fn rho_examples() {
        let spec = validate_domain(RawDomain {
            components: vec![ComplementComponent::disk("b", p(0.0, 0.0), 1.0)],
        })
        .unwrap();
        assert_eq!(rho_estimate(&spec, "b", 0.5).unwrap().rho, 1.0);
        assert!(matches!(
            rho_estimate(&spec, "x", 0.5),
            Err(Error::UnknownComponent(_))
        ));
        let spec = validate_domain(RawDomain {
            components: vec![
                ComplementComponent::disk("b", p(0.0, 0.0), 1.0),
                ComplementComponent::annulus("a", p(0.0, 0.0), 1.1, 2.0),
            ],
        })
        .unwrap();
        let r = rho_estimate(&spec, "b", 0.5).unwrap();
        assert!((r.rho - 30.0).abs() < 1e-9);
        assert_eq!(r.pairs.len(), 1);
    }

    #[test]
    fn el_bound_examples() {
        let v = el_upper_bound(1.0, PI / 4.0, 100).unwrap();
        assert!((v - (4.0 * PI + 16.0) / 100.0).abs() < 1e-12);
        assert!((el_upper_bound(1.0, PI / 4.0, 1).unwrap() - (4.0 * PI + 16.0)).abs() < 1e-12);
        assert!((el_upper_bound(2.5, 0.5, 10).unwrap() - 7.5 * PI).abs() < 1e-12);
        assert!(matches!(
            el_upper_bound(1.0, 0.5, 0),
            Err(Error::InvalidParameter(_))
        ));
    }

    #[test]
    fn empty_ladder() {
        let spec = validate_domain(RawDomain {
            components: vec![
                ComplementComponent::point("b", p(0.0, 0.0)),
                ComplementComponent::disk("far", p(10.0, 0.0), 1.0),
            ],
        })
        .unwrap();
        let l = build_radii_ladder(&spec, "b", p(0.0, 0.0), 1.0, 10).unwrap();
        assert_eq!(l.levels(), 0);
        assert_eq!(l.m, 0);
        assert!(matches!(
            build_radii_ladder(&spec, "b", p(0.0, 0.0), -1.0, 10),
            Err(Error::InvalidR0(_))
        ));
    }

    #[test]
    fn membership_needs_both_circles() {
        // meets C(w, 1) but stays outside radius 0.6 > 1/2
        let spec = validate_domain(RawDomain {
            components: vec![
                ComplementComponent::point("b", p(0.0, 0.0)),
                ComplementComponent::annulus("r", p(0.0, 0.0), 0.6, 1.2),
            ],
        })
        .unwrap();
        let l = build_radii_ladder(&spec, "b", p(0.0, 0.0), 1.0, 10).unwrap();
        assert_eq!(l.levels(), 0);
    }
}
