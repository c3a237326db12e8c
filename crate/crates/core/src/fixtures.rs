//! Reference domains with known answers or designed trends.

use std::f64::consts::PI;

use crate::domain::{validate_domain, ComplementComponent, DomainSpec, RawDomain};
use crate::geom::{Mobius, PlanePoint};
use crate::grid::{Refinement, Window};
use crate::modulus::FamilySpec;

fn p(x: f64, y: f64) -> PlanePoint {
    PlanePoint::new(x, y)
}

fn spec(components: Vec<ComplementComponent>) -> DomainSpec {
    validate_domain(RawDomain { components }).expect("fixture is valid")
}

/// Axis-aligned rectangle with the given center and side lengths.
pub fn rectangle(center: PlanePoint, w: f64, h: f64) -> Vec<PlanePoint> {
    let (a, b) = (w / 2.0, h / 2.0);
    vec![
        p(center.x - a, center.y - b),
        p(center.x + a, center.y - b),
        p(center.x + a, center.y + b),
        p(center.x - a, center.y + b),
    ]
}

/// Separating family of the round annulus `A(1, e^{log_ratio})` with the
/// refinement used to resolve it; the analytic extremal length is
/// `2π / log_ratio`.
pub fn annulus_family(log_ratio: f64) -> (DomainSpec, FamilySpec, Refinement) {
    let c = PlanePoint::ORIGIN;
    (
        spec(Vec::new()),
        FamilySpec::Annular {
            center: c,
            r_in: 1.0,
            r_out: log_ratio.exp(),
        },
        Refinement::graded(c, 1.0 / 16.0, 16.0),
    )
}

/// Two unit squares one unit apart, plus a point component above the gap.
pub fn two_squares() -> DomainSpec {
    spec(vec![
        ComplementComponent::polygon("left", rectangle(p(-1.0, 0.0), 1.0, 1.0)),
        ComplementComponent::polygon("right", rectangle(p(1.0, 0.0), 1.0, 1.0)),
        ComplementComponent::point("q", p(0.0, 1.5)),
    ])
}

/// Samples of the ellipse with semi-axes `a`, `b`.
pub fn ellipse(a: f64, b: f64, n: usize) -> Vec<PlanePoint> {
    (0..n)
        .map(|k| {
            let t = 2.0 * PI * k as f64 / n as f64;
            p(a * t.cos(), b * t.sin())
        })
        .collect()
}

/// Unit disks centered at 0 and 4: `Gr(a, b) = 2`.
pub fn disk_pair() -> (ComplementComponent, ComplementComponent) {
    (
        ComplementComponent::disk("a", p(4.0, 0.0), 1.0),
        ComplementComponent::disk("b", p(0.0, 0.0), 1.0),
    )
}

/// Concentric thin rings of radii 1 and 2.
pub fn concentric_rings(thickness: f64) -> (ComplementComponent, ComplementComponent) {
    (
        ComplementComponent::annulus("a", PlanePoint::ORIGIN, 2.0, 2.0 + thickness),
        ComplementComponent::annulus("b", PlanePoint::ORIGIN, 1.0, 1.0 + thickness),
    )
}

/// A disk with a nearby point and a small second disk, together with a
/// separating family and an inversion whose pole lies well outside the family.
pub struct InversionFixture {
    pub spec: DomainSpec,
    pub family: FamilySpec,
    pub refinement: Refinement,
    pub inversion: Mobius,
    pub similarity: Mobius,
}

pub fn inversion_fixture() -> InversionFixture {
    let s = spec(vec![
        ComplementComponent::disk("b", p(0.0, 0.0), 0.5),
        ComplementComponent::point("q", p(0.7, 0.0)),
        ComplementComponent::disk("c", p(-0.8, 0.6), 0.15),
    ]);
    InversionFixture {
        spec: s,
        family: FamilySpec::Separating {
            q: "q".into(),
            b: "b".into(),
            beta: Window::square(PlanePoint::ORIGIN, 1.2).corners(),
        },
        refinement: Refinement::graded(p(0.7, 0.0), 0.2 / 16.0, 8.0),
        inversion: Mobius::inversion_about(p(3.0, 0.5)),
        similarity: Mobius::affine(
            num_complex::Complex64::from_polar(2.5, 0.7),
            num_complex::Complex64::new(-1.3, 4.2),
        )
        .expect("nonzero scale"),
    }
}

/// Concentric ladder around a point component `b` at the origin: thick arcs
/// `a_j` spanning radii `[0.41 R_j, 1.02 R_j]` with `R_j = 0.41^j`, on
/// alternating half-planes so that consecutive arcs overlap radially without
/// touching. The gap ratio of each arc seen from `b` is `1.02 / 0.41 ≈ 2.49`.
pub struct LadderFixture {
    pub spec: DomainSpec,
    pub w: PlanePoint,
    pub beta: Vec<PlanePoint>,
    pub levels: usize,
    pub ratio: f64,
}

pub const LADDER_RATIO: f64 = 0.41;
pub const LADDER_LEVELS: usize = 10;

pub fn thick_arc(id: &str, r_in: f64, r_out: f64, from_deg: f64, to_deg: f64, steps: usize) -> ComplementComponent {
    let (t0, t1) = (from_deg.to_radians(), to_deg.to_radians());
    let dt = (t1 - t0) / steps as f64;
    // inner chords stay outside the disk of radius r_in
    let r_chord = r_in / (dt / 2.0).cos();
    let mut v: Vec<PlanePoint> = (0..=steps)
        .map(|k| {
            let t = t0 + dt * k as f64;
            p(r_out * t.cos(), r_out * t.sin())
        })
        .collect();
    v.extend((0..=steps).rev().map(|k| {
        let t = t0 + dt * k as f64;
        p(r_chord * t.cos(), r_chord * t.sin())
    }));
    ComplementComponent::polygon(id, v)
}

pub fn ladder_fixture() -> LadderFixture {
    let mut comps = vec![ComplementComponent::point("b", PlanePoint::ORIGIN)];
    for j in 0..LADDER_LEVELS {
        let r = LADDER_RATIO.powi(j as i32);
        let (a0, a1) = if j % 2 == 0 { (10.0, 170.0) } else { (190.0, 350.0) };
        comps.push(thick_arc(&format!("a{j}"), LADDER_RATIO * r, 1.02 * r, a0, a1, 64));
    }
    LadderFixture {
        spec: spec(comps),
        w: PlanePoint::ORIGIN,
        beta: Window::square(PlanePoint::ORIGIN, 1.1).corners(),
        levels: LADDER_LEVELS,
        ratio: LADDER_RATIO,
    }
}

impl LadderFixture {
    /// The ladder with a point `q` placed halfway to `b` inside level `2M + 1`.
    pub fn with_q(&self, m: usize) -> (DomainSpec, FamilySpec) {
        let r = LADDER_RATIO.powi(2 * m as i32 + 1);
        let mut comps = self.spec.components().to_vec();
        comps.push(ComplementComponent::point("q", p(-0.5 * r, 0.0)));
        (
            spec(comps),
            FamilySpec::Separating {
                q: "q".into(),
                b: "b".into(),
                beta: self.beta.clone(),
            },
        )
    }
}

/// A central disk `b`, a square, two pairs of bars around a point `p`, and the
/// point itself. Sorted by size the bars enter pairwise after `{b, square}`,
/// so with batch 2 each stage closes one more pair of bars around `p`.
pub fn rings_fixture() -> DomainSpec {
    let c = p(3.5, 0.0);
    spec(vec![
        ComplementComponent::disk("b", PlanePoint::ORIGIN, 1.0),
        ComplementComponent::polygon("z", rectangle(p(-3.5, 0.0), 1.2, 1.2)),
        ComplementComponent::polygon("a_top", rectangle(p(c.x, 0.45), 1.5, 0.06)),
        ComplementComponent::polygon("a_bottom", rectangle(p(c.x, -0.45), 1.5, 0.06)),
        ComplementComponent::polygon("c_left", rectangle(p(2.9, 0.0), 0.06, 0.6)),
        ComplementComponent::polygon("c_right", rectangle(p(4.1, 0.0), 0.06, 0.6)),
        ComplementComponent::point("p", c),
    ])
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geom::point_segment_distance;
    use crate::gap::{gr_pair, ladder_separation_violations, build_radii_ladder};

    #[test]
    fn fixtures_validate() {
        two_squares();
        rings_fixture();
        inversion_fixture();
        let l = ladder_fixture();
        assert_eq!(l.spec.len(), LADDER_LEVELS + 1);
    }

    #[test]
    fn ladder_arcs_keep_their_inner_radius() {
        let a = thick_arc("a", 0.41, 1.02, 10.0, 170.0, 64);
        let crate::domain::Shape::Polygon { vertices: v } = &a.shape else { panic!() };
        let d = (0..v.len())
            .map(|i| point_segment_distance(PlanePoint::ORIGIN, v[i], v[(i + 1) % v.len()]))
            .fold(f64::INFINITY, f64::min);
        assert!((d - 0.41).abs() < 1e-12, "{d}");
        let b = ComplementComponent::point("b", PlanePoint::ORIGIN);
        assert!((gr_pair(&a, &b).unwrap() - 1.02 / 0.41).abs() < 1e-9);
    }

    #[test]
    fn ladder_is_separated() {
        let l = ladder_fixture();
        let ladder = build_radii_ladder(&l.spec, "b", l.w, 1.0, 12).unwrap();
        assert!(ladder.levels() >= 8, "{}", ladder.levels());
        assert!(ladder_separation_violations(&l.spec, &ladder).is_empty());
    }
}
