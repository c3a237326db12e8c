//! Deterministic SVG output of domains, circle domains and metric heat maps.

use std::fmt::Write as _;
use std::path::Path;

use crate::domain::{DomainSpec, Shape};
use crate::error::Result;
use crate::geom::PlanePoint;
use crate::grid::{ExtendedMetric, QuotientGrid, Window};
use crate::koebe::CircleDomain;

const FILL: &str = "#4a6fa5";
const HEAT: &str = "#d62728";

/// An SVG document in world coordinates: the view box is the window and the
/// y axis points up.
#[derive(Debug, Clone)]
pub struct Svg {
    window: Window,
    body: String,
}

/// The bounding box of the domain with a 10% margin; the unit square around the
/// origin when there is nothing to frame.
pub fn default_window(spec: &DomainSpec) -> Window {
    match spec.bbox() {
        Some((lo, hi)) => {
            let half = 0.55 * (hi.x - lo.x).max(hi.y - lo.y).max(1e-3);
            Window::square((lo + hi) * 0.5, half)
        }
        None => Window::square(PlanePoint::ORIGIN, 1.0),
    }
}

fn pts(v: &[PlanePoint]) -> String {
    v.iter()
        .map(|p| format!("{:.6},{:.6}", p.x, p.y))
        .collect::<Vec<_>>()
        .join(" ")
}

impl Svg {
    pub fn new(window: Window) -> Self {
        Svg {
            window,
            body: String::new(),
        }
    }

    fn dot(&self) -> f64 {
        0.004 * self.window.width().max(self.window.height())
    }

    /// Fills every component of the domain.
    pub fn spec(mut self, spec: &DomainSpec) -> Self {
        let dot = self.dot();
        for c in spec.components() {
            let id = &c.id;
            let _ = match &c.shape {
                Shape::Point { at } => writeln!(
                    self.body,
                    r#"<circle id="{id}" cx="{:.6}" cy="{:.6}" r="{dot:.6}" fill="{FILL}"/>"#,
                    at.x, at.y
                ),
                Shape::Disk { center, radius } => writeln!(
                    self.body,
                    r#"<circle id="{id}" cx="{:.6}" cy="{:.6}" r="{radius:.6}" fill="{FILL}"/>"#,
                    center.x, center.y
                ),
                Shape::Polygon { vertices } => writeln!(
                    self.body,
                    r#"<polygon id="{id}" points="{}" fill="{FILL}"/>"#,
                    pts(vertices)
                ),
                Shape::Annulus {
                    center,
                    r_in,
                    r_out,
                } => {
                    let ring = |r: f64| {
                        format!(
                            "M {:.6},{:.6} A {r:.6},{r:.6} 0 1,0 {:.6},{:.6} A {r:.6},{r:.6} 0 1,0 {:.6},{:.6} Z",
                            center.x + r,
                            center.y,
                            center.x - r,
                            center.y,
                            center.x + r,
                            center.y
                        )
                    };
                    writeln!(
                        self.body,
                        r#"<path id="{id}" d="{} {}" fill="{FILL}" fill-rule="evenodd"/>"#,
                        ring(*r_out),
                        ring(*r_in)
                    )
                }
            };
        }
        self
    }

    /// Fills the disks and marks the points of a circle domain.
    pub fn circle_domain(self, domain: &CircleDomain) -> Result<Self> {
        Ok(self.spec(&domain.to_spec()?))
    }

    /// One rectangle per cell with nonzero weight, opacity proportional to the
    /// weight relative to the largest cell weight.
    pub fn metric(mut self, grid: &QuotientGrid, m: &ExtendedMetric) -> Self {
        let max = m.weights[..grid.num_cells()]
            .iter()
            .cloned()
            .fold(0.0, f64::max);
        if max <= 0.0 {
            return self;
        }
        for (i, c) in grid.cells.iter().enumerate() {
            let w = m.weights[i];
            if w > 0.0 {
                let lo = c.lo();
                let _ = writeln!(
                    self.body,
                    r#"<rect x="{:.6}" y="{:.6}" width="{:.6}" height="{:.6}" fill="{HEAT}" fill-opacity="{:.6}"/>"#,
                    lo.x,
                    lo.y,
                    c.size,
                    c.size,
                    w / max
                );
            }
        }
        self
    }

    /// A closed polyline outline.
    pub fn outline(mut self, curve: &[PlanePoint], color: &str) -> Self {
        let width = 0.5 * self.dot();
        let _ = writeln!(
            self.body,
            r#"<polygon points="{}" fill="none" stroke="{color}" stroke-width="{width:.6}"/>"#,
            pts(curve)
        );
        self
    }

    pub fn finish(&self) -> String {
        let w = &self.window;
        let mut s = String::new();
        let _ = writeln!(
            s,
            r#"<svg xmlns="http://www.w3.org/2000/svg" viewBox="{:.6} {:.6} {:.6} {:.6}">"#,
            w.min.x,
            -w.max.y,
            w.width(),
            w.height()
        );
        let _ = writeln!(
            s,
            r#"<rect x="{:.6}" y="{:.6}" width="{:.6}" height="{:.6}" fill="white"/>"#,
            w.min.x,
            -w.max.y,
            w.width(),
            w.height()
        );
        s.push_str("<g transform=\"scale(1,-1)\">\n");
        s.push_str(&self.body);
        s.push_str("</g>\n</svg>\n");
        s
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.finish())?;
        Ok(())
    }
}

/// The domain on its default window.
pub fn render_spec(spec: &DomainSpec) -> String {
    Svg::new(default_window(spec)).spec(spec).finish()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::domain::{validate_domain, ComplementComponent, RawDomain};
    use crate::grid::build_quotient_grid;

    fn spec(c: Vec<ComplementComponent>) -> DomainSpec {
        validate_domain(RawDomain { components: c }).unwrap()
    }

    #[test]
    fn empty_spec_is_blank_canvas() {
        let s = render_spec(&spec(vec![]));
        assert!(s.starts_with("<svg"));
        assert!(!s.contains("<circle") && !s.contains("<polygon"));
    }

    #[test]
    fn one_disk_one_circle() {
        let s = render_spec(&spec(vec![ComplementComponent::disk("d", PlanePoint::new(1.0, 2.0), 0.5)]));
        assert_eq!(s.matches("<circle").count(), 1);
        assert_eq!(s, render_spec(&spec(vec![ComplementComponent::disk("d", PlanePoint::new(1.0, 2.0), 0.5)])));
    }

    #[test]
    fn metric_rect_per_nonzero_cell() {
        let sp = spec(vec![]);
        let w = Window::square(PlanePoint::ORIGIN, 1.0);
        let g = build_quotient_grid(&sp, w, 16).unwrap();
        let mut m = ExtendedMetric::zeros(&g);
        for k in [3, 10, 20] {
            m.weights[k] = k as f64;
        }
        let s = Svg::new(w).metric(&g, &m).finish();
        assert_eq!(s.matches("<rect").count(), 1 + 3);
    }
}
