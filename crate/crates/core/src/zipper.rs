//! Geodesic zipper: conformal map of the exterior of a closed polygonal sample
//! onto the exterior of a disk, normalized `f(z) = z + O(1/z)` at infinity.
//!
//! The curve is unzipped point by point into the real line: a square-root map
//! opens the first chord, each further sample is pulled to the origin by the
//! slit map of the circular arc orthogonal to the real line, and a final square
//! folds the upper half-plane so that the two sides of the curve land in the two
//! half-planes. A Möbius map sends the half-plane holding the image of infinity
//! onto the exterior of the unit disk; the affine normalization comes from a
//! second-order Taylor jet carried through the chain at infinity.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geom::PlanePoint;

const I: Complex64 = Complex64 { re: 0.0, im: 1.0 };

/// One exterior Riemann-map stage built from a closed boundary sample.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExteriorStage {
    z0: Complex64,
    z1: Complex64,
    /// `(b, k)` per unzipped sample: `z ↦ √((z/(1 − bz))² + k)` into the upper half-plane.
    slits: Vec<(f64, f64)>,
    /// Image of `z0` before the final fold; `None` stands for infinity.
    zeta: Option<f64>,
    /// Image of infinity after the fold.
    p: Complex64,
    /// `F(z) = A z + B + O(1/z)` for the unnormalized map `F`.
    a: Complex64,
    b: Complex64,
    /// The sample the stage was built from (positively oriented).
    pub source: Vec<PlanePoint>,
    pub center: PlanePoint,
    pub radius: f64,
}

/// Truncated Taylor series `c0 + c1 u + c2 u²`.
#[derive(Debug, Clone, Copy)]
struct Jet([Complex64; 3]);

impl Jet {
    fn mul(self, o: Jet) -> Jet {
        let (a, b) = (self.0, o.0);
        Jet([a[0] * b[0], a[0] * b[1] + a[1] * b[0], a[0] * b[2] + a[1] * b[1] + a[2] * b[0]])
    }

    fn div(self, o: Jet) -> Jet {
        let (a, b) = (self.0, o.0);
        let q0 = a[0] / b[0];
        let q1 = (a[1] - q0 * b[1]) / b[0];
        let q2 = (a[2] - q0 * b[2] - q1 * b[1]) / b[0];
        Jet([q0, q1, q2])
    }

    fn sqrt(self) -> Jet {
        let a = self.0;
        let s0 = a[0].sqrt();
        let s1 = a[1] / (2.0 * s0);
        let s2 = (a[2] - s1 * s1) / (2.0 * s0);
        Jet([s0, s1, s2])
    }

    fn scale(self, c: Complex64) -> Jet {
        Jet(self.0.map(|x| x * c))
    }

    fn add(self, c: Complex64) -> Jet {
        Jet([self.0[0] + c, self.0[1], self.0[2]])
    }
}

/// Square root into the closed upper half-plane.
fn sqrt_up(w: Complex64) -> Complex64 {
    let s = w.sqrt();
    if s.im < 0.0 || (s.im == 0.0 && s.re < 0.0) {
        -s
    } else {
        s
    }
}

/// `√(u² + k)` continued from the upper half-plane; real inputs keep their sign.
fn slit_value(z: Complex64, u: Complex64, k: f64) -> Complex64 {
    let w = u * u + k;
    if z.im <= 0.0 {
        Complex64::new(u.re.signum() * w.re.max(0.0).sqrt(), 0.0)
    } else {
        I * (-w).sqrt()
    }
}

fn slit(z: Option<Complex64>, b: f64, k: f64) -> Option<Complex64> {
    match z {
        None => {
            if b == 0.0 {
                None
            } else {
                let u = Complex64::new(-1.0 / b, 0.0);
                Some(slit_value(Complex64::new(0.0, 0.0), u, k))
            }
        }
        Some(z) => {
            let den = 1.0 - b * z;
            if den == Complex64::new(0.0, 0.0) {
                return None;
            }
            Some(slit_value(z, z / den, k))
        }
    }
}

fn slit_inverse(w: Option<Complex64>, b: f64, k: f64) -> Option<Complex64> {
    let u = match w {
        None => {
            // only the pole of the forward Möbius factor maps to infinity
            return if b == 0.0 { None } else { Some(Complex64::new(1.0 / b, 0.0)) };
        }
        Some(w) => sqrt_up(w * w - k),
    };
    let den = 1.0 + b * u;
    if den == Complex64::new(0.0, 0.0) {
        None
    } else {
        Some(u / den)
    }
}

impl ExteriorStage {
    /// Builds the stage; `points` must be a simple, positively oriented closed sample.
    pub fn build(points: &[PlanePoint]) -> Result<ExteriorStage> {
        let n = points.len();
        if n < 3 {
            return Err(Error::InvalidParameter("zipper needs at least 3 samples".into()));
        }
        let zs: Vec<Complex64> = points.iter().map(|p| p.to_complex()).collect();
        let (z0, z1) = (zs[0], zs[1]);
        let mut w: Vec<Complex64> = zs[2..]
            .iter()
            .map(|&z| I * ((z - z1) / (z - z0)).sqrt())
            .collect();
        let mut zeta: Option<Complex64> = None;
        let mut slits = Vec::with_capacity(w.len());
        for k in 0..w.len() {
            let a = w[k];
            if !(a.im > 0.0) || !a.is_finite() {
                return Err(Error::NonSimpleCurve(format!(
                    "sample {} left the upper half-plane while unzipping",
                    k + 2
                )));
            }
            let n2 = a.norm_sqr();
            let b = a.re / n2;
            let c = n2 / a.im;
            let kk = c * c;
            for z in &mut w[k + 1..] {
                *z = slit(Some(*z), b, kk).unwrap_or(Complex64::new(f64::INFINITY, 0.0));
            }
            zeta = slit(zeta, b, kk);
            slits.push((b, kk));
        }
        let zeta = zeta.map(|z| z.re);
        // Jet of the chain at infinity in u = 1/z.
        let one = Complex64::new(1.0, 0.0);
        let zero = Complex64::new(0.0, 0.0);
        let mut j = Jet([one, -z1, zero])
            .div(Jet([one, -z0, zero]))
            .sqrt()
            .scale(I);
        for &(b, kk) in &slits {
            let den = Jet([one - b * j.0[0], -b * j.0[1], -b * j.0[2]]);
            let u = j.div(den);
            j = u.mul(u).add(Complex64::new(kk, 0.0)).scale(-one).sqrt().scale(I);
        }
        if let Some(zeta) = zeta {
            let den = Jet([one - j.0[0] / zeta, -j.0[1] / zeta, -j.0[2] / zeta]);
            j = j.div(den);
        }
        j = j.mul(j);
        let [p, d1, d2] = j.0;
        let a = (p - p.conj()) / d1;
        let b = one - a * d2 / d1;
        if !(a.is_finite() && b.is_finite()) || a.norm() == 0.0 {
            return Err(Error::ConvergenceFailure(f64::INFINITY));
        }
        Ok(ExteriorStage {
            z0,
            z1,
            slits,
            zeta,
            p,
            a,
            b,
            source: points.to_vec(),
            center: PlanePoint::from_complex(-b / a),
            radius: 1.0 / a.norm(),
        })
    }

    fn fold(&self, z: Option<Complex64>) -> Option<Complex64> {
        let v = match (z, self.zeta) {
            (None, None) => return None,
            (None, Some(zeta)) => Complex64::new(-zeta, 0.0),
            (Some(z), None) => z,
            (Some(z), Some(zeta)) => {
                let den = 1.0 - z / zeta;
                if den == Complex64::new(0.0, 0.0) {
                    return None;
                }
                z / den
            }
        };
        Some(v * v)
    }

    /// Evaluates the normalized map; `None` stands for infinity.
    pub fn forward(&self, z: Option<Complex64>) -> Option<Complex64> {
        let z = z?;
        let mut v = if z == self.z0 {
            None
        } else {
            Some(I * ((z - self.z1) / (z - self.z0)).sqrt())
        };
        for &(b, k) in &self.slits {
            v = slit(v, b, k);
        }
        let f = match self.fold(v) {
            None => Complex64::new(1.0, 0.0),
            Some(w) if w == self.p => return None,
            Some(w) => (w - self.p.conj()) / (w - self.p),
        };
        Some((f - self.b) / self.a)
    }

    /// Evaluates the inverse map; `None` stands for infinity.
    pub fn inverse(&self, w: Option<Complex64>) -> Option<Complex64> {
        let w = w?;
        let f = self.a * w + self.b;
        let one = Complex64::new(1.0, 0.0);
        let mut v = if f == one {
            None
        } else {
            Some((f * self.p - self.p.conj()) / (f - one))
        };
        v = match v {
            None => self.zeta.map(Complex64::from),
            Some(w) => {
                let s = sqrt_up(w);
                match self.zeta {
                    None => Some(s),
                    Some(zeta) => {
                        let den = one + s / zeta;
                        if den == Complex64::new(0.0, 0.0) {
                            None
                        } else {
                            Some(s / den)
                        }
                    }
                }
            }
        };
        for &(b, k) in self.slits.iter().rev() {
            v = slit_inverse(v, b, k);
        }
        match v {
            None => Some(self.z0),
            Some(s) => {
                let s2 = s * s;
                let den = one + s2;
                if den == Complex64::new(0.0, 0.0) {
                    None
                } else {
                    Some((self.z1 + self.z0 * s2) / den)
                }
            }
        }
    }

    pub fn forward_point(&self, p: PlanePoint) -> PlanePoint {
        match self.forward(Some(p.to_complex())) {
            Some(w) => PlanePoint::from_complex(w),
            None => PlanePoint::new(f64::INFINITY, f64::INFINITY),
        }
    }

    /// Number of unzipped samples.
    pub fn len(&self) -> usize {
        self.slits.len() + 2
    }

    pub fn is_empty(&self) -> bool {
        false
    }
}

/// Resamples a closed curve to `n` points equally spaced in chord-length
/// parameter along the periodic cubic spline through the samples.
pub fn resample_closed(points: &[PlanePoint], n: usize) -> Vec<PlanePoint> {
    let mut pts: Vec<Complex64> = Vec::with_capacity(points.len());
    for p in points {
        let z = p.to_complex();
        if pts.last() != Some(&z) {
            pts.push(z);
        }
    }
    while pts.len() > 1 && pts.first() == pts.last() {
        pts.pop();
    }
    let m = pts.len();
    if m < 3 {
        return vec![points[0]; n];
    }
    let h: Vec<f64> = (0..m).map(|i| (pts[(i + 1) % m] - pts[i]).norm()).collect();
    let mut t = vec![0.0; m + 1];
    for i in 0..m {
        t[i + 1] = t[i] + h[i];
    }
    let total = t[m];
    // Cyclic tridiagonal system for the second derivatives.
    let sub: Vec<f64> = (0..m).map(|i| h[(i + m - 1) % m]).collect();
    let diag: Vec<f64> = (0..m).map(|i| 2.0 * (h[(i + m - 1) % m] + h[i])).collect();
    let sup: Vec<f64> = h.clone();
    let rhs: Vec<Complex64> = (0..m)
        .map(|i| {
            let next = (pts[(i + 1) % m] - pts[i]) / h[i];
            let prev = (pts[i] - pts[(i + m - 1) % m]) / h[(i + m - 1) % m];
            (next - prev) * 6.0
        })
        .collect();
    let mm = solve_cyclic(&sub, &diag, &sup, &rhs);
    let mut out = Vec::with_capacity(n);
    let mut seg = 0;
    for k in 0..n {
        let s = total * k as f64 / n as f64;
        while seg + 1 < m && t[seg + 1] <= s {
            seg += 1;
        }
        let hi = h[seg];
        let x = s - t[seg];
        let (y0, y1) = (pts[seg], pts[(seg + 1) % m]);
        let (m0, m1) = (mm[seg], mm[(seg + 1) % m]);
        let y = m0 * ((hi - x).powi(3) / (6.0 * hi))
            + m1 * (x.powi(3) / (6.0 * hi))
            + (y0 / hi - m0 * (hi / 6.0)) * (hi - x)
            + (y1 / hi - m1 * (hi / 6.0)) * x;
        out.push(PlanePoint::from_complex(y));
    }
    out
}

/// Solves `sub[i] x[i−1] + diag[i] x[i] + sup[i] x[i+1] = rhs[i]` with cyclic indices
/// by Sherman–Morrison on top of the Thomas algorithm.
fn solve_cyclic(sub: &[f64], diag: &[f64], sup: &[f64], rhs: &[Complex64]) -> Vec<Complex64> {
    let n = diag.len();
    let alpha = sup[n - 1];
    let beta = sub[0];
    let gamma = -diag[0];
    let mut d = diag.to_vec();
    d[0] -= gamma;
    d[n - 1] -= alpha * beta / gamma;
    let thomas = |r: &[Complex64]| -> Vec<Complex64> {
        let mut c = vec![0.0; n];
        let mut x = vec![Complex64::new(0.0, 0.0); n];
        c[0] = sup[0] / d[0];
        x[0] = r[0] / d[0];
        for i in 1..n {
            let den = d[i] - sub[i] * c[i - 1];
            c[i] = if i + 1 < n { sup[i] / den } else { 0.0 };
            x[i] = (r[i] - x[i - 1] * sub[i]) / den;
        }
        for i in (0..n - 1).rev() {
            x[i] = x[i] - x[i + 1] * c[i];
        }
        x
    };
    let x = thomas(rhs);
    let mut u = vec![Complex64::new(0.0, 0.0); n];
    u[0] = Complex64::new(gamma, 0.0);
    u[n - 1] = Complex64::new(alpha, 0.0);
    let z = thomas(&u);
    let fact = (x[0] + x[n - 1] * (beta / gamma)) / (1.0 + z[0] + z[n - 1] * (beta / gamma));
    x.iter().zip(&z).map(|(&xi, &zi)| xi - zi * fact).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::domain::circle_samples;
    use std::f64::consts::TAU;

    fn ellipse(a: f64, b: f64, n: usize) -> Vec<PlanePoint> {
        let dense: Vec<PlanePoint> = (0..8 * n)
            .map(|k| {
                let t = TAU * k as f64 / (8 * n) as f64;
                PlanePoint::new(a * t.cos(), b * t.sin())
            })
            .collect();
        resample_closed(&dense, n)
    }

    #[test]
    fn circle_stage_is_a_translation() {
        let c = PlanePoint::new(0.3, -0.2);
        let st = ExteriorStage::build(&circle_samples(c, 0.7, 128, 0.0)).unwrap();
        assert!((st.radius - 0.7).abs() < 1e-6, "{}", st.radius);
        let z = PlanePoint::new(2.0, 1.0);
        assert!(st.forward_point(z).dist(z) < 1e-6, "{:?}", st.forward_point(z));
    }

    #[test]
    fn ellipse_capacity() {
        let st = ExteriorStage::build(&ellipse(2.0, 1.0, 1024)).unwrap();
        assert!((st.radius - 1.5).abs() < 1e-4, "{}", st.radius);
    }

    #[test]
    fn inverse_round_trips() {
        let st = ExteriorStage::build(&ellipse(2.0, 1.0, 256)).unwrap();
        for k in 0..50 {
            let t = k as f64 * 0.7;
            let z = Complex64::new((2.0 + 0.1 * k as f64) * t.cos(), 1.5 * t.sin() + 0.3);
            let w = st.forward(Some(z)).unwrap();
            let back = st.inverse(Some(w)).unwrap();
            assert!((back - z).norm() < 1e-9, "{z} {back}");
        }
    }

    #[test]
    fn spline_resample_of_circle_stays_round() {
        let pts: Vec<PlanePoint> = (0..64)
            .map(|k| {
                let t = TAU * (k as f64 / 64.0).powf(1.3);
                PlanePoint::new(t.cos(), t.sin())
            })
            .collect();
        for p in resample_closed(&pts, 200) {
            assert!((p.norm() - 1.0).abs() < 1e-5, "{}", p.norm());
        }
    }
}
