//! Exhaustion by growing finite sets of components, with kernel-convergence
//! diagnostics and the witness-metric bounds at each stage.

use std::collections::BTreeMap;
use std::f64::consts::{FRAC_PI_4, PI, TAU};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::domain::{
    boundary_samples, classify, component_diam, component_distance, DomainSpec, Shape,
};
use crate::error::{Error, Result};
use crate::geom::{hausdorff_distance, PlanePoint};
use crate::grid::{beta_curve, build_quotient_grid, ExtendedMetric, Window};
use crate::koebe::{koebe_run, roundness, sample_diameter, tracking_circle, CircleDomain, KoebeOptions, NumericMap};

/// Nested component sets `B_1 ⊂ B_2 ⊂ …`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExhaustionPlan {
    /// Non-point components by decreasing diameter, ties by id.
    pub schedule: Vec<String>,
    pub stages: Vec<Vec<String>>,
}

/// Adds `batch` components per stage in schedule order.
pub fn plan_exhaustion(spec: &DomainSpec, batch: usize) -> Result<ExhaustionPlan> {
    if batch == 0 {
        return Err(Error::InvalidParameter("batch must be at least 1".into()));
    }
    let mut ranked: Vec<(f64, &str)> = spec
        .components()
        .iter()
        .filter(|c| !c.is_trivial())
        .map(|c| Ok((component_diam(c)?, c.id.as_str())))
        .collect::<Result<_>>()?;
    ranked.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1.cmp(b.1)));
    let schedule: Vec<String> = ranked.iter().map(|(_, id)| id.to_string()).collect();
    let stages = (1..=schedule.len().div_ceil(batch))
        .map(|k| schedule[..(k * batch).min(schedule.len())].to_vec())
        .collect();
    Ok(ExhaustionPlan { schedule, stages })
}

/// Witness-metric bounds on one stage's image domain.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WitnessMetricReport {
    /// `1.05 · max |f_n(β(b))|`.
    pub r: f64,
    /// `A(m*)`.
    pub area: f64,
    /// `(1 + κ⁻¹) π R²`.
    pub bound: f64,
    pub kappa_min: f64,
    pub h: f64,
    /// Components of the image carrying their diameter as weight.
    pub weighted_components: usize,
    pub curves: usize,
    /// Smallest sampled diameter less the pixel slack: every sampled length exceeds it.
    pub delta_star: f64,
    pub min_length: f64,
    /// Curves with `L < D − 2h`.
    pub violations: usize,
}

impl WitnessMetricReport {
    pub fn area_holds(&self) -> bool {
        self.area <= self.bound
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WitnessOptions {
    pub n: usize,
    pub curves: usize,
    pub seed: u64,
}

impl Default for WitnessOptions {
    fn default() -> Self {
        WitnessOptions {
            n: 256,
            curves: 100,
            seed: 0,
        }
    }
}

/// One exhaustion stage.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StageRecord {
    pub n: usize,
    pub members: Vec<String>,
    pub domain: CircleDomain,
    #[serde(skip)]
    pub map: NumericMap,
    pub rounds: usize,
    /// Image samples of each tracked component (tracking circles for points).
    #[serde(skip)]
    pub images: BTreeMap<String, Vec<PlanePoint>>,
    pub roundness: BTreeMap<String, f64>,
    /// Hausdorff distance to the previous stage's image; absent at stage 1.
    pub hausdorff_delta: BTreeMap<String, f64>,
    pub diameters: BTreeMap<String, f64>,
    pub witness: Option<WitnessMetricReport>,
}

impl StageRecord {
    /// The JSON-lines record of the stage.
    pub fn jsonl(&self) -> serde_json::Value {
        serde_json::json!({
            "n": self.n,
            "B_n": self.members,
            "roundness": self.roundness,
            "hausdorff_delta": if self.hausdorff_delta.is_empty() {
                serde_json::Value::Null
            } else {
                serde_json::to_value(&self.hausdorff_delta).unwrap()
            },
            "diameters": self.diameters,
            "witness": self.witness.as_ref().map(|w| serde_json::json!({
                "R": w.r, "area": w.area, "bound": w.bound,
            })),
        })
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct ExhaustionTrace {
    pub stages: Vec<StageRecord>,
    /// Why the run stopped early, if it did.
    pub truncated: Option<String>,
}

impl ExhaustionTrace {
    pub fn jsonl(&self) -> String {
        let mut out = String::new();
        for s in &self.stages {
            out.push_str(&s.jsonl().to_string());
            out.push('\n');
        }
        out
    }
}

/// Tracking circle of a point component: radius 0.01 × distance to the nearest
/// other component.
pub fn point_tracker(spec: &DomainSpec, id: &str, samples: usize) -> Result<Vec<PlanePoint>> {
    let c = spec.get(id)?;
    let Shape::Point { at } = c.shape else {
        return Err(Error::InvalidParameter(format!("{id} is not a point")));
    };
    let nn = spec
        .components()
        .iter()
        .filter(|o| o.id != id)
        .map(|o| component_distance(&o.shape, &c.shape))
        .fold(f64::INFINITY, f64::min);
    let r = if nn.is_finite() { 0.01 * nn } else { 0.01 };
    Ok(tracking_circle(at, r, samples))
}

/// The canonical enclosing curve of `b`, densified, on a grid over the domain.
pub fn default_beta(spec: &DomainSpec, b: &str, n: usize) -> Result<Vec<PlanePoint>> {
    let (lo, hi) = spec
        .bbox()
        .ok_or_else(|| Error::InvalidParameter("empty spec".into()))?;
    let half = 0.5 * (hi.x - lo.x).max(hi.y - lo.y) * 1.2 + 1e-9;
    let center = (lo + hi) * 0.5;
    let grid = build_quotient_grid(spec, Window::square(center, half), n)?;
    let beta = beta_curve(&grid, b)?.polygon;
    let mut out = Vec::new();
    for i in 0..beta.len() {
        let (p, q) = (beta[i], beta[(i + 1) % beta.len()]);
        for k in 0..32 {
            out.push(p + (q - p) * (k as f64 / 32.0));
        }
    }
    Ok(out)
}

/// Uniformizes each `Ω_n` and records the tracked images. A failing stage ends
/// the trace with its reason. With `witness = Some((b, opts))` the witness
/// metric is evaluated at every stage containing `b`.
pub fn run_exhaustion(
    spec: &DomainSpec,
    plan: &ExhaustionPlan,
    koebe: &KoebeOptions,
    tracked: &[String],
    witness: Option<(&str, WitnessOptions)>,
) -> Result<ExhaustionTrace> {
    let mut sources: BTreeMap<String, Vec<PlanePoint>> = BTreeMap::new();
    for id in tracked {
        let c = spec.get(id)?;
        let s = if c.is_trivial() {
            point_tracker(spec, id, 64)?
        } else {
            boundary_samples(&c.shape, koebe.samples)
        };
        sources.insert(id.clone(), s);
    }
    let beta = match witness {
        Some((b, _)) => Some(default_beta(spec, b, 128)?),
        None => None,
    };
    let mut trace = ExhaustionTrace::default();
    for (i, members) in plan.stages.iter().enumerate() {
        let sub = spec.subset(members.iter().map(String::as_str));
        let out = match koebe_run(&sub, koebe) {
            Ok(o) if o.trace.converged => o,
            Ok(o) => {
                trace.truncated = Some(format!(
                    "stage {}: MaxRoundsExceeded: best roundness {:e}",
                    i + 1,
                    o.domain.max_roundness()
                ));
                break;
            }
            Err(e) => {
                trace.truncated = Some(format!("stage {}: {e}", i + 1));
                break;
            }
        };
        let mut images = BTreeMap::new();
        let mut round = BTreeMap::new();
        let mut diameters = BTreeMap::new();
        for (id, src) in &sources {
            let img = match out.boundaries.iter().find(|(k, _)| k == id) {
                Some((_, c)) => c.clone(),
                None => src.iter().map(|&p| out.map.push_point(p)).collect(),
            };
            if spec.get(id)?.is_trivial() {
                diameters.insert(id.clone(), sample_diameter(&img));
            } else {
                round.insert(id.clone(), roundness(&img)?.value);
            }
            images.insert(id.clone(), img);
        }
        let mut deltas = BTreeMap::new();
        if let Some(prev) = trace.stages.last() {
            for (id, img) in &images {
                if let Some(p) = prev.images.get(id) {
                    deltas.insert(id.clone(), hausdorff_distance(p, img)?);
                }
            }
        }
        let mut rec = StageRecord {
            n: i + 1,
            members: members.clone(),
            domain: out.domain,
            map: out.map,
            rounds: out.trace.rounds.len() - 1,
            images,
            roundness: round,
            hausdorff_delta: deltas,
            diameters,
            witness: None,
        };
        if let (Some((b, opts)), Some(beta)) = (witness, &beta) {
            if members.iter().any(|m| m == b) {
                rec.witness = Some(witness_metric(&rec, beta, None, &opts)?);
            }
        }
        trace.stages.push(rec);
    }
    Ok(trace)
}

/// Builds `m*` on the image of a stage: 1 on image-domain cells inside
/// `B(0, R)`, the diameter on image components inside `B(0, R)`, 0 elsewhere;
/// measures `A(m*)` against `(1 + κ⁻¹)πR²` and samples closed curves around
/// the largest image disk inside `f_n(β)` checking `L_{m*} ≥ D − 2h`.
pub fn witness_metric(
    stage: &StageRecord,
    beta: &[PlanePoint],
    kappa_min: Option<f64>,
    opts: &WitnessOptions,
) -> Result<WitnessMetricReport> {
    let image_beta: Vec<PlanePoint> = beta.iter().map(|&p| stage.map.push_point(p)).collect();
    let r = 1.05 * image_beta.iter().map(|p| p.norm()).fold(0.0, f64::max);
    let disks_only = CircleDomain {
        disks: stage.domain.disks.clone(),
        points: Vec::new(),
    };
    let image = disks_only.to_spec()?;
    let kappa = match kappa_min {
        Some(k) => k,
        None => classify(&image).kappa_min.unwrap_or(FRAC_PI_4),
    };
    let grid = build_quotient_grid(&image, Window::square(PlanePoint::ORIGIN, r), opts.n)?;
    let mut m = ExtendedMetric::zeros(&grid);
    for (i, c) in grid.cells.iter().enumerate() {
        if c.owner.is_none() && c.center.norm() < r {
            m.weights[i] = 1.0;
        }
    }
    let mut weighted = 0;
    for (k, node) in grid.components.iter().enumerate() {
        let d = stage.domain.disks.iter().find(|d| d.id == node.id);
        if let Some(d) = d {
            if d.center.norm() + d.radius <= r {
                m.weights[grid.component_node(k)] = 2.0 * d.radius;
                weighted += 1;
            }
        }
    }
    let area = m.area(&grid);
    let bound = (1.0 + 1.0 / kappa) * PI * r * r;
    // Curves wind around the image disk enclosed by f_n(β).
    let target = stage
        .domain
        .disks
        .iter()
        .filter(|d| crate::geom::point_in_polygon(d.center, &image_beta))
        .max_by(|a, b| a.radius.total_cmp(&b.radius))
        .cloned();
    let (c0, r0) = match target {
        Some(d) => (d.center, d.radius),
        None => (PlanePoint::ORIGIN, 0.0),
    };
    let room = 0.95 * r - c0.norm();
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let h = grid.h;
    let (mut min_len, mut min_d, mut violations) = (f64::INFINITY, f64::INFINITY, 0);
    for _ in 0..opts.curves {
        let lo = (1.05 * r0).max(2.0 * h);
        let base = rng.gen_range(lo..room.max(lo * 1.01));
        let amp: Vec<(f64, f64, f64)> = (1..=3)
            .map(|k| (k as f64, rng.gen_range(-0.1..0.1), rng.gen_range(0.0..TAU)))
            .collect();
        let curve: Vec<PlanePoint> = (0..128)
            .map(|i| {
                let t = TAU * i as f64 / 128.0;
                let f = 1.0 + amp.iter().map(|(k, a, ph)| a * (k * t + ph).cos()).sum::<f64>();
                let rad = (base * f).clamp(lo, room.max(lo));
                c0 + PlanePoint::new(t.cos(), t.sin()) * rad
            })
            .collect();
        let len = metric_length(&grid, &m, &curve);
        let d = sample_diameter(&curve);
        if len < d - 2.0 * h {
            violations += 1;
        }
        min_len = min_len.min(len);
        min_d = min_d.min(d);
    }
    Ok(WitnessMetricReport {
        r,
        area,
        bound,
        kappa_min: kappa,
        h,
        weighted_components: weighted,
        curves: opts.curves,
        delta_star: min_d - 2.0 * h,
        min_length: min_len,
        violations,
    })
}

/// `L_m` of a closed polyline: exact line integral over cells plus each
/// crossed component's weight once.
pub fn metric_length(grid: &crate::grid::QuotientGrid, m: &ExtendedMetric, curve: &[PlanePoint]) -> f64 {
    let mut seen = vec![false; grid.components.len()];
    let mut len = 0.0;
    for i in 0..curve.len() {
        let (p, q) = (curve[i], curve[(i + 1) % curve.len()]);
        for (c, l) in grid.segment_cells(p, q) {
            match grid.cells[c as usize].owner {
                None => len += m.weights[c as usize] * l,
                Some(k) => {
                    if !seen[k as usize] {
                        seen[k as usize] = true;
                        len += m.weights[grid.component_node(k as usize)];
                    }
                }
            }
        }
    }
    len
}

/// Kernel-convergence diagnostics for a tracked component.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KernelReport {
    pub b: String,
    pub deltas: Vec<f64>,
    /// Largest delta over the second half of the trace.
    pub tail_hausdorff: f64,
    pub final_roundness: f64,
    /// Distance from `p*` to the final image less the sampling slack, when the
    /// clearance is at least the requested one.
    pub delta_star: Option<f64>,
    /// Deltas non-increasing up to a 20% allowance.
    pub nonincreasing: bool,
}

/// Whether each value is at most `1 + allowance` times its predecessor.
pub fn nonincreasing_within(values: &[f64], allowance: f64) -> bool {
    values.windows(2).all(|w| w[1] <= (1.0 + allowance) * w[0])
}

pub fn kernel_report(
    trace: &ExhaustionTrace,
    b: &str,
    p_star: Option<PlanePoint>,
    eta_clearance: f64,
) -> Result<KernelReport> {
    let stages: Vec<&StageRecord> = trace.stages.iter().filter(|s| s.images.contains_key(b)).collect();
    if stages.len() < 2 {
        return Err(Error::InsufficientStages(format!(
            "{} stage(s) track {b}, need 2",
            stages.len()
        )));
    }
    let deltas: Vec<f64> = stages[1..]
        .iter()
        .filter_map(|s| s.hausdorff_delta.get(b).copied())
        .collect();
    let half = deltas.len() / 2;
    let tail = deltas[half..].iter().cloned().fold(0.0, f64::max);
    let last = stages.last().unwrap();
    let img = &last.images[b];
    let final_roundness = match last.roundness.get(b) {
        Some(&r) => r,
        None => roundness(img)?.value,
    };
    let delta_star = p_star.and_then(|p| {
        let dist = img.iter().map(|q| q.dist(p)).fold(f64::INFINITY, f64::min);
        let slack = (0..img.len())
            .map(|i| 0.5 * img[i].dist(img[(i + 1) % img.len()]))
            .fold(0.0, f64::max);
        (dist >= eta_clearance).then_some(dist - slack)
    });
    Ok(KernelReport {
        b: b.to_string(),
        nonincreasing: nonincreasing_within(&deltas, 0.2),
        deltas,
        tail_hausdorff: tail,
        final_roundness,
        delta_star,
    })
}
