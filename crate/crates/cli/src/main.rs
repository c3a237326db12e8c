//! `koebe`: analyze, measure and uniformize multiply connected planar domains.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use log::info;
use serde_json::{json, Value};

use koebe_core::domain::{classify, shape_distance_to_point, RawDomain, Shape};
use koebe_core::exhaust::{kernel_report, plan_exhaustion, run_exhaustion, WitnessOptions};
use koebe_core::gap::{build_radii_ladder, rho_estimate};
use koebe_core::grid::{build_quotient_grid, build_refined_grid, polygon_cells_in_omega, Window};
use koebe_core::koebe::koebe_run;
use koebe_core::modulus::solve_modulus;
use koebe_core::render::{default_window, Svg};
use koebe_core::{
    ComplementComponent, DomainSpec, Error, FamilySpec, KoebeOptions, PlanePoint, Refinement,
    Result,
};

#[derive(Parser, Debug)]
#[command(name = "koebe", version, about)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Nondegeneracy and gap-ratio report.
    Analyze(Opts),
    /// Transboundary extremal length of a curve family.
    Modulus(Opts),
    /// Koebe iteration to a circle domain.
    Uniformize(Opts),
    /// Exhaustion trace as JSON lines.
    Exhaust(Opts),
    /// SVG of a domain or circle domain.
    Render(Opts),
}

#[derive(Args, Debug, Clone)]
struct Opts {
    /// Input domain file (JSON).
    #[arg(long = "in")]
    input: PathBuf,
    /// Output file; standard output when absent.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Base grid resolution.
    #[arg(long)]
    n: Option<usize>,
    /// Relative tolerance of the modulus bracket.
    #[arg(long, default_value_t = 0.02)]
    tol: f64,
    #[arg(long, default_value_t = 200)]
    max_iter: usize,
    #[arg(long, default_value_t = 1e-3)]
    roundness_target: f64,
    #[arg(long, default_value_t = 100)]
    max_rounds: usize,
    /// Boundary samples per component.
    #[arg(long, default_value_t = 256)]
    samples: usize,
    /// Components added per exhaustion stage.
    #[arg(long, default_value_t = 2)]
    batch: usize,
    /// Neighbourhood radius for the gap-ratio estimate.
    #[arg(long)]
    delta: Option<f64>,
    /// Base component id.
    #[arg(long)]
    b: Option<String>,
    /// Point `X,Y` for the separating family.
    #[arg(long, value_parser = parse_point)]
    q: Option<PlanePoint>,
    #[arg(long)]
    svg: Option<PathBuf>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

fn parse_point(s: &str) -> std::result::Result<PlanePoint, String> {
    let (x, y) = s.split_once(',').ok_or("expected X,Y")?;
    let x: f64 = x.trim().parse().map_err(|e| format!("{e}"))?;
    let y: f64 = y.trim().parse().map_err(|e| format!("{e}"))?;
    Ok(PlanePoint::new(x, y))
}

/// Outcome of a command that produced output but did not converge.
enum NotConverged {
    Error(Error),
    Message(String),
}

type CmdResult = std::result::Result<Option<NotConverged>, Error>;

fn read(path: &Path) -> Result<String> {
    Ok(std::fs::read_to_string(path)?)
}

fn emit(out: &Option<PathBuf>, text: &str) -> Result<()> {
    match out {
        Some(p) => std::fs::write(p, text)?,
        None => print!("{text}"),
    }
    Ok(())
}

fn pretty(v: &Value) -> String {
    let mut s = serde_json::to_string_pretty(v).expect("JSON values serialize");
    s.push('\n');
    s
}

fn to_value<T: serde::Serialize>(t: &T) -> Value {
    serde_json::to_value(t).expect("reports serialize")
}

/// A point of `b` from which the radii ladder is measured.
fn anchor(shape: &Shape) -> PlanePoint {
    match shape {
        Shape::Point { at } => *at,
        Shape::Disk { center, radius } => *center + PlanePoint::new(*radius, 0.0),
        Shape::Polygon { vertices } => vertices[0],
        Shape::Annulus { center, r_in, .. } => *center + PlanePoint::new(*r_in, 0.0),
    }
}

fn analyze(o: &Opts) -> CmdResult {
    let spec = DomainSpec::from_json(&read(&o.input)?)?;
    let mut report = json!({ "nondegeneracy": to_value(&classify(&spec)) });
    if let Some(b) = &o.b {
        let delta = o
            .delta
            .ok_or_else(|| Error::InvalidParameter("--b needs --delta".into()))?;
        let mut gr = rho_estimate(&spec, b, delta)?;
        let base = spec.get(b)?;
        if !base.is_trivial() || spec.len() > 1 {
            gr.ladder = Some(build_radii_ladder(&spec, b, anchor(&base.shape), delta, 64)?);
        }
        report["gap_ratio"] = to_value(&gr);
    }
    emit(&o.out, &pretty(&report))?;
    if let Some(svg) = &o.svg {
        Svg::new(default_window(&spec)).spec(&spec).write(svg)?;
    }
    Ok(None)
}

/// A modulus problem: the domain plus an explicit family and refinement.
#[derive(serde::Deserialize)]
#[serde(deny_unknown_fields)]
struct ModulusProblem {
    domain: RawDomain,
    family: FamilySpec,
    #[serde(default)]
    refinement: Option<Refinement>,
}

fn modulus_problem(o: &Opts) -> Result<(DomainSpec, FamilySpec, Refinement)> {
    let text = read(&o.input)?;
    let value: Value = serde_json::from_str(&text).map_err(|e| Error::Parse(e.to_string()))?;
    if value.get("family").is_some() {
        let p: ModulusProblem =
            serde_json::from_value(value).map_err(|e| Error::Parse(e.to_string()))?;
        let spec = koebe_core::domain::validate_domain(p.domain)?;
        let refinement = match (p.refinement, &p.family) {
            (Some(r), _) => r,
            (None, FamilySpec::Annular { center, r_in, .. }) => {
                Refinement::graded(*center, r_in / 16.0, 16.0)
            }
            (None, FamilySpec::Separating { .. }) => Refinement::none(),
        };
        return Ok((spec, p.family, refinement));
    }
    let spec = DomainSpec::from_json(&text)?;
    let (Some(b), Some(q)) = (&o.b, o.q) else {
        return Err(Error::InvalidParameter(
            "a domain file needs --b and --q, or a problem file with a family".into(),
        ));
    };
    let base = spec.get(b)?;
    let gap = shape_distance_to_point(&base.shape, q);
    let found = spec.components().iter().find(|c| match c.shape {
        Shape::Point { at } => at.dist(q) <= 1e-12,
        _ => false,
    });
    let (spec, qid) = match found {
        Some(c) => (spec.clone(), c.id.clone()),
        None => {
            let mut raw = spec.to_raw();
            raw.components.push(ComplementComponent::point("q", q));
            (koebe_core::domain::validate_domain(raw)?, "q".to_string())
        }
    };
    let refinement = Refinement::graded(q, gap / 16.0, 8.0);
    let beta = enclosing_square(&spec, b, &qid)?;
    Ok((
        spec,
        FamilySpec::Separating {
            q: qid,
            b: b.clone(),
            beta,
        },
        refinement,
    ))
}

/// The smallest of a growing sequence of squares around `b` and `q` whose
/// boundary stays in the domain.
fn enclosing_square(spec: &DomainSpec, b: &str, q: &str) -> Result<Vec<PlanePoint>> {
    let (lo, hi) = spec
        .subset([b, q])
        .bbox()
        .ok_or_else(|| Error::UnknownComponent(b.to_string()))?;
    let center = (lo + hi) * 0.5;
    let half0 = 0.5 * (hi.x - lo.x).max(hi.y - lo.y).max(1e-6);
    for k in 1..=24 {
        let half = half0 * 1.15f64.powi(k);
        let square = Window::square(center, half).corners();
        let grid = build_quotient_grid(spec, Window::square(center, 1.25 * half), 64)?;
        if polygon_cells_in_omega(&grid, &square).is_some() {
            return Ok(square);
        }
    }
    Err(Error::NoSeparatingCycle(format!(
        "no square around {b} and {q} avoids the other components"
    )))
}

fn modulus(o: &Opts) -> CmdResult {
    let (spec, family, refinement) = modulus_problem(o)?;
    let family = family.densified(64);
    let n = o.n.unwrap_or(128);
    let grid = build_refined_grid(&spec, family.window(), n, &refinement)?;
    info!("grid: {} cells, {} components", grid.num_cells(), grid.components.len());
    match solve_modulus(&grid, &family, o.tol, o.max_iter) {
        Ok(r) => {
            let v = json!({
                "el": r.el,
                "modulus": r.modulus,
                "iterations": r.iterations,
                "residual": r.residual,
                "lower": r.lower,
                "upper": r.upper,
                "constraints": r.constraints,
            });
            emit(&o.out, &pretty(&v))?;
            if let Some(svg) = &o.svg {
                Svg::new(family.window())
                    .metric(&grid, &r.extremal_metric)
                    .spec(&spec)
                    .write(svg)?;
            }
            Ok(None)
        }
        Err(e @ Error::MaxIterExceeded { iterations, lower, upper }) => {
            let v = json!({
                "status": e.name(),
                "iterations": iterations,
                "lower": lower,
                "upper": upper,
            });
            emit(&o.out, &pretty(&v))?;
            Ok(Some(NotConverged::Error(e)))
        }
        Err(e) => Err(e),
    }
}

fn koebe_options(o: &Opts) -> KoebeOptions {
    KoebeOptions {
        roundness_target: o.roundness_target,
        max_rounds: o.max_rounds,
        samples: o.samples,
    }
}

fn uniformize(o: &Opts) -> CmdResult {
    let spec = DomainSpec::from_json(&read(&o.input)?)?;
    let out = koebe_run(&spec, &koebe_options(o))?;
    let mut v = to_value(&out.domain);
    v["rounds"] = json!(out.trace.rounds.len() - 1);
    v["converged"] = json!(out.trace.converged);
    emit(&o.out, &pretty(&v))?;
    if let Some(svg) = &o.svg {
        let before = svg.with_extension("before.svg");
        Svg::new(default_window(&spec)).spec(&spec).write(&before)?;
        let image = out.domain.to_spec()?;
        Svg::new(default_window(&image)).spec(&image).write(svg)?;
    }
    if out.trace.converged {
        Ok(None)
    } else {
        Ok(Some(NotConverged::Error(Error::MaxRoundsExceeded(
            out.domain.max_roundness(),
        ))))
    }
}

fn exhaust(o: &Opts) -> CmdResult {
    let spec = DomainSpec::from_json(&read(&o.input)?)?;
    let plan = plan_exhaustion(&spec, o.batch)?;
    let b = match &o.b {
        Some(b) => {
            spec.get(b)?;
            b.clone()
        }
        None => plan
            .schedule
            .first()
            .cloned()
            .ok_or_else(|| Error::InvalidParameter("no non-point component to track".into()))?,
    };
    let mut tracked = vec![b.clone()];
    tracked.extend(
        spec.components()
            .iter()
            .filter(|c| c.is_trivial())
            .map(|c| c.id.clone()),
    );
    let witness = WitnessOptions {
        n: o.n.unwrap_or(256),
        seed: o.seed,
        ..WitnessOptions::default()
    };
    let trace = run_exhaustion(&spec, &plan, &koebe_options(o), &tracked, Some((&b, witness)))?;
    emit(&o.out, &trace.jsonl())?;
    if trace.stages.len() >= 2 {
        let k = kernel_report(&trace, &b, None, 0.0)?;
        info!("kernel report: {}", to_value(&k));
    }
    if let (Some(svg), Some(last)) = (&o.svg, trace.stages.last()) {
        let image = last.domain.to_spec()?;
        let mut doc = Svg::new(default_window(&image)).spec(&image);
        for curve in last.images.values() {
            doc = doc.outline(curve, "#222222");
        }
        doc.write(svg)?;
    }
    Ok(trace.truncated.map(NotConverged::Message))
}

fn render(o: &Opts) -> CmdResult {
    let text = read(&o.input)?;
    let value: Value = serde_json::from_str(&text).map_err(|e| Error::Parse(e.to_string()))?;
    let spec = if value.get("disks").is_some() {
        serde_json::from_value::<koebe_core::CircleDomain>(value)
            .map_err(|e| Error::Parse(e.to_string()))?
            .to_spec()?
    } else {
        DomainSpec::from_json(&text)?
    };
    let doc = Svg::new(default_window(&spec)).spec(&spec);
    match o.svg.as_ref().or(o.out.as_ref()) {
        Some(p) => doc.write(p)?,
        None => print!("{}", doc.finish()),
    }
    Ok(None)
}

fn exit_code(e: &Error) -> u8 {
    match e {
        Error::Io(_) => 4,
        Error::MaxIterExceeded { .. } | Error::MaxRoundsExceeded(_) | Error::ConvergenceFailure(_) => 3,
        _ => 2,
    }
}

fn init_logging() {
    let level = match std::env::var("TOOL_LOG").as_deref() {
        Ok("debug") => log::LevelFilter::Debug,
        Ok("info") => log::LevelFilter::Info,
        _ => log::LevelFilter::Warn,
    };
    let level = if std::env::var("TOOL_LOG").as_deref() == Ok("quiet") {
        log::LevelFilter::Off
    } else {
        level
    };
    env_logger::Builder::new().filter_level(level).init();
}

fn main() -> ExitCode {
    init_logging();
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Analyze(o) => analyze(o),
        Command::Modulus(o) => modulus(o),
        Command::Uniformize(o) => uniformize(o),
        Command::Exhaust(o) => exhaust(o),
        Command::Render(o) => render(o),
    };
    match result {
        Ok(None) => ExitCode::SUCCESS,
        Ok(Some(NotConverged::Error(e))) => {
            eprintln!("{e}");
            ExitCode::from(3)
        }
        Ok(Some(NotConverged::Message(m))) => {
            eprintln!("{m}");
            ExitCode::from(3)
        }
        Err(e) => {
            eprintln!("{e}");
            ExitCode::from(exit_code(&e))
        }
    }
}
