//! Command-line surface: CSV/JSON/SVG emitters over the library pipeline.
//!
//! Every run is a single subcommand over one generator pair. Numeric output
//! uses the shortest round-trip decimal form, infinities spelled `inf`, and
//! all files are written atomically (temp file + rename). Exit codes:
//! 0 success, 1 a verification run found an outside point, 2 generator spec
//! parse failure, 3 I/O failure, 4 achieve missed its tolerance.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use serde::{Serialize, Serializer};

use crate::analysis::{achieve, limit_ratios, singular_locus, unbounded_witness, verify_membership};
use crate::divergence::DivergencePoint;
use crate::generators::{parse_spec, Generator};
use crate::jointrange::{cloud_2achievable, envelope, region_from_cloud, sample_triangle};

/// Serialize an extended real: plain number when finite, the strings
/// `"inf"` / `"-inf"` otherwise. JSON has no infinity literal.
pub fn ser_ext<S: Serializer>(v: &f64, s: S) -> Result<S::Ok, S::Error> {
    if v.is_finite() {
        s.serialize_f64(*v)
    } else if *v > 0.0 {
        s.serialize_str("inf")
    } else {
        s.serialize_str("-inf")
    }
}

/// Shortest round-trip decimal form; infinities spelled `inf`.
pub fn fmt_num(v: f64) -> String {
    if v.is_finite() {
        format!("{v}")
    } else if v > 0.0 {
        "inf".into()
    } else {
        "-inf".into()
    }
}

#[derive(Parser)]
#[command(
    name = "divrange",
    about = "Joint ranges of f-divergence pairs",
    version
)]
pub struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// First generator spec (e.g. tv, kl, power:2, conj(power:3))
    #[arg(long = "f")]
    f_spec: String,
    /// Second generator spec
    #[arg(long = "g")]
    g_spec: String,
    /// Triangle lattice resolution
    #[arg(long, default_value_t = 256)]
    grid: usize,
    /// Certification window X,Y
    #[arg(long, value_parser = parse_xy, default_value = "20,20")]
    window: (f64, f64),
    /// Numeric tolerance
    #[arg(long, default_value_t = 1e-6)]
    tol: f64,
    /// Output directory
    #[arg(long, default_value = ".")]
    out: PathBuf,
    /// Output format
    #[arg(long, value_parser = ["csv", "json", "svg"], default_value = "csv")]
    format: String,
}

#[derive(Subcommand)]
enum Command {
    /// Sample the triangle, hull the image, report hull, rays and cloud
    Range {
        #[command(flatten)]
        common: Common,
    },
    /// Lower/upper envelope of the range over a uniform x grid
    Envelope {
        #[command(flatten)]
        common: Common,
    },
    /// Refined zeros of the Jacobian determinant in the open triangle
    Singular {
        #[command(flatten)]
        common: Common,
    },
    /// Tail ratios of g/f and unboundedness witnesses
    Limits {
        #[command(flatten)]
        common: Common,
    },
    /// Construct a 4-atom distribution pair achieving a target point
    Achieve {
        #[command(flatten)]
        common: Common,
        /// Target point X,Y
        #[arg(long, value_parser = parse_xy)]
        target: (f64, f64),
    },
    /// Monte Carlo membership check of sampled divergence pairs
    Verify {
        #[command(flatten)]
        common: Common,
        /// Simplex dimension
        #[arg(long, default_value_t = 4)]
        dim: usize,
        /// Number of sampled pairs
        #[arg(long, default_value_t = 10_000)]
        trials: usize,
        /// RNG seed
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
}

fn parse_xy(s: &str) -> Result<(f64, f64), String> {
    let (a, b) = s
        .split_once(',')
        .ok_or_else(|| format!("expected X,Y, got {s:?}"))?;
    let x: f64 = a.trim().parse().map_err(|e| format!("bad X {a:?}: {e}"))?;
    let y: f64 = b.trim().parse().map_err(|e| format!("bad Y {b:?}: {e}"))?;
    Ok((x, y))
}

/// Process exit status of a finished run.
pub enum Outcome {
    Success,
    /// verify found a point outside the region: a broken construction
    OutsideFound,
}

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("bad generator spec: {0}")]
    Spec(#[from] crate::generators::SpecParseError),
    #[error("I/O failure: {0}")]
    Io(#[from] std::io::Error),
    #[error("{0}")]
    Range(#[from] crate::jointrange::RangeError),
    #[error("{0}")]
    Analysis(crate::analysis::AnalysisError),
    #[error("achieve residual above tolerance: {0}")]
    ResidualNotMet(f64),
    #[error("target is not inside the computed region")]
    TargetNotInside,
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Spec(_) => 2,
            CliError::Io(_) => 3,
            CliError::Range(_) | CliError::Analysis(_) => 3,
            CliError::ResidualNotMet(_) | CliError::TargetNotInside => 4,
        }
    }
}

impl From<crate::analysis::AnalysisError> for CliError {
    fn from(e: crate::analysis::AnalysisError) -> Self {
        match e {
            crate::analysis::AnalysisError::ResidualNotMet { best } => {
                CliError::ResidualNotMet(best)
            }
            crate::analysis::AnalysisError::TargetNotInside => CliError::TargetNotInside,
            other => CliError::Analysis(other),
        }
    }
}

/// Write a file atomically: same-directory temp file, then rename.
fn write_atomic(path: &Path, contents: &str) -> Result<(), CliError> {
    if let Some(dir) = path.parent() {
        if !dir.as_os_str().is_empty() {
            fs::create_dir_all(dir)?;
        }
    }
    let tmp = path.with_extension("tmp");
    fs::write(&tmp, contents)?;
    fs::rename(&tmp, path)?;
    Ok(())
}

fn load_pair(common: &Common) -> Result<(Generator, Generator), CliError> {
    Ok((parse_spec(&common.f_spec)?, parse_spec(&common.g_spec)?))
}

#[derive(Serialize)]
struct RaysReport {
    f: String,
    g: String,
    rays: Vec<[f64; 2]>,
}

#[derive(Serialize)]
struct AchieveReport {
    f: String,
    g: String,
    target: [f64; 2],
    t1: [f64; 2],
    t2: [f64; 2],
    alpha: f64,
    p: Vec<f64>,
    q: Vec<f64>,
    #[serde(serialize_with = "ser_ext")]
    residual: f64,
}

#[derive(Serialize)]
struct LimitsReport {
    f: String,
    g: String,
    #[serde(flatten)]
    ratios: crate::analysis::LimitRatios,
    witness_g_minus_10f: Option<f64>,
    witness_g_minus_100f: Option<f64>,
}

#[derive(Serialize)]
struct VerifyReport {
    f: String,
    g: String,
    dim: usize,
    trials: usize,
    seed: u64,
    #[serde(flatten)]
    report: crate::analysis::MembershipReport,
}

fn cloud_csv(cloud: &crate::jointrange::PointCloud) -> String {
    let mut out = String::from("p,q,x,y,finite_flag\n");
    for (t, v) in cloud.finite_sources.iter().zip(&cloud.finite_points) {
        let _ = writeln!(
            out,
            "{},{},{},{},1",
            fmt_num(t.p()),
            fmt_num(t.q()),
            fmt_num(v.x),
            fmt_num(v.y)
        );
    }
    for e in &cloud.infinite_ledger {
        let _ = writeln!(
            out,
            "{},{},{},{},0",
            fmt_num(e.at.p()),
            fmt_num(e.at.q()),
            fmt_num(e.x),
            fmt_num(e.y)
        );
    }
    out
}

fn hull_csv(hull: &[DivergencePoint]) -> String {
    let mut out = String::from("x,y\n");
    for p in hull {
        let _ = writeln!(out, "{},{}", fmt_num(p.x), fmt_num(p.y));
    }
    out
}

/// Known closed-form lower boundary curves, overlaid on SVG plots when the
/// generator pair matches.
fn fixture_curve(f: &Generator, g: &Generator) -> Option<fn(f64) -> f64> {
    match (f.name(), g.name()) {
        ("power:2", "power:3") => Some(|x| 2.0 / 3.0 * x * (x + 1.0)),
        ("tv", "power:2") => Some(|x| 0.5 * x * x),
        ("tv", "lecam") => Some(|x| 0.125 * x * x),
        _ => None,
    }
}

/// Static SVG plot: fixed viewport over `[0, wx] x [0, wy]`, decimal axis
/// ticks, one polyline per dataset.
fn svg_plot(window: (f64, f64), datasets: &[(&str, Vec<[f64; 2]>)]) -> String {
    const W: f64 = 640.0;
    const H: f64 = 480.0;
    const M: f64 = 40.0;
    let sx = (W - 2.0 * M) / window.0;
    let sy = (H - 2.0 * M) / window.1;
    let px = |x: f64| M + (x.clamp(0.0, window.0)) * sx;
    let py = |y: f64| H - M - (y.clamp(0.0, window.1)) * sy;
    let mut s = String::new();
    let _ = writeln!(
        s,
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{W}\" height=\"{H}\" viewBox=\"0 0 {W} {H}\">"
    );
    let _ = writeln!(
        s,
        "  <rect x=\"{M}\" y=\"{M}\" width=\"{}\" height=\"{}\" fill=\"none\" stroke=\"black\"/>",
        W - 2.0 * M,
        H - 2.0 * M
    );
    // decimal tick marks along both axes
    for i in 0..=10 {
        let tx = window.0 * i as f64 / 10.0;
        let ty = window.1 * i as f64 / 10.0;
        let _ = writeln!(
            s,
            "  <line x1=\"{0}\" y1=\"{1}\" x2=\"{0}\" y2=\"{2}\" stroke=\"black\"/>",
            px(tx),
            H - M,
            H - M + 5.0
        );
        let _ = writeln!(
            s,
            "  <line x1=\"{1}\" y1=\"{0}\" x2=\"{2}\" y2=\"{0}\" stroke=\"black\"/>",
            py(ty),
            M - 5.0,
            M
        );
    }
    let colors = ["steelblue", "crimson", "seagreen", "darkorange"];
    for (k, (name, pts)) in datasets.iter().enumerate() {
        let mut attr = String::new();
        for p in pts {
            if !p[0].is_finite() || !p[1].is_finite() {
                continue;
            }
            let _ = write!(attr, "{},{} ", px(p[0]), py(p[1]));
        }
        let _ = writeln!(
            s,
            "  <polyline id=\"{}\" points=\"{}\" fill=\"none\" stroke=\"{}\"/>",
            name,
            attr.trim_end(),
            colors[k % colors.len()]
        );
    }
    s.push_str("</svg>\n");
    s
}

fn cmd_range(common: &Common) -> Result<Outcome, CliError> {
    let (f, g) = load_pair(common)?;
    let cloud = cloud_2achievable(&f, &g, &sample_triangle(common.grid)?);
    let region = region_from_cloud(&f, &g, &cloud, common.window)?;
    write_atomic(&common.out.join("cloud.csv"), &cloud_csv(&cloud))?;
    write_atomic(&common.out.join("hull.csv"), &hull_csv(&region.hull))?;
    let rays = RaysReport {
        f: f.name().into(),
        g: g.name().into(),
        rays: region.rays.iter().map(|r| [r.dx, r.dy]).collect(),
    };
    write_atomic(
        &common.out.join("rays.json"),
        &format!("{}\n", serde_json::to_string_pretty(&rays).expect("serializable")),
    )?;
    if common.format == "svg" {
        let mut hull_pts: Vec<[f64; 2]> = region.hull.iter().map(|p| [p.x, p.y]).collect();
        if let Some(first) = hull_pts.first().copied() {
            hull_pts.push(first); // close the polygon
        }
        let cloud_pts: Vec<[f64; 2]> = cloud.finite_points.iter().map(|p| [p.x, p.y]).collect();
        let mut datasets = vec![("cloud", cloud_pts), ("hull", hull_pts)];
        if let Some(curve) = fixture_curve(&f, &g) {
            let pts = (0..=400)
                .map(|i| {
                    let x = common.window.0 * i as f64 / 400.0;
                    [x, curve(x)]
                })
                .collect();
            datasets.push(("fixture", pts));
        }
        write_atomic(
            &common.out.join("range.svg"),
            &svg_plot(common.window, &datasets),
        )?;
    }
    Ok(Outcome::Success)
}

fn cmd_envelope(common: &Common) -> Result<Outcome, CliError> {
    let (f, g) = load_pair(common)?;
    let region = crate::jointrange::joint_range(&f, &g, common.grid, common.window)?;
    let (lo, hi) = region.x_extent();
    let steps = common.grid.max(2);
    let xs: Vec<f64> = (0..=steps)
        .map(|i| lo + (hi - lo) * i as f64 / steps as f64)
        .collect();
    let env = envelope(&region, &xs)?;
    let mut csv = String::from("x,y_lower,y_upper_or_inf\n");
    for i in 0..env.xs.len() {
        let _ = writeln!(
            csv,
            "{},{},{}",
            fmt_num(env.xs[i]),
            fmt_num(env.y_lower[i]),
            fmt_num(env.y_upper[i])
        );
    }
    write_atomic(&common.out.join("envelope.csv"), &csv)?;
    if common.format == "svg" {
        let lower: Vec<[f64; 2]> = env
            .xs
            .iter()
            .zip(&env.y_lower)
            .map(|(&x, &y)| [x, y])
            .collect();
        let upper: Vec<[f64; 2]> = env
            .xs
            .iter()
            .zip(&env.y_upper)
            .filter(|(_, y)| y.is_finite())
            .map(|(&x, &y)| [x, y])
            .collect();
        let mut datasets = vec![("lower", lower)];
        if !upper.is_empty() {
            datasets.push(("upper", upper));
        }
        if let Some(curve) = fixture_curve(&f, &g) {
            let pts = (0..=400)
                .map(|i| {
                    let x = lo + (hi - lo) * i as f64 / 400.0;
                    [x, curve(x)]
                })
                .collect();
            datasets.push(("fixture", pts));
        }
        write_atomic(
            &common.out.join("envelope.svg"),
            &svg_plot(common.window, &datasets),
        )?;
    }
    Ok(Outcome::Success)
}

fn cmd_singular(common: &Common) -> Result<Outcome, CliError> {
    let (f, g) = load_pair(common)?;
    let locus = singular_locus(&f, &g, common.grid.clamp(8, 256), 1e-10)?;
    let mut csv = String::from("p,q,component\n");
    for s in &locus {
        let _ = writeln!(
            csv,
            "{},{},{}",
            fmt_num(s.point.p()),
            fmt_num(s.point.q()),
            s.component
        );
    }
    write_atomic(&common.out.join("singular.csv"), &csv)?;
    Ok(Outcome::Success)
}

fn cmd_limits(common: &Common) -> Result<Outcome, CliError> {
    let (f, g) = load_pair(common)?;
    let ratios = limit_ratios(&f, &g)?;
    let report = LimitsReport {
        f: f.name().into(),
        g: g.name().into(),
        ratios,
        witness_g_minus_10f: unbounded_witness(&f, &g, 10.0).map(|(_, _, v)| v),
        witness_g_minus_100f: unbounded_witness(&f, &g, 100.0).map(|(_, _, v)| v),
    };
    let text = format!("{}\n", serde_json::to_string_pretty(&report).expect("serializable"));
    write_atomic(&common.out.join("limits.json"), &text)?;
    print!("{text}");
    Ok(Outcome::Success)
}

fn cmd_achieve(common: &Common, target: (f64, f64)) -> Result<Outcome, CliError> {
    let (f, g) = load_pair(common)?;
    let cloud = cloud_2achievable(&f, &g, &sample_triangle(common.grid)?);
    let region = region_from_cloud(&f, &g, &cloud, common.window)?;
    let target = DivergencePoint::new(target.0, target.1);
    let m = achieve(&f, &g, &cloud, &region, target, common.tol)?;
    let report = AchieveReport {
        f: f.name().into(),
        g: g.name().into(),
        target: [target.x, target.y],
        t1: [m.t1.p(), m.t1.q()],
        t2: [m.t2.p(), m.t2.q()],
        alpha: m.alpha,
        p: m.p.masses().to_vec(),
        q: m.q.masses().to_vec(),
        residual: m.residual,
    };
    let text = format!("{}\n", serde_json::to_string_pretty(&report).expect("serializable"));
    write_atomic(&common.out.join("achieve.json"), &text)?;
    print!("{text}");
    Ok(Outcome::Success)
}

fn cmd_verify(
    common: &Common,
    dim: usize,
    trials: usize,
    seed: u64,
) -> Result<Outcome, CliError> {
    let (f, g) = load_pair(common)?;
    let region = crate::jointrange::joint_range(&f, &g, common.grid, common.window)?;
    let report = verify_membership(&f, &g, &region, dim, trials, seed, common.tol)?;
    let full = VerifyReport {
        f: f.name().into(),
        g: g.name().into(),
        dim,
        trials,
        seed,
        report,
    };
    let text = format!("{}\n", serde_json::to_string_pretty(&full).expect("serializable"));
    write_atomic(&common.out.join("verify.json"), &text)?;
    print!("{text}");
    if report.outside > 0 {
        Ok(Outcome::OutsideFound)
    } else {
        Ok(Outcome::Success)
    }
}

/// Configure the global thread pool from `DIVRANGE_THREADS` (0 = auto).
pub fn init_threads() {
    if let Ok(v) = std::env::var("DIVRANGE_THREADS") {
        if let Ok(n) = v.parse::<usize>() {
            if n > 0 {
                let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
            }
        }
    }
}

/// Run a parsed invocation.
pub fn run(cli: Cli) -> Result<Outcome, CliError> {
    match &cli.command {
        Command::Range { common } => cmd_range(common),
        Command::Envelope { common } => cmd_envelope(common),
        Command::Singular { common } => cmd_singular(common),
        Command::Limits { common } => cmd_limits(common),
        Command::Achieve { common, target } => cmd_achieve(common, *target),
        Command::Verify {
            common,
            dim,
            trials,
            seed,
        } => cmd_verify(common, *dim, *trials, *seed),
    }
}
