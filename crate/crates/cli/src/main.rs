mod output;

use std::f64::consts::PI;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use serde::Serialize;

use cmc_core::geodesics::{geodesic_residual, horizontal_lift, shoot, ChartStar, GeodesicPath, PlanarCurve, SphereCap};
use cmc_core::isoperimetry::{compare_at_volume, profile_table, scan_range, Winner};
use cmc_core::mesh::Mesh;
use cmc_core::space_forms::hopf_preimage;
use cmc_core::spheres::{build_sphere, sphere_report};
use cmc_core::stability::{
    constant_fn, index_form, meanzero_scan, radial_times_nt, random_scan, second_variation_fd, Constraint,
    SphereParams, StabilityMode, StabilityReport, Variation, Verdict, STABLE_TOL,
};
use cmc_core::{make_space, GeomError, Model, RunConfig, V3, V4};

use output::{fmt_f64, sidecar, write_atomic, write_csv, write_report};

#[derive(Parser)]
#[command(name = "cmc", version, about = "CMC spheres in Sasakian space forms")]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Shoot one CC-geodesic from the origin and write it as CSV.
    Trace {
        #[arg(long, allow_hyphen_values = true)]
        kappa: f64,
        #[arg(long)]
        lambda: f64,
        #[arg(long, default_value_t = 0.0, allow_hyphen_values = true)]
        theta: f64,
        #[arg(long)]
        smax: f64,
        #[arg(long, default_value_t = 1e-3)]
        step: f64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Build the sphere of curvature lambda at the origin and report area and volume.
    Sphere {
        #[arg(long, allow_hyphen_values = true)]
        kappa: f64,
        #[arg(long)]
        lambda: f64,
        #[arg(long, default_value_t = 64)]
        n_theta: usize,
        #[arg(long, default_value_t = 65)]
        n_s: usize,
        #[arg(long, default_value_t = 1e-6)]
        focus_tol: f64,
        #[arg(long)]
        mesh: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Stability certificates for the sphere.
    Stability {
        #[arg(long, value_enum)]
        mode: Mode,
        #[arg(long, allow_hyphen_values = true)]
        kappa: f64,
        #[arg(long)]
        lambda: f64,
        #[arg(long, default_value_t = 1000)]
        trials: usize,
        #[arg(long, default_value_t = 42)]
        seed: u64,
        /// Truncation `m,n` of the random Fourier test functions.
        #[arg(long, default_value = "8,8")]
        truncation: String,
        #[arg(long, value_enum, default_value_t = VariationKind::Vertical)]
        variation: VariationKind,
        #[arg(long, value_enum, default_value_t = Profile::Cos2)]
        profile: Profile,
        #[arg(long, default_value_t = 1e-2)]
        h: f64,
        #[arg(long, default_value_t = 1e-3)]
        fd_tol: f64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Sphere versus torus in the flat cylinder.
    Isoper {
        #[arg(long, conflicts_with_all = ["scan", "table"])]
        volume: Option<f64>,
        #[arg(long, conflicts_with = "table")]
        scan: bool,
        #[arg(long)]
        table: bool,
        #[arg(long, default_value_t = 10_000)]
        resolution: usize,
        #[arg(long)]
        vmin: Option<f64>,
        #[arg(long)]
        vmax: Option<f64>,
        #[arg(long, default_value_t = 101)]
        n: usize,
        #[arg(long)]
        out: PathBuf,
    },
    /// Vertical displacement of the horizontal lift of a closed base curve.
    Holonomy {
        #[arg(long, allow_hyphen_values = true)]
        kappa: f64,
        #[arg(long, value_enum, default_value_t = Curve::Circle)]
        curve: Curve,
        /// Chart radius, or angular radius for `cap`.
        #[arg(long, default_value_t = 0.5)]
        radius: f64,
        #[arg(long, default_value = "0,0", allow_hyphen_values = true)]
        center: String,
        #[arg(long, default_value_t = 0.3)]
        amp: f64,
        #[arg(long, default_value_t = 5)]
        lobes: u32,
        #[arg(long, default_value_t = 4000)]
        steps: usize,
        #[arg(long, default_value_t = 1e-6)]
        tol: f64,
        #[arg(long)]
        out: PathBuf,
    },
}

#[derive(Clone, Copy, ValueEnum, Serialize, Debug)]
#[serde(rename_all = "kebab-case")]
enum Mode {
    WirtingerPoles,
    WirtingerEquator,
    Meanzero,
    Parallel,
    Fd,
}

#[derive(Clone, Copy, ValueEnum, Debug, PartialEq)]
enum VariationKind {
    Parallel,
    Vertical,
}

#[derive(Clone, Copy, ValueEnum, Debug)]
enum Profile {
    Cos2,
    Sin2,
    Cos4,
}

#[derive(Clone, Copy, ValueEnum, Debug)]
enum Curve {
    Circle,
    Star,
    Cap,
}

enum Failure {
    Usage(String),
    Runtime(String),
}

impl From<anyhow::Error> for Failure {
    fn from(e: anyhow::Error) -> Self {
        match e.downcast::<GeomError>() {
            Ok(g) => g.into(),
            Err(e) => Failure::Runtime(format!("{e:#}")),
        }
    }
}

impl From<GeomError> for Failure {
    fn from(e: GeomError) -> Self {
        match e {
            GeomError::InvalidKappa(_)
            | GeomError::NoCutPoint(_)
            | GeomError::InvalidArgument(_)
            | GeomError::NoAdmissibleSphere(_) => Failure::Usage(e.to_string()),
            other => Failure::Runtime(other.to_string()),
        }
    }
}

type Outcome = std::result::Result<bool, Failure>;

fn pair<T: std::str::FromStr>(s: &str, what: &str) -> std::result::Result<(T, T), Failure> {
    let parts: Vec<&str> = s.split(',').map(str::trim).collect();
    match parts.as_slice() {
        [a, b] => match (a.parse(), b.parse()) {
            (Ok(a), Ok(b)) => Ok((a, b)),
            _ => Err(Failure::Usage(format!("--{what} expects two comma-separated numbers, got {s:?}"))),
        },
        _ => Err(Failure::Usage(format!("--{what} expects two comma-separated numbers, got {s:?}"))),
    }
}

fn trace_rows(path: &GeodesicPath, lambda: f64, space: &cmc_core::SpaceForm) -> Vec<Vec<String>> {
    let res = geodesic_residual(space, path, lambda);
    (0..path.len())
        .map(|i| {
            let mut r = vec![fmt_f64(path.s[i])];
            r.extend(path.pos[i].iter().map(|x| fmt_f64(*x)));
            r.extend(path.vel[i].iter().map(|x| fmt_f64(*x)));
            r.push(fmt_f64(res[i]));
            r
        })
        .collect()
}

const TRACE_HEADER: [&str; 10] = ["s", "x0", "x1", "x2", "x3", "v0", "v1", "v2", "v3", "residual"];

fn cmd_trace(kappa: f64, lambda: f64, theta: f64, smax: f64, step: f64, out: &Path) -> Outcome {
    let mut cfg = RunConfig::new("trace").param("theta", theta).param("smax", smax).param("step", step);
    cfg.kappa = Some(kappa);
    cfg.lambda = Some(lambda);
    cfg.outputs = vec![out.display().to_string()];
    if !(lambda.is_finite() && lambda >= 0.0) {
        return Err(Failure::Usage(format!("--lambda must be non-negative, got {lambda}")));
    }
    let space = make_space(kappa)?;
    match shoot(&space, &space.origin(), theta, lambda, smax, step) {
        Ok(path) => {
            write_csv(out, &cfg, &TRACE_HEADER, &trace_rows(&path, lambda, &space))?;
            Ok(true)
        }
        Err(GeomError::ChartExit { s_exit, partial }) => {
            cfg.params.insert("chart_exit".into(), s_exit.to_string());
            write_csv(out, &cfg, &TRACE_HEADER, &trace_rows(&partial, lambda, &space))?;
            Err(Failure::Runtime(format!("geodesic left the chart at s = {s_exit}; partial trace written")))
        }
        Err(e) => Err(e.into()),
    }
}

#[allow(clippy::too_many_arguments)]
fn cmd_sphere(
    kappa: f64,
    lambda: f64,
    n_theta: usize,
    n_s: usize,
    focus_tol: f64,
    mesh: Option<&Path>,
    out: &Path,
) -> Outcome {
    let mut cfg = RunConfig::new("sphere");
    cfg.kappa = Some(kappa);
    cfg.lambda = Some(lambda);
    cfg.n_theta = Some(n_theta);
    cfg.n_s = Some(n_s);
    cfg.tolerances.insert("focus".into(), focus_tol);
    cfg.outputs.push(out.display().to_string());
    let space = make_space(kappa)?;
    let sphere = build_sphere(&space, &space.origin(), lambda, n_theta, n_s)?;
    let report = sphere_report(&sphere)?;
    if let Some(m) = mesh {
        cfg.outputs.push(m.display().to_string());
        let mesh = Mesh::from_sphere(&sphere);
        let mut obj = Vec::new();
        mesh.write_obj(&mut obj)?;
        write_atomic(m, &obj)?;
        let mut attr = Vec::new();
        mesh.write_attributes_csv(&mut attr)?;
        write_atomic(&sidecar(m, ".attr.csv"), &attr)?;
    }
    write_report(out, &cfg, &report)?;
    Ok(report.pole_spread < focus_tol)
}

fn radial(profile: Profile, tau: f64) -> Box<dyn Fn(f64) -> (f64, f64) + Sync> {
    match profile {
        Profile::Cos2 => Box::new(move |s: f64| ((2.0 * tau * s).cos(), -2.0 * tau * (2.0 * tau * s).sin())),
        Profile::Sin2 => Box::new(move |s: f64| ((tau * s).sin().powi(2), tau * (2.0 * tau * s).sin())),
        Profile::Cos4 => Box::new(move |s: f64| {
            let x = tau * s;
            ((4.0 * x).cos() + 0.5 * (2.0 * x).cos(), -tau * (4.0 * (4.0 * x).sin() + (2.0 * x).sin()))
        }),
    }
}

#[allow(clippy::too_many_arguments)]
fn cmd_stability(
    mode: Mode,
    kappa: f64,
    lambda: f64,
    trials: usize,
    seed: u64,
    truncation: &str,
    variation: VariationKind,
    profile: Profile,
    h: f64,
    fd_tol: f64,
    out: &Path,
) -> Outcome {
    let mut cfg = RunConfig::new("stability").param("mode", format!("{mode:?}"));
    cfg.kappa = Some(kappa);
    cfg.lambda = Some(lambda);
    cfg.outputs.push(out.display().to_string());
    let p = SphereParams::new(lambda, kappa)?;
    let report = match mode {
        Mode::WirtingerPoles | Mode::WirtingerEquator | Mode::Meanzero => {
            let (m, n) = pair::<usize>(truncation, "truncation")?;
            cfg.seed = Some(seed);
            cfg.trials = Some(trials);
            cfg.params.insert("truncation".into(), format!("{m},{n}"));
            cfg.tolerances.insert("stable".into(), STABLE_TOL);
            match mode {
                Mode::WirtingerPoles => random_scan(&p, Constraint::Poles, trials, (m, n), seed)?,
                Mode::WirtingerEquator => random_scan(&p, Constraint::Equator, trials, (m, n), seed)?,
                _ => meanzero_scan(&p, trials, (m, n), seed)?,
            }
        }
        Mode::Parallel => {
            cfg.params.insert("h".into(), h.to_string());
            let fd = second_variation_fd(&p, Variation::Parallel, h)?;
            let one = constant_fn(1.0);
            let quad = index_form(&p, &one, &one);
            StabilityReport {
                mode: StabilityMode::Parallel,
                value: fd.value,
                trials: 1,
                seed: 0,
                verdict: if fd.value >= -STABLE_TOL { Verdict::Pass } else { Verdict::Fail },
                values: vec![fd.value, quad],
            }
        }
        Mode::Fd => {
            cfg.params.insert("h".into(), h.to_string());
            cfg.params.insert("variation".into(), format!("{variation:?}").to_lowercase());
            cfg.tolerances.insert("fd".into(), fd_tol);
            let (fd, quad) = if variation == VariationKind::Parallel {
                let one = constant_fn(1.0);
                (second_variation_fd(&p, Variation::Parallel, h)?.value, index_form(&p, &one, &one))
            } else {
                cfg.params.insert("profile".into(), format!("{profile:?}").to_lowercase());
                let g = radial(profile, p.tau);
                let u = radial_times_nt(p, g.as_ref());
                (second_variation_fd(&p, Variation::Vertical(g.as_ref()), h)?.value, index_form(&p, &u, &u))
            };
            let rel = (fd - quad).abs() / quad.abs().max(1e-300);
            StabilityReport {
                mode: StabilityMode::FdCrosscheck,
                value: rel,
                trials: 1,
                seed: 0,
                verdict: if rel < fd_tol { Verdict::Pass } else { Verdict::Fail },
                values: vec![fd, quad],
            }
        }
    };
    write_report(out, &cfg, &report)?;
    Ok(report.verdict == Verdict::Pass)
}

#[derive(Serialize)]
struct ScanSummary {
    v_low: f64,
    v_high: f64,
    transitions: Vec<cmc_core::isoperimetry::Transition>,
    resolution: usize,
}

#[allow(clippy::too_many_arguments)]
fn cmd_isoper(
    volume: Option<f64>,
    scan: bool,
    table: bool,
    resolution: usize,
    vmin: Option<f64>,
    vmax: Option<f64>,
    n: usize,
    out: &Path,
) -> Outcome {
    let mut cfg = RunConfig::new("isoper");
    cfg.outputs.push(out.display().to_string());
    let pi2 = PI * PI;
    if let Some(v) = volume {
        cfg.params.insert("volume".into(), v.to_string());
        let c = compare_at_volume(v)?;
        write_report(out, &cfg, &c)?;
        return Ok(true);
    }
    let (lo, hi) = (vmin.unwrap_or(pi2), vmax.unwrap_or(10.0 * pi2));
    cfg.params.insert("vmin".into(), lo.to_string());
    cfg.params.insert("vmax".into(), hi.to_string());
    if scan {
        cfg.params.insert("resolution".into(), resolution.to_string());
        let r = scan_range(lo, hi, resolution)?;
        let s = ScanSummary { v_low: r.v_low, v_high: r.v_high, transitions: r.transitions, resolution };
        write_report(out, &cfg, &s)?;
        return Ok(true);
    }
    if table {
        cfg.params.insert("n".into(), n.to_string());
        let rows: Vec<Vec<String>> = profile_table(lo, hi, n)?
            .iter()
            .map(|r| {
                vec![
                    fmt_f64(r.volume),
                    r.sphere_area.map(fmt_f64).unwrap_or_default(),
                    fmt_f64(r.torus_area),
                    match r.winner {
                        Winner::Sphere => "sphere".into(),
                        Winner::Torus => "torus".into(),
                    },
                ]
            })
            .collect();
        write_csv(out, &cfg, &["volume", "sphere_area", "torus_area", "winner"], &rows)?;
        return Ok(true);
    }
    Err(Failure::Usage("isoper needs one of --volume, --scan, --table".into()))
}

#[derive(Serialize)]
struct HolonomyReport {
    kappa: f64,
    curve: String,
    vertical_displacement: f64,
    enclosed_area: f64,
    twice_area: f64,
    error: f64,
}

#[allow(clippy::too_many_arguments)]
fn cmd_holonomy(
    kappa: f64,
    curve: Curve,
    radius: f64,
    center: &str,
    amp: f64,
    lobes: u32,
    steps: usize,
    tol: f64,
    out: &Path,
) -> Outcome {
    let mut cfg = RunConfig::new("holonomy")
        .param("curve", format!("{curve:?}").to_lowercase())
        .param("radius", radius)
        .param("center", center)
        .param("steps", steps);
    cfg.kappa = Some(kappa);
    cfg.tolerances.insert("holonomy".into(), tol);
    cfg.outputs.push(out.display().to_string());
    let space = make_space(kappa)?;
    if !(radius > 0.0) {
        return Err(Failure::Usage("--radius must be positive".into()));
    }
    let (displacement, area) = match (space.model, curve) {
        (Model::Sphere3, Curve::Cap) => {
            let (a, b) = pair::<f64>(center, "center")?;
            let axis = V3::new(a, b, 1.0);
            let cap = SphereCap::new(axis, radius);
            let start = hopf_preimage(&cap.point(0.0));
            let lift = horizontal_lift(&space, &cap, &start, steps)?;
            (lift.vertical_displacement.abs(), cap.enclosed_area(&space))
        }
        (Model::Sphere3, _) => return Err(Failure::Usage("kappa > 0 needs --curve cap".into())),
        (_, Curve::Cap) => return Err(Failure::Usage("--curve cap needs kappa > 0".into())),
        (_, c) => {
            let (cx, cy) = pair::<f64>(center, "center")?;
            let (amp, k) = match c {
                Curve::Star => (amp, lobes as f64),
                _ => (0.0, 0.0),
            };
            cfg.params.insert("amp".into(), amp.to_string());
            cfg.params.insert("lobes".into(), lobes.to_string());
            let star = ChartStar { center: (cx, cy), r0: radius, amp, k, phase: 0.0, clockwise: true };
            let reach = (cx * cx + cy * cy).sqrt() + radius * (1.0 + amp.abs());
            if space.model == Model::Hyperbolic && reach >= 1.0 {
                return Err(Failure::Usage("curve leaves the unit disk".into()));
            }
            let p0 = star.point(0.0);
            let lift = horizontal_lift(&space, &star, &V4::new(p0[0], p0[1], 0.0, 0.0), steps)?;
            (lift.vertical_displacement, star.enclosed_area(&space))
        }
    };
    let report = HolonomyReport {
        kappa,
        curve: format!("{curve:?}").to_lowercase(),
        vertical_displacement: displacement,
        enclosed_area: area,
        twice_area: 2.0 * area,
        error: (displacement - 2.0 * area).abs(),
    };
    write_report(out, &cfg, &report)?;
    Ok(report.error < tol)
}

fn run(cli: Cli) -> Outcome {
    match cli.cmd {
        Cmd::Trace { kappa, lambda, theta, smax, step, out } => cmd_trace(kappa, lambda, theta, smax, step, &out),
        Cmd::Sphere { kappa, lambda, n_theta, n_s, focus_tol, mesh, out } => {
            cmd_sphere(kappa, lambda, n_theta, n_s, focus_tol, mesh.as_deref(), &out)
        }
        Cmd::Stability { mode, kappa, lambda, trials, seed, truncation, variation, profile, h, fd_tol, out } => {
            cmd_stability(mode, kappa, lambda, trials, seed, &truncation, variation, profile, h, fd_tol, &out)
        }
        Cmd::Isoper { volume, scan, table, resolution, vmin, vmax, n, out } => {
            cmd_isoper(volume, scan, table, resolution, vmin, vmax, n, &out)
        }
        Cmd::Holonomy { kappa, curve, radius, center, amp, lobes, steps, tol, out } => {
            cmd_holonomy(kappa, curve, radius, &center, amp, lobes, steps, tol, &out)
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(Failure::Usage(m)) => {
            eprintln!("error: {m}");
            ExitCode::from(2)
        }
        Err(Failure::Runtime(m)) => {
            eprintln!("error: {m}");
            ExitCode::from(3)
        }
    }
}
