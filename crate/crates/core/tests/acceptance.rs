use std::f64::consts::PI;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::process::ExitCode;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use cmc_core::geodesics::{
    cut_length, horizontal_lift, shoot_at, ChartCircle, ChartStar, PlanarCurve, SphereCap, DEFAULT_STEP,
};
use cmc_core::isoperimetry::{compare_at_volume, scan_interval, sphere_profile, Winner};
use cmc_core::jacobi::{adapted_to_coords, flow_variation_fd, from_point_adapted, from_point_field, jacobi_ode_integrate};
use cmc_core::quad::{adaptive_simpson, GaussLegendre};
use cmc_core::spheres::{
    area, build_sphere, enclosed_volume, frame_at_node, hyperbolic_meridian_error, hyperbolic_profile,
    mean_curvature_numeric, volume_qmc, SphereProfile,
};
use cmc_core::stability::{
    constant_fn, constrained_sequence, fourier_sequence_functional, general_second_variation, index_form,
    index_form_direct, induction_sum, meanzero_scan, normal_vertical_fn, partial_functional, radial_times_nt,
    random_scan, second_variation_fd, Constraint, SphereFn, SphereParams, TestFunction, Variation, Verdict,
};
use cmc_core::space_forms::hopf_preimage;
use cmc_core::{make_space, Model, SpaceForm, V3, V4};

type Check = fn() -> Result<String, String>;

fn ensure(ok: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if ok {
        Ok(())
    } else {
        Err(msg())
    }
}

fn e2s<E: std::fmt::Display>(e: E) -> String {
    e.to_string()
}

const FOCUS_PAIRS: [(f64, f64); 4] = [(1.0, 0.0), (0.0, 1.0), (2.0, -1.0), (0.5, 0.5)];
const SPHERE_PAIRS: [(f64, f64); 3] = [(1.0, 0.0), (0.0, 1.0), (2.0, -1.0)];

fn focusing() -> Result<String, String> {
    let mut worst: f64 = 0.0;
    for (l, k) in FOCUS_PAIRS {
        let s = make_space(k).map_err(e2s)?;
        let sp = build_sphere(&s, &s.origin(), l, 16, 9).map_err(e2s)?;
        let expect = PI / (l * l + k).sqrt();
        ensure((sp.length - expect).abs() < 1e-14, || format!("length {} vs {expect}", sp.length))?;
        ensure(sp.pole_spread < 1e-6, || format!("(l,k)=({l},{k}) spread {:e}", sp.pole_spread))?;
        worst = worst.max(sp.pole_spread);
    }
    Ok(format!("max endpoint spread {worst:.2e}"))
}

fn jacobi_triple() -> Result<String, String> {
    let mut worst: f64 = 0.0;
    for (l, k) in FOCUS_PAIRS {
        let s = make_space(k).map_err(e2s)?;
        let p = s.origin();
        let len = cut_length(l, k).map_err(e2s)?;
        let grid: Vec<f64> = (0..=40).map(|i| len * i as f64 / 40.0).collect();
        let th = 0.7;
        let path = shoot_at(&s, &p, th, l, &grid, DEFAULT_STEP).map_err(e2s)?;
        let closed = from_point_field(&s, &path, l);
        let ode = jacobi_ode_integrate(l, k, from_point_adapted(l, k, 0.0), &grid, 1e-3);
        let fd = flow_variation_fd(&s, &p, th, l, &grid, 1e-4, DEFAULT_STEP).map_err(e2s)?;
        for i in 0..grid.len() {
            let q = path.pos[i];
            let o = adapted_to_coords(&s, &q, &path.vel[i], &ode[i].f);
            let a = s.norm(&q, &(closed[i] - o));
            let b = s.norm(&q, &(closed[i] - fd[i]));
            worst = worst.max(a).max(b);
            ensure(a < 1e-5 && b < 1e-5, || format!("(l,k)=({l},{k}) s={:.3}: ode {a:e} fd {b:e}", grid[i]))?;
        }
    }
    Ok(format!("max disagreement {worst:.2e}"))
}

fn random_point(space: &SpaceForm, rng: &mut ChaCha8Rng) -> V4 {
    match space.model {
        Model::Sphere3 => {
            V4::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0))
                .normalize()
        }
        Model::Heisenberg => V4::new(rng.gen_range(-3.0..3.0), rng.gen_range(-3.0..3.0), rng.gen_range(-3.0..3.0), 0.0),
        Model::Hyperbolic => {
            let r = 0.95 * rng.gen::<f64>().sqrt();
            let a = rng.gen_range(0.0..2.0 * PI);
            V4::new(r * a.cos(), r * a.sin(), rng.gen_range(-3.0..3.0), 0.0)
        }
    }
}

fn random_v3(rng: &mut ChaCha8Rng) -> V3 {
    V3::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0))
}

fn identities() -> Result<String, String> {
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let mut worst: f64 = 0.0;
    let mut worst_k: f64 = 0.0;
    for k in [1.0, 0.0, -1.0, 4.0, -0.25] {
        let s = make_space(k).map_err(e2s)?;
        for _ in 0..1000 {
            let p = random_point(&s, &mut rng);
            let (u, v) = (random_v3(&mut rng), random_v3(&mut rng));
            let r = s.sasakian_identity_residuals(&p, &u, &v);
            let m = r.iter().copied().fold(0.0, f64::max);
            ensure(m < 1e-9, || format!("kappa {k} at {p:?}: {r:?}"))?;
            worst = worst.max(m);
            let wk = (s.webster_curvature(&p) - k).abs();
            ensure(wk < 1e-6, || format!("kappa {k}: Webster off by {wk:e}"))?;
            worst_k = worst_k.max(wk);
        }
    }
    Ok(format!("max identity residual {worst:.2e}, Webster error {worst_k:.2e}"))
}

/// Area of the region bounded by a star curve, by polar quadrature of the
/// conformal density `1 / (1 + c |z|^2)^2`.
fn chart_area(star: &ChartStar, c: f64) -> f64 {
    let gt = GaussLegendre::new(96);
    let gr = GaussLegendre::new(48);
    gt.integrate(0.0, 2.0 * PI, |t| {
        let rt = star.radius(t);
        gr.integrate(0.0, rt, |r| {
            let x = star.center.0 + r * t.cos();
            let y = star.center.1 + r * t.sin();
            r / (1.0 + c * (x * x + y * y)).powi(2)
        })
    })
}

fn holonomy() -> Result<String, String> {
    let mut worst: f64 = 0.0;
    for k in [-1.0, 0.0] {
        let s = make_space(k).map_err(e2s)?;
        let stars = [
            ChartStar { center: (0.1, -0.05), r0: 0.4, amp: 0.0, k: 0.0, phase: 0.0, clockwise: true },
            ChartStar { center: (-0.1, 0.2), r0: 0.35, amp: 0.3, k: 5.0, phase: 0.4, clockwise: true },
        ];
        for st in stars {
            let start = st.point(0.0);
            let start = V4::new(start[0], start[1], 0.3, 0.0);
            let lift = horizontal_lift(&s, &st, &start, 4000).map_err(e2s)?;
            let a = chart_area(&st, k);
            let e = (lift.vertical_displacement - 2.0 * a).abs();
            ensure(e < 1e-6, || format!("kappa {k}: lift {} vs 2A {}", lift.vertical_displacement, 2.0 * a))?;
            worst = worst.max(e);
        }
        let circle = ChartCircle { center: (0.0, 0.0), radius: 0.5, clockwise: true };
        let start = V4::new(0.5, 0.0, 0.0, 0.0);
        let lift = horizontal_lift(&s, &circle, &start, 4000).map_err(e2s)?;
        let a = PI * 0.25 / (1.0 + k * 0.25);
        let e = (lift.vertical_displacement - 2.0 * a).abs();
        ensure(e < 1e-6, || format!("kappa {k} circle: {} vs {}", lift.vertical_displacement, 2.0 * a))?;
        worst = worst.max(e);
    }
    let s = make_space(1.0).map_err(e2s)?;
    for alpha in [0.3, 0.9] {
        let cap = SphereCap::new(V3::new(0.2, -0.4, 0.9), alpha);
        let target = cap.point(0.0);
        let start = hopf_preimage(&target);
        let lift = horizontal_lift(&s, &cap, &start, 4000).map_err(e2s)?;
        // Cap area in the base of curvature 4 (radius 1/2).
        let a = 0.25 * 2.0 * PI * (1.0 - alpha.cos());
        let e = (lift.vertical_displacement.abs() - 2.0 * a).abs();
        ensure(e < 1e-6, || format!("cap {alpha}: {} vs {}", lift.vertical_displacement, 2.0 * a))?;
        worst = worst.max(e);
    }
    Ok(format!("max |displacement - 2A| {worst:.2e}"))
}

fn area_volume() -> Result<String, String> {
    let s = make_space(0.0).map_err(e2s)?;
    let mut msg = Vec::new();
    for l in [0.75, 1.0, 2.0] {
        let sp = build_sphere(&s, &s.origin(), l, 32, 33).map_err(e2s)?;
        let a = area(&sp);
        let v = enclosed_volume(&sp).map_err(e2s)?;
        let (ea, ev) = (PI * PI / l.powi(3), 3.0 * PI * PI / (8.0 * l.powi(4)));
        ensure((a - ea).abs() < 1e-6 * ea, || format!("lambda {l}: area {a} vs {ea}"))?;
        ensure((v - ev).abs() < 1e-4 * ev, || format!("lambda {l}: volume {v} vs {ev}"))?;
        msg.push(format!("l={l}: dA {:.1e} dV {:.1e}", (a - ea).abs() / ea, (v - ev).abs() / ev));
    }
    for (l, k) in [(0.0, 1.0), (0.5, 0.5), (2.0, -1.0), (0.3, 2.0)] {
        let sk = make_space(k).map_err(e2s)?;
        let sp = build_sphere(&sk, &sk.origin(), l, 16, 17).map_err(e2s)?;
        let tau = (l * l + k).sqrt();
        let closed = PI * PI / tau.powi(3);
        let oracle = 2.0
            * PI
            * adaptive_simpson(
                &|x: f64| {
                    let p = SphereProfile::new(l, tau, x);
                    p.nh * p.density
                },
                0.0,
                PI / tau,
                1e-12,
            );
        let a = area(&sp);
        ensure((oracle - closed).abs() < 1e-6 * closed, || format!("oracle {oracle} vs {closed}"))?;
        ensure((a - closed).abs() < 1e-6 * closed, || format!("(l,k)=({l},{k}) area {a} vs {closed}"))?;
    }
    let s1 = make_space(1.0).map_err(e2s)?;
    let sp = build_sphere(&s1, &s1.origin(), 0.6, 16, 17).map_err(e2s)?;
    let (a, b) = (enclosed_volume(&sp).map_err(e2s)?, volume_qmc(&sp, 1 << 20, 2048).map_err(e2s)?);
    ensure((a - b).abs() < 1e-3 * a, || format!("kappa 1 volume methods {a} vs {b}"))?;
    msg.push(format!("kappa=1 volume {a:.6} / {b:.6}"));
    Ok(msg.join("; "))
}

fn mean_curvature() -> Result<String, String> {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let mut worst: f64 = 0.0;
    for (l, k) in SPHERE_PAIRS {
        let s = make_space(k).map_err(e2s)?;
        let sp = build_sphere(&s, &s.origin(), l, 16, 17).map_err(e2s)?;
        for _ in 0..100 {
            let th = rng.gen_range(0.0..2.0 * PI);
            let x = rng.gen_range(0.06..0.94) * sp.length;
            let h = mean_curvature_numeric(&sp, th, x).map_err(e2s)?;
            ensure((h - l).abs() < 1e-4, || format!("(l,k)=({l},{k}) at ({th:.3},{x:.3}): H={h}"))?;
            worst = worst.max((h - l).abs());
        }
    }
    Ok(format!("max |H - lambda| {worst:.2e}"))
}

fn potential_identity() -> Result<String, String> {
    let mut worst: f64 = 0.0;
    for (l, k) in FOCUS_PAIRS {
        let s = make_space(k).map_err(e2s)?;
        let sp = build_sphere(&s, &s.origin(), l, 16, 33).map_err(e2s)?;
        let t2 = sp.tau * sp.tau;
        for i in 0..sp.n_theta {
            for j in 1..sp.n_s - 1 {
                let f = frame_at_node(&sp, i, j);
                let lhs = f.bzz.powi(2) + (f.bzs + 1.0).powi(2) + 4.0 * (k - 1.0) * f.nh * f.nh;
                let rhs = (1.0 + (t2 - 1.0) * f.nh * f.nh).powi(2);
                worst = worst.max((lhs - rhs).abs());
            }
        }
    }
    ensure(worst < 1e-10, || format!("residual {worst:e}"))?;
    Ok(format!("max residual {worst:.2e}"))
}

fn params_for(pairs: &[(f64, f64)]) -> Result<Vec<SphereParams>, String> {
    pairs.iter().map(|&(l, k)| SphereParams::new(l, k).map_err(e2s)).collect()
}

fn index_consistency() -> Result<String, String> {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let params = params_for(&[(1.0, 0.0), (0.4, 1.0), (2.0, -1.0)])?;
    let mut worst: f64 = 0.0;
    for k in 0..20 {
        let p = params[k % 3];
        let mut f = TestFunction::random(rng.gen_range(1..7), rng.gen_range(1..7), &mut rng);
        f.enforce(Constraint::None);
        let u = f.lift(p);
        let a = index_form(&p, &u, &u);
        let b = index_form_direct(&p, &u, &u);
        let e = (a - b).abs() / a.abs().max(1.0);
        ensure(e < 1e-8, || format!("function {k}: polar {a} direct {b}"))?;
        worst = worst.max(e);
    }
    Ok(format!("max relative gap {worst:.2e}"))
}

fn distinguished_values() -> Result<String, String> {
    let mut worst = (0.0f64, 0.0f64);
    for (l, k) in [(1.0, 0.0), (0.0, 1.0), (2.0, -1.0)] {
        let p = SphereParams::new(l, k).map_err(e2s)?;
        let one = constant_fn(1.0);
        let i1 = index_form(&p, &one, &one);
        let nt = normal_vertical_fn(p);
        let i2 = index_form(&p, &nt, &nt);
        ensure((i1 + 2.0 * PI * PI).abs() < 1e-8, || format!("I(1,1) = {i1}"))?;
        ensure(i2.abs() < 1e-9, || format!("I(<N,T>,<N,T>) = {i2}"))?;
        worst = (worst.0.max((i1 + 2.0 * PI * PI).abs()), worst.1.max(i2.abs()));
    }
    Ok(format!("|I(1,1)+2pi^2| {:.2e}, |I(nt,nt)| {:.2e}", worst.0, worst.1))
}

fn strong_stability() -> Result<String, String> {
    let p = SphereParams::new(1.0, 0.0).map_err(e2s)?;
    let a = random_scan(&p, Constraint::Poles, 500, (8, 8), 1).map_err(e2s)?;
    let b = random_scan(&p, Constraint::Equator, 500, (8, 8), 2).map_err(e2s)?;
    ensure(a.verdict == Verdict::Pass, || format!("poles min {}", a.value))?;
    ensure(b.verdict == Verdict::Pass, || format!("equator min {}", b.value))?;
    Ok(format!("min normalized I: poles {:.3e}, equator {:.3e}", a.value, b.value))
}

fn volume_constrained() -> Result<String, String> {
    let p = SphereParams::new(1.0, 0.0).map_err(e2s)?;
    let a = meanzero_scan(&p, 1000, (8, 8), 42).map_err(e2s)?;
    let b = meanzero_scan(&p, 1000, (8, 8), 42).map_err(e2s)?;
    ensure(a.values == b.values, || "scan is not seed-deterministic".into())?;
    ensure(a.verdict == Verdict::Pass, || format!("min {}", a.value))?;
    Ok(format!("min normalized I {:.3e} over {} trials", a.value, a.trials))
}

fn fourier_functional() -> Result<String, String> {
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    let mut min = f64::INFINITY;
    let mut worst: f64 = 0.0;
    for _ in 0..10_000 {
        let tail: Vec<f64> = (0..49).map(|_| rng.gen_range(-1.0..1.0) / (1.0 + rng.gen_range(0.0..3.0))).collect();
        let x = constrained_sequence(&tail);
        let f = fourier_sequence_functional(&x).map_err(e2s)?;
        ensure(f >= -1e-12, || format!("functional {f}"))?;
        min = min.min(f);
        for n in 1..x.len() {
            let (a, b) = (partial_functional(&x, n), induction_sum(&x, n));
            worst = worst.max((a - b).abs() / a.abs().max(1.0));
        }
    }
    ensure(worst < 1e-10, || format!("induction identity off by {worst:e}"))?;
    Ok(format!("min functional {min:.3e}, identity gap {worst:.2e}"))
}

fn second_variation_oracle() -> Result<String, String> {
    let mut msg = Vec::new();
    let p = SphereParams::new(1.0, 0.0).map_err(e2s)?;
    let sv = second_variation_fd(&p, Variation::Parallel, 1e-2).map_err(e2s)?;
    let one = constant_fn(1.0);
    let q = index_form(&p, &one, &one);
    let e = (sv.value - q).abs() / q.abs();
    ensure(e < 1e-3, || format!("parallel fd {} vs {q}", sv.value))?;
    msg.push(format!("parallel {e:.1e}"));
    let tau = p.tau;
    let g1 = move |s: f64| ((2.0 * tau * s).cos(), -2.0 * tau * (2.0 * tau * s).sin());
    let g2 = move |s: f64| ((tau * s).sin().powi(2), tau * (2.0 * tau * s).sin());
    let g3 = move |s: f64| {
        let x = tau * s;
        ((4.0 * x).cos() + 0.5 * (2.0 * x).cos(), -tau * (4.0 * (4.0 * x).sin() + (2.0 * x).sin()))
    };
    let gs: [&(dyn Fn(f64) -> (f64, f64) + Sync); 3] = [&g1, &g2, &g3];
    for (k, g) in gs.into_iter().enumerate() {
        let sv = second_variation_fd(&p, Variation::Vertical(g), 1e-2).map_err(e2s)?;
        let u = radial_times_nt(p, g);
        let q = index_form(&p, &u, &u);
        let e = (sv.value - q).abs() / q.abs();
        ensure(e < 1e-3, || format!("vertical {k}: fd {} vs {q}", sv.value))?;
        msg.push(format!("vertical{} {e:.1e}", k + 1));
    }
    Ok(msg.join(", "))
}

fn divergence_terms() -> Result<String, String> {
    let mut rng = ChaCha8Rng::seed_from_u64(14);
    let params = params_for(&[(1.0, 0.0), (0.5, 0.5), (2.0, -1.0)])?;
    let mut worst: f64 = 0.0;
    for k in 0..10 {
        let p = params[k % 3];
        let mut fs: Vec<TestFunction> = (0..4).map(|_| TestFunction::random(4, 4, &mut rng)).collect();
        for f in &mut fs {
            f.enforce(Constraint::Poles);
        }
        let u = fs[0].lift(p);
        let w = fs[1].lift(p);
        let wz = fs[2].lift(p);
        let ws = fs[3].lift(p);
        let g = general_second_variation(&p, &u, &w, Some((&wz as &dyn SphereFn, &ws as &dyn SphereFn)));
        let m = g.div_z.abs().max(g.div_s.abs()).max(g.div_w.abs());
        ensure(m < 1e-6, || format!("u #{k}: {g:?}"))?;
        let i = index_form(&p, &u, &u);
        ensure((g.total - i).abs() < 1e-6 * i.abs().max(1.0), || format!("u #{k}: total {} vs I {i}", g.total))?;
        worst = worst.max(m);
    }
    Ok(format!("max |divergence integral| {worst:.2e}"))
}

fn isoperimetric() -> Result<String, String> {
    let r = scan_interval(10_000).map_err(e2s)?;
    let (lo, hi) = (27.0 * PI * PI / 8.0, 6.0 * PI * PI);
    ensure((r.v_low - lo).abs() < 1e-6, || format!("v_low {}", r.v_low))?;
    ensure((r.v_high - hi).abs() < 1e-6, || format!("v_high {}", r.v_high))?;
    let c = compare_at_volume(4.0 * PI * PI).map_err(e2s)?;
    ensure(c.winner == Winner::Torus, || "4 pi^2 should favour the torus".into())?;
    let s = make_space(0.0).map_err(e2s)?;
    for l in [0.75, 1.0, 2.0, 4.0] {
        let prof = sphere_profile(l).map_err(e2s)?;
        let sp = build_sphere(&s, &s.origin(), l, 16, 17).map_err(e2s)?;
        let (a, v) = (area(&sp), enclosed_volume(&sp).map_err(e2s)?);
        ensure((a - prof.area).abs() < 1e-6 * prof.area, || format!("lambda {l}: area {a}"))?;
        ensure((v - prof.volume).abs() < 1e-6 * prof.volume, || format!("lambda {l}: volume {v}"))?;
    }
    Ok(format!(
        "v_low = {:.10} (27pi^2/8 = {lo:.10}), v_high = {:.10} (6pi^2, end of sphere family)",
        r.v_low, r.v_high
    ))
}

fn hyperbolic() -> Result<String, String> {
    let l = 2.0;
    let f = hyperbolic_profile(l, 1.0 / l).map_err(e2s)?;
    ensure(f.abs() < 1e-12, || format!("f(1/lambda) = {f:e}"))?;
    let mut worst: f64 = 0.0;
    for th in [0.0, 1.3, 4.0] {
        worst = worst.max(hyperbolic_meridian_error(l, th, 64).map_err(e2s)?);
    }
    ensure(worst < 1e-5, || format!("meridian gap {worst:e}"))?;
    Ok(format!("f(1/lambda) = {f:.1e}, meridian gap {worst:.2e}"))
}

fn main() -> ExitCode {
    let checks: [(&str, Check); 16] = [
        ("cut-point focusing", focusing),
        ("Jacobi triple agreement", jacobi_triple),
        ("Sasakian identity suite", identities),
        ("holonomy", holonomy),
        ("sphere area and volume", area_volume),
        ("mean curvature", mean_curvature),
        ("potential identity", potential_identity),
        ("index-form consistency", index_consistency),
        ("distinguished values", distinguished_values),
        ("strong stability", strong_stability),
        ("volume-constrained stability", volume_constrained),
        ("Fourier sequence functional", fourier_functional),
        ("second-variation oracle", second_variation_oracle),
        ("divergence-term vanishing", divergence_terms),
        ("isoperimetric crossings", isoperimetric),
        ("hyperbolic profile", hyperbolic),
    ];
    let start = Instant::now();
    let mut failed = 0;
    for (k, (name, f)) in checks.iter().enumerate() {
        let t = Instant::now();
        let out = catch_unwind(AssertUnwindSafe(f)).unwrap_or_else(|_| Err("panicked".into()));
        let dt = t.elapsed().as_secs_f64();
        match out {
            Ok(msg) => println!("PASS {:>2} {name} ({dt:.1}s): {msg}", k + 1),
            Err(msg) => {
                failed += 1;
                println!("FAIL {:>2} {name} ({dt:.1}s): {msg}", k + 1);
            }
        }
    }
    println!(
        "acceptance: {} passed, {failed} failed in {:.1}s",
        checks.len() - failed,
        start.elapsed().as_secs_f64()
    );
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
