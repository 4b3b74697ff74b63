//! The CMC sphere `S_lambda(p)`: union of the CC-geodesics of curvature
//! lambda leaving `p` up to their first cut point.

use std::f64::consts::PI;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{GeomError, Result};
use crate::geodesics::{integrate_to, shoot_at, GeodesicPath, DEFAULT_STEP};
use crate::jacobi::from_point_profile;
use crate::quad::{halton2, GaussLegendre};
use crate::space_forms::{conn_apply, Model, SpaceForm, V3, V4};

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Sphere {
    pub space: SpaceForm,
    pub base: V4,
    pub lambda: f64,
    pub tau: f64,
    pub length: f64,
    pub n_theta: usize,
    pub n_s: usize,
    pub thetas: Vec<f64>,
    pub svals: Vec<f64>,
    /// Row-major in theta: index `i * n_s + j`.
    pub points: Vec<V4>,
    pub velocities: Vec<V4>,
    pub pole_spread: f64,
}

fn tau_of(lambda: f64, kappa: f64) -> Result<f64> {
    let t2 = lambda * lambda + kappa;
    if t2 > 0.0 {
        Ok(t2.sqrt())
    } else {
        Err(GeomError::NoCutPoint(t2))
    }
}

fn check_lambda(lambda: f64) -> Result<()> {
    if lambda.is_finite() && lambda >= 0.0 {
        Ok(())
    } else {
        Err(GeomError::InvalidArgument(format!("lambda must be finite and non-negative, got {lambda}")))
    }
}

fn max_pairwise(pts: &[V4]) -> f64 {
    let mut m: f64 = 0.0;
    for (i, a) in pts.iter().enumerate() {
        for b in &pts[i + 1..] {
            m = m.max((a - b).norm());
        }
    }
    m
}

pub fn build_sphere(space: &SpaceForm, p: &V4, lambda: f64, n_theta: usize, n_s: usize) -> Result<Sphere> {
    check_lambda(lambda)?;
    space.check_point(p)?;
    if n_theta < 8 || n_s < 8 {
        return Err(GeomError::InvalidArgument("grid needs n_theta >= 8 and n_s >= 8".into()));
    }
    let tau = tau_of(lambda, space.kappa)?;
    let length = PI / tau;
    let thetas: Vec<f64> = (0..n_theta).map(|i| 2.0 * PI * i as f64 / n_theta as f64).collect();
    let svals: Vec<f64> = (0..n_s).map(|j| length * j as f64 / (n_s - 1) as f64).collect();
    let rays: Vec<GeodesicPath> = thetas
        .par_iter()
        .map(|&th| shoot_at(space, p, th, lambda, &svals, DEFAULT_STEP))
        .collect::<Result<_>>()?;
    let mut points = Vec::with_capacity(n_theta * n_s);
    let mut velocities = Vec::with_capacity(n_theta * n_s);
    for r in &rays {
        points.extend_from_slice(&r.pos);
        velocities.extend_from_slice(&r.vel);
    }
    let north: Vec<V4> = rays.iter().map(|r| r.pos[n_s - 1]).collect();
    Ok(Sphere {
        space: *space,
        base: *p,
        lambda,
        tau,
        length,
        n_theta,
        n_s,
        thetas,
        svals,
        points,
        velocities,
        pole_spread: max_pairwise(&north),
    })
}

impl Sphere {
    pub fn point(&self, i: usize, j: usize) -> V4 {
        self.points[i * self.n_s + j]
    }

    pub fn velocity(&self, i: usize, j: usize) -> V4 {
        self.velocities[i * self.n_s + j]
    }

    pub fn north_pole(&self) -> V4 {
        self.point(0, self.n_s - 1)
    }

    pub fn ray(&self, theta: f64, targets: &[f64]) -> Result<GeodesicPath> {
        shoot_at(&self.space, &self.base, theta, self.lambda, targets, DEFAULT_STEP)
    }

    pub fn profile(&self, s: f64) -> SphereProfile {
        SphereProfile::new(self.lambda, self.tau, s)
    }
}

/// Closed-form quantities of the sphere at meridian arclength `s`.
#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct SphereProfile {
    pub s: f64,
    pub nh: f64,
    pub nt: f64,
    pub bzz: f64,
    pub bzs: f64,
    pub bss: f64,
    /// `1 + (tau^2 - 1) cos^2(tau s)`
    pub d: f64,
    /// Area density `dS / (dtheta ds) = sqrt(v^2 + v'^2 / 4)`.
    pub density: f64,
    pub dnh: f64,
    pub dnt: f64,
    pub dbzs: f64,
}

impl SphereProfile {
    pub fn new(lambda: f64, tau: f64, s: f64) -> Self {
        let (sn, cs) = (tau * s).sin_cos();
        let t2 = tau * tau;
        let d = 1.0 + (t2 - 1.0) * cs * cs;
        let sd = d.sqrt();
        let dd = -2.0 * tau * (t2 - 1.0) * cs * sn;
        let nh = sn / sd;
        let nt = tau * cs / sd;
        let dnh = tau * cs / sd - sn * dd / (2.0 * d * sd);
        let dnt = -t2 * sn / sd - tau * cs * dd / (2.0 * d * sd);
        let bzs = (1.0 - t2) * nh * nh;
        Self {
            s,
            nh,
            nt,
            bzz: 2.0 * lambda * nh,
            bzs,
            bss: lambda * t2 * nh / d,
            d,
            density: sn * sd / t2,
            dnh,
            dnt,
            dbzs: 2.0 * (1.0 - t2) * nh * dnh,
        }
    }
}

/// Unit normal `N`, horizontal normal `nu_h`, and the tangent pair `(Z, S)`.
#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct SurfaceFrame {
    pub point: V4,
    pub n: V4,
    pub nu_h: V4,
    pub z: V4,
    pub s_vec: V4,
    pub nh: f64,
    pub nt: f64,
    pub bzz: f64,
    pub bzs: f64,
    pub bss: f64,
}

fn frame_from_state(space: &SpaceForm, p: &V4, vel: &V4, pr: &SphereProfile) -> SurfaceFrame {
    let jg = space.j(p, vel);
    let t = space.reeb(p);
    let nu_h = -jg;
    SurfaceFrame {
        point: *p,
        n: nu_h * pr.nh + t * pr.nt,
        nu_h,
        z: *vel,
        s_vec: nu_h * pr.nt - t * pr.nh,
        nh: pr.nh,
        nt: pr.nt,
        bzz: pr.bzz,
        bzs: pr.bzs,
        bss: pr.bss,
    }
}

pub fn frame_closed_form(sphere: &Sphere, theta: f64, s: f64) -> Result<SurfaceFrame> {
    if !(0.0..=sphere.length).contains(&s) {
        return Err(GeomError::InvalidArgument(format!("s = {s} outside [0, {}]", sphere.length)));
    }
    let r = sphere.ray(theta, &[s])?;
    Ok(frame_from_state(&sphere.space, &r.pos[0], &r.vel[0], &sphere.profile(s)))
}

/// Closed-form frame at grid node `(i, j)`.
pub fn frame_at_node(sphere: &Sphere, i: usize, j: usize) -> SurfaceFrame {
    frame_from_state(&sphere.space, &sphere.point(i, j), &sphere.velocity(i, j), &sphere.profile(sphere.svals[j]))
}

pub fn area_closed_form(lambda: f64, kappa: f64) -> Result<f64> {
    Ok(PI * PI / tau_of(lambda, kappa)?.powi(3))
}

/// Area by Gauss-Legendre quadrature of `|N_h| dS`.
pub fn area(sphere: &Sphere) -> f64 {
    let gl = GaussLegendre::new(64);
    2.0 * PI
        * gl.integrate(0.0, sphere.length, |s| {
            let p = sphere.profile(s);
            p.nh * p.density
        })
}

/// Area computed from shot tangent vectors only: `|N_h|` and the area element
/// come from finite differences across neighbouring rays.
pub fn area_from_geometry(sphere: &Sphere, n_theta: usize, n_s: usize, h: f64) -> Result<f64> {
    let gl = GaussLegendre::new(n_s);
    let nodes = gl.on(0.0, sphere.length);
    let targets: Vec<f64> = nodes.iter().map(|x| x.0).collect();
    let space = &sphere.space;
    let total: Vec<f64> = (0..n_theta)
        .into_par_iter()
        .map(|i| {
            let th = 2.0 * PI * (i as f64 + 0.5) / n_theta as f64;
            let c = sphere.ray(th, &targets)?;
            let a = sphere.ray(th + h, &targets)?;
            let b = sphere.ray(th - h, &targets)?;
            let mut acc = 0.0;
            for (k, (_, w)) in nodes.iter().enumerate() {
                let p = c.pos[k];
                let ft = space.project(&p, &((a.pos[k] - b.pos[k]) / (2.0 * h)));
                let cs = space.to_frame(&p, &c.vel[k]);
                let ct = space.to_frame(&p, &ft);
                let cross = cs.cross(&ct);
                let dens = cross.norm();
                let nh = (cross[0].powi(2) + cross[1].powi(2)).sqrt() / dens;
                acc += w * nh * dens;
            }
            Ok(acc)
        })
        .collect::<Result<_>>()?;
    Ok(total.iter().sum::<f64>() * 2.0 * PI / n_theta as f64)
}

/// Enclosed volume. Chart models use the flux of `t d/dt`; the sphere model
/// uses the meridian profile in the `z1` disk and Green's formula.
pub fn enclosed_volume(sphere: &Sphere) -> Result<f64> {
    match sphere.space.model {
        Model::Sphere3 => volume_by_profile(sphere),
        _ => volume_by_flux(sphere),
    }
}

fn volume_by_flux(sphere: &Sphere) -> Result<f64> {
    let gl = GaussLegendre::new(64);
    let nodes = gl.on(0.0, sphere.length);
    let targets: Vec<f64> = nodes.iter().map(|x| x.0).collect();
    let n_theta = 16;
    let e2 = sphere.space.eps * sphere.space.eps;
    let tp = sphere.base[2];
    let parts: Vec<f64> = (0..n_theta)
        .into_par_iter()
        .map(|i| {
            let th = 2.0 * PI * i as f64 / n_theta as f64;
            let r = sphere.ray(th, &targets)?;
            Ok(nodes
                .iter()
                .enumerate()
                .map(|(k, &(s, w))| {
                    let pr = sphere.profile(s);
                    -w * (r.pos[k][2] - tp) * e2 * pr.nt * pr.density
                })
                .sum::<f64>())
        })
        .collect::<Result<_>>()?;
    Ok(parts.iter().sum::<f64>() * 2.0 * PI / n_theta as f64)
}

/// Meridian in the `z1` plane after moving the base point to `o`.
fn z1_meridian(sphere: &Sphere, targets: &[f64]) -> Result<(Vec<[f64; 2]>, Vec<[f64; 2]>)> {
    let m = sphere.space.to_origin(&sphere.base)?;
    let r = sphere.ray(0.0, targets)?;
    let pts = r.pos.iter().map(|p| {
        let q = m(p);
        [q[0], q[1]]
    });
    let zero = m(&V4::zeros());
    let vel = r.vel.iter().map(|v| {
        let q = m(v) - zero;
        [q[0], q[1]]
    });
    Ok((pts.collect(), vel.collect()))
}

fn pole_angle(z: &[f64; 2]) -> f64 {
    z[1].atan2(z[0]).rem_euclid(2.0 * PI)
}

fn volume_by_profile(sphere: &Sphere) -> Result<f64> {
    let gl = GaussLegendre::new(96);
    let nodes = gl.on(0.0, sphere.length);
    let mut targets: Vec<f64> = nodes.iter().map(|x| x.0).collect();
    targets.push(sphere.length);
    let (pts, vel) = z1_meridian(sphere, &targets)?;
    let mut a: f64 = nodes
        .iter()
        .enumerate()
        .map(|(k, &(_, w))| 0.5 * w * (pts[k][0] * vel[k][1] - pts[k][1] * vel[k][0]))
        .sum();
    a -= 0.5 * pole_angle(&pts[pts.len() - 1]);
    Ok(2.0 * PI * a.abs() * sphere.space.eps.powi(4))
}

/// Quasi-Monte Carlo volume for the sphere model: Halton points in the
/// bounding box of the `z1` disk, inside test against the meridian polygon.
pub fn volume_qmc(sphere: &Sphere, n_points: u64, n_vertices: usize) -> Result<f64> {
    if sphere.space.model != Model::Sphere3 {
        return Err(GeomError::InvalidArgument("QMC volume is implemented for the sphere model".into()));
    }
    let targets: Vec<f64> = (0..n_vertices).map(|k| sphere.length * k as f64 / (n_vertices - 1) as f64).collect();
    let (mut poly, _) = z1_meridian(sphere, &targets)?;
    let t_end = pole_angle(&poly[poly.len() - 1]);
    for k in 1..n_vertices {
        let a = t_end * (1.0 - k as f64 / n_vertices as f64);
        poly.push([a.cos(), a.sin()]);
    }
    let inside = (1..=n_points)
        .into_par_iter()
        .filter(|&i| {
            let (u, v) = halton2(i);
            point_in_polygon(2.0 * u - 1.0, 2.0 * v - 1.0, &poly)
        })
        .count();
    let area = 4.0 * inside as f64 / n_points as f64;
    Ok(2.0 * PI * area * sphere.space.eps.powi(4))
}

fn point_in_polygon(x: f64, y: f64, poly: &[[f64; 2]]) -> bool {
    let mut c = false;
    let n = poly.len();
    let mut j = n - 1;
    for i in 0..n {
        let (xi, yi) = (poly[i][0], poly[i][1]);
        let (xj, yj) = (poly[j][0], poly[j][1]);
        if (yi > y) != (yj > y) && x < (xj - xi) * (y - yi) / (yj - yi) + xi {
            c = !c;
        }
        j = i;
    }
    c
}

/// Normal data recovered from a five-ray finite-difference patch.
#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct NumericFrame {
    pub n: V3,
    pub nh: f64,
    pub nt: f64,
    pub bzz: f64,
    pub bzs: f64,
    pub bss: f64,
    pub mean_curvature: f64,
}

pub fn numeric_frame(sphere: &Sphere, theta: f64, s: f64, h: f64) -> Result<NumericFrame> {
    if s - 2.0 * h <= 0.0 || s + 2.0 * h >= sphere.length {
        return Err(GeomError::InvalidArgument(format!("s = {s} too close to a pole for step {h}")));
    }
    let space = &sphere.space;
    let targets: Vec<f64> = (-2..=2).map(|l| s + l as f64 * h).collect();
    let rays: Vec<GeodesicPath> = (-2..=2)
        .map(|k| sphere.ray(theta + k as f64 * h, &targets))
        .collect::<Result<_>>()?;
    let pos = |k: i32, l: i32| rays[(k + 2) as usize].pos[(l + 2) as usize];
    let vel = |k: i32, l: i32| rays[(k + 2) as usize].vel[(l + 2) as usize];
    let tangents = |k: i32, l: i32| {
        let p = pos(k, l);
        let ft = space.project(&p, &((pos(k + 1, l) - pos(k - 1, l)) / (2.0 * h)));
        (space.to_frame(&p, &ft), space.to_frame(&p, &vel(k, l)))
    };
    let normal = |k: i32, l: i32| {
        let (b, a) = tangents(k, l);
        a.cross(&b).normalize()
    };
    let horiz = |n: V3| V3::new(n[0], n[1], 0.0).normalize();

    let p0 = pos(0, 0);
    let g = space.frame_connection(&p0);
    let conn = |u: &V3, w: &V3| conn_apply(&g, u, w);
    let (b, a) = tangents(0, 0);
    let n0 = normal(0, 0);
    let nu0 = horiz(n0);
    let dn_t = (normal(1, 0) - normal(-1, 0)) / (2.0 * h) + conn(&b, &n0);
    let dn_s = (normal(0, 1) - normal(0, -1)) / (2.0 * h) + conn(&a, &n0);
    let dnu_t = (horiz(normal(1, 0)) - horiz(normal(-1, 0))) / (2.0 * h) + conn(&b, &nu0);
    let dnu_s = (horiz(normal(0, 1)) - horiz(normal(0, -1))) / (2.0 * h) + conn(&a, &nu0);

    let gram = nalgebra::Matrix2::new(b.dot(&b), b.dot(&a), a.dot(&b), a.dot(&a));
    let gi = gram.try_inverse().ok_or_else(|| GeomError::InvalidArgument("degenerate patch".into()))?;
    let d = [dnu_t, dnu_s];
    let e = [b, a];
    let mut div = 0.0;
    for i in 0..2 {
        for j in 0..2 {
            div += gi[(i, j)] * d[i].dot(&e[j]);
        }
    }
    let nt = n0[2];
    let nh = (n0[0].powi(2) + n0[1].powi(2)).sqrt();
    let s_vec = nu0 * nt - V3::new(0.0, 0.0, nh);
    let coef = gi * nalgebra::Vector2::new(s_vec.dot(&b), s_vec.dot(&a));
    let dn_sv = dn_t * coef[0] + dn_s * coef[1];
    Ok(NumericFrame {
        n: n0,
        nh,
        nt,
        bzz: -dn_s.dot(&a),
        bzs: -dn_s.dot(&s_vec),
        bss: -dn_sv.dot(&s_vec),
        mean_curvature: -0.5 * div,
    })
}

/// Mean curvature `H = -div(nu_h) / 2` by finite differences over shot rays.
pub fn mean_curvature_numeric(sphere: &Sphere, theta: f64, s: f64) -> Result<f64> {
    Ok(numeric_frame(sphere, theta, s, 1e-3)?.mean_curvature)
}

/// Profile `f` with `S_lambda = {t = +-f(|z|)}` in the hyperbolic model, up to
/// a vertical translation. Requires `lambda > 1` and `0 <= x <= 1/lambda`.
pub fn hyperbolic_profile(lambda: f64, x: f64) -> Result<f64> {
    if !(lambda > 1.0) {
        return Err(GeomError::InvalidArgument(format!("profile needs lambda > 1, got {lambda}")));
    }
    if !(0.0..=1.0 / lambda).contains(&x) {
        return Err(GeomError::InvalidArgument(format!("x = {x} outside [0, 1/lambda]")));
    }
    let mu = (lambda * lambda - 1.0).sqrt();
    let r = lambda / mu;
    let arg = (mu * x / (1.0 - x * x).sqrt()).min(1.0);
    let tail = (1.0 - lambda * lambda * x * x).max(0.0).sqrt();
    Ok(0.5 * PI * (1.0 - r) + r * arg.asin() - (lambda * x).atan2(tail))
}

/// Summary written by the command-line front end.
#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct SphereReport {
    pub kappa: f64,
    pub lambda: f64,
    pub tau: f64,
    pub area: f64,
    pub volume: f64,
    pub pole_spread: f64,
    pub meridian_length: f64,
}

pub fn sphere_report(sphere: &Sphere) -> Result<SphereReport> {
    Ok(SphereReport {
        kappa: sphere.space.kappa,
        lambda: sphere.lambda,
        tau: sphere.tau,
        area: area(sphere),
        volume: enclosed_volume(sphere)?,
        pole_spread: sphere.pole_spread,
        meridian_length: sphere.length,
    })
}

/// `int |N_h|^{-1} dS` by Gauss-Legendre with `n` nodes, and its closed form.
pub fn inverse_nh_integral(lambda: f64, kappa: f64, n: usize) -> Result<(f64, f64)> {
    let tau = tau_of(lambda, kappa)?;
    let len = PI / tau;
    let q = 2.0 * PI
        * GaussLegendre::new(n).integrate(0.0, len, |s| {
            let p = SphereProfile::new(lambda, tau, s);
            p.density / p.nh
        });
    let exact = 2.0 * PI * len * (1.0 + 0.5 * (tau * tau - 1.0)) / (tau * tau);
    Ok((q, exact))
}

/// Largest gap between a shot hyperbolic meridian, recentred vertically, and
/// the graph `t = +-f(|z|)`.
pub fn hyperbolic_meridian_error(lambda: f64, theta: f64, samples: usize) -> Result<f64> {
    let space = crate::space_forms::make_space(-1.0)?;
    let len = PI / tau_of(lambda, -1.0)?;
    let targets: Vec<f64> = (0..=samples).map(|k| len * k as f64 / samples as f64).collect();
    let path = shoot_at(&space, &space.origin(), theta, lambda, &targets, DEFAULT_STEP)?;
    let mid = 0.5 * path.pos[samples][2];
    let mut err: f64 = 0.0;
    for (k, p) in path.pos.iter().enumerate() {
        let x = (p[0] * p[0] + p[1] * p[1]).sqrt().min(1.0 / lambda);
        let f = hyperbolic_profile(lambda, x)?;
        let want = if 2 * k <= samples { f } else { -f };
        err = err.max((p[2] - mid - want).abs());
    }
    Ok(err)
}

/// One strip of `C_{mu,lambda}(Gamma)`: rays of curvature lambda leaving the
/// singular geodesic `Gamma` (curvature mu) orthogonally, cut at the next
/// singular curve.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Strip {
    pub space: SpaceForm,
    pub mu: f64,
    pub lambda: f64,
    /// `+1` for rays along `J(Gamma')`, `-1` for the opposite family.
    pub side: f64,
    /// `v''(0) / 2` fitted from the shot variation, normalized to `v'(0) = -2`.
    pub h_fitted: f64,
    pub dv0_fitted: f64,
    pub width_numeric: Option<f64>,
    pub width_closed: Option<f64>,
    /// `|<V, g'>| / |V|` at the numeric width.
    pub orthogonality: Option<f64>,
    pub eps: Vec<f64>,
    pub svals: Vec<f64>,
    pub points: Vec<V4>,
}

/// Strip parameter `h` of the family leaving a curvature-`mu` geodesic on `side`.
pub fn strip_h(mu: f64, side: f64) -> f64 {
    -2.0 * mu * side
}

fn strip_rays(
    space: &SpaceForm,
    gamma: &GeodesicPath,
    side: f64,
    lambda: f64,
    targets: &[f64],
) -> Result<Vec<GeodesicPath>> {
    (0..gamma.len())
        .map(|k| {
            let v = space.j(&gamma.pos[k], &gamma.vel[k]) * side;
            integrate_to(space, &gamma.pos[k], &v, lambda, targets, DEFAULT_STEP)
        })
        .collect()
}

/// Vertical component, `<V, g'>` and `|V|` of the variation field at each target.
#[allow(clippy::too_many_arguments)]
fn strip_field(
    space: &SpaceForm,
    p: &V4,
    theta0: f64,
    mu: f64,
    lambda: f64,
    side: f64,
    e0: f64,
    targets: &[f64],
) -> Result<Vec<(f64, f64, f64)>> {
    let d = 1e-5;
    let gamma = shoot_at(space, p, theta0, mu, &[e0 - d, e0, e0 + d], DEFAULT_STEP)?;
    let r = strip_rays(space, &gamma, side, lambda, targets)?;
    Ok((0..targets.len())
        .map(|k| {
            let q = r[1].pos[k];
            let v = space.project(&q, &((r[2].pos[k] - r[0].pos[k]) / (2.0 * d)));
            let t = space.reeb(&q);
            (space.inner(&q, &v, &t), space.inner(&q, &v, &r[1].vel[k]), space.norm(&q, &v))
        })
        .collect())
}

#[allow(clippy::too_many_arguments)]
pub fn build_strip(
    space: &SpaceForm,
    p: &V4,
    theta0: f64,
    mu: f64,
    lambda: f64,
    side: f64,
    n_eps: usize,
    n_s: usize,
    s_max: f64,
) -> Result<Strip> {
    space.check_point(p)?;
    if side.abs() != 1.0 || n_eps < 2 || n_s < 2 || !(s_max > 0.0) {
        return Err(GeomError::InvalidArgument("bad strip parameters".into()));
    }
    let e0 = 0.5;
    let field = |t: &[f64]| strip_field(space, p, theta0, mu, lambda, side, e0, t);
    let fit_s: Vec<f64> = (1..=6).map(|k| 0.01 * k as f64).collect();
    let fit_v = field(&fit_s)?;
    let mut a = nalgebra::DMatrix::<f64>::zeros(fit_s.len(), 4);
    let mut b = nalgebra::DVector::<f64>::zeros(fit_s.len());
    for (r, &s) in fit_s.iter().enumerate() {
        for c in 0..4 {
            a[(r, c)] = s.powi(c as i32 + 1);
        }
        b[r] = fit_v[r].0;
    }
    let coef = a
        .svd(true, true)
        .solve(&b, 1e-14)
        .map_err(|e| GeomError::InvalidArgument(e.to_string()))?;
    let dv0 = coef[0];
    let h_fitted = -2.0 * coef[1] / dv0;

    let n_scan = (s_max / 0.01).ceil() as usize;
    let scan: Vec<f64> = (1..=n_scan).map(|k| s_max * k as f64 / n_scan as f64).collect();
    let vals = field(&scan)?;
    let mut width_numeric = None;
    if let Some(k) = (1..scan.len()).find(|&k| vals[k].0.signum() != vals[0].0.signum()) {
        let (mut lo, mut hi) = ((scan[k - 1], vals[k - 1].0), (scan[k], vals[k].0));
        for _ in 0..8 {
            let m = lo.0 - lo.1 * (hi.0 - lo.0) / (hi.1 - lo.1);
            let fm = field(&[m])?[0].0;
            if fm.signum() == lo.1.signum() {
                lo = (m, fm);
            } else {
                hi = (m, fm);
            }
            if (hi.0 - lo.0).abs() < 1e-12 || fm.abs() < 1e-13 {
                break;
            }
        }
        width_numeric = Some(if lo.1.abs() < hi.1.abs() { lo.0 } else { hi.0 });
    }
    let orthogonality = match width_numeric {
        Some(w) => {
            let (_, along, norm) = field(&[w])?[0];
            Some(along.abs() / norm)
        }
        None => None,
    };
    let width_closed = crate::jacobi::cmula_strip_width(strip_h(mu, side), lambda, space.kappa);
    let end = width_numeric.unwrap_or(s_max);
    let eps: Vec<f64> = (0..n_eps).map(|k| k as f64 / (n_eps - 1) as f64).collect();
    let svals: Vec<f64> = (0..n_s).map(|j| end * j as f64 / (n_s - 1) as f64).collect();
    let gamma = shoot_at(space, p, theta0, mu, &eps, DEFAULT_STEP)?;
    let rays = strip_rays(space, &gamma, side, lambda, &svals)?;
    let points = rays.iter().flat_map(|r| r.pos.iter().copied()).collect();
    Ok(Strip {
        space: *space,
        mu,
        lambda,
        side,
        h_fitted,
        dv0_fitted: dv0,
        width_numeric,
        width_closed,
        orthogonality,
        eps,
        svals,
        points,
    })
}

/// Surface swept by the rays from `p` when `lambda^2 + kappa <= 0`.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Plane {
    pub space: SpaceForm,
    pub base: V4,
    pub lambda: f64,
    pub n_theta: usize,
    pub n_s: usize,
    pub thetas: Vec<f64>,
    pub svals: Vec<f64>,
    pub points: Vec<V4>,
    pub velocities: Vec<V4>,
}

pub fn build_plane(
    space: &SpaceForm,
    p: &V4,
    lambda: f64,
    s_max: f64,
    n_theta: usize,
    n_s: usize,
) -> Result<Plane> {
    check_lambda(lambda)?;
    space.check_point(p)?;
    let t2 = lambda * lambda + space.kappa;
    if t2 > 0.0 {
        return Err(GeomError::InvalidArgument(format!(
            "rays from p refocus when lambda^2 + kappa = {t2} > 0; use build_sphere"
        )));
    }
    if !(s_max.is_finite() && s_max > 0.0) || n_theta < 3 || n_s < 2 {
        return Err(GeomError::InvalidArgument("bad plane grid".into()));
    }
    let svals: Vec<f64> = (0..n_s).map(|j| s_max * j as f64 / (n_s - 1) as f64).collect();
    let v = from_point_profile(lambda, space.kappa);
    if svals[1..].iter().any(|&s| v.value(s) <= 0.0) {
        return Err(GeomError::ConstraintViolation("singular set is larger than {p}".into()));
    }
    let thetas: Vec<f64> = (0..n_theta).map(|i| 2.0 * PI * i as f64 / n_theta as f64).collect();
    let rays: Vec<GeodesicPath> = thetas
        .par_iter()
        .map(|&th| shoot_at(space, p, th, lambda, &svals, DEFAULT_STEP))
        .collect::<Result<_>>()?;
    let mut points = Vec::new();
    let mut velocities = Vec::new();
    for r in &rays {
        points.extend_from_slice(&r.pos);
        velocities.extend_from_slice(&r.vel);
    }
    Ok(Plane {
        space: *space,
        base: *p,
        lambda,
        n_theta,
        n_s,
        thetas,
        svals,
        points,
        velocities,
    })
}
