//! Carnot-Caratheodory geodesics of curvature lambda: horizontal unit-speed
//! curves with `D_{g'} g' + 2 lambda J(g') = 0`.

use serde::{Deserialize, Serialize};

use crate::error::{GeomError, Result};
use crate::quad::fd_weights;
use crate::space_forms::{Model, SpaceForm, V3, V4};

pub const DEFAULT_STEP: f64 = 1e-3;

#[derive(Clone, Debug, Default, Serialize, Deserialize)]
pub struct GeodesicPath {
    pub s: Vec<f64>,
    pub pos: Vec<V4>,
    pub vel: Vec<V4>,
}

impl GeodesicPath {
    pub fn len(&self) -> usize {
        self.s.len()
    }

    pub fn is_empty(&self) -> bool {
        self.s.is_empty()
    }

    pub fn last(&self) -> (f64, V4, V4) {
        let n = self.s.len() - 1;
        (self.s[n], self.pos[n], self.vel[n])
    }
}

/// Length of the segment up to the first cut point.
pub fn cut_length(lambda: f64, kappa: f64) -> Result<f64> {
    let t = lambda * lambda + kappa;
    if t > 0.0 {
        Ok(std::f64::consts::PI / t.sqrt())
    } else {
        Err(GeomError::NoCutPoint(t))
    }
}

/// `U(theta) = cos(theta) E0 + sin(theta) E1` at `p`.
pub fn initial_direction(space: &SpaceForm, p: &V4, theta: f64) -> V4 {
    space.from_frame(p, &V3::new(theta.cos(), theta.sin(), 0.0))
}

/// Coordinate acceleration of a geodesic through `(p, v)`.
pub fn acceleration(space: &SpaceForm, p: &V4, v: &V4, lambda: f64) -> V4 {
    -space.j(p, v) * (2.0 * lambda) - space.connection_term(p, v, v)
}

/// Project a state back to the model, with horizontal unit velocity.
pub fn renormalize(space: &SpaceForm, p: &V4, v: &V4) -> (V4, V4) {
    let q = space.retract(p);
    let w = space.project(&q, v);
    let mut c = space.to_frame(&q, &w);
    c[2] = 0.0;
    let n = c.norm();
    if n > 0.0 {
        c /= n;
    }
    (q, space.from_frame(&q, &c))
}

fn rk4_step(space: &SpaceForm, p: &V4, v: &V4, lambda: f64, h: f64) -> (V4, V4) {
    let f = |p: &V4, v: &V4| (*v, acceleration(space, p, v, lambda));
    let (k1p, k1v) = f(p, v);
    let (k2p, k2v) = f(&(p + k1p * (h / 2.0)), &(v + k1v * (h / 2.0)));
    let (k3p, k3v) = f(&(p + k2p * (h / 2.0)), &(v + k2v * (h / 2.0)));
    let (k4p, k4v) = f(&(p + k3p * h), &(v + k3v * h));
    let np = p + (k1p + k2p * 2.0 + k3p * 2.0 + k4p) * (h / 6.0);
    let nv = v + (k1v + k2v * 2.0 + k3v * 2.0 + k4v) * (h / 6.0);
    renormalize(space, &np, &nv)
}

fn left_chart(space: &SpaceForm, p: &V4) -> bool {
    space.model == Model::Hyperbolic && p[0] * p[0] + p[1] * p[1] >= 1.0
}

/// Integrate from `(p, v)` and record the state at each increasing target
/// arclength. Steps never exceed `max_step` and land exactly on targets.
pub fn integrate_to(
    space: &SpaceForm,
    p: &V4,
    v: &V4,
    lambda: f64,
    targets: &[f64],
    max_step: f64,
) -> Result<GeodesicPath> {
    if !(max_step.is_finite() && max_step > 0.0) {
        return Err(GeomError::InvalidArgument(format!("step {max_step}")));
    }
    if targets.windows(2).any(|w| w[1] < w[0]) || targets.first().is_some_and(|&t| t < 0.0) {
        return Err(GeomError::InvalidArgument("targets must be increasing and non-negative".into()));
    }
    let (mut x, mut u) = renormalize(space, p, v);
    let mut s = 0.0;
    let mut out = GeodesicPath::default();
    for &target in targets {
        while target - s > 1e-15 {
            let n = ((target - s) / max_step).ceil().max(1.0);
            let h = (target - s) / n;
            let h = if n > 1.0 { h } else { target - s };
            let (nx, nu) = rk4_step(space, &x, &u, lambda, h);
            if left_chart(space, &nx) {
                return Err(GeomError::ChartExit {
                    s_exit: s,
                    partial: Box::new(out),
                });
            }
            x = nx;
            u = nu;
            s += h;
            if n == 1.0 {
                s = target;
            }
        }
        out.s.push(target);
        out.pos.push(x);
        out.vel.push(u);
    }
    Ok(out)
}

/// Shoot the geodesic with initial direction `U(theta)` and sample every step.
pub fn shoot(
    space: &SpaceForm,
    p: &V4,
    theta: f64,
    lambda: f64,
    s_max: f64,
    step: f64,
) -> Result<GeodesicPath> {
    space.check_point(p)?;
    if !(s_max.is_finite() && s_max >= 0.0 && step.is_finite() && step > 0.0) {
        return Err(GeomError::InvalidArgument(format!("s_max {s_max}, step {step}")));
    }
    let n = (s_max / step).ceil() as usize;
    let mut targets: Vec<f64> = (0..n).map(|k| k as f64 * step).collect();
    targets.push(s_max);
    if n == 0 {
        targets = vec![0.0];
    }
    let v = initial_direction(space, p, theta);
    integrate_to(space, p, &v, lambda, &targets, step)
}

/// Shoot and sample at the given arclengths.
pub fn shoot_at(
    space: &SpaceForm,
    p: &V4,
    theta: f64,
    lambda: f64,
    targets: &[f64],
    max_step: f64,
) -> Result<GeodesicPath> {
    space.check_point(p)?;
    let v = initial_direction(space, p, theta);
    integrate_to(space, p, &v, lambda, targets, max_step)
}

/// Pointwise residual `|D_{g'} g' + 2 lambda J g'|` from a five-point
/// derivative of the sampled velocity.
pub fn geodesic_residual(space: &SpaceForm, path: &GeodesicPath, lambda: f64) -> Vec<f64> {
    let n = path.len();
    if n < 5 {
        return vec![f64::NAN; n];
    }
    (0..n)
        .map(|i| {
            let lo = i.saturating_sub(2).min(n - 5);
            let xs = &path.s[lo..lo + 5];
            let w = fd_weights(path.s[i], xs);
            let mut dv = V4::zeros();
            for (k, wk) in w.iter().enumerate() {
                dv += path.vel[lo + k] * *wk;
            }
            let p = &path.pos[i];
            let v = &path.vel[i];
            let cov = dv + space.connection_term(p, v, v);
            let r = cov + space.j(p, v) * (2.0 * lambda);
            space.norm(p, &space.project(p, &r))
        })
        .collect()
}

/// Horizontal lift of a closed curve in the base surface.
pub trait PlanarCurve: Sync {
    /// Point in N(kappa): `(x, y, 0)` on charts, a unit vector for the sphere.
    fn point(&self, t: f64) -> V3;
    fn deriv(&self, t: f64) -> V3;
    fn period(&self) -> f64;
}

/// Circle `c + r (cos t, sin t)` in a chart, counterclockwise.
#[derive(Clone, Copy, Debug)]
pub struct ChartCircle {
    pub center: (f64, f64),
    pub radius: f64,
    pub clockwise: bool,
}

impl PlanarCurve for ChartCircle {
    fn point(&self, t: f64) -> V3 {
        let t = if self.clockwise { -t } else { t };
        V3::new(self.center.0 + self.radius * t.cos(), self.center.1 + self.radius * t.sin(), 0.0)
    }
    fn deriv(&self, t: f64) -> V3 {
        let sg = if self.clockwise { -1.0 } else { 1.0 };
        let t = sg * t;
        V3::new(-self.radius * t.sin() * sg, self.radius * t.cos() * sg, 0.0)
    }
    fn period(&self) -> f64 {
        2.0 * std::f64::consts::PI
    }
}

/// Star-shaped curve `c + r0 (1 + a cos(k t + phi)) (cos t, sin t)` in a chart.
#[derive(Clone, Copy, Debug)]
pub struct ChartStar {
    pub center: (f64, f64),
    pub r0: f64,
    pub amp: f64,
    pub k: f64,
    pub phase: f64,
    pub clockwise: bool,
}

impl ChartStar {
    pub fn radius(&self, t: f64) -> f64 {
        self.r0 * (1.0 + self.amp * (self.k * t + self.phase).cos())
    }
    fn dradius(&self, t: f64) -> f64 {
        -self.r0 * self.amp * self.k * (self.k * t + self.phase).sin()
    }
}

impl PlanarCurve for ChartStar {
    fn point(&self, t: f64) -> V3 {
        let t = if self.clockwise { -t } else { t };
        let r = self.radius(t);
        V3::new(self.center.0 + r * t.cos(), self.center.1 + r * t.sin(), 0.0)
    }
    fn deriv(&self, t: f64) -> V3 {
        let sg = if self.clockwise { -1.0 } else { 1.0 };
        let t = sg * t;
        let (r, dr) = (self.radius(t), self.dradius(t));
        V3::new(dr * t.cos() - r * t.sin(), dr * t.sin() + r * t.cos(), 0.0) * sg
    }
    fn period(&self) -> f64 {
        2.0 * std::f64::consts::PI
    }
}

impl ChartStar {
    /// Area of the enclosed region in the base surface of `space`, by polar
    /// quadrature of the conformal density of the chart.
    pub fn enclosed_area(&self, space: &SpaceForm) -> f64 {
        let c = space.model.native_kappa();
        let gt = crate::quad::GaussLegendre::new(128);
        let gr = crate::quad::GaussLegendre::new(64);
        let native = gt.integrate(0.0, 2.0 * std::f64::consts::PI, |t| {
            gr.integrate(0.0, self.radius(t), |r| {
                let x = self.center.0 + r * t.cos();
                let y = self.center.1 + r * t.sin();
                r / (1.0 + c * (x * x + y * y)).powi(2)
            })
        });
        native * space.eps * space.eps
    }
}

/// Small circle of angular radius `alpha` about the unit vector `center`
/// on the Hopf base.
#[derive(Clone, Copy, Debug)]
pub struct SphereCap {
    pub center: V3,
    pub alpha: f64,
    pub e1: V3,
    pub e2: V3,
}

impl SphereCap {
    pub fn new(center: V3, alpha: f64) -> Self {
        let c = center.normalize();
        let seed = if c[0].abs() < 0.9 { V3::x() } else { V3::y() };
        let e1 = (seed - c * seed.dot(&c)).normalize();
        let e2 = c.cross(&e1);
        Self { center: c, alpha, e1, e2 }
    }

    /// Cap area in the base of curvature `4 / eps^2`.
    pub fn enclosed_area(&self, space: &SpaceForm) -> f64 {
        0.5 * std::f64::consts::PI * (1.0 - self.alpha.cos()) * space.eps * space.eps
    }

    pub fn reversed(mut self) -> Self {
        self.e2 = -self.e2;
        self
    }
}

impl PlanarCurve for SphereCap {
    fn point(&self, t: f64) -> V3 {
        self.center * self.alpha.cos() + (self.e1 * t.cos() + self.e2 * t.sin()) * self.alpha.sin()
    }
    fn deriv(&self, t: f64) -> V3 {
        (-self.e1 * t.sin() + self.e2 * t.cos()) * self.alpha.sin()
    }
    fn period(&self) -> f64 {
        2.0 * std::f64::consts::PI
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct LiftResult {
    pub points: Vec<V4>,
    /// Signed displacement along the fiber, measured in the model metric.
    pub vertical_displacement: f64,
}

fn lift_velocity(space: &SpaceForm, p: &V4, d: &V3) -> V4 {
    match space.model {
        Model::Sphere3 => {
            let f = space.native_frame(p);
            let a = crate::space_forms::hopf_differential(p, &f[0]);
            let b = crate::space_forms::hopf_differential(p, &f[1]);
            let m = nalgebra::Matrix3x2::from_columns(&[a, b]);
            let mtm = m.transpose() * m;
            let c = mtm.try_inverse().expect("Hopf differential is onto") * (m.transpose() * d);
            f[0] * c[0] + f[1] * c[1]
        }
        _ => {
            let r = 1.0 / (1.0 + space.model.native_kappa() * (p[0] * p[0] + p[1] * p[1]));
            let dt = r * p[1] * d[0] - r * p[0] * d[1];
            V4::new(d[0], d[1], dt, 0.0)
        }
    }
}

/// Horizontal lift of `curve` starting at `start`, integrated with RK4 over
/// `n_steps` steps of one period.
pub fn horizontal_lift(
    space: &SpaceForm,
    curve: &dyn PlanarCurve,
    start: &V4,
    n_steps: usize,
) -> Result<LiftResult> {
    space.check_point(start)?;
    if n_steps == 0 {
        return Err(GeomError::InvalidArgument("n_steps must be positive".into()));
    }
    let h = curve.period() / n_steps as f64;
    let rhs = |t: f64, p: &V4| lift_velocity(space, p, &curve.deriv(t));
    let mut p = *start;
    let mut pts = vec![p];
    for k in 0..n_steps {
        let t = k as f64 * h;
        let k1 = rhs(t, &p);
        let k2 = rhs(t + h / 2.0, &(p + k1 * (h / 2.0)));
        let k3 = rhs(t + h / 2.0, &(p + k2 * (h / 2.0)));
        let k4 = rhs(t + h, &(p + k3 * h));
        p = space.retract(&(p + (k1 + k2 * 2.0 + k3 * 2.0 + k4) * (h / 6.0)));
        pts.push(p);
    }
    let native = match space.model {
        Model::Sphere3 => {
            let t0 = space.native_frame(start)[2];
            p.dot(&t0).atan2(p.dot(start))
        }
        _ => p[2] - start[2],
    };
    Ok(LiftResult {
        points: pts,
        vertical_displacement: native * space.eps * space.eps,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::space_forms::make_space;
    use std::f64::consts::PI;

    #[test]
    fn heisenberg_matches_closed_form() {
        let s = make_space(0.0).unwrap();
        let lam = 1.3;
        let th = 0.4;
        let path = shoot(&s, &s.origin(), th, lam, 2.0, 1e-3).unwrap();
        for (k, &si) in path.s.iter().enumerate().step_by(97) {
            let x = (th.sin() - (th - 2.0 * lam * si).sin()) / (2.0 * lam);
            let y = ((th - 2.0 * lam * si).cos() - th.cos()) / (2.0 * lam);
            let t = (2.0 * lam * si - (2.0 * lam * si).sin()) / (4.0 * lam * lam);
            let p = path.pos[k];
            assert!((p[0] - x).abs() < 1e-10 && (p[1] - y).abs() < 1e-10 && (p[2] - t).abs() < 1e-10);
        }
    }

    #[test]
    fn great_circle_on_sphere() {
        let s = make_space(1.0).unwrap();
        let path = shoot(&s, &s.origin(), 0.3, 0.0, 2.0 * PI, 1e-3).unwrap();
        let (_, end, _) = path.last();
        assert!((end - s.origin()).norm() < 1e-10);
    }

    #[test]
    fn residual_is_small() {
        for k in [-1.0, 0.0, 1.0, 2.5] {
            let s = make_space(k).unwrap();
            let path = shoot(&s, &s.origin(), 1.0, 0.8, 1.5, 1e-3).unwrap();
            let r = geodesic_residual(&s, &path, 0.8);
            let m = r.iter().cloned().fold(0.0, f64::max);
            assert!(m < 1e-9, "kappa {k}: {m}");
        }
    }

    #[test]
    fn hyperbolic_radial_ray_stays_in_chart() {
        let s = make_space(-1.0).unwrap();
        let path = shoot(&s, &s.origin(), 0.0, 0.0, 5.0, 1e-3).unwrap();
        for (k, &si) in path.s.iter().enumerate().step_by(250) {
            let r = path.pos[k].xy().norm();
            assert!((r - si.tanh()).abs() < 1e-10, "{si}: {r}");
        }
        assert!(shoot(&s, &V4::new(1.0, 0.0, 0.0, 0.0), 0.0, 0.0, 1.0, 1e-3).is_err());
    }

    #[test]
    fn cut_length_requires_positive_tau() {
        assert!(cut_length(0.5, -1.0).is_err());
        assert!((cut_length(1.0, 0.0).unwrap() - PI).abs() < 1e-15);
    }

    #[test]
    fn heisenberg_holonomy_clockwise() {
        let s = make_space(0.0).unwrap();
        let c = ChartCircle { center: (0.3, -0.2), radius: 0.7, clockwise: true };
        let start = V4::new(1.0, -0.2, 0.5, 0.0);
        let l = horizontal_lift(&s, &c, &start, 2000).unwrap();
        assert!((l.vertical_displacement - 2.0 * PI * 0.49).abs() < 1e-9);
    }

    #[test]
    fn enclosed_areas() {
        let h = make_space(-4.0).unwrap();
        let c = ChartStar { center: (0.0, 0.0), r0: 0.5, amp: 0.0, k: 0.0, phase: 0.0, clockwise: true };
        assert!((c.enclosed_area(&h) - 0.25 * PI * 0.25 / 0.75).abs() < 1e-12);
        let st = ChartStar { center: (0.1, 0.0), r0: 0.3, amp: 0.2, k: 3.0, phase: 0.0, clockwise: true };
        let lift = horizontal_lift(&h, &st, &V4::new(st.point(0.0)[0], st.point(0.0)[1], 0.0, 0.0), 4000).unwrap();
        assert!((lift.vertical_displacement - 2.0 * st.enclosed_area(&h)).abs() < 1e-9);
        let s = make_space(4.0).unwrap();
        let cap = SphereCap::new(V3::new(0.0, 0.3, 1.0), 0.6);
        let start = crate::space_forms::hopf_preimage(&cap.point(0.0));
        let lift = horizontal_lift(&s, &cap, &start, 4000).unwrap();
        assert!((lift.vertical_displacement.abs() - 2.0 * cap.enclosed_area(&s)).abs() < 1e-9);
    }
}
