//! CC-Jacobi fields along geodesics of curvature lambda.
//!
//! Fields are written in the adapted frame `(g', J g', T)` along the geodesic,
//! whose derivatives are `g'' = -2 lambda J g'`, `(J g')' = 2 lambda g' - T`
//! and `T' = J g'`.

use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::geodesics::{shoot_at, GeodesicPath};
use crate::space_forms::{SpaceForm, V3, V4};

const FLAT_TOL: f64 = 1e-14;

/// Closed-form solution of `v''' + tau4 v' = 0` with `tau4 = 4 (lambda^2 + kappa)`.
#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct VerticalSolution {
    pub tau4: f64,
    pub v0: f64,
    pub dv0: f64,
    pub ddv0: f64,
}

pub fn vertical_closed_form(lambda: f64, kappa: f64, v0: f64, dv0: f64, ddv0: f64) -> VerticalSolution {
    VerticalSolution {
        tau4: 4.0 * (lambda * lambda + kappa),
        v0,
        dv0,
        ddv0,
    }
}

impl VerticalSolution {
    /// Derivatives of order 0..=3 at `s`.
    pub fn derivs(&self, s: f64) -> [f64; 4] {
        let (t, a, c0) = (self.tau4, self.dv0, self.ddv0);
        if t.abs() < FLAT_TOL {
            return [c0 / 2.0 * s * s + a * s + self.v0, c0 * s + a, c0, 0.0];
        }
        let c = self.v0 + c0 / t;
        if t > 0.0 {
            let r = t.sqrt();
            let b = c0 / r;
            let (sn, cs) = (r * s).sin_cos();
            [
                (a * sn - b * cs) / r + c,
                a * cs + b * sn,
                r * (-a * sn + b * cs),
                -t * (a * cs + b * sn),
            ]
        } else {
            let r = (-t).sqrt();
            let b = c0 / r;
            let (sh, ch) = ((r * s).sinh(), (r * s).cosh());
            [
                (a * sh + b * ch) / r + c,
                a * ch + b * sh,
                r * (a * sh + b * ch),
                -t * (a * ch + b * sh),
            ]
        }
    }

    pub fn value(&self, s: f64) -> f64 {
        self.derivs(s)[0]
    }
}

/// Vertical profile of the field from a point: data `(0, 0, 2)`, which gives
/// `v = sin^2(tau s) / tau^2` with `tau^2 = lambda^2 + kappa`.
pub fn from_point_profile(lambda: f64, kappa: f64) -> VerticalSolution {
    vertical_closed_form(lambda, kappa, 0.0, 0.0, 2.0)
}

/// Adapted-frame components `(f, f')` of a field, where `f'` are the
/// components of the covariant derivative.
#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct AdaptedState {
    pub f: V3,
    pub g: V3,
}

/// Adapted components of the from-a-point field `-lambda v g' + (v'/2) J g' + v T`.
pub fn from_point_adapted(lambda: f64, kappa: f64, s: f64) -> AdaptedState {
    let d = from_point_profile(lambda, kappa).derivs(s);
    let f = V3::new(-lambda * d[0], d[1] / 2.0, d[0]);
    let g = V3::new(
        -lambda * d[1] + 2.0 * lambda * f[1],
        d[2] / 2.0 - 2.0 * lambda * f[0] + f[2],
        d[1] - f[1],
    );
    AdaptedState { f, g }
}

/// Coordinate vector with adapted components `c` at `(p, vel)`.
pub fn adapted_to_coords(space: &SpaceForm, p: &V4, vel: &V4, c: &V3) -> V4 {
    vel * c[0] + space.j(p, vel) * c[1] + space.reeb(p) * c[2]
}

/// Adapted components of the coordinate vector `w` at `(p, vel)`.
pub fn coords_to_adapted(space: &SpaceForm, p: &V4, vel: &V4, w: &V4) -> V3 {
    V3::new(
        space.inner(p, w, vel),
        space.inner(p, w, &space.j(p, vel)),
        space.eta(p, w),
    )
}

/// Closed-form from-a-point field along a sampled geodesic.
pub fn from_point_field(space: &SpaceForm, path: &GeodesicPath, lambda: f64) -> Vec<V4> {
    path.s
        .iter()
        .zip(path.pos.iter().zip(&path.vel))
        .map(|(&s, (p, v))| {
            let st = from_point_adapted(lambda, space.kappa, s);
            adapted_to_coords(space, p, v, &st.f)
        })
        .collect()
}

/// Central difference in `theta` of the family of geodesics from `p`.
pub fn flow_variation_fd(
    space: &SpaceForm,
    p: &V4,
    theta: f64,
    lambda: f64,
    s_values: &[f64],
    h: f64,
    max_step: f64,
) -> Result<Vec<V4>> {
    let plus = shoot_at(space, p, theta + h, lambda, s_values, max_step)?;
    let minus = shoot_at(space, p, theta - h, lambda, s_values, max_step)?;
    Ok(plus
        .pos
        .iter()
        .zip(&minus.pos)
        .map(|(a, b)| {
            let mid = space.retract(&((a + b) * 0.5));
            space.project(&mid, &((a - b) / (2.0 * h)))
        })
        .collect())
}

fn jacobi_rhs(lambda: f64, kappa: f64, y: &[f64; 6]) -> [f64; 6] {
    let [f1, f2, f3, g1, g2, g3] = *y;
    let l2 = 2.0 * lambda;
    [
        g1 - l2 * f2,
        g2 + l2 * f1 - f3,
        g3 + f2,
        0.0,
        -g3 - (4.0 * kappa - 3.0) * f2,
        g2 - f3 + l2 * f1,
    ]
}

/// RK4 integration of the full Jacobi system
/// `V'' + R(g', V) g' + 2 lambda (J V' - <V, g'> T) = 0` in the adapted frame.
pub fn jacobi_ode_integrate(
    lambda: f64,
    kappa: f64,
    init: AdaptedState,
    s_grid: &[f64],
    max_step: f64,
) -> Vec<AdaptedState> {
    let mut y = [init.f[0], init.f[1], init.f[2], init.g[0], init.g[1], init.g[2]];
    let mut s = 0.0;
    let mut out = Vec::with_capacity(s_grid.len());
    let add = |a: &[f64; 6], b: &[f64; 6], h: f64| {
        let mut r = *a;
        for i in 0..6 {
            r[i] += h * b[i];
        }
        r
    };
    for &target in s_grid {
        while target - s > 1e-15 {
            let n = ((target - s) / max_step).ceil().max(1.0);
            let h = (target - s) / n;
            let k1 = jacobi_rhs(lambda, kappa, &y);
            let k2 = jacobi_rhs(lambda, kappa, &add(&y, &k1, h / 2.0));
            let k3 = jacobi_rhs(lambda, kappa, &add(&y, &k2, h / 2.0));
            let k4 = jacobi_rhs(lambda, kappa, &add(&y, &k3, h));
            for i in 0..6 {
                y[i] += h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
            }
            s = if n == 1.0 { target } else { s + h };
        }
        out.push(AdaptedState {
            f: V3::new(y[0], y[1], y[2]),
            g: V3::new(y[3], y[4], y[5]),
        });
    }
    out
}

/// `lambda <V,T> + <V, g'>`, constant for variations through geodesics.
pub fn conserved_quantity(lambda: f64, st: &AdaptedState) -> f64 {
    lambda * st.f[2] + st.f[0]
}

/// First positive zero of the vertical component with data `(0, -2, 2h)`.
pub fn cmula_strip_width(h: f64, lambda: f64, kappa: f64) -> Option<f64> {
    let t = 4.0 * (lambda * lambda + kappa);
    if t.abs() < FLAT_TOL {
        return (h > 0.0).then(|| 2.0 / h);
    }
    if t > 0.0 {
        let r = t.sqrt();
        Some(2.0 * r.atan2(h) / r)
    } else {
        let r = (-t).sqrt();
        (h > r).then(|| 2.0 * (r / h).atanh() / r)
    }
}
