//! Model spaces M(kappa): the round 3-sphere, the Heisenberg group and the
//! hyperbolic-disk bundle, plus their homothetic deformations.
//!
//! Points and tangent vectors are stored as `Vector4`. Chart models use the
//! first three slots `(x, y, t)` and leave the fourth at zero; the sphere uses
//! all four ambient coordinates `(x1, y1, x2, y2)`.
//!
//! Every model carries the orthonormal frame `(E0, E1, T)` with `E1 = J E0`.
//! Frame components are `Vector3` in that order.

use nalgebra::{Vector3, Vector4};
use serde::{Deserialize, Serialize};

use crate::error::{GeomError, Result};

pub type V3 = Vector3<f64>;
pub type V4 = Vector4<f64>;
pub type ChartPoint = V4;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Model {
    Sphere3,
    Heisenberg,
    Hyperbolic,
}

impl Model {
    pub fn native_kappa(self) -> f64 {
        match self {
            Model::Sphere3 => 1.0,
            Model::Heisenberg => 0.0,
            Model::Hyperbolic => -1.0,
        }
    }

    pub fn dim(self) -> usize {
        match self {
            Model::Sphere3 => 4,
            _ => 3,
        }
    }
}

/// A model space with Webster curvature `kappa`, realized as the homothety
/// `(g_native)_eps` of one of the three native models.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SpaceForm {
    pub kappa: f64,
    pub model: Model,
    pub eps: f64,
}

pub fn make_space(kappa: f64) -> Result<SpaceForm> {
    if !kappa.is_finite() {
        return Err(GeomError::InvalidKappa(kappa));
    }
    let (model, eps) = if kappa > 0.0 {
        (Model::Sphere3, 1.0 / kappa.sqrt())
    } else if kappa < 0.0 {
        (Model::Hyperbolic, 1.0 / (-kappa).sqrt())
    } else {
        (Model::Heisenberg, 1.0)
    };
    Ok(SpaceForm { kappa, model, eps })
}

fn l_map(p: &V4) -> V4 {
    V4::new(-p[1], p[0], -p[3], p[2])
}

fn a_map(p: &V4) -> V4 {
    V4::new(-p[2], p[3], p[0], -p[1])
}

fn la_map(p: &V4) -> V4 {
    V4::new(-p[3], -p[2], p[1], p[0])
}

fn sphere_map(b: usize, v: &V4) -> V4 {
    match b {
        0 => a_map(v),
        1 => la_map(v),
        _ => l_map(v),
    }
}

pub type Conn = [[V3; 3]; 3];
pub type ConnDeriv = [[[V3; 3]; 3]; 3];

/// `D_u w` for constant-coefficient frame fields.
pub fn conn_apply(g: &Conn, u: &V3, w: &V3) -> V3 {
    let mut r = V3::zeros();
    for a in 0..3 {
        for b in 0..3 {
            r += g[a][b] * (u[a] * w[b]);
        }
    }
    r
}

/// `J` in frame components.
pub fn j3(c: &V3) -> V3 {
    V3::new(-c[1], c[0], 0.0)
}

/// Curvature of the Sasakian space form of Webster curvature `kappa` in
/// orthonormal frame components, with `R(U,V)W = D_V D_U W - D_U D_V W + D_[U,V] W`.
pub fn model_curvature_frame(kappa: f64, u: &V3, v: &V3, w: &V3) -> V3 {
    let t = V3::new(0.0, 0.0, 1.0);
    let (ju, jv, jw) = (j3(u), j3(v), j3(w));
    let (eu, ev, ew) = (u[2], v[2], w[2]);
    let std = (u * v.dot(w) - v * u.dot(w)) * kappa
        + (v * (eu * ew) - u * (ev * ew) + t * (u.dot(w) * ev) - t * (v.dot(w) * eu)
            + ju * jv.dot(w)
            - jv * ju.dot(w)
            - jw * (2.0 * ju.dot(v)))
            * (kappa - 1.0);
    -std
}

impl SpaceForm {
    pub fn native(model: Model) -> Self {
        Self {
            kappa: model.native_kappa(),
            model,
            eps: 1.0,
        }
    }

    pub fn homothetic(model: Model, eps: f64) -> Result<Self> {
        if !(eps.is_finite() && eps > 0.0) {
            return Err(GeomError::InvalidArgument(format!("homothety factor {eps}")));
        }
        Ok(Self {
            kappa: model.native_kappa() / (eps * eps),
            model,
            eps,
        })
    }

    pub fn dim(&self) -> usize {
        self.model.dim()
    }

    /// Point `o` on the vertical axis.
    pub fn origin(&self) -> V4 {
        match self.model {
            Model::Sphere3 => V4::new(1.0, 0.0, 0.0, 0.0),
            _ => V4::zeros(),
        }
    }

    pub fn contains(&self, p: &V4) -> bool {
        if !p.iter().all(|x| x.is_finite()) {
            return false;
        }
        match self.model {
            Model::Sphere3 => (p.norm() - 1.0).abs() < 1e-8,
            Model::Heisenberg => p[3] == 0.0,
            Model::Hyperbolic => p[3] == 0.0 && p[0] * p[0] + p[1] * p[1] < 1.0,
        }
    }

    pub fn check_point(&self, p: &V4) -> Result<()> {
        if self.contains(p) {
            Ok(())
        } else {
            Err(GeomError::NotInModel(format!("{:?} for {:?}", p.as_slice(), self.model)))
        }
    }

    fn k0(&self) -> f64 {
        self.model.native_kappa()
    }

    fn scales(&self) -> [f64; 3] {
        let e = self.eps;
        [1.0 / e, 1.0 / e, 1.0 / (e * e)]
    }

    fn rho(&self, p: &V4) -> f64 {
        1.0 / (1.0 + self.k0() * (p[0] * p[0] + p[1] * p[1]))
    }

    pub fn native_frame(&self, p: &V4) -> [V4; 3] {
        match self.model {
            Model::Sphere3 => [a_map(p), la_map(p), l_map(p)],
            _ => {
                let ir = 1.0 / self.rho(p);
                [
                    V4::new(ir, 0.0, p[1], 0.0),
                    V4::new(0.0, ir, -p[0], 0.0),
                    V4::new(0.0, 0.0, 1.0, 0.0),
                ]
            }
        }
    }

    pub fn frame(&self, p: &V4) -> [V4; 3] {
        let f = self.native_frame(p);
        let s = self.scales();
        [f[0] * s[0], f[1] * s[1], f[2] * s[2]]
    }

    /// Directional derivative of the coordinate components of frame field `a`.
    pub fn frame_field_derivative(&self, p: &V4, a: usize, u: &V4) -> V4 {
        let s = self.scales()[a];
        let d = match self.model {
            Model::Sphere3 => sphere_map(a, u),
            _ => {
                let dir = 2.0 * self.k0() * (p[0] * u[0] + p[1] * u[1]);
                match a {
                    0 => V4::new(dir, 0.0, u[1], 0.0),
                    1 => V4::new(0.0, dir, -u[0], 0.0),
                    _ => V4::zeros(),
                }
            }
        };
        d * s
    }

    fn native_comps(&self, p: &V4, v: &V4) -> V3 {
        match self.model {
            Model::Sphere3 => {
                let f = self.native_frame(p);
                V3::new(v.dot(&f[0]), v.dot(&f[1]), v.dot(&f[2]))
            }
            _ => {
                let r = self.rho(p);
                V3::new(r * v[0], r * v[1], v[2] - r * p[1] * v[0] + r * p[0] * v[1])
            }
        }
    }

    pub fn to_frame(&self, p: &V4, v: &V4) -> V3 {
        let c = self.native_comps(p, v);
        let s = self.scales();
        V3::new(c[0] / s[0], c[1] / s[1], c[2] / s[2])
    }

    pub fn from_frame(&self, p: &V4, c: &V3) -> V4 {
        let f = self.frame(p);
        f[0] * c[0] + f[1] * c[1] + f[2] * c[2]
    }

    pub fn inner(&self, p: &V4, u: &V4, v: &V4) -> f64 {
        self.to_frame(p, u).dot(&self.to_frame(p, v))
    }

    pub fn norm(&self, p: &V4, u: &V4) -> f64 {
        self.to_frame(p, u).norm()
    }

    pub fn reeb(&self, p: &V4) -> V4 {
        self.frame(p)[2]
    }

    pub fn j(&self, p: &V4, v: &V4) -> V4 {
        self.from_frame(p, &j3(&self.to_frame(p, v)))
    }

    pub fn eta(&self, p: &V4, v: &V4) -> f64 {
        self.to_frame(p, v)[2]
    }

    /// Orthogonal projection onto the tangent space (identity on charts).
    pub fn project(&self, p: &V4, v: &V4) -> V4 {
        match self.model {
            Model::Sphere3 => v - p * (v.dot(p) / p.norm_squared()),
            _ => *v,
        }
    }

    /// Pull a nearby point back onto the model.
    pub fn retract(&self, p: &V4) -> V4 {
        match self.model {
            Model::Sphere3 => p / p.norm(),
            _ => *p,
        }
    }

    fn christoffel(&self, p: &V4, u: &V4, w: &V4) -> V4 {
        match self.model {
            Model::Sphere3 => p * u.dot(w),
            _ => {
                let k = self.k0();
                let (x, y) = (p[0], p[1]);
                let r = self.rho(p);
                let rx = -2.0 * k * x * r * r;
                let ry = -2.0 * k * y * r * r;
                let a = [-r * y, r * x, 1.0];
                let da = [[-y * rx, r + x * rx, 0.0], [-r - y * ry, x * ry, 0.0], [0.0; 3]];
                let dr = [rx, ry, 0.0];
                let mut dg = [[[0.0; 3]; 3]; 3];
                for l in 0..2 {
                    for i in 0..3 {
                        for j in 0..3 {
                            let flat = if i == j && i < 2 { 2.0 * r * dr[l] } else { 0.0 };
                            dg[l][i][j] = flat + da[l][i] * a[j] + a[i] * da[l][j];
                        }
                    }
                }
                let f = self.native_frame(p);
                let mut ginv = [[0.0; 3]; 3];
                for e in &f {
                    for k in 0..3 {
                        for l in 0..3 {
                            ginv[k][l] += e[k] * e[l];
                        }
                    }
                }
                let mut low = [0.0; 3];
                for (l, lo) in low.iter_mut().enumerate() {
                    let mut acc = 0.0;
                    for i in 0..3 {
                        for j in 0..3 {
                            acc += u[i] * w[j] * (dg[i][j][l] + dg[j][i][l] - dg[l][i][j]);
                        }
                    }
                    *lo = 0.5 * acc;
                }
                let mut out = V4::zeros();
                for k in 0..3 {
                    out[k] = (0..3).map(|l| ginv[k][l] * low[l]).sum();
                }
                out
            }
        }
    }

    fn deformation(&self, p: &V4, u: &V4, w: &V4) -> V4 {
        let e2 = self.eps * self.eps;
        if e2 == 1.0 {
            return V4::zeros();
        }
        let cu = self.native_comps(p, u);
        let cw = self.native_comps(p, w);
        let f = self.native_frame(p);
        let ju = f[1] * cu[0] - f[0] * cu[1];
        let jw = f[1] * cw[0] - f[0] * cw[1];
        (jw * cu[2] + ju * cw[2]) * (e2 - 1.0)
    }

    /// Zeroth-order part of the covariant derivative:
    /// `D_u W = dW(u) + connection_term(p, u, W(p))`.
    pub fn connection_term(&self, p: &V4, u: &V4, w: &V4) -> V4 {
        self.christoffel(p, u, w) + self.deformation(p, u, w)
    }

    /// Covariant derivative of a field with value `w` and coordinate
    /// derivative `dw_u` along `u` at `p`.
    pub fn cov_deriv(&self, p: &V4, u: &V4, w: &V4, dw_u: &V4) -> V4 {
        dw_u + self.connection_term(p, u, w)
    }

    fn native_frame_connection(&self, p: &V4) -> Conn {
        let mut g = [[V3::zeros(); 3]; 3];
        match self.model {
            Model::Sphere3 => {
                let f = self.native_frame(p);
                for a in 0..3 {
                    for b in 0..3 {
                        let d = sphere_map(b, &f[a]);
                        g[a][b] = V3::new(d.dot(&f[0]), d.dot(&f[1]), d.dot(&f[2]));
                    }
                }
            }
            _ => {
                let k = self.k0();
                let (x, y) = (p[0], p[1]);
                g[0][0] = V3::new(0.0, 2.0 * k * y, 0.0);
                g[0][1] = V3::new(-2.0 * k * y, 0.0, -1.0);
                g[0][2] = V3::new(0.0, 1.0, 0.0);
                g[1][0] = V3::new(0.0, -2.0 * k * x, 1.0);
                g[1][1] = V3::new(2.0 * k * x, 0.0, 0.0);
                g[1][2] = V3::new(-1.0, 0.0, 0.0);
                g[2][0] = V3::new(0.0, 1.0, 0.0);
                g[2][1] = V3::new(-1.0, 0.0, 0.0);
            }
        }
        g
    }

    /// `out[a][b]` holds the frame components of `D_{E_a} E_b`.
    pub fn frame_connection(&self, p: &V4) -> Conn {
        let g0 = self.native_frame_connection(p);
        let s = self.scales();
        let d = self.eps * self.eps - 1.0;
        let je = [V3::new(0.0, 1.0, 0.0), V3::new(-1.0, 0.0, 0.0), V3::zeros()];
        let mut g = [[V3::zeros(); 3]; 3];
        for a in 0..3 {
            for b in 0..3 {
                let mut c = g0[a][b];
                if a == 2 {
                    c += je[b] * d;
                }
                if b == 2 {
                    c += je[a] * d;
                }
                for k in 0..3 {
                    g[a][b][k] = s[a] * s[b] / s[k] * c[k];
                }
            }
        }
        g
    }

    /// `out[d][a][b]` holds `E_d` applied to the components of `D_{E_a} E_b`.
    pub fn frame_connection_derivative(&self, p: &V4) -> ConnDeriv {
        let mut out = [[[V3::zeros(); 3]; 3]; 3];
        if self.model == Model::Sphere3 {
            return out;
        }
        let k = self.k0();
        let s = self.scales();
        let ir = 1.0 / self.rho(p);
        // d/dx and d/dy of the native table
        let mut gx = [[V3::zeros(); 3]; 3];
        let mut gy = [[V3::zeros(); 3]; 3];
        gy[0][0] = V3::new(0.0, 2.0 * k, 0.0);
        gy[0][1] = V3::new(-2.0 * k, 0.0, 0.0);
        gx[1][0] = V3::new(0.0, -2.0 * k, 0.0);
        gx[1][1] = V3::new(2.0 * k, 0.0, 0.0);
        for d in 0..2 {
            let src = if d == 0 { &gx } else { &gy };
            for a in 0..3 {
                for b in 0..3 {
                    for c in 0..3 {
                        out[d][a][b][c] = s[d] * ir * s[a] * s[b] / s[c] * src[a][b][c];
                    }
                }
            }
        }
        out
    }

    /// Curvature in frame components.
    pub fn curvature_frame(&self, p: &V4, u: &V3, v: &V3, w: &V3) -> V3 {
        let g = self.frame_connection(p);
        let dg = self.frame_connection_derivative(p);
        let dterm = |x: &V3, y: &V3| {
            let mut r = V3::zeros();
            for d in 0..3 {
                for a in 0..3 {
                    for b in 0..3 {
                        r += dg[d][a][b] * (x[d] * y[a] * w[b]);
                    }
                }
            }
            r
        };
        let dv_du_w = dterm(v, u) + conn_apply(&g, v, &conn_apply(&g, u, w));
        let du_dv_w = dterm(u, v) + conn_apply(&g, u, &conn_apply(&g, v, w));
        let br = conn_apply(&g, u, v) - conn_apply(&g, v, u);
        dv_du_w - du_dv_w + conn_apply(&g, &br, w)
    }

    pub fn curvature(&self, p: &V4, u: &V4, v: &V4, w: &V4) -> V4 {
        let r = self.curvature_frame(
            p,
            &self.to_frame(p, u),
            &self.to_frame(p, v),
            &self.to_frame(p, w),
        );
        self.from_frame(p, &r)
    }

    /// `Ric(u, v)`: trace of `W -> R(u, W) v`.
    pub fn ricci(&self, p: &V4, u: &V4, v: &V4) -> f64 {
        let cu = self.to_frame(p, u);
        let cv = self.to_frame(p, v);
        (0..3)
            .map(|a| {
                let mut e = V3::zeros();
                e[a] = 1.0;
                self.curvature_frame(p, &cu, &e, &cv)[a]
            })
            .sum()
    }

    /// Sectional curvature of the horizontal plane.
    pub fn horizontal_sectional(&self, p: &V4) -> f64 {
        let e0 = V3::new(1.0, 0.0, 0.0);
        let e1 = V3::new(0.0, 1.0, 0.0);
        self.curvature_frame(p, &e0, &e1, &e0)[1]
    }

    /// Webster curvature recovered from the horizontal sectional curvature.
    pub fn webster_curvature(&self, p: &V4) -> f64 {
        (self.horizontal_sectional(p) + 3.0) / 4.0
    }

    /// Residuals of the Sasakian identities at `p` for frame-component vectors
    /// `u`, `v`: `[D_U T - JU, D_U JV - J D_U V - <V,T>U + <U,V>T, R(U,V)T,
    /// R(U_h,V)U_h, Ric(V,V)]`, each as a max-abs error.
    pub fn sasakian_identity_residuals(&self, p: &V4, u: &V3, v: &V3) -> [f64; 5] {
        let g = self.frame_connection(p);
        let t = V3::new(0.0, 0.0, 1.0);
        let r1 = (conn_apply(&g, u, &t) - j3(u)).amax();
        let r2 = (conn_apply(&g, u, &j3(v)) - j3(&conn_apply(&g, u, v)) - u * v[2] + t * u.dot(v)).amax();
        let r3 = (self.curvature_frame(p, u, v, &t) - (v * u[2] - u * v[2])).amax();
        let uh = V3::new(u[0], u[1], 0.0);
        let k = self.kappa;
        let ruvu = self.curvature_frame(p, &uh, v, &uh);
        let expect = j3(&uh) * ((4.0 * k - 3.0) * v.dot(&j3(&uh))) + t * (uh.dot(&uh) * v[2]);
        let r4 = (ruvu - expect).amax();
        let cv: V4 = self.from_frame(p, v);
        let ric = self.ricci(p, &cv, &cv);
        let r5 = (ric - ((4.0 * k - 2.0) * (v[0] * v[0] + v[1] * v[1]) + 2.0 * v[2] * v[2])).abs();
        [r1, r2, r3, r4, r5]
    }

    /// Projection to the base surface N(kappa). Charts give `(x, y, 0)`, the
    /// sphere gives the Hopf image in the unit 2-sphere.
    pub fn hopf(&self, p: &V4) -> V3 {
        match self.model {
            Model::Sphere3 => hopf_map(p),
            _ => V3::new(p[0], p[1], 0.0),
        }
    }

    /// Flow of the native Reeb field for time `t`.
    pub fn vertical_translate(&self, p: &V4, t: f64) -> V4 {
        match self.model {
            Model::Sphere3 => p * t.cos() + l_map(p) * t.sin(),
            _ => p + V4::new(0.0, 0.0, t, 0.0),
        }
    }

    /// Rotation by `alpha` about the vertical axis through `o`.
    pub fn rotate_about_axis(&self, p: &V4, alpha: f64) -> V4 {
        let (c, s) = (alpha.cos(), alpha.sin());
        match self.model {
            Model::Sphere3 => V4::new(p[0], p[1], c * p[2] - s * p[3], s * p[2] + c * p[3]),
            _ => V4::new(c * p[0] - s * p[1], s * p[0] + c * p[1], p[2], 0.0),
        }
    }

    /// Native fiber parameter of a point on the vertical axis through `o`.
    pub fn axis_parameter(&self, p: &V4) -> f64 {
        match self.model {
            Model::Sphere3 => p[1].atan2(p[0]),
            _ => p[2],
        }
    }

    /// Isometry sending `p` to `o` (unitary on the sphere, left translation on
    /// the Heisenberg group). The hyperbolic chart only supports points on the axis.
    pub fn to_origin(&self, p: &V4) -> Result<Box<dyn Fn(&V4) -> V4 + Send + Sync>> {
        match self.model {
            Model::Sphere3 => {
                let (a1, a2, b1, b2) = (p[0], p[1], p[2], p[3]);
                Ok(Box::new(move |q: &V4| {
                    // [[conj a, conj b], [-b, a]] acting on (z1, z2)
                    let (z1r, z1i, z2r, z2i) = (q[0], q[1], q[2], q[3]);
                    let w1r = a1 * z1r + a2 * z1i + b1 * z2r + b2 * z2i;
                    let w1i = a1 * z1i - a2 * z1r + b1 * z2i - b2 * z2r;
                    let w2r = -(b1 * z1r - b2 * z1i) + (a1 * z2r - a2 * z2i);
                    let w2i = -(b1 * z1i + b2 * z1r) + (a1 * z2i + a2 * z2r);
                    V4::new(w1r, w1i, w2r, w2i)
                }))
            }
            Model::Heisenberg => {
                let (x0, y0, t0) = (p[0], p[1], p[2]);
                Ok(Box::new(move |q: &V4| {
                    V4::new(q[0] - x0, q[1] - y0, q[2] - t0 - (y0 * q[0] - x0 * q[1]), 0.0)
                }))
            }
            Model::Hyperbolic => {
                if p[0] != 0.0 || p[1] != 0.0 {
                    return Err(GeomError::InvalidArgument(
                        "hyperbolic base point must lie on the vertical axis".into(),
                    ));
                }
                let t0 = p[2];
                Ok(Box::new(move |q: &V4| V4::new(q[0], q[1], q[2] - t0, 0.0)))
            }
        }
    }
}

/// Hopf map `S^3 -> S^2`.
pub fn hopf_map(p: &V4) -> V3 {
    let (x1, y1, x2, y2) = (p[0], p[1], p[2], p[3]);
    V3::new(
        x1 * x1 + y1 * y1 - x2 * x2 - y2 * y2,
        2.0 * (x2 * y1 - x1 * y2),
        2.0 * (x1 * x2 + y1 * y2),
    )
}

/// A point of the unit 3-sphere over `x` on the unit 2-sphere.
pub fn hopf_preimage(x: &V3) -> V4 {
    let x = x.normalize();
    let r = (0.5 * (1.0 + x[0])).max(0.0).sqrt();
    if r < 1e-12 {
        return V4::new(0.0, 0.0, 1.0, 0.0);
    }
    V4::new(r, 0.0, x[2] / (2.0 * r), -x[1] / (2.0 * r))
}

/// Differential of the Hopf map applied to `v`.
pub fn hopf_differential(p: &V4, v: &V4) -> V3 {
    let (x1, y1, x2, y2) = (p[0], p[1], p[2], p[3]);
    let (a1, b1, a2, b2) = (v[0], v[1], v[2], v[3]);
    V3::new(
        2.0 * (x1 * a1 + y1 * b1 - x2 * a2 - y2 * b2),
        2.0 * (a2 * y1 + x2 * b1 - a1 * y2 - x1 * b2),
        2.0 * (a1 * x2 + x1 * a2 + b1 * y2 + y1 * b2),
    )
}
