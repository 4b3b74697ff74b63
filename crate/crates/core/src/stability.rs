//! Index form of the CMC spheres, stability certificates and
//! finite-difference second-variation oracles.

use std::f64::consts::PI;

use nalgebra::{Matrix6, Vector6};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{GeomError, Result};
use crate::quad::GaussLegendre;
use crate::space_forms::{model_curvature_frame, V3};
use crate::spheres::{Sphere, SphereProfile};

const N_THETA: usize = 64;
const N_X: usize = 96;

/// The data of a sphere the index form depends on.
#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct SphereParams {
    pub lambda: f64,
    pub kappa: f64,
    pub tau: f64,
}

impl SphereParams {
    pub fn new(lambda: f64, kappa: f64) -> Result<Self> {
        let t2 = lambda * lambda + kappa;
        if !(lambda >= 0.0 && t2 > 0.0) {
            return Err(GeomError::NoCutPoint(t2));
        }
        Ok(Self { lambda, kappa, tau: t2.sqrt() })
    }

    pub fn length(&self) -> f64 {
        PI / self.tau
    }

    pub fn profile(&self, s: f64) -> SphereProfile {
        SphereProfile::new(self.lambda, self.tau, s)
    }

    fn d_of_x(&self, x: f64) -> (f64, f64) {
        let (sn, cs) = x.sin_cos();
        let k = self.tau * self.tau - 1.0;
        (1.0 + k * cs * cs, -2.0 * k * cs * sn)
    }
}

impl From<&Sphere> for SphereParams {
    fn from(s: &Sphere) -> Self {
        Self { lambda: s.lambda, kappa: s.space.kappa, tau: s.tau }
    }
}

/// Value and first partials of a function on the sphere in `(theta, s)`.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct Jet {
    pub v: f64,
    pub ds: f64,
    pub dtheta: f64,
}

impl Jet {
    pub fn new(v: f64, ds: f64, dtheta: f64) -> Self {
        Self { v, ds, dtheta }
    }
}

pub trait SphereFn: Sync {
    fn eval(&self, theta: f64, s: f64) -> Jet;
}

impl<F: Fn(f64, f64) -> Jet + Sync> SphereFn for F {
    fn eval(&self, theta: f64, s: f64) -> Jet {
        self(theta, s)
    }
}

pub fn constant_fn(c: f64) -> impl SphereFn {
    move |_: f64, _: f64| Jet::new(c, 0.0, 0.0)
}

/// `<N, T>` on the sphere.
pub fn normal_vertical_fn(p: SphereParams) -> impl SphereFn {
    move |_: f64, s: f64| {
        let pr = p.profile(s);
        Jet::new(pr.nt, pr.dnt, 0.0)
    }
}

/// `g(s) <N, T>` for a radial `g` given with its derivative.
pub fn radial_times_nt<'a, G: Fn(f64) -> (f64, f64) + Sync + ?Sized>(p: SphereParams, g: &'a G) -> impl SphereFn + 'a {
    move |_: f64, s: f64| {
        let pr = p.profile(s);
        let (gv, gd) = g(s);
        Jet::new(gv * pr.nt, gd * pr.nt + gv * pr.dnt, 0.0)
    }
}

fn lambda_ij(i: usize, j: usize) -> f64 {
    match (i, j) {
        (0, 0) => 0.25,
        (0, _) | (_, 0) => 0.5,
        _ => 1.0,
    }
}

/// Truncated double Fourier series on `[-pi, pi] x [-pi/2, pi/2]` in the basis
/// `cos(i th) cos(2jt)`, `sin(i th) cos(2jt)`, `cos(i th) sin(2jt)`, `sin(i th) sin(2jt)`
/// with coefficients `a, b, c, d` and weights `lambda_ij`.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct TestFunction {
    pub m: usize,
    pub n: usize,
    pub a: Vec<Vec<f64>>,
    pub b: Vec<Vec<f64>>,
    pub c: Vec<Vec<f64>>,
    pub d: Vec<Vec<f64>>,
}

fn orth_project(row: &mut [f64], constraints: &[Vec<f64>]) {
    let mut basis: Vec<Vec<f64>> = Vec::new();
    for w in constraints {
        let mut v = w.clone();
        for q in &basis {
            let c: f64 = v.iter().zip(q).map(|(x, y)| x * y).sum();
            v.iter_mut().zip(q).for_each(|(x, y)| *x -= c * y);
        }
        let nrm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if nrm > 1e-14 {
            v.iter_mut().for_each(|x| *x /= nrm);
            basis.push(v);
        }
    }
    for q in &basis {
        let c: f64 = row.iter().zip(q).map(|(x, y)| x * y).sum();
        row.iter_mut().zip(q).for_each(|(x, y)| *x -= c * y);
    }
}

/// Vanishing conditions a scan imposes on top of pole constancy.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Constraint {
    None,
    Poles,
    Equator,
    MeanZero,
}

impl TestFunction {
    pub fn zeros(m: usize, n: usize) -> Self {
        let z = vec![vec![0.0; n + 1]; m + 1];
        Self { m, n, a: z.clone(), b: z.clone(), c: z.clone(), d: z }
    }

    /// Coefficients uniform on `[-1, 1]` scaled by `1 / (1 + i + j)`, with
    /// the terms that vanish identically set to zero.
    pub fn random<R: Rng>(m: usize, n: usize, rng: &mut R) -> Self {
        let mut f = Self::zeros(m, n);
        for i in 0..=m {
            for j in 0..=n {
                let s = 1.0 / (1 + i + j) as f64;
                f.a[i][j] = rng.gen_range(-1.0..=1.0) * s;
                f.b[i][j] = rng.gen_range(-1.0..=1.0) * s;
                f.c[i][j] = rng.gen_range(-1.0..=1.0) * s;
                f.d[i][j] = rng.gen_range(-1.0..=1.0) * s;
            }
        }
        f.clean();
        f
    }

    fn clean(&mut self) {
        for j in 0..=self.n {
            self.b[0][j] = 0.0;
            self.d[0][j] = 0.0;
        }
        for i in 0..=self.m {
            self.c[i][0] = 0.0;
            self.d[i][0] = 0.0;
        }
    }

    fn row_weights(&self, i: usize, f: impl Fn(usize) -> f64) -> Vec<f64> {
        (0..=self.n).map(|j| lambda_ij(i, j) * f(j)).collect()
    }

    /// Projects the cosine rows so that `psi` satisfies `which` in addition
    /// to being constant along both poles.
    pub fn enforce(&mut self, which: Constraint) {
        let alt = |j: usize| if j % 2 == 0 { 1.0 } else { -1.0 };
        for i in 0..=self.m {
            let mut cons = Vec::new();
            if i >= 1 || which == Constraint::Poles {
                cons.push(self.row_weights(i, alt));
            }
            if which == Constraint::Equator {
                cons.push(self.row_weights(i, |_| 1.0));
            }
            if which == Constraint::MeanZero && i == 0 {
                cons.push(self.row_weights(0, |j| {
                    let jf = j as f64;
                    -2.0 * alt(j) / (4.0 * jf * jf - 1.0)
                }));
            }
            orth_project(&mut self.a[i], &cons);
            if i >= 1 {
                orth_project(&mut self.b[i], &cons);
            }
        }
        self.clean();
    }

    /// `(psi, d psi / d theta, d psi / d t)`.
    pub fn psi(&self, th: f64, t: f64) -> (f64, f64, f64) {
        let (mut v, mut dth, mut dt) = (0.0, 0.0, 0.0);
        for i in 0..=self.m {
            let (si, ci) = (i as f64 * th).sin_cos();
            let (mut ar, mut br, mut art, mut brt) = (0.0, 0.0, 0.0, 0.0);
            for j in 0..=self.n {
                let l = lambda_ij(i, j);
                let w = 2.0 * j as f64;
                let (s2, c2) = (w * t).sin_cos();
                ar += l * (self.a[i][j] * c2 + self.c[i][j] * s2);
                br += l * (self.b[i][j] * c2 + self.d[i][j] * s2);
                art += l * w * (-self.a[i][j] * s2 + self.c[i][j] * c2);
                brt += l * w * (-self.b[i][j] * s2 + self.d[i][j] * c2);
            }
            let fi = i as f64;
            v += ci * ar + si * br;
            dth += fi * (-si * ar + ci * br);
            dt += ci * art + si * brt;
        }
        (v, dth, dt)
    }

    /// `Q(psi, psi)` by Parseval: `(pi^2/2) sum (4j^2 - 1) lambda_ij (a^2 + b^2 + c^2 + d^2)`.
    pub fn parseval(&self) -> f64 {
        let mut q = 0.0;
        for i in 0..=self.m {
            for j in 0..=self.n {
                let jf = j as f64;
                let sq = self.a[i][j].powi(2) + self.b[i][j].powi(2) + self.c[i][j].powi(2) + self.d[i][j].powi(2);
                q += (4.0 * jf * jf - 1.0) * lambda_ij(i, j) * sq;
            }
        }
        0.5 * PI * PI * q
    }

    /// Part even in `t`.
    pub fn symmetric_part(&self) -> Self {
        let mut f = self.clone();
        f.c.iter_mut().chain(f.d.iter_mut()).for_each(|r| r.fill(0.0));
        f
    }

    /// Part odd in `t`.
    pub fn antisymmetric_part(&self) -> Self {
        let mut f = self.clone();
        f.a.iter_mut().chain(f.b.iter_mut()).for_each(|r| r.fill(0.0));
        f
    }

    pub fn lift(&self, p: SphereParams) -> Lifted<'_> {
        Lifted { tf: self, p }
    }
}

/// A test function moved to the sphere: `u(theta, s) = psi(theta - pi, tau s - pi/2) / sqrt(D)`.
pub struct Lifted<'a> {
    pub tf: &'a TestFunction,
    pub p: SphereParams,
}

impl SphereFn for Lifted<'_> {
    fn eval(&self, theta: f64, s: f64) -> Jet {
        let tau = self.p.tau;
        let (ps, pth, pt) = self.tf.psi(theta - PI, tau * s - 0.5 * PI);
        let (d, dx) = self.p.d_of_x(tau * s);
        let sd = d.sqrt();
        Jet::new(ps / sd, tau * pt / sd - ps * tau * dx / (2.0 * d * sd), pth / sd)
    }
}

struct PolarRule {
    theta: Vec<(f64, f64)>,
    x: Vec<(f64, f64)>,
}

impl PolarRule {
    fn new() -> Self {
        Self {
            theta: GaussLegendre::new(N_THETA).on(0.0, 2.0 * PI),
            x: GaussLegendre::new(N_X).on(0.0, PI),
        }
    }

    fn sum<F: Fn(f64, f64) -> f64 + Sync>(&self, f: F) -> f64 {
        self.x
            .par_iter()
            .map(|&(x, wx)| wx * self.theta.iter().map(|&(th, wt)| wt * f(th, x)).sum::<f64>())
            .sum()
    }
}

/// `xi = sqrt(D) u` and `d xi / dx` at `(theta, x)`.
fn xi_of<U: SphereFn + ?Sized>(p: &SphereParams, u: &U, th: f64, x: f64) -> (f64, f64) {
    let (d, dx) = p.d_of_x(x);
    let sd = d.sqrt();
    let j = u.eval(th, x / p.tau);
    (sd * j.v, dx / (2.0 * sd) * j.v + sd * j.ds / p.tau)
}

/// `I(u, w)` by the polar reduction `(1/tau) int (xi_u' xi_w' - xi_u xi_w) dtheta dx`.
pub fn index_form<U: SphereFn + ?Sized, W: SphereFn + ?Sized>(p: &SphereParams, u: &U, w: &W) -> f64 {
    PolarRule::new().sum(|th, x| {
        let (a, ax) = xi_of(p, u, th, x);
        let (b, bx) = xi_of(p, w, th, x);
        ax * bx - a * b
    }) / p.tau
}

/// `I(u, w)` from `|N_h|^{-1} {Z(u) Z(w) - (1 + (tau^2-1)|N_h|^2)^2 u w} dS`.
pub fn index_form_direct<U: SphereFn + ?Sized, W: SphereFn + ?Sized>(p: &SphereParams, u: &U, w: &W) -> f64 {
    let t2 = p.tau * p.tau;
    PolarRule::new().sum(|th, x| {
        let s = x / p.tau;
        let (d, _) = p.d_of_x(x);
        let a = u.eval(th, s);
        let b = w.eval(th, s);
        (d / t2 * a.ds * b.ds - t2 / d * a.v * b.v) / p.tau
    })
}

/// `int u dS`.
pub fn integrate_ds<U: SphereFn + ?Sized>(p: &SphereParams, u: &U) -> f64 {
    PolarRule::new().sum(|th, x| {
        let pr = p.profile(x / p.tau);
        u.eval(th, x / p.tau).v * pr.density / p.tau
    })
}

/// `int u^2 dS`.
pub fn l2_ds<U: SphereFn + ?Sized>(p: &SphereParams, u: &U) -> f64 {
    PolarRule::new().sum(|th, x| {
        let pr = p.profile(x / p.tau);
        u.eval(th, x / p.tau).v.powi(2) * pr.density / p.tau
    })
}

/// `Q(psi_1, psi_2) = int (psi_1,t psi_2,t - psi_1 psi_2)` over the rectangle.
pub fn polar_q(f: &TestFunction, g: &TestFunction) -> f64 {
    PolarRule::new().sum(|th, x| {
        let a = f.psi(th - PI, x - 0.5 * PI);
        let b = g.psi(th - PI, x - 0.5 * PI);
        a.2 * b.2 - a.0 * b.0
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StabilityMode {
    WirtingerPoles,
    WirtingerEquator,
    Meanzero,
    Parallel,
    FdCrosscheck,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Verdict {
    Pass,
    Fail,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct StabilityReport {
    pub mode: StabilityMode,
    pub value: f64,
    pub trials: usize,
    pub seed: u64,
    pub verdict: Verdict,
    /// Per-trial normalized values.
    pub values: Vec<f64>,
}

pub const STABLE_TOL: f64 = 1e-9;

/// Checks the vanishing condition of `mode` and evaluates `I(u,u)`.
pub fn wirtinger_certificate<U: SphereFn + ?Sized>(
    p: &SphereParams,
    u: &U,
    mode: StabilityMode,
) -> Result<StabilityReport> {
    let svals: Vec<f64> = match mode {
        StabilityMode::WirtingerPoles => vec![0.0, p.length()],
        StabilityMode::WirtingerEquator => vec![0.5 * p.length()],
        _ => return Err(GeomError::InvalidArgument(format!("{mode:?} is not a Wirtinger mode"))),
    };
    for &s in &svals {
        for k in 0..64 {
            let v = u.eval(2.0 * PI * k as f64 / 64.0, s).v;
            if v.abs() > 1e-10 {
                return Err(GeomError::ConstraintViolation(format!("u = {v:e} at s = {s}")));
            }
        }
    }
    let value = index_form(p, u, u);
    let scale = l2_ds(p, u);
    let verdict = if value >= -STABLE_TOL * scale { Verdict::Pass } else { Verdict::Fail };
    Ok(StabilityReport {
        mode,
        value,
        trials: 1,
        seed: 0,
        verdict,
        values: vec![if scale > 0.0 { value / scale } else { 0.0 }],
    })
}

/// Precomputed polar grid for fast repeated evaluation of test functions.
struct ScanGrid {
    rule: PolarRule,
    sqrt_d: Vec<f64>,
    dsqrt_d: Vec<f64>,
}

impl ScanGrid {
    fn new(p: &SphereParams) -> Self {
        let rule = PolarRule::new();
        let (sqrt_d, dsqrt_d) = rule
            .x
            .iter()
            .map(|&(x, _)| {
                let (d, dx) = p.d_of_x(x);
                (d.sqrt(), dx / (2.0 * d.sqrt()))
            })
            .unzip();
        Self { rule, sqrt_d, dsqrt_d }
    }

    /// `xi` and `xi_x` on the tensor grid, index `ix * N_THETA + it`.
    fn xi(&self, f: &TestFunction) -> (Vec<f64>, Vec<f64>) {
        let nt = self.rule.theta.len();
        let mut v = vec![0.0; self.rule.x.len() * nt];
        let mut vx = v.clone();
        let trig: Vec<Vec<(f64, f64)>> = self
            .rule
            .theta
            .iter()
            .map(|&(th, _)| (0..=f.m).map(|i| (i as f64 * (th - PI)).sin_cos()).collect())
            .collect();
        for (ix, &(x, _)) in self.rule.x.iter().enumerate() {
            let t = x - 0.5 * PI;
            let mut rows = vec![(0.0, 0.0, 0.0, 0.0); f.m + 1];
            for (i, r) in rows.iter_mut().enumerate() {
                for j in 0..=f.n {
                    let l = lambda_ij(i, j);
                    let w = 2.0 * j as f64;
                    let (s2, c2) = (w * t).sin_cos();
                    r.0 += l * (f.a[i][j] * c2 + f.c[i][j] * s2);
                    r.1 += l * (f.b[i][j] * c2 + f.d[i][j] * s2);
                    r.2 += l * w * (-f.a[i][j] * s2 + f.c[i][j] * c2);
                    r.3 += l * w * (-f.b[i][j] * s2 + f.d[i][j] * c2);
                }
            }
            for it in 0..nt {
                let (mut a, mut b) = (0.0, 0.0);
                for (i, r) in rows.iter().enumerate() {
                    let (si, ci) = trig[it][i];
                    a += ci * r.0 + si * r.1;
                    b += ci * r.2 + si * r.3;
                }
                v[ix * nt + it] = a;
                vx[ix * nt + it] = b;
            }
        }
        (v, vx)
    }

    fn integrate(&self, f: impl Fn(usize, usize) -> f64) -> f64 {
        let nt = self.rule.theta.len();
        self.rule
            .x
            .iter()
            .enumerate()
            .map(|(ix, &(_, wx))| wx * (0..nt).map(|it| self.rule.theta[it].1 * f(ix, it)).sum::<f64>())
            .sum()
    }

    /// Normalized `I(u,u) / int u^2 dS`, optionally after removing the dS-mean.
    fn normalized(&self, p: &SphereParams, f: &TestFunction, project_mean: bool) -> f64 {
        let (mut xi, mut xix) = self.xi(f);
        let nt = self.rule.theta.len();
        let sinx: Vec<f64> = self.rule.x.iter().map(|&(x, _)| x.sin()).collect();
        let l2_of = |xi: &[f64]| self.integrate(|ix, it| xi[ix * nt + it].powi(2) * sinx[ix] / self.sqrt_d[ix]) / p.tau.powi(3);
        let raw = l2_of(&xi);
        if project_mean {
            let num = self.integrate(|ix, it| xi[ix * nt + it] * sinx[ix]);
            let den = self.integrate(|ix, _| self.sqrt_d[ix] * sinx[ix]);
            let c = num / den;
            for ix in 0..self.rule.x.len() {
                for it in 0..nt {
                    xi[ix * nt + it] -= c * self.sqrt_d[ix];
                    xix[ix * nt + it] -= c * self.dsqrt_d[ix];
                }
            }
        }
        let q = self.integrate(|ix, it| xix[ix * nt + it].powi(2) - xi[ix * nt + it].powi(2));
        let l2 = l2_of(&xi);
        if l2 <= 1e-24 * raw || l2 == 0.0 {
            0.0
        } else {
            q / p.tau / l2
        }
    }
}

fn trial_rng(seed: u64, trial: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(trial as u64);
    rng
}

/// Minimum of normalized `I(u,u)` over random test functions obeying `constraint`.
pub fn random_scan(
    p: &SphereParams,
    constraint: Constraint,
    trials: usize,
    (m, n): (usize, usize),
    seed: u64,
) -> Result<StabilityReport> {
    if trials == 0 {
        return Err(GeomError::InvalidArgument("trials must be at least 1".into()));
    }
    let mode = match constraint {
        Constraint::Poles => StabilityMode::WirtingerPoles,
        Constraint::Equator => StabilityMode::WirtingerEquator,
        _ => StabilityMode::Meanzero,
    };
    let grid = ScanGrid::new(p);
    let values: Vec<f64> = (0..trials)
        .into_par_iter()
        .map(|k| {
            let mut f = TestFunction::random(m, n, &mut trial_rng(seed, k));
            let project = constraint == Constraint::MeanZero;
            f.enforce(if project { Constraint::None } else { constraint });
            grid.normalized(p, &f, project)
        })
        .collect();
    let value = values.iter().copied().fold(f64::INFINITY, f64::min);
    Ok(StabilityReport {
        mode,
        value,
        trials,
        seed,
        verdict: if value >= -STABLE_TOL { Verdict::Pass } else { Verdict::Fail },
        values,
    })
}

/// Random test functions with zero dS-mean, obtained by subtracting the mean.
pub fn meanzero_scan(p: &SphereParams, trials: usize, truncation: (usize, usize), seed: u64) -> Result<StabilityReport> {
    random_scan(p, Constraint::MeanZero, trials, truncation, seed)
}

/// `x_0 = 2 sum_{n>=1} (-1)^{n+1} x_n` prepended to `tail`.
pub fn constrained_sequence(tail: &[f64]) -> Vec<f64> {
    let x0: f64 = tail
        .iter()
        .enumerate()
        .map(|(k, x)| if k % 2 == 0 { 2.0 * x } else { -2.0 * x })
        .sum();
    std::iter::once(x0).chain(tail.iter().copied()).collect()
}

/// `-x_0^2 / 2 + sum_{n>=1} (4n^2 - 1) x_n^2` for a constrained sequence.
pub fn fourier_sequence_functional(x: &[f64]) -> Result<f64> {
    if x.is_empty() {
        return Ok(0.0);
    }
    let expect = constrained_sequence(&x[1..])[0];
    let scale = 1.0 + x.iter().map(|v| v.abs()).sum::<f64>();
    if (x[0] - expect).abs() > 1e-12 * scale {
        return Err(GeomError::ConstraintViolation(format!(
            "x0 = {} but the alternating sum gives {expect}",
            x[0]
        )));
    }
    Ok(-0.5 * x[0] * x[0]
        + x[1..]
            .iter()
            .enumerate()
            .map(|(k, v)| {
                let nf = (k + 1) as f64;
                (4.0 * nf * nf - 1.0) * v * v
            })
            .sum::<f64>())
}

/// `s_n` evaluated directly from `x_1..x_n` (`x[0]` is ignored).
pub fn partial_functional(x: &[f64], n: usize) -> f64 {
    let alt: f64 = (1..=n).map(|i| if i % 2 == 1 { 2.0 * x[i] } else { -2.0 * x[i] }).sum();
    -0.5 * alt * alt + (1..=n).map(|i| (4.0 * (i * i) as f64 - 1.0) * x[i] * x[i]).sum::<f64>()
}

/// The sum-of-squares expression for `s_n`.
pub fn induction_sum(x: &[f64], n: usize) -> f64 {
    let mut total = 0.0;
    for i in 1..n {
        let mut b = (2 * i - 1) as f64 * x[i];
        for k in 1..=(n - i) {
            b += if k % 2 == 1 { 2.0 } else { -2.0 } * x[i + k];
        }
        total += b * b;
    }
    total + ((2 * n - 1) as f64 * x[n]).powi(2)
}

/// Radial profile `g(s)` with derivative.
pub type Radial<'a> = &'a (dyn Fn(f64) -> (f64, f64) + Sync);

#[derive(Clone, Copy)]
pub enum Variation<'a> {
    /// `phi_s(q) = exp_q(s N_q)`.
    Parallel,
    /// `phi_s(q) = exp_q(s g(q) T_q)` with `g` radial.
    Vertical(Radial<'a>),
}

fn s_rule(p: &SphereParams) -> Vec<(f64, f64)> {
    GaussLegendre::new(128).on(0.0, p.length())
}

/// `A(eps)` for the vertical variation with radial speed `g`:
/// `2 pi int sqrt(a eps^2 + b eps + c) dS`.
pub fn vertical_variation_area(p: &SphereParams, g: Radial, eps: f64) -> f64 {
    2.0 * PI
        * s_rule(p)
            .iter()
            .map(|&(s, w)| {
                let pr = p.profile(s);
                let gd = g(s).1;
                let su = -p.lambda * pr.nh * gd;
                let a = pr.nt * pr.nt * gd * gd + su * su;
                let b = -2.0 * pr.nh * su;
                let c = pr.nh * pr.nh;
                w * (a * eps * eps + b * eps + c).max(0.0).sqrt() * pr.density
            })
            .sum::<f64>()
}

fn vertical_variation_volume(p: &SphereParams, g: Radial, eps: f64) -> f64 {
    2.0 * PI * eps * s_rule(p).iter().map(|&(s, w)| w * g(s).0 * p.profile(s).nt * p.profile(s).density).sum::<f64>()
}

/// Jacobi fields along `exp_q(sigma N)` in the orthonormal frame
/// `(N, JN/|N_h|, (T - <N,T> N)/|N_h|)`; returns `|E_Z x E_S|` at each sigma.
fn parallel_jacobian(p: &SphereParams, pr: &SphereProfile, sigmas: &[f64]) -> Vec<f64> {
    let (nh, nt) = (pr.nh, pr.nt);
    let basis = [V3::new(nh, 0.0, nt), V3::new(0.0, 1.0, 0.0), V3::new(-nt, 0.0, nh)];
    let mut c = nalgebra::Matrix3::zeros();
    for k in 0..3 {
        let r = model_curvature_frame(p.kappa, &basis[0], &basis[k], &basis[0]);
        for l in 0..3 {
            c[(l, k)] = r.dot(&basis[l]);
        }
    }
    let mut kmat = nalgebra::Matrix3::zeros();
    kmat[(1, 2)] = 1.0;
    kmat[(2, 1)] = -1.0;
    let mut a = Matrix6::zeros();
    a.fixed_view_mut::<3, 3>(0, 0).copy_from(&(-kmat));
    a.fixed_view_mut::<3, 3>(0, 3).copy_from(&nalgebra::Matrix3::identity());
    a.fixed_view_mut::<3, 3>(3, 0).copy_from(&(-c));
    a.fixed_view_mut::<3, 3>(3, 3).copy_from(&(-kmat));
    let z = V3::new(0.0, 1.0, 0.0);
    let sv = V3::new(0.0, 0.0, -1.0);
    let init = |e: V3, be: V3| {
        let y = e;
        let dz = -be;
        let zc = dz;
        Vector6::new(y[0], y[1], y[2], zc[0], zc[1], zc[2])
    };
    let x_z = init(z, z * pr.bzz + sv * pr.bzs);
    let x_s = init(sv, z * pr.bzs + sv * pr.bss);
    sigmas
        .iter()
        .map(|&sg| {
            let e = (a * sg).exp();
            let ez = e * x_z;
            let es = e * x_s;
            V3::new(ez[0], ez[1], ez[2]).cross(&V3::new(es[0], es[1], es[2])).norm()
        })
        .collect()
}

/// `A(sigma) + 2 lambda V(sigma)` along the parallel variation.
pub fn parallel_functional(p: &SphereParams, sigma: f64) -> f64 {
    let gl = GaussLegendre::new(8);
    let r_nodes = gl.on(0.0, sigma);
    let mut sig: Vec<f64> = r_nodes.iter().map(|x| x.0).collect();
    sig.push(sigma);
    2.0 * PI
        * s_rule(p)
            .par_iter()
            .map(|&(s, w)| {
                let pr = p.profile(s);
                let jac = parallel_jacobian(p, &pr, &sig);
                let vol: f64 = r_nodes.iter().zip(&jac).map(|(r, j)| r.1 * j).sum();
                w * pr.density * (pr.nh * jac[8] + 2.0 * p.lambda * vol)
            })
            .sum::<f64>()
}

fn variation_functional(p: &SphereParams, var: Variation, eps: f64) -> f64 {
    match var {
        Variation::Parallel => parallel_functional(p, eps),
        Variation::Vertical(g) => {
            vertical_variation_area(p, g, eps) + 2.0 * p.lambda * vertical_variation_volume(p, g, eps)
        }
    }
}

#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct SecondVariation {
    pub value: f64,
    pub coarse: f64,
    pub h: f64,
}

/// Central second difference of `A + 2 lambda V` with Richardson extrapolation
/// over `h, h/2, h/4`.
pub fn second_variation_fd(p: &SphereParams, var: Variation, h: f64) -> Result<SecondVariation> {
    let f0 = variation_functional(p, var, 0.0);
    let d = |k: f64| (variation_functional(p, var, k) - 2.0 * f0 + variation_functional(p, var, -k)) / (k * k);
    let (d1, d2, d3) = (d(h), d(h / 2.0), d(h / 4.0));
    let r1 = (4.0 * d2 - d1) / 3.0;
    let r2 = (4.0 * d3 - d2) / 3.0;
    if (r1 - r2).abs() > 1e-4 * r2.abs().max(1.0) {
        return Err(GeomError::StepTooLarge(h, (r1 - r2).abs()));
    }
    Ok(SecondVariation { value: r2, coarse: r1, h })
}

#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct GeneralSecondVariation {
    pub index_term: f64,
    pub div_z: f64,
    pub div_s: f64,
    pub div_w: f64,
    pub total: f64,
}

/// Normal variation with speed `u`, normal acceleration `w` and optional
/// tangential acceleration `(<W,Z>, <W,S>)`: the index integral with the
/// general potential `|B(Z)+S|^2 + 4(K-1)|N_h|^2` plus the three divergence
/// integrals, expanded with `div(f Z) = Z(f) + |N_h|^{-1}<N,T>(1 + <B(Z),S>) f`
/// and `div(f S) = S(f) - 2H <N,T> f`.
pub fn general_second_variation<U: SphereFn + ?Sized, W: SphereFn + ?Sized>(
    p: &SphereParams,
    u: &U,
    w: &W,
    w_tan: Option<(&dyn SphereFn, &dyn SphereFn)>,
) -> GeneralSecondVariation {
    let lam = p.lambda;
    let t2 = p.tau * p.tau;
    let rule = PolarRule::new();
    let terms = |th: f64, x: f64| -> [f64; 4] {
        let s = x / p.tau;
        let pr = p.profile(s);
        let dens = pr.density;
        let inv_nh_dens = pr.d / t2;
        let uj = u.eval(th, s);
        let wj = w.eval(th, s);
        let pot = pr.bzz.powi(2) + (pr.bzs + 1.0).powi(2) + 4.0 * (p.kappa - 1.0) * pr.nh * pr.nh;
        let index = inv_nh_dens * (uj.ds * uj.ds - pot * uj.v * uj.v);

        let u2 = uj.v * uj.v;
        let f1 = pr.nt * (1.0 - pr.bzs) * u2;
        let df1 = (pr.dnt * (1.0 - pr.bzs) - pr.nt * pr.dbzs) * u2 + pr.nt * (1.0 - pr.bzs) * 2.0 * uj.v * uj.ds;
        let div1 = df1 * dens + inv_nh_dens * pr.nt * (1.0 + pr.bzs) * f1;

        let g = 2.0 * lam * pr.nh * u2 - wj.v;
        let g_s = 2.0 * lam * (pr.dnh * u2 + pr.nh * 2.0 * uj.v * uj.ds) - wj.ds;
        let g_th = 2.0 * lam * pr.nh * 2.0 * uj.v * uj.dtheta - wj.dtheta;
        let f2 = pr.nt * g;
        let f2_s = pr.dnt * g + pr.nt * g_s;
        let f2_th = pr.nt * g_th;
        let s_f2_dens = -f2_th - lam * pr.nh * dens * f2_s;
        let div2 = s_f2_dens - 2.0 * lam * pr.nt * f2 * dens;

        let div3 = match w_tan {
            None => 0.0,
            Some((wz, ws)) => {
                let a = wz.eval(th, s);
                let b = ws.eval(th, s);
                let z_part = (pr.dnh * a.v + pr.nh * a.ds) * dens + pr.nt * (1.0 + pr.bzs) * a.v * pr.d / t2 * pr.nh;
                let sb_s = pr.dnh * b.v + pr.nh * b.ds;
                let sb_th = pr.nh * b.dtheta;
                let s_part = -sb_th - lam * pr.nh * dens * sb_s - 2.0 * lam * pr.nt * pr.nh * b.v * dens;
                z_part + s_part
            }
        };
        [index, div1, div2, div3]
    };
    let mut acc = [0.0; 4];
    for &(x, wx) in &rule.x {
        for &(th, wt) in &rule.theta {
            let t = terms(th, x);
            for k in 0..4 {
                acc[k] += wx * wt * t[k] / p.tau;
            }
        }
    }
    GeneralSecondVariation {
        index_term: acc[0],
        div_z: acc[1],
        div_s: acc[2],
        div_w: acc[3],
        total: acc.iter().sum(),
    }
}
