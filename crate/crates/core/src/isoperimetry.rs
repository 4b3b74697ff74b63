//! Sphere versus torus in the flat Sasakian cylinder `M(0) / G` with
//! vertical period `2 pi`.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{GeomError, Result};

/// Smallest curvature for which the sphere embeds in the cylinder.
pub const LAMBDA_MIN: f64 = 0.5;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Family {
    RotationalSphere,
    CylinderTorus,
}

#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct CandidateProfile {
    pub family: Family,
    pub parameter: f64,
    pub area: f64,
    pub volume: f64,
}

pub fn sphere_profile(lambda: f64) -> Result<CandidateProfile> {
    if !(lambda > LAMBDA_MIN && lambda.is_finite()) {
        return Err(GeomError::InvalidArgument(format!(
            "sphere embeds in the cylinder only for lambda > 1/2, got {lambda}"
        )));
    }
    Ok(CandidateProfile {
        family: Family::RotationalSphere,
        parameter: lambda,
        area: PI * PI / lambda.powi(3),
        volume: 3.0 * PI * PI / (8.0 * lambda.powi(4)),
    })
}

pub fn torus_profile(r: f64) -> Result<CandidateProfile> {
    if !(r > 0.0 && r.is_finite()) {
        return Err(GeomError::InvalidArgument(format!("torus radius must be positive, got {r}")));
    }
    Ok(CandidateProfile {
        family: Family::CylinderTorus,
        parameter: r,
        area: 4.0 * PI * PI * r,
        volume: 2.0 * PI * PI * r * r,
    })
}

/// Upper end of the volumes enclosed by embedded spheres.
pub fn sphere_volume_limit() -> f64 {
    3.0 * PI * PI / (8.0 * LAMBDA_MIN.powi(4))
}

pub fn sphere_lambda_for_volume(v: f64) -> Result<f64> {
    if !(v > 0.0 && v.is_finite()) {
        return Err(GeomError::InvalidArgument(format!("volume must be positive, got {v}")));
    }
    if v >= sphere_volume_limit() {
        return Err(GeomError::NoAdmissibleSphere(format!(
            "volume {v} needs lambda <= 1/2; spheres only exist below {}",
            sphere_volume_limit()
        )));
    }
    Ok((3.0 * PI * PI / (8.0 * v)).powf(0.25))
}

pub fn torus_radius_for_volume(v: f64) -> Result<f64> {
    if !(v > 0.0 && v.is_finite()) {
        return Err(GeomError::InvalidArgument(format!("volume must be positive, got {v}")));
    }
    Ok((v / (2.0 * PI * PI)).sqrt())
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Winner {
    Sphere,
    Torus,
}

#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct Comparison {
    pub volume: f64,
    pub winner: Winner,
    pub sphere_area: f64,
    pub torus_area: f64,
    pub lambda: f64,
    pub radius: f64,
}

/// Ties go to the sphere.
pub fn compare_at_volume(v: f64) -> Result<Comparison> {
    let lambda = sphere_lambda_for_volume(v)?;
    let radius = torus_radius_for_volume(v)?;
    let sphere_area = sphere_profile(lambda)?.area;
    let torus_area = torus_profile(radius)?.area;
    Ok(Comparison {
        volume: v,
        winner: if sphere_area <= torus_area { Winner::Sphere } else { Winner::Torus },
        sphere_area,
        torus_area,
        lambda,
        radius,
    })
}

/// Sphere area minus torus area, `None` past the sphere family.
pub fn area_difference(v: f64) -> Option<f64> {
    compare_at_volume(v).ok().map(|c| c.sphere_area - c.torus_area)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TransitionKind {
    /// Sphere and torus areas coincide.
    AreaCrossing,
    /// The sphere family ends (lambda reaches 1/2).
    SphereFamilyLimit,
}

#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct Transition {
    pub volume: f64,
    pub kind: TransitionKind,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ScanResult {
    /// Endpoints of the volume interval where the torus has strictly less area.
    pub v_low: f64,
    pub v_high: f64,
    pub transitions: Vec<Transition>,
    pub resolution: usize,
}

#[derive(Clone, Copy, PartialEq, Eq)]
enum State {
    Sphere,
    Torus,
    NoSphere,
}

fn state(v: f64) -> State {
    match area_difference(v) {
        None => State::NoSphere,
        Some(d) if d <= 0.0 => State::Sphere,
        Some(_) => State::Torus,
    }
}

fn bisect(mut a: f64, mut b: f64, sa: State) -> f64 {
    for _ in 0..200 {
        let m = 0.5 * (a + b);
        if m <= a || m >= b {
            break;
        }
        if state(m) == sa {
            a = m;
        } else {
            b = m;
        }
    }
    0.5 * (a + b)
}

/// Dense scan of `[v_min, v_max]` followed by bisection on every change of
/// the winner, including the end of the sphere family.
pub fn scan_range(v_min: f64, v_max: f64, resolution: usize) -> Result<ScanResult> {
    if resolution < 1000 {
        return Err(GeomError::InvalidArgument(format!("resolution must be at least 1000, got {resolution}")));
    }
    if !(0.0 < v_min && v_min < v_max) {
        return Err(GeomError::InvalidArgument("need 0 < v_min < v_max".into()));
    }
    let mut transitions = Vec::new();
    let step = (v_max - v_min) / resolution as f64;
    let mut prev_v = v_min;
    let mut prev = state(v_min);
    for k in 1..=resolution {
        let v = v_min + k as f64 * step;
        let s = state(v);
        if s != prev {
            let x = bisect(prev_v, v, prev);
            let kind = if s == State::NoSphere || prev == State::NoSphere {
                TransitionKind::SphereFamilyLimit
            } else {
                TransitionKind::AreaCrossing
            };
            transitions.push(Transition { volume: x, kind });
        }
        prev = s;
        prev_v = v;
    }
    let v_low = transitions
        .iter()
        .find(|t| t.kind == TransitionKind::AreaCrossing)
        .map(|t| t.volume)
        .ok_or_else(|| GeomError::InvalidArgument("no area crossing in range".into()))?;
    let v_high = transitions
        .iter()
        .find(|t| t.volume > v_low)
        .map(|t| t.volume)
        .unwrap_or(v_max);
    Ok(ScanResult { v_low, v_high, transitions, resolution })
}

/// Scan over `(pi^2, 10 pi^2)`.
pub fn scan_interval(resolution: usize) -> Result<ScanResult> {
    scan_range(PI * PI, 10.0 * PI * PI, resolution)
}

#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct ProfileRow {
    pub volume: f64,
    pub sphere_area: Option<f64>,
    pub torus_area: f64,
    pub winner: Winner,
}

/// Isoperimetric table; past the sphere family the torus wins by default.
pub fn profile_table(v_min: f64, v_max: f64, n: usize) -> Result<Vec<ProfileRow>> {
    if !(0.0 < v_min && v_min <= v_max) || n < 2 {
        return Err(GeomError::InvalidArgument("bad table range".into()));
    }
    (0..n)
        .map(|k| {
            let v = v_min + (v_max - v_min) * k as f64 / (n - 1) as f64;
            let torus_area = torus_profile(torus_radius_for_volume(v)?)?.area;
            Ok(match compare_at_volume(v) {
                Ok(c) => ProfileRow { volume: v, sphere_area: Some(c.sphere_area), torus_area, winner: c.winner },
                Err(_) => ProfileRow { volume: v, sphere_area: None, torus_area, winner: Winner::Torus },
            })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn profile_examples() {
        let s = sphere_profile(1.0).unwrap();
        assert!((s.area - PI * PI).abs() < 1e-14 && (s.volume - 3.0 * PI * PI / 8.0).abs() < 1e-14);
        assert!(sphere_profile(0.5).is_err());
        let t = torus_profile(0.5).unwrap();
        assert!((t.area - 2.0 * PI * PI).abs() < 1e-13 && (t.volume - PI * PI / 2.0).abs() < 1e-14);
    }

    #[test]
    fn comparisons() {
        let pi2 = PI * PI;
        assert_eq!(compare_at_volume(4.0 * pi2).unwrap().winner, Winner::Torus);
        assert_eq!(compare_at_volume(2.0 * pi2).unwrap().winner, Winner::Sphere);
        assert_eq!(compare_at_volume(1.0).unwrap().winner, Winner::Sphere);
        let c = compare_at_volume(27.0 * pi2 / 8.0).unwrap();
        assert!((c.sphere_area - c.torus_area).abs() < 1e-9 * c.torus_area);
        assert!(compare_at_volume(6.0 * pi2).is_err());
    }

    #[test]
    fn scan_finds_interval() {
        let r = scan_interval(10_000).unwrap();
        let pi2 = PI * PI;
        assert!((r.v_low - 27.0 * pi2 / 8.0).abs() < 1e-6);
        assert!((r.v_high - 6.0 * pi2).abs() < 1e-6);
        let crossings = r.transitions.iter().filter(|t| t.kind == TransitionKind::AreaCrossing).count();
        assert_eq!(crossings, 1);
    }
}
