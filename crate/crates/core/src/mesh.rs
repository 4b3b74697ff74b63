//! Triangle meshes of swept surfaces and OBJ export.

use std::collections::HashMap;
use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::error::{GeomError, Result};
use crate::space_forms::{Model, SpaceForm, V3, V4};
use crate::spheres::{Plane, Sphere};

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Mesh {
    pub vertices: Vec<V3>,
    pub faces: Vec<[usize; 3]>,
    /// Per-vertex `(|N_h|, <N,T>)`.
    pub attributes: Vec<(f64, f64)>,
}

/// Stereographic projection of the unit 3-sphere from `-base`.
fn stereographic(base: &V4) -> impl Fn(&V4) -> V3 {
    let b = base.normalize();
    let mut basis: Vec<V4> = Vec::with_capacity(3);
    for k in 0..4 {
        let mut e = V4::zeros();
        e[k] = 1.0;
        e -= b * b.dot(&e);
        for f in &basis {
            e -= f * f.dot(&e);
        }
        if e.norm() > 1e-6 && basis.len() < 3 {
            basis.push(e.normalize());
        }
    }
    move |p: &V4| {
        let d = 1.0 + p.dot(&b);
        V3::new(p.dot(&basis[0]) / d, p.dot(&basis[1]) / d, p.dot(&basis[2]) / d)
    }
}

fn embed(space: &SpaceForm, base: &V4) -> Box<dyn Fn(&V4) -> V3> {
    match space.model {
        Model::Sphere3 => Box::new(stereographic(base)),
        _ => Box::new(|p: &V4| V3::new(p[0], p[1], p[2])),
    }
}

fn quad(faces: &mut Vec<[usize; 3]>, a: usize, b: usize, c: usize, d: usize) {
    faces.push([a, b, c]);
    faces.push([a, c, d]);
}

impl Mesh {
    /// Closed mesh with one vertex per pole and triangle fans around them.
    pub fn from_sphere(sphere: &Sphere) -> Self {
        let f = embed(&sphere.space, &sphere.base);
        let (nt_, ns) = (sphere.n_theta, sphere.n_s);
        let mut vertices = vec![f(&sphere.point(0, 0))];
        let mut attributes = vec![(0.0, 1.0)];
        for i in 0..nt_ {
            for j in 1..ns - 1 {
                vertices.push(f(&sphere.point(i, j)));
                let pr = sphere.profile(sphere.svals[j]);
                attributes.push((pr.nh, pr.nt));
            }
        }
        let north = vertices.len();
        vertices.push(f(&sphere.north_pole()));
        attributes.push((0.0, -1.0));
        let ring = ns - 2;
        let idx = |i: usize, j: usize| 1 + (i % nt_) * ring + (j - 1);
        let mut faces = Vec::new();
        for i in 0..nt_ {
            faces.push([0, idx(i + 1, 1), idx(i, 1)]);
            for j in 1..ns - 2 {
                quad(&mut faces, idx(i, j), idx(i + 1, j), idx(i + 1, j + 1), idx(i, j + 1));
            }
            faces.push([north, idx(i, ns - 2), idx(i + 1, ns - 2)]);
        }
        Mesh { vertices, faces, attributes }
    }

    /// Open disk with a fan at the singular point.
    pub fn from_plane(plane: &Plane) -> Self {
        let f = embed(&plane.space, &plane.base);
        let (nt_, ns) = (plane.n_theta, plane.n_s);
        let mut vertices = vec![f(&plane.points[0])];
        let mut attributes = vec![(0.0, 1.0)];
        for i in 0..nt_ {
            for j in 1..ns {
                vertices.push(f(&plane.points[i * ns + j]));
                attributes.push((f64::NAN, f64::NAN));
            }
        }
        let ring = ns - 1;
        let idx = |i: usize, j: usize| 1 + (i % nt_) * ring + (j - 1);
        let mut faces = Vec::new();
        for i in 0..nt_ {
            faces.push([0, idx(i + 1, 1), idx(i, 1)]);
            for j in 1..ns - 1 {
                quad(&mut faces, idx(i, j), idx(i + 1, j), idx(i + 1, j + 1), idx(i, j + 1));
            }
        }
        Mesh { vertices, faces, attributes }
    }

    fn edge_counts(&self) -> HashMap<(usize, usize), usize> {
        let mut m = HashMap::new();
        for f in &self.faces {
            for k in 0..3 {
                let (a, b) = (f[k], f[(k + 1) % 3]);
                *m.entry((a.min(b), a.max(b))).or_insert(0) += 1;
            }
        }
        m
    }

    pub fn euler_characteristic(&self) -> i64 {
        self.vertices.len() as i64 - self.edge_counts().len() as i64 + self.faces.len() as i64
    }

    /// Every edge shared by exactly two faces, with opposite orientations.
    pub fn is_watertight(&self) -> bool {
        let mut directed = HashMap::new();
        for f in &self.faces {
            for k in 0..3 {
                *directed.entry((f[k], f[(k + 1) % 3])).or_insert(0usize) += 1;
            }
        }
        directed.iter().all(|(&(a, b), &c)| c == 1 && directed.get(&(b, a)) == Some(&1))
    }

    pub fn boundary_loops(&self) -> usize {
        let boundary: Vec<(usize, usize)> =
            self.edge_counts().into_iter().filter(|&(_, c)| c == 1).map(|(e, _)| e).collect();
        let mut adj: HashMap<usize, Vec<usize>> = HashMap::new();
        for &(a, b) in &boundary {
            adj.entry(a).or_default().push(b);
            adj.entry(b).or_default().push(a);
        }
        let mut seen = std::collections::HashSet::new();
        let mut loops = 0;
        for &start in adj.keys() {
            if !seen.insert(start) {
                continue;
            }
            loops += 1;
            let mut stack = vec![start];
            while let Some(v) = stack.pop() {
                for &w in &adj[&v] {
                    if seen.insert(w) {
                        stack.push(w);
                    }
                }
            }
        }
        loops
    }

    pub fn write_obj<W: Write>(&self, mut w: W) -> Result<()> {
        let io = |e: std::io::Error| GeomError::Io(e.to_string());
        writeln!(w, "# vertices {} faces {}", self.vertices.len(), self.faces.len()).map_err(io)?;
        for v in &self.vertices {
            writeln!(w, "v {} {} {}", v[0], v[1], v[2]).map_err(io)?;
        }
        for f in &self.faces {
            writeln!(w, "f {} {} {}", f[0] + 1, f[1] + 1, f[2] + 1).map_err(io)?;
        }
        Ok(())
    }

    /// Sidecar table `vertex,nh,nt`.
    pub fn write_attributes_csv<W: Write>(&self, w: W) -> Result<()> {
        let io = |e: csv::Error| GeomError::Io(e.to_string());
        let mut wr = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(w);
        wr.write_record(["vertex", "nh", "nt"]).map_err(io)?;
        for (k, (nh, nt)) in self.attributes.iter().enumerate() {
            wr.write_record([(k + 1).to_string(), nh.to_string(), nt.to_string()]).map_err(io)?;
        }
        wr.flush().map_err(|e| GeomError::Io(e.to_string()))?;
        Ok(())
    }
}
