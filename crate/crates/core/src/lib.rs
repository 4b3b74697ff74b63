//! Constant mean curvature spheres in 3-dimensional Sasakian space forms:
//! model spaces, CC-geodesics, Jacobi fields, the sphere family, its
//! stability analysis and an isoperimetric comparison.

pub mod config;
pub mod error;
pub mod geodesics;
pub mod isoperimetry;
pub mod jacobi;
pub mod mesh;
pub mod quad;
pub mod spheres;
pub mod stability;
pub mod space_forms;

pub use config::{RunConfig, RunRecord, VERSION};
pub use error::{GeomError, Result};
pub use space_forms::{make_space, ChartPoint, Model, SpaceForm, V3, V4};
