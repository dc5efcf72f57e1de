//! Hardy constants, singular-weight quotients and their extremals on graded meshes.

pub mod domain;
pub mod energy;
pub mod error;
pub mod lab;
pub mod mesh;
pub mod quadrature;
pub mod run;
pub mod solvers;
pub mod sparse;
pub mod study;

pub use domain::{DomainSpec, Point};
pub use energy::{EnergyBreakdown, ProblemSpec, WeightKind};
pub use error::{Error, Result};
pub use mesh::{build_mesh, Field, Mesh};
pub use solvers::{SolveOptions, SolveResult};
