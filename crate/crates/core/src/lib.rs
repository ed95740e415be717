//! Multiscale spectral generalized finite elements (MS-GFEM) for weighted
//! symmetric interior-penalty DG discretizations of heterogeneous diffusion
//! problems on the unit square.

pub mod coefficient;
pub mod config;
pub mod decomposition;
pub mod eigen;
pub mod error;
pub mod experiment;
pub mod forms;
pub mod global;
pub mod local;
pub mod mesh;
pub mod quadrature;
pub mod space;
pub mod sparse;
pub mod verification;

pub use coefficient::{Coefficient, CoefficientKind};
pub use config::RunConfig;
pub use decomposition::{Decomposition, ElementSet};
pub use error::{Error, Result};
pub use forms::{Assembler, FormKind, FormMatrix, Source};
pub use global::{MsGfem, MsGfemSolution};
pub use local::{CoarseRule, LocalSpectralData};
pub use mesh::TriMesh;
