//! Shared fixtures for the benchmarks.

use msgfem_core::{Coefficient, CoefficientKind, Decomposition, TriMesh};

pub struct Fixture {
    pub mesh: TriMesh,
    pub coefficient: Coefficient,
    pub decomposition: Decomposition,
}

impl Fixture {
    /// `n x n` mesh, checkerboard of contrast 1e4, `grid x grid` subdomains with overlap 2.
    pub fn checkerboard(n: usize, grid: usize, oversampling: usize) -> Self {
        let mesh = TriMesh::structured(n).expect("mesh size");
        let kind = CoefficientKind::Checkerboard { contrast: 1e4, block: n / 8 };
        let coefficient = Coefficient::generate(&kind, &mesh).expect("coefficient");
        let decomposition = Decomposition::build(&mesh, grid, 2, oversampling).expect("decomposition");
        Self { mesh, coefficient, decomposition }
    }

    /// Index of a subdomain whose oversampling domain stays away from the boundary, if any.
    pub fn interior_subdomain(&self) -> usize {
        self.decomposition.subdomains().iter().position(|s| !s.oversampled.touches_boundary(&self.mesh)).unwrap_or(0)
    }
}
