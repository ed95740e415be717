//! Mesh-resolved, piecewise-constant diffusion coefficients.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::mesh::{FaceRef, TriMesh};

/// Generator for a coefficient field. All kinds produce one value per square,
/// so both triangles of a square carry the same value.
#[derive(Debug, Clone, PartialEq)]
pub enum CoefficientKind {
    Constant(f64),
    /// Blocks of `block x block` squares alternating between 1 and `contrast`.
    Checkerboard {
        contrast: f64,
        block: usize,
    },
    /// `count` horizontal channels of value `contrast` in a background of 1.
    Channels {
        contrast: f64,
        count: usize,
    },
    /// Per-square values `exp(U(ln min, ln max))` drawn from ChaCha8 seeded with `seed`.
    LogUniform {
        min: f64,
        max: f64,
        seed: u64,
    },
}

#[derive(Debug, Clone, PartialEq)]
pub struct Coefficient {
    values: Vec<f64>,
    min: f64,
    max: f64,
}

impl Coefficient {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::InvalidCoefficient("no values".into()));
        }
        if let Some(bad) = values.iter().find(|v| !(v.is_finite() && **v > 0.0)) {
            return Err(Error::InvalidCoefficient(format!("nonpositive value {bad}")));
        }
        let min = values.iter().copied().fold(f64::INFINITY, f64::min);
        let max = values.iter().copied().fold(0.0, f64::max);
        Ok(Self { values, min, max })
    }

    pub fn generate(kind: &CoefficientKind, mesh: &TriMesh) -> Result<Self> {
        let n = mesh.subdivisions();
        let per_square: Vec<f64> = match *kind {
            CoefficientKind::Constant(c) => {
                if c <= 0.0 {
                    return Err(Error::InvalidCoefficient(format!("constant {c} must be positive")));
                }
                vec![c; n * n]
            }
            CoefficientKind::Checkerboard { contrast, block } => {
                check_contrast(contrast)?;
                if block == 0 || !n.is_multiple_of(block) {
                    return Err(Error::InvalidCoefficient(format!("block size {block} must divide the mesh size {n}")));
                }
                (0..n * n)
                    .map(|s| {
                        let (i, j) = (s % n / block, s / n / block);
                        if (i + j) % 2 == 1 {
                            contrast
                        } else {
                            1.0
                        }
                    })
                    .collect()
            }
            CoefficientKind::Channels { contrast, count } => {
                check_contrast(contrast)?;
                let stripes = 2 * count + 1;
                if count == 0 || stripes > n {
                    return Err(Error::InvalidCoefficient(format!("{count} channels do not fit on a {n}x{n} mesh")));
                }
                (0..n * n).map(|s| if (s / n * stripes / n) % 2 == 1 { contrast } else { 1.0 }).collect()
            }
            CoefficientKind::LogUniform { min, max, seed } => {
                if !(min > 0.0 && max >= min) {
                    return Err(Error::InvalidCoefficient(format!("bounds [{min}, {max}]")));
                }
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                let (lo, hi) = (min.ln(), max.ln());
                (0..n * n).map(|_| if hi > lo { rng.random_range(lo..hi).exp() } else { min }).collect()
            }
        };
        let values = (0..mesh.num_elements()).map(|e| per_square[e / 2]).collect();
        Self::new(values)
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn value(&self, e: usize) -> f64 {
        self.values[e]
    }

    pub fn min(&self) -> f64 {
        self.min
    }

    pub fn max(&self) -> f64 {
        self.max
    }

    pub fn contrast(&self) -> f64 {
        self.max / self.min
    }

    /// Same field multiplied by `s > 0`.
    pub fn scaled(&self, s: f64) -> Result<Self> {
        Self::new(self.values.iter().map(|v| v * s).collect())
    }

    pub fn to_text(&self) -> String {
        self.values.iter().map(|v| format!("{v:.17e}\n")).collect()
    }
}

fn check_contrast(contrast: f64) -> Result<()> {
    if contrast >= 1.0 && contrast.is_finite() {
        Ok(())
    } else {
        Err(Error::InvalidCoefficient(format!("contrast {contrast} must be at least 1")))
    }
}

/// Per-face coefficient and geometry.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FaceData {
    pub nu1: f64,
    pub nu2: f64,
    pub diameter: f64,
    /// Unit normal pointing out of element 1 (the lower-indexed element).
    pub normal: [f64; 2],
}

/// `nu1`/`nu2` for interior faces follow the element ordering of the face;
/// boundary faces repeat the single adjacent value.
pub fn face_data(mesh: &TriMesh, coefficient: &Coefficient, face: FaceRef) -> FaceData {
    match face {
        FaceRef::Interior(i) => {
            let f = &mesh.interior_faces()[i];
            FaceData {
                nu1: coefficient.value(f.elements[0]),
                nu2: coefficient.value(f.elements[1]),
                diameter: f.diameter,
                normal: mesh.outward_normal(f.elements[0], f.vertices),
            }
        }
        FaceRef::Boundary(i) => {
            let f = &mesh.boundary_faces()[i];
            let nu = coefficient.value(f.element);
            FaceData { nu1: nu, nu2: nu, diameter: f.diameter, normal: mesh.outward_normal(f.element, f.vertices) }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn constant_field() {
        let mesh = TriMesh::structured(4).unwrap();
        let c = Coefficient::generate(&CoefficientKind::Constant(1.0), &mesh).unwrap();
        assert!(c.values().iter().all(|&v| v == 1.0));
        assert_eq!((c.min(), c.max()), (1.0, 1.0));
    }

    #[test]
    fn checkerboard_alternates_by_square_parity() {
        let mesh = TriMesh::structured(4).unwrap();
        let kind = CoefficientKind::Checkerboard { contrast: 1e4, block: 1 };
        let c = Coefficient::generate(&kind, &mesh).unwrap();
        for e in 0..mesh.num_elements() {
            let (i, j) = mesh.square_of(e);
            let expected = if (i + j) % 2 == 1 { 1e4 } else { 1.0 };
            assert_eq!(c.value(e), expected);
        }
        assert_eq!(c.contrast(), 1e4);
    }

    #[test]
    fn checkerboard_block_must_divide() {
        let mesh = TriMesh::structured(6).unwrap();
        let kind = CoefficientKind::Checkerboard { contrast: 10.0, block: 4 };
        assert!(Coefficient::generate(&kind, &mesh).is_err());
    }

    #[test]
    fn log_uniform_is_deterministic_and_bounded() {
        let mesh = TriMesh::structured(8).unwrap();
        let kind = CoefficientKind::LogUniform { min: 1.0, max: 1e3, seed: 7 };
        let a = Coefficient::generate(&kind, &mesh).unwrap();
        let b = Coefficient::generate(&kind, &mesh).unwrap();
        assert_eq!(a.values(), b.values());
        assert!(a.values().iter().all(|&v| (1.0..=1e3).contains(&v)));
        let other = CoefficientKind::LogUniform { min: 1.0, max: 1e3, seed: 8 };
        assert_ne!(Coefficient::generate(&other, &mesh).unwrap().values(), a.values());
    }

    #[test]
    fn nonpositive_bounds_rejected() {
        let mesh = TriMesh::structured(2).unwrap();
        assert!(Coefficient::generate(&CoefficientKind::Constant(0.0), &mesh).is_err());
        let kind = CoefficientKind::LogUniform { min: -1.0, max: 1.0, seed: 0 };
        assert!(Coefficient::generate(&kind, &mesh).is_err());
        assert!(Coefficient::new(vec![1.0, -2.0]).is_err());
    }

    #[test]
    fn channels_count() {
        let mesh = TriMesh::structured(14).unwrap();
        let kind = CoefficientKind::Channels { contrast: 100.0, count: 3 };
        let c = Coefficient::generate(&kind, &mesh).unwrap();
        // count the high rows along the first column of squares
        let mut runs = 0;
        let mut prev = false;
        for j in 0..14 {
            let high = c.value(2 * j * 14) > 1.0;
            if high && !prev {
                runs += 1;
            }
            prev = high;
        }
        assert_eq!(runs, 3);
    }

    #[test]
    fn face_data_conventions() {
        let mesh = TriMesh::structured(4).unwrap();
        let values = (0..mesh.num_elements()).map(|e| 1.0 + e as f64).collect();
        let c = Coefficient::new(values).unwrap();
        for i in 0..mesh.boundary_faces().len() {
            let fd = face_data(&mesh, &c, FaceRef::Boundary(i));
            let e = mesh.boundary_faces()[i].element;
            assert_eq!((fd.nu1, fd.nu2), (c.value(e), c.value(e)));
        }
        for i in 0..mesh.interior_faces().len() {
            let f = &mesh.interior_faces()[i];
            let fd = face_data(&mesh, &c, FaceRef::Interior(i));
            assert_eq!((fd.nu1, fd.nu2), (c.value(f.elements[0]), c.value(f.elements[1])));
            assert!(((fd.normal[0].powi(2) + fd.normal[1].powi(2)).sqrt() - 1.0).abs() < 1e-14);
            // normal points from element 1 towards element 2
            let (c1, c2) = (mesh.centroid(f.elements[0]), mesh.centroid(f.elements[1]));
            assert!((c2[0] - c1[0]) * fd.normal[0] + (c2[1] - c1[1]) * fd.normal[1] > 0.0);
        }
    }

    #[test]
    fn boundary_face_of_nu_three() {
        let mesh = TriMesh::structured(2).unwrap();
        let c = Coefficient::generate(&CoefficientKind::Constant(3.0), &mesh).unwrap();
        let fd = face_data(&mesh, &c, FaceRef::Boundary(0));
        assert_eq!((fd.nu1, fd.nu2, fd.diameter), (3.0, 3.0, 0.5));
    }
}
