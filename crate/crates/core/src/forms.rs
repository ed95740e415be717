//! Weighted symmetric interior-penalty forms on mesh-resolved subdomains.
//!
//! Dofs are nodal values of discontinuous piecewise-linear functions: element
//! at position `k` of a subdomain owns local dofs `3k..3k+3`, ordered like the
//! element's vertices.
//!
//! Faces enter a subdomain form as follows: an interior face counts only when
//! both neighbours lie in the subdomain, and a face on the outer boundary
//! counts when its element does. Faces on the artificial boundary of the
//! subdomain are dropped.

use crate::coefficient::{face_data, Coefficient};
use crate::decomposition::ElementSet;
use crate::error::{Error, Result};
use crate::mesh::{FaceRef, Point, TriMesh};
use crate::quadrature;
use crate::sparse::CsrMatrix;

/// Face penalty weight `gamma0^2 / h_F * 2 nu1 nu2 / (nu1 + nu2)`.
pub fn gamma_sq(nu1: f64, nu2: f64, h_face: f64, gamma0: f64) -> Result<f64> {
    if !(nu1 > 0.0 && nu2 > 0.0 && h_face > 0.0 && gamma0 > 0.0) {
        return Err(Error::InvalidParameter(format!(
            "penalty inputs must be positive (nu1={nu1}, nu2={nu2}, h_F={h_face}, gamma0={gamma0})"
        )));
    }
    Ok(penalty_weight(nu1, nu2, h_face, gamma0))
}

fn penalty_weight(nu1: f64, nu2: f64, h_face: f64, gamma0: f64) -> f64 {
    gamma0 * gamma0 / h_face * (2.0 * nu1 * nu2 / (nu1 + nu2))
}

/// Weights of the weighted sum `w1 u1 + w2 u2`; they always add up to two.
pub fn weighted_avg_weights(nu1: f64, nu2: f64) -> (f64, f64) {
    let s = nu1 + nu2;
    (2.0 * nu2 / s, 2.0 * nu1 / s)
}

/// Local dof numbering of a subdomain.
#[derive(Debug, Clone, Copy)]
pub struct DofMap<'a> {
    domain: &'a ElementSet,
}

impl<'a> DofMap<'a> {
    pub fn new(domain: &'a ElementSet) -> Self {
        Self { domain }
    }

    pub fn num_dofs(&self) -> usize {
        3 * self.domain.len()
    }

    pub fn element_dofs(&self, e: usize) -> Option<[usize; 3]> {
        self.domain.position(e).map(|k| [3 * k, 3 * k + 1, 3 * k + 2])
    }

    /// Local dofs of all elements of `sub` that belong to the domain, ascending.
    pub fn dofs_of(&self, sub: &ElementSet) -> Vec<usize> {
        sub.iter().filter_map(|e| self.element_dofs(e)).flatten().collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FormKind {
    /// The full DG form `B_D`.
    Bilinear,
    /// The positive semidefinite form `B+_D`.
    Positive,
    /// The `H(D)` inner product, `B+_D` plus the mass matrix.
    Inner,
    /// Interior penalty plus the doubled boundary penalty.
    Penalty,
    /// Symmetrised consistency terms; `B = Stiffness + Penalty - Consistency`.
    Consistency,
    Stiffness,
    Mass,
}

#[derive(Debug, Clone, Copy)]
struct Terms {
    stiffness: bool,
    mass: bool,
    interior_penalty: f64,
    interior_consistency: f64,
    boundary_penalty: f64,
    boundary_consistency: f64,
}

impl FormKind {
    fn terms(self) -> Terms {
        let none = Terms {
            stiffness: false,
            mass: false,
            interior_penalty: 0.0,
            interior_consistency: 0.0,
            boundary_penalty: 0.0,
            boundary_consistency: 0.0,
        };
        match self {
            FormKind::Bilinear => Terms {
                stiffness: true,
                interior_penalty: 1.0,
                interior_consistency: -1.0,
                boundary_penalty: 2.0,
                boundary_consistency: -1.0,
                ..none
            },
            FormKind::Positive => Terms { stiffness: true, interior_penalty: 1.0, boundary_penalty: 1.0, ..none },
            FormKind::Inner => {
                Terms { stiffness: true, mass: true, interior_penalty: 1.0, boundary_penalty: 1.0, ..none }
            }
            FormKind::Penalty => Terms { interior_penalty: 1.0, boundary_penalty: 2.0, ..none },
            FormKind::Consistency => Terms { interior_consistency: 1.0, boundary_consistency: 1.0, ..none },
            FormKind::Stiffness => Terms { stiffness: true, ..none },
            FormKind::Mass => Terms { mass: true, ..none },
        }
    }
}

/// Symmetric sparse matrix of one form over the local dofs of a subdomain.
#[derive(Debug, Clone)]
pub struct FormMatrix {
    pub kind: FormKind,
    pub matrix: CsrMatrix,
}

impl FormMatrix {
    pub fn dim(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn apply(&self, u: &[f64]) -> Vec<f64> {
        self.matrix.mul_vec(u)
    }

    pub fn bilinear(&self, u: &[f64], v: &[f64]) -> f64 {
        self.matrix.bilinear(u, v)
    }

    /// Square root of the quadratic form; fails if it is clearly negative.
    pub fn norm(&self, u: &[f64]) -> Result<f64> {
        if u.len() != self.dim() {
            return Err(Error::DimensionMismatch { expected: self.dim(), got: u.len() });
        }
        let q = self.matrix.quadratic(u);
        let scale = self.matrix.max_abs() * u.iter().map(|x| x * x).sum::<f64>();
        if q < -1e-10 * scale.max(1.0) {
            return Err(Error::Indefinite(q));
        }
        Ok(q.max(0.0).sqrt())
    }
}

/// Assembly context: mesh, coefficient and penalty parameter.
#[derive(Debug, Clone, Copy)]
pub struct Assembler<'a> {
    pub mesh: &'a TriMesh,
    pub coefficient: &'a Coefficient,
    pub gamma0: f64,
}

impl<'a> Assembler<'a> {
    pub fn new(mesh: &'a TriMesh, coefficient: &'a Coefficient, gamma0: f64) -> Result<Self> {
        if !(gamma0 > 0.0 && gamma0.is_finite()) {
            return Err(Error::InvalidParameter(format!("gamma0 = {gamma0} must be positive")));
        }
        if coefficient.values().len() != mesh.num_elements() {
            return Err(Error::DimensionMismatch { expected: mesh.num_elements(), got: coefficient.values().len() });
        }
        Ok(Self { mesh, coefficient, gamma0 })
    }

    pub fn assemble(&self, kind: FormKind, domain: &ElementSet) -> Result<FormMatrix> {
        if domain.is_empty() {
            return Err(Error::EmptyDomain);
        }
        let triplets = self.triplets(kind.terms(), domain, None);
        let n = 3 * domain.len();
        Ok(FormMatrix { kind, matrix: CsrMatrix::from_triplets(n, n, &triplets) })
    }

    pub fn bilinear(&self, domain: &ElementSet) -> Result<FormMatrix> {
        self.assemble(FormKind::Bilinear, domain)
    }

    pub fn positive(&self, domain: &ElementSet) -> Result<FormMatrix> {
        self.assemble(FormKind::Positive, domain)
    }

    pub fn inner(&self, domain: &ElementSet) -> Result<FormMatrix> {
        self.assemble(FormKind::Inner, domain)
    }

    pub fn mass(&self, domain: &ElementSet) -> Result<FormMatrix> {
        self.assemble(FormKind::Mass, domain)
    }

    /// Contribution of a single face to `kind` over `domain` (zero if the
    /// face does not belong to the domain's face sets).
    pub fn face_contribution(&self, kind: FormKind, domain: &ElementSet, face: FaceRef) -> CsrMatrix {
        let mut terms = kind.terms();
        terms.stiffness = false;
        terms.mass = false;
        let triplets = self.triplets(terms, domain, Some(face));
        let n = 3 * domain.len();
        CsrMatrix::from_triplets(n, n, &triplets)
    }

    #[allow(clippy::needless_range_loop)]
    fn triplets(&self, terms: Terms, domain: &ElementSet, only: Option<FaceRef>) -> Vec<(usize, usize, f64)> {
        let mesh = self.mesh;
        let mut pos = vec![usize::MAX; mesh.num_elements()];
        for (k, e) in domain.iter().enumerate() {
            pos[e] = k;
        }
        let mut t = Vec::new();

        if terms.stiffness || terms.mass {
            for (k, e) in domain.iter().enumerate() {
                let area = mesh.area(e);
                let nu = self.coefficient.value(e);
                let g = mesh.basis_gradients(e);
                for a in 0..3 {
                    for b in 0..3 {
                        let mut v = 0.0;
                        if terms.stiffness {
                            v += nu * area * (g[a][0] * g[b][0] + g[a][1] * g[b][1]);
                        }
                        if terms.mass {
                            v += area / 12.0 * if a == b { 2.0 } else { 1.0 };
                        }
                        t.push((3 * k + a, 3 * k + b, v));
                    }
                }
            }
        }

        let wants = |f: FaceRef| only.is_none_or(|o| o == f);
        let has_interior = terms.interior_penalty != 0.0 || terms.interior_consistency != 0.0;
        let has_boundary = terms.boundary_penalty != 0.0 || terms.boundary_consistency != 0.0;

        if has_interior {
            for (i, face) in mesh.interior_faces().iter().enumerate() {
                let [e1, e2] = face.elements;
                if pos[e1] == usize::MAX || pos[e2] == usize::MAX || !wants(FaceRef::Interior(i)) {
                    continue;
                }
                let fd = face_data(mesh, self.coefficient, FaceRef::Interior(i));
                let len = fd.diameter;
                let elems = [e1, e2];
                let base = [3 * pos[e1], 3 * pos[e2]];
                let lv = elems.map(|e| face.vertices.map(|v| mesh.local_vertex(e, v).unwrap()));
                let sign = [1.0, -1.0];

                if terms.interior_penalty != 0.0 {
                    let gsq = penalty_weight(fd.nu1, fd.nu2, len, self.gamma0) * terms.interior_penalty;
                    for s in 0..2 {
                        for r in 0..2 {
                            for a in 0..2 {
                                for b in 0..2 {
                                    let m = len / 6.0 * if a == b { 2.0 } else { 1.0 };
                                    t.push((base[s] + lv[s][a], base[r] + lv[r][b], gsq * sign[s] * sign[r] * m));
                                }
                            }
                        }
                    }
                }
                if terms.interior_consistency != 0.0 {
                    let (w1, w2) = weighted_avg_weights(fd.nu1, fd.nu2);
                    let flux_weight = [0.5 * w1 * fd.nu1, 0.5 * w2 * fd.nu2];
                    let grads = elems.map(|e| mesh.basis_gradients(e));
                    for s in 0..2 {
                        for a in 0..2 {
                            let row = base[s] + lv[s][a];
                            for r in 0..2 {
                                for c in 0..3 {
                                    let dn = grads[r][c][0] * fd.normal[0] + grads[r][c][1] * fd.normal[1];
                                    let v = terms.interior_consistency * sign[s] * 0.5 * len * flux_weight[r] * dn;
                                    let col = base[r] + c;
                                    t.push((row, col, v));
                                    t.push((col, row, v));
                                }
                            }
                        }
                    }
                }
            }
        }

        if has_boundary {
            for (i, face) in mesh.boundary_faces().iter().enumerate() {
                let e = face.element;
                if pos[e] == usize::MAX || !wants(FaceRef::Boundary(i)) {
                    continue;
                }
                let fd = face_data(mesh, self.coefficient, FaceRef::Boundary(i));
                let len = fd.diameter;
                let base = 3 * pos[e];
                let lv = face.vertices.map(|v| mesh.local_vertex(e, v).unwrap());
                if terms.boundary_penalty != 0.0 {
                    let gsq = penalty_weight(fd.nu1, fd.nu2, len, self.gamma0) * terms.boundary_penalty;
                    for a in 0..2 {
                        for b in 0..2 {
                            let m = len / 6.0 * if a == b { 2.0 } else { 1.0 };
                            t.push((base + lv[a], base + lv[b], gsq * m));
                        }
                    }
                }
                if terms.boundary_consistency != 0.0 {
                    let g = mesh.basis_gradients(e);
                    for a in 0..2 {
                        let row = base + lv[a];
                        for (c, gc) in g.iter().enumerate() {
                            let dn = gc[0] * fd.normal[0] + gc[1] * fd.normal[1];
                            let v = terms.boundary_consistency * 0.5 * len * fd.nu1 * dn;
                            t.push((row, base + c, v));
                            t.push((base + c, row, v));
                        }
                    }
                }
            }
        }
        t
    }
}

/// Right-hand sides available to experiments.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Source {
    Constant(f64),
    /// `2 pi^2 sin(pi x) sin(pi y)`, the load of `sin(pi x) sin(pi y)` for unit diffusion.
    Sine,
}

impl Source {
    pub fn eval(&self, p: Point) -> f64 {
        use std::f64::consts::PI;
        match *self {
            Source::Constant(c) => c,
            Source::Sine => 2.0 * PI * PI * (PI * p[0]).sin() * (PI * p[1]).sin(),
        }
    }
}

/// `F_D(v) = int_D f v` for every local basis function of `domain`.
pub fn assemble_load<F: Fn(Point) -> f64>(mesh: &TriMesh, f: F, domain: &ElementSet) -> Vec<f64> {
    let mut load = vec![0.0; 3 * domain.len()];
    for (k, e) in domain.iter().enumerate() {
        for a in 0..3 {
            load[3 * k + a] = quadrature::integrate(mesh, e, |x, bary| f(x) * bary[a]);
        }
    }
    load
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NormKind {
    Positive,
    Inner,
    L2,
}

/// Norm of a dof vector on `domain`, assembling the required form.
pub fn energy_norm(assembler: &Assembler<'_>, domain: &ElementSet, which: NormKind, u: &[f64]) -> Result<f64> {
    let kind = match which {
        NormKind::Positive => FormKind::Positive,
        NormKind::Inner => FormKind::Inner,
        NormKind::L2 => FormKind::Mass,
    };
    assembler.assemble(kind, domain)?.norm(u)
}
