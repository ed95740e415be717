//! Local problems on an oversampling domain: particular solution, discretely
//! harmonic space and the spectral eigenproblem that selects coarse modes.

use nalgebra::{DMatrix, DVector};

use crate::decomposition::{Decomposition, ElementSet};
use crate::eigen::{deflated_generalized_eigen, GeneralizedEigen};
use crate::error::{Error, Result};
use crate::forms::{assemble_load, Assembler, DofMap, FormMatrix};
use crate::mesh::Point;
use crate::space::{PartitionOfUnity, SubspaceMask};
use crate::sparse::EnvelopeCholesky;

/// `B` on an oversampling domain together with a factorization of its `H0` block.
#[derive(Debug, Clone)]
pub struct OversampledSpace {
    domain: ElementSet,
    bilinear: FormMatrix,
    interior: Vec<usize>,
    layer: Vec<usize>,
    factor: Option<EnvelopeCholesky>,
}

impl OversampledSpace {
    pub fn new(assembler: &Assembler<'_>, domain: &ElementSet) -> Result<Self> {
        let bilinear = assembler.bilinear(domain)?;
        let mask = SubspaceMask::new(assembler.mesh, domain);
        let interior = mask.interior_dofs();
        let layer = mask.layer_dofs();
        let factor = if interior.is_empty() {
            None
        } else {
            Some(EnvelopeCholesky::factor(&bilinear.matrix.submatrix(&interior, &interior))?)
        };
        Ok(Self { domain: domain.clone(), bilinear, interior, layer, factor })
    }

    pub fn domain(&self) -> &ElementSet {
        &self.domain
    }

    pub fn dim(&self) -> usize {
        self.bilinear.dim()
    }

    pub fn bilinear(&self) -> &FormMatrix {
        &self.bilinear
    }

    pub fn interior_dofs(&self) -> &[usize] {
        &self.interior
    }

    pub fn layer_dofs(&self) -> &[usize] {
        &self.layer
    }

    /// `x` in `H0` with `(B x)_i = rhs_i` for every interior dof `i`.
    pub fn solve_h0(&self, rhs: &[f64]) -> Result<Vec<f64>> {
        if rhs.len() != self.dim() {
            return Err(Error::DimensionMismatch { expected: self.dim(), got: rhs.len() });
        }
        let mut x = vec![0.0; self.dim()];
        if let Some(factor) = &self.factor {
            let b: Vec<f64> = self.interior.iter().map(|&i| rhs[i]).collect();
            for (&i, v) in self.interior.iter().zip(factor.solve(&b)) {
                x[i] = v;
            }
        }
        Ok(x)
    }

    /// Largest `|B(v, e_i)|` over interior unit dofs `e_i`.
    pub fn harmonic_residual(&self, v: &[f64]) -> f64 {
        let bv = self.bilinear.apply(v);
        self.interior.iter().map(|&i| bv[i].abs()).fold(0.0, f64::max)
    }

    /// Relative residual `|B_II x_I - b_I| / |b_I|` of an `H0` solve.
    pub fn h0_residual(&self, x: &[f64], rhs: &[f64]) -> f64 {
        let bx = self.bilinear.apply(x);
        let num: f64 = self.interior.iter().map(|&i| (bx[i] - rhs[i]).powi(2)).sum();
        let den: f64 = self.interior.iter().map(|&i| rhs[i].powi(2)).sum();
        if den == 0.0 {
            num.sqrt()
        } else {
            (num / den).sqrt()
        }
    }

    /// One discrete harmonic extension per layer dof, in layer-dof order.
    pub fn harmonic_basis(&self) -> DMatrix<f64> {
        let n = self.dim();
        let mut basis = DMatrix::zeros(n, self.layer.len());
        for (k, &l) in self.layer.iter().enumerate() {
            basis[(l, k)] = 1.0;
        }
        if let Some(factor) = &self.factor {
            let coupling = self.bilinear.matrix.submatrix(&self.interior, &self.layer).to_dense();
            let interior = factor.solve_columns(&coupling);
            for (r, &i) in self.interior.iter().enumerate() {
                for k in 0..self.layer.len() {
                    basis[(i, k)] = -interior[(r, k)];
                }
            }
        }
        basis
    }

    /// Harmonic function with the given values on the layer dofs.
    pub fn harmonic_extension(&self, layer_values: &[f64]) -> Result<Vec<f64>> {
        if layer_values.len() != self.layer.len() {
            return Err(Error::DimensionMismatch { expected: self.layer.len(), got: layer_values.len() });
        }
        let mut u = vec![0.0; self.dim()];
        for (&l, &v) in self.layer.iter().zip(layer_values) {
            u[l] = v;
        }
        let bu = self.bilinear.apply(&u);
        let correction = self.solve_h0(&bu)?;
        for (x, c) in u.iter_mut().zip(correction) {
            *x -= c;
        }
        Ok(u)
    }

    /// `u = u0 + uh` with `u0` in `H0` and `uh` discretely harmonic.
    pub fn split(&self, u: &[f64]) -> Result<(Vec<f64>, Vec<f64>)> {
        let u0 = self.solve_h0(&self.bilinear.apply(u))?;
        let uh = u.iter().zip(&u0).map(|(a, b)| a - b).collect();
        Ok((u0, uh))
    }
}

/// `psi` in `H0(omega*)` with `B(psi, v) = F(v)` for `v` in `H0(omega*)`, restricted to `omega`.
pub fn particular_solution<F: Fn(Point) -> f64>(
    assembler: &Assembler<'_>,
    source: F,
    omega: &ElementSet,
    space: &OversampledSpace,
) -> Result<Vec<f64>> {
    let load = assemble_load(assembler.mesh, source, space.domain());
    let psi = space.solve_h0(&load)?;
    crate::space::restrict(&psi, space.domain(), omega)
}

/// Basis of the discretely harmonic functions on `oversampled`.
pub fn harmonic_basis(assembler: &Assembler<'_>, oversampled: &ElementSet) -> Result<DMatrix<f64>> {
    Ok(OversampledSpace::new(assembler, oversampled)?.harmonic_basis())
}

/// Rows of `omega*`-dof vectors that belong to `omega`, scaled by `chi` at each dof's vertex.
pub fn weighted_restriction(
    assembler: &Assembler<'_>,
    chi: &[f64],
    omega: &ElementSet,
    oversampled: &ElementSet,
    vectors: &DMatrix<f64>,
) -> Result<DMatrix<f64>> {
    let outer = DofMap::new(oversampled);
    if vectors.nrows() != outer.num_dofs() {
        return Err(Error::DimensionMismatch { expected: outer.num_dofs(), got: vectors.nrows() });
    }
    let mut out = DMatrix::zeros(3 * omega.len(), vectors.ncols());
    for (k, e) in omega.iter().enumerate() {
        let dofs = outer.element_dofs(e).ok_or(Error::NotNested(e))?;
        for (a, &v) in assembler.mesh.elements()[e].iter().enumerate() {
            out.row_mut(3 * k + a).copy_from(&(vectors.row(dofs[a]) * chi[v]));
        }
    }
    Ok(out)
}

/// `A = Qt B+_omega Q` with `Q = P_j R Phi`, and `M = Phit B+_omega* Phi`.
pub fn spectral_pencil(
    assembler: &Assembler<'_>,
    chi: &[f64],
    omega: &ElementSet,
    oversampled: &ElementSet,
    basis: &DMatrix<f64>,
) -> Result<(DMatrix<f64>, DMatrix<f64>)> {
    let positive_outer = assembler.positive(oversampled)?;
    let m = basis.transpose() * positive_outer.matrix.mul_dense(basis);
    let q = weighted_restriction(assembler, chi, omega, oversampled, basis)?;
    let positive_inner = assembler.positive(omega)?;
    let a = q.transpose() * positive_inner.matrix.mul_dense(&q);
    Ok(((&a + a.transpose()) * 0.5, (&m + m.transpose()) * 0.5))
}

/// Generalized eigenpairs of the local spectral problem, coefficients against `basis`.
pub fn eigenproblem(
    assembler: &Assembler<'_>,
    chi: &[f64],
    omega: &ElementSet,
    oversampled: &ElementSet,
    basis: &DMatrix<f64>,
) -> Result<GeneralizedEigen> {
    let (a, m) = spectral_pencil(assembler, chi, omega, oversampled, basis)?;
    deflated_generalized_eigen(&a, &m)
}

/// How many local modes enter the coarse space.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum CoarseRule {
    Fixed(usize),
    /// Every mode with `sqrt(lambda) >= tau`; kernel modes always count.
    Threshold(f64),
}

/// Number of leading modes selected by `rule` from a descending eigenvalue list.
pub fn select_count(values: &[f64], rule: CoarseRule) -> Result<usize> {
    match rule {
        CoarseRule::Fixed(n) if n > values.len() => Err(Error::TooManyModes { requested: n, available: values.len() }),
        CoarseRule::Fixed(n) => Ok(n),
        CoarseRule::Threshold(tau) if tau.is_nan() || tau < 0.0 => {
            Err(Error::InvalidParameter(format!("threshold {tau} must be nonnegative")))
        }
        CoarseRule::Threshold(tau) => Ok(values.iter().filter(|&&l| l.max(0.0).sqrt() >= tau).count()),
    }
}

/// Everything computed on one oversampling domain.
#[derive(Debug, Clone)]
pub struct LocalSpectralData {
    pub index: usize,
    /// `u_j^p` on `omega_j`.
    pub particular: Vec<f64>,
    /// Columns span the harmonic space, in `omega*_j` dofs.
    pub harmonic_basis: DMatrix<f64>,
    pub eigen: GeneralizedEigen,
    /// Relative residual of the particular solve.
    pub particular_residual: f64,
}

impl LocalSpectralData {
    /// Solves every local problem of subdomain `j`.
    pub fn compute<F: Fn(Point) -> f64>(
        assembler: &Assembler<'_>,
        source: F,
        decomposition: &Decomposition,
        pou: &PartitionOfUnity,
        j: usize,
    ) -> Result<Self> {
        let sub = &decomposition.subdomains()[j];
        let space = OversampledSpace::new(assembler, &sub.oversampled)?;
        let load = assemble_load(assembler.mesh, source, &sub.oversampled);
        let psi = space.solve_h0(&load)?;
        let particular_residual = space.h0_residual(&psi, &load);
        let particular = crate::space::restrict(&psi, &sub.oversampled, &sub.omega)?;
        let harmonic_basis = space.harmonic_basis();
        let eigen = eigenproblem(assembler, pou.member(j), &sub.omega, &sub.oversampled, &harmonic_basis)?;
        Ok(Self { index: j, particular, harmonic_basis, eigen, particular_residual })
    }

    pub fn eigenvalues(&self) -> &[f64] {
        &self.eigen.values
    }

    pub fn num_modes(&self) -> usize {
        self.eigen.values.len()
    }

    /// The first `n` eigenfunctions in `omega*_j` dofs.
    pub fn modes(&self, n: usize) -> Result<DMatrix<f64>> {
        if n > self.num_modes() {
            return Err(Error::TooManyModes { requested: n, available: self.num_modes() });
        }
        Ok(&self.harmonic_basis * self.eigen.vectors.columns(0, n))
    }

    /// `P_j(phi_k|omega_j)` for the first `n` modes, in `omega_j` dofs.
    pub fn coarse_functions(
        &self,
        assembler: &Assembler<'_>,
        decomposition: &Decomposition,
        pou: &PartitionOfUnity,
        n: usize,
    ) -> Result<DMatrix<f64>> {
        let sub = &decomposition.subdomains()[self.index];
        weighted_restriction(assembler, pou.member(self.index), &sub.omega, &sub.oversampled, &self.modes(n)?)
    }

    /// `sqrt(lambda_{n+1})`, or zero when every mode is selected.
    pub fn next_sqrt_lambda(&self, n: usize) -> f64 {
        self.eigen.values.get(n).map_or(0.0, |l| l.max(0.0).sqrt())
    }

    /// CSV rows `j,k,lambda,is_infinite` with `k` counted from one.
    pub fn eigenvalue_rows(&self) -> String {
        let mut out = String::new();
        for (k, l) in self.eigen.values.iter().enumerate() {
            let shown = if l.is_infinite() { "inf".to_string() } else { format!("{l:.17e}") };
            out.push_str(&format!("{},{},{},{}\n", self.index, k + 1, shown, l.is_infinite()));
        }
        out
    }
}

/// Least-squares coefficients of `target` in the column span of `basis`, and the residual norm.
pub fn best_approximation(basis: &DMatrix<f64>, target: &[f64]) -> (DVector<f64>, f64) {
    let t = DVector::from_column_slice(target);
    let svd = basis.clone().svd(true, true);
    let coefficients = svd.solve(&t, 1e-13).unwrap_or_else(|_| DVector::zeros(basis.ncols()));
    let residual = (basis * &coefficients - t).norm();
    (coefficients, residual)
}
