//! Global assembly of the MS-GFEM approximation: particular part, coarse
//! space, coarse Galerkin solve and error measurement.

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;

use crate::decomposition::{Decomposition, ElementSet};
use crate::error::{Error, Result};
use crate::forms::{assemble_load, Assembler, Source};
use crate::local::{select_count, CoarseRule, LocalSpectralData};
use crate::space::{extend_by_zero, pou_blend, PartitionOfUnity};
use crate::sparse::CsrMatrix;

/// Relative `H`-norm below which a coarse column counts as dependent on earlier ones.
pub const DROP_TOL: f64 = 1e-10;

/// Blended coarse functions in global dofs.
#[derive(Debug, Clone)]
pub struct CoarseSpace {
    /// Kept columns `E(I_h(chi_j phi_k))`.
    pub basis: DMatrix<f64>,
    /// `H`-orthonormal basis of the same span.
    pub orthonormal: DMatrix<f64>,
    /// `(j, k)` of every kept column, `k` counted from zero.
    pub labels: Vec<(usize, usize)>,
    /// `(j, k)` of columns removed as numerically dependent.
    pub dropped: Vec<(usize, usize)>,
}

impl CoarseSpace {
    pub fn dim(&self) -> usize {
        self.labels.len()
    }

    pub fn column_of(&self, j: usize, k: usize) -> Option<usize> {
        self.labels.iter().position(|&l| l == (j, k))
    }
}

/// Global particular solution `sum_j E(I_h(chi_j u_j^p))` and the coarse space
/// spanned by the first `counts[j]` modes of every subdomain.
pub fn assemble_coarse(
    assembler: &Assembler<'_>,
    decomposition: &Decomposition,
    pou: &PartitionOfUnity,
    locals: &[LocalSpectralData],
    counts: &[usize],
    inner: &CsrMatrix,
) -> Result<(CoarseSpace, Vec<f64>)> {
    let mesh = assembler.mesh;
    if locals.len() != decomposition.len() || counts.len() != decomposition.len() {
        return Err(Error::DimensionMismatch { expected: decomposition.len(), got: counts.len() });
    }
    let particulars: Vec<Vec<f64>> = locals.iter().map(|l| l.particular.clone()).collect();
    let u_p = pou_blend(mesh, decomposition, pou, &particulars)?;

    let all = ElementSet::all(mesh);
    let ndof = 3 * mesh.num_elements();
    let total: usize = counts.iter().sum();
    let mut columns = DMatrix::zeros(ndof, total);
    let mut labels = Vec::with_capacity(total);
    for (j, (local, &n)) in locals.iter().zip(counts).enumerate() {
        let functions = local.coarse_functions(assembler, decomposition, pou, n)?;
        let omega = &decomposition.subdomains()[j].omega;
        for k in 0..n {
            let col: Vec<f64> = functions.column(k).iter().copied().collect();
            let global = extend_by_zero(mesh, &col, omega, &all)?;
            columns.set_column(labels.len(), &DVector::from_vec(global));
            labels.push((j, k));
        }
    }
    Ok((regularize(columns, labels, inner), u_p))
}

/// Two-pass classical Gram-Schmidt in the `H` inner product, dropping columns
/// whose orthogonal remainder is at most `DROP_TOL` of their norm.
#[allow(clippy::needless_range_loop)]
fn regularize(columns: DMatrix<f64>, labels: Vec<(usize, usize)>, inner: &CsrMatrix) -> CoarseSpace {
    let (ndof, total) = columns.shape();
    let mut q = DMatrix::zeros(ndof, total);
    let mut hq = DMatrix::zeros(ndof, total);
    let mut keep = Vec::with_capacity(total);
    let mut dropped = Vec::new();
    for c in 0..total {
        let mut v = columns.column(c).into_owned();
        let norm0 = inner.quadratic(v.as_slice()).max(0.0).sqrt();
        let r = keep.len();
        for _ in 0..2 {
            if r == 0 {
                break;
            }
            let coeff = hq.columns(0, r).tr_mul(&v);
            v -= q.columns(0, r) * coeff;
        }
        let hv = DVector::from_vec(inner.mul_vec(v.as_slice()));
        let norm = v.dot(&hv).max(0.0).sqrt();
        if norm0 == 0.0 || norm <= DROP_TOL * norm0 {
            dropped.push(labels[c]);
            continue;
        }
        q.set_column(r, &(v / norm));
        hq.set_column(r, &(hv / norm));
        keep.push(c);
    }
    let basis = columns.select_columns(&keep);
    let orthonormal = q.columns(0, keep.len()).into_owned();
    let labels = keep.iter().map(|&c| labels[c]).collect();
    CoarseSpace { basis, orthonormal, labels, dropped }
}

/// Coarse correction `u_s` with `B(u_s, v) = F(v) - B(u_p, v)` on the coarse space,
/// and the relative residual of the reduced system.
pub fn solve_coarse(bilinear: &CsrMatrix, load: &[f64], coarse: &CoarseSpace, u_p: &[f64]) -> Result<(Vec<f64>, f64)> {
    let q = &coarse.orthonormal;
    if coarse.dim() == 0 {
        return Ok((vec![0.0; u_p.len()], 0.0));
    }
    let bq = bilinear.mul_dense(q);
    let reduced = q.tr_mul(&bq);
    let reduced = (&reduced + reduced.transpose()) * 0.5;
    let bu = bilinear.mul_vec(u_p);
    let rhs_full = DVector::from_iterator(load.len(), load.iter().zip(&bu).map(|(f, b)| f - b));
    let rhs = q.tr_mul(&rhs_full);
    let chol = reduced.clone().cholesky().ok_or_else(|| {
        let value = reduced.clone().symmetric_eigenvalues().min();
        Error::NotPositiveDefinite { pivot: 0, value }
    })?;
    let y = chol.solve(&rhs);
    let rnorm = rhs.norm();
    let residual = if rnorm == 0.0 { 0.0 } else { (&reduced * &y - &rhs).norm() / rnorm };
    Ok(((q * y).as_slice().to_vec(), residual))
}

/// Absolute and relative errors in the `B+` and `L2` norms.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ErrorReport {
    pub bplus: f64,
    pub l2: f64,
    pub bplus_rel: f64,
    pub l2_rel: f64,
}

pub fn error_report(positive: &CsrMatrix, mass: &CsrMatrix, approx: &[f64], reference: &[f64]) -> Result<ErrorReport> {
    if approx.len() != reference.len() {
        return Err(Error::DimensionMismatch { expected: reference.len(), got: approx.len() });
    }
    let diff: Vec<f64> = approx.iter().zip(reference).map(|(a, b)| a - b).collect();
    let norm = |m: &CsrMatrix, v: &[f64]| m.quadratic(v).max(0.0).sqrt();
    let bplus = norm(positive, &diff);
    let l2 = norm(mass, &diff);
    let rel = |e: f64, r: f64| if r == 0.0 { e } else { e / r };
    Ok(ErrorReport {
        bplus,
        l2,
        bplus_rel: rel(bplus, norm(positive, reference)),
        l2_rel: rel(l2, norm(mass, reference)),
    })
}

/// Result of one coarse solve.
#[derive(Debug, Clone)]
pub struct MsGfemSolution {
    pub u_p: Vec<f64>,
    pub u_s: Vec<f64>,
    pub u_g: Vec<f64>,
    pub counts: Vec<usize>,
    pub n_total: usize,
    pub dropped: Vec<(usize, usize)>,
    pub coarse_residual: f64,
    /// `max_j sqrt(lambda_{n_j + 1})`.
    pub max_sqrt_lambda_next: f64,
}

/// Local data of every subdomain plus the global forms needed for coarse solves.
pub struct MsGfem<'a> {
    assembler: Assembler<'a>,
    decomposition: &'a Decomposition,
    pou: PartitionOfUnity,
    locals: Vec<LocalSpectralData>,
    bilinear: CsrMatrix,
    inner: CsrMatrix,
    load: Vec<f64>,
}

impl<'a> MsGfem<'a> {
    /// Solves all local problems, in parallel over subdomains.
    pub fn setup(assembler: Assembler<'a>, decomposition: &'a Decomposition, source: Source) -> Result<Self> {
        let mesh = assembler.mesh;
        let pou = PartitionOfUnity::build(mesh, decomposition)?;
        let locals = (0..decomposition.len())
            .into_par_iter()
            .map(|j| LocalSpectralData::compute(&assembler, |p| source.eval(p), decomposition, &pou, j))
            .collect::<Result<Vec<_>>>()?;
        let all = ElementSet::all(mesh);
        let bilinear = assembler.bilinear(&all)?.matrix;
        let inner = assembler.inner(&all)?.matrix;
        let load = assemble_load(mesh, |p| source.eval(p), &all);
        Ok(Self { assembler, decomposition, pou, locals, bilinear, inner, load })
    }

    pub fn locals(&self) -> &[LocalSpectralData] {
        &self.locals
    }

    pub fn pou(&self) -> &PartitionOfUnity {
        &self.pou
    }

    pub fn bilinear(&self) -> &CsrMatrix {
        &self.bilinear
    }

    pub fn load(&self) -> &[f64] {
        &self.load
    }

    /// Modes per subdomain; a fixed count is clamped to what each subdomain offers.
    pub fn counts(&self, rule: CoarseRule) -> Result<Vec<usize>> {
        self.locals
            .iter()
            .map(|l| match rule {
                CoarseRule::Fixed(n) => select_count(l.eigenvalues(), CoarseRule::Fixed(n.min(l.num_modes()))),
                r => select_count(l.eigenvalues(), r),
            })
            .collect()
    }

    pub fn max_sqrt_lambda_next(&self, counts: &[usize]) -> f64 {
        self.locals.iter().zip(counts).map(|(l, &n)| l.next_sqrt_lambda(n)).fold(0.0, f64::max)
    }

    pub fn solve(&self, counts: &[usize]) -> Result<MsGfemSolution> {
        let (coarse, u_p) =
            assemble_coarse(&self.assembler, self.decomposition, &self.pou, &self.locals, counts, &self.inner)?;
        let (u_s, coarse_residual) = solve_coarse(&self.bilinear, &self.load, &coarse, &u_p)?;
        let u_g = u_p.iter().zip(&u_s).map(|(a, b)| a + b).collect();
        Ok(MsGfemSolution {
            u_p,
            u_s,
            u_g,
            counts: counts.to_vec(),
            n_total: coarse.dim(),
            dropped: coarse.dropped,
            coarse_residual,
            max_sqrt_lambda_next: self.max_sqrt_lambda_next(counts),
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::coefficient::{Coefficient, CoefficientKind};
    use crate::mesh::TriMesh;

    fn fine(assembler: &Assembler<'_>, source: Source) -> Vec<f64> {
        let all = ElementSet::all(assembler.mesh);
        let b = assembler.bilinear(&all).unwrap().matrix.to_dense();
        let f = DVector::from_vec(assemble_load(assembler.mesh, |p| source.eval(p), &all));
        b.cholesky().unwrap().solve(&f).as_slice().to_vec()
    }

    fn setup(n: usize) -> (TriMesh, Coefficient) {
        let mesh = TriMesh::structured(n).unwrap();
        let c = Coefficient::generate(&CoefficientKind::LogUniform { min: 0.1, max: 10.0, seed: 5 }, &mesh).unwrap();
        (mesh, c)
    }

    #[test]
    fn single_subdomain_reproduces_fine_solution() {
        let (mesh, c) = setup(8);
        let asm = Assembler::new(&mesh, &c, 10f64.sqrt()).unwrap();
        let dec = Decomposition::build(&mesh, 1, 2, 1).unwrap();
        let ms = MsGfem::setup(asm, &dec, Source::Sine).unwrap();
        let sol = ms.solve(&ms.counts(CoarseRule::Fixed(5)).unwrap()).unwrap();
        assert_eq!(sol.n_total, 0);
        let u = fine(&asm, Source::Sine);
        let all = ElementSet::all(&mesh);
        let r =
            error_report(&asm.positive(&all).unwrap().matrix, &asm.mass(&all).unwrap().matrix, &sol.u_g, &u).unwrap();
        assert!(r.bplus_rel < 1e-10 && r.l2_rel < 1e-10, "{r:?}");
    }

    #[test]
    fn coarse_columns_supported_in_their_subdomain() {
        let (mesh, c) = setup(12);
        let asm = Assembler::new(&mesh, &c, 10f64.sqrt()).unwrap();
        let dec = Decomposition::build(&mesh, 3, 2, 1).unwrap();
        let ms = MsGfem::setup(asm, &dec, Source::Constant(1.0)).unwrap();
        let all = ElementSet::all(&mesh);
        let inner = asm.inner(&all).unwrap().matrix;
        let (coarse, _) = assemble_coarse(&asm, &dec, ms.pou(), ms.locals(), &[3; 9], &inner).unwrap();
        assert_eq!(coarse.dim() + coarse.dropped.len(), 27);
        for (col, &(j, _)) in coarse.labels.iter().enumerate() {
            let omega = &dec.subdomains()[j].omega;
            for e in 0..mesh.num_elements() {
                if !omega.contains(e) {
                    assert!((0..3).all(|a| coarse.basis[(3 * e + a, col)] == 0.0));
                }
            }
        }
        let gram = coarse.orthonormal.tr_mul(&inner.mul_dense(&coarse.orthonormal));
        assert!((gram - DMatrix::identity(coarse.dim(), coarse.dim())).amax() < 1e-10);
        assert!(coarse.column_of(4, 0).is_some());
    }

    #[test]
    fn zero_data_gives_zero_correction() {
        let (mesh, c) = setup(12);
        let asm = Assembler::new(&mesh, &c, 10f64.sqrt()).unwrap();
        let dec = Decomposition::build(&mesh, 3, 2, 1).unwrap();
        let ms = MsGfem::setup(asm, &dec, Source::Constant(0.0)).unwrap();
        let sol = ms.solve(&ms.counts(CoarseRule::Fixed(4)).unwrap()).unwrap();
        assert!(sol.u_p.iter().chain(&sol.u_s).all(|&x| x == 0.0));
    }

    #[test]
    fn empty_coarse_space_returns_particular() {
        let (mesh, c) = setup(12);
        let asm = Assembler::new(&mesh, &c, 10f64.sqrt()).unwrap();
        let dec = Decomposition::build(&mesh, 3, 2, 1).unwrap();
        let ms = MsGfem::setup(asm, &dec, Source::Sine).unwrap();
        let sol = ms.solve(&[0; 9]).unwrap();
        assert_eq!(sol.u_g, sol.u_p);
    }

    #[test]
    fn enlarging_coarse_space_does_not_increase_energy_error() {
        let (mesh, c) = setup(12);
        let asm = Assembler::new(&mesh, &c, 10f64.sqrt()).unwrap();
        let dec = Decomposition::build(&mesh, 3, 2, 1).unwrap();
        let ms = MsGfem::setup(asm, &dec, Source::Sine).unwrap();
        let u = fine(&asm, Source::Sine);
        let all = ElementSet::all(&mesh);
        let b = asm.bilinear(&all).unwrap().matrix;
        let energy = |v: &[f64]| {
            let d: Vec<f64> = v.iter().zip(&u).map(|(a, b)| a - b).collect();
            b.quadratic(&d).sqrt()
        };
        let mut last = f64::INFINITY;
        let mut first = 0.0;
        for n in 1..=6 {
            let sol = ms.solve(&ms.counts(CoarseRule::Fixed(n)).unwrap()).unwrap();
            assert!(sol.coarse_residual < 1e-10);
            let e = energy(&sol.u_g);
            assert!(e <= last * (1.0 + 1e-10), "{n}: {e} > {last}");
            if n == 1 {
                first = e;
            }
            last = e;
        }
        assert!(last < 0.5 * first);
    }

    #[test]
    fn error_report_basics() {
        let m = CsrMatrix::from_triplets(2, 2, &[(0, 0, 1.0), (1, 1, 4.0)]);
        let r = error_report(&m, &m, &[1.0, 1.0], &[1.0, 1.0]).unwrap();
        assert_eq!((r.bplus, r.l2), (0.0, 0.0));
        let r = error_report(&m, &m, &[0.0, 0.0], &[1.0, 0.0]).unwrap();
        assert_eq!((r.bplus, r.bplus_rel), (1.0, 1.0));
    }
}
