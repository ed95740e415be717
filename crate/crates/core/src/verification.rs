//! Independent oracles: the global fine solve, manufactured-solution
//! convergence, decay fits, Caccioppoli ratios and the property suite.

use std::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::coefficient::{face_data, Coefficient, CoefficientKind};
use crate::decomposition::{d_minus, grow, Decomposition, ElementSet};
use crate::error::{Error, Result};
use crate::forms::{assemble_load, gamma_sq, Assembler, Source};
use crate::local::{best_approximation, LocalSpectralData, OversampledSpace};
use crate::mesh::{point_segment_distance, FaceRef, Point, TriMesh};
use crate::quadrature;
use crate::space::{
    extend_by_zero, gradient_sup, interpolate_product, locality_check, pou_blend, restrict, PartitionOfUnity,
    SubspaceMask,
};
use crate::sparse::{CsrMatrix, EnvelopeCholesky};

/// Global DG solution and the relative residual of the linear solve.
#[derive(Debug, Clone)]
pub struct FineSolution {
    pub u: Vec<f64>,
    pub residual: f64,
}

/// Solves `B(u, v) = F(v)` for all `v` on the whole mesh.
pub fn fine_solve(assembler: &Assembler<'_>, source: Source) -> Result<FineSolution> {
    let all = ElementSet::all(assembler.mesh);
    let b = assembler.bilinear(&all)?.matrix;
    let load = assemble_load(assembler.mesh, |p| source.eval(p), &all);
    let u = EnvelopeCholesky::factor(&b)?.solve(&load);
    let bu = b.mul_vec(&u);
    let num: f64 = bu.iter().zip(&load).map(|(a, f)| (a - f).powi(2)).sum();
    let den: f64 = load.iter().map(|f| f * f).sum();
    let residual = if den == 0.0 { num.sqrt() } else { (num / den).sqrt() };
    Ok(FineSolution { u, residual })
}

/// `sin(pi x) sin(pi y)` and its gradient.
fn exact(p: Point) -> (f64, [f64; 2]) {
    let (sx, cx) = (PI * p[0]).sin_cos();
    let (sy, cy) = (PI * p[1]).sin_cos();
    (sx * sy, [PI * cx * sy, PI * sx * cy])
}

/// `int_F w^2` for `w` linear along a face with endpoint values `a`, `b`.
fn face_square(len: f64, a: f64, b: f64) -> f64 {
    len * (a * a + a * b + b * b) / 3.0
}

/// `(B+ error, L2 error)` of a global dof vector against `sin(pi x) sin(pi y)`.
///
/// The exact solution is continuous and vanishes on the boundary, so its jumps
/// and boundary traces drop out of the penalty terms.
pub fn manufactured_errors(assembler: &Assembler<'_>, u: &[f64]) -> (f64, f64) {
    let mesh = assembler.mesh;
    let nu = assembler.coefficient;
    let mut energy = 0.0;
    let mut l2 = 0.0;
    for e in 0..mesh.num_elements() {
        let g = mesh.basis_gradients(e);
        let c = &u[3 * e..3 * e + 3];
        let grad = [(0..3).map(|a| c[a] * g[a][0]).sum::<f64>(), (0..3).map(|a| c[a] * g[a][1]).sum::<f64>()];
        energy += nu.value(e)
            * quadrature::integrate(mesh, e, |x, _| {
                let (_, ge) = exact(x);
                (grad[0] - ge[0]).powi(2) + (grad[1] - ge[1]).powi(2)
            });
        l2 += quadrature::integrate(mesh, e, |x, bary| {
            let uh: f64 = (0..3).map(|a| c[a] * bary[a]).sum();
            (uh - exact(x).0).powi(2)
        });
    }
    let trace = |e: usize, v: usize| u[3 * e + mesh.local_vertex(e, v).expect("face vertex")];
    for (i, f) in mesh.interior_faces().iter().enumerate() {
        let d = face_data(mesh, nu, FaceRef::Interior(i));
        let gamma = gamma_sq(d.nu1, d.nu2, d.diameter, assembler.gamma0).expect("validated coefficient");
        let [e1, e2] = f.elements;
        let [a, b] = f.vertices;
        energy += gamma * face_square(f.diameter, trace(e1, a) - trace(e2, a), trace(e1, b) - trace(e2, b));
    }
    for (i, f) in mesh.boundary_faces().iter().enumerate() {
        let d = face_data(mesh, nu, FaceRef::Boundary(i));
        let gamma = gamma_sq(d.nu1, d.nu2, d.diameter, assembler.gamma0).expect("validated coefficient");
        let [a, b] = f.vertices;
        energy += gamma * face_square(f.diameter, trace(f.element, a), trace(f.element, b));
    }
    (energy.sqrt(), l2.sqrt())
}

/// Errors against the manufactured solution over a sequence of meshes.
#[derive(Debug, Clone, Serialize)]
pub struct ConvergenceRecord {
    pub sizes: Vec<usize>,
    pub h: Vec<f64>,
    pub energy: Vec<f64>,
    pub l2: Vec<f64>,
}

impl ConvergenceRecord {
    fn rates(&self, e: &[f64]) -> Vec<f64> {
        (1..e.len()).map(|i| (e[i - 1] / e[i]).ln() / (self.h[i - 1] / self.h[i]).ln()).collect()
    }

    pub fn energy_rates(&self) -> Vec<f64> {
        self.rates(&self.energy)
    }

    pub fn l2_rates(&self) -> Vec<f64> {
        self.rates(&self.l2)
    }
}

/// Unit diffusion with load `2 pi^2 sin(pi x) sin(pi y)` on each mesh in `sizes`.
pub fn manufactured_convergence(sizes: &[usize], gamma0: f64) -> Result<ConvergenceRecord> {
    let mut record = ConvergenceRecord { sizes: sizes.to_vec(), h: Vec::new(), energy: Vec::new(), l2: Vec::new() };
    for &n in sizes {
        let mesh = TriMesh::structured(n)?;
        let coefficient = Coefficient::generate(&CoefficientKind::Constant(1.0), &mesh)?;
        let assembler = Assembler::new(&mesh, &coefficient, gamma0)?;
        let fine = fine_solve(&assembler, Source::Sine)?;
        let (energy, l2) = manufactured_errors(&assembler, &fine.u);
        record.h.push(mesh.mesh_size());
        record.energy.push(energy);
        record.l2.push(l2);
    }
    Ok(record)
}

/// Least-squares line through `(n^exponent, ln value_n)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct DecayFit {
    pub slope: f64,
    pub intercept: f64,
    pub r2: f64,
    pub points: usize,
}

/// Fits `ln value_n` against `n^exponent` with `n` counted from one.
/// Entries that are not finite and positive are skipped but keep their index.
pub fn decay_fit(values: &[f64], exponent: f64) -> Result<DecayFit> {
    let ns: Vec<f64> = (1..=values.len()).map(|n| n as f64).collect();
    decay_fit_at(&ns, values, exponent)
}

/// Fits `ln values[i]` against `ns[i]^exponent`.
pub fn decay_fit_at(ns: &[f64], values: &[f64], exponent: f64) -> Result<DecayFit> {
    if ns.len() != values.len() {
        return Err(Error::DimensionMismatch { expected: ns.len(), got: values.len() });
    }
    let points: Vec<(f64, f64)> = ns
        .iter()
        .zip(values)
        .filter(|(_, v)| v.is_finite() && **v > 0.0)
        .map(|(n, v)| (n.powf(exponent), v.ln()))
        .collect();
    if points.len() < 5 {
        return Err(Error::FitRefused(points.len()));
    }
    let n = points.len() as f64;
    let mx = points.iter().map(|p| p.0).sum::<f64>() / n;
    let my = points.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx: f64 = points.iter().map(|p| (p.0 - mx).powi(2)).sum();
    let sxy: f64 = points.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let syy: f64 = points.iter().map(|p| (p.1 - my).powi(2)).sum();
    if sxx == 0.0 {
        return Err(Error::InvalidParameter("decay fit needs distinct abscissae".into()));
    }
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let r2 = if syy <= 1e-28 * (1.0 + my * my) * n { 1.0 } else { sxy * sxy / (sxx * syy) };
    Ok(DecayFit { slope, intercept, r2, points: points.len() })
}

/// Faces with exactly one adjacent element in `domain`.
fn inner_boundary(mesh: &TriMesh, domain: &ElementSet) -> Vec<[Point; 2]> {
    mesh.interior_faces()
        .iter()
        .filter(|f| domain.contains(f.elements[0]) != domain.contains(f.elements[1]))
        .map(|f| [mesh.vertices()[f.vertices[0]], mesh.vertices()[f.vertices[1]]])
        .collect()
}

/// Distance from `omega` to the part of the boundary of `oversampled` inside the unit square.
pub fn separation(mesh: &TriMesh, omega: &ElementSet, oversampled: &ElementSet) -> f64 {
    let inner = inner_boundary(mesh, omega);
    let outer = inner_boundary(mesh, oversampled);
    let mut best = f64::INFINITY;
    for a in &inner {
        for b in &outer {
            let d = point_segment_distance(a[0], b[0], b[1])
                .min(point_segment_distance(a[1], b[0], b[1]))
                .min(point_segment_distance(b[0], a[0], a[1]))
                .min(point_segment_distance(b[1], a[0], a[1]));
            best = best.min(d);
        }
    }
    best
}

#[derive(Debug, Clone, Copy, Serialize)]
pub struct CaccioppoliReport {
    pub delta: f64,
    pub max_h: f64,
    pub max_ratio: f64,
    pub samples: usize,
}

/// Largest `|u|_omega|_{B+} delta / (nu_max^1/2 |u|_{L2(omega* \ omega)})` over
/// harmonic functions with random layer data.
pub fn caccioppoli(
    assembler: &Assembler<'_>,
    omega: &ElementSet,
    oversampled: &ElementSet,
    samples: usize,
    rng: &mut ChaCha8Rng,
) -> Result<CaccioppoliReport> {
    let mesh = assembler.mesh;
    if !omega.is_subset_of(oversampled) {
        return Err(Error::NotNested(omega.first_missing_from(oversampled).unwrap_or(0)));
    }
    let delta = separation(mesh, omega, oversampled);
    if !delta.is_finite() {
        return Err(Error::InvalidParameter("oversampling domain has no boundary inside the square".into()));
    }
    let max_h = oversampled.iter().map(|e| mesh.element_diameter(e)).fold(0.0, f64::max);
    let annulus = oversampled.difference(omega);
    if annulus.is_empty() {
        return Err(Error::EmptyDomain);
    }
    let space = OversampledSpace::new(assembler, oversampled)?;
    let positive = assembler.positive(omega)?;
    let mass = assembler.mass(&annulus)?;
    let scale = assembler.coefficient.max().sqrt();
    let mut max_ratio = 0.0f64;
    for _ in 0..samples {
        let data: Vec<f64> = (0..space.layer_dofs().len()).map(|_| rng.random_range(-1.0..1.0)).collect();
        let u = space.harmonic_extension(&data)?;
        let top = positive.norm(&restrict(&u, oversampled, omega)?)? * delta;
        let bottom = scale * mass.norm(&restrict(&u, oversampled, &annulus)?)?;
        max_ratio = max_ratio.max(top / bottom);
    }
    Ok(CaccioppoliReport { delta, max_h, max_ratio, samples })
}

/// Largest `|I_h(chi_j u)|_H / (sqrt(1 + |grad chi_j|^2) |u|_H)` over the constant
/// and `samples` random vectors on `omega_j`.
pub fn interpolation_stability(
    assembler: &Assembler<'_>,
    decomposition: &Decomposition,
    pou: &PartitionOfUnity,
    j: usize,
    samples: usize,
    rng: &mut ChaCha8Rng,
) -> Result<f64> {
    let omega = &decomposition.subdomains()[j].omega;
    let inner = assembler.inner(omega)?;
    let grad = pou.gradient_sup(assembler.mesh, j);
    let mut worst = 0.0f64;
    for s in 0..=samples {
        // sample 0 is the constant vector
        let u: Vec<f64> =
            (0..3 * omega.len()).map(|_| if s == 0 { 1.0 } else { rng.random_range(-1.0..1.0) }).collect();
        let iu = interpolate_product(assembler.mesh, pou.member(j), omega, &u)?;
        worst = worst.max(inner.norm(&iu)? / ((1.0 + grad * grad).sqrt() * inner.norm(&u)?));
    }
    Ok(worst)
}

/// Outcome of one property check.
#[derive(Debug, Clone, Serialize)]
pub struct CheckResult {
    pub name: String,
    pub module: String,
    pub passed: bool,
    pub witness: String,
}

#[derive(Debug, Clone, Default, Serialize)]
pub struct PropertyReport {
    pub checks: Vec<CheckResult>,
}

impl PropertyReport {
    pub fn all_passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }

    pub fn first_failure(&self) -> Option<&CheckResult> {
        self.checks.iter().find(|c| !c.passed)
    }

    pub fn to_text(&self) -> String {
        self.checks
            .iter()
            .map(|c| format!("{} {}.{}: {}\n", if c.passed { "PASS" } else { "FAIL" }, c.module, c.name, c.witness))
            .collect()
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    fn push(&mut self, module: &str, name: &str, outcome: Result<(bool, String)>) {
        let (passed, witness) = outcome.unwrap_or_else(|e| (false, format!("error: {e}")));
        self.checks.push(CheckResult { name: name.into(), module: module.into(), passed, witness });
    }
}

/// Inputs shared by all property checks.
pub struct SuiteInput<'a> {
    pub assembler: Assembler<'a>,
    pub decomposition: &'a Decomposition,
    pub seed: u64,
    /// Random vectors per subdomain and per identity.
    pub samples: usize,
}

/// `sum |A_ij| |u_i| |v_j|`, the scale against which `u^T A v` is compared.
fn abs_bilinear(a: &CsrMatrix, u: &[f64], v: &[f64]) -> f64 {
    a.triplets().map(|(i, j, x)| (x * u[i] * v[j]).abs()).sum()
}

fn random_vec(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
    (0..n).map(|_| rng.random_range(-1.0..1.0)).collect()
}

fn check_cover(input: &SuiteInput<'_>) -> Result<(bool, String)> {
    let mesh = input.assembler.mesh;
    let dec = input.decomposition;
    if let Some(e) = dec.uncovered_by_interiors(mesh) {
        return Ok((false, format!("element {e} lies in no omega_j-")));
    }
    for (j, s) in dec.subdomains().iter().enumerate() {
        if !s.omega.is_subset_of(&s.oversampled) {
            return Ok((false, format!("omega_{j} not inside omega*_{j}")));
        }
    }
    Ok((true, format!("kappa = {}, kappa* = {}", dec.coloring_constant(mesh), dec.oversampled_coloring_constant(mesh))))
}

fn check_factor(input: &SuiteInput<'_>, which: &str) -> Result<(bool, String)> {
    let all = ElementSet::all(input.assembler.mesh);
    let matrices = match which {
        "B" => vec![("B", input.assembler.bilinear(&all)?.matrix)],
        _ => vec![("B+", input.assembler.positive(&all)?.matrix), ("H", input.assembler.inner(&all)?.matrix)],
    };
    for (name, m) in matrices {
        if let Err(e) = EnvelopeCholesky::factor(&m) {
            return Ok((false, format!("{name} on the whole mesh: {e}")));
        }
    }
    Ok((true, format!("Cholesky of {which} succeeded, gamma0 = {}", input.assembler.gamma0)))
}

fn check_kernel(input: &SuiteInput<'_>) -> Result<(bool, String)> {
    let mesh = input.assembler.mesh;
    let mut worst_interior = 0.0f64;
    let mut least_boundary = f64::INFINITY;
    for (j, s) in input.decomposition.subdomains().iter().enumerate() {
        for domain in [&s.omega, &s.oversampled] {
            let b = input.assembler.positive(domain)?.matrix;
            let ones = vec![1.0; b.nrows()];
            if domain.touches_boundary(mesh) {
                let q = b.quadratic(&ones);
                if q <= 0.0 {
                    return Ok((false, format!("subdomain {j} touches the boundary but B+(1,1) = {q:e}")));
                }
                least_boundary = least_boundary.min(q);
            } else {
                let r = b.mul_vec(&ones).iter().fold(0.0f64, |s, x| s.max(x.abs())) / b.max_abs();
                if r > 1e-12 {
                    return Ok((false, format!("subdomain {j}: |B+ 1| / |B+| = {r:e}")));
                }
                worst_interior = worst_interior.max(r);
            }
        }
    }
    Ok((true, format!("interior max |B+ 1|/|B+| = {worst_interior:e}; boundary min B+(1,1) = {least_boundary:e}")))
}

fn check_identities(input: &SuiteInput<'_>, rng: &mut ChaCha8Rng) -> Result<[(bool, String); 4]> {
    let asm = &input.assembler;
    let mesh = asm.mesh;
    let all = ElementSet::all(mesh);
    let h_all = asm.inner(&all)?;
    let (mut iso, mut restr, mut loc) = (0.0f64, 0.0f64, 0.0f64);
    let mut exact_roundtrip = true;
    let mut count = 0;
    for s in input.decomposition.subdomains() {
        let h_local = asm.inner(&s.omega)?;
        let mask = SubspaceMask::new(mesh, &s.omega);
        let b_star = asm.bilinear(&s.oversampled)?;
        for _ in 0..input.samples {
            count += 1;
            let mut v = random_vec(rng, 3 * s.omega.len());
            mask.project(&mut v);
            let ev = extend_by_zero(mesh, &v, &s.omega, &all)?;
            let nv = h_local.matrix.quadratic(&v);
            iso = iso.max((h_all.matrix.quadratic(&ev) - nv).abs() / nv);
            exact_roundtrip &= restrict(&ev, &all, &s.omega)? == v;

            let u = random_vec(rng, 3 * mesh.num_elements());
            let ru = restrict(&u, &all, &s.omega)?;
            restr = restr.max(h_local.norm(&ru)? / h_all.norm(&u)?);

            let us = random_vec(rng, 3 * s.oversampled.len());
            let (local, global) = locality_check(asm, &s.omega, &s.oversampled, &us, &v)?;
            let ev_star = extend_by_zero(mesh, &v, &s.omega, &s.oversampled)?;
            loc = loc.max((local - global).abs() / abs_bilinear(&b_star.matrix, &us, &ev_star));
        }
    }
    Ok([
        (iso <= 1e-12, format!("{count} samples, max relative isometry defect {iso:e}")),
        (restr <= 1.0 + 1e-12, format!("{count} samples, max |R u|/|u| = {restr:.15}")),
        (loc <= 1e-12, format!("{count} samples, max relative locality defect {loc:e}")),
        (exact_roundtrip, format!("R(E(v)) == v bitwise: {exact_roundtrip}")),
    ])
}

fn check_pou(input: &SuiteInput<'_>, pou: &PartitionOfUnity) -> Result<(bool, String)> {
    let mesh = input.assembler.mesh;
    let mut worst = 0.0f64;
    for v in 0..mesh.num_vertices() {
        let sum: f64 = (0..pou.len()).map(|j| pou.member(j)[v]).sum();
        worst = worst.max((sum - 1.0).abs());
    }
    for (j, s) in input.decomposition.subdomains().iter().enumerate() {
        let inner = d_minus(mesh, &s.omega);
        for v in 0..mesh.num_vertices() {
            let chi = pou.member(j)[v];
            if !(0.0..=1.0).contains(&chi) {
                return Ok((false, format!("chi_{j}({v}) = {chi}")));
            }
            if chi != 0.0 && mesh.vertex_elements(v).iter().any(|&e| !inner.contains(e)) {
                return Ok((false, format!("chi_{j} nonzero at vertex {v} outside omega_{j}-")));
            }
        }
    }
    Ok((worst <= 1e-14, format!("max |sum_j chi_j - 1| = {worst:e}")))
}

fn check_blend(input: &SuiteInput<'_>, pou: &PartitionOfUnity, rng: &mut ChaCha8Rng) -> Result<(bool, String)> {
    let mesh = input.assembler.mesh;
    let all = ElementSet::all(mesh);
    let mut worst = 0.0f64;
    for _ in 0..input.samples {
        let u = random_vec(rng, 3 * mesh.num_elements());
        let locals = input
            .decomposition
            .subdomains()
            .iter()
            .map(|s| restrict(&u, &all, &s.omega))
            .collect::<Result<Vec<_>>>()?;
        let blended = pou_blend(mesh, input.decomposition, pou, &locals)?;
        worst = worst.max(blended.iter().zip(&u).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max));
    }
    Ok((worst <= 1e-12, format!("max |blend(R u) - u| = {worst:e}")))
}

fn check_stability(input: &SuiteInput<'_>, pou: &PartitionOfUnity, rng: &mut ChaCha8Rng) -> Result<(bool, String)> {
    let mut worst = 0.0f64;
    let mut grad = 0.0f64;
    for j in 0..input.decomposition.len() {
        worst = worst.max(interpolation_stability(&input.assembler, input.decomposition, pou, j, input.samples, rng)?);
        grad = grad.max(gradient_sup(input.assembler.mesh, pou.member(j)));
    }
    Ok((worst.is_finite(), format!("max stability ratio {worst:.6}, max |grad chi| = {grad:.6}")))
}

fn check_harmonic(input: &SuiteInput<'_>, locals: &[LocalSpectralData]) -> Result<(bool, String)> {
    let asm = &input.assembler;
    let mut worst = 0.0f64;
    let mut worst_constant = 0.0f64;
    for (j, (s, local)) in input.decomposition.subdomains().iter().zip(locals).enumerate() {
        let space = OversampledSpace::new(asm, &s.oversampled)?;
        let inner = asm.inner(&s.oversampled)?;
        let basis = &local.harmonic_basis;
        for k in 0..basis.ncols() {
            let v: Vec<f64> = basis.column(k).iter().copied().collect();
            let r = space.harmonic_residual(&v) / inner.norm(&v)?;
            if r > 1e-10 {
                return Ok((false, format!("subdomain {j} column {k}: residual {r:e}")));
            }
            worst = worst.max(r);
        }
        if !s.oversampled.touches_boundary(asm.mesh) {
            let ones = vec![1.0; basis.nrows()];
            let (_, res) = best_approximation(basis, &ones);
            let res = res / (ones.len() as f64).sqrt();
            if res > 1e-10 {
                return Ok((false, format!("subdomain {j}: constant misses the harmonic span by {res:e}")));
            }
            worst_constant = worst_constant.max(res);
        }
    }
    Ok((true, format!("max column residual {worst:e}; constant residual {worst_constant:e}")))
}

fn check_eigen(input: &SuiteInput<'_>, locals: &[LocalSpectralData]) -> Result<(bool, String)> {
    let mesh = input.assembler.mesh;
    for (j, (s, local)) in input.decomposition.subdomains().iter().zip(locals).enumerate() {
        let values = local.eigenvalues();
        let kernel = local.eigen.kernel_dim;
        if values[..kernel].iter().any(|v| v.is_finite()) || values[kernel..].iter().any(|v| !v.is_finite()) {
            return Ok((false, format!("subdomain {j}: infinite modes not leading")));
        }
        let finite = &values[kernel..];
        let top = finite.first().copied().unwrap_or(0.0).abs().max(1e-300);
        if let Some(w) = finite.windows(2).find(|w| w[0] < w[1]) {
            return Ok((false, format!("subdomain {j}: not descending at {} < {}", w[0], w[1])));
        }
        if let Some(&neg) = finite.iter().find(|&&l| l < -1e-10 * top) {
            return Ok((false, format!("subdomain {j}: negative eigenvalue {neg:e}")));
        }
        let interior = !s.oversampled.touches_boundary(mesh) && !values.is_empty();
        if interior && kernel != 1 {
            return Ok((false, format!("interior subdomain {j} has kernel dimension {kernel}")));
        }
    }
    Ok((true, "kernel modes first, finite eigenvalues nonnegative and descending".into()))
}

fn check_caccioppoli(input: &SuiteInput<'_>, rng: &mut ChaCha8Rng) -> Result<(bool, String)> {
    let asm = &input.assembler;
    let mesh = asm.mesh;
    let subs = input.decomposition.subdomains();
    let j = subs.iter().position(|s| !s.oversampled.touches_boundary(mesh)).unwrap_or(0);
    let omega = &subs[j].omega;
    let max_h = mesh.mesh_size();
    let mut oversampled = subs[j].oversampled.clone();
    while separation(mesh, omega, &oversampled) <= 3.0 * max_h {
        oversampled = grow(mesh, &oversampled, 1);
    }
    if !separation(mesh, omega, &oversampled).is_finite() {
        return Ok((true, "not applicable: no room for an annulus wider than 3 h".into()));
    }
    let r = caccioppoli(asm, omega, &oversampled, input.samples.max(50), rng)?;
    Ok((
        r.max_ratio.is_finite() && r.max_ratio > 0.0,
        format!("subdomain {j}, delta = {:.4}, {} samples, max ratio {:.6}", r.delta, r.samples, r.max_ratio),
    ))
}

/// Runs every property check; failures never abort later checks.
pub fn run_property_suite(input: &SuiteInput<'_>, locals: Option<&[LocalSpectralData]>) -> PropertyReport {
    let mut report = PropertyReport::default();
    let mut rng = ChaCha8Rng::seed_from_u64(input.seed);
    let mesh = input.assembler.mesh;
    report.push("decomposition", "cover", check_cover(input));
    report.push("dg_forms", "coercivity", check_factor(input, "B"));
    report.push("dg_forms", "positive_definite", check_factor(input, "B+ and H"));
    report.push("dg_forms", "kernel", check_kernel(input));
    match check_identities(input, &mut rng) {
        Ok([iso, restr, loc, round]) => {
            report.push("space_ops", "isometry", Ok(iso));
            report.push("space_ops", "restriction", Ok(restr));
            report.push("space_ops", "locality", Ok(loc));
            report.push("space_ops", "restrict_extend", Ok(round));
        }
        Err(e) => report.push("space_ops", "identities", Err(e)),
    }
    match PartitionOfUnity::build(mesh, input.decomposition) {
        Ok(pou) => {
            report.push("space_ops", "partition_of_unity", check_pou(input, &pou));
            report.push("space_ops", "blend", check_blend(input, &pou, &mut rng));
            report.push("space_ops", "interpolation_stability", check_stability(input, &pou, &mut rng));
            let computed;
            let locals = match locals {
                Some(l) => Ok(l),
                None => {
                    computed = (0..input.decomposition.len())
                        .into_par_iter()
                        .map(|j| LocalSpectralData::compute(&input.assembler, |_| 0.0, input.decomposition, &pou, j))
                        .collect::<Result<Vec<_>>>();
                    computed.as_deref().map_err(|e| Error::InvalidParameter(e.to_string()))
                }
            };
            match locals {
                Ok(l) => {
                    report.push("local_problems", "harmonicity", check_harmonic(input, l));
                    report.push("local_problems", "eigenvalues", check_eigen(input, l));
                }
                Err(e) => report.push("local_problems", "spectral_data", Err(e)),
            }
        }
        Err(e) => report.push("space_ops", "partition_of_unity", Err(e)),
    }
    report.push("local_problems", "caccioppoli", check_caccioppoli(input, &mut rng));
    report
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_source_fine_solution_vanishes() {
        let mesh = TriMesh::structured(6).unwrap();
        let c = Coefficient::generate(&CoefficientKind::Constant(1.0), &mesh).unwrap();
        let asm = Assembler::new(&mesh, &c, 10f64.sqrt()).unwrap();
        let f = fine_solve(&asm, Source::Constant(0.0)).unwrap();
        assert!(f.u.iter().all(|&x| x == 0.0));
    }

    #[test]
    fn small_penalty_reports_coercivity_hint() {
        let mesh = TriMesh::structured(6).unwrap();
        let c = Coefficient::generate(&CoefficientKind::Constant(1.0), &mesh).unwrap();
        let asm = Assembler::new(&mesh, &c, 0.01).unwrap();
        let err = fine_solve(&asm, Source::Constant(1.0)).unwrap_err();
        assert!(matches!(err, Error::NotPositiveDefinite { .. }));
        assert!(err.to_string().contains("gamma0"));
    }

    #[test]
    fn fine_solve_residual() {
        let mesh = TriMesh::structured(10).unwrap();
        let c = Coefficient::generate(&CoefficientKind::LogUniform { min: 0.01, max: 100.0, seed: 2 }, &mesh).unwrap();
        let asm = Assembler::new(&mesh, &c, 10f64.sqrt()).unwrap();
        assert!(fine_solve(&asm, Source::Sine).unwrap().residual < 1e-10);
    }

    #[test]
    fn interpolant_of_exact_solution_has_small_errors() {
        // the elementwise L2 projection has no quadrature-independent error
        // beyond O(h) in energy and O(h^2) in L2
        let errs: Vec<(f64, f64)> = [8, 16]
            .iter()
            .map(|&n| {
                let mesh = TriMesh::structured(n).unwrap();
                let c = Coefficient::generate(&CoefficientKind::Constant(1.0), &mesh).unwrap();
                let asm = Assembler::new(&mesh, &c, 10f64.sqrt()).unwrap();
                let u: Vec<f64> = (0..mesh.num_elements())
                    .flat_map(|e| {
                        // P1 L2 projection via the inverse local mass matrix
                        let m = [[2.0, 1.0, 1.0], [1.0, 2.0, 1.0], [1.0, 1.0, 2.0]];
                        let a = mesh.area(e);
                        let b: Vec<f64> =
                            (0..3).map(|k| quadrature::integrate(&mesh, e, |x, l| exact(x).0 * l[k])).collect();
                        let inv = nalgebra::Matrix3::from_fn(|i, j| m[i][j] * a / 12.0).try_inverse().unwrap();
                        let x = inv * nalgebra::Vector3::new(b[0], b[1], b[2]);
                        [x[0], x[1], x[2]]
                    })
                    .collect();
                manufactured_errors(&asm, &u)
            })
            .collect();
        let energy_rate = (errs[0].0 / errs[1].0).log2();
        let l2_rate = (errs[0].1 / errs[1].1).log2();
        assert!(energy_rate > 0.8 && l2_rate > 1.8, "{energy_rate} {l2_rate}");
    }

    #[test]
    fn manufactured_rates_on_coarse_meshes() {
        let r = manufactured_convergence(&[4, 8, 16], 10f64.sqrt()).unwrap();
        assert!(r.l2_rates().last().unwrap() > &1.7);
        assert!(r.energy_rates().last().unwrap() > &0.85);
    }

    #[test]
    fn decay_fit_cases() {
        let exact: Vec<f64> = (1..=12).map(|n| (-(n as f64).sqrt()).exp()).collect();
        let f = decay_fit(&exact, 0.5).unwrap();
        assert!((f.slope + 1.0).abs() < 1e-10 && (f.r2 - 1.0).abs() < 1e-10);
        let f = decay_fit(&[3.0; 7], 0.5).unwrap();
        assert_eq!((f.slope, f.r2), (0.0, 1.0));
        assert!(matches!(decay_fit(&[1.0, 2.0, f64::INFINITY, 3.0, 4.0], 0.5), Err(Error::FitRefused(4))));
    }

    #[test]
    fn separation_of_concentric_blocks() {
        let mesh = TriMesh::structured(12).unwrap();
        let block = |lo: usize, hi: usize| {
            ElementSet::new(
                (0..mesh.num_elements())
                    .filter(|&e| {
                        let (i, j) = mesh.square_of(e);
                        (lo..hi).contains(&i) && (lo..hi).contains(&j)
                    })
                    .collect(),
            )
        };
        let d = separation(&mesh, &block(4, 8), &block(2, 10));
        assert!((d - 2.0 / 12.0).abs() < 1e-14, "{d}");
    }

    #[test]
    fn caccioppoli_ratio_is_finite() {
        let mesh = TriMesh::structured(24).unwrap();
        let c = Coefficient::generate(&CoefficientKind::LogUniform { min: 0.5, max: 2.0, seed: 1 }, &mesh).unwrap();
        let asm = Assembler::new(&mesh, &c, 10f64.sqrt()).unwrap();
        let dec = Decomposition::build(&mesh, 4, 2, 1).unwrap();
        let omega = &dec.subdomains()[5].omega;
        // vertex-neighbour growth advances by h / sqrt(2) along the diagonal
        let outer = grow(&mesh, omega, 7);
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let r = caccioppoli(&asm, omega, &outer, 10, &mut rng).unwrap();
        assert!(r.delta > 3.0 * r.max_h);
        assert!(r.max_ratio.is_finite() && r.max_ratio > 0.0);
    }

    fn suite_on(n: usize, gamma0: f64) -> PropertyReport {
        let mesh = TriMesh::structured(n).unwrap();
        let c = Coefficient::generate(&CoefficientKind::LogUniform { min: 0.1, max: 10.0, seed: 3 }, &mesh).unwrap();
        let asm = Assembler::new(&mesh, &c, gamma0).unwrap();
        let dec = Decomposition::build(&mesh, 3, 2, 1).unwrap();
        run_property_suite(&SuiteInput { assembler: asm, decomposition: &dec, seed: 1, samples: 3 }, None)
    }

    #[test]
    fn suite_passes_on_valid_input() {
        let report = suite_on(12, 10f64.sqrt());
        assert!(report.all_passed(), "{}", report.to_text());
        assert!(report.to_json().unwrap().contains("\"caccioppoli\""));
    }

    #[test]
    fn suite_names_coercivity_failure() {
        let report = suite_on(12, 0.01);
        let first = report.first_failure().unwrap();
        assert_eq!((first.module.as_str(), first.name.as_str()), ("dg_forms", "coercivity"));
    }
}
