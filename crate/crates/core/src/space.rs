//! Restriction, extension by zero, the `H0` subspace and the partition of unity.

use std::collections::VecDeque;

use crate::decomposition::{d_minus, Decomposition, ElementSet};
use crate::error::{Error, Result};
use crate::forms::Assembler;
use crate::mesh::TriMesh;

/// Local dofs of `D-` inside `D`: the support of `H0(D)`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SubspaceMask {
    dim: usize,
    member: Vec<bool>,
}

impl SubspaceMask {
    pub fn new(mesh: &TriMesh, domain: &ElementSet) -> Self {
        let interior = d_minus(mesh, domain);
        let mut member = vec![false; 3 * domain.len()];
        for (k, e) in domain.iter().enumerate() {
            if interior.contains(e) {
                member[3 * k..3 * k + 3].fill(true);
            }
        }
        Self { dim: member.len(), member }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn contains(&self, dof: usize) -> bool {
        self.member[dof]
    }

    /// Dofs where `H0` functions may be nonzero, ascending.
    pub fn interior_dofs(&self) -> Vec<usize> {
        (0..self.dim).filter(|&d| self.member[d]).collect()
    }

    /// Dofs on the layer `D \ D-`, ascending.
    pub fn layer_dofs(&self) -> Vec<usize> {
        (0..self.dim).filter(|&d| !self.member[d]).collect()
    }

    /// First layer dof carrying a nonzero value.
    pub fn violation(&self, v: &[f64]) -> Option<(usize, f64)> {
        (0..self.dim).find(|&d| !self.member[d] && v[d] != 0.0).map(|d| (d, v[d]))
    }

    pub fn is_member(&self, v: &[f64]) -> bool {
        v.len() == self.dim && self.violation(v).is_none()
    }

    /// Zeroes every layer dof.
    pub fn project(&self, v: &mut [f64]) {
        for (x, &m) in v.iter_mut().zip(&self.member) {
            if !m {
                *x = 0.0;
            }
        }
    }
}

/// Positions of `inner` elements inside `outer`.
fn embedding(inner: &ElementSet, outer: &ElementSet) -> Result<Vec<usize>> {
    inner.iter().map(|e| outer.position(e).ok_or(Error::NotNested(e))).collect()
}

/// `R(v) = v|_inner` for a dof vector on `outer`.
pub fn restrict(u: &[f64], outer: &ElementSet, inner: &ElementSet) -> Result<Vec<f64>> {
    check_len(u, outer)?;
    let map = embedding(inner, outer)?;
    Ok(map.iter().flat_map(|&k| u[3 * k..3 * k + 3].iter().copied()).collect())
}

/// `E(v)`: keeps `v` on `inner-` and sets it to zero everywhere else in `outer`.
pub fn extend_by_zero(mesh: &TriMesh, v: &[f64], inner: &ElementSet, outer: &ElementSet) -> Result<Vec<f64>> {
    check_len(v, inner)?;
    let map = embedding(inner, outer)?;
    let mask = SubspaceMask::new(mesh, inner);
    if let Some((dof, value)) = mask.violation(v) {
        return Err(Error::NotInH0 { dof, value });
    }
    let mut out = vec![0.0; 3 * outer.len()];
    for (k, &ko) in map.iter().enumerate() {
        out[3 * ko..3 * ko + 3].copy_from_slice(&v[3 * k..3 * k + 3]);
    }
    Ok(out)
}

fn check_len(u: &[f64], domain: &ElementSet) -> Result<()> {
    if u.len() == 3 * domain.len() {
        Ok(())
    } else {
        Err(Error::DimensionMismatch { expected: 3 * domain.len(), got: u.len() })
    }
}

/// Continuous piecewise-linear partition of unity, stored by vertex values.
#[derive(Debug, Clone)]
pub struct PartitionOfUnity {
    values: Vec<Vec<f64>>,
}

impl PartitionOfUnity {
    /// Raw weights rise linearly, in edge hops, from zero on the vertices that
    /// touch elements outside `omega_j-` to one after `2 (overlap - 1)` hops;
    /// the weights are then normalised vertex by vertex.
    pub fn build(mesh: &TriMesh, decomposition: &Decomposition) -> Result<Self> {
        let ramp = (2 * decomposition.overlap().saturating_sub(1)).max(1);
        let neighbours = vertex_neighbours(mesh);
        let mut raw: Vec<Vec<f64>> = decomposition
            .subdomains()
            .iter()
            .map(|s| {
                let interior = d_minus(mesh, &s.omega).mask(mesh.num_elements());
                let zero: Vec<usize> = (0..mesh.num_vertices())
                    .filter(|&v| mesh.vertex_elements(v).iter().any(|&e| !interior[e]))
                    .collect();
                let hops = hop_distance(&neighbours, &zero, ramp);
                hops.into_iter().map(|d| d.min(ramp) as f64 / ramp as f64).collect()
            })
            .collect();

        for v in 0..mesh.num_vertices() {
            let total: f64 = raw.iter().map(|w| w[v]).sum();
            if total <= 0.0 {
                return Err(Error::UncoveredVertex(v));
            }
            for w in raw.iter_mut() {
                w[v] /= total;
            }
        }
        Ok(Self { values: raw })
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// Vertex values of `chi_j`.
    pub fn member(&self, j: usize) -> &[f64] {
        &self.values[j]
    }

    /// Largest `|grad chi_j|` over all elements.
    pub fn gradient_sup(&self, mesh: &TriMesh, j: usize) -> f64 {
        gradient_sup(mesh, &self.values[j])
    }

    /// One line of vertex values per subdomain.
    pub fn to_text(&self) -> String {
        self.values.iter().map(|w| w.iter().map(|x| format!("{x:.17e}")).collect::<Vec<_>>().join(" ") + "\n").collect()
    }
}

fn vertex_neighbours(mesh: &TriMesh) -> Vec<Vec<usize>> {
    let mut nb = vec![Vec::new(); mesh.num_vertices()];
    for tri in mesh.elements() {
        for k in 0..3 {
            let (a, b) = (tri[k], tri[(k + 1) % 3]);
            nb[a].push(b);
            nb[b].push(a);
        }
    }
    for list in nb.iter_mut() {
        list.sort_unstable();
        list.dedup();
    }
    nb
}

/// Multi-source breadth-first hop count, saturated at `cap`.
fn hop_distance(neighbours: &[Vec<usize>], sources: &[usize], cap: usize) -> Vec<usize> {
    let mut dist = vec![cap; neighbours.len()];
    let mut queue = VecDeque::new();
    for &s in sources {
        dist[s] = 0;
        queue.push_back(s);
    }
    while let Some(v) = queue.pop_front() {
        let next = dist[v] + 1;
        if next >= cap {
            continue;
        }
        for &w in &neighbours[v] {
            if dist[w] > next {
                dist[w] = next;
                queue.push_back(w);
            }
        }
    }
    dist
}

/// Largest elementwise gradient of the piecewise-linear function with vertex values `chi`.
pub fn gradient_sup(mesh: &TriMesh, chi: &[f64]) -> f64 {
    (0..mesh.num_elements())
        .map(|e| {
            let g = mesh.basis_gradients(e);
            let t = mesh.elements()[e];
            let gx: f64 = (0..3).map(|a| chi[t[a]] * g[a][0]).sum();
            let gy: f64 = (0..3).map(|a| chi[t[a]] * g[a][1]).sum();
            (gx * gx + gy * gy).sqrt()
        })
        .fold(0.0, f64::max)
}

/// Elementwise Lagrange interpolant of `chi * u`: each nodal value of `u` is
/// multiplied by `chi` at the corresponding vertex.
pub fn interpolate_product(mesh: &TriMesh, chi: &[f64], domain: &ElementSet, u: &[f64]) -> Result<Vec<f64>> {
    check_len(u, domain)?;
    let mut out = vec![0.0; u.len()];
    for (k, e) in domain.iter().enumerate() {
        for (a, &v) in mesh.elements()[e].iter().enumerate() {
            out[3 * k + a] = chi[v] * u[3 * k + a];
        }
    }
    Ok(out)
}

/// `sum_j E(I_h(chi_j u_j))` with `locals[j]` a dof vector on `omega_j`.
pub fn pou_blend(
    mesh: &TriMesh,
    decomposition: &Decomposition,
    pou: &PartitionOfUnity,
    locals: &[Vec<f64>],
) -> Result<Vec<f64>> {
    if locals.len() != decomposition.len() {
        return Err(Error::DimensionMismatch { expected: decomposition.len(), got: locals.len() });
    }
    let all = ElementSet::all(mesh);
    let mut global = vec![0.0; 3 * mesh.num_elements()];
    for (j, (sub, local)) in decomposition.subdomains().iter().zip(locals).enumerate() {
        let blended = interpolate_product(mesh, pou.member(j), &sub.omega, local)?;
        let extended = extend_by_zero(mesh, &blended, &sub.omega, &all)?;
        for (g, x) in global.iter_mut().zip(extended) {
            *g += x;
        }
    }
    Ok(global)
}

/// Both sides of the locality identity `B_D(u|_D, v) = B_D*(u, E(v))`.
pub fn locality_check(
    assembler: &Assembler<'_>,
    inner: &ElementSet,
    outer: &ElementSet,
    u: &[f64],
    v: &[f64],
) -> Result<(f64, f64)> {
    let local = assembler.bilinear(inner)?.bilinear(&restrict(u, outer, inner)?, v);
    let extended = extend_by_zero(assembler.mesh, v, inner, outer)?;
    let global = assembler.bilinear(outer)?.bilinear(u, &extended);
    Ok((local, global))
}
