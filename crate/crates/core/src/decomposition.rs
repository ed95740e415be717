//! Mesh-resolved overlapping decompositions and the element hulls `D+`, `D-`.

use crate::error::{Error, Result};
use crate::mesh::TriMesh;

/// Sorted, duplicate-free set of element indices.
#[derive(Debug, Clone, PartialEq, Eq, Default, Hash)]
pub struct ElementSet {
    members: Vec<usize>,
}

impl ElementSet {
    pub fn new(mut members: Vec<usize>) -> Self {
        members.sort_unstable();
        members.dedup();
        Self { members }
    }

    pub fn all(mesh: &TriMesh) -> Self {
        Self { members: (0..mesh.num_elements()).collect() }
    }

    pub fn empty() -> Self {
        Self::default()
    }

    fn from_mask(mask: &[bool]) -> Self {
        Self { members: mask.iter().enumerate().filter_map(|(e, &m)| m.then_some(e)).collect() }
    }

    pub fn members(&self) -> &[usize] {
        &self.members
    }

    pub fn len(&self) -> usize {
        self.members.len()
    }

    pub fn is_empty(&self) -> bool {
        self.members.is_empty()
    }

    pub fn contains(&self, e: usize) -> bool {
        self.members.binary_search(&e).is_ok()
    }

    /// Position of element `e` inside the set; local dofs of `e` are `3 * pos..3 * pos + 3`.
    pub fn position(&self, e: usize) -> Option<usize> {
        self.members.binary_search(&e).ok()
    }

    pub fn iter(&self) -> impl Iterator<Item = usize> + '_ {
        self.members.iter().copied()
    }

    pub fn is_subset_of(&self, other: &ElementSet) -> bool {
        self.first_missing_from(other).is_none()
    }

    pub(crate) fn first_missing_from(&self, other: &ElementSet) -> Option<usize> {
        self.iter().find(|&e| !other.contains(e))
    }

    pub fn difference(&self, other: &ElementSet) -> ElementSet {
        Self { members: self.iter().filter(|&e| !other.contains(e)).collect() }
    }

    pub fn mask(&self, num_elements: usize) -> Vec<bool> {
        let mut m = vec![false; num_elements];
        for e in self.iter() {
            m[e] = true;
        }
        m
    }

    /// Total area of the elements.
    pub fn area(&self, mesh: &TriMesh) -> f64 {
        self.iter().map(|e| mesh.area(e)).sum()
    }

    /// Whether any element has a face on the boundary of the unit square.
    pub fn touches_boundary(&self, mesh: &TriMesh) -> bool {
        mesh.boundary_faces().iter().any(|f| self.contains(f.element))
    }
}

/// `D+`: `D` together with every element sharing at least a vertex with it.
pub fn d_plus(mesh: &TriMesh, domain: &ElementSet) -> ElementSet {
    let mut mask = domain.mask(mesh.num_elements());
    for e in domain.iter() {
        for &v in &mesh.elements()[e] {
            for &nb in mesh.vertex_elements(v) {
                mask[nb] = true;
            }
        }
    }
    ElementSet::from_mask(&mask)
}

/// `D-`: elements of `D` whose closure does not touch any element outside `D`.
pub fn d_minus(mesh: &TriMesh, domain: &ElementSet) -> ElementSet {
    let mask = domain.mask(mesh.num_elements());
    let members = domain
        .iter()
        .filter(|&e| mesh.elements()[e].iter().all(|&v| mesh.vertex_elements(v).iter().all(|&nb| mask[nb])))
        .collect();
    ElementSet { members }
}

/// Repeated vertex-neighbour closure.
pub fn grow(mesh: &TriMesh, domain: &ElementSet, layers: usize) -> ElementSet {
    (0..layers).fold(domain.clone(), |d, _| d_plus(mesh, &d))
}

#[derive(Debug, Clone)]
pub struct Subdomain {
    pub omega: ElementSet,
    pub oversampled: ElementSet,
}

#[derive(Debug, Clone)]
pub struct Decomposition {
    subdomains: Vec<Subdomain>,
    grid: usize,
    overlap: usize,
    oversampling: usize,
}

impl Decomposition {
    /// `grid x grid` cells grown by `overlap` layers, then by `oversampling` more.
    pub fn build(mesh: &TriMesh, grid: usize, overlap: usize, oversampling: usize) -> Result<Self> {
        let n = mesh.subdivisions();
        if grid == 0 || grid > n {
            return Err(Error::InvalidDecomposition(format!("grid size {grid} must lie in 1..={n}")));
        }
        if overlap < 2 {
            return Err(Error::InvalidDecomposition(format!(
                "overlap {overlap} below 2 layers leaves no room for a partition of unity"
            )));
        }
        if oversampling < 1 {
            return Err(Error::InvalidDecomposition("oversampling must be at least one layer".into()));
        }
        if grid == 1 {
            let all = ElementSet::all(mesh);
            return Ok(Self {
                subdomains: vec![Subdomain { omega: all.clone(), oversampled: all }],
                grid,
                overlap,
                oversampling,
            });
        }

        let mut cells = vec![Vec::new(); grid * grid];
        for e in 0..mesh.num_elements() {
            let (i, j) = mesh.square_of(e);
            cells[(j * grid / n) * grid + i * grid / n].push(e);
        }
        let mut subdomains = Vec::with_capacity(cells.len());
        for (j, cell) in cells.into_iter().enumerate() {
            let omega = grow(mesh, &ElementSet::new(cell), overlap);
            if omega.len() == mesh.num_elements() {
                return Err(Error::InvalidDecomposition(format!(
                    "subdomain {j} covers the whole mesh; reduce the overlap"
                )));
            }
            let oversampled = grow(mesh, &omega, oversampling);
            subdomains.push(Subdomain { omega, oversampled });
        }
        Ok(Self { subdomains, grid, overlap, oversampling })
    }

    pub fn subdomains(&self) -> &[Subdomain] {
        &self.subdomains
    }

    pub fn len(&self) -> usize {
        self.subdomains.len()
    }

    pub fn is_empty(&self) -> bool {
        self.subdomains.is_empty()
    }

    pub fn grid(&self) -> usize {
        self.grid
    }

    pub fn overlap(&self) -> usize {
        self.overlap
    }

    pub fn oversampling(&self) -> usize {
        self.oversampling
    }

    /// Maximum number of `omega_j` containing one element.
    pub fn coloring_constant(&self, mesh: &TriMesh) -> usize {
        max_multiplicity(mesh, self.subdomains.iter().map(|s| &s.omega))
    }

    /// Maximum number of oversampling domains containing one element.
    pub fn oversampled_coloring_constant(&self, mesh: &TriMesh) -> usize {
        max_multiplicity(mesh, self.subdomains.iter().map(|s| &s.oversampled))
    }

    /// First element not covered by any `omega_j-`, if any.
    pub fn uncovered_by_interiors(&self, mesh: &TriMesh) -> Option<usize> {
        let mut covered = vec![false; mesh.num_elements()];
        for s in &self.subdomains {
            for e in d_minus(mesh, &s.omega).iter() {
                covered[e] = true;
            }
        }
        covered.iter().position(|c| !c)
    }

    /// Two lines per subdomain: `omega_j`, then the oversampling domain.
    pub fn to_text(&self) -> String {
        let line = |s: &ElementSet| s.iter().map(|e| e.to_string()).collect::<Vec<_>>().join(" ") + "\n";
        self.subdomains.iter().map(|s| line(&s.omega) + &line(&s.oversampled)).collect()
    }
}

fn max_multiplicity<'a>(mesh: &TriMesh, sets: impl Iterator<Item = &'a ElementSet>) -> usize {
    let mut count = vec![0usize; mesh.num_elements()];
    for s in sets {
        for e in s.iter() {
            count[e] += 1;
        }
    }
    count.into_iter().max().unwrap_or(0)
}
