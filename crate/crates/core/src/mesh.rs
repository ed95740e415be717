//! Structured triangular meshes of the unit square with face connectivity.
//!
//! Each of the `n x n` squares is split along its lower-left to upper-right
//! diagonal. Element `2 * (row * n + col)` is the lower-right triangle and
//! `2 * (row * n + col) + 1` the upper-left one; both are stored
//! counterclockwise.

use std::collections::BTreeMap;

use crate::error::{Error, Result};

pub type Point = [f64; 2];

/// A face shared by two elements. `elements[0]` has the smaller index.
#[derive(Debug, Clone, PartialEq)]
pub struct InteriorFace {
    pub elements: [usize; 2],
    pub vertices: [usize; 2],
    pub diameter: f64,
}

/// A face on the boundary of the unit square.
#[derive(Debug, Clone, PartialEq)]
pub struct BoundaryFace {
    pub element: usize,
    pub vertices: [usize; 2],
    pub diameter: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum FaceRef {
    Interior(usize),
    Boundary(usize),
}

#[derive(Debug, Clone)]
pub struct TriMesh {
    n: usize,
    vertices: Vec<Point>,
    elements: Vec<[usize; 3]>,
    interior_faces: Vec<InteriorFace>,
    boundary_faces: Vec<BoundaryFace>,
    element_faces: Vec<[FaceRef; 3]>,
    element_diameters: Vec<f64>,
    areas: Vec<f64>,
    vertex_elements: Vec<Vec<usize>>,
}

impl TriMesh {
    /// Splits the unit square into `n x n` squares of two triangles each.
    pub fn structured(n: usize) -> Result<Self> {
        if n == 0 {
            return Err(Error::InvalidMeshSize(n));
        }
        let h = 1.0 / n as f64;
        let mut vertices = Vec::with_capacity((n + 1) * (n + 1));
        for j in 0..=n {
            for i in 0..=n {
                vertices.push([i as f64 * h, j as f64 * h]);
            }
        }
        let vid = |i: usize, j: usize| j * (n + 1) + i;
        let mut elements = Vec::with_capacity(2 * n * n);
        for j in 0..n {
            for i in 0..n {
                let (v00, v10, v01, v11) = (vid(i, j), vid(i + 1, j), vid(i, j + 1), vid(i + 1, j + 1));
                elements.push([v00, v10, v11]);
                elements.push([v00, v11, v01]);
            }
        }
        Ok(Self::from_parts(n, vertices, elements))
    }

    fn from_parts(n: usize, vertices: Vec<Point>, elements: Vec<[usize; 3]>) -> Self {
        // (min vertex, max vertex) -> adjacent elements in ascending order
        let mut edges: BTreeMap<(usize, usize), Vec<usize>> = BTreeMap::new();
        for (e, tri) in elements.iter().enumerate() {
            for k in 0..3 {
                let (a, b) = (tri[(k + 1) % 3], tri[(k + 2) % 3]);
                edges.entry((a.min(b), a.max(b))).or_default().push(e);
            }
        }

        let mut interior_faces = Vec::new();
        let mut boundary_faces = Vec::new();
        let mut face_of_edge = BTreeMap::new();
        for (&(a, b), adj) in &edges {
            let diameter = dist(vertices[a], vertices[b]);
            match adj.as_slice() {
                [e] => {
                    face_of_edge.insert((a, b), FaceRef::Boundary(boundary_faces.len()));
                    boundary_faces.push(BoundaryFace { element: *e, vertices: [a, b], diameter });
                }
                [e1, e2] => {
                    face_of_edge.insert((a, b), FaceRef::Interior(interior_faces.len()));
                    interior_faces.push(InteriorFace {
                        elements: [*e1.min(e2), *e1.max(e2)],
                        vertices: [a, b],
                        diameter,
                    });
                }
                _ => unreachable!("non-manifold edge in a structured mesh"),
            }
        }

        let element_faces = elements
            .iter()
            .map(|tri| {
                std::array::from_fn(|k| {
                    let (a, b) = (tri[(k + 1) % 3], tri[(k + 2) % 3]);
                    face_of_edge[&(a.min(b), a.max(b))]
                })
            })
            .collect();

        let element_diameters = elements
            .iter()
            .map(|t| {
                let p = t.map(|v| vertices[v]);
                dist(p[0], p[1]).max(dist(p[1], p[2])).max(dist(p[2], p[0]))
            })
            .collect();
        let areas = elements.iter().map(|t| signed_area(t.map(|v| vertices[v]))).collect();

        let mut vertex_elements = vec![Vec::new(); vertices.len()];
        for (e, tri) in elements.iter().enumerate() {
            for &v in tri {
                vertex_elements[v].push(e);
            }
        }

        Self {
            n,
            vertices,
            elements,
            interior_faces,
            boundary_faces,
            element_faces,
            element_diameters,
            areas,
            vertex_elements,
        }
    }

    /// Subdivisions per side.
    pub fn subdivisions(&self) -> usize {
        self.n
    }

    pub fn vertices(&self) -> &[Point] {
        &self.vertices
    }

    pub fn elements(&self) -> &[[usize; 3]] {
        &self.elements
    }

    pub fn num_vertices(&self) -> usize {
        self.vertices.len()
    }

    pub fn num_elements(&self) -> usize {
        self.elements.len()
    }

    pub fn interior_faces(&self) -> &[InteriorFace] {
        &self.interior_faces
    }

    pub fn boundary_faces(&self) -> &[BoundaryFace] {
        &self.boundary_faces
    }

    /// Faces of element `e`; entry `k` is the face opposite local vertex `k`.
    pub fn element_faces(&self, e: usize) -> &[FaceRef; 3] {
        &self.element_faces[e]
    }

    /// Elements containing vertex `v`, ascending.
    pub fn vertex_elements(&self, v: usize) -> &[usize] {
        &self.vertex_elements[v]
    }

    pub fn element_diameter(&self, e: usize) -> f64 {
        self.element_diameters[e]
    }

    /// Mesh size `h = max h_T`.
    pub fn mesh_size(&self) -> f64 {
        self.element_diameters.iter().copied().fold(0.0, f64::max)
    }

    pub fn area(&self, e: usize) -> f64 {
        self.areas[e]
    }

    pub fn element_points(&self, e: usize) -> [Point; 3] {
        self.elements[e].map(|v| self.vertices[v])
    }

    /// Index of the square (row-major) the element was cut from.
    pub fn square_of(&self, e: usize) -> (usize, usize) {
        let s = e / 2;
        (s % self.n, s / self.n)
    }

    pub fn centroid(&self, e: usize) -> Point {
        let p = self.element_points(e);
        [(p[0][0] + p[1][0] + p[2][0]) / 3.0, (p[0][1] + p[1][1] + p[2][1]) / 3.0]
    }

    /// Gradients of the three barycentric basis functions of element `e`.
    pub fn basis_gradients(&self, e: usize) -> [[f64; 2]; 3] {
        let p = self.element_points(e);
        let two_area = 2.0 * self.areas[e];
        std::array::from_fn(|i| {
            let (pj, pk) = (p[(i + 1) % 3], p[(i + 2) % 3]);
            [(pj[1] - pk[1]) / two_area, (pk[0] - pj[0]) / two_area]
        })
    }

    /// Local position (0..3) of global vertex `v` inside element `e`.
    pub fn local_vertex(&self, e: usize, v: usize) -> Option<usize> {
        self.elements[e].iter().position(|&w| w == v)
    }

    /// Unit normal of the edge `vertices`, pointing out of element `e`.
    pub fn outward_normal(&self, e: usize, vertices: [usize; 2]) -> [f64; 2] {
        let (a, b) = (self.vertices[vertices[0]], self.vertices[vertices[1]]);
        let len = dist(a, b);
        let mut n = [(b[1] - a[1]) / len, (a[0] - b[0]) / len];
        let c = self.centroid(e);
        if (c[0] - a[0]) * n[0] + (c[1] - a[1]) * n[1] > 0.0 {
            n = [-n[0], -n[1]];
        }
        n
    }

    /// Whether vertex `v` lies on the boundary of the unit square.
    pub fn is_boundary_vertex(&self, v: usize) -> bool {
        let n = self.n + 1;
        let (i, j) = (v % n, v / n);
        i == 0 || j == 0 || i == self.n || j == self.n
    }

    /// Plain-text export: header counts, then one record per line with 0-based indices.
    pub fn to_text(&self) -> String {
        use std::fmt::Write;
        let mut s = String::new();
        let _ = writeln!(s, "vertices {}", self.vertices.len());
        for p in &self.vertices {
            let _ = writeln!(s, "{:.17e} {:.17e}", p[0], p[1]);
        }
        let _ = writeln!(s, "elements {}", self.elements.len());
        for t in &self.elements {
            let _ = writeln!(s, "{} {} {}", t[0], t[1], t[2]);
        }
        let _ = writeln!(s, "interior_faces {}", self.interior_faces.len());
        for f in &self.interior_faces {
            let _ = writeln!(s, "{} {} {} {}", f.elements[0], f.elements[1], f.vertices[0], f.vertices[1]);
        }
        let _ = writeln!(s, "boundary_faces {}", self.boundary_faces.len());
        for f in &self.boundary_faces {
            let _ = writeln!(s, "{} {} {}", f.element, f.vertices[0], f.vertices[1]);
        }
        s
    }
}

pub(crate) fn dist(a: Point, b: Point) -> f64 {
    ((a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2)).sqrt()
}

fn signed_area(p: [Point; 3]) -> f64 {
    0.5 * ((p[1][0] - p[0][0]) * (p[2][1] - p[0][1]) - (p[2][0] - p[0][0]) * (p[1][1] - p[0][1]))
}

/// Distance from point `p` to the segment `[a, b]`.
pub(crate) fn point_segment_distance(p: Point, a: Point, b: Point) -> f64 {
    let d = [b[0] - a[0], b[1] - a[1]];
    let len2 = d[0] * d[0] + d[1] * d[1];
    let t = if len2 > 0.0 { (((p[0] - a[0]) * d[0] + (p[1] - a[1]) * d[1]) / len2).clamp(0.0, 1.0) } else { 0.0 };
    dist(p, [a[0] + t * d[0], a[1] + t * d[1]])
}

#[cfg(test)]
mod tests {
    use super::*;

    fn euler_face_counts(n: usize) -> (usize, usize) {
        // V - E + F = 2 with F counting the outer face; boundary edges = 4n.
        let v = (n + 1) * (n + 1);
        let f = 2 * n * n + 1;
        let e = v + f - 2;
        let boundary = 4 * n;
        (e - boundary, boundary)
    }

    #[test]
    fn smallest_mesh_counts() {
        let m = TriMesh::structured(1).unwrap();
        assert_eq!(m.num_elements(), 2);
        assert_eq!(m.num_vertices(), 4);
        assert_eq!(m.interior_faces().len(), 1);
        assert_eq!(m.boundary_faces().len(), 4);
    }

    #[test]
    fn face_counts_match_euler() {
        for (n, interior, boundary) in [(2, 8, 8), (4, 40, 16)] {
            assert_eq!(euler_face_counts(n), (interior, boundary));
            let m = TriMesh::structured(n).unwrap();
            assert_eq!(m.num_elements(), 2 * n * n);
            assert_eq!(m.num_vertices(), (n + 1) * (n + 1));
            assert_eq!(m.interior_faces().len(), interior);
            assert_eq!(m.boundary_faces().len(), boundary);
        }
        for n in [3, 7, 16] {
            let m = TriMesh::structured(n).unwrap();
            assert_eq!((m.interior_faces().len(), m.boundary_faces().len()), euler_face_counts(n));
            assert_eq!(2 * m.interior_faces().len() + m.boundary_faces().len(), 3 * m.num_elements());
        }
    }

    #[test]
    fn zero_size_rejected() {
        assert!(matches!(TriMesh::structured(0), Err(Error::InvalidMeshSize(0))));
    }

    #[test]
    fn areas_positive_and_sum_to_one() {
        let m = TriMesh::structured(9).unwrap();
        let total: f64 = (0..m.num_elements()).map(|e| m.area(e)).sum();
        assert!((0..m.num_elements()).all(|e| m.area(e) > 0.0));
        assert!((total - 1.0).abs() < 1e-12);
        let max = m.mesh_size();
        let min = (0..m.num_elements()).map(|e| m.element_diameter(e)).fold(f64::MAX, f64::min);
        assert!(max / min <= 1.0 + 1e-12);
    }

    #[test]
    fn adjacency_is_symmetric() {
        let m = TriMesh::structured(5).unwrap();
        for (i, f) in m.interior_faces().iter().enumerate() {
            assert!(f.elements[0] < f.elements[1]);
            for e in f.elements {
                assert!(m.element_faces(e).contains(&FaceRef::Interior(i)));
            }
        }
        for (i, f) in m.boundary_faces().iter().enumerate() {
            assert!(m.element_faces(f.element).contains(&FaceRef::Boundary(i)));
            assert!(f.vertices.iter().all(|&v| m.is_boundary_vertex(v)));
        }
    }

    #[test]
    fn matching_mesh_intersections() {
        // Any two elements share 0, 1 or 2 vertices; sharing 2 means a common face.
        let m = TriMesh::structured(3).unwrap();
        for a in 0..m.num_elements() {
            for b in a + 1..m.num_elements() {
                let shared: Vec<usize> =
                    m.elements()[a].iter().copied().filter(|v| m.elements()[b].contains(v)).collect();
                if shared.len() == 2 {
                    let common = m.element_faces(a).iter().any(|f| m.element_faces(b).contains(f));
                    assert!(common);
                }
                assert!(shared.len() < 3);
            }
        }
    }

    #[test]
    fn gradients_reproduce_linears() {
        let m = TriMesh::structured(3).unwrap();
        for e in 0..m.num_elements() {
            let g = m.basis_gradients(e);
            let p = m.element_points(e);
            // sum of gradients of barycentrics is zero; x = sum x_i phi_i
            let sx: f64 = (0..3).map(|i| p[i][0] * g[i][0]).sum();
            let sy: f64 = (0..3).map(|i| p[i][1] * g[i][1]).sum();
            assert!((sx - 1.0).abs() < 1e-12 && (sy - 1.0).abs() < 1e-12);
            assert!((g[0][0] + g[1][0] + g[2][0]).abs() < 1e-12);
        }
    }

    #[test]
    fn outward_normals_are_unit_and_outward() {
        let m = TriMesh::structured(4).unwrap();
        for f in m.boundary_faces() {
            let n = m.outward_normal(f.element, f.vertices);
            assert!(((n[0] * n[0] + n[1] * n[1]).sqrt() - 1.0).abs() < 1e-14);
            let mid = [
                0.5 * (m.vertices()[f.vertices[0]][0] + m.vertices()[f.vertices[1]][0]),
                0.5 * (m.vertices()[f.vertices[0]][1] + m.vertices()[f.vertices[1]][1]),
            ];
            let probe = [mid[0] + 1e-3 * n[0], mid[1] + 1e-3 * n[1]];
            assert!(probe.iter().any(|&c| !(0.0..=1.0).contains(&c)));
        }
    }

    #[test]
    fn text_export_lists_every_record() {
        let m = TriMesh::structured(2).unwrap();
        let text = m.to_text();
        assert_eq!(text.lines().count(), 4 + 9 + 8 + 8 + 8);
        assert!(text.starts_with("vertices 9\n"));
    }
}
