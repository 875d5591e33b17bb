//! Structured simplicial meshes of intervals and axis-aligned rectangles.
//!
//! A mesh is immutable after construction: node coordinates, element
//! connectivity, per-element measures and boundary markers are all fixed up
//! front, so meshes can be shared freely across threads.

use std::io::{self, Write};

use crate::error::{Error, Result};

/// How rectangle cells are split into triangles.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum DiagonalPattern {
    /// Every cell split along the same (bottom-left to top-right) diagonal.
    /// Reproducible and simple, but mildly anisotropic.
    #[default]
    Fixed,
    /// Diagonal direction alternates with cell parity, restoring the mirror
    /// symmetries of the square. Useful when symmetry inheritance matters.
    UnionJack,
}

/// Conforming simplicial triangulation with Dirichlet boundary markers.
#[derive(Debug, Clone)]
pub struct Mesh {
    dim: usize,
    /// Node coordinates, `dim` entries per node.
    coords: Vec<f64>,
    /// Element connectivity, `dim + 1` node indices per element,
    /// counter-clockwise in 2D.
    elems: Vec<usize>,
    boundary: Vec<bool>,
    volumes: Vec<f64>,
}

impl Mesh {
    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn num_nodes(&self) -> usize {
        self.coords.len() / self.dim
    }

    pub fn num_elements(&self) -> usize {
        self.elems.len() / (self.dim + 1)
    }

    /// Coordinates of node `i` (`dim` entries).
    pub fn node(&self, i: usize) -> &[f64] {
        &self.coords[i * self.dim..(i + 1) * self.dim]
    }

    /// Node indices of element `e` (`dim + 1` entries).
    pub fn element(&self, e: usize) -> &[usize] {
        let k = self.dim + 1;
        &self.elems[e * k..(e + 1) * k]
    }

    pub fn element_volume(&self, e: usize) -> f64 {
        self.volumes[e]
    }

    pub fn is_boundary(&self, node: usize) -> bool {
        self.boundary[node]
    }

    pub fn boundary_node_count(&self) -> usize {
        self.boundary.iter().filter(|&&b| b).count()
    }

    pub fn total_volume(&self) -> f64 {
        self.volumes.iter().sum()
    }

    /// Componentwise (min, max) over all node coordinates. The second
    /// component is (0, 0) for 1D meshes.
    pub fn bounding_box(&self) -> ([f64; 2], [f64; 2]) {
        let mut lo = [f64::INFINITY; 2];
        let mut hi = [f64::NEG_INFINITY; 2];
        for i in 0..self.num_nodes() {
            let c = self.node(i);
            for d in 0..self.dim {
                lo[d] = lo[d].min(c[d]);
                hi[d] = hi[d].max(c[d]);
            }
        }
        for d in self.dim..2 {
            lo[d] = 0.0;
            hi[d] = 0.0;
        }
        (lo, hi)
    }

    /// Bijection between interior nodes and contiguous solver indices.
    pub fn interior_dof_map(&self) -> DofMap {
        let mut node_to_dof = vec![None; self.num_nodes()];
        let mut dof_to_node = Vec::new();
        for (node, &on_boundary) in self.boundary.iter().enumerate() {
            if !on_boundary {
                node_to_dof[node] = Some(dof_to_node.len());
                dof_to_node.push(node);
            }
        }
        DofMap { node_to_dof, dof_to_node }
    }

    /// Plain-text dump: one node per line ("x" or "x y"), a blank separator,
    /// then one element per line as node indices.
    pub fn dump<W: Write>(&self, out: &mut W) -> io::Result<()> {
        for i in 0..self.num_nodes() {
            let c = self.node(i);
            if self.dim == 1 {
                writeln!(out, "{}", c[0])?;
            } else {
                writeln!(out, "{} {}", c[0], c[1])?;
            }
        }
        writeln!(out)?;
        for e in 0..self.num_elements() {
            let idx: Vec<String> = self.element(e).iter().map(|i| i.to_string()).collect();
            writeln!(out, "{}", idx.join(" "))?;
        }
        Ok(())
    }
}

/// Interior-node numbering for Dirichlet problems.
#[derive(Debug, Clone)]
pub struct DofMap {
    node_to_dof: Vec<Option<usize>>,
    dof_to_node: Vec<usize>,
}

impl DofMap {
    pub fn num_dofs(&self) -> usize {
        self.dof_to_node.len()
    }

    pub fn dof_of(&self, node: usize) -> Option<usize> {
        self.node_to_dof[node]
    }

    pub fn node_of(&self, dof: usize) -> usize {
        self.dof_to_node[dof]
    }

    pub fn nodes(&self) -> &[usize] {
        &self.dof_to_node
    }
}

/// Uniform criss-cross triangulation of an axis-aligned rectangle:
/// (nx+1)(ny+1) nodes, 2*nx*ny triangles. Node (i, j) has index
/// j*(nx+1) + i.
pub fn build_rect_mesh(nx: usize, ny: usize, width: f64, height: f64) -> Result<Mesh> {
    build_rect_mesh_with(nx, ny, width, height, DiagonalPattern::Fixed)
}

/// As [`build_rect_mesh`], with an explicit cell-splitting pattern.
pub fn build_rect_mesh_with(
    nx: usize,
    ny: usize,
    width: f64,
    height: f64,
    pattern: DiagonalPattern,
) -> Result<Mesh> {
    if nx < 1 || ny < 1 {
        return Err(Error::InvalidMeshSpec(format!(
            "need at least one cell per direction, got {nx} x {ny}"
        )));
    }
    if !(width > 0.0) || !(height > 0.0) {
        return Err(Error::InvalidMeshSpec(format!(
            "rectangle dimensions must be positive, got {width} x {height}"
        )));
    }
    let hx = width / nx as f64;
    let hy = height / ny as f64;
    let mut coords = Vec::with_capacity(2 * (nx + 1) * (ny + 1));
    let mut boundary = Vec::with_capacity((nx + 1) * (ny + 1));
    for j in 0..=ny {
        for i in 0..=nx {
            coords.push(i as f64 * hx);
            coords.push(j as f64 * hy);
            boundary.push(i == 0 || i == nx || j == 0 || j == ny);
        }
    }
    let mut elems = Vec::with_capacity(6 * nx * ny);
    let node = |i: usize, j: usize| j * (nx + 1) + i;
    for j in 0..ny {
        for i in 0..nx {
            let (bl, br) = (node(i, j), node(i + 1, j));
            let (tl, tr) = (node(i, j + 1), node(i + 1, j + 1));
            let rising = match pattern {
                DiagonalPattern::Fixed => true,
                DiagonalPattern::UnionJack => (i + j) % 2 == 0,
            };
            if rising {
                // Split along bl-tr.
                elems.extend_from_slice(&[bl, br, tr]);
                elems.extend_from_slice(&[bl, tr, tl]);
            } else {
                // Split along br-tl.
                elems.extend_from_slice(&[bl, br, tl]);
                elems.extend_from_slice(&[br, tr, tl]);
            }
        }
    }
    let mut mesh = Mesh {
        dim: 2,
        coords,
        elems,
        boundary,
        volumes: Vec::new(),
    };
    mesh.volumes = compute_volumes(&mesh)?;
    Ok(mesh)
}

/// n+1 equally spaced nodes on [0, length]; boundary nodes are the two ends.
pub fn build_interval_mesh(n: usize, length: f64) -> Result<Mesh> {
    if n < 2 {
        return Err(Error::InvalidMeshSpec(format!(
            "interval mesh needs n >= 2 so an interior node exists, got {n}"
        )));
    }
    if !(length > 0.0) {
        return Err(Error::InvalidMeshSpec(format!(
            "interval length must be positive, got {length}"
        )));
    }
    let h = length / n as f64;
    let coords: Vec<f64> = (0..=n).map(|i| i as f64 * h).collect();
    let mut elems = Vec::with_capacity(2 * n);
    for i in 0..n {
        elems.extend_from_slice(&[i, i + 1]);
    }
    let mut boundary = vec![false; n + 1];
    boundary[0] = true;
    boundary[n] = true;
    let mut mesh = Mesh {
        dim: 1,
        coords,
        elems,
        boundary,
        volumes: Vec::new(),
    };
    mesh.volumes = compute_volumes(&mesh)?;
    Ok(mesh)
}

fn compute_volumes(mesh: &Mesh) -> Result<Vec<f64>> {
    let mut volumes = Vec::with_capacity(mesh.num_elements());
    for e in 0..mesh.num_elements() {
        let el = mesh.element(e);
        let vol = if mesh.dim == 1 {
            mesh.node(el[1])[0] - mesh.node(el[0])[0]
        } else {
            let (a, b, c) = (mesh.node(el[0]), mesh.node(el[1]), mesh.node(el[2]));
            0.5 * ((b[0] - a[0]) * (c[1] - a[1]) - (c[0] - a[0]) * (b[1] - a[1]))
        };
        if !(vol > 0.0) {
            return Err(Error::InvalidMeshSpec(format!(
                "element {e} degenerate or inverted (signed volume {vol})"
            )));
        }
        volumes.push(vol);
    }
    Ok(volumes)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn single_cell_rectangle() {
        let m = build_rect_mesh(1, 1, 1.0, 1.0).unwrap();
        assert_eq!(m.num_nodes(), 4);
        assert_eq!(m.num_elements(), 2);
        assert!((m.total_volume() - 1.0).abs() < 1e-15);
        assert_eq!(m.interior_dof_map().num_dofs(), 0);
    }

    #[test]
    fn two_by_two_counts() {
        let m = build_rect_mesh(2, 2, 1.0, 1.0).unwrap();
        assert_eq!(m.num_nodes(), 9);
        assert_eq!(m.num_elements(), 8);
        assert_eq!(m.boundary_node_count(), 8);
        let dofs = m.interior_dof_map();
        assert_eq!(dofs.num_dofs(), 1);
        let center = dofs.node_of(0);
        assert_eq!(m.node(center), &[0.5, 0.5]);
    }

    #[test]
    fn production_size_counts() {
        let m = build_rect_mesh(64, 64, 1.0, 1.0).unwrap();
        assert_eq!(m.num_nodes(), 4225);
        assert_eq!(m.num_elements(), 8192);
        assert!((m.total_volume() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn rectangle_area_is_exact() {
        let m = build_rect_mesh(7, 3, 2.5, 0.75).unwrap();
        assert!((m.total_volume() - 2.5 * 0.75).abs() < 1e-12 * 2.5 * 0.75);
    }

    #[test]
    fn union_jack_same_counts_as_fixed() {
        let a = build_rect_mesh(4, 4, 1.0, 1.0).unwrap();
        let b = build_rect_mesh_with(4, 4, 1.0, 1.0, DiagonalPattern::UnionJack).unwrap();
        assert_eq!(a.num_nodes(), b.num_nodes());
        assert_eq!(a.num_elements(), b.num_elements());
        assert!((a.total_volume() - b.total_volume()).abs() < 1e-15);
    }

    #[test]
    fn triangles_are_counter_clockwise() {
        for pattern in [DiagonalPattern::Fixed, DiagonalPattern::UnionJack] {
            let m = build_rect_mesh_with(3, 2, 1.0, 1.0, pattern).unwrap();
            for e in 0..m.num_elements() {
                assert!(m.element_volume(e) > 0.0);
            }
        }
    }

    #[test]
    fn interval_mesh_basics() {
        let m = build_interval_mesh(4, 1.0).unwrap();
        assert_eq!(m.num_nodes(), 5);
        assert_eq!(m.num_elements(), 4);
        assert_eq!(m.interior_dof_map().num_dofs(), 3);
        let m2 = build_interval_mesh(2, 2.0).unwrap();
        assert_eq!(m2.node(0), &[0.0]);
        assert_eq!(m2.node(1), &[1.0]);
        assert_eq!(m2.node(2), &[2.0]);
    }

    #[test]
    fn fine_interval_spacing() {
        let m = build_interval_mesh(1000, 1.0).unwrap();
        assert_eq!(m.num_nodes(), 1001);
        assert!((m.element_volume(500) - 1e-3).abs() < 1e-15);
    }

    #[test]
    fn rejects_degenerate_specs() {
        assert!(build_rect_mesh(0, 1, 1.0, 1.0).is_err());
        assert!(build_rect_mesh(1, 1, 0.0, 1.0).is_err());
        assert!(build_rect_mesh(1, 1, 1.0, -2.0).is_err());
        assert!(build_interval_mesh(1, 1.0).is_err());
        assert!(build_interval_mesh(4, 0.0).is_err());
    }

    #[test]
    fn refinement_nests_node_sets() {
        let coarse = build_rect_mesh(3, 2, 1.0, 1.0).unwrap();
        let fine = build_rect_mesh(6, 4, 1.0, 1.0).unwrap();
        for i in 0..coarse.num_nodes() {
            let c = coarse.node(i);
            let found = (0..fine.num_nodes())
                .any(|j| (fine.node(j)[0] - c[0]).abs() < 1e-14 && (fine.node(j)[1] - c[1]).abs() < 1e-14);
            assert!(found, "coarse node {c:?} missing from refinement");
        }
    }

    #[test]
    fn interior_nodes_have_full_element_stars() {
        let m = build_rect_mesh(4, 3, 1.0, 1.0).unwrap();
        let mut star_volume = vec![0.0; m.num_nodes()];
        for e in 0..m.num_elements() {
            for &v in m.element(e) {
                star_volume[v] += m.element_volume(e);
            }
        }
        let cell = m.total_volume() / (4.0 * 3.0);
        for node in 0..m.num_nodes() {
            if !m.is_boundary(node) {
                // Fixed-diagonal criss-cross star: 6 triangles, 3 cells' area.
                assert!(star_volume[node] >= 2.9 * cell, "orphan node {node}");
            }
        }
    }

    #[test]
    fn boundary_markers_match_geometry() {
        let m = build_rect_mesh(5, 4, 2.0, 1.0).unwrap();
        for i in 0..m.num_nodes() {
            let c = m.node(i);
            let on_edge =
                c[0] == 0.0 || (c[0] - 2.0).abs() < 1e-14 || c[1] == 0.0 || (c[1] - 1.0).abs() < 1e-14;
            assert_eq!(m.is_boundary(i), on_edge, "node {i} at {c:?}");
        }
    }

    #[test]
    fn dump_round_trips_by_eye() {
        let m = build_interval_mesh(2, 1.0).unwrap();
        let mut buf = Vec::new();
        m.dump(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(text, "0\n0.5\n1\n\n0 1\n1 2\n");
    }
}
