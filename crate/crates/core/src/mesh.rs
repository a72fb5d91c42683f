//! Simplicial meshes in two and three dimensions.
//!
//! A [`MeshLevel`] stores vertex coordinates and cell connectivity together with
//! the derived topology (edges, facets, facet-cell adjacency, vertex stars) and
//! boundary markers. Uniform refinement records a [`Genealogy`] so that fine
//! entities can be related to the coarse simplex that contains them.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::ops::Range;
use std::path::Path;

use thiserror::Error;

/// Sentinel for "no entity".
pub const NONE: usize = usize::MAX;

/// Local edges of a triangle: edge `k` is opposite vertex `k`.
pub const LOCAL_EDGES_2D: [[usize; 2]; 3] = [[1, 2], [0, 2], [0, 1]];
/// Local edges of a tetrahedron.
pub const LOCAL_EDGES_3D: [[usize; 2]; 6] = [[0, 1], [0, 2], [0, 3], [1, 2], [1, 3], [2, 3]];

#[derive(Debug, Error)]
pub enum MeshError {
    #[error("dimension must be 2 or 3, got {0}")]
    BadDimension(usize),
    #[error("subdivision count must be at least 1 on every axis")]
    BadSubdivision,
    #[error("cell {cell} has non-positive signed volume {volume:e}")]
    InvertedCell { cell: usize, volume: f64 },
    #[error("vertex {0} is not referenced by any cell")]
    DanglingVertex(usize),
    #[error("cell {cell} references vertex {vertex} out of range")]
    VertexOutOfRange { cell: usize, vertex: usize },
    #[error("facet {0:?} is shared by more than two cells")]
    NonManifold(Vec<usize>),
    #[error("boundary facet {0:?} carries no marker")]
    MissingMarker(Vec<usize>),
    #[error("entity id {id} out of range (count {count})")]
    OutOfRange { id: usize, count: usize },
    #[error("parse error on line {line}: {msg}")]
    Parse { line: usize, msg: String },
    #[error("cell on line {line} has {found} vertices, expected {expected} for a simplex")]
    NonSimplicial {
        line: usize,
        found: usize,
        expected: usize,
    },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Smallest coarse simplex containing a fine entity, given by its sorted
/// coarse vertex ids.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Carrier {
    verts: [usize; 4],
    len: u8,
}

impl Carrier {
    fn vertex(v: usize) -> Self {
        Carrier {
            verts: [v, NONE, NONE, NONE],
            len: 1,
        }
    }

    fn edge(a: usize, b: usize) -> Self {
        let (a, b) = if a < b { (a, b) } else { (b, a) };
        Carrier {
            verts: [a, b, NONE, NONE],
            len: 2,
        }
    }

    pub fn vertices(&self) -> &[usize] {
        &self.verts[..self.len as usize]
    }

    /// Topological dimension of the carrier simplex.
    pub fn topo_dim(&self) -> usize {
        self.len as usize - 1
    }

    /// Union of two carriers.
    pub fn union(&self, other: &Carrier) -> Carrier {
        let mut out = [NONE; 4];
        let mut n = 0;
        let (a, b) = (self.vertices(), other.vertices());
        let (mut i, mut j) = (0, 0);
        while i < a.len() || j < b.len() {
            let next = match (a.get(i), b.get(j)) {
                (Some(&x), Some(&y)) if x == y => {
                    i += 1;
                    j += 1;
                    x
                }
                (Some(&x), Some(&y)) if x < y => {
                    i += 1;
                    x
                }
                (Some(_), Some(&y)) => {
                    j += 1;
                    y
                }
                (Some(&x), None) => {
                    i += 1;
                    x
                }
                (None, Some(&y)) => {
                    j += 1;
                    y
                }
                (None, None) => unreachable!(),
            };
            out[n] = next;
            n += 1;
        }
        Carrier {
            verts: out,
            len: n as u8,
        }
    }
}

/// Parent links of a uniformly refined level.
#[derive(Clone, Debug)]
pub struct Genealogy {
    /// Coarse cell of each fine cell.
    pub cell_parent: Vec<usize>,
    /// Children per coarse cell (4 in 2D, 8 in 3D); children are contiguous.
    pub children_per_cell: usize,
    /// Carrier of each fine vertex: a coarse vertex or a coarse edge.
    pub vertex_carrier: Vec<Carrier>,
    /// Number of coarse vertices; fine vertex `v < coarse_vertices` is coarse vertex `v`.
    pub coarse_vertices: usize,
}

impl Genealogy {
    pub fn children(&self, coarse_cell: usize) -> Range<usize> {
        let k = self.children_per_cell;
        coarse_cell * k..(coarse_cell + 1) * k
    }

    /// Coarse vertex coinciding with a fine vertex, if any.
    pub fn coarse_vertex(&self, fine_vertex: usize) -> Option<usize> {
        (fine_vertex < self.coarse_vertices).then_some(fine_vertex)
    }

    /// Carrier of the fine entity spanned by `fine_vertices`.
    pub fn carrier(&self, fine_vertices: &[usize]) -> Carrier {
        let mut c = self.vertex_carrier[fine_vertices[0]];
        for &v in &fine_vertices[1..] {
            c = c.union(&self.vertex_carrier[v]);
        }
        c
    }
}

/// Compressed adjacency list.
#[derive(Clone, Debug, Default)]
struct Adjacency {
    offsets: Vec<usize>,
    items: Vec<usize>,
}

impl Adjacency {
    fn from_pairs(n: usize, pairs: impl Iterator<Item = (usize, usize)> + Clone) -> Self {
        let mut counts = vec![0usize; n + 1];
        for (k, _) in pairs.clone() {
            counts[k + 1] += 1;
        }
        for i in 0..n {
            counts[i + 1] += counts[i];
        }
        let mut items = vec![0; counts[n]];
        let mut fill = counts.clone();
        for (k, v) in pairs {
            items[fill[k]] = v;
            fill[k] += 1;
        }
        Adjacency {
            offsets: counts,
            items,
        }
    }

    fn get(&self, i: usize) -> &[usize] {
        &self.items[self.offsets[i]..self.offsets[i + 1]]
    }
}

/// A simplicial mesh with topology and boundary markers.
#[derive(Clone, Debug)]
pub struct MeshLevel {
    dim: usize,
    coords: Vec<f64>,
    cells: Vec<usize>,
    edges: Vec<[usize; 2]>,
    cell_edges: Vec<usize>,
    edge_cells: Adjacency,
    facets: Vec<[usize; 3]>,
    cell_facets: Vec<usize>,
    facet_cells: Vec<[usize; 2]>,
    facet_markers: Vec<Option<u16>>,
    marker_names: Vec<String>,
    vertex_cells: Adjacency,
    genealogy: Option<Genealogy>,
}

fn sorted_key(verts: &[usize]) -> [usize; 3] {
    let mut key = [NONE; 3];
    key[..verts.len()].copy_from_slice(verts);
    key[..verts.len()].sort_unstable();
    key
}

/// Signed volume of the simplex with the given vertex coordinates.
pub fn simplex_volume(dim: usize, pts: &[&[f64]]) -> f64 {
    match dim {
        2 => {
            let (a, b) = (
                [pts[1][0] - pts[0][0], pts[1][1] - pts[0][1]],
                [pts[2][0] - pts[0][0], pts[2][1] - pts[0][1]],
            );
            0.5 * (a[0] * b[1] - a[1] * b[0])
        }
        3 => {
            let d = |k: usize| {
                [
                    pts[k][0] - pts[0][0],
                    pts[k][1] - pts[0][1],
                    pts[k][2] - pts[0][2],
                ]
            };
            let (a, b, c) = (d(1), d(2), d(3));
            let det = a[0] * (b[1] * c[2] - b[2] * c[1]) - a[1] * (b[0] * c[2] - b[2] * c[0])
                + a[2] * (b[0] * c[1] - b[1] * c[0]);
            det / 6.0
        }
        _ => panic!("unsupported dimension {dim}"),
    }
}

impl MeshLevel {
    /// Build a mesh from raw connectivity. Every boundary facet must be labelled
    /// by `label`, which receives the sorted facet vertex ids.
    pub fn from_cells(
        dim: usize,
        coords: Vec<f64>,
        cells: Vec<usize>,
        label: &dyn Fn(&[usize]) -> Option<String>,
    ) -> Result<Self, MeshError> {
        if dim != 2 && dim != 3 {
            return Err(MeshError::BadDimension(dim));
        }
        let nv = coords.len() / dim;
        let npc = dim + 1;
        let nc = cells.len() / npc;
        for (c, cell) in cells.chunks(npc).enumerate() {
            if let Some(&v) = cell.iter().find(|&&v| v >= nv) {
                return Err(MeshError::VertexOutOfRange { cell: c, vertex: v });
            }
        }
        let mut used = vec![false; nv];
        for &v in &cells {
            used[v] = true;
        }
        if let Some(v) = used.iter().position(|u| !u) {
            return Err(MeshError::DanglingVertex(v));
        }
        for c in 0..nc {
            let pts: Vec<&[f64]> = cells[c * npc..(c + 1) * npc]
                .iter()
                .map(|&v| &coords[v * dim..(v + 1) * dim])
                .collect();
            let vol = simplex_volume(dim, &pts);
            if !(vol > 0.0) {
                return Err(MeshError::InvertedCell {
                    cell: c,
                    volume: vol,
                });
            }
        }

        let local_edges: &[[usize; 2]] = if dim == 2 {
            &LOCAL_EDGES_2D
        } else {
            &LOCAL_EDGES_3D
        };
        let mut edges: Vec<[usize; 2]> = Vec::with_capacity(nc * local_edges.len());
        for cell in cells.chunks(npc) {
            for le in local_edges {
                let (a, b) = (cell[le[0]], cell[le[1]]);
                edges.push(if a < b { [a, b] } else { [b, a] });
            }
        }
        edges.sort_unstable();
        edges.dedup();
        let mut cell_edges = Vec::with_capacity(nc * local_edges.len());
        for cell in cells.chunks(npc) {
            for le in local_edges {
                let (a, b) = (cell[le[0]], cell[le[1]]);
                let key = if a < b { [a, b] } else { [b, a] };
                cell_edges.push(edges.binary_search(&key).unwrap());
            }
        }
        let nle = local_edges.len();
        let edge_cells = Adjacency::from_pairs(
            edges.len(),
            cell_edges.iter().enumerate().map(|(i, &e)| (e, i / nle)),
        );

        let mut facets: Vec<[usize; 3]> = Vec::with_capacity(nc * npc);
        let mut scratch = Vec::with_capacity(dim);
        for cell in cells.chunks(npc) {
            for i in 0..npc {
                scratch.clear();
                scratch.extend((0..npc).filter(|&k| k != i).map(|k| cell[k]));
                facets.push(sorted_key(&scratch));
            }
        }
        facets.sort_unstable();
        facets.dedup();
        let mut cell_facets = Vec::with_capacity(nc * npc);
        let mut facet_cells = vec![[NONE, NONE]; facets.len()];
        for (c, cell) in cells.chunks(npc).enumerate() {
            for i in 0..npc {
                scratch.clear();
                scratch.extend((0..npc).filter(|&k| k != i).map(|k| cell[k]));
                let f = facets.binary_search(&sorted_key(&scratch)).unwrap();
                cell_facets.push(f);
                let slot = &mut facet_cells[f];
                if slot[0] == NONE {
                    slot[0] = c;
                } else if slot[1] == NONE {
                    slot[1] = c;
                } else {
                    return Err(MeshError::NonManifold(scratch.clone()));
                }
            }
        }

        let mut marker_names: Vec<String> = Vec::new();
        let mut facet_markers = vec![None; facets.len()];
        for (f, key) in facets.iter().enumerate() {
            if facet_cells[f][1] != NONE {
                continue;
            }
            let verts = &key[..dim];
            let name = label(verts).ok_or_else(|| MeshError::MissingMarker(verts.to_vec()))?;
            let id = match marker_names.iter().position(|n| *n == name) {
                Some(id) => id,
                None => {
                    marker_names.push(name);
                    marker_names.len() - 1
                }
            };
            facet_markers[f] = Some(id as u16);
        }

        let vertex_cells = Adjacency::from_pairs(
            nv,
            cells.iter().enumerate().map(|(i, &v)| (v, i / npc)),
        );

        Ok(MeshLevel {
            dim,
            coords,
            cells,
            edges,
            cell_edges,
            edge_cells,
            facets,
            cell_facets,
            facet_cells,
            facet_markers,
            marker_names,
            vertex_cells,
            genealogy: None,
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn num_vertices(&self) -> usize {
        self.coords.len() / self.dim
    }

    pub fn num_cells(&self) -> usize {
        self.cells.len() / (self.dim + 1)
    }

    pub fn num_edges(&self) -> usize {
        self.edges.len()
    }

    pub fn num_facets(&self) -> usize {
        self.facets.len()
    }

    pub fn vertex(&self, v: usize) -> &[f64] {
        &self.coords[v * self.dim..(v + 1) * self.dim]
    }

    pub fn coords(&self) -> &[f64] {
        &self.coords
    }

    pub fn cell(&self, c: usize) -> &[usize] {
        let n = self.dim + 1;
        &self.cells[c * n..(c + 1) * n]
    }

    pub fn cell_edges(&self, c: usize) -> &[usize] {
        let n = if self.dim == 2 { 3 } else { 6 };
        &self.cell_edges[c * n..(c + 1) * n]
    }

    /// Facet `i` of a cell is opposite its local vertex `i`.
    pub fn cell_facets(&self, c: usize) -> &[usize] {
        let n = self.dim + 1;
        &self.cell_facets[c * n..(c + 1) * n]
    }

    pub fn edge(&self, e: usize) -> [usize; 2] {
        self.edges[e]
    }

    pub fn edge_cells(&self, e: usize) -> &[usize] {
        self.edge_cells.get(e)
    }

    /// Sorted vertex ids of a facet.
    pub fn facet(&self, f: usize) -> &[usize] {
        &self.facets[f][..self.dim]
    }

    /// Cells adjacent to a facet; the second entry is [`NONE`] on the boundary.
    pub fn facet_cells(&self, f: usize) -> [usize; 2] {
        self.facet_cells[f]
    }

    pub fn is_boundary_facet(&self, f: usize) -> bool {
        self.facet_cells[f][1] == NONE
    }

    pub fn facet_marker(&self, f: usize) -> Option<&str> {
        self.facet_markers[f].map(|m| self.marker_names[m as usize].as_str())
    }

    pub fn marker_names(&self) -> &[String] {
        &self.marker_names
    }

    /// Boundary facets carrying the given marker.
    pub fn facets_with_marker<'a>(&'a self, name: &'a str) -> impl Iterator<Item = usize> + 'a {
        (0..self.num_facets()).filter(move |&f| self.facet_marker(f) == Some(name))
    }

    /// Look up a facet by its (unsorted) vertex ids.
    pub fn find_facet(&self, verts: &[usize]) -> Option<usize> {
        self.facets.binary_search(&sorted_key(verts)).ok()
    }

    /// Look up an edge by its vertex ids.
    pub fn find_edge(&self, a: usize, b: usize) -> Option<usize> {
        let key = if a < b { [a, b] } else { [b, a] };
        self.edges.binary_search(&key).ok()
    }

    pub fn genealogy(&self) -> Option<&Genealogy> {
        self.genealogy.as_ref()
    }

    /// Cells containing a vertex (its star), in increasing order.
    pub fn vertex_star(&self, v: usize) -> Result<&[usize], MeshError> {
        if v >= self.num_vertices() {
            return Err(MeshError::OutOfRange {
                id: v,
                count: self.num_vertices(),
            });
        }
        Ok(self.vertex_cells.get(v))
    }

    pub fn cell_volume(&self, c: usize) -> f64 {
        let pts: Vec<&[f64]> = self.cell(c).iter().map(|&v| self.vertex(v)).collect();
        simplex_volume(self.dim, &pts)
    }

    /// Longest edge length of a cell.
    pub fn cell_diameter(&self, c: usize) -> f64 {
        let cell = self.cell(c);
        let mut h: f64 = 0.0;
        for i in 0..cell.len() {
            for j in i + 1..cell.len() {
                h = h.max(dist(self.vertex(cell[i]), self.vertex(cell[j])));
            }
        }
        h
    }

    pub fn cell_centroid(&self, c: usize) -> Vec<f64> {
        let cell = self.cell(c);
        let mut x = vec![0.0; self.dim];
        for &v in cell {
            for (xi, vi) in x.iter_mut().zip(self.vertex(v)) {
                *xi += vi / cell.len() as f64;
            }
        }
        x
    }

    /// Unit outward normal of local facet `i` of cell `c`, and the facet measure.
    pub fn facet_normal(&self, c: usize, i: usize) -> (Vec<f64>, f64) {
        let cell = self.cell(c);
        let d = self.dim;
        let others: Vec<&[f64]> = (0..=d).filter(|&k| k != i).map(|k| self.vertex(cell[k])).collect();
        let mut n = match d {
            2 => {
                let t = [others[1][0] - others[0][0], others[1][1] - others[0][1]];
                vec![t[1], -t[0]]
            }
            _ => {
                let a = sub(others[1], others[0]);
                let b = sub(others[2], others[0]);
                vec![
                    a[1] * b[2] - a[2] * b[1],
                    a[2] * b[0] - a[0] * b[2],
                    a[0] * b[1] - a[1] * b[0],
                ]
            }
        };
        let len = n.iter().map(|x| x * x).sum::<f64>().sqrt();
        let measure = if d == 2 { len } else { 0.5 * len };
        // orient away from the opposite vertex
        let opp = self.vertex(cell[i]);
        let s: f64 = n
            .iter()
            .zip(opp.iter().zip(others[0]))
            .map(|(ni, (o, p))| ni * (p - o))
            .sum();
        let sign = if s >= 0.0 { 1.0 } else { -1.0 };
        for x in n.iter_mut() {
            *x *= sign / len;
        }
        (n, measure)
    }

    /// Barycentric coordinates of a physical point with respect to cell `c`.
    pub fn barycentric(&self, c: usize, x: &[f64]) -> Vec<f64> {
        let cell = self.cell(c);
        let d = self.dim;
        let x0 = self.vertex(cell[0]);
        // Solve J * xi = x - x0 with J columns v_k - v_0.
        let mut jac = [[0.0; 3]; 3];
        for k in 0..d {
            let vk = self.vertex(cell[k + 1]);
            for r in 0..d {
                jac[r][k] = vk[r] - x0[r];
            }
        }
        let rhs: Vec<f64> = (0..d).map(|r| x[r] - x0[r]).collect();
        let xi = solve_small(d, &jac, &rhs);
        let mut lam = vec![0.0; d + 1];
        lam[0] = 1.0 - xi.iter().sum::<f64>();
        lam[1..].copy_from_slice(&xi);
        lam
    }

    /// Physical point from barycentric coordinates in cell `c`.
    pub fn from_barycentric(&self, c: usize, lam: &[f64]) -> Vec<f64> {
        let mut x = vec![0.0; self.dim];
        for (k, &v) in self.cell(c).iter().enumerate() {
            for (xi, vi) in x.iter_mut().zip(self.vertex(v)) {
                *xi += lam[k] * vi;
            }
        }
        x
    }

    /// Total measure of the domain.
    pub fn volume(&self) -> f64 {
        (0..self.num_cells()).map(|c| self.cell_volume(c)).sum()
    }
}

fn sub(a: &[f64], b: &[f64]) -> [f64; 3] {
    [a[0] - b[0], a[1] - b[1], a[2] - b[2]]
}

fn dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
}

/// Gaussian elimination with partial pivoting for systems of size <= 3.
fn solve_small(d: usize, a: &[[f64; 3]; 3], b: &[f64]) -> Vec<f64> {
    let mut m = *a;
    let mut r = [0.0; 3];
    r[..d].copy_from_slice(&b[..d]);
    for k in 0..d {
        let p = (k..d)
            .max_by(|&i, &j| m[i][k].abs().partial_cmp(&m[j][k].abs()).unwrap())
            .unwrap();
        m.swap(k, p);
        r.swap(k, p);
        for i in k + 1..d {
            let f = m[i][k] / m[k][k];
            for j in k..d {
                m[i][j] -= f * m[k][j];
            }
            r[i] -= f * r[k];
        }
    }
    let mut x = vec![0.0; d];
    for k in (0..d).rev() {
        let s: f64 = (k + 1..d).map(|j| m[k][j] * x[j]).sum();
        x[k] = (r[k] - s) / m[k][k];
    }
    x
}

fn box_labels(dim: usize) -> [&'static str; 6] {
    let _ = dim;
    ["x_min", "x_max", "y_min", "y_max", "z_min", "z_max"]
}

/// Label a boundary facet of an axis-aligned box by the box face containing it.
fn box_face_label(dim: usize, extent: &[(f64, f64)], centroid: &[f64]) -> Option<String> {
    let names = box_labels(dim);
    for axis in 0..dim {
        let (lo, hi) = extent[axis];
        let tol = 1e-10 * (hi - lo).abs().max(1.0);
        if (centroid[axis] - lo).abs() < tol {
            return Some(names[2 * axis].to_string());
        }
        if (centroid[axis] - hi).abs() < tol {
            return Some(names[2 * axis + 1].to_string());
        }
    }
    None
}

/// Structured simplicial grid of an axis-aligned box.
///
/// In 2D each quad is split along its negative-slope diagonal; in 3D each cube is
/// split into the six Kuhn tetrahedra around its main diagonal. Boundary facets are
/// marked `x_min`, `x_max`, `y_min`, ... according to the box face they lie on.
pub fn build_structured_grid(
    extent: &[(f64, f64)],
    subdivisions: &[usize],
    dim: usize,
) -> Result<MeshLevel, MeshError> {
    let (coords, cells) = structured_connectivity(extent, subdivisions, dim)?;
    let ext = extent.to_vec();
    let c2 = coords.clone();
    MeshLevel::from_cells(dim, coords, cells, &move |verts: &[usize]| {
        let mut cen = vec![0.0; dim];
        for &v in verts {
            for k in 0..dim {
                cen[k] += c2[v * dim + k] / verts.len() as f64;
            }
        }
        box_face_label(dim, &ext, &cen)
    })
}

/// Coordinates and cells of a structured box grid (no topology).
pub fn structured_connectivity(
    extent: &[(f64, f64)],
    subdivisions: &[usize],
    dim: usize,
) -> Result<(Vec<f64>, Vec<usize>), MeshError> {
    if dim != 2 && dim != 3 {
        return Err(MeshError::BadDimension(dim));
    }
    if subdivisions.len() < dim || extent.len() < dim || subdivisions[..dim].contains(&0)
    {
        return Err(MeshError::BadSubdivision);
    }
    let n: Vec<usize> = subdivisions[..dim].to_vec();
    let np: Vec<usize> = n.iter().map(|k| k + 1).collect();
    let coord = |axis: usize, i: usize| {
        let (lo, hi) = extent[axis];
        if i == n[axis] {
            hi
        } else {
            lo + (hi - lo) * (i as f64) / (n[axis] as f64)
        }
    };
    let mut coords = Vec::new();
    let mut cells = Vec::new();
    if dim == 2 {
        for j in 0..np[1] {
            for i in 0..np[0] {
                coords.push(coord(0, i));
                coords.push(coord(1, j));
            }
        }
        let id = |i: usize, j: usize| i + np[0] * j;
        for j in 0..n[1] {
            for i in 0..n[0] {
                let (p00, p10, p01, p11) = (id(i, j), id(i + 1, j), id(i, j + 1), id(i + 1, j + 1));
                cells.extend_from_slice(&[p00, p10, p01]);
                cells.extend_from_slice(&[p10, p11, p01]);
            }
        }
    } else {
        for k in 0..np[2] {
            for j in 0..np[1] {
                for i in 0..np[0] {
                    coords.push(coord(0, i));
                    coords.push(coord(1, j));
                    coords.push(coord(2, k));
                }
            }
        }
        let id = |p: [usize; 3]| p[0] + np[0] * (p[1] + np[1] * p[2]);
        const PERMS: [[usize; 3]; 6] = [
            [0, 1, 2],
            [0, 2, 1],
            [1, 0, 2],
            [1, 2, 0],
            [2, 0, 1],
            [2, 1, 0],
        ];
        for k in 0..n[2] {
            for j in 0..n[1] {
                for i in 0..n[0] {
                    for perm in PERMS {
                        let mut p = [i, j, k];
                        let mut tet = [0usize; 4];
                        tet[0] = id(p);
                        for (s, &axis) in perm.iter().enumerate() {
                            p[axis] += 1;
                            tet[s + 1] = id(p);
                        }
                        let pts: Vec<&[f64]> =
                            tet.iter().map(|&v| &coords[v * 3..v * 3 + 3]).collect();
                        if simplex_volume(3, &pts) < 0.0 {
                            tet.swap(2, 3);
                        }
                        cells.extend_from_slice(&tet);
                    }
                }
            }
        }
    }
    Ok((coords, cells))
}

fn orient(dim: usize, coords: &[f64], cell: &mut [usize]) {
    let pts: Vec<&[f64]> = cell.iter().map(|&v| &coords[v * dim..(v + 1) * dim]).collect();
    if simplex_volume(dim, &pts) < 0.0 {
        cell.swap(cell.len() - 2, cell.len() - 1);
    }
}

/// Uniform (regular) refinement.
///
/// Triangles split into four children through their edge midpoints. Tetrahedra
/// split into four corner children plus four children of the interior octahedron,
/// which is cut along its shortest diagonal (ties broken by the lowest vertex
/// index). Coarse vertices keep their ids and coordinates; the midpoint of coarse
/// edge `e` becomes vertex `V + e`.
pub fn refine_uniform(coarse: &MeshLevel) -> Result<MeshLevel, MeshError> {
    let dim = coarse.dim;
    let nv = coarse.num_vertices();
    let mut coords = coarse.coords.clone();
    coords.reserve(coarse.num_edges() * dim);
    for e in &coarse.edges {
        let (a, b) = (coarse.vertex(e[0]), coarse.vertex(e[1]));
        for k in 0..dim {
            coords.push(0.5 * (a[k] + b[k]));
        }
    }
    let mut vertex_carrier: Vec<Carrier> = (0..nv).map(Carrier::vertex).collect();
    vertex_carrier.extend(coarse.edges.iter().map(|e| Carrier::edge(e[0], e[1])));

    let nchild = if dim == 2 { 4 } else { 8 };
    let mut cells = Vec::with_capacity(coarse.num_cells() * nchild * (dim + 1));
    let mut cell_parent = Vec::with_capacity(coarse.num_cells() * nchild);
    for c in 0..coarse.num_cells() {
        let v = coarse.cell(c);
        let ce = coarse.cell_edges(c);
        if dim == 2 {
            // local edge k is opposite vertex k
            let m = [nv + ce[0], nv + ce[1], nv + ce[2]];
            let kids = [
                [v[0], m[2], m[1]],
                [m[2], v[1], m[0]],
                [m[1], m[0], v[2]],
                [m[0], m[1], m[2]],
            ];
            for mut kid in kids {
                orient(dim, &coords, &mut kid);
                cells.extend_from_slice(&kid);
                cell_parent.push(c);
            }
        } else {
            // midpoint of local edge (i, j)
            let mut mid = [[NONE; 4]; 4];
            for (k, le) in LOCAL_EDGES_3D.iter().enumerate() {
                mid[le[0]][le[1]] = nv + ce[k];
                mid[le[1]][le[0]] = nv + ce[k];
            }
            let mut kids: Vec<[usize; 4]> = Vec::with_capacity(8);
            for i in 0..4 {
                let mut kid = [v[i]; 4];
                let mut s = 1;
                for j in 0..4 {
                    if j != i {
                        kid[s] = mid[i][j];
                        s += 1;
                    }
                }
                kids.push(kid);
            }
            // diagonals pair an edge with its opposite edge
            let diags = [([0, 1], [2, 3]), ([0, 2], [1, 3]), ([0, 3], [1, 2])];
            let vx = |g: usize| &coords[g * 3..g * 3 + 3];
            let mut best: Option<(f64, [usize; 2], usize)> = None;
            for (di, (p, q)) in diags.iter().enumerate() {
                let (a, b) = (mid[p[0]][p[1]], mid[q[0]][q[1]]);
                let len = dist(vx(a), vx(b));
                let key = if a < b { [a, b] } else { [b, a] };
                best = match best {
                    None => Some((len, key, di)),
                    Some((bl, bk, bd)) => {
                        let tol = 1e-10 * bl.max(len);
                        if len < bl - tol || ((len - bl).abs() <= tol && key < bk) {
                            Some((len, key, di))
                        } else {
                            Some((bl, bk, bd))
                        }
                    }
                };
            }
            let (p, q) = diags[best.unwrap().2];
            let (a, b, cc, d) = (p[0], p[1], q[0], q[1]);
            let (da, db) = (mid[a][b], mid[cc][d]);
            let cycle = [mid[a][cc], mid[a][d], mid[b][d], mid[b][cc]];
            for k in 0..4 {
                kids.push([da, db, cycle[k], cycle[(k + 1) % 4]]);
            }
            for mut kid in kids {
                orient(dim, &coords, &mut kid);
                cells.extend_from_slice(&kid);
                cell_parent.push(c);
            }
        }
    }

    let genealogy = Genealogy {
        cell_parent,
        children_per_cell: nchild,
        vertex_carrier,
        coarse_vertices: nv,
    };
    let g2 = genealogy.clone();
    let mut fine = MeshLevel::from_cells(dim, coords, cells, &|verts: &[usize]| {
        let carrier = g2.carrier(verts);
        let f = coarse.find_facet(carrier.vertices())?;
        coarse.facet_marker(f).map(str::to_string)
    })?;
    fine.genealogy = Some(genealogy);
    Ok(fine)
}

/// A nested sequence of uniformly refined meshes, coarse to fine.
#[derive(Clone, Debug)]
pub struct MeshHierarchy {
    pub levels: Vec<MeshLevel>,
}

impl MeshHierarchy {
    pub fn uniform(coarse: MeshLevel, refinements: usize) -> Result<Self, MeshError> {
        let mut levels = vec![coarse];
        for _ in 0..refinements {
            let next = refine_uniform(levels.last().unwrap())?;
            levels.push(next);
        }
        Ok(MeshHierarchy { levels })
    }

    pub fn finest(&self) -> &MeshLevel {
        self.levels.last().unwrap()
    }

    pub fn len(&self) -> usize {
        self.levels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.levels.is_empty()
    }
}

/// Parse a mesh from the ASCII format:
///
/// ```text
/// # comment
/// dim V C F
/// x y [z]            (V lines)
/// v0 v1 v2 [v3]      (C lines, 0-based)
/// f0 f1 [f2] marker  (F lines)
/// ```
pub fn parse_mesh(text: &str) -> Result<MeshLevel, MeshError> {
    let mut lines = text
        .lines()
        .enumerate()
        .map(|(i, l)| (i + 1, l.split('#').next().unwrap_or("").trim()))
        .filter(|(_, l)| !l.is_empty());
    let parse_err = |line: usize, msg: &str| MeshError::Parse {
        line,
        msg: msg.to_string(),
    };
    let (hl, header) = lines.next().ok_or_else(|| parse_err(0, "missing header"))?;
    let head: Vec<usize> = header
        .split_whitespace()
        .map(|t| t.parse::<usize>())
        .collect::<Result<_, _>>()
        .map_err(|e| parse_err(hl, &e.to_string()))?;
    if head.len() != 4 {
        return Err(parse_err(hl, "header must be `dim V C F`"));
    }
    let (dim, nv, nc, nf) = (head[0], head[1], head[2], head[3]);
    if dim != 2 && dim != 3 {
        return Err(MeshError::BadDimension(dim));
    }
    let mut coords = Vec::with_capacity(nv * dim);
    for _ in 0..nv {
        let (ln, l) = lines.next().ok_or_else(|| parse_err(hl, "unexpected end of vertices"))?;
        let vals: Vec<f64> = l
            .split_whitespace()
            .map(|t| t.parse::<f64>())
            .collect::<Result<_, _>>()
            .map_err(|e| parse_err(ln, &e.to_string()))?;
        if vals.len() != dim {
            return Err(parse_err(ln, "wrong number of coordinates"));
        }
        coords.extend(vals);
    }
    let mut cells = Vec::with_capacity(nc * (dim + 1));
    for _ in 0..nc {
        let (ln, l) = lines.next().ok_or_else(|| parse_err(hl, "unexpected end of cells"))?;
        let ids: Vec<usize> = l
            .split_whitespace()
            .map(|t| t.parse::<usize>())
            .collect::<Result<_, _>>()
            .map_err(|e| parse_err(ln, &e.to_string()))?;
        if ids.len() != dim + 1 {
            return Err(MeshError::NonSimplicial {
                line: ln,
                found: ids.len(),
                expected: dim + 1,
            });
        }
        cells.extend(ids);
    }
    let mut markers: BTreeMap<[usize; 3], String> = BTreeMap::new();
    for _ in 0..nf {
        let (ln, l) = lines.next().ok_or_else(|| parse_err(hl, "unexpected end of facets"))?;
        let toks: Vec<&str> = l.split_whitespace().collect();
        if toks.len() != dim + 1 {
            return Err(parse_err(ln, "facet line must be `ids... marker`"));
        }
        let ids: Vec<usize> = toks[..dim]
            .iter()
            .map(|t| t.parse::<usize>())
            .collect::<Result<_, _>>()
            .map_err(|e| parse_err(ln, &e.to_string()))?;
        markers.insert(sorted_key(&ids), toks[dim].to_string());
    }
    if let Some((ln, _)) = lines.next() {
        return Err(parse_err(ln, "trailing content after facet section"));
    }
    MeshLevel::from_cells(dim, coords, cells, &|verts: &[usize]| {
        markers.get(&sorted_key(verts)).cloned()
    })
}

pub fn load_mesh(path: impl AsRef<Path>) -> Result<MeshLevel, MeshError> {
    let text = std::fs::read_to_string(path)?;
    parse_mesh(&text)
}

/// Serialize a mesh (boundary facets only) in the ASCII format read by [`parse_mesh`].
pub fn format_mesh(mesh: &MeshLevel) -> String {
    let dim = mesh.dim;
    let bfacets: Vec<usize> = (0..mesh.num_facets())
        .filter(|&f| mesh.is_boundary_facet(f))
        .collect();
    let mut out = String::new();
    let _ = writeln!(
        out,
        "{} {} {} {}",
        dim,
        mesh.num_vertices(),
        mesh.num_cells(),
        bfacets.len()
    );
    for v in 0..mesh.num_vertices() {
        let x: Vec<String> = mesh.vertex(v).iter().map(|c| format!("{c:?}")).collect();
        let _ = writeln!(out, "{}", x.join(" "));
    }
    for c in 0..mesh.num_cells() {
        let ids: Vec<String> = mesh.cell(c).iter().map(|v| v.to_string()).collect();
        let _ = writeln!(out, "{}", ids.join(" "));
    }
    for f in bfacets {
        let ids: Vec<String> = mesh.facet(f).iter().map(|v| v.to_string()).collect();
        let _ = writeln!(out, "{} {}", ids.join(" "), mesh.facet_marker(f).unwrap_or("none"));
    }
    out
}

pub fn write_mesh(mesh: &MeshLevel, path: impl AsRef<Path>) -> Result<(), MeshError> {
    std::fs::write(path, format_mesh(mesh))?;
    Ok(())
}
