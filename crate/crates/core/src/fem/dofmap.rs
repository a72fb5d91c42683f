//! Global degree-of-freedom numbering.

use std::ops::Range;

use super::element::{ElementSpec, LocalEntity, ReferenceElement};
use super::FemError;
use crate::mesh::MeshLevel;

/// A mesh entity by kind and global id.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum EntityRef {
    Vertex(usize),
    Edge(usize),
    Facet(usize),
    Cell(usize),
}

impl EntityRef {
    pub fn vertices(&self, mesh: &MeshLevel) -> Vec<usize> {
        match *self {
            EntityRef::Vertex(v) => vec![v],
            EntityRef::Edge(e) => mesh.edge(e).to_vec(),
            EntityRef::Facet(f) => mesh.facet(f).to_vec(),
            EntityRef::Cell(c) => mesh.cell(c).to_vec(),
        }
    }

    /// Cells whose closure contains the entity.
    pub fn cells(&self, mesh: &MeshLevel) -> Vec<usize> {
        match *self {
            EntityRef::Vertex(v) => mesh.vertex_star(v).map(|s| s.to_vec()).unwrap_or_default(),
            EntityRef::Edge(e) => mesh.edge_cells(e).to_vec(),
            EntityRef::Facet(f) => mesh
                .facet_cells(f)
                .into_iter()
                .filter(|&c| c != crate::mesh::NONE)
                .collect(),
            EntityRef::Cell(c) => vec![c],
        }
    }
}

/// Degree-of-freedom layout of one element space on one mesh.
///
/// Scalar dofs are numbered vertices first, then edges, facets and cells. A
/// vector-valued space interleaves components: global index `s * value_size + comp`.
#[derive(Clone, Debug)]
pub struct DofMap {
    pub spec: ElementSpec,
    pub element: ReferenceElement,
    per: [usize; 4],
    offsets: [usize; 5],
    cell_dofs: Vec<usize>,
    nloc: usize,
}

impl DofMap {
    pub fn new(mesh: &MeshLevel, spec: ElementSpec) -> Result<Self, FemError> {
        if spec.dim != mesh.dim() {
            return Err(FemError::DimensionMismatch {
                space: spec.dim,
                mesh: mesh.dim(),
            });
        }
        let element = ReferenceElement::new(spec);
        let mut per = [0usize; 4];
        for e in &element.entities {
            match e {
                LocalEntity::Vertex(0) => per[0] += 1,
                LocalEntity::Edge(0, _) => per[1] += 1,
                LocalEntity::Facet(0) => per[2] += 1,
                LocalEntity::Cell => per[3] += 1,
                _ => {}
            }
        }
        let counts = [
            mesh.num_vertices(),
            mesh.num_edges(),
            mesh.num_facets(),
            mesh.num_cells(),
        ];
        let mut offsets = [0usize; 5];
        for k in 0..4 {
            offsets[k + 1] = offsets[k] + per[k] * counts[k];
        }
        let nloc = element.len();
        let mut cell_dofs = Vec::with_capacity(mesh.num_cells() * nloc);
        for c in 0..mesh.num_cells() {
            let verts = mesh.cell(c);
            let edges = mesh.cell_edges(c);
            let facets = mesh.cell_facets(c);
            for e in &element.entities {
                let g = match *e {
                    LocalEntity::Vertex(i) => offsets[0] + verts[i],
                    LocalEntity::Edge(k, pos) => {
                        let le = if mesh.dim() == 2 {
                            crate::mesh::LOCAL_EDGES_2D[k]
                        } else {
                            crate::mesh::LOCAL_EDGES_3D[k]
                        };
                        // positions along an edge are numbered from its lower global vertex
                        let forward = verts[le[0]] < verts[le[1]];
                        let p = if forward || per[1] == 1 { pos } else { per[1] - 1 - pos };
                        offsets[1] + per[1] * edges[k] + p
                    }
                    LocalEntity::Facet(i) => offsets[2] + per[2] * facets[i],
                    LocalEntity::Cell => offsets[3] + per[3] * c,
                };
                cell_dofs.push(g);
            }
        }
        Ok(DofMap {
            spec,
            element,
            per,
            offsets,
            cell_dofs,
            nloc,
        })
    }

    pub fn value_size(&self) -> usize {
        self.spec.value_size
    }

    /// Number of scalar dofs (per component).
    pub fn num_scalar(&self) -> usize {
        self.offsets[4]
    }

    /// Total number of dofs over all components.
    pub fn ndofs(&self) -> usize {
        self.offsets[4] * self.spec.value_size
    }

    /// Scalar basis functions per cell.
    pub fn local_size(&self) -> usize {
        self.nloc
    }

    /// Scalar dof ids of a cell, in reference-element order.
    pub fn cell_dofs(&self, c: usize) -> &[usize] {
        &self.cell_dofs[c * self.nloc..(c + 1) * self.nloc]
    }

    /// Global index of component `comp` of scalar dof `s`.
    #[inline]
    pub fn global(&self, s: usize, comp: usize) -> usize {
        s * self.spec.value_size + comp
    }

    /// Entity carrying a scalar dof.
    pub fn entity_of(&self, s: usize) -> EntityRef {
        let kind = (0..4).find(|&k| s < self.offsets[k + 1]).expect("dof out of range");
        let id = (s - self.offsets[kind]) / self.per[kind];
        match kind {
            0 => EntityRef::Vertex(id),
            1 => EntityRef::Edge(id),
            2 => EntityRef::Facet(id),
            _ => EntityRef::Cell(id),
        }
    }

    /// Scalar dofs attached to an entity.
    pub fn entity_dofs(&self, ent: EntityRef) -> Range<usize> {
        let (k, id) = match ent {
            EntityRef::Vertex(i) => (0, i),
            EntityRef::Edge(i) => (1, i),
            EntityRef::Facet(i) => (2, i),
            EntityRef::Cell(i) => (3, i),
        };
        let start = self.offsets[k] + self.per[k] * id;
        start..start + self.per[k]
    }

    /// Scalar dofs lying on the closure of boundary facets with the given marker.
    pub fn boundary_scalar_dofs(&self, mesh: &MeshLevel, marker: &str) -> Vec<usize> {
        let mut out = Vec::new();
        for f in mesh.facets_with_marker(marker) {
            let verts = mesh.facet(f);
            for &v in verts {
                out.extend(self.entity_dofs(EntityRef::Vertex(v)));
            }
            if mesh.dim() == 2 {
                let e = mesh.find_edge(verts[0], verts[1]).unwrap();
                out.extend(self.entity_dofs(EntityRef::Edge(e)));
            } else {
                for (a, b) in [(0, 1), (0, 2), (1, 2)] {
                    let e = mesh.find_edge(verts[a], verts[b]).unwrap();
                    out.extend(self.entity_dofs(EntityRef::Edge(e)));
                }
            }
            out.extend(self.entity_dofs(EntityRef::Facet(f)));
        }
        out.sort_unstable();
        out.dedup();
        out
    }

    /// All global dofs (every component) on boundary facets with the given marker.
    pub fn boundary_dofs(&self, mesh: &MeshLevel, marker: &str) -> Vec<usize> {
        let vs = self.spec.value_size;
        self.boundary_scalar_dofs(mesh, marker)
            .into_iter()
            .flat_map(|s| (0..vs).map(move |c| s * vs + c))
            .collect()
    }

    /// Dofs of a refined level whose basis functions vanish on the boundary of the
    /// given coarse cell: those attached to entities strictly inside it.
    pub fn interior_dofs_of_coarse_cell(
        &self,
        fine: &MeshLevel,
        coarse_cell: usize,
    ) -> Result<Vec<usize>, FemError> {
        let gen = fine.genealogy().ok_or(FemError::MissingGenealogy)?;
        let dim = fine.dim();
        let mut scalar = Vec::new();
        for child in gen.children(coarse_cell) {
            for &s in self.cell_dofs(child) {
                let ent = self.entity_of(s);
                if gen.carrier(&ent.vertices(fine)).topo_dim() == dim {
                    scalar.push(s);
                }
            }
        }
        scalar.sort_unstable();
        scalar.dedup();
        let vs = self.spec.value_size;
        Ok(scalar
            .into_iter()
            .flat_map(|s| (0..vs).map(move |c| s * vs + c))
            .collect())
    }
}
