//! Fixed-topology triangle meshes, per-facet deformation gradients and
//! vertex reconstruction from deformations.
//!
//! All geometry is in millimeters. Faces are wound counter-clockwise when
//! viewed from outside, so outward normals follow the right-hand rule.

mod frame;
mod obj;
mod reconstruct;

use std::sync::Arc;

use nalgebra::Vector3;

use crate::error::{Error, Result};

pub use frame::{deformation_gradients, facet_frame, DeformationSet, ReferenceFrames};
pub use obj::{load_mesh, parse_obj, save_mesh, write_obj};
pub use reconstruct::{reconstruct_vertices, AnchorConstraint, ReconstructionSolver};

pub type Vec3 = Vector3<f64>;
pub type Face = [u32; 3];

/// Facets with area at or below this (mm²) are rejected.
pub const MIN_FACET_AREA: f64 = 1e-8;

/// A triangle mesh whose face array may be shared with other meshes of the
/// same template.
#[derive(Debug, Clone, PartialEq)]
pub struct TriangleMesh {
    vertices: Vec<Vec3>,
    faces: Arc<Vec<Face>>,
}

impl TriangleMesh {
    pub fn new(vertices: Vec<Vec3>, faces: Vec<Face>) -> Result<Self> {
        Self::with_shared_faces(vertices, Arc::new(faces))
    }

    /// Builds a mesh that reuses an existing face array.
    pub fn with_shared_faces(vertices: Vec<Vec3>, faces: Arc<Vec<Face>>) -> Result<Self> {
        let mesh = TriangleMesh { vertices, faces };
        mesh.validate()?;
        Ok(mesh)
    }

    /// Same topology, new vertex positions.
    pub fn with_vertices(&self, vertices: Vec<Vec3>) -> Result<Self> {
        if vertices.len() != self.vertices.len() {
            return Err(Error::TopologyMismatch(format!(
                "expected {} vertices, got {}",
                self.vertices.len(),
                vertices.len()
            )));
        }
        Self::with_shared_faces(vertices, Arc::clone(&self.faces))
    }

    fn validate(&self) -> Result<()> {
        let n = self.vertices.len();
        if let Some(i) = self.vertices.iter().position(|v| !v.iter().all(|c| c.is_finite())) {
            return Err(Error::InvalidMesh(format!("vertex {i} is not finite")));
        }
        for (f, face) in self.faces.iter().enumerate() {
            if let Some(&idx) = face.iter().find(|&&i| i as usize >= n) {
                return Err(Error::InvalidMesh(format!(
                    "face {f} references vertex {idx} but mesh has {n} vertices"
                )));
            }
            if face[0] == face[1] || face[1] == face[2] || face[0] == face[2] {
                return Err(Error::InvalidMesh(format!("face {f} repeats a vertex")));
            }
            let area = self.face_area(f);
            if !(area > MIN_FACET_AREA) {
                return Err(Error::DegenerateFacet { facet: f, area });
            }
        }
        Ok(())
    }

    pub fn vertices(&self) -> &[Vec3] {
        &self.vertices
    }

    pub fn faces(&self) -> &[Face] {
        &self.faces
    }

    pub fn shared_faces(&self) -> &Arc<Vec<Face>> {
        &self.faces
    }

    pub fn vertex_count(&self) -> usize {
        self.vertices.len()
    }

    pub fn face_count(&self) -> usize {
        self.faces.len()
    }

    pub fn into_vertices(self) -> Vec<Vec3> {
        self.vertices
    }

    pub fn face_vertices(&self, f: usize) -> [Vec3; 3] {
        let [a, b, c] = self.faces[f];
        [
            self.vertices[a as usize],
            self.vertices[b as usize],
            self.vertices[c as usize],
        ]
    }

    pub fn face_area(&self, f: usize) -> f64 {
        let [a, b, c] = self.face_vertices(f);
        0.5 * (b - a).cross(&(c - a)).norm()
    }

    /// True when both meshes have identical face arrays.
    pub fn same_topology(&self, other: &TriangleMesh) -> bool {
        self.vertices.len() == other.vertices.len()
            && (Arc::ptr_eq(&self.faces, &other.faces) || self.faces == other.faces)
    }

    pub fn check_same_topology(&self, other: &TriangleMesh) -> Result<()> {
        if self.same_topology(other) {
            Ok(())
        } else {
            Err(Error::TopologyMismatch(format!(
                "{} vertices / {} faces vs {} vertices / {} faces (or differing face arrays)",
                self.vertex_count(),
                self.face_count(),
                other.vertex_count(),
                other.face_count()
            )))
        }
    }

    /// Axis-aligned bounding box as (min, max).
    pub fn bounding_box(&self) -> (Vec3, Vec3) {
        let mut lo = Vec3::repeat(f64::INFINITY);
        let mut hi = Vec3::repeat(f64::NEG_INFINITY);
        for v in &self.vertices {
            lo = lo.inf(v);
            hi = hi.sup(v);
        }
        (lo, hi)
    }

    pub fn bbox_diagonal(&self) -> f64 {
        let (lo, hi) = self.bounding_box();
        (hi - lo).norm()
    }

    /// Applies `f` to every vertex, keeping the face array.
    pub fn map_vertices(&self, f: impl Fn(&Vec3) -> Vec3) -> Result<Self> {
        self.with_vertices(self.vertices.iter().map(f).collect())
    }

    pub fn translated(&self, offset: Vec3) -> Result<Self> {
        self.map_vertices(|v| v + offset)
    }

    /// Vertex-wise average of meshes sharing one topology.
    pub fn mean_of(meshes: &[TriangleMesh]) -> Result<Self> {
        let first = meshes
            .first()
            .ok_or_else(|| Error::InsufficientData("no meshes to average".into()))?;
        let mut acc = vec![Vec3::zeros(); first.vertex_count()];
        for (i, mesh) in meshes.iter().enumerate() {
            first.check_same_topology(mesh).map_err(|e| e.at_body(i))?;
            for (a, v) in acc.iter_mut().zip(&mesh.vertices) {
                *a += v;
            }
        }
        let scale = 1.0 / meshes.len() as f64;
        first.with_vertices(acc.into_iter().map(|a| a * scale).collect())
    }
}

/// Signed enclosed volume in mm³, positive for outward-oriented closed
/// meshes. Open meshes still return the signed tetrahedron sum about the
/// origin, which depends on the origin and carries no geometric meaning.
pub fn mesh_volume(mesh: &TriangleMesh) -> f64 {
    (0..mesh.face_count())
        .map(|f| {
            let [a, b, c] = mesh.face_vertices(f);
            a.dot(&b.cross(&c))
        })
        .sum::<f64>()
        / 6.0
}

/// True when every undirected edge is shared by exactly two faces that
/// traverse it in opposite directions.
pub fn is_closed_oriented(mesh: &TriangleMesh) -> bool {
    use std::collections::HashMap;
    let mut directed: HashMap<(u32, u32), u32> = HashMap::with_capacity(mesh.face_count() * 3);
    for face in mesh.faces() {
        for k in 0..3 {
            *directed.entry((face[k], face[(k + 1) % 3])).or_insert(0) += 1;
        }
    }
    directed
        .iter()
        .all(|(&(a, b), &count)| count == 1 && directed.get(&(b, a)) == Some(&1))
}
