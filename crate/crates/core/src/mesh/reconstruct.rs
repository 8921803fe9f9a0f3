//! Least-squares vertex recovery from per-facet deformation gradients.
//!
//! Every facet contributes `‖Q_f − V_f(x)·V_f(ref)⁻¹‖²_F`, where the frame
//! `V_f(x)` is built from the unknown vertices plus one free fourth vertex per
//! facet. The objective is quadratic and separates per coordinate, so the
//! normal matrix is shared by x, y and z and depends only on the reference.
//! One vertex is pinned by substitution to remove the translational null
//! space.

use std::sync::Arc;

use nalgebra::{DMatrix, Matrix3};
use nalgebra_sparse::factorization::CscCholesky;
use nalgebra_sparse::{CooMatrix, CscMatrix};

use super::{DeformationSet, Face, ReferenceFrames, TriangleMesh, Vec3};
use crate::error::{Error, Result};

/// Pins one vertex of the reconstructed mesh.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AnchorConstraint {
    pub vertex: usize,
    pub position: Vec3,
}

const PINNED: usize = usize::MAX;

/// Prefactorized normal equations for one reference mesh and anchor vertex.
/// Immutable after construction; every solve only builds a new right-hand
/// side.
pub struct ReconstructionSolver {
    faces: Arc<Vec<Face>>,
    vertex_count: usize,
    anchor_vertex: usize,
    /// `coefficients[f][j]` multiplies unknowns (v1, v2, v3, v4) of facet f
    /// in the equation for column j of `Q_f`.
    coefficients: Vec<[[f64; 4]; 3]>,
    /// Unknown index of each vertex; the fourth vertices occupy `0..m`.
    unknown_of_vertex: Vec<usize>,
    normal: CscMatrix<f64>,
    factor: CscCholesky<f64>,
}

impl std::fmt::Debug for ReconstructionSolver {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("ReconstructionSolver")
            .field("vertices", &self.vertex_count)
            .field("faces", &self.faces.len())
            .field("anchor_vertex", &self.anchor_vertex)
            .field("normal_nnz", &self.normal.nnz())
            .finish()
    }
}

impl ReconstructionSolver {
    pub fn new(reference: &TriangleMesh, anchor_vertex: usize) -> Result<Self> {
        let n = reference.vertex_count();
        let m = reference.face_count();
        if anchor_vertex >= n {
            return Err(Error::InvalidMesh(format!(
                "anchor vertex {anchor_vertex} out of range ({n} vertices)"
            )));
        }
        check_connected(reference)?;

        let frames = ReferenceFrames::new(reference)?;
        let coefficients: Vec<[[f64; 4]; 3]> = frames
            .inverses()
            .iter()
            .map(|e| {
                let mut rows = [[0.0; 4]; 3];
                for (j, row) in rows.iter_mut().enumerate() {
                    let (a, b, c) = (e[(0, j)], e[(1, j)], e[(2, j)]);
                    *row = [-(a + b + c), a, b, c];
                }
                rows
            })
            .collect();

        // Fourth vertices first: eliminating them only fills in between the
        // three corners of their own facet, which are already coupled.
        let mut unknown_of_vertex = vec![PINNED; n];
        let mut next = m;
        for (v, slot) in unknown_of_vertex.iter_mut().enumerate() {
            if v != anchor_vertex {
                *slot = next;
                next += 1;
            }
        }
        let unknowns = next;

        let mut coo = CooMatrix::new(unknowns, unknowns);
        for (f, face) in reference.faces().iter().enumerate() {
            let cols = facet_unknowns(face, f, &unknown_of_vertex);
            for row in &coefficients[f] {
                for (a, &ca) in cols.iter().enumerate() {
                    if ca == PINNED {
                        continue;
                    }
                    for (b, &cb) in cols.iter().enumerate() {
                        if cb != PINNED {
                            coo.push(ca, cb, row[a] * row[b]);
                        }
                    }
                }
            }
        }
        let normal = CscMatrix::from(&coo);
        let factor =
            CscCholesky::factor(&normal).map_err(|e| Error::Factorization(format!("{e:?}")))?;

        Ok(ReconstructionSolver {
            faces: Arc::clone(reference.shared_faces()),
            vertex_count: n,
            anchor_vertex,
            coefficients,
            unknown_of_vertex,
            normal,
            factor,
        })
    }

    pub fn anchor_vertex(&self) -> usize {
        self.anchor_vertex
    }

    pub fn face_count(&self) -> usize {
        self.faces.len()
    }

    /// Solves for vertex positions with the anchor vertex fixed at
    /// `anchor_position`.
    pub fn solve(&self, deformations: &DeformationSet, anchor_position: Vec3) -> Result<TriangleMesh> {
        self.solve_with_residual(deformations, anchor_position)
            .map(|(mesh, _)| mesh)
    }

    /// Like [`solve`](Self::solve), also returning the relative residual
    /// `‖N·x − r‖ / ‖r‖` of the normal equations.
    pub fn solve_with_residual(
        &self,
        deformations: &DeformationSet,
        anchor_position: Vec3,
    ) -> Result<(TriangleMesh, f64)> {
        let m = self.faces.len();
        if deformations.len() != m {
            return Err(Error::TopologyMismatch(format!(
                "{} deformations for {} facets",
                deformations.len(),
                m
            )));
        }
        if let Some(f) = deformations
            .gradients
            .iter()
            .position(|q| !q.iter().all(|v| v.is_finite()))
        {
            return Err(Error::NonFinite(format!("deformation gradient of facet {f}")));
        }

        let rhs = self.assemble_rhs(&deformations.gradients, anchor_position);
        let mut x = self.factor.solve(&rhs);
        let mut residual = self.relative_residual(&x, &rhs);
        // Iterative refinement for badly scaled templates.
        for _ in 0..3 {
            if residual <= 1e-12 {
                break;
            }
            let r = &rhs - &self.normal * &x;
            x += self.factor.solve(&r);
            residual = self.relative_residual(&x, &rhs);
        }

        let vertices = self
            .unknown_of_vertex
            .iter()
            .map(|&u| {
                if u == PINNED {
                    anchor_position
                } else {
                    Vec3::new(x[(u, 0)], x[(u, 1)], x[(u, 2)])
                }
            })
            .collect();
        let mesh = TriangleMesh::with_shared_faces(vertices, Arc::clone(&self.faces))?;
        Ok((mesh, residual))
    }

    fn assemble_rhs(&self, gradients: &[Matrix3<f64>], anchor: Vec3) -> DMatrix<f64> {
        let unknowns = self.normal.nrows();
        let mut rhs = DMatrix::zeros(unknowns, 3);
        for (f, face) in self.faces.iter().enumerate() {
            let cols = facet_unknowns(face, f, &self.unknown_of_vertex);
            let q = &gradients[f];
            for (j, row) in self.coefficients[f].iter().enumerate() {
                for c in 0..3 {
                    let mut target = q[(c, j)];
                    for (a, &col) in cols.iter().enumerate() {
                        if col == PINNED {
                            target -= row[a] * anchor[c];
                        }
                    }
                    for (a, &col) in cols.iter().enumerate() {
                        if col != PINNED {
                            rhs[(col, c)] += row[a] * target;
                        }
                    }
                }
            }
        }
        rhs
    }

    fn relative_residual(&self, x: &DMatrix<f64>, rhs: &DMatrix<f64>) -> f64 {
        let r = rhs - &self.normal * x;
        let scale = rhs.norm();
        if scale > 0.0 {
            r.norm() / scale
        } else {
            r.norm()
        }
    }
}

fn facet_unknowns(face: &Face, f: usize, unknown_of_vertex: &[usize]) -> [usize; 4] {
    [
        unknown_of_vertex[face[0] as usize],
        unknown_of_vertex[face[1] as usize],
        unknown_of_vertex[face[2] as usize],
        f,
    ]
}

/// Errors with a component listing unless every vertex is reachable from
/// every other through shared faces.
fn check_connected(mesh: &TriangleMesh) -> Result<()> {
    let n = mesh.vertex_count();
    let mut parent: Vec<usize> = (0..n).collect();
    fn find(parent: &mut [usize], mut i: usize) -> usize {
        while parent[i] != i {
            parent[i] = parent[parent[i]];
            i = parent[i];
        }
        i
    }
    for face in mesh.faces() {
        let a = find(&mut parent, face[0] as usize);
        for &v in &face[1..] {
            let b = find(&mut parent, v as usize);
            if a != b {
                parent[b] = a;
            }
        }
    }
    let mut components: std::collections::BTreeMap<usize, (usize, usize)> = Default::default();
    for v in 0..n {
        let root = find(&mut parent, v);
        let entry = components.entry(root).or_insert((v, 0));
        entry.1 += 1;
    }
    if components.len() <= 1 {
        return Ok(());
    }
    let mut listed: Vec<(usize, usize)> = components.into_values().collect();
    listed.sort();
    let summary = listed
        .iter()
        .map(|(first, size)| format!("vertices from #{first}: {size}"))
        .collect::<Vec<_>>()
        .join("; ");
    Err(Error::SingularSystem {
        count: listed.len(),
        summary,
    })
}

pub fn reconstruct_vertices(
    reference: &TriangleMesh,
    deformations: &DeformationSet,
    anchor: AnchorConstraint,
) -> Result<TriangleMesh> {
    ReconstructionSolver::new(reference, anchor.vertex)?.solve(deformations, anchor.position)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::deformation_gradients;

    fn octahedron() -> TriangleMesh {
        let v = vec![
            Vec3::new(10.0, 0.0, 0.0),
            Vec3::new(-10.0, 0.0, 0.0),
            Vec3::new(0.0, 12.0, 0.0),
            Vec3::new(0.0, -12.0, 0.0),
            Vec3::new(0.0, 0.0, 15.0),
            Vec3::new(0.0, 0.0, -15.0),
        ];
        let faces = vec![
            [0, 2, 4],
            [2, 1, 4],
            [1, 3, 4],
            [3, 0, 4],
            [2, 0, 5],
            [1, 2, 5],
            [3, 1, 5],
            [0, 3, 5],
        ];
        TriangleMesh::new(v, faces).unwrap()
    }

    #[test]
    fn identity_deformations_are_a_fixed_point() {
        let m = octahedron();
        let anchor = AnchorConstraint {
            vertex: 0,
            position: m.vertices()[0],
        };
        let out = reconstruct_vertices(&m, &DeformationSet::identity(8), anchor).unwrap();
        for (a, b) in out.vertices().iter().zip(m.vertices()) {
            assert!((a - b).norm() < 1e-6);
        }
    }

    #[test]
    fn uniform_scale_gives_closed_form_affine_solution() {
        let m = octahedron();
        let d = DeformationSet {
            gradients: vec![Matrix3::identity() * 2.0; 8],
        };
        let anchor = AnchorConstraint {
            vertex: 0,
            position: Vec3::zeros(),
        };
        let (out, residual) = ReconstructionSolver::new(&m, 0)
            .unwrap()
            .solve_with_residual(&d, anchor.position)
            .unwrap();
        assert!(residual <= 1e-8);
        let v0 = m.vertices()[0];
        for (a, b) in out.vertices().iter().zip(m.vertices()) {
            assert!((a - (b - v0) * 2.0).norm() < 1e-9);
        }
    }

    #[test]
    fn recovers_target_from_its_gradients() {
        let m = octahedron();
        let t = m
            .map_vertices(|v| Vec3::new(v.x * 1.2 + 0.3 * v.z, v.y * 0.9, v.z + 0.1 * v.x + 40.0))
            .unwrap();
        let d = deformation_gradients(&m, &t).unwrap();
        let out = reconstruct_vertices(
            &m,
            &d,
            AnchorConstraint {
                vertex: 3,
                position: t.vertices()[3],
            },
        )
        .unwrap();
        let tol = 1e-6 * t.bbox_diagonal();
        for (a, b) in out.vertices().iter().zip(t.vertices()) {
            assert!((a - b).norm() < tol);
        }
    }

    #[test]
    fn disconnected_mesh_is_rejected_with_components() {
        let m = octahedron();
        let mut v = m.vertices().to_vec();
        let mut faces = m.faces().to_vec();
        let offset = v.len() as u32;
        v.extend(m.vertices().iter().map(|p| p + Vec3::new(100.0, 0.0, 0.0)));
        faces.extend(m.faces().iter().map(|f| [f[0] + offset, f[1] + offset, f[2] + offset]));
        let two = TriangleMesh::new(v, faces).unwrap();
        match ReconstructionSolver::new(&two, 0) {
            Err(Error::SingularSystem { count, summary }) => {
                assert_eq!(count, 2);
                assert!(summary.contains("#6"), "{summary}");
            }
            other => panic!("expected singular system, got {other:?}"),
        }
    }

    #[test]
    fn wrong_length_is_rejected() {
        let m = octahedron();
        let solver = ReconstructionSolver::new(&m, 0).unwrap();
        assert!(solver
            .solve(&DeformationSet::identity(3), Vec3::zeros())
            .is_err());
    }
}
