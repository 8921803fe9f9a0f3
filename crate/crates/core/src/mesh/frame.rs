use nalgebra::Matrix3;
use rayon::prelude::*;

use super::{TriangleMesh, MIN_FACET_AREA};
use crate::error::{Error, Result};

/// Per-facet 3×3 deformation gradients of one body relative to a reference.
#[derive(Debug, Clone, PartialEq)]
pub struct DeformationSet {
    pub gradients: Vec<Matrix3<f64>>,
}

impl DeformationSet {
    pub fn identity(faces: usize) -> Self {
        DeformationSet {
            gradients: vec![Matrix3::identity(); faces],
        }
    }

    pub fn len(&self) -> usize {
        self.gradients.len()
    }

    pub fn is_empty(&self) -> bool {
        self.gradients.is_empty()
    }

    /// Entries of facet `f` flattened row-major.
    pub fn row_major(&self, f: usize) -> [f64; 9] {
        let q = &self.gradients[f];
        [
            q[(0, 0)],
            q[(0, 1)],
            q[(0, 2)],
            q[(1, 0)],
            q[(1, 1)],
            q[(1, 2)],
            q[(2, 0)],
            q[(2, 1)],
            q[(2, 2)],
        ]
    }

    /// All gradients stacked into one 9m vector, row-major per facet.
    pub fn to_flat(&self) -> Vec<f64> {
        (0..self.len()).flat_map(|f| self.row_major(f)).collect()
    }

    pub fn from_flat(flat: &[f64]) -> Self {
        DeformationSet {
            gradients: flat.chunks_exact(9).map(Matrix3::from_row_slice).collect(),
        }
    }

    pub fn determinants(&self) -> Vec<f64> {
        self.gradients.iter().map(|q| q.determinant()).collect()
    }
}

/// Facet frame `[v2−v1, v3−v1, v4−v1]` with the fourth vertex offset along
/// the normal by `√(2·area)`.
pub fn facet_frame(mesh: &TriangleMesh, f: usize) -> Result<Matrix3<f64>> {
    let area = mesh.face_area(f);
    if !(area > MIN_FACET_AREA) {
        return Err(Error::DegenerateFacet { facet: f, area });
    }
    let [a, b, c] = mesh.face_vertices(f);
    let e1 = b - a;
    let e2 = c - a;
    let cross = e1.cross(&e2);
    let normal = cross / cross.norm().sqrt();
    Ok(Matrix3::from_columns(&[e1, e2, normal]))
}

/// Inverted facet frames of a reference mesh, computed once and reused for
/// every gradient evaluation against that reference.
#[derive(Debug, Clone)]
pub struct ReferenceFrames {
    inverses: Vec<Matrix3<f64>>,
}

impl ReferenceFrames {
    pub fn new(reference: &TriangleMesh) -> Result<Self> {
        let inverses = (0..reference.face_count())
            .into_par_iter()
            .map(|f| {
                let frame = facet_frame(reference, f)?;
                frame
                    .try_inverse()
                    .ok_or(Error::DegenerateFacet {
                        facet: f,
                        area: reference.face_area(f),
                    })
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(ReferenceFrames { inverses })
    }

    pub fn inverses(&self) -> &[Matrix3<f64>] {
        &self.inverses
    }

    /// Gradients of `target` against the reference these frames came from.
    /// The caller guarantees matching topology.
    pub fn gradients(&self, target: &TriangleMesh) -> Result<DeformationSet> {
        if target.face_count() != self.inverses.len() {
            return Err(Error::TopologyMismatch(format!(
                "reference has {} faces, target {}",
                self.inverses.len(),
                target.face_count()
            )));
        }
        let gradients = self
            .inverses
            .par_iter()
            .enumerate()
            .map(|(f, inv)| Ok(facet_frame(target, f)? * inv))
            .collect::<Result<Vec<_>>>()?;
        Ok(DeformationSet { gradients })
    }
}

pub fn deformation_gradients(
    reference: &TriangleMesh,
    target: &TriangleMesh,
) -> Result<DeformationSet> {
    reference.check_same_topology(target)?;
    ReferenceFrames::new(reference)?.gradients(target)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::{TriangleMesh, Vec3};
    use nalgebra::Rotation3;

    fn right_triangle() -> TriangleMesh {
        TriangleMesh::new(
            vec![Vec3::zeros(), Vec3::x(), Vec3::y()],
            vec![[0, 1, 2]],
        )
        .unwrap()
    }

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
    fn unit_right_triangle_frame_is_identity() {
        let v = facet_frame(&right_triangle(), 0).unwrap();
        assert!((v - Matrix3::identity()).norm() < 1e-15);
    }

    #[test]
    fn ccw_outward_faces_have_positive_frame_determinant() {
        let m = octahedron();
        for f in 0..m.face_count() {
            assert!(facet_frame(&m, f).unwrap().determinant() > 0.0);
        }
    }

    #[test]
    fn identity_scale_and_rotation() {
        let m = octahedron();
        let same = deformation_gradients(&m, &m).unwrap();
        assert!(same
            .gradients
            .iter()
            .all(|q| (q - Matrix3::identity()).norm() < 1e-12));

        let doubled = m.map_vertices(|v| v * 2.0).unwrap();
        let g = deformation_gradients(&m, &doubled).unwrap();
        for q in &g.gradients {
            assert!((q - Matrix3::identity() * 2.0).norm() < 1e-12);
            assert!((q.determinant() - 8.0).abs() < 1e-10);
        }

        let rot = Rotation3::from_axis_angle(&Vec3::z_axis(), std::f64::consts::FRAC_PI_2);
        let rotated = m.map_vertices(|v| rot * v).unwrap();
        let g = deformation_gradients(&m, &rotated).unwrap();
        for q in &g.gradients {
            assert!((q - rot.matrix()).norm() < 1e-12);
            assert!((q.determinant() - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn translation_leaves_gradients_unchanged() {
        let m = octahedron();
        let t = m.translated(Vec3::new(5.0, -3.0, 100.0)).unwrap();
        let g = deformation_gradients(&m, &t).unwrap();
        assert!(g
            .gradients
            .iter()
            .all(|q| (q - Matrix3::identity()).norm() < 1e-12));
    }

    #[test]
    fn determinant_is_frame_volume_ratio() {
        let m = octahedron();
        let t = m
            .map_vertices(|v| Vec3::new(v.x * 1.3, v.y * 0.7 + v.x * 0.1, v.z * 1.1))
            .unwrap();
        let g = deformation_gradients(&m, &t).unwrap();
        for f in 0..m.face_count() {
            let ratio = facet_frame(&t, f).unwrap().determinant()
                / facet_frame(&m, f).unwrap().determinant();
            assert!((g.gradients[f].determinant() - ratio).abs() < 1e-12);
        }
    }

    #[test]
    fn degenerate_facet_is_reported() {
        // Build a valid mesh, then collapse a face after construction.
        let m = right_triangle();
        let flat = TriangleMesh {
            vertices: vec![Vec3::zeros(), Vec3::x(), Vec3::x() * 2.0],
            faces: m.faces.clone(),
        };
        assert!(matches!(
            facet_frame(&flat, 0),
            Err(Error::DegenerateFacet { facet: 0, .. })
        ));
    }

    #[test]
    fn flat_round_trip() {
        let m = octahedron();
        let t = m.map_vertices(|v| v * 1.5).unwrap();
        let g = deformation_gradients(&m, &t).unwrap();
        assert_eq!(DeformationSet::from_flat(&g.to_flat()), g);
    }
}
