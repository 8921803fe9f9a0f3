//! Control-point measurement specs (a versioned JSON document) and the
//! `measure` operation they drive.

use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::{
    schema_hash_hex, to_hex, ParameterMatrix, ParameterVector, PARAM_COUNT, SCHEMA, SCHEMA_ID,
};
use crate::error::{Error, Result};
use crate::mesh::{is_closed_oriented, mesh_volume, TriangleMesh, Vec3};

pub const DEFAULT_DENSITY_KG_M3: f64 = 1000.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum MeasureMode {
    /// Closed loop of chords through the control points.
    CircumferenceLoop,
    /// Open chain of chords through the control points.
    Polyline,
    /// Vertical (z) extent over the control points.
    AxisExtent,
    /// Enclosed volume times density.
    VolumeWeight,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParameterSpec {
    pub id: u8,
    pub name: String,
    pub mode: MeasureMode,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub points: Vec<u32>,
    #[serde(default)]
    pub closed: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub density_kg_m3: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MeasurementSpec {
    pub schema: String,
    pub schema_hash: String,
    pub template_vertices: usize,
    pub template_faces: usize,
    /// SHA-256 of the template face array (little-endian u32 triples).
    pub template_checksum: String,
    pub density_kg_m3: f64,
    pub parameters: Vec<ParameterSpec>,
}

pub fn face_checksum(mesh: &TriangleMesh) -> String {
    let mut hasher = Sha256::new();
    for face in mesh.faces() {
        for idx in face {
            hasher.update(idx.to_le_bytes());
        }
    }
    to_hex(&hasher.finalize())
}

impl MeasurementSpec {
    /// Builds and validates a spec bound to `template`.
    pub fn new(template: &TriangleMesh, parameters: Vec<ParameterSpec>) -> Result<Self> {
        let spec = MeasurementSpec {
            schema: SCHEMA_ID.to_string(),
            schema_hash: schema_hash_hex(),
            template_vertices: template.vertex_count(),
            template_faces: template.face_count(),
            template_checksum: face_checksum(template),
            density_kg_m3: DEFAULT_DENSITY_KG_M3,
            parameters,
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        if self.schema != SCHEMA_ID || self.schema_hash != schema_hash_hex() {
            return Err(Error::Spec(format!(
                "schema {} / {} does not match {SCHEMA_ID}",
                self.schema, self.schema_hash
            )));
        }
        if self.parameters.len() != PARAM_COUNT {
            return Err(Error::Spec(format!(
                "expected {PARAM_COUNT} parameter records, got {}",
                self.parameters.len()
            )));
        }
        if !(self.density_kg_m3 > 0.0) {
            return Err(Error::Spec("density must be positive".into()));
        }
        for (i, (p, d)) in self.parameters.iter().zip(SCHEMA.iter()).enumerate() {
            if p.id != d.id || p.name != d.name {
                return Err(Error::Spec(format!(
                    "record {i} is ({}, {:?}), expected ({}, {:?})",
                    p.id, p.name, d.id, d.name
                )));
            }
            if let Some(&bad) = p.points.iter().find(|&&v| v as usize >= self.template_vertices) {
                return Err(Error::Spec(format!(
                    "{}: control point {bad} out of range ({} vertices)",
                    d.key, self.template_vertices
                )));
            }
            let ok = match p.mode {
                MeasureMode::CircumferenceLoop => p.closed && p.points.len() >= 8,
                MeasureMode::Polyline => p.points.len() >= 2,
                MeasureMode::AxisExtent => p.points.len() >= 2,
                MeasureMode::VolumeWeight => p.density_kg_m3.is_none_or(|r| r > 0.0),
            };
            if !ok {
                return Err(Error::Spec(format!(
                    "{}: invalid {:?} record (closed loops need >= 8 points, chains >= 2)",
                    d.key, p.mode
                )));
            }
        }
        Ok(())
    }

    pub fn check_template(&self, mesh: &TriangleMesh) -> Result<()> {
        if mesh.vertex_count() != self.template_vertices
            || mesh.face_count() != self.template_faces
            || face_checksum(mesh) != self.template_checksum
        {
            return Err(Error::TopologyMismatch(format!(
                "mesh ({} vertices, {} faces) does not match the spec template ({} vertices, {} faces)",
                mesh.vertex_count(),
                mesh.face_count(),
                self.template_vertices,
                self.template_faces
            )));
        }
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let spec: MeasurementSpec = serde_json::from_str(&text)?;
        spec.validate()?;
        Ok(spec)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let text = serde_json::to_string_pretty(self)?;
        std::fs::write(path, text).map_err(|e| Error::io(path, e))
    }
}

fn chain_length(vertices: &[Vec3], points: &[u32], closed: bool) -> f64 {
    let mut total: f64 = points
        .windows(2)
        .map(|w| (vertices[w[1] as usize] - vertices[w[0] as usize]).norm())
        .sum();
    if closed && points.len() > 1 {
        total += (vertices[points[0] as usize] - vertices[points[points.len() - 1] as usize]).norm();
    }
    total
}

/// Measures all 19 parameters on a mesh of the spec's template.
pub fn measure(mesh: &TriangleMesh, spec: &MeasurementSpec) -> Result<ParameterVector> {
    spec.check_template(mesh)?;
    let v = mesh.vertices();
    let mut values = [0.0; PARAM_COUNT];
    for (slot, p) in values.iter_mut().zip(&spec.parameters) {
        *slot = match p.mode {
            MeasureMode::CircumferenceLoop => chain_length(v, &p.points, true),
            MeasureMode::Polyline => chain_length(v, &p.points, p.closed),
            MeasureMode::AxisExtent => {
                let (lo, hi) = p.points.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &i| {
                    let z = v[i as usize].z;
                    (lo.min(z), hi.max(z))
                });
                hi - lo
            }
            MeasureMode::VolumeWeight => {
                if !is_closed_oriented(mesh) {
                    return Err(Error::InvalidMesh(
                        "volume-based weight needs a closed, consistently oriented mesh".into(),
                    ));
                }
                let density = p.density_kg_m3.unwrap_or(spec.density_kg_m3);
                mesh_volume(mesh) * 1e-9 * density
            }
        };
    }
    Ok(ParameterVector::complete(values))
}

/// Measures every mesh; row `i` belongs to `meshes[i]`.
pub fn extract_dataset(meshes: &[TriangleMesh], spec: &MeasurementSpec) -> Result<ParameterMatrix> {
    let rows = meshes
        .par_iter()
        .enumerate()
        .map(|(i, m)| measure(m, spec).map(|p| p.values).map_err(|e| e.at_body(i)))
        .collect::<Result<Vec<_>>>()?;
    ParameterMatrix::new(rows)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::Face;

    /// A 1000 mm cube whose first four vertices form the bottom square.
    fn cube() -> TriangleMesh {
        let s = 1000.0;
        let v = vec![
            Vec3::new(0.0, 0.0, 0.0),
            Vec3::new(s, 0.0, 0.0),
            Vec3::new(s, s, 0.0),
            Vec3::new(0.0, s, 0.0),
            Vec3::new(0.0, 0.0, s),
            Vec3::new(s, 0.0, s),
            Vec3::new(s, s, s),
            Vec3::new(0.0, s, s),
        ];
        let faces: Vec<Face> = vec![
            [0, 2, 1],
            [0, 3, 2],
            [4, 5, 6],
            [4, 6, 7],
            [0, 1, 5],
            [0, 5, 4],
            [1, 2, 6],
            [1, 6, 5],
            [2, 3, 7],
            [2, 7, 6],
            [3, 0, 4],
            [3, 4, 7],
        ];
        TriangleMesh::new(v, faces).unwrap()
    }

    fn cube_spec(mesh: &TriangleMesh) -> MeasurementSpec {
        let params = SCHEMA
            .iter()
            .map(|d| {
                let (mode, points, closed) = match d.id {
                    1 => (MeasureMode::VolumeWeight, vec![], false),
                    2 => (MeasureMode::AxisExtent, vec![0, 6], false),
                    // Bottom square traversed twice gives an 8-point loop.
                    3 => (MeasureMode::CircumferenceLoop, vec![0, 1, 2, 3, 0, 1, 2, 3], true),
                    _ => (MeasureMode::Polyline, vec![0, 1], false),
                };
                ParameterSpec {
                    id: d.id,
                    name: d.name.to_string(),
                    mode,
                    points,
                    closed,
                    density_kg_m3: None,
                }
            })
            .collect();
        MeasurementSpec::new(mesh, params).unwrap()
    }

    #[test]
    fn cube_measurements() {
        let c = cube();
        let spec = cube_spec(&c);
        let p = measure(&c, &spec).unwrap();
        assert!((p.values[0] - 1000.0).abs() < 1e-9, "weight {}", p.values[0]);
        assert_eq!(p.values[1], 1000.0);
        assert!((p.values[2] - 8000.0).abs() < 1e-9);
        assert_eq!(p.values[3], 1000.0);
    }

    #[test]
    fn square_loop_perimeter() {
        let v = [
            Vec3::new(0.0, 0.0, 0.0),
            Vec3::new(10.0, 0.0, 0.0),
            Vec3::new(10.0, 10.0, 0.0),
            Vec3::new(0.0, 10.0, 0.0),
        ];
        assert_eq!(chain_length(&v, &[0, 1, 2, 3], true), 40.0);
        assert_eq!(chain_length(&v, &[0, 1, 2, 3], false), 30.0);
    }

    #[test]
    fn scale_and_translation_behaviour() {
        let c = cube();
        let spec = cube_spec(&c);
        let base = measure(&c, &spec).unwrap();
        let moved = measure(&c.translated(Vec3::new(3.0, -7.0, 11.0)).unwrap(), &spec).unwrap();
        for j in 0..PARAM_COUNT {
            assert!((base.values[j] - moved.values[j]).abs() < 1e-6 * base.values[j]);
        }
        let scaled = measure(&c.map_vertices(|v| v * 1.1).unwrap(), &spec).unwrap();
        assert!((scaled.values[0] - base.values[0] * 1.331).abs() < 1e-9 * base.values[0]);
        assert!((scaled.values[2] - base.values[2] * 1.1).abs() < 1e-9 * base.values[2]);
    }

    #[test]
    fn invalid_specs_are_rejected() {
        let c = cube();
        let mut spec = cube_spec(&c);
        spec.parameters[2].points.truncate(4);
        assert!(spec.validate().is_err());
        let mut spec = cube_spec(&c);
        spec.parameters[4].points = vec![0, 99];
        assert!(spec.validate().is_err());
        let mut spec = cube_spec(&c);
        spec.parameters.swap(3, 4);
        assert!(spec.validate().is_err());
    }

    #[test]
    fn open_mesh_cannot_be_weighed() {
        let c = cube();
        let open = TriangleMesh::new(c.vertices().to_vec(), c.faces()[..11].to_vec()).unwrap();
        let mut spec = cube_spec(&c);
        spec.template_faces = 11;
        spec.template_checksum = face_checksum(&open);
        assert!(measure(&open, &spec).is_err());
    }

    #[test]
    fn dataset_rows_follow_mesh_order() {
        let c = cube();
        let spec = cube_spec(&c);
        let big = c.map_vertices(|v| v * 2.0).unwrap();
        let m = extract_dataset(&[c.clone(), big, c.clone()], &spec).unwrap();
        assert_eq!(m.len(), 3);
        assert_eq!(m.row(0), m.row(2));
        assert_eq!(m.row(1)[1], 2000.0);
    }
}
