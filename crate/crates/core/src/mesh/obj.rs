//! Wavefront OBJ reading and writing (`v` and triangular `f` records).

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use super::{Face, TriangleMesh, Vec3};
use crate::error::{Error, Result};

pub fn load_mesh(path: impl AsRef<Path>) -> Result<TriangleMesh> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_obj(&text)
}

pub fn save_mesh(mesh: &TriangleMesh, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, write_obj(mesh)).map_err(|e| Error::io(path, e))
}

/// Serializes with shortest round-trip float formatting, so a reload
/// reproduces every coordinate bitwise.
pub fn write_obj(mesh: &TriangleMesh) -> String {
    let mut out = String::with_capacity(mesh.vertex_count() * 48 + mesh.face_count() * 24);
    for v in mesh.vertices() {
        let _ = writeln!(out, "v {} {} {}", v.x, v.y, v.z);
    }
    for f in mesh.faces() {
        let _ = writeln!(out, "f {} {} {}", f[0] + 1, f[1] + 1, f[2] + 1);
    }
    out
}

pub fn parse_obj(text: &str) -> Result<TriangleMesh> {
    let mut vertices = Vec::new();
    // Face references are resolved after all vertices are read, keeping the
    // line number for error reporting.
    let mut raw_faces: Vec<(usize, [i64; 3])> = Vec::new();

    for (idx, line) in text.lines().enumerate() {
        let lineno = idx + 1;
        let line = line.split('#').next().unwrap_or("").trim();
        let mut tokens = line.split_whitespace();
        match tokens.next() {
            Some("v") => {
                let coords: Vec<&str> = tokens.collect();
                if coords.len() < 3 {
                    return Err(parse_err(lineno, "vertex needs 3 coordinates"));
                }
                let mut p = [0.0; 3];
                for (slot, tok) in p.iter_mut().zip(&coords) {
                    *slot = tok
                        .parse::<f64>()
                        .map_err(|_| parse_err(lineno, format!("bad coordinate '{tok}'")))?;
                    if !slot.is_finite() {
                        return Err(parse_err(lineno, "non-finite coordinate"));
                    }
                }
                vertices.push(Vec3::new(p[0], p[1], p[2]));
            }
            Some("f") => {
                let refs: Vec<&str> = tokens.collect();
                if refs.len() != 3 {
                    return Err(parse_err(lineno, "non-triangular face"));
                }
                let mut face = [0i64; 3];
                for (slot, tok) in face.iter_mut().zip(&refs) {
                    let head = tok.split('/').next().unwrap_or("");
                    *slot = head
                        .parse::<i64>()
                        .map_err(|_| parse_err(lineno, format!("bad face index '{tok}'")))?;
                }
                raw_faces.push((lineno, face));
            }
            // Normals, texture coordinates, groups and materials carry no
            // information for a fixed-topology body template.
            Some("vn") | Some("vt") | Some("vp") | Some("o") | Some("g") | Some("s")
            | Some("usemtl") | Some("mtllib") | None => {}
            Some(other) => {
                return Err(parse_err(lineno, format!("unsupported record '{other}'")));
            }
        }
    }

    let n = vertices.len() as i64;
    let mut faces: Vec<Face> = Vec::with_capacity(raw_faces.len());
    for (lineno, raw) in raw_faces {
        let mut face = [0u32; 3];
        for (slot, &r) in face.iter_mut().zip(&raw) {
            // Negative indices count back from the last vertex.
            let resolved = if r > 0 { r - 1 } else { n + r };
            if r == 0 || resolved < 0 || resolved >= n {
                return Err(parse_err(lineno, format!("face index {r} out of range")));
            }
            *slot = resolved as u32;
        }
        faces.push(face);
    }

    TriangleMesh::new(vertices, faces)
}

fn parse_err(line: usize, msg: impl Into<String>) -> Error {
    Error::Parse {
        line,
        msg: msg.into(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const TETRA: &str = "\
# tetrahedron
v 0 0 0
v 1 0 0
v 0 1 0
v 0 0 1
f 1 3 2
f 1 2 4
f 1 4 3
f 2 3 4
";

    #[test]
    fn tetrahedron_loads() {
        let m = parse_obj(TETRA).unwrap();
        assert_eq!(m.vertex_count(), 4);
        assert_eq!(m.face_count(), 4);
        assert!(crate::mesh::is_closed_oriented(&m));
    }

    #[test]
    fn quad_face_names_line() {
        let text = "v 0 0 0\nv 1 0 0\nv 1 1 0\nv 0 1 0\nf 1 2 3 4\n";
        let err = parse_obj(text).unwrap_err();
        assert_eq!(err.to_string(), "non-triangular face at line 5");
    }

    #[test]
    fn out_of_range_and_malformed() {
        let err = parse_obj("v 0 0 0\nv 1 0 0\nv 0 1 0\nf 1 2 9\n").unwrap_err();
        assert!(matches!(err, Error::Parse { line: 4, .. }), "{err}");
        let err = parse_obj("v 0 zero 0\n").unwrap_err();
        assert!(matches!(err, Error::Parse { line: 1, .. }));
    }

    #[test]
    fn slash_and_negative_indices() {
        let text = "v 0 0 0\nv 1 0 0\nv 0 1 0\nvn 0 0 1\nf 1//1 2//1 -1//1\n";
        let m = parse_obj(text).unwrap();
        assert_eq!(m.faces()[0], [0, 1, 2]);
    }

    #[test]
    fn write_then_parse_is_bitwise() {
        let m = TriangleMesh::new(
            vec![
                Vec3::new(0.1, 1.0 / 3.0, -2e-7),
                Vec3::new(1234.5678901234, 0.0, 1e-300),
                Vec3::new(0.0, 987.654321, 5.0),
            ],
            vec![[0, 1, 2]],
        )
        .unwrap();
        let back = parse_obj(&write_obj(&m)).unwrap();
        assert_eq!(back, m);
    }
}
