//! The trained mapping model and its binary container.
//!
//! Layout (little-endian):
//! magic `BSHPMAP\0`, u32 version, 32-byte schema hash, u32 vertex count,
//! u32 face count, u32 k, vertices as 3×f64, faces as 3×u32, 19 means,
//! 19 stds, then per facet a u32 mask bitset followed by the 9×(k+1)
//! matrix row-major, then a u32 context flag (when 1: a u32-length-prefixed
//! measurement-spec JSON, a u32 row count and the training parameter rows
//! as 19×f64 each), and finally a u32-length-prefixed JSON metadata block.

use std::path::{Path, PathBuf};
use std::sync::Arc;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use super::RelevanceMask;
use crate::anthropometry::{schema_hash, ColumnStats, MeasurementSpec, ParameterMatrix, PARAM_COUNT};
use crate::error::{Error, Result};
use crate::mesh::{Face, TriangleMesh, Vec3};

pub const MODEL_FORMAT_VERSION: u32 = 1;
const MAGIC: &[u8; 8] = b"BSHPMAP\0";

/// Training column means and population standard deviations.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ParamStats {
    pub mean: [f64; PARAM_COUNT],
    pub std: [f64; PARAM_COUNT],
}

impl ParamStats {
    pub fn z(&self, j: usize, v: f64) -> f64 {
        if self.std[j] > 0.0 {
            (v - self.mean[j]) / self.std[j]
        } else {
            0.0
        }
    }
}

impl From<&ColumnStats> for ParamStats {
    fn from(s: &ColumnStats) -> Self {
        ParamStats {
            mean: s.mean,
            std: s.std,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModelMetadata {
    pub format_version: u32,
    pub n: usize,
    pub k: usize,
    pub seed: u64,
    pub dataset_checksum: String,
    pub vertices: usize,
    pub faces: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FacetMapping {
    pub mask: RelevanceMask,
    /// 9×(k+1); the last column is the intercept.
    pub matrix: DMatrix<f64>,
}

/// What reshaping needs besides the mappings: the spec to re-measure
/// output meshes and the training rows to impute against.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainingContext {
    pub spec: MeasurementSpec,
    pub parameters: ParameterMatrix,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MappingModel {
    mean_mesh: TriangleMesh,
    stats: ParamStats,
    k: usize,
    facets: Vec<FacetMapping>,
    metadata: ModelMetadata,
    context: Option<TrainingContext>,
}

impl MappingModel {
    pub fn new(
        mean_mesh: TriangleMesh,
        stats: ParamStats,
        k: usize,
        facets: Vec<FacetMapping>,
        metadata: ModelMetadata,
    ) -> Result<Self> {
        if facets.len() != mean_mesh.face_count() {
            return Err(Error::ModelFormat(format!(
                "{} facet mappings for {} faces",
                facets.len(),
                mean_mesh.face_count()
            )));
        }
        for (f, m) in facets.iter().enumerate() {
            if m.mask.count() != k {
                return Err(Error::ModelFormat(format!(
                    "facet {f}: mask selects {} parameters, expected {k}",
                    m.mask.count()
                )));
            }
            if m.matrix.shape() != (9, k + 1) {
                return Err(Error::ModelFormat(format!(
                    "facet {f}: matrix is {:?}, expected (9, {})",
                    m.matrix.shape(),
                    k + 1
                )));
            }
            if m.matrix.iter().any(|v| !v.is_finite()) {
                return Err(Error::NonFinite(format!("mapping matrix at facet {f}")));
            }
        }
        if stats.mean.iter().chain(&stats.std).any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("model parameter statistics".into()));
        }
        Ok(MappingModel {
            mean_mesh,
            stats,
            k,
            facets,
            metadata,
            context: None,
        })
    }

    /// Attaches the spec and training rows; the spec must fit the mean mesh.
    pub fn with_context(mut self, context: TrainingContext) -> Result<Self> {
        context.spec.validate()?;
        context.spec.check_template(&self.mean_mesh)?;
        if context.parameters.is_empty() {
            return Err(Error::ModelFormat("training context has no parameter rows".into()));
        }
        self.context = Some(context);
        Ok(self)
    }

    pub fn context(&self) -> Option<&TrainingContext> {
        self.context.as_ref()
    }

    pub fn mean_mesh(&self) -> &TriangleMesh {
        &self.mean_mesh
    }

    pub fn stats(&self) -> &ParamStats {
        &self.stats
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn facets(&self) -> &[FacetMapping] {
        &self.facets
    }

    pub fn metadata(&self) -> &ModelMetadata {
        &self.metadata
    }

    /// Swap in externally prepared per-facet mappings (e.g. hand-made masks).
    pub fn with_facets(mut self, facets: Vec<FacetMapping>) -> Result<Self> {
        let context = self.context.take();
        self = MappingModel::new(self.mean_mesh, self.stats, self.k, facets, self.metadata)?;
        self.context = context;
        Ok(self)
    }

    /// How many facets select each parameter.
    pub fn selection_counts(&self) -> [usize; PARAM_COUNT] {
        let mut counts = [0; PARAM_COUNT];
        for m in &self.facets {
            for i in m.mask.indices() {
                counts[i] += 1;
            }
        }
        counts
    }

    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        let mut out = Vec::new();
        out.extend_from_slice(MAGIC);
        put_u32(&mut out, MODEL_FORMAT_VERSION);
        out.extend_from_slice(&schema_hash());
        put_u32(&mut out, self.mean_mesh.vertex_count() as u32);
        put_u32(&mut out, self.mean_mesh.face_count() as u32);
        put_u32(&mut out, self.k as u32);
        for v in self.mean_mesh.vertices() {
            for c in v.iter() {
                put_f64(&mut out, *c);
            }
        }
        for f in self.mean_mesh.faces() {
            for &i in f {
                put_u32(&mut out, i);
            }
        }
        for v in self.stats.mean.iter().chain(&self.stats.std) {
            put_f64(&mut out, *v);
        }
        for m in &self.facets {
            put_u32(&mut out, m.mask.bits());
            for r in 0..9 {
                for c in 0..=self.k {
                    put_f64(&mut out, m.matrix[(r, c)]);
                }
            }
        }
        match &self.context {
            None => put_u32(&mut out, 0),
            Some(ctx) => {
                put_u32(&mut out, 1);
                let spec = serde_json::to_vec(&ctx.spec)?;
                put_u32(&mut out, spec.len() as u32);
                out.extend_from_slice(&spec);
                put_u32(&mut out, ctx.parameters.len() as u32);
                for row in ctx.parameters.rows() {
                    for v in row {
                        put_f64(&mut out, *v);
                    }
                }
            }
        }
        let meta = serde_json::to_vec(&self.metadata)?;
        put_u32(&mut out, meta.len() as u32);
        out.extend_from_slice(&meta);
        Ok(out)
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut r = Reader { bytes, pos: 0 };
        if r.take(8)? != MAGIC {
            return Err(Error::ModelFormat("not a mapping model (bad magic)".into()));
        }
        let version = r.u32()?;
        if version != MODEL_FORMAT_VERSION {
            return Err(Error::ModelFormat(format!(
                "unsupported model version {version}, expected {MODEL_FORMAT_VERSION}"
            )));
        }
        if r.take(32)? != schema_hash() {
            return Err(Error::ModelFormat(
                "schema hash does not match this build's parameter schema".into(),
            ));
        }
        let nv = r.u32()? as usize;
        let nf = r.u32()? as usize;
        let k = r.u32()? as usize;
        if !(1..=PARAM_COUNT).contains(&k) {
            return Err(Error::ModelFormat(format!("k = {k} out of range")));
        }
        // Reject absurd counts before allocating.
        let needed = nv * 24 + nf * (12 + 4 + 72 * (k + 1));
        if needed > bytes.len() {
            return Err(Error::ModelFormat("truncated model file".into()));
        }
        let mut vertices = Vec::with_capacity(nv);
        for _ in 0..nv {
            vertices.push(Vec3::new(r.f64()?, r.f64()?, r.f64()?));
        }
        let mut faces: Vec<Face> = Vec::with_capacity(nf);
        for _ in 0..nf {
            faces.push([r.u32()?, r.u32()?, r.u32()?]);
        }
        let mean_mesh = TriangleMesh::with_shared_faces(vertices, Arc::new(faces))?;
        let mut stats = ParamStats {
            mean: [0.0; PARAM_COUNT],
            std: [0.0; PARAM_COUNT],
        };
        for v in stats.mean.iter_mut().chain(stats.std.iter_mut()) {
            *v = r.f64()?;
        }
        let mut facets = Vec::with_capacity(nf);
        for _ in 0..nf {
            let mask = RelevanceMask::from_bits(r.u32()?)?;
            let mut matrix = DMatrix::zeros(9, k + 1);
            for row in 0..9 {
                for c in 0..=k {
                    matrix[(row, c)] = r.f64()?;
                }
            }
            facets.push(FacetMapping { mask, matrix });
        }
        let context = match r.u32()? {
            0 => None,
            1 => {
                let len = r.u32()? as usize;
                let spec: MeasurementSpec = serde_json::from_slice(r.take(len)?)?;
                let rows = r.u32()? as usize;
                if rows.saturating_mul(8 * PARAM_COUNT) > bytes.len() - r.pos {
                    return Err(Error::ModelFormat("truncated model file".into()));
                }
                let mut data = Vec::with_capacity(rows);
                for _ in 0..rows {
                    let mut row = [0.0; PARAM_COUNT];
                    for v in row.iter_mut() {
                        *v = r.f64()?;
                    }
                    data.push(row);
                }
                Some(TrainingContext {
                    spec,
                    parameters: ParameterMatrix::new(data)?,
                })
            }
            flag => return Err(Error::ModelFormat(format!("invalid context flag {flag}"))),
        };
        let meta_len = r.u32()? as usize;
        let metadata: ModelMetadata = serde_json::from_slice(r.take(meta_len)?)?;
        if r.pos != bytes.len() {
            return Err(Error::ModelFormat(format!(
                "{} trailing bytes after model",
                bytes.len() - r.pos
            )));
        }
        let model = MappingModel::new(mean_mesh, stats, k, facets, metadata)?;
        match context {
            Some(ctx) => model.with_context(ctx),
            None => Ok(model),
        }
    }

    /// Writes the binary model and a `<path>.json` metadata sidecar.
    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, self.to_bytes()?).map_err(|e| Error::io(path, e))?;
        let sidecar = sidecar_path(path);
        let json = serde_json::to_string_pretty(&self.metadata)?;
        std::fs::write(&sidecar, json + "\n").map_err(|e| Error::io(sidecar, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
        Self::from_bytes(&bytes)
    }
}

pub fn sidecar_path(path: &Path) -> PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(".json");
    PathBuf::from(s)
}

pub(crate) fn put_u32(out: &mut Vec<u8>, v: u32) {
    out.extend_from_slice(&v.to_le_bytes());
}

pub(crate) fn put_f64(out: &mut Vec<u8>, v: f64) {
    out.extend_from_slice(&v.to_le_bytes());
}

pub(crate) struct Reader<'a> {
    pub bytes: &'a [u8],
    pub pos: usize,
}

impl<'a> Reader<'a> {
    pub fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self
            .pos
            .checked_add(n)
            .filter(|&e| e <= self.bytes.len())
            .ok_or_else(|| Error::ModelFormat("truncated model file".into()))?;
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    pub fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    pub fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }
}
