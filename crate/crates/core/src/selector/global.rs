//! Global baseline: one linear regression from all 19 parameters to the
//! leading principal components of the stacked deformation vectors.

use std::path::Path;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};

use super::model::{put_f64, put_u32, ParamStats, Reader};
use super::{TrainingSet, MIN_TRAINING_BODIES};
use crate::anthropometry::{schema_hash, MeasurementSpec, ParameterVector, PARAM_COUNT};
use crate::error::{Error, Result};
use crate::mesh::{DeformationSet, Face, TriangleMesh, Vec3};
use crate::regression::Design;

const MAGIC: &[u8; 8] = b"BSHPGLB\0";
const VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq)]
pub struct GlobalModel {
    mean_mesh: TriangleMesh,
    stats: ParamStats,
    /// 9m×d, orthonormal columns.
    basis: DMatrix<f64>,
    /// 9m stacked mean deformation.
    component_mean: DVector<f64>,
    /// d×20: weights on z-scored parameters, intercept last.
    regression: DMatrix<f64>,
    /// Fraction of total variance carried by each retained component.
    explained: Vec<f64>,
}

pub fn train_global_baseline(
    meshes: &[TriangleMesh],
    spec: &MeasurementSpec,
    d: usize,
) -> Result<GlobalModel> {
    if meshes.len() < MIN_TRAINING_BODIES {
        return Err(Error::InsufficientData(format!(
            "training needs at least {MIN_TRAINING_BODIES} meshes, got {}",
            meshes.len()
        )));
    }
    train_global_on(&TrainingSet::build(meshes, spec)?, d)
}

/// Variance spectrum of the centered stacked deformations: returns the
/// orthonormal principal directions (all of them) and their variances.
fn principal_components(data: &DMatrix<f64>) -> (DMatrix<f64>, Vec<f64>) {
    // data is 9m×n with centered columns. Thin QR first keeps the SVD n×n.
    let qr = data.clone().qr();
    let (q, r) = qr.unpack();
    let svd = r.svd(true, false);
    let u = svd.u.expect("requested U");
    let mut order: Vec<usize> = (0..svd.singular_values.len()).collect();
    order.sort_by(|&a, &b| svd.singular_values[b].total_cmp(&svd.singular_values[a]));
    let sorted_u = DMatrix::from_fn(u.nrows(), order.len(), |i, c| u[(i, order[c])]);
    let variances = order
        .iter()
        .map(|&c| svd.singular_values[c].powi(2))
        .collect();
    (q * sorted_u, variances)
}

/// Smallest number of components whose cumulative variance share reaches
/// `fraction`.
pub fn components_for_variance(set: &TrainingSet, fraction: f64) -> Result<usize> {
    if !(0.0..=1.0).contains(&fraction) {
        return Err(Error::InvalidParameter(format!("variance fraction {fraction}")));
    }
    let (_, variances) = principal_components(&centered_stack(set).0);
    let total: f64 = variances.iter().sum();
    if total == 0.0 {
        return Ok(1);
    }
    let mut acc = 0.0;
    for (i, v) in variances.iter().enumerate() {
        acc += v;
        if acc >= fraction * total {
            return Ok(i + 1);
        }
    }
    Ok(variances.len())
}

fn centered_stack(set: &TrainingSet) -> (DMatrix<f64>, DVector<f64>) {
    let n = set.len();
    let dim = 9 * set.face_count();
    let mut data = DMatrix::zeros(dim, n);
    for (i, def) in set.deformations.iter().enumerate() {
        data.set_column(i, &DVector::from_vec(def.to_flat()));
    }
    let mean = DVector::from_fn(dim, |r, _| data.row(r).sum() / n as f64);
    for mut col in data.column_iter_mut() {
        col -= &mean;
    }
    (data, mean)
}

pub fn train_global_on(set: &TrainingSet, d: usize) -> Result<GlobalModel> {
    let n = set.len();
    let dim = 9 * set.face_count();
    if d == 0 || d > (n - 1).min(dim) {
        return Err(Error::InvalidParameter(format!(
            "d = {d} must be in 1..={}",
            (n.saturating_sub(1)).min(dim)
        )));
    }
    let (data, component_mean) = centered_stack(set);
    let (components, variances) = principal_components(&data);
    let basis = components.columns(0, d).into_owned();
    let total: f64 = variances.iter().sum();
    let explained = variances[..d]
        .iter()
        .map(|v| if total > 0.0 { v / total } else { 0.0 })
        .collect();

    // n×d training coefficients (column means are zero because the data is
    // centered), regressed on the z-scored parameters. The minimum-norm
    // solution keeps tiny or collinear training sets usable.
    let coefficients = data.tr_mul(&basis);
    let design = Design::new(&set.parameters);
    let svd = design.z().clone().svd(true, true);
    let largest = svd.singular_values.max();
    let w = svd
        .solve(&coefficients, 1e-10 * largest.max(f64::MIN_POSITIVE))
        .map_err(|e| Error::Factorization(e.to_string()))?;
    let mut regression = DMatrix::zeros(d, PARAM_COUNT + 1);
    for c in 0..d {
        for j in 0..PARAM_COUNT {
            regression[(c, j)] = w[(j, c)];
        }
        regression[(c, PARAM_COUNT)] = coefficients.column(c).mean();
    }
    Ok(GlobalModel {
        mean_mesh: set.mean_mesh.clone(),
        stats: ParamStats::from(design.stats()),
        basis,
        component_mean,
        regression,
        explained,
    })
}

impl GlobalModel {
    pub fn mean_mesh(&self) -> &TriangleMesh {
        &self.mean_mesh
    }

    pub fn stats(&self) -> &ParamStats {
        &self.stats
    }

    pub fn components(&self) -> usize {
        self.basis.ncols()
    }

    pub fn basis(&self) -> &DMatrix<f64> {
        &self.basis
    }

    pub fn explained_variance(&self) -> &[f64] {
        &self.explained
    }

    pub fn intercept(&self) -> DVector<f64> {
        self.regression.column(PARAM_COUNT).into_owned()
    }

    fn check_complete(p: &ParameterVector) -> Result<()> {
        if !p.is_complete() {
            return Err(Error::InvalidParameter(
                "prediction needs all 19 parameters".into(),
            ));
        }
        if p.values.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("parameter vector".into()));
        }
        Ok(())
    }

    pub fn predict_coefficients(&self, p: &ParameterVector) -> Result<DVector<f64>> {
        Self::check_complete(p)?;
        let mut z = DVector::from_element(PARAM_COUNT + 1, 1.0);
        for j in 0..PARAM_COUNT {
            z[j] = self.stats.z(j, p.values[j]);
        }
        Ok(&self.regression * z)
    }

    pub fn predict_deformations(&self, p: &ParameterVector) -> Result<DeformationSet> {
        let c = self.predict_coefficients(p)?;
        let flat = &self.component_mean + &self.basis * c;
        if flat.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("global prediction".into()));
        }
        Ok(DeformationSet::from_flat(flat.as_slice()))
    }

    /// Projection of a known deformation set onto the retained components.
    pub fn project(&self, deformations: &DeformationSet) -> DeformationSet {
        let x = DVector::from_vec(deformations.to_flat()) - &self.component_mean;
        let c = self.basis.tr_mul(&x);
        let flat = &self.component_mean + &self.basis * c;
        DeformationSet::from_flat(flat.as_slice())
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let d = self.components();
        let mut out = Vec::new();
        out.extend_from_slice(MAGIC);
        put_u32(&mut out, VERSION);
        out.extend_from_slice(&schema_hash());
        put_u32(&mut out, self.mean_mesh.vertex_count() as u32);
        put_u32(&mut out, self.mean_mesh.face_count() as u32);
        put_u32(&mut out, d as u32);
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
        for v in self
            .component_mean
            .iter()
            .chain(self.basis.iter())
            .chain(self.regression.iter())
            .chain(&self.explained)
        {
            put_f64(&mut out, *v);
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut r = Reader { bytes, pos: 0 };
        if r.take(8)? != MAGIC {
            return Err(Error::ModelFormat("not a global model (bad magic)".into()));
        }
        let version = r.u32()?;
        if version != VERSION {
            return Err(Error::ModelFormat(format!("unsupported global model version {version}")));
        }
        if r.take(32)? != schema_hash() {
            return Err(Error::ModelFormat(
                "schema hash does not match this build's parameter schema".into(),
            ));
        }
        let nv = r.u32()? as usize;
        let nf = r.u32()? as usize;
        let d = r.u32()? as usize;
        let dim = 9 * nf;
        let needed = nv * 24 + nf * 12 + 8 * (dim * (d + 1) + d * (PARAM_COUNT + 2));
        if needed > bytes.len() {
            return Err(Error::ModelFormat("truncated global model file".into()));
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
        let mut read_vec = |len: usize| -> Result<Vec<f64>> { (0..len).map(|_| r.f64()).collect() };
        let component_mean = DVector::from_vec(read_vec(dim)?);
        let basis = DMatrix::from_vec(dim, d, read_vec(dim * d)?);
        let regression = DMatrix::from_vec(d, PARAM_COUNT + 1, read_vec(d * (PARAM_COUNT + 1))?);
        let explained = read_vec(d)?;
        if r.pos != bytes.len() {
            return Err(Error::ModelFormat("trailing bytes after global model".into()));
        }
        Ok(GlobalModel {
            mean_mesh,
            stats,
            basis,
            component_mean,
            regression,
            explained,
        })
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, self.to_bytes()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
        Self::from_bytes(&bytes)
    }
}
