//! Offline training: determinant targets per facet, recursive feature
//! elimination of the anthropometric parameters, per-facet mapping matrices,
//! and the global PCA regression baseline.

mod global;
mod model;

use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::anthropometry::{
    extract_dataset, to_hex, MeasurementSpec, ParameterMatrix, PARAM_COUNT,
};
use crate::error::{Error, Result};
use crate::mesh::{DeformationSet, ReferenceFrames, TriangleMesh};
use crate::regression::Design;

pub use global::{components_for_variance, train_global_baseline, train_global_on, GlobalModel};
pub use model::{
    sidecar_path, FacetMapping, MappingModel, ModelMetadata, ParamStats, TrainingContext, MODEL_FORMAT_VERSION,
};

pub const DEFAULT_K: usize = 9;
pub const MIN_TRAINING_BODIES: usize = 20;

/// Which of the 19 parameters feed one facet's mapping.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct RelevanceMask(u32);

impl RelevanceMask {
    const ALL_BITS: u32 = (1 << PARAM_COUNT) - 1;

    pub fn all() -> Self {
        RelevanceMask(Self::ALL_BITS)
    }

    pub fn from_bits(bits: u32) -> Result<Self> {
        if bits & !Self::ALL_BITS != 0 || bits == 0 {
            return Err(Error::ModelFormat(format!("invalid mask bits {bits:#x}")));
        }
        Ok(RelevanceMask(bits))
    }

    /// From 0-based parameter indices.
    pub fn from_indices(indices: impl IntoIterator<Item = usize>) -> Result<Self> {
        let mut bits = 0u32;
        for i in indices {
            if i >= PARAM_COUNT {
                return Err(Error::InvalidParameter(format!("parameter index {i}")));
            }
            bits |= 1 << i;
        }
        Self::from_bits(bits)
    }

    /// From 1-based schema ids.
    pub fn from_ids(ids: &[u8]) -> Result<Self> {
        Self::from_indices(ids.iter().map(|&id| (id as usize).wrapping_sub(1)))
    }

    pub fn bits(self) -> u32 {
        self.0
    }

    pub fn contains(self, index: usize) -> bool {
        index < PARAM_COUNT && self.0 & (1 << index) != 0
    }

    pub fn count(self) -> usize {
        self.0.count_ones() as usize
    }

    /// Selected 0-based indices in schema order.
    pub fn indices(self) -> Vec<usize> {
        (0..PARAM_COUNT).filter(|&i| self.contains(i)).collect()
    }

    pub fn ids(self) -> Vec<u8> {
        self.indices().into_iter().map(|i| i as u8 + 1).collect()
    }

    pub fn is_superset_of(self, other: RelevanceMask) -> bool {
        self.0 & other.0 == other.0
    }
}

/// Determinants of one facet's gradient across all bodies.
pub fn facet_targets(deformation_sets: &[DeformationSet], f: usize) -> Result<Vec<f64>> {
    if deformation_sets.len() < 2 {
        return Err(Error::InsufficientData(format!(
            "determinant targets need at least 2 bodies, got {}",
            deformation_sets.len()
        )));
    }
    deformation_sets
        .iter()
        .enumerate()
        .map(|(i, set)| {
            let q = set.gradients.get(f).ok_or_else(|| {
                Error::InvalidParameter(format!("facet {f} out of range for body {i}"))
            })?;
            let d = q.determinant();
            if d.is_finite() {
                Ok(d)
            } else {
                Err(Error::NonFinite(format!("determinant of body {i} at facet {f}")))
            }
        })
        .collect()
}

fn check_k(k: usize) -> Result<()> {
    if !(1..=PARAM_COUNT).contains(&k) {
        return Err(Error::InvalidParameter(format!("k = {k} not in 1..=19")));
    }
    Ok(())
}

/// Recursive feature elimination on z-scored parameters: refit, drop the
/// column with the smallest absolute weight (ties drop the larger id),
/// repeat until `k` columns remain.
pub fn rfe_select(x: &ParameterMatrix, y: &[f64], k: usize) -> Result<RelevanceMask> {
    check_k(k)?;
    if x.len() <= PARAM_COUNT {
        return Err(Error::InsufficientData(format!(
            "feature elimination needs more than {PARAM_COUNT} bodies, got {}",
            x.len()
        )));
    }
    if y.len() != x.len() {
        return Err(Error::InvalidParameter(format!(
            "{} targets for {} bodies",
            y.len(),
            x.len()
        )));
    }
    rfe_with_design(&Design::new(x), y, k)
}

pub(crate) fn rfe_with_design(design: &Design, y: &[f64], k: usize) -> Result<RelevanceMask> {
    let target = DMatrix::from_column_slice(y.len(), 1, y);
    let projection = design.project(&target);
    let mut surviving: Vec<usize> = (0..PARAM_COUNT).collect();
    while surviving.len() > k {
        let w = design.fit(&projection, &surviving)?;
        let magnitudes: Vec<f64> = w.column(0).iter().map(|v| v.abs()).collect();
        let largest = magnitudes.iter().cloned().fold(0.0, f64::max);
        let smallest = magnitudes.iter().cloned().fold(f64::INFINITY, f64::min);
        let tie = 1e-12 * (1.0 + largest);
        let drop = (0..surviving.len())
            .rev()
            .find(|&s| magnitudes[s] <= smallest + tie)
            .expect("non-empty surviving set");
        surviving.remove(drop);
    }
    RelevanceMask::from_indices(surviving)
}

/// Least-squares map from the masked, z-scored parameters plus a constant to
/// the nine gradient entries (row-major). Returns a 9×(k+1) matrix whose
/// last column is the intercept.
pub fn fit_facet_mapping(
    x: &ParameterMatrix,
    mask: RelevanceMask,
    gradients: &DMatrix<f64>,
) -> Result<DMatrix<f64>> {
    if gradients.nrows() != x.len() || gradients.ncols() != 9 {
        return Err(Error::InvalidParameter(format!(
            "gradient block is {}×{}, expected {}×9",
            gradients.nrows(),
            gradients.ncols(),
            x.len()
        )));
    }
    fit_mapping_with_design(&Design::new(x), mask, gradients)
}

pub(crate) fn fit_mapping_with_design(
    design: &Design,
    mask: RelevanceMask,
    gradients: &DMatrix<f64>,
) -> Result<DMatrix<f64>> {
    let k = mask.count();
    if design.rows() <= k + 1 {
        return Err(Error::InsufficientData(format!(
            "mapping with {k} parameters needs more than {} bodies, got {}",
            k + 1,
            design.rows()
        )));
    }
    let projection = design.project(gradients);
    let w = design.fit(&projection, &mask.indices())?;
    let mut m = DMatrix::zeros(9, k + 1);
    for r in 0..9 {
        for s in 0..k {
            m[(r, s)] = w[(s, r)];
        }
        m[(r, k)] = projection.means[r];
    }
    Ok(m)
}

/// Everything derived from a body dataset that both model kinds train on.
#[derive(Debug, Clone)]
pub struct TrainingSet {
    /// Spec the parameters were measured with; models trained on a set
    /// that has one carry it (plus the parameter rows) as context.
    pub spec: Option<MeasurementSpec>,
    pub mean_mesh: TriangleMesh,
    pub parameters: ParameterMatrix,
    /// Gradients of every body against the mean mesh.
    pub deformations: Vec<DeformationSet>,
}

impl TrainingSet {
    pub fn build(meshes: &[TriangleMesh], spec: &MeasurementSpec) -> Result<Self> {
        let mean_mesh = TriangleMesh::mean_of(meshes)?;
        let parameters = extract_dataset(meshes, spec)?;
        let frames = ReferenceFrames::new(&mean_mesh)?;
        let deformations = meshes
            .iter()
            .enumerate()
            .map(|(i, m)| frames.gradients(m).map_err(|e| e.at_body(i)))
            .collect::<Result<Vec<_>>>()?;
        Ok(TrainingSet {
            spec: Some(spec.clone()),
            mean_mesh,
            parameters,
            deformations,
        })
    }

    pub fn len(&self) -> usize {
        self.parameters.len()
    }

    pub fn is_empty(&self) -> bool {
        self.parameters.is_empty()
    }

    pub fn face_count(&self) -> usize {
        self.mean_mesh.face_count()
    }

    /// n×9 block of facet `f`'s gradient entries, row-major per body.
    pub fn facet_block(&self, f: usize) -> DMatrix<f64> {
        let n = self.len();
        let mut block = DMatrix::zeros(n, 9);
        for (i, set) in self.deformations.iter().enumerate() {
            for (c, v) in set.row_major(f).into_iter().enumerate() {
                block[(i, c)] = v;
            }
        }
        block
    }

    /// SHA-256 over the parameter matrix and mean-mesh vertices.
    pub fn checksum(&self) -> String {
        let mut h = Sha256::new();
        for row in self.parameters.rows() {
            for v in row {
                h.update(v.to_le_bytes());
            }
        }
        for v in self.mean_mesh.vertices() {
            for c in v.iter() {
                h.update(c.to_le_bytes());
            }
        }
        to_hex(&h.finalize())
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct TrainOptions {
    pub seed: u64,
}

pub fn train_model(
    meshes: &[TriangleMesh],
    spec: &MeasurementSpec,
    k: usize,
    options: TrainOptions,
) -> Result<MappingModel> {
    check_k(k)?;
    if meshes.len() < MIN_TRAINING_BODIES {
        return Err(Error::InsufficientData(format!(
            "training needs at least {MIN_TRAINING_BODIES} meshes, got {}",
            meshes.len()
        )));
    }
    let set = TrainingSet::build(meshes, spec)?;
    train_on(&set, k, options)
}

/// Per-facet selection and fit on a prepared training set.
pub fn train_on(set: &TrainingSet, k: usize, options: TrainOptions) -> Result<MappingModel> {
    check_k(k)?;
    if set.len() <= PARAM_COUNT {
        return Err(Error::InsufficientData(format!(
            "training needs more than {PARAM_COUNT} bodies, got {}",
            set.len()
        )));
    }
    let design = Design::new(&set.parameters);
    let facets = (0..set.face_count())
        .into_par_iter()
        .map(|f| {
            let fit = || -> Result<FacetMapping> {
                let y = facet_targets(&set.deformations, f)?;
                let mask = rfe_with_design(&design, &y, k)?;
                let matrix = fit_mapping_with_design(&design, mask, &set.facet_block(f))?;
                Ok(FacetMapping { mask, matrix })
            };
            fit().map_err(|e| e.at_facet(f))
        })
        .collect::<Result<Vec<_>>>()?;

    let metadata = ModelMetadata {
        format_version: MODEL_FORMAT_VERSION,
        n: set.len(),
        k,
        seed: options.seed,
        dataset_checksum: set.checksum(),
        vertices: set.mean_mesh.vertex_count(),
        faces: set.face_count(),
    };
    let model = MappingModel::new(
        set.mean_mesh.clone(),
        ParamStats::from(design.stats()),
        k,
        facets,
        metadata,
    )?;
    match &set.spec {
        Some(spec) => model.with_context(TrainingContext {
            spec: spec.clone(),
            parameters: set.parameters.clone(),
        }),
        None => Ok(model),
    }
}
