//! Online synthesis: fill in missing measurements, predict every facet's
//! deformation gradient, and solve for vertex positions.

use nalgebra::{DVector, Matrix3};
use rayon::prelude::*;

use crate::anthropometry::{
    check_value, measure, MeasurementSpec, ParameterMatrix, ParameterVector, PARAM_COUNT, SCHEMA,
};
use crate::error::{Error, Result};
use crate::imputer::{Imputer, ImputerConfig};
use crate::mesh::{DeformationSet, ReconstructionSolver, TriangleMesh, Vec3};
use crate::selector::{GlobalModel, MappingModel, ParamStats};

/// Mesh vertex pinned during reconstruction.
pub const ANCHOR_VERTEX: usize = 0;

/// Anything that turns a complete parameter vector into per-facet
/// deformations of its mean mesh.
pub trait DeformationPredictor: Send + Sync {
    fn mean_mesh(&self) -> &TriangleMesh;
    fn stats(&self) -> &ParamStats;
    fn predict_deformations(&self, p: &ParameterVector) -> Result<DeformationSet>;

    /// Whether facet `f`'s prediction can depend on parameter index `j`.
    fn reads_parameter(&self, _f: usize, _j: usize) -> bool {
        true
    }
}

impl DeformationPredictor for MappingModel {
    fn mean_mesh(&self) -> &TriangleMesh {
        MappingModel::mean_mesh(self)
    }

    fn stats(&self) -> &ParamStats {
        MappingModel::stats(self)
    }

    fn predict_deformations(&self, p: &ParameterVector) -> Result<DeformationSet> {
        predict_deformations(self, p)
    }

    fn reads_parameter(&self, f: usize, j: usize) -> bool {
        self.facets()[f].mask.contains(j)
    }
}

impl DeformationPredictor for GlobalModel {
    fn mean_mesh(&self) -> &TriangleMesh {
        GlobalModel::mean_mesh(self)
    }

    fn stats(&self) -> &ParamStats {
        GlobalModel::stats(self)
    }

    fn predict_deformations(&self, p: &ParameterVector) -> Result<DeformationSet> {
        GlobalModel::predict_deformations(self, p)
    }
}

fn check_complete(p: &ParameterVector) -> Result<()> {
    if let Some(i) = p.present.iter().position(|&x| !x) {
        return Err(Error::InvalidParameter(format!(
            "prediction needs all 19 parameters; {} is missing",
            SCHEMA[i].key
        )));
    }
    if let Some(i) = p.values.iter().position(|v| !v.is_finite()) {
        return Err(Error::NonFinite(format!("parameter {}", SCHEMA[i].key)));
    }
    Ok(())
}

/// `Q′_f = M_f·[z(P) restricted to mask_f; 1]`, reshaped row-major.
///
/// A facet never reads the z-score of a parameter outside its mask, so its
/// prediction is bitwise independent of that parameter.
pub fn predict_deformations(model: &MappingModel, p: &ParameterVector) -> Result<DeformationSet> {
    check_complete(p)?;
    let stats = model.stats();
    let z: [f64; PARAM_COUNT] = std::array::from_fn(|j| stats.z(j, p.values[j]));
    let gradients = model
        .facets()
        .par_iter()
        .enumerate()
        .map(|(f, mapping)| {
            let mut input: Vec<f64> = mapping.mask.indices().into_iter().map(|j| z[j]).collect();
            input.push(1.0);
            let q = &mapping.matrix * DVector::from_vec(input);
            if q.iter().any(|v| !v.is_finite()) {
                return Err(Error::NonFinite(format!("predicted gradient of facet {f}")));
            }
            Ok(Matrix3::from_row_slice(q.as_slice()))
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(DeformationSet { gradients })
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReshapeResult {
    pub mesh: TriangleMesh,
    /// All 19 values fed to the model.
    pub parameters: ParameterVector,
    pub imputed: [bool; PARAM_COUNT],
    /// Measured back from `mesh`.
    pub achieved: ParameterVector,
}

/// Size of a single-parameter edit.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum EditAmount {
    /// In the parameter's own unit (mm, or kg for weight).
    Absolute(f64),
    /// Multiples of the training standard deviation.
    StdMultiple(f64),
}

/// The training-mean vector with parameter `id` (1-based) moved by `amount`.
pub fn edited_mean(stats: &ParamStats, id: u8, amount: EditAmount) -> Result<ParameterVector> {
    if !(1..=PARAM_COUNT as u8).contains(&id) {
        return Err(Error::InvalidParameter(format!(
            "parameter id must be in 1..=19, got {id}"
        )));
    }
    let j = id as usize - 1;
    let delta = match amount {
        EditAmount::Absolute(d) => d,
        EditAmount::StdMultiple(s) => s * stats.std[j],
    };
    let mut p = ParameterVector::complete(stats.mean);
    p.values[j] += delta;
    check_value(&SCHEMA[j], p.values[j])?;
    Ok(p)
}

/// A predictor bound to its measurement spec and a prefactorized
/// reconstruction solver. Immutable; share it across threads freely.
#[derive(Debug)]
pub struct Mapper<M = MappingModel> {
    model: M,
    spec: MeasurementSpec,
    solver: ReconstructionSolver,
}

impl Mapper<MappingModel> {
    /// Binds a model to the measurement spec it was trained with.
    pub fn from_model(model: MappingModel) -> Result<Self> {
        let spec = model
            .context()
            .map(|c| c.spec.clone())
            .ok_or_else(|| Error::ModelFormat("model carries no measurement spec".into()))?;
        Mapper::new(model, spec)
    }

    /// Training rows stored with the model, for imputation.
    pub fn training_parameters(&self) -> Option<&ParameterMatrix> {
        self.model.context().map(|c| &c.parameters)
    }
}

impl<M: DeformationPredictor> Mapper<M> {
    pub fn new(model: M, spec: MeasurementSpec) -> Result<Self> {
        spec.check_template(model.mean_mesh())?;
        let solver = ReconstructionSolver::new(model.mean_mesh(), ANCHOR_VERTEX)?;
        Ok(Mapper { model, spec, solver })
    }

    pub fn model(&self) -> &M {
        &self.model
    }

    pub fn spec(&self) -> &MeasurementSpec {
        &self.spec
    }

    /// Mesh for a complete vector: anchored at the mean mesh's anchor
    /// vertex, then shifted so the lowest vertex sits at z = 0.
    pub fn synthesize(&self, p: &ParameterVector) -> Result<TriangleMesh> {
        let deformations = self.model.predict_deformations(p)?;
        let anchor = self.model.mean_mesh().vertices()[ANCHOR_VERTEX];
        let mesh = self.solver.solve(&deformations, anchor)?;
        let floor = mesh.vertices().iter().map(|v| v.z).fold(f64::INFINITY, f64::min);
        mesh.translated(Vec3::new(0.0, 0.0, -floor))
    }

    fn finish(&self, parameters: ParameterVector, imputed: [bool; PARAM_COUNT]) -> Result<ReshapeResult> {
        let mesh = self.synthesize(&parameters)?;
        let achieved = measure(&mesh, &self.spec)?;
        Ok(ReshapeResult {
            mesh,
            parameters,
            imputed,
            achieved,
        })
    }

    /// Reshape from a complete vector without imputation.
    pub fn reshape_complete(&self, p: &ParameterVector) -> Result<ReshapeResult> {
        check_complete(p)?;
        self.finish(*p, [false; PARAM_COUNT])
    }

    /// Impute against `data`, then reshape.
    pub fn reshape(
        &self,
        partial: &ParameterVector,
        data: &ParameterMatrix,
        config: &ImputerConfig,
    ) -> Result<ReshapeResult> {
        self.reshape_with(partial, &Imputer::new(data, config)?)
    }

    /// Like [`reshape`](Self::reshape) with a prepared imputer.
    pub fn reshape_with(&self, partial: &ParameterVector, imputer: &Imputer<'_>) -> Result<ReshapeResult> {
        partial.validate()?;
        let filled = imputer.impute(partial)?;
        self.finish(filled.values, filled.imputed)
    }

    /// Reshape the training mean with one parameter changed.
    pub fn edit_from_mean(&self, id: u8, amount: EditAmount) -> Result<ReshapeResult> {
        let p = edited_mean(self.model.stats(), id, amount)?;
        self.finish(p, [false; PARAM_COUNT])
    }
}
