//! Measurement-error evaluation of fitted models and the locality report.

use std::fmt::Write as _;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::anthropometry::{measure, ParamKind, ParameterVector, PARAM_COUNT, SCHEMA};
use crate::error::{Error, Result};
use crate::imputer::Imputer;
use crate::mapper::{edited_mean, DeformationPredictor, EditAmount, Mapper};
use crate::mesh::TriangleMesh;
use crate::synth::DependencyTruth;

/// Default share of bodies held out for testing.
pub const TEST_FRACTION: f64 = 0.2;

/// Seeded shuffle split of `0..n` into (train, test); both sorted.
pub fn split_indices(n: usize, test_fraction: f64, seed: u64) -> Result<(Vec<usize>, Vec<usize>)> {
    if !(test_fraction > 0.0 && test_fraction < 1.0) {
        return Err(Error::InvalidConfig(format!(
            "test fraction must be in (0, 1), got {test_fraction}"
        )));
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let n_test = ((n as f64 * test_fraction).round() as usize).clamp(1, n.saturating_sub(1).max(1));
    let mut test = order[..n_test].to_vec();
    let mut train = order[n_test..].to_vec();
    test.sort_unstable();
    train.sort_unstable();
    Ok((train, test))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MaeRow {
    pub id: u8,
    pub key: &'static str,
    pub name: &'static str,
    pub unit: &'static str,
    pub mae: f64,
}

/// Per-parameter mean absolute error between requested and re-measured
/// values.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MaeReport {
    pub model_id: String,
    pub split_id: String,
    pub n: usize,
    pub rows: Vec<MaeRow>,
    /// Mean of the 18 length rows (weight excluded).
    pub length_average: f64,
}

impl MaeReport {
    fn from_errors(model_id: &str, split_id: &str, errors: &[[f64; PARAM_COUNT]]) -> Self {
        let rows: Vec<MaeRow> = SCHEMA
            .iter()
            .enumerate()
            .map(|(j, d)| {
                // Summing sorted values makes the report independent of body order.
                let mut col: Vec<f64> = errors.iter().map(|e| e[j]).collect();
                col.sort_by(f64::total_cmp);
                MaeRow {
                    id: d.id,
                    key: d.key,
                    name: d.name,
                    unit: unit_label(d.kind),
                    mae: col.iter().sum::<f64>() / errors.len() as f64,
                }
            })
            .collect();
        let lengths: Vec<f64> = rows
            .iter()
            .zip(SCHEMA.iter())
            .filter(|(_, d)| d.kind != ParamKind::Weight)
            .map(|(r, _)| r.mae)
            .collect();
        MaeReport {
            model_id: model_id.into(),
            split_id: split_id.into(),
            n: errors.len(),
            length_average: lengths.iter().sum::<f64>() / lengths.len() as f64,
            rows,
        }
    }

    pub fn mae(&self, id: u8) -> Option<f64> {
        self.rows.iter().find(|r| r.id == id).map(|r| r.mae)
    }

    pub fn to_markdown(&self) -> String {
        compare_markdown(&[self])
    }

    pub fn to_csv(&self) -> String {
        compare_csv(&[self])
    }
}

fn unit_label(kind: ParamKind) -> &'static str {
    if kind == ParamKind::Weight {
        "kg"
    } else {
        "mm"
    }
}

fn check_same_rows(reports: &[&MaeReport]) -> bool {
    !reports.is_empty() && reports.iter().all(|r| r.rows.len() == PARAM_COUNT)
}

/// Parameter rows against one column per report, closed by the
/// length-average row.
pub fn compare_markdown(reports: &[&MaeReport]) -> String {
    if !check_same_rows(reports) {
        return String::new();
    }
    let mut out = String::from("| Parameter | Unit |");
    for r in reports {
        let _ = write!(out, " {} ({}, n={}) |", r.model_id, r.split_id, r.n);
    }
    out.push_str("\n|---|---|");
    out.push_str(&"---:|".repeat(reports.len()));
    out.push('\n');
    for j in 0..PARAM_COUNT {
        let row = &reports[0].rows[j];
        let _ = write!(out, "| {}. {} | {} |", row.id, row.name, row.unit);
        for r in reports {
            let _ = write!(out, " {:.2} |", r.rows[j].mae);
        }
        out.push('\n');
    }
    out.push_str("| Length average | mm |");
    for r in reports {
        let _ = write!(out, " {:.2} |", r.length_average);
    }
    out.push('\n');
    out
}

pub fn compare_csv(reports: &[&MaeReport]) -> String {
    if !check_same_rows(reports) {
        return String::new();
    }
    let mut out = String::from("id,parameter,unit");
    for r in reports {
        let _ = write!(out, ",{}:{}", r.model_id, r.split_id);
    }
    out.push('\n');
    for j in 0..PARAM_COUNT {
        let row = &reports[0].rows[j];
        let _ = write!(out, "{},{},{}", row.id, row.key, row.unit);
        for r in reports {
            let _ = write!(out, ",{}", r.rows[j].mae);
        }
        out.push('\n');
    }
    out.push_str(",length_average,mm");
    for r in reports {
        let _ = write!(out, ",{}", r.length_average);
    }
    out.push('\n');
    out
}

/// Measure every body, reshape from its full measured vector, re-measure,
/// and average the absolute differences.
pub fn reconstruction_mae<M: DeformationPredictor>(
    mapper: &Mapper<M>,
    meshes: &[TriangleMesh],
    model_id: &str,
    split_id: &str,
) -> Result<MaeReport> {
    evaluate(mapper, meshes, model_id, split_id, |p| mapper.reshape_complete(p))
}

/// End-to-end variant: only the `present` ids of each measured vector are
/// given and the rest is imputed before reshaping. Errors cover all 19
/// parameters against the body's true measurements.
pub fn reconstruction_mae_imputed<M: DeformationPredictor>(
    mapper: &Mapper<M>,
    meshes: &[TriangleMesh],
    present: &[u8],
    imputer: &Imputer<'_>,
    model_id: &str,
    split_id: &str,
) -> Result<MaeReport> {
    if present.is_empty() || present.iter().any(|&id| !(1..=PARAM_COUNT as u8).contains(&id)) {
        return Err(Error::InvalidParameter(format!(
            "present ids must be a non-empty subset of 1..=19, got {present:?}"
        )));
    }
    evaluate(mapper, meshes, model_id, split_id, |p| {
        let mut partial = ParameterVector::empty();
        for &id in present {
            partial.set(id as usize - 1, p.values[id as usize - 1]);
        }
        mapper.reshape_with(&partial, imputer)
    })
}

fn evaluate<M: DeformationPredictor>(
    mapper: &Mapper<M>,
    meshes: &[TriangleMesh],
    model_id: &str,
    split_id: &str,
    run: impl Fn(&ParameterVector) -> Result<crate::mapper::ReshapeResult> + Sync,
) -> Result<MaeReport> {
    if meshes.is_empty() {
        return Err(Error::InsufficientData("no bodies to evaluate".into()));
    }
    let errors = meshes
        .par_iter()
        .enumerate()
        .map(|(i, mesh)| {
            let body = || -> Result<[f64; PARAM_COUNT]> {
                let truth = measure(mesh, mapper.spec())?;
                let out = run(&truth)?;
                Ok(std::array::from_fn(|j| (out.achieved.values[j] - truth.values[j]).abs()))
            };
            body().map_err(|e| e.at_body(i))
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(MaeReport::from_errors(model_id, split_id, &errors))
}

/// A named facet group for the locality report.
#[derive(Debug, Clone, PartialEq)]
pub struct RegionFacets {
    pub name: String,
    pub facets: Vec<usize>,
    /// Seam groups whose facets mix dependencies.
    pub blend: bool,
}

impl RegionFacets {
    pub fn from_truth(truth: &DependencyTruth) -> Vec<RegionFacets> {
        truth
            .regions
            .iter()
            .map(|r| RegionFacets {
                name: r.name.clone(),
                facets: truth.facets_of(r.id),
                blend: r.blend,
            })
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RegionResponse {
    pub region: String,
    pub facets: usize,
    /// Mean |det Q′(edited) − det Q′(mean)| over the region.
    pub mean_abs_det_change: f64,
    /// Every facet of the region masks the parameter out.
    pub masked_out: bool,
    pub blend: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LocalityReport {
    pub parameter: u8,
    /// Absolute change applied to the mean value.
    pub delta: f64,
    pub regions: Vec<RegionResponse>,
}

impl LocalityReport {
    pub fn region(&self, name: &str) -> Option<&RegionResponse> {
        self.regions.iter().find(|r| r.region == name)
    }

    pub fn to_markdown(&self) -> String {
        let d = &SCHEMA[self.parameter as usize - 1];
        let mut out = format!(
            "Edit: {}. {} {:+.2} {}\n\n| Region | Facets | Mean abs det change | Masked out |\n|---|---:|---:|:---:|\n",
            d.id,
            d.name,
            self.delta,
            unit_label(d.kind)
        );
        for r in &self.regions {
            let _ = writeln!(
                out,
                "| {}{} | {} | {:.3e} | {} |",
                r.region,
                if r.blend { " (seam)" } else { "" },
                r.facets,
                r.mean_abs_det_change,
                if r.masked_out { "yes" } else { "" }
            );
        }
        out
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("region,facets,mean_abs_det_change,masked_out,blend\n");
        for r in &self.regions {
            let _ = writeln!(
                out,
                "{},{},{},{},{}",
                r.region, r.facets, r.mean_abs_det_change, r.masked_out, r.blend
            );
        }
        out
    }
}

/// Per-region response of det(Q′) to editing parameter `id` away from the
/// training mean.
pub fn locality_report<M: DeformationPredictor>(
    model: &M,
    regions: &[RegionFacets],
    id: u8,
    amount: EditAmount,
) -> Result<LocalityReport> {
    let base = ParameterVector::complete(model.stats().mean);
    let edited = edited_mean(model.stats(), id, amount)?;
    let j = id as usize - 1;
    let before = model.predict_deformations(&base)?.determinants();
    let after = model.predict_deformations(&edited)?.determinants();
    let faces = before.len();
    let regions = regions
        .iter()
        .map(|r| {
            if let Some(&f) = r.facets.iter().find(|&&f| f >= faces) {
                return Err(Error::InvalidParameter(format!(
                    "region {} lists facet {f} of a {faces}-facet model",
                    r.name
                )));
            }
            let total: f64 = r.facets.iter().map(|&f| (after[f] - before[f]).abs()).sum();
            Ok(RegionResponse {
                region: r.name.clone(),
                facets: r.facets.len(),
                mean_abs_det_change: if r.facets.is_empty() { 0.0 } else { total / r.facets.len() as f64 },
                masked_out: r.facets.iter().all(|&f| !model.reads_parameter(f, j)),
                blend: r.blend,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(LocalityReport {
        parameter: id,
        delta: edited.values[j] - base.values[j],
        regions,
    })
}
