//! Deterministic synthetic body datasets with known parameter-to-region
//! dependencies.

mod sampling;
mod template;

use std::path::Path;
use std::sync::Arc;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::anthropometry::{
    extract_dataset, MeasureMode, MeasurementSpec, ParameterMatrix, ParameterSpec, SCHEMA,
};
use crate::error::{Error, Result};
use crate::mesh::{load_mesh, save_mesh, TriangleMesh};

pub use sampling::{Latent, SampledParameter, SamplingModel, DERIVED_IDS, SAMPLED_IDS};
pub use template::{
    BodyDimensions, BodyParameters, Template, TemplateResolution, SEAM_REGION, REGION_DEPENDENCIES,
    REGION_NAMES,
};
use template::{arm_station, station};

pub const DEFAULT_BODY_COUNT: usize = 300;
const MAX_DRAWS_PER_BODY: usize = 1000;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GeneratorConfig {
    pub n: usize,
    pub seed: u64,
    pub resolution: TemplateResolution,
    pub sampling: SamplingModel,
}

impl Default for GeneratorConfig {
    fn default() -> Self {
        GeneratorConfig {
            n: DEFAULT_BODY_COUNT,
            seed: 0,
            resolution: TemplateResolution::default(),
            sampling: SamplingModel::default(),
        }
    }
}

impl GeneratorConfig {
    pub fn with_n_seed(n: usize, seed: u64) -> Self {
        GeneratorConfig {
            n,
            seed,
            ..Self::default()
        }
    }
}

/// One facet group and the parameters its shape depends on.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegionTruth {
    pub id: u8,
    pub name: String,
    pub parameters: Vec<u8>,
    /// Seam facets that mix two groups; dependency tests skip them.
    pub blend: bool,
    pub facets: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DependencyTruth {
    pub regions: Vec<RegionTruth>,
    /// Region id of each facet.
    pub facet_regions: Vec<u8>,
}

impl DependencyTruth {
    fn of(template: &Template) -> Self {
        let facet_regions = template.face_regions().to_vec();
        let regions = REGION_NAMES
            .iter()
            .enumerate()
            .map(|(r, name)| RegionTruth {
                id: r as u8,
                name: (*name).into(),
                parameters: REGION_DEPENDENCIES[r].to_vec(),
                blend: r == SEAM_REGION,
                facets: facet_regions.iter().filter(|&&x| x as usize == r).count(),
            })
            .collect();
        DependencyTruth {
            regions,
            facet_regions,
        }
    }

    pub fn region(&self, name: &str) -> Option<&RegionTruth> {
        self.regions.iter().find(|r| r.name == name)
    }

    /// Facet indices belonging to region `id`.
    pub fn facets_of(&self, id: u8) -> Vec<usize> {
        (0..self.facet_regions.len()).filter(|&f| self.facet_regions[f] == id).collect()
    }
}

/// Template topology plus the measurement spec bound to it.
#[derive(Debug, Clone)]
pub struct BodyGenerator {
    template: Template,
    spec: MeasurementSpec,
    reference: TriangleMesh,
}

impl BodyGenerator {
    /// `reference` parameters (normally the sampling means) define the
    /// template mesh the spec is bound to.
    pub fn new(resolution: TemplateResolution, reference: &BodyParameters) -> Result<Self> {
        let dims = BodyDimensions::from_parameters(reference)?;
        let template = Template::new(resolution, &dims)?;
        let reference = template.build(&dims)?;
        let spec = MeasurementSpec::new(&reference, measurement_records(&template))?;
        Ok(BodyGenerator {
            template,
            spec,
            reference,
        })
    }

    pub fn template(&self) -> &Template {
        &self.template
    }

    pub fn spec(&self) -> &MeasurementSpec {
        &self.spec
    }

    /// The body built from the reference parameters.
    pub fn reference_mesh(&self) -> &TriangleMesh {
        &self.reference
    }

    pub fn body(&self, p: &BodyParameters) -> Result<TriangleMesh> {
        self.template.build(&BodyDimensions::from_parameters(p)?)
    }

    pub fn dependencies(&self) -> DependencyTruth {
        DependencyTruth::of(&self.template)
    }
}

fn measurement_records(t: &Template) -> Vec<ParameterSpec> {
    let ring = |s| t.column_station_ring(s);
    let first = |s| ring(s)[0];
    let half = t.ring_vertices() / 2;
    let arm_top = t.arm_top_slot();
    let mut back_half: Vec<u32> = ring(station::SHOULDER)[half..].to_vec();
    back_half.push(ring(station::SHOULDER)[0]);
    let arm_loop = |s| t.arm_station_ring(0, s).to_vec();

    SCHEMA
        .iter()
        .map(|d| {
            let (mode, points) = match d.id {
                1 => (MeasureMode::VolumeWeight, vec![]),
                2 => (MeasureMode::AxisExtent, vec![t.bottom_pole(), t.top_pole()]),
                3 => (MeasureMode::CircumferenceLoop, ring(station::NECK)),
                4 => (MeasureMode::CircumferenceLoop, ring(station::CHEST)),
                5 => (MeasureMode::CircumferenceLoop, ring(station::BELLY)),
                6 => (MeasureMode::CircumferenceLoop, ring(station::GLUTEAL)),
                7 => (
                    MeasureMode::Polyline,
                    vec![
                        first(station::NECK_BASE),
                        t.arm_station_ring(0, arm_station::ROOT)[arm_top],
                        t.arm_station_ring(0, arm_station::ELBOW)[arm_top],
                        t.arm_station_ring(0, arm_station::WRIST)[arm_top],
                    ],
                ),
                8 => (MeasureMode::AxisExtent, vec![first(station::CROTCH), t.bottom_pole()]),
                9 => (MeasureMode::Polyline, back_half.clone()),
                10 => (
                    MeasureMode::AxisExtent,
                    vec![first(station::GLUTEAL), first(station::NECK_BASE)],
                ),
                11 => (MeasureMode::CircumferenceLoop, ring(station::WAIST)),
                12 => (MeasureMode::CircumferenceLoop, ring(station::CROTCH)),
                13 => (
                    MeasureMode::AxisExtent,
                    vec![first(station::CROTCH), first(station::WAIST)],
                ),
                14 => (
                    MeasureMode::Polyline,
                    t.arm_top_line(0, arm_station::ROOT, arm_station::MIDHAND),
                ),
                15 => (MeasureMode::CircumferenceLoop, arm_loop(arm_station::UPPER_ARM)),
                16 => (MeasureMode::CircumferenceLoop, arm_loop(arm_station::WRIST)),
                17 => (MeasureMode::AxisExtent, vec![first(station::WAIST), first(station::FOOT)]),
                18 => (MeasureMode::CircumferenceLoop, ring(station::KNEE)),
                19 => (MeasureMode::CircumferenceLoop, ring(station::THIGH)),
                _ => unreachable!("schema has 19 entries"),
            };
            ParameterSpec {
                id: d.id,
                name: d.name.into(),
                closed: mode == MeasureMode::CircumferenceLoop,
                mode,
                points,
                density_kg_m3: None,
            }
        })
        .collect()
}

#[derive(Debug, Clone)]
pub struct SyntheticDataset {
    pub generator: BodyGenerator,
    pub meshes: Vec<TriangleMesh>,
    /// Drawn body parameters (measured-only slots 0).
    pub sampled: Vec<BodyParameters>,
    /// Ground truth: every body measured with the generator's spec.
    pub parameters: ParameterMatrix,
    pub dependencies: DependencyTruth,
}

impl SyntheticDataset {
    pub fn spec(&self) -> &MeasurementSpec {
        self.generator.spec()
    }
}

/// Samples `config.n` bodies (redrawing implausible proportions), builds
/// their meshes in parallel and measures them.
pub fn generate(config: &GeneratorConfig) -> Result<SyntheticDataset> {
    config.sampling.validate()?;
    let factor = config.sampling.correlation_factor()?;
    let generator = BodyGenerator::new(config.resolution.clone(), &config.sampling.mean_body())?;

    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut sampled = Vec::with_capacity(config.n);
    for body in 0..config.n {
        let mut draws = 0;
        loop {
            let p = config.sampling.draw(&factor, &mut rng);
            if BodyDimensions::from_parameters(&p).is_ok() {
                sampled.push(p);
                break;
            }
            draws += 1;
            if draws >= MAX_DRAWS_PER_BODY {
                return Err(Error::InvalidConfig(format!(
                    "body {body}: no plausible proportions after {MAX_DRAWS_PER_BODY} draws"
                )));
            }
        }
    }
    let meshes = sampled
        .par_iter()
        .map(|p| generator.body(p))
        .collect::<Result<Vec<_>>>()?;
    let parameters = extract_dataset(&meshes, generator.spec())?;
    let dependencies = generator.dependencies();
    Ok(SyntheticDataset {
        generator,
        meshes,
        sampled,
        parameters,
        dependencies,
    })
}

pub const PARAMETERS_FILE: &str = "parameters.csv";
pub const SPEC_FILE: &str = "spec.json";
pub const DEPENDENCIES_FILE: &str = "dependencies.json";
pub const CONFIG_FILE: &str = "config.json";
pub const TEMPLATE_FILE: &str = "template.obj";

fn body_file(i: usize) -> String {
    format!("body_{i:04}.obj")
}

/// Writes one OBJ per body plus the template, the measured parameters
/// (CSV), the planted dependencies, the measurement spec and the config.
pub fn write_dataset(dir: impl AsRef<Path>, data: &SyntheticDataset, config: &GeneratorConfig) -> Result<()> {
    let dir = dir.as_ref();
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    data.meshes
        .par_iter()
        .enumerate()
        .try_for_each(|(i, m)| save_mesh(m, dir.join(body_file(i))))?;
    save_mesh(data.generator.reference_mesh(), dir.join(TEMPLATE_FILE))?;
    let write = |name: &str, text: String| {
        let path = dir.join(name);
        std::fs::write(&path, text).map_err(|e| Error::io(path, e))
    };
    write(PARAMETERS_FILE, data.parameters.to_csv())?;
    write(DEPENDENCIES_FILE, serde_json::to_string_pretty(&data.dependencies)?)?;
    write(CONFIG_FILE, serde_json::to_string_pretty(config)?)?;
    data.spec().save(dir.join(SPEC_FILE))
}

/// A dataset directory as written by [`write_dataset`] (or any directory of
/// `body_NNNN.obj` files with a `spec.json`).
#[derive(Debug, Clone)]
pub struct LoadedDataset {
    pub meshes: Vec<TriangleMesh>,
    pub spec: MeasurementSpec,
    /// Present when the directory has a parameters CSV.
    pub parameters: Option<ParameterMatrix>,
    /// Present for generated datasets.
    pub dependencies: Option<DependencyTruth>,
}

pub fn load_dataset(dir: impl AsRef<Path>) -> Result<LoadedDataset> {
    let dir = dir.as_ref();
    let spec = MeasurementSpec::load(dir.join(SPEC_FILE))?;
    let mut names: Vec<String> = std::fs::read_dir(dir)
        .map_err(|e| Error::io(dir, e))?
        .filter_map(|e| e.ok())
        .filter_map(|e| e.file_name().into_string().ok())
        .filter(|n| n.starts_with("body_") && n.ends_with(".obj"))
        .collect();
    names.sort();
    if names.is_empty() {
        return Err(Error::InsufficientData(format!(
            "no body_*.obj files in {}",
            dir.display()
        )));
    }
    let loaded = names
        .par_iter()
        .map(|n| load_mesh(dir.join(n)))
        .collect::<Result<Vec<_>>>()?;
    // Share one face array across bodies.
    let faces = Arc::clone(loaded[0].shared_faces());
    let meshes = loaded
        .into_iter()
        .enumerate()
        .map(|(i, m)| {
            if m.faces() != faces.as_slice() {
                return Err(Error::TopologyMismatch(format!("{} differs from {}", names[i], names[0])));
            }
            TriangleMesh::with_shared_faces(m.into_vertices(), Arc::clone(&faces))
        })
        .collect::<Result<Vec<_>>>()?;
    let csv = dir.join(PARAMETERS_FILE);
    let parameters = if csv.exists() {
        let text = std::fs::read_to_string(&csv).map_err(|e| Error::io(&csv, e))?;
        Some(ParameterMatrix::from_csv(&text)?)
    } else {
        None
    };
    let deps = dir.join(DEPENDENCIES_FILE);
    let dependencies = if deps.exists() {
        let text = std::fs::read_to_string(&deps).map_err(|e| Error::io(&deps, e))?;
        Some(serde_json::from_str(&text)?)
    } else {
        None
    };
    Ok(LoadedDataset {
        meshes,
        spec,
        parameters,
        dependencies,
    })
}
