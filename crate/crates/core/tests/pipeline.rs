//! Public-API pipeline: generate, write, load, train, persist, reshape and
//! evaluate, plus properties that span modules.

use std::sync::OnceLock;

use nalgebra::{Rotation3, Vector3};
use proptest::prelude::*;

use bodyshape::anthropometry::{measure, ParameterVector, PARAM_COUNT};
use bodyshape::evaluator::reconstruction_mae;
use bodyshape::imputer::{Imputer, ImputerConfig, RANGE_MARGIN};
use bodyshape::mapper::{EditAmount, Mapper};
use bodyshape::mesh::{deformation_gradients, reconstruct_vertices, AnchorConstraint, TriangleMesh};
use bodyshape::selector::{train_model, MappingModel, TrainOptions};
use bodyshape::synth::{generate, load_dataset, write_dataset, GeneratorConfig, LoadedDataset};

struct Fixture {
    _dir: tempfile::TempDir,
    loaded: LoadedDataset,
    mapper: Mapper,
}

fn fixture() -> &'static Fixture {
    static F: OnceLock<Fixture> = OnceLock::new();
    F.get_or_init(|| {
        let config = GeneratorConfig::with_n_seed(40, 3);
        let data = generate(&config).unwrap();
        let dir = tempfile::tempdir().unwrap();
        write_dataset(dir.path(), &data, &config).unwrap();
        let loaded = load_dataset(dir.path()).unwrap();
        let model = train_model(&loaded.meshes, &loaded.spec, 4, TrainOptions { seed: 3 }).unwrap();
        let path = dir.path().join("model.mfm");
        model.save(&path).unwrap();
        let model = MappingModel::load(&path).unwrap();
        let mapper = Mapper::from_model(model).unwrap();
        Fixture {
            _dir: dir,
            loaded,
            mapper,
        }
    })
}

#[test]
fn written_datasets_load_back() {
    let f = fixture();
    assert_eq!(f.loaded.meshes.len(), 40);
    assert!(f.loaded.dependencies.is_some());
    let params = f.loaded.parameters.as_ref().unwrap();
    assert_eq!(params.len(), 40);
    // the CSV matches what the loaded meshes measure
    let p = measure(&f.loaded.meshes[7], &f.loaded.spec).unwrap();
    for j in 0..PARAM_COUNT {
        let rel = (p.values[j] - params.row(7)[j]).abs() / params.row(7)[j];
        assert!(rel < 1e-6, "column {j}: {} vs {}", p.values[j], params.row(7)[j]);
    }
}

#[test]
fn training_bodies_reconstruct_closely() {
    let f = fixture();
    let report = reconstruction_mae(&f.mapper, &f.loaded.meshes[..10], "local", "train").unwrap();
    assert_eq!(report.rows.len(), 19);
    assert!(report.rows.iter().all(|r| r.mae >= 0.0));
    assert!(report.length_average < 10.0, "{}", report.to_markdown());
}

#[test]
fn partial_input_reshapes_to_a_full_body() {
    let f = fixture();
    let mut partial = ParameterVector::empty();
    partial.set(1, 1720.0);
    partial.set(0, 68.0);
    let imputer = Imputer::new(f.mapper.training_parameters().unwrap(), &ImputerConfig::default()).unwrap();
    let out = f.mapper.reshape_with(&partial, &imputer).unwrap();
    assert_eq!(out.imputed.iter().filter(|&&b| b).count(), 17);
    assert_eq!(out.mesh.faces(), f.mapper.model().mean_mesh().faces());
    assert!((out.achieved.values[1] - 1720.0).abs() < 20.0, "{}", out.achieved.values[1]);
    let lowest = out.mesh.vertices().iter().map(|v| v.z).fold(f64::INFINITY, f64::min);
    assert!(lowest.abs() < 1e-9);
}

#[test]
fn zero_edit_is_the_mean_body() {
    let f = fixture();
    let base = f.mapper.reshape_complete(&ParameterVector::complete(f.mapper.model().stats().mean)).unwrap();
    let edited = f.mapper.edit_from_mean(4, EditAmount::StdMultiple(0.0)).unwrap();
    assert_eq!(base.mesh, edited.mesh);
}

fn rigid(mesh: &TriangleMesh, axis: [f64; 3], shift: [f64; 3]) -> TriangleMesh {
    let r = Rotation3::from_scaled_axis(Vector3::from(axis));
    let t = Vector3::from(shift);
    mesh.map_vertices(|v| r * v + t).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn rigid_motion_of_the_target_round_trips(
        a in 0usize..40,
        axis in prop::array::uniform3(-3.0f64..3.0),
        shift in prop::array::uniform3(-500.0f64..500.0),
    ) {
        let meshes = &fixture().loaded.meshes;
        let reference = &meshes[a];
        let target = rigid(&meshes[(a + 1) % meshes.len()], axis, shift);
        let q = deformation_gradients(reference, &target).unwrap();
        let anchor = AnchorConstraint { vertex: 5, position: target.vertices()[5] };
        let rebuilt = reconstruct_vertices(reference, &q, anchor).unwrap();
        let worst = rebuilt
            .vertices()
            .iter()
            .zip(target.vertices())
            .map(|(p, q)| (p - q).norm())
            .fold(0.0, f64::max);
        prop_assert!(worst <= 1e-6 * target.bbox_diagonal(), "{worst}");
    }

    #[test]
    fn mae_reports_ignore_evaluation_order(order in Just((0usize..6).collect::<Vec<_>>()).prop_shuffle()) {
        let f = fixture();
        let meshes: Vec<TriangleMesh> = (0..6).map(|i| f.loaded.meshes[i].clone()).collect();
        let shuffled: Vec<TriangleMesh> = order.iter().map(|&i| meshes[i].clone()).collect();
        let a = reconstruction_mae(&f.mapper, &meshes, "m", "s").unwrap();
        let b = reconstruction_mae(&f.mapper, &shuffled, "m", "s").unwrap();
        prop_assert_eq!(a, b);
    }

    #[test]
    fn imputation_keeps_given_values_and_stays_in_range(
        present in prop::collection::btree_set(0usize..PARAM_COUNT, 1..PARAM_COUNT),
        row in 0usize..40,
        seed in any::<u64>(),
    ) {
        let data = fixture().mapper.training_parameters().unwrap();
        let stats = data.stats();
        let mut partial = ParameterVector::empty();
        for &j in &present {
            partial.set(j, data.row(row)[j]);
        }
        let config = ImputerConfig { seed, ..ImputerConfig::default() };
        let out = Imputer::new(data, &config).unwrap().impute(&partial).unwrap();
        for j in 0..PARAM_COUNT {
            if present.contains(&j) {
                prop_assert!(!out.imputed[j]);
                prop_assert_eq!(out.values.values[j].to_bits(), data.row(row)[j].to_bits());
            } else {
                prop_assert!(out.imputed[j]);
                let margin = RANGE_MARGIN * (stats.max[j] - stats.min[j]);
                let v = out.values.values[j];
                prop_assert!(v >= stats.min[j] - margin - 1e-9 && v <= stats.max[j] + margin + 1e-9);
            }
        }
    }
}
