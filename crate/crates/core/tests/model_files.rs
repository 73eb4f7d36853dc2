use std::path::PathBuf;

use fluidsens::model::ModelFile;
use fluidsens::scenarios::simple;
use fluidsens::stationary::StationaryBundle;

fn models_dir() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../models")
}

fn load(name: &str) -> ModelFile {
    let text = std::fs::read_to_string(models_dir().join(name)).unwrap();
    ModelFile::parse(&text).unwrap()
}

#[test]
fn simple_file_matches_builtin_family() {
    let from_file = StationaryBundle::compute(&load("simple.toml").param_model().unwrap()).unwrap();
    let builtin = StationaryBundle::compute(&simple::param_model(1.0, 0.5).unwrap()).unwrap();
    let (a, b) = (from_file.p_minus(), builtin.p_minus());
    assert!((&a.v - &b.v).norm() < 1e-14);
    for k in 0..2 {
        assert!((a.d.block(k) - b.d.block(k)).norm() < 1e-12);
    }
    for x in [0.5, 2.0] {
        let (fa, fb) = (from_file.density(x).unwrap().total(), builtin.density(x).unwrap().total());
        assert!((&fa.v - &fb.v).norm() < 1e-14);
    }
}

#[test]
fn shipped_models_parse() {
    let mut seen = 0;
    for entry in std::fs::read_dir(models_dir()).unwrap() {
        let path = entry.unwrap().path();
        if path.extension().is_some_and(|e| e == "toml") {
            let file = load(path.file_name().unwrap().to_str().unwrap());
            file.param_model().unwrap().self_test(1e-6).unwrap();
            seen += 1;
        }
    }
    assert!(seen >= 3);
}

#[test]
fn round_trip_preserves_the_model() {
    let file = load("three_phase.toml");
    let again = ModelFile::parse(&file.to_toml()).unwrap();
    assert_eq!(file, again);
    let pm = again.param_model().unwrap();
    let st = StationaryBundle::compute(&pm).unwrap();
    let mass = st.boundary().total().v[(0, 0)].re + st.density_mass().unwrap().v[(0, 0)].re;
    assert!((mass - 1.0).abs() < 1e-10, "{mass}");
}

#[test]
fn unstable_file_is_rejected_by_stationary() {
    let pm = load("unstable.toml").param_model().unwrap();
    assert!(StationaryBundle::compute(&pm).is_err());
}
