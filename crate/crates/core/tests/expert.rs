use socialturn::expert::{
    ga_optimize, ga_optimize_from, learn_library, FeatureSet, GaConfig, LearnConfig, LearnError,
};
use socialturn::game::{Coefficients, GameConfig};
use socialturn::orientation::TendencyCategory;
use socialturn::synth::{generate, SynthConfig};

fn events() -> Vec<socialturn::events::LabeledEvent> {
    generate(&SynthConfig { per_category: 6, seed: 5, ..SynthConfig::default() })
}

fn quick() -> GaConfig {
    GaConfig { population: 16, generations: 15, patience: 15, delta: 0.0, ..GaConfig::default() }
}

#[test]
fn same_seed_same_result() {
    let f = FeatureSet::new(&events(), &GameConfig::default(), 1.0).unwrap();
    let a = ga_optimize(&f, &quick()).unwrap();
    let b = ga_optimize(&f, &quick()).unwrap();
    assert_eq!(a, b);
    let c = ga_optimize(&f, &GaConfig { seed: 9, ..quick() }).unwrap();
    assert_ne!(a.coefficients, c.coefficients);
}

#[test]
fn trace_never_rises_and_loss_is_bounded() {
    let f = FeatureSet::new(&events(), &GameConfig::default(), 1.0).unwrap();
    let out = ga_optimize(&f, &quick()).unwrap();
    assert_eq!(out.trace.len(), out.generations + 1);
    assert!(out.trace.windows(2).all(|w| w[1] <= w[0]));
    assert!(out.trace.iter().all(|l| (0.0..=2.0).contains(l)));
    assert_eq!(*out.trace.last().unwrap(), out.loss);
    assert!((f.loss(&out.coefficients) - out.loss).abs() < 1e-12);
}

#[test]
fn frozen_population_keeps_a_flat_trace() {
    let f = FeatureSet::new(&events(), &GameConfig::default(), 1.0).unwrap();
    let cfg = GaConfig { mutation_rate: 0.0, patience: 1000, ..quick() };
    let genome = Coefficients::default().to_vec();
    let out = ga_optimize_from(&f, &cfg, vec![genome; cfg.population]).unwrap();
    assert_eq!(out.generations, cfg.generations);
    assert!(out.trace.iter().all(|&l| l == out.trace[0]));
    assert_eq!(out.coefficients, Coefficients::default());
}

#[test]
fn single_tendency_data_gives_a_single_entry() {
    let only: Vec<_> = events().into_iter().filter(|e| e.category == TendencyCategory::Yielding).collect();
    assert!(!only.is_empty());
    let cfg = LearnConfig { ga: quick(), skip_global: true, ..LearnConfig::default() };
    let lib = learn_library(&only, &cfg, 1.0).unwrap();
    assert_eq!(lib.experts.keys().copied().collect::<Vec<_>>(), [TendencyCategory::Yielding]);
    assert!(lib.global.is_none());
    let hit = lib.lookup(TendencyCategory::Yielding);
    assert!(!hit.fallback);
    let miss = lib.lookup(TendencyCategory::Precedence);
    assert!(miss.fallback && miss.source.is_none());
    assert_eq!(miss.coefficients, Coefficients::default());
    assert_eq!(lib.global_coefficients(), Coefficients::default());
}

#[test]
fn empty_data_is_rejected() {
    assert!(matches!(learn_library(&[], &LearnConfig::default(), 1.0), Err(LearnError::EmptyDataset)));
}

#[test]
fn library_round_trips_through_disk() {
    let cfg = LearnConfig { ga: quick(), ..LearnConfig::default() };
    let lib = learn_library(&events(), &cfg, 1.0).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("lib.json");
    lib.save(&path).unwrap();
    let back = socialturn::expert::ExpertLibrary::load(&path).unwrap();
    assert_eq!(back, lib);
}

#[test]
fn foreign_versions_and_truncated_files_fail_cleanly() {
    let cfg = LearnConfig { ga: quick(), skip_global: true, ..LearnConfig::default() };
    let lib = learn_library(&events(), &cfg, 1.0).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("lib.json");
    lib.save(&path).unwrap();
    let text = std::fs::read_to_string(&path).unwrap();

    let newer = text.replacen("\"format_version\": 1", "\"format_version\": 2", 1);
    match socialturn::expert::ExpertLibrary::from_json(&newer) {
        Err(LearnError::SchemaVersionMismatch { found: 2, expected: 1 }) => {}
        other => panic!("{other:?}"),
    }

    let cut = &text[..text.len() / 2];
    match socialturn::expert::ExpertLibrary::from_json(cut) {
        Err(LearnError::Parse { offset, .. }) => assert!(offset > 0 && offset <= cut.len()),
        other => panic!("{other:?}"),
    }
}
