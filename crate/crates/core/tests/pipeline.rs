use proptest::prelude::*;

use qmrf_core::harness::experiment::{quantum_recover_graph, sample_model};
use qmrf_core::harness::generate_model;
use qmrf_core::learn::{recover_graph, LearnParams};
use qmrf_core::qsim::qlearn::QuantumLearnParams;
use qmrf_core::qsim::qsparsitron::NoiseMode;
use qmrf_core::sampler::SampleSet;
use qmrf_core::MrfModel;

fn scratch(name: &str) -> std::path::PathBuf {
    let dir = std::env::temp_dir().join(format!("qmrf-core-{name}-{}", std::process::id()));
    std::fs::create_dir_all(&dir).unwrap();
    dir
}

#[test]
fn model_and_samples_survive_files() {
    let dir = scratch("files");
    let model = generate_model(9, 3, 3, 0.4, 2.0, 21).unwrap();
    model.save(dir.join("m.json")).unwrap();
    let back = MrfModel::load(dir.join("m.json")).unwrap();
    assert_eq!(back, model);

    let samples = sample_model(&model, 500, 4).unwrap();
    samples.save(dir.join("s.bin")).unwrap();
    assert_eq!(SampleSet::load(dir.join("s.bin")).unwrap().rows(), samples.rows());
    let mut csv = Vec::new();
    samples.write_csv(&mut csv).unwrap();
    assert_eq!(SampleSet::read_csv(&csv[..]).unwrap().rows(), samples.rows());
    std::fs::remove_dir_all(dir).ok();
}

#[test]
fn classical_and_quantum_recover_a_planted_graph() {
    let model = generate_model(8, 3, 3, 0.4, 2.0, 5).unwrap();
    let samples = sample_model(&model, 6000, 6).unwrap();
    let classical = recover_graph(
        &samples,
        &LearnParams {
            r: 3,
            eta: 0.4,
            lambda: 2.0,
            t: 4000,
            m: 2000,
        },
    )
    .unwrap();
    assert_eq!(classical.edges, model.edges());

    for noise in [NoiseMode::Zero, NoiseMode::Uniform, NoiseMode::Adversarial] {
        let params = QuantumLearnParams {
            r: 3,
            eta: 0.4,
            lambda: 2.0,
            d: 3,
            rho: 0.1,
            t: 4000,
            m: 2000,
            noise,
            epsilon_factor: 0.5,
            seed: 9,
        };
        let (est, ledger) = quantum_recover_graph(&samples, &params).unwrap();
        assert_eq!(est.edges, model.edges(), "{noise:?}");
        assert!(ledger.totals().grover_iterations > 0);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn generated_models_meet_their_bounds(
        n in 2usize..20,
        r in 2usize..5,
        d in 0usize..5,
        eta in 0.1f64..1.0,
        seed in any::<u64>(),
    ) {
        let lambda = 2.0;
        let model = generate_model(n, r, d, eta, lambda, seed).unwrap();
        prop_assert!(model.check_identifiable().is_valid());
        prop_assert!(model.max_degree() <= d);
        prop_assert!(model.max_derivative_norm() <= lambda);
        prop_assert!(model.poly.terms().keys().all(|m| m.len() >= 2 && m.len() <= r.min(d + 1)));
    }
}
