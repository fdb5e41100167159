use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::*;
use crate::scenario::ChannelModel;

fn small_config() -> ScenarioConfig {
    ScenarioConfig::homogeneous(2, 3, 2, 2, 1.0, 0.1, ChannelModel::IidRayleigh { variance: 1.0 })
}

fn tiny_training(steps: usize) -> TrainingConfig {
    TrainingConfig {
        network: NetworkSpec::Gcn {
            layers: 2,
            features: 2,
            degree: 1,
            init: GcnInit::Random,
        },
        steps,
        batch_size: 3,
        validation_size: 4,
        validation_interval: 2,
        ..Default::default()
    }
}

fn generator() -> ScenarioSource {
    ScenarioSource::Generator {
        config: small_config(),
        seed: 11,
    }
}

#[test]
fn nominal_normalized_loss_is_minus_one() {
    let batch = generator().batch(0, 4, 0).unwrap();
    let model = ParameterSet::random(2, 2, 1, &mut ChaCha8Rng::seed_from_u64(3));
    let l = loss(&model, &batch, LossLayers::All, MU_SUBSTEPS);
    assert!((l + 1.0).abs() < 1e-12, "{l}");
}

#[test]
fn frozen_loss_gradient_is_scaled_wsr_gradient() {
    // ∂J/∂θ at the nominal point equals −(1/|T|) Σ ∂wsr_n/∂θ / r_n
    let batch = generator().batch(0, 2, 0).unwrap();
    let model = ParameterSet::wmmse_equivalent(2, 1, 1);
    let w = batch_layer_wsr(&model, &batch, MU_SUBSTEPS);
    let r = normalizers(&w);
    let g = fd_gradient(&batch, &model, 1e-4, LossLayers::Last, MU_SUBSTEPS).unwrap();
    let theta = model.to_flat();
    let direct = central_difference(
        |x: &[f64]| {
            let mut m = model.with_flat(x);
            m.project();
            let w = batch_layer_wsr(&m, &batch, MU_SUBSTEPS);
            -(w[0][1] / r[0][1] + w[1][1] / r[1][1]) / 2.0
        },
        &theta,
        1e-4,
    )
    .unwrap();
    assert_eq!(g.grad.len(), theta.len());
    for (a, b) in g.grad.iter().zip(&direct.grad) {
        assert!((a - b).abs() < 1e-9, "{a} vs {b}");
    }
    assert!(g.norm() > 0.0);
}

#[test]
fn normalizers_are_floored() {
    let r = normalizers(&[vec![0.0, -2.0, 3.0]]);
    assert_eq!(r, vec![vec![MIN_NORMALIZER, 2.0, 3.0]]);
    assert_eq!(normalized_loss(&[vec![0.0, 1.0]], &[vec![MIN_NORMALIZER, 1.0]], &[0, 1]), -0.5);
}

#[test]
fn loss_layer_selection() {
    assert_eq!(LossLayers::Last.indices(4), vec![3]);
    assert_eq!(LossLayers::All.indices(3), vec![0, 1, 2]);
}

#[test]
fn bias_scale_of_homogeneous_cells() {
    let batch = generator().batch(0, 2, 0).unwrap();
    assert!((bias_scale_estimate(&batch) - 0.5f64.sqrt()).abs() < 1e-15);
}

#[test]
fn config_round_trips_through_json_with_defaults() {
    let cfg: TrainingConfig = serde_json::from_str(r#"{"steps": 7, "estimator": {"kind": "spsa", "scale": 0.01, "probes": 4}}"#).unwrap();
    assert_eq!(cfg.steps, 7);
    assert_eq!(cfg.batch_size, 10);
    assert_eq!(cfg.estimator, Estimator::Spsa { scale: 0.01, probes: 4 });
    let back: TrainingConfig = serde_json::from_str(&serde_json::to_string(&cfg).unwrap()).unwrap();
    assert_eq!(back, cfg);
    let bad = TrainingConfig {
        batch_size: 0,
        ..Default::default()
    };
    assert!(matches!(bad.validate(), Err(Error::Config(_))));
}

#[test]
fn training_is_deterministic_and_keeps_the_best_model() {
    let cfg = tiny_training(4);
    let init = initial_gcn(&cfg.network, 5).unwrap();
    let a = train(&cfg, &generator(), init.clone()).unwrap();
    let b = train(&cfg, &generator(), init.clone()).unwrap();
    assert_eq!(a.log, b.log);
    assert_eq!(a.model, b.model);
    assert_eq!(a.log.len(), 4);
    assert!(a.diverged_at.is_none());

    let validation = generator().validation(4).unwrap();
    let mut start = init;
    start.b_s = a.log[0].b_s;
    let base = mean_final_wsr(&start, &validation, MU_SUBSTEPS);
    let best = a.best_validation_wsr.unwrap();
    assert!(best >= base, "{best} < {base}");
    assert!((mean_final_wsr(&a.model, &validation, MU_SUBSTEPS) - best).abs() < 1e-12);
}

#[test]
fn zero_steps_return_the_initial_model_with_first_batch_bias() {
    let cfg = tiny_training(0);
    let init = initial_gcn(&cfg.network, 5).unwrap();
    let out = train(&cfg, &generator(), init.clone()).unwrap();
    assert!(out.log.is_empty());
    assert_eq!(out.best_step, 0);
    assert_eq!(out.model.layers, init.layers);
    assert!((out.model.b_s - 0.5f64.sqrt()).abs() < 1e-15);
}

#[test]
fn dataset_batches_are_reproducible() {
    let train_set = generator().batch(0, 5, 0).unwrap();
    let src = ScenarioSource::Dataset {
        train: train_set,
        validation: Vec::new(),
    };
    let a = src.batch(3, 4, 9).unwrap();
    let b = src.batch(3, 4, 9).unwrap();
    assert_eq!(a.len(), 4);
    for (x, y) in a.iter().zip(&b) {
        assert_eq!(x.channels(), y.channels());
    }
    assert!(src.validation(10).unwrap().is_empty());
}

#[test]
fn pgd_training_keeps_steps_positive() {
    let cfg = TrainingConfig {
        network: NetworkSpec::Pgd {
            layers: 2,
            substeps: 2,
            gamma: None,
        },
        estimator: Estimator::Spsa { scale: 1e-3, probes: 2 },
        lr: LrSchedule {
            initial: 10.0,
            ..Default::default()
        },
        ..tiny_training(3)
    };
    let batch = generator().batch(0, 3, 0).unwrap();
    let gamma = suggest_pgd_step(&batch).unwrap();
    assert!(gamma > 0.0);
    let out = train(&cfg, &generator(), PgdParameterSet::constant(2, 2, gamma)).unwrap();
    assert!(out.model.gammas.iter().flatten().all(|&g| g >= MIN_PGD_STEP));
    let mut p = PgdParameterSet::constant(1, 2, -1.0);
    Model::project(&mut p);
    assert_eq!(p.gammas, vec![vec![MIN_PGD_STEP; 2]]);
}
