use chrono::{TimeZone, Utc};
use evcast::autodiff::{grad_check, ParamSet, Tape, Tensor};
use evcast::data::{make_windows, HourlySeries};
use evcast::layers::{CorruptionConfig, Dense, LstmCell, Mode};
use evcast::models::{
    Batch, FeatureTable, Hyperparams, Model, ModelKind, TimeScale, FEATURE_DIM, HORIZONS,
};
use evcast::Error;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn toy_hp(lookback: usize, horizon: usize) -> Hyperparams {
    Hyperparams {
        num_layers: 1,
        num_heads: 2,
        model_dim: 4,
        hidden_dim: 3,
        latent_dim: 2,
        lookback,
        horizon,
        ..Default::default()
    }
}

fn toy_table(lookback: usize, horizon: usize, hours: usize) -> FeatureTable {
    let start = Utc.with_ymd_and_hms(2024, 1, 1, 0, 0, 0).unwrap();
    let values = (0..hours).map(|h| 0.5 + 0.4 * (h as f64 * 0.7).sin()).collect();
    let ds = make_windows(HourlySeries::new(start, values).unwrap(), lookback, horizon).unwrap();
    FeatureTable::new(&ds, &TimeScale::for_dataset(&ds).unwrap())
}

fn zero_all(model: &mut Model) {
    let ids: Vec<_> = model.params().ids().collect();
    for id in ids {
        let shape = model.params().get(id).shape().to_vec();
        model.params_mut().set(id, Tensor::zeros(&shape)).unwrap();
    }
}

#[test]
fn every_kind_emits_horizon_forecasts() {
    for &h in &HORIZONS {
        let table = toy_table(6, h, 6 + h + 3);
        let batch = table.batch(&[0, 2, 3]);
        for kind in ModelKind::ALL {
            let model = Model::new(kind, toy_hp(6, h)).unwrap();
            let y = model.predict(&batch).unwrap();
            assert_eq!(y.shape(), &[3, h], "{kind} h={h}");
        }
    }
}

#[test]
fn eval_mode_is_deterministic() {
    let table = toy_table(8, 4, 20);
    let batch = table.batch(&[1, 5]);
    for kind in ModelKind::ALL {
        let model = Model::new(kind, toy_hp(8, 4)).unwrap();
        let a = model.predict(&batch).unwrap();
        let b = model.predict(&batch).unwrap();
        assert!(a.bit_eq(&b), "{kind}");
    }
}

#[test]
fn train_mode_corrupts_bdt_embeddings() {
    let table = toy_table(8, 4, 20);
    let batch = table.batch(&[1, 5]);
    let hp = Hyperparams {
        corruption: CorruptionConfig::zero_mask(0.5),
        ..toy_hp(8, 4)
    };
    let model = Model::new(ModelKind::Bdt, hp).unwrap();
    let run = |mode| {
        let tape = Tape::new();
        let p = model.params().bind(&tape);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        tape.value(model.forward(&tape, &p, &batch, mode, &mut rng).unwrap())
    };
    assert!(!run(Mode::Train).bit_eq(&run(Mode::Eval)));
}

#[test]
fn every_bdt_parameter_gets_a_gradient() {
    let table = toy_table(8, 4, 24);
    let batch = table.batch(&[0, 3, 7, 9]);
    let model = Model::new(ModelKind::Bdt, toy_hp(8, 4)).unwrap();
    let tape = Tape::new();
    let p = model.params().bind(&tape);
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let y = model.forward(&tape, &p, &batch, Mode::Eval, &mut rng).unwrap();
    let target = tape.constant(batch.targets.clone().unwrap());
    let grads = tape.backward(tape.mse(y, target).unwrap()).unwrap();
    for (id, name, _) in model.params().iter() {
        let g = grads.get(id).unwrap();
        assert!(g.data().iter().any(|&v| v != 0.0), "{name} has zero gradient");
    }
}

#[test]
fn bdt_end_to_end_gradients_with_identity_autoencoder() {
    let hp = Hyperparams {
        num_heads: 1,
        model_dim: 4,
        hidden_dim: 2,
        ..toy_hp(8, 3)
    };
    let model = Model::bdt_with_identity_dae(hp).unwrap();
    let table = toy_table(8, 3, 14);
    let batch = table.batch(&[0, 3]);
    let target = batch.targets.clone().unwrap();
    let f = |tape: &Tape, p: &evcast::autodiff::Bound| {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let y = model.forward(tape, p, &batch, Mode::Train, &mut rng)?;
        tape.mse(y, tape.constant(target.clone()))
    };
    let report = grad_check(f, model.params(), 1e-6, 1e-3).unwrap();
    assert!(report.passed(), "max rel err {}", report.max_rel_error());
}

#[test]
fn zero_lstm_benchmark_has_zero_pre_head() {
    let table = toy_table(6, 2, 12);
    let batch = table.batch(&[0, 1]);
    let mut model = Model::new(ModelKind::Lstm, toy_hp(6, 2)).unwrap();
    zero_all(&mut model);
    let tape = Tape::new();
    let p = model.params().bind(&tape);
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let h = tape.value(model.pre_head(&tape, &p, &batch, Mode::Eval, &mut rng).unwrap());
    assert!(h.data().iter().all(|&v| v == 0.0));
}

#[test]
fn zero_gru_hidden_state_stays_zero() {
    // z = r = σ(0) = 0.5, n = tanh(0) = 0, h' = n + z·(h − n) = 0.5·h, so h stays 0.
    let table = toy_table(6, 2, 12);
    let batch = table.batch(&[0, 4]);
    let mut model = Model::new(ModelKind::Gru, toy_hp(6, 2)).unwrap();
    zero_all(&mut model);
    let tape = Tape::new();
    let p = model.params().bind(&tape);
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let h = tape.value(model.pre_head(&tape, &p, &batch, Mode::Eval, &mut rng).unwrap());
    assert_eq!(h.shape(), &[2, 4]);
    assert!(h.data().iter().all(|&v| v == 0.0));
}

#[test]
fn cnn_keeps_sequence_length() {
    let table = toy_table(7, 2, 12);
    let batch = table.batch(&[0, 1, 2]);
    let model = Model::new(ModelKind::Cnn, toy_hp(7, 2)).unwrap();
    let tape = Tape::new();
    let p = model.params().bind(&tape);
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let h = model.pre_head(&tape, &p, &batch, Mode::Eval, &mut rng).unwrap();
    // Seven positions of four channels each per window.
    assert_eq!(tape.shape(h), vec![3, 7 * 4]);
}

#[test]
fn parameter_counts() {
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let mut ps = ParamSet::new();
    Dense::new(&mut ps, "d", 2, 3, &mut rng);
    assert_eq!(ps.element_count(), 9);
    let mut ps = ParamSet::new();
    LstmCell::new(&mut ps, "c", 1, 1, &mut rng);
    assert_eq!(ps.element_count(), 12);

    // Independent recount of every BDT component.
    let hp = Hyperparams {
        num_layers: 2,
        num_heads: 2,
        model_dim: 8,
        hidden_dim: 5,
        latent_dim: 3,
        lookback: 6,
        horizon: 4,
        ..Default::default()
    };
    let (f, h, d, lat, l, hz) = (FEATURE_DIM, 5, 8, 3, 6, 4);
    let lstm = 4 * (f * h + h * h + h);
    let bilstm = 2 * lstm + 2 * h * d + d;
    let dae = d * lat + lat + lat * d + d;
    let block = 4 * d * d + (d * 4 * d + 4 * d) + (4 * d * d + d) + 4 * d;
    let head = l * d * hz + hz;
    let model = Model::new(ModelKind::Bdt, hp).unwrap();
    assert_eq!(model.parameter_count(), bilstm + dae + 2 * block + head);
}

#[test]
fn wrong_lookback_names_the_stage() {
    let table = toy_table(5, 2, 12);
    let batch = table.batch(&[0]);
    let model = Model::new(ModelKind::Bdt, toy_hp(6, 2)).unwrap();
    match model.predict(&batch) {
        Err(Error::Dimension { op, .. }) => assert_eq!(op, "model_input"),
        other => panic!("expected dimension error, got {other:?}"),
    }
}

#[test]
fn single_embedding_batches() {
    let table = toy_table(6, 2, 12);
    let batch = table.batch(&[3]);
    let rows: Vec<Vec<f64>> = batch.steps.iter().map(|s| s.row(0).to_vec()).collect();
    let single = Batch::from_embedding(&Tensor::from_rows(&rows).unwrap()).unwrap();
    let model = Model::new(ModelKind::Bdt, toy_hp(6, 2)).unwrap();
    assert!(model.predict(&batch).unwrap().bit_eq(&model.predict(&single).unwrap()));
}
