use gcmt_core::model::{default_dims, Network};
use gcmt_core::numcore::{row_norm, Matrix, ParamId};
use gcmt_core::rng::{rng_for, streams};
use gcmt_core::synthdata::{generate_domain, DomainSpec, Split, SyntheticDataset};
use gcmt_core::trainer::{
    classification_accuracy, dense_labels, draw_batch, evaluate_network, pretrain_source, student_objective, train,
    train_iteration, ObjectiveWeights, PretrainConfig, TeacherTargets, TrainConfig, TrainState,
};
use gcmt_core::Error;

fn small_domain(name: &str, seed: u64, eval: bool) -> SyntheticDataset {
    generate_domain(&DomainSpec {
        identity_count: 30,
        eval,
        ..DomainSpec::desk(name, seed)
    })
    .unwrap()
}

fn pretrained(seed: u64) -> Network {
    let src = small_domain("source", seed, false).all();
    let cfg = PretrainConfig {
        epochs: 5,
        ..PretrainConfig::desk(32, seed)
    };
    pretrain_source(&src.features, &src.identities, &cfg).unwrap().network
}

fn small_config() -> TrainConfig {
    TrainConfig {
        epochs: 2,
        iters_per_epoch: 5,
        batch_identities: 8,
        cluster_count: 30,
        ..TrainConfig::desk()
    }
}

fn ready_state(config: &TrainConfig, nets: &[Network], data: &Matrix) -> TrainState {
    let mut state = TrainState::new(config, nets).unwrap();
    state.relabel(config, data).unwrap();
    state
}

#[test]
fn pretraining_separates_source_identities() {
    let source = generate_domain(&DomainSpec::desk("source", 11)).unwrap();
    let all = source.all();
    let out = pretrain_source(&all.features, &all.identities, &PretrainConfig::desk(32, 3)).unwrap();
    let (labels, _) = dense_labels(&all.identities);
    let acc = classification_accuracy(&out.network, &all.features, &labels).unwrap();
    assert!(acc > 0.95, "training accuracy {acc}");
    let h = &out.loss_history;
    assert!(h.last().unwrap() < h.first().unwrap(), "{h:?}");
}

#[test]
fn zero_epoch_pretraining_is_the_initialization() {
    let src = small_domain("source", 1, false).all();
    let cfg = PretrainConfig {
        epochs: 0,
        ..PretrainConfig::desk(32, 9)
    };
    let out = pretrain_source(&src.features, &src.identities, &cfg).unwrap();
    let init = Network::random(&default_dims(32), 30, &mut rng_for(9, streams::INIT)).unwrap();
    assert_eq!(out.network, init);
    let other = pretrain_source(&src.features, &src.identities, &PretrainConfig { seed: 10, ..cfg }).unwrap();
    assert!(out.network.max_param_diff(&other.network).unwrap() > 0.0);
}

#[test]
fn zero_epochs_returns_checkpoints_and_source_metrics() {
    let net = pretrained(1);
    let target = small_domain("target", 2, true);
    let cfg = TrainConfig {
        epochs: 0,
        ..small_config()
    };
    let out = train(&cfg, std::slice::from_ref(&net), &target).unwrap();
    assert_eq!(out.pairs[0].student, net);
    assert_eq!(out.pairs[0].teacher, net);
    assert_eq!(out.log.records.len(), 1);
    assert_eq!(out.log.records[0].teachers[0], evaluate_network(&net, &target).unwrap());
}

#[test]
fn iteration_without_graph_term_completes() {
    let net = pretrained(2);
    let data = small_domain("target", 3, true).split(Split::Train).features;
    let cfg = TrainConfig {
        lambda_gcc: 0.0,
        ..small_config()
    };
    let mut state = ready_state(&cfg, &[net], &data);
    let r = train_iteration(&mut state, &cfg, &data).unwrap();
    assert_eq!(r.l_total, r.l_ce + r.l_mce);
    assert_eq!(state.iteration, 1);
}

#[test]
fn students_receive_gradient_and_graph_term_contributes() {
    let nets = vec![pretrained(3), pretrained(4)];
    let data = small_domain("target", 5, true).split(Split::Train).features;
    let cfg = TrainConfig {
        pairs: 2,
        ..small_config()
    };
    let mut state = ready_state(&cfg, &nets, &data);
    let batch = draw_batch(&mut state, &cfg, &data).unwrap();
    let targets = TeacherTargets::compute(&state.teachers(), &batch.views, cfg.knn_k).unwrap();
    let run = |lambda| {
        student_objective(
            &state.students(),
            &batch.views,
            &batch.labels,
            &targets,
            cfg.knn_k,
            cfg.beta,
            ObjectiveWeights::combined(lambda),
        )
        .unwrap()
    };
    let with = run(0.6);
    let without = run(0.0);
    for (a, b) in with.gradients.iter().zip(&without.gradients) {
        assert!(a.global_norm() > 0.0 && b.global_norm() > 0.0);
        let diff = a.get(ParamId::EncoderWeight(0)).unwrap().max_abs_diff(b.get(ParamId::EncoderWeight(0)).unwrap());
        assert!(diff.unwrap() > 1e-9);
    }
}

#[test]
fn teacher_follows_ema_recursion_of_student_trajectory() {
    let net = pretrained(5);
    let data = small_domain("target", 6, true).split(Split::Train).features;
    let cfg = small_config();
    let mut state = ready_state(&cfg, &[net], &data);
    let mut replay = state.pairs[0].teacher.clone();
    for _ in 0..3 {
        train_iteration(&mut state, &cfg, &data).unwrap();
        let student = state.pairs[0].student.params();
        for ((_, t), (_, s)) in replay.params_mut().into_iter().zip(student) {
            for (tv, &sv) in t.data_mut().iter_mut().zip(s.data()) {
                *tv = cfg.ema_decay * *tv + (1.0 - cfg.ema_decay) * sv;
            }
        }
        assert_eq!(replay, state.pairs[0].teacher);
    }
}

#[test]
fn parameters_stay_finite_and_features_unit_norm() {
    let nets = vec![pretrained(6), pretrained(7)];
    let target = small_domain("target", 8, true);
    let data = target.split(Split::Train).features;
    let cfg = TrainConfig {
        pairs: 2,
        ..small_config()
    };
    let mut state = ready_state(&cfg, &nets, &data);
    for _ in 0..10 {
        train_iteration(&mut state, &cfg, &data).unwrap();
        for p in &state.pairs {
            assert!(p.student.is_finite() && p.teacher.is_finite());
            let f = p.student.features(&data).unwrap();
            assert!(f.row_iter().all(|r| (row_norm(r) - 1.0).abs() < 1e-9));
        }
    }
}

#[test]
fn same_seed_gives_bit_identical_runs() {
    let net = pretrained(8);
    let target = small_domain("target", 9, true);
    let data = target.split(Split::Train).features;
    let cfg = small_config();
    let mut a = ready_state(&cfg, std::slice::from_ref(&net), &data);
    let mut b = ready_state(&cfg, std::slice::from_ref(&net), &data);
    train_iteration(&mut a, &cfg, &data).unwrap();
    train_iteration(&mut b, &cfg, &data).unwrap();
    assert_eq!(a.pairs, b.pairs);
    let run = || train(&cfg, std::slice::from_ref(&net), &target).unwrap().log.to_csv();
    let first = run();
    assert_eq!(first, run());
    assert_eq!(first.lines().count(), 1 + 3);
    let other = train(&TrainConfig { seed: 1, ..cfg.clone() }, &[net], &target).unwrap();
    assert_ne!(first, other.log.to_csv());
}

#[test]
fn csv_has_one_row_per_teacher_per_epoch() {
    let nets = vec![pretrained(9), pretrained(10)];
    let target = small_domain("target", 10, true);
    let cfg = TrainConfig {
        pairs: 2,
        epochs: 1,
        ..small_config()
    };
    let out = train(&cfg, &nets, &target).unwrap();
    let csv = out.log.to_csv();
    let lines: Vec<&str> = csv.lines().collect();
    assert_eq!(lines[0], "epoch,l_ce,l_mce,l_gcc,l_total,teacher_idx,map,rank1,rank5,rank10");
    assert_eq!(lines.len(), 1 + 2 * 2);
    assert!(lines[3].starts_with("1,") && lines[4].split(',').nth(5) == Some("1"));
    let best = out.log.last().unwrap().best_teacher.unwrap();
    let maps: Vec<f64> = out.log.last().unwrap().teachers.iter().map(|t| t.map).collect();
    assert_eq!(out.log.final_best_map(), Some(maps[best]));
    assert!(maps.iter().all(|&m| m <= maps[best]));
}

#[test]
fn mismatched_checkpoints_are_rejected() {
    let a = pretrained(1);
    let mut rng = rng_for(0, 0);
    let b = Network::random(&[32, 8, 16], 4, &mut rng).unwrap();
    let target = small_domain("target", 2, true);
    let cfg = TrainConfig { pairs: 2, ..small_config() };
    assert!(matches!(train(&cfg, &[a.clone(), b], &target), Err(Error::Validation(_))));
    assert!(matches!(train(&cfg, &[a], &target), Err(Error::Parameter(_))));
}

#[test]
fn iteration_before_relabel_is_a_state_error() {
    let net = pretrained(1);
    let data = small_domain("target", 2, true).split(Split::Train).features;
    let cfg = small_config();
    let mut state = TrainState::new(&cfg, &[net]).unwrap();
    assert!(matches!(train_iteration(&mut state, &cfg, &data), Err(Error::State(_))));
}

#[test]
fn non_finite_loss_aborts_with_diagnostics() {
    let net = pretrained(1);
    let data = small_domain("target", 2, true).split(Split::Train).features;
    let cfg = small_config();
    let mut state = ready_state(&cfg, &[net], &data);
    state.pairs[0].student.encoder.layers[1].bias.data_mut()[0] = f64::NAN;
    match train_iteration(&mut state, &cfg, &data) {
        Err(Error::NonFiniteLoss { iteration, detail, .. }) => {
            assert_eq!(iteration, 0);
            assert!(detail.contains("batch indices"));
        }
        other => panic!("expected a non-finite loss error, got {other:?}"),
    }
}

#[test]
fn full_scale_schedule_snapshot() {
    let c = TrainConfig::full_scale();
    assert_eq!((c.epochs, c.iters_per_epoch, c.learning_rate), (120, 400, 0.00035));
    assert_eq!((c.batch_identities, c.images_per_identity, c.knn_k), (16, 4, 12));
    assert_eq!((c.lambda_gcc, c.beta, c.ema_decay, c.lr_decay_epoch, c.lr_decay_factor), (0.6, 0.05, 0.999, 20, 0.1));
}
