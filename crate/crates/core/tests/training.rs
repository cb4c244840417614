use memsac_core::data::{
    apply_domain_shift, gen_gaussian_mixture, LabeledSet, MixtureSpec, ShiftSpec, TargetTruth,
    UnlabeledSet,
};
use memsac_core::exec::Execution;
use memsac_core::trainer::{run_training, ConsistencyMode, TrainConfig, Trainer};

fn small_task(seed: u64) -> (LabeledSet, UnlabeledSet, TargetTruth) {
    let spec = MixtureSpec {
        classes: 5,
        dim: 4,
        per_class: 24,
        class_spread: 4.0,
        within_class_std: 0.6,
        seed,
    };
    let src = gen_gaussian_mixture(&spec).unwrap();
    let tgt = gen_gaussian_mixture(&MixtureSpec {
        seed: seed + 1,
        ..spec
    })
    .unwrap();
    let tgt = apply_domain_shift(&tgt, &ShiftSpec::rotation_degrees(20.0, 0.05, seed)).unwrap();
    let (u, truth) = tgt.split_target();
    (src.into_source(), u, truth)
}

fn small_config() -> TrainConfig {
    TrainConfig {
        batch_size: 8,
        total_iters: 60,
        bootstrap_iters: 20,
        bank_capacity: 64,
        lambda_sc: 0.5,
        lr_encoder: 0.02,
        encoder_hidden: vec![12],
        feature_dim: 6,
        disc_hidden: 10,
        ..TrainConfig::default()
    }
}

#[test]
fn same_seed_same_everything() {
    let (s, u, t) = small_task(3);
    let cfg = small_config();
    let a = run_training(&cfg, &s, &u, Some(&t), |_| {}).unwrap();
    let b = run_training(&cfg, &s, &u, Some(&t), |_| {}).unwrap();
    assert_eq!(a.history, b.history);
    assert_eq!(a.model, b.model);
    let other = run_training(&TrainConfig { seed: 1, ..cfg }, &s, &u, Some(&t), |_| {}).unwrap();
    assert_ne!(a.history, other.history);
}

#[test]
fn bootstrap_iterations_leave_the_bank_empty() {
    let (s, u, t) = small_task(4);
    let cfg = small_config();
    let out = run_training(&cfg, &s, &u, Some(&t), |_| {}).unwrap();
    for r in &out.history {
        if r.iteration < cfg.bootstrap_iters {
            assert!(r.bootstrap);
            assert_eq!(r.bank_size, 0);
            assert_eq!(r.l_sc, 0.0);
            assert!(!r.sc_active);
        } else {
            assert!(r.bank_size > 0);
        }
    }
    let active = out.history.iter().filter(|r| r.sc_active).count();
    assert!(active > 0);
    assert!(out.history.iter().all(|r| r.bank_size <= cfg.bank_capacity));
}

#[test]
fn each_network_updates_once_per_step() {
    let (s, u, _) = small_task(5);
    let cfg = TrainConfig {
        sgd_momentum: 0.0,
        weight_decay: 0.0,
        ..small_config()
    };
    let mut trainer = Trainer::new(cfg, s.dim(), s.classes()).unwrap();
    let sb = s.batch(&[0, 1, 2, 3]);
    let tb = u.batch(&[4, 5, 6, 7]);
    let before = trainer.model.clone();
    trainer.step(&sb, &tb, None).unwrap();
    // Without momentum or decay a single step is exactly θ − lr·∇ at θ_0.
    let out = memsac_core::trainer::evaluate_objective(
        &before,
        &sb.x,
        &sb.y,
        &tb.x,
        &memsac_core::trainer::ObjectiveSettings {
            lambda_adv: trainer.config.lambda_adv,
            lambda_sc: trainer.config.lambda_sc,
            grl_coeff: 1.0,
            tau: trainer.config.tau,
            k: trainer.config.k,
            similarity: trainer.config.similarity_kind(),
            pseudo_label: trainer.config.pseudo_label,
            detach_conditioning: trainer.config.detach_conditioning,
            consistency: memsac_core::trainer::ConsistencySource::Inactive,
        },
        Execution::Sequential,
    )
    .unwrap();
    let rates = memsac_core::trainer::lr_schedule(0, &trainer.config);
    let n_e = before.encoder.0.param_count();
    let g = out.grads.flatten();
    for (i, ((p0, p1), gi)) in before
        .flatten()
        .iter()
        .zip(trainer.model.flatten())
        .zip(&g)
        .enumerate()
    {
        let lr = if i < n_e { rates.encoder } else { rates.heads };
        assert!((p1 - (p0 - lr * gi)).abs() <= 1e-15 * (1.0 + p0.abs()));
    }
}

#[test]
fn gated_off_consistency_matches_baseline_trace() {
    let (s, u, t) = small_task(6);
    let base = TrainConfig {
        lambda_sc: 0.0,
        ..small_config()
    };
    let off = run_training(
        &TrainConfig {
            consistency: ConsistencyMode::Off,
            ..base.clone()
        },
        &s,
        &u,
        Some(&t),
        |_| {},
    )
    .unwrap();
    for mode in [ConsistencyMode::Memory, ConsistencyMode::Batch] {
        let gated = run_training(
            &TrainConfig {
                consistency: mode,
                ..base.clone()
            },
            &s,
            &u,
            Some(&t),
            |_| {},
        )
        .unwrap();
        for (a, b) in gated.history.iter().zip(&off.history) {
            assert!(
                (a.l_sup - b.l_sup).abs() <= 1e-12,
                "{mode:?} iter {}",
                a.iteration
            );
            assert!((a.l_d - b.l_d).abs() <= 1e-12);
            assert!((a.total - b.total).abs() <= 1e-12);
            assert_eq!(a.l_sc, 0.0);
            assert_eq!(a.skip_count, 0);
        }
        assert_eq!(gated.model, off.model);
    }
}

#[test]
fn execution_modes_agree_bitwise() {
    let (s, u, _) = small_task(7);
    let cfg = small_config();
    let run = |exec| {
        let mut trainer = Trainer::new(cfg.clone(), s.dim(), s.classes()).unwrap();
        trainer.exec = exec;
        let mut records = Vec::new();
        for it in 0..cfg.total_iters {
            let idx: Vec<usize> = (0..8).map(|j| (it * 8 + j) % s.len()).collect();
            records.push(trainer.step(&s.batch(&idx), &u.batch(&idx), None).unwrap());
        }
        (records, trainer.model)
    };
    assert_eq!(run(Execution::Sequential), run(Execution::Parallel));
}

#[test]
fn momentum_encoder_feeds_the_bank() {
    let (s, u, t) = small_task(8);
    let cfg = TrainConfig {
        momentum_mu: 0.9,
        ..small_config()
    };
    let out = run_training(&cfg, &s, &u, Some(&t), |_| {}).unwrap();
    assert!(out.model.momentum.is_some());
    assert!(out.history.iter().all(|r| r.total.is_finite()));
    let plain = run_training(&small_config(), &s, &u, Some(&t), |_| {}).unwrap();
    assert!(plain.model.momentum.is_none());
    assert_ne!(out.history, plain.history);
}

#[test]
fn evaluation_covers_the_whole_target_set() {
    let (s, u, t) = small_task(9);
    let out = run_training(&small_config(), &s, &u, Some(&t), |_| {}).unwrap();
    let eval = out.eval.unwrap();
    assert_eq!(eval.per_class.len(), 5);
    let preds = out.model.predict(u.samples()).unwrap();
    let correct = preds.iter().zip(t.labels()).filter(|(p, y)| p == y).count();
    assert_eq!(eval.accuracy, correct as f64 / u.len() as f64);
    assert!(run_training(&small_config(), &s, &u, None, |_| {})
        .unwrap()
        .eval
        .is_none());
}
