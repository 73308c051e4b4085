use super::*;
use crate::net::gradcheck::{max_relative_error, numerical_gradient};
use crate::net::tests::{gradcheck_zoo, random_batch, randomized};
use crate::net::{train, LayerSpec, Loss};
use crate::proto::Prototype;
use crate::rng;
use proptest::prelude::*;

fn reference(centers: &[Vec<f64>]) -> PrototypeSet {
    let dim = centers[0].len();
    PrototypeSet::new(
        centers
            .iter()
            .enumerate()
            .map(|(i, c)| Prototype {
                center: c.clone(),
                label: (i % 2) as u8,
                annotation: String::new(),
                source: "ref".into(),
                support: 0.1,
            })
            .collect(),
        dim,
        Vec::new(),
    )
    .unwrap()
}

fn latents(vectors: Vec<Vec<f64>>) -> LatentSet {
    let n = vectors.len();
    LatentSet::new(vectors, vec![0; n], "d", "t").unwrap()
}

fn random_centers(l: usize, dim: usize, seed: u64) -> Vec<Vec<f64>> {
    let mut r = rng::seeded(seed);
    (0..l).map(|_| (0..dim).map(|_| rng::normal(&mut r)).collect()).collect()
}

#[test]
fn single_center_targets_are_all_ones() {
    let u = assign_targets(&latents(vec![vec![1.0], vec![-3.0], vec![7.0]]), &reference(&[vec![0.0]])).unwrap();
    assert_eq!(u.matrix(), vec![vec![1.0, 1.0, 1.0]]);
}

#[test]
fn targets_follow_the_nearest_center() {
    let u = assign_targets(&latents(vec![vec![1.0, 0.0]]), &reference(&[vec![0.0, 0.0], vec![5.0, 5.0]])).unwrap();
    assert_eq!(u.matrix(), vec![vec![1.0], vec![0.0]]);
    let tie = assign_targets(&latents(vec![vec![1.0]]), &reference(&[vec![0.0], vec![2.0]])).unwrap();
    assert_eq!(tie.selected, [0]);
}

#[test]
fn energies_match_a_double_loop() {
    let centers = random_centers(4, 5, 1);
    let vs = random_centers(3, 5, 2);
    let e = residual_energies(&latents(vs.clone()), &reference(&centers)).unwrap();
    for m in 0..4 {
        for n in 0..3 {
            let mut acc = 0.0;
            for k in 0..5 {
                let d = vs[n][k] - centers[m][k];
                acc += d * d;
            }
            assert!((e[m][n] - acc).abs() <= 1e-12);
        }
    }
    let simple = residual_energies(&latents(vec![vec![1.0, 0.0], vec![0.0, 0.0]]), &reference(&[vec![0.0, 0.0]])).unwrap();
    assert_eq!(simple, vec![vec![1.0, 0.0]]);
}

#[test]
fn dimension_mismatch_is_reported() {
    let r = reference(&[vec![0.0, 0.0]]);
    assert!(matches!(assign_targets(&latents(vec![vec![1.0]]), &r), Err(Error::Dimension { .. })));
    assert!(matches!(residual_energies(&latents(vec![vec![1.0]]), &r), Err(Error::Dimension { .. })));
}

#[test]
fn two_cluster_hand_example() {
    let u = AdaptationTargets {
        clusters: 2,
        selected: vec![0],
    };
    let f2 = loss_f2(&[vec![0.0], vec![4.0]], &u, Squash::Softmax, 1.0, 0.0).unwrap();
    let f0 = 1.0 / (1.0 + 4f64.exp());
    assert!((f0 - 0.01799).abs() < 1e-5);
    assert!((f2 - f0 * f0).abs() < 1e-18);
    assert!((f2 - 3.236e-4).abs() < 1e-6);
}

#[test]
fn met_targets_give_zero() {
    let u = AdaptationTargets {
        clusters: 2,
        selected: vec![0, 1],
    };
    let e = [vec![0.0, 1000.0], vec![1000.0, 0.0]];
    assert_eq!(loss_f2(&e, &u, Squash::Softmax, 1.0, 0.0).unwrap(), 0.0);
    let u3 = AdaptationTargets {
        clusters: 3,
        selected: vec![1],
    };
    let e3 = [vec![1000.0], vec![0.0], vec![1000.0]];
    assert_eq!(loss_f2(&e3, &u3, Squash::Logistic, 1.0, 500.0).unwrap(), 0.0);
    // softmax targets are out of reach once L > 2
    assert!(loss_f2(&e3, &u3, Squash::Softmax, 1.0, 0.0).unwrap() > 0.1);
}

#[test]
fn loss_f2_shape_errors() {
    let u = AdaptationTargets {
        clusters: 2,
        selected: vec![0],
    };
    assert!(loss_f2(&[vec![0.0]], &u, Squash::Softmax, 1.0, 0.0).is_err());
    assert!(loss_f2(&[vec![0.0], vec![1.0, 2.0]], &u, Squash::Softmax, 1.0, 0.0).is_err());
}

#[test]
fn total_is_the_convex_combination() {
    assert_eq!(loss_total(0.3, 0.9, 1.0).unwrap().total, 0.3);
    assert!((loss_total(0.2, 0.1, 0.5).unwrap().total - 0.15).abs() < 1e-15);
    assert_eq!(loss_total(0.3, 0.9, 0.0).unwrap().total, 0.9);
    assert!(loss_total(0.3, 0.9, 1.5).is_err());
}

proptest! {
    #[test]
    fn targets_are_one_hot_and_scale_equivariant(
        centers in prop::collection::vec(prop::collection::vec(-5.0f64..5.0, 2), 1..6),
        vs in prop::collection::vec(prop::collection::vec(-5.0f64..5.0, 2), 1..10),
        s in 0.1f64..10.0,
    ) {
        let r = reference(&centers);
        let u = assign_targets(&latents(vs.clone()), &r).unwrap();
        for n in 0..vs.len() {
            let col: f64 = u.matrix().iter().map(|row| row[n]).sum();
            prop_assert_eq!(col, 1.0);
        }
        let scaled_c: Vec<Vec<f64>> = centers.iter().map(|c| c.iter().map(|x| x * s).collect()).collect();
        let scaled_v: Vec<Vec<f64>> = vs.iter().map(|c| c.iter().map(|x| x * s).collect()).collect();
        let us = assign_targets(&latents(scaled_v), &reference(&scaled_c)).unwrap();
        let e = residual_energies(&latents(vs), &r).unwrap();
        for n in 0..u.samples() {
            let mut col: Vec<f64> = e.iter().map(|row| row[n]).collect();
            col.sort_by(f64::total_cmp);
            if col.len() < 2 || col[1] - col[0] > 1e-9 * (1.0 + col[1]) {
                prop_assert_eq!(u.selected[n], us.selected[n]);
            }
        }
    }

    #[test]
    fn f2_is_nonnegative_and_permutation_invariant(
        energies in prop::collection::vec(prop::collection::vec(0.0f64..20.0, 3), 2..5),
        picks in prop::collection::vec(0usize..100, 3),
        scale in 0.01f64..3.0,
        logistic in any::<bool>(),
    ) {
        let l = energies.len();
        let squash = if logistic { Squash::Logistic } else { Squash::Softmax };
        let u = AdaptationTargets { clusters: l, selected: picks.iter().map(|p| p % l).collect() };
        let f2 = loss_f2(&energies, &u, squash, scale, 5.0).unwrap();
        prop_assert!(f2 >= 0.0);
        // reverse the cluster order in both E and u
        let rev_e: Vec<Vec<f64>> = energies.iter().rev().cloned().collect();
        let rev_u = AdaptationTargets { clusters: l, selected: u.selected.iter().map(|m| l - 1 - m).collect() };
        let f2r = loss_f2(&rev_e, &rev_u, squash, scale, 5.0).unwrap();
        prop_assert!((f2 - f2r).abs() <= 1e-14);
    }
}

fn targets_for(net: &Network, batch: &[Example], r: &PrototypeSet) -> AdaptationTargets {
    let vs = batch.iter().map(|ex| net.forward(&ex.input).unwrap().latent).collect();
    assign_targets(&latents(vs), r).unwrap()
}

#[test]
fn lambda_one_gradient_is_the_plain_output_gradient() {
    for (specs, dims, tap) in gradcheck_zoo() {
        let net = randomized(&Network::build(&specs, &dims, tap, 1).unwrap(), 1);
        let batch = random_batch(&dims, 4, 9);
        let r = reference(&random_centers(3, net.latent_dim(), 4));
        let u = targets_for(&net, &batch, &r);
        let cfg = AdaptLossConfig::new(1.0, r, Squash::Softmax);
        let plain = backward(&net, &batch, &Loss::MseOutput).unwrap();
        assert_eq!(adapt_gradients(&net, &batch, &cfg, &u).unwrap(), plain);
    }
}

#[test]
fn composite_gradients_match_finite_differences() {
    for (arch, (specs, dims, tap)) in gradcheck_zoo().into_iter().enumerate() {
        for seed in 0..4u64 {
            let net = randomized(&Network::build(&specs, &dims, tap, seed).unwrap(), 50 + seed);
            let batch = random_batch(&dims, 3, 200 + seed);
            let r = reference(&random_centers(3, net.latent_dim(), seed));
            let u = targets_for(&net, &batch, &r);
            for squash in [Squash::Softmax, Squash::Logistic] {
                for lambda in [0.0, 0.5, 1.0] {
                    let cfg = AdaptLossConfig::new(lambda, r.clone(), squash);
                    let (scale, bias) = resolve_scale(&net, &batch, &cfg).unwrap();
                    let obj = AdaptObjective::fixed(&cfg, &u, scale, bias);
                    let analytic = adapt_gradients(&net, &batch, &cfg, &u).unwrap().flat();
                    let numeric = numerical_gradient(&net, &batch, &obj, 1e-5).unwrap();
                    let err = max_relative_error(&analytic, &numeric, 1e-6);
                    assert!(err <= 1e-4, "arch {arch} seed {seed} {squash:?} lambda {lambda}: {err}");
                }
            }
        }
    }
}

#[test]
fn latent_at_its_center_is_stationary_in_logistic_mode() {
    let specs = [LayerSpec::dense(2).named("z"), LayerSpec::output()];
    let net = Network::build(&specs, &[2], "z", 3).unwrap();
    let batch = random_batch(&[2], 1, 4);
    let v = net.forward(&batch[0].input).unwrap().latent;
    let far: Vec<f64> = v.iter().map(|x| x + 100.0).collect();
    let r = reference(&[v.clone(), far]);
    let u = targets_for(&net, &batch, &r);
    assert_eq!(u.selected, [0]);
    let mut cfg = AdaptLossConfig::new(0.0, r, Squash::Logistic);
    cfg.scale = Some(1.0);
    cfg.bias = Some(10.0);
    let g = adapt_gradients(&net, &batch, &cfg, &u).unwrap().flat();
    let norm = g.iter().map(|x| x * x).sum::<f64>().sqrt();
    assert!(norm < 1e-6, "{norm}");
}

#[test]
fn adapt_gradients_validate_inputs() {
    let (specs, dims, tap) = gradcheck_zoo().remove(0);
    let net = Network::build(&specs, &dims, tap, 0).unwrap();
    let batch = random_batch(&dims, 2, 0);
    let r = reference(&random_centers(2, net.latent_dim(), 0));
    let u = targets_for(&net, &batch, &r);
    let bad_lambda = AdaptLossConfig::new(1.5, r.clone(), Squash::Softmax);
    assert!(matches!(adapt_gradients(&net, &batch, &bad_lambda, &u), Err(Error::Config(_))));
    let cfg = AdaptLossConfig::new(0.5, r, Squash::Softmax);
    assert!(adapt_gradients(&net, &batch[..1], &cfg, &u).is_err());
    let wrong_dim = AdaptLossConfig::new(0.5, reference(&random_centers(2, 7, 0)), Squash::Softmax);
    assert!(matches!(adapt_gradients(&net, &batch, &wrong_dim, &u), Err(Error::Dimension { .. })));
}

fn toy_training() -> (Network, Vec<Example>, PrototypeSet) {
    let specs = [
        LayerSpec::dense(4),
        LayerSpec::relu(),
        LayerSpec::dropout(0.2),
        LayerSpec::dense(3).named("z"),
        LayerSpec::output(),
    ];
    let net = Network::build(&specs, &[4], "z", 2).unwrap();
    let data = random_batch(&[4], 24, 3);
    (net, data, reference(&random_centers(3, 3, 5)))
}

#[test]
fn lambda_one_training_reproduces_plain_training() {
    let (net, data, r) = toy_training();
    let cfg = TrainConfig {
        epochs: 4,
        batch_size: 5,
        learning_rate: 0.1,
        seed: 8,
        shuffle: true,
    };
    let mut plain = net.clone();
    let h_plain = train(&mut plain, &data, &data[..6], &cfg).unwrap();
    let mut adapted = net;
    let h_adapt = adapt_train(&mut adapted, &data, &data[..6], &cfg, &AdaptLossConfig::new(1.0, r, Squash::Softmax)).unwrap();
    assert_eq!(plain, adapted);
    for (a, b) in h_plain.iter().zip(&h_adapt) {
        assert_eq!((a.f1, a.total, a.train_acc, a.valid_acc), (b.f1, b.total, b.train_acc, b.valid_acc));
    }
}

#[test]
fn history_satisfies_the_breakdown_identity() {
    let (mut net, data, r) = toy_training();
    let cfg = TrainConfig {
        epochs: 5,
        learning_rate: 0.05,
        ..TrainConfig::default()
    };
    for squash in [Squash::Softmax, Squash::Logistic] {
        let h = adapt_train(&mut net, &data, &[], &cfg, &AdaptLossConfig::new(0.5, r.clone(), squash)).unwrap();
        assert_eq!(h.len(), 5);
        for rec in &h {
            let b = LossBreakdown::from(rec);
            assert!(b.f2 >= 0.0);
            assert!((b.total - (0.5 * b.f1 + 0.5 * b.f2)).abs() <= 1e-12);
        }
    }
}

#[test]
fn scale_is_frozen_after_the_first_epoch() {
    let (net, data, r) = toy_training();
    let acfg = AdaptLossConfig::new(0.5, r, Squash::Softmax);
    let mut obj = AdaptObjective::refreshing(&acfg).with_first_batch(10);
    obj.begin_epoch(&net, &data).unwrap();
    let (expect, _) = resolve_scale(&net, &data[..10], &acfg).unwrap();
    assert_eq!(obj.scale(), Some(expect));
    let moved = randomized(&net, 77);
    obj.begin_epoch(&moved, &data).unwrap();
    assert_eq!(obj.scale(), Some(expect));
    assert_eq!(obj.targets(), targets_for(&moved, &data, &acfg.reference));
}

#[test]
fn anchored_targets_stay_fixed_while_the_scale_is_measured() {
    let (net, data, r) = toy_training();
    let acfg = AdaptLossConfig::new(0.5, r, Squash::Logistic);
    let u = targets_for(&randomized(&net, 5), &data, &acfg.reference);
    let mut obj = AdaptObjective::anchored(&acfg, &u).with_first_batch(10);
    obj.begin_epoch(&net, &data).unwrap();
    assert_eq!(obj.scale(), Some(resolve_scale(&net, &data[..10], &acfg).unwrap().0));
    obj.begin_epoch(&randomized(&net, 9), &data).unwrap();
    assert_eq!(obj.targets(), u);
}

#[test]
fn anchored_training_checks_target_count_and_matches_plain_at_lambda_one() {
    let (net, data, r) = toy_training();
    let cfg = TrainConfig {
        epochs: 3,
        learning_rate: 0.1,
        ..TrainConfig::default()
    };
    let acfg = AdaptLossConfig::new(1.0, r, Squash::Logistic);
    let u = targets_for(&net, &data, &acfg.reference);
    let short = AdaptationTargets {
        clusters: u.clusters,
        selected: u.selected[1..].to_vec(),
    };
    let mut a = net.clone();
    assert!(matches!(adapt_train_anchored(&mut a, &data, &[], &cfg, &acfg, &short), Err(Error::Dimension { .. })));
    let mut plain = net.clone();
    train(&mut plain, &data, &[], &cfg).unwrap();
    adapt_train_anchored(&mut a, &data, &[], &cfg, &acfg, &u).unwrap();
    assert_eq!(a, plain);
}

#[test]
fn reference_targets_use_the_reference_network_latents() {
    use crate::data::{generate, GeneratorConfig, Modality};
    let gcfg = GeneratorConfig {
        n_subjects: 6,
        samples_per_subject: 1,
        image_size: 8,
        ..GeneratorConfig::default()
    };
    let ds = generate(&gcfg).unwrap();
    let input = InputSpec::flat(Modality::Dual, 3, 8);
    let net = Network::build(&[LayerSpec::dense(2).named("z"), LayerSpec::output()], &input.dims(), "z", 4).unwrap();
    let r = reference(&random_centers(3, 2, 1));
    let u = reference_targets(&net, &ds, &input, &r).unwrap();
    assert_eq!(u, assign_targets(&extract_latents(&net, &ds, &input).unwrap(), &r).unwrap());
}
