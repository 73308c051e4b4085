use super::*;
use crate::data::{generate, GeneratorConfig, Modality, ScanStyle};
use crate::proto::{Prototype, PrototypeSet};

fn dataset(seed: u64, n_subjects: usize) -> Dataset {
    generate(&GeneratorConfig {
        n_subjects,
        samples_per_subject: 2,
        image_size: 8,
        style: ScanStyle::GrayScan,
        seed,
        ..GeneratorConfig::default()
    })
    .unwrap()
}

fn input() -> InputSpec {
    InputSpec::flat(Modality::Dual, 1, 8)
}

fn front(seed: u64) -> Network {
    let specs = [LayerSpec::dense(6), LayerSpec::relu().named("z"), LayerSpec::output()];
    Network::build(&specs, &input().dims(), "z", seed).unwrap()
}

fn cfg(epochs: usize) -> TrainConfig {
    TrainConfig {
        epochs,
        learning_rate: 0.05,
        ..TrainConfig::default()
    }
}

#[test]
fn empty_dataset_gives_empty_latents() {
    let ds = Dataset::new("e", crate::data::SplitTag::Test, Vec::new());
    let l = extract_latents(&front(0), &ds, &input()).unwrap();
    assert!(l.is_empty());
    assert_eq!(l.tap, "z");
}

#[test]
fn extraction_is_pure_and_deterministic() {
    let mut ds = dataset(1, 6);
    ds.samples.push(ds.samples[3].clone());
    let net = front(2);
    let a = extract_latents(&net, &ds, &input()).unwrap();
    assert_eq!(a, extract_latents(&net, &ds, &input()).unwrap());
    assert_eq!(a.vectors[3], a.vectors[ds.len() - 1]);
    assert_eq!(a.labels, ds.labels());
    assert_eq!(a.subject_ids, ds.subject_ids());
    assert_eq!(a.dim(), Some(6));
}

#[test]
fn chain_leaves_the_front_untouched() {
    let net = front(3);
    let before = net.clone();
    let (chain, history) = chain_train(&net, input(), &dataset(4, 8), None, &default_back_specs(5), BACK_TAP, &cfg(2)).unwrap();
    assert_eq!(net, before);
    assert_eq!(chain.front, before);
    assert_eq!(history.len(), 2);
    assert_eq!(chain.back_tap_dim(), 5);
    assert_eq!(chain.back.input_dims(), [6]);
}

#[test]
fn zero_epochs_keep_the_initial_back_network() {
    let (chain, history) = chain_train(&front(3), input(), &dataset(4, 8), None, &default_back_specs(5), BACK_TAP, &cfg(0)).unwrap();
    assert!(history.is_empty());
    let init = Network::build(&default_back_specs(5), &[6], BACK_TAP, cfg(0).seed).unwrap();
    assert_eq!(chain.back, init);
}

#[test]
fn composite_prediction_is_classification_of_the_back_latent() {
    let (chain, _) = chain_train(&front(5), input(), &dataset(6, 8), None, &default_back_specs(4), BACK_TAP, &cfg(3)).unwrap();
    let ds = dataset(7, 5);
    let latents = chain.latents(&ds).unwrap();
    let protos = PrototypeSet::new(
        [0usize, 3, 6]
            .iter()
            .map(|&i| Prototype {
                center: latents.vectors[i].clone(),
                label: latents.labels[i],
                annotation: String::new(),
                source: "x".into(),
                support: 0.2,
            })
            .collect(),
        4,
        Vec::new(),
    )
    .unwrap();
    for (i, s) in ds.samples.iter().enumerate() {
        let c = composite_predict(&chain, &protos, s).unwrap();
        assert_eq!(c, classify(&protos, &latents.vectors[i]).unwrap());
    }
    assert_eq!(composite_predict(&chain, &protos, &ds.samples[6]).unwrap().distance, 0.0);
}

#[test]
fn chain_errors_propagate() {
    let ds = Dataset::new("e", crate::data::SplitTag::Train, Vec::new());
    assert!(matches!(
        chain_train(&front(0), input(), &ds, None, &default_back_specs(4), BACK_TAP, &cfg(1)),
        Err(Error::EmptyDataset)
    ));
    assert!(matches!(
        chain_train(&front(0), input(), &dataset(1, 6), None, &default_back_specs(4), "nope", &cfg(1)),
        Err(Error::UnknownLayer(_))
    ));
}

#[test]
fn chain_accuracy_thresholds_the_back_prediction() {
    let (chain, _) = chain_train(&front(8), input(), &dataset(9, 8), None, &default_back_specs(4), BACK_TAP, &cfg(2)).unwrap();
    let ds = dataset(10, 6);
    let acc = chain.evaluate(&ds).unwrap();
    let mut want = Accuracy::default();
    for s in &ds.samples {
        want.record(s.label, u8::from(chain.predict(s).unwrap() >= 0.5));
    }
    assert_eq!(acc, want);
    assert!(matches!(chain.evaluate(&Dataset::new("e", crate::data::SplitTag::Test, Vec::new())), Err(Error::EmptyDataset)));
}
