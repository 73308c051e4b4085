use protolatent_core::cluster::{kmeans_fit, KMeansConfig, LatentSet};
use protolatent_core::data::{generate, split, subjects, Dataset, GeneratorConfig, InputSpec, Modality};
use protolatent_core::net::{evaluate, train, LayerSpec, Network, TrainConfig};
use protolatent_core::transfer::{chain_train, default_back_specs, BACK_TAP};

#[test]
fn patient_severities_form_the_configured_modes() {
    let cfg = GeneratorConfig {
        n_subjects: 600,
        ..GeneratorConfig::default()
    };
    let severities: Vec<Vec<f64>> = subjects(&cfg)
        .unwrap()
        .iter()
        .filter(|s| s.label == 1)
        .map(|s| vec![s.severity])
        .collect();
    let n = severities.len();
    let set = LatentSet::new(severities, vec![1; n], "severity", "").unwrap();
    let model = kmeans_fit(&set, &KMeansConfig { clusters: 3, ..KMeansConfig::default() }).unwrap();
    let mut found: Vec<f64> = model.centers.iter().map(|c| c[0]).collect();
    found.sort_by(f64::total_cmp);
    for (f, want) in found.iter().zip(cfg.severity_centers()) {
        assert!((f - want).abs() < 0.03, "{found:?}");
    }
}

/// Held-out accuracy of a logistic regression on the raw values of one
/// modality, fitted by plain gradient descent.
fn probe(train_set: &Dataset, test: &Dataset, modality: Modality, image_size: usize) -> f64 {
    let input = InputSpec::flat(modality, 3, image_size);
    let rows = |ds: &Dataset| -> Vec<(Vec<f64>, f64)> {
        ds.samples
            .iter()
            .map(|s| (input.encode(s).unwrap().data().to_vec(), s.label as f64))
            .collect()
    };
    let (tr, te) = (rows(train_set), rows(test));
    let d = tr[0].0.len();
    let (mut w, mut b) = (vec![0.0; d], 0.0);
    let sigmoid = |x: &[f64], w: &[f64], b: f64| 1.0 / (1.0 + (-(x.iter().zip(w).map(|(a, c)| a * c).sum::<f64>() + b)).exp());
    for _ in 0..300 {
        let mut gw = vec![0.0; d];
        let mut gb = 0.0;
        for (x, y) in &tr {
            let e = sigmoid(x, &w, b) - y;
            for (g, v) in gw.iter_mut().zip(x) {
                *g += e * v;
            }
            gb += e;
        }
        let step = 0.05 / tr.len() as f64;
        for (wi, g) in w.iter_mut().zip(&gw) {
            *wi -= step * g;
        }
        b -= step * gb;
    }
    let right = te.iter().filter(|(x, y)| (sigmoid(x, &w, b) >= 0.5) == (*y == 1.0)).count();
    100.0 * right as f64 / te.len() as f64
}

#[test]
fn the_sharper_modality_is_easier_to_probe() {
    let cfg = GeneratorConfig {
        image_size: 16,
        scan_snr: 8.0,
        volume_snr: 3.0,
        ..GeneratorConfig::default()
    };
    assert!(cfg.scan_snr >= 2.0 * cfg.volume_snr);
    let (tr, _, te) = split(&generate(&cfg).unwrap(), [0.6, 0.1, 0.3], 5).unwrap();
    let scan = probe(&tr, &te, Modality::ScanOnly, 16);
    let volume = probe(&tr, &te, Modality::VolumeOnly, 16);
    assert!(scan > volume, "scan {scan:.1} volume {volume:.1}");
}

#[test]
fn chaining_on_the_front_distribution_keeps_its_accuracy() {
    let input = InputSpec::flat(Modality::Dual, 3, 12);
    let specs = [LayerSpec::dense(12), LayerSpec::relu().named("latent"), LayerSpec::output()];
    let cfg = |seed| TrainConfig {
        learning_rate: 0.05,
        epochs: 30,
        batch_size: 10,
        seed,
        shuffle: true,
    };
    let (mut front_acc, mut chain_acc) = (0.0, 0.0);
    for seed in 0..5 {
        let data = GeneratorConfig {
            image_size: 12,
            seed,
            ..GeneratorConfig::default()
        };
        let (tr, _, te) = split(&generate(&data).unwrap(), [0.6, 0.1, 0.3], seed).unwrap();
        let mut front = Network::build(&specs, &input.dims(), "latent", seed).unwrap();
        train(&mut front, &tr.examples(&input).unwrap(), &[], &cfg(seed)).unwrap();
        front_acc += evaluate(&front, &te.examples(&input).unwrap()).unwrap().total();
        let (chain, _) = chain_train(&front, input, &tr, None, &default_back_specs(8), BACK_TAP, &cfg(seed)).unwrap();
        chain_acc += chain.evaluate(&te).unwrap().total();
    }
    let (front_acc, chain_acc) = (front_acc / 5.0, chain_acc / 5.0);
    assert!(chain_acc >= front_acc - 1.0, "front {front_acc:.1} chain {chain_acc:.1}");
}
