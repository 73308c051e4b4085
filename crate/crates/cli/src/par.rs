//! Multi-threaded variants of core routines. Each one returns exactly what
//! its serial counterpart returns.

use protolatent_core::cluster::LatentSet;
use protolatent_core::data::{render, subjects, Dataset, GeneratorConfig, InputSpec, SplitTag};
use protolatent_core::net::Network;
use protolatent_core::Result;
use rayon::prelude::*;

/// Same dataset as `data::generate`, rendered on the rayon pool. Every
/// sample has its own seed stream, so the order of work does not matter.
pub fn generate_parallel(cfg: &GeneratorConfig) -> Result<Dataset> {
    let subjects = subjects(cfg)?;
    let jobs: Vec<_> = subjects
        .iter()
        .flat_map(|s| (0..cfg.samples_per_subject).map(move |i| (s, i)))
        .collect();
    let samples = jobs.par_iter().map(|&(s, i)| render(cfg, s, i)).collect();
    Ok(Dataset::new(cfg.name.clone(), SplitTag::Full, samples))
}

/// Same latents as `transfer::extract_latents`, one forward pass per task.
pub fn extract_latents_parallel(net: &Network, ds: &Dataset, input: &InputSpec) -> Result<LatentSet> {
    let vectors = ds
        .samples
        .par_iter()
        .map(|s| Ok(net.forward(&input.encode(s)?)?.latent))
        .collect::<Result<Vec<_>>>()?;
    LatentSet::new(vectors, ds.labels(), ds.name.clone(), net.tap_name())?.with_subjects(ds.subject_ids())
}

#[cfg(test)]
mod tests {
    use super::*;
    use protolatent_core::data::{generate, Modality};
    use protolatent_core::net::LayerSpec;
    use protolatent_core::transfer::extract_latents;

    fn cfg() -> GeneratorConfig {
        GeneratorConfig {
            n_subjects: 12,
            samples_per_subject: 3,
            image_size: 8,
            seed: 5,
            ..GeneratorConfig::default()
        }
    }

    #[test]
    fn parallel_generation_equals_serial() {
        let pool = rayon::ThreadPoolBuilder::new().num_threads(4).build().unwrap();
        let par = pool.install(|| generate_parallel(&cfg()).unwrap());
        assert_eq!(par, generate(&cfg()).unwrap());
    }

    #[test]
    fn parallel_latents_equal_serial() {
        let ds = generate(&cfg()).unwrap();
        let input = InputSpec::flat(Modality::Dual, 3, 8);
        let net = Network::build(&[LayerSpec::dense(4).named("z"), LayerSpec::output()], &input.dims(), "z", 3).unwrap();
        let pool = rayon::ThreadPoolBuilder::new().num_threads(3).build().unwrap();
        let par = pool.install(|| extract_latents_parallel(&net, &ds, &input).unwrap());
        assert_eq!(par, extract_latents(&net, &ds, &input).unwrap());
    }
}
