mod common;

use flexid::cag::GatingConfig;
use flexid::harness::model::ArchConfig;
use flexid::harness::pipeline::{flexid_generate_batch, PipelineOptions};
use flexid::harness::{make_world, sample_dataset, train, TrainConfig, TrainedStack, WorldConfig};
use flexid::intent::{normalize_prompt, EditDictionary};
use flexid::math::Rng;
use flexid::vfa::ReferenceSpec;

fn small_arch() -> ArchConfig {
    ArchConfig { d_model: 16, heads: 2, blocks: 1, ffn_mult: 2, time_features: 8, ..Default::default() }
}

#[test]
fn dataset_mean_converges_to_center() {
    let world = make_world(&WorldConfig::default()).unwrap();
    let n = 4000;
    let mut rng = Rng::from_label(1, "lln");
    for (i, center) in world.centers.iter().enumerate() {
        let mut mean = vec![0.0; world.dim()];
        for _ in 0..n {
            for (m, x) in mean.iter_mut().zip(world.draw(center, None, &mut rng)) {
                *m += x / n as f64;
            }
        }
        let bound = 3.0 * world.config.noise / (n as f64).sqrt();
        for (m, c) in mean.iter().zip(center) {
            assert!((m - c).abs() <= bound, "identity {i}: |{m} - {c}| > {bound}");
        }
    }
}

#[test]
fn noiseless_samples_sit_on_the_lattice() {
    let world = make_world(&WorldConfig { noise: 0.0, min_separation: Some(0.4), ..Default::default() }).unwrap();
    let mut rng = Rng::from_label(2, "lattice");
    for s in sample_dataset(&world, 200, &mut rng) {
        assert!(s.identity < world.centers.len());
        let mut want = world.centers[s.identity].clone();
        if let Some(a) = s.attribute {
            assert!(a < world.offsets.len());
            want.iter_mut().zip(&world.offsets[a]).for_each(|(w, o)| *w += o);
        }
        assert_eq!(s.x0, want);
    }
}

#[test]
fn training_is_deterministic_and_zero_steps_is_identity() {
    let world = WorldConfig::default();
    let tcfg = TrainConfig { steps: 15, batch_size: 8, eval_samples: 16, ..Default::default() };
    let a = train(&world, &small_arch(), &tcfg).unwrap();
    let b = train(&world, &small_arch(), &tcfg).unwrap();
    assert_eq!(a.params, b.params);
    assert_eq!(a.meta, b.meta);

    let zero = TrainConfig { steps: 0, ..tcfg };
    let z = train(&world, &small_arch(), &zero).unwrap();
    let init = TrainedStack::untrained(&world, &small_arch(), &zero).unwrap();
    assert_eq!(z.params, init.params);
}

#[test]
fn default_training_halves_the_loss() {
    let stack = common::default_stack();
    let (first, last) = (stack.meta.initial_loss.unwrap(), stack.meta.final_loss.unwrap());
    assert!(last <= 0.5 * first, "loss {first} -> {last}");
}

#[test]
fn single_identity_generations_center_on_the_identity() {
    let world = WorldConfig { identities: 1, held_out: None, ..Default::default() };
    let stack = train(&world, &ArchConfig::default(), &TrainConfig::default()).unwrap();
    let reference = stack.reference(ReferenceSpec::Index(0)).unwrap();
    let prompt = normalize_prompt("a photo of a person");
    let seeds: Vec<u64> = (0..64).collect();
    let traces = flexid_generate_batch(
        &stack,
        &reference,
        &prompt,
        &GatingConfig::default(),
        &EditDictionary::default_dictionary(),
        &PipelineOptions::default(),
        &seeds,
    )
    .unwrap();
    let mut mean = vec![0.0; stack.dim()];
    for t in &traces {
        mean.iter_mut().zip(&t.final_sample).for_each(|(m, x)| *m += x / seeds.len() as f64);
    }
    let dist = mean.iter().zip(&reference.feature).map(|(m, c)| (m - c) * (m - c)).sum::<f64>().sqrt();
    assert!(dist <= 0.15 * world.center_scale, "mean is {dist} from the center");
}
