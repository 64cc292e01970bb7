//! Trains the default stack and prints the trade-off table for the ablation
//! configurations on the held-out identity.
//!
//! Usage: `cargo run --release -p flexid-core --example calibrate [ckpt] [overrides.json]`
//!
//! The optional JSON file may hold `world`, `arch` and `train` sections that
//! replace the defaults. A checkpoint path that exists is loaded instead of
//! training; otherwise the trained stack is saved there.

use std::path::Path;
use std::time::Instant;

use flexid::cag::GatingConfig;
use flexid::harness::model::ArchConfig;
use flexid::harness::pipeline::{flexid_generate_batch, PipelineOptions};
use flexid::harness::{load_checkpoint, save_checkpoint, train, TrainConfig, WorldConfig};
use flexid::intent::{normalize_prompt, EditDictionary};
use flexid::metrics::{attr_adherence, id_similarity};
use flexid::vfa::ReferenceSpec;

fn main() -> flexid::Result<()> {
    let ckpt = std::env::args().nth(1);
    let cfg: serde_json::Value = match std::env::args().nth(2) {
        Some(p) => serde_json::from_str(&std::fs::read_to_string(p).unwrap()).unwrap(),
        None => serde_json::json!({}),
    };
    let world: WorldConfig =
        serde_json::from_value(cfg.get("world").cloned().unwrap_or(serde_json::json!({}))).unwrap();
    let arch: ArchConfig = serde_json::from_value(cfg.get("arch").cloned().unwrap_or(serde_json::json!({}))).unwrap();
    let tcfg: TrainConfig = serde_json::from_value(cfg.get("train").cloned().unwrap_or(serde_json::json!({}))).unwrap();
    let start = Instant::now();
    let stack = match ckpt.as_deref().filter(|p| Path::new(p).exists()) {
        Some(p) => load_checkpoint(Path::new(p))?,
        None => {
            let s = train(&world, &arch, &tcfg)?;
            if let Some(p) = &ckpt {
                save_checkpoint(&s, Path::new(p))?;
            }
            s
        }
    };
    println!("stack ready in {:.1?}: {:?}", start.elapsed(), stack.meta);

    let dict = EditDictionary::default_dictionary();
    let prompt = normalize_prompt("a photo of a person laughing out loud");
    let attr = stack.world.attribute_for_prompt(&prompt).expect("prompt names an attribute");
    let reference = stack.reference(ReferenceSpec::HeldOut)?;
    let center = reference.feature.clone();
    let offset = stack.world.offsets[attr].clone();
    let scale = stack.world.similarity_scale();
    let seeds: Vec<u64> = (0..64).collect();
    println!("similarity scale {scale:.4}, offset norm {:.4}", offset.iter().map(|v| v * v).sum::<f64>().sqrt());

    let base = GatingConfig::default();
    let rows = [
        ("flexid", base.clone(), true, true),
        ("flexid-nosip", base.clone(), false, true),
        ("rigid", base.clone(), false, false),
        ("static-sip", base.clone(), true, false),
        ("no-anchor", GatingConfig { w_base: 0.0, ..base.clone() }, true, true),
        ("w0.5", GatingConfig { w_base: 0.5, ..base.clone() }, true, true),
    ];
    for (name, gating, sip, cag) in rows {
        let opts = PipelineOptions { sip_enabled: sip, cag_enabled: cag, ..Default::default() };
        let traces = flexid_generate_batch(&stack, &reference, &prompt, &gating, &dict, &opts, &seeds)?;
        let mut ids = 0.0;
        let mut ads = 0.0;
        let mut resid = 0.0;
        let mut proj = 0.0;
        let o2: f64 = offset.iter().map(|v| v * v).sum();
        for t in &traces {
            ids += id_similarity(&t.final_sample, &center, scale)?;
            ads += attr_adherence(&t.final_sample, &center, &offset)?;
            let rel: Vec<f64> = t.final_sample.iter().zip(&center).map(|(x, c)| x - c).collect();
            let a: f64 = rel.iter().zip(&offset).map(|(r, o)| r * o).sum::<f64>() / o2;
            proj += a;
            resid += rel.iter().zip(&offset).map(|(r, o)| (r - a * o).powi(2)).sum::<f64>().sqrt();
        }
        let n = traces.len() as f64;
        println!(
            "{name:>14}  id_sim {:.4}  adherence {:.4}  along-offset {:.4}  orthogonal {:.4}",
            ids / n,
            ads / n,
            proj / n,
            resid / n
        );
    }
    println!("total {:.1?}", start.elapsed());
    Ok(())
}
