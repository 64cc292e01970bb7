//! The trained denoiser with its adapters, world and provenance.

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::harness::model::{
    attribute_token, one_hot, ArchConfig, ParamSet, StackLayout, CONTEXT_LEN, NO_ATTRIBUTE_TOKEN, SUBJECT_TOKEN,
};
use crate::harness::train::TrainConfig;
use crate::harness::world::{make_world, SyntheticWorld, WorldConfig};
use crate::intent::Prompt;
use crate::math::Tensor;
use crate::sip::ContextEmbedding;
use crate::vfa::{IdentityReference, ReferenceSpec};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainingMeta {
    pub config_hash: String,
    pub seed: u64,
    pub steps: usize,
    /// Loss on the fixed evaluation batch before and after training.
    pub initial_loss: Option<f64>,
    pub final_loss: Option<f64>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrainedStack {
    pub world_cfg: WorldConfig,
    pub arch: ArchConfig,
    pub train_cfg: TrainConfig,
    pub world: SyntheticWorld,
    pub layout: StackLayout,
    pub params: ParamSet,
    pub meta: TrainingMeta,
}

#[derive(Serialize)]
struct HashInput<'a> {
    world: &'a WorldConfig,
    arch: &'a ArchConfig,
    train: &'a TrainConfig,
}

/// First 16 hex digits of the SHA-256 of the canonical JSON of the three
/// configs that determine a trained stack.
pub fn config_hash(world: &WorldConfig, arch: &ArchConfig, train: &TrainConfig) -> String {
    let json = serde_json::to_vec(&HashInput { world, arch, train }).expect("configs serialize");
    hex::encode(Sha256::digest(&json))[..16].to_string()
}

impl TrainedStack {
    /// A stack at its initialisation, before any training step.
    pub fn untrained(world_cfg: &WorldConfig, arch: &ArchConfig, train_cfg: &TrainConfig) -> Result<Self> {
        world_cfg.validate()?;
        train_cfg.validate()?;
        let world = make_world(world_cfg)?;
        let (layout, params) = StackLayout::init(world_cfg.dim, world_cfg.attributes, arch, train_cfg.seed)?;
        Ok(TrainedStack {
            world_cfg: world_cfg.clone(),
            arch: arch.clone(),
            train_cfg: train_cfg.clone(),
            world,
            layout,
            params,
            meta: TrainingMeta {
                config_hash: config_hash(world_cfg, arch, train_cfg),
                seed: train_cfg.seed,
                steps: 0,
                initial_loss: None,
                final_loss: None,
            },
        })
    }

    pub fn dim(&self) -> usize {
        self.world.dim()
    }

    pub fn vocab(&self) -> usize {
        2 + self.world.offsets.len()
    }

    /// Context tokens for an optional attribute.
    pub fn context_tokens(attribute: Option<usize>) -> [usize; CONTEXT_LEN] {
        [SUBJECT_TOKEN, attribute.map_or(NO_ATTRIBUTE_TOKEN, attribute_token)]
    }

    /// Base context embedding for the attribute a prompt requests.
    pub fn text_context(&self, prompt: &Prompt) -> Result<ContextEmbedding> {
        self.context_for(self.world.attribute_for_prompt(prompt))
    }

    pub fn context_for(&self, attribute: Option<usize>) -> Result<ContextEmbedding> {
        let oh = one_hot(&Self::context_tokens(attribute), self.vocab())?;
        Ok(ContextEmbedding::base(oh.matmul(self.params.get(self.layout.text_embed))?))
    }

    /// The all-zeros context used by the unconditional guidance branch.
    pub fn null_context(&self) -> ContextEmbedding {
        ContextEmbedding::base(Tensor::zeros([CONTEXT_LEN, self.arch.d_model]))
    }

    pub fn reference(&self, spec: ReferenceSpec) -> Result<IdentityReference> {
        IdentityReference::resolve(&self.world, spec)
    }

    pub fn check_reference(&self, reference: &IdentityReference) -> Result<()> {
        if reference.feature.len() != self.dim() {
            return Err(Error::dim("identity feature", &[reference.feature.len()], &[self.dim()]));
        }
        if reference.feature.iter().any(|v| !v.is_finite()) {
            return Err(Error::Validation("identity feature has non-finite values".into()));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn hash_tracks_every_config() {
        let w = WorldConfig::default();
        let a = ArchConfig::default();
        let t = TrainConfig::default();
        let h = config_hash(&w, &a, &t);
        assert_eq!(h.len(), 16);
        assert_eq!(h, config_hash(&w, &a, &t));
        assert_ne!(h, config_hash(&WorldConfig { seed: 1, ..w.clone() }, &a, &t));
        assert_ne!(h, config_hash(&w, &ArchConfig { heads: 4, ..a.clone() }, &t));
        assert_ne!(h, config_hash(&w, &a, &TrainConfig { steps: 1, ..t }));
    }

    #[test]
    fn references_resolve_and_validate() {
        let s =
            TrainedStack::untrained(&WorldConfig::default(), &ArchConfig::default(), &TrainConfig::default()).unwrap();
        let r = s.reference(ReferenceSpec::HeldOut).unwrap();
        assert_eq!(r.feature, s.world.centers[3]);
        assert!(matches!(s.reference(ReferenceSpec::Index(9)), Err(Error::Lookup(_))));
        let a = s.reference(ReferenceSpec::Novel(4)).unwrap();
        assert_eq!(a, s.reference(ReferenceSpec::Novel(4)).unwrap());
        let bad = IdentityReference { spec: ReferenceSpec::Novel(0), feature: vec![0.0; 3] };
        assert!(matches!(s.check_reference(&bad), Err(Error::Dimension { .. })));
    }

    #[test]
    fn context_rows_are_embedding_rows() {
        let s =
            TrainedStack::untrained(&WorldConfig::default(), &ArchConfig::default(), &TrainConfig::default()).unwrap();
        let e = s.context_for(Some(1)).unwrap();
        let table = s.params.get(s.layout.text_embed);
        assert_eq!(e.tokens.row(0), table.row(SUBJECT_TOKEN));
        assert_eq!(e.tokens.row(1), table.row(attribute_token(1)));
    }
}
