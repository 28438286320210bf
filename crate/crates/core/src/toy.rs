//! A deterministic, table-driven toy logit backend over a small vocabulary.
//!
//! Logits are a pure function of (model seed, conditioning context, generated
//! prefix): the context and prefix are canonically serialized, hashed with
//! SHA-256 together with the seed, and the digest seeds a ChaCha stream that
//! emits `vocab_size` values in [-10, 10]. The bound keeps softmax
//! well-conditioned for exact-enumeration tests, and the hash construction
//! makes the backend stable across processes and platforms.

use crate::guidance::{BackendError, LogitBackend};
use crate::tokens::{ConditioningContext, TokenSeq};
use rand_chacha::ChaCha8Rng;
use rand_core::{RngCore, SeedableRng};
use sha2::{Digest, Sha256};

/// Toy stand-in for a real autoregressive image-token model.
#[derive(Debug, Clone)]
pub struct ToyModel {
    vocab_size: usize,
    pad_id: u32,
    seed: u64,
    uniform: bool,
}

impl ToyModel {
    pub const DEFAULT_VOCAB: usize = 16;

    pub fn new(vocab_size: usize, pad_id: u32, seed: u64) -> Self {
        assert!(vocab_size >= 2, "toy vocab must have at least two tokens");
        assert!((pad_id as usize) < vocab_size);
        Self {
            vocab_size,
            pad_id,
            seed,
            uniform: false,
        }
    }

    /// A model that returns all-zero logits regardless of input: every token
    /// has probability `1 / vocab_size`.
    pub fn uniform(vocab_size: usize, pad_id: u32) -> Self {
        Self {
            uniform: true,
            ..Self::new(vocab_size, pad_id, 0)
        }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    /// Deterministic logits for a context and prefix.
    pub fn logits(&self, ctx: &ConditioningContext, prefix: &[u32]) -> Vec<f64> {
        if self.uniform {
            return vec![0.0; self.vocab_size];
        }
        let mut hasher = Sha256::new();
        hasher.update(self.seed.to_le_bytes());
        encode_context(&mut hasher, ctx);
        hasher.update((prefix.len() as u64).to_le_bytes());
        for &t in prefix {
            hasher.update(t.to_le_bytes());
        }
        let digest = hasher.finalize();
        let mut rng = ChaCha8Rng::from_seed(digest.into());
        (0..self.vocab_size)
            .map(|_| {
                let u = (rng.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64);
                u * 20.0 - 10.0
            })
            .collect()
    }
}

fn encode_seq(hasher: &mut Sha256, seq: &TokenSeq) {
    hasher.update([seq_role_tag(seq)]);
    hasher.update(seq.pad_id().to_le_bytes());
    hasher.update((seq.len() as u64).to_le_bytes());
    for &t in seq.tokens() {
        hasher.update(t.to_le_bytes());
    }
}

fn seq_role_tag(seq: &TokenSeq) -> u8 {
    match seq.role() {
        crate::tokens::TokenRole::Prompt => 1,
        crate::tokens::TokenRole::TargetImage => 2,
        crate::tokens::TokenRole::InputImage => 3,
    }
}

fn encode_context(hasher: &mut Sha256, ctx: &ConditioningContext) {
    encode_seq(hasher, &ctx.prompt);
    match &ctx.input_image {
        Some(seq) => {
            hasher.update([1u8]);
            encode_seq(hasher, seq);
        }
        None => hasher.update([0u8]),
    }
    match ctx.embedding {
        Some(handle) => {
            hasher.update([1u8]);
            hasher.update(handle.0.to_le_bytes());
        }
        None => hasher.update([0u8]),
    }
}

impl LogitBackend for ToyModel {
    fn vocab_size(&self) -> usize {
        self.vocab_size
    }

    fn pad_id(&self) -> u32 {
        self.pad_id
    }

    fn evaluate(&self, ctx: &ConditioningContext, prefix: &[u32]) -> Result<Vec<f64>, BackendError> {
        Ok(self.logits(ctx, prefix))
    }
}
