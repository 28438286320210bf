//! Token sequences, masking policies, and conditioning contexts for the
//! guided decoders.
//!
//! A prompt sequence S of length M conditions target-image tokens
//! X = (x_0..x_N); editing additionally conditions on input-image tokens
//! X-hat and an opaque semantic embedding. "Masked" always means replaced by
//! pad tokens (or a null embedding); the backend sees the padded sequence,
//! not a shorter one.

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum TokenError {
    #[error("token id {id} out of range for vocab size {vocab_size}")]
    OutOfRange { id: u32, vocab_size: u32 },
    #[error("pad id {0} must be < vocab size and never appear as a content token")]
    PadInContent(u32),
    #[error("mask fraction must lie in [0, 1], got {0}")]
    InvalidFraction(f64),
}

/// What a token sequence represents.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TokenRole {
    /// The text prompt S.
    Prompt,
    /// Target image tokens X.
    TargetImage,
    /// Input image tokens X-hat (editing only).
    InputImage,
}

/// A validated token sequence with its role and reserved pad id.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TokenSeq {
    tokens: Vec<u32>,
    role: TokenRole,
    pad_id: u32,
    vocab_size: u32,
}

impl TokenSeq {
    /// Builds a content sequence. Content tokens must be `< vocab_size` and
    /// must not use the reserved pad id.
    pub fn new(
        tokens: Vec<u32>,
        role: TokenRole,
        pad_id: u32,
        vocab_size: u32,
    ) -> Result<Self, TokenError> {
        if pad_id >= vocab_size {
            return Err(TokenError::OutOfRange {
                id: pad_id,
                vocab_size,
            });
        }
        for &t in &tokens {
            if t >= vocab_size {
                return Err(TokenError::OutOfRange {
                    id: t,
                    vocab_size,
                });
            }
            if t == pad_id {
                return Err(TokenError::PadInContent(pad_id));
            }
        }
        Ok(Self {
            tokens,
            role,
            pad_id,
            vocab_size,
        })
    }

    /// Builds a generated (target-image) sequence. Unlike [`TokenSeq::new`],
    /// sampled ids may legitimately include the pad id; only the vocab bound
    /// is enforced.
    pub fn generated(
        tokens: Vec<u32>,
        pad_id: u32,
        vocab_size: u32,
    ) -> Result<Self, TokenError> {
        if pad_id >= vocab_size {
            return Err(TokenError::OutOfRange {
                id: pad_id,
                vocab_size,
            });
        }
        for &t in &tokens {
            if t >= vocab_size {
                return Err(TokenError::OutOfRange {
                    id: t,
                    vocab_size,
                });
            }
        }
        Ok(Self {
            tokens,
            role: TokenRole::TargetImage,
            pad_id,
            vocab_size,
        })
    }

    pub fn tokens(&self) -> &[u32] {
        &self.tokens
    }

    pub fn role(&self) -> TokenRole {
        self.role
    }

    pub fn pad_id(&self) -> u32 {
        self.pad_id
    }

    pub fn vocab_size(&self) -> u32 {
        self.vocab_size
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    /// A same-length sequence with every position replaced by the pad id.
    pub fn fully_masked(&self) -> TokenSeq {
        TokenSeq {
            tokens: vec![self.pad_id; self.tokens.len()],
            ..self.clone()
        }
    }

    pub(crate) fn with_tokens(&self, tokens: Vec<u32>) -> TokenSeq {
        TokenSeq {
            tokens,
            ..self.clone()
        }
    }

    pub fn count_pad(&self) -> usize {
        self.tokens.iter().filter(|&&t| t == self.pad_id).count()
    }
}

/// How masking selects positions.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MaskMode {
    /// Each position is independently padded with probability `fraction`.
    PerTokenBernoulli,
    /// The whole sequence is padded with probability `fraction`.
    WholeConditionDrop,
}

/// A masking policy: mode plus masked fraction/probability.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MaskPolicy {
    pub mode: MaskMode,
    pub fraction: f64,
}

impl MaskPolicy {
    pub fn per_token(fraction: f64) -> Result<Self, TokenError> {
        Self::new(MaskMode::PerTokenBernoulli, fraction)
    }

    pub fn whole_drop(fraction: f64) -> Result<Self, TokenError> {
        Self::new(MaskMode::WholeConditionDrop, fraction)
    }

    pub fn new(mode: MaskMode, fraction: f64) -> Result<Self, TokenError> {
        if !(0.0..=1.0).contains(&fraction) || fraction.is_nan() {
            return Err(TokenError::InvalidFraction(fraction));
        }
        Ok(Self { mode, fraction })
    }
}

/// Applies a masking policy, returning a new sequence. Unmasked positions are
/// byte-identical to the input.
pub fn mask_tokens(seq: &TokenSeq, policy: &MaskPolicy, rng: &mut crate::rng::RngState) -> TokenSeq {
    match policy.mode {
        MaskMode::PerTokenBernoulli => {
            let tokens = seq
                .tokens
                .iter()
                .map(|&t| if rng.gen_bool(policy.fraction) { seq.pad_id } else { t })
                .collect();
            seq.with_tokens(tokens)
        }
        MaskMode::WholeConditionDrop => {
            if rng.gen_bool(policy.fraction) {
                seq.fully_masked()
            } else {
                seq.clone()
            }
        }
    }
}

/// Opaque handle to a semantic embedding E(I-hat). The embedding itself lives
/// behind the logit backend; this crate only routes the handle.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct EmbeddingHandle(pub u64);

/// Conditioning for one backend evaluation.
///
/// Text-to-image contexts carry only the prompt; editing contexts also carry
/// the input-image tokens and the semantic-embedding handle. A `None`
/// embedding means masked/null.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConditioningContext {
    pub prompt: TokenSeq,
    pub input_image: Option<TokenSeq>,
    pub embedding: Option<EmbeddingHandle>,
}

impl ConditioningContext {
    pub fn t2i(prompt: TokenSeq) -> Self {
        Self {
            prompt,
            input_image: None,
            embedding: None,
        }
    }

    pub fn ti2i(prompt: TokenSeq, input_image: TokenSeq, embedding: EmbeddingHandle) -> Self {
        Self {
            prompt,
            input_image: Some(input_image),
            embedding: Some(embedding),
        }
    }

    /// Prompt replaced by pad tokens; everything else kept.
    pub fn with_prompt_masked(&self) -> Self {
        Self {
            prompt: self.prompt.fully_masked(),
            ..self.clone()
        }
    }

    /// Input-image tokens replaced by pad tokens; embedding retained.
    pub fn with_input_image_masked(&self) -> Self {
        Self {
            input_image: self.input_image.as_ref().map(TokenSeq::fully_masked),
            ..self.clone()
        }
    }

    /// Every condition masked: padded prompt, padded input image, null
    /// embedding. This is the unconditional branch.
    pub fn fully_masked(&self) -> Self {
        Self {
            prompt: self.prompt.fully_masked(),
            input_image: self.input_image.as_ref().map(TokenSeq::fully_masked),
            embedding: None,
        }
    }
}
