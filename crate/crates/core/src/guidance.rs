//! Classifier-free-guidance blends, temperature sampling, teacher-forced NLL,
//! and the autoregressive decode loops.
//!
//! Text-to-image guidance blends a conditional and an unconditional branch:
//!
//! ```text
//! l_g = l_u + s * (l_c - l_u)
//! ```
//!
//! Editing adds an input-image-adherence branch `l_o` (input image masked)
//! blended in two stages:
//!
//! ```text
//! l_c' = (l_c + s' * l_o) / (1 + s')
//! l_g  = l_u + s * (l_c' - l_u)
//! ```
//!
//! Lower `s'` preserves more of the original image; higher values allow more
//! creative deviation. Defaults are s = 5, s' = 5, temperature = 1.0. All
//! logit math is f64. `s = 1` and `s = 0` return the conditional and
//! unconditional branch bit-exactly, and `s' = 0` collapses the two-stage
//! blend to the plain text-to-image blend bit-exactly.

use crate::rng::RngState;
use crate::tokens::{ConditioningContext, EmbeddingHandle, MaskPolicy, TokenRole, TokenSeq};
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum GuidanceError {
    #[error("logit length mismatch: {left} vs {right}")]
    LengthMismatch { left: usize, right: usize },
    #[error("non-finite logit at index {0}")]
    NonFiniteLogit(usize),
    #[error("guidance scale must be nonnegative and finite, got {0}")]
    InvalidScale(f64),
    #[error("temperature must be positive and finite, got {0}")]
    InvalidTemperature(f64),
    #[error("n_tokens must be >= 1")]
    ZeroTokens,
    #[error("target sequence must have the target-image role")]
    WrongTargetRole,
    #[error("text-to-image decoding takes a prompt-only context")]
    UnexpectedInputImage,
    #[error("editing decode requires nonempty input-image tokens")]
    EmptyInputImage,
    #[error("sequence vocab size {seq} does not match backend vocab size {backend}")]
    VocabMismatch { seq: u32, backend: usize },
    #[error("backend error at step {step} after {} generated tokens: {source}", partial.len())]
    Backend {
        step: usize,
        partial: Vec<u32>,
        source: BackendError,
    },
}

/// Error surfaced by a logit backend.
#[derive(Debug, Error)]
#[error("{message}")]
pub struct BackendError {
    pub message: String,
    pub retryable: bool,
}

impl BackendError {
    pub fn new(message: impl Into<String>) -> Self {
        Self {
            message: message.into(),
            retryable: false,
        }
    }
}

/// Produces next-token logits for a conditioning context plus generated
/// prefix. Implementations must return exactly `vocab_size()` finite values
/// and, for the toy/mock backends, must be deterministic.
pub trait LogitBackend: Send + Sync {
    fn vocab_size(&self) -> usize;
    fn pad_id(&self) -> u32;
    fn evaluate(&self, ctx: &ConditioningContext, prefix: &[u32])
        -> Result<Vec<f64>, BackendError>;
}

/// Logit backend speaking HTTP: posts `{context, prefix}` as JSON and expects
/// a bare JSON array of `vocab_size` numbers back. For integration with
/// external model servers; the offline suites use [`crate::toy::ToyModel`].
pub struct HttpLogitBackend {
    endpoint: String,
    vocab_size: usize,
    pad_id: u32,
    client: reqwest::blocking::Client,
}

impl HttpLogitBackend {
    pub fn new(endpoint: &str, vocab_size: usize, pad_id: u32) -> Result<Self, BackendError> {
        Ok(Self {
            endpoint: endpoint.to_string(),
            vocab_size,
            pad_id,
            client: reqwest::blocking::Client::builder()
                .timeout(std::time::Duration::from_secs(120))
                .build()
                .map_err(|e| BackendError::new(e.to_string()))?,
        })
    }
}

impl LogitBackend for HttpLogitBackend {
    fn vocab_size(&self) -> usize {
        self.vocab_size
    }

    fn pad_id(&self) -> u32 {
        self.pad_id
    }

    fn evaluate(
        &self,
        ctx: &ConditioningContext,
        prefix: &[u32],
    ) -> Result<Vec<f64>, BackendError> {
        let retryable = |message: String| BackendError {
            message,
            retryable: true,
        };
        let response = self
            .client
            .post(&self.endpoint)
            .json(&serde_json::json!({"context": ctx, "prefix": prefix}))
            .send()
            .map_err(|e| retryable(e.to_string()))?;
        let code = response.status().as_u16();
        let text = response.text().map_err(|e| retryable(e.to_string()))?;
        if !(200..300).contains(&code) {
            return Err(BackendError {
                message: format!("status {code}: {}", text.chars().take(200).collect::<String>()),
                retryable: code == 429 || code >= 500,
            });
        }
        let logits: Vec<f64> = serde_json::from_str(&text)
            .map_err(|e| BackendError::new(format!("expected a JSON array of numbers: {e}")))?;
        if logits.len() != self.vocab_size {
            return Err(BackendError::new(format!(
                "expected {} logits, got {}",
                self.vocab_size,
                logits.len()
            )));
        }
        Ok(logits)
    }
}

/// Guidance scales and sampling temperature.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GuidanceParams {
    /// CFG scale s.
    pub s: f64,
    /// Input-image adherence scale s'.
    pub s_prime: f64,
    pub temperature: f64,
}

impl Default for GuidanceParams {
    fn default() -> Self {
        Self {
            s: 5.0,
            s_prime: 5.0,
            temperature: 1.0,
        }
    }
}

impl GuidanceParams {
    pub fn validate(&self) -> Result<(), GuidanceError> {
        if self.s < 0.0 || !self.s.is_finite() {
            return Err(GuidanceError::InvalidScale(self.s));
        }
        if self.s_prime < 0.0 || !self.s_prime.is_finite() {
            return Err(GuidanceError::InvalidScale(self.s_prime));
        }
        if self.temperature <= 0.0 || !self.temperature.is_finite() {
            return Err(GuidanceError::InvalidTemperature(self.temperature));
        }
        Ok(())
    }
}

fn check_same_len(a: &[f64], b: &[f64]) -> Result<(), GuidanceError> {
    if a.len() != b.len() {
        return Err(GuidanceError::LengthMismatch {
            left: a.len(),
            right: b.len(),
        });
    }
    Ok(())
}

/// Text-to-image blend `l_u + s * (l_c - l_u)`.
///
/// `s = 1` returns `l_c` and `s = 0` returns `l_u`, both bit-exactly.
pub fn t2i_guidance(l_c: &[f64], l_u: &[f64], s: f64) -> Result<Vec<f64>, GuidanceError> {
    check_same_len(l_c, l_u)?;
    if s == 1.0 {
        return Ok(l_c.to_vec());
    }
    if s == 0.0 {
        return Ok(l_u.to_vec());
    }
    Ok(l_c
        .iter()
        .zip(l_u)
        .map(|(&c, &u)| u + s * (c - u))
        .collect())
}

/// Editing blend: `l_c' = (l_c + s' * l_o) / (1 + s')`, then the
/// text-to-image blend of `l_c'` against `l_u`.
///
/// `s' = 0` collapses `l_c'` to `l_c` bit-exactly, reducing to
/// [`t2i_guidance`].
pub fn ti2i_guidance(
    l_c: &[f64],
    l_o: &[f64],
    l_u: &[f64],
    s: f64,
    s_prime: f64,
) -> Result<Vec<f64>, GuidanceError> {
    check_same_len(l_c, l_o)?;
    check_same_len(l_c, l_u)?;
    let blended = blend_input_adherence(l_c, l_o, s_prime);
    t2i_guidance(&blended, l_u, s)
}

fn blend_input_adherence(l_c: &[f64], l_o: &[f64], s_prime: f64) -> Vec<f64> {
    if s_prime == 0.0 {
        return l_c.to_vec();
    }
    l_c.iter()
        .zip(l_o)
        .map(|(&c, &o)| (c + s_prime * o) / (1.0 + s_prime))
        .collect()
}

/// Softmax of `logits / temperature`, stabilized by max subtraction. The max
/// is subtracted before the temperature division so that a common additive
/// shift of the logits cancels exactly.
pub fn softmax_temperature(logits: &[f64], temperature: f64) -> Result<Vec<f64>, GuidanceError> {
    if temperature <= 0.0 || !temperature.is_finite() {
        return Err(GuidanceError::InvalidTemperature(temperature));
    }
    if let Some(i) = logits.iter().position(|x| !x.is_finite()) {
        return Err(GuidanceError::NonFiniteLogit(i));
    }
    let max = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let mut out: Vec<f64> = logits
        .iter()
        .map(|&x| ((x - max) / temperature).exp())
        .collect();
    let sum: f64 = out.iter().sum();
    for p in &mut out {
        *p /= sum;
    }
    Ok(out)
}

/// Temperatures below this floor are clamped, so the limit behaves as argmax
/// without dividing by zero.
pub const TEMPERATURE_FLOOR: f64 = 1e-6;

/// Samples a token id from `softmax(logits / temperature)`.
pub fn temperature_sample(
    logits: &[f64],
    temperature: f64,
    rng: &mut RngState,
) -> Result<u32, GuidanceError> {
    if temperature <= 0.0 || !temperature.is_finite() {
        return Err(GuidanceError::InvalidTemperature(temperature));
    }
    let probs = softmax_temperature(logits, temperature.max(TEMPERATURE_FLOOR))?;
    let u = rng.next_f64();
    let mut acc = 0.0;
    for (i, &p) in probs.iter().enumerate() {
        acc += p;
        if u < acc {
            return Ok(i as u32);
        }
    }
    Ok((probs.len() - 1) as u32)
}

/// Which masking to apply to a conditioning context before evaluating the
/// teacher-forced loss (training-augmentation semantics).
#[derive(Debug, Clone, Copy, Default)]
pub struct ContextMask {
    pub prompt: Option<MaskPolicy>,
    pub input_image: Option<MaskPolicy>,
}

impl ContextMask {
    pub fn apply(&self, ctx: &ConditioningContext, rng: &mut RngState) -> ConditioningContext {
        let mut out = ctx.clone();
        if let Some(policy) = &self.prompt {
            out.prompt = crate::tokens::mask_tokens(&out.prompt, policy, rng);
        }
        if let (Some(policy), Some(image)) = (&self.input_image, &out.input_image) {
            out.input_image = Some(crate::tokens::mask_tokens(image, policy, rng));
        }
        out
    }
}

/// Teacher-forced negative log-likelihood of `target` under the backend.
///
/// Sums `-log P(x_i | x_<i, conditioning)` over the image positions only;
/// prompt and input-image tokens are conditioning, never loss terms. An
/// optional [`ContextMask`] is applied to the context first.
pub fn teacher_forced_nll(
    backend: &dyn LogitBackend,
    ctx: &ConditioningContext,
    target: &TokenSeq,
    mask: Option<(&ContextMask, &mut RngState)>,
) -> Result<f64, GuidanceError> {
    if target.role() != TokenRole::TargetImage {
        return Err(GuidanceError::WrongTargetRole);
    }
    let ctx = match mask {
        Some((m, rng)) => m.apply(ctx, rng),
        None => ctx.clone(),
    };
    let mut nll = 0.0;
    for (i, &tok) in target.tokens().iter().enumerate() {
        let logits = backend
            .evaluate(&ctx, &target.tokens()[..i])
            .map_err(|source| GuidanceError::Backend {
                step: i,
                partial: target.tokens()[..i].to_vec(),
                source,
            })?;
        let probs = softmax_temperature(&logits, 1.0)?;
        nll -= probs[tok as usize].ln();
    }
    Ok(nll)
}

/// Per-step trace of a guided decode, for demos and debugging.
#[derive(Debug, Clone, Serialize)]
pub struct StepTrace {
    pub step: usize,
    pub l_c: Vec<f64>,
    /// Input-adherence branch; editing mode only.
    pub l_o: Option<Vec<f64>>,
    pub l_u: Vec<f64>,
    /// First-stage blend; editing mode only.
    pub l_c_prime: Option<Vec<f64>>,
    pub l_g: Vec<f64>,
    pub chosen: u32,
}

/// Guided logits for one text-to-image step: conditional branch on `ctx`,
/// unconditional branch on the fully-masked context.
pub fn t2i_step_logits(
    backend: &dyn LogitBackend,
    ctx: &ConditioningContext,
    uncond: &ConditioningContext,
    prefix: &[u32],
    s: f64,
) -> Result<(Vec<f64>, Vec<f64>, Vec<f64>), GuidanceError> {
    let at = |step: usize, source: BackendError| GuidanceError::Backend {
        step,
        partial: prefix.to_vec(),
        source,
    };
    let l_c = backend.evaluate(ctx, prefix).map_err(|e| at(prefix.len(), e))?;
    let l_u = backend
        .evaluate(uncond, prefix)
        .map_err(|e| at(prefix.len(), e))?;
    let l_g = t2i_guidance(&l_c, &l_u, s)?;
    Ok((l_c, l_u, l_g))
}

/// Autoregressive text-to-image decode: two backend evaluations per step
/// (conditional, prompt-masked), blended by [`t2i_guidance`] and sampled by
/// [`temperature_sample`]. The generated prefix feeds back into both branches.
pub fn decode_t2i(
    backend: &dyn LogitBackend,
    prompt: &TokenSeq,
    params: &GuidanceParams,
    n_tokens: usize,
    rng: &mut RngState,
) -> Result<TokenSeq, GuidanceError> {
    Ok(decode_t2i_traced(backend, prompt, params, n_tokens, rng, false)?.0)
}

/// [`decode_t2i`] that also returns per-step traces when `trace` is set.
pub fn decode_t2i_traced(
    backend: &dyn LogitBackend,
    prompt: &TokenSeq,
    params: &GuidanceParams,
    n_tokens: usize,
    rng: &mut RngState,
    trace: bool,
) -> Result<(TokenSeq, Vec<StepTrace>), GuidanceError> {
    params.validate()?;
    if n_tokens == 0 {
        return Err(GuidanceError::ZeroTokens);
    }
    check_vocab(prompt, backend)?;
    let ctx = ConditioningContext::t2i(prompt.clone());
    let uncond = ctx.fully_masked();
    let mut generated: Vec<u32> = Vec::with_capacity(n_tokens);
    let mut traces = Vec::new();
    for step in 0..n_tokens {
        let (l_c, l_u, l_g) = t2i_step_logits(backend, &ctx, &uncond, &generated, params.s)
            .map_err(|e| retag_step(e, step, &generated))?;
        let chosen = temperature_sample(&l_g, params.temperature, rng)?;
        if trace {
            traces.push(StepTrace {
                step,
                l_c,
                l_o: None,
                l_u,
                l_c_prime: None,
                l_g,
                chosen,
            });
        }
        generated.push(chosen);
    }
    let seq = finish_target(backend, prompt, generated);
    Ok((seq, traces))
}

/// Guided logits for one editing step: full-context, input-image-masked, and
/// fully-masked branches blended by [`ti2i_guidance`]. Returns
/// `(l_c, l_o, l_u, l_c_prime, l_g)`.
#[allow(clippy::type_complexity)]
pub fn ti2i_step_logits(
    backend: &dyn LogitBackend,
    full: &ConditioningContext,
    input_masked: &ConditioningContext,
    uncond: &ConditioningContext,
    prefix: &[u32],
    s: f64,
    s_prime: f64,
) -> Result<(Vec<f64>, Vec<f64>, Vec<f64>, Vec<f64>, Vec<f64>), GuidanceError> {
    let at = |source: BackendError| GuidanceError::Backend {
        step: prefix.len(),
        partial: prefix.to_vec(),
        source,
    };
    let l_c = backend.evaluate(full, prefix).map_err(at)?;
    let l_o = backend.evaluate(input_masked, prefix).map_err(at)?;
    let l_u = backend.evaluate(uncond, prefix).map_err(at)?;
    check_same_len(&l_c, &l_o)?;
    check_same_len(&l_c, &l_u)?;
    let l_c_prime = blend_input_adherence(&l_c, &l_o, s_prime);
    let l_g = t2i_guidance(&l_c_prime, &l_u, s)?;
    Ok((l_c, l_o, l_u, l_c_prime, l_g))
}

/// Autoregressive editing decode: three backend evaluations per step (full
/// context; input image masked with embedding retained; everything masked),
/// blended by [`ti2i_guidance`] then sampled.
pub fn decode_ti2i(
    backend: &dyn LogitBackend,
    prompt: &TokenSeq,
    input_image: &TokenSeq,
    embedding: EmbeddingHandle,
    params: &GuidanceParams,
    n_tokens: usize,
    rng: &mut RngState,
) -> Result<TokenSeq, GuidanceError> {
    Ok(decode_ti2i_traced(
        backend,
        prompt,
        input_image,
        embedding,
        params,
        n_tokens,
        rng,
        false,
    )?
    .0)
}

/// [`decode_ti2i`] that also returns per-step traces when `trace` is set.
#[allow(clippy::too_many_arguments)]
pub fn decode_ti2i_traced(
    backend: &dyn LogitBackend,
    prompt: &TokenSeq,
    input_image: &TokenSeq,
    embedding: EmbeddingHandle,
    params: &GuidanceParams,
    n_tokens: usize,
    rng: &mut RngState,
    trace: bool,
) -> Result<(TokenSeq, Vec<StepTrace>), GuidanceError> {
    params.validate()?;
    if n_tokens == 0 {
        return Err(GuidanceError::ZeroTokens);
    }
    if input_image.is_empty() {
        return Err(GuidanceError::EmptyInputImage);
    }
    check_vocab(prompt, backend)?;
    check_vocab(input_image, backend)?;
    let full = ConditioningContext::ti2i(prompt.clone(), input_image.clone(), embedding);
    let input_masked = full.with_input_image_masked();
    let uncond = full.fully_masked();
    let mut generated: Vec<u32> = Vec::with_capacity(n_tokens);
    let mut traces = Vec::new();
    for step in 0..n_tokens {
        let (l_c, l_o, l_u, l_c_prime, l_g) = ti2i_step_logits(
            backend,
            &full,
            &input_masked,
            &uncond,
            &generated,
            params.s,
            params.s_prime,
        )
        .map_err(|e| retag_step(e, step, &generated))?;
        let chosen = temperature_sample(&l_g, params.temperature, rng)?;
        if trace {
            traces.push(StepTrace {
                step,
                l_c,
                l_o: Some(l_o),
                l_u,
                l_c_prime: Some(l_c_prime),
                l_g,
                chosen,
            });
        }
        generated.push(chosen);
    }
    let seq = finish_target(backend, prompt, generated);
    Ok((seq, traces))
}

fn retag_step(err: GuidanceError, step: usize, generated: &[u32]) -> GuidanceError {
    match err {
        GuidanceError::Backend { source, .. } => GuidanceError::Backend {
            step,
            partial: generated.to_vec(),
            source,
        },
        other => other,
    }
}

fn check_vocab(seq: &TokenSeq, backend: &dyn LogitBackend) -> Result<(), GuidanceError> {
    if seq.vocab_size() as usize != backend.vocab_size() {
        return Err(GuidanceError::VocabMismatch {
            seq: seq.vocab_size(),
            backend: backend.vocab_size(),
        });
    }
    Ok(())
}

fn finish_target(backend: &dyn LogitBackend, prompt: &TokenSeq, generated: Vec<u32>) -> TokenSeq {
    TokenSeq::generated(generated, prompt.pad_id(), backend.vocab_size() as u32)
        .expect("sampled ids are bounded by the backend vocab")
}
