//! Brute-force oracle for the guided decoders.
//!
//! Everything here re-derives the guidance math with straight-line arithmetic
//! and shares no code with the `guidance` module: the blends, the softmax,
//! and the chain-rule products are transcribed independently so the two
//! implementations check each other. Refactors of `guidance` must leave this
//! file untouched.

use crate::guidance::GuidanceParams;
use crate::tokens::ConditioningContext;
use crate::toy::ToyModel;

/// Which decode the oracle mirrors.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GuidanceMode {
    T2i,
    Ti2i,
}

/// Next-token probabilities for one guided step, computed from scratch.
///
/// Evaluates each branch on the toy model, applies the guidance formulas
/// literally, divides by temperature, and normalizes. `ctx` is the full
/// (unmasked) conditioning context; the oracle constructs its own masked
/// branches.
pub fn brute_force_guided_step(
    model: &ToyModel,
    ctx: &ConditioningContext,
    prefix: &[u32],
    params: &GuidanceParams,
    mode: GuidanceMode,
) -> Vec<f64> {
    let guided = match mode {
        GuidanceMode::T2i => {
            let l_c = model.logits(ctx, prefix);
            let masked = ConditioningContext {
                prompt: pad_out(&ctx.prompt),
                input_image: ctx.input_image.as_ref().map(pad_out),
                embedding: None,
            };
            let l_u = model.logits(&masked, prefix);
            let mut l_g = vec![0.0; l_c.len()];
            for i in 0..l_c.len() {
                l_g[i] = l_u[i] + params.s * (l_c[i] - l_u[i]);
            }
            l_g
        }
        GuidanceMode::Ti2i => {
            let l_c = model.logits(ctx, prefix);
            let input_masked = ConditioningContext {
                prompt: ctx.prompt.clone(),
                input_image: ctx.input_image.as_ref().map(pad_out),
                embedding: ctx.embedding,
            };
            let l_o = model.logits(&input_masked, prefix);
            let all_masked = ConditioningContext {
                prompt: pad_out(&ctx.prompt),
                input_image: ctx.input_image.as_ref().map(pad_out),
                embedding: None,
            };
            let l_u = model.logits(&all_masked, prefix);
            let mut l_g = vec![0.0; l_c.len()];
            for i in 0..l_c.len() {
                let l_c_prime = (l_c[i] + params.s_prime * l_o[i]) / (1.0 + params.s_prime);
                l_g[i] = l_u[i] + params.s * (l_c_prime - l_u[i]);
            }
            l_g
        }
    };

    // Tempered softmax, written out longhand.
    let mut max = f64::NEG_INFINITY;
    for &x in &guided {
        if x > max {
            max = x;
        }
    }
    let mut probs = vec![0.0; guided.len()];
    let mut sum = 0.0;
    for (p, &x) in probs.iter_mut().zip(&guided) {
        *p = ((x - max) / params.temperature).exp();
        sum += *p;
    }
    for p in &mut probs {
        *p /= sum;
    }
    probs
}

/// Exact probability of a full generated sequence under guided decoding:
/// the chain-rule product of per-step oracle distributions.
pub fn brute_force_sequence_probability(
    model: &ToyModel,
    ctx: &ConditioningContext,
    sequence: &[u32],
    params: &GuidanceParams,
    mode: GuidanceMode,
) -> f64 {
    let mut prob = 1.0;
    for (i, &tok) in sequence.iter().enumerate() {
        let step = brute_force_guided_step(model, ctx, &sequence[..i], params, mode);
        prob *= step[tok as usize];
    }
    prob
}

/// Teacher-forced NLL computed from scratch on the toy model: the sum of
/// `-ln softmax(logits)[target_i]` with plain (untempered) softmax.
pub fn brute_force_nll(model: &ToyModel, ctx: &ConditioningContext, target: &[u32]) -> f64 {
    let mut nll = 0.0;
    for (i, &tok) in target.iter().enumerate() {
        let logits = model.logits(ctx, &target[..i]);
        let mut max = f64::NEG_INFINITY;
        for &x in &logits {
            if x > max {
                max = x;
            }
        }
        let mut sum = 0.0;
        let mut exps = vec![0.0; logits.len()];
        for (e, &x) in exps.iter_mut().zip(&logits) {
            *e = (x - max).exp();
            sum += *e;
        }
        nll -= (exps[tok as usize] / sum).ln();
    }
    nll
}

fn pad_out(seq: &crate::tokens::TokenSeq) -> crate::tokens::TokenSeq {
    seq.fully_masked()
}
