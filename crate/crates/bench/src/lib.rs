//! Shared fixtures for the criterion benchmarks.

use distillforge_core::rng::RngState;
use distillforge_core::tokens::{ConditioningContext, TokenRole, TokenSeq};

pub fn demo_prompt(vocab: u32) -> TokenSeq {
    TokenSeq::new(vec![1, 2, 3, 4, 5], TokenRole::Prompt, 0, vocab).expect("valid demo prompt")
}

pub fn demo_context(vocab: u32) -> ConditioningContext {
    ConditioningContext::t2i(demo_prompt(vocab))
}

pub fn random_logits(seed: u64, dim: usize) -> Vec<f64> {
    let mut rng = RngState::new(seed);
    (0..dim).map(|_| rng.next_f64() * 20.0 - 10.0).collect()
}
