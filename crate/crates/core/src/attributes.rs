//! Attribute-space sampling: the exponentially decaying object-count
//! distribution and bundle construction over a [`Vocabulary`].
//!
//! The object count `k` is drawn from weights `w(x) = exp(-lambda * (x - 1))`
//! over `x` in `[1, k_max]`. Larger `lambda` means faster decay toward small
//! object counts; `lambda = 0` is uniform.

use crate::rng::RngState;
use crate::vocabulary::{Vocabulary, SCENE_DIMENSIONS};
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum AttributeError {
    #[error("lambda must be nonnegative, got {0}")]
    NegativeLambda(f64),
    #[error("lambda must be finite")]
    NonFiniteLambda,
    #[error("k_max must be >= 1, got {0}")]
    InvalidKMax(usize),
    #[error("vocabulary has no objects")]
    EmptyVocabulary,
    #[error("dropout probability must lie in [0, 1], got {0}")]
    InvalidDropout(f64),
}

/// Exponential-decay distribution over object counts `1..=k_max`.
///
/// Weights are precomputed and normalized at construction.
#[derive(Debug, Clone)]
pub struct DecayDistribution {
    lambda: f64,
    k_max: usize,
    weights: Vec<f64>,
    cumulative: Vec<f64>,
}

impl DecayDistribution {
    pub const DEFAULT_LAMBDA: f64 = 0.5;
    pub const DEFAULT_K_MAX: usize = 100;

    pub fn new(lambda: f64, k_max: usize) -> Result<Self, AttributeError> {
        if !lambda.is_finite() {
            return Err(AttributeError::NonFiniteLambda);
        }
        if lambda < 0.0 {
            return Err(AttributeError::NegativeLambda(lambda));
        }
        if k_max < 1 {
            return Err(AttributeError::InvalidKMax(k_max));
        }
        let raw: Vec<f64> = (1..=k_max)
            .map(|x| (-lambda * (x as f64 - 1.0)).exp())
            .collect();
        let total: f64 = raw.iter().sum();
        let weights: Vec<f64> = raw.iter().map(|w| w / total).collect();
        let mut cumulative = Vec::with_capacity(k_max);
        let mut acc = 0.0;
        for w in &weights {
            acc += w;
            cumulative.push(acc);
        }
        // Guard the final bin against rounding so inverse-CDF lookup is total.
        if let Some(last) = cumulative.last_mut() {
            *last = 1.0;
        }
        Ok(Self {
            lambda,
            k_max,
            weights,
            cumulative,
        })
    }

    pub fn lambda(&self) -> f64 {
        self.lambda
    }

    pub fn k_max(&self) -> usize {
        self.k_max
    }

    /// Normalized probabilities for `k = 1..=k_max`. Entry `i` is `P(k = i+1)`.
    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    /// Draws an object count in `[1, k_max]`.
    pub fn sample_k(&self, rng: &mut RngState) -> usize {
        let u = rng.next_f64();
        let idx = self.cumulative.partition_point(|&c| c <= u);
        idx.min(self.k_max - 1) + 1
    }
}

/// One sampled (sub-dimension, phrase) choice for a scene dimension.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DimensionChoice {
    pub subdimension: String,
    pub phrase: String,
}

/// One sampled point of the six-dimensional attribute space.
///
/// Scene dimensions are `None` only when per-dimension dropout is enabled;
/// with the default dropout of 0 all five are present.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AttributeBundle {
    pub objects: Vec<String>,
    pub background: Option<DimensionChoice>,
    pub style: Option<DimensionChoice>,
    pub lighting: Option<DimensionChoice>,
    pub viewpoint: Option<DimensionChoice>,
    pub composition: Option<DimensionChoice>,
}

impl AttributeBundle {
    /// Scene choices in canonical order, paired with their dimension name.
    pub fn scene_choices(&self) -> [(&'static str, Option<&DimensionChoice>); 5] {
        [
            ("background", self.background.as_ref()),
            ("style", self.style.as_ref()),
            ("lighting", self.lighting.as_ref()),
            ("viewpoint", self.viewpoint.as_ref()),
            ("composition", self.composition.as_ref()),
        ]
    }

    /// Every phrase in the bundle, objects first.
    pub fn phrases(&self) -> Vec<&str> {
        let mut out: Vec<&str> = self.objects.iter().map(String::as_str).collect();
        for (_, choice) in self.scene_choices() {
            if let Some(c) = choice {
                out.push(&c.phrase);
            }
        }
        out
    }
}

/// Samples a full attribute bundle.
///
/// `k` objects are drawn without replacement (capped at the object-vocabulary
/// size); each scene dimension picks a sub-dimension uniformly, then a phrase
/// uniformly within it. `dropout` is the per-dimension probability of leaving
/// a scene dimension out (0 keeps all five).
pub fn sample_bundle(
    vocab: &Vocabulary,
    dist: &DecayDistribution,
    dropout: f64,
    rng: &mut RngState,
) -> Result<AttributeBundle, AttributeError> {
    if vocab.objects.is_empty() {
        return Err(AttributeError::EmptyVocabulary);
    }
    if !(0.0..=1.0).contains(&dropout) {
        return Err(AttributeError::InvalidDropout(dropout));
    }
    let k = dist.sample_k(rng).min(vocab.objects.len());
    let objects = sample_without_replacement(&vocab.objects, k, rng);

    let mut choices: [Option<DimensionChoice>; 5] = Default::default();
    for (slot, name) in choices.iter_mut().zip(SCENE_DIMENSIONS) {
        let dim = vocab
            .dimension(name)
            .expect("validated vocabulary has all scene dimensions");
        // Consume the dropout draw unconditionally so the stream layout does
        // not depend on the outcome.
        let dropped = dropout > 0.0 && rng.gen_bool(dropout);
        let sub = &dim.subdimensions[rng.gen_index(dim.subdimensions.len())];
        let phrase = sub.values[rng.gen_index(sub.values.len())].clone();
        if !dropped {
            *slot = Some(DimensionChoice {
                subdimension: sub.name.clone(),
                phrase,
            });
        }
    }
    let [background, style, lighting, viewpoint, composition] = choices;
    Ok(AttributeBundle {
        objects,
        background,
        style,
        lighting,
        viewpoint,
        composition,
    })
}

fn sample_without_replacement(pool: &[String], k: usize, rng: &mut RngState) -> Vec<String> {
    debug_assert!(k <= pool.len());
    // Partial Fisher-Yates over an index vector.
    let mut indices: Vec<usize> = (0..pool.len()).collect();
    let mut out = Vec::with_capacity(k);
    for i in 0..k {
        let j = i + rng.gen_index(pool.len() - i);
        indices.swap(i, j);
        out.push(pool[indices[i]].clone());
    }
    out
}

/// Renders a bundle into a fixed grammatical sentence.
///
/// This is the deterministic offline fallback for LLM composition. Each slot
/// has a fixed position and carries its sub-dimension tag, so distinct bundles
/// always render to distinct text.
pub fn bundle_to_template_prompt(bundle: &AttributeBundle) -> String {
    let objects = bundle.objects.join(", ");
    let mut text = format!("A scene featuring {objects}");
    let connectors = [
        ("set against", "background"),
        ("rendered as", "style"),
        ("lit by", "lighting"),
        ("seen from", "viewpoint"),
        ("arranged with", "composition"),
    ];
    for ((connector, label), (_, choice)) in connectors.iter().zip(bundle.scene_choices()) {
        if let Some(c) = choice {
            text.push_str(&format!(
                ", {connector} {phrase} [{label}: {sub}]",
                phrase = c.phrase,
                sub = c.subdimension
            ));
        }
    }
    text.push('.');
    text
}

#[cfg(test)]
mod tests {
    use super::*;

    fn singleton_vocab() -> Vocabulary {
        let json = serde_json::json!({
            "objects": ["goldfish"],
            "dimensions": SCENE_DIMENSIONS.iter().map(|name| {
                serde_json::json!({
                    "name": name,
                    "subdimensions": [{"name": format!("only-{name}"), "values": [format!("the {name} phrase")]}],
                })
            }).collect::<Vec<_>>(),
        });
        Vocabulary::from_json(&json.to_string()).unwrap()
    }

    #[test]
    fn decay_weights_uniform_at_lambda_zero() {
        let dist = DecayDistribution::new(0.0, 100).unwrap();
        for &w in dist.weights() {
            assert!((w - 0.01).abs() < 1e-15);
        }
    }

    #[test]
    fn decay_weights_lambda_one_matches_hand_computation() {
        // exp(0), exp(-1), exp(-2) normalized by their sum.
        let dist = DecayDistribution::new(1.0, 3).unwrap();
        let raw = [1.0_f64, (-1.0_f64).exp(), (-2.0_f64).exp()];
        let total: f64 = raw.iter().sum();
        let expected = [raw[0] / total, raw[1] / total, raw[2] / total];
        for (w, e) in dist.weights().iter().zip(expected) {
            assert!((w - e).abs() < 1e-12, "{w} vs {e}");
        }
        // Values quoted to 5 decimal places.
        assert!((dist.weights()[0] - 0.66524).abs() < 5e-6);
        assert!((dist.weights()[1] - 0.24473).abs() < 5e-6);
        assert!((dist.weights()[2] - 0.09003).abs() < 5e-6);
    }

    #[test]
    fn extreme_decay_concentrates_on_one() {
        let dist = DecayDistribution::new(50.0, 100).unwrap();
        // In f64 the head weight rounds to exactly 1.0 (the tail is ~1.9e-22,
        // far below machine epsilon), which satisfies P(1) > 1 - 1e-20.
        assert!(dist.weights()[0] >= 1.0 - 1e-20);
        assert!(dist.weights()[0] <= 1.0);
        let mut rng = RngState::new(11);
        for _ in 0..100_000 {
            assert_eq!(dist.sample_k(&mut rng), 1);
        }
    }

    #[test]
    fn negative_lambda_rejected() {
        assert!(matches!(
            DecayDistribution::new(-0.1, 10),
            Err(AttributeError::NegativeLambda(_))
        ));
    }

    #[test]
    fn weights_sum_to_one_and_ratio_holds() {
        for lambda in [0.0, 0.1, 0.5, 1.0, 10.0, 100.0] {
            for k_max in [1usize, 2, 7, 100, 1000] {
                let dist = DecayDistribution::new(lambda, k_max).unwrap();
                let sum: f64 = dist.weights().iter().sum();
                assert!((sum - 1.0).abs() < 1e-12, "lambda={lambda} k_max={k_max}");
            }
        }
        let dist = DecayDistribution::new(0.7, 50).unwrap();
        let ratio = (-0.7_f64).exp();
        for pair in dist.weights().windows(2) {
            assert!((pair[1] / pair[0] - ratio).abs() < 1e-9);
        }
    }

    #[test]
    fn sample_k_deterministic_and_in_range() {
        let dist = DecayDistribution::new(0.5, 100).unwrap();
        let draw = |seed| {
            let mut rng = RngState::new(seed);
            (0..1000).map(|_| dist.sample_k(&mut rng)).collect::<Vec<_>>()
        };
        let a = draw(99);
        assert_eq!(a, draw(99));
        assert!(a.iter().all(|&k| (1..=100).contains(&k)));
    }

    #[test]
    fn sample_k_empirical_matches_closed_form() {
        let dist = DecayDistribution::new(0.5, 100).unwrap();
        let mut rng = RngState::new(2024);
        let n = 1_000_000;
        let mut counts = vec![0u64; 100];
        for _ in 0..n {
            counts[dist.sample_k(&mut rng) - 1] += 1;
        }
        let l1: f64 = counts
            .iter()
            .zip(dist.weights())
            .map(|(&c, &w)| (c as f64 / n as f64 - w).abs())
            .sum();
        assert!(l1 < 0.01, "L1 = {l1}");
    }

    #[test]
    fn singleton_vocabulary_yields_unique_bundle() {
        let vocab = singleton_vocab();
        let dist = DecayDistribution::new(50.0, 100).unwrap();
        let mut rng = RngState::new(1);
        let first = sample_bundle(&vocab, &dist, 0.0, &mut rng).unwrap();
        for _ in 0..100 {
            let next = sample_bundle(&vocab, &dist, 0.0, &mut rng).unwrap();
            assert_eq!(first, next);
        }
        assert_eq!(first.objects, vec!["goldfish".to_string()]);
    }

    #[test]
    fn bundles_are_deterministic_given_seed() {
        let vocab = Vocabulary::bundled();
        let dist = DecayDistribution::new(0.5, 100).unwrap();
        let mut a = RngState::new(77);
        let mut b = RngState::new(77);
        for _ in 0..50 {
            assert_eq!(
                sample_bundle(&vocab, &dist, 0.0, &mut a).unwrap(),
                sample_bundle(&vocab, &dist, 0.0, &mut b).unwrap()
            );
        }
    }

    #[test]
    fn objects_are_pairwise_distinct() {
        let vocab = Vocabulary::bundled();
        let dist = DecayDistribution::new(0.05, 100).unwrap();
        let mut rng = RngState::new(5);
        for _ in 0..500 {
            let b = sample_bundle(&vocab, &dist, 0.0, &mut rng).unwrap();
            let set: std::collections::HashSet<_> = b.objects.iter().collect();
            assert_eq!(set.len(), b.objects.len());
        }
    }

    #[test]
    fn subdimension_marginals_are_uniform() {
        let vocab = Vocabulary::bundled();
        let dist = DecayDistribution::new(0.5, 100).unwrap();
        let mut rng = RngState::new(31337);
        let n = 100_000;
        let mut counts: std::collections::HashMap<String, u64> = Default::default();
        for _ in 0..n {
            let b = sample_bundle(&vocab, &dist, 0.0, &mut rng).unwrap();
            for (_, choice) in b.scene_choices() {
                *counts.entry(choice.unwrap().subdimension.clone()).or_default() += 1;
            }
        }
        // Three sub-dimensions per dimension: expect 1/3 each.
        for (sub, count) in counts {
            let freq = count as f64 / n as f64;
            assert!((freq - 1.0 / 3.0).abs() < 0.01, "{sub}: {freq}");
        }
    }

    #[test]
    fn full_dropout_leaves_objects_only() {
        let vocab = Vocabulary::bundled();
        let dist = DecayDistribution::new(0.5, 100).unwrap();
        let mut rng = RngState::new(8);
        let b = sample_bundle(&vocab, &dist, 1.0, &mut rng).unwrap();
        assert!(b.background.is_none() && b.style.is_none() && b.lighting.is_none());
        assert!(!b.objects.is_empty());
        assert!(bundle_to_template_prompt(&b).starts_with("A scene featuring"));
    }

    #[test]
    fn template_contains_every_phrase() {
        let vocab = Vocabulary::bundled();
        let dist = DecayDistribution::new(0.3, 100).unwrap();
        let mut rng = RngState::new(13);
        for _ in 0..200 {
            let b = sample_bundle(&vocab, &dist, 0.0, &mut rng).unwrap();
            let text = bundle_to_template_prompt(&b);
            for phrase in b.phrases() {
                assert!(text.contains(phrase), "missing {phrase:?} in {text:?}");
            }
        }
    }

    #[test]
    fn template_is_injective_on_single_field_changes() {
        let vocab = singleton_vocab();
        let dist = DecayDistribution::new(50.0, 100).unwrap();
        let mut rng = RngState::new(2);
        let base = sample_bundle(&vocab, &dist, 0.0, &mut rng).unwrap();
        let mut changed = base.clone();
        changed.lighting = Some(DimensionChoice {
            subdimension: "only-lighting".into(),
            phrase: "a different lighting phrase".into(),
        });
        assert_ne!(
            bundle_to_template_prompt(&base),
            bundle_to_template_prompt(&changed)
        );
        // Same phrase under a different sub-dimension still renders distinctly.
        let mut resubbed = base.clone();
        resubbed.lighting = Some(DimensionChoice {
            subdimension: "alternate".into(),
            phrase: base.lighting.as_ref().unwrap().phrase.clone(),
        });
        assert_ne!(
            bundle_to_template_prompt(&base),
            bundle_to_template_prompt(&resubbed)
        );
    }
}
