//! The six-dimensional text-to-image attribute vocabulary.
//!
//! A vocabulary is a flat object list plus five scene dimensions, each split
//! into named sub-dimensions holding phrase lists. The bundled default ships
//! in `data/vocabulary.json` (1,000 object category names and three
//! sub-dimensions per scene dimension) and is embedded in the binary.

use serde::{Deserialize, Serialize};
use std::collections::HashSet;
use std::path::Path;
use thiserror::Error;

/// The five scene dimensions, in canonical order. `objects` is the sixth
/// dimension but is structurally a flat list, so it lives beside these.
pub const SCENE_DIMENSIONS: [&str; 5] =
    ["background", "style", "lighting", "viewpoint", "composition"];

const BUNDLED_VOCABULARY: &str = include_str!("../../../data/vocabulary.json");

#[derive(Debug, Error)]
pub enum VocabularyError {
    #[error("failed to read vocabulary file {path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
    #[error("malformed vocabulary file: {0}")]
    Parse(#[from] serde_json::Error),
    #[error("missing dimension: {0}")]
    MissingDimension(String),
    #[error("duplicate dimension name: {0}")]
    DuplicateDimension(String),
    #[error("unknown dimension: {0} (expected background, style, lighting, viewpoint, composition)")]
    UnknownDimension(String),
    #[error("dimension {dimension} has no subdimensions")]
    NoSubdimensions { dimension: String },
    #[error("empty value list in {dimension}/{subdimension}")]
    EmptyValues {
        dimension: String,
        subdimension: String,
    },
    #[error("empty phrase in {dimension}/{subdimension}")]
    EmptyPhrase {
        dimension: String,
        subdimension: String,
    },
}

/// A named sub-dimension holding its phrase list.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Subdimension {
    pub name: String,
    pub values: Vec<String>,
}

/// One scene dimension with its sub-dimensions.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AttributeDimension {
    pub name: String,
    pub subdimensions: Vec<Subdimension>,
}

/// The full attribute vocabulary: objects plus the five scene dimensions.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Vocabulary {
    pub objects: Vec<String>,
    pub dimensions: Vec<AttributeDimension>,
}

impl Vocabulary {
    /// The default vocabulary shipped with the crate.
    pub fn bundled() -> Vocabulary {
        Vocabulary::from_json(BUNDLED_VOCABULARY)
            .expect("bundled vocabulary is validated by tests")
    }

    /// Loads and validates a vocabulary from a JSON file.
    pub fn load(path: &Path) -> Result<Vocabulary, VocabularyError> {
        let text = std::fs::read_to_string(path).map_err(|source| VocabularyError::Io {
            path: path.display().to_string(),
            source,
        })?;
        Vocabulary::from_json(&text)
    }

    /// Parses and validates vocabulary JSON.
    pub fn from_json(text: &str) -> Result<Vocabulary, VocabularyError> {
        let vocab: Vocabulary = serde_json::from_str(text)?;
        vocab.validate()?;
        Ok(vocab)
    }

    /// Looks up a scene dimension by name.
    pub fn dimension(&self, name: &str) -> Option<&AttributeDimension> {
        self.dimensions.iter().find(|d| d.name == name)
    }

    fn validate(&self) -> Result<(), VocabularyError> {
        if self.objects.is_empty() {
            return Err(VocabularyError::MissingDimension("objects".into()));
        }
        if self.objects.iter().any(|o| o.trim().is_empty()) {
            return Err(VocabularyError::EmptyPhrase {
                dimension: "objects".into(),
                subdimension: "objects".into(),
            });
        }
        let mut seen = HashSet::new();
        for dim in &self.dimensions {
            if !SCENE_DIMENSIONS.contains(&dim.name.as_str()) {
                return Err(VocabularyError::UnknownDimension(dim.name.clone()));
            }
            if !seen.insert(dim.name.clone()) {
                return Err(VocabularyError::DuplicateDimension(dim.name.clone()));
            }
            if dim.subdimensions.is_empty() {
                return Err(VocabularyError::NoSubdimensions {
                    dimension: dim.name.clone(),
                });
            }
            for sub in &dim.subdimensions {
                if sub.values.is_empty() {
                    return Err(VocabularyError::EmptyValues {
                        dimension: dim.name.clone(),
                        subdimension: sub.name.clone(),
                    });
                }
                if sub.values.iter().any(|v| v.trim().is_empty()) {
                    return Err(VocabularyError::EmptyPhrase {
                        dimension: dim.name.clone(),
                        subdimension: sub.name.clone(),
                    });
                }
            }
        }
        for required in SCENE_DIMENSIONS {
            if !seen.contains(required) {
                return Err(VocabularyError::MissingDimension(required.into()));
            }
        }
        Ok(())
    }
}
