//! The editing-task taxonomy: 14 tasks in 5 weighted categories, plus
//! (task, source image) sampling for triplet generation.

use crate::rng::RngState;
use serde::{Deserialize, Serialize};
use std::path::{Path, PathBuf};
use thiserror::Error;

const BUNDLED_TAXONOMY: &str = include_str!("../../../data/edit_taxonomy.json");

#[derive(Debug, Error)]
pub enum TaxonomyError {
    #[error("failed to read taxonomy file {path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
    #[error("malformed taxonomy file: {0}")]
    Parse(#[from] serde_json::Error),
    #[error("category {0} has zero subcategories")]
    NoSubcategories(String),
    #[error("category weights are not normalizable (sum must be > 0 and finite)")]
    NotNormalizable,
    #[error("negative weight on category {0}")]
    NegativeWeight(String),
    #[error("duplicate category name: {0}")]
    DuplicateCategory(String),
    #[error(
        "subcategory weights for {category} must match subcategory count ({expected}, got {got})"
    )]
    SubWeightMismatch {
        category: String,
        expected: usize,
        got: usize,
    },
    #[error("both source pools are empty")]
    EmptyPools,
    #[error("unknown task: {category} / {subcategory}")]
    UnknownTask {
        category: String,
        subcategory: String,
    },
}

/// One taxonomy category with its subcategories and sampling weight.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EditCategory {
    pub name: String,
    pub subcategories: Vec<String>,
    #[serde(default = "default_weight")]
    pub weight: f64,
    /// Optional per-subcategory weights; uniform when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub subcategory_weights: Option<Vec<f64>>,
}

fn default_weight() -> f64 {
    1.0
}

/// The full taxonomy. The bundled default has exactly 5 categories and 14
/// subcategories.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EditTaxonomy {
    pub categories: Vec<EditCategory>,
}

/// Where an edit-triplet source image comes from.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(tag = "origin", rename_all = "snake_case")]
pub enum SourceRef {
    /// An image produced by an earlier text-to-image job, referenced by job id.
    GeneratedT2i { job_id: String },
    /// A curated real image on disk.
    CuratedReal { path: PathBuf },
}

/// A sampled editing task bound to a source image reference.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EditTaskSample {
    pub category: String,
    pub subcategory: String,
    pub source: SourceRef,
}

/// Read-only snapshots of the two source pools, taken at run start.
#[derive(Debug, Clone, Default)]
pub struct SourcePools {
    /// Job ids of planned/completed text-to-image jobs.
    pub generated: Vec<String>,
    /// Paths of curated real images.
    pub curated: Vec<PathBuf>,
}

impl EditTaxonomy {
    /// The default taxonomy shipped with the crate.
    pub fn bundled() -> EditTaxonomy {
        EditTaxonomy::from_json(BUNDLED_TAXONOMY).expect("bundled taxonomy is validated by tests")
    }

    pub fn load(path: &Path) -> Result<EditTaxonomy, TaxonomyError> {
        let text = std::fs::read_to_string(path).map_err(|source| TaxonomyError::Io {
            path: path.display().to_string(),
            source,
        })?;
        EditTaxonomy::from_json(&text)
    }

    pub fn from_json(text: &str) -> Result<EditTaxonomy, TaxonomyError> {
        let tax: EditTaxonomy = serde_json::from_str(text)?;
        tax.validate()?;
        Ok(tax)
    }

    pub fn subcategory_count(&self) -> usize {
        self.categories.iter().map(|c| c.subcategories.len()).sum()
    }

    pub fn contains(&self, category: &str, subcategory: &str) -> bool {
        self.categories
            .iter()
            .any(|c| c.name == category && c.subcategories.iter().any(|s| s == subcategory))
    }

    /// Normalized category weights, in category order.
    pub fn category_probabilities(&self) -> Vec<f64> {
        let total: f64 = self.categories.iter().map(|c| c.weight).sum();
        self.categories.iter().map(|c| c.weight / total).collect()
    }

    /// Soft warnings for taxonomies that deviate from the reference shape
    /// (5 categories, 14 subcategories). Custom taxonomies are allowed; the
    /// warnings exist so a strict caller can surface the deviation.
    pub fn structure_warnings(&self) -> Vec<String> {
        let mut warnings = Vec::new();
        if self.categories.len() != 5 {
            warnings.push(format!(
                "taxonomy has {} categories; the reference taxonomy has 5",
                self.categories.len()
            ));
        }
        if self.subcategory_count() != 14 {
            warnings.push(format!(
                "taxonomy has {} subcategories; the reference taxonomy has 14",
                self.subcategory_count()
            ));
        }
        warnings
    }

    fn validate(&self) -> Result<(), TaxonomyError> {
        let mut seen = std::collections::HashSet::new();
        for cat in &self.categories {
            if !seen.insert(&cat.name) {
                return Err(TaxonomyError::DuplicateCategory(cat.name.clone()));
            }
            if cat.subcategories.is_empty() {
                return Err(TaxonomyError::NoSubcategories(cat.name.clone()));
            }
            if cat.weight < 0.0 || !cat.weight.is_finite() {
                return Err(TaxonomyError::NegativeWeight(cat.name.clone()));
            }
            if let Some(sw) = &cat.subcategory_weights {
                if sw.len() != cat.subcategories.len() {
                    return Err(TaxonomyError::SubWeightMismatch {
                        category: cat.name.clone(),
                        expected: cat.subcategories.len(),
                        got: sw.len(),
                    });
                }
                if sw.iter().any(|&w| w < 0.0 || !w.is_finite()) {
                    return Err(TaxonomyError::NegativeWeight(cat.name.clone()));
                }
                if sw.iter().sum::<f64>() <= 0.0 {
                    return Err(TaxonomyError::NotNormalizable);
                }
            }
        }
        let total: f64 = self.categories.iter().map(|c| c.weight).sum();
        if total <= 0.0 || !total.is_finite() {
            return Err(TaxonomyError::NotNormalizable);
        }
        Ok(())
    }
}

/// Approximate category weights matching the published category-distribution
/// figure. The exact numbers are not published; these are an eyeballed preset
/// and the default remains uniform.
pub fn approximate_figure_weights() -> [(&'static str, f64); 5] {
    [
        ("Image editing and manipulation", 0.35),
        ("Style transfer and artistic transformation", 0.22),
        ("Content augmentation and extension", 0.13),
        ("Structured generation and conditional control", 0.12),
        ("Creative ideation and iteration", 0.18),
    ]
}

/// Samples an editing task and binds it to a source image.
///
/// Category is drawn by normalized weight, subcategory uniformly (or by the
/// category's optional subcategory weights), and the source comes from the
/// generated pool with probability `mix`, falling back to whichever pool is
/// nonempty.
pub fn sample_edit_task(
    taxonomy: &EditTaxonomy,
    pools: &SourcePools,
    mix: f64,
    rng: &mut RngState,
) -> Result<EditTaskSample, TaxonomyError> {
    if pools.generated.is_empty() && pools.curated.is_empty() {
        return Err(TaxonomyError::EmptyPools);
    }
    let probs = taxonomy.category_probabilities();
    let cat_idx = sample_categorical(&probs, rng);
    let category = &taxonomy.categories[cat_idx];
    let sub_idx = match &category.subcategory_weights {
        Some(sw) => {
            let total: f64 = sw.iter().sum();
            let normalized: Vec<f64> = sw.iter().map(|w| w / total).collect();
            sample_categorical(&normalized, rng)
        }
        None => rng.gen_index(category.subcategories.len()),
    };
    let want_generated = rng.gen_bool(mix);
    let source = if (want_generated && !pools.generated.is_empty()) || pools.curated.is_empty() {
        let job_id = pools.generated[rng.gen_index(pools.generated.len())].clone();
        SourceRef::GeneratedT2i { job_id }
    } else {
        let path = pools.curated[rng.gen_index(pools.curated.len())].clone();
        SourceRef::CuratedReal { path }
    };
    Ok(EditTaskSample {
        category: category.name.clone(),
        subcategory: category.subcategories[sub_idx].clone(),
        source,
    })
}

/// Inverse-CDF draw over normalized probabilities.
fn sample_categorical(probs: &[f64], rng: &mut RngState) -> usize {
    let u = rng.next_f64();
    let mut acc = 0.0;
    for (i, &p) in probs.iter().enumerate() {
        acc += p;
        if u < acc {
            return i;
        }
    }
    probs.len() - 1
}
