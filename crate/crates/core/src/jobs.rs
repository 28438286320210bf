//! Run planning: deterministic job lists with stable content-derived ids.
//!
//! A plan mixes the four pipeline kinds in seeded random order. Edit-triplet
//! jobs that source from the generated collection name their producing job id
//! and are scheduled only after it completes.

use crate::attributes::{sample_bundle, AttributeBundle, AttributeError, DecayDistribution};
use crate::rng::RngState;
use crate::taxonomy::{
    sample_edit_task, EditTaskSample, EditTaxonomy, SourcePools, SourceRef, TaxonomyError,
};
use crate::vocabulary::Vocabulary;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use std::collections::HashSet;
use std::path::PathBuf;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum PlanError {
    #[error("plan has zero jobs")]
    ZeroJobs,
    #[error("image-first jobs require a nonempty curated image pool")]
    NoCuratedImages,
    #[error("document jobs require nonempty theme and font lists")]
    NoThemesOrFonts,
    #[error(transparent)]
    Attribute(#[from] AttributeError),
    #[error(transparent)]
    Taxonomy(#[from] TaxonomyError),
}

/// The four pipeline kinds a job can run.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum JobKind {
    PromptFirstT2i,
    ImageFirstT2i,
    DocumentT2i,
    EditTriplet,
}

impl JobKind {
    pub fn as_str(&self) -> &'static str {
        match self {
            JobKind::PromptFirstT2i => "prompt_first_t2i",
            JobKind::ImageFirstT2i => "image_first_t2i",
            JobKind::DocumentT2i => "document_t2i",
            JobKind::EditTriplet => "edit_triplet",
        }
    }
}

/// Kind-specific inputs, fixed at plan time.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "payload", rename_all = "snake_case")]
pub enum JobPayload {
    PromptFirst { bundle: AttributeBundle },
    ImageFirst { source: PathBuf },
    Document { theme: String, font: String },
    EditTriplet { task: EditTaskSample },
}

/// Lifecycle state of a job.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum JobState {
    Pending,
    InFlight,
    Done,
    Failed,
}

/// One unit of orchestrated work.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Job {
    /// Content-derived stable id: hash of kind, run seed, and ordinal.
    pub id: String,
    pub kind: JobKind,
    pub payload: JobPayload,
    pub state: JobState,
    pub attempts: u32,
    /// Position in the plan before mixing; part of the id derivation.
    pub ordinal: u64,
    /// Seed for this job's own random stream.
    pub seed: u64,
}

impl Job {
    /// The t2i job this job depends on, if any.
    pub fn dependency(&self) -> Option<&str> {
        match &self.payload {
            JobPayload::EditTriplet {
                task:
                    EditTaskSample {
                        source: SourceRef::GeneratedT2i { job_id },
                        ..
                    },
            } => Some(job_id),
            _ => None,
        }
    }
}

fn job_id(kind: JobKind, run_seed: u64, ordinal: u64) -> String {
    let mut hasher = Sha256::new();
    hasher.update(kind.as_str().as_bytes());
    hasher.update(run_seed.to_le_bytes());
    hasher.update(ordinal.to_le_bytes());
    hex::encode(&hasher.finalize()[..8])
}

/// Requested job counts per kind.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct JobCounts {
    pub prompt_first_t2i: usize,
    pub image_first_t2i: usize,
    pub document_t2i: usize,
    pub edit_triplet: usize,
}

impl Default for JobCounts {
    fn default() -> Self {
        // Desk-scale defaults; a full-scale run is configuration, not code.
        Self {
            prompt_first_t2i: 100,
            image_first_t2i: 100,
            document_t2i: 100,
            edit_triplet: 100,
        }
    }
}

impl JobCounts {
    pub fn total(&self) -> usize {
        self.prompt_first_t2i + self.image_first_t2i + self.document_t2i + self.edit_triplet
    }
}

/// Everything planning needs.
pub struct PlanInputs<'a> {
    pub seed: u64,
    pub counts: JobCounts,
    pub vocabulary: &'a Vocabulary,
    pub decay: &'a DecayDistribution,
    pub dimension_dropout: f64,
    pub taxonomy: &'a EditTaxonomy,
    /// Probability an edit triplet sources from the generated collection.
    pub edit_source_mix: f64,
    pub curated: Vec<PathBuf>,
    pub themes: &'a [String],
    pub fonts: &'a [String],
}

/// Builds the deterministic job list for a run.
///
/// Prompt-first bundles, document theme/font picks, and edit tasks are all
/// sampled from the run seed. Curated images are assigned to image-first jobs
/// round-robin. Edit sources prefer not-yet-used pool entries (re-drawing a
/// bounded number of times) so that desk-scale runs do not edit the same
/// source twice while unused sources remain; the final order interleaves all
/// kinds by seeded shuffle.
pub fn plan_run(inputs: &PlanInputs) -> Result<Vec<Job>, PlanError> {
    if inputs.counts.total() == 0 {
        return Err(PlanError::ZeroJobs);
    }
    if inputs.counts.image_first_t2i > 0 && inputs.curated.is_empty() {
        return Err(PlanError::NoCuratedImages);
    }
    if inputs.counts.document_t2i > 0 && (inputs.themes.is_empty() || inputs.fonts.is_empty()) {
        return Err(PlanError::NoThemesOrFonts);
    }

    let mut plan_rng = RngState::new(inputs.seed);
    let root_rng = RngState::new(inputs.seed);
    let mut jobs: Vec<Job> = Vec::with_capacity(inputs.counts.total());
    let make_job = |kind: JobKind, payload: JobPayload, ordinal: u64| Job {
        id: job_id(kind, inputs.seed, ordinal),
        kind,
        payload,
        state: JobState::Pending,
        attempts: 0,
        ordinal,
        seed: root_rng.derive(ordinal).seed(),
    };

    for _ in 0..inputs.counts.prompt_first_t2i {
        let bundle = sample_bundle(
            inputs.vocabulary,
            inputs.decay,
            inputs.dimension_dropout,
            &mut plan_rng,
        )?;
        let ordinal = jobs.len() as u64;
        jobs.push(make_job(
            JobKind::PromptFirstT2i,
            JobPayload::PromptFirst { bundle },
            ordinal,
        ));
    }
    for i in 0..inputs.counts.image_first_t2i {
        let source = inputs.curated[i % inputs.curated.len()].clone();
        let ordinal = jobs.len() as u64;
        jobs.push(make_job(
            JobKind::ImageFirstT2i,
            JobPayload::ImageFirst { source },
            ordinal,
        ));
    }
    let mut used_pairs: HashSet<(usize, usize)> = HashSet::new();
    let combos = inputs.themes.len() * inputs.fonts.len();
    for _ in 0..inputs.counts.document_t2i {
        let mut pick = (
            plan_rng.gen_index(inputs.themes.len()),
            plan_rng.gen_index(inputs.fonts.len()),
        );
        // Prefer an unused (theme, font) pair while any remain; repeated
        // pairs would yield byte-identical mock documents.
        let mut redraws = 0;
        while used_pairs.contains(&pick) && used_pairs.len() < combos && redraws < combos {
            pick = (
                plan_rng.gen_index(inputs.themes.len()),
                plan_rng.gen_index(inputs.fonts.len()),
            );
            redraws += 1;
        }
        used_pairs.insert(pick);
        let theme = inputs.themes[pick.0].clone();
        let font = inputs.fonts[pick.1].clone();
        let ordinal = jobs.len() as u64;
        jobs.push(make_job(
            JobKind::DocumentT2i,
            JobPayload::Document { theme, font },
            ordinal,
        ));
    }

    if inputs.counts.edit_triplet > 0 {
        // The generated pool holds jobs that synthesize an image. Image-first
        // records are excluded: their stored image is a byte-for-byte copy of
        // a curated photo, which already belongs to the curated pool.
        let pools = SourcePools {
            generated: jobs
                .iter()
                .filter(|j| matches!(j.kind, JobKind::PromptFirstT2i | JobKind::DocumentT2i))
                .map(|j| j.id.clone())
                .collect(),
            curated: inputs.curated.clone(),
        };
        let pool_size = pools.generated.len() + pools.curated.len();
        let mut used: HashSet<SourceRef> = HashSet::new();
        for _ in 0..inputs.counts.edit_triplet {
            let mut task =
                sample_edit_task(inputs.taxonomy, &pools, inputs.edit_source_mix, &mut plan_rng)?;
            let mut redraws = 0;
            while used.contains(&task.source) && used.len() < pool_size && redraws < pool_size {
                task = sample_edit_task(
                    inputs.taxonomy,
                    &pools,
                    inputs.edit_source_mix,
                    &mut plan_rng,
                )?;
                redraws += 1;
            }
            used.insert(task.source.clone());
            let ordinal = jobs.len() as u64;
            jobs.push(make_job(
                JobKind::EditTriplet,
                JobPayload::EditTriplet { task },
                ordinal,
            ));
        }
    }

    // Seeded Fisher-Yates mixes the kinds; ids were fixed before shuffling.
    for i in (1..jobs.len()).rev() {
        let j = plan_rng.gen_index(i + 1);
        jobs.swap(i, j);
    }
    Ok(jobs)
}
