//! The dataset manifest: append-only JSONL records with provenance and
//! content hashes, plus validation, statistics, and duplicate scanning.
//!
//! Records are versioned (`schema_version: 1`) and carry the hash algorithm
//! per record (`hash_alg`) so the digest can evolve without breaking old
//! manifests. Image files live under `images/<first two hex chars>/<hash>.png`
//! relative to the manifest, which keeps manifests relocatable.

use crate::attributes::AttributeBundle;
use crate::taxonomy::EditTaxonomy;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use std::collections::{BTreeMap, HashMap, HashSet};
use std::fs::{File, OpenOptions};
use std::io::{BufRead, BufReader, Read, Seek, Write};
use std::path::{Path, PathBuf};
use thiserror::Error;

/// Current manifest schema version.
pub const SCHEMA_VERSION: u32 = 1;

/// Hash algorithm recorded in every record.
pub const HASH_ALG: &str = "sha256";

#[derive(Debug, Error)]
pub enum ManifestError {
    #[error("manifest I/O error at {path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
    #[error("duplicate record id {0}")]
    DuplicateId(String),
    #[error("record failed validation: {0}")]
    InvalidRecord(String),
    #[error("manifest line {line} is not a valid record: {message}")]
    Parse { line: usize, message: String },
}

/// Which pipeline produced a text-to-image record.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Pipeline {
    PromptFirst,
    ImageFirst,
    Document,
}

impl Pipeline {
    pub fn as_str(&self) -> &'static str {
        match self {
            Pipeline::PromptFirst => "prompt_first",
            Pipeline::ImageFirst => "image_first",
            Pipeline::Document => "document",
        }
    }
}

/// Origin of an edit-triplet source image.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SourceOrigin {
    GeneratedT2i,
    CuratedReal,
}

/// A (prompt, image) pair with provenance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct T2IRecord {
    pub id: String,
    pub schema_version: u32,
    pub pipeline: Pipeline,
    pub prompt: String,
    /// Image path relative to the manifest directory.
    pub image: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub attribute_provenance: Option<AttributeBundle>,
    pub backend_id: String,
    pub content_hash: String,
    pub hash_alg: String,
    pub rng_generator: String,
    pub rng_seed: u64,
    pub created_at: String,
}

/// A (source image, instruction, edited image) triplet with provenance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EditTripletRecord {
    pub id: String,
    pub schema_version: u32,
    pub source_image: String,
    pub instruction: String,
    pub edited_image: String,
    pub category: String,
    pub subcategory: String,
    pub source_origin: SourceOrigin,
    pub backend_id: String,
    pub source_hash: String,
    pub edited_hash: String,
    pub hash_alg: String,
    pub rng_generator: String,
    pub rng_seed: u64,
    pub created_at: String,
}

/// One manifest line.
#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "record_type", rename_all = "snake_case")]
pub enum DatasetRecord {
    T2i(T2IRecord),
    EditTriplet(EditTripletRecord),
}

impl DatasetRecord {
    pub fn id(&self) -> &str {
        match self {
            DatasetRecord::T2i(r) => &r.id,
            DatasetRecord::EditTriplet(r) => &r.id,
        }
    }

    /// Hash of the image this record contributed (generated or edited).
    /// Source-image hashes are provenance of existing content and do not
    /// count toward duplicate detection.
    pub fn output_hash(&self) -> &str {
        match self {
            DatasetRecord::T2i(r) => &r.content_hash,
            DatasetRecord::EditTriplet(r) => &r.edited_hash,
        }
    }

    pub fn to_json_line(&self) -> String {
        serde_json::to_string(self).expect("records serialize")
    }

    /// Strict parse of one manifest line: the `record_type` tag picks the
    /// variant and unknown fields are rejected.
    pub fn from_json_line(line: &str) -> Result<DatasetRecord, String> {
        let mut value: serde_json::Value =
            serde_json::from_str(line).map_err(|e| e.to_string())?;
        let obj = value.as_object_mut().ok_or("record is not a JSON object")?;
        let tag = obj
            .remove("record_type")
            .and_then(|v| v.as_str().map(str::to_string))
            .ok_or("missing record_type")?;
        match tag.as_str() {
            "t2i" => serde_json::from_value::<T2IRecord>(value)
                .map(DatasetRecord::T2i)
                .map_err(|e| e.to_string()),
            "edit_triplet" => serde_json::from_value::<EditTripletRecord>(value)
                .map(DatasetRecord::EditTriplet)
                .map_err(|e| e.to_string()),
            other => Err(format!("unknown record_type {other:?}")),
        }
    }
}

/// Writes PNG bytes into the content-addressed image store, returning the
/// manifest-relative path and the content hash. Identical bytes land on the
/// same path, so re-writes after a crash are harmless.
pub fn store_image(root: &Path, png: &[u8]) -> Result<(String, String), ManifestError> {
    let hash = hex::encode(Sha256::digest(png));
    let rel = format!("images/{}/{}.png", &hash[..2], hash);
    let abs = root.join(&rel);
    let io_err = |source| ManifestError::Io {
        path: abs.display().to_string(),
        source,
    };
    if !abs.exists() {
        std::fs::create_dir_all(abs.parent().expect("store path has a parent")).map_err(io_err)?;
        std::fs::write(&abs, png).map_err(io_err)?;
    }
    Ok((rel, hash))
}

/// Single-writer manifest handle with exactly-once append semantics.
///
/// Appends are one atomic `write` of the full line; duplicate ids are
/// rejected so at-least-once job execution still yields exactly one record
/// per job.
pub struct ManifestWriter {
    path: PathBuf,
    root: PathBuf,
    file: File,
    ids: HashSet<String>,
    t2i_images: HashMap<String, String>,
}

impl ManifestWriter {
    /// Opens (creating if absent) a manifest for appending. Existing records
    /// seed the duplicate-id index; a torn final line (no trailing newline)
    /// is truncated away first.
    pub fn open(path: &Path) -> Result<ManifestWriter, ManifestError> {
        let root = path
            .parent()
            .map(Path::to_path_buf)
            .unwrap_or_else(|| PathBuf::from("."));
        std::fs::create_dir_all(&root).map_err(|source| ManifestError::Io {
            path: root.display().to_string(),
            source,
        })?;
        let io_err = |source| ManifestError::Io {
            path: path.display().to_string(),
            source,
        };
        let mut ids = HashSet::new();
        let mut t2i_images = HashMap::new();
        if path.exists() {
            truncate_torn_tail(path)?;
            let file = File::open(path).map_err(io_err)?;
            for (i, line) in BufReader::new(file).lines().enumerate() {
                let line = line.map_err(io_err)?;
                if line.trim().is_empty() {
                    continue;
                }
                let record =
                    DatasetRecord::from_json_line(&line).map_err(|message| ManifestError::Parse {
                        line: i + 1,
                        message,
                    })?;
                if let DatasetRecord::T2i(r) = &record {
                    t2i_images.insert(r.id.clone(), r.image.clone());
                }
                ids.insert(record.id().to_string());
            }
        }
        let file = OpenOptions::new()
            .create(true)
            .append(true)
            .open(path)
            .map_err(io_err)?;
        Ok(ManifestWriter {
            path: path.to_path_buf(),
            root,
            file,
            ids,
            t2i_images,
        })
    }

    pub fn path(&self) -> &Path {
        &self.path
    }

    /// Directory image paths are relative to.
    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    pub fn contains(&self, id: &str) -> bool {
        self.ids.contains(id)
    }

    /// Relative image path recorded for a text-to-image record id.
    pub fn t2i_image_path(&self, id: &str) -> Option<&str> {
        self.t2i_images.get(id).map(String::as_str)
    }

    /// Validates and appends one record as a single atomic line write.
    pub fn append(&mut self, record: &DatasetRecord) -> Result<(), ManifestError> {
        if self.ids.contains(record.id()) {
            return Err(ManifestError::DuplicateId(record.id().to_string()));
        }
        if let Some(violation) = validate_record(record, &self.root, None) {
            return Err(ManifestError::InvalidRecord(violation));
        }
        let mut line = record.to_json_line();
        line.push('\n');
        self.file
            .write_all(line.as_bytes())
            .and_then(|_| self.file.flush())
            .map_err(|source| ManifestError::Io {
                path: self.path.display().to_string(),
                source,
            })?;
        self.ids.insert(record.id().to_string());
        if let DatasetRecord::T2i(r) = record {
            self.t2i_images.insert(r.id.clone(), r.image.clone());
        }
        Ok(())
    }
}

/// Removes a torn final line (one without a trailing newline). At most one
/// such line can exist because appends are single atomic writes.
fn truncate_torn_tail(path: &Path) -> Result<(), ManifestError> {
    let io_err = |source| ManifestError::Io {
        path: path.display().to_string(),
        source,
    };
    let mut file = OpenOptions::new().read(true).write(true).open(path).map_err(io_err)?;
    let mut contents = Vec::new();
    file.read_to_end(&mut contents).map_err(io_err)?;
    if contents.is_empty() || contents.ends_with(b"\n") {
        return Ok(());
    }
    let keep = contents.iter().rposition(|&b| b == b'\n').map_or(0, |p| p + 1);
    file.set_len(keep as u64).map_err(io_err)?;
    file.seek(std::io::SeekFrom::End(0)).map_err(io_err)?;
    Ok(())
}

/// A single validation finding.
#[derive(Debug, Clone, Serialize)]
pub struct Violation {
    pub line: usize,
    pub record_id: Option<String>,
    pub message: String,
}

/// Checks one record's internal invariants plus on-disk state. Returns a
/// message describing the first problem, if any.
fn validate_record(
    record: &DatasetRecord,
    root: &Path,
    taxonomy: Option<&EditTaxonomy>,
) -> Option<String> {
    let check_image = |rel: &str, expected_hash: &str, what: &str| -> Option<String> {
        let abs = root.join(rel);
        let bytes = match std::fs::read(&abs) {
            Ok(b) => b,
            Err(_) => return Some(format!("{what} file missing: {rel}")),
        };
        let actual = hex::encode(Sha256::digest(&bytes));
        if actual != expected_hash {
            return Some(format!(
                "{what} hash mismatch for {rel}: recorded {expected_hash}, actual {actual}"
            ));
        }
        None
    };
    match record {
        DatasetRecord::T2i(r) => {
            if r.schema_version != SCHEMA_VERSION {
                return Some(format!("unsupported schema_version {}", r.schema_version));
            }
            if r.prompt.trim().is_empty() {
                return Some("empty prompt".into());
            }
            if r.hash_alg != HASH_ALG {
                return Some(format!("unsupported hash_alg {}", r.hash_alg));
            }
            check_image(&r.image, &r.content_hash, "image")
        }
        DatasetRecord::EditTriplet(r) => {
            if r.schema_version != SCHEMA_VERSION {
                return Some(format!("unsupported schema_version {}", r.schema_version));
            }
            if r.instruction.trim().is_empty() {
                return Some("empty instruction".into());
            }
            if r.hash_alg != HASH_ALG {
                return Some(format!("unsupported hash_alg {}", r.hash_alg));
            }
            if let Some(tax) = taxonomy {
                if !tax.contains(&r.category, &r.subcategory) {
                    return Some(format!(
                        "task not in taxonomy: {} / {}",
                        r.category, r.subcategory
                    ));
                }
            }
            check_image(&r.source_image, &r.source_hash, "source image")
                .or_else(|| check_image(&r.edited_image, &r.edited_hash, "edited image"))
        }
    }
}

/// Validates a whole manifest: schema, id uniqueness, file existence, hash
/// match, and taxonomy membership. Returns all findings; an empty list means
/// the manifest is valid. Never panics on arbitrary bytes.
pub fn validate_manifest(
    path: &Path,
    taxonomy: &EditTaxonomy,
) -> Result<Vec<Violation>, ManifestError> {
    let io_err = |source| ManifestError::Io {
        path: path.display().to_string(),
        source,
    };
    let root = path.parent().map(Path::to_path_buf).unwrap_or_default();
    let contents = std::fs::read(path).map_err(io_err)?;
    let text = String::from_utf8_lossy(&contents);
    let torn_tail = !contents.is_empty() && !contents.ends_with(b"\n");
    let mut violations = Vec::new();
    let mut seen = HashSet::new();
    let lines: Vec<&str> = text.lines().collect();
    for (i, line) in lines.iter().enumerate() {
        let line_no = i + 1;
        if line.trim().is_empty() {
            continue;
        }
        let record = match DatasetRecord::from_json_line(line) {
            Ok(r) => r,
            Err(message) => {
                let is_last = i + 1 == lines.len();
                let message = if is_last && torn_tail {
                    format!("torn final line (crash mid-append): {message}")
                } else {
                    message
                };
                violations.push(Violation {
                    line: line_no,
                    record_id: None,
                    message,
                });
                continue;
            }
        };
        if !seen.insert(record.id().to_string()) {
            violations.push(Violation {
                line: line_no,
                record_id: Some(record.id().to_string()),
                message: format!("duplicate id {}", record.id()),
            });
        }
        if let Some(message) = validate_record(&record, &root, Some(taxonomy)) {
            violations.push(Violation {
                line: line_no,
                record_id: Some(record.id().to_string()),
                message,
            });
        }
    }
    Ok(violations)
}

fn read_records(path: &Path) -> Result<Vec<DatasetRecord>, ManifestError> {
    let file = File::open(path).map_err(|source| ManifestError::Io {
        path: path.display().to_string(),
        source,
    })?;
    let mut records = Vec::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|source| ManifestError::Io {
            path: path.display().to_string(),
            source,
        })?;
        if line.trim().is_empty() {
            continue;
        }
        let record =
            DatasetRecord::from_json_line(&line).map_err(|message| ManifestError::Parse {
                line: i + 1,
                message,
            })?;
        records.push(record);
    }
    Ok(records)
}

/// A group of records whose output images are byte-identical.
#[derive(Debug, Clone, Serialize)]
pub struct DuplicateGroup {
    pub hash: String,
    pub record_ids: Vec<String>,
}

/// Groups records by output-image content hash; only groups of two or more
/// are returned.
pub fn dedup_scan(path: &Path) -> Result<Vec<DuplicateGroup>, ManifestError> {
    let records = read_records(path)?;
    let mut by_hash: BTreeMap<String, Vec<String>> = BTreeMap::new();
    for record in &records {
        by_hash
            .entry(record.output_hash().to_string())
            .or_default()
            .push(record.id().to_string());
    }
    Ok(by_hash
        .into_iter()
        .filter(|(_, ids)| ids.len() > 1)
        .map(|(hash, record_ids)| DuplicateGroup { hash, record_ids })
        .collect())
}

/// Target distributions stats are compared against. Maps may be unnormalized;
/// they are normalized before the L1 computation.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct StatsTargets {
    /// Target share per pipeline (prompt_first / image_first / document /
    /// edit_triplet). Uniform when empty.
    #[serde(default)]
    pub pipeline: BTreeMap<String, f64>,
    /// Target share per edit category. Uniform over observed categories when
    /// empty.
    #[serde(default)]
    pub category: BTreeMap<String, f64>,
}

/// Manifest summary: counts, target distributions, L1 distances, duplicates.
#[derive(Debug, Clone, Serialize)]
pub struct StatsReport {
    pub total: usize,
    pub per_pipeline: BTreeMap<String, usize>,
    pub per_category: BTreeMap<String, usize>,
    pub per_subcategory: BTreeMap<String, usize>,
    pub pipeline_target: BTreeMap<String, f64>,
    pub category_target: BTreeMap<String, f64>,
    /// `None` when the manifest is empty (L1 undefined).
    pub pipeline_l1: Option<f64>,
    pub category_l1: Option<f64>,
    pub duplicate_hash_count: usize,
}

fn normalize(map: &BTreeMap<String, f64>) -> BTreeMap<String, f64> {
    let total: f64 = map.values().sum();
    map.iter()
        .map(|(k, v)| (k.clone(), if total > 0.0 { v / total } else { 0.0 }))
        .collect()
}

fn uniform_over(keys: impl Iterator<Item = String>) -> BTreeMap<String, f64> {
    let keys: Vec<String> = keys.collect();
    let p = 1.0 / keys.len().max(1) as f64;
    keys.into_iter().map(|k| (k, p)).collect()
}

fn l1_distance(counts: &BTreeMap<String, usize>, target: &BTreeMap<String, f64>) -> Option<f64> {
    let total: usize = counts.values().sum();
    if total == 0 {
        return None;
    }
    let mut keys: HashSet<&String> = counts.keys().collect();
    keys.extend(target.keys());
    Some(
        keys.into_iter()
            .map(|k| {
                let observed = *counts.get(k).unwrap_or(&0) as f64 / total as f64;
                let expected = *target.get(k).unwrap_or(&0.0);
                (observed - expected).abs()
            })
            .sum(),
    )
}

/// Computes the stats report for a manifest against target distributions.
pub fn compute_stats(path: &Path, targets: &StatsTargets) -> Result<StatsReport, ManifestError> {
    let records = read_records(path)?;
    let mut per_pipeline: BTreeMap<String, usize> = BTreeMap::new();
    let mut per_category: BTreeMap<String, usize> = BTreeMap::new();
    let mut per_subcategory: BTreeMap<String, usize> = BTreeMap::new();
    for record in &records {
        match record {
            DatasetRecord::T2i(r) => {
                *per_pipeline.entry(r.pipeline.as_str().to_string()).or_default() += 1;
            }
            DatasetRecord::EditTriplet(r) => {
                *per_pipeline.entry("edit_triplet".to_string()).or_default() += 1;
                *per_category.entry(r.category.clone()).or_default() += 1;
                *per_subcategory.entry(r.subcategory.clone()).or_default() += 1;
            }
        }
    }
    let pipeline_target = if targets.pipeline.is_empty() {
        uniform_over(per_pipeline.keys().cloned())
    } else {
        normalize(&targets.pipeline)
    };
    let category_target = if targets.category.is_empty() {
        uniform_over(per_category.keys().cloned())
    } else {
        normalize(&targets.category)
    };
    let duplicate_hash_count = dedup_scan(path)?
        .iter()
        .map(|g| g.record_ids.len() - 1)
        .sum();
    Ok(StatsReport {
        total: records.len(),
        pipeline_l1: l1_distance(&per_pipeline, &pipeline_target),
        category_l1: l1_distance(&per_category, &category_target),
        per_pipeline,
        per_category,
        per_subcategory,
        pipeline_target,
        category_target,
        duplicate_hash_count,
    })
}

impl StatsReport {
    /// Human-readable table.
    pub fn render_table(&self) -> String {
        let mut out = String::new();
        out.push_str(&format!("total records: {}\n", self.total));
        out.push_str("per pipeline:\n");
        for (k, v) in &self.per_pipeline {
            let target = self.pipeline_target.get(k).copied().unwrap_or(0.0);
            out.push_str(&format!("  {k:<16} {v:>8}  (target share {target:.3})\n"));
        }
        match self.pipeline_l1 {
            Some(l1) => out.push_str(&format!("pipeline L1 distance: {l1:.4}\n")),
            None => out.push_str("pipeline L1 distance: undefined (empty manifest)\n"),
        }
        if !self.per_category.is_empty() {
            out.push_str("per edit category:\n");
            for (k, v) in &self.per_category {
                let target = self.category_target.get(k).copied().unwrap_or(0.0);
                out.push_str(&format!("  {k:<48} {v:>6}  (target share {target:.3})\n"));
            }
            match self.category_l1 {
                Some(l1) => out.push_str(&format!("category L1 distance: {l1:.4}\n")),
                None => out.push_str("category L1 distance: undefined\n"),
            }
        }
        out.push_str(&format!("duplicate output hashes: {}\n", self.duplicate_hash_count));
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::images::{ImageBackend, MockImageBackend};

    fn t2i_record(root: &Path, id: &str, prompt: &str) -> DatasetRecord {
        let backend = MockImageBackend::new();
        let png = backend.generate(prompt).unwrap();
        let (rel, hash) = store_image(root, &png).unwrap();
        DatasetRecord::T2i(T2IRecord {
            id: id.to_string(),
            schema_version: SCHEMA_VERSION,
            pipeline: Pipeline::PromptFirst,
            prompt: prompt.to_string(),
            image: rel,
            attribute_provenance: None,
            backend_id: "mock-image".into(),
            content_hash: hash,
            hash_alg: HASH_ALG.into(),
            rng_generator: crate::rng::GENERATOR_NAME.into(),
            rng_seed: 7,
            created_at: "2024-01-01T00:00:00Z".into(),
        })
    }

    fn edit_record(root: &Path, id: &str, instruction: &str) -> DatasetRecord {
        let backend = MockImageBackend::new();
        let src = backend.generate(&format!("src for {id}")).unwrap();
        let edited = backend.edit(&src, instruction).unwrap();
        let (src_rel, src_hash) = store_image(root, &src).unwrap();
        let (ed_rel, ed_hash) = store_image(root, &edited).unwrap();
        DatasetRecord::EditTriplet(EditTripletRecord {
            id: id.to_string(),
            schema_version: SCHEMA_VERSION,
            source_image: src_rel,
            instruction: instruction.to_string(),
            edited_image: ed_rel,
            category: "Image editing and manipulation".into(),
            subcategory: "Element manipulation".into(),
            source_origin: SourceOrigin::CuratedReal,
            backend_id: "mock-image".into(),
            source_hash: src_hash,
            edited_hash: ed_hash,
            hash_alg: HASH_ALG.into(),
            rng_generator: crate::rng::GENERATOR_NAME.into(),
            rng_seed: 7,
            created_at: "2024-01-01T00:00:01Z".into(),
        })
    }

    #[test]
    fn append_grows_by_one_line_and_round_trips() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("manifest.jsonl");
        let mut writer = ManifestWriter::open(&path).unwrap();
        let record = t2i_record(dir.path(), "r1", "a bright red square");
        writer.append(&record).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        assert_eq!(text.lines().count(), 1);
        let parsed = DatasetRecord::from_json_line(text.lines().next().unwrap()).unwrap();
        assert_eq!(parsed, record);
    }

    #[test]
    fn duplicate_id_rejected_and_manifest_unchanged() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("manifest.jsonl");
        let mut writer = ManifestWriter::open(&path).unwrap();
        writer.append(&t2i_record(dir.path(), "r1", "p one")).unwrap();
        let before = std::fs::read_to_string(&path).unwrap();
        let err = writer.append(&t2i_record(dir.path(), "r1", "p two")).unwrap_err();
        assert!(matches!(err, ManifestError::DuplicateId(_)));
        assert_eq!(std::fs::read_to_string(&path).unwrap(), before);
    }

    #[test]
    fn missing_image_file_rejected_on_append() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("manifest.jsonl");
        let mut writer = ManifestWriter::open(&path).unwrap();
        let mut record = t2i_record(dir.path(), "r1", "p");
        if let DatasetRecord::T2i(r) = &mut record {
            r.image = "images/zz/missing.png".into();
        }
        let err = writer.append(&record).unwrap_err();
        assert!(err.to_string().contains("missing"));
    }

    #[test]
    fn fresh_manifest_validates_clean() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("manifest.jsonl");
        let mut writer = ManifestWriter::open(&path).unwrap();
        writer.append(&t2i_record(dir.path(), "a", "prompt a")).unwrap();
        writer.append(&edit_record(dir.path(), "b", "swap the sky")).unwrap();
        let violations = validate_manifest(&path, &EditTaxonomy::bundled()).unwrap();
        assert!(violations.is_empty(), "{violations:?}");
    }

    #[test]
    fn altered_image_bytes_yield_hash_violation() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("manifest.jsonl");
        let mut writer = ManifestWriter::open(&path).unwrap();
        let record = t2i_record(dir.path(), "a", "prompt a");
        writer.append(&record).unwrap();
        if let DatasetRecord::T2i(r) = &record {
            std::fs::write(dir.path().join(&r.image), b"tampered").unwrap();
        }
        let violations = validate_manifest(&path, &EditTaxonomy::bundled()).unwrap();
        assert_eq!(violations.len(), 1);
        assert!(violations[0].message.contains("hash mismatch"));
    }

    #[test]
    fn unknown_subcategory_is_a_taxonomy_violation() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("manifest.jsonl");
        let mut writer = ManifestWriter::open(&path).unwrap();
        let mut record = edit_record(dir.path(), "e", "instruction");
        if let DatasetRecord::EditTriplet(r) = &mut record {
            r.subcategory = "Not a real subcategory".into();
        }
        // Append skips taxonomy checks (the writer has no taxonomy); validation
        // catches it.
        writer.append(&record).unwrap();
        let violations = validate_manifest(&path, &EditTaxonomy::bundled()).unwrap();
        assert_eq!(violations.len(), 1);
        assert!(violations[0].message.contains("not in taxonomy"));
    }

    #[test]
    fn torn_final_line_reported_then_truncated_on_reopen() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("manifest.jsonl");
        let mut writer = ManifestWriter::open(&path).unwrap();
        writer.append(&t2i_record(dir.path(), "a", "prompt a")).unwrap();
        drop(writer);
        // Simulate a crash mid-append.
        let mut file = OpenOptions::new().append(true).open(&path).unwrap();
        file.write_all(b"{\"record_type\":\"t2i\",\"id\":\"half").unwrap();
        drop(file);

        let violations = validate_manifest(&path, &EditTaxonomy::bundled()).unwrap();
        assert_eq!(violations.len(), 1);
        assert!(violations[0].message.contains("torn final line"));

        let writer = ManifestWriter::open(&path).unwrap();
        assert_eq!(writer.len(), 1);
        assert!(writer.contains("a"));
        let violations = validate_manifest(&path, &EditTaxonomy::bundled()).unwrap();
        assert!(violations.is_empty());
    }

    #[test]
    fn validate_never_panics_on_junk_bytes() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("manifest.jsonl");
        std::fs::write(&path, b"\xff\xfe{{{]]]\ntotally not json\n").unwrap();
        let violations = validate_manifest(&path, &EditTaxonomy::bundled()).unwrap();
        assert_eq!(violations.len(), 2);
    }

    #[test]
    fn dedup_scan_groups_identical_outputs() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("manifest.jsonl");
        let mut writer = ManifestWriter::open(&path).unwrap();
        writer.append(&t2i_record(dir.path(), "a", "same prompt")).unwrap();
        writer.append(&t2i_record(dir.path(), "b", "same prompt")).unwrap();
        writer.append(&t2i_record(dir.path(), "c", "different prompt")).unwrap();
        let groups = dedup_scan(&path).unwrap();
        assert_eq!(groups.len(), 1);
        assert_eq!(groups[0].record_ids, vec!["a".to_string(), "b".to_string()]);

        let stats = compute_stats(&path, &StatsTargets::default()).unwrap();
        assert_eq!(stats.duplicate_hash_count, 1);
    }

    #[test]
    fn stats_on_empty_manifest_flags_undefined_l1() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("manifest.jsonl");
        std::fs::write(&path, "").unwrap();
        let stats = compute_stats(&path, &StatsTargets::default()).unwrap();
        assert_eq!(stats.total, 0);
        assert!(stats.pipeline_l1.is_none());
        assert!(stats.category_l1.is_none());
    }

    #[test]
    fn identical_empirical_and_target_distributions_give_zero_l1() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("manifest.jsonl");
        let mut writer = ManifestWriter::open(&path).unwrap();
        writer.append(&t2i_record(dir.path(), "a", "p1")).unwrap();
        writer.append(&t2i_record(dir.path(), "b", "p2")).unwrap();
        let mut targets = StatsTargets::default();
        targets.pipeline.insert("prompt_first".into(), 1.0);
        let stats = compute_stats(&path, &targets).unwrap();
        assert_eq!(stats.pipeline_l1, Some(0.0));
    }
}
