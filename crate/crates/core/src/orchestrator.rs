//! Concurrent, crash-safe execution of a job plan against chat/image
//! backends.
//!
//! A bounded worker pool consumes a dependency-aware ready queue; journal and
//! manifest writes funnel through one serialized writer; per-backend token
//! buckets cap request rates. Jobs are executed at least once, but the
//! manifest append is keyed by job id, so each job contributes exactly one
//! record no matter how many times a crash/retry replays it.
//!
//! On completion the record is appended *before* the Done journal entry: a
//! crash between the two replays the job on resume and the duplicate append
//! is suppressed.

use crate::chat::{ChatBackend, ChatError};
use crate::images::{ImageBackend, ImageError};
use crate::jobs::{Job, JobPayload, JobState};
use crate::journal::{
    read_journal, repair_journal, FaultPlan, JournalEntry, JournalError, JournalState,
    JournalWriter,
};
use crate::manifest::{
    store_image, DatasetRecord, EditTripletRecord, ManifestError, ManifestWriter, Pipeline,
    SourceOrigin, T2IRecord, HASH_ALG, SCHEMA_VERSION,
};
use crate::prompts::{
    caption_image, compose_prompt, generate_document_concept, synthesize_edit_instruction,
    PromptError,
};
use crate::ratelimit::RateLimitSet;
use crate::rng::{RngState, GENERATOR_NAME};
use crate::taxonomy::SourceRef;
use chrono::{DateTime, SecondsFormat, Utc};
use serde::Serialize;
use std::collections::{BTreeMap, HashMap, VecDeque};
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::{Condvar, Mutex};
use std::time::{Duration, Instant};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum RunError {
    #[error(transparent)]
    Journal(#[from] JournalError),
    #[error(transparent)]
    Manifest(#[from] ManifestError),
    #[error("journal {0} already exists; resume instead of starting fresh")]
    JournalExists(PathBuf),
    #[error("journal references jobs missing from the plan: {0:?}")]
    UnknownJobs(Vec<String>),
    #[error("run aborted by injected crash")]
    Aborted,
    #[error("worker thread panicked")]
    WorkerPanic,
}

/// The pluggable backends a run talks to.
pub struct Backends {
    pub chat: std::sync::Arc<dyn ChatBackend>,
    pub image: std::sync::Arc<dyn ImageBackend>,
}

/// Timestamp source. The deterministic clock derives times from job ordinals
/// so mock runs produce byte-identical manifests.
#[derive(Debug, Clone, Copy)]
pub enum Clock {
    System,
    Deterministic { base_epoch_secs: i64 },
}

impl Clock {
    pub fn timestamp(&self, ordinal: u64) -> String {
        match self {
            Clock::System => Utc::now().to_rfc3339_opts(SecondsFormat::Millis, true),
            Clock::Deterministic { base_epoch_secs } => {
                DateTime::<Utc>::from_timestamp(base_epoch_secs + ordinal as i64, 0)
                    .expect("deterministic timestamps are in range")
                    .to_rfc3339_opts(SecondsFormat::Secs, true)
            }
        }
    }
}

/// Retry schedule: exponential backoff with multiplicative jitter.
#[derive(Debug, Clone, Copy)]
pub struct RetryPolicy {
    pub max_attempts: u32,
    pub initial_delay: Duration,
    pub multiplier: f64,
    pub jitter: f64,
}

impl Default for RetryPolicy {
    fn default() -> Self {
        Self {
            max_attempts: 3,
            initial_delay: Duration::from_millis(100),
            multiplier: 2.0,
            jitter: 0.1,
        }
    }
}

impl RetryPolicy {
    fn backoff(&self, attempt: u32, rng: &mut RngState) -> Duration {
        let base = self.initial_delay.as_secs_f64() * self.multiplier.powi(attempt as i32 - 1);
        let jittered = base * (1.0 + self.jitter * (2.0 * rng.next_f64() - 1.0));
        Duration::from_secs_f64(jittered.max(0.0))
    }
}

/// Knobs for one run.
pub struct RunOptions {
    pub parallelism: usize,
    pub rate_limits: RateLimitSet,
    pub retry: RetryPolicy,
    pub clock: Clock,
    /// Crash injection for recovery tests; `None` in normal operation.
    pub fault: Option<FaultPlan>,
}

impl Default for RunOptions {
    fn default() -> Self {
        Self {
            parallelism: 8,
            rate_limits: RateLimitSet::new(),
            retry: RetryPolicy::default(),
            clock: Clock::Deterministic {
                base_epoch_secs: 1_700_000_000,
            },
            fault: None,
        }
    }
}

/// Outcome summary of a run.
#[derive(Debug, Clone, Serialize)]
pub struct RunReport {
    pub planned: usize,
    /// Jobs already Done in the journal, skipped without backend calls.
    pub skipped_already_done: usize,
    pub done: usize,
    pub failed: usize,
    pub records_appended: usize,
    /// Manifest appends rejected as duplicates (crash replay artifacts).
    pub duplicates_suppressed: usize,
    pub per_kind_done: BTreeMap<String, usize>,
    pub wall_ms: u64,
    pub final_states: BTreeMap<String, JobState>,
}

impl RunReport {
    pub fn all_done(&self) -> bool {
        self.failed == 0 && self.done + self.skipped_already_done == self.planned
    }

    pub fn render_table(&self) -> String {
        let mut out = String::new();
        out.push_str(&format!(
            "jobs: {} planned, {} done, {} skipped (already done), {} failed\n",
            self.planned, self.done, self.skipped_already_done, self.failed
        ));
        for (kind, count) in &self.per_kind_done {
            out.push_str(&format!("  {kind:<18} {count:>8} done\n"));
        }
        out.push_str(&format!(
            "records: {} appended, {} duplicate appends suppressed\n",
            self.records_appended, self.duplicates_suppressed
        ));
        out.push_str(&format!("wall time: {} ms\n", self.wall_ms));
        out
    }
}

/// Runs a fresh plan. Fails if a non-empty journal already exists (use
/// [`resume`] for that).
pub fn run(
    plan: &[Job],
    backends: &Backends,
    journal_path: &Path,
    manifest_path: &Path,
    opts: &RunOptions,
) -> Result<RunReport, RunError> {
    if journal_path.exists()
        && std::fs::metadata(journal_path).map(|m| m.len() > 0).unwrap_or(false)
    {
        return Err(RunError::JournalExists(journal_path.to_path_buf()));
    }
    execute(plan, backends, journal_path, manifest_path, opts, HashMap::new())
}

/// Resumes a crashed or partial run: jobs recorded Done are skipped, all
/// others (pending, in-flight, failed) are re-executed. A torn final journal
/// line is truncated; journal entries for unknown job ids are an error.
pub fn resume(
    journal_path: &Path,
    plan: &[Job],
    backends: &Backends,
    manifest_path: &Path,
    opts: &RunOptions,
) -> Result<RunReport, RunError> {
    repair_journal(journal_path)?;
    let contents = read_journal(journal_path)?;
    let known: HashMap<&str, ()> = plan.iter().map(|j| (j.id.as_str(), ())).collect();
    let mut offenders: Vec<String> = contents
        .entries
        .iter()
        .map(|e| e.job_id.clone())
        .filter(|id| !known.contains_key(id.as_str()))
        .collect();
    offenders.sort();
    offenders.dedup();
    if !offenders.is_empty() {
        return Err(RunError::UnknownJobs(offenders));
    }
    let done: HashMap<String, ()> = contents
        .final_states()
        .into_iter()
        .filter(|(_, e)| e.state == JournalState::Done)
        .map(|(id, _)| (id, ()))
        .collect();
    execute(plan, backends, journal_path, manifest_path, opts, done)
}

struct Writers {
    journal: JournalWriter,
    manifest: ManifestWriter,
    records_appended: usize,
    duplicates_suppressed: usize,
    dead: bool,
}

struct SchedState {
    ready: VecDeque<usize>,
    waiting: HashMap<String, Vec<usize>>,
    remaining: usize,
    outcomes: HashMap<usize, JobState>,
}

struct Shared<'a> {
    plan: &'a [Job],
    backends: &'a Backends,
    opts: &'a RunOptions,
    writers: Mutex<Writers>,
    sched: Mutex<SchedState>,
    ready_cv: Condvar,
    abort: AtomicBool,
    store_root: PathBuf,
}

fn execute(
    plan: &[Job],
    backends: &Backends,
    journal_path: &Path,
    manifest_path: &Path,
    opts: &RunOptions,
    already_done: HashMap<String, ()>,
) -> Result<RunReport, RunError> {
    let started = Instant::now();
    let manifest = ManifestWriter::open(manifest_path)?;
    let journal = JournalWriter::open(journal_path)?.with_fault(opts.fault);
    let store_root = manifest.root().to_path_buf();

    let mut sched = SchedState {
        ready: VecDeque::new(),
        waiting: HashMap::new(),
        remaining: 0,
        outcomes: HashMap::new(),
    };
    let mut skipped = 0usize;
    for (idx, job) in plan.iter().enumerate() {
        if already_done.contains_key(&job.id) {
            skipped += 1;
            sched.outcomes.insert(idx, JobState::Done);
            continue;
        }
        sched.remaining += 1;
        match job.dependency() {
            Some(dep) if !already_done.contains_key(dep) => {
                sched.waiting.entry(dep.to_string()).or_default().push(idx);
            }
            _ => sched.ready.push_back(idx),
        }
    }

    let shared = Shared {
        plan,
        backends,
        opts,
        writers: Mutex::new(Writers {
            journal,
            manifest,
            records_appended: 0,
            duplicates_suppressed: 0,
            dead: false,
        }),
        sched: Mutex::new(sched),
        ready_cv: Condvar::new(),
        abort: AtomicBool::new(false),
        store_root,
    };

    let workers = opts.parallelism.max(1);
    std::thread::scope(|scope| {
        let mut handles = Vec::with_capacity(workers);
        for _ in 0..workers {
            handles.push(scope.spawn(|| worker_loop(&shared)));
        }
        for handle in handles {
            if handle.join().is_err() {
                shared.abort.store(true, Ordering::SeqCst);
            }
        }
    });

    if shared.abort.load(Ordering::SeqCst) {
        return Err(RunError::Aborted);
    }

    let sched = shared.sched.into_inner().expect("scheduler lock");
    let writers = shared.writers.into_inner().expect("writer lock");
    let mut per_kind_done: BTreeMap<String, usize> = BTreeMap::new();
    let mut final_states: BTreeMap<String, JobState> = BTreeMap::new();
    let mut done = 0usize;
    let mut failed = 0usize;
    for (idx, job) in plan.iter().enumerate() {
        let state = *sched.outcomes.get(&idx).unwrap_or(&JobState::Pending);
        final_states.insert(job.id.clone(), state);
        match state {
            JobState::Done => {
                if !already_done.contains_key(&job.id) {
                    done += 1;
                    *per_kind_done.entry(job.kind.as_str().to_string()).or_default() += 1;
                }
            }
            JobState::Failed => failed += 1,
            _ => {}
        }
    }

    Ok(RunReport {
        planned: plan.len(),
        skipped_already_done: skipped,
        done,
        failed,
        records_appended: writers.records_appended,
        duplicates_suppressed: writers.duplicates_suppressed,
        per_kind_done,
        wall_ms: started.elapsed().as_millis() as u64,
        final_states,
    })
}

fn worker_loop(shared: &Shared) {
    loop {
        if shared.abort.load(Ordering::SeqCst) {
            shared.ready_cv.notify_all();
            return;
        }
        let idx = {
            let mut sched = shared.sched.lock().expect("scheduler lock");
            loop {
                if shared.abort.load(Ordering::SeqCst) || sched.remaining == 0 {
                    shared.ready_cv.notify_all();
                    return;
                }
                if let Some(idx) = sched.ready.pop_front() {
                    break idx;
                }
                sched = shared.ready_cv.wait(sched).expect("scheduler lock");
            }
        };
        let job = &shared.plan[idx];
        let outcome = run_job_with_retries(shared, job);
        let terminal = match outcome {
            Ok(state) => state,
            Err(()) => {
                // Writer died (injected crash): abort without recording.
                shared.abort.store(true, Ordering::SeqCst);
                shared.ready_cv.notify_all();
                return;
            }
        };
        let mut sched = shared.sched.lock().expect("scheduler lock");
        sched.outcomes.insert(idx, terminal);
        sched.remaining -= 1;
        if let Some(waiters) = sched.waiting.remove(&job.id) {
            // Dependents become ready either way; a failed dependency makes
            // them fail fast at source resolution, keeping their state
            // transitions journaled like any other failure.
            for w in waiters {
                sched.ready.push_back(w);
            }
        }
        shared.ready_cv.notify_all();
    }
}

/// Executes one job with the retry policy. `Err(())` means the serialized
/// writer is dead (crash injection) and the run must abort.
fn run_job_with_retries(shared: &Shared, job: &Job) -> Result<JobState, ()> {
    let retry = &shared.opts.retry;
    let mut backoff_rng = RngState::new(job.seed).derive(0xb0ff);
    for attempt in 1..=retry.max_attempts.max(1) {
        append_journal(
            shared,
            JournalEntry {
                job_id: job.id.clone(),
                state: JournalState::InFlight,
                timestamp: shared.opts.clock.timestamp(job.ordinal),
                attempt,
                error: None,
            },
        )?;
        match execute_job(shared, job) {
            Ok(record) => {
                record_success(shared, job, attempt, &record)?;
                return Ok(JobState::Done);
            }
            Err(err) => {
                append_journal(
                    shared,
                    JournalEntry {
                        job_id: job.id.clone(),
                        state: JournalState::Failed,
                        timestamp: shared.opts.clock.timestamp(job.ordinal),
                        attempt,
                        error: Some(err.to_string()),
                    },
                )?;
                if err.retryable() && attempt < retry.max_attempts {
                    std::thread::sleep(retry.backoff(attempt, &mut backoff_rng));
                    continue;
                }
                return Ok(JobState::Failed);
            }
        }
    }
    Ok(JobState::Failed)
}

fn append_journal(shared: &Shared, entry: JournalEntry) -> Result<(), ()> {
    let mut writers = shared.writers.lock().expect("writer lock");
    if writers.dead {
        return Err(());
    }
    match writers.journal.append(&entry) {
        Ok(()) => Ok(()),
        Err(JournalError::CrashInjected) => {
            writers.dead = true;
            Err(())
        }
        Err(_) => {
            // Real journal I/O failure: stop the run, journal stays intact.
            writers.dead = true;
            Err(())
        }
    }
}

fn record_success(
    shared: &Shared,
    job: &Job,
    attempt: u32,
    record: &DatasetRecord,
) -> Result<(), ()> {
    {
        let mut writers = shared.writers.lock().expect("writer lock");
        if writers.dead {
            return Err(());
        }
        match writers.manifest.append(record) {
            Ok(()) => writers.records_appended += 1,
            Err(ManifestError::DuplicateId(_)) => writers.duplicates_suppressed += 1,
            Err(_) => {
                writers.dead = true;
                return Err(());
            }
        }
    }
    append_journal(
        shared,
        JournalEntry {
            job_id: job.id.clone(),
            state: JournalState::Done,
            timestamp: shared.opts.clock.timestamp(job.ordinal),
            attempt,
            error: None,
        },
    )
}

#[derive(Debug, Error)]
enum ExecError {
    #[error("chat backend: {0}")]
    Chat(#[from] ChatError),
    #[error("image backend: {0}")]
    Image(#[from] ImageError),
    #[error("prompt synthesis: {0}")]
    Prompt(PromptError),
    #[error("dependency failed: {0}")]
    DependencyFailed(String),
    #[error("cannot read source image {path}: {source}")]
    SourceRead {
        path: String,
        source: std::io::Error,
    },
    #[error("image store: {0}")]
    Store(#[from] ManifestError),
}

impl From<PromptError> for ExecError {
    fn from(err: PromptError) -> Self {
        match err {
            PromptError::Chat(inner) => ExecError::Chat(inner),
            other => ExecError::Prompt(other),
        }
    }
}

impl ExecError {
    fn retryable(&self) -> bool {
        match self {
            ExecError::Chat(e) => e.retryable(),
            ExecError::Image(e) => e.retryable(),
            // Malformed LLM output may succeed on retry against a real
            // backend; deterministic mocks never produce it.
            ExecError::Prompt(e) => matches!(
                e,
                PromptError::EmptyComposition
                    | PromptError::EmptyResponse
                    | PromptError::NotOneSentence { .. }
                    | PromptError::TooLong { .. }
                    | PromptError::Document(_)
            ),
            ExecError::DependencyFailed(_) => false,
            ExecError::SourceRead { .. } => false,
            ExecError::Store(_) => false,
        }
    }
}

fn execute_job(shared: &Shared, job: &Job) -> Result<DatasetRecord, ExecError> {
    let chat = shared.backends.chat.as_ref();
    let image = shared.backends.image.as_ref();
    let limits = &shared.opts.rate_limits;
    let root = &shared.store_root;
    let created_at = shared.opts.clock.timestamp(job.ordinal);
    let base = |pipeline: Pipeline, prompt: String, rel: String, hash: String| {
        DatasetRecord::T2i(T2IRecord {
            id: job.id.clone(),
            schema_version: SCHEMA_VERSION,
            pipeline,
            prompt,
            image: rel,
            attribute_provenance: None,
            backend_id: String::new(),
            content_hash: hash,
            hash_alg: HASH_ALG.into(),
            rng_generator: GENERATOR_NAME.into(),
            rng_seed: job.seed,
            created_at: created_at.clone(),
        })
    };

    match &job.payload {
        JobPayload::PromptFirst { bundle } => {
            limits.acquire(chat.id());
            let prompt = compose_prompt(bundle, chat)?;
            limits.acquire(image.id());
            let png = image.generate(&prompt)?;
            let (rel, hash) = store_image(root, &png)?;
            let mut record = base(Pipeline::PromptFirst, prompt, rel, hash);
            if let DatasetRecord::T2i(r) = &mut record {
                r.attribute_provenance = Some(bundle.clone());
                r.backend_id = image.id().to_string();
            }
            Ok(record)
        }
        JobPayload::ImageFirst { source } => {
            limits.acquire(chat.id());
            let caption = caption_image(source, chat)?;
            let bytes = std::fs::read(source).map_err(|e| ExecError::SourceRead {
                path: source.display().to_string(),
                source: e,
            })?;
            let (rel, hash) = store_image(root, &bytes)?;
            let mut record = base(Pipeline::ImageFirst, caption, rel, hash);
            if let DatasetRecord::T2i(r) = &mut record {
                r.backend_id = chat.id().to_string();
            }
            Ok(record)
        }
        JobPayload::Document { theme, font } => {
            limits.acquire(chat.id());
            let concept = generate_document_concept(theme, font, chat)?;
            limits.acquire(image.id());
            let png = image.generate(&concept.visual_template_prompt)?;
            let (rel, hash) = store_image(root, &png)?;
            let mut record = base(Pipeline::Document, concept.visual_template_prompt, rel, hash);
            if let DatasetRecord::T2i(r) = &mut record {
                r.backend_id = image.id().to_string();
            }
            Ok(record)
        }
        JobPayload::EditTriplet { task } => {
            let (source_abs, origin) = resolve_source(shared, &task.source)?;
            let source_bytes = std::fs::read(&source_abs).map_err(|e| ExecError::SourceRead {
                path: source_abs.display().to_string(),
                source: e,
            })?;
            limits.acquire(chat.id());
            let instruction = synthesize_edit_instruction(task, &source_abs, chat)?;
            limits.acquire(image.id());
            let edited = image.edit(&source_bytes, &instruction)?;
            let (source_rel, source_hash) = store_image(root, &source_bytes)?;
            let (edited_rel, edited_hash) = store_image(root, &edited)?;
            Ok(DatasetRecord::EditTriplet(EditTripletRecord {
                id: job.id.clone(),
                schema_version: SCHEMA_VERSION,
                source_image: source_rel,
                instruction,
                edited_image: edited_rel,
                category: task.category.clone(),
                subcategory: task.subcategory.clone(),
                source_origin: origin,
                backend_id: image.id().to_string(),
                source_hash,
                edited_hash,
                hash_alg: HASH_ALG.into(),
                rng_generator: GENERATOR_NAME.into(),
                rng_seed: job.seed,
                created_at,
            }))
        }
    }
}

/// Resolves an edit source to an absolute path. Generated sources read the
/// producing job's record from the manifest index; if the producer never
/// completed, the edit fails with a dependency error.
fn resolve_source(shared: &Shared, source: &SourceRef) -> Result<(PathBuf, SourceOrigin), ExecError> {
    match source {
        SourceRef::CuratedReal { path } => Ok((path.clone(), SourceOrigin::CuratedReal)),
        SourceRef::GeneratedT2i { job_id } => {
            let writers = shared.writers.lock().expect("writer lock");
            match writers.manifest.t2i_image_path(job_id) {
                Some(rel) => Ok((shared.store_root.join(rel), SourceOrigin::GeneratedT2i)),
                None => Err(ExecError::DependencyFailed(job_id.clone())),
            }
        }
    }
}
