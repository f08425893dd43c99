//! End-to-end orchestration: jobs, the adaptation pipeline, human review and
//! feedback.
//!
//! Jobs, feedback and the trace ledger live under one data directory:
//! `jobs/<jobId>.json`, `feedback.ndjson`, `ledger.ndjson`, `ledger.idx`.
//! Without a data directory everything is kept in memory.

use std::collections::BTreeMap;
use std::fs::{self, OpenOptions};
use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::{Arc, Mutex, RwLock};

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};

use crate::catalog::{self, load_catalog, Catalog, ClauseRef, DerivedRequirement, UserProfile};
use crate::gates::{
    self, GateConfig, GateReport, LoopContext, LoopError, LoopOutcome, RegenerationPolicy,
};
use crate::genai::{Backend, MockBackend, RemoteBackend, RemoteConfig, TransformResult};
use crate::prompt::{DomainInput, PromptError, TemplateStore};
use crate::rules::{activate_rules, parse_rule_set, ActiveRuleSet, RuleSet, TransformationKind};
use crate::trace::{
    export_report, BackendRef, FeedbackLink, Ledger, LedgerError, PipelineStep, RecordKind,
    ReportDocument, ReportFormat, ReviewKind, ReviewSummary, TraceRecord,
};
use crate::ui::{self, InteractionState, PictogramMap, UiError, UiSchema};

/// Template used when no active rule names one.
pub const FALLBACK_TEMPLATE: &str = "T-SIMPLIFY";

#[derive(Debug, thiserror::Error)]
pub enum ServiceError {
    #[error("validation error: {0}")]
    Validation(String),
    #[error("unknown job {0}")]
    UnknownJob(String),
    #[error("unknown component {0}")]
    UnknownComponent(String),
    #[error("illegal transition: {0}")]
    IllegalTransition(String),
    #[error("job failed: {0}")]
    JobFailed(String),
    #[error(transparent)]
    Ledger(#[from] LedgerError),
    #[error(transparent)]
    Prompt(#[from] PromptError),
    #[error("storage error: {0}")]
    Storage(String),
    #[error("configuration error: {0}")]
    Config(String),
}

fn storage(e: impl std::fmt::Display) -> ServiceError {
    ServiceError::Storage(e.to_string())
}

// ---------------------------------------------------------------------------
// Configuration
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BackendChoice {
    #[default]
    Mock,
    Remote,
}

impl std::str::FromStr for BackendChoice {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "mock" => Ok(Self::Mock),
            "remote" => Ok(Self::Remote),
            other => Err(format!("unknown backend `{other}` (mock|remote)")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(rename_all = "camelCase", default)]
pub struct BackendConfig {
    pub kind: BackendChoice,
    pub remote: Option<RemoteConfig>,
}

/// Main configuration file. Every field is optional.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(rename_all = "camelCase", default)]
pub struct ServiceConfig {
    pub data_dir: Option<PathBuf>,
    pub catalog_path: Option<PathBuf>,
    pub rules_path: Option<PathBuf>,
    pub templates_dir: Option<PathBuf>,
    pub backend: BackendConfig,
    pub gates: GateConfig,
    pub regeneration: RegenerationPolicy,
    /// Static bearer token required by the HTTP API when set.
    pub api_token: Option<String>,
}

impl ServiceConfig {
    pub fn load(path: &Path) -> Result<Self, ServiceError> {
        let src = fs::read_to_string(path)
            .map_err(|e| ServiceError::Config(format!("{}: {e}", path.display())))?;
        serde_json::from_str(&src)
            .map_err(|e| ServiceError::Config(format!("{}: {e}", path.display())))
    }

    /// Applies `ADAPT_BACKEND` and the `ADAPT_REMOTE_*` variables.
    pub fn apply_env(&mut self) -> Result<(), ServiceError> {
        if let Ok(kind) = std::env::var("ADAPT_BACKEND") {
            self.backend.kind = kind.parse().map_err(ServiceError::Config)?;
        }
        if let Some(remote) = RemoteConfig::from_env() {
            self.backend.remote = Some(remote);
        }
        Ok(())
    }
}

/// Static inputs of the pipeline.
#[derive(Debug, Clone)]
pub struct Components {
    pub catalog: Catalog,
    pub rules: RuleSet,
    pub templates: TemplateStore,
    pub pictos: PictogramMap,
}

impl Components {
    pub fn bundled() -> Self {
        Self {
            catalog: Catalog::bundled(),
            rules: RuleSet::bundled(),
            templates: TemplateStore::bundled(),
            pictos: PictogramMap::bundled(),
        }
    }

    /// Bundled components with any paths in `config` loaded over them.
    pub fn from_config(config: &ServiceConfig) -> Result<Self, ServiceError> {
        let mut c = Self::bundled();
        if let Some(p) = &config.catalog_path {
            let src = fs::read_to_string(p)
                .map_err(|e| ServiceError::Config(format!("{}: {e}", p.display())))?;
            c.catalog = load_catalog(&src)
                .map_err(|e| ServiceError::Config(format!("{}: {e}", p.display())))?;
        }
        if let Some(p) = &config.rules_path {
            let src = fs::read_to_string(p)
                .map_err(|e| ServiceError::Config(format!("{}: {e}", p.display())))?;
            c.rules = parse_rule_set(&src)
                .map_err(|e| ServiceError::Config(format!("{}: {e}", p.display())))?;
        }
        if let Some(dir) = &config.templates_dir {
            c.templates.load_dir(dir)?;
        }
        Ok(c)
    }
}

pub fn backend_from_config(
    config: &BackendConfig,
    pictos: &PictogramMap,
) -> Result<Arc<dyn Backend>, ServiceError> {
    match config.kind {
        BackendChoice::Mock => Ok(Arc::new(MockBackend::new(pictos.clone()))),
        BackendChoice::Remote => {
            let remote = config.remote.clone().ok_or_else(|| {
                ServiceError::Config("remote backend selected but no remote settings".into())
            })?;
            let backend =
                RemoteBackend::new(remote).map_err(|e| ServiceError::Config(e.to_string()))?;
            Ok(Arc::new(backend))
        }
    }
}

// ---------------------------------------------------------------------------
// Jobs, reviews, feedback
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum JobStatus {
    Pending,
    Running,
    Accepted,
    Escalated,
    Failed,
    Approved,
    Rejected,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct AdaptationJob {
    pub job_id: String,
    pub profile: UserProfile,
    pub input: DomainInput,
    pub status: JobStatus,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub schema: Option<UiSchema>,
    pub trace_record_ids: Vec<u64>,
    /// Latest candidate text, kept for review while escalated.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub candidate: Option<TransformResult>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub latest_gate_report: Option<GateReport>,
    /// Gate reports computed for this job so far, across runs and edits.
    #[serde(default)]
    pub gate_report_count: u32,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub failure: Option<String>,
    pub created_at: DateTime<Utc>,
    pub updated_at: DateTime<Utc>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct ReviewAction {
    #[serde(default)]
    pub job_id: String,
    pub reviewer: String,
    pub action: ReviewKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub edited_text: Option<String>,
    #[serde(default)]
    pub rationale: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct NavigationEvent {
    pub from: InteractionState,
    pub to: InteractionState,
    pub timestamp: DateTime<Utc>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct FeedbackEntry {
    /// Assigned by the service.
    #[serde(default)]
    pub feedback_id: String,
    pub job_id: String,
    pub component_id: String,
    pub comprehension_rating: u8,
    #[serde(default)]
    pub navigation_events: Vec<NavigationEvent>,
    #[serde(default)]
    pub comment: String,
}

fn valid_token(s: &str) -> bool {
    !s.is_empty()
        && s.len() <= 64
        && s.chars()
            .all(|c| c.is_ascii_alphanumeric() || c == '-' || c == '_')
}

/// Splits reviewer-edited text into steps: one per non-empty line, with any
/// leading `N.` numbering removed.
pub fn steps_from_edit(text: &str) -> Vec<String> {
    text.lines()
        .map(str::trim)
        .filter(|l| !l.is_empty())
        .map(|l| {
            let digits = l.chars().take_while(char::is_ascii_digit).count();
            match l[digits..].strip_prefix('.') {
                Some(rest) if digits > 0 && rest.starts_with(char::is_whitespace) => {
                    rest.trim().to_string()
                }
                _ => l.to_string(),
            }
        })
        .filter(|l| !l.is_empty())
        .collect()
}

// ---------------------------------------------------------------------------
// Service
// ---------------------------------------------------------------------------

struct Store {
    dir: Option<PathBuf>,
}

impl Store {
    fn jobs_dir(&self) -> Option<PathBuf> {
        self.dir.as_ref().map(|d| d.join("jobs"))
    }

    fn save_job(&self, job: &AdaptationJob) -> Result<(), ServiceError> {
        let Some(dir) = self.jobs_dir() else {
            return Ok(());
        };
        let body = serde_json::to_vec_pretty(job).map_err(storage)?;
        let tmp = dir.join(format!(".{}.json.tmp", job.job_id));
        let mut f = fs::File::create(&tmp).map_err(storage)?;
        f.write_all(&body).map_err(storage)?;
        f.sync_all().map_err(storage)?;
        fs::rename(&tmp, dir.join(format!("{}.json", job.job_id))).map_err(storage)
    }

    fn load_jobs(&self) -> Result<Vec<AdaptationJob>, ServiceError> {
        let Some(dir) = self.jobs_dir() else {
            return Ok(Vec::new());
        };
        fs::create_dir_all(&dir).map_err(storage)?;
        let mut out = Vec::new();
        for entry in fs::read_dir(&dir).map_err(storage)? {
            let path = entry.map_err(storage)?.path();
            if path.extension().is_some_and(|e| e == "json")
                && !path
                    .file_name()
                    .is_some_and(|n| n.to_string_lossy().starts_with('.'))
            {
                let src = fs::read_to_string(&path).map_err(storage)?;
                out.push(
                    serde_json::from_str(&src)
                        .map_err(|e| storage(format!("{}: {e}", path.display())))?,
                );
            }
        }
        Ok(out)
    }

    fn append_feedback(&self, entry: &FeedbackEntry) -> Result<(), ServiceError> {
        let Some(dir) = &self.dir else { return Ok(()) };
        let mut f = OpenOptions::new()
            .create(true)
            .append(true)
            .open(dir.join("feedback.ndjson"))
            .map_err(storage)?;
        let mut line = serde_json::to_string(entry).map_err(storage)?;
        line.push('\n');
        f.write_all(line.as_bytes()).map_err(storage)?;
        f.sync_data().map_err(storage)
    }

    fn load_feedback(&self) -> Result<Vec<FeedbackEntry>, ServiceError> {
        let Some(dir) = &self.dir else {
            return Ok(Vec::new());
        };
        let path = dir.join("feedback.ndjson");
        if !path.exists() {
            return Ok(Vec::new());
        }
        fs::read_to_string(&path)
            .map_err(storage)?
            .lines()
            .filter(|l| !l.trim().is_empty())
            .map(|l| serde_json::from_str(l).map_err(storage))
            .collect()
    }
}

/// Pipeline state derived from a profile.
struct Plan {
    dars: Vec<DerivedRequirement>,
    active: ActiveRuleSet,
}

pub struct AdaptService {
    components: Components,
    backend: Arc<dyn Backend>,
    gates: GateConfig,
    policy: RegenerationPolicy,
    ledger: Ledger,
    store: Store,
    jobs: RwLock<BTreeMap<String, AdaptationJob>>,
    job_locks: Mutex<BTreeMap<String, Arc<Mutex<()>>>>,
    feedback: RwLock<Vec<FeedbackEntry>>,
}

impl AdaptService {
    /// Opens the stores under `config.data_dir` (or memory when unset).
    /// Jobs interrupted while pending or running are marked failed.
    pub fn new(
        config: &ServiceConfig,
        components: Components,
        backend: Arc<dyn Backend>,
    ) -> Result<Self, ServiceError> {
        config
            .regeneration
            .validate()
            .map_err(ServiceError::Config)?;
        let store = Store {
            dir: config.data_dir.clone(),
        };
        let ledger = match &config.data_dir {
            Some(dir) => Ledger::open(dir)?,
            None => Ledger::in_memory(),
        };
        let mut jobs = BTreeMap::new();
        for mut job in store.load_jobs()? {
            if matches!(job.status, JobStatus::Pending | JobStatus::Running) {
                job.status = JobStatus::Failed;
                job.failure = Some("interrupted by restart".into());
                store.save_job(&job)?;
            }
            jobs.insert(job.job_id.clone(), job);
        }
        let feedback = store.load_feedback()?;
        Ok(Self {
            components,
            backend,
            gates: config.gates.clone(),
            policy: config.regeneration.clone(),
            ledger,
            store,
            jobs: RwLock::new(jobs),
            job_locks: Mutex::new(BTreeMap::new()),
            feedback: RwLock::new(feedback),
        })
    }

    /// In-memory service with bundled components and default settings.
    pub fn in_memory(backend: Arc<dyn Backend>) -> Self {
        Self::new(&ServiceConfig::default(), Components::bundled(), backend)
            .expect("default config is valid")
    }

    pub fn components(&self) -> &Components {
        &self.components
    }

    pub fn ledger(&self) -> &Ledger {
        &self.ledger
    }

    pub fn policy(&self) -> &RegenerationPolicy {
        &self.policy
    }

    fn lock_for(&self, job_id: &str) -> Arc<Mutex<()>> {
        let mut locks = self.job_locks.lock().expect("job lock table");
        locks.entry(job_id.to_string()).or_default().clone()
    }

    fn put(&self, mut job: AdaptationJob) -> Result<AdaptationJob, ServiceError> {
        job.updated_at = Utc::now();
        self.store.save_job(&job)?;
        self.jobs
            .write()
            .expect("jobs lock")
            .insert(job.job_id.clone(), job.clone());
        Ok(job)
    }

    pub fn get_job(&self, job_id: &str) -> Option<AdaptationJob> {
        self.jobs.read().expect("jobs lock").get(job_id).cloned()
    }

    pub fn jobs(&self) -> Vec<AdaptationJob> {
        self.jobs
            .read()
            .expect("jobs lock")
            .values()
            .cloned()
            .collect()
    }

    pub fn review_queue(&self) -> Vec<AdaptationJob> {
        let mut q: Vec<_> = self
            .jobs
            .read()
            .expect("jobs lock")
            .values()
            .filter(|j| j.status == JobStatus::Escalated)
            .cloned()
            .collect();
        q.sort_by(|a, b| (a.updated_at, &a.job_id).cmp(&(b.updated_at, &b.job_id)));
        q
    }

    pub fn job_trace(&self, job_id: &str) -> Result<Vec<TraceRecord>, ServiceError> {
        if self.get_job(job_id).is_none() {
            return Err(ServiceError::UnknownJob(job_id.to_string()));
        }
        Ok(self.ledger.by_job(job_id))
    }

    pub fn feedback_entries(&self) -> Vec<FeedbackEntry> {
        self.feedback.read().expect("feedback lock").clone()
    }

    pub fn compliance_report(&self, format: ReportFormat) -> ReportDocument {
        export_report(
            &self.components.catalog,
            &self.ledger,
            &self.components.rules,
            format,
        )
    }

    /// Validates the request and stores a pending job.
    pub fn create_job(
        &self,
        profile: UserProfile,
        input: DomainInput,
    ) -> Result<String, ServiceError> {
        profile
            .validate()
            .map_err(|e| ServiceError::Validation(e.to_string()))?;
        input.validate().map_err(ServiceError::Validation)?;
        let now = Utc::now();
        let job = AdaptationJob {
            job_id: uuid::Uuid::new_v4().to_string(),
            profile,
            input,
            status: JobStatus::Pending,
            schema: None,
            trace_record_ids: Vec::new(),
            candidate: None,
            latest_gate_report: None,
            gate_report_count: 0,
            failure: None,
            created_at: now,
            updated_at: now,
        };
        let id = job.job_id.clone();
        self.put(job)?;
        Ok(id)
    }

    /// Validates, creates and runs a job to completion.
    pub fn run_pipeline(
        &self,
        profile: UserProfile,
        input: DomainInput,
    ) -> Result<AdaptationJob, ServiceError> {
        let id = self.create_job(profile, input)?;
        self.execute_job(&id)
    }

    fn plan(&self, profile: &UserProfile) -> Plan {
        let dars = catalog::derive_requirements(profile, &self.components.catalog);
        let active = activate_rules(&self.components.rules, &dars, profile);
        Plan { dars, active }
    }

    fn base_record(&self, job: &AdaptationJob, plan: &Plan, kind: RecordKind) -> TraceRecord {
        let mut r = TraceRecord::new(job.job_id.clone(), kind);
        r.profile_need_ids = job.profile.needs.iter().copied().collect();
        r.dar_ids = plan.dars.iter().map(|d| d.dar_id.clone()).collect();
        r.rule_ids = plan.active.rule_ids();
        let mut refs: Vec<ClauseRef> = Vec::new();
        let all = plan.dars.iter().flat_map(|d| d.refs.iter()).chain(
            plan.active
                .entries()
                .iter()
                .flat_map(|e| e.rule.normative_refs.iter()),
        );
        for c in all {
            if !refs.contains(c) {
                refs.push(c.clone());
            }
        }
        r.normative_refs = refs;
        let d = self.backend.descriptor();
        r.backend = Some(BackendRef {
            backend_id: d.backend_id,
            model_version: d.model_version,
        });
        r.max_attempts = self.policy.max_attempts;
        r
    }

    fn build(
        &self,
        result: &TransformResult,
        plan: &Plan,
        profile: &UserProfile,
    ) -> Result<UiSchema, UiError> {
        ui::build_schema(result, &plan.active, profile, &self.components.pictos)
    }

    /// Runs a pending job through derivation, activation, prompting, the
    /// regeneration loop and schema construction, then writes its trace.
    pub fn execute_job(&self, job_id: &str) -> Result<AdaptationJob, ServiceError> {
        let lock = self.lock_for(job_id);
        let _guard = lock.lock().expect("job lock");
        let mut job = self
            .get_job(job_id)
            .ok_or_else(|| ServiceError::UnknownJob(job_id.to_string()))?;
        if job.status != JobStatus::Pending {
            return Err(ServiceError::IllegalTransition(format!(
                "job is {:?}, not Pending",
                job.status
            )));
        }
        job.status = JobStatus::Running;
        job = self.put(job)?;

        let mut seq = 0;
        let mut steps = Vec::new();
        let mut step = |name: &str| {
            seq += 1;
            steps.push(PipelineStep {
                seq,
                step: name.to_string(),
            });
        };

        step("deriveRequirements");
        let dars = catalog::derive_requirements(&job.profile, &self.components.catalog);
        step("activateRules");
        let active = activate_rules(&self.components.rules, &dars, &job.profile);
        let plan = Plan { dars, active };
        step("instantiatePrompt");
        let template_id = plan
            .active
            .primary_template()
            .unwrap_or(FALLBACK_TEMPLATE)
            .to_string();
        let prompt = self.components.templates.instantiate(
            &template_id,
            None,
            &job.profile,
            &job.input,
            &plan.active,
        )?;
        step("transformAndGate");
        let ctx = LoopContext {
            backend: self.backend.as_ref(),
            prompt: &prompt,
            active: &plan.active,
            input: &job.input,
            pictos: &self.components.pictos,
            gates: &self.gates,
        };
        let run = gates::regeneration_loop(&ctx, &self.policy);

        let mut record = self.base_record(&job, &plan, RecordKind::Adaptation);
        record.template = Some(prompt.template.clone());
        let attempts = match &run {
            Ok(r) => r.attempts.clone(),
            Err(LoopError::Backend { attempts, .. }) | Err(LoopError::Exhausted(_, attempts)) => {
                attempts.clone()
            }
            Err(LoopError::Policy(_)) => Vec::new(),
        };
        record.attempts = attempts.len() as u32;
        record.gate_reports = attempts.iter().map(|a| a.report.clone()).collect();
        job.gate_report_count += record.attempts;
        job.latest_gate_report = record.gate_reports.last().cloned();
        if let Some(last) = &job.latest_gate_report {
            record.content_hash = last.content_hash.clone();
        }

        match run {
            Ok(run) => match run.outcome {
                LoopOutcome::Accepted { result, .. } => {
                    step("buildSchema");
                    match self.build(&result, &plan, &job.profile) {
                        Ok(schema) => {
                            record = record.with_schema(&schema);
                            job.status = JobStatus::Accepted;
                            job.schema = Some(schema);
                            job.candidate = Some(result);
                        }
                        Err(e) => {
                            job.status = JobStatus::Failed;
                            job.failure = Some(e.to_string());
                            job.candidate = Some(result);
                        }
                    }
                }
                LoopOutcome::Escalated { candidate, .. } => {
                    record.escalated = true;
                    job.status = JobStatus::Escalated;
                    job.candidate = candidate;
                }
            },
            Err(e) => {
                job.status = JobStatus::Failed;
                job.failure = Some(e.to_string());
            }
        }
        step("appendRecord");
        record.pipeline = steps;
        let id = self.ledger.append(record)?;
        job.trace_record_ids.push(id);
        let job = self.put(job)?;
        tracing::info!(job_id, status = ?job.status, "job finished");
        if job.status == JobStatus::Failed {
            return Err(ServiceError::JobFailed(
                job.failure.clone().unwrap_or_default(),
            ));
        }
        Ok(job)
    }

    /// Approve, reject or edit a job awaiting review (or already accepted).
    ///
    /// Approving an escalated job is a recorded human override: the held
    /// candidate is rendered and served despite its failing gate report.
    /// Edits are re-gated and never bypass the gates.
    pub fn apply_review(&self, action: ReviewAction) -> Result<AdaptationJob, ServiceError> {
        if !valid_token(&action.reviewer) {
            return Err(ServiceError::Validation(
                "reviewer must be an opaque id of 1-64 [A-Za-z0-9_-]".into(),
            ));
        }
        match (action.action, &action.edited_text) {
            (ReviewKind::Edit, None) => {
                return Err(ServiceError::Validation("edit requires editedText".into()))
            }
            (ReviewKind::Edit, Some(t)) if t.trim().is_empty() => {
                return Err(ServiceError::Validation("editedText is empty".into()))
            }
            (ReviewKind::Approve | ReviewKind::Reject, Some(_)) => {
                return Err(ServiceError::Validation(
                    "editedText is only allowed with Edit".into(),
                ))
            }
            _ => {}
        }
        let lock = self.lock_for(&action.job_id);
        let _guard = lock.lock().expect("job lock");
        let mut job = self
            .get_job(&action.job_id)
            .ok_or_else(|| ServiceError::UnknownJob(action.job_id.clone()))?;
        if !matches!(job.status, JobStatus::Escalated | JobStatus::Accepted) {
            return Err(ServiceError::IllegalTransition(format!(
                "cannot review a {:?} job",
                job.status
            )));
        }
        let plan = self.plan(&job.profile);
        let mut record = self.base_record(&job, &plan, RecordKind::Review);
        record.review_action = Some(ReviewSummary {
            action: action.action,
            reviewer: action.reviewer.clone(),
        });
        record.pipeline = vec![PipelineStep {
            seq: 1,
            step: format!("review{:?}", action.action),
        }];
        let was_escalated = job.status == JobStatus::Escalated;

        match action.action {
            ReviewKind::Approve => {
                if was_escalated {
                    let candidate = job.candidate.clone().ok_or_else(|| {
                        ServiceError::IllegalTransition(
                            "no candidate to approve; edit or reject instead".into(),
                        )
                    })?;
                    let schema = self.build(&candidate, &plan, &job.profile).map_err(|e| {
                        ServiceError::IllegalTransition(format!(
                            "candidate cannot be rendered: {e}"
                        ))
                    })?;
                    record = record.with_schema(&schema);
                    record.escalated = true;
                    record.gate_reports = job.latest_gate_report.iter().cloned().collect();
                    job.schema = Some(schema);
                } else if let Some(s) = &job.schema {
                    record.content_hash = s.content_hash.clone();
                }
                record.attempts = record.gate_reports.len() as u32;
                job.status = JobStatus::Approved;
            }
            ReviewKind::Reject => {
                record.escalated = was_escalated;
                job.status = JobStatus::Rejected;
                job.schema = None;
            }
            ReviewKind::Edit => {
                let edited = action.edited_text.clone().unwrap_or_default();
                let steps = steps_from_edit(&edited);
                let mut result = TransformResult {
                    plain_text: steps.join(" "),
                    steps,
                    pictogram_annotations: Vec::new(),
                    raw_response: String::new(),
                };
                if plan.active.has(TransformationKind::AttachPictograms) {
                    result.pictogram_annotations = self.components.pictos.annotate(&result.steps);
                }
                let attempt = job.gate_report_count + 1;
                let report = gates::run_gates(&job.input, &result, &self.gates, attempt);
                job.gate_report_count = attempt;
                record.attempts = 1;
                record.gate_reports = vec![report.clone()];
                record.content_hash = report.content_hash.clone();
                job.latest_gate_report = Some(report.clone());
                job.candidate = Some(result.clone());
                if report.overall_passed {
                    let schema = self.build(&result, &plan, &job.profile).map_err(|e| {
                        ServiceError::Validation(format!("edited text cannot be rendered: {e}"))
                    })?;
                    record = record.with_schema(&schema);
                    job.schema = Some(schema);
                    job.status = JobStatus::Accepted;
                } else {
                    record.escalated = true;
                    job.schema = None;
                    job.status = JobStatus::Escalated;
                }
            }
        }
        let id = self.ledger.append(record)?;
        job.trace_record_ids.push(id);
        self.put(job)
    }

    /// Stores a feedback entry and links it into the trace.
    pub fn record_feedback(&self, mut entry: FeedbackEntry) -> Result<String, ServiceError> {
        if !(1..=5).contains(&entry.comprehension_rating) {
            return Err(ServiceError::Validation(format!(
                "comprehensionRating must be 1-5, got {}",
                entry.comprehension_rating
            )));
        }
        let job = self
            .get_job(&entry.job_id)
            .ok_or_else(|| ServiceError::UnknownJob(entry.job_id.clone()))?;
        let schema = job
            .schema
            .as_ref()
            .ok_or_else(|| ServiceError::Validation(format!("job {} has no schema", job.job_id)))?;
        if schema.find(&entry.component_id).is_none() {
            return Err(ServiceError::UnknownComponent(entry.component_id.clone()));
        }
        for ev in &entry.navigation_events {
            if !schema.interaction.allows(ev.from, ev.to) {
                return Err(ServiceError::IllegalTransition(format!(
                    "{:?} -> {:?}",
                    ev.from, ev.to
                )));
            }
        }
        entry.feedback_id = uuid::Uuid::new_v4().to_string();
        self.store.append_feedback(&entry)?;

        let mut record = TraceRecord::new(job.job_id.clone(), RecordKind::Feedback);
        record.profile_need_ids = job.profile.needs.iter().copied().collect();
        record.content_hash = schema.content_hash.clone();
        record.feedback = Some(FeedbackLink {
            feedback_id: entry.feedback_id.clone(),
            component_id: entry.component_id.clone(),
            rating: entry.comprehension_rating,
        });
        record.pipeline = vec![PipelineStep {
            seq: 1,
            step: "recordFeedback".into(),
        }];
        self.ledger.append(record)?;
        let id = entry.feedback_id.clone();
        self.feedback.write().expect("feedback lock").push(entry);
        Ok(id)
    }
}
