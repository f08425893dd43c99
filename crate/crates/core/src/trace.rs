//! Append-only provenance ledger and compliance reporting.
//!
//! Records are stored one JSON object per line in `ledger.ndjson`, with an
//! index sidecar `ledger.idx` holding `{recordId, jobId, offset, length}` for
//! each line. Every append is fsynced before it becomes visible to readers.

use std::collections::{BTreeMap, BTreeSet};
use std::fs::{self, File, OpenOptions};
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};
use std::sync::RwLock;

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};

use crate::catalog::{Catalog, ClauseRef, UserNeed};
use crate::gates::{GateKind, GateReport};
use crate::prompt::TemplateHandle;
use crate::rules::{RuleSet, TransformationKind};
use crate::ui::{ComponentKind, OutputModality, Theme, UiSchema, MIN_CONTRAST};

pub const LEDGER_FILE: &str = "ledger.ndjson";
pub const INDEX_FILE: &str = "ledger.idx";

/// Keys that must never appear anywhere in a serialized record.
pub const FORBIDDEN_KEYS: [&str; 8] = [
    "name",
    "email",
    "address",
    "diagnosis",
    "rawProfile",
    "comment",
    "profile",
    "freeText",
];

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum LedgerError {
    #[error("privacy violation: {0}")]
    PrivacyViolation(String),
    #[error("invalid record: {0}")]
    Invalid(String),
    #[error("ledger storage error: {0}")]
    Storage(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum RecordKind {
    Adaptation,
    Review,
    Feedback,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ReviewKind {
    Approve,
    Reject,
    Edit,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct ReviewSummary {
    pub action: ReviewKind,
    pub reviewer: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct BackendRef {
    pub backend_id: String,
    pub model_version: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct PipelineStep {
    pub seq: u32,
    pub step: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct ComponentRef {
    pub component_id: String,
    pub kind: ComponentKind,
    pub requirement_refs: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct SchemaSummary {
    pub theme: Theme,
    pub min_contrast_ratio: f64,
    pub modalities: BTreeSet<OutputModality>,
    pub pictogram_count: usize,
    pub step_count: usize,
}

impl SchemaSummary {
    pub fn of(schema: &UiSchema) -> Self {
        Self {
            theme: schema.theme,
            min_contrast_ratio: schema.min_contrast_ratio(),
            modalities: schema.modalities.clone(),
            pictogram_count: schema.count(ComponentKind::PictogramLabel),
            step_count: schema.count(ComponentKind::StepBlock),
        }
    }
}

/// Link from a feedback entry to a component. The comment is never stored.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct FeedbackLink {
    pub feedback_id: String,
    pub component_id: String,
    pub rating: u8,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct TraceRecord {
    /// Assigned by the ledger on append.
    pub record_id: u64,
    /// Assigned by the ledger on append.
    pub timestamp: DateTime<Utc>,
    pub job_id: String,
    pub kind: RecordKind,
    pub profile_need_ids: Vec<UserNeed>,
    pub dar_ids: Vec<String>,
    pub rule_ids: Vec<String>,
    pub normative_refs: Vec<ClauseRef>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub template: Option<TemplateHandle>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub backend: Option<BackendRef>,
    pub attempts: u32,
    pub max_attempts: u32,
    pub gate_reports: Vec<GateReport>,
    pub escalated: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub review_action: Option<ReviewSummary>,
    pub output_components: Vec<ComponentRef>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub schema_summary: Option<SchemaSummary>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub feedback: Option<FeedbackLink>,
    pub content_hash: String,
    pub pipeline: Vec<PipelineStep>,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub annotations: BTreeMap<String, String>,
}

impl TraceRecord {
    /// Empty record of the given kind; fill fields before appending.
    pub fn new(job_id: impl Into<String>, kind: RecordKind) -> Self {
        Self {
            record_id: 0,
            timestamp: DateTime::<Utc>::UNIX_EPOCH,
            job_id: job_id.into(),
            kind,
            profile_need_ids: Vec::new(),
            dar_ids: Vec::new(),
            rule_ids: Vec::new(),
            normative_refs: Vec::new(),
            template: None,
            backend: None,
            attempts: 0,
            max_attempts: 0,
            gate_reports: Vec::new(),
            escalated: false,
            review_action: None,
            output_components: Vec::new(),
            schema_summary: None,
            feedback: None,
            content_hash: String::new(),
            pipeline: Vec::new(),
            annotations: BTreeMap::new(),
        }
    }

    pub fn with_schema(mut self, schema: &UiSchema) -> Self {
        self.output_components = schema
            .nodes()
            .into_iter()
            .map(|n| ComponentRef {
                component_id: n.component_id.clone(),
                kind: n.kind,
                requirement_refs: n.requirement_refs.clone(),
            })
            .collect();
        self.schema_summary = Some(SchemaSummary::of(schema));
        self.content_hash = schema.content_hash.clone();
        self
    }

    pub fn component_ids(&self) -> impl Iterator<Item = &str> {
        self.output_components
            .iter()
            .map(|c| c.component_id.as_str())
    }

    /// Copy with the ledger-assigned fields cleared, for content comparison.
    pub fn without_identity(&self) -> Self {
        let mut r = self.clone();
        r.record_id = 0;
        r.timestamp = DateTime::<Utc>::UNIX_EPOCH;
        r.job_id = String::new();
        r
    }

    fn validate(&self) -> Result<(), LedgerError> {
        check_privacy(self)?;
        if self.kind == RecordKind::Adaptation && self.gate_reports.len() != self.attempts as usize
        {
            return Err(LedgerError::Invalid(format!(
                "{} gate reports for {} attempts",
                self.gate_reports.len(),
                self.attempts
            )));
        }
        if self.escalated && self.attempts != self.max_attempts && self.review_action.is_none() {
            return Err(LedgerError::Invalid(
                "escalated record must exhaust its attempts or carry a review action".into(),
            ));
        }
        let seqs: Vec<u32> = self.pipeline.iter().map(|s| s.seq).collect();
        if seqs.windows(2).any(|w| w[0] >= w[1]) {
            return Err(LedgerError::Invalid("pipeline steps out of order".into()));
        }
        Ok(())
    }
}

fn looks_like_email(s: &str) -> bool {
    s.split_whitespace().any(|w| {
        let w = w.trim_matches(|c: char| !c.is_alphanumeric());
        match w.split_once('@') {
            Some((local, domain)) => {
                !local.is_empty() && domain.contains('.') && !domain.starts_with('.')
            }
            None => false,
        }
    })
}

fn check_privacy(r: &TraceRecord) -> Result<(), LedgerError> {
    fn walk(v: &serde_json::Value, path: &str) -> Result<(), LedgerError> {
        match v {
            serde_json::Value::Object(map) => {
                for (k, child) in map {
                    if FORBIDDEN_KEYS.contains(&k.as_str()) {
                        return Err(LedgerError::PrivacyViolation(format!(
                            "forbidden key `{k}` at {path}"
                        )));
                    }
                    walk(child, &format!("{path}.{k}"))?;
                }
            }
            serde_json::Value::Array(items) => {
                for (i, child) in items.iter().enumerate() {
                    walk(child, &format!("{path}[{i}]"))?;
                }
            }
            serde_json::Value::String(s) if looks_like_email(s) => {
                return Err(LedgerError::PrivacyViolation(format!(
                    "e-mail address at {path}"
                )));
            }
            _ => {}
        }
        Ok(())
    }
    let v = serde_json::to_value(r).map_err(|e| LedgerError::Invalid(e.to_string()))?;
    walk(&v, "$")
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
struct IndexEntry {
    record_id: u64,
    job_id: String,
    offset: u64,
    length: u64,
}

struct Files {
    ledger: File,
    index: File,
    offset: u64,
}

struct State {
    records: Vec<TraceRecord>,
    files: Option<Files>,
}

/// Append-only trace store; in-memory or file-backed.
pub struct Ledger {
    state: RwLock<State>,
    dir: Option<PathBuf>,
}

fn storage(e: impl std::fmt::Display) -> LedgerError {
    LedgerError::Storage(e.to_string())
}

impl Ledger {
    pub fn in_memory() -> Self {
        Self {
            state: RwLock::new(State {
                records: Vec::new(),
                files: None,
            }),
            dir: None,
        }
    }

    /// Opens (or creates) a ledger in `dir`. A torn final line left by a crash
    /// is dropped and the file truncated to the last complete record.
    pub fn open(dir: &Path) -> Result<Self, LedgerError> {
        fs::create_dir_all(dir).map_err(storage)?;
        let path = dir.join(LEDGER_FILE);
        let mut records = Vec::new();
        let mut good_len = 0u64;
        if path.exists() {
            let reader = BufReader::new(File::open(&path).map_err(storage)?);
            let lines: Vec<String> = reader.lines().collect::<Result<_, _>>().map_err(storage)?;
            let content_len = fs::metadata(&path).map_err(storage)?.len();
            let n = lines.len();
            for (i, line) in lines.into_iter().enumerate() {
                match serde_json::from_str::<TraceRecord>(&line) {
                    Ok(r) => {
                        good_len += line.len() as u64 + 1;
                        records.push(r);
                    }
                    Err(e) if i + 1 == n => {
                        tracing::warn!(error = %e, "dropping torn final ledger line");
                    }
                    Err(e) => {
                        return Err(storage(format!("{}: line {}: {e}", path.display(), i + 1)))
                    }
                }
            }
            good_len = good_len.min(content_len);
        }
        let ledger = OpenOptions::new()
            .create(true)
            .append(true)
            .open(&path)
            .map_err(storage)?;
        ledger.set_len(good_len).map_err(storage)?;
        // The index is derived data; rebuild it so it always matches.
        let mut index = File::create(dir.join(INDEX_FILE)).map_err(storage)?;
        let mut offset = 0u64;
        for r in &records {
            let length = serde_json::to_string(r).map_err(storage)?.len() as u64 + 1;
            write_index(&mut index, r, offset, length)?;
            offset += length;
        }
        index.sync_all().map_err(storage)?;
        Ok(Self {
            state: RwLock::new(State {
                records,
                files: Some(Files {
                    ledger,
                    index,
                    offset: good_len,
                }),
            }),
            dir: Some(dir.to_path_buf()),
        })
    }

    pub fn dir(&self) -> Option<&Path> {
        self.dir.as_deref()
    }

    /// Validates, stamps and durably stores a record; returns its id.
    pub fn append(&self, mut record: TraceRecord) -> Result<u64, LedgerError> {
        record.validate()?;
        let mut st = self.state.write().expect("ledger lock");
        let id = st.records.last().map_or(1, |r| r.record_id + 1);
        record.record_id = id;
        record.timestamp = Utc::now();
        if let Some(files) = st.files.as_mut() {
            let mut line = serde_json::to_string(&record).map_err(storage)?;
            line.push('\n');
            files.ledger.write_all(line.as_bytes()).map_err(storage)?;
            files.ledger.sync_data().map_err(storage)?;
            write_index(&mut files.index, &record, files.offset, line.len() as u64)?;
            files.index.sync_data().map_err(storage)?;
            files.offset += line.len() as u64;
        }
        st.records.push(record);
        Ok(id)
    }

    pub fn len(&self) -> usize {
        self.state.read().expect("ledger lock").records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn records(&self) -> Vec<TraceRecord> {
        self.state.read().expect("ledger lock").records.clone()
    }

    pub fn get(&self, record_id: u64) -> Option<TraceRecord> {
        let st = self.state.read().expect("ledger lock");
        st.records
            .iter()
            .find(|r| r.record_id == record_id)
            .cloned()
    }

    pub fn by_job(&self, job_id: &str) -> Vec<TraceRecord> {
        let st = self.state.read().expect("ledger lock");
        st.records
            .iter()
            .filter(|r| r.job_id == job_id)
            .cloned()
            .collect()
    }

    /// The NDJSON text as stored (or as it would be stored, in memory).
    pub fn serialized(&self) -> String {
        self.records()
            .iter()
            .map(|r| serde_json::to_string(r).expect("record serializes") + "\n")
            .collect()
    }
}

fn write_index(
    index: &mut File,
    r: &TraceRecord,
    offset: u64,
    length: u64,
) -> Result<(), LedgerError> {
    let entry = IndexEntry {
        record_id: r.record_id,
        job_id: r.job_id.clone(),
        offset,
        length,
    };
    let mut line = serde_json::to_string(&entry).map_err(storage)?;
    line.push('\n');
    index.write_all(line.as_bytes()).map_err(storage)
}

// ---------------------------------------------------------------------------
// Integrity checks
// ---------------------------------------------------------------------------

/// References in records that do not resolve against the rule set or catalog.
pub fn dangling_references(
    records: &[TraceRecord],
    catalog: &Catalog,
    rules: &RuleSet,
) -> Vec<String> {
    let mut out = Vec::new();
    for r in records {
        for id in &r.rule_ids {
            if rules.get(id).is_none() {
                out.push(format!("record {}: unknown rule {id}", r.record_id));
            }
        }
        for id in &r.dar_ids {
            if catalog.dar(id).is_none() {
                out.push(format!("record {}: unknown DAR {id}", r.record_id));
            }
        }
        for c in &r.normative_refs {
            if !catalog.has_ref(c) {
                out.push(format!("record {}: unknown normative ref {c}", r.record_id));
            }
        }
    }
    out
}

/// How many of the job's records list each leaf of `schema`.
pub fn leaf_coverage(schema: &UiSchema, job_records: &[TraceRecord]) -> BTreeMap<String, usize> {
    schema
        .leaves()
        .into_iter()
        .map(|leaf| {
            let n = job_records
                .iter()
                .filter(|r| r.component_ids().any(|c| c == leaf.component_id))
                .count();
            (leaf.component_id.clone(), n)
        })
        .collect()
}

// ---------------------------------------------------------------------------
// Compliance
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ReqStatus {
    Satisfied,
    Unsatisfied,
    NotApplicable,
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct Evidence {
    pub record_id: u64,
    pub component_id: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct RequirementStatus {
    pub req_id: String,
    pub title: String,
    pub refs: Vec<ClauseRef>,
    pub status: ReqStatus,
    pub evidence: Vec<Evidence>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct ComplianceReport {
    pub catalog_version: u32,
    pub generated_at: DateTime<Utc>,
    pub requirements: Vec<RequirementStatus>,
}

impl ComplianceReport {
    pub fn status(&self, req_id: &str) -> Option<ReqStatus> {
        self.requirements
            .iter()
            .find(|r| r.req_id == req_id)
            .map(|r| r.status)
    }
}

fn kinds_of(r: &TraceRecord, rules: &RuleSet) -> BTreeSet<TransformationKind> {
    r.rule_ids
        .iter()
        .filter_map(|id| rules.get(id))
        .map(|rule| rule.transformation)
        .collect()
}

fn served(r: &TraceRecord) -> bool {
    r.schema_summary.is_some() && !r.output_components.is_empty()
}

fn rule_markers(kind: TransformationKind, rules: &RuleSet) -> BTreeSet<String> {
    rules
        .rules()
        .iter()
        .filter(|r| r.transformation == kind)
        .flat_map(|r| r.normative_refs.iter().map(|c| c.to_string()))
        .collect()
}

/// Components of `r` whose requirement refs mention any of `markers`.
fn evidence_for(
    r: &TraceRecord,
    markers: &BTreeSet<String>,
    kind: Option<ComponentKind>,
) -> Vec<Evidence> {
    r.output_components
        .iter()
        .filter(|c| kind.is_none_or(|k| c.kind == k))
        .filter(|c| c.requirement_refs.iter().any(|x| markers.contains(x)))
        .map(|c| Evidence {
            record_id: r.record_id,
            component_id: c.component_id.clone(),
        })
        .collect()
}

fn last_gate_passed(r: &TraceRecord, gate: GateKind) -> bool {
    r.gate_reports
        .last()
        .and_then(|rep| rep.gate(gate))
        .is_some_and(|g| g.passed)
}

type Verdict = (bool, Vec<Evidence>);

/// Status of one requirement: not applicable when no record required it,
/// satisfied when a served record meets the requirement's predicate.
fn evaluate<F>(
    records: &[TraceRecord],
    applicable: impl Fn(&TraceRecord) -> bool,
    satisfied: F,
) -> (ReqStatus, Vec<Evidence>)
where
    F: Fn(&TraceRecord) -> Verdict,
{
    if !records.iter().any(&applicable) {
        return (ReqStatus::NotApplicable, Vec::new());
    }
    let mut evidence = Vec::new();
    for r in records.iter().filter(|r| applicable(r) && served(r)) {
        let (ok, ev) = satisfied(r);
        if ok {
            evidence.extend(ev);
        }
    }
    evidence.sort();
    evidence.dedup();
    if evidence.is_empty() {
        (ReqStatus::Unsatisfied, evidence)
    } else {
        (ReqStatus::Satisfied, evidence)
    }
}

pub fn verify_satisfy_links(
    catalog: &Catalog,
    ledger: &Ledger,
    rules: &RuleSet,
) -> ComplianceReport {
    use TransformationKind as K;
    let records = ledger.records();
    let uses = |kind: K| move |r: &TraceRecord| kinds_of(r, rules).contains(&kind);

    let mut out = Vec::new();
    for req in catalog.requirements() {
        let (status, evidence) = match req.req_id.as_str() {
            "REQ-PL-01" => {
                let markers = rule_markers(K::SimplifyText, rules);
                evaluate(&records, uses(K::SimplifyText), |r| {
                    (
                        last_gate_passed(r, GateKind::Readability),
                        evidence_for(r, &markers, None),
                    )
                })
            }
            "REQ-WCAG-01" => {
                let markers = rule_markers(K::ApplyHighContrast, rules);
                evaluate(&records, uses(K::ApplyHighContrast), |r| {
                    let ok = r.schema_summary.as_ref().is_some_and(|s| {
                        s.theme == Theme::HighContrast && s.min_contrast_ratio >= MIN_CONTRAST
                    });
                    (ok, evidence_for(r, &markers, None))
                })
            }
            "REQ-MOD-02" => {
                let markers = rule_markers(K::AttachPictograms, rules);
                evaluate(&records, uses(K::AttachPictograms), |r| {
                    let ok = r.schema_summary.as_ref().is_some_and(|s| {
                        s.pictogram_count > 0
                            && s.modalities.contains(&OutputModality::Text)
                            && s.modalities.contains(&OutputModality::Pictogram)
                    });
                    (
                        ok,
                        evidence_for(r, &markers, Some(ComponentKind::PictogramLabel)),
                    )
                })
            }
            "REQ-FB-01" => feedback_status(&records),
            _ => generic_status(&records, req.satisfied_by.as_slice(), rules),
        };
        out.push(RequirementStatus {
            req_id: req.req_id.clone(),
            title: req.title.clone(),
            refs: req.refs.clone(),
            status,
            evidence,
        });
    }
    ComplianceReport {
        catalog_version: catalog.version(),
        generated_at: Utc::now(),
        requirements: out,
    }
}

/// Needed once any schema was served; met by feedback on a traced component.
fn feedback_status(records: &[TraceRecord]) -> (ReqStatus, Vec<Evidence>) {
    if !records.iter().any(served) {
        return (ReqStatus::NotApplicable, Vec::new());
    }
    let known: BTreeSet<(&str, &str)> = records
        .iter()
        .flat_map(|r| r.component_ids().map(move |c| (r.job_id.as_str(), c)))
        .collect();
    let mut evidence: Vec<Evidence> = records
        .iter()
        .filter_map(|r| {
            let link = r.feedback.as_ref()?;
            known
                .contains(&(r.job_id.as_str(), link.component_id.as_str()))
                .then(|| Evidence {
                    record_id: r.record_id,
                    component_id: link.component_id.clone(),
                })
        })
        .collect();
    evidence.sort();
    if evidence.is_empty() {
        (ReqStatus::Unsatisfied, evidence)
    } else {
        (ReqStatus::Satisfied, evidence)
    }
}

/// Requirements outside the built-in set: `rules::<kind>` entries in
/// `satisfiedBy` decide applicability; a served record whose gates all
/// passed satisfies them.
fn generic_status(
    records: &[TraceRecord],
    satisfied_by: &[String],
    rules: &RuleSet,
) -> (ReqStatus, Vec<Evidence>) {
    let kinds: BTreeSet<TransformationKind> = satisfied_by
        .iter()
        .filter_map(|s| s.strip_prefix("rules::"))
        .filter_map(|k| k.parse().ok())
        .collect();
    if kinds.is_empty() {
        return (ReqStatus::NotApplicable, Vec::new());
    }
    let markers: BTreeSet<String> = kinds.iter().flat_map(|k| rule_markers(*k, rules)).collect();
    evaluate(
        records,
        |r| !kinds_of(r, rules).is_disjoint(&kinds),
        |r| {
            let ok = r.gate_reports.last().is_some_and(|g| g.overall_passed);
            (ok, evidence_for(r, &markers, None))
        },
    )
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ReportFormat {
    Full,
    Summary,
}

impl std::str::FromStr for ReportFormat {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "full" => Ok(Self::Full),
            "summary" => Ok(Self::Summary),
            other => Err(format!("unknown report format `{other}` (full|summary)")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct ReportDocument {
    pub format: ReportFormat,
    pub compliance: ComplianceReport,
    pub record_count: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub records: Option<Vec<TraceRecord>>,
}

impl ReportDocument {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }
}

pub fn export_report(
    catalog: &Catalog,
    ledger: &Ledger,
    rules: &RuleSet,
    format: ReportFormat,
) -> ReportDocument {
    let compliance = verify_satisfy_links(catalog, ledger, rules);
    let records = ledger.records();
    ReportDocument {
        format,
        compliance,
        record_count: records.len(),
        records: (format == ReportFormat::Full).then_some(records),
    }
}
