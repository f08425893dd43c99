//! Text-transformation backends and the response envelope.
//!
//! Every backend answers with the same envelope:
//!
//! ````text
//! ```adapt
//! plain: <adapted text on one line>
//! steps:
//! 1. <step>
//! 2. <step>
//! picto:
//! 1|pill|picto-pill
//! ```
//! ````
//!
//! `picto:` lines are `step|keyword|pictogramId` or `step|keyword`; the short
//! form is resolved against the pictogram map.

use std::sync::atomic::{AtomicUsize, Ordering};
use std::time::Duration;

use serde::{Deserialize, Serialize};

use crate::prompt::{DomainInput, InstantiatedPrompt};
use crate::rules::{ActiveRuleSet, TransformationKind};
use crate::text;
use crate::ui::PictogramMap;

pub const MOCK_MODEL_VERSION: &str = "mock-rewrite-1";
const FENCE_OPEN: &str = "```adapt";
const FENCE_CLOSE: &str = "```";

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum GenAiError {
    #[error("backend unavailable: {0}")]
    BackendUnavailable(String),
    #[error("malformed response: {0}")]
    MalformedResponse(String),
    #[error("backend rejected credentials: {0}")]
    AuthError(String),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct PictogramAnnotation {
    /// 1-based index into `steps`.
    pub step_index: usize,
    pub keyword: String,
    pub pictogram_id: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct TransformResult {
    pub plain_text: String,
    pub steps: Vec<String>,
    pub pictogram_annotations: Vec<PictogramAnnotation>,
    #[serde(default)]
    pub raw_response: String,
}

impl TransformResult {
    /// Unchanged text as the single step.
    pub fn passthrough(text: &str) -> Self {
        Self {
            plain_text: text.to_string(),
            steps: vec![text.to_string()],
            pictogram_annotations: Vec::new(),
            raw_response: String::new(),
        }
    }

    /// Every text the user is shown: the plain text, then each step.
    pub fn texts(&self) -> impl Iterator<Item = &str> {
        std::iter::once(self.plain_text.as_str()).chain(self.steps.iter().map(String::as_str))
    }

    /// Canonical envelope: whitespace collapsed, three-field picto lines.
    pub fn to_envelope(&self) -> String {
        let mut s = format!(
            "{FENCE_OPEN}\nplain: {}\nsteps:\n",
            one_line(&self.plain_text)
        );
        for (i, step) in self.steps.iter().enumerate() {
            s.push_str(&format!("{}. {}\n", i + 1, one_line(step)));
        }
        s.push_str("picto:\n");
        for a in &self.pictogram_annotations {
            s.push_str(&format!(
                "{}|{}|{}\n",
                a.step_index, a.keyword, a.pictogram_id
            ));
        }
        s.push_str(FENCE_CLOSE);
        s.push('\n');
        s
    }

    /// Equality ignoring `raw_response`.
    pub fn same_content(&self, other: &Self) -> bool {
        self.plain_text == other.plain_text
            && self.steps == other.steps
            && self.pictogram_annotations == other.pictogram_annotations
    }
}

fn one_line(s: &str) -> String {
    s.split_whitespace().collect::<Vec<_>>().join(" ")
}

fn malformed(msg: impl Into<String>) -> GenAiError {
    GenAiError::MalformedResponse(msg.into())
}

/// Extracts the first well-formed envelope from `raw`; prose around it is
/// ignored.
pub fn parse_envelope(raw: &str, pictos: &PictogramMap) -> Result<TransformResult, GenAiError> {
    if raw.trim().is_empty() {
        return Err(malformed("empty response"));
    }
    let lines: Vec<&str> = raw.lines().collect();
    let mut first_err = None;
    let mut i = 0;
    while i < lines.len() {
        if lines[i].trim() == FENCE_OPEN {
            let close = lines[i + 1..].iter().position(|l| l.trim() == FENCE_CLOSE);
            let Some(close) = close else {
                first_err.get_or_insert_with(|| malformed("unterminated envelope"));
                break;
            };
            match parse_body(&lines[i + 1..i + 1 + close], pictos) {
                Ok(mut r) => {
                    r.raw_response = raw.to_string();
                    return Ok(r);
                }
                Err(e) => {
                    first_err.get_or_insert(e);
                }
            }
            i += close + 2;
        } else {
            i += 1;
        }
    }
    Err(first_err.unwrap_or_else(|| malformed("no ```adapt envelope found")))
}

fn parse_body(lines: &[&str], pictos: &PictogramMap) -> Result<TransformResult, GenAiError> {
    #[derive(PartialEq)]
    enum Section {
        Start,
        Steps,
        Picto,
    }
    let mut section = Section::Start;
    let mut plain = None;
    let mut steps = Vec::new();
    let mut raw_picto = Vec::new();
    for (n, line) in lines.iter().enumerate() {
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        if let Some(rest) = line.strip_prefix("plain:") {
            if section != Section::Start || plain.is_some() {
                return Err(malformed(format!("line {}: unexpected `plain:`", n + 1)));
            }
            plain = Some(rest.trim().to_string());
        } else if line == "steps:" {
            if section != Section::Start || plain.is_none() {
                return Err(malformed(format!(
                    "line {}: `steps:` must follow `plain:`",
                    n + 1
                )));
            }
            section = Section::Steps;
        } else if line == "picto:" {
            if section != Section::Steps {
                return Err(malformed(format!(
                    "line {}: `picto:` must follow `steps:`",
                    n + 1
                )));
            }
            section = Section::Picto;
        } else if section == Section::Steps {
            let (num, body) = line
                .split_once(". ")
                .ok_or_else(|| malformed(format!("line {}: expected `N. step`", n + 1)))?;
            let expected = steps.len() + 1;
            if num.parse::<usize>().ok() != Some(expected) {
                return Err(malformed(format!(
                    "line {}: expected step {expected}, got `{num}`",
                    n + 1
                )));
            }
            let body = body.trim();
            if body.is_empty() {
                return Err(malformed(format!("line {}: empty step", n + 1)));
            }
            steps.push(body.to_string());
        } else if section == Section::Picto {
            raw_picto.push((n + 1, line));
        } else {
            return Err(malformed(format!("line {}: unexpected `{line}`", n + 1)));
        }
    }
    let plain = plain.ok_or_else(|| malformed("missing `plain:`"))?;
    if section != Section::Picto {
        return Err(malformed("missing `steps:` or `picto:` section"));
    }
    if plain.is_empty() && steps.is_empty() {
        return Err(malformed("no content"));
    }
    let mut annotations = Vec::new();
    for (n, line) in raw_picto {
        let parts: Vec<&str> = line.split('|').map(str::trim).collect();
        if !(2..=3).contains(&parts.len()) {
            return Err(malformed(format!("line {n}: expected `step|keyword[|id]`")));
        }
        let step_index: usize = parts[0]
            .parse()
            .map_err(|_| malformed(format!("line {n}: bad step index `{}`", parts[0])))?;
        if step_index == 0 || step_index > steps.len() {
            return Err(malformed(format!(
                "line {n}: step index {step_index} outside 1..={}",
                steps.len()
            )));
        }
        let entry = pictos.by_keyword(parts[1]).ok_or_else(|| {
            malformed(format!(
                "line {n}: unknown pictogram keyword `{}`",
                parts[1]
            ))
        })?;
        if let Some(id) = parts.get(2) {
            if *id != entry.id {
                return Err(malformed(format!(
                    "line {n}: `{id}` is not the pictogram for `{}`",
                    parts[1]
                )));
            }
        }
        annotations.push(PictogramAnnotation {
            step_index,
            keyword: entry.keyword.clone(),
            pictogram_id: entry.id.clone(),
        });
    }
    Ok(TransformResult {
        plain_text: plain,
        steps,
        pictogram_annotations: annotations,
        raw_response: String::new(),
    })
}

// ---------------------------------------------------------------------------
// Backends
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum BackendKind {
    Mock,
    #[serde(rename = "RemoteChatAPI")]
    RemoteChatApi,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct BackendDescriptor {
    pub backend_id: String,
    pub kind: BackendKind,
    pub model_version: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub endpoint: Option<String>,
}

pub struct BackendRequest<'a> {
    pub prompt: &'a InstantiatedPrompt,
    pub active: &'a ActiveRuleSet,
    pub input: &'a DomainInput,
    /// 1-based attempt within the regeneration loop.
    pub attempt: u32,
}

pub trait Backend: Send + Sync {
    fn descriptor(&self) -> BackendDescriptor;
    /// Raw response text; parsed by [`transform`].
    fn complete(&self, req: &BackendRequest<'_>) -> Result<String, GenAiError>;
}

/// Runs one backend call and parses the result.
pub fn transform(
    backend: &dyn Backend,
    req: &BackendRequest<'_>,
    pictos: &PictogramMap,
) -> Result<TransformResult, GenAiError> {
    let raw = backend.complete(req)?;
    let result = parse_envelope(&raw, pictos)?;
    if req.active.has(TransformationKind::StructureAsSteps) && result.steps.is_empty() {
        return Err(malformed("steps required but none returned"));
    }
    Ok(result)
}

/// Substitutions applied by the mock when simplifying, longest phrases first.
const MOCK_DICTIONARY: &[(&str, &str)] = &[
    ("unless you experience", "stop if you have"),
    ("unless you have", "stop if you have"),
    ("unless you notice", "stop if you see"),
    ("unless", "stop if"),
    ("gastric discomfort", "stomach pain"),
    ("abdominal pain", "stomach pain"),
    ("in the event of", "if there is"),
    ("prior to", "before"),
    ("administer", "take"),
    ("physician", "doctor"),
    ("medication", "medicine"),
    ("discontinue", "stop"),
    ("commence", "start"),
    ("approximately", "about"),
    ("subsequently", "then"),
    ("utilize", "use"),
    ("consume", "eat"),
    ("ingest", "swallow"),
];

/// Verbs that may head an instruction; a frequency clause repeats them.
const MOCK_VERBS: &[&str] = &[
    "take",
    "administer",
    "use",
    "apply",
    "drink",
    "eat",
    "swallow",
    "give",
    "inject",
    "change",
    "check",
];

const SAFETY_SENTENCE: &str = "Ask your doctor.";

/// Deterministic rule-based rewriter.
///
/// When a text rule is active, each sentence loses a leading "You should ",
/// is cut into clauses at ` unless `, ` if `, `, and `, `; ` and ` every `,
/// and each clause becomes a step. A frequency clause restates the leading
/// verb (`take it every 8 hours`). Under `simplifyText`/`simplifyStructure` the
/// dictionary is applied. Conditional clauses gain the safety sentence.
/// Pictograms come from the map when `attachPictograms` is active.
pub struct MockBackend {
    pictos: PictogramMap,
}

impl MockBackend {
    pub fn new(pictos: PictogramMap) -> Self {
        Self { pictos }
    }

    pub fn rewrite(&self, input: &str, active: &ActiveRuleSet) -> TransformResult {
        use TransformationKind as K;
        let simplify = active.has(K::SimplifyText) || active.has(K::SimplifyStructure);
        let segment = simplify || active.has(K::StructureAsSteps);
        let mut result = if segment {
            let steps: Vec<String> = split_sentences(input)
                .into_iter()
                .flat_map(|s| mock_clauses(&s, simplify))
                .collect();
            if steps.is_empty() {
                TransformResult::passthrough(input)
            } else {
                TransformResult {
                    plain_text: steps.join(" "),
                    steps,
                    pictogram_annotations: Vec::new(),
                    raw_response: String::new(),
                }
            }
        } else {
            TransformResult::passthrough(input)
        };
        if active.has(K::AttachPictograms) {
            result.pictogram_annotations = self.pictos.annotate(&result.steps);
        }
        result
    }
}

impl Backend for MockBackend {
    fn descriptor(&self) -> BackendDescriptor {
        BackendDescriptor {
            backend_id: "mock".into(),
            kind: BackendKind::Mock,
            model_version: MOCK_MODEL_VERSION.into(),
            endpoint: None,
        }
    }

    fn complete(&self, req: &BackendRequest<'_>) -> Result<String, GenAiError> {
        Ok(self.rewrite(&req.input.text, req.active).to_envelope())
    }
}

/// Sentences without their terminators; decimal points do not split.
fn split_sentences(text: &str) -> Vec<String> {
    let chars: Vec<char> = text.chars().collect();
    let mut out = Vec::new();
    let mut cur = String::new();
    for (i, &c) in chars.iter().enumerate() {
        let decimal = c == '.'
            && i > 0
            && chars[i - 1].is_ascii_digit()
            && chars.get(i + 1).is_some_and(|n| n.is_ascii_digit());
        if matches!(c, '.' | '!' | '?') && !decimal {
            out.push(std::mem::take(&mut cur));
        } else {
            cur.push(c);
        }
    }
    out.push(cur);
    out.into_iter()
        .map(|s| one_line(&s))
        .filter(|s| !text::words(s).is_empty())
        .collect()
}

#[derive(Clone, Copy, PartialEq)]
enum ClauseKind {
    Main,
    Conditional,
    Frequency,
}

const CLAUSE_MARKERS: [(&str, ClauseKind, bool); 5] = [
    (" unless ", ClauseKind::Conditional, true),
    (" if ", ClauseKind::Conditional, true),
    (", and ", ClauseKind::Main, false),
    ("; ", ClauseKind::Main, false),
    (" every ", ClauseKind::Frequency, true),
];

fn strip_prefix_ci<'a>(s: &'a str, prefix: &str) -> Option<&'a str> {
    let head = s.get(..prefix.len())?;
    head.eq_ignore_ascii_case(prefix)
        .then(|| &s[prefix.len()..])
}

fn mock_clauses(sentence: &str, simplify: bool) -> Vec<String> {
    let body = strip_prefix_ci(sentence, "You should ").unwrap_or(sentence);
    let lower = body.to_ascii_lowercase();
    // (kind, start of clause text) in order of appearance.
    let mut cuts: Vec<(usize, usize, ClauseKind)> = vec![(0, 0, ClauseKind::Main)];
    let mut pos = 0;
    loop {
        let next = CLAUSE_MARKERS
            .iter()
            .filter_map(|(m, k, keep)| {
                lower[pos..].find(m).map(|at| {
                    let at = pos + at;
                    let text_start = if *keep { at + 1 } else { at + m.len() };
                    (at, at + m.len(), text_start, *k)
                })
            })
            .min_by_key(|(at, ..)| *at);
        match next {
            Some((at, end, text_start, kind)) => {
                cuts.push((at, text_start, kind));
                pos = end;
            }
            None => break,
        }
    }
    let leading_verb = text::words(body)
        .first()
        .map(|w| w.to_ascii_lowercase())
        .filter(|w| MOCK_VERBS.contains(&w.as_str()));

    let mut out = Vec::new();
    for (i, &(_, start, kind)) in cuts.iter().enumerate() {
        let end = cuts.get(i + 1).map_or(body.len(), |c| c.0);
        let mut clause = body[start..end]
            .trim()
            .trim_end_matches(',')
            .trim()
            .to_string();
        if clause.is_empty() {
            continue;
        }
        if kind == ClauseKind::Frequency {
            match &leading_verb {
                Some(v) => clause = format!("{v} it {clause}"),
                None => {
                    // Not an instruction: keep the frequency with its clause.
                    if let Some(last) = out.last_mut() {
                        let prev: &mut (String, ClauseKind) = last;
                        prev.0 = format!("{} {clause}", prev.0);
                        continue;
                    }
                }
            }
        }
        out.push((clause, kind));
    }

    out.into_iter()
        .map(|(clause, kind)| {
            let clause = if simplify {
                apply_dictionary(&clause)
            } else {
                clause
            };
            let mut step = capitalize(&clause);
            step.push('.');
            if kind == ClauseKind::Conditional {
                step.push(' ');
                step.push_str(SAFETY_SENTENCE);
            }
            step
        })
        .collect()
}

fn capitalize(s: &str) -> String {
    let mut c = s.chars();
    match c.next() {
        Some(f) => f.to_uppercase().chain(c).collect(),
        None => String::new(),
    }
}

fn apply_dictionary(s: &str) -> String {
    MOCK_DICTIONARY
        .iter()
        .fold(s.to_string(), |acc, (from, to)| {
            replace_phrase(&acc, from, to)
        })
}

/// Case-insensitive whole-word replacement.
fn replace_phrase(haystack: &str, phrase: &str, replacement: &str) -> String {
    let lower = haystack.to_ascii_lowercase();
    let mut out = String::new();
    let mut last = 0;
    let mut from = 0;
    while let Some(found) = lower[from..].find(phrase) {
        let at = from + found;
        let end = at + phrase.len();
        let before_ok = !lower[..at]
            .chars()
            .next_back()
            .is_some_and(char::is_alphanumeric);
        let after_ok = !lower[end..]
            .chars()
            .next()
            .is_some_and(char::is_alphanumeric);
        if before_ok && after_ok {
            out.push_str(&haystack[last..at]);
            out.push_str(replacement);
            last = end;
        }
        from = end;
    }
    out.push_str(&haystack[last..]);
    out
}

/// Faults a [`FaultInjectingBackend`] can apply to an otherwise valid reply.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Fault {
    /// Remove every occurrence of a numeric token.
    DropNumber(String),
    /// Append a clause carrying an unsupported number.
    InjectNumber(String),
    /// Replace the reply with long-word-dense prose.
    Verbose,
    /// Reply with text that carries no envelope.
    Malformed,
    Unavailable,
    Auth,
}

/// Wraps a backend and applies scripted faults by attempt number. Attempts
/// past the end of the script repeat `fallback` (`None` passes through).
pub struct FaultInjectingBackend {
    inner: Box<dyn Backend>,
    pictos: PictogramMap,
    script: Vec<Option<Fault>>,
    fallback: Option<Fault>,
    calls: AtomicUsize,
}

impl FaultInjectingBackend {
    pub fn scripted(
        inner: Box<dyn Backend>,
        pictos: PictogramMap,
        script: Vec<Option<Fault>>,
    ) -> Self {
        Self {
            inner,
            pictos,
            script,
            fallback: None,
            calls: AtomicUsize::new(0),
        }
    }

    pub fn always(inner: Box<dyn Backend>, pictos: PictogramMap, fault: Fault) -> Self {
        Self {
            inner,
            pictos,
            script: Vec::new(),
            fallback: Some(fault),
            calls: AtomicUsize::new(0),
        }
    }

    /// Number of `complete` calls so far.
    pub fn invocations(&self) -> usize {
        self.calls.load(Ordering::SeqCst)
    }
}

impl Backend for FaultInjectingBackend {
    fn descriptor(&self) -> BackendDescriptor {
        let mut d = self.inner.descriptor();
        d.backend_id = format!("fault-injecting:{}", d.backend_id);
        d
    }

    fn complete(&self, req: &BackendRequest<'_>) -> Result<String, GenAiError> {
        let n = self.calls.fetch_add(1, Ordering::SeqCst);
        let fault = self
            .script
            .get(n)
            .cloned()
            .unwrap_or_else(|| self.fallback.clone());
        let Some(fault) = fault else {
            return self.inner.complete(req);
        };
        match fault {
            Fault::Unavailable => {
                return Err(GenAiError::BackendUnavailable("injected outage".into()))
            }
            Fault::Auth => return Err(GenAiError::AuthError("injected credential failure".into())),
            Fault::Malformed => return Ok("I could not format the answer, sorry.".into()),
            _ => {}
        }
        let raw = self.inner.complete(req)?;
        let mut r = parse_envelope(&raw, &self.pictos)?;
        match fault {
            Fault::DropNumber(tok) => {
                r.plain_text = drop_number(&r.plain_text, &tok);
                r.steps = r.steps.iter().map(|s| drop_number(s, &tok)).collect();
            }
            Fault::InjectNumber(tok) => {
                let extra = format!("Take {tok}mg.");
                r.plain_text = format!("{} {extra}", r.plain_text);
                match r.steps.last_mut() {
                    Some(s) => *s = format!("{s} {extra}"),
                    None => r.steps.push(extra),
                }
            }
            Fault::Verbose => {
                let prose = "Pharmaceutical administration necessitates comprehensive understanding regarding contraindications.";
                r.plain_text = format!("{prose} {}", r.plain_text);
                if let Some(s) = r.steps.first_mut() {
                    *s = format!("{prose} {s}");
                }
            }
            Fault::Malformed | Fault::Unavailable | Fault::Auth => unreachable!(),
        }
        Ok(r.to_envelope())
    }
}

/// Removes a numeric token wherever it stands alone as a digit run.
pub fn drop_number(s: &str, token: &str) -> String {
    let mut out = String::new();
    let mut from = 0;
    while let Some(found) = s[from..].find(token) {
        let at = from + found;
        let end = at + token.len();
        let before = s[..at].chars().next_back();
        let after = s[end..].chars().next();
        let bounded = !before.is_some_and(|c| c.is_ascii_digit())
            && !after.is_some_and(|c| c.is_ascii_digit());
        out.push_str(&s[from..at]);
        if !bounded {
            out.push_str(token);
        }
        from = end;
    }
    out.push_str(&s[from..]);
    one_line(&out)
}

/// Settings for the chat-completion backend.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct RemoteConfig {
    pub url: String,
    #[serde(skip_serializing)]
    #[serde(default)]
    pub api_key: Option<String>,
    pub model: String,
    pub timeout_ms: u64,
    pub max_retries: u32,
    pub backoff_base_ms: u64,
    pub temperature: f64,
}

impl RemoteConfig {
    pub fn new(url: impl Into<String>, model: impl Into<String>) -> Self {
        Self {
            url: url.into(),
            api_key: None,
            model: model.into(),
            timeout_ms: 30_000,
            max_retries: 3,
            backoff_base_ms: 250,
            temperature: 0.0,
        }
    }

    /// Reads `ADAPT_REMOTE_URL`, `ADAPT_REMOTE_KEY` and `ADAPT_REMOTE_MODEL`.
    pub fn from_env() -> Option<Self> {
        let url = std::env::var("ADAPT_REMOTE_URL").ok()?;
        let model = std::env::var("ADAPT_REMOTE_MODEL").unwrap_or_else(|_| "default".into());
        let mut c = Self::new(url, model);
        c.api_key = std::env::var("ADAPT_REMOTE_KEY").ok();
        Some(c)
    }
}

/// HTTP chat-completion client. Blocking; call it off async executors.
pub struct RemoteBackend {
    config: RemoteConfig,
    client: reqwest::blocking::Client,
}

impl RemoteBackend {
    pub fn new(config: RemoteConfig) -> Result<Self, GenAiError> {
        let client = reqwest::blocking::Client::builder()
            .timeout(Duration::from_millis(config.timeout_ms))
            .build()
            .map_err(|e| GenAiError::BackendUnavailable(e.to_string()))?;
        Ok(Self { config, client })
    }

    fn attempt(&self, prompt: &str) -> Result<String, GenAiError> {
        let body = serde_json::json!({
            "model": self.config.model,
            "temperature": self.config.temperature,
            "messages": [{ "role": "user", "content": prompt }],
        });
        let mut req = self.client.post(&self.config.url).json(&body);
        if let Some(key) = &self.config.api_key {
            req = req.bearer_auth(key);
        }
        let resp = req
            .send()
            .map_err(|e| GenAiError::BackendUnavailable(e.to_string()))?;
        let status = resp.status();
        if status == reqwest::StatusCode::UNAUTHORIZED || status == reqwest::StatusCode::FORBIDDEN {
            return Err(GenAiError::AuthError(format!("HTTP {status}")));
        }
        if status.is_server_error() || status == reqwest::StatusCode::TOO_MANY_REQUESTS {
            return Err(GenAiError::BackendUnavailable(format!("HTTP {status}")));
        }
        if !status.is_success() {
            return Err(malformed(format!("HTTP {status}")));
        }
        let v: serde_json::Value = resp
            .json()
            .map_err(|e| malformed(format!("response is not JSON: {e}")))?;
        extract_completion_text(&v).ok_or_else(|| malformed("response carries no text"))
    }
}

/// `choices[0].message.content`, falling back to a top-level `text`.
pub fn extract_completion_text(v: &serde_json::Value) -> Option<String> {
    v.pointer("/choices/0/message/content")
        .or_else(|| v.get("text"))
        .and_then(|t| t.as_str())
        .map(str::to_string)
}

impl Backend for RemoteBackend {
    fn descriptor(&self) -> BackendDescriptor {
        BackendDescriptor {
            backend_id: "remote".into(),
            kind: BackendKind::RemoteChatApi,
            model_version: self.config.model.clone(),
            endpoint: Some(self.config.url.clone()),
        }
    }

    fn complete(&self, req: &BackendRequest<'_>) -> Result<String, GenAiError> {
        let mut retry = 0;
        loop {
            match self.attempt(&req.prompt.rendered_text) {
                Err(GenAiError::BackendUnavailable(msg)) if retry < self.config.max_retries => {
                    tracing::warn!(retry, %msg, "remote backend unavailable, backing off");
                    std::thread::sleep(Duration::from_millis(self.config.backoff_base_ms << retry));
                    retry += 1;
                }
                other => return other,
            }
        }
    }
}
