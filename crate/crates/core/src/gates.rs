//! Readability, semantic fidelity and factual consistency gates, plus the
//! bounded regeneration loop.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use crate::genai::{self, Backend, BackendRequest, GenAiError, TransformResult};
use crate::prompt::{DomainInput, InstantiatedPrompt};
use crate::rules::ActiveRuleSet;
use crate::text;
use crate::ui::{self, PictogramMap};

pub const DEFAULT_READABILITY_THRESHOLD: f64 = 38.0;
/// Words longer than this many characters count as long.
const LONG_WORD: usize = 6;

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum GateError {
    #[error("text is empty")]
    EmptyText,
}

/// `words/sentences + 100 * longWords/words`.
pub fn readability_score(text: &str) -> Result<f64, GateError> {
    if text.trim().is_empty() {
        return Err(GateError::EmptyText);
    }
    let words = text::words(text);
    if words.is_empty() {
        return Err(GateError::EmptyText);
    }
    let n = words.len() as f64;
    let long = words
        .iter()
        .filter(|w| w.chars().count() > LONG_WORD)
        .count() as f64;
    let sentences = text::sentence_count(text).max(1) as f64;
    Ok(n / sentences + 100.0 * long / n)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum GateKind {
    Readability,
    SemanticFidelity,
    FactualConsistency,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct GateResult {
    pub gate: GateKind,
    pub passed: bool,
    pub metric_value: f64,
    pub threshold: f64,
    pub details: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct GateReport {
    pub per_gate: Vec<GateResult>,
    pub overall_passed: bool,
    pub attempt: u32,
    /// SHA-256 of the presented text the gates ran on.
    pub content_hash: String,
}

impl GateReport {
    pub fn gate(&self, kind: GateKind) -> Option<&GateResult> {
        self.per_gate.iter().find(|g| g.gate == kind)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase", default)]
pub struct GateConfig {
    pub readability_threshold: f64,
    /// Per-locale readability thresholds, keyed by locale tag (`es`, `en-GB`).
    pub locale_thresholds: BTreeMap<String, f64>,
}

impl Default for GateConfig {
    fn default() -> Self {
        Self {
            readability_threshold: DEFAULT_READABILITY_THRESHOLD,
            locale_thresholds: BTreeMap::new(),
        }
    }
}

impl GateConfig {
    /// Exact locale, then its language subtag, then the default.
    pub fn readability_threshold_for(&self, locale: &str) -> f64 {
        let lang = locale.split(['-', '_']).next().unwrap_or(locale);
        self.locale_thresholds
            .get(locale)
            .or_else(|| self.locale_thresholds.get(lang))
            .copied()
            .unwrap_or(self.readability_threshold)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase", default)]
pub struct RegenerationPolicy {
    pub max_attempts: u32,
    pub escalate_on_exhaustion: bool,
}

impl Default for RegenerationPolicy {
    fn default() -> Self {
        Self {
            max_attempts: 3,
            escalate_on_exhaustion: true,
        }
    }
}

impl RegenerationPolicy {
    pub fn validate(&self) -> Result<(), String> {
        if self.max_attempts == 0 {
            return Err("maxAttempts must be at least 1".into());
        }
        Ok(())
    }
}

fn result(
    gate: GateKind,
    metric_value: f64,
    threshold: f64,
    passed: bool,
    details: Vec<String>,
) -> GateResult {
    GateResult {
        gate,
        passed,
        metric_value,
        threshold,
        details,
    }
}

/// Highest LIX over the plain text and every step; lower is better.
pub fn check_readability(r: &TransformResult, threshold: f64) -> GateResult {
    let mut worst: f64 = 0.0;
    let mut details = Vec::new();
    let mut texts: Vec<(String, &str)> = vec![("plainText".into(), r.plain_text.as_str())];
    texts.extend(
        r.steps
            .iter()
            .enumerate()
            .map(|(i, s)| (format!("step {}", i + 1), s.as_str())),
    );
    for (label, t) in texts {
        if label == "plainText" && t.trim().is_empty() && !r.steps.is_empty() {
            continue;
        }
        match readability_score(t) {
            Ok(lix) => {
                worst = worst.max(lix);
                if lix > threshold {
                    details.push(format!("{label}: LIX {lix:.2} exceeds {threshold}"));
                }
            }
            Err(GateError::EmptyText) => {
                worst = f64::MAX;
                details.push(format!("{label}: empty text"));
            }
        }
    }
    result(
        GateKind::Readability,
        worst,
        threshold,
        details.is_empty(),
        details,
    )
}

/// Protected tokens of an input, in order: protected terms, numeric tokens,
/// unit tokens. Numbers and units are lowercased; duplicates dropped.
pub fn protected_tokens(input: &DomainInput) -> Vec<(String, bool)> {
    let mut seen = BTreeSet::new();
    let mut out = Vec::new();
    for t in &input.protected_terms {
        if seen.insert(t.to_lowercase()) {
            out.push((t.clone(), true));
        }
    }
    for t in text::numeric_tokens(&input.text)
        .into_iter()
        .chain(text::unit_tokens(&input.text))
    {
        let t = t.to_lowercase();
        if seen.insert(t.clone()) {
            out.push((t, false));
        }
    }
    out
}

pub fn check_semantic_fidelity(input: &DomainInput, r: &TransformResult) -> GateResult {
    let protected = protected_tokens(input);
    if protected.is_empty() {
        return result(GateKind::SemanticFidelity, 1.0, 1.0, true, Vec::new());
    }
    let fine: BTreeSet<String> = r.texts().flat_map(text::fine_tokens).collect();
    let mut details = Vec::new();
    for (token, is_phrase) in &protected {
        let present = if *is_phrase {
            r.texts().any(|t| text::contains_phrase(t, token))
        } else {
            // A numeric token may itself span several fine tokens (`0.5`).
            let parts = text::fine_tokens(token);
            !parts.is_empty()
                && r.texts().any(|t| {
                    let toks = text::fine_tokens(t);
                    toks.windows(parts.len()).any(|w| w == parts.as_slice())
                })
                || fine.contains(token)
        };
        if !present {
            details.push(format!("missing: {token}"));
        }
    }
    let total = protected.len() as f64;
    let metric = (total - details.len() as f64) / total;
    result(
        GateKind::SemanticFidelity,
        metric,
        1.0,
        details.is_empty(),
        details,
    )
}

pub fn check_factual_consistency(input: &DomainInput, r: &TransformResult) -> GateResult {
    let mut allowed: BTreeSet<String> = text::numeric_tokens(&input.text).into_iter().collect();
    allowed.extend((1..=r.steps.len()).map(|n| n.to_string()));
    let mut output = Vec::new();
    for t in r.texts() {
        for n in text::numeric_tokens(t) {
            if !output.contains(&n) {
                output.push(n);
            }
        }
    }
    let details: Vec<String> = output
        .iter()
        .filter(|n| !allowed.contains(*n))
        .map(|n| format!("unsupported numeric: {n}"))
        .collect();
    let metric = 1.0 - details.len() as f64 / output.len().max(1) as f64;
    result(
        GateKind::FactualConsistency,
        metric,
        1.0,
        details.is_empty(),
        details,
    )
}

pub fn run_gates(
    input: &DomainInput,
    r: &TransformResult,
    config: &GateConfig,
    attempt: u32,
) -> GateReport {
    let per_gate = vec![
        check_readability(r, config.readability_threshold_for(&input.locale)),
        check_semantic_fidelity(input, r),
        check_factual_consistency(input, r),
    ];
    GateReport {
        overall_passed: per_gate.iter().all(|g| g.passed),
        per_gate,
        attempt,
        content_hash: text::content_hash(&ui::presented_text(r)),
    }
}

/// Report standing in for an attempt whose response could not be parsed.
pub fn malformed_report(
    attempt: u32,
    reason: &str,
    config: &GateConfig,
    locale: &str,
) -> GateReport {
    let detail = vec![format!("malformed response: {reason}")];
    GateReport {
        per_gate: vec![
            result(
                GateKind::Readability,
                f64::MAX,
                config.readability_threshold_for(locale),
                false,
                detail.clone(),
            ),
            result(GateKind::SemanticFidelity, 0.0, 1.0, false, detail.clone()),
            result(GateKind::FactualConsistency, 0.0, 1.0, false, detail),
        ],
        overall_passed: false,
        attempt,
        content_hash: text::content_hash(""),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct AttemptRecord {
    pub attempt: u32,
    pub report: GateReport,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub result: Option<TransformResult>,
}

#[derive(Debug, Clone, PartialEq)]
pub enum LoopOutcome {
    Accepted {
        result: TransformResult,
        attempts: u32,
    },
    /// Exhausted; holds the last parsed candidate, if any, for review.
    Escalated {
        candidate: Option<TransformResult>,
        attempts: u32,
    },
}

#[derive(Debug, Clone, PartialEq)]
pub struct LoopRun {
    pub outcome: LoopOutcome,
    pub attempts: Vec<AttemptRecord>,
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum LoopError {
    #[error("backend failed on attempt {attempt}: {error}")]
    Backend {
        error: GenAiError,
        attempt: u32,
        attempts: Vec<AttemptRecord>,
    },
    #[error("all {0} attempts failed the gates")]
    Exhausted(u32, Vec<AttemptRecord>),
    #[error("invalid policy: {0}")]
    Policy(String),
}

pub struct LoopContext<'a> {
    pub backend: &'a dyn Backend,
    pub prompt: &'a InstantiatedPrompt,
    pub active: &'a ActiveRuleSet,
    pub input: &'a DomainInput,
    pub pictos: &'a PictogramMap,
    pub gates: &'a GateConfig,
}

/// Calls the backend at most `max_attempts` times, stopping at the first
/// candidate that passes every gate.
pub fn regeneration_loop(
    ctx: &LoopContext<'_>,
    policy: &RegenerationPolicy,
) -> Result<LoopRun, LoopError> {
    policy.validate().map_err(LoopError::Policy)?;
    let mut attempts = Vec::new();
    let mut candidate = None;
    for attempt in 1..=policy.max_attempts {
        let req = BackendRequest {
            prompt: ctx.prompt,
            active: ctx.active,
            input: ctx.input,
            attempt,
        };
        match genai::transform(ctx.backend, &req, ctx.pictos) {
            Ok(r) => {
                let report = run_gates(ctx.input, &r, ctx.gates, attempt);
                let passed = report.overall_passed;
                tracing::debug!(attempt, passed, "gate report");
                attempts.push(AttemptRecord {
                    attempt,
                    report,
                    result: Some(r.clone()),
                });
                if passed {
                    return Ok(LoopRun {
                        outcome: LoopOutcome::Accepted {
                            result: r,
                            attempts: attempt,
                        },
                        attempts,
                    });
                }
                candidate = Some(r);
            }
            Err(GenAiError::MalformedResponse(reason)) => {
                attempts.push(AttemptRecord {
                    attempt,
                    report: malformed_report(attempt, &reason, ctx.gates, &ctx.input.locale),
                    result: None,
                });
            }
            Err(error) => {
                return Err(LoopError::Backend {
                    error,
                    attempt,
                    attempts,
                });
            }
        }
    }
    if !policy.escalate_on_exhaustion {
        return Err(LoopError::Exhausted(policy.max_attempts, attempts));
    }
    Ok(LoopRun {
        outcome: LoopOutcome::Escalated {
            candidate,
            attempts: policy.max_attempts,
        },
        attempts,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn res(plain: &str, steps: &[&str]) -> TransformResult {
        TransformResult {
            plain_text: plain.into(),
            steps: steps.iter().map(|s| s.to_string()).collect(),
            pictogram_annotations: Vec::new(),
            raw_response: String::new(),
        }
    }

    fn case_input() -> DomainInput {
        DomainInput::new(
            "case",
            "You should take Ibuprofen 400mg every 8 hours unless you experience gastric discomfort.",
        )
        .with_protected(["Ibuprofen"])
    }

    fn case_output() -> TransformResult {
        let steps = [
            "Take Ibuprofen 400mg.",
            "Take it every 8 hours.",
            "Stop if you have stomach pain. Ask your doctor.",
        ];
        res(&steps.join(" "), &steps)
    }

    #[test]
    fn lix_examples() {
        assert_eq!(readability_score("Stop.").unwrap(), 1.0);
        let v = readability_score("Take one pill every morning with water.").unwrap();
        assert!((v - (7.0 + 100.0 / 7.0)).abs() < 1e-12);
        assert_eq!(readability_score("  "), Err(GateError::EmptyText));
        // No terminator: one sentence.
        assert_eq!(readability_score("go now").unwrap(), 2.0);
    }

    #[test]
    fn case_passes_all_gates() {
        let r = run_gates(&case_input(), &case_output(), &GateConfig::default(), 1);
        assert!(r.overall_passed, "{r:?}");
        let fid = r.gate(GateKind::SemanticFidelity).unwrap();
        assert_eq!(fid.metric_value, 1.0);
        let toks: Vec<_> = protected_tokens(&case_input())
            .into_iter()
            .map(|t| t.0)
            .collect();
        assert_eq!(toks, ["Ibuprofen", "400", "8", "mg", "hours"]);
    }

    #[test]
    fn missing_number_detected() {
        let steps = ["Take Ibuprofen mg.", "Take it every 8 hours."];
        let g = check_semantic_fidelity(&case_input(), &res(&steps.join(" "), &steps));
        assert!(!g.passed);
        assert_eq!(g.details, ["missing: 400"]);
        assert!((g.metric_value - 0.8).abs() < 1e-12);
    }

    #[test]
    fn injected_number_detected() {
        let g = check_factual_consistency(&case_input(), &res("take 600mg", &[]));
        assert_eq!(g.details, ["unsupported numeric: 600"]);
        assert_eq!(g.metric_value, 0.0);
        let g = check_factual_consistency(&case_input(), &res("rest", &[]));
        assert!(g.passed);
    }

    #[test]
    fn step_numerals_are_allowed() {
        let input = DomainInput::new("i", "Rest and drink water.");
        let g = check_factual_consistency(
            &input,
            &res("Do step 2 after step 1.", &["Rest.", "Drink water."]),
        );
        assert!(g.passed);
    }

    #[test]
    fn vacuous_fidelity() {
        let input = DomainInput::new("i", "Rest well.");
        let g = check_semantic_fidelity(&input, &res("Sleep.", &[]));
        assert!(g.passed);
        assert_eq!(g.metric_value, 1.0);
    }

    #[test]
    fn dense_text_fails_readability() {
        let r = res(
            "Pharmaceutical administration necessitates comprehensive understanding.",
            &[],
        );
        let g = check_readability(&r, 38.0);
        assert!(!g.passed);
        assert!(g.metric_value > 38.0);
        assert_eq!(g.details.len(), 1);
    }

    #[test]
    fn locale_thresholds() {
        let mut c = GateConfig::default();
        c.locale_thresholds.insert("es".into(), 45.0);
        assert_eq!(c.readability_threshold_for("es-ES"), 45.0);
        assert_eq!(c.readability_threshold_for("en"), 38.0);
    }
}
