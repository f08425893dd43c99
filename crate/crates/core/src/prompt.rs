//! Versioned prompt templates and their instantiation.
//!
//! Template bodies are opaque text with four square-bracket placeholders:
//! `[Instruction]`, `[UserProfile]`, `[InputText]` and `[ActiveRules]`.
//! Substitution is a single left-to-right pass over the body, so inserted
//! values are never rescanned for markers.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::fs;
use std::path::Path;
use std::sync::{Arc, RwLock};

use serde::{Deserialize, Serialize};

use crate::catalog::UserProfile;
use crate::rules::ActiveRuleSet;

const BUNDLED_TEMPLATES: [&str; 4] = [
    include_str!("../data/templates/T-SIMPLIFY.v1.json"),
    include_str!("../data/templates/T-STEPS.v1.json"),
    include_str!("../data/templates/T-PICTO.v1.json"),
    include_str!("../data/templates/T-STRUCTURE.v1.json"),
];

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Placeholder {
    Instruction,
    UserProfile,
    InputText,
    ActiveRules,
}

impl Placeholder {
    pub const ALL: [Placeholder; 4] = [
        Placeholder::Instruction,
        Placeholder::UserProfile,
        Placeholder::InputText,
        Placeholder::ActiveRules,
    ];

    pub fn marker(self) -> &'static str {
        match self {
            Placeholder::Instruction => "[Instruction]",
            Placeholder::UserProfile => "[UserProfile]",
            Placeholder::InputText => "[InputText]",
            Placeholder::ActiveRules => "[ActiveRules]",
        }
    }
}

impl fmt::Display for Placeholder {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.marker())
    }
}

/// Content to adapt. `protectedTerms` must survive every transformation
/// verbatim (drug names, for instance).
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct DomainInput {
    pub input_id: String,
    pub text: String,
    #[serde(default)]
    pub protected_terms: Vec<String>,
    #[serde(default = "default_locale")]
    pub locale: String,
}

fn default_locale() -> String {
    "en".to_string()
}

impl DomainInput {
    pub fn new(input_id: impl Into<String>, text: impl Into<String>) -> Self {
        Self {
            input_id: input_id.into(),
            text: text.into(),
            protected_terms: Vec::new(),
            locale: default_locale(),
        }
    }

    pub fn with_protected(mut self, terms: impl IntoIterator<Item = impl Into<String>>) -> Self {
        self.protected_terms = terms.into_iter().map(Into::into).collect();
        self
    }

    pub fn validate(&self) -> Result<(), String> {
        if self.text.trim().is_empty() {
            return Err("input text is empty".into());
        }
        if let Some(t) = self
            .protected_terms
            .iter()
            .find(|t| !self.text.contains(t.as_str()))
        {
            return Err(format!(
                "protected term {t:?} does not occur in the input text"
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct PromptTemplate {
    pub template_id: String,
    pub version: u32,
    /// Fixed text bound to `[Instruction]`.
    #[serde(default)]
    pub instruction: Option<String>,
    pub body: String,
    pub required_placeholders: BTreeSet<Placeholder>,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum PromptError {
    #[error("template {template_id} v{version} is already registered")]
    DuplicateVersion { template_id: String, version: u32 },
    #[error("invalid template: {0}")]
    Validation(String),
    #[error("unknown template {0}")]
    UnknownTemplate(String),
    #[error("no value to bind for {0}")]
    UnresolvedPlaceholder(Placeholder),
    #[error("template store I/O: {0}")]
    Io(String),
}

/// Byte offsets of every placeholder marker in `body`, in order.
fn scan_markers(body: &str) -> Vec<(usize, Placeholder)> {
    let mut out = Vec::new();
    let mut i = 0;
    while let Some(off) = body[i..].find('[') {
        let at = i + off;
        match Placeholder::ALL
            .into_iter()
            .find(|p| body[at..].starts_with(p.marker()))
        {
            Some(p) => {
                out.push((at, p));
                i = at + p.marker().len();
            }
            None => i = at + 1,
        }
    }
    out
}

pub fn validate_template(t: &PromptTemplate) -> Result<(), PromptError> {
    let err = |m: String| Err(PromptError::Validation(m));
    if t.template_id.trim().is_empty() {
        return err("templateId is empty".into());
    }
    if t.version == 0 {
        return err("versions start at 1".into());
    }
    let markers = scan_markers(&t.body);
    for p in &t.required_placeholders {
        let n = markers.iter().filter(|(_, m)| m == p).count();
        if n != 1 {
            return err(format!(
                "{p} must appear exactly once in the body (found {n})"
            ));
        }
    }
    if let Some((_, p)) = markers
        .iter()
        .find(|(_, m)| !t.required_placeholders.contains(m))
    {
        return err(format!(
            "{p} appears in the body but is not declared as required"
        ));
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct TemplateHandle {
    pub template_id: String,
    pub version: u32,
}

impl fmt::Display for TemplateHandle {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}@v{}", self.template_id, self.version)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct InstantiatedPrompt {
    pub template: TemplateHandle,
    pub rendered_text: String,
    pub bindings: BTreeMap<Placeholder, String>,
}

/// Versioned template repository. Reads are concurrent; registration takes
/// the write lock. Every version stays retrievable.
#[derive(Debug, Clone, Default)]
pub struct TemplateStore {
    inner: Arc<RwLock<BTreeMap<String, BTreeMap<u32, PromptTemplate>>>>,
}

impl TemplateStore {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn bundled() -> Self {
        let store = Self::new();
        for src in BUNDLED_TEMPLATES {
            let t: PromptTemplate = serde_json::from_str(src).expect("bundled template parses");
            store.register(t).expect("bundled template is valid");
        }
        store
    }

    pub fn register(&self, t: PromptTemplate) -> Result<TemplateHandle, PromptError> {
        validate_template(&t)?;
        let mut map = self.inner.write().expect("template store lock");
        let versions = map.entry(t.template_id.clone()).or_default();
        if versions.contains_key(&t.version) {
            return Err(PromptError::DuplicateVersion {
                template_id: t.template_id,
                version: t.version,
            });
        }
        if let Some((&latest, _)) = versions.last_key_value() {
            if t.version < latest {
                return Err(PromptError::Validation(format!(
                    "version {} is older than the registered v{latest}",
                    t.version
                )));
            }
        }
        let handle = TemplateHandle {
            template_id: t.template_id.clone(),
            version: t.version,
        };
        versions.insert(t.version, t);
        Ok(handle)
    }

    /// Latest version when `version` is `None`.
    pub fn get(&self, template_id: &str, version: Option<u32>) -> Option<PromptTemplate> {
        let map = self.inner.read().expect("template store lock");
        let versions = map.get(template_id)?;
        match version {
            Some(v) => versions.get(&v).cloned(),
            None => versions.last_key_value().map(|(_, t)| t.clone()),
        }
    }

    pub fn list(&self) -> Vec<TemplateHandle> {
        let map = self.inner.read().expect("template store lock");
        map.values()
            .flat_map(|vs| vs.values())
            .map(|t| TemplateHandle {
                template_id: t.template_id.clone(),
                version: t.version,
            })
            .collect()
    }

    /// Loads every `*.json` template in `dir`, oldest version first.
    pub fn load_dir(&self, dir: &Path) -> Result<usize, PromptError> {
        let io = |e: std::io::Error| PromptError::Io(format!("{}: {e}", dir.display()));
        let mut templates = Vec::new();
        for entry in fs::read_dir(dir).map_err(io)? {
            let path = entry.map_err(io)?.path();
            if path.extension().and_then(|e| e.to_str()) != Some("json") {
                continue;
            }
            let src = fs::read_to_string(&path).map_err(io)?;
            let t: PromptTemplate = serde_json::from_str(&src)
                .map_err(|e| PromptError::Validation(format!("{}: {e}", path.display())))?;
            templates.push(t);
        }
        templates.sort_by(|a, b| (&a.template_id, a.version).cmp(&(&b.template_id, b.version)));
        let n = templates.len();
        for t in templates {
            self.register(t)?;
        }
        Ok(n)
    }

    /// Writes one file per `(templateId, version)`: `<id>.v<version>.json`.
    pub fn save_dir(&self, dir: &Path) -> Result<(), PromptError> {
        let io = |e: std::io::Error| PromptError::Io(format!("{}: {e}", dir.display()));
        fs::create_dir_all(dir).map_err(io)?;
        let map = self.inner.read().expect("template store lock");
        for t in map.values().flat_map(|vs| vs.values()) {
            let path = dir.join(format!("{}.v{}.json", t.template_id, t.version));
            let body = serde_json::to_string_pretty(t).expect("template serializes");
            fs::write(path, body + "\n").map_err(io)?;
        }
        Ok(())
    }

    pub fn instantiate(
        &self,
        template_id: &str,
        version: Option<u32>,
        profile: &UserProfile,
        input: &DomainInput,
        active: &ActiveRuleSet,
    ) -> Result<InstantiatedPrompt, PromptError> {
        let t = self
            .get(template_id, version)
            .ok_or_else(|| PromptError::UnknownTemplate(template_id.to_string()))?;
        instantiate(&t, profile, input, active)
    }
}

/// `{flagA: true, flagB: false}` with keys sorted.
pub fn render_profile(profile: &UserProfile) -> String {
    let parts: Vec<String> = profile
        .flags
        .iter()
        .map(|(k, v)| format!("{k}: {v}"))
        .collect();
    format!("{{{}}}", parts.join(", "))
}

/// `R-A:simplifyText(), R-B:structureAsSteps()` in activation order, or `none`.
pub fn render_active_rules(active: &ActiveRuleSet) -> String {
    if active.is_empty() {
        return "none".to_string();
    }
    active
        .entries()
        .iter()
        .map(|e| format!("{}:{}", e.rule.rule_id, e.rule.transformation))
        .collect::<Vec<_>>()
        .join(", ")
}

pub fn instantiate(
    t: &PromptTemplate,
    profile: &UserProfile,
    input: &DomainInput,
    active: &ActiveRuleSet,
) -> Result<InstantiatedPrompt, PromptError> {
    let mut values = BTreeMap::new();
    for p in &t.required_placeholders {
        let v = match p {
            Placeholder::Instruction => t
                .instruction
                .clone()
                .ok_or(PromptError::UnresolvedPlaceholder(*p))?,
            Placeholder::UserProfile => render_profile(profile),
            Placeholder::InputText => input.text.clone(),
            Placeholder::ActiveRules => render_active_rules(active),
        };
        values.insert(*p, v);
    }

    let mut rendered =
        String::with_capacity(t.body.len() + values.values().map(String::len).sum::<usize>());
    let mut cursor = 0;
    for (at, p) in scan_markers(&t.body) {
        let v = values
            .get(&p)
            .ok_or(PromptError::UnresolvedPlaceholder(p))?;
        rendered.push_str(&t.body[cursor..at]);
        rendered.push_str(v);
        cursor = at + p.marker().len();
    }
    rendered.push_str(&t.body[cursor..]);

    Ok(InstantiatedPrompt {
        template: TemplateHandle {
            template_id: t.template_id.clone(),
            version: t.version,
        },
        rendered_text: rendered,
        bindings: values,
    })
}
