//! Renderer-agnostic UI schema built from a gated transform result and the
//! active layout rules.
//!
//! The schema is the contract consumed by the browser console. It is
//! serialized as JSON with `schemaVersion: 1` and frozen by golden files.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::catalog::UserProfile;
use crate::genai::{PictogramAnnotation, TransformResult};
use crate::rules::{ActiveRuleSet, TransformationKind};
use crate::text;

pub const SCHEMA_VERSION: u32 = 1;
/// Minimum text contrast under the high-contrast theme.
pub const MIN_CONTRAST: f64 = 4.5;
/// Requirement reference for nodes no adaptation rule shaped: every template
/// conforms to the baseline web-content clauses.
pub const BASELINE_REF: &str = "EN301549:9";
pub const FEEDBACK_REQ: &str = "REQ-FB-01";

const LARGE_TARGET: TargetSize = TargetSize {
    width: 44,
    height: 44,
};
const DEFAULT_TARGET: TargetSize = TargetSize {
    width: 32,
    height: 32,
};

const PICTOGRAM_MANIFEST: &str = include_str!("../data/pictograms/manifest.json");
const BUNDLED_ASSETS: [(&str, &str); 6] = [
    (
        "pictograms/take.svg",
        include_str!("../data/pictograms/take.svg"),
    ),
    (
        "pictograms/pill.svg",
        include_str!("../data/pictograms/pill.svg"),
    ),
    (
        "pictograms/clock.svg",
        include_str!("../data/pictograms/clock.svg"),
    ),
    (
        "pictograms/stomach-pain.svg",
        include_str!("../data/pictograms/stomach-pain.svg"),
    ),
    (
        "pictograms/doctor.svg",
        include_str!("../data/pictograms/doctor.svg"),
    ),
    (
        "pictograms/water.svg",
        include_str!("../data/pictograms/water.svg"),
    ),
];

/// Bundled pictogram asset by manifest path.
pub fn bundled_asset(path: &str) -> Option<&'static str> {
    BUNDLED_ASSETS
        .iter()
        .find(|(p, _)| *p == path)
        .map(|(_, body)| *body)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum OutputModality {
    Text,
    Audio,
    Pictogram,
    Video,
}

// ---------------------------------------------------------------------------
// Colour and contrast
// ---------------------------------------------------------------------------

/// sRGB colour, serialized as `#RRGGBB`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Rgb(pub u8, pub u8, pub u8);

impl Rgb {
    pub const BLACK: Rgb = Rgb(0, 0, 0);
    pub const WHITE: Rgb = Rgb(255, 255, 255);

    /// WCAG relative luminance of the linearized sRGB channels.
    pub fn relative_luminance(self) -> f64 {
        fn linear(c: u8) -> f64 {
            let v = f64::from(c) / 255.0;
            if v <= 0.04045 {
                v / 12.92
            } else {
                ((v + 0.055) / 1.055).powf(2.4)
            }
        }
        0.2126 * linear(self.0) + 0.7152 * linear(self.1) + 0.0722 * linear(self.2)
    }
}

impl fmt::Display for Rgb {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "#{:02X}{:02X}{:02X}", self.0, self.1, self.2)
    }
}

impl FromStr for Rgb {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let hex = s.strip_prefix('#').unwrap_or(s);
        if hex.len() != 6 || !hex.chars().all(|c| c.is_ascii_hexdigit()) {
            return Err(format!("expected #RRGGBB, got `{s}`"));
        }
        let ch = |i: usize| u8::from_str_radix(&hex[i..i + 2], 16).expect("checked hex");
        Ok(Rgb(ch(0), ch(2), ch(4)))
    }
}

impl Serialize for Rgb {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for Rgb {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        String::deserialize(d)?
            .parse()
            .map_err(serde::de::Error::custom)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ColorPair {
    pub foreground: Rgb,
    pub background: Rgb,
}

impl ColorPair {
    pub const fn new(foreground: Rgb, background: Rgb) -> Self {
        Self {
            foreground,
            background,
        }
    }
}

/// `(L_lighter + 0.05) / (L_darker + 0.05)`, in `[1, 21]` and symmetric.
pub fn contrast_ratio(pair: ColorPair) -> f64 {
    let a = pair.foreground.relative_luminance();
    let b = pair.background.relative_luminance();
    let (hi, lo) = if a >= b { (a, b) } else { (b, a) };
    (hi + 0.05) / (lo + 0.05)
}

const NEAR_BLACK: Rgb = Rgb(0x1A, 0x1A, 0x1A);

#[derive(Debug, Clone, Copy)]
struct Palette {
    body: ColorPair,
    button: ColorPair,
    banner: ColorPair,
}

const HIGH_CONTRAST: Palette = Palette {
    body: ColorPair::new(NEAR_BLACK, Rgb::WHITE),
    button: ColorPair::new(Rgb::WHITE, NEAR_BLACK),
    banner: ColorPair::new(NEAR_BLACK, Rgb(0xFF, 0xE0, 0x66)),
};

const DEFAULT_PALETTE: Palette = Palette {
    body: ColorPair::new(Rgb(0x2B, 0x2B, 0x2B), Rgb::WHITE),
    button: ColorPair::new(Rgb::WHITE, Rgb(0x1F, 0x5F, 0xAD)),
    banner: ColorPair::new(Rgb(0x2B, 0x2B, 0x2B), Rgb(0xFF, 0xF4, 0xCC)),
};

// ---------------------------------------------------------------------------
// Pictograms
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct PictogramEntry {
    pub keyword: String,
    pub id: String,
    pub asset: String,
    pub alt: String,
    /// Phrases that call for this pictogram, matched case-insensitively on
    /// word boundaries.
    pub triggers: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
struct PictogramManifest {
    manifest_version: u32,
    entries: Vec<PictogramEntry>,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum PictogramError {
    #[error("pictogram manifest parse error: {0}")]
    Parse(String),
    #[error("duplicate pictogram keyword or id `{0}`")]
    Duplicate(String),
    #[error("pictogram `{keyword}` references missing asset `{asset}`")]
    MissingAsset { keyword: String, asset: String },
}

/// Keyword to pictogram lookup. Immutable after load.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PictogramMap {
    entries: Vec<PictogramEntry>,
}

impl PictogramMap {
    pub fn bundled() -> Self {
        Self::from_manifest(PICTOGRAM_MANIFEST, |asset| bundled_asset(asset).is_some())
            .expect("bundled pictogram manifest is valid")
    }

    /// Parses a manifest; `asset_exists` resolves asset references.
    pub fn from_manifest(
        src: &str,
        asset_exists: impl Fn(&str) -> bool,
    ) -> Result<Self, PictogramError> {
        let m: PictogramManifest =
            serde_json::from_str(src).map_err(|e| PictogramError::Parse(e.to_string()))?;
        let mut seen = BTreeSet::new();
        for e in &m.entries {
            if !seen.insert(e.keyword.clone()) {
                return Err(PictogramError::Duplicate(e.keyword.clone()));
            }
            if !seen.insert(format!("id:{}", e.id)) {
                return Err(PictogramError::Duplicate(e.id.clone()));
            }
            if !asset_exists(&e.asset) {
                return Err(PictogramError::MissingAsset {
                    keyword: e.keyword.clone(),
                    asset: e.asset.clone(),
                });
            }
        }
        Ok(Self { entries: m.entries })
    }

    pub fn entries(&self) -> &[PictogramEntry] {
        &self.entries
    }

    pub fn by_keyword(&self, keyword: &str) -> Option<&PictogramEntry> {
        self.entries.iter().find(|e| e.keyword == keyword)
    }

    pub fn by_id(&self, id: &str) -> Option<&PictogramEntry> {
        self.entries.iter().find(|e| e.id == id)
    }

    /// One annotation per (step, keyword) whose triggers occur in the step,
    /// in step order then manifest order. Step indices are 1-based.
    pub fn annotate(&self, steps: &[String]) -> Vec<PictogramAnnotation> {
        let mut out = Vec::new();
        for (i, step) in steps.iter().enumerate() {
            for e in &self.entries {
                if e.triggers.iter().any(|t| text::contains_phrase(step, t)) {
                    out.push(PictogramAnnotation {
                        step_index: i + 1,
                        keyword: e.keyword.clone(),
                        pictogram_id: e.id.clone(),
                    });
                }
            }
        }
        out
    }
}

// ---------------------------------------------------------------------------
// Schema
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ComponentKind {
    StepBlock,
    PictogramLabel,
    Button,
    AlertBanner,
    FeedbackScale,
    Container,
}

impl ComponentKind {
    fn prefix(self) -> &'static str {
        match self {
            ComponentKind::StepBlock => "step",
            ComponentKind::PictogramLabel => "picto",
            ComponentKind::Button => "button",
            ComponentKind::AlertBanner => "alert",
            ComponentKind::FeedbackScale => "feedback",
            ComponentKind::Container => "container",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "camelCase")]
pub enum NodeContent {
    Text {
        text: String,
    },
    #[serde(rename_all = "camelCase")]
    Pictogram {
        pictogram_id: String,
        keyword: String,
        asset: String,
        alt: String,
    },
}

/// Size in density-independent units; the renderer maps units to pixels.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub struct TargetSize {
    pub width: u32,
    pub height: u32,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct RatingScale {
    pub min: u8,
    pub max: u8,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct UiComponentNode {
    pub component_id: String,
    pub kind: ComponentKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub step_number: Option<u32>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub content: Option<NodeContent>,
    pub colors: ColorPair,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub target_size: Option<TargetSize>,
    /// Interaction trigger fired by a button (`next`, `back`, `help`, `done`).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub action: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub scale: Option<RatingScale>,
    pub requirement_refs: Vec<String>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub children: Vec<UiComponentNode>,
}

impl UiComponentNode {
    pub fn is_leaf(&self) -> bool {
        self.children.is_empty()
    }

    pub fn text(&self) -> Option<&str> {
        match &self.content {
            Some(NodeContent::Text { text }) => Some(text),
            _ => None,
        }
    }

    /// Pre-order traversal.
    pub fn walk(&self) -> Vec<&UiComponentNode> {
        let mut out = vec![self];
        for c in &self.children {
            out.extend(c.walk());
        }
        out
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Theme {
    Default,
    HighContrast,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum InteractionState {
    Reading,
    NavigatingSteps,
    RequestingHelp,
    CompletingTask,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Transition {
    pub from: InteractionState,
    pub to: InteractionState,
    pub trigger: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct InteractionModel {
    pub initial: InteractionState,
    pub states: Vec<InteractionState>,
    pub transitions: Vec<Transition>,
}

impl InteractionModel {
    /// Reading leads into the steps, steps loop on next/back, help is a
    /// detour from the steps, and the task completes only from the steps.
    pub fn standard() -> Self {
        use InteractionState::*;
        let t = |from, to, trigger: &str| Transition {
            from,
            to,
            trigger: trigger.to_string(),
        };
        Self {
            initial: Reading,
            states: vec![Reading, NavigatingSteps, RequestingHelp, CompletingTask],
            transitions: vec![
                t(Reading, NavigatingSteps, "next"),
                t(NavigatingSteps, NavigatingSteps, "next"),
                t(NavigatingSteps, NavigatingSteps, "back"),
                t(NavigatingSteps, RequestingHelp, "help"),
                t(RequestingHelp, NavigatingSteps, "resume"),
                t(NavigatingSteps, CompletingTask, "done"),
            ],
        }
    }

    pub fn allows(&self, from: InteractionState, to: InteractionState) -> bool {
        self.transitions
            .iter()
            .any(|t| t.from == from && t.to == to)
    }

    pub fn is_well_formed(&self) -> bool {
        self.states.contains(&self.initial)
            && self
                .transitions
                .iter()
                .all(|t| self.states.contains(&t.from) && self.states.contains(&t.to))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct UiSchema {
    pub schema_version: u32,
    pub theme: Theme,
    pub modalities: BTreeSet<OutputModality>,
    pub interaction: InteractionModel,
    /// SHA-256 of the presented text; binds the schema to its gate report.
    pub content_hash: String,
    pub root: UiComponentNode,
}

impl UiSchema {
    pub fn nodes(&self) -> Vec<&UiComponentNode> {
        self.root.walk()
    }

    pub fn leaves(&self) -> Vec<&UiComponentNode> {
        self.nodes().into_iter().filter(|n| n.is_leaf()).collect()
    }

    pub fn find(&self, component_id: &str) -> Option<&UiComponentNode> {
        self.nodes()
            .into_iter()
            .find(|n| n.component_id == component_id)
    }

    pub fn count(&self, kind: ComponentKind) -> usize {
        self.nodes().iter().filter(|n| n.kind == kind).count()
    }

    /// Nodes that render text: anything with text content, plus pictogram
    /// labels (their alt text is shown).
    pub fn text_nodes(&self) -> Vec<&UiComponentNode> {
        self.nodes()
            .into_iter()
            .filter(|n| n.content.is_some())
            .collect()
    }

    /// Lowest contrast ratio across text nodes (21 when there are none).
    pub fn min_contrast_ratio(&self) -> f64 {
        self.text_nodes()
            .iter()
            .map(|n| contrast_ratio(n.colors))
            .fold(21.0, f64::min)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("schema serializes")
    }
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum UiError {
    #[error("pictogram keyword `{0}` is not in the pictogram map")]
    UnmappedPictogram(String),
    #[error("transform result has no content")]
    EmptyResult,
    #[error("annotation refers to step {index} but there are {steps} steps")]
    InvalidAnnotation { index: usize, steps: usize },
    #[error("text node {component_id} has contrast {ratio:.2}, below {MIN_CONTRAST}")]
    ContrastViolation { component_id: String, ratio: f64 },
}

/// Starts from the preferred modalities plus text, drops audio when audio is
/// disabled and adds pictograms when they are attached.
pub fn select_modalities(
    profile: &UserProfile,
    active: &ActiveRuleSet,
) -> BTreeSet<OutputModality> {
    let mut out: BTreeSet<OutputModality> = profile.preferred_modalities.iter().copied().collect();
    out.insert(OutputModality::Text);
    if active.has(TransformationKind::DisableAudio) {
        out.remove(&OutputModality::Audio);
    }
    if active.has(TransformationKind::AttachPictograms) {
        out.insert(OutputModality::Pictogram);
    }
    out
}

/// The text a user is shown: plain text, then each step on its own line.
pub fn presented_text(result: &TransformResult) -> String {
    let mut s = result.plain_text.clone();
    for (i, step) in result.steps.iter().enumerate() {
        s.push_str(&format!("\n{}. {}", i + 1, step));
    }
    s
}

struct Builder<'a> {
    active: &'a ActiveRuleSet,
    palette: Palette,
    content_hash: String,
    large: bool,
}

impl Builder<'_> {
    fn refs_for(&self, kinds: &[TransformationKind], extra: &[&str]) -> Vec<String> {
        let mut refs = BTreeSet::new();
        for k in kinds {
            if let Some(e) = self.active.rule_for(*k) {
                refs.extend(e.dar_ids.iter().cloned());
                refs.extend(e.rule.normative_refs.iter().map(|r| r.to_string()));
            }
        }
        refs.extend(extra.iter().map(|s| s.to_string()));
        if refs.is_empty() {
            refs.insert(BASELINE_REF.to_string());
        }
        refs.into_iter().collect()
    }

    fn id(&self, parent: &str, kind: ComponentKind, index: usize, content: &str) -> String {
        let digest = text::content_hash(&format!(
            "{}|{parent}|{}|{index}|{content}",
            self.content_hash,
            kind.prefix()
        ));
        format!("{}-{}", kind.prefix(), &digest[..12])
    }

    #[allow(clippy::too_many_arguments)]
    fn node(
        &self,
        parent: &str,
        index: usize,
        kind: ComponentKind,
        content: Option<NodeContent>,
        colors: ColorPair,
        refs: Vec<String>,
    ) -> UiComponentNode {
        let key = match &content {
            Some(NodeContent::Text { text }) => text.clone(),
            Some(NodeContent::Pictogram { pictogram_id, .. }) => pictogram_id.clone(),
            None => String::new(),
        };
        UiComponentNode {
            component_id: self.id(parent, kind, index, &key),
            kind,
            step_number: None,
            content,
            colors,
            target_size: None,
            action: None,
            scale: None,
            requirement_refs: refs,
            children: Vec::new(),
        }
    }

    fn target(&self) -> TargetSize {
        if self.large {
            LARGE_TARGET
        } else {
            DEFAULT_TARGET
        }
    }
}

pub fn build_schema(
    result: &TransformResult,
    active: &ActiveRuleSet,
    profile: &UserProfile,
    pictos: &PictogramMap,
) -> Result<UiSchema, UiError> {
    use TransformationKind as K;

    if result.plain_text.trim().is_empty() && result.steps.iter().all(|s| s.trim().is_empty()) {
        return Err(UiError::EmptyResult);
    }
    for a in &result.pictogram_annotations {
        if a.step_index == 0 || a.step_index > result.steps.len() {
            return Err(UiError::InvalidAnnotation {
                index: a.step_index,
                steps: result.steps.len(),
            });
        }
    }
    let attach = active.has(K::AttachPictograms);
    let mut picto_by_step: BTreeMap<usize, Vec<&PictogramEntry>> = BTreeMap::new();
    if attach {
        for a in &result.pictogram_annotations {
            let entry = pictos
                .by_keyword(&a.keyword)
                .ok_or_else(|| UiError::UnmappedPictogram(a.keyword.clone()))?;
            picto_by_step.entry(a.step_index).or_default().push(entry);
        }
    }

    let high_contrast = active.has(K::ApplyHighContrast);
    let theme = if high_contrast {
        Theme::HighContrast
    } else {
        Theme::Default
    };
    let b = Builder {
        active,
        palette: if high_contrast {
            HIGH_CONTRAST
        } else {
            DEFAULT_PALETTE
        },
        content_hash: text::content_hash(&presented_text(result)),
        large: active.has(K::RenderLargeTargets),
    };
    let text_kinds = [K::SimplifyText, K::SimplifyStructure, K::ApplyHighContrast];

    let mut root = b.node(
        "",
        0,
        ComponentKind::Container,
        None,
        b.palette.body,
        b.refs_for(&[], &[]),
    );
    let root_id = root.component_id.clone();
    let mut children = Vec::new();

    if active.has(K::EnableVisualAlerts) {
        children.push(
            b.node(
                &root_id,
                children.len(),
                ComponentKind::AlertBanner,
                Some(NodeContent::Text {
                    text:
                        "All notices on this page are shown on screen. Nothing is played as sound."
                            .into(),
                }),
                b.palette.banner,
                b.refs_for(
                    &[K::EnableVisualAlerts, K::DisableAudio, K::ApplyHighContrast],
                    &[],
                ),
            ),
        );
    }

    let picto_nodes = |parent: &str, entries: &[&PictogramEntry]| -> Vec<UiComponentNode> {
        entries
            .iter()
            .enumerate()
            .map(|(i, e)| {
                b.node(
                    parent,
                    i,
                    ComponentKind::PictogramLabel,
                    Some(NodeContent::Pictogram {
                        pictogram_id: e.id.clone(),
                        keyword: e.keyword.clone(),
                        asset: e.asset.clone(),
                        alt: e.alt.clone(),
                    }),
                    b.palette.body,
                    b.refs_for(&[K::AttachPictograms, K::ApplyHighContrast], &[]),
                )
            })
            .collect()
    };

    let structured = active.has(K::StructureAsSteps) && !result.steps.is_empty();
    let mut summary = b.node(
        &root_id,
        children.len(),
        ComponentKind::Container,
        Some(NodeContent::Text {
            text: result.plain_text.clone(),
        }),
        b.palette.body,
        b.refs_for(&text_kinds, &[]),
    );
    if attach && !structured {
        let all: Vec<&PictogramEntry> = picto_by_step.values().flatten().copied().collect();
        let id = summary.component_id.clone();
        summary.children = picto_nodes(&id, &all);
    }
    children.push(summary);

    if structured {
        let mut steps = b.node(
            &root_id,
            children.len(),
            ComponentKind::Container,
            None,
            b.palette.body,
            b.refs_for(&[K::StructureAsSteps], &[]),
        );
        let steps_id = steps.component_id.clone();
        for (i, step) in result.steps.iter().enumerate() {
            let mut kinds = vec![K::StructureAsSteps];
            kinds.extend(text_kinds);
            let mut block = b.node(
                &steps_id,
                i,
                ComponentKind::StepBlock,
                Some(NodeContent::Text { text: step.clone() }),
                b.palette.body,
                b.refs_for(&kinds, &[]),
            );
            block.step_number = Some(i as u32 + 1);
            if let Some(entries) = picto_by_step.get(&(i + 1)) {
                let id = block.component_id.clone();
                block.children = picto_nodes(&id, entries);
            }
            steps.children.push(block);
        }
        children.push(steps);
    }

    let mut nav = b.node(
        &root_id,
        children.len(),
        ComponentKind::Container,
        None,
        b.palette.body,
        b.refs_for(&[], &[]),
    );
    let nav_id = nav.component_id.clone();
    for (i, (label, action)) in [
        ("Back", "back"),
        ("Next", "next"),
        ("Help", "help"),
        ("Done", "done"),
    ]
    .into_iter()
    .enumerate()
    {
        let mut button = b.node(
            &nav_id,
            i,
            ComponentKind::Button,
            Some(NodeContent::Text { text: label.into() }),
            b.palette.button,
            b.refs_for(&[K::RenderLargeTargets, K::ApplyHighContrast], &[]),
        );
        button.target_size = Some(b.target());
        button.action = Some(action.into());
        nav.children.push(button);
    }
    children.push(nav);

    let mut feedback = b.node(
        &root_id,
        children.len(),
        ComponentKind::FeedbackScale,
        Some(NodeContent::Text {
            text: "How well did you understand this? Choose 1 to 5.".into(),
        }),
        b.palette.body,
        b.refs_for(
            &[K::RenderLargeTargets, K::ApplyHighContrast],
            &[FEEDBACK_REQ],
        ),
    );
    feedback.scale = Some(RatingScale { min: 1, max: 5 });
    feedback.target_size = Some(b.target());
    children.push(feedback);

    root.children = children;
    let schema = UiSchema {
        schema_version: SCHEMA_VERSION,
        theme,
        modalities: select_modalities(profile, active),
        interaction: InteractionModel::standard(),
        content_hash: b.content_hash.clone(),
        root,
    };

    if theme == Theme::HighContrast {
        for n in schema.text_nodes() {
            let ratio = contrast_ratio(n.colors);
            if ratio < MIN_CONTRAST {
                return Err(UiError::ContrastViolation {
                    component_id: n.component_id.clone(),
                    ratio,
                });
            }
        }
    }
    Ok(schema)
}
