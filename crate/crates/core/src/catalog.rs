//! Normative requirement catalog: standards clauses, derived accessibility
//! requirements (DARs) keyed by user need, and the requirement nodes checked
//! by the compliance report.
//!
//! The catalog is data. The bundled default lives in `data/catalog.json` and
//! can be replaced at runtime with `--catalog <path>`; the file grammar is
//! documented in `docs/formats.md`.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::rules::TransformationKind;
use crate::ui::OutputModality;

/// Profile flag set whenever the profile lists [`UserNeed::CognitiveDisability`].
pub const FLAG_COGNITIVE_SUPPORT: &str = "cognitiveSupport";
/// Profile flag set whenever the profile lists [`UserNeed::HearingImpairment`].
pub const FLAG_AUDITORY_EXCLUSION: &str = "auditoryExclusion";

const DEFAULT_CATALOG: &str = include_str!("../data/catalog.json");

#[derive(Debug, thiserror::Error)]
pub enum CatalogError {
    #[error("catalog parse error: {0}")]
    Parse(String),
    #[error("duplicate id in catalog: {0}")]
    DuplicateId(String),
    #[error("{owner} cites {reference}, which is not in normative_refs")]
    DanglingRef { owner: String, reference: String },
    #[error("invalid catalog entry {id}: {reason}")]
    Invalid { id: String, reason: String },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Standard {
    #[serde(rename = "WCAG22")]
    Wcag22,
    #[serde(rename = "EN301549")]
    En301549,
    #[serde(rename = "ISO24495_1")]
    Iso24495_1,
    #[serde(rename = "COGA")]
    Coga,
    #[serde(rename = "TRUSTWORTHY_AI")]
    TrustworthyAi,
}

impl Standard {
    pub const ALL: [Standard; 5] = [
        Standard::Wcag22,
        Standard::En301549,
        Standard::Iso24495_1,
        Standard::Coga,
        Standard::TrustworthyAi,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Standard::Wcag22 => "WCAG22",
            Standard::En301549 => "EN301549",
            Standard::Iso24495_1 => "ISO24495_1",
            Standard::Coga => "COGA",
            Standard::TrustworthyAi => "TRUSTWORTHY_AI",
        }
    }
}

impl FromStr for Standard {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Standard::ALL
            .into_iter()
            .find(|st| st.as_str() == s)
            .ok_or_else(|| format!("unknown standard `{s}`"))
    }
}

impl fmt::Display for Standard {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// A `(standard, clause)` citation. Serialized as `STANDARD:clause`, e.g.
/// `WCAG22:1.4.3` or `COGA:Reinforce Meaning`.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct ClauseRef {
    pub standard: Standard,
    pub clause: String,
}

impl ClauseRef {
    pub fn new(standard: Standard, clause: impl Into<String>) -> Self {
        Self {
            standard,
            clause: clause.into(),
        }
    }
}

impl fmt::Display for ClauseRef {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:{}", self.standard, self.clause)
    }
}

impl FromStr for ClauseRef {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let (std, clause) = s
            .split_once(':')
            .ok_or_else(|| format!("expected STANDARD:clause, got `{s}`"))?;
        let clause = clause.trim();
        if clause.is_empty() {
            return Err(format!("empty clause in `{s}`"));
        }
        Ok(ClauseRef::new(std.trim().parse()?, clause))
    }
}

impl Serialize for ClauseRef {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for ClauseRef {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct NormativeRef {
    pub standard: Standard,
    pub clause: String,
    pub title: String,
}

impl NormativeRef {
    pub fn key(&self) -> ClauseRef {
        ClauseRef::new(self.standard, self.clause.clone())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum UserNeed {
    CognitiveDisability,
    HearingImpairment,
    VisualImpairment,
    MotorCognitiveLoad,
    GeneralClarity,
}

impl UserNeed {
    pub const ALL: [UserNeed; 5] = [
        UserNeed::CognitiveDisability,
        UserNeed::HearingImpairment,
        UserNeed::VisualImpairment,
        UserNeed::MotorCognitiveLoad,
        UserNeed::GeneralClarity,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            UserNeed::CognitiveDisability => "CognitiveDisability",
            UserNeed::HearingImpairment => "HearingImpairment",
            UserNeed::VisualImpairment => "VisualImpairment",
            UserNeed::MotorCognitiveLoad => "MotorCognitiveLoad",
            UserNeed::GeneralClarity => "GeneralClarity",
        }
    }
}

impl FromStr for UserNeed {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        UserNeed::ALL
            .into_iter()
            .find(|n| n.as_str() == s)
            .ok_or_else(|| format!("unknown user need `{s}`"))
    }
}

impl fmt::Display for UserNeed {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum ProfileError {
    #[error("profileId must be an opaque token of 1-64 characters [A-Za-z0-9_-], got {0:?}")]
    BadProfileId(String),
    #[error("profile lists {need} but flag `{flag}` is not true")]
    MissingImpliedFlag { need: UserNeed, flag: &'static str },
}

/// Accessibility needs and presentation preferences. Carries no personal data:
/// `profileId` is an opaque token.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct UserProfile {
    pub profile_id: String,
    #[serde(default)]
    pub needs: BTreeSet<UserNeed>,
    #[serde(default)]
    pub flags: BTreeMap<String, bool>,
    #[serde(default)]
    pub preferred_modalities: Vec<OutputModality>,
    #[serde(default = "default_locale")]
    pub locale: String,
}

fn default_locale() -> String {
    "en".to_string()
}

impl UserProfile {
    /// Builds a profile with the flags implied by `needs` already set.
    pub fn new(profile_id: impl Into<String>, needs: impl IntoIterator<Item = UserNeed>) -> Self {
        let mut p = Self {
            profile_id: profile_id.into(),
            needs: needs.into_iter().collect(),
            flags: BTreeMap::new(),
            preferred_modalities: Vec::new(),
            locale: default_locale(),
        };
        p.apply_implied_flags();
        p
    }

    pub fn with_flag(mut self, name: impl Into<String>, value: bool) -> Self {
        self.flags.insert(name.into(), value);
        self
    }

    pub fn with_modalities(mut self, modalities: impl IntoIterator<Item = OutputModality>) -> Self {
        self.preferred_modalities = modalities.into_iter().collect();
        self
    }

    /// Sets `cognitiveSupport` / `auditoryExclusion` where the needs require them.
    pub fn apply_implied_flags(&mut self) {
        for (need, flag) in Self::implied_flags() {
            if self.needs.contains(&need) {
                self.flags.insert(flag.to_string(), true);
            }
        }
    }

    fn implied_flags() -> [(UserNeed, &'static str); 2] {
        [
            (UserNeed::CognitiveDisability, FLAG_COGNITIVE_SUPPORT),
            (UserNeed::HearingImpairment, FLAG_AUDITORY_EXCLUSION),
        ]
    }

    pub fn flag(&self, name: &str) -> bool {
        self.flags.get(name).copied().unwrap_or(false)
    }

    pub fn validate(&self) -> Result<(), ProfileError> {
        let id_ok = !self.profile_id.is_empty()
            && self.profile_id.len() <= 64
            && self
                .profile_id
                .chars()
                .all(|c| c.is_ascii_alphanumeric() || c == '-' || c == '_');
        if !id_ok {
            return Err(ProfileError::BadProfileId(self.profile_id.clone()));
        }
        for (need, flag) in Self::implied_flags() {
            if self.needs.contains(&need) && !self.flag(flag) {
                return Err(ProfileError::MissingImpliedFlag { need, flag });
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct DerivedRequirement {
    pub dar_id: String,
    pub need: UserNeed,
    pub statement: String,
    pub transformations: Vec<TransformationKind>,
    pub refs: Vec<ClauseRef>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct RequirementNode {
    pub req_id: String,
    pub title: String,
    #[serde(default)]
    pub refs: Vec<ClauseRef>,
    pub satisfied_by: Vec<String>,
    #[serde(default)]
    pub traced_by: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct CatalogDoc {
    catalog_version: u32,
    normative_refs: Vec<NormativeRef>,
    dars: Vec<DerivedRequirement>,
    requirements: Vec<RequirementNode>,
}

/// Immutable after load; share freely across threads.
#[derive(Debug, Clone, PartialEq)]
pub struct Catalog {
    version: u32,
    refs: Vec<NormativeRef>,
    dars: Vec<DerivedRequirement>,
    requirements: Vec<RequirementNode>,
}

impl Catalog {
    /// The catalog shipped with the crate.
    pub fn bundled() -> Self {
        load_catalog(DEFAULT_CATALOG).expect("bundled catalog is valid")
    }

    pub fn version(&self) -> u32 {
        self.version
    }

    pub fn normative_refs(&self) -> &[NormativeRef] {
        &self.refs
    }

    pub fn dars(&self) -> &[DerivedRequirement] {
        &self.dars
    }

    pub fn requirements(&self) -> &[RequirementNode] {
        &self.requirements
    }

    pub fn dar(&self, id: &str) -> Option<&DerivedRequirement> {
        self.dars.iter().find(|d| d.dar_id == id)
    }

    pub fn requirement(&self, id: &str) -> Option<&RequirementNode> {
        self.requirements.iter().find(|r| r.req_id == id)
    }

    pub fn has_ref(&self, key: &ClauseRef) -> bool {
        self.refs
            .iter()
            .any(|r| r.standard == key.standard && r.clause == key.clause)
    }

    pub fn lookup_ref(&self, key: &ClauseRef) -> Option<&NormativeRef> {
        self.refs
            .iter()
            .find(|r| r.standard == key.standard && r.clause == key.clause)
    }

    pub fn to_json(&self) -> String {
        let doc = CatalogDoc {
            catalog_version: self.version,
            normative_refs: self.refs.clone(),
            dars: self.dars.clone(),
            requirements: self.requirements.clone(),
        };
        serde_json::to_string_pretty(&doc).expect("catalog serializes")
    }
}

/// Parses and validates a catalog document.
pub fn load_catalog(source: &str) -> Result<Catalog, CatalogError> {
    let doc: CatalogDoc =
        serde_json::from_str(source).map_err(|e| CatalogError::Parse(e.to_string()))?;

    let mut keys = BTreeSet::new();
    for r in &doc.normative_refs {
        if r.clause.trim().is_empty() {
            return Err(CatalogError::Invalid {
                id: r.standard.to_string(),
                reason: "empty clause".into(),
            });
        }
        if !keys.insert(r.key()) {
            return Err(CatalogError::DuplicateId(r.key().to_string()));
        }
    }

    let check_refs = |owner: &str, refs: &[ClauseRef]| -> Result<(), CatalogError> {
        match refs.iter().find(|r| !keys.contains(*r)) {
            Some(missing) => Err(CatalogError::DanglingRef {
                owner: owner.to_string(),
                reference: missing.to_string(),
            }),
            None => Ok(()),
        }
    };

    let mut dar_ids = BTreeSet::new();
    for d in &doc.dars {
        if !dar_ids.insert(d.dar_id.as_str()) {
            return Err(CatalogError::DuplicateId(d.dar_id.clone()));
        }
        if d.transformations.is_empty() {
            return Err(CatalogError::Invalid {
                id: d.dar_id.clone(),
                reason: "no transformations".into(),
            });
        }
        if d.refs.is_empty() {
            return Err(CatalogError::Invalid {
                id: d.dar_id.clone(),
                reason: "no normative references".into(),
            });
        }
        check_refs(&d.dar_id, &d.refs)?;
    }

    let mut req_ids = BTreeSet::new();
    for r in &doc.requirements {
        if !req_ids.insert(r.req_id.as_str()) {
            return Err(CatalogError::DuplicateId(r.req_id.clone()));
        }
        if r.satisfied_by.is_empty() {
            return Err(CatalogError::Invalid {
                id: r.req_id.clone(),
                reason: "satisfiedBy is empty".into(),
            });
        }
        check_refs(&r.req_id, &r.refs)?;
    }

    let mut dars = doc.dars;
    dars.sort_by(|a, b| a.dar_id.cmp(&b.dar_id));
    Ok(Catalog {
        version: doc.catalog_version,
        refs: doc.normative_refs,
        dars,
        requirements: doc.requirements,
    })
}

/// DARs whose need is listed in the profile, ordered by `darId`. Flags and
/// modality preferences never influence the result.
pub fn derive_requirements(profile: &UserProfile, catalog: &Catalog) -> Vec<DerivedRequirement> {
    derive_for_needs(&profile.needs, catalog)
}

pub fn derive_for_needs(needs: &BTreeSet<UserNeed>, catalog: &Catalog) -> Vec<DerivedRequirement> {
    // `dars` is kept sorted by id at load.
    catalog
        .dars
        .iter()
        .filter(|d| needs.contains(&d.need))
        .cloned()
        .collect()
}
