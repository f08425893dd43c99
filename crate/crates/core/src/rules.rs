//! Declarative adaptation rules.
//!
//! A rule document holds one block per rule:
//!
//! ```text
//! # comment
//! rule R-SIMPLIFY-TEXT {
//!     when: dar(DAR-01) and flag(cognitiveSupport);
//!     do: simplifyText();
//!     priority: 10;
//!     prompt: T-SIMPLIFY;
//!     refs: [COGA:"Language & Structure", WCAG22:"Guideline 3.1 Readable"];
//! }
//! ```
//!
//! Conditions combine `need(<UserNeed>)`, `flag(<name>)` and `dar(<darId>)`
//! with `and`, `or`, `not` and parentheses (`not` binds tightest, then `and`,
//! then `or`). Rules activate in `(priority, ruleId)` order, lower priority
//! first. No two rules with the same transformation may ever be active
//! together; [`parse_rule_set`] proves this by enumerating every assignment of
//! the predicates the two conditions mention.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::catalog::{ClauseRef, DerivedRequirement, Standard, UserNeed, UserProfile};

const DEFAULT_RULES: &str = include_str!("../data/default.rules");

/// Upper bound on predicates enumerated per conflict check (2^n assignments).
const MAX_CONFLICT_VARS: usize = 20;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub enum TransformationKind {
    SimplifyText,
    StructureAsSteps,
    AttachPictograms,
    DisableAudio,
    EnableVisualAlerts,
    ApplyHighContrast,
    RenderLargeTargets,
    SimplifyStructure,
}

impl TransformationKind {
    pub const ALL: [TransformationKind; 8] = [
        TransformationKind::SimplifyText,
        TransformationKind::StructureAsSteps,
        TransformationKind::AttachPictograms,
        TransformationKind::DisableAudio,
        TransformationKind::EnableVisualAlerts,
        TransformationKind::ApplyHighContrast,
        TransformationKind::RenderLargeTargets,
        TransformationKind::SimplifyStructure,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            TransformationKind::SimplifyText => "simplifyText",
            TransformationKind::StructureAsSteps => "structureAsSteps",
            TransformationKind::AttachPictograms => "attachPictograms",
            TransformationKind::DisableAudio => "disableAudio",
            TransformationKind::EnableVisualAlerts => "enableVisualAlerts",
            TransformationKind::ApplyHighContrast => "applyHighContrast",
            TransformationKind::RenderLargeTargets => "renderLargeTargets",
            TransformationKind::SimplifyStructure => "simplifyStructure",
        }
    }

    /// Text transformations go through the generative backend and need a
    /// prompt template; the rest are layout flags.
    pub fn is_textual(self) -> bool {
        matches!(
            self,
            TransformationKind::SimplifyText
                | TransformationKind::StructureAsSteps
                | TransformationKind::AttachPictograms
                | TransformationKind::SimplifyStructure
        )
    }
}

impl FromStr for TransformationKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let name = s.strip_suffix("()").unwrap_or(s);
        TransformationKind::ALL
            .into_iter()
            .find(|k| k.as_str() == name)
            .ok_or_else(|| s.to_string())
    }
}

impl fmt::Display for TransformationKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}()", self.as_str())
    }
}

/// Leaf predicate of a condition.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Predicate {
    Need(UserNeed),
    Flag(String),
    Dar(String),
}

impl fmt::Display for Predicate {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Predicate::Need(n) => write!(f, "need({n})"),
            Predicate::Flag(x) => write!(f, "flag({x})"),
            Predicate::Dar(d) => write!(f, "dar({d})"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Condition {
    Pred(Predicate),
    Not(Box<Condition>),
    And(Vec<Condition>),
    Or(Vec<Condition>),
}

/// What a condition is evaluated against.
pub struct EvalContext<'a> {
    pub needs: &'a BTreeSet<UserNeed>,
    pub flags: &'a BTreeMap<String, bool>,
    pub dars: BTreeSet<&'a str>,
}

impl<'a> EvalContext<'a> {
    pub fn new(profile: &'a UserProfile, dars: &'a [DerivedRequirement]) -> Self {
        Self {
            needs: &profile.needs,
            flags: &profile.flags,
            dars: dars.iter().map(|d| d.dar_id.as_str()).collect(),
        }
    }

    pub fn holds(&self, p: &Predicate) -> bool {
        match p {
            Predicate::Need(n) => self.needs.contains(n),
            Predicate::Flag(x) => self.flags.get(x).copied().unwrap_or(false),
            Predicate::Dar(d) => self.dars.contains(d.as_str()),
        }
    }
}

impl Condition {
    pub fn eval_with(&self, holds: &dyn Fn(&Predicate) -> bool) -> bool {
        match self {
            Condition::Pred(p) => holds(p),
            Condition::Not(c) => !c.eval_with(holds),
            Condition::And(cs) => cs.iter().all(|c| c.eval_with(holds)),
            Condition::Or(cs) => cs.iter().any(|c| c.eval_with(holds)),
        }
    }

    pub fn eval(&self, ctx: &EvalContext<'_>) -> bool {
        self.eval_with(&|p| ctx.holds(p))
    }

    /// Literals (predicates with their polarity) that hold under `ctx`, in
    /// source order, without duplicates. Non-empty whenever the condition
    /// evaluates to true.
    pub fn satisfied_literals(&self, ctx: &EvalContext<'_>) -> Vec<String> {
        let mut out = Vec::new();
        self.collect_literals(ctx, true, &mut out);
        out
    }

    fn collect_literals(&self, ctx: &EvalContext<'_>, positive: bool, out: &mut Vec<String>) {
        match self {
            Condition::Pred(p) => {
                if ctx.holds(p) == positive {
                    let lit = if positive {
                        p.to_string()
                    } else {
                        format!("not {p}")
                    };
                    if !out.contains(&lit) {
                        out.push(lit);
                    }
                }
            }
            Condition::Not(c) => c.collect_literals(ctx, !positive, out),
            Condition::And(cs) | Condition::Or(cs) => {
                for c in cs {
                    c.collect_literals(ctx, positive, out);
                }
            }
        }
    }

    pub fn predicates(&self) -> BTreeSet<Predicate> {
        let mut out = BTreeSet::new();
        self.visit_predicates(&mut |p| {
            out.insert(p.clone());
        });
        out
    }

    fn visit_predicates(&self, f: &mut dyn FnMut(&Predicate)) {
        match self {
            Condition::Pred(p) => f(p),
            Condition::Not(c) => c.visit_predicates(f),
            Condition::And(cs) | Condition::Or(cs) => cs.iter().for_each(|c| c.visit_predicates(f)),
        }
    }

    fn precedence(&self) -> u8 {
        match self {
            Condition::Or(_) => 0,
            Condition::And(_) => 1,
            Condition::Not(_) | Condition::Pred(_) => 2,
        }
    }
}

impl fmt::Display for Condition {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        // Children of the same or lower precedence are parenthesized, so
        // printing then parsing rebuilds the identical tree.
        fn child(f: &mut fmt::Formatter<'_>, c: &Condition, parent: u8) -> fmt::Result {
            if c.precedence() <= parent && !matches!(c, Condition::Pred(_) | Condition::Not(_)) {
                write!(f, "({c})")
            } else {
                write!(f, "{c}")
            }
        }
        match self {
            Condition::Pred(p) => write!(f, "{p}"),
            Condition::Not(c) => {
                f.write_str("not ")?;
                child(f, c, 2)
            }
            Condition::And(cs) | Condition::Or(cs) => {
                let sep = if matches!(self, Condition::And(_)) {
                    " and "
                } else {
                    " or "
                };
                for (i, c) in cs.iter().enumerate() {
                    if i > 0 {
                        f.write_str(sep)?;
                    }
                    child(f, c, self.precedence())?;
                }
                Ok(())
            }
        }
    }
}

impl Serialize for Condition {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for Condition {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        parse_condition(&s).map_err(serde::de::Error::custom)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct AdaptationRule {
    pub rule_id: String,
    pub condition: Condition,
    pub transformation: TransformationKind,
    pub priority: u32,
    pub prompt_template_id: Option<String>,
    pub normative_refs: Vec<ClauseRef>,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum RuleError {
    #[error("syntax error at {line}:{column}: {message}")]
    Syntax {
        line: usize,
        column: usize,
        message: String,
    },
    #[error("unknown transformation `{name}` at {line}:{column}")]
    UnknownTransformation {
        name: String,
        line: usize,
        column: usize,
    },
    #[error("duplicate rule id `{0}`")]
    DuplicateRuleId(String),
    #[error("rule `{rule_id}`: {reason}")]
    InvalidRule { rule_id: String, reason: String },
    #[error("rules `{first}` and `{second}` both apply {kind} and can be active together (e.g. when {witness})")]
    ConflictingRules {
        first: String,
        second: String,
        kind: TransformationKind,
        witness: String,
    },
}

/// A validated, immutable rule set.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RuleSet {
    rules: Vec<AdaptationRule>,
}

impl RuleSet {
    pub fn bundled() -> Self {
        parse_rule_set(DEFAULT_RULES).expect("bundled rule set is valid")
    }

    pub fn rules(&self) -> &[AdaptationRule] {
        &self.rules
    }

    pub fn get(&self, rule_id: &str) -> Option<&AdaptationRule> {
        self.rules.iter().find(|r| r.rule_id == rule_id)
    }

    pub fn len(&self) -> usize {
        self.rules.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rules.is_empty()
    }

    /// Builds a rule set from already-constructed rules, running the same
    /// validation as the parser.
    pub fn from_rules(rules: Vec<AdaptationRule>) -> Result<Self, RuleError> {
        let mut seen = BTreeSet::new();
        for r in &rules {
            if !seen.insert(r.rule_id.as_str()) {
                return Err(RuleError::DuplicateRuleId(r.rule_id.clone()));
            }
            validate_rule(r)?;
        }
        check_conflicts(&rules)?;
        Ok(Self { rules })
    }

    /// Canonical rule document.
    pub fn to_source(&self) -> String {
        let mut out = String::new();
        for (i, r) in self.rules.iter().enumerate() {
            if i > 0 {
                out.push('\n');
            }
            out.push_str(&format!("rule {} {{\n", r.rule_id));
            out.push_str(&format!("    when: {};\n", r.condition));
            out.push_str(&format!("    do: {};\n", r.transformation));
            out.push_str(&format!("    priority: {};\n", r.priority));
            out.push_str(&format!(
                "    prompt: {};\n",
                r.prompt_template_id.as_deref().unwrap_or("none")
            ));
            let refs: Vec<String> = r.normative_refs.iter().map(format_ref).collect();
            out.push_str(&format!("    refs: [{}];\n", refs.join(", ")));
            out.push_str("}\n");
        }
        out
    }
}

fn format_ref(r: &ClauseRef) -> String {
    if r.clause.chars().all(is_ident_char) {
        format!("{}:{}", r.standard, r.clause)
    } else {
        let escaped = r.clause.replace('\\', "\\\\").replace('"', "\\\"");
        format!("{}:\"{}\"", r.standard, escaped)
    }
}

fn validate_rule(r: &AdaptationRule) -> Result<(), RuleError> {
    let invalid = |reason: &str| RuleError::InvalidRule {
        rule_id: r.rule_id.clone(),
        reason: reason.to_string(),
    };
    if r.rule_id.is_empty() || !r.rule_id.chars().all(is_ident_char) {
        return Err(invalid("rule id must be a non-empty identifier"));
    }
    match (r.transformation.is_textual(), &r.prompt_template_id) {
        (true, None) => Err(invalid("text transformations need a prompt template")),
        (false, Some(_)) => Err(invalid("layout transformations take `prompt: none`")),
        _ => Ok(()),
    }
}

fn check_conflicts(rules: &[AdaptationRule]) -> Result<(), RuleError> {
    for (i, a) in rules.iter().enumerate() {
        for b in &rules[i + 1..] {
            if a.transformation != b.transformation {
                continue;
            }
            let vars: Vec<Predicate> = a
                .condition
                .predicates()
                .union(&b.condition.predicates())
                .cloned()
                .collect();
            if vars.len() > MAX_CONFLICT_VARS {
                return Err(RuleError::InvalidRule {
                    rule_id: b.rule_id.clone(),
                    reason: format!(
                        "too many predicates ({}) to prove it never co-activates with `{}`",
                        vars.len(),
                        a.rule_id
                    ),
                });
            }
            for mask in 0u64..(1u64 << vars.len()) {
                let holds = |p: &Predicate| {
                    let idx = vars.iter().position(|v| v == p).expect("var enumerated");
                    mask & (1 << idx) != 0
                };
                if a.condition.eval_with(&holds) && b.condition.eval_with(&holds) {
                    let witness: Vec<String> = vars
                        .iter()
                        .enumerate()
                        .map(|(i, v)| {
                            if mask & (1 << i) != 0 {
                                v.to_string()
                            } else {
                                format!("not {v}")
                            }
                        })
                        .collect();
                    return Err(RuleError::ConflictingRules {
                        first: a.rule_id.clone(),
                        second: b.rule_id.clone(),
                        kind: a.transformation,
                        witness: witness.join(" and "),
                    });
                }
            }
        }
    }
    Ok(())
}

// ---------------------------------------------------------------------------
// Lexer / parser
// ---------------------------------------------------------------------------

fn is_ident_char(c: char) -> bool {
    c.is_ascii_alphanumeric() || matches!(c, '_' | '-' | '.')
}

#[derive(Debug, Clone, PartialEq)]
enum Tok {
    Ident(String),
    Str(String),
    Punct(char),
    Eof,
}

#[derive(Debug, Clone)]
struct Spanned {
    tok: Tok,
    line: usize,
    column: usize,
}

fn lex(src: &str) -> Result<Vec<Spanned>, RuleError> {
    let mut out = Vec::new();
    let mut chars = src.chars().peekable();
    let (mut line, mut column) = (1usize, 1usize);
    let bump = |c: char, line: &mut usize, column: &mut usize| {
        if c == '\n' {
            *line += 1;
            *column = 1;
        } else {
            *column += 1;
        }
    };
    while let Some(&c) = chars.peek() {
        let (l, col) = (line, column);
        if c.is_whitespace() {
            chars.next();
            bump(c, &mut line, &mut column);
        } else if c == '#' {
            while let Some(&c) = chars.peek() {
                if c == '\n' {
                    break;
                }
                chars.next();
                bump(c, &mut line, &mut column);
            }
        } else if "{}()[]:;,".contains(c) {
            chars.next();
            bump(c, &mut line, &mut column);
            out.push(Spanned {
                tok: Tok::Punct(c),
                line: l,
                column: col,
            });
        } else if c == '"' {
            chars.next();
            bump(c, &mut line, &mut column);
            let mut s = String::new();
            loop {
                match chars.next() {
                    Some('"') => {
                        bump('"', &mut line, &mut column);
                        break;
                    }
                    Some('\\') => {
                        bump('\\', &mut line, &mut column);
                        match chars.next() {
                            Some(e @ ('"' | '\\')) => {
                                bump(e, &mut line, &mut column);
                                s.push(e);
                            }
                            _ => {
                                return Err(RuleError::Syntax {
                                    line,
                                    column,
                                    message: "invalid escape in string".into(),
                                })
                            }
                        }
                    }
                    Some('\n') | None => {
                        return Err(RuleError::Syntax {
                            line: l,
                            column: col,
                            message: "unterminated string".into(),
                        })
                    }
                    Some(other) => {
                        bump(other, &mut line, &mut column);
                        s.push(other);
                    }
                }
            }
            out.push(Spanned {
                tok: Tok::Str(s),
                line: l,
                column: col,
            });
        } else if is_ident_char(c) {
            let mut s = String::new();
            while let Some(&c) = chars.peek() {
                if !is_ident_char(c) {
                    break;
                }
                s.push(c);
                chars.next();
                bump(c, &mut line, &mut column);
            }
            out.push(Spanned {
                tok: Tok::Ident(s),
                line: l,
                column: col,
            });
        } else {
            return Err(RuleError::Syntax {
                line: l,
                column: col,
                message: format!("unexpected character `{c}`"),
            });
        }
    }
    out.push(Spanned {
        tok: Tok::Eof,
        line,
        column,
    });
    Ok(out)
}

struct Parser {
    toks: Vec<Spanned>,
    pos: usize,
}

impl Parser {
    fn peek(&self) -> &Spanned {
        &self.toks[self.pos]
    }

    fn next(&mut self) -> Spanned {
        let t = self.toks[self.pos].clone();
        if self.pos + 1 < self.toks.len() {
            self.pos += 1;
        }
        t
    }

    fn error_at(t: &Spanned, message: impl Into<String>) -> RuleError {
        RuleError::Syntax {
            line: t.line,
            column: t.column,
            message: message.into(),
        }
    }

    fn describe(tok: &Tok) -> String {
        match tok {
            Tok::Ident(s) => format!("`{s}`"),
            Tok::Str(s) => format!("\"{s}\""),
            Tok::Punct(c) => format!("`{c}`"),
            Tok::Eof => "end of input".into(),
        }
    }

    fn expect_punct(&mut self, c: char) -> Result<(), RuleError> {
        let t = self.next();
        if t.tok == Tok::Punct(c) {
            Ok(())
        } else {
            Err(Self::error_at(
                &t,
                format!("expected `{c}`, found {}", Self::describe(&t.tok)),
            ))
        }
    }

    fn expect_ident(&mut self, what: &str) -> Result<(String, Spanned), RuleError> {
        let t = self.next();
        match &t.tok {
            Tok::Ident(s) => Ok((s.clone(), t)),
            other => Err(Self::error_at(
                &t,
                format!("expected {what}, found {}", Self::describe(other)),
            )),
        }
    }

    fn is_keyword(&self, kw: &str) -> bool {
        matches!(&self.peek().tok, Tok::Ident(s) if s == kw)
    }

    fn rule_set(&mut self) -> Result<Vec<AdaptationRule>, RuleError> {
        let mut rules = Vec::new();
        let mut seen = BTreeSet::new();
        while self.peek().tok != Tok::Eof {
            let (kw, t) = self.expect_ident("`rule`")?;
            if kw != "rule" {
                return Err(Self::error_at(&t, format!("expected `rule`, found `{kw}`")));
            }
            let (id, _) = self.expect_ident("rule id")?;
            if !seen.insert(id.clone()) {
                return Err(RuleError::DuplicateRuleId(id));
            }
            let rule = self.rule_body(id, &t)?;
            validate_rule(&rule)?;
            rules.push(rule);
        }
        Ok(rules)
    }

    fn rule_body(&mut self, rule_id: String, start: &Spanned) -> Result<AdaptationRule, RuleError> {
        self.expect_punct('{')?;
        let mut condition = None;
        let mut transformation = None;
        let mut priority = None;
        let mut prompt: Option<Option<String>> = None;
        let mut refs = None;
        loop {
            if self.peek().tok == Tok::Punct('}') {
                self.next();
                break;
            }
            let (key, kt) = self.expect_ident("field name")?;
            self.expect_punct(':')?;
            let dup = || Self::error_at(&kt, format!("field `{key}` given twice"));
            match key.as_str() {
                "when" => {
                    if condition.is_some() {
                        return Err(dup());
                    }
                    condition = Some(self.or_expr()?);
                }
                "do" => {
                    if transformation.is_some() {
                        return Err(dup());
                    }
                    let (name, nt) = self.expect_ident("transformation")?;
                    if self.peek().tok == Tok::Punct('(') {
                        self.next();
                        self.expect_punct(')')?;
                    }
                    let kind = name.parse().map_err(|_| RuleError::UnknownTransformation {
                        name: format!("{name}()"),
                        line: nt.line,
                        column: nt.column,
                    })?;
                    transformation = Some(kind);
                }
                "priority" => {
                    if priority.is_some() {
                        return Err(dup());
                    }
                    let (v, vt) = self.expect_ident("priority")?;
                    let n: i64 = v.parse().map_err(|_| {
                        Self::error_at(&vt, format!("priority must be an integer, found `{v}`"))
                    })?;
                    let n = u32::try_from(n).map_err(|_| {
                        Self::error_at(&vt, format!("priority must be >= 0, found {n}"))
                    })?;
                    priority = Some(n);
                }
                "prompt" => {
                    if prompt.is_some() {
                        return Err(dup());
                    }
                    let (v, _) = self.expect_ident("template id or `none`")?;
                    prompt = Some(if v == "none" { None } else { Some(v) });
                }
                "refs" => {
                    if refs.is_some() {
                        return Err(dup());
                    }
                    refs = Some(self.ref_list()?);
                }
                _ => return Err(Self::error_at(&kt, format!("unknown field `{key}`"))),
            }
            self.expect_punct(';')?;
        }
        let missing = |f: &str| Self::error_at(start, format!("rule `{rule_id}` is missing `{f}`"));
        Ok(AdaptationRule {
            condition: condition.ok_or_else(|| missing("when"))?,
            transformation: transformation.ok_or_else(|| missing("do"))?,
            priority: priority.ok_or_else(|| missing("priority"))?,
            prompt_template_id: prompt.unwrap_or(None),
            normative_refs: refs.unwrap_or_default(),
            rule_id,
        })
    }

    fn ref_list(&mut self) -> Result<Vec<ClauseRef>, RuleError> {
        self.expect_punct('[')?;
        let mut out = Vec::new();
        if self.peek().tok == Tok::Punct(']') {
            self.next();
            return Ok(out);
        }
        loop {
            let (std, st) = self.expect_ident("standard")?;
            let standard: Standard = std.parse().map_err(|e: String| Self::error_at(&st, e))?;
            self.expect_punct(':')?;
            let ct = self.next();
            let clause = match ct.tok {
                Tok::Ident(s) | Tok::Str(s) if !s.trim().is_empty() => s,
                ref other => {
                    return Err(Self::error_at(
                        &ct,
                        format!("expected clause, found {}", Self::describe(other)),
                    ))
                }
            };
            out.push(ClauseRef::new(standard, clause));
            let t = self.next();
            match t.tok {
                Tok::Punct(',') => continue,
                Tok::Punct(']') => break,
                ref other => {
                    return Err(Self::error_at(
                        &t,
                        format!("expected `,` or `]`, found {}", Self::describe(other)),
                    ))
                }
            }
        }
        Ok(out)
    }

    fn or_expr(&mut self) -> Result<Condition, RuleError> {
        let mut items = vec![self.and_expr()?];
        while self.is_keyword("or") {
            self.next();
            items.push(self.and_expr()?);
        }
        Ok(if items.len() == 1 {
            items.pop().unwrap()
        } else {
            Condition::Or(items)
        })
    }

    fn and_expr(&mut self) -> Result<Condition, RuleError> {
        let mut items = vec![self.unary()?];
        while self.is_keyword("and") {
            self.next();
            items.push(self.unary()?);
        }
        Ok(if items.len() == 1 {
            items.pop().unwrap()
        } else {
            Condition::And(items)
        })
    }

    fn unary(&mut self) -> Result<Condition, RuleError> {
        if self.is_keyword("not") {
            self.next();
            return Ok(Condition::Not(Box::new(self.unary()?)));
        }
        if self.peek().tok == Tok::Punct('(') {
            self.next();
            let inner = self.or_expr()?;
            self.expect_punct(')')?;
            return Ok(inner);
        }
        let (name, nt) = self.expect_ident("predicate")?;
        self.expect_punct('(')?;
        let (arg, at) = self.expect_ident("predicate argument")?;
        self.expect_punct(')')?;
        let pred = match name.as_str() {
            "need" => Predicate::Need(arg.parse().map_err(|e: String| Self::error_at(&at, e))?),
            "flag" => Predicate::Flag(arg),
            "dar" => Predicate::Dar(arg),
            other => {
                return Err(Self::error_at(
                    &nt,
                    format!("unknown predicate `{other}` (expected need, flag or dar)"),
                ))
            }
        };
        Ok(Condition::Pred(pred))
    }
}

/// Parses and validates a rule document.
pub fn parse_rule_set(source: &str) -> Result<RuleSet, RuleError> {
    let mut p = Parser {
        toks: lex(source)?,
        pos: 0,
    };
    let rules = p.rule_set()?;
    check_conflicts(&rules)?;
    Ok(RuleSet { rules })
}

/// Parses a standalone condition expression.
pub fn parse_condition(source: &str) -> Result<Condition, RuleError> {
    let mut p = Parser {
        toks: lex(source)?,
        pos: 0,
    };
    let c = p.or_expr()?;
    let t = p.peek().clone();
    if t.tok != Tok::Eof {
        return Err(Parser::error_at(
            &t,
            format!("unexpected {}", Parser::describe(&t.tok)),
        ));
    }
    Ok(c)
}

// ---------------------------------------------------------------------------
// Activation
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct ActivatedRule {
    pub rule: AdaptationRule,
    /// Literals of the condition that held at activation.
    pub satisfied: Vec<String>,
    /// Active DARs that call for this rule's transformation.
    pub dar_ids: Vec<String>,
}

/// Rules whose conditions held, ordered by `(priority, ruleId)`.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ActiveRuleSet {
    entries: Vec<ActivatedRule>,
}

impl ActiveRuleSet {
    pub fn entries(&self) -> &[ActivatedRule] {
        &self.entries
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn has(&self, kind: TransformationKind) -> bool {
        self.entries.iter().any(|e| e.rule.transformation == kind)
    }

    pub fn rule_for(&self, kind: TransformationKind) -> Option<&ActivatedRule> {
        self.entries.iter().find(|e| e.rule.transformation == kind)
    }

    pub fn rule_ids(&self) -> Vec<String> {
        self.entries
            .iter()
            .map(|e| e.rule.rule_id.clone())
            .collect()
    }

    /// Template of the first active text rule.
    pub fn primary_template(&self) -> Option<&str> {
        self.entries
            .iter()
            .find_map(|e| e.rule.prompt_template_id.as_deref())
    }
}

pub fn activate_rules(
    rule_set: &RuleSet,
    dars: &[DerivedRequirement],
    profile: &UserProfile,
) -> ActiveRuleSet {
    let ctx = EvalContext::new(profile, dars);
    let mut entries: Vec<ActivatedRule> = rule_set
        .rules
        .iter()
        .filter(|r| r.condition.eval(&ctx))
        .map(|r| ActivatedRule {
            satisfied: r.condition.satisfied_literals(&ctx),
            dar_ids: dars
                .iter()
                .filter(|d| d.transformations.contains(&r.transformation))
                .map(|d| d.dar_id.clone())
                .collect(),
            rule: r.clone(),
        })
        .collect();
    entries.sort_by(|a, b| {
        (a.rule.priority, &a.rule.rule_id).cmp(&(b.rule.priority, &b.rule.rule_id))
    });
    ActiveRuleSet { entries }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct ExplanationEntry {
    pub rule_id: String,
    pub transformation: TransformationKind,
    pub satisfied_predicates: Vec<String>,
    pub dar_ids: Vec<String>,
    pub normative_refs: Vec<ClauseRef>,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Explanation {
    pub entries: Vec<ExplanationEntry>,
}

pub fn explain_activation(active: &ActiveRuleSet) -> Explanation {
    Explanation {
        entries: active
            .entries
            .iter()
            .map(|e| ExplanationEntry {
                rule_id: e.rule.rule_id.clone(),
                transformation: e.rule.transformation,
                satisfied_predicates: e.satisfied.clone(),
                dar_ids: e.dar_ids.clone(),
                normative_refs: e.rule.normative_refs.clone(),
            })
            .collect(),
    }
}
