//! Adaptive accessible-content engine.
//!
//! A user profile derives accessibility requirements from a normative
//! catalog, a rule set turns those into transformations, a backend rewrites
//! the text, quality gates check the result and a renderer-agnostic UI schema
//! is produced. Every decision is written to an append-only trace ledger.

pub mod catalog;
pub mod gates;
pub mod genai;
pub mod prompt;
pub mod rules;
pub mod service;
pub mod text;
pub mod trace;
pub mod ui;
