//! Frozen wire formats. Regenerate with `ADAPT_UPDATE_GOLDEN=1 cargo test`.

mod common;

use std::path::PathBuf;

use adapt_forge::catalog::{derive_requirements, Catalog};
use adapt_forge::genai::MockBackend;
use adapt_forge::prompt::TemplateStore;
use adapt_forge::rules::{activate_rules, RuleSet};
use adapt_forge::service::JobStatus;
use adapt_forge::trace::ReportFormat;
use adapt_forge::ui::{PictogramMap, UiSchema, SCHEMA_VERSION};
use common::*;

fn golden(name: &str, actual: &str) {
    let path = PathBuf::from(env!("CARGO_MANIFEST_DIR"))
        .join("tests/golden")
        .join(name);
    if std::env::var_os("ADAPT_UPDATE_GOLDEN").is_some() {
        std::fs::write(&path, actual).unwrap();
        return;
    }
    let expected =
        std::fs::read_to_string(&path).unwrap_or_else(|e| panic!("{}: {e}", path.display()));
    assert_eq!(actual, expected, "{name} drifted from its golden file");
}

#[test]
fn case_schema() {
    let job = mock_service()
        .run_pipeline(case_profile(), case_input())
        .unwrap();
    assert_eq!(job.status, JobStatus::Accepted);
    let json = job.schema.unwrap().to_json() + "\n";
    golden("case_schema.json", &json);
    let parsed: UiSchema = serde_json::from_str(&json).unwrap();
    assert_eq!(parsed.schema_version, SCHEMA_VERSION);
    assert_eq!(parsed.to_json() + "\n", json);
}

#[test]
fn case_envelope() {
    let p = case_profile();
    let dars = derive_requirements(&p, &Catalog::bundled());
    let active = activate_rules(&RuleSet::bundled(), &dars, &p);
    let r = MockBackend::new(PictogramMap::bundled()).rewrite(CASE_TEXT, &active);
    golden("case_envelope.txt", &r.to_envelope());
}

#[test]
fn case_prompt() {
    let p = case_profile();
    let dars = derive_requirements(&p, &Catalog::bundled());
    let active = activate_rules(&RuleSet::bundled(), &dars, &p);
    let inst = TemplateStore::bundled()
        .instantiate("T-SIMPLIFY", None, &p, &case_input(), &active)
        .unwrap();
    assert!(inst
        .rendered_text
        .contains("Simplify this medical note using Plain-Language and add pictograms."));
    assert!(inst
        .rendered_text
        .contains("{auditoryExclusion: true, cognitiveSupport: true}"));
    assert!(inst.rendered_text.contains(CASE_TEXT));
    golden("case_prompt.txt", &inst.rendered_text);
}

#[test]
fn case_summary_report() {
    let svc = mock_service();
    svc.run_pipeline(case_profile(), case_input()).unwrap();
    let mut doc = svc.compliance_report(ReportFormat::Summary);
    doc.compliance.generated_at = chrono::DateTime::<chrono::Utc>::UNIX_EPOCH;
    golden("case_summary_report.json", &(doc.to_json() + "\n"));
}

#[test]
fn bundled_rules_source() {
    golden(
        "default_rules_canonical.rules",
        &RuleSet::bundled().to_source(),
    );
}
