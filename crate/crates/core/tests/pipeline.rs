mod common;

use std::collections::BTreeSet;

use adapt_forge::catalog::UserProfile;
use adapt_forge::gates::GateKind;
use adapt_forge::genai::Fault;
use adapt_forge::prompt::DomainInput;
use adapt_forge::service::{
    AdaptService, Components, FeedbackEntry, JobStatus, NavigationEvent, ReviewAction,
    ServiceConfig, ServiceError,
};
use adapt_forge::trace::{leaf_coverage, RecordKind, ReqStatus, ReviewKind};
use adapt_forge::ui::{ComponentKind, InteractionState, OutputModality, Theme};
use chrono::Utc;
use common::*;

#[test]
fn ibuprofen_note_end_to_end() {
    let svc = mock_service();
    let job = svc.run_pipeline(case_profile(), case_input()).unwrap();
    assert_eq!(job.status, JobStatus::Accepted);
    let schema = job.schema.as_ref().unwrap();
    assert_eq!(schema.count(ComponentKind::StepBlock), 3);
    assert_eq!(schema.theme, Theme::HighContrast);
    assert!(!schema.modalities.contains(&OutputModality::Audio));
    assert_eq!(schema.count(ComponentKind::AlertBanner), 1);
    assert_eq!(schema.count(ComponentKind::FeedbackScale), 1);
    let pictos: BTreeSet<String> = schema
        .nodes()
        .into_iter()
        .filter(|n| n.kind == ComponentKind::PictogramLabel)
        .filter_map(|n| match &n.content {
            Some(adapt_forge::ui::NodeContent::Pictogram { keyword, .. }) => Some(keyword.clone()),
            _ => None,
        })
        .collect();
    assert_eq!(
        pictos,
        BTreeSet::from(["pill", "clock", "stomach-pain", "doctor"].map(String::from))
    );
    for b in schema
        .nodes()
        .into_iter()
        .filter(|n| n.kind == ComponentKind::Button)
    {
        let t = b.target_size.unwrap();
        assert!(t.width >= 44 && t.height >= 44);
    }

    let trace = svc.job_trace(&job.job_id).unwrap();
    assert_eq!(trace.len(), 1);
    let steps: Vec<&str> = trace[0].pipeline.iter().map(|s| s.step.as_str()).collect();
    assert_eq!(
        steps,
        [
            "deriveRequirements",
            "activateRules",
            "instantiatePrompt",
            "transformAndGate",
            "buildSchema",
            "appendRecord"
        ]
    );
    assert_eq!(trace[0].content_hash, schema.content_hash);
    assert_eq!(
        trace[0].gate_reports.last().unwrap().content_hash,
        schema.content_hash
    );
}

#[test]
fn empty_profile_gives_passthrough() {
    let svc = mock_service();
    let job = svc
        .run_pipeline(
            UserProfile::new("plain", []),
            DomainInput::new("in", "Take one pill."),
        )
        .unwrap();
    assert_eq!(job.status, JobStatus::Accepted);
    let schema = job.schema.unwrap();
    assert_eq!(schema.theme, Theme::Default);
    assert_eq!(schema.modalities, BTreeSet::from([OutputModality::Text]));
    assert_eq!(schema.count(ComponentKind::StepBlock), 0);
    let trace = svc.job_trace(&job.job_id).unwrap();
    assert_eq!(trace.len(), 1);
    assert!(trace[0].rule_ids.is_empty());
}

#[test]
fn invalid_inputs_rejected() {
    let svc = mock_service();
    let err = svc
        .run_pipeline(
            UserProfile::new("has space", []),
            DomainInput::new("in", "x"),
        )
        .unwrap_err();
    assert!(matches!(err, ServiceError::Validation(_)));
    let err = svc
        .run_pipeline(
            case_profile(),
            DomainInput::new("in", "Rest.").with_protected(["Aspirin"]),
        )
        .unwrap_err();
    assert!(matches!(err, ServiceError::Validation(_)));
    assert!(svc.ledger().is_empty());
}

#[test]
fn scripted_failures_then_acceptance() {
    let backend = scripted(vec![
        Some(Fault::DropNumber("400".into())),
        Some(Fault::DropNumber("400".into())),
    ]);
    let svc = AdaptService::in_memory(backend.clone());
    let job = svc.run_pipeline(case_profile(), case_input()).unwrap();
    assert_eq!(job.status, JobStatus::Accepted);
    assert_eq!(backend.invocations(), 3);
    let trace = svc.job_trace(&job.job_id).unwrap();
    assert_eq!(trace[0].attempts, 3);
    assert_eq!(trace[0].gate_reports.len(), 3);
    let fid = trace[0].gate_reports[0]
        .gate(GateKind::SemanticFidelity)
        .unwrap();
    assert_eq!(fid.details, ["missing: 400"]);
}

#[test]
fn exhaustion_escalates_to_review_queue() {
    let backend = always(Fault::InjectNumber("600".into()));
    let svc = AdaptService::in_memory(backend.clone());
    let job = svc.run_pipeline(case_profile(), case_input()).unwrap();
    assert_eq!(job.status, JobStatus::Escalated);
    assert!(job.schema.is_none());
    assert_eq!(backend.invocations(), 3);
    assert_eq!(svc.review_queue().len(), 1);
    let rec = &svc.job_trace(&job.job_id).unwrap()[0];
    assert!(rec.escalated);
    assert!(rec.output_components.is_empty());
}

#[test]
fn malformed_responses_feed_the_loop() {
    let backend = scripted(vec![Some(Fault::Malformed)]);
    let svc = AdaptService::in_memory(backend.clone());
    let job = svc.run_pipeline(case_profile(), case_input()).unwrap();
    assert_eq!(job.status, JobStatus::Accepted);
    let rec = &svc.job_trace(&job.job_id).unwrap()[0];
    assert_eq!(rec.attempts, 2);
    assert!(!rec.gate_reports[0].overall_passed);
}

#[test]
fn backend_outage_is_job_failure() {
    let svc = AdaptService::in_memory(always(Fault::Unavailable));
    let id = svc.create_job(case_profile(), case_input()).unwrap();
    assert!(matches!(
        svc.execute_job(&id),
        Err(ServiceError::JobFailed(_))
    ));
    assert_eq!(svc.get_job(&id).unwrap().status, JobStatus::Failed);
    assert!(svc.review_queue().is_empty());
    // Executing twice is refused.
    assert!(matches!(
        svc.execute_job(&id),
        Err(ServiceError::IllegalTransition(_))
    ));
}

#[test]
fn no_escalation_policy_fails_job() {
    let mut config = ServiceConfig::default();
    config.regeneration.escalate_on_exhaustion = false;
    let svc = AdaptService::new(&config, Components::bundled(), always(Fault::Verbose)).unwrap();
    let id = svc.create_job(case_profile(), case_input()).unwrap();
    assert!(matches!(
        svc.execute_job(&id),
        Err(ServiceError::JobFailed(_))
    ));
    assert!(svc.review_queue().is_empty());
}

fn review(job_id: &str, action: ReviewKind, edited: Option<&str>) -> ReviewAction {
    ReviewAction {
        job_id: job_id.into(),
        reviewer: "reviewer-7".into(),
        action,
        edited_text: edited.map(String::from),
        rationale: "checked against the leaflet".into(),
    }
}

#[test]
fn review_actions() {
    let svc = AdaptService::in_memory(always(Fault::InjectNumber("600".into())));
    let job = svc.run_pipeline(case_profile(), case_input()).unwrap();

    let bad = svc
        .apply_review(review(
            &job.job_id,
            ReviewKind::Edit,
            Some("Take Ibuprofen 600mg every 8 hours."),
        ))
        .unwrap();
    assert_eq!(bad.status, JobStatus::Escalated);
    let report = bad.latest_gate_report.as_ref().unwrap();
    assert!(!report.gate(GateKind::FactualConsistency).unwrap().passed);

    let good = svc
        .apply_review(review(
            &job.job_id,
            ReviewKind::Edit,
            Some("1. Take Ibuprofen 400mg.\n2. Take it every 8 hours.\n3. Stop if you have stomach pain. Ask your doctor."),
        ))
        .unwrap();
    assert_eq!(good.status, JobStatus::Accepted);
    assert_eq!(
        good.schema
            .as_ref()
            .unwrap()
            .count(ComponentKind::StepBlock),
        3
    );

    let approved = svc
        .apply_review(review(&job.job_id, ReviewKind::Approve, None))
        .unwrap();
    assert_eq!(approved.status, JobStatus::Approved);
    assert!(approved.schema.is_some());
    let trace = svc.job_trace(&job.job_id).unwrap();
    assert_eq!(trace.len(), 4);
    assert!(trace[1..]
        .iter()
        .all(|r| r.kind == RecordKind::Review && r.review_action.is_some()));

    // Leaves of the served schema are traced exactly once within the job.
    let cov = leaf_coverage(approved.schema.as_ref().unwrap(), &trace);
    assert!(cov.values().all(|&n| n == 1), "{cov:?}");

    assert!(matches!(
        svc.apply_review(review(&job.job_id, ReviewKind::Reject, None)),
        Err(ServiceError::IllegalTransition(_))
    ));
    assert!(matches!(
        svc.apply_review(review("nope", ReviewKind::Approve, None)),
        Err(ServiceError::UnknownJob(_))
    ));
    assert!(matches!(
        svc.apply_review(review(&job.job_id, ReviewKind::Edit, None)),
        Err(ServiceError::Validation(_))
    ));
}

#[test]
fn approve_escalated_is_recorded_override() {
    let svc = AdaptService::in_memory(always(Fault::Verbose));
    let job = svc.run_pipeline(case_profile(), case_input()).unwrap();
    let approved = svc
        .apply_review(review(&job.job_id, ReviewKind::Approve, None))
        .unwrap();
    assert_eq!(approved.status, JobStatus::Approved);
    let rec = svc.job_trace(&job.job_id).unwrap().pop().unwrap();
    assert_eq!(rec.review_action.unwrap().action, ReviewKind::Approve);
    assert!(rec.escalated);
    assert!(!rec.output_components.is_empty());
    assert!(svc.review_queue().is_empty());
}

#[test]
fn reject_withholds_schema() {
    let svc = AdaptService::in_memory(always(Fault::Verbose));
    let job = svc.run_pipeline(case_profile(), case_input()).unwrap();
    let rejected = svc
        .apply_review(review(&job.job_id, ReviewKind::Reject, None))
        .unwrap();
    assert_eq!(rejected.status, JobStatus::Rejected);
    assert!(rejected.schema.is_none());
}

fn feedback(job_id: &str, component_id: &str, rating: u8) -> FeedbackEntry {
    FeedbackEntry {
        feedback_id: String::new(),
        job_id: job_id.into(),
        component_id: component_id.into(),
        comprehension_rating: rating,
        navigation_events: vec![NavigationEvent {
            from: InteractionState::Reading,
            to: InteractionState::NavigatingSteps,
            timestamp: Utc::now(),
        }],
        comment: "Clear, thanks.".into(),
    }
}

#[test]
fn feedback_links_and_validation() {
    let svc = mock_service();
    let job = svc.run_pipeline(case_profile(), case_input()).unwrap();
    let schema = job.schema.clone().unwrap();
    let step = schema
        .nodes()
        .into_iter()
        .find(|n| n.kind == ComponentKind::StepBlock)
        .unwrap()
        .component_id
        .clone();

    let before = svc.compliance_report(adapt_forge::trace::ReportFormat::Summary);
    assert_eq!(
        before.compliance.status("REQ-FB-01"),
        Some(ReqStatus::Unsatisfied)
    );

    assert!(matches!(
        svc.record_feedback(feedback(&job.job_id, &step, 7)),
        Err(ServiceError::Validation(_))
    ));
    assert!(matches!(
        svc.record_feedback(feedback(&job.job_id, "step-000000000000", 4)),
        Err(ServiceError::UnknownComponent(_))
    ));
    assert!(matches!(
        svc.record_feedback(feedback("nope", &step, 4)),
        Err(ServiceError::UnknownJob(_))
    ));
    let mut illegal = feedback(&job.job_id, &step, 4);
    illegal.navigation_events[0].to = InteractionState::CompletingTask;
    assert!(matches!(
        svc.record_feedback(illegal),
        Err(ServiceError::IllegalTransition(_))
    ));

    let id = svc
        .record_feedback(feedback(&job.job_id, &step, 4))
        .unwrap();
    assert!(!id.is_empty());
    let after = svc.compliance_report(adapt_forge::trace::ReportFormat::Summary);
    assert_eq!(
        after.compliance.status("REQ-FB-01"),
        Some(ReqStatus::Satisfied)
    );
    // The comment is kept in the feedback store, never in the ledger.
    assert!(!svc.ledger().serialized().contains("Clear, thanks."));
    assert_eq!(svc.feedback_entries().len(), 1);
}

#[test]
fn state_survives_restart() {
    let dir = tempfile::tempdir().unwrap();
    let config = ServiceConfig {
        data_dir: Some(dir.path().to_path_buf()),
        ..ServiceConfig::default()
    };
    let job_id;
    {
        let svc = AdaptService::new(&config, Components::bundled(), mock()).unwrap();
        let job = svc.run_pipeline(case_profile(), case_input()).unwrap();
        let leaf = job.schema.as_ref().unwrap().leaves()[0]
            .component_id
            .clone();
        svc.record_feedback(feedback(&job.job_id, &leaf, 5))
            .unwrap();
        // A pending job left behind by a crash.
        svc.create_job(case_profile(), case_input()).unwrap();
        job_id = job.job_id;
    }
    let svc = AdaptService::new(&config, Components::bundled(), mock()).unwrap();
    let job = svc.get_job(&job_id).unwrap();
    assert_eq!(job.status, JobStatus::Accepted);
    assert_eq!(svc.ledger().len(), 2);
    assert_eq!(svc.feedback_entries().len(), 1);
    assert_eq!(
        svc.jobs()
            .iter()
            .filter(|j| j.status == JobStatus::Failed)
            .count(),
        1
    );
    let report = svc.compliance_report(adapt_forge::trace::ReportFormat::Summary);
    assert_eq!(
        report.compliance.status("REQ-FB-01"),
        Some(ReqStatus::Satisfied)
    );
}

#[test]
fn concurrent_jobs_are_isolated() {
    let svc = std::sync::Arc::new(mock_service());
    let handles: Vec<_> = (0..8)
        .map(|_| {
            let svc = svc.clone();
            std::thread::spawn(move || svc.run_pipeline(case_profile(), case_input()).unwrap())
        })
        .collect();
    let jobs: Vec<_> = handles.into_iter().map(|h| h.join().unwrap()).collect();
    let first = jobs[0].schema.as_ref().unwrap().to_json();
    for j in &jobs {
        assert_eq!(j.status, JobStatus::Accepted);
        assert_eq!(j.schema.as_ref().unwrap().to_json(), first);
    }
    assert_eq!(svc.ledger().len(), 8);
    let ids: Vec<u64> = svc.ledger().records().iter().map(|r| r.record_id).collect();
    assert!(ids.windows(2).all(|w| w[0] < w[1]));
}
