#![allow(dead_code)]

use std::sync::Arc;

use adapt_forge::catalog::{UserNeed, UserProfile};
use adapt_forge::genai::{Fault, FaultInjectingBackend, MockBackend};
use adapt_forge::prompt::DomainInput;
use adapt_forge::service::AdaptService;
use adapt_forge::ui::PictogramMap;

pub const CASE_TEXT: &str =
    "You should take Ibuprofen 400mg every 8 hours unless you experience gastric discomfort.";

pub fn case_profile() -> UserProfile {
    UserProfile::new(
        "ibuprofen-note",
        [
            UserNeed::CognitiveDisability,
            UserNeed::HearingImpairment,
            UserNeed::MotorCognitiveLoad,
            UserNeed::GeneralClarity,
        ],
    )
}

pub fn case_input() -> DomainInput {
    DomainInput::new("ibuprofen-note", CASE_TEXT).with_protected(["Ibuprofen"])
}

pub fn mock() -> Arc<MockBackend> {
    Arc::new(MockBackend::new(PictogramMap::bundled()))
}

pub fn mock_service() -> AdaptService {
    AdaptService::in_memory(mock())
}

pub fn scripted(script: Vec<Option<Fault>>) -> Arc<FaultInjectingBackend> {
    Arc::new(FaultInjectingBackend::scripted(
        Box::new(MockBackend::new(PictogramMap::bundled())),
        PictogramMap::bundled(),
        script,
    ))
}

pub fn always(fault: Fault) -> Arc<FaultInjectingBackend> {
    Arc::new(FaultInjectingBackend::always(
        Box::new(MockBackend::new(PictogramMap::bundled())),
        PictogramMap::bundled(),
        fault,
    ))
}
