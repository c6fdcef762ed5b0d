//! Crowdsourcing service: assignment pool, response intake and export.

pub mod campaign;
pub mod http;

pub use campaign::{Acknowledgement, Assignment, AssignmentState, Campaign, CampaignConfig, NextQuestion, Submission};
