//! Helpers shared by the integration tests and the acceptance runner.
#![allow(dead_code)]

pub mod criteria;
pub mod fake_lean;
pub mod repos;
