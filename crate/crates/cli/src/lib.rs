//! Scenario files, verification suites and reports on top of `fedosov-core`.

pub mod expr;
pub mod report;
pub mod scenario;
pub mod suites;
