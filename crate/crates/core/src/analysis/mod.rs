//! Image metrics, reference solvers and theorem checks.

pub mod metrics;
pub mod oracle;
pub mod theorems;
