pub mod config;
pub mod counting;
pub mod divisor;
pub mod envelope;
pub mod expsum;
pub mod grid;
pub(crate) mod kernel;
pub mod rat;
pub mod report;
