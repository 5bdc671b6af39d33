//! Fault localization for small concurrent C-like programs.

pub mod bench;
pub mod instrumenter;
pub mod localizer;
pub mod minic;
pub mod sequentializer;
pub mod verifier;
