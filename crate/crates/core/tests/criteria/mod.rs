//! Property checks shared by the integration tests and the acceptance
//! runner. Each returns a summary on success and a description of the first
//! violation otherwise.

#![allow(dead_code)]

pub mod bookkeeping;
pub mod gradients;
pub mod her;
pub mod schedules;
