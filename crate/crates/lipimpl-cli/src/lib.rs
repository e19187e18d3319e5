//! Library surface of the batch front-end, shared by the binary and its
//! integration tests.

pub mod output;
pub mod run;
pub mod spec;
