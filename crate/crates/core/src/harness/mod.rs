//! Instance generators, benchmarks and the command-line front end.

pub mod bench;
pub mod cli;
pub mod storage;
pub mod toy;
