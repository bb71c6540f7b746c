//! Building-block benchmarks for the arranger: batch and tag sizes, and
//! throughput of hashing, compression, signing, aggregation, verification
//! and hash translation over a local socket.

pub mod config;
pub mod error;
pub mod measure;
pub mod report;
pub mod suite;
pub mod translate;
pub mod workload;

pub use config::BenchConfig;
pub use error::BenchError;
pub use measure::Stat;
pub use report::{BenchReport, Row};
pub use suite::{run_suite, Fixture, Suite};
pub use workload::{gen_workload, SizeDistribution};
