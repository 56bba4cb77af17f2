//! Functional and cost-model simulator of a ReRAM-crossbar graph accelerator.
//!
//! Pipeline: an [`graph::EdgeListGraph`] is ordered into subgraph tiles by
//! [`preprocess`], tiles are executed on bit-exact crossbar clusters
//! ([`crossbar`]) under the column-major streaming-apply schedule
//! ([`engine`]), and the resulting event counters are priced by
//! [`costmodel`]. [`algorithms`] holds the vertex programs and their
//! drivers; [`oracle`] holds independent reference implementations.

pub mod algorithms;
pub mod config;
pub mod costmodel;
pub mod crossbar;
pub mod engine;
pub mod fixed;
pub mod format;
pub mod graph;
pub mod oracle;
pub mod preprocess;
pub mod program;
pub mod report;
pub mod synth;
