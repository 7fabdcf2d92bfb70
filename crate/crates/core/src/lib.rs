//! Growth of directed weighted graphs from compact developmental genomes.

pub mod env;
pub mod error;
pub mod evolution;
pub mod experiment;
pub mod fitness;
pub mod genome;
pub mod graph;
pub mod morphogenesis;
pub mod rnn;

pub use error::{Error, Result};
pub use genome::{Genome, GenomeBounds, Kernel, MorphogenSpec};
pub use graph::{GraphMetrics, GrownGraph, Position};
pub use morphogenesis::{grow, grow_traced, Development};
