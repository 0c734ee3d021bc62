//! Simulation of measure-valued Pólya urns of random-walk type and of
//! branching random walks on random recursive, Yule and binary trees, with
//! exact moment oracles for checking them.

pub mod analysis;
pub mod brw;
pub mod error;
pub mod measures;
pub mod offsets;
pub mod rng;
pub mod trees;
pub mod urns;

pub use brw::{assign_labels, assign_labels_binary, LabelledTree, NodeSet};
pub use error::{Error, Result};
pub use measures::{AtomicMeasure, ConvolvedMeasure, Measure, Point, RescaleParams};
pub use num_complex::Complex64;
pub use offsets::{CfDomain, OffsetDistribution, OffsetSpec, PairSpec, PairedOffset};
pub use rng::{run_replicates, SimRng, Stream, Streams};
pub use trees::{GrowingTree, NodeStatus, Side, StoppingRecord, TreeKind, Until};
pub use urns::{DrwUrn, SrwUrn};
