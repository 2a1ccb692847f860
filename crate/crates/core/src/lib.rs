//! Random interlacements on weighted graphs: finite windows, potential
//! theory, Gaussian free fields, occupation-field samplers and the
//! statistical harness that compares them.

// `!(x >= 0.0)` style guards are deliberate: they also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod error;
pub mod gff;
pub mod graph;
pub mod interlace;
pub mod potential;
pub mod report;
pub mod rng;
pub mod samples;
pub mod stats;
pub mod tolerances;
pub mod verify;

pub use error::{Error, Result};
pub use gff::{sample_gff, GaussianSampleBatch, GffSampler};
pub use graph::{
    build_window, collapse, CollapsedChain, EdgeListGraph, GraphGenerator, Lattice, RegularTree,
    TransitionMatrix, Vertex, WeightedWindow,
};
pub use interlace::{
    interlacement_set, CollapseSampler, ExcursionSoup, HittingSoup, OccupationBatch,
    OccupationField, OccupationSampler, SamplerKind,
};
pub use potential::{
    equilibrium, feynman_kac, green_killed, green_limit, hitting_probability, laplace_exact_finite,
    laplace_exact_limit, EquilibriumMeasure, GreenMatrix,
};
pub use report::{Check, Outcome, TestReport};
pub use samples::SampleMatrix;
