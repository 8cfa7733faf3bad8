//! Synthetic population and contact-network generation from census-shaped
//! inputs, with network statistics and an SEIR agent-based model.
//!
//! Pipeline stages, in order: [`ingest`] → [`ipf`] → [`cosearch`] →
//! [`placement`] → [`netgen`] → [`netstats`] / [`epiabm`]. [`pipeline`]
//! wires them together and ships a fixture generator.
//!
//! The numeric kernels (cost function, acceptance rule, IPF, block-model
//! degree table) are generic over [`scalar::Scalar`]/[`scalar::Real`]; the
//! aliases below fix the scalar used by the pipeline.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod apportion;
pub mod attrs;
pub mod cosearch;
pub mod epiabm;
pub mod error;
pub mod ingest;
pub mod ipf;
pub mod netgen;
pub mod netstats;
pub mod pipeline;
pub mod placement;
pub mod rng;
pub mod scalar;
pub(crate) mod table;

pub use error::{Error, Result};

/// Working precision of the pipeline.
pub type Real = f64;

pub type TargetVector = ingest::Targets<Real>;
pub type TargetVector32 = ingest::Targets<f32>;
pub type IpfProblem = ipf::IpfProblem<Real>;
pub type IpfSolution = ipf::IpfSolution<Real>;
pub type AnnealState<'a> = cosearch::AnnealState<'a, Real>;
pub type BlockDegreeTable = netgen::BlockDegreeTable<Real>;
/// Exact block-model degree table over 64-bit rationals.
pub type ExactBlockDegreeTable = netgen::BlockDegreeTable<num_rational::Rational64>;
