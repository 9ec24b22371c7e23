//! Technology interdependence from patent corpora.
//!
//! Patent records are aggregated into sector-year cells ([`corpus`]), their
//! abstracts turned into TF-IDF vectors ([`textproc`]), and the vectors into
//! yearly similarity networks ([`simnet`]). Network position ([`centrality`])
//! and proximity-weighted output of other sectors ([`linkage`]) become the
//! regressors of a dynamic panel knowledge production function ([`econo`]),
//! and local projections trace responses to linkage shocks ([`events`]).

// `!(x > tol)` is deliberate: NaN must fail these checks.
#![allow(clippy::neg_cmp_op_on_partial_ord)]
#![allow(clippy::needless_range_loop)]

pub mod centrality;
pub mod corpus;
pub mod econo;
pub mod error;
pub mod events;
pub mod linalg;
pub mod linkage;
pub mod simnet;
pub mod stats;
pub mod synth;
pub mod textproc;

pub use error::{Error, Result};
