//! Desk-scale laboratory for joint communication and sensing in THz
//! vehicular networks.
//!
//! The pipeline runs from channel physics ([`channel`], [`jcs`]) through a
//! heterogeneous graph view of each topology ([`hetgraph`]) and a two-hop
//! heterogeneous GNN ([`gnn`]) to exact assignment solvers ([`assign`]).
//! [`experiment`] wires everything into the `thz-jcs` command line tool.

pub mod assign;
pub mod channel;
pub mod config;
pub mod error;
pub mod experiment;
pub mod gnn;
pub mod hetgraph;
pub mod jcs;
pub mod scenario;

pub use error::{Error, Result, Violation};
