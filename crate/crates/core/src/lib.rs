//! Linear-quadratic mean-field models of distributed storage in a power grid:
//! decentralized equilibrium (MFG) and central planning (MFC), with Monte Carlo
//! simulation, cost accounting and independent verification routines.

pub mod accounting;
pub mod cli;
pub mod config;
pub mod engine;
pub mod market;
pub mod output;
pub mod processes;
pub mod scenarios;
pub mod oracle;
pub mod solver;
