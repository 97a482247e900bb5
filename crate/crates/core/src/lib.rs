//! Mine open `sorry` obligations from Lean repositories, verify proposed
//! fills through the Lean REPL, and benchmark prover strategies on them.

pub mod cli;
pub mod db;
pub mod git;
pub mod harness;
pub mod indexer;
pub mod lean;
pub mod model;
pub mod provers;
pub mod registry;
pub mod verifier;
