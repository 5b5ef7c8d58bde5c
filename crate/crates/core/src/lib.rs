//! Agent harness for Verilog design and debug tasks.
//!
//! The crate is organised along the run pipeline: [`corpus`] loads tasks and
//! builds workspaces, [`llm`] talks to chat backends, [`toolbox`] executes
//! tools, [`agent`] runs the loop and records traces, [`evaluation`] judges
//! finished runs and [`analytics`] aggregates them. [`harness`] wires these
//! together for sweeps driven by a config file.

pub mod agent;
pub mod analytics;
pub mod corpus;
pub mod evaluation;
pub mod harness;
pub mod llm;
mod pool;
pub mod sandbox;
pub mod toolbox;
