//! Dual-layer cognitive-robotic agent stack.
//!
//! A strategic agent reasons over meaning frames and hands commands to a
//! tactical behavior-tree layer that drives a simulated robot. An LLM-backed
//! agent can replace the strategic layer for comparison.

pub mod agent;
pub mod coding;
pub mod command;
pub mod dialogue;
pub mod frames;
pub mod kb;
pub mod llm;
pub mod ontoagent;
pub mod report;
pub mod runner;
pub mod sim;
pub mod stats;
pub mod tactical;
pub mod transcript;
