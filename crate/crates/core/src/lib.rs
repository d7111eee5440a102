pub mod channel;
pub mod cli;
pub mod fl_engine;
pub mod orchestrator;
pub mod power_control;
pub mod quantizer;
mod rng;
