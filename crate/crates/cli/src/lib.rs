//! Configuration, persistence and command surface for the simulation and
//! verification suite.

pub mod commands;
pub mod config;
pub mod csvio;
pub mod manifest;
