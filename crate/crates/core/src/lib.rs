//! Two dipole-coupled quantum emitters in a lossy cavity, treated as a
//! one-dimensional atom whose bandwidth is set by the emitter detuning.

pub mod cli;
pub mod config;
pub mod dynamics;
pub mod params;
pub mod protocols;
pub mod signal;
pub mod spectral;
