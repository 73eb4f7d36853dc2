//! Worked models: the two-phase example, the hydro lifetime, insurer ruin,
//! and random families for testing.

pub mod hydro;
pub mod random;
pub mod ruin;
pub mod simple;
