//! Simulation and exact-computation toolkit for cover times of the planar
//! discrete torus: excursion and traversal counting, parameter schedules,
//! Galton-Watson comparisons, a linear-algebra oracle for harmonic measures
//! and Green functions, and reproducible Monte Carlo experiments.

pub mod lattice;
pub mod schedule;
pub mod gw;
pub mod par;
pub mod stats;
pub mod excursions;
pub mod oracle;
pub mod harness;
