//! Certified Morse decompositions and homological Conley indices for ODE
//! flows.
//!
//! The pipeline discretizes a flow on a rectangular domain into a cubical
//! grid, encloses a time-`tau` flow map with a validated Taylor integrator,
//! and reads dynamics off the resulting cell digraph:
//!
//! * [`interval`] — outward-rounded interval arithmetic, the soundness
//!   bedrock for everything else.
//! * [`vfield`] — vector fields as parsed expressions, with exact symbolic
//!   differentiation and built-in test systems.
//! * [`integrator`] — validated flow enclosures (endpoint and tube).
//! * [`grid`] — the cubical grid, cell ids and cell sets.
//! * [`enclosure`] — the combinatorial multivalued flow map on grid cells.
//! * [`morse`] — strongly connected components, Morse sets, Morse graph.
//! * [`verify`] — certification that the combinatorial decomposition is a
//!   Morse decomposition of the underlying flow.
//! * [`conley`] — index pairs and relative cubical homology.
//! * [`reference`] — a plain (non-validated) RK4 integrator used as an
//!   independent oracle by sampling tests.
//! * [`selftest`] — embedded cross-check fixtures shipped with the CLI.
//!
//! Everything downstream of [`interval`] treats enclosure soundness as a
//! contract: a returned set always contains the mathematical object it
//! stands for, and "don't know" is reported as an explicit failure value,
//! never as a silently truncated set.

pub mod conley;
pub mod enclosure;
pub mod grid;
pub mod integrator;
pub mod interval;
pub mod morse;
pub mod reference;
pub mod selftest;
pub mod verify;
pub mod vfield;

pub use grid::{CellId, CellSet, Grid};
pub use interval::{Interval, IvBox};
pub use vfield::VectorField;
