//! Hard balls on the flat torus: an exact event-driven simulator together with
//! the analyses used to probe hyperbolicity of the flow.
//!
//! * [`model`]: parameters, phase states, sampling, torus geometry.
//! * [`dynamics`]: collision prediction, collision law, orbit segments, and a
//!   high-precision reference engine.
//! * [`combinatorics`]: collision graphs, richness, Property (A).
//! * [`neutral`]: neutral spaces by three independent methods, sufficiency.
//! * [`lyapunov`]: tangent dynamics and Lyapunov spectra.
//! * [`config`], [`experiment`], [`io`]: run configuration, single-seed
//!   experiments and the file formats of the command-line tool.
//! * [`selftest`]: bundled invariant suites.

pub mod combinatorics;
pub mod config;
pub mod dynamics;
pub mod error;
pub mod experiment;
pub mod io;
pub mod linalg;
pub mod lyapunov;
pub mod model;
pub mod neutral;
pub mod selftest;

pub use error::{Error, ErrorClass, Result};
