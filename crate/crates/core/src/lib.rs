//! Stationary multipulse solutions of the Lugiato-Lefever equation in its
//! perturbed-NLS form, together with spectral and dynamical stability checks.
//!
//! The crate is organised bottom-up: [`grid`] provides the Fourier
//! collocation machinery, [`model`] the parameters and soliton guesses,
//! [`stationary`] the Newton solver, [`dynamics`] the spatial ODE view,
//! [`spectra`] the Bloch eigenanalysis and [`evolve`] the time integrator.

pub mod dynamics;
pub mod error;
pub mod evolve;
pub mod grid;
pub mod io;
pub mod linalg;
pub mod model;
pub mod spectra;
pub mod stationary;
pub mod verify;

pub use error::{Error, Result};
pub use grid::{Comb, Field2, Grid};
pub use model::{BifurcationAngles, Params, SolitonTemplate};
pub use stationary::{NewtonOpts, Solution};
