//! Collective spontaneous emission and dipole-dipole level shifts of N
//! three-level-excited (J = 0 -> J = 1) atoms sharing a single excitation.
//!
//! The decay couplings come from the transverse exchange dyadic; the
//! dispersive couplings are computed three ways (closed form, principal-value
//! quadrature over the whole frequency line, and quadrature of the
//! resonant plus counter-rotating half-line integrals) so they can be checked
//! against each other. A discretized-mode wavefunction simulator provides an
//! independent, non-Markovian check of the effective dynamics.

pub mod error;
pub mod ensemble;
pub mod quadrature;
pub mod geometry;
pub mod pv;
pub mod coupling;
pub mod dynamics;
pub mod microsim;
pub mod verify;

pub use error::{Error, Result};
pub use ensemble::{make_ensemble, AmplitudeVector, ChannelIndex, Ensemble, LengthUnit, Zeeman};
