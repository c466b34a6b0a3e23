//! Digital twin of a microlens-array optical shift register for neutral atoms.
//!
//! Two interleaved arrays of microlens-generated dipole traps hold single
//! atoms; steering the illumination angle of one array translates its focal
//! spots sideways, and cross-fading trap powers hands atoms over between the
//! arrays. Repeating tilt-and-handover cycles shifts the stored register by
//! one lattice period per cycle.
//!
//! The crate models that machine end to end:
//!
//! * [`potential`] — single-focus dipole trap physics (depths, frequencies,
//!   photon scattering, differential shifts).
//! * [`optics`] — the illumination/microlens geometry: per-lens power,
//!   tilt-to-displacement demagnification, tilt aberrations, and the
//!   time-dependent two-array potential seen by the atoms.
//! * [`control`] — steering-mirror dynamics, motion ramps, and compilation of
//!   shift cycles into sampled hardware waveforms.
//! * [`dynamics`] — classical Monte Carlo atom motion in the time-dependent
//!   potential, with background loss and handover capture statistics.
//! * [`coherence`] — qubit phase evolution, spin-echo/Ramsey sequences, and
//!   contrast/coherence-time estimation.
//! * [`config`] / [`experiments`] — declarative TOML scenarios and the
//!   batch runner that writes tables, images, and manifests.

pub mod coherence;
pub mod config;
pub mod constants;
pub mod control;
pub mod dynamics;
pub mod error;
pub mod experiments;
pub mod optics;
pub mod potential;
pub mod recipes;
pub mod rng;
pub mod species;
pub mod table;

pub use error::{Error, Result};
pub use species::{AtomSpecies, ThermalState};
