//! Bogoliubov theory with cubic corrections for the mean-field Bose gas
//! on the unit torus, verified against exact diagonalization on
//! momentum-conserving Fock sectors.
//!
//! The crate is organized along the pipeline:
//!
//! * [`model`] — the momentum lattice, interaction potentials in
//!   Fourier space, and the run configuration;
//! * [`bogoliubov`] — the closed-form quadratic theory (per-mode
//!   coefficients, dispersion, energy constant, depletion) and the
//!   cubic kernel;
//! * [`fock`] — occupation bases of canonical and excitation sectors,
//!   exact monomial matrix elements, and the excitation map;
//! * [`operators`] — recipes for every operator of the theory,
//!   unitaries from anti-Hermitian generators, conjugation, and the
//!   classical interaction-energy floor;
//! * [`expm`] — dense and Krylov matrix exponentials;
//! * [`solver`] — ground states, density matrices, moments and the
//!   transformed-state residuals;
//! * [`experiments`] — N-scans, the three-level energy ladder, cutoff
//!   convergence and power-law fits;
//! * [`cli`] — the `bosegas` binary.
//!
//! The `book/` directory of the repository walks through the same
//! material chapter by chapter; its code samples compile and run as
//! doctests of this crate.

pub mod bogoliubov;
pub mod cli;
pub mod error;
pub mod experiments;
pub mod expm;
pub mod fock;
pub mod model;
pub mod operators;
pub mod solver;

pub use error::{Error, Result};

// Every code block in the guide is a doctest, which keeps the book and
// the crate API in lock step.
#[cfg(doctest)]
mod book {
    #[doc = include_str!("../../../book/src/introduction.md")]
    mod introduction {}
    #[doc = include_str!("../../../book/src/lattice-and-potentials.md")]
    mod lattice_and_potentials {}
    #[doc = include_str!("../../../book/src/bogoliubov-theory.md")]
    mod bogoliubov_theory {}
    #[doc = include_str!("../../../book/src/fock-sectors.md")]
    mod fock_sectors {}
    #[doc = include_str!("../../../book/src/operators-and-rotations.md")]
    mod operators_and_rotations {}
    #[doc = include_str!("../../../book/src/ground-states.md")]
    mod ground_states {}
    #[doc = include_str!("../../../book/src/experiments.md")]
    mod experiments_chapter {}
    #[doc = include_str!("../../../book/src/command-line.md")]
    mod command_line {}
}
