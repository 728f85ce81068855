//! Numerical toolkit for the finite Becker–Döring system with linear
//! atomization of the largest clusters.
//!
//! The crate covers the nonlinear dynamics ([`model`], [`sim`]), the
//! equilibrium family ([`equilibria`]), the linearization at the constant
//! equilibrium ([`linalg`]), the characteristic functions that reduce its
//! spectrum to scalar root finding ([`charfn`], [`roots`]) and the location of
//! Hopf points where eigenvalue pairs cross the imaginary axis ([`hopf`]).

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod charfn;
pub mod dd;
pub mod equilibria;
pub mod error;
pub mod hopf;
pub mod linalg;
pub mod model;
pub mod poly;
pub mod roots;
pub mod sim;

pub use charfn::{CharFn, CharfnValue, PhiLambdaPair, Which};
pub use equilibria::EquilibriumProfile;
pub use error::{Error, Result};
pub use hopf::{HopfPoint, HopfSeed, LambdaBranch, Table1Row};
pub use linalg::{Eigenvalue, LinearizationMatrix, SpectrumResult};
pub use model::{FluxVector, ModelParams, StateVector};
pub use num_complex::Complex64;
pub use roots::{QRootCurve, RootRecord};
pub use sim::{IntegrateOptions, OscillationMetrics, StepStats, Trajectory};
