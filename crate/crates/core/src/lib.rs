//! Conformally covariant operators, trace energies and Möbius balancing on
//! the Euclidean unit ball B^{n+1}, n ∈ {3, 4, 5}.

pub mod cli;
pub mod error;
pub mod fields;
pub mod functionals;
pub mod jet;
pub mod mobius;
pub mod operators;
pub mod optimize;
pub mod poly;
pub mod quadrature;
pub mod verify;

pub use error::{Error, Result};
pub use fields::{FieldSpec, ScalarField};
pub use functionals::Rules;
pub use jet::{BoundaryJet, Jet2, Jet3, SymmetricTensor};
pub use mobius::MobiusMap;
pub use quadrature::QuadratureRule;
